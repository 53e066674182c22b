//! Model-free price bounds for multi-asset options.
//!
//! Payoffs are continuous piecewise-affine (CPWA) functions. Bounds come from
//! the semi-infinite superhedging LP, solved by cutting planes whose
//! separation step is a mixed-integer program.

pub mod accp;
pub mod arbitrage;
pub mod bounds;
pub mod cpwa;
pub mod ecp;
pub mod encoding;
pub mod error;
pub mod instance;
pub mod lp;
pub mod market;
pub mod milp;
pub mod payoff;
pub mod radial;
pub mod slack;

pub use accp::{accp, AccpOptions};
pub use arbitrage::{detect, repair_chain, Detection, OptionChain, RepairResult};
pub use bounds::{
    extract_measure, hedge_shortfall, lower_phi, price_band, Algorithm, BoundsResult, BoundsStatus, Measure, PriceBand,
};
pub use cpwa::CpwaFunction;
pub use ecp::{ecp, EcpOptions};
pub use error::{Error, Result};
pub use instance::{Domain, MarketInstance};
pub use market::{build_market, sample_joint, MarketModel, MarketModelFamily, PricingMode};
pub use payoff::PayoffSpec;
