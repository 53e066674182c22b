//! Named payoff families, their CPWA encodings and a compact text syntax.
//!
//! Text syntax (asset numbers start at 1, `K` stands for a swept strike):
//!
//! ```text
//! asset(2)            call(1,3.5)          put(4,K)
//! basket(0.5,0.5;2)   spread(1;2;-1)       call-on-max(2,3,4;K)
//! call-on-min(1,2;1)  put-on-min(1,2,3;4)  best-of-calls(1:2,3:2.5)
//! ```

use serde::{Deserialize, Serialize};

use crate::cpwa::{self, CpwaFunction};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PayoffSpec {
    Asset {
        asset: usize,
    },
    Call {
        asset: usize,
        strike: f64,
    },
    Put {
        asset: usize,
        strike: f64,
    },
    Basket {
        weights: Vec<f64>,
        strike: f64,
    },
    Spread {
        long: Vec<usize>,
        short: Vec<usize>,
        strike: f64,
    },
    CallOnMax {
        assets: Vec<usize>,
        strike: f64,
    },
    CallOnMin {
        assets: Vec<usize>,
        strike: f64,
    },
    PutOnMin {
        assets: Vec<usize>,
        strike: f64,
    },
    BestOfCalls {
        legs: Vec<(usize, f64)>,
    },
}

impl PayoffSpec {
    pub fn to_cpwa(&self, d: usize) -> Result<CpwaFunction> {
        match self {
            PayoffSpec::Asset { asset } => cpwa::asset(d, *asset),
            PayoffSpec::Call { asset, strike } => cpwa::vanilla_call(d, *asset, *strike),
            PayoffSpec::Put { asset, strike } => cpwa::vanilla_put(d, *asset, *strike),
            PayoffSpec::Basket { weights, strike } => {
                if weights.len() != d {
                    return invalid(format!("basket has {} weights, dimension is {d}", weights.len()));
                }
                cpwa::basket_call(weights, *strike)
            }
            PayoffSpec::Spread { long, short, strike } => cpwa::spread_call(d, long, short, *strike),
            PayoffSpec::CallOnMax { assets, strike } => cpwa::call_on_max(d, assets, *strike),
            PayoffSpec::CallOnMin { assets, strike } => cpwa::call_on_min(d, assets, *strike),
            PayoffSpec::PutOnMin { assets, strike } => cpwa::put_on_min(d, assets, *strike),
            PayoffSpec::BestOfCalls { legs } => cpwa::best_of_calls(d, legs),
        }
    }

    /// The same payoff with its strike replaced. Best-of-calls shifts every
    /// leg to the new strike.
    pub fn with_strike(&self, k: f64) -> PayoffSpec {
        let mut s = self.clone();
        match &mut s {
            PayoffSpec::Asset { .. } => {}
            PayoffSpec::Call { strike, .. }
            | PayoffSpec::Put { strike, .. }
            | PayoffSpec::Basket { strike, .. }
            | PayoffSpec::Spread { strike, .. }
            | PayoffSpec::CallOnMax { strike, .. }
            | PayoffSpec::CallOnMin { strike, .. }
            | PayoffSpec::PutOnMin { strike, .. } => *strike = k,
            PayoffSpec::BestOfCalls { legs } => {
                for l in legs.iter_mut() {
                    l.1 = k;
                }
            }
        }
        s
    }

    pub fn strike(&self) -> Option<f64> {
        match self {
            PayoffSpec::Asset { .. } | PayoffSpec::BestOfCalls { .. } => None,
            PayoffSpec::Call { strike, .. }
            | PayoffSpec::Put { strike, .. }
            | PayoffSpec::Basket { strike, .. }
            | PayoffSpec::Spread { strike, .. }
            | PayoffSpec::CallOnMax { strike, .. }
            | PayoffSpec::CallOnMin { strike, .. }
            | PayoffSpec::PutOnMin { strike, .. } => Some(*strike),
        }
    }

    /// Parses the text syntax. A `K` strike takes the value of `sweep`.
    pub fn parse(text: &str, sweep: Option<f64>) -> Result<PayoffSpec> {
        let text = text.trim();
        let (name, rest) = text
            .split_once('(')
            .ok_or_else(|| crate::Error::InvalidArgument(format!("expected name(args): {text}")))?;
        let args = rest
            .strip_suffix(')')
            .ok_or_else(|| crate::Error::InvalidArgument(format!("missing ')': {text}")))?;
        let groups: Vec<&str> = args.split(';').map(str::trim).collect();
        let num = |s: &str| -> Result<f64> {
            let s = s.trim();
            if s == "K" || s == "k" {
                return sweep
                    .ok_or_else(|| crate::Error::InvalidArgument("strike placeholder K needs a sweep value".into()));
            }
            s.parse::<f64>()
                .map_err(|_| crate::Error::InvalidArgument(format!("not a number: {s}")))
        };
        let idx = |s: &str| -> Result<usize> {
            let i = s
                .trim()
                .parse::<usize>()
                .map_err(|_| crate::Error::InvalidArgument(format!("not an asset number: {s}")))?;
            if i == 0 {
                return invalid("asset numbers start at 1");
            }
            Ok(i - 1)
        };
        let list = |s: &str| -> Result<Vec<usize>> {
            if s.trim().is_empty() {
                return Ok(Vec::new());
            }
            s.split(',').map(idx).collect()
        };
        let spec = match (name.trim(), groups.as_slice()) {
            ("asset", [a]) => PayoffSpec::Asset { asset: idx(a)? },
            ("call", [a]) | ("put", [a]) => {
                let parts: Vec<&str> = a.split(',').collect();
                if parts.len() != 2 {
                    return invalid(format!("{name} takes (asset,strike)"));
                }
                let (asset, strike) = (idx(parts[0])?, num(parts[1])?);
                if name.trim() == "call" {
                    PayoffSpec::Call { asset, strike }
                } else {
                    PayoffSpec::Put { asset, strike }
                }
            }
            ("basket", [w, k]) => PayoffSpec::Basket {
                weights: w.split(',').map(num).collect::<Result<_>>()?,
                strike: num(k)?,
            },
            ("spread", [l, s, k]) => PayoffSpec::Spread {
                long: list(l)?,
                short: list(s)?,
                strike: num(k)?,
            },
            ("call-on-max", [a, k]) => PayoffSpec::CallOnMax {
                assets: list(a)?,
                strike: num(k)?,
            },
            ("call-on-min", [a, k]) => PayoffSpec::CallOnMin {
                assets: list(a)?,
                strike: num(k)?,
            },
            ("put-on-min", [a, k]) => PayoffSpec::PutOnMin {
                assets: list(a)?,
                strike: num(k)?,
            },
            ("best-of-calls", [legs]) => PayoffSpec::BestOfCalls {
                legs: legs
                    .split(',')
                    .map(|leg| {
                        let (a, k) = leg.split_once(':').ok_or_else(|| {
                            crate::Error::InvalidArgument(format!("leg must be asset:strike, got {leg}"))
                        })?;
                        Ok((idx(a)?, num(k)?))
                    })
                    .collect::<Result<_>>()?,
            },
            _ => return invalid(format!("unrecognised payoff: {text}")),
        };
        Ok(spec)
    }

    /// The asset a single-asset payoff depends on.
    pub fn single_asset(&self) -> Option<usize> {
        match self {
            PayoffSpec::Asset { asset } | PayoffSpec::Call { asset, .. } | PayoffSpec::Put { asset, .. } => {
                Some(*asset)
            }
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_examples() {
        let s = PayoffSpec::parse("call-on-max(2,3,4;K)", Some(1.5)).unwrap();
        assert_eq!(
            s,
            PayoffSpec::CallOnMax {
                assets: vec![1, 2, 3],
                strike: 1.5
            }
        );
        let s = PayoffSpec::parse("spread(1;2;-1)", None).unwrap();
        assert_eq!(
            s,
            PayoffSpec::Spread {
                long: vec![0],
                short: vec![1],
                strike: -1.0
            }
        );
        let s = PayoffSpec::parse("best-of-calls(1:2,3:2.5)", None).unwrap();
        assert_eq!(
            s,
            PayoffSpec::BestOfCalls {
                legs: vec![(0, 2.0), (2, 2.5)]
            }
        );
        assert!(PayoffSpec::parse("call(0,1)", None).is_err());
        assert!(PayoffSpec::parse("call(1,K)", None).is_err());
        assert!(PayoffSpec::parse("lookback(1)", None).is_err());
    }

    #[test]
    fn json_tagging() {
        let s = PayoffSpec::Call { asset: 0, strike: 2.0 };
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(j, r#"{"kind":"call","asset":0,"strike":2.0}"#);
    }
}
