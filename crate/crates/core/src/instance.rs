use serde::{Deserialize, Serialize};

use crate::cpwa::CpwaFunction;
use crate::error::{invalid, Result};

/// Where the underlying prices live.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Domain {
    /// All of `R_+^d`.
    PositiveOrthant,
    /// `[0, upper_1] x .. x [0, upper_d]`.
    Box { upper: Vec<f64> },
}

/// Traded instruments with bid and ask quotes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketInstance {
    pub d: usize,
    pub domain: Domain,
    pub g: Vec<CpwaFunction>,
    pub bid: Vec<f64>,
    pub ask: Vec<f64>,
    #[serde(default)]
    pub labels: Vec<String>,
}

impl MarketInstance {
    pub fn new(d: usize, domain: Domain, g: Vec<CpwaFunction>, bid: Vec<f64>, ask: Vec<f64>) -> Result<Self> {
        let inst = MarketInstance {
            d,
            domain,
            g,
            bid,
            ask,
            labels: Vec::new(),
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        self.labels = labels;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.g.len();
        if self.bid.len() != m || self.ask.len() != m {
            return invalid(format!(
                "{m} instruments but {} bids and {} asks",
                self.bid.len(),
                self.ask.len()
            ));
        }
        if !self.labels.is_empty() && self.labels.len() != m {
            return invalid("label count differs from instrument count");
        }
        for (j, g) in self.g.iter().enumerate() {
            if g.d != self.d {
                return invalid(format!("instrument {j} has dimension {}, expected {}", g.d, self.d));
            }
            if !(self.bid[j].is_finite() && self.ask[j].is_finite()) {
                return invalid(format!("instrument {j}: non-finite quote"));
            }
            if self.bid[j] > self.ask[j] {
                return invalid(format!(
                    "instrument {j}: bid {} exceeds ask {}",
                    self.bid[j], self.ask[j]
                ));
            }
        }
        if let Domain::Box { upper } = &self.domain {
            if upper.len() != self.d {
                return invalid("box upper bound has the wrong dimension");
            }
            if upper.iter().any(|&u| !(u > 0.0 && u.is_finite())) {
                return invalid("box upper bounds must be positive and finite");
            }
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.g.len()
    }

    pub fn box_upper(&self) -> Option<&[f64]> {
        match &self.domain {
            Domain::Box { upper } => Some(upper),
            Domain::PositiveOrthant => None,
        }
    }

    /// Cost of holding `y`: long positions pay the ask, short ones earn the bid.
    pub fn price(&self, y: &[f64]) -> f64 {
        y.iter()
            .zip(self.bid.iter().zip(&self.ask))
            .map(|(&y, (&b, &a))| if y > 0.0 { y * a } else { y * b })
            .sum()
    }

    /// Portfolio value `c + <y, g(x)>`.
    pub fn portfolio_value(&self, c: f64, y: &[f64], x: &[f64]) -> f64 {
        c + self.g.iter().zip(y).map(|(g, y)| y * g.eval(x)).sum::<f64>()
    }

    pub fn payoffs_at(&self, x: &[f64]) -> Vec<f64> {
        self.g.iter().map(|g| g.eval(x)).collect()
    }

    /// Keep only the listed instruments.
    pub fn subset(&self, keep: &[usize]) -> MarketInstance {
        MarketInstance {
            d: self.d,
            domain: self.domain.clone(),
            g: keep.iter().map(|&j| self.g[j].clone()).collect(),
            bid: keep.iter().map(|&j| self.bid[j]).collect(),
            ask: keep.iter().map(|&j| self.ask[j]).collect(),
            labels: if self.labels.is_empty() {
                Vec::new()
            } else {
                keep.iter().map(|&j| self.labels[j].clone()).collect()
            },
        }
    }

    /// Largest offset magnitude among payoffs, used for the default box.
    pub fn max_abs_offset(&self) -> f64 {
        self.g.iter().map(|g| g.max_abs_offset()).fold(0.0, f64::max)
    }
}
