//! The slack `s_y(x) = sum_j y_j g_j(x) - f(x)` as a template affine in `y`.

use crate::cpwa::{CpwaFunction, Piece, Term};
use crate::error::{invalid, Result};

/// One max-affine term whose multiplier is `<y, weights> + offset`.
#[derive(Debug, Clone)]
pub struct SlackTerm {
    pub weights: Vec<(usize, f64)>,
    pub offset: f64,
    pub pieces: Vec<Piece>,
}

impl SlackTerm {
    pub fn multiplier(&self, y: &[f64]) -> f64 {
        self.weights.iter().map(|&(j, w)| w * y[j]).sum::<f64>() + self.offset
    }
}

#[derive(Debug, Clone)]
pub struct SlackTemplate {
    pub d: usize,
    pub m: usize,
    pub terms: Vec<SlackTerm>,
}

pub fn slack_template(g: &[CpwaFunction], f: &CpwaFunction) -> Result<SlackTemplate> {
    let d = f.d;
    let mut terms = Vec::new();
    for (j, gj) in g.iter().enumerate() {
        if gj.d != d {
            return invalid(format!("instrument {j} has dimension {}, target has {d}", gj.d));
        }
        for t in &gj.terms {
            terms.push(SlackTerm {
                weights: vec![(j, f64::from(t.sign))],
                offset: 0.0,
                pieces: t.pieces.clone(),
            });
        }
    }
    for t in &f.terms {
        terms.push(SlackTerm {
            weights: Vec::new(),
            offset: -f64::from(t.sign),
            pieces: t.pieces.clone(),
        });
    }
    Ok(SlackTemplate { d, m: g.len(), terms })
}

impl SlackTemplate {
    /// `s_y` as a CPWA function. Terms with a zero multiplier are dropped.
    pub fn instantiate(&self, y: &[f64]) -> CpwaFunction {
        let mut terms = Vec::new();
        for t in &self.terms {
            let w = t.multiplier(y);
            if w == 0.0 {
                continue;
            }
            let s = w.abs();
            terms.push(Term::new(
                if w > 0.0 { 1 } else { -1 },
                t.pieces
                    .iter()
                    .map(|p| Piece::new(p.a.iter().map(|v| v * s).collect(), p.b * s))
                    .collect(),
            ));
        }
        if terms.is_empty() {
            return CpwaFunction::zero(self.d);
        }
        CpwaFunction { d: self.d, terms }
    }

    pub fn eval(&self, y: &[f64], x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let w = t.multiplier(y);
                if w == 0.0 {
                    0.0
                } else {
                    w * t.pieces.iter().map(|p| p.eval(x)).fold(f64::NEG_INFINITY, f64::max)
                }
            })
            .sum()
    }

    /// Offsets dropped and repeated slopes within a term merged.
    pub fn radial(&self) -> SlackTemplate {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let mut pieces: Vec<Piece> = Vec::new();
                for p in &t.pieces {
                    if !pieces.iter().any(|q| q.a == p.a) {
                        pieces.push(Piece::new(p.a.clone(), 0.0));
                    }
                }
                SlackTerm {
                    weights: t.weights.clone(),
                    offset: t.offset,
                    pieces,
                }
            })
            .collect();
        SlackTemplate {
            d: self.d,
            m: self.m,
            terms,
        }
    }
}
