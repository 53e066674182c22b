//! Continuous piecewise-affine functions in signed max-affine form.
//!
//! A function is stored as `h(x) = sum_k sign_k * max_i (<a_ki, x> + b_ki)`.
//! Terms are never merged, so the encoding of a payoff is exactly what its
//! constructor produced.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub a: Vec<f64>,
    pub b: f64,
}

impl Piece {
    pub fn new(a: Vec<f64>, b: f64) -> Self {
        Piece { a, b }
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>() + self.b
    }

    /// Largest value of the piece over the box `[0, upper]`.
    pub fn box_max(&self, upper: &[f64]) -> f64 {
        self.a
            .iter()
            .zip(upper)
            .map(|(&a, &u)| if a > 0.0 { a * u } else { 0.0 })
            .sum::<f64>()
            + self.b
    }

    /// Smallest value of the piece over the box `[0, upper]`.
    pub fn box_min(&self, upper: &[f64]) -> f64 {
        self.a
            .iter()
            .zip(upper)
            .map(|(&a, &u)| if a < 0.0 { a * u } else { 0.0 })
            .sum::<f64>()
            + self.b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub sign: i8,
    pub pieces: Vec<Piece>,
}

impl Term {
    pub fn new(sign: i8, pieces: Vec<Piece>) -> Self {
        Term { sign, pieces }
    }

    /// `max_i (<a_i, x> + b_i)`, without the sign.
    #[inline]
    pub fn max_value(&self, x: &[f64]) -> f64 {
        self.pieces.iter().map(|p| p.eval(x)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        f64::from(self.sign) * self.max_value(x)
    }

    /// Index of a maximising piece (lowest index on ties).
    pub fn argmax(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut val = f64::NEG_INFINITY;
        for (i, p) in self.pieces.iter().enumerate() {
            let v = p.eval(x);
            if v > val {
                val = v;
                best = i;
            }
        }
        best
    }

    /// Bounds of the signed term over `[0, upper]`.
    pub fn box_range(&self, upper: &[f64]) -> (f64, f64) {
        let lo = self
            .pieces
            .iter()
            .map(|p| p.box_min(upper))
            .fold(f64::NEG_INFINITY, f64::max);
        let hi = self
            .pieces
            .iter()
            .map(|p| p.box_max(upper))
            .fold(f64::NEG_INFINITY, f64::max);
        if self.sign > 0 {
            (lo, hi)
        } else {
            (-hi, -lo)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCpwa")]
pub struct CpwaFunction {
    pub d: usize,
    pub terms: Vec<Term>,
}

#[derive(Deserialize)]
struct RawCpwa {
    d: usize,
    terms: Vec<Term>,
}

impl TryFrom<RawCpwa> for CpwaFunction {
    type Error = Error;
    fn try_from(raw: RawCpwa) -> Result<Self> {
        CpwaFunction::new(raw.d, raw.terms)
    }
}

impl CpwaFunction {
    /// Validated constructor. Rejects empty terms, wrong piece dimensions,
    /// signs other than +-1 and non-finite coefficients.
    pub fn new(d: usize, terms: Vec<Term>) -> Result<Self> {
        if d == 0 {
            return invalid("dimension must be positive");
        }
        if terms.is_empty() {
            return invalid("a CPWA function needs at least one term");
        }
        for (k, t) in terms.iter().enumerate() {
            if t.sign != 1 && t.sign != -1 {
                return invalid(format!("term {k}: sign must be +1 or -1, got {}", t.sign));
            }
            if t.pieces.is_empty() {
                return invalid(format!("term {k} has no pieces"));
            }
            for (i, p) in t.pieces.iter().enumerate() {
                if p.a.len() != d {
                    return invalid(format!(
                        "term {k} piece {i}: slope has length {}, expected {d}",
                        p.a.len()
                    ));
                }
                if !p.b.is_finite() || p.a.iter().any(|v| !v.is_finite()) {
                    return invalid(format!("term {k} piece {i}: non-finite coefficient"));
                }
            }
        }
        Ok(CpwaFunction { d, terms })
    }

    /// The zero function: one term, one zero piece.
    pub fn zero(d: usize) -> Self {
        CpwaFunction {
            d,
            terms: vec![Term::new(1, vec![Piece::new(vec![0.0; d], 0.0)])],
        }
    }

    pub fn constant(d: usize, c: f64) -> Self {
        let sign = if c < 0.0 { -1 } else { 1 };
        CpwaFunction {
            d,
            terms: vec![Term::new(sign, vec![Piece::new(vec![0.0; d], c.abs())])],
        }
    }

    pub fn affine(a: Vec<f64>, b: f64) -> Self {
        let d = a.len();
        CpwaFunction {
            d,
            terms: vec![Term::new(1, vec![Piece::new(a, b)])],
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.d);
        self.terms.iter().map(|t| t.eval(x)).sum()
    }

    /// Same terms with every offset dropped. Positively homogeneous.
    pub fn radial(&self) -> Self {
        CpwaFunction {
            d: self.d,
            terms: self
                .terms
                .iter()
                .map(|t| Term::new(t.sign, t.pieces.iter().map(|p| Piece::new(p.a.clone(), 0.0)).collect()))
                .collect(),
        }
    }

    pub fn neg(&self) -> Self {
        CpwaFunction {
            d: self.d,
            terms: self
                .terms
                .iter()
                .map(|t| Term::new(-t.sign, t.pieces.clone()))
                .collect(),
        }
    }

    /// `t * h`. Negative factors flip the term signs.
    pub fn scale(&self, t: f64) -> Self {
        let s = t.abs();
        let flip = t < 0.0;
        CpwaFunction {
            d: self.d,
            terms: self
                .terms
                .iter()
                .map(|term| {
                    Term::new(
                        if flip { -term.sign } else { term.sign },
                        term.pieces
                            .iter()
                            .map(|p| Piece::new(p.a.iter().map(|v| v * s).collect(), p.b * s))
                            .collect(),
                    )
                })
                .collect(),
        }
    }

    /// Sum by concatenation of terms.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.d != other.d {
            return invalid(format!("dimension mismatch: {} vs {}", self.d, other.d));
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Ok(CpwaFunction { d: self.d, terms })
    }

    pub fn add_constant(&self, c: f64) -> Self {
        let mut out = self.clone();
        if c != 0.0 {
            out.terms.extend(CpwaFunction::constant(self.d, c).terms);
        }
        out
    }

    /// Bounds of `h` over `[0, upper]` obtained term by term. Exact when
    /// there is a single term, otherwise only an enclosure.
    pub fn box_range(&self, upper: &[f64]) -> (f64, f64) {
        self.terms.iter().fold((0.0, 0.0), |(lo, hi), t| {
            let (a, b) = t.box_range(upper);
            (lo + a, hi + b)
        })
    }

    pub fn total_pieces(&self) -> usize {
        self.terms.iter().map(|t| t.pieces.len()).sum()
    }

    /// Largest absolute offset, used to pick a default truncation box.
    pub fn max_abs_offset(&self) -> f64 {
        self.terms
            .iter()
            .flat_map(|t| t.pieces.iter())
            .map(|p| p.b.abs())
            .fold(0.0, f64::max)
    }
}

fn unit(d: usize, i: usize, v: f64) -> Vec<f64> {
    let mut a = vec![0.0; d];
    a[i] = v;
    a
}

fn check_index(d: usize, i: usize) -> Result<()> {
    if i >= d {
        return invalid(format!("asset index {i} out of range for dimension {d}"));
    }
    Ok(())
}

/// The price of asset `i` itself.
pub fn asset(d: usize, i: usize) -> Result<CpwaFunction> {
    check_index(d, i)?;
    Ok(CpwaFunction::affine(unit(d, i, 1.0), 0.0))
}

/// `(x_i - k)^+`
pub fn vanilla_call(d: usize, i: usize, k: f64) -> Result<CpwaFunction> {
    check_index(d, i)?;
    CpwaFunction::new(
        d,
        vec![Term::new(
            1,
            vec![Piece::new(unit(d, i, 1.0), -k), Piece::new(vec![0.0; d], 0.0)],
        )],
    )
}

/// `(k - x_i)^+`
pub fn vanilla_put(d: usize, i: usize, k: f64) -> Result<CpwaFunction> {
    check_index(d, i)?;
    CpwaFunction::new(
        d,
        vec![Term::new(
            1,
            vec![Piece::new(unit(d, i, -1.0), k), Piece::new(vec![0.0; d], 0.0)],
        )],
    )
}

/// `(<w, x> - k)^+`
pub fn basket_call(w: &[f64], k: f64) -> Result<CpwaFunction> {
    let d = w.len();
    CpwaFunction::new(
        d,
        vec![Term::new(
            1,
            vec![Piece::new(w.to_vec(), -k), Piece::new(vec![0.0; d], 0.0)],
        )],
    )
}

/// `(sum_{long} x_i - sum_{short} x_i - k)^+`
pub fn spread_call(d: usize, long: &[usize], short: &[usize], k: f64) -> Result<CpwaFunction> {
    let mut w = vec![0.0; d];
    for &i in long {
        check_index(d, i)?;
        w[i] += 1.0;
    }
    for &i in short {
        check_index(d, i)?;
        w[i] -= 1.0;
    }
    basket_call(&w, k)
}

/// `(max_{i in idx} x_i - k)^+`
pub fn call_on_max(d: usize, idx: &[usize], k: f64) -> Result<CpwaFunction> {
    if idx.is_empty() {
        return invalid("call-on-max needs at least one asset");
    }
    let mut pieces = Vec::with_capacity(idx.len() + 1);
    for &i in idx {
        check_index(d, i)?;
        pieces.push(Piece::new(unit(d, i, 1.0), -k));
    }
    pieces.push(Piece::new(vec![0.0; d], 0.0));
    CpwaFunction::new(d, vec![Term::new(1, pieces)])
}

/// `(min_{i in idx} x_i - k)^+`, written as
/// `max(k - x_1, .., k - x_n, 0) - max(k - x_1, .., k - x_n)`.
pub fn call_on_min(d: usize, idx: &[usize], k: f64) -> Result<CpwaFunction> {
    if idx.is_empty() {
        return invalid("call-on-min needs at least one asset");
    }
    let mut neg = Vec::with_capacity(idx.len());
    for &i in idx {
        check_index(d, i)?;
        neg.push(Piece::new(unit(d, i, -1.0), k));
    }
    let mut pos = neg.clone();
    pos.push(Piece::new(vec![0.0; d], 0.0));
    CpwaFunction::new(d, vec![Term::new(1, pos), Term::new(-1, neg)])
}

/// `(k - min_{i in idx} x_i)^+ = max(k - x_1, .., k - x_n, 0)`
pub fn put_on_min(d: usize, idx: &[usize], k: f64) -> Result<CpwaFunction> {
    if idx.is_empty() {
        return invalid("put-on-min needs at least one asset");
    }
    let mut pieces = Vec::with_capacity(idx.len() + 1);
    for &i in idx {
        check_index(d, i)?;
        pieces.push(Piece::new(unit(d, i, -1.0), k));
    }
    pieces.push(Piece::new(vec![0.0; d], 0.0));
    CpwaFunction::new(d, vec![Term::new(1, pieces)])
}

/// `max_i (x_i - k_i)^+` over the listed `(asset, strike)` pairs.
pub fn best_of_calls(d: usize, legs: &[(usize, f64)]) -> Result<CpwaFunction> {
    if legs.is_empty() {
        return invalid("best-of-calls needs at least one leg");
    }
    let mut pieces = Vec::with_capacity(legs.len() + 1);
    for &(i, k) in legs {
        check_index(d, i)?;
        pieces.push(Piece::new(unit(d, i, 1.0), -k));
    }
    pieces.push(Piece::new(vec![0.0; d], 0.0));
    CpwaFunction::new(d, vec![Term::new(1, pieces)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn call_on_min_matches_direct_formula() {
        let f = call_on_min(3, &[0, 1, 2], 2.0).unwrap();
        for x in [[1.0, 5.0, 3.0], [4.0, 2.5, 3.0], [2.0, 2.0, 9.0], [7.0, 8.0, 6.5]] {
            let m = x.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!((f.eval(&x) - (m - 2.0).max(0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn put_on_min_matches_direct_formula() {
        let f = put_on_min(2, &[0, 1], 4.0).unwrap();
        assert_eq!(f.eval(&[5.0, 1.5]), 2.5);
        assert_eq!(f.eval(&[5.0, 6.0]), 0.0);
    }

    #[test]
    fn spread_and_basket() {
        let f = spread_call(3, &[0], &[2], -1.0).unwrap();
        assert_eq!(f.eval(&[1.0, 9.0, 3.0]), 0.0);
        assert_eq!(f.eval(&[3.0, 9.0, 1.0]), 3.0);
        let b = basket_call(&[0.5, 0.5], 1.0).unwrap();
        assert_eq!(b.eval(&[2.0, 4.0]), 2.0);
    }

    #[test]
    fn zero_function_shape() {
        let z = CpwaFunction::zero(3);
        assert_eq!(z.terms.len(), 1);
        assert_eq!(z.terms[0].pieces.len(), 1);
        assert_eq!(z.eval(&[1.0, 2.0, 3.0]), 0.0);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let f = call_on_max(2, &[0, 1], 1.5).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        let g: CpwaFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(f, g);
        let bad = r#"{"d":2,"terms":[{"sign":2,"pieces":[{"a":[1,0],"b":0}]}]}"#;
        assert!(serde_json::from_str::<CpwaFunction>(bad).is_err());
        let bad = r#"{"d":2,"terms":[{"sign":1,"pieces":[{"a":[1],"b":0}]}]}"#;
        assert!(serde_json::from_str::<CpwaFunction>(bad).is_err());
        let bad = r#"{"d":2,"terms":[{"sign":1,"pieces":[]}]}"#;
        assert!(serde_json::from_str::<CpwaFunction>(bad).is_err());
    }

    #[test]
    fn bad_index_rejected() {
        assert!(vanilla_call(2, 2, 1.0).is_err());
        assert!(call_on_max(2, &[], 1.0).is_err());
    }
}
