//! Signed particle weights and the normalized `l^r` bound they must satisfy.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Growth exponent below which a norm sequence counts as bounded.
pub const BOUNDED_SLOPE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSequence {
    pub values: Vec<f64>,
    /// Declared exponent of the `l^r` bound.
    #[serde(with = "crate::serde_ext::exponent")]
    pub r: f64,
}

impl WeightSequence {
    pub fn new(values: Vec<f64>, r: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSpec("weight sequence must be nonempty".into()));
        }
        if !(r > 1.0) {
            return Err(Error::InvalidSpec(format!("weight exponent r must lie in (1, inf], got {r}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("weight sequence".into()));
        }
        Ok(Self { values, r })
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self { values: vec![c; n], r: f64::INFINITY }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Norm at the declared exponent.
    pub fn norm(&self) -> f64 {
        lr_norm(&self.values, self.r)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    /// `index,value` rows, 1-based.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,value\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{}", i + 1, v);
        }
        out
    }
}

/// `((1/N) sum |w_j|^r)^{1/r}`, or `max |w_j|` for `r = inf`.
pub fn lr_norm(w: &[f64], r: f64) -> f64 {
    assert!(r >= 1.0, "lr_norm needs r >= 1, got {r}");
    if w.is_empty() {
        return 0.0;
    }
    let max = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if r.is_infinite() || max == 0.0 {
        return max;
    }
    // Group equal magnitudes so the result depends only on the multiset of
    // |w_j| (and sequences with equal value proportions give equal norms);
    // scale by the max so large exponents do not overflow.
    let mut mags: Vec<f64> = w.iter().map(|v| v.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let n = mags.len() as f64;
    let mut mean = 0.0;
    let mut start = 0;
    while start < mags.len() {
        let v = mags[start];
        let end = start + mags[start..].iter().take_while(|&&x| x == v).count();
        mean += ((end - start) as f64 / n) * (v / max).powf(r);
        start = end;
    }
    max * mean.powf(1.0 / r)
}

/// Both norms of the embedding `l^{r1} <= l^{r2}` for `r1 <= r2`.
pub fn monotone_embedding(w: &WeightSequence, r1: f64, r2: f64) -> (f64, f64) {
    assert!(r1 <= r2, "monotone_embedding needs r1 <= r2");
    let a = lr_norm(&w.values, r1);
    let b = lr_norm(&w.values, r2);
    assert!(a <= b * (1.0 + 1e-12), "l^{r1} norm {a} exceeds l^{r2} norm {b}");
    (a, b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WeightFamily {
    Constant { c: f64 },
    /// `a1` at odd (1-based) indices, `a2` at even ones.
    TwoPiece { a1: f64, a2: f64 },
    /// `ceil(N^theta)` leading entries equal to `N^theta`, the rest 1.
    HeavyTail {
        #[serde(default = "default_theta")]
        theta: f64,
    },
    /// The base family on the first `ceil(N / factor)` indices, zeros after.
    Padded { base: Box<WeightFamily>, factor: usize },
}

fn default_theta() -> f64 {
    1.0 / 3.0
}

/// `x` snapped to the nearest integer when within `1e-9` relative of it, so that
/// `1000^(1/3)` counts as 10.
fn snap(x: f64) -> f64 {
    let k = x.round();
    if (x - k).abs() <= 1e-9 * x.abs().max(1.0) {
        k
    } else {
        x
    }
}

impl WeightFamily {
    pub fn validate(&self) -> Result<()> {
        match self {
            WeightFamily::Constant { c } if !c.is_finite() => Err(Error::NonFinite("constant weight".into())),
            WeightFamily::TwoPiece { a1, a2 } if !(a1.is_finite() && a2.is_finite()) => {
                Err(Error::NonFinite("two-piece weights".into()))
            }
            WeightFamily::HeavyTail { theta } if !(*theta >= 0.0 && *theta < 1.0) => {
                Err(Error::InvalidSpec(format!("heavy-tail exponent {theta} must lie in [0, 1)")))
            }
            WeightFamily::Padded { factor: 0, .. } => Err(Error::InvalidSpec("padding factor must be at least 1".into())),
            WeightFamily::Padded { base, .. } => base.validate(),
            _ => Ok(()),
        }
    }

    pub fn description(&self) -> String {
        match self {
            WeightFamily::Constant { c } => format!("constant({c})"),
            WeightFamily::TwoPiece { a1, a2 } => format!("two_piece({a1}, {a2})"),
            WeightFamily::HeavyTail { theta } => format!("heavy_tail(theta={theta:.6})"),
            WeightFamily::Padded { base, factor } => format!("padded({}, x{factor})", base.description()),
        }
    }

    /// Weights for `n` particles.
    pub fn values(&self, n: usize) -> Vec<f64> {
        match self {
            WeightFamily::Constant { c } => vec![*c; n],
            WeightFamily::TwoPiece { a1, a2 } => (0..n).map(|i| if i % 2 == 0 { *a1 } else { *a2 }).collect(),
            WeightFamily::HeavyTail { theta } => {
                let big = snap((n as f64).powf(*theta));
                let count = (big.ceil() as usize).min(n);
                (0..n).map(|i| if i < count { big } else { 1.0 }).collect()
            }
            WeightFamily::Padded { base, factor } => {
                let m = n.div_ceil(*factor);
                let mut v = base.values(m);
                v.resize(n, 0.0);
                v
            }
        }
    }

    pub fn generate(&self, n: usize, r: f64) -> Result<WeightSequence> {
        self.validate()?;
        WeightSequence::new(self.values(n), r)
    }

    /// `lim (1/N) sum_i w_i`, when it exists.
    pub fn limit_mean(&self) -> Option<f64> {
        match self {
            WeightFamily::Constant { c } => Some(*c),
            WeightFamily::TwoPiece { a1, a2 } => Some(0.5 * (a1 + a2)),
            // (1/N)(N^{2 theta} + N - N^theta) -> 1 while 2 theta < 1
            WeightFamily::HeavyTail { theta } if *theta < 0.5 => Some(1.0),
            WeightFamily::HeavyTail { theta } if *theta == 0.5 => Some(2.0),
            WeightFamily::HeavyTail { .. } => None,
            WeightFamily::Padded { base, factor } => base.limit_mean().map(|m| m / *factor as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WrReport {
    pub family: String,
    #[serde(with = "crate::serde_ext::exponent")]
    pub r: f64,
    pub ns: Vec<usize>,
    pub norms: Vec<f64>,
    pub sup: f64,
    /// Least-squares slope of `ln norm` against `ln N`.
    pub growth_exponent: f64,
    pub threshold: f64,
    pub bounded: bool,
}

/// Evaluate the `l^r` norm along `ns` and decide boundedness from the fitted growth.
pub fn check_wr(family: &WeightFamily, r: f64, ns: &[usize]) -> Result<WrReport> {
    family.validate()?;
    if ns.len() < 2 || ns.windows(2).any(|p| p[0] >= p[1]) || ns[0] == 0 {
        return Err(Error::InvalidSpec("Ns must be strictly increasing positive integers, at least two".into()));
    }
    if !(r >= 1.0) {
        return Err(Error::InvalidSpec(format!("r must be at least 1, got {r}")));
    }
    let norms: Vec<f64> = ns.iter().map(|&n| lr_norm(&family.values(n), r)).collect();
    let sup = norms.iter().cloned().fold(0.0, f64::max);
    let growth_exponent = if norms.iter().all(|&x| x > 0.0) {
        let lx: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
        let ly: Vec<f64> = norms.iter().map(|x| x.ln()).collect();
        quad::fit_slope(&lx, &ly)
    } else {
        0.0
    };
    Ok(WrReport {
        family: family.description(),
        r,
        ns: ns.to_vec(),
        norms,
        sup,
        growth_exponent,
        threshold: BOUNDED_SLOPE,
        bounded: growth_exponent < BOUNDED_SLOPE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_examples() {
        assert_eq!(lr_norm(&[1.0; 4], f64::INFINITY), 1.0);
        for r in [1.0, 1.5, 2.0, 7.0, f64::INFINITY] {
            assert!((lr_norm(&[1.0, -1.0, 1.0, -1.0], r) - 1.0).abs() < 1e-15);
        }
        let w = WeightSequence::new(vec![2.0, 0.0, 0.0, 0.0], 2.0).unwrap();
        let (a, b) = monotone_embedding(&w, 1.0, 2.0);
        assert!((a - 0.5).abs() < 1e-15 && (b - 1.0).abs() < 1e-15);
    }

    #[test]
    fn heavy_tail_layout_and_norms() {
        let fam = WeightFamily::HeavyTail { theta: 1.0 / 3.0 };
        let v = fam.values(1000);
        assert_eq!(v.iter().filter(|&&x| x == 10.0).count(), 10);
        assert_eq!(v.iter().filter(|&&x| x == 1.0).count(), 990);
        // direct sums in a different order from lr_norm
        let s2: f64 = v.iter().rev().map(|x| x * x).sum();
        let n2 = (s2 / 1000.0).sqrt();
        assert!((n2 - 1.99f64.sqrt()).abs() < 1e-14);
        assert!((lr_norm(&v, 2.0) - n2).abs() < 1e-13);
        let s3: f64 = v.iter().rev().map(|x| x * x * x).sum();
        let n3 = (s3 / 1000.0).cbrt();
        let w = WeightSequence::new(v, 2.0).unwrap();
        let (a, b) = monotone_embedding(&w, 2.0, 3.0);
        assert!((a - 1.41067).abs() < 1e-5);
        // (10 * 10^3 + 990) / 1000 = 10.99
        assert!((b - n3).abs() < 1e-13 && (b - 10.99f64.cbrt()).abs() < 1e-13);
        assert!((b - 2.22331).abs() < 1e-5);
    }

    #[test]
    fn check_wr_verdicts() {
        let c = check_wr(&WeightFamily::Constant { c: 1.0 }, 2.0, &[100, 1000, 10000]).unwrap();
        assert!(c.bounded && c.growth_exponent.abs() < 1e-15 && c.norms.iter().all(|&x| x == 1.0));
        let ht = WeightFamily::HeavyTail { theta: 1.0 / 3.0 };
        let ns = [1000, 10000, 100000];
        let r2 = check_wr(&ht, 2.0, &ns).unwrap();
        assert!(r2.bounded);
        for (n, got) in ns.iter().zip(&r2.norms) {
            let big = (*n as f64).cbrt();
            let count = big.round().max(big.ceil());
            let count = if (big - big.round()).abs() < 1e-9 * big { big.round() } else { count };
            let val = if (big - big.round()).abs() < 1e-9 * big { big.round() } else { big };
            let oracle = ((count * val * val + (*n as f64 - count)) / *n as f64).sqrt();
            assert!((got - oracle).abs() < 1e-12, "N={n}: {got} vs {oracle}");
        }
        let r4 = check_wr(&ht, 4.0, &ns).unwrap();
        assert!(!r4.bounded);
        assert!((r4.growth_exponent - 1.0 / 6.0).abs() < 0.02, "{}", r4.growth_exponent);
        assert!(check_wr(&ht, 2.0, &[10]).is_err());
        assert!(check_wr(&ht, 2.0, &[10, 10]).is_err());
    }

    #[test]
    fn two_piece_and_padded() {
        let tp = WeightFamily::TwoPiece { a1: 1.0, a2: -1.0 };
        assert_eq!(tp.values(5), vec![1.0, -1.0, 1.0, -1.0, 1.0]);
        assert_eq!(tp.limit_mean(), Some(0.0));
        let p = WeightFamily::Padded { base: Box::new(WeightFamily::Constant { c: 2.0 }), factor: 5 };
        let v = p.values(10);
        assert_eq!(v, vec![2.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((lr_norm(&v, 2.0) - 2.0 * 5f64.powf(-0.5)).abs() < 1e-15);
        assert_eq!(p.limit_mean(), Some(0.4));
    }

    #[test]
    fn csv_export() {
        let w = WeightSequence::new(vec![1.5, -2.0], 2.0).unwrap();
        assert_eq!(w.to_csv(), "index,value\n1,1.5\n2,-2\n");
    }

    #[test]
    fn json_round_trip_with_infinite_exponent() {
        let w = WeightSequence::constant(3, 1.0);
        let s = serde_json::to_string(&w).unwrap();
        assert!(s.contains("\"inf\""));
        let back: WeightSequence = serde_json::from_str(&s).unwrap();
        assert_eq!(back, w);
        let fam: WeightFamily = serde_json::from_str(r#"{"type":"heavy_tail"}"#).unwrap();
        assert_eq!(fam, WeightFamily::HeavyTail { theta: 1.0 / 3.0 });
    }

    proptest! {
        #[test]
        fn norm_is_monotone_in_r(w in prop::collection::vec(-10.0f64..10.0, 1..50), r1 in 1.0f64..8.0, dr in 0.0f64..8.0) {
            let a = lr_norm(&w, r1);
            let b = lr_norm(&w, r1 + dr);
            let c = lr_norm(&w, f64::INFINITY);
            prop_assert!(a <= b * (1.0 + 1e-12));
            prop_assert!(b <= c * (1.0 + 1e-12));
        }

        #[test]
        fn norm_scales_and_ignores_sign(w in prop::collection::vec(-10.0f64..10.0, 1..50), c in -5.0f64..5.0, r in 1.0f64..6.0) {
            let scaled: Vec<f64> = w.iter().map(|x| c * x).collect();
            let abs: Vec<f64> = w.iter().map(|x| x.abs()).collect();
            let base = lr_norm(&w, r);
            prop_assert!((lr_norm(&scaled, r) - c.abs() * base).abs() <= 1e-12 * (1.0 + c.abs() * base));
            prop_assert_eq!(lr_norm(&abs, r), base);
        }

        #[test]
        fn two_piece_norm_is_parity_stable(a1 in -5.0f64..5.0, a2 in -5.0f64..5.0, half in 1usize..200, r in 1.0f64..6.0) {
            let f = WeightFamily::TwoPiece { a1, a2 };
            let n = 2 * half;
            prop_assert_eq!(lr_norm(&f.values(n), r), lr_norm(&f.values(n + 2), r));
        }
    }
}
