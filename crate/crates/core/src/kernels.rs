//! Interaction kernels: Biot-Savart, power-law and zero, with optional
//! blob or mollifier regularization and an optional periodic cell.
//!
//! A [`KernelSpec`] is plain configuration. [`Kernel::new`] validates it and
//! precomputes whatever tables the evaluation needs (the radial profile of a
//! mollified power law, the smooth periodic correction of Biot-Savart), after
//! which evaluation is pure.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{self, Fft2};
use crate::quad;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    /// `-x / |x|^alpha`
    Attractive,
    /// `+x / |x|^alpha`
    Repulsive,
}

impl Sign {
    fn factor(self) -> f64 {
        match self {
            Sign::Attractive => -1.0,
            Sign::Repulsive => 1.0,
        }
    }
}

fn default_dim() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Family {
    BiotSavart,
    PowerLaw {
        alpha: f64,
        sign: Sign,
        #[serde(default = "default_dim")]
        dim: usize,
    },
    Zero {
        #[serde(default = "default_dim")]
        dim: usize,
    },
}

impl Family {
    pub fn zero() -> Self {
        Family::Zero { dim: 2 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::BiotSavart => "biot_savart",
            Family::PowerLaw { .. } => "power_law",
            Family::Zero { .. } => "zero",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Family::BiotSavart => 2,
            Family::PowerLaw { dim, .. } | Family::Zero { dim } => *dim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Regularization {
    #[default]
    None,
    /// `x^perp / (2 pi (|x|^2 + delta^2))` for Biot-Savart.
    Blob { delta: f64 },
    /// Gaussian mollification at scale `epsilon`, cut off smoothly between
    /// `1/epsilon` and `2/epsilon`.
    Mollified { epsilon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Domain {
    #[default]
    FreeSpace,
    Periodic { half_width: f64, mode_cutoff: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: Family,
    #[serde(default)]
    pub regularization: Regularization,
    #[serde(default)]
    pub domain: Domain,
}

impl KernelSpec {
    pub fn biot_savart() -> Self {
        Self { family: Family::BiotSavart, regularization: Regularization::None, domain: Domain::FreeSpace }
    }

    pub fn blob_biot_savart(delta: f64) -> Self {
        Self { regularization: Regularization::Blob { delta }, ..Self::biot_savart() }
    }

    pub fn power_law(alpha: f64, sign: Sign) -> Self {
        Self {
            family: Family::PowerLaw { alpha, sign, dim: 2 },
            regularization: Regularization::None,
            domain: Domain::FreeSpace,
        }
    }

    pub fn zero() -> Self {
        Self { family: Family::zero(), regularization: Regularization::None, domain: Domain::FreeSpace }
    }

    pub fn with_regularization(mut self, regularization: Regularization) -> Self {
        self.regularization = regularization;
        self
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    pub fn validate(&self) -> Result<()> {
        match self.family {
            Family::BiotSavart => {}
            Family::PowerLaw { alpha, dim, .. } => {
                if !(alpha > 1.0 && alpha < 2.0) {
                    return Err(Error::InvalidSpec(format!("power-law alpha {alpha} must lie strictly inside (1, 2)")));
                }
                if !(dim == 2 || dim == 3) {
                    return Err(Error::InvalidSpec(format!("power-law dimension {dim} must be 2 or 3")));
                }
            }
            Family::Zero { dim } => {
                if !(dim == 2 || dim == 3) {
                    return Err(Error::InvalidSpec(format!("dimension {dim} must be 2 or 3")));
                }
            }
        }
        match self.regularization {
            Regularization::None => {}
            Regularization::Blob { delta } if !(delta > 0.0 && delta.is_finite()) => {
                return Err(Error::InvalidSpec(format!("blob delta must be positive, got {delta}")));
            }
            Regularization::Mollified { epsilon } if !(epsilon > 0.0 && epsilon.is_finite()) => {
                return Err(Error::InvalidSpec(format!("mollifier epsilon must be positive, got {epsilon}")));
            }
            _ => {}
        }
        if let Domain::Periodic { half_width, mode_cutoff } = self.domain {
            if !(half_width > 0.0 && half_width.is_finite()) {
                return Err(Error::InvalidSpec(format!("periodic half-width must be positive, got {half_width}")));
            }
            if mode_cutoff < 4 || mode_cutoff % 2 != 0 {
                return Err(Error::InvalidSpec(format!("mode cutoff {mode_cutoff} must be even and at least 4")));
            }
            match self.family {
                Family::BiotSavart | Family::Zero { dim: 2 } => {}
                _ => {
                    return Err(Error::UnsupportedFamily(format!(
                        "{} kernel has no periodic form; only 2D Biot-Savart and zero do",
                        self.family.name()
                    )))
                }
            }
            if matches!(self.regularization, Regularization::Mollified { .. }) {
                return Err(Error::UnsupportedFamily("mollified kernels are free-space only".into()));
            }
        }
        Ok(())
    }
}

/// A validated kernel with its precomputed tables.
#[derive(Debug, Clone)]
pub struct Kernel {
    spec: KernelSpec,
    dim: usize,
    mollified_profile: Option<RadialProfile>,
    periodic: Option<PeriodicCorrection>,
}

impl Kernel {
    pub fn new(spec: KernelSpec) -> Result<Self> {
        spec.validate()?;
        let dim = spec.dim();
        let mollified_profile = match (&spec.family, spec.regularization) {
            (Family::PowerLaw { alpha, dim, .. }, Regularization::Mollified { epsilon }) => {
                Some(RadialProfile::mollified_power_law(*alpha, *dim, epsilon))
            }
            _ => None,
        };
        let periodic = match (&spec.family, spec.domain) {
            (Family::BiotSavart, Domain::Periodic { half_width, mode_cutoff }) => {
                Some(PeriodicCorrection::build(half_width, mode_cutoff))
            }
            _ => None,
        };
        Ok(Self { spec, dim, mollified_profile, periodic })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.spec.family, Family::Zero { .. })
    }

    /// True when evaluation at the origin is an error.
    pub fn is_singular(&self) -> bool {
        !self.is_zero() && matches!(self.spec.regularization, Regularization::None)
    }

    pub fn periodic_half_width(&self) -> Option<f64> {
        match self.spec.domain {
            Domain::Periodic { half_width, .. } => Some(half_width),
            Domain::FreeSpace => None,
        }
    }

    /// Radius beyond which `|K(x)| < tail_tol`.
    pub fn decay_radius(&self, tail_tol: f64) -> f64 {
        match (&self.spec.family, self.spec.regularization) {
            (Family::Zero { .. }, _) => 0.0,
            (_, Regularization::Mollified { epsilon }) => 2.0 / epsilon,
            (Family::BiotSavart, _) => 1.0 / (2.0 * PI * tail_tol),
            // |x|^{1-alpha} < tol
            (Family::PowerLaw { alpha, .. }, _) => tail_tol.powf(1.0 / (1.0 - alpha)),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, &mut out)?;
        Ok(out)
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        debug_assert_eq!(x.len(), self.dim);
        if let Some(corr) = &self.periodic {
            let l = corr.half_width;
            if x.iter().any(|&c| !(c >= -l && c < l)) {
                return Err(Error::DomainMismatch { point: x.to_vec(), half_width: l });
            }
            self.eval_free(x, out)?;
            let (rx, ry) = corr.lookup(x[0], x[1]);
            out[0] += rx;
            out[1] += ry;
            return Ok(());
        }
        if let (Domain::Periodic { half_width, .. }, Family::Zero { .. }) = (self.spec.domain, &self.spec.family) {
            if x.iter().any(|&c| !(c >= -half_width && c < half_width)) {
                return Err(Error::DomainMismatch { point: x.to_vec(), half_width });
            }
        }
        self.eval_free(x, out)
    }

    fn eval_free(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let r2: f64 = x.iter().map(|c| c * c).sum();
        match (&self.spec.family, self.spec.regularization) {
            (Family::Zero { .. }, _) => out.iter_mut().for_each(|o| *o = 0.0),
            (Family::BiotSavart, reg) => {
                let scale = match reg {
                    Regularization::None => {
                        if r2 == 0.0 {
                            return Err(Error::SingularEvaluation);
                        }
                        1.0 / (2.0 * PI * r2)
                    }
                    Regularization::Blob { delta } => 1.0 / (2.0 * PI * (r2 + delta * delta)),
                    Regularization::Mollified { epsilon } => {
                        if r2 == 0.0 {
                            0.0
                        } else {
                            let core = -(-r2 / (2.0 * epsilon * epsilon)).exp_m1() / (2.0 * PI * r2);
                            core * cutoff(r2.sqrt(), epsilon)
                        }
                    }
                };
                out[0] = -x[1] * scale;
                out[1] = x[0] * scale;
            }
            (Family::PowerLaw { alpha, sign, .. }, reg) => {
                let s = sign.factor();
                let scale = match reg {
                    Regularization::None => {
                        if r2 == 0.0 {
                            return Err(Error::SingularEvaluation);
                        }
                        r2.powf(-0.5 * alpha)
                    }
                    Regularization::Blob { delta } => (r2 + delta * delta).powf(-0.5 * alpha),
                    Regularization::Mollified { epsilon } => {
                        if r2 == 0.0 {
                            0.0
                        } else {
                            let r = r2.sqrt();
                            let profile = self.mollified_profile.as_ref().expect("profile built with kernel");
                            profile.magnitude(r) / r * cutoff(r, epsilon)
                        }
                    }
                };
                for (o, c) in out.iter_mut().zip(x) {
                    *o = s * scale * c;
                }
            }
        }
        Ok(())
    }
}

/// Evaluate a kernel spec at a single point.
pub fn eval(spec: &KernelSpec, x: &[f64]) -> Result<Vec<f64>> {
    Kernel::new(spec.clone())?.eval(x)
}

/// Smooth cutoff equal to 1 on `|x| <= 1/eps` and 0 beyond `2/eps`.
fn cutoff(r: f64, epsilon: f64) -> f64 {
    let big_r = 1.0 / epsilon;
    quad::smooth_step((2.0 * big_r - r) / big_r)
}

/// Radial magnitude of a Gaussian-mollified power law, tabulated against
/// `u = ln(1 + s / eps)` as the ratio to the unmollified magnitude.
#[derive(Debug, Clone)]
struct RadialProfile {
    alpha: f64,
    epsilon: f64,
    du: f64,
    ratio: Vec<f64>,
}

impl RadialProfile {
    const NODES: usize = 4096;

    fn mollified_power_law(alpha: f64, dim: usize, epsilon: f64) -> Self {
        let s_max = 2.0 / epsilon + epsilon;
        let u_max = (s_max / epsilon).ln_1p();
        let du = u_max / (Self::NODES - 1) as f64;
        let ratio = (0..Self::NODES)
            .map(|k| {
                let s = epsilon * (k as f64 * du).exp_m1();
                if s == 0.0 {
                    0.0
                } else {
                    mollified_power_law_magnitude(alpha, dim, epsilon, s) / s.powf(1.0 - alpha)
                }
            })
            .collect();
        Self { alpha, epsilon, du, ratio }
    }

    fn magnitude(&self, s: f64) -> f64 {
        let u = (s / self.epsilon).ln_1p() / self.du;
        let k = (u.floor() as usize).min(self.ratio.len() - 2);
        let t = (u - k as f64).clamp(0.0, 1.0);
        let ratio = self.ratio[k] * (1.0 - t) + self.ratio[k + 1] * t;
        ratio * s.powf(1.0 - self.alpha)
    }
}

/// `(K * rho_eps)(s e_1) . e_1` for `K(y) = y / |y|^alpha` and an isotropic
/// Gaussian `rho_eps` of standard deviation `eps`, by radial quadrature with the
/// angular integral done in closed form.
pub fn mollified_power_law_magnitude(alpha: f64, dim: usize, epsilon: f64, s: f64) -> f64 {
    let e2 = epsilon * epsilon;
    let lo = (s - 12.0 * epsilon).max(0.0);
    let hi = s + 12.0 * epsilon;
    let radial = |r: f64| {
        if r == 0.0 {
            return 0.0;
        }
        let a = r * s / e2;
        let gauss = (-(r - s) * (r - s) / (2.0 * e2)).exp();
        match dim {
            // int_0^{2pi} cos t e^{-a(1 - cos t)} dt = 2 pi e^{-a} I_1(a)
            2 => r.powf(2.0 - alpha) * gauss * quad::bessel_i1_scaled(a) / e2,
            // int_{-1}^{1} u e^{-a(1-u)} du
            _ => {
                let ang = if a < 1e-4 {
                    (-a).exp() * (2.0 * a / 3.0 + a * a * a / 15.0)
                } else {
                    1.0 / a - 1.0 / (a * a) + (-2.0 * a).exp() * (1.0 / a + 1.0 / (a * a))
                };
                2.0 * PI * r.powf(3.0 - alpha) * gauss * ang * (2.0 * PI * e2).powf(-1.5)
            }
        }
    };
    quad::simpson(radial, lo, hi, 600)
}

/// Smooth difference between the periodic and free-space Biot-Savart kernels
/// on `[-L, L]^2`, tabulated on the `(M+1)^2` grid nodes.
#[derive(Debug, Clone)]
struct PeriodicCorrection {
    half_width: f64,
    m: usize,
    h: f64,
    rx: Vec<f64>,
    ry: Vec<f64>,
}

impl PeriodicCorrection {
    fn build(half_width: f64, m: usize) -> Self {
        let l = half_width;
        let h = 2.0 * l / m as f64;
        // Ewald-style split: the Gaussian-smoothed periodic kernel converges in
        // a handful of modes, and the smoothed free-space kernel it is compared
        // with cancels the core exactly.
        let sigma = l / 8.0;
        let area = 4.0 * l * l;
        let kscale = PI / l;
        let table = multiplier_table(l, m);
        let mut ux = vec![Complex64::new(0.0, 0.0); m * m];
        let mut uy = ux.clone();
        for b in 0..m {
            for a in 0..m {
                let (na, nb) = (fft::mode(a, m), fft::mode(b, m));
                if na.unsigned_abs() as usize * 2 >= m || nb.unsigned_abs() as usize * 2 >= m {
                    continue;
                }
                let k2 = kscale * kscale * (na * na + nb * nb) as f64;
                let phase = if (na + nb) % 2 == 0 { 1.0 } else { -1.0 };
                let amp = phase * (-0.5 * sigma * sigma * k2).exp() / area;
                let [mx, my] = table.entries[b * m + a];
                ux[b * m + a] = mx * amp;
                uy[b * m + a] = my * amp;
            }
        }
        let fft2 = Fft2::new(m);
        fft2.backward(&mut ux);
        fft2.backward(&mut uy);
        let nodes = m + 1;
        let mut rx = vec![0.0; nodes * nodes];
        let mut ry = vec![0.0; nodes * nodes];
        for b in 0..nodes {
            for a in 0..nodes {
                let x = -l + a as f64 * h;
                let y = -l + b as f64 * h;
                let r2 = x * x + y * y;
                let smooth = if r2 == 0.0 {
                    0.0
                } else {
                    -(-r2 / (2.0 * sigma * sigma)).exp_m1() / (2.0 * PI * r2)
                };
                let per = (b % m) * m + (a % m);
                rx[b * nodes + a] = ux[per].re - (-y * smooth);
                ry[b * nodes + a] = uy[per].re - (x * smooth);
            }
        }
        Self { half_width: l, m, h, rx, ry }
    }

    fn lookup(&self, x: f64, y: f64) -> (f64, f64) {
        let nodes = self.m + 1;
        let px = (x + self.half_width) / self.h;
        let py = (y + self.half_width) / self.h;
        let i = (px.floor() as usize).min(self.m - 1);
        let j = (py.floor() as usize).min(self.m - 1);
        let tx = px - i as f64;
        let ty = py - j as f64;
        let bil = |v: &[f64]| {
            let v00 = v[j * nodes + i];
            let v10 = v[j * nodes + i + 1];
            let v01 = v[(j + 1) * nodes + i];
            let v11 = v[(j + 1) * nodes + i + 1];
            (1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11)
        };
        (bil(&self.rx), bil(&self.ry))
    }
}

/// Fourier symbol of the Biot-Savart operator on the periodic box, indexed
/// like the FFT buffer (`b * M + a`).
#[derive(Debug, Clone)]
pub struct MultiplierTable {
    pub half_width: f64,
    pub m: usize,
    pub entries: Vec<[Complex64; 2]>,
}

impl MultiplierTable {
    /// Multiplier at signed mode numbers `(nx, ny)`.
    pub fn at(&self, nx: i64, ny: i64) -> [Complex64; 2] {
        let m = self.m as i64;
        let a = nx.rem_euclid(m) as usize;
        let b = ny.rem_euclid(m) as usize;
        self.entries[b * self.m + a]
    }

    /// Physical wavevector of signed mode numbers.
    pub fn wavevector(&self, nx: i64, ny: i64) -> [f64; 2] {
        let s = PI / self.half_width;
        [s * nx as f64, s * ny as f64]
    }
}

/// `i k^perp / |k|^2` for `k != 0` and zero at `k = 0`, with `k = (pi / L) n`.
///
/// With the transform convention of [`crate::fft`] (derivatives act as
/// `-i k`) this is exactly the symbol of convolution with
/// `x^perp / (2 pi |x|^2)`.
pub fn periodic_multiplier(half_width: f64, m: usize) -> Result<MultiplierTable> {
    if m < 4 || m % 2 != 0 {
        return Err(Error::InvalidSpec(format!("mode cutoff {m} must be even and at least 4")));
    }
    if !(half_width > 0.0) {
        return Err(Error::InvalidSpec(format!("half-width must be positive, got {half_width}")));
    }
    Ok(multiplier_table(half_width, m))
}

fn multiplier_table(half_width: f64, m: usize) -> MultiplierTable {
    let s = PI / half_width;
    let mut entries = vec![[Complex64::new(0.0, 0.0); 2]; m * m];
    for b in 0..m {
        for a in 0..m {
            let kx = s * fft::mode(a, m) as f64;
            let ky = s * fft::mode(b, m) as f64;
            let k2 = kx * kx + ky * ky;
            if k2 == 0.0 {
                continue;
            }
            entries[b * m + a] = [Complex64::new(0.0, -ky / k2), Complex64::new(0.0, kx / k2)];
        }
    }
    MultiplierTable { half_width, m, entries }
}

/// Exponent choices witnessing the (K_r)-type integrability condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub family: String,
    #[serde(with = "crate::serde_ext::exponent")]
    pub r: f64,
    pub split: String,
    #[serde(with = "crate::serde_ext::exponent")]
    pub p1: f64,
    #[serde(with = "crate::serde_ext::exponent")]
    pub q1: f64,
    #[serde(with = "crate::serde_ext::exponent")]
    pub p2: f64,
    #[serde(with = "crate::serde_ext::exponent")]
    pub q2: f64,
    pub satisfied: bool,
    #[serde(with = "crate::serde_ext::exponent")]
    pub margin: f64,
}

/// Local integrability orders: `|K| ~ |x|^{-near}` and `|div K| ~ |x|^{-near_div}` at 0.
fn singularity_orders(spec: &KernelSpec) -> Option<(f64, f64)> {
    match (&spec.family, spec.regularization) {
        (Family::Zero { .. }, _) => None,
        (_, Regularization::Blob { .. } | Regularization::Mollified { .. }) => Some((0.0, 0.0)),
        (Family::BiotSavart, Regularization::None) => Some((1.0, 0.0)),
        (Family::PowerLaw { alpha, .. }, Regularization::None) => Some((alpha - 1.0, *alpha)),
    }
}

/// Check `K = K_1 + K_2` with
/// `d/p1 + 2/q1 + 2/r < 2` (for `K_1` and `div K_1`) and `d/p2 + 2/q2 + 1/r < 1`,
/// splitting at `|x| = 1`.
///
/// Kernels are autonomous, so `q1 = q2 = inf`, which makes both inequalities
/// strict. The far field is bounded. Two assignments are tried: near part in
/// the `K_1` slot (which needs `div K_1` integrable too) or near part in the
/// `K_2` slot with the far part in `K_1` (smooth cut, bounded divergence).
/// The report keeps the assignment with the larger margin and one exponent
/// witness from the open feasible range.
pub fn admissibility_report(spec: &KernelSpec, r: f64) -> Result<AdmissibilityReport> {
    spec.validate()?;
    if !(r > 1.0) || r.is_nan() {
        return Err(Error::InvalidSpec(format!("r must lie in (1, inf], got {r}")));
    }
    let d = spec.dim() as f64;
    let inv_r = if r.is_infinite() { 0.0 } else { 1.0 / r };
    let family = spec.family.name().to_string();
    let Some((near, near_div)) = singularity_orders(spec) else {
        return Ok(AdmissibilityReport {
            family,
            r,
            split: "K = 0: both parts vanish".into(),
            p1: f64::INFINITY,
            q1: f64::INFINITY,
            p2: f64::INFINITY,
            q2: f64::INFINITY,
            satisfied: true,
            margin: f64::INFINITY,
        });
    };

    // (infimum of d/p, slack of the strict inequality at that infimum)
    let near_in_k1 = near.max(near_div);
    let slack_a1 = 2.0 - 2.0 * inv_r - near_in_k1;
    let slack_a2 = 1.0 - inv_r;
    let slack_b2 = 1.0 - inv_r - near;
    let slack_b1 = 2.0 - 2.0 * inv_r;

    // The infimum is attained (p = inf) only for bounded parts.
    let witness = |inf_dp: f64, slack: f64| -> (f64, f64) {
        if inf_dp == 0.0 {
            (f64::INFINITY, slack)
        } else if slack > 0.0 {
            let dp = inf_dp + 0.5 * slack;
            (d / dp, 0.5 * slack)
        } else {
            (d / inf_dp, slack)
        }
    };

    let (p1a, m1a) = witness(near_in_k1, slack_a1);
    let margin_a = m1a.min(slack_a2);
    let (p2b, m2b) = witness(near, slack_b2);
    let margin_b = m2b.min(slack_b1);

    const EPS: f64 = 1e-12;
    let report = if margin_a >= margin_b {
        AdmissibilityReport {
            family,
            r,
            split: "K1 = K 1_{|x|<=1} (with div K1), K2 = K 1_{|x|>1} bounded".into(),
            p1: p1a,
            q1: f64::INFINITY,
            p2: f64::INFINITY,
            q2: f64::INFINITY,
            satisfied: margin_a > EPS,
            margin: margin_a,
        }
    } else {
        AdmissibilityReport {
            family,
            r,
            split: "K1 = smooth far part (bounded with bounded divergence), K2 = near part chi_{|x|<=1} K".into(),
            p1: f64::INFINITY,
            q1: f64::INFINITY,
            p2: p2b,
            q2: f64::INFINITY,
            satisfied: margin_b > EPS,
            margin: margin_b,
        }
    };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn biot_savart_unit_point() {
        let k = eval(&KernelSpec::biot_savart(), &[1.0, 0.0]).unwrap();
        assert!(close(&k, &[0.0, 1.0 / (2.0 * PI)], 1e-15));
        assert!((k[1] - 0.159155).abs() < 1e-6);
    }

    #[test]
    fn blob_is_zero_at_origin() {
        for &delta in &[1e-3, 0.1, 2.0] {
            let k = eval(&KernelSpec::blob_biot_savart(delta), &[0.0, 0.0]).unwrap();
            assert_eq!(k, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn attractive_power_law_points_inward() {
        let k = eval(&KernelSpec::power_law(1.5, Sign::Attractive), &[1.0, 0.0]).unwrap();
        assert!(close(&k, &[-1.0, 0.0], 1e-15));
    }

    #[test]
    fn singular_evaluation_is_an_error() {
        assert!(matches!(eval(&KernelSpec::biot_savart(), &[0.0, 0.0]), Err(Error::SingularEvaluation)));
        assert!(matches!(
            eval(&KernelSpec::power_law(1.2, Sign::Repulsive), &[0.0, 0.0]),
            Err(Error::SingularEvaluation)
        ));
        assert_eq!(eval(&KernelSpec::zero(), &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(KernelSpec::power_law(2.0, Sign::Repulsive).validate().is_err());
        assert!(KernelSpec::power_law(1.0, Sign::Repulsive).validate().is_err());
        assert!(KernelSpec::blob_biot_savart(0.0).validate().is_err());
        assert!(KernelSpec::biot_savart()
            .with_regularization(Regularization::Mollified { epsilon: -1.0 })
            .validate()
            .is_err());
        assert!(KernelSpec::power_law(1.5, Sign::Repulsive)
            .with_domain(Domain::Periodic { half_width: 1.0, mode_cutoff: 16 })
            .validate()
            .is_err());
    }

    #[test]
    fn blob_converges_quadratically() {
        let x = [0.7, -0.4];
        let exact = eval(&KernelSpec::biot_savart(), &x).unwrap();
        let deltas = [1e-1, 1e-2, 1e-3, 1e-4];
        let errs: Vec<f64> = deltas
            .iter()
            .map(|&d| {
                let k = eval(&KernelSpec::blob_biot_savart(d), &x).unwrap();
                ((k[0] - exact[0]).powi(2) + (k[1] - exact[1]).powi(2)).sqrt()
            })
            .collect();
        let lx: Vec<f64> = deltas.iter().map(|d| d.ln()).collect();
        let ly: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
        let slope = quad::fit_slope(&lx, &ly);
        assert!(slope >= 1.9, "slope {slope}");
    }

    #[test]
    fn mollified_biot_savart_matches_radial_quadrature() {
        // Biot-Savart is the rotated alpha = 2 radial field divided by 2 pi.
        let eps = 0.3;
        for &s in &[0.05, 0.3, 0.9, 2.5] {
            let closed = eval(
                &KernelSpec::biot_savart().with_regularization(Regularization::Mollified { epsilon: eps }),
                &[s, 0.0],
            )
            .unwrap()[1];
            let quadrature = mollified_power_law_magnitude(2.0, 2, eps, s) / (2.0 * PI);
            assert!((closed - quadrature).abs() < 1e-8 * closed.abs().max(1e-3), "s={s}: {closed} vs {quadrature}");
        }
    }

    #[test]
    fn mollified_power_law_approaches_kernel_far_out() {
        for dim in [2usize, 3] {
            let spec = KernelSpec {
                family: Family::PowerLaw { alpha: 1.5, sign: Sign::Repulsive, dim },
                regularization: Regularization::Mollified { epsilon: 0.05 },
                domain: Domain::FreeSpace,
            };
            let k = Kernel::new(spec).unwrap();
            let mut x = vec![0.0; dim];
            x[0] = 2.0;
            let got = k.eval(&x).unwrap()[0];
            let exact = 2.0f64.powf(-0.5);
            // second-order smoothing error ~ eps^2 / s^2
            assert!((got - exact).abs() < 2e-3 * exact, "dim {dim}: {got} vs {exact}");
            // compact support
            x[0] = 2.0 / 0.05 + 1.0;
            assert_eq!(k.eval(&x).unwrap()[0], 0.0);
        }
    }

    #[test]
    fn three_dimensional_mollified_profile_matches_direct_quadrature() {
        // Independent route: 3D tensor Gauss-Hermite expectation of K(s e1 - eps Z)
        // at a point where the Gaussian stays away from the singularity.
        let (alpha, eps, s) = (1.4, 0.1, 1.0);
        let (nodes, weights) = quad::gauss_hermite(24);
        let mut acc = 0.0;
        for (a, wa) in nodes.iter().zip(&weights) {
            for (b, wb) in nodes.iter().zip(&weights) {
                for (c, wc) in nodes.iter().zip(&weights) {
                    let y = [s + std::f64::consts::SQRT_2 * eps * a, std::f64::consts::SQRT_2 * eps * b, std::f64::consts::SQRT_2 * eps * c];
                    let r = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
                    acc += wa * wb * wc * y[0] * r.powf(-alpha);
                }
            }
        }
        let oracle = acc / PI.powf(1.5);
        let got = mollified_power_law_magnitude(alpha, 3, eps, s);
        assert!((got - oracle).abs() < 1e-8, "{got} vs {oracle}");
    }

    #[test]
    fn multiplier_entries() {
        let t = periodic_multiplier(PI, 16).unwrap();
        let [ux, uy] = t.at(1, 0);
        assert!((ux - Complex64::new(0.0, 0.0)).norm() < 1e-15);
        assert!((uy - Complex64::new(0.0, 1.0)).norm() < 1e-15);
        assert_eq!(t.at(0, 0), [Complex64::new(0.0, 0.0); 2]);
        // Nyquist modes are stored at +M/2
        for nx in -7..=8 {
            for ny in -7..=8 {
                let k = t.wavevector(nx, ny);
                let [a, b] = t.at(nx, ny);
                assert!((a * k[0] + b * k[1]).norm() < 1e-15 * (a.norm() + b.norm()) * (k[0].abs() + k[1].abs()) + 1e-300);
            }
        }
        assert!(periodic_multiplier(1.0, 3).is_err());
    }

    #[test]
    fn multiplier_agrees_with_finite_difference_poisson_solve() {
        // Independent route: solve Lap psi = v on the 5-point stencil by Jacobi
        // iteration, take u = grad^perp psi = (-d_y psi, d_x psi) by centered
        // differences, and compare with the spectral velocity. Both discretize
        // the same operator, so they agree up to O(h^2).
        let m = 32usize;
        let l = PI;
        let h = 2.0 * l / m as f64;
        let node = |a: usize| -l + a as f64 * h;
        let v: Vec<f64> = (0..m * m).map(|k| node(k % m).cos() * (2.0 * node(k / m)).sin()).collect();
        let idx = |a: usize, b: usize| (b % m) * m + (a % m);
        let mut psi = vec![0.0; m * m];
        for _ in 0..6000 {
            let mut next = psi.clone();
            for b in 0..m {
                for a in 0..m {
                    let nb = psi[idx(a + 1, b)] + psi[idx(a + m - 1, b)] + psi[idx(a, b + 1)] + psi[idx(a, b + m - 1)];
                    next[idx(a, b)] = 0.25 * (nb - h * h * v[idx(a, b)]);
                }
            }
            psi = next;
        }
        let t = periodic_multiplier(l, m).unwrap();
        let fft2 = Fft2::new(m);
        let mut vh: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        fft2.forward(&mut vh);
        let mut ux: Vec<Complex64> = vh.iter().zip(&t.entries).map(|(c, e)| c * e[0]).collect();
        let mut uy: Vec<Complex64> = vh.iter().zip(&t.entries).map(|(c, e)| c * e[1]).collect();
        fft2.backward(&mut ux);
        fft2.backward(&mut uy);
        let mut worst: f64 = 0.0;
        for b in 0..m {
            for a in 0..m {
                let fx = -(psi[idx(a, b + 1)] - psi[idx(a, b + m - 1)]) / (2.0 * h);
                let fy = (psi[idx(a + 1, b)] - psi[idx(a + m - 1, b)]) / (2.0 * h);
                worst = worst.max((fx - ux[idx(a, b)].re).abs()).max((fy - uy[idx(a, b)].re).abs());
            }
        }
        assert!(worst < 0.02, "max deviation {worst}");
        // exact velocity for this v: psi = -v / 5, u = (2 cos x cos 2y, sin x sin 2y) / 5
        let (a, b) = (5usize, 11usize);
        let (x, y) = (node(a), node(b));
        assert!((ux[idx(a, b)].re - 2.0 * x.cos() * (2.0 * y).cos() / 5.0).abs() < 1e-12);
        assert!((uy[idx(a, b)].re - x.sin() * (2.0 * y).sin() / 5.0).abs() < 1e-12);
    }

    #[test]
    fn periodic_kernel_matches_free_space_near_origin() {
        let l = 8.0;
        let spec = KernelSpec::biot_savart().with_domain(Domain::Periodic { half_width: l, mode_cutoff: 256 });
        let k = Kernel::new(spec).unwrap();
        let free = KernelSpec::biot_savart();
        let area = 4.0 * l * l;
        for &(rad, ang) in &[(0.05, 0.3), (0.25, 1.9), (0.6, -2.2), (1.0, 0.7), (1.0, 0.0)] {
            let x = [rad * f64::cos(ang), rad * f64::sin(ang)];
            let p = k.eval(&x).unwrap();
            let f = eval(&free, &x).unwrap();
            let fnorm = (f[0] * f[0] + f[1] * f[1]).sqrt();
            // free space plus the neutralizing background rotation -x^perp / (2A)
            let g = [f[0] + x[1] / (2.0 * area), f[1] - x[0] / (2.0 * area)];
            let rel = ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2)).sqrt() / fnorm;
            assert!(rel < 1e-3, "|x|={rad}: rel {rel}");
            if rad <= l / 32.0 {
                let rel_free = ((p[0] - f[0]).powi(2) + (p[1] - f[1]).powi(2)).sqrt() / fnorm;
                assert!(rel_free < 1e-3, "|x|={rad}: rel_free {rel_free}");
            }
        }
    }

    #[test]
    fn periodic_kernel_rejects_points_outside_cell() {
        let spec = KernelSpec::blob_biot_savart(0.1).with_domain(Domain::Periodic { half_width: 1.0, mode_cutoff: 16 });
        let k = Kernel::new(spec).unwrap();
        assert!(matches!(k.eval(&[1.0, 0.0]), Err(Error::DomainMismatch { .. })));
        assert!(k.eval(&[-1.0, 0.5]).is_ok());
    }

    #[test]
    fn periodic_kernel_is_periodic_across_the_cell_edge() {
        let l = 2.0;
        let spec = KernelSpec::biot_savart().with_domain(Domain::Periodic { half_width: l, mode_cutoff: 128 });
        let k = Kernel::new(spec).unwrap();
        let a = k.eval(&[-l, 0.37]).unwrap();
        let b = k.eval(&[l - 1e-12, 0.37]).unwrap();
        // agreement up to the bilinear interpolation error of the correction table
        assert!(close(&a, &b, 1e-5), "{a:?} vs {b:?}");
    }

    #[test]
    fn admissibility_examples() {
        let bs = KernelSpec::biot_savart();
        let r3 = admissibility_report(&bs, 3.0).unwrap();
        assert!(r3.satisfied && r3.margin > 0.0);
        assert!(!admissibility_report(&bs, 2.0).unwrap().satisfied);
        let z = admissibility_report(&KernelSpec::zero(), 1.5).unwrap();
        assert!(z.satisfied && z.margin.is_infinite());
        assert!(admissibility_report(&bs, 1.0).is_err());
        let json = serde_json::to_value(&r3).unwrap();
        for key in ["family", "r", "p1", "q1", "p2", "q2", "satisfied", "margin"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        assert_eq!(json["q1"], "inf");
    }

    #[test]
    fn witness_satisfies_the_strict_inequalities() {
        for spec in [KernelSpec::biot_savart(), KernelSpec::power_law(1.3, Sign::Attractive), KernelSpec::blob_biot_savart(0.1)] {
            for &r in &[1.5, 2.5, 4.0, 10.0, f64::INFINITY] {
                let rep = admissibility_report(&spec, r).unwrap();
                if !rep.satisfied {
                    continue;
                }
                let inv_r = if r.is_infinite() { 0.0 } else { 1.0 / r };
                let d = spec.dim() as f64;
                let dp1 = if rep.p1.is_infinite() { 0.0 } else { d / rep.p1 };
                let dp2 = if rep.p2.is_infinite() { 0.0 } else { d / rep.p2 };
                assert!(dp1 + 2.0 * inv_r < 2.0);
                assert!(dp2 + inv_r < 1.0);
            }
        }
    }

    proptest! {
        #[test]
        fn kernels_are_odd(x in -3.0f64..3.0, y in -3.0f64..3.0, delta in 0.01f64..1.0, alpha in 1.05f64..1.95) {
            prop_assume!(x * x + y * y > 1e-12);
            let specs = [
                KernelSpec::biot_savart(),
                KernelSpec::blob_biot_savart(delta),
                KernelSpec::biot_savart().with_regularization(Regularization::Mollified { epsilon: delta }),
                KernelSpec::power_law(alpha, Sign::Attractive),
                KernelSpec::power_law(alpha, Sign::Repulsive).with_regularization(Regularization::Blob { delta }),
                KernelSpec::zero(),
            ];
            for spec in &specs {
                let a = eval(spec, &[x, y]).unwrap();
                let b = eval(spec, &[-x, -y]).unwrap();
                prop_assert!(a[0] == -b[0] && a[1] == -b[1]);
            }
        }

        #[test]
        fn biot_savart_is_perpendicular(x in -3.0f64..3.0, y in -3.0f64..3.0, delta in 0.01f64..1.0) {
            prop_assume!(x * x + y * y > 1e-12);
            for spec in [KernelSpec::biot_savart(), KernelSpec::blob_biot_savart(delta)] {
                let k = eval(&spec, &[x, y]).unwrap();
                // zero up to the rounding of the two products
                let scale = (k[0] * x).abs() + (k[1] * y).abs();
                prop_assert!((k[0] * x + k[1] * y).abs() <= 4.0 * f64::EPSILON * scale);
            }
        }

        #[test]
        fn admissibility_is_monotone_in_r(alpha in 1.05f64..1.95, r0 in 1.01f64..20.0, bump in 0.0f64..10.0) {
            for spec in [KernelSpec::biot_savart(), KernelSpec::power_law(alpha, Sign::Repulsive)] {
                let a = admissibility_report(&spec, r0).unwrap();
                let b = admissibility_report(&spec, r0 + bump).unwrap();
                prop_assert!(!a.satisfied || b.satisfied);
                prop_assert!(b.margin >= a.margin - 1e-15);
            }
        }
    }
}
