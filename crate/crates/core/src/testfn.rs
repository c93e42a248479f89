//! Bounded test functions with known sup-norms and Gaussian expectations.

use serde::{Deserialize, Serialize};

use crate::quad;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TestFunction {
    Constant { c: f64 },
    /// `exp(-|x - center|^2 / (2 scale^2))`
    Bump { center: Vec<f64>, scale: f64 },
    /// `prod_c f_c(pi n_c x_c / L)` with `f_c` sine or cosine.
    Trig { n: Vec<u32>, sine: Vec<bool>, half_width: f64 },
    /// `tanh(x_axis / scale)`
    SmoothClamp { axis: usize, scale: f64 },
    /// `clamp(x_axis / scale, -1, 1)`
    HardClamp { axis: usize, scale: f64 },
}

impl TestFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::Constant { c } => *c,
            TestFunction::Bump { center, scale } => {
                let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                (-r2 / (2.0 * scale * scale)).exp()
            }
            TestFunction::Trig { n, sine, half_width } => {
                let mut p = 1.0;
                for ((xc, &k), &s) in x.iter().zip(n).zip(sine) {
                    let a = std::f64::consts::PI * k as f64 / half_width * xc;
                    p *= if s { a.sin() } else { a.cos() };
                }
                p
            }
            TestFunction::SmoothClamp { axis, scale } => (x[*axis] / scale).tanh(),
            TestFunction::HardClamp { axis, scale } => (x[*axis] / scale).clamp(-1.0, 1.0),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match self {
            TestFunction::Constant { c } => c.abs(),
            TestFunction::Trig { n, sine, .. } if n.iter().zip(sine).any(|(&k, &s)| s && k == 0) => 0.0,
            _ => 1.0,
        }
    }

    /// Short identifier without commas, safe as a CSV field.
    pub fn id(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|c| format!("{c}")).collect::<Vec<_>>().join(":");
        match self {
            TestFunction::Constant { c } => format!("const:{c}"),
            TestFunction::Bump { center, scale } => format!("bump:{}:s{scale}", join(center)),
            TestFunction::Trig { n, sine, half_width } => {
                let parts: Vec<String> =
                    n.iter().zip(sine).map(|(k, &s)| format!("{}{k}", if s { "sin" } else { "cos" })).collect();
                format!("trig:{}:L{half_width}", parts.join(":"))
            }
            TestFunction::SmoothClamp { axis, scale } => format!("tanh:x{}:s{scale}", axis + 1),
            TestFunction::HardClamp { axis, scale } => format!("clamp:x{}:s{scale}", axis + 1),
        }
    }

    /// `E phi(X)` for `X ~ N(mean, sigma^2 I)`.
    pub fn gaussian_expectation(&self, mean: &[f64], sigma: f64) -> f64 {
        let s2 = sigma * sigma;
        match self {
            TestFunction::Constant { c } => *c,
            TestFunction::Bump { center, scale } => {
                let b2 = scale * scale;
                mean.iter()
                    .zip(center)
                    .map(|(m, c)| (b2 / (b2 + s2)).sqrt() * (-(m - c) * (m - c) / (2.0 * (b2 + s2))).exp())
                    .product()
            }
            TestFunction::Trig { n, sine, half_width } => mean
                .iter()
                .zip(n)
                .zip(sine)
                .map(|((m, &k), &s)| {
                    let a = std::f64::consts::PI * k as f64 / half_width;
                    let damp = (-0.5 * a * a * s2).exp();
                    damp * if s { (a * m).sin() } else { (a * m).cos() }
                })
                .product(),
            TestFunction::SmoothClamp { axis, scale } => {
                // tanh has poles near the real axis, which slows Gauss-Hermite
                // down; composite Simpson on the standardized variable is robust.
                let m = mean[*axis];
                quad::simpson(|z| ((m + sigma * z) / scale).tanh() * quad::normal_pdf(z), -13.0, 13.0, 6000)
            }
            TestFunction::HardClamp { axis, scale } => {
                let mu = mean[*axis] / scale;
                let tau = sigma / scale;
                let a = (-1.0 - mu) / tau;
                let b = (1.0 - mu) / tau;
                let (fa, fb) = (quad::normal_cdf(a), quad::normal_cdf(b));
                (1.0 - fb) - fa + mu * (fb - fa) + tau * (quad::normal_pdf(a) - quad::normal_pdf(b))
            }
        }
    }

    /// `E phi(X)` under a Gaussian mixture `(mass, mean, sigma)`.
    pub fn mixture_expectation(&self, components: &[(f64, Vec<f64>, f64)]) -> f64 {
        components.iter().map(|(m, mean, s)| m * self.gaussian_expectation(mean, *s)).sum()
    }

    /// The mixture expectation after running the heat flow `d_t rho = Lap rho` for time `t`.
    pub fn heat_expectation(&self, components: &[(f64, Vec<f64>, f64)], t: f64) -> f64 {
        let evolved: Vec<(f64, Vec<f64>, f64)> =
            components.iter().map(|(m, mean, s)| (*m, mean.clone(), (s * s + 2.0 * t).sqrt())).collect();
        self.mixture_expectation(&evolved)
    }
}
