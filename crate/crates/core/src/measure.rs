//! Signed empirical measures, gridded densities and their functionals, pairing
//! combinatorics, and the product-law concentration experiment.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::particles::{gaussian_density, ParticleState};
use crate::quad;
use crate::rng;
use crate::testfn::TestFunction;
use crate::weights::WeightSequence;

/// `(1/N) sum_i w_i delta_{x_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedEmpiricalMeasure {
    pub dim: usize,
    /// Flat atom positions.
    pub atoms: Vec<f64>,
    pub masses: Vec<f64>,
    pub total_variation: f64,
}

impl SignedEmpiricalMeasure {
    pub fn new(atoms: Vec<f64>, dim: usize, masses: Vec<f64>) -> Result<Self> {
        if dim == 0 || atoms.len() != masses.len() * dim {
            return Err(Error::InvalidSpec("atom coordinates do not match the masses".into()));
        }
        let total_variation = masses.iter().map(|m| m.abs()).sum();
        Ok(Self { dim, atoms, masses, total_variation })
    }

    /// Atoms at the particle positions with masses `w_i / N`.
    pub fn from_state(state: &ParticleState, w: &[f64]) -> Result<Self> {
        if w.len() != state.len() {
            return Err(Error::InvalidSpec(format!("{} weights for {} particles", w.len(), state.len())));
        }
        let n = w.len() as f64;
        Self::new(state.positions.clone(), state.dim, w.iter().map(|x| x / n).collect())
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.atoms[i * self.dim..(i + 1) * self.dim]
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// `sum_i m_i phi(x_i)`
    pub fn pair<F: Fn(&[f64]) -> f64>(&self, phi: F) -> f64 {
        self.atoms.chunks_exact(self.dim).zip(&self.masses).map(|(x, m)| m * phi(x)).sum()
    }

    /// `a mu + b nu` as one atomic measure.
    pub fn combine(a: f64, mu: &Self, b: f64, nu: &Self) -> Result<Self> {
        if mu.dim != nu.dim {
            return Err(Error::InvalidSpec("measures live in different dimensions".into()));
        }
        let mut atoms = mu.atoms.clone();
        atoms.extend_from_slice(&nu.atoms);
        let masses = mu.masses.iter().map(|m| a * m).chain(nu.masses.iter().map(|m| b * m)).collect();
        Self::new(atoms, mu.dim, masses)
    }
}

pub fn pair(mu: &SignedEmpiricalMeasure, phi: &TestFunction) -> f64 {
    mu.pair(|x| phi.eval(x))
}

/// Values on the nodes `origin + (i h, j h)`, stored at `j * nx + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub origin: [f64; 2],
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
    pub mass: f64,
}

impl DensityGrid {
    pub fn new(origin: [f64; 2], h: f64, nx: usize, ny: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != nx * ny || nx == 0 || ny == 0 {
            return Err(Error::InvalidSpec(format!("{} values for a {nx} x {ny} grid", values.len())));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidSpec(format!("grid spacing must be positive, got {h}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid values".into()));
        }
        let mass = values.iter().sum::<f64>() * h * h;
        Ok(Self { origin, h, nx, ny, values, mass })
    }

    pub fn from_fn<F: Fn(&[f64]) -> f64>(origin: [f64; 2], h: f64, nx: usize, ny: usize, f: F) -> Result<Self> {
        let mut values = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                values.push(f(&[origin[0] + i as f64 * h, origin[1] + j as f64 * h]));
            }
        }
        Self::new(origin, h, nx, ny, values)
    }

    /// `n x n` nodes spanning `[-radius, radius]` inclusive.
    pub fn centered<F: Fn(&[f64]) -> f64>(radius: f64, n: usize, f: F) -> Result<Self> {
        let h = 2.0 * radius / (n - 1) as f64;
        Self::from_fn([-radius, -radius], h, n, n, f)
    }

    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        [self.origin[0] + i as f64 * self.h, self.origin[1] + j as f64 * self.h]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    /// Trapezoid weight of node `(i, j)`, including `h^2`.
    fn weight(&self, i: usize, j: usize) -> f64 {
        let wi = if i == 0 || i + 1 == self.nx { 0.5 } else { 1.0 };
        let wj = if j == 0 || j + 1 == self.ny { 0.5 } else { 1.0 };
        wi * wj * self.h * self.h
    }

    /// Trapezoid rule for `int g(x, f(x)) dx`.
    pub fn integrate<F: Fn([f64; 2], f64) -> f64>(&self, g: F) -> f64 {
        let mut acc = 0.0;
        for j in 0..self.ny {
            for i in 0..self.nx {
                acc += self.weight(i, j) * g(self.node(i, j), self.at(i, j));
            }
        }
        acc
    }

    pub fn pair(&self, phi: &TestFunction) -> f64 {
        self.integrate(|x, f| f * phi.eval(&x))
    }

    /// `(int |f|^p)^{1/p}`
    pub fn lp_norm(&self, p: f64) -> f64 {
        self.integrate(|_, f| f.abs().powf(p)).powf(1.0 / p)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `x,y,value` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,value\n");
        for j in 0..self.ny {
            for i in 0..self.nx {
                let [x, y] = self.node(i, j);
                let _ = writeln!(out, "{x},{y},{}", self.at(i, j));
            }
        }
        out
    }

    fn check_density(&self) -> Result<()> {
        let m = self.min();
        if m < -1e-9 {
            return Err(Error::NegativeDensity(m));
        }
        Ok(())
    }
}

/// Placement of a KDE output grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: [f64; 2],
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    /// `n x n` nodes spanning `[-radius, radius]`.
    pub fn centered(radius: f64, n: usize) -> Self {
        Self { origin: [-radius, -radius], h: 2.0 * radius / (n - 1) as f64, nx: n, ny: n }
    }
}

/// `N^{-1/6}`
pub fn default_bandwidth(n: usize) -> f64 {
    (n as f64).powf(-1.0 / 6.0)
}

/// Gaussian kernel density estimate of a 2D signed measure.
pub fn kde(mu: &SignedEmpiricalMeasure, bandwidth: f64, grid: &GridSpec) -> Result<DensityGrid> {
    if mu.dim != 2 {
        return Err(Error::InvalidSpec("KDE grids are two-dimensional".into()));
    }
    if !(bandwidth > 0.0) {
        return Err(Error::InvalidSpec(format!("bandwidth must be positive, got {bandwidth}")));
    }
    if bandwidth < 2.0 * grid.h {
        return Err(Error::GridTooCoarse { bandwidth, cell: grid.h });
    }
    let (nx, ny) = (grid.nx, grid.ny);
    let mut values = vec![0.0; nx * ny];
    let reach = 9.0 * bandwidth;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * bandwidth * bandwidth);
    let mut gx = vec![0.0; nx];
    let mut gy = vec![0.0; ny];
    for (x, &m) in mu.atoms.chunks_exact(2).zip(&mu.masses) {
        if m == 0.0 {
            continue;
        }
        let span = |c: f64, o: f64, n: usize| {
            let lo = (((c - reach - o) / grid.h).floor().max(0.0) as usize).min(n);
            let hi = (((c + reach - o) / grid.h).ceil().max(-1.0) + 1.0).min(n as f64) as usize;
            (lo, hi.max(lo))
        };
        let (i0, i1) = span(x[0], grid.origin[0], nx);
        let (j0, j1) = span(x[1], grid.origin[1], ny);
        for i in i0..i1 {
            let d = grid.origin[0] + i as f64 * grid.h - x[0];
            gx[i] = (-d * d / (2.0 * bandwidth * bandwidth)).exp();
        }
        for j in j0..j1 {
            let d = grid.origin[1] + j as f64 * grid.h - x[1];
            gy[j] = m * norm * (-d * d / (2.0 * bandwidth * bandwidth)).exp();
        }
        for j in j0..j1 {
            let row = &mut values[j * nx..(j + 1) * nx];
            for i in i0..i1 {
                row[i] += gx[i] * gy[j];
            }
        }
    }
    DensityGrid::new(grid.origin, grid.h, nx, ny, values)
}

/// Relative floor used by [`fisher_estimate`] by default.
pub const FISHER_FLOOR: f64 = 1e-12;

/// `int |grad f|^2 / max(f, floor * max f)` with central differences and the trapezoid rule.
pub fn fisher_estimate(f: &DensityGrid, floor: f64) -> Result<f64> {
    f.check_density()?;
    if !(floor > 0.0) {
        return Err(Error::InvalidSpec(format!("Fisher floor must be positive, got {floor}")));
    }
    let (nx, ny, h) = (f.nx, f.ny, f.h);
    if nx < 3 || ny < 3 {
        return Err(Error::InvalidSpec("Fisher estimate needs at least 3 x 3 nodes".into()));
    }
    let lo = floor * f.max().max(0.0);
    let deriv = |a: f64, b: f64, c: f64, at_lo: bool, at_hi: bool| {
        if at_lo {
            (b - a) / h
        } else if at_hi {
            (b - a) / h
        } else {
            (c - a) / (2.0 * h)
        }
    };
    let mut acc = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let gx = if i == 0 {
                deriv(f.at(0, j), f.at(1, j), 0.0, true, false)
            } else if i + 1 == nx {
                deriv(f.at(i - 1, j), f.at(i, j), 0.0, false, true)
            } else {
                deriv(f.at(i - 1, j), 0.0, f.at(i + 1, j), false, false)
            };
            let gy = if j == 0 {
                deriv(f.at(i, 0), f.at(i, 1), 0.0, true, false)
            } else if j + 1 == ny {
                deriv(f.at(i, j - 1), f.at(i, j), 0.0, false, true)
            } else {
                deriv(f.at(i, j - 1), 0.0, f.at(i, j + 1), false, false)
            };
            let den = f.at(i, j).max(lo);
            if den > 0.0 {
                acc += f.weight(i, j) * (gx * gx + gy * gy) / den;
            }
        }
    }
    Ok(acc)
}

/// `int f log f` with `0 log 0 = 0`, trapezoid rule.
pub fn entropy_estimate(f: &DensityGrid) -> Result<f64> {
    f.check_density()?;
    Ok(f.integrate(|_, v| if v > 0.0 { v * v.ln() } else { 0.0 }))
}

/// `(1/N) sum_i |w_i| <x_i>^gamma` with `<x> = sqrt(1 + |x|^2)`; unit weights when `w` is `None`.
pub fn gamma_moment(points: &[f64], dim: usize, w: Option<&[f64]>, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidSpec(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    let n = points.len() / dim;
    if let Some(w) = w {
        if w.len() != n {
            return Err(Error::InvalidSpec(format!("{} weights for {n} points", w.len())));
        }
    }
    let mut acc = 0.0;
    for (i, x) in points.chunks_exact(dim).enumerate() {
        let r2: f64 = x.iter().map(|c| c * c).sum();
        let wi = w.map_or(1.0, |w| w[i].abs());
        acc += wi * (1.0 + r2).powf(0.5 * gamma);
    }
    Ok(acc / n as f64)
}

/// A partition of `{1..N}` into ordered pairs `i < j` plus at most one singleton.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingPartition {
    pub pairs: Vec<(usize, usize)>,
    pub singleton: Option<usize>,
}

pub const ENUMERATION_LIMIT: usize = 12;

/// `|S_N|`: `(N-1) |S_{N-2}|` for even `N`, `N |S_{N-2}|` for odd `N`; `None` on overflow.
pub fn count_pairings(n: usize) -> Option<u128> {
    let mut c: u128 = 1;
    let mut k = if n % 2 == 0 { 2 } else { 3 };
    while k <= n {
        let f = if k % 2 == 0 { k - 1 } else { k };
        c = c.checked_mul(f as u128)?;
        k += 2;
    }
    Some(c)
}

pub fn enumerate_pairings(n: usize) -> Result<Vec<PairingPartition>> {
    if n > ENUMERATION_LIMIT {
        return Err(Error::TooLarge { what: "pairing enumeration N", n, limit: ENUMERATION_LIMIT });
    }
    let mut out = Vec::new();
    let mut used = vec![false; n + 1];
    let mut current = PairingPartition { pairs: Vec::new(), singleton: None };
    fn rec(n: usize, used: &mut [bool], cur: &mut PairingPartition, out: &mut Vec<PairingPartition>) {
        let Some(a) = (1..=n).find(|&i| !used[i]) else {
            out.push(cur.clone());
            return;
        };
        let remaining = (1..=n).filter(|&i| !used[i]).count();
        used[a] = true;
        if remaining % 2 == 1 && cur.singleton.is_none() {
            cur.singleton = Some(a);
            rec(n, used, cur, out);
            cur.singleton = None;
        }
        for b in a + 1..=n {
            if !used[b] {
                used[b] = true;
                cur.pairs.push((a, b));
                rec(n, used, cur, out);
                cur.pairs.pop();
                used[b] = false;
            }
        }
        used[a] = false;
    }
    rec(n, &mut used, &mut current, &mut out);
    Ok(out)
}

/// Every pair `i < j` lies in exactly `|S_{N-2}|` partitions.
pub fn pair_multiplicity_check(n: usize) -> Result<bool> {
    let parts = enumerate_pairings(n)?;
    if n < 2 {
        return Ok(true);
    }
    let expected = count_pairings(n - 2).expect("small counts fit") as usize;
    let mut seen = vec![0usize; (n + 1) * (n + 1)];
    for p in &parts {
        for &(i, j) in &p.pairs {
            seen[i * (n + 1) + j] += 1;
        }
    }
    for i in 1..=n {
        for j in i + 1..=n {
            if seen[i * (n + 1) + j] != expected {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// `((x_i - x_j)/sqrt 2, (x_i + x_j)/sqrt 2)`
pub fn rotate_pair(xi: &[f64], xj: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let minus = xi.iter().zip(xj).map(|(a, b)| (a - b) * s).collect();
    let plus = xi.iter().zip(xj).map(|(a, b)| (a + b) * s).collect();
    (minus, plus)
}

/// The change of variables of a pairing: each pair `(i, j)` is rotated,
/// writing the difference into slot `i` and the sum into slot `j`.
pub fn pairing_map(p: &PairingPartition, x: &[f64], dim: usize) -> Vec<f64> {
    let mut y = x.to_vec();
    for &(i, j) in &p.pairs {
        let (a, b) = ((i - 1) * dim, (j - 1) * dim);
        let (m, s) = rotate_pair(&x[a..a + dim], &x[b..b + dim]);
        y[a..a + dim].copy_from_slice(&m);
        y[b..b + dim].copy_from_slice(&s);
    }
    y
}

/// Determinant of the Jacobian of `f` at `x` by central differences.
pub fn jacobian_determinant<F: Fn(&[f64]) -> Vec<f64>>(f: F, x: &[f64], step: f64) -> f64 {
    let n = x.len();
    let mut jac = vec![0.0; n * n];
    let mut xp = x.to_vec();
    for c in 0..n {
        xp[c] = x[c] + step;
        let fp = f(&xp);
        xp[c] = x[c] - step;
        let fm = f(&xp);
        xp[c] = x[c];
        for r in 0..n {
            jac[r * n + c] = (fp[r] - fm[r]) / (2.0 * step);
        }
    }
    determinant(jac, n)
}

/// LU with partial pivoting.
fn determinant(mut a: Vec<f64>, n: usize) -> f64 {
    let mut det = 1.0;
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs())).unwrap();
        if a[p * n + k] == 0.0 {
            return 0.0;
        }
        if p != k {
            for c in 0..n {
                a.swap(k * n + c, p * n + c);
            }
            det = -det;
        }
        let piv = a[k * n + k];
        det *= piv;
        for r in k + 1..n {
            let f = a[r * n + k] / piv;
            for c in k..n {
                a[r * n + c] -= f * a[k * n + c];
            }
        }
    }
    det
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMarginal {
    pub mean: Vec<f64>,
    pub sigma: f64,
}

/// Independent particles with Gaussian marginals and merging weights `w~`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductLawSpec {
    pub marginals: Vec<GaussianMarginal>,
    pub weights: WeightSequence,
}

impl ProductLawSpec {
    pub fn iid(n: usize, marginal: GaussianMarginal, weights: WeightSequence) -> Result<Self> {
        let s = Self { marginals: vec![marginal; n], weights };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.marginals.len() != self.weights.len() {
            return Err(Error::InvalidSpec(format!(
                "{} marginals for {} weights",
                self.marginals.len(),
                self.weights.len()
            )));
        }
        if self.marginals.iter().any(|m| !(m.sigma > 0.0)) {
            return Err(Error::InvalidSpec("marginal sigma must be positive".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.marginals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marginals.is_empty()
    }

    /// `g^N(x) = (1/N) sum_i w~_i f_i(x)`
    pub fn merged_density(&self, x: &[f64]) -> f64 {
        let n = self.len() as f64;
        self.marginals
            .iter()
            .zip(&self.weights.values)
            .map(|(m, w)| w * gaussian_density(x, &m.mean, m.sigma))
            .sum::<f64>()
            / n
    }

    /// `<phi, g^N>` in closed form.
    pub fn merged_pairing(&self, phi: &TestFunction) -> f64 {
        let n = self.len() as f64;
        self.marginals
            .iter()
            .zip(&self.weights.values)
            .map(|(m, w)| if *w == 0.0 { 0.0 } else { w * phi.gaussian_expectation(&m.mean, m.sigma) })
            .sum::<f64>()
            / n
    }
}

pub fn merged_measure(spec: &ProductLawSpec) -> impl Fn(&[f64]) -> f64 + '_ {
    move |x| spec.merged_density(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AzumaResult {
    pub samples: usize,
    pub epsilon: f64,
    pub exceedances: usize,
    pub frequency: f64,
    pub bound: f64,
    /// Binomial standard error of the frequency at the bound.
    pub stderr: f64,
    pub max_deviation: f64,
}

/// `2 exp(-N^2 eps^2 / (8 |phi|_inf^2 sum_i w~_i^2))`
pub fn azuma_bound(n: usize, eps: f64, sup_norm: f64, w: &[f64]) -> f64 {
    let s2: f64 = w.iter().map(|x| x * x).sum();
    if s2 == 0.0 || sup_norm == 0.0 {
        return 0.0;
    }
    let nf = n as f64;
    (2.0 * (-(nf * nf * eps * eps) / (8.0 * sup_norm * sup_norm * s2)).exp()).min(1.0)
}

/// Frequency of `|<phi, mu~_N> - <phi, g^N>| > eps` over independent draws of the product law.
pub fn azuma_gap(spec: &ProductLawSpec, phi: &TestFunction, samples: usize, eps: f64, seed: u64) -> Result<AzumaResult> {
    spec.validate()?;
    if samples < 1000 {
        return Err(Error::InvalidSpec(format!("at least 1000 samples required, got {samples}")));
    }
    let n = spec.len();
    let target = spec.merged_pairing(phi);
    let w = &spec.weights.values;
    let all_zero = w.iter().all(|&x| x == 0.0);
    let mut exceed = 0;
    let mut max_dev: f64 = 0.0;
    let mut x = vec![0.0; 3];
    for s in 0..samples {
        let dev = if all_zero {
            0.0
        } else {
            let mut g = rng::experiment_rng(seed, "nexdiff/azuma", s as u64);
            let mut acc = 0.0;
            for (m, wi) in spec.marginals.iter().zip(w) {
                let d = m.mean.len();
                rng::fill_normals(&mut g, &mut x[..d]);
                for c in 0..d {
                    x[c] = m.mean[c] + m.sigma * x[c];
                }
                if *wi != 0.0 {
                    acc += wi * phi.eval(&x[..d]);
                }
            }
            acc / n as f64 - target
        };
        max_dev = max_dev.max(dev.abs());
        if dev.abs() > eps {
            exceed += 1;
        }
    }
    let bound = azuma_bound(n, eps, phi.sup_norm(), w);
    Ok(AzumaResult {
        samples,
        epsilon: eps,
        exceedances: exceed,
        frequency: exceed as f64 / samples as f64,
        bound,
        stderr: (bound * (1.0 - bound) / samples as f64).sqrt(),
        max_deviation: max_dev,
    })
}

/// `int |K|^{r/(r-1)} F` for a 2D isotropic Gaussian `F` of width `sigma`,
/// using the radial symmetry of `|K|`.
pub fn kernel_moment(kernel: &Kernel, r: f64, sigma: f64) -> Result<f64> {
    if kernel.dim() != 2 {
        return Err(Error::InvalidSpec("kernel moment is implemented for d = 2".into()));
    }
    let q = if r.is_infinite() { 1.0 } else { r / (r - 1.0) };
    let smax = 14.0 * sigma;
    // s = u^2 removes the integrable singularity at 0
    let umax = smax.sqrt();
    let integrand = |u: f64| -> f64 {
        // the integrand is continuous in u; step off the origin where K may be singular
        let u = u.max(1e-9 * umax);
        let s = u * u;
        let k = kernel.eval(&[s, 0.0]).map(|v| (v[0] * v[0] + v[1] * v[1]).sqrt()).unwrap_or(0.0);
        let f = (-s * s / (2.0 * sigma * sigma)).exp() / (2.0 * std::f64::consts::PI * sigma * sigma);
        k.powf(q) * f * 2.0 * std::f64::consts::PI * s * 2.0 * u
    };
    Ok(quad::simpson(integrand, 0.0, umax, 20_000))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    use proptest::prelude::*;
    use std::f64::consts::{E, PI};

    fn gauss(sigma: f64) -> DensityGrid {
        DensityGrid::centered(8.0 * sigma, 256, |x| gaussian_density(x, &[0.0, 0.0], sigma)).unwrap()
    }

    #[test]
    fn pairing_examples() {
        let one = SignedEmpiricalMeasure::new(vec![0.0, 0.0], 2, vec![1.0]).unwrap();
        assert_eq!(one.pair(|_| 1.0), 1.0);
        let canc = SignedEmpiricalMeasure::new(vec![0.0, 0.0, 1.0, 0.0], 2, vec![0.5, -0.5]).unwrap();
        assert_eq!(canc.pair(|_| 1.0), 0.0);
        let m = SignedEmpiricalMeasure::new(vec![0.0, 0.0, 1.0, 0.0], 2, vec![1.0, -0.5]).unwrap();
        assert_eq!(m.pair(|x| x[0]), -0.5);
        assert_eq!(m.total_variation, 1.5);
    }

    #[test]
    fn total_variation_is_the_l1_weight_norm() {
        let s = ParticleState::new(vec![0.0; 8], 2).unwrap();
        let w = [1.0, -3.0, 0.5, 0.0];
        let mu = SignedEmpiricalMeasure::from_state(&s, &w).unwrap();
        assert!((mu.total_variation - crate::weights::lr_norm(&w, 1.0)).abs() < 1e-15);
    }

    #[test]
    fn kde_examples() {
        let grid = GridSpec::centered(8.0, 161);
        let one = SignedEmpiricalMeasure::new(vec![0.0, 0.0], 2, vec![1.0]).unwrap();
        let g = kde(&one, 1.0, &grid).unwrap();
        let c = g.at(80, 80);
        assert!((c - 1.0 / (2.0 * PI)).abs() < 1e-14);
        assert!((g.mass - 1.0).abs() < 1e-6);
        let two = SignedEmpiricalMeasure::new(vec![-3.0, 0.0, 3.0, 0.0], 2, vec![0.5, -0.5]).unwrap();
        let g = kde(&two, 0.6, &grid).unwrap();
        assert!(g.mass.abs() < 1e-6);
        assert!(g.at(80 - 30, 80) > 0.0 && g.at(80 + 30, 80) < 0.0);
        assert!(matches!(kde(&one, 0.1, &grid), Err(Error::GridTooCoarse { .. })));
    }

    #[test]
    fn fisher_and_entropy_of_gaussians() {
        for sigma in [0.5, 1.0, 2.0] {
            let g = gauss(sigma);
            let i = fisher_estimate(&g, FISHER_FLOOR).unwrap();
            let exact = 2.0 / (sigma * sigma);
            assert!(((i - exact) / exact).abs() < 1e-4, "sigma {sigma}: {i}");
            let h = entropy_estimate(&g).unwrap();
            assert!((h + (2.0 * PI * E * sigma * sigma).ln()).abs() < 1e-3, "sigma {sigma}: {h}");
        }
    }

    #[test]
    fn negative_grids_are_rejected() {
        let g = DensityGrid::centered(1.0, 5, |x| x[0]).unwrap();
        assert!(matches!(fisher_estimate(&g, 1e-12), Err(Error::NegativeDensity(_))));
        assert!(matches!(entropy_estimate(&g), Err(Error::NegativeDensity(_))));
    }

    #[test]
    fn fisher_of_a_product_is_the_sum_of_marginals() {
        let (s1, s2) = (0.7, 1.6);
        let r = 8.0 * s2;
        let g = DensityGrid::centered(r, 401, |x| gaussian_density(&x[..1], &[0.0], s1) * gaussian_density(&x[1..], &[0.0], s2))
            .unwrap();
        let i = fisher_estimate(&g, FISHER_FLOOR).unwrap();
        // independent 1D oracle: int f'^2 / f by Simpson on each marginal
        let one_d = |s: f64| {
            quad::simpson(
                |x| {
                    let f = gaussian_density(&[x], &[0.0], s);
                    let d = -x / (s * s) * f;
                    d * d / f
                },
                -12.0 * s,
                12.0 * s,
                4000,
            )
        };
        let oracle = one_d(s1) + one_d(s2);
        assert!(((i - oracle) / oracle).abs() < 1e-4, "{i} vs {oracle}");
    }

    #[test]
    fn lp_norm_scaling_exponent() {
        for p in [1.5, 2.0] {
            let sig = [0.5, 1.0, 2.0];
            let lx: Vec<f64> = sig.iter().map(|&s| fisher_estimate(&gauss(s), FISHER_FLOOR).unwrap().ln()).collect();
            let ly: Vec<f64> = sig.iter().map(|&s| gauss(s).lp_norm(p).ln()).collect();
            let slope = quad::fit_slope(&lx, &ly);
            let want = 2.0 * (1.0 - 1.0 / p) / 2.0;
            assert!(((slope - want) / want).abs() < 0.02, "p={p}: {slope} vs {want}");
        }
    }

    #[test]
    fn gamma_moment_examples() {
        assert_eq!(gamma_moment(&[0.0, 0.0], 2, None, 0.5).unwrap(), 1.0);
        let v = gamma_moment(&[0.0, 3f64.sqrt()], 2, None, 0.5).unwrap();
        assert!((v - 2f64.sqrt()).abs() < 1e-15);
        assert!(gamma_moment(&[0.0, 0.0], 2, None, 1.0).is_err());
        // 1e5 standard Gaussian samples against radial quadrature of E (1 + R^2)^{1/4}
        let s = crate::particles::sample_initial(&crate::particles::InitialLaw::standard_gaussian(2), 100_000, 11).unwrap();
        let mc = gamma_moment(&s.positions, 2, None, 0.5).unwrap();
        let oracle = quad::simpson(|r| (1.0 + r * r).powf(0.25) * r * (-0.5 * r * r).exp(), 0.0, 12.0, 4000);
        assert!(((mc - oracle) / oracle).abs() < 0.01, "{mc} vs {oracle}");
    }

    /// Brute force over permutations: distinct canonical pairings.
    fn brute_force_count(n: usize) -> usize {
        let mut perm: Vec<usize> = (1..=n).collect();
        let mut set = std::collections::BTreeSet::new();
        fn heap(k: usize, a: &mut Vec<usize>, set: &mut std::collections::BTreeSet<(Vec<(usize, usize)>, Option<usize>)>) {
            if k == 1 {
                let mut pairs: Vec<(usize, usize)> =
                    a.chunks_exact(2).map(|c| (c[0].min(c[1]), c[0].max(c[1]))).collect();
                pairs.sort();
                let single = if a.len() % 2 == 1 { a.last().copied() } else { None };
                set.insert((pairs, single));
                return;
            }
            for i in 0..k {
                heap(k - 1, a, set);
                if k % 2 == 0 {
                    a.swap(i, k - 1);
                } else {
                    a.swap(0, k - 1);
                }
            }
        }
        heap(n, &mut perm, &mut set);
        set.len()
    }

    #[test]
    fn pairing_counts() {
        let expected = [1u128, 3, 3, 15, 15, 105, 105, 945, 945, 10395, 10395];
        for (k, n) in (2..=12).enumerate() {
            assert_eq!(count_pairings(n), Some(expected[k]));
            assert_eq!(enumerate_pairings(n).unwrap().len() as u128, expected[k], "N={n}");
        }
        for n in 2..=9 {
            assert_eq!(brute_force_count(n) as u128, count_pairings(n).unwrap(), "N={n}");
        }
        assert!(matches!(enumerate_pairings(13), Err(Error::TooLarge { .. })));
        assert!(count_pairings(200).is_none());
    }

    #[test]
    fn pairings_cover_every_index_once() {
        for n in 2..=8 {
            for p in enumerate_pairings(n).unwrap() {
                let mut seen = vec![0; n + 1];
                for &(i, j) in &p.pairs {
                    assert!(i < j);
                    seen[i] += 1;
                    seen[j] += 1;
                }
                if let Some(s) = p.singleton {
                    seen[s] += 1;
                }
                assert!(seen[1..].iter().all(|&c| c == 1));
                assert_eq!(p.singleton.is_some(), n % 2 == 1);
            }
        }
    }

    #[test]
    fn multiplicity() {
        for n in 2..=10 {
            assert!(pair_multiplicity_check(n).unwrap(), "N={n}");
        }
    }

    #[test]
    fn rotation() {
        let (m, p) = rotate_pair(&[1.0, 2.0], &[1.0, 2.0]);
        assert_eq!(m, vec![0.0, 0.0]);
        assert!((p[0] - 2f64.sqrt()).abs() < 1e-15 && (p[1] - 2.0 * 2f64.sqrt()).abs() < 1e-15);
        let parts = enumerate_pairings(5).unwrap();
        let x: Vec<f64> = (0..10).map(|k| (k as f64 * 0.37).sin()).collect();
        let det = jacobian_determinant(|y| pairing_map(&parts[7], y, 2), &x, 1e-3);
        assert!((det.abs() - 1.0).abs() < 1e-10, "{det}");
    }

    #[test]
    fn azuma_examples() {
        let zero = ProductLawSpec::iid(
            50,
            GaussianMarginal { mean: vec![0.0, 0.0], sigma: 1.0 },
            WeightSequence::new(vec![0.0; 50], 2.0).unwrap(),
        )
        .unwrap();
        assert_eq!(zero.merged_density(&[0.1, 0.2]), 0.0);
        let clamp = TestFunction::HardClamp { axis: 0, scale: 1.0 };
        let r = azuma_gap(&zero, &clamp, 1000, 0.2, 1).unwrap();
        assert_eq!(r.frequency, 0.0);
        assert_eq!(r.max_deviation, 0.0);
        let ones = ProductLawSpec::iid(
            20,
            GaussianMarginal { mean: vec![0.3, 0.0], sigma: 1.0 },
            WeightSequence::constant(20, 1.0),
        )
        .unwrap();
        let bump = TestFunction::Bump { center: vec![0.0, 0.0], scale: 1.0 };
        assert!((ones.merged_pairing(&bump) - bump.gaussian_expectation(&[0.3, 0.0], 1.0)).abs() < 1e-15);
        assert!((azuma_bound(1000, 0.2, 1.0, &[1.0; 1000]) - 2.0 * (-5.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn kernel_moment_decreases_with_spread() {
        let k = Kernel::new(KernelSpec::blob_biot_savart(0.1)).unwrap();
        let vals: Vec<f64> = [0.5, 1.0, 2.0].iter().map(|&s| kernel_moment(&k, 3.0, s).unwrap()).collect();
        assert!(vals.iter().all(|v| v.is_finite() && *v > 0.0));
        assert!(vals[0] > vals[1] && vals[1] > vals[2], "{vals:?}");
        // unregularized, sigma = 1: (2 pi)^{-3/2} int_0^inf s^{-1/2} e^{-s^2/2} ds = (2 pi)^{-3/2} 2^{-3/4} Gamma(1/4)
        let bs = Kernel::new(KernelSpec::biot_savart()).unwrap();
        let got = kernel_moment(&bs, 3.0, 1.0).unwrap();
        let oracle = (2.0 * PI).powf(-1.5) * 2f64.powf(-0.75) * libm::tgamma(0.25);
        assert!(((got - oracle) / oracle).abs() < 1e-6, "{got} vs {oracle}");
    }

    proptest! {
        #[test]
        fn pairing_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, xs in prop::collection::vec(-2.0f64..2.0, 8), ms in prop::collection::vec(-1.0f64..1.0, 4)) {
            let mu = SignedEmpiricalMeasure::new(xs[..4].to_vec(), 2, ms[..2].to_vec()).unwrap();
            let nu = SignedEmpiricalMeasure::new(xs[4..].to_vec(), 2, ms[2..].to_vec()).unwrap();
            let phi = TestFunction::Bump { center: vec![0.2, 0.1], scale: 0.9 };
            let lhs = pair(&SignedEmpiricalMeasure::combine(a, &mu, b, &nu).unwrap(), &phi);
            let rhs = a * pair(&mu, &phi) + b * pair(&nu, &phi);
            prop_assert!((lhs - rhs).abs() < 1e-13);
            let grid = GridSpec::centered(4.0, 41);
            let k = kde(&SignedEmpiricalMeasure::combine(a, &mu, b, &nu).unwrap(), 0.5, &grid).unwrap();
            let km = kde(&mu, 0.5, &grid).unwrap();
            let kn = kde(&nu, 0.5, &grid).unwrap();
            for idx in 0..k.values.len() {
                prop_assert!((k.values[idx] - a * km.values[idx] - b * kn.values[idx]).abs() < 1e-12);
            }
        }

        #[test]
        fn rotation_preserves_norm(x in prop::collection::vec(-5.0f64..5.0, 4)) {
            let (m, p) = rotate_pair(&x[..2], &x[2..]);
            let lhs: f64 = m.iter().chain(&p).map(|v| v * v).sum();
            let rhs: f64 = x.iter().map(|v| v * v).sum();
            prop_assert!((lhs - rhs).abs() < 1e-12 * rhs.max(1.0));
        }
    }
}
