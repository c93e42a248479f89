//! The weighted N-particle system
//!
//! ```text
//! dX_i = (1/N) sum_{j != i} w_j K(X_i - X_j) dt + sqrt(2) dB_i
//! ```
//!
//! integrated by Euler-Maruyama with counter-based noise.

use std::collections::HashMap;
use std::path::PathBuf;
use std::time::Instant;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernels::{Domain, Family, Kernel, KernelSpec, Regularization};
use crate::rng::{self, NoiseSource};
use crate::weights::WeightSequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    /// Flat `N x d`, particle-major.
    pub positions: Vec<f64>,
    pub dim: usize,
    pub t: f64,
    pub step_index: u64,
}

impl ParticleState {
    pub fn new(positions: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || positions.len() % dim != 0 {
            return Err(Error::InvalidSpec(format!("{} coordinates do not split into points of dimension {dim}", positions.len())));
        }
        let s = Self { positions, dim, t: 0.0, step_index: 0 };
        s.check_finite()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.positions.chunks_exact(self.dim)
    }

    pub fn check_finite(&self) -> Result<()> {
        if let Some(k) = self.positions.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "particle {} at step {} (t = {})",
                k / self.dim,
                self.step_index,
                self.t
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InitialLaw {
    Gaussian {
        mean: Vec<f64>,
        sigma: f64,
    },
    Mixture {
        components: Vec<MixtureComponent>,
    },
    UniformDisk {
        radius: f64,
        #[serde(default = "two")]
        dim: usize,
    },
    /// Positions read verbatim from the first trajectory frame in the file.
    File {
        path: PathBuf,
    },
}

fn two() -> usize {
    2
}

impl InitialLaw {
    pub fn standard_gaussian(dim: usize) -> Self {
        InitialLaw::Gaussian { mean: vec![0.0; dim], sigma: 1.0 }
    }

    /// Dimension, when it is known without reading a file.
    pub fn dim(&self) -> Option<usize> {
        match self {
            InitialLaw::Gaussian { mean, .. } => Some(mean.len()),
            InitialLaw::Mixture { components } => components.first().map(|c| c.mean.len()),
            InitialLaw::UniformDisk { dim, .. } => Some(*dim),
            InitialLaw::File { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        match self {
            InitialLaw::Gaussian { mean, sigma } => {
                if mean.is_empty() || mean.len() > 3 {
                    return bad(format!("gaussian mean must have 1 to 3 coordinates, got {}", mean.len()));
                }
                if !(*sigma > 0.0 && sigma.is_finite()) {
                    return bad(format!("gaussian sigma must be positive, got {sigma}"));
                }
            }
            InitialLaw::Mixture { components } => {
                if components.is_empty() {
                    return bad("mixture needs at least one component".into());
                }
                let d = components[0].mean.len();
                let mut total = 0.0;
                for c in components {
                    if c.mean.len() != d || d == 0 || d > 3 {
                        return bad("mixture components must share a dimension between 1 and 3".into());
                    }
                    if !(c.sigma > 0.0) || !(c.weight >= 0.0) {
                        return bad("mixture components need sigma > 0 and weight >= 0".into());
                    }
                    total += c.weight;
                }
                if !(total > 0.0) {
                    return bad("mixture weights sum to zero".into());
                }
            }
            InitialLaw::UniformDisk { radius, dim } => {
                if !(*radius > 0.0) || !(2..=3).contains(dim) {
                    return bad("uniform disk needs radius > 0 and dimension 2 or 3".into());
                }
            }
            InitialLaw::File { .. } => {}
        }
        Ok(())
    }

    /// Normalized Gaussian components `(mass, mean, sigma)` when the law is a
    /// Gaussian or a mixture of Gaussians.
    pub fn gaussian_components(&self) -> Option<Vec<(f64, Vec<f64>, f64)>> {
        match self {
            InitialLaw::Gaussian { mean, sigma } => Some(vec![(1.0, mean.clone(), *sigma)]),
            InitialLaw::Mixture { components } => {
                let total: f64 = components.iter().map(|c| c.weight).sum();
                Some(components.iter().map(|c| (c.weight / total, c.mean.clone(), c.sigma)).collect())
            }
            _ => None,
        }
    }

    /// Probability density at `x`, when available in closed form.
    pub fn density(&self, x: &[f64]) -> Option<f64> {
        match self {
            InitialLaw::UniformDisk { radius, dim } => {
                let r2: f64 = x.iter().map(|c| c * c).sum();
                let vol = if *dim == 2 {
                    std::f64::consts::PI * radius * radius
                } else {
                    4.0 / 3.0 * std::f64::consts::PI * radius.powi(3)
                };
                Some(if r2 <= radius * radius { 1.0 / vol } else { 0.0 })
            }
            _ => {
                let comps = self.gaussian_components()?;
                Some(comps.iter().map(|(m, mean, s)| m * gaussian_density(x, mean, *s)).sum())
            }
        }
    }
}

pub fn gaussian_density(x: &[f64], mean: &[f64], sigma: f64) -> f64 {
    let d = x.len() as i32;
    let r2: f64 = x.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
    (-r2 / (2.0 * sigma * sigma)).exp() / (2.0 * std::f64::consts::PI * sigma * sigma).powf(d as f64 / 2.0)
}

fn default_tail_tol() -> f64 {
    1e-14
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Interaction {
    #[default]
    Direct,
    /// Neighbour search on a grid of cell size `cutoff`; free space only.
    CellList {
        cutoff: f64,
        #[serde(default = "default_tail_tol")]
        tail_tol: f64,
    },
}

fn default_record_every() -> u64 {
    1
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub dt: f64,
    #[serde(alias = "T")]
    pub horizon: f64,
    pub kernel: KernelSpec,
    pub weights: WeightSequence,
    pub seed: u64,
    #[serde(default)]
    pub interaction: Interaction,
    pub initial: InitialLaw,
    #[serde(default = "default_record_every")]
    pub record_every: u64,
    /// Brownian forcing on (the default) or off.
    #[serde(default = "yes")]
    pub noise: bool,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.n == 0 {
            return bad("N must be at least 1".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be nonnegative, got {}", self.horizon));
        }
        if self.horizon > 0.0 && self.dt > self.horizon {
            return bad(format!("dt = {} exceeds the horizon {}", self.dt, self.horizon));
        }
        if self.weights.len() != self.n {
            return bad(format!("{} weights for {} particles", self.weights.len(), self.n));
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1".into());
        }
        self.kernel.validate()?;
        self.initial.validate()?;
        if let Some(d) = self.initial.dim() {
            if d != self.kernel.dim() {
                return bad(format!("initial law has dimension {d}, kernel has {}", self.kernel.dim()));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(bytes))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// `delta(N) = c N^{-1/4}`.
pub fn blob_delta(n: usize, c: f64) -> f64 {
    c * (n as f64).powf(-0.25)
}

/// `1e-3` at `N = 1000`, halved for every fourfold increase of `N`.
pub fn default_dt(n: usize) -> f64 {
    1e-3 * (1000.0 / n as f64).sqrt()
}

pub fn sample_initial(law: &InitialLaw, n: usize, seed: u64) -> Result<ParticleState> {
    law.validate()?;
    if n == 0 {
        return Err(Error::InvalidSpec("N must be at least 1".into()));
    }
    if let InitialLaw::File { path } = law {
        let mut f = std::fs::File::open(path)
            .map_err(|e| Error::FileFormat(format!("cannot open {}: {e}", path.display())))?;
        let frame = crate::io::read_frame(&mut f)?
            .ok_or_else(|| Error::FileFormat(format!("{} holds no frame", path.display())))?;
        if frame.len() != n {
            return Err(Error::FileFormat(format!("{} holds {} particles, expected {n}", path.display(), frame.len())));
        }
        let mut s = ParticleState::new(frame.positions, frame.dim)?;
        s.t = 0.0;
        return Ok(s);
    }
    let d = law.dim().expect("non-file laws know their dimension");
    let mut positions = vec![0.0; n * d];
    for (i, x) in positions.chunks_exact_mut(d).enumerate() {
        let mut g = rng::sampling_rng(seed, i as u64);
        match law {
            InitialLaw::Gaussian { mean, sigma } => {
                rng::fill_normals(&mut g, x);
                for (c, m) in x.iter_mut().zip(mean) {
                    *c = m + sigma * *c;
                }
            }
            InitialLaw::Mixture { components } => {
                let total: f64 = components.iter().map(|c| c.weight).sum();
                let u = rng::uniform(&mut g) * total;
                let mut acc = 0.0;
                let mut pick = components.len() - 1;
                for (k, c) in components.iter().enumerate() {
                    acc += c.weight;
                    if u < acc {
                        pick = k;
                        break;
                    }
                }
                let c = &components[pick];
                rng::fill_normals(&mut g, x);
                for (v, m) in x.iter_mut().zip(&c.mean) {
                    *v = m + c.sigma * *v;
                }
            }
            InitialLaw::UniformDisk { radius, .. } => {
                // direction from normals, radius from the volume law
                loop {
                    rng::fill_normals(&mut g, x);
                    let norm = x.iter().map(|c| c * c).sum::<f64>().sqrt();
                    if norm > 0.0 {
                        let r = radius * rng::uniform(&mut g).powf(1.0 / d as f64);
                        x.iter_mut().for_each(|c| *c *= r / norm);
                        break;
                    }
                }
            }
            InitialLaw::File { .. } => unreachable!(),
        }
    }
    ParticleState::new(positions, d)
}

/// Wrap into `[-L, L)`.
pub fn wrap(x: f64, half_width: f64) -> f64 {
    let p = 2.0 * half_width;
    let y = (x + half_width).rem_euclid(p) - half_width;
    if y >= half_width {
        -half_width
    } else {
        y
    }
}

/// Minimal-image difference for a periodic cell.
fn min_image(d: f64, half_width: f64) -> f64 {
    if d >= half_width {
        d - 2.0 * half_width
    } else if d < -half_width {
        d + 2.0 * half_width
    } else {
        d
    }
}

fn for_each_particle<F>(out: &mut [f64], dim: usize, f: F) -> Result<()>
where
    F: Fn(usize, &mut [f64]) -> Result<()> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        out.par_chunks_mut(dim).enumerate().try_for_each(|(i, b)| f(i, b))
    }
    #[cfg(not(feature = "parallel"))]
    {
        out.chunks_mut(dim).enumerate().try_for_each(|(i, b)| f(i, b))
    }
}

/// `b_i = (1/N) sum_{j != i} w_j K(x_i - x_j)`, summed in ascending `j` for each `i`.
pub fn drift_with(state: &ParticleState, kernel: &Kernel, w: &[f64], interaction: &Interaction) -> Result<Vec<f64>> {
    let n = state.len();
    let d = state.dim;
    if w.len() != n {
        return Err(Error::InvalidSpec(format!("{} weights for {n} particles", w.len())));
    }
    if d != kernel.dim() {
        return Err(Error::InvalidSpec(format!("state dimension {d} does not match kernel dimension {}", kernel.dim())));
    }
    let mut out = vec![0.0; n * d];
    if kernel.is_zero() || n < 2 {
        return Ok(out);
    }
    let inv_n = 1.0 / n as f64;
    match interaction {
        Interaction::Direct => direct(state, kernel, w, inv_n, &mut out)?,
        Interaction::CellList { cutoff, tail_tol } => {
            if kernel.spec().domain != Domain::FreeSpace {
                return Err(Error::InvalidSpec("cell-list interaction is free-space only".into()));
            }
            let required = kernel.decay_radius(*tail_tol);
            if !(*cutoff >= required) {
                return Err(Error::CutoffViolation { cutoff: *cutoff, required });
            }
            cell_list(state, kernel, w, inv_n, *cutoff, &mut out)?;
        }
    }
    Ok(out)
}

fn direct(state: &ParticleState, kernel: &Kernel, w: &[f64], inv_n: f64, out: &mut [f64]) -> Result<()> {
    let d = state.dim;
    let x = &state.positions;
    let spec = kernel.spec();
    if let (Family::BiotSavart, Domain::FreeSpace) = (&spec.family, spec.domain) {
        let delta2 = match spec.regularization {
            Regularization::None => Some(0.0),
            Regularization::Blob { delta } => Some(delta * delta),
            Regularization::Mollified { .. } => None,
        };
        if let Some(delta2) = delta2 {
            let scale = inv_n / (2.0 * std::f64::consts::PI);
            return for_each_particle(out, d, |i, b| {
                let (xi, yi) = (x[2 * i], x[2 * i + 1]);
                let (mut ax, mut ay) = (0.0, 0.0);
                for (j, &wj) in w.iter().enumerate() {
                    if j == i || wj == 0.0 {
                        continue;
                    }
                    let dx = xi - x[2 * j];
                    let dy = yi - x[2 * j + 1];
                    let den = dx * dx + dy * dy + delta2;
                    if den == 0.0 {
                        return Err(Error::SingularEvaluation);
                    }
                    let s = wj / den;
                    ax -= s * dy;
                    ay += s * dx;
                }
                b[0] = ax * scale;
                b[1] = ay * scale;
                Ok(())
            });
        }
    }
    let half_width = kernel.periodic_half_width();
    for_each_particle(out, d, |i, b| {
        let xi = &x[i * d..(i + 1) * d];
        let mut diff = [0.0; 3];
        let mut k = [0.0; 3];
        let mut acc = [0.0; 3];
        for (j, &wj) in w.iter().enumerate() {
            if j == i || wj == 0.0 {
                continue;
            }
            let xj = &x[j * d..(j + 1) * d];
            for c in 0..d {
                diff[c] = xi[c] - xj[c];
                if let Some(l) = half_width {
                    diff[c] = min_image(diff[c], l);
                }
            }
            kernel.eval_into(&diff[..d], &mut k[..d])?;
            for c in 0..d {
                acc[c] += wj * k[c];
            }
        }
        for c in 0..d {
            b[c] = acc[c] * inv_n;
        }
        Ok(())
    })
}

fn cell_list(state: &ParticleState, kernel: &Kernel, w: &[f64], inv_n: f64, cutoff: f64, out: &mut [f64]) -> Result<()> {
    let d = state.dim;
    let x = &state.positions;
    let key = |p: &[f64]| -> [i64; 3] {
        let mut k = [0i64; 3];
        for c in 0..d {
            k[c] = (p[c] / cutoff).floor() as i64;
        }
        k
    };
    let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (j, p) in state.points().enumerate() {
        if w[j] != 0.0 {
            cells.entry(key(p)).or_default().push(j);
        }
    }
    let offsets: Vec<[i64; 3]> = {
        let r = |c: usize| if c < d { -1..=1 } else { 0..=0 };
        let mut v = Vec::new();
        for a in r(0) {
            for b in r(1) {
                for c in r(2) {
                    v.push([a, b, c]);
                }
            }
        }
        v
    };
    for_each_particle(out, d, |i, b| {
        let xi = &x[i * d..(i + 1) * d];
        let home = key(xi);
        let mut nbrs: Vec<usize> = Vec::new();
        for o in &offsets {
            let k = [home[0] + o[0], home[1] + o[1], home[2] + o[2]];
            if let Some(list) = cells.get(&k) {
                nbrs.extend_from_slice(list);
            }
        }
        nbrs.sort_unstable();
        let mut diff = [0.0; 3];
        let mut kv = [0.0; 3];
        let mut acc = [0.0; 3];
        for j in nbrs {
            if j == i {
                continue;
            }
            for c in 0..d {
                diff[c] = xi[c] - x[j * d + c];
            }
            kernel.eval_into(&diff[..d], &mut kv[..d])?;
            for c in 0..d {
                acc[c] += w[j] * kv[c];
            }
        }
        for c in 0..d {
            b[c] = acc[c] * inv_n;
        }
        Ok(())
    })
}

/// Direct-summation drift for a kernel spec.
pub fn drift(state: &ParticleState, kernel: &KernelSpec, w: &WeightSequence) -> Result<Vec<f64>> {
    drift_with(state, &Kernel::new(kernel.clone())?, &w.values, &Interaction::Direct)
}

/// Receives snapshots during a run.
pub trait Observer {
    fn observe(&mut self, state: &ParticleState) -> Result<()>;
}

impl<F: FnMut(&ParticleState) -> Result<()>> Observer for F {
    fn observe(&mut self, state: &ParticleState) -> Result<()> {
        self(state)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub seed: u64,
    pub config_hash: String,
    pub steps: u64,
    pub wall_time_s: f64,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<ParticleState>,
    pub manifest: RunManifest,
}

/// A validated configuration with its kernel tables and noise source.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: SimConfig,
    kernel: Kernel,
    noise: NoiseSource,
}

impl Simulator {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let kernel = Kernel::new(config.kernel.clone())?;
        if let Interaction::CellList { cutoff, tail_tol } = config.interaction {
            if kernel.spec().domain != Domain::FreeSpace {
                return Err(Error::InvalidSpec("cell-list interaction is free-space only".into()));
            }
            let required = kernel.decay_radius(tail_tol);
            if !(cutoff >= required) {
                return Err(Error::CutoffViolation { cutoff, required });
            }
        }
        let noise = NoiseSource::new(config.seed);
        Ok(Self { config, kernel, noise })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn initial_state(&self) -> Result<ParticleState> {
        let mut s = sample_initial(&self.config.initial, self.config.n, self.config.seed)?;
        if let Some(l) = self.kernel.periodic_half_width() {
            s.positions.iter_mut().for_each(|x| *x = wrap(*x, l));
        }
        Ok(s)
    }

    pub fn drift(&self, state: &ParticleState) -> Result<Vec<f64>> {
        drift_with(state, &self.kernel, &self.config.weights.values, &self.config.interaction)
    }

    /// One Euler-Maruyama step of length `dt`; noise is keyed by the state's step index.
    pub fn step(&self, state: &ParticleState, dt: f64) -> Result<ParticleState> {
        if dt == 0.0 {
            return Ok(state.clone());
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidSpec(format!("step length must be positive, got {dt}")));
        }
        let d = state.dim;
        let b = self.drift(state)?;
        let amp = (2.0 * dt).sqrt();
        let mut next = state.positions.clone();
        let step = state.step_index;
        let noise = self.config.noise;
        let half_width = self.kernel.periodic_half_width();
        for_each_particle(&mut next, d, |i, x| {
            let mut xi = [0.0; 3];
            if noise {
                self.noise.normals(i as u64, step, &mut xi[..d]);
            }
            for c in 0..d {
                x[c] += b[i * d + c] * dt + amp * xi[c];
                if let Some(l) = half_width {
                    x[c] = wrap(x[c], l);
                }
            }
            Ok(())
        })?;
        let out = ParticleState { positions: next, dim: d, t: state.t + dt, step_index: step + 1 };
        out.check_finite()?;
        Ok(out)
    }

    /// Number of steps to reach the horizon; the last one may be shorter.
    pub fn step_count(&self) -> u64 {
        step_count(self.config.horizon, self.config.dt)
    }

    /// Time after step `k` (exactly the horizon after the last one).
    pub fn time_after(&self, k: u64) -> f64 {
        let n = self.step_count();
        if k >= n {
            self.config.horizon
        } else {
            k as f64 * self.config.dt
        }
    }

    pub fn run(&self, observers: &mut [&mut dyn Observer]) -> Result<Trajectory> {
        let start = self.initial_state()?;
        self.run_from(start, observers)
    }

    pub fn run_from(&self, start: ParticleState, observers: &mut [&mut dyn Observer]) -> Result<Trajectory> {
        let clock = Instant::now();
        let steps = self.step_count();
        let every = self.config.record_every;
        let mut snapshots = vec![start.clone()];
        for o in observers.iter_mut() {
            o.observe(&start)?;
        }
        let mut state = start;
        for k in 0..steps {
            let dt = self.time_after(k + 1) - self.time_after(k);
            let mut next = self.step(&state, dt)?;
            next.t = self.time_after(k + 1);
            state = next;
            if (k + 1) % every == 0 || k + 1 == steps {
                for o in observers.iter_mut() {
                    o.observe(&state)?;
                }
                snapshots.push(state.clone());
            }
        }
        Ok(Trajectory {
            snapshots,
            manifest: RunManifest {
                seed: self.config.seed,
                config_hash: self.config.hash(),
                steps,
                wall_time_s: clock.elapsed().as_secs_f64(),
                version: env!("CARGO_PKG_VERSION").to_string(),
            },
        })
    }
}

/// `ceil(T / dt)`, treating ratios within `1e-9` of an integer as that integer.
pub fn step_count(horizon: f64, dt: f64) -> u64 {
    if horizon <= 0.0 {
        return 0;
    }
    let q = horizon / dt;
    let r = q.round();
    if (q - r).abs() <= 1e-9 * q.max(1.0) {
        r as u64
    } else {
        q.ceil() as u64
    }
}

/// One step of the configured system from `state`.
pub fn step(state: &ParticleState, config: &SimConfig) -> Result<ParticleState> {
    Simulator::new(config.clone())?.step(state, config.dt)
}

pub fn simulate(config: &SimConfig, observers: &mut [&mut dyn Observer]) -> Result<Trajectory> {
    Simulator::new(config.clone())?.run(observers)
}
