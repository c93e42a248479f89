//! Pseudo-spectral solver for the coupled mean-field system on the periodic box
//! `[-L, L)^2`:
//!
//! ```text
//! d_t v = Lap v - div(v u),   d_t g = Lap g - div(g u),   u = K * v
//! ```
//!
//! Diffusion is handled exactly by an integrating factor; transport by an
//! explicit midpoint step with 2/3-rule dealiasing. The `k = 0` modes are never
//! touched, so both masses are conserved exactly.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{self, Fft2};
use crate::kernels::{self, MultiplierTable};
use crate::measure::DensityGrid;
use crate::testfn::TestFunction;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// `u = K * v` with the Biot-Savart symbol.
    #[default]
    BiotSavart,
    /// `u = 0`: both fields follow the heat flow.
    None,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeConfig {
    /// Modes (and grid nodes) per axis.
    pub m: usize,
    pub half_width: f64,
    pub dt: f64,
    /// Start time of the solve.
    #[serde(default)]
    pub t0: f64,
    /// Times at which states are returned; the last one is the horizon.
    pub output_times: Vec<f64>,
    #[serde(default)]
    pub coupling: Coupling,
    /// Only the mean-free velocity is available on the torus.
    #[serde(default = "yes")]
    pub mean_free: bool,
    /// Reject initial data with mass near the box edge.
    #[serde(default = "yes")]
    pub require_compact_support: bool,
}

impl PdeConfig {
    pub fn new(m: usize, half_width: f64, dt: f64, t0: f64, output_times: Vec<f64>) -> Self {
        Self {
            m,
            half_width,
            dt,
            t0,
            output_times,
            coupling: Coupling::BiotSavart,
            mean_free: true,
            require_compact_support: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.m < 64 || !self.m.is_power_of_two() {
            return bad(format!("grid size {} must be a power of two, at least 64", self.m));
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return bad(format!("half-width must be positive, got {}", self.half_width));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.output_times.is_empty() {
            return bad("at least one output time is required".into());
        }
        let mut prev = self.t0;
        for &t in &self.output_times {
            if !(t >= prev) {
                return bad(format!("output times must be nondecreasing and start at t0 = {}", self.t0));
            }
            prev = t;
        }
        if !self.mean_free {
            return bad("the periodic velocity is defined only for the mean-free part of v; set mean_free = true".into());
        }
        Ok(())
    }

    pub fn grid_spacing(&self) -> f64 {
        2.0 * self.half_width / self.m as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralState {
    pub v_hat: Vec<Complex64>,
    pub g_hat: Vec<Complex64>,
    pub m: usize,
    pub half_width: f64,
    pub t: f64,
}

impl SpectralState {
    fn area(&self) -> f64 {
        4.0 * self.half_width * self.half_width
    }

    pub fn mass_v(&self) -> f64 {
        self.area() * self.v_hat[0].re
    }

    pub fn mass_g(&self) -> f64 {
        self.area() * self.g_hat[0].re
    }

    /// `||g||_2^2` by Parseval.
    pub fn l2_g_squared(&self) -> f64 {
        self.area() * self.g_hat.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub step: u64,
    pub t: f64,
    pub mass_v: f64,
    pub mass_g: f64,
    pub l2_g: f64,
    pub max_u: f64,
    pub cfl_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeSolution {
    pub states: Vec<SpectralState>,
    pub ledger: Vec<LedgerEntry>,
    /// Fraction of `|v| + |g|` mass outside radius `L/2` in the initial data.
    pub truncation_proxy: f64,
}

/// Oseen vortex `gamma / (4 pi t) exp(-|x|^2 / (4t))`.
pub fn oseen(gamma: f64, t: f64, x: &[f64]) -> f64 {
    let r2 = x[0] * x[0] + x[1] * x[1];
    gamma / (4.0 * std::f64::consts::PI * t) * (-r2 / (4.0 * t)).exp()
}

#[derive(Debug, Clone)]
pub struct PdeSolver {
    config: PdeConfig,
    fft: Fft2,
    mult: MultiplierTable,
    k2: Vec<f64>,
    kx: Vec<f64>,
    ky: Vec<f64>,
    keep: Vec<bool>,
}

impl PdeSolver {
    pub fn new(config: PdeConfig) -> Result<Self> {
        config.validate()?;
        let m = config.m;
        let s = std::f64::consts::PI / config.half_width;
        let mult = kernels::periodic_multiplier(config.half_width, m)?;
        let mut k2 = vec![0.0; m * m];
        let mut kx = vec![0.0; m * m];
        let mut ky = vec![0.0; m * m];
        let mut keep = vec![false; m * m];
        let cut = (m / 3) as i64;
        for b in 0..m {
            for a in 0..m {
                let (na, nb) = (fft::mode(a, m), fft::mode(b, m));
                let idx = b * m + a;
                kx[idx] = s * na as f64;
                ky[idx] = s * nb as f64;
                k2[idx] = kx[idx] * kx[idx] + ky[idx] * ky[idx];
                keep[idx] = na.abs() <= cut && nb.abs() <= cut;
            }
        }
        Ok(Self { fft: Fft2::new(m), mult, k2, kx, ky, keep, config })
    }

    pub fn config(&self) -> &PdeConfig {
        &self.config
    }

    /// The solver grid as an empty density grid layout.
    pub fn node(&self, a: usize, b: usize) -> [f64; 2] {
        let h = self.config.grid_spacing();
        let l = self.config.half_width;
        [-l + a as f64 * h, -l + b as f64 * h]
    }

    /// Sample `f` on the solver grid.
    pub fn sample<F: Fn(&[f64]) -> f64>(&self, f: F) -> DensityGrid {
        let l = self.config.half_width;
        DensityGrid::from_fn([-l, -l], self.config.grid_spacing(), self.config.m, self.config.m, f)
            .expect("grid dimensions are consistent")
    }

    fn check_grid(&self, g: &DensityGrid) -> Result<()> {
        let l = self.config.half_width;
        let h = self.config.grid_spacing();
        let m = self.config.m;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * l.max(1.0);
        if g.nx != m || g.ny != m || !close(g.h, h) || !close(g.origin[0], -l) || !close(g.origin[1], -l) {
            return Err(Error::InvalidSpec(format!(
                "field grid {}x{} (origin {:?}, h {}) does not match the solver grid {m}x{m} on [-{l}, {l})",
                g.nx, g.ny, g.origin, g.h
            )));
        }
        Ok(())
    }

    fn to_spectral(&self, values: &[f64]) -> Vec<Complex64> {
        let mut c: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fft.forward(&mut c);
        self.dealias(&mut c);
        c
    }

    fn to_physical(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut c = coeffs.to_vec();
        self.fft.backward(&mut c);
        c.into_iter().map(|z| z.re).collect()
    }

    fn dealias(&self, c: &mut [Complex64]) {
        for (z, &k) in c.iter_mut().zip(&self.keep) {
            if !k {
                *z = ZERO;
            }
        }
    }

    pub fn initial_state(&self, v0: &DensityGrid, g0: &DensityGrid) -> Result<SpectralState> {
        self.check_grid(v0)?;
        self.check_grid(g0)?;
        if self.config.require_compact_support {
            for f in [v0, g0] {
                let mass = self.band_mass(f);
                if mass >= 1e-8 {
                    return Err(Error::BoundaryMass { mass });
                }
            }
        }
        Ok(SpectralState {
            v_hat: self.to_spectral(&v0.values),
            g_hat: self.to_spectral(&g0.values),
            m: self.config.m,
            half_width: self.config.half_width,
            t: self.config.t0,
        })
    }

    /// Fraction of `|f|` mass in the band `max |x_i| >= 7L/8`.
    fn band_mass(&self, f: &DensityGrid) -> f64 {
        let edge = 0.875 * self.config.half_width;
        let total: f64 = f.values.iter().map(|v| v.abs()).sum();
        if total == 0.0 {
            return 0.0;
        }
        let mut band = 0.0;
        for b in 0..f.ny {
            for a in 0..f.nx {
                let [x, y] = f.node(a, b);
                if x.abs() >= edge || y.abs() >= edge {
                    band += f.at(a, b).abs();
                }
            }
        }
        band / total
    }

    fn outside_half(&self, f: &DensityGrid) -> f64 {
        let r = 0.5 * self.config.half_width;
        let total: f64 = f.values.iter().map(|v| v.abs()).sum();
        if total == 0.0 {
            return 0.0;
        }
        let mut out = 0.0;
        for b in 0..f.ny {
            for a in 0..f.nx {
                let [x, y] = f.node(a, b);
                if x * x + y * y > r * r {
                    out += f.at(a, b).abs();
                }
            }
        }
        out / total
    }

    /// Velocity coefficients `i k^perp v_hat / |k|^2`.
    fn velocity_hat(&self, v_hat: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        if self.config.coupling == Coupling::None {
            return (vec![ZERO; v_hat.len()], vec![ZERO; v_hat.len()]);
        }
        let ux = v_hat.iter().zip(&self.mult.entries).map(|(v, e)| v * e[0]).collect();
        let uy = v_hat.iter().zip(&self.mult.entries).map(|(v, e)| v * e[1]).collect();
        (ux, uy)
    }

    /// Physical velocity components on the grid.
    pub fn velocity(&self, state: &SpectralState) -> (Vec<f64>, Vec<f64>) {
        let (ux, uy) = self.velocity_hat(&state.v_hat);
        (self.to_physical(&ux), self.to_physical(&uy))
    }

    /// Spectral divergence of the velocity, for diagnostics.
    pub fn velocity_divergence_hat(&self, state: &SpectralState) -> Vec<Complex64> {
        let (ux, uy) = self.velocity_hat(&state.v_hat);
        (0..ux.len())
            .map(|i| Complex64::new(0.0, -1.0) * (self.kx[i] * ux[i] + self.ky[i] * uy[i]))
            .collect()
    }

    /// `-div(f u)` in coefficient space, `i k . (f u)^`.
    fn transport(&self, f_hat: &[Complex64], ux: &[f64], uy: &[f64]) -> Vec<Complex64> {
        let f = self.to_physical(f_hat);
        let fx: Vec<f64> = f.iter().zip(ux).map(|(a, b)| a * b).collect();
        let fy: Vec<f64> = f.iter().zip(uy).map(|(a, b)| a * b).collect();
        let fx_hat = self.to_spectral(&fx);
        let fy_hat = self.to_spectral(&fy);
        let i = Complex64::new(0.0, 1.0);
        (0..f_hat.len()).map(|k| i * (self.kx[k] * fx_hat[k] + self.ky[k] * fy_hat[k])).collect()
    }

    fn cfl_bound(&self, ux: &[f64], uy: &[f64]) -> (f64, f64) {
        let max_u = ux.iter().zip(uy).map(|(a, b)| (a * a + b * b).sqrt()).fold(0.0, f64::max);
        let bound = if max_u > 0.0 { 0.5 * self.config.grid_spacing() / max_u } else { f64::INFINITY };
        (max_u, bound)
    }

    /// One integrating-factor midpoint step of length `dt`.
    pub fn step(&self, state: &SpectralState, dt: f64) -> Result<SpectralState> {
        self.step_checked(state, dt).map(|(s, _, _)| s)
    }

    fn step_checked(&self, state: &SpectralState, dt: f64) -> Result<(SpectralState, f64, f64)> {
        let coupled = self.config.coupling == Coupling::BiotSavart;
        let (ux, uy) = self.velocity(state);
        let (max_u, bound) = self.cfl_bound(&ux, &uy);
        if dt > bound {
            return Err(Error::CflViolation { dt, bound });
        }
        let e_half: Vec<f64> = self.k2.iter().map(|k| (-k * 0.5 * dt).exp()).collect();
        let e_full: Vec<f64> = self.k2.iter().map(|k| (-k * dt).exp()).collect();
        let n = state.v_hat.len();
        let (v_new, g_new) = if coupled {
            let nv = self.transport(&state.v_hat, &ux, &uy);
            let ng = self.transport(&state.g_hat, &ux, &uy);
            let v_mid: Vec<Complex64> = (0..n).map(|k| e_half[k] * (state.v_hat[k] + 0.5 * dt * nv[k])).collect();
            let g_mid: Vec<Complex64> = (0..n).map(|k| e_half[k] * (state.g_hat[k] + 0.5 * dt * ng[k])).collect();
            let (ux_m, uy_m) = {
                let (a, b) = self.velocity_hat(&v_mid);
                (self.to_physical(&a), self.to_physical(&b))
            };
            let nv = self.transport(&v_mid, &ux_m, &uy_m);
            let ng = self.transport(&g_mid, &ux_m, &uy_m);
            (
                (0..n).map(|k| e_full[k] * state.v_hat[k] + dt * e_half[k] * nv[k]).collect::<Vec<_>>(),
                (0..n).map(|k| e_full[k] * state.g_hat[k] + dt * e_half[k] * ng[k]).collect::<Vec<_>>(),
            )
        } else {
            (
                (0..n).map(|k| e_full[k] * state.v_hat[k]).collect(),
                (0..n).map(|k| e_full[k] * state.g_hat[k]).collect(),
            )
        };
        let mut v_new = v_new;
        let mut g_new = g_new;
        // the mean modes are carried over untouched
        v_new[0] = state.v_hat[0];
        g_new[0] = state.g_hat[0];
        self.dealias(&mut v_new);
        self.dealias(&mut g_new);
        if v_new.iter().chain(&g_new).any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite(format!("spectral state at t = {}", state.t + dt)));
        }
        let next = SpectralState { v_hat: v_new, g_hat: g_new, m: state.m, half_width: state.half_width, t: state.t + dt };
        Ok((next, max_u, bound))
    }

    /// One step of `d_t g = Lap g - u . grad g` with `u` frozen (linearized system).
    pub fn frozen_step(&self, g_hat: &[Complex64], ux: &[f64], uy: &[f64], dt: f64) -> Vec<Complex64> {
        let n = g_hat.len();
        let e_half: Vec<f64> = self.k2.iter().map(|k| (-k * 0.5 * dt).exp()).collect();
        let e_full: Vec<f64> = self.k2.iter().map(|k| (-k * dt).exp()).collect();
        let ng = self.transport(g_hat, ux, uy);
        let g_mid: Vec<Complex64> = (0..n).map(|k| e_half[k] * (g_hat[k] + 0.5 * dt * ng[k])).collect();
        let ng = self.transport(&g_mid, ux, uy);
        let mut out: Vec<Complex64> = (0..n).map(|k| e_full[k] * g_hat[k] + dt * e_half[k] * ng[k]).collect();
        out[0] = g_hat[0];
        self.dealias(&mut out);
        out
    }

    fn ledger_entry(&self, step: u64, s: &SpectralState, max_u: f64, cfl_bound: f64) -> LedgerEntry {
        LedgerEntry { step, t: s.t, mass_v: s.mass_v(), mass_g: s.mass_g(), l2_g: s.l2_g_squared().sqrt(), max_u, cfl_bound }
    }

    /// Advance from `v0, g0` at `t0`, returning the states at the output times.
    pub fn solve(&self, v0: &DensityGrid, g0: &DensityGrid) -> Result<PdeSolution> {
        let mut state = self.initial_state(v0, g0)?;
        let truncation_proxy = self.outside_half(v0).max(self.outside_half(g0));
        let mut ledger = Vec::new();
        let (ux, uy) = self.velocity(&state);
        let (mu, b) = self.cfl_bound(&ux, &uy);
        ledger.push(self.ledger_entry(0, &state, mu, b));
        let mut states = Vec::new();
        let mut k = 0u64;
        for &target in &self.config.output_times {
            let steps = crate::particles::step_count(target - state.t, self.config.dt);
            let start = state.t;
            for s in 0..steps {
                let t_next = if s + 1 == steps { target } else { start + (s + 1) as f64 * self.config.dt };
                let (mut next, max_u, bound) = self.step_checked(&state, t_next - state.t)?;
                next.t = t_next;
                k += 1;
                state = next;
                ledger.push(self.ledger_entry(k, &state, max_u, bound));
            }
            states.push(state.clone());
        }
        Ok(PdeSolution { states, ledger, truncation_proxy })
    }

    pub fn v_grid(&self, s: &SpectralState) -> DensityGrid {
        self.grid_of(&s.v_hat)
    }

    pub fn g_grid(&self, s: &SpectralState) -> DensityGrid {
        self.grid_of(&s.g_hat)
    }

    fn grid_of(&self, c: &[Complex64]) -> DensityGrid {
        let l = self.config.half_width;
        DensityGrid::new([-l, -l], self.config.grid_spacing(), self.config.m, self.config.m, self.to_physical(c))
            .expect("solver grid is consistent")
    }

    /// Rectangle-rule pairing (spectrally accurate on the periodic grid).
    pub fn evaluate(&self, field: &[Complex64], phi: &TestFunction) -> f64 {
        let values = self.to_physical(field);
        let h = self.config.grid_spacing();
        let m = self.config.m;
        let mut acc = 0.0;
        for b in 0..m {
            for a in 0..m {
                acc += values[b * m + a] * phi.eval(&self.node(a, b));
            }
        }
        acc * h * h
    }
}

/// Solve with a fresh solver.
pub fn solve(v0: &DensityGrid, g0: &DensityGrid, config: &PdeConfig) -> Result<PdeSolution> {
    PdeSolver::new(config.clone())?.solve(v0, g0)
}

/// Relative `L^2` distance between a grid and a function sampled at its nodes.
pub fn relative_l2_error<F: Fn(&[f64]) -> f64>(grid: &DensityGrid, exact: F) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for b in 0..grid.ny {
        for a in 0..grid.nx {
            let e = exact(&grid.node(a, b));
            let d = grid.at(a, b) - e;
            num += d * d;
            den += e * e;
        }
    }
    (num / den).sqrt()
}
