//! Browser bindings: a kernel field sampler, a small weighted vortex-particle
//! run, and a spectral Oseen vortex. Everything crosses the boundary as plain
//! numbers and flat `Vec<f64>` buffers, so the same API is testable natively.

use nexdiff_core::kernels::{Kernel, KernelSpec, Regularization, Sign};
use nexdiff_core::particles::{InitialLaw, Interaction, ParticleState, SimConfig, Simulator};
use nexdiff_core::pde::{oseen, relative_l2_error, PdeConfig, PdeSolver, SpectralState};
use nexdiff_core::weights::{WeightFamily, WeightSequence};
use wasm_bindgen::prelude::*;

fn err(e: nexdiff_core::Error) -> String {
    e.to_string()
}

fn kernel_spec(family: &str, delta: f64) -> Result<KernelSpec, String> {
    let base = match family {
        "biot_savart" => KernelSpec::biot_savart(),
        "attractive" => KernelSpec::power_law(2.0, Sign::Attractive),
        "repulsive" => KernelSpec::power_law(2.0, Sign::Repulsive),
        other => return Err(format!("unknown kernel family `{other}`")),
    };
    Ok(if delta > 0.0 {
        match family {
            "biot_savart" => base.with_regularization(Regularization::Blob { delta }),
            _ => base.with_regularization(Regularization::Mollified { epsilon: delta }),
        }
    } else {
        base
    })
}

/// Kernel vectors on an `n x n` grid over `[-half_width, half_width]^2`,
/// flattened as `x, y, kx, ky` per node. Nodes at the origin get zero.
#[wasm_bindgen]
pub fn kernel_field(family: &str, delta: f64, half_width: f64, n: u32) -> Result<Vec<f64>, String> {
    if n < 2 || !(half_width > 0.0) {
        return Err("need n >= 2 and a positive half width".into());
    }
    let kernel = Kernel::new(kernel_spec(family, delta)?).map_err(err)?;
    let h = 2.0 * half_width / (n - 1) as f64;
    let mut out = Vec::with_capacity(4 * (n * n) as usize);
    for j in 0..n {
        for i in 0..n {
            let x = [-half_width + i as f64 * h, -half_width + j as f64 * h];
            let k = if x[0] == 0.0 && x[1] == 0.0 { vec![0.0, 0.0] } else { kernel.eval(&x).map_err(err)? };
            out.extend_from_slice(&[x[0], x[1], k[0], k[1]]);
        }
    }
    Ok(out)
}

/// A weighted particle system with two-piece weights `a1, a2`.
#[wasm_bindgen]
pub struct ParticleDemo {
    sim: Simulator,
    state: ParticleState,
    weights: Vec<f64>,
}

#[wasm_bindgen]
impl ParticleDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(n: u32, seed: u64, family: &str, delta: f64, a1: f64, a2: f64) -> Result<ParticleDemo, String> {
        let n = n as usize;
        let weights = WeightFamily::TwoPiece { a1, a2 }.values(n);
        let config = SimConfig {
            n,
            dt: 0.01,
            horizon: 1.0,
            kernel: kernel_spec(family, delta)?,
            weights: WeightSequence::new(weights.clone(), f64::INFINITY).map_err(err)?,
            seed,
            interaction: Interaction::default(),
            initial: InitialLaw::standard_gaussian(2),
            record_every: 1,
            noise: true,
        };
        let sim = Simulator::new(config).map_err(err)?;
        let state = sim.initial_state().map_err(err)?;
        Ok(ParticleDemo { sim, state, weights })
    }

    /// Advance by `steps` Euler-Maruyama steps of size `dt`.
    pub fn advance(&mut self, dt: f64, steps: u32) -> Result<(), String> {
        for _ in 0..steps {
            self.state = self.sim.step(&self.state, dt).map_err(err)?;
        }
        Ok(())
    }

    /// Flat `x0, y0, x1, y1, ...`.
    pub fn positions(&self) -> Vec<f64> {
        self.state.positions.clone()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.weights.clone()
    }

    pub fn time(&self) -> f64 {
        self.state.t
    }

    /// Weighted mean of `|x|^2`.
    pub fn weighted_second_moment(&self) -> f64 {
        let n = self.weights.len() as f64;
        self.state.points().zip(&self.weights).map(|(x, w)| w * (x[0] * x[0] + x[1] * x[1])).sum::<f64>() / n
    }
}

/// An Oseen vortex advanced by the spectral solver, with a passive Gaussian
/// tracer density offset from the core.
#[wasm_bindgen]
pub struct VortexDemo {
    solver: PdeSolver,
    state: SpectralState,
    circulation: f64,
    t0: f64,
}

#[wasm_bindgen]
impl VortexDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(m: u32, half_width: f64, circulation: f64, t0: f64) -> Result<VortexDemo, String> {
        let solver = PdeSolver::new(PdeConfig::new(m as usize, half_width, 0.01, t0, vec![t0])).map_err(err)?;
        let v0 = solver.sample(|x| oseen(circulation, t0, x));
        let g0 = solver.sample(|x| {
            let dx = x[0] - 1.0;
            (-(dx * dx + x[1] * x[1]) / 0.5).exp() / (0.5 * std::f64::consts::PI)
        });
        let state = solver.initial_state(&v0, &g0).map_err(err)?;
        Ok(VortexDemo { solver, state, circulation, t0 })
    }

    pub fn advance(&mut self, dt: f64, steps: u32) -> Result<(), String> {
        for _ in 0..steps {
            self.state = self.solver.step(&self.state, dt).map_err(err)?;
        }
        Ok(())
    }

    pub fn time(&self) -> f64 {
        self.state.t
    }

    /// Row-major vorticity on the solver grid, starting at `(-L, -L)`.
    pub fn vorticity(&self) -> Vec<f64> {
        self.solver.v_grid(&self.state).values
    }

    /// Row-major tracer density.
    pub fn tracer(&self) -> Vec<f64> {
        self.solver.g_grid(&self.state).values
    }

    pub fn tracer_mass(&self) -> f64 {
        self.state.mass_g()
    }

    /// Relative L2 distance of the vorticity from the exact Oseen profile.
    pub fn oseen_error(&self) -> f64 {
        let (c, t) = (self.circulation, self.state.t);
        relative_l2_error(&self.solver.v_grid(&self.state), |x| oseen(c, t, x))
    }

    pub fn started_at(&self) -> f64 {
        self.t0
    }
}
