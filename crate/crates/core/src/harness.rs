//! Convergence experiments: particle ensembles against the mean-field PDE.

use std::time::Instant;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Domain, Family, KernelSpec, Regularization};
use crate::measure::{self, GridSpec, SignedEmpiricalMeasure};
use crate::particles::{self, InitialLaw, Interaction, ParticleState, SimConfig, Simulator};
use crate::pde::{Coupling, PdeConfig, PdeSolver};
use crate::testfn::TestFunction;
use crate::weights::{WeightFamily, WeightSequence};

/// How particle weights are attached to positions.
pub const COUPLING_LABEL: &str = "index-assigned weights, iid positions";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhiDictionarySpec {
    pub bump_centers: Vec<Vec<f64>>,
    pub bump_scales: Vec<f64>,
    /// Half-width of the trigonometric products `f(pi n1 x1 / L) g(pi n2 x2 / L)`.
    pub trig_half_width: f64,
    /// Largest frequency per axis; 0 disables the trigonometric family.
    pub trig_max_freq: u32,
    pub clamp_scales: Vec<f64>,
}

impl Default for PhiDictionarySpec {
    fn default() -> Self {
        Self {
            bump_centers: vec![vec![0.0, 0.0], vec![0.5, -0.5]],
            bump_scales: vec![0.5, 1.0],
            trig_half_width: 4.0,
            trig_max_freq: 1,
            clamp_scales: vec![1.0],
        }
    }
}

impl PhiDictionarySpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.bump_centers.iter().any(|c| c.len() != 2) {
            return bad("bump centers must have two coordinates".into());
        }
        if self.bump_scales.iter().chain(&self.clamp_scales).any(|s| !(*s > 0.0 && s.is_finite())) {
            return bad("bump and clamp scales must be positive".into());
        }
        if self.trig_max_freq > 0 && !(self.trig_half_width > 0.0) {
            return bad("trigonometric half-width must be positive".into());
        }
        Ok(())
    }
}

/// Bumps, low-frequency sine/cosine products and smooth clamps of both coordinates.
pub fn phi_dictionary(spec: &PhiDictionarySpec) -> Vec<TestFunction> {
    let mut out = Vec::new();
    for c in &spec.bump_centers {
        for &s in &spec.bump_scales {
            out.push(TestFunction::Bump { center: c.clone(), scale: s });
        }
    }
    for n1 in 0..=spec.trig_max_freq {
        for n2 in 0..=spec.trig_max_freq {
            if n1 == 0 && n2 == 0 {
                continue;
            }
            for s1 in [false, true] {
                for s2 in [false, true] {
                    // sin(0) vanishes identically
                    if (s1 && n1 == 0) || (s2 && n2 == 0) {
                        continue;
                    }
                    out.push(TestFunction::Trig {
                        n: vec![n1, n2],
                        sine: vec![s1, s2],
                        half_width: spec.trig_half_width,
                    });
                }
            }
        }
    }
    for &s in &spec.clamp_scales {
        for axis in 0..2 {
            out.push(TestFunction::SmoothClamp { axis, scale: s });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeReference {
    pub m: usize,
    pub half_width: f64,
    pub dt: f64,
}

fn inf() -> f64 {
    f64::INFINITY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub ns: Vec<usize>,
    pub runs_per_n: usize,
    pub times: Vec<f64>,
    pub kernel: KernelSpec,
    /// Blob schedule `delta(N) = c N^{-1/4}` applied to a Biot-Savart kernel.
    #[serde(default)]
    pub delta_c: Option<f64>,
    pub w: WeightFamily,
    pub w_tilde: WeightFamily,
    #[serde(default = "inf", with = "crate::serde_ext::exponent")]
    pub r: f64,
    pub initial: InitialLaw,
    #[serde(default)]
    pub phi: PhiDictionarySpec,
    pub pde: PdeReference,
    pub seed_base: u64,
    /// Particle time step; `default_dt(N)` when absent.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub interaction: Interaction,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Skip the KDE and tightness diagnostics.
    #[serde(default)]
    pub skip_diagnostics: bool,
}

fn default_alpha() -> f64 {
    0.75
}

fn default_gamma() -> f64 {
    0.5
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.ns.is_empty() || self.ns.windows(2).any(|w| w[0] >= w[1]) || self.ns[0] < 2 {
            return bad("Ns must be a strictly increasing list of counts, each at least 2".into());
        }
        if self.runs_per_n < 4 {
            return bad(format!("runs_per_N must be at least 4, got {}", self.runs_per_n));
        }
        if self.times.is_empty() || self.times[0] <= 0.0 || self.times.windows(2).any(|w| w[0] >= w[1]) {
            return bad("times must be positive and strictly increasing".into());
        }
        if self.kernel.dim() != 2 || self.initial.dim() != Some(2) {
            return bad("experiments are two-dimensional with a closed-form initial law".into());
        }
        if self.initial.density(&[0.0, 0.0]).is_none() {
            return bad("the initial law needs a closed-form density for the PDE reference".into());
        }
        if let Some(c) = self.delta_c {
            if !(c > 0.0) || self.kernel.family != Family::BiotSavart {
                return bad("delta_c needs a positive constant and a Biot-Savart kernel".into());
            }
        }
        if !(self.alpha > 0.5 && self.alpha < 1.0) || !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("alpha must lie in (1/2, 1) and gamma in (0, 1)".into());
        }
        if !(self.r >= 1.0) {
            return bad(format!("r must be at least 1, got {}", self.r));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return bad(format!("dt must be positive, got {dt}"));
            }
        }
        self.kernel.validate()?;
        self.w.validate()?;
        self.w_tilde.validate()?;
        self.initial.validate()?;
        self.phi.validate()?;
        if !self.kernel.is_zero_family() {
            self.pde_config()?;
            if self.w.limit_mean().is_none() || self.w_tilde.limit_mean().is_none() {
                return bad("both weight families need a limiting mean".into());
            }
        }
        Ok(())
    }

    /// The kernel used at particle count `n`.
    pub fn kernel_at(&self, n: usize) -> KernelSpec {
        match self.delta_c {
            Some(c) => self.kernel.clone().with_regularization(Regularization::Blob { delta: particles::blob_delta(n, c) }),
            None => self.kernel.clone(),
        }
    }

    pub fn dt_at(&self, n: usize) -> f64 {
        self.dt.unwrap_or_else(|| particles::default_dt(n))
    }

    pub fn seed(&self, run: usize) -> u64 {
        self.seed_base.wrapping_add(run as u64)
    }

    fn pde_config(&self) -> Result<PdeConfig> {
        if self.kernel.family != Family::BiotSavart || self.kernel.domain != Domain::FreeSpace {
            return Err(Error::UnsupportedFamily(
                "the PDE reference exists for free-space Biot-Savart and zero kernels only".into(),
            ));
        }
        let p = self.pde;
        let c = PdeConfig::new(p.m, p.half_width, p.dt, 0.0, self.times.clone());
        c.validate()?;
        Ok(c)
    }

    fn sim_config(&self, n: usize, run: usize, w: WeightSequence) -> SimConfig {
        SimConfig {
            n,
            dt: self.dt_at(n),
            horizon: *self.times.last().expect("validated"),
            kernel: self.kernel_at(n),
            weights: w,
            seed: self.seed(run),
            interaction: self.interaction,
            initial: self.initial.clone(),
            record_every: 1,
            noise: true,
        }
    }
}

trait ZeroFamily {
    fn is_zero_family(&self) -> bool;
}

impl ZeroFamily for KernelSpec {
    fn is_zero_family(&self) -> bool {
        matches!(self.family, Family::Zero { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    V,
    G,
}

impl Target {
    pub fn label(self) -> &'static str {
        match self {
            Target::V => "v",
            Target::G => "g",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub n: usize,
    pub run_count: usize,
    pub t: f64,
    pub phi_id: String,
    pub target: Target,
    pub weak_error: f64,
    pub stderr: f64,
    pub mean: f64,
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub n: usize,
    pub run_count: usize,
    pub t: f64,
    pub gamma_moment: f64,
    pub kde_entropy: f64,
    pub kde_fisher: f64,
    pub tightness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub coupling: String,
    pub phi_ids: Vec<String>,
    pub sup_norms: Vec<f64>,
    pub errors: Vec<ErrorRow>,
    pub diagnostics: Vec<DiagnosticsRow>,
    /// Wall time per particle count, seconds.
    pub wall_times: Vec<(usize, f64)>,
    pub reference_wall_time: f64,
    /// Set when a runtime failure cut the experiment short.
    pub truncated: Option<String>,
}

pub const ERRORS_HEADER: &str = "N,run_count,t,phi_id,target,weak_error,stderr";
pub const DIAGNOSTICS_HEADER: &str = "N,run_count,t,gamma_moment,kde_entropy,kde_fisher,tightness";

impl ConvergenceReport {
    pub fn errors_csv(&self) -> String {
        let mut s = String::from(ERRORS_HEADER);
        s.push('\n');
        for r in &self.errors {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.n,
                r.run_count,
                r.t,
                r.phi_id,
                r.target.label(),
                r.weak_error,
                r.stderr
            ));
        }
        if let Some(m) = &self.truncated {
            s.push_str(&format!("# truncated: {}\n", m.replace('\n', " ")));
        }
        s
    }

    pub fn diagnostics_csv(&self) -> String {
        let mut s = String::from(DIAGNOSTICS_HEADER);
        s.push('\n');
        for r in &self.diagnostics {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.n, r.run_count, r.t, r.gamma_moment, r.kde_entropy, r.kde_fisher, r.tightness
            ));
        }
        if let Some(m) = &self.truncated {
            s.push_str(&format!("# truncated: {}\n", m.replace('\n', " ")));
        }
        s
    }

    /// Largest weak error over the dictionary at `(n, t, target)`.
    pub fn max_error(&self, n: usize, t: f64, target: Target) -> Option<f64> {
        self.errors
            .iter()
            .filter(|r| r.n == n && r.t == t && r.target == target)
            .map(|r| r.weak_error)
            .fold(None, |m, e| Some(m.map_or(e, |m: f64| m.max(e))))
    }
}

/// Reference pairings `refs[time][phi]` for both targets.
pub fn reference_pairings(plan: &ExperimentPlan, phis: &[TestFunction]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let wbar = plan.w.limit_mean();
    let wtbar = plan.w_tilde.limit_mean();
    if plan.kernel.is_zero_family() {
        let comps = plan
            .initial
            .gaussian_components()
            .ok_or_else(|| Error::InvalidSpec("the zero-kernel reference needs a Gaussian initial law".into()))?;
        let (wbar, wtbar) = match (wbar, wtbar) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::InvalidSpec("both weight families need a limiting mean".into())),
        };
        let heat: Vec<Vec<f64>> =
            plan.times.iter().map(|&t| phis.iter().map(|p| p.heat_expectation(&comps, t)).collect()).collect();
        let scale = |c: f64| heat.iter().map(|row| row.iter().map(|x| c * x).collect()).collect();
        return Ok((scale(wbar), scale(wtbar)));
    }
    let (wbar, wtbar) = (wbar.expect("validated"), wtbar.expect("validated"));
    let mut cfg = plan.pde_config()?;
    cfg.coupling = Coupling::BiotSavart;
    let solver = PdeSolver::new(cfg)?;
    let law = plan.initial.clone();
    let v0 = solver.sample(|x| wbar * law.density(x).expect("validated"));
    let g0 = solver.sample(|x| wtbar * law.density(x).expect("validated"));
    let sol = solver.solve(&v0, &g0)?;
    let v = sol.states.iter().map(|s| phis.iter().map(|p| solver.evaluate(&s.v_hat, p)).collect()).collect();
    let g = sol.states.iter().map(|s| phis.iter().map(|p| solver.evaluate(&s.g_hat, p)).collect()).collect();
    Ok((v, g))
}

/// `(1/N) sum_i |w_i| [ max_{s<t} |X_i(t) - X_i(s)| / (t - s)^{1 - alpha} + |X_i(0)|^{(r-1) gamma / r} ]`
/// over the recorded snapshots. With `r = inf` the moment exponent is `gamma`.
pub fn tightness_statistic(snapshots: &[ParticleState], w: &[f64], alpha: f64, gamma: f64, r: f64) -> Result<f64> {
    if !(alpha > 0.5 && alpha < 1.0) {
        return Err(Error::InvalidSpec(format!("alpha must lie in (1/2, 1), got {alpha}")));
    }
    let first = snapshots.first().ok_or_else(|| Error::InvalidSpec("no snapshots".into()))?;
    let n = first.len();
    let d = first.dim;
    if w.len() != n || snapshots.iter().any(|s| s.len() != n || s.dim != d) {
        return Err(Error::InvalidSpec("snapshots and weights disagree in size".into()));
    }
    let expo = if r.is_infinite() { gamma } else { (r - 1.0) * gamma / r };
    let mut acc = 0.0;
    for i in 0..n {
        if w[i] == 0.0 {
            continue;
        }
        let mut holder: f64 = 0.0;
        for (a, sa) in snapshots.iter().enumerate() {
            for sb in &snapshots[a + 1..] {
                let gap = sb.t - sa.t;
                if gap <= 0.0 {
                    continue;
                }
                let (xa, xb) = (sa.position(i), sb.position(i));
                let dist = xa.iter().zip(xb).map(|(p, q)| (q - p) * (q - p)).sum::<f64>().sqrt();
                holder = holder.max(dist / gap.powf(1.0 - alpha));
            }
        }
        let x0 = first.position(i).iter().map(|c| c * c).sum::<f64>().sqrt();
        acc += w[i].abs() * (holder + x0.powf(expo));
    }
    Ok(acc / n as f64)
}

struct RunOutput {
    /// `pairings[time][phi]` for `mu_N` and `mu~_N`.
    v: Vec<Vec<f64>>,
    g: Vec<Vec<f64>>,
    /// Initial state followed by the states at the output times.
    snapshots: Vec<ParticleState>,
}

fn run_one(plan: &ExperimentPlan, n: usize, run: usize, phis: &[TestFunction], w: &WeightSequence, wt: &[f64]) -> Result<RunOutput> {
    let sim = Simulator::new(plan.sim_config(n, run, w.clone()))?;
    let mut state = sim.initial_state()?;
    let mut snapshots = vec![state.clone()];
    let (mut v, mut g) = (Vec::new(), Vec::new());
    let dt = plan.dt_at(n);
    for &target in &plan.times {
        let steps = particles::step_count(target - state.t, dt);
        let start = state.t;
        for s in 0..steps {
            let t_next = if s + 1 == steps { target } else { start + (s + 1) as f64 * dt };
            let mut next = sim.step(&state, t_next - state.t)?;
            next.t = t_next;
            state = next;
        }
        let mu = SignedEmpiricalMeasure::from_state(&state, &w.values)?;
        let nu = SignedEmpiricalMeasure::from_state(&state, wt)?;
        v.push(phis.iter().map(|p| measure::pair(&mu, p)).collect());
        g.push(phis.iter().map(|p| measure::pair(&nu, p)).collect());
        snapshots.push(state.clone());
    }
    Ok(RunOutput { v, g, snapshots })
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / k;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

fn diagnostics(plan: &ExperimentPlan, n: usize, runs: &[RunOutput], wt: &[f64]) -> Result<Vec<DiagnosticsRow>> {
    let bw = measure::default_bandwidth(n);
    let radius = plan.pde.half_width;
    let nodes = ((4.0 * radius / bw).ceil() as usize + 1).clamp(65, 1025);
    let grid = GridSpec::centered(radius, nodes);
    let mut rows = Vec::new();
    for (k, &t) in plan.times.iter().enumerate() {
        let (mut gm, mut ent, mut fis, mut tight) = (0.0, 0.0, 0.0, 0.0);
        for r in runs {
            let s = &r.snapshots[k + 1];
            gm += measure::gamma_moment(&s.positions, s.dim, Some(wt), plan.gamma)?;
            let unit = SignedEmpiricalMeasure::from_state(s, &vec![1.0; n])?;
            let f = measure::kde(&unit, bw, &grid)?;
            ent += measure::entropy_estimate(&f)?;
            fis += measure::fisher_estimate(&f, measure::FISHER_FLOOR)?;
            tight += tightness_statistic(&r.snapshots[..k + 2], wt, plan.alpha, plan.gamma, plan.r)?;
        }
        let c = runs.len() as f64;
        rows.push(DiagnosticsRow {
            n,
            run_count: runs.len(),
            t,
            gamma_moment: gm / c,
            kde_entropy: ent / c,
            kde_fisher: fis / c,
            tightness: tight / c,
        });
    }
    Ok(rows)
}

fn runs_for(plan: &ExperimentPlan, n: usize, phis: &[TestFunction], w: &WeightSequence, wt: &[f64]) -> Result<Vec<RunOutput>> {
    let go = |run: usize| run_one(plan, n, run, phis, w, wt);
    #[cfg(feature = "parallel")]
    let out: Vec<Result<RunOutput>> = (0..plan.runs_per_n).into_par_iter().map(go).collect();
    #[cfg(not(feature = "parallel"))]
    let out: Vec<Result<RunOutput>> = (0..plan.runs_per_n).map(go).collect();
    out.into_iter().collect()
}

/// Run every particle count in order. Validation problems are errors; failures
/// during the runs stop the experiment and are recorded in `truncated`.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ConvergenceReport> {
    plan.validate()?;
    let phis = phi_dictionary(&plan.phi);
    let clock = Instant::now();
    let (ref_v, ref_g) = reference_pairings(plan, &phis)?;
    let mut report = ConvergenceReport {
        coupling: COUPLING_LABEL.to_string(),
        phi_ids: phis.iter().map(|p| p.id()).collect(),
        sup_norms: phis.iter().map(|p| p.sup_norm()).collect(),
        errors: Vec::new(),
        diagnostics: Vec::new(),
        wall_times: Vec::new(),
        reference_wall_time: clock.elapsed().as_secs_f64(),
        truncated: None,
    };
    for &n in &plan.ns {
        let clock = Instant::now();
        let w = plan.w.generate(n, plan.r)?;
        let wt = plan.w_tilde.values(n);
        let runs = match runs_for(plan, n, &phis, &w, &wt) {
            Ok(r) => r,
            Err(e) => {
                report.truncated = Some(format!("N = {n}: {e}"));
                break;
            }
        };
        for (k, &t) in plan.times.iter().enumerate() {
            for (target, refs) in [(Target::V, &ref_v), (Target::G, &ref_g)] {
                for (j, phi) in phis.iter().enumerate() {
                    let xs: Vec<f64> = runs
                        .iter()
                        .map(|r| if target == Target::V { r.v[k][j] } else { r.g[k][j] })
                        .collect();
                    let (mean, stderr) = mean_and_stderr(&xs);
                    report.errors.push(ErrorRow {
                        n,
                        run_count: runs.len(),
                        t,
                        phi_id: phi.id(),
                        target,
                        weak_error: (mean - refs[k][j]).abs(),
                        stderr,
                        mean,
                        reference: refs[k][j],
                    });
                }
            }
        }
        if !plan.skip_diagnostics {
            match diagnostics(plan, n, &runs, &wt) {
                Ok(rows) => report.diagnostics.extend(rows),
                Err(e) => {
                    report.truncated = Some(format!("diagnostics at N = {n}: {e}"));
                    break;
                }
            }
        }
        report.wall_times.push((n, clock.elapsed().as_secs_f64()));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(pos: Vec<f64>, t: f64) -> ParticleState {
        ParticleState { positions: pos, dim: 2, t, step_index: 0 }
    }

    #[test]
    fn dictionary_contents() {
        let d = phi_dictionary(&PhiDictionarySpec::default());
        // 4 bumps, 2 + 2 + 4 trig products, 2 clamps
        assert_eq!(d.len(), 14);
        assert!(d.iter().all(|p| p.sup_norm() == 1.0));
        let b = TestFunction::Bump { center: vec![0.0, 0.0], scale: 1.0 };
        assert_eq!(d[1], b);
        assert_eq!(b.eval(&[0.0, 0.0]), 1.0);
        let ids: Vec<String> = d.iter().map(|p| p.id()).collect();
        let mut uniq = ids.clone();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), ids.len());
    }

    #[test]
    fn frozen_particles_keep_only_the_moment_term() {
        let x0 = vec![1.0, 0.0, 0.0, 2.0, -3.0, 4.0];
        let snaps: Vec<ParticleState> = (0..5).map(|k| state(x0.clone(), 0.1 * k as f64)).collect();
        let w = [1.0, -2.0, 0.5];
        let r = 3.0;
        let e = (r - 1.0) * 0.5 / r;
        let want = (1.0 + 2.0 * 2f64.powf(e) + 0.5 * 5f64.powf(e)) / 3.0;
        let got = tightness_statistic(&snaps, &w, 0.75, 0.5, r).unwrap();
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn linear_path() {
        let tmax = 2.0;
        let snaps: Vec<ParticleState> = (0..=16).map(|k| {
            let t = tmax * k as f64 / 16.0;
            state(vec![t, 0.0], t)
        }).collect();
        let got = tightness_statistic(&snaps, &[1.0], 0.75, 0.5, f64::INFINITY).unwrap();
        assert!((got - tmax.powf(0.75)).abs() < 1e-14);
    }

    #[test]
    fn plan_validation() {
        let mut p = small_zero_plan();
        assert!(p.validate().is_ok());
        p.runs_per_n = 3;
        assert!(p.validate().is_err());
        let mut p = small_zero_plan();
        p.ns = vec![100, 50];
        assert!(p.validate().is_err());
        let mut p = small_zero_plan();
        p.kernel = KernelSpec::power_law(1.5, crate::kernels::Sign::Repulsive);
        assert!(p.validate().is_err());
    }

    fn small_zero_plan() -> ExperimentPlan {
        ExperimentPlan {
            ns: vec![50, 100],
            runs_per_n: 4,
            times: vec![0.1, 0.2],
            kernel: KernelSpec::zero(),
            delta_c: None,
            w: WeightFamily::TwoPiece { a1: 1.5, a2: -0.5 },
            w_tilde: WeightFamily::Constant { c: 1.0 },
            r: f64::INFINITY,
            initial: InitialLaw::standard_gaussian(2),
            phi: PhiDictionarySpec::default(),
            pde: PdeReference { m: 64, half_width: 8.0, dt: 0.01 },
            seed_base: 7,
            dt: Some(0.05),
            interaction: Interaction::Direct,
            alpha: 0.75,
            gamma: 0.5,
            skip_diagnostics: false,
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let p = small_zero_plan();
        let a = run_experiment(&p).unwrap();
        let b = run_experiment(&p).unwrap();
        assert_eq!(a.errors_csv(), b.errors_csv());
        assert_eq!(a.diagnostics_csv(), b.diagnostics_csv());
        assert!(a.truncated.is_none());
        assert_eq!(a.errors.len(), 2 * 2 * 2 * 14);
        assert_eq!(a.diagnostics.len(), 4);
        assert!(a.errors_csv().starts_with("N,run_count,t,phi_id,target,weak_error,stderr\n50,4,0.1,"));
    }
}
