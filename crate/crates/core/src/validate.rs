//! The validation suite behind `nexdiff validate`: every acceptance property,
//! at full size or at a reduced size that finishes in seconds.

use std::f64::consts::{E, PI};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::harness::{self, ExperimentPlan, PdeReference, PhiDictionarySpec, Target};
use crate::kernels::{self, KernelSpec, Sign};
use crate::measure::{self, DensityGrid, GaussianMarginal, ProductLawSpec};
use crate::particles::{self, gaussian_density, InitialLaw, Interaction, SimConfig};
use crate::pde::{self, PdeConfig, PdeSolver};
use crate::quad;
use crate::rng;
use crate::testfn::TestFunction;
use crate::weights::{self, WeightFamily, WeightSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Fast,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

type Check = fn(Scale) -> Result<(bool, String)>;

pub const CHECKS: [(u32, &str, Check); 10] = [
    (1, "oseen_vortex", oseen_vortex),
    (2, "conservation", conservation),
    (3, "gaussian_fisher", gaussian_fisher),
    (4, "fisher_additivity_lp_scaling", additivity_and_scaling),
    (5, "pairing_combinatorics", pairings),
    (6, "weak_convergence", weak_convergence),
    (7, "zero_kernel_exactness", zero_kernel),
    (8, "azuma_bound", azuma),
    (9, "kernel_admissibility", admissibility),
    (10, "determinism_and_weights", determinism_and_weights),
];

/// Run the selected checks (all when `only` is empty). Errors inside a check
/// count as failures and are reported in its detail.
pub fn run_suite(scale: Scale, only: &[u32]) -> Vec<CheckResult> {
    CHECKS
        .iter()
        .filter(|(id, _, _)| only.is_empty() || only.contains(id))
        .map(|&(id, name, check)| {
            let clock = Instant::now();
            let (passed, detail) = check(scale).unwrap_or_else(|e| (false, format!("error: {e}")));
            CheckResult { id, name: name.to_string(), passed, detail, seconds: clock.elapsed().as_secs_f64() }
        })
        .collect()
}

pub fn table(results: &[CheckResult]) -> String {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(4);
    let mut s = String::new();
    for r in results {
        s.push_str(&format!(
            "{:>2}  {:<width$}  {}  {}  ({:.1} s)\n",
            r.id,
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.detail,
            r.seconds
        ));
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    s.push_str(&format!("{} passed, {failed} failed\n", results.len() - failed));
    s
}

pub fn csv(results: &[CheckResult]) -> String {
    let mut s = String::from("id,name,status,detail\n");
    for r in results {
        s.push_str(&format!(
            "{},{},{},\"{}\"\n",
            r.id,
            r.name,
            if r.passed { "pass" } else { "fail" },
            r.detail.replace('"', "'")
        ));
    }
    s
}

fn pick<T>(scale: Scale, fast: T, full: T) -> T {
    match scale {
        Scale::Fast => fast,
        Scale::Full => full,
    }
}

fn oseen_vortex(scale: Scale) -> Result<(bool, String)> {
    let clock = Instant::now();
    let m = pick(scale, 128, 256);
    let solver = PdeSolver::new(PdeConfig::new(m, 8.0, 0.01, 0.5, vec![1.0]))?;
    let v0 = solver.sample(|x| pde::oseen(1.0, 0.5, x));
    let g0 = solver.sample(|x| gaussian_density(x, &[1.0, 0.0], 0.5));
    let sol = solver.solve(&v0, &g0)?;
    let err = pde::relative_l2_error(&solver.v_grid(&sol.states[0]), |x| pde::oseen(1.0, 1.0, x));
    let secs = clock.elapsed().as_secs_f64();
    Ok((err < 1e-3 && secs < 60.0, format!("{m}^2 grid: relative L2 error {err:.2e}, {secs:.1} s")))
}

fn conservation(scale: Scale) -> Result<(bool, String)> {
    let m = pick(scale, 64, 128);
    let solver = PdeSolver::new(PdeConfig::new(m, 8.0, 0.005, 0.0, vec![0.1, 0.25, 0.5]))?;
    let v0 = solver.sample(|x| 3.0 * gaussian_density(x, &[1.0, 0.3], 0.6) - 2.0 * gaussian_density(x, &[-1.0, -0.5], 0.5));
    let g0 = solver.sample(|x| gaussian_density(x, &[0.0, 1.0], 0.7) + 0.5 * gaussian_density(x, &[0.0, -1.5], 0.4));
    let sol = solver.solve(&v0, &g0)?;
    let first = &sol.ledger[0];
    let drift = sol
        .ledger
        .iter()
        .map(|e| (e.mass_v - first.mass_v).abs().max((e.mass_g - first.mass_g).abs()))
        .fold(0.0, f64::max);
    let growth = sol.ledger.windows(2).map(|w| (w[1].l2_g - w[0].l2_g) / (w[1].t - w[0].t)).fold(f64::NEG_INFINITY, f64::max);
    Ok((drift < 1e-12 && growth <= 1e-8, format!("mass drift {drift:.1e}, max L2(g) growth rate {growth:.1e}")))
}

fn gaussian_fisher(_: Scale) -> Result<(bool, String)> {
    let mut worst_i: f64 = 0.0;
    let mut worst_h: f64 = 0.0;
    for sigma in [0.5, 1.0, 2.0] {
        let f = DensityGrid::centered(8.0 * sigma, 256, |x| gaussian_density(x, &[0.0, 0.0], sigma))?;
        worst_i = worst_i.max((measure::fisher_estimate(&f, measure::FISHER_FLOOR)? - 2.0 / (sigma * sigma)).abs());
        worst_h = worst_h.max((measure::entropy_estimate(&f)? + (2.0 * PI * E * sigma * sigma).ln()).abs());
    }
    Ok((worst_i < 1e-4 && worst_h < 1e-3, format!("Fisher error {worst_i:.1e}, entropy error {worst_h:.1e}")))
}

fn additivity_and_scaling(_: Scale) -> Result<(bool, String)> {
    let (s1, s2) = (0.7, 1.3);
    let f = DensityGrid::centered(10.0, 256, |x| {
        (-(x[0] * x[0]) / (2.0 * s1 * s1) - x[1] * x[1] / (2.0 * s2 * s2)).exp() / (2.0 * PI * s1 * s2)
    })?;
    let gap = (measure::fisher_estimate(&f, measure::FISHER_FLOOR)? - 1.0 / (s1 * s1) - 1.0 / (s2 * s2)).abs();
    let mut worst: f64 = 0.0;
    for p in [1.5, 2.0] {
        let ts: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];
        let mut lx = Vec::new();
        let mut ly = Vec::new();
        for t in ts {
            let s = (2.0 * t).sqrt();
            let g = DensityGrid::centered(9.0 * s, 256, |x| gaussian_density(x, &[0.0, 0.0], s))?;
            lx.push(f64::ln(t));
            ly.push(g.lp_norm(p).ln());
        }
        let want = -(1.0 - 1.0 / p);
        worst = worst.max(((quad::fit_slope(&lx, &ly) - want) / want).abs());
    }
    Ok((gap < 1e-4 && worst < 0.02, format!("additivity gap {gap:.1e}, L^p exponent relative error {worst:.1e}")))
}

fn pairings(_: Scale) -> Result<(bool, String)> {
    let expected: [u128; 11] = [1, 3, 3, 15, 15, 105, 105, 945, 945, 10395, 10395];
    let mut ok = true;
    for n in 2..=12usize {
        ok &= measure::count_pairings(n) == Some(expected[n - 2]);
        ok &= measure::enumerate_pairings(n)?.len() as u128 == expected[n - 2];
    }
    for n in 4..=12 {
        ok &= measure::pair_multiplicity_check(n)?;
    }
    let det = measure::jacobian_determinant(
        |z| {
            let (a, b) = measure::rotate_pair(&z[0..2], &z[2..4]);
            [a, b].concat()
        },
        &[0.3, -1.2, 0.7, 2.1],
        1e-5,
    );
    ok &= (det - 1.0).abs() < 1e-10;
    Ok((ok, format!("counts and enumeration N=2..12, multiplicity N=4..12, rotation det {det:.12}")))
}

fn weak_convergence_plan(scale: Scale) -> ExperimentPlan {
    ExperimentPlan {
        ns: pick(scale, vec![250, 1000, 4000], vec![1000, 4000, 16000]),
        runs_per_n: 8,
        times: vec![0.25, 0.5],
        kernel: KernelSpec::biot_savart(),
        delta_c: Some(1.0),
        w: WeightFamily::TwoPiece { a1: 1.0, a2: -1.0 },
        w_tilde: WeightFamily::Constant { c: 1.0 },
        r: f64::INFINITY,
        initial: InitialLaw::standard_gaussian(2),
        phi: PhiDictionarySpec::default(),
        pde: PdeReference { m: pick(scale, 64, 128), half_width: 8.0, dt: 0.005 },
        seed_base: 1000,
        dt: Some(pick(scale, 0.05, 0.025)),
        interaction: Interaction::Direct,
        alpha: 0.75,
        gamma: 0.5,
        skip_diagnostics: true,
    }
}

fn weak_convergence(scale: Scale) -> Result<(bool, String)> {
    let plan = weak_convergence_plan(scale);
    let report = harness::run_experiment(&plan)?;
    if let Some(m) = report.truncated {
        return Ok((false, format!("truncated: {m}")));
    }
    let mut ok = true;
    let mut parts = Vec::new();
    for target in [Target::V, Target::G] {
        let errs: Vec<f64> = plan
            .ns
            .iter()
            .map(|&n| plan.times.iter().filter_map(|&t| report.max_error(n, t, target)).fold(0.0, f64::max))
            .collect();
        ok &= errs.windows(2).all(|w| w[1] < w[0]) && errs[2] < 0.5 * errs[0];
        parts.push(format!("{} {:.2e} {:.2e} {:.2e}", target.label(), errs[0], errs[1], errs[2]));
    }
    Ok((ok, format!("N = {:?}: {}", plan.ns, parts.join(", "))))
}

fn zero_kernel(scale: Scale) -> Result<(bool, String)> {
    let plan = ExperimentPlan {
        ns: pick(scale, vec![100, 400], vec![100, 400, 1600]),
        runs_per_n: pick(scale, 40, 100),
        times: vec![0.25, 0.5],
        kernel: KernelSpec::zero(),
        delta_c: None,
        w: WeightFamily::TwoPiece { a1: 1.5, a2: -0.5 },
        w_tilde: WeightFamily::Constant { c: 1.0 },
        r: f64::INFINITY,
        initial: InitialLaw::Gaussian { mean: vec![0.2, -0.1], sigma: 0.8 },
        phi: PhiDictionarySpec::default(),
        pde: PdeReference { m: 64, half_width: 8.0, dt: 0.01 },
        seed_base: 7000,
        dt: Some(0.25),
        interaction: Interaction::Direct,
        alpha: 0.75,
        gamma: 0.5,
        skip_diagnostics: true,
    };
    let report = harness::run_experiment(&plan)?;
    let worst = report
        .errors
        .iter()
        .filter(|r| r.target == Target::V)
        .map(|r| r.weak_error / r.stderr)
        .fold(0.0, f64::max);
    // dH/dt = -I along the heat flow, both from grid estimators
    let mut rel: f64 = 0.0;
    for t in [0.25, 0.5] {
        let s = |t: f64| (0.64 + 2.0 * t).sqrt();
        let grid = |t: f64| DensityGrid::centered(10.0, 256, |x| gaussian_density(x, &[0.0, 0.0], s(t)));
        let h = 1e-3;
        let dh = (measure::entropy_estimate(&grid(t + h)?)? - measure::entropy_estimate(&grid(t - h)?)?) / (2.0 * h);
        let i = measure::fisher_estimate(&grid(t)?, measure::FISHER_FLOOR)?;
        rel = rel.max(((dh + i) / i).abs());
    }
    Ok((worst < 3.0 && rel < 1e-2, format!("max bias/stderr {worst:.2}, |dH/dt + I|/I {rel:.1e}")))
}

fn azuma(scale: Scale) -> Result<(bool, String)> {
    let n = 1000;
    let trials = pick(scale, 1000, 2000);
    let spec = ProductLawSpec::iid(
        n,
        GaussianMarginal { mean: vec![0.0, 0.0], sigma: 1.0 },
        WeightSequence::constant(n, 1.0),
    )?;
    let res = measure::azuma_gap(&spec, &TestFunction::HardClamp { axis: 0, scale: 1.0 }, trials, 0.2, 4242)?;
    let ok = res.frequency <= res.bound + 3.0 * res.stderr;
    Ok((ok, format!("frequency {} vs bound {:.4} + 3 x {:.4}", res.frequency, res.bound, res.stderr)))
}

fn admissibility(_: Scale) -> Result<(bool, String)> {
    let mut ok = kernels::admissibility_report(&KernelSpec::biot_savart(), 3.0)?.satisfied
        && !kernels::admissibility_report(&KernelSpec::biot_savart(), 2.0)?.satisfied;
    let mut count = 0;
    for alpha in [1.05, 1.2, 1.5, 1.8, 1.95] {
        for r in [1.1, 1.5, 2.0, 3.0, 5.0, 10.0, 30.0, f64::INFINITY] {
            let threshold = 1.0 / (2.0 - alpha);
            if (r - threshold).abs() < 1e-6 {
                continue;
            }
            count += 1;
            let rep = kernels::admissibility_report(&KernelSpec::power_law(alpha, Sign::Repulsive), r)?;
            ok &= rep.satisfied == (r > threshold);
        }
    }
    Ok((ok, format!("Biot-Savart r=3 / r=2 and {count} power-law points")))
}

fn determinism_and_weights(scale: Scale) -> Result<(bool, String)> {
    let mut plan = weak_convergence_plan(scale);
    plan.ns = vec![100, 200];
    plan.runs_per_n = 4;
    plan.pde = PdeReference { m: 64, half_width: 8.0, dt: 0.01 };
    plan.skip_diagnostics = false;
    let a = harness::run_experiment(&plan)?;
    let b = harness::run_experiment(&plan)?;
    let same_report = a.errors_csv() == b.errors_csv() && a.diagnostics_csv() == b.diagnostics_csv();
    let cfg = SimConfig {
        n: 200,
        dt: 0.01,
        horizon: 0.1,
        kernel: KernelSpec::blob_biot_savart(0.2),
        weights: WeightFamily::TwoPiece { a1: 1.0, a2: -1.0 }.generate(200, 2.0)?,
        seed: 99,
        interaction: Interaction::Direct,
        initial: InitialLaw::standard_gaussian(2),
        record_every: 5,
        noise: true,
    };
    let same_traj = particles::simulate(&cfg, &mut [])?.snapshots == particles::simulate(&cfg, &mut [])?.snapshots;
    let rs = [1.0, 1.5, 2.0, 3.0, 4.0, 8.0, f64::INFINITY];
    let mut monotone = true;
    for k in 0..100u64 {
        let mut g = rng::experiment_rng(k, "nexdiff/validate", 0);
        let len = 1 + (rng::uniform(&mut g) * 100.0) as usize;
        let w: Vec<f64> = (0..len).map(|_| rng::normal_pair(&mut g).0 * 10f64.powf(2.0 * rng::uniform(&mut g))).collect();
        let norms: Vec<f64> = rs.iter().map(|&r| weights::lr_norm(&w, r)).collect();
        monotone &= norms.windows(2).all(|p| p[1] >= p[0] * (1.0 - 1e-12));
    }
    let ns = [1000, 10_000, 100_000, 1_000_000];
    let heavy = WeightFamily::HeavyTail { theta: 1.0 / 3.0 };
    let l2 = weights::check_wr(&heavy, 2.0, &ns)?.bounded;
    let l4 = weights::check_wr(&heavy, 4.0, &ns)?.bounded;
    Ok((
        same_report && same_traj && monotone && l2 && !l4,
        format!("reports {same_report}, trajectories {same_traj}, lr monotone {monotone}, heavy tail l2 bounded {l2}, l4 bounded {l4}"),
    ))
}
