//! `nexdiff`: particle runs, PDE solves, convergence experiments and checks,
//! all driven by one JSON configuration file.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use nexdiff_core::harness;
use nexdiff_core::io;
use nexdiff_core::kernels;
use nexdiff_core::particles::{ParticleState, Simulator};
use nexdiff_core::pde::{self, PdeSolver};
use nexdiff_core::validate::{self, Scale};
use nexdiff_core::weights;
use serde_json::{json, Value};

use crate::config::{FieldSpec, Loaded};

pub const OUT_DIR_ENV: &str = "NEXDIFF_OUT_DIR";

#[derive(Debug)]
pub enum CliError {
    /// Exit code 2.
    Config(String),
    /// Exit code 1.
    Runtime(String),
}

impl From<nexdiff_core::Error> for CliError {
    fn from(e: nexdiff_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "nexdiff", version, about = "Weighted interacting diffusions with singular kernels")]
struct Cli {
    /// Base output directory (overrides NEXDIFF_OUT_DIR and the config's output_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One particle run from the `simulate` section.
    Simulate { config: PathBuf },
    /// One PDE solve from the `pde` section.
    Pde { config: PathBuf },
    /// A convergence experiment from the `experiment` section.
    Converge { config: PathBuf },
    /// Run the validation suite and print a pass/fail table.
    Validate {
        /// Optional configuration, used only for its output_dir.
        config: Option<PathBuf>,
        /// Reduced problem sizes.
        #[arg(long)]
        fast: bool,
        /// Run only these check ids (comma separated).
        #[arg(long, value_delimiter = ',')]
        only: Vec<u32>,
        /// Exit with status 1 when any check fails.
        #[arg(long)]
        strict: bool,
    },
    /// Kernel admissibility report from the `kernel_check` section.
    KernelCheck { config: PathBuf },
    /// Weight-sequence norm report from the `weights_check` section.
    WeightsCheck { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(CliError::Config(m)) => {
            eprintln!("configuration error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

/// Output base: `--out`, then the environment, then the config, then `runs`.
fn base_dir(flag: &Option<PathBuf>, loaded: Option<&Loaded>) -> PathBuf {
    if let Some(p) = flag {
        return p.clone();
    }
    if let Some(p) = std::env::var_os(OUT_DIR_ENV) {
        return PathBuf::from(p);
    }
    if let Some(l) = loaded {
        if let Some(p) = &l.config.output_dir {
            return if p.is_absolute() { p.clone() } else { l.dir().join(p) };
        }
    }
    PathBuf::from("runs")
}

fn run_dir(base: &Path, command: &str, section: &Value) -> Result<PathBuf, CliError> {
    let hash = io::sha256_hex(section.to_string().as_bytes());
    let dir = base.join(format!("{command}-{}", &hash[..12]));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_manifest(dir: &Path, manifest: &Value) -> Result<(), CliError> {
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(manifest).expect("json") + "\n")?;
    Ok(())
}

fn manifest(command: &str, section: &Value, extra: Value) -> Value {
    let mut m = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config_hash": io::sha256_hex(section.to_string().as_bytes()),
        "config": section,
    });
    if let (Value::Object(m), Value::Object(e)) = (&mut m, extra) {
        m.extend(e);
    }
    m
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match &cli.command {
        Command::Simulate { config } => simulate(&cli, config),
        Command::Pde { config } => solve_pde(&cli, config),
        Command::Converge { config } => converge(&cli, config),
        Command::Validate { config, fast, only, strict } => {
            let loaded = config.as_deref().map(config::load).transpose()?;
            validate_cmd(&cli, loaded.as_ref(), *fast, only, *strict)
        }
        Command::KernelCheck { config } => kernel_check(&cli, config),
        Command::WeightsCheck { config } => weights_check(&cli, config),
    }
}

fn simulate(cli: &Cli, path: &Path) -> Result<ExitCode, CliError> {
    let loaded = config::load(path)?;
    let section = loaded.section("simulate", &loaded.config.simulate)?;
    let mut cfg = section.to_sim_config().map_err(|e| loaded.invalid("simulate", e))?;
    if let nexdiff_core::particles::InitialLaw::File { path } = &cfg.initial {
        if path.is_relative() {
            cfg.initial = nexdiff_core::particles::InitialLaw::File { path: loaded.dir().join(path) };
        }
    }
    let sim = Simulator::new(cfg.clone()).map_err(|e| loaded.invalid("simulate", e))?;
    let echo = serde_json::to_value(section).expect("json");
    let dir = run_dir(&base_dir(&cli.out, Some(&loaded)), "simulate", &echo)?;
    let clock = Instant::now();
    let traj = sim.run(&mut [])?;
    let mut bin = Vec::new();
    for s in &traj.snapshots {
        io::write_frame(&mut bin, s)?;
    }
    fs::write(dir.join("trajectory.bin"), bin)?;
    fs::write(dir.join("weights.csv"), cfg.weights.to_csv())?;
    fs::write(dir.join("summary.csv"), summary_csv(&traj.snapshots, &cfg.weights.values))?;
    write_manifest(
        &dir,
        &manifest(
            "simulate",
            &echo,
            json!({
                "seeds": [cfg.seed],
                "sim_config_hash": traj.manifest.config_hash,
                "steps": traj.manifest.steps,
                "wall_time_s": clock.elapsed().as_secs_f64(),
                "outputs": ["trajectory.bin", "weights.csv", "summary.csv"],
                "status": "ok",
            }),
        ),
    )?;
    println!("{}", dir.display());
    Ok(ExitCode::SUCCESS)
}

/// Per snapshot: time, weighted mass, weighted first moments, mean squared radius.
fn summary_csv(snaps: &[ParticleState], w: &[f64]) -> String {
    let mut s = String::from("step,t,mass,m1,m2,mean_r2\n");
    for st in snaps {
        let n = st.len() as f64;
        let mass: f64 = w.iter().sum::<f64>() / n;
        let mut m = [0.0; 2];
        let mut r2 = 0.0;
        for (i, x) in st.points().enumerate() {
            for c in 0..x.len().min(2) {
                m[c] += w[i] * x[c] / n;
            }
            r2 += x.iter().map(|c| c * c).sum::<f64>() / n;
        }
        s.push_str(&format!("{},{},{},{},{},{}\n", st.step_index, st.t, mass, m[0], m[1], r2));
    }
    s
}

fn solve_pde(cli: &Cli, path: &Path) -> Result<ExitCode, CliError> {
    let loaded = config::load(path)?;
    let section = loaded.section("pde", &loaded.config.pde)?;
    let cfg = section.to_pde_config().map_err(|e| loaded.invalid("pde", e))?;
    let solver = PdeSolver::new(cfg.clone()).map_err(|e| loaded.invalid("pde", e))?;
    let v0 = section.v0.grid(&solver, &loaded.dir()).map_err(|e| loaded.invalid("pde", e))?;
    let g0 = section.g0.grid(&solver, &loaded.dir()).map_err(|e| loaded.invalid("pde", e))?;
    let echo = serde_json::to_value(section).expect("json");
    let dir = run_dir(&base_dir(&cli.out, Some(&loaded)), "pde", &echo)?;
    let clock = Instant::now();
    let sol = match solver.solve(&v0, &g0) {
        Ok(s) => s,
        Err(e @ nexdiff_core::Error::BoundaryMass { .. }) => return Err(loaded.invalid("pde", e)),
        Err(e) => return Err(e.into()),
    };
    let mut ledger = String::from("step,t,mass_v,mass_g,l2_g,max_u,cfl_bound\n");
    for e in &sol.ledger {
        ledger.push_str(&format!("{},{},{},{},{},{},{}\n", e.step, e.t, e.mass_v, e.mass_g, e.l2_g, e.max_u, e.cfl_bound));
    }
    fs::write(dir.join("ledger.csv"), ledger)?;
    let mut outputs = vec!["ledger.csv".to_string()];
    let mut oracle = Vec::new();
    for (k, s) in sol.states.iter().enumerate() {
        let vg = solver.v_grid(s);
        if section.write_fields {
            for (name, g) in [(format!("v_{k}.bin"), &vg), (format!("g_{k}.bin"), &solver.g_grid(s))] {
                let mut buf = Vec::new();
                io::write_grid(&mut buf, g)?;
                fs::write(dir.join(&name), buf)?;
                outputs.push(name);
            }
        }
        if let FieldSpec::Oseen { circulation, t } = section.v0 {
            let age = t + (s.t - cfg.t0);
            let err = pde::relative_l2_error(&vg, |x| pde::oseen(circulation, age, x));
            oracle.push(json!({"t": s.t, "oseen_relative_l2_error": err}));
        }
    }
    let summary = json!({
        "output_times": cfg.output_times,
        "truncation_proxy": sol.truncation_proxy,
        "final": sol.ledger.last(),
        "oracle": oracle,
    });
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary).expect("json") + "\n")?;
    outputs.push("summary.json".into());
    write_manifest(
        &dir,
        &manifest(
            "pde",
            &echo,
            json!({"seeds": [], "steps": sol.ledger.len() - 1, "wall_time_s": clock.elapsed().as_secs_f64(), "outputs": outputs, "status": "ok"}),
        ),
    )?;
    println!("{}", dir.display());
    Ok(ExitCode::SUCCESS)
}

fn converge(cli: &Cli, path: &Path) -> Result<ExitCode, CliError> {
    let loaded = config::load(path)?;
    let plan = loaded.section("experiment", &loaded.config.experiment)?;
    plan.validate().map_err(|e| loaded.invalid("experiment", e))?;
    let echo = serde_json::to_value(plan).expect("json");
    let dir = run_dir(&base_dir(&cli.out, Some(&loaded)), "converge", &echo)?;
    let clock = Instant::now();
    let report = harness::run_experiment(plan)?;
    fs::write(dir.join("errors.csv"), report.errors_csv())?;
    fs::write(dir.join("diagnostics.csv"), report.diagnostics_csv())?;
    let seeds: Vec<u64> = (0..plan.runs_per_n).map(|r| plan.seed(r)).collect();
    let status = if report.truncated.is_some() { "truncated" } else { "ok" };
    write_manifest(
        &dir,
        &manifest(
            "converge",
            &echo,
            json!({
                "seeds": seeds,
                "coupling": report.coupling,
                "phi": report.phi_ids.iter().zip(&report.sup_norms).map(|(id, s)| json!({"id": id, "sup_norm": s})).collect::<Vec<_>>(),
                "wall_time_s": clock.elapsed().as_secs_f64(),
                "wall_times_per_n": report.wall_times,
                "reference_wall_time_s": report.reference_wall_time,
                "outputs": ["errors.csv", "diagnostics.csv"],
                "status": status,
                "truncated": report.truncated,
            }),
        ),
    )?;
    println!("{}", dir.display());
    match &report.truncated {
        Some(m) => Err(CliError::Runtime(format!("experiment truncated: {m} (partial results in {})", dir.display()))),
        None => Ok(ExitCode::SUCCESS),
    }
}

fn validate_cmd(cli: &Cli, loaded: Option<&Loaded>, fast: bool, only: &[u32], strict: bool) -> Result<ExitCode, CliError> {
    if let Some(bad) = only.iter().find(|id| !validate::CHECKS.iter().any(|c| c.0 == **id)) {
        return Err(CliError::Config(format!("unknown check id {bad}")));
    }
    let scale = if fast { Scale::Fast } else { Scale::Full };
    let clock = Instant::now();
    let results = validate::run_suite(scale, only);
    print!("{}", validate::table(&results));
    let echo = json!({"scale": scale, "only": only});
    let dir = run_dir(&base_dir(&cli.out, loaded), "validate", &echo)?;
    fs::write(dir.join("validation.csv"), validate::csv(&results))?;
    let all = results.iter().all(|r| r.passed);
    write_manifest(
        &dir,
        &manifest(
            "validate",
            &echo,
            json!({"seeds": [], "wall_time_s": clock.elapsed().as_secs_f64(), "outputs": ["validation.csv"], "status": if all { "ok" } else { "failures" }}),
        ),
    )?;
    Ok(if strict && !all { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn kernel_check(cli: &Cli, path: &Path) -> Result<ExitCode, CliError> {
    let loaded = config::load(path)?;
    let section = loaded.section("kernel_check", &loaded.config.kernel_check)?;
    let reports = section
        .r
        .iter()
        .map(|&r| kernels::admissibility_report(&section.kernel, r))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| loaded.invalid("kernel_check", e))?;
    let echo = serde_json::to_value(section).expect("json");
    let dir = run_dir(&base_dir(&cli.out, Some(&loaded)), "kernel-check", &echo)?;
    let mut csv = String::from("family,r,split,p1,q1,p2,q2,satisfied,margin\n");
    for rep in &reports {
        let v = serde_json::to_value(rep).expect("json");
        let cell = |k: &str| match &v[k] {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        csv.push_str(&format!(
            "{},{},\"{}\",{},{},{},{},{},{}\n",
            cell("family"),
            cell("r"),
            cell("split").replace('"', "'"),
            cell("p1"),
            cell("q1"),
            cell("p2"),
            cell("q2"),
            cell("satisfied"),
            cell("margin")
        ));
        println!("r = {}: {}", cell("r"), if rep.satisfied { "admissible" } else { "not admissible" });
    }
    fs::write(dir.join("admissibility.csv"), csv)?;
    fs::write(dir.join("admissibility.json"), serde_json::to_string_pretty(&reports).expect("json") + "\n")?;
    write_manifest(
        &dir,
        &manifest("kernel-check", &echo, json!({"seeds": [], "outputs": ["admissibility.csv", "admissibility.json"], "status": "ok"})),
    )?;
    println!("{}", dir.display());
    Ok(ExitCode::SUCCESS)
}

fn weights_check(cli: &Cli, path: &Path) -> Result<ExitCode, CliError> {
    let loaded = config::load(path)?;
    let section = loaded.section("weights_check", &loaded.config.weights_check)?;
    let reports = section
        .r
        .iter()
        .map(|&r| weights::check_wr(&section.family, r, &section.ns))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| loaded.invalid("weights_check", e))?;
    let echo = serde_json::to_value(section).expect("json");
    let dir = run_dir(&base_dir(&cli.out, Some(&loaded)), "weights-check", &echo)?;
    let mut csv = String::from("r,N,norm\n");
    for rep in &reports {
        for (n, v) in rep.ns.iter().zip(&rep.norms) {
            csv.push_str(&format!("{},{n},{v}\n", if rep.r.is_infinite() { "inf".to_string() } else { rep.r.to_string() }));
        }
        println!(
            "r = {}: growth exponent {:.4}, {}",
            rep.r,
            rep.growth_exponent,
            if rep.bounded { "bounded" } else { "unbounded" }
        );
    }
    fs::write(dir.join("wr.csv"), csv)?;
    fs::write(dir.join("wr.json"), serde_json::to_string_pretty(&reports).expect("json") + "\n")?;
    write_manifest(&dir, &manifest("weights-check", &echo, json!({"seeds": [], "outputs": ["wr.csv", "wr.json"], "status": "ok"})))?;
    println!("{}", dir.display());
    Ok(ExitCode::SUCCESS)
}
