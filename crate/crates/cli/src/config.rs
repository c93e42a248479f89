//! The JSON run configuration. One file may hold several sections; each
//! subcommand reads its own.

use std::path::{Path, PathBuf};

use nexdiff_core::harness::ExperimentPlan;
use nexdiff_core::kernels::KernelSpec;
use nexdiff_core::measure::DensityGrid;
use nexdiff_core::particles::{gaussian_density, InitialLaw, Interaction, MixtureComponent, SimConfig};
use nexdiff_core::pde::{self, Coupling, PdeConfig};
use nexdiff_core::weights::{WeightFamily, WeightSequence};
use serde::{Deserialize, Serialize};

use crate::CliError;

fn inf() -> f64 {
    f64::INFINITY
}

fn one() -> u64 {
    1
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub simulate: Option<SimulateSection>,
    #[serde(default)]
    pub pde: Option<PdeSection>,
    #[serde(default)]
    pub experiment: Option<ExperimentPlan>,
    #[serde(default)]
    pub kernel_check: Option<KernelCheckSection>,
    #[serde(default)]
    pub weights_check: Option<WeightsCheckSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub n: usize,
    pub dt: f64,
    #[serde(alias = "T")]
    pub horizon: f64,
    pub kernel: KernelSpec,
    pub weights: WeightFamily,
    /// Explicit weights; overrides `weights` when present.
    #[serde(default)]
    pub weight_values: Option<Vec<f64>>,
    #[serde(default = "inf", with = "nexdiff_core::serde_ext::exponent")]
    pub r: f64,
    pub seed: u64,
    #[serde(default)]
    pub interaction: Interaction,
    pub initial: InitialLaw,
    #[serde(default = "one")]
    pub record_every: u64,
    #[serde(default = "yes")]
    pub noise: bool,
}

impl SimulateSection {
    pub fn to_sim_config(&self) -> nexdiff_core::Result<SimConfig> {
        let values = match &self.weight_values {
            Some(v) => v.clone(),
            None => {
                self.weights.validate()?;
                self.weights.values(self.n)
            }
        };
        let cfg = SimConfig {
            n: self.n,
            dt: self.dt,
            horizon: self.horizon,
            kernel: self.kernel.clone(),
            weights: WeightSequence::new(values, self.r)?,
            seed: self.seed,
            interaction: self.interaction,
            initial: self.initial.clone(),
            record_every: self.record_every,
            noise: self.noise,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// An initial field for the PDE solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    /// The Oseen profile of the given circulation at age `t`.
    Oseen { circulation: f64, t: f64 },
    Gaussian {
        mean: Vec<f64>,
        sigma: f64,
        #[serde(default = "unit")]
        mass: f64,
    },
    /// Signed Gaussian mixture; weights are masses and may be negative.
    Mixture { components: Vec<MixtureComponent> },
    Constant { value: f64 },
    /// A density grid file matching the solver grid.
    File { path: PathBuf },
}

fn unit() -> f64 {
    1.0
}

impl FieldSpec {
    pub fn grid(&self, solver: &pde::PdeSolver, base: &Path) -> nexdiff_core::Result<DensityGrid> {
        match self {
            FieldSpec::Oseen { circulation, t } => Ok(solver.sample(|x| pde::oseen(*circulation, *t, x))),
            FieldSpec::Gaussian { mean, sigma, mass } => Ok(solver.sample(|x| mass * gaussian_density(x, mean, *sigma))),
            FieldSpec::Mixture { components } => Ok(solver.sample(|x| {
                components.iter().map(|c| c.weight * gaussian_density(x, &c.mean, c.sigma)).sum()
            })),
            FieldSpec::Constant { value } => Ok(solver.sample(|_| *value)),
            FieldSpec::File { path } => {
                let p = if path.is_absolute() { path.clone() } else { base.join(path) };
                let mut f = std::fs::File::open(&p)
                    .map_err(|e| nexdiff_core::Error::FileFormat(format!("cannot open {}: {e}", p.display())))?;
                nexdiff_core::io::read_grid(&mut f)
            }
        }
    }

    pub fn validate(&self) -> nexdiff_core::Result<()> {
        let bad = |m: &str| Err(nexdiff_core::Error::InvalidSpec(m.to_string()));
        match self {
            FieldSpec::Oseen { t, .. } if !(*t > 0.0) => bad("oseen age t must be positive"),
            FieldSpec::Gaussian { mean, sigma, .. } if mean.len() != 2 || !(*sigma > 0.0) => {
                bad("gaussian fields need a 2D mean and sigma > 0")
            }
            FieldSpec::Mixture { components } if components.iter().any(|c| c.mean.len() != 2 || !(c.sigma > 0.0)) => {
                bad("mixture components need a 2D mean and sigma > 0")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeSection {
    pub m: usize,
    pub half_width: f64,
    pub dt: f64,
    #[serde(default)]
    pub t0: f64,
    pub output_times: Vec<f64>,
    #[serde(default)]
    pub coupling: Coupling,
    #[serde(default = "yes")]
    pub mean_free: bool,
    #[serde(default = "yes")]
    pub require_compact_support: bool,
    pub v0: FieldSpec,
    pub g0: FieldSpec,
    /// Write every output state as binary density grids.
    #[serde(default = "yes")]
    pub write_fields: bool,
}

impl PdeSection {
    pub fn to_pde_config(&self) -> nexdiff_core::Result<PdeConfig> {
        self.v0.validate()?;
        self.g0.validate()?;
        let c = PdeConfig {
            m: self.m,
            half_width: self.half_width,
            dt: self.dt,
            t0: self.t0,
            output_times: self.output_times.clone(),
            coupling: self.coupling,
            mean_free: self.mean_free,
            require_compact_support: self.require_compact_support,
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelCheckSection {
    pub kernel: KernelSpec,
    #[serde(with = "nexdiff_core::serde_ext::exponent_vec")]
    pub r: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsCheckSection {
    pub family: WeightFamily,
    #[serde(with = "nexdiff_core::serde_ext::exponent_vec")]
    pub r: Vec<f64>,
    pub ns: Vec<usize>,
}

/// A parsed configuration together with its source text.
pub struct Loaded {
    pub config: Config,
    pub text: String,
    pub path: PathBuf,
}

impl Loaded {
    pub fn dir(&self) -> PathBuf {
        self.path.parent().map(Path::to_path_buf).unwrap_or_default()
    }

    /// 1-based line of the first occurrence of `"key"`, or 1.
    pub fn line_of(&self, key: &str) -> usize {
        let needle = format!("\"{key}\"");
        self.text.lines().position(|l| l.contains(&needle)).map_or(1, |i| i + 1)
    }

    /// A configuration error pointing at the named section.
    pub fn invalid(&self, section: &str, msg: impl std::fmt::Display) -> CliError {
        CliError::Config(format!("{}:{}: {section}: {msg}", self.path.display(), self.line_of(section)))
    }

    pub fn section<'a, T>(&self, name: &str, s: &'a Option<T>) -> Result<&'a T, CliError> {
        s.as_ref().ok_or_else(|| {
            CliError::Config(format!("{}:1: missing section `{name}`", self.path.display()))
        })
    }
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: cannot read configuration: {e}", path.display())))?;
    let mut de = serde_json::Deserializer::from_str(&text);
    let config: Config = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let at = e.path().to_string();
        let inner = e.into_inner();
        let mut msg = inner.to_string();
        if let Some(k) = msg.rfind(" at line ") {
            msg.truncate(k);
        }
        let loc = if at == "." { String::new() } else { format!(" at `{at}`") };
        CliError::Config(format!("{}:{}:{}: invalid configuration{loc}: {msg}", path.display(), inner.line(), inner.column()))
    })?;
    Ok(Loaded { config, text, path: path.to_path_buf() })
}
