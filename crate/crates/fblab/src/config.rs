//! Experiment configuration (TOML).

use std::path::{Path, PathBuf};

use fblab_core::blowup::BlowupConfig;
use fblab_core::operator::OperatorConfig;
use fblab_core::verification::MonotoneVariant;
use fblab_core::Method;
use serde::{Deserialize, Serialize};

use crate::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Relative paths resolve against the config file's directory.
    pub output: PathBuf,
    pub operator: OperatorConfig,
    pub grid: GridConfig,
    /// `builtin:<fixture>` or a path to an FBF1 file.
    pub boundary: String,
    pub pipeline: Vec<Step>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    #[serde(default = "one")]
    pub half_width: f64,
}

fn one() -> f64 {
    1.0
}

fn origin() -> Vec<f64> {
    vec![0.0, 0.0]
}

fn penalization() -> Method {
    Method::Penalization
}

pub fn default_radii() -> Vec<f64> {
    vec![0.125, 0.25, 0.375, 0.5, 0.625, 0.75]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Step {
    Solve {
        #[serde(default = "penalization")]
        method: Method,
    },
    Analyze {
        #[serde(default = "origin")]
        x0: Vec<f64>,
        #[serde(default)]
        thresh_sing: Option<f64>,
        #[serde(default)]
        r_min_cells: Option<f64>,
        #[serde(default)]
        fit_radius: Option<f64>,
    },
    Blowup {
        #[serde(default = "origin")]
        x0: Vec<f64>,
        #[serde(default)]
        config: BlowupConfig,
    },
    Thin {
        #[serde(default = "default_radii")]
        radii: Vec<f64>,
    },
    Verify(VerifyStep),
    Decay {},
}

impl Step {
    pub fn name(&self) -> &'static str {
        match self {
            Step::Solve { .. } => "solve",
            Step::Analyze { .. } => "analyze",
            Step::Blowup { .. } => "blowup",
            Step::Thin { .. } => "thin",
            Step::Verify(v) => match v.suite {
                Suite::Barrier => "verify-barrier",
                Suite::Monotone => "verify-monotone",
                Suite::Convex => "verify-convex",
            },
            Step::Decay {} => "decay",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Barrier,
    Monotone,
    Convex,
}

/// Parameters of the three verification suites; each suite reads the ones
/// it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyStep {
    pub suite: Suite,
    #[serde(default = "half")]
    pub r: f64,
    /// Barrier: `N` in units of `γr²`.
    #[serde(default = "ten")]
    pub n_factor: f64,
    /// Strip half-width; the barrier default is `r/100`.
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default = "twenty_five")]
    pub centers: usize,
    /// Barrier: draw centers from the seeded RNG instead of the sunflower.
    #[serde(default)]
    pub random_centers: bool,
    #[serde(default = "e1")]
    pub direction: Vec<f64>,
    #[serde(default = "origin")]
    pub center: Vec<f64>,
    #[serde(default = "one")]
    pub k: f64,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default = "tenth")]
    pub eps: f64,
    #[serde(default = "strip")]
    pub variant: MonotoneVariant,
    #[serde(default)]
    pub c_test: f64,
}

fn half() -> f64 {
    0.5
}
fn ten() -> f64 {
    10.0
}
fn tenth() -> f64 {
    0.1
}
fn twenty_five() -> usize {
    25
}
fn e1() -> Vec<f64> {
    vec![1.0, 0.0]
}
fn strip() -> MonotoneVariant {
    MonotoneVariant::Strip
}

impl VerifyStep {
    pub fn new(suite: Suite) -> Self {
        VerifyStep {
            suite,
            r: half(),
            n_factor: ten(),
            eta: None,
            centers: twenty_five(),
            random_centers: false,
            direction: e1(),
            center: origin(),
            k: one(),
            sigma: 0.0,
            eps: tenth(),
            variant: strip(),
            c_test: 0.0,
        }
    }
}

/// A boundary source after resolution against the config directory.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundarySource {
    Builtin(String),
    File(PathBuf),
}

impl BoundarySource {
    pub fn parse(text: &str, base: &Path) -> Self {
        match text.strip_prefix("builtin:") {
            Some(name) => BoundarySource::Builtin(name.to_string()),
            None => BoundarySource::File(base.join(text)),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }

    /// Parses and validates; every failure here maps to exit code 2.
    pub fn load(path: &Path) -> Result<(Self, PathBuf), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let cfg = Self::from_toml(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate(&base)?;
        Ok((cfg, base))
    }

    pub fn validate(&self, base: &Path) -> Result<(), ConfigError> {
        let err = |m: String| Err(ConfigError(m));
        if self.pipeline.is_empty() {
            return err("pipeline is empty".into());
        }
        let op = self.operator.build().map_err(|e| ConfigError(format!("operator: {e}")))?;
        fblab_core::Grid::new(op.dim(), self.grid.n, self.grid.half_width)
            .map_err(|e| ConfigError(format!("grid: {e}")))?;
        match BoundarySource::parse(&self.boundary, base) {
            BoundarySource::Builtin(name) => {
                fblab_core::Fixture::from_name(&name, &op).map_err(|e| ConfigError(format!("boundary: {e}")))?;
            }
            BoundarySource::File(p) => {
                if !p.is_file() {
                    return err(format!("boundary file {} does not exist", p.display()));
                }
            }
        }
        let (mut solved, mut traced) = (false, false);
        for (i, s) in self.pipeline.iter().enumerate() {
            let needs_solve = match s {
                Step::Analyze { .. } | Step::Blowup { .. } => true,
                Step::Verify(v) => v.suite != Suite::Barrier,
                _ => false,
            };
            if needs_solve && !solved {
                return err(format!("step {} ({}) needs an earlier solve step", i + 1, s.name()));
            }
            if matches!(s, Step::Decay {}) && !traced {
                return err(format!("step {} (decay) needs an earlier blowup step", i + 1));
            }
            if let Step::Blowup { config, .. } = s {
                config.validate().map_err(|e| ConfigError(format!("step {}: {e}", i + 1)))?;
            }
            solved |= matches!(s, Step::Solve { .. });
            traced |= matches!(s, Step::Blowup { .. });
        }
        Ok(())
    }
}
