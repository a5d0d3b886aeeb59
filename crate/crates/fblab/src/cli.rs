//! Command-line front end. Every subcommand except `fixtures` builds an
//! [`ExperimentConfig`] and goes through [`run_config`].

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use fblab_core::blowup::BlowupConfig;
use fblab_core::fixtures::list_fixtures;
use fblab_core::{Method, OperatorConfig};

use crate::config::default_radii;
use crate::{run_config, run_experiment, ConfigError, ExperimentConfig, GridConfig, RunError, RunReport, Step, Suite, VerifyStep};

#[derive(Debug, Parser)]
#[command(name = "fblab", version, about = "Obstacle-problem free-boundary laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a TOML experiment config.
    Run { config: PathBuf },
    /// List the builtin fixtures.
    Fixtures {
        #[arg(long)]
        json: bool,
    },
    /// Solve the obstacle problem with the fixture as boundary data.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "penalization")]
        method: MethodArg,
    },
    /// Solve, then classify a contact point.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0,0")]
        x0: Vec<f64>,
    },
    /// Solve, then run the blow-up iteration at a point.
    Blowup {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0,0")]
        x0: Vec<f64>,
    },
    /// Solve, blow up, then fit the decay models to the trace.
    Decay {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0,0")]
        x0: Vec<f64>,
    },
    /// Thin-obstacle solve and frequency profile.
    Thin {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        radii: Option<Vec<f64>>,
    },
    /// Barrier, monotonicity or convexity check.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long, default_value_t = 0.5)]
        r: f64,
        /// Barrier `N` in units of `γr²`.
        #[arg(long, default_value_t = 10.0)]
        n_factor: f64,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long, default_value_t = 25)]
        centers: usize,
        #[arg(long)]
        random_centers: bool,
        #[arg(long, value_delimiter = ',', default_value = "1,0")]
        direction: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum MethodArg {
    Penalization,
    ProjectedSweep,
}

#[derive(Debug, Args)]
pub struct Common {
    /// `builtin:<fixture>` or an FBF1 path.
    #[arg(long)]
    pub boundary: Option<String>,
    /// Operator TOML file; scaled trace otherwise.
    #[arg(long)]
    pub op: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 129)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub half_width: f64,
    #[arg(long, default_value = "fblab-out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl Common {
    fn config(&self, default_boundary: &str, pipeline: Vec<Step>) -> Result<ExperimentConfig, ConfigError> {
        let operator = match &self.op {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?;
                OperatorConfig::from_toml(&text).map_err(|e| ConfigError(format!("operator: {e}")))?
            }
            None => OperatorConfig {
                kind: "scaled-trace".into(),
                dim: self.dim,
                scale: None,
                tau: None,
                coefficients: None,
                pucci_lambda: None,
                lambda: None,
                holder: None,
            },
        };
        Ok(ExperimentConfig {
            seed: self.seed,
            output: self.out.clone(),
            operator,
            grid: GridConfig {
                n: self.n,
                half_width: self.half_width,
            },
            boundary: self.boundary.clone().unwrap_or_else(|| default_boundary.to_string()),
            pipeline,
        })
    }
}

fn to_method(m: MethodArg) -> Method {
    match m {
        MethodArg::Penalization => Method::Penalization,
        MethodArg::ProjectedSweep => Method::ProjectedSweep,
    }
}

fn solve() -> Step {
    Step::Solve {
        method: Method::Penalization,
    }
}

fn blowup(x0: &[f64]) -> Step {
    Step::Blowup {
        x0: x0.to_vec(),
        config: BlowupConfig::default(),
    }
}

/// Executes a parsed command line and returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Fixtures { json } => {
            let list = list_fixtures();
            if json {
                println!("{}", serde_json::to_string_pretty(&list).expect("fixture list serializes"));
            } else {
                for f in list {
                    println!("{:<18} d={:<4} {}  [{}]", f.name, f.dims, f.formula, f.realizes);
                }
            }
            return 0;
        }
        Command::Run { config } => run_experiment(&config),
        Command::Solve { common, method } => {
            let steps = vec![Step::Solve { method: to_method(method) }];
            in_memory(common.config("builtin:halfspace", steps))
        }
        Command::Analyze { common, x0 } => {
            let steps = vec![
                solve(),
                Step::Analyze {
                    x0,
                    thresh_sing: None,
                    r_min_cells: None,
                    fit_radius: None,
                },
            ];
            in_memory(common.config("builtin:halfspace", steps))
        }
        Command::Blowup { common, x0 } => {
            let steps = vec![solve(), blowup(&x0)];
            in_memory(common.config("builtin:top-stratum", steps))
        }
        Command::Decay { common, x0 } => {
            let steps = vec![solve(), blowup(&x0), Step::Decay {}];
            in_memory(common.config("builtin:top-stratum", steps))
        }
        Command::Thin { common, radii } => {
            let steps = vec![Step::Thin {
                radii: radii.unwrap_or_else(default_radii),
            }];
            in_memory(common.config("builtin:thin:threehalf", steps))
        }
        Command::Verify {
            common,
            suite,
            r,
            n_factor,
            eta,
            centers,
            random_centers,
            direction,
        } => {
            let v = VerifyStep {
                r,
                n_factor,
                eta,
                centers,
                random_centers,
                direction,
                ..VerifyStep::new(suite)
            };
            let (boundary, steps) = match suite {
                Suite::Barrier => ("builtin:zero", vec![Step::Verify(v)]),
                Suite::Monotone => ("builtin:halfspace", vec![solve(), Step::Verify(v)]),
                Suite::Convex => ("builtin:manufactured", vec![solve(), Step::Verify(v)]),
            };
            in_memory(common.config(boundary, steps))
        }
    };
    match result {
        Ok(report) => {
            print_report(&report);
            0
        }
        Err(e) => {
            eprintln!("fblab: {e}");
            e.exit_code()
        }
    }
}

fn in_memory(cfg: Result<ExperimentConfig, ConfigError>) -> Result<RunReport, RunError> {
    run_config(&cfg?, Path::new("."))
}

fn print_report(r: &RunReport) {
    for s in &r.steps {
        println!("{:02} {:<16} {} {}", s.index, s.step, if s.ok { "ok" } else { "FAILED" }, s.result);
    }
}
