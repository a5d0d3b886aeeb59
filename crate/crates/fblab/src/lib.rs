//! Config-driven experiments over `fblab-core`.

pub mod cli;
pub mod config;

use std::path::{Path, PathBuf};

use fblab_core::blowup::{decay_fit, run_blowup, telescope_check, BlowupTrace};
use fblab_core::freeboundary::{classify_point, ClassifyOptions};
use fblab_core::quadratic::{certify, fit_quadratic, project_to_class, ClassTag};
use fblab_core::thin::{classify_thin, frequency, solve_thin, ThinOptions};
use fblab_core::verification::{
    barrier_check, build_barrier, convexity_check, monotonicity_check, sample_centers, BarrierSpec, MonotoneParams,
};
use fblab_core::{solve_obstacle, EllipticOperator, Fixture, GammaDirection, Grid, ScalarField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

pub use config::{BoundarySource, ExperimentConfig, GridConfig, Step, Suite, VerifyStep};

/// Anything that makes a config unusable before the first step runs.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("config error: {0}")]
pub struct ConfigError(pub String);

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("step {index} ({step}) failed: {message}")]
    Step { index: usize, step: &'static str, message: String },
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepSummary {
    pub index: usize,
    pub step: &'static str,
    pub ok: bool,
    pub artifacts: Vec<String>,
    pub result: Value,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub seed: u64,
    pub operator: String,
    pub dim: usize,
    pub n: usize,
    pub h: f64,
    pub boundary: String,
    pub steps: Vec<StepSummary>,
    pub ok: bool,
}

struct State {
    op: EllipticOperator,
    grid: Grid,
    seed: u64,
    boundary: ScalarField,
    solution: Option<ScalarField>,
    trace: Option<BlowupTrace>,
}

fn cfg_err<E: std::fmt::Display>(what: &str) -> impl Fn(E) -> ConfigError + '_ {
    move |e| ConfigError(format!("{what}: {e}"))
}

fn prepare(cfg: &ExperimentConfig, base: &Path) -> Result<State, ConfigError> {
    cfg.validate(base)?;
    let op = cfg.operator.build().map_err(cfg_err("operator"))?;
    let grid = Grid::new(op.dim(), cfg.grid.n, cfg.grid.half_width).map_err(cfg_err("grid"))?;
    let boundary = match BoundarySource::parse(&cfg.boundary, base) {
        BoundarySource::Builtin(name) => Fixture::from_name(&name, &op).map_err(cfg_err("boundary"))?.field(grid),
        BoundarySource::File(p) => {
            let f = ScalarField::read_fbf1(&p).map_err(cfg_err("boundary"))?;
            if f.grid != grid {
                return Err(ConfigError(format!(
                    "boundary file {} is on a {}-d n = {} grid, config asks for {}-d n = {}",
                    p.display(),
                    f.grid.dim,
                    f.grid.n,
                    grid.dim,
                    grid.n
                )));
            }
            f
        }
    };
    Ok(State {
        op,
        grid,
        seed: cfg.seed,
        boundary,
        solution: None,
        trace: None,
    })
}

/// Loads `path`, runs its pipeline and writes every artifact under the
/// configured output directory.
pub fn run_experiment(path: &Path) -> Result<RunReport, RunError> {
    let (cfg, base) = ExperimentConfig::load(path)?;
    run_config(&cfg, &base)
}

/// Runs an already parsed config; relative paths resolve against `base`.
pub fn run_config(cfg: &ExperimentConfig, base: &Path) -> Result<RunReport, RunError> {
    let mut state = prepare(cfg, base)?;
    let out = base.join(&cfg.output);
    std::fs::create_dir_all(&out).map_err(|source| RunError::Io { path: out.clone(), source })?;
    let mut report = RunReport {
        seed: cfg.seed,
        operator: cfg.operator.kind.clone(),
        dim: state.grid.dim,
        n: state.grid.n,
        h: state.grid.h(),
        boundary: cfg.boundary.clone(),
        steps: Vec::new(),
        ok: true,
    };
    let mut failure = None;
    for (i, step) in cfg.pipeline.iter().enumerate() {
        let index = i + 1;
        let mut writer = Writer {
            dir: &out,
            prefix: format!("{index:02}-"),
            written: Vec::new(),
        };
        let outcome = run_step(&mut state, step, index, &mut writer);
        let (result, error) = match outcome {
            Ok(v) => (v, None),
            Err(StepFail::Io(path, source)) => {
                failure = Some(RunError::Io { path, source });
                (Value::Null, Some("write failed".to_string()))
            }
            Err(StepFail::Core(message)) => {
                failure = Some(RunError::Step {
                    index,
                    step: step.name(),
                    message: message.clone(),
                });
                (Value::Null, Some(message))
            }
        };
        report.steps.push(StepSummary {
            index,
            step: step.name(),
            ok: error.is_none(),
            artifacts: writer.written,
            result,
            error,
        });
        if failure.is_some() {
            report.ok = false;
            break;
        }
    }
    let path = out.join("report.json");
    write_json(&path, &report).map_err(|source| RunError::Io { path, source })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

enum StepFail {
    Core(String),
    Io(PathBuf, std::io::Error),
}

impl From<fblab_core::Error> for StepFail {
    fn from(e: fblab_core::Error) -> Self {
        StepFail::Core(e.to_string())
    }
}

struct Writer<'a> {
    dir: &'a Path,
    prefix: String,
    written: Vec<String>,
}

impl Writer<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        let file = format!("{}{name}", self.prefix);
        let p = self.dir.join(&file);
        self.written.push(file);
        p
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), StepFail> {
        let p = self.path(name);
        write_json(&p, value).map_err(|e| StepFail::Io(p, e))
    }

    fn text(&mut self, name: &str, text: &str) -> Result<(), StepFail> {
        let p = self.path(name);
        std::fs::write(&p, text).map_err(|e| StepFail::Io(p, e))
    }

    fn field(&mut self, name: &str, f: &ScalarField) -> Result<(), StepFail> {
        let p = self.path(name);
        std::fs::write(&p, f.to_fbf1_bytes()).map_err(|e| StepFail::Io(p, e))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(path, text)
}

fn run_step(st: &mut State, step: &Step, index: usize, w: &mut Writer) -> Result<Value, StepFail> {
    match step {
        Step::Solve { method } => {
            let (u, rep) = solve_obstacle(&st.op, &st.boundary, *method)?;
            w.field("solution.fbf1", &u)?;
            w.json("solve.json", &rep)?;
            st.solution = Some(u);
            Ok(json!({ "iterations": rep.iterations, "residual": rep.residual }))
        }
        Step::Analyze {
            x0,
            thresh_sing,
            r_min_cells,
            fit_radius,
        } => {
            let d = ClassifyOptions::default();
            let opts = ClassifyOptions {
                thresh_sing: thresh_sing.unwrap_or(d.thresh_sing),
                r_min_cells: r_min_cells.unwrap_or(d.r_min_cells),
                fit_radius: fit_radius.unwrap_or(d.fit_radius),
            };
            let c = classify_point(solved(st)?, x0, &opts)?;
            w.json("analyze.json", &json!({ "x0": x0, "options": opts, "classification": c }))?;
            Ok(json!({ "class": c.class, "delta_r_min": c.delta_r_min }))
        }
        Step::Blowup { x0, config } => {
            let t = run_blowup(solved(st)?, x0, &st.op, config)?;
            w.json("blowup.json", &t)?;
            w.text("decay-table.csv", &t.to_csv())?;
            let v = json!({ "steps": t.steps.len(), "stratum": t.stratum, "breakdown": t.breakdown });
            st.trace = Some(t);
            Ok(v)
        }
        Step::Decay {} => {
            let t = st.trace.as_ref().ok_or_else(|| StepFail::Core("no blow-up trace".into()))?;
            // Too few points above the floor is an outcome, not a failure.
            let (fit, fit_error) = split(decay_fit(t));
            let (telescope, telescope_error) = split(telescope_check(t));
            let above = t.steps.iter().filter(|s| s.eps_k > s.floor).count();
            w.json(
                "decay.json",
                &json!({
                    "points_above_floor": above,
                    "fit": fit,
                    "fit_error": fit_error,
                    "telescope": telescope,
                    "telescope_error": telescope_error,
                }),
            )?;
            Ok(json!({ "rate_kind": fit.as_ref().map(|f| f.rate_kind), "points_above_floor": above }))
        }
        Step::Thin { radii } => {
            let sol = solve_thin(&st.boundary, &ThinOptions::default())?;
            let profile = frequency(&sol, radii)?;
            let possibility = classify_thin(&profile)?;
            w.field("thin.fbf1", &sol.field)?;
            w.json(
                "thin.json",
                &json!({
                    "sweeps": sol.sweeps,
                    "profile": profile,
                    "max_decrease": profile.max_decrease(),
                    "possibility": possibility,
                }),
            )?;
            Ok(json!({ "possibility": possibility, "frequency": profile.at_smallest_radius() }))
        }
        Step::Verify(v) => verify(st, v, index, w),
    }
}

fn split<T>(r: fblab_core::Result<T>) -> (Option<T>, Option<String>) {
    match r {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

fn solved(st: &State) -> Result<&ScalarField, StepFail> {
    st.solution.as_ref().ok_or_else(|| StepFail::Core("no solution field".into()))
}

/// Uniform points in `B_radius` by rejection from the seeded stream of step
/// `index`.
fn random_centers(seed: u64, index: usize, dim: usize, radius: f64, count: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-radius..radius)).collect();
        if x.iter().map(|c| c * c).sum::<f64>() < radius * radius {
            out.push(x);
        }
    }
    out
}

fn verify(st: &State, v: &VerifyStep, index: usize, w: &mut Writer) -> Result<Value, StepFail> {
    let d = st.grid.dim;
    let eta = v.eta.unwrap_or(v.r / 100.0);
    match v.suite {
        Suite::Barrier => {
            let gamma = st.op.gamma_of(&GammaDirection::Isotropic)?;
            let spec = BarrierSpec {
                r: v.r,
                eta,
                big_n: v.n_factor * gamma * v.r * v.r,
            };
            let centers = if v.random_centers {
                random_centers(st.seed, index, d, 0.5 * v.r, v.centers)
            } else {
                sample_centers(d, 0.5 * v.r, v.centers)
            };
            let wf = build_barrier(&st.op, &spec, st.grid)?;
            let rep = barrier_check(&st.op, &wf, &spec, &centers)?;
            w.field("barrier.fbf1", &wf)?;
            w.json("verify-barrier.json", &rep)?;
            Ok(json!({ "passes": rep.passes, "min_slack": rep.min_slack }))
        }
        Suite::Monotone => {
            let params = MonotoneParams {
                k: v.k,
                sigma: v.sigma,
                eta,
                r: v.r,
                eps: v.eps,
                center: v.center.clone(),
                variant: v.variant,
            };
            let rep = monotonicity_check(&st.op, solved(st)?, &v.direction, &params)?;
            w.json("verify-monotone.json", &json!({ "direction": v.direction, "params": params, "report": rep }))?;
            Ok(json!({ "hypotheses_hold": rep.hypotheses_hold, "conclusion_holds": rep.conclusion_holds }))
        }
        Suite::Convex => {
            let u = solved(st)?;
            let fit = fit_quadratic(u, &v.center, v.r, true)?;
            let zero = vec![0.0; d];
            let p = project_to_class(&fit.a, &zero, &st.op, ClassTag::Q)?;
            let cert = certify(u, &p, &v.center, v.r, &st.op)?;
            // Outside S the check has no hypothesis to test; report the certificate only.
            let norm = v.direction.iter().map(|c| c * c).sum::<f64>().sqrt();
            let e: Vec<f64> = v.direction.iter().map(|c| c / norm).collect();
            let (rep, skipped) = if cert.member && p.a.quad_form(&e) >= v.c_test * cert.eps {
                (Some(convexity_check(u, &cert, &v.center, &v.direction, v.c_test)?), None)
            } else {
                (None, Some("hypotheses not met"))
            };
            w.json(
                "verify-convex.json",
                &json!({ "direction": v.direction, "certificate": cert, "report": rep, "skipped": skipped }),
            )?;
            Ok(json!({ "member": cert.member, "holds": rep.as_ref().map(|r| r.holds) }))
        }
    }
}
