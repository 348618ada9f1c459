//! Batch front end: config parsing, experiment dispatch, reproducible
//! reports. One command per process; exit codes are part of the contract:
//!
//! * 0  — converged / checks passed
//! * 1  — validation battery failed
//! * 2  — flow hit the step budget
//! * 3  — admissibility, spacelike, or slice-positivity loss
//! * 4  — IMCF mean-curvature floor
//! * 64 — config error
//! * 74 — io error

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::battery::{run_concavity_battery, run_gradient_order_battery, SampleSpec};
use crate::config::{build_plan, Command, ConfigError, ExperimentConfig};
use crate::curvfunc::{Composite, CurvatureKind, CurvatureSpec, DeformKind, DeformSpec};
use crate::flow::{
    barrier_classify, imcf_run, run, slice_decay_check, volume, volume_induced, FlowError,
    PrescribedCurvature, Verdict,
};
use crate::foliation::{cmc_sweep, newton_polish, time_function, FoliationError};
use crate::geometry::{graph_geometry, GraphState};
use crate::identities::identity_residuals;
use crate::report::{
    known_monitor, state_out, write_csv, write_imcf_trace, write_json, write_manifest, write_plot,
    write_trace, ReportError,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION_FAILED: i32 = 1;
pub const EXIT_MAX_STEPS: i32 = 2;
pub const EXIT_ADMISSIBILITY: i32 = 3;
pub const EXIT_IMCF_FLOOR: i32 = 4;
pub const EXIT_CONFIG: i32 = 64;
pub const EXIT_IO: i32 = 74;

fn flow_error_code(err: &FlowError) -> i32 {
    match err {
        FlowError::MeanCurvatureFloor { .. } => EXIT_IMCF_FLOOR,
        FlowError::LostAdmissibility { .. }
        | FlowError::LostSpacelike { .. }
        | FlowError::NonPositiveSliceH { .. } => EXIT_ADMISSIBILITY,
        FlowError::Geometry(_) => EXIT_ADMISSIBILITY,
        _ => EXIT_ADMISSIBILITY,
    }
}

fn foliation_error_code(err: &FoliationError) -> i32 {
    match err {
        FoliationError::Flow(e) => flow_error_code(e),
        FoliationError::Leaf { source, .. } => foliation_error_code(source),
        _ => EXIT_ADMISSIBILITY,
    }
}

struct Emitter<'a> {
    dir: &'a Path,
    prefix: String,
    outputs: Vec<String>,
}

impl<'a> Emitter<'a> {
    fn path(&mut self, suffix: &str) -> PathBuf {
        let name = format!("{}_{}", self.prefix, suffix);
        self.outputs.push(name.clone());
        self.dir.join(name)
    }
}

#[derive(Serialize)]
struct FlowCommandReport {
    verdict: Verdict,
    steps: usize,
    final_residual: f64,
    polished: bool,
    newton_iterations: Option<usize>,
    newton_residual: Option<f64>,
    final_volume: f64,
    volume_cross_check: f64,
    monitors: Option<crate::flow::MonitorReport>,
}

/// Dispatch one parsed config. Returns the process exit code after writing
/// all reports under `out_dir`.
pub fn run_command(cfg: &ExperimentConfig, out_dir: &Path) -> i32 {
    match run_command_inner(cfg, out_dir) {
        Ok(code) => code,
        Err(DispatchError::Config(e)) => {
            eprintln!("config error: {e}");
            EXIT_CONFIG
        }
        Err(DispatchError::Report(e)) => {
            eprintln!("io error: {e}");
            EXIT_IO
        }
        Err(DispatchError::Flow(e)) => {
            eprintln!("run failed: {e}");
            flow_error_code(&e)
        }
        Err(DispatchError::Foliation(e)) => {
            eprintln!("run failed: {e}");
            foliation_error_code(&e)
        }
    }
}

enum DispatchError {
    Config(ConfigError),
    Report(ReportError),
    Flow(FlowError),
    Foliation(FoliationError),
}

impl From<ConfigError> for DispatchError {
    fn from(e: ConfigError) -> Self {
        DispatchError::Config(e)
    }
}
impl From<ReportError> for DispatchError {
    fn from(e: ReportError) -> Self {
        DispatchError::Report(e)
    }
}
impl From<FlowError> for DispatchError {
    fn from(e: FlowError) -> Self {
        DispatchError::Flow(e)
    }
}
impl From<FoliationError> for DispatchError {
    fn from(e: FoliationError) -> Self {
        DispatchError::Foliation(e)
    }
}

fn require_rhs(
    plan_rhs: &Option<PrescribedCurvature>,
) -> Result<PrescribedCurvature, DispatchError> {
    plan_rhs
        .clone()
        .ok_or(DispatchError::Config(ConfigError::Invalid {
            field: "rhs",
            message: "this command needs a prescribed right-hand side".into(),
        }))
}

fn require_initial(
    initial: &Option<crate::grid::Field>,
) -> Result<crate::grid::Field, DispatchError> {
    initial
        .clone()
        .ok_or(DispatchError::Config(ConfigError::Invalid {
            field: "initial",
            message: "this command needs an initial graph".into(),
        }))
}

fn run_command_inner(cfg: &ExperimentConfig, out_dir: &Path) -> Result<i32, DispatchError> {
    std::fs::create_dir_all(out_dir).map_err(|source| {
        DispatchError::Report(ReportError::Io {
            path: out_dir.to_path_buf(),
            source,
        })
    })?;
    let output = cfg.output();
    if let Some(monitor) = &output.plot_monitor {
        if !known_monitor(monitor) {
            return Err(DispatchError::Config(ConfigError::Invalid {
                field: "output.plot-monitor",
                message: format!("unknown monitor column '{monitor}'"),
            }));
        }
    }
    let mut em = Emitter {
        dir: out_dir,
        prefix: output.prefix.clone(),
        outputs: Vec::new(),
    };
    let plan = build_plan(cfg, None)?;

    let code = match cfg.command {
        Command::Flow => {
            let rhs = require_rhs(&plan.rhs)?;
            let u0 = require_initial(&plan.initial)?;
            let state = GraphState::new(plan.model.clone(), u0, 0.0);
            let (mut final_state, trace, report) = run(&state, &plan.comp, &rhs, &plan.flow)?;
            let mut polished = false;
            let mut newton_iterations = None;
            let mut newton_residual = None;
            if plan.polish {
                match newton_polish(
                    &plan.model,
                    &final_state.u,
                    &plan.comp.f,
                    &rhs,
                    plan.newton_tol,
                    12,
                ) {
                    Ok((u, nrep)) => {
                        polished = true;
                        newton_iterations = Some(nrep.iterations);
                        newton_residual = Some(nrep.final_residual);
                        final_state = GraphState::new(plan.model.clone(), u, final_state.t);
                    }
                    Err(FoliationError::EntryResidual(r)) => {
                        eprintln!("newton polish skipped: residual {r:e} above the entry gate");
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            let geom = graph_geometry(&plan.model, &final_state.u).map_err(FlowError::from)?;
            let vol = volume(&geom, &final_state.u.grid().clone());
            let vol_b = volume_induced(&geom, &final_state.u.grid().clone());
            // verdict after the optional polish stage
            let verdict = if polished || report.verdict == Verdict::Converged {
                let sup = residual_sup(&final_state, &plan.comp, &rhs)?;
                if sup < plan.flow.tol_stationary || report.verdict == Verdict::Converged {
                    Verdict::Converged
                } else {
                    report.verdict
                }
            } else {
                report.verdict
            };
            write_trace(&em.path("trace.csv"), &trace)?;
            write_json(&em.path("state.json"), &state_out(&final_state))?;
            write_json(
                &em.path("report.json"),
                &FlowCommandReport {
                    verdict,
                    steps: report.steps,
                    final_residual: report.final_residual,
                    polished,
                    newton_iterations,
                    newton_residual,
                    final_volume: vol,
                    volume_cross_check: (vol - vol_b).abs(),
                    monitors: report.monitors,
                },
            )?;
            if let Some(monitor) = &output.plot_monitor {
                write_plot(&em.path("plot.dat"), &trace, monitor)?;
            }
            match verdict {
                Verdict::Converged => EXIT_OK,
                Verdict::MaxSteps => EXIT_MAX_STEPS,
            }
        }
        Command::Imcf => {
            let u0 = require_initial(&plan.initial)?;
            let state = GraphState::new(plan.model.clone(), u0, 0.0);
            let (final_state, trace, report) = imcf_run(&state, &plan.flow)?;
            write_imcf_trace(&em.path("trace.csv"), &trace)?;
            let tau_rows: Vec<Vec<f64>> = report
                .tau_table
                .iter()
                .map(|r| vec![r.tau, r.volume_ratio, r.expected, r.deviation])
                .collect();
            write_csv(
                &em.path("tau.csv"),
                &["tau", "volume_ratio", "expected", "deviation"],
                &tau_rows,
            )?;
            write_json(&em.path("state.json"), &state_out(&final_state))?;
            write_json(&em.path("report.json"), &report)?;
            if let Some(monitor) = &output.plot_monitor {
                write_plot(&em.path("plot.dat"), &trace, monitor)?;
            }
            EXIT_OK
        }
        Command::Foliate => {
            let fol = cfg.foliate.as_ref().ok_or(ConfigError::Invalid {
                field: "foliate",
                message: "foliate command needs a [foliate] table".into(),
            })?;
            let u_top = crate::grid::Field::constant(plan.grid.clone(), fol.upper_barrier);
            let newton_tol = fol.newton_tol.unwrap_or(1e-12);
            let result = cmc_sweep(&plan.model, &fol.taus, &u_top, &plan.flow, newton_tol)?;
            let table = time_function(&result)?;
            let leaf_rows: Vec<Vec<f64>> = result
                .leaves
                .iter()
                .map(|l| vec![l.tau, l.min_u, l.max_u, l.residual, l.min_udot])
                .collect();
            write_csv(
                &em.path("leaves.csv"),
                &["tau", "min_u", "max_u", "residual", "min_udot"],
                &leaf_rows,
            )?;
            #[derive(Serialize)]
            struct FoliateOut<'a> {
                schema_version: u32,
                result: &'a crate::foliation::FoliationResult,
                time_function: &'a crate::foliation::TimeFunctionTable,
            }
            write_json(
                &em.path("result.json"),
                &FoliateOut {
                    schema_version: crate::config::SCHEMA_VERSION,
                    result: &result,
                    time_function: &table,
                },
            )?;
            if result.ordering_ok && result.positivity_ok && table.verdict {
                EXIT_OK
            } else {
                EXIT_VALIDATION_FAILED
            }
        }
        Command::ValidateIdentities => {
            let rhs = require_rhs(&plan.rhs)?;
            let u0 = require_initial(&plan.initial)?;
            let ids = cfg.identities.as_ref().ok_or(ConfigError::Invalid {
                field: "identities",
                message: "validate-identities needs an [identities] table".into(),
            })?;
            let state = GraphState::new(plan.model.clone(), u0, 0.0);
            let report = identity_residuals(&state, &plan.comp, &rhs, ids.dt_probe)?;
            write_json(&em.path("identities.json"), &report)?;
            EXIT_OK
        }
        Command::ValidateConcavity => {
            let cc = cfg
                .concavity
                .clone()
                .unwrap_or(crate::config::ConcavityCfg {
                    samples: 10_000,
                    spread_floor: 1e-2,
                });
            let n = plan.grid.base_dim().max(2);
            let comps = [
                Composite::new(
                    CurvatureSpec::new(CurvatureKind::GaussK),
                    DeformSpec::new(DeformKind::Power(n as u32)),
                ),
                Composite::new(
                    CurvatureSpec::new(CurvatureKind::ScalarH2),
                    DeformSpec::new(DeformKind::Power(2)),
                ),
            ];
            #[derive(Serialize)]
            struct ConcavityOut {
                schema_version: u32,
                composite: String,
                concavity: crate::battery::ConcavityBatteryReport,
                gradient_order: crate::battery::GradientOrderReport,
            }
            let mut ok = true;
            let mut reports = Vec::new();
            for comp in comps {
                let name = format!("{}^{}", comp.f.name(), comp.phi.name());
                let spec = SampleSpec::new(comp, n, cc.samples, cc.spread_floor, cfg.seed());
                let conc = run_concavity_battery(&spec).map_err(FlowError::from)?;
                let grad = run_gradient_order_battery(&spec).map_err(FlowError::from)?;
                ok &= conc.pass_count == conc.samples
                    && conc.worst_gap <= 1e-10
                    && conc.decomposition_residual < 1e-5
                    && grad.pass_count == grad.samples;
                reports.push(ConcavityOut {
                    schema_version: crate::config::SCHEMA_VERSION,
                    composite: name,
                    concavity: conc,
                    gradient_order: grad,
                });
            }
            write_json(&em.path("concavity.json"), &reports)?;
            if ok {
                EXIT_OK
            } else {
                EXIT_VALIDATION_FAILED
            }
        }
        Command::CheckBarrier => {
            let rhs = require_rhs(&plan.rhs)?;
            let u0 = require_initial(&plan.initial)?;
            let state = GraphState::new(plan.model.clone(), u0, 0.0);
            let report = barrier_classify(&state, &plan.comp, &rhs)?;
            write_json(&em.path("barrier.json"), &report)?;
            EXIT_OK
        }
        Command::CheckDecay => {
            let dc = cfg.decay.as_ref().ok_or(ConfigError::Invalid {
                field: "decay",
                message: "check-decay needs a [decay] table".into(),
            })?;
            let report = slice_decay_check(
                &plan.model,
                (dc.x0_interval[0], dc.x0_interval[1]),
                dc.n_tau_samples,
            )?;
            write_json(&em.path("decay.json"), &report)?;
            EXIT_OK
        }
        Command::CertConvex => {
            let cv = cfg.convex.as_ref().ok_or(ConfigError::Invalid {
                field: "convex",
                message: "cert-convex needs a [convex] table".into(),
            })?;
            let base_points = cv.base_points.clone().unwrap_or_else(|| {
                (0..8)
                    .map(|i| [0.3 + 0.35 * i as f64, 0.0])
                    .collect::<Vec<_>>()
            });
            let region = crate::ambient::Region::new(
                &plan.model,
                (cv.x0_interval[0], cv.x0_interval[1]),
                base_points,
            )
            .map_err(FlowError::from)?;
            let cert = crate::ambient::convexity_certificate(
                &plan.model,
                &region,
                cv.lambda_max,
                cv.n_x0_samples,
            )
            .map_err(FlowError::from)?;
            write_json(&em.path("convex.json"), &cert)?;
            EXIT_OK
        }
    };

    write_manifest(
        &out_dir.join(format!("{}_manifest.json", output.prefix)),
        cfg,
        em.outputs,
    )?;
    Ok(code)
}

fn residual_sup(
    state: &GraphState,
    comp: &Composite,
    rhs: &PrescribedCurvature,
) -> Result<f64, DispatchError> {
    let cache = crate::flow::evaluate(state, comp, rhs, &crate::flow::FlowConfig::default())?;
    Ok(cache.sup_residual)
}

/// Minimal argument parser for the binary: --config PATH [--out DIR]
/// [--seed N] [--resolution N].
pub struct CliArgs {
    pub config_path: PathBuf,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub resolution: Option<usize>,
}

pub fn parse_args(args: &[String]) -> Result<CliArgs, String> {
    let mut config_path = None;
    let mut out_dir = PathBuf::from("out");
    let mut seed = None;
    let mut resolution = None;
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        match arg.as_str() {
            "--config" => {
                config_path = Some(PathBuf::from(it.next().ok_or("--config needs a path")?))
            }
            "--out" => out_dir = PathBuf::from(it.next().ok_or("--out needs a directory")?),
            "--seed" => {
                seed = Some(
                    it.next()
                        .ok_or("--seed needs a value")?
                        .parse()
                        .map_err(|e| format!("--seed: {e}"))?,
                )
            }
            "--resolution" => {
                resolution = Some(
                    it.next()
                        .ok_or("--resolution needs a value")?
                        .parse()
                        .map_err(|e| format!("--resolution: {e}"))?,
                )
            }
            other => return Err(format!("unknown argument '{other}'")),
        }
    }
    Ok(CliArgs {
        config_path: config_path.ok_or("missing required --config PATH")?,
        out_dir,
        seed,
        resolution,
    })
}

/// Full binary entry: parse args and config, apply overrides, dispatch.
pub fn main_entry(args: &[String]) -> i32 {
    let cli = match parse_args(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("usage: curvflow --config PATH [--out DIR] [--seed N] [--resolution N]");
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let text = match std::fs::read_to_string(&cli.config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", cli.config_path.display());
            return EXIT_CONFIG;
        }
    };
    let mut cfg = match ExperimentConfig::parse_str(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    if let Some(res) = cli.resolution {
        cfg.grid.resolution = vec![res];
    }
    run_command(&cfg, &cli.out_dir)
}
