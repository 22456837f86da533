//! Executes runs: instance generation or loading, reference production,
//! solver dispatch, CSV and metadata output, and multi-method comparison.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use opave::averaging::{
    fixed_hessian_averaging, scalar_averaging, ssn_variable_averaging, ResidualMapSpec,
};
use opave::bench::{
    gen_inverse_integration, gen_unmixing, rmse, solve_admm, solve_condat, BaselineOptions,
    DictKind, NoiseSpec, ProblemInstance, ReferenceSolution,
};
use opave::engine::{AveragingSchedule, Band};
use opave::error::OpaveError;
use opave::fb::{solve_fb, FbConfig};
use opave::linalg::{DenseMatrix, SpdOperator, Vector};
use opave::pd::{
    solve_pd, solve_pnp, CompositeProblem, CompositeTerm, PdConfig, PdState, PnpConfig, PnpState,
    StepCertificate,
};
use opave::prox::{ProximableFunction, SmoothFunction, StronglyConvexTerm};
use opave::trace::{IterTrace, StopRule, Termination};

use crate::config::{AveragingKind, DictChoice, Experiment, RunConfig, SolverKind};

/// RMSE thresholds reported by `compare`.
pub const COMPARE_THRESHOLDS: [f64; 3] = [1e-2, 1e-4, 1e-6];
pub const NOT_REACHED: &str = "not reached";

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or inputs; exit code 2.
    Config(String),
    /// Failure while iterating; exit code 3.
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Solver(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Self::Config(m) | Self::Solver(m) => m,
        }
    }
}

impl From<OpaveError> for CliError {
    fn from(e: OpaveError) -> Self {
        match e {
            OpaveError::ScheduleViolation { .. }
            | OpaveError::Divergence { .. }
            | OpaveError::NonFinite(_)
            | OpaveError::EigNoConvergence(_) => Self::Solver(e.to_string()),
            other => Self::Config(other.to_string()),
        }
    }
}

impl From<String> for CliError {
    fn from(m: String) -> Self {
        Self::Config(m)
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

fn dict_kind(d: DictChoice) -> DictKind {
    match d {
        DictChoice::Gaussian => DictKind::Gaussian,
        DictChoice::SyntheticSmooth => DictKind::SyntheticSmooth,
    }
}

/// Instance selection: an explicit file wins; otherwise the experiment is
/// regenerated from the seed, which is what makes metadata replay exact.
pub fn obtain_instance(cfg: &RunConfig) -> Result<ProblemInstance, CliError> {
    if let Some(path) = &cfg.instance {
        return Ok(opave::bench::read_instance(path)?);
    }
    match cfg.experiment {
        Experiment::InverseIntegration => Ok(gen_inverse_integration(
            cfg.n,
            &NoiseSpec {
                snr_db: cfg.snr_db,
                seed: cfg.seed,
            },
        )?),
        Experiment::Unmixing => {
            let mu = cfg.mu.unwrap_or(1e-3);
            let mut all = gen_unmixing(
                cfg.n,
                cfg.n,
                1,
                cfg.k_sparse,
                dict_kind(cfg.dict),
                mu,
                &NoiseSpec {
                    snr_db: cfg.snr_db,
                    seed: cfg.seed,
                },
            )?;
            Ok(all.remove(0))
        }
        Experiment::Custom => Err(CliError::Config(
            "experiment custom requires --instance".into(),
        )),
    }
}

/// Writes a reference solution file: a [reference] header section plus the
/// solution row.
pub fn write_reference(r: &ReferenceSolution, path: &Path) -> Result<(), CliError> {
    let mut s = String::new();
    let _ = writeln!(s, "[reference]");
    let _ = writeln!(s, "converged={}", r.converged);
    let _ = writeln!(s, "iterations={}", r.iterations);
    let row: Vec<String> = r.x.iter().map(|v| format!("{v:.16e}")).collect();
    let _ = writeln!(s, "x={}", row.join(" "));
    std::fs::write(path, s).map_err(|e| io_err(path, e))
}

pub fn read_reference(path: &Path) -> Result<ReferenceSolution, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let sections = crate::config::parse_sections(&text)?;
    let body = sections
        .get("reference")
        .ok_or_else(|| CliError::Config(format!("{}: no [reference] section", path.display())))?;
    let mut converged = false;
    let mut iterations = 0usize;
    let mut x: Option<Vector> = None;
    for (k, v) in body {
        match k.as_str() {
            "converged" => converged = v == "true",
            "iterations" => {
                iterations = v
                    .parse()
                    .map_err(|e| CliError::Config(format!("bad iterations: {e}")))?
            }
            "x" => {
                let vals: Result<Vec<f64>, _> =
                    v.split_whitespace().map(|t| t.parse::<f64>()).collect();
                x = Some(Vector::from_vec(vals.map_err(|e| {
                    CliError::Config(format!("bad reference row: {e}"))
                })?));
            }
            other => {
                return Err(CliError::Config(format!(
                    "unknown reference key {other:?}"
                )))
            }
        }
    }
    Ok(ReferenceSolution {
        x: x.ok_or_else(|| CliError::Config("reference file has no x row".into()))?,
        converged,
        iterations,
    })
}

fn build_schedule(
    cfg: &RunConfig,
    instance: &ProblemInstance,
    residual_step: f64,
) -> Result<AveragingSchedule, CliError> {
    let band = Band::upper_one(cfg.band_eps)?;
    Ok(match cfg.averaging {
        AveragingKind::Scalar => scalar_averaging(
            cfg.lambda
                .ok_or_else(|| CliError::Config("scalar averaging requires --lambda".into()))?,
            band,
        )?,
        AveragingKind::SsnVariable => ssn_variable_averaging(
            ResidualMapSpec::new(
                instance.h.clone(),
                instance.b.clone(),
                instance.mu,
                residual_step,
            )?,
            band,
        ),
        AveragingKind::FixedHessian => {
            fixed_hessian_averaging(&instance.h, cfg.eps_reg, cfg.rho, band)?
        }
    })
}

/// The combined nonsmooth term mu ||.||_1 + box of an instance.
fn regularizer(instance: &ProblemInstance) -> Result<ProximableFunction, CliError> {
    Ok(match instance.box_bounds {
        Some((c, d)) => ProximableFunction::l1_box(instance.mu, c, d)?,
        None => ProximableFunction::l1(instance.mu)?,
    })
}

pub struct SolveOutput {
    pub trace: IterTrace,
    pub certificate: Option<StepCertificate>,
}

/// Dispatches one solver run; RMSE columns are filled against `reference`.
pub fn run_solver(
    cfg: &RunConfig,
    instance: &ProblemInstance,
    reference: &Vector,
) -> Result<SolveOutput, CliError> {
    let n = instance.dim();
    let stop = StopRule::new(cfg.max_iters, cfg.tol);
    // The B-differential strategy is audited, not enforced: its operators
    // carry no summable-perturbation certificate.
    let warn_only = cfg.averaging == AveragingKind::SsnVariable;
    let stride = cfg.record_stride.max(1);
    match cfg.solver {
        SolverKind::Admm => {
            let trace = solve_admm(
                instance,
                cfg.rho.expect("validated"),
                stop,
                &BaselineOptions {
                    rmse_ref: Some(reference.clone()),
                    record_stride: stride,
                },
            )?;
            Ok(SolveOutput {
                trace,
                certificate: None,
            })
        }
        SolverKind::Condat => {
            let trace = solve_condat(
                instance,
                cfg.tau.expect("validated"),
                cfg.sigma.expect("validated"),
                stop,
                &BaselineOptions {
                    rmse_ref: Some(reference.clone()),
                    record_stride: stride,
                },
            )?;
            Ok(SolveOutput {
                trace,
                certificate: None,
            })
        }
        SolverKind::Fb => {
            let f = SmoothFunction::least_squares(instance.h.clone(), instance.b.clone())?;
            let g = regularizer(instance)?;
            let gamma = cfg.gamma.expect("validated");
            let sched = build_schedule(cfg, instance, gamma)?;
            let mut fbc = FbConfig::constant(gamma, SpdOperator::identity(n), sched);
            fbc.eps = cfg.eps;
            fbc.warn_only = warn_only;
            fbc.record_stride = stride;
            let iterates = iterate_sink(&mut fbc.observer);
            let mut trace = solve_fb(&f, &g, &fbc, &Vector::zeros(n), stop)?;
            fill_rmse(&mut trace, &iterates, reference);
            Ok(SolveOutput {
                trace,
                certificate: None,
            })
        }
        SolverKind::Pnp => {
            // solve_pnp minimizes (1/2)||H'x - b'||^2; scaling by sqrt(2)
            // recovers the instance objective ||Hx - b||^2.
            let s = 2.0f64.sqrt();
            let h2 = instance.h.scale(s);
            let b2 = instance.b.scale(s);
            let g = ProximableFunction::l1(instance.mu)?;
            let hfun = match instance.box_bounds {
                Some((c, d)) => ProximableFunction::box_indicator(c, d)?,
                None => ProximableFunction::Zero,
            };
            let tau = cfg.tau.expect("validated");
            let sched = build_schedule(cfg, instance, tau)?;
            let mut pc = PnpConfig::new(cfg.gamma.expect("validated"), tau, sched);
            pc.eps = cfg.eps;
            pc.warn_only = warn_only;
            pc.record_stride = stride;
            let iterates: Arc<Mutex<Vec<Vector>>> = Arc::new(Mutex::new(Vec::new()));
            let sink = iterates.clone();
            pc.observer = Some(Arc::new(move |_, x: &Vector| {
                sink.lock().unwrap().push(x.clone());
            }));
            let cert = opave::pd::pnp_certificate(
                tau,
                pc.gamma,
                cfg.eps,
                1.0 / SpdOperator::new(h2.gram())?.eig_max(),
            )?;
            let mut trace = solve_pnp(&h2, &b2, &g, &hfun, &pc, &PnpState::zeros(n), stop)?;
            fill_rmse(&mut trace, &iterates, reference);
            Ok(SolveOutput {
                trace,
                certificate: Some(cert),
            })
        }
        SolverKind::Pd => {
            let f = SmoothFunction::least_squares(instance.h.clone(), instance.b.clone())?;
            let g = ProximableFunction::l1(instance.mu)?;
            let term_h = match instance.box_bounds {
                Some((c, d)) => ProximableFunction::box_indicator(c, d)?,
                None => ProximableFunction::Zero,
            };
            let problem = CompositeProblem::new(
                g,
                f,
                Vector::zeros(n),
                vec![CompositeTerm {
                    h: term_h,
                    l: StronglyConvexTerm::exact(),
                    linear: DenseMatrix::identity(n),
                    shift: Vector::zeros(n),
                    omega: 1.0,
                }],
            )?;
            let tau = cfg.tau.expect("validated");
            let band = Band::upper_one(cfg.band_eps)?;
            let mut pdc = PdConfig {
                primal_metric: SpdOperator::scaled_identity(n, tau),
                primal_averaging: build_schedule(cfg, instance, tau)?,
                dual_metrics: vec![SpdOperator::scaled_identity(
                    n,
                    cfg.sigma.expect("validated"),
                )],
                dual_averaging: vec![scalar_averaging(1.0, band)?],
                eps: cfg.eps,
                warn_only,
                record_stride: stride,
                observer: None,
            };
            let iterates: Arc<Mutex<Vec<Vector>>> = Arc::new(Mutex::new(Vec::new()));
            let sink = iterates.clone();
            pdc.observer = Some(Arc::new(move |_, x: &Vector, _: &[Vector]| {
                sink.lock().unwrap().push(x.clone());
            }));
            let out = solve_pd(&problem, &pdc, &PdState::zeros(&problem), stop)?;
            let mut trace = out.trace;
            fill_rmse(&mut trace, &iterates, reference);
            Ok(SolveOutput {
                trace,
                certificate: Some(out.certificate),
            })
        }
    }
}

type Observer = Option<Arc<dyn Fn(usize, &Vector) + Send + Sync>>;

fn iterate_sink(slot: &mut Observer) -> Arc<Mutex<Vec<Vector>>> {
    let iterates: Arc<Mutex<Vec<Vector>>> = Arc::new(Mutex::new(Vec::new()));
    let sink = iterates.clone();
    *slot = Some(Arc::new(move |_, x: &Vector| {
        sink.lock().unwrap().push(x.clone());
    }));
    iterates
}

/// Record k corresponds to the k-th observed iterate in every solver.
fn fill_rmse(trace: &mut IterTrace, iterates: &Arc<Mutex<Vec<Vector>>>, reference: &Vector) {
    let xs = iterates.lock().unwrap();
    for rec in &mut trace.records {
        if let Some(x) = xs.get(rec.k) {
            rec.rmse = rmse(x, reference).ok();
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.16e}"),
        None => "nan".into(),
    }
}

pub fn write_csv(trace: &IterTrace, path: &Path) -> Result<(), CliError> {
    let mut s = String::from("iter,time_s,objective,residual,rmse\n");
    for r in &trace.records {
        let _ = writeln!(
            s,
            "{},{:.16e},{},{:.16e},{}",
            r.k,
            r.time_s,
            fmt_opt(r.objective),
            r.residual,
            fmt_opt(r.rmse)
        );
    }
    std::fs::write(path, s).map_err(|e| io_err(path, e))
}

fn status_str(t: &Termination) -> String {
    match t {
        Termination::Converged => "converged".into(),
        Termination::MaxIters => "max_iters".into(),
        Termination::Diverged => "diverged".into(),
        Termination::Aborted(m) => format!("aborted: {m}"),
    }
}

pub struct RunArtifacts {
    pub csv_path: PathBuf,
    pub meta_path: PathBuf,
    pub reference_path: PathBuf,
    pub trace: IterTrace,
}

fn sibling(path: &Path, ext: &str) -> PathBuf {
    let mut p = path.to_path_buf();
    p.set_extension(ext);
    p
}

/// One full run: instance, reference, solve, CSV + metadata + reference
/// files. The metadata file doubles as a replayable config.
pub fn execute_run(cfg: &RunConfig) -> Result<RunArtifacts, CliError> {
    cfg.validate()?;
    let instance = obtain_instance(cfg)?;
    if let Some(dir) = cfg.output.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
    }
    let (reference, reference_path) = match &cfg.reference {
        Some(path) => (read_reference(path)?, path.clone()),
        None => {
            let r = opave::bench::reference_solution(&instance)?;
            let path = sibling(&cfg.output, "ref.txt");
            write_reference(&r, &path)?;
            (r, path)
        }
    };

    let out = run_solver(cfg, &instance, &reference.x)?;
    write_csv(&out.trace, &cfg.output)?;

    let cond = opave::bench::condition_number(&instance.h)?;
    let meta_path = sibling(&cfg.output, "meta");
    let mut meta = String::from("[run]\n");
    for (k, v) in cfg.to_key_values() {
        let _ = writeln!(meta, "{k}={v}");
    }
    let _ = writeln!(meta, "\n[diagnostics]");
    let _ = writeln!(meta, "status={}", status_str(&out.trace.status));
    let _ = writeln!(meta, "iterations={}", out.trace.iterations);
    let _ = writeln!(
        meta,
        "final-residual={}",
        fmt_opt(out.trace.final_residual())
    );
    let d = &out.trace.diagnostics;
    let _ = writeln!(meta, "schedule-violations={}", d.schedule_violations);
    let _ = writeln!(meta, "clip-events={}", d.clip_events);
    let _ = writeln!(meta, "fallback-events={}", d.fallback_events);
    let _ = writeln!(meta, "fejer-violations={}", d.fejer_violations);
    let _ = writeln!(meta, "certificate-waived={}", d.certificate_waived);
    if let Some(c) = &out.certificate {
        let _ = writeln!(meta, "certificate-delta={:.16e}", c.delta);
        let _ = writeln!(meta, "certificate-xi={:.16e}", c.xi);
        let _ = writeln!(meta, "certificate-valid={}", c.valid);
    }
    let _ = writeln!(meta, "condition-number={cond:.16e}");
    let _ = writeln!(meta, "instance-label={}", instance.label);
    let _ = writeln!(meta, "reference-path={}", reference_path.display());
    let _ = writeln!(meta, "reference-converged={}", reference.converged);
    std::fs::write(&meta_path, meta).map_err(|e| io_err(&meta_path, e))?;

    Ok(RunArtifacts {
        csv_path: cfg.output.clone(),
        meta_path,
        reference_path,
        trace: out.trace,
    })
}

/// Instance identity across compared methods.
fn instance_key(cfg: &RunConfig) -> (String, u64, usize, String) {
    (
        cfg.experiment.to_string(),
        cfg.seed,
        cfg.n,
        cfg.instance
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default(),
    )
}

/// Runs every method config on the shared instance, writes one CSV per
/// method, and summarizes iterations and seconds to the RMSE thresholds.
pub fn execute_compare(config_paths: &[PathBuf], out_dir: &Path) -> Result<PathBuf, CliError> {
    if config_paths.len() < 2 {
        return Err(CliError::Config(
            "compare needs at least two method configs".into(),
        ));
    }
    let mut configs = Vec::new();
    for p in config_paths {
        let cfg = crate::config::read_config_file(p)?;
        cfg.validate()?;
        configs.push(cfg);
    }
    let key = instance_key(&configs[0]);
    for cfg in &configs[1..] {
        if instance_key(cfg) != key {
            return Err(CliError::Config(format!(
                "method configs target different instances: {:?} vs {:?}",
                key,
                instance_key(cfg)
            )));
        }
    }
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;

    // One shared reference, produced once.
    let instance = obtain_instance(&configs[0])?;
    let reference = match &configs[0].reference {
        Some(path) => read_reference(path)?,
        None => opave::bench::reference_solution(&instance)?,
    };
    let ref_path = out_dir.join("reference.txt");
    write_reference(&reference, &ref_path)?;

    let mut summary = String::from("method,threshold,iterations,seconds\n");
    let mut seen: Vec<String> = Vec::new();
    for cfg in &configs {
        let mut name = format!("{}-{}", cfg.solver, cfg.averaging);
        let dups = seen.iter().filter(|s| **s == name).count();
        seen.push(name.clone());
        if dups > 0 {
            name = format!("{name}-{}", dups + 1);
        }
        let out = run_solver(cfg, &instance, &reference.x)?;
        write_csv(&out.trace, &out_dir.join(format!("{name}.csv")))?;
        for thr in COMPARE_THRESHOLDS {
            let hit = out
                .trace
                .records
                .iter()
                .find(|r| r.rmse.map(|v| v <= thr).unwrap_or(false));
            match hit {
                Some(r) => {
                    let _ = writeln!(summary, "{name},{thr:e},{},{:.16e}", r.k, r.time_s);
                }
                None => {
                    let _ = writeln!(summary, "{name},{thr:e},{NOT_REACHED},{NOT_REACHED}");
                }
            }
        }
    }
    let summary_path = out_dir.join("summary.csv");
    std::fs::write(&summary_path, summary).map_err(|e| io_err(&summary_path, e))?;
    Ok(summary_path)
}

/// `gen`: writes instance files. Inverse integration writes a single file;
/// unmixing writes one file per pixel under `out` as a directory.
pub fn execute_gen(cfg: &RunConfig, pixels: usize, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    match cfg.experiment {
        Experiment::InverseIntegration => {
            let inst = gen_inverse_integration(
                cfg.n,
                &NoiseSpec {
                    snr_db: cfg.snr_db,
                    seed: cfg.seed,
                },
            )?;
            if let Some(dir) = out.parent() {
                if !dir.as_os_str().is_empty() {
                    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
                }
            }
            opave::bench::write_instance(&inst, out)?;
            Ok(vec![out.to_path_buf()])
        }
        Experiment::Unmixing => {
            let mu = cfg.mu.unwrap_or(1e-3);
            let insts = gen_unmixing(
                cfg.n,
                cfg.n,
                pixels,
                cfg.k_sparse,
                dict_kind(cfg.dict),
                mu,
                &NoiseSpec {
                    snr_db: cfg.snr_db,
                    seed: cfg.seed,
                },
            )?;
            std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
            let mut paths = Vec::new();
            for (j, inst) in insts.iter().enumerate() {
                let p = out.join(format!("pixel-{j:03}.txt"));
                opave::bench::write_instance(inst, &p)?;
                paths.push(p);
            }
            Ok(paths)
        }
        Experiment::Custom => Err(CliError::Config(
            "gen does not apply to experiment custom".into(),
        )),
    }
}

/// `reference`: high-accuracy solution for an instance file.
pub fn execute_reference(instance_path: &Path, out: &Path) -> Result<bool, CliError> {
    let instance = opave::bench::read_instance(instance_path)?;
    let r = opave::bench::reference_solution(&instance)?;
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
    }
    write_reference(&r, out)?;
    Ok(r.converged)
}
