//! Primal-dual splitting with operator-averaged primal and dual updates, a
//! step-size certificate, and the plug-and-play variant that hands the
//! primal step to an averaged proximal-gradient update while an augmented
//! dual pair absorbs the second nonsmooth term.

use std::sync::Arc;
use std::time::Instant;

use crate::engine::{AveragingSchedule, Band, FEJER_TOL, SCHEDULE_TOL};
use crate::error::{OpaveError, Result};
use crate::linalg::{
    commutation_defect, eig_sym, loewner_geq, sqrt_spd, DenseMatrix, SpdOperator, Vector,
};
use crate::prox::{
    prox, prox_conjugate_scaled, prox_scaled, ProximableFunction, SmoothFunction,
    StronglyConvexTerm,
};
use crate::trace::{IterRecord, IterTrace, RunDiagnostics, StopRule, Termination};

/// Certificate inequality tolerance.
pub const CERTIFICATE_TOL: f64 = 1e-12;
const DIVERGENCE_NORM: f64 = 1e12;
const COMMUTATION_TOL: f64 = 1e-10;

/// One composite term omega * (h box l)(L x - r) of the primal objective.
#[derive(Clone)]
pub struct CompositeTerm {
    pub h: ProximableFunction,
    pub l: StronglyConvexTerm,
    pub linear: DenseMatrix,
    pub shift: Vector,
    pub omega: f64,
}

/// minimize g(x) + sum_r omega_r (h_r box l_r)(L_r x - r_r) + f(x) - <x, z>
#[derive(Clone)]
pub struct CompositeProblem {
    pub g: ProximableFunction,
    pub f_smooth: SmoothFunction,
    /// Linear bias z.
    pub z: Vector,
    pub terms: Vec<CompositeTerm>,
}

impl CompositeProblem {
    pub fn new(
        g: ProximableFunction,
        f_smooth: SmoothFunction,
        z: Vector,
        terms: Vec<CompositeTerm>,
    ) -> Result<Self> {
        if terms.is_empty() {
            return Err(OpaveError::InvalidParam(
                "a composite problem needs at least one term".into(),
            ));
        }
        let n = z.len();
        let mut omega_sum = 0.0;
        for (r, t) in terms.iter().enumerate() {
            if !(t.omega > 0.0 && t.omega <= 1.0) {
                return Err(OpaveError::InvalidParam(format!(
                    "omega_{r} = {} outside (0, 1]",
                    t.omega
                )));
            }
            omega_sum += t.omega;
            if t.linear.cols() != n {
                return Err(OpaveError::DimensionMismatch(format!(
                    "L_{r} has {} columns but the primal dimension is {n}",
                    t.linear.cols()
                )));
            }
            if t.linear.rows() != t.shift.len() {
                return Err(OpaveError::DimensionMismatch(format!(
                    "L_{r} has {} rows but r_{r} has length {}",
                    t.linear.rows(),
                    t.shift.len()
                )));
            }
            if t.linear.frobenius_norm() == 0.0 {
                return Err(OpaveError::InvalidParam(format!("L_{r} is zero")));
            }
        }
        if (omega_sum - 1.0).abs() > 1e-12 {
            return Err(OpaveError::InvalidParam(format!(
                "weights must sum to 1, got {omega_sum}"
            )));
        }
        Ok(Self {
            g,
            f_smooth,
            z,
            terms,
        })
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    /// Primal objective when every l_r is the exact (degenerate) term, in
    /// which case the infimal convolution h_r box l_r equals h_r.
    fn objective(&self, x: &Vector) -> Option<f64> {
        if self.terms.iter().any(|t| t.l.nu().is_finite()) {
            return None;
        }
        let mut v = self.f_smooth.value(x) + self.g.eval(x) - x.dot(&self.z);
        for t in &self.terms {
            v += t.omega * t.h.eval(&t.linear.matvec(x).sub(&t.shift));
        }
        v.is_finite().then_some(v)
    }
}

/// Step-size certificate:
/// delta = 1/sqrt(sum_r omega_r ||sqrt(V_r) L_r sqrt(V)||^2) - 1,
/// xi = delta/((1 + delta) eig_max(V)), valid iff delta > 0 and
/// xi >= 1/(2 beta_bar - eps).
#[derive(Debug, Clone)]
pub struct StepCertificate {
    pub delta: f64,
    pub xi: f64,
    pub eps: f64,
    pub beta_bar: f64,
    pub valid: bool,
    pub reason: Option<String>,
}

pub fn step_certificate(
    v: &SpdOperator,
    v_terms: &[SpdOperator],
    l_terms: &[DenseMatrix],
    omega: &[f64],
    eps: f64,
    beta_bar: f64,
) -> Result<StepCertificate> {
    if v_terms.len() != l_terms.len() || omega.len() != l_terms.len() {
        return Err(OpaveError::DimensionMismatch(format!(
            "{} dual metrics, {} linear maps, {} weights",
            v_terms.len(),
            l_terms.len(),
            omega.len()
        )));
    }
    if eps <= 0.0 || !eps.is_finite() {
        return Err(OpaveError::InvalidParam(format!(
            "certificate eps must be positive, got {eps}"
        )));
    }
    if beta_bar <= 0.0 {
        return Err(OpaveError::InvalidParam(format!(
            "beta_bar must be positive, got {beta_bar}"
        )));
    }
    let sqrt_v = sqrt_spd(v)?;
    let mut sum = 0.0;
    for ((vr, lr), w) in v_terms.iter().zip(l_terms).zip(omega) {
        if lr.cols() != v.dim() || lr.rows() != vr.dim() {
            return Err(OpaveError::DimensionMismatch(format!(
                "L is {}x{}, V is {}, V_r is {}",
                lr.rows(),
                lr.cols(),
                v.dim(),
                vr.dim()
            )));
        }
        // ||sqrt(V_r) L sqrt(V)||^2 = eig_max(sqrt(V) L^T V_r L sqrt(V)).
        let inner = lr.transpose().matmul(vr.matrix()).matmul(lr);
        let m = sqrt_v
            .matrix()
            .matmul(&inner)
            .matmul(sqrt_v.matrix())
            .symmetrize();
        let (evals, _) = eig_sym(&m)?;
        sum += w * evals[evals.len() - 1].max(0.0);
    }
    if sum <= 0.0 {
        return Err(OpaveError::InvalidParam(
            "composed operator norm is zero".into(),
        ));
    }
    let delta = 1.0 / sum.sqrt() - 1.0;
    let xi = delta / ((1.0 + delta) * v.eig_max());
    let bound = 1.0 / (2.0 * beta_bar - eps);
    let (valid, reason) = if delta <= 0.0 {
        (false, Some("metrics too large".to_string()))
    } else if 2.0 * beta_bar - eps <= 0.0 {
        (false, Some(format!("eps {eps} exceeds 2 beta_bar")))
    } else if xi + CERTIFICATE_TOL < bound {
        (
            false,
            Some(format!("xi = {xi:.6e} below the bound {bound:.6e}")),
        )
    } else {
        (true, None)
    };
    Ok(StepCertificate {
        delta,
        xi,
        eps,
        beta_bar,
        valid,
        reason,
    })
}

type PdObserver = Arc<dyn Fn(usize, &Vector, &[Vector]) + Send + Sync>;

/// Metrics and schedules of one primal-dual solve. Metrics are constant, so
/// the certificate is evaluated once, before the first iteration.
#[derive(Clone)]
pub struct PdConfig {
    /// V; must be diagonal and commute with the primal averaging operators.
    pub primal_metric: SpdOperator,
    pub primal_averaging: AveragingSchedule,
    /// V_r, one per term, diagonal.
    pub dual_metrics: Vec<SpdOperator>,
    pub dual_averaging: Vec<AveragingSchedule>,
    pub eps: f64,
    pub warn_only: bool,
    pub record_stride: usize,
    /// Called with (k, x^k, v^k) for every state, including the initial one.
    pub observer: Option<PdObserver>,
}

#[derive(Debug, Clone)]
pub struct PdState {
    pub x: Vector,
    pub duals: Vec<Vector>,
}

impl PdState {
    /// Zero primal and duals of the right shapes.
    pub fn zeros(problem: &CompositeProblem) -> Self {
        Self {
            x: Vector::zeros(problem.dim()),
            duals: problem
                .terms
                .iter()
                .map(|t| Vector::zeros(t.linear.rows()))
                .collect(),
        }
    }
}

#[derive(Debug)]
pub struct PdOutcome {
    pub trace: IterTrace,
    pub duals: Vec<Vector>,
    pub certificate: StepCertificate,
}

/// Online schedule audit shared by primal and dual schedules: band, eta
/// budget, and the (1 + eta) cross-iteration comparison.
struct ScheduleAuditor {
    prev: Option<SpdOperator>,
    eta_sum: f64,
}

impl ScheduleAuditor {
    fn new() -> Self {
        Self {
            prev: None,
            eta_sum: 0.0,
        }
    }

    fn check(
        &mut self,
        k: usize,
        a: &SpdOperator,
        schedule: &AveragingSchedule,
    ) -> Result<Option<String>> {
        let band = schedule.band();
        let eta_k = schedule.eta(k);
        self.eta_sum += eta_k;
        let mut violation = None;
        if !band.contains_op(a, SCHEDULE_TOL) {
            violation = Some(format!(
                "band violated at k={k} ({}): eig range [{:.3e}, {:.3e}] vs [{:.3e}, {:.3e}]",
                schedule.label(),
                a.eig_min(),
                a.eig_max(),
                band.lo,
                band.hi
            ));
        } else if self.eta_sum > schedule.eta_budget() + SCHEDULE_TOL {
            violation = Some(format!(
                "eta budget exceeded at k={k} ({})",
                schedule.label()
            ));
        } else if let Some(prev) = &self.prev {
            let scaled = SpdOperator::new(a.matrix().scale(1.0 + eta_k))?;
            if !loewner_geq(&scaled, prev, SCHEDULE_TOL)? {
                violation = Some(format!(
                    "comparison (1+eta)A_next >= A_prev failed at k={k} ({})",
                    schedule.label()
                ));
            }
        }
        self.prev = Some(a.clone());
        Ok(violation)
    }
}

/// Inverse of a diagonal metric, for passing to the scaled proximal maps.
fn inverse_diag(v: &SpdOperator, what: &str) -> Result<SpdOperator> {
    let diag = v.diag_entries().ok_or_else(|| {
        OpaveError::UnsupportedMetric(format!("{what} must be a diagonal metric"))
    })?;
    if diag.iter().any(|&d| d <= 0.0) {
        return Err(OpaveError::Singular { eig_min: v.eig_min() });
    }
    SpdOperator::from_diagonal(&diag.iter().map(|d| 1.0 / d).collect::<Vec<_>>())
}

/// Runs the primal-dual iteration. Refuses to start on an invalid
/// certificate unless `warn_only` is set, in which case the waiver is
/// recorded in the run diagnostics. Stops on the joint residual
/// max(||p^k - x^k||, max_r ||q_r^k - v_r^k||) <= tol.
pub fn solve_pd(
    problem: &CompositeProblem,
    config: &PdConfig,
    state0: &PdState,
    stop: StopRule,
) -> Result<PdOutcome> {
    let n = problem.dim();
    let n_terms = problem.terms.len();
    if config.dual_metrics.len() != n_terms || config.dual_averaging.len() != n_terms {
        return Err(OpaveError::Config(format!(
            "{} terms but {} dual metrics and {} dual schedules",
            n_terms,
            config.dual_metrics.len(),
            config.dual_averaging.len()
        )));
    }
    if state0.x.len() != n || state0.duals.len() != n_terms {
        return Err(OpaveError::DimensionMismatch(
            "initial state does not match the problem".into(),
        ));
    }
    for (r, (d, t)) in state0.duals.iter().zip(&problem.terms).enumerate() {
        if d.len() != t.linear.rows() {
            return Err(OpaveError::DimensionMismatch(format!(
                "dual {r} has length {} but L_{r} has {} rows",
                d.len(),
                t.linear.rows()
            )));
        }
    }

    let beta_bar = problem
        .terms
        .iter()
        .map(|t| t.l.nu())
        .fold(problem.f_smooth.cocoercivity_beta(), f64::min);
    let l_mats: Vec<DenseMatrix> = problem.terms.iter().map(|t| t.linear.clone()).collect();
    let omegas: Vec<f64> = problem.terms.iter().map(|t| t.omega).collect();
    let certificate = step_certificate(
        &config.primal_metric,
        &config.dual_metrics,
        &l_mats,
        &omegas,
        config.eps,
        beta_bar,
    )?;
    // Warn-only runs may proceed past an invalid certificate; the waiver is
    // recorded in the diagnostics so traces stay honest about it.
    if !certificate.valid && !config.warn_only {
        return Err(OpaveError::CertificateInvalid(
            certificate
                .reason
                .clone()
                .unwrap_or_else(|| "certificate invalid".into()),
        ));
    }

    let v_inv = inverse_diag(&config.primal_metric, "primal metric")?;
    for (r, m) in config.dual_metrics.iter().enumerate() {
        // Rejects non-diagonal or singular dual metrics up front.
        inverse_diag(m, &format!("dual metric {r}"))?;
    }

    let mut x = state0.x.clone();
    let mut duals = state0.duals.clone();
    let mut records = Vec::new();
    let mut diag = RunDiagnostics::default();
    diag.certificate_waived = !certificate.valid;
    let mut primal_audit = ScheduleAuditor::new();
    let mut dual_audits: Vec<ScheduleAuditor> =
        (0..n_terms).map(|_| ScheduleAuditor::new()).collect();
    let start = Instant::now();
    let stride = config.record_stride.max(1);
    let mut status = Termination::MaxIters;
    let mut k = 0;
    let mut last_residual = f64::INFINITY;

    if let Some(obs) = &config.observer {
        obs(0, &x, &duals);
    }

    while k < stop.max_iters {
        // Dual half-steps.
        let mut qs = Vec::with_capacity(n_terms);
        let mut reflected = Vec::with_capacity(n_terms);
        for (r, t) in problem.terms.iter().enumerate() {
            let v_r = &duals[r];
            let arg = t
                .linear
                .matvec(&x)
                .sub(&t.l.conjugate_gradient(v_r))
                .sub(&t.shift);
            let y = v_r.add(&config.dual_metrics[r].apply(&arg));
            let q = prox_conjugate_scaled(&t.h, &y, &config.dual_metrics[r])?;
            reflected.push(q.scale(2.0).sub(v_r));
            qs.push(q);
        }

        // Primal half-step.
        let grad = problem.f_smooth.gradient(&x);
        let mut pull = grad.sub(&problem.z);
        for (t, w) in problem.terms.iter().zip(&reflected) {
            pull = pull.add(&t.linear.matvec_t(w).scale(t.omega));
        }
        let s = x.sub(&config.primal_metric.apply(&pull));
        let p = prox_scaled(&problem.g, &s, &v_inv)?;

        let dual_res = qs
            .iter()
            .zip(&duals)
            .map(|(q, v)| q.sub(v).norm())
            .fold(0.0f64, f64::max);
        let residual = p.sub(&x).norm().max(dual_res);
        if residual > last_residual + FEJER_TOL {
            // Empirical monotonicity audit; logged only.
            diag.fejer_violations += 1;
            diag.max_fejer_violation = diag.max_fejer_violation.max(residual - last_residual);
        }
        last_residual = residual;
        if k % stride == 0 {
            records.push(IterRecord {
                k,
                time_s: start.elapsed().as_secs_f64(),
                objective: problem.objective(&x),
                residual,
                rmse: None,
            });
        }
        if residual <= stop.residual_tol {
            status = Termination::Converged;
            break;
        }

        // Averaged updates with online admissibility audits.
        let a = config.primal_averaging.next(k, &x)?;
        let comm = commutation_defect(a.matrix(), &config.primal_metric)?;
        if comm > COMMUTATION_TOL {
            return Err(OpaveError::Config(format!(
                "primal A^{k} and V do not commute: ||AV - VA||_F = {comm:.3e}"
            )));
        }
        let mut violations = Vec::new();
        if let Some(reason) = primal_audit.check(k, &a, &config.primal_averaging)? {
            violations.push(reason);
        }
        for (r, (audit, sched)) in dual_audits
            .iter_mut()
            .zip(&config.dual_averaging)
            .enumerate()
        {
            let a_r = sched.next(k, &duals[r])?;
            if let Some(reason) = audit.check(k, &a_r, sched)? {
                violations.push(reason);
            }
            duals[r] = duals[r].add(&a_r.apply(&qs[r].sub(&duals[r])));
        }
        for reason in violations {
            diag.schedule_violations += 1;
            if !config.warn_only {
                return Err(OpaveError::ScheduleViolation { k, reason });
            }
        }
        x = x.add(&a.apply(&p.sub(&x)));

        k += 1;
        if let Some(obs) = &config.observer {
            obs(k, &x, &duals);
        }
        if x.norm() > DIVERGENCE_NORM {
            status = Termination::Diverged;
            break;
        }
    }

    if status != Termination::Converged {
        records.push(IterRecord {
            k,
            time_s: start.elapsed().as_secs_f64(),
            objective: problem.objective(&x),
            residual: last_residual,
            rmse: None,
        });
    }

    diag.clip_events = config.primal_averaging.clip_events();
    diag.fallback_events = config.primal_averaging.fallback_events();
    Ok(PdOutcome {
        trace: IterTrace {
            records,
            status,
            final_iterate: x,
            iterations: k,
            diagnostics: diag,
        },
        duals,
        certificate,
    })
}

type PnpObserver = Arc<dyn Fn(usize, &Vector) + Send + Sync>;

/// Parameters of the plug-and-play solve.
#[derive(Clone)]
pub struct PnpConfig {
    /// Augmented coupling weight gamma.
    pub gamma: f64,
    /// Primal step tau.
    pub tau: f64,
    pub averaging: AveragingSchedule,
    pub eps: f64,
    pub warn_only: bool,
    pub record_stride: usize,
    pub observer: Option<PnpObserver>,
}

impl PnpConfig {
    pub fn new(gamma: f64, tau: f64, averaging: AveragingSchedule) -> Self {
        Self {
            gamma,
            tau,
            averaging,
            eps: 1e-6,
            warn_only: false,
            record_stride: 1,
            observer: None,
        }
    }
}

/// Primal iterate and scaled-dual carry. The split variable z is recomputed
/// at the top of every iteration from (x, u).
#[derive(Debug, Clone)]
pub struct PnpState {
    pub x: Vector,
    pub u: Vector,
}

impl PnpState {
    pub fn zeros(n: usize) -> Self {
        Self {
            x: Vector::zeros(n),
            u: Vector::zeros(n),
        }
    }
}

/// The smooth term of the plug-and-play setting: f = (1/2)||Hx - b||^2 with
/// gradient H^T(Hx - b) and cocoercivity 1/eig_max(H^T H).
pub fn pnp_smooth(h: &DenseMatrix, b: &Vector) -> Result<SmoothFunction> {
    if h.rows() != b.len() {
        return Err(OpaveError::DimensionMismatch(format!(
            "H is {}x{} but b has length {}",
            h.rows(),
            h.cols(),
            b.len()
        )));
    }
    let lmax = SpdOperator::new(h.gram())?.eig_max();
    if lmax <= 0.0 {
        return Err(OpaveError::InvalidParam("H must be nonzero".into()));
    }
    let h1 = h.clone();
    let b1 = b.clone();
    let h2 = h.clone();
    let b2 = b.clone();
    SmoothFunction::new(
        move |x| {
            let r = h1.matvec(x).sub(&b1);
            0.5 * r.dot(&r)
        },
        move |x| h2.matvec_t(&h2.matvec(x).sub(&b2)),
        1.0 / lmax,
    )
}

/// Certificate of the plug-and-play pairing: delta = 1/(tau gamma) - 1 with
/// the bound of the primal-dual certificate at V = tau I, V_1 = gamma I,
/// L = I.
pub fn pnp_certificate(tau: f64, gamma: f64, eps: f64, beta: f64) -> Result<StepCertificate> {
    if tau <= 0.0 || gamma <= 0.0 || !tau.is_finite() || !gamma.is_finite() {
        return Err(OpaveError::InvalidParam(format!(
            "tau and gamma must be positive, got tau={tau}, gamma={gamma}"
        )));
    }
    let delta = 1.0 / (tau * gamma) - 1.0;
    let xi = delta / ((1.0 + delta) * tau);
    let bound = 1.0 / (2.0 * beta - eps);
    let (valid, reason) = if delta <= 0.0 {
        (false, Some("metrics too large".to_string()))
    } else if 2.0 * beta - eps <= 0.0 {
        (false, Some(format!("eps {eps} exceeds 2 beta_bar")))
    } else if xi + CERTIFICATE_TOL < bound {
        (
            false,
            Some(format!("xi = {xi:.6e} below the bound {bound:.6e}")),
        )
    } else {
        (true, None)
    };
    Ok(StepCertificate {
        delta,
        xi,
        eps,
        beta_bar: beta,
        valid,
        reason,
    })
}

/// Plug-and-play solve of minimize (1/2)||Hx - b||^2 + g(x) + h(x).
///
/// One iteration from state (x, u):
///
/// ```text
/// z  = prox_{h/gamma}(x + u)
/// u' = u + x - z
/// xt = prox_{tau g}(x - tau (grad f(x) + gamma (x - z + u')))
/// x' = x + A (xt - x)
/// ```
pub fn solve_pnp(
    h_mat: &DenseMatrix,
    b: &Vector,
    g: &ProximableFunction,
    h_fun: &ProximableFunction,
    config: &PnpConfig,
    state0: &PnpState,
    stop: StopRule,
) -> Result<IterTrace> {
    let n = h_mat.cols();
    if state0.x.len() != n || state0.u.len() != n {
        return Err(OpaveError::DimensionMismatch(format!(
            "state of dimension {} vs problem of dimension {n}",
            state0.x.len()
        )));
    }
    let f = pnp_smooth(h_mat, b)?;
    let cert = pnp_certificate(config.tau, config.gamma, config.eps, f.cocoercivity_beta())?;
    if !cert.valid && !config.warn_only {
        return Err(OpaveError::CertificateInvalid(
            cert.reason.unwrap_or_else(|| "certificate invalid".into()),
        ));
    }

    let gamma = config.gamma;
    let tau = config.tau;
    let mut x = state0.x.clone();
    let mut u_prev = state0.u.clone();
    let mut records = Vec::new();
    let mut diag = RunDiagnostics::default();
    diag.certificate_waived = !cert.valid;
    let mut audit = ScheduleAuditor::new();
    let start = Instant::now();
    let stride = config.record_stride.max(1);
    let mut status = Termination::MaxIters;
    let mut k = 0;
    let mut last_residual = f64::INFINITY;

    if let Some(obs) = &config.observer {
        obs(0, &x);
    }

    while k < stop.max_iters {
        let z = prox(h_fun, &x.add(&u_prev), 1.0 / gamma)?;
        let u = u_prev.add(&x.sub(&z));
        let grad = f.gradient(&x);
        let coupled = grad.add(&x.sub(&z).add(&u).scale(gamma));
        let xt = prox(g, &x.sub(&coupled.scale(tau)), tau)?;

        // Joint residual of the mapped primal-dual instance: the dual
        // residual ||q - v|| equals gamma ||x - z||.
        let residual = xt.sub(&x).norm().max(gamma * x.sub(&z).norm());
        last_residual = residual;
        let obj = f.value(&x) + g.eval(&x) + h_fun.eval(&x);
        if k % stride == 0 {
            records.push(IterRecord {
                k,
                time_s: start.elapsed().as_secs_f64(),
                objective: obj.is_finite().then_some(obj),
                residual,
                rmse: None,
            });
        }
        if residual <= stop.residual_tol {
            status = Termination::Converged;
            break;
        }

        let a = config.averaging.next(k, &x)?;
        if let Some(reason) = audit.check(k, &a, &config.averaging)? {
            diag.schedule_violations += 1;
            if !config.warn_only {
                return Err(OpaveError::ScheduleViolation { k, reason });
            }
        }
        x = x.add(&a.apply(&xt.sub(&x)));
        u_prev = u;

        k += 1;
        if let Some(obs) = &config.observer {
            obs(k, &x);
        }
        if x.norm() > DIVERGENCE_NORM {
            status = Termination::Diverged;
            break;
        }
    }

    if status != Termination::Converged {
        records.push(IterRecord {
            k,
            time_s: start.elapsed().as_secs_f64(),
            objective: None,
            residual: last_residual,
            rmse: None,
        });
    }

    diag.clip_events = config.averaging.clip_events();
    diag.fallback_events = config.averaging.fallback_events();
    Ok(IterTrace {
        records,
        status,
        final_iterate: x,
        iterations: k,
        diagnostics: diag,
    })
}

/// Rewrites a plug-and-play instance as a composite problem plus the metric
/// and schedule choices under which the primal-dual iterates reproduce the
/// plug-and-play ones: one term with L = I, r = 0, z = 0, V = tau I,
/// V_1 = gamma I, identity dual averaging, and initial dual gamma * u^0.
pub fn map_pnp_to_pd(
    h_mat: &DenseMatrix,
    b: &Vector,
    g: &ProximableFunction,
    h_fun: &ProximableFunction,
    config: &PnpConfig,
    state0: &PnpState,
) -> Result<(CompositeProblem, PdConfig, PdState)> {
    let n = h_mat.cols();
    let f = pnp_smooth(h_mat, b)?;
    let problem = CompositeProblem::new(
        g.clone(),
        f,
        Vector::zeros(n),
        vec![CompositeTerm {
            h: h_fun.clone(),
            l: StronglyConvexTerm::exact(),
            linear: DenseMatrix::identity(n),
            shift: Vector::zeros(n),
            omega: 1.0,
        }],
    )?;
    let identity_band = Band::upper_one(config.eps.min(0.5))?;
    let dual_schedule = AveragingSchedule::new(
        "identity",
        identity_band,
        0.0,
        |_| 0.0,
        move |_, v: &Vector| Ok(SpdOperator::identity(v.len())),
    );
    let pd_config = PdConfig {
        primal_metric: SpdOperator::scaled_identity(n, config.tau),
        primal_averaging: config.averaging.clone(),
        dual_metrics: vec![SpdOperator::scaled_identity(n, config.gamma)],
        dual_averaging: vec![dual_schedule],
        eps: config.eps,
        warn_only: config.warn_only,
        record_stride: config.record_stride,
        observer: None,
    };
    let state = PdState {
        x: state0.x.clone(),
        duals: vec![state0.u.scale(config.gamma)],
    };
    Ok((problem, pd_config, state))
}
