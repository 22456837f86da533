//! Operator-averaged fixed-point iterations.
//!
//! The core update is `x + A (R(x) - x)` for a nonexpansive map `R` and an
//! SPD operator `A` drawn from a schedule. The engine audits the schedule
//! admissibility conditions online (eigenvalue band, the `(1 + eta^k)`
//! cross-iteration comparison, and the summability budget of `{eta^k}`) and
//! carries a per-step Fejer-monotonicity monitor for test runs where a
//! reference fixed point is known.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use crate::error::{OpaveError, Result};
use crate::linalg::{inverse_spd, loewner_geq, metric_norm, SpdOperator, Vector};
use crate::trace::{IterRecord, IterTrace, RunDiagnostics, StopRule, Termination};

/// Admissibility tolerance for the band and cross-iteration checks.
pub const SCHEDULE_TOL: f64 = 1e-10;
/// Fejer-monitor violations below this are treated as round-off.
pub const FEJER_TOL: f64 = 1e-10;
const DIVERGENCE_NORM: f64 = 1e12;

/// A nonexpansive operator, supplied as a closure. Nonexpansiveness is the
/// caller's contract; `audit_nonexpansive` samples pairs but never enforces.
#[derive(Clone)]
pub struct NonexpansiveMap {
    apply: Arc<dyn Fn(&Vector) -> Vector + Send + Sync>,
    label: String,
}

impl NonexpansiveMap {
    pub fn new(
        label: impl Into<String>,
        apply: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
    ) -> Self {
        Self {
            apply: Arc::new(apply),
            label: label.into(),
        }
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        (self.apply)(x)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Largest observed expansion ratio over the sampled pairs.
    pub fn audit_nonexpansive(&self, pairs: &[(Vector, Vector)]) -> f64 {
        pairs
            .iter()
            .filter(|(x, y)| x.sub(y).norm() > 0.0)
            .map(|(x, y)| self.apply(x).sub(&self.apply(y)).norm() / x.sub(y).norm())
            .fold(0.0, f64::max)
    }
}

impl std::fmt::Debug for NonexpansiveMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "NonexpansiveMap({})", self.label)
    }
}

/// Eigenvalue band an averaging operator must live in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    /// The fixed-point regime: [eps, 1 - eps].
    pub fn symmetric(eps: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&eps) || eps == 0.0 {
            return Err(OpaveError::InvalidParam(format!(
                "band epsilon must lie in (0, 0.5), got {eps}"
            )));
        }
        Ok(Self {
            lo: eps,
            hi: 1.0 - eps,
        })
    }

    /// The solver regime, where the upper eigenvalue may reach 1: [eps, 1].
    pub fn upper_one(eps: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&eps) || eps == 0.0 {
            return Err(OpaveError::InvalidParam(format!(
                "band epsilon must lie in (0, 1), got {eps}"
            )));
        }
        Ok(Self { lo: eps, hi: 1.0 })
    }

    pub fn eps(&self) -> f64 {
        self.lo
    }

    pub fn contains_op(&self, a: &SpdOperator, tol: f64) -> bool {
        a.eig_min() >= self.lo - tol && a.eig_max() <= self.hi + tol
    }
}

/// Shared counters a strategy increments while emitting operators.
#[derive(Debug, Default)]
pub struct ScheduleDiagnostics {
    pub clip_events: AtomicUsize,
    pub fallback_events: AtomicUsize,
}

type NextFn = Arc<dyn Fn(usize, &Vector) -> Result<SpdOperator> + Send + Sync>;
type EtaFn = Arc<dyn Fn(usize) -> f64 + Send + Sync>;

/// The per-iteration sequence {A^k} together with its slack sequence {eta^k}
/// and the eigenvalue band. The engine cannot verify an infinite tail, so
/// summability of {eta^k} is audited against a declared budget.
#[derive(Clone)]
pub struct AveragingSchedule {
    next: NextFn,
    eta: EtaFn,
    eta_budget: f64,
    band: Band,
    label: String,
    diagnostics: Arc<ScheduleDiagnostics>,
}

impl AveragingSchedule {
    pub fn new(
        label: impl Into<String>,
        band: Band,
        eta_budget: f64,
        eta: impl Fn(usize) -> f64 + Send + Sync + 'static,
        next: impl Fn(usize, &Vector) -> Result<SpdOperator> + Send + Sync + 'static,
    ) -> Self {
        Self::with_diagnostics(
            label,
            band,
            eta_budget,
            eta,
            next,
            Arc::new(ScheduleDiagnostics::default()),
        )
    }

    /// Constructor for strategies whose emit closure shares the diagnostics
    /// counters (the closure must capture a clone of the same Arc).
    pub fn with_diagnostics(
        label: impl Into<String>,
        band: Band,
        eta_budget: f64,
        eta: impl Fn(usize) -> f64 + Send + Sync + 'static,
        next: impl Fn(usize, &Vector) -> Result<SpdOperator> + Send + Sync + 'static,
        diagnostics: Arc<ScheduleDiagnostics>,
    ) -> Self {
        Self {
            next: Arc::new(next),
            eta: Arc::new(eta),
            eta_budget,
            band,
            label: label.into(),
            diagnostics,
        }
    }

    pub fn next(&self, k: usize, x: &Vector) -> Result<SpdOperator> {
        (self.next)(k, x)
    }

    pub fn eta(&self, k: usize) -> f64 {
        (self.eta)(k)
    }

    pub fn eta_budget(&self) -> f64 {
        self.eta_budget
    }

    pub fn band(&self) -> Band {
        self.band
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn diagnostics(&self) -> &Arc<ScheduleDiagnostics> {
        &self.diagnostics
    }

    pub fn clip_events(&self) -> usize {
        self.diagnostics.clip_events.load(Ordering::Relaxed)
    }

    pub fn fallback_events(&self) -> usize {
        self.diagnostics.fallback_events.load(Ordering::Relaxed)
    }
}

impl std::fmt::Debug for AveragingSchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "AveragingSchedule({}, band [{}, {}])", self.label, self.band.lo, self.band.hi)
    }
}

/// Monitored quantities of one averaged step.
#[derive(Debug, Clone)]
pub struct FejerRecord {
    pub k: usize,
    /// ||R(x^k) - x^k||
    pub residual_norm: f64,
    /// ||x^k - x_ref||_{A^{-1}}, when a reference point was supplied.
    pub lyapunov: Option<f64>,
    /// Positive exceedance of the contraction inequality, if any.
    pub violation: Option<f64>,
}

/// One operator-averaged step: x + A (R(x) - x).
pub fn operator_averaged_step(
    x: &Vector,
    map: &NonexpansiveMap,
    a: &SpdOperator,
) -> Result<Vector> {
    if x.len() != a.dim() {
        return Err(OpaveError::DimensionMismatch(format!(
            "iterate of length {} vs operator of dimension {}",
            x.len(),
            a.dim()
        )));
    }
    let m = map.apply(x);
    if m.len() != x.len() {
        return Err(OpaveError::DimensionMismatch(format!(
            "map returned length {} for input of length {}",
            m.len(),
            x.len()
        )));
    }
    Ok(x.add(&a.apply(&m.sub(x))))
}

/// Diagnostics of a single schedule-step admissibility check.
#[derive(Debug, Clone)]
pub struct ScheduleCheck {
    pub ok: bool,
    /// A_next lies inside the band.
    pub band_ok: bool,
    /// (1 + eta_k) A_next >= A_prev in the Loewner order.
    pub monotone_ok: bool,
    pub detail: String,
}

/// Checks one step of a schedule against the admissibility conditions:
/// the band on `a_next` and the comparison (1 + eta_k) a_next >= a_prev.
pub fn check_schedule_step(
    a_prev: &SpdOperator,
    a_next: &SpdOperator,
    eta_k: f64,
    band: Band,
) -> Result<ScheduleCheck> {
    if a_prev.dim() != a_next.dim() {
        return Err(OpaveError::DimensionMismatch(format!(
            "operators of dimension {} and {}",
            a_prev.dim(),
            a_next.dim()
        )));
    }
    let band_ok = band.contains_op(a_next, SCHEDULE_TOL);
    // Scaling by (1 + eta) shifts the spectrum by the same factor; no fresh
    // eigenvalue sweep is needed.
    let monotone_ok = if eta_k == 0.0 {
        loewner_geq(a_next, a_prev, SCHEDULE_TOL)?
    } else {
        let scaled = SpdOperator::with_known_bounds(
            a_next.matrix().scale(1.0 + eta_k),
            a_next.eig_min() * (1.0 + eta_k),
            a_next.eig_max() * (1.0 + eta_k),
        )?;
        loewner_geq(&scaled, a_prev, SCHEDULE_TOL)?
    };
    let ok = band_ok && monotone_ok;
    let detail = if ok {
        String::new()
    } else {
        format!(
            "band_ok={band_ok} (eig range [{:.3e}, {:.3e}] vs band [{:.3e}, {:.3e}]), monotone_ok={monotone_ok} (eta={eta_k:.3e})",
            a_next.eig_min(),
            a_next.eig_max(),
            band.lo,
            band.hi
        )
    };
    Ok(ScheduleCheck {
        ok,
        band_ok,
        monotone_ok,
        detail,
    })
}

/// Evaluates the per-step contraction inequality in the metric induced by
/// A^{-1}:
///
/// ```text
/// ||x_{k+1} - x_ref||^2_{A^-1} <= ||x_k - x_ref||^2_{A^-1}
///                                 - ((1 - M)/M) ||x_{k+1} - x_k||^2_{A^-1}
/// ```
///
/// where `m_k` is the upper eigenvalue bound of A. The violation field holds
/// the positive exceedance if the inequality fails.
pub fn fejer_monitor(
    k: usize,
    x_k: &Vector,
    x_k1: &Vector,
    x_ref: &Vector,
    a: &SpdOperator,
    m_k: f64,
) -> Result<FejerRecord> {
    let a_inv = inverse_spd(a)?;
    let prev = metric_norm(&x_k.sub(x_ref), &a_inv)?.powi(2);
    let next = metric_norm(&x_k1.sub(x_ref), &a_inv)?.powi(2);
    let step = metric_norm(&x_k1.sub(x_k), &a_inv)?.powi(2);
    let contraction = (1.0 - m_k) / m_k * step;
    let exceed = next - (prev - contraction);
    // The fixed-point residual recovered from the step: R(x) - x = A^{-1}(x' - x).
    let residual_norm = a_inv.apply(&x_k1.sub(x_k)).norm();
    Ok(FejerRecord {
        k,
        residual_norm,
        lyapunov: Some(prev.sqrt()),
        violation: (exceed > 0.0).then_some(exceed),
    })
}

/// How `run_km` reacts to schedule violations, and whether it monitors
/// Fejer monotonicity against a known reference point.
#[derive(Clone, Default)]
pub struct KmOptions {
    /// Reference fixed point; enables the Fejer monitor (test mode only).
    pub x_ref: Option<Vector>,
    /// Warn mode: log schedule violations in the diagnostics instead of
    /// aborting. This is the benchmark mode.
    pub warn_only: bool,
    pub record_stride: usize,
}

/// Runs the extended KM iteration under a schedule, auditing admissibility
/// online. Returns the trace; in enforce mode a schedule violation aborts
/// the run with a diagnostic describing which condition failed at which k.
pub fn run_km(
    map: &NonexpansiveMap,
    schedule: &AveragingSchedule,
    x0: &Vector,
    stop: StopRule,
    opts: &KmOptions,
) -> Result<IterTrace> {
    let stride = opts.record_stride.max(1);
    let mut x = x0.clone();
    let mut records = Vec::new();
    let mut diag = RunDiagnostics::default();
    let mut a_prev: Option<SpdOperator> = None;
    let mut eta_sum = 0.0;
    let band = schedule.band();
    let start = Instant::now();
    let mut status = Termination::MaxIters;
    let mut k = 0;

    while k < stop.max_iters {
        let m = map.apply(&x);
        let residual = m.sub(&x).norm();
        if k % stride == 0 {
            records.push(IterRecord {
                k,
                time_s: start.elapsed().as_secs_f64(),
                objective: None,
                residual,
                rmse: None,
            });
        }
        if residual <= stop.residual_tol {
            status = Termination::Converged;
            break;
        }

        let a = schedule.next(k, &x)?;
        let eta_k = schedule.eta(k);
        eta_sum += eta_k;

        // Admissibility audit.
        let mut violation: Option<String> = None;
        if !band.contains_op(&a, SCHEDULE_TOL) {
            violation = Some(format!(
                "band violated: eig range [{:.3e}, {:.3e}] vs [{:.3e}, {:.3e}]",
                a.eig_min(),
                a.eig_max(),
                band.lo,
                band.hi
            ));
        } else if eta_sum > schedule.eta_budget() + SCHEDULE_TOL {
            violation = Some(format!(
                "eta budget exceeded: partial sum {eta_sum:.3e} > {:.3e}",
                schedule.eta_budget()
            ));
        } else if let Some(prev) = &a_prev {
            let check = check_schedule_step(prev, &a, eta_k, band)?;
            if !check.monotone_ok {
                violation = Some(format!("comparison (1+eta)A_next >= A_prev failed: {}", check.detail));
            }
        }
        if let Some(reason) = violation {
            diag.schedule_violations += 1;
            if !opts.warn_only {
                return Err(OpaveError::ScheduleViolation { k, reason });
            }
        }

        let x_next = x.add(&a.apply(&m.sub(&x)));

        if let Some(x_ref) = &opts.x_ref {
            let rec = fejer_monitor(k, &x, &x_next, x_ref, &a, a.eig_max())?;
            if let Some(v) = rec.violation {
                if v > FEJER_TOL {
                    diag.fejer_violations += 1;
                }
                diag.max_fejer_violation = diag.max_fejer_violation.max(v);
            }
        }

        x = x_next;
        if x.norm() > DIVERGENCE_NORM {
            status = Termination::Diverged;
            k += 1;
            break;
        }
        a_prev = Some(a);
        k += 1;
    }

    if status == Termination::MaxIters || status == Termination::Diverged {
        let residual = map.apply(&x).sub(&x).norm();
        records.push(IterRecord {
            k,
            time_s: start.elapsed().as_secs_f64(),
            objective: None,
            residual,
            rmse: None,
        });
    }

    diag.clip_events = schedule.clip_events();
    diag.fallback_events = schedule.fallback_events();
    Ok(IterTrace {
        records,
        status,
        final_iterate: x,
        iterations: k,
        diagnostics: diag,
    })
}
