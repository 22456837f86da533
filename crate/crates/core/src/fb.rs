//! Variable-metric forward-backward splitting with operator averaging and
//! summable error sequences.
//!
//! One iteration, for minimize f(x) + g(x):
//!
//! ```text
//! s^k   = x^k - gamma^k V^k (grad f(x^k) + b^k)
//! x^k+1 = x^k + A^k (prox of g at s^k in the (V^k)^-1 metric + a^k - x^k)
//! ```

use std::sync::Arc;
use std::time::Instant;

use crate::engine::{AveragingSchedule, SCHEDULE_TOL};
use crate::error::{OpaveError, Result};
use crate::linalg::{commutation_defect, SpdOperator, Vector};
use crate::prox::{prox, prox_scaled, ProximableFunction, SmoothFunction};
use crate::trace::{IterRecord, IterTrace, RunDiagnostics, StopRule, Termination};

/// Commutation requirement ||A V - V A||_F for each emitted pair.
pub const COMMUTATION_TOL: f64 = 1e-10;
const DIVERGENCE_NORM: f64 = 1e12;

type GammaFn = Arc<dyn Fn(usize) -> f64 + Send + Sync>;
type MetricFn = Arc<dyn Fn(usize) -> SpdOperator + Send + Sync>;
type ErrorFn = Arc<dyn Fn(usize) -> Vector + Send + Sync>;
type ObserverFn = Arc<dyn Fn(usize, &Vector) + Send + Sync>;

/// Step sizes, metrics, averaging schedule, and error sequences of one solve.
#[derive(Clone)]
pub struct FbConfig {
    /// gamma^k, checked against [eps, (2 beta - eps) / eig_max(V^k)].
    pub gamma: GammaFn,
    /// V^k; must be diagonal (the metric prox is component-wise) and commute
    /// with A^k within `COMMUTATION_TOL`.
    pub metric: MetricFn,
    pub averaging: AveragingSchedule,
    /// Gradient perturbations b^k; `None` means identically zero.
    pub errors_grad: Option<ErrorFn>,
    /// Prox perturbations a^k; `None` means identically zero.
    pub errors_prox: Option<ErrorFn>,
    /// Declared bound on sum ||a^k|| + sum ||b^k||.
    pub error_budget: f64,
    pub eps: f64,
    /// Log schedule violations instead of aborting (benchmark mode).
    pub warn_only: bool,
    /// Reference solution; enables the quasi-Fejer monitor in the metric
    /// (A^k V^k)^{-1}.
    pub x_ref: Option<Vector>,
    pub record_stride: usize,
    /// Called with every iterate, including x0. For iterate-level comparison
    /// tests; keep it cheap.
    pub observer: Option<ObserverFn>,
}

impl FbConfig {
    /// Constant step, metric, and schedule; zero errors.
    pub fn constant(gamma: f64, metric: SpdOperator, averaging: AveragingSchedule) -> Self {
        Self {
            gamma: Arc::new(move |_| gamma),
            metric: Arc::new(move |_| metric.clone()),
            averaging,
            errors_grad: None,
            errors_prox: None,
            error_budget: 0.0,
            eps: 1e-6,
            warn_only: false,
            x_ref: None,
            record_stride: 1,
            observer: None,
        }
    }
}

/// Runs the iteration until the prox-gradient optimality residual
/// ||x - prox_{gamma g}(x - gamma grad f(x))|| drops below the tolerance,
/// the iteration budget runs out, or the iterate norm passes the divergence
/// threshold.
pub fn solve_fb(
    f: &SmoothFunction,
    g: &ProximableFunction,
    config: &FbConfig,
    x0: &Vector,
    stop: StopRule,
) -> Result<IterTrace> {
    let beta = f.cocoercivity_beta();
    let eps = config.eps;
    if eps <= 0.0 || !eps.is_finite() {
        return Err(OpaveError::Config(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let stride = config.record_stride.max(1);
    let band = config.averaging.band();
    let mut x = x0.clone();
    let mut records = Vec::new();
    let mut diag = RunDiagnostics::default();
    let mut prev_av: Option<SpdOperator> = None;
    let mut eta_sum = 0.0;
    let mut error_sum = 0.0;
    let start = Instant::now();
    let mut status = Termination::MaxIters;
    let mut k = 0;

    if let Some(obs) = &config.observer {
        obs(0, &x);
    }

    while k < stop.max_iters {
        let grad = f.gradient(&x);
        let gamma = (config.gamma)(k);
        let v = (config.metric)(k);
        if v.dim() != x.len() {
            return Err(OpaveError::DimensionMismatch(format!(
                "metric of dimension {} vs iterate of length {}",
                v.dim(),
                x.len()
            )));
        }
        // Step band of the convergence theory.
        let hi = (2.0 * beta - eps) / v.eig_max();
        if !(gamma >= eps - SCHEDULE_TOL && gamma <= hi + SCHEDULE_TOL) {
            return Err(OpaveError::Config(format!(
                "step gamma^{k} = {gamma:.6e} outside [{eps:.3e}, {hi:.6e}]"
            )));
        }

        // Optimality residual used for stopping.
        let fixed = prox(g, &x.sub(&grad.scale(gamma)), gamma)?;
        let residual = fixed.sub(&x).norm();
        let obj = f.value(&x) + g.eval(&x);
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
        if a.dim() != x.len() {
            return Err(OpaveError::DimensionMismatch(format!(
                "averaging operator of dimension {} vs iterate of length {}",
                a.dim(),
                x.len()
            )));
        }
        let comm = commutation_defect(a.matrix(), &v)?;
        if comm > COMMUTATION_TOL {
            return Err(OpaveError::Config(format!(
                "A^{k} and V^{k} do not commute: ||AV - VA||_F = {comm:.3e}"
            )));
        }

        // Admissibility audit on A^k (band) and on the product A^k V^k
        // (cross-iteration comparison with the eta slack).
        let eta_k = config.averaging.eta(k);
        eta_sum += eta_k;
        let av_op = if let (Some(da), Some(dv)) = (a.diag_entries(), v.diag_entries()) {
            let prod: Vec<f64> = da.iter().zip(&dv).map(|(x, y)| x * y).collect();
            SpdOperator::from_diagonal(&prod)?
        } else {
            SpdOperator::new(a.matrix().matmul(v.matrix()).symmetrize())?
        };
        let mut violation: Option<String> = None;
        if !band.contains_op(&a, SCHEDULE_TOL) {
            violation = Some(format!(
                "band violated at k={k}: eig range [{:.3e}, {:.3e}] vs [{:.3e}, {:.3e}]",
                a.eig_min(),
                a.eig_max(),
                band.lo,
                band.hi
            ));
        } else if eta_sum > config.averaging.eta_budget() + SCHEDULE_TOL {
            violation = Some(format!(
                "eta budget exceeded at k={k}: partial sum {eta_sum:.3e}"
            ));
        } else if let Some(prev) = &prev_av {
            // Only the Loewner comparison applies to the product A V; the
            // band condition is on A alone. Scaling by (1 + eta) shifts the
            // spectrum exactly; no fresh eigenvalue sweep is needed.
            let scaled = if eta_k == 0.0 {
                av_op.clone()
            } else {
                SpdOperator::with_known_bounds(
                    av_op.matrix().scale(1.0 + eta_k),
                    av_op.eig_min() * (1.0 + eta_k),
                    av_op.eig_max() * (1.0 + eta_k),
                )?
            };
            if !crate::linalg::loewner_geq(&scaled, prev, SCHEDULE_TOL)? {
                violation = Some(format!(
                    "(1+eta) A^{{k+1}} V^{{k+1}} >= A^k V^k failed at k={k}"
                ));
            }
        }
        if let Some(reason) = violation {
            diag.schedule_violations += 1;
            if !config.warn_only {
                return Err(OpaveError::ScheduleViolation { k, reason });
            }
        }

        // Error sequences with their summability budget.
        let b_k = config.errors_grad.as_ref().map(|e| e(k));
        let a_k = config.errors_prox.as_ref().map(|e| e(k));
        if b_k.is_some() || a_k.is_some() {
            error_sum += b_k.as_ref().map_or(0.0, Vector::norm)
                + a_k.as_ref().map_or(0.0, Vector::norm);
            if error_sum > config.error_budget + SCHEDULE_TOL {
                let reason = format!(
                    "error budget exceeded at k={k}: partial sum {error_sum:.3e} > {:.3e}",
                    config.error_budget
                );
                diag.schedule_violations += 1;
                if !config.warn_only {
                    return Err(OpaveError::ScheduleViolation { k, reason });
                }
            }
        }

        let forced = match &b_k {
            Some(b) => grad.add(b),
            None => grad,
        };
        let s = x.sub(&v.apply(&forced).scale(gamma));
        // prox of g at s in the (V)^-1 metric with weight gamma: component
        // step gamma * V_ii, i.e. prox_scaled with the metric (gamma V)^-1.
        let p = if v.is_diagonal() {
            let entries = v
                .diag_entries()
                .unwrap()
                .iter()
                .map(|d| 1.0 / (gamma * d))
                .collect::<Vec<_>>();
            prox_scaled(g, &s, &SpdOperator::from_diagonal(&entries)?)?
        } else {
            return Err(OpaveError::UnsupportedMetric(
                "solve_fb requires a diagonal metric V".into(),
            ));
        };
        let p = match &a_k {
            Some(a_err) => p.add(a_err),
            None => p,
        };
        let x_next = x.add(&a.apply(&p.sub(&x)));

        if let Some(x_ref) = &config.x_ref {
            let rec = crate::engine::fejer_monitor(
                k,
                &x,
                &x_next,
                x_ref,
                &av_op,
                av_op.eig_max().min(1.0 - f64::EPSILON),
            )?;
            if let Some(vexceed) = rec.violation {
                // Allow the (1+eta) slack on the Lyapunov quantity.
                let slack = eta_k * x.sub(x_ref).norm().powi(2) / av_op.eig_min();
                if vexceed > crate::engine::FEJER_TOL + slack {
                    diag.fejer_violations += 1;
                }
                diag.max_fejer_violation = diag.max_fejer_violation.max(vexceed);
            }
        }

        x = x_next;
        k += 1;
        if let Some(obs) = &config.observer {
            obs(k, &x);
        }
        if x.norm() > DIVERGENCE_NORM {
            status = Termination::Diverged;
            break;
        }
        prev_av = Some(av_op);
    }

    if status != Termination::Converged {
        let gamma = (config.gamma)(k);
        let fixed = prox(g, &x.sub(&f.gradient(&x).scale(gamma)), gamma)?;
        let obj = f.value(&x) + g.eval(&x);
        records.push(IterRecord {
            k,
            time_s: start.elapsed().as_secs_f64(),
            objective: obj.is_finite().then_some(obj),
            residual: fixed.sub(&x).norm(),
            rmse: None,
        });
        if status == Termination::Diverged {
            return Ok(IterTrace {
                records,
                status,
                final_iterate: x,
                iterations: k,
                diagnostics: diag,
            });
        }
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

/// Componentwise subgradient-optimality residual of the LASSO-type problem
/// min f(x) + mu ||x||_1 (+ box indicator if bounds are given): for each i
/// the distance from -grad_i to the subdifferential of the nonsmooth part.
pub fn subgradient_residual(
    grad: &Vector,
    x: &Vector,
    mu: f64,
    box_bounds: Option<(f64, f64)>,
) -> f64 {
    // Distance of -grad_i to the interval mu sign(x_i) + N_[c,d](x_i); the
    // active-boundary test uses an absolute tolerance.
    let tol = 1e-12;
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let xi = x[i];
        let (mut lo, mut hi) = if xi > tol {
            (mu, mu)
        } else if xi < -tol {
            (-mu, -mu)
        } else {
            (-mu, mu)
        };
        if let Some((c, d)) = box_bounds {
            if xi >= d - tol {
                hi = f64::INFINITY;
            }
            if xi <= c + tol {
                lo = f64::NEG_INFINITY;
            }
        }
        let target = -grad[i];
        let r = if target < lo {
            lo - target
        } else if target > hi {
            target - hi
        } else {
            0.0
        };
        worst = worst.max(r);
    }
    worst
}
