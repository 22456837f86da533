//! Per-iteration records shared by every solver in the crate.

use crate::linalg::Vector;

/// One recorded iteration.
#[derive(Debug, Clone)]
pub struct IterRecord {
    pub k: usize,
    /// Wall-clock seconds spent in solver steps up to this record.
    pub time_s: f64,
    pub objective: Option<f64>,
    /// Fixed-point residual norm.
    pub residual: f64,
    /// RMSE against a reference solution, when one is available.
    pub rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    /// Residual dropped below the tolerance.
    Converged,
    MaxIters,
    Diverged,
    /// Schedule or configuration condition failed mid-run (warn-mode runs
    /// never produce this; they log and continue).
    Aborted(String),
}

/// Counters surfaced after a run.
#[derive(Debug, Clone, Default)]
pub struct RunDiagnostics {
    /// Cross-iteration schedule comparisons that failed (warn mode only).
    pub schedule_violations: usize,
    /// Eigenvalues clipped into the declared band by a strategy.
    pub clip_events: usize,
    /// Strategy fallbacks to the scalar band midpoint.
    pub fallback_events: usize,
    /// Fejer-monitor violations above 1e-10.
    pub fejer_violations: usize,
    pub max_fejer_violation: f64,
    /// Set when a warn-only run proceeded past an invalid step certificate.
    pub certificate_waived: bool,
}

#[derive(Debug, Clone)]
pub struct IterTrace {
    pub records: Vec<IterRecord>,
    pub status: Termination,
    pub final_iterate: Vector,
    pub iterations: usize,
    pub diagnostics: RunDiagnostics,
}

impl IterTrace {
    pub fn converged(&self) -> bool {
        self.status == Termination::Converged
    }

    pub fn final_residual(&self) -> Option<f64> {
        self.records.last().map(|r| r.residual)
    }
}

/// Stopping rule: whichever of the residual tolerance or the iteration
/// budget triggers first.
#[derive(Debug, Clone, Copy)]
pub struct StopRule {
    pub max_iters: usize,
    pub residual_tol: f64,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            max_iters: 100_000,
            residual_tol: 1e-9,
        }
    }
}

impl StopRule {
    pub fn new(max_iters: usize, residual_tol: f64) -> Self {
        Self {
            max_iters,
            residual_tol,
        }
    }
}
