//! Constructors for the averaging-operator sequences the solvers use:
//! scalar relaxation, the semismooth-Newton B-differential strategy
//! ("variable"), and the regularized-Hessian inverse ("fixed").

use std::sync::atomic::Ordering;
use std::sync::Arc;

use crate::engine::{AveragingSchedule, Band, ScheduleDiagnostics};
use crate::error::{OpaveError, Result};
use crate::linalg::{assemble_from_eig, eig_sym, inverse_spd, DenseMatrix, SpdOperator, Vector};
use crate::prox::soft_threshold;

/// The B-differential of the soft-threshold at a point: a binary diagonal
/// selection of the components strictly above the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct BDiffOperator {
    diagonal: Vec<bool>,
}

impl BDiffOperator {
    pub fn entries(&self) -> &[bool] {
        &self.diagonal
    }

    pub fn len(&self) -> usize {
        self.diagonal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diagonal.is_empty()
    }

    pub fn active_count(&self) -> usize {
        self.diagonal.iter().filter(|b| **b).count()
    }

    pub fn as_matrix(&self) -> DenseMatrix {
        DenseMatrix::diag(
            &self
                .diagonal
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect::<Vec<_>>(),
        )
    }
}

/// Entry i is 1 iff |x_i| > tau. The tie |x_i| = tau maps to 0, matching the
/// single-element selection of the B-differential.
pub fn b_diff_soft_threshold(x: &Vector, tau: f64) -> Result<BDiffOperator> {
    if tau < 0.0 || !tau.is_finite() {
        return Err(OpaveError::InvalidParam(format!(
            "b_diff_soft_threshold requires tau >= 0, got {tau}"
        )));
    }
    Ok(BDiffOperator {
        diagonal: x.iter().map(|v| v.abs() > tau).collect(),
    })
}

/// Data of the nonsmooth residual map
/// G(x) = x - soft_threshold(x - 2 tau H^T (H x - y), mu tau)
/// whose zeros are the LASSO solutions.
#[derive(Debug, Clone)]
pub struct ResidualMapSpec {
    pub h: DenseMatrix,
    pub y: Vector,
    pub mu: f64,
    pub tau: f64,
}

impl ResidualMapSpec {
    pub fn new(h: DenseMatrix, y: Vector, mu: f64, tau: f64) -> Result<Self> {
        if h.rows() != y.len() {
            return Err(OpaveError::DimensionMismatch(format!(
                "H is {}x{} but y has length {}",
                h.rows(),
                h.cols(),
                y.len()
            )));
        }
        if mu < 0.0 {
            return Err(OpaveError::InvalidParam(format!("mu must be >= 0, got {mu}")));
        }
        if tau <= 0.0 {
            return Err(OpaveError::InvalidParam(format!("tau must be > 0, got {tau}")));
        }
        Ok(Self { h, y, mu, tau })
    }
}

/// Evaluates G at x.
pub fn residual_map_g(spec: &ResidualMapSpec, x: &Vector) -> Result<Vector> {
    if x.len() != spec.h.cols() {
        return Err(OpaveError::DimensionMismatch(format!(
            "x has length {} but H has {} columns",
            x.len(),
            spec.h.cols()
        )));
    }
    let grad = spec
        .h
        .matvec_t(&spec.h.matvec(x).sub(&spec.y))
        .scale(2.0 * spec.tau);
    let inner = soft_threshold(&x.sub(&grad), spec.mu * spec.tau)?;
    Ok(x.sub(&inner))
}

fn eig_range(evals: &[f64]) -> (f64, f64) {
    let lo = evals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = evals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Clips the eigenvalues of a symmetric matrix into the band and reassembles.
/// Each moved eigenvalue counts as one clip event.
fn clip_into_band(
    m: &DenseMatrix,
    band: Band,
    diag: &Arc<ScheduleDiagnostics>,
) -> Result<SpdOperator> {
    let sym = m.symmetrize();
    let (evals, q) = eig_sym(&sym)?;
    let n = sym.rows();
    let mut clipped = Vec::with_capacity(n);
    let mut clips = 0usize;
    for i in 0..n {
        let v = evals[i];
        let c = v.clamp(band.lo, band.hi);
        if c != v {
            clips += 1;
        }
        clipped.push(c);
    }
    if clips == 0 {
        return SpdOperator::new(sym);
    }
    diag.clip_events.fetch_add(clips, Ordering::Relaxed);
    let (lo, hi) = eig_range(&clipped);
    SpdOperator::with_known_bounds(assemble_from_eig(&q, &clipped).symmetrize(), lo, hi)
}

/// Semismooth-Newton "variable" strategy. At each iterate the generalized
/// Jacobian of the fixed-point residual,
/// `J = I - B (I - 2 tau H^T H)` with `B` the B-differential of the
/// soft-threshold at the forward point, is block upper triangular in the
/// active/inactive splitting induced by `B`:
/// `[[2 tau G_AA, 2 tau G_AI], [0, I]]`. The symmetric positive definite
/// inverse used here is its block-diagonal part, inverted exactly:
/// `(2 tau G_AA)^{-1}` on the active block (eigenvalues clipped into the
/// band) and the identity (clipped into the band) on inactive coordinates.
/// Near-singular active eigenvalues fall back to the scalar band midpoint.
pub fn ssn_variable_averaging(spec: ResidualMapSpec, band: Band) -> AveragingSchedule {
    let gram2tau = spec.h.gram().scale(2.0 * spec.tau);
    let diagnostics = Arc::new(ScheduleDiagnostics::default());
    let diag = Arc::clone(&diagnostics);
    let mid = 0.5 * (band.lo + band.hi);
    // The Jacobian depends on the iterate only through the B-differential
    // pattern, so the operator is reused verbatim while the pattern is stable.
    let cache: std::sync::Mutex<Option<(Vec<bool>, SpdOperator)>> = std::sync::Mutex::new(None);
    AveragingSchedule::with_diagnostics(
        "ssn-variable",
        band,
        0.0,
        |_| 0.0,
        move |_k, x: &Vector| {
            let n = spec.h.cols();
            if x.len() != n {
                return Err(OpaveError::DimensionMismatch(format!(
                    "iterate of length {} vs problem of dimension {n}",
                    x.len()
                )));
            }
            // Forward (gradient-step) point where the B-differential is taken.
            let grad = spec
                .h
                .matvec_t(&spec.h.matvec(x).sub(&spec.y))
                .scale(2.0 * spec.tau);
            let fwd = x.sub(&grad);
            let b = b_diff_soft_threshold(&fwd, spec.mu * spec.tau)?;
            {
                let guard = cache.lock().unwrap();
                if let Some((pattern, op)) = guard.as_ref() {
                    if pattern.as_slice() == b.entries() {
                        return Ok(op.clone());
                    }
                }
            }
            let active: Vec<usize> = (0..n).filter(|&i| b.entries()[i]).collect();
            let mut clips = 0usize;
            let mut fallbacks = 0usize;
            // Inactive coordinates carry a unit eigenvalue before clipping.
            let inactive_val = 1.0f64.clamp(band.lo, band.hi);
            if inactive_val != 1.0 {
                clips += n - active.len();
            }
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            if active.len() < n {
                lo = lo.min(inactive_val);
                hi = hi.max(inactive_val);
            }
            let k = active.len();
            let mut a_mat = DenseMatrix::zeros(n, n);
            for i in 0..n {
                a_mat.set(i, i, inactive_val);
            }
            if k > 0 {
                let sub =
                    DenseMatrix::from_fn(k, k, |i, j| gram2tau.get(active[i], active[j]));
                let (evals, q) = eig_sym(&sub)?;
                let mut inv_clipped = Vec::with_capacity(k);
                for &lam in evals.iter().take(k) {
                    if lam.abs() <= 1e-12 {
                        fallbacks += 1;
                        inv_clipped.push(mid);
                        continue;
                    }
                    let inv = 1.0 / lam;
                    let c = inv.clamp(band.lo, band.hi);
                    if c != inv {
                        clips += 1;
                    }
                    inv_clipped.push(c);
                }
                let block = assemble_from_eig(&q, &inv_clipped).symmetrize();
                for i in 0..k {
                    for j in 0..k {
                        a_mat.set(active[i], active[j], block.get(i, j));
                    }
                }
                let (blo, bhi) = eig_range(&inv_clipped);
                lo = lo.min(blo);
                hi = hi.max(bhi);
            }
            if clips > 0 {
                diag.clip_events.fetch_add(clips, Ordering::Relaxed);
            }
            if fallbacks > 0 {
                diag.fallback_events.fetch_add(fallbacks, Ordering::Relaxed);
            }
            let op = SpdOperator::with_known_bounds(a_mat, lo, hi)?;
            *cache.lock().unwrap() = Some((b.entries().to_vec(), op.clone()));
            Ok(op)
        },
        diagnostics,
    )
}

/// Constant strategy A = [rho (H^T H + eps_reg I)]^{-1}, eigen-clipped into
/// the band. When `rho` is not given it is chosen so that the largest
/// eigenvalue of A equals the band's upper edge.
pub fn fixed_hessian_averaging(
    h: &DenseMatrix,
    epsilon_reg: f64,
    rho: Option<f64>,
    band: Band,
) -> Result<AveragingSchedule> {
    if epsilon_reg <= 0.0 {
        return Err(OpaveError::InvalidParam(format!(
            "epsilon_reg must be > 0, got {epsilon_reg}"
        )));
    }
    let reg = h.gram().add(&DenseMatrix::diag(&vec![epsilon_reg; h.cols()]));
    let reg_op = SpdOperator::new(reg.clone())?;
    let rho = match rho {
        Some(r) if r > 0.0 => r,
        Some(r) => {
            return Err(OpaveError::InvalidParam(format!("rho must be > 0, got {r}")))
        }
        // eig_max(A) = 1 / (rho * eig_min(reg)); pin it to the band's upper edge.
        None => 1.0 / (band.hi * reg_op.eig_min()),
    };
    let diagnostics = Arc::new(ScheduleDiagnostics::default());
    let raw = inverse_spd(&SpdOperator::new(reg.scale(rho))?)?;
    let a = clip_into_band(raw.matrix(), band, &diagnostics)?;
    Ok(AveragingSchedule::with_diagnostics(
        "fixed-hessian",
        band,
        0.0,
        |_| 0.0,
        move |_, x: &Vector| {
            if x.len() != a.dim() {
                return Err(OpaveError::DimensionMismatch(format!(
                    "iterate of length {} vs operator of dimension {}",
                    x.len(),
                    a.dim()
                )));
            }
            Ok(a.clone())
        },
        diagnostics,
    ))
}

/// Constant scalar relaxation A = lambda I.
pub fn scalar_averaging(lambda: f64, band: Band) -> Result<AveragingSchedule> {
    if lambda < band.lo || lambda > band.hi {
        return Err(OpaveError::InvalidParam(format!(
            "lambda {lambda} outside the band [{}, {}]",
            band.lo, band.hi
        )));
    }
    Ok(AveragingSchedule::new(
        "scalar",
        band,
        0.0,
        |_| 0.0,
        move |_, x: &Vector| Ok(SpdOperator::scaled_identity(x.len(), lambda)),
    ))
}
