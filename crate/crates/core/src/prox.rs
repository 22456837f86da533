//! Closed-form proximal operators, conjugate proximal maps via Moreau's
//! decomposition, Moreau envelopes, and proximal maps under diagonal metrics.

use std::fmt;
use std::sync::Arc;

use crate::error::{OpaveError, Result};
use crate::linalg::{SpdOperator, Vector};

/// The proximable terms supported by the solvers. All four are separable,
/// which is what keeps every prox in this crate exact.
#[derive(Debug, Clone, PartialEq)]
pub enum ProximableFunction {
    /// mu * ||x||_1
    L1 { weight: f64 },
    /// Indicator of the box [lo, hi]^n.
    BoxIndicator { lo: f64, hi: f64 },
    /// The zero function.
    Zero,
    /// Indicator of the nonnegative orthant.
    NonnegIndicator,
    /// mu * ||x||_1 plus the indicator of [lo, hi]^n with lo <= 0 <= hi; the
    /// prox is soft threshold followed by clamp, exact because 0 is feasible.
    L1Box { weight: f64, lo: f64, hi: f64 },
    /// w * ||x||_2^2
    SquaredNorm { weight: f64 },
}

impl ProximableFunction {
    pub fn l1(weight: f64) -> Result<Self> {
        if weight < 0.0 || !weight.is_finite() {
            return Err(OpaveError::InvalidParam(format!(
                "l1 weight must be nonnegative, got {weight}"
            )));
        }
        Ok(Self::L1 { weight })
    }

    pub fn box_indicator(lo: f64, hi: f64) -> Result<Self> {
        if lo > hi {
            return Err(OpaveError::InvalidParam(format!(
                "box requires lo <= hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self::BoxIndicator { lo, hi })
    }

    pub fn l1_box(weight: f64, lo: f64, hi: f64) -> Result<Self> {
        if weight < 0.0 || !weight.is_finite() {
            return Err(OpaveError::InvalidParam(format!(
                "l1 weight must be nonnegative, got {weight}"
            )));
        }
        if !(lo <= 0.0 && 0.0 <= hi) {
            return Err(OpaveError::InvalidParam(format!(
                "l1_box requires lo <= 0 <= hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self::L1Box { weight, lo, hi })
    }

    pub fn squared_norm(weight: f64) -> Result<Self> {
        if weight <= 0.0 || !weight.is_finite() {
            return Err(OpaveError::InvalidParam(format!(
                "squared-norm weight must be positive, got {weight}"
            )));
        }
        Ok(Self::SquaredNorm { weight })
    }

    /// Raw function value; +inf outside the domain of an indicator.
    pub fn eval(&self, x: &Vector) -> f64 {
        match self {
            Self::L1 { weight } => weight * x.iter().map(|v| v.abs()).sum::<f64>(),
            Self::BoxIndicator { lo, hi } => {
                if x.iter().all(|v| *v >= *lo && *v <= *hi) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Self::Zero => 0.0,
            Self::NonnegIndicator => {
                if x.iter().all(|v| *v >= 0.0) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Self::L1Box { weight, lo, hi } => {
                if x.iter().all(|v| *v >= *lo && *v <= *hi) {
                    weight * x.iter().map(|v| v.abs()).sum::<f64>()
                } else {
                    f64::INFINITY
                }
            }
            Self::SquaredNorm { weight } => weight * x.dot(x),
        }
    }
}

impl fmt::Display for ProximableFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::L1 { weight } => write!(f, "l1(mu={weight})"),
            Self::BoxIndicator { lo, hi } => write!(f, "box[{lo}, {hi}]"),
            Self::Zero => write!(f, "zero"),
            Self::NonnegIndicator => write!(f, "nonneg"),
            Self::L1Box { weight, lo, hi } => write!(f, "l1(mu={weight})+box[{lo}, {hi}]"),
            Self::SquaredNorm { weight } => write!(f, "sqnorm(w={weight})"),
        }
    }
}

/// Component-wise soft threshold: max(|x_i| - tau, 0) * sgn(x_i).
pub fn soft_threshold(x: &Vector, tau: f64) -> Result<Vector> {
    if tau < 0.0 || !tau.is_finite() {
        return Err(OpaveError::InvalidParam(format!(
            "soft threshold requires tau >= 0, got {tau}"
        )));
    }
    Ok(Vector::from_vec(
        x.iter()
            .map(|&v| (v.abs() - tau).max(0.0) * v.signum())
            .collect(),
    ))
}

/// Component-wise clamp to [c, d].
pub fn project_box(x: &Vector, c: f64, d: f64) -> Result<Vector> {
    if c > d {
        return Err(OpaveError::InvalidParam(format!(
            "project_box requires c <= d, got [{c}, {d}]"
        )));
    }
    Ok(Vector::from_vec(x.iter().map(|v| v.clamp(c, d)).collect()))
}

/// prox_{tau g}(x) = argmin_u g(u) + (1/2 tau) ||x - u||^2
pub fn prox(g: &ProximableFunction, x: &Vector, tau: f64) -> Result<Vector> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(OpaveError::InvalidParam(format!(
            "prox requires tau > 0, got {tau}"
        )));
    }
    match g {
        ProximableFunction::L1 { weight } => soft_threshold(x, tau * weight),
        // Indicator proximal maps are projections and do not depend on tau.
        ProximableFunction::BoxIndicator { lo, hi } => project_box(x, *lo, *hi),
        ProximableFunction::Zero => Ok(x.clone()),
        ProximableFunction::NonnegIndicator => project_box(x, 0.0, f64::INFINITY),
        ProximableFunction::L1Box { weight, lo, hi } => {
            project_box(&soft_threshold(x, tau * weight)?, *lo, *hi)
        }
        ProximableFunction::SquaredNorm { weight } => Ok(x.scale(1.0 / (1.0 + 2.0 * tau * weight))),
    }
}

/// Scalar prox for a single component with its own step. Used by the
/// diagonal-metric path.
fn prox_component(g: &ProximableFunction, v: f64, tau: f64) -> f64 {
    match g {
        ProximableFunction::L1 { weight } => {
            let t = tau * weight;
            (v.abs() - t).max(0.0) * v.signum()
        }
        ProximableFunction::BoxIndicator { lo, hi } => v.clamp(*lo, *hi),
        ProximableFunction::Zero => v,
        ProximableFunction::NonnegIndicator => v.max(0.0),
        ProximableFunction::L1Box { weight, lo, hi } => {
            let t = tau * weight;
            ((v.abs() - t).max(0.0) * v.signum()).clamp(*lo, *hi)
        }
        ProximableFunction::SquaredNorm { weight } => v / (1.0 + 2.0 * tau * weight),
    }
}

/// Proximal map of `g` relative to the norm induced by a diagonal metric `U`:
/// argmin_u g(u) + (1/2) ||x - u||^2_U, solved component-wise with per-component
/// step 1/U_ii. Non-diagonal metrics are rejected: a general-metric prox would
/// need an inner solver, which this crate deliberately does not ship.
pub fn prox_scaled(g: &ProximableFunction, x: &Vector, metric: &SpdOperator) -> Result<Vector> {
    let diag = metric.diag_entries().ok_or_else(|| {
        OpaveError::UnsupportedMetric(
            "prox_scaled supports only diagonal metrics".into(),
        )
    })?;
    if x.len() != metric.dim() {
        return Err(OpaveError::DimensionMismatch(format!(
            "vector of length {} vs metric of dimension {}",
            x.len(),
            metric.dim()
        )));
    }
    if diag.iter().any(|&d| d <= 0.0) {
        return Err(OpaveError::Singular {
            eig_min: metric.eig_min(),
        });
    }
    Ok(Vector::from_vec(
        x.iter()
            .zip(&diag)
            .map(|(&v, &d)| prox_component(g, v, 1.0 / d))
            .collect(),
    ))
}

/// prox of the conjugate via Moreau's decomposition:
/// prox_{tau g*}(x) = x - tau * prox_{g / tau}(x / tau).
pub fn prox_conjugate(g: &ProximableFunction, x: &Vector, tau: f64) -> Result<Vector> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(OpaveError::InvalidParam(format!(
            "prox_conjugate requires tau > 0, got {tau}"
        )));
    }
    // prox_{g/tau}(y) is prox of g with step 1/tau.
    let inner = prox(g, &x.scale(1.0 / tau), 1.0 / tau)?;
    Ok(x.sub(&inner.scale(tau)))
}

/// Proximal map of the conjugate g* relative to the norm induced by the
/// inverse of a diagonal metric `V`: argmin_u g*(u) + (1/2) ||x - u||^2_{V^-1},
/// i.e. component-wise Moreau decomposition with per-component step V_ii.
pub fn prox_conjugate_scaled(
    g: &ProximableFunction,
    x: &Vector,
    metric: &SpdOperator,
) -> Result<Vector> {
    let diag = metric.diag_entries().ok_or_else(|| {
        OpaveError::UnsupportedMetric(
            "prox_conjugate_scaled supports only diagonal metrics".into(),
        )
    })?;
    if x.len() != metric.dim() {
        return Err(OpaveError::DimensionMismatch(format!(
            "vector of length {} vs metric of dimension {}",
            x.len(),
            metric.dim()
        )));
    }
    if diag.iter().any(|&d| d <= 0.0) {
        return Err(OpaveError::Singular {
            eig_min: metric.eig_min(),
        });
    }
    Ok(Vector::from_vec(
        x.iter()
            .zip(&diag)
            .map(|(&v, &tau)| v - tau * prox_component(g, v / tau, 1.0 / tau))
            .collect(),
    ))
}

/// Moreau envelope of `g` at `x` with parameter `tau`.
pub fn moreau_envelope(g: &ProximableFunction, x: &Vector, tau: f64) -> Result<f64> {
    let p = prox(g, x, tau)?;
    let d = x.sub(&p);
    Ok(g.eval(&p) + d.dot(&d) / (2.0 * tau))
}

type VecFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
type ScalarFn = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;

/// A smooth convex term: value, gradient, and a cocoercivity constant beta
/// (the gradient is (1/beta)-Lipschitz). Beta is user-supplied truth; an
/// empirical audit over sampled pairs is available but never enforced.
#[derive(Clone)]
pub struct SmoothFunction {
    gradient: VecFn,
    value: ScalarFn,
    cocoercivity_beta: f64,
}

impl SmoothFunction {
    pub fn new(
        value: impl Fn(&Vector) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
        cocoercivity_beta: f64,
    ) -> Result<Self> {
        if cocoercivity_beta <= 0.0 || !cocoercivity_beta.is_finite() {
            return Err(OpaveError::InvalidParam(format!(
                "cocoercivity beta must be positive, got {cocoercivity_beta}"
            )));
        }
        Ok(Self {
            gradient: Arc::new(gradient),
            value: Arc::new(value),
            cocoercivity_beta,
        })
    }

    /// f(x) = ||Hx - b||^2 with gradient 2 H^T (Hx - b).
    /// beta = 1 / (2 * eig_max(H^T H)).
    pub fn least_squares(h: crate::linalg::DenseMatrix, b: Vector) -> Result<Self> {
        if h.rows() != b.len() {
            return Err(OpaveError::DimensionMismatch(format!(
                "H is {}x{} but b has length {}",
                h.rows(),
                h.cols(),
                b.len()
            )));
        }
        let gram = h.gram();
        let lmax = SpdOperator::new(gram)?.eig_max();
        let beta = 1.0 / (2.0 * lmax);
        let h2 = h.clone();
        let b2 = b.clone();
        Self::new(
            move |x| {
                let r = h.matvec(x).sub(&b);
                r.dot(&r)
            },
            move |x| {
                let r = h2.matvec(x).sub(&b2);
                h2.matvec_t(&r).scale(2.0)
            },
            beta,
        )
    }

    pub fn value(&self, x: &Vector) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        (self.gradient)(x)
    }

    pub fn cocoercivity_beta(&self) -> f64 {
        self.cocoercivity_beta
    }

    /// Empirical Lipschitz audit on sampled pairs: returns the largest
    /// observed ratio ||grad(x)-grad(y)|| / ||x-y||, which should not exceed
    /// (1/beta)(1 + 1e-6) if the declared beta is honest.
    pub fn audit_lipschitz(&self, pairs: &[(Vector, Vector)]) -> f64 {
        pairs
            .iter()
            .filter(|(x, y)| x.sub(y).norm() > 0.0)
            .map(|(x, y)| {
                self.gradient(x).sub(&self.gradient(y)).norm() / x.sub(y).norm()
            })
            .fold(0.0, f64::max)
    }
}

impl fmt::Debug for SmoothFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothFunction")
            .field("cocoercivity_beta", &self.cocoercivity_beta)
            .finish()
    }
}

/// A nu-strongly convex smoothing term, represented through the gradient of
/// its conjugate (which is (1/nu)-Lipschitz). The degenerate term that is 0
/// at the origin and +inf elsewhere has conjugate gradient identically zero
/// and nu treated as +inf.
#[derive(Clone)]
pub struct StronglyConvexTerm {
    strong_convexity_nu: f64,
    conjugate_gradient: VecFn,
}

impl StronglyConvexTerm {
    pub fn new(
        strong_convexity_nu: f64,
        conjugate_gradient: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
    ) -> Result<Self> {
        if strong_convexity_nu <= 0.0 {
            return Err(OpaveError::InvalidParam(format!(
                "strong convexity nu must be positive, got {strong_convexity_nu}"
            )));
        }
        Ok(Self {
            strong_convexity_nu,
            conjugate_gradient: Arc::new(conjugate_gradient),
        })
    }

    /// The degenerate term recovering the exact (non-smoothed) composite:
    /// grad l* = 0 and nu = +inf.
    pub fn exact() -> Self {
        Self {
            strong_convexity_nu: f64::INFINITY,
            conjugate_gradient: Arc::new(|v: &Vector| Vector::zeros(v.len())),
        }
    }

    pub fn nu(&self) -> f64 {
        self.strong_convexity_nu
    }

    pub fn conjugate_gradient(&self, u: &Vector) -> Vector {
        (self.conjugate_gradient)(u)
    }
}

impl fmt::Debug for StronglyConvexTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StronglyConvexTerm")
            .field("nu", &self.strong_convexity_nu)
            .finish()
    }
}
