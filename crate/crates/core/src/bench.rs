//! Benchmark support: generators for the two experiment families, noise
//! injection at a target SNR, ADMM and Condat-Vu baselines, high-accuracy
//! reference solutions, and RMSE bookkeeping.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{OpaveError, Result};
use crate::linalg::{eig_sym, DenseMatrix, SpdOperator, Vector};
use crate::prox::{project_box, soft_threshold};
use crate::trace::{IterRecord, IterTrace, RunDiagnostics, StopRule, Termination};

const DIVERGENCE_NORM: f64 = 1e12;

/// A LASSO-type instance: minimize ||Hx - b||^2 + mu ||x||_1 over an
/// optional box.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub h: DenseMatrix,
    pub b: Vector,
    pub mu: f64,
    /// (c, d); the nonnegativity constraint is the box (0, +inf).
    pub box_bounds: Option<(f64, f64)>,
    pub ground_truth: Option<Vector>,
    pub seed: u64,
    pub label: String,
}

impl ProblemInstance {
    pub fn new(
        h: DenseMatrix,
        b: Vector,
        mu: f64,
        box_bounds: Option<(f64, f64)>,
        ground_truth: Option<Vector>,
        seed: u64,
        label: impl Into<String>,
    ) -> Result<Self> {
        if h.rows() != b.len() {
            return Err(OpaveError::DimensionMismatch(format!(
                "H is {}x{} but b has length {}",
                h.rows(),
                h.cols(),
                b.len()
            )));
        }
        if mu < 0.0 || !mu.is_finite() {
            return Err(OpaveError::InvalidParam(format!("mu must be >= 0, got {mu}")));
        }
        if let Some((c, d)) = box_bounds {
            if c > d {
                return Err(OpaveError::InvalidParam(format!(
                    "box requires c <= d, got [{c}, {d}]"
                )));
            }
        }
        if let Some(x) = &ground_truth {
            if x.len() != h.cols() {
                return Err(OpaveError::DimensionMismatch(format!(
                    "ground truth of length {} but H has {} columns",
                    x.len(),
                    h.cols()
                )));
            }
        }
        Ok(Self {
            h,
            b,
            mu,
            box_bounds,
            ground_truth,
            seed,
            label: label.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.h.cols()
    }

    pub fn objective(&self, x: &Vector) -> f64 {
        let r = self.h.matvec(x).sub(&self.b);
        let mut v = r.dot(&r) + self.mu * x.iter().map(|t| t.abs()).sum::<f64>();
        if let Some((c, d)) = self.box_bounds {
            if x.iter().any(|t| *t < c || *t > d) {
                v = f64::INFINITY;
            }
        }
        v
    }

    /// prox of mu||.||_1 + box indicator with step t: soft threshold, then
    /// clamp. Exact whenever the box contains 0, which all instances here
    /// satisfy.
    pub fn prox_reg(&self, v: &Vector, t: f64) -> Result<Vector> {
        let s = soft_threshold(v, t * self.mu)?;
        match self.box_bounds {
            Some((c, d)) => project_box(&s, c, d),
            None => Ok(s),
        }
    }
}

/// Target SNR in dB; `f64::INFINITY` means no noise.
#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn noiseless(seed: u64) -> Self {
        Self {
            snr_db: f64::INFINITY,
            seed,
        }
    }
}

/// Adds white Gaussian noise scaled so that
/// 10 log10(||signal||^2 / ||noise||^2) equals the target exactly.
pub fn add_gaussian_noise_snr(signal: &Vector, spec: &NoiseSpec) -> Result<Vector> {
    if spec.snr_db.is_infinite() && spec.snr_db > 0.0 {
        return Ok(signal.clone());
    }
    let p_signal = signal.dot(signal);
    if p_signal == 0.0 {
        return Err(OpaveError::InvalidParam(
            "cannot set an SNR for a zero signal".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let w = Vector::from_fn(signal.len(), |_| StandardNormal.sample(&mut rng));
    let p_w = w.dot(&w);
    if p_w == 0.0 {
        return Err(OpaveError::InvalidParam("degenerate noise draw".into()));
    }
    // ||scale * w||^2 = p_signal * 10^(-snr/10)
    let scale = (p_signal * 10f64.powf(-spec.snr_db / 10.0) / p_w).sqrt();
    Ok(signal.add(&w.scale(scale)))
}

/// Realized SNR of an observation against its clean signal.
pub fn realized_snr_db(signal: &Vector, noisy: &Vector) -> f64 {
    let noise = noisy.sub(signal);
    10.0 * (signal.dot(signal) / noise.dot(&noise)).log10()
}

/// Inverse-integration instance: H = (1/n) * lower-triangular ones, sparse
/// spike-train ground truth (5% density, amplitudes up to +-100 so the box
/// [-80, 52] binds for some spikes), mu = 3e-3, observations at the target
/// SNR.
pub fn gen_inverse_integration(n: usize, snr: &NoiseSpec) -> Result<ProblemInstance> {
    if n < 2 {
        return Err(OpaveError::InvalidParam(format!(
            "inverse integration needs n >= 2, got {n}"
        )));
    }
    let h = DenseMatrix::from_fn(n, n, |i, j| if j <= i { 1.0 / n as f64 } else { 0.0 });
    let mut rng = ChaCha8Rng::seed_from_u64(snr.seed);
    let n_spikes = (n / 20).max(1);
    let mut x = vec![0.0; n];
    for _ in 0..n_spikes {
        let i = rng.gen_range(0..n);
        x[i] = 100.0 * rng.gen_range(-1.0..1.0f64);
    }
    let x_true = Vector::from_vec(x);
    let clean = h.matvec(&x_true);
    let b = add_gaussian_noise_snr(
        &clean,
        &NoiseSpec {
            snr_db: snr.snr_db,
            seed: snr.seed.wrapping_add(1),
        },
    )?;
    ProblemInstance::new(
        h,
        b,
        3e-3,
        Some((-80.0, 52.0)),
        Some(x_true),
        snr.seed,
        format!("inverse-integration-n{n}-seed{}", snr.seed),
    )
}

/// Dictionary families for the unmixing experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DictKind {
    /// i.i.d. standard Gaussian entries.
    Gaussian,
    /// Smooth, mutually similar columns: moving-average-filtered Gaussian
    /// noise, normalized. Stands in for a real spectral library, whose
    /// profiles are smooth and correlated.
    SyntheticSmooth,
}

impl fmt::Display for DictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gaussian => write!(f, "gaussian"),
            Self::SyntheticSmooth => write!(f, "synthetic_smooth"),
        }
    }
}

fn gen_dictionary(n_bands: usize, p: usize, kind: DictKind, rng: &mut ChaCha8Rng) -> DenseMatrix {
    match kind {
        DictKind::Gaussian => {
            DenseMatrix::from_fn(n_bands, p, |_, _| StandardNormal.sample(rng))
        }
        DictKind::SyntheticSmooth => {
            // Columns are moving averages of white noise over a window that
            // spans a tenth of the bands, then normalized to unit norm.
            let window = (n_bands / 10).max(2);
            let mut m = DenseMatrix::zeros(n_bands, p);
            for j in 0..p {
                let raw: Vec<f64> = (0..n_bands + window)
                    .map(|_| StandardNormal.sample(rng))
                    .collect();
                let col: Vec<f64> = (0..n_bands)
                    .map(|i| raw[i..i + window].iter().sum::<f64>() / window as f64)
                    .collect();
                let nrm = col.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                for i in 0..n_bands {
                    m.set(i, j, col[i] / nrm);
                }
            }
            m
        }
    }
}

/// One unmixing instance per pixel: abundances are k-sparse symmetric
/// Dirichlet draws over a random support (via normalized unit-scale Gamma,
/// i.e. exponential, draws), observations carry Gaussian noise at the
/// target SNR, and the nonnegativity constraint is flagged through the box.
pub fn gen_unmixing(
    p: usize,
    n_bands: usize,
    m_pixels: usize,
    k_sparse: usize,
    dict_kind: DictKind,
    mu: f64,
    snr: &NoiseSpec,
) -> Result<Vec<ProblemInstance>> {
    if k_sparse == 0 || k_sparse > p {
        return Err(OpaveError::InvalidParam(format!(
            "k_sparse must be in 1..={p}, got {k_sparse}"
        )));
    }
    if p == 0 || n_bands == 0 || m_pixels == 0 {
        return Err(OpaveError::InvalidParam(
            "unmixing dimensions must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(snr.seed);
    let dict = gen_dictionary(n_bands, p, dict_kind, &mut rng);
    let mut out = Vec::with_capacity(m_pixels);
    for j in 0..m_pixels {
        // Random k-sparse support.
        let mut support: Vec<usize> = Vec::with_capacity(k_sparse);
        while support.len() < k_sparse {
            let i = rng.gen_range(0..p);
            if !support.contains(&i) {
                support.push(i);
            }
        }
        // Symmetric Dirichlet via exponential draws normalized to sum 1.
        let draws: Vec<f64> = (0..k_sparse)
            .map(|_| -(1.0 - rng.gen::<f64>()).ln())
            .collect();
        let total: f64 = draws.iter().sum();
        let mut a = vec![0.0; p];
        for (i, d) in support.iter().zip(&draws) {
            a[*i] = d / total;
        }
        let a_true = Vector::from_vec(a);
        let clean = dict.matvec(&a_true);
        let b = add_gaussian_noise_snr(
            &clean,
            &NoiseSpec {
                snr_db: snr.snr_db,
                seed: snr.seed.wrapping_add(1000 + j as u64),
            },
        )?;
        out.push(ProblemInstance::new(
            dict.clone(),
            b,
            mu,
            Some((0.0, f64::INFINITY)),
            Some(a_true),
            snr.seed,
            format!("unmixing-{dict_kind}-p{p}-pixel{j}-seed{}", snr.seed),
        )?);
    }
    Ok(out)
}

/// ||x - reference|| / sqrt(n)
pub fn rmse(x: &Vector, reference: &Vector) -> Result<f64> {
    if x.len() != reference.len() {
        return Err(OpaveError::DimensionMismatch(format!(
            "vectors of length {} and {}",
            x.len(),
            reference.len()
        )));
    }
    Ok(x.sub(reference).norm() / (x.len() as f64).sqrt())
}

/// Condition number of a matrix from the extreme eigenvalues of its Gram
/// matrix.
pub fn condition_number(m: &DenseMatrix) -> Result<f64> {
    let (evals, _) = eig_sym(&m.gram())?;
    let lo = evals[0].max(0.0);
    let hi = evals[evals.len() - 1];
    if lo <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((hi / lo).sqrt())
}

/// Recording options shared by the baselines.
#[derive(Clone, Default)]
pub struct BaselineOptions {
    /// Fill the rmse column against this reference.
    pub rmse_ref: Option<Vector>,
    pub record_stride: usize,
}

fn record_of(
    k: usize,
    start: &Instant,
    instance: &ProblemInstance,
    x: &Vector,
    residual: f64,
    opts: &BaselineOptions,
) -> IterRecord {
    let obj = instance.objective(x);
    IterRecord {
        k,
        time_s: start.elapsed().as_secs_f64(),
        objective: obj.is_finite().then_some(obj),
        residual,
        rmse: opts
            .rmse_ref
            .as_ref()
            .and_then(|r| rmse(x, r).ok()),
    }
}

/// Two-block ADMM on the split data term / regularizer-plus-box term, with
/// the x-subproblem prefactored through an eigendecomposition of H^T H.
pub fn solve_admm(
    instance: &ProblemInstance,
    rho: f64,
    stop: StopRule,
    opts: &BaselineOptions,
) -> Result<IterTrace> {
    if rho <= 0.0 || !rho.is_finite() {
        return Err(OpaveError::InvalidParam(format!("rho must be > 0, got {rho}")));
    }
    let n = instance.dim();
    // (2 H^T H + rho I)^{-1} via the Gram eigendecomposition.
    let gram = instance.h.gram();
    let (evals, q) = eig_sym(&gram)?;
    let inv_diag: Vec<f64> = (0..n).map(|i| 1.0 / (2.0 * evals[i].max(0.0) + rho)).collect();
    let htb2 = instance.h.matvec_t(&instance.b).scale(2.0);
    let solve_x = |rhs: &Vector| -> Vector {
        let y = q.matvec_t(rhs);
        let scaled = Vector::from_fn(n, |i| y[i] * inv_diag[i]);
        q.matvec(&scaled)
    };

    let stride = opts.record_stride.max(1);
    let mut z = Vector::zeros(n);
    let mut u = Vector::zeros(n);
    let mut records = Vec::new();
    let start = Instant::now();
    let mut status = Termination::MaxIters;
    let mut k = 0;
    let mut residual = f64::INFINITY;

    while k < stop.max_iters {
        let x = solve_x(&htb2.add(&z.sub(&u).scale(rho)));
        let z_prev = z.clone();
        z = instance.prox_reg(&x.add(&u), 1.0 / rho)?;
        u = u.add(&x.sub(&z));
        residual = x.sub(&z).norm().max(z.sub(&z_prev).scale(rho).norm());
        k += 1;
        if k % stride == 0 || residual <= stop.residual_tol {
            records.push(record_of(k, &start, instance, &z, residual, opts));
        }
        if residual <= stop.residual_tol {
            status = Termination::Converged;
            break;
        }
        if z.norm() > DIVERGENCE_NORM {
            status = Termination::Diverged;
            break;
        }
    }

    if status != Termination::Converged
        && records.last().map(|r| r.k) != Some(k)
    {
        records.push(record_of(k, &start, instance, &z, residual, opts));
    }
    Ok(IterTrace {
        records,
        status,
        // z is the feasible block.
        final_iterate: z,
        iterations: k,
        diagnostics: RunDiagnostics::default(),
    })
}

/// Condat-Vu primal-dual scheme on
/// ||Hx - b||^2 + mu ||x||_1 + box indicator (dualized through L = I).
pub fn solve_condat(
    instance: &ProblemInstance,
    tau: f64,
    sigma: f64,
    stop: StopRule,
    opts: &BaselineOptions,
) -> Result<IterTrace> {
    if tau <= 0.0 || sigma <= 0.0 {
        return Err(OpaveError::InvalidParam(format!(
            "tau and sigma must be positive, got tau={tau}, sigma={sigma}"
        )));
    }
    let n = instance.dim();
    let lips = 2.0 * SpdOperator::new(instance.h.gram())?.eig_max();
    // Step condition with ||L|| = 1: 1/tau - sigma >= L_f / 2.
    if 1.0 / tau - sigma < lips / 2.0 - 1e-12 {
        return Err(OpaveError::InvalidParam(format!(
            "step condition violated: 1/tau - sigma = {:.6e} < L/2 = {:.6e}",
            1.0 / tau - sigma,
            lips / 2.0
        )));
    }
    let grad = |x: &Vector| {
        instance
            .h
            .matvec_t(&instance.h.matvec(x).sub(&instance.b))
            .scale(2.0)
    };
    // prox of the box indicator's conjugate via Moreau decomposition; no box
    // means a zero dual.
    let prox_h_conj = |v: &Vector, s: f64| -> Result<Vector> {
        match instance.box_bounds {
            Some((c, d)) => {
                let inner = project_box(&v.scale(1.0 / s), c, d)?;
                Ok(v.sub(&inner.scale(s)))
            }
            None => Ok(Vector::zeros(v.len())),
        }
    };

    let stride = opts.record_stride.max(1);
    let mut x = Vector::zeros(n);
    let mut v = Vector::zeros(n);
    let mut records = Vec::new();
    let start = Instant::now();
    let mut status = Termination::MaxIters;
    let mut k = 0;
    let mut residual = f64::INFINITY;

    while k < stop.max_iters {
        let x_next = soft_threshold(&x.sub(&grad(&x).add(&v).scale(tau)), tau * instance.mu)?;
        let v_next = prox_h_conj(&v.add(&x_next.scale(2.0).sub(&x).scale(sigma)), sigma)?;
        residual = x_next.sub(&x).norm().max(v_next.sub(&v).norm());
        x = x_next;
        v = v_next;
        k += 1;
        if k % stride == 0 || residual <= stop.residual_tol {
            records.push(record_of(k, &start, instance, &x, residual, opts));
        }
        if residual <= stop.residual_tol {
            status = Termination::Converged;
            break;
        }
        if x.norm() > DIVERGENCE_NORM {
            status = Termination::Diverged;
            break;
        }
    }

    if status != Termination::Converged
        && records.last().map(|r| r.k) != Some(k)
    {
        records.push(record_of(k, &start, instance, &x, residual, opts));
    }
    Ok(IterTrace {
        records,
        status,
        final_iterate: x,
        iterations: k,
        diagnostics: RunDiagnostics::default(),
    })
}

/// A high-accuracy reference produced by ADMM.
#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub x: Vector,
    /// False when the iteration budget ran out first; consumers should warn.
    pub converged: bool,
    pub iterations: usize,
}

/// ADMM run to joint residual 1e-12 or one million iterations, whichever
/// comes first. The penalty is pinned to the geometric mean of the extreme
/// eigenvalues of 2 H^T H (floored at 1e-10 of the largest), which keeps the
/// iteration count flat across badly conditioned instances; the limit point
/// does not depend on this choice.
pub fn reference_solution(instance: &ProblemInstance) -> Result<ReferenceSolution> {
    let gram2 = SpdOperator::new(instance.h.gram().scale(2.0))?;
    let lmax = gram2.eig_max();
    let rho = if lmax > 0.0 {
        (gram2.eig_min().max(lmax * 1e-10) * lmax).sqrt()
    } else {
        1.0
    };
    let trace = solve_admm(
        instance,
        rho,
        StopRule::new(1_000_000, 1e-12),
        &BaselineOptions {
            rmse_ref: None,
            record_stride: usize::MAX,
        },
    )?;
    Ok(ReferenceSolution {
        converged: trace.converged(),
        iterations: trace.iterations,
        x: trace.final_iterate,
    })
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes an instance in the flat text format: `key=value` header lines,
/// then matrix and vector rows of whitespace-separated decimals with 17
/// significant digits.
pub fn write_instance(instance: &ProblemInstance, path: &Path) -> Result<()> {
    use std::fmt::Write as _;
    let mut s = String::new();
    let _ = writeln!(s, "label={}", instance.label);
    let _ = writeln!(s, "seed={}", instance.seed);
    let _ = writeln!(s, "mu={}", fmt17(instance.mu));
    let _ = writeln!(s, "rows={}", instance.h.rows());
    let _ = writeln!(s, "cols={}", instance.h.cols());
    if let Some((c, d)) = instance.box_bounds {
        let _ = writeln!(s, "box_lo={}", fmt17(c));
        let _ = writeln!(s, "box_hi={}", fmt17(d));
    }
    let _ = writeln!(
        s,
        "has_ground_truth={}",
        instance.ground_truth.is_some()
    );
    let _ = writeln!(s, "H=");
    for i in 0..instance.h.rows() {
        let row: Vec<String> = (0..instance.h.cols())
            .map(|j| fmt17(instance.h.get(i, j)))
            .collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    let _ = writeln!(s, "b=");
    let row: Vec<String> = instance.b.iter().map(|v| fmt17(*v)).collect();
    let _ = writeln!(s, "{}", row.join(" "));
    if let Some(x) = &instance.ground_truth {
        let _ = writeln!(s, "ground_truth=");
        let row: Vec<String> = x.iter().map(|v| fmt17(*v)).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    std::fs::write(path, s).map_err(|e| OpaveError::Config(format!("write {path:?}: {e}")))
}

/// Reads an instance written by [`write_instance`].
pub fn read_instance(path: &Path) -> Result<ProblemInstance> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| OpaveError::Config(format!("read {path:?}: {e}")))?;
    let mut label = String::new();
    let mut seed = 0u64;
    let mut mu = 0.0;
    let mut rows = 0usize;
    let mut cols = 0usize;
    let mut box_lo = None;
    let mut box_hi = None;
    let mut has_gt = false;
    let mut lines = text.lines();
    let parse_row = |line: &str| -> Result<Vec<f64>> {
        line.split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| OpaveError::Config(format!("bad number {t:?}: {e}")))
            })
            .collect()
    };
    let mut h_data: Vec<f64> = Vec::new();
    let mut b: Option<Vector> = None;
    let mut gt: Option<Vector> = None;
    while let Some(line) = lines.next() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| OpaveError::Config(format!("expected key=value, got {line:?}")))?;
        match key {
            "label" => label = value.to_string(),
            "seed" => {
                seed = value
                    .parse()
                    .map_err(|e| OpaveError::Config(format!("bad seed: {e}")))?
            }
            "mu" => mu = parse_row(value)?[0],
            "rows" => {
                rows = value
                    .parse()
                    .map_err(|e| OpaveError::Config(format!("bad rows: {e}")))?
            }
            "cols" => {
                cols = value
                    .parse()
                    .map_err(|e| OpaveError::Config(format!("bad cols: {e}")))?
            }
            "box_lo" => box_lo = Some(parse_row(value)?[0]),
            "box_hi" => box_hi = Some(parse_row(value)?[0]),
            "has_ground_truth" => has_gt = value == "true",
            "H" => {
                for _ in 0..rows {
                    let row = lines
                        .next()
                        .ok_or_else(|| OpaveError::Config("truncated H".into()))?;
                    h_data.extend(parse_row(row)?);
                }
            }
            "b" => {
                let row = lines
                    .next()
                    .ok_or_else(|| OpaveError::Config("truncated b".into()))?;
                b = Some(Vector::new(parse_row(row)?)?);
            }
            "ground_truth" => {
                let row = lines
                    .next()
                    .ok_or_else(|| OpaveError::Config("truncated ground truth".into()))?;
                gt = Some(Vector::new(parse_row(row)?)?);
            }
            other => {
                return Err(OpaveError::Config(format!("unknown key {other:?}")));
            }
        }
    }
    let h = DenseMatrix::new(rows, cols, h_data)?;
    let b = b.ok_or_else(|| OpaveError::Config("missing b".into()))?;
    let box_bounds = match (box_lo, box_hi) {
        (Some(c), Some(d)) => Some((c, d)),
        (None, None) => None,
        _ => return Err(OpaveError::Config("box_lo/box_hi must appear together".into())),
    };
    if has_gt != gt.is_some() {
        return Err(OpaveError::Config("ground truth flag mismatch".into()));
    }
    ProblemInstance::new(h, b, mu, box_bounds, gt, seed, label)
}
