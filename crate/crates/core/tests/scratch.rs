//! Temporary exploration harness; not part of the test suite.

use std::sync::{Arc, Mutex};
use std::time::Instant;

use opave::averaging::{scalar_averaging, ssn_variable_averaging, ResidualMapSpec};
use opave::bench::{
    gen_inverse_integration, rmse, solve_admm, solve_condat, BaselineOptions, NoiseSpec,
    ProblemInstance,
};
use opave::engine::Band;
use opave::linalg::{DenseMatrix, SpdOperator, Vector};
use opave::pd::{solve_pd, CompositeProblem, CompositeTerm, PdConfig, PdState};
use opave::prox::{ProximableFunction, SmoothFunction, StronglyConvexTerm};
use opave::trace::{IterTrace, StopRule};

const TARGET: f64 = 1e-6;

fn first_hit(trace: &IterTrace) -> Option<usize> {
    trace
        .records
        .iter()
        .find(|r| r.rmse.map(|v| v <= TARGET).unwrap_or(false))
        .map(|r| r.k)
}

fn first_hit_seq(rmses: &[f64]) -> Option<usize> {
    rmses.iter().position(|&v| v <= TARGET)
}

fn pd_run(
    instance: &ProblemInstance,
    x_ref: &Vector,
    tau: f64,
    sigma: f64,
    averaging: &str,
    tau_ssn: f64,
    band_eps: f64,
    max_iters: usize,
) {
    pd_run_opt(
        instance, x_ref, tau, sigma, averaging, tau_ssn, band_eps, max_iters, false,
    )
}

#[allow(clippy::too_many_arguments)]
fn pd_run_opt(
    instance: &ProblemInstance,
    x_ref: &Vector,
    tau: f64,
    sigma: f64,
    averaging: &str,
    tau_ssn: f64,
    band_eps: f64,
    max_iters: usize,
    l1box: bool,
) {
    let n = instance.h.cols();
    let f = SmoothFunction::least_squares(instance.h.clone(), instance.b.clone()).unwrap();
    let (c, d) = instance.box_bounds.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let g = if l1box {
        ProximableFunction::l1_box(instance.mu, c, d).unwrap()
    } else {
        ProximableFunction::l1(instance.mu).unwrap()
    };
    let term_h = if l1box {
        // Inert dual term: the conjugate of the zero function pins the dual
        // at the origin, so the primal step is a pure averaged prox-gradient.
        ProximableFunction::Zero
    } else {
        ProximableFunction::box_indicator(c, d).unwrap()
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
    )
    .unwrap();
    let band = Band::upper_one(band_eps).unwrap();
    let sched = match averaging {
        "scalar" => scalar_averaging(1.0, band).unwrap(),
        "ssn" => {
            let spec =
                ResidualMapSpec::new(instance.h.clone(), instance.b.clone(), instance.mu, tau_ssn)
                    .unwrap();
            ssn_variable_averaging(spec, band)
        }
        _ => unreachable!(),
    };
    let rmses: Arc<Mutex<Vec<f64>>> = Arc::new(Mutex::new(Vec::new()));
    let sink = rmses.clone();
    let xr = x_ref.clone();
    let cfg = PdConfig {
        primal_metric: SpdOperator::scaled_identity(n, tau),
        primal_averaging: sched,
        dual_metrics: vec![SpdOperator::scaled_identity(n, sigma)],
        dual_averaging: vec![scalar_averaging(1.0, band).unwrap()],
        eps: 1e-6,
        warn_only: true,
        record_stride: usize::MAX,
        observer: Some(Arc::new(move |_, x: &Vector, _: &[Vector]| {
            sink.lock().unwrap().push(rmse(x, &xr).unwrap());
        })),
    };
    let t0 = Instant::now();
    let out = solve_pd(
        &problem,
        &cfg,
        &PdState::zeros(&problem),
        StopRule::new(max_iters, 1e-12),
    );
    let dt = t0.elapsed().as_secs_f64();
    match out {
        Ok(o) => {
            let rm = rmses.lock().unwrap();
            let hit = first_hit_seq(&rm);
            let final_rmse = rm.last().copied().unwrap_or(f64::NAN);
            let profile: Vec<String> = [25usize, 50, 100, 200, 400, 800, 1600]
                .iter()
                .filter(|&&k| k < rm.len())
                .map(|&k| format!("{k}:{:.1e}", rm[k]))
                .collect();
            println!(
                "pd{} {averaging} tau={tau:.3} sigma={sigma:.5} tau_ssn={tau_ssn:.3} band_eps={band_eps}: \
                 hit={hit:?} iters={} final_rmse={final_rmse:.3e} {dt:.2}s viol={} clips={} falls={} [{}]",
                if l1box { "-l1box" } else { "" },
                o.trace.iterations,
                o.trace.diagnostics.schedule_violations,
                o.trace.diagnostics.clip_events,
                o.trace.diagnostics.fallback_events,
                profile.join(" "),
            );
        }
        Err(e) => println!(
            "pd {averaging} tau={tau:.3} sigma={sigma:.5} tau_ssn={tau_ssn:.3}: ERR {e} ({dt:.2}s)"
        ),
    }
}

fn load_or_make_ref(instance: &ProblemInstance) -> Vector {
    let path = std::path::Path::new("/tmp/ref200.txt");
    if let Ok(text) = std::fs::read_to_string(path) {
        let vals: Vec<f64> = text
            .split_whitespace()
            .map(|t| t.parse().unwrap())
            .collect();
        if vals.len() == instance.h.cols() {
            return Vector::from_slice(&vals);
        }
    }
    let t0 = Instant::now();
    let tr = solve_admm(
        instance,
        3e-3,
        StopRule::new(400_000, 1e-12),
        &BaselineOptions {
            rmse_ref: None,
            record_stride: usize::MAX,
        },
    )
    .unwrap();
    println!(
        "reference admm rho=3e-3: status={:?} iters={} in {:.1}s",
        tr.status,
        tr.iterations,
        t0.elapsed().as_secs_f64()
    );
    let text: Vec<String> = tr
        .final_iterate
        .as_slice()
        .iter()
        .map(|v| format!("{v:.17e}"))
        .collect();
    std::fs::write(path, text.join(" ")).unwrap();
    tr.final_iterate
}

#[allow(clippy::too_many_arguments)]
fn pd_dual_fit_run(
    instance: &ProblemInstance,
    x_ref: &Vector,
    tau: f64,
    split: f64,
    averaging: &str,
    tau_ssn: f64,
    band_eps: f64,
    max_iters: usize,
) {
    let n = instance.h.cols();
    let m = instance.h.rows();
    let norm_h2 = SpdOperator::new(instance.h.gram()).unwrap().eig_max();
    // Certificate budget: tau (0.5 sigma1 |H|^2 + 0.5 sigma2) = 0.9.
    let sigma1 = 0.9 * split / (0.5 * tau * norm_h2);
    let sigma2 = 0.9 * (1.0 - split) / (0.5 * tau);
    let f = SmoothFunction::new(|_| 0.0, |x: &Vector| Vector::zeros(x.len()), 1e12).unwrap();
    let g = ProximableFunction::l1(instance.mu).unwrap();
    let (c, d) = instance.box_bounds.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let problem = CompositeProblem::new(
        g,
        f,
        Vector::zeros(n),
        vec![
            CompositeTerm {
                h: ProximableFunction::squared_norm(2.0).unwrap(),
                l: StronglyConvexTerm::exact(),
                linear: instance.h.clone(),
                shift: instance.b.clone(),
                omega: 0.5,
            },
            CompositeTerm {
                h: ProximableFunction::box_indicator(c, d).unwrap(),
                l: StronglyConvexTerm::exact(),
                linear: DenseMatrix::identity(n),
                shift: Vector::zeros(n),
                omega: 0.5,
            },
        ],
    )
    .unwrap();
    let band = Band::upper_one(band_eps).unwrap();
    let sched = match averaging {
        "scalar" => scalar_averaging(1.0, band).unwrap(),
        "ssn" => {
            let spec =
                ResidualMapSpec::new(instance.h.clone(), instance.b.clone(), instance.mu, tau_ssn)
                    .unwrap();
            ssn_variable_averaging(spec, band)
        }
        _ => unreachable!(),
    };
    let rmses: Arc<Mutex<Vec<f64>>> = Arc::new(Mutex::new(Vec::new()));
    let sink = rmses.clone();
    let xr = x_ref.clone();
    let cfg = PdConfig {
        primal_metric: SpdOperator::scaled_identity(n, tau),
        primal_averaging: sched,
        dual_metrics: vec![
            SpdOperator::scaled_identity(m, sigma1),
            SpdOperator::scaled_identity(n, sigma2),
        ],
        dual_averaging: vec![
            scalar_averaging(1.0, band).unwrap(),
            scalar_averaging(1.0, band).unwrap(),
        ],
        eps: 1e-6,
        warn_only: true,
        record_stride: usize::MAX,
        observer: Some(Arc::new(move |_, x: &Vector, _: &[Vector]| {
            sink.lock().unwrap().push(rmse(x, &xr).unwrap());
        })),
    };
    let t0 = Instant::now();
    let out = solve_pd(
        &problem,
        &cfg,
        &PdState::zeros(&problem),
        StopRule::new(max_iters, 1e-12),
    );
    let dt = t0.elapsed().as_secs_f64();
    match out {
        Ok(o) => {
            let rm = rmses.lock().unwrap();
            let hit = first_hit_seq(&rm);
            let best = rm.iter().cloned().fold(f64::INFINITY, f64::min);
            println!(
                "pd2 {averaging} tau={tau} s1={sigma1:.4} s2={sigma2:.4} tau_ssn={tau_ssn}: \
                 hit={hit:?} iters={} best_rmse={best:.3e} final_rmse={:.3e} {dt:.2}s viol={} clips={} falls={}",
                o.trace.iterations,
                rm.last().copied().unwrap_or(f64::NAN),
                o.trace.diagnostics.schedule_violations,
                o.trace.diagnostics.clip_events,
                o.trace.diagnostics.fallback_events,
            );
        }
        Err(e) => println!("pd2 {averaging} tau={tau} tau_ssn={tau_ssn}: ERR {e} ({dt:.2}s)"),
    }
}

#[allow(clippy::too_many_arguments)]
fn pd_full_dual_run(
    instance: &ProblemInstance,
    x_ref: &Vector,
    tau: f64,
    splits: (f64, f64, f64),
    averaging: &str,
    tau_ssn: f64,
    eps_reg: f64,
    band_eps: f64,
    max_iters: usize,
) {
    use opave::averaging::fixed_hessian_averaging;
    let n = instance.h.cols();
    let m = instance.h.rows();
    let norm_h2 = SpdOperator::new(instance.h.gram()).unwrap().eig_max();
    let (a1, a2, a3) = splits;
    // Certificate budget: tau/3 (sigma1 |H|^2 + sigma2 + sigma3) = 0.9.
    let sigma1 = 2.7 * a1 / (tau * norm_h2);
    let sigma2 = 2.7 * a2 / tau;
    let sigma3 = 2.7 * a3 / tau;
    let f = SmoothFunction::new(|_| 0.0, |x: &Vector| Vector::zeros(x.len()), 1e12).unwrap();
    let (c, d) = instance.box_bounds.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let problem = CompositeProblem::new(
        ProximableFunction::Zero,
        f,
        Vector::zeros(n),
        vec![
            CompositeTerm {
                h: ProximableFunction::squared_norm(3.0).unwrap(),
                l: StronglyConvexTerm::exact(),
                linear: instance.h.clone(),
                shift: instance.b.clone(),
                omega: 1.0 / 3.0,
            },
            CompositeTerm {
                h: ProximableFunction::l1(3.0 * instance.mu).unwrap(),
                l: StronglyConvexTerm::exact(),
                linear: DenseMatrix::identity(n),
                shift: Vector::zeros(n),
                omega: 1.0 / 3.0,
            },
            CompositeTerm {
                h: ProximableFunction::box_indicator(c, d).unwrap(),
                l: StronglyConvexTerm::exact(),
                linear: DenseMatrix::identity(n),
                shift: Vector::zeros(n),
                omega: 1.0 - 2.0 / 3.0,
            },
        ],
    )
    .unwrap();
    let band = Band::upper_one(band_eps).unwrap();
    let sched = match averaging {
        "scalar" => scalar_averaging(1.0, band).unwrap(),
        "ssn" => {
            let spec =
                ResidualMapSpec::new(instance.h.clone(), instance.b.clone(), instance.mu, tau_ssn)
                    .unwrap();
            ssn_variable_averaging(spec, band)
        }
        "fixed" => fixed_hessian_averaging(&instance.h, eps_reg, None, band).unwrap(),
        _ => unreachable!(),
    };
    let rmses: Arc<Mutex<Vec<f64>>> = Arc::new(Mutex::new(Vec::new()));
    let sink = rmses.clone();
    let xr = x_ref.clone();
    let cfg = PdConfig {
        primal_metric: SpdOperator::scaled_identity(n, tau),
        primal_averaging: sched,
        dual_metrics: vec![
            SpdOperator::scaled_identity(m, sigma1),
            SpdOperator::scaled_identity(n, sigma2),
            SpdOperator::scaled_identity(n, sigma3),
        ],
        dual_averaging: vec![
            scalar_averaging(1.0, band).unwrap(),
            scalar_averaging(1.0, band).unwrap(),
            scalar_averaging(1.0, band).unwrap(),
        ],
        eps: 1e-6,
        warn_only: true,
        record_stride: usize::MAX,
        observer: Some(Arc::new(move |_, x: &Vector, _: &[Vector]| {
            sink.lock().unwrap().push(rmse(x, &xr).unwrap());
        })),
    };
    let t0 = Instant::now();
    let out = solve_pd(
        &problem,
        &cfg,
        &PdState::zeros(&problem),
        StopRule::new(max_iters, 1e-12),
    );
    let dt = t0.elapsed().as_secs_f64();
    match out {
        Ok(o) => {
            let rm = rmses.lock().unwrap();
            let hit = first_hit_seq(&rm);
            let best = rm.iter().cloned().fold(f64::INFINITY, f64::min);
            println!(
                "pd3 {averaging} tau={tau} s=({sigma1:.4},{sigma2:.4},{sigma3:.4}) tau_ssn={tau_ssn} er={eps_reg}: \
                 hit={hit:?} iters={} best={best:.3e} final={:.3e} {dt:.2}s viol={} clips={} falls={}",
                o.trace.iterations,
                rm.last().copied().unwrap_or(f64::NAN),
                o.trace.diagnostics.schedule_violations,
                o.trace.diagnostics.clip_events,
                o.trace.diagnostics.fallback_events,
            );
        }
        Err(e) => println!("pd3 {averaging} tau={tau} tau_ssn={tau_ssn}: ERR {e} ({dt:.2}s)"),
    }
}

#[test]
#[ignore]
fn explore_c9b() {
    let instance = gen_inverse_integration(
        200,
        &NoiseSpec {
            snr_db: 30.0,
            seed: 0,
        },
    )
    .unwrap();
    let x_ref = load_or_make_ref(&instance);
    let even = (1.0 / 3.0, 1.0 / 3.0, 1.0 - 2.0 / 3.0);
    for tau in [100.0, 300.0, 1000.0, 3000.0] {
        pd_full_dual_run(&instance, &x_ref, tau, even, "scalar", 0.0, 0.0, 1e-4, 4_000);
    }
    for tau in [300.0, 1000.0, 3000.0] {
        for er in [1e-4, 1e-3, 1e-2] {
            pd_full_dual_run(&instance, &x_ref, tau, even, "fixed", 0.0, er, 1e-4, 4_000);
        }
    }
    for tau in [300.0, 1000.0] {
        for tau_ssn in [1.0, 10.0, 100.0] {
            pd_full_dual_run(&instance, &x_ref, tau, even, "ssn", tau_ssn, 0.0, 1e-4, 1_000);
        }
    }
}

#[test]
#[ignore]
fn explore_c9c() {
    let instance = gen_inverse_integration(
        200,
        &NoiseSpec {
            snr_db: 30.0,
            seed: 0,
        },
    )
    .unwrap();
    let x_ref = load_or_make_ref(&instance);
    // Block-structured ssn inverse: Newton on the active block, identity on
    // the inactive one.
    for tau in [300.0, 1000.0, 3000.0, 10000.0, 30000.0] {
        pd_run(&instance, &x_ref, tau, 0.9 / tau, "ssn", tau, 1e-6, 600);
    }
}

#[test]
#[ignore]
fn explore_c9d() {
    let instance = gen_inverse_integration(
        200,
        &NoiseSpec {
            snr_db: 30.0,
            seed: 0,
        },
    )
    .unwrap();
    let x_ref = load_or_make_ref(&instance);
    // Box in the primal prox, inert dual: pure averaged prox-gradient with
    // the block-Newton operator; tau_ssn > tau damps the Newton modes.
    for tau in [1000.0, 3000.0, 10000.0] {
        for damp in [1.0, 1.5] {
            pd_run_opt(
                &instance,
                &x_ref,
                tau,
                0.9 / tau,
                "ssn",
                tau * damp,
                1e-6,
                400,
                true,
            );
        }
    }
}

#[test]
#[ignore]
fn explore_freeblock() {
    use opave::linalg::eig_sym;
    let instance = gen_inverse_integration(
        200,
        &NoiseSpec {
            snr_db: 30.0,
            seed: 0,
        },
    )
    .unwrap();
    let x_ref = load_or_make_ref(&instance);
    let (c, d) = instance.box_bounds.unwrap();
    let mut free: Vec<usize> = Vec::new();
    let (mut zeros, mut at_lo, mut at_hi) = (0, 0, 0);
    for (i, &v) in x_ref.as_slice().iter().enumerate() {
        if v.abs() < 1e-9 {
            zeros += 1;
        } else if (v - c).abs() < 1e-7 {
            at_lo += 1;
        } else if (v - d).abs() < 1e-7 {
            at_hi += 1;
        } else {
            free.push(i);
        }
    }
    println!(
        "n=200: zeros={zeros} at_lo={at_lo} at_hi={at_hi} free={}",
        free.len()
    );
    let g = instance.h.gram();
    let k = free.len();
    if k > 0 {
        let sub = DenseMatrix::from_fn(k, k, |i, j| g.get(free[i], free[j]));
        let (ev, _) = eig_sym(&sub).unwrap();
        println!(
            "free-block HtH eigs: min={:.3e} max={:.3e} kappa={:.3e}",
            ev[0],
            ev[k - 1],
            ev[k - 1] / ev[0]
        );
    }
}

#[test]
#[ignore]
fn explore_micro() {
    use opave::linalg::eig_sym;
    let n = 200;
    let mut seed = 1u64;
    let mut rng = move || {
        seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let a = DenseMatrix::from_fn(n, n, |_, _| rng());
    let sym = a.symmetrize();
    let t0 = Instant::now();
    let (_e, _q) = eig_sym(&sym).unwrap();
    println!("eig_sym {n}x{n}: {:.1} ms", t0.elapsed().as_secs_f64() * 1e3);
    let t0 = Instant::now();
    let _p = a.matmul(&a);
    println!("matmul {n}x{n}: {:.1} ms", t0.elapsed().as_secs_f64() * 1e3);
}

#[test]
#[ignore]
fn explore_criterion9() {
    let t0 = Instant::now();
    let instance = gen_inverse_integration(
        200,
        &NoiseSpec {
            snr_db: 30.0,
            seed: 0,
        },
    )
    .unwrap();
    let gram = SpdOperator::new(instance.h.gram()).unwrap();
    let (lmin, lmax) = (gram.eig_min(), gram.eig_max());
    println!(
        "lmax={lmax:.4} lmin={lmin:.3e} kappa={:.3e}  gen {:.2}s",
        lmax / lmin,
        t0.elapsed().as_secs_f64()
    );

    let x_ref = load_or_make_ref(&instance);
    let opts = BaselineOptions {
        rmse_ref: Some(x_ref.clone()),
        record_stride: 10,
    };

    for rho in [3e-5, 1e-4, 3e-4, 1e-3, 3e-3, 0.01] {
        let t0 = Instant::now();
        let tr = solve_admm(&instance, rho, StopRule::new(60_000, 1e-11), &opts).unwrap();
        println!(
            "admm rho={rho}: hit={:?} iters={} last_rmse={:.2e} {:.2}s",
            first_hit(&tr),
            tr.iterations,
            tr.records.last().and_then(|r| r.rmse).unwrap_or(f64::NAN),
            t0.elapsed().as_secs_f64()
        );
    }

    // Dual data-fit formulation: huge primal steps become certificate-valid.
    for tau in [30.0, 100.0, 300.0, 1000.0] {
        pd_dual_fit_run(&instance, &x_ref, tau, 0.5, "scalar", 0.0, 1e-4, 3_000);
    }
    for tau in [100.0, 300.0, 1000.0] {
        pd_dual_fit_run(&instance, &x_ref, tau, 0.5, "ssn", tau, 1e-4, 500);
    }
}
