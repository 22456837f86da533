//! Solvers built on operator-averaged fixed-point iterations: relaxation by
//! a symmetric positive-definite operator instead of a scalar.
//!
//! Layout:
//! - [`linalg`]: dense vectors/matrices, Jacobi eigensolver, SPD operators
//! - [`prox`]: proximable and smooth building blocks
//! - [`engine`]: the averaged fixed-point iteration and its online audits
//! - [`averaging`]: strategies that emit the per-iteration operators
//! - [`fb`]: variable-metric forward-backward splitting
//! - [`pd`]: primal-dual splitting and the plug-and-play variant
//! - [`bench`]: problem generators, baselines, and benchmark plumbing

pub mod averaging;
pub mod bench;
pub mod engine;
pub mod error;
pub mod fb;
pub mod linalg;
pub mod pd;
pub mod prox;
pub mod trace;

pub use error::{OpaveError, Result};

#[cfg(test)]
pub(crate) mod testutil {
    use crate::linalg::{assemble_from_eig, eig_sym, DenseMatrix, SpdOperator};
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        DenseMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)).symmetrize()
    }

    pub(crate) fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> SpdOperator {
        let gram = DenseMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)).gram();
        SpdOperator::new(gram.add(&DenseMatrix::diag(&vec![0.1; n]))).unwrap()
    }

    /// Random SPD operator with eigenvalues drawn uniformly from [lo, hi].
    pub(crate) fn random_spd_banded(
        n: usize,
        lo: f64,
        hi: f64,
        rng: &mut ChaCha8Rng,
    ) -> SpdOperator {
        let (_, q) = eig_sym(&random_symmetric(n, rng)).unwrap();
        let d: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
        SpdOperator::new(assemble_from_eig(&q, &d).symmetrize()).unwrap()
    }
}
