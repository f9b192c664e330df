//! Seeded generators for randomized experiments and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{c64, op_norm, CMat, HermitianForm};

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn complex_gaussian(rng: &mut SeededRng) -> crate::linalg::C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c64(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Haar-distributed unitary via QR of a complex Ginibre matrix with phase correction.
pub fn random_unitary(rng: &mut SeededRng, n: usize) -> CMat {
    let g = CMat::from_fn(n, n, |_, _| complex_gaussian(rng));
    let qr = g.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c64(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Random positive definite form `U·diag(λ)·U*` with λ log-uniform in
/// `[1, cond]`, so the condition number never exceeds `cond`.
pub fn random_pd(rng: &mut SeededRng, n: usize, cond: f64) -> HermitianForm {
    let u = random_unitary(rng, n);
    let lc = cond.ln();
    let d: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * lc).exp()).collect();
    HermitianForm::from_real_diagonal(&d).congruence(&u)
}

/// Random hermitian direction with unit operator norm.
pub fn random_hermitian(rng: &mut SeededRng, n: usize) -> HermitianForm {
    let g = CMat::from_fn(n, n, |_, _| complex_gaussian(rng));
    let h = (&g + g.adjoint()) * c64(0.5, 0.0);
    let s = op_norm(&h).max(1e-300);
    HermitianForm::new(h * c64(1.0 / s, 0.0)).expect("symmetrised matrix is hermitian")
}

/// Uniform in `[lo, hi)`.
pub fn uniform(rng: &mut SeededRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}
