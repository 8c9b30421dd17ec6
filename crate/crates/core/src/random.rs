//! Seeded random operators for reproducible decompositions and tests.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::numerics::{c, dagger, hermitize, polar_unitary, trace, Operator};

pub type Rng = ChaCha8Rng;

/// Default seed for the random central elements used by `decompose`.
pub const DEFAULT_SEED: u64 = 0xADAB;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Matrix with i.i.d. standard complex Gaussian entries.
pub fn random_matrix(rng: &mut Rng, d: usize) -> Operator {
    Array2::from_shape_fn((d, d), |_| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        c(re, im)
    })
}

pub fn random_hermitian(rng: &mut Rng, d: usize) -> Operator {
    hermitize(&random_matrix(rng, d))
}

/// Haar-like unitary from the polar factor of a Gaussian matrix.
pub fn random_unitary(rng: &mut Rng, d: usize) -> Operator {
    polar_unitary(&random_matrix(rng, d)).expect("SVD of a Gaussian matrix")
}

/// Full-rank density matrix G G† / Tr(G G†).
pub fn random_density(rng: &mut Rng, d: usize) -> Operator {
    let g = random_matrix(rng, d);
    let rho = g.dot(&dagger(&g));
    let tr = trace(&rho).re;
    hermitize(&rho.mapv(|z| z / tr))
}

/// Real standard-normal coefficients, used for random elements of an algebra.
pub fn normal_coefficients(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}
