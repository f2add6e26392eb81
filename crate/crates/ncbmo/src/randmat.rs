//! Seeded Gaussian matrix ensembles shared by generators and tests.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{c, hermitize, identity, Matrix};

pub fn gaussian(rng: &mut impl Rng, n: usize) -> Matrix {
    Matrix::from_fn(n, n, |_, _| {
        c(StandardNormal.sample(rng), StandardNormal.sample(rng))
    })
}

pub fn gaussian_hermitian(rng: &mut impl Rng, n: usize) -> Matrix {
    hermitize(&gaussian(rng, n))
}

/// Strictly positive with eigenvalues bounded away from zero.
pub fn random_positive(rng: &mut impl Rng, n: usize, floor: f64) -> Matrix {
    let g = gaussian(rng, n);
    &g * g.adjoint() + identity(n).scale(floor)
}

/// Random full-rank density (positive, unit trace).
pub fn random_density(rng: &mut impl Rng, n: usize) -> Matrix {
    let p = random_positive(rng, n, 0.2 * n as f64);
    let t = p.trace().re;
    p.scale(1.0 / t)
}
