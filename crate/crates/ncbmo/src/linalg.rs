//! Dense complex linear algebra kernels: Hermitian eigendecomposition,
//! functions of positive matrices, Schatten norms, spectral projections.
//!
//! All operations are pure functions on immutable values.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{NcError, Result};

/// Dense square complex matrix, the universal carrier for algebra elements.
pub type Matrix = DMatrix<Complex64>;

pub const HERM_TOL: f64 = 1e-10;
/// Eigenvalues below RANK_TOL * lambda_max are treated as zero.
pub const RANK_TOL: f64 = 1e-12;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn cr(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(n: usize) -> Matrix {
    Matrix::identity(n, n)
}

pub fn zeros(n: usize) -> Matrix {
    Matrix::zeros(n, n)
}

/// Matrix unit e_{ij} in dimension n.
pub fn matrix_unit(n: usize, i: usize, j: usize) -> Matrix {
    let mut m = zeros(n);
    m[(i, j)] = cr(1.0);
    m
}

pub fn from_rows(n: usize, entries: &[Complex64]) -> Matrix {
    assert_eq!(entries.len(), n * n, "row-major entry count");
    Matrix::from_fn(n, n, |i, j| entries[i * n + j])
}

pub fn diag(entries: &[f64]) -> Matrix {
    Matrix::from_diagonal(&DVector::from_iterator(
        entries.len(),
        entries.iter().map(|&x| cr(x)),
    ))
}

/// Frobenius inner product <a, b> = Tr(a* b) = sum conj(a_ij) b_ij.
pub fn fdot(a: &Matrix, b: &Matrix) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn frob(a: &Matrix) -> f64 {
    a.norm()
}

pub fn hermitize(a: &Matrix) -> Matrix {
    (a + a.adjoint()).scale(0.5)
}

pub fn herm_residual(a: &Matrix) -> f64 {
    (a - a.adjoint()).norm() / f64::max(1.0, a.norm())
}

/// Sum of absolute values of off-diagonal entries, relative to scale.
pub fn offdiag_mass(a: &Matrix) -> f64 {
    let n = a.nrows();
    let mut m = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                m = m.max(a[(i, j)].norm());
            }
        }
    }
    m
}

pub fn is_diagonal(a: &Matrix, tol: f64) -> bool {
    offdiag_mass(a) <= tol * f64::max(1.0, a.norm())
}

/// Eigendecomposition of a Hermitian matrix with ascending eigenvalues.
///
/// Ties are broken by the original output index of the backend solver, so
/// identical input yields identical output.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Columns are the corresponding eigenvectors; unitary.
    pub eigenvectors: Matrix,
}

impl HermitianEig {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// U f(Lambda) U*.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.dim();
        let d = Matrix::from_diagonal(&DVector::from_iterator(
            n,
            self.eigenvalues.iter().map(|&l| cr(f(l))),
        ));
        &self.eigenvectors * d * self.eigenvectors.adjoint()
    }

    /// U g(Lambda) U* for complex-valued g (used for D^{it}).
    pub fn apply_complex(&self, f: impl Fn(f64) -> Complex64) -> Matrix {
        let n = self.dim();
        let d = Matrix::from_diagonal(&DVector::from_iterator(
            n,
            self.eigenvalues.iter().map(|&l| f(l)),
        ));
        &self.eigenvectors * d * self.eigenvectors.adjoint()
    }

    pub fn reassemble(&self) -> Matrix {
        self.apply(|l| l)
    }
}

pub fn herm_eig(h: &Matrix) -> Result<HermitianEig> {
    let residual = herm_residual(h);
    if residual > HERM_TOL {
        return Err(NcError::NonHermitian { residual });
    }
    let n = h.nrows();
    let sym = hermitize(h).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        sym.eigenvalues[a]
            .partial_cmp(&sym.eigenvalues[b])
            .unwrap()
            .then(a.cmp(&b))
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&i| sym.eigenvalues[i]).collect();
    let mut eigenvectors = zeros(n);
    for (col, &i) in order.iter().enumerate() {
        eigenvectors.set_column(col, &sym.eigenvectors.column(i));
    }
    Ok(HermitianEig {
        eigenvalues,
        eigenvectors,
    })
}

/// A^s for PSD A via spectral calculus. A^0 is the support projection.
pub fn mat_power(a: &Matrix, s: f64) -> Result<Matrix> {
    let eig = herm_eig(a)?;
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let cut = RANK_TOL * f64::max(lmax, 1e-300);
    if s < 0.0 {
        let min_eig = eig.eigenvalues.first().cloned().unwrap_or(0.0);
        if min_eig <= cut {
            return Err(NcError::SingularPower { min_eig });
        }
    }
    Ok(eig.apply(|l| {
        if l <= cut {
            if s == 0.0 {
                0.0
            } else if s > 0.0 {
                0.0
            } else {
                unreachable!("guarded above")
            }
        } else if s == 0.0 {
            1.0
        } else {
            l.powf(s)
        }
    }))
}

fn check_exponent(module: &'static str, p: f64, min: f64) -> Result<()> {
    if p.is_infinite() && p > 0.0 {
        return Ok(());
    }
    if !p.is_finite() || p < min {
        return Err(NcError::BadExponent { module, p, min });
    }
    Ok(())
}

/// Singular values, descending.
pub fn singular_values(a: &Matrix) -> Vec<f64> {
    let mut sv: Vec<f64> = match a.clone().try_svd(false, false, f64::EPSILON, 0) {
        Some(svd) => svd.singular_values.iter().cloned().collect(),
        None => {
            // bidiagonal SVD failed to converge; A*A eigenvalues are a
            // slightly less accurate but robust fallback
            let gram = a.adjoint() * a;
            let eig = herm_eig(&gram).expect("A*A is Hermitian by construction");
            eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect()
        }
    };
    sv.sort_by(|x, y| y.partial_cmp(x).unwrap());
    sv
}

/// Schatten p-norm (tr |A|^p)^{1/p} with the unnormalized trace; p = inf
/// gives the operator norm.
pub fn schatten_norm(a: &Matrix, p: f64) -> Result<f64> {
    check_exponent("linalg", p, 1.0)?;
    let sv = singular_values(a);
    let smax = sv.first().cloned().unwrap_or(0.0);
    if p.is_infinite() || smax == 0.0 {
        return Ok(smax);
    }
    // scale by the largest singular value to dodge overflow for large p
    let sum: f64 = sv.iter().map(|&s| (s / smax).powf(p)).sum();
    Ok(smax * sum.powf(1.0 / p))
}

/// Operator norm (largest singular value); infallible companion.
pub fn op_norm(a: &Matrix) -> f64 {
    singular_values(a).first().cloned().unwrap_or(0.0)
}

/// |A| = (A*A)^{1/2}.
pub fn op_abs(a: &Matrix) -> Matrix {
    mat_power(&(a.adjoint() * a), 0.5).expect("A*A is PSD")
}

/// Orthogonal projection: P = P* = P^2.
#[derive(Debug, Clone)]
pub struct Projection {
    pub matrix: Matrix,
}

impl Projection {
    pub fn rank(&self) -> usize {
        self.matrix.trace().re.round() as usize
    }
}

/// Sum of eigenprojections of H with eigenvalue in [lo, hi]. Empty
/// selections give the zero projection.
pub fn spectral_projection(h: &Matrix, lo: f64, hi: f64) -> Result<Projection> {
    let eig = herm_eig(h)?;
    let n = eig.dim();
    let mut p = zeros(n);
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l >= lo && l <= hi {
            let v = eig.eigenvectors.column(i);
            // p += v v*
            for r in 0..n {
                for s in 0..n {
                    p[(r, s)] += v[r] * v[s].conj();
                }
            }
        }
    }
    Ok(Projection {
        matrix: hermitize(&p),
    })
}

/// Projection onto the top eigenvalue cluster of a Hermitian matrix
/// (eigenvalues within rel_tol of the maximum).
pub fn top_eigenprojection(h: &Matrix, rel_tol: f64) -> Result<Projection> {
    let eig = herm_eig(h)?;
    let lmax = eig.eigenvalues.last().cloned().unwrap_or(0.0);
    let scale = eig
        .eigenvalues
        .iter()
        .fold(0.0f64, |a, &b| a.max(b.abs()))
        .max(1e-300);
    spectral_projection(h, lmax - rel_tol * scale, f64::INFINITY)
}

pub fn exp_hermitian(h: &Matrix) -> Result<Matrix> {
    Ok(herm_eig(h)?.apply(f64::exp))
}

/// Kronecker product in (left factor major) layout.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}
