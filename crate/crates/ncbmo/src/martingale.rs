//! Martingales over a filtration: adapted sequences, differences, square
//! functions, and the canonical constructors (classical dyadic models, the
//! row/column counterexample element, seeded random ensembles).

use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::algebra::{
    subalgebra_from_orthonormal_basis, Filtration, State, Subalgebra, TopLevel,
};
use crate::error::{NcError, Result};
use crate::linalg::{cr, hermitize, op_norm, singular_values, zeros, Matrix};
use crate::randmat;

/// A decomposed martingale: the limit element together with its adapted
/// sequence x_n = E_n(x) and differences d_n = x_n - x_{n-1} (E_{-1} = 0).
#[derive(Debug, Clone)]
pub struct Martingale {
    filt: Arc<Filtration>,
    x: Matrix,
    adapted: Vec<Matrix>,
    diffs: Vec<Matrix>,
}

impl Martingale {
    pub fn filtration(&self) -> &Arc<Filtration> {
        &self.filt
    }

    pub fn state(&self) -> &State {
        self.filt.state()
    }

    /// The limit element x = x_M.
    pub fn limit(&self) -> &Matrix {
        &self.x
    }

    /// Index of the last level.
    pub fn top(&self) -> usize {
        self.filt.top()
    }

    pub fn adapted(&self, n: usize) -> &Matrix {
        &self.adapted[n]
    }

    pub fn diff(&self, k: usize) -> &Matrix {
        &self.diffs[k]
    }

    pub fn diffs(&self) -> &[Matrix] {
        &self.diffs
    }

    /// x_m - x_{n-1} = sum of differences d_n..d_m.
    pub fn window(&self, n: usize, m: usize) -> Matrix {
        let prev = if n == 0 {
            zeros(self.filt.dim())
        } else {
            self.adapted[n - 1].clone()
        };
        &self.adapted[m] - prev
    }

    pub fn adjoint(&self) -> Martingale {
        Martingale {
            filt: self.filt.clone(),
            x: self.x.adjoint(),
            adapted: self.adapted.iter().map(|m| m.adjoint()).collect(),
            diffs: self.diffs.iter().map(|m| m.adjoint()).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Martingale {
        Martingale {
            filt: self.filt.clone(),
            x: self.x.scale(s),
            adapted: self.adapted.iter().map(|m| m.scale(s)).collect(),
            diffs: self.diffs.iter().map(|m| m.scale(s)).collect(),
        }
    }
}

/// Decompose an element of the ambient algebra into its martingale.
pub fn decompose(x: &Matrix, filt: &Arc<Filtration>) -> Result<Martingale> {
    let n = filt.dim();
    if x.nrows() != n || x.ncols() != n {
        return Err(NcError::DimensionMismatch {
            expected: n,
            got: x.nrows(),
        });
    }
    let residual = filt.ambient().membership_residual(x) / f64::max(1.0, x.norm());
    if residual > 1e-8 {
        return Err(NcError::NotInAlgebra { residual });
    }
    let mut adapted = Vec::with_capacity(filt.top() + 1);
    for k in 0..=filt.top() {
        adapted.push(filt.cond_exp(k).apply(x));
    }
    let mut diffs = Vec::with_capacity(adapted.len());
    for k in 0..adapted.len() {
        if k == 0 {
            diffs.push(adapted[0].clone());
        } else {
            diffs.push(&adapted[k] - &adapted[k - 1]);
        }
    }
    Ok(Martingale {
        filt: filt.clone(),
        x: x.clone(),
        adapted,
        diffs,
    })
}

/// Column and row square functions plus the conditioned terms
/// s_{c,n,m} = E_n((x_m - x_{n-1})*(x_m - x_{n-1})), n <= m.
pub struct SquareFunctions {
    pub s_col: Matrix,
    pub s_row: Matrix,
    /// cond[m][n] for n <= m.
    pub cond: Vec<Vec<Matrix>>,
}

pub fn square_functions(mart: &Martingale) -> SquareFunctions {
    let dim = mart.filtration().dim();
    let mut s_col = zeros(dim);
    let mut s_row = zeros(dim);
    for d in mart.diffs() {
        s_col += d.adjoint() * d;
        s_row += d * d.adjoint();
    }
    let mut cond = Vec::new();
    for m in 0..=mart.top() {
        let mut row = Vec::with_capacity(m + 1);
        for n in 0..=m {
            let y = mart.window(n, m);
            let t = mart.filtration().cond_exp(n).apply(&(y.adjoint() * &y));
            row.push(hermitize(&t));
        }
        cond.push(row);
    }
    SquareFunctions {
        s_col: hermitize(&s_col),
        s_row: hermitize(&s_row),
        cond,
    }
}

/// Classical dyadic filtration on [0,1] at the given depth, tensored with a
/// full matrix fiber: level j consists of scale-2^{-j} step functions with
/// values in M_k. The base measure is uniform.
pub fn dyadic_classical_filtration(
    depth: usize,
    fiber: usize,
    fiber_state: &State,
) -> Result<Arc<Filtration>> {
    let atoms = 1usize << depth;
    let dim = atoms * fiber;
    if dim > 64 {
        return Err(NcError::TooLarge(format!(
            "dyadic model dimension {dim} exceeds 64"
        )));
    }
    if fiber_state.dim() != fiber {
        return Err(NcError::DimensionMismatch {
            expected: fiber,
            got: fiber_state.dim(),
        });
    }
    let mut levels: Vec<Subalgebra> = Vec::with_capacity(depth + 1);
    for j in 0..=depth {
        let cells = 1usize << j;
        let width = atoms >> j;
        let scale = 1.0 / (width as f64).sqrt();
        let mut basis = Vec::with_capacity(cells * fiber * fiber);
        for c in 0..cells {
            for a in 0..fiber {
                for b in 0..fiber {
                    let mut u = zeros(dim);
                    for t in 0..width {
                        let atom = c * width + t;
                        u[(atom * fiber + a, atom * fiber + b)] = cr(scale);
                    }
                    basis.push(u);
                }
            }
        }
        levels.push(subalgebra_from_orthonormal_basis(dim, basis));
    }
    let base = State::uniform(atoms);
    let state = base.tensor(fiber_state);
    Ok(Arc::new(Filtration::validate_with(
        state,
        levels,
        TopLevel::AnySubalgebra,
    )?))
}

/// Abelian filtration from a refining chain of atom partitions. Each level
/// is given by its contiguous cell sizes; the last level must be the
/// partition into singletons (the ambient algebra is then the full
/// diagonal algebra). Weights are the atom masses of the state.
pub fn classical_partition_filtration(
    weights: &[f64],
    partitions: &[Vec<usize>],
) -> Result<Arc<Filtration>> {
    let n = weights.len();
    let state = State::diagonal(weights)?;
    let mut levels = Vec::with_capacity(partitions.len());
    for cells in partitions {
        let total: usize = cells.iter().sum();
        if total != n {
            return Err(NcError::BadSpec(format!(
                "partition covers {total} atoms, expected {n}"
            )));
        }
        let blocks: Vec<(usize, usize)> = cells.iter().map(|&c| (1, c)).collect();
        levels.push(crate::algebra::block_subalgebra(&blocks)?);
    }
    match levels.last() {
        Some(top) if top.dim() == n => {}
        _ => {
            return Err(NcError::BadSpec(
                "last partition must split into singletons".into(),
            ))
        }
    }
    Ok(Arc::new(Filtration::validate_with(
        state,
        levels,
        TopLevel::AnySubalgebra,
    )?))
}

/// Reading of the sign coefficients in the counterexample element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignConvention {
    /// epsilon_k is the k-th Rademacher function (coordinate sign); the
    /// element is then a genuine martingale with differences r_k (x) e_1k.
    RademacherFunction,
    /// epsilon_k is a constant sign; kept for comparison only (the element
    /// degenerates to a single difference at level zero).
    ConstantSign,
}

/// The element x = sum_k r_k (x) e_1k over the dyadic filtration tensored
/// with M_n, built exactly (full 2^n-atom model). Requires 2^n * n <= 64.
pub fn rademacher_matrix_martingale(n: usize) -> Result<(Arc<Filtration>, Martingale)> {
    let atoms = 1usize << n;
    if atoms * n > 64 {
        return Err(NcError::TooLarge(format!(
            "exact counterexample dimension {} exceeds 64; use the compressed model",
            atoms * n
        )));
    }
    let filt = dyadic_classical_filtration(n, n, &State::uniform(n))?;
    let x = rademacher_element(n, SignConvention::RademacherFunction);
    let mart = decompose(&x, &filt)?;
    Ok((filt, mart))
}

fn rademacher_element(n: usize, convention: SignConvention) -> Matrix {
    let atoms = 1usize << n;
    let dim = atoms * n;
    let mut x = zeros(dim);
    for a in 0..atoms {
        for k in 1..=n {
            let sign = match convention {
                SignConvention::RademacherFunction => {
                    if (a >> (n - k)) & 1 == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                }
                SignConvention::ConstantSign => 1.0,
            };
            // block row 0, column k-1 of the fiber at this atom
            x[(a * n, a * n + (k - 1))] = cr(sign);
        }
    }
    x
}

/// Size-compressed evaluator for the counterexample norms. All the norms of
/// the element depend only on the joint distribution of the signs, so each
/// conditioned term can be evaluated on one representative atom per level
/// with the sub-atom weights enumerated explicitly. Valid for 2^n * n <= 4096.
#[derive(Debug, Clone)]
pub struct CompressedRademacher {
    n: usize,
    convention: SignConvention,
}

pub fn compressed_rademacher(n: usize, convention: SignConvention) -> Result<CompressedRademacher> {
    if (1usize << n) * n > 4096 {
        return Err(NcError::TooLarge(format!(
            "counterexample with n = {n} exceeds the compressed-size cap"
        )));
    }
    if n == 0 {
        return Err(NcError::BadSpec("counterexample requires n >= 1".into()));
    }
    Ok(CompressedRademacher { n, convention })
}

impl CompressedRademacher {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Weighted L_p norm of the element; the ambient density is the
    /// normalized trace, so the split parameter is immaterial.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if !(p.is_infinite() && p > 0.0) && !(p.is_finite() && p >= 1.0) {
            return Err(NcError::BadExponent {
                module: "martingale",
                p,
                min: 1.0,
            });
        }
        // every atom carries the same singular values
        let mut block = zeros(self.n);
        for k in 0..self.n {
            block[(0, k)] = cr(1.0);
        }
        let sv = singular_values(&block);
        if p.is_infinite() {
            return Ok(sv.first().cloned().unwrap_or(0.0));
        }
        let sum: f64 = sv.iter().map(|s| s.powf(p)).sum();
        Ok((sum / self.n as f64).powf(1.0 / p))
    }

    fn window_block(&self, j: usize, m: usize, pattern: usize) -> Matrix {
        // x_m - x_{j-1} on a representative level-j atom; signs fixed to +1
        // up to level j, enumerated by `pattern` above it.
        let mut y = zeros(self.n);
        for k in 1..=self.n {
            if k < j || k > m {
                continue;
            }
            let sign = match self.convention {
                SignConvention::RademacherFunction => {
                    if k <= j {
                        1.0
                    } else {
                        let bit = (pattern >> (k - j - 1)) & 1;
                        if bit == 0 {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                }
                SignConvention::ConstantSign => 1.0,
            };
            y[(0, k - 1)] = cr(sign);
        }
        y
    }

    fn conditioned_term(&self, j: usize, m: usize, row: bool) -> Matrix {
        match self.convention {
            SignConvention::RademacherFunction => {
                let vary = m.saturating_sub(j);
                let count = 1usize << vary;
                let mut acc = zeros(self.n);
                for pattern in 0..count {
                    let y = self.window_block(j, m, pattern);
                    acc += if row {
                        &y * y.adjoint()
                    } else {
                        y.adjoint() * &y
                    };
                }
                acc.scale(1.0 / count as f64)
            }
            SignConvention::ConstantSign => {
                // constant signs make the element level-zero measurable
                if j > 0 {
                    zeros(self.n)
                } else {
                    let y = self.window_block(0, self.n, 0);
                    if row {
                        &y * y.adjoint()
                    } else {
                        y.adjoint() * &y
                    }
                }
            }
        }
    }

    pub fn bmo_c(&self) -> f64 {
        self.bmo_side(false)
    }

    pub fn bmo_r(&self) -> f64 {
        self.bmo_side(true)
    }

    fn bmo_side(&self, row: bool) -> f64 {
        let mut best = 0.0f64;
        for m in 0..=self.n {
            for j in 0..=m {
                let t = self.conditioned_term(j, m, row);
                best = best.max(op_norm(&hermitize(&t)));
            }
        }
        best.sqrt()
    }
}

/// How a random martingale is rescaled after generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalize {
    None,
    Bmo,
    Lp { p: f64, eta: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct RandomOptions {
    pub hermitian: bool,
    pub normalize: Normalize,
}

impl Default for RandomOptions {
    fn default() -> Self {
        RandomOptions {
            hermitian: false,
            normalize: Normalize::None,
        }
    }
}

/// Seeded Gaussian martingale: independent complex normal entries,
/// projected into the ambient algebra, optionally Hermitian-symmetrized,
/// then rescaled so the chosen norm is one. Deterministic per seed.
pub fn random_martingale(
    filt: &Arc<Filtration>,
    seed: u64,
    opts: RandomOptions,
) -> Result<Martingale> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = randmat::gaussian(&mut rng, filt.dim());
    if !filt.ambient().is_full() {
        x = filt.ambient().project(&x);
    }
    if opts.hermitian {
        x = hermitize(&x);
    }
    let mart = decompose(&x, filt)?;
    let norm = match opts.normalize {
        Normalize::None => return Ok(mart),
        Normalize::Bmo => crate::norms::bmo(&mart),
        Normalize::Lp { p, eta } => crate::algebra::lp_norm(filt.state(), &x, p, eta)?,
    };
    if norm < 1e-13 {
        return Ok(mart);
    }
    Ok(mart.scale(1.0 / norm))
}

/// Complex coordinates shared by generators and tests.
pub(crate) fn coords_of(level: &Subalgebra, x: &Matrix) -> Vec<Complex64> {
    level.coordinates(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{
        block_subalgebra, lp_norm, validate_filtration,
    };
    use crate::linalg::{identity, matrix_unit};

    fn quantum_filtration() -> Arc<Filtration> {
        let d1 = State::diagonal(&[0.25, 0.75]).unwrap();
        let d2 = State::diagonal(&[0.4, 0.6]).unwrap();
        let state = d1.tensor(&d2);
        let levels = vec![
            block_subalgebra(&[(1, 4)]).unwrap(),
            block_subalgebra(&[(2, 2)]).unwrap(),
            block_subalgebra(&[(4, 1)]).unwrap(),
        ];
        Arc::new(validate_filtration(state, levels).unwrap())
    }

    #[test]
    fn decompose_telescopes() {
        let filt = quantum_filtration();
        let mart = random_martingale(&filt, 7, RandomOptions::default()).unwrap();
        let mut sum = zeros(4);
        for d in mart.diffs() {
            sum += d;
        }
        assert!((sum - mart.limit()).norm() <= 1e-10 * mart.limit().norm());
        // E_n(x_m) = x_{min(n,m)}
        for n in 0..=2usize {
            for m in 0..=2usize {
                let lhs = filt.cond_exp(n).apply(mart.adapted(m));
                let rhs = mart.adapted(n.min(m));
                assert!((lhs - rhs).norm() <= 1e-9 * (1.0 + mart.limit().norm()));
            }
        }
        // E_n(d_k) = 0 for n < k
        for n in 0..2usize {
            for k in (n + 1)..=2usize {
                let e = filt.cond_exp(n).apply(mart.diff(k));
                assert!(e.norm() <= 1e-9 * (1.0 + mart.limit().norm()));
            }
        }
    }

    #[test]
    fn decompose_level_zero_element() {
        let filt = quantum_filtration();
        let x = identity(4).scale(2.0);
        let mart = decompose(&x, &filt).unwrap();
        assert!((mart.diff(0) - &x).norm() < 1e-10);
        assert!(mart.diff(1).norm() < 1e-10);
        assert!(mart.diff(2).norm() < 1e-10);
    }

    #[test]
    fn decompose_rejects_wrong_dim() {
        let filt = quantum_filtration();
        assert!(matches!(
            decompose(&identity(3), &filt),
            Err(NcError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gns_orthogonality_of_differences() {
        let filt = quantum_filtration();
        let mart = random_martingale(&filt, 11, RandomOptions::default()).unwrap();
        let state = filt.state();
        for j in 0..=2usize {
            for k in 0..=2usize {
                if j != k {
                    let v = state.phi(&(mart.diff(j).adjoint() * mart.diff(k)));
                    assert!(v.norm() <= 1e-9 * (1.0 + mart.limit().norm_squared()));
                }
            }
        }
    }

    #[test]
    fn conditioned_terms_expansion_identity() {
        let filt = quantum_filtration();
        let mart = random_martingale(&filt, 13, RandomOptions::default()).unwrap();
        let sq = square_functions(&mart);
        for m in 0..=2usize {
            for n in 0..=m {
                let mut acc = zeros(4);
                for k in n..=m {
                    acc += filt
                        .cond_exp(n)
                        .apply(&(mart.diff(k).adjoint() * mart.diff(k)));
                }
                assert!(
                    (&sq.cond[m][n] - hermitize(&acc)).norm()
                        <= 1e-9 * (1.0 + mart.limit().norm_squared()),
                    "pair ({n},{m})"
                );
            }
        }
    }

    #[test]
    fn dyadic_depth1_scalar() {
        let filt = dyadic_classical_filtration(1, 1, &State::uniform(1)).unwrap();
        assert_eq!(filt.dim(), 2);
        // E_0 = average with weights (1/2, 1/2)
        let x = crate::linalg::diag(&[1.0, 3.0]);
        let e0 = filt.cond_exp(0).apply(&x);
        assert!((e0 - identity(2).scale(2.0)).norm() < 1e-10);
    }

    #[test]
    fn dyadic_depth2_structure() {
        let filt = dyadic_classical_filtration(2, 1, &State::uniform(1)).unwrap();
        assert_eq!(filt.levels().len(), 3);
        assert_eq!(filt.levels()[0].dim(), 1);
        assert_eq!(filt.levels()[1].dim(), 2);
        assert_eq!(filt.levels()[2].dim(), 4);
    }

    #[test]
    fn dyadic_quantum_single_level() {
        let filt = dyadic_classical_filtration(0, 2, &State::uniform(2)).unwrap();
        assert_eq!(filt.dim(), 2);
        assert_eq!(filt.levels().len(), 1);
        assert!(filt.levels()[0].is_full());
    }

    #[test]
    fn rademacher_exact_small() {
        let (filt, mart) = rademacher_matrix_martingale(2).unwrap();
        assert_eq!(filt.dim(), 8);
        // d_k = r_k (x) e_1k
        let expect = rademacher_element(2, SignConvention::RademacherFunction);
        assert!((mart.limit() - &expect).norm() < 1e-12);
        // martingale differences: d_0 = 0
        assert!(mart.diff(0).norm() < 1e-10);
        for k in 1..=2usize {
            let mut dk = zeros(8);
            for a in 0..4usize {
                let sign = if (a >> (2 - k)) & 1 == 0 { 1.0 } else { -1.0 };
                dk[(a * 2, a * 2 + (k - 1))] = cr(sign);
            }
            assert!((mart.diff(k) - dk).norm() < 1e-10, "k={k}");
        }
    }

    #[test]
    fn rademacher_exact_matches_compressed() {
        for n in 1..=3usize {
            let (filt, mart) = rademacher_matrix_martingale(n).unwrap();
            let comp = compressed_rademacher(n, SignConvention::RademacherFunction).unwrap();
            for &p in &[2.0, 3.0, 4.0] {
                let exact = lp_norm(filt.state(), mart.limit(), p, 0.5).unwrap();
                let fast = comp.lp_norm(p).unwrap();
                assert!(
                    (exact - fast).abs() <= 1e-10 * exact.max(1.0),
                    "n={n} p={p}: {exact} vs {fast}"
                );
                let closed = (n as f64).powf(0.5 - 1.0 / p);
                assert!((fast - closed).abs() <= 1e-10 * closed);
            }
            let exact_bmo_c = crate::norms::bmo_c(&mart);
            assert!((exact_bmo_c - comp.bmo_c()).abs() <= 1e-10);
            let exact_bmo_r = crate::norms::bmo_r(&mart);
            assert!((exact_bmo_r - comp.bmo_r()).abs() <= 1e-10);
            assert!((comp.bmo_c() - 1.0).abs() <= 1e-12, "n={n}");
            assert!((comp.bmo_r() - (n as f64).sqrt()).abs() <= 1e-12, "n={n}");
        }
    }

    #[test]
    fn rademacher_too_large() {
        assert!(matches!(
            rademacher_matrix_martingale(5),
            Err(NcError::TooLarge(_))
        ));
        assert!(matches!(
            compressed_rademacher(9, SignConvention::RademacherFunction),
            Err(NcError::TooLarge(_))
        ));
    }

    #[test]
    fn constant_sign_reading_degenerates() {
        let comp = compressed_rademacher(3, SignConvention::ConstantSign).unwrap();
        // constant signs: single level-zero difference, bmo_c = sqrt(n)
        assert!((comp.bmo_c() - 3.0f64.sqrt()).abs() < 1e-12);
        assert!((comp.lp_norm(4.0).unwrap() - 3.0f64.powf(0.25)).abs() < 1e-12);
    }

    #[test]
    fn random_martingale_determinism_and_normalization() {
        let filt = quantum_filtration();
        let a = random_martingale(&filt, 21, RandomOptions::default()).unwrap();
        let b = random_martingale(&filt, 21, RandomOptions::default()).unwrap();
        assert_eq!(a.limit(), b.limit());
        let h = random_martingale(
            &filt,
            22,
            RandomOptions {
                hermitian: true,
                normalize: Normalize::None,
            },
        )
        .unwrap();
        assert!((h.limit() - h.limit().adjoint()).norm() < 1e-12);
        let nb = random_martingale(
            &filt,
            23,
            RandomOptions {
                hermitian: false,
                normalize: Normalize::Bmo,
            },
        )
        .unwrap();
        assert!((crate::norms::bmo(&nb) - 1.0).abs() <= 1e-8);
        let nl = random_martingale(
            &filt,
            24,
            RandomOptions {
                hermitian: false,
                normalize: Normalize::Lp { p: 3.0, eta: 0.5 },
            },
        )
        .unwrap();
        assert!(
            (lp_norm(filt.state(), nl.limit(), 3.0, 0.5).unwrap() - 1.0).abs() <= 1e-8
        );
    }

    #[test]
    fn square_functions_level_zero() {
        let filt = quantum_filtration();
        let u = matrix_unit(4, 0, 0);
        // element of N_0 is a multiple of the identity; use scaled unit
        let x = identity(4).scale(1.5);
        let mart = decompose(&x, &filt).unwrap();
        let sq = square_functions(&mart);
        assert!((sq.s_col.clone() - x.adjoint() * &x).norm() < 1e-10);
        let _ = u;
    }
}
