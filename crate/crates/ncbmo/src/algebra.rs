//! Finite-dimensional von Neumann algebra model: *-subalgebras of the
//! ambient matrix algebra, faithful states, modular flow, state-preserving
//! conditional expectations, and the weighted L_p embeddings.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{NcError, Result};
use crate::linalg::{
    c, cr, fdot, herm_eig, hermitize, identity, matrix_unit, op_norm, schatten_norm, zeros,
    HermitianEig, Matrix,
};
use crate::randmat;

/// Residual threshold for algebra-membership checks.
const MEMBERSHIP_TOL: f64 = 1e-9;
/// Residual threshold for modular invariance Ad_D(N_n) = N_n.
const MODULAR_TOL: f64 = 1e-8;

/// A unital *-subalgebra of M_N, stored as a trace-orthonormal basis
/// (with respect to <a,b> = Tr(a* b)).
#[derive(Debug, Clone)]
pub struct Subalgebra {
    ambient_dim: usize,
    basis: Vec<Matrix>,
}

impl Subalgebra {
    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    /// Linear dimension of the subalgebra.
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Matrix] {
        &self.basis
    }

    pub fn is_full(&self) -> bool {
        self.dim() == self.ambient_dim * self.ambient_dim
    }

    /// Trace-orthogonal projection of x onto the span of the basis.
    pub fn project(&self, x: &Matrix) -> Matrix {
        let mut out = zeros(self.ambient_dim);
        for b in &self.basis {
            out += b.scale_complex(fdot(b, x));
        }
        out
    }

    /// Frobenius distance from x to the span.
    pub fn membership_residual(&self, x: &Matrix) -> f64 {
        (x - self.project(x)).norm()
    }

    pub fn contains(&self, x: &Matrix) -> bool {
        self.membership_residual(x) <= MEMBERSHIP_TOL * f64::max(1.0, x.norm())
    }

    pub fn is_contained_in(&self, other: &Subalgebra) -> bool {
        self.basis.iter().all(|b| other.contains(b))
    }

    /// All basis elements diagonal (commutative atoms model).
    pub fn is_diagonal(&self) -> bool {
        self.basis
            .iter()
            .all(|b| crate::linalg::is_diagonal(b, 1e-10))
    }

    /// Coordinates of x in the trace-orthonormal basis.
    pub fn coordinates(&self, x: &Matrix) -> Vec<Complex64> {
        self.basis.iter().map(|b| fdot(b, x)).collect()
    }

    pub fn from_coordinates(&self, coords: &[Complex64]) -> Matrix {
        let mut out = zeros(self.ambient_dim);
        for (b, &co) in self.basis.iter().zip(coords.iter()) {
            out += b.scale_complex(co);
        }
        out
    }
}

trait ScaleComplex {
    fn scale_complex(&self, s: Complex64) -> Matrix;
}

impl ScaleComplex for Matrix {
    fn scale_complex(&self, s: Complex64) -> Matrix {
        self * s
    }
}

/// Modified Gram-Schmidt over the Frobenius inner product; near-dependent
/// vectors are dropped.
fn orthonormalize(vectors: &[Matrix], ambient_dim: usize) -> Vec<Matrix> {
    let mut basis: Vec<Matrix> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for b in &basis {
            let co = fdot(b, &w);
            w -= b.scale_complex(co);
        }
        // second pass for numerical orthogonality
        for b in &basis {
            let co = fdot(b, &w);
            w -= b.scale_complex(co);
        }
        let norm = w.norm();
        if norm > 1e-10 * f64::max(1.0, v.norm()) {
            basis.push(w.scale(1.0 / norm));
        }
        if basis.len() == ambient_dim * ambient_dim {
            break;
        }
    }
    basis
}

/// Smallest unital *-subalgebra containing the generators: close under
/// adjoints and products until the span stabilizes, then orthonormalize.
pub fn build_subalgebra(ambient_dim: usize, generators: &[Matrix]) -> Result<Subalgebra> {
    for g in generators {
        if g.nrows() != ambient_dim || g.ncols() != ambient_dim {
            return Err(NcError::DimensionMismatch {
                expected: ambient_dim,
                got: g.nrows(),
            });
        }
    }
    let mut seed: Vec<Matrix> = vec![identity(ambient_dim)];
    for g in generators {
        seed.push(g.clone());
        seed.push(g.adjoint());
    }
    let mut basis = orthonormalize(&seed, ambient_dim);
    loop {
        let mut extra: Vec<Matrix> = Vec::new();
        let current = Subalgebra {
            ambient_dim,
            basis: basis.clone(),
        };
        'outer: for i in 0..basis.len() {
            for j in 0..basis.len() {
                let p = &basis[i] * &basis[j];
                if current.membership_residual(&p) > 1e-10 * f64::max(1.0, p.norm()) {
                    extra.push(p);
                    if extra.len() > 4 * ambient_dim * ambient_dim {
                        break 'outer;
                    }
                }
            }
        }
        if extra.is_empty() {
            break;
        }
        let mut all = basis;
        all.extend(extra);
        basis = orthonormalize(&all, ambient_dim);
    }
    Ok(Subalgebra { ambient_dim, basis })
}

/// Subalgebra in canonical block layout: the direct sum over spec entries
/// (d, m) of M_d tensor 1_m, laid out contiguously. Basis size sum d^2.
pub fn block_subalgebra(blocks: &[(usize, usize)]) -> Result<Subalgebra> {
    if blocks.is_empty() {
        return Err(NcError::BadSpec("empty block list".into()));
    }
    let mut n = 0usize;
    for &(d, m) in blocks {
        if d == 0 || m == 0 {
            return Err(NcError::BadSpec(format!("zero-size block ({d},{m})")));
        }
        n += d * m;
    }
    let mut basis = Vec::new();
    let mut offset = 0usize;
    for &(d, m) in blocks {
        let scale = 1.0 / (m as f64).sqrt();
        for i in 0..d {
            for j in 0..d {
                let mut u = zeros(n);
                for a in 0..m {
                    u[(offset + i * m + a, offset + j * m + a)] = cr(scale);
                }
                basis.push(u);
            }
        }
        offset += d * m;
    }
    Ok(Subalgebra {
        ambient_dim: n,
        basis,
    })
}

/// Subalgebra from an explicit spanning set (orthonormalized, assumed closed).
pub fn subalgebra_from_span(ambient_dim: usize, span: &[Matrix]) -> Subalgebra {
    Subalgebra {
        ambient_dim,
        basis: orthonormalize(span, ambient_dim),
    }
}

/// Constructor for bases that are trace-orthonormal by construction
/// (matrix-unit layouts); validation still re-checks orthonormality.
pub(crate) fn subalgebra_from_orthonormal_basis(
    ambient_dim: usize,
    basis: Vec<Matrix>,
) -> Subalgebra {
    Subalgebra { ambient_dim, basis }
}

pub fn full_matrix_algebra(n: usize) -> Subalgebra {
    block_subalgebra(&[(n, 1)]).expect("valid block")
}

pub fn diagonal_algebra(n: usize) -> Subalgebra {
    block_subalgebra(&vec![(1, 1); n]).expect("valid block")
}

/// A faithful state: full-rank density D with unit trace. The
/// eigendecomposition of D is cached so fractional powers are cheap.
#[derive(Debug, Clone)]
pub struct State {
    density: Matrix,
    eig: HermitianEig,
}

impl State {
    pub fn new(density: Matrix) -> Result<State> {
        let res = crate::linalg::herm_residual(&density);
        if res > 1e-10 {
            return Err(NcError::StateNotFaithful(format!(
                "density not Hermitian (residual {res:.3e})"
            )));
        }
        let tr = density.trace();
        if (tr.re - 1.0).abs() > 1e-12 || tr.im.abs() > 1e-12 {
            return Err(NcError::StateNotFaithful(format!(
                "trace {tr} differs from 1"
            )));
        }
        let density = hermitize(&density);
        let eig = herm_eig(&density)?;
        let min = eig.eigenvalues.first().cloned().unwrap_or(0.0);
        if min <= 1e-12 {
            return Err(NcError::StateNotFaithful(format!(
                "min eigenvalue {min:.3e} below faithfulness threshold"
            )));
        }
        Ok(State { density, eig })
    }

    pub fn uniform(n: usize) -> State {
        State::new(identity(n).scale(1.0 / n as f64)).expect("uniform density is valid")
    }

    pub fn diagonal(weights: &[f64]) -> Result<State> {
        State::new(crate::linalg::diag(weights))
    }

    pub fn tensor(&self, other: &State) -> State {
        State::new(self.density.kronecker(&other.density)).expect("tensor of densities")
    }

    pub fn dim(&self) -> usize {
        self.density.nrows()
    }

    pub fn density(&self) -> &Matrix {
        &self.density
    }

    /// D^s (any real s; D is strictly positive).
    pub fn power(&self, s: f64) -> Matrix {
        if s == 0.0 {
            return identity(self.dim());
        }
        self.eig.apply(|l| l.powf(s))
    }

    /// D^{it}.
    pub fn modular_unitary(&self, t: f64) -> Matrix {
        self.eig
            .apply_complex(|l| Complex64::from_polar(1.0, t * l.ln()))
    }

    /// phi(x) = Tr(D x).
    pub fn phi(&self, x: &Matrix) -> Complex64 {
        fdot(&self.density, x)
    }

    /// Frobenius distance to the normalized trace density I/N.
    pub fn tracial_deviation(&self) -> f64 {
        let n = self.dim();
        (&self.density - identity(n).scale(1.0 / n as f64)).norm()
    }
}

/// sigma_t(x) = D^{it} x D^{-it}.
pub fn modular_flow(state: &State, x: &Matrix, t: f64) -> Matrix {
    let u = state.modular_unitary(t);
    &u * x * u.adjoint()
}

fn check_eta(eta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(NcError::BadSpec(format!("eta {eta} outside [0,1]")));
    }
    Ok(())
}

/// Kosaki embedding x -> D^{(1-eta)/p} x D^{eta/p}; p = inf returns x.
pub fn embed_lp(state: &State, x: &Matrix, p: f64, eta: f64) -> Result<Matrix> {
    check_eta(eta)?;
    if p.is_infinite() && p > 0.0 {
        return Ok(x.clone());
    }
    if !p.is_finite() || p < 1.0 {
        return Err(NcError::BadExponent {
            module: "algebra",
            p,
            min: 1.0,
        });
    }
    let left = state.power((1.0 - eta) / p);
    let right = state.power(eta / p);
    Ok(left * x * right)
}

/// Weighted L_p norm: Schatten norm of the Kosaki embedding; operator norm
/// at p = inf.
pub fn lp_norm(state: &State, x: &Matrix, p: f64, eta: f64) -> Result<f64> {
    if p.is_infinite() && p > 0.0 {
        check_eta(eta)?;
        return Ok(op_norm(x));
    }
    schatten_norm(&embed_lp(state, x, p, eta)?, p)
}

/// State-preserving conditional expectation onto a subalgebra, realized as
/// the orthogonal projection with respect to <a,b>_phi = Tr(D a* b).
#[derive(Debug, Clone)]
pub struct CondExp {
    ambient_dim: usize,
    /// phi-orthonormal basis of the level.
    gns_basis: Vec<Matrix>,
    /// P_i = b_i D, so that the coefficient of b_i is <P_i, x>_F.
    pairing: Vec<Matrix>,
}

impl CondExp {
    fn build(state: &State, level: &Subalgebra) -> Result<CondExp> {
        let t = level.basis();
        let b = t.len();
        let mut gram = zeros(b);
        for i in 0..b {
            let ti_d = &t[i].adjoint() * state.density();
            // G_ij = Tr(D t_i* t_j) = Tr(t_j (D t_i*))... use fdot(t_i D?, ..)
            for j in 0..b {
                // Tr(D t_i* t_j)
                gram[(i, j)] = (state.density() * t[i].adjoint() * &t[j]).trace();
            }
            let _ = ti_d;
        }
        let gram = hermitize(&gram);
        let geig = herm_eig(&gram)?;
        let gmin = geig.eigenvalues.first().cloned().unwrap_or(0.0);
        if gmin <= 1e-14 {
            return Err(NcError::StateNotFaithful(format!(
                "GNS Gram matrix nearly singular (min eigenvalue {gmin:.3e})"
            )));
        }
        let isqrt = geig.apply(|l| 1.0 / l.sqrt());
        let mut gns_basis = Vec::with_capacity(b);
        for i in 0..b {
            let mut bi = zeros(level.ambient_dim());
            for (j, tj) in t.iter().enumerate() {
                bi += tj.scale_complex(isqrt[(j, i)]);
            }
            gns_basis.push(bi);
        }
        let pairing = gns_basis
            .iter()
            .map(|bi| bi * state.density())
            .collect();
        Ok(CondExp {
            ambient_dim: level.ambient_dim(),
            gns_basis,
            pairing,
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    /// E(x) = sum_i b_i Tr(D b_i* x).
    pub fn apply(&self, x: &Matrix) -> Matrix {
        let mut out = zeros(self.ambient_dim);
        for (bi, pi) in self.gns_basis.iter().zip(self.pairing.iter()) {
            out += bi.scale_complex(fdot(pi, x));
        }
        out
    }

    /// Dense superoperator of shape N^2 x N^2, row-major vec convention
    /// (column index r*N + c holds E(e_rc)).
    pub fn superoperator(&self) -> Matrix {
        let n = self.ambient_dim;
        let mut sup = zeros(n * n);
        for r in 0..n {
            for col in 0..n {
                let img = self.apply(&matrix_unit(n, r, col));
                for i in 0..n {
                    for j in 0..n {
                        sup[(i * n + j, r * n + col)] = img[(i, j)];
                    }
                }
            }
        }
        sup
    }

    /// Choi matrix sum_{rc} e_rc tensor E(e_rc); PSD iff E is completely
    /// positive.
    pub fn choi(&self) -> Matrix {
        let n = self.ambient_dim;
        let mut choi = zeros(n * n);
        for r in 0..n {
            for col in 0..n {
                let img = self.apply(&matrix_unit(n, r, col));
                for i in 0..n {
                    for j in 0..n {
                        choi[(r * n + i, col * n + j)] = img[(i, j)];
                    }
                }
            }
        }
        choi
    }

    /// Extension of E to the weighted L_q space, realized with the
    /// symmetric split: D^{1/2q} E(D^{-1/2q} x D^{-1/2q}) D^{1/2q}.
    /// Under modular invariance this is independent of the split.
    pub fn apply_lq(&self, state: &State, x: &Matrix, q: f64) -> Matrix {
        if q.is_infinite() {
            return self.apply(x);
        }
        let pos = state.power(0.5 / q);
        let neg = state.power(-0.5 / q);
        let inner = &neg * x * &neg;
        &pos * self.apply(&inner) * &pos
    }

    /// Same extension with an asymmetric split (used to assert split
    /// independence): D^{(1-theta)/q} E(D^{-(1-theta)/q} x D^{-theta/q}) D^{theta/q}.
    pub fn apply_lq_split(&self, state: &State, x: &Matrix, q: f64, theta: f64) -> Matrix {
        if q.is_infinite() {
            return self.apply(x);
        }
        let l = state.power((1.0 - theta) / q);
        let linv = state.power(-(1.0 - theta) / q);
        let r = state.power(theta / q);
        let rinv = state.power(-theta / q);
        &l * self.apply(&(&linv * x * &rinv)) * &r
    }
}

/// Whether a filtration must terminate in the full matrix algebra.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum TopLevel {
    FullMatrixAlgebra,
    AnySubalgebra,
}

/// A validated increasing chain of subalgebras with cached conditional
/// expectations. Immutable after validation.
#[derive(Debug, Clone)]
pub struct Filtration {
    state: State,
    levels: Vec<Subalgebra>,
    cond_exps: Vec<CondExp>,
}

/// Validated filtration with the ambient algebra equal to full M_N.
pub fn validate_filtration(state: State, levels: Vec<Subalgebra>) -> Result<Filtration> {
    Filtration::validate_with(state, levels, TopLevel::FullMatrixAlgebra)
}

impl Filtration {
    pub(crate) fn validate_with(
        state: State,
        levels: Vec<Subalgebra>,
        top: TopLevel,
    ) -> Result<Filtration> {
        if levels.is_empty() {
            return Err(NcError::BadSpec("empty filtration".into()));
        }
        let n = state.dim();
        for l in &levels {
            if l.ambient_dim() != n {
                return Err(NcError::DimensionMismatch {
                    expected: n,
                    got: l.ambient_dim(),
                });
            }
        }
        if top == TopLevel::FullMatrixAlgebra && !levels.last().unwrap().is_full() {
            return Err(NcError::BadSpec(
                "last level must be the full matrix algebra".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0xE57A);
        for (k, level) in levels.iter().enumerate() {
            check_subalgebra_axioms(level, k, &mut rng)?;
            // modular invariance Ad_D(N_k) = N_k
            let dinv = state.power(-1.0);
            let mut worst = 0.0f64;
            for b in level.basis() {
                let conj = state.density() * b * &dinv;
                let res = level.membership_residual(&conj) / f64::max(1.0, conj.norm());
                worst = worst.max(res);
            }
            if worst > MODULAR_TOL {
                return Err(NcError::NotModularInvariant {
                    level: k,
                    residual: worst,
                });
            }
        }
        for k in 0..levels.len() - 1 {
            if levels[k].dim() >= levels[k + 1].dim() {
                return Err(NcError::NotIncreasing { level: k });
            }
            if !levels[k].is_contained_in(&levels[k + 1]) {
                return Err(NcError::NotIncreasing { level: k });
            }
        }
        let cond_exps: Vec<CondExp> = levels
            .iter()
            .map(|l| CondExp::build(&state, l))
            .collect::<Result<_>>()?;
        let filt = Filtration {
            state,
            levels,
            cond_exps,
        };
        filt.check_cond_exp_axioms(&mut rng)?;
        Ok(filt)
    }

    /// Axiom spot-checks run at validation time (deterministic sampling).
    fn check_cond_exp_axioms(&self, rng: &mut ChaCha8Rng) -> Result<()> {
        let n = self.dim();
        let one = identity(n);
        for (k, e) in self.cond_exps.iter().enumerate() {
            let fail = |what: &str, residual: f64| {
                Err(NcError::NotModularInvariant {
                    level: k,
                    residual,
                })
                .map_err(|_| NcError::BadSpec(format!(
                    "conditional expectation invariant `{what}` failed at level {k} (residual {residual:.3e})"
                )))
            };
            let r = (e.apply(&one) - &one).norm();
            if r > 1e-9 {
                return fail("unital", r);
            }
            for _ in 0..6 {
                let x = randmat::gaussian(rng, n);
                let scale = f64::max(1.0, x.norm());
                let ex = e.apply(&x);
                let r = (e.apply(&ex) - &ex).norm() / scale;
                if r > 1e-9 {
                    return fail("idempotent", r);
                }
                let r = (self.state.phi(&ex) - self.state.phi(&x)).norm() / scale;
                if r > 1e-9 {
                    return fail("state-preserving", r);
                }
                let r = (e.apply(&x.adjoint()) - ex.adjoint()).norm() / scale;
                if r > 1e-9 {
                    return fail("adjoint-preserving", r);
                }
                // module property with a, b in the level
                let a = random_element(&self.levels[k], rng);
                let b = random_element(&self.levels[k], rng);
                let lhs = e.apply(&(&a * &x * &b));
                let rhs = &a * &ex * &b;
                let r = (lhs - rhs).norm()
                    / f64::max(1.0, a.norm() * x.norm() * b.norm());
                if r > 1e-9 {
                    return fail("module property", r);
                }
            }
            // complete positivity via the Choi matrix (skipped above desk size)
            if n <= 24 {
                let choi = e.choi();
                let eig = herm_eig(&hermitize(&choi))?;
                let min = eig.eigenvalues.first().cloned().unwrap_or(0.0);
                if min < -1e-9 {
                    return fail("complete positivity (Choi)", -min);
                }
            }
        }
        // commuting squares E_n E_m = E_{min(n,m)}
        for _ in 0..4 {
            let x = randmat::gaussian(rng, n);
            for a in 0..self.cond_exps.len() {
                for b in 0..self.cond_exps.len() {
                    let lhs = self.cond_exps[a].apply(&self.cond_exps[b].apply(&x));
                    let rhs = self.cond_exps[a.min(b)].apply(&x);
                    let r = (lhs - rhs).norm() / f64::max(1.0, x.norm());
                    if r > 1e-9 {
                        return Err(NcError::BadSpec(format!(
                            "commuting squares failed for ({a},{b}) (residual {r:.3e})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn dim(&self) -> usize {
        self.state.dim()
    }

    pub fn levels(&self) -> &[Subalgebra] {
        &self.levels
    }

    /// Index of the last level (M in the chain N_0 .. N_M).
    pub fn top(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn ambient(&self) -> &Subalgebra {
        self.levels.last().unwrap()
    }

    pub fn cond_exp(&self, n: usize) -> &CondExp {
        &self.cond_exps[n]
    }

    /// E_n(x) with the convention E_{-1} = 0.
    pub fn expect(&self, n: isize, x: &Matrix) -> Matrix {
        if n < 0 {
            zeros(self.dim())
        } else {
            self.cond_exps[(n as usize).min(self.top())].apply(x)
        }
    }
}

fn random_element(level: &Subalgebra, rng: &mut ChaCha8Rng) -> Matrix {
    use rand_distr::{Distribution, StandardNormal};
    let coords: Vec<Complex64> = (0..level.dim())
        .map(|_| c(StandardNormal.sample(rng), StandardNormal.sample(rng)))
        .collect();
    level.from_coordinates(&coords)
}

fn check_subalgebra_axioms(level: &Subalgebra, k: usize, rng: &mut ChaCha8Rng) -> Result<()> {
    use rand::Rng;
    let n = level.ambient_dim();
    let b = level.dim();
    if !level.contains(&identity(n)) {
        return Err(NcError::BadSpec(format!("level {k} does not contain the unit")));
    }
    // trace-orthonormality
    for i in 0..b {
        for j in i..b {
            let g = fdot(&level.basis()[i], &level.basis()[j]);
            let expect = if i == j { cr(1.0) } else { cr(0.0) };
            if (g - expect).norm() > 1e-10 {
                return Err(NcError::BadSpec(format!(
                    "level {k} basis not trace-orthonormal (pair {i},{j})"
                )));
            }
        }
    }
    // adjoint closure: full check
    for bi in level.basis() {
        let adj = bi.adjoint();
        if !level.contains(&adj) {
            return Err(NcError::BadSpec(format!("level {k} not closed under adjoints")));
        }
    }
    // product closure: full check for small bases, sampled otherwise
    let pairs: Vec<(usize, usize)> = if b <= 48 {
        (0..b).flat_map(|i| (0..b).map(move |j| (i, j))).collect()
    } else {
        (0..400)
            .map(|_| (rng.gen_range(0..b), rng.gen_range(0..b)))
            .collect()
    };
    for (i, j) in pairs {
        let p = &level.basis()[i] * &level.basis()[j];
        if level.membership_residual(&p) > MEMBERSHIP_TOL * f64::max(1.0, p.norm()) {
            return Err(NcError::BadSpec(format!(
                "level {k} not closed under products (pair {i},{j})"
            )));
        }
    }
    Ok(())
}
