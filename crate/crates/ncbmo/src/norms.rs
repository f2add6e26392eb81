//! The martingale norms: BMO^c / BMO, conditioned L_inf^c, Hardy column
//! norms, the vector-valued sup-norm with its dual program, L_p^cMO, and
//! the optimization-defined BMO_p norms with certified lower bounds.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::algebra::{embed_lp, Filtration};
use crate::ascent::{self, AscentOpts, Constraint, Objective};
use crate::error::{NcError, Result};
use crate::linalg::{
    c, cr, herm_eig, hermitize, is_diagonal, mat_power, op_abs, op_norm, schatten_norm,
    top_eigenprojection, zeros, Matrix,
};
use crate::martingale::Martingale;

/// Structured result of a norm evaluation. For optimization-defined norms
/// `value` is a certified lower bound and `upper_bound` (when present) a
/// provable upper companion.
#[derive(Debug, Clone)]
pub struct NormReport {
    pub name: String,
    pub value: f64,
    pub upper_bound: Option<f64>,
    pub witness: Option<Matrix>,
    /// (n, m) pair attaining the reported value, if applicable.
    pub witness_pair: Option<(usize, usize)>,
    pub iterations: usize,
    pub restarts: usize,
    pub converged: bool,
}

impl NormReport {
    fn exact(name: &str, value: f64) -> NormReport {
        NormReport {
            name: name.into(),
            value,
            upper_bound: Some(value),
            witness: None,
            witness_pair: None,
            iterations: 0,
            restarts: 0,
            converged: true,
        }
    }
}

/// Options shared by the optimizing norms.
#[derive(Debug, Clone)]
pub struct OptimizerOpts {
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
    /// Restrict the multiplier to the positive cone of the subalgebra.
    pub positive_witness: bool,
}

impl Default for OptimizerOpts {
    fn default() -> Self {
        OptimizerOpts {
            restarts: 8,
            max_iter: 300,
            seed: 0,
            positive_witness: false,
        }
    }
}

fn check_p(module: &'static str, p: f64, min: f64) -> Result<()> {
    if p.is_infinite() && p > 0.0 {
        return Ok(());
    }
    if !p.is_finite() || p < min {
        return Err(NcError::BadExponent { module, p, min });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Exact norms
// ---------------------------------------------------------------------------

/// Column BMO norm: sup over n <= m of || E_n((x_m - x_{n-1})*(x_m - x_{n-1})) ||^{1/2}.
pub fn bmo_c(mart: &Martingale) -> f64 {
    let mut best = 0.0f64;
    for m in 0..=mart.top() {
        for n in 0..=m {
            let y = mart.window(n, m);
            let t = mart
                .filtration()
                .cond_exp(n)
                .apply(&(y.adjoint() * &y));
            best = best.max(op_norm(&hermitize(&t)));
        }
    }
    best.sqrt()
}

pub fn bmo_r(mart: &Martingale) -> f64 {
    bmo_c(&mart.adjoint())
}

/// max(bmo_c, bmo_r).
pub fn bmo(mart: &Martingale) -> f64 {
    bmo_c(mart).max(bmo_r(mart))
}

/// Conditioned norm || E_n(x* x) ||^{1/2}.
pub fn conditioned_linf_c(mart: &Martingale, n: usize) -> f64 {
    let x = mart.limit();
    let t = mart.filtration().cond_exp(n).apply(&(x.adjoint() * x));
    op_norm(&hermitize(&t)).sqrt()
}

/// Column norm of a finite sequence: ||(sum_k z_k* z_k)^{1/2}||_p.
pub fn lp_l2c_norm(seq: &[Matrix], p: f64) -> Result<f64> {
    check_p("norms", p, 1.0)?;
    if seq.is_empty() {
        return Ok(0.0);
    }
    let n = seq[0].nrows();
    let mut s = zeros(n);
    for z in seq {
        s += z.adjoint() * z;
    }
    let eig = herm_eig(&hermitize(&s))?;
    if p.is_infinite() {
        return Ok(eig.eigenvalues.last().cloned().unwrap_or(0.0).max(0.0).sqrt());
    }
    let sum: f64 = eig
        .eigenvalues
        .iter()
        .map(|&l| l.max(0.0).powf(p / 2.0))
        .sum();
    Ok(sum.powf(1.0 / p))
}

/// Hardy column norm of the Kosaki-embedded differences.
pub fn hp_c(mart: &Martingale, p: f64, eta: f64) -> Result<f64> {
    check_p("norms", p, 1.0)?;
    let state = mart.state();
    let embedded: Vec<Matrix> = mart
        .diffs()
        .iter()
        .map(|d| embed_lp(state, d, p, eta))
        .collect::<Result<_>>()?;
    lp_l2c_norm(&embedded, p)
}

/// max of the column norms of x and x*.
pub fn hp(mart: &Martingale, p: f64, eta: f64) -> Result<f64> {
    Ok(hp_c(mart, p, eta)?.max(hp_c(&mart.adjoint(), p, eta)?))
}

/// Stein projection Q(x) = (E_n(x_n))_n.
pub fn stein_projection(terms: &[Matrix], filt: &Filtration) -> Result<Vec<Matrix>> {
    if terms.len() != filt.top() + 1 {
        return Err(NcError::LengthMismatch {
            expected: filt.top() + 1,
            got: terms.len(),
        });
    }
    Ok(terms
        .iter()
        .enumerate()
        .map(|(n, x)| filt.cond_exp(n).apply(x))
        .collect())
}

// ---------------------------------------------------------------------------
// Vector-valued sup-norm (dual program)
// ---------------------------------------------------------------------------

/// ||sup_n x_n||_q data: PSD terms, the exponent, and an optional caller
/// upper bound from a factorization x_k = a w_k a.
#[derive(Debug, Clone)]
pub struct SupNormProblem {
    pub terms: Vec<Matrix>,
    pub q: f64,
    pub factor_bound: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Bracket {
    pub lower: f64,
    pub upper: f64,
    pub witness: Vec<Matrix>,
    pub iterations: usize,
    pub converged: bool,
}

fn assert_psd(terms: &[Matrix]) -> Result<Vec<Matrix>> {
    let mut clean = Vec::with_capacity(terms.len());
    for t in terms {
        let h = hermitize(t);
        let eig = herm_eig(&h)?;
        let min = eig.eigenvalues.first().cloned().unwrap_or(0.0);
        let scale = eig
            .eigenvalues
            .iter()
            .fold(1.0f64, |a, &b| a.max(b.abs()));
        if min < -1e-9 * scale {
            return Err(NcError::NotPsd { min_eig: min });
        }
        clean.push(eig.apply(|l| l.max(0.0)));
    }
    Ok(clean)
}

/// Dual bracket for the vector-valued sup-norm
/// ||sup_n x_n||_q = sup { sum tr(x_n y_n) : y_n >= 0, ||sum y_n||_{q'} <= 1 }.
///
/// q = inf and q = 1 are exact; literal diagonal data is reduced to the
/// commutative pointwise maximum and is exact; otherwise the lower bound
/// comes from projected dual ascent and the upper bound from ||sum x_k||_q.
pub fn sup_norm_bracket(prob: &SupNormProblem, opts: &OptimizerOpts) -> Result<Bracket> {
    check_p("norms", prob.q, 1.0)?;
    let terms = assert_psd(&prob.terms)?;
    if terms.is_empty() {
        return Ok(Bracket {
            lower: 0.0,
            upper: 0.0,
            witness: vec![],
            iterations: 0,
            converged: true,
        });
    }
    let n = terms[0].nrows();
    let q = prob.q;

    if q.is_infinite() {
        // sup over k of the operator norm; dual concentrates on a rank-one
        let mut best = 0.0f64;
        let mut arg = 0usize;
        for (k, t) in terms.iter().enumerate() {
            let v = op_norm(t);
            if v > best {
                best = v;
                arg = k;
            }
        }
        let mut witness = vec![zeros(n); terms.len()];
        let eig = herm_eig(&terms[arg])?;
        let top = eig.eigenvectors.column(eig.dim() - 1).clone_owned();
        let mut y = zeros(n);
        for r in 0..n {
            for s in 0..n {
                y[(r, s)] = top[r] * top[s].conj();
            }
        }
        witness[arg] = y;
        return Ok(Bracket {
            lower: best,
            upper: best,
            witness,
            iterations: 0,
            converged: true,
        });
    }

    let qp = if q == 1.0 { f64::INFINITY } else { q / (q - 1.0) };
    let sum: Matrix = terms.iter().fold(zeros(n), |acc, t| acc + t);
    let sum_bound = schatten_norm(&sum, q)?;
    let mut upper = sum_bound;
    if let Some(fb) = prob.factor_bound {
        upper = upper.min(fb);
    }

    if q == 1.0 {
        // y_k = 1 is feasible and attains tr(sum x_k) = ||sum x_k||_1
        let witness = vec![crate::linalg::identity(n); terms.len()];
        return Ok(Bracket {
            lower: sum_bound.min(upper),
            upper,
            witness,
            iterations: 0,
            converged: true,
        });
    }

    let diagonal = terms.iter().all(|t| is_diagonal(t, 1e-12));
    if diagonal {
        // commutative reduction: pointwise maximum of the diagonals
        let mut maxd = vec![0.0f64; n];
        let mut argk = vec![0usize; n];
        for (k, t) in terms.iter().enumerate() {
            for i in 0..n {
                let v = t[(i, i)].re;
                if v > maxd[i] {
                    maxd[i] = v;
                    argk[i] = k;
                }
            }
        }
        let value = maxd.iter().map(|&v| v.powf(q)).sum::<f64>().powf(1.0 / q);
        let mut witness = vec![zeros(n); terms.len()];
        if value > 0.0 {
            for i in 0..n {
                // classical norming density M^{q-1}/||M||_q^{q-1}
                witness[argk[i]][(i, i)] = cr(maxd[i].powf(q - 1.0) / value.powf(q - 1.0));
            }
        }
        let upper = upper.min(value);
        return Ok(Bracket {
            lower: value,
            upper,
            witness,
            iterations: 0,
            converged: true,
        });
    }

    // projected dual ascent; the objective is linear so every feasible
    // iterate is a certificate
    let feasibilize = |ys: &mut Vec<Matrix>| {
        for y in ys.iter_mut() {
            let h = hermitize(y);
            let eig = herm_eig(&h).expect("Hermitian");
            *y = eig.apply(|l| l.max(0.0));
        }
        let total: Matrix = ys.iter().fold(zeros(n), |acc, t| acc + t);
        let nrm = schatten_norm(&total, qp).expect("valid exponent");
        if nrm > 1.0 {
            for y in ys.iter_mut() {
                *y = y.scale(1.0 / nrm);
            }
        }
    };
    let objective = |ys: &[Matrix]| -> f64 {
        ys.iter()
            .zip(terms.iter())
            .map(|(y, x)| crate::linalg::fdot(y, x).re)
            .sum()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5abc);
    let mut best_val = f64::NEG_INFINITY;
    let mut best_wit: Vec<Matrix> = vec![];
    let mut iterations = 0usize;
    let restarts = opts.restarts.max(1);
    for r in 0..restarts {
        let mut ys: Vec<Matrix> = if r == 0 {
            terms.clone()
        } else if r == 1 {
            // spectral norming seed per term
            terms
                .iter()
                .map(|t| {
                    let eig = herm_eig(t).expect("PSD");
                    eig.apply(|l| l.max(0.0).powf((q - 1.0).max(0.0)))
                })
                .collect()
        } else {
            terms
                .iter()
                .map(|_| {
                    let g = Matrix::from_fn(n, n, |_, _| {
                        c(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
                    });
                    &g * g.adjoint()
                })
                .collect()
        };
        feasibilize(&mut ys);
        let mut val = objective(&ys);
        let scale = 1.0 / (1.0 + op_norm(&sum));
        for t in 0..opts.max_iter.min(200) {
            iterations += 1;
            let step = scale / (1.0 + 0.05 * t as f64);
            for (y, x) in ys.iter_mut().zip(terms.iter()) {
                *y += x.scale(step);
            }
            feasibilize(&mut ys);
            let v = objective(&ys);
            if v > val {
                val = v;
            }
            if v > best_val {
                best_val = v;
                best_wit = ys.clone();
            }
        }
        if val > best_val {
            best_val = val;
            best_wit = ys;
        }
    }
    let lower = best_val.max(0.0).min(upper);
    Ok(Bracket {
        lower,
        upper,
        witness: best_wit,
        iterations,
        converged: true,
    })
}

// ---------------------------------------------------------------------------
// L_p^c MO
// ---------------------------------------------------------------------------

/// Maximal conditioned square-function norm
/// sup_m || sup_{n<=m} E_n( sum_{k=n}^m d_k* d_k ) ||_{p/2}^{1/2},
/// evaluated on the differences embedded at exponent p. At p = inf this is
/// exactly bmo_c.
pub fn lp_c_mo(mart: &Martingale, p: f64, eta: f64, opts: &OptimizerOpts) -> Result<NormReport> {
    check_p("norms", p, 2.0)?;
    if p.is_infinite() {
        return Ok(NormReport::exact("lp_c_mo", bmo_c(mart)));
    }
    let state = mart.state();
    let filt = mart.filtration();
    let embedded: Vec<Matrix> = mart
        .diffs()
        .iter()
        .map(|d| embed_lp(state, d, p, eta))
        .collect::<Result<_>>()?;
    let mut low = 0.0f64;
    let mut up = 0.0f64;
    let mut iterations = 0usize;
    let mut converged = true;
    for m in 0..=mart.top() {
        let mut terms = Vec::with_capacity(m + 1);
        for n in 0..=m {
            let mut z = zeros(filt.dim());
            for k in n..=m {
                z += embedded[k].adjoint() * &embedded[k];
            }
            let t = filt.cond_exp(n).apply_lq(state, &hermitize(&z), p / 2.0);
            // clip the tiny negative dust so the dual program sees PSD data
            let eig = herm_eig(&hermitize(&t))?;
            terms.push(eig.apply(|l| l.max(0.0)));
        }
        let bracket = sup_norm_bracket(
            &SupNormProblem {
                terms,
                q: p / 2.0,
                factor_bound: None,
            },
            opts,
        )?;
        low = low.max(bracket.lower);
        up = up.max(bracket.upper);
        iterations += bracket.iterations;
        converged &= bracket.converged;
    }
    Ok(NormReport {
        name: "lp_c_mo".into(),
        value: low.sqrt(),
        upper_bound: Some(up.sqrt()),
        witness: None,
        witness_pair: None,
        iterations,
        restarts: opts.restarts,
        converged,
    })
}

// ---------------------------------------------------------------------------
// BMO_p
// ---------------------------------------------------------------------------

/// Column BMO_p norm: for each pair n <= m, maximize ||(x_m - x_{n-1}) a||_p
/// over a = b D^{1/p}, b in N_n, on the unit Schatten-p sphere. The result
/// is a certified lower bound (the true norm is a supremum over the same
/// feasible set).
pub fn bmo_p_c(mart: &Martingale, p: f64, opts: &OptimizerOpts) -> Result<NormReport> {
    check_p("norms", p, 2.0)?;
    if p.is_infinite() {
        // sup_{||a|| <= 1} ||y a|| = ||y||
        let mut best = 0.0;
        let mut pair = (0, 0);
        for m in 0..=mart.top() {
            for n in 0..=m {
                let v = op_norm(&mart.window(n, m));
                if v > best {
                    best = v;
                    pair = (n, m);
                }
            }
        }
        let mut rep = NormReport::exact("bmo_p_c", best);
        rep.witness_pair = Some(pair);
        return Ok(rep);
    }

    let filt = mart.filtration();
    let state = mart.state();
    let d_1p = state.power(1.0 / p);
    let d_half = state.power(0.5 / p);

    let mut best = 0.0f64;
    let mut best_witness: Option<Matrix> = None;
    let mut best_pair = None;
    let mut iterations = 0usize;
    let mut converged = true;

    for m in 0..=mart.top() {
        for n in 0..=m {
            let y = mart.window(n, m);
            if y.norm() < 1e-13 {
                continue;
            }
            let level = &filt.levels()[n];
            let frame: Vec<Matrix> = if opts.positive_witness {
                level.basis().iter().map(|t| &d_half * t * &d_half).collect()
            } else {
                level.basis().iter().map(|t| t * &d_1p).collect()
            };
            let q = hermitize(&(y.adjoint() * &y));
            // deterministic seeds: the p = inf witness (top spectral
            // projection of E_n(y*y)), the top projection of E_n(|y|^p),
            // and the identity multiplier
            let w_inf = filt.cond_exp(n).apply(&q);
            let seed1 = top_eigenprojection(&hermitize(&w_inf), 1e-10)?.matrix;
            let w_p = filt.cond_exp(n).apply(&mat_power(&op_abs(&y), p)?);
            let seed2 = top_eigenprojection(&hermitize(&w_p), 1e-10)?.matrix;
            let seed3 = crate::linalg::identity(filt.dim());
            let seeds: Vec<Vec<Complex64>> = [seed1, seed2, seed3]
                .iter()
                .map(|s| level.coordinates(s))
                .collect();
            let terms = vec![(1.0, q)];
            let obj = Objective {
                frame: &frame,
                terms: &terms,
                p,
            };
            let constraint = if opts.positive_witness {
                Constraint::PositiveCone {
                    algebra_basis: level.basis(),
                }
            } else {
                Constraint::Free
            };
            let res = ascent::maximize(
                &obj,
                &seeds,
                &constraint,
                &AscentOpts {
                    restarts: opts.restarts,
                    max_iter: opts.max_iter,
                    seed: opts
                        .seed
                        .wrapping_mul(0x9e3779b97f4a7c15)
                        .wrapping_add((n * 64 + m) as u64),
                    ..AscentOpts::default()
                },
            )?;
            iterations += res.iterations;
            converged &= res.converged;
            if res.value > best {
                best = res.value;
                best_witness = Some(res.witness);
                best_pair = Some((n, m));
            }
        }
    }
    Ok(NormReport {
        name: "bmo_p_c".into(),
        value: best,
        upper_bound: None,
        witness: best_witness,
        witness_pair: best_pair,
        iterations,
        restarts: opts.restarts,
        converged,
    })
}

/// max of the column norms of x and x*.
pub fn bmo_p(mart: &Martingale, p: f64, opts: &OptimizerOpts) -> Result<NormReport> {
    let col = bmo_p_c(mart, p, opts)?;
    let row = bmo_p_c(&mart.adjoint(), p, opts)?;
    let mut rep = if row.value > col.value { row } else { col };
    rep.name = "bmo_p".into();
    Ok(rep)
}

/// Classical BMO_p by the conditional-moment formula, valid on fully
/// diagonal instances: sup over n <= m of the largest atom value of
/// E_n(|x_m - x_{n-1}|^p), to the power 1/p.
pub fn classical_bmo_p_oracle(mart: &Martingale, p: f64) -> Result<f64> {
    check_p("norms", p, 1.0)?;
    if p.is_infinite() {
        return Err(NcError::BadExponent {
            module: "norms",
            p,
            min: 1.0,
        });
    }
    let filt = mart.filtration();
    let mut mass = 0.0f64;
    let offdiag = |m: &Matrix| crate::linalg::offdiag_mass(m);
    mass = mass.max(offdiag(filt.state().density()));
    for level in filt.levels() {
        for b in level.basis() {
            mass = mass.max(offdiag(b));
        }
    }
    for n in 0..=mart.top() {
        mass = mass.max(offdiag(mart.adapted(n)));
    }
    if mass > 1e-10 {
        return Err(NcError::NotCommutative { mass });
    }
    let mut best = 0.0f64;
    for m in 0..=mart.top() {
        for n in 0..=m {
            let y = mart.window(n, m);
            let moment = mat_power(&op_abs(&y), p)?;
            let e = filt.cond_exp(n).apply(&moment);
            for i in 0..filt.dim() {
                best = best.max(e[(i, i)].re);
            }
        }
    }
    Ok(best.powf(1.0 / p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{block_subalgebra, lp_norm, validate_filtration, State};
    use crate::linalg::{diag, identity, matrix_unit};
    use crate::martingale::{
        decompose, dyadic_classical_filtration, random_martingale, Normalize, RandomOptions,
    };
    use std::sync::Arc;

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

    fn classical_filtration(weights: &[f64]) -> Arc<Filtration> {
        let n = weights.len();
        crate::martingale::classical_partition_filtration(
            weights,
            &[vec![n], vec![n / 2, n / 2], vec![1; n]],
        )
        .unwrap()
    }

    #[test]
    fn bmo_of_identity_is_one() {
        let filt = quantum_filtration();
        let mart = decompose(&identity(4), &filt).unwrap();
        assert!((bmo(&mart) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bmo_two_point_rademacher() {
        // classical r_1 on a two-point space: bmo = 1
        let filt = dyadic_classical_filtration(1, 1, &State::uniform(1)).unwrap();
        let x = diag(&[1.0, -1.0]);
        let mart = decompose(&x, &filt).unwrap();
        assert!((bmo(&mart) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conditioned_linf_examples() {
        let filt = quantum_filtration();
        // x = e_12 tensor-like unit in M_2 x 1 at level 1
        let x = matrix_unit(4, 0, 2);
        let mart = decompose(&x, &filt).unwrap();
        let v = conditioned_linf_c(&mart, 0);
        // E_0(x* x) = phi(x*x) 1 with phi(e_22-block) from the density
        let expect = filt.state().phi(&(x.adjoint() * &x)).re.sqrt();
        assert!((v - expect).abs() < 1e-10);
        // homogeneity
        let m2 = mart.scale(2.0);
        assert!((conditioned_linf_c(&m2, 0) - 2.0 * v).abs() < 1e-10);
        // element of the level: the conditioned norm is its operator norm
        let y = identity(4).scale(1.5);
        let my = decompose(&y, &filt).unwrap();
        assert!((conditioned_linf_c(&my, 1) - 1.5).abs() < 1e-10);
    }

    #[test]
    fn hp_c_single_difference() {
        let filt = quantum_filtration();
        let x = identity(4).scale(1.3);
        let mart = decompose(&x, &filt).unwrap();
        for &p in &[2.0, 3.0] {
            let v = hp_c(&mart, p, 0.5).unwrap();
            let expect = lp_norm(filt.state(), &x, p, 0.5).unwrap();
            assert!((v - expect).abs() < 1e-10, "p={p}");
        }
    }

    #[test]
    fn hp_c_p2_is_l2_norm() {
        // orthogonality of differences makes the p = 2 Hardy norm the L_2 norm
        let filt = quantum_filtration();
        let mart = random_martingale(&filt, 5, RandomOptions::default()).unwrap();
        for &eta in &[0.0, 0.5, 1.0] {
            let v = hp_c(&mart, 2.0, eta).unwrap();
            let expect = lp_norm(filt.state(), mart.limit(), 2.0, eta).unwrap();
            assert!((v - expect).abs() <= 1e-9 * expect, "eta={eta}");
        }
    }

    #[test]
    fn sup_norm_q_inf_and_single_term() {
        let terms = vec![diag(&[1.0, 0.0]), diag(&[0.0, 2.0])];
        let b = sup_norm_bracket(
            &SupNormProblem {
                terms,
                q: f64::INFINITY,
                factor_bound: None,
            },
            &OptimizerOpts::default(),
        )
        .unwrap();
        assert!((b.lower - 2.0).abs() < 1e-12);
        assert!((b.upper - 2.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = crate::randmat::gaussian(&mut rng, 3);
        let x = &g * g.adjoint();
        for &q in &[1.0, 2.0, 3.0] {
            let b = sup_norm_bracket(
                &SupNormProblem {
                    terms: vec![x.clone()],
                    q,
                    factor_bound: None,
                },
                &OptimizerOpts::default(),
            )
            .unwrap();
            let expect = schatten_norm(&x, q).unwrap();
            assert!(
                b.upper - b.lower <= 2e-5 * expect && (b.upper - expect).abs() <= 1e-9 * expect,
                "q={q}: [{}, {}] vs {expect}",
                b.lower,
                b.upper
            );
        }
    }

    #[test]
    fn sup_norm_commuting_diagonal_q1() {
        let terms = vec![diag(&[1.0, 0.0]), diag(&[0.0, 2.0])];
        let b = sup_norm_bracket(
            &SupNormProblem {
                terms,
                q: 1.0,
                factor_bound: None,
            },
            &OptimizerOpts::default(),
        )
        .unwrap();
        assert!((b.lower - 3.0).abs() < 1e-12);
        assert!((b.upper - 3.0).abs() < 1e-12);
    }

    #[test]
    fn sup_norm_diagonal_matches_bruteforce() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let k = 3usize;
            let n = 4usize;
            let terms: Vec<Matrix> = (0..k)
                .map(|_| {
                    diag(
                        &(0..n)
                            .map(|_| {
                                let v: f64 = StandardNormal.sample(&mut rng);
                                v * v
                            })
                            .collect::<Vec<_>>(),
                    )
                })
                .collect();
            for &q in &[1.5, 2.0, 4.0] {
                let expect = {
                    let mut m = vec![0.0f64; n];
                    for t in &terms {
                        for i in 0..n {
                            m[i] = m[i].max(t[(i, i)].re);
                        }
                    }
                    m.iter().map(|v| v.powf(q)).sum::<f64>().powf(1.0 / q)
                };
                let b = sup_norm_bracket(
                    &SupNormProblem {
                        terms: terms.clone(),
                        q,
                        factor_bound: None,
                    },
                    &OptimizerOpts::default(),
                )
                .unwrap();
                assert!((b.lower - expect).abs() <= 1e-9 * expect.max(1.0));
                assert!(b.upper >= b.lower - 1e-12);
                assert!(b.upper - b.lower <= 1e-5 * expect.max(1.0));
            }
        }
    }

    #[test]
    fn sup_norm_rejects_non_psd() {
        let terms = vec![diag(&[1.0, -0.5])];
        assert!(matches!(
            sup_norm_bracket(
                &SupNormProblem {
                    terms,
                    q: 2.0,
                    factor_bound: None
                },
                &OptimizerOpts::default()
            ),
            Err(NcError::NotPsd { .. })
        ));
    }

    #[test]
    fn lp_c_mo_at_infinity_is_bmo_c() {
        let filt = quantum_filtration();
        let mart = random_martingale(&filt, 9, RandomOptions::default()).unwrap();
        let rep = lp_c_mo(&mart, f64::INFINITY, 0.5, &OptimizerOpts::default()).unwrap();
        assert_eq!(rep.value, bmo_c(&mart));
        assert!(matches!(
            lp_c_mo(&mart, 1.5, 0.5, &OptimizerOpts::default()),
            Err(NcError::BadExponent { .. })
        ));
    }

    #[test]
    fn bmo_p_of_identity() {
        let filt = quantum_filtration();
        let mart = decompose(&identity(4), &filt).unwrap();
        for &p in &[2.0, 4.0] {
            let rep = bmo_p(&mart, p, &OptimizerOpts::default()).unwrap();
            assert!((rep.value - 1.0).abs() <= 1e-6, "p={p} got {}", rep.value);
        }
    }

    #[test]
    fn bmo_p_seeded_left_inequality() {
        let filt = quantum_filtration();
        for seed in 0..5u64 {
            let mart = random_martingale(
                &filt,
                100 + seed,
                RandomOptions {
                    hermitian: false,
                    normalize: Normalize::Bmo,
                },
            )
            .unwrap();
            for &p in &[3.0, 6.0] {
                let rep = bmo_p(&mart, p, &OptimizerOpts::default()).unwrap();
                assert!(
                    rep.value >= bmo(&mart) - 1e-6,
                    "seed={seed} p={p}: {} < {}",
                    rep.value,
                    bmo(&mart)
                );
            }
        }
    }

    #[test]
    fn bmo_p_matches_classical_oracle() {
        let filt = classical_filtration(&[0.1, 0.2, 0.3, 0.4]);
        for seed in 0..4u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(40 + seed);
            let x = diag(
                &(0..4)
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect::<Vec<f64>>(),
            );
            let mart = decompose(&x, &filt).unwrap();
            for &p in &[2.0, 4.0] {
                let oracle = classical_bmo_p_oracle(&mart, p).unwrap();
                let rep = bmo_p_c(&mart, p, &OptimizerOpts::default()).unwrap();
                assert!(
                    (rep.value - oracle).abs() <= 1e-5 * oracle.max(1e-8),
                    "seed={seed} p={p}: optimizer {} vs oracle {oracle}",
                    rep.value
                );
            }
        }
    }

    #[test]
    fn oracle_rejects_noncommutative() {
        let filt = quantum_filtration();
        let mart = random_martingale(&filt, 3, RandomOptions::default()).unwrap();
        assert!(matches!(
            classical_bmo_p_oracle(&mart, 2.0),
            Err(NcError::NotCommutative { .. })
        ));
    }

    #[test]
    fn oracle_constant_and_two_point() {
        let filt = dyadic_classical_filtration(1, 1, &State::uniform(1)).unwrap();
        let x = diag(&[1.0, -1.0]);
        let mart = decompose(&x, &filt).unwrap();
        let v = classical_bmo_p_oracle(&mart, 2.0).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        let konst = decompose(&identity(2).scale(-2.5), &filt).unwrap();
        let v = classical_bmo_p_oracle(&konst, 3.0).unwrap();
        assert!((v - 2.5).abs() < 1e-12);
    }

    #[test]
    fn stein_projection_examples() {
        let filt = quantum_filtration();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        // adapted terms are fixed points
        let adapted: Vec<Matrix> = (0..=2)
            .map(|n| {
                let g = crate::randmat::gaussian(&mut rng, 4);
                filt.cond_exp(n).apply(&g)
            })
            .collect();
        let q = stein_projection(&adapted, &filt).unwrap();
        for (a, b) in adapted.iter().zip(q.iter()) {
            assert!((a - b).norm() <= 1e-9 * (1.0 + a.norm()));
        }
        assert!(matches!(
            stein_projection(&adapted[..2], &filt),
            Err(NcError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn stein_contraction_at_p2() {
        let filt = quantum_filtration();
        let state = filt.state();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10 {
            let terms: Vec<Matrix> = (0..=2)
                .map(|_| crate::randmat::gaussian(&mut rng, 4))
                .collect();
            let q = stein_projection(&terms, &filt).unwrap();
            for &eta in &[0.0, 0.5, 1.0] {
                let embed =
                    |zs: &[Matrix]| -> Vec<Matrix> {
                        zs.iter()
                            .map(|z| embed_lp(state, z, 2.0, eta).unwrap())
                            .collect()
                    };
                let num = lp_l2c_norm(&embed(&q), 2.0).unwrap();
                let den = lp_l2c_norm(&embed(&terms), 2.0).unwrap();
                assert!(num <= den * (1.0 + 1e-9), "eta={eta}: {num} vs {den}");
            }
        }
    }

    #[test]
    fn bmo_homogeneity_and_triangle() {
        let filt = quantum_filtration();
        let a = random_martingale(&filt, 31, RandomOptions::default()).unwrap();
        let b = random_martingale(&filt, 32, RandomOptions::default()).unwrap();
        let sum = decompose(&(a.limit() + b.limit()), &filt).unwrap();
        assert!(bmo(&sum) <= bmo(&a) + bmo(&b) + 1e-9);
        assert!((bmo(&a.scale(2.5)) - 2.5 * bmo(&a)).abs() <= 1e-9 * bmo(&a));
        for &p in &[2.0, 3.0] {
            let ha = hp_c(&a, p, 0.5).unwrap();
            let hb = hp_c(&b, p, 0.5).unwrap();
            let hs = hp_c(&sum, p, 0.5).unwrap();
            assert!(hs <= ha + hb + 1e-9);
        }
    }
}
