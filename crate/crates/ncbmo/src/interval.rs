//! Function-space (interval) layer: dyadic/shifted-dyadic covering with
//! exact rational endpoints, interval BMO norms for matrix-valued step
//! functions on [0,1], and the interval comparison inequality.

use num_complex::Complex64;
use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::ascent::{self, AscentOpts, Constraint, Objective};
use crate::error::{NcError, Result};
use crate::linalg::{
    herm_eig, hermitize, mat_power, matrix_unit, op_abs, op_norm, top_eigenprojection, zeros,
    Matrix,
};
use crate::norms::{NormReport, OptimizerOpts};

pub type Rational = Ratio<i128>;

pub fn rat(num: i128, den: i128) -> Rational {
    Ratio::new(num, den)
}

fn pow2(n: i32) -> Rational {
    if n >= 0 {
        Ratio::new(1i128 << n.min(100), 1)
    } else {
        Ratio::new(1, 1i128 << (-n).min(100))
    }
}

/// Closed interval [left, left + length] with exact rational endpoints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RInterval {
    pub left: Rational,
    pub length: Rational,
}

impl RInterval {
    pub fn new(left: Rational, length: Rational) -> Result<RInterval> {
        if length <= Rational::zero() {
            return Err(NcError::BadSpec("interval length must be positive".into()));
        }
        Ok(RInterval { left, length })
    }

    pub fn right(&self) -> Rational {
        self.left + self.length
    }

    pub fn contains_interval(&self, other: &RInterval) -> bool {
        self.left <= other.left && other.right() <= self.right()
    }
}

#[derive(Debug, Clone)]
pub struct Covering {
    pub interval: RInterval,
    /// True when the covering interval comes from the 1/(3*2^n)-shifted grid.
    pub shifted: bool,
    /// Dyadic scale: |J| = 2^{-scale}.
    pub scale: i32,
}

/// The covering lemma: every interval I is contained in a plain or shifted
/// dyadic interval J with |J| <= 6 |I|. The scan runs over all scales with
/// 2^{-n} in [|I|, 6|I|] in both grids and returns the smallest admissible
/// J, preferring the plain grid on ties.
pub fn covering_dyadic(i: &RInterval) -> Covering {
    let len = i.length;
    let approx = len.to_f64().expect("rational fits in f64");
    // scan window around -log2 of the length; exact comparisons decide
    let hi = (-approx.log2()).ceil() as i32 + 2;
    let lo = (-(6.0 * approx).log2()).floor() as i32 - 2;
    for n in (lo..=hi).rev() {
        if n.abs() > 100 {
            continue;
        }
        let cell = pow2(-n);
        if cell < len || cell > len * Ratio::new(6, 1) {
            continue;
        }
        for (shifted, shift) in [(false, Rational::zero()), (true, pow2(-n) / Ratio::new(3, 1))] {
            let k = ((i.left - shift) / cell).floor().to_integer();
            let left = shift + cell * Ratio::new(k, 1);
            let j = RInterval { left, length: cell };
            if j.contains_interval(i) {
                return Covering {
                    interval: j,
                    shifted,
                    scale: n,
                };
            }
        }
    }
    // the lemma guarantees existence inside the scanned window
    unreachable!("covering scan failed for {:?}: defect", i)
}

/// Matrix-valued step function on [0,1] with 2^depth dyadic cells.
#[derive(Debug, Clone)]
pub struct StepFunction {
    depth: usize,
    fiber: usize,
    values: Vec<Matrix>,
}

impl StepFunction {
    pub fn new(depth: usize, values: Vec<Matrix>) -> Result<StepFunction> {
        let cells = 1usize << depth;
        if values.len() != cells {
            return Err(NcError::DimensionMismatch {
                expected: cells,
                got: values.len(),
            });
        }
        let fiber = values.first().map(|v| v.nrows()).unwrap_or(0);
        for v in &values {
            if v.nrows() != fiber || v.ncols() != fiber {
                return Err(NcError::DimensionMismatch {
                    expected: fiber,
                    got: v.nrows(),
                });
            }
            if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(NcError::BadSpec("non-finite step function entry".into()));
            }
        }
        Ok(StepFunction {
            depth,
            fiber,
            values,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn cells(&self) -> usize {
        1usize << self.depth
    }

    pub fn fiber(&self) -> usize {
        self.fiber
    }

    pub fn value(&self, cell: usize) -> &Matrix {
        &self.values[cell]
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub fn adjoint(&self) -> StepFunction {
        StepFunction {
            depth: self.depth,
            fiber: self.fiber,
            values: self.values.iter().map(|v| v.adjoint()).collect(),
        }
    }

    /// Average over the cell range [a, b).
    pub fn mean(&self, a: usize, b: usize) -> Matrix {
        let mut m = zeros(self.fiber);
        for c in a..b {
            m += &self.values[c];
        }
        m.scale(1.0 / (b - a) as f64)
    }
}

/// All grid-aligned subintervals [a, b), 0 <= a < b <= cells.
fn grid_ranges(cells: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for a in 0..cells {
        for b in (a + 1)..=cells {
            out.push((a, b));
        }
    }
    out
}

fn deviation_square(f: &StepFunction, a: usize, b: usize, row: bool) -> Matrix {
    let mean = f.mean(a, b);
    let mut acc = zeros(f.fiber());
    for c in a..b {
        let d = f.value(c) - &mean;
        acc += if row { &d * d.adjoint() } else { d.adjoint() * &d };
    }
    hermitize(&acc.scale(1.0 / (b - a) as f64))
}

/// The displayed interval BMO_c quantity: sup over grid-aligned I of
/// || avg_I (x - x_I)*(x - x_I) ||. Note this is the square of a deviation;
/// `interval_bmo_c_sqrt` returns its square root.
pub fn interval_bmo_c(f: &StepFunction) -> f64 {
    grid_ranges(f.cells())
        .into_iter()
        .map(|(a, b)| op_norm(&deviation_square(f, a, b, false)))
        .fold(0.0, f64::max)
}

pub fn interval_bmo_c_sqrt(f: &StepFunction) -> f64 {
    interval_bmo_c(f).sqrt()
}

/// max of the column quantity for x and x*.
pub fn interval_bmo(f: &StepFunction) -> f64 {
    interval_bmo_c(f).max(interval_bmo_c(&f.adjoint()))
}

/// Column quantity restricted to dyadic cells (the bridge to the dyadic
/// martingale model).
pub fn interval_bmo_c_dyadic(f: &StepFunction) -> f64 {
    let mut best = 0.0f64;
    for j in 0..=f.depth() {
        let width = f.cells() >> j;
        for c in 0..(1usize << j) {
            let v = op_norm(&deviation_square(f, c * width, (c + 1) * width, false));
            best = best.max(v);
        }
    }
    best
}

/// Lower bound for the conditioned L_p deviation norm on one grid range:
/// sup over constant multipliers a with Schatten-p norm one of
/// ( avg_{cells in I} ||(x(t) - x_I) a||_p^p )^{1/p}.
pub fn interval_lp_deviation_lower(
    f: &StepFunction,
    range: (usize, usize),
    p: f64,
    opts: &OptimizerOpts,
) -> Result<NormReport> {
    if !(p.is_finite() && p >= 2.0) {
        return Err(NcError::BadExponent {
            module: "interval",
            p,
            min: 2.0,
        });
    }
    let (a, b) = range;
    assert!(a < b && b <= f.cells(), "grid range out of bounds");
    let k = f.fiber();
    let mean = f.mean(a, b);
    let w = 1.0 / (b - a) as f64;
    let mut terms: Vec<(f64, Matrix)> = Vec::with_capacity(b - a);
    let mut qbar = zeros(k);
    let mut qpbar = zeros(k);
    for c in a..b {
        let d = f.value(c) - &mean;
        let q = hermitize(&(d.adjoint() * &d));
        qbar += q.scale(w);
        qpbar += mat_power(&op_abs(&d), p)?.scale(w);
        terms.push((w, q));
    }
    let frame: Vec<Matrix> = (0..k)
        .flat_map(|i| (0..k).map(move |j| matrix_unit(k, i, j)))
        .collect();
    let coords = |m: &Matrix| -> Vec<Complex64> {
        let mut v = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k {
                v.push(m[(i, j)]);
            }
        }
        v
    };
    let seeds = vec![
        coords(&top_eigenprojection(&qbar, 1e-10)?.matrix),
        coords(&top_eigenprojection(&hermitize(&qpbar), 1e-10)?.matrix),
        coords(&crate::linalg::identity(k)),
    ];
    let obj = Objective {
        frame: &frame,
        terms: &terms,
        p,
    };
    let res = ascent::maximize(
        &obj,
        &seeds,
        &Constraint::Free,
        &AscentOpts {
            restarts: opts.restarts,
            max_iter: opts.max_iter,
            seed: opts.seed ^ ((a as u64) << 32 | b as u64),
            ..AscentOpts::default()
        },
    )?;
    Ok(NormReport {
        name: "interval_lp_deviation".into(),
        value: res.value,
        upper_bound: None,
        witness: Some(res.witness),
        witness_pair: Some((a, b)),
        iterations: res.iterations,
        restarts: opts.restarts,
        converged: res.converged,
    })
}

/// sup over all grid-aligned subintervals of the conditioned L_p deviation
/// lower bound.
pub fn interval_bmo_p_lower(f: &StepFunction, p: f64, opts: &OptimizerOpts) -> Result<NormReport> {
    let mut best: Option<NormReport> = None;
    for range in grid_ranges(f.cells()) {
        let rep = interval_lp_deviation_lower(f, range, p, opts)?;
        let better = match &best {
            Some(b) => rep.value > b.value,
            None => true,
        };
        if better {
            best = Some(rep);
        }
    }
    let mut rep = best.expect("at least one grid range");
    rep.name = "interval_bmo_p_lower".into();
    Ok(rep)
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ComparisonRow {
    pub inner: (usize, usize),
    pub outer: (usize, usize),
    pub lhs: f64,
    pub rhs_amplified: f64,
    pub violation: bool,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub violations: usize,
}

/// The interval comparison inequality ||x||_{p,I} <= 2 (|J|/|I|)^{1/p} ||x||_{p,J}
/// on supplied nested grid ranges, evaluated with the same ascent engine on
/// both sides; discrepancies beyond 1e-5 relative are flagged.
pub fn interval_comparison_check(
    f: &StepFunction,
    p: f64,
    pairs: &[((usize, usize), (usize, usize))],
    opts: &OptimizerOpts,
) -> Result<ComparisonReport> {
    let mut cache: std::collections::BTreeMap<(usize, usize), f64> = Default::default();
    let mut lower = |range: (usize, usize)| -> Result<f64> {
        if let Some(&v) = cache.get(&range) {
            return Ok(v);
        }
        let v = interval_lp_deviation_lower(f, range, p, opts)?.value;
        cache.insert(range, v);
        Ok(v)
    };
    let mut rows = Vec::with_capacity(pairs.len());
    let mut violations = 0usize;
    for &(inner, outer) in pairs {
        if !(outer.0 <= inner.0 && inner.1 <= outer.1) {
            return Err(NcError::NotNested);
        }
        let lhs = lower(inner)?;
        let ratio = (outer.1 - outer.0) as f64 / (inner.1 - inner.0) as f64;
        let rhs = 2.0 * ratio.powf(1.0 / p) * lower(outer)?;
        let violation = lhs > rhs * (1.0 + 1e-5) + 1e-12;
        if violation {
            violations += 1;
        }
        rows.push(ComparisonRow {
            inner,
            outer,
            lhs,
            rhs_amplified: rhs,
            violation,
        });
    }
    Ok(ComparisonReport { rows, violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, cr, diag, from_rows};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn covering_already_dyadic() {
        let i = RInterval::new(rat(0, 1), rat(1, 2)).unwrap();
        let cov = covering_dyadic(&i);
        assert_eq!(cov.interval, i);
        assert!(!cov.shifted);
    }

    #[test]
    fn covering_straddling_half() {
        let i = RInterval::new(rat(2, 5), rat(1, 5)).unwrap();
        let cov = covering_dyadic(&i);
        assert!(cov.interval.contains_interval(&i));
        assert!(cov.interval.length <= i.length * rat(6, 1));
    }

    #[test]
    fn covering_random_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..2000 {
            let den = rng.gen_range(1..=4096i128);
            let num = rng.gen_range(0..den);
            let len_den = rng.gen_range(2..=4096i128);
            let len_num = rng.gen_range(1..=len_den.min(den - num).max(1));
            let i = RInterval::new(Ratio::new(num, den), Ratio::new(len_num, len_den)).unwrap();
            let cov = covering_dyadic(&i);
            assert!(cov.interval.contains_interval(&i), "{i:?} -> {cov:?}");
            assert!(
                cov.interval.length <= i.length * rat(6, 1),
                "{i:?} -> {cov:?}"
            );
        }
    }

    fn two_cell(v0: Matrix, v1: Matrix) -> StepFunction {
        StepFunction::new(1, vec![v0, v1]).unwrap()
    }

    #[test]
    fn interval_bmo_constant_is_zero() {
        let f = two_cell(diag(&[1.0, 2.0]), diag(&[1.0, 2.0]));
        assert_eq!(interval_bmo(&f), 0.0);
    }

    #[test]
    fn interval_bmo_rademacher_times_matrix() {
        // f = r_1 (x) v: deviation over [0,1] is v*v; zero on each half
        let v = from_rows(2, &[cr(1.0), c(0.0, 2.0), cr(0.0), cr(1.0)]);
        let f = two_cell(v.clone(), v.scale(-1.0));
        let expect = op_norm(&(v.adjoint() * &v));
        assert!((interval_bmo_c(&f) - expect).abs() < 1e-12);
        assert!((interval_bmo_c_sqrt(&f) - expect.sqrt()).abs() < 1e-12);
        // halves have zero deviation
        assert_eq!(op_norm(&deviation_square(&f, 0, 1, false)), 0.0);
    }

    #[test]
    fn interval_bmo_scalar_classical() {
        // scalar step function: interval BMO^2 over grid ranges by brute force
        let vals = [0.3f64, -1.0, 2.0, 0.5];
        let f = StepFunction::new(
            2,
            vals.iter().map(|&v| diag(&[v])).collect(),
        )
        .unwrap();
        let mut expect = 0.0f64;
        for a in 0..4 {
            for b in (a + 1)..=4 {
                let mean: f64 = vals[a..b].iter().sum::<f64>() / (b - a) as f64;
                let dev: f64 =
                    vals[a..b].iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - a) as f64;
                expect = expect.max(dev);
            }
        }
        assert!((interval_bmo_c(&f) - expect).abs() < 1e-12);
    }

    #[test]
    fn interval_relabel_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let values: Vec<Matrix> = (0..4).map(|_| crate::randmat::gaussian(&mut rng, 2)).collect();
        let f = StepFunction::new(2, values.clone()).unwrap();
        let reversed = StepFunction::new(2, values.into_iter().rev().collect()).unwrap();
        assert!((interval_bmo(&f) - interval_bmo(&reversed)).abs() < 1e-12);
    }

    #[test]
    fn deviation_lower_p2_is_hilbert_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let values: Vec<Matrix> = (0..4).map(|_| crate::randmat::gaussian(&mut rng, 2)).collect();
        let f = StepFunction::new(2, values).unwrap();
        let rep =
            interval_lp_deviation_lower(&f, (0, 4), 2.0, &OptimizerOpts::default()).unwrap();
        // p = 2: the optimum is the top eigenvalue of the averaged square
        let direct = op_norm(&deviation_square(&f, 0, 4, false)).sqrt();
        assert!(
            (rep.value - direct).abs() <= 1e-6 * direct.max(1.0),
            "{} vs {direct}",
            rep.value
        );
    }

    #[test]
    fn deviation_lower_scalar_matches_bruteforce() {
        let vals = [1.0f64, -0.5, 0.25, 2.0];
        let f = StepFunction::new(
            2,
            vals.iter().map(|&v| diag(&[v])).collect(),
        )
        .unwrap();
        for &p in &[2.0, 3.0, 4.0] {
            for (a, b) in [(0usize, 4usize), (1, 3), (0, 2)] {
                let mean: f64 = vals[a..b].iter().sum::<f64>() / (b - a) as f64;
                let expect = (vals[a..b]
                    .iter()
                    .map(|v| (v - mean).abs().powf(p))
                    .sum::<f64>()
                    / (b - a) as f64)
                    .powf(1.0 / p);
                let rep = interval_lp_deviation_lower(&f, (a, b), p, &OptimizerOpts::default())
                    .unwrap();
                assert!(
                    (rep.value - expect).abs() <= 1e-7 * expect.max(1.0),
                    "p={p} range=({a},{b}): {} vs {expect}",
                    rep.value
                );
            }
        }
    }

    #[test]
    fn interval_constant_has_zero_bmo_p() {
        let f = two_cell(diag(&[1.0, -1.0]), diag(&[1.0, -1.0]));
        let rep = interval_bmo_p_lower(&f, 2.0, &OptimizerOpts::default()).unwrap();
        assert!(rep.value < 1e-9);
    }

    #[test]
    fn comparison_check_trivial_and_nested() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let values: Vec<Matrix> = (0..4).map(|_| crate::randmat::gaussian(&mut rng, 2)).collect();
        let f = StepFunction::new(2, values).unwrap();
        // I = J gives the trivial factor-2 bound
        let rep = interval_comparison_check(
            &f,
            3.0,
            &[((1, 3), (1, 3)), ((1, 2), (0, 4)), ((2, 4), (0, 4))],
            &OptimizerOpts::default(),
        )
        .unwrap();
        assert_eq!(rep.violations, 0, "{:?}", rep.rows);
        assert!(matches!(
            interval_comparison_check(&f, 3.0, &[((0, 3), (1, 4))], &OptimizerOpts::default()),
            Err(NcError::NotNested)
        ));
    }
}
