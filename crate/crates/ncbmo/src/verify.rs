//! Theorem harness: the John-Nirenberg sandwich, the BMO-into-L_p
//! inclusion, change of state, large-deviation projections, L_exp
//! membership, Kadison/Stein property suites, the row/column
//! counterexample, and empirical constant fitting.

use std::f64::consts::E;
use std::sync::Arc;

use serde::Serialize;

use crate::algebra::{
    block_subalgebra, lp_norm, subalgebra_from_span, validate_filtration, Filtration, State,
    Subalgebra, TopLevel,
};
use crate::error::{NcError, Result};
use crate::linalg::{
    diag, from_rows, herm_eig, hermitize, identity, kron, matrix_unit, op_abs, op_norm,
    schatten_norm, spectral_projection, zeros, cr, mat_power, Matrix, Projection,
};
use crate::martingale::{
    classical_partition_filtration, compressed_rademacher, decompose, random_martingale,
    Martingale, Normalize, RandomOptions, SignConvention,
};
use crate::norms::{
    bmo, bmo_c, classical_bmo_p_oracle, bmo_p, lp_c_mo, lp_l2c_norm, stein_projection,
    OptimizerOpts,
};

/// Configuration shared by the verification suites. The constants are
/// recorded assertions, not paper values: the paper only states that
/// universal constants exist.
#[derive(Debug, Clone, Serialize)]
pub struct VerifyConfig {
    pub p_list: Vec<f64>,
    pub ensemble_size: usize,
    pub seed: u64,
    /// Asserted constant for the right John-Nirenberg inequality.
    pub c_jn: f64,
    /// Large-deviation rate; fitted when absent.
    pub c1: Option<f64>,
    /// Large-deviation prefactor (the proof uses e).
    pub c2: f64,
    /// Kosaki split for the embeddings.
    pub eta: f64,
    pub restarts: usize,
    pub max_iter: usize,
    pub positive_witness: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            p_list: vec![3.0, 4.0, 6.0, 8.0, 12.0],
            ensemble_size: 24,
            seed: 7,
            c_jn: 16.0,
            c1: None,
            c2: E,
            eta: 0.5,
            restarts: 8,
            max_iter: 300,
            positive_witness: false,
        }
    }
}

impl VerifyConfig {
    pub fn opts(&self, seed_salt: u64) -> OptimizerOpts {
        OptimizerOpts {
            restarts: self.restarts,
            max_iter: self.max_iter,
            seed: self.seed.wrapping_mul(0x2545F4914F6CDD1D).wrapping_add(seed_salt),
            positive_witness: self.positive_witness,
        }
    }
}

// ---------------------------------------------------------------------------
// Filtration catalog
// ---------------------------------------------------------------------------

#[derive(Clone)]
pub struct CatalogEntry {
    pub name: String,
    pub filt: Arc<Filtration>,
    /// All levels and the density are diagonal.
    pub classical: bool,
    /// The density is the normalized trace.
    pub tracial: bool,
}

fn rotated_density(weights: &[f64; 2], theta: f64) -> State {
    let u = from_rows(
        2,
        &[
            cr(theta.cos()),
            cr(-theta.sin()),
            cr(theta.sin()),
            cr(theta.cos()),
        ],
    );
    State::new(&u * diag(weights) * u.adjoint()).expect("rotated qubit density")
}

/// Deterministic family of desk-scale filtrations: classical chains,
/// quantum tensor chains, and a mixed chain. Dimensions are at most 16.
pub fn filtration_catalog() -> Vec<CatalogEntry> {
    let mut out = Vec::new();

    out.push(CatalogEntry {
        name: "classical-2".into(),
        filt: classical_partition_filtration(&[0.3, 0.7], &[vec![2], vec![1, 1]])
            .expect("classical-2"),
        classical: true,
        tracial: false,
    });

    out.push(CatalogEntry {
        name: "classical-4".into(),
        filt: classical_partition_filtration(
            &[0.1, 0.2, 0.3, 0.4],
            &[vec![4], vec![2, 2], vec![1; 4]],
        )
        .expect("classical-4"),
        classical: true,
        tracial: false,
    });

    out.push(CatalogEntry {
        name: "dyadic-8u".into(),
        filt: classical_partition_filtration(
            &[0.125; 8],
            &[vec![8], vec![4, 4], vec![2; 4], vec![1; 8]],
        )
        .expect("dyadic-8u"),
        classical: true,
        tracial: true,
    });

    out.push(CatalogEntry {
        name: "dyadic-16u".into(),
        filt: classical_partition_filtration(
            &[1.0 / 16.0; 16],
            &[vec![16], vec![8, 8], vec![4; 4], vec![2; 8], vec![1; 16]],
        )
        .expect("dyadic-16u"),
        classical: true,
        tracial: true,
    });

    let d2 = rotated_density(&[0.2, 0.8], 0.7);
    let state4 = State::diagonal(&[0.25, 0.75]).unwrap().tensor(&d2);
    out.push(CatalogEntry {
        name: "quantum-4".into(),
        filt: Arc::new(
            validate_filtration(
                state4,
                vec![
                    block_subalgebra(&[(1, 4)]).unwrap(),
                    block_subalgebra(&[(2, 2)]).unwrap(),
                    block_subalgebra(&[(4, 1)]).unwrap(),
                ],
            )
            .expect("quantum-4"),
        ),
        classical: false,
        tracial: false,
    });

    let state8 = State::diagonal(&[0.3, 0.7])
        .unwrap()
        .tensor(&rotated_density(&[0.35, 0.65], 0.5))
        .tensor(&State::diagonal(&[0.45, 0.55]).unwrap());
    out.push(CatalogEntry {
        name: "quantum-8".into(),
        filt: Arc::new(
            validate_filtration(
                state8,
                vec![
                    block_subalgebra(&[(1, 8)]).unwrap(),
                    block_subalgebra(&[(2, 4)]).unwrap(),
                    block_subalgebra(&[(4, 2)]).unwrap(),
                    block_subalgebra(&[(8, 1)]).unwrap(),
                ],
            )
            .expect("quantum-8"),
        ),
        classical: false,
        tracial: false,
    });

    // diag(2) x 1 in M_2 x 1 in M_2 x diag(2) in M_4
    let mid: Vec<Matrix> = (0..2)
        .flat_map(|i| {
            (0..2).flat_map(move |j| {
                (0..2).map(move |k| kron(&matrix_unit(2, i, j), &matrix_unit(2, k, k)))
            })
        })
        .collect();
    let state_mixed = State::diagonal(&[0.2, 0.8])
        .unwrap()
        .tensor(&State::diagonal(&[0.4, 0.6]).unwrap());
    out.push(CatalogEntry {
        name: "mixed-4".into(),
        filt: Arc::new(
            validate_filtration(
                state_mixed,
                vec![
                    block_subalgebra(&[(1, 2), (1, 2)]).unwrap(),
                    block_subalgebra(&[(2, 2)]).unwrap(),
                    subalgebra_from_span(4, &mid),
                    block_subalgebra(&[(4, 1)]).unwrap(),
                ],
            )
            .expect("mixed-4"),
        ),
        classical: false,
        tracial: false,
    });

    let state16 = State::diagonal(&[0.3, 0.7])
        .unwrap()
        .tensor(&State::diagonal(&[0.25, 0.75]).unwrap())
        .tensor(&State::diagonal(&[0.4, 0.6]).unwrap())
        .tensor(&State::diagonal(&[0.35, 0.65]).unwrap());
    out.push(CatalogEntry {
        name: "quantum-16".into(),
        filt: Arc::new(
            validate_filtration(
                state16,
                vec![
                    block_subalgebra(&[(1, 16)]).unwrap(),
                    block_subalgebra(&[(2, 8)]).unwrap(),
                    block_subalgebra(&[(4, 4)]).unwrap(),
                    block_subalgebra(&[(16, 1)]).unwrap(),
                ],
            )
            .expect("quantum-16"),
        ),
        classical: false,
        tracial: false,
    });

    out
}

fn ensemble_martingale(entry: &CatalogEntry, seed: u64, hermitian: bool) -> Result<Martingale> {
    random_martingale(
        &entry.filt,
        seed,
        RandomOptions {
            hermitian,
            normalize: Normalize::Bmo,
        },
    )
}

// ---------------------------------------------------------------------------
// Constant fitting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    /// max over samples of ratio / p.
    pub c_hat: f64,
    /// Slope of log(max ratio per p) against log p; absent with fewer than
    /// two distinct exponents.
    pub growth_slope: Option<f64>,
    pub per_p_max: Vec<(f64, f64)>,
}

/// Fit the growth of ratio = value/bmo samples against p.
pub fn fit_constant(samples: &[(f64, f64)]) -> Result<FitResult> {
    if samples.is_empty() {
        return Err(NcError::EmptyStream);
    }
    let c_hat = samples
        .iter()
        .map(|&(p, r)| r / p)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut per_p: Vec<(f64, f64)> = Vec::new();
    for &(p, r) in samples {
        match per_p.iter_mut().find(|(q, _)| (*q - p).abs() < 1e-12) {
            Some((_, m)) => *m = m.max(r),
            None => per_p.push((p, r)),
        }
    }
    per_p.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let growth_slope = if per_p.len() >= 2 {
        let pts: Vec<(f64, f64)> = per_p
            .iter()
            .filter(|(_, r)| *r > 0.0)
            .map(|&(p, r)| (p.ln(), r.ln()))
            .collect();
        if pts.len() >= 2 {
            let n = pts.len() as f64;
            let sx: f64 = pts.iter().map(|p| p.0).sum();
            let sy: f64 = pts.iter().map(|p| p.1).sum();
            let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
            let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
            Some((n * sxy - sx * sy) / (n * sxx - sx * sx))
        } else {
            None
        }
    } else {
        None
    };
    Ok(FitResult {
        c_hat,
        growth_slope,
        per_p_max: per_p,
    })
}

// ---------------------------------------------------------------------------
// John-Nirenberg
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct JnRecord {
    pub sample: usize,
    pub filtration: String,
    pub p: f64,
    pub bmo: f64,
    pub bmo_p_lower: f64,
    /// bmo_p_lower / (p * bmo).
    pub ratio: f64,
    pub left_ok: bool,
    pub right_ok: bool,
    /// Oracle value on commutative instances.
    pub oracle: Option<f64>,
}

/// Both John-Nirenberg inequalities for one martingale across the p-list.
pub fn check_jn(
    mart: &Martingale,
    label: &str,
    sample: usize,
    classical: bool,
    config: &VerifyConfig,
) -> Result<Vec<JnRecord>> {
    let b = bmo(mart);
    let mut out = Vec::with_capacity(config.p_list.len());
    for (pi, &p) in config.p_list.iter().enumerate() {
        let rep = bmo_p(mart, p, &config.opts((sample as u64) << 8 | pi as u64))?;
        let oracle = if classical {
            let col = classical_bmo_p_oracle(mart, p)?;
            let row = classical_bmo_p_oracle(&mart.adjoint(), p)?;
            Some(col.max(row))
        } else {
            None
        };
        let ratio = rep.value / (p * b.max(1e-300));
        out.push(JnRecord {
            sample,
            filtration: label.to_string(),
            p,
            bmo: b,
            bmo_p_lower: rep.value,
            ratio,
            left_ok: rep.value >= b - 1e-6,
            right_ok: rep.value <= config.c_jn * p * b + 1e-9,
            oracle,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct JnSuite {
    pub records: Vec<JnRecord>,
    pub fit: FitResult,
    pub pass: bool,
}

/// Random bmo-normalized ensemble across the catalog.
pub fn jn_suite(config: &VerifyConfig) -> Result<JnSuite> {
    let catalog = filtration_catalog();
    let mut records = Vec::new();
    for s in 0..config.ensemble_size {
        let entry = &catalog[s % catalog.len()];
        let mart = ensemble_martingale(entry, config.seed.wrapping_add(1000 + s as u64), s % 3 == 0)?;
        records.extend(check_jn(&mart, &entry.name, s, entry.classical, config)?);
    }
    let samples: Vec<(f64, f64)> = records.iter().map(|r| (r.p, r.bmo_p_lower / r.bmo)).collect();
    let fit = fit_constant(&samples)?;
    let pass = records.iter().all(|r| r.left_ok && r.right_ok)
        && fit.growth_slope.map(|s| s <= 1.15).unwrap_or(true);
    Ok(JnSuite { records, fit, pass })
}

// ---------------------------------------------------------------------------
// BMO into L_p
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct InclusionRecord {
    pub sample: usize,
    pub filtration: String,
    pub p: f64,
    pub eta: f64,
    pub lp: f64,
    pub bmo: f64,
    /// lp / (p * bmo).
    pub ratio: f64,
    pub ok: bool,
    /// lp_c_mo(x, p) / lp on the symmetric split, recorded for p > 4.
    pub lpcmo_over_lp: Option<f64>,
}

/// The inclusion || D^{(1-eta)/p} x D^{eta/p} ||_p <= bound * p * ||x||_BMO
/// over eta in {0, 1/2, 1}.
pub fn check_bmo_in_lp(
    mart: &Martingale,
    label: &str,
    sample: usize,
    config: &VerifyConfig,
    bound: f64,
) -> Result<Vec<InclusionRecord>> {
    let b = bmo(mart);
    let state = mart.state();
    let mut out = Vec::new();
    for &p in &config.p_list {
        for &eta in &[0.0, 0.5, 1.0] {
            let lp = lp_norm(state, mart.limit(), p, eta)?;
            let lpcmo_over_lp = if eta == 0.5 && p > 4.0 && p.is_finite() {
                let rep = lp_c_mo(mart, p, eta, &config.opts(0x10c0 + sample as u64))?;
                Some(rep.value / lp.max(1e-300))
            } else {
                None
            };
            out.push(InclusionRecord {
                sample,
                filtration: label.to_string(),
                p,
                eta,
                lp,
                bmo: b,
                ratio: lp / (p * b.max(1e-300)),
                ok: lp <= bound * p * b + 1e-9,
                lpcmo_over_lp,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct InclusionSuite {
    pub records: Vec<InclusionRecord>,
    pub max_ratio: f64,
    pub pass: bool,
}

pub fn inclusion_suite(config: &VerifyConfig, bound: f64) -> Result<InclusionSuite> {
    let catalog = filtration_catalog();
    let mut records = Vec::new();
    for s in 0..config.ensemble_size {
        let entry = &catalog[s % catalog.len()];
        let mart = ensemble_martingale(entry, config.seed.wrapping_add(2000 + s as u64), s % 3 == 1)?;
        records.extend(check_bmo_in_lp(&mart, &entry.name, s, config, bound)?);
    }
    let max_ratio = records.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let pass = records.iter().all(|r| r.ok);
    Ok(InclusionSuite {
        records,
        max_ratio,
        pass,
    })
}

// ---------------------------------------------------------------------------
// Change of state
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ChangeOfStateReport {
    pub level: usize,
    pub p: f64,
    /// ||(x - x_{n-1}) a||_p with ||a||_p = 1.
    pub lhs: f64,
    pub bound: f64,
    pub ok: bool,
    /// Worst residual of the rebuilt conditional expectations against the
    /// original E_{n+k}.
    pub structural_residual: f64,
    /// Classical change-of-measure identity residual (diagonal instances).
    pub newmeas_residual: Option<f64>,
}

/// Corollary-style change of state: verify the multiplier inequality and
/// rebuild the shifted filtration under phi_a(x) = tr(a^p x), confirming
/// that its conditional expectations are the original ones.
pub fn check_change_of_state(
    mart: &Martingale,
    n: usize,
    a: &Matrix,
    p: f64,
    config: &VerifyConfig,
) -> Result<ChangeOfStateReport> {
    let filt = mart.filtration();
    let state = mart.state();
    // the multiplier must be a positive element of the L_p(N_n) model
    let ah = hermitize(a);
    let eig = herm_eig(&ah)?;
    let min = eig.eigenvalues.first().cloned().unwrap_or(0.0);
    let scale = eig.eigenvalues.iter().fold(1.0f64, |x, &y| x.max(y.abs()));
    if (a - &ah).norm() > 1e-8 * f64::max(1.0, a.norm()) || min < -1e-9 * scale {
        return Err(NcError::BadWitness {
            residual: (-min).max((a - &ah).norm()),
        });
    }
    let dneg = state.power(-0.5 / p);
    let c_rec = &dneg * &ah * &dneg;
    let res = filt.levels()[n].membership_residual(&c_rec) / f64::max(1.0, c_rec.norm());
    if res > 1e-8 {
        return Err(NcError::BadWitness { residual: res });
    }
    let a_unit = ah.scale(1.0 / schatten_norm(&ah, p)?);

    let y = mart.window(n, mart.top());
    let lhs = schatten_norm(&(&y * &a_unit), p)?;
    let b = bmo(mart);
    let bound = config.c_jn * p * b;

    // regularized density a^p + eps D, normalized
    let rho = mat_power(&a_unit, p)? + state.density().scale(1e-8);
    let rho = rho.scale(1.0 / rho.trace().re);
    let new_state = State::new(rho)?;
    let shifted: Vec<Subalgebra> = filt.levels()[n..].to_vec();
    let shifted_filt = Filtration::validate_with(new_state, shifted, TopLevel::AnySubalgebra)?;
    let mut structural_residual = 0.0f64;
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(config.seed ^ 0xC05);
    for _ in 0..5 {
        let x = crate::randmat::gaussian(&mut rng, filt.dim());
        for k in 0..=shifted_filt.top() {
            let lhs_e = shifted_filt.cond_exp(k).apply(&x);
            let rhs_e = filt.cond_exp(n + k).apply(&x);
            structural_residual = structural_residual
                .max((lhs_e - rhs_e).norm() / f64::max(1.0, x.norm()));
        }
    }

    // classical identity ||y a||_p^p = sum_i rho_i |y_i|^p on diagonal data
    let diagonal = crate::linalg::is_diagonal(&y, 1e-10)
        && crate::linalg::is_diagonal(&a_unit, 1e-10)
        && crate::linalg::is_diagonal(state.density(), 1e-10);
    let newmeas_residual = if diagonal {
        let apow = mat_power(&a_unit, p)?;
        let mut sum = 0.0;
        for i in 0..filt.dim() {
            sum += apow[(i, i)].re * y[(i, i)].norm().powf(p);
        }
        Some((lhs.powf(p) - sum).abs() / f64::max(1.0, sum))
    } else {
        None
    };

    Ok(ChangeOfStateReport {
        level: n,
        p,
        lhs,
        bound,
        ok: lhs <= bound + 1e-9,
        structural_residual,
        newmeas_residual,
    })
}

/// Sampled change-of-state sweep across the catalog; includes the trivial
/// multiplier a = D^{1/p} for each instance.
pub fn change_of_state_suite(config: &VerifyConfig) -> Result<Vec<ChangeOfStateReport>> {
    use rand::SeedableRng;
    let catalog = filtration_catalog();
    let mut out = Vec::new();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed ^ 0xC0DE);
    for (ci, entry) in catalog.iter().enumerate() {
        let filt = &entry.filt;
        let mart = ensemble_martingale(entry, config.seed.wrapping_add(3000 + ci as u64), false)?;
        for &p in &[2.0, 4.0] {
            for n in 0..=filt.top().min(1) {
                // trivial multiplier
                let a0 = filt.state().power(1.0 / p);
                out.push(check_change_of_state(&mart, n, &a0, p, config)?);
                // random positive multiplier in the model subspace
                let c_psd = {
                    let g = crate::randmat::gaussian(&mut rng, filt.dim());
                    let proj = filt.levels()[n].project(&(&g * g.adjoint()));
                    let h = hermitize(&proj);
                    let eig = herm_eig(&h)?;
                    eig.apply(|l| l.max(0.01))
                };
                let dh = filt.state().power(0.5 / p);
                let a = &dh * &c_psd * &dh;
                out.push(check_change_of_state(&mart, n, &a, p, config)?);
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Large deviation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct LargeDevOutcome {
    pub projection: Projection,
    pub tail: f64,
    pub bound: f64,
    pub pass: bool,
    /// ||(x - x_0) f|| - t; nonpositive by spectral calculus.
    pub norm_slack: f64,
    /// Proof-schedule diagnostics: eps = exp(-t c1) and p = 4 ln(1/eps).
    pub eps: f64,
    pub p_schedule: f64,
}

/// Spectral large-deviation witness: f projects onto the spectrum of
/// |x - x_0| below t, which enforces ||(x - x_0) f|| <= t unconditionally;
/// the exponential tail bound phi(1 - f) < c2 exp(-t c1) is then tested.
pub fn large_deviation(mart: &Martingale, t: f64, config: &VerifyConfig) -> Result<LargeDevOutcome> {
    let b = bmo(mart);
    let mart_scaled;
    let mart = if b > 1.0 + 1e-12 {
        mart_scaled = mart.scale(1.0 / b);
        &mart_scaled
    } else {
        mart
    };
    let y = mart.limit() - mart.adapted(0);
    let absy = op_abs(&y);
    let f = spectral_projection(&absy, f64::NEG_INFINITY, t)?;
    let tail = (identity(mart.filtration().dim()) - &f.matrix)
        .iter()
        .zip(mart.state().density().iter())
        .map(|(a, d)| (d.conj() * a).re)
        .sum::<f64>();
    let norm_slack = op_norm(&(&y * &f.matrix)) - t;
    let c1 = config.c1.unwrap_or(0.5);
    let bound = config.c2 * (-t * c1).exp();
    Ok(LargeDevOutcome {
        projection: f,
        tail,
        bound,
        pass: tail < bound,
        norm_slack,
        eps: (-t * c1).exp(),
        p_schedule: 4.0 * t * c1,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LargeDevRecord {
    pub sample: usize,
    pub filtration: String,
    pub t: f64,
    pub tail: f64,
    pub norm_slack: f64,
    pub classical_tracial: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LargeDevSuite {
    pub records: Vec<LargeDevRecord>,
    pub c1_hat: f64,
    pub c2_hat: f64,
    /// Samples outside the fitted classical bound (informational for the
    /// noncommutative ensemble).
    pub flagged: usize,
    pub norms_ok: bool,
    pub classical_fit_ok: bool,
}

/// Ensemble sweep with a (c1, c2) fit over the tracial classical
/// sub-ensemble: c2(c1) = max tail * exp(t c1), and c1 is pushed as high
/// as the cap c2 <= 10 allows on a fixed grid.
pub fn largedev_suite(config: &VerifyConfig, t_list: &[f64]) -> Result<LargeDevSuite> {
    let catalog = filtration_catalog();
    let mut records = Vec::new();
    for s in 0..config.ensemble_size {
        let entry = &catalog[s % catalog.len()];
        let mart = ensemble_martingale(entry, config.seed.wrapping_add(4000 + s as u64), true)?;
        for &t in t_list {
            let out = large_deviation(&mart, t, config)?;
            records.push(LargeDevRecord {
                sample: s,
                filtration: entry.name.clone(),
                t,
                tail: out.tail,
                norm_slack: out.norm_slack,
                classical_tracial: entry.classical && entry.tracial,
            });
        }
    }
    let norms_ok = records.iter().all(|r| r.norm_slack <= 1e-9);
    let classical: Vec<&LargeDevRecord> =
        records.iter().filter(|r| r.classical_tracial).collect();
    let c2_needed = |c1: f64, rows: &[&LargeDevRecord]| -> f64 {
        rows.iter()
            .map(|r| r.tail * (r.t * c1).exp())
            .fold(0.0, f64::max)
    };
    let mut c1_hat = 0.05;
    let mut c2_hat = c2_needed(c1_hat, &classical);
    let mut k = 1usize;
    while k <= 60 {
        let c1 = 0.05 * k as f64;
        let c2 = c2_needed(c1, &classical);
        if c2 <= 10.0 {
            c1_hat = c1;
            c2_hat = c2;
        }
        k += 1;
    }
    if c2_hat == 0.0 {
        // all classical tails vanish; any (c1, c2) works
        c2_hat = 1e-12;
    }
    let flagged = records
        .iter()
        .filter(|r| !r.classical_tracial && r.tail > c2_hat.max(1e-12) * (-r.t * c1_hat).exp())
        .count();
    let classical_fit_ok = c1_hat >= 0.05 && c2_hat <= 10.0;
    Ok(LargeDevSuite {
        records,
        c1_hat,
        c2_hat,
        flagged,
        norms_ok,
        classical_fit_ok,
    })
}

// ---------------------------------------------------------------------------
// L_exp (tracial)
// ---------------------------------------------------------------------------

/// Zygmund norm inf{lambda : tau(exp(|x|/lambda - 1)) <= 1} under the
/// normalized trace, by bisection.
pub fn lexp_norm(x: &Matrix) -> f64 {
    let n = x.nrows();
    let absx = op_abs(x);
    let eig = herm_eig(&absx).expect("|x| Hermitian");
    let g = |lambda: f64| -> f64 {
        eig.eigenvalues
            .iter()
            .map(|&s| (s / lambda - 1.0).exp())
            .sum::<f64>()
            / n as f64
            - 1.0
    };
    let mut lo = 1e-6;
    let mut hi = 1e6;
    if g(lo) <= 0.0 {
        return 0.0;
    }
    if g(hi) > 0.0 {
        return hi;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Serialize)]
pub struct LexpRecord {
    pub sample: usize,
    pub filtration: String,
    pub lexp: f64,
    pub bmo: f64,
    /// K = c_jn e / (1 - 1/e).
    pub bound_constant: f64,
    pub ok: bool,
}

/// BMO-into-L_exp on a tracial instance.
pub fn lexp_check(
    mart: &Martingale,
    label: &str,
    sample: usize,
    config: &VerifyConfig,
) -> Result<LexpRecord> {
    let dev = mart.state().tracial_deviation();
    if dev > 1e-12 {
        return Err(NcError::NotTracial(dev));
    }
    let lexp = lexp_norm(mart.limit());
    let b = bmo(mart);
    let k = config.c_jn * E / (1.0 - 1.0 / E);
    Ok(LexpRecord {
        sample,
        filtration: label.to_string(),
        lexp,
        bmo: b,
        bound_constant: k,
        ok: lexp <= k * b + 1e-9,
    })
}

pub fn lexp_suite(config: &VerifyConfig) -> Result<Vec<LexpRecord>> {
    let catalog: Vec<CatalogEntry> = filtration_catalog()
        .into_iter()
        .filter(|e| e.tracial)
        .collect();
    let mut out = Vec::new();
    for s in 0..config.ensemble_size {
        let entry = &catalog[s % catalog.len()];
        let mart = ensemble_martingale(entry, config.seed.wrapping_add(5000 + s as u64), true)?;
        out.push(lexp_check(&mart, &entry.name, s, config)?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Kadison / Stein
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct KadisonReport {
    pub filtration: String,
    pub level: usize,
    pub samples: usize,
    pub violations: usize,
    pub worst_min_eig: f64,
}

/// E_n(x)* E_n(x) <= E_n(x* x) as a PSD assertion on random samples.
pub fn check_kadison(
    filt: &Filtration,
    label: &str,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<KadisonReport> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0usize;
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let x = crate::randmat::gaussian(&mut rng, filt.dim());
        let ex = filt.cond_exp(n).apply(&x);
        let gap = filt.cond_exp(n).apply(&(x.adjoint() * &x)) - ex.adjoint() * &ex;
        let min = herm_eig(&hermitize(&gap))?.eigenvalues[0];
        worst = worst.min(min);
        if min < -1e-9 * f64::max(1.0, x.norm_squared()) {
            violations += 1;
        }
    }
    Ok(KadisonReport {
        filtration: label.to_string(),
        level: n,
        samples,
        violations,
        worst_min_eig: worst,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SteinReport {
    pub filtration: String,
    pub p: f64,
    pub max_col_ratio: f64,
    pub max_row_ratio: f64,
    /// p = 2 must be exactly contractive.
    pub p2_exact_ok: bool,
}

/// Empirical bound for the Stein projection Q(x) = (E_n(x_n)) in the
/// column and row norms. At p = 2 the projections are orthogonal in the
/// weighted Hilbert norms, so the ratio may not exceed one.
pub fn check_stein(
    filt: &Filtration,
    label: &str,
    p_list: &[f64],
    samples: usize,
    eta: f64,
    seed: u64,
) -> Result<Vec<SteinReport>> {
    use rand::SeedableRng;
    let state = filt.state();
    let mut out = Vec::new();
    for &p in p_list {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ (p.to_bits()));
        let mut col = 0.0f64;
        let mut row = 0.0f64;
        for _ in 0..samples {
            let terms: Vec<Matrix> = (0..=filt.top())
                .map(|_| crate::randmat::gaussian(&mut rng, filt.dim()))
                .collect();
            let q = stein_projection(&terms, filt)?;
            let emb = |zs: &[Matrix]| -> Result<(f64, f64)> {
                let e: Vec<Matrix> = zs
                    .iter()
                    .map(|z| crate::algebra::embed_lp(state, z, p, eta))
                    .collect::<Result<_>>()?;
                let ecol = lp_l2c_norm(&e, p)?;
                let adj: Vec<Matrix> = e.iter().map(|z| z.adjoint()).collect();
                let erow = lp_l2c_norm(&adj, p)?;
                Ok((ecol, erow))
            };
            let (qc, qr) = emb(&q)?;
            let (xc, xr) = emb(&terms)?;
            if xc > 1e-12 {
                col = col.max(qc / xc);
            }
            if xr > 1e-12 {
                row = row.max(qr / xr);
            }
        }
        out.push(SteinReport {
            filtration: label.to_string(),
            p,
            max_col_ratio: col,
            max_row_ratio: row,
            p2_exact_ok: p != 2.0 || (col <= 1.0 + 1e-9 && row <= 1.0 + 1e-9),
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Counterexample
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct CexRecord {
    pub n: usize,
    pub p: f64,
    pub lp: f64,
    pub lp_closed_form: f64,
    pub bmo_c: f64,
    pub bmo_r: f64,
    /// lp / bmo_c, divergent in n for p > 2.
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CexReport {
    pub records: Vec<CexRecord>,
    pub pass: bool,
}

/// The row/column counterexample table: the element has unit column BMO
/// norm while its L_p norm grows like n^{1/2 - 1/p}.
pub fn counterexample_report(n_list: &[usize], p_list: &[f64]) -> Result<CexReport> {
    let mut records = Vec::new();
    let mut pass = true;
    for &n in n_list {
        let model = compressed_rademacher(n, SignConvention::RademacherFunction)?;
        let bc = model.bmo_c();
        let br = model.bmo_r();
        pass &= (bc - 1.0).abs() <= 1e-10;
        pass &= (br - (n as f64).sqrt()).abs() <= 1e-8 * (n as f64).sqrt();
        for &p in p_list {
            let lp = model.lp_norm(p)?;
            let closed = (n as f64).powf(0.5 - 1.0 / p);
            pass &= (lp - closed).abs() <= 1e-8 * closed;
            records.push(CexRecord {
                n,
                p,
                lp,
                lp_closed_form: closed,
                bmo_c: bc,
                bmo_r: br,
                ratio: lp / bc,
            });
        }
    }
    // divergence: the ratio must increase strictly in n for each fixed p
    for &p in p_list {
        let mut rows: Vec<&CexRecord> = records.iter().filter(|r| r.p == p).collect();
        rows.sort_by_key(|r| r.n);
        for w in rows.windows(2) {
            pass &= w[1].ratio > w[0].ratio;
        }
    }
    Ok(CexReport { records, pass })
}

// ---------------------------------------------------------------------------
// Open problem sweep (recorded only, no assertion)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct OpenProblemRecord {
    pub p: f64,
    /// sup_n || E_n(|x - x_{n-1}|^p) ||^{1/p}.
    pub value: f64,
    pub p_times_bmo: f64,
}

/// The paper's open question quantity, computable in finite dimension;
/// recorded without asserting a bound.
pub fn open_problem_sweep(mart: &Martingale, p_list: &[f64]) -> Result<Vec<OpenProblemRecord>> {
    let b = bmo(mart);
    let mut out = Vec::new();
    for &p in p_list {
        let mut best = 0.0f64;
        for n in 0..=mart.top() {
            let y = mart.window(n, mart.top());
            let m = mat_power(&op_abs(&y), p)?;
            let e = mart.filtration().cond_exp(n).apply(&m);
            best = best.max(op_norm(&hermitize(&e)));
        }
        out.push(OpenProblemRecord {
            p,
            value: best.powf(1.0 / p),
            p_times_bmo: p * b,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Conditional-expectation axiom suite
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct AxiomReport {
    pub filtration: String,
    pub samples: usize,
    pub violations: usize,
    pub worst_residual: f64,
    pub choi_min_eig: f64,
}

/// Per-filtration axiom sweep: unitality, idempotence, complete positivity
/// (Choi), state preservation, module property, commuting squares, Kadison,
/// and modular commutation, over seeded random samples.
pub fn axiom_suite(entry: &CatalogEntry, samples: usize, seed: u64) -> Result<AxiomReport> {
    use rand::SeedableRng;
    let filt = &entry.filt;
    let state = filt.state();
    let n = filt.dim();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0usize;
    let mut worst = 0.0f64;
    fn check(violations: &mut usize, worst: &mut f64, res: f64, tol: f64) {
        if res > tol {
            *violations += 1;
        }
        if res > *worst {
            *worst = res;
        }
    }
    let one = identity(n);
    let mut choi_min = f64::INFINITY;
    for k in 0..=filt.top() {
        let e = filt.cond_exp(k);
        check(&mut violations, &mut worst, (e.apply(&one) - &one).norm(), 1e-9);
        let choi = e.choi();
        let min = herm_eig(&hermitize(&choi))?.eigenvalues[0];
        choi_min = choi_min.min(min);
        if min < -1e-9 {
            violations += 1;
        }
    }
    for _ in 0..samples {
        let x = crate::randmat::gaussian(&mut rng, n);
        let scale = f64::max(1.0, x.norm());
        for k in 0..=filt.top() {
            let e = filt.cond_exp(k);
            let ex = e.apply(&x);
            check(&mut violations, &mut worst, (e.apply(&ex) - &ex).norm() / scale, 1e-9);
            check(&mut violations, &mut worst, (state.phi(&ex) - state.phi(&x)).norm() / scale, 1e-9);
            // module property with random level elements
            let a = filt.levels()[k].project(&crate::randmat::gaussian(&mut rng, n));
            let b = filt.levels()[k].project(&crate::randmat::gaussian(&mut rng, n));
            let lhs = e.apply(&(&a * &x * &b));
            let rhs = &a * &ex * &b;
            check(
                &mut violations,
                &mut worst,
                (lhs - rhs).norm() / f64::max(1.0, a.norm() * x.norm() * b.norm()),
                1e-9,
            );
            // Kadison
            let gap = e.apply(&(x.adjoint() * &x)) - ex.adjoint() * &ex;
            let min = herm_eig(&hermitize(&gap))?.eigenvalues[0];
            if min < -1e-9 * scale * scale {
                violations += 1;
            }
            // modular commutation
            for &t in &[0.3, 1.7, -2.1] {
                let lhs = e.apply(&crate::algebra::modular_flow(state, &x, t));
                let rhs = crate::algebra::modular_flow(state, &ex, t);
                check(&mut violations, &mut worst, (lhs - rhs).norm() / scale, 1e-8);
            }
        }
        // commuting squares on a pair of levels
        for a in 0..=filt.top() {
            for b in 0..=filt.top() {
                let lhs = filt.cond_exp(a).apply(&filt.cond_exp(b).apply(&x));
                let rhs = filt.cond_exp(a.min(b)).apply(&x);
                check(&mut violations, &mut worst, (lhs - rhs).norm() / scale, 1e-9);
            }
        }
    }
    Ok(AxiomReport {
        filtration: entry.name.clone(),
        samples,
        violations,
        worst_residual: worst,
        choi_min_eig: choi_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_config() -> VerifyConfig {
        VerifyConfig {
            p_list: vec![3.0, 6.0],
            ensemble_size: 4,
            seed: 11,
            restarts: 4,
            max_iter: 150,
            ..VerifyConfig::default()
        }
    }

    #[test]
    fn catalog_builds() {
        let cat = filtration_catalog();
        assert!(cat.len() >= 5);
        assert!(cat.iter().any(|e| e.classical && e.tracial));
        assert!(cat.iter().any(|e| !e.classical));
    }

    #[test]
    fn fit_constant_cases() {
        assert!(matches!(fit_constant(&[]), Err(NcError::EmptyStream)));
        let f = fit_constant(&[(4.0, 8.0)]).unwrap();
        assert!((f.c_hat - 2.0).abs() < 1e-12);
        assert!(f.growth_slope.is_none());
        // perfect linear growth ratio = p has slope 1
        let f = fit_constant(&[(2.0, 2.0), (4.0, 4.0), (8.0, 8.0)]).unwrap();
        assert!((f.growth_slope.unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn jn_identity_martingale() {
        let cat = filtration_catalog();
        let filt = &cat[4].filt; // quantum-4
        let mart = decompose(&identity(filt.dim()), filt).unwrap();
        let recs = check_jn(&mart, "quantum-4", 0, false, &quick_config()).unwrap();
        for r in &recs {
            assert!(r.left_ok && r.right_ok, "{r:?}");
            assert!((r.ratio - 1.0 / r.p).abs() < 1e-5);
        }
    }

    #[test]
    fn counterexample_values() {
        let rep = counterexample_report(&[1, 2, 4], &[3.0, 4.0]).unwrap();
        assert!(rep.pass);
        let r = rep
            .records
            .iter()
            .find(|r| r.n == 4 && r.p == 4.0)
            .unwrap();
        assert!((r.lp - 2.0f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn large_deviation_classical_two_point() {
        // x = r_1 on the two-point space: |x - x_0| = 1, so f = 1 for t >= 1
        let filt = crate::martingale::dyadic_classical_filtration(
            1,
            1,
            &State::uniform(1),
        )
        .unwrap();
        let x = diag(&[1.0, -1.0]);
        let mart = decompose(&x, &filt).unwrap();
        let out = large_deviation(&mart, 1.0, &quick_config()).unwrap();
        assert!(out.norm_slack <= 1e-9);
        assert!(out.tail.abs() < 1e-12);
        // constant martingale: x - x_0 = 0
        let konst = decompose(&identity(2), &filt).unwrap();
        let out = large_deviation(&konst, 0.5, &quick_config()).unwrap();
        assert!(out.tail.abs() < 1e-12 && out.norm_slack <= 0.0);
    }

    #[test]
    fn lexp_scalar_and_zero() {
        let x = identity(3).scale(2.5);
        assert!((lexp_norm(&x) - 2.5).abs() < 1e-5);
        assert_eq!(lexp_norm(&zeros(3)), 0.0);
    }

    #[test]
    fn lexp_requires_tracial() {
        let cat = filtration_catalog();
        let filt = &cat[0].filt; // classical-2, non-tracial weights
        let mart = decompose(&identity(2), filt).unwrap();
        assert!(matches!(
            lexp_check(&mart, "classical-2", 0, &quick_config()),
            Err(NcError::NotTracial(_))
        ));
    }

    #[test]
    fn kadison_and_stein_reports() {
        let cat = filtration_catalog();
        let entry = &cat[4]; // quantum-4
        let rep = check_kadison(&entry.filt, &entry.name, 0, 25, 3).unwrap();
        assert_eq!(rep.violations, 0);
        let reps = check_stein(&entry.filt, &entry.name, &[2.0, 3.0], 8, 0.5, 5).unwrap();
        for r in &reps {
            assert!(r.p2_exact_ok, "{r:?}");
            assert!(r.max_col_ratio.is_finite());
        }
    }

    #[test]
    fn change_of_state_trivial_multiplier() {
        let cat = filtration_catalog();
        let entry = &cat[4]; // quantum-4
        let mart = ensemble_martingale(entry, 77, false).unwrap();
        let p = 4.0;
        let a = entry.filt.state().power(1.0 / p);
        let rep = check_change_of_state(&mart, 0, &a, p, &quick_config()).unwrap();
        assert!(rep.ok, "{rep:?}");
        assert!(rep.structural_residual <= 1e-8, "{rep:?}");
    }

    #[test]
    fn change_of_state_rejects_bad_witness() {
        let cat = filtration_catalog();
        let entry = &cat[4];
        let mart = ensemble_martingale(entry, 78, false).unwrap();
        // witness outside the level-0 model subspace (level 0 is scalar)
        let a = diag(&[1.0, 0.5, 0.25, 0.125]);
        assert!(matches!(
            check_change_of_state(&mart, 0, &a, 4.0, &quick_config()),
            Err(NcError::BadWitness { .. })
        ));
    }

    #[test]
    fn axiom_suite_clean() {
        let cat = filtration_catalog();
        for entry in cat.iter().take(3) {
            let rep = axiom_suite(entry, 10, 17).unwrap();
            assert_eq!(rep.violations, 0, "{rep:?}");
        }
    }

    #[test]
    fn open_problem_records() {
        let cat = filtration_catalog();
        let mart = ensemble_martingale(&cat[4], 90, true).unwrap();
        let rows = open_problem_sweep(&mart, &[2.0, 4.0]).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.value.is_finite()));
    }
}
