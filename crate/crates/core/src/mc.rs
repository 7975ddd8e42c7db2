//! Monte Carlo estimation of the mean and covariance of aligned cluster
//! eigenvalue matrices and eigenbases.
//!
//! Samples are evaluated in parallel in fixed-size chunks and accumulated
//! sequentially in index order, so results do not depend on the number of
//! worker threads. All accumulated quantities are deviations from the
//! reference `(λ0 I, u0)`.
//!
//! Basis quantities use the L² inner product of the reference mass matrix,
//! applied column by column (`M̂ = I_m ⊗ M0`); basis covariances use the
//! induced tensor norm `‖C‖² = tr(M̂ C M̂ C)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::align::align;
use crate::error::{Error, Result};
use crate::linalg::{sym_eigen_sorted, CsrMatrix};
use crate::perturb::LowRankCovariance;
use crate::problem::{DiffusionProblem, Realization};

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub samples: usize,
    pub alpha: f64,
    pub beta: f64,
    pub antithetic: bool,
    pub master_seed: u64,
    /// Accumulate the dense `nm × nm` second moment of the basis.
    pub basis_covariance: bool,
    /// Largest tolerated fraction of rejected samples.
    pub max_reject_fraction: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            alpha: 0.1,
            beta: 0.1,
            antithetic: true,
            master_seed: 0,
            basis_covariance: false,
            max_reject_fraction: 0.01,
        }
    }
}

const CHUNK: usize = 128;

/// Aligned cluster of one sample.
#[derive(Debug, Clone)]
pub struct SampleOutcome {
    pub lambda: DMatrix<f64>,
    pub basis: DMatrix<f64>,
    pub min_singular: f64,
}

/// Solves and aligns one realization.
pub fn sample_outcome(
    problem: &DiffusionProblem,
    alpha: f64,
    beta: f64,
    r: &Realization,
) -> Result<SampleOutcome> {
    let t = problem.solve_sample(alpha, beta, r)?;
    let al = align(&t.basis, &t.lambda_matrix(), problem.u0(), &problem.m0)?;
    Ok(SampleOutcome {
        min_singular: al.min_singular(),
        lambda: al.aligned_lambda,
        basis: al.aligned_basis,
    })
}

fn is_rejection(e: &Error) -> bool {
    matches!(
        e,
        Error::NonPositiveCoefficient { .. }
            | Error::AlignmentRejected { .. }
            | Error::ClusterLost(_)
            | Error::NoConvergence { .. }
    )
}

/// Self-estimated root mean square error of the sample mean,
/// `RMSE² = (1/M²) Σ_i ‖mean − w_i‖²`.
pub fn mc_rmse(samples: &[DVector<f64>]) -> f64 {
    let m = samples.len();
    assert!(m >= 2, "RMSE needs at least two samples");
    let mean = samples.iter().fold(DVector::zeros(samples[0].len()), |a, s| a + s) / m as f64;
    let ss: f64 = samples.iter().map(|s| (s - &mean).norm_squared()).sum();
    ss.sqrt() / m as f64
}

pub fn mc_rmse_scalar(samples: &[f64]) -> f64 {
    let v: Vec<DVector<f64>> = samples.iter().map(|&x| DVector::from_element(1, x)).collect();
    mc_rmse(&v)
}

/// Applies `M̂ = I_m ⊗ M0` to the columns of `x` (`nm × k`).
pub fn mhat_mul(m0: &CsrMatrix, x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m0.nrows();
    let blocks = x.nrows() / n;
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    for b in 0..blocks {
        let y = m0.mul_dense(&x.rows(b * n, n).into_owned());
        out.rows_mut(b * n, n).copy_from(&y);
    }
    out
}

pub fn mhat_norm_sq(m0: &CsrMatrix, v: &DVector<f64>) -> f64 {
    let x = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
    v.dot(&mhat_mul(m0, &x).column(0))
}

/// Streaming moments of basis deviations `d_i` (length `nm`).
#[derive(Debug, Clone)]
pub struct BasisMoments {
    pub count: usize,
    /// `Σ d`
    pub s1: DVector<f64>,
    /// `Σ ‖d‖²`
    pub q2: f64,
    /// `Σ ‖d‖⁴`
    pub q4: f64,
    /// `Σ ‖d‖² d`
    pub s3: DVector<f64>,
    /// `Σ d dᵀ`, only when second moments are tracked.
    pub s2: Option<DMatrix<f64>>,
    pending: Vec<DVector<f64>>,
}

impl BasisMoments {
    pub fn new(dim: usize, second: bool) -> Self {
        Self {
            count: 0,
            s1: DVector::zeros(dim),
            q2: 0.0,
            q4: 0.0,
            s3: DVector::zeros(dim),
            s2: second.then(|| DMatrix::zeros(dim, dim)),
            pending: Vec::new(),
        }
    }

    pub fn push(&mut self, d: DVector<f64>, norm_sq: f64) {
        self.count += 1;
        self.s1 += &d;
        self.q2 += norm_sq;
        self.q4 += norm_sq * norm_sq;
        self.s3.axpy(norm_sq, &d, 1.0);
        if self.s2.is_some() {
            self.pending.push(d);
            if self.pending.len() == CHUNK {
                self.flush();
            }
        }
    }

    pub fn flush(&mut self) {
        if let Some(s2) = self.s2.as_mut() {
            if self.pending.is_empty() {
                return;
            }
            let d = DMatrix::from_columns(&self.pending);
            let dt = d.transpose();
            s2.gemm(1.0, &d, &dt, 1.0);
            self.pending.clear();
        }
    }

    pub fn mean(&self) -> DVector<f64> {
        &self.s1 / self.count as f64
    }

    /// Self-estimated RMSE of the mean in the `M̂` norm.
    pub fn rmse_mean(&self, m0: &CsrMatrix) -> f64 {
        let m = self.count as f64;
        let mean = self.mean();
        (self.q2 - m * mhat_norm_sq(m0, &mean)).max(0.0).sqrt() / m
    }

    /// Covariance `(1/M) Σ (d − c)(d − c)ᵀ` and its self-estimated RMSE.
    pub fn covariance(&mut self, center: &DVector<f64>, m0: &CsrMatrix) -> Option<(DMatrix<f64>, f64)> {
        self.flush();
        let s2 = self.s2.as_ref()?;
        let m = self.count as f64;
        let c = center;
        let mut cov = s2.clone();
        cov.ger(-1.0, &self.s1, c, 1.0);
        cov.ger(-1.0, c, &self.s1, 1.0);
        cov.ger(m, c, c, 1.0);
        cov /= m;
        let mc = mhat_mul(m0, &DMatrix::from_column_slice(c.len(), 1, c.as_slice()));
        let mc = mc.column(0);
        let gamma = c.dot(&mc);
        let sum_ab = self.s3.dot(&mc);
        let sum_b = self.s1.dot(&mc);
        let s2mc = s2 * mc;
        let sum_b2 = mc.dot(&s2mc);
        let sum_e4 = self.q4 - 4.0 * sum_ab + 4.0 * sum_b2 + 2.0 * gamma * self.q2 - 4.0 * gamma * sum_b
            + m * gamma * gamma;
        let norm_c = tensor_norm_sq(m0, &cov);
        let rmse = (sum_e4 - m * norm_c).max(0.0).sqrt() / m;
        Some((cov, rmse))
    }
}

/// `tr(M̂ C M̂ C)` for symmetric `C`.
pub fn tensor_norm_sq(m0: &CsrMatrix, c: &DMatrix<f64>) -> f64 {
    let mc = mhat_mul(m0, c);
    let mcm = mhat_mul(m0, &mc.transpose());
    mcm.dot(&c.transpose())
}

/// Tensor-norm distance between a dense covariance and `scale · F Fᵀ`.
pub fn tensor_distance_low_rank(m0: &CsrMatrix, dense: &DMatrix<f64>, low: &LowRankCovariance) -> f64 {
    let f = &low.factor;
    let mf = mhat_mul(m0, f);
    let gram = f.transpose() * &mf;
    let cross = mf.transpose() * dense * &mf;
    let s = low.scale;
    let d2 = tensor_norm_sq(m0, dense) - 2.0 * s * cross.trace() + s * s * gram.norm_squared();
    d2.max(0.0).sqrt()
}

/// Mean and covariance estimates of one Monte Carlo run.
#[derive(Debug, Clone)]
pub struct MomentEstimate {
    pub m: usize,
    pub lambda0: f64,
    /// Mean used for reporting (antithetic when enabled).
    pub mean_lambda: DMatrix<f64>,
    pub mean_lambda_standard: DMatrix<f64>,
    pub mean_basis: DMatrix<f64>,
    pub mean_basis_standard: DMatrix<f64>,
    /// `m² × m²` covariance of `vec(Λ)` (column-major), centered at `mean_lambda`.
    pub cov_lambda: DMatrix<f64>,
    /// Dense `nm × nm` covariance of `vec(U)` when requested.
    pub cov_basis: Option<DMatrix<f64>>,
    pub rmse_mean_lambda: f64,
    pub rmse_mean_lambda_standard: f64,
    pub rmse_cov_lambda: f64,
    pub rmse_mean_basis: f64,
    pub rmse_cov_basis: Option<f64>,
    /// Total magnitude of negative eigenvalues removed from `cov_lambda`.
    pub clipped: f64,
    pub samples_used: usize,
    pub pairs_used: usize,
    pub rejected: usize,
    pub min_singular: f64,
    /// Indices of the accepted standard samples.
    pub sample_indices: Vec<usize>,
    /// `vec(Λ_i − λ0 I)` of the accepted standard samples.
    pub lambda_deviations: Vec<DVector<f64>>,
}

impl MomentEstimate {
    /// Low-rank form of the basis covariance, truncated at relative
    /// spectral tolerance `1e-8`.
    pub fn cov_basis_low_rank(&self) -> Option<LowRankCovariance> {
        self.cov_basis.as_ref().map(|c| LowRankCovariance::from_dense_psd(c, 1e-8))
    }
}
/// Deviation of one accepted sample (or pair average) from the reference.
#[derive(Debug, Clone)]
pub struct Deviation {
    /// `vec(Λ − λ0 I)`, column-major.
    pub lambda: DVector<f64>,
    /// `vec(U − u0)`, column-major.
    pub basis: DVector<f64>,
    /// `‖vec(U − u0)‖²` in the `M̂` norm.
    pub basis_norm_sq: f64,
    pub min_singular: f64,
}

/// Sample range and amplitudes of one Monte Carlo run.
#[derive(Debug, Clone, Copy)]
pub struct SampleDesign {
    pub alpha: f64,
    pub beta: f64,
    pub master_seed: u64,
    /// Standard samples `0..samples`.
    pub samples: usize,
    /// Antithetic partners are drawn for samples `0..pairs`.
    pub pairs: usize,
}

fn evaluate_chunk(
    problem: &DiffusionProblem,
    design: &SampleDesign,
    range: std::ops::Range<usize>,
) -> Result<Vec<(Option<SampleOutcome>, Option<SampleOutcome>)>> {
    let results: Vec<Result<(Option<SampleOutcome>, Option<SampleOutcome>)>> = range
        .into_par_iter()
        .map(|i| {
            let r = problem.draw(design.master_seed, i as u64);
            let keep = |res: Result<SampleOutcome>| match res {
                Ok(o) => Ok(Some(o)),
                Err(e) if is_rejection(&e) => Ok(None),
                Err(e) => Err(e),
            };
            let plus = keep(sample_outcome(problem, design.alpha, design.beta, &r))?;
            let minus = if i < design.pairs {
                keep(sample_outcome(problem, design.alpha, design.beta, &r.antithetic()))?
            } else {
                None
            };
            Ok((plus, minus))
        })
        .collect();
    results.into_iter().collect()
}

fn vec_of(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(x.as_slice())
}

/// Evaluates a design in parallel chunks and calls `visit(i, standard, pair)`
/// in index order, where `pair` is the average of the deviations at `z_i`
/// and `−z_i`. Rejected samples are passed as `None`; a pair is `None` when
/// either member was rejected. Returns the number of rejected solves.
pub fn drive_samples(
    problem: &DiffusionProblem,
    design: &SampleDesign,
    mut visit: impl FnMut(usize, Option<&Deviation>, Option<&Deviation>),
) -> Result<usize> {
    let m = problem.m();
    let ref_lambda = DMatrix::<f64>::identity(m, m) * problem.lambda0();
    let u0 = problem.u0();
    let deviation = |o: &SampleOutcome| {
        let basis = vec_of(&(&o.basis - u0));
        Deviation {
            lambda: vec_of(&(&o.lambda - &ref_lambda)),
            basis_norm_sq: mhat_norm_sq(&problem.m0, &basis),
            basis,
            min_singular: o.min_singular,
        }
    };
    let mut rejected = 0;
    let mut start = 0;
    while start < design.samples {
        let end = (start + CHUNK).min(design.samples);
        let outcomes = evaluate_chunk(problem, design, start..end)?;
        for (k, (plus, minus)) in outcomes.into_iter().enumerate() {
            let i = start + k;
            let d_plus = plus.as_ref().map(deviation);
            if d_plus.is_none() {
                rejected += 1;
            }
            let mut pair = None;
            if i < design.pairs {
                match (&d_plus, minus.as_ref().map(deviation)) {
                    (Some(a), Some(b)) => {
                        let basis = (&a.basis + &b.basis) * 0.5;
                        pair = Some(Deviation {
                            lambda: (&a.lambda + &b.lambda) * 0.5,
                            basis_norm_sq: mhat_norm_sq(&problem.m0, &basis),
                            basis,
                            min_singular: a.min_singular.min(b.min_singular),
                        });
                    }
                    (_, None) => rejected += 1,
                    _ => {}
                }
            }
            visit(i, d_plus.as_ref(), pair.as_ref());
        }
        start = end;
    }
    Ok(rejected)
}

/// Runs the estimator described by `config`.
pub fn mc_estimate(problem: &DiffusionProblem, config: &McConfig) -> Result<MomentEstimate> {
    let big_m = config.samples;
    if big_m < 2 {
        return Err(Error::Config("at least two samples are required".into()));
    }
    let (n, m) = (problem.n(), problem.m());
    let nm = n * m;
    let lambda0 = problem.lambda0();
    let ref_lambda = DMatrix::<f64>::identity(m, m) * lambda0;
    let u0 = problem.u0();
    let pairs = if config.antithetic { big_m / 2 } else { 0 };

    let mut std_basis = BasisMoments::new(nm, config.basis_covariance);
    let mut pair_basis = BasisMoments::new(nm, false);
    let mut lambda_devs: Vec<DVector<f64>> = Vec::with_capacity(big_m);
    let mut sample_indices: Vec<usize> = Vec::with_capacity(big_m);
    let mut pair_devs: Vec<DVector<f64>> = Vec::with_capacity(pairs);
    let mut min_singular = f64::INFINITY;

    let design = SampleDesign {
        alpha: config.alpha,
        beta: config.beta,
        master_seed: config.master_seed,
        samples: big_m,
        pairs,
    };
    let rejected = drive_samples(problem, &design, |i, plus, pair| {
        if let Some(d) = plus {
            min_singular = min_singular.min(d.min_singular);
            sample_indices.push(i);
            lambda_devs.push(d.lambda.clone());
            std_basis.push(d.basis.clone(), d.basis_norm_sq);
        }
        if let Some(w) = pair {
            min_singular = min_singular.min(w.min_singular);
            pair_devs.push(w.lambda.clone());
            pair_basis.push(w.basis.clone(), w.basis_norm_sq);
        }
    })?;
    let evaluated = big_m + pairs;
    if rejected as f64 > config.max_reject_fraction * evaluated as f64 {
        return Err(Error::AmplitudeTooLarge {
            rejected,
            total: evaluated,
        });
    }
    if lambda_devs.len() < 2 || (config.antithetic && pair_devs.len() < 2) {
        return Err(Error::Config("too few accepted samples".into()));
    }

    let mean_of = |v: &[DVector<f64>]| v.iter().fold(DVector::zeros(v[0].len()), |a, s| a + s) / v.len() as f64;
    let std_mean_l = mean_of(&lambda_devs);
    let (mean_l, rmse_mean_l) = if config.antithetic {
        (mean_of(&pair_devs), mc_rmse(&pair_devs))
    } else {
        (std_mean_l.clone(), mc_rmse(&lambda_devs))
    };
    let rmse_std_l = mc_rmse(&lambda_devs);
    let (cov_lambda, rmse_cov_lambda, clipped) = covariance_with_rmse(&lambda_devs, &mean_l);

    let std_mean_u = std_basis.mean();
    let (mean_u, rmse_mean_u) = if config.antithetic {
        (pair_basis.mean(), pair_basis.rmse_mean(&problem.m0))
    } else {
        (std_mean_u.clone(), std_basis.rmse_mean(&problem.m0))
    };
    let cov_basis = std_basis.covariance(&mean_u, &problem.m0);
    let unvec = |v: &DVector<f64>, r: usize, c: usize| DMatrix::from_column_slice(r, c, v.as_slice());

    Ok(MomentEstimate {
        m: big_m,
        lambda0,
        mean_lambda: &ref_lambda + unvec(&mean_l, m, m),
        mean_lambda_standard: &ref_lambda + unvec(&std_mean_l, m, m),
        mean_basis: u0 + unvec(&mean_u, n, m),
        mean_basis_standard: u0 + unvec(&std_mean_u, n, m),
        cov_lambda,
        rmse_mean_lambda: rmse_mean_l,
        rmse_mean_lambda_standard: rmse_std_l,
        rmse_cov_lambda,
        rmse_mean_basis: rmse_mean_u,
        rmse_cov_basis: cov_basis.as_ref().map(|c| c.1),
        cov_basis: cov_basis.map(|c| c.0),
        clipped,
        samples_used: lambda_devs.len(),
        sample_indices,
        lambda_deviations: lambda_devs,
        pairs_used: pair_devs.len(),
        rejected,
        min_singular,
    })
}

/// Covariance `(1/M) Σ (d − c)(d − c)ᵀ` projected onto the PSD cone, its
/// self-estimated RMSE, and the magnitude removed by the projection.
pub fn covariance_with_rmse(devs: &[DVector<f64>], center: &DVector<f64>) -> (DMatrix<f64>, f64, f64) {
    let m = devs.len() as f64;
    let dim = center.len();
    let mut cov = DMatrix::zeros(dim, dim);
    for d in devs {
        let e = d - center;
        cov.ger(1.0, &e, &e, 1.0);
    }
    cov /= m;
    let ss: f64 = devs
        .iter()
        .map(|d| {
            let e = d - center;
            (&e * e.transpose() - &cov).norm_squared()
        })
        .sum();
    let rmse = ss.sqrt() / m;
    let (cov, clipped) = psd_projection(&cov);
    (cov, rmse, clipped)
}

/// Control-variate covariance estimate
/// `(1/M) Σ [(d_i − c)(d_i − c)ᵀ − y_i y_iᵀ] + C_y`
/// for zero-mean controls `y_i` with known covariance `C_y`, and its
/// self-estimated RMSE.
pub fn control_variate_covariance(
    devs: &[DVector<f64>],
    controls: &[DVector<f64>],
    center: &DVector<f64>,
    control_cov: &DMatrix<f64>,
) -> (DMatrix<f64>, f64) {
    assert_eq!(devs.len(), controls.len(), "one control per sample");
    let m = devs.len() as f64;
    let terms: Vec<DMatrix<f64>> = devs
        .iter()
        .zip(controls)
        .map(|(d, y)| {
            let e = d - center;
            &e * e.transpose() - y * y.transpose() + control_cov
        })
        .collect();
    let cov = terms.iter().fold(DMatrix::zeros(center.len(), center.len()), |a, w| a + w) / m;
    let ss: f64 = terms.iter().map(|w| (w - &cov).norm_squared()).sum();
    (cov, ss.sqrt() / m)
}

/// Symmetrizes and removes negative eigenvalues below `−1e-12`.
pub fn psd_projection(c: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let sym = (c + c.transpose()) * 0.5;
    let (vals, vecs) = sym_eigen_sorted(&sym);
    let clipped: f64 = vals.iter().filter(|&&v| v < -1e-12).map(|v| -v).sum();
    if clipped == 0.0 {
        return (sym, 0.0);
    }
    let kept = vals.map(|v| if v < -1e-12 { 0.0 } else { v });
    (&vecs * DMatrix::from_diagonal(&kept) * vecs.transpose(), clipped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::ProblemConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem() -> DiffusionProblem {
        DiffusionProblem::new(ProblemConfig {
            n: 7,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(mc_rmse_scalar(&[3.0, 3.0, 3.0]), 0.0);
        let r = mc_rmse_scalar(&[0.0, 2.0]);
        assert!((r * r - 0.5).abs() < 1e-15);
        // σ/√M law with Box–Muller normals
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let normals: Vec<f64> = (0..10_000)
            .map(|_| {
                let (u1, u2): (f64, f64) = (rng.random(), rng.random());
                (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect();
        let r = mc_rmse_scalar(&normals);
        assert!((r - 1e-2).abs() < 1e-3, "rmse {r}");
    }

    #[test]
    fn zero_amplitude_is_exact() {
        let p = problem();
        let est = mc_estimate(
            &p,
            &McConfig {
                samples: 8,
                alpha: 0.0,
                beta: 0.0,
                basis_covariance: true,
                ..Default::default()
            },
        )
        .unwrap();
        let id = DMatrix::<f64>::identity(2, 2) * p.lambda0();
        assert!((&est.mean_lambda - id).amax() < 1e-9 * p.lambda0());
        assert!(est.cov_lambda.amax() < 1e-16);
        assert!(est.cov_basis.unwrap().amax() < 1e-16);
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let p = problem();
        let cfg = McConfig {
            samples: 40,
            alpha: 0.3,
            beta: 0.2,
            master_seed: 9,
            basis_covariance: true,
            ..Default::default()
        };
        let a = mc_estimate(&p, &cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| mc_estimate(&p, &cfg).unwrap());
        assert_eq!(a.mean_lambda, b.mean_lambda);
        assert_eq!(a.cov_lambda, b.cov_lambda);
        assert_eq!(a.cov_basis, b.cov_basis);
        assert_eq!(a.rmse_cov_basis, b.rmse_cov_basis);
    }

    #[test]
    fn streaming_basis_rmse_matches_direct_formula() {
        let p = problem();
        let n = p.n();
        let mut moments = BasisMoments::new(2 * n, true);
        let mut devs = Vec::new();
        for s in 0..30u64 {
            let d = DVector::from_fn(2 * n, |i, _| ((i as f64 + 1.0) * (s as f64 + 0.3)).sin() * 0.01);
            let nsq = mhat_norm_sq(&p.m0, &d);
            moments.push(d.clone(), nsq);
            devs.push(d);
        }
        let center = DVector::from_fn(2 * n, |i, _| 1e-3 * (i as f64).cos());
        let (cov, rmse) = moments.covariance(&center, &p.m0).unwrap();
        let m = devs.len() as f64;
        let mut direct = DMatrix::zeros(2 * n, 2 * n);
        for d in &devs {
            let e = d - &center;
            direct += &e * e.transpose();
        }
        direct /= m;
        assert!((&cov - &direct).amax() < 1e-15);
        let ss: f64 = devs
            .iter()
            .map(|d| {
                let e = d - &center;
                tensor_norm_sq(&p.m0, &(&e * e.transpose() - &direct))
            })
            .sum();
        let expect = ss.sqrt() / m;
        assert!((rmse - expect).abs() <= 1e-8 * expect, "{rmse} vs {expect}");
    }

    #[test]
    fn antithetic_mean_is_exact_on_linear_functionals() {
        // z ↦ u0ᵀ A1(z) u0 is linear in z, so every antithetic pair
        // average equals the value at z = 0.
        let p = problem();
        let u0 = p.u0();
        let values: Vec<DVector<f64>> = (0..50)
            .map(|s| {
                let r = p.draw(2, s);
                let (a1, _) = p.directions(&r);
                let (b1, _) = p.directions(&r.antithetic());
                let f = (a1.bilinear(u0, u0) + b1.bilinear(u0, u0)) * 0.5;
                DVector::from_column_slice(f.as_slice())
            })
            .collect();
        assert!(mc_rmse(&values) < 1e-14);
        let plain: Vec<DVector<f64>> = (0..50)
            .map(|s| {
                let (a1, _) = p.directions(&p.draw(2, s));
                DVector::from_column_slice(a1.bilinear(u0, u0).as_slice())
            })
            .collect();
        assert!(mc_rmse(&plain) > 1e-6);
    }

    #[test]
    fn perfect_control_returns_its_covariance() {
        let devs: Vec<DVector<f64>> = (0..20)
            .map(|i| DVector::from_row_slice(&[(i as f64).sin(), (i as f64 * 0.7).cos()]))
            .collect();
        let known = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, 0.2]);
        let zero = DVector::zeros(2);
        let (cov, rmse) = control_variate_covariance(&devs, &devs, &zero, &known);
        assert!((cov - known).amax() < 1e-15);
        assert!(rmse < 1e-15);
        // without a useful control the estimate reduces to the plain one
        let nothing = vec![DVector::zeros(2); 20];
        let (cov, _) = control_variate_covariance(&devs, &nothing, &zero, &DMatrix::zeros(2, 2));
        let plain = devs.iter().fold(DMatrix::zeros(2, 2), |a, d| a + d * d.transpose()) / 20.0;
        assert!((cov - plain).amax() < 1e-15);
    }

    #[test]
    fn psd_projection_clips_negative_part() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        let (p, clipped) = psd_projection(&c);
        assert!((clipped - 0.5).abs() < 1e-15);
        assert!((p[(1, 1)]).abs() < 1e-15 && (p[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn too_large_amplitude_is_reported() {
        let p = problem();
        let err = mc_estimate(
            &p,
            &McConfig {
                samples: 20,
                alpha: 40.0,
                beta: 0.0,
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::AmplitudeTooLarge { .. }));
    }
}
