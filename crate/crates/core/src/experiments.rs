//! Convergence studies, timing reports and their CSV/JSON outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::align::pairwise_polar_align;
use crate::error::{Error, Result};
use crate::field::{build_kl, KernelSpec};
use crate::mc::{
    control_variate_covariance, covariance_with_rmse, drive_samples, mc_estimate, mc_rmse, mhat_norm_sq,
    sample_outcome, tensor_distance_low_rank, BasisMoments, McConfig, SampleDesign,
};
use crate::mesh::{Mesh, NodalField};
use crate::perturb::{mode_factors, perturb_cov, ModeFactors};
use crate::problem::{DiffusionProblem, ProblemConfig};

/// Settings shared by all subcommands; loadable from JSON, every field optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub seed: u64,
    /// Sample index of the realization used by single-realization commands.
    pub realization: u64,
    /// The ray `t = 2^k`, `k = t_min_exp ..= t_max_exp`.
    pub t_min_exp: i32,
    pub t_max_exp: i32,
    pub alpha: f64,
    pub beta: f64,
    pub samples: usize,
    pub antithetic: bool,
    pub basis_covariance: bool,
    /// Sample sizes `2^k`, `k = mc_min_exp ..= mc_max_exp`, of the MC study.
    pub mc_min_exp: u32,
    pub mc_max_exp: u32,
    pub repetitions: usize,
    pub timing_repeats: usize,
    pub reference_count: usize,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: ProblemConfig::default(),
            seed: 1,
            realization: 0,
            t_min_exp: -15,
            t_max_exp: 0,
            alpha: 0.5,
            beta: 0.5,
            samples: 100_000,
            antithetic: true,
            basis_covariance: false,
            mc_min_exp: 5,
            mc_max_exp: 12,
            repetitions: 20,
            timing_repeats: 20,
            reference_count: 12,
            output_dir: PathBuf::from("results"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hash of the canonical JSON form.
    pub fn hash(&self) -> String {
        blob_sha256(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    pub fn ray(&self) -> Vec<f64> {
        dyadic_ray(self.t_min_exp, self.t_max_exp)
    }

    pub fn mc_schedule(&self) -> Vec<usize> {
        (self.mc_min_exp..=self.mc_max_exp).map(|k| 1usize << k).collect()
    }
}

/// Git-style object hash: SHA-256 of `"blob <len>\0" + content`.
pub fn blob_sha256(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn dyadic_ray(min_exp: i32, max_exp: i32) -> Vec<f64> {
    (min_exp..=max_exp).map(|k| 2f64.powi(k)).collect()
}

/// Least-squares slope of `log y` against `log x`. Non-positive values are skipped.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Slope after dropping the `low` smallest and `high` largest abscissae.
pub fn fit_slope_trimmed(x: &[f64], y: &[f64], low: usize, high: usize) -> Option<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    if idx.len() <= low + high {
        return None;
    }
    let keep = &idx[low..idx.len() - high];
    let xs: Vec<f64> = keep.iter().map(|&i| x[i]).collect();
    let ys: Vec<f64> = keep.iter().map(|&i| y[i]).collect();
    fit_slope(&xs, &ys)
}

/// Slope over the points with `lo ≤ x ≤ hi`.
pub fn fit_slope_window(x: &[f64], y: &[f64], lo: f64, hi: f64) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(a, _)| **a >= lo && **a <= hi)
        .map(|(a, b)| (*a, *b))
        .unzip();
    fit_slope(&xs, &ys)
}

/// A table of numeric columns written as RFC 4180 CSV with hash columns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn to_csv(&self, config_hash: &str, input_hash: &str) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = self.columns.clone();
        header.push("config_hash".into());
        header.push("input_hash".into());
        w.write_record(&header).map_err(csv_error)?;
        for row in &self.rows {
            let mut rec: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            rec.push(config_hash.into());
            rec.push(input_hash.into());
            w.write_record(&rec).map_err(csv_error)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        Ok(String::from_utf8(bytes).expect("CSV is UTF-8"))
    }

    pub fn write_csv(&self, path: &Path, config_hash: &str, input_hash: &str) -> Result<()> {
        write_file(path, &self.to_csv(config_hash, input_hash)?)
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Observed slopes of a study, keyed by column name.
pub type Slopes = BTreeMap<String, Option<f64>>;

#[derive(Debug, Clone, Serialize)]
pub struct StudyReport {
    pub table: Table,
    pub slopes: Slopes,
    pub notes: Vec<String>,
}

// ---------------------------------------------------------------------------
// deterministic study

pub const DETERMINISTIC_COLUMNS: [&str; 6] =
    ["t", "err_lambda_svd", "err_lambda_polar", "err_basis_svd", "err_basis_polar", "min_singular"];

/// Errors of both first-order predictions for one realization along
/// `α = β = t`. Slopes use the ray without its 3 smallest and 2 largest `t`.
pub fn run_deterministic_study(problem: &DiffusionProblem, seed: u64, realization: u64, ray: &[f64]) -> Result<StudyReport> {
    let saddle = problem.saddle()?;
    let r = problem.draw(seed, realization);
    let (mu, eps) = problem.bundles(&saddle, &r)?;
    let mut table = Table::new(&DETERMINISTIC_COLUMNS);
    let mut notes = Vec::new();
    for &t in ray {
        let sample = problem.solve_sample_accurate(t, t, &r)?;
        let c = pairwise_polar_align(
            &sample.basis,
            &sample.values,
            problem.u0(),
            problem.lambda0(),
            &mu,
            &eps,
            t,
            t,
            &problem.m0,
        )?;
        if c.degenerate {
            notes.push(format!("t = {t:e}: polarization is degenerate"));
        }
        table.push(vec![t, c.err_lambda_svd, c.err_lambda_polar, c.err_basis_svd, c.err_basis_polar, c.min_singular]);
    }
    let ts = table.column("t").unwrap();
    let mut slopes = Slopes::new();
    for col in &DETERMINISTIC_COLUMNS[1..5] {
        slopes.insert(col.to_string(), fit_slope_trimmed(&ts, &table.column(col).unwrap(), 3, 2));
    }
    let defect: Vec<f64> = table.column("min_singular").unwrap().iter().map(|s| 1.0 - s).collect();
    slopes.insert("one_minus_min_singular".into(), fit_slope_trimmed(&ts, &defect, 3, 2));
    Ok(StudyReport { table, slopes, notes })
}

// ---------------------------------------------------------------------------
// Monte Carlo convergence study

pub const MC_COLUMNS: [&str; 12] = [
    "M",
    "rmse_mean_lambda",
    "rmse_mean_lambda_antithetic",
    "rmse_cov_lambda",
    "rmse_mean_basis",
    "rmse_mean_basis_antithetic",
    "err_mean_lambda",
    "err_mean_lambda_antithetic",
    "err_cov_lambda",
    "err_mean_basis",
    "err_mean_basis_antithetic",
    "rejected",
];

#[derive(Debug, Clone)]
struct PrefixStats {
    mean_std: DVector<f64>,
    mean_anti: DVector<f64>,
    cov: DMatrix<f64>,
    rmse_mean_std: f64,
    rmse_mean_anti: f64,
    rmse_cov: f64,
    basis_std: DVector<f64>,
    basis_anti: DVector<f64>,
    rmse_basis_std: f64,
    rmse_basis_anti: f64,
}

/// Sampling-error study over `schedule`, repeated with seeds
/// `seed, seed + 1, …`. For each `M` the antithetic estimator uses pairs
/// `0..M/2`, so both mean estimators cost `M` solves. Errors are measured
/// against the pooled antithetic mean and pooled covariance of all
/// repetitions at the largest `M`; table entries are root mean squares over
/// repetitions.
pub fn run_mc_study(
    problem: &DiffusionProblem,
    alpha: f64,
    beta: f64,
    seed: u64,
    repetitions: usize,
    schedule: &[usize],
) -> Result<StudyReport> {
    let &m_max = schedule.iter().max().ok_or_else(|| Error::Config("empty sample schedule".into()))?;
    if schedule.iter().any(|&m| m < 4) || repetitions == 0 {
        return Err(Error::Config("sample sizes must be at least 4 and repetitions positive".into()));
    }
    let nm = problem.n() * problem.m();
    let m0 = &problem.m0;
    let mut per_rep: Vec<Vec<PrefixStats>> = Vec::with_capacity(repetitions);
    let mut rejected_total = 0usize;
    for rep in 0..repetitions {
        let design = SampleDesign {
            alpha,
            beta,
            master_seed: seed + rep as u64,
            samples: m_max,
            pairs: m_max / 2,
        };
        let mut std_devs: Vec<DVector<f64>> = Vec::new();
        let mut pair_devs: Vec<(usize, DVector<f64>)> = Vec::new();
        let mut std_basis = BasisMoments::new(nm, false);
        let mut pair_basis = BasisMoments::new(nm, false);
        let mut basis_snap: BTreeMap<usize, (DVector<f64>, f64)> = BTreeMap::new();
        let mut anti_snap: BTreeMap<usize, (DVector<f64>, f64)> = BTreeMap::new();
        let mut stats: Vec<Option<(Vec<DVector<f64>>, Vec<DVector<f64>>)>> = vec![None; schedule.len()];
        let rejected = drive_samples(problem, &design, |i, plus, pair| {
            if let Some(d) = plus {
                std_devs.push(d.lambda.clone());
                std_basis.push(d.basis.clone(), d.basis_norm_sq);
            }
            if let Some(w) = pair {
                pair_devs.push((i, w.lambda.clone()));
                pair_basis.push(w.basis.clone(), w.basis_norm_sq);
            }
            for (s, &m) in schedule.iter().enumerate() {
                if i + 1 == m / 2 {
                    anti_snap.insert(m, (pair_basis.mean(), pair_basis.rmse_mean(m0)));
                }
                if i + 1 == m {
                    basis_snap.insert(m, (std_basis.mean(), std_basis.rmse_mean(m0)));
                    let pairs: Vec<DVector<f64>> =
                        pair_devs.iter().filter(|(j, _)| *j < m / 2).map(|(_, d)| d.clone()).collect();
                    stats[s] = Some((std_devs.clone(), pairs));
                }
            }
        })?;
        rejected_total += rejected;
        let mut rows = Vec::with_capacity(schedule.len());
        for (s, &m) in schedule.iter().enumerate() {
            let (devs, pairs) = stats[s].take().expect("prefix reached");
            if devs.len() < 2 || pairs.len() < 2 {
                return Err(Error::AmplitudeTooLarge {
                    rejected,
                    total: m + m / 2,
                });
            }
            let mean = |v: &[DVector<f64>]| v.iter().fold(DVector::zeros(v[0].len()), |a, x| a + x) / v.len() as f64;
            let mean_anti = mean(&pairs);
            let (cov, rmse_cov, _) = covariance_with_rmse(&devs, &mean_anti);
            let (basis_std, rmse_basis_std) = basis_snap[&m].clone();
            let (basis_anti, rmse_basis_anti) = anti_snap[&m].clone();
            rows.push(PrefixStats {
                mean_std: mean(&devs),
                rmse_mean_std: mc_rmse(&devs),
                rmse_mean_anti: mc_rmse(&pairs),
                mean_anti,
                cov,
                rmse_cov,
                basis_std,
                basis_anti,
                rmse_basis_std,
                rmse_basis_anti,
            });
        }
        per_rep.push(rows);
    }
    let evaluated = repetitions * (m_max + m_max / 2);
    if rejected_total as f64 > 0.01 * evaluated as f64 {
        return Err(Error::AmplitudeTooLarge {
            rejected: rejected_total,
            total: evaluated,
        });
    }
    let last = schedule.iter().position(|&m| m == m_max).unwrap();
    let reps = repetitions as f64;
    let pooled = |f: &dyn Fn(&PrefixStats) -> DVector<f64>| {
        per_rep.iter().fold(DVector::zeros(f(&per_rep[0][last]).len()), |a, r| a + f(&r[last])) / reps
    };
    let ref_mean = pooled(&|p| p.mean_anti.clone());
    let ref_basis = pooled(&|p| p.basis_anti.clone());
    let ref_cov = per_rep.iter().fold(DMatrix::zeros(ref_mean.len(), ref_mean.len()), |a, r| a + &r[last].cov) / reps;

    let rms = |s: usize, f: &dyn Fn(&PrefixStats) -> f64| (per_rep.iter().map(|r| f(&r[s]).powi(2)).sum::<f64>() / reps).sqrt();
    let mut table = Table::new(&MC_COLUMNS);
    for (s, &m) in schedule.iter().enumerate() {
        table.push(vec![
            m as f64,
            rms(s, &|p| p.rmse_mean_std),
            rms(s, &|p| p.rmse_mean_anti),
            rms(s, &|p| p.rmse_cov),
            rms(s, &|p| p.rmse_basis_std),
            rms(s, &|p| p.rmse_basis_anti),
            rms(s, &|p| (&p.mean_std - &ref_mean).norm()),
            rms(s, &|p| (&p.mean_anti - &ref_mean).norm()),
            rms(s, &|p| (&p.cov - &ref_cov).norm()),
            rms(s, &|p| mhat_norm_sq(m0, &(&p.basis_std - &ref_basis)).sqrt()),
            rms(s, &|p| mhat_norm_sq(m0, &(&p.basis_anti - &ref_basis)).sqrt()),
            rejected_total as f64,
        ]);
    }
    let ms = table.column("M").unwrap();
    let mut slopes = Slopes::new();
    for col in &MC_COLUMNS[1..11] {
        slopes.insert(col.to_string(), fit_slope(&ms, &table.column(col).unwrap()));
    }
    Ok(StudyReport {
        table,
        slopes,
        notes: vec![format!("{rejected_total} of {evaluated} solves rejected")],
    })
}

// ---------------------------------------------------------------------------
// perturbation-expansion study

pub const EXPANSION_COLUMNS: [&str; 13] = [
    "t",
    "M",
    "err_mean_lambda",
    "rmse_mean_lambda",
    "err_cov_lambda",
    "rmse_cov_lambda",
    "err_cov_lambda_cv",
    "rmse_cov_lambda_cv",
    "err_mean_basis",
    "rmse_mean_basis",
    "err_cov_basis",
    "rmse_cov_basis",
    "rejected",
];

/// Compares Monte Carlo moments along `α = β = t` with the first-order
/// predictions, using common random numbers for every `t`.
///
/// `err_cov_lambda_cv` measures the prediction against a control-variate
/// estimate of the eigenvalue covariance whose control is the first-order
/// term `t (dΛ_μ(z) + dΛ_ε(z))` of each sample. Basis covariance columns are
/// NaN unless `basis_covariance` is set. Slopes of the covariance errors are
/// fitted over the points where the error exceeds three times the RMSE.
pub fn run_expansion_study(
    problem: &DiffusionProblem,
    factors: &ModeFactors,
    ray: &[f64],
    samples: usize,
    seed: u64,
    basis_covariance: bool,
) -> Result<StudyReport> {
    let m = problem.m();
    let lambda_rows = factors.lambda_rows();
    let fl_mu = DMatrix::from_fn(m * m, factors.mu.ncols(), |i, j| factors.mu[(lambda_rows[i], j)]);
    let fl_eps = DMatrix::from_fn(m * m, factors.eps.ncols(), |i, j| factors.eps[(lambda_rows[i], j)]);
    let mut table = Table::new(&EXPANSION_COLUMNS);
    for &t in ray {
        let est = mc_estimate(
            problem,
            &McConfig {
                samples,
                alpha: t,
                beta: t,
                antithetic: true,
                master_seed: seed,
                basis_covariance,
                max_reject_fraction: 0.01,
            },
        )?;
        let pred = perturb_cov(factors, t, t);
        let pred_cov = pred.cov_lambda();
        let controls: Vec<DVector<f64>> = est
            .sample_indices
            .iter()
            .map(|&i| {
                let r = problem.draw(seed, i as u64);
                (&fl_mu * DVector::from_column_slice(&r.z_mu) + &fl_eps * DVector::from_column_slice(&r.z_eps)) * t
            })
            .collect();
        let center = DVector::from_column_slice((&est.mean_lambda - &pred.mean_lambda).as_slice());
        let (cv_cov, cv_rmse) = control_variate_covariance(&est.lambda_deviations, &controls, &center, &pred_cov);
        let (err_cov_basis, rmse_cov_basis) = match &est.cov_basis {
            Some(c) => (tensor_distance_low_rank(&problem.m0, c, &pred.cov_basis()), est.rmse_cov_basis.unwrap()),
            None => (f64::NAN, f64::NAN),
        };
        table.push(vec![
            t,
            samples as f64,
            (&est.mean_lambda - &pred.mean_lambda).norm(),
            est.rmse_mean_lambda,
            (&est.cov_lambda - &pred_cov).norm(),
            est.rmse_cov_lambda,
            (&cv_cov - &pred_cov).norm(),
            cv_rmse,
            crate::align::m_norm(&(&est.mean_basis - problem.u0()), &problem.m0),
            est.rmse_mean_basis,
            err_cov_basis,
            rmse_cov_basis,
            est.rejected as f64,
        ]);
    }
    let slopes = expansion_slopes(&table);
    Ok(StudyReport {
        table,
        slopes,
        notes: Vec::new(),
    })
}

/// Slopes of an expansion table: all points for the means, points above
/// three times the RMSE for the covariances.
pub fn expansion_slopes(table: &Table) -> Slopes {
    let ts = table.column("t").unwrap();
    let above = |err: &str, rmse: &str| {
        let (e, r) = (table.column(err).unwrap(), table.column(rmse).unwrap());
        let (x, y): (Vec<f64>, Vec<f64>) = ts
            .iter()
            .zip(e.iter().zip(&r))
            .filter(|(_, (e, r))| **e > 3.0 * **r)
            .map(|(t, (e, _))| (*t, *e))
            .unzip();
        fit_slope(&x, &y)
    };
    let mut slopes = Slopes::new();
    slopes.insert("err_mean_lambda".into(), above("err_mean_lambda", "rmse_mean_lambda"));
    slopes.insert("err_mean_basis".into(), above("err_mean_basis", "rmse_mean_basis"));
    slopes.insert("err_cov_lambda".into(), above("err_cov_lambda", "rmse_cov_lambda"));
    slopes.insert("err_cov_lambda_cv".into(), above("err_cov_lambda_cv", "rmse_cov_lambda_cv"));
    slopes.insert("err_cov_basis".into(), above("err_cov_basis", "rmse_cov_basis"));
    slopes
}

// ---------------------------------------------------------------------------
// timings

#[derive(Debug, Clone, Serialize)]
pub struct TimingReport {
    pub n: usize,
    pub n_free: usize,
    pub m: usize,
    pub kl_rank: usize,
    pub repeats: usize,
    /// Median wall time in seconds per stage.
    pub seconds: BTreeMap<String, f64>,
    pub threads: usize,
}

fn median_time(repeats: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    let mut v: Vec<Duration> = Vec::with_capacity(repeats);
    for _ in 0..repeats.max(1) {
        let t0 = Instant::now();
        f()?;
        v.push(t0.elapsed());
    }
    v.sort();
    Ok(v[v.len() / 2].as_secs_f64())
}

/// Median wall times of the main stages for `config`.
pub fn report_timings(config: &ProblemConfig, repeats: usize, seed: u64) -> Result<TimingReport> {
    let mut seconds = BTreeMap::new();
    let t0 = Instant::now();
    let problem = DiffusionProblem::new(config.clone())?;
    seconds.insert("setup_total".into(), t0.elapsed().as_secs_f64());
    let mesh = &problem.mesh;
    let one = NodalField::constant(mesh, 1.0);
    seconds.insert(
        "mesh".into(),
        median_time(repeats, || Mesh::build(config.n, config.layout).map(|_| ()))?,
    );
    seconds.insert(
        "assemble_pencil".into(),
        median_time(repeats, || {
            let _ = (mesh.assemble_stiffness(&one), mesh.assemble_mass(&one));
            Ok(())
        })?,
    );
    seconds.insert(
        "kl_expansion".into(),
        median_time(repeats.min(3), || {
            build_kl(mesh, &KernelSpec::gaussian(config.kernel_scale), &problem.mass_full, config.kl_tol, config.max_rank)
                .map(|_| ())
        })?,
    );
    seconds.insert(
        "reference_solve".into(),
        median_time(repeats.min(3), || {
            crate::eig::solve_gevp(&problem.a0, &problem.m0, problem.reference.len()).map(|_| ())
        })?,
    );
    let t0 = Instant::now();
    let saddle = problem.saddle()?;
    seconds.insert("saddle_factorization".into(), t0.elapsed().as_secs_f64());
    let r = problem.draw(seed, 0);
    seconds.insert(
        "derivatives_one_realization".into(),
        median_time(repeats, || problem.bundles(&saddle, &r).map(|_| ()))?,
    );
    let t0 = Instant::now();
    let factors = mode_factors(&problem, &saddle)?;
    seconds.insert("mode_factors".into(), t0.elapsed().as_secs_f64());
    seconds.insert(
        "perturb_cov".into(),
        median_time(repeats, || {
            let p = perturb_cov(&factors, 0.5, 0.5);
            let _ = p.cov_lambda();
            Ok(())
        })?,
    );
    let mut k = 0u64;
    seconds.insert(
        "sample_solve_and_align".into(),
        median_time(repeats, || {
            k += 1;
            sample_outcome(&problem, 0.5, 0.5, &problem.draw(seed, k)).map(|_| ())
        })?,
    );
    Ok(TimingReport {
        n: config.n,
        n_free: problem.n(),
        m: problem.m(),
        kl_rank: problem.kl_mu.rank(),
        repeats,
        seconds,
        threads: rayon::current_num_threads(),
    })
}
