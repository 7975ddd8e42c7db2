use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde_json::json;

use eiguq::derivative::ConstraintGauge;
use eiguq::eig::EigenDump;
use eiguq::experiments::{
    blob_sha256, report_timings, run_deterministic_study, run_expansion_study, run_mc_study, write_file,
    ExperimentConfig, StudyReport, Table,
};
use eiguq::mc::{mc_estimate, McConfig};
use eiguq::mesh::Layout;
use eiguq::perturb::{mode_factors, perturb_cov};
use eiguq::problem::DiffusionProblem;
use eiguq::{Error, Result};

/// Eigenvalue-cluster uncertainty quantification for a random diffusion problem.
#[derive(Parser, Debug)]
#[command(name = "eiguq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Overrides,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Write the mesh as JSON.
    Mesh,
    /// Build the Karhunen–Loève expansion and write it as JSON.
    Kl,
    /// Solve the reference eigenproblem.
    SolveRef,
    /// Directional derivatives of the cluster for one realization.
    Derivs,
    /// Monte Carlo mean and covariance at (alpha, beta).
    Mc,
    /// First-order mean and covariance at (alpha, beta).
    Perturb,
    /// Deterministic convergence study along alpha = beta = t.
    StudyDet,
    /// Monte Carlo sampling-error study.
    StudyMc,
    /// Perturbation-expansion study against Monte Carlo.
    StudyExp,
    /// Wall-time report of the main stages.
    Timings,
}

/// Every field of the JSON configuration can be overridden here.
#[derive(Args, Debug, Clone, Default)]
struct Overrides {
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Vertices per side of the unit-square grid.
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    layout: Option<Layout>,
    #[arg(long, global = true)]
    kl_tol: Option<f64>,
    #[arg(long, global = true)]
    kernel_scale: Option<f64>,
    #[arg(long, global = true)]
    max_rank: Option<usize>,
    #[arg(long, global = true)]
    target_index: Option<usize>,
    #[arg(long, global = true)]
    mu0: Option<f64>,
    #[arg(long, global = true)]
    eps0: Option<f64>,
    #[arg(long, global = true)]
    cluster_tol: Option<f64>,
    #[arg(long, global = true)]
    gauge: Option<ConstraintGauge>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    realization: Option<u64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    t_min_exp: Option<i32>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    t_max_exp: Option<i32>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[arg(long, global = true)]
    antithetic: Option<bool>,
    #[arg(long, global = true)]
    basis_covariance: Option<bool>,
    #[arg(long, global = true)]
    mc_min_exp: Option<u32>,
    #[arg(long, global = true)]
    mc_max_exp: Option<u32>,
    #[arg(long, global = true)]
    repetitions: Option<usize>,
    #[arg(long, global = true)]
    timing_repeats: Option<usize>,
    #[arg(long, global = true)]
    reference_count: Option<usize>,
    /// Check observed convergence slopes; exit with status 2 when outside range.
    #[arg(long, global = true)]
    assert: bool,
}

macro_rules! apply {
    ($cfg:expr, $o:expr, $($field:ident),*) => {
        $(if let Some(v) = $o.$field.clone() { $cfg.$field = v; })*
    };
}

impl Overrides {
    fn resolve(&self) -> Result<(ExperimentConfig, String)> {
        let (mut cfg, input_hash) = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                (ExperimentConfig::from_json(&text)?, blob_sha256(text.as_bytes()))
            }
            None => (ExperimentConfig::default(), blob_sha256(b"")),
        };
        let p = &mut cfg.problem;
        apply!(p, self, n, layout, kl_tol, kernel_scale, max_rank, target_index, mu0, eps0, cluster_tol, gauge);
        apply!(
            cfg, self, seed, realization, t_min_exp, t_max_exp, alpha, beta, samples, antithetic, basis_covariance,
            mc_min_exp, mc_max_exp, repetitions, timing_repeats, reference_count
        );
        if let Some(dir) = &self.out_dir {
            cfg.output_dir = dir.clone();
        }
        Ok((cfg, input_hash))
    }
}

fn rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    x.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    write_file(path, &serde_json::to_string_pretty(value)?)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_report(cfg: &ExperimentConfig, input_hash: &str, stem: &str, report: &StudyReport) -> Result<()> {
    let csv = cfg.output_dir.join(format!("{stem}.csv"));
    report.table.write_csv(&csv, &cfg.hash(), input_hash)?;
    println!("wrote {}", csv.display());
    print_table(&report.table);
    for (k, v) in &report.slopes {
        match v {
            Some(s) => println!("slope {k}: {s:.3}"),
            None => println!("slope {k}: n/a"),
        }
    }
    for note in &report.notes {
        println!("note: {note}");
    }
    write_json(
        &cfg.output_dir.join(format!("{stem}.json")),
        &json!({ "config": cfg, "slopes": report.slopes, "notes": report.notes, "table": report.table }),
    )
}

fn print_table(t: &Table) {
    println!("{}", t.columns.join("  "));
    for r in &t.rows {
        println!("{}", r.iter().map(|v| format!("{v:.4e}")).collect::<Vec<_>>().join("  "));
    }
}

fn check_slope(report: &StudyReport, key: &str, lo: f64, hi: f64, failures: &mut Vec<String>) {
    match report.slopes.get(key).copied().flatten() {
        Some(s) if (lo..=hi).contains(&s) => {}
        Some(s) => failures.push(format!("{key} slope {s:.3} outside [{lo}, {hi}]")),
        None => failures.push(format!("{key} slope could not be fitted")),
    }
}

/// Returns the list of failed slope checks.
fn run(cmd: Command, cfg: &ExperimentConfig, input_hash: &str) -> Result<Vec<String>> {
    let out = &cfg.output_dir;
    let mut failures = Vec::new();
    match cmd {
        Command::Mesh => {
            let mesh = eiguq::mesh::Mesh::build(cfg.problem.n, cfg.problem.layout)?;
            println!(
                "N = {}, layout {}, {} nodes, {} free, {} triangles",
                mesh.n_side(),
                mesh.layout(),
                mesh.n_nodes(),
                mesh.n_free(),
                mesh.triangles().len()
            );
            write_json(&out.join("mesh.json"), &serde_json::to_value(mesh.to_json())?)?;
        }
        Command::Kl => {
            let p = DiffusionProblem::new(cfg.problem.clone())?;
            let kl = &p.kl_mu;
            println!(
                "rank {}, trace error {:.3e}, sup bound {:.4}",
                kl.rank(),
                kl.trace_error,
                kl.sup_bound()
            );
            write_json(&out.join("kl.json"), &serde_json::to_value(kl.to_json())?)?;
        }
        Command::SolveRef => {
            let p = DiffusionProblem::new(cfg.problem.clone())?;
            let pairs = eiguq::eig::solve_gevp(&p.a0, &p.m0, cfg.reference_count.max(p.cluster.indices.end + 1))?;
            for (i, v) in pairs.values.iter().enumerate() {
                let mark = if p.cluster.indices.contains(&i) { "  *" } else { "" };
                println!("{i:3}  {v:.10}  ({:.6} pi^2){mark}", v / std::f64::consts::PI.powi(2));
            }
            write_json(&out.join("reference.json"), &serde_json::to_value(EigenDump::new(&pairs, &p.cluster))?)?;
        }
        Command::Derivs => {
            let p = DiffusionProblem::new(cfg.problem.clone())?;
            let saddle = p.saddle()?;
            let r = p.draw(cfg.seed, cfg.realization);
            let (mu, eps) = p.bundles(&saddle, &r)?;
            let res_mu = mu.constraint_residual(p.u0(), &p.m0);
            let res_eps = eps.constraint_residual(p.u0(), &p.m0);
            println!("lambda0 = {:.10}, m = {}", p.lambda0(), p.m());
            println!("dLambda_mu = {:?}\ndLambda_eps = {:?}", rows(&mu.dlambda), rows(&eps.dlambda));
            println!("constraint residuals: mu {res_mu:.2e}, eps {res_eps:.2e}");
            write_json(
                &out.join("derivatives.json"),
                &json!({
                    "lambda0": p.lambda0(), "n": p.n(), "m": p.m(), "gauge": cfg.problem.gauge,
                    "dlambda_mu": rows(&mu.dlambda), "dlambda_eps": rows(&eps.dlambda),
                    "du_mu": mu.du.as_slice(), "du_eps": eps.du.as_slice(),
                    "constraint_residual_mu": res_mu, "constraint_residual_eps": res_eps,
                    "pivot_ratio": saddle.pivot_ratio(),
                }),
            )?;
        }
        Command::Mc => {
            let p = DiffusionProblem::new(cfg.problem.clone())?;
            let est = mc_estimate(
                &p,
                &McConfig {
                    samples: cfg.samples,
                    alpha: cfg.alpha,
                    beta: cfg.beta,
                    antithetic: cfg.antithetic,
                    master_seed: cfg.seed,
                    basis_covariance: cfg.basis_covariance,
                    max_reject_fraction: 0.01,
                },
            )?;
            println!("mean Lambda = {:?}", rows(&est.mean_lambda));
            println!(
                "rmse: mean {:.3e} (standard {:.3e}), covariance {:.3e}; rejected {}",
                est.rmse_mean_lambda, est.rmse_mean_lambda_standard, est.rmse_cov_lambda, est.rejected
            );
            let mut t = Table::new(&[
                "M",
                "rmse_mean_lambda",
                "rmse_mean_lambda_standard",
                "rmse_cov_lambda",
                "rmse_mean_basis",
                "rmse_cov_basis",
                "rejected",
            ]);
            t.push(vec![
                est.m as f64,
                est.rmse_mean_lambda,
                est.rmse_mean_lambda_standard,
                est.rmse_cov_lambda,
                est.rmse_mean_basis,
                est.rmse_cov_basis.unwrap_or(f64::NAN),
                est.rejected as f64,
            ]);
            t.write_csv(&out.join("mc.csv"), &cfg.hash(), input_hash)?;
            write_json(
                &out.join("mc.json"),
                &json!({
                    "config": cfg, "mean_lambda": rows(&est.mean_lambda),
                    "mean_lambda_standard": rows(&est.mean_lambda_standard),
                    "cov_lambda": rows(&est.cov_lambda), "rmse_mean_lambda": est.rmse_mean_lambda,
                    "rmse_cov_lambda": est.rmse_cov_lambda, "rmse_mean_basis": est.rmse_mean_basis,
                    "rmse_cov_basis": est.rmse_cov_basis, "clipped": est.clipped,
                    "samples_used": est.samples_used, "pairs_used": est.pairs_used, "rejected": est.rejected,
                    "min_singular": est.min_singular,
                }),
            )?;
        }
        Command::Perturb => {
            let p = DiffusionProblem::new(cfg.problem.clone())?;
            let factors = mode_factors(&p, &p.saddle()?)?;
            let pm = perturb_cov(&factors, cfg.alpha, cfg.beta);
            let cov = pm.cov_lambda();
            println!("mean Lambda = {:?}", rows(&pm.mean_lambda));
            println!("cov vec(Lambda) = {:?}", rows(&cov));
            let basis = pm.cov_basis();
            write_json(
                &out.join("perturb.json"),
                &json!({
                    "config": cfg, "mean_lambda": rows(&pm.mean_lambda), "cov_lambda": rows(&cov),
                    "cov_basis_factor": { "rows": basis.dim(), "cols": basis.rank(), "scale": basis.scale,
                                          "data": basis.factor.as_slice() },
                }),
            )?;
        }
        Command::StudyDet => {
            let p = DiffusionProblem::new(cfg.problem.clone())?;
            let report = run_deterministic_study(&p, cfg.seed, cfg.realization, &cfg.ray())?;
            write_report(cfg, input_hash, "study_det", &report)?;
            for key in ["err_lambda_svd", "err_lambda_polar", "err_basis_svd", "err_basis_polar"] {
                check_slope(&report, key, 1.7, 2.3, &mut failures);
            }
        }
        Command::StudyMc => {
            let p = DiffusionProblem::new(cfg.problem.clone())?;
            let report = run_mc_study(&p, cfg.alpha, cfg.beta, cfg.seed, cfg.repetitions, &cfg.mc_schedule())?;
            write_report(cfg, input_hash, "study_mc", &report)?;
            for key in ["rmse_mean_lambda", "rmse_cov_lambda"] {
                check_slope(&report, key, -0.6, -0.4, &mut failures);
            }
            let std = report.table.column("err_mean_lambda").unwrap();
            let anti = report.table.column("err_mean_lambda_antithetic").unwrap();
            if anti.iter().zip(&std).any(|(a, s)| a > s) {
                failures.push("antithetic mean error exceeds the standard one".into());
            }
        }
        Command::StudyExp => {
            let p = DiffusionProblem::new(cfg.problem.clone())?;
            let factors = mode_factors(&p, &p.saddle()?)?;
            let report = run_expansion_study(&p, &factors, &cfg.ray(), cfg.samples, cfg.seed, cfg.basis_covariance)?;
            write_report(cfg, input_hash, "study_exp", &report)?;
            check_slope(&report, "err_mean_lambda", 1.7, 2.3, &mut failures);
            check_slope(&report, "err_cov_lambda_cv", 3.3, 4.5, &mut failures);
        }
        Command::Timings => {
            let rep = report_timings(&cfg.problem, cfg.timing_repeats, cfg.seed)?;
            for (k, v) in &rep.seconds {
                println!("{k:32} {v:.6e} s");
            }
            write_json(&out.join("timings.json"), &serde_json::to_value(&rep)?)?;
        }
    }
    Ok(failures)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = cli.opts.resolve().and_then(|(cfg, hash)| {
        if cli.opts.assert && !matches!(cli.command, Command::StudyDet | Command::StudyMc | Command::StudyExp) {
            return Err(Error::Config("--assert applies to the study subcommands".into()));
        }
        run(cli.command, &cfg, &hash)
    });
    match result {
        Ok(failures) if cli.opts.assert && !failures.is_empty() => {
            for f in failures {
                eprintln!("assertion failed: {f}");
            }
            ExitCode::from(2)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
