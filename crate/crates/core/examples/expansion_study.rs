//! Compares Monte Carlo moments with the perturbation predictions along a
//! dyadic amplitude ray. Errors that sit below three sampling RMSEs are left
//! out of the slope fits.
//!
//!     cargo run --release --example expansion_study -- 20000

use eiguq::experiments::{dyadic_ray, expansion_slopes, run_expansion_study};
use eiguq::perturb::mode_factors;
use eiguq::problem::{DiffusionProblem, ProblemConfig};

fn main() -> eiguq::Result<()> {
    let samples = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5000);
    let problem = DiffusionProblem::new(ProblemConfig { n: 12, ..Default::default() })?;
    let factors = mode_factors(&problem, &problem.saddle()?)?;
    let report = run_expansion_study(&problem, &factors, &dyadic_ray(-5, 0), samples, 11, false)?;
    let show = ["t", "err_mean_lambda", "rmse_mean_lambda", "err_cov_lambda_cv", "rmse_cov_lambda_cv"];
    println!("{}", show.join(","));
    let cols: Vec<Vec<f64>> = show.iter().map(|c| report.table.column(c).unwrap_or_default()).collect();
    for i in 0..report.table.rows.len() {
        let row: Vec<String> = cols.iter().map(|c| format!("{:.4e}", c[i])).collect();
        println!("{}", row.join(","));
    }
    println!("{:?}", expansion_slopes(&report.table));
    Ok(())
}
