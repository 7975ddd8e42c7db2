//! Convergence of the first-order predictions along α = β = t for one
//! realization, written as CSV to stdout.

use eiguq::experiments::{dyadic_ray, run_deterministic_study};
use eiguq::problem::{DiffusionProblem, ProblemConfig};

fn main() -> eiguq::Result<()> {
    let problem = DiffusionProblem::new(ProblemConfig { n: 17, ..Default::default() })?;
    let report = run_deterministic_study(&problem, 1, 0, &dyadic_ray(-12, 0))?;
    print!("{}", report.table.to_csv("-", "-")?);
    for (name, slope) in &report.slopes {
        match slope {
            Some(s) => eprintln!("{name}: {s:.3}"),
            None => eprintln!("{name}: n/a"),
        }
    }
    Ok(())
}
