//! Lowest eigenvalues of the unperturbed problem and the detected cluster.
//! The continuous values are π²(i² + j²), so the second and third eigenvalues
//! form the degenerate pair 5π².

use std::f64::consts::PI;

use eiguq::problem::{DiffusionProblem, ProblemConfig};

fn main() -> eiguq::Result<()> {
    for n in [12, 24, 48] {
        let problem = DiffusionProblem::new(ProblemConfig { n, ..Default::default() })?;
        let values = &problem.reference.values;
        println!("N={n} (n={}):", problem.n());
        for (i, v) in values.iter().take(6).enumerate() {
            println!("  λ{i} = {v:.8}");
        }
        println!(
            "  cluster {:?}, λ0 = {:.8}, relative error vs 5π² = {:.3e}",
            problem.cluster.indices,
            problem.lambda0(),
            problem.lambda0() / (5.0 * PI * PI) - 1.0,
        );
    }
    Ok(())
}
