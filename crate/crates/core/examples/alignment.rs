//! Aligns a sampled cluster onto the reference basis and compares it with
//! the two first-order predictions as the amplitude shrinks.

use eiguq::align::pairwise_polar_align;
use eiguq::problem::{DiffusionProblem, ProblemConfig};

fn main() -> eiguq::Result<()> {
    let problem = DiffusionProblem::new(ProblemConfig { n: 17, ..Default::default() })?;
    let saddle = problem.saddle()?;
    let r = problem.draw(1, 0);
    let (mu, eps) = problem.bundles(&saddle, &r)?;

    println!("{:>8} {:>12} {:>12} {:>12} {:>12} {:>10}", "t", "λ svd", "λ polar", "U svd", "U polar", "σ_min");
    for k in 0..8 {
        let t = 0.5f64.powi(k);
        let sample = problem.solve_sample(t, t, &r)?;
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
        println!(
            "{t:8.5} {:12.4e} {:12.4e} {:12.4e} {:12.4e} {:10.8}",
            c.err_lambda_svd, c.err_lambda_polar, c.err_basis_svd, c.err_basis_polar, c.min_singular
        );
    }
    Ok(())
}
