//! Directional derivatives of the degenerate cluster from the bordered
//! system, checked against centered finite differences.

use eiguq::derivative::eigenvalue_derivative;
use eiguq::problem::{fd_error, DiffusionProblem, ProblemConfig};

fn main() -> eiguq::Result<()> {
    let problem = DiffusionProblem::new(ProblemConfig { n: 12, ..Default::default() })?;
    let saddle = problem.saddle()?;
    let r = problem.draw(3, 0);
    let (a1, m1) = problem.directions(&r);
    let (mu, eps) = problem.bundles(&saddle, &r)?;

    let (closed_mu, closed_eps) = eigenvalue_derivative(problem.u0(), &a1, &m1, problem.lambda0())?;
    println!("dΛ_μ =\n{:.6}", mu.dlambda);
    println!("dΛ_ε =\n{:.6}", eps.dlambda);
    println!(
        "bordered vs closed form: {:.2e} {:.2e}",
        (&mu.dlambda - closed_mu).amax(),
        (&eps.dlambda - closed_eps).amax()
    );
    println!(
        "constraint residuals: {:.2e} {:.2e}",
        mu.constraint_residual(problem.u0(), &problem.m0),
        eps.constraint_residual(problem.u0(), &problem.m0)
    );

    let zero = a1.scaled(0.0);
    for h in [1e-2, 5e-3, 2.5e-3] {
        let e_mu = fd_error(&problem, &a1, &zero, &mu.dlambda, h)?;
        let e_eps = fd_error(&problem, &m1.scaled(0.0), &m1, &eps.dlambda, h)?;
        println!("h={h:.1e}  fd error μ {e_mu:.3e}  ε {e_eps:.3e}");
    }
    Ok(())
}
