use eiguq::derivative::Direction;
use eiguq::mc::{mc_estimate, McConfig};
use eiguq::perturb::{eig_cov_direct, mode_factors, perturb_cov};
use eiguq::problem::{DiffusionProblem, ProblemConfig};

fn main() -> eiguq::Result<()> {
    let problem = DiffusionProblem::new(ProblemConfig { n: 12, ..Default::default() })?;
    let saddle = problem.saddle()?;
    let factors = mode_factors(&problem, &saddle)?;
    println!("factor columns: μ {} ε {}, joint dimension {}", factors.mu.ncols(), factors.eps.ncols(), factors.dim());

    let (alpha, beta) = (0.05, 0.05);
    let moments = perturb_cov(&factors, alpha, beta);
    let predicted = moments.cov_lambda();
    let direct = eig_cov_direct(&problem, Direction::Mu)? * (alpha * alpha)
        + eig_cov_direct(&problem, Direction::Eps)? * (beta * beta);
    println!("predicted Cov(vec Λ) =\n{predicted:.4e}");
    println!("closed form agrees to {:.2e}", (&predicted - direct).amax());
    println!("basis covariance rank {}", moments.cov_basis().rank());

    let est = mc_estimate(&problem, &McConfig { samples: 4000, alpha, beta, master_seed: 2, ..Default::default() })?;
    println!("Monte Carlo Cov(vec Λ) =\n{:.4e}", est.cov_lambda);
    println!("difference {:.3e}, sampling RMSE {:.3e}", (&est.cov_lambda - &predicted).norm(), est.rmse_cov_lambda);
    Ok(())
}
