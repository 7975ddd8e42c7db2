//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.
//!
//! Set `EIGUQ_ACCEPTANCE=1,4,7` to run a subset.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use eiguq::align::{align, align_with_threshold};
use eiguq::derivative::{eigenvalue_derivative, ConstraintGauge, Direction};
use eiguq::eig::{detect_cluster, solve_gevp, CLUSTER_TOL};
use eiguq::experiments::{dyadic_ray, fit_slope, fit_slope_window, run_deterministic_study, run_expansion_study, run_mc_study};
use eiguq::field::{build_kl, pivoted_cholesky, KernelSpec, UNIFORM_VARIANCE};
use eiguq::mesh::{Mesh, NodalField};
use eiguq::perturb::{factor_from_directions, mode_factors, rhs_covariance, solve_covariance_equations};
use eiguq::problem::{fd_error, DiffusionProblem, ProblemConfig};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn problem(n: usize) -> DiffusionProblem {
    DiffusionProblem::new(ProblemConfig {
        n,
        ..Default::default()
    })
    .expect("problem setup")
}

fn in_range(x: Option<f64>, lo: f64, hi: f64) -> bool {
    x.is_some_and(|s| (lo..=hi).contains(&s))
}

fn fmt(x: Option<f64>) -> String {
    x.map_or("n/a".into(), |s| format!("{s:.3}"))
}

fn deterministic_accuracy() -> Verdict {
    let start = Instant::now();
    let p = problem(24);
    let report = run_deterministic_study(&p, 1, 0, &dyadic_ray(-12, -3)).expect("study");
    let elapsed = start.elapsed();
    let t = report.table.column("t").unwrap();
    let lo = 2f64.powi(-12);
    let hi = 2f64.powi(-3);
    let sl = fit_slope_window(&t, &report.table.column("err_lambda_svd").unwrap(), lo, hi);
    let su = fit_slope_window(&t, &report.table.column("err_basis_svd").unwrap(), lo, hi);
    let pass = p.m() == 2 && in_range(sl, 1.7, 2.3) && in_range(su, 1.7, 2.3) && elapsed < Duration::from_secs(120);
    verdict(
        pass,
        format!(
            "N=24, m={}, eigenvalue slope {}, basis slope {}, {:.1} s",
            p.m(),
            fmt(sl),
            fmt(su),
            elapsed.as_secs_f64()
        ),
    )
}

fn derivative_correctness(p: &DiffusionProblem) -> Verdict {
    let saddle = p.saddle().expect("saddle");
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_order = f64::INFINITY;
    let mut worst_rel: f64 = 0.0;
    for _ in 0..5 {
        let r = eiguq::problem::Realization {
            z_mu: (0..p.kl_mu.rank()).map(|_| rng.random::<f64>() - 0.5).collect(),
            z_eps: (0..p.kl_eps.rank()).map(|_| rng.random::<f64>() - 0.5).collect(),
        };
        let (a1, m1) = p.directions(&r);
        let (mu, eps) = p.bundles(&saddle, &r).expect("bundles");
        let (dmu, deps) = eigenvalue_derivative(p.u0(), &a1, &m1, p.lambda0()).expect("direct");
        worst_rel = worst_rel
            .max((&mu.dlambda - &dmu).norm() / dmu.norm())
            .max((&eps.dlambda - &deps).norm() / deps.norm());
        let dl = &mu.dlambda + &eps.dlambda;
        let e1 = fd_error(p, &a1, &m1, &dl, 1e-2).expect("fd");
        let e2 = fd_error(p, &a1, &m1, &dl, 5e-3).expect("fd");
        worst_order = worst_order.min((e1 / e2).log2());
    }
    verdict(
        worst_order >= 1.8 && worst_rel <= 1e-9,
        format!("min FD order {worst_order:.3}, max saddle/direct relative gap {worst_rel:.2e}"),
    )
}

fn orthogonality(p: &DiffusionProblem) -> Verdict {
    let saddle = p.saddle().expect("saddle");
    let mut worst: f64 = 0.0;
    for s in 0..5 {
        let (mu, eps) = p.bundles(&saddle, &p.draw(7, s)).expect("bundles");
        worst = worst
            .max(mu.constraint_residual(p.u0(), &p.m0))
            .max(eps.constraint_residual(p.u0(), &p.m0));
    }
    verdict(worst <= 1e-9, format!("max constraint residual {worst:.2e} over 5 realizations"))
}

fn monte_carlo_rate() -> Verdict {
    let start = Instant::now();
    let p = problem(24);
    let schedule: Vec<usize> = (5..=12).map(|k| 1 << k).collect();
    let report = run_mc_study(&p, 0.5, 0.5, 100, 20, &schedule).expect("mc study");
    let elapsed = start.elapsed();
    let sm = report.slopes["rmse_mean_lambda"];
    let sc = report.slopes["rmse_cov_lambda"];
    let std = report.table.column("err_mean_lambda").unwrap();
    let anti = report.table.column("err_mean_lambda_antithetic").unwrap();
    let anti_ok = anti.iter().zip(&std).all(|(a, s)| a <= s);
    let ratio = anti.iter().zip(&std).map(|(a, s)| a / s).fold(0.0, f64::max);
    let pass = in_range(sm, -0.6, -0.4) && in_range(sc, -0.6, -0.4) && anti_ok && elapsed < Duration::from_secs(900);
    verdict(
        pass,
        format!(
            "N=24, alpha=beta=0.5, mean slope {}, covariance slope {}, antithetic/standard error ratio <= {ratio:.3}, {:.0} s",
            fmt(sm),
            fmt(sc),
            elapsed.as_secs_f64()
        ),
    )
}

fn expansion_orders() -> (Verdict, Verdict) {
    let p = problem(12);
    let factors = mode_factors(&p, &p.saddle().expect("saddle")).expect("factors");
    let report = run_expansion_study(&p, &factors, &dyadic_ray(-5, 0), 100_000, 11, false).expect("study");
    for row in &report.table.rows {
        eprintln!(
            "  t={:.4e}  mean err {:.3e} (rmse {:.2e})  cov err {:.3e} (rmse {:.2e})  cov err vs control-variate reference {:.3e} (rmse {:.2e})",
            row[0], row[2], row[3], row[4], row[5], row[6], row[7]
        );
    }
    let sm = report.slopes["err_mean_lambda"];
    let sb = report.slopes["err_mean_basis"];
    let mean_floor = report.table.column("rmse_mean_lambda").unwrap().iter().copied().fold(0.0, f64::max);
    let v5 = verdict(
        in_range(sm, 1.7, 2.3) && in_range(sb, 1.7, 2.3),
        format!(
            "N=12, M=1e5 antithetic, eigenvalue slope {}, basis slope {}, largest noise floor {mean_floor:.2e}",
            fmt(sm),
            fmt(sb)
        ),
    );
    let t = report.table.column("t").unwrap();
    let err = report.table.column("err_cov_lambda_cv").unwrap();
    let rmse = report.table.column("rmse_cov_lambda_cv").unwrap();
    let used = err.iter().zip(&rmse).filter(|(e, r)| **e > 3.0 * **r).count();
    let sc = report.slopes["err_cov_lambda_cv"];
    let plain = report.slopes["err_cov_lambda"];
    let lowest = t
        .iter()
        .zip(err.iter().zip(&rmse))
        .filter(|(_, (e, r))| **e > 3.0 * **r)
        .map(|(t, _)| *t)
        .fold(f64::INFINITY, f64::min);
    let v6 = verdict(
        used >= 3 && in_range(sc, 3.3, 4.5),
        format!(
            "slope {} over {used} points with t >= {lowest:.3e} (control-variate reference); plain reference slope {}",
            fmt(sc),
            fmt(plain)
        ),
    );
    (v5, v6)
}

fn covariance_oracle() -> Verdict {
    let start = Instant::now();
    let p = problem(5);
    let saddle = p.saddle().expect("saddle");
    let gauge = ConstraintGauge::Symmetric;
    let stiff: Vec<_> = p.mode_stiffness().into_iter().take(3).collect();
    let mass: Vec<_> = p.mode_mass().into_iter().take(3).collect();
    let fmu = factor_from_directions(&saddle, &stiff, Direction::Mu, gauge).unwrap();
    let feps = factor_from_directions(&saddle, &mass, Direction::Eps, gauge).unwrap();
    let (alpha, beta) = (0.3, 0.7);
    let low_rank = (&fmu * fmu.transpose() * alpha * alpha + &feps * feps.transpose() * beta * beta) * UNIFORM_VARIANCE;
    let rhs = rhs_covariance(&saddle, &stiff, Direction::Mu, gauge) * (alpha * alpha)
        + rhs_covariance(&saddle, &mass, Direction::Eps, gauge) * (beta * beta);
    let oracle = solve_covariance_equations(&saddle, &rhs).expect("oracle");
    let rel = (&oracle - &low_rank).norm() / oracle.norm();
    let elapsed = start.elapsed();
    verdict(
        rel <= 1e-8 && elapsed < Duration::from_secs(10),
        format!(
            "N=5, n={}, m={}, 3 modes per field, relative error {rel:.2e}, {:.1} s",
            p.n(),
            p.m(),
            elapsed.as_secs_f64()
        ),
    )
}

fn pivoted_cholesky_checks() -> Verdict {
    let kernel = KernelSpec::default();
    let mut lines = Vec::new();
    let mut pass = true;
    for n_side in [6, 10, 14, 17] {
        let mesh = Mesh::unit_square(n_side).unwrap();
        let nodes = mesh.nodes();
        let n = mesh.n_nodes();
        let entry = |i: usize, j: usize| {
            let (a, b) = (nodes[i], nodes[j]);
            kernel.evaluate(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt())
        };
        let chol = pivoted_cholesky(n, entry, 1e-5, n).unwrap();
        let k = DMatrix::from_fn(n, n, |i, j| entry(i, j));
        let dense_trace = (k - &chol.factor * chol.factor.transpose()).trace();
        let monotone = chol.trace_history.windows(2).all(|w| w[1] <= w[0]);
        let agree = (dense_trace - chol.trace_error()).abs() <= 1e-10;
        pass &= dense_trace <= 1e-5 && monotone && agree && n <= 600;
        lines.push(format!("n={n} rank {} trace {dense_trace:.2e}", chol.rank()));
    }
    // exactness on a diagonal matrix and a rank-one matrix
    let diag = [3.0, 2.0, 1.0];
    let c = pivoted_cholesky(3, |i, j| if i == j { diag[i] } else { 0.0 }, 0.0, 3).unwrap();
    let exact_diag = c.rank() == 3
        && (&c.factor * c.factor.transpose() - DMatrix::from_diagonal(&DVector::from_row_slice(&diag))).amax()
            <= 4.0 * f64::EPSILON;
    let v = [1.0, -2.0, 0.5, 3.0];
    let c1 = pivoted_cholesky(4, |i, j| v[i] * v[j], 1e-14, 4).unwrap();
    let exact_rank1 = c1.rank() == 1 && c1.trace_error().abs() <= 1e-12;
    pass &= exact_diag && exact_rank1;
    let mesh = Mesh::unit_square(24).unwrap();
    let kl = build_kl(&mesh, &kernel, &mesh.assemble_mass_full(&NodalField::constant(&mesh, 1.0)), 1e-5, 2000).unwrap();
    lines.push(format!("achieved KL rank at N=24: {}", kl.rank()));
    verdict(pass, lines.join(", "))
}

fn spectrum_sanity() -> Verdict {
    let exact = [2.0 * PI * PI, 5.0 * PI * PI, 5.0 * PI * PI];
    let mut errs = vec![Vec::new(); 3];
    let mut above = true;
    let mut clusters = true;
    let hs: Vec<f64> = [12usize, 24, 48].iter().map(|&n| 1.0 / (n - 1) as f64).collect();
    for n in [12usize, 24, 48] {
        let mesh = Mesh::unit_square(n).unwrap();
        let one = NodalField::constant(&mesh, 1.0);
        let pairs = solve_gevp(&mesh.assemble_stiffness(&one), &mesh.assemble_mass(&one), 6).unwrap();
        for k in 0..3 {
            above &= pairs.values[k] > exact[k];
            errs[k].push(pairs.values[k] - exact[k]);
        }
        clusters &= detect_cluster(&pairs.values, 1, CLUSTER_TOL).len() == 2;
    }
    let orders: Vec<Option<f64>> = errs.iter().map(|e| fit_slope(&hs, e)).collect();
    let pass = above && clusters && orders.iter().all(|o| in_range(*o, 1.8, 2.2));
    verdict(
        pass,
        format!(
            "orders {} / {} / {}, from above: {above}, m=2 at every N: {clusters}",
            fmt(orders[0]),
            fmt(orders[1]),
            fmt(orders[2])
        ),
    )
}

fn alignment_properties() -> Verdict {
    let p = problem(12);
    let u0 = p.u0();
    let n = p.n();
    let rot = |th: f64| {
        let (s, c) = th.sin_cos();
        DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
    };
    // rotation recovery, including a reflection
    let lam = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 5.0]);
    let mut recover = 0.0f64;
    for (th, flip) in [(0.3, false), (2.0, true), (-1.1, false)] {
        let mut q = rot(th);
        if flip {
            q.column_mut(1).neg_mut();
        }
        let a = align(&(u0 * &q), &lam, u0, &p.m0).unwrap();
        recover = recover
            .max((&a.aligned_basis - u0).amax())
            .max((&a.aligned_lambda - &q * &lam * q.transpose()).amax());
    }
    // orthogonal invariance
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut invariance = 0.0f64;
    for _ in 0..20 {
        let noise = DMatrix::from_fn(n, 2, |_, _| 0.05 * (rng.random::<f64>() - 0.5));
        let pb = u0 + noise;
        let l = DMatrix::from_row_slice(2, 2, &[20.0, 0.5, 0.5, 25.0]);
        let mut q = rot(rng.random::<f64>() * 6.3);
        if rng.random::<bool>() {
            q.column_mut(0).neg_mut();
        }
        let a = align(&pb, &l, u0, &p.m0).unwrap();
        let b = align(&(&pb * &q), &(q.transpose() * &l * &q), u0, &p.m0).unwrap();
        invariance = invariance
            .max((&a.aligned_basis - &b.aligned_basis).amax())
            .max((&a.aligned_lambda - &b.aligned_lambda).amax());
    }
    // approach of the smallest singular value to one along the ray
    let r = p.draw(1, 0);
    let ray = dyadic_ray(-12, -3);
    let defect = |alpha_on: f64, beta_on: f64| -> Vec<f64> {
        ray.iter()
            .map(|&t| {
                let s = p.solve_sample_accurate(alpha_on * t, beta_on * t, &r).unwrap();
                let a = align_with_threshold(&s.basis, &s.lambda_matrix(), u0, &p.m0, 0.0).unwrap();
                (1.0 - a.min_singular()).abs()
            })
            .collect()
    };
    let rate = fit_slope(&ray, &defect(1.0, 1.0));
    let rate_stiffness_only = fit_slope(&ray, &defect(1.0, 0.0));
    let pass = recover <= 1e-12 && invariance <= 1e-10 && in_range(rate, 1.7, 2.3);
    verdict(
        pass,
        format!(
            "recovery error {recover:.1e}, invariance error {invariance:.1e}, 1 - min singular rate along alpha=beta=t {} (alpha only: {})",
            fmt(rate),
            fmt(rate_stiffness_only)
        ),
    )
}

fn main() {
    let selected: Option<Vec<u32>> = std::env::var("EIGUQ_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |k: u32| selected.as_ref().is_none_or(|s| s.contains(&k));
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut report = |k: u32, name: &'static str, v: Verdict| {
        println!("{} criterion {k} ({name}): {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((k, name, v));
    };
    if wanted(1) {
        report(1, "deterministic first-order accuracy", deterministic_accuracy());
    }
    if wanted(2) || wanted(3) {
        let p = problem(24);
        if wanted(2) {
            report(2, "derivative correctness", derivative_correctness(&p));
        }
        if wanted(3) {
            report(3, "orthogonality constraint", orthogonality(&p));
        }
    }
    if wanted(4) {
        report(4, "Monte Carlo rate", monte_carlo_rate());
    }
    if wanted(5) || wanted(6) {
        let (v5, v6) = expansion_orders();
        if wanted(5) {
            report(5, "mean expansion order", v5);
        }
        if wanted(6) {
            report(6, "covariance expansion order", v6);
        }
    }
    if wanted(7) {
        report(7, "covariance-equation oracle", covariance_oracle());
    }
    if wanted(8) {
        report(8, "pivoted Cholesky", pivoted_cholesky_checks());
    }
    if wanted(9) {
        report(9, "spectrum sanity", spectrum_sanity());
    }
    if wanted(10) {
        report(10, "alignment properties", alignment_properties());
    }
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} passed, {} failed",
        results.len() - failed.len(),
        failed.len()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
