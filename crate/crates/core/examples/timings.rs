use eiguq::experiments::report_timings;
use eiguq::problem::ProblemConfig;

fn main() -> eiguq::Result<()> {
    for n in [12, 24] {
        let report = report_timings(&ProblemConfig { n, ..Default::default() }, 5, 0)?;
        println!("N={n} n={} m={} k={}", report.n_free, report.m, report.kl_rank);
        for (stage, s) in &report.seconds {
            println!("  {stage:<24} {:>10.1} µs", s * 1e6);
        }
    }
    Ok(())
}
