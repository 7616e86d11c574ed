//! Scratch probe for the n = 2 Monge-Ampère solve (dev tool).

use calabi::chart::GridChart;
use calabi::field::{MetricField, ScalarField};
use calabi::solve::{solve_calabi, solve_perturbed, CalabiProblem, SolverConfig};
use std::f64::consts::TAU;

fn main() {
    let t0 = std::time::Instant::now();
    let chart = GridChart::unit_torus(2, 32).unwrap();
    let omega = MetricField::flat(&chart);
    let f = ScalarField::real_fn(&chart, |x| 0.3 * (TAU * x[0]).cos() * (TAU * x[2]).cos());
    let problem = CalabiProblem::new(omega.clone(), &f).unwrap();
    let report = solve_calabi(&problem, &SolverConfig::default()).unwrap();
    println!(
        "n=2 solve: residual={:.3e} success={} steps={} total {:.1}s",
        report.final_residual,
        report.success,
        report.steps.len(),
        t0.elapsed().as_secs_f64()
    );
    for s in &report.steps {
        println!(
            "  s={:.4} iters={} dampings={} residual={:.3e} wall={:.0}ms history={:?}",
            s.s,
            s.newton_iterations,
            s.dampings,
            s.residual,
            s.wall_ms,
            s.residual_history.iter().map(|r| format!("{r:.1e}")).collect::<Vec<_>>()
        );
    }

    let t1 = std::time::Instant::now();
    let report_p = solve_perturbed(&omega, &f, 0.1, &SolverConfig::default()).unwrap();
    println!(
        "n=2 perturbed eps=0.1: residual={:.3e} success={} {:.1}s",
        report_p.final_residual,
        report_p.success,
        t1.elapsed().as_secs_f64()
    );

    // n = 1 at 256² for the dim-1 oracle criterion.
    let t2 = std::time::Instant::now();
    let chart1 = GridChart::unit_torus(1, 256).unwrap();
    let omega1 = MetricField::flat(&chart1);
    let f1 = ScalarField::real_fn(&chart1, |x| 0.5 * (TAU * x[0]).cos());
    let problem1 = CalabiProblem::new(omega1, &f1).unwrap();
    let report1 = solve_calabi(&problem1, &SolverConfig::default()).unwrap();
    println!(
        "n=1 256² solve: residual={:.3e} success={} {:.1}s",
        report1.final_residual,
        report1.success,
        t2.elapsed().as_secs_f64()
    );
}
