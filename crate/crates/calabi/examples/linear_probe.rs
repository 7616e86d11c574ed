//! Scratch probe for the inner linear solve (dev tool).

use calabi::chart::GridChart;
use calabi::field::{MetricField, ScalarField};
use calabi::geometry::{ddbar, ma_density, metric_laplacian};
use calabi::solve::{newton_step, SolverConfig};
use std::f64::consts::TAU;

fn main() {
    // Small n = 2 torus; perturb the flat metric mildly.
    let chart = GridChart::unit_torus(2, 16).unwrap();
    let omega = MetricField::flat(&chart);
    let u = ScalarField::real_fn(&chart, |x| 0.02 * (TAU * x[0]).cos() * (TAU * x[2]).cos());
    let form = omega.form().add(&ddbar(&u).unwrap()).unwrap();
    let metric = MetricField::new(form).unwrap();

    // Manufactured: v known, r = Δ_g v, solve back.
    let v = ScalarField::real_fn(&chart, |x| {
        (TAU * x[0]).cos() + 0.5 * (TAU * x[2]).sin() * (TAU * x[1]).cos()
    });
    let r = metric_laplacian(&metric, &v).unwrap();
    println!("rhs built; |r|_inf = {:.3e}", r.max_abs());

    // Use newton_step plumbing indirectly: a single step from u0=0 with
    // target = log density of the known state should reproduce it in one
    // Newton iteration when the problem is linear enough. Instead probe the
    // solver timing through newton_step on a small true problem.
    let f = ScalarField::real_fn(&chart, |x| 0.1 * (TAU * x[0]).cos() * (TAU * x[2]).cos());
    let density_target = f.clone();
    let t0 = std::time::Instant::now();
    let u1 = newton_step(&omega, &ScalarField::zeros(&chart), &density_target, &SolverConfig::default());
    match u1 {
        Ok(u1) => {
            let d = ma_density(&omega, &u1).unwrap();
            let res = d.map_real(f64::ln).sub(&density_target).unwrap().max_abs();
            println!("one newton step: residual {:.3e} in {:.2}s", res, t0.elapsed().as_secs_f64());
        }
        Err(e) => println!("newton step failed after {:.2}s: {e}", t0.elapsed().as_secs_f64()),
    }
}
