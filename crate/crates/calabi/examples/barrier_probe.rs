//! Scratch probe for barrier expansion coefficient frames (dev tool).

use calabi::barrier::{verify_barrier, verify_barrier_mutated, BarrierSpec, CoefficientFrame};
use calabi::field::ScalarField;
use calabi::fit::RadialWindow;
use calabi::model::DivisorModel;

fn main() {
    let window = RadialWindow::default();
    let base = DivisorModel::ample_product(2, 1e-3, 0.4, 192, 12, 8, 0.4).unwrap();

    let pure_theta = ScalarField::constant(base.chart(), 1.0);
    println!("== pure model (no weight), frame = ProductChart ==");
    let spec = BarrierSpec::new(base.clone(), 1e-3, 1, 1, 1, pure_theta.clone()).unwrap();
    let rep = verify_barrier(&spec, CoefficientFrame::ProductChart, &window).unwrap();
    println!(
        "  (1,1,1): power={:.3} logpow={:.3} rms={:.3} status={:?} maxres={:.3e}",
        rep.fit.power,
        rep.fit.log_power,
        rep.fit.residual,
        rep.status,
        rep.residual.iter().cloned().fold(0.0f64, f64::max)
    );

    // Weighted norm: ‖S‖ = |z1| e^{-psi/2}, psi = a Re(z1).
    let a = 0.4;
    let psi = ScalarField::real_fn(base.chart(), move |x| a * x[0].exp() * x[1].cos());
    let weighted = base.clone().with_norm_weight(&psi).unwrap();
    let theta_w = ScalarField::constant(weighted.chart(), 1.0);

    for (i, j, k) in [(1u32, 1u32, 1u32), (2, 1, 1), (1, 1, 3)] {
        let spec = BarrierSpec::new(weighted.clone(), 1e-3, i, j, k, theta_w.clone()).unwrap();
        for frame in [CoefficientFrame::ProductChart, CoefficientFrame::GeneralPosition] {
            let rep = verify_barrier(&spec, frame, &window).unwrap();
            println!(
                "weighted ({i},{j},{k}) frame={frame:?}: power={:.3} logpow={:.3} rms={:.3} status={:?}",
                rep.fit.power, rep.fit.log_power, rep.fit.residual, rep.status
            );
        }
        let rep = verify_barrier_mutated(&spec, CoefficientFrame::ProductChart, &window).unwrap();
        println!(
            "weighted ({i},{j},{k}) ProductChart MUTATED: power={:.3} logpow={:.3} rms={:.3} status={:?}",
            rep.fit.power, rep.fit.log_power, rep.fit.residual, rep.status
        );
    }
}
