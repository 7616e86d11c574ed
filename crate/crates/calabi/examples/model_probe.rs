//! Scratch probe for the model-metric asymptotics (dev tool).

use calabi::field::MetricField;
use calabi::fit::RadialWindow;
use calabi::model::{
    completeness_profile, curvature_decay_profile, volume_growth_profile, DivisorModel,
};

fn main() {
    let window = RadialWindow::default();

    // n = 2 ample product model at modest resolution.
    let model = DivisorModel::ample_product(2, 1e-3, 0.4, 160, 16, 16, 0.5).unwrap();
    let t0 = std::time::Instant::now();
    let curv = curvature_decay_profile(&model, &window).unwrap();
    println!(
        "curvature decay: a={:.4} b={:.4} rms={:.4} zero={} ({:.1}s)",
        curv.fit.power,
        curv.fit.log_power,
        curv.fit.residual,
        curv.identically_zero,
        t0.elapsed().as_secs_f64()
    );

    let metric = model.ample_metric().unwrap();
    let comp = completeness_profile(&metric, &model, &window).unwrap();
    println!(
        "completeness: gamma={:.4} rms={:.4} bounded={} (expect 0.75)",
        comp.exponent, comp.fit_rms, comp.bounded
    );
    let vol = volume_growth_profile(&metric, &model, &window).unwrap();
    println!("volume growth: alpha={:.4} rms={:.4} bounded={}", vol.alpha, vol.fit_rms, vol.bounded);

    // Cylinder controls.
    let cyl = DivisorModel::cylinder(1e-3, 0.5, 160, 16).unwrap();
    let cmetric = cyl.ample_metric().unwrap();
    let comp = completeness_profile(&cmetric, &cyl, &window).unwrap();
    let volc = volume_growth_profile(&cmetric, &cyl, &window).unwrap();
    println!(
        "cylinder: gamma={:.4} alpha={:.4} bounded={}",
        comp.exponent, volc.alpha, volc.bounded
    );

    // Euclidean negative control.
    let flat = MetricField::flat(cyl.chart());
    let compf = completeness_profile(&flat, &cyl, &window).unwrap();
    println!("euclidean: bounded={} L(inner)={:.4}", compf.bounded, compf.lengths[0]);

    // Semi-ample identities, k = 1, n = 2.
    let semi = DivisorModel::semiample_product(2, 1, 1e-3, 0.4, 256, 12, 8).unwrap();
    let form = semi.semiample_form().unwrap();
    println!("semiample two-route check passed (256 radial nodes)");
    let resid = semi.top_power_residual(1e-3).unwrap();
    println!("eta top-power identity rel residual: {:.3e}", resid);
    // Rank structure: 1 eigenvalue away from zero, 1 near zero.
    let eigs = form.min_eigenvalue_field();
    let min_eig_max = eigs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    println!("semiample min-eig field max = {:.3e} (should be ~0)", min_eig_max);
}
