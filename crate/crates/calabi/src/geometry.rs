//! Discrete complex differential geometry on chart fields.
//!
//! All coefficient matrices follow the `(√−1/2π)` form convention of
//! [`crate::field`]; the operations here are pure functions from fields to
//! fields and may parallelise freely per node.

use ndarray::{ArrayD, Zip};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{CalabiError, Result};
use crate::field::{linalg, unflatten, CurvatureField, Form11Field, MetricField, ScalarField};

/// Mixed Wirtinger Hessian `(∂∂̄φ)_{ij̄} = ∂²φ/∂z_i ∂z̄_j` of a real potential.
///
/// The result is Hermitian exactly (after symmetrisation); on a torus chart
/// every coefficient has zero mean. Unresolved potentials are rejected via
/// the spectral-tail diagnostic of the chart.
pub fn ddbar(phi: &ScalarField) -> Result<Form11Field> {
    phi.require_real("ddbar requires a real potential")?;
    let chart = phi.chart().clone();
    chart.check_resolved(phi.data())?;
    let n = chart.dim();
    let mut comps = vec![chart.zeros(); n * n];
    for j in 0..n {
        let gj = chart.dzbar(phi.data(), j);
        for i in 0..n {
            comps[i * n + j] = chart.dz(&gj, i);
        }
    }
    Ok(Form11Field::new(chart, comps)?.hermitize())
}

/// `∂∂̄` of an arbitrary complex field, without the reality/Hermitian contract.
pub(crate) fn ddbar_raw(chart: &std::sync::Arc<crate::GridChart>, data: &ArrayD<Complex64>) -> Vec<ArrayD<Complex64>> {
    let n = chart.dim();
    let mut comps = vec![chart.zeros(); n * n];
    for j in 0..n {
        let gj = chart.dzbar(data, j);
        for i in 0..n {
            comps[i * n + j] = chart.dz(&gj, i);
        }
    }
    comps
}

/// Ricci form `−∂∂̄ log det(g_{ij̄})` in the stored convention.
pub fn ricci_form(g: &MetricField) -> Result<Form11Field> {
    let det = g.form().det_field();
    let mut worst = f64::INFINITY;
    let mut worst_idx = 0;
    for (k, v) in det.iter().enumerate() {
        if v.re < worst {
            worst = v.re;
            worst_idx = k;
        }
    }
    if worst <= 1e-300 {
        return Err(CalabiError::DeterminantUnderflow {
            node: unflatten(worst_idx, g.chart().shape()),
            value: worst,
        });
    }
    let log_det = ScalarField::new(
        g.chart().clone(),
        det.mapv(|v| Complex64::new(v.re.ln(), 0.0)),
        crate::field::Parity::Real,
    )?;
    Ok(ddbar(&log_det)?.scale(-1.0))
}

/// First Chern form of the metric; equals the Ricci form in this convention.
pub fn first_chern_form(g: &MetricField) -> Result<Form11Field> {
    ricci_form(g)
}

/// Monge-Ampère density `det(g + ∂∂̄u) / det(g)`.
///
/// Fails with the offending margin field when `g + ∂∂̄u` loses positivity.
pub fn ma_density(omega: &MetricField, u: &ScalarField) -> Result<ScalarField> {
    if omega.chart() != u.chart() {
        return Err(CalabiError::chart_mismatch("ma_density"));
    }
    let hess = ddbar(u)?;
    let perturbed = omega.form().add(&hess)?;
    ma_density_of_form(omega, &perturbed)
}

/// Density variant for a pre-assembled perturbed form.
pub fn ma_density_of_form(omega: &MetricField, perturbed: &Form11Field) -> Result<ScalarField> {
    let margin = perturbed.min_eigenvalue_field();
    let mut worst = f64::INFINITY;
    let mut worst_idx = 0;
    for (k, &v) in margin.as_slice().expect("layout").iter().enumerate() {
        if v < worst {
            worst = v;
            worst_idx = k;
        }
    }
    if worst <= 0.0 {
        return Err(CalabiError::PositivityLoss {
            node: unflatten(worst_idx, omega.chart().shape()),
            margin: worst,
            margin_field: margin.iter().copied().collect(),
        });
    }
    let det_num = perturbed.det_field();
    let det_den = omega.form().det_field();
    let mut data = omega.chart().zeros();
    Zip::from(&mut data)
        .and(&det_num)
        .and(&det_den)
        .par_for_each(|o, &a, &b| *o = Complex64::new(a.re / b.re, 0.0));
    ScalarField::new(omega.chart().clone(), data, crate::field::Parity::Real)
}

/// Metric laplacian `g^{ij̄} ∂_i ∂̄_j v` (trace of the Hessian against `g`).
pub fn metric_laplacian(g: &MetricField, v: &ScalarField) -> Result<ScalarField> {
    if g.chart() != v.chart() {
        return Err(CalabiError::chart_mismatch("metric_laplacian"));
    }
    let hess = ddbar(v)?;
    trace_against(g, &hess)
}

/// `g^{ij̄} h_{ij̄}` pointwise.
pub fn trace_against(g: &MetricField, h: &Form11Field) -> Result<ScalarField> {
    let n = g.dim();
    let ginv = g.inverse_components();
    let mut data = g.chart().zeros();
    let flat = data.as_slice_mut().expect("layout");
    let hc: Vec<&[Complex64]> = h.components().iter().map(|c| c.as_slice().unwrap()).collect();
    let ic: Vec<&[Complex64]> = ginv.iter().map(|c| c.as_slice().unwrap()).collect();
    flat.par_iter_mut().enumerate().for_each(|(k, o)| {
        let mut acc = Complex64::default();
        for i in 0..n {
            for j in 0..n {
                // g^{ij̄} = (G^{-1})[j][i] in matrix storage.
                acc += ic[j * n + i][k] * hc[i * n + j][k];
            }
        }
        // Trace of Hermitian against Hermitian inverse is real; drop roundoff.
        *o = Complex64::new(acc.re, 0.0);
    });
    ScalarField::new(g.chart().clone(), data, crate::field::Parity::Real)
}

/// `∫ f ω_g^n` with the chart's product quadrature (coordinate volume times
/// `det g`, constants of the form convention dropped).
pub fn integrate(f: &ScalarField, g: &MetricField) -> Result<f64> {
    f.require_real("integrate")?;
    if f.chart() != g.chart() {
        return Err(CalabiError::chart_mismatch("integrate"));
    }
    let w = g.chart().volume_weights();
    let det = g.det_field();
    let mut acc = 0.0;
    for ((v, d), wt) in f.data().iter().zip(det.iter()).zip(w.iter()) {
        acc += v.re * d * wt;
    }
    Ok(acc)
}

/// Chart volume `∫ ω_g^n`.
pub fn volume(g: &MetricField) -> f64 {
    let w = g.chart().volume_weights();
    let det = g.det_field();
    det.iter().zip(w.iter()).map(|(d, wt)| d * wt).sum()
}

/// Mean of `f` against `ω_g^n`.
pub fn weighted_mean(f: &ScalarField, g: &MetricField) -> Result<f64> {
    Ok(integrate(f, g)? / volume(g))
}

/// Subtract the `ω_g^n`-mean.
pub fn project_mean_zero(f: &ScalarField, g: &MetricField) -> Result<ScalarField> {
    let m = weighted_mean(f, g)?;
    Ok(f.shift(-m))
}

/// Per-node minimum eigenvalue of a Hermitian coefficient field.
pub fn positivity_margin(h: &Form11Field) -> ScalarField {
    let eig = h.min_eigenvalue_field();
    ScalarField::from_real(h.chart().clone(), eig).expect("margin field is real")
}

/// Worst antisymmetry defect of `∂ω`, i.e. `max |∂_k h_{ij̄} − ∂_i h_{kj̄}|`.
///
/// Zero (to discretisation accuracy) exactly when the form is d-closed.
pub fn closedness_residual(h: &Form11Field) -> f64 {
    let chart = h.chart();
    let n = chart.dim();
    let mut worst = 0.0f64;
    for j in 0..n {
        for k in 0..n {
            for i in k + 1..n {
                let dk = chart.dz(h.component(i, j), k);
                let di = chart.dz(h.component(k, j), i);
                for (a, b) in dk.iter().zip(di.iter()) {
                    worst = worst.max((*a - *b).norm());
                }
            }
        }
    }
    worst
}

/// Top-degree wedge coefficient of `n` (1,1)-forms:
/// `Σ_{σ,τ} sgn(σ) sgn(τ) Π_m h^{(m)}_{σ(m) τ(m)}`, so that a single form
/// gives `n! det(h)`.
pub fn wedge_top(forms: &[&Form11Field]) -> Result<ScalarField> {
    let n = forms[0].dim();
    if forms.len() != n {
        return Err(CalabiError::InvalidConfig(format!(
            "wedge_top needs exactly n = {n} forms, got {}",
            forms.len()
        )));
    }
    let chart = forms[0].chart().clone();
    for f in forms {
        if *f.chart() != chart {
            return Err(CalabiError::chart_mismatch("wedge_top"));
        }
    }
    let perms = permutations(n);
    let comps: Vec<Vec<&[Complex64]>> = forms
        .iter()
        .map(|f| f.components().iter().map(|c| c.as_slice().unwrap()).collect())
        .collect();
    let mut data = chart.zeros();
    let flat = data.as_slice_mut().expect("layout");
    flat.par_iter_mut().enumerate().for_each(|(node, o)| {
        let mut acc = Complex64::default();
        for (sigma, ssign) in &perms {
            for (tau, tsign) in &perms {
                let mut prod = Complex64::new((ssign * tsign) as f64, 0.0);
                for m in 0..n {
                    prod *= comps[m][sigma[m] * n + tau[m]][node];
                }
                acc += prod;
            }
        }
        *o = acc;
    });
    ScalarField::new(chart, data, crate::field::Parity::Complex)
}

fn permutations(n: usize) -> Vec<(Vec<usize>, i32)> {
    let mut out = Vec::new();
    let mut items: Vec<usize> = (0..n).collect();
    heap_permute(&mut items, n, &mut out, &mut 1);
    out
}

fn heap_permute(items: &mut Vec<usize>, k: usize, out: &mut Vec<(Vec<usize>, i32)>, sign: &mut i32) {
    if k == 1 {
        out.push((items.clone(), *sign));
        return;
    }
    for i in 0..k {
        heap_permute(items, k - 1, out, sign);
        if k % 2 == 0 {
            items.swap(i, k - 1);
        } else {
            items.swap(0, k - 1);
        }
        *sign = -*sign;
    }
}

/// Full Riemann curvature tensor of a Kähler metric,
/// `R_{ij̄kl̄} = −∂_k∂̄_l g_{ij̄} + g^{pq̄} (∂_k g_{iq̄})(∂̄_l g_{pj̄})`,
/// symmetrised over the Kähler orbit, with the pointwise norm `|R|_g`.
pub fn curvature_tensor(g: &MetricField) -> Result<CurvatureField> {
    let chart = g.chart().clone();
    let n = chart.dim();
    let (components, norm) = curvature_components(g)?;
    Ok(CurvatureField::from_parts(chart, n, components, norm))
}

pub(crate) fn curvature_components(g: &MetricField) -> Result<(Vec<ArrayD<Complex64>>, ArrayD<f64>)> {
    let chart = g.chart().clone();
    let n = chart.dim();
    // First derivatives P[k][(i,q)] = ∂_k g_{iq̄}.
    let mut first = Vec::with_capacity(n);
    for k in 0..n {
        let mut dk = Vec::with_capacity(n * n);
        for c in g.form().components() {
            dk.push(chart.dz(c, k));
        }
        first.push(dk);
    }
    // Mixed second derivatives Q[(k,l)][(i,j)] = ∂_k ∂̄_l g_{ij̄}.
    let mut second = Vec::with_capacity(n * n);
    for k in 0..n {
        for l in 0..n {
            let mut q = Vec::with_capacity(n * n);
            for c in g.form().components() {
                let dl = chart.dzbar(c, l);
                q.push(chart.dz(&dl, k));
            }
            second.push(q);
        }
    }
    assemble_curvature(g, &first, &second)
}

/// `|R|_g` per node without materialising the tensor components. Used by the
/// streamed profile evaluator on large product charts.
pub(crate) fn curvature_norm_field(g: &MetricField) -> Result<ArrayD<f64>> {
    let chart = g.chart().clone();
    let n = chart.dim();
    let mut first = Vec::with_capacity(n);
    for k in 0..n {
        let mut dk = Vec::with_capacity(n * n);
        for c in g.form().components() {
            dk.push(chart.dz(c, k));
        }
        first.push(dk);
    }
    // ∂̄_l g for all l, reused for every k.
    let mut dbar = Vec::with_capacity(n);
    for l in 0..n {
        let mut row = Vec::with_capacity(n * n);
        for c in g.form().components() {
            row.push(chart.dzbar(c, l));
        }
        dbar.push(row);
    }
    let mut second = Vec::with_capacity(n * n);
    for k in 0..n {
        for l in 0..n {
            let mut q = Vec::with_capacity(n * n);
            for c in &dbar[l] {
                q.push(chart.dz(c, k));
            }
            second.push(q);
        }
    }
    drop(dbar);

    let gc: Vec<&[Complex64]> = g.form().components().iter().map(|c| c.as_slice().unwrap()).collect();
    let fc: Vec<Vec<&[Complex64]>> = first
        .iter()
        .map(|row| row.iter().map(|c| c.as_slice().unwrap()).collect())
        .collect();
    let sc: Vec<Vec<&[Complex64]>> = second
        .iter()
        .map(|row| row.iter().map(|c| c.as_slice().unwrap()).collect())
        .collect();
    let mut norm = ArrayD::<f64>::zeros(ndarray::IxDyn(chart.shape()));
    let norm_flat = norm.as_slice_mut().expect("layout");
    norm_flat.par_iter_mut().enumerate().for_each(|(node, nv)| {
        let mut gm = [Complex64::default(); 9];
        let mut ainv = [Complex64::default(); 9];
        for e in 0..n * n {
            gm[e] = gc[e][node];
        }
        linalg::invert(&gm[..n * n], &mut ainv[..n * n], n);
        let r = curvature_raw_at(node, n, &fc, &sc, &ainv[..n * n]);
        *nv = curvature_norm_at(&r, &ainv[..n * n], n);
    });
    Ok(norm)
}

/// Raw-then-symmetrised curvature components at one node.
fn curvature_raw_at(
    node: usize,
    n: usize,
    fc: &[Vec<&[Complex64]>],
    sc: &[Vec<&[Complex64]>],
    ainv: &[Complex64],
) -> [Complex64; 81] {
    let idx = |i: usize, j: usize, k: usize, l: usize| ((i * n + j) * n + k) * n + l;
    let mut raw = [Complex64::default(); 81];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut v = -sc[k * n + l][i * n + j][node];
                    for p in 0..n {
                        for q in 0..n {
                            v += ainv[q * n + p] * fc[k][i * n + q][node] * fc[l][j * n + p][node].conj();
                        }
                    }
                    raw[idx(i, j, k, l)] = v;
                }
            }
        }
    }
    let mut sym = [Complex64::default(); 81];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    sym[idx(i, j, k, l)] = (raw[idx(i, j, k, l)]
                        + raw[idx(k, j, i, l)]
                        + raw[idx(i, l, k, j)]
                        + raw[idx(k, l, i, j)])
                        * 0.25;
                }
            }
        }
    }
    let mut out = [Complex64::default(); 81];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    out[idx(i, j, k, l)] = (sym[idx(i, j, k, l)] + sym[idx(j, i, l, k)].conj()) * 0.5;
                }
            }
        }
    }
    out
}

/// Pointwise assembly shared by the dense and the streamed evaluators.
pub(crate) fn assemble_curvature(
    g: &MetricField,
    first: &[Vec<ArrayD<Complex64>>],
    second: &[Vec<ArrayD<Complex64>>],
) -> Result<(Vec<ArrayD<Complex64>>, ArrayD<f64>)> {
    let chart = g.chart().clone();
    let n = chart.dim();
    let nodes = chart.node_count();
    let gc: Vec<&[Complex64]> = g.form().components().iter().map(|c| c.as_slice().unwrap()).collect();
    let fc: Vec<Vec<&[Complex64]>> = first
        .iter()
        .map(|row| row.iter().map(|c| c.as_slice().unwrap()).collect())
        .collect();
    let sc: Vec<Vec<&[Complex64]>> = second
        .iter()
        .map(|row| row.iter().map(|c| c.as_slice().unwrap()).collect())
        .collect();

    let n4 = n * n * n * n;
    let mut packed = vec![Complex64::default(); nodes * n4];
    let mut norm = ArrayD::<f64>::zeros(ndarray::IxDyn(chart.shape()));
    let norm_flat = norm.as_slice_mut().expect("layout");

    packed
        .par_chunks_mut(n4)
        .zip(norm_flat.par_iter_mut())
        .enumerate()
        .for_each(|(node, (r_out, nv))| {
            let mut gm = [Complex64::default(); 9];
            let mut ainv = [Complex64::default(); 9];
            for e in 0..n * n {
                gm[e] = gc[e][node];
            }
            linalg::invert(&gm[..n * n], &mut ainv[..n * n], n);
            let r = curvature_raw_at(node, n, &fc, &sc, &ainv[..n * n]);
            r_out.copy_from_slice(&r[..n4]);
            *nv = curvature_norm_at(&r, &ainv[..n * n], n);
        });

    // Unpack node-major buffer into per-component arrays.
    let mut components = Vec::with_capacity(n4);
    for e in 0..n4 {
        let mut c = chart.zeros();
        let flat = c.as_slice_mut().expect("layout");
        flat.par_iter_mut().enumerate().for_each(|(k, v)| *v = packed[k * n4 + e]);
        components.push(c);
    }
    Ok((components, norm))
}

/// `|R|_g` at one node: all four indices raised with the inverse metric.
pub(crate) fn curvature_norm_at(r: &[Complex64], ainv: &[Complex64], n: usize) -> f64 {
    let idx = |i: usize, j: usize, k: usize, l: usize| ((i * n + j) * n + k) * n + l;
    // Stepwise raising: S[pqrs] = A[p][i] Ā[q][j] A[r][k] Ā[s][l] R[ijkl],
    // with Ā[q][j] = A[j][q] for Hermitian A.
    let mut s1 = [Complex64::default(); 81];
    for p in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut acc = Complex64::default();
                    for i in 0..n {
                        acc += ainv[p * n + i] * r[idx(i, j, k, l)];
                    }
                    s1[idx(p, j, k, l)] = acc;
                }
            }
        }
    }
    let mut s2 = [Complex64::default(); 81];
    for p in 0..n {
        for q in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut acc = Complex64::default();
                    for j in 0..n {
                        acc += ainv[j * n + q] * s1[idx(p, j, k, l)];
                    }
                    s2[idx(p, q, k, l)] = acc;
                }
            }
        }
    }
    let mut s3 = [Complex64::default(); 81];
    for p in 0..n {
        for q in 0..n {
            for r3 in 0..n {
                for l in 0..n {
                    let mut acc = Complex64::default();
                    for k in 0..n {
                        acc += ainv[r3 * n + k] * s2[idx(p, q, k, l)];
                    }
                    s3[idx(p, q, r3, l)] = acc;
                }
            }
        }
    }
    let mut total = 0.0f64;
    for p in 0..n {
        for q in 0..n {
            for r3 in 0..n {
                for s in 0..n {
                    let mut acc = Complex64::default();
                    for l in 0..n {
                        acc += ainv[l * n + s] * s3[idx(p, q, r3, l)];
                    }
                    total += (acc * r[idx(p, q, r3, s)].conj()).re;
                }
            }
        }
    }
    total.max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::GridChart;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::TAU;

    #[test]
    fn ddbar_of_constant_vanishes() {
        let chart = GridChart::unit_torus(1, 16).unwrap();
        let phi = ScalarField::constant(&chart, 3.25);
        let h = ddbar(&phi).unwrap();
        assert!(h.component(0, 0).iter().all(|v| v.norm() < 1e-13));
    }

    #[test]
    fn ddbar_cosine_matches_closed_form() {
        // φ = cos(2πx) on the unit torus: (∂∂̄φ)_{11̄} = −π² cos(2πx).
        let chart = GridChart::unit_torus(1, 64).unwrap();
        let phi = ScalarField::real_fn(&chart, |x| (TAU * x[0]).cos());
        let h = ddbar(&phi).unwrap();
        let expect = chart.sample(|x| -std::f64::consts::PI.powi(2) * (TAU * x[0]).cos());
        for (a, b) in h.component(0, 0).iter().zip(expect.iter()) {
            assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-10);
            assert_abs_diff_eq!(a.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn ddbar_norm_squared_on_annulus_is_one() {
        // φ = |z|²: ∂∂̄φ ≡ 1.
        let chart = GridChart::annulus(0.1, 0.8, 64, 32).unwrap();
        let phi = ScalarField::real_fn(&chart, |x| (2.0 * x[0]).exp());
        let h = ddbar(&phi).unwrap();
        for v in h.component(0, 0).iter() {
            assert_abs_diff_eq!(v.re, 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn ma_density_trivial_and_conservation() {
        let chart = GridChart::unit_torus(2, 16).unwrap();
        let omega = MetricField::flat(&chart);
        let u0 = ScalarField::zeros(&chart);
        let d = ma_density(&omega, &u0).unwrap();
        assert!(d.data().iter().all(|v| (v.re - 1.0).abs() < 1e-13));

        let u = ScalarField::real_fn(&chart, |x| 0.01 * (TAU * x[0]).cos() * (TAU * x[2]).cos());
        let d = ma_density(&omega, &u).unwrap();
        let total = integrate(&d, &omega).unwrap();
        assert_abs_diff_eq!(total, volume(&omega), epsilon = 1e-10);
    }

    #[test]
    fn laplacian_cosine_flat_torus() {
        let chart = GridChart::unit_torus(1, 64).unwrap();
        let g = MetricField::flat(&chart);
        let v = ScalarField::real_fn(&chart, |x| (TAU * x[0]).cos());
        let lap = metric_laplacian(&g, &v).unwrap();
        let expect = chart.sample(|x| -std::f64::consts::PI.powi(2) * (TAU * x[0]).cos());
        for (a, b) in lap.data().iter().zip(expect.iter()) {
            assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-10);
        }
    }

    #[test]
    fn integrate_volume_and_oscillation() {
        let chart = GridChart::unit_torus(1, 32).unwrap();
        let g = MetricField::flat(&chart);
        let one = ScalarField::constant(&chart, 1.0);
        assert_abs_diff_eq!(integrate(&one, &g).unwrap(), 1.0, epsilon = 1e-14);
        let f = ScalarField::real_fn(&chart, |x| (TAU * x[0]).cos());
        assert!(integrate(&f, &g).unwrap().abs() < 1e-12);
    }

    #[test]
    fn wedge_top_reduces_to_determinant() {
        let chart = GridChart::unit_torus(2, 8).unwrap();
        let id = Form11Field::identity(&chart);
        let w = wedge_top(&[&id, &id]).unwrap();
        for v in w.data().iter() {
            assert_abs_diff_eq!(v.re, 2.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn flat_metric_is_flat() {
        let chart = GridChart::unit_torus(2, 8).unwrap();
        let g = MetricField::flat(&chart);
        let r = curvature_tensor(&g).unwrap();
        assert!(r.norm_field().iter().all(|v| *v < 1e-12));
        let ric = ricci_form(&g).unwrap();
        assert!(ric.component(0, 0).iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn ricci_scale_invariance() {
        let chart = GridChart::unit_torus(1, 32).unwrap();
        let h = ScalarField::real_fn(&chart, |x| 0.3 * (TAU * x[0]).cos());
        let conf = h.map_real(|v| v.exp());
        let form = Form11Field::identity(&chart).scale_field(&conf);
        let g = MetricField::new(form.clone()).unwrap();
        let g_scaled = MetricField::new(form.scale(7.5)).unwrap();
        let r1 = ricci_form(&g).unwrap();
        let r2 = ricci_form(&g_scaled).unwrap();
        for (a, b) in r1.component(0, 0).iter().zip(r2.component(0, 0).iter()) {
            assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-12);
        }
    }
}
