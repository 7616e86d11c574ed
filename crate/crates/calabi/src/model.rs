//! Explicit model metrics near a divisor and their asymptotic diagnostics.
//!
//! On the trivialising chart the section is the transverse coordinate,
//! `S = z₁`, its weighted norm is `‖S‖_φ = e^{−φ/2}‖S‖`, and every model is
//! built from the log potential `t = −log ‖S‖_φ²` through
//!
//! `ω = (√−1/2π) (k^{1+1/k}/(k+1)) ∂∂̄ t^{(k+1)/k}`
//!   `= (kt)^{1/k} ∂∂̄t + (kt)^{(1−k)/k} ∂t ∂̄t`  (exact expansion).
//!
//! A compact product chart cannot carry a periodic potential with strictly
//! positive curvature along the fiber torus (the fiber mean of `∂∂̄` of any
//! periodic function vanishes), so the transverse bundle curvature along the
//! divisor enters as explicit model data: a constant-in-`r` fiber form
//! standing in for the curvature of the global hermitian metric that a single
//! chart cannot see. Both metric routes include it consistently.

use std::sync::Arc;

use ndarray::{ArrayD, Axis, Slice, Zip};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chart::{ChartKind, GridChart};
use crate::error::{CalabiError, Result};
use crate::field::{Form11Field, MetricField, Parity, ScalarField};
use crate::fit::{fit_power, fit_power_log, DecayFit, RadialWindow};
use crate::geometry;

/// Tolerance for the two-route metric identity check.
pub const FORM_IDENTITY_TOL: f64 = 1e-6;

/// Everything needed to evaluate the model metrics near the divisor.
#[derive(Debug, Clone)]
pub struct DivisorModel {
    chart: Arc<GridChart>,
    dim: usize,
    rank: usize,
    /// Section norm `‖S‖`, positive and `< 1` on the chart.
    norm: ScalarField,
    /// Rescaling weight `φ` of `‖·‖_φ = e^{−φ/2}‖·‖`.
    weight: ScalarField,
    /// Transverse bundle curvature along the divisor (model data; see the
    /// module docs). `None` means the curvature is exactly `∂∂̄` of the
    /// sampled potential.
    divisor_curvature: Option<Form11Field>,
    /// Fiber form `ω_F` for the semi-ample case.
    fiber_form: Option<Form11Field>,
    /// Reference metric `ω′` for the source function.
    reference_metric: Option<MetricField>,
    /// Reference potential `Ψ` with `Ric(ω′) − Ω = (√−1/2π)∂∂̄Ψ`.
    reference_potential: Option<ScalarField>,
    /// Set when the rank lies outside the stated semi-ample range.
    pub rank_flagged: bool,
}

impl DivisorModel {
    pub fn new(
        chart: Arc<GridChart>,
        rank: usize,
        norm: ScalarField,
        weight: ScalarField,
    ) -> Result<Self> {
        if !chart.has_radial_axis() {
            return Err(CalabiError::InvalidConfig(
                "divisor models live on log-polar or product charts".into(),
            ));
        }
        let dim = chart.dim();
        if rank == 0 || rank > dim {
            return Err(CalabiError::InvalidConfig(format!(
                "rank must satisfy 1 <= k <= n, got k = {rank}, n = {dim}"
            )));
        }
        norm.require_real("section norm")?;
        weight.require_real("weight")?;
        if norm.chart() != &chart || weight.chart() != &chart {
            return Err(CalabiError::chart_mismatch("divisor model fields"));
        }
        if norm.min_re() <= 0.0 || norm.max_re() >= 1.0 {
            return Err(CalabiError::InvalidConfig(
                "section norm must satisfy 0 < ‖S‖ < 1 on the chart".into(),
            ));
        }
        let model = DivisorModel {
            rank_flagged: rank + 1 >= dim,
            chart,
            dim,
            rank,
            norm,
            weight,
            divisor_curvature: None,
            fiber_form: None,
            reference_metric: None,
            reference_potential: None,
        };
        if model.log_potential().min_re() <= 0.0 {
            return Err(CalabiError::InvalidConfig(
                "`−log ‖S‖_φ²` must stay positive on the chart".into(),
            ));
        }
        Ok(model)
    }

    /// One-dimensional cylinder model: `‖S‖ = |z|`, `φ = 0`.
    pub fn cylinder(r_min: f64, r_max: f64, res_radial: usize, res_angular: usize) -> Result<Self> {
        let chart = GridChart::annulus(r_min, r_max, res_radial, res_angular)?;
        let norm = ScalarField::real_fn(&chart, |x| x[0].exp());
        let weight = ScalarField::zeros(&chart);
        Self::new(chart, 1, norm, weight)
    }

    /// Ample product model: `‖S‖ = |z₁|` on an annulus × torus chart with a
    /// curved positive fiber block `e^{χ}` as transverse bundle curvature,
    /// `χ = amp (cos 2πx₂ + 0.6 sin 2πy₂)` on the first fiber factor.
    pub fn ample_product(
        n: usize,
        r_min: f64,
        r_max: f64,
        res_radial: usize,
        res_angular: usize,
        fiber_res: usize,
        curvature_amplitude: f64,
    ) -> Result<Self> {
        let chart = GridChart::product(n, r_min, r_max, res_radial, res_angular, &vec![fiber_res; 2 * (n - 1)])?;
        let norm = ScalarField::real_fn(&chart, |x| x[0].exp());
        let weight = ScalarField::zeros(&chart);
        let mut model = Self::new(chart.clone(), n, norm, weight)?;
        let mut curv = Form11Field::zeros(&chart);
        let tau = std::f64::consts::TAU;
        for a in 1..n {
            let g = chart.sample(move |x| {
                (curvature_amplitude * ((tau * x[2 * a]).cos() + 0.6 * (tau * x[2 * a + 1]).sin())).exp()
            });
            *curv.component_mut(a, a) = g;
        }
        model.divisor_curvature = Some(curv);
        Ok(model)
    }

    /// Semi-ample product model of rank `k`: pure `‖S‖ = |z₁|` together with
    /// a flat fiber form on the last `n − k` fiber factors.
    pub fn semiample_product(
        n: usize,
        k: usize,
        r_min: f64,
        r_max: f64,
        res_radial: usize,
        res_angular: usize,
        fiber_res: usize,
    ) -> Result<Self> {
        let chart = GridChart::product(n, r_min, r_max, res_radial, res_angular, &vec![fiber_res; 2 * (n - 1)])?;
        let norm = ScalarField::real_fn(&chart, |x| x[0].exp());
        let weight = ScalarField::zeros(&chart);
        let mut model = Self::new(chart.clone(), k, norm, weight)?;
        if k < n {
            let mut fiber = Form11Field::zeros(&chart);
            for a in k.max(1)..n {
                *fiber.component_mut(a, a) = ArrayD::from_elem(ndarray::IxDyn(chart.shape()), Complex64::new(1.0, 0.0));
            }
            model.fiber_form = Some(fiber);
        }
        if k > 1 {
            // Rank > 1 needs transverse curvature on the intermediate block.
            let mut curv = Form11Field::zeros(&chart);
            for a in 1..k {
                *curv.component_mut(a, a) = ArrayD::from_elem(ndarray::IxDyn(chart.shape()), Complex64::new(1.0, 0.0));
            }
            model.divisor_curvature = Some(curv);
        }
        Ok(model)
    }

    /// Replace the section norm by `‖S‖ = |z₁| e^{−ψ/2}` for a sampled weight.
    pub fn with_norm_weight(mut self, psi: &ScalarField) -> Result<Self> {
        psi.require_real("norm weight")?;
        let mut data = self.chart.coordinate_field(0);
        Zip::from(&mut data).and(psi.data()).par_for_each(|z, &p| {
            *z = Complex64::new(z.norm() * (-p.re / 2.0).exp(), 0.0);
        });
        self.norm = ScalarField::new(self.chart.clone(), data, Parity::Real)?;
        if self.norm.max_re() >= 1.0 {
            return Err(CalabiError::InvalidConfig("weighted norm exceeds 1".into()));
        }
        Ok(self)
    }

    pub fn with_weight(mut self, phi: ScalarField) -> Result<Self> {
        phi.require_real("weight")?;
        self.weight = phi;
        if self.log_potential().min_re() <= 0.0 {
            return Err(CalabiError::InvalidConfig(
                "`−log ‖S‖_φ²` must stay positive on the chart".into(),
            ));
        }
        Ok(self)
    }

    pub fn with_reference(mut self, omega_ref: MetricField, psi: ScalarField) -> Self {
        self.reference_metric = Some(omega_ref);
        self.reference_potential = Some(psi);
        self
    }

    pub fn with_fiber_form(mut self, omega_f: Form11Field) -> Result<Self> {
        check_fiber_slice_independence(&omega_f)?;
        self.fiber_form = Some(omega_f);
        Ok(self)
    }

    pub fn chart(&self) -> &Arc<GridChart> {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn norm(&self) -> &ScalarField {
        &self.norm
    }

    pub fn fiber_form(&self) -> Option<&Form11Field> {
        self.fiber_form.as_ref()
    }

    /// The section value `S = z₁` in the trivialisation.
    pub fn section_field(&self) -> ArrayD<Complex64> {
        self.chart.coordinate_field(0)
    }

    /// `t = −log ‖S‖_φ² = −log ‖S‖² + φ`.
    pub fn log_potential(&self) -> ScalarField {
        let mut data = self.norm.data().clone();
        Zip::from(&mut data).and(self.weight.data()).par_for_each(|v, &p| {
            *v = Complex64::new(-2.0 * v.re.ln() + p.re, 0.0);
        });
        ScalarField::new(self.chart.clone(), data, Parity::Real).expect("real by construction")
    }

    /// `(kt)^{1/k} T + (kt)^{(1−k)/k} ∂t ∂̄t` with `T = ∂∂̄t` plus the stored
    /// transverse curvature. This is the exact expansion of the defining
    /// `∂∂̄ t^{(k+1)/k}` form and the route used to build metrics.
    pub fn expansion_form(&self, k: usize) -> Result<Form11Field> {
        let t = self.log_potential();
        let mut curvature = geometry::ddbar(&t)?;
        if let Some(extra) = &self.divisor_curvature {
            curvature = curvature.add(extra)?;
        }
        let n = self.dim;
        let grads: Vec<ArrayD<Complex64>> = (0..n).map(|i| self.chart.dz(t.data(), i)).collect();
        let kf = k as f64;
        let lam1 = t.map_real(|v| (kf * v).powf(1.0 / kf));
        let lam2 = t.map_real(|v| (kf * v).powf((1.0 - kf) / kf));
        let mut out = curvature.scale_field(&lam1);
        for i in 0..n {
            for j in 0..n {
                let gi = grads[i].as_slice().unwrap();
                let gj = grads[j].as_slice().unwrap();
                let l2 = lam2.data().as_slice().unwrap();
                let comp = out.component_mut(i, j).as_slice_mut().unwrap();
                comp.par_iter_mut().enumerate().for_each(|(m, v)| {
                    *v += l2[m] * gi[m] * gj[m].conj();
                });
            }
        }
        Ok(out.hermitize())
    }

    /// Direct route: `(k^{1+1/k}/(k+1)) ∂∂̄ (t^{(k+1)/k})` plus the weighted
    /// transverse-curvature term.
    pub fn direct_form(&self, k: usize) -> Result<Form11Field> {
        let t = self.log_potential();
        let kf = k as f64;
        let prefactor = kf.powf(1.0 + 1.0 / kf) / (kf + 1.0);
        let potential = t.map_real(|v| v.powf((kf + 1.0) / kf));
        let mut out = geometry::ddbar(&potential)?.scale(prefactor);
        if let Some(extra) = &self.divisor_curvature {
            let lam1 = t.map_real(|v| (kf * v).powf(1.0 / kf));
            out = out.add(&extra.scale_field(&lam1))?;
        }
        Ok(out)
    }

    /// The ample-case model metric (`k = n`), positive definite on the chart.
    ///
    /// On positivity failure the error reports the largest radius at which
    /// the margin stays positive (the empirical neighbourhood size).
    pub fn ample_metric(&self) -> Result<MetricField> {
        if self.rank != self.dim {
            return Err(CalabiError::InvalidConfig(format!(
                "ample metric requires k = n (k = {}, n = {})",
                self.rank, self.dim
            )));
        }
        let form = self.expansion_form(self.dim)?;
        self.form_to_metric(form)
    }

    fn form_to_metric(&self, form: Form11Field) -> Result<MetricField> {
        let margins = form.min_eigenvalue_field();
        let per_radius = radial_reduce(&margins, |a, b| a.min(b), f64::INFINITY);
        let radii = self.chart.radii();
        if let Some(first_bad) = per_radius.iter().position(|&m| m <= crate::field::DEGENERACY_THRESHOLD) {
            let max_positive = radii[..first_bad]
                .last()
                .copied()
                .unwrap_or(0.0);
            return Err(CalabiError::ModelPositivityWindow {
                max_positive_radius: max_positive,
                failing_radius: radii[first_bad],
                margin: per_radius[first_bad],
            });
        }
        Ok(MetricField::from_checked_parts(form, margins))
    }

    /// Semi-ample model form of rank `k ≤ n`, cross-checked against the
    /// direct `∂∂̄` evaluation of the defining potential.
    pub fn semiample_form(&self) -> Result<Form11Field> {
        let expansion = self.expansion_form(self.rank)?;
        let direct = self.direct_form(self.rank)?;
        let mut scale = 0.0f64;
        let mut dev = 0.0f64;
        for (a, b) in expansion.components().iter().zip(direct.components()) {
            for (x, y) in a.iter().zip(b.iter()) {
                scale = scale.max(x.norm());
                dev = dev.max((*x - *y).norm());
            }
        }
        let rel = dev / scale.max(1e-300);
        if rel > FORM_IDENTITY_TOL {
            return Err(CalabiError::FormIdentityMismatch {
                deviation: rel,
                tolerance: FORM_IDENTITY_TOL,
            });
        }
        Ok(expansion)
    }

    /// `λ = (−k log ‖S‖_φ²)^{1/k}`, the fiber weight of the completed metric.
    pub fn fiber_weight(&self) -> ScalarField {
        let kf = self.rank as f64;
        self.log_potential().map_real(|v| (kf * v).powf(1.0 / kf))
    }

    /// Completed semi-ample metric `η = ω_k + λ ω_F`, positive definite.
    pub fn completed_metric(&self) -> Result<MetricField> {
        let base = self.expansion_form(self.rank)?;
        let fiber = self.fiber_form.as_ref().ok_or_else(|| {
            CalabiError::InvalidConfig("completed metric needs a fiber form".into())
        })?;
        if self.rank == self.dim {
            return self.form_to_metric(base);
        }
        let lam = self.fiber_weight();
        let eta = base.add_weighted(fiber, &lam)?;
        self.form_to_metric(eta)
    }

    /// Relative residual of the top-power identity
    /// `η^n = C(k,n) ω^k ∧ λ^{n−k} ω_F^{n−k}` with `C(k,n) = binomial(n,k)`,
    /// measured where the margin of `η` exceeds `margin_floor`.
    pub fn top_power_residual(&self, margin_floor: f64) -> Result<f64> {
        let n = self.dim;
        let k = self.rank;
        let base = self.expansion_form(k)?;
        let eta = self.completed_metric()?;
        let fiber = self.fiber_form.as_ref().expect("checked by completed_metric");
        let lam = self.fiber_weight();

        let mut forms: Vec<&Form11Field> = Vec::with_capacity(n);
        for _ in 0..k {
            forms.push(&base);
        }
        for _ in k..n {
            forms.push(fiber);
        }
        let rhs_mixed = geometry::wedge_top(&forms)?;
        let binom = binomial(n, n - k) as f64;
        let lhs = {
            let eta_refs: Vec<&Form11Field> = (0..n).map(|_| eta.form()).collect();
            geometry::wedge_top(&eta_refs)?
        };
        let mut worst = 0.0f64;
        for (((l, r), w), m) in lhs
            .data()
            .iter()
            .zip(rhs_mixed.data().iter())
            .zip(lam.data().iter())
            .zip(eta.min_eigenvalues().iter())
        {
            if *m < margin_floor {
                continue;
            }
            let rhs = binom * w.re.powi((n - k) as i32) * r.re;
            let rel = (l.re - rhs).abs() / l.re.abs().max(1e-300);
            worst = worst.max(rel);
        }
        Ok(worst)
    }

    /// Source function of the model against the stored reference data:
    /// `f = −log‖S‖² − log(det ω_model / det ω′) − Ψ`, with the innermost
    /// angular mean subtracted.
    pub fn source_defect(&self) -> Result<ScalarField> {
        let omega_ref = self.reference_metric.as_ref().ok_or_else(|| {
            CalabiError::InvalidConfig("source function needs a reference metric".into())
        })?;
        let psi = self.reference_potential.as_ref().ok_or_else(|| {
            CalabiError::InvalidConfig("source function needs a reference potential".into())
        })?;
        let model_metric = if self.rank == self.dim {
            self.ample_metric()?
        } else {
            self.completed_metric()?
        };
        let det_model = model_metric.det_field();
        let det_ref = omega_ref.det_field();
        let mut data = self.norm.data().clone();
        {
            let flat = data.as_slice_mut().unwrap();
            let dm = det_model.as_slice().unwrap();
            let dr = det_ref.as_slice().unwrap();
            let ps = psi.data().as_slice().unwrap();
            flat.par_iter_mut().enumerate().for_each(|(m, v)| {
                let log_s2 = 2.0 * v.re.ln();
                *v = Complex64::new(-log_s2 - (dm[m] / dr[m]).ln() - ps[m].re, 0.0);
            });
        }
        let field = ScalarField::new(self.chart.clone(), data, Parity::Real)?;
        // Normalise so the limit toward the divisor is zero: subtract the
        // innermost-radius angular mean.
        let inner = field.data().index_axis(Axis(0), 0);
        let mean = inner.iter().map(|v| v.re).sum::<f64>() / inner.len() as f64;
        Ok(field.shift(-mean))
    }
}

fn binomial(n: usize, k: usize) -> u64 {
    let mut acc = 1u64;
    for i in 0..k {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}

fn check_fiber_slice_independence(omega_f: &Form11Field) -> Result<()> {
    // ω_F must be the pullback of a fiber form: constant along the radial and
    // angular axes of the log-polar factor.
    for c in omega_f.components() {
        for axis in [0usize, 1usize] {
            let base = c.index_axis(Axis(axis), 0);
            for s in 1..c.shape()[axis] {
                let slice = c.index_axis(Axis(axis), s);
                for (a, b) in base.iter().zip(slice.iter()) {
                    if (*a - *b).norm() > 1e-12 {
                        return Err(CalabiError::InvalidConfig(
                            "fiber form varies across fiber slices".into(),
                        ));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Reduce a real field over everything but the radial axis.
pub(crate) fn radial_reduce(data: &ArrayD<f64>, f: impl Fn(f64, f64) -> f64 + Sync, init: f64) -> Vec<f64> {
    let m = data.shape()[0];
    (0..m)
        .into_par_iter()
        .map(|i| data.index_axis(Axis(0), i).iter().copied().fold(init, &f))
        .collect()
}

fn radial_reduce_complex_max(data: &ArrayD<Complex64>) -> Vec<f64> {
    let m = data.shape()[0];
    (0..m)
        .into_par_iter()
        .map(|i| {
            data.index_axis(Axis(0), i)
                .iter()
                .map(|v| v.norm())
                .fold(0.0, f64::max)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Log expansions
// ---------------------------------------------------------------------------

/// One term `(S^i S̄^j θ + conj) (−log‖S‖_φ²)^ℓ` of a near-divisor expansion.
#[derive(Debug, Clone)]
pub struct ExpansionTerm {
    pub i: u32,
    pub j: u32,
    pub log_power: u32,
    /// Sampled section coefficient θ_{ij}.
    pub theta: ScalarField,
}

/// Finite sum of expansion terms with vanishing order `i + j ≥ 1`.
#[derive(Debug, Clone, Default)]
pub struct LogExpansion {
    pub terms: Vec<ExpansionTerm>,
}

impl LogExpansion {
    pub fn validate(&self) -> Result<()> {
        for t in &self.terms {
            if t.i + t.j == 0 {
                return Err(CalabiError::InvalidConfig(
                    "expansion terms must vanish on the divisor: i + j >= 1".into(),
                ));
            }
        }
        Ok(())
    }

    /// Pointwise evaluation on the model chart.
    pub fn evaluate(&self, model: &DivisorModel) -> Result<ScalarField> {
        self.validate()?;
        let chart = model.chart().clone();
        let s = model.section_field();
        let t = model.log_potential();
        let mut acc = chart.zeros();
        for term in &self.terms {
            if term.theta.chart() != &chart {
                return Err(CalabiError::chart_mismatch("expansion coefficient"));
            }
            let (i, j, l) = (term.i as i32, term.j as i32, term.log_power as i32);
            let th = term.theta.data().as_slice().unwrap();
            let sf = s.as_slice().unwrap();
            let tf = t.data().as_slice().unwrap();
            let flat = acc.as_slice_mut().unwrap();
            flat.par_iter_mut().enumerate().for_each(|(m, v)| {
                let sp = sf[m].powi(i) * sf[m].conj().powi(j);
                let pair = sp * th[m];
                *v += (pair + pair.conj()) * tf[m].re.powi(l);
            });
        }
        let data = acc.mapv(|v| Complex64::new(v.re, 0.0));
        ScalarField::new(chart, data, Parity::Real)
    }
}

// ---------------------------------------------------------------------------
// Asymptotic profiles
// ---------------------------------------------------------------------------

/// Fit `log(per-radius max |field|) = c + a log‖S‖ + b log(−log‖S‖²)`.
pub fn decay_fit(field: &ScalarField, model: &DivisorModel, window: &RadialWindow) -> Result<DecayFit> {
    if field.chart() != model.chart() {
        return Err(CalabiError::chart_mismatch("decay_fit"));
    }
    let radii = model.chart().radii();
    let per_radius = radial_reduce_complex_max(field.data());
    let norm_rep = radial_norm_representative(model);
    let idx = window.select(&radii);
    let mut s = Vec::new();
    let mut v = Vec::new();
    let mut excluded = Vec::new();
    for &i in &idx {
        if per_radius[i] <= 1e-300 {
            excluded.push(i);
        } else {
            s.push(norm_rep[i]);
            v.push(per_radius[i]);
        }
    }
    let window_bounds = (
        idx.first().map(|&i| radii[i]).unwrap_or(radii[0]),
        idx.last().map(|&i| radii[i]).unwrap_or(radii[radii.len() - 1]),
    );
    if s.len() < 4 {
        let mut fit = DecayFit::identically_zero(window_bounds);
        fit.excluded_radii = excluded;
        return Ok(fit);
    }
    let (a, b, rms) = fit_power_log(&s, &v);
    Ok(DecayFit {
        power: a,
        log_power: b,
        residual: rms,
        window: window_bounds,
        excluded_radii: excluded,
        conclusive: true,
    })
}

/// Per-radius geometric-mean representative of `‖S‖`.
fn radial_norm_representative(model: &DivisorModel) -> Vec<f64> {
    let data = model.norm().data();
    let m = data.shape()[0];
    (0..m)
        .map(|i| {
            let slab = data.index_axis(Axis(0), i);
            let mean_log = slab.iter().map(|v| v.re.ln()).sum::<f64>() / slab.len() as f64;
            mean_log.exp()
        })
        .collect()
}

/// Radial profile produced by the streamed curvature evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvatureProfile {
    pub radii: Vec<f64>,
    /// Per-radius max of `|R|_g`.
    pub values: Vec<f64>,
    pub fit: DecayFit,
    /// Set when the curvature is identically zero to tolerance (flat model).
    pub identically_zero: bool,
}

/// Curvature decay of the ample model metric: evaluates `|R|_g` in radial
/// bands and fits the decay exponents (expected `a = 0`, `b = −1/n`).
pub fn curvature_decay_profile(model: &DivisorModel, window: &RadialWindow) -> Result<CurvatureProfile> {
    let metric = model.ample_metric()?;
    let values = curvature_norm_radial_max(&metric)?;
    let radii = model.chart().radii();
    let flat_tol = 1e-6;
    if values.iter().all(|&v| v < flat_tol) {
        return Ok(CurvatureProfile {
            radii,
            values,
            fit: DecayFit::identically_zero((radii_first(model), radii_last(model))),
            identically_zero: true,
        });
    }
    if model.dim() == 1 {
        return Err(CalabiError::InvalidConfig(
            "curvature decay fit needs n >= 2 (the one-dimensional cylinder is flat)".into(),
        ));
    }
    let norm_rep = radial_norm_representative(model);
    let idx = window.select(&radii);
    let s: Vec<f64> = idx.iter().map(|&i| norm_rep[i]).collect();
    let v: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
    let (a, b, rms) = fit_power_log(&s, &v);
    Ok(CurvatureProfile {
        radii: radii.clone(),
        values,
        fit: DecayFit {
            power: a,
            log_power: b,
            residual: rms,
            window: (radii[idx[0]], radii[*idx.last().unwrap()]),
            excluded_radii: Vec::new(),
            conclusive: rms < 0.5,
        },
        identically_zero: false,
    })
}

fn radii_first(model: &DivisorModel) -> f64 {
    model.chart().radii()[0]
}

fn radii_last(model: &DivisorModel) -> f64 {
    *model.chart().radii().last().unwrap()
}

/// Per-radius max of `|R|_g`, evaluated in radial bands so that large product
/// charts never materialise full derivative stacks.
pub fn curvature_norm_radial_max(metric: &MetricField) -> Result<Vec<f64>> {
    let chart = metric.chart().clone();
    if !chart.has_radial_axis() {
        return Err(CalabiError::InvalidConfig(
            "radial curvature profile needs a log-polar chart".into(),
        ));
    }
    let n_radial = chart.shape()[0];
    let band = 8usize;
    let halo = 8usize;
    let mut out = vec![0.0f64; n_radial];
    let radii = chart.radii();
    let mut lo = 0usize;
    while lo < n_radial {
        let hi = (lo + band).min(n_radial);
        let wlo = lo.saturating_sub(halo);
        let whi = (hi + halo).min(n_radial);
        let wlen = whi - wlo;
        let sub_chart = window_chart(&chart, wlo, wlen)?;
        let comps: Vec<ArrayD<Complex64>> = metric
            .form()
            .components()
            .iter()
            .map(|c| {
                c.slice_axis(Axis(0), Slice::from(wlo..whi)).to_owned()
            })
            .collect();
        let margins = metric
            .min_eigenvalues()
            .slice_axis(Axis(0), Slice::from(wlo..whi))
            .to_owned();
        let form = Form11Field::new(sub_chart, comps)?;
        let sub_metric = MetricField::from_checked_parts(form, margins);
        let norms = geometry::curvature_norm_field(&sub_metric)?;
        for i in lo..hi {
            let local = i - wlo;
            out[i] = norms
                .index_axis(Axis(0), local)
                .iter()
                .copied()
                .fold(0.0, f64::max);
        }
        lo = hi;
        let _ = &radii;
    }
    Ok(out)
}

fn window_chart(chart: &Arc<GridChart>, start: usize, len: usize) -> Result<Arc<GridChart>> {
    let rho = &chart.axis(0).coords;
    let r_min = rho[start].exp();
    let r_max = rho[start + len - 1].exp();
    match chart.kind() {
        ChartKind::LogPolarAnnulus { .. } => GridChart::annulus(r_min, r_max, len, chart.shape()[1]),
        ChartKind::Product { fiber_periods, .. } => GridChart::product(
            fiber_periods.len() + 1,
            r_min,
            r_max,
            len,
            chart.shape()[1],
            &chart.shape()[2..],
        ),
        ChartKind::Torus { .. } => unreachable!("guarded by has_radial_axis"),
    }
}

/// Radial completeness diagnostic: `L(r) = ∫_r^{r_max} √(g_{11̄}) e^ρ dρ`
/// averaged over angles, with a fitted growth law `L ~ (−log r)^γ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletenessProfile {
    pub radii: Vec<f64>,
    pub lengths: Vec<f64>,
    /// Exponent γ of the `(−log r)^γ` growth law over the fit window.
    pub exponent: f64,
    pub fit_rms: f64,
    /// Set when the total radial length stays bounded (incomplete metric).
    pub bounded: bool,
}

pub fn completeness_profile(
    g: &MetricField,
    model: &DivisorModel,
    window: &RadialWindow,
) -> Result<CompletenessProfile> {
    if g.chart() != model.chart() {
        return Err(CalabiError::chart_mismatch("completeness_profile"));
    }
    let chart = model.chart();
    let rho = &chart.axis(0).coords;
    let m = rho.len();
    let h = chart.axis(0).spacing;
    // Mean over angles/fiber of √(g_{11̄}) per radius.
    let speed: Vec<f64> = {
        let c = g.form().component(0, 0);
        (0..m)
            .map(|i| {
                let slab = c.index_axis(Axis(0), i);
                slab.iter().map(|v| v.re.max(0.0).sqrt()).sum::<f64>() / slab.len() as f64
            })
            .collect()
    };
    // Cumulative trapezoid from the outer boundary inward, ds = √g e^ρ dρ.
    let mut lengths = vec![0.0f64; m];
    for i in (0..m - 1).rev() {
        let f_i = speed[i] * rho[i].exp();
        let f_ip = speed[i + 1] * rho[i + 1].exp();
        lengths[i] = lengths[i + 1] + 0.5 * (f_i + f_ip) * h;
    }
    let radii = chart.radii();
    let idx = window.select(&radii);
    // Fitting log L against log(−log r) directly is biased by the additive
    // constant from the outer boundary; the radial speed dL/d(−log r) is the
    // pure power `γ u^{γ−1}`, so fit that and shift the exponent by one.
    let x: Vec<f64> = idx.iter().map(|&i| -radii[i].ln()).collect();
    let y: Vec<f64> = idx
        .iter()
        .map(|&i| (speed[i] * radii[i]).max(1e-300))
        .collect();
    let (slope, rms) = fit_power(&x, &y);
    let gamma = slope + 1.0;
    // Bounded when the inner half adds little length.
    let mid = lengths[m / 2];
    let inner = lengths[0];
    let bounded = inner < 1.3 * mid.max(1e-300);
    Ok(CompletenessProfile {
        radii,
        lengths,
        exponent: gamma,
        fit_rms: rms,
        bounded,
    })
}

/// Ball-volume growth against the radial length scale: fits `Vol ~ R^α`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VolumeGrowthProfile {
    pub radii: Vec<f64>,
    pub ball_radius: Vec<f64>,
    pub ball_volume: Vec<f64>,
    pub alpha: f64,
    pub fit_rms: f64,
    pub bounded: bool,
}

pub fn volume_growth_profile(
    g: &MetricField,
    model: &DivisorModel,
    window: &RadialWindow,
) -> Result<VolumeGrowthProfile> {
    let completeness = completeness_profile(g, model, window)?;
    let chart = model.chart();
    let m = chart.shape()[0];
    let det = g.det_field();
    let weights = chart.volume_weights();
    // Volume of the collar {r' >= r}, accumulated from the outer boundary.
    let per_radius: Vec<f64> = (0..m)
        .map(|i| {
            let d = det.index_axis(Axis(0), i);
            let w = weights.index_axis(Axis(0), i);
            d.iter().zip(w.iter()).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect();
    let mut volumes = vec![0.0f64; m];
    for i in (0..m - 1).rev() {
        volumes[i] = volumes[i + 1] + per_radius[i];
    }
    let radii = chart.radii();
    let idx = window.select(&radii);
    let x: Vec<f64> = idx.iter().map(|&i| completeness.lengths[i].max(1e-300)).collect();
    let y: Vec<f64> = idx.iter().map(|&i| volumes[i].max(1e-300)).collect();
    let (alpha, rms) = fit_power(&x, &y);
    let bounded = completeness.bounded;
    Ok(VolumeGrowthProfile {
        radii,
        ball_radius: completeness.lengths.clone(),
        ball_volume: volumes,
        alpha,
        fit_rms: rms,
        bounded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cylinder_metric_is_inverse_square() {
        let model = DivisorModel::cylinder(0.05, 0.8, 96, 16).unwrap();
        let metric = model.ample_metric().unwrap();
        let z = model.chart().coordinate_field(0);
        for (h, z0) in metric.form().component(0, 0).iter().zip(z.iter()) {
            assert_abs_diff_eq!(h.re, 1.0 / z0.norm_sqr(), epsilon = 1e-8 / z0.norm_sqr());
            assert!(h.im.abs() < 1e-10);
        }
    }

    #[test]
    fn weight_shift_equals_norm_rescale() {
        // Replacing φ by φ + c must equal replacing ‖S‖² by e^{c}‖S‖²...
        // both enter only through t, so the metrics agree node-wise.
        let base = DivisorModel::cylinder(0.05, 0.6, 64, 16).unwrap();
        let c = 0.37;
        let shifted = base
            .clone()
            .with_weight(ScalarField::constant(base.chart(), c))
            .unwrap();
        let rescaled = {
            let chart = base.chart().clone();
            let norm = ScalarField::real_fn(&chart, move |x| x[0].exp() * (-c / 2.0f64).exp());
            DivisorModel::new(chart, 1, norm, ScalarField::zeros(base.chart())).unwrap()
        };
        let a = shifted.ample_metric().unwrap();
        let b = rescaled.ample_metric().unwrap();
        for (x, y) in a
            .form()
            .component(0, 0)
            .iter()
            .zip(b.form().component(0, 0).iter())
        {
            assert_abs_diff_eq!(x.re, y.re, epsilon = 1e-9 * x.re.abs());
        }
    }

    #[test]
    fn semiample_reduces_to_ample_at_full_rank() {
        let model = DivisorModel::ample_product(2, 0.05, 0.5, 48, 8, 8, 0.4).unwrap();
        let a = model.ample_metric().unwrap();
        let b = model.semiample_form().unwrap();
        for (x, y) in a.form().components().iter().zip(b.components()) {
            for (u, v) in x.iter().zip(y.iter()) {
                assert!((u - v).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn expansion_term_decay_power() {
        let model = DivisorModel::cylinder(1e-3, 0.5, 128, 16).unwrap();
        let theta = ScalarField::constant(model.chart(), 1.0);
        let expansion = LogExpansion {
            terms: vec![ExpansionTerm {
                i: 1,
                j: 0,
                log_power: 0,
                theta,
            }],
        };
        let field = expansion.evaluate(&model).unwrap();
        let fit = decay_fit(&field, &model, &RadialWindow::default()).unwrap();
        assert_abs_diff_eq!(fit.power, 1.0, epsilon = 0.05);
        assert_abs_diff_eq!(fit.log_power, 0.0, epsilon = 0.05);
    }

    #[test]
    fn empty_expansion_is_zero() {
        let model = DivisorModel::cylinder(0.05, 0.5, 32, 8).unwrap();
        let field = LogExpansion::default().evaluate(&model).unwrap();
        assert_eq!(field.max_abs(), 0.0);
    }

    #[test]
    fn decay_fit_recovers_constructed_exponents() {
        let model = DivisorModel::cylinder(1e-4, 0.5, 192, 16).unwrap();
        let s = model.norm().clone();
        let f1 = s.map_real(|v| v.sqrt());
        let fit = decay_fit(&f1, &model, &RadialWindow::default()).unwrap();
        assert_abs_diff_eq!(fit.power, 0.5, epsilon = 0.02);
        assert_abs_diff_eq!(fit.log_power, 0.0, epsilon = 0.05);

        let f2 = s.map_real(|v| (-2.0 * 2.0 * v.ln()).powf(-0.5));
        let fit = decay_fit(&f2, &model, &RadialWindow::default()).unwrap();
        assert_abs_diff_eq!(fit.power, 0.0, epsilon = 0.02);
        assert_abs_diff_eq!(fit.log_power, -0.5, epsilon = 0.05);
    }

    #[test]
    fn cylinder_is_flat_and_complete() {
        let model = DivisorModel::cylinder(1e-3, 0.5, 128, 16).unwrap();
        let metric = model.ample_metric().unwrap();
        let profile = curvature_decay_profile(&model, &RadialWindow::default()).unwrap();
        assert!(profile.identically_zero);

        let comp = completeness_profile(&metric, &model, &RadialWindow::default()).unwrap();
        assert!(!comp.bounded);
        // L(r) ~ −log r on the cylinder: exponent 1.
        assert_abs_diff_eq!(comp.exponent, 1.0, epsilon = 0.05);

        let vol = volume_growth_profile(&metric, &model, &RadialWindow::default()).unwrap();
        assert_abs_diff_eq!(vol.alpha, 1.0, epsilon = 0.1);
    }

    #[test]
    fn euclidean_annulus_is_incomplete() {
        let model = DivisorModel::cylinder(1e-3, 0.5, 128, 16).unwrap();
        let flat = MetricField::flat(model.chart());
        let comp = completeness_profile(&flat, &model, &RadialWindow::default()).unwrap();
        assert!(comp.bounded);
        let vol = volume_growth_profile(&flat, &model, &RadialWindow::default()).unwrap();
        assert!(vol.bounded);
    }
}
