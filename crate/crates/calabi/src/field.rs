//! Sampled fields on a chart: scalars, Hermitian (1,1)-form coefficient
//! matrices, positive-definite metrics and curvature tensors.
//!
//! Coefficient convention: a (1,1)-form is `(√−1/2π) Σ h_{ij̄} dz^i ∧ dz̄^j`
//! and only the matrix `h_{ij̄}` is stored. The Euclidean metric on a unit
//! torus is the identity matrix in this convention, and `∂∂̄` of a potential
//! is exactly the matrix of mixed Wirtinger second derivatives.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use ndarray::{ArrayD, IxDyn, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chart::{ChartKind, GridChart};
use crate::error::{CalabiError, Result};

/// Metrics with margin below this are rejected rather than regularised.
pub const DEGENERACY_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parity {
    Real,
    Complex,
}

/// A sampled scalar function, one value per grid node.
#[derive(Debug, Clone)]
pub struct ScalarField {
    chart: Arc<GridChart>,
    data: ArrayD<Complex64>,
    parity: Parity,
}

impl ScalarField {
    pub fn new(chart: Arc<GridChart>, data: ArrayD<Complex64>, parity: Parity) -> Result<Self> {
        if data.shape() != chart.shape() {
            return Err(CalabiError::chart_mismatch("scalar field shape"));
        }
        if parity == Parity::Real {
            if let Some(bad) = data.iter().find(|v| v.im != 0.0) {
                return Err(CalabiError::NonRealInput {
                    context: format!("real-tagged field has imaginary part {:.3e}", bad.im),
                });
            }
        }
        Ok(ScalarField { chart, data, parity })
    }

    pub fn from_real(chart: Arc<GridChart>, data: ArrayD<f64>) -> Result<Self> {
        let complex = data.mapv(|v| Complex64::new(v, 0.0));
        Self::new(chart, complex, Parity::Real)
    }

    pub fn real_fn(chart: &Arc<GridChart>, f: impl Fn(&[f64]) -> f64 + Sync) -> Self {
        let data = chart.sample(f);
        ScalarField {
            chart: chart.clone(),
            data,
            parity: Parity::Real,
        }
    }

    pub fn complex_fn(chart: &Arc<GridChart>, f: impl Fn(&[f64]) -> Complex64 + Sync) -> Self {
        let mut data = chart.zeros();
        let coords: Vec<Vec<f64>> = (0..chart.shape().len())
            .map(|a| chart.axis(a).coords.clone())
            .collect();
        let ix = chart.indexer();
        let dims = coords.len();
        let flat = data.as_slice_mut().expect("standard layout");
        use rayon::prelude::*;
        flat.par_iter_mut().enumerate().for_each(|(k, v)| {
            let mut x = [0.0f64; 16];
            for a in 0..dims {
                x[a] = coords[a][ix.axis_index(k, a)];
            }
            *v = f(&x[..dims]);
        });
        ScalarField {
            chart: chart.clone(),
            data,
            parity: Parity::Complex,
        }
    }

    pub fn zeros(chart: &Arc<GridChart>) -> Self {
        ScalarField {
            chart: chart.clone(),
            data: chart.zeros(),
            parity: Parity::Real,
        }
    }

    pub fn constant(chart: &Arc<GridChart>, value: f64) -> Self {
        ScalarField {
            chart: chart.clone(),
            data: ArrayD::from_elem(IxDyn(chart.shape()), Complex64::new(value, 0.0)),
            parity: Parity::Real,
        }
    }

    pub fn chart(&self) -> &Arc<GridChart> {
        &self.chart
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn is_real(&self) -> bool {
        self.parity == Parity::Real
    }

    pub fn data(&self) -> &ArrayD<Complex64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut ArrayD<Complex64> {
        &mut self.data
    }

    pub fn re(&self) -> ArrayD<f64> {
        self.data.mapv(|v| v.re)
    }

    /// Drop the (exactly zero) imaginary part of a real-tagged field.
    pub fn require_real(&self, context: &str) -> Result<()> {
        if self.is_real() {
            Ok(())
        } else {
            Err(CalabiError::NonRealInput {
                context: context.to_string(),
            })
        }
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64 + Sync) -> ScalarField {
        let mut out = self.clone();
        Zip::from(&mut out.data).par_for_each(|v| *v = f(*v));
        out
    }

    /// Pointwise map that preserves the real tag.
    pub fn map_real(&self, f: impl Fn(f64) -> f64 + Sync) -> ScalarField {
        debug_assert!(self.is_real());
        let mut out = self.clone();
        Zip::from(&mut out.data).par_for_each(|v| *v = Complex64::new(f(v.re), 0.0));
        out
    }

    pub fn scale(&self, c: f64) -> ScalarField {
        self.map(|v| v * c)
    }

    pub fn shift(&self, c: f64) -> ScalarField {
        let mut out = self.clone();
        Zip::from(&mut out.data).par_for_each(|v| *v += c);
        out
    }

    pub fn add(&self, other: &ScalarField) -> Result<ScalarField> {
        if self.chart != other.chart {
            return Err(CalabiError::chart_mismatch("scalar add"));
        }
        let mut out = self.clone();
        out.parity = if self.is_real() && other.is_real() {
            Parity::Real
        } else {
            Parity::Complex
        };
        Zip::from(&mut out.data).and(&other.data).par_for_each(|a, b| *a += b);
        Ok(out)
    }

    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        self.add(&other.scale(-1.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_re(&self) -> f64 {
        self.data.iter().map(|v| v.re).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_re(&self) -> f64 {
        self.data.iter().map(|v| v.re).fold(f64::INFINITY, f64::min)
    }
}

/// Coefficient matrices `h_{ij̄}` of a (1,1)-form, Hermitian at every node.
#[derive(Debug, Clone)]
pub struct Form11Field {
    chart: Arc<GridChart>,
    dim: usize,
    /// Row-major components, entry `i * dim + j` holding `h_{i j̄}`.
    components: Vec<ArrayD<Complex64>>,
}

impl Form11Field {
    pub fn new(chart: Arc<GridChart>, components: Vec<ArrayD<Complex64>>) -> Result<Self> {
        let dim = chart.dim();
        if components.len() != dim * dim {
            return Err(CalabiError::chart_mismatch("form components"));
        }
        for c in &components {
            if c.shape() != chart.shape() {
                return Err(CalabiError::chart_mismatch("form component shape"));
            }
        }
        Ok(Form11Field {
            chart,
            dim,
            components,
        })
    }

    pub fn zeros(chart: &Arc<GridChart>) -> Self {
        let dim = chart.dim();
        Form11Field {
            chart: chart.clone(),
            dim,
            components: (0..dim * dim).map(|_| chart.zeros()).collect(),
        }
    }

    pub fn identity(chart: &Arc<GridChart>) -> Self {
        Self::scaled_identity(chart, 1.0)
    }

    pub fn scaled_identity(chart: &Arc<GridChart>, c: f64) -> Self {
        let dim = chart.dim();
        let mut form = Self::zeros(chart);
        for i in 0..dim {
            form.components[i * dim + i] =
                ArrayD::from_elem(IxDyn(chart.shape()), Complex64::new(c, 0.0));
        }
        form
    }

    pub fn chart(&self) -> &Arc<GridChart> {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn component(&self, i: usize, j: usize) -> &ArrayD<Complex64> {
        &self.components[i * self.dim + j]
    }

    pub fn component_mut(&mut self, i: usize, j: usize) -> &mut ArrayD<Complex64> {
        &mut self.components[i * self.dim + j]
    }

    pub fn components(&self) -> &[ArrayD<Complex64>] {
        &self.components
    }

    /// Enforce `h_{ij̄} = conj(h_{jī})` exactly by averaging.
    pub fn hermitize(mut self) -> Self {
        let dim = self.dim;
        for i in 0..dim {
            for j in i..dim {
                if i == j {
                    let c = &mut self.components[i * dim + i];
                    Zip::from(c).par_for_each(|v| *v = Complex64::new(v.re, 0.0));
                } else {
                    let (lo, hi) = self.components.split_at_mut(i * dim + j + 1);
                    let upper = &mut lo[i * dim + j];
                    let lower = &mut hi[j * dim + i - (i * dim + j + 1)];
                    Zip::from(upper).and(lower).par_for_each(|u, l| {
                        let avg = (*u + l.conj()) * 0.5;
                        *u = avg;
                        *l = avg.conj();
                    });
                }
            }
        }
        self
    }

    pub fn hermitian_defect(&self) -> f64 {
        let dim = self.dim;
        let mut worst = 0.0f64;
        for i in 0..dim {
            for j in 0..dim {
                let a = self.component(i, j);
                let b = self.component(j, i);
                for (x, y) in a.iter().zip(b.iter()) {
                    worst = worst.max((*x - y.conj()).norm());
                }
            }
        }
        worst
    }

    pub fn add(&self, other: &Form11Field) -> Result<Form11Field> {
        self.add_scaled(other, 1.0)
    }

    pub fn add_scaled(&self, other: &Form11Field, c: f64) -> Result<Form11Field> {
        if self.chart != other.chart {
            return Err(CalabiError::chart_mismatch("form add"));
        }
        let mut out = self.clone();
        for (a, b) in out.components.iter_mut().zip(&other.components) {
            Zip::from(a).and(b).par_for_each(|x, y| *x += y * c);
        }
        Ok(out)
    }

    /// Add `w(node) * other` with a scalar weight field.
    pub fn add_weighted(&self, other: &Form11Field, w: &ScalarField) -> Result<Form11Field> {
        if self.chart != other.chart || self.chart != *w.chart() {
            return Err(CalabiError::chart_mismatch("form add_weighted"));
        }
        let mut out = self.clone();
        for (a, b) in out.components.iter_mut().zip(&other.components) {
            Zip::from(a).and(b).and(w.data()).par_for_each(|x, y, s| *x += y * s);
        }
        Ok(out)
    }

    pub fn scale(&self, c: f64) -> Form11Field {
        let mut out = self.clone();
        for a in out.components.iter_mut() {
            Zip::from(a).par_for_each(|x| *x *= c);
        }
        out
    }

    pub fn scale_field(&self, w: &ScalarField) -> Form11Field {
        let mut out = self.clone();
        for a in out.components.iter_mut() {
            Zip::from(a).and(w.data()).par_for_each(|x, s| *x *= s);
        }
        out
    }

    /// Per-node minimum eigenvalue (fields are Hermitian, eigenvalues real).
    pub fn min_eigenvalue_field(&self) -> ArrayD<f64> {
        let dim = self.dim;
        let mut out = ArrayD::<f64>::zeros(IxDyn(self.chart.shape()));
        let comps: Vec<&[Complex64]> = self
            .components
            .iter()
            .map(|c| c.as_slice().expect("standard layout"))
            .collect();
        let flat = out.as_slice_mut().expect("standard layout");
        use rayon::prelude::*;
        flat.par_iter_mut().enumerate().for_each(|(k, v)| {
            let mut m = [Complex64::default(); 9];
            for i in 0..dim {
                for j in 0..dim {
                    m[i * dim + j] = comps[i * dim + j][k];
                }
            }
            *v = linalg::hermitian_min_eigenvalue(&m[..dim * dim], dim);
        });
        out
    }

    /// Determinant of the coefficient matrix per node.
    pub fn det_field(&self) -> ArrayD<Complex64> {
        let dim = self.dim;
        let mut out = self.chart.zeros();
        let comps: Vec<&[Complex64]> = self
            .components
            .iter()
            .map(|c| c.as_slice().expect("standard layout"))
            .collect();
        let flat = out.as_slice_mut().expect("standard layout");
        use rayon::prelude::*;
        flat.par_iter_mut().enumerate().for_each(|(k, v)| {
            let mut m = [Complex64::default(); 9];
            for e in 0..dim * dim {
                m[e] = comps[e][k];
            }
            *v = linalg::det(&m[..dim * dim], dim);
        });
        out
    }
}

/// A positive-definite Hermitian metric: a form plus its cached margins.
#[derive(Debug, Clone)]
pub struct MetricField {
    form: Form11Field,
    min_eig: ArrayD<f64>,
}

impl MetricField {
    /// Validates positive definiteness at every node.
    pub fn new(form: Form11Field) -> Result<Self> {
        let min_eig = form.min_eigenvalue_field();
        let mut worst = f64::INFINITY;
        let mut worst_idx = 0usize;
        for (k, &v) in min_eig.as_slice().expect("layout").iter().enumerate() {
            if v < worst {
                worst = v;
                worst_idx = k;
            }
        }
        if worst <= DEGENERACY_THRESHOLD {
            let node = unflatten(worst_idx, form.chart().shape());
            return Err(CalabiError::DegenerateMetric {
                node,
                value: worst,
                threshold: DEGENERACY_THRESHOLD,
            });
        }
        Ok(MetricField { form, min_eig })
    }

    pub fn flat(chart: &Arc<GridChart>) -> Self {
        let form = Form11Field::identity(chart);
        let min_eig = ArrayD::from_elem(IxDyn(chart.shape()), 1.0);
        MetricField { form, min_eig }
    }

    /// Wrap a form whose margin field has already been computed and checked.
    pub(crate) fn from_checked_parts(form: Form11Field, min_eig: ArrayD<f64>) -> Self {
        MetricField { form, min_eig }
    }

    pub fn form(&self) -> &Form11Field {
        &self.form
    }

    pub fn into_form(self) -> Form11Field {
        self.form
    }

    pub fn chart(&self) -> &Arc<GridChart> {
        self.form.chart()
    }

    pub fn dim(&self) -> usize {
        self.form.dim()
    }

    pub fn min_eigenvalues(&self) -> &ArrayD<f64> {
        &self.min_eig
    }

    /// Global positivity margin.
    pub fn margin(&self) -> f64 {
        self.min_eig.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Inverse coefficient matrices `h^{ij̄}` per node, row-major.
    pub fn inverse_components(&self) -> Vec<ArrayD<Complex64>> {
        let dim = self.dim();
        let chart = self.chart();
        let comps: Vec<&[Complex64]> = self
            .form
            .components()
            .iter()
            .map(|c| c.as_slice().expect("layout"))
            .collect();
        let nodes = chart.node_count();
        // Node-major scratch: each node owns a contiguous dim² block.
        let mut buf = vec![Complex64::default(); nodes * dim * dim];
        use rayon::prelude::*;
        buf.par_chunks_mut(dim * dim).enumerate().for_each(|(k, inv)| {
            let mut m = [Complex64::default(); 9];
            for e in 0..dim * dim {
                m[e] = comps[e][k];
            }
            linalg::invert(&m[..dim * dim], inv, dim);
        });
        (0..dim * dim)
            .map(|e| {
                let mut c = chart.zeros();
                let flat = c.as_slice_mut().expect("layout");
                flat.par_iter_mut()
                    .enumerate()
                    .for_each(|(k, v)| *v = buf[k * dim * dim + e]);
                c
            })
            .collect()
    }

    /// Real determinant of the (positive) coefficient matrix per node.
    pub fn det_field(&self) -> ArrayD<f64> {
        self.form.det_field().mapv(|v| v.re)
    }
}

/// Riemann curvature tensor components `R_{ij̄kl̄}` with the pointwise norm.
#[derive(Debug, Clone)]
pub struct CurvatureField {
    chart: Arc<GridChart>,
    dim: usize,
    /// Index `((i * n + j) * n + k) * n + l`.
    components: Vec<ArrayD<Complex64>>,
    norm: ArrayD<f64>,
}

impl CurvatureField {
    pub(crate) fn from_parts(
        chart: Arc<GridChart>,
        dim: usize,
        components: Vec<ArrayD<Complex64>>,
        norm: ArrayD<f64>,
    ) -> Self {
        CurvatureField {
            chart,
            dim,
            components,
            norm,
        }
    }

    pub fn chart(&self) -> &Arc<GridChart> {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn component(&self, i: usize, j: usize, k: usize, l: usize) -> &ArrayD<Complex64> {
        let n = self.dim;
        &self.components[((i * n + j) * n + k) * n + l]
    }

    /// Pointwise norm `|R|_g`.
    pub fn norm_field(&self) -> &ArrayD<f64> {
        &self.norm
    }

    /// Worst violation of the Kähler and conjugation symmetries.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let r = self.component(i, j, k, l);
                        let a = self.component(k, j, i, l);
                        let b = self.component(i, l, k, j);
                        let c = self.component(j, i, l, k);
                        for (((x, y), z), w) in r.iter().zip(a.iter()).zip(b.iter()).zip(c.iter()) {
                            worst = worst.max((*x - y).norm());
                            worst = worst.max((*x - z).norm());
                            worst = worst.max((*x - w.conj()).norm());
                        }
                    }
                }
            }
        }
        worst
    }
}

pub(crate) fn unflatten(mut k: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for a in (0..shape.len()).rev() {
        idx[a] = k % shape[a];
        k /= shape[a];
    }
    idx
}

/// Small dense complex linear algebra used per grid node.
pub(crate) mod linalg {
    use num_complex::Complex64;

    pub fn det(m: &[Complex64], n: usize) -> Complex64 {
        match n {
            1 => m[0],
            2 => m[0] * m[3] - m[1] * m[2],
            3 => {
                m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
                    + m[2] * (m[3] * m[7] - m[4] * m[6])
            }
            _ => lu_det(m, n),
        }
    }

    fn lu_det(m: &[Complex64], n: usize) -> Complex64 {
        let mut a = m.to_vec();
        let mut det = Complex64::new(1.0, 0.0);
        for col in 0..n {
            let mut pivot = col;
            let mut best = a[col * n + col].norm();
            for r in col + 1..n {
                let v = a[r * n + col].norm();
                if v > best {
                    best = v;
                    pivot = r;
                }
            }
            if best == 0.0 {
                return Complex64::default();
            }
            if pivot != col {
                for c in 0..n {
                    a.swap(col * n + c, pivot * n + c);
                }
                det = -det;
            }
            let d = a[col * n + col];
            det *= d;
            for r in col + 1..n {
                let f = a[r * n + col] / d;
                for c in col..n {
                    let v = a[col * n + c];
                    a[r * n + c] -= f * v;
                }
            }
        }
        det
    }

    pub fn invert(m: &[Complex64], out: &mut [Complex64], n: usize) {
        match n {
            1 => out[0] = Complex64::new(1.0, 0.0) / m[0],
            2 => {
                let d = det(m, 2);
                out[0] = m[3] / d;
                out[1] = -m[1] / d;
                out[2] = -m[2] / d;
                out[3] = m[0] / d;
            }
            _ => gauss_invert(m, out, n),
        }
    }

    fn gauss_invert(m: &[Complex64], out: &mut [Complex64], n: usize) {
        let mut a = m.to_vec();
        for r in 0..n {
            for c in 0..n {
                out[r * n + c] = if r == c {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::default()
                };
            }
        }
        for col in 0..n {
            let mut pivot = col;
            let mut best = a[col * n + col].norm();
            for r in col + 1..n {
                let v = a[r * n + col].norm();
                if v > best {
                    best = v;
                    pivot = r;
                }
            }
            if pivot != col {
                for c in 0..n {
                    a.swap(col * n + c, pivot * n + c);
                    out.swap(col * n + c, pivot * n + c);
                }
            }
            let d = a[col * n + col];
            for c in 0..n {
                a[col * n + c] /= d;
                out[col * n + c] /= d;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[r * n + col];
                if f.norm() == 0.0 {
                    continue;
                }
                for c in 0..n {
                    let av = a[col * n + c];
                    let ov = out[col * n + c];
                    a[r * n + c] -= f * av;
                    out[r * n + c] -= f * ov;
                }
            }
        }
    }

    /// Minimum eigenvalue of a Hermitian matrix (closed form for n <= 2,
    /// Jacobi sweeps on the real embedding otherwise).
    pub fn hermitian_min_eigenvalue(m: &[Complex64], n: usize) -> f64 {
        match n {
            1 => m[0].re,
            2 => {
                let a = m[0].re;
                let c = m[3].re;
                let half = 0.5 * (a - c);
                let rad = (half * half + m[1].norm_sqr()).sqrt();
                0.5 * (a + c) - rad
            }
            _ => {
                // Embed H = X + iY into the real symmetric [[X, -Y], [Y, X]];
                // eigenvalues of H appear twice.
                let d = 2 * n;
                let mut s = vec![0.0f64; d * d];
                for i in 0..n {
                    for j in 0..n {
                        let v = m[i * n + j];
                        s[i * d + j] = v.re;
                        s[(i + n) * d + j + n] = v.re;
                        s[i * d + j + n] = -v.im;
                        s[(i + n) * d + j] = v.im;
                    }
                }
                jacobi_min_eigenvalue(&mut s, d)
            }
        }
    }

    fn jacobi_min_eigenvalue(a: &mut [f64], n: usize) -> f64 {
        for _ in 0..32 {
            let mut off = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    off += a[i * n + j] * a[i * n + j];
                }
            }
            if off < 1e-28 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[p * n + q];
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let app = a[p * n + p];
                    let aqq = a[q * n + q];
                    let theta = 0.5 * (aqq - app) / apq;
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k * n + p];
                        let akq = a[k * n + q];
                        a[k * n + p] = c * akp - s * akq;
                        a[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p * n + k];
                        let aqk = a[q * n + k];
                        a[p * n + k] = c * apk - s * aqk;
                        a[q * n + k] = s * apk + c * aqk;
                    }
                }
            }
        }
        (0..n).map(|i| a[i * n + i]).fold(f64::INFINITY, f64::min)
    }
}

// ---------------------------------------------------------------------------
// Serialization: one JSON header line, then little-endian f64 payload in
// row-major node order. Complex fields interleave (re, im) per node; multi
// component fields store component blocks sequentially.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct FieldHeader {
    kind: String,
    n: usize,
    resolution: Vec<usize>,
    geometry: ChartKind,
    parity: Parity,
    #[serde(default = "one")]
    components: usize,
}

fn one() -> usize {
    1
}

fn chart_kind_name(kind: &ChartKind) -> &'static str {
    match kind {
        ChartKind::Torus { .. } => "torus",
        ChartKind::LogPolarAnnulus { .. } => "log-polar-annulus",
        ChartKind::Product { .. } => "product",
    }
}

pub(crate) fn chart_from_header(geometry: &ChartKind, resolution: &[usize]) -> Result<Arc<GridChart>> {
    match geometry {
        ChartKind::Torus { periods } => GridChart::torus(periods.len(), resolution, periods),
        ChartKind::LogPolarAnnulus { r_min, r_max } => {
            GridChart::annulus(*r_min, *r_max, resolution[0], resolution[1])
        }
        ChartKind::Product {
            r_min,
            r_max,
            fiber_periods,
        } => GridChart::product(
            fiber_periods.len() + 1,
            *r_min,
            *r_max,
            resolution[0],
            resolution[1],
            &resolution[2..],
        ),
    }
}

fn write_payload<W: Write>(w: &mut W, arrays: &[&ArrayD<Complex64>], parity: Parity) -> Result<()> {
    for data in arrays {
        for v in data.iter() {
            w.write_all(&v.re.to_le_bytes())?;
            if parity == Parity::Complex {
                w.write_all(&v.im.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

impl ScalarField {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        let header = FieldHeader {
            kind: chart_kind_name(self.chart.kind()).to_string(),
            n: self.chart.dim(),
            resolution: self.chart.shape().to_vec(),
            geometry: self.chart.kind().clone(),
            parity: self.parity,
            components: 1,
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        write_payload(&mut w, &[&self.data], self.parity)
    }

    pub fn load(path: &Path) -> Result<ScalarField> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let mut line = String::new();
        r.read_line(&mut line)?;
        let header: FieldHeader = serde_json::from_str(line.trim_end())?;
        let chart = chart_from_header(&header.geometry, &header.resolution)?;
        let mut data = chart.zeros();
        for v in data.iter_mut() {
            let re = read_f64(&mut r)?;
            let im = if header.parity == Parity::Complex {
                read_f64(&mut r)?
            } else {
                0.0
            };
            *v = Complex64::new(re, im);
        }
        ScalarField::new(chart, data, header.parity)
    }
}

impl Form11Field {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        let header = FieldHeader {
            kind: chart_kind_name(self.chart.kind()).to_string(),
            n: self.chart.dim(),
            resolution: self.chart.shape().to_vec(),
            geometry: self.chart.kind().clone(),
            parity: Parity::Complex,
            components: self.dim * self.dim,
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        let refs: Vec<&ArrayD<Complex64>> = self.components.iter().collect();
        write_payload(&mut w, &refs, Parity::Complex)
    }

    pub fn load(path: &Path) -> Result<Form11Field> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let mut line = String::new();
        r.read_line(&mut line)?;
        let header: FieldHeader = serde_json::from_str(line.trim_end())?;
        let chart = chart_from_header(&header.geometry, &header.resolution)?;
        let dim = chart.dim();
        if header.components != dim * dim {
            return Err(CalabiError::InvalidConfig(format!(
                "expected {} components, header says {}",
                dim * dim,
                header.components
            )));
        }
        let mut components = Vec::with_capacity(dim * dim);
        for _ in 0..dim * dim {
            let mut data = chart.zeros();
            for v in data.iter_mut() {
                let re = read_f64(&mut r)?;
                let im = read_f64(&mut r)?;
                *v = Complex64::new(re, im);
            }
            components.push(data);
        }
        Form11Field::new(chart, components)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn real_tag_rejects_imaginary_parts() {
        let chart = GridChart::unit_torus(1, 8).unwrap();
        let mut data = chart.zeros();
        data[[0, 0]] = Complex64::new(0.0, 1.0);
        assert!(matches!(
            ScalarField::new(chart, data, Parity::Real),
            Err(CalabiError::NonRealInput { .. })
        ));
    }

    #[test]
    fn hermitize_is_exact() {
        let chart = GridChart::unit_torus(2, 8).unwrap();
        let mut form = Form11Field::zeros(&chart);
        *form.component_mut(0, 1) = ArrayD::from_elem(IxDyn(chart.shape()), Complex64::new(1.0, 2.0));
        let form = form.hermitize();
        assert_eq!(form.hermitian_defect(), 0.0);
    }

    #[test]
    fn min_eigenvalue_2x2() {
        let m = [
            Complex64::new(2.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(0.0, -1.0),
            Complex64::new(2.0, 0.0),
        ];
        assert_abs_diff_eq!(linalg::hermitian_min_eigenvalue(&m, 2), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn min_eigenvalue_3x3_via_embedding() {
        let mut m = [Complex64::default(); 9];
        for i in 0..3 {
            m[i * 3 + i] = Complex64::new((i + 1) as f64, 0.0);
        }
        m[1] = Complex64::new(0.5, 0.25);
        m[3] = m[1].conj();
        let lam = linalg::hermitian_min_eigenvalue(&m, 3);
        // Characteristic roots of [[1, w, 0], [w̄, 2, 0], [0, 0, 3]].
        let disc = (0.5f64 * 0.5 + 0.25 * 0.25 + 0.25f64).sqrt();
        assert_abs_diff_eq!(lam, 1.5 - disc, epsilon = 1e-10);
    }

    #[test]
    fn metric_rejects_degenerate_nodes() {
        let chart = GridChart::unit_torus(2, 8).unwrap();
        let mut form = Form11Field::identity(&chart);
        *form.component_mut(1, 1) = ArrayD::from_elem(IxDyn(chart.shape()), Complex64::default());
        match MetricField::new(form) {
            Err(CalabiError::DegenerateMetric { value, .. }) => assert!(value <= 0.0),
            other => panic!("expected degenerate metric error, got {other:?}"),
        }
    }

    #[test]
    fn scalar_roundtrip_through_disk() {
        let dir = std::env::temp_dir().join("calabi-field-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("field.cfs");
        let chart = GridChart::annulus(0.1, 0.5, 16, 8).unwrap();
        let f = ScalarField::real_fn(&chart, |x| x[0].sin() + x[1]);
        f.save(&path).unwrap();
        let g = ScalarField::load(&path).unwrap();
        assert_eq!(g.parity(), Parity::Real);
        assert_eq!(g.chart().shape(), chart.shape());
        for (a, b) in f.data().iter().zip(g.data().iter()) {
            assert_eq!(a, b);
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn inverse_components_roundtrip() {
        let chart = GridChart::unit_torus(2, 8).unwrap();
        let mut form = Form11Field::identity(&chart);
        *form.component_mut(0, 0) = ArrayD::from_elem(IxDyn(chart.shape()), Complex64::new(3.0, 0.0));
        *form.component_mut(0, 1) = ArrayD::from_elem(IxDyn(chart.shape()), Complex64::new(0.5, 0.5));
        let form = form.hermitize();
        let g = MetricField::new(form).unwrap();
        let inv = g.inverse_components();
        // g * g^{-1} = identity at an arbitrary node.
        let k = 7usize;
        let n = 2;
        for i in 0..n {
            for j in 0..n {
                let mut acc = Complex64::default();
                for p in 0..n {
                    acc += g.form().components()[i * n + p].as_slice().unwrap()[k]
                        * inv[p * n + j].as_slice().unwrap()[k];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(acc.re, expect, epsilon = 1e-12);
                assert_abs_diff_eq!(acc.im, 0.0, epsilon = 1e-12);
            }
        }
    }
}
