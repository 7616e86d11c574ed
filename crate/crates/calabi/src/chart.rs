//! Discretised coordinate charts and their calculus.
//!
//! A chart is a structured tensor grid over `2n` real axes (two per complex
//! coordinate). Periodic axes get trigonometric (FFT) differentiation and
//! trapezoidal quadrature; the radial axis of log-polar charts gets
//! eighth-order finite-difference stencils on a uniform grid in `ρ = log r`
//! and end-corrected trapezoidal quadrature.
//!
//! Complex Wirtinger derivatives are assembled from the real-axis ones:
//! on a torus axis `∂/∂z = (∂_x − i ∂_y)/2`, and on the log-polar axis
//! `∂/∂z = e^{−(ρ+iθ)} (∂_ρ − i ∂_θ)/2`. Because `e^{−ζ̄}` is killed by
//! `∂_ζ`, mixed second derivatives can be computed by plain composition of
//! the two first-order operators.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use ndarray::{ArrayD, Axis, IxDyn, Zip};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{CalabiError, Result};

/// Minimum nodes per real axis.
pub const MIN_RESOLUTION: usize = 8;

/// Relative spectral-tail energy above which a field counts as unresolved.
pub const SPECTRAL_TAIL_THRESHOLD: f64 = 1e-3;

/// Chart geometry.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum ChartKind {
    /// Flat torus `C^n / (periods)`; complex axis `c` has periods
    /// `periods[c] = (L_x, L_y)`, i.e. `z_c = x + i y` with `x ~ x + L_x`.
    Torus { periods: Vec<(f64, f64)> },
    /// Punctured-disc annulus `r_min <= |z| <= r_max < 1` in log-polar
    /// coordinates `z = e^{ρ + iθ}`, `ρ` uniform and non-periodic.
    LogPolarAnnulus { r_min: f64, r_max: f64 },
    /// Annulus factor transverse to the divisor times an `(n−1)`-dimensional
    /// flat torus fiber.
    Product {
        r_min: f64,
        r_max: f64,
        fiber_periods: Vec<(f64, f64)>,
    },
}

#[derive(Debug, Clone)]
pub struct AxisSpec {
    pub len: usize,
    pub periodic: bool,
    /// Period for periodic axes, coordinate span for the radial axis.
    pub extent: f64,
    pub spacing: f64,
    pub coords: Vec<f64>,
}

type FftPlan = Arc<dyn Fft<f64>>;

#[derive(Default)]
struct PlanStore {
    fwd: Mutex<HashMap<usize, FftPlan>>,
    inv: Mutex<HashMap<usize, FftPlan>>,
    fd: Mutex<HashMap<(usize, usize, usize), Arc<FdPlan>>>,
}

/// Finite-difference plan: per output index, a window base and stencil row.
struct FdPlan {
    base: Vec<usize>,
    weights: Vec<Vec<f64>>,
}

/// Row-major strides for mapping a flat node index to per-axis indices.
#[derive(Debug, Clone)]
pub struct NodeIndexer {
    strides: Vec<usize>,
    shape: Vec<usize>,
}

impl NodeIndexer {
    pub fn new(shape: &[usize]) -> Self {
        let mut strides = vec![1usize; shape.len()];
        for a in (0..shape.len().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * shape[a + 1];
        }
        NodeIndexer {
            strides,
            shape: shape.to_vec(),
        }
    }

    #[inline]
    pub fn axis_index(&self, flat: usize, axis: usize) -> usize {
        (flat / self.strides[axis]) % self.shape[axis]
    }
}

/// A discretised coordinate chart.
pub struct GridChart {
    kind: ChartKind,
    n: usize,
    shape: Vec<usize>,
    axes: Vec<AxisSpec>,
    plans: PlanStore,
}

impl std::fmt::Debug for GridChart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GridChart")
            .field("kind", &self.kind)
            .field("n", &self.n)
            .field("shape", &self.shape)
            .finish()
    }
}

impl PartialEq for GridChart {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.n == other.n && self.shape == other.shape
    }
}

fn periodic_axis(len: usize, period: f64) -> AxisSpec {
    let spacing = period / len as f64;
    AxisSpec {
        len,
        periodic: true,
        extent: period,
        spacing,
        coords: (0..len).map(|i| i as f64 * spacing).collect(),
    }
}

fn radial_axis(len: usize, rho_min: f64, rho_max: f64) -> AxisSpec {
    let spacing = (rho_max - rho_min) / (len - 1) as f64;
    AxisSpec {
        len,
        periodic: false,
        extent: rho_max - rho_min,
        spacing,
        coords: (0..len).map(|i| rho_min + i as f64 * spacing).collect(),
    }
}

impl GridChart {
    /// Flat torus chart with unit periods.
    pub fn unit_torus(n: usize, res: usize) -> Result<Arc<Self>> {
        Self::torus(n, &vec![res; 2 * n], &vec![(1.0, 1.0); n])
    }

    pub fn torus(n: usize, res: &[usize], periods: &[(f64, f64)]) -> Result<Arc<Self>> {
        if n == 0 || res.len() != 2 * n || periods.len() != n {
            return Err(CalabiError::InvalidConfig(format!(
                "torus chart needs 2n resolutions and n period pairs (n = {n})"
            )));
        }
        check_resolution(res)?;
        let mut axes = Vec::with_capacity(2 * n);
        for (c, &(lx, ly)) in periods.iter().enumerate() {
            if lx <= 0.0 || ly <= 0.0 {
                return Err(CalabiError::InvalidConfig("periods must be positive".into()));
            }
            axes.push(periodic_axis(res[2 * c], lx));
            axes.push(periodic_axis(res[2 * c + 1], ly));
        }
        Ok(Arc::new(GridChart {
            kind: ChartKind::Torus {
                periods: periods.to_vec(),
            },
            n,
            shape: res.to_vec(),
            axes,
            plans: PlanStore::default(),
        }))
    }

    /// One-complex-dimensional annulus `r_min <= |z| <= r_max`.
    pub fn annulus(r_min: f64, r_max: f64, res_radial: usize, res_angular: usize) -> Result<Arc<Self>> {
        check_annulus_window(r_min, r_max)?;
        check_resolution(&[res_radial, res_angular])?;
        let axes = vec![
            radial_axis(res_radial, r_min.ln(), r_max.ln()),
            periodic_axis(res_angular, std::f64::consts::TAU),
        ];
        Ok(Arc::new(GridChart {
            kind: ChartKind::LogPolarAnnulus { r_min, r_max },
            n: 1,
            shape: vec![res_radial, res_angular],
            axes,
            plans: PlanStore::default(),
        }))
    }

    /// Annulus × torus-fiber product chart of complex dimension `n >= 2`.
    pub fn product(
        n: usize,
        r_min: f64,
        r_max: f64,
        res_radial: usize,
        res_angular: usize,
        fiber_res: &[usize],
    ) -> Result<Arc<Self>> {
        if n < 2 || fiber_res.len() != 2 * (n - 1) {
            return Err(CalabiError::InvalidConfig(format!(
                "product chart needs n >= 2 and 2(n-1) fiber resolutions (n = {n})"
            )));
        }
        check_annulus_window(r_min, r_max)?;
        let mut shape = vec![res_radial, res_angular];
        shape.extend_from_slice(fiber_res);
        check_resolution(&shape)?;
        let mut axes = vec![
            radial_axis(res_radial, r_min.ln(), r_max.ln()),
            periodic_axis(res_angular, std::f64::consts::TAU),
        ];
        for &m in fiber_res {
            axes.push(periodic_axis(m, 1.0));
        }
        Ok(Arc::new(GridChart {
            kind: ChartKind::Product {
                r_min,
                r_max,
                fiber_periods: vec![(1.0, 1.0); n - 1],
            },
            n,
            shape,
            axes,
            plans: PlanStore::default(),
        }))
    }

    pub fn kind(&self) -> &ChartKind {
        &self.kind
    }

    /// Complex dimension.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Nodes per real axis (length `2n`).
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn node_count(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn axis(&self, a: usize) -> &AxisSpec {
        &self.axes[a]
    }

    /// True when complex axis `c` is the log-polar factor.
    pub fn is_log_polar(&self, c: usize) -> bool {
        c == 0 && !matches!(self.kind, ChartKind::Torus { .. })
    }

    pub fn has_radial_axis(&self) -> bool {
        !matches!(self.kind, ChartKind::Torus { .. })
    }

    /// Radii `e^ρ` of the radial grid, innermost first.
    pub fn radii(&self) -> Vec<f64> {
        assert!(self.has_radial_axis(), "torus charts have no radial axis");
        self.axes[0].coords.iter().map(|&rho| rho.exp()).collect()
    }

    pub fn zeros(&self) -> ArrayD<Complex64> {
        ArrayD::zeros(IxDyn(&self.shape))
    }

    pub fn indexer(&self) -> NodeIndexer {
        NodeIndexer::new(&self.shape)
    }

    /// Value of the complex coordinate `z_c` at every node.
    pub fn coordinate_field(&self, c: usize) -> ArrayD<Complex64> {
        let mut out = self.zeros();
        let (a, b) = (2 * c, 2 * c + 1);
        let log_polar = self.is_log_polar(c);
        let ca = &self.axes[a].coords;
        let cb = &self.axes[b].coords;
        let ix = self.indexer();
        let flat = out.as_slice_mut().expect("standard layout");
        use rayon::prelude::*;
        flat.par_iter_mut().enumerate().for_each(|(k, v)| {
            let u = ca[ix.axis_index(k, a)];
            let w = cb[ix.axis_index(k, b)];
            *v = if log_polar {
                Complex64::new(u, w).exp()
            } else {
                Complex64::new(u, w)
            };
        });
        out
    }

    /// Evaluate a real function of the node's real coordinates.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64 + Sync) -> ArrayD<Complex64> {
        let mut out = self.zeros();
        let coords: Vec<&[f64]> = self.axes.iter().map(|ax| ax.coords.as_slice()).collect();
        let ix = self.indexer();
        let dims = self.shape.len();
        let flat = out.as_slice_mut().expect("standard layout");
        use rayon::prelude::*;
        flat.par_iter_mut().enumerate().for_each(|(k, v)| {
            let mut x = [0.0f64; 16];
            for a in 0..dims {
                x[a] = coords[a][ix.axis_index(k, a)];
            }
            *v = Complex64::new(f(&x[..dims]), 0.0);
        });
        out
    }

    /// Quadrature weight times coordinate-volume jacobian, per node.
    ///
    /// On torus axes this is the exact trapezoidal weight `Δx`; on the
    /// radial axis a fourth-order end-corrected trapezoid in `ρ` together
    /// with the `dx dy = e^{2ρ} dρ dθ` jacobian.
    pub fn volume_weights(&self) -> ArrayD<f64> {
        let mut factors: Vec<Vec<f64>> = Vec::with_capacity(self.shape.len());
        for (a, ax) in self.axes.iter().enumerate() {
            let mut w = if ax.periodic {
                vec![ax.spacing; ax.len]
            } else {
                gregory_weights(ax.len, ax.spacing)
            };
            if a == 0 && self.has_radial_axis() {
                for (wi, rho) in w.iter_mut().zip(&ax.coords) {
                    *wi *= (2.0 * rho).exp();
                }
            }
            factors.push(w);
        }
        let mut out = ArrayD::<f64>::zeros(IxDyn(&self.shape));
        let ix = self.indexer();
        let flat = out.as_slice_mut().expect("standard layout");
        use rayon::prelude::*;
        flat.par_iter_mut().enumerate().for_each(|(k, v)| {
            let mut w = 1.0;
            for (a, f) in factors.iter().enumerate() {
                w *= f[ix.axis_index(k, a)];
            }
            *v = w;
        });
        out
    }

    fn fft_plan(&self, len: usize, inverse: bool) -> FftPlan {
        let store = if inverse { &self.plans.inv } else { &self.plans.fwd };
        let mut map = store.lock().unwrap();
        map.entry(len)
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                if inverse {
                    planner.plan_fft_inverse(len)
                } else {
                    planner.plan_fft_forward(len)
                }
            })
            .clone()
    }

    fn fd_plan(&self, len: usize, order: usize, axis: usize) -> Arc<FdPlan> {
        let mut map = self.plans.fd.lock().unwrap();
        map.entry((len, order, axis))
            .or_insert_with(|| {
                let coords = &self.axes[axis].coords;
                Arc::new(build_fd_plan(coords, order))
            })
            .clone()
    }

    /// Derivative of `data` along real axis `a` (order 1 or 2).
    pub fn real_derivative(&self, data: &ArrayD<Complex64>, a: usize, order: usize) -> ArrayD<Complex64> {
        assert!(order == 1 || order == 2);
        let ax = &self.axes[a];
        let mut out = data.clone();
        if ax.periodic {
            let fwd = self.fft_plan(ax.len, false);
            let inv = self.fft_plan(ax.len, true);
            let mult = spectral_multipliers(ax.len, ax.extent, order);
            Zip::from(out.lanes_mut(Axis(a))).par_for_each(|mut lane| {
                let mut buf: Vec<Complex64> = lane.iter().copied().collect();
                fwd.process(&mut buf);
                for (b, m) in buf.iter_mut().zip(&mult) {
                    *b *= *m;
                }
                inv.process(&mut buf);
                let scale = 1.0 / ax.len as f64;
                for (o, b) in lane.iter_mut().zip(&buf) {
                    *o = *b * scale;
                }
            });
        } else {
            let plan = self.fd_plan(ax.len, order, a);
            Zip::from(out.lanes_mut(Axis(a))).par_for_each(|mut lane| {
                let src: Vec<Complex64> = lane.iter().copied().collect();
                for i in 0..ax.len {
                    let base = plan.base[i];
                    let mut acc = Complex64::default();
                    for (j, w) in plan.weights[i].iter().enumerate() {
                        acc += src[base + j] * *w;
                    }
                    lane[i] = acc;
                }
            });
        }
        out
    }

    /// Wirtinger derivative `∂f/∂z_c`.
    pub fn dz(&self, data: &ArrayD<Complex64>, c: usize) -> ArrayD<Complex64> {
        self.wirtinger(data, c, false)
    }

    /// Wirtinger derivative `∂f/∂z̄_c`.
    pub fn dzbar(&self, data: &ArrayD<Complex64>, c: usize) -> ArrayD<Complex64> {
        self.wirtinger(data, c, true)
    }

    fn wirtinger(&self, data: &ArrayD<Complex64>, c: usize, conjugate: bool) -> ArrayD<Complex64> {
        let (a, b) = (2 * c, 2 * c + 1);
        let da = self.real_derivative(data, a, 1);
        let db = self.real_derivative(data, b, 1);
        let i_half = if conjugate {
            Complex64::new(0.0, 0.5)
        } else {
            Complex64::new(0.0, -0.5)
        };
        let mut out = da;
        if self.is_log_polar(c) {
            let ca = &self.axes[a].coords;
            let cb = &self.axes[b].coords;
            let ix = self.indexer();
            let dflat = db.as_slice().expect("standard layout");
            let oflat = out.as_slice_mut().expect("standard layout");
            use rayon::prelude::*;
            oflat.par_iter_mut().enumerate().for_each(|(k, o)| {
                let zeta = Complex64::new(ca[ix.axis_index(k, a)], cb[ix.axis_index(k, b)]);
                let factor = if conjugate { (-zeta.conj()).exp() } else { (-zeta).exp() };
                *o = factor * (*o * 0.5 + dflat[k] * i_half);
            });
        } else {
            Zip::from(&mut out).and(&db).par_for_each(|o, &d| {
                *o = *o * 0.5 + d * i_half;
            });
        }
        out
    }

    /// In-place unnormalised FFT along every periodic axis (all axes must be
    /// periodic; used by the torus-chart spectral solvers).
    pub(crate) fn fft_all_axes(&self, data: &mut ArrayD<Complex64>, inverse: bool) {
        for (a, ax) in self.axes.iter().enumerate() {
            assert!(ax.periodic, "fft_all_axes requires a fully periodic chart");
            let plan = self.fft_plan(ax.len, inverse);
            Zip::from(data.lanes_mut(Axis(a))).par_for_each(|mut lane| {
                let mut buf: Vec<Complex64> = lane.iter().copied().collect();
                plan.process(&mut buf);
                for (o, b) in lane.iter_mut().zip(&buf) {
                    *o = *b;
                }
            });
        }
        if inverse {
            let scale = 1.0 / self.node_count() as f64;
            Zip::from(data).par_for_each(|v| *v *= scale);
        }
    }

    /// Wavenumber along real axis `a` for Fourier index `m`.
    pub(crate) fn wavenumber(&self, a: usize, m: usize) -> f64 {
        let ax = &self.axes[a];
        wavenumber_index(m, ax.len) as f64 * std::f64::consts::TAU / ax.extent
    }

    /// Relative spectral-tail energy of `data` along periodic axis `a`
    /// (energy in the top third of wavenumbers over total non-mean energy).
    pub fn spectral_tail(&self, data: &ArrayD<Complex64>, a: usize) -> f64 {
        let ax = &self.axes[a];
        assert!(ax.periodic);
        let fwd = self.fft_plan(ax.len, false);
        let mut tail = 0.0f64;
        let mut total = 0.0f64;
        for lane in data.lanes(Axis(a)) {
            let mut buf: Vec<Complex64> = lane.iter().copied().collect();
            fwd.process(&mut buf);
            for (m, v) in buf.iter().enumerate() {
                let k = wavenumber_index(m, ax.len);
                let e = v.norm_sqr();
                if k != 0 {
                    total += e;
                    if k.unsigned_abs() as usize * 3 >= 2 * (ax.len / 2) {
                        tail += e;
                    }
                }
            }
        }
        if total <= f64::EPSILON {
            0.0
        } else {
            tail / total
        }
    }

    /// Check every periodic axis of `data` for unresolved content.
    pub fn check_resolved(&self, data: &ArrayD<Complex64>) -> Result<()> {
        for (a, ax) in self.axes.iter().enumerate() {
            if !ax.periodic {
                continue;
            }
            let tail = self.spectral_tail(data, a);
            if tail > SPECTRAL_TAIL_THRESHOLD {
                return Err(CalabiError::ResolutionTooLow {
                    axis: a,
                    tail,
                    threshold: SPECTRAL_TAIL_THRESHOLD,
                });
            }
        }
        Ok(())
    }
}

fn check_resolution(res: &[usize]) -> Result<()> {
    if res.iter().any(|&m| m < MIN_RESOLUTION) {
        return Err(CalabiError::InvalidConfig(format!(
            "resolution must be >= {MIN_RESOLUTION} per axis, got {res:?}"
        )));
    }
    Ok(())
}

fn check_annulus_window(r_min: f64, r_max: f64) -> Result<()> {
    if !(0.0 < r_min && r_min < r_max && r_max < 1.0) {
        return Err(CalabiError::InvalidConfig(format!(
            "need 0 < r_min < r_max < 1, got [{r_min}, {r_max}]"
        )));
    }
    Ok(())
}

fn wavenumber_index(m: usize, len: usize) -> i64 {
    if m <= len / 2 {
        m as i64
    } else {
        m as i64 - len as i64
    }
}

fn spectral_multipliers(len: usize, period: f64, order: usize) -> Vec<Complex64> {
    let base = std::f64::consts::TAU / period;
    (0..len)
        .map(|m| {
            let mut k = wavenumber_index(m, len) as f64 * base;
            // Odd derivative of the unpaired Nyquist mode is set to zero.
            if order == 1 && len % 2 == 0 && m == len / 2 {
                k = 0.0;
            }
            match order {
                1 => Complex64::new(0.0, k),
                _ => Complex64::new(-k * k, 0.0),
            }
        })
        .collect()
}

/// End-corrected (Gregory, sixth order) trapezoidal weights on a uniform grid.
fn gregory_weights(len: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; len];
    if len >= 12 {
        let boundary = [
            95.0 / 288.0,
            317.0 / 240.0,
            23.0 / 30.0,
            793.0 / 720.0,
            157.0 / 160.0,
        ];
        for (i, &b) in boundary.iter().enumerate() {
            w[i] = b * h;
            w[len - 1 - i] = b * h;
        }
    } else if len >= 8 {
        let boundary = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0];
        for (i, &b) in boundary.iter().enumerate() {
            w[i] = b * h;
            w[len - 1 - i] = b * h;
        }
    } else {
        w[0] = 0.5 * h;
        w[len - 1] = 0.5 * h;
    }
    w
}

/// Fornberg finite-difference weights for derivative `m` at `x0` on nodes `xs`.
fn fornberg(x0: f64, xs: &[f64], m: usize) -> Vec<f64> {
    let n = xs.len();
    let mut c = vec![vec![0.0f64; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|row| row[m]).collect()
}

fn build_fd_plan(coords: &[f64], order: usize) -> FdPlan {
    let n = coords.len();
    let width = 9.min(n);
    let mut base = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let half = width / 2;
        let b = i.saturating_sub(half).min(n - width);
        base.push(b);
        weights.push(fornberg(coords[i], &coords[b..b + width], order));
    }
    FdPlan { base, weights }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn torus_spectral_derivative_is_exact_on_modes() {
        let chart = GridChart::unit_torus(1, 32).unwrap();
        let f = chart.sample(|x| (std::f64::consts::TAU * x[0]).cos());
        let d = chart.real_derivative(&f, 0, 1);
        let expect = chart.sample(|x| -std::f64::consts::TAU * (std::f64::consts::TAU * x[0]).sin());
        for (a, b) in d.iter().zip(expect.iter()) {
            assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-12);
            assert_abs_diff_eq!(a.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn torus_second_derivative() {
        let chart = GridChart::unit_torus(1, 32).unwrap();
        let f = chart.sample(|x| (std::f64::consts::TAU * x[1]).sin());
        let d = chart.real_derivative(&f, 1, 2);
        let t2 = std::f64::consts::TAU * std::f64::consts::TAU;
        let expect = chart.sample(|x| -t2 * (std::f64::consts::TAU * x[1]).sin());
        for (a, b) in d.iter().zip(expect.iter()) {
            assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-10);
        }
    }

    #[test]
    fn radial_fd_derivative_high_order() {
        let chart = GridChart::annulus(0.05, 0.8, 64, 8).unwrap();
        // f(ρ) = exp(ρ), derivative equals itself.
        let f = chart.sample(|x| x[0].exp());
        let d1 = chart.real_derivative(&f, 0, 1);
        let d2 = chart.real_derivative(&f, 0, 2);
        for ((a, b), c) in d1.iter().zip(f.iter()).zip(d2.iter()) {
            assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-9);
            assert_abs_diff_eq!(c.re, b.re, epsilon = 1e-7);
        }
    }

    #[test]
    fn wirtinger_on_annulus_reproduces_power() {
        // f = z^2 → ∂f/∂z = 2z, ∂f/∂z̄ = 0.
        let chart = GridChart::annulus(0.1, 0.7, 48, 32).unwrap();
        let z = chart.coordinate_field(0);
        let f = z.mapv(|v| v * v);
        let dz = chart.dz(&f, 0);
        let dzbar = chart.dzbar(&f, 0);
        for ((d, zb), z0) in dz.iter().zip(dzbar.iter()).zip(z.iter()) {
            assert_abs_diff_eq!(d.re, 2.0 * z0.re, epsilon = 1e-8);
            assert_abs_diff_eq!(d.im, 2.0 * z0.im, epsilon = 1e-8);
            assert!(zb.norm() < 1e-8);
        }
    }

    #[test]
    fn quadrature_unit_torus_volume() {
        let chart = GridChart::unit_torus(2, 8).unwrap();
        let w = chart.volume_weights();
        assert_abs_diff_eq!(w.sum(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn quadrature_annulus_area() {
        // Coordinate area of the annulus is π (r_max² − r_min²).
        let chart = GridChart::annulus(0.2, 0.8, 96, 16).unwrap();
        let w = chart.volume_weights();
        let expect = std::f64::consts::PI * (0.64 - 0.04);
        assert_abs_diff_eq!(w.sum(), expect, epsilon = 1e-8);
    }

    #[test]
    fn resolution_floor_enforced() {
        assert!(GridChart::unit_torus(1, 4).is_err());
        assert!(GridChart::annulus(0.1, 1.2, 32, 32).is_err());
    }

    #[test]
    fn spectral_tail_flags_rough_fields() {
        let chart = GridChart::unit_torus(1, 16).unwrap();
        let smooth = chart.sample(|x| (std::f64::consts::TAU * x[0]).cos());
        assert!(chart.check_resolved(&smooth).is_ok());
        // Sawtooth has a fat tail.
        let rough = chart.sample(|x| x[0] - 0.5);
        assert!(matches!(
            chart.check_resolved(&rough),
            Err(CalabiError::ResolutionTooLow { .. })
        ));
    }
}
