//! Continuity-method Newton solver for the complex Monge-Ampère equation
//! `(ω + (√−1/2π)∂∂̄u)^n = e^{f_s} ω^n` on compact torus charts, the
//! ε-perturbed variant `… = e^{f + εu} ω^n`, and uniqueness diagnostics.
//!
//! The linearisation around a state `u` is the metric laplacian of the
//! perturbed metric (minus `ε` in the perturbed case); the inner solve is a
//! BiCGStab iteration preconditioned by the constant-coefficient spectral
//! laplacian built from the mean inverse metric. For `n = 1` and `ε = 0` the
//! linear problem is conformally flat and is solved exactly in one FFT pass.

use std::sync::Arc;
use std::time::Instant;

use ndarray::{ArrayD, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chart::{ChartKind, GridChart};
use crate::error::{CalabiError, Result};
use crate::field::{Form11Field, MetricField, Parity, ScalarField};
use crate::geometry::{ddbar, ddbar_raw, integrate, ma_density_of_form, project_mean_zero, volume, weighted_mean};

/// A normalised Monge-Ampère instance on a torus chart.
#[derive(Debug, Clone)]
pub struct CalabiProblem {
    pub omega: MetricField,
    /// Normalised source `f + c`.
    pub f: ScalarField,
    /// The normalisation constant that was added.
    pub c: f64,
}

impl CalabiProblem {
    /// Normalise `f` and build the problem.
    pub fn new(omega: MetricField, f: &ScalarField) -> Result<Self> {
        if !matches!(omega.chart().kind(), ChartKind::Torus { .. }) {
            return Err(CalabiError::InvalidConfig(
                "the Monge-Ampère solver runs on compact torus charts".into(),
            ));
        }
        let (f_norm, c) = normalize_source(f, &omega)?;
        Ok(CalabiProblem { omega, f: f_norm, c })
    }
}

/// One accepted continuity state.
#[derive(Debug, Clone)]
pub struct ContinuityState {
    pub s: f64,
    pub u: ScalarField,
    pub c_s: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Continuity parameters, strictly increasing, ending at 1.
    pub schedule: Vec<f64>,
    /// Sup-norm tolerance on `log ma_density − f_s`.
    pub newton_tol: f64,
    pub max_newton_iterations: usize,
    /// Relative residual tolerance of the inner linear solve.
    pub linear_tol: f64,
    pub max_linear_iterations: usize,
    /// Backtracking halvings before the step counts as failed.
    pub max_halvings: usize,
    /// Recursive path bisections on Newton failure.
    pub max_bisections: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            schedule: default_schedule(),
            newton_tol: 1e-11,
            max_newton_iterations: 25,
            linear_tol: 1e-12,
            max_linear_iterations: 400,
            max_halvings: 20,
            max_bisections: 8,
        }
    }
}

/// Geometric 8-step schedule `2^{-7}, …, 2^{-1}, 1`.
pub fn default_schedule() -> Vec<f64> {
    (0..8).map(|i| 2f64.powi(i - 7)).collect()
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.newton_tol <= 0.0 || self.linear_tol <= 0.0 {
            return Err(CalabiError::InvalidConfig("tolerances must be positive".into()));
        }
        let mut prev = 0.0;
        for &s in &self.schedule {
            if s <= prev {
                return Err(CalabiError::InvalidConfig(
                    "schedule must be strictly increasing from 0".into(),
                ));
            }
            prev = s;
        }
        if (prev - 1.0).abs() > 1e-15 {
            return Err(CalabiError::InvalidConfig("schedule must end at 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub s: f64,
    pub newton_iterations: usize,
    pub residual: f64,
    pub margin: f64,
    pub dampings: usize,
    pub wall_ms: f64,
    /// Residual after each Newton iteration within this step.
    pub residual_history: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub u: ScalarField,
    pub steps: Vec<StepRecord>,
    pub final_residual: f64,
    pub success: bool,
}

impl SolveReport {
    /// Deterministic summary (no fields, no wall-clock).
    pub fn summary(&self) -> SolveSummary {
        SolveSummary {
            steps: self
                .steps
                .iter()
                .map(|s| StepSummary {
                    s: s.s,
                    newton_iterations: s.newton_iterations,
                    residual: s.residual,
                    margin: s.margin,
                    dampings: s.dampings,
                    residual_history: s.residual_history.clone(),
                })
                .collect(),
            final_residual: self.final_residual,
            success: self.success,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepSummary {
    pub s: f64,
    pub newton_iterations: usize,
    pub residual: f64,
    pub margin: f64,
    pub dampings: usize,
    pub residual_history: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveSummary {
    pub steps: Vec<StepSummary>,
    pub final_residual: f64,
    pub success: bool,
}

/// Add the constant `c` making `∫ (e^{f+c} − 1) ω^n = 0`.
///
/// The map `c ↦ ∫ e^{f+c} ω^n` is strictly increasing with the closed-form
/// root `c = log(Vol / ∫ e^f ω^n)`.
pub fn normalize_source(f: &ScalarField, omega: &MetricField) -> Result<(ScalarField, f64)> {
    f.require_real("normalize_source")?;
    let ef = f.map_real(f64::exp);
    let mass = integrate(&ef, omega)?;
    let vol = volume(omega);
    let c = (vol / mass).ln();
    Ok((f.shift(c), c))
}

/// Source `f_s = s·f + c_s` of the continuity family, normalised at `s`.
pub fn continuity_source(f: &ScalarField, omega: &MetricField, s: f64) -> Result<(ScalarField, f64)> {
    let scaled = f.scale(s);
    let (fs, c_s) = normalize_source(&scaled, omega)?;
    Ok((fs, c_s))
}

// ---------------------------------------------------------------------------
// Inner linear solver
// ---------------------------------------------------------------------------

/// Linearised operator `v ↦ Δ_{g}v − shift·v` with spectral preconditioning.
struct Linearized {
    chart: Arc<GridChart>,
    dim: usize,
    ginv: Vec<ArrayD<Complex64>>,
    /// Conformal factor `g_{11̄}` for the exact one-dimensional path.
    g11: Option<ArrayD<Complex64>>,
    det_w: ArrayD<f64>,
    det_w_total: f64,
    shift: f64,
    /// Fourier symbol of the mean-coefficient laplacian minus the shift.
    symbol: ArrayD<f64>,
}

impl Linearized {
    fn new(metric: &MetricField, shift: f64) -> Self {
        let chart = metric.chart().clone();
        let dim = chart.dim();
        let ginv = metric.inverse_components();
        let weights = chart.volume_weights();
        let det = metric.det_field();
        let mut det_w = weights;
        Zip::from(&mut det_w).and(&det).par_for_each(|w, d| *w *= d);
        let det_w_total = det_w.sum();

        // Mean inverse coefficients drive the preconditioner symbol.
        let nodes = chart.node_count() as f64;
        let mut mean = vec![Complex64::default(); dim * dim];
        for (e, c) in ginv.iter().enumerate() {
            mean[e] = c.sum() / nodes;
        }
        let mut symbol = ArrayD::<f64>::zeros(ndarray::IxDyn(chart.shape()));
        let ix = chart.indexer();
        let shape_len = chart.shape().len();
        {
            let flat = symbol.as_slice_mut().expect("layout");
            use rayon::prelude::*;
            let chart_ref = &chart;
            let mean_ref = &mean;
            flat.par_iter_mut().enumerate().for_each(|(kflat, out)| {
                let mut k = [0.0f64; 16];
                for a in 0..shape_len {
                    k[a] = chart_ref.wavenumber(a, ix.axis_index(kflat, a));
                }
                let mut m = Complex64::default();
                for i in 0..dim {
                    for j in 0..dim {
                        let s_i = Complex64::new(k[2 * i + 1] / 2.0, k[2 * i] / 2.0);
                        let t_j = Complex64::new(-k[2 * j + 1] / 2.0, k[2 * j] / 2.0);
                        // g^{ij̄} = (G^{-1})[j][i]
                        m += mean_ref[j * dim + i] * s_i * t_j;
                    }
                }
                *out = m.re - shift;
            });
        }
        let g11 = if dim == 1 {
            Some(metric.form().component(0, 0).clone())
        } else {
            None
        };
        Linearized {
            chart,
            dim,
            ginv,
            g11,
            det_w,
            det_w_total,
            shift,
            symbol,
        }
    }

    fn weighted_mean(&self, v: &ArrayD<Complex64>) -> Complex64 {
        let mut acc = Complex64::default();
        for (x, w) in v.iter().zip(self.det_w.iter()) {
            acc += x * *w;
        }
        acc / self.det_w_total
    }

    fn apply(&self, v: &ArrayD<Complex64>) -> ArrayD<Complex64> {
        let hess = ddbar_raw(&self.chart, v);
        let n = self.dim;
        let mut out = self.chart.zeros();
        {
            let flat = out.as_slice_mut().expect("layout");
            let hc: Vec<&[Complex64]> = hess.iter().map(|c| c.as_slice().unwrap()).collect();
            let ic: Vec<&[Complex64]> = self.ginv.iter().map(|c| c.as_slice().unwrap()).collect();
            let vf = v.as_slice().expect("layout");
            let shift = self.shift;
            use rayon::prelude::*;
            flat.par_iter_mut().enumerate().for_each(|(k, o)| {
                let mut acc = Complex64::default();
                for i in 0..n {
                    for j in 0..n {
                        acc += ic[j * n + i][k] * hc[i * n + j][k];
                    }
                }
                *o = acc - vf[k] * shift;
            });
        }
        out
    }

    fn precondition(&self, r: &ArrayD<Complex64>) -> ArrayD<Complex64> {
        let mut z = r.clone();
        self.chart.fft_all_axes(&mut z, false);
        Zip::from(&mut z).and(&self.symbol).par_for_each(|v, &m| {
            if m.abs() < 1e-14 {
                *v = Complex64::default();
            } else {
                *v /= m;
            }
        });
        self.chart.fft_all_axes(&mut z, true);
        z
    }

    /// Solve `(Δ_g − shift) δ = rhs` to the relative tolerance.
    fn solve(&self, rhs: &ArrayD<Complex64>, tol: f64, max_iters: usize) -> Result<ArrayD<Complex64>> {
        let mut b = rhs.clone();
        if self.shift == 0.0 {
            // Compatibility: project onto the range (constants removed
            // against the volume form).
            let m = self.weighted_mean(&b);
            Zip::from(&mut b).par_for_each(|v| *v -= m);
            if let Some(g11) = &self.g11 {
                // n = 1: Δ_g δ = r  ⟺  ∂∂̄δ = g_{11̄} r, one exact FFT solve.
                let mut rhs1 = b.clone();
                Zip::from(&mut rhs1).and(g11).par_for_each(|v, &g| *v *= g);
                let mean = rhs1.sum() / rhs1.len() as f64;
                Zip::from(&mut rhs1).par_for_each(|v| *v -= mean);
                self.chart.fft_all_axes(&mut rhs1, false);
                let ix = self.chart.indexer();
                let chart = &self.chart;
                let shape_len = chart.shape().len();
                {
                    let flat = rhs1.as_slice_mut().expect("layout");
                    use rayon::prelude::*;
                    flat.par_iter_mut().enumerate().for_each(|(kflat, v)| {
                        let kx = chart.wavenumber(0, ix.axis_index(kflat, 0));
                        let ky = chart.wavenumber(1, ix.axis_index(kflat, 1));
                        let m = -(kx * kx + ky * ky) / 4.0;
                        if m.abs() < 1e-14 {
                            *v = Complex64::default();
                        } else {
                            *v /= m;
                        }
                        let _ = shape_len;
                    });
                }
                self.chart.fft_all_axes(&mut rhs1, true);
                return Ok(rhs1);
            }
        }
        self.bicgstab(&b, tol, max_iters)
    }

    fn bicgstab(&self, b: &ArrayD<Complex64>, tol: f64, max_iters: usize) -> Result<ArrayD<Complex64>> {
        let b_norm = l2(b).max(1e-300);
        let mut x = self.chart.zeros();
        let mut r = b.clone();
        let r0 = r.clone();
        let mut rho = Complex64::new(1.0, 0.0);
        let mut alpha = Complex64::new(1.0, 0.0);
        let mut omega_w = Complex64::new(1.0, 0.0);
        let mut p = self.chart.zeros();
        let mut v = self.chart.zeros();
        let mut last_rel = 1.0;
        for it in 0..max_iters {
            let rho_new = dot(&r0, &r);
            if rho_new.norm() < 1e-300 {
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega_w);
            rho = rho_new;
            // p = r + beta (p − ω v)
            Zip::from(&mut p).and(&r).and(&v).par_for_each(|pv, &rv, &vv| {
                *pv = rv + beta * (*pv - omega_w * vv);
            });
            let phat = self.precondition(&p);
            v = self.apply(&phat);
            alpha = rho / dot(&r0, &v);
            let mut s = r.clone();
            Zip::from(&mut s).and(&v).par_for_each(|sv, &vv| *sv -= alpha * vv);
            if l2(&s) / b_norm < tol {
                Zip::from(&mut x).and(&phat).par_for_each(|xv, &ph| *xv += alpha * ph);
                return Ok(x);
            }
            let shat = self.precondition(&s);
            let t = self.apply(&shat);
            omega_w = dot(&t, &s) / dot(&t, &t);
            Zip::from(&mut x).and(&phat).and(&shat).par_for_each(|xv, &ph, &sh| {
                *xv += alpha * ph + omega_w * sh;
            });
            r = s;
            Zip::from(&mut r).and(&t).par_for_each(|rv, &tv| *rv -= omega_w * tv);
            last_rel = l2(&r) / b_norm;
            if last_rel < tol {
                return Ok(x);
            }
            let _ = it;
        }
        if last_rel < tol * 100.0 {
            // Accept near-misses; Newton's outer loop controls the real residual.
            return Ok(x);
        }
        Err(CalabiError::LinearSolveStagnation {
            residual: last_rel,
            iterations: max_iters,
            target: tol,
        })
    }
}

fn l2(v: &ArrayD<Complex64>) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &ArrayD<Complex64>, b: &ArrayD<Complex64>) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

// ---------------------------------------------------------------------------
// Newton iteration
// ---------------------------------------------------------------------------

struct NewtonOutcome {
    u: ScalarField,
    residual: f64,
    iterations: usize,
    dampings: usize,
    margin: f64,
    residual_history: Vec<f64>,
}

/// `log ma_density(ω, u) − target`, the substitution residual field.
pub fn substitution_residual(omega: &MetricField, u: &ScalarField, target: &ScalarField) -> Result<ScalarField> {
    let density = crate::geometry::ma_density(omega, u)?;
    let log_density = density.map_real(f64::ln);
    log_density.sub(target)
}

fn perturbed_form(omega: &MetricField, u: &ScalarField) -> Result<Form11Field> {
    Ok(omega.form().add(&ddbar(u)?)?)
}

/// One damped Newton update for `log ma_density(ω, ·) = target` (with an
/// optional `−ε u` shift in the linearisation for the perturbed equation).
///
/// Returns the new iterate; the residual strictly decreases, or the applied
/// damping shows up in the outcome.
pub fn newton_step(
    omega: &MetricField,
    u: &ScalarField,
    target: &ScalarField,
    config: &SolverConfig,
) -> Result<ScalarField> {
    let (u_new, _, _) = newton_step_inner(omega, u, target, 0.0, config)?;
    Ok(u_new)
}

fn newton_step_inner(
    omega: &MetricField,
    u: &ScalarField,
    target: &ScalarField,
    epsilon: f64,
    config: &SolverConfig,
) -> Result<(ScalarField, f64, usize)> {
    // Effective target for the perturbed equation is f + εu.
    let eff_target = if epsilon > 0.0 {
        target.add(&u.scale(epsilon))?
    } else {
        target.clone()
    };
    let current_form = perturbed_form(omega, u)?;
    let density = ma_density_of_form(omega, &current_form)?;
    let log_density = density.map_real(f64::ln);
    let residual_field = log_density.sub(&eff_target)?;
    let residual = residual_field.max_abs();

    let metric_u = MetricField::new(current_form)?;
    let lin = Linearized::new(&metric_u, epsilon);
    // Newton direction: (Δ − ε) δ = −residual.
    let rhs = residual_field.data().mapv(|v| -v);
    let delta = lin.solve(&rhs, config.linear_tol, config.max_linear_iterations)?;

    let mut lambda = 1.0f64;
    let mut halvings = 0usize;
    loop {
        let mut cand = u.data().clone();
        Zip::from(&mut cand).and(&delta).par_for_each(|c, &d| {
            *c += d * lambda;
            *c = Complex64::new(c.re, 0.0);
        });
        let cand = ScalarField::new(omega.chart().clone(), cand, Parity::Real)?;
        match perturbed_form(omega, &cand).and_then(|f| ma_density_of_form(omega, &f)) {
            Ok(new_density) => {
                let eff_new = if epsilon > 0.0 {
                    target.add(&cand.scale(epsilon))?
                } else {
                    target.clone()
                };
                let new_res = new_density.map_real(f64::ln).sub(&eff_new)?.max_abs();
                if new_res < residual || residual <= config.newton_tol {
                    return Ok((cand, new_res, halvings));
                }
            }
            Err(CalabiError::PositivityLoss { .. }) => {}
            Err(e) => return Err(e),
        }
        halvings += 1;
        lambda *= 0.5;
        if halvings > config.max_halvings {
            return Err(CalabiError::NewtonStagnation {
                s: f64::NAN,
                halvings,
                residual,
            });
        }
    }
}

fn newton_solve(
    omega: &MetricField,
    u0: &ScalarField,
    target: &ScalarField,
    epsilon: f64,
    config: &SolverConfig,
) -> Result<NewtonOutcome> {
    let mut u = u0.clone();
    let mut dampings = 0usize;
    let mut history = Vec::new();
    for it in 0..config.max_newton_iterations {
        let eff_target = if epsilon > 0.0 {
            target.add(&u.scale(epsilon))?
        } else {
            target.clone()
        };
        let residual = substitution_residual(omega, &u, &eff_target)?.max_abs();
        history.push(residual);
        if residual <= config.newton_tol {
            let form = perturbed_form(omega, &u)?;
            let margin = form.min_eigenvalue_field().iter().copied().fold(f64::INFINITY, f64::min);
            return Ok(NewtonOutcome {
                u,
                residual,
                iterations: it,
                dampings,
                margin,
                residual_history: history,
            });
        }
        let (u_new, _, halvings) = newton_step_inner(omega, &u, target, epsilon, config)?;
        dampings += halvings;
        u = u_new;
        if epsilon == 0.0 {
            u = project_mean_zero(&u, omega)?;
        }
    }
    let eff_target = if epsilon > 0.0 {
        target.add(&u.scale(epsilon))?
    } else {
        target.clone()
    };
    let residual = substitution_residual(omega, &u, &eff_target)?.max_abs();
    if residual <= config.newton_tol {
        history.push(residual);
        let form = perturbed_form(omega, &u)?;
        let margin = form.min_eigenvalue_field().iter().copied().fold(f64::INFINITY, f64::min);
        return Ok(NewtonOutcome {
            u,
            residual,
            iterations: config.max_newton_iterations,
            dampings,
            margin,
            residual_history: history,
        });
    }
    Err(CalabiError::NewtonStagnation {
        s: f64::NAN,
        halvings: dampings,
        residual,
    })
}

// ---------------------------------------------------------------------------
// Continuity path drivers
// ---------------------------------------------------------------------------

/// Solve the normalised problem along the configured continuity path.
pub fn solve_calabi(problem: &CalabiProblem, config: &SolverConfig) -> Result<SolveReport> {
    config.validate()?;
    let omega = &problem.omega;
    // f with the normalisation constant removed; continuity re-normalises at
    // every s.
    let f_raw = problem.f.shift(-problem.c);
    let mut u = ScalarField::zeros(omega.chart());
    let mut steps: Vec<StepRecord> = Vec::new();

    let mut pending: Vec<(f64, usize)> = problem_schedule(&config.schedule);
    let mut cursor = 0usize;
    let mut s_prev = 0.0f64;
    while cursor < pending.len() {
        let (s, depth) = pending[cursor];
        let started = Instant::now();
        let (f_s, _c_s) = continuity_source(&f_raw, omega, s)?;
        match newton_solve(omega, &u, &f_s, 0.0, config) {
            Ok(outcome) => {
                u = outcome.u;
                steps.push(StepRecord {
                    s,
                    newton_iterations: outcome.iterations,
                    residual: outcome.residual,
                    margin: outcome.margin,
                    dampings: outcome.dampings,
                    wall_ms: started.elapsed().as_secs_f64() * 1e3,
                    residual_history: outcome.residual_history,
                });
                s_prev = s;
                cursor += 1;
            }
            Err(err) => {
                if depth >= config.max_bisections {
                    return Err(CalabiError::PathFailure {
                        s,
                        source: Box::new(err),
                    });
                }
                let mid = 0.5 * (s_prev + s);
                pending.insert(cursor, (mid, depth + 1));
            }
        }
    }
    let final_residual = steps.last().map(|r| r.residual).unwrap_or(f64::NAN);
    Ok(SolveReport {
        u,
        steps,
        final_residual,
        success: final_residual <= config.newton_tol,
    })
}

fn problem_schedule(schedule: &[f64]) -> Vec<(f64, usize)> {
    schedule.iter().map(|&s| (s, 0usize)).collect()
}

/// Solve the ε-perturbed equation `log ma_density = f + ε u` (no gauge: the
/// `εu` term makes the solution unique absolutely).
pub fn solve_perturbed(
    omega: &MetricField,
    f: &ScalarField,
    epsilon: f64,
    config: &SolverConfig,
) -> Result<SolveReport> {
    if epsilon <= 0.0 {
        return Err(CalabiError::InvalidConfig("epsilon must be positive".into()));
    }
    if !matches!(omega.chart().kind(), ChartKind::Torus { .. }) {
        return Err(CalabiError::InvalidConfig(
            "the perturbed solver runs on compact torus charts".into(),
        ));
    }
    f.require_real("solve_perturbed")?;
    let started = Instant::now();
    let u0 = ScalarField::zeros(omega.chart());
    let outcome = newton_solve(omega, &u0, f, epsilon, config)?;
    let step = StepRecord {
        s: 1.0,
        newton_iterations: outcome.iterations,
        residual: outcome.residual,
        margin: outcome.margin,
        dampings: outcome.dampings,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
        residual_history: outcome.residual_history,
    };
    Ok(SolveReport {
        u: outcome.u,
        final_residual: step.residual,
        success: step.residual <= config.newton_tol,
        steps: vec![step],
    })
}

// ---------------------------------------------------------------------------
// Uniqueness diagnostics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UniquenessReport {
    /// Standard deviation of `u1 − u2` against `ω^n`.
    pub defect: f64,
    /// `∫ (u1−u2) ((ω_{u1})^n − (ω_{u2})^n)`, ≈ 0 for two solutions.
    pub integral_identity: f64,
    /// `∫ |∂(u1−u2)|²_ω ω^n`, the gradient energy the identity bounds.
    pub gradient_energy: f64,
}

/// Uniqueness-up-to-constant diagnostic for two candidate solutions of the
/// same problem.
pub fn uniqueness_defect(
    u1: &ScalarField,
    u2: &ScalarField,
    omega: &MetricField,
    tolerance: f64,
) -> Result<UniquenessReport> {
    let d1 = crate::geometry::ma_density(omega, u1)?;
    let d2 = crate::geometry::ma_density(omega, u2)?;
    let log_gap = d1.map_real(f64::ln).sub(&d2.map_real(f64::ln))?.max_abs();
    if log_gap > 10.0 * tolerance {
        return Err(CalabiError::NotASolution {
            residual: log_gap,
            tolerance,
        });
    }
    let diff = u1.sub(u2)?;
    let mean = weighted_mean(&diff, omega)?;
    let centered = diff.shift(-mean);
    let var = weighted_mean(&centered.map_real(|v| v * v), omega)?;
    let defect = var.max(0.0).sqrt();

    // ∫ δ (d1 − d2) ω^n with δ = u1 − u2.
    let dgap = d1.sub(&d2)?;
    let integrand = ScalarField::new(
        omega.chart().clone(),
        {
            let mut data = diff.data().clone();
            Zip::from(&mut data).and(dgap.data()).par_for_each(|a, &b| {
                *a = Complex64::new(a.re * b.re, 0.0);
            });
            data
        },
        Parity::Real,
    )?;
    let integral_identity = integrate(&integrand, omega)?;

    // Gradient energy against the base metric.
    let chart = omega.chart();
    let n = chart.dim();
    let ginv = omega.inverse_components();
    let grads: Vec<ArrayD<Complex64>> = (0..n).map(|i| chart.dz(diff.data(), i)).collect();
    let mut energy = chart.zeros();
    {
        let flat = energy.as_slice_mut().expect("layout");
        let gc: Vec<&[Complex64]> = grads.iter().map(|g| g.as_slice().unwrap()).collect();
        let ic: Vec<&[Complex64]> = ginv.iter().map(|g| g.as_slice().unwrap()).collect();
        use rayon::prelude::*;
        flat.par_iter_mut().enumerate().for_each(|(k, o)| {
            let mut acc = Complex64::default();
            for i in 0..n {
                for j in 0..n {
                    acc += ic[j * n + i][k] * gc[i][k] * gc[j][k].conj();
                }
            }
            *o = Complex64::new(acc.re, 0.0);
        });
    }
    let energy = ScalarField::new(chart.clone(), energy, Parity::Real)?;
    let gradient_energy = integrate(&energy, omega)?;

    Ok(UniquenessReport {
        defect,
        integral_identity,
        gradient_energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::GridChart;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::TAU;

    fn cosine_problem(res: usize, amp: f64) -> CalabiProblem {
        let chart = GridChart::unit_torus(1, res).unwrap();
        let omega = MetricField::flat(&chart);
        let f = ScalarField::real_fn(&chart, move |x| amp * (TAU * x[0]).cos());
        CalabiProblem::new(omega, &f).unwrap()
    }

    #[test]
    fn normalize_constants() {
        let chart = GridChart::unit_torus(1, 32).unwrap();
        let omega = MetricField::flat(&chart);
        let zero = ScalarField::zeros(&chart);
        let (_, c) = normalize_source(&zero, &omega).unwrap();
        assert_abs_diff_eq!(c, 0.0, epsilon = 1e-14);
        let b = ScalarField::constant(&chart, 0.7);
        let (fb, cb) = normalize_source(&b, &omega).unwrap();
        assert_abs_diff_eq!(cb, -0.7, epsilon = 1e-13);
        assert!(fb.max_abs() < 1e-12);
    }

    #[test]
    fn continuity_endpoints_and_convexity() {
        let chart = GridChart::unit_torus(1, 64).unwrap();
        let omega = MetricField::flat(&chart);
        let f = ScalarField::real_fn(&chart, |x| 0.5 * (TAU * x[0]).cos());
        let (_, c0) = continuity_source(&f, &omega, 1e-300).unwrap();
        assert!(c0.abs() < 1e-12);
        let (_, c1) = continuity_source(&f, &omega, 1.0).unwrap();
        let (_, chalf) = continuity_source(&f, &omega, 0.5).unwrap();
        // Oracle: c_s = −log mean(e^{s f}); for the cosine this is −log I0(s/2).
        assert!(chalf.abs() < c1.abs());
        let oracle = |s: f64| {
            let m = 4096;
            let mut acc = 0.0;
            for i in 0..m {
                let x = i as f64 / m as f64;
                acc += (s * 0.5 * (TAU * x).cos()).exp();
            }
            -(acc / m as f64).ln()
        };
        assert_abs_diff_eq!(c1, oracle(1.0), epsilon = 1e-10);
        assert_abs_diff_eq!(chalf, oracle(0.5), epsilon = 1e-10);
    }

    #[test]
    fn trivial_problem_solves_to_zero() {
        let chart = GridChart::unit_torus(1, 16).unwrap();
        let omega = MetricField::flat(&chart);
        let f = ScalarField::zeros(&chart);
        let problem = CalabiProblem::new(omega, &f).unwrap();
        let report = solve_calabi(&problem, &SolverConfig::default()).unwrap();
        assert!(report.success);
        assert!(report.u.max_abs() < 1e-12);
    }

    #[test]
    fn newton_step_noop_at_solution() {
        let problem = cosine_problem(32, 0.0);
        let u = ScalarField::zeros(problem.omega.chart());
        let target = ScalarField::zeros(problem.omega.chart());
        let u1 = newton_step(&problem.omega, &u, &target, &SolverConfig::default()).unwrap();
        assert!(u1.max_abs() < 1e-11);
    }

    #[test]
    fn perturbed_constant_source_closed_form() {
        let chart = GridChart::unit_torus(1, 16).unwrap();
        let omega = MetricField::flat(&chart);
        let f = ScalarField::constant(&chart, 0.8);
        for eps in [1.0, 0.25] {
            let report = solve_perturbed(&omega, &f, eps, &SolverConfig::default()).unwrap();
            assert!(report.success);
            for v in report.u.data().iter() {
                assert_abs_diff_eq!(v.re, -0.8 / eps, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn uniqueness_constant_shift_has_zero_defect() {
        let problem = cosine_problem(64, 0.5);
        let report = solve_calabi(&problem, &SolverConfig::default()).unwrap();
        let shifted = report.u.shift(5.0);
        let diag = uniqueness_defect(&report.u, &shifted, &problem.omega, 1e-9).unwrap();
        assert!(diag.defect < 1e-10, "defect {}", diag.defect);
        assert!(diag.integral_identity.abs() < 1e-9);
    }
}
