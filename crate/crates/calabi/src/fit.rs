//! Log-log regression utilities for asymptotic exponents.

use serde::{Deserialize, Serialize};

/// Radial window used by asymptotic fits: skip a few innermost nodes (finite
/// difference boundary rows), keep the inner `fraction` of the chart measured
/// in `−log r`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RadialWindow {
    pub skip_inner: usize,
    pub fraction: f64,
}

impl Default for RadialWindow {
    fn default() -> Self {
        RadialWindow {
            skip_inner: 4,
            fraction: 0.5,
        }
    }
}

impl RadialWindow {
    /// Indices of radii inside the window. `radii` are sorted innermost first.
    pub fn select(&self, radii: &[f64]) -> Vec<usize> {
        let rho_min = radii[0].ln();
        let rho_max = radii[radii.len() - 1].ln();
        let cutoff = rho_min + self.fraction * (rho_max - rho_min);
        (self.skip_inner..radii.len())
            .filter(|&i| radii[i].ln() <= cutoff)
            .collect()
    }
}

/// Fitted decay exponents of a field near the divisor:
/// `|field| ~ C · ‖S‖^power · (−log‖S‖²)^log_power`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayFit {
    pub power: f64,
    pub log_power: f64,
    /// RMS residual of the regression in log space.
    pub residual: f64,
    /// Radial window actually used, `(r_inner, r_outer)`.
    pub window: (f64, f64),
    /// Radii excluded because the field vanishes identically there.
    pub excluded_radii: Vec<usize>,
    /// False when the data was flagged as identically zero.
    pub conclusive: bool,
}

impl DecayFit {
    pub fn identically_zero(window: (f64, f64)) -> Self {
        DecayFit {
            power: 0.0,
            log_power: 0.0,
            residual: 0.0,
            window,
            excluded_radii: Vec::new(),
            conclusive: false,
        }
    }
}

/// Least squares `log v = c + a·log s + b·log(−log s²)` over the samples.
///
/// `s` are section-norm representatives per radius, `v` positive magnitudes.
pub fn fit_power_log(s: &[f64], v: &[f64]) -> (f64, f64, f64) {
    assert_eq!(s.len(), v.len());
    let rows: Vec<[f64; 3]> = s
        .iter()
        .map(|&si| [1.0, si.ln(), (-2.0 * si.ln()).ln()])
        .collect();
    let y: Vec<f64> = v.iter().map(|&vi| vi.ln()).collect();
    let beta = lstsq3(&rows, &y);
    let mut ss = 0.0;
    for (row, &yi) in rows.iter().zip(&y) {
        let pred = beta[0] + beta[1] * row[1] + beta[2] * row[2];
        ss += (yi - pred).powi(2);
    }
    let rms = (ss / y.len() as f64).sqrt();
    (beta[1], beta[2], rms)
}

/// Least squares `log y = c + γ·log x`; returns `(γ, rms)`.
pub fn fit_power(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (a, b) in lx.iter().zip(&ly) {
        sxx += (a - mx).powi(2);
        sxy += (a - mx) * (b - my);
    }
    let gamma = sxy / sxx;
    let c = my - gamma * mx;
    let mut ss = 0.0;
    for (a, b) in lx.iter().zip(&ly) {
        ss += (b - (c + gamma * a)).powi(2);
    }
    (gamma, (ss / n).sqrt())
}

fn lstsq3(rows: &[[f64; 3]], y: &[f64]) -> [f64; 3] {
    // Normal equations AᵀA β = Aᵀy for the 3-column design matrix.
    let mut ata = [[0.0f64; 3]; 3];
    let mut aty = [0.0f64; 3];
    for (row, &yi) in rows.iter().zip(y) {
        for i in 0..3 {
            aty[i] += row[i] * yi;
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    solve3(ata, aty)
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for col in 0..3 {
        let mut pivot = col;
        for r in col + 1..3 {
            if a[r][col].abs() > a[pivot][col].abs() {
                pivot = r;
            }
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        let d = a[col][col];
        for c in col..3 {
            a[col][c] /= d;
        }
        b[col] /= d;
        for r in 0..3 {
            if r == col {
                continue;
            }
            let f = a[r][col];
            for c in col..3 {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn recovers_pure_power() {
        let s: Vec<f64> = (1..60).map(|i| 1e-4_f64 * 1.1f64.powi(i)).collect();
        let v: Vec<f64> = s.iter().map(|&x| 3.0 * x.sqrt()).collect();
        let (a, b, rms) = fit_power_log(&s, &v);
        assert_abs_diff_eq!(a, 0.5, epsilon = 1e-8);
        assert_abs_diff_eq!(b, 0.0, epsilon = 1e-8);
        assert!(rms < 1e-10);
    }

    #[test]
    fn recovers_pure_log_power() {
        let s: Vec<f64> = (1..60).map(|i| 1e-4_f64 * 1.1f64.powi(i)).collect();
        let v: Vec<f64> = s.iter().map(|&x| (-2.0 * x.ln()).powf(-0.5)).collect();
        let (a, b, _) = fit_power_log(&s, &v);
        assert_abs_diff_eq!(a, 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(b, -0.5, epsilon = 1e-8);
    }

    #[test]
    fn window_selects_inner_half() {
        let radii: Vec<f64> = (0..100).map(|i| 1e-3 * (0.05f64 * i as f64).exp()).collect();
        let w = RadialWindow::default();
        let idx = w.select(&radii);
        assert!(idx.iter().all(|&i| i >= 4));
        let cutoff = radii[0].ln() + 0.5 * (radii[99].ln() - radii[0].ln());
        assert!(idx.iter().all(|&i| radii[i].ln() <= cutoff + 1e-12));
    }
}
