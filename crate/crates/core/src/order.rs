//! Empirical convergence orders from log-log regression.
//!
//! A defect `D(h) ≍ h^θ` is sampled at dyadic scales `h`; the least-squares
//! slope of `log D` against `log h` estimates `θ`. A check passes when the
//! slope is at least `threshold - SLOPE_TOLERANCE`.

use rayon::prelude::*;
use serde::Serialize;

/// Slack granted to regression slopes.
pub const SLOPE_TOLERANCE: f64 = 0.15;

/// Minimum number of dyadic scales expected by order checks.
pub const MIN_SCALES: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderFit {
    /// Estimated order; `+∞` when fewer than two points lie above the floor.
    pub slope: f64,
    pub intercept: f64,
    /// `(scale, defect)` pairs that entered the fit.
    pub points: Vec<(f64, f64)>,
    /// Number of sampled scales, including the ones below the floor.
    pub sampled: usize,
}

impl OrderFit {
    pub fn passes(&self, threshold: f64) -> bool {
        passes(self.slope, threshold)
    }
}

pub fn passes(slope: f64, threshold: f64) -> bool {
    slope >= threshold - SLOPE_TOLERANCE
}

/// Fits `log defect = slope · log scale + intercept` over the samples whose
/// defect exceeds `floor` (non-finite defects count as failures and are kept).
pub fn fit_order(samples: &[(f64, f64)], floor: f64) -> OrderFit {
    let points: Vec<(f64, f64)> = samples
        .iter()
        .copied()
        .filter(|&(h, d)| h > 0.0 && !(d <= floor))
        .collect();
    if points.iter().any(|(_, d)| !d.is_finite()) {
        return OrderFit {
            slope: f64::NAN,
            intercept: f64::NAN,
            points,
            sampled: samples.len(),
        };
    }
    if points.len() < 2 {
        return OrderFit {
            slope: f64::INFINITY,
            intercept: f64::NAN,
            points,
            sampled: samples.len(),
        };
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|(h, _)| h.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, d)| d.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { f64::INFINITY };
    OrderFit {
        slope,
        intercept: my - slope * mx,
        points,
        sampled: samples.len(),
    }
}

/// Lags `1, 2, 4, ...` below `m` (index distances on a grid of `m + 1` points).
pub fn dyadic_lags(m: usize) -> Vec<usize> {
    let mut lags = Vec::new();
    let mut l = 1;
    while l < m {
        lags.push(l);
        l *= 2;
    }
    if m >= 1 && lags.last() != Some(&m) {
        lags.push(m);
    }
    lags
}

/// Lags `1, 2, 4, ...` up to `m / 2`, the scales used by order regressions.
/// The full-width lag is left out: it has a single start and sits outside the
/// small-scale regime the orders describe.
pub fn regression_lags(m: usize) -> Vec<usize> {
    let mut lags = Vec::new();
    let mut l = 1;
    while 2 * l <= m {
        lags.push(l);
        l *= 2;
    }
    lags
}

/// Noise floor for defects built from quantities of size `magnitude`.
pub fn noise_floor(magnitude: f64) -> f64 {
    1e3 * f64::EPSILON * magnitude.max(1e-300)
}

/// Regression over dyadic index lags on a grid: at lag `l` the defect is
/// `max_k defect(k, k + l)` and the scale the mean of `t_{k+l} - t_k`.
pub fn lag_regression<F>(times: &[f64], lags: &[usize], floor: f64, defect: F) -> OrderFit
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let m = times.len().saturating_sub(1);
    let samples: Vec<(f64, f64)> = lags
        .iter()
        .filter(|&&l| l >= 1 && l <= m)
        .map(|&l| {
            let worst = (0..=m - l)
                .into_par_iter()
                .map(|k| defect(k, k + l))
                .reduce(|| 0.0, nan_max);
            let h = (0..=m - l).map(|k| times[k + l] - times[k]).sum::<f64>() / (m - l + 1) as f64;
            (h, worst)
        })
        .collect();
    fit_order(&samples, floor)
}

/// `max` that propagates NaN.
pub fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

/// One graded estimate: a label, the regressed order and its threshold.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderCheck {
    pub label: String,
    pub slope: f64,
    pub threshold: f64,
    pub pass: bool,
    pub scales: usize,
    pub points: Vec<(f64, f64)>,
}

impl OrderCheck {
    pub fn new(label: impl Into<String>, fit: OrderFit, threshold: f64) -> OrderCheck {
        OrderCheck {
            label: label.into(),
            slope: fit.slope,
            threshold,
            pass: fit.passes(threshold),
            scales: fit.sampled,
            points: fit.points,
        }
    }
}

/// A family of graded estimates; passes when every member passes.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct OrderReport {
    pub checks: Vec<OrderCheck>,
}

impl OrderReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn push(&mut self, c: OrderCheck) {
        self.checks.push(c);
    }

    pub fn get(&self, label: &str) -> Option<&OrderCheck> {
        self.checks.iter().find(|c| c.label == label)
    }

    pub fn failures(&self) -> impl Iterator<Item = &OrderCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_power_law() {
        let s: Vec<(f64, f64)> = (0..10)
            .map(|k| {
                let h = 2f64.powi(-k);
                (h, 3.0 * h.powf(1.7))
            })
            .collect();
        let f = fit_order(&s, 0.0);
        assert!((f.slope - 1.7).abs() < 1e-12);
        assert!(f.passes(1.8));
        assert!(!f.passes(1.9));
    }

    #[test]
    fn zero_defects_pass() {
        let s: Vec<(f64, f64)> = (0..10).map(|k| (2f64.powi(-k), 0.0)).collect();
        assert_eq!(fit_order(&s, 0.0).slope, f64::INFINITY);
    }

    #[test]
    fn nan_defects_fail() {
        let s = vec![(1.0, 1.0), (0.5, f64::NAN), (0.25, 0.1)];
        assert!(!fit_order(&s, 0.0).passes(0.0));
    }

    #[test]
    fn lags() {
        assert_eq!(dyadic_lags(8), vec![1, 2, 4, 8]);
        assert_eq!(dyadic_lags(10), vec![1, 2, 4, 8, 10]);
        assert_eq!(regression_lags(256), vec![1, 2, 4, 8, 16, 32, 64, 128]);
        assert_eq!(regression_lags(255), vec![1, 2, 4, 8, 16, 32, 64]);
        assert!(regression_lags(1).is_empty());
    }
}
