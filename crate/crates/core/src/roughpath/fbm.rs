use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::PiecewiseLinearPath;
use crate::error::{Error, Result};

/// `E[B_s B_t] = (s^{2H} + t^{2H} - |t-s|^{2H}) / 2`.
pub fn fbm_covariance(hurst: f64, s: f64, t: f64) -> f64 {
    let e = 2.0 * hurst;
    0.5 * (s.powf(e) + t.powf(e) - (t - s).abs().powf(e))
}

/// `d` independent fBm components on a uniform grid of `knots` points over
/// `[0, 1]`, interpolated linearly.
pub fn sample_fbm(hurst: f64, d: usize, knots: usize, seed: u64) -> Result<PiecewiseLinearPath> {
    sample_fbm_on(hurst, d, knots, seed, 1.0)
}

/// As [`sample_fbm`] on `[0, horizon]`.
pub fn sample_fbm_on(
    hurst: f64,
    d: usize,
    knots: usize,
    seed: u64,
    horizon: f64,
) -> Result<PiecewiseLinearPath> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::InvalidParameter(format!("Hurst index {hurst} not in (0, 1)")));
    }
    if knots < 2 {
        return Err(Error::InvalidParameter("fBm needs at least two knots".into()));
    }
    if d == 0 || !(horizon > 0.0) {
        return Err(Error::InvalidParameter("fBm needs d >= 1 and a positive horizon".into()));
    }
    let m = knots - 1;
    let times: Vec<f64> = (0..knots).map(|k| horizon * k as f64 / m as f64).collect();
    let cov = DMatrix::from_fn(m, m, |i, j| fbm_covariance(hurst, times[i + 1], times[j + 1]));
    let chol = cov
        .cholesky()
        .ok_or_else(|| Error::Cholesky(format!("fBm covariance (H = {hurst}, {m} points) is not positive definite")))?;
    let l = chol.l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![vec![0.0; d]; knots];
    for c in 0..d {
        let z: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
        for i in 0..m {
            let mut acc = 0.0;
            for (j, zj) in z.iter().enumerate().take(i + 1) {
                acc += l[(i, j)] * zj;
            }
            values[i + 1][c] = acc;
        }
    }
    PiecewiseLinearPath::new(times, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let a = sample_fbm(0.4, 2, 64, 7).unwrap();
        let b = sample_fbm(0.4, 2, 64, 7).unwrap();
        let c = sample_fbm(0.4, 2, 64, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(sample_fbm(1.0, 1, 8, 0).is_err());
        assert!(sample_fbm(0.5, 1, 1, 0).is_err());
    }
}
