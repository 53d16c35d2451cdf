//! Geometric rough paths: piecewise-linear lifts, increments via the group
//! law, Hölder diagnostics and fractional Brownian drivers.

mod fbm;

use std::collections::BTreeMap;

use crate::algebra::{words_up_to, GroupTensor, TruncatedTensor, Word};
use crate::error::{Error, Result};

pub use fbm::{fbm_covariance, sample_fbm, sample_fbm_on};

/// Relative tolerance under which a time is identified with a grid knot.
pub const KNOT_SNAP: f64 = 1e-12;

/// Tolerance for the character property of stored basepoints.
pub const CHARACTER_TOL: f64 = 1e-10;

/// `N_γ = ⌊1/γ⌋`, with `γ = 1` mapped to the classical case `N = 1`.
pub fn n_gamma(gamma: f64) -> usize {
    ((1.0 / gamma) * (1.0 + 1e-12)).floor().max(1.0) as usize
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("gamma {gamma} not in (0, 1]")))
    }
}

pub(crate) fn check_times(times: &[f64]) -> Result<()> {
    for (i, w) in times.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Err(Error::NonIncreasingTimes { index: i + 1 });
        }
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidParameter("non-finite time".into()));
    }
    Ok(())
}

/// Index of `t` in `times` if it is a knot up to [`KNOT_SNAP`].
pub(crate) fn knot_index(times: &[f64], t: f64) -> Option<usize> {
    let scale = (times[times.len() - 1] - times[0]).abs().max(1.0);
    let j = times.partition_point(|&x| x < t);
    [j.checked_sub(1), Some(j)]
        .into_iter()
        .flatten()
        .filter(|&k| k < times.len())
        .find(|&k| (times[k] - t).abs() <= KNOT_SNAP * scale)
}

/// Piecewise-linear path through `(times[k], values[k])`.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseLinearPath {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl PiecewiseLinearPath {
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidParameter(
                "a piecewise-linear path needs at least two knots".into(),
            ));
        }
        if values.len() != times.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                got: values.len(),
            });
        }
        check_times(&times)?;
        let d = values[0].len();
        if d == 0 {
            return Err(Error::InvalidParameter("path dimension is zero".into()));
        }
        for v in &values {
            if v.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter("non-finite path value".into()));
            }
        }
        Ok(PiecewiseLinearPath { times, values })
    }

    /// Samples `x` on a uniform grid of `m` cells over `[0, horizon]`.
    pub fn from_fn<F: Fn(f64) -> Vec<f64>>(horizon: f64, m: usize, x: F) -> Result<Self> {
        let times: Vec<f64> = (0..=m).map(|k| horizon * k as f64 / m as f64).collect();
        let values = times.iter().map(|&t| x(t)).collect();
        PiecewiseLinearPath::new(times, values)
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn segments(&self) -> usize {
        self.times.len() - 1
    }

    /// Displacement over segment `j`.
    pub fn delta(&self, j: usize) -> Vec<f64> {
        self.values[j + 1]
            .iter()
            .zip(&self.values[j])
            .map(|(b, a)| b - a)
            .collect()
    }

    /// Linear interpolation at `t`.
    pub fn value_at(&self, t: f64) -> Vec<f64> {
        let (j, theta) = locate(&self.times, t);
        if j + 1 >= self.times.len() {
            return self.values[j].clone();
        }
        self.values[j]
            .iter()
            .zip(&self.values[j + 1])
            .map(|(a, b)| a + theta * (b - a))
            .collect()
    }

    /// Inserts the interpolated point at each `t` strictly inside a segment.
    pub fn refine(&self, extra: &[f64]) -> Result<Self> {
        let mut ts: Vec<f64> = self.times.clone();
        for &t in extra {
            if t > self.start() && t < self.end() && knot_index(&self.times, t).is_none() {
                ts.push(t);
            }
        }
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        let vs = ts.iter().map(|&t| self.value_at(t)).collect();
        PiecewiseLinearPath::new(ts, vs)
    }
}

/// Cell `j` with `t ∈ [t_j, t_{j+1})` and the fraction `θ` along it; a time
/// at the final knot returns `(m, 0)`. Knots are snapped by [`KNOT_SNAP`].
pub(crate) fn locate(times: &[f64], t: f64) -> (usize, f64) {
    if let Some(k) = knot_index(times, t) {
        return (k, 0.0);
    }
    let m = times.len() - 1;
    let j = times.partition_point(|&x| x <= t).saturating_sub(1).min(m - 1);
    let theta = (t - times[j]) / (times[j + 1] - times[j]);
    (j, theta)
}

#[derive(Clone, Debug)]
enum Cells {
    /// Straight segments with these displacements.
    Linear(Vec<Vec<f64>>),
    /// Logarithms of sampled cell increments (geodesic interpolation).
    Geodesic(Vec<TruncatedTensor>),
}

/// A geometric rough path sampled at a grid of basepoints `W_{t_k}`.
#[derive(Clone, Debug)]
pub struct GeometricRoughPath {
    gamma: f64,
    level: usize,
    dim: usize,
    times: Vec<f64>,
    basepoints: Vec<GroupTensor>,
    inverses: Vec<GroupTensor>,
    cells: Cells,
    generator: Option<PiecewiseLinearPath>,
}

/// Exact lift of a piecewise-linear path at the given level.
pub fn lift_pl(path: &PiecewiseLinearPath, gamma: f64, level: usize) -> Result<GeometricRoughPath> {
    check_gamma(gamma)?;
    if level == 0 {
        return Err(Error::InvalidParameter("level must be at least 1".into()));
    }
    let d = path.dim();
    let deltas: Vec<Vec<f64>> = (0..path.segments()).map(|j| path.delta(j)).collect();
    let mut basepoints = Vec::with_capacity(path.times.len());
    let mut acc = GroupTensor::identity(d, level);
    basepoints.push(acc.clone());
    for dx in &deltas {
        let seg = GroupTensor::segment(dx, level);
        acc = GroupTensor::from_unchecked(acc.tensor().convolve_unchecked(seg.tensor()));
        basepoints.push(acc.clone());
    }
    let inverses = basepoints.iter().map(GroupTensor::inverse).collect();
    Ok(GeometricRoughPath {
        gamma,
        level,
        dim: d,
        times: path.times.clone(),
        basepoints,
        inverses,
        cells: Cells::Linear(deltas),
        generator: Some(path.clone()),
    })
}

impl GeometricRoughPath {
    /// Rough path from sampled basepoints; each must be a character and the
    /// first is normalised to `1*` by left multiplication with its inverse.
    pub fn from_basepoints(
        gamma: f64,
        times: Vec<f64>,
        basepoints: Vec<TruncatedTensor>,
    ) -> Result<Self> {
        check_gamma(gamma)?;
        if times.len() < 2 || times.len() != basepoints.len() {
            return Err(Error::InvalidParameter(format!(
                "need matching times and basepoints (at least two), got {} and {}",
                times.len(),
                basepoints.len()
            )));
        }
        check_times(&times)?;
        let dim = basepoints[0].dim();
        let level = basepoints[0].level();
        let mut gs = Vec::with_capacity(basepoints.len());
        for b in basepoints {
            if b.dim() != dim {
                return Err(Error::AlphabetMismatch {
                    left: dim,
                    right: b.dim(),
                });
            }
            if b.level() != level {
                return Err(Error::LevelMismatch {
                    left: level,
                    right: b.level(),
                });
            }
            gs.push(GroupTensor::new(b, CHARACTER_TOL)?);
        }
        let first_inv = gs[0].inverse();
        let basepoints: Vec<GroupTensor> = gs
            .iter()
            .map(|g| GroupTensor::from_unchecked(first_inv.tensor().convolve_unchecked(g.tensor())))
            .collect();
        let inverses: Vec<GroupTensor> = basepoints.iter().map(GroupTensor::inverse).collect();
        let mut logs = Vec::with_capacity(times.len() - 1);
        for j in 0..times.len() - 1 {
            let inc = inverses[j].tensor().convolve_unchecked(basepoints[j + 1].tensor());
            logs.push(inc.log()?);
        }
        Ok(GeometricRoughPath {
            gamma,
            level,
            dim,
            times,
            basepoints,
            inverses,
            cells: Cells::Geodesic(logs),
            generator: None,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// `N_γ = ⌊1/γ⌋`.
    pub fn n_gamma(&self) -> usize {
        n_gamma(self.gamma)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn basepoints(&self) -> &[GroupTensor] {
        &self.basepoints
    }

    pub fn generator(&self) -> Option<&PiecewiseLinearPath> {
        self.generator.as_ref()
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Same driver lifted at another level (requires a generator).
    pub fn relift(&self, level: usize) -> Result<Self> {
        match &self.generator {
            Some(p) => lift_pl(p, self.gamma, level),
            None => Err(Error::InvalidParameter(
                "only generated rough paths can be re-lifted".into(),
            )),
        }
    }

    /// Same driver with a different Hölder exponent.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        let mut out = self.clone();
        out.gamma = gamma;
        Ok(out)
    }

    /// Level-one trace `⟨W_{0t}, e_i⟩` at the knots.
    pub fn trace(&self, i: usize) -> Vec<f64> {
        let w = Word::letter(i);
        self.basepoints.iter().map(|b| b.get(&w)).collect()
    }

    fn piece(&self, j: usize, theta: f64) -> GroupTensor {
        match &self.cells {
            Cells::Linear(ds) => {
                let dx: Vec<f64> = ds[j].iter().map(|x| x * theta).collect();
                GroupTensor::segment(&dx, self.level)
            }
            Cells::Geodesic(logs) => GroupTensor::from_unchecked(
                logs[j].scale(theta).exp().expect("logarithm has zero constant"),
            ),
        }
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let tol = KNOT_SNAP * (self.end() - self.start()).abs().max(1.0);
        if !(t >= self.start() - tol && t <= self.end() + tol) {
            return Err(Error::TimeOutOfRange {
                time: t,
                start: self.start(),
                end: self.end(),
            });
        }
        Ok(())
    }

    /// `W_{st} = W_s^{-1} ⋆ W_t`, exact off-grid via the cell generator.
    pub fn increment(&self, s: f64, t: f64) -> Result<GroupTensor> {
        self.check_time(s)?;
        self.check_time(t)?;
        if s > t {
            return Err(Error::ReversedInterval { s, t });
        }
        let (js, ts) = locate(&self.times, s);
        let (jt, tt) = locate(&self.times, t);
        if js == jt {
            if tt == ts {
                return Ok(GroupTensor::identity(self.dim, self.level));
            }
            return Ok(self.piece(js, tt - ts));
        }
        let head = if ts == 0.0 {
            self.inverses[js].tensor().clone()
        } else {
            self.piece(js, 1.0 - ts)
                .tensor()
                .convolve_unchecked(self.inverses[js + 1].tensor())
        };
        let mut out = head.convolve_unchecked(self.basepoints[jt].tensor());
        if tt > 0.0 {
            out = out.convolve_unchecked(self.piece(jt, tt).tensor());
        }
        Ok(GroupTensor::from_unchecked(out))
    }

    /// `W_t` (the increment from the start).
    pub fn at(&self, t: f64) -> Result<GroupTensor> {
        self.increment(self.start(), t)
    }
}

/// Per-word constants `sup |⟨W_{st}, e_w⟩| / |t-s|^{|w|γ}` over grid pairs.
pub fn holder_diagnostic(w: &GeometricRoughPath, grid: &[f64]) -> Result<BTreeMap<Word, f64>> {
    let mut table: BTreeMap<Word, f64> = words_up_to(w.dim(), w.level())
        .into_iter()
        .filter(|u| !u.is_empty())
        .map(|u| (u, 0.0))
        .collect();
    let mut g = grid.to_vec();
    g.sort_by(f64::total_cmp);
    g.dedup();
    for (a, &s) in g.iter().enumerate() {
        for &t in &g[a + 1..] {
            let inc = w.increment(s, t)?;
            let h = t - s;
            for (u, c) in table.iter_mut() {
                let r = inc.get(u).abs() / h.powf(u.len() as f64 * w.gamma());
                if r > *c {
                    *c = r;
                }
            }
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_d_path() -> PiecewiseLinearPath {
        PiecewiseLinearPath::new(
            vec![0.0, 0.3, 0.5, 1.0],
            vec![
                vec![0.0, 0.0],
                vec![0.4, -0.2],
                vec![0.1, 0.5],
                vec![0.7, 0.9],
            ],
        )
        .unwrap()
    }

    #[test]
    fn one_segment_area() {
        let p = PiecewiseLinearPath::new(vec![0.0, 1.0], vec![vec![0.0, 0.0], vec![1.5, -2.0]])
            .unwrap();
        let w = lift_pl(&p, 0.5, 2).unwrap();
        let g = w.increment(0.0, 1.0).unwrap();
        assert!((g.get(&Word::from([1, 2])) + 1.5).abs() < 1e-15);
        assert_eq!(g.constant(), 1.0);
    }

    #[test]
    fn chen_on_and_off_grid() {
        let w = lift_pl(&two_d_path(), 0.3, 3).unwrap();
        let triples = [(0.0, 0.3, 1.0), (0.1, 0.4, 0.9), (0.05, 0.07, 0.6), (0.5, 0.5, 1.0)];
        for (s, u, t) in triples {
            let lhs = w.increment(s, u).unwrap().mul(&w.increment(u, t).unwrap()).unwrap();
            let rhs = w.increment(s, t).unwrap();
            assert!(lhs.max_abs_diff(&rhs) < 1e-14, "{s} {u} {t}");
            assert!(rhs.is_character(1e-12));
        }
        assert!(w.increment(0.2, 0.2).unwrap().max_abs_diff(&GroupTensor::identity(2, 3)) == 0.0);
    }

    #[test]
    fn refinement_is_invisible() {
        let p = two_d_path();
        let q = p.refine(&[0.1, 0.2, 0.7]).unwrap();
        let a = lift_pl(&p, 0.3, 4).unwrap();
        let b = lift_pl(&q, 0.3, 4).unwrap();
        for (s, t) in [(0.0, 1.0), (0.15, 0.75), (0.3, 0.5)] {
            let d = a.increment(s, t).unwrap().max_abs_diff(&b.increment(s, t).unwrap());
            assert!(d < 1e-13);
        }
    }

    #[test]
    fn sampled_path_matches_generated_on_grid() {
        let w = lift_pl(&two_d_path(), 0.3, 3).unwrap();
        let sampled = GeometricRoughPath::from_basepoints(
            0.3,
            w.times().to_vec(),
            w.basepoints().iter().map(|b| b.tensor().clone()).collect(),
        )
        .unwrap();
        // straight segments are geodesics, so off-grid values also agree
        for (s, t) in [(0.0, 1.0), (0.1, 0.45), (0.31, 0.32)] {
            let d = w.increment(s, t).unwrap().max_abs_diff(&sampled.increment(s, t).unwrap());
            assert!(d < 1e-13);
        }
    }

    #[test]
    fn errors() {
        let w = lift_pl(&two_d_path(), 0.3, 3).unwrap();
        assert!(matches!(w.increment(0.5, 0.2), Err(Error::ReversedInterval { .. })));
        assert!(matches!(w.increment(0.0, 1.5), Err(Error::TimeOutOfRange { .. })));
        assert!(matches!(
            PiecewiseLinearPath::new(vec![0.0, 0.5, 0.5], vec![vec![0.0]; 3]),
            Err(Error::NonIncreasingTimes { index: 2 })
        ));
    }

    #[test]
    fn holder_of_linear_path() {
        let p = PiecewiseLinearPath::new(vec![0.0, 1.0], vec![vec![0.0], vec![1.0]]).unwrap();
        let w = lift_pl(&p, 0.5, 2).unwrap();
        let grid: Vec<f64> = (0..=8).map(|k| k as f64 / 8.0).collect();
        let h = holder_diagnostic(&w, &grid).unwrap();
        assert!((h[&Word::from([1])] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn n_gamma_values() {
        assert_eq!(n_gamma(0.3), 3);
        assert_eq!(n_gamma(0.2), 5);
        assert_eq!(n_gamma(0.45), 2);
        assert_eq!(n_gamma(0.5), 2);
        assert_eq!(n_gamma(0.9), 1);
        assert_eq!(n_gamma(1.0), 1);
    }
}
