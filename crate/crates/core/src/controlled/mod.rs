//! Controlled rough paths, their remainders and norms, composition with
//! smooth maps and the compensated-Riemann-sum rough integral.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::algebra::{deshuffles, words_up_to, GroupTensor, Word};
use crate::error::{Error, Result};
use crate::jet::factorial;
use crate::order::{dyadic_lags, lag_regression, noise_floor, regression_lags, OrderCheck, OrderReport};
use crate::roughpath::{knot_index, GeometricRoughPath};
use crate::smooth::SmoothFunction;

/// Position of `w` in the canonical enumeration of words over `d` letters.
pub fn word_index(d: usize, w: &Word) -> usize {
    let mut offset = 0;
    let mut block = 1;
    for _ in 0..w.len() {
        offset += block;
        block *= d;
    }
    let mut rank = 0;
    for a in w.letters() {
        rank = rank * d + (a - 1);
    }
    offset + rank
}

/// Vector-valued path of Gubinelli coefficients `⟨e_w*, X_t⟩`, `|w| <= order - 1`,
/// sampled on a grid and attached to a reference rough path.
#[derive(Clone, Debug)]
pub struct ControlledPath {
    reference: Arc<GeometricRoughPath>,
    order: usize,
    width: usize,
    times: Vec<f64>,
    words: Vec<Word>,
    /// `coeffs[k][word_index(w)]` at `times[k]`.
    coeffs: Vec<Vec<Vec<f64>>>,
}

impl ControlledPath {
    pub fn new(
        reference: Arc<GeometricRoughPath>,
        order: usize,
        width: usize,
        times: Vec<f64>,
        coeffs: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if order == 0 || order > reference.level() + 1 {
            return Err(Error::OutOfRange(format!(
                "controlled order {order} not in 1..={}",
                reference.level() + 1
            )));
        }
        crate::roughpath::check_times(&times)?;
        if times.is_empty() || coeffs.len() != times.len() {
            return Err(Error::InvalidParameter(format!(
                "{} coefficient rows for {} times",
                coeffs.len(),
                times.len()
            )));
        }
        for &t in &times {
            if t < reference.start() - 1e-12 || t > reference.end() + 1e-12 {
                return Err(Error::TimeOutOfRange {
                    time: t,
                    start: reference.start(),
                    end: reference.end(),
                });
            }
        }
        let words = words_up_to(reference.dim(), order - 1);
        for row in &coeffs {
            if row.len() != words.len() {
                return Err(Error::DimensionMismatch {
                    expected: words.len(),
                    got: row.len(),
                });
            }
            for v in row {
                if v.len() != width {
                    return Err(Error::DimensionMismatch {
                        expected: width,
                        got: v.len(),
                    });
                }
            }
        }
        Ok(ControlledPath {
            reference,
            order,
            width,
            times,
            words,
            coeffs,
        })
    }

    /// Builds coefficients from `f(k, w)` at every grid time.
    pub fn from_fn<F>(
        reference: Arc<GeometricRoughPath>,
        order: usize,
        width: usize,
        times: Vec<f64>,
        f: F,
    ) -> Result<Self>
    where
        F: Fn(usize, &Word) -> Vec<f64>,
    {
        let words = words_up_to(reference.dim(), order.saturating_sub(1));
        let coeffs = (0..times.len())
            .map(|k| words.iter().map(|w| f(k, w)).collect())
            .collect();
        ControlledPath::new(reference, order, width, times, coeffs)
    }

    /// The constant path `c` (all Gubinelli derivatives zero).
    pub fn constant(
        reference: Arc<GeometricRoughPath>,
        order: usize,
        times: Vec<f64>,
        c: &[f64],
    ) -> Result<Self> {
        ControlledPath::from_fn(reference, order, c.len(), times, |_, w| {
            if w.is_empty() {
                c.to_vec()
            } else {
                vec![0.0; c.len()]
            }
        })
    }

    /// The driver component `t ↦ ⟨W_{0t}, e_i⟩` with `⟨e_i*, X⟩ = 1`.
    pub fn driver(
        reference: Arc<GeometricRoughPath>,
        i: usize,
        order: usize,
        times: Vec<f64>,
    ) -> Result<Self> {
        if i == 0 || i > reference.dim() {
            return Err(Error::InvalidLetter {
                letter: i,
                dim: reference.dim(),
            });
        }
        let trace: Vec<f64> = times
            .iter()
            .map(|&t| reference.at(t).map(|g| g.get(&Word::letter(i))))
            .collect::<Result<_>>()?;
        let unit = Word::letter(i);
        ControlledPath::from_fn(reference, order, 1, times, |k, w| {
            if w.is_empty() {
                vec![trace[k]]
            } else if *w == unit {
                vec![1.0]
            } else {
                vec![0.0]
            }
        })
    }

    pub fn reference(&self) -> &Arc<GeometricRoughPath> {
        &self.reference
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Words `|w| <= order - 1` in canonical order.
    pub fn words(&self) -> &[Word] {
        &self.words
    }

    /// `⟨e_w*, X_{t_k}⟩`; zero-length words beyond the order are rejected.
    pub fn coeff(&self, k: usize, w: &Word) -> &[f64] {
        assert!(w.len() < self.order, "word {w} beyond controlled order {}", self.order);
        &self.coeffs[k][word_index(self.reference.dim(), w)]
    }

    /// Coefficients at time index `k`, indexed like [`Self::words`].
    pub fn row(&self, k: usize) -> &[Vec<f64>] {
        &self.coeffs[k]
    }

    pub fn primal(&self, k: usize) -> &[f64] {
        &self.coeffs[k][0]
    }

    pub fn primal_path(&self) -> Vec<Vec<f64>> {
        (0..self.times.len()).map(|k| self.primal(k).to_vec()).collect()
    }

    /// Replaces coefficients, keeping grid and reference.
    pub fn with_coeffs(&self, coeffs: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let width = coeffs
            .first()
            .and_then(|r| r.first())
            .map(Vec::len)
            .unwrap_or(self.width);
        ControlledPath::new(
            self.reference.clone(),
            self.order,
            width,
            self.times.clone(),
            coeffs,
        )
    }

    /// Restriction to the grid indices `idx`.
    pub fn subsample(&self, idx: &[usize]) -> Result<Self> {
        ControlledPath::new(
            self.reference.clone(),
            self.order,
            self.width,
            idx.iter().map(|&k| self.times[k]).collect(),
            idx.iter().map(|&k| self.coeffs[k].clone()).collect(),
        )
    }

    /// `a X + b Y` for paths on the same grid, reference and order.
    pub fn linear_combination(a: f64, x: &ControlledPath, b: f64, y: &ControlledPath) -> Result<Self> {
        if x.order != y.order || x.width != y.width || x.times != y.times {
            return Err(Error::InvalidParameter(
                "linear combination needs matching grids, orders and widths".into(),
            ));
        }
        let coeffs = x
            .coeffs
            .iter()
            .zip(&y.coeffs)
            .map(|(rx, ry)| {
                rx.iter()
                    .zip(ry)
                    .map(|(u, v)| u.iter().zip(v).map(|(p, q)| a * p + b * q).collect())
                    .collect()
            })
            .collect();
        x.with_coeffs(coeffs)
    }

    /// Remainder `⟨e_w*, X_t⟩ - Σ_v ⟨e_{vw}*, X_s⟩⟨W_{st}, e_v⟩` between grid
    /// indices `a <= b`, given the increment `W_{st}`.
    pub fn remainder_with(&self, a: usize, b: usize, w: &Word, inc: &GroupTensor) -> Vec<f64> {
        let mut r = self.coeff(b, w).to_vec();
        let d = self.reference.dim();
        for v in words_up_to(d, self.order - 1 - w.len()) {
            let g = inc.get(&v);
            if g == 0.0 {
                continue;
            }
            let c = self.coeff(a, &v.concat(w));
            for (ri, ci) in r.iter_mut().zip(c) {
                *ri -= ci * g;
            }
        }
        r
    }

    pub fn remainder(&self, a: usize, b: usize, w: &Word) -> Result<Vec<f64>> {
        let inc = self.reference.increment(self.times[a], self.times[b])?;
        Ok(self.remainder_with(a, b, w, &inc))
    }

    fn magnitude(&self) -> f64 {
        self.coeffs
            .iter()
            .flatten()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

pub(crate) fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

/// Grid versions of `‖X‖_{W;Nγ}` (with per-word constants) and `‖X‖_D`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlledNorms {
    pub seminorm: f64,
    pub norm: f64,
    pub per_word: BTreeMap<Word, f64>,
}

/// Grids up to this size are scanned over all pairs; larger ones over dyadic lags.
pub const ALL_PAIRS_LIMIT: usize = 256;

/// Sums over word classes of `sup |R^w_{st}| / |t-s|^{(N-|w|)γ}` (vector
/// remainders measured in the max norm).
pub fn controlled_norms(x: &ControlledPath) -> Result<ControlledNorms> {
    let m = x.times.len();
    if m < 2 {
        return Err(Error::InvalidParameter("norms need at least two grid points".into()));
    }
    let pairs: Vec<(usize, usize)> = if m <= ALL_PAIRS_LIMIT {
        (0..m).flat_map(|a| (a + 1..m).map(move |b| (a, b))).collect()
    } else {
        dyadic_lags(m - 1)
            .into_iter()
            .flat_map(|l| (0..m - l).map(move |a| (a, a + l)))
            .collect()
    };
    let gamma = x.reference.gamma();
    let per_pair: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let inc = x.reference.increment(x.times[a], x.times[b])?;
            let h = x.times[b] - x.times[a];
            Ok(x.words
                .iter()
                .map(|w| {
                    let r = sup_norm(&x.remainder_with(a, b, w, &inc));
                    r / h.powf((x.order - w.len()) as f64 * gamma)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut per_word: BTreeMap<Word, f64> = BTreeMap::new();
    for (i, w) in x.words.iter().enumerate() {
        let sup = per_pair.iter().map(|r| r[i]).fold(0.0, crate::order::nan_max);
        per_word.insert(w.clone(), sup);
    }
    let seminorm: f64 = per_word.values().sum();
    let head = x
        .words
        .iter()
        .map(|w| sup_norm(x.coeff(0, w)))
        .fold(0.0, f64::max);
    Ok(ControlledNorms {
        seminorm,
        norm: head + seminorm,
        per_word,
    })
}

/// Regresses each word's remainder over dyadic lags; word `w` passes when
/// its slope is at least `(N - |w|)γ - 0.15`.
pub fn check_controlled(x: &ControlledPath) -> Result<OrderReport> {
    let m = x.times.len() - 1;
    let lags = regression_lags(m);
    let gamma = x.reference.gamma();
    let floor = noise_floor(x.magnitude());
    // increments for every (start, lag) pair, shared across words
    let incs: Vec<Vec<GroupTensor>> = lags
        .iter()
        .map(|&l| {
            (0..=m - l)
                .into_par_iter()
                .map(|k| x.reference.increment(x.times[k], x.times[k + l]))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut report = OrderReport::default();
    for w in &x.words {
        let samples: Vec<(f64, f64)> = lags
            .iter()
            .zip(&incs)
            .map(|(&l, row)| {
                let worst = (0..=m - l)
                    .into_par_iter()
                    .map(|k| sup_norm(&x.remainder_with(k, k + l, w, &row[k])))
                    .reduce(|| 0.0, crate::order::nan_max);
                let h = (0..=m - l).map(|k| x.times[k + l] - x.times[k]).sum::<f64>()
                    / (m - l + 1) as f64;
                (h, worst)
            })
            .collect();
        let fit = crate::order::fit_order(&samples, floor);
        report.push(OrderCheck::new(
            format!("{w}"),
            fit,
            (x.order - w.len()) as f64 * gamma,
        ));
    }
    Ok(report)
}

/// `Φ(X)` with `⟨e_w*, Φ⟩ = Σ_k 1/k! Σ_{(u_1..u_k)} c · D^kφ(X)(⟨e_{u_1}*, X⟩, …)`,
/// where `c = ⟨e_w*, e_{u_1} ш ⋯ ш e_{u_k}⟩` counts the shuffles producing `w`.
pub fn compose(phi: &dyn SmoothFunction, x: &ControlledPath) -> Result<ControlledPath> {
    if phi.dim_in() != x.width {
        return Err(Error::DimensionMismatch {
            expected: x.width,
            got: phi.dim_in(),
        });
    }
    phi.check_order(x.order)?;
    let order = x.order - 1;
    let d = x.reference.dim();
    let coeffs: Vec<Vec<Vec<f64>>> = (0..x.times.len())
        .into_par_iter()
        .map(|k| {
            let jets = phi.jets(x.primal(k), order);
            x.words
                .iter()
                .map(|w| {
                    if w.is_empty() {
                        return jets.iter().map(|j| j.value()).collect();
                    }
                    let mut out = vec![0.0; phi.dim_out()];
                    for arity in 1..=w.len() {
                        let table = deshuffles(w, arity).expect("arity within word length");
                        let scale = 1.0 / factorial(arity);
                        for t in &table.tuples {
                            let args: Vec<&[f64]> = t
                                .parts
                                .iter()
                                .map(|u| x.coeffs[k][word_index(d, u)].as_slice())
                                .collect();
                            let c = scale * t.multiplicity as f64;
                            for (o, j) in out.iter_mut().zip(&jets) {
                                *o += c * j.multilinear(&args);
                            }
                        }
                    }
                    out
                })
                .collect()
        })
        .collect();
    x.with_coeffs(coeffs)
}

/// Rough integral values along a partition together with its controlled lift.
#[derive(Clone, Debug)]
pub struct RoughIntegral {
    pub times: Vec<f64>,
    /// `∫_{t_0}^{t_k} X dW^i` at each partition time.
    pub values: Vec<Vec<f64>>,
    /// Order `N_γ + 1` lift: primal = integral, `⟨e_{wi}*, ·⟩ = ⟨e_w*, X⟩`.
    pub lift: ControlledPath,
}

/// Compensated Riemann sums `Σ_{[a,b]} Σ_{|w| <= N_γ - 1} ⟨e_w*, X_a⟩⟨W_{ab}, e_{wi}⟩`.
///
/// Partition points must be grid times of `X`.
pub fn rough_integral(x: &ControlledPath, i: usize, partition: &[f64]) -> Result<RoughIntegral> {
    let w_ref = x.reference.clone();
    let n = w_ref.n_gamma();
    if x.order < n {
        return Err(Error::InsufficientOrder {
            needed: n,
            declared: x.order,
        });
    }
    if w_ref.level() < n {
        return Err(Error::LevelMismatch {
            left: w_ref.level(),
            right: n,
        });
    }
    if i == 0 || i > w_ref.dim() {
        return Err(Error::InvalidLetter {
            letter: i,
            dim: w_ref.dim(),
        });
    }
    if partition.is_empty() {
        return Err(Error::EmptyPartition);
    }
    crate::roughpath::check_times(partition)?;
    let idx: Vec<usize> = partition
        .iter()
        .map(|&t| {
            knot_index(&x.times, t).ok_or_else(|| {
                Error::OutOfRange(format!("partition time {t} is not a grid time of the integrand"))
            })
        })
        .collect::<Result<_>>()?;
    let words = words_up_to(w_ref.dim(), n - 1);
    let cells: Vec<Vec<f64>> = idx
        .par_windows(2)
        .map(|p| {
            let (a, b) = (p[0], p[1]);
            let inc = w_ref.increment(x.times[a], x.times[b])?;
            let mut s = vec![0.0; x.width];
            for w in &words {
                let g = inc.get(&w.append(i));
                if g == 0.0 {
                    continue;
                }
                for (sj, c) in s.iter_mut().zip(x.coeff(a, w)) {
                    *sj += c * g;
                }
            }
            Ok(s)
        })
        .collect::<Result<_>>()?;
    let mut values = Vec::with_capacity(partition.len());
    let mut acc = vec![0.0; x.width];
    values.push(acc.clone());
    for c in &cells {
        for (a, v) in acc.iter_mut().zip(c) {
            *a += v;
        }
        values.push(acc.clone());
    }
    let lift_words = words_up_to(w_ref.dim(), n);
    let coeffs: Vec<Vec<Vec<f64>>> = idx
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            lift_words
                .iter()
                .map(|u| {
                    if u.is_empty() {
                        values[k].clone()
                    } else if u.last() == Some(i) {
                        x.coeff(a, &u.slice(0, u.len() - 1)).to_vec()
                    } else {
                        vec![0.0; x.width]
                    }
                })
                .collect()
        })
        .collect();
    let lift = ControlledPath::new(w_ref, n + 1, x.width, partition.to_vec(), coeffs)?;
    Ok(RoughIntegral {
        times: partition.to_vec(),
        values,
        lift,
    })
}

/// Local defect `|∫_s^t X dW^i - Σ_{|w| <= N_γ-1} ⟨e_w*, X_s⟩⟨W_{st}, e_{wi}⟩|`
/// regressed over dyadic lags of the integrand's grid; the integral is
/// evaluated on that full grid. The threshold is `(N_γ + 1)γ`.
pub fn integral_local_order(x: &ControlledPath, i: usize, min_lag: usize) -> Result<OrderCheck> {
    let ri = rough_integral(x, i, &x.times)?;
    let w_ref = x.reference.clone();
    let n = w_ref.n_gamma();
    let words = words_up_to(w_ref.dim(), n - 1);
    let lags: Vec<usize> = regression_lags(x.times.len() - 1)
        .into_iter()
        .filter(|&l| l >= min_lag)
        .collect();
    let mag = ri
        .values
        .iter()
        .flatten()
        .fold(x.magnitude(), |m, v| m.max(v.abs()));
    let fit = lag_regression(&x.times, &lags, noise_floor(mag), |a, b| {
        let inc = match w_ref.increment(x.times[a], x.times[b]) {
            Ok(g) => g,
            Err(_) => return f64::NAN,
        };
        let mut r: Vec<f64> = ri.values[b].iter().zip(&ri.values[a]).map(|(p, q)| p - q).collect();
        for w in &words {
            let g = inc.get(&w.append(i));
            for (rj, c) in r.iter_mut().zip(x.coeff(a, w)) {
                *rj -= c * g;
            }
        }
        sup_norm(&r)
    });
    Ok(OrderCheck::new(
        format!("integral dW^{i}"),
        fit,
        (n + 1) as f64 * w_ref.gamma(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roughpath::{lift_pl, PiecewiseLinearPath};
    use crate::smooth::{Affine, Polynomial};

    fn smooth_driver(m: usize) -> Arc<GeometricRoughPath> {
        let p = PiecewiseLinearPath::from_fn(1.0, m, |t| vec![t, 0.5 * t * t]).unwrap();
        Arc::new(lift_pl(&p, 0.4, 2).unwrap())
    }

    #[test]
    fn word_index_matches_enumeration() {
        for (k, w) in words_up_to(3, 3).iter().enumerate() {
            assert_eq!(word_index(3, w), k);
        }
    }

    #[test]
    fn constant_path_has_zero_seminorm() {
        let w = smooth_driver(16);
        let x = ControlledPath::constant(w.clone(), 3, w.times().to_vec(), &[2.0, -1.0]).unwrap();
        let n = controlled_norms(&x).unwrap();
        assert_eq!(n.seminorm, 0.0);
        assert_eq!(n.norm, 2.0);
        assert!(check_controlled(&x).unwrap().pass());
    }

    #[test]
    fn integral_of_one_is_increment() {
        let w = smooth_driver(32);
        let x = ControlledPath::constant(w.clone(), 2, w.times().to_vec(), &[1.0]).unwrap();
        let ri = rough_integral(&x, 2, w.times()).unwrap();
        let last = ri.values.last().unwrap()[0];
        assert!((last - 0.5).abs() < 1e-15);
        assert!(check_controlled(&ri.lift).unwrap().pass());
    }

    #[test]
    fn compose_identity_and_linear() {
        let w = smooth_driver(16);
        let times = w.times().to_vec();
        let x = ControlledPath::from_fn(w.clone(), 3, 2, times, |k, u| {
            vec![k as f64 * 0.1 + u.len() as f64, 1.0 - 0.3 * u.len() as f64]
        })
        .unwrap();
        let id = compose(&Affine::identity(2), &x).unwrap();
        for k in 0..x.times().len() {
            assert_eq!(id.row(k), x.row(k));
        }
        let a = Affine::linear(vec![vec![2.0, -1.0]]);
        let y = compose(&a, &x).unwrap();
        for k in 0..x.times().len() {
            for u in x.words() {
                let c = x.coeff(k, u);
                assert!((y.coeff(k, u)[0] - (2.0 * c[0] - c[1])).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn compose_repeated_letter_weighting() {
        // n = d = 1, word (1,1): Dφ·X^{11} + D²φ(X^1, X^1), the shuffle e1 ш e1 = 2 e11
        // cancelling the 1/2!.
        let p = PiecewiseLinearPath::from_fn(1.0, 4, |t| vec![t]).unwrap();
        let w = Arc::new(lift_pl(&p, 0.3, 3).unwrap());
        let x = ControlledPath::from_fn(w.clone(), 3, 1, w.times().to_vec(), |_, u| match u.len() {
            0 => vec![0.5],
            1 => vec![2.0],
            _ => vec![3.0],
        })
        .unwrap();
        let cube = Polynomial::scalar(1, &[(1.0, &[3])]);
        let y = compose(&cube, &x).unwrap();
        let (d1, d2) = (3.0 * 0.25, 6.0 * 0.5);
        assert!((y.coeff(0, &Word::from([1, 1]))[0] - (d1 * 3.0 + d2 * 4.0)).abs() < 1e-14);
    }

    #[test]
    fn integral_is_linear() {
        let w = smooth_driver(64);
        let times = w.times().to_vec();
        let x = ControlledPath::from_fn(w.clone(), 2, 1, times.clone(), |k, u| {
            vec![(k as f64).sin() + u.len() as f64]
        })
        .unwrap();
        let y = ControlledPath::from_fn(w.clone(), 2, 1, times.clone(), |k, u| {
            vec![(k as f64 * 0.3).cos() - u.len() as f64]
        })
        .unwrap();
        let z = ControlledPath::linear_combination(2.0, &x, -0.5, &y).unwrap();
        let (ix, iy, iz) = (
            rough_integral(&x, 1, &times).unwrap(),
            rough_integral(&y, 1, &times).unwrap(),
            rough_integral(&z, 1, &times).unwrap(),
        );
        for k in 0..times.len() {
            let lhs = iz.values[k][0];
            let rhs = 2.0 * ix.values[k][0] - 0.5 * iy.values[k][0];
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn errors() {
        let w = smooth_driver(8);
        let x = ControlledPath::constant(w.clone(), 1, w.times().to_vec(), &[1.0]).unwrap();
        assert!(matches!(
            rough_integral(&x, 1, w.times()),
            Err(Error::InsufficientOrder { .. })
        ));
        let x = ControlledPath::constant(w.clone(), 2, w.times().to_vec(), &[1.0]).unwrap();
        assert!(matches!(rough_integral(&x, 1, &[]), Err(Error::EmptyPartition)));
        assert!(rough_integral(&x, 1, &[0.0, 0.3333]).is_err());
    }
}
