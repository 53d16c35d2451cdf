//! Rough transport and continuity equations solved along the flow of an RDE,
//! with verifiers for their graded solution estimates.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::algebra::{words_up_to, Word};
use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::order::{regression_lags, lag_regression, noise_floor, OrderCheck, OrderReport};
use crate::parallel::try_par_map;
use crate::rde::{derive_fields, davie_trajectory, gamma_from_jets, propagate_flow_jets, DerivedFieldTable, VectorFieldSystem};
use crate::roughpath::{GeometricRoughPath, KNOT_SNAP};
use crate::smooth::SmoothFn;

/// Terminal-value problem `-du = Σ_i Γ_i u dW^i`, `u_T = g`.
#[derive(Clone, Debug)]
pub struct TransportProblem {
    pub fields: Arc<VectorFieldSystem>,
    pub terminal: SmoothFn,
    pub driver: Arc<GeometricRoughPath>,
    pub horizon: f64,
}

impl TransportProblem {
    pub fn new(
        fields: Arc<VectorFieldSystem>,
        terminal: SmoothFn,
        driver: Arc<GeometricRoughPath>,
        horizon: f64,
    ) -> Result<Self> {
        if terminal.dim_in() != fields.n() {
            return Err(Error::DimensionMismatch {
                expected: fields.n(),
                got: terminal.dim_in(),
            });
        }
        if fields.d() != driver.dim() {
            return Err(Error::AlphabetMismatch {
                left: fields.d(),
                right: driver.dim(),
            });
        }
        if !(horizon > driver.start() && horizon <= driver.end() + KNOT_SNAP * driver.end().abs().max(1.0)) {
            return Err(Error::TimeOutOfRange {
                time: horizon,
                start: driver.start(),
                end: driver.end(),
            });
        }
        let ng = driver.n_gamma();
        fields.check_order(2 * ng + 1)?;
        terminal.check_order(ng + 1)?;
        Ok(TransportProblem {
            fields,
            terminal,
            driver,
            horizon,
        })
    }

    pub fn table(&self) -> Result<DerivedFieldTable> {
        derive_fields(self.fields.clone(), self.driver.level())
    }
}

fn snapped(a: f64, b: f64) -> bool {
    (a - b).abs() <= KNOT_SNAP * a.abs().max(b.abs()).max(1.0)
}

/// `{s} ∪ (mesh ∩ (s, t)) ∪ {t}`.
pub fn partition_between(mesh: &[f64], s: f64, t: f64) -> Vec<f64> {
    let mut out = vec![s];
    out.extend(mesh.iter().copied().filter(|&r| r > s && r < t && !snapped(r, s) && !snapped(r, t)));
    if !snapped(s, t) {
        out.push(t);
    }
    out
}

fn check_query(p: &TransportProblem, s: f64, x: &[f64]) -> Result<()> {
    if x.len() != p.fields.n() {
        return Err(Error::DimensionMismatch {
            expected: p.fields.n(),
            got: x.len(),
        });
    }
    if s < p.driver.start() || s > p.horizon + KNOT_SNAP * p.horizon.abs().max(1.0) {
        return Err(Error::TimeOutOfRange {
            time: s,
            start: p.driver.start(),
            end: p.horizon,
        });
    }
    Ok(())
}

/// `u(s, x) = g(X^{s,x}_T)` for each query, with Davie steps on `mesh`.
pub fn solve_transport(p: &TransportProblem, queries: &[(f64, Vec<f64>)], mesh: &[f64]) -> Result<Vec<Vec<f64>>> {
    let table = p.table()?;
    try_par_map(queries, |_, (s, x)| {
        check_query(p, *s, x)?;
        let part = partition_between(mesh, *s, p.horizon);
        if part.len() == 1 {
            return Ok(p.terminal.eval(x));
        }
        let (xs, _) = davie_trajectory(x, &table, &p.driver, &part)?;
        Ok(p.terminal.eval(xs.last().expect("non-empty trajectory")))
    })
}

/// Spatial Taylor jets of a candidate solution `u_t` at `x`.
pub trait SolutionJets: Sync {
    fn solution_jets(&self, t: f64, x: &[f64], order: usize) -> Result<Vec<Jet>>;
}

impl<F> SolutionJets for F
where
    F: Fn(f64, &[f64], usize) -> Result<Vec<Jet>> + Sync,
{
    fn solution_jets(&self, t: f64, x: &[f64], order: usize) -> Result<Vec<Jet>> {
        self(t, x, order)
    }
}

/// `u(s, ·) = g ∘ X^{s,·}_T` with spatial jets from flow jets and the chain rule.
pub struct FlowSolution<'a> {
    problem: &'a TransportProblem,
    table: DerivedFieldTable,
    mesh: Vec<f64>,
}

impl<'a> FlowSolution<'a> {
    pub fn new(problem: &'a TransportProblem, mesh: &[f64]) -> Result<Self> {
        Ok(FlowSolution {
            problem,
            table: problem.table()?,
            mesh: mesh.to_vec(),
        })
    }
}

impl SolutionJets for FlowSolution<'_> {
    fn solution_jets(&self, t: f64, x: &[f64], order: usize) -> Result<Vec<Jet>> {
        let p = self.problem;
        check_query(p, t, x)?;
        let part = partition_between(&self.mesh, t, p.horizon);
        let flow = if part.len() == 1 {
            Jet::variables(x, order)
        } else {
            propagate_flow_jets(x, &self.table, &p.driver, &part, order)?
                .pop()
                .expect("non-empty trajectory")
        };
        Ok(p.terminal.compose_jets(&flow))
    }
}

/// Graded check of `Γ_w u_s(x) ≍ Σ_{|v| <= N_γ - |w|} Γ_{wv} u_t(x)⟨W_{st}, e_v⟩`
/// for every `|w| <= N_γ`, at order `(N_γ + 1 - |w|)γ`, the defect maximized over
/// `space` and over pairs of `times` at each dyadic lag.
pub fn verify_transport(
    p: &TransportProblem,
    u: &dyn SolutionJets,
    space: &[Vec<f64>],
    times: &[f64],
) -> Result<OrderReport> {
    let ng = p.driver.n_gamma();
    let table = derive_fields(p.fields.clone(), ng)?;
    let words = words_up_to(p.fields.d(), ng);
    let fvals: Vec<Vec<Vec<f64>>> = space.iter().map(|x| table.values_at(x)).collect::<Result<_>>()?;
    let nx = space.len();
    let pairs: Vec<(usize, usize)> = (0..times.len()).flat_map(|k| (0..nx).map(move |j| (k, j))).collect();
    // gam[k][j][w] = Γ_w u_{t_k}(x_j)
    let flat: Vec<Vec<Vec<f64>>> = try_par_map(&pairs, |_, &(k, j)| {
        let jets = u.solution_jets(times[k], &space[j], ng)?;
        words.iter().map(|w| gamma_from_jets(w, &jets, &fvals[j], &table)).collect()
    })?;
    let gam: Vec<&[Vec<Vec<f64>>]> = flat.chunks(nx).collect();
    graded_report(&p.driver, &table, &words, times, ng, false, |a, b, wi, tail| {
        let g = p.driver.increment(times[a], times[b])?;
        let mut worst: f64 = 0.0;
        for j in 0..nx {
            let lhs = &gam[a][j][wi];
            let mut rhs = vec![0.0; lhs.len()];
            for (idx, v) in tail {
                let c = g.get(v);
                for (r, val) in rhs.iter_mut().zip(&gam[b][j][*idx]) {
                    *r += c * val;
                }
            }
            for (l, r) in lhs.iter().zip(&rhs) {
                worst = crate::order::nan_max(worst, (l - r).abs());
            }
        }
        Ok(worst)
    }, flat.iter().flatten().flatten().fold(0.0, |m: f64, v| m.max(v.abs())))
}

/// `(index of wv, v)` (or of `vw` when `prefix`) for every `v` with `|wv| <= max_len`.
fn tails(table: &DerivedFieldTable, words: &[Word], w: &Word, max_len: usize, prefix: bool) -> Vec<(usize, Word)> {
    words
        .iter()
        .filter(|v| v.len() + w.len() <= max_len)
        .map(|v| {
            let joined = if prefix { v.concat(w) } else { w.concat(v) };
            (table.index(&joined), v.clone())
        })
        .collect()
}

fn graded_report<F>(
    driver: &GeometricRoughPath,
    table: &DerivedFieldTable,
    words: &[Word],
    times: &[f64],
    ng: usize,
    prefix: bool,
    defect: F,
    magnitude: f64,
) -> Result<OrderReport>
where
    F: Fn(usize, usize, usize, &[(usize, Word)]) -> Result<f64> + Sync,
{
    crate::roughpath::check_times(times)?;
    let lags = regression_lags(times.len() - 1);
    let mut report = OrderReport::default();
    for (wi, w) in words.iter().enumerate() {
        let tail = tails(table, words, w, ng, prefix);
        let fit = lag_regression(times, &lags, noise_floor(magnitude), |a, b| {
            defect(a, b, wi, &tail).unwrap_or(f64::NAN)
        });
        report.push(OrderCheck::new(
            w.to_string(),
            fit,
            (ng + 1 - w.len()) as f64 * driver.gamma(),
        ));
    }
    Ok(report)
}

/// Finite weighted sum of Dirac masses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleMeasure {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl ParticleMeasure {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: weights.len(),
            });
        }
        if let Some(n) = points.first().map(Vec::len) {
            if let Some(bad) = points.iter().find(|p| p.len() != n) {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: bad.len(),
                });
            }
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter(format!("particle weight {w} is not a finite non-negative number")));
        }
        Ok(ParticleMeasure { points, weights })
    }

    pub fn dirac(x: Vec<f64>) -> Self {
        ParticleMeasure {
            points: vec![x],
            weights: vec![1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `ρ(1)`.
    pub fn mass(&self) -> f64 {
        crate::parallel::tree_sum(&self.weights)
    }

    /// `ρ(φ) = Σ_j w_j φ(x_j)`, componentwise.
    pub fn pair(&self, phi: &dyn crate::smooth::SmoothFunction) -> Vec<f64> {
        self.pair_values(&self.points.iter().map(|x| phi.eval(x)).collect::<Vec<_>>())
    }

    /// `Σ_j w_j v_j` with pairwise summation.
    pub fn pair_values(&self, values: &[Vec<f64>]) -> Vec<f64> {
        let width = values.first().map_or(0, Vec::len);
        (0..width)
            .map(|o| {
                let terms: Vec<f64> = values.iter().zip(&self.weights).map(|(v, w)| w * v[o]).collect();
                crate::parallel::tree_sum(&terms)
            })
            .collect()
    }
}

/// `ρ_t = (X^{0,·}_t)_# μ` at every time of `partition` (which starts at the
/// initial time). Weights are carried over untouched.
pub fn pushforward(
    fields: Arc<VectorFieldSystem>,
    driver: &GeometricRoughPath,
    mu: &ParticleMeasure,
    partition: &[f64],
) -> Result<Vec<ParticleMeasure>> {
    let table = derive_fields(fields.clone(), driver.level())?;
    let paths = try_par_map(&mu.points, |j, x| {
        if x.len() != fields.n() {
            return Err(Error::DimensionMismatch {
                expected: fields.n(),
                got: x.len(),
            });
        }
        davie_trajectory(x, &table, driver, partition)
            .map(|(xs, _)| xs)
            .map_err(|e| Error::Particle {
                index: j,
                source: Box::new(e),
            })
    })?;
    Ok((0..partition.len())
        .map(|k| ParticleMeasure {
            points: paths.iter().map(|p| p[k].clone()).collect(),
            weights: mu.weights.clone(),
        })
        .collect())
}

/// `ρ_t(φ) = ∫ φ(X^{0,x}_t) μ(dx)` for each `φ`, with Davie steps on `mesh`
/// from the driver's start.
pub fn solve_continuity(
    fields: Arc<VectorFieldSystem>,
    driver: &GeometricRoughPath,
    mu: &ParticleMeasure,
    t: f64,
    phis: &[SmoothFn],
    mesh: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let start = driver.start();
    let rho = if snapped(t, start) {
        mu.clone()
    } else {
        let part = partition_between(mesh, start, t);
        pushforward(fields, driver, mu, &part)?.pop().expect("non-empty")
    };
    Ok(phis.iter().map(|phi| rho.pair(phi.as_ref())).collect())
}

/// Graded check of `ρ_t(Γ_w φ) ≍ Σ_{|v| < N_γ + 1 - |w|} ρ_s(Γ_{vw} φ)⟨W_{st}, e_v⟩`
/// for every `|w| <= N_γ`, the defect maximized over the test family `phis`.
/// `rho[k]` is the measure at `times[k]`.
pub fn verify_continuity(
    fields: Arc<VectorFieldSystem>,
    driver: &GeometricRoughPath,
    rho: &[ParticleMeasure],
    times: &[f64],
    phis: &[SmoothFn],
) -> Result<OrderReport> {
    if rho.len() != times.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            got: rho.len(),
        });
    }
    let ng = driver.n_gamma();
    for phi in phis {
        phi.check_order(ng)?;
    }
    let table = derive_fields(fields.clone(), ng)?;
    let words = words_up_to(fields.d(), ng);
    // pairs[k][f][w] = ρ_{t_k}(Γ_w φ_f)
    let pairs: Vec<Vec<Vec<Vec<f64>>>> = try_par_map(rho, |_, r| {
        let per_point: Vec<(Vec<Vec<Jet>>, Vec<Vec<f64>>)> = r
            .points
            .iter()
            .map(|x| Ok((phis.iter().map(|p| p.jets(x, ng)).collect(), table.values_at(x)?)))
            .collect::<Result<_>>()?;
        (0..phis.len())
            .map(|f| {
                words
                    .iter()
                    .map(|w| {
                        let vals: Vec<Vec<f64>> = per_point
                            .iter()
                            .map(|(pj, fv)| gamma_from_jets(w, &pj[f], fv, &table))
                            .collect::<Result<_>>()?;
                        Ok(r.pair_values(&vals))
                    })
                    .collect()
            })
            .collect()
    })?;
    let magnitude = pairs.iter().flatten().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    graded_report(driver, &table, &words, times, ng, true, |a, b, wi, tail| {
        let g = driver.increment(times[a], times[b])?;
        let mut worst: f64 = 0.0;
        for f in 0..phis.len() {
            let lhs = &pairs[b][f][wi];
            let mut rhs = vec![0.0; lhs.len()];
            for (idx, v) in tail {
                let c = g.get(v);
                for (r, val) in rhs.iter_mut().zip(&pairs[a][f][*idx]) {
                    *r += c * val;
                }
            }
            for (l, r) in lhs.iter().zip(&rhs) {
                worst = crate::order::nan_max(worst, (l - r).abs());
            }
        }
        Ok(worst)
    }, magnitude)
}

/// Output of [`duality_check`].
#[derive(Clone, Debug, Serialize)]
pub struct DualityReport {
    pub times: Vec<f64>,
    /// `α(r) = ρ_r(u_r)` (first component of `g`).
    pub alpha: Vec<f64>,
    /// `max_r |α(r) - α(r_0)|`.
    pub drift: f64,
}

/// Evaluates `r ↦ ρ_r(u_r)` on `grid`, which should avoid the solver `mesh`
/// (on mesh points the discrete flows compose exactly and the drift is pure
/// round-off). Both flows are stepped on `mesh ∪ {r}`.
pub fn duality_check(
    p: &TransportProblem,
    mu: &ParticleMeasure,
    grid: &[f64],
    mesh: &[f64],
) -> Result<DualityReport> {
    crate::roughpath::check_times(grid)?;
    let table = p.table()?;
    let start = p.driver.start();
    let alpha: Vec<f64> = try_par_map(grid, |_, &r| {
        let fwd = partition_between(mesh, start, r);
        let bwd = partition_between(mesh, r, p.horizon);
        let vals: Vec<Vec<f64>> = mu
            .points
            .iter()
            .enumerate()
            .map(|(j, x)| {
                let wrap = |e| Error::Particle {
                    index: j,
                    source: Box::new(e),
                };
                let y = if fwd.len() == 1 {
                    x.clone()
                } else {
                    davie_trajectory(x, &table, &p.driver, &fwd).map_err(wrap)?.0.pop().expect("non-empty")
                };
                let z = if bwd.len() == 1 {
                    y
                } else {
                    davie_trajectory(&y, &table, &p.driver, &bwd).map_err(wrap)?.0.pop().expect("non-empty")
                };
                Ok(p.terminal.eval(&z))
            })
            .collect::<Result<_>>()?;
        Ok(mu.pair_values(&vals)[0])
    })?;
    let drift = alpha.iter().map(|a| (a - alpha[0]).abs()).fold(0.0, f64::max);
    Ok(DualityReport {
        times: grid.to_vec(),
        alpha,
        drift,
    })
}

/// Uniform grid of `m + 1` points on `[a, b]`.
pub fn uniform_grid(a: f64, b: f64, m: usize) -> Vec<f64> {
    (0..=m).map(|k| if k == m { b } else { a + (b - a) * k as f64 / m as f64 }).collect()
}

/// Tensor grid `{lo + (hi - lo) j / (k - 1)}^n`.
pub fn space_grid(n: usize, lo: f64, hi: f64, k: usize) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = if k == 1 { vec![(lo + hi) / 2.0] } else { uniform_grid(lo, hi, k - 1) };
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roughpath::{lift_pl, PiecewiseLinearPath};
    use crate::smooth::{Constant, Polynomial};

    fn const_fields() -> Arc<VectorFieldSystem> {
        let f1: SmoothFn = Arc::new(Constant { dim_in: 2, value: vec![1.0, 0.5] });
        let f2: SmoothFn = Arc::new(Constant { dim_in: 2, value: vec![-0.3, 2.0] });
        Arc::new(VectorFieldSystem::new(vec![f1, f2]).unwrap())
    }

    fn driver(m: usize) -> Arc<GeometricRoughPath> {
        let p = PiecewiseLinearPath::from_fn(1.0, m, |t| vec![(4.0 * t).sin(), t * t]).unwrap();
        Arc::new(lift_pl(&p, 0.45, 2).unwrap())
    }

    fn g() -> SmoothFn {
        Arc::new(Polynomial::scalar(2, &[(1.0, &[2, 1]), (-0.7, &[0, 3]), (0.2, &[1, 0])]))
    }

    #[test]
    fn constant_fields_translate() {
        let w = driver(64);
        let p = TransportProblem::new(const_fields(), g(), w.clone(), 1.0).unwrap();
        let mesh = w.times().to_vec();
        let q = vec![(0.3, vec![0.1, -0.2]), (1.0, vec![0.5, 0.5])];
        let u = solve_transport(&p, &q, &mesh).unwrap();
        let inc = w.increment(0.3, 1.0).unwrap();
        let (a, b) = (inc.get(&Word::letter(1)), inc.get(&Word::letter(2)));
        let y = [0.1 + a - 0.3 * b, -0.2 + 0.5 * a + 2.0 * b];
        assert!((u[0][0] - g().eval(&y)[0]).abs() < 1e-12);
        assert_eq!(u[1], g().eval(&[0.5, 0.5]));
    }

    #[test]
    fn mass_is_preserved() {
        let w = driver(32);
        let mu = ParticleMeasure::new(vec![vec![0.0, 0.0], vec![1.0, -1.0]], vec![0.25, 0.5]).unwrap();
        let rho = pushforward(const_fields(), &w, &mu, w.times()).unwrap();
        for r in &rho {
            assert_eq!(r.mass(), mu.mass());
        }
    }

    #[test]
    fn grids() {
        assert_eq!(space_grid(2, -1.0, 1.0, 3).len(), 9);
        assert_eq!(partition_between(&[0.0, 0.25, 0.5, 0.75, 1.0], 0.3, 1.0), vec![0.3, 0.5, 0.75, 1.0]);
        assert_eq!(partition_between(&[0.0, 0.5, 1.0], 1.0, 1.0), vec![1.0]);
    }
}
