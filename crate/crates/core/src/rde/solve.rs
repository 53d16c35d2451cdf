use std::sync::Arc;

use super::fields::{derive_fields, DerivedFieldTable, VectorFieldSystem};
use crate::algebra::GroupTensor;
use crate::controlled::{compose, rough_integral, sup_norm, ControlledPath};
use crate::error::{Error, Result};
use crate::roughpath::GeometricRoughPath;

/// States beyond this magnitude count as blow-up.
pub const BLOW_UP: f64 = 1e150;

/// `Σ_{|w| <= N} F_w(x)⟨g, e_w⟩` given the values `F_w(x)` in table order.
pub(crate) fn combine(values: &[Vec<f64>], table: &DerivedFieldTable, g: &GroupTensor) -> Vec<f64> {
    let mut out = vec![0.0; values[0].len()];
    for (w, fw) in table.words().iter().zip(values) {
        let c = g.get(w);
        if c == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(fw) {
            *o += c * v;
        }
    }
    out
}

pub(crate) fn check_increment(table: &DerivedFieldTable, g: &GroupTensor) -> Result<()> {
    if g.level() != table.level() {
        return Err(Error::LevelMismatch {
            left: g.level(),
            right: table.level(),
        });
    }
    if g.dim() != table.system().d() {
        return Err(Error::AlphabetMismatch {
            left: g.dim(),
            right: table.system().d(),
        });
    }
    Ok(())
}

/// One Davie step `x ↦ Σ_{|w| <= N} F_w(x)⟨g, e_w⟩`.
pub fn davie_step(x: &[f64], table: &DerivedFieldTable, g: &GroupTensor) -> Result<Vec<f64>> {
    check_increment(table, g)?;
    if x.len() != table.system().n() {
        return Err(Error::DimensionMismatch {
            expected: table.system().n(),
            got: x.len(),
        });
    }
    Ok(combine(&table.values_at(x)?, table, g))
}

fn blown_up(x: &[f64]) -> bool {
    x.iter().any(|v| !v.is_finite() || v.abs() > BLOW_UP)
}

/// Davie iterates along a partition, together with `F_w(X_{t_k})` for all
/// words of the table.
pub fn davie_trajectory(
    x0: &[f64],
    table: &DerivedFieldTable,
    w: &GeometricRoughPath,
    partition: &[f64],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>)> {
    if partition.is_empty() {
        return Err(Error::EmptyPartition);
    }
    crate::roughpath::check_times(partition)?;
    if w.level() != table.level() {
        return Err(Error::LevelMismatch {
            left: w.level(),
            right: table.level(),
        });
    }
    let mut xs = Vec::with_capacity(partition.len());
    let mut fs = Vec::with_capacity(partition.len());
    let mut x = x0.to_vec();
    for (k, p) in partition.windows(2).enumerate() {
        let vals = table.values_at(&x)?;
        let g = w.increment(p[0], p[1])?;
        let next = combine(&vals, table, &g);
        xs.push(x);
        fs.push(vals);
        if blown_up(&next) {
            return Err(Error::BlowUp {
                cell: k,
                start: p[0],
                end: p[1],
            });
        }
        x = next;
    }
    fs.push(table.values_at(&x)?);
    xs.push(x);
    Ok((xs, fs))
}

/// Output of [`solve_rde`].
#[derive(Clone, Debug)]
pub struct RdeSolution {
    /// Controlled lift of order `N_γ + 1` with `⟨e_w*, X_t⟩ = F_w(X_t)`.
    pub path: ControlledPath,
    /// A-posteriori residual `max_t |X_t - X_0 - Σ_i ∫ f_i(X) dW^i|`.
    pub residual: f64,
}

/// Solves `dX = Σ f_i(X) dW^i` from `partition[0]` by Davie steps at the
/// level of `W`.
pub fn solve_rde(
    x0: &[f64],
    v: Arc<VectorFieldSystem>,
    w: Arc<GeometricRoughPath>,
    partition: &[f64],
) -> Result<RdeSolution> {
    let path = solve_rde_path(x0, v.clone(), w, partition)?;
    let residual = fixed_point_residual(&path, &v)?;
    Ok(RdeSolution { path, residual })
}

/// [`solve_rde`] without the residual computation.
pub fn solve_rde_path(
    x0: &[f64],
    v: Arc<VectorFieldSystem>,
    w: Arc<GeometricRoughPath>,
    partition: &[f64],
) -> Result<ControlledPath> {
    let ng = w.n_gamma();
    v.check_order(ng + 1)?;
    if x0.len() != v.n() {
        return Err(Error::DimensionMismatch {
            expected: v.n(),
            got: x0.len(),
        });
    }
    let table = derive_fields(v.clone(), w.level())?;
    let (_, fs) = davie_trajectory(x0, &table, &w, partition)?;
    let keep = crate::algebra::count_words(v.d(), ng);
    let coeffs: Vec<Vec<Vec<f64>>> = fs.into_iter().map(|mut r| {
        r.truncate(keep);
        r
    }).collect();
    ControlledPath::new(w, ng + 1, v.n(), partition.to_vec(), coeffs)
}

/// `max_k |X_k - X_0 - Σ_i ∫_0^{t_k} f_i(X) dW^i|` with the integrals as
/// compensated sums on the solution grid.
pub fn fixed_point_residual(x: &ControlledPath, v: &VectorFieldSystem) -> Result<f64> {
    let mut total: Vec<Vec<f64>> = vec![vec![0.0; v.n()]; x.times().len()];
    for i in 1..=v.d() {
        let integrand = compose(v.field(i).as_ref(), x)?;
        let ri = rough_integral(&integrand, i, x.times())?;
        for (t, r) in total.iter_mut().zip(&ri.values) {
            for (a, b) in t.iter_mut().zip(r) {
                *a += b;
            }
        }
    }
    let x0 = x.primal(0).to_vec();
    let mut worst: f64 = 0.0;
    for (k, t) in total.iter().enumerate() {
        let r: Vec<f64> = x
            .primal(k)
            .iter()
            .zip(&x0)
            .zip(t)
            .map(|((a, b), c)| a - b - c)
            .collect();
        worst = worst.max(sup_norm(&r));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roughpath::{lift_pl, PiecewiseLinearPath};
    use crate::smooth::{Affine, Constant, SmoothFn};

    fn scalar_linear(lambda: f64) -> Arc<VectorFieldSystem> {
        let f: SmoothFn = Arc::new(Affine::linear(vec![vec![lambda]]));
        Arc::new(VectorFieldSystem::new(vec![f]).unwrap())
    }

    #[test]
    fn step_examples() {
        let lambda = 0.7;
        let h = 0.1;
        let t = derive_fields(scalar_linear(lambda), 2).unwrap();
        let g = GroupTensor::segment(&[h], 2);
        let x = davie_step(&[2.0], &t, &g).unwrap()[0];
        let expect = 2.0 * (1.0 + lambda * h + lambda * lambda * h * h / 2.0);
        assert!((x - expect).abs() < 1e-15);
        assert_eq!(davie_step(&[2.0], &t, &GroupTensor::identity(1, 2)).unwrap(), vec![2.0]);
        assert!(matches!(
            davie_step(&[2.0], &t, &GroupTensor::identity(1, 3)),
            Err(Error::LevelMismatch { .. })
        ));
    }

    #[test]
    fn zero_field_is_constant() {
        let f: SmoothFn = Arc::new(Constant { dim_in: 2, value: vec![0.0, 0.0] });
        let v = Arc::new(VectorFieldSystem::new(vec![f.clone(), f]).unwrap());
        let p = PiecewiseLinearPath::from_fn(1.0, 8, |t| vec![t.sin(), t * t]).unwrap();
        let w = Arc::new(lift_pl(&p, 0.4, 2).unwrap());
        let sol = solve_rde(&[1.0, -2.0], v, w.clone(), w.times()).unwrap();
        for k in 0..sol.path.times().len() {
            assert_eq!(sol.path.primal(k), &[1.0, -2.0]);
        }
        assert_eq!(sol.residual, 0.0);
    }

    #[test]
    fn exponential_growth_and_blow_up() {
        let p = PiecewiseLinearPath::from_fn(1.0, 1000, |t| vec![t]).unwrap();
        let w = Arc::new(lift_pl(&p, 0.9, 1).unwrap());
        let sol = solve_rde(&[1.0], scalar_linear(1.0), w.clone(), w.times()).unwrap();
        let last = sol.path.primal(1000)[0];
        assert!((last - 1f64.exp()).abs() < 2e-3);
        assert!(sol.residual < 1e-12);

        let p = PiecewiseLinearPath::from_fn(1000.0, 10, |t| vec![t]).unwrap();
        let w = Arc::new(lift_pl(&p, 0.9, 1).unwrap());
        let err = solve_rde(&[1.0], scalar_linear(1e15), w.clone(), w.times()).unwrap_err();
        assert!(matches!(err, Error::BlowUp { .. }));
        assert!(err.is_numerical());
    }
}
