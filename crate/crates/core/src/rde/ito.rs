use std::sync::Arc;

use super::fields::{derive_fields, DerivedFieldTable, VectorFieldSystem};
use crate::algebra::{deshuffles, words_up_to, Word};
use crate::controlled::{compose, rough_integral, sup_norm, ControlledPath};
use crate::error::{Error, Result};
use crate::jet::{factorial, lie_derivative, Jet};
use crate::order::{regression_lags, lag_regression, noise_floor, OrderCheck, OrderReport};
use crate::smooth::{SmoothFn, SmoothFunction};

/// `Γ_w φ(x) = Σ_k 1/k! Σ c · D^k φ(x)(F_{u_1}(x), …, F_{u_k}(x))` from
/// the jets of `φ` at `x` (order `>= |w|`) and the values `F_u(x)` of
/// `table` (indexed like `table.words()`).
pub fn gamma_from_jets(w: &Word, phi: &[Jet], fvals: &[Vec<f64>], table: &DerivedFieldTable) -> Result<Vec<f64>> {
    if w.is_empty() {
        return Ok(phi.iter().map(Jet::value).collect());
    }
    let mut out = vec![0.0; phi.len()];
    for k in 1..=w.len() {
        let c = 1.0 / factorial(k);
        for t in &deshuffles(w, k)?.tuples {
            let args: Vec<&[f64]> = t.parts.iter().map(|u| fvals[table.index(u)].as_slice()).collect();
            let m = c * t.multiplicity as f64;
            for (o, j) in out.iter_mut().zip(phi) {
                *o += m * j.multilinear(&args);
            }
        }
    }
    Ok(out)
}

/// The function `Γ_w φ`. Values come from the shuffle form; jets from the
/// composition `Γ_{i_1} ∘ ⋯ ∘ Γ_{i_m}`.
#[derive(Clone, Debug)]
pub struct GammaFunction {
    w: Word,
    table: Arc<DerivedFieldTable>,
    phi: SmoothFn,
}

/// Builds `Γ_w φ` for the fields of `v`.
pub fn gamma_operator(w: &Word, v: Arc<VectorFieldSystem>, phi: SmoothFn) -> Result<GammaFunction> {
    if phi.dim_in() != v.n() {
        return Err(Error::DimensionMismatch {
            expected: v.n(),
            got: phi.dim_in(),
        });
    }
    if w.max_letter() > v.d() {
        return Err(Error::InvalidLetter {
            letter: w.max_letter(),
            dim: v.d(),
        });
    }
    phi.check_order(w.len())?;
    let table = derive_fields(v, w.len())?;
    Ok(GammaFunction {
        w: w.clone(),
        table: Arc::new(table),
        phi,
    })
}

impl GammaFunction {
    pub fn word(&self) -> &Word {
        &self.w
    }

    /// `Γ_w φ(x)` by applying `Γ_{i_m}` first, then `Γ_{i_{m-1}}`, and so on.
    pub fn eval_composition(&self, x: &[f64]) -> Vec<f64> {
        self.jets(x, 0).iter().map(Jet::value).collect()
    }

    pub fn into_fn(self) -> SmoothFn {
        Arc::new(self)
    }
}

impl SmoothFunction for GammaFunction {
    fn dim_in(&self) -> usize {
        self.phi.dim_in()
    }

    fn dim_out(&self) -> usize {
        self.phi.dim_out()
    }

    fn max_order(&self) -> usize {
        let m = self.w.len();
        let by_phi = self.phi.max_order().saturating_sub(m);
        if m == 0 {
            return by_phi;
        }
        by_phi.min(self.table.system().max_order().saturating_sub(m - 1))
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let m = self.w.len();
        let phi = self.phi.jets(x, m);
        let fvals = self.table.values_at(x).expect("orders checked at construction");
        gamma_from_jets(&self.w, &phi, &fvals, &self.table).expect("word checked at construction")
    }

    fn jets(&self, x: &[f64], order: usize) -> Vec<Jet> {
        let m = self.w.len();
        let mut g = self.phi.jets(x, order + m);
        let v = self.table.system();
        for (step, i) in self.w.letters().rev().enumerate() {
            let fo = order + m - step - 1;
            let f = v.field(i).jets(x, fo);
            g = lie_derivative(&g, &f);
        }
        g
    }
}

/// Output of [`ito_check`].
#[derive(Clone, Debug)]
pub struct ItoReport {
    /// `max_t |φ(X_t) - φ(X_0) - Σ_i ∫_0^t Γ_i φ(X) dW^i|`.
    pub identity_residual: f64,
    /// Graded expansion `Γ_w φ(X_t) ≍ Σ_{|v| <= N_γ - |w|} Γ_{vw} φ(X_s)⟨W_{st}, e_v⟩`
    /// per word `|w| <= N_γ`, orders `(N_γ + 1 - |w|)γ`.
    pub graded: OrderReport,
}

/// Itô formula diagnostics for a solution `x` of the RDE driven by `v`.
pub fn ito_check(phi: SmoothFn, x: &ControlledPath, v: Arc<VectorFieldSystem>) -> Result<ItoReport> {
    let w = x.reference().clone();
    let ng = w.n_gamma();
    if x.width() != v.n() {
        return Err(Error::DimensionMismatch {
            expected: v.n(),
            got: x.width(),
        });
    }
    let times = x.times();
    let m = times.len();

    let mut total = vec![vec![0.0; phi.dim_out()]; m];
    for i in 1..=v.d() {
        let gi = gamma_operator(&Word::letter(i), v.clone(), phi.clone())?;
        let y = compose(&gi, x)?;
        let ri = rough_integral(&y, i, times)?;
        for (t, r) in total.iter_mut().zip(&ri.values) {
            for (a, b) in t.iter_mut().zip(r) {
                *a += b;
            }
        }
    }
    let phis: Vec<Vec<f64>> = (0..m).map(|k| phi.eval(x.primal(k))).collect();
    let mut identity_residual: f64 = 0.0;
    for k in 0..m {
        let r: Vec<f64> = phis[k]
            .iter()
            .zip(&phis[0])
            .zip(&total[k])
            .map(|((a, b), c)| a - b - c)
            .collect();
        identity_residual = identity_residual.max(sup_norm(&r));
    }

    // Γ_u φ(X_t) for every |u| <= N_γ via the shuffle form.
    phi.check_order(ng)?;
    let table = derive_fields(v.clone(), ng)?;
    let words = words_up_to(v.d(), ng);
    let gammas: Vec<Vec<Vec<f64>>> = crate::parallel::try_par_map(&(0..m).collect::<Vec<_>>(), |_, &k| {
        let xk = x.primal(k);
        let pj = phi.jets(xk, ng);
        let fv = table.values_at(xk)?;
        words.iter().map(|u| gamma_from_jets(u, &pj, &fv, &table)).collect()
    })?;
    let mag = gammas
        .iter()
        .flat_map(|r| r.iter().flat_map(|v| v.iter()))
        .fold(0.0f64, |a, b| a.max(b.abs()));
    let lags = regression_lags(m - 1);
    let mut graded = OrderReport::default();
    for (wi, wd) in words.iter().enumerate() {
        let tail: Vec<(usize, Word)> = words
            .iter()
            .filter(|u| u.len() + wd.len() <= ng)
            .map(|u| (table.index(&u.concat(wd)), u.clone()))
            .collect();
        let fit = lag_regression(times, &lags, noise_floor(mag), |a, b| {
            let g = match w.increment(times[a], times[b]) {
                Ok(g) => g,
                Err(_) => return f64::NAN,
            };
            let mut approx = vec![0.0; phi.dim_out()];
            for (idx, u) in &tail {
                let c = g.get(u);
                for (o, val) in approx.iter_mut().zip(&gammas[a][*idx]) {
                    *o += c * val;
                }
            }
            gammas[b][wi]
                .iter()
                .zip(&approx)
                .map(|(p, q)| (p - q).abs())
                .fold(0.0, f64::max)
        });
        graded.push(OrderCheck::new(wd.to_string(), fit, (ng + 1 - wd.len()) as f64 * w.gamma()));
    }
    Ok(ItoReport {
        identity_residual,
        graded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smooth::{Constant, Monomial, Polynomial, Trig, TrigTerm};

    fn poly_fields() -> Arc<VectorFieldSystem> {
        let f1 = Polynomial::new(
            2,
            vec![
                vec![Monomial { coeff: 0.5, powers: vec![0, 2] }, Monomial { coeff: 0.2, powers: vec![0, 0] }],
                vec![Monomial { coeff: -0.3, powers: vec![1, 1] }],
            ],
        )
        .unwrap();
        let f2 = Polynomial::new(
            2,
            vec![
                vec![Monomial { coeff: 0.4, powers: vec![1, 0] }],
                vec![Monomial { coeff: 0.25, powers: vec![2, 0] }, Monomial { coeff: -0.1, powers: vec![0, 1] }],
            ],
        )
        .unwrap();
        Arc::new(VectorFieldSystem::new(vec![Arc::new(f1), Arc::new(f2)]).unwrap())
    }

    fn phi() -> SmoothFn {
        Arc::new(Polynomial::scalar(2, &[(1.0, &[3, 1]), (-0.5, &[0, 4]), (2.0, &[1, 0])]))
    }

    #[test]
    fn first_order_is_directional_derivative() {
        let v = poly_fields();
        let x = [0.7, -0.2];
        let g = gamma_operator(&Word::letter(2), v.clone(), phi()).unwrap();
        let grad = phi().jets(&x, 1)[0].gradient();
        let f = v.field(2).eval(&x);
        let expect: f64 = grad.iter().zip(&f).map(|(a, b)| a * b).sum();
        assert!((g.eval(&x)[0] - expect).abs() < 1e-14);
    }

    #[test]
    fn shuffle_form_matches_composition() {
        let v = poly_fields();
        let x = [0.4, 0.9];
        for w in words_up_to(2, 3).into_iter().skip(1) {
            let g = gamma_operator(&w, v.clone(), phi()).unwrap();
            let a = g.eval(&x)[0];
            let b = g.eval_composition(&x)[0];
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{w}: {a} vs {b}");
        }
    }

    #[test]
    fn unit_field_gives_plain_derivatives() {
        let f: SmoothFn = Arc::new(Constant { dim_in: 1, value: vec![1.0] });
        let v = Arc::new(VectorFieldSystem::new(vec![f]).unwrap());
        let sin: SmoothFn = Arc::new(Trig {
            dim_in: 1,
            components: vec![vec![TrigTerm { amp: 1.0, freq: vec![1.0], phase: 0.0 }]],
        });
        let x = 0.3f64;
        let g = gamma_operator(&Word::from([1, 1, 1]), v, sin).unwrap();
        assert!((g.eval(&[x])[0] + x.cos()).abs() < 1e-15);
    }
}
