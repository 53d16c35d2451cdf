//! Smooth maps `ℝ^n → ℝ^m` with derivative oracles.
//!
//! Every map exposes its Taylor jets at a point; derivatives `∂^α φ(x)` and
//! multilinear forms `D^kφ(x)(v_1..v_k)` are read off those jets. Greek
//! derivative words use letters `1..=n`, matching [`Word`].

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::algebra::Word;
use crate::error::{Error, Result};
use crate::jet::{MonomialBasis, Jet};

/// Shared handle to a smooth map.
pub type SmoothFn = Arc<dyn SmoothFunction>;

pub trait SmoothFunction: Send + Sync + fmt::Debug {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    /// Highest derivative order the oracle can deliver (`usize::MAX` for analytic families).
    fn max_order(&self) -> usize;

    /// Jets of the output components at `x`, of the given order.
    fn jets(&self, x: &[f64], order: usize) -> Vec<Jet>;

    fn taylor(&self, x: &[f64], order: usize) -> Result<Vec<Jet>> {
        self.check_order(order)?;
        if x.len() != self.dim_in() {
            return Err(Error::DimensionMismatch {
                expected: self.dim_in(),
                got: x.len(),
            });
        }
        Ok(self.jets(x, order))
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.jets(x, 0).iter().map(Jet::value).collect()
    }

    /// `∂^α φ(x)` for a derivative word over `1..=dim_in`.
    fn partial(&self, x: &[f64], alpha: &Word) -> Result<Vec<f64>> {
        let a = zero_based(alpha, self.dim_in())?;
        let jets = self.taylor(x, a.len())?;
        Ok(jets.iter().map(|j| j.partial(&a)).collect())
    }

    /// `φ ∘ g` as jets, given the jets of `g` (one per input coordinate).
    fn compose_jets(&self, inner: &[Jet]) -> Vec<Jet> {
        let order = inner.iter().map(Jet::order).min().unwrap_or(0);
        let at: Vec<f64> = inner.iter().map(Jet::value).collect();
        self.jets(&at, order)
            .iter()
            .map(|j| j.compose(inner))
            .collect()
    }

    fn check_order(&self, order: usize) -> Result<()> {
        if order > self.max_order() {
            Err(Error::InsufficientOrder {
                needed: order,
                declared: self.max_order(),
            })
        } else {
            Ok(())
        }
    }
}

pub(crate) fn zero_based(alpha: &Word, n: usize) -> Result<Vec<usize>> {
    alpha
        .letters()
        .map(|a| {
            if a == 0 || a > n {
                Err(Error::InvalidLetter { letter: a, dim: n })
            } else {
                Ok(a - 1)
            }
        })
        .collect()
}

/// `D^kφ(x)(v_1, ..., v_k)` for each output component.
pub fn multilinear(jets: &[Jet], vs: &[&[f64]]) -> Vec<f64> {
    jets.iter().map(|j| j.multilinear(vs)).collect()
}

/// A term `coeff · x_1^{p_1} ⋯ x_n^{p_n}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

/// Polynomial map; one list of monomials per output component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub dim_in: usize,
    pub components: Vec<Vec<Monomial>>,
}

impl Polynomial {
    pub fn new(dim_in: usize, components: Vec<Vec<Monomial>>) -> Result<Polynomial> {
        for m in components.iter().flatten() {
            if m.powers.len() != dim_in {
                return Err(Error::DimensionMismatch {
                    expected: dim_in,
                    got: m.powers.len(),
                });
            }
        }
        Ok(Polynomial { dim_in, components })
    }

    /// Scalar polynomial from `(coeff, powers)` pairs.
    pub fn scalar(dim_in: usize, terms: &[(f64, &[u32])]) -> Polynomial {
        let comp = terms
            .iter()
            .map(|(c, p)| Monomial {
                coeff: *c,
                powers: p.to_vec(),
            })
            .collect();
        Polynomial::new(dim_in, vec![comp]).expect("monomial arity")
    }

    pub fn degree(&self) -> u32 {
        self.components
            .iter()
            .flatten()
            .map(|m| m.powers.iter().sum())
            .max()
            .unwrap_or(0)
    }
}

impl SmoothFunction for Polynomial {
    fn dim_in(&self) -> usize {
        self.dim_in
    }
    fn dim_out(&self) -> usize {
        self.components.len()
    }
    fn max_order(&self) -> usize {
        usize::MAX
    }
    fn jets(&self, x: &[f64], order: usize) -> Vec<Jet> {
        let vars = Jet::variables(x, order);
        let mut powers: Vec<Vec<Jet>> = vars
            .iter()
            .map(|v| vec![Jet::constant(x.len(), order, 1.0), v.clone()])
            .collect();
        self.components
            .iter()
            .map(|comp| {
                let mut acc = Jet::zero(x.len(), order);
                for m in comp {
                    let mut term = Jet::constant(x.len(), order, m.coeff);
                    for (i, &p) in m.powers.iter().enumerate() {
                        if p == 0 {
                            continue;
                        }
                        while powers[i].len() <= p as usize {
                            let next = powers[i].last().unwrap().mul(&vars[i]);
                            powers[i].push(next);
                        }
                        term = term.mul(&powers[i][p as usize]);
                    }
                    acc.axpy(1.0, &term);
                }
                acc
            })
            .collect()
    }
}

/// `x ↦ A x + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub matrix: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
}

impl Affine {
    pub fn new(matrix: Vec<Vec<f64>>, offset: Vec<f64>) -> Result<Affine> {
        let n = matrix.first().map(Vec::len).unwrap_or(0);
        if matrix.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidParameter("ragged affine matrix".into()));
        }
        if offset.len() != matrix.len() {
            return Err(Error::DimensionMismatch {
                expected: matrix.len(),
                got: offset.len(),
            });
        }
        Ok(Affine { matrix, offset })
    }

    pub fn linear(matrix: Vec<Vec<f64>>) -> Affine {
        let m = matrix.len();
        Affine::new(matrix, vec![0.0; m]).expect("linear map")
    }

    pub fn identity(n: usize) -> Affine {
        Affine::linear(
            (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
        )
    }
}

impl SmoothFunction for Affine {
    fn dim_in(&self) -> usize {
        self.matrix.first().map(Vec::len).unwrap_or(0)
    }
    fn dim_out(&self) -> usize {
        self.matrix.len()
    }
    fn max_order(&self) -> usize {
        usize::MAX
    }
    fn jets(&self, x: &[f64], order: usize) -> Vec<Jet> {
        let n = x.len();
        self.matrix
            .iter()
            .zip(&self.offset)
            .map(|(row, b)| {
                let mut j = Jet::zero(n, order);
                let c = j.coeffs_mut();
                c[0] = b + row.iter().zip(x).map(|(a, xi)| a * xi).sum::<f64>();
                if order >= 1 {
                    c[1..=n].copy_from_slice(row);
                }
                j
            })
            .collect()
    }
}

/// Constant map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constant {
    pub dim_in: usize,
    pub value: Vec<f64>,
}

impl SmoothFunction for Constant {
    fn dim_in(&self) -> usize {
        self.dim_in
    }
    fn dim_out(&self) -> usize {
        self.value.len()
    }
    fn max_order(&self) -> usize {
        usize::MAX
    }
    fn jets(&self, _x: &[f64], order: usize) -> Vec<Jet> {
        self.value
            .iter()
            .map(|&v| Jet::constant(self.dim_in, order, v))
            .collect()
    }
}

/// `amp · sin(freq · x + phase)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub amp: f64,
    pub freq: Vec<f64>,
    pub phase: f64,
}

/// Sums of sine waves, one list per output component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trig {
    pub dim_in: usize,
    pub components: Vec<Vec<TrigTerm>>,
}

impl SmoothFunction for Trig {
    fn dim_in(&self) -> usize {
        self.dim_in
    }
    fn dim_out(&self) -> usize {
        self.components.len()
    }
    fn max_order(&self) -> usize {
        usize::MAX
    }
    fn jets(&self, x: &[f64], order: usize) -> Vec<Jet> {
        let n = x.len();
        self.components
            .iter()
            .map(|comp| {
                let mut acc = Jet::zero(n, order);
                for t in comp {
                    let mut lin = Jet::zero(n, order);
                    let c = lin.coeffs_mut();
                    c[0] = t.phase + t.freq.iter().zip(x).map(|(k, xi)| k * xi).sum::<f64>();
                    if order >= 1 {
                        c[1..=n].copy_from_slice(&t.freq);
                    }
                    let th = lin.value();
                    let derivs: Vec<f64> = (0..=order)
                        .map(|m| match m % 4 {
                            0 => th.sin(),
                            1 => th.cos(),
                            2 => -th.sin(),
                            _ => -th.cos(),
                        })
                        .collect();
                    acc.axpy(t.amp, &lin.compose_univariate(&derivs));
                }
                acc
            })
            .collect()
    }
}

/// Componentwise bounded cutoff `x_i ↦ s · tanh(x_i / s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TanhCutoff {
    pub dim: usize,
    pub scale: f64,
}

/// Derivatives `tanh^{(m)}(z)` for `m = 0..=order`, via the polynomial
/// recursion `P_{m+1}(t) = P_m'(t) (1 - t^2)` in `t = tanh z`.
pub fn tanh_derivatives(z: f64, order: usize) -> Vec<f64> {
    let t = z.tanh();
    let mut p: Vec<f64> = vec![0.0, 1.0];
    let mut out = Vec::with_capacity(order + 1);
    for _ in 0..=order {
        out.push(p.iter().rev().fold(0.0, |acc, c| acc * t + c));
        let dp: Vec<f64> = (1..p.len()).map(|k| k as f64 * p[k]).collect();
        let mut next = vec![0.0; dp.len() + 2];
        for (k, c) in dp.iter().enumerate() {
            next[k] += c;
            next[k + 2] -= c;
        }
        p = next;
    }
    out
}

impl SmoothFunction for TanhCutoff {
    fn dim_in(&self) -> usize {
        self.dim
    }
    fn dim_out(&self) -> usize {
        self.dim
    }
    fn max_order(&self) -> usize {
        usize::MAX
    }
    fn jets(&self, x: &[f64], order: usize) -> Vec<Jet> {
        let s = self.scale;
        Jet::variables(x, order)
            .into_iter()
            .map(|v| {
                let z = v.scale(1.0 / s);
                let d = tanh_derivatives(z.value(), order);
                z.compose_univariate(&d).scale(s)
            })
            .collect()
    }
}

/// `outer ∘ inner`.
#[derive(Clone, Debug)]
pub struct Compose {
    pub outer: SmoothFn,
    pub inner: SmoothFn,
}

impl Compose {
    pub fn new(outer: SmoothFn, inner: SmoothFn) -> Result<Compose> {
        if outer.dim_in() != inner.dim_out() {
            return Err(Error::DimensionMismatch {
                expected: outer.dim_in(),
                got: inner.dim_out(),
            });
        }
        Ok(Compose { outer, inner })
    }
}

impl SmoothFunction for Compose {
    fn dim_in(&self) -> usize {
        self.inner.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.outer.dim_out()
    }
    fn max_order(&self) -> usize {
        self.outer.max_order().min(self.inner.max_order())
    }
    fn jets(&self, x: &[f64], order: usize) -> Vec<Jet> {
        let inner = self.inner.jets(x, order);
        self.outer.compose_jets(&inner)
    }
}

/// Componentwise sum of maps with equal shapes.
#[derive(Clone, Debug)]
pub struct Sum {
    pub terms: Vec<SmoothFn>,
}

impl Sum {
    pub fn new(terms: Vec<SmoothFn>) -> Result<Sum> {
        let first = terms
            .first()
            .ok_or_else(|| Error::InvalidParameter("empty sum".into()))?;
        for t in &terms {
            if t.dim_in() != first.dim_in() || t.dim_out() != first.dim_out() {
                return Err(Error::DimensionMismatch {
                    expected: first.dim_out(),
                    got: t.dim_out(),
                });
            }
        }
        Ok(Sum { terms })
    }
}

impl SmoothFunction for Sum {
    fn dim_in(&self) -> usize {
        self.terms[0].dim_in()
    }
    fn dim_out(&self) -> usize {
        self.terms[0].dim_out()
    }
    fn max_order(&self) -> usize {
        self.terms.iter().map(|t| t.max_order()).min().unwrap_or(0)
    }
    fn jets(&self, x: &[f64], order: usize) -> Vec<Jet> {
        let mut acc = self.terms[0].jets(x, order);
        for t in &self.terms[1..] {
            for (a, b) in acc.iter_mut().zip(t.jets(x, order)) {
                a.axpy(1.0, &b);
            }
        }
        acc
    }
}

type EvalFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type PartialFn = Arc<dyn Fn(&[f64], &[usize]) -> Vec<f64> + Send + Sync>;

/// User-supplied map with an explicit derivative oracle.
///
/// The oracle receives zero-based derivative indices and must be symmetric
/// in them.
#[derive(Clone)]
pub struct OracleFunction {
    pub dim_in: usize,
    pub dim_out: usize,
    pub max_order: usize,
    partial: PartialFn,
}

impl fmt::Debug for OracleFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OracleFunction")
            .field("dim_in", &self.dim_in)
            .field("dim_out", &self.dim_out)
            .field("max_order", &self.max_order)
            .finish()
    }
}

impl OracleFunction {
    pub fn new<F>(dim_in: usize, dim_out: usize, max_order: usize, partial: F) -> OracleFunction
    where
        F: Fn(&[f64], &[usize]) -> Vec<f64> + Send + Sync + 'static,
    {
        OracleFunction {
            dim_in,
            dim_out,
            max_order,
            partial: Arc::new(partial),
        }
    }
}

fn jets_from_partials(
    n_in: usize,
    n_out: usize,
    order: usize,
    mut partial: impl FnMut(&[usize]) -> Vec<f64>,
) -> Vec<Jet> {
    let basis = MonomialBasis::get(n_in, order);
    let mut coeffs = vec![vec![0.0; basis.len()]; n_out];
    for i in 0..basis.len() {
        let alpha: Vec<usize> = basis
            .exponents(i)
            .iter()
            .enumerate()
            .flat_map(|(v, &e)| std::iter::repeat_n(v, e as usize))
            .collect();
        let beta_fact: f64 = basis
            .exponents(i)
            .iter()
            .map(|&e| crate::jet::factorial(e as usize))
            .product();
        for (c, d) in coeffs.iter_mut().zip(partial(&alpha)) {
            c[i] = d / beta_fact;
        }
    }
    coeffs
        .into_iter()
        .map(|c| Jet::from_coeffs(n_in, order, c))
        .collect()
}

impl SmoothFunction for OracleFunction {
    fn dim_in(&self) -> usize {
        self.dim_in
    }
    fn dim_out(&self) -> usize {
        self.dim_out
    }
    fn max_order(&self) -> usize {
        self.max_order
    }
    fn jets(&self, x: &[f64], order: usize) -> Vec<Jet> {
        jets_from_partials(self.dim_in, self.dim_out, order, |a| (self.partial)(x, a))
    }
}

/// Derivatives by nested central differences of an evaluation closure,
/// step `h = ε^{1/3} · max(|x_i|, 1)` per coordinate.
#[derive(Clone)]
pub struct FiniteDifference {
    pub dim_in: usize,
    pub dim_out: usize,
    pub max_order: usize,
    eval: EvalFn,
}

impl fmt::Debug for FiniteDifference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FiniteDifference")
            .field("dim_in", &self.dim_in)
            .field("dim_out", &self.dim_out)
            .field("max_order", &self.max_order)
            .finish()
    }
}

impl FiniteDifference {
    pub fn new<F>(dim_in: usize, dim_out: usize, max_order: usize, eval: F) -> FiniteDifference
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        FiniteDifference {
            dim_in,
            dim_out,
            max_order,
            eval: Arc::new(eval),
        }
    }

    fn nested(&self, x: &mut Vec<f64>, alpha: &[usize]) -> Vec<f64> {
        match alpha.split_first() {
            None => (self.eval)(x),
            Some((&a, rest)) => {
                let h = f64::EPSILON.cbrt() * x[a].abs().max(1.0);
                let x0 = x[a];
                x[a] = x0 + h;
                let up = self.nested(x, rest);
                x[a] = x0 - h;
                let down = self.nested(x, rest);
                x[a] = x0;
                up.iter()
                    .zip(&down)
                    .map(|(u, d)| (u - d) / (2.0 * h))
                    .collect()
            }
        }
    }
}

impl SmoothFunction for FiniteDifference {
    fn dim_in(&self) -> usize {
        self.dim_in
    }
    fn dim_out(&self) -> usize {
        self.dim_out
    }
    fn max_order(&self) -> usize {
        self.max_order
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        (self.eval)(x)
    }
    fn jets(&self, x: &[f64], order: usize) -> Vec<Jet> {
        let mut xs = x.to_vec();
        jets_from_partials(self.dim_in, self.dim_out, order, |a| self.nested(&mut xs, a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_partials() {
        // p(x, y) = 2 x^2 y - y^3
        let p = Polynomial::scalar(2, &[(2.0, &[2, 1]), (-1.0, &[0, 3])]);
        let x = [1.5, -0.5];
        assert!((p.eval(&x)[0] - (2.0 * 2.25 * -0.5 + 0.125)).abs() < 1e-15);
        assert!((p.partial(&x, &Word::from([1, 2])).unwrap()[0] - 6.0).abs() < 1e-14);
        assert!((p.partial(&x, &Word::from([2, 2, 2])).unwrap()[0] + 6.0).abs() < 1e-14);
        assert!(p.partial(&x, &Word::from([3])).is_err());
    }

    #[test]
    fn trig_partials() {
        let t = Trig {
            dim_in: 2,
            components: vec![vec![TrigTerm {
                amp: 0.5,
                freq: vec![2.0, -1.0],
                phase: 0.3,
            }]],
        };
        let x = [0.2, 0.7];
        let th: f64 = 0.3 + 0.4 - 0.7;
        let d = t.partial(&x, &Word::from([1, 1, 2])).unwrap()[0];
        // ∂x∂x∂y of 0.5 sin(2x - y + 0.3) = 0.5 * 4 * (-1) * (-cos)
        assert!((d - 2.0 * th.cos()).abs() < 1e-14);
    }

    #[test]
    fn tanh_derivative_recursion() {
        let z: f64 = 0.4;
        let d = tanh_derivatives(z, 3);
        let s = 1.0 / z.cosh().powi(2);
        assert!((d[0] - z.tanh()).abs() < 1e-15);
        assert!((d[1] - s).abs() < 1e-15);
        assert!((d[2] + 2.0 * z.tanh() * s).abs() < 1e-14);
        assert!((d[3] - (4.0 * z.tanh().powi(2) * s - 2.0 * s * s)).abs() < 1e-14);
    }

    #[test]
    fn oracle_and_finite_difference_agree() {
        let oracle = OracleFunction::new(1, 1, 3, |x, a| match a.len() {
            0 => vec![x[0].exp()],
            _ => vec![x[0].exp()],
        });
        let fd = FiniteDifference::new(1, 1, 1, |x| vec![x[0].exp()]);
        let x = [0.3];
        let exact = oracle.partial(&x, &Word::from([1, 1])).unwrap()[0];
        assert!((exact - 0.3f64.exp()).abs() < 1e-15);
        let approx = fd.partial(&x, &Word::from([1])).unwrap()[0];
        assert!((approx - 0.3f64.exp()).abs() < 1e-9);
        assert!(fd.partial(&x, &Word::from([1, 1])).is_err());
    }

    #[test]
    fn composition_chain_rule() {
        let outer: SmoothFn = Arc::new(Polynomial::scalar(1, &[(1.0, &[2])]));
        let inner: SmoothFn = Arc::new(Trig {
            dim_in: 1,
            components: vec![vec![TrigTerm {
                amp: 1.0,
                freq: vec![1.0],
                phase: 0.0,
            }]],
        });
        let c = Compose::new(outer, inner).unwrap();
        let x: f64 = 0.9;
        // d²/dx² sin² x = 2 cos 2x
        let d2 = c.partial(&[x], &Word::from([1, 1])).unwrap()[0];
        assert!((d2 - 2.0 * (2.0 * x).cos()).abs() < 1e-14);
    }
}
