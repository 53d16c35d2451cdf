//! Truncated multivariate Taylor polynomials ("jets").
//!
//! A [`Jet`] in `n` variables of order `K` stores the Taylor coefficients
//! `∂^β f(x0) / β!` for all multi-indices `|β| <= K` of a scalar function
//! around a fixed base point. Arithmetic on jets is exact Leibniz /
//! Faà di Bruno calculus truncated at order `K`, which is how derivative
//! oracles of composite objects (derived vector fields, `Γ_w φ`, flow maps)
//! are assembled without finite differences.
//!
//! Monomials are enumerated degree by degree in a fixed order, so the basis
//! of order `K` is a prefix of the basis of order `K + 1` and truncation is
//! a slice.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

const NONE: u32 = u32::MAX;

/// Monomial bookkeeping for a given number of variables and order.
#[derive(Debug)]
pub struct MonomialBasis {
    nvars: usize,
    order: usize,
    exps: Vec<Vec<u8>>,
    degree: Vec<usize>,
    deg_start: Vec<usize>,
    index: HashMap<Vec<u8>, u32>,
    /// `mul_var[i * nvars + j]` = index of `exps[i] + e_j`, or `NONE`.
    mul_var: Vec<u32>,
    /// `β!` for each monomial.
    factorial: Vec<f64>,
    /// For each `i`, the pairs `(j, k)` with `exps[i] + exps[j] = exps[k]`.
    products: Vec<Vec<(u32, u32)>>,
}

impl MonomialBasis {
    /// Shared basis for `(nvars, order)`.
    pub fn get(nvars: usize, order: usize) -> Arc<MonomialBasis> {
        static CACHE: OnceLock<RwLock<HashMap<(usize, usize), Arc<MonomialBasis>>>> =
            OnceLock::new();
        let cache = CACHE.get_or_init(|| RwLock::new(HashMap::new()));
        if let Some(b) = cache.read().expect("basis cache poisoned").get(&(nvars, order)) {
            return b.clone();
        }
        let basis = Arc::new(MonomialBasis::build(nvars, order));
        cache
            .write()
            .expect("basis cache poisoned")
            .entry((nvars, order))
            .or_insert(basis)
            .clone()
    }

    fn build(nvars: usize, order: usize) -> MonomialBasis {
        let mut exps: Vec<Vec<u8>> = Vec::new();
        let mut degree = Vec::new();
        let mut deg_start = Vec::new();
        for deg in 0..=order {
            deg_start.push(exps.len());
            let mut cur = vec![0u8; nvars];
            enumerate_degree(nvars, deg, 0, &mut cur, &mut exps);
            degree.resize(exps.len(), deg);
        }
        deg_start.push(exps.len());
        let index: HashMap<Vec<u8>, u32> = exps
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i as u32))
            .collect();
        let mut mul_var = vec![NONE; exps.len() * nvars];
        for (i, e) in exps.iter().enumerate() {
            if degree[i] == order {
                continue;
            }
            for j in 0..nvars {
                let mut f = e.clone();
                f[j] += 1;
                mul_var[i * nvars + j] = index[&f];
            }
        }
        let factorial = exps
            .iter()
            .map(|e| e.iter().map(|&b| factorial(b as usize)).product())
            .collect();
        let mut products = vec![Vec::new(); exps.len()];
        for (i, ei) in exps.iter().enumerate() {
            for (j, ej) in exps.iter().enumerate() {
                if degree[i] + degree[j] > order {
                    continue;
                }
                let sum: Vec<u8> = ei.iter().zip(ej).map(|(a, b)| a + b).collect();
                products[i].push((j as u32, index[&sum]));
            }
        }
        MonomialBasis {
            nvars,
            order,
            exps,
            degree,
            deg_start,
            index,
            mul_var,
            factorial,
            products,
        }
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn exponents(&self, i: usize) -> &[u8] {
        &self.exps[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.degree[i]
    }

    /// Number of monomials of degree `<= k`.
    pub fn len_up_to(&self, k: usize) -> usize {
        self.deg_start[k.min(self.order) + 1]
    }

    pub fn index_of(&self, exps: &[u8]) -> Option<usize> {
        self.index.get(exps).map(|&i| i as usize)
    }

    /// Index of the monomial of a derivative word `α` over `0..nvars`.
    pub fn index_of_word(&self, alpha: &[usize]) -> Option<usize> {
        if alpha.len() > self.order {
            return None;
        }
        let mut idx = 0usize;
        for &a in alpha {
            idx = self.mul_var[idx * self.nvars + a] as usize;
        }
        Some(idx)
    }
}

fn enumerate_degree(nvars: usize, deg: usize, pos: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if nvars == 0 {
        if deg == 0 {
            out.push(Vec::new());
        }
        return;
    }
    if pos == nvars - 1 {
        cur[pos] = deg as u8;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    for e in (0..=deg).rev() {
        cur[pos] = e as u8;
        enumerate_degree(nvars, deg - e, pos + 1, cur, out);
    }
    cur[pos] = 0;
}

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).map(|j| j as f64).product()
}

/// Truncated Taylor expansion of a scalar function around a base point.
#[derive(Clone, Debug)]
pub struct Jet {
    basis: Arc<MonomialBasis>,
    coeffs: Vec<f64>,
}

impl PartialEq for Jet {
    fn eq(&self, other: &Self) -> bool {
        self.nvars() == other.nvars() && self.order() == other.order() && self.coeffs == other.coeffs
    }
}

impl Jet {
    pub fn zero(nvars: usize, order: usize) -> Jet {
        let basis = MonomialBasis::get(nvars, order);
        let coeffs = vec![0.0; basis.len()];
        Jet { basis, coeffs }
    }

    pub fn constant(nvars: usize, order: usize, c: f64) -> Jet {
        let mut j = Jet::zero(nvars, order);
        j.coeffs[0] = c;
        j
    }

    /// The coordinate function `x_i` expanded around a point where it equals `value`.
    pub fn variable(nvars: usize, order: usize, i: usize, value: f64) -> Jet {
        let mut j = Jet::constant(nvars, order, value);
        if order >= 1 {
            j.coeffs[1 + i] = 1.0;
        }
        j
    }

    /// Jets of all coordinate functions at `x`.
    pub fn variables(x: &[f64], order: usize) -> Vec<Jet> {
        (0..x.len())
            .map(|i| Jet::variable(x.len(), order, i, x[i]))
            .collect()
    }

    /// Builds a jet from raw Taylor coefficients in basis order.
    pub fn from_coeffs(nvars: usize, order: usize, coeffs: Vec<f64>) -> Jet {
        let basis = MonomialBasis::get(nvars, order);
        assert_eq!(coeffs.len(), basis.len(), "coefficient count mismatch");
        Jet { basis, coeffs }
    }

    pub fn nvars(&self) -> usize {
        self.basis.nvars
    }

    pub fn order(&self) -> usize {
        self.basis.order
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn set_value(&mut self, v: f64) {
        self.coeffs[0] = v;
    }

    /// `∂^α f(x0)` for a derivative word `α` over `0..nvars`.
    pub fn partial(&self, alpha: &[usize]) -> f64 {
        match self.basis.index_of_word(alpha) {
            Some(i) => self.basis.factorial[i] * self.coeffs[i],
            None => panic!(
                "derivative of order {} requested from jet of order {}",
                alpha.len(),
                self.order()
            ),
        }
    }

    /// Derivative `∂^β f(x0)` for the monomial at basis index `i`.
    pub fn partial_at(&self, i: usize) -> f64 {
        self.basis.factorial[i] * self.coeffs[i]
    }

    pub fn truncate(&self, order: usize) -> Jet {
        if order >= self.order() {
            return self.clone();
        }
        let basis = MonomialBasis::get(self.nvars(), order);
        let coeffs = self.coeffs[..basis.len()].to_vec();
        Jet { basis, coeffs }
    }

    pub fn scale(&self, c: f64) -> Jet {
        Jet {
            basis: self.basis.clone(),
            coeffs: self.coeffs.iter().map(|v| v * c).collect(),
        }
    }

    fn common(&self, other: &Jet) -> (Jet, usize) {
        assert_eq!(self.nvars(), other.nvars(), "jet variable count mismatch");
        let order = self.order().min(other.order());
        (self.truncate(order), MonomialBasis::get(self.nvars(), order).len())
    }

    pub fn add(&self, other: &Jet) -> Jet {
        let (mut out, len) = self.common(other);
        for i in 0..len {
            out.coeffs[i] += other.coeffs[i];
        }
        out
    }

    pub fn sub(&self, other: &Jet) -> Jet {
        self.add(&other.scale(-1.0))
    }

    /// `self += c * other`; the order of `self` is kept, so `other` must be
    /// of at least the same order.
    pub fn axpy(&mut self, c: f64, other: &Jet) {
        assert!(other.order() >= self.order(), "axpy into a higher-order jet");
        assert_eq!(self.nvars(), other.nvars(), "jet variable count mismatch");
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += c * b;
        }
    }

    /// Truncated product; the result has the smaller of the two orders.
    pub fn mul(&self, other: &Jet) -> Jet {
        assert_eq!(self.nvars(), other.nvars(), "jet variable count mismatch");
        let order = self.order().min(other.order());
        let basis = MonomialBasis::get(self.nvars(), order);
        let mut coeffs = vec![0.0; basis.len()];
        let len = basis.len();
        for i in 0..len {
            let a = self.coeffs[i];
            if a == 0.0 {
                continue;
            }
            for &(j, k) in &basis.products[i] {
                coeffs[k as usize] += a * other.coeffs[j as usize];
            }
        }
        let _ = len;
        Jet { basis, coeffs }
    }

    pub fn powi(&self, p: usize) -> Jet {
        let mut out = Jet::constant(self.nvars(), self.order(), 1.0);
        for _ in 0..p {
            out = out.mul(self);
        }
        out
    }

    /// `∂_j f` as a jet of order one less.
    pub fn derivative(&self, j: usize) -> Jet {
        assert!(self.order() >= 1, "cannot differentiate an order-0 jet");
        let n = self.nvars();
        let basis = MonomialBasis::get(n, self.order() - 1);
        let coeffs = (0..basis.len())
            .map(|i| {
                let k = self.basis.mul_var[i * n + j] as usize;
                (basis.exps[i][j] as f64 + 1.0) * self.coeffs[k]
            })
            .collect();
        Jet { basis, coeffs }
    }

    /// Multilinear form `D^k f(x0)(v_1, ..., v_k)`.
    pub fn multilinear(&self, vs: &[&[f64]]) -> f64 {
        assert!(vs.len() <= self.order(), "multilinear form beyond jet order");
        let mut acc = 0.0;
        self.multilinear_rec(vs, 0, 1.0, &mut acc);
        acc
    }

    fn multilinear_rec(&self, vs: &[&[f64]], idx: usize, prod: f64, acc: &mut f64) {
        if vs.is_empty() {
            *acc += prod * self.basis.factorial[idx] * self.coeffs[idx];
            return;
        }
        let n = self.nvars();
        for (a, &va) in vs[0].iter().enumerate() {
            if va == 0.0 {
                continue;
            }
            let next = self.basis.mul_var[idx * n + a] as usize;
            self.multilinear_rec(&vs[1..], next, prod * va, acc);
        }
    }

    /// Gradient `∇f(x0)`.
    pub fn gradient(&self) -> Vec<f64> {
        (0..self.nvars()).map(|i| self.coeffs[1 + i]).collect()
    }

    /// Composition `f ∘ g`, where `self` is the jet of `f` at `g(x0)` and
    /// `inner` holds the jets of the components of `g` at `x0`.
    pub fn compose(&self, inner: &[Jet]) -> Jet {
        assert_eq!(inner.len(), self.nvars(), "composition arity mismatch");
        assert!(!inner.is_empty() || self.nvars() == 0);
        let nv = inner.first().map(Jet::nvars).unwrap_or(0);
        let order = inner
            .iter()
            .map(Jet::order)
            .min()
            .unwrap_or(0)
            .min(self.order());
        let deltas: Vec<Jet> = inner
            .iter()
            .map(|g| {
                let mut d = g.truncate(order);
                d.coeffs[0] = 0.0;
                d
            })
            .collect();
        let mut out = Jet::constant(nv, order, self.coeffs[0]);
        // powers[i] = prod_j delta_j^{β_j} for monomial i of f
        let m = self.nvars();
        let len = self.basis.len_up_to(order);
        let mut powers: Vec<Option<Jet>> = vec![None; len];
        powers[0] = Some(Jet::constant(nv, order, 1.0));
        for i in 1..len {
            let e = &self.basis.exps[i];
            let j = e.iter().position(|&b| b > 0).expect("non-constant monomial");
            let mut prev = e.clone();
            prev[j] -= 1;
            let pi = self.basis.index[&prev] as usize;
            let p = powers[pi].as_ref().expect("lower degree computed first").mul(&deltas[j]);
            if self.coeffs[i] != 0.0 {
                out.axpy(self.coeffs[i], &p);
            }
            powers[i] = Some(p);
        }
        let _ = m;
        out
    }

    /// `h ∘ f` for a univariate `h`, given `h^{(m)}(f(x0))` for `m = 0..=K`.
    pub fn compose_univariate(&self, derivs: &[f64]) -> Jet {
        let order = self.order();
        assert!(derivs.len() > order, "need {} univariate derivatives", order + 1);
        let mut delta = self.clone();
        delta.coeffs[0] = 0.0;
        let mut out = Jet::constant(self.nvars(), order, derivs[0]);
        let mut power = Jet::constant(self.nvars(), order, 1.0);
        for (m, d) in derivs.iter().enumerate().take(order + 1).skip(1) {
            power = power.mul(&delta);
            out.axpy(d / factorial(m), &power);
        }
        out
    }

    /// Re-expresses a jet in `nvars` variables, mapping variable `i` of
    /// `self` to variable `offset + i`.
    pub fn embed(&self, nvars: usize, offset: usize) -> Jet {
        assert!(offset + self.nvars() <= nvars);
        let mut out = Jet::zero(nvars, self.order());
        let mut e = vec![0u8; nvars];
        for i in 0..self.coeffs.len() {
            if self.coeffs[i] == 0.0 {
                continue;
            }
            e.iter_mut().for_each(|b| *b = 0);
            e[offset..offset + self.nvars()].copy_from_slice(&self.basis.exps[i]);
            let k = out.basis.index[&e] as usize;
            out.coeffs[k] = self.coeffs[i];
        }
        out
    }
}

/// `sum_j a[j] * b[j]` over jets.
pub fn dot(a: &[Jet], b: &[Jet]) -> Jet {
    assert_eq!(a.len(), b.len());
    assert!(!a.is_empty());
    let mut acc = a[0].mul(&b[0]);
    for (x, y) in a.iter().zip(b).skip(1) {
        let p = x.mul(y);
        acc = acc.add(&p);
    }
    acc
}

/// Directional derivative `D g(x) · v(x)` of a vector of jets `g` along a
/// vector field `v`, as jets of order one less.
pub fn lie_derivative(g: &[Jet], v: &[Jet]) -> Vec<Jet> {
    g.iter()
        .map(|gc| {
            let grads: Vec<Jet> = (0..gc.nvars()).map(|j| gc.derivative(j)).collect();
            dot(&grads, v)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_prefix_property() {
        let b2 = MonomialBasis::get(3, 2);
        let b4 = MonomialBasis::get(3, 4);
        for i in 0..b2.len() {
            assert_eq!(b2.exponents(i), b4.exponents(i));
        }
        assert_eq!(b4.len(), 35);
        assert_eq!(b2.index_of_word(&[2, 0]), b2.index_of_word(&[0, 2]));
    }

    #[test]
    fn product_matches_polynomial_expansion() {
        // f = x^2 y + 3 around (1, 2); check ∂x∂y f = 2x = 2, ∂x∂x f = 2y = 4
        let v = Jet::variables(&[1.0, 2.0], 3);
        let f = v[0].mul(&v[0]).mul(&v[1]).add(&Jet::constant(2, 3, 3.0));
        assert!((f.value() - 5.0).abs() < 1e-15);
        assert!((f.partial(&[0, 1]) - 2.0).abs() < 1e-15);
        assert!((f.partial(&[1, 0]) - 2.0).abs() < 1e-15);
        assert!((f.partial(&[0, 0]) - 4.0).abs() < 1e-15);
        assert!((f.partial(&[0, 0, 1]) - 2.0).abs() < 1e-15);
        assert_eq!(f.partial(&[1, 1]), 0.0);
    }

    #[test]
    fn derivative_and_multilinear() {
        let v = Jet::variables(&[0.5, -1.0], 4);
        // f = x^3 y^2
        let f = v[0].powi(3).mul(&v[1].powi(2));
        let fx = f.derivative(0);
        // ∂x f = 3 x^2 y^2
        assert!((fx.value() - 3.0 * 0.25).abs() < 1e-15);
        // D^2 f (a, b) with a=(1,0), b=(0,1) is ∂x∂y f = 6 x^2 y = -1.5
        let d = f.multilinear(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!((d + 1.5).abs() < 1e-14);
        // D^2 f (a, a) with a = (1, 1)
        let expected = f.partial(&[0, 0]) + 2.0 * f.partial(&[0, 1]) + f.partial(&[1, 1]);
        assert!((f.multilinear(&[&[1.0, 1.0], &[1.0, 1.0]]) - expected).abs() < 1e-14);
    }

    #[test]
    fn compose_univariate_sin() {
        // sin(x y) at (0.3, 2): ∂x = y cos(xy)
        let v = Jet::variables(&[0.3, 2.0], 3);
        let p = v[0].mul(&v[1]);
        let t = p.value();
        let s = p.compose_univariate(&[t.sin(), t.cos(), -t.sin(), -t.cos()]);
        assert!((s.partial(&[0]) - 2.0 * t.cos()).abs() < 1e-14);
        // ∂x∂x = -y^2 sin(xy)
        assert!((s.partial(&[0, 0]) + 4.0 * t.sin()).abs() < 1e-14);
    }

    #[test]
    fn compose_matches_direct() {
        // f(y1, y2) = y1 * y2^2, g(x) = (x^2, x + 1); f∘g = x^2 (x+1)^2
        let x = Jet::variables(&[0.7], 4);
        let g = vec![x[0].mul(&x[0]), x[0].add(&Jet::constant(1, 4, 1.0))];
        let y = Jet::variables(&[g[0].value(), g[1].value()], 4);
        let f = y[0].mul(&y[1]).mul(&y[1]);
        let h = f.compose(&g);
        let direct = g[0].mul(&g[1]).mul(&g[1]);
        for (a, b) in h.coeffs().iter().zip(direct.coeffs()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn embed_moves_variables() {
        let v = Jet::variables(&[1.0, 2.0], 2);
        let f = v[0].mul(&v[1]);
        let e = f.embed(4, 1);
        assert_eq!(e.partial(&[1, 2]), 1.0);
        assert_eq!(e.partial(&[0, 1]), 0.0);
        assert_eq!(e.value(), 2.0);
    }
}
