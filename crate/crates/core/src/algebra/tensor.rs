use std::collections::BTreeMap;
use std::ops::{Add, Deref, Mul, Neg, Sub};

use super::shuffle::shuffle_words;
use super::word::{words_of_length, Word};
use crate::error::{Error, Result};

/// Element of the step-`level` truncated tensor algebra over `R^dim`.
///
/// Stored sparsely as a word → coefficient map; absent words are zero. The
/// same representation is used for dual objects (characters), with the
/// pairing given by [`TruncatedTensor::pairing`].
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedTensor {
    dim: usize,
    level: usize,
    coeffs: BTreeMap<Word, f64>,
}

impl TruncatedTensor {
    pub fn zero(dim: usize, level: usize) -> Self {
        assert!(dim >= 1, "alphabet size must be at least 1");
        TruncatedTensor {
            dim,
            level,
            coeffs: BTreeMap::new(),
        }
    }

    /// The unit `1` (equivalently the counit `1*` on the dual side).
    pub fn unit(dim: usize, level: usize) -> Self {
        Self::basis(dim, level, Word::empty())
    }

    /// The basis element `e_w`.
    pub fn basis(dim: usize, level: usize, w: Word) -> Self {
        let mut t = Self::zero(dim, level);
        t.set(w, 1.0);
        t
    }

    /// Builds a tensor from `(word, value)` terms, validating letters and lengths.
    pub fn from_terms<I>(dim: usize, level: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Word, f64)>,
    {
        let mut t = Self::zero(dim, level);
        for (w, v) in terms {
            if w.len() > level {
                return Err(Error::WordTooLong { len: w.len(), level });
            }
            if w.max_letter() > dim {
                return Err(Error::InvalidLetter {
                    letter: w.max_letter(),
                    dim,
                });
            }
            *t.coeffs.entry(w).or_insert(0.0) += v;
        }
        Ok(t)
    }

    /// The level-one element `sum_i x[i] e_i`.
    pub fn from_level_one(x: &[f64], level: usize) -> Self {
        let mut t = Self::zero(x.len(), level);
        if level >= 1 {
            for (i, &v) in x.iter().enumerate() {
                t.set(Word::letter(i + 1), v);
            }
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// `<self, e_w>`.
    pub fn get(&self, w: &Word) -> f64 {
        self.coeffs.get(w).copied().unwrap_or(0.0)
    }

    pub fn constant(&self) -> f64 {
        self.get(&Word::empty())
    }

    /// Sets a coefficient; words longer than the level are silently dropped.
    pub fn set(&mut self, w: Word, v: f64) {
        if w.len() <= self.level {
            self.coeffs.insert(w, v);
        }
    }

    pub fn add_to(&mut self, w: Word, v: f64) {
        if w.len() <= self.level {
            *self.coeffs.entry(w).or_insert(0.0) += v;
        }
    }

    /// Stored terms in canonical order (may include explicit zeros).
    pub fn terms(&self) -> impl Iterator<Item = (&Word, f64)> + '_ {
        self.coeffs.iter().map(|(w, &v)| (w, v))
    }

    pub fn nnz(&self) -> usize {
        self.coeffs.values().filter(|v| **v != 0.0).count()
    }

    /// Drops explicitly stored zeros.
    pub fn canonicalize(mut self) -> Self {
        self.coeffs.retain(|_, v| *v != 0.0);
        self
    }

    /// Same coefficients, truncated (or padded) to `level`.
    pub fn with_level(&self, level: usize) -> Self {
        TruncatedTensor {
            dim: self.dim,
            level,
            coeffs: self
                .coeffs
                .iter()
                .filter(|(w, _)| w.len() <= level)
                .map(|(w, v)| (w.clone(), *v))
                .collect(),
        }
    }

    /// Projection onto words of length exactly `k`.
    pub fn homogeneous_part(&self, k: usize) -> Self {
        TruncatedTensor {
            dim: self.dim,
            level: self.level,
            coeffs: self
                .coeffs
                .iter()
                .filter(|(w, _)| w.len() == k)
                .map(|(w, v)| (w.clone(), *v))
                .collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        TruncatedTensor {
            dim: self.dim,
            level: self.level,
            coeffs: self.coeffs.iter().map(|(w, v)| (w.clone(), c * v)).collect(),
        }
    }

    /// Sparse dot product `<self, other>` over the shared basis.
    pub fn pairing(&self, other: &TruncatedTensor) -> f64 {
        let (small, large) = if self.coeffs.len() <= other.coeffs.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.terms().map(|(w, v)| v * large.get(w)).sum()
    }

    /// Largest absolute coefficient difference over the union of supports.
    pub fn max_abs_diff(&self, other: &TruncatedTensor) -> f64 {
        let mut m: f64 = 0.0;
        for (w, v) in self.terms() {
            m = m.max((v - other.get(w)).abs());
        }
        for (w, v) in other.terms() {
            if !self.coeffs.contains_key(w) {
                m = m.max(v.abs());
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.values().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn check_dim(&self, other: &TruncatedTensor) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::AlphabetMismatch {
                left: self.dim,
                right: other.dim,
            });
        }
        Ok(())
    }

    fn check_same_shape(&self, other: &TruncatedTensor) -> Result<()> {
        self.check_dim(other)?;
        if self.level != other.level {
            return Err(Error::LevelMismatch {
                left: self.level,
                right: other.level,
            });
        }
        Ok(())
    }

    /// Shuffle product, truncated at the larger of the two levels.
    pub fn shuffle(&self, other: &TruncatedTensor) -> Result<Self> {
        self.check_dim(other)?;
        let level = self.level.max(other.level);
        let mut out = Self::zero(self.dim, level);
        for (u, a) in self.terms() {
            if a == 0.0 {
                continue;
            }
            for (v, b) in other.terms() {
                if b == 0.0 || u.len() + v.len() > level {
                    continue;
                }
                for (w, mult) in shuffle_words(u, v) {
                    out.add_to(w, mult as f64 * a * b);
                }
            }
        }
        Ok(out)
    }

    /// Convolution (concatenation) product:
    /// `<g * h, e_w> = sum_{uv = w} <g, e_u><h, e_v>`.
    pub fn convolution(&self, other: &TruncatedTensor) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(self.convolve_unchecked(other))
    }

    pub(crate) fn convolve_unchecked(&self, other: &TruncatedTensor) -> Self {
        let level = self.level;
        let mut out = Self::zero(self.dim, level);
        for (u, a) in self.terms() {
            if a == 0.0 {
                continue;
            }
            for (v, b) in other.terms() {
                if b == 0.0 || u.len() + v.len() > level {
                    continue;
                }
                out.add_to(u.concat(v), a * b);
            }
        }
        out
    }

    /// Antipode `S(e_{i_1..i_p}) = (-1)^p e_{i_p..i_1}`.
    pub fn antipode(&self) -> Self {
        TruncatedTensor {
            dim: self.dim,
            level: self.level,
            coeffs: self
                .coeffs
                .iter()
                .map(|(w, v)| {
                    let sign = if w.len() % 2 == 0 { 1.0 } else { -1.0 };
                    (w.reversed(), sign * v)
                })
                .collect(),
        }
    }

    /// Truncated exponential `sum_{k <= N} a^{*k} / k!` for `<a, 1> = 0`.
    ///
    /// The result is group-like whenever `a` is a Lie element (e.g. a
    /// level-one tensor).
    pub fn exp(&self) -> Result<Self> {
        if self.constant() != 0.0 {
            return Err(Error::Grading(format!(
                "exp requires <a,1> = 0, got {}",
                self.constant()
            )));
        }
        let mut out = Self::unit(self.dim, self.level);
        let mut power = Self::unit(self.dim, self.level);
        for k in 1..=self.level {
            power = power.convolve_unchecked(self).scale(1.0 / k as f64);
            out = out + &power;
        }
        Ok(out)
    }

    /// Truncated logarithm `sum_{k <= N} (-1)^{k+1} (g - 1)^{*k} / k` for `<g, 1> = 1`.
    pub fn log(&self) -> Result<Self> {
        if self.constant() != 1.0 {
            return Err(Error::Grading(format!(
                "log requires <g,1> = 1, got {}",
                self.constant()
            )));
        }
        let x = self - &Self::unit(self.dim, self.level);
        let mut out = Self::zero(self.dim, self.level);
        let mut power = Self::unit(self.dim, self.level);
        for k in 1..=self.level {
            power = power.convolve_unchecked(&x);
            let c = if k % 2 == 1 { 1.0 } else { -1.0 } / k as f64;
            out = out + &power.scale(c);
        }
        Ok(out.canonicalize())
    }

    /// Checks the truncated character property over all non-empty basis
    /// pairs `(u, v)` with `|u| + |v| <= N`.
    pub fn character_check(&self) -> CharacterCheck {
        let mut worst = (self.constant() - 1.0).abs();
        let mut pair = None;
        for p in 1..self.level {
            for q in p..=(self.level - p) {
                for u in words_of_length(self.dim, p) {
                    for v in words_of_length(self.dim, q) {
                        if p == q && v < u {
                            continue;
                        }
                        let lhs: f64 = shuffle_words(&u, &v)
                            .into_iter()
                            .map(|(w, m)| m as f64 * self.get(&w))
                            .sum();
                        let viol = (lhs - self.get(&u) * self.get(&v)).abs();
                        if viol > worst {
                            worst = viol;
                            pair = Some((u.clone(), v.clone()));
                        }
                    }
                }
            }
        }
        CharacterCheck {
            violation: worst,
            worst_pair: pair,
        }
    }

    /// True when the character property holds to `tol`.
    pub fn is_character(&self, tol: f64) -> bool {
        self.character_check().violation <= tol
    }
}

/// Outcome of [`TruncatedTensor::character_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct CharacterCheck {
    /// `max |<a, e_u ш e_v> - <a, e_u><a, e_v>|`, including `|<a,1> - 1|`.
    pub violation: f64,
    pub worst_pair: Option<(Word, Word)>,
}

impl CharacterCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.violation <= tol
    }
}

impl Add<&TruncatedTensor> for TruncatedTensor {
    type Output = TruncatedTensor;

    fn add(mut self, rhs: &TruncatedTensor) -> TruncatedTensor {
        assert_eq!(self.dim, rhs.dim, "alphabet size mismatch");
        for (w, v) in rhs.terms() {
            self.add_to(w.clone(), v);
        }
        self
    }
}

impl Add for &TruncatedTensor {
    type Output = TruncatedTensor;

    fn add(self, rhs: &TruncatedTensor) -> TruncatedTensor {
        self.clone() + rhs
    }
}

impl Sub for &TruncatedTensor {
    type Output = TruncatedTensor;

    fn sub(self, rhs: &TruncatedTensor) -> TruncatedTensor {
        self.clone() + &rhs.scale(-1.0)
    }
}

impl Neg for &TruncatedTensor {
    type Output = TruncatedTensor;

    fn neg(self) -> TruncatedTensor {
        self.scale(-1.0)
    }
}

impl Mul<&TruncatedTensor> for f64 {
    type Output = TruncatedTensor;

    fn mul(self, rhs: &TruncatedTensor) -> TruncatedTensor {
        rhs.scale(self)
    }
}

/// A truncated character: an element of the group `G^(N)`.
///
/// Every value produced by the crate's own constructors is group-like up to
/// floating-point error; [`GroupTensor::new`] validates arbitrary input.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupTensor(TruncatedTensor);

impl GroupTensor {
    /// Validates `<t,1> = 1` and the character property to `tol`.
    pub fn new(t: TruncatedTensor, tol: f64) -> Result<Self> {
        let check = t.character_check();
        if !check.passes(tol) {
            return Err(Error::NotCharacter {
                violation: check.violation,
            });
        }
        Ok(GroupTensor(t))
    }

    pub(crate) fn from_unchecked(t: TruncatedTensor) -> Self {
        GroupTensor(t)
    }

    pub fn identity(dim: usize, level: usize) -> Self {
        GroupTensor(TruncatedTensor::unit(dim, level))
    }

    /// Signature of a straight segment with displacement `dx`:
    /// `<exp(dx), e_w> = prod_j dx[w_j] / |w|!`.
    pub fn segment(dx: &[f64], level: usize) -> Self {
        let dim = dx.len();
        let mut t = TruncatedTensor::zero(dim, level);
        let mut current: Vec<(Word, f64)> = vec![(Word::empty(), 1.0)];
        t.set(Word::empty(), 1.0);
        for k in 1..=level {
            let mut next = Vec::with_capacity(current.len() * dim);
            for (w, v) in &current {
                for (i, &x) in dx.iter().enumerate() {
                    next.push((w.append(i + 1), v * x / k as f64));
                }
            }
            for (w, v) in &next {
                t.set(w.clone(), *v);
            }
            current = next;
        }
        GroupTensor(t)
    }

    /// `exp(a)` for a Lie element `a`, validated to `tol`.
    pub fn exp_lie(a: &TruncatedTensor, tol: f64) -> Result<Self> {
        Self::new(a.exp()?, tol)
    }

    pub fn tensor(&self) -> &TruncatedTensor {
        &self.0
    }

    pub fn into_tensor(self) -> TruncatedTensor {
        self.0
    }

    /// Group law (convolution).
    pub fn mul(&self, other: &GroupTensor) -> Result<GroupTensor> {
        Ok(GroupTensor(self.0.convolution(&other.0)?))
    }

    /// `g^{-1} = g ∘ S`.
    pub fn inverse(&self) -> GroupTensor {
        GroupTensor(self.0.antipode())
    }

    /// `exp(theta * log g)`: the point at fraction `theta` along the
    /// geodesic from `1*` to `g`.
    pub fn geodesic(&self, theta: f64) -> GroupTensor {
        let log = self.0.log().expect("group element has unit constant term");
        GroupTensor(log.scale(theta).exp().expect("log has zero constant term"))
    }

    /// Diagnostic homogeneous norm `max_k max_{|w|=k} (k! |<g,e_w>|)^{1/k}`.
    ///
    /// A computable surrogate used only for Hölder diagnostics.
    pub fn homogeneous_norm(&self) -> f64 {
        let mut m: f64 = 0.0;
        for (w, v) in self.0.terms() {
            let k = w.len();
            if k == 0 {
                continue;
            }
            let fact: f64 = (1..=k).map(|j| j as f64).product();
            m = m.max((fact * v.abs()).powf(1.0 / k as f64));
        }
        m
    }

    /// Left-invariant distance `||h^{-1} g||`.
    pub fn distance(&self, other: &GroupTensor) -> Result<f64> {
        Ok(other.inverse().mul(self)?.homogeneous_norm())
    }
}

impl Deref for GroupTensor {
    type Target = TruncatedTensor;

    fn deref(&self) -> &TruncatedTensor {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w<const K: usize>(l: [usize; K]) -> Word {
        Word::from(l)
    }

    #[test]
    fn shuffle_of_letters() {
        let a = TruncatedTensor::basis(2, 2, w([1]));
        let b = TruncatedTensor::basis(2, 2, w([2]));
        let s = a.shuffle(&b).unwrap().canonicalize();
        assert_eq!(s.get(&w([1, 2])), 1.0);
        assert_eq!(s.get(&w([2, 1])), 1.0);
        assert_eq!(s.nnz(), 2);

        let s = a.shuffle(&a).unwrap();
        assert_eq!(s.get(&w([1, 1])), 2.0);
    }

    #[test]
    fn shuffle_two_by_one() {
        let a = TruncatedTensor::basis(3, 3, w([1, 2]));
        let b = TruncatedTensor::basis(3, 3, w([3]));
        let s = a.shuffle(&b).unwrap().canonicalize();
        assert_eq!(s.nnz(), 3);
        for word in [w([1, 2, 3]), w([1, 3, 2]), w([3, 1, 2])] {
            assert_eq!(s.get(&word), 1.0);
        }
    }

    #[test]
    fn shuffle_truncates_and_rejects_mismatch() {
        let a = TruncatedTensor::basis(2, 2, w([1, 2]));
        let b = TruncatedTensor::basis(2, 2, w([1]));
        assert_eq!(a.shuffle(&b).unwrap().canonicalize().nnz(), 0);
        let c = TruncatedTensor::basis(3, 2, w([1]));
        assert!(matches!(
            a.shuffle(&c),
            Err(Error::AlphabetMismatch { .. })
        ));
    }

    #[test]
    fn antipode_examples() {
        let t = TruncatedTensor::basis(2, 2, w([1, 2])).antipode();
        assert_eq!(t.get(&w([2, 1])), 1.0);
        let t = TruncatedTensor::basis(2, 2, w([1])).antipode();
        assert_eq!(t.get(&w([1])), -1.0);
        let t = TruncatedTensor::unit(2, 2).antipode();
        assert_eq!(t, TruncatedTensor::unit(2, 2));
    }

    #[test]
    fn convolution_concatenates_dual_basis() {
        let a = TruncatedTensor::basis(2, 3, w([1]));
        let b = TruncatedTensor::basis(2, 3, w([2]));
        let c = a.convolution(&b).unwrap().canonicalize();
        assert_eq!(c, TruncatedTensor::basis(2, 3, w([1, 2])));
        let g = GroupTensor::segment(&[0.3, -0.7], 3);
        let unit = TruncatedTensor::unit(2, 3);
        assert_eq!(unit.convolution(&g).unwrap(), g.tensor().clone());
        assert!(matches!(
            a.convolution(&TruncatedTensor::unit(2, 2)),
            Err(Error::LevelMismatch { .. })
        ));
    }

    #[test]
    fn exp_of_one_letter_matches_series() {
        // exp(e1) * exp(e1) = exp(2 e1), coefficients 2^k / k!
        let e1 = TruncatedTensor::basis(1, 3, w([1]));
        let g = e1.exp().unwrap();
        let gg = g.convolution(&g).unwrap();
        let expected = [1.0, 2.0, 2.0, 8.0 / 6.0];
        for (k, e) in expected.iter().enumerate() {
            let word = Word::from_letters(std::iter::repeat(1).take(k));
            assert!((gg.get(&word) - e).abs() < 1e-15);
        }
        let delta = 0.37;
        let g = GroupTensor::segment(&[delta], 2);
        assert_eq!(g.get(&w([1])), delta);
        assert!((g.get(&w([1, 1])) - delta * delta / 2.0).abs() < 1e-16);
    }

    #[test]
    fn log_inverts_exp() {
        assert_eq!(
            TruncatedTensor::unit(2, 3).log().unwrap().nnz(),
            0
        );
        let a = TruncatedTensor::from_level_one(&[1.0, 1.0], 4);
        let back = a.exp().unwrap().log().unwrap();
        assert!(back.max_abs_diff(&a) < 1e-14);
        assert!(a.scale(2.0).exp().is_ok());
        assert!(TruncatedTensor::unit(2, 2).exp().is_err());
        assert!(TruncatedTensor::zero(2, 2).log().is_err());
    }

    #[test]
    fn character_examples() {
        let unit = TruncatedTensor::unit(2, 4);
        assert_eq!(unit.character_check().violation, 0.0);
        let g = TruncatedTensor::from_level_one(&[1.0, 1.0], 4).exp().unwrap();
        assert!(g.is_character(1e-12));
        // 1* + e_(1,1): <a, e1 ш e1> = 2 but <a,e1>^2 = 0
        let mut a = TruncatedTensor::unit(1, 2);
        a.set(w([1, 1]), 1.0);
        let check = a.character_check();
        assert_eq!(check.violation, 2.0);
        assert_eq!(check.worst_pair, Some((w([1]), w([1]))));
        assert!(GroupTensor::new(a, 1e-10).is_err());
    }

    #[test]
    fn inverse_examples() {
        let id = GroupTensor::identity(2, 3);
        assert_eq!(id.inverse(), id);
        let g = GroupTensor::segment(&[0.4], 3);
        let expected = GroupTensor::segment(&[-0.4], 3);
        assert!(g.inverse().max_abs_diff(&expected) < 1e-16);
        let g = GroupTensor::segment(&[0.4, -1.1, 0.2], 4)
            .mul(&GroupTensor::segment(&[-0.3, 0.5, 0.9], 4))
            .unwrap();
        let r = g.mul(&g.inverse()).unwrap();
        assert!(r.max_abs_diff(&TruncatedTensor::unit(3, 4)) < 1e-12);
        let r = g.inverse().mul(&g).unwrap();
        assert!(r.max_abs_diff(&TruncatedTensor::unit(3, 4)) < 1e-12);
    }

    #[test]
    fn norm_examples() {
        assert_eq!(GroupTensor::identity(2, 3).homogeneous_norm(), 0.0);
        let g = GroupTensor::segment(&[-0.8], 4);
        assert!((g.homogeneous_norm() - 0.8).abs() < 1e-14);
        let h = GroupTensor::segment(&[0.2, 0.5], 3);
        // k-th roots amplify round-off in h^{-1} * h
        assert!(h.distance(&h).unwrap() < 1e-4);
    }

    #[test]
    fn geodesic_endpoints() {
        let g = GroupTensor::segment(&[0.2, 0.5], 3)
            .mul(&GroupTensor::segment(&[-0.4, 0.1], 3))
            .unwrap();
        assert!(g.geodesic(1.0).max_abs_diff(&g) < 1e-14);
        assert!(g.geodesic(0.0).max_abs_diff(&TruncatedTensor::unit(2, 3)) < 1e-15);
        let half = g.geodesic(0.5);
        assert!(half.mul(&half).unwrap().max_abs_diff(&g) < 1e-14);
    }
}
