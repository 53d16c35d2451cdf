use std::sync::Arc;

use crate::algebra::{deshuffles, words_up_to, Word};
use crate::controlled::word_index;
use crate::error::{Error, Result};
use crate::jet::{factorial, lie_derivative, Jet};
use crate::smooth::{zero_based, SmoothFn, SmoothFunction};

/// Driving vector fields `f_1, ..., f_d : ℝ^n → ℝ^n`.
#[derive(Clone, Debug)]
pub struct VectorFieldSystem {
    n: usize,
    fields: Vec<SmoothFn>,
}

impl VectorFieldSystem {
    pub fn new(fields: Vec<SmoothFn>) -> Result<Self> {
        let first = fields
            .first()
            .ok_or_else(|| Error::InvalidParameter("no vector fields".into()))?;
        let n = first.dim_in();
        for f in &fields {
            if f.dim_in() != n || f.dim_out() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: if f.dim_in() != n { f.dim_in() } else { f.dim_out() },
                });
            }
        }
        Ok(VectorFieldSystem { n, fields })
    }

    /// Number of fields (alphabet size).
    pub fn d(&self) -> usize {
        self.fields.len()
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn field(&self, i: usize) -> &SmoothFn {
        &self.fields[i - 1]
    }

    pub fn fields(&self) -> &[SmoothFn] {
        &self.fields
    }

    /// Smallest declared derivative order among the fields.
    pub fn max_order(&self) -> usize {
        self.fields.iter().map(|f| f.max_order()).min().unwrap_or(0)
    }

    pub fn check_order(&self, needed: usize) -> Result<()> {
        if needed > self.max_order() {
            Err(Error::InsufficientOrder {
                needed,
                declared: self.max_order(),
            })
        } else {
            Ok(())
        }
    }

    /// Jets of every field at `x`.
    pub fn jets(&self, x: &[f64], order: usize) -> Vec<Vec<Jet>> {
        self.fields.iter().map(|f| f.jets(x, order)).collect()
    }
}

/// The derived fields `F_w`, `|w| <= N`, of a vector field system.
///
/// Two independent constructions are available: the recursion
/// `F_{iw} = DF_w · f_i` on Taylor jets ([`Self::jets_at`]) and the shuffle
/// form `F_{wi} = Σ_k 1/k! Σ c · D^k f_i(F_{u_1}, …, F_{u_k})`
/// ([`Self::shuffle_values_at`]).
#[derive(Clone, Debug)]
pub struct DerivedFieldTable {
    system: Arc<VectorFieldSystem>,
    level: usize,
    words: Vec<Word>,
}

/// Builds the table of derived fields up to word length `level`.
pub fn derive_fields(v: Arc<VectorFieldSystem>, level: usize) -> Result<DerivedFieldTable> {
    v.check_order(level.saturating_sub(1))?;
    Ok(DerivedFieldTable {
        words: words_up_to(v.d(), level),
        system: v,
        level,
    })
}

impl DerivedFieldTable {
    pub fn system(&self) -> &Arc<VectorFieldSystem> {
        &self.system
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// Words `|w| <= level` in canonical order (the empty word first).
    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn index(&self, w: &Word) -> usize {
        word_index(self.system.d(), w)
    }

    /// Jets of `F_w` at `x` for every `|w| <= level`, with `F_w` of order
    /// `extra + level - |w|`, so every `F_w` carries at least `extra`
    /// derivatives. Indexed like [`Self::words`].
    pub fn jets_at(&self, x: &[f64], extra: usize) -> Result<Vec<Vec<Jet>>> {
        let v = &self.system;
        let top = extra + self.level;
        if self.level >= 1 {
            v.check_order(top - 1)?;
        }
        let f = v.jets(x, top.saturating_sub(1));
        Ok(self.jets_from_field_jets(x, &f, top))
    }

    pub(crate) fn jets_from_field_jets(&self, x: &[f64], f: &[Vec<Jet>], top: usize) -> Vec<Vec<Jet>> {
        let mut out: Vec<Vec<Jet>> = Vec::with_capacity(self.words.len());
        out.push(Jet::variables(x, top));
        for w in &self.words[1..] {
            let i = w.get(0);
            let rest = w.slice(1, w.len());
            let base = &out[self.index(&rest)];
            out.push(lie_derivative(base, &f[i - 1]));
        }
        out
    }

    /// `F_w(x)` for every `|w| <= level` via the recursion.
    pub fn values_at(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .jets_at(x, 0)?
            .iter()
            .map(|j| j.iter().map(Jet::value).collect())
            .collect())
    }

    /// `F_w(x)` for every `|w| <= level` via the shuffle form, using only
    /// derivatives of the `f_i` at `x`.
    pub fn shuffle_values_at(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let v = &self.system;
        v.check_order(self.level.saturating_sub(1))?;
        let f = v.jets(x, self.level.saturating_sub(1));
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(self.words.len());
        out.push(x.to_vec());
        for w in &self.words[1..] {
            let i = w.last().expect("non-empty word");
            let head = w.slice(0, w.len() - 1);
            if head.is_empty() {
                out.push(f[i - 1].iter().map(Jet::value).collect());
                continue;
            }
            let mut acc = vec![0.0; v.n()];
            for k in 1..=head.len() {
                let c = 1.0 / factorial(k);
                for t in &deshuffles(&head, k)?.tuples {
                    let args: Vec<&[f64]> =
                        t.parts.iter().map(|u| out[self.index(u)].as_slice()).collect();
                    let m = c * t.multiplicity as f64;
                    for (a, j) in acc.iter_mut().zip(&f[i - 1]) {
                        *a += m * j.multilinear(&args);
                    }
                }
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// `F_w(x)` for one word via the recursion.
    pub fn eval(&self, w: &Word, x: &[f64]) -> Result<Vec<f64>> {
        self.check_word(w)?;
        Ok(self.values_at(x)?.swap_remove(self.index(w)))
    }

    /// `F_w(x)` for one word via the shuffle form.
    pub fn eval_shuffle(&self, w: &Word, x: &[f64]) -> Result<Vec<f64>> {
        self.check_word(w)?;
        Ok(self.shuffle_values_at(x)?.swap_remove(self.index(w)))
    }

    /// `∂^α F_w(x)` for a greek word `α` over `1..=n`.
    pub fn partial(&self, w: &Word, x: &[f64], alpha: &Word) -> Result<Vec<f64>> {
        self.check_word(w)?;
        let a = zero_based(alpha, self.system.n())?;
        let jets = self.jets_at(x, a.len())?;
        Ok(jets[self.index(w)].iter().map(|j| j.partial(&a)).collect())
    }

    fn check_word(&self, w: &Word) -> Result<()> {
        if w.len() > self.level {
            return Err(Error::WordTooLong {
                len: w.len(),
                level: self.level,
            });
        }
        if w.max_letter() > self.system.d() {
            return Err(Error::InvalidLetter {
                letter: w.max_letter(),
                dim: self.system.d(),
            });
        }
        Ok(())
    }
}

/// `∂^α (f ∘ g)(x) = Σ_k 1/k! Σ_{(β_1..β_k)} c · D^k f(g(x))(∂^{β_1} g(x), …, ∂^{β_k} g(x))`,
/// summed over deshuffles of `α` with `c` the shuffle multiplicity.
pub fn faa_di_bruno(
    f: &dyn SmoothFunction,
    g: &dyn SmoothFunction,
    alpha: &Word,
    x: &[f64],
) -> Result<Vec<f64>> {
    if f.dim_in() != g.dim_out() {
        return Err(Error::DimensionMismatch {
            expected: f.dim_in(),
            got: g.dim_out(),
        });
    }
    zero_based(alpha, g.dim_in())?;
    let gx = g.eval(x);
    if alpha.is_empty() {
        return Ok(f.eval(&gx));
    }
    let m = alpha.len();
    let fj = f.taylor(&gx, m)?;
    g.check_order(m)?;
    let mut out = vec![0.0; f.dim_out()];
    for k in 1..=m {
        let c = 1.0 / factorial(k);
        for t in &deshuffles(alpha, k)?.tuples {
            let args: Vec<Vec<f64>> = t
                .parts
                .iter()
                .map(|b| g.partial(x, b))
                .collect::<Result<_>>()?;
            let refs: Vec<&[f64]> = args.iter().map(Vec::as_slice).collect();
            let w = c * t.multiplicity as f64;
            for (o, j) in out.iter_mut().zip(&fj) {
                *o += w * j.multilinear(&refs);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smooth::{Affine, Polynomial, Trig, TrigTerm};

    fn linear_system() -> (Vec<Vec<Vec<f64>>>, Arc<VectorFieldSystem>) {
        let a = vec![
            vec![vec![0.3, -1.0], vec![0.5, 0.2]],
            vec![vec![-0.7, 0.1], vec![0.0, 1.1]],
        ];
        let fields: Vec<SmoothFn> = a
            .iter()
            .map(|m| Arc::new(Affine::linear(m.clone())) as SmoothFn)
            .collect();
        (a, Arc::new(VectorFieldSystem::new(fields).unwrap()))
    }

    fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter().map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
    }

    #[test]
    fn linear_closed_form() {
        let (a, v) = linear_system();
        let t = derive_fields(v, 4).unwrap();
        let x = [0.4, -1.3];
        let rec = t.values_at(&x).unwrap();
        let shu = t.shuffle_values_at(&x).unwrap();
        for (k, w) in t.words().iter().enumerate() {
            let mut y = x.to_vec();
            for i in w.letters() {
                y = matvec(&a[i - 1], &y);
            }
            for c in 0..2 {
                assert!((rec[k][c] - y[c]).abs() < 1e-13, "{w}");
                assert!((shu[k][c] - y[c]).abs() < 1e-13, "{w}");
            }
        }
    }

    #[test]
    fn scalar_identity_field() {
        let f: SmoothFn = Arc::new(Polynomial::scalar(1, &[(1.0, &[1])]));
        let t = derive_fields(Arc::new(VectorFieldSystem::new(vec![f]).unwrap()), 3).unwrap();
        assert!((t.eval(&Word::from([1, 1]), &[2.5]).unwrap()[0] - 2.5).abs() < 1e-15);
        assert_eq!(t.eval(&Word::empty(), &[2.5]).unwrap(), vec![2.5]);
    }

    #[test]
    fn nonlinear_routes_agree() {
        let f1: SmoothFn = Arc::new(
            Polynomial::new(
                2,
                vec![
                    vec![
                        crate::smooth::Monomial { coeff: 1.0, powers: vec![0, 2] },
                        crate::smooth::Monomial { coeff: -0.5, powers: vec![1, 0] },
                    ],
                    vec![crate::smooth::Monomial { coeff: 0.7, powers: vec![1, 1] }],
                ],
            )
            .unwrap(),
        );
        let f2: SmoothFn = Arc::new(Trig {
            dim_in: 2,
            components: vec![
                vec![TrigTerm { amp: 1.0, freq: vec![1.0, 0.5], phase: 0.1 }],
                vec![TrigTerm { amp: -0.4, freq: vec![0.0, 2.0], phase: 0.0 }],
            ],
        });
        let t = derive_fields(Arc::new(VectorFieldSystem::new(vec![f1, f2]).unwrap()), 4).unwrap();
        let x = [0.3, -0.8];
        let a = t.values_at(&x).unwrap();
        let b = t.shuffle_values_at(&x).unwrap();
        for (u, v) in a.iter().flatten().zip(b.iter().flatten()) {
            assert!((u - v).abs() <= 1e-12 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn faa_di_bruno_sin_squared() {
        let f = Polynomial::scalar(1, &[(1.0, &[2])]);
        let g = Trig {
            dim_in: 1,
            components: vec![vec![TrigTerm { amp: 1.0, freq: vec![1.0], phase: 0.0 }]],
        };
        let x: f64 = 0.7;
        let v = faa_di_bruno(&f, &g, &Word::from([1, 1]), &[x]).unwrap()[0];
        assert!((v - 2.0 * (2.0 * x).cos()).abs() < 1e-14);
        let id = Affine::identity(1);
        let v = faa_di_bruno(&f, &id, &Word::from([1, 1]), &[x]).unwrap()[0];
        assert!((v - 2.0).abs() < 1e-15);
    }

    #[test]
    fn word_checks() {
        let (_, v) = linear_system();
        let t = derive_fields(v, 2).unwrap();
        assert!(matches!(t.eval(&Word::from([1, 1, 1]), &[0.0, 0.0]), Err(Error::WordTooLong { .. })));
        assert!(matches!(t.eval(&Word::from([3]), &[0.0, 0.0]), Err(Error::InvalidLetter { .. })));
    }
}
