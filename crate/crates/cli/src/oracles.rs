//! Reference implementations the acceptance suite checks the library against.
//! None of them shares code with the routines under test.

use std::collections::BTreeMap;
use std::rc::Rc;

/// Expression trees with symbolic differentiation.
#[derive(Clone, Debug)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Add(Rc<Expr>, Rc<Expr>),
    Mul(Rc<Expr>, Rc<Expr>),
    Sin(Rc<Expr>),
    Cos(Rc<Expr>),
}

impl Expr {
    pub fn c(v: f64) -> Rc<Expr> {
        Rc::new(Expr::Const(v))
    }

    pub fn var(i: usize) -> Rc<Expr> {
        Rc::new(Expr::Var(i))
    }

    pub fn add(a: Rc<Expr>, b: Rc<Expr>) -> Rc<Expr> {
        match (&*a, &*b) {
            (Expr::Const(x), _) if *x == 0.0 => b,
            (_, Expr::Const(y)) if *y == 0.0 => a,
            (Expr::Const(x), Expr::Const(y)) => Expr::c(x + y),
            _ => Rc::new(Expr::Add(a, b)),
        }
    }

    pub fn mul(a: Rc<Expr>, b: Rc<Expr>) -> Rc<Expr> {
        match (&*a, &*b) {
            (Expr::Const(x), _) | (_, Expr::Const(x)) if *x == 0.0 => Expr::c(0.0),
            (Expr::Const(x), _) if *x == 1.0 => b,
            (_, Expr::Const(y)) if *y == 1.0 => a,
            (Expr::Const(x), Expr::Const(y)) => Expr::c(x * y),
            _ => Rc::new(Expr::Mul(a, b)),
        }
    }

    pub fn sin(a: Rc<Expr>) -> Rc<Expr> {
        Rc::new(Expr::Sin(a))
    }

    pub fn cos(a: Rc<Expr>) -> Rc<Expr> {
        Rc::new(Expr::Cos(a))
    }

    pub fn pow(a: &Rc<Expr>, p: u32) -> Rc<Expr> {
        (0..p).fold(Expr::c(1.0), |acc, _| Expr::mul(acc, a.clone()))
    }

    pub fn sum(terms: impl IntoIterator<Item = Rc<Expr>>) -> Rc<Expr> {
        terms.into_iter().fold(Expr::c(0.0), Expr::add)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Const(v) => *v,
            Expr::Var(i) => x[*i],
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Sin(a) => a.eval(x).sin(),
            Expr::Cos(a) => a.eval(x).cos(),
        }
    }

    pub fn diff(e: &Rc<Expr>, i: usize) -> Rc<Expr> {
        match &**e {
            Expr::Const(_) => Expr::c(0.0),
            Expr::Var(j) => Expr::c(if *j == i { 1.0 } else { 0.0 }),
            Expr::Add(a, b) => Expr::add(Expr::diff(a, i), Expr::diff(b, i)),
            Expr::Mul(a, b) => Expr::add(
                Expr::mul(Expr::diff(a, i), b.clone()),
                Expr::mul(a.clone(), Expr::diff(b, i)),
            ),
            Expr::Sin(a) => Expr::mul(Expr::cos(a.clone()), Expr::diff(a, i)),
            Expr::Cos(a) => Expr::mul(Expr::mul(Expr::c(-1.0), Expr::sin(a.clone())), Expr::diff(a, i)),
        }
    }

    /// Replaces `Var(i)` by `subs[i]`.
    pub fn substitute(e: &Rc<Expr>, subs: &[Rc<Expr>]) -> Rc<Expr> {
        match &**e {
            Expr::Const(_) => e.clone(),
            Expr::Var(j) => subs[*j].clone(),
            Expr::Add(a, b) => Expr::add(Expr::substitute(a, subs), Expr::substitute(b, subs)),
            Expr::Mul(a, b) => Expr::mul(Expr::substitute(a, subs), Expr::substitute(b, subs)),
            Expr::Sin(a) => Expr::sin(Expr::substitute(a, subs)),
            Expr::Cos(a) => Expr::cos(Expr::substitute(a, subs)),
        }
    }
}

/// All interleavings of `parts`, with their counts, by recursion on which
/// part contributes the first letter.
pub fn brute_shuffle(parts: &[Vec<usize>]) -> BTreeMap<Vec<usize>, u64> {
    let mut out = BTreeMap::new();
    let mut pos = vec![0usize; parts.len()];
    let total: usize = parts.iter().map(Vec::len).sum();
    let mut cur = Vec::with_capacity(total);
    fn rec(
        parts: &[Vec<usize>],
        pos: &mut [usize],
        cur: &mut Vec<usize>,
        total: usize,
        out: &mut BTreeMap<Vec<usize>, u64>,
    ) {
        if cur.len() == total {
            *out.entry(cur.clone()).or_insert(0) += 1;
            return;
        }
        for k in 0..parts.len() {
            if pos[k] < parts[k].len() {
                cur.push(parts[k][pos[k]]);
                pos[k] += 1;
                rec(parts, pos, cur, total, out);
                pos[k] -= 1;
                cur.pop();
            }
        }
    }
    rec(parts, &mut pos, &mut cur, total, &mut out);
    out
}

/// Every `k`-tuple of non-empty words over `1..=d` with total length `len`.
pub fn word_tuples(d: usize, len: usize, k: usize) -> Vec<Vec<Vec<usize>>> {
    fn words(d: usize, l: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new()];
        for _ in 0..l {
            out = out
                .into_iter()
                .flat_map(|w| {
                    (1..=d).map(move |a| {
                        let mut v = w.clone();
                        v.push(a);
                        v
                    })
                })
                .collect();
        }
        out
    }
    fn rec(d: usize, rest: usize, k: usize, cur: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if k == 0 {
            if rest == 0 {
                out.push(cur.clone());
            }
            return;
        }
        for l in 1..=rest.saturating_sub(k - 1) {
            for w in words(d, l) {
                cur.push(w);
                rec(d, rest - l, k - 1, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(d, len, k, &mut Vec::new(), &mut out);
    out
}

/// `∫_a^b f` by composite Simpson on `2m` panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, m: usize) -> f64 {
    let n = 2 * m;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}

pub fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let p = b[0].len();
    (0..n)
        .map(|i| (0..p).map(|j| (0..b.len()).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

pub fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

/// `e^A` by scaling and squaring with a 20-term Taylor series.
pub fn mat_exp(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let norm: f64 = a.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scale = 2f64.powi(-s);
    let b: Vec<Vec<f64>> = a.iter().map(|r| r.iter().map(|v| v * scale).collect()).collect();
    let eye: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    let mut out = eye.clone();
    let mut term = eye;
    for k in 1..=20 {
        term = mat_mul(&term, &b).into_iter().map(|r| r.into_iter().map(|v| v / k as f64).collect()).collect();
        for (o, t) in out.iter_mut().zip(&term) {
            for (p, q) in o.iter_mut().zip(t) {
                *p += q;
            }
        }
    }
    for _ in 0..s {
        out = mat_mul(&out, &out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbolic_second_derivative_of_sin_squared() {
        let s = Expr::sin(Expr::var(0));
        let f = Expr::mul(s.clone(), s);
        let d2 = Expr::diff(&Expr::diff(&f, 0), 0);
        let x = 0.37f64;
        assert!((d2.eval(&[x]) - 2.0 * (2.0 * x).cos()).abs() < 1e-14);
    }

    #[test]
    fn shuffle_counts() {
        let s = brute_shuffle(&[vec![1], vec![1]]);
        assert_eq!(s.get(&vec![1, 1]), Some(&2));
        let s = brute_shuffle(&[vec![1, 2], vec![3]]);
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn tuples_count() {
        // compositions of 3 into 2 parts over 2 letters: (1,2) and (2,1) → 2·4 + 4·2
        assert_eq!(word_tuples(2, 3, 2).len(), 16);
    }

    #[test]
    fn simpson_and_exp() {
        assert!((simpson(|t| t.cos(), 0.0, 1.0, 100) - 1f64.sin()).abs() < 1e-10);
        let e = mat_exp(&[vec![0.0, 1.0], vec![-1.0, 0.0]]);
        assert!((e[0][0] - 1f64.cos()).abs() < 1e-14 && (e[0][1] - 1f64.sin()).abs() < 1e-14);
    }
}
