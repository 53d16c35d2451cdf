use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use super::fields::{derive_fields, DerivedFieldTable, VectorFieldSystem};
use super::solve::{check_increment, davie_trajectory};
use crate::algebra::{GroupTensor, Word};
use crate::error::{Error, Result};
use crate::jet::{MonomialBasis, Jet};
use crate::order::{regression_lags, fit_order, nan_max, noise_floor, OrderCheck, OrderReport};
use crate::roughpath::GeometricRoughPath;
use crate::smooth::{zero_based, SmoothFn, SmoothFunction};

/// A point `(x, y_1, ..., y_{k-1})` of the extended space
/// `𝔖_k = ℝ^n ⊕ L(ℝ^n, ℝ^n) ⊕ ⋯ ⊕ L((ℝ^n)^{⊗(k-1)}, ℝ^n)`.
///
/// Component `p` is stored as a dense array `y_p[o][a_1..a_p]` in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedState {
    n: usize,
    k: usize,
    data: Vec<f64>,
}

/// `dim 𝔖_k = Σ_{p<k} n^{p+1}`.
pub fn extended_dim(n: usize, k: usize) -> usize {
    (0..k).map(|p| n.pow(p as u32 + 1)).sum()
}

fn offset(n: usize, p: usize) -> usize {
    extended_dim(n, p)
}

fn flat_index(n: usize, args: &[usize]) -> usize {
    args.iter().fold(0, |acc, &a| acc * n + a)
}

impl ExtendedState {
    pub fn new(n: usize, k: usize, data: Vec<f64>) -> Result<Self> {
        if k == 0 || data.len() != extended_dim(n, k) {
            return Err(Error::DimensionMismatch {
                expected: extended_dim(n, k.max(1)),
                got: data.len(),
            });
        }
        Ok(ExtendedState { n, k, data })
    }

    /// `(x, I, 0, ..., 0)`.
    pub fn canonical(x: &[f64], k: usize) -> Self {
        let n = x.len();
        let mut data = vec![0.0; extended_dim(n, k)];
        data[..n].copy_from_slice(x);
        if k >= 2 {
            for o in 0..n {
                data[n + o * n + o] = 1.0;
            }
        }
        ExtendedState { n, k, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn base(&self) -> &[f64] {
        &self.data[..self.n]
    }

    pub fn component(&self, p: usize) -> &[f64] {
        &self.data[offset(self.n, p)..offset(self.n, p + 1)]
    }

    /// `y_p[o](e_{a_1}, …, e_{a_p})` with zero-based indices.
    pub fn entry(&self, p: usize, o: usize, args: &[usize]) -> f64 {
        let n = self.n;
        self.data[offset(n, p) + o * n.pow(p as u32) + flat_index(n, args)]
    }

    /// Taylor jets (order `k - 1`) of the map whose derivatives are the `y_p`.
    pub fn to_jets(&self) -> Vec<Jet> {
        let n = self.n;
        let basis = MonomialBasis::get(n, self.k - 1);
        (0..n)
            .map(|o| {
                let coeffs = (0..basis.len())
                    .map(|i| {
                        let e = basis.exponents(i);
                        let args: Vec<usize> = e
                            .iter()
                            .enumerate()
                            .flat_map(|(v, &c)| std::iter::repeat_n(v, c as usize))
                            .collect();
                        let beta: f64 = e.iter().map(|&c| crate::jet::factorial(c as usize)).product();
                        self.entry(args.len(), o, &args) / beta
                    })
                    .collect();
                Jet::from_coeffs(n, self.k - 1, coeffs)
            })
            .collect()
    }

    /// Inverse of [`Self::to_jets`].
    pub fn from_jets(jets: &[Jet], k: usize) -> Self {
        let n = jets.len();
        let mut data = vec![0.0; extended_dim(n, k)];
        for p in 0..k {
            for (o, j) in jets.iter().enumerate() {
                for flat in 0..n.pow(p as u32) {
                    let mut args = vec![0; p];
                    let mut r = flat;
                    for a in args.iter_mut().rev() {
                        *a = r % n;
                        r /= n;
                    }
                    data[offset(n, p) + o * n.pow(p as u32) + flat] = j.partial(&args);
                }
            }
        }
        ExtendedState { n, k, data }
    }
}

/// Integer partitions of `p` as multiplicity vectors `r` (`r[i-1]` blocks of size `i`).
fn partition_types(p: usize) -> Vec<Vec<usize>> {
    fn rec(p: usize, max: usize, r: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if p == 0 {
            out.push(r.clone());
            return;
        }
        for size in (1..=max.min(p)).rev() {
            r[size - 1] += 1;
            rec(p - size, size, r, out);
            r[size - 1] -= 1;
        }
    }
    let mut out = Vec::new();
    let mut r = vec![0; p];
    rec(p, p, &mut r, &mut out);
    out
}

fn permutations(p: usize) -> Vec<Vec<usize>> {
    if p == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for rest in permutations(p - 1) {
        for pos in 0..=rest.len() {
            let mut v = rest.clone();
            v.insert(pos, p - 1);
            out.push(v);
        }
    }
    out
}

/// The lifted field `𝔣` on `𝔖_k`: component `p` is
/// `Σ_{r} p!/(Π r_i! (i!)^{r_i}) · D^{Σr} f(x)(y_1^{r_1}, …, y_p^{r_p})`
/// over partition types `Σ i r_i = p`, symmetrized over the `p` argument slots.
#[derive(Clone, Debug)]
pub struct LiftedField {
    f: SmoothFn,
    k: usize,
}

impl LiftedField {
    pub fn new(f: SmoothFn, k: usize) -> Result<Self> {
        if f.dim_in() != f.dim_out() {
            return Err(Error::DimensionMismatch {
                expected: f.dim_in(),
                got: f.dim_out(),
            });
        }
        if k == 0 {
            return Err(Error::InvalidParameter("extended space needs k >= 1".into()));
        }
        Ok(LiftedField { f, k })
    }
}

impl SmoothFunction for LiftedField {
    fn dim_in(&self) -> usize {
        extended_dim(self.f.dim_in(), self.k)
    }

    fn dim_out(&self) -> usize {
        self.dim_in()
    }

    fn max_order(&self) -> usize {
        self.f.max_order().saturating_sub(self.k - 1)
    }

    fn jets(&self, z: &[f64], order: usize) -> Vec<Jet> {
        let n = self.f.dim_in();
        let e = self.dim_in();
        let vars = Jet::variables(z, order);
        let fj = self.f.jets(&z[..n], order + self.k - 1);
        // ∂^β f_o as jets in the extended variables, keyed by (o, sorted β)
        let mut cache: HashMap<(usize, Vec<usize>), Jet> = HashMap::new();
        let mut dfj = |o: usize, beta: &[usize]| -> Jet {
            let mut key = beta.to_vec();
            key.sort_unstable();
            cache
                .entry((o, key.clone()))
                .or_insert_with(|| {
                    let mut j = fj[o].clone();
                    for &b in &key {
                        j = j.derivative(b);
                    }
                    j.truncate(order).embed(e, 0)
                })
                .clone()
        };
        let y = |q: usize, o: usize, args: &[usize]| -> &Jet {
            &vars[offset(n, q) + o * n.pow(q as u32) + flat_index(n, args)]
        };
        let mut out: Vec<Jet> = Vec::with_capacity(e);
        for o in 0..n {
            out.push(dfj(o, &[]));
        }
        for p in 1..self.k {
            let types = partition_types(p);
            let perms = permutations(p);
            let pf = crate::jet::factorial(p);
            for o in 0..n {
                for flat in 0..n.pow(p as u32) {
                    let mut slots = vec![0; p];
                    let mut r = flat;
                    for a in slots.iter_mut().rev() {
                        *a = r % n;
                        r /= n;
                    }
                    let mut acc = Jet::zero(e, order);
                    for t in &types {
                        let denom: f64 = t
                            .iter()
                            .enumerate()
                            .map(|(i, &ri)| {
                                crate::jet::factorial(ri) * crate::jet::factorial(i + 1).powi(ri as i32)
                            })
                            .product();
                        let coef = pf / denom / perms.len() as f64;
                        let sizes: Vec<usize> = t
                            .iter()
                            .enumerate()
                            .flat_map(|(i, &ri)| std::iter::repeat_n(i + 1, ri))
                            .collect();
                        for sigma in &perms {
                            let arg: Vec<usize> = sigma.iter().map(|&s| slots[s]).collect();
                            // D^m f_o(x)(Y_{s_1}[arg block 1], …)
                            let m = sizes.len();
                            let mut blocks: Vec<&[usize]> = Vec::with_capacity(m);
                            let mut pos = 0;
                            for &s in &sizes {
                                blocks.push(&arg[pos..pos + s]);
                                pos += s;
                            }
                            for beta_flat in 0..n.pow(m as u32) {
                                let mut beta = vec![0; m];
                                let mut r = beta_flat;
                                for b in beta.iter_mut().rev() {
                                    *b = r % n;
                                    r /= n;
                                }
                                let mut term = dfj(o, &beta);
                                for (l, &b) in beta.iter().enumerate() {
                                    term = term.mul(y(sizes[l], b, blocks[l]));
                                }
                                acc.axpy(coef, &term);
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
        out
    }
}

/// The lifted system `𝔣_1, …, 𝔣_d` on `𝔖_k`.
pub fn lifted_system(v: &VectorFieldSystem, k: usize) -> Result<VectorFieldSystem> {
    let fields: Vec<SmoothFn> = v
        .fields()
        .iter()
        .map(|f| LiftedField::new(f.clone(), k).map(|l| Arc::new(l) as SmoothFn))
        .collect::<Result<_>>()?;
    VectorFieldSystem::new(fields)
}

/// Solves the lifted RDE on `𝔖_k` from `(x, I, 0, …)` by Davie steps: the
/// states hold `(X^{s,x}_t, DX^{s,x}_t, …, D^{k-1}X^{s,x}_t)` at each partition time.
pub fn solve_flow_jets(
    x0: &[f64],
    v: &VectorFieldSystem,
    w: &GeometricRoughPath,
    partition: &[f64],
    k: usize,
) -> Result<Vec<ExtendedState>> {
    v.check_order(w.level().saturating_sub(1) + k - 1)?;
    let lifted = Arc::new(lifted_system(v, k)?);
    let table = derive_fields(lifted, w.level())?;
    let start = ExtendedState::canonical(x0, k);
    let (xs, _) = davie_trajectory(start.data(), &table, w, partition)?;
    xs.into_iter()
        .map(|d| ExtendedState::new(x0.len(), k, d))
        .collect()
}

/// One Davie step applied to the Taylor jets of a flow map: with `x` the
/// current point, returns `(Σ_w F_w ⟨g, e_w⟩) ∘ jets`.
pub fn flow_jet_step(jets: &[Jet], table: &DerivedFieldTable, g: &GroupTensor) -> Result<Vec<Jet>> {
    check_increment(table, g)?;
    let order = jets.iter().map(Jet::order).min().unwrap_or(0);
    let n = jets.len();
    let x: Vec<f64> = jets.iter().map(Jet::value).collect();
    let fw = table.jets_at(&x, order)?;
    let mut step: Vec<Jet> = (0..n).map(|_| Jet::zero(n, order)).collect();
    for (w, fj) in table.words().iter().zip(&fw) {
        let c = g.get(w);
        if c == 0.0 {
            continue;
        }
        for (s, f) in step.iter_mut().zip(fj) {
            s.axpy(c, f);
        }
    }
    Ok(step.iter().map(|s| s.compose(jets)).collect())
}

/// Taylor jets of `x ↦ X^{s,x}_t` (order `order`) at every partition time,
/// obtained by pushing jets through the Davie steps.
pub fn propagate_flow_jets(
    x0: &[f64],
    table: &DerivedFieldTable,
    w: &GeometricRoughPath,
    partition: &[f64],
    order: usize,
) -> Result<Vec<Vec<Jet>>> {
    if partition.is_empty() {
        return Err(Error::EmptyPartition);
    }
    crate::roughpath::check_times(partition)?;
    let mut out = Vec::with_capacity(partition.len());
    let mut jets = Jet::variables(x0, order);
    for (c, p) in partition.windows(2).enumerate() {
        let g = w.increment(p[0], p[1])?;
        let next = flow_jet_step(&jets, table, &g)?;
        out.push(jets);
        if next
            .iter()
            .any(|j| j.coeffs().iter().any(|v| !v.is_finite() || v.abs() > super::solve::BLOW_UP))
        {
            return Err(Error::BlowUp {
                cell: c,
                start: p[0],
                end: p[1],
            });
        }
        jets = next;
    }
    out.push(jets);
    Ok(out)
}

/// Uniform refinement of a grid: each cell split into `substeps` pieces.
pub fn refine_grid(grid: &[f64], substeps: usize) -> Vec<f64> {
    let s = substeps.max(1);
    let mut out = Vec::with_capacity((grid.len() - 1) * s + 1);
    for p in grid.windows(2) {
        for j in 0..s {
            out.push(p[0] + (p[1] - p[0]) * j as f64 / s as f64);
        }
    }
    out.push(grid[grid.len() - 1]);
    out
}

/// Number of start times used by [`partial_davie_check`].
pub const DAVIE_CHECK_STARTS: usize = 16;

/// Graded check of `∂^α X^{s,x}_t ≍ Σ_{|w| <= N_γ} ∂^α F_w(x)⟨W_{st}, e_w⟩` at order
/// `(N_γ + 1)γ`, over dyadic lags of `grid` with up to [`DAVIE_CHECK_STARTS`]
/// start times; the flow is computed with `substeps` Davie steps per grid cell.
pub fn partial_davie_check(
    x0: &[f64],
    v: Arc<VectorFieldSystem>,
    w: &GeometricRoughPath,
    alphas: &[Word],
    grid: &[f64],
    substeps: usize,
) -> Result<OrderReport> {
    crate::roughpath::check_times(grid)?;
    let ng = w.n_gamma();
    let order = alphas.iter().map(Word::len).max().unwrap_or(0);
    let idx: Vec<Vec<usize>> = alphas
        .iter()
        .map(|a| zero_based(a, v.n()))
        .collect::<Result<_>>()?;
    let table = derive_fields(v.clone(), w.level())?;
    let fx = table.jets_at(x0, order)?;
    let keep = crate::algebra::count_words(v.d(), ng);
    let words = &table.words()[..keep];
    let m = grid.len() - 1;
    let stride = (m / DAVIE_CHECK_STARTS).max(1);
    let starts: Vec<usize> = (0..m).step_by(stride).collect();
    let fine = refine_grid(grid, substeps);
    let s = substeps.max(1);
    // per start: jets of the flow at every later grid time
    let flows: Vec<Vec<Vec<Jet>>> = starts
        .par_iter()
        .map(|&k0| {
            let part = &fine[k0 * s..];
            let jets = propagate_flow_jets(x0, &table, w, part, order)?;
            Ok(jets.into_iter().step_by(s).collect())
        })
        .collect::<Result<_>>()?;
    let lags = regression_lags(m);
    let mut report = OrderReport::default();
    for (alpha, a) in alphas.iter().zip(&idx) {
        let mut mag: f64 = 0.0;
        let mut samples = Vec::new();
        for &l in &lags {
            let mut worst: f64 = 0.0;
            let mut seen = false;
            for (si, &k0) in starts.iter().enumerate() {
                if k0 + l > m {
                    continue;
                }
                seen = true;
                let g = w.increment(grid[k0], grid[k0 + l])?;
                let lhs = &flows[si][l];
                for o in 0..v.n() {
                    let exact = lhs[o].partial(a);
                    let mut approx = 0.0;
                    for (wi, u) in words.iter().enumerate() {
                        approx += fx[wi][o].partial(a) * g.get(u);
                    }
                    mag = mag.max(exact.abs());
                    worst = nan_max(worst, (exact - approx).abs());
                }
            }
            if seen {
                let h = grid[l] - grid[0];
                samples.push((h, worst));
            }
        }
        let fit = fit_order(&samples, noise_floor(mag));
        let label = if alpha.is_empty() {
            "X".to_string()
        } else {
            format!("d^{alpha} X")
        };
        report.push(OrderCheck::new(label, fit, (ng + 1) as f64 * w.gamma()));
    }
    Ok(report)
}

/// `I + Σ_i Df_i(x) g^i + Σ_{i,j} (Df_j Df_i + D²f_j(f_i, ·))(x) g^{ij}`, the
/// first terms of the Davie expansion of `DX^{s,x}_t`, as an `n × n` matrix.
pub fn jacobian_expansion(v: &VectorFieldSystem, x: &[f64], g: &GroupTensor) -> Result<Vec<Vec<f64>>> {
    v.check_order(2)?;
    let n = v.n();
    let jets = v.jets(x, 2);
    let df = |i: usize, o: usize, a: usize| jets[i][o].partial(&[a]);
    let mut out: Vec<Vec<f64>> = (0..n)
        .map(|o| (0..n).map(|a| if o == a { 1.0 } else { 0.0 }).collect())
        .collect();
    for i in 0..v.d() {
        let gi = g.get(&Word::letter(i + 1));
        for o in 0..n {
            for a in 0..n {
                out[o][a] += df(i, o, a) * gi;
            }
        }
    }
    if g.level() >= 2 {
        for i in 0..v.d() {
            let fi: Vec<f64> = jets[i].iter().map(Jet::value).collect();
            for j in 0..v.d() {
                let gij = g.get(&Word::from([i + 1, j + 1]));
                for o in 0..n {
                    for a in 0..n {
                        let mut t = 0.0;
                        for b in 0..n {
                            t += df(j, o, b) * df(i, b, a);
                            t += jets[j][o].partial(&[b, a]) * fi[b];
                        }
                        out[o][a] += t * gij;
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roughpath::{lift_pl, PiecewiseLinearPath};
    use crate::smooth::{Affine, Monomial, Polynomial};

    fn poly_system() -> VectorFieldSystem {
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
        VectorFieldSystem::new(vec![Arc::new(f1), Arc::new(f2)]).unwrap()
    }

    #[test]
    fn partition_type_counts() {
        assert_eq!(partition_types(3).len(), 3);
        assert_eq!(partition_types(4).len(), 5);
        assert_eq!(permutations(3).len(), 6);
    }

    #[test]
    fn lifted_field_at_canonical_point_is_jet_of_f() {
        let v = poly_system();
        let x = [0.3, -0.6];
        let z = ExtendedState::canonical(&x, 3);
        let lf = LiftedField::new(v.field(1).clone(), 3).unwrap();
        let val = lf.eval(z.data());
        let got = ExtendedState::new(2, 3, val).unwrap();
        let fj = v.field(1).jets(&x, 2);
        for o in 0..2 {
            assert!((got.entry(0, o, &[]) - fj[o].value()).abs() < 1e-15);
            for a in 0..2 {
                assert!((got.entry(1, o, &[a]) - fj[o].partial(&[a])).abs() < 1e-15);
                for b in 0..2 {
                    assert!((got.entry(2, o, &[a, b]) - fj[o].partial(&[a, b])).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn routes_agree() {
        let v = Arc::new(poly_system());
        let p = PiecewiseLinearPath::from_fn(1.0, 16, |t| vec![(3.0 * t).sin(), t * t - t]).unwrap();
        let w = lift_pl(&p, 0.4, 2).unwrap();
        let x = [0.3, -0.6];
        let a = solve_flow_jets(&x, &v, &w, w.times(), 3).unwrap();
        let table = derive_fields(v.clone(), 2).unwrap();
        let b = propagate_flow_jets(&x, &table, &w, w.times(), 2).unwrap();
        for (sa, jb) in a.iter().zip(&b) {
            let ja = sa.to_jets();
            for (u, v) in ja.iter().zip(jb) {
                for (p, q) in u.coeffs().iter().zip(v.coeffs()) {
                    assert!((p - q).abs() < 1e-12, "{p} vs {q}");
                }
            }
        }
    }

    #[test]
    fn linear_jacobian_expansion() {
        let a1 = vec![vec![0.2, 1.0], vec![-0.5, 0.1]];
        let a2 = vec![vec![0.0, 0.3], vec![0.7, -0.2]];
        let v = VectorFieldSystem::new(vec![
            Arc::new(Affine::linear(a1.clone())),
            Arc::new(Affine::linear(a2.clone())),
        ])
        .unwrap();
        let g = GroupTensor::segment(&[0.3, -0.4], 2);
        let j = jacobian_expansion(&v, &[1.0, 2.0], &g).unwrap();
        let table = derive_fields(Arc::new(v), 2).unwrap();
        let fx = table.jets_at(&[1.0, 2.0], 1).unwrap();
        for o in 0..2 {
            for c in 0..2 {
                let mut s = 0.0;
                for (wi, w) in table.words().iter().enumerate() {
                    s += fx[wi][o].partial(&[c]) * g.get(w);
                }
                assert!((s - j[o][c]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn state_jet_roundtrip() {
        let v = poly_system();
        let jets = v.field(2).jets(&[0.1, 0.2], 3);
        let st = ExtendedState::from_jets(&jets, 4);
        let back = st.to_jets();
        for (a, b) in jets.iter().zip(&back) {
            for (p, q) in a.coeffs().iter().zip(b.coeffs()) {
                assert!((p - q).abs() < 1e-15);
            }
        }
    }
}
