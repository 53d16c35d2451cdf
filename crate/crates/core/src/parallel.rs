//! Order-preserving parallel maps and reproducible reductions.

use rayon::prelude::*;

/// Maps `f` over `items` in parallel; output order matches input order.
pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.par_iter().map(f).collect()
}

/// Fallible variant of [`par_map`]; the first error in input order wins.
pub fn try_par_map<T, U, E, F>(items: &[T], f: F) -> Result<Vec<U>, E>
where
    T: Sync,
    U: Send,
    E: Send,
    F: Fn(usize, &T) -> Result<U, E> + Sync + Send,
{
    let results: Vec<Result<U, E>> = items
        .par_iter()
        .enumerate()
        .map(|(i, x)| f(i, x))
        .collect();
    results.into_iter().collect()
}

/// Pairwise (balanced binary tree) sum; the bracketing depends only on the
/// length, so results are bit-reproducible regardless of thread count.
pub fn tree_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => {
            let (a, b) = xs.split_at(n / 2);
            tree_sum(a) + tree_sum(b)
        }
    }
}

/// Prefix sums where each prefix is accumulated left to right.
pub fn cumulative_sum(xs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(xs.len() + 1);
    out.push(0.0);
    for x in xs {
        acc += x;
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_sum_is_exact_on_integers() {
        let xs: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(tree_sum(&xs), 500500.0);
        assert_eq!(tree_sum(&[]), 0.0);
    }

    #[test]
    fn par_map_keeps_order() {
        let xs: Vec<usize> = (0..257).collect();
        assert_eq!(par_map(&xs, |x| x * 2), xs.iter().map(|x| x * 2).collect::<Vec<_>>());
        let r: Result<Vec<usize>, usize> =
            try_par_map(&xs, |i, &x| if x % 100 == 99 { Err(i) } else { Ok(x) });
        assert_eq!(r, Err(99));
    }
}
