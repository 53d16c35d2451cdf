use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, OnceLock, RwLock};

use super::word::Word;
use crate::error::{Error, Result};

/// Shuffle of two words as `(word, multiplicity)` pairs in canonical order.
pub fn shuffle_words(u: &Word, v: &Word) -> Vec<(Word, u64)> {
    let mut acc = BTreeMap::new();
    let mut prefix = Word::empty();
    shuffle_rec(u, 0, v, 0, &mut prefix, &mut acc);
    acc.into_iter().collect()
}

fn shuffle_rec(
    u: &Word,
    i: usize,
    v: &Word,
    j: usize,
    prefix: &mut Word,
    acc: &mut BTreeMap<Word, u64>,
) {
    if i == u.len() && j == v.len() {
        *acc.entry(prefix.clone()).or_insert(0) += 1;
        return;
    }
    if i < u.len() {
        let mut p = prefix.clone();
        p.push(u.get(i));
        shuffle_rec(u, i + 1, v, j, &mut p, acc);
    }
    if j < v.len() {
        let mut p = prefix.clone();
        p.push(v.get(j));
        shuffle_rec(u, i, v, j + 1, &mut p, acc);
    }
}

/// Shuffle of several words, `e_{u_1} ш ... ш e_{u_k}`.
pub fn shuffle_many(words: &[Word]) -> Vec<(Word, u64)> {
    let mut acc: BTreeMap<Word, u64> = BTreeMap::new();
    acc.insert(Word::empty(), 1);
    for u in words {
        let mut next = BTreeMap::new();
        for (w, m) in &acc {
            for (x, k) in shuffle_words(w, u) {
                *next.entry(x).or_insert(0) += m * k;
            }
        }
        acc = next;
    }
    acc.into_iter().collect()
}

/// One ordered tuple `(u_1, ..., u_k)` of non-empty words with `w` in the
/// support of `e_{u_1} ш ... ш e_{u_k}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Deshuffle {
    pub parts: Vec<Word>,
    /// `<e_w*, e_{u_1} ш ... ш e_{u_k}>`, i.e. the number of ordered
    /// position partitions of `w` that read off this tuple.
    pub multiplicity: u64,
}

/// The set `{(u_1..u_k) : w ∈ Sh(u_1..u_k)}` for a fixed word and arity.
///
/// Each distinct tuple appears once; its shuffle multiplicity is kept
/// alongside so sums of the form `sum_{w ∈ Sh(u_1..u_k)}` can weight terms
/// by `<e_w*, e_{u_1} ш ... ш e_{u_k}>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeshuffleTable {
    pub word: Word,
    pub arity: usize,
    pub tuples: Vec<Deshuffle>,
}

impl DeshuffleTable {
    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn contains(&self, parts: &[Word]) -> bool {
        self.tuples.iter().any(|t| t.parts == parts)
    }
}

/// Enumerates deshuffles of `w` into `k` non-empty ordered parts.
///
/// Positions `0..|w|` are assigned to blocks `0..k` (every block used); each
/// block read left to right is one part. Distinct tuples are deduplicated and
/// counted. Results are memoized in a process-wide cache.
pub fn deshuffles(w: &Word, k: usize) -> Result<Arc<DeshuffleTable>> {
    if k == 0 || k > w.len() {
        return Err(Error::OutOfRange(format!(
            "arity {k} not in 1..={} for word {w}",
            w.len()
        )));
    }
    static CACHE: OnceLock<RwLock<HashMap<(Word, usize), Arc<DeshuffleTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| RwLock::new(HashMap::new()));
    let key = (w.clone(), k);
    if let Some(t) = cache.read().expect("deshuffle cache poisoned").get(&key) {
        return Ok(t.clone());
    }
    let table = Arc::new(compute_deshuffles(w, k));
    let mut guard = cache.write().expect("deshuffle cache poisoned");
    Ok(guard.entry(key).or_insert(table).clone())
}

fn compute_deshuffles(w: &Word, k: usize) -> DeshuffleTable {
    let m = w.len();
    let mut counts: BTreeMap<Vec<Word>, u64> = BTreeMap::new();
    let mut labels = vec![0usize; m];
    let mut used = vec![0usize; k];
    assign(w, k, 0, &mut labels, &mut used, &mut counts);
    DeshuffleTable {
        word: w.clone(),
        arity: k,
        tuples: counts
            .into_iter()
            .map(|(parts, multiplicity)| Deshuffle {
                parts,
                multiplicity,
            })
            .collect(),
    }
}

fn assign(
    w: &Word,
    k: usize,
    pos: usize,
    labels: &mut [usize],
    used: &mut [usize],
    counts: &mut BTreeMap<Vec<Word>, u64>,
) {
    let m = w.len();
    let empty_blocks = used.iter().filter(|&&c| c == 0).count();
    if m - pos < empty_blocks {
        return;
    }
    if pos == m {
        let mut parts = vec![Word::empty(); k];
        for (p, &b) in labels.iter().enumerate() {
            parts[b].push(w.get(p));
        }
        *counts.entry(parts).or_insert(0) += 1;
        return;
    }
    for b in 0..k {
        labels[pos] = b;
        used[b] += 1;
        assign(w, k, pos + 1, labels, used, counts);
        used[b] -= 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_tables() {
        let t = deshuffles(&Word::from([1, 2]), 2).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t.contains(&[Word::from([1]), Word::from([2])]));
        assert!(t.contains(&[Word::from([2]), Word::from([1])]));

        let t = deshuffles(&Word::from([1, 1]), 2).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.tuples[0].multiplicity, 2);

        assert_eq!(deshuffles(&Word::from([1, 2, 3]), 2).unwrap().len(), 6);
        let t = deshuffles(&Word::from([1, 2, 3]), 1).unwrap();
        assert_eq!(t.tuples, vec![Deshuffle { parts: vec![Word::from([1, 2, 3])], multiplicity: 1 }]);
    }

    #[test]
    fn arity_out_of_range() {
        assert!(deshuffles(&Word::from([1, 2]), 0).is_err());
        assert!(deshuffles(&Word::from([1, 2]), 3).is_err());
        assert!(deshuffles(&Word::empty(), 1).is_err());
    }

    #[test]
    fn multiplicity_matches_shuffle_coefficient() {
        let w = Word::from([1, 2, 1, 1]);
        for k in 1..=w.len() {
            for t in &deshuffles(&w, k).unwrap().tuples {
                let total: u64 = shuffle_many(&t.parts)
                    .into_iter()
                    .filter(|(x, _)| *x == w)
                    .map(|(_, m)| m)
                    .sum();
                assert_eq!(total, t.multiplicity, "{:?}", t.parts);
                assert_eq!(t.parts.iter().map(Word::len).sum::<usize>(), w.len());
            }
        }
    }

    #[test]
    fn permuted_tuples_are_members() {
        let w = Word::from([2, 1, 3, 1]);
        let t = deshuffles(&w, 3).unwrap();
        for d in &t.tuples {
            let mut rev = d.parts.clone();
            rev.reverse();
            assert!(t.contains(&rev));
        }
    }
}
