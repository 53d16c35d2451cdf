use std::cmp::Ordering;
use std::fmt;

use smallvec::SmallVec;

use crate::error::{Error, Result};

/// A word over the alphabet `{1, ..., d}`.
///
/// Letters are stored one-based. Words are ordered by length first and then
/// lexicographically, which is the canonical order used for iteration and
/// serialization everywhere in the crate.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Word(SmallVec<[u16; 8]>);

impl Word {
    /// The empty word.
    pub fn empty() -> Self {
        Word(SmallVec::new())
    }

    pub fn letter(i: usize) -> Self {
        let mut v = SmallVec::new();
        v.push(i as u16);
        Word(v)
    }

    pub fn from_letters<I: IntoIterator<Item = usize>>(letters: I) -> Self {
        Word(letters.into_iter().map(|l| l as u16).collect())
    }

    /// Builds a word, checking every letter lies in `1..=dim`.
    pub fn checked(letters: &[usize], dim: usize) -> Result<Self> {
        for &l in letters {
            if l == 0 || l > dim {
                return Err(Error::InvalidLetter { letter: l, dim });
            }
        }
        Ok(Self::from_letters(letters.iter().copied()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn letters(&self) -> impl ExactSizeIterator<Item = usize> + DoubleEndedIterator + '_ {
        self.0.iter().map(|&l| l as usize)
    }

    pub fn get(&self, i: usize) -> usize {
        self.0[i] as usize
    }

    pub fn first(&self) -> Option<usize> {
        self.0.first().map(|&l| l as usize)
    }

    pub fn last(&self) -> Option<usize> {
        self.0.last().map(|&l| l as usize)
    }

    pub fn max_letter(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0) as usize
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }

    pub fn push(&mut self, letter: usize) {
        self.0.push(letter as u16);
    }

    /// `i` followed by `self`.
    pub fn prepend(&self, letter: usize) -> Word {
        let mut v = SmallVec::with_capacity(self.0.len() + 1);
        v.push(letter as u16);
        v.extend_from_slice(&self.0);
        Word(v)
    }

    /// `self` followed by `i`.
    pub fn append(&self, letter: usize) -> Word {
        let mut w = self.clone();
        w.push(letter);
        w
    }

    pub fn reversed(&self) -> Word {
        Word(self.0.iter().rev().copied().collect())
    }

    /// Subword `self[a..b]`.
    pub fn slice(&self, a: usize, b: usize) -> Word {
        Word(SmallVec::from_slice(&self.0[a..b]))
    }

    /// All `|w| + 1` splittings `w = uv`, from `(ε, w)` to `(w, ε)`.
    pub fn deconcat(&self) -> Vec<(Word, Word)> {
        (0..=self.len())
            .map(|k| (self.slice(0, k), self.slice(k, self.len())))
            .collect()
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.letters().collect()
    }
}

impl Ord for Word {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.as_slice().cmp(other.0.as_slice()))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return write!(f, "ε");
        }
        write!(f, "(")?;
        for (k, l) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{l}")?;
        }
        write!(f, ")")
    }
}

impl From<&[usize]> for Word {
    fn from(letters: &[usize]) -> Self {
        Word::from_letters(letters.iter().copied())
    }
}

impl<const K: usize> From<[usize; K]> for Word {
    fn from(letters: [usize; K]) -> Self {
        Word::from_letters(letters)
    }
}

/// Every word over `{1..d}` of length exactly `len`, in lexicographic order.
pub fn words_of_length(d: usize, len: usize) -> Vec<Word> {
    let mut out = vec![Word::empty()];
    for _ in 0..len {
        let mut next = Vec::with_capacity(out.len() * d);
        for w in &out {
            for i in 1..=d {
                next.push(w.append(i));
            }
        }
        out = next;
    }
    out
}

/// Every word over `{1..d}` of length at most `level`, in canonical order.
pub fn words_up_to(d: usize, level: usize) -> Vec<Word> {
    (0..=level).flat_map(|k| words_of_length(d, k)).collect()
}

/// Number of words of length at most `level` over `d` letters.
pub fn count_words(d: usize, level: usize) -> usize {
    (0..=level).map(|k| d.pow(k as u32)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_is_length_then_lex() {
        let mut ws = vec![
            Word::from([2, 1]),
            Word::from([2]),
            Word::empty(),
            Word::from([1, 2]),
            Word::from([1]),
        ];
        ws.sort();
        assert_eq!(
            ws,
            vec![
                Word::empty(),
                Word::from([1]),
                Word::from([2]),
                Word::from([1, 2]),
                Word::from([2, 1]),
            ]
        );
        assert_eq!(words_up_to(2, 2), ws[..3].iter().cloned().chain([
            Word::from([1, 1]),
            Word::from([1, 2]),
            Word::from([2, 1]),
            Word::from([2, 2]),
        ]).collect::<Vec<_>>());
    }

    #[test]
    fn deconcat_lists_all_splittings() {
        let w = Word::from([1, 2]);
        assert_eq!(
            w.deconcat(),
            vec![
                (Word::empty(), Word::from([1, 2])),
                (Word::from([1]), Word::from([2])),
                (Word::from([1, 2]), Word::empty()),
            ]
        );
        assert_eq!(Word::empty().deconcat(), vec![(Word::empty(), Word::empty())]);
        assert_eq!(Word::from([1, 1, 2]).deconcat().len(), 4);
    }

    #[test]
    fn concat_lengths_add() {
        let v = Word::from([1, 3]);
        let w = Word::from([2]);
        assert_eq!(v.concat(&w).len(), 3);
        assert_eq!(Word::empty().concat(&w), w);
        assert_eq!(w.concat(&Word::empty()), w);
    }

    #[test]
    fn checked_rejects_bad_letters() {
        assert!(Word::checked(&[1, 3], 2).is_err());
        assert!(Word::checked(&[0], 2).is_err());
        assert!(Word::checked(&[2, 1], 2).is_ok());
        assert_eq!(count_words(3, 5), 364);
    }
}
