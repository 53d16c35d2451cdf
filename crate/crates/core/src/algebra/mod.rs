//! Truncated shuffle Hopf algebra on words and its character group.
//!
//! Words index every graded structure in the crate. [`TruncatedTensor`]
//! carries both tensors `sum c_w e_w` and dual functionals; the shuffle
//! product, deconcatenation-based convolution, antipode and the truncated
//! exponential/logarithm act on it. [`GroupTensor`] marks values that are
//! truncated characters. [`deshuffles`] enumerates the tuples `(u_1..u_k)`
//! whose shuffle product contains a given word.

mod shuffle;
mod tensor;
mod word;

pub use shuffle::{deshuffles, shuffle_many, shuffle_words, Deshuffle, DeshuffleTable};
pub use tensor::{CharacterCheck, GroupTensor, TruncatedTensor};
pub use word::{count_words, words_of_length, words_up_to, Word};
