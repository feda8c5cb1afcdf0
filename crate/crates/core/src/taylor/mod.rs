//! Structured truncated Taylor maps and their composition.

mod chain;
mod map;
mod multi_index;

pub use chain::{apply_chain, degree_bound, ChainStage, MapChain};
pub use map::{EvalScratch, StructuredTaylorMap};
pub use multi_index::{
    basis_len, binomial, enumerate_multi_indices, monomial_vector, BasisBlock, MonomialBasis, MonomialVector,
    MultiIndex,
};
