//! Spectra of Gram matrices built from Hellinger affinities between
//! uniformly random probability measures, and their scaled
//! Marchenko–Pastur limit.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod eigen;
pub mod error;
pub mod experiments;
pub mod freeprob;
pub mod gram;
pub mod limit;
pub mod linalg;
pub mod measures;
pub mod quadrature;
pub mod stream;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/measures.md")]
    mod measures {}
    #[doc = include_str!("../../../book/src/gram.md")]
    mod gram {}
    #[doc = include_str!("../../../book/src/limit.md")]
    mod limit {}
    #[doc = include_str!("../../../book/src/freeprob.md")]
    mod freeprob {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
