//! Linear algebra building blocks: sparse storage, banded factorization and
//! dense symmetric helpers.

pub mod banded;
pub mod dense;
pub mod sparse;

pub use banded::BandedLdlt;
pub use dense::{generalized_eigen, procrustes, sym_eigen_sorted};
pub use sparse::{CsrMatrix, SparsityPattern};
