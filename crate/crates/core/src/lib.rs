//! Symmetric multi-qubit (spin-j) states as real symmetric tensors: Z-eigenvalues
//! on the unit 3-sphere, quantumness (Hilbert-Schmidt distance to the classical
//! states) and the ensemble experiments relating the two.

pub mod classicality;
pub mod combinatorics;
pub mod error;
pub mod experiments;
pub mod rng;
pub mod spin;
pub mod tensor;
pub mod zeig;

pub use error::{Error, Result};
pub use spin::{CoherentDirection, Spin, SpinState};
pub use tensor::{Rotation4, SymmetricTensor};
