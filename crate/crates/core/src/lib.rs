//! Exact diagonalization of a disordered two-leg transverse-field Ising ladder
//! and its dual XX + ZZ spin chain.
//!
//! The crate builds dense Hamiltonians in symmetry-resolved bases, computes
//! adjacent-gap-ratio statistics, evolves quenches exactly through the
//! spectral decomposition and evaluates quasiparticle-resolved observables.
//! Disorder ensembles run on a rayon pool when the `parallel` feature is on.

// negated float comparisons are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod duality;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod hamiltonians;
pub mod hilbert;
pub mod rotframe;
pub mod spectra;

pub use error::{Error, Result};
