//! Two interacting bosons in a one-dimensional quasiperiodic (Aubry-André)
//! chain with onsite Hubbard interaction.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: parameters, the cosine potential, the symmetric pair basis and
//!   Hamiltonian assembly for one and two particles.
//! - [`linalg`]: dense and spectrum-slicing symmetric eigensolvers.
//! - [`spectral`]: eigenstate observables (PDF, participation number),
//!   miniband classification and the max-participation sweep.
//! - [`dynamics`]: Chebyshev propagation of wave packets and transport fits.
//! - [`fockspace`]: the noninteracting two-particle eigenbasis, renormalized
//!   energies, overlap integrals and resonance estimates.
//! - [`scan`]: the (U, λ) phase-diagram scan with checkpointing.
//! - [`io`]: run configuration and every file the CLI writes.
//! - [`cli`]: the subcommands of the `quasitip` binary.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod fockspace;
pub mod io;
pub mod linalg;
pub mod model;
pub mod scan;
pub mod spectral;

pub use error::{Error, Result};
pub use model::{Boundary, ModelParams, PairBasis, SparseSymMatrix};
