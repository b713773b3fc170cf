//! Group-equivariant convolutional wavefunctions for frustrated J1-J2
//! Heisenberg models, trained by variational Monte Carlo and checked against
//! exact diagonalization.

pub mod ansatz;
pub mod checkpoint;
pub mod config;
pub mod ed;
pub mod gcnn;
pub mod heisenberg;
pub mod lattice;
pub mod sampler;
pub mod spectral;
pub mod spin;
pub mod symmetry;
pub mod vmc;
