//! Spectral geometry with the Hamiltonian operator `H = -Δ + μV` on
//! triangle meshes and 1-D intervals.
//!
//! The crate is organised bottom-up:
//!
//! * [`mesh`] – triangle meshes, file formats, generators, graph geodesics and noise models.
//! * [`fem`] – cotangent stiffness, lumped mass, potentials and the Hamiltonian pencil.
//! * [`eigen`] – generalized symmetric eigensolvers (dense, shift-invert block Lanczos,
//!   Woodbury low-rank updates) and perturbation predictions.
//! * [`spectral`] – diffusion, heat kernels, HKS/WKS, nodal domains and residual bounds.
//! * [`optim`] – potential optimization through eigenvector perturbation gradients.
//! * [`compression`] – spectral geometry coding in Laplacian and Hamiltonian bases.
//! * [`cmm`] – compressed manifold modes by reweighted Hamiltonian eigenproblems.
//! * [`matching`] – potentials for correspondence, descriptor matching and evaluation.

pub mod cmm;
pub mod compression;
pub mod eigen;
pub mod error;
pub mod fem;
pub mod matching;
pub mod mesh;
pub mod optim;
pub mod spectral;

pub use error::{Error, Result};
pub use eigen::Spectrum;
pub use fem::{DiagOperator, Pencil, PotentialField, SparseSymOperator};
pub use mesh::TriMesh;
