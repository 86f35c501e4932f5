//! Variational formulas and interacting Brownian motions for dilute Bose
//! systems in a trap: scattering length, Gross-Pitaevskii and Hartree
//! energies, path-measure free energies and large-deviation rate functions.

pub mod bm;
pub mod ext;
pub mod gp;
pub mod grid;
pub mod hartree;
pub mod potentials;
mod optim;
pub mod quad;
pub mod ratefn;
pub mod scattering;

pub use ext::ExtReal;
