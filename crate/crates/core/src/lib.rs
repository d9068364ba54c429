//! Variational toolkit for pseudo-relativistic Hartree-Fock and
//! Hartree-Fock-Bogoliubov ground states of gravitating fermions.
//!
//! Orbitals live on a periodic spectral grid ([`grid`]) and are stored as
//! l2-normalized coefficient arrays ([`states`]): the physical orbital is
//! `c / h^{3/2}`. Dilations therefore only change the box length.
//! [`functionals`] evaluates energies and Gagliardo-Nirenberg quotients with
//! their gradients, [`minimizer`] descends them over orthonormal frames,
//! [`analysis`] runs the scaling and blow-up experiments and
//! [`thomas_fermi`] solves the radial Thomas-Fermi problem.

pub mod analysis;
pub mod check;
pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod functionals;
pub mod grid;
pub mod minimizer;
pub mod report;
pub mod states;
pub mod thomas_fermi;

pub use error::{Error, Result};

pub type C64 = num_complex::Complex64;

/// Threshold coupling of the Hardy-Kato inequality, `4/pi`.
pub const HARDY_KATO_COUPLING: f64 = 4.0 / std::f64::consts::PI;

/// Reference value of the Thomas-Fermi constant.
pub const TAU_C_REFERENCE: f64 = 2.677;
