//! Simulation and verification toolkit for the non-isothermal simplified
//! Ericksen-Leslie model of nematic liquid crystal flow.
//!
//! The crate is organised bottom-up:
//!
//! - [`material`]: free energies, thermodynamic relations and the
//!   consistency audit of the parameter functions.
//! - [`stress`]: point-wise constitutive algebra (Newton, Ericksen and Leslie
//!   stresses, heat flux, entropy production).
//! - [`symbolcheck`]: normal ellipticity and Lopatinskii-Shapiro checks of the
//!   principal linearization, plus the equilibrium decay spectrum.
//! - [`solver`]: 2D MAC finite-difference integrator for velocity,
//!   temperature and director.
//! - [`diagnostics`]: conserved and monotone functionals, decay-rate fits and
//!   the second variation of the entropy.
//! - [`cli`]: configuration parsing and the `simulate`, `check`,
//!   `analyze-symbol` and `report` entry points.

// Negated comparisons are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod linalg;
pub mod material;
pub mod rng;
pub mod solver;
pub mod stress;
pub mod symbolcheck;

pub use material::{FreeEnergy, MaterialModel, ParameterRule, ParameterSet, ThermoState};
