//! Dissipative dynamics of the extended Dicke model.
//!
//! The crate compares three ways of attaching Lindblad dissipation to the
//! superradiant phase of the extended Dicke model:
//!
//! * **bare** dissipators built from the original photon and spin lowering
//!   operators, which drive the system to stationary points that sit above
//!   the energy minimum;
//! * an **ad hoc** dissipator shifted by the photon condensate and rotated
//!   onto the symmetry-broken minimum;
//! * **dressed** dissipators built from the Bogoliubov polaritons of the
//!   superradiant frame, weighted by bath-derived effective viscosities.
//!
//! Modules, bottom-up:
//!
//! * [`model`] — parameters, semiclassical energy, phase and minima;
//! * [`diag`] — polariton diagonalization, Bogoliubov and dissipator
//!   coefficients, effective viscosities;
//! * [`semiclassical`] — right-hand sides for all dissipator families;
//! * [`dynamics`] — ODE integration, fixed-point refinement, convergence;
//! * [`oracle`] — truncated two-mode Lindblad evolver used as ground truth;
//! * [`cli`] — configuration, presets and the `dicke` command line.

// Validation is written as `!(x > 0.0)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod diag;
pub mod dynamics;
pub mod model;
pub mod oracle;
pub mod semiclassical;

pub use diag::{diagonalize, DiagonalizationResult};
pub use model::{Branch, ModelParams, Phase, SemiclassicalState, SrMinimum};
pub use semiclassical::DissipatorKind;
