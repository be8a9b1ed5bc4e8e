//! Coupled multi-component Korteweg–de Vries systems and their emergence from
//! multi-component nonlinear Schrödinger dynamics.
//!
//! The crate is organised bottom-up:
//!
//! - [`coupling`]: the universal all-to-all coupling tensors `N`, `L`, `R`
//!   generated by a set of weights and two symmetric scalars, together with
//!   the algebraic consistency checks they must satisfy.
//! - [`grid`]: periodic grids, Fourier differentiation, quadrature and
//!   alias-free products.
//! - [`kdv`]: momentum and Hamiltonian functionals of the coupled system, its
//!   right-hand sides in standard and Hamiltonian form, and an
//!   integrating-factor RK4 time stepper.
//! - [`mnls`]: condensate ensembles, plane-wave backgrounds, Strang split-step
//!   integration and the Madelung decomposition.
//! - [`eigen`]: the linearised acoustic operator, its eigendecomposition and
//!   the closed-form structure of repeated sound speeds.
//! - [`reduction`]: embedding KdV profiles into a condensate background,
//!   projecting them back out, and measuring convergence in the amplitude
//!   parameter.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coupling;
pub mod eigen;
mod error;
pub mod grid;
pub mod kdv;
pub mod mnls;
pub mod reduction;

pub use error::{Error, Result};
