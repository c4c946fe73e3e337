//! Finite operator learning for steady heat conduction and plane-stress elasticity.
//!
//! A feed-forward network maps a low-dimensional design vector (Fourier
//! coefficients of a conductivity or source field, nodal conductivities, or
//! boundary displacements) to nodal solution values on a structured quad
//! mesh. Training is data-free: the losses are the finite element energy or
//! residual of the predicted field, plus a Sobolev term asking the residual
//! to stay stationary with respect to the design. The same FEM machinery
//! provides reference solutions, adjoint sensitivities, and the inner solves
//! of a gradient-projection design optimizer.

pub mod bc;
pub mod cli;
pub mod config;
pub mod elasticity;
pub mod error;
pub mod io;
pub mod linalg;
pub mod losses;
pub mod mesh;
pub mod nn;
pub mod optim;
pub mod param;
pub mod sensitivity;
pub mod thermal;
pub mod training;

pub use error::{FolError, Result};
