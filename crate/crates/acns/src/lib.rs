//! Spectral workbench for a stochastic two-phase channel flow with
//! Navier-slip boundary control.
//!
//! The computational domain is the periodic channel `[0,2pi) x [0,1]`:
//! Fourier collocation in the periodic direction, Legendre-Gauss-Lobatto
//! collocation across the channel. Velocities live in an exactly
//! divergence-free streamfunction space; non-homogeneous boundary data is
//! carried by a stationary Stokes lifting field. On top of that sit a
//! coupled velocity/phase Galerkin eigenbasis, a semi-implicit
//! Euler-Maruyama integrator for the stochastic dynamics, energy-balance
//! monitors, a functional-inequality audit suite and a derivative-free
//! boundary-control optimizer.

pub mod audit;
pub mod basis;
pub mod config;
pub mod control;
pub mod domain;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod io;
pub mod lifting;
pub mod monitor;
pub mod noise;
pub mod potential;
pub mod spaces;
pub mod spline;

pub use error::{Error, Result};
