//! Pseudo-spectral tools for zeroth-order pseudo-differential operators on
//! the 2-torus.
//!
//! The library covers three connected computations:
//!
//! * forced evolution `i u_t - P u = f exp(-i w0 t)` integrated in Fourier
//!   space with RK4 or ETDRK4, which develops internal-wave attractors,
//! * eigenpairs of the viscous operator `P - w0 + i nu Laplacian` for a
//!   decreasing sequence of viscosities, tracked as trajectories in the
//!   complex plane,
//! * the energy-manifold geometry (sheets of `r beta(x) = sin eta` in the
//!   3-torus) and the characteristic flows whose sinks locate the attractors.
//!
//! Everything is built on a centered Fourier layout: both grid values and
//! spectral coefficients live on an `N x N` box indexed by
//! `j, k = -N/2 .. N/2-1`.

pub mod commands;
pub mod config;
pub mod eigen;
pub mod evolution;
pub mod expr;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod operators;
pub mod tracker;

pub use num_complex::Complex64;
