//! Robust nonlinear Kalman smoothing with Student's t error models.
//!
//! The crate estimates state trajectories of discrete-time nonlinear systems
//! by minimizing a maximum-a-posteriori objective over the whole trajectory.
//! Three objectives are provided: the classical Gaussian (least-squares)
//! smoother and two heavy-tailed variants that place a Student's t density on
//! the measurement errors (`t_robust`, for outlier-contaminated data) or on
//! the process innovations (`t_trend`, for tracking unmodeled jumps).
//!
//! All three are minimized by the same damped generalized Gauss-Newton loop
//! ([`solver::smooth`]): each iteration solves one block-tridiagonal linear
//! system (O(n³·N) per iteration via [`block_tridiag`]) and backtracks along
//! the resulting direction until an Armijo-style decrease holds.
//!
//! [`experiments`] and [`dataset`] hold the Monte Carlo studies and the file
//! formats used by the `tksmooth` command-line binary.

pub mod block_tridiag;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod models;
pub mod noise;
pub mod objectives;
pub mod solver;
