//! Adaptive stochastic gradient descent ascent for nonconvex-strongly-concave
//! minimax problems `min_x max_y E[f(x, y; ξ)]`.
//!
//! The two main solvers are AdaGDA (momentum estimator) and VR-AdaGDA
//! (STORM estimator), both taking metric-weighted proximal steps on `x` and
//! `y` and then averaging with the previous iterate.
//!
//! ```
//! use minimax_gda::problems::{QuadraticMinimax, QuadraticParams};
//! use minimax_gda::solvers::{run, SolverConfig};
//!
//! let problem = QuadraticMinimax::generate(&QuadraticParams::default()).unwrap();
//! let config = SolverConfig { iterations: 100, ..Default::default() };
//! let out = run(&problem, &config, 42).unwrap();
//! assert_eq!(out.record.rows.last().unwrap().t, 101);
//! ```

pub mod adapt;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod problems;
pub mod rng;
pub mod solvers;
pub mod vector;

pub use error::{Error, Result};
pub use vector::Vector;
