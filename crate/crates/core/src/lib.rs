//! Maximum-likelihood estimation for linear regression when the measurement
//! matrix is random: `y = (H + E) x + eps` with known mean `H`, i.i.d.
//! Gaussian perturbation `E`, and white Gaussian noise `eps`.
//!
//! The likelihood couples the residual to `||x||` through the equivalent
//! noise variance `sigma_e2 ||x||^2 + sigma_eps2`. The solver reduces the
//! problem to the SVD basis of `H`, lifts it to a convex program, and solves
//! the KKT system either in closed form or by bisecting a monotone scalar
//! dual function; it covers overdetermined, underdetermined, and
//! rank-deficient designs.
//!
//! Crate layout:
//!
//! * [`model`]: domain types and JSON instance/solution files;
//! * [`estimator`]: spectral reduction, case dispatch, bisection, recovery;
//! * [`baselines`]: least squares, oracle least squares, total least
//!   squares, and the Cramér–Rao bound;
//! * [`verify`]: KKT residual checks, a brute-force grid oracle, convexity
//!   checks, and seeded per-case instance generation;
//! * [`montecarlo`]: reproducible experiment presets with CSV/JSON output;
//! * [`builtin`]: bundled reference instances with recorded outputs.
//!
//! # Example
//!
//! ```
//! use grvml_core::{solve, ProblemInstance, SolverOptions};
//! use nalgebra::{DMatrix, DVector};
//!
//! let h = DMatrix::from_row_slice(4, 2, &[
//!     -1.92, -0.05, 0.74, -0.04, -2.36, -0.66, -0.61, -0.30,
//! ]);
//! let y = DVector::from_column_slice(&[-0.85, 0.45, -1.27, -0.82]);
//! let instance = ProblemInstance::new(h, y, 0.10, 0.03)?;
//!
//! let solution = solve(&instance, &SolverOptions::default())?;
//! assert_eq!(solution.case_tag, grvml_core::model::CaseTag::FullRankNuPositive);
//! assert!((solution.x_hat[0] - 0.4517).abs() < 1e-3);
//! assert!(solution.certificate.kkt_residual_max < 1e-10);
//! # Ok::<(), grvml_core::Error>(())
//! ```

pub mod baselines;
pub mod builtin;
pub mod error;
pub mod estimator;
pub mod model;
pub mod montecarlo;
pub mod verify;

pub use error::{Error, Result};
pub use estimator::{solve, SolverOptions};
pub use model::{load_instance, save_solution, MlSolution, ProblemInstance};
