//! Finite-horizon LQ boundary control for coupled parabolic-hyperbolic
//! models, with an interface trace-regularity laboratory.
//!
//! The toolkit assembles two discrete models of a fluid coupled to an elastic
//! solid across a fixed interface (a 1D heat-wave analogue and a 2D
//! Stokes-elasticity reduction), solves the finite-horizon LQ problem by a
//! backward Differential Riccati Equation with feedback synthesis, validates
//! the synthesis against an independent open-loop conjugate-gradient
//! minimizer, and measures the interface trace regularity of the free
//! dynamics (singular-estimate exponents, L_p trace norms, gain refinement
//! growth).
//!
//! Entry points:
//! - [`heatwave::assemble_heatwave`] / [`stokes_lame`] for the models,
//! - [`state_space`] for stepping, the u = u1 + u2 splitting, and
//!   component-wise fractional smoothing,
//! - [`riccati::dre_solve_backward`] and [`riccati::closed_loop_simulate`]
//!   for the synthesis,
//! - [`oracle::minimize_cg`] for the open-loop ground truth,
//! - [`trace_lab`] for the regularity studies,
//! - [`io`] for configs, Matrix Market exports, reports, and plots.
//!
//! The `examples/` directory has one runnable example per capability; the
//! `fsilq` binary drives full experiments from a config file.

pub mod error;
pub mod heatwave;
pub mod io;
pub mod lyapunov;
pub mod operators;
pub mod oracle;
pub mod riccati;
pub mod state_space;
pub mod stokes_lame;
pub mod tolerances;
pub mod trace_lab;

pub use error::{Error, Result};
pub use operators::{IndexMap, StateVector, SystemOperators};
