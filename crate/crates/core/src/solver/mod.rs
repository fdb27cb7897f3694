//! Expectation backends, the one-period objectives and the backward recursion.

mod backend;
mod objective;
mod optimize;
mod recursion;

pub use backend::{Backend, ExpectationBackend, ScenarioSet};
pub use objective::{eval_h, eval_h_grad, eval_linear, grad_h, hess_h, NextCosts, Sign};
pub use optimize::{default_init, minimize_over_cone, MinimizeDiagnostics, Minimizer, OptimizerKind, SolverOptions};
pub use recursion::{backward_recursion, default_zero_tol, dual_value, value_function, PeriodSolution, RecursionTable};
