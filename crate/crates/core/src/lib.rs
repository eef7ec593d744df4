//! Variance-reduced stochastic optimization for regularized empirical risk
//! minimization.
//!
//! The problem handled throughout is the composite objective
//!
//! ```text
//! F(x) = (1/n) Σ_i f_i(x) + g(x),    g(x) = (λ1/2)‖x‖² + λ2‖x‖₁
//! ```
//!
//! where each `f_i` is a logistic or squared loss on one sparse example.
//! The crate provides:
//!
//! * [`dataset`]: LIBSVM parsing, row normalization and seeded synthetic problems.
//! * [`objective`]: losses, gradients, proximal operators and Lipschitz constants.
//! * [`estimator`]: SVRG-style gradient estimators and exact variance diagnostics.
//! * [`optimizers`]: VR-SGD, SVRG, Prox-SVRG, Katyusha, SGD and full proximal gradient.
//! * [`harness`]: reference optima, convergence traces, learning-rate sweeps and CSV output.
//!
//! Full-gradient and objective reductions are split into a fixed number of
//! contiguous chunks combined by a fixed pairwise tree, so results depend only
//! on the chunk count and never on thread scheduling. With the `parallel`
//! feature (on by default) chunks are evaluated on the rayon pool.

pub mod dataset;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod objective;
pub mod optimizers;
pub mod parallel;

pub use dataset::{SparseDataset, SparseVector};
pub use error::{Error, Result};
pub use estimator::{BatchIndex, SnapshotContext, VarianceDiag};
pub use harness::{ReferenceSolution, Trace, TraceRecord};
pub use objective::{CompositeObjective, LipschitzInfo, LossKind, Regularizer};
pub use optimizers::{Algo, OptimizerSpec, RunLog, SnapshotRule, StartRule, UpdateMode};
pub use parallel::{Exec, Reduction};
