//! Finite-horizon Markov decision processes.
//!
//! The crate is organised around one dense model type, [`FiniteHorizonMdp`],
//! and the tables that live on it ([`QTable`], [`StageValueFunction`],
//! [`NonstationaryPolicy`]). On top of that sit:
//!
//! * [`dp`]: exact backward induction in Q-values, the ground truth.
//! * [`learner`]: finite-horizon Q-learning driven by a generative sampler.
//! * [`diagnostics`]: numerical checks of the mean-field ODE behind the
//!   learner's convergence (fixed points, Lipschitz ratios, Euler flows,
//!   martingale noise).
//! * [`random_mdp`] and [`grid`]: the two problem generators used by the
//!   experiment harness.
//!
//! Inner loops (per-row sweeps, Monte-Carlo episodes, probe trials) run on
//! rayon when the `parallel` feature is enabled. Every parallel loop draws its
//! randomness from a sub-stream keyed by its index, so results are bitwise
//! identical to [`Execution::Sequential`].

pub mod diagnostics;
pub mod dp;
mod error;
mod exec;
pub mod grid;
pub mod learner;
mod mdp;
pub mod policy;
pub mod random_mdp;
pub mod rng;
mod table;

pub use error::{Error, Result};
pub use exec::Execution;
pub use mdp::{FiniteHorizonMdp, StageLayer, ValidationReport, Violation, ROW_SUM_TOLERANCE};
pub use table::{NonstationaryPolicy, QTable, StageValueFunction};
