//! Precision bounds for probabilistic (abstention-based) phase estimation of
//! n dephased qubits.
//!
//! The crate decomposes a permutation-invariant probe under local dephasing
//! into total-spin blocks, solves the per-block filtered-profile optimization,
//! assembles the global uncertainty/success tradeoff curve, and cross-checks
//! everything against closed-form asymptotics, a dense computational-basis
//! oracle, a semidefinite relaxation, and Monte Carlo simulation of the
//! estimation protocol.
//!
//! # Layout
//!
//! - [`probes`] — symmetric probe states (multicopy, optimal Gaussian, file I/O)
//! - [`spinblocks`] — block decomposition of the dephased probe
//! - [`blocksolver`] — box-constrained per-block minimization
//! - [`tradeoff`] — success-probability allocation across blocks
//! - [`asymptotics`] — closed-form large-n formulas
//! - [`scavenge`] — estimates recovered from discarded outcomes
//! - [`simulate`] — Monte Carlo sampling of the covariant measurement
//! - [`oracle`] — dense small-n ground truth and an SDP cross-check

pub mod asymptotics;
pub mod blocksolver;
pub mod error;
pub mod logspace;
pub mod noise;
pub mod oracle;
pub mod probes;
pub mod scavenge;
pub mod simulate;
pub mod spin;
pub mod spinblocks;
pub mod tradeoff;
pub(crate) mod tridiag;

pub use blocksolver::BlockSolution;
pub use error::{Error, Result};
pub use noise::NoiseModel;
pub use probes::SymmetricProbe;
pub use spin::HalfSpin;
pub use spinblocks::{BlockHamiltonian, Decomposition, DephasingBlock};
pub use tradeoff::{TradeoffCurve, TradeoffPoint};
