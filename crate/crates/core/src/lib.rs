//! Downlink precoder design for user-centric network (UCN) massive MIMO.
//!
//! The crate solves the per-BS power constrained weighted sum-rate (WSR)
//! problem with a dissipative constrained Hamiltonian iteration (RATTLE with
//! conformal damping) and ships the usual reference solvers next to it: RZF,
//! WMMSE with per-BS bisection, and projected GD/NAGD with Armijo search.
//!
//! Module map:
//!
//! * [`channel`]: synthetic multi-site topologies, channels, RSRP and
//!   user-centric serving clusters.
//! * [`embedding`]: complex to real embedding and the sparse stacked precoder
//!   layout shared by every solver.
//! * [`objective`]: per-UT rates, the WSR objective, its analytic gradient
//!   and a finite-difference oracle.
//! * [`symplectic`]: the dissipative RATTLE solver.
//! * [`baselines`]: RZF, WMMSE, GD and NAGD.
//! * [`harness`]: scenario config, batch runs, CSV output and the
//!   operation-count probe.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod channel;
pub mod embedding;
mod error;
pub mod harness;
pub mod objective;
pub mod symplectic;

pub use error::{Error, Result};

pub use num_complex::Complex64 as C64;

pub use channel::{ChannelSet, ClusterMap, RsrpTable, Topology};
pub use embedding::{
    BlockVector, MomentumState, PairLayout, PowerBudget, PrecoderState, RealChannel,
};
pub use objective::{OpCounter, RateTerms, Weights, WsrObjective};
pub use symplectic::{SolveResult, SolverConfig, SymplecticStepRecord};
