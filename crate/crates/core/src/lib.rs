//! Monte-Carlo SAGE receiver for uplink asynchronous DS-CDMA.
//!
//! The crate simulates the discrete-time observation model of an asynchronous
//! BPSK DS-CDMA uplink over flat fading and implements an iterative receiver
//! that jointly estimates each user's complex channel coefficient and
//! transmission delay while producing soft symbol decisions. Expectations over
//! the unknown data are taken with a Gibbs sampler and Rao-Blackwellized; the
//! parameter updates follow the space-alternating generalized EM schedule (one
//! user per iteration).
//!
//! Module map:
//!
//! - [`sysmodel`] signatures, delay-shifted spreading vectors, scenario draws and
//!   received-vector simulation.
//! - [`gibbs`] the symbol sampler and the soft statistics it feeds the E-step.
//! - [`sage`] branch metrics, the delay and coefficient M-steps and the outer loop.
//! - [`bounds`] modified Cramér-Rao bounds and Gabor bandwidth.
//! - [`baselines`] MMSE separate estimation, the known-delay receiver and the
//!   single-user bound.
//! - [`harness`] experiment specs, sweeps and CSV/JSON output.

pub mod baselines;
pub mod bounds;
mod error;
pub mod gibbs;
pub mod harness;
pub mod sage;
pub mod seed;
pub mod sysmodel;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

pub use baselines::{mmse_se_init, single_user_bound, InitEstimate};
pub use bounds::{DelayBound, McrbReport};
pub use gibbs::{ChainState, EffectiveModel, SoftStatistics};
pub use harness::{ExperimentSpec, SweepResult};
pub use sage::{run_receiver, ParameterState, ReceiverOptions, ReceiverOutput};
pub use sysmodel::{
    ChannelModel, DelayIndex, Pilots, ReceivedVector, ScenarioTruth, SignatureSet, SymbolFrame,
    SystemConfig,
};
