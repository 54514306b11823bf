//! Progressive learning and sharing (PLS) for distributed stochastic linear
//! bandits over finite-capacity channels.
//!
//! `M` agents share a common unknown reward vector and talk to a central
//! server through bit-limited uplink and downlink channels. Agents learn the
//! vector one "bit" at a time in epochs of exponentially growing length and
//! exchange clipped, quantized, unary-coded differential updates. The sparse
//! variant replaces the orthonormal exploration basis with a random sign
//! sensing design and recovers the vector with a LASSO estimate.
//!
//! Module map:
//!
//! * [`model`]: bandit instance, reward draws, instantaneous regret.
//! * [`quant`]: clipping plus stochastic and deterministic grid quantizers.
//! * [`codec`]: unary and fixed-width wire encodings, channel ledger.
//! * [`schedule`]: every per-epoch policy parameter.
//! * [`pls`]: agent and server state machines.
//! * [`sparse`]: sensing design, restricted-eigenvalue diagnostics, LASSO.
//! * [`sim`]: lockstep runs, baselines, replication batches.
//! * [`audit`]: log-log scaling fits with bootstrap intervals.

pub mod audit;
pub mod codec;
pub mod error;
pub mod model;
pub mod pls;
pub mod quant;
pub mod rng;
pub mod schedule;
pub mod sim;
pub mod sparse;
mod timeline;
pub mod vector;

pub use error::{AuditError, CodecError, ModelError, ProtocolError, QuantError, ScheduleError, SimError};
