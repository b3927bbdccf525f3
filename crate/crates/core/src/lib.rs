//! Throughput-maximising user scheduling for multi-user edge inference over
//! model libraries whose members share parameter blocks.
//!
//! The server serves users in a sequence of batches. Each batch uploads the
//! users' inputs over an FDMA uplink, loads whatever parameter blocks of the
//! batch's model are not already resident in GPU memory, and runs one forward
//! pass. Keeping shared blocks resident between consecutive batches shortens
//! loading, so the order in which models are served matters.
//!
//! Module map:
//!
//! * [`library`]: parameter blocks, models, backbone clusters, synthetic libraries.
//! * [`radio`]: uplink rates, unit upload costs, fading, proportional bandwidth split.
//! * [`latency`]: loading, compute and memory models and the multi-batch service latency.
//! * [`instance`]: a scenario prepared for one fading realisation.
//! * [`dp`]: exact dynamic program for backbone-sharing libraries.
//! * [`greedy`]: one-step greedy scheduler for arbitrary libraries.
//! * [`oracle`]: schedule validator and exhaustive search for tiny instances.
//! * [`harness`]: scenario generation, Monte-Carlo sweeps and CSV output.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dp;
pub mod greedy;
pub mod harness;
pub mod ids;
pub mod instance;
pub mod latency;
pub mod library;
pub mod oracle;
pub mod par;
pub mod radio;
pub mod schedule;

pub use ids::{BlockId, ClusterId, ModelId, UserId};
pub use instance::{Instance, LoadMode, SolveOptions, UplinkPolicy};
pub use latency::HardwareProfile;
pub use library::{ModelLibrary, SharingKind};
pub use radio::{ChannelEnv, UserSpec};
pub use schedule::{Schedule, ScheduledBatch};

/// Absolute slack applied to every deadline comparison, in seconds.
pub const DEADLINE_SLACK_S: f64 = 1e-9;
