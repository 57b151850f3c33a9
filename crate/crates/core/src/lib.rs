//! Quickest change detection over a slotted random-access sensor network.
//!
//! `N` sensors sample their environment synchronously every `1/r` slots and
//! push each sample, as one packet, through a contention MAC towards a fusion
//! center. At a geometrically distributed slot `T` the observation
//! distribution switches from `f0` to `f1`; the fusion center must raise an
//! alarm as soon as possible after `T` subject to a false-alarm constraint.
//!
//! The crate provides:
//!
//! * [`change`] — the change-point process, observation families, and their
//!   likelihoods.
//! * [`net`] — a slot-by-slot simulator of the fork-join queueing system
//!   (per-sensor FIFOs, Bernoulli success process with uniform attribution,
//!   fusion-center sequencer) together with its observable state.
//! * [`nodm`] — network-oblivious decision making: a Shiryaev posterior over
//!   complete batches, threshold stopping at batch completion instants, and
//!   the additive delay decomposition (network + coarse sampling + decision).
//! * [`nadm`] — network-aware decision making: a per-slot Bayesian recursion
//!   on `[queue state, posterior]` that rolls samples back to their sampling
//!   epoch and forward to the current slot.
//! * [`dp`] — a value-iteration solver for tiny instances that certifies the
//!   network-state dependent threshold structure of the optimal rule.
//! * [`calib`] — Monte Carlo false-alarm/delay estimation and threshold
//!   search against a false-alarm target.
//! * [`experiments`] — sweep drivers used by the CLI and the acceptance
//!   tests (rate sweeps, node-count sweeps, decomposition checks).

pub mod calib;
pub mod change;
pub mod dp;
pub mod experiments;
pub mod nadm;
pub mod net;
pub mod nodm;
pub mod scenario;
pub mod seed;
pub mod stats;

mod episode;

pub use calib::{calibrate_threshold, estimate_metrics, DetectorKind, MetricEstimate};
pub use change::{ChangeSpec, NatureTrajectory, ObservationModel};
pub use net::{NetConfig, NetworkSim, QueueState, SensorBuffers, SlotOutcome};
pub use scenario::ScenarioConfig;
