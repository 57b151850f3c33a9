//! Slot-by-slot simulator of the fork-join random-access network.
//!
//! Every `period` slots each of the `N` sensors enqueues one packet (a
//! "fork"). Within a slot, at most one packet crosses the channel: with
//! probability `sigma` a success occurs and is ascribed uniformly to one of
//! the nodes with a nonempty queue. Packets reach the fusion center at the
//! beginning of the next slot. A sequencer at the fusion center releases
//! samples to the decision maker strictly in batch order, holding
//! out-of-sequence arrivals in per-node FIFOs.
//!
//! The observable queue state is `[lambda, batch, delta, W, R]`:
//!
//! * `lambda`  — slots until the next sampling instant,
//! * `batch`   — index of the batch the decision maker is waiting for,
//! * `delta`   — age in slots of that batch (0 if not yet sampled),
//! * `W[i]`    — later-batch samples from node `i` parked in the sequencer,
//! * `R[i]`    — whether node `i`'s component of `batch` has been delivered.
//!
//! Sensor-queue lengths are not part of the state; they are recovered from
//! it, and the simulator cross-checks that reconstruction against its actual
//! buffers after every transition.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;
use crate::stats;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
    #[error("unstable network: stability margin {margin} is not positive (need N/period < sigma)")]
    Unstable { margin: f64 },
    #[error("queue state corrupted: {0}")]
    StateCorruption(String),
    #[error("a batch fork is due at slot {slot} and must be applied before contention")]
    ForkPending { slot: u64 },
    #[error("fork rejected: {0}")]
    BadFork(String),
}

/// Static description of the network: `N` sensors sampling every `period`
/// slots, served at per-slot success rate `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub n_sensors: usize,
    pub period: u32,
    pub sigma: f64,
}

impl NetConfig {
    pub fn new(n_sensors: usize, period: u32, sigma: f64) -> Result<Self, NetError> {
        let cfg = Self {
            n_sensors,
            period,
            sigma,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.n_sensors == 0 {
            return Err(NetError::InvalidConfig("need at least one sensor".into()));
        }
        if self.period == 0 {
            return Err(NetError::InvalidConfig("period must be >= 1 slot".into()));
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(NetError::InvalidConfig(format!(
                "sigma must lie in (0, 1), got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// `sigma - N/period`: the queueing system admits a proper stationary batch
/// sojourn time if and only if this is positive.
pub fn stability_margin(cfg: &NetConfig) -> f64 {
    cfg.sigma - cfg.n_sensors as f64 / f64::from(cfg.period)
}

/// Observable state of the queueing system at the beginning of a slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueueState {
    /// Global slot index `k`. Carried so that the pre-first-sample states
    /// (which share `[lambda, delta] = [period, 0]` with fresh sampling
    /// instants) stay distinguishable.
    pub slot: u64,
    /// Slots to go until the next sampling instant, in `1..=period`.
    pub lambda: u32,
    /// Batch the decision maker expects or is processing, `>= 1`.
    pub batch: u64,
    /// Age of `batch` in slots; 0 while its sampling instant lies ahead.
    pub delta: u64,
    /// Per-node sequencer backlogs (later-batch samples held at the fusion
    /// center).
    pub seq_queue: Vec<u32>,
    /// Per-node flags: component of `batch` already delivered.
    pub received: Vec<bool>,
}

impl QueueState {
    fn derived_lambda(slot: u64, period: u32) -> u32 {
        period - (slot % u64::from(period)) as u32
    }

    fn derived_delta(slot: u64, batch: u64, period: u32) -> u64 {
        slot.saturating_sub(batch * u64::from(period))
    }
}

/// Starting state: one full period to the first sampling instant, batch 1
/// expected, everything empty.
pub fn initial_state(cfg: &NetConfig) -> QueueState {
    QueueState {
        slot: 0,
        lambda: cfg.period,
        batch: 1,
        delta: 0,
        seq_queue: vec![0; cfg.n_sensors],
        received: vec![false; cfg.n_sensors],
    }
}

fn queue_len_raw(state: &QueueState, cfg: &NetConfig, node: usize) -> i64 {
    if state.delta > 0 {
        (state.delta / u64::from(cfg.period)) as i64 + 1
            - i64::from(state.received[node])
            - i64::from(state.seq_queue[node])
    } else if state.lambda == cfg.period && state.slot > 0 {
        // A batch has just been sampled and nothing is outstanding.
        1
    } else {
        // Before the first sampling instant, or drained mid-period.
        0
    }
}

/// Reconstructs the per-node sensor queue lengths from the observable state.
pub fn sensor_queue_lengths(state: &QueueState, cfg: &NetConfig) -> Result<Vec<u64>, NetError> {
    (0..cfg.n_sensors)
        .map(|i| {
            let l = queue_len_raw(state, cfg, i);
            if l < 0 {
                Err(NetError::StateCorruption(format!(
                    "derived queue length {l} for node {i} at slot {}",
                    state.slot
                )))
            } else {
                Ok(l as u64)
            }
        })
        .collect()
}

/// Number of nodes holding at least one undelivered packet, i.e. contending
/// for the current slot.
pub fn num_contending(state: &QueueState, cfg: &NetConfig) -> usize {
    (0..cfg.n_sensors)
        .filter(|&i| queue_len_raw(state, cfg, i) > 0)
        .count()
}

/// Draws the index of the node that transmits successfully in this slot
/// (0 = no success). With `n` contenders a success lands with probability
/// `sigma` and is ascribed to each contender with probability `sigma / n`.
pub fn draw_success<R: Rng + ?Sized>(state: &QueueState, cfg: &NetConfig, rng: &mut R) -> usize {
    let contenders = num_contending(state, cfg);
    if contenders == 0 || !rng.random_bool(cfg.sigma) {
        return 0;
    }
    let pick = rng.random_range(0..contenders);
    let mut seen = 0;
    for i in 0..cfg.n_sensors {
        if queue_len_raw(state, cfg, i) > 0 {
            if seen == pick {
                return i + 1;
            }
            seen += 1;
        }
    }
    unreachable!("contender count changed during draw");
}

/// One packet: the sample value of `batch` from one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Packet {
    pub batch: u64,
    pub value: f64,
}

/// Actual FIFO contents backing the observable state: per-node transmit
/// queues at the sensors and per-node sequencer queues at the fusion center.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SensorBuffers {
    pub sensor: Vec<VecDeque<Packet>>,
    pub sequencer: Vec<VecDeque<Packet>>,
}

impl SensorBuffers {
    fn new(n: usize) -> Self {
        Self {
            sensor: (0..n).map(|_| VecDeque::new()).collect(),
            sequencer: (0..n).map(|_| VecDeque::new()).collect(),
        }
    }
}

/// One sample handed to the decision maker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Delivery {
    pub node: usize,
    pub batch: u64,
    pub value: f64,
}

/// What happened during one slot, visible at the beginning of the next.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    /// Slot in which the contention took place.
    pub slot: u64,
    /// Successful node (1-based), 0 if none.
    pub success_node: usize,
    /// Samples released to the decision maker at the beginning of the next
    /// slot. On a batch completion the first entry is the completing
    /// component and the rest are head-of-line samples of the next batch.
    pub delivered: Vec<Delivery>,
    /// True when the expected batch completed in this slot.
    pub batch_completed: bool,
}

/// The fork-join network simulator: observable state plus the buffers that
/// realize it.
#[derive(Debug, Clone)]
pub struct NetworkSim {
    cfg: NetConfig,
    state: QueueState,
    buffers: SensorBuffers,
    /// Highest batch index already forked into the sensor queues.
    forked: u64,
    /// Total samples generated / delivered, for conservation checking.
    generated: u64,
    delivered: u64,
}

impl NetworkSim {
    pub fn new(cfg: &NetConfig) -> Result<Self, NetError> {
        cfg.validate()?;
        Ok(Self {
            cfg: *cfg,
            state: initial_state(cfg),
            buffers: SensorBuffers::new(cfg.n_sensors),
            forked: 0,
            generated: 0,
            delivered: 0,
        })
    }

    pub fn cfg(&self) -> &NetConfig {
        &self.cfg
    }

    pub fn state(&self) -> &QueueState {
        &self.state
    }

    pub fn buffers(&self) -> &SensorBuffers {
        &self.buffers
    }

    pub fn slot(&self) -> u64 {
        self.state.slot
    }

    /// Batch index due to be forked at the current slot, if any.
    pub fn fork_due(&self) -> Option<u64> {
        let period = u64::from(self.cfg.period);
        if self.state.slot > 0 && self.state.slot % period == 0 {
            let b = self.state.slot / period;
            if b > self.forked {
                return Some(b);
            }
        }
        None
    }

    /// Enqueues the due batch, one value per sensor.
    pub fn fork(&mut self, values: &[f64]) -> Result<u64, NetError> {
        let b = self
            .fork_due()
            .ok_or_else(|| NetError::BadFork(format!("no fork due at slot {}", self.state.slot)))?;
        if values.len() != self.cfg.n_sensors {
            return Err(NetError::BadFork(format!(
                "expected {} values, got {}",
                self.cfg.n_sensors,
                values.len()
            )));
        }
        for (node, &value) in values.iter().enumerate() {
            self.buffers.sensor[node].push_back(Packet { batch: b, value });
        }
        self.forked = b;
        self.generated += self.cfg.n_sensors as u64;
        Ok(b)
    }

    /// Draws this slot's success index. The due fork must have been applied.
    pub fn contend<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize, NetError> {
        if self.fork_due().is_some() {
            return Err(NetError::ForkPending {
                slot: self.state.slot,
            });
        }
        Ok(draw_success(&self.state, &self.cfg, rng))
    }

    /// Applies the transition for success index `m` and advances one slot.
    ///
    /// The four cases are: no delivery (no success, or a success carrying a
    /// later-batch sample that parks in the sequencer); delivery of one
    /// current-batch component; and batch completion, which additionally
    /// releases the head-of-line samples of the next batch.
    pub fn advance(&mut self, m: usize) -> Result<SlotOutcome, NetError> {
        if self.fork_due().is_some() {
            return Err(NetError::ForkPending {
                slot: self.state.slot,
            });
        }
        let n = self.cfg.n_sensors;
        if m > n {
            return Err(NetError::StateCorruption(format!(
                "success index {m} out of range for {n} nodes"
            )));
        }
        let k = self.state.slot;
        let mut delivered = Vec::new();
        let mut batch_completed = false;

        if m > 0 {
            let node = m - 1;
            if queue_len_raw(&self.state, &self.cfg, node) <= 0 {
                return Err(NetError::StateCorruption(format!(
                    "success ascribed to node {node} with an empty queue at slot {k}"
                )));
            }
            let pkt = self.buffers.sensor[node].pop_front().ok_or_else(|| {
                NetError::StateCorruption(format!("buffer empty for contending node {node}"))
            })?;
            if self.state.received[node] {
                // Later-batch sample: park it in the sequencer.
                if pkt.batch <= self.state.batch {
                    return Err(NetError::StateCorruption(format!(
                        "node {node} resent batch {} while marked received",
                        pkt.batch
                    )));
                }
                self.buffers.sequencer[node].push_back(pkt);
                self.state.seq_queue[node] += 1;
            } else {
                if pkt.batch != self.state.batch {
                    return Err(NetError::StateCorruption(format!(
                        "node {node} sent batch {} while batch {} is expected",
                        pkt.batch, self.state.batch
                    )));
                }
                delivered.push(Delivery {
                    node,
                    batch: pkt.batch,
                    value: pkt.value,
                });
                let already = self.state.received.iter().filter(|&&r| r).count();
                if already < n - 1 {
                    // Not the last component: mark and keep waiting.
                    self.state.received[node] = true;
                } else {
                    // Last component: the batch joins. Release every
                    // head-of-line sample of the next batch.
                    batch_completed = true;
                    let next_batch = self.state.batch + 1;
                    for i in 0..n {
                        if self.state.seq_queue[i] > 0 {
                            let hol = self.buffers.sequencer[i].pop_front().ok_or_else(|| {
                                NetError::StateCorruption(format!(
                                    "sequencer backlog {} for node {i} with empty buffer",
                                    self.state.seq_queue[i]
                                ))
                            })?;
                            if hol.batch != next_batch {
                                return Err(NetError::StateCorruption(format!(
                                    "head-of-line sample of node {i} is batch {}, expected {}",
                                    hol.batch, next_batch
                                )));
                            }
                            delivered.push(Delivery {
                                node: i,
                                batch: hol.batch,
                                value: hol.value,
                            });
                            self.state.seq_queue[i] -= 1;
                            self.state.received[i] = true;
                        } else {
                            self.state.received[i] = false;
                        }
                    }
                    self.state.batch = next_batch;
                }
            }
        }

        self.delivered += delivered.len() as u64;
        self.state.slot = k + 1;
        self.state.lambda = QueueState::derived_lambda(self.state.slot, self.cfg.period);
        self.state.delta =
            QueueState::derived_delta(self.state.slot, self.state.batch, self.cfg.period);
        self.check_invariants()?;

        Ok(SlotOutcome {
            slot: k,
            success_node: m,
            delivered,
            batch_completed,
        })
    }

    /// Convenience driver for one slot: fork if due (values supplied by
    /// `sampler`, one per sensor), contend, advance.
    pub fn step<R, F>(&mut self, sampler: F, rng: &mut R) -> Result<SlotOutcome, NetError>
    where
        R: Rng + ?Sized,
        F: FnOnce(u64) -> Vec<f64>,
    {
        if let Some(b) = self.fork_due() {
            let values = sampler(b);
            self.fork(&values)?;
        }
        let m = self.contend(rng)?;
        self.advance(m)
    }

    /// Packets not yet delivered to the decision maker (sensor queues plus
    /// sequencer).
    pub fn total_backlog(&self) -> u64 {
        self.generated - self.delivered
    }

    fn check_invariants(&self) -> Result<(), NetError> {
        let s = &self.state;
        let cfg = &self.cfg;
        if s.lambda != QueueState::derived_lambda(s.slot, cfg.period) {
            return Err(NetError::StateCorruption(format!(
                "lambda {} disagrees with slot counter {}",
                s.lambda, s.slot
            )));
        }
        if s.delta != QueueState::derived_delta(s.slot, s.batch, cfg.period) {
            return Err(NetError::StateCorruption(format!(
                "delta {} disagrees with slot {} batch {}",
                s.delta, s.slot, s.batch
            )));
        }
        if s.delta == 0 {
            if s.seq_queue.iter().any(|&w| w > 0) || s.received.iter().any(|&r| r) {
                return Err(NetError::StateCorruption(
                    "drained state carries sequencer backlog or received flags".into(),
                ));
            }
        }
        for i in 0..cfg.n_sensors {
            if !s.received[i] && s.seq_queue[i] > 0 {
                return Err(NetError::StateCorruption(format!(
                    "node {i} holds sequencer backlog before its current sample arrived"
                )));
            }
        }
        self.verify_conservation()
    }

    /// Conservation check: the queue lengths reconstructed from the
    /// observable state must match the actual buffers, and every generated
    /// sample must be delivered, in flight, or queued.
    pub fn verify_conservation(&self) -> Result<(), NetError> {
        // Between the slot boundary and the due fork the reconstruction
        // already counts the packet about to be enqueued.
        let pending = u64::from(self.fork_due().is_some());
        let mut in_queues = 0u64;
        for i in 0..self.cfg.n_sensors {
            let derived = queue_len_raw(&self.state, &self.cfg, i);
            if derived < 0 {
                return Err(NetError::StateCorruption(format!(
                    "derived queue length {derived} for node {i} at slot {}",
                    self.state.slot
                )));
            }
            let actual = self.buffers.sensor[i].len() as u64 + pending;
            if derived as u64 != actual {
                return Err(NetError::StateCorruption(format!(
                    "node {i}: derived queue length {derived} but buffer holds {actual} \
                     (slot {}, batch {}, delta {})",
                    self.state.slot, self.state.batch, self.state.delta
                )));
            }
            if self.buffers.sequencer[i].len() != self.state.seq_queue[i] as usize {
                return Err(NetError::StateCorruption(format!(
                    "node {i}: sequencer backlog {} but buffer holds {}",
                    self.state.seq_queue[i],
                    self.buffers.sequencer[i].len()
                )));
            }
            in_queues += self.buffers.sensor[i].len() as u64
                + self.buffers.sequencer[i].len() as u64;
        }
        if self.generated != self.delivered + in_queues {
            return Err(NetError::StateCorruption(format!(
                "sample count leak: generated {} != delivered {} + queued {}",
                self.generated, self.delivered, in_queues
            )));
        }
        Ok(())
    }
}

/// Mean stationary batch sojourn time estimate with a 95% CI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SojournEstimate {
    pub mean: f64,
    pub ci_half_width: f64,
    pub replications: usize,
    pub batches_per_replication: usize,
}

/// Estimates the mean batch sojourn time `d(r)` by running `replications`
/// independent detector-free simulations, discarding `warmup_batches` per
/// replication and averaging the sojourns of the next `measured_batches`.
/// Refuses unstable configurations, for which no stationary sojourn exists.
pub fn estimate_batch_sojourn(
    cfg: &NetConfig,
    replications: usize,
    warmup_batches: usize,
    measured_batches: usize,
    seed: u64,
) -> Result<SojournEstimate, NetError> {
    cfg.validate()?;
    let margin = stability_margin(cfg);
    if margin <= 0.0 {
        return Err(NetError::Unstable { margin });
    }
    if replications < 2 || measured_batches == 0 {
        return Err(NetError::InvalidConfig(
            "need at least 2 replications and 1 measured batch".into(),
        ));
    }

    use rayon::prelude::*;
    let means: Vec<f64> = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = seed::stream(seed, rep as u64, 0xd0);
            let mut sim = NetworkSim::new(cfg).expect("validated config");
            let total = warmup_batches + measured_batches;
            let mut sum = 0.0;
            let mut count = 0usize;
            while count < total {
                let outcome = sim
                    .step(|_| vec![0.0; cfg.n_sensors], &mut rng)
                    .expect("detector-free run cannot corrupt state");
                if outcome.batch_completed {
                    count += 1;
                    if count > warmup_batches {
                        let b = outcome.delivered[0].batch;
                        let sojourn = sim.slot() - b * u64::from(cfg.period);
                        sum += sojourn as f64;
                    }
                }
            }
            sum / measured_batches as f64
        })
        .collect();

    let (mean, ci_half_width) = stats::mean_ci(&means);
    Ok(SojournEstimate {
        mean,
        ci_half_width,
        replications,
        batches_per_replication: measured_batches,
    })
}

/// Backlog trajectory summary over a long detector-free run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BacklogTrend {
    /// OLS slope of total backlog against the slot index, in packets/slot.
    pub slope: f64,
    /// Mean backlog over the first and second half of the horizon.
    pub first_half_mean: f64,
    pub second_half_mean: f64,
    pub max_backlog: u64,
    pub final_backlog: u64,
}

/// Runs the network for `horizon` slots and summarizes the backlog growth.
/// Works for unstable configurations too; this is the empirical face of the
/// stability threshold.
pub fn backlog_trend(cfg: &NetConfig, horizon: u64, seed: u64) -> Result<BacklogTrend, NetError> {
    cfg.validate()?;
    let mut rng = seed::stream(seed, 0, 0xb1);
    let mut sim = NetworkSim::new(cfg)?;
    let sample_every = (horizon / 2000).max(1);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut max_backlog = 0u64;
    let mut half_sums = [0.0f64; 2];
    let mut half_counts = [0u64; 2];
    for k in 0..horizon {
        sim.step(|_| vec![0.0; cfg.n_sensors], &mut rng)?;
        let backlog = sim.total_backlog();
        max_backlog = max_backlog.max(backlog);
        let half = usize::from(k >= horizon / 2);
        half_sums[half] += backlog as f64;
        half_counts[half] += 1;
        if k % sample_every == 0 {
            xs.push(k as f64);
            ys.push(backlog as f64);
        }
    }
    Ok(BacklogTrend {
        slope: stats::ols_slope(&xs, &ys),
        first_half_mean: half_sums[0] / half_counts[0] as f64,
        second_half_mean: half_sums[1] / half_counts[1] as f64,
        max_backlog,
        final_backlog: sim.total_backlog(),
    })
}

/// Header for the per-slot debug trace CSV.
pub fn trace_header(n_sensors: usize) -> String {
    let mut cols = vec!["k".to_string(), "lambda".into(), "batch".into(), "delta".into()];
    for i in 0..n_sensors {
        cols.push(format!("w{i}"));
    }
    for i in 0..n_sensors {
        cols.push(format!("r{i}"));
    }
    for i in 0..n_sensors {
        cols.push(format!("l{i}"));
    }
    cols.push("m".into());
    cols.push("delivered".into());
    cols.join(",")
}

/// One trace row: the state at the beginning of `outcome.slot` plus the
/// slot's contention result.
pub fn trace_row(state_before: &QueueState, cfg: &NetConfig, outcome: &SlotOutcome) -> String {
    let mut cols = vec![
        outcome.slot.to_string(),
        state_before.lambda.to_string(),
        state_before.batch.to_string(),
        state_before.delta.to_string(),
    ];
    for &w in &state_before.seq_queue {
        cols.push(w.to_string());
    }
    for &r in &state_before.received {
        cols.push(u8::from(r).to_string());
    }
    for i in 0..cfg.n_sensors {
        cols.push(queue_len_raw(state_before, cfg, i).to_string());
    }
    cols.push(outcome.success_node.to_string());
    cols.push(outcome.delivered.len().to_string());
    cols.join(",")
}
