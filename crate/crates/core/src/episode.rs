//! Shared per-episode driver: one change trajectory, one network simulation,
//! observation values drawn at the sampling instants.
//!
//! Observation values are consumed from the observation stream in a fixed
//! order (change time first, then one value per sensor at every sampling
//! instant), so two runs with the same observation stream see identical
//! sample paths no matter what the MAC does.

use thiserror::Error;

use crate::change::NatureTrajectory;
use crate::nadm::PosteriorError;
use crate::net::{NetError, NetworkSim, SlotOutcome};
use crate::scenario::ScenarioConfig;
use crate::seed::EpisodeRng;

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("no stop within the horizon cap of {cap} slots")]
    HorizonExceeded { cap: u64 },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Posterior(#[from] PosteriorError),
}

/// Joint evolution of nature and the network for a single episode.
pub(crate) struct JointSim<'a> {
    pub cfg: &'a ScenarioConfig,
    pub sim: NetworkSim,
    pub nature: NatureTrajectory,
    rng: EpisodeRng,
}

impl<'a> JointSim<'a> {
    pub fn new(cfg: &'a ScenarioConfig, mut rng: EpisodeRng) -> Result<Self, NetError> {
        let nature = NatureTrajectory::sample(&cfg.change, &mut rng.obs);
        Ok(Self {
            cfg,
            sim: NetworkSim::new(&cfg.net)?,
            nature,
            rng,
        })
    }

    pub fn slot(&self) -> u64 {
        self.sim.slot()
    }

    /// Runs one slot: fork the due batch (values drawn from the observation
    /// stream under the state of nature at the sampling instant), contend,
    /// advance.
    pub fn step(&mut self) -> Result<SlotOutcome, NetError> {
        if let Some(b) = self.sim.fork_due() {
            let slot = self.slot();
            debug_assert_eq!(slot, b * u64::from(self.cfg.net.period));
            let changed = self.nature.theta_at(slot);
            let values: Vec<f64> = (0..self.cfg.net.n_sensors)
                .map(|_| self.cfg.obs.sample(changed, &mut self.rng.obs))
                .collect();
            self.sim.fork(&values)?;
        }
        let m = self.sim.contend(&mut self.rng.net)?;
        self.sim.advance(m)
    }
}
