use super::{EnvConfig, Trajectory};
use crate::error::Result;
use crate::eval::run_episode;
use crate::policy::Policy;

/// Runs one episode under the configuration's budget and returns its transcript.
///
/// A policy failure ends the episode; the trajectory is then marked unsuccessful and its
/// `error` field says why.
pub fn record_trajectory(config: &EnvConfig, seed: u64, policy: &dyn Policy) -> Result<Trajectory> {
    Ok(run_episode(config, seed, policy, config.budget())?.transcript)
}
