//! Policies map a decision context to a (retention, progress, action) triple.
//!
//! Implementations: scripted oracles with privileged state, replay of recorded episodes,
//! a lookup-table imitation learner, a uniform random baseline and a remote completion
//! endpoint.

mod oracle;
mod tabular;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotate::Annotations;
use crate::belief::{BeliefState, RetentionDecision, StepLabels, START_PROGRESS};
use crate::env::{EnvState, TrajStep, Trajectory};
use crate::error::{Error, Result};
use crate::prompt::{history_context, parse_model_output, serialize_belief};
use crate::remote::RemoteClient;

pub use crate::remote::CallStats;
pub use oracle::{oracle_action, OraclePolicy};
pub use tabular::{KeyMode, TabularPolicy, DEFAULT_HISTORY_WINDOW};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub retention: RetentionDecision,
    pub progress: String,
    pub action: String,
}

/// Which context layout a policy reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptStyle {
    Belief,
    History,
}

/// Everything available at one decision point.
///
/// `belief` is the provisional belief: the previous committed belief with the last action
/// tentatively attempted and the last observation in place. `env` is the privileged
/// environment state; only oracle policies may read it.
#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    pub query: &'a str,
    pub initial_observation: &'a str,
    pub belief: &'a BeliefState,
    pub history: &'a [TrajStep],
    pub env: &'a EnvState,
}

impl DecisionContext<'_> {
    pub fn step(&self) -> usize {
        self.history.len()
    }

    pub fn history_pairs(&self) -> Vec<(String, String)> {
        self.history
            .iter()
            .map(|s| (s.action.clone(), s.observation.clone()))
            .collect()
    }

    pub fn prompt(&self, style: PromptStyle) -> String {
        match style {
            PromptStyle::Belief => serialize_belief(self.belief).into_string(),
            PromptStyle::History => {
                history_context(self.query, self.initial_observation, &self.history_pairs())
            }
        }
    }
}

pub trait Policy: Send + Sync {
    fn name(&self) -> String;

    fn style(&self) -> PromptStyle {
        PromptStyle::Belief
    }

    fn decide(&self, ctx: &DecisionContext<'_>, stats: &mut CallStats) -> Result<PolicyDecision>;
}

/// Decision at `step` of a recorded trajectory: its action, with the progress label of that
/// step and the retention label of the preceding observation.
pub fn replay_act(
    traj: &Trajectory,
    annotations: Option<&Annotations>,
    step: usize,
) -> Result<PolicyDecision> {
    let recorded = traj.steps.get(step).ok_or_else(|| {
        Error::invalid(format!(
            "step {step} is past the end of {} ({} steps)",
            traj.task_id,
            traj.len()
        ))
    })?;
    let (progress, retention) = match annotations {
        Some(a) => {
            a.check(traj.len())?;
            let retention = if step == 0 {
                RetentionDecision::Skip
            } else {
                a.retention(step - 1).clone()
            };
            (a.progress_label(step).to_string(), retention)
        }
        None => (START_PROGRESS.to_string(), RetentionDecision::Skip),
    };
    Ok(PolicyDecision {
        retention,
        progress,
        action: recorded.action.clone(),
    })
}

/// Replays one recorded trajectory step by step.
#[derive(Debug, Clone)]
pub struct ReplayPolicy {
    pub trajectory: Trajectory,
    pub annotations: Option<Annotations>,
}

impl Policy for ReplayPolicy {
    fn name(&self) -> String {
        "replay".into()
    }

    fn decide(&self, ctx: &DecisionContext<'_>, _stats: &mut CallStats) -> Result<PolicyDecision> {
        replay_act(&self.trajectory, self.annotations.as_ref(), ctx.step())
    }
}

/// Uniform choice over the environment's action space, seeded per decision point.
#[derive(Debug, Clone, Copy)]
pub struct RandomPolicy {
    pub seed: u64,
}

impl Policy for RandomPolicy {
    fn name(&self) -> String {
        "random".into()
    }

    fn decide(&self, ctx: &DecisionContext<'_>, _stats: &mut CallStats) -> Result<PolicyDecision> {
        let mut options = ctx.belief.available_actions.clone();
        if options.is_empty() {
            options = ctx.env.action_space();
        }
        let key = format!("{}\u{0}{}\u{0}{}", ctx.query, ctx.initial_observation, ctx.step());
        let mut rng = ChaCha8Rng::seed_from_u64(crate::util::mix_seed(self.seed, &key));
        let action = options
            .choose(&mut rng)
            .cloned()
            .ok_or_else(|| Error::NoAction("empty action space".into()))?;
        Ok(PolicyDecision {
            retention: RetentionDecision::Skip,
            progress: ctx.belief.progress.clone(),
            action,
        })
    }
}

/// Sends the serialized context to a completion endpoint and parses the reply.
#[derive(Debug)]
pub struct RemotePolicy {
    pub client: RemoteClient,
    pub style: PromptStyle,
}

impl RemotePolicy {
    pub fn new(client: RemoteClient) -> Self {
        RemotePolicy {
            client,
            style: PromptStyle::Belief,
        }
    }
}

/// Posts `prompt` and parses the completion; an unparseable completion is retried once.
pub fn remote_act(client: &RemoteClient, prompt: &str, stats: &mut CallStats) -> Result<PolicyDecision> {
    let mut last_err = None;
    for attempt in 0..2 {
        if attempt > 0 {
            stats.reprompts += 1;
        }
        let completion = client.complete(prompt, stats)?;
        match parse_model_output(&completion) {
            Ok(out) => {
                return Ok(PolicyDecision {
                    retention: out.retention,
                    progress: out.progress_update,
                    action: out.action_update,
                })
            }
            Err(e) => {
                log::warn!("unparseable completion ({e})");
                last_err = Some(e);
            }
        }
    }
    Err(last_err.unwrap_or_else(|| Error::format("action_update", "no completion")))
}

impl Policy for RemotePolicy {
    fn name(&self) -> String {
        "remote".into()
    }

    fn style(&self) -> PromptStyle {
        self.style
    }

    fn decide(&self, ctx: &DecisionContext<'_>, stats: &mut CallStats) -> Result<PolicyDecision> {
        remote_act(&self.client, &ctx.prompt(self.style), stats)
    }
}
