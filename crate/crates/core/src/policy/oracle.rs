use super::{CallStats, DecisionContext, Policy, PolicyDecision};
use crate::annotate::annotate_unchecked;
use crate::belief::{RetentionDecision, StepLabels};
use crate::env::{EnvState, TrajStep, Trajectory, TRAJECTORY_SCHEMA};
use crate::error::{Error, Result};

/// The scripted action for a state: a shortest-path move for mazes (ties broken up, down,
/// left, right), the alphabetically first consistent unguessed word, or the next post-order
/// recipe-tree action.
pub fn oracle_action(env: &EnvState) -> Option<String> {
    if env.is_done() {
        return None;
    }
    match env {
        EnvState::Maze(s) => s.shortest_path_move().map(String::from),
        EnvState::Wordguess(s) => {
            let guessed: Vec<&str> = s.history().iter().map(|(g, _)| g.as_str()).collect();
            s.candidates()
                .into_iter()
                .find(|w| !guessed.contains(w))
                .map(String::from)
        }
        EnvState::Craft(s) => s.next_tree_action(),
    }
}

/// Oracle with progress and retention outputs taken from annotating its own completed path.
#[derive(Debug, Clone, Copy, Default)]
pub struct OraclePolicy;

impl OraclePolicy {
    /// Finishes the episode with oracle actions and annotates the full path, then reads off
    /// the labels for the current step.
    fn labels(ctx: &DecisionContext<'_>) -> Option<(String, RetentionDecision)> {
        let mut env = ctx.env.clone();
        let mut steps: Vec<TrajStep> = ctx.history.to_vec();
        while let Some(a) = oracle_action(&env) {
            let out = env.step(&a).ok()?;
            steps.push(TrajStep {
                action: a,
                observation: out.observation,
                step_reward: out.reward,
                done: out.done,
            });
        }
        let traj = Trajectory {
            schema: TRAJECTORY_SCHEMA,
            env_kind: env.kind(),
            task_id: String::new(),
            seed: 0,
            config_fingerprint: String::new(),
            query: ctx.query.to_string(),
            initial_observation: ctx.initial_observation.to_string(),
            steps,
            success: env.is_success(),
            error: None,
        };
        let ann = annotate_unchecked(&traj).ok()?;
        let n = ctx.step();
        if n >= ann.len() {
            return None;
        }
        let retention = if n == 0 {
            RetentionDecision::Skip
        } else {
            ann.retention(n - 1).clone()
        };
        Some((ann.progress_label(n).to_string(), retention))
    }
}

impl Policy for OraclePolicy {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn decide(&self, ctx: &DecisionContext<'_>, _stats: &mut CallStats) -> Result<PolicyDecision> {
        let action = oracle_action(ctx.env)
            .ok_or_else(|| Error::NoAction("oracle has no move from this state".into()))?;
        let (progress, retention) =
            Self::labels(ctx).unwrap_or_else(|| (ctx.belief.progress.clone(), RetentionDecision::Skip));
        Ok(PolicyDecision {
            retention,
            progress,
            action,
        })
    }
}
