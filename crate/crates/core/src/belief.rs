//! The belief tuple `[query, progress, attempted, available, saved]` and its update.
//!
//! A belief is a plain value. [`update_belief`] returns a new belief and never mutates its
//! input, so beliefs can be handed between workers freely.
//!
//! Progress comparison is whitespace-normalised and case-sensitive (see [`progress_equal`]).
//! The attempted-action memory is cleared whenever progress changes, and the most recent
//! observation is always carried verbatim.

use serde::{Deserialize, Serialize};

use crate::env::extract_available;
use crate::error::{Error, Result};

/// Progress label of a belief before the policy has produced any progress estimate.
pub const START_PROGRESS: &str = "begin the task";

/// Progress label after the last step of an annotated trajectory.
pub const DONE_PROGRESS: &str = "task complete";

/// Whether the information in a new observation enters the saved set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "RawRetention", try_from = "RawRetention")]
pub enum RetentionDecision {
    #[default]
    Skip,
    Keep(String),
}

impl RetentionDecision {
    pub fn keep(content: impl Into<String>) -> Self {
        RetentionDecision::Keep(content.into())
    }

    pub fn is_keep(&self) -> bool {
        matches!(self, RetentionDecision::Keep(_))
    }

    pub fn content(&self) -> Option<&str> {
        match self {
            RetentionDecision::Skip => None,
            RetentionDecision::Keep(c) => Some(c),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RawRetention {
    keep: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    content: Option<String>,
}

impl From<RetentionDecision> for RawRetention {
    fn from(r: RetentionDecision) -> Self {
        match r {
            RetentionDecision::Skip => RawRetention {
                keep: false,
                content: None,
            },
            RetentionDecision::Keep(c) => RawRetention {
                keep: true,
                content: Some(c),
            },
        }
    }
}

impl TryFrom<RawRetention> for RetentionDecision {
    type Error = String;

    fn try_from(raw: RawRetention) -> std::result::Result<Self, Self::Error> {
        match (raw.keep, raw.content) {
            (false, None) => Ok(RetentionDecision::Skip),
            (false, Some(_)) => Err("retention with keep=false must not carry content".into()),
            (true, Some(c)) => Ok(RetentionDecision::Keep(c)),
            (true, None) => Err("retention with keep=true requires content".into()),
        }
    }
}

/// One entry of the saved-observation set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SavedObservation {
    /// Index of the action whose observation produced this entry.
    pub step: usize,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BeliefState {
    pub query: String,
    pub progress: String,
    pub attempted_actions: Vec<String>,
    pub available_actions: Vec<String>,
    pub saved_observations: Vec<SavedObservation>,
    pub last_observation: String,
    pub step_index: usize,
}

impl BeliefState {
    /// Applies a progress estimate without executing an action.
    ///
    /// Used for the very first decision of an episode, which replaces the start label.
    pub fn with_progress(&self, progress: &str) -> BeliefState {
        let mut next = self.clone();
        if !progress_equal(progress, &self.progress) {
            next.progress = progress.to_string();
            next.attempted_actions.clear();
        }
        next
    }

    /// Saved observation contents in insertion order.
    pub fn saved_contents(&self) -> impl Iterator<Item = &str> {
        self.saved_observations.iter().map(|s| s.content.as_str())
    }
}

/// Knobs for belief maintenance.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BeliefConfig {
    /// Maximum number of characters kept from the most recent observation. `None` keeps it whole.
    pub observation_limit: Option<usize>,
}

impl BeliefConfig {
    fn clip(&self, observation: &str) -> String {
        match self.observation_limit {
            Some(limit) if observation.chars().count() > limit => observation.chars().take(limit).collect(),
            _ => observation.to_string(),
        }
    }

    pub fn init(
        &self,
        query: &str,
        initial_observation: &str,
        initial_progress: &str,
    ) -> Result<BeliefState> {
        if query.trim().is_empty() {
            return Err(Error::invalid("query must be nonempty"));
        }
        Ok(BeliefState {
            query: query.to_string(),
            progress: initial_progress.to_string(),
            attempted_actions: Vec::new(),
            available_actions: extract_available(initial_observation),
            saved_observations: Vec::new(),
            last_observation: self.clip(initial_observation),
            step_index: 0,
        })
    }

    pub fn update(
        &self,
        prev: &BeliefState,
        executed_action: &str,
        new_observation: &str,
        retention: &RetentionDecision,
        predicted_progress: &str,
    ) -> BeliefState {
        let (progress, attempted_actions) = if progress_equal(predicted_progress, &prev.progress) {
            let mut attempted = prev.attempted_actions.clone();
            attempted.push(executed_action.to_string());
            (prev.progress.clone(), attempted)
        } else {
            (predicted_progress.to_string(), Vec::new())
        };

        let mut saved_observations = prev.saved_observations.clone();
        if let RetentionDecision::Keep(content) = retention {
            if !saved_observations.iter().any(|s| &s.content == content) {
                saved_observations.push(SavedObservation {
                    step: prev.step_index,
                    content: content.clone(),
                });
            }
        }

        let extracted = extract_available(new_observation);
        let available_actions = if extracted.is_empty() {
            prev.available_actions.clone()
        } else {
            extracted
        };

        BeliefState {
            query: prev.query.clone(),
            progress,
            attempted_actions,
            available_actions,
            saved_observations,
            last_observation: self.clip(new_observation),
            step_index: prev.step_index + 1,
        }
    }
}

/// Builds the belief that precedes the first action.
pub fn init_belief(query: &str, initial_observation: &str, initial_progress: &str) -> Result<BeliefState> {
    BeliefConfig::default().init(query, initial_observation, initial_progress)
}

/// Folds one executed action and its observation into the belief.
pub fn update_belief(
    prev: &BeliefState,
    executed_action: &str,
    new_observation: &str,
    retention: &RetentionDecision,
    predicted_progress: &str,
) -> BeliefState {
    BeliefConfig::default().update(
        prev,
        executed_action,
        new_observation,
        retention,
        predicted_progress,
    )
}

/// The belief a policy sees right after an action executes, before it has judged whether
/// progress advanced: the action is tentatively listed as attempted and nothing is saved.
pub fn provisional_belief(
    committed: &BeliefState,
    executed_action: &str,
    new_observation: &str,
) -> BeliefState {
    update_belief(
        committed,
        executed_action,
        new_observation,
        &RetentionDecision::Skip,
        &committed.progress,
    )
}

/// Whitespace-normalised, case-sensitive equality of two progress labels.
pub fn progress_equal(a: &str, b: &str) -> bool {
    a.split_whitespace().eq(b.split_whitespace())
}

/// Per-step supervision needed to rebuild a belief: progress label and retention decision.
pub trait StepLabels {
    fn len(&self) -> usize;
    fn progress_label(&self, step: usize) -> &str;
    fn retention(&self, step: usize) -> &RetentionDecision;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Progress estimate after `step` executed: the next step's label, or
    /// [`DONE_PROGRESS`] after the last step.
    fn progress_after(&self, step: usize) -> &str {
        if step + 1 < self.len() {
            self.progress_label(step + 1)
        } else {
            DONE_PROGRESS
        }
    }
}

/// Recomputes the committed belief after all `steps` directly from the labels, without
/// chaining [`update_belief`]. Serves as the reference the incremental path is checked against.
pub fn recompute_from_history<L: StepLabels>(
    query: &str,
    initial_observation: &str,
    steps: &[(String, String)],
    labels: &L,
) -> Result<BeliefState> {
    if labels.len() != steps.len() {
        return Err(Error::invalid(format!(
            "annotations cover {} steps but trajectory has {}",
            labels.len(),
            steps.len()
        )));
    }
    let initial_progress = if labels.is_empty() {
        START_PROGRESS
    } else {
        labels.progress_label(0)
    };
    let mut belief = init_belief(query, initial_observation, initial_progress)?;
    if steps.is_empty() {
        return Ok(belief);
    }

    // Progress text and the index from which attempts accumulate.
    let mut progress = initial_progress.to_string();
    let mut attempts_from = 0;
    for i in 0..steps.len() {
        let next = labels.progress_after(i);
        if !progress_equal(next, &progress) {
            progress = next.to_string();
            attempts_from = i + 1;
        }
    }

    let mut saved: Vec<SavedObservation> = Vec::new();
    for i in 0..steps.len() {
        if let Some(content) = labels.retention(i).content() {
            if saved.iter().all(|s| s.content != content) {
                saved.push(SavedObservation {
                    step: i,
                    content: content.to_string(),
                });
            }
        }
    }

    let available = steps
        .iter()
        .rev()
        .map(|(_, obs)| extract_available(obs))
        .find(|a| !a.is_empty())
        .unwrap_or_else(|| belief.available_actions.clone());

    belief.progress = progress;
    belief.attempted_actions = steps[attempts_from..].iter().map(|(a, _)| a.clone()).collect();
    belief.available_actions = available;
    belief.saved_observations = saved;
    belief.last_observation = steps[steps.len() - 1].1.clone();
    belief.step_index = steps.len();
    Ok(belief)
}
