//! Lookup-table imitation: majority decision per context key, with a fallback rule on misses.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CallStats, DecisionContext, Policy, PolicyDecision, PromptStyle};
use crate::augment::{Mode, TrainingExample};
use crate::belief::{BeliefState, RetentionDecision};
use crate::env::status_line;
use crate::error::{Error, Result};
use crate::prompt::{parse_belief_prompt, parse_history_prompt};

/// Transcript entries a history-keyed table looks at.
pub const DEFAULT_HISTORY_WINDOW: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum KeyMode {
    /// Query, progress, attempted actions, saved contents and the status line of the last
    /// observation.
    Belief,
    /// Query, the latest status line and the last `window` transcript entries.
    History { window: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    pub key_mode: KeyMode,
    pub trained_on: Mode,
    /// When set, misses pick uniformly among untried actions instead of the first one.
    #[serde(default)]
    pub explore_seed: Option<u64>,
    table: BTreeMap<String, PolicyDecision>,
}

fn status_of(observation: &str) -> &str {
    status_line(observation).unwrap_or("")
}

impl TabularPolicy {
    /// Fits a table: PABU examples are keyed on beliefs, the other modes on a truncated
    /// history window.
    pub fn fit(examples: &[TrainingExample]) -> Result<TabularPolicy> {
        Self::fit_with_window(examples, DEFAULT_HISTORY_WINDOW)
    }

    pub fn fit_with_window(examples: &[TrainingExample], window: usize) -> Result<TabularPolicy> {
        let first = examples
            .first()
            .ok_or_else(|| Error::invalid("cannot fit a table on an empty dataset"))?;
        let mode = first.mode;
        if examples.iter().any(|e| e.mode != mode) {
            return Err(Error::invalid("dataset mixes example modes"));
        }
        let key_mode = if mode.uses_belief() {
            KeyMode::Belief
        } else {
            KeyMode::History { window }
        };
        let mut votes: BTreeMap<String, BTreeMap<PolicyDecision, usize>> = BTreeMap::new();
        for e in examples {
            let key = key_for(key_mode, &e.context)?;
            let d = PolicyDecision {
                retention: e.target_retention.clone(),
                progress: e.target_progress.clone(),
                action: e.target_action.clone(),
            };
            *votes.entry(key).or_default().entry(d).or_default() += 1;
        }
        let table = votes
            .into_iter()
            .map(|(k, counts)| {
                let best = counts
                    .into_iter()
                    .max_by(|(a, na), (b, nb)| {
                        na.cmp(nb)
                            .then_with(|| b.action.cmp(&a.action))
                            .then_with(|| b.progress.cmp(&a.progress))
                            .then_with(|| b.retention.cmp(&a.retention))
                    })
                    .map(|(d, _)| d)
                    .expect("every key has at least one vote");
                (k, best)
            })
            .collect();
        Ok(TabularPolicy {
            key_mode,
            trained_on: mode,
            explore_seed: None,
            table,
        })
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn prompt_style(&self) -> PromptStyle {
        match self.key_mode {
            KeyMode::Belief => PromptStyle::Belief,
            KeyMode::History { .. } => PromptStyle::History,
        }
    }

    pub fn lookup(&self, context: &str) -> Result<Option<&PolicyDecision>> {
        Ok(self.table.get(&key_for(self.key_mode, context)?))
    }

    /// Decision for a serialized context: the stored majority on a hit, the fallback rule on
    /// a miss.
    pub fn act(&self, context: &str) -> Result<PolicyDecision> {
        let key = key_for(self.key_mode, context)?;
        if let Some(d) = self.table.get(&key) {
            return Ok(d.clone());
        }
        let belief = match self.key_mode {
            KeyMode::Belief => parse_belief_prompt(context)?,
            KeyMode::History { .. } => parse_history_prompt(context)?.0,
        };
        self.fallback(&belief, &key)
    }

    /// Skip retention, keep progress, take the first available action not yet attempted
    /// (or a seeded random one among them); wraps to the first action when all were tried.
    fn fallback(&self, belief: &BeliefState, key: &str) -> Result<PolicyDecision> {
        let first = belief
            .available_actions
            .first()
            .ok_or_else(|| Error::NoAction("no table entry and no available actions".into()))?;
        let untried: Vec<&String> = belief
            .available_actions
            .iter()
            .filter(|a| !belief.attempted_actions.contains(a))
            .collect();
        let action = match (self.explore_seed, untried.is_empty()) {
            (_, true) => first.clone(),
            (None, false) => untried[0].clone(),
            (Some(seed), false) => {
                let mut rng = ChaCha8Rng::seed_from_u64(crate::util::mix_seed(seed, key));
                (*untried.choose(&mut rng).expect("nonempty")).clone()
            }
        };
        Ok(PolicyDecision {
            retention: RetentionDecision::Skip,
            progress: belief.progress.clone(),
            action,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TabularPolicy> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("cannot read policy {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }
}

/// Canonical lookup key of a serialized context.
pub fn key_for(mode: KeyMode, context: &str) -> Result<String> {
    match mode {
        KeyMode::Belief => {
            let b = parse_belief_prompt(context)?;
            let saved: Vec<&str> = b.saved_contents().collect();
            Ok(format!(
                "q={}\np={}\natt={}\nsaved={}\nstatus={}",
                b.query,
                b.progress.split_whitespace().collect::<Vec<_>>().join(" "),
                b.attempted_actions.join(","),
                saved.join("|"),
                status_of(&b.last_observation)
            ))
        }
        KeyMode::History { window } => {
            let (head, transcript) = parse_history_prompt(context)?;
            let latest = transcript
                .last()
                .map_or(head.last_observation.as_str(), |(_, o)| o.as_str());
            let recent: Vec<String> = transcript
                .iter()
                .skip(transcript.len().saturating_sub(window))
                .map(|(a, o)| format!("{a}\n{o}"))
                .collect();
            Ok(format!(
                "q={}\nstatus={}\nrecent={}",
                head.query,
                status_of(latest),
                recent.join("\n--\n")
            ))
        }
    }
}

impl Policy for TabularPolicy {
    fn name(&self) -> String {
        format!("tabular-{}", self.trained_on)
    }

    fn style(&self) -> PromptStyle {
        self.prompt_style()
    }

    fn decide(&self, ctx: &DecisionContext<'_>, _stats: &mut CallStats) -> Result<PolicyDecision> {
        self.act(&ctx.prompt(self.prompt_style()))
    }
}
