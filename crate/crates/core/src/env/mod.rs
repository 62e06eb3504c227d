//! Deterministic text environments and trajectory records.
//!
//! Every environment is a pure function of `(config, seed, actions)`: the seed drives a
//! ChaCha generator used only at reset, and steps never draw randomness. Each observation
//! carries a `Status:` line with the structured state and, where the action space is
//! enumerable, an `Available actions:` line in comma-joined form.

pub mod constraints;
pub mod craft;
pub mod maze;
mod record;
pub mod wordguess;

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use craft::{CraftConfig, CraftState, RecipeBook};
pub use maze::{MazeConfig, MazeState, Pos};
pub use record::record_trajectory;
pub use wordguess::{WordGuessConfig, WordGuessState};

/// Marker that starts an available-actions section inside an observation.
pub const AVAILABLE_PREFIX: &str = "Available actions:";

/// Prefix of the structured state line inside an observation.
pub const STATUS_PREFIX: &str = "Status:";

/// Reward attached to every step, successful or not.
pub const STEP_REWARD: f64 = -1.0;

/// Regeneration attempts before reset gives up on producing a solvable instance.
pub const RESET_RETRY_CAP: usize = 100;

pub const TRAJECTORY_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Maze,
    Wordguess,
    Craft,
}

impl EnvKind {
    pub const ALL: [EnvKind; 3] = [EnvKind::Maze, EnvKind::Wordguess, EnvKind::Craft];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvKind::Maze => "maze",
            EnvKind::Wordguess => "wordguess",
            EnvKind::Craft => "craft",
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "maze" => Ok(EnvKind::Maze),
            "wordguess" | "wordle" => Ok(EnvKind::Wordguess),
            "craft" | "textcraft" => Ok(EnvKind::Craft),
            other => Err(Error::invalid(format!("unknown environment kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvConfig {
    Maze(MazeConfig),
    Wordguess(WordGuessConfig),
    Craft(CraftConfig),
}

impl EnvConfig {
    /// Default configuration for a kind, using the bundled word list and recipes.
    pub fn default_for(kind: EnvKind) -> EnvConfig {
        match kind {
            EnvKind::Maze => EnvConfig::Maze(MazeConfig::default()),
            EnvKind::Wordguess => EnvConfig::Wordguess(WordGuessConfig::default()),
            EnvKind::Craft => EnvConfig::Craft(CraftConfig::default()),
        }
    }

    pub fn kind(&self) -> EnvKind {
        match self {
            EnvConfig::Maze(_) => EnvKind::Maze,
            EnvConfig::Wordguess(_) => EnvKind::Wordguess,
            EnvConfig::Craft(_) => EnvKind::Craft,
        }
    }

    pub fn budget(&self) -> usize {
        match self {
            EnvConfig::Maze(c) => c.budget,
            EnvConfig::Wordguess(c) => c.budget,
            EnvConfig::Craft(c) => c.budget,
        }
    }

    pub fn with_budget(&self, budget: usize) -> EnvConfig {
        let mut next = self.clone();
        match &mut next {
            EnvConfig::Maze(c) => c.budget = budget,
            EnvConfig::Wordguess(c) => c.budget = budget,
            EnvConfig::Craft(c) => c.budget = budget,
        }
        next
    }

    /// Canonical text description; two configs are interchangeable iff these match.
    pub fn describe(&self) -> String {
        match self {
            EnvConfig::Maze(c) => c.describe(),
            EnvConfig::Wordguess(c) => c.describe(),
            EnvConfig::Craft(c) => c.describe(),
        }
    }

    pub fn fingerprint(&self) -> String {
        crate::util::fingerprint(&[&self.describe()])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvState {
    Maze(MazeState),
    Wordguess(WordGuessState),
    Craft(CraftState),
}

/// What one environment step returns.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: String,
    pub reward: f64,
    pub done: bool,
    /// Terminal success flag; only ever true together with `done`.
    pub success: bool,
}

/// Step counter and budget shared by all environments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Clock {
    pub steps: usize,
    pub budget: usize,
    pub done: bool,
    pub success: bool,
}

impl Clock {
    pub fn new(budget: usize) -> Self {
        Clock {
            steps: 0,
            budget,
            done: false,
            success: false,
        }
    }

    pub fn check_running(&self) -> Result<()> {
        if self.done {
            Err(Error::invalid("episode already finished"))
        } else {
            Ok(())
        }
    }

    /// Records a step; returns whether the budget ran out on it.
    pub fn tick(&mut self, success: bool) -> bool {
        self.steps += 1;
        if success {
            self.done = true;
            self.success = true;
            return false;
        }
        if self.steps >= self.budget {
            self.done = true;
            return true;
        }
        false
    }
}

/// Assembles an observation from narrative lines, a status line and the action list.
pub(crate) fn compose_observation(
    narrative: &[String],
    status: &str,
    exhausted: bool,
    available: &[String],
) -> String {
    let mut lines: Vec<String> = narrative.to_vec();
    if exhausted {
        lines.push("Step budget exhausted.".to_string());
    }
    if !status.is_empty() {
        lines.push(format!("{STATUS_PREFIX} {status}"));
    }
    if !available.is_empty() {
        lines.push(format!("{AVAILABLE_PREFIX} {}", available.join(",")));
    }
    lines.join("\n")
}

pub(crate) fn validate_budget(budget: usize) -> Result<()> {
    if budget == 0 {
        Err(Error::invalid("budget must be at least 1"))
    } else {
        Ok(())
    }
}

/// Creates a fresh episode: the initial state, the user query and the first observation.
pub fn env_reset(config: &EnvConfig, seed: u64) -> Result<(EnvState, String, String)> {
    match config {
        EnvConfig::Maze(c) => {
            let (s, q, o) = maze::reset(c, seed)?;
            Ok((EnvState::Maze(s), q, o))
        }
        EnvConfig::Wordguess(c) => {
            let (s, q, o) = wordguess::reset(c, seed)?;
            Ok((EnvState::Wordguess(s), q, o))
        }
        EnvConfig::Craft(c) => {
            let (s, q, o) = craft::reset(c, seed)?;
            Ok((EnvState::Craft(s), q, o))
        }
    }
}

/// Functional form of [`EnvState::step`].
pub fn env_step(state: &EnvState, action: &str) -> Result<(EnvState, StepOutcome)> {
    let mut next = state.clone();
    let outcome = next.step(action)?;
    Ok((next, outcome))
}

impl EnvState {
    pub fn kind(&self) -> EnvKind {
        match self {
            EnvState::Maze(_) => EnvKind::Maze,
            EnvState::Wordguess(_) => EnvKind::Wordguess,
            EnvState::Craft(_) => EnvKind::Craft,
        }
    }

    /// Executes one action. Unknown actions are not errors: they cost a step and yield an
    /// "invalid action" observation. Stepping a finished episode is an error.
    pub fn step(&mut self, action: &str) -> Result<StepOutcome> {
        match self {
            EnvState::Maze(s) => s.step(action),
            EnvState::Wordguess(s) => s.step(action),
            EnvState::Craft(s) => s.step(action),
        }
    }

    fn clock(&self) -> &Clock {
        match self {
            EnvState::Maze(s) => &s.clock,
            EnvState::Wordguess(s) => &s.clock,
            EnvState::Craft(s) => &s.clock,
        }
    }

    pub fn is_done(&self) -> bool {
        self.clock().done
    }

    pub fn is_success(&self) -> bool {
        self.clock().success
    }

    pub fn steps_taken(&self) -> usize {
        self.clock().steps
    }

    pub fn budget(&self) -> usize {
        self.clock().budget
    }

    /// Every action the environment accepts as valid in general, including those listed in
    /// observations and, for word guessing, the whole word list.
    pub fn action_space(&self) -> Vec<String> {
        match self {
            EnvState::Maze(_) => maze::MOVES.iter().map(|m| m.to_string()).collect(),
            EnvState::Wordguess(s) => s.words().to_vec(),
            EnvState::Craft(s) => s.available(),
        }
    }
}

/// Extracts the comma-separated available-action list from an observation.
///
/// Recognises an `Available actions:` line (continued onto following lines while a line ends
/// with a comma) or an `<available_action>` block. Returns an empty list when neither is
/// present; callers then keep the previous list.
pub fn extract_available(observation: &str) -> Vec<String> {
    let text = observation.replace("\r\n", "\n");
    let lines: Vec<&str> = text.split('\n').collect();
    let mut body = String::new();
    if let Some(start) = lines
        .iter()
        .position(|l| l.trim_start().starts_with(AVAILABLE_PREFIX))
    {
        body.push_str(&lines[start].trim_start()[AVAILABLE_PREFIX.len()..]);
        let mut i = start + 1;
        while body.trim_end().ends_with(',') && i < lines.len() {
            body.push_str(lines[i]);
            i += 1;
        }
    } else if let Some(start) = lines.iter().position(|l| l.trim() == "<available_action>") {
        for line in &lines[start + 1..] {
            if line.trim() == "</available_action>" {
                break;
            }
            body.push_str(line);
            body.push(',');
        }
    } else {
        return Vec::new();
    }
    body.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

/// The `Status:` line of an observation, without its prefix.
pub fn status_line(observation: &str) -> Option<&str> {
    observation
        .lines()
        .find_map(|l| l.trim_start().strip_prefix(STATUS_PREFIX))
        .map(str::trim)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajStep {
    pub action: String,
    pub observation: String,
    pub step_reward: f64,
    pub done: bool,
}

/// One recorded episode: the query, the initial observation and every (action, observation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub schema: u32,
    pub env_kind: EnvKind,
    pub task_id: String,
    pub seed: u64,
    pub config_fingerprint: String,
    pub query: String,
    pub initial_observation: String,
    pub steps: Vec<TrajStep>,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn actions(&self) -> impl Iterator<Item = &str> {
        self.steps.iter().map(|s| s.action.as_str())
    }

    /// Observation in effect before step `i`: the initial one for `i == 0`.
    pub fn observation_before(&self, i: usize) -> &str {
        if i == 0 {
            &self.initial_observation
        } else {
            &self.steps[i - 1].observation
        }
    }

    pub fn pairs(&self) -> Vec<(String, String)> {
        self.steps
            .iter()
            .map(|s| (s.action.clone(), s.observation.clone()))
            .collect()
    }

    /// Checks the structural invariants of a record.
    pub fn check(&self) -> Result<()> {
        if self.schema != TRAJECTORY_SCHEMA {
            return Err(Error::Data(format!(
                "{}: unsupported trajectory schema {}",
                self.task_id, self.schema
            )));
        }
        if let Some(pos) = self.steps.iter().position(|s| s.done) {
            if pos + 1 != self.steps.len() {
                return Err(Error::Data(format!(
                    "{}: done flag set before the final step",
                    self.task_id
                )));
            }
        }
        if self.success && !self.steps.last().is_some_and(|s| s.done) {
            return Err(Error::Data(format!(
                "{}: success recorded without a terminal step",
                self.task_id
            )));
        }
        Ok(())
    }
}

/// Writes a corpus as line-delimited JSON, one trajectory per line.
pub fn write_corpus(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for t in trajectories {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_corpus(path: &Path) -> Result<Vec<Trajectory>> {
    let file = fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open corpus {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Trajectory = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), n + 1)))?;
        t.check()?;
        out.push(t);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG_AVAILABLE: &str = "<available_action>
close cabinet 3,examine cabinet 3,go to cabinet 1,go to cabinet 10,
go to cabinet 2,go to cabinet 4,go to cabinet 5,go to cabinet 6,
go to cabinet 7,go to cabinet 8,go to cabinet 9,go to coffeemachine 1,
go to countertop 1,go to diningtable 1,go to drawer 1,go to drawer 2,
go to fridge 1,go to garbagecan 1,go to microwave 1,go to sinkbasin 1,
go to stoveburner 1,go to stoveburner 2,go to stoveburner 3,
go to stoveburner 4,go to toaster 1,inventory,look,
take dishsponge 2 from cabinet 3
</available_action>";

    #[test]
    fn extracts_tagged_block() {
        let a = extract_available(FIG_AVAILABLE);
        assert_eq!(a.len(), 28);
        assert_eq!(a[0], "close cabinet 3");
        assert_eq!(a[27], "take dishsponge 2 from cabinet 3");
    }

    #[test]
    fn extracts_wrapped_prefixed_list() {
        let obs = "You open it.\nAvailable actions: go to cabinet 1,\ngo to cabinet 2,look\nnot part of it";
        assert_eq!(
            extract_available(obs),
            vec!["go to cabinet 1", "go to cabinet 2", "look"]
        );
    }

    #[test]
    fn nothing_to_extract() {
        assert!(extract_available("You see nothing.").is_empty());
        assert_eq!(
            extract_available("Status: inventory empty\nAvailable actions: get wood,craft plank"),
            vec!["get wood", "craft plank"]
        );
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("maze".parse::<EnvKind>().unwrap(), EnvKind::Maze);
        assert_eq!("Wordle".parse::<EnvKind>().unwrap(), EnvKind::Wordguess);
        assert!("alfworld".parse::<EnvKind>().is_err());
    }

    #[test]
    fn corpus_round_trip_and_schema_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ndrec");
        let t = Trajectory {
            schema: TRAJECTORY_SCHEMA,
            env_kind: EnvKind::Maze,
            task_id: "maze-1".into(),
            seed: 1,
            config_fingerprint: "f".into(),
            query: "q".into(),
            initial_observation: "o".into(),
            steps: vec![TrajStep {
                action: "move up".into(),
                observation: "x".into(),
                step_reward: -1.0,
                done: true,
            }],
            success: true,
            error: None,
        };
        write_corpus(&path, &[t.clone(), t.clone()]).unwrap();
        assert_eq!(read_corpus(&path).unwrap(), vec![t.clone(), t.clone()]);

        let mut bad = t;
        bad.schema = 99;
        write_corpus(&path, &[bad]).unwrap();
        assert!(matches!(read_corpus(&path), Err(Error::Data(_))));
        assert!(matches!(
            read_corpus(&dir.path().join("missing")),
            Err(Error::Data(_))
        ));
    }
}
