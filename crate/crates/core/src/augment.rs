//! Turning annotated trajectories into supervised examples.
//!
//! Four regimes:
//!
//! | mode | examples | context | target action |
//! |------|----------|---------|---------------|
//! | orm  | every step | full history | recorded |
//! | prm  | critical steps | full history | recorded |
//! | pa   | every step | full history | next critical action |
//! | pabu | every step | belief prompt | next critical action |
//!
//! "Next critical action" is the recorded action itself on critical steps. Every example
//! also carries the retention label of the observation preceding the step and the step's
//! progress label, so all regimes share one target layout.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotate::{Annotations, Annotator};
use crate::belief::{
    init_belief, provisional_belief, update_belief, BeliefState, RetentionDecision, StepLabels,
    START_PROGRESS,
};
use crate::env::{env_reset, EnvConfig, TrajStep, Trajectory};
use crate::error::{Error, Result};
use crate::prompt::{history_context, serialize_belief};

pub const DATASET_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Orm,
    Prm,
    Pa,
    Pabu,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Orm, Mode::Prm, Mode::Pa, Mode::Pabu];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Orm => "orm",
            Mode::Prm => "prm",
            Mode::Pa => "pa",
            Mode::Pabu => "pabu",
        }
    }

    pub fn augments(self) -> bool {
        matches!(self, Mode::Pa | Mode::Pabu)
    }

    pub fn uses_belief(self) -> bool {
        self == Mode::Pabu
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "orm" => Ok(Mode::Orm),
            "prm" => Ok(Mode::Prm),
            "pa" => Ok(Mode::Pa),
            "pabu" => Ok(Mode::Pabu),
            other => Err(Error::invalid(format!("unknown dataset mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExampleSource {
    pub task_id: String,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub mode: Mode,
    pub context: String,
    pub target_retention: RetentionDecision,
    pub target_progress: String,
    pub target_action: String,
    pub source: ExampleSource,
    pub is_augmented: bool,
}

/// Smallest critical index after `i`.
pub fn next_progress_consistent(i: usize, critical: &BTreeSet<usize>) -> Result<usize> {
    critical
        .range(i + 1..)
        .next()
        .copied()
        .ok_or_else(|| Error::NotFound(format!("no critical step after step {i}")))
}

fn check_inputs(traj: &Trajectory, ann: &Annotations) -> Result<()> {
    if !traj.success {
        return Err(Error::Unsupported(format!(
            "{}: only successful trajectories are augmented",
            traj.task_id
        )));
    }
    ann.check(traj.len())
}

/// Target action for step `i` and whether it differs in origin from the recorded one.
fn target_for(traj: &Trajectory, ann: &Annotations, mode: Mode, i: usize) -> Result<(String, bool)> {
    if !mode.augments() || ann.is_critical(i) {
        return Ok((traj.steps[i].action.clone(), false));
    }
    let j = next_progress_consistent(i, &ann.critical)
        .map_err(|e| Error::Data(format!("{}: {e}", traj.task_id)))?;
    Ok((traj.steps[j].action.clone(), true))
}

/// Provisional beliefs seen before each step when the annotation labels drive the updates.
pub fn replay_beliefs(
    query: &str,
    initial_observation: &str,
    steps: &[TrajStep],
    labels: &impl StepLabels,
) -> Result<Vec<BeliefState>> {
    let mut out = Vec::with_capacity(steps.len());
    let first = init_belief(query, initial_observation, START_PROGRESS)?;
    if steps.is_empty() {
        return Ok(out);
    }
    out.push(first.clone());
    let mut committed = first.with_progress(labels.progress_label(0));
    for i in 1..steps.len() {
        let prev = &steps[i - 1];
        out.push(provisional_belief(&committed, &prev.action, &prev.observation));
        committed = update_belief(
            &committed,
            &prev.action,
            &prev.observation,
            labels.retention(i - 1),
            labels.progress_label(i),
        );
    }
    Ok(out)
}

fn example(
    traj: &Trajectory,
    ann: &Annotations,
    mode: Mode,
    i: usize,
    context: String,
    target: (String, bool),
) -> TrainingExample {
    TrainingExample {
        mode,
        context,
        target_retention: if i == 0 {
            RetentionDecision::Skip
        } else {
            ann.retention(i - 1).clone()
        },
        target_progress: ann.progress_label(i).to_string(),
        target_action: target.0,
        source: ExampleSource {
            task_id: traj.task_id.clone(),
            step: i,
        },
        is_augmented: target.1,
    }
}

/// Examples for one trajectory, following the recorded observations.
pub fn augment_trajectory(traj: &Trajectory, ann: &Annotations, mode: Mode) -> Result<Vec<TrainingExample>> {
    check_inputs(traj, ann)?;
    let beliefs = if mode.uses_belief() {
        replay_beliefs(&traj.query, &traj.initial_observation, &traj.steps, ann)?
    } else {
        Vec::new()
    };
    let pairs = traj.pairs();
    let mut out = Vec::new();
    for i in 0..traj.len() {
        if mode == Mode::Prm && !ann.is_critical(i) {
            continue;
        }
        let context = if mode.uses_belief() {
            serialize_belief(&beliefs[i]).into_string()
        } else {
            history_context(&traj.query, &traj.initial_observation, &pairs[..i])
        };
        let target = target_for(traj, ann, mode, i)?;
        out.push(example(traj, ann, mode, i, context, target));
    }
    Ok(out)
}

/// Env-backed augmentation: executes each step's target action in a fresh environment and
/// builds contexts from the observations it actually returns. Stops early if the episode
/// ends before the recorded length.
pub fn augment_trajectory_live(
    traj: &Trajectory,
    ann: &Annotations,
    mode: Mode,
    config: &EnvConfig,
) -> Result<Vec<TrainingExample>> {
    check_inputs(traj, ann)?;
    check_fingerprint(traj, config)?;
    let (mut env, query, initial) = env_reset(config, traj.seed)?;
    let mut live: Vec<TrajStep> = Vec::new();
    let mut out = Vec::new();
    for i in 0..traj.len() {
        if env.is_done() {
            break;
        }
        let target = target_for(traj, ann, mode, i)?;
        if mode != Mode::Prm || ann.is_critical(i) {
            let context = if mode.uses_belief() {
                let labels = PrefixLabels(ann, i + 1);
                let beliefs = replay_beliefs(&query, &initial, &padded(&live), &labels)?;
                serialize_belief(&beliefs[i]).into_string()
            } else {
                let pairs: Vec<(String, String)> = live
                    .iter()
                    .map(|s| (s.action.clone(), s.observation.clone()))
                    .collect();
                history_context(&query, &initial, &pairs)
            };
            out.push(example(traj, ann, mode, i, context, target.clone()));
        }
        let o = env.step(&target.0)?;
        live.push(TrajStep {
            action: target.0,
            observation: o.observation,
            step_reward: o.reward,
            done: o.done,
        });
    }
    Ok(out)
}

/// The live steps plus a placeholder for the step about to be taken.
fn padded(live: &[TrajStep]) -> Vec<TrajStep> {
    let mut v = live.to_vec();
    v.push(TrajStep {
        action: String::new(),
        observation: String::new(),
        step_reward: 0.0,
        done: false,
    });
    v
}

struct PrefixLabels<'a>(&'a Annotations, usize);

impl StepLabels for PrefixLabels<'_> {
    fn len(&self) -> usize {
        self.1
    }

    fn progress_label(&self, step: usize) -> &str {
        self.0.progress_label(step)
    }

    fn retention(&self, step: usize) -> &RetentionDecision {
        self.0.retention(step)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub trajectories: usize,
    /// Trajectories that produced examples.
    pub used: usize,
    /// Trajectories left out: failed episodes or annotation errors.
    pub skipped: usize,
    pub decisions: usize,
    pub critical: usize,
    pub examples: usize,
    pub augmented: usize,
}

impl DatasetStats {
    pub fn critical_fraction(&self) -> f64 {
        if self.decisions == 0 {
            0.0
        } else {
            self.critical as f64 / self.decisions as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub record: String,
    pub mode: Mode,
    pub schema: u32,
    pub corpus_fingerprint: String,
}

/// Fingerprint of a corpus's content, stable across runs.
pub fn corpus_fingerprint(trajectories: &[Trajectory]) -> Result<String> {
    let lines: Vec<String> = trajectories
        .iter()
        .map(serde_json::to_string)
        .collect::<std::result::Result<_, _>>()?;
    let refs: Vec<&str> = lines.iter().map(String::as_str).collect();
    Ok(crate::util::fingerprint(&refs))
}

/// Annotates and augments a corpus in parallel. Returns examples in corpus order.
pub fn augment_corpus(
    trajectories: &[Trajectory],
    annotator: &dyn Annotator,
    mode: Mode,
) -> (Vec<TrainingExample>, DatasetStats) {
    let per: Vec<Option<(usize, usize, Vec<TrainingExample>)>> = trajectories
        .par_iter()
        .map(|t| {
            if !t.success {
                log::info!("{}: skipping failed trajectory", t.task_id);
                return None;
            }
            let run = || -> Result<_> {
                let ann = annotator.annotate(t)?;
                let ex = augment_trajectory(t, &ann, mode)?;
                Ok((t.len(), ann.critical.len(), ex))
            };
            match run() {
                Ok(r) => Some(r),
                Err(e) => {
                    log::warn!("{}: skipped ({e})", t.task_id);
                    None
                }
            }
        })
        .collect();
    let mut stats = DatasetStats {
        trajectories: trajectories.len(),
        ..DatasetStats::default()
    };
    let mut examples = Vec::new();
    for r in per {
        match r {
            Some((decisions, critical, ex)) => {
                stats.used += 1;
                stats.decisions += decisions;
                stats.critical += critical;
                stats.augmented += ex.iter().filter(|e| e.is_augmented).count();
                examples.extend(ex);
            }
            None => stats.skipped += 1,
        }
    }
    stats.examples = examples.len();
    (examples, stats)
}

/// Builds a dataset file: one header line, then one example per line.
pub fn build_dataset(
    trajectories: &[Trajectory],
    annotator: &dyn Annotator,
    mode: Mode,
    output_path: &Path,
) -> Result<DatasetStats> {
    let (examples, stats) = augment_corpus(trajectories, annotator, mode);
    let header = DatasetHeader {
        record: "header".into(),
        mode,
        schema: DATASET_SCHEMA,
        corpus_fingerprint: corpus_fingerprint(trajectories)?,
    };
    write_dataset(output_path, &header, &examples)?;
    Ok(stats)
}

pub fn write_dataset(path: &Path, header: &DatasetHeader, examples: &[TrainingExample]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer(&mut out, header)?;
    out.write_all(b"\n")?;
    for e in examples {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<(DatasetHeader, Vec<TrainingExample>)> {
    let file = fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open dataset {}: {e}", path.display())))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Data(format!("{}: empty dataset file", path.display())))?;
    let header: DatasetHeader = serde_json::from_str(&first)
        .map_err(|e| Error::Data(format!("{}: bad header: {e}", path.display())))?;
    if header.record != "header" || header.schema != DATASET_SCHEMA {
        return Err(Error::Data(format!(
            "{}: unsupported dataset header",
            path.display()
        )));
    }
    let mut examples = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: TrainingExample = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), n + 2)))?;
        if e.mode != header.mode {
            return Err(Error::Data(format!(
                "{}:{}: example mode differs from header",
                path.display(),
                n + 2
            )));
        }
        examples.push(e);
    }
    Ok((header, examples))
}

fn check_fingerprint(traj: &Trajectory, config: &EnvConfig) -> Result<()> {
    if traj.env_kind != config.kind() || traj.config_fingerprint != config.fingerprint() {
        return Err(Error::Validation(format!(
            "{}: recorded with config {} but validating against {}",
            traj.task_id,
            traj.config_fingerprint,
            config.fingerprint()
        )));
    }
    Ok(())
}

/// Replays the recorded actions in a fresh environment; true iff every observation, done
/// flag and the success flag match.
pub fn replay_validate(traj: &Trajectory, config: &EnvConfig) -> Result<bool> {
    check_fingerprint(traj, config)?;
    let (mut env, query, initial) = env_reset(config, traj.seed)?;
    if query != traj.query || initial != traj.initial_observation {
        return Ok(false);
    }
    for s in &traj.steps {
        if env.is_done() {
            return Ok(false);
        }
        let o = env.step(&s.action)?;
        if o.observation != s.observation || o.done != s.done {
            return Ok(false);
        }
    }
    Ok(env.is_success() == traj.success)
}
