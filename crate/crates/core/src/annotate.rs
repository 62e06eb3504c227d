//! Critical steps, stage progress labels and retention labels for recorded trajectories.
//!
//! Local annotation reads only what a trajectory records (actions and observation text), so
//! it works on corpora without rebuilding environments. The remote annotator asks a
//! completion endpoint for "action -> sub-goal" bullets instead.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::belief::{RetentionDecision, StepLabels};
use crate::env::constraints::ConstraintSet;
use crate::env::{craft, maze, wordguess, EnvKind, Trajectory};
use crate::error::{Error, Result};
use crate::remote::{CallStats, RemoteClient};

/// Bundled annotation prompt with `{g}` (goal) and `{t}` (trajectory) placeholders.
pub const DEFAULT_TEMPLATE: &str = include_str!("../data/annotation_template.txt");

/// Suffix that separates two consecutive stages whose labels would otherwise coincide.
pub const REPEAT_SUFFIX: &str = " (again)";

/// Label given to a final step that had to be forced into the critical set.
pub const FORCED_FINAL_LABEL: &str = "complete the goal";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotations {
    pub critical: BTreeSet<usize>,
    pub progress_labels: Vec<String>,
    /// Entry `i` judges the observation returned by step `i`.
    pub retention_labels: Vec<RetentionDecision>,
}

impl Annotations {
    pub fn is_critical(&self, i: usize) -> bool {
        self.critical.contains(&i)
    }

    pub fn check(&self, len: usize) -> Result<()> {
        if self.progress_labels.len() != len || self.retention_labels.len() != len {
            return Err(Error::invalid(format!(
                "annotations hold {} progress and {} retention labels for {len} steps",
                self.progress_labels.len(),
                self.retention_labels.len()
            )));
        }
        if let Some(&bad) = self.critical.iter().find(|&&i| i >= len) {
            return Err(Error::invalid(format!("critical index {bad} beyond {len} steps")));
        }
        Ok(())
    }
}

impl StepLabels for Annotations {
    fn len(&self) -> usize {
        self.progress_labels.len()
    }

    fn progress_label(&self, step: usize) -> &str {
        &self.progress_labels[step]
    }

    fn retention(&self, step: usize) -> &RetentionDecision {
        &self.retention_labels[step]
    }
}

/// Per-step facts a local scan extracts: whether the step advanced the task, and the label
/// its stage would carry.
struct Scan {
    advanced: Vec<bool>,
    stage_label: Vec<String>,
    retention: Vec<RetentionDecision>,
}

fn scan(traj: &Trajectory) -> Result<Scan> {
    match traj.env_kind {
        EnvKind::Maze => scan_maze(traj),
        EnvKind::Wordguess => Ok(scan_wordguess(traj)),
        EnvKind::Craft => scan_craft(traj),
    }
}

fn scan_maze(traj: &Trajectory) -> Result<Scan> {
    let dist = |obs: &str, i: usize| {
        maze::parse_status(obs)
            .map(|(a, g)| a.manhattan(g))
            .ok_or_else(|| Error::Data(format!("{}: step {i} has no maze status line", traj.task_id)))
    };
    let mut before = dist(&traj.initial_observation, 0)?;
    let mut out = Scan {
        advanced: vec![],
        stage_label: vec![],
        retention: vec![],
    };
    for (i, step) in traj.steps.iter().enumerate() {
        let after = dist(&step.observation, i)?;
        out.advanced.push(after < before);
        out.stage_label.push(format!("reduce distance to {after}"));
        out.retention.push(RetentionDecision::Skip);
        before = after;
    }
    Ok(out)
}

fn scan_wordguess(traj: &Trajectory) -> Scan {
    let mut known = ConstraintSet::new();
    let mut out = Scan {
        advanced: vec![],
        stage_label: vec![],
        retention: vec![],
    };
    for step in &traj.steps {
        let guess = step.action.trim().to_ascii_lowercase();
        let fresh = match wordguess::parse_observation(&step.observation) {
            Some(marks) if marks.len() == guess.chars().count() => {
                let clauses = ConstraintSet::from_feedback(&guess, &marks);
                (known.extend(&clauses) > 0).then_some(clauses)
            }
            _ => None,
        };
        out.advanced.push(fresh.is_some());
        out.stage_label.push(format!(
            "narrow candidates with constraint set of size {}",
            known.len()
        ));
        out.retention.push(match fresh {
            Some(c) => RetentionDecision::keep(c.render()),
            None => RetentionDecision::Skip,
        });
    }
    out
}

fn scan_craft(traj: &Trajectory) -> Result<Scan> {
    let inv = |obs: &str, i: usize| {
        craft::parse_inventory(obs)
            .ok_or_else(|| Error::Data(format!("{}: step {i} has no inventory line", traj.task_id)))
    };
    let mut before = inv(&traj.initial_observation, 0)?;
    let mut saved: BTreeSet<String> = BTreeSet::new();
    let mut out = Scan {
        advanced: vec![],
        stage_label: vec![],
        retention: vec![],
    };
    for (i, step) in traj.steps.iter().enumerate() {
        let after = inv(&step.observation, i)?;
        let action = step.action.trim();
        out.advanced.push(after != before);
        out.stage_label.push(match action.strip_prefix("get ") {
            Some(item) => format!("obtain {}", item.trim()),
            None => action.to_string(),
        });
        let fresh: Vec<String> = craft::revealed_recipes(&step.observation)
            .into_iter()
            .filter(|r| saved.insert(r.clone()))
            .map(|r| format!("recipe: {r}"))
            .collect();
        out.retention.push(if fresh.is_empty() {
            RetentionDecision::Skip
        } else {
            RetentionDecision::keep(fresh.join("; "))
        });
        before = after;
    }
    Ok(out)
}

fn require_success(traj: &Trajectory) -> Result<()> {
    if traj.success {
        Ok(())
    } else {
        Err(Error::Unsupported(format!(
            "{}: critical steps are only defined on successful trajectories",
            traj.task_id
        )))
    }
}

/// Steps that advance the task; the final step is always included.
pub fn identify_critical(traj: &Trajectory) -> Result<BTreeSet<usize>> {
    require_success(traj)?;
    Ok(annotate_unchecked(traj)?.critical)
}

/// Each step carries the label of the stage whose critical step comes next.
///
/// `stage_label[j]` names the stage closed by critical step `j`. Consecutive equal stage
/// labels are separated with [`REPEAT_SUFFIX`]. Steps after the last critical step keep the
/// last stage's label.
pub fn assemble_labels(stage_label: &[String], critical: &BTreeSet<usize>) -> Result<Vec<String>> {
    let n = stage_label.len();
    if let Some(&bad) = critical.iter().find(|&&i| i >= n) {
        return Err(Error::invalid(format!("critical index {bad} beyond {n} steps")));
    }
    let mut stages: Vec<(usize, String)> = Vec::new();
    for &j in critical {
        let mut label = stage_label[j].clone();
        if let Some((_, prev)) = stages.last() {
            if crate::belief::progress_equal(prev, &label) {
                label.push_str(REPEAT_SUFFIX);
            }
        }
        stages.push((j, label));
    }
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    for i in 0..n {
        while k < stages.len() && stages[k].0 < i {
            k += 1;
        }
        let label = match stages.get(k).or(stages.last()) {
            Some((_, l)) => l.clone(),
            None => stage_label.get(i).cloned().unwrap_or_default(),
        };
        out.push(label);
    }
    Ok(out)
}

/// Stage labels for every step given a critical set.
pub fn synthesize_progress(traj: &Trajectory, critical: &BTreeSet<usize>) -> Result<Vec<String>> {
    let s = scan(traj)?;
    assemble_labels(&s.stage_label, critical)
}

/// Whether each step's observation adds information worth saving, and in what form.
pub fn retention_labels(traj: &Trajectory) -> Result<Vec<RetentionDecision>> {
    Ok(scan(traj)?.retention)
}

/// Full local annotation of a successful trajectory.
pub fn annotate_local(traj: &Trajectory) -> Result<Annotations> {
    require_success(traj)?;
    annotate_unchecked(traj)
}

/// Local annotation without the success requirement, for partial or failed episodes.
pub fn annotate_unchecked(traj: &Trajectory) -> Result<Annotations> {
    let s = scan(traj)?;
    let mut critical: BTreeSet<usize> = s
        .advanced
        .iter()
        .enumerate()
        .filter_map(|(i, &a)| a.then_some(i))
        .collect();
    if !traj.steps.is_empty() {
        critical.insert(traj.steps.len() - 1);
    }
    Ok(Annotations {
        progress_labels: assemble_labels(&s.stage_label, &critical)?,
        retention_labels: s.retention,
        critical,
    })
}

pub trait Annotator: Sync {
    fn annotate(&self, traj: &Trajectory) -> Result<Annotations>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LocalAnnotator;

impl Annotator for LocalAnnotator {
    fn annotate(&self, traj: &Trajectory) -> Result<Annotations> {
        annotate_local(traj)
    }
}

/// Annotations loaded from a file, looked up by task id.
#[derive(Debug, Clone, Default)]
pub struct StoredAnnotations(pub BTreeMap<String, Annotations>);

impl Annotator for StoredAnnotations {
    fn annotate(&self, traj: &Trajectory) -> Result<Annotations> {
        let a = self
            .0
            .get(&traj.task_id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("no annotations for {}", traj.task_id)))?;
        a.check(traj.len())?;
        Ok(a)
    }
}

/// One parsed "action -> sub-goal" bullet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bullet {
    pub action: String,
    pub subgoal: String,
}

pub fn parse_bullets(response: &str) -> Result<Vec<Bullet>> {
    let bullets: Vec<Bullet> = response
        .lines()
        .filter_map(|l| {
            let l = l.trim();
            let body = l.strip_prefix("- ").or_else(|| l.strip_prefix("* "))?;
            let (a, g) = body.split_once("->")?;
            let (a, g) = (a.trim(), g.trim());
            (!a.is_empty() && !g.is_empty()).then(|| Bullet {
                action: a.to_string(),
                subgoal: g.to_string(),
            })
        })
        .collect();
    if bullets.is_empty() {
        return Err(Error::AnnotationFormat(
            "response contains no \"action -> sub-goal\" bullets".into(),
        ));
    }
    Ok(bullets)
}

/// Result of aligning bullets with a trajectory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    /// Matched step index to sub-goal.
    pub matched: BTreeMap<usize, String>,
    pub unmatched: Vec<Bullet>,
}

/// Matches bullets to actions left to right: each bullet takes the earliest step after the
/// previous match whose action text is identical.
pub fn align_bullets(actions: &[&str], bullets: &[Bullet]) -> Alignment {
    let mut matched = BTreeMap::new();
    let mut unmatched = Vec::new();
    let mut cursor = 0;
    for b in bullets {
        match (cursor..actions.len()).find(|&i| actions[i].trim() == b.action) {
            Some(i) => {
                matched.insert(i, b.subgoal.clone());
                cursor = i + 1;
            }
            None => unmatched.push(b.clone()),
        }
    }
    Alignment { matched, unmatched }
}

/// Renders the `{t}` placeholder: one "action -> observation" line per step.
pub fn render_trajectory_text(traj: &Trajectory) -> String {
    traj.steps
        .iter()
        .map(|s| {
            let obs: Vec<&str> = s
                .observation
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .collect();
            format!("{} -> {}", s.action, obs.join(" "))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn fill_template(template: &str, traj: &Trajectory) -> Result<String> {
    if !template.contains("{g}") || !template.contains("{t}") {
        return Err(Error::invalid(
            "annotation template needs {g} and {t} placeholders",
        ));
    }
    Ok(template
        .replace("{g}", &traj.query)
        .replace("{t}", &render_trajectory_text(traj)))
}

/// Builds annotations from an alignment. A final step left out by the annotator is forced
/// into the critical set.
pub fn annotations_from_alignment(traj: &Trajectory, alignment: &Alignment) -> Result<Annotations> {
    let n = traj.len();
    let mut stage_label = vec![String::new(); n];
    let mut critical = BTreeSet::new();
    for (&i, g) in &alignment.matched {
        stage_label[i] = g.clone();
        critical.insert(i);
    }
    if n > 0 && !critical.contains(&(n - 1)) {
        log::warn!(
            "{}: annotator skipped the final step; marking it critical",
            traj.task_id
        );
        critical.insert(n - 1);
        stage_label[n - 1] = FORCED_FINAL_LABEL.to_string();
    }
    let retention_labels = match retention_labels(traj) {
        Ok(r) => r,
        Err(_) => vec![RetentionDecision::Skip; n],
    };
    Ok(Annotations {
        progress_labels: assemble_labels(&stage_label, &critical)?,
        retention_labels,
        critical,
    })
}

pub struct RemoteAnnotator {
    pub client: RemoteClient,
    pub template: String,
}

impl RemoteAnnotator {
    /// Annotates and also returns the bullets that matched no step.
    pub fn annotate_detailed(&self, traj: &Trajectory) -> Result<(Annotations, Vec<Bullet>)> {
        require_success(traj)?;
        let prompt = fill_template(&self.template, traj)?;
        let mut stats = CallStats::default();
        let response = self.client.complete(&prompt, &mut stats)?;
        if response.trim().is_empty() {
            return Err(Error::AnnotationFormat("empty response".into()));
        }
        let bullets = parse_bullets(&response)?;
        let actions: Vec<&str> = traj.actions().collect();
        let alignment = align_bullets(&actions, &bullets);
        for b in &alignment.unmatched {
            log::warn!(
                "{}: bullet {:?} matches no remaining step",
                traj.task_id,
                b.action
            );
        }
        Ok((annotations_from_alignment(traj, &alignment)?, alignment.unmatched))
    }
}

impl Annotator for RemoteAnnotator {
    fn annotate(&self, traj: &Trajectory) -> Result<Annotations> {
        self.annotate_detailed(traj).map(|(a, _)| a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub task_id: String,
    #[serde(flatten)]
    pub annotations: Annotations,
}

pub fn write_annotations(path: &Path, records: &[AnnotationRecord]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_annotations(path: &Path) -> Result<StoredAnnotations> {
    let file = fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open annotations {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: AnnotationRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), n + 1)))?;
        map.insert(r.task_id, r.annotations);
    }
    Ok(StoredAnnotations(map))
}
