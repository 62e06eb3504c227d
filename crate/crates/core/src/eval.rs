//! Episode runner and aggregate metrics.
//!
//! Failed episodes count with the full budget in the step metric. Token counts are
//! whitespace tokens inside the prompt and response tags.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{init_belief, provisional_belief, update_belief, START_PROGRESS};
use crate::env::{env_reset, EnvConfig, TrajStep, Trajectory, TRAJECTORY_SCHEMA};
use crate::error::{Error, Result};
use crate::policy::{CallStats, DecisionContext, Policy};
use crate::prompt::{count_tagged_tokens, render_model_output};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub success: bool,
    pub steps_taken: usize,
    /// `steps_taken` on success, the budget otherwise.
    pub steps_metric: usize,
    pub budget: usize,
    pub input_tokens: usize,
    pub output_tokens: usize,
    /// Input tokens of each prompt, in step order.
    pub prompt_tokens: Vec<usize>,
    pub wall_time: f64,
    pub retries: usize,
    pub reprompts: usize,
    pub error: Option<String>,
    /// The policy failure came from the network path.
    #[serde(default)]
    pub transport_error: bool,
    pub transcript: Trajectory,
}

pub fn steps_metric(success: bool, steps_taken: usize, budget: usize) -> usize {
    if success {
        steps_taken
    } else {
        budget
    }
}

/// Runs one episode. Each decision sees the provisional belief, returns retention,
/// progress and action, the committed belief is updated with the retention and progress,
/// and then the action executes.
///
/// Policy errors end the episode as a failure; only invalid arguments and reset failures
/// are returned as errors.
pub fn run_episode(
    config: &EnvConfig,
    seed: u64,
    policy: &dyn Policy,
    budget: usize,
) -> Result<EpisodeResult> {
    if budget == 0 {
        return Err(Error::invalid("budget must be at least 1"));
    }
    let started = Instant::now();
    let config = config.with_budget(budget);
    let (mut env, query, initial) = env_reset(&config, seed)?;
    let style = policy.style();

    let mut provisional = init_belief(&query, &initial, START_PROGRESS)?;
    let mut committed = provisional.clone();
    let mut history: Vec<TrajStep> = Vec::new();
    let mut stats = CallStats::default();
    let mut prompt_tokens = Vec::new();
    let mut output_tokens = 0;
    let mut error = None;
    let mut transport_error = false;

    while !env.is_done() {
        let ctx = DecisionContext {
            query: &query,
            initial_observation: &initial,
            belief: &provisional,
            history: &history,
            env: &env,
        };
        prompt_tokens.push(count_tagged_tokens(&ctx.prompt(style))?.input);
        let decision = match policy.decide(&ctx, &mut stats) {
            Ok(d) => d,
            Err(e) => {
                log::debug!("episode {seed}: policy failed at step {}: {e}", history.len());
                error = Some(e.to_string());
                transport_error = e.is_transport();
                break;
            }
        };
        let rendered = render_model_output(&decision.retention, &decision.progress, &decision.action);
        output_tokens += count_tagged_tokens(&rendered)?.output;

        committed = match history.last() {
            None => provisional.with_progress(&decision.progress),
            Some(last) => update_belief(
                &committed,
                &last.action,
                &last.observation,
                &decision.retention,
                &decision.progress,
            ),
        };
        let outcome = env.step(&decision.action)?;
        provisional = provisional_belief(&committed, &decision.action, &outcome.observation);
        history.push(TrajStep {
            action: decision.action,
            observation: outcome.observation,
            step_reward: outcome.reward,
            done: outcome.done,
        });
    }

    let success = env.is_success();
    let steps_taken = history.len();
    let transcript = Trajectory {
        schema: TRAJECTORY_SCHEMA,
        env_kind: config.kind(),
        task_id: format!("{}-{seed}", config.kind()),
        seed,
        config_fingerprint: config.fingerprint(),
        query,
        initial_observation: initial,
        steps: history,
        success,
        error: error.clone(),
    };
    Ok(EpisodeResult {
        success,
        steps_taken,
        steps_metric: steps_metric(success, steps_taken, budget),
        budget,
        input_tokens: prompt_tokens.iter().sum(),
        output_tokens,
        prompt_tokens,
        wall_time: started.elapsed().as_secs_f64(),
        retries: stats.retries,
        reprompts: stats.reprompts,
        error,
        transport_error,
        transcript,
    })
}

/// One evaluation setting: an environment configuration and the seeds to run.
#[derive(Debug, Clone, PartialEq)]
pub struct Setting {
    pub name: String,
    pub config: EnvConfig,
    pub seeds: Vec<u64>,
    /// Overrides the configuration's budget when set.
    pub budget: Option<usize>,
}

impl Setting {
    pub fn budget(&self) -> usize {
        self.budget.unwrap_or_else(|| self.config.budget())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingMetrics {
    pub name: String,
    pub episodes: usize,
    pub successes: usize,
    /// Percent.
    pub success_rate: f64,
    pub mean_steps: f64,
    pub input_tokens: usize,
    pub output_tokens: usize,
    pub wall_time: f64,
    pub retries: usize,
    pub reprompts: usize,
    pub errors: usize,
}

impl SettingMetrics {
    pub fn from_results(name: &str, results: &[EpisodeResult]) -> SettingMetrics {
        let episodes = results.len();
        let successes = results.iter().filter(|r| r.success).count();
        let per = |x: f64| if episodes == 0 { 0.0 } else { x / episodes as f64 };
        SettingMetrics {
            name: name.to_string(),
            episodes,
            successes,
            success_rate: per(100.0 * successes as f64),
            mean_steps: per(results.iter().map(|r| r.steps_metric as f64).sum()),
            input_tokens: results.iter().map(|r| r.input_tokens).sum(),
            output_tokens: results.iter().map(|r| r.output_tokens).sum(),
            wall_time: results.iter().map(|r| r.wall_time).sum(),
            retries: results.iter().map(|r| r.retries).sum(),
            reprompts: results.iter().map(|r| r.reprompts).sum(),
            errors: results.iter().filter(|r| r.error.is_some()).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub settings: Vec<SettingMetrics>,
    /// Unweighted means over settings.
    pub macro_success_rate: f64,
    pub macro_mean_steps: f64,
}

impl MetricsReport {
    pub fn from_settings(label: &str, settings: Vec<SettingMetrics>) -> MetricsReport {
        let n = settings.len().max(1) as f64;
        MetricsReport {
            label: label.to_string(),
            macro_success_rate: settings.iter().map(|s| s.success_rate).sum::<f64>() / n,
            macro_mean_steps: settings.iter().map(|s| s.mean_steps).sum::<f64>() / n,
            settings,
        }
    }

    pub fn input_tokens(&self) -> usize {
        self.settings.iter().map(|s| s.input_tokens).sum()
    }

    pub fn output_tokens(&self) -> usize {
        self.settings.iter().map(|s| s.output_tokens).sum()
    }

    pub fn wall_time(&self) -> f64 {
        self.settings.iter().map(|s| s.wall_time).sum()
    }
}

/// Episode results of one setting, in seed order.
#[derive(Debug, Clone)]
pub struct SettingRun {
    pub name: String,
    pub results: Vec<EpisodeResult>,
}

/// Runs every setting's seeds on a pool of `workers` threads.
pub fn evaluate(
    label: &str,
    suite: &[Setting],
    policy: &dyn Policy,
    workers: usize,
) -> Result<(MetricsReport, Vec<SettingRun>)> {
    if suite.is_empty() {
        return Err(Error::invalid("evaluation suite is empty"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let runs: Vec<SettingRun> = pool.install(|| {
        suite
            .iter()
            .map(|s| {
                let budget = s.budget();
                let results = s
                    .seeds
                    .par_iter()
                    .map(|&seed| run_episode(&s.config, seed, policy, budget))
                    .collect::<Result<Vec<_>>>()?;
                Ok(SettingRun {
                    name: s.name.clone(),
                    results,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let settings = runs
        .iter()
        .map(|r| SettingMetrics::from_results(&r.name, &r.results))
        .collect();
    Ok((MetricsReport::from_settings(label, settings), runs))
}

/// Fixed-width comparison table, one row per report and setting plus a macro row each.
pub fn compare(reports: &[MetricsReport]) -> Result<String> {
    let first = reports
        .first()
        .ok_or_else(|| Error::invalid("nothing to compare"))?;
    let names: Vec<&str> = first.settings.iter().map(|s| s.name.as_str()).collect();
    for r in reports {
        let other: Vec<&str> = r.settings.iter().map(|s| s.name.as_str()).collect();
        if other != names {
            return Err(Error::invalid(format!(
                "report {:?} covers settings {other:?}, expected {names:?}",
                r.label
            )));
        }
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:<12} {:>8} {:>8} {:>12} {:>10} {:>9}",
        "label", "setting", "succ%", "step#", "in_tokens", "out_tokens", "time_s"
    );
    for r in reports {
        for s in &r.settings {
            let _ = writeln!(
                out,
                "{:<16} {:<12} {:>8.1} {:>8.2} {:>12} {:>10} {:>9.2}",
                r.label, s.name, s.success_rate, s.mean_steps, s.input_tokens, s.output_tokens, s.wall_time
            );
        }
        if r.settings.len() > 1 {
            let _ = writeln!(
                out,
                "{:<16} {:<12} {:>8.1} {:>8.2} {:>12} {:>10} {:>9.2}",
                r.label,
                "macro",
                r.macro_success_rate,
                r.macro_mean_steps,
                r.input_tokens(),
                r.output_tokens(),
                r.wall_time()
            );
        }
    }
    Ok(out)
}

/// Writes one record per setting followed by a macro record.
pub fn write_report(path: &Path, report: &MetricsReport) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for s in &report.settings {
        let mut v = serde_json::to_value(s)?;
        v["label"] = report.label.clone().into();
        v["record"] = "setting".into();
        serde_json::to_writer(&mut out, &v)?;
        out.write_all(b"\n")?;
    }
    let summary = serde_json::json!({
        "record": "macro",
        "label": report.label,
        "macro_success_rate": report.macro_success_rate,
        "macro_mean_steps": report.macro_mean_steps,
        "input_tokens": report.input_tokens(),
        "output_tokens": report.output_tokens(),
        "wall_time": report.wall_time(),
    });
    serde_json::to_writer(&mut out, &summary)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Reads a report written by [`write_report`].
pub fn read_report(path: &Path) -> Result<MetricsReport> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read report {}: {e}", path.display())))?;
    let mut label = None;
    let mut settings = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), n + 1)))?;
        if v["record"] == "setting" {
            label = v["label"].as_str().map(String::from);
            settings.push(
                serde_json::from_value::<SettingMetrics>(v)
                    .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), n + 1)))?,
            );
        } else if v["record"] == "macro" {
            label = v["label"].as_str().map(String::from).or(label);
        }
    }
    let label = label.ok_or_else(|| Error::Data(format!("{}: no report records", path.display())))?;
    Ok(MetricsReport::from_settings(&label, settings))
}
