//! `pabu`: record corpora, annotate, build datasets, fit and evaluate policies.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 transport error.

mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pabu::annotate::{
    annotate_local, read_annotations, write_annotations, AnnotationRecord, Annotator, LocalAnnotator,
    RemoteAnnotator, DEFAULT_TEMPLATE,
};
use pabu::augment::{build_dataset, read_dataset, replay_validate, Mode};
use pabu::env::{read_corpus, write_corpus, EnvConfig, EnvKind};
use pabu::eval::{compare, evaluate, read_report, write_report, EpisodeResult, Setting};
use pabu::policy::{OraclePolicy, Policy, PromptStyle, RandomPolicy, RemotePolicy, TabularPolicy};
use pabu::prompt::{
    parse_belief_prompt, parse_history_prompt, parse_model_output, render_model_output, serialize_belief,
    serialize_history_prompt,
};
use pabu::remote::RemoteClient;
use pabu::{Error, Result};

use config::Settings;

#[derive(Parser)]
#[command(
    name = "pabu",
    version,
    about = "Progress-aware belief agents on text environments"
)]
struct Cli {
    /// key = value run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Set any configuration key, e.g. `--set walls=0.3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Worker threads; defaults to available parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Record trajectories with a policy.
    Gen {
        #[command(flatten)]
        env: EnvArgs,
        #[command(flatten)]
        policy: PolicyArgs,
        #[command(flatten)]
        seeds: SeedArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label critical steps, progress and retention for a corpus.
    Annotate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// local or remote
        #[arg(long)]
        annotator: Option<String>,
        /// Annotation prompt template for the remote annotator.
        #[arg(long)]
        template: Option<PathBuf>,
        #[command(flatten)]
        remote: RemoteArgs,
    },
    /// Build an ORM, PRM, PA or PABU dataset from a corpus.
    Augment {
        #[arg(long)]
        mode: Option<String>,
        #[arg(long = "in")]
        input: PathBuf,
        /// Stored annotations; local annotation is used when omitted.
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a tabular policy on a dataset.
    Fit {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// History entries a history-keyed table looks at.
        #[arg(long)]
        window: Option<usize>,
        /// Seed for random choice among untried actions on table misses.
        #[arg(long)]
        explore_seed: Option<u64>,
    },
    /// Run an evaluation suite and report success, steps and tokens.
    Eval {
        #[command(flatten)]
        env: EnvArgs,
        #[command(flatten)]
        policy: PolicyArgs,
        #[command(flatten)]
        seeds: SeedArgs,
        /// Evaluate on the seeds recorded in this corpus instead.
        #[arg(long)]
        seeds_from: Option<PathBuf>,
        #[arg(long)]
        label: Option<String>,
        /// Report file (line-delimited records).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print reports side by side.
    Compare {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
    /// Replay a corpus and check every observation matches.
    Validate {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        env: EnvArgs,
    },
    /// Round-trip a prompt or response file and print its canonical form.
    Fmt {
        #[arg(long = "in")]
        input: PathBuf,
        /// belief, history or output
        #[arg(long, default_value = "belief")]
        kind: String,
        /// Fail if the file is not already canonical.
        #[arg(long)]
        check: bool,
    },
}

#[derive(Args)]
struct EnvArgs {
    /// maze, wordguess, craft, or a comma-separated list
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// Maze wall density.
    #[arg(long)]
    walls: Option<f64>,
    /// Word list file.
    #[arg(long)]
    words: Option<PathBuf>,
    /// Recipe file.
    #[arg(long)]
    recipes: Option<PathBuf>,
}

#[derive(Args)]
struct PolicyArgs {
    /// oracle, random, tabular or remote
    #[arg(long)]
    policy: Option<String>,
    /// Fitted tabular policy.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Prompt layout for remote policies: belief or history.
    #[arg(long)]
    style: Option<String>,
    #[command(flatten)]
    remote: RemoteArgs,
}

#[derive(Args)]
struct RemoteArgs {
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    timeout_ms: Option<u64>,
    #[arg(long)]
    retries: Option<usize>,
}

#[derive(Args)]
struct SeedArgs {
    /// First seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Episodes per environment.
    #[arg(long)]
    n: Option<usize>,
}

fn put<T: ToString>(s: &mut Settings, key: &str, v: &Option<T>) -> Result<()> {
    match v {
        Some(v) => s.set(key, v.to_string()),
        None => Ok(()),
    }
}

fn put_path(s: &mut Settings, key: &str, v: &Option<PathBuf>) -> Result<()> {
    put(s, key, &v.as_ref().map(|p| p.display().to_string()))
}

impl EnvArgs {
    fn apply(&self, s: &mut Settings) -> Result<()> {
        put(s, "env", &self.env)?;
        put(s, "budget", &self.budget)?;
        put(s, "width", &self.width)?;
        put(s, "height", &self.height)?;
        put(s, "walls", &self.walls)?;
        put_path(s, "words", &self.words)?;
        put_path(s, "recipes", &self.recipes)
    }
}

impl RemoteArgs {
    fn apply(&self, s: &mut Settings) -> Result<()> {
        put(s, "endpoint", &self.endpoint)?;
        put(s, "timeout_ms", &self.timeout_ms)?;
        put(s, "retries", &self.retries)
    }
}

impl PolicyArgs {
    fn apply(&self, s: &mut Settings) -> Result<()> {
        put(s, "policy", &self.policy)?;
        put_path(s, "model", &self.model)?;
        put(s, "style", &self.style)?;
        self.remote.apply(s)
    }
}

impl SeedArgs {
    fn apply(&self, s: &mut Settings) -> Result<()> {
        put(s, "seed", &self.seed)?;
        put(s, "n", &self.n)
    }
}

fn settings(cli: &Cli) -> Result<Settings> {
    let mut s = match &cli.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("--set {kv:?}: expected KEY=VALUE")))?;
        s.set(k.trim(), v.trim())?;
    }
    put(&mut s, "workers", &cli.workers)?;
    match &cli.command {
        Command::Gen {
            env, policy, seeds, ..
        } => {
            env.apply(&mut s)?;
            policy.apply(&mut s)?;
            seeds.apply(&mut s)?;
        }
        Command::Eval {
            env,
            policy,
            seeds,
            label,
            ..
        } => {
            env.apply(&mut s)?;
            policy.apply(&mut s)?;
            seeds.apply(&mut s)?;
            put(&mut s, "label", label)?;
        }
        Command::Annotate {
            annotator,
            template,
            remote,
            ..
        } => {
            put(&mut s, "annotator", annotator)?;
            put_path(&mut s, "template", template)?;
            remote.apply(&mut s)?;
        }
        Command::Augment { mode, .. } => put(&mut s, "mode", mode)?,
        Command::Fit {
            window, explore_seed, ..
        } => {
            put(&mut s, "window", window)?;
            put(&mut s, "explore_seed", explore_seed)?;
        }
        Command::Validate { env, .. } => env.apply(&mut s)?,
        Command::Compare { .. } | Command::Fmt { .. } => {}
    }
    Ok(s)
}

fn build_policy(s: &Settings) -> Result<Box<dyn Policy>> {
    let seed = s.get_or("seed", 0u64)?;
    match s.get_str("policy").unwrap_or("oracle") {
        "oracle" => Ok(Box::new(OraclePolicy)),
        "random" => Ok(Box::new(RandomPolicy {
            seed: s.get_or("explore_seed", seed)?,
        })),
        "tabular" => {
            let path = s
                .existing_path("model")?
                .ok_or_else(|| Error::InvalidArgument("policy tabular needs --model".into()))?;
            let mut p = TabularPolicy::load(&path)?;
            if let Some(e) = s.get("explore_seed")? {
                p.explore_seed = Some(e);
            }
            Ok(Box::new(p))
        }
        "remote" => {
            let style = match s.get_str("style").unwrap_or("belief") {
                "belief" => PromptStyle::Belief,
                "history" => PromptStyle::History,
                other => return Err(Error::InvalidArgument(format!("unknown prompt style {other:?}"))),
            };
            Ok(Box::new(RemotePolicy {
                client: RemoteClient::new(s.remote()?)?,
                style,
            }))
        }
        other => Err(Error::InvalidArgument(format!("unknown policy {other:?}"))),
    }
}

fn suite(
    s: &Settings,
    configs: Vec<EnvConfig>,
    recorded: Option<&BTreeMap<EnvKind, Vec<u64>>>,
) -> Result<Vec<Setting>> {
    let first = s.get_or("seed", 0u64)?;
    let n = s.get_or("n", 100usize)?;
    Ok(configs
        .into_iter()
        .map(|config| {
            let seeds = match recorded {
                Some(r) => r.get(&config.kind()).cloned().unwrap_or_default(),
                None => (first..first + n as u64).collect(),
            };
            Setting {
                name: config.kind().to_string(),
                config,
                seeds,
                budget: None,
            }
        })
        .filter(|st| !st.seeds.is_empty())
        .collect())
}

fn cmd_gen(s: &Settings, out: &Path) -> Result<()> {
    let policy = build_policy(s)?;
    let settings = suite(s, s.env_configs()?, None)?;
    let (_, runs) = evaluate(&policy.name(), &settings, policy.as_ref(), s.workers()?)?;
    let results: Vec<_> = runs.into_iter().flat_map(|r| r.results).collect();
    let failed_transport = transport_failures(&results);
    let corpus: Vec<_> = results.into_iter().map(|r| r.transcript).collect();
    let ok = corpus.iter().filter(|t| t.success).count();
    write_corpus(out, &corpus)?;
    eprintln!(
        "wrote {} trajectories ({ok} successful) to {}",
        corpus.len(),
        out.display()
    );
    failed_transport
}

/// Episodes cut short by the network count as a transport failure of the whole run.
fn transport_failures(results: &[EpisodeResult]) -> Result<()> {
    let n = results.iter().filter(|r| r.transport_error).count();
    if n == 0 {
        return Ok(());
    }
    let first = results
        .iter()
        .find_map(|r| r.error.as_deref().filter(|_| r.transport_error));
    Err(Error::Transport(format!(
        "{n} of {} episodes ended on a transport error; first: {}",
        results.len(),
        first.unwrap_or_default()
    )))
}

fn cmd_annotate(s: &Settings, input: &Path, out: &Path) -> Result<()> {
    let corpus = read_corpus(input)?;
    let remote = match s.get_str("annotator").unwrap_or("local") {
        "local" => None,
        "remote" => {
            let template = match s.existing_path("template")? {
                Some(p) => std::fs::read_to_string(&p)
                    .map_err(|e| Error::Data(format!("cannot read template {}: {e}", p.display())))?,
                None => DEFAULT_TEMPLATE.to_string(),
            };
            Some(RemoteAnnotator {
                client: RemoteClient::new(s.remote()?)?,
                template,
            })
        }
        other => return Err(Error::InvalidArgument(format!("unknown annotator {other:?}"))),
    };
    let mut records = Vec::new();
    for t in &corpus {
        let result = match &remote {
            Some(r) => r.annotate(t),
            None => annotate_local(t),
        };
        match result {
            Ok(annotations) => records.push(AnnotationRecord {
                task_id: t.task_id.clone(),
                annotations,
            }),
            Err(e) if e.is_transport() => return Err(e),
            Err(e) => log::warn!("{}: not annotated ({e})", t.task_id),
        }
    }
    write_annotations(out, &records)?;
    eprintln!("annotated {} of {} trajectories", records.len(), corpus.len());
    Ok(())
}

fn cmd_augment(s: &Settings, input: &Path, annotations: Option<&Path>, out: &Path) -> Result<()> {
    let mode: Mode = s
        .get("mode")?
        .ok_or_else(|| Error::InvalidArgument("augment needs --mode (orm, prm, pa or pabu)".into()))?;
    let corpus = read_corpus(input)?;
    let stored;
    let annotator: &dyn Annotator = match annotations {
        Some(p) => {
            stored = read_annotations(p)?;
            &stored
        }
        None => &LocalAnnotator,
    };
    let stats = build_dataset(&corpus, annotator, mode, out)?;
    eprintln!(
        "{mode}: {} examples ({} augmented) from {} of {} trajectories; {} decisions, critical fraction {:.3}",
        stats.examples,
        stats.augmented,
        stats.used,
        stats.trajectories,
        stats.decisions,
        stats.critical_fraction()
    );
    if stats.used == 0 {
        return Err(Error::Data("no trajectory produced examples".into()));
    }
    Ok(())
}

fn cmd_fit(s: &Settings, input: &Path, out: &Path) -> Result<()> {
    let (header, examples) = read_dataset(input)?;
    let window = s.get_or("window", pabu::policy::DEFAULT_HISTORY_WINDOW)?;
    let mut policy = TabularPolicy::fit_with_window(&examples, window).map_err(|e| match e {
        Error::InvalidArgument(m) => Error::Data(format!("{}: {m}", input.display())),
        e => e,
    })?;
    policy.explore_seed = s.get("explore_seed")?;
    policy.save(out)?;
    eprintln!(
        "{}: {} keys from {} examples",
        header.mode,
        policy.len(),
        examples.len()
    );
    Ok(())
}

fn cmd_eval(s: &Settings, seeds_from: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let recorded = match seeds_from {
        Some(p) => {
            let mut by_kind: BTreeMap<EnvKind, Vec<u64>> = BTreeMap::new();
            for t in read_corpus(p)? {
                by_kind.entry(t.env_kind).or_default().push(t.seed);
            }
            Some(by_kind)
        }
        None => None,
    };
    let policy = build_policy(s)?;
    let settings = suite(s, s.env_configs()?, recorded.as_ref())?;
    if settings.is_empty() {
        return Err(Error::Data(
            "no seeds to evaluate for the selected environments".into(),
        ));
    }
    let label = s.get_str("label").map_or_else(|| policy.name(), String::from);
    let (report, runs) = evaluate(&label, &settings, policy.as_ref(), s.workers()?)?;
    for r in runs.iter().flat_map(|r| &r.results) {
        if let Some(e) = &r.error {
            log::info!("{}: {e}", r.transcript.task_id);
        }
    }
    if let Some(p) = out {
        write_report(p, &report)?;
    }
    print!("{}", compare(std::slice::from_ref(&report))?);
    let results: Vec<EpisodeResult> = runs.into_iter().flat_map(|r| r.results).collect();
    transport_failures(&results)
}

fn cmd_compare(paths: &[PathBuf]) -> Result<()> {
    let reports = paths.iter().map(|p| read_report(p)).collect::<Result<Vec<_>>>()?;
    print!(
        "{}",
        compare(&reports).map_err(|e| match e {
            Error::InvalidArgument(m) => Error::Data(m),
            e => e,
        })?
    );
    Ok(())
}

/// Problems listed individually before the rest are summarized.
const MAX_LISTED: usize = 5;

fn cmd_validate(s: &Settings, input: &Path) -> Result<()> {
    let corpus = read_corpus(input)?;
    let configs = s.env_configs()?;
    let mut bad = 0;
    let report = |bad: &mut usize, msg: String| {
        if *bad < MAX_LISTED {
            log::warn!("{msg}");
        }
        *bad += 1;
    };
    for t in &corpus {
        let Some(config) = configs.iter().find(|c| c.kind() == t.env_kind) else {
            report(
                &mut bad,
                format!(
                    "{}: no {} configuration selected (use --env)",
                    t.task_id, t.env_kind
                ),
            );
            continue;
        };
        match replay_validate(t, config) {
            Ok(true) => {}
            Ok(false) => report(
                &mut bad,
                format!("{}: replay diverges from the recording", t.task_id),
            ),
            Err(e) => report(&mut bad, e.to_string()),
        }
    }
    if bad > MAX_LISTED {
        log::warn!("... and {} more", bad - MAX_LISTED);
    }
    println!(
        "{} of {} trajectories replay identically",
        corpus.len() - bad,
        corpus.len()
    );
    if bad > 0 {
        return Err(Error::Validation(format!("{bad} trajectories failed replay")));
    }
    Ok(())
}

fn cmd_fmt(input: &Path, kind: &str, check: bool) -> Result<()> {
    let text = std::fs::read_to_string(input)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", input.display())))?;
    let canonical = match kind {
        "belief" => {
            let b = parse_belief_prompt(&text)?;
            let out = serialize_belief(&b).into_string();
            if parse_belief_prompt(&out)? != b {
                return Err(Error::Data("belief does not survive a round trip".into()));
            }
            out
        }
        "history" => {
            let (b, transcript) = parse_history_prompt(&text)?;
            let out = serialize_history_prompt(&b, &transcript);
            if parse_history_prompt(&out)? != (b, transcript) {
                return Err(Error::Data("history prompt does not survive a round trip".into()));
            }
            out
        }
        "output" => {
            let o = parse_model_output(&text)?;
            render_model_output(&o.retention, &o.progress_update, &o.action_update)
        }
        other => return Err(Error::InvalidArgument(format!("unknown kind {other:?}"))),
    };
    print!("{canonical}");
    if check && canonical != text.replace("\r\n", "\n") {
        return Err(Error::Data(format!(
            "{} is not in canonical form",
            input.display()
        )));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let s = settings(cli)?;
    match &cli.command {
        Command::Gen { out, .. } => cmd_gen(&s, out),
        Command::Annotate { input, out, .. } => cmd_annotate(&s, input, out),
        Command::Augment {
            input,
            annotations,
            out,
            ..
        } => cmd_augment(&s, input, annotations.as_deref(), out),
        Command::Fit { input, out, .. } => cmd_fit(&s, input, out),
        Command::Eval { seeds_from, out, .. } => cmd_eval(&s, seeds_from.as_deref(), out.as_deref()),
        Command::Compare { reports } => cmd_compare(reports),
        Command::Validate { input, .. } => cmd_validate(&s, input),
        Command::Fmt { input, kind, check } => cmd_fmt(input, kind, *check),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) => 1,
        Error::Transport(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
