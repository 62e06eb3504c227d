//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Tolerances and runtime ceilings are the constants below.

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pabu::annotate::{annotate_local, annotate_unchecked, Annotations, LocalAnnotator};
use pabu::augment::{augment_corpus, replay_beliefs, Mode, TrainingExample};
use pabu::belief::{
    init_belief, progress_equal, recompute_from_history, update_belief, BeliefState, RetentionDecision,
    StepLabels,
};
use pabu::env::constraints::{feedback, score, ConstraintSet};
use pabu::env::wordguess::bundled_words;
use pabu::env::{
    env_reset, CraftConfig, EnvConfig, EnvKind, EnvState, MazeConfig, Trajectory, WordGuessConfig,
};
use pabu::eval::{evaluate, run_episode, EpisodeResult, Setting, SettingMetrics};
use pabu::policy::{
    oracle_action, remote_act, CallStats, DecisionContext, OraclePolicy, Policy, PolicyDecision, PromptStyle,
    RemotePolicy, TabularPolicy,
};
use pabu::prompt::{count_tagged_tokens, parse_belief_prompt, serialize_belief, TAG_ATTEMPTED_ACTION};
use pabu::remote::{RemoteClient, RemoteConfig};
use pabu::stub::{StubReply, StubServer};
use pabu::Error;

const FIG_INPUT: &str = include_str!("../data/belief_fixture.txt");
const FIG_OUTPUT: &str = include_str!("../data/output_fixture.txt");

const LIMIT_UPDATE: Duration = Duration::from_secs(10);
const LIMIT_ROUND_TRIP: Duration = Duration::from_secs(5);
const LIMIT_ORACLES: Duration = Duration::from_secs(60);
const LIMIT_END_TO_END: Duration = Duration::from_secs(300);
const LIMIT_CONSTRAINTS: Duration = Duration::from_secs(30);

const MAX_TOKEN_RATIO: f64 = 0.5;
const MIN_WORDGUESS_SOLVED: f64 = 0.95;
const SUCCESS_TOL: f64 = 0.05;
const STEPS_TOL: f64 = 0.01;

type Check = std::result::Result<String, String>;

/// Name, runtime ceiling, check.
type Criterion = (&'static str, Option<Duration>, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: Error) -> String {
    e.to_string()
}

/// Oracle moves with an occasional uniformly random action, to get detours and repeats.
struct NoisyOracle {
    seed: u64,
    noise: f64,
}

impl Policy for NoisyOracle {
    fn name(&self) -> String {
        "noisy-oracle".into()
    }

    fn decide(&self, ctx: &DecisionContext<'_>, _stats: &mut CallStats) -> pabu::Result<PolicyDecision> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (ctx.step() as u64).wrapping_mul(0x9e37_79b9));
        let options = ctx.env.action_space();
        let action = match oracle_action(ctx.env) {
            Some(a) if rng.random::<f64>() >= self.noise || options.is_empty() => a,
            _ => options
                .choose(&mut rng)
                .cloned()
                .ok_or_else(|| Error::NoAction("empty action space".into()))?,
        };
        Ok(PolicyDecision {
            retention: RetentionDecision::Skip,
            progress: ctx.belief.progress.clone(),
            action,
        })
    }
}

fn configs() -> Vec<EnvConfig> {
    vec![
        EnvConfig::default_for(EnvKind::Maze),
        EnvConfig::Maze(MazeConfig {
            width: 7,
            height: 6,
            wall_density: 0.25,
            budget: 25,
            layout: None,
        }),
        EnvConfig::default_for(EnvKind::Wordguess),
        EnvConfig::default_for(EnvKind::Craft),
    ]
}

fn noisy_trajectory(config: &EnvConfig, seed: u64, noise: f64) -> pabu::Result<Trajectory> {
    Ok(run_episode(config, seed, &NoisyOracle { seed, noise }, config.budget())?.transcript)
}

/// Labels drawn at random from a small pool so that repeats and returns both occur.
struct RandomLabels {
    progress: Vec<String>,
    retention: Vec<RetentionDecision>,
}

impl RandomLabels {
    fn new(n: usize, rng: &mut ChaCha8Rng) -> Self {
        let pool = ["stage a", "stage  a", "stage b", "Stage b", "stage c"];
        let progress = (0..n).map(|_| pool.choose(rng).unwrap().to_string()).collect();
        let retention = (0..n)
            .map(|_| match rng.random_range(0..4) {
                0 => RetentionDecision::keep(format!("fact {}", rng.random_range(0..3))),
                _ => RetentionDecision::Skip,
            })
            .collect();
        RandomLabels { progress, retention }
    }
}

impl StepLabels for RandomLabels {
    fn len(&self) -> usize {
        self.progress.len()
    }

    fn progress_label(&self, step: usize) -> &str {
        &self.progress[step]
    }

    fn retention(&self, step: usize) -> &RetentionDecision {
        &self.retention[step]
    }
}

fn chained(traj: &Trajectory, labels: &impl StepLabels) -> pabu::Result<BeliefState> {
    let first = if labels.is_empty() {
        pabu::belief::START_PROGRESS
    } else {
        labels.progress_label(0)
    };
    let mut b = init_belief(&traj.query, &traj.initial_observation, first)?;
    for (i, s) in traj.steps.iter().enumerate() {
        b = update_belief(
            &b,
            &s.action,
            &s.observation,
            labels.retention(i),
            labels.progress_after(i),
        );
    }
    Ok(b)
}

fn criterion_1() -> Check {
    let configs = configs();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut compared = 0;
    let mut per_kind: BTreeMap<EnvKind, usize> = BTreeMap::new();
    for n in 0..1000u64 {
        let config = &configs[n as usize % configs.len()];
        let traj = noisy_trajectory(config, n, [0.0, 0.3, 0.7][n as usize % 3]).map_err(err)?;
        let pairs = traj.pairs();
        *per_kind.entry(config.kind()).or_default() += 1;
        let ann = annotate_unchecked(&traj).map_err(err)?;
        let a = chained(&traj, &ann).map_err(err)?;
        let b = recompute_from_history(&traj.query, &traj.initial_observation, &pairs, &ann).map_err(err)?;
        ensure(a == b, || {
            format!("{}: annotated chain differs from recomputation", traj.task_id)
        })?;
        let random = RandomLabels::new(traj.len(), &mut rng);
        let a = chained(&traj, &random).map_err(err)?;
        let b =
            recompute_from_history(&traj.query, &traj.initial_observation, &pairs, &random).map_err(err)?;
        ensure(a == b, || {
            format!("{}: random-label chain differs from recomputation", traj.task_id)
        })?;
        compared += 2;
    }
    Ok(format!(
        "{compared} chains over 1000 trajectories {per_kind:?} all equal"
    ))
}

fn same_serializable(a: &BeliefState, b: &BeliefState) -> bool {
    a.query == b.query
        && a.progress == b.progress
        && a.attempted_actions == b.attempted_actions
        && a.available_actions == b.available_actions
        && a.saved_observations == b.saved_observations
        && a.last_observation == b.last_observation
}

fn criterion_2() -> Check {
    let configs = configs();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    let mut seed = 0u64;
    while checked < 1000 {
        seed += 1;
        let config = &configs[seed as usize % configs.len()];
        let traj = noisy_trajectory(config, seed, 0.4).map_err(err)?;
        if traj.is_empty() {
            continue;
        }
        let rand_labels = RandomLabels::new(traj.len(), &mut rng);
        let beliefs =
            replay_beliefs(&traj.query, &traj.initial_observation, &traj.steps, &rand_labels).map_err(err)?;
        let b = beliefs.choose(&mut rng).unwrap();
        let parsed = parse_belief_prompt(serialize_belief(b).as_str()).map_err(err)?;
        ensure(same_serializable(&parsed, b), || {
            format!("belief from {} did not round-trip", traj.task_id)
        })?;
        checked += 1;
    }

    let fig = parse_belief_prompt(FIG_INPUT).map_err(err)?;
    ensure(fig.available_actions.len() == 28, || {
        format!("{} available actions", fig.available_actions.len())
    })?;
    ensure(fig.attempted_actions.len() == 7, || {
        format!("{} attempted actions", fig.attempted_actions.len())
    })?;
    ensure(fig.saved_observations.is_empty(), || {
        "saved block is not {}".into()
    })?;
    let out = serialize_belief(&fig);
    // List blocks in the fixture are soft-wrapped after commas for display.
    let unwrapped = FIG_INPUT.replace(",\n", ",");
    ensure(out.as_str() == unwrapped, || {
        "fixture does not serialize identically".into()
    })?;
    let literal = out.as_str() == FIG_INPUT;
    Ok(format!(
        "{checked} beliefs round-trip; fixture 28/7/{{}} identical after joining soft-wrapped list lines \
         (literal bytes identical: {literal})"
    ))
}

fn exhaustive_next_critical(ann: &Annotations, i: usize, n: usize) -> Option<usize> {
    (i + 1..n).find(|&j| ann.critical.contains(&j))
}

fn criterion_3() -> Check {
    let mut corpus = Vec::new();
    for (c, config) in configs().iter().enumerate() {
        for seed in 0..60 {
            let mut t = noisy_trajectory(config, seed, 0.3).map_err(err)?;
            t.task_id = format!("{}-c{c}", t.task_id);
            corpus.push(t);
        }
    }
    let build = |mode| augment_corpus(&corpus, &LocalAnnotator, mode);
    let (orm, s_orm) = build(Mode::Orm);
    let (prm, s_prm) = build(Mode::Prm);
    let (pa, s_pa) = build(Mode::Pa);
    let (pabu, s_pabu) = build(Mode::Pabu);
    let decisions = s_orm.decisions;
    ensure(s_orm.decisions > s_orm.critical, || {
        "corpus has no non-critical step".into()
    })?;
    ensure(prm.len() < orm.len(), || {
        format!("PRM {} not below ORM {}", prm.len(), orm.len())
    })?;
    ensure(
        orm.len() == decisions && pa.len() == decisions && pabu.len() == decisions,
        || {
            format!(
                "ORM {} PA {} PABU {} decisions {}",
                orm.len(),
                pa.len(),
                pabu.len(),
                decisions
            )
        },
    )?;
    ensure(
        s_prm.used == s_orm.used && s_pa.used == s_orm.used && s_pabu.used == s_orm.used,
        || "modes used different trajectories".into(),
    )?;

    let key = |e: &TrainingExample| (e.source.task_id.clone(), e.source.step);
    let orm_by: BTreeMap<_, &TrainingExample> = orm.iter().map(|e| (key(e), e)).collect();
    let by_id: BTreeMap<&str, &Trajectory> = corpus.iter().map(|t| (t.task_id.as_str(), t)).collect();
    let mut annotations: BTreeMap<String, Annotations> = BTreeMap::new();
    for t in corpus.iter().filter(|t| t.success) {
        annotations.insert(t.task_id.clone(), annotate_local(t).map_err(err)?);
    }

    let mut critical_orm = 0;
    for e in &orm {
        if annotations[&e.source.task_id].is_critical(e.source.step) {
            critical_orm += 1;
        }
    }
    ensure(critical_orm == prm.len(), || {
        format!("{critical_orm} critical ORM examples vs {} PRM", prm.len())
    })?;
    for e in &prm {
        let o = orm_by
            .get(&key(e))
            .ok_or_else(|| format!("PRM example {:?} missing from ORM", key(e)))?;
        ensure(annotations[&e.source.task_id].is_critical(e.source.step), || {
            "PRM kept a non-critical step".into()
        })?;
        ensure(
            o.context == e.context
                && o.target_action == e.target_action
                && o.target_progress == e.target_progress
                && o.target_retention == e.target_retention,
            || format!("PRM example {:?} differs from ORM", key(e)),
        )?;
    }

    let mut augmented = 0;
    for e in pa.iter().chain(&pabu) {
        let traj = by_id[e.source.task_id.as_str()];
        let ann = &annotations[&e.source.task_id];
        let i = e.source.step;
        let expected = if ann.is_critical(i) {
            traj.steps[i].action.clone()
        } else {
            let j = exhaustive_next_critical(ann, i, traj.len())
                .ok_or_else(|| format!("no critical after {i}"))?;
            traj.steps[j].action.clone()
        };
        ensure(e.target_action == expected, || {
            format!("{:?}: target {} expected {}", key(e), e.target_action, expected)
        })?;
        ensure(e.is_augmented == !ann.is_critical(i), || {
            format!("{:?}: augmented flag", key(e))
        })?;
        augmented += usize::from(e.is_augmented);
    }
    Ok(format!(
        "{} trajectories used, {decisions} decisions, {} critical; ORM {} PRM {} PA {} PABU {}; \
         {augmented} augmented targets verified",
        s_orm.used,
        s_orm.critical,
        orm.len(),
        prm.len(),
        pa.len(),
        pabu.len()
    ))
}

/// Per-decision size of the belief prompt a policy was shown.
#[derive(Debug, Clone)]
struct Seen {
    progress: String,
    tokens: usize,
    attempted_tokens: usize,
    attempted: usize,
}

/// Oracle decisions, prompted with either layout; records the belief prompt it was shown.
struct PromptProbe {
    style: PromptStyle,
    seen: Mutex<Vec<Seen>>,
}

impl Policy for PromptProbe {
    fn name(&self) -> String {
        "oracle-probe".into()
    }

    fn style(&self) -> PromptStyle {
        self.style
    }

    fn decide(&self, ctx: &DecisionContext<'_>, stats: &mut CallStats) -> pabu::Result<PolicyDecision> {
        let counts = count_tagged_tokens(serialize_belief(ctx.belief).as_str())?;
        self.seen.lock().unwrap().push(Seen {
            progress: ctx.belief.progress.clone(),
            tokens: counts.input,
            attempted_tokens: counts.per_tag.get(TAG_ATTEMPTED_ACTION).copied().unwrap_or(0),
            attempted: ctx.belief.attempted_actions.len(),
        });
        OraclePolicy.decide(ctx, stats)
    }
}

#[derive(Debug, Default)]
struct Compactness {
    episodes: usize,
    steps: usize,
    belief_tokens: usize,
    history_tokens: usize,
    /// Largest within-stage spread of the whole belief prompt.
    spread: usize,
    /// Largest within-stage spread with the attempted-action block left out.
    spread_without_attempted: usize,
    /// Longest run of one stage, in decisions.
    longest_stage: usize,
    /// Whether each decision inside a stage lists exactly one more attempted action.
    attempts_grow_by_one: bool,
}

impl Compactness {
    fn ratio(&self) -> f64 {
        self.belief_tokens as f64 / self.history_tokens as f64
    }
}

fn spread(values: impl Iterator<Item = usize> + Clone) -> usize {
    values.clone().max().unwrap_or(0) - values.min().unwrap_or(0)
}

fn compactness(
    config: &EnvConfig,
    episodes: usize,
    min_steps: usize,
) -> std::result::Result<Compactness, String> {
    let mut c = Compactness {
        attempts_grow_by_one: true,
        ..Compactness::default()
    };
    let mut seed = 0u64;
    while c.episodes < episodes {
        seed += 1;
        let (env, _, _) = env_reset(config, seed).map_err(err)?;
        let EnvState::Maze(m) = &env else { unreachable!() };
        if m.bfs_distance().is_none_or(|d| d < min_steps) {
            continue;
        }
        let probe = |style| PromptProbe {
            style,
            seen: Mutex::new(Vec::new()),
        };
        let belief_probe = probe(PromptStyle::Belief);
        let history_probe = probe(PromptStyle::History);
        let rb = run_episode(config, seed, &belief_probe, config.budget()).map_err(err)?;
        let rh = run_episode(config, seed, &history_probe, config.budget()).map_err(err)?;
        ensure(rb.success && rh.success, || format!("seed {seed}: oracle failed"))?;
        ensure(rb.transcript.steps == rh.transcript.steps, || {
            format!("seed {seed}: runs diverged")
        })?;
        ensure(rb.steps_taken >= min_steps, || {
            format!("seed {seed}: only {} steps", rb.steps_taken)
        })?;
        c.belief_tokens += rb.input_tokens;
        c.history_tokens += rh.input_tokens;
        let seen = belief_probe.seen.into_inner().unwrap();
        // A stage is a maximal run of decisions shown the same progress.
        for run in seen.chunk_by(|a, b| progress_equal(&a.progress, &b.progress)) {
            c.spread = c.spread.max(spread(run.iter().map(|r| r.tokens)));
            c.spread_without_attempted = c
                .spread_without_attempted
                .max(spread(run.iter().map(|r| r.tokens - r.attempted_tokens)));
            c.longest_stage = c.longest_stage.max(run.len());
            c.attempts_grow_by_one &= run.windows(2).all(|w| w[1].attempted == w[0].attempted + 1);
        }
        c.episodes += 1;
        c.steps += rb.steps_taken;
    }
    Ok(c)
}

fn criterion_4() -> Check {
    let maze = |wall_density| {
        EnvConfig::Maze(MazeConfig {
            wall_density,
            budget: 60,
            ..MazeConfig::open(10, 10)
        })
    };
    // Wall-free: every oracle move shortens the distance, so each decision opens a stage.
    let open = compactness(&maze(0.0), 100, 10)?;
    // Walled: detours around walls keep the distance label, so stages span several decisions.
    let walled = compactness(&maze(0.2), 100, 10)?;
    let describe = |name: &str, c: &Compactness| {
        format!(
            "{name}: {} episodes / {} steps, belief {} vs history {} input tokens, ratio {:.4}, \
             longest stage {}, within-stage spread {} ({} without the attempted block)",
            c.episodes,
            c.steps,
            c.belief_tokens,
            c.history_tokens,
            c.ratio(),
            c.longest_stage,
            c.spread,
            c.spread_without_attempted
        )
    };
    let summary = format!(
        "{}; {}",
        describe("open 10x10", &open),
        describe("walled 10x10", &walled)
    );
    for c in [&open, &walled] {
        ensure(c.ratio() <= MAX_TOKEN_RATIO, || {
            format!("ratio above {MAX_TOKEN_RATIO}: {summary}")
        })?;
        ensure(c.spread_without_attempted == 0 && c.attempts_grow_by_one, || {
            summary.clone()
        })?;
    }
    ensure(open.spread == 0, || summary.clone())?;
    Ok(summary)
}

fn criterion_5() -> Check {
    let maze = EnvConfig::default_for(EnvKind::Maze);
    for seed in 0..500 {
        let (env, _, _) = env_reset(&maze, seed).map_err(err)?;
        let EnvState::Maze(m) = &env else { unreachable!() };
        let d = m
            .bfs_distance()
            .ok_or_else(|| format!("seed {seed}: unsolvable instance"))?;
        let r = run_episode(&maze, seed, &OraclePolicy, maze.budget()).map_err(err)?;
        ensure(r.success && r.steps_taken == d, || {
            format!("maze seed {seed}: {} steps, distance {d}", r.steps_taken)
        })?;
    }

    let words = bundled_words();
    let mut within = 0;
    let mut missed = Vec::new();
    let mut guesses: BTreeMap<usize, usize> = BTreeMap::new();
    for w in words.iter() {
        let cfg = EnvConfig::Wordguess(WordGuessConfig::with_secret(w));
        let r = run_episode(&cfg, 0, &OraclePolicy, 6).map_err(err)?;
        if r.success {
            within += 1;
            *guesses.entry(r.steps_taken).or_default() += 1;
        } else {
            missed.push(w.clone());
        }
    }
    let solved = within as f64 / words.len() as f64;
    ensure(solved >= MIN_WORDGUESS_SOLVED, || {
        format!("wordguess solved {solved:.3}; missed {missed:?}")
    })?;

    let base = CraftConfig::default();
    let targets: Vec<String> = base.eligible_targets().into_iter().map(String::from).collect();
    for t in &targets {
        let cfg = EnvConfig::Craft(CraftConfig {
            target: Some(t.clone()),
            ..base.clone()
        });
        let r = run_episode(&cfg, 0, &OraclePolicy, cfg.budget()).map_err(err)?;
        let size = base.book.tree_size(t);
        ensure(r.success && r.steps_taken == size, || {
            format!("craft {t}: {} steps, tree size {size}", r.steps_taken)
        })?;
    }
    Ok(format!(
        "maze 500/500 at BFS distance; wordguess {within}/{} within 6 (guess histogram {guesses:?}, missed {missed:?}); \
         craft {}/{} targets at tree size",
        words.len(),
        targets.len(),
        targets.len()
    ))
}

fn synthetic_result(success: bool, steps_taken: usize, budget: usize) -> EpisodeResult {
    let (_, query, initial) = env_reset(&EnvConfig::default_for(EnvKind::Maze), 0).unwrap();
    EpisodeResult {
        success,
        steps_taken,
        steps_metric: pabu::eval::steps_metric(success, steps_taken, budget),
        budget,
        input_tokens: 0,
        output_tokens: 0,
        prompt_tokens: Vec::new(),
        wall_time: 0.0,
        retries: 0,
        reprompts: 0,
        error: None,
        transport_error: false,
        transcript: Trajectory {
            schema: pabu::env::TRAJECTORY_SCHEMA,
            env_kind: EnvKind::Maze,
            task_id: "synthetic".into(),
            seed: 0,
            config_fingerprint: String::new(),
            query,
            initial_observation: initial,
            steps: Vec::new(),
            success,
            error: None,
        },
    }
}

/// Fails on its first decision.
struct Broken;

impl Policy for Broken {
    fn name(&self) -> String {
        "broken".into()
    }

    fn decide(&self, _ctx: &DecisionContext<'_>, _stats: &mut CallStats) -> pabu::Result<PolicyDecision> {
        Err(Error::NoAction("broken policy".into()))
    }
}

fn criterion_6() -> Check {
    let mix = [
        synthetic_result(true, 3, 15),
        synthetic_result(true, 5, 15),
        synthetic_result(false, 9, 15),
    ];
    let m = SettingMetrics::from_results("mixture", &mix);
    ensure((m.success_rate - 66.7).abs() <= SUCCESS_TOL, || {
        format!("succ {}", m.success_rate)
    })?;
    ensure((m.mean_steps - 7.67).abs() <= STEPS_TOL, || {
        format!("step# {}", m.mean_steps)
    })?;

    let mut failures = 0;
    for (kind, budget) in [(EnvKind::Maze, 3), (EnvKind::Wordguess, 2), (EnvKind::Craft, 4)] {
        let cfg = EnvConfig::default_for(kind);
        for seed in 0..40 {
            for r in [
                run_episode(&cfg, seed, &NoisyOracle { seed, noise: 0.8 }, budget).map_err(err)?,
                run_episode(&cfg, seed, &Broken, budget).map_err(err)?,
            ] {
                if !r.success {
                    failures += 1;
                    ensure(r.steps_metric == budget, || {
                        format!("{kind} seed {seed}: failure counted {}", r.steps_metric)
                    })?;
                } else {
                    ensure(r.steps_metric == r.steps_taken, || {
                        "success not counted by steps".into()
                    })?;
                }
            }
        }
    }
    Ok(format!(
        "mixture succ {:.2}% step# {:.4}; {failures} failed episodes each counted at budget",
        m.success_rate, m.mean_steps
    ))
}

fn criterion_7() -> Check {
    let config = EnvConfig::default_for(EnvKind::Maze);
    let corpus: Vec<Trajectory> = (0..300)
        .map(|seed| run_episode(&config, seed, &OraclePolicy, config.budget()).map(|r| r.transcript))
        .collect::<pabu::Result<_>>()
        .map_err(err)?;
    let (orm, _) = augment_corpus(&corpus, &LocalAnnotator, Mode::Orm);
    let (pabu_ex, _) = augment_corpus(&corpus, &LocalAnnotator, Mode::Pabu);
    let orm_policy = TabularPolicy::fit(&orm).map_err(err)?;
    let pabu_policy = TabularPolicy::fit(&pabu_ex).map_err(err)?;
    let suite = [Setting {
        name: "maze-5x5".into(),
        config: config.clone(),
        seeds: (100_000..100_100).collect(),
        budget: None,
    }];
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let (orm_report, _) = evaluate("orm", &suite, &orm_policy, workers).map_err(err)?;
    let (pabu_report, _) = evaluate("pabu", &suite, &pabu_policy, workers).map_err(err)?;
    let (o, p) = (&orm_report.settings[0], &pabu_report.settings[0]);
    let summary = format!(
        "ORM table {} keys: succ {:.1}% step# {:.2}; PABU table {} keys: succ {:.1}% step# {:.2}",
        orm_policy.len(),
        o.success_rate,
        o.mean_steps,
        pabu_policy.len(),
        p.success_rate,
        p.mean_steps
    );
    ensure(
        p.success_rate >= o.success_rate && p.mean_steps <= o.mean_steps,
        || summary.clone(),
    )?;
    Ok(summary)
}

fn criterion_8() -> Check {
    let words = bundled_words();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut sizes = Vec::new();
    for _ in 0..1000 {
        let secret = words.choose(&mut rng).unwrap();
        let n = rng.random_range(1..=6);
        let guesses: Vec<&String> = (0..n).map(|_| words.choose(&mut rng).unwrap()).collect();
        let mut set = ConstraintSet::new();
        for g in &guesses {
            set.extend(&ConstraintSet::from_feedback(g, &score(secret, g)));
        }
        let rendered = ConstraintSet::parse(&set.render()).map_err(err)?;
        let by_set: BTreeSet<&str> = words
            .iter()
            .filter(|w| rendered.accepts(w))
            .map(String::as_str)
            .collect();
        let by_filter: BTreeSet<&str> = words
            .iter()
            .filter(|w| guesses.iter().all(|g| feedback(w, g) == feedback(secret, g)))
            .map(String::as_str)
            .collect();
        ensure(by_set == by_filter, || {
            format!("secret {secret} guesses {guesses:?}: sets differ")
        })?;
        ensure(by_set.contains(secret.as_str()), || {
            format!("secret {secret} rejected")
        })?;
        sizes.push(by_set.len());
    }
    let mean = sizes.iter().sum::<usize>() as f64 / sizes.len() as f64;
    Ok(format!("1000 pairs agree; mean surviving candidates {mean:.2}"))
}

fn client(url: String, timeout: Duration, retries: usize) -> pabu::Result<RemoteClient> {
    RemoteClient::new(RemoteConfig {
        timeout,
        retries,
        backoff: Duration::from_millis(10),
        ..RemoteConfig::new(url)
    })
}

fn criterion_9() -> Check {
    let stub = StubServer::start(vec![], StubReply::completion(FIG_OUTPUT)).map_err(err)?;
    let c = client(stub.url(), Duration::from_secs(5), 0).map_err(err)?;
    let mut stats = CallStats::default();
    let prompt = serialize_belief(&parse_belief_prompt(FIG_INPUT).map_err(err)?).into_string();
    let d = remote_act(&c, &prompt, &mut stats).map_err(err)?;
    ensure(
        d.retention == RetentionDecision::Skip
            && d.progress == "find the knife"
            && d.action == "go to diningtable 1",
        || format!("decision {d:?}"),
    )?;
    ensure(
        stub.requests().first().map(|r| r.prompt.as_str()) == Some(prompt.as_str()),
        || "stub did not receive the serialized belief".into(),
    )?;

    let garbage = StubServer::start(vec![], StubReply::Garbage).map_err(err)?;
    let policy = RemotePolicy::new(client(garbage.url(), Duration::from_secs(5), 0).map_err(err)?);
    let r = run_episode(&EnvConfig::default_for(EnvKind::Maze), 0, &policy, 15).map_err(err)?;
    ensure(
        !r.success && r.error.is_some() && !r.transport_error && r.steps_taken == 0,
        || format!("garbage episode {r:?}"),
    )?;
    ensure(r.reprompts == 1 && garbage.requests().len() == 2, || {
        format!("{} reprompts, {} requests", r.reprompts, garbage.requests().len())
    })?;
    ensure(r.steps_metric == 15, || {
        "failed episode not counted at budget".into()
    })?;

    let slow = || StubReply::Delayed(Duration::from_millis(600), FIG_OUTPUT.to_string());
    let flaky = StubServer::start(vec![slow()], StubReply::completion(FIG_OUTPUT)).map_err(err)?;
    let mut stats = CallStats::default();
    let d = remote_act(
        &client(flaky.url(), Duration::from_millis(150), 2).map_err(err)?,
        &prompt,
        &mut stats,
    )
    .map_err(err)?;
    ensure(d.action == "go to diningtable 1" && stats.retries == 1, || {
        format!("timeout retry stats {stats:?}")
    })?;

    let stuck = StubServer::start(vec![], slow()).map_err(err)?;
    let mut stats = CallStats::default();
    let e = remote_act(
        &client(stuck.url(), Duration::from_millis(150), 1).map_err(err)?,
        &prompt,
        &mut stats,
    );
    ensure(
        matches!(&e, Err(e) if e.is_transport()) && stats.retries == 1,
        || format!("{e:?} {stats:?}"),
    )?;
    ensure(stuck.requests().len() == 2, || {
        format!("{} attempts with retries=1", stuck.requests().len())
    })?;

    Ok("fixture decision parsed; garbage: 1 reprompt then failed episode; timeout retried per config".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (
            "belief update equals recomputation",
            Some(LIMIT_UPDATE),
            criterion_1,
        ),
        ("prompt round trip", Some(LIMIT_ROUND_TRIP), criterion_2),
        ("dataset regime relations", None, criterion_3),
        ("context compactness", None, criterion_4),
        ("oracle success and efficiency", Some(LIMIT_ORACLES), criterion_5),
        ("metric arithmetic", None, criterion_6),
        (
            "tabular PABU vs ORM end to end",
            Some(LIMIT_END_TO_END),
            criterion_7,
        ),
        (
            "wordguess constraint soundness",
            Some(LIMIT_CONSTRAINTS),
            criterion_8,
        ),
        ("remote client contract", None, criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = run();
        let took = started.elapsed();
        let result = match (result, limit) {
            (Ok(msg), Some(l)) if took > *l => Err(format!("{msg}; took {took:.2?}, limit {l:?}")),
            (r, _) => r,
        };
        match result {
            Ok(msg) => println!("PASS criterion {} ({name}) [{took:.2?}]: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {} ({name}) [{took:.2?}]: {msg}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
