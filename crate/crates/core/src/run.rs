//! Run orchestration: configuration, the train/evaluate loop, metrics CSV,
//! checkpoints, timing benchmarks and multi-seed summaries.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::agent::{Agent, AgentConfig, AgentError};
use crate::dpp::{self, DppError, FeatureMatrix};
use crate::env::{make_env, EnvError, GoalVector};
use crate::replay::{
    self, EpisodicBuffer, MinibatchPlan, ReplayError, SamplerVariant, Trajectory, Transition,
};

pub const CSV_HEADER: &str =
    "epoch,success_rate,critic_loss,actor_loss,mean_diversity,kdpp_fallbacks,seconds";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Dpp(#[from] DppError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
    #[error("scaling check failed: {0}")]
    Scaling(String),
}

pub type Result<T> = std::result::Result<T, RunError>;

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> RunError {
    let context = context.into();
    move |source| RunError::Io { context, source }
}

/// Independent random streams derived from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Env = 1,
    Exploration = 2,
    Replay = 3,
    Dpp = 4,
    Init = 5,
    Eval = 6,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub agent: AgentConfig,
    pub noise_scale: f64,
    pub random_eps: f64,
    pub epochs: usize,
    pub episodes_per_epoch: usize,
    pub updates_per_episode: usize,
    pub k: usize,
    pub m: usize,
    pub b: usize,
    pub her_ratio: f64,
    pub seed: u64,
    pub variant: SamplerVariant,
    pub buffer_capacity: usize,
    pub eval_episodes: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            agent: AgentConfig::default(),
            noise_scale: 0.1,
            random_eps: 0.2,
            epochs: 50,
            episodes_per_epoch: 100,
            updates_per_episode: 40,
            k: 64,
            m: 100,
            b: 2,
            her_ratio: 0.8,
            seed: 0,
            variant: SamplerVariant::Dtgsh,
            buffer_capacity: replay::DEFAULT_CAPACITY,
            eval_episodes: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub env: String,
    pub env_overrides: Vec<(String, String)>,
    pub out_dir: Option<PathBuf>,
    /// Write an agent checkpoint every this many epochs (0: final only).
    pub checkpoint_every: usize,
    /// Record elapsed seconds in the CSV; off gives byte-reproducible files.
    pub wall_clock: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            env: "bitflip".into(),
            env_overrides: Vec::new(),
            out_dir: None,
            checkpoint_every: 0,
            wall_clock: true,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| RunError::Config(format!("cannot parse {key} = {value:?}")))
}

impl RunConfig {
    /// Applies one `key = value` setting. Keys prefixed with `env.` become
    /// environment overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "env" => self.env = value.to_string(),
            "variant" => t.variant = value.parse().map_err(RunError::Config)?,
            "epochs" => t.epochs = parse(key, value)?,
            "episodes_per_epoch" => t.episodes_per_epoch = parse(key, value)?,
            "updates_per_episode" => t.updates_per_episode = parse(key, value)?,
            "k" => t.k = parse(key, value)?,
            "m" => t.m = parse(key, value)?,
            "b" => t.b = parse(key, value)?,
            "her_ratio" => t.her_ratio = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "buffer_capacity" => t.buffer_capacity = parse(key, value)?,
            "eval_episodes" => t.eval_episodes = parse(key, value)?,
            "noise_scale" => t.noise_scale = parse(key, value)?,
            "random_eps" => t.random_eps = parse(key, value)?,
            "gamma" => t.agent.gamma = parse(key, value)?,
            "polyak" => t.agent.polyak = parse(key, value)?,
            "target_update" => t.agent.target_update = value.parse().map_err(RunError::Config)?,
            "actor_lr" => t.agent.actor_lr = parse(key, value)?,
            "critic_lr" => t.agent.critic_lr = parse(key, value)?,
            "action_l2" => t.agent.action_l2 = parse(key, value)?,
            "hidden" => {
                t.agent.hidden = value
                    .split(',')
                    .map(|s| parse(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            "out" => self.out_dir = Some(PathBuf::from(value)),
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            "wall_clock" => self.wall_clock = parse(key, value)?,
            _ => match key.strip_prefix("env.") {
                Some(k) => {
                    self.env_overrides.retain(|(old, _)| old != k);
                    self.env_overrides.push((k.to_string(), value.to_string()));
                }
                None => return Err(RunError::Config(format!("unknown key {key:?}"))),
            },
        }
        Ok(())
    }

    /// Parses a flat `key = value` file; blank lines and `#` comments are
    /// ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| RunError::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text =
            fs::read_to_string(path).map_err(io_err(format!("reading {}", path.display())))?;
        self.apply_text(&text)
    }

    /// The settings that define a run, in the config-file format.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let a = &t.agent;
        let hidden: Vec<String> = a.hidden.iter().map(|h| h.to_string()).collect();
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("string write");
        kv("env", self.env.clone());
        for (k, v) in &self.env_overrides {
            kv(&format!("env.{k}"), v.clone());
        }
        kv("variant", t.variant.to_string());
        kv("epochs", t.epochs.to_string());
        kv("episodes_per_epoch", t.episodes_per_epoch.to_string());
        kv("updates_per_episode", t.updates_per_episode.to_string());
        kv("k", t.k.to_string());
        kv("m", t.m.to_string());
        kv("b", t.b.to_string());
        kv("her_ratio", t.her_ratio.to_string());
        kv("seed", t.seed.to_string());
        kv("buffer_capacity", t.buffer_capacity.to_string());
        kv("eval_episodes", t.eval_episodes.to_string());
        kv("noise_scale", t.noise_scale.to_string());
        kv("random_eps", t.random_eps.to_string());
        kv("gamma", a.gamma.to_string());
        kv("polyak", a.polyak.to_string());
        kv("target_update", a.target_update.to_string());
        kv("actor_lr", a.actor_lr.to_string());
        kv("critic_lr", a.critic_lr.to_string());
        kv("action_l2", a.action_l2.to_string());
        kv("hidden", hidden.join(","));
        kv("checkpoint_every", self.checkpoint_every.to_string());
        kv("wall_clock", self.wall_clock.to_string());
        s
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.train;
        let mut problems = Vec::new();
        if t.k > t.m {
            problems.push(format!(
                "minibatch k = {} exceeds candidate count m = {}",
                t.k, t.m
            ));
        }
        if t.k == 0 {
            problems.push("minibatch k must be positive".to_string());
        }
        if t.b < 2 {
            problems.push(format!("window b = {} must be at least 2", t.b));
        }
        if !(0.0..=1.0).contains(&t.her_ratio) {
            problems.push(format!("her_ratio = {} must lie in [0, 1]", t.her_ratio));
        }
        if !(0.0..1.0).contains(&t.agent.gamma) {
            problems.push(format!("gamma = {} must lie in [0, 1)", t.agent.gamma));
        }
        if !(0.0..=1.0).contains(&t.agent.polyak) {
            problems.push(format!("polyak = {} must lie in [0, 1]", t.agent.polyak));
        }
        if !(0.0..=1.0).contains(&t.random_eps) || t.noise_scale < 0.0 {
            problems.push("exploration needs noise_scale ≥ 0 and random_eps in [0, 1]".to_string());
        }
        if t.eval_episodes == 0 {
            problems.push("eval_episodes must be positive".to_string());
        }
        if t.buffer_capacity == 0 {
            problems.push("buffer_capacity must be positive".to_string());
        }
        if t.agent.hidden.contains(&0) {
            problems.push("hidden layer sizes must be positive".to_string());
        }
        // the environment name and overrides are checked by construction
        let env = make_env(&self.env, &self.env_overrides)?;
        if env.spec().horizon + 1 < t.b {
            problems.push(format!(
                "window b = {} exceeds the {} achieved goals of an episode",
                t.b,
                env.spec().horizon + 1
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(RunError::Config(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub success_rate: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub mean_diversity: f64,
    pub kdpp_fallbacks: usize,
    pub seconds: f64,
}

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.epoch,
            self.success_rate,
            self.critic_loss,
            self.actor_loss,
            self.mean_diversity,
            self.kdpp_fallbacks,
            self.seconds
        )
    }
}

pub struct TrainOutcome {
    pub metrics: Vec<EpochMetrics>,
    pub agent: Agent,
}

struct CsvSink {
    out: BufWriter<File>,
    path: PathBuf,
}

impl CsvSink {
    fn create(path: PathBuf) -> Result<Self> {
        let file = File::create(&path).map_err(io_err(format!("creating {}", path.display())))?;
        let mut sink = Self {
            out: BufWriter::new(file),
            path,
        };
        sink.line(CSV_HEADER)?;
        Ok(sink)
    }

    fn line(&mut self, line: &str) -> Result<()> {
        let ctx = || format!("writing {}", self.path.display());
        writeln!(self.out, "{line}").map_err(io_err(ctx()))?;
        self.out.flush().map_err(io_err(ctx()))
    }
}

/// Collects one episode with exploration noise.
fn rollout(
    env: &mut dyn crate::env::GoalEnv,
    agent: &Agent,
    config: &TrainConfig,
    env_rng: &mut dyn RngCore,
    explore_rng: &mut dyn RngCore,
) -> Result<Trajectory> {
    let (mut state, goal) = env.reset(env_rng);
    let horizon = env.spec().horizon;
    let mut achieved = Vec::with_capacity(horizon + 1);
    achieved.push(env.achieved_goal());
    let mut transitions = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let action = agent.act_with_noise(
            &state,
            &goal,
            config.noise_scale,
            config.random_eps,
            explore_rng,
        );
        let step = env.step(&action)?;
        achieved.push(step.achieved_goal.clone());
        transitions.push(Transition {
            state: std::mem::replace(&mut state, step.next_state.clone()),
            action: env.spec().clip_action(&action),
            reward: step.reward,
            next_state: step.next_state,
            desired_goal: goal.clone(),
            achieved_goal_next: step.achieved_goal,
        });
        if step.terminal {
            break;
        }
    }
    Ok(Trajectory::new(transitions, achieved, config.b)?)
}

fn feed_normalizers(agent: &mut Agent, traj: &Trajectory) {
    let states = traj.transitions().iter().map(|t| t.state.as_slice());
    let desired = traj.transitions()[0].desired_goal.as_slice();
    let goals =
        std::iter::once(desired).chain(traj.achieved_goals().iter().map(GoalVector::as_slice));
    agent.update_normalizers(states, goals);
}

/// Runs the full training loop, writing `metrics.csv`, `config.txt` and
/// checkpoints under the output directory when one is configured. The CSV is
/// flushed row by row, so an aborted run leaves the completed epochs behind.
pub fn train_run(config: &RunConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let t = &config.train;
    let mut env = make_env(&config.env, &config.env_overrides)?;
    let mut eval_env = make_env(&config.env, &config.env_overrides)?;
    let spec = env.spec().clone();

    let mut env_rng = stream_rng(t.seed, Stream::Env);
    let mut explore_rng = stream_rng(t.seed, Stream::Exploration);
    let mut replay_rng = stream_rng(t.seed, Stream::Replay);
    let mut dpp_rng = stream_rng(t.seed, Stream::Dpp);
    let mut init_rng = stream_rng(t.seed, Stream::Init);
    let mut eval_rng = stream_rng(t.seed, Stream::Eval);

    let mut csv = match &config.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io_err(format!("creating {}", dir.display())))?;
            fs::write(dir.join("config.txt"), config.to_text())
                .map_err(io_err("writing config.txt"))?;
            Some(CsvSink::create(dir.join("metrics.csv"))?)
        }
        None => None,
    };

    let mut agent = Agent::new(&spec, t.agent.clone(), &mut init_rng);
    let mut buffer = EpisodicBuffer::new(t.buffer_capacity, t.b)?;
    let plan = MinibatchPlan {
        m: t.m,
        k: t.k,
        her_ratio: t.her_ratio,
        variant: t.variant,
    };
    let start = Instant::now();
    let mut metrics = Vec::with_capacity(t.epochs);

    for epoch in 1..=t.epochs {
        let (mut critic_sum, mut actor_sum, mut n_updates) = (0.0, 0.0, 0usize);
        let mut diversity_sum = 0.0;
        let mut fallbacks = 0;
        for _ in 0..t.episodes_per_epoch {
            let traj = rollout(env.as_mut(), &agent, t, &mut env_rng, &mut explore_rng)?;
            diversity_sum += traj.diversity();
            feed_normalizers(&mut agent, &traj);
            buffer.store_episode(traj);
            for _ in 0..t.updates_per_episode {
                let batch = replay::sample_minibatch(
                    &buffer,
                    &plan,
                    &spec.reward,
                    &mut replay_rng,
                    &mut dpp_rng,
                )?;
                fallbacks += usize::from(batch.fallback);
                let (c, a) = agent.train_step(&batch.candidates)?;
                critic_sum += c;
                actor_sum += a;
                n_updates += 1;
            }
            agent.end_update_phase();
        }
        let success_rate = agent.evaluate(eval_env.as_mut(), t.eval_episodes, &mut eval_rng)?;
        let denom = n_updates.max(1) as f64;
        let row = EpochMetrics {
            epoch,
            success_rate,
            critic_loss: critic_sum / denom,
            actor_loss: actor_sum / denom,
            mean_diversity: diversity_sum / t.episodes_per_epoch.max(1) as f64,
            kdpp_fallbacks: fallbacks,
            seconds: if config.wall_clock {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        log::info!(
            "epoch {epoch}: success {:.3} critic {:.4} actor {:.4} diversity {:.4} fallbacks {}",
            row.success_rate,
            row.critic_loss,
            row.actor_loss,
            row.mean_diversity,
            row.kdpp_fallbacks
        );
        if let Some(sink) = csv.as_mut() {
            sink.line(&row.csv_row())?;
        }
        if let Some(dir) = &config.out_dir {
            if config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0 {
                let path = dir.join(format!("checkpoint_epoch{epoch:04}.json"));
                agent.save(&path, &config.env, &config.env_overrides)?;
            }
        }
        metrics.push(row);
    }
    if let Some(dir) = &config.out_dir {
        agent.save(
            &dir.join("checkpoint.json"),
            &config.env,
            &config.env_overrides,
        )?;
    }
    Ok(TrainOutcome { metrics, agent })
}

/// Loads a checkpoint and evaluates its deterministic policy. `env`, when
/// given, must name the environment the checkpoint was trained on.
pub fn eval_run(checkpoint: &Path, env: Option<&str>, n_episodes: usize, seed: u64) -> Result<f64> {
    if !checkpoint.exists() {
        return Err(RunError::Io {
            context: format!("checkpoint {}", checkpoint.display()),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        });
    }
    let ckpt = Agent::load(checkpoint)?;
    if let Some(name) = env {
        if name != ckpt.env {
            return Err(RunError::Config(format!(
                "checkpoint was trained on {:?}, not {name:?}",
                ckpt.env
            )));
        }
    }
    let mut env = make_env(&ckpt.env, &ckpt.env_overrides)?;
    let mut rng = stream_rng(seed, Stream::Eval);
    Ok(ckpt.agent.evaluate(env.as_mut(), n_episodes, &mut rng)?)
}

/// First epoch whose success rate reaches `threshold`.
pub fn epochs_to_threshold(metrics: &[EpochMetrics], threshold: f64) -> Option<usize> {
    metrics
        .iter()
        .find(|m| m.success_rate >= threshold)
        .map(|m| m.epoch)
}

/// Linear-interpolated percentile of unsorted data, `q` in `[0, 1]`.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of empty data");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

pub fn median(values: &[f64]) -> f64 {
    percentile(values, 0.5)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub epoch: usize,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
}

/// Per-epoch median and quartiles of success rate across runs.
pub fn success_curve(runs: &[Vec<EpochMetrics>]) -> Vec<CurvePoint> {
    let epochs = runs.iter().map(Vec::len).min().unwrap_or(0);
    (0..epochs)
        .map(|e| {
            let xs: Vec<f64> = runs.iter().map(|r| r[e].success_rate).collect();
            CurvePoint {
                epoch: runs[0][e].epoch,
                p25: percentile(&xs, 0.25),
                median: median(&xs),
                p75: percentile(&xs, 0.75),
            }
        })
        .collect()
}

pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut s = String::from("epoch,p25,median,p75\n");
    for p in curve {
        writeln!(s, "{},{},{},{}", p.epoch, p.p25, p.median, p.p75).expect("string write");
    }
    s
}

/// Trains one run per seed. With an output directory each seed writes to
/// `seed<N>/` and the quartile curve goes to `success_curve.csv`.
pub fn seed_sweep(base: &RunConfig, seeds: &[u64]) -> Result<Vec<Vec<EpochMetrics>>> {
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut cfg = base.clone();
        cfg.train.seed = seed;
        cfg.out_dir = base.out_dir.as_ref().map(|d| d.join(format!("seed{seed}")));
        runs.push(train_run(&cfg)?.metrics);
    }
    if let Some(dir) = &base.out_dir {
        fs::write(
            dir.join("success_curve.csv"),
            curve_csv(&success_curve(&runs)),
        )
        .map_err(io_err("writing success_curve.csv"))?;
    }
    Ok(runs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchSuite {
    /// k-DPP sampling time against minibatch size.
    Dpp,
    /// Trajectory diversity scoring time against window length.
    Replay,
}

impl std::str::FromStr for BenchSuite {
    type Err = RunError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dpp" => Ok(Self::Dpp),
            "replay" => Ok(Self::Replay),
            _ => Err(RunError::Config(format!(
                "unknown bench suite {s:?} (dpp|replay)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub calls: usize,
    pub seed: u64,
    /// Candidate count and feature dimension for the sampling suite.
    pub m: usize,
    pub feature_dim: usize,
    pub ks: Vec<usize>,
    /// Window count held fixed while the window length varies.
    pub n_windows: usize,
    pub goal_dim: usize,
    pub bs: Vec<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            calls: 1000,
            seed: 0,
            m: 100,
            feature_dim: 64,
            ks: vec![16, 32, 64],
            n_windows: 49,
            goal_dim: 8,
            bs: vec![2, 4, 8],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub parameter: &'static str,
    pub value: usize,
    pub calls: usize,
    pub mean_micros: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub suite: BenchSuite,
    pub rows: Vec<BenchRow>,
    /// Largest allowed slowdown when the parameter doubles.
    pub doubling_limit: f64,
}

impl BenchReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            writeln!(
                s,
                "{}={:<4} calls={} mean={:.2}us",
                r.parameter, r.value, r.calls, r.mean_micros
            )
            .expect("string write");
        }
        s
    }

    /// Monotone non-decreasing means, and at most `doubling_limit` slowdown
    /// between settings whose parameter doubles.
    pub fn check_scaling(&self) -> Result<()> {
        for w in self.rows.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if b.mean_micros < a.mean_micros {
                return Err(RunError::Scaling(format!(
                    "{} {} -> {}: mean time fell from {:.2}us to {:.2}us",
                    a.parameter, a.value, b.value, a.mean_micros, b.mean_micros
                )));
            }
            if b.value == 2 * a.value && b.mean_micros > self.doubling_limit * a.mean_micros {
                return Err(RunError::Scaling(format!(
                    "{} {} -> {}: slowdown {:.2} exceeds {}",
                    a.parameter,
                    a.value,
                    b.value,
                    b.mean_micros / a.mean_micros,
                    self.doubling_limit
                )));
            }
        }
        Ok(())
    }
}

fn random_goals(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<GoalVector> {
    (0..n)
        .map(|_| {
            GoalVector::new((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
                .expect("finite")
        })
        .collect()
}

/// Times the chosen suite. Inputs are drawn fresh for every call but outside
/// the timed region.
pub fn bench_run(suite: BenchSuite, config: &BenchConfig) -> Result<BenchReport> {
    if config.calls == 0 {
        return Err(RunError::Config("bench needs at least one call".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut rows = Vec::new();
    match suite {
        BenchSuite::Dpp => {
            for &k in &config.ks {
                if k > config.m {
                    return Err(RunError::Config(format!(
                        "k = {k} exceeds m = {}",
                        config.m
                    )));
                }
                let mut total = 0.0;
                for _ in 0..config.calls {
                    let cols = random_goals(config.m, config.feature_dim, &mut rng)
                        .into_iter()
                        .map(|g| g.as_slice().to_vec())
                        .collect();
                    let features = FeatureMatrix::new(cols)?;
                    let t0 = Instant::now();
                    let sample = dpp::kdpp_sample(&features, k, &mut rng)?;
                    total += t0.elapsed().as_secs_f64();
                    std::hint::black_box(sample);
                }
                rows.push(BenchRow {
                    parameter: "k",
                    value: k,
                    calls: config.calls,
                    mean_micros: 1e6 * total / config.calls as f64,
                });
            }
            Ok(BenchReport {
                suite,
                rows,
                doubling_limit: 5.0,
            })
        }
        BenchSuite::Replay => {
            for &b in &config.bs {
                if b < 2 {
                    return Err(RunError::Config(format!(
                        "window b = {b} must be at least 2"
                    )));
                }
                let len = config.n_windows + b - 1;
                let mut total = 0.0;
                for _ in 0..config.calls {
                    let goals = random_goals(len, config.goal_dim, &mut rng);
                    let t0 = Instant::now();
                    let d = replay::trajectory_diversity(&goals, b)?;
                    total += t0.elapsed().as_secs_f64();
                    std::hint::black_box(d);
                }
                rows.push(BenchRow {
                    parameter: "b",
                    value: b,
                    calls: config.calls,
                    mean_micros: 1e6 * total / config.calls as f64,
                });
            }
            Ok(BenchReport {
                suite,
                rows,
                doubling_limit: 10.0,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RunConfig {
        let mut c = RunConfig::default();
        c.env_overrides.push(("bits".into(), "4".into()));
        c.train.epochs = 2;
        c.train.episodes_per_epoch = 3;
        c.train.updates_per_episode = 2;
        c.train.m = 16;
        c.train.k = 8;
        c.train.eval_episodes = 5;
        c.wall_clock = false;
        c
    }

    #[test]
    fn rejects_k_above_m_and_short_window() {
        let mut c = tiny();
        c.train.k = 20;
        c.train.b = 1;
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("exceeds candidate count"), "{msg}");
        assert!(msg.contains("at least 2"), "{msg}");
    }

    #[test]
    fn rejects_unknown_env() {
        let mut c = tiny();
        c.env = "mujoco".into();
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_text_round_trips() {
        let mut c = tiny();
        c.train.variant = SamplerVariant::Dgsh;
        c.train.agent.hidden = vec![32, 16];
        let mut back = RunConfig::default();
        back.apply_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn config_text_parsing() {
        let mut c = RunConfig::default();
        c.apply_text("# comment\nenv = pointpush\n\nk = 32 # inline\nenv.epsilon=0.1\n")
            .unwrap();
        assert_eq!(c.env, "pointpush");
        assert_eq!(c.train.k, 32);
        assert_eq!(
            c.env_overrides,
            vec![("epsilon".to_string(), "0.1".to_string())]
        );
        assert!(c.apply_text("k 3").is_err());
        assert!(c.apply_text("colour = red").is_err());
        assert!(c.apply_text("k = many").is_err());
    }

    #[test]
    fn percentiles() {
        let xs = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(median(&xs), 3.0);
        assert_eq!(percentile(&xs, 0.25), 2.0);
        assert_eq!(percentile(&xs, 0.75), 4.0);
        assert_eq!(percentile(&[1.0, 2.0], 0.5), 1.5);
    }

    #[test]
    fn tiny_run_writes_csv_and_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = tiny();
        c.out_dir = Some(dir.path().to_path_buf());
        c.checkpoint_every = 1;
        let out = train_run(&c).unwrap();
        assert_eq!(out.metrics.len(), 2);
        let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 3);
        assert!(dir.path().join("checkpoint_epoch0002.json").exists());
        let rate = eval_run(&dir.path().join("checkpoint.json"), Some("bitflip"), 5, 0).unwrap();
        assert!((0.0..=1.0).contains(&rate));
    }

    #[test]
    fn eval_of_missing_checkpoint_fails() {
        let err = eval_run(Path::new("/nonexistent/ckpt.json"), None, 5, 0).unwrap_err();
        assert!(err.to_string().contains("not found"));
    }

    #[test]
    fn threshold_epoch() {
        let rows: Vec<EpochMetrics> = [0.1, 0.85, 0.5]
            .iter()
            .enumerate()
            .map(|(i, &s)| EpochMetrics {
                epoch: i + 1,
                success_rate: s,
                critic_loss: 0.0,
                actor_loss: 0.0,
                mean_diversity: 0.0,
                kdpp_fallbacks: 0,
                seconds: 0.0,
            })
            .collect();
        assert_eq!(epochs_to_threshold(&rows, 0.8), Some(2));
        assert_eq!(epochs_to_threshold(&rows, 0.9), None);
    }
}
