use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dtgsh::run::{self, BenchConfig, BenchSuite, RunConfig};

/// Goal-conditioned off-policy training with diversity-prioritised replay.
#[derive(Parser)]
#[command(name = "dtgsh", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent and write metrics.csv plus checkpoints.
    Train(Box<TrainArgs>),
    /// Evaluate a saved checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Must match the environment the checkpoint was trained on.
        #[arg(long)]
        env: Option<String>,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Time diversity scoring or k-DPP sampling and check their scaling.
    Bench {
        #[arg(long)]
        suite: BenchSuite,
        #[arg(long, default_value_t = 1000)]
        calls: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// key = value file; flags given here take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    /// Environment parameter, e.g. `--set bits=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    env_overrides: Vec<String>,
    /// dtgsh | dtsh | dgsh | her-uniform | none
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    episodes_per_epoch: Option<usize>,
    #[arg(long)]
    updates_per_episode: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    b: Option<usize>,
    #[arg(long)]
    her_ratio: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Train one run per seed and write median/quartile curves.
    #[arg(long, value_delimiter = ',', conflicts_with = "seed")]
    seeds: Vec<u64>,
    #[arg(long)]
    eval_episodes: Option<usize>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Write 0 in the seconds column so reruns are byte-identical.
    #[arg(long)]
    no_wall_clock: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl TrainArgs {
    fn into_config(self) -> run::Result<(RunConfig, Vec<u64>)> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let flags: [(&str, Option<String>); 12] = [
            ("env", self.env),
            ("variant", self.variant),
            ("epochs", self.epochs.map(|v| v.to_string())),
            (
                "episodes_per_epoch",
                self.episodes_per_epoch.map(|v| v.to_string()),
            ),
            (
                "updates_per_episode",
                self.updates_per_episode.map(|v| v.to_string()),
            ),
            ("k", self.k.map(|v| v.to_string())),
            ("m", self.m.map(|v| v.to_string())),
            ("b", self.b.map(|v| v.to_string())),
            ("her_ratio", self.her_ratio.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("eval_episodes", self.eval_episodes.map(|v| v.to_string())),
            (
                "checkpoint_every",
                self.checkpoint_every.map(|v| v.to_string()),
            ),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        for kv in &self.env_overrides {
            let (k, v) = kv.split_once('=').ok_or_else(|| {
                run::RunError::Config(format!("--set expects KEY=VALUE, got {kv:?}"))
            })?;
            cfg.set(&format!("env.{}", k.trim()), v.trim())?;
        }
        if self.no_wall_clock {
            cfg.wall_clock = false;
        }
        if let Some(out) = self.out {
            cfg.out_dir = Some(out);
        }
        Ok((cfg, self.seeds))
    }
}

fn execute(cli: Cli) -> run::Result<()> {
    match cli.command {
        Command::Train(args) => {
            let (cfg, seeds) = (*args).into_config()?;
            if seeds.is_empty() {
                let out = run::train_run(&cfg)?;
                if let Some(last) = out.metrics.last() {
                    println!("final success rate {}", last.success_rate);
                }
            } else {
                cfg.validate()?;
                let runs = run::seed_sweep(&cfg, &seeds)?;
                print!("{}", run::curve_csv(&run::success_curve(&runs)));
            }
        }
        Command::Eval {
            checkpoint,
            env,
            episodes,
            seed,
        } => {
            let rate = run::eval_run(&checkpoint, env.as_deref(), episodes, seed)?;
            println!("success rate {rate}");
        }
        Command::Bench { suite, calls, seed } => {
            let config = BenchConfig {
                calls,
                seed,
                ..BenchConfig::default()
            };
            let report = run::bench_run(suite, &config)?;
            print!("{}", report.render());
            report.check_scaling()?;
            println!("scaling within bounds");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DIVHER_LOG", "info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
