use std::fmt::Display;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use multiscale_core::eval::SessionSummary;
use multiscale_core::pipeline::Variant;
use multiscale_core::training::TrainConfig;

use crate::config::{RunConfig, ServeSettings, SimulateSettings, SplitSettings};

fn with_default(text: &str, value: impl Display) -> String {
    format!("{text} [default: {value}]")
}

fn train_default() -> TrainConfig {
    TrainConfig::default()
}

#[derive(Debug, Parser)]
#[command(name = "multiscale", version, about = "Multi-timescale behaviour model for three-armed bandit sessions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate an agent population into a sessions JSONL file.
    Simulate(SimulateArgs),
    /// Train the model on a sessions file.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the held-out split.
    Evaluate(EvaluateArgs),
    /// Export per-session embeddings for the explorer.
    Embed(EmbedArgs),
    /// Serve a checkpoint over HTTP for live play.
    Serve(ServeArgs),
    /// Play a session against a running server from the terminal.
    Play(PlayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Train(_) => "train",
            Command::Evaluate(_) => "evaluate",
            Command::Embed(_) => "embed",
            Command::Serve(_) => "serve",
            Command::Play(_) => "play",
        }
    }
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long, help = with_default("Base seed", RunConfig::default().seed))]
    pub seed: Option<u64>,
    #[arg(long, value_name = "DIR", help = with_default("Directory for all outputs", "."))]
    pub out_dir: Option<PathBuf>,
    #[arg(long, help = with_default("Worker threads, 0 for all cores", RunConfig::default().threads))]
    pub threads: Option<usize>,
    /// TOML config file, or a manifest-*.json from an earlier run
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, help = with_default("Sessions per agent family", SimulateSettings::default().n_per_family))]
    pub n_per_family: Option<usize>,
    #[arg(long, help = with_default("Trials per session", SimulateSettings::default().trials))]
    pub trials: Option<usize>,
    /// Drop sessions with a reward rate below 42%
    #[arg(long)]
    pub screen: bool,
    #[arg(long, value_name = "FILE", help = with_default("Sessions file, relative to --out-dir", "sessions.jsonl"))]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long, help = with_default("Held-out fraction of sessions", SplitSettings::default().test_fraction))]
    pub test_fraction: Option<f64>,
    /// Train on only the first N training sessions, before augmentation [default: all]
    #[arg(long, value_name = "N")]
    pub train_limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Sessions JSONL file
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    #[arg(long, help = with_default("Training epochs", train_default().epochs))]
    pub epochs: Option<usize>,
    #[arg(long, help = with_default("AdamW learning rate", train_default().lr))]
    pub lr: Option<f64>,
    #[arg(long, help = with_default("AdamW weight decay", train_default().weight_decay))]
    pub weight_decay: Option<f64>,
    #[arg(long, help = with_default("Weight of the latent losses", train_default().alpha))]
    pub alpha: Option<f64>,
    #[arg(long, help = with_default("Largest short-term target offset", train_default().delta_short))]
    pub delta_short: Option<usize>,
    #[arg(long, help = with_default("Largest long-term target offset", train_default().delta_long))]
    pub delta_long: Option<usize>,
    #[arg(long, help = with_default("Sessions per batch", train_default().batch_sessions))]
    pub batch_sessions: Option<usize>,
    #[arg(long, help = with_default("Sampled timesteps per session", train_default().timesteps_per_session))]
    pub timesteps: Option<usize>,
    /// Also predict the online embedding from the target
    #[arg(long)]
    pub symmetrize: bool,
    #[arg(long, value_name = "N", help = with_default("Write a checkpoint every N epochs, 0 for never", train_default().checkpoint_every))]
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Sessions JSONL file the checkpoint was trained from
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    /// Split file [default: split.json next to the checkpoint]
    #[arg(long, value_name = "FILE")]
    pub split_file: Option<PathBuf>,
    /// Retrain this variant with the checkpoint's configs and evaluate it instead
    #[arg(long, value_name = "VARIANT")]
    pub ablate: Option<Variant>,
    #[arg(long, value_parser = parse_summary, help = with_default("Session embedding for the style probe: final or mean", "final"))]
    pub summary: Option<SessionSummary>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    #[arg(long, value_parser = parse_summary, help = with_default("Per-session embedding: final or mean", "final"))]
    pub summary: Option<SessionSummary>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Dataset sessions offered by the subject endpoint
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    /// Embedding export served to the explorer
    #[arg(long, value_name = "DIR")]
    pub export_dir: Option<PathBuf>,
    #[arg(long, help = with_default("Bind address", ServeSettings::default().host))]
    pub host: Option<String>,
    #[arg(long, help = with_default("Port", ServeSettings::default().port))]
    pub port: Option<u16>,
    #[arg(long, help = with_default("Trials per live session", ServeSettings::default().trials))]
    pub trials: Option<usize>,
    #[arg(long, value_name = "FILE", help = with_default("Exported human sessions, relative to --out-dir", "human_sessions.jsonl"))]
    pub human_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlayArgs {
    #[arg(long, default_value = "http://127.0.0.1:8787")]
    pub url: String,
    /// Export the session once it is complete
    #[arg(long)]
    pub export: bool,
}

fn parse_summary(s: &str) -> Result<SessionSummary, String> {
    match s {
        "final" => Ok(SessionSummary::Final),
        "mean" => Ok(SessionSummary::Mean),
        _ => Err(format!("expected final or mean, got {s:?}")),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl CommonArgs {
    /// Defaults, then `--config`, then these flags.
    pub fn base(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.out_dir, self.out_dir.clone());
        set(&mut cfg.threads, self.threads);
        Ok(cfg)
    }
}

impl SimulateArgs {
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = self.common.base()?;
        let s = &mut cfg.simulate;
        set(&mut s.n_per_family, self.n_per_family);
        set(&mut s.trials, self.trials);
        s.screen |= self.screen;
        set(&mut s.out, self.out.clone());
        Ok(cfg)
    }
}

impl TrainArgs {
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = self.common.base()?;
        set(&mut cfg.data, self.data.clone().map(Some));
        set(&mut cfg.split.test_fraction, self.split.test_fraction);
        set(&mut cfg.split.train_limit, self.split.train_limit.map(Some));
        let t = &mut cfg.train;
        set(&mut t.epochs, self.epochs);
        set(&mut t.lr, self.lr);
        set(&mut t.weight_decay, self.weight_decay);
        set(&mut t.alpha, self.alpha);
        set(&mut t.delta_short, self.delta_short);
        set(&mut t.delta_long, self.delta_long);
        set(&mut t.batch_sessions, self.batch_sessions);
        set(&mut t.timesteps_per_session, self.timesteps);
        t.symmetrize |= self.symmetrize;
        set(&mut t.checkpoint_every, self.checkpoint_every);
        t.seed = cfg.seed;
        Ok(cfg)
    }
}

impl EvaluateArgs {
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = self.common.base()?;
        set(&mut cfg.checkpoint, self.checkpoint.clone().map(Some));
        set(&mut cfg.data, self.data.clone().map(Some));
        set(&mut cfg.evaluate.split_file, self.split_file.clone().map(Some));
        set(&mut cfg.evaluate.ablate, self.ablate.map(Some));
        set(&mut cfg.evaluate.summary, self.summary);
        Ok(cfg)
    }
}

impl EmbedArgs {
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = self.common.base()?;
        set(&mut cfg.checkpoint, self.checkpoint.clone().map(Some));
        set(&mut cfg.data, self.data.clone().map(Some));
        set(&mut cfg.embed.summary, self.summary);
        Ok(cfg)
    }
}

impl ServeArgs {
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = self.common.base()?;
        set(&mut cfg.checkpoint, self.checkpoint.clone().map(Some));
        set(&mut cfg.data, self.data.clone().map(Some));
        let s = &mut cfg.serve;
        set(&mut s.export_dir, self.export_dir.clone().map(Some));
        set(&mut s.host, self.host.clone());
        set(&mut s.port, self.port);
        set(&mut s.trials, self.trials);
        set(&mut s.human_out, self.human_out.clone());
        Ok(cfg)
    }
}
