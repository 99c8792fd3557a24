use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use multiscale_client::Client;
use multiscale_core::bandit::{simulate_population, PopulationSpec, Session, SCREEN_THRESHOLD};
use multiscale_core::eval::{build_export, EmbeddingExport, EXPORT_BIN, EXPORT_INDEX};
use multiscale_core::pipeline::{
    evaluate_model, evaluate_predictor, train_variant, training_examples, EvalOptions, Trained, Variant,
};
use multiscale_core::sessions::{load_sessions, save_sessions, split, DatasetSplit};
use multiscale_core::training::{Checkpoint, TrainOutput};
use multiscale_service::{AppState, ServiceConfig};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::manifest::RunManifest;
use crate::UsageError;

pub const SPLIT_FILE: &str = "split.json";
pub const REPORT_FILE: &str = "eval_report.json";

/// The held-out split and how much of the training side was used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    pub test_fraction: f64,
    pub train_limit: Option<usize>,
    pub split: DatasetSplit,
}

fn create_out_dir(cfg: &RunConfig) -> anyhow::Result<()> {
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))
}

fn load_data(path: &Path) -> anyhow::Result<Vec<Session>> {
    let sessions = load_sessions(path).with_context(|| format!("loading sessions from {}", path.display()))?;
    if sessions.is_empty() {
        bail!("{} holds no sessions", path.display());
    }
    Ok(sessions)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn simulate(cfg: &RunConfig) -> anyhow::Result<()> {
    let s = &cfg.simulate;
    let mut spec = PopulationSpec::balanced(s.n_per_family);
    spec.trials = s.trials;
    spec.screen = s.screen.then_some(SCREEN_THRESHOLD);
    create_out_dir(cfg)?;
    let sessions = simulate_population(&spec, cfg.seed)?;
    let out = cfg.output(&s.out);
    save_sessions(&out, &sessions).with_context(|| format!("writing {}", out.display()))?;
    tracing::info!(sessions = sessions.len(), path = %out.display(), "simulated");
    RunManifest::new("simulate", cfg, &[], &[out])?.write(&cfg.out_dir)?;
    Ok(())
}

pub fn train(cfg: &RunConfig) -> anyhow::Result<()> {
    let data = cfg.require_data()?.to_path_buf();
    let fraction = cfg.split.test_fraction;
    if !(0.0 < fraction && fraction < 1.0) {
        return Err(UsageError(format!("--test-fraction must be in (0, 1), got {fraction}")).into());
    }
    let sessions = load_data(&data)?;
    let ds = split(&sessions, 1.0 - fraction, cfg.seed)?;
    let (train_set, _) = ds.partition(&sessions);
    let examples = training_examples(&train_set, Variant::Full, cfg.split.train_limit)?;
    tracing::info!(sessions = train_set.len(), examples = examples.len(), epochs = cfg.train.epochs, "training");
    create_out_dir(cfg)?;
    let split_path = cfg.output(SPLIT_FILE);
    write_json(
        &split_path,
        &SplitFile {
            test_fraction: fraction,
            train_limit: cfg.split.train_limit,
            split: ds,
        },
    )?;
    let output = TrainOutput {
        dir: Some(cfg.out_dir.clone()),
    };
    let ck = multiscale_core::training::train(&examples, &cfg.model, &cfg.train, &output)?;
    if let Some(last) = ck.loss_history.last() {
        tracing::info!(epoch = last.epoch, total = last.loss.total, "finished");
    }
    let outputs = vec![cfg.output("checkpoint.json"), cfg.output("loss.csv"), split_path];
    RunManifest::new("train", cfg, &[data], &outputs)?.write(&cfg.out_dir)?;
    Ok(())
}

fn load_checkpoint(path: &Path) -> anyhow::Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn split_file_for(cfg: &RunConfig, checkpoint: &Path) -> PathBuf {
    cfg.evaluate.split_file.clone().unwrap_or_else(|| {
        checkpoint
            .parent()
            .map(|d| d.join(SPLIT_FILE))
            .unwrap_or_else(|| PathBuf::from(SPLIT_FILE))
    })
}

pub fn evaluate(cfg: &RunConfig) -> anyhow::Result<()> {
    let ck_path = cfg.require_checkpoint()?.to_path_buf();
    let data = cfg.require_data()?.to_path_buf();
    let split_path = split_file_for(cfg, &ck_path);
    let ck = load_checkpoint(&ck_path)?;
    let sessions = load_data(&data)?;
    let sf: SplitFile = serde_json::from_str(
        &fs::read_to_string(&split_path).with_context(|| format!("reading split file {}", split_path.display()))?,
    )
    .with_context(|| format!("parsing {}", split_path.display()))?;
    let (train_set, test_set) = sf.split.partition(&sessions);
    if test_set.len() != sf.split.test_ids.len() {
        bail!(
            "{} lists {} test sessions but {} are in {}",
            split_path.display(),
            sf.split.test_ids.len(),
            test_set.len(),
            data.display()
        );
    }
    create_out_dir(cfg)?;
    let options = EvalOptions {
        summary: cfg.evaluate.summary,
        ..EvalOptions::default()
    };
    let mut outputs = Vec::new();
    let report = match cfg.evaluate.ablate {
        None => evaluate_model("full", &ck.model()?, ck.seed, &test_set, cfg.seed, options)?,
        Some(variant) => {
            let examples = training_examples(&train_set, variant, sf.train_limit)?;
            let dir = cfg.output(format!("ablate-{variant}"));
            fs::create_dir_all(&dir)?;
            tracing::info!(%variant, examples = examples.len(), "retraining ablation");
            let output = TrainOutput { dir: Some(dir.clone()) };
            match train_variant(variant, &examples, &ck.model_config, &ck.train_config, &output)? {
                Trained::Model(trained) => {
                    outputs.push(dir.join("checkpoint.json"));
                    evaluate_model(variant.name(), &trained.model()?, trained.seed, &test_set, cfg.seed, options)?
                }
                Trained::Mlp(mlp) => {
                    let path = dir.join("mlp.json");
                    write_json(&path, &mlp)?;
                    outputs.push(path);
                    evaluate_predictor(variant.name(), &mlp, &test_set, cfg.seed)?
                }
            }
        }
    };
    tracing::info!(model = %report.model, accuracy = report.accuracy.accuracy, "evaluated");
    let report_path = cfg.output(REPORT_FILE);
    write_json(&report_path, &report)?;
    outputs.insert(0, report_path);
    RunManifest::new("evaluate", cfg, &[ck_path, data, split_path], &outputs)?.write(&cfg.out_dir)?;
    Ok(())
}

pub fn embed(cfg: &RunConfig) -> anyhow::Result<()> {
    let ck_path = cfg.require_checkpoint()?.to_path_buf();
    let data = cfg.require_data()?.to_path_buf();
    let model = load_checkpoint(&ck_path)?.model()?;
    let sessions = load_data(&data)?;
    create_out_dir(cfg)?;
    let export = build_export(&model, &sessions, cfg.embed.summary)?;
    export.write(&cfg.out_dir)?;
    tracing::info!(subjects = sessions.len(), "exported embeddings");
    let outputs = vec![cfg.output(EXPORT_BIN), cfg.output(EXPORT_INDEX)];
    RunManifest::new("embed", cfg, &[ck_path, data], &outputs)?.write(&cfg.out_dir)?;
    Ok(())
}

pub fn serve(cfg: &RunConfig) -> anyhow::Result<()> {
    let ck_path = cfg.require_checkpoint()?.to_path_buf();
    let model = load_checkpoint(&ck_path)?.model()?;
    create_out_dir(cfg)?;
    let s = &cfg.serve;
    let service = ServiceConfig {
        trials: s.trials,
        seed: cfg.seed,
        export_path: cfg.output(&s.human_out),
        ..ServiceConfig::default()
    };
    let mut state = AppState::new(service, Some(model));
    let mut inputs = vec![ck_path];
    if let Some(dir) = &s.export_dir {
        state = state.with_export(EmbeddingExport::load(dir).with_context(|| format!("loading export from {}", dir.display()))?);
        inputs.push(dir.join(EXPORT_BIN));
        inputs.push(dir.join(EXPORT_INDEX));
    }
    if let Some(data) = &cfg.data {
        state = state.with_subjects(load_data(data)?);
        inputs.push(data.clone());
    }
    RunManifest::new("serve", cfg, &inputs, &[])?.write(&cfg.out_dir)?;
    let addr = format!("{}:{}", s.host, s.port);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        tracing::info!(%addr, "serving");
        println!("listening on http://{addr}");
        multiscale_service::serve(listener, Arc::new(state)).await?;
        Ok(())
    })
}

fn format_probs(p: &[f64; 3]) -> String {
    format!("[{:.2} {:.2} {:.2}]", p[0], p[1], p[2])
}

/// Plays one session reading arms (0, 1 or 2) from stdin, one per line.
pub fn play(url: &str, export: bool) -> anyhow::Result<()> {
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let client = Client::new(url);
        let created = client.create_session().await.with_context(|| format!("contacting {url}"))?;
        println!("session {} with {} trials; enter 0, 1 or 2 (q to stop)", created.session_id, created.trials);
        let stdin = std::io::stdin();
        let mut lines = stdin.lock().lines();
        let (mut score, mut hits, mut called) = (0u32, 0u32, 0u32);
        loop {
            print!("trial {:>3}> ", created.trial + called as usize + 1);
            std::io::stdout().flush()?;
            let Some(line) = lines.next() else { break };
            let line = line?;
            let line = line.trim();
            if line == "q" {
                break;
            }
            let Ok(arm) = line.parse::<usize>() else {
                println!("enter 0, 1 or 2");
                continue;
            };
            let out = match client.choose(&created.session_id, arm).await {
                Ok(out) => out,
                Err(e) if e.status().is_some_and(|s| s.as_u16() == 422) => {
                    println!("enter 0, 1 or 2");
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            called += 1;
            score += out.reward as u32;
            if out.model_was_right == Some(true) {
                hits += 1;
            }
            let verdict = match out.model_was_right {
                Some(true) => "model saw that coming",
                Some(false) => "model missed",
                None => "",
            };
            println!("reward {}  total {score}  {verdict}", out.reward);
            if out.complete {
                println!(
                    "done: {score} rewards; the model called {hits} of {} choices; next-choice forecast was {}",
                    called.saturating_sub(1),
                    format_probs(&out.prediction_next)
                );
                if export {
                    let e = client.export(&created.session_id).await?;
                    println!("exported as {}", e.subject_id);
                }
                break;
            }
        }
        Ok(())
    })
}
