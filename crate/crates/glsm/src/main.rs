use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use glsm::artifacts::{atomic_write, Stage};
use glsm::config::PipelineConfig;
use glsm::report::metrics_table;
use glsm::serve::{read_requests, serve_sim, traces_tsv, Request};
use glsm::stages::{load_prepared, load_server, run_chain, run_stage, StageOptions};
use glsm::Workspace;
use glsm_core::experiment::run_experiment;

#[derive(Parser)]
#[command(name = "glsm", version, about = "Graph-retrieval long/short-term interest CTR pipeline")]
struct Cli {
    /// TOML configuration file; unset keys keep their defaults.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Artifact directory (overrides `workdir`).
    #[arg(long, short, global = true)]
    workdir: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set experiment.top_k=5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted-interest corpus.
    Synth,
    /// Validate and import a behavior log.
    Ingest {
        #[arg(long)]
        input: PathBuf,
    },
    /// Build the global item graph over long-term behavior.
    BuildGraph,
    /// Train item embeddings and score cluster counts.
    Embed {
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Select center nodes and write the per-user subgraph store.
    Centers,
    /// Dump retrieval results for held-out rows.
    Retrieve,
    /// Fit one model and write a checkpoint.
    Train(TrainArgs),
    /// Score held-out rows, or run a named variant matrix.
    Eval {
        /// One of: fusion, horizon, topk, full.
        #[arg(long)]
        experiment: Option<String>,
    },
    /// Run synth through eval.
    Run,
    /// Run a named variant matrix fully in memory, without artifacts.
    Experiment { name: String },
    /// Replay requests through the serving simulator.
    Serve(ServeArgs),
    /// Print the effective configuration.
    Config,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    fusion: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Parallel,
    Sequential,
    Both,
}

#[derive(Args)]
struct ServeArgs {
    /// Request stream (`user,item,scene,timestamp`); defaults to held-out rows.
    #[arg(long)]
    requests: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "both")]
    mode: Mode,
    #[arg(long)]
    material_ms: Option<f64>,
    #[arg(long)]
    fetch_ms: Option<f64>,
    /// Write per-request traces here (tab separated).
    #[arg(long)]
    trace: Option<PathBuf>,
}

fn push(overrides: &mut Vec<String>, key: &str, value: Option<impl ToString>) {
    if let Some(v) = value {
        overrides.push(format!("{key}={}", v.to_string()));
    }
}

fn quoted(s: Option<String>) -> Option<String> {
    s.map(|s| format!("\"{s}\""))
}

fn held_out_requests(cfg: &PipelineConfig, ws: &Workspace) -> Result<Vec<Request>> {
    let prepared = load_prepared(ws, cfg)?;
    Ok(prepared
        .test_rows
        .iter()
        .take(cfg.serve.requests)
        .map(|r| Request {
            user: r.user,
            item: r.item,
            scene: r.scene,
            timestamp: r.timestamp,
        })
        .collect())
}

fn serve(cfg: &PipelineConfig, args: ServeArgs) -> Result<()> {
    let ws = Workspace::new(&cfg.workdir);
    let server = load_server(&ws, cfg)?;
    let requests = match &args.requests {
        Some(p) => read_requests(p)?,
        None => held_out_requests(cfg, &ws)?,
    };
    let modes: &[bool] = match args.mode {
        Mode::Parallel => &[true],
        Mode::Sequential => &[false],
        Mode::Both => &[false, true],
    };
    let mut runs = Vec::new();
    let mut traces = String::new();
    for &parallel in modes {
        let run = serve_sim(&server, &requests, parallel)?;
        print!("{}", run.summary.render());
        let tsv = traces_tsv(&run.traces, parallel);
        if traces.is_empty() {
            traces = tsv;
        } else {
            traces.extend(tsv.lines().skip(1).map(|l| format!("{l}\n")));
        }
        runs.push(run);
    }
    if let [seq, par] = runs.as_slice() {
        let same = seq.traces.iter().zip(&par.traces).all(|(a, b)| a.score.to_bits() == b.score.to_bits());
        if let (Some(s), Some(p)) = (seq.summary.total, par.summary.total) {
            let saved = s.p50.as_secs_f64() - p.p50.as_secs_f64();
            println!("p50 saving from parallel retrieval: {:.3} ms", saved * 1e3);
        }
        println!("scores identical across modes: {same}");
        if !same {
            bail!("parallel and sequential scores differ");
        }
    }
    if let Some(path) = args.trace {
        atomic_write(&path, traces.as_bytes())?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut overrides = cli.overrides;
    if let Some(w) = &cli.workdir {
        overrides.push(format!("workdir={:?}", w.display().to_string()));
    }
    match &cli.command {
        Command::Embed { dim, epochs, seed } => {
            push(&mut overrides, "experiment.embed_dim", *dim);
            push(&mut overrides, "experiment.embed_epochs", *epochs);
            push(&mut overrides, "experiment.seed", *seed);
        }
        Command::Train(t) => {
            push(&mut overrides, "fusion", quoted(t.fusion.clone()));
            push(&mut overrides, "experiment.train.learning_rate", t.lr);
            push(&mut overrides, "experiment.train.epochs", t.epochs);
            push(&mut overrides, "experiment.train.batch", t.batch);
            push(&mut overrides, "experiment.train.momentum", t.momentum);
            push(&mut overrides, "experiment.train.optimizer", quoted(t.optimizer.clone()));
            push(&mut overrides, "experiment.seed", t.seed);
        }
        Command::Serve(s) => {
            push(&mut overrides, "serve.material_delay_ms", s.material_ms);
            push(&mut overrides, "serve.fetch_delay_ms", s.fetch_ms);
        }
        _ => {}
    }
    let cfg = PipelineConfig::load(cli.config.as_deref(), &overrides)?;
    let stage = |s: Stage, opts: StageOptions| -> Result<()> {
        let out = run_stage(s, &cfg, &opts)?;
        if let Some(t) = out.table {
            print!("{t}");
        }
        Ok(())
    };
    match cli.command {
        Command::Synth => stage(Stage::Synth, StageOptions::default()),
        Command::Ingest { input } => stage(
            Stage::Ingest,
            StageOptions {
                input: Some(input),
                ..StageOptions::default()
            },
        ),
        Command::BuildGraph => stage(Stage::BuildGraph, StageOptions::default()),
        Command::Embed { .. } => stage(Stage::Embed, StageOptions::default()),
        Command::Centers => stage(Stage::Centers, StageOptions::default()),
        Command::Retrieve => stage(Stage::Retrieve, StageOptions::default()),
        Command::Train(_) => stage(Stage::Train, StageOptions::default()),
        Command::Eval { experiment } => stage(
            Stage::Eval,
            StageOptions {
                experiment,
                ..StageOptions::default()
            },
        ),
        Command::Run => {
            let outs = run_chain(&cfg)?;
            if let Some(t) = outs.last().and_then(|o| o.table.as_ref()) {
                print!("{t}");
            }
            Ok(())
        }
        Command::Experiment { name } => {
            let report = run_experiment(&name, &cfg.experiment).with_context(|| format!("experiment `{name}`"))?;
            print!("{}", metrics_table(&report.report));
            Ok(())
        }
        Command::Serve(args) => serve(&cfg, args),
        Command::Config => {
            print!("{}", cfg.to_toml()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
