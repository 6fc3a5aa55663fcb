//! Pipeline stages. Each reads upstream artifacts from the workspace and
//! writes its own outputs atomically; reruns with identical inputs produce
//! identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use glsm_core::embed::{select_cluster_count, train_graph_embeddings, EmbeddingTable};
use glsm_core::experiment::{
    build_store, build_vocab, examples_for, horizon_splits, long_term_graph, named_variants, run_variants, split_rows,
    Prepared,
};
use glsm_core::graph::ItemGraph;
use glsm_core::metrics::{MetricRow, MetricsReport, ScoredRow};
use glsm_core::model::{predict_all, train, Checkpoint, ParameterSet};
use glsm_core::retrieval::{retrieve, SubgraphStore};
use glsm_core::synth::generate_synthetic_corpus;
use glsm_core::{CategoryId, ItemId};

use crate::artifacts::{Artifact, Stage, Workspace};
use crate::config::PipelineConfig;
use crate::logfile::{read_corpus, Corpus};
use crate::report::{metrics_table, metrics_tsv, pairs_tsv, scores_tsv, series_tsv};
use crate::serve::{ServeDelays, Server};

/// Stage inputs that are not part of the configuration.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StageOptions {
    /// Behavior log consumed by `ingest`.
    pub input: Option<PathBuf>,
    /// Named variant matrix run by `eval` instead of scoring the checkpoint.
    pub experiment: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutput {
    pub stage: Stage,
    pub written: Vec<PathBuf>,
    /// One line for the progress log.
    pub summary: String,
    /// Console report, for stages that have one.
    pub table: Option<String>,
}

/// Stages run by [`run_chain`], in order.
pub const CHAIN: [Stage; 7] = [
    Stage::Synth,
    Stage::BuildGraph,
    Stage::Embed,
    Stage::Centers,
    Stage::Retrieve,
    Stage::Train,
    Stage::Eval,
];

fn progress(stage: Stage, msg: impl AsRef<str>) {
    eprintln!("[{stage}] {}", msg.as_ref());
}

pub fn load_corpus(ws: &Workspace, cfg: &PipelineConfig) -> Result<Corpus> {
    let path = ws.require(Artifact::Corpus)?;
    Ok(read_corpus(&path, Some(cfg.experiment.scene_count))?)
}

pub fn load_graph(ws: &Workspace) -> Result<ItemGraph> {
    ItemGraph::from_bytes(&ws.read(Artifact::Graph)?).context("decoding graph")
}

pub fn load_embeddings(ws: &Workspace) -> Result<EmbeddingTable> {
    EmbeddingTable::from_bytes(&ws.read(Artifact::Embeddings)?).context("decoding embeddings")
}

pub fn load_store(ws: &Workspace) -> Result<SubgraphStore> {
    SubgraphStore::from_bytes(&ws.read(Artifact::Store)?).context("decoding subgraph store")
}

pub fn load_checkpoint(ws: &Workspace) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&ws.read(Artifact::Checkpoint)?).context("decoding checkpoint")
}

/// The shared experiment inputs, rebuilt from artifacts instead of in memory.
pub fn load_prepared(ws: &Workspace, cfg: &PipelineConfig) -> Result<Prepared> {
    let e = &cfg.experiment;
    let store = load_store(ws)?;
    let embeddings = load_embeddings(ws)?;
    let corpus = load_corpus(ws, cfg)?;
    let (train_rows, test_rows) = split_rows(&corpus.rows, e.test_fraction, e.data_seed);
    if train_rows.is_empty() || test_rows.is_empty() {
        bail!("corpus has too few labeled rows for a train/test split");
    }
    Ok(Prepared {
        vocab: build_vocab(&corpus.sequences, &train_rows),
        histories: horizon_splits(&corpus.sequences, e.boundary_count),
        train_rows,
        test_rows,
        embeddings,
        store,
        embed_losses: Vec::new(),
    })
}

/// Item categories seen anywhere in the corpus; the newest event wins.
pub fn catalog(corpus: &Corpus) -> BTreeMap<ItemId, CategoryId> {
    let mut out = BTreeMap::new();
    for e in corpus.sequences.iter().flat_map(|s| s.events.iter()) {
        out.insert(e.item, e.category);
    }
    for r in &corpus.rows {
        out.insert(r.item, r.category);
    }
    out
}

pub fn load_server(ws: &Workspace, cfg: &PipelineConfig) -> Result<Server> {
    let ckpt = load_checkpoint(ws)?;
    let corpus = load_corpus(ws, cfg)?;
    let variant = cfg.train_variant();
    Ok(Server {
        params: ckpt.params,
        vocab: ckpt.vocab,
        embeddings: load_embeddings(ws)?,
        store: load_store(ws)?,
        histories: horizon_splits(&corpus.sequences, cfg.experiment.boundary_count),
        catalog: catalog(&corpus),
        features: cfg.experiment.features(&variant),
        delays: ServeDelays {
            material: cfg.serve.material_delay(),
            fetch: cfg.serve.fetch_delay(),
        },
    })
}

fn truth_tsv(truth: &glsm_core::synth::GroundTruth) -> String {
    let mut out = String::from("kind\tid\tinterests\tfocus\n");
    for (item, i) in &truth.item_interest {
        let _ = writeln!(out, "item\t{}\t{i}\t", item.0);
    }
    for (user, set) in &truth.user_interests {
        let list: Vec<String> = set.iter().map(usize::to_string).collect();
        let focus = truth.user_focus.get(user).map(usize::to_string).unwrap_or_default();
        let _ = writeln!(out, "user\t{}\t{}\t{focus}", user.0, list.join(";"));
    }
    out
}

fn join_ids(ids: impl Iterator<Item = u64>) -> String {
    ids.map(|i| i.to_string()).collect::<Vec<_>>().join(";")
}

fn synth(ws: &Workspace, cfg: &PipelineConfig) -> Result<StageOutput> {
    let e = &cfg.experiment;
    progress(
        Stage::Synth,
        format!("generating {} users x {} items, seed {}", e.generator.users, e.generator.items, e.data_seed),
    );
    let c = generate_synthetic_corpus(&e.generator, e.data_seed)?;
    let corpus = Corpus {
        sequences: c.sequences,
        rows: c.rows,
    };
    let written = vec![
        ws.write(Artifact::Corpus, corpus.to_log().as_bytes())?,
        ws.write(Artifact::Truth, truth_tsv(&c.truth).as_bytes())?,
    ];
    Ok(StageOutput {
        stage: Stage::Synth,
        written,
        summary: format!(
            "{} users, {} history events, {} labeled rows",
            corpus.sequences.len(),
            corpus.event_count(),
            corpus.rows.len()
        ),
        table: None,
    })
}

fn ingest(ws: &Workspace, cfg: &PipelineConfig, input: Option<&Path>) -> Result<StageOutput> {
    let input = input.context("`ingest` needs an input log (--input)")?;
    progress(Stage::Ingest, format!("reading {}", input.display()));
    let corpus = read_corpus(input, Some(cfg.experiment.scene_count))?;
    let written = vec![ws.write(Artifact::Corpus, corpus.to_log().as_bytes())?];
    Ok(StageOutput {
        stage: Stage::Ingest,
        written,
        summary: format!(
            "{} users, {} history events, {} labeled rows",
            corpus.sequences.len(),
            corpus.event_count(),
            corpus.rows.len()
        ),
        table: None,
    })
}

fn build_graph(ws: &Workspace, cfg: &PipelineConfig) -> Result<StageOutput> {
    let corpus = load_corpus(ws, cfg)?;
    progress(
        Stage::BuildGraph,
        format!("long-term graph, last {} events per user held out", cfg.experiment.boundary_count),
    );
    let graph = long_term_graph(&horizon_splits(&corpus.sequences, cfg.experiment.boundary_count));
    let written = vec![ws.write(Artifact::Graph, &graph.to_bytes())?];
    Ok(StageOutput {
        stage: Stage::BuildGraph,
        written,
        summary: format!("{} nodes, {} edges", graph.node_count(), graph.edge_count()),
        table: None,
    })
}

fn embed(ws: &Workspace, cfg: &PipelineConfig) -> Result<StageOutput> {
    let graph = load_graph(ws)?;
    let e = &cfg.experiment;
    progress(Stage::Embed, format!("dim {}, {} epochs", e.embed_dim, e.embed_epochs));
    let (table, report) = train_graph_embeddings(&graph, &e.sage())?;
    let points: Vec<Vec<f64>> = table.iter().map(|(_, v)| v.to_vec()).collect();
    let mut distinct = points.clone();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    distinct.dedup();
    let hi = e.cluster_max.min(distinct.len());
    let (best, scores) = if e.cluster_min <= hi {
        select_cluster_count(&points, e.cluster_min..=hi, e.seed)?
    } else {
        (0, Vec::new())
    };
    let written = vec![
        ws.write(Artifact::Embeddings, &table.to_bytes())?,
        ws.write(Artifact::EmbedLoss, series_tsv("loss", &report.losses).as_bytes())?,
        ws.write(Artifact::Silhouette, pairs_tsv(("k", "silhouette"), &scores).as_bytes())?,
    ];
    Ok(StageOutput {
        stage: Stage::Embed,
        written,
        summary: format!(
            "{} items embedded, final loss {:.4}, best global k {best}",
            table.len(),
            report.losses.last().copied().unwrap_or(f64::NAN)
        ),
        table: None,
    })
}

fn centers(ws: &Workspace, cfg: &PipelineConfig) -> Result<StageOutput> {
    let corpus = load_corpus(ws, cfg)?;
    let embeddings = load_embeddings(ws)?;
    let e = &cfg.experiment;
    progress(Stage::Centers, format!("{} centers per user", e.centers));
    let store = build_store(&horizon_splits(&corpus.sequences, e.boundary_count), &embeddings, &e.subgraph())?;
    let written = vec![ws.write(Artifact::Store, &store.to_bytes())?];
    Ok(StageOutput {
        stage: Stage::Centers,
        written,
        summary: format!("{} user subgraphs", store.len()),
        table: None,
    })
}

fn retrieve_stage(ws: &Workspace, cfg: &PipelineConfig) -> Result<StageOutput> {
    let prepared = load_prepared(ws, cfg)?;
    let e = &cfg.experiment;
    let opts = e.features(&cfg.train_variant()).retrieve;
    progress(
        Stage::Retrieve,
        format!("top-{} centers, {} hops, {} held-out rows", opts.k, opts.hops, prepared.test_rows.len()),
    );
    let mut out = String::from("user\titem\ttimestamp\tcenters\tnodes\n");
    let mut misses = 0usize;
    for row in &prepared.test_rows {
        let hit = match (prepared.store.get(row.user), prepared.embeddings.get(row.item)) {
            (Some(sub), Some(target)) if !sub.centers.is_empty() => Some(retrieve(sub, target, opts)?),
            _ => None,
        };
        let (centers, nodes) = match &hit {
            Some(r) => (
                join_ids(r.selected.iter().map(|(c, _)| c.0)),
                join_ids(r.nodes.iter().map(|n| n.item.0)),
            ),
            None => {
                misses += 1;
                ("-".into(), "-".into())
            }
        };
        let _ = writeln!(out, "{}\t{}\t{}\t{centers}\t{nodes}", row.user.0, row.item.0, row.timestamp);
    }
    let written = vec![ws.write(Artifact::Retrievals, out.as_bytes())?];
    Ok(StageOutput {
        stage: Stage::Retrieve,
        written,
        summary: format!("{} rows, {misses} without subgraph or target embedding", prepared.test_rows.len()),
        table: None,
    })
}

fn train_stage(ws: &Workspace, cfg: &PipelineConfig) -> Result<StageOutput> {
    let prepared = load_prepared(ws, cfg)?;
    let e = &cfg.experiment;
    let variant = cfg.train_variant();
    let (data, flags) = examples_for(&prepared, &prepared.train_rows, &variant, e)?;
    progress(
        Stage::Train,
        format!(
            "{} fusion, {} examples, {} epochs, {:?} lr {}",
            variant.fusion, data.len(), e.train.epochs, e.train.optimizer, e.train.learning_rate
        ),
    );
    if flags.no_subgraph {
        progress(Stage::Train, "some users have no subgraph; their long-term input is empty");
    }
    let mut params = ParameterSet::for_vocab(e.dims, variant.fusion, &prepared.vocab, e.seed)?;
    let report = train(&mut params, &data, &e.train)?;
    let ckpt = Checkpoint {
        params,
        vocab: prepared.vocab,
    };
    let written = vec![
        ws.write(Artifact::Checkpoint, &ckpt.to_bytes())?,
        ws.write(Artifact::LossCurve, series_tsv("loss", &report.losses).as_bytes())?,
    ];
    Ok(StageOutput {
        stage: Stage::Train,
        written,
        summary: format!(
            "{} parameters, final epoch loss {:.4}",
            ckpt.params.parameter_count(),
            report.losses.last().copied().unwrap_or(f64::NAN)
        ),
        table: None,
    })
}

fn eval_stage(ws: &Workspace, cfg: &PipelineConfig, experiment: Option<&str>) -> Result<StageOutput> {
    let e = &cfg.experiment;
    let mut prepared = load_prepared(ws, cfg)?;
    let (report, scores) = match experiment {
        Some(name) => {
            let variants = named_variants(name, e)?;
            progress(Stage::Eval, format!("experiment `{name}`: {} variants x {} replicates", variants.len(), e.replicates));
            let r = run_variants(name, &prepared, &variants, e)?;
            let scores = scores_tsv(r.outcomes.iter().flat_map(|o| {
                o.replicates
                    .iter()
                    .enumerate()
                    .flat_map(move |(i, rep)| rep.scores.iter().map(move |s| (o.variant.name.as_str(), i, s)))
            }));
            (r.report, scores)
        }
        None => {
            let ckpt = load_checkpoint(ws)?;
            prepared.vocab = ckpt.vocab;
            let mut variant = cfg.train_variant();
            variant.fusion = ckpt.params.fusion;
            variant.name = variant.fusion.as_str().to_string();
            progress(Stage::Eval, format!("scoring {} held-out rows with the checkpoint", prepared.test_rows.len()));
            let (data, _) = examples_for(&prepared, &prepared.test_rows, &variant, e)?;
            let probs = predict_all(&ckpt.params, &data)?;
            let rows: Vec<ScoredRow> = prepared
                .test_rows
                .iter()
                .zip(probs)
                .map(|(r, p)| ScoredRow {
                    user: r.user,
                    score: p,
                    label: r.label,
                })
                .collect();
            let report = MetricsReport {
                rows: vec![MetricRow::compute(variant.name.clone(), &rows)?],
            };
            let scores = scores_tsv(rows.iter().map(|r| (variant.name.as_str(), 0, r)));
            (report, scores)
        }
    };
    let written = vec![
        ws.write(Artifact::Report, metrics_tsv(&report).as_bytes())?,
        ws.write(Artifact::Scores, scores.as_bytes())?,
    ];
    Ok(StageOutput {
        stage: Stage::Eval,
        written,
        summary: format!("{} configurations scored", report.rows.len()),
        table: Some(metrics_table(&report)),
    })
}

pub fn run_stage(stage: Stage, cfg: &PipelineConfig, opts: &StageOptions) -> Result<StageOutput> {
    let ws = Workspace::new(&cfg.workdir);
    let out = match stage {
        Stage::Synth => synth(&ws, cfg),
        Stage::Ingest => ingest(&ws, cfg, opts.input.as_deref()),
        Stage::BuildGraph => build_graph(&ws, cfg),
        Stage::Embed => embed(&ws, cfg),
        Stage::Centers => centers(&ws, cfg),
        Stage::Retrieve => retrieve_stage(&ws, cfg),
        Stage::Train => train_stage(&ws, cfg),
        Stage::Eval => eval_stage(&ws, cfg, opts.experiment.as_deref()),
    }
    .with_context(|| format!("stage `{stage}` failed"))?;
    progress(stage, &out.summary);
    Ok(out)
}

/// Every stage from `synth` through `eval` on the configured generator.
pub fn run_chain(cfg: &PipelineConfig) -> Result<Vec<StageOutput>> {
    CHAIN
        .iter()
        .map(|&s| run_stage(s, cfg, &StageOptions::default()))
        .collect()
}
