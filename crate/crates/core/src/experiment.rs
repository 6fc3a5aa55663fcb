//! End-to-end ablation runs on a synthetic corpus: generate, split, embed,
//! build subgraphs, then train and score each model variant with the same
//! data and seeds.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{split_long_short, BehaviorSequence, CtrRow, HorizonSplit, SceneConfig};
use crate::embed::{train_graph_embeddings, EmbeddingTable, SageConfig};
use crate::error::{Error, Result};
use crate::features::{build_example, FeatureConfig, FeatureFlags, LongSource};
use crate::graph::{build_global_graph, ItemGraph};
use crate::ids::UserId;
use crate::metrics::{MetricRow, MetricsReport, ScoredRow};
use crate::model::{
    predict_all, train, Example, Fusion, ModelDims, Optimizer, ParameterSet, TrainConfig, Vocab,
};
use crate::retrieval::{build_user_subgraph, ClusterCount, RetrieveOptions, SubgraphConfig, SubgraphStore};
use crate::synth::{generate_synthetic_corpus, GeneratorConfig};

/// The top-K sweep grid.
pub const TOPK_GRID: [usize; 5] = [1, 3, 5, 10, 15];
pub const EXPERIMENT_NAMES: [&str; 4] = ["fusion", "horizon", "topk", "full"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub generator: GeneratorConfig,
    pub data_seed: u64,
    pub test_fraction: f64,
    pub boundary_count: usize,
    pub scene_count: usize,
    pub embed_dim: usize,
    pub embed_epochs: usize,
    pub centers: usize,
    pub cluster_min: usize,
    pub cluster_max: usize,
    pub top_k: usize,
    pub hops: usize,
    pub result_cap: usize,
    pub hard_k: usize,
    pub dims: ModelDims,
    pub train: TrainConfig,
    pub seed: u64,
    /// Independent model fits per variant (seeds `seed + r`); metrics are
    /// averaged over them.
    pub replicates: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorConfig::default(),
            data_seed: 7,
            test_fraction: 0.2,
            boundary_count: 30,
            scene_count: 3,
            embed_dim: 16,
            embed_epochs: 60,
            centers: 15,
            cluster_min: 2,
            cluster_max: 8,
            top_k: 3,
            hops: 1,
            result_cap: 40,
            hard_k: 20,
            dims: ModelDims::default(),
            train: TrainConfig {
                learning_rate: 0.002,
                epochs: 4,
                batch: 32,
                seed: 5,
                momentum: 0.0,
                optimizer: Optimizer::Adam,
            },
            seed: 11,
            replicates: 3,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        self.generator.validate()?;
        self.dims.validate()?;
        self.train.validate()?;
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad("test_fraction must lie in (0, 1)");
        }
        if self.scene_count == 0 || self.embed_dim == 0 || self.centers == 0 {
            return bad("scene_count, embed_dim and centers must be nonzero");
        }
        if self.cluster_min < 2 || self.cluster_min > self.cluster_max {
            return bad("cluster range must satisfy 2 <= cluster_min <= cluster_max");
        }
        if self.top_k == 0 || self.hops == 0 || self.result_cap == 0 || self.hard_k == 0 {
            return bad("top_k, hops, result_cap and hard_k must be nonzero");
        }
        if self.replicates == 0 {
            return bad("replicates must be nonzero");
        }
        Ok(())
    }

    pub fn subgraph(&self) -> SubgraphConfig {
        SubgraphConfig {
            centers: self.centers,
            clusters: ClusterCount::Silhouette(self.cluster_min..=self.cluster_max),
            l_max: self.hops.max(crate::retrieval::DEFAULT_L_MAX),
            seed: self.seed,
        }
    }

    pub fn sage(&self) -> SageConfig {
        SageConfig::new(self.embed_dim, self.embed_epochs, self.seed)
    }

    pub fn features(&self, variant: &Variant) -> FeatureConfig {
        FeatureConfig {
            scenes: SceneConfig::by_id(self.scene_count),
            retrieve: RetrieveOptions::new(variant.top_k, self.hops).with_cap(self.result_cap),
            long: variant.long,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub fusion: Fusion,
    pub long: LongSource,
    pub top_k: usize,
}

impl Variant {
    pub fn graph(fusion: Fusion, top_k: usize) -> Self {
        Self {
            name: fusion.as_str().to_string(),
            fusion,
            long: LongSource::Graph,
            top_k,
        }
    }
}

/// The variant matrix of a named experiment.
pub fn named_variants(name: &str, cfg: &ExperimentConfig) -> Result<Vec<Variant>> {
    let k = cfg.top_k;
    let fusion = || Fusion::ALL.iter().map(|f| Variant::graph(*f, k)).collect::<Vec<_>>();
    let horizon = || {
        let mut v = alloc::vec![
            Variant::graph(Fusion::ShortOnly, k),
            Variant::graph(Fusion::LongOnly, k),
            Variant::graph(Fusion::Gate, k),
        ];
        v.push(Variant {
            name: "hard-category+gate".into(),
            fusion: Fusion::Gate,
            long: LongSource::HardCategory { k: cfg.hard_k },
            top_k: k,
        });
        v
    };
    let topk = || {
        TOPK_GRID
            .iter()
            .map(|&t| Variant {
                name: alloc::format!("gate@top{t}"),
                ..Variant::graph(Fusion::Gate, t)
            })
            .collect::<Vec<_>>()
    };
    match name {
        "fusion" => Ok(fusion()),
        "horizon" => Ok(horizon()),
        "topk" => Ok(topk()),
        "full" => {
            let mut all = fusion();
            all.extend(horizon().into_iter().filter(|v| v.long != LongSource::Graph));
            all.extend(topk());
            Ok(all)
        }
        other => Err(Error::UnknownExperiment(other.into())),
    }
}

/// Everything the variants share.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub histories: BTreeMap<UserId, HorizonSplit>,
    pub train_rows: Vec<CtrRow>,
    pub test_rows: Vec<CtrRow>,
    pub embeddings: EmbeddingTable,
    pub store: SubgraphStore,
    pub vocab: Vocab,
    pub embed_losses: Vec<f64>,
}

/// Deterministic row split; both halves keep their input order.
pub fn split_rows(rows: &[CtrRow], test_fraction: f64, seed: u64) -> (Vec<CtrRow>, Vec<CtrRow>) {
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = libm::round(rows.len() as f64 * test_fraction.clamp(0.0, 1.0)) as usize;
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    (
        train.into_iter().map(|i| rows[i]).collect(),
        test.into_iter().map(|i| rows[i]).collect(),
    )
}

pub fn build_vocab(sequences: &[BehaviorSequence], rows: &[CtrRow]) -> Vocab {
    let events = sequences.iter().flat_map(|s| s.events.iter());
    Vocab::build(
        events.clone().map(|e| e.item).chain(rows.iter().map(|r| r.item)),
        events.map(|e| e.category).chain(rows.iter().map(|r| r.category)),
        sequences.iter().map(|s| s.user).chain(rows.iter().map(|r| r.user)),
    )
}

pub fn horizon_splits(sequences: &[BehaviorSequence], boundary_count: usize) -> BTreeMap<UserId, HorizonSplit> {
    sequences
        .iter()
        .map(|s| (s.user, split_long_short(s, boundary_count)))
        .collect()
}

/// The global graph over long-term behavior only.
pub fn long_term_graph(histories: &BTreeMap<UserId, HorizonSplit>) -> ItemGraph {
    build_global_graph(histories.values().map(|h| &h.long))
}

pub fn build_store(
    histories: &BTreeMap<UserId, HorizonSplit>,
    embeddings: &EmbeddingTable,
    cfg: &SubgraphConfig,
) -> Result<SubgraphStore> {
    let mut store = SubgraphStore::new();
    for h in histories.values() {
        if let Some(sub) = build_user_subgraph(&h.long, embeddings, cfg)? {
            store.insert(sub);
        }
    }
    Ok(store)
}

/// Shared preprocessing for given sequences and labeled rows.
pub fn prepare(sequences: &[BehaviorSequence], rows: &[CtrRow], cfg: &ExperimentConfig) -> Result<Prepared> {
    let (train_rows, test_rows) = split_rows(rows, cfg.test_fraction, cfg.data_seed);
    if train_rows.is_empty() || test_rows.is_empty() {
        return Err(Error::Empty("train or test split"));
    }
    let histories = horizon_splits(sequences, cfg.boundary_count);
    let (embeddings, report) = train_graph_embeddings(&long_term_graph(&histories), &cfg.sage())?;
    let store = build_store(&histories, &embeddings, &cfg.subgraph())?;
    Ok(Prepared {
        vocab: build_vocab(sequences, &train_rows),
        histories,
        train_rows,
        test_rows,
        embeddings,
        store,
        embed_losses: report.losses,
    })
}

/// Examples for `rows` under `variant`, with counts of degraded inputs.
pub fn examples_for(
    prepared: &Prepared,
    rows: &[CtrRow],
    variant: &Variant,
    cfg: &ExperimentConfig,
) -> Result<(Vec<Example>, FeatureFlags)> {
    let fcfg = cfg.features(variant);
    let mut total = FeatureFlags::default();
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let empty;
        let history = match prepared.histories.get(&row.user) {
            Some(h) => h,
            None => {
                empty = split_long_short(&BehaviorSequence::empty(row.user), cfg.boundary_count);
                &empty
            }
        };
        let (ex, f) = build_example(
            &prepared.vocab,
            &prepared.embeddings,
            &fcfg,
            row,
            history,
            prepared.store.get(row.user),
        )?;
        total.no_subgraph |= f.no_subgraph;
        total.target_not_embedded |= f.target_not_embedded;
        total.center_only_groups += f.center_only_groups;
        out.push(ex);
    }
    Ok((out, total))
}

/// One fitted model of a variant.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicate {
    pub seed: u64,
    pub metrics: MetricRow,
    pub losses: Vec<f64>,
    pub scores: Vec<ScoredRow>,
    pub params: ParameterSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantOutcome {
    pub variant: Variant,
    /// Mean over replicates.
    pub metrics: MetricRow,
    pub replicates: Vec<Replicate>,
    pub flags: FeatureFlags,
}

fn mean_row(name: &str, rows: &[MetricRow]) -> MetricRow {
    let n = rows.len().max(1) as f64;
    MetricRow {
        name: name.into(),
        auc: rows.iter().map(|r| r.auc).sum::<f64>() / n,
        gauc: rows.iter().map(|r| r.gauc).sum::<f64>() / n,
        logloss: rows.iter().map(|r| r.logloss).sum::<f64>() / n,
    }
}

pub fn run_variant(prepared: &Prepared, variant: &Variant, cfg: &ExperimentConfig) -> Result<VariantOutcome> {
    let (train_set, _) = examples_for(prepared, &prepared.train_rows, variant, cfg)?;
    let (test_set, flags) = examples_for(prepared, &prepared.test_rows, variant, cfg)?;
    let mut replicates = Vec::with_capacity(cfg.replicates.max(1));
    for r in 0..cfg.replicates.max(1) as u64 {
        let seed = cfg.seed.wrapping_add(r);
        let mut params = ParameterSet::for_vocab(cfg.dims, variant.fusion, &prepared.vocab, seed)?;
        let tcfg = TrainConfig {
            seed: cfg.train.seed.wrapping_add(r),
            ..cfg.train
        };
        let report = train(&mut params, &train_set, &tcfg)?;
        let probs = predict_all(&params, &test_set)?;
        let scores: Vec<ScoredRow> = prepared
            .test_rows
            .iter()
            .zip(probs)
            .map(|(row, p)| ScoredRow {
                user: row.user,
                score: p,
                label: row.label,
            })
            .collect();
        replicates.push(Replicate {
            seed,
            metrics: MetricRow::compute(variant.name.clone(), &scores)?,
            losses: report.losses,
            scores,
            params,
        });
    }
    let rows: Vec<MetricRow> = replicates.iter().map(|r| r.metrics.clone()).collect();
    Ok(VariantOutcome {
        metrics: mean_row(&variant.name, &rows),
        variant: variant.clone(),
        replicates,
        flags,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub name: String,
    pub report: MetricsReport,
    pub outcomes: Vec<VariantOutcome>,
}

impl ExperimentReport {
    pub fn outcome(&self, variant: &str) -> Option<&VariantOutcome> {
        self.outcomes.iter().find(|o| o.variant.name == variant)
    }
}

pub fn run_variants(
    name: &str,
    prepared: &Prepared,
    variants: &[Variant],
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    let outcomes = variants
        .iter()
        .map(|v| run_variant(prepared, v, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        name: name.into(),
        report: MetricsReport {
            rows: outcomes.iter().map(|o| o.metrics.clone()).collect(),
        },
        outcomes,
    })
}

/// Generates the configured corpus and runs the named variant matrix.
pub fn run_experiment(name: &str, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let variants = named_variants(name, cfg)?;
    let corpus = generate_synthetic_corpus(&cfg.generator, cfg.data_seed)?;
    let prepared = prepare(&corpus.sequences, &corpus.rows, cfg)?;
    run_variants(name, &prepared, &variants, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            generator: GeneratorConfig {
                users: 40,
                items: 60,
                interests: 4,
                events_per_user: 40,
                short_window: 10,
                rows_per_user: 6,
                ..GeneratorConfig::default()
            },
            boundary_count: 10,
            embed_dim: 4,
            embed_epochs: 5,
            centers: 4,
            dims: ModelDims {
                d: 4,
                attention_hidden: 2,
                profile_dim: 2,
                gate_hidden: 2,
                hidden1: 8,
                hidden2: 4,
            },
            train: TrainConfig {
                epochs: 2,
                ..TrainConfig::default()
            },
            replicates: 2,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn variant_matrices() {
        let cfg = ExperimentConfig::default();
        let names: Vec<String> = named_variants("fusion", &cfg)
            .unwrap()
            .into_iter()
            .map(|v| v.name)
            .collect();
        for f in ["add", "weight", "multiply", "concat", "gate"] {
            assert!(names.iter().any(|n| n == f));
        }
        let topk = named_variants("topk", &cfg).unwrap();
        assert!(topk.iter().any(|v| v.top_k == 15));
        assert!(named_variants("full", &cfg).unwrap().len() > topk.len());
        assert_eq!(
            named_variants("nope", &cfg),
            Err(Error::UnknownExperiment("nope".into()))
        );
        assert!(matches!(run_experiment("nope", &tiny()), Err(Error::UnknownExperiment(_))));
    }

    #[test]
    fn split_is_deterministic_and_complete() {
        let c = generate_synthetic_corpus(&tiny().generator, 1).unwrap();
        let (a, b) = split_rows(&c.rows, 0.25, 3);
        assert_eq!((a.len(), b.len()), (180, 60));
        let mut all: Vec<CtrRow> = a.iter().chain(&b).copied().collect();
        all.sort_by_key(|r| (r.user, r.timestamp, r.item));
        let mut orig = c.rows.clone();
        orig.sort_by_key(|r| (r.user, r.timestamp, r.item));
        assert_eq!(all, orig);
        assert_eq!(split_rows(&c.rows, 0.25, 3), (a, b));
    }

    #[test]
    fn same_config_same_report() {
        let cfg = tiny();
        let a = run_experiment("horizon", &cfg).unwrap();
        let b = run_experiment("horizon", &cfg).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.report.rows.len(), 4);
        let o = &a.outcomes[0];
        assert_eq!(o.replicates.len(), 2);
        let mean = (o.replicates[0].metrics.auc + o.replicates[1].metrics.auc) / 2.0;
        assert!((o.metrics.auc - mean).abs() < 1e-15);
        for r in &a.report.rows {
            assert!((0.0..=1.0).contains(&r.auc) && r.logloss >= 0.0);
        }
    }
}
