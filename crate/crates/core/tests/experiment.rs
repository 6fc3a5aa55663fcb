use glsm_core::experiment::{prepare, run_variants, ExperimentConfig, Variant};
use glsm_core::model::{Fusion, ModelDims, TrainConfig};
use glsm_core::synth::{generate_synthetic_corpus, GeneratorConfig};

fn small() -> ExperimentConfig {
    ExperimentConfig {
        generator: GeneratorConfig {
            users: 50,
            items: 60,
            interests: 4,
            events_per_user: 40,
            short_window: 10,
            rows_per_user: 6,
            ..GeneratorConfig::default()
        },
        boundary_count: 10,
        embed_dim: 4,
        embed_epochs: 4,
        centers: 4,
        cluster_max: 4,
        dims: ModelDims {
            d: 4,
            attention_hidden: 2,
            profile_dim: 2,
            gate_hidden: 2,
            hidden1: 4,
            hidden2: 2,
        },
        train: TrainConfig {
            epochs: 1,
            ..ExperimentConfig::default().train
        },
        replicates: 2,
        ..ExperimentConfig::default()
    }
}

#[test]
fn variants_report_finite_metrics_and_repeat_exactly() {
    let cfg = small();
    let corpus = generate_synthetic_corpus(&cfg.generator, cfg.data_seed).unwrap();
    let prepared = prepare(&corpus.sequences, &corpus.rows, &cfg).unwrap();
    assert!(!prepared.store.is_empty());
    let variants: Vec<Variant> = [Fusion::ShortOnly, Fusion::Gate]
        .into_iter()
        .map(|f| Variant::graph(f, cfg.top_k))
        .collect();
    let first = run_variants("small", &prepared, &variants, &cfg).unwrap();
    for row in &first.report.rows {
        assert!((0.0..=1.0).contains(&row.auc), "{row:?}");
        assert!(row.logloss.is_finite() && row.logloss > 0.0);
    }
    let gate = first.outcome("gate").unwrap();
    assert_eq!(gate.replicates.len(), 2);
    assert_ne!(gate.replicates[0].seed, gate.replicates[1].seed);
    let again = run_variants("small", &prepared, &variants, &cfg).unwrap();
    assert_eq!(again.report, first.report);
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = small();
    cfg.replicates = 0;
    assert!(cfg.validate().is_err());
    let mut cfg = small();
    cfg.test_fraction = 1.0;
    assert!(cfg.validate().is_err());
    assert!(small().validate().is_ok());
}
