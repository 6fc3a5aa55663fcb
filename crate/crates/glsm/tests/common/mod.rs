#![allow(dead_code)]

use std::path::Path;

use glsm::config::PipelineConfig;

/// A pipeline small enough to run every stage in about a second.
pub fn tiny(workdir: &Path) -> PipelineConfig {
    let overrides: Vec<String> = [
        "experiment.generator.users=60",
        "experiment.generator.items=80",
        "experiment.generator.interests=4",
        "experiment.generator.events_per_user=40",
        "experiment.generator.short_window=10",
        "experiment.generator.rows_per_user=6",
        "experiment.boundary_count=10",
        "experiment.embed_dim=4",
        "experiment.embed_epochs=5",
        "experiment.centers=4",
        "experiment.cluster_max=4",
        "experiment.dims.d=4",
        "experiment.dims.attention_hidden=2",
        "experiment.dims.profile_dim=2",
        "experiment.dims.gate_hidden=2",
        "experiment.dims.hidden1=4",
        "experiment.dims.hidden2=2",
        "experiment.train.epochs=2",
        "experiment.replicates=1",
        "serve.material_delay_ms=1.0",
        "serve.fetch_delay_ms=0.5",
    ]
    .iter()
    .map(|s| s.to_string())
    .chain([format!("workdir={:?}", workdir.display().to_string())])
    .collect();
    PipelineConfig::load(None, &overrides).unwrap()
}
