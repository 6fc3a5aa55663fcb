mod common;

use std::collections::BTreeMap;
use std::fs;

use glsm::artifacts::{Artifact, Stage, Workspace};
use glsm::config::PipelineConfig;
use glsm::stages::{run_chain, run_stage, StageOptions};

fn snapshot(ws: &Workspace) -> BTreeMap<&'static str, Vec<u8>> {
    Artifact::ALL
        .iter()
        .filter(|a| ws.exists(**a))
        .map(|a| (a.file_name(), fs::read(ws.path(*a)).unwrap()))
        .collect()
}

#[test]
fn stage_before_its_input_names_the_producer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::tiny(dir.path());
    run_stage(Stage::Synth, &cfg, &StageOptions::default()).unwrap();
    run_stage(Stage::BuildGraph, &cfg, &StageOptions::default()).unwrap();
    let err = run_stage(Stage::Centers, &cfg, &StageOptions::default()).unwrap_err();
    let msg = format!("{err:#}");
    assert!(msg.contains("run stage `embed` first"), "{msg}");
    let err = run_stage(Stage::Eval, &cfg, &StageOptions::default()).unwrap_err();
    assert!(format!("{err:#}").contains("`embed`") || format!("{err:#}").contains("`centers`"));
}

#[test]
fn full_chain_writes_every_artifact_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::tiny(dir.path());
    let outs = run_chain(&cfg).unwrap();
    assert_eq!(outs.len(), 7);
    let ws = Workspace::new(dir.path());
    for a in Artifact::ALL {
        assert!(ws.exists(a), "{} missing", a.file_name());
    }
    let report = fs::read_to_string(ws.path(Artifact::Report)).unwrap();
    assert!(report.lines().nth(1).unwrap().starts_with("gate\t"));
    assert!(outs.last().unwrap().table.as_ref().unwrap().contains("gate"));

    let first = snapshot(&ws);
    run_chain(&cfg).unwrap();
    assert_eq!(snapshot(&ws), first);
}

#[test]
fn ingest_accepts_the_canonical_log() {
    let src = tempfile::tempdir().unwrap();
    let cfg = common::tiny(src.path());
    run_stage(Stage::Synth, &cfg, &StageOptions::default()).unwrap();
    let log = Workspace::new(src.path()).path(Artifact::Corpus);

    let dst = tempfile::tempdir().unwrap();
    let mut cfg2 = cfg.clone();
    cfg2.workdir = dst.path().to_path_buf();
    let opts = StageOptions {
        input: Some(log.clone()),
        ..StageOptions::default()
    };
    run_stage(Stage::Ingest, &cfg2, &opts).unwrap();
    assert_eq!(
        fs::read(&log).unwrap(),
        fs::read(Workspace::new(dst.path()).path(Artifact::Corpus)).unwrap()
    );

    let err = run_stage(Stage::Ingest, &cfg2, &StageOptions::default()).unwrap_err();
    assert!(format!("{err:#}").contains("--input"));
}

#[test]
fn ingest_rejects_out_of_range_scenes() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("bad.csv");
    fs::write(&log, "1,2,3,4,click,0,\n1,2,4,4,click,9,\n").unwrap();
    let cfg = common::tiny(&dir.path().join("work"));
    let opts = StageOptions {
        input: Some(log),
        ..StageOptions::default()
    };
    let msg = format!("{:#}", run_stage(Stage::Ingest, &cfg, &opts).unwrap_err());
    assert!(msg.contains("line 2") && msg.contains("scene"), "{msg}");
}

#[test]
fn eval_runs_a_named_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::tiny(dir.path());
    for s in [Stage::Synth, Stage::BuildGraph, Stage::Embed, Stage::Centers] {
        run_stage(s, &cfg, &StageOptions::default()).unwrap();
    }
    let opts = StageOptions {
        experiment: Some("horizon".into()),
        ..StageOptions::default()
    };
    let out = run_stage(Stage::Eval, &cfg, &opts).unwrap();
    let report = fs::read_to_string(Workspace::new(dir.path()).path(Artifact::Report)).unwrap();
    let names: Vec<&str> = report.lines().skip(1).map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(names, ["short-only", "long-only", "gate", "hard-category+gate"]);
    assert!(out.table.is_some());

    let bad = StageOptions {
        experiment: Some("everything".into()),
        ..StageOptions::default()
    };
    let msg = format!("{:#}", run_stage(Stage::Eval, &cfg, &bad).unwrap_err());
    assert!(msg.contains("everything"), "{msg}");
}

#[test]
fn config_file_merges_over_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("glsm.toml");
    fs::write(&path, "fusion = \"concat\"\n[experiment.train]\nepochs = 7\n").unwrap();
    let cfg = PipelineConfig::load(Some(&path), &["experiment.top_k=5".into()]).unwrap();
    let d = PipelineConfig::default();
    assert_eq!(cfg.experiment.train.epochs, 7);
    assert_eq!(cfg.experiment.train.learning_rate, d.experiment.train.learning_rate);
    assert_eq!(cfg.experiment.top_k, 5);
    assert_eq!(cfg.fusion.as_str(), "concat");

    fs::write(&path, "[experiment]\ntest_fraction = 1.5\n").unwrap();
    assert!(PipelineConfig::load(Some(&path), &[]).is_err());
    fs::write(&path, "typo = 1\n").unwrap();
    assert!(PipelineConfig::load(Some(&path), &[]).is_err());
}
