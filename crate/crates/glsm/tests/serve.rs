mod common;

use std::time::Duration;

use glsm::artifacts::Workspace;
use glsm::serve::{serve_sim, traces_tsv, Request, ServeSummary};
use glsm::stages::{load_prepared, load_server, run_chain};
use glsm_core::{ItemId, UserId};

fn setup() -> (tempfile::TempDir, glsm::serve::Server, Vec<Request>) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::tiny(dir.path());
    run_chain(&cfg).unwrap();
    let ws = Workspace::new(dir.path());
    let server = load_server(&ws, &cfg).unwrap();
    let requests = load_prepared(&ws, &cfg)
        .unwrap()
        .test_rows
        .iter()
        .take(20)
        .map(|r| Request {
            user: r.user,
            item: r.item,
            scene: r.scene,
            timestamp: r.timestamp,
        })
        .collect();
    (dir, server, requests)
}

#[test]
fn modes_agree_and_parallel_overlaps_the_waits() {
    let (_dir, server, requests) = setup();
    let seq = serve_sim(&server, &requests, false).unwrap();
    let par = serve_sim(&server, &requests, true).unwrap();
    for (a, b) in seq.traces.iter().zip(&par.traces) {
        assert_eq!(a.score.to_bits(), b.score.to_bits());
        assert_eq!(a.fallback, b.fallback);
    }
    let material = server.delays.material;
    for t in &seq.traces {
        assert!(t.material >= material);
        assert!(t.total >= t.retrieval + t.material + t.assembly + t.forward);
    }
    let mut excess: Vec<Duration> = par
        .traces
        .iter()
        .map(|t| {
            let bound = t.retrieval.max(t.material) + t.assembly + t.forward;
            assert!(t.total >= bound);
            t.total - bound
        })
        .collect();
    excess.sort();
    assert!(excess[excess.len() / 2] < Duration::from_millis(1), "{excess:?}");
    for s in [&seq.summary, &par.summary] {
        let p = s.total.unwrap();
        assert!(p.p50 <= p.p95 && p.p95 <= p.p99);
        assert_eq!(s.requests, requests.len());
    }
    assert!(par.summary.total.unwrap().p50 < seq.summary.total.unwrap().p50);
    let tsv = traces_tsv(&par.traces, true);
    assert_eq!(tsv.lines().count(), requests.len() + 1);
}

#[test]
fn unknown_user_falls_back_to_short_term_path() {
    let (_dir, server, requests) = setup();
    let stranger = Request {
        user: UserId(999_999),
        item: requests[0].item,
        ..requests[0]
    };
    let unknown_item = Request {
        item: ItemId(424_242),
        ..requests[0]
    };
    for parallel in [false, true] {
        let run = serve_sim(&server, &[stranger, unknown_item], parallel).unwrap();
        assert!(run.traces[0].fallback);
        assert!(!run.traces[1].fallback);
        assert!(run.traces.iter().all(|t| t.score > 0.0 && t.score < 1.0));
        assert_eq!(run.summary.fallbacks, 1);
    }
}

#[test]
fn empty_stream_gives_empty_summary() {
    let (_dir, server, _) = setup();
    let run = serve_sim(&server, &[], true).unwrap();
    assert!(run.traces.is_empty());
    assert_eq!(run.summary, ServeSummary::of(&[], true));
    assert_eq!(run.summary.total, None);
    assert!(run.summary.render().contains("0 requests"));
}
