//! In-process serving simulator.
//!
//! A request needs two slow inputs before the model can run: the user's
//! retrieved long-term groups (a store read plus graph retrieval) and the
//! candidate material from an external service, mocked here as a fixed
//! delay. Sequential mode waits for one after the other; parallel mode
//! dispatches the material call at request start and runs retrieval on a
//! second thread meanwhile. Both modes compute the same score.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};

use glsm_core::corpus::{split_long_short, BehaviorSequence, CtrRow, HorizonSplit};
use glsm_core::embed::EmbeddingTable;
use glsm_core::features::{assemble_example, long_groups, FeatureConfig};
use glsm_core::model::{predict, NodeInput, ParameterSet, Vocab};
use glsm_core::retrieval::SubgraphStore;
use glsm_core::{CategoryId, ItemId, UserId};

use crate::logfile::{data_lines, parse_field, split_fields, LogError};

pub const REQUEST_COLUMNS: [&str; 4] = ["user", "item", "scene", "timestamp"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Request {
    pub user: UserId,
    pub item: ItemId,
    pub scene: u32,
    pub timestamp: u64,
}

pub fn parse_requests(text: &str) -> Result<Vec<Request>, LogError> {
    data_lines(text, "user")
        .map(|(line, raw)| {
            let f = split_fields(raw, line, REQUEST_COLUMNS.len())?;
            Ok(Request {
                user: UserId(parse_field(&f, 0, &REQUEST_COLUMNS, line)?),
                item: ItemId(parse_field(&f, 1, &REQUEST_COLUMNS, line)?),
                scene: parse_field(&f, 2, &REQUEST_COLUMNS, line)?,
                timestamp: parse_field(&f, 3, &REQUEST_COLUMNS, line)?,
            })
        })
        .collect()
}

pub fn read_requests(path: &Path) -> Result<Vec<Request>, LogError> {
    let text = std::fs::read_to_string(path).map_err(|source| LogError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_requests(&text)
}

pub fn format_requests(reqs: &[Request]) -> String {
    let mut out = REQUEST_COLUMNS.join(",");
    out.push('\n');
    for r in reqs {
        let _ = writeln!(out, "{},{},{},{}", r.user.0, r.item.0, r.scene, r.timestamp);
    }
    out
}

/// Final stretch of a wait spent busy-polling, to absorb sleep overshoot.
pub const SPIN_MARGIN: Duration = Duration::from_micros(300);

/// Waits until `deadline` without holding the CPU for most of it, so a
/// concurrent stage can run even on a single core.
pub fn wait_until(deadline: Instant) {
    if let Some(rest) = deadline.checked_duration_since(Instant::now()) {
        if rest > SPIN_MARGIN {
            thread::sleep(rest - SPIN_MARGIN);
        }
    }
    while Instant::now() < deadline {
        std::hint::spin_loop();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServeDelays {
    pub material: Duration,
    pub fetch: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServeTrace {
    pub request: Request,
    pub score: f64,
    /// No subgraph for the user: scored from short-term behavior only.
    pub fallback: bool,
    pub retrieval: Duration,
    pub material: Duration,
    pub assembly: Duration,
    pub forward: Duration,
    pub total: Duration,
}

/// Everything a request reads; shared by reference across threads.
#[derive(Debug, Clone)]
pub struct Server {
    pub params: ParameterSet,
    pub vocab: Vocab,
    pub embeddings: EmbeddingTable,
    pub store: SubgraphStore,
    pub histories: BTreeMap<UserId, HorizonSplit>,
    pub catalog: BTreeMap<ItemId, CategoryId>,
    pub features: FeatureConfig,
    pub delays: ServeDelays,
}

struct Retrieved {
    groups: Vec<Vec<NodeInput>>,
    fallback: bool,
    elapsed: Duration,
}

impl Server {
    fn row(&self, r: &Request) -> CtrRow {
        CtrRow {
            user: r.user,
            item: r.item,
            category: self.catalog.get(&r.item).copied().unwrap_or(CategoryId(0)),
            timestamp: r.timestamp,
            scene: r.scene,
            label: false,
        }
    }

    fn retrieve(&self, row: &CtrRow, history: &HorizonSplit) -> glsm_core::Result<Retrieved> {
        let start = Instant::now();
        wait_until(start + self.delays.fetch);
        let sub = self.store.get(row.user);
        let (groups, _) = long_groups(&self.vocab, &self.embeddings, &self.features, row, history, sub)?;
        Ok(Retrieved {
            groups,
            fallback: sub.is_none(),
            elapsed: start.elapsed(),
        })
    }

    /// Waits for the material service called at `dispatched`; returns when
    /// the response arrived.
    fn material(&self, dispatched: Instant) -> Instant {
        wait_until(dispatched + self.delays.material);
        Instant::now()
    }

    pub fn handle(&self, req: &Request, parallel: bool) -> glsm_core::Result<ServeTrace> {
        let row = self.row(req);
        let empty;
        let history = match self.histories.get(&req.user) {
            Some(h) => h,
            None => {
                empty = split_long_short(&BehaviorSequence::empty(req.user), 0);
                &empty
            }
        };
        let t0 = Instant::now();
        let (retrieved, material) = if parallel {
            thread::scope(|s| {
                let worker = s.spawn(|| self.retrieve(&row, history));
                let ready = self.material(t0);
                let retrieved = worker.join().unwrap_or_else(|p| std::panic::resume_unwind(p));
                (retrieved, ready - t0)
            })
        } else {
            let retrieved = self.retrieve(&row, history);
            let dispatched = Instant::now();
            (retrieved, self.material(dispatched) - dispatched)
        };
        let retrieved = retrieved?;
        let t_assembly = Instant::now();
        let example = assemble_example(&self.vocab, &self.features, &row, history, retrieved.groups)?;
        let t_forward = Instant::now();
        let score = predict(&self.params, &example)?;
        let end = Instant::now();
        Ok(ServeTrace {
            request: *req,
            score,
            fallback: retrieved.fallback,
            retrieval: retrieved.elapsed,
            material,
            assembly: t_forward - t_assembly,
            forward: end - t_forward,
            total: end - t0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Percentiles {
    pub p50: Duration,
    pub p95: Duration,
    pub p99: Duration,
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[Duration], q: f64) -> Duration {
    let rank = (q / 100.0 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

impl Percentiles {
    pub fn of(values: impl IntoIterator<Item = Duration>) -> Option<Self> {
        let mut v: Vec<Duration> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        v.sort_unstable();
        Some(Self {
            p50: percentile(&v, 50.0),
            p95: percentile(&v, 95.0),
            p99: percentile(&v, 99.0),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServeSummary {
    pub parallel: bool,
    pub requests: usize,
    pub fallbacks: usize,
    pub total: Option<Percentiles>,
    pub retrieval: Option<Percentiles>,
    pub material: Option<Percentiles>,
}

impl ServeSummary {
    pub fn of(traces: &[ServeTrace], parallel: bool) -> Self {
        Self {
            parallel,
            requests: traces.len(),
            fallbacks: traces.iter().filter(|t| t.fallback).count(),
            total: Percentiles::of(traces.iter().map(|t| t.total)),
            retrieval: Percentiles::of(traces.iter().map(|t| t.retrieval)),
            material: Percentiles::of(traces.iter().map(|t| t.material)),
        }
    }

    pub fn render(&self) -> String {
        let mode = if self.parallel { "parallel" } else { "sequential" };
        let mut out = format!("{mode}: {} requests, {} fallbacks\n", self.requests, self.fallbacks);
        for (name, p) in [("total", self.total), ("retrieval", self.retrieval), ("material", self.material)] {
            if let Some(p) = p {
                let _ = writeln!(
                    out,
                    "  {name:<9} p50 {:>8.3} ms  p95 {:>8.3} ms  p99 {:>8.3} ms",
                    ms(p.p50),
                    ms(p.p95),
                    ms(p.p99)
                );
            }
        }
        out
    }
}

pub fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServeRun {
    pub traces: Vec<ServeTrace>,
    pub summary: ServeSummary,
}

pub fn serve_sim(server: &Server, requests: &[Request], parallel: bool) -> glsm_core::Result<ServeRun> {
    let traces = requests
        .iter()
        .map(|r| server.handle(r, parallel))
        .collect::<glsm_core::Result<Vec<_>>>()?;
    Ok(ServeRun {
        summary: ServeSummary::of(&traces, parallel),
        traces,
    })
}

pub fn traces_tsv(traces: &[ServeTrace], parallel: bool) -> String {
    let mode = if parallel { "parallel" } else { "sequential" };
    let mut out = String::from(
        "mode\tuser\titem\tscene\ttimestamp\tscore\tfallback\tretrieval_us\tmaterial_us\tassembly_us\tforward_us\ttotal_us\n",
    );
    for t in traces {
        let r = &t.request;
        let _ = writeln!(
            out,
            "{mode}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.user.0,
            r.item.0,
            r.scene,
            r.timestamp,
            t.score,
            u8::from(t.fallback),
            t.retrieval.as_micros(),
            t.material.as_micros(),
            t.assembly.as_micros(),
            t.forward.as_micros(),
            t.total.as_micros()
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank() {
        let v: Vec<Duration> = (1..=100).map(Duration::from_millis).collect();
        assert_eq!(percentile(&v, 50.0), Duration::from_millis(50));
        assert_eq!(percentile(&v, 99.0), Duration::from_millis(99));
        assert_eq!(percentile(&v[..1], 95.0), Duration::from_millis(1));
    }

    #[test]
    fn request_round_trip() {
        let reqs = vec![
            Request {
                user: UserId(3),
                item: ItemId(9),
                scene: 1,
                timestamp: 77,
            };
            2
        ];
        assert_eq!(parse_requests(&format_requests(&reqs)).unwrap(), reqs);
    }
}
