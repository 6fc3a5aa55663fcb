//! Offline CTR metrics: AUC, GAUC and logloss.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::ids::UserId;

/// Probability clip applied before taking logs.
pub const LOGLOSS_CLIP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredRow {
    pub user: UserId,
    pub score: f64,
    pub label: bool,
}

/// Probability that a random positive outranks a random negative, ties
/// counting one half. Rank-sum with mid-ranks for tied scores, O(n log n).
pub fn auc(rows: &[ScoredRow]) -> Result<f64> {
    let mut scores: Vec<(f64, bool)> = rows.iter().map(|r| (r.score, r.label)).collect();
    scores.sort_by(|a, b| a.0.total_cmp(&b.0));
    let positives = scores.iter().filter(|s| s.1).count();
    let negatives = scores.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Empty("AUC needs at least one positive and one negative"));
    }
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < scores.len() {
        let mut j = i;
        while j + 1 < scores.len() && scores[j + 1].0 == scores[i].0 {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their average.
        let mid = (i + j + 2) as f64 / 2.0;
        let pos_in_tie = scores[i..=j].iter().filter(|s| s.1).count();
        rank_sum += mid * pos_in_tie as f64;
        i = j + 1;
    }
    let p = positives as f64;
    let n = negatives as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Impression-weighted mean of per-user AUC over users that have both
/// classes; other users are left out entirely.
pub fn gauc(rows: &[ScoredRow]) -> Result<f64> {
    let mut per_user: BTreeMap<UserId, Vec<ScoredRow>> = BTreeMap::new();
    for r in rows {
        per_user.entry(r.user).or_default().push(*r);
    }
    let eligible: Vec<(f64, usize)> = per_user
        .values()
        .filter_map(|r| auc(r).ok().map(|a| (a, r.len())))
        .collect();
    let total: usize = eligible.iter().map(|e| e.1).sum();
    if total == 0 {
        return Err(Error::Empty("GAUC needs a user with both classes"));
    }
    // Normalized weights keep the single-user case bit-identical to AUC.
    Ok(eligible
        .iter()
        .map(|&(a, n)| a * (n as f64 / total as f64))
        .sum())
}

/// Mean binary cross-entropy with scores clipped to `[1e-7, 1 - 1e-7]`.
pub fn logloss(rows: &[ScoredRow]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::Empty("logloss rows"));
    }
    let total: f64 = rows
        .iter()
        .map(|r| {
            let p = r.score.clamp(LOGLOSS_CLIP, 1.0 - LOGLOSS_CLIP);
            if r.label {
                -libm::log(p)
            } else {
                -libm::log(1.0 - p)
            }
        })
        .sum();
    Ok(total / rows.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub name: String,
    pub auc: f64,
    pub gauc: f64,
    pub logloss: f64,
}

impl MetricRow {
    pub fn compute(name: impl Into<String>, rows: &[ScoredRow]) -> Result<Self> {
        Ok(Self {
            name: name.into(),
            auc: auc(rows)?,
            gauc: gauc(rows)?,
            logloss: logloss(rows)?,
        })
    }
}

/// One row per evaluated configuration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub rows: Vec<MetricRow>,
}

impl MetricsReport {
    pub fn get(&self, name: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}
