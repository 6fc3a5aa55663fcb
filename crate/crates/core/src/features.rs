//! Turns a labeled request plus the user's history into a model example.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{segment_scenes, BehaviorEvent, BehaviorSequence, CtrRow, HorizonSplit, SceneConfig};
use crate::embed::EmbeddingTable;
use crate::error::Result;
use crate::model::{Example, NodeInput, Vocab};
use crate::retrieval::{hard_category_events, retrieve, NodeRecord, RetrieveOptions, UserSubgraph};

/// Where the long-term input comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LongSource {
    /// Multi-hop retrieval from the user's subgraph.
    Graph,
    /// The newest long-term events sharing the target's category.
    HardCategory { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureConfig {
    pub scenes: SceneConfig,
    pub retrieve: RetrieveOptions,
    pub long: LongSource,
}

/// Why an example lacks long-term input, if it does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FeatureFlags {
    pub no_subgraph: bool,
    pub target_not_embedded: bool,
    /// Selected centers whose retrieval group was empty and fell back to
    /// the center node itself.
    pub center_only_groups: usize,
}

fn node(vocab: &Vocab, r: &NodeRecord, now: u64) -> Result<NodeInput> {
    NodeInput::new(
        vocab.item(r.item),
        vocab.category(r.category),
        r.behavior,
        r.last_timestamp.min(now),
        now,
    )
}

fn event_node(vocab: &Vocab, e: &BehaviorEvent, now: u64) -> Result<NodeInput> {
    NodeInput::new(
        vocab.item(e.item),
        vocab.category(e.category),
        e.behavior,
        e.timestamp.min(now),
        now,
    )
}

/// Short-term events per scene, in time order.
pub fn scene_inputs(vocab: &Vocab, short: &BehaviorSequence, cfg: &SceneConfig, now: u64) -> Result<Vec<Vec<NodeInput>>> {
    segment_scenes(short, cfg)
        .iter()
        .map(|s| s.events.iter().map(|e| event_node(vocab, e, now)).collect())
        .collect()
}

/// Retrieved groups for `target` from `sub`, one per selected center.
pub fn graph_groups(
    vocab: &Vocab,
    sub: &UserSubgraph,
    target: &[f64],
    opts: RetrieveOptions,
    now: u64,
    flags: &mut FeatureFlags,
) -> Result<Vec<Vec<NodeInput>>> {
    if sub.centers.is_empty() {
        return Ok(Vec::new());
    }
    let result = retrieve(sub, target, opts)?;
    let mut groups = Vec::with_capacity(result.selected.len());
    for (center, items) in result.groups() {
        let items = if items.is_empty() {
            flags.center_only_groups += 1;
            vec![center]
        } else {
            items
        };
        let g = items
            .iter()
            .filter_map(|i| sub.node(*i))
            .map(|r| node(vocab, r, now))
            .collect::<Result<Vec<_>>>()?;
        if !g.is_empty() {
            groups.push(g);
        }
    }
    Ok(groups)
}

/// Long-term input groups for `row` (the retrieval step of a request).
pub fn long_groups(
    vocab: &Vocab,
    embeddings: &EmbeddingTable,
    cfg: &FeatureConfig,
    row: &CtrRow,
    history: &HorizonSplit,
    sub: Option<&UserSubgraph>,
) -> Result<(Vec<Vec<NodeInput>>, FeatureFlags)> {
    let now = row.timestamp;
    let mut flags = FeatureFlags::default();
    let groups = match cfg.long {
        LongSource::Graph => match (sub, embeddings.get(row.item)) {
            (Some(sub), Some(target)) => graph_groups(vocab, sub, target, cfg.retrieve, now, &mut flags)?,
            (sub, target) => {
                flags.no_subgraph = sub.is_none();
                flags.target_not_embedded = target.is_none();
                Vec::new()
            }
        },
        LongSource::HardCategory { k } => {
            let g = hard_category_events(&history.long, row.category, k)
                .iter()
                .map(|e| event_node(vocab, e, now))
                .collect::<Result<Vec<_>>>()?;
            if g.is_empty() {
                Vec::new()
            } else {
                vec![g]
            }
        }
    };
    Ok((groups, flags))
}

/// Completes an example from precomputed long-term groups.
pub fn assemble_example(
    vocab: &Vocab,
    cfg: &FeatureConfig,
    row: &CtrRow,
    history: &HorizonSplit,
    groups: Vec<Vec<NodeInput>>,
) -> Result<Example> {
    Ok(Example {
        user: vocab.user(row.user),
        target_item: vocab.item(row.item),
        target_category: vocab.category(row.category),
        groups,
        scenes: scene_inputs(vocab, &history.short, &cfg.scenes, row.timestamp)?,
        label: row.label,
    })
}

/// Builds the example for `row`. History is assumed to precede the request;
/// later timestamps are clamped to the request time.
pub fn build_example(
    vocab: &Vocab,
    embeddings: &EmbeddingTable,
    cfg: &FeatureConfig,
    row: &CtrRow,
    history: &HorizonSplit,
    sub: Option<&UserSubgraph>,
) -> Result<(Example, FeatureFlags)> {
    let (groups, flags) = long_groups(vocab, embeddings, cfg, row, history, sub)?;
    Ok((assemble_example(vocab, cfg, row, history, groups)?, flags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{split_long_short, BehaviorType};
    use crate::ids::{CategoryId, ItemId, UserId};
    use crate::retrieval::{build_user_subgraph, ClusterCount, SubgraphConfig};

    fn ev(item: u64, ts: u64, scene: u32) -> BehaviorEvent {
        BehaviorEvent {
            user: UserId(1),
            item: ItemId(item),
            timestamp: ts,
            category: CategoryId(item % 2 + 1),
            behavior: BehaviorType::Click,
            scene,
            label: None,
        }
    }

    fn fixture() -> (Vocab, EmbeddingTable, HorizonSplit, UserSubgraph) {
        let items = [1, 2, 3, 1, 4, 5, 4, 6, 7, 8];
        let events: Vec<_> = items
            .iter()
            .enumerate()
            .map(|(i, &it)| ev(it, 100 + i as u64 * 10, (i % 2) as u32))
            .collect();
        let seq = BehaviorSequence::new(UserId(1), events);
        let split = split_long_short(&seq, 3);
        let mut table = EmbeddingTable::new(2);
        for i in 1..=8u64 {
            table.insert(ItemId(i), vec![i as f64, (i % 3) as f64]).unwrap();
        }
        let cfg = SubgraphConfig {
            centers: 2,
            clusters: ClusterCount::Fixed(2),
            l_max: 2,
            seed: 0,
        };
        let sub = build_user_subgraph(&split.long, &table, &cfg).unwrap().unwrap();
        let vocab = Vocab::build(
            seq.items(),
            seq.events.iter().map(|e| e.category),
            [UserId(1)],
        );
        (vocab, table, split, sub)
    }

    fn row(item: u64) -> CtrRow {
        CtrRow {
            user: UserId(1),
            item: ItemId(item),
            category: CategoryId(item % 2 + 1),
            timestamp: 1_000,
            scene: 0,
            label: true,
        }
    }

    #[test]
    fn graph_example_shapes() {
        let (vocab, table, split, sub) = fixture();
        let cfg = FeatureConfig {
            scenes: SceneConfig::by_id(2),
            retrieve: RetrieveOptions::new(1, 1),
            long: LongSource::Graph,
        };
        let (ex, flags) = build_example(&vocab, &table, &cfg, &row(2), &split, Some(&sub)).unwrap();
        assert_eq!(ex.groups.len(), 1);
        assert!(!ex.groups[0].is_empty());
        assert_eq!(ex.scenes.len(), 2);
        assert_eq!(ex.scenes.iter().map(Vec::len).sum::<usize>(), 3);
        assert_eq!(ex.user, 1);
        assert_eq!(flags, FeatureFlags::default());

        let (ex, flags) = build_example(&vocab, &table, &cfg, &row(2), &split, None).unwrap();
        assert!(ex.groups.is_empty() && flags.no_subgraph);
        let (ex, flags) = build_example(&vocab, &table, &cfg, &row(99), &split, Some(&sub)).unwrap();
        assert!(ex.groups.is_empty() && flags.target_not_embedded);
        assert_eq!(ex.target_item, 0);
    }

    #[test]
    fn hard_category_example() {
        let (vocab, table, split, _) = fixture();
        let cfg = FeatureConfig {
            scenes: SceneConfig::single(),
            retrieve: RetrieveOptions::new(1, 1),
            long: LongSource::HardCategory { k: 2 },
        };
        let (ex, _) = build_example(&vocab, &table, &cfg, &row(4), &split, None).unwrap();
        assert_eq!(ex.groups.len(), 1);
        assert_eq!(ex.groups[0].len(), 2);
        assert_eq!(ex.groups[0][0].item, vocab.item(ItemId(4)));
        assert_eq!(ex.scenes.len(), 1);
    }
}
