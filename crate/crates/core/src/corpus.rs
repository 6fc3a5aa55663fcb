//! Behavior events, per-user sequences, the long/short horizon split and
//! scene segmentation of the short-term slice.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ids::{CategoryId, ItemId, UserId};

/// Default number of most recent events treated as short-term behavior.
pub const DEFAULT_BOUNDARY_COUNT: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BehaviorType {
    Click,
    Cart,
    Favorite,
    Order,
    Load,
    Search,
}

impl BehaviorType {
    pub const ALL: [BehaviorType; 6] = [
        BehaviorType::Click,
        BehaviorType::Cart,
        BehaviorType::Favorite,
        BehaviorType::Order,
        BehaviorType::Load,
        BehaviorType::Search,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BehaviorType::Click => "click",
            BehaviorType::Cart => "cart",
            BehaviorType::Favorite => "favorite",
            BehaviorType::Order => "order",
            BehaviorType::Load => "load",
            BehaviorType::Search => "search",
        }
    }
}

impl fmt::Display for BehaviorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnknownBehaviorType;

impl FromStr for BehaviorType {
    type Err = UnknownBehaviorType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or(UnknownBehaviorType)
    }
}

/// One logged action: `user` performed `behavior` on `item` at `timestamp`
/// in context (`category`, `scene`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviorEvent {
    pub user: UserId,
    pub item: ItemId,
    /// Seconds since the epoch.
    pub timestamp: u64,
    pub category: CategoryId,
    pub behavior: BehaviorType,
    pub scene: u32,
    pub label: Option<bool>,
}

/// A user's events in non-decreasing timestamp order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BehaviorSequence {
    pub user: UserId,
    pub events: Vec<BehaviorEvent>,
}

impl BehaviorSequence {
    /// Builds a sequence, stable-sorting events by timestamp so that equal
    /// timestamps keep their input order.
    pub fn new(user: UserId, mut events: Vec<BehaviorEvent>) -> Self {
        debug_assert!(events.iter().all(|e| e.user == user));
        events.sort_by_key(|e| e.timestamp);
        Self { user, events }
    }

    pub fn empty(user: UserId) -> Self {
        Self {
            user,
            events: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn items(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.events.iter().map(|e| e.item)
    }

    pub fn is_time_sorted(&self) -> bool {
        self.events.windows(2).all(|w| w[0].timestamp <= w[1].timestamp)
    }
}

/// Groups a flat event list into one time-sorted sequence per user,
/// ordered by ascending user id.
pub fn group_by_user(events: impl IntoIterator<Item = BehaviorEvent>) -> Vec<BehaviorSequence> {
    let mut per_user: BTreeMap<UserId, Vec<BehaviorEvent>> = BTreeMap::new();
    for e in events {
        per_user.entry(e.user).or_default().push(e);
    }
    per_user
        .into_iter()
        .map(|(user, events)| BehaviorSequence::new(user, events))
        .collect()
}

/// A labeled impression: did `user` click `item` shown at `timestamp` in `scene`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CtrRow {
    pub user: UserId,
    pub item: ItemId,
    pub category: CategoryId,
    pub timestamp: u64,
    pub scene: u32,
    pub label: bool,
}

impl CtrRow {
    /// The row as a log event (behavior `load`, label set).
    pub fn to_event(&self) -> BehaviorEvent {
        BehaviorEvent {
            user: self.user,
            item: self.item,
            timestamp: self.timestamp,
            category: self.category,
            behavior: BehaviorType::Load,
            scene: self.scene,
            label: Some(self.label),
        }
    }

    /// Labeled events become rows; unlabeled ones are behavior history.
    pub fn from_event(e: &BehaviorEvent) -> Option<Self> {
        e.label.map(|label| Self {
            user: e.user,
            item: e.item,
            category: e.category,
            timestamp: e.timestamp,
            scene: e.scene,
            label,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HorizonSplit {
    pub long: BehaviorSequence,
    pub short: BehaviorSequence,
    pub boundary_count: usize,
}

/// The most recent `boundary_count` events become short-term behavior, the
/// rest long-term. Sequences shorter than the boundary are all short-term.
pub fn split_long_short(seq: &BehaviorSequence, boundary_count: usize) -> HorizonSplit {
    let cut = seq.len().saturating_sub(boundary_count);
    HorizonSplit {
        long: BehaviorSequence {
            user: seq.user,
            events: seq.events[..cut].to_vec(),
        },
        short: BehaviorSequence {
            user: seq.user,
            events: seq.events[cut..].to_vec(),
        },
        boundary_count,
    }
}

/// How events are mapped to scene buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SceneRule {
    /// Bucket is the event's scene column; ids beyond the configured count
    /// fold back with a modulo.
    ById,
    /// Every event in bucket 0, for data without scene information.
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub scene_count: usize,
    pub rule: SceneRule,
}

impl SceneConfig {
    pub fn by_id(scene_count: usize) -> Self {
        Self {
            scene_count: scene_count.max(1),
            rule: SceneRule::ById,
        }
    }

    pub fn single() -> Self {
        Self {
            scene_count: 1,
            rule: SceneRule::Single,
        }
    }

    pub fn bucket(&self, scene: u32) -> usize {
        match self.rule {
            SceneRule::ById => scene as usize % self.scene_count.max(1),
            SceneRule::Single => 0,
        }
    }
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self::by_id(3)
    }
}

/// Partitions short-term behavior into one sequence per scene bucket.
/// Empty scenes are kept so downstream code sees a fixed arity.
pub fn segment_scenes(short: &BehaviorSequence, cfg: &SceneConfig) -> Vec<BehaviorSequence> {
    let mut scenes = vec![BehaviorSequence::empty(short.user); cfg.scene_count.max(1)];
    for e in &short.events {
        scenes[cfg.bucket(e.scene)].events.push(*e);
    }
    scenes
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(user: u64, item: u64, ts: u64, scene: u32) -> BehaviorEvent {
        BehaviorEvent {
            user: UserId(user),
            item: ItemId(item),
            timestamp: ts,
            category: CategoryId(item % 3),
            behavior: BehaviorType::Click,
            scene,
            label: None,
        }
    }

    fn seq_of(n: usize) -> BehaviorSequence {
        BehaviorSequence::new(UserId(1), (0..n).map(|i| ev(1, i as u64, i as u64, 0)).collect())
    }

    #[test]
    fn behavior_tokens_round_trip() {
        for b in BehaviorType::ALL {
            assert_eq!(b.as_str().parse::<BehaviorType>(), Ok(b));
            assert_eq!(BehaviorType::from_index(b.index()), Some(b));
        }
        assert!("purchase".parse::<BehaviorType>().is_err());
    }

    #[test]
    fn grouping_sorts_per_user_and_keeps_ties_in_input_order() {
        let events = vec![
            ev(2, 10, 50, 0),
            ev(1, 11, 30, 0),
            ev(2, 12, 10, 0),
            ev(1, 13, 20, 0),
            ev(1, 14, 20, 0),
        ];
        let seqs = group_by_user(events);
        assert_eq!(seqs.len(), 2);
        assert_eq!(seqs[0].user, UserId(1));
        let items: Vec<u64> = seqs[0].items().map(|i| i.0).collect();
        assert_eq!(items, [13, 14, 11]);
        let items: Vec<u64> = seqs[1].items().map(|i| i.0).collect();
        assert_eq!(items, [12, 10]);
    }

    #[test]
    fn split_matches_taobao_boundary() {
        let s = split_long_short(&seq_of(100), 30);
        assert_eq!((s.long.len(), s.short.len()), (70, 30));
        assert_eq!(s.short.events[0].timestamp, 70);
    }

    #[test]
    fn split_clamps_and_zero_boundary() {
        let s = split_long_short(&seq_of(10), 30);
        assert_eq!((s.long.len(), s.short.len()), (0, 10));
        let s = split_long_short(&seq_of(10), 0);
        assert_eq!((s.long.len(), s.short.len()), (10, 0));
    }

    #[test]
    fn meal_segments_split_into_three_scenes() {
        // breakfast: click, order; lunch: click, cart, click; supper: click, cart, click
        let mk = |ts: u64, scene: u32, b: BehaviorType| BehaviorEvent {
            behavior: b,
            ..ev(1, ts, ts, scene)
        };
        use BehaviorType::*;
        let short = BehaviorSequence::new(
            UserId(1),
            vec![
                mk(1, 0, Click),
                mk(2, 0, Order),
                mk(3, 1, Click),
                mk(4, 1, Cart),
                mk(5, 2, Click),
                mk(6, 1, Click),
                mk(7, 2, Cart),
                mk(8, 2, Click),
            ],
        );
        let scenes = segment_scenes(&short, &SceneConfig::by_id(3));
        let kinds: Vec<Vec<BehaviorType>> = scenes
            .iter()
            .map(|s| s.events.iter().map(|e| e.behavior).collect())
            .collect();
        assert_eq!(
            kinds,
            vec![
                vec![Click, Order],
                vec![Click, Cart, Click],
                vec![Click, Cart, Click]
            ]
        );
    }

    #[test]
    fn single_scene_and_empty_input() {
        let scenes = segment_scenes(&seq_of(5), &SceneConfig::by_id(3));
        assert_eq!(scenes.iter().map(|s| s.len()).collect::<Vec<_>>(), [5, 0, 0]);
        let scenes = segment_scenes(&BehaviorSequence::empty(UserId(1)), &SceneConfig::by_id(3));
        assert!(scenes.iter().all(|s| s.is_empty()));
        assert_eq!(scenes.len(), 3);
        let scenes = segment_scenes(&seq_of(4), &SceneConfig::single());
        assert_eq!(scenes.len(), 1);
        assert_eq!(scenes[0].len(), 4);
    }

    proptest! {
        #[test]
        fn split_concatenation_is_identity(n in 0usize..80, boundary in 0usize..100) {
            let seq = seq_of(n);
            let s = split_long_short(&seq, boundary);
            let mut joined = s.long.events.clone();
            joined.extend_from_slice(&s.short.events);
            prop_assert_eq!(joined, seq.events);
            prop_assert_eq!(s.short.len(), boundary.min(n));
        }

        #[test]
        fn scenes_partition_the_input(scenes in proptest::collection::vec(0u32..7, 0..60), count in 1usize..5) {
            let events: Vec<_> = scenes.iter().enumerate().map(|(i, &s)| ev(1, i as u64, i as u64 / 2, s)).collect();
            let short = BehaviorSequence::new(UserId(1), events);
            let parts = segment_scenes(&short, &SceneConfig::by_id(count));
            prop_assert_eq!(parts.len(), count);
            let mut all: Vec<u64> = parts.iter().flat_map(|p| p.items().map(|i| i.0)).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..scenes.len() as u64).collect::<Vec<_>>());
            for p in &parts {
                prop_assert!(p.is_time_sorted());
                prop_assert!(p.items().map(|i| i.0).collect::<Vec<_>>().windows(2).all(|w| w[0] < w[1]));
            }
        }
    }
}
