use super::*;
use crate::codec::{ByteReader, ByteWriter};
use crate::error::CodecError;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model_with_centers(centers: Vec<Vec<f64>>) -> ClusterModel {
    ClusterModel {
        k: centers.len(),
        centers,
        labels: vec![],
        inertia: 0.0,
        iterations: 0,
        converged: true,
        inertia_trace: vec![],
    }
}

fn graph(edges: &[(u64, u64)]) -> ItemGraph {
    let mut g = ItemGraph::new();
    for &(a, b) in edges {
        g.add_edge(ItemId(a), ItemId(b), 1);
    }
    g
}

fn table_of(entries: &[(u64, [f64; 2])]) -> EmbeddingTable {
    let mut t = EmbeddingTable::new(2);
    for (id, v) in entries {
        t.insert(ItemId(*id), v.to_vec()).unwrap();
    }
    t
}

fn full_subgraph(g: &ItemGraph, table: &EmbeddingTable, centers: &[u64], l_max: usize) -> UserSubgraph {
    let entries = centers
        .iter()
        .map(|&c| CenterEntry {
            node: ItemId(c),
            local: 0.0,
            global: 0.0,
            union: 0.0,
        })
        .collect();
    UserSubgraph::from_parts(
        UserId(1),
        g,
        CenterNodeSet { entries },
        table,
        &BTreeMap::new(),
        l_max,
    )
    .unwrap()
}

#[test]
fn reciprocal_distance_importance() {
    let m = model_with_centers(vec![vec![2.0, 0.0]]);
    assert_eq!(global_importance(&[0.0, 0.0], &m, DISTANCE_EPSILON).unwrap(), 0.5);
    let m = model_with_centers(vec![vec![4.0, 0.0], vec![0.0, 2.0]]);
    assert_eq!(global_importance(&[0.0, 0.0], &m, DISTANCE_EPSILON).unwrap(), 0.5);
    let m = model_with_centers(vec![vec![1.0, 1.0]]);
    assert_eq!(global_importance(&[1.0, 1.0], &m, 1e-8).unwrap(), 1e8);
    assert!(global_importance(&[1.0], &m, 1e-8).is_err());
    assert!(global_importance(&[1.0, 1.0], &model_with_centers(vec![]), 1e-8).is_err());
}

#[test]
fn star_hub_ranks_first() {
    let g = graph(&[(5, 1), (5, 2), (5, 3), (5, 4)]);
    let t = table_of(&[(1, [0.3, 0.3]), (2, [0.3, 0.3]), (3, [0.3, 0.3]), (4, [0.3, 0.3]), (5, [0.3, 0.3])]);
    let clusters = model_with_centers(vec![vec![0.0, 0.0]]);
    let set = select_center_nodes(&g, &t, &clusters, 2).unwrap();
    // hub: centrality 4/4 -> 1 after normalization; leaves 1/4 -> 0; g_im constant -> 0
    assert_eq!(set.entries[0].node, ItemId(5));
    assert_eq!(set.entries[0].local, 1.0);
    assert_eq!(set.entries[0].union, 1.0);
    assert_eq!(set.entries[1].node, ItemId(1));
    assert_eq!(set.entries[1].local, 0.25);
    assert_eq!(set.entries[1].union, 0.0);
}

#[test]
fn center_count_clamps_and_ties_by_id() {
    let g = graph(&[(9, 3)]);
    let t = table_of(&[(9, [1.0, 0.0]), (3, [1.0, 0.0])]);
    let clusters = model_with_centers(vec![vec![0.0, 0.0]]);
    let set = select_center_nodes(&g, &t, &clusters, 10).unwrap();
    assert_eq!(set.nodes().collect::<Vec<_>>(), [ItemId(3), ItemId(9)]);
    assert!(select_center_nodes(&g, &t, &clusters, 0).is_err());
    let missing = table_of(&[(9, [1.0, 0.0])]);
    assert_eq!(
        select_center_nodes(&g, &missing, &clusters, 1),
        Err(Error::MissingEmbedding(ItemId(3)))
    );
}

#[test]
fn nearest_center_one_hop() {
    // 1-2-3-4-5 path, centers 2 and 4.
    let g = graph(&[(1, 2), (2, 3), (3, 4), (4, 5)]);
    let t = table_of(&[(1, [0.0, 0.0]), (2, [0.0, 0.0]), (3, [5.0, 0.0]), (4, [10.0, 0.0]), (5, [10.0, 0.0])]);
    let sub = full_subgraph(&g, &t, &[2, 4], 2);
    let r = retrieve(&sub, &[9.0, 0.0], RetrieveOptions::new(1, 1)).unwrap();
    assert_eq!(r.selected, vec![(ItemId(4), 1.0)]);
    assert_eq!(r.node_set(), g.neighbors_within(ItemId(4), 1).unwrap());

    let r = retrieve(&sub, &[0.0, 0.0], RetrieveOptions::new(1, 1)).unwrap();
    assert_eq!(r.selected[0], (ItemId(2), 0.0));

    let r = retrieve(&sub, &[0.0, 0.0], RetrieveOptions::new(5, 2)).unwrap();
    assert_eq!(r.selected.len(), 2);
    // 3 is one hop from both centers; it is attributed to the closer one.
    let three = r.nodes.iter().find(|n| n.item == ItemId(3)).unwrap();
    assert_eq!((three.hop, three.source), (1, ItemId(2)));
    // Ordered by hop, then source distance, then id:
    // 1,3 (hop 1 from 2 at d=0), 5 (hop 1 from 4 at d=10), 4 (hop 2 from 2), 2 (hop 2 from 4).
    let order: Vec<_> = r.nodes.iter().map(|n| (n.hop, n.item.0)).collect();
    assert_eq!(order, [(1, 1), (1, 3), (1, 5), (2, 4), (2, 2)]);

    let far = retrieve(&sub, &[0.0, 0.0], RetrieveOptions::new(1, 1).with_order(CenterOrder::Farthest)).unwrap();
    assert_eq!(far.selected[0].0, ItemId(4));
}

#[test]
fn retrieval_errors() {
    let g = graph(&[(1, 2)]);
    let t = table_of(&[(1, [0.0, 0.0]), (2, [1.0, 0.0])]);
    let sub = full_subgraph(&g, &t, &[1], 2);
    assert!(retrieve(&sub, &[0.0, 0.0], RetrieveOptions::new(1, 3)).is_err());
    assert!(retrieve(&sub, &[0.0, 0.0], RetrieveOptions::new(0, 1)).is_err());
    assert!(retrieve(&sub, &[0.0], RetrieveOptions::new(1, 1)).is_err());
    let empty = full_subgraph(&g, &t, &[], 2);
    assert_eq!(
        retrieve(&empty, &[0.0, 0.0], RetrieveOptions::new(1, 1)),
        Err(Error::Empty("center set"))
    );
}

#[test]
fn result_cap_keeps_closest_hops() {
    let g = graph(&[(1, 2), (1, 3), (1, 4), (4, 5)]);
    let t = table_of(&[(1, [0.0, 0.0]), (2, [0.0, 0.0]), (3, [0.0, 0.0]), (4, [0.0, 0.0]), (5, [0.0, 0.0])]);
    let sub = full_subgraph(&g, &t, &[1], 2);
    let r = retrieve(&sub, &[0.0, 0.0], RetrieveOptions::new(1, 2).with_cap(3)).unwrap();
    assert_eq!(r.nodes.iter().map(|n| n.item.0).collect::<Vec<_>>(), [2, 3, 4]);
}

fn cat_seq(cats: &[u64]) -> BehaviorSequence {
    let events = cats
        .iter()
        .enumerate()
        .map(|(i, &c)| BehaviorEvent {
            user: UserId(1),
            item: ItemId(i as u64),
            timestamp: i as u64,
            category: CategoryId(c),
            behavior: BehaviorType::Click,
            scene: 0,
            label: None,
        })
        .collect();
    BehaviorSequence::new(UserId(1), events)
}

#[test]
fn category_baseline() {
    let cats: Vec<u64> = (0..100).map(|i| if i % 20 == 7 { 1 } else { 2 }).collect();
    let s = cat_seq(&cats);
    let r = hard_category_retrieve(&s, CategoryId(1), 10);
    assert_eq!(r.nodes.iter().map(|n| n.item.0).collect::<Vec<_>>(), [87, 67, 47, 27, 7]);
    assert!(hard_category_retrieve(&s, CategoryId(3), 10).is_empty());
    assert_eq!(hard_category_retrieve(&s, CategoryId(1), 1).nodes[0].item, ItemId(87));
}

pub(crate) fn random_case(seed: u64, max_nodes: usize, max_edges: usize) -> (ItemGraph, EmbeddingTable, UserSubgraph) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_nodes);
    let m = rng.gen_range(1..=max_edges);
    let mut g = ItemGraph::new();
    let mut t = EmbeddingTable::new(4);
    for v in 0..n as u64 {
        g.add_node(ItemId(v * 3 + 1));
        t.insert(ItemId(v * 3 + 1), (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    }
    for _ in 0..m {
        let a = rng.gen_range(0..n as u64) * 3 + 1;
        let b = rng.gen_range(0..n as u64) * 3 + 1;
        g.add_edge(ItemId(a), ItemId(b), 1);
    }
    let pts: Vec<Vec<f64>> = g.nodes().map(|v| t.get(v).unwrap().to_vec()).collect();
    let clusters = kmeans(&pts, rng.gen_range(1..=3.min(n)), seed).unwrap();
    let centers = select_center_nodes(&g, &t, &clusters, rng.gen_range(1..=10)).unwrap();
    let sub = UserSubgraph::from_parts(UserId(seed), &g, centers, &t, &BTreeMap::new(), 2).unwrap();
    (g, t, sub)
}

proptest! {
    #[test]
    fn matches_exhaustive_oracle(seed in 0u64..10_000, k in 1usize..6, hops in 1usize..=2) {
        let (g, _, sub) = random_case(seed, 40, 80);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let target: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let got = retrieve(&sub, &target, RetrieveOptions::new(k, hops).with_cap(usize::MAX)).unwrap();
        let mut ranked: Vec<(f64, ItemId)> = sub.centers.entries.iter().zip(&sub.center_vectors)
            .map(|(e, v)| (distance(v, &target), e.node)).collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut want = BTreeSet::new();
        for (_, c) in ranked.iter().take(k) {
            want.extend(g.neighbors_within(*c, hops).unwrap());
        }
        prop_assert_eq!(got.node_set(), want);
        for n in &got.nodes {
            prop_assert!(n.hop >= 1 && n.hop <= hops);
        }
        let wider = retrieve(&sub, &target, RetrieveOptions::new(k, 2).with_cap(usize::MAX)).unwrap();
        prop_assert!(got.node_set().is_subset(&wider.node_set()));
    }

    #[test]
    fn union_scores_bounded(seed in 0u64..10_000) {
        let (_, _, sub) = random_case(seed, 30, 60);
        for e in &sub.centers.entries {
            prop_assert!((0.0..=2.0).contains(&e.union));
            prop_assert!((0.0..=1.0).contains(&e.local));
        }
        prop_assert!(sub.centers.entries.windows(2).all(|w| w[0].union >= w[1].union));
        prop_assert!(sub.graph().is_symmetric());
    }

    #[test]
    fn store_round_trip(seed in 0u64..10_000) {
        let (_, _, sub) = random_case(seed, 25, 50);
        let mut w = ByteWriter::new();
        encode_subgraph(&sub, &mut w);
        let bytes = w.into_bytes();
        let back = decode_subgraph(&mut ByteReader::new(&bytes), 0).unwrap();
        prop_assert_eq!(back, sub);
    }
}

#[test]
fn store_errors_are_distinct() {
    let store: SubgraphStore = (0..5).map(|s| random_case(s, 20, 40).2).collect();
    let bytes = store.to_bytes();
    assert_eq!(SubgraphStore::from_bytes(&bytes).unwrap(), store);

    let err = SubgraphStore::from_bytes(&bytes[..bytes.len() - 7]).unwrap_err();
    assert!(matches!(err, CodecError::Truncated { .. }), "{err:?}");

    let mut corrupt = bytes.clone();
    let mid = 8 + 4 + 8 + 8 + 20; // inside the first payload
    corrupt[mid] ^= 0x01;
    let err = SubgraphStore::from_bytes(&corrupt).unwrap_err();
    assert!(matches!(err, CodecError::Checksum { record: 0, .. }), "{err:?}");

    let mut version = bytes.clone();
    version[8] = 9;
    let err = SubgraphStore::from_bytes(&version).unwrap_err();
    assert!(matches!(err, CodecError::Version { found: 9, .. }), "{err:?}");
}

#[test]
fn centers_are_canonical_under_insertion_order() {
    let edges = [(1u64, 2u64), (2, 3), (3, 1), (3, 4), (4, 5), (5, 6), (6, 4), (2, 7)];
    let t = table_of(&[
        (1, [0.0, 0.0]),
        (2, [0.1, 0.0]),
        (3, [0.0, 0.2]),
        (4, [3.0, 3.0]),
        (5, [3.1, 3.0]),
        (6, [3.0, 3.1]),
        (7, [0.5, 0.5]),
    ]);
    let clusters = model_with_centers(vec![vec![0.0, 0.0], vec![3.0, 3.0]]);
    let forward = select_center_nodes(&graph(&edges), &t, &clusters, 4).unwrap();
    let mut rev = edges;
    rev.reverse();
    let rev: Vec<(u64, u64)> = rev.iter().map(|&(a, b)| (b, a)).collect();
    assert_eq!(select_center_nodes(&graph(&rev), &t, &clusters, 4).unwrap(), forward);
}

#[test]
fn subgraph_keeps_only_nodes_near_centers() {
    let g = graph(&[(1, 2), (2, 3), (3, 4), (4, 5)]);
    let t = table_of(&[(1, [0.0, 0.0]), (2, [0.0, 0.0]), (3, [0.0, 0.0]), (4, [0.0, 0.0]), (5, [0.0, 0.0])]);
    let sub = full_subgraph(&g, &t, &[1], 2);
    assert_eq!(sub.nodes.iter().map(|n| n.item.0).collect::<Vec<_>>(), [1, 2, 3]);
    assert!(sub.graph().is_symmetric());
    assert_eq!(sub.graph().edge_count(), 2);
}

#[test]
fn subgraph_from_long_sequence() {
    let mut events = Vec::new();
    for (t, item) in [1u64, 2, 3, 1, 2, 10, 11, 12, 10].iter().enumerate() {
        events.push(BehaviorEvent {
            user: UserId(4),
            item: ItemId(*item),
            timestamp: 100 + t as u64,
            category: CategoryId(item / 10),
            behavior: BehaviorType::Order,
            scene: 0,
            label: None,
        });
    }
    let long = BehaviorSequence::new(UserId(4), events);
    let t = table_of(&[
        (1, [0.0, 0.0]),
        (2, [0.1, 0.0]),
        (3, [0.0, 0.1]),
        (10, [5.0, 5.0]),
        (11, [5.1, 5.0]),
        (12, [5.0, 5.1]),
    ]);
    let cfg = SubgraphConfig {
        centers: 3,
        clusters: ClusterCount::Fixed(2),
        l_max: 2,
        seed: 1,
    };
    let sub = build_user_subgraph(&long, &t, &cfg).unwrap().unwrap();
    assert_eq!(sub.user, UserId(4));
    assert_eq!(sub.centers.len(), 3);
    let rec = sub.node(ItemId(1)).unwrap();
    assert_eq!(rec.last_timestamp, 103);
    assert_eq!(rec.behavior, BehaviorType::Order);
    let empty = BehaviorSequence::empty(UserId(4));
    assert!(build_user_subgraph(&empty, &t, &cfg).unwrap().is_none());
}
