//! Planted-interest synthetic corpora.
//!
//! Items are split into contiguous blocks, one per latent interest, and each
//! interest spans several categories. Every user holds 1–3 interests. History
//! is generated as short sessions on one interest. A fixed quota of
//! `round((1 - interest_bias) * events)` positions, placed at random, holds a
//! uniformly random item instead. The last
//! `short_window` events concentrate on one "focus" interest, so recent
//! behavior alone under-represents users with several interests. Sessions
//! mostly happen in their interest's home scene.
//!
//! A labeled row is clean-positive exactly when the target item's interest
//! belongs to the user; `label_noise` flips labels at random.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{BehaviorEvent, BehaviorSequence, BehaviorType, CtrRow};
use crate::error::{Error, Result};
use crate::ids::{CategoryId, ItemId, UserId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub users: usize,
    pub items: usize,
    pub interests: usize,
    pub categories_per_interest: usize,
    pub max_interests_per_user: usize,
    pub events_per_user: usize,
    pub short_window: usize,
    pub scene_count: usize,
    /// Share of history events that stay on the session's interest.
    pub interest_bias: f64,
    /// Share of short-window sessions spent on the focus interest.
    pub focus_bias: f64,
    /// Probability that a session happens in its interest's home scene.
    pub scene_consistency: f64,
    pub session_min: usize,
    pub session_max: usize,
    pub rows_per_user: usize,
    /// Share of labeled rows whose target is drawn from the user's interests.
    pub targeted_rows: f64,
    pub label_noise: f64,
    pub base_timestamp: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            users: 2000,
            items: 500,
            interests: 10,
            categories_per_interest: 3,
            max_interests_per_user: 3,
            events_per_user: 100,
            short_window: 30,
            scene_count: 3,
            interest_bias: 0.9,
            focus_bias: 0.85,
            scene_consistency: 0.8,
            session_min: 3,
            session_max: 8,
            rows_per_user: 20,
            targeted_rows: 0.5,
            label_noise: 0.05,
            base_timestamp: 1_600_000_000,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.users == 0 || self.items == 0 {
            return bad("users and items must be nonzero");
        }
        if self.interests == 0 || self.interests > self.items {
            return bad("interests must be in 1..=items");
        }
        if self.categories_per_interest == 0 || self.scene_count == 0 {
            return bad("categories_per_interest and scene_count must be nonzero");
        }
        if self.max_interests_per_user == 0 {
            return bad("max_interests_per_user must be nonzero");
        }
        if self.session_min == 0 || self.session_min > self.session_max {
            return bad("session length range is empty");
        }
        for (name, p) in [
            ("interest_bias", self.interest_bias),
            ("focus_bias", self.focus_bias),
            ("scene_consistency", self.scene_consistency),
            ("targeted_rows", self.targeted_rows),
            ("label_noise", self.label_noise),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(alloc::format!("{name} must be a probability")));
            }
        }
        Ok(())
    }
}

/// Generator internals, kept for diagnostics and oracle scorers.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub item_interest: BTreeMap<ItemId, usize>,
    pub user_interests: BTreeMap<UserId, Vec<usize>>,
    pub user_focus: BTreeMap<UserId, usize>,
}

impl GroundTruth {
    /// Clean label of a row: the target's interest belongs to the user.
    pub fn is_relevant(&self, user: UserId, item: ItemId) -> bool {
        match (self.user_interests.get(&user), self.item_interest.get(&item)) {
            (Some(set), Some(i)) => set.contains(i),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub sequences: Vec<BehaviorSequence>,
    pub rows: Vec<CtrRow>,
    pub truth: GroundTruth,
}

struct Catalog {
    items_by_interest: Vec<Vec<ItemId>>,
    category: BTreeMap<ItemId, CategoryId>,
    interest: BTreeMap<ItemId, usize>,
    all: Vec<ItemId>,
}

fn catalog(cfg: &GeneratorConfig) -> Catalog {
    let mut items_by_interest = alloc::vec![Vec::new(); cfg.interests];
    let mut category = BTreeMap::new();
    let mut interest = BTreeMap::new();
    let mut all = Vec::with_capacity(cfg.items);
    for i in 0..cfg.items {
        let id = ItemId(i as u64 + 1);
        let k = i * cfg.interests / cfg.items;
        let pos = items_by_interest[k].len();
        let cat = k * cfg.categories_per_interest + pos % cfg.categories_per_interest;
        items_by_interest[k].push(id);
        category.insert(id, CategoryId(cat as u64 + 1));
        interest.insert(id, k);
        all.push(id);
    }
    Catalog {
        items_by_interest,
        category,
        interest,
        all,
    }
}

fn pick_behavior(rng: &mut ChaCha8Rng) -> BehaviorType {
    const WEIGHTS: [(BehaviorType, u32); 6] = [
        (BehaviorType::Click, 60),
        (BehaviorType::Load, 10),
        (BehaviorType::Cart, 10),
        (BehaviorType::Favorite, 5),
        (BehaviorType::Order, 10),
        (BehaviorType::Search, 5),
    ];
    let mut r = rng.gen_range(0..100);
    for (b, w) in WEIGHTS {
        if r < w {
            return b;
        }
        r -= w;
    }
    BehaviorType::Click
}

struct UserGen<'a> {
    cfg: &'a GeneratorConfig,
    cat: &'a Catalog,
    user: UserId,
    rng: ChaCha8Rng,
    clock: u64,
    noise: Vec<bool>,
    events: Vec<BehaviorEvent>,
}

impl UserGen<'_> {
    fn session(&mut self, interest: usize, budget: usize) {
        let len = self
            .rng
            .gen_range(self.cfg.session_min..=self.cfg.session_max)
            .min(budget);
        let home = (interest % self.cfg.scene_count) as u32;
        let scene = if self.rng.gen_bool(self.cfg.scene_consistency) {
            home
        } else {
            self.rng.gen_range(0..self.cfg.scene_count as u32)
        };
        self.clock += self.rng.gen_range(3_600..86_400);
        for _ in 0..len {
            self.clock += self.rng.gen_range(30..600);
            let item = if self.noise[self.events.len()] {
                *self.cat.all.choose(&mut self.rng).unwrap()
            } else {
                *self.cat.items_by_interest[interest].choose(&mut self.rng).unwrap()
            };
            let behavior = pick_behavior(&mut self.rng);
            self.events.push(BehaviorEvent {
                user: self.user,
                item,
                timestamp: self.clock,
                category: self.cat.category[&item],
                behavior,
                scene,
                label: None,
            });
        }
    }
}

/// Deterministic under `seed`; each user draws from its own ChaCha stream,
/// so users can be generated independently.
pub fn generate_synthetic_corpus(cfg: &GeneratorConfig, seed: u64) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    let cat = catalog(cfg);
    let mut sequences = Vec::with_capacity(cfg.users);
    let mut rows = Vec::with_capacity(cfg.users * cfg.rows_per_user);
    let mut user_interests = BTreeMap::new();
    let mut user_focus = BTreeMap::new();

    for u in 0..cfg.users {
        let user = UserId(u as u64 + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u as u64);
        let count = rng.gen_range(1..=cfg.max_interests_per_user.min(cfg.interests));
        let mut pool: Vec<usize> = (0..cfg.interests).collect();
        pool.shuffle(&mut rng);
        let mut interests = pool[..count].to_vec();
        interests.sort_unstable();
        let focus = *interests.choose(&mut rng).unwrap();
        let n = cfg.events_per_user;
        let quota = libm::round((1.0 - cfg.interest_bias) * n as f64) as usize;
        let mut noise: Vec<bool> = (0..n).map(|i| i < quota).collect();
        noise.shuffle(&mut rng);

        let mut g = UserGen {
            cfg,
            cat: &cat,
            user,
            rng,
            clock: cfg.base_timestamp,
            noise,
            events: Vec::with_capacity(cfg.events_per_user),
        };
        let long_len = cfg.events_per_user.saturating_sub(cfg.short_window);
        while g.events.len() < long_len {
            let k = *interests.choose(&mut g.rng).unwrap();
            g.session(k, long_len - g.events.len());
        }
        while g.events.len() < cfg.events_per_user {
            let k = if g.rng.gen_bool(cfg.focus_bias) {
                focus
            } else {
                *interests.choose(&mut g.rng).unwrap()
            };
            g.session(k, cfg.events_per_user - g.events.len());
        }

        let mut rng = g.rng;
        let last = g.clock;
        for _ in 0..cfg.rows_per_user {
            let item = if rng.gen_bool(cfg.targeted_rows) {
                let k = *interests.choose(&mut rng).unwrap();
                *cat.items_by_interest[k].choose(&mut rng).unwrap()
            } else {
                *cat.all.choose(&mut rng).unwrap()
            };
            let clean = interests.contains(&cat.interest[&item]);
            let label = clean ^ rng.gen_bool(cfg.label_noise);
            rows.push(CtrRow {
                user,
                item,
                category: cat.category[&item],
                timestamp: last + rng.gen_range(60..3_600),
                scene: rng.gen_range(0..cfg.scene_count as u32),
                label,
            });
        }
        sequences.push(BehaviorSequence::new(user, g.events));
        user_interests.insert(user, interests);
        user_focus.insert(user, focus);
    }

    Ok(SyntheticCorpus {
        sequences,
        rows,
        truth: GroundTruth {
            item_interest: cat.interest,
            user_interests,
            user_focus,
        },
    })
}
