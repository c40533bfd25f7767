// SPDX-License-Identifier: Apache-2.0

//! Synthetic usage logs with planted clusters of correlated things.
//!
//! Each cluster owns a group of things, a group of users, and a
//! spatio-temporal profile (locations plus daily active hours). Clean events
//! follow the profile; a `noise_rate` share of events is drawn uniformly.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_log::{
    write_events_csv, write_events_jsonl, write_friendships_csv, write_metadata_jsonl, EventLog,
    FriendshipMatrix, MetadataTable, ThingMetadata, UsageEvent,
};

/// 2024-01-01T00:00:00Z
pub const BASE_EPOCH: i64 = 1_704_067_200;

const CATEGORIES: &[(&str, &str, &[&str])] = &[
    ("Cooking", "kitchen", &["kettle", "boil", "stove", "recipe", "pan", "oven", "spice", "bake", "grill", "toast"]),
    ("Office", "study", &["desk", "printer", "paper", "lamp", "monitor", "keyboard", "ink", "scanner", "stapler", "notes"]),
    ("Entertainment", "living_room", &["tv", "speaker", "movie", "console", "music", "game", "stream", "remote", "volume", "screen"]),
    ("Transportation", "garage", &["car", "bike", "tire", "fuel", "helmet", "pump", "key", "parking", "engine", "scooter"]),
    ("Cleaning", "laundry", &["vacuum", "mop", "detergent", "washer", "dryer", "brush", "dust", "rinse", "towel", "iron"]),
    ("Health", "bathroom", &["scale", "toothbrush", "razor", "pill", "shower", "mirror", "floss", "thermometer", "soap", "hairdryer"]),
    ("Garden", "garden", &["hose", "rake", "seed", "soil", "mower", "sprinkler", "shovel", "pot", "compost", "shears"]),
    ("Sleep", "bedroom", &["alarm", "pillow", "blanket", "nightlight", "curtain", "mattress", "fan", "clock", "humidifier", "eyemask"]),
];

const SHARED_WORDS: &[&str] = &[
    "smart", "device", "wireless", "power", "button", "home", "sensor", "battery", "display", "connected",
    "portable", "digital", "white", "black", "compact", "model", "plus", "mini", "pro", "classic",
];

const DEFAULT_BINS: &[[usize; 2]] = &[[7, 8], [12, 13], [18, 19], [21, 22], [9, 10], [15, 16], [5, 6], [23, 0]];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_clusters: usize,
    pub things_per_cluster: usize,
    pub users: usize,
    pub locations_per_cluster: usize,
    /// Active hour bins per spatio-temporal profile; cycled if shorter.
    pub active_bins: Vec<Vec<usize>>,
    /// Number of distinct spatio-temporal profiles; clusters `c` and
    /// `c + st_profiles` share one. Defaults to `n_clusters`.
    pub st_profiles: Option<usize>,
    /// Chance that two users of the same cluster are friends.
    pub friendship_density: f64,
    /// Chance that two users of different clusters are friends.
    pub cross_friendship_density: f64,
    pub days: usize,
    pub events_per_day: usize,
    pub noise_rate: f64,
    pub time_bins: usize,
    /// Words per description drawn from the cluster theme (or, with
    /// probability `1 - description_purity`, another cluster's theme).
    pub theme_words: usize,
    pub description_purity: f64,
    pub shared_words: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_clusters: 4,
            things_per_cluster: 12,
            users: 10,
            locations_per_cluster: 1,
            active_bins: DEFAULT_BINS[..4].iter().map(|b| b.to_vec()).collect(),
            st_profiles: None,
            friendship_density: 0.8,
            cross_friendship_density: 0.05,
            days: 120,
            events_per_day: 168,
            noise_rate: 0.1,
            time_bins: 24,
            theme_words: 4,
            description_purity: 0.7,
            shared_words: 4,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {}", path.display(), e.message())))
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_clusters", self.n_clusters),
            ("things_per_cluster", self.things_per_cluster),
            ("users", self.users),
            ("locations_per_cluster", self.locations_per_cluster),
            ("days", self.days),
            ("events_per_day", self.events_per_day),
            ("time_bins", self.time_bins),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::param(name, "must be >= 1"));
            }
        }
        for (name, v) in [
            ("noise_rate", self.noise_rate),
            ("friendship_density", self.friendship_density),
            ("cross_friendship_density", self.cross_friendship_density),
            ("description_purity", self.description_purity),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(name, format!("{v} not in [0, 1]")));
            }
        }
        if self.active_bins.is_empty() || self.active_bins.iter().any(Vec::is_empty) {
            return Err(Error::param("active_bins", "every profile needs at least one bin"));
        }
        if let Some(b) = self.active_bins.iter().flatten().find(|&&b| b >= self.time_bins) {
            return Err(Error::param("active_bins", format!("bin {b} >= time_bins {}", self.time_bins)));
        }
        match self.st_profiles {
            Some(0) => return Err(Error::param("st_profiles", "must be >= 1")),
            Some(p) if p > self.n_clusters => {
                return Err(Error::param("st_profiles", format!("{p} > n_clusters {}", self.n_clusters)))
            }
            _ => {}
        }
        if self.users < self.n_clusters {
            return Err(Error::param("users", format!("need >= n_clusters ({}) users", self.n_clusters)));
        }
        Ok(())
    }

    fn profiles(&self) -> usize {
        self.st_profiles.unwrap_or(self.n_clusters)
    }
}

/// Ground truth planted by the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub cluster_labels: Vec<String>,
    /// Cluster index per thing.
    pub clusters: BTreeMap<String, usize>,
    pub labels: BTreeMap<String, Vec<String>>,
    /// Same-cluster things, the ideal RGT neighborhood.
    pub expected_neighbors: BTreeMap<String, Vec<String>>,
    pub user_clusters: BTreeMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub events: Vec<UsageEvent>,
    pub log: EventLog,
    pub friendships: FriendshipMatrix,
    pub metadata: MetadataTable,
    pub truth: PlantedTruth,
}

fn category(c: usize) -> (String, String, Vec<String>) {
    match CATEGORIES.get(c) {
        Some((label, room, words)) => (
            label.to_string(),
            room.to_string(),
            words.iter().map(|w| w.to_string()).collect(),
        ),
        None => (
            format!("Category{c}"),
            format!("room{c}"),
            (0..10).map(|j| format!("topic{c}word{j}")).collect(),
        ),
    }
}

fn bins_for(cfg: &SynthConfig, profile: usize) -> Vec<usize> {
    cfg.active_bins[profile % cfg.active_bins.len()].clone()
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let cats: Vec<_> = (0..cfg.n_clusters).map(category).collect();

    let things: Vec<Vec<String>> = cats
        .iter()
        .map(|(label, _, _)| {
            (0..cfg.things_per_cluster)
                .map(|i| format!("{}_{i:02}", label.to_lowercase()))
                .collect()
        })
        .collect();
    let users: Vec<String> = (0..cfg.users).map(|u| format!("user{u:02}")).collect();
    let user_cluster = |u: usize| u % cfg.n_clusters;
    let cluster_users: Vec<Vec<usize>> = (0..cfg.n_clusters)
        .map(|c| (0..cfg.users).filter(|&u| user_cluster(u) == c).collect())
        .collect();
    let profile_locations: Vec<Vec<String>> = (0..cfg.profiles())
        .map(|p| {
            let room = &cats[p].1;
            if cfg.locations_per_cluster == 1 {
                vec![room.clone()]
            } else {
                (0..cfg.locations_per_cluster).map(|j| format!("{room}_{j}")).collect()
            }
        })
        .collect();
    let all_locations: Vec<&String> = profile_locations.iter().flatten().collect();
    let all_things: Vec<&String> = things.iter().flatten().collect();

    let mut events = Vec::with_capacity(cfg.days * cfg.events_per_day);
    for day in 0..cfg.days {
        let day_start = BASE_EPOCH + day as i64 * 86_400;
        for _ in 0..cfg.events_per_day {
            let sec = rng.gen_range(0..3600) as i64;
            let bin_len = 86_400 / cfg.time_bins as i64;
            let ev = if rng.gen_bool(cfg.noise_rate) {
                let thing = all_things[rng.gen_range(0..all_things.len())];
                let user = &users[rng.gen_range(0..users.len())];
                let loc = all_locations[rng.gen_range(0..all_locations.len())];
                let bin = rng.gen_range(0..cfg.time_bins) as i64;
                UsageEvent::new(thing.as_str(), user.as_str(), day_start + bin * bin_len + sec % bin_len, loc.as_str())
            } else {
                let c = rng.gen_range(0..cfg.n_clusters);
                let p = c % cfg.profiles();
                let thing = things[c].choose(&mut rng).expect("non-empty cluster");
                let user = &users[*cluster_users[c].choose(&mut rng).expect("users >= clusters")];
                let loc = profile_locations[p].choose(&mut rng).expect("non-empty profile");
                let bin = *bins_for(cfg, p).choose(&mut rng).expect("validated bins") as i64;
                UsageEvent::new(thing.as_str(), user.as_str(), day_start + bin * bin_len + sec % bin_len, loc.as_str())
            };
            events.push(ev);
        }
    }
    events.sort_by(|a, b| {
        (a.timestamp, &a.thing, &a.user, &a.location).cmp(&(b.timestamp, &b.thing, &b.user, &b.location))
    });

    let mut pairs = Vec::new();
    for a in 0..cfg.users {
        for b in a + 1..cfg.users {
            let p = if user_cluster(a) == user_cluster(b) {
                cfg.friendship_density
            } else {
                cfg.cross_friendship_density
            };
            if rng.gen_bool(p) {
                pairs.push((users[a].as_str(), users[b].as_str()));
                pairs.push((users[b].as_str(), users[a].as_str()));
            }
        }
    }
    let friendships = FriendshipMatrix::from_pairs(pairs);

    let mut meta = Vec::new();
    for (c, group) in things.iter().enumerate() {
        for t in group {
            let mut words = Vec::new();
            for _ in 0..cfg.theme_words {
                let src = if cfg.n_clusters == 1 || rng.gen_bool(cfg.description_purity) {
                    c
                } else {
                    let other = rng.gen_range(0..cfg.n_clusters - 1);
                    if other >= c {
                        other + 1
                    } else {
                        other
                    }
                };
                words.push(cats[src].2.choose(&mut rng).expect("theme words").clone());
            }
            for _ in 0..cfg.shared_words {
                words.push(SHARED_WORDS.choose(&mut rng).expect("shared words").to_string());
            }
            words.shuffle(&mut rng);
            meta.push(ThingMetadata {
                thing: t.clone(),
                description: words.join(" "),
                labels: vec![cats[c].0.clone()],
            });
        }
    }
    let metadata = MetadataTable::new(meta)?;

    let mut truth = PlantedTruth {
        cluster_labels: cats.iter().map(|c| c.0.clone()).collect(),
        clusters: BTreeMap::new(),
        labels: BTreeMap::new(),
        expected_neighbors: BTreeMap::new(),
        user_clusters: (0..cfg.users).map(|u| (users[u].clone(), user_cluster(u))).collect(),
    };
    for (c, group) in things.iter().enumerate() {
        for t in group {
            truth.clusters.insert(t.clone(), c);
            truth.labels.insert(t.clone(), vec![cats[c].0.clone()]);
            truth
                .expected_neighbors
                .insert(t.clone(), group.iter().filter(|o| *o != t).cloned().collect());
        }
    }

    let log = EventLog::new(events.clone(), cfg.time_bins)?;
    Ok(SynthData {
        events,
        log,
        friendships,
        metadata,
        truth,
    })
}

/// Writes `events.csv`, `events.jsonl`, `friendships.csv`, `metadata.jsonl`
/// and `truth.json` into `dir`.
pub fn write_synth(data: &SynthData, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let create = |name: &str| {
        let p = dir.join(name);
        fs::File::create(&p).map(std::io::BufWriter::new).map_err(|e| Error::io(&p, e))
    };
    write_events_csv(&data.events, create("events.csv")?)?;
    write_events_jsonl(&data.events, create("events.jsonl")?)?;
    write_friendships_csv(&data.friendships, create("friendships.csv")?)?;
    write_metadata_jsonl(&data.metadata, create("metadata.jsonl")?)?;
    let truth = serde_json::to_string_pretty(&data.truth).map_err(|e| Error::Format(e.to_string()))?;
    let p = dir.join("truth.json");
    fs::write(&p, truth + "\n").map_err(|e| Error::io(&p, e))
}
