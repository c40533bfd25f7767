// SPDX-License-Identifier: Apache-2.0

//! Block-structured weight matrices over things and their context.
//!
//! The spatio-temporal graph has node order locations, time bins, things:
//!
//! ```text
//! | W_loc   W_x    W_y |
//! | W_x^T   0      W_z |
//! | W_y^T   W_z^T  0   |
//! ```
//!
//! The social graph has node order users, things, with the row-softmax
//! user-similarity block `W_u` and the user-thing counts `W_m`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::event_log::{discretize, EventLog, FriendshipMatrix};
use crate::periodicity::PeriodicRelation;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GraphKind {
    SpatioTemporal,
    Social,
    /// Locations and things only (no time nodes).
    Location,
    /// Time bins and things only (no location nodes).
    Temporal,
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GraphKind::SpatioTemporal => "st",
            GraphKind::Social => "social",
            GraphKind::Location => "location",
            GraphKind::Temporal => "temporal",
        })
    }
}

impl FromStr for GraphKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "st" | "spatiotemporal" | "spatio-temporal" => Ok(GraphKind::SpatioTemporal),
            "social" => Ok(GraphKind::Social),
            "location" => Ok(GraphKind::Location),
            "temporal" | "time" => Ok(GraphKind::Temporal),
            other => Err(Error::param("graph", format!("unknown graph `{other}`"))),
        }
    }
}

/// A weighted graph whose last `n_things` nodes are the log's things.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextGraph {
    kind: GraphKind,
    weights: CsrMatrix,
    node_ids: Vec<String>,
    thing_offset: usize,
}

impl ContextGraph {
    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn weights(&self) -> &CsrMatrix {
        &self.weights
    }

    pub fn node_count(&self) -> usize {
        self.node_ids.len()
    }

    /// Type-prefixed identifiers, e.g. `location:kitchen`, `bin:9`, `thing:kettle`.
    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn thing_offset(&self) -> usize {
        self.thing_offset
    }

    pub fn thing_count(&self) -> usize {
        self.node_ids.len() - self.thing_offset
    }

    pub fn thing_node(&self, thing: usize) -> usize {
        self.thing_offset + thing
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights.get(i, j)
    }

    /// Sub-block `rows x cols` as a dense matrix.
    pub fn block(
        &self,
        rows: std::ops::Range<usize>,
        cols: std::ops::Range<usize>,
    ) -> Vec<Vec<f64>> {
        rows.map(|i| cols.clone().map(|j| self.weights.get(i, j)).collect())
            .collect()
    }
}

/// Node offsets of the spatio-temporal layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StLayout {
    pub locations: usize,
    pub bins: usize,
    pub things: usize,
}

impl StLayout {
    pub fn of(log: &EventLog) -> Self {
        StLayout {
            locations: log.locations().len(),
            bins: log.time_bins(),
            things: log.things().len(),
        }
    }

    pub fn location_node(&self, l: usize) -> usize {
        l
    }

    pub fn bin_node(&self, b: usize) -> usize {
        self.locations + b
    }

    pub fn thing_node(&self, o: usize) -> usize {
        self.locations + self.bins + o
    }

    pub fn size(&self) -> usize {
        self.locations + self.bins + self.things
    }
}

fn things_per_location(log: &EventLog) -> Vec<BTreeSet<usize>> {
    let mut sets = vec![BTreeSet::new(); log.locations().len()];
    for e in log.indexed() {
        sets[e.location].insert(e.thing);
    }
    sets
}

fn jaccard(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Jaccard similarity of the thing sets used at each pair of locations.
pub fn jaccard_location_similarity(log: &EventLog) -> Vec<Vec<f64>> {
    let sets = things_per_location(log);
    sets.iter()
        .map(|a| sets.iter().map(|b| jaccard(a, b)).collect())
        .collect()
}

fn push_mirrored(triplets: &mut Vec<(usize, usize, f64)>, i: usize, j: usize, w: f64) {
    triplets.push((i, j, w));
    triplets.push((j, i, w));
}

fn ids<'a>(prefix: &'a str, names: &'a [String]) -> impl Iterator<Item = String> + 'a {
    let prefix = prefix.to_string();
    names.iter().map(move |n| format!("{prefix}:{n}"))
}

fn bin_ids(bins: usize) -> impl Iterator<Item = String> {
    (0..bins).map(|b| format!("bin:{b}"))
}

pub fn build_spatiotemporal_graph(log: &EventLog, rel: &PeriodicRelation) -> Result<ContextGraph> {
    let layout = StLayout::of(log);
    if rel.time_bins() != layout.bins {
        return Err(Error::DimensionMismatch(format!(
            "periodic relation has {} bins, log has {}",
            rel.time_bins(),
            layout.bins
        )));
    }
    let mut triplets = Vec::new();
    for (i, row) in jaccard_location_similarity(log).into_iter().enumerate() {
        for (j, w) in row.into_iter().enumerate() {
            triplets.push((layout.location_node(i), layout.location_node(j), w));
        }
    }
    for &(l, b) in rel.pairs() {
        if l >= layout.locations {
            return Err(Error::DimensionMismatch(format!("location index {l} out of range")));
        }
        push_mirrored(&mut triplets, layout.location_node(l), layout.bin_node(b), 1.0);
    }
    for d in discretize(log) {
        let o = layout.thing_node(d.thing);
        push_mirrored(&mut triplets, layout.location_node(d.location), o, 1.0);
        push_mirrored(&mut triplets, layout.bin_node(d.bin), o, 1.0);
    }
    let n = layout.size();
    let node_ids = ids("location", log.locations())
        .chain(bin_ids(layout.bins))
        .chain(ids("thing", log.things()))
        .collect();
    Ok(ContextGraph {
        kind: GraphKind::SpatioTemporal,
        weights: CsrMatrix::from_triplets(n, n, triplets),
        node_ids,
        thing_offset: layout.locations + layout.bins,
    })
}

/// Location similarity plus location-thing counts, without time nodes.
pub fn build_location_graph(log: &EventLog) -> ContextGraph {
    let q = log.locations().len();
    let n = q + log.things().len();
    let mut triplets = Vec::new();
    for (i, row) in jaccard_location_similarity(log).into_iter().enumerate() {
        for (j, w) in row.into_iter().enumerate() {
            triplets.push((i, j, w));
        }
    }
    for e in log.indexed() {
        push_mirrored(&mut triplets, e.location, q + e.thing, 1.0);
    }
    ContextGraph {
        kind: GraphKind::Location,
        weights: CsrMatrix::from_triplets(n, n, triplets),
        node_ids: ids("location", log.locations())
            .chain(ids("thing", log.things()))
            .collect(),
        thing_offset: q,
    }
}

/// Time-bin/thing counts only.
pub fn build_temporal_graph(log: &EventLog) -> ContextGraph {
    let bins = log.time_bins();
    let n = bins + log.things().len();
    let mut triplets = Vec::new();
    for d in discretize(log) {
        push_mirrored(&mut triplets, d.bin, bins + d.thing, 1.0);
    }
    ContextGraph {
        kind: GraphKind::Temporal,
        weights: CsrMatrix::from_triplets(n, n, triplets),
        node_ids: bin_ids(bins).chain(ids("thing", log.things())).collect(),
        thing_offset: bins,
    }
}

fn usage_vectors(log: &EventLog) -> Vec<BTreeSet<usize>> {
    let mut used = vec![BTreeSet::new(); log.users().len()];
    for e in log.indexed() {
        used[e.user].insert(e.thing);
    }
    used
}

/// Cosine similarity of binary usage sets; 0 when either set is empty.
fn binary_cosine(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    a.intersection(b).count() as f64 / ((a.len() * b.len()) as f64).sqrt()
}

fn check_friend_users(log: &EventLog, friends: &FriendshipMatrix) -> Result<()> {
    if friends.users() != log.users() {
        return Err(Error::DimensionMismatch(
            "friendship matrix is not indexed by the log's users; validate it first".into(),
        ));
    }
    Ok(())
}

/// Row-softmax over each user's friends of `alpha_social * cos(b(i), b(j))`.
/// Users without friends get an all-zero row.
pub fn user_similarity(
    log: &EventLog,
    friends: &FriendshipMatrix,
    alpha_social: f64,
) -> Result<Vec<Vec<f64>>> {
    if !alpha_social.is_finite() {
        return Err(Error::param("alpha_social", "must be finite"));
    }
    check_friend_users(log, friends)?;
    let used = usage_vectors(log);
    let n = used.len();
    let mut w = vec![vec![0.0; n]; n];
    for (i, row) in w.iter_mut().enumerate() {
        let logits: Vec<(usize, f64)> = friends
            .friends(i)
            .map(|j| (j, alpha_social * binary_cosine(&used[i], &used[j])))
            .collect();
        let Some(max) = logits.iter().map(|&(_, x)| x).reduce(f64::max) else {
            continue;
        };
        let z: f64 = logits.iter().map(|&(_, x)| (x - max).exp()).sum();
        for (j, x) in logits {
            row[j] = (x - max).exp() / z;
        }
    }
    Ok(w)
}

pub fn build_social_graph(
    log: &EventLog,
    friends: &FriendshipMatrix,
    alpha_social: f64,
) -> Result<ContextGraph> {
    let users = log.users().len();
    let n = users + log.things().len();
    let mut triplets = Vec::new();
    for (i, row) in user_similarity(log, friends, alpha_social)?
        .into_iter()
        .enumerate()
    {
        for (j, w) in row.into_iter().enumerate() {
            triplets.push((i, j, w));
        }
    }
    for e in log.indexed() {
        push_mirrored(&mut triplets, e.user, users + e.thing, 1.0);
    }
    Ok(ContextGraph {
        kind: GraphKind::Social,
        weights: CsrMatrix::from_triplets(n, n, triplets),
        node_ids: ids("user", log.users())
            .chain(ids("thing", log.things()))
            .collect(),
        thing_offset: users,
    })
}
