//! Reference points: a demand-oblivious constant-degree network, a fixed
//! demand-aware network built with full knowledge of the trace, and the
//! conditional-entropy lower bound for fixed bounded-degree networks.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;
use thiserror::Error;

use crate::ego_tree::{EgoTree, TreeError};
use crate::entropy::{max_conditional_entropy, EntropyError, JointFreq};
use crate::renet::{
    ceil_log2, NetParams, NetworkSnapshot, SizeClass, TableSnapshot, TreeSnapshot,
};
use crate::trace::{sparsity_check, NodeId, SparsityParams, Trace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("need at least 2 nodes")]
    TooFewNodes,
    #[error("node {0} is not part of the network")]
    UnknownNode(NodeId),
    #[error("trace is not ({c}, {delta})-sparse: {unique} unique pairs in one window")]
    NotSparse { c: f64, delta: usize, unique: usize },
    #[error("no helper available for large pair ({0}, {1})")]
    HelperExhausted(NodeId, NodeId),
    #[error("node {node} needs {degree} ports, cap is {cap}")]
    DegreeCap { node: NodeId, degree: u32, cap: usize },
    #[error("pair ({0}, {1}) has no route in the static network")]
    PairAbsent(NodeId, NodeId),
    #[error("empty trace")]
    EmptyTrace,
    #[error(transparent)]
    Entropy(#[from] EntropyError),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

const EMBEDDING_SEED: u64 = 0x0b11_7105;

/// Binary de Bruijn graph on `2^k >= n` vertices, links taken undirected.
/// Nodes are placed on vertices by a fixed pseudo-random bijection.
#[derive(Clone, Debug)]
pub struct ObliviousNet {
    k: u32,
    vertex: FxHashMap<NodeId, u32>,
    adj: Vec<Vec<u32>>,
}

impl ObliviousNet {
    pub fn new(nodes: &[NodeId]) -> Result<Self, BaselineError> {
        let mut ids = nodes.to_vec();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() < 2 {
            return Err(BaselineError::TooFewNodes);
        }
        let k = ceil_log2(ids.len()) as u32;
        let size = 1u32 << k;
        let half = size >> 1;
        let adj = (0..size)
            .map(|x| {
                let mut nb: Vec<u32> = [(x << 1) & (size - 1), ((x << 1) | 1) & (size - 1), x >> 1, (x >> 1) | half]
                    .into_iter()
                    .filter(|&y| y != x)
                    .collect();
                nb.sort_unstable();
                nb.dedup();
                nb
            })
            .collect();
        let mut slots: Vec<u32> = (0..size).collect();
        slots.shuffle(&mut ChaCha8Rng::seed_from_u64(EMBEDDING_SEED));
        let vertex = ids.iter().zip(slots).map(|(&id, s)| (id, s)).collect();
        Ok(ObliviousNet { k, vertex, adj })
    }

    /// `log2` of the vertex count; also the graph diameter.
    pub fn diameter(&self) -> u32 {
        self.k
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    fn bfs(&self, src: u32) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.adj.len()];
        let mut queue = VecDeque::from([src]);
        dist[src as usize] = 0;
        while let Some(x) = queue.pop_front() {
            for &y in &self.adj[x as usize] {
                if dist[y as usize] == u32::MAX {
                    dist[y as usize] = dist[x as usize] + 1;
                    queue.push_back(y);
                }
            }
        }
        dist
    }

    pub fn distance(&self, u: NodeId, v: NodeId) -> Result<u32, BaselineError> {
        let a = *self.vertex.get(&u).ok_or(BaselineError::UnknownNode(u))?;
        let b = *self.vertex.get(&v).ok_or(BaselineError::UnknownNode(v))?;
        Ok(self.bfs(a)[b as usize])
    }
}

/// Mean shortest-path length of the trace's requests on `net`.
pub fn oblivious_cost(net: &ObliviousNet, trace: &Trace) -> Result<f64, BaselineError> {
    if trace.is_empty() {
        return Err(BaselineError::EmptyTrace);
    }
    let mut by_source: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for r in trace.requests() {
        by_source.entry(r.src()).or_default().push(r.dst());
    }
    let mut total = 0u64;
    for (u, dsts) in by_source {
        let a = *net.vertex.get(&u).ok_or(BaselineError::UnknownNode(u))?;
        let dist = net.bfs(a);
        for v in dsts {
            let b = *net.vertex.get(&v).ok_or(BaselineError::UnknownNode(v))?;
            total += dist[b as usize] as u64;
        }
    }
    Ok(total as f64 / trace.len() as f64)
}

/// `max(H(Y|X), H(X|Y))` of the whole trace, in base `degree`.
pub fn static_lower_bound(trace: &Trace, degree: usize) -> Result<f64, BaselineError> {
    if degree <= 1 {
        return Err(EntropyError::InvalidBase(degree as f64).into());
    }
    if trace.is_empty() {
        return Err(BaselineError::EmptyTrace);
    }
    let joint = JointFreq::from_trace(trace)?;
    Ok(max_conditional_entropy(&joint, degree as f64)?)
}

/// A fixed network laid out from the full trace: direct links between small
/// nodes, a weight-balanced static tree per large node, and helpers for
/// large-large pairs.
#[derive(Clone, Debug)]
pub struct StaticDan {
    params: NetParams,
    working_sets: BTreeMap<NodeId, BTreeSet<NodeId>>,
    classes: BTreeMap<NodeId, SizeClass>,
    trees: BTreeMap<NodeId, EgoTree>,
    helpers: BTreeMap<(NodeId, NodeId), NodeId>,
    edges: BTreeMap<(NodeId, NodeId), u32>,
}

pub fn build_static_dan(trace: &Trace, params: &NetParams) -> Result<StaticDan, BaselineError> {
    if trace.is_empty() {
        return Err(BaselineError::EmptyTrace);
    }
    let sparsity = SparsityParams::new(params.c, trace.len()).expect("c > 0 and a nonempty trace");
    let report = sparsity_check(trace, sparsity);
    if !report.ok {
        return Err(BaselineError::NotSparse { c: params.c, delta: trace.len(), unique: report.worst_unique_pairs });
    }

    let mut counts: FxHashMap<(NodeId, NodeId), u64> = FxHashMap::default();
    let mut working_sets: BTreeMap<NodeId, BTreeSet<NodeId>> =
        trace.nodes().iter().map(|&id| (id, BTreeSet::new())).collect();
    for r in trace.requests() {
        let (u, v) = r.pair();
        *counts.entry(ordered(u, v)).or_insert(0) += 1;
        working_sets.get_mut(&u).expect("trace nodes are known").insert(v);
        working_sets.get_mut(&v).expect("trace nodes are known").insert(u);
    }
    let classes: BTreeMap<NodeId, SizeClass> = working_sets
        .iter()
        .map(|(&id, w)| (id, if w.len() > params.theta { SizeClass::Large } else { SizeClass::Small }))
        .collect();
    let large = |id: &NodeId| classes[id] == SizeClass::Large;

    // Ports of small nodes: 1 per direct link, 3 per own seat, 6 per relay.
    let mut ports: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut load: BTreeMap<NodeId, usize> = BTreeMap::new();
    for (&u, w) in &working_sets {
        if !large(&u) {
            let p = w.iter().map(|v| if large(v) { 3 } else { 1 }).sum();
            ports.insert(u, p);
            load.insert(u, 0);
        }
    }
    let mut helpers = BTreeMap::new();
    for (&u, w) in &working_sets {
        for &v in w.range(u..) {
            if !(large(&u) && large(&v)) {
                continue;
            }
            let x = load
                .iter()
                .filter(|&(&x, &l)| {
                    x != u
                        && x != v
                        && l < params.helper_cap
                        && !working_sets[&x].contains(&u)
                        && !working_sets[&x].contains(&v)
                        && ports[&x] + 6 <= params.delta_cap
                })
                .min_by_key(|&(&x, &l)| (l, x))
                .map(|(&x, _)| x)
                .ok_or(BaselineError::HelperExhausted(u, v))?;
            *load.get_mut(&x).unwrap() += 1;
            *ports.get_mut(&x).unwrap() += 6;
            helpers.insert((u, v), x);
        }
    }

    let mut trees = BTreeMap::new();
    let mut edges: BTreeMap<(NodeId, NodeId), u32> = BTreeMap::new();
    for (&u, w) in &working_sets {
        if large(&u) {
            let items: Vec<(NodeId, NodeId, f64)> = w
                .iter()
                .map(|&v| {
                    let occ = if large(&v) { helpers[&ordered(u, v)] } else { v };
                    (v, occ, counts[&ordered(u, v)] as f64)
                })
                .collect();
            let tree = EgoTree::build_static_with(u, &items)?;
            for link in tree.physical_links() {
                *edges.entry(link).or_insert(0) += 1;
            }
            trees.insert(u, tree);
        } else {
            for &v in w.range(u..) {
                if !large(&v) {
                    *edges.entry((u, v)).or_insert(0) += 1;
                }
            }
        }
    }
    let mut degree: BTreeMap<NodeId, u32> = BTreeMap::new();
    for (&(a, b), &c) in &edges {
        *degree.entry(a).or_insert(0) += c;
        *degree.entry(b).or_insert(0) += c;
    }
    if let Some((&node, &deg)) = degree.iter().find(|(_, &d)| d as usize > params.delta_cap) {
        return Err(BaselineError::DegreeCap { node, degree: deg, cap: params.delta_cap });
    }
    Ok(StaticDan { params: params.clone(), working_sets, classes, trees, helpers, edges })
}

impl StaticDan {
    pub fn class(&self, id: NodeId) -> Option<SizeClass> {
        self.classes.get(&id).copied()
    }

    pub fn tree(&self, owner: NodeId) -> Option<&EgoTree> {
        self.trees.get(&owner)
    }

    pub fn helper(&self, u: NodeId, v: NodeId) -> Option<NodeId> {
        self.helpers.get(&ordered(u, v)).copied()
    }

    pub fn max_degree(&self) -> u32 {
        let mut degree: FxHashMap<NodeId, u32> = FxHashMap::default();
        for (&(a, b), &c) in &self.edges {
            *degree.entry(a).or_insert(0) += c;
            *degree.entry(b).or_insert(0) += c;
        }
        degree.values().copied().max().unwrap_or(0)
    }

    /// Route length for `u -> v`: 1 for a direct link, depth + 1 through
    /// one tree, and `d1 + d2 + 2` through a helper.
    pub fn route_hops(&self, u: NodeId, v: NodeId) -> Result<u64, BaselineError> {
        let absent = || BaselineError::PairAbsent(u, v);
        let cu = self.class(u).ok_or(BaselineError::UnknownNode(u))?;
        let cv = self.class(v).ok_or(BaselineError::UnknownNode(v))?;
        if !self.working_sets[&u].contains(&v) {
            return Err(absent());
        }
        let depth = |owner: NodeId, key: NodeId| self.trees.get(&owner).and_then(|t| t.depth(key)).ok_or_else(absent);
        Ok(match (cu, cv) {
            (SizeClass::Small, SizeClass::Small) => 1,
            (SizeClass::Small, SizeClass::Large) => depth(v, u)? + 1,
            (SizeClass::Large, SizeClass::Small) => depth(u, v)? + 1,
            (SizeClass::Large, SizeClass::Large) => depth(u, v)? + depth(v, u)? + 2,
        })
    }

    /// The built network in the same layout as a live network snapshot.
    pub fn snapshot(&self) -> NetworkSnapshot {
        let mut tables = BTreeMap::new();
        for (&id, w) in &self.working_sets {
            if self.classes[&id] == SizeClass::Large || w.is_empty() {
                continue;
            }
            let small = |v: &&NodeId| self.classes[*v] == SizeClass::Small;
            tables.insert(
                id,
                TableSnapshot {
                    working_set: w.iter().copied().collect(),
                    direct: w.iter().filter(small).copied().collect(),
                    trees: w.iter().filter(|v| !small(v)).copied().collect(),
                    helping: self.helpers.iter().filter(|(_, &x)| x == id).map(|(&p, _)| p).collect(),
                },
            );
        }
        for (&id, w) in &self.working_sets {
            if self.classes[&id] == SizeClass::Large {
                tables.insert(
                    id,
                    TableSnapshot { working_set: w.iter().copied().collect(), direct: vec![], trees: vec![], helping: vec![] },
                );
            }
        }
        NetworkSnapshot {
            params: self.params.clone(),
            size_classes: self.classes.clone(),
            edges: self.edges.iter().map(|(&(a, b), &c)| (a, b, c)).collect(),
            trees: self
                .trees
                .iter()
                .map(|(&id, t)| (id, TreeSnapshot { dump: t.dump(), virtual_roots: vec![] }))
                .collect(),
            tables,
            total_ws: self.working_sets.values().map(BTreeSet::len).sum(),
            reset_count: 0,
            exhaustion_resets: 0,
        }
    }
}

/// Mean route length of the trace on the fixed network (no adjustment cost).
pub fn stat_cost(dan: &StaticDan, trace: &Trace) -> Result<f64, BaselineError> {
    if trace.is_empty() {
        return Err(BaselineError::EmptyTrace);
    }
    let mut cache: FxHashMap<(NodeId, NodeId), u64> = FxHashMap::default();
    let mut total = 0u64;
    for r in trace.requests() {
        let (u, v) = r.pair();
        total += match cache.get(&(u, v)) {
            Some(&h) => h,
            None => {
                let h = dan.route_hops(u, v)?;
                cache.insert((u, v), h);
                h
            }
        };
    }
    Ok(total as f64 / trace.len() as f64)
}

fn ordered(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}
