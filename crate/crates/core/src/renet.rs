//! The self-adjusting network: per-node forwarding state, small/large
//! dynamics, helper relays and the coordinator.
//!
//! A node is *small* while its working set holds at most `theta` partners and
//! talks to small partners over direct links. A *large* node owns an
//! [`EgoTree`] over its partners. Two large nodes reach each other through a
//! small *helper* that sits in both trees. The coordinator grows working sets,
//! promotes nodes, assigns helpers and clears everything once the total
//! working-set size reaches `n * theta / 2`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ego_tree::{
    EgoTree, RotationAccounting, RouteDown, TreeError, TreeEvent, VirtualRootPolicy,
};
use crate::trace::{NodeId, Request};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("node {0} is not part of the network")]
    UnknownNode(NodeId),
    #[error("self-request at node {0}")]
    SelfRequest(NodeId),
    #[error("node {0} is already large")]
    AlreadyLarge(NodeId),
    #[error("no helper available for large pair ({0}, {1})")]
    HelperExhausted(NodeId, NodeId),
    #[error("invariant check failed: {}", .0.first().map(|v| v.to_string()).unwrap_or_default())]
    Invariant(Vec<Violation>),
    #[error("inconsistent network state: {0}")]
    Internal(String),
    #[error("malformed snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeClass {
    Small,
    Large,
}

/// Static configuration of a network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetParams {
    pub n: usize,
    pub c: f64,
    /// Working-set size above which a node turns large: `max(2, ceil(4c))`.
    pub theta: usize,
    /// Port budget per node: `6 * theta`.
    pub delta_cap: usize,
    /// Cost of one message over the oblivious control network.
    pub d: u64,
    pub reset_threshold: usize,
    /// Most large-large pairs a single helper relays.
    pub helper_cap: usize,
    pub virtual_root_capacity: usize,
    pub rotation_accounting: RotationAccounting,
    pub virtual_root_policy: VirtualRootPolicy,
}

impl NetParams {
    pub fn new(n: usize, c: f64) -> Result<Self, NetError> {
        if n < 2 {
            return Err(NetError::InvalidParams(format!("need n >= 2, got {n}")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(NetError::InvalidParams(format!("need finite c > 0, got {c}")));
        }
        let theta = ((4.0 * c).ceil() as usize).max(2);
        let delta_cap = 6 * theta;
        Ok(NetParams {
            n,
            c,
            theta,
            delta_cap,
            d: ceil_log2(n),
            reset_threshold: n * theta / 2,
            helper_cap: (theta / 2).max(1),
            virtual_root_capacity: delta_cap - 1,
            rotation_accounting: RotationAccounting::Unit,
            virtual_root_policy: VirtualRootPolicy::Lru,
        })
    }

    pub fn with_d(mut self, d: u64) -> Self {
        self.d = d;
        self
    }

    pub fn with_virtual_root_capacity(mut self, r: usize) -> Self {
        self.virtual_root_capacity = r;
        self
    }

    pub fn with_rotation_accounting(mut self, a: RotationAccounting) -> Self {
        self.rotation_accounting = a;
        self
    }

    pub fn with_virtual_root_policy(mut self, p: VirtualRootPolicy) -> Self {
        self.virtual_root_policy = p;
        self
    }

    /// Checks the derived fields against `n` and `c`.
    pub fn validate(&self) -> Result<(), NetError> {
        let fresh = NetParams::new(self.n, self.c)?;
        let bad = |what: &str| Err(NetError::InvalidParams(what.to_string()));
        if self.theta != fresh.theta || self.delta_cap != fresh.delta_cap {
            return bad("theta and delta_cap must follow from c");
        }
        if self.reset_threshold != fresh.reset_threshold {
            return bad("reset_threshold must be floor(n * theta / 2)");
        }
        if self.helper_cap == 0 || 6 * self.helper_cap > self.delta_cap {
            return bad("helper_cap must be in 1..=theta");
        }
        if self.virtual_root_capacity >= self.delta_cap {
            return bad("virtual_root_capacity must be below delta_cap");
        }
        if self.d == 0 {
            return bad("d must be at least 1");
        }
        Ok(())
    }
}

pub(crate) fn ceil_log2(n: usize) -> u64 {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as u64
    }
}

/// One node's forwarding tables.
#[derive(Clone, Debug)]
pub struct NodeState {
    id: NodeId,
    class: SizeClass,
    working_set: BTreeSet<NodeId>,
    direct: BTreeSet<NodeId>,
    trees: BTreeSet<NodeId>,
    helping: BTreeSet<(NodeId, NodeId)>,
    vroot_slots: usize,
}

impl NodeState {
    fn new(id: NodeId) -> Self {
        NodeState {
            id,
            class: SizeClass::Small,
            working_set: BTreeSet::new(),
            direct: BTreeSet::new(),
            trees: BTreeSet::new(),
            helping: BTreeSet::new(),
            vroot_slots: 0,
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn class(&self) -> SizeClass {
        self.class
    }

    pub fn working_set(&self) -> &BTreeSet<NodeId> {
        &self.working_set
    }

    /// Small partners reached over a direct link.
    pub fn direct(&self) -> &BTreeSet<NodeId> {
        &self.direct
    }

    /// Owners of the trees this node sits in as itself.
    pub fn trees(&self) -> &BTreeSet<NodeId> {
        &self.trees
    }

    /// Large pairs this node relays for, smaller id first.
    pub fn helping(&self) -> &BTreeSet<(NodeId, NodeId)> {
        &self.helping
    }

    /// Virtual-root links this node holds in other nodes' trees.
    pub fn virtual_root_slots(&self) -> usize {
        self.vroot_slots
    }

    fn table_ports(&self) -> usize {
        self.direct.len() + 3 * self.trees.len() + 6 * self.helping.len()
    }

    /// Whether this node holds, or is about to take, a position in `owner`'s tree.
    fn occupies_tree_of(&self, owner: NodeId) -> bool {
        self.working_set.contains(&owner) || self.helping.iter().any(|&(a, b)| a == owner || b == owner)
    }
}

/// A broken invariant, attributed to a node where one applies.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub node: Option<NodeId>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node {
            Some(n) => write!(f, "node {n}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Cost breakdown of one served request.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestOutcome {
    pub hops: u64,
    pub adjust_cost: u64,
    pub coord_cost: u64,
    pub reset_cost: u64,
    pub reset_fired: bool,
    pub path: Vec<NodeId>,
    /// Every hop of `path` used a link present when it was taken.
    pub path_valid: bool,
}

/// Work done by the coordinator for one call.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoordinatorCost {
    pub link_changes: u64,
    /// Nodes instructed, excluding the one that raised the notification.
    pub messages: u64,
    pub coord_cost: u64,
    pub reset_cost: u64,
    pub reset_fired: bool,
}

#[derive(Default)]
struct Acc {
    links: u64,
    instructed: BTreeSet<NodeId>,
    reset_cost: u64,
    reset_fired: bool,
}

impl Acc {
    fn finish(self, notifier: Option<NodeId>, d: u64) -> CoordinatorCost {
        let mut messages = self.instructed.len() as u64;
        if notifier.is_some_and(|n| self.instructed.contains(&n)) {
            messages -= 1;
        }
        CoordinatorCost {
            link_changes: self.links,
            messages,
            coord_cost: messages * d,
            reset_cost: self.reset_cost,
            reset_fired: self.reset_fired,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum RouteKind {
    /// Small source, direct link.
    Direct,
    /// Small source climbing the destination's tree.
    Up,
    /// Large source descending its own tree to a small destination.
    Down,
    /// Large to large through a helper.
    Relay,
    /// No route yet; the path is the prefix walked before the miss.
    Missing,
}

struct Plan {
    kind: RouteKind,
    path: Vec<NodeId>,
    hops: u64,
}

#[derive(Clone, Debug)]
pub struct Network {
    params: NetParams,
    ids: Vec<NodeId>,
    index: FxHashMap<NodeId, usize>,
    nodes: Vec<NodeState>,
    trees: Vec<Option<EgoTree>>,
    edges: FxHashMap<(NodeId, NodeId), u32>,
    degree: Vec<u32>,
    total_ws: usize,
    helper_pool: BTreeSet<(usize, NodeId)>,
    reset_count: u64,
    exhaustion_resets: u64,
    debug_sweeps: bool,
    scratch: Vec<TreeEvent>,
}

impl Network {
    /// Empty network over nodes `0..n`.
    pub fn new(params: NetParams) -> Result<Self, NetError> {
        let ids: Vec<NodeId> = (0..params.n as u64).map(NodeId).collect();
        Network::with_nodes(params, &ids)
    }

    /// Empty network over arbitrary node addresses; `params.n` must match.
    pub fn with_nodes(params: NetParams, nodes: &[NodeId]) -> Result<Self, NetError> {
        params.validate()?;
        let mut ids = nodes.to_vec();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != nodes.len() {
            return Err(NetError::InvalidParams("duplicate node addresses".into()));
        }
        if ids.len() != params.n {
            return Err(NetError::InvalidParams(format!(
                "params say n = {} but {} nodes were given",
                params.n,
                ids.len()
            )));
        }
        let index = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let n = ids.len();
        let mut net = Network {
            params,
            nodes: ids.iter().map(|&id| NodeState::new(id)).collect(),
            trees: vec![None; n],
            ids,
            index,
            edges: FxHashMap::default(),
            degree: vec![0; n],
            total_ws: 0,
            helper_pool: BTreeSet::new(),
            reset_count: 0,
            exhaustion_resets: 0,
            debug_sweeps: false,
            scratch: Vec::new(),
        };
        net.helper_pool = net.ids.iter().map(|&id| (0, id)).collect();
        Ok(net)
    }

    /// Runs [`Network::validate_invariants`] after every served request.
    pub fn set_debug_sweeps(&mut self, on: bool) {
        self.debug_sweeps = on;
    }

    pub fn params(&self) -> &NetParams {
        &self.params
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeState> {
        self.index.get(&id).map(|&i| &self.nodes[i])
    }

    pub fn tree(&self, owner: NodeId) -> Option<&EgoTree> {
        self.index.get(&owner).and_then(|&i| self.trees[i].as_ref())
    }

    pub fn degree(&self, id: NodeId) -> Option<u32> {
        self.index.get(&id).map(|&i| self.degree[i])
    }

    pub fn max_degree(&self) -> u32 {
        self.degree.iter().copied().max().unwrap_or(0)
    }

    /// Number of distinct physical links.
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Link multiplicity between `a` and `b`.
    pub fn link_count(&self, a: NodeId, b: NodeId) -> u32 {
        self.edges.get(&ordered(a, b)).copied().unwrap_or(0)
    }

    pub fn total_ws(&self) -> usize {
        self.total_ws
    }

    pub fn reset_count(&self) -> u64 {
        self.reset_count
    }

    /// Resets scheduled because no helper was available.
    pub fn exhaustion_resets(&self) -> u64 {
        self.exhaustion_resets
    }

    pub fn helper_load(&self, id: NodeId) -> Option<usize> {
        self.node(id).map(|s| s.helping.len())
    }

    /// Ports in use at `id` under the table layout.
    pub fn ports(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).map(|&i| self.ports_at(i))
    }

    fn ports_at(&self, i: usize) -> usize {
        let s = &self.nodes[i];
        match s.class {
            SizeClass::Small => s.table_ports() + s.vroot_slots,
            SizeClass::Large => 1 + self.params.virtual_root_capacity,
        }
    }

    fn idx(&self, id: NodeId) -> Result<usize, NetError> {
        self.index.get(&id).copied().ok_or(NetError::UnknownNode(id))
    }

    fn link(&mut self, added: bool, a: NodeId, b: NodeId) {
        debug_assert_ne!(a, b, "self-loop");
        let key = ordered(a, b);
        if added {
            *self.edges.entry(key).or_insert(0) += 1;
        } else {
            match self.edges.get_mut(&key) {
                Some(c) if *c > 1 => *c -= 1,
                Some(_) => {
                    self.edges.remove(&key);
                }
                None => debug_assert!(false, "removing absent link {a}-{b}"),
            }
        }
        for id in [a, b] {
            let i = self.index[&id];
            if added {
                self.degree[i] += 1;
            } else {
                self.degree[i] = self.degree[i].saturating_sub(1);
            }
        }
    }

    /// Runs `f` on the tree of `owner` and applies its physical side effects.
    fn tree_op<R>(&mut self, owner: usize, f: impl FnOnce(&mut EgoTree) -> R) -> R {
        let tree = self.trees[owner].as_mut().expect("large node owns a tree");
        let r = f(tree);
        self.scratch.extend(tree.drain_events());
        let mut events = std::mem::take(&mut self.scratch);
        for ev in events.drain(..) {
            match ev {
                TreeEvent::Link { added, a, b } => self.link(added, a, b),
                TreeEvent::VirtualRoot { added, occupant } => {
                    let s = &mut self.nodes[self.index[&occupant]];
                    if added {
                        s.vroot_slots += 1;
                    } else {
                        s.vroot_slots -= 1;
                    }
                }
            }
        }
        self.scratch = events;
        r
    }

    fn new_tree(&self, owner: NodeId) -> EgoTree {
        EgoTree::new(owner, self.params.virtual_root_capacity)
            .with_accounting(self.params.rotation_accounting)
            .with_policy(self.params.virtual_root_policy)
            .with_events()
    }

    fn pool_leave(&mut self, i: usize) {
        let s = &self.nodes[i];
        self.helper_pool.remove(&(s.helping.len(), s.id));
    }

    fn pool_join(&mut self, i: usize) {
        let s = &self.nodes[i];
        if s.class == SizeClass::Small && s.helping.len() < self.params.helper_cap {
            self.helper_pool.insert((s.helping.len(), s.id));
        }
    }

    /// Drops virtual-root links of small node `i` until its ports fit.
    fn shed(&mut self, i: usize, acc: &mut Acc) {
        let delta = self.params.delta_cap;
        while self.nodes[i].class == SizeClass::Small
            && self.ports_at(i) > delta
            && self.nodes[i].vroot_slots > 0
        {
            let x = self.ids[i];
            let s = &self.nodes[i];
            let is_vroot = |owner: NodeId, key: NodeId| {
                self.tree(owner).is_some_and(|t| t.is_virtual_root(key))
            };
            let target = s
                .trees
                .iter()
                .map(|&w| (w, x))
                .chain(s.helping.iter().flat_map(|&(a, b)| [(a, b), (b, a)]))
                .find(|&(owner, key)| is_vroot(owner, key));
            let Some((owner, key)) = target else { break };
            let oi = self.index[&owner];
            let c = self.tree_op(oi, |t| t.evict_virtual_root(key));
            acc.links += c.link_changes;
        }
    }

    /// Least-loaded small node able to relay between large `u` and `v`,
    /// ties to the smallest id.
    pub fn find_helper(&self, u: NodeId, v: NodeId) -> Result<NodeId, NetError> {
        self.find_helper_excluding(u, v, None)
    }

    fn find_helper_excluding(&self, u: NodeId, v: NodeId, exclude: Option<NodeId>) -> Result<NodeId, NetError> {
        for &(_, x) in &self.helper_pool {
            if x == u || x == v || Some(x) == exclude {
                continue;
            }
            let s = &self.nodes[self.index[&x]];
            if s.occupies_tree_of(u) || s.occupies_tree_of(v) {
                continue;
            }
            if s.table_ports() + 6 > self.params.delta_cap {
                continue;
            }
            return Ok(x);
        }
        Err(NetError::HelperExhausted(u, v))
    }

    fn take_helper(&mut self, pair: (NodeId, NodeId), exclude: Option<NodeId>, acc: &mut Acc) -> Result<usize, NetError> {
        let x = self.find_helper_excluding(pair.0, pair.1, exclude)?;
        let xi = self.index[&x];
        self.pool_leave(xi);
        self.nodes[xi].helping.insert(ordered(pair.0, pair.1));
        self.pool_join(xi);
        acc.instructed.insert(x);
        Ok(xi)
    }

    /// Moves the relay duty for `pair` away from node `old`.
    fn reassign_helper(&mut self, old: usize, pair: (NodeId, NodeId), acc: &mut Acc) -> Result<(), NetError> {
        self.pool_leave(old);
        self.nodes[old].helping.remove(&pair);
        self.pool_join(old);
        let old_id = self.ids[old];
        let y = self.take_helper(pair, Some(old_id), acc)?;
        let yid = self.ids[y];
        let (a, b) = pair;
        let (ai, bi) = (self.index[&a], self.index[&b]);
        let c1 = self.tree_op(ai, |t| t.replace_occupant(b, yid))?;
        let c2 = self.tree_op(bi, |t| t.replace_occupant(a, yid))?;
        acc.links += c1.link_changes + c2.link_changes;
        acc.instructed.extend([old_id, a, b]);
        self.shed(y, acc);
        Ok(())
    }

    /// Frees small node `i` from relaying inside the tree of `owner`, so it
    /// can take its own seat there.
    fn clear_relay_in(&mut self, i: usize, owner: NodeId, acc: &mut Acc) -> Result<(), NetError> {
        let pairs: Vec<_> =
            self.nodes[i].helping.iter().copied().filter(|&(a, b)| a == owner || b == owner).collect();
        for p in pairs {
            self.reassign_helper(i, p, acc)?;
        }
        Ok(())
    }

    /// Promotes small `u` to large: builds its tree from its connected
    /// partners and hands off its relay duties.
    pub fn make_large(&mut self, u: NodeId) -> Result<CoordinatorCost, NetError> {
        let ui = self.idx(u)?;
        let mut acc = Acc::default();
        self.make_large_at(ui, &mut acc)?;
        Ok(acc.finish(None, self.params.d))
    }

    fn make_large_at(&mut self, ui: usize, acc: &mut Acc) -> Result<(), NetError> {
        let u = self.ids[ui];
        if self.nodes[ui].class == SizeClass::Large {
            return Err(NetError::AlreadyLarge(u));
        }
        self.pool_leave(ui);
        self.nodes[ui].class = SizeClass::Large;
        self.trees[ui] = Some(self.new_tree(u));
        acc.instructed.insert(u);

        let duties: Vec<_> = self.nodes[ui].helping.iter().copied().collect();
        for pair in duties {
            self.reassign_helper(ui, pair, acc)?;
        }

        let partners: Vec<NodeId> = self.nodes[ui].working_set.iter().copied().collect();
        for p in partners {
            let pi = self.index[&p];
            match self.nodes[pi].class {
                SizeClass::Small => {
                    // A partner with no link yet is the one whose route is being added.
                    if !self.nodes[ui].direct.remove(&p) {
                        continue;
                    }
                    self.nodes[pi].direct.remove(&u);
                    self.link(false, u, p);
                    acc.links += 1;
                    let c = self.tree_op(ui, |t| t.insert(p, p))?;
                    acc.links += c.link_changes;
                    self.nodes[pi].trees.insert(u);
                    acc.instructed.insert(p);
                    self.shed(pi, acc);
                }
                SizeClass::Large => {
                    if !self.nodes[ui].trees.remove(&p) {
                        continue;
                    }
                    let xi = self.take_helper((u, p), None, acc)?;
                    let x = self.ids[xi];
                    let c1 = self.tree_op(ui, |t| t.insert(p, x))?;
                    let c2 = self.tree_op(pi, |t| t.replace_occupant(u, x))?;
                    acc.links += c1.link_changes + c2.link_changes;
                    acc.instructed.insert(p);
                    self.shed(xi, acc);
                }
            }
        }
        Ok(())
    }

    /// Clears every table and link. Costs `n` (one broadcast).
    pub fn reset(&mut self) -> u64 {
        let mut acc = Acc::default();
        self.reset_inner(&mut acc);
        acc.reset_cost
    }

    fn reset_inner(&mut self, acc: &mut Acc) {
        for (i, s) in self.nodes.iter_mut().enumerate() {
            *s = NodeState::new(self.ids[i]);
        }
        for t in &mut self.trees {
            *t = None;
        }
        self.edges.clear();
        self.degree.iter_mut().for_each(|d| *d = 0);
        self.total_ws = 0;
        self.helper_pool = self.ids.iter().map(|&id| (0, id)).collect();
        self.reset_count += 1;
        acc.reset_cost += self.params.n as u64;
        acc.reset_fired = true;
    }

    /// Coordinator entry point: makes `u` and `v` partners and builds a route.
    /// A no-op if they already are.
    pub fn add_route(&mut self, u: NodeId, v: NodeId) -> Result<CoordinatorCost, NetError> {
        if u == v {
            return Err(NetError::SelfRequest(u));
        }
        let (ui, vi) = (self.idx(u)?, self.idx(v)?);
        let mut acc = Acc::default();
        self.add_route_at(ui, vi, &mut acc)?;
        Ok(acc.finish(None, self.params.d))
    }

    fn add_route_at(&mut self, ui: usize, vi: usize, acc: &mut Acc) -> Result<(), NetError> {
        let v = self.ids[vi];
        if self.nodes[ui].working_set.contains(&v) {
            return Ok(());
        }
        if self.total_ws + 2 > self.params.reset_threshold {
            self.reset_inner(acc);
        }
        match self.try_add_route(ui, vi, acc) {
            Err(NetError::HelperExhausted(..)) => {
                self.exhaustion_resets += 1;
                self.reset_inner(acc);
                self.try_add_route(ui, vi, acc)
            }
            other => other,
        }
    }

    fn try_add_route(&mut self, ui: usize, vi: usize, acc: &mut Acc) -> Result<(), NetError> {
        let (u, v) = (self.ids[ui], self.ids[vi]);
        let theta = self.params.theta;
        acc.instructed.extend([u, v]);
        for (a, b) in [(ui, v), (vi, u)] {
            self.nodes[a].working_set.insert(b);
            self.total_ws += 1;
            if self.nodes[a].class == SizeClass::Small && self.nodes[a].working_set.len() == theta + 1 {
                self.make_large_at(a, acc)?;
            }
        }
        match (self.nodes[ui].class, self.nodes[vi].class) {
            (SizeClass::Small, SizeClass::Small) => {
                self.nodes[ui].direct.insert(v);
                self.nodes[vi].direct.insert(u);
                self.link(true, u, v);
                acc.links += 1;
                self.shed(ui, acc);
                self.shed(vi, acc);
            }
            (SizeClass::Small, SizeClass::Large) => self.seat(ui, vi, acc)?,
            (SizeClass::Large, SizeClass::Small) => self.seat(vi, ui, acc)?,
            (SizeClass::Large, SizeClass::Large) => {
                let xi = self.take_helper((u, v), None, acc)?;
                let x = self.ids[xi];
                let c1 = self.tree_op(ui, |t| t.attach_leaf(v, x))?;
                let c2 = self.tree_op(vi, |t| t.attach_leaf(u, x))?;
                acc.links += c1.link_changes + c2.link_changes;
                self.shed(xi, acc);
            }
        }
        Ok(())
    }

    /// Hangs small node `si` into the tree of large node `li`.
    fn seat(&mut self, si: usize, li: usize, acc: &mut Acc) -> Result<(), NetError> {
        let (s, l) = (self.ids[si], self.ids[li]);
        self.clear_relay_in(si, l, acc)?;
        let c = self.tree_op(li, |t| t.attach_leaf(s, s))?;
        acc.links += c.link_changes;
        self.nodes[si].trees.insert(l);
        self.shed(si, acc);
        Ok(())
    }

    /// Works out the route `u -> v` from the current tables without changing anything.
    fn plan(&self, ui: usize, vi: usize) -> Result<Plan, NetError> {
        let (u, v) = (self.ids[ui], self.ids[vi]);
        let su = &self.nodes[ui];
        match su.class {
            SizeClass::Small => {
                if su.direct.contains(&v) {
                    Ok(Plan { kind: RouteKind::Direct, path: vec![u, v], hops: 1 })
                } else if su.trees.contains(&v) {
                    let tree = self.trees[vi].as_ref().ok_or_else(|| missing_tree(v))?;
                    let up = tree.route_up(u)?;
                    let mut path = up.path;
                    path.push(v);
                    Ok(Plan { kind: RouteKind::Up, path, hops: up.hops })
                } else {
                    Ok(Plan { kind: RouteKind::Missing, path: vec![u], hops: 0 })
                }
            }
            SizeClass::Large => {
                let tree = self.trees[ui].as_ref().ok_or_else(|| missing_tree(u))?;
                let mut path = vec![u];
                match tree.route_down(v) {
                    RouteDown::Hit { entry, path: down, hops } => {
                        path.extend(down);
                        if entry.occupant == v {
                            return Ok(Plan { kind: RouteKind::Down, path, hops });
                        }
                        let vt = self.trees[vi].as_ref().ok_or_else(|| missing_tree(v))?;
                        let up = vt.route_up(u)?;
                        path.extend(&up.path[1..]);
                        path.push(v);
                        Ok(Plan { kind: RouteKind::Relay, path, hops: hops + up.hops })
                    }
                    RouteDown::Miss { path: down, hops, .. } => {
                        path.extend(down);
                        Ok(Plan { kind: RouteKind::Missing, path, hops })
                    }
                }
            }
        }
    }

    fn path_is_live(&self, path: &[NodeId]) -> bool {
        path.windows(2).all(|w| self.edges.contains_key(&ordered(w[0], w[1])))
    }

    /// Destination- or helper-side splay on `owner`'s tree at `key`.
    fn adjust_at(&mut self, owner: usize, key: NodeId) -> Result<u64, NetError> {
        let tree = self.trees[owner].as_ref().ok_or_else(|| missing_tree(self.ids[owner]))?;
        let occ = tree.occupant(key).ok_or(TreeError::KeyAbsent(key))?;
        let admit = self.ports_at(self.index[&occ]) < self.params.delta_cap;
        let c = self.tree_op(owner, |t| t.adjust_with(key, admit))?;
        Ok(c.link_changes)
    }

    /// Routes one request, adding the route through the coordinator if it is
    /// missing, then lets the receiving side adjust its tree.
    pub fn serve_request(&mut self, req: &Request) -> Result<RequestOutcome, NetError> {
        let (u, v) = req.pair();
        let (ui, vi) = (self.idx(u)?, self.idx(v)?);
        let d = self.params.d;
        let mut out = RequestOutcome::default();
        let mut plan = self.plan(ui, vi)?;
        out.path_valid = self.path_is_live(&plan.path);
        if plan.kind == RouteKind::Missing {
            let notifier = *plan.path.last().expect("paths start at the source");
            let mut acc = Acc::default();
            self.add_route_at(ui, vi, &mut acc)?;
            let cost = acc.finish(Some(notifier), d);
            out.adjust_cost += cost.link_changes;
            out.coord_cost += d + cost.coord_cost;
            out.reset_cost += cost.reset_cost;
            out.reset_fired = cost.reset_fired;
            let prefix = plan;
            plan = self.plan(ui, vi)?;
            if plan.kind == RouteKind::Missing {
                return Err(NetError::Internal(format!("no route {u} -> {v} after add_route")));
            }
            out.path_valid &= self.path_is_live(&plan.path);
            if !plan.path.starts_with(&prefix.path) {
                // The tables changed under the packet; the walked prefix is lost.
                plan.hops += prefix.hops;
            }
        }
        out.hops = plan.hops;
        match plan.kind {
            RouteKind::Direct | RouteKind::Missing => {}
            RouteKind::Up => out.adjust_cost += self.adjust_at(vi, u)?,
            RouteKind::Down => out.adjust_cost += self.adjust_at(ui, v)?,
            RouteKind::Relay => {
                out.adjust_cost += self.adjust_at(ui, v)?;
                out.adjust_cost += self.adjust_at(vi, u)?;
            }
        }
        out.path = plan.path;
        if self.debug_sweeps {
            let violations = self.validate_invariants();
            if !violations.is_empty() {
                return Err(NetError::Invariant(violations));
            }
        }
        Ok(out)
    }

    /// Full audit of the network. Empty result means healthy.
    pub fn validate_invariants(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let p = &self.params;
        let mut bad = |node: Option<NodeId>, message: String| out.push(Violation { node, message });
        let mut ws_total = 0;
        let mut vroot_count = vec![0usize; self.ids.len()];
        let mut expected: FxHashMap<(NodeId, NodeId), u32> = FxHashMap::with_capacity_and_hasher(self.edges.len(), Default::default());

        for (i, s) in self.nodes.iter().enumerate() {
            let id = s.id;
            let me = Some(id);
            ws_total += s.working_set.len();
            let small = s.class == SizeClass::Small;
            if small != (s.working_set.len() <= p.theta) {
                bad(me, format!("{:?} with working set of size {}", s.class, s.working_set.len()));
            }
            for w in &s.working_set {
                match self.node(*w) {
                    Some(o) if o.working_set.contains(&id) => {}
                    _ => bad(me, format!("working set lists {w} but not vice versa")),
                }
            }
            if self.degree[i] as usize > p.delta_cap {
                bad(me, format!("degree {} exceeds {}", self.degree[i], p.delta_cap));
            }
            match s.class {
                SizeClass::Small => {
                    if self.trees[i].is_some() {
                        bad(me, "small node owns a tree".into());
                    }
                    let ports = self.ports_at(i);
                    if ports > p.delta_cap {
                        bad(me, format!("{ports} ports exceed {}", p.delta_cap));
                    }
                    if s.helping.len() > p.helper_cap {
                        bad(me, format!("helps {} pairs, cap {}", s.helping.len(), p.helper_cap));
                    }
                    for &w in &s.direct {
                        let ok = s.working_set.contains(&w)
                            && self.node(w).is_some_and(|o| o.class == SizeClass::Small && o.direct.contains(&id));
                        if !ok {
                            bad(me, format!("stale direct link to {w}"));
                        }
                        if id < w {
                            *expected.entry((id, w)).or_insert(0) += 1;
                        }
                    }
                    for &w in &s.trees {
                        let ok = s.working_set.contains(&w) && self.tree(w).is_some_and(|t| t.occupant(id) == Some(id));
                        if !ok {
                            bad(me, format!("not seated in the tree of {w}"));
                        }
                    }
                    for &(a, b) in &s.helping {
                        let ok = a < b
                            && self.tree(a).is_some_and(|t| t.occupant(b) == Some(id))
                            && self.tree(b).is_some_and(|t| t.occupant(a) == Some(id));
                        if !ok {
                            bad(me, format!("helper entry ({a}, {b}) not reflected in both trees"));
                        }
                    }
                }
                SizeClass::Large => {
                    if !(s.direct.is_empty() && s.trees.is_empty() && s.helping.is_empty()) {
                        bad(me, "large node still has small-node table entries".into());
                    }
                    let Some(tree) = self.trees[i].as_ref() else {
                        bad(me, "large node without a tree".into());
                        continue;
                    };
                    if let Err(e) = tree.check_invariants() {
                        bad(me, e);
                    }
                    if tree.len() != s.working_set.len() {
                        bad(me, format!("tree has {} entries, working set {}", tree.len(), s.working_set.len()));
                    }
                    for e in tree.entries() {
                        if !s.working_set.contains(&e.key) {
                            bad(me, format!("tree key {} outside the working set", e.key));
                            continue;
                        }
                        let Some(k) = self.node(e.key) else { continue };
                        let ok = match k.class {
                            SizeClass::Small => e.occupant == e.key && k.trees.contains(&id),
                            SizeClass::Large => self
                                .node(e.occupant)
                                .is_some_and(|x| x.class == SizeClass::Small && x.helping.contains(&ordered(id, e.key))),
                        };
                        if !ok {
                            bad(me, format!("entry {}:{} has no matching table entry", e.key, e.occupant));
                        }
                    }
                    for key in tree.virtual_roots() {
                        if let Some(o) = tree.occupant(key) {
                            if let Some(&oi) = self.index.get(&o) {
                                vroot_count[oi] += 1;
                            }
                        }
                    }
                    for (a, b) in tree.physical_links() {
                        *expected.entry((a, b)).or_insert(0) += 1;
                    }
                }
            }
        }
        if ws_total != self.total_ws {
            bad(None, format!("total_ws is {} but working sets sum to {ws_total}", self.total_ws));
        }
        if self.total_ws > p.reset_threshold {
            bad(None, format!("total_ws {} exceeds reset threshold {}", self.total_ws, p.reset_threshold));
        }
        for (i, s) in self.nodes.iter().enumerate() {
            if vroot_count[i] != s.vroot_slots {
                bad(Some(s.id), format!("holds {} virtual-root links, tables say {}", vroot_count[i], s.vroot_slots));
            }
        }
        let mut mismatched: Vec<_> = expected
            .iter()
            .filter(|(k, c)| self.edges.get(k) != Some(c))
            .map(|(&k, &c)| (k, c, self.edges.get(&k).copied().unwrap_or(0)))
            .chain(
                self.edges
                    .iter()
                    .filter(|(k, _)| !expected.contains_key(k))
                    .map(|(&k, &c)| (k, 0, c)),
            )
            .collect();
        mismatched.sort_unstable();
        for ((a, b), want, have) in mismatched {
            bad(Some(a), format!("link {a}-{b}: structure implies {want}, edge set holds {have}"));
        }
        let mut deg = vec![0u32; self.ids.len()];
        for (&(a, b), &c) in &self.edges {
            for x in [a, b] {
                match self.index.get(&x) {
                    Some(&xi) => deg[xi] += c,
                    None => bad(Some(x), "edge endpoint outside the network".into()),
                }
            }
        }
        for (i, &dg) in deg.iter().enumerate() {
            if dg != self.degree[i] {
                bad(Some(self.ids[i]), format!("degree counter {} but edge set gives {dg}", self.degree[i]));
            }
        }
        out
    }

    /// Serializable picture of the whole network.
    pub fn snapshot(&self) -> NetworkSnapshot {
        let mut edges: Vec<(NodeId, NodeId, u32)> = self.edges.iter().map(|(&(a, b), &c)| (a, b, c)).collect();
        edges.sort_unstable();
        let mut size_classes = BTreeMap::new();
        let mut trees = BTreeMap::new();
        let mut tables = BTreeMap::new();
        for (i, s) in self.nodes.iter().enumerate() {
            size_classes.insert(s.id, s.class);
            if let Some(t) = &self.trees[i] {
                trees.insert(s.id, TreeSnapshot { dump: t.dump(), virtual_roots: t.virtual_roots().collect() });
            }
            if !(s.working_set.is_empty() && s.direct.is_empty() && s.trees.is_empty() && s.helping.is_empty()) {
                tables.insert(
                    s.id,
                    TableSnapshot {
                        working_set: s.working_set.iter().copied().collect(),
                        direct: s.direct.iter().copied().collect(),
                        trees: s.trees.iter().copied().collect(),
                        helping: s.helping.iter().copied().collect(),
                    },
                );
            }
        }
        NetworkSnapshot {
            params: self.params.clone(),
            size_classes,
            edges,
            trees,
            tables,
            total_ws: self.total_ws,
            reset_count: self.reset_count,
            exhaustion_resets: self.exhaustion_resets,
        }
    }

    /// Rebuilds a network from a snapshot as recorded, without repairing it.
    /// The edge set is taken verbatim so [`Network::validate_invariants`] can
    /// catch a snapshot whose links disagree with its tables.
    pub fn from_snapshot(snap: &NetworkSnapshot) -> Result<Self, NetError> {
        let ids: Vec<NodeId> = snap.size_classes.keys().copied().collect();
        let mut net = Network::with_nodes(snap.params.clone(), &ids)?;
        let known = |id: &NodeId| -> Result<usize, NetError> {
            net.index.get(id).copied().ok_or_else(|| NetError::Snapshot(format!("unknown node {id}")))
        };
        for (&id, &class) in &snap.size_classes {
            net.nodes[known(&id)?].class = class;
        }
        for (&id, t) in &snap.tables {
            let i = known(&id)?;
            for x in t.working_set.iter().chain(&t.direct).chain(&t.trees) {
                known(x)?;
            }
            let s = &mut net.nodes[i];
            s.working_set = t.working_set.iter().copied().collect();
            s.direct = t.direct.iter().copied().collect();
            s.trees = t.trees.iter().copied().collect();
            s.helping = t.helping.iter().copied().collect();
        }
        for (&owner, t) in &snap.trees {
            let i = known(&owner)?;
            let tree = EgoTree::from_dump(owner, &t.dump, &t.virtual_roots, net.params.virtual_root_capacity)?
                .with_accounting(net.params.rotation_accounting)
                .with_policy(net.params.virtual_root_policy)
                .with_events();
            for e in tree.entries() {
                known(&e.key)?;
                let oi = known(&e.occupant)?;
                if tree.is_virtual_root(e.key) {
                    net.nodes[oi].vroot_slots += 1;
                }
            }
            net.trees[i] = Some(tree);
        }
        for &(a, b, c) in &snap.edges {
            let (ai, bi) = (known(&a)?, known(&b)?);
            if a == b || c == 0 {
                return Err(NetError::Snapshot(format!("bad edge {a}-{b} x{c}")));
            }
            *net.edges.entry(ordered(a, b)).or_insert(0) += c;
            net.degree[ai] += c;
            net.degree[bi] += c;
        }
        net.total_ws = snap.total_ws;
        net.reset_count = snap.reset_count;
        net.exhaustion_resets = snap.exhaustion_resets;
        net.helper_pool.clear();
        for i in 0..net.ids.len() {
            net.pool_join(i);
        }
        Ok(net)
    }
}

fn missing_tree(owner: NodeId) -> NetError {
    NetError::Internal(format!("large node {owner} has no tree"))
}

fn ordered(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeSnapshot {
    pub dump: String,
    /// Most recently used first.
    pub virtual_roots: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSnapshot {
    pub working_set: Vec<NodeId>,
    pub direct: Vec<NodeId>,
    pub trees: Vec<NodeId>,
    pub helping: Vec<(NodeId, NodeId)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSnapshot {
    pub params: NetParams,
    pub size_classes: BTreeMap<NodeId, SizeClass>,
    /// `(a, b, multiplicity)` with `a < b`.
    pub edges: Vec<(NodeId, NodeId, u32)>,
    pub trees: BTreeMap<NodeId, TreeSnapshot>,
    pub tables: BTreeMap<NodeId, TableSnapshot>,
    pub total_ws: usize,
    pub reset_count: u64,
    pub exhaustion_resets: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(v: u64) -> NodeId {
        NodeId(v)
    }

    fn req(u: u64, v: u64) -> Request {
        Request::new(u, v).unwrap()
    }

    fn net(n: usize, c: f64) -> Network {
        let mut net = Network::new(NetParams::new(n, c).unwrap()).unwrap();
        net.set_debug_sweeps(true);
        net
    }

    #[test]
    fn params_examples() {
        let p = NetParams::new(8, 1.0).unwrap();
        assert_eq!((p.theta, p.delta_cap, p.reset_threshold, p.d), (4, 24, 16, 3));
        let p = NetParams::new(2, 0.5).unwrap();
        assert_eq!((p.theta, p.delta_cap), (2, 12));
        assert!(NetParams::new(1, 1.0).is_err());
        assert!(NetParams::new(4, 0.0).is_err());
        let net = Network::new(NetParams::new(8, 1.0).unwrap()).unwrap();
        assert_eq!(net.edge_count(), 0);
        assert!(net.validate_invariants().is_empty());
    }

    #[test]
    fn ceil_log2_values() {
        assert_eq!([2, 3, 4, 5, 1024, 1025].map(ceil_log2), [1, 2, 2, 3, 10, 11]);
    }

    #[test]
    fn fresh_pair_then_repeat() {
        let mut net = net(8, 1.0);
        let d = net.params().d;
        let o = net.serve_request(&req(1, 2)).unwrap();
        assert_eq!((o.hops, o.adjust_cost, o.coord_cost), (1, 1, 2 * d));
        assert_eq!(o.path, vec![id(1), id(2)]);
        assert!(o.path_valid);
        let o = net.serve_request(&req(1, 2)).unwrap();
        assert_eq!((o.hops, o.adjust_cost, o.coord_cost), (1, 0, 0));
        assert!(o.path_valid);
        let o = net.serve_request(&req(2, 1)).unwrap();
        assert_eq!((o.hops, o.adjust_cost, o.coord_cost), (1, 0, 0));
    }

    #[test]
    fn unknown_node_is_rejected() {
        let mut net = net(8, 1.0);
        assert_eq!(net.serve_request(&req(1, 99)), Err(NetError::UnknownNode(id(99))));
    }

    /// theta = 4 at c = 1: the fifth partner promotes node 0.
    #[test]
    fn fifth_partner_makes_large() {
        let mut net = net(16, 1.0);
        for v in 1..=4 {
            net.serve_request(&req(0, v)).unwrap();
        }
        assert_eq!(net.node(id(0)).unwrap().class(), SizeClass::Small);
        assert_eq!(net.node(id(0)).unwrap().direct().len(), 4);
        net.serve_request(&req(0, 5)).unwrap();
        let s = net.node(id(0)).unwrap();
        assert_eq!(s.class(), SizeClass::Large);
        assert!(s.direct().is_empty());
        let t = net.tree(id(0)).unwrap();
        assert_eq!(t.len(), 5);
        for v in 1..=5 {
            assert_eq!(t.occupant(id(v)), Some(id(v)));
            assert!(net.node(id(v)).unwrap().trees().contains(&id(0)));
            assert_eq!(net.link_count(id(0), id(v)) > 0, t.root().unwrap().key == id(v) || t.is_virtual_root(id(v)));
        }
    }

    #[test]
    fn large_source_route_depth() {
        let mut net = net(16, 1.0);
        for v in 1..=8 {
            net.serve_request(&req(0, v)).unwrap();
        }
        let t = net.tree(id(0)).unwrap().clone();
        let (key, depth) = (1..=8)
            .map(|v| (id(v), t.depth(id(v)).unwrap()))
            .filter(|(k, _)| !t.is_virtual_root(*k))
            .max_by_key(|x| x.1)
            .unwrap();
        let o = net.serve_request(&Request::new(id(0), key).unwrap()).unwrap();
        assert_eq!(o.hops, depth + 1);
        assert_eq!(net.tree(id(0)).unwrap().root().unwrap().key, key);
        assert!(o.adjust_cost >= depth / 2);
    }

    #[test]
    fn large_pair_uses_lowest_helper() {
        let mut net = net(32, 1.0);
        for v in 10..15 {
            net.serve_request(&req(0, v)).unwrap();
            net.serve_request(&req(1, v + 10)).unwrap();
        }
        assert_eq!(net.find_helper(id(0), id(1)).unwrap(), id(2));
        let o = net.serve_request(&req(0, 1)).unwrap();
        assert!(o.path_valid);
        assert_eq!(net.node(id(2)).unwrap().helping().iter().collect::<Vec<_>>(), vec![&(id(0), id(1))]);
        assert_eq!(net.tree(id(0)).unwrap().occupant(id(1)), Some(id(2)));
        assert_eq!(net.tree(id(1)).unwrap().occupant(id(0)), Some(id(2)));
        assert_eq!(o.path.first(), Some(&id(0)));
        assert_eq!(o.path.last(), Some(&id(1)));
        assert!(o.path.contains(&id(2)));
        let again = net.serve_request(&req(1, 0)).unwrap();
        assert!(again.path_valid);
        assert_eq!(again.coord_cost, 0);
    }

    #[test]
    fn helper_skips_full_candidates() {
        let mut net = net(32, 0.5);
        let cap = net.params().helper_cap;
        assert_eq!(cap, 1);
        // theta = 2; three partners make a node large.
        for (u, vs) in [(0, [10, 11, 12]), (1, [13, 14, 15]), (3, [16, 17, 18])] {
            for v in vs {
                net.serve_request(&req(u, v)).unwrap();
            }
        }
        net.serve_request(&req(0, 1)).unwrap();
        assert_eq!(net.helper_load(id(2)), Some(1));
        assert_eq!(net.find_helper(id(0), id(3)).unwrap(), id(4));
        net.serve_request(&req(0, 3)).unwrap();
        assert_eq!(net.helper_load(id(4)), Some(1));
    }

    #[test]
    fn helper_duties_move_when_it_grows() {
        let mut net = net(32, 0.5);
        for (u, vs) in [(0, [10, 11, 12]), (1, [13, 14, 15])] {
            for v in vs {
                net.serve_request(&req(u, v)).unwrap();
            }
        }
        net.serve_request(&req(0, 1)).unwrap();
        assert_eq!(net.helper_load(id(2)), Some(1));
        let loads_before: usize = net.nodes().iter().map(|&x| net.helper_load(x).unwrap()).sum();
        for v in [20, 21, 22] {
            net.serve_request(&req(2, v)).unwrap();
        }
        assert_eq!(net.node(id(2)).unwrap().class(), SizeClass::Large);
        assert_eq!(net.helper_load(id(2)), Some(0));
        let loads_after: usize = net.nodes().iter().map(|&x| net.helper_load(x).unwrap()).sum();
        assert_eq!(loads_before, loads_after);
        let o = net.serve_request(&req(0, 1)).unwrap();
        assert!(o.path_valid);
        assert_eq!(o.coord_cost, 0);
    }

    #[test]
    fn large_partner_seat_goes_to_helper() {
        let mut net = net(32, 0.5);
        for v in [10, 11, 12] {
            net.serve_request(&req(0, v)).unwrap();
        }
        // node 5 sits in tree(0) as itself while small
        net.serve_request(&req(5, 0)).unwrap();
        assert!(net.node(id(5)).unwrap().trees().contains(&id(0)));
        for v in [20, 21] {
            net.serve_request(&req(5, v)).unwrap();
        }
        assert_eq!(net.node(id(5)).unwrap().class(), SizeClass::Large);
        let occ = net.tree(id(0)).unwrap().occupant(id(5)).unwrap();
        assert_ne!(occ, id(5));
        assert_eq!(net.tree(id(5)).unwrap().occupant(id(0)), Some(occ));
        assert!(net.node(occ).unwrap().helping().contains(&(id(0), id(5))));
    }

    #[test]
    fn helper_gives_up_relay_for_own_seat() {
        let mut net = net(32, 0.5);
        for (u, vs) in [(0, [10, 11, 12]), (1, [13, 14, 15])] {
            for v in vs {
                net.serve_request(&req(u, v)).unwrap();
            }
        }
        net.serve_request(&req(0, 1)).unwrap();
        assert_eq!(net.helper_load(id(2)), Some(1));
        net.serve_request(&req(2, 0)).unwrap();
        assert_eq!(net.helper_load(id(2)), Some(0));
        assert_eq!(net.tree(id(0)).unwrap().occupant(id(2)), Some(id(2)));
        assert_ne!(net.tree(id(0)).unwrap().occupant(id(1)), Some(id(2)));
    }

    #[test]
    fn reset_fires_at_threshold() {
        // n = 8, theta = 4: threshold 16 = eight partnerships.
        let mut net = net(8, 1.0);
        let pairs = [(0, 1), (2, 3), (4, 5), (6, 7), (0, 2), (1, 3), (4, 6), (5, 7)];
        for (u, v) in pairs {
            assert!(!net.serve_request(&req(u, v)).unwrap().reset_fired);
        }
        assert_eq!(net.total_ws(), 16);
        let o = net.serve_request(&req(0, 3)).unwrap();
        assert!(o.reset_fired);
        assert_eq!(o.reset_cost, 8);
        assert_eq!(net.reset_count(), 1);
        assert_eq!(net.total_ws(), 2);
        assert_eq!(net.edge_count(), 1);
        assert_eq!(o.hops, 1);
    }

    #[test]
    fn reset_clears_everything() {
        let mut net = net(16, 1.0);
        for v in 1..=6 {
            net.serve_request(&req(0, v)).unwrap();
        }
        assert_eq!(net.reset(), 16);
        assert_eq!(net.edge_count(), 0);
        assert!(net.nodes().iter().all(|&x| net.node(x).unwrap().class() == SizeClass::Small));
        assert!(net.validate_invariants().is_empty());
        assert_eq!(net.reset(), 16);
        assert_eq!(net.reset_count(), 2);
    }

    #[test]
    fn add_route_is_idempotent() {
        let mut net = net(8, 1.0);
        let c = net.add_route(id(1), id(2)).unwrap();
        assert_eq!(c.link_changes, 1);
        assert_eq!(net.add_route(id(1), id(2)).unwrap(), CoordinatorCost::default());
        assert!(net.make_large(id(1)).is_ok());
        assert_eq!(net.make_large(id(1)), Err(NetError::AlreadyLarge(id(1))));
    }

    #[test]
    fn snapshot_round_trip_and_corruption() {
        let mut net = net(32, 0.5);
        for (u, vs) in [(0, [10, 11, 12]), (1, [13, 14, 15])] {
            for v in vs {
                net.serve_request(&req(u, v)).unwrap();
            }
        }
        net.serve_request(&req(0, 1)).unwrap();
        let snap = net.snapshot();
        let json = serde_json::to_string(&snap).unwrap();
        let back: NetworkSnapshot = serde_json::from_str(&json).unwrap();
        assert_eq!(back, snap);
        let rebuilt = Network::from_snapshot(&back).unwrap();
        assert!(rebuilt.validate_invariants().is_empty());
        assert_eq!(rebuilt.snapshot(), snap);

        let mut broken = snap.clone();
        broken.edges.push((id(7), id(9), 1));
        let v = Network::from_snapshot(&broken).unwrap().validate_invariants();
        assert!(v.iter().any(|x| x.node == Some(id(7))), "{v:?}");
    }

    #[test]
    fn unrelated_small_nodes_stay_untouched() {
        let mut net = net(16, 1.0);
        net.serve_request(&req(3, 4)).unwrap();
        assert_eq!(net.degree(id(5)), Some(0));
        assert_eq!(net.degree(id(3)), Some(1));
    }
}
