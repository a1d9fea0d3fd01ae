//! Ego-trees: one node's binary search tree network over its working set.
//!
//! The tree owner is not an entry of its own tree. It links to the current
//! root and to a bounded set of *virtual roots*, recently accessed entries
//! kept at distance one. Every entry has a `key` (the partner it stands for)
//! and an `occupant` (the physical node sitting in that position). The two
//! differ only when a helper relays for a large partner.
//!
//! Entries live in an arena and are addressed by slot index. Structural
//! changes emit [`TreeEvent`]s describing physical link additions and
//! removals, so an owning network can keep its edge multiset in sync without
//! rescanning trees.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entropy::FreqDist;
use crate::trace::NodeId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreeError {
    #[error("key {0} is not in the tree")]
    KeyAbsent(NodeId),
    #[error("key {0} is already in the tree")]
    DuplicateKey(NodeId),
    #[error("node {0} owns this tree and cannot occupy an entry of it")]
    OccupantIsOwner(NodeId),
    #[error("tree is fixed; structural updates are disabled")]
    Fixed,
    #[error("cannot build a tree from an empty distribution")]
    EmptyDistribution,
    #[error("malformed tree dump at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
}

/// How rotations are charged as link changes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationAccounting {
    /// One link change per rotation.
    #[default]
    Unit,
    /// Three link removals plus three additions per rotation.
    Raw,
}

impl RotationAccounting {
    pub fn per_rotation(self) -> u64 {
        match self {
            RotationAccounting::Unit => 1,
            RotationAccounting::Raw => 6,
        }
    }
}

/// Replacement rule for the virtual-root set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VirtualRootPolicy {
    /// A hit refreshes the entry; the least recently used one is evicted.
    #[default]
    Lru,
    /// Entries keep their admission order; the oldest one is evicted.
    Fifo,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeCost {
    pub hops: u64,
    pub link_changes: u64,
    pub rotations: u64,
}

impl std::ops::AddAssign for TreeCost {
    fn add_assign(&mut self, rhs: TreeCost) {
        self.hops += rhs.hops;
        self.link_changes += rhs.link_changes;
        self.rotations += rhs.rotations;
    }
}

/// Physical side effects of a tree operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TreeEvent {
    /// An undirected link between two physical nodes appeared or vanished.
    Link { added: bool, a: NodeId, b: NodeId },
    /// `occupant` gained or lost a virtual-root port.
    VirtualRoot { added: bool, occupant: NodeId },
}

/// A position in the tree as seen from outside.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeEntry {
    pub key: NodeId,
    pub occupant: NodeId,
}

/// A route through the tree: occupants visited and links traversed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Route {
    pub path: Vec<NodeId>,
    pub hops: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RouteDown {
    /// `path` runs from the first entry reached (root or virtual root) to the target.
    Hit { entry: TreeEntry, path: Vec<NodeId>, hops: u64 },
    /// The search fell off below `anchor` (the entry a new key would hang from).
    Miss { anchor: Option<TreeEntry>, path: Vec<NodeId>, hops: u64 },
}

impl RouteDown {
    pub fn hops(&self) -> u64 {
        match self {
            RouteDown::Hit { hops, .. } | RouteDown::Miss { hops, .. } => *hops,
        }
    }
}

#[derive(Clone, Debug)]
struct Slot {
    key: NodeId,
    occupant: NodeId,
    parent: Option<usize>,
    left: Option<usize>,
    right: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct EgoTree {
    owner: NodeId,
    slots: Vec<Slot>,
    free: Vec<usize>,
    index: FxHashMap<NodeId, usize>,
    root: Option<usize>,
    virtual_roots: VecDeque<NodeId>,
    capacity: usize,
    policy: VirtualRootPolicy,
    accounting: RotationAccounting,
    fixed: bool,
    record: bool,
    events: Vec<TreeEvent>,
}

impl EgoTree {
    /// Empty self-adjusting tree with `virtual_root_capacity` virtual roots.
    pub fn new(owner: NodeId, virtual_root_capacity: usize) -> Self {
        EgoTree {
            owner,
            slots: Vec::new(),
            free: Vec::new(),
            index: FxHashMap::default(),
            root: None,
            virtual_roots: VecDeque::new(),
            capacity: virtual_root_capacity,
            policy: VirtualRootPolicy::Lru,
            accounting: RotationAccounting::Unit,
            fixed: false,
            record: false,
            events: Vec::new(),
        }
    }

    pub fn with_accounting(mut self, accounting: RotationAccounting) -> Self {
        self.accounting = accounting;
        self
    }

    pub fn with_policy(mut self, policy: VirtualRootPolicy) -> Self {
        self.policy = policy;
        self
    }

    /// Enables [`TreeEvent`] recording; drain with [`EgoTree::drain_events`].
    pub fn with_events(mut self) -> Self {
        self.record = true;
        self
    }

    pub fn drain_events(&mut self) -> std::vec::Drain<'_, TreeEvent> {
        self.events.drain(..)
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn is_fixed(&self) -> bool {
        self.fixed
    }

    pub fn contains(&self, key: NodeId) -> bool {
        self.index.contains_key(&key)
    }

    pub fn occupant(&self, key: NodeId) -> Option<NodeId> {
        self.index.get(&key).map(|&i| self.slots[i].occupant)
    }

    pub fn root(&self) -> Option<TreeEntry> {
        self.root.map(|i| self.entry(i))
    }

    pub fn virtual_roots(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.virtual_roots.iter().copied()
    }

    pub fn virtual_root_capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_virtual_root(&self, key: NodeId) -> bool {
        self.virtual_roots.contains(&key)
    }

    /// Depth of `key` (root has depth 0).
    pub fn depth(&self, key: NodeId) -> Option<u64> {
        let mut i = *self.index.get(&key)?;
        let mut d = 0;
        while let Some(p) = self.slots[i].parent {
            i = p;
            d += 1;
        }
        Some(d)
    }

    /// Entries in key order.
    pub fn entries(&self) -> Vec<TreeEntry> {
        let mut out = Vec::with_capacity(self.len());
        let mut stack = Vec::new();
        let mut cur = self.root;
        while cur.is_some() || !stack.is_empty() {
            while let Some(i) = cur {
                stack.push(i);
                cur = self.slots[i].left;
            }
            let i = stack.pop().expect("stack is nonempty");
            out.push(self.entry(i));
            cur = self.slots[i].right;
        }
        out
    }

    /// Number of physical links incident to the entry for `key`.
    pub fn entry_degree(&self, key: NodeId) -> Option<u64> {
        let i = *self.index.get(&key)?;
        Some(self.incident(i).len() as u64)
    }

    /// Every physical link the tree currently implies, as unordered occupant pairs.
    pub fn physical_links(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::with_capacity(self.len() + self.virtual_roots.len());
        for &i in self.index.values() {
            if let Some(p) = self.slots[i].parent {
                out.push(ordered(self.slots[p].occupant, self.slots[i].occupant));
            }
        }
        for key in self.owner_linked_keys() {
            out.push(ordered(self.owner, self.occupant(key).expect("linked key is present")));
        }
        out
    }

    fn owner_linked_keys(&self) -> Vec<NodeId> {
        let mut keys: Vec<NodeId> = self.virtual_roots.iter().copied().collect();
        if let Some(r) = self.root {
            let rk = self.slots[r].key;
            if !keys.contains(&rk) {
                keys.push(rk);
            }
        }
        keys
    }

    fn entry(&self, i: usize) -> TreeEntry {
        TreeEntry { key: self.slots[i].key, occupant: self.slots[i].occupant }
    }

    fn emit_link(&mut self, added: bool, a: NodeId, b: NodeId) {
        if self.record {
            self.events.push(TreeEvent::Link { added, a, b });
        }
    }

    fn emit_vroot(&mut self, added: bool, occupant: NodeId) {
        if self.record {
            self.events.push(TreeEvent::VirtualRoot { added, occupant });
        }
    }

    /// Physical neighbours of slot `i`: parent (or owner), children, and the
    /// owner again if `i` is a non-root virtual root.
    fn incident(&self, i: usize) -> Vec<NodeId> {
        let s = &self.slots[i];
        let mut out = Vec::with_capacity(4);
        match s.parent {
            Some(p) => out.push(self.slots[p].occupant),
            None => out.push(self.owner),
        }
        out.extend(s.left.map(|c| self.slots[c].occupant));
        out.extend(s.right.map(|c| self.slots[c].occupant));
        if s.parent.is_some() && self.virtual_roots.contains(&s.key) {
            out.push(self.owner);
        }
        out
    }

    fn alloc(&mut self, key: NodeId, occupant: NodeId) -> usize {
        let slot = Slot { key, occupant, parent: None, left: None, right: None };
        let i = match self.free.pop() {
            Some(i) => {
                self.slots[i] = slot;
                i
            }
            None => {
                self.slots.push(slot);
                self.slots.len() - 1
            }
        };
        self.index.insert(key, i);
        i
    }

    /// Rotates `x` above its parent.
    fn rotate(&mut self, x: usize) {
        let p = self.slots[x].parent.expect("rotated entry has a parent");
        let g = self.slots[p].parent;
        let x_is_left = self.slots[p].left == Some(x);
        let inner = if x_is_left {
            let b = self.slots[x].right;
            self.slots[p].left = b;
            self.slots[x].right = Some(p);
            b
        } else {
            let b = self.slots[x].left;
            self.slots[p].right = b;
            self.slots[x].left = Some(p);
            b
        };
        if let Some(b) = inner {
            self.slots[b].parent = Some(p);
        }
        self.slots[p].parent = Some(x);
        self.slots[x].parent = g;
        let (ox, op) = (self.slots[x].occupant, self.slots[p].occupant);
        match g {
            Some(g) => {
                if self.slots[g].left == Some(p) {
                    self.slots[g].left = Some(x);
                } else {
                    self.slots[g].right = Some(x);
                }
                let og = self.slots[g].occupant;
                self.emit_link(false, og, op);
                self.emit_link(true, og, ox);
            }
            None => {
                self.root = Some(x);
                let owner = self.owner;
                if !self.virtual_roots.contains(&self.slots[p].key) {
                    self.emit_link(false, owner, op);
                }
                if !self.virtual_roots.contains(&self.slots[x].key) {
                    self.emit_link(true, owner, ox);
                }
            }
        }
        if let Some(b) = inner {
            let ob = self.slots[b].occupant;
            self.emit_link(false, ox, ob);
            self.emit_link(true, op, ob);
        }
    }

    /// Bottom-up splay of slot `x` to the root; returns the rotation count.
    fn splay(&mut self, x: usize) -> u64 {
        let mut rotations = 0;
        while let Some(p) = self.slots[x].parent {
            match self.slots[p].parent {
                None => {
                    self.rotate(x);
                    rotations += 1;
                }
                Some(g) => {
                    let x_left = self.slots[p].left == Some(x);
                    let p_left = self.slots[g].left == Some(p);
                    if x_left == p_left {
                        self.rotate(p);
                    } else {
                        self.rotate(x);
                    }
                    self.rotate(x);
                    rotations += 2;
                }
            }
        }
        rotations
    }

    fn check_occupant(&self, occupant: NodeId) -> Result<(), TreeError> {
        if occupant == self.owner {
            return Err(TreeError::OccupantIsOwner(occupant));
        }
        Ok(())
    }

    /// Hangs a new entry at its BST leaf position without splaying it.
    /// Costs one link change (the new leaf's link).
    pub fn attach_leaf(&mut self, key: NodeId, occupant: NodeId) -> Result<TreeCost, TreeError> {
        if self.fixed {
            return Err(TreeError::Fixed);
        }
        self.check_occupant(occupant)?;
        if self.index.contains_key(&key) {
            return Err(TreeError::DuplicateKey(key));
        }
        let mut parent = None;
        let mut cur = self.root;
        while let Some(i) = cur {
            parent = Some(i);
            cur = if key < self.slots[i].key { self.slots[i].left } else { self.slots[i].right };
        }
        let x = self.alloc(key, occupant);
        self.slots[x].parent = parent;
        match parent {
            None => {
                self.root = Some(x);
                let owner = self.owner;
                self.emit_link(true, owner, occupant);
            }
            Some(p) => {
                if key < self.slots[p].key {
                    self.slots[p].left = Some(x);
                } else {
                    self.slots[p].right = Some(x);
                }
                let op = self.slots[p].occupant;
                self.emit_link(true, op, occupant);
            }
        }
        Ok(TreeCost { hops: 0, link_changes: 1, rotations: 0 })
    }

    /// Splay insertion: attach as a leaf, then splay the new entry to the root.
    pub fn insert(&mut self, key: NodeId, occupant: NodeId) -> Result<TreeCost, TreeError> {
        let mut cost = self.attach_leaf(key, occupant)?;
        let x = self.index[&key];
        let r = self.splay(x);
        cost.rotations += r;
        cost.link_changes += r * self.accounting.per_rotation();
        Ok(cost)
    }

    /// Searches from the owner towards `key`, one comparison per entry.
    pub fn route_down(&self, key: NodeId) -> RouteDown {
        if let Some(&i) = self.index.get(&key) {
            if self.virtual_roots.contains(&key) {
                return RouteDown::Hit { entry: self.entry(i), path: vec![self.slots[i].occupant], hops: 1 };
            }
        }
        let mut path = Vec::new();
        let mut cur = self.root;
        let mut last = None;
        while let Some(i) = cur {
            path.push(self.slots[i].occupant);
            last = Some(i);
            let k = self.slots[i].key;
            if key == k {
                let hops = path.len() as u64;
                return RouteDown::Hit { entry: self.entry(i), path, hops };
            }
            cur = if key < k { self.slots[i].left } else { self.slots[i].right };
        }
        let hops = path.len() as u64;
        RouteDown::Miss { anchor: last.map(|i| self.entry(i)), path, hops }
    }

    /// Walks parent links from `from_key` up to the root, then to the owner.
    pub fn route_up(&self, from_key: NodeId) -> Result<Route, TreeError> {
        let &i = self.index.get(&from_key).ok_or(TreeError::KeyAbsent(from_key))?;
        if self.virtual_roots.contains(&from_key) {
            return Ok(Route { path: vec![self.slots[i].occupant], hops: 1 });
        }
        let mut path = vec![self.slots[i].occupant];
        let mut cur = i;
        while let Some(p) = self.slots[cur].parent {
            path.push(self.slots[p].occupant);
            cur = p;
        }
        let hops = path.len() as u64;
        Ok(Route { path, hops })
    }

    /// Splays `key` to the root and admits it to the virtual roots.
    pub fn adjust(&mut self, key: NodeId) -> Result<TreeCost, TreeError> {
        self.adjust_with(key, true)
    }

    /// Like [`EgoTree::adjust`], but a key that is not yet a virtual root is
    /// only admitted if `admit` holds (the occupant has a free port).
    pub fn adjust_with(&mut self, key: NodeId, admit: bool) -> Result<TreeCost, TreeError> {
        if self.fixed {
            return Err(TreeError::Fixed);
        }
        let &x = self.index.get(&key).ok_or(TreeError::KeyAbsent(key))?;
        let rotations = self.splay(x);
        let mut cost = TreeCost {
            hops: 0,
            link_changes: rotations * self.accounting.per_rotation(),
            rotations,
        };
        if self.capacity == 0 {
            return Ok(cost);
        }
        if let Some(pos) = self.virtual_roots.iter().position(|&k| k == key) {
            if self.policy == VirtualRootPolicy::Lru && pos != 0 {
                self.virtual_roots.remove(pos);
                self.virtual_roots.push_front(key);
            }
            return Ok(cost);
        }
        if !admit {
            return Ok(cost);
        }
        self.virtual_roots.push_front(key);
        let occ = self.slots[x].occupant;
        self.emit_vroot(true, occ);
        cost.link_changes += 1;
        if self.virtual_roots.len() > self.capacity {
            let evicted = self.virtual_roots.pop_back().expect("over capacity");
            self.drop_virtual_root_link(evicted);
            cost.link_changes += 1;
        }
        Ok(cost)
    }

    fn drop_virtual_root_link(&mut self, key: NodeId) {
        let i = self.index[&key];
        let occ = self.slots[i].occupant;
        self.emit_vroot(false, occ);
        if self.root != Some(i) {
            let owner = self.owner;
            self.emit_link(false, owner, occ);
        }
    }

    /// Removes `key` from the virtual roots (one link change if it was there).
    pub fn evict_virtual_root(&mut self, key: NodeId) -> TreeCost {
        match self.virtual_roots.iter().position(|&k| k == key) {
            Some(pos) => {
                self.virtual_roots.remove(pos);
                self.drop_virtual_root_link(key);
                TreeCost { hops: 0, link_changes: 1, rotations: 0 }
            }
            None => TreeCost::default(),
        }
    }

    /// Splay deletion: splay `key` to the root, drop it, and join its subtrees
    /// under the maximum of the left subtree.
    pub fn remove(&mut self, key: NodeId) -> Result<TreeCost, TreeError> {
        if self.fixed {
            return Err(TreeError::Fixed);
        }
        let &x = self.index.get(&key).ok_or(TreeError::KeyAbsent(key))?;
        let mut rotations = self.splay(x);
        let mut links = 0;
        if let Some(pos) = self.virtual_roots.iter().position(|&k| k == key) {
            self.virtual_roots.remove(pos);
            let occ = self.slots[x].occupant;
            self.emit_vroot(false, occ);
        }
        let (ox, owner) = (self.slots[x].occupant, self.owner);
        self.emit_link(false, owner, ox);
        links += 1;
        let (l, r) = (self.slots[x].left, self.slots[x].right);
        for c in [l, r].into_iter().flatten() {
            let oc = self.slots[c].occupant;
            self.emit_link(false, ox, oc);
            self.slots[c].parent = None;
            links += 1;
        }
        self.index.remove(&key);
        self.free.push(x);
        self.root = None;
        let new_root = l.or(r);
        if let Some(nr) = new_root {
            self.root = Some(nr);
            let k = self.slots[nr].key;
            if !self.virtual_roots.contains(&k) {
                let o = self.slots[nr].occupant;
                self.emit_link(true, owner, o);
            }
            links += 1;
        }
        if let (Some(l), Some(r)) = (l, r) {
            let mut m = l;
            while let Some(next) = self.slots[m].right {
                m = next;
            }
            rotations += self.splay(m);
            self.slots[m].right = Some(r);
            self.slots[r].parent = Some(m);
            let (om, or) = (self.slots[m].occupant, self.slots[r].occupant);
            self.emit_link(true, om, or);
            links += 1;
        }
        Ok(TreeCost {
            hops: 0,
            link_changes: links + rotations * self.accounting.per_rotation(),
            rotations,
        })
    }

    /// Puts `new_occupant` in the position of `key`, rewiring every incident link.
    pub fn replace_occupant(&mut self, key: NodeId, new_occupant: NodeId) -> Result<TreeCost, TreeError> {
        let &i = self.index.get(&key).ok_or(TreeError::KeyAbsent(key))?;
        self.check_occupant(new_occupant)?;
        let old = self.slots[i].occupant;
        let neighbours = self.incident(i);
        for &nb in &neighbours {
            self.emit_link(false, nb, old);
            self.emit_link(true, nb, new_occupant);
        }
        if self.virtual_roots.contains(&key) {
            self.emit_vroot(false, old);
            self.emit_vroot(true, new_occupant);
        }
        self.slots[i].occupant = new_occupant;
        Ok(TreeCost { hops: 0, link_changes: neighbours.len() as u64, rotations: 0 })
    }

    /// Empties the tree, emitting removal events for every link.
    pub fn clear(&mut self) {
        if self.record {
            for (a, b) in self.physical_links() {
                self.emit_link(false, a, b);
            }
            let occs: Vec<NodeId> = self
                .virtual_roots
                .iter()
                .map(|k| self.occupant(*k).expect("virtual root is present"))
                .collect();
            for o in occs {
                self.emit_vroot(false, o);
            }
        }
        self.slots.clear();
        self.free.clear();
        self.index.clear();
        self.root = None;
        self.virtual_roots.clear();
    }

    /// Parenthesized in-order dump: `(left key:occupant right)`, empty
    /// subtrees omitted, e.g. `((1:1) 2:2 (3:3))`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        if let Some(r) = self.root {
            self.dump_rec(r, &mut out);
        }
        out
    }

    fn dump_rec(&self, i: usize, out: &mut String) {
        let s = &self.slots[i];
        out.push('(');
        if let Some(l) = s.left {
            self.dump_rec(l, out);
            out.push(' ');
        }
        let _ = write!(out, "{}:{}", s.key, s.occupant);
        if let Some(r) = s.right {
            out.push(' ');
            self.dump_rec(r, out);
        }
        out.push(')');
    }

    /// Rebuilds a tree from [`EgoTree::dump`] output plus its virtual roots
    /// (most recent first). BST order is not checked here; see
    /// [`EgoTree::check_invariants`].
    pub fn from_dump(
        owner: NodeId,
        dump: &str,
        virtual_roots: &[NodeId],
        capacity: usize,
    ) -> Result<Self, TreeError> {
        let mut tree = EgoTree::new(owner, capacity);
        let bytes = dump.as_bytes();
        let mut pos = 0;
        skip_ws(bytes, &mut pos);
        if pos < bytes.len() {
            let r = tree.parse_rec(bytes, &mut pos)?;
            tree.root = Some(r);
            skip_ws(bytes, &mut pos);
            if pos != bytes.len() {
                return Err(TreeError::Parse { pos, msg: "trailing input".into() });
            }
        }
        for &k in virtual_roots {
            if !tree.contains(k) {
                return Err(TreeError::KeyAbsent(k));
            }
            tree.virtual_roots.push_back(k);
        }
        Ok(tree)
    }

    fn parse_rec(&mut self, b: &[u8], pos: &mut usize) -> Result<usize, TreeError> {
        expect(b, pos, b'(')?;
        skip_ws(b, pos);
        let left = if b.get(*pos) == Some(&b'(') {
            let l = self.parse_rec(b, pos)?;
            skip_ws(b, pos);
            Some(l)
        } else {
            None
        };
        let key = NodeId(parse_u64(b, pos)?);
        expect(b, pos, b':')?;
        let occupant = NodeId(parse_u64(b, pos)?);
        skip_ws(b, pos);
        let right = if b.get(*pos) == Some(&b'(') {
            let r = self.parse_rec(b, pos)?;
            skip_ws(b, pos);
            Some(r)
        } else {
            None
        };
        expect(b, pos, b')')?;
        if self.index.contains_key(&key) {
            return Err(TreeError::DuplicateKey(key));
        }
        self.check_occupant(occupant)?;
        let i = self.alloc(key, occupant);
        self.slots[i].left = left;
        self.slots[i].right = right;
        for c in [left, right].into_iter().flatten() {
            self.slots[c].parent = Some(i);
        }
        Ok(i)
    }

    /// Full structural audit: BST order, parent/child symmetry, index
    /// consistency, virtual-root bounds and occupant rules.
    pub fn check_invariants(&self) -> Result<(), String> {
        let entries = self.entries();
        if entries.len() != self.index.len() {
            return Err(format!(
                "tree of {}: {} reachable entries but {} indexed",
                self.owner,
                entries.len(),
                self.index.len()
            ));
        }
        for w in entries.windows(2) {
            if w[0].key >= w[1].key {
                return Err(format!("tree of {}: keys {} and {} out of order", self.owner, w[0].key, w[1].key));
            }
        }
        if let Some(r) = self.root {
            if self.slots[r].parent.is_some() {
                return Err(format!("tree of {}: root has a parent", self.owner));
            }
        }
        let mut occupants = rustc_hash::FxHashSet::default();
        for (&key, &i) in &self.index {
            let s = &self.slots[i];
            if s.key != key {
                return Err(format!("tree of {}: index for {} points at {}", self.owner, key, s.key));
            }
            if s.occupant == self.owner {
                return Err(format!("tree of {}: owner occupies entry {}", self.owner, key));
            }
            if !occupants.insert(s.occupant) {
                return Err(format!("tree of {}: {} occupies two entries", self.owner, s.occupant));
            }
            for c in [s.left, s.right].into_iter().flatten() {
                if self.slots[c].parent != Some(i) {
                    return Err(format!("tree of {}: child of {} has a stale parent link", self.owner, key));
                }
            }
            if s.parent.is_none() && self.root != Some(i) {
                return Err(format!("tree of {}: entry {} is detached", self.owner, key));
            }
        }
        if self.virtual_roots.len() > self.capacity {
            return Err(format!(
                "tree of {}: {} virtual roots exceed capacity {}",
                self.owner,
                self.virtual_roots.len(),
                self.capacity
            ));
        }
        for k in &self.virtual_roots {
            if !self.contains(*k) {
                return Err(format!("tree of {}: virtual root {} is not an entry", self.owner, k));
            }
        }
        Ok(())
    }

    /// Fixed tree built by weight bisection over `dist` (occupant = key).
    pub fn build_static(owner: NodeId, dist: &FreqDist<NodeId>) -> Result<Self, TreeError> {
        let items: Vec<(NodeId, NodeId, f64)> = dist.iter().map(|(k, p)| (*k, *k, p)).collect();
        EgoTree::build_static_with(owner, &items)
    }

    /// Fixed tree over `(key, occupant, weight)` triples. Each subtree is
    /// rooted at the key minimizing `|weight(left) - weight(right)|`, ties
    /// going to the smaller key.
    pub fn build_static_with(owner: NodeId, items: &[(NodeId, NodeId, f64)]) -> Result<Self, TreeError> {
        if items.is_empty() {
            return Err(TreeError::EmptyDistribution);
        }
        let mut items = items.to_vec();
        items.sort_by_key(|it| it.0);
        if let Some(w) = items.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(TreeError::DuplicateKey(w[0].0));
        }
        let mut prefix = Vec::with_capacity(items.len() + 1);
        prefix.push(0.0);
        for it in &items {
            prefix.push(prefix.last().unwrap() + it.2);
        }
        let mut tree = EgoTree::new(owner, 0);
        for it in &items {
            tree.check_occupant(it.1)?;
            tree.alloc(it.0, it.1);
        }
        tree.root = tree.bisect(&items, &prefix, 0, items.len(), None);
        tree.fixed = true;
        Ok(tree)
    }

    fn bisect(
        &mut self,
        items: &[(NodeId, NodeId, f64)],
        prefix: &[f64],
        lo: usize,
        hi: usize,
        parent: Option<usize>,
    ) -> Option<usize> {
        if lo >= hi {
            return None;
        }
        let imbalance = |k: usize| (prefix[k] - prefix[lo]) - (prefix[hi] - prefix[k + 1]);
        // imbalance is nondecreasing in k; pick the first k with imbalance >= 0
        // and compare against its left neighbour.
        let (mut a, mut b) = (lo, hi);
        while a < b {
            let mid = a + (b - a) / 2;
            if imbalance(mid) < 0.0 {
                a = mid + 1;
            } else {
                b = mid;
            }
        }
        let mut best = a.min(hi - 1);
        if best > lo && imbalance(best - 1).abs() <= imbalance(best).abs() + 1e-12 {
            best -= 1;
        }
        let i = self.index[&items[best].0];
        self.slots[i].parent = parent;
        self.slots[i].left = self.bisect(items, prefix, lo, best, Some(i));
        self.slots[i].right = self.bisect(items, prefix, best + 1, hi, Some(i));
        Some(i)
    }
}

fn ordered(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn skip_ws(b: &[u8], pos: &mut usize) {
    while b.get(*pos).is_some_and(|c| c.is_ascii_whitespace()) {
        *pos += 1;
    }
}

fn expect(b: &[u8], pos: &mut usize, c: u8) -> Result<(), TreeError> {
    skip_ws(b, pos);
    if b.get(*pos) != Some(&c) {
        return Err(TreeError::Parse { pos: *pos, msg: format!("expected `{}`", c as char) });
    }
    *pos += 1;
    Ok(())
}

fn parse_u64(b: &[u8], pos: &mut usize) -> Result<u64, TreeError> {
    skip_ws(b, pos);
    let start = *pos;
    while b.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    std::str::from_utf8(&b[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or(TreeError::Parse { pos: start, msg: "expected a number".into() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(v: u64) -> NodeId {
        NodeId(v)
    }

    fn tree_with(keys: &[u64], capacity: usize) -> EgoTree {
        let mut t = EgoTree::new(id(0), capacity);
        for &k in keys {
            t.insert(id(k), id(k)).unwrap();
        }
        t
    }

    /// Left spine 3 -> 2 -> 1 rooted at 3.
    fn left_spine() -> EgoTree {
        EgoTree::from_dump(id(0), "(((1:1) 2:2) 3:3)", &[], 0).unwrap()
    }

    #[test]
    fn insert_into_empty() {
        let mut t = EgoTree::new(id(0), 0);
        let c = t.insert(id(5), id(5)).unwrap();
        assert_eq!(c, TreeCost { hops: 0, link_changes: 1, rotations: 0 });
        assert_eq!(t.root().unwrap().key, id(5));
    }

    #[test]
    fn insert_splays_new_leaf() {
        let mut t = tree_with(&[5], 0);
        let c = t.insert(id(3), id(3)).unwrap();
        assert_eq!(c.rotations, 1);
        assert_eq!(c.link_changes, 2);
        assert_eq!(t.dump(), "(3:3 (5:5))");
    }

    #[test]
    fn insert_rejects_duplicates_and_owner() {
        let mut t = tree_with(&[5, 3], 0);
        let before = t.dump();
        assert_eq!(t.insert(id(5), id(5)), Err(TreeError::DuplicateKey(id(5))));
        assert_eq!(t.dump(), before);
        assert_eq!(t.insert(id(9), id(0)), Err(TreeError::OccupantIsOwner(id(0))));
    }

    #[test]
    fn route_down_examples() {
        let t = EgoTree::from_dump(id(0), "((1:1) 2:2 (3:3))", &[], 0).unwrap();
        match t.route_down(id(3)) {
            RouteDown::Hit { path, hops, .. } => {
                assert_eq!(path, vec![id(2), id(3)]);
                assert_eq!(hops, 2);
            }
            other => panic!("{other:?}"),
        }
        let t = EgoTree::from_dump(id(0), "((1:1) 2:2 (3:3 (4:4 (5:5))))", &[], 0).unwrap();
        match t.route_down(id(7)) {
            RouteDown::Miss { anchor, .. } => assert_eq!(anchor.unwrap().key, id(5)),
            other => panic!("{other:?}"),
        }
        let empty = EgoTree::new(id(0), 0);
        assert_eq!(empty.route_down(id(1)), RouteDown::Miss { anchor: None, path: vec![], hops: 0 });
    }

    #[test]
    fn virtual_root_shortcuts() {
        let t = EgoTree::from_dump(id(0), "((((1:1) 2:2) 3:3) 4:4 (5:5))", &[id(1)], 4).unwrap();
        assert_eq!(t.depth(id(1)), Some(3));
        assert_eq!(t.route_down(id(1)).hops(), 1);
        assert_eq!(t.route_up(id(1)).unwrap().hops, 1);
        assert_eq!(t.route_up(id(2)).unwrap().hops, 3);
    }

    #[test]
    fn route_up_examples() {
        let t = EgoTree::from_dump(id(0), "((1:1) 2:2 (3:3 (4:4)))", &[], 0).unwrap();
        assert_eq!(t.route_up(id(2)).unwrap().hops, 1);
        let r = t.route_up(id(4)).unwrap();
        assert_eq!(r.hops, 3);
        assert_eq!(r.path, vec![id(4), id(3), id(2)]);
        assert_eq!(t.route_up(id(9)), Err(TreeError::KeyAbsent(id(9))));
    }

    #[test]
    fn adjust_zig_zig() {
        let mut t = left_spine();
        let c = t.adjust(id(1)).unwrap();
        assert_eq!(c.rotations, 2);
        assert_eq!(t.root().unwrap().key, id(1));
        assert_eq!(t.dump(), "(1:1 (2:2 (3:3)))");
    }

    #[test]
    fn adjust_root_only_touches_virtual_roots() {
        let mut t = tree_with(&[1, 2, 3], 2);
        let root = t.root().unwrap().key;
        let c = t.adjust(root).unwrap();
        assert_eq!(c, TreeCost { hops: 0, link_changes: 1, rotations: 0 });
        let c = t.adjust(root).unwrap();
        assert_eq!(c, TreeCost::default());
    }

    #[test]
    fn virtual_roots_evict_least_recently_used() {
        let mut t = tree_with(&[1, 2, 3, 4], 2);
        t.adjust(id(1)).unwrap();
        t.adjust(id(2)).unwrap();
        t.adjust(id(1)).unwrap();
        let c = t.adjust(id(3)).unwrap();
        assert_eq!(t.virtual_roots().collect::<Vec<_>>(), vec![id(3), id(1)]);
        assert_eq!(c.link_changes, c.rotations + 2);

        let mut f = tree_with(&[1, 2, 3, 4], 2).with_policy(VirtualRootPolicy::Fifo);
        f.adjust(id(1)).unwrap();
        f.adjust(id(2)).unwrap();
        f.adjust(id(1)).unwrap();
        f.adjust(id(3)).unwrap();
        assert_eq!(f.virtual_roots().collect::<Vec<_>>(), vec![id(3), id(2)]);
    }

    /// Reference splay tree on boxed nodes, written recursively.
    #[derive(Debug)]
    struct RefNode {
        key: u64,
        left: Option<Box<RefNode>>,
        right: Option<Box<RefNode>>,
    }

    fn rot_right(mut n: Box<RefNode>) -> Box<RefNode> {
        let mut l = n.left.take().unwrap();
        n.left = l.right.take();
        l.right = Some(n);
        l
    }

    fn rot_left(mut n: Box<RefNode>) -> Box<RefNode> {
        let mut r = n.right.take().unwrap();
        n.right = r.left.take();
        r.left = Some(n);
        r
    }

    fn ref_depth(n: &RefNode, key: u64) -> u64 {
        if key == n.key {
            0
        } else if key < n.key {
            1 + ref_depth(n.left.as_ref().unwrap(), key)
        } else {
            1 + ref_depth(n.right.as_ref().unwrap(), key)
        }
    }

    /// Brings `key` (assumed present) to the root of `n`, counting rotations.
    /// Pairs are formed from the bottom, so an odd depth ends with a single
    /// rotation at the top.
    fn ref_splay(mut n: Box<RefNode>, key: u64, rots: &mut u64) -> Box<RefNode> {
        if key == n.key {
            return n;
        }
        if ref_depth(&n, key) % 2 == 1 {
            *rots += 1;
            return if key < n.key {
                n.left = Some(ref_splay(n.left.take().unwrap(), key, rots));
                rot_right(n)
            } else {
                n.right = Some(ref_splay(n.right.take().unwrap(), key, rots));
                rot_left(n)
            };
        }
        if key < n.key {
            let mut l = n.left.take().unwrap();
            if key == l.key {
                n.left = Some(l);
                *rots += 1;
                return rot_right(n);
            }
            if key < l.key {
                l.left = Some(ref_splay(l.left.take().unwrap(), key, rots));
                n.left = Some(l);
                *rots += 2;
                rot_right(rot_right(n))
            } else {
                l.right = Some(ref_splay(l.right.take().unwrap(), key, rots));
                n.left = Some(rot_left(l));
                *rots += 2;
                rot_right(n)
            }
        } else {
            let mut r = n.right.take().unwrap();
            if key == r.key {
                n.right = Some(r);
                *rots += 1;
                return rot_left(n);
            }
            if key > r.key {
                r.right = Some(ref_splay(r.right.take().unwrap(), key, rots));
                n.right = Some(r);
                *rots += 2;
                rot_left(rot_left(n))
            } else {
                r.left = Some(ref_splay(r.left.take().unwrap(), key, rots));
                n.right = Some(rot_right(r));
                *rots += 2;
                rot_left(n)
            }
        }
    }

    fn ref_insert(root: Option<Box<RefNode>>, key: u64, rots: &mut u64) -> Box<RefNode> {
        fn leaf(n: Option<Box<RefNode>>, key: u64) -> Box<RefNode> {
            match n {
                None => Box::new(RefNode { key, left: None, right: None }),
                Some(mut n) => {
                    if key < n.key {
                        n.left = Some(leaf(n.left.take(), key));
                    } else {
                        n.right = Some(leaf(n.right.take(), key));
                    }
                    n
                }
            }
        }
        ref_splay(leaf(root, key), key, rots)
    }

    fn ref_dump(n: &RefNode, out: &mut String) {
        out.push('(');
        if let Some(l) = &n.left {
            ref_dump(l, out);
            out.push(' ');
        }
        out.push_str(&format!("{}:{}", n.key, n.key));
        if let Some(r) = &n.right {
            out.push(' ');
            ref_dump(r, out);
        }
        out.push(')');
    }

    #[test]
    fn splay_matches_reference() {
        let keys: Vec<u64> = (0..200).map(|i| (i * 7919) % 211 + 1).collect();
        let mut t = EgoTree::new(id(0), 0);
        let mut r: Option<Box<RefNode>> = None;
        for &k in &keys {
            let mut rots = 0;
            r = Some(ref_insert(r.take(), k, &mut rots));
            assert_eq!(t.insert(id(k), id(k)).unwrap().rotations, rots);
        }
        for i in 0..500u64 {
            let k = keys[((i * 31) % keys.len() as u64) as usize];
            let mut rots = 0;
            r = Some(ref_splay(r.take().unwrap(), k, &mut rots));
            assert_eq!(t.adjust(id(k)).unwrap().rotations, rots);
        }
        let mut s = String::new();
        ref_dump(r.as_ref().unwrap(), &mut s);
        assert_eq!(t.dump(), s);
    }

    #[test]
    fn adjust_sequential_access_is_linear() {
        let n = 1000u64;
        let mut t = EgoTree::new(id(0), 0);
        let mut r: Option<Box<RefNode>> = None;
        let mut sink = 0;
        for k in 1..=n {
            t.insert(id(k), id(k)).unwrap();
            r = Some(ref_insert(r.take(), k, &mut sink));
        }
        let mut oracle = 0;
        let mut total = 0;
        for k in 1..=n {
            total += t.adjust(id(k)).unwrap().rotations;
            r = Some(ref_splay(r.take().unwrap(), k, &mut oracle));
        }
        assert_eq!(total, oracle);
        // Known linear bound for a full sequential pass is 4.5n rotations.
        assert!(total * 2 <= 9 * n, "{total}");
    }

    #[test]
    fn remove_examples() {
        let mut t = tree_with(&[4], 0);
        assert_eq!(t.remove(id(4)).unwrap().link_changes, 1);
        assert!(t.is_empty());

        let mut t = EgoTree::from_dump(id(0), "((1:1) 2:2 (3:3))", &[], 0).unwrap();
        t.remove(id(3)).unwrap();
        assert_eq!(t.len(), 2);
        t.check_invariants().unwrap();
        assert_eq!(t.entries().iter().map(|e| e.key).collect::<Vec<_>>(), vec![id(1), id(2)]);
        assert_eq!(t.remove(id(3)), Err(TreeError::KeyAbsent(id(3))));
    }

    #[test]
    fn replace_occupant_counts_incident_links() {
        let mut t = tree_with(&[4], 0);
        assert_eq!(t.replace_occupant(id(4), id(40)).unwrap().link_changes, 1);
        assert_eq!(t.occupant(id(4)), Some(id(40)));

        let mut t = EgoTree::from_dump(id(0), "((1:1) 2:2 ((3:3) 4:4 (5:5)))", &[], 0).unwrap();
        assert_eq!(t.replace_occupant(id(4), id(44)).unwrap().link_changes, 3);
        assert_eq!(t.replace_occupant(id(4), id(0)), Err(TreeError::OccupantIsOwner(id(0))));
        assert_eq!(t.replace_occupant(id(9), id(7)), Err(TreeError::KeyAbsent(id(9))));
    }

    #[test]
    fn static_tree_examples() {
        let dist = FreqDist::from_probs([(id(1), 0.5), (id(2), 0.25), (id(3), 0.25)]).unwrap();
        let t = EgoTree::build_static(id(0), &dist).unwrap();
        assert_eq!(t.dump(), "((1:1) 2:2 (3:3))");
        assert!(t.is_fixed());
        let expected: f64 = dist.iter().map(|(k, p)| p * t.depth(*k).unwrap() as f64).sum();
        assert!((expected - 0.75).abs() < 1e-12);

        let uniform = FreqDist::from_probs((1..=7).map(|k| (id(k), 1.0 / 7.0))).unwrap();
        let t = EgoTree::build_static(id(0), &uniform).unwrap();
        assert_eq!((1..=7).map(|k| t.depth(id(k)).unwrap()).max(), Some(2));

        let single = FreqDist::from_probs([(id(9), 1.0)]).unwrap();
        let t = EgoTree::build_static(id(0), &single).unwrap();
        assert_eq!(t.depth(id(9)), Some(0));

        assert_eq!(EgoTree::build_static_with(id(0), &[]).unwrap_err(), TreeError::EmptyDistribution);
        let mut fixed = t;
        assert_eq!(fixed.adjust(id(9)), Err(TreeError::Fixed));
    }

    #[test]
    fn dump_round_trip() {
        let t = tree_with(&[5, 1, 9, 3, 7], 0);
        let again = EgoTree::from_dump(id(0), &t.dump(), &[], 0).unwrap();
        assert_eq!(again.dump(), t.dump());
        again.check_invariants().unwrap();
        assert!(EgoTree::from_dump(id(0), "(1:1", &[], 0).is_err());
        assert!(EgoTree::from_dump(id(0), "(1:1) x", &[], 0).is_err());
    }

    #[test]
    fn check_invariants_flags_disorder() {
        let t = EgoTree::from_dump(id(0), "((3:3) 2:2)", &[], 0).unwrap();
        assert!(t.check_invariants().is_err());
    }
}
