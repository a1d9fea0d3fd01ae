//! Communication demands: node addresses, request traces, synthetic workload
//! generators, demand graphs and the `(c, δ)`-sparsity certificate.
//!
//! A [`Trace`] is a totally ordered list of `(src, dst)` [`Request`]s over a
//! fixed universe of nodes. Node addresses are opaque: their total order is
//! used to key binary search trees and nothing else.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque, unique node address.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for NodeId {
    fn from(v: u64) -> Self {
        NodeId(v)
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("self-request {0} -> {0}")]
    SelfRequest(NodeId),
    #[error("node {0} is not part of the trace universe")]
    UnknownNode(NodeId),
    #[error("duplicate node {0} in universe")]
    DuplicateNode(NodeId),
    #[error("empty range {0:?} (trace length {1})")]
    EmptyRange(Range<usize>, usize),
    #[error("invalid workload: {0}")]
    InvalidWorkload(String),
    #[error("malformed trace file, line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A single source-destination communication request. `src != dst` always.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Request {
    src: NodeId,
    dst: NodeId,
}

impl Request {
    pub fn new(src: impl Into<NodeId>, dst: impl Into<NodeId>) -> Result<Self, TraceError> {
        let (src, dst) = (src.into(), dst.into());
        if src == dst {
            return Err(TraceError::SelfRequest(src));
        }
        Ok(Request { src, dst })
    }

    pub fn src(&self) -> NodeId {
        self.src
    }

    pub fn dst(&self) -> NodeId {
        self.dst
    }

    pub fn pair(&self) -> (NodeId, NodeId) {
        (self.src, self.dst)
    }
}

/// An ordered request sequence over a declared node universe.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    nodes: Vec<NodeId>,
    requests: Vec<Request>,
}

impl Trace {
    /// Builds a trace over an explicit universe. The universe is sorted and
    /// must not contain duplicates; every request endpoint must belong to it.
    pub fn new(mut nodes: Vec<NodeId>, requests: Vec<Request>) -> Result<Self, TraceError> {
        nodes.sort_unstable();
        if let Some(w) = nodes.windows(2).find(|w| w[0] == w[1]) {
            return Err(TraceError::DuplicateNode(w[0]));
        }
        for r in &requests {
            for id in [r.src, r.dst] {
                if nodes.binary_search(&id).is_err() {
                    return Err(TraceError::UnknownNode(id));
                }
            }
        }
        Ok(Trace { nodes, requests })
    }

    /// Trace over the universe `0..n`.
    pub fn with_universe(n: usize, requests: Vec<Request>) -> Result<Self, TraceError> {
        Trace::new((0..n as u64).map(NodeId).collect(), requests)
    }

    /// Convenience constructor from raw pairs over `0..n`.
    pub fn from_pairs(n: usize, pairs: &[(u64, u64)]) -> Result<Self, TraceError> {
        let requests = pairs
            .iter()
            .map(|&(s, d)| Request::new(s, d))
            .collect::<Result<Vec<_>, _>>()?;
        Trace::with_universe(n, requests)
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn requests(&self) -> &[Request] {
        &self.requests
    }

    /// Concatenates another trace over the same universe.
    pub fn extend(&mut self, other: &Trace) -> Result<(), TraceError> {
        for r in other.requests() {
            for id in [r.src, r.dst] {
                if self.nodes.binary_search(&id).is_err() {
                    return Err(TraceError::UnknownNode(id));
                }
            }
        }
        self.requests.extend_from_slice(other.requests());
        Ok(())
    }

    /// Writes the `#n=<count>` header followed by one `src,dst` line per request.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "#n={}", self.n())?;
        for r in &self.requests {
            writeln!(out, "{},{}", r.src, r.dst)?;
        }
        Ok(())
    }

    /// Reads the CSV trace format.
    ///
    /// If every address is below `n`, the universe is `0..n`. Otherwise the
    /// universe is the set of observed addresses, padded with fresh addresses
    /// above the largest observed one until it holds `n` nodes.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, TraceError> {
        let mut n: Option<usize> = None;
        let mut requests = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            let lineno = i + 1;
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("n=") {
                    let parsed = v.trim().parse::<usize>().map_err(|e| TraceError::Parse {
                        line: lineno,
                        msg: format!("bad node count: {e}"),
                    })?;
                    n = Some(parsed);
                }
                continue;
            }
            let parse_err = |msg: String| TraceError::Parse { line: lineno, msg };
            let (s, d) = line
                .split_once(',')
                .ok_or_else(|| parse_err("expected `src,dst`".into()))?;
            let s = s.trim().parse::<u64>().map_err(|e| parse_err(e.to_string()))?;
            let d = d.trim().parse::<u64>().map_err(|e| parse_err(e.to_string()))?;
            requests.push(Request::new(s, d).map_err(|e| parse_err(e.to_string()))?);
        }
        let n = n.ok_or(TraceError::Parse {
            line: 1,
            msg: "missing `#n=<count>` header".into(),
        })?;
        let observed: BTreeSet<NodeId> = requests.iter().flat_map(|r| [r.src, r.dst]).collect();
        if observed.iter().all(|id| id.0 < n as u64) {
            return Trace::with_universe(n, requests);
        }
        if observed.len() > n {
            return Err(TraceError::Parse {
                line: 1,
                msg: format!("{} distinct addresses exceed n={n}", observed.len()),
            });
        }
        let mut nodes: Vec<NodeId> = observed.into_iter().collect();
        let mut next = nodes.last().map_or(0, |id| id.0 + 1);
        while nodes.len() < n {
            nodes.push(NodeId(next));
            next += 1;
        }
        Trace::new(nodes, requests)
    }
}

/// `(c, δ)` sparsity parameters: every window of at most `delta` requests
/// holds at most `c·n` distinct ordered pairs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityParams {
    pub c: f64,
    pub delta: usize,
}

impl SparsityParams {
    pub fn new(c: f64, delta: usize) -> Result<Self, TraceError> {
        if !(c > 0.0) || delta == 0 {
            return Err(TraceError::InvalidWorkload(format!(
                "sparsity needs c > 0 and delta >= 1 (got c={c}, delta={delta})"
            )));
        }
        Ok(SparsityParams { c, delta })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparsityReport {
    pub ok: bool,
    pub worst_window_start: usize,
    pub worst_unique_pairs: usize,
}

/// Certifies `(c, δ)`-sparsity with a sliding window over all windows of
/// length `min(δ, m)`. Shorter windows are sub-windows of these, so they can
/// never hold more distinct pairs.
pub fn sparsity_check(trace: &Trace, params: SparsityParams) -> SparsityReport {
    let reqs = trace.requests();
    if reqs.is_empty() {
        return SparsityReport { ok: true, worst_window_start: 0, worst_unique_pairs: 0 };
    }
    let len = params.delta.min(reqs.len());
    let mut counts: HashMap<(NodeId, NodeId), u32> = HashMap::new();
    let mut unique = 0usize;
    for r in &reqs[..len] {
        let c = counts.entry(r.pair()).or_insert(0);
        if *c == 0 {
            unique += 1;
        }
        *c += 1;
    }
    let (mut worst, mut worst_start) = (unique, 0);
    for start in 1..=(reqs.len() - len) {
        let out = reqs[start - 1].pair();
        let c = counts.get_mut(&out).expect("pair leaving the window was counted");
        *c -= 1;
        if *c == 0 {
            unique -= 1;
        }
        let c = counts.entry(reqs[start + len - 1].pair()).or_insert(0);
        if *c == 0 {
            unique += 1;
        }
        *c += 1;
        if unique > worst {
            worst = unique;
            worst_start = start;
        }
    }
    let cap = params.c * trace.n() as f64;
    SparsityReport {
        ok: worst as f64 <= cap + 1e-9,
        worst_window_start: worst_start,
        worst_unique_pairs: worst,
    }
}

/// Directed, frequency-weighted demand graph of a sub-trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandGraph {
    pub nodes: BTreeSet<NodeId>,
    pub edges: BTreeMap<(NodeId, NodeId), f64>,
}

impl DemandGraph {
    pub fn total_weight(&self) -> f64 {
        self.edges.values().sum()
    }

    /// Out-neighbours of `u` in the demand graph.
    pub fn out_neighbors(&self, u: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.edges
            .range((u, NodeId(0))..=(u, NodeId(u64::MAX)))
            .map(|(&(_, v), _)| v)
    }
}

pub fn build_demand_graph(trace: &Trace, range: Range<usize>) -> Result<DemandGraph, TraceError> {
    if range.start >= range.end || range.end > trace.len() {
        return Err(TraceError::EmptyRange(range, trace.len()));
    }
    let slice = &trace.requests()[range];
    let mut counts: BTreeMap<(NodeId, NodeId), u64> = BTreeMap::new();
    let mut nodes = BTreeSet::new();
    for r in slice {
        *counts.entry(r.pair()).or_insert(0) += 1;
        nodes.insert(r.src);
        nodes.insert(r.dst);
    }
    let total = slice.len() as f64;
    let edges = counts.into_iter().map(|(k, c)| (k, c as f64 / total)).collect();
    Ok(DemandGraph { nodes, edges })
}

/// Node weights for the product-distribution workload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Weights {
    Uniform,
    /// Node `i` has weight `(i+1)^-alpha`.
    Zipf { alpha: f64 },
    Explicit { weights: Vec<f64> },
}

impl Weights {
    fn materialize(&self, n: usize) -> Result<Vec<f64>, TraceError> {
        let w = match self {
            Weights::Uniform => vec![1.0; n],
            Weights::Zipf { alpha } => {
                if *alpha < 0.0 {
                    return Err(TraceError::InvalidWorkload(format!("alpha {alpha} < 0")));
                }
                (1..=n).map(|i| (i as f64).powf(-alpha)).collect()
            }
            Weights::Explicit { weights } => {
                if weights.len() != n {
                    return Err(TraceError::InvalidWorkload(format!(
                        "{} explicit weights for n={n}",
                        weights.len()
                    )));
                }
                weights.clone()
            }
        };
        if w.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) || !(w.iter().sum::<f64>() > 0.0) {
            return Err(TraceError::InvalidWorkload("weights must be finite, >= 0, and not all zero".into()));
        }
        Ok(w)
    }
}

/// Synthetic workload families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WorkloadSpec {
    /// Uniform node, then a uniform neighbour on the `√n × √n` wraparound torus.
    Torus { n: usize, m: usize },
    /// Hub `0` talks to leaf `i` with probability `∝ i^-alpha`, direction uniform.
    StarZipf { n: usize, m: usize, alpha: f64 },
    /// `k` torus phases, each on a fresh pseudorandom relabeling of the nodes.
    RoundRobinGrids { n: usize, k: usize, m_each: usize },
    /// Independent source and destination draws; self pairs are resampled.
    ProductDist { n: usize, m: usize, px: Weights, py: Weights },
    UniformPairs { n: usize, m: usize },
}

impl WorkloadSpec {
    pub fn n(&self) -> usize {
        match self {
            WorkloadSpec::Torus { n, .. }
            | WorkloadSpec::StarZipf { n, .. }
            | WorkloadSpec::RoundRobinGrids { n, .. }
            | WorkloadSpec::ProductDist { n, .. }
            | WorkloadSpec::UniformPairs { n, .. } => *n,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            WorkloadSpec::Torus { m, .. }
            | WorkloadSpec::StarZipf { m, .. }
            | WorkloadSpec::ProductDist { m, .. }
            | WorkloadSpec::UniformPairs { m, .. } => *m,
            WorkloadSpec::RoundRobinGrids { k, m_each, .. } => k * m_each,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn name(&self) -> &'static str {
        match self {
            WorkloadSpec::Torus { .. } => "torus",
            WorkloadSpec::StarZipf { .. } => "star_zipf",
            WorkloadSpec::RoundRobinGrids { .. } => "round_robin_grids",
            WorkloadSpec::ProductDist { .. } => "product_dist",
            WorkloadSpec::UniformPairs { .. } => "uniform_pairs",
        }
    }
}

/// Side length of the torus for `n` nodes.
pub fn torus_side(n: usize) -> Result<usize, TraceError> {
    let side = (n as f64).sqrt().round() as usize;
    if side * side != n || side < 3 {
        return Err(TraceError::InvalidWorkload(format!(
            "torus needs n = s*s with s >= 3, got n={n}"
        )));
    }
    Ok(side)
}

/// The four wraparound neighbours of `id` on a `side × side` torus.
pub fn torus_neighbors(id: u64, side: usize) -> [u64; 4] {
    let s = side as u64;
    let (r, c) = (id / s, id % s);
    [
        ((r + 1) % s) * s + c,
        ((r + s - 1) % s) * s + c,
        r * s + (c + 1) % s,
        r * s + (c + s - 1) % s,
    ]
}

fn torus_request(rng: &mut ChaCha8Rng, n: usize, side: usize) -> (u64, u64) {
    let u = rng.random_range(0..n as u64);
    let v = torus_neighbors(u, side)[rng.random_range(0..4)];
    (u, v)
}

/// Generates a deterministic trace from `(spec, seed)`.
pub fn generate(spec: &WorkloadSpec, seed: u64) -> Result<Trace, TraceError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.n();
    if n < 2 {
        return Err(TraceError::InvalidWorkload(format!("need n >= 2, got {n}")));
    }
    let mut out = Vec::with_capacity(spec.len());
    match spec {
        WorkloadSpec::Torus { m, .. } => {
            let side = torus_side(n)?;
            for _ in 0..*m {
                let (u, v) = torus_request(&mut rng, n, side);
                out.push(Request::new(u, v)?);
            }
        }
        WorkloadSpec::StarZipf { m, alpha, .. } => {
            if !(*alpha >= 0.0) {
                return Err(TraceError::InvalidWorkload(format!("alpha {alpha} < 0")));
            }
            let weights: Vec<f64> = (1..n).map(|i| (i as f64).powf(-alpha)).collect();
            let dist = WeightedIndex::new(&weights)
                .map_err(|e| TraceError::InvalidWorkload(e.to_string()))?;
            for _ in 0..*m {
                let leaf = dist.sample(&mut rng) as u64 + 1;
                let req = if rng.random_bool(0.5) {
                    Request::new(0, leaf)?
                } else {
                    Request::new(leaf, 0)?
                };
                out.push(req);
            }
        }
        WorkloadSpec::RoundRobinGrids { k, m_each, .. } => {
            if *k < 1 {
                return Err(TraceError::InvalidWorkload("k must be >= 1".into()));
            }
            let side = torus_side(n)?;
            let mut labels: Vec<u64> = (0..n as u64).collect();
            for _ in 0..*k {
                labels.shuffle(&mut rng);
                for _ in 0..*m_each {
                    let (u, v) = torus_request(&mut rng, n, side);
                    out.push(Request::new(labels[u as usize], labels[v as usize])?);
                }
            }
        }
        WorkloadSpec::ProductDist { m, px, py, .. } => {
            let wx = px.materialize(n)?;
            let wy = py.materialize(n)?;
            let support = |w: &[f64]| w.iter().filter(|x| **x > 0.0).count();
            let single = |w: &[f64]| w.iter().position(|x| *x > 0.0);
            if support(&wx) == 1 && support(&wy) == 1 && single(&wx) == single(&wy) {
                return Err(TraceError::InvalidWorkload(
                    "px and py are the same point mass; every draw is a self pair".into(),
                ));
            }
            let dx = WeightedIndex::new(&wx).map_err(|e| TraceError::InvalidWorkload(e.to_string()))?;
            let dy = WeightedIndex::new(&wy).map_err(|e| TraceError::InvalidWorkload(e.to_string()))?;
            for _ in 0..*m {
                loop {
                    let (u, v) = (dx.sample(&mut rng) as u64, dy.sample(&mut rng) as u64);
                    if u != v {
                        out.push(Request::new(u, v)?);
                        break;
                    }
                }
            }
        }
        WorkloadSpec::UniformPairs { m, .. } => {
            for _ in 0..*m {
                let u = rng.random_range(0..n as u64);
                let mut v = rng.random_range(0..n as u64 - 1);
                if v >= u {
                    v += 1;
                }
                out.push(Request::new(u, v)?);
            }
        }
    }
    Trace::with_universe(n, out)
}
