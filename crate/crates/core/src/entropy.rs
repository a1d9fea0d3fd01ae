//! Empirical entropy measures over request frequencies.
//!
//! All sums run in sorted-key order so results are bit-for-bit reproducible.
//! Zero frequencies are never stored, which gives `0·log(1/0) = 0` for free.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{NodeId, Request, Trace};

/// Tolerance for identities that should hold exactly up to rounding.
pub const EXACT_TOL: f64 = 1e-9;
/// Tolerance for quantities composed from several sums.
pub const COMPOSED_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EntropyError {
    #[error("logarithm base must be > 1, got {0}")]
    InvalidBase(f64),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("distributions are over different key sets ({0} vs {1} entries)")]
    MismatchedUniverse(usize, usize),
    #[error("window and stride must be >= 1 and window <= trace length (window={window}, stride={stride}, m={m})")]
    InvalidWindow { window: usize, stride: usize, m: usize },
}

fn check_base(base: f64) -> Result<f64, EntropyError> {
    if !(base > 1.0) || !base.is_finite() {
        return Err(EntropyError::InvalidBase(base));
    }
    Ok(base.ln())
}

fn h_term(p: f64, ln_base: f64) -> f64 {
    if p > 0.0 {
        -p * p.ln() / ln_base
    } else {
        0.0
    }
}

fn validate_mass<'a>(values: impl Iterator<Item = &'a f64>) -> Result<(), EntropyError> {
    let mut total = 0.0;
    for &v in values {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(EntropyError::InvalidDistribution(format!("frequency {v}")));
        }
        total += v;
    }
    if (total - 1.0).abs() > EXACT_TOL {
        return Err(EntropyError::InvalidDistribution(format!("frequencies sum to {total}")));
    }
    Ok(())
}

/// A frequency distribution over ordered keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreqDist<K: Ord = NodeId> {
    probs: BTreeMap<K, f64>,
}

impl<K: Ord + Clone> FreqDist<K> {
    pub fn from_probs(probs: impl IntoIterator<Item = (K, f64)>) -> Result<Self, EntropyError> {
        let mut map = BTreeMap::new();
        for (k, p) in probs {
            *map.entry(k).or_insert(0.0) += p;
        }
        validate_mass(map.values())?;
        map.retain(|_, p| *p > 0.0);
        Ok(FreqDist { probs: map })
    }

    /// Normalizes raw occurrence counts.
    pub fn from_counts(counts: impl IntoIterator<Item = (K, u64)>) -> Result<Self, EntropyError> {
        let mut map: BTreeMap<K, u64> = BTreeMap::new();
        for (k, c) in counts {
            *map.entry(k).or_insert(0) += c;
        }
        let total: u64 = map.values().sum();
        if total == 0 {
            return Err(EntropyError::InvalidDistribution("no observations".into()));
        }
        let probs = map
            .into_iter()
            .filter(|(_, c)| *c > 0)
            .map(|(k, c)| (k, c as f64 / total as f64))
            .collect();
        Ok(FreqDist { probs })
    }

    pub fn get(&self, k: &K) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    pub fn support(&self) -> usize {
        self.probs.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, f64)> {
        self.probs.iter().map(|(k, p)| (k, *p))
    }
}

/// `-Σ p log_base p`.
pub fn entropy<K: Ord + Clone>(dist: &FreqDist<K>, base: f64) -> Result<f64, EntropyError> {
    let ln_base = check_base(base)?;
    Ok(dist.probs.values().map(|&p| h_term(p, ln_base)).sum())
}

/// Entropy of a probability vector (zeros allowed).
pub fn entropy_of(probs: &[f64], base: f64) -> Result<f64, EntropyError> {
    let ln_base = check_base(base)?;
    Ok(probs.iter().map(|&p| h_term(p, ln_base)).sum())
}

/// Sparse joint frequency `f(x, y)` of sources and destinations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointFreq {
    entries: BTreeMap<(NodeId, NodeId), f64>,
}

impl JointFreq {
    pub fn from_probs(
        entries: impl IntoIterator<Item = ((NodeId, NodeId), f64)>,
    ) -> Result<Self, EntropyError> {
        let mut map = BTreeMap::new();
        for (k, p) in entries {
            *map.entry(k).or_insert(0.0) += p;
        }
        validate_mass(map.values())?;
        map.retain(|_, p| *p > 0.0);
        Ok(JointFreq { entries: map })
    }

    pub fn from_counts<'a>(
        counts: impl IntoIterator<Item = (&'a (NodeId, NodeId), &'a u64)>,
    ) -> Result<Self, EntropyError> {
        let counts: Vec<_> = counts.into_iter().filter(|(_, c)| **c > 0).collect();
        let total: u64 = counts.iter().map(|(_, c)| **c).sum();
        if total == 0 {
            return Err(EntropyError::InvalidDistribution("no observations".into()));
        }
        let entries = counts
            .into_iter()
            .map(|(k, c)| (*k, *c as f64 / total as f64))
            .collect();
        Ok(JointFreq { entries })
    }

    /// Joint frequency of the whole trace.
    pub fn from_trace(trace: &Trace) -> Result<Self, EntropyError> {
        JointFreq::from_requests(trace.requests())
    }

    /// Joint frequency of a run of requests, e.g. one window of a trace.
    pub fn from_requests(requests: &[Request]) -> Result<Self, EntropyError> {
        let mut counts: BTreeMap<(NodeId, NodeId), u64> = BTreeMap::new();
        for r in requests {
            *counts.entry(r.pair()).or_insert(0) += 1;
        }
        JointFreq::from_counts(counts.iter())
    }

    pub fn get(&self, x: NodeId, y: NodeId) -> f64 {
        self.entries.get(&(x, y)).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((NodeId, NodeId), f64)> + '_ {
        self.entries.iter().map(|(k, p)| (*k, *p))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.entries
            .iter()
            .all(|(&(x, y), &p)| (self.get(y, x) - p).abs() <= tol)
    }
}

/// Source (row-sum) and destination (column-sum) distributions.
pub fn marginals(joint: &JointFreq) -> (FreqDist, FreqDist) {
    let mut xs: BTreeMap<NodeId, f64> = BTreeMap::new();
    let mut ys: BTreeMap<NodeId, f64> = BTreeMap::new();
    for (&(x, y), &p) in &joint.entries {
        *xs.entry(x).or_insert(0.0) += p;
        *ys.entry(y).or_insert(0.0) += p;
    }
    (FreqDist { probs: xs }, FreqDist { probs: ys })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// `H(Ŷ | X̂)`: destinations given sources.
    YgivenX,
    /// `H(X̂ | Ŷ)`: sources given destinations.
    XgivenY,
}

/// Conditional empirical entropy, computed from its definition as the
/// marginal-weighted entropy of each normalized row (or column).
pub fn conditional_entropy(joint: &JointFreq, direction: Direction, base: f64) -> Result<f64, EntropyError> {
    let ln_base = check_base(base)?;
    let mut groups: BTreeMap<NodeId, Vec<f64>> = BTreeMap::new();
    for (&(x, y), &p) in &joint.entries {
        let key = match direction {
            Direction::YgivenX => x,
            Direction::XgivenY => y,
        };
        groups.entry(key).or_default().push(p);
    }
    let mut h = 0.0;
    for row in groups.values() {
        let weight: f64 = row.iter().sum();
        let row_h: f64 = row.iter().map(|&p| h_term(p / weight, ln_base)).sum();
        h += weight * row_h;
    }
    Ok(h)
}

pub fn joint_entropy(joint: &JointFreq, base: f64) -> Result<f64, EntropyError> {
    let ln_base = check_base(base)?;
    Ok(joint.entries.values().map(|&p| h_term(p, ln_base)).sum())
}

/// Max of the two conditional entropies (the fixed-network route-length bound).
pub fn max_conditional_entropy(joint: &JointFreq, base: f64) -> Result<f64, EntropyError> {
    Ok(conditional_entropy(joint, Direction::YgivenX, base)?
        .max(conditional_entropy(joint, Direction::XgivenY, base)?))
}

/// `(M + Mᵀ) / 2`: each pair's mass split evenly between both directions.
pub fn symmetrize(joint: &JointFreq) -> JointFreq {
    let mut out: BTreeMap<(NodeId, NodeId), f64> = BTreeMap::new();
    for (&(x, y), &p) in &joint.entries {
        *out.entry((x, y)).or_insert(0.0) += p / 2.0;
        *out.entry((y, x)).or_insert(0.0) += p / 2.0;
    }
    JointFreq { entries: out }
}

/// The quantities of the averaged-distribution sandwich
/// `½H* ≤ ½H(p) + ½H(q) ≤ H((p+q)/2) ≤ H* + 1`, in bits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AveragedBounds {
    pub h_star: f64,
    pub lower: f64,
    pub mid: f64,
    pub averaged: f64,
    pub upper_slack: f64,
}

impl AveragedBounds {
    pub fn holds(&self, tol: f64) -> bool {
        self.lower <= self.mid + tol && self.mid <= self.averaged + tol && self.upper_slack >= -tol
    }
}

/// Evaluates the sandwich for two probability vectors over the same key set.
pub fn averaged_entropy_bounds(p: &[f64], q: &[f64]) -> Result<AveragedBounds, EntropyError> {
    if p.len() != q.len() {
        return Err(EntropyError::MismatchedUniverse(p.len(), q.len()));
    }
    validate_mass(p.iter())?;
    validate_mass(q.iter())?;
    let hp = entropy_of(p, 2.0)?;
    let hq = entropy_of(q, 2.0)?;
    let avg: Vec<f64> = p.iter().zip(q).map(|(a, b)| (a + b) / 2.0).collect();
    let h_avg = entropy_of(&avg, 2.0)?;
    let h_star = hp.max(hq);
    Ok(AveragedBounds {
        h_star,
        lower: h_star / 2.0,
        mid: (hp + hq) / 2.0,
        averaged: h_avg,
        upper_slack: h_star + 1.0 - h_avg,
    })
}

/// One sample point of the windowed entropy report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropySample {
    pub t: usize,
    pub hx: f64,
    pub hy: f64,
    pub hy_given_x: f64,
    pub hx_given_y: f64,
    pub hx_full: f64,
    pub hy_full: f64,
    pub hy_given_x_full: f64,
    pub hx_given_y_full: f64,
}

#[derive(Clone, Copy, Debug)]
struct Measures {
    hx: f64,
    hy: f64,
    hy_given_x: f64,
    hx_given_y: f64,
}

fn measures(counts: &BTreeMap<(NodeId, NodeId), u64>, base: f64) -> Result<Measures, EntropyError> {
    let joint = JointFreq::from_counts(counts.iter())?;
    let (x, y) = marginals(&joint);
    Ok(Measures {
        hx: entropy(&x, base)?,
        hy: entropy(&y, base)?,
        hy_given_x: conditional_entropy(&joint, Direction::YgivenX, base)?,
        hx_given_y: conditional_entropy(&joint, Direction::XgivenY, base)?,
    })
}

/// Entropies of the prefix `σ[0, t)` and the trailing window `σ[t-window, t)`
/// at every multiple `t` of `stride`.
pub fn windowed_entropy_report(
    trace: &Trace,
    window: usize,
    stride: usize,
    base: f64,
) -> Result<Vec<EntropySample>, EntropyError> {
    check_base(base)?;
    let m = trace.len();
    if window < 1 || stride < 1 || window > m {
        return Err(EntropyError::InvalidWindow { window, stride, m });
    }
    let reqs = trace.requests();
    let mut full: BTreeMap<(NodeId, NodeId), u64> = BTreeMap::new();
    let mut recent: BTreeMap<(NodeId, NodeId), u64> = BTreeMap::new();
    let mut out = Vec::new();
    for t in 1..=m {
        let pair = reqs[t - 1].pair();
        *full.entry(pair).or_insert(0) += 1;
        *recent.entry(pair).or_insert(0) += 1;
        if t > window {
            let old = reqs[t - 1 - window].pair();
            let c = recent.get_mut(&old).expect("pair inside window");
            *c -= 1;
            if *c == 0 {
                recent.remove(&old);
            }
        }
        if t % stride == 0 {
            let w = measures(&recent, base)?;
            let f = measures(&full, base)?;
            out.push(EntropySample {
                t,
                hx: w.hx,
                hy: w.hy,
                hy_given_x: w.hy_given_x,
                hx_given_y: w.hx_given_y,
                hx_full: f.hx,
                hy_full: f.hy,
                hy_given_x_full: f.hy_given_x,
                hx_given_y_full: f.hx_given_y,
            });
        }
    }
    Ok(out)
}

pub const ENTROPY_CSV_HEADER: &str = "t,HX,HY,HYgX,HXgY,HX_full,HY_full,HYgX_full,HXgY_full";

pub fn write_entropy_csv<W: Write>(samples: &[EntropySample], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{ENTROPY_CSV_HEADER}")?;
    for s in samples {
        writeln!(
            out,
            "{},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}",
            s.t, s.hx, s.hy, s.hy_given_x, s.hx_given_y, s.hx_full, s.hy_full, s.hy_given_x_full, s.hx_given_y_full
        )?;
    }
    Ok(())
}
