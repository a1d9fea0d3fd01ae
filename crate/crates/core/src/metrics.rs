//! Per-request cost accounting, reset-delimited windows and the
//! static-optimality ratio.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entropy::{max_conditional_entropy, EntropyError, JointFreq};
use crate::renet::RequestOutcome;
use crate::trace::Trace;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("ledger is empty")]
    Empty,
    #[error("ledger has {ledger} entries but the trace has {trace} requests")]
    Misaligned { ledger: usize, trace: usize },
    #[error("static cost must be positive, got {0}")]
    NonPositiveBaseline(f64),
    #[error(transparent)]
    Entropy(#[from] EntropyError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostEntry {
    pub hops: u64,
    pub adjust: u64,
    pub coord: u64,
    pub reset: u64,
}

impl CostEntry {
    pub fn total(&self, include_coord: bool) -> u64 {
        let base = self.hops + self.adjust;
        if include_coord {
            base + self.coord + self.reset
        } else {
            base
        }
    }
}

impl From<&RequestOutcome> for CostEntry {
    fn from(o: &RequestOutcome) -> Self {
        CostEntry { hops: o.hops, adjust: o.adjust_cost, coord: o.coord_cost, reset: o.reset_cost }
    }
}

/// Costs of a replay, one entry per request, plus the indices of the
/// requests during which a reset fired.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    entries: Vec<CostEntry>,
    reset_marks: Vec<usize>,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: CostEntry) {
        self.entries.push(entry);
    }

    /// Appends an outcome; a reset marks the start of a new window at this request.
    pub fn record(&mut self, outcome: &RequestOutcome) {
        if outcome.reset_fired {
            self.reset_marks.push(self.entries.len());
        }
        self.entries.push(outcome.into());
    }

    pub fn mark_reset(&mut self, index: usize) {
        self.reset_marks.push(index);
    }

    pub fn entries(&self) -> &[CostEntry] {
        &self.entries
    }

    pub fn reset_marks(&self) -> &[usize] {
        &self.reset_marks
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Index ranges between resets, trailing partial window included.
    /// Empty windows (a reset on the very first request) are dropped.
    pub fn windows(&self) -> Vec<std::ops::Range<usize>> {
        let mut bounds = vec![0];
        bounds.extend(self.reset_marks.iter().copied().filter(|&r| r > 0 && r < self.entries.len()));
        bounds.push(self.entries.len());
        bounds.dedup();
        bounds.windows(2).map(|w| w[0]..w[1]).filter(|r| !r.is_empty()).collect()
    }
}

fn mean(entries: &[CostEntry], include_coord: bool) -> f64 {
    let sum: u64 = entries.iter().map(|e| e.total(include_coord)).sum();
    sum as f64 / entries.len() as f64
}

/// Mean cost per request: hops plus adjustments, and coordinator plus reset
/// cost when `include_coord` is set.
pub fn average_cost(ledger: &CostLedger, include_coord: bool) -> Result<f64, MetricsError> {
    if ledger.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(mean(&ledger.entries, include_coord))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub index: usize,
    pub start: usize,
    pub length: usize,
    pub avg_cost: f64,
    pub avg_cost_with_coord: f64,
    /// Larger of the two conditional entropies of the window, base `Δ`.
    pub h_con: f64,
}

pub fn window_report(ledger: &CostLedger, trace: &Trace, base: f64) -> Result<Vec<WindowRow>, MetricsError> {
    if ledger.len() != trace.len() {
        return Err(MetricsError::Misaligned { ledger: ledger.len(), trace: trace.len() });
    }
    if ledger.is_empty() {
        return Err(MetricsError::Empty);
    }
    ledger
        .windows()
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            let joint = JointFreq::from_requests(&trace.requests()[r.clone()])?;
            Ok(WindowRow {
                index,
                start: r.start,
                length: r.len(),
                avg_cost: mean(&ledger.entries[r.clone()], false),
                avg_cost_with_coord: mean(&ledger.entries[r], true),
                h_con: max_conditional_entropy(&joint, base)?,
            })
        })
        .collect()
}

pub fn rho_estimate(renet_avg: f64, stat_avg: f64) -> Result<f64, MetricsError> {
    if !(stat_avg > 0.0) {
        return Err(MetricsError::NonPositiveBaseline(stat_avg));
    }
    Ok(renet_avg / stat_avg)
}

pub const LEDGER_CSV_HEADER: &str = "req_idx,hops,adjust,coord,reset";
pub const WINDOW_CSV_HEADER: &str = "window,start,length,avg_cost,avg_cost_with_coord,h_con";

pub fn write_ledger_csv<W: Write>(ledger: &CostLedger, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{LEDGER_CSV_HEADER}")?;
    for (i, e) in ledger.entries.iter().enumerate() {
        writeln!(out, "{i},{},{},{},{}", e.hops, e.adjust, e.coord, e.reset)?;
    }
    Ok(())
}

pub fn write_window_csv<W: Write>(rows: &[WindowRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{WINDOW_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.9},{:.9},{:.9}",
            r.index, r.start, r.length, r.avg_cost, r.avg_cost_with_coord, r.h_con
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::Trace;

    fn entry(hops: u64, adjust: u64, coord: u64, reset: u64) -> CostEntry {
        CostEntry { hops, adjust, coord, reset }
    }

    fn ledger(entries: &[CostEntry]) -> CostLedger {
        let mut l = CostLedger::new();
        entries.iter().for_each(|&e| l.push(e));
        l
    }

    #[test]
    fn average_cost_examples() {
        let l = ledger(&[entry(1, 0, 0, 0), entry(3, 2, 0, 0)]);
        assert_eq!(average_cost(&l, false).unwrap(), 3.0);
        assert_eq!(average_cost(&l, true).unwrap(), 3.0);
        let l = ledger(&[entry(1, 0, 6, 0)]);
        assert_eq!(average_cost(&l, true).unwrap(), 7.0);
        assert_eq!(average_cost(&l, false).unwrap(), 1.0);
        let l = ledger(&[entry(1, 0, 0, 0); 5]);
        assert_eq!(average_cost(&l, true).unwrap(), 1.0);
        assert_eq!(average_cost(&CostLedger::new(), true), Err(MetricsError::Empty));
    }

    #[test]
    fn windows_split_at_resets() {
        let trace = Trace::from_pairs(4, &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]).unwrap();
        let mut l = ledger(&[entry(1, 0, 0, 0); 5]);
        let rows = window_report(&l, &trace, 24.0).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].length, 5);
        l.mark_reset(2);
        let rows = window_report(&l, &trace, 24.0).unwrap();
        assert_eq!(rows.iter().map(|r| r.length).collect::<Vec<_>>(), vec![2, 3]);
        assert_eq!(rows.iter().map(|r| r.length).sum::<usize>(), 5);
        let short = ledger(&[entry(1, 0, 0, 0); 4]);
        assert!(matches!(window_report(&short, &trace, 24.0), Err(MetricsError::Misaligned { .. })));
    }

    #[test]
    fn record_marks_resets() {
        let mut l = CostLedger::new();
        let mut o = RequestOutcome { hops: 1, ..Default::default() };
        l.record(&o);
        o.reset_fired = true;
        o.reset_cost = 8;
        l.record(&o);
        assert_eq!(l.reset_marks(), &[1]);
        assert_eq!(l.entries()[1].reset, 8);
        assert_eq!(l.windows(), vec![0..1, 1..2]);
    }

    #[test]
    fn rho_examples() {
        assert_eq!(rho_estimate(3.0, 1.5).unwrap(), 2.0);
        assert_eq!(rho_estimate(2.5, 2.5).unwrap(), 1.0);
        assert!(rho_estimate(1.0, 0.0).is_err());
    }

    #[test]
    fn ledger_csv_layout() {
        let l = ledger(&[entry(1, 2, 3, 4)]);
        let mut buf = Vec::new();
        write_ledger_csv(&l, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "req_idx,hops,adjust,coord,reset\n0,1,2,3,4\n");
    }
}
