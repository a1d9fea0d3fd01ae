//! Experiment plumbing behind the `renet` binary: a flat JSON config with
//! `--key value` overrides, and the `run`, `compare`, `entropy` and
//! `validate` commands.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::baselines::{build_static_dan, oblivious_cost, stat_cost, static_lower_bound, ObliviousNet};
use crate::ego_tree::{RotationAccounting, VirtualRootPolicy};
use crate::entropy::{windowed_entropy_report, write_entropy_csv};
use crate::metrics::{average_cost, window_report, write_ledger_csv, write_window_csv, CostLedger};
use crate::renet::{NetError, NetParams, Network, NetworkSnapshot};
use crate::trace::{generate, sparsity_check, SparsityParams, SparsityReport, Trace, Weights, WorkloadSpec};

pub const DEBUG_ENV: &str = "RENET_DEBUG_INVARIANTS";

#[derive(Debug, Error)]
pub enum ExperimentError {
    /// Bad flags, config keys or values.
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    /// The run finished but the network broke an invariant.
    #[error("{0}")]
    Failure(String),
}

impl ExperimentError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Failure(_) => 1,
            ExperimentError::Usage(_) | ExperimentError::Io { .. } => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.to_path_buf(), source }
}

fn usage(e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Usage(e.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadKind {
    Torus,
    StarZipf,
    RoundRobinGrids,
    ProductDist,
    UniformPairs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Stat,
    Oblivious,
    LowerBound,
}

/// Flat experiment configuration. `n` and `workload` are lists so one
/// config can drive `compare`; `run` and `entropy` take exactly one of each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub workload: Vec<WorkloadKind>,
    pub n: Vec<usize>,
    pub m: usize,
    /// When set, overrides `m` with `m_per_n * n`.
    pub m_per_n: Option<usize>,
    /// Zipf exponent for `star_zipf`, and for both sides of `product_dist`.
    pub alpha: f64,
    /// Phases of `round_robin_grids`; each gets `m / k` requests.
    pub k: usize,
    pub seed: u64,
    /// External trace CSV; replaces the generated workload.
    pub trace: Option<PathBuf>,
    pub c: f64,
    pub d: Option<u64>,
    /// Virtual-root capacity; defaults to `delta_cap - 1`.
    pub r: Option<usize>,
    pub rotation_accounting: RotationAccounting,
    pub virtual_root_policy: VirtualRootPolicy,
    /// Window length for the sparsity certificate; defaults to the trace length.
    pub sparsity_delta: Option<usize>,
    pub baselines: Vec<Baseline>,
    pub out: PathBuf,
    pub repetitions: usize,
    /// Entropy report window and stride; default to a tenth of the trace.
    pub window: Option<usize>,
    pub stride: Option<usize>,
    pub entropy_base: f64,
    pub debug_invariants: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            workload: vec![WorkloadKind::Torus],
            n: Vec::new(),
            m: 100_000,
            m_per_n: None,
            alpha: 1.0,
            k: 8,
            seed: 1,
            trace: None,
            c: 4.0,
            d: None,
            r: None,
            rotation_accounting: RotationAccounting::Unit,
            virtual_root_policy: VirtualRootPolicy::Lru,
            sparsity_delta: None,
            baselines: vec![Baseline::Stat, Baseline::Oblivious, Baseline::LowerBound],
            out: PathBuf::from("out"),
            repetitions: 1,
            window: None,
            stride: None,
            entropy_base: 2.0,
            debug_invariants: false,
        }
    }
}

impl ExperimentConfig {
    /// Parses `[--config file.json] [--key value]...`. Keys use hyphens or
    /// underscores; list-valued keys take comma-separated values.
    pub fn from_args<S: AsRef<str>>(args: &[S]) -> Result<Self, ExperimentError> {
        let mut base = serde_json::to_value(ExperimentConfig::default()).map_err(usage)?;
        let mut overrides = Vec::new();
        let mut it = args.iter().map(AsRef::as_ref);
        while let Some(flag) = it.next() {
            let key = flag
                .strip_prefix("--")
                .ok_or_else(|| usage(format!("expected --key, got `{flag}`")))?
                .replace('-', "_");
            let value = it.next().ok_or_else(|| usage(format!("--{key} needs a value")))?;
            if key == "config" {
                let path = Path::new(value);
                let text = fs::read_to_string(path).map_err(io_err(path))?;
                let file: Value = serde_json::from_str(&text).map_err(|e| usage(format!("{value}: {e}")))?;
                let Value::Object(map) = file else {
                    return Err(usage(format!("{value}: config must be a JSON object")));
                };
                for (k, v) in map {
                    base[k] = v;
                }
            } else {
                overrides.push((key, value.to_string()));
            }
        }
        for (key, raw) in overrides {
            let slot = base.get(&key).cloned().unwrap_or(Value::Null);
            base[&key] = override_value(&slot, &raw);
        }
        let cfg: ExperimentConfig = serde_json::from_value(base).map_err(|e| usage(format!("config: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), ExperimentError> {
        if self.repetitions == 0 {
            return Err(usage("repetitions must be at least 1"));
        }
        if self.workload.is_empty() && self.trace.is_none() {
            return Err(usage("workload list is empty"));
        }
        if !(self.entropy_base > 1.0) {
            return Err(usage(format!("entropy_base must exceed 1, got {}", self.entropy_base)));
        }
        Ok(())
    }

    fn single_n(&self) -> Result<Option<usize>, ExperimentError> {
        match self.n.as_slice() {
            [] => Ok(None),
            [n] => Ok(Some(*n)),
            _ => Err(usage("this command takes a single --n")),
        }
    }

    fn single_workload(&self) -> Result<WorkloadKind, ExperimentError> {
        match self.workload.as_slice() {
            [w] => Ok(*w),
            _ => Err(usage("this command takes a single --workload")),
        }
    }

    pub fn workload_spec(&self, kind: WorkloadKind, n: usize) -> WorkloadSpec {
        let m = self.m_per_n.map_or(self.m, |k| k * n);
        match kind {
            WorkloadKind::Torus => WorkloadSpec::Torus { n, m },
            WorkloadKind::StarZipf => WorkloadSpec::StarZipf { n, m, alpha: self.alpha },
            WorkloadKind::RoundRobinGrids => WorkloadSpec::RoundRobinGrids { n, k: self.k, m_each: m / self.k.max(1) },
            WorkloadKind::ProductDist => WorkloadSpec::ProductDist {
                n,
                m,
                px: Weights::Zipf { alpha: self.alpha },
                py: Weights::Zipf { alpha: self.alpha },
            },
            WorkloadKind::UniformPairs => WorkloadSpec::UniformPairs { n, m },
        }
    }

    pub fn net_params(&self, n: usize) -> Result<NetParams, ExperimentError> {
        let mut p = NetParams::new(n, self.c).map_err(usage)?;
        if let Some(d) = self.d {
            p = p.with_d(d);
        }
        if let Some(r) = self.r {
            p = p.with_virtual_root_capacity(r);
        }
        p = p
            .with_rotation_accounting(self.rotation_accounting)
            .with_virtual_root_policy(self.virtual_root_policy);
        p.validate().map_err(usage)?;
        Ok(p)
    }

    fn debug_sweeps(&self) -> bool {
        self.debug_invariants || std::env::var(DEBUG_ENV).is_ok_and(|v| v == "1")
    }
}

/// Lists split on commas, everything else is read as JSON when it parses
/// and as a plain string otherwise.
fn override_value(slot: &Value, raw: &str) -> Value {
    let scalar = |s: &str| match slot {
        Value::String(_) => Value::String(s.to_string()),
        _ => serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.to_string())),
    };
    match slot {
        Value::Array(_) => Value::Array(raw.split(',').filter(|s| !s.is_empty()).map(scalar).collect()),
        _ => scalar(raw),
    }
}

/// A replayed trace: costs, final network and path checks.
#[derive(Debug)]
pub struct Replay {
    pub ledger: CostLedger,
    pub network: Network,
    pub invalid_paths: usize,
}

/// Serves every request of `trace` on a fresh network. With `sweeps` on,
/// the full invariant audit runs after every request and the first
/// violation aborts the replay.
pub fn replay(trace: &Trace, params: NetParams, sweeps: bool) -> Result<Replay, NetError> {
    let mut network = Network::with_nodes(params, trace.nodes())?;
    network.set_debug_sweeps(sweeps);
    let mut ledger = CostLedger::new();
    let mut invalid_paths = 0;
    for r in trace.requests() {
        let o = network.serve_request(r)?;
        if !o.path_valid {
            invalid_paths += 1;
        }
        ledger.record(&o);
    }
    Ok(Replay { ledger, network, invalid_paths })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub stat_avg: Option<f64>,
    /// Why the static network could not be built, if it could not.
    pub stat_error: Option<String>,
    pub oblivious_avg: Option<f64>,
    pub lower_bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub workload: String,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub params: NetParams,
    pub sparsity_delta: usize,
    pub sparsity: SparsityReport,
    /// Set when the trace failed its sparsity certificate.
    pub sparsity_warning: bool,
    pub avg_cost: f64,
    pub avg_cost_with_coord: f64,
    pub resets: u64,
    pub exhaustion_resets: u64,
    pub max_degree: u32,
    pub invalid_paths: usize,
    pub baselines: BaselineSummary,
    /// Coordinator-inclusive ReNet cost over each baseline.
    pub rho: std::collections::BTreeMap<String, f64>,
    pub h_con: Vec<f64>,
    pub invariants_ok: bool,
    pub violations: Vec<String>,
}

fn load_trace(cfg: &ExperimentConfig, kind: Option<WorkloadKind>, n: Option<usize>, seed: u64) -> Result<(String, Trace), ExperimentError> {
    if let Some(path) = &cfg.trace {
        let file = fs::File::open(path).map_err(io_err(path))?;
        let trace = Trace::read_csv(BufReader::new(file)).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        if let Some(n) = n.filter(|&n| n != trace.n()) {
            return Err(usage(format!("--n {n} but {} holds {} nodes", path.display(), trace.n())));
        }
        return Ok(("trace".into(), trace));
    }
    let kind = kind.ok_or_else(|| usage("no workload given"))?;
    let n = n.ok_or_else(|| usage("no --n given"))?;
    let spec = cfg.workload_spec(kind, n);
    let trace = generate(&spec, seed).map_err(usage)?;
    Ok((spec.name().to_string(), trace))
}

fn summarize(cfg: &ExperimentConfig, name: String, trace: &Trace, seed: u64) -> Result<(RunSummary, Replay), ExperimentError> {
    let params = cfg.net_params(trace.n())?;
    let delta = cfg.sparsity_delta.unwrap_or(trace.len()).max(1);
    let sparsity = sparsity_check(trace, SparsityParams::new(cfg.c, delta).map_err(usage)?);
    if trace.is_empty() {
        return Err(usage("trace is empty"));
    }
    let rep = replay(trace, params.clone(), cfg.debug_sweeps()).map_err(|e| match e {
        NetError::Invariant(v) => ExperimentError::Failure(format!(
            "invariant sweep failed: {}",
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
        )),
        e => ExperimentError::Failure(e.to_string()),
    })?;
    let avg_cost = average_cost(&rep.ledger, false).map_err(usage)?;
    let avg_cost_with_coord = average_cost(&rep.ledger, true).map_err(usage)?;

    let mut baselines = BaselineSummary::default();
    let mut rho = std::collections::BTreeMap::new();
    for b in &cfg.baselines {
        match b {
            Baseline::Stat => match build_static_dan(trace, &params).and_then(|dan| stat_cost(&dan, trace)) {
                Ok(s) => {
                    baselines.stat_avg = Some(s);
                    rho.insert("stat".to_string(), avg_cost_with_coord / s);
                }
                Err(e) => baselines.stat_error = Some(e.to_string()),
            },
            Baseline::Oblivious => {
                let net = ObliviousNet::new(trace.nodes()).map_err(usage)?;
                let o = oblivious_cost(&net, trace).map_err(usage)?;
                baselines.oblivious_avg = Some(o);
                rho.insert("oblivious".to_string(), avg_cost_with_coord / o);
            }
            Baseline::LowerBound => {
                let lb = static_lower_bound(trace, params.delta_cap).map_err(usage)?;
                baselines.lower_bound = Some(lb);
                if lb > 0.0 {
                    rho.insert("lower_bound".to_string(), avg_cost_with_coord / lb);
                }
            }
        }
    }
    let windows = window_report(&rep.ledger, trace, params.delta_cap as f64).map_err(usage)?;
    let violations: Vec<String> = rep.network.validate_invariants().iter().map(|v| v.to_string()).collect();
    let summary = RunSummary {
        workload: name,
        n: trace.n(),
        m: trace.len(),
        seed,
        params,
        sparsity_delta: delta,
        sparsity,
        sparsity_warning: !sparsity.ok,
        avg_cost,
        avg_cost_with_coord,
        resets: rep.network.reset_count(),
        exhaustion_resets: rep.network.exhaustion_resets(),
        max_degree: rep.network.max_degree(),
        invalid_paths: rep.invalid_paths,
        baselines,
        rho,
        h_con: windows.iter().map(|w| w.h_con).collect(),
        invariants_ok: violations.is_empty() && rep.invalid_paths == 0,
        violations,
    };
    Ok((summary, rep))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, ExperimentError> {
    fs::File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    writeln!(out).and_then(|_| out.flush()).map_err(io_err(path))
}

fn out_dir(cfg: &ExperimentConfig, rep: usize) -> Result<PathBuf, ExperimentError> {
    let dir = if cfg.repetitions > 1 { cfg.out.join(format!("rep_{rep}")) } else { cfg.out.clone() };
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    Ok(dir)
}

/// Replays one workload (or the external trace) and writes `ledger.csv`,
/// `windows.csv`, `snapshot.json` and `summary.json` into the output
/// directory, one subdirectory per repetition when there are several.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<Vec<RunSummary>, ExperimentError> {
    let n = cfg.single_n()?;
    let kind = if cfg.trace.is_some() { None } else { Some(cfg.single_workload()?) };
    let mut out = Vec::new();
    for i in 0..cfg.repetitions {
        let seed = cfg.seed + i as u64;
        let (name, trace) = load_trace(cfg, kind, n, seed)?;
        let (summary, rep) = summarize(cfg, name, &trace, seed)?;
        let dir = out_dir(cfg, i)?;
        let path = dir.join("ledger.csv");
        let mut w = create(&path)?;
        write_ledger_csv(&rep.ledger, &mut w).and_then(|_| w.flush()).map_err(io_err(&path))?;
        let rows = window_report(&rep.ledger, &trace, summary.params.delta_cap as f64).map_err(usage)?;
        let path = dir.join("windows.csv");
        let mut w = create(&path)?;
        write_window_csv(&rows, &mut w).and_then(|_| w.flush()).map_err(io_err(&path))?;
        write_json(&dir.join("snapshot.json"), &rep.network.snapshot())?;
        write_json(&dir.join("summary.json"), &summary)?;
        out.push(summary);
    }
    Ok(out)
}

pub const COMPARE_CSV_HEADER: &str =
    "workload,n,m,renet_avg,renet_avg_with_coord,stat_avg,oblivious_avg,lower_bound,rho";

/// One row of the comparison table, averaged over repetitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub workload: String,
    pub n: usize,
    pub m: usize,
    pub renet_avg: f64,
    pub renet_avg_with_coord: f64,
    pub stat_avg: Option<f64>,
    pub oblivious_avg: Option<f64>,
    pub lower_bound: Option<f64>,
    /// `renet_avg_with_coord / stat_avg`.
    pub rho: Option<f64>,
}

fn mean_opt(xs: &[Option<f64>]) -> Option<f64> {
    let v: Option<Vec<f64>> = xs.iter().copied().collect();
    v.filter(|v| !v.is_empty()).map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

/// Runs every `(workload, n)` cell and writes `compare.csv`.
pub fn cmd_compare(cfg: &ExperimentConfig) -> Result<Vec<CompareRow>, ExperimentError> {
    if cfg.n.is_empty() {
        return Err(usage("compare needs at least one value of --n"));
    }
    if cfg.trace.is_some() {
        return Err(usage("compare generates its own traces; drop --trace"));
    }
    let mut rows = Vec::new();
    for &kind in &cfg.workload {
        for &n in &cfg.n {
            let mut cells = Vec::new();
            for i in 0..cfg.repetitions {
                let seed = cfg.seed + i as u64;
                let (name, trace) = load_trace(cfg, Some(kind), Some(n), seed)?;
                cells.push(summarize(cfg, name, &trace, seed)?.0);
            }
            let reps = cells.len() as f64;
            let first = &cells[0];
            let stat_avg = mean_opt(&cells.iter().map(|s| s.baselines.stat_avg).collect::<Vec<_>>());
            let with_coord = cells.iter().map(|s| s.avg_cost_with_coord).sum::<f64>() / reps;
            rows.push(CompareRow {
                workload: first.workload.clone(),
                n,
                m: first.m,
                renet_avg: cells.iter().map(|s| s.avg_cost).sum::<f64>() / reps,
                renet_avg_with_coord: with_coord,
                stat_avg,
                oblivious_avg: mean_opt(&cells.iter().map(|s| s.baselines.oblivious_avg).collect::<Vec<_>>()),
                lower_bound: mean_opt(&cells.iter().map(|s| s.baselines.lower_bound).collect::<Vec<_>>()),
                rho: stat_avg.map(|s| with_coord / s),
            });
        }
    }
    fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    let path = cfg.out.join("compare.csv");
    let mut w = create(&path)?;
    write_compare_csv(&rows, &mut w).and_then(|_| w.flush()).map_err(io_err(&path))?;
    Ok(rows)
}

pub fn write_compare_csv<W: Write>(rows: &[CompareRow], mut out: W) -> std::io::Result<()> {
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.9}")).unwrap_or_default();
    writeln!(out, "{COMPARE_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.9},{:.9},{},{},{},{}",
            r.workload,
            r.n,
            r.m,
            r.renet_avg,
            r.renet_avg_with_coord,
            opt(r.stat_avg),
            opt(r.oblivious_avg),
            opt(r.lower_bound),
            opt(r.rho)
        )?;
    }
    Ok(())
}

/// Windowed and prefix entropies of one trace, written to `entropy.csv`.
pub fn cmd_entropy(cfg: &ExperimentConfig) -> Result<PathBuf, ExperimentError> {
    let n = cfg.single_n()?;
    let kind = if cfg.trace.is_some() { None } else { Some(cfg.single_workload()?) };
    let (_, trace) = load_trace(cfg, kind, n, cfg.seed)?;
    let window = cfg.window.unwrap_or((trace.len() / 10).max(1));
    let stride = cfg.stride.unwrap_or(window);
    let samples = windowed_entropy_report(&trace, window, stride, cfg.entropy_base).map_err(usage)?;
    fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    let path = cfg.out.join("entropy.csv");
    let mut w = create(&path)?;
    write_entropy_csv(&samples, &mut w).and_then(|_| w.flush()).map_err(io_err(&path))?;
    Ok(path)
}

/// Loads a snapshot and audits it. `Ok` carries the violations found; an
/// unreadable or unparsable file is a usage error.
pub fn cmd_validate(path: &Path) -> Result<Vec<String>, ExperimentError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let snap: NetworkSnapshot =
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: malformed snapshot: {e}", path.display())))?;
    match Network::from_snapshot(&snap) {
        Ok(net) => Ok(net.validate_invariants().iter().map(|v| v.to_string()).collect()),
        Err(e) => Ok(vec![e.to_string()]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(args: &[&str]) -> Result<ExperimentConfig, ExperimentError> {
        ExperimentConfig::from_args(args)
    }

    #[test]
    fn flags_override_defaults() {
        let c = cfg(&["--workload", "star_zipf", "--n", "64,256", "--m", "500", "--c", "2", "--seed", "9"]).unwrap();
        assert_eq!(c.workload, vec![WorkloadKind::StarZipf]);
        assert_eq!(c.n, vec![64, 256]);
        assert_eq!((c.m, c.c, c.seed), (500, 2.0, 9));
        let c = cfg(&["--rotation-accounting", "raw", "--out", "123", "--trace", "t.csv"]).unwrap();
        assert_eq!(c.rotation_accounting, RotationAccounting::Raw);
        assert_eq!(c.out, PathBuf::from("123"));
        assert_eq!(c.trace, Some(PathBuf::from("t.csv")));
    }

    #[test]
    fn bad_flags_are_usage_errors() {
        for args in [&["--bogus", "1"][..], &["--n"], &["n", "4"], &["--m", "many"], &["--workload", "ring"]] {
            let e = cfg(args).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{args:?}: {e}");
        }
    }

    #[test]
    fn config_round_trips() {
        let c = cfg(&["--workload", "torus,product_dist", "--alpha", "1.5", "--r", "3"]).unwrap();
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&json).unwrap(), c);
    }

    #[test]
    fn config_file_then_flags() {
        let dir = std::env::temp_dir().join(format!("renet-cfg-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.json");
        fs::write(&path, r#"{"n": [100], "m": 77, "c": 1.0}"#).unwrap();
        let p = path.to_str().unwrap();
        let c = cfg(&["--config", p, "--m", "88"]).unwrap();
        assert_eq!((c.n.clone(), c.m, c.c), (vec![100], 88, 1.0));
        fs::write(&path, r#"{"nn": 1}"#).unwrap();
        assert_eq!(cfg(&["--config", p]).unwrap_err().exit_code(), 2);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn compare_rejects_empty_n() {
        let c = cfg(&[] as &[&str]).unwrap();
        assert!(c.n.is_empty());
        assert!(cfg(&["--n", ""]).unwrap().n.is_empty());
        assert_eq!(cmd_compare(&c).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn m_per_n_scales_the_trace() {
        let c = cfg(&["--m-per-n", "50"]).unwrap();
        assert_eq!(c.workload_spec(WorkloadKind::Torus, 64).len(), 3200);
        assert_eq!(c.workload_spec(WorkloadKind::RoundRobinGrids, 64).len(), 3200);
    }

    #[test]
    fn missing_snapshot_is_a_usage_error() {
        let e = cmd_validate(Path::new("/nonexistent/snapshot.json")).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }
}
