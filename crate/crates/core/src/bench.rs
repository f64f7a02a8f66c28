//! Benchmark runs, parameter sweeps and end-to-end verification.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Barrier;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    AbortReason, CommitOutcome, Engine, EngineConfig, EngineError, Fallback, PhaseTimes, Protocol,
    RecordedHistory, WorkerStats, PHASES,
};
use crate::history::{
    check_recoverable, check_strictly_serializable, Schedule, SerialOrder, VersionOrder,
};
use crate::mvsg::{build_mvsg, is_acyclic, serial_order};
use crate::workload::{execute, Generator, OpKind, WorkloadConfig, WorkloadError};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("matrix: {0}")]
    Matrix(#[from] toml::de::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub protocol: Protocol,
    pub threads: usize,
    pub duration_s: f64,
    pub epoch_ms: u64,
    pub workload_name: String,
    pub workload: WorkloadConfig,
    /// Record and check the history; workers stop after `txns_per_worker`.
    pub verify: bool,
    pub txns_per_worker: Option<u64>,
    /// Time every `n`th commit path; 0 disables the breakdown.
    pub sample_every: u32,
    pub dependency_guard: bool,
}

impl RunConfig {
    pub fn new(protocol: Protocol, workload_name: &str) -> Result<Self, BenchError> {
        let workload = WorkloadConfig::preset(workload_name)
            .ok_or_else(|| BenchError::Config(format!("unknown workload `{workload_name}`")))?;
        Ok(RunConfig {
            protocol,
            threads: 1,
            duration_s: 1.0,
            epoch_ms: 40,
            workload_name: workload_name.to_string(),
            workload,
            verify: false,
            txns_per_worker: None,
            sample_every: 64,
            dependency_guard: true,
        })
    }

    /// A small verification run over `txns` transactions in total.
    pub fn verification(protocol: Protocol, threads: usize, txns: u64, seed: u64) -> Self {
        let mut c = RunConfig::new(protocol, "ycsb-a").expect("preset exists");
        c.threads = threads;
        c.verify = true;
        c.txns_per_worker = Some(txns.div_ceil(threads.max(1) as u64));
        c.workload.seed = seed;
        c.sample_every = 0;
        c
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.threads == 0 {
            return Err(BenchError::Config("threads must be at least 1".into()));
        }
        if self.epoch_ms == 0 {
            return Err(BenchError::Config("epoch_ms must be at least 1".into()));
        }
        if self.txns_per_worker.is_none() && self.duration_s.is_nan() || self.duration_s <= 0.0 {
            return Err(BenchError::Config("duration must be positive".into()));
        }
        if self.verify && self.workload.value_size < 4 {
            return Err(BenchError::Config(
                "verification needs values of at least 4 bytes".into(),
            ));
        }
        self.workload.validate()?;
        Ok(())
    }
}

/// Serializability, recoverability and strictness of a recorded history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    /// The MVSG under the recorded version order is acyclic.
    pub mvsr: bool,
    pub recoverable: bool,
    pub strict: bool,
}

impl Verdict {
    pub fn all(&self) -> bool {
        self.mvsr && self.recoverable && self.strict
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub transactions: usize,
    pub operations: usize,
    pub verdict: Verdict,
    /// Reads that returned a value written by an omitting transaction.
    pub omitted_reads: u64,
    /// Reads whose value tag disagrees with the recorded writer.
    pub mismatched_reads: u64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub protocol: Protocol,
    pub workload: String,
    pub threads: usize,
    pub theta: f64,
    pub epoch_ms: u64,
    pub elapsed_s: f64,
    pub committed: u64,
    pub committed_nwr: u64,
    pub aborts: u64,
    pub abort_causes: BTreeMap<AbortReason, u64>,
    pub nwr_fallbacks: BTreeMap<Fallback, u64>,
    pub throughput: f64,
    pub commit_ratio_pct: f64,
    pub commit_with_nwr_pct: f64,
    /// Sampled nanoseconds per commit-path phase.
    pub breakdown: BTreeMap<String, u64>,
    pub breakdown_total_ns: u64,
    pub verify: Option<VerifyReport>,
}

impl RunReport {
    fn from_stats(
        c: &RunConfig,
        stats: &WorkerStats,
        phases: &PhaseTimes,
        elapsed: Duration,
    ) -> Self {
        let committed = stats.committed();
        let aborts = stats.aborted();
        let pct = |a: u64, b: u64| {
            if b == 0 {
                0.0
            } else {
                100.0 * a as f64 / b as f64
            }
        };
        RunReport {
            protocol: c.protocol,
            workload: c.workload_name.clone(),
            threads: c.threads,
            theta: c.workload.theta,
            epoch_ms: c.epoch_ms,
            elapsed_s: elapsed.as_secs_f64(),
            committed,
            committed_nwr: stats.committed_nwr,
            aborts,
            abort_causes: stats.aborts.clone(),
            nwr_fallbacks: stats.fallbacks.clone(),
            throughput: if elapsed.is_zero() {
                0.0
            } else {
                committed as f64 / elapsed.as_secs_f64()
            },
            commit_ratio_pct: pct(committed, committed + aborts),
            commit_with_nwr_pct: pct(stats.committed_nwr, committed),
            breakdown: PHASES
                .iter()
                .map(|p| (p.name().to_string(), phases.get(*p)))
                .collect(),
            breakdown_total_ns: phases.total_ns,
            verify: None,
        }
    }
}

/// Checks a history against the engine's version order and commit order.
pub fn verify(s: &Schedule, vo: &VersionOrder, serial: &SerialOrder) -> Verdict {
    let recoverable = check_recoverable(s);
    let Ok(g) = build_mvsg(s, vo) else {
        return Verdict {
            mvsr: false,
            recoverable,
            strict: false,
        };
    };
    let mvsr = is_acyclic(&g);
    let strict = mvsr
        && serial_order(s, &g, Some(serial)).is_some_and(|m| check_strictly_serializable(s, &m));
    Verdict {
        mvsr,
        recoverable,
        strict,
    }
}

#[derive(Debug, Default)]
struct WorkerResult {
    stats: WorkerStats,
    phases: PhaseTimes,
    nwr_txns: Vec<u32>,
    observed: Vec<u32>,
}

fn diff(after: &WorkerStats, before: &WorkerStats) -> WorkerStats {
    let mut d = after.clone();
    d.committed_baseline -= before.committed_baseline;
    d.committed_nwr -= before.committed_nwr;
    for (k, v) in &before.aborts {
        *d.aborts.get_mut(k).expect("counters only grow") -= v;
    }
    for (k, v) in &before.fallbacks {
        *d.fallbacks.get_mut(k).expect("counters only grow") -= v;
    }
    d.aborts.retain(|_, v| *v != 0);
    d.fallbacks.retain(|_, v| *v != 0);
    d
}

/// Runs one benchmark or verification run.
pub fn run(config: &RunConfig) -> Result<RunReport, BenchError> {
    run_recorded(config).map(|(r, _)| r)
}

/// Like [`run`], also returning the recorded history of a verification run.
pub fn run_recorded(
    config: &RunConfig,
) -> Result<(RunReport, Option<RecordedHistory>), BenchError> {
    config.validate()?;
    let verify_mode = config.verify;
    let engine = Engine::open(EngineConfig {
        protocol: config.protocol,
        epoch_ms: config.epoch_ms,
        value_size: config.workload.value_size,
        record_history: verify_mode.then_some(4_000_000),
        dependency_guard: config.dependency_guard,
        ..EngineConfig::default()
    })?;
    let zero = vec![0u8; config.workload.value_size];
    for k in 0..config.workload.records {
        engine.load(k, &zero);
    }
    let stop = AtomicBool::new(false);
    let measuring = AtomicBool::new(config.txns_per_worker.is_some());
    let start = Barrier::new(config.threads + 1);
    let mut results = Vec::with_capacity(config.threads);
    let mut elapsed = Duration::ZERO;
    let mut failure: Option<BenchError> = None;
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.threads)
            .map(|w| {
                let (engine, stop, measuring, start) = (&engine, &stop, &measuring, &start);
                scope.spawn(move || -> Result<WorkerResult, BenchError> {
                    let mut gen = Generator::new(&config.workload, w as u64)?;
                    let mut worker = engine.worker()?;
                    worker.sample_phases(config.sample_every);
                    let mut out = WorkerResult::default();
                    let mut base: Option<(WorkerStats, PhaseTimes)> =
                        verify_mode.then(Default::default);
                    start.wait();
                    let mut done = 0u64;
                    'txns: while !stop.load(Ordering::Relaxed) {
                        if config.txns_per_worker.is_some_and(|n| done >= n) {
                            break;
                        }
                        if base.is_none() && measuring.load(Ordering::Relaxed) {
                            base = Some((worker.stats().clone(), *worker.phases()));
                        }
                        let accesses = gen.next_txn();
                        loop {
                            let mut txn = worker.begin()?;
                            let id = txn.id();
                            if verify_mode {
                                let tag = id.to_le_bytes();
                                for a in &accesses {
                                    match a.kind {
                                        OpKind::Read => {
                                            let v = txn.read(a.key)?;
                                            out.observed.push(u32::from_le_bytes(
                                                v[..4].try_into().expect("4 bytes"),
                                            ));
                                        }
                                        OpKind::Write => txn.write(a.key, &tag)?,
                                    }
                                }
                            } else {
                                execute(&mut txn, &accesses, |_| gen.value())?;
                            }
                            match txn.commit()? {
                                CommitOutcome::Aborted { .. } => {
                                    if stop.load(Ordering::Relaxed) {
                                        break 'txns;
                                    }
                                }
                                CommitOutcome::CommittedNwr { .. } => {
                                    out.nwr_txns.push(id);
                                    break;
                                }
                                CommitOutcome::CommittedBaseline { .. } => break,
                            }
                        }
                        done += 1;
                    }
                    let (bs, bp) =
                        base.unwrap_or_else(|| (worker.stats().clone(), *worker.phases()));
                    out.stats = diff(worker.stats(), &bs);
                    let mut ph = *worker.phases();
                    for i in 0..ph.ns.len() {
                        ph.ns[i] -= bp.ns[i];
                    }
                    ph.total_ns -= bp.total_ns;
                    ph.samples -= bp.samples;
                    out.phases = ph;
                    Ok(out)
                })
            })
            .collect();
        start.wait();
        let t0 = Instant::now();
        if config.txns_per_worker.is_none() {
            // One warmup epoch, then the measured window.
            std::thread::sleep(Duration::from_millis(config.epoch_ms));
            measuring.store(true, Ordering::SeqCst);
            let t1 = Instant::now();
            std::thread::sleep(Duration::from_secs_f64(config.duration_s));
            stop.store(true, Ordering::SeqCst);
            elapsed = t1.elapsed();
        }
        for h in handles {
            match h.join().expect("worker panicked") {
                Ok(r) => results.push(r),
                Err(e) => {
                    stop.store(true, Ordering::SeqCst);
                    failure.get_or_insert(e);
                }
            }
        }
        if config.txns_per_worker.is_some() {
            elapsed = t0.elapsed();
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let mut stats = WorkerStats::default();
    let mut phases = PhaseTimes::default();
    for r in &results {
        stats.absorb(&r.stats);
        phases.absorb(&r.phases);
    }
    let mut report = RunReport::from_stats(config, &stats, &phases, elapsed);
    let mut history = None;
    if verify_mode {
        let h = engine.recorded_history()?;
        let verdict = verify(&h.schedule, &h.version_order, &h.serial_order);
        let omitted: HashSet<u32> = results
            .iter()
            .flat_map(|r| r.nwr_txns.iter().copied())
            .collect();
        let omitted_reads = results
            .iter()
            .flat_map(|r| &r.observed)
            .filter(|t| omitted.contains(t))
            .count() as u64;
        let recorded: Vec<u32> = h
            .schedule
            .ops()
            .iter()
            .filter_map(|op| match op {
                crate::history::Op::Read { writer, .. } => Some(writer.0),
                _ => None,
            })
            .collect();
        let mut observed: Vec<u32> = results
            .iter()
            .flat_map(|r| r.observed.iter().copied())
            .collect();
        let mut rec_sorted = recorded;
        observed.sort_unstable();
        rec_sorted.sort_unstable();
        let mismatched_reads = (observed
            .iter()
            .zip(&rec_sorted)
            .filter(|(a, b)| a != b)
            .count()
            + observed.len().abs_diff(rec_sorted.len())) as u64;
        report.verify = Some(VerifyReport {
            transactions: h.schedule.transactions().count(),
            operations: h.schedule.len(),
            verdict,
            omitted_reads,
            mismatched_reads,
            passed: verdict.all() && omitted_reads == 0 && mismatched_reads == 0,
        });
        history = Some(h);
    }
    engine.close();
    Ok((report, history))
}

/// A scalar or a list of values in a sweep matrix.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

/// Sweep axes. Every field may be a scalar or an array; runs cover the
/// cartesian product.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Matrix {
    pub protocol: OneOrMany<Protocol>,
    #[serde(default = "one_thread")]
    pub threads: OneOrMany<usize>,
    #[serde(default = "default_theta")]
    pub theta: OneOrMany<f64>,
    #[serde(default = "default_epoch")]
    pub epoch_ms: OneOrMany<u64>,
    #[serde(default = "default_duration")]
    pub duration: OneOrMany<f64>,
    #[serde(default = "default_workload")]
    pub workload: OneOrMany<String>,
    pub records: Option<u64>,
    pub seed: Option<u64>,
}

fn one_thread() -> OneOrMany<usize> {
    OneOrMany::One(1)
}
fn default_theta() -> OneOrMany<f64> {
    OneOrMany::One(0.9)
}
fn default_epoch() -> OneOrMany<u64> {
    OneOrMany::One(40)
}
fn default_duration() -> OneOrMany<f64> {
    OneOrMany::One(1.0)
}
fn default_workload() -> OneOrMany<String> {
    OneOrMany::One("ycsb-a".into())
}

impl Matrix {
    pub fn parse(text: &str) -> Result<Self, BenchError> {
        Ok(toml::from_str(text)?)
    }

    pub fn configs(&self) -> Result<Vec<RunConfig>, BenchError> {
        let mut out = Vec::new();
        for protocol in self.protocol.values() {
            for workload in self.workload.values() {
                for threads in self.threads.values() {
                    for theta in self.theta.values() {
                        for epoch_ms in self.epoch_ms.values() {
                            for duration_s in self.duration.values() {
                                let mut c = RunConfig::new(protocol, &workload)?;
                                c.threads = threads;
                                c.workload.theta = theta;
                                c.epoch_ms = epoch_ms;
                                c.duration_s = duration_s;
                                if let Some(r) = self.records {
                                    c.workload.records = r;
                                }
                                if let Some(s) = self.seed {
                                    c.workload.seed = s;
                                }
                                out.push(c);
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

pub const CSV_HEADER: [&str; 8] = [
    "protocol",
    "threads",
    "theta",
    "epoch_ms",
    "throughput",
    "aborts",
    "commit_pct",
    "nwr_pct",
];

/// Runs every config and writes one CSV row each. A failed run keeps its
/// parameters, leaves the metrics empty and is returned with its error.
pub fn sweep<W: std::io::Write>(
    configs: &[RunConfig],
    out: W,
    mut progress: impl FnMut(&RunConfig, &Result<RunReport, BenchError>),
) -> Result<Vec<(RunConfig, BenchError)>, BenchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    let mut errors = Vec::new();
    for c in configs {
        let r = run(c);
        progress(c, &r);
        let head = [
            c.protocol.to_string(),
            c.threads.to_string(),
            c.workload.theta.to_string(),
            c.epoch_ms.to_string(),
        ];
        match r {
            Ok(rep) => {
                w.write_record(head.iter().cloned().chain([
                    format!("{:.1}", rep.throughput),
                    rep.aborts.to_string(),
                    format!("{:.2}", rep.commit_ratio_pct),
                    format!("{:.2}", rep.commit_with_nwr_pct),
                ]))?;
            }
            Err(e) => {
                w.write_record(
                    head.iter()
                        .cloned()
                        .chain(std::iter::repeat_n(String::new(), 4)),
                )?;
                errors.push((c.clone(), e));
            }
        }
    }
    w.flush()?;
    Ok(errors)
}

/// Reads a sweep matrix file.
pub fn load_matrix(path: &Path) -> Result<Matrix, BenchError> {
    Matrix::parse(&std::fs::read_to_string(path)?)
}

/// Convenience: verification runs that must all pass.
pub fn verified_runs(
    protocol: Protocol,
    runs: u64,
    threads: usize,
    txns: u64,
) -> Result<Vec<VerifyReport>, BenchError> {
    (0..runs)
        .map(|i| {
            let c = RunConfig::verification(protocol, threads, txns, i + 1);
            Ok(run(&c)?.verify.expect("verification run"))
        })
        .collect()
}
