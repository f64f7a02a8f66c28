use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use nwr::bench::{self, RunConfig};
use nwr::engine::Protocol;
use nwr::history::{
    check_recoverable, check_strictly_serializable, parse_history, parse_serial_order,
    parse_version_order, serialize_history, serialize_serial_order, serialize_version_order,
    Schedule, TxnId, VersionOrder,
};
use nwr::mvsg::{build_mvsg, is_acyclic, is_mvsr, serial_order};
use nwr::rules::{check_rules, NwrInstance};

#[derive(Parser)]
#[command(
    name = "nwr",
    version,
    about = "Transactional KV engine with write omission, benchmarks and oracle"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check recorded or hand-written histories.
    #[command(subcommand)]
    Oracle(Oracle),
    /// Run benchmarks.
    #[command(subcommand)]
    Bench(Bench),
}

#[derive(Subcommand)]
enum Oracle {
    /// Serializability of a history, under a given version order or any.
    Check {
        history: PathBuf,
        #[arg(long)]
        version_order: Option<PathBuf>,
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        recoverable: bool,
    },
    /// Per-rule verdicts for committing `--txn` under a candidate order.
    Nwr {
        history: PathBuf,
        base_vo: PathBuf,
        candidate_vo: PathBuf,
        #[arg(long)]
        txn: u32,
    },
    /// Serializability, recoverability and strictness under given orders.
    Verify {
        history: PathBuf,
        version_order: PathBuf,
        serial_order: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum Bench {
    /// One run; prints or writes a JSON report.
    Run(RunArgs),
    /// Runs the cartesian product of a TOML matrix into a CSV.
    Sweep {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML file with any of the flags below; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    protocol: Option<Protocol>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    epoch_ms: Option<u64>,
    /// Seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// ycsb-a, ycsb-b or rmw.
    #[arg(long)]
    workload: Option<String>,
    #[arg(long)]
    records: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Record the history and check it; needs --txns.
    #[arg(long)]
    verify: bool,
    /// Transactions in total, split across threads.
    #[arg(long)]
    txns: Option<u64>,
    /// Write the recorded history, version order and serial order here.
    #[arg(long)]
    dump: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RunFile {
    protocol: Option<Protocol>,
    threads: Option<usize>,
    theta: Option<f64>,
    epoch_ms: Option<u64>,
    duration: Option<f64>,
    workload: Option<String>,
    records: Option<u64>,
    seed: Option<u64>,
    verify: Option<bool>,
    txns: Option<u64>,
}

type Res<T> = Result<T, Box<dyn std::error::Error>>;

fn read(p: &Path) -> Res<String> {
    fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()).into())
}

fn load_history(p: &Path) -> Res<Schedule> {
    Ok(parse_history(&read(p)?)?)
}

fn load_vo(p: &Path) -> Res<VersionOrder> {
    Ok(parse_version_order(&read(p)?)?)
}

fn pass(b: bool) -> &'static str {
    if b {
        "pass"
    } else {
        "fail"
    }
}

fn oracle(cmd: Oracle) -> Res<bool> {
    match cmd {
        Oracle::Check {
            history,
            version_order,
            strict,
            recoverable,
        } => {
            let s = load_history(&history)?;
            let mut ok = true;
            let witness = match version_order {
                Some(p) => {
                    let vo = load_vo(&p)?;
                    let acyclic = is_acyclic(&build_mvsg(&s, &vo)?);
                    println!("mvsg: {}", if acyclic { "acyclic" } else { "cyclic" });
                    acyclic.then_some(vo)
                }
                None => {
                    let (found, w) = is_mvsr(&s)?;
                    println!("mvsr: {}", pass(found));
                    w
                }
            };
            ok &= witness.is_some();
            if let Some(vo) = &witness {
                print!("witness:\n{}", serialize_version_order(vo));
            }
            if strict {
                let m = witness.as_ref().and_then(|vo| {
                    let g = build_mvsg(&s, vo).ok()?;
                    serial_order(&s, &g, None).filter(|m| check_strictly_serializable(&s, m))
                });
                println!("strict: {}", pass(m.is_some()));
                if let Some(m) = &m {
                    print!("{}", serialize_serial_order(m));
                }
                ok &= m.is_some();
            }
            if recoverable {
                let r = check_recoverable(&s);
                println!("recoverable: {}", pass(r));
                ok &= r;
            }
            Ok(ok)
        }
        Oracle::Nwr {
            history,
            base_vo,
            candidate_vo,
            txn,
        } => {
            let inst = NwrInstance::new(
                load_history(&history)?,
                load_vo(&base_vo)?,
                load_vo(&candidate_vo)?,
                TxnId(txn),
            )?;
            let v = check_rules(&inst);
            println!("{v}");
            Ok(v.all())
        }
        Oracle::Verify {
            history,
            version_order,
            serial_order: serial,
        } => {
            let s = load_history(&history)?;
            let vo = load_vo(&version_order)?;
            let m = match serial {
                Some(p) => parse_serial_order(&read(&p)?)?,
                None => {
                    let g = build_mvsg(&s, &vo)?;
                    serial_order(&s, &g, None).unwrap_or_default()
                }
            };
            let v = bench::verify(&s, &vo, &m);
            println!("mvsr (witness order): {}", pass(v.mvsr));
            println!("recoverable: {}", pass(v.recoverable));
            println!("strictly serializable: {}", pass(v.strict));
            Ok(v.all())
        }
    }
}

fn run_config(a: &RunArgs) -> Res<RunConfig> {
    let file: RunFile = match &a.config {
        Some(p) => toml::from_str(&read(p)?)?,
        None => RunFile::default(),
    };
    let workload = a
        .workload
        .clone()
        .or(file.workload)
        .unwrap_or_else(|| "ycsb-a".into());
    let mut c = RunConfig::new(
        a.protocol.or(file.protocol).unwrap_or(Protocol::SiloNwr),
        &workload,
    )?;
    c.threads = a.threads.or(file.threads).unwrap_or(1);
    c.epoch_ms = a.epoch_ms.or(file.epoch_ms).unwrap_or(40);
    c.duration_s = a.duration.or(file.duration).unwrap_or(1.0);
    if let Some(t) = a.theta.or(file.theta) {
        c.workload.theta = t;
    }
    if let Some(r) = a.records.or(file.records) {
        c.workload.records = r;
    }
    if let Some(s) = a.seed.or(file.seed) {
        c.workload.seed = s;
    }
    c.verify = a.verify || file.verify.unwrap_or(false);
    if let Some(n) = a.txns.or(file.txns) {
        c.txns_per_worker = Some(n.div_ceil(c.threads.max(1) as u64));
    }
    if c.verify && c.txns_per_worker.is_none() {
        return Err("--verify needs --txns".into());
    }
    Ok(c)
}

fn bench_cmd(cmd: Bench) -> Res<bool> {
    match cmd {
        Bench::Run(a) => {
            let c = run_config(&a)?;
            let (report, history) = bench::run_recorded(&c)?;
            if let (Some(dir), Some(h)) = (&a.dump, &history) {
                fs::create_dir_all(dir)?;
                fs::write(dir.join("history.txt"), serialize_history(&h.schedule))?;
                fs::write(
                    dir.join("version_order.txt"),
                    serialize_version_order(&h.version_order),
                )?;
                fs::write(
                    dir.join("serial_order.txt"),
                    serialize_serial_order(&h.serial_order),
                )?;
            }
            let json = serde_json::to_string_pretty(&report)?;
            match &a.out {
                Some(p) => fs::write(p, json + "\n")?,
                None => println!("{json}"),
            }
            eprintln!(
                "{} {} threads: {:.0} txn/s, {} aborts, {:.1}% committed with omission",
                report.protocol,
                report.threads,
                report.throughput,
                report.aborts,
                report.commit_with_nwr_pct
            );
            Ok(report.verify.is_none_or(|v| v.passed))
        }
        Bench::Sweep { matrix, out } => {
            let configs = bench::load_matrix(&matrix)?.configs()?;
            let file = fs::File::create(&out)?;
            let errors = bench::sweep(&configs, file, |c, r| match r {
                Ok(r) => eprintln!(
                    "{} threads={} theta={} epoch_ms={}: {:.0} txn/s",
                    c.protocol, c.threads, c.workload.theta, c.epoch_ms, r.throughput
                ),
                Err(e) => eprintln!("{} threads={}: {e}", c.protocol, c.threads),
            })?;
            Ok(errors.is_empty())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Oracle(o) => oracle(o),
        Command::Bench(b) => bench_cmd(b),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
