//! Short YCSB runs for both protocols with the latency breakdown.
//! `NWR_SECONDS` sets the run length (default 0.3).

use std::error::Error;

use nwr::bench::{run, RunConfig};
use nwr::engine::Protocol;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let secs: f64 = std::env::var("NWR_SECONDS")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(0.3);
    let threads = std::thread::available_parallelism()
        .map_or(2, |n| n.get())
        .min(8);
    for workload in ["ycsb-a", "ycsb-b"] {
        for protocol in [Protocol::Silo, Protocol::SiloNwr] {
            let mut c = RunConfig::new(protocol, workload)?;
            c.threads = threads;
            c.duration_s = secs;
            let r = run(&c)?;
            println!(
                "{workload} {protocol:<8} {threads} threads: {:>10.0} txn/s, {:>5.2}% committed, {:>5.2}% omitted",
                r.throughput, r.commit_ratio_pct, r.commit_with_nwr_pct
            );
            let total = r.breakdown_total_ns.max(1) as f64;
            let parts: Vec<String> = r
                .breakdown
                .iter()
                .map(|(k, v)| format!("{k} {:.0}%", 100.0 * *v as f64 / total))
                .collect();
            println!("    {}", parts.join(", "));
        }
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
