//! A recorded multi-threaded run whose history is checked afterwards:
//! serializable under the engine's version order, recoverable, strictly
//! serializable, and no omitted value ever read.

use std::error::Error;

use nwr::bench::{run_recorded, RunConfig};
use nwr::engine::Protocol;
use nwr::history::serialize_history;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    for protocol in [Protocol::Silo, Protocol::SiloNwr] {
        let mut c = RunConfig::verification(protocol, 3, 400, 7);
        c.workload.records = 64;
        let (report, history) = run_recorded(&c)?;
        let v = report.verify.as_ref().ok_or("no verification")?;
        println!(
            "{protocol}: {} txns, {} ops, {} omitted, verdict {:?}, passed {}",
            v.transactions, v.operations, report.committed_nwr, v.verdict, v.passed
        );
        assert!(v.passed);
        if let Some(h) = history {
            let text = serialize_history(&h.schedule);
            println!(
                "    first ops: {}",
                text.lines().take(6).collect::<Vec<_>>().join(" | ")
            );
        }
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
