//! The five omission rules on hand-built instances.
//!
//! `t2` is still running and writes `x` blindly. Placing its version before
//! `t1`'s lets it commit without ever installing it. Once someone has read
//! `t1`'s version, that is only allowed if `t1` committed after `t2` began.

use std::error::Error;

use nwr::history::{parse_history, TxnId, VersionOrder};
use nwr::rules::{check_rules, successors, NwrInstance};

fn show(
    label: &str,
    history: &str,
    base: VersionOrder,
    candidate: VersionOrder,
) -> Result<bool, Box<dyn Error>> {
    let inst = NwrInstance::new(parse_history(history)?, base, candidate, TxnId(2))?;
    let v = check_rules(&inst);
    println!("{label}: {v}");
    println!("    successors of t2: {:?}", successors(&inst));
    Ok(v.all())
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let base = VersionOrder::new().with("x", &[0, 1]);
    let before_t1 = VersionOrder::new().with("x", &[0, 2, 1]);

    let concurrent = "w 2 x\nw 1 x\nc 1\n";
    assert!(show(
        "concurrent, omitted",
        concurrent,
        base.clone(),
        before_t1.clone()
    )?);

    // t3 read x1, so x2 before x1 puts t2 ahead of t1, which had already
    // committed when t2 started.
    let stale = "w 1 x\nc 1\nr 3 x 1\nc 3\nw 2 x\n";
    assert!(!show(
        "t1 finished first",
        stale,
        base.clone(),
        before_t1.clone()
    )?);

    let concurrent_reader = "w 2 x\nw 1 x\nc 1\nr 3 x 1\nc 3\n";
    assert!(show(
        "read after t2 began",
        concurrent_reader,
        base,
        before_t1
    )?);
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
