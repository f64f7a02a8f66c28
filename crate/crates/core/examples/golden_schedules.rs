//! Checks the golden corpus: four schedules that are strictly serializable
//! under their version orders, one that is not serializable at all, and one
//! that reads dirty data.

use std::error::Error;
use std::path::PathBuf;

use nwr::history::{
    check_recoverable, check_strictly_serializable, parse_history, parse_version_order,
    serialize_serial_order,
};
use nwr::mvsg::{build_mvsg, is_acyclic, is_mvsr, serial_order};

fn golden(name: &str) -> Result<String, Box<dyn Error>> {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("testdata/golden")
        .join(name);
    Ok(std::fs::read_to_string(p)?)
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    for name in ["a", "b", "c", "d"] {
        let s = parse_history(&golden(&format!("{name}.history"))?)?;
        let vo = parse_version_order(&golden(&format!("{name}.vo"))?)?;
        let g = build_mvsg(&s, &vo)?;
        let m = serial_order(&s, &g, None).ok_or("no serial order")?;
        println!(
            "{name}: acyclic={} strict={} order={}",
            is_acyclic(&g),
            check_strictly_serializable(&s, &m),
            serialize_serial_order(&m).trim()
        );
        for e in g.edges() {
            println!("    {e}");
        }
        assert!(check_strictly_serializable(&s, &m));
    }

    let cross = parse_history(&golden("cross.history")?)?;
    let (ok, _) = is_mvsr(&cross)?;
    println!("cross: mvsr={ok}");
    assert!(!ok);

    let dirty = parse_history(&golden("dirty_read.history")?)?;
    println!("dirty_read: recoverable={}", check_recoverable(&dirty));
    assert!(!check_recoverable(&dirty));
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
