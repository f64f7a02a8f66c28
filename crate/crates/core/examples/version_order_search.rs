//! Brute-force search over version orders. Prints every order of a small
//! schedule with the resulting graph's verdict, then the witness.

use std::error::Error;

use nwr::history::{parse_history, serialize_version_order};
use nwr::mvsg::{build_mvsg, count_version_orders, enumerate_version_orders, is_acyclic, is_mvsr};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    // t2 reads x from t1 while t3 overwrites it; only some orders work.
    let s = parse_history("w 1 x\nw 3 x\nr 2 x 1\nc 1\nc 2\nc 3\n")?;
    println!("{} candidate orders", count_version_orders(&s));
    for vo in enumerate_version_orders(&s)? {
        let g = build_mvsg(&s, &vo)?;
        let line = serialize_version_order(&vo).replace('\n', "; ");
        println!(
            "  {line:<24} {}",
            if is_acyclic(&g) { "acyclic" } else { "cyclic" }
        );
    }
    let (ok, witness) = is_mvsr(&s)?;
    assert!(ok);
    print!("witness:\n{}", serialize_version_order(&witness.unwrap()));

    let cross = parse_history("r 1 x 0\nr 2 y 0\nw 1 y\nw 2 x\nc 1\nc 2\n")?;
    let (ok, _) = is_mvsr(&cross)?;
    println!("write skew serializable: {ok}");
    assert!(!ok);
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
