//! The engine as an embedded key-value store. Two concurrent blind writers
//! of the same key: the first installs its value, the second commits
//! without writing anything.

use std::error::Error;
use std::time::Duration;

use nwr::engine::{CommitOutcome, Engine, EngineConfig, Protocol};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let e = Engine::open(EngineConfig {
        protocol: Protocol::SiloNwr,
        epoch_ms: 10,
        ..Default::default()
    })?;
    for k in 0..4 {
        e.load(k, b"initval0");
    }

    let mut w = e.worker()?;
    let mut t = w.begin()?;
    let old = t.read(1)?;
    t.write(1, b"nextval1")?;
    t.insert(100, b"freshval");
    let out = t.commit()?;
    println!(
        "rmw of key 1 from {:?}: {out:?}",
        String::from_utf8_lossy(&old)
    );

    let mut other = e.worker()?;
    let mut a = w.begin()?;
    let mut b = other.begin()?;
    a.write(2, b"from-a!!")?;
    b.write(2, b"from-b!!")?;
    let ra = a.commit()?;
    let rb = b.commit()?;
    println!("blind a: {ra:?}");
    println!("blind b: {rb:?}");
    println!(
        "key 2 holds {:?}",
        String::from_utf8_lossy(&e.peek(2).unwrap())
    );
    println!("pivot on key 2: {:?}", e.pivot(2));
    if matches!(rb, CommitOutcome::CommittedNwr { .. }) {
        assert_eq!(e.peek(2).unwrap(), b"from-a!!");
    }

    let epoch = out.epoch().unwrap();
    let durable = e.wait_durable(epoch, Duration::from_secs(2));
    println!(
        "epoch {epoch} durable: {durable}; worker stats {:?}",
        w.stats()
    );
    e.close();
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
