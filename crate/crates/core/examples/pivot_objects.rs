//! Pivot version objects: the 128-bit summary each record carries, and the
//! constant-time check that stands in for the exact successor validation.

use std::error::Error;

use nwr::pivot::{rank, slot_of, validate_compressed, AtomicPivot, PivotVersionObject, ReadEntry};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let epoch = 7;
    let (x, y) = (11u64, 12u64);
    // The pivot on x is version 2 of this epoch. Its writer also read y's
    // third version and wrote z.
    let p = PivotVersionObject {
        epoch,
        pv: 2,
        ..Default::default()
    }
    .merge_read(y, rank(epoch, 3, epoch))
    .merge_write(13, rank(epoch, 1, epoch));
    println!("pivot on x: {p:?}");
    println!(
        "    slots: x={} y={} z={}",
        slot_of(x).get(),
        slot_of(y).get(),
        slot_of(13).get()
    );
    println!("    encoded: {:#034x}", p.encode());
    assert_eq!(PivotVersionObject::decode(p.encode()), p);

    let cell = AtomicPivot::new(PivotVersionObject::default());
    cell.store(p);
    println!("lock-free 128-bit cell: {}", AtomicPivot::is_lock_free());

    // A blind writer of x that read y's first version: its omitted write
    // lands before the pivot, and y's reader in the summary saw later data.
    let reads = [ReadEntry {
        key_hash: y,
        rank: rank(epoch, 1, epoch),
    }];
    let v = validate_compressed(&[(x, cell.load())], &reads, epoch);
    println!("same epoch: {v:?}");

    let v = validate_compressed(&[(x, cell.load())], &reads, epoch + 1);
    println!("next epoch: {v:?}");

    // Reading the newest z that the summary's writer produced closes a cycle.
    let reads = [ReadEntry {
        key_hash: 13,
        rank: rank(epoch, 1, epoch),
    }];
    let v = validate_compressed(&[(x, cell.load())], &reads, epoch);
    println!("read of a summarized write: {v:?}");
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
