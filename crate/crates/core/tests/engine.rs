use std::sync::Arc;
use std::time::Duration;

use nwr::bench::verify;
use nwr::engine::{
    tid_epoch, tid_vn, AbortReason, CommitOutcome, Engine, EngineConfig, EngineError, FailingSink,
    Fallback, MemorySink, Protocol,
};
use nwr::pivot::slot_of;

fn engine(protocol: Protocol) -> Engine {
    let e = Engine::open(EngineConfig {
        protocol,
        ticker: false,
        record_history: Some(100_000),
        ..Default::default()
    })
    .unwrap();
    for k in 0..16 {
        e.load(k, &[0; 8]);
    }
    e
}

fn v(x: u8) -> [u8; 8] {
    [x; 8]
}

#[test]
fn empty_txn_commits_baseline() {
    let e = engine(Protocol::SiloNwr);
    let mut w = e.worker().unwrap();
    let t = w.begin().unwrap();
    assert_eq!(
        t.commit().unwrap(),
        CommitOutcome::CommittedBaseline { epoch: 1 }
    );
}

#[test]
fn begin_stamps_current_epoch() {
    let e = engine(Protocol::Silo);
    let mut w = e.worker().unwrap();
    assert_eq!(w.begin().unwrap().epoch(), 1);
    e.advance_epoch();
    assert_eq!(w.begin().unwrap().epoch(), e.current_epoch());
}

#[test]
fn reads_see_own_writes_and_initial_values() {
    let e = engine(Protocol::Silo);
    let mut w = e.worker().unwrap();
    let mut t = w.begin().unwrap();
    assert_eq!(t.read(3).unwrap(), v(0));
    t.write(3, &v(7)).unwrap();
    t.write(3, &v(8)).unwrap();
    assert_eq!(t.read(3).unwrap(), v(8));
    assert_eq!(t.is_blind(3), Some(false));
    t.write(4, &v(1)).unwrap();
    assert_eq!(t.is_blind(4), Some(true));
    assert!(matches!(t.read(99), Err(EngineError::KeyAbsent(99))));
    t.commit().unwrap();
    assert_eq!(e.peek(3).unwrap(), v(8));
}

#[test]
fn observed_tid_matches_record() {
    let e = engine(Protocol::Silo);
    let mut w = e.worker().unwrap();
    let mut t = w.begin().unwrap();
    t.read(2).unwrap();
    assert_eq!(t.observed_tid(2), e.tid_word(2));
}

#[test]
fn overwritten_read_aborts() {
    let e = engine(Protocol::SiloNwr);
    let mut a = e.worker().unwrap();
    let mut b = e.worker().unwrap();
    let mut ta = a.begin().unwrap();
    ta.read(1).unwrap();
    ta.write(2, &v(1)).unwrap();
    let mut tb = b.begin().unwrap();
    tb.read(1).unwrap();
    tb.write(1, &v(2)).unwrap();
    assert!(tb.commit().unwrap().is_committed());
    assert_eq!(
        ta.commit().unwrap(),
        CommitOutcome::Aborted {
            reason: AbortReason::ReadSetInvalid
        }
    );
    assert_eq!(e.peek(2).unwrap(), v(0));
}

#[test]
fn single_thread_never_aborts() {
    let e = engine(Protocol::SiloNwr);
    let mut w = e.worker().unwrap();
    for i in 0..200u64 {
        let mut t = w.begin().unwrap();
        t.read(i % 16).unwrap();
        t.write((i * 7) % 16, &v(i as u8)).unwrap();
        assert!(t.commit().unwrap().is_committed());
        if i % 50 == 0 {
            e.advance_epoch();
        }
    }
    assert_eq!(w.stats().aborted(), 0);
}

#[test]
fn first_blind_writer_installs_pivot_and_second_omits() {
    let e = engine(Protocol::SiloNwr);
    let mut a = e.worker().unwrap();
    let mut b = e.worker().unwrap();
    let mut ta = a.begin().unwrap();
    ta.write(5, &v(1)).unwrap();
    let mut tb = b.begin().unwrap();
    tb.write(5, &v(2)).unwrap();
    assert_eq!(
        ta.commit().unwrap(),
        CommitOutcome::CommittedBaseline { epoch: 1 }
    );
    let p = e.pivot(5).unwrap();
    assert_eq!((p.epoch, p.pv), (1, 1));
    let tid_before = e.tid_word(5);
    assert_eq!(
        tb.commit().unwrap(),
        CommitOutcome::CommittedNwr { epoch: 1 }
    );
    assert_eq!(e.peek(5).unwrap(), v(1));
    assert_eq!(e.tid_word(5), tid_before);
    assert_eq!(b.stats().committed_nwr, 1);
}

#[test]
fn stale_pivot_falls_back() {
    let e = engine(Protocol::SiloNwr);
    let mut a = e.worker().unwrap();
    let mut t = a.begin().unwrap();
    t.write(5, &v(1)).unwrap();
    assert!(matches!(
        t.commit().unwrap(),
        CommitOutcome::CommittedBaseline { .. }
    ));
    assert_eq!(a.stats().fallbacks.get(&Fallback::StFail), Some(&1));
    e.advance_epoch();
    let mut t = a.begin().unwrap();
    t.write(5, &v(2)).unwrap();
    assert!(matches!(
        t.commit().unwrap(),
        CommitOutcome::CommittedBaseline { epoch: 2 }
    ));
    let tid = e.tid_word(5).unwrap();
    assert_eq!((tid_epoch(tid), tid_vn(tid)), (2, 1));
}

#[test]
fn rmw_skips_omission() {
    let e = engine(Protocol::SiloNwr);
    let mut w = e.worker().unwrap();
    let mut t = w.begin().unwrap();
    t.write(6, &v(1)).unwrap();
    t.commit().unwrap();
    let mut t = w.begin().unwrap();
    t.read(6).unwrap();
    t.write(6, &v(2)).unwrap();
    assert!(matches!(
        t.commit().unwrap(),
        CommitOutcome::CommittedBaseline { .. }
    ));
    assert_eq!(w.stats().fallbacks.get(&Fallback::NotBlind), Some(&1));
}

#[test]
fn version_numbers_grow_within_epoch() {
    let e = engine(Protocol::Silo);
    let mut w = e.worker().unwrap();
    for i in 1..=3u32 {
        let mut t = w.begin().unwrap();
        t.read(7).unwrap();
        t.write(7, &v(i as u8)).unwrap();
        t.commit().unwrap();
        assert_eq!(tid_vn(e.tid_word(7).unwrap()), i);
    }
}

#[test]
fn omission_before_a_read_pivot_is_guarded() {
    // t_b reads the pivot of x and writes y; t_c reads y and writes x blind.
    // Placing t_c's x before the pivot would close t_c -> t_a -> t_b -> t_c,
    // which the merged sets of x do not reveal.
    let x = 1u64;
    let y = (2..16).find(|k| slot_of(*k) != slot_of(x)).unwrap();
    let e = engine(Protocol::SiloNwr);
    let mut a = e.worker().unwrap();
    let mut b = e.worker().unwrap();
    let mut c = e.worker().unwrap();
    let mut ta = a.begin().unwrap();
    ta.write(x, &v(1)).unwrap();
    assert!(ta.commit().unwrap().is_committed());
    let mut tb = b.begin().unwrap();
    tb.read(x).unwrap();
    tb.write(y, &v(2)).unwrap();
    assert!(tb.commit().unwrap().is_committed());
    let mut tc = c.begin().unwrap();
    tc.read(y).unwrap();
    tc.write(x, &v(3)).unwrap();
    assert!(matches!(
        tc.commit().unwrap(),
        CommitOutcome::CommittedBaseline { .. }
    ));
    assert_eq!(c.stats().fallbacks.get(&Fallback::Guard), Some(&1));
    let h = e.recorded_history().unwrap();
    assert!(verify(&h.schedule, &h.version_order, &h.serial_order).all());
}

#[test]
fn unguarded_omission_is_caught_by_the_oracle() {
    let x = 1u64;
    let y = (2..16).find(|k| slot_of(*k) != slot_of(x)).unwrap();
    let e = Engine::open(EngineConfig {
        protocol: Protocol::SiloNwr,
        ticker: false,
        record_history: Some(1000),
        dependency_guard: false,
        ..Default::default()
    })
    .unwrap();
    for k in 0..16 {
        e.load(k, &[0; 8]);
    }
    let mut w = e.worker().unwrap();
    let mut t = w.begin().unwrap();
    t.write(x, &v(1)).unwrap();
    t.commit().unwrap();
    let mut t = w.begin().unwrap();
    t.read(x).unwrap();
    t.write(y, &v(2)).unwrap();
    t.commit().unwrap();
    let mut t = w.begin().unwrap();
    t.read(y).unwrap();
    t.write(x, &v(3)).unwrap();
    assert!(matches!(
        t.commit().unwrap(),
        CommitOutcome::CommittedNwr { .. }
    ));
    let h = e.recorded_history().unwrap();
    assert!(!verify(&h.schedule, &h.version_order, &h.serial_order).mvsr);
}

#[test]
fn concurrent_duplicate_inserts() {
    let e = Arc::new(engine(Protocol::SiloNwr));
    let outcomes: Vec<CommitOutcome> = std::thread::scope(|s| {
        let hs: Vec<_> = (0..2)
            .map(|i| {
                let e = &e;
                s.spawn(move || {
                    let mut w = e.worker().unwrap();
                    let mut t = w.begin().unwrap();
                    t.insert(1000, &v(i));
                    t.commit().unwrap()
                })
            })
            .collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert_eq!(outcomes.iter().filter(|o| o.is_committed()).count(), 1);
    assert!(outcomes.contains(&CommitOutcome::Aborted {
        reason: AbortReason::DuplicateKey
    }));
    assert_eq!(e.pivot(1000).unwrap().epoch, e.current_epoch());
}

#[test]
fn insert_then_read() {
    let e = engine(Protocol::Silo);
    let mut w = e.worker().unwrap();
    let mut t = w.begin().unwrap();
    t.insert(500, &v(9));
    assert_eq!(
        t.commit().unwrap(),
        CommitOutcome::CommittedBaseline { epoch: 1 }
    );
    let mut t = w.begin().unwrap();
    assert_eq!(t.read(500).unwrap(), v(9));
}

#[test]
fn abort_leaves_records_untouched() {
    let e = engine(Protocol::Silo);
    let mut w = e.worker().unwrap();
    let mut t = w.begin().unwrap();
    t.write(3, &v(5)).unwrap();
    t.abort();
    assert_eq!(e.peek(3).unwrap(), v(0));
}

#[test]
fn omitted_writes_are_not_logged() {
    let sink = Arc::new(MemorySink::default());
    let e = Engine::open(EngineConfig {
        protocol: Protocol::SiloNwr,
        ticker: false,
        sink: Some(sink.clone()),
        ..Default::default()
    })
    .unwrap();
    e.load(1, &v(0));
    let mut a = e.worker().unwrap();
    let mut b = e.worker().unwrap();
    let mut ta = a.begin().unwrap();
    ta.write(1, &v(1)).unwrap();
    let mut tb = b.begin().unwrap();
    tb.write(1, &v(2)).unwrap();
    ta.commit().unwrap();
    assert!(matches!(
        tb.commit().unwrap(),
        CommitOutcome::CommittedNwr { .. }
    ));
    e.advance_epoch();
    let recs = sink.records();
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0].value, v(1).to_vec());
}

#[test]
fn acknowledgement_waits_for_the_epoch() {
    let e = engine(Protocol::Silo);
    let mut w = e.worker().unwrap();
    let mut t = w.begin().unwrap();
    t.write(1, &v(1)).unwrap();
    let epoch = t.commit().unwrap().epoch().unwrap();
    assert!(e.durable_epoch() < epoch);
    assert!(!e.wait_durable(epoch, Duration::from_millis(10)));
    e.advance_epoch();
    assert!(e.wait_durable(epoch, Duration::from_millis(10)));
}

#[test]
fn ticker_advances_idle_epochs() {
    let e = Engine::open(EngineConfig {
        epoch_ms: 2,
        ..Default::default()
    })
    .unwrap();
    let start = e.current_epoch();
    std::thread::sleep(Duration::from_millis(30));
    assert!(e.current_epoch() > start);
    assert!(e.wait_durable(start, Duration::from_secs(1)));
}

#[test]
fn sink_failure_makes_engine_read_only() {
    let e = Engine::open(EngineConfig {
        protocol: Protocol::Silo,
        ticker: false,
        sink: Some(Arc::new(FailingSink)),
        ..Default::default()
    })
    .unwrap();
    e.load(1, &v(0));
    let mut w = e.worker().unwrap();
    let mut t = w.begin().unwrap();
    t.write(1, &v(1)).unwrap();
    t.commit().unwrap();
    e.advance_epoch();
    assert!(e.is_read_only());
    let mut t = w.begin().unwrap();
    t.write(1, &v(2)).unwrap();
    assert!(matches!(t.commit(), Err(EngineError::ReadOnly)));
    let mut t = w.begin().unwrap();
    t.read(1).unwrap();
    assert!(t.commit().unwrap().is_committed());
}

#[test]
fn closed_engine_refuses_transactions() {
    let e = engine(Protocol::Silo);
    let mut w = e.worker().unwrap();
    e.close();
    assert!(matches!(w.begin(), Err(EngineError::ShutDown)));
}

#[test]
fn single_threaded_history_is_submission_order() {
    let e = engine(Protocol::SiloNwr);
    let mut w = e.worker().unwrap();
    let mut t = w.begin().unwrap();
    t.read(1).unwrap();
    t.write(2, &v(1)).unwrap();
    t.commit().unwrap();
    let h = e.recorded_history().unwrap();
    assert_eq!(
        nwr::history::serialize_history(&h.schedule),
        "r 1 1 0\nw 1 2\nc 1\n"
    );
}

#[test]
fn invalid_config_rejected() {
    assert!(matches!(
        Engine::open(EngineConfig {
            epoch_ms: 0,
            ..Default::default()
        }),
        Err(EngineError::InvalidConfig(_))
    ));
}

#[test]
fn concurrent_history_passes_oracle() {
    for protocol in [Protocol::Silo, Protocol::SiloNwr] {
        let e = Engine::open(EngineConfig {
            protocol,
            epoch_ms: 1,
            record_history: Some(1_000_000),
            ..Default::default()
        })
        .unwrap();
        for k in 0..8 {
            e.load(k, &[0; 8]);
        }
        std::thread::scope(|s| {
            for i in 0..4u64 {
                let e = &e;
                s.spawn(move || {
                    let mut w = e.worker().unwrap();
                    for n in 0..300u64 {
                        let mut t = w.begin().unwrap();
                        let k = (n * 31 + i * 7) % 8;
                        if n % 2 == 0 {
                            t.read(k).unwrap();
                            t.write((k + 1) % 8, &[i as u8; 8]).unwrap();
                        } else {
                            t.write(k, &[i as u8; 8]).unwrap();
                            t.write((k + 3) % 8, &[i as u8; 8]).unwrap();
                        }
                        t.commit().unwrap();
                    }
                });
            }
        });
        let h = e.recorded_history().unwrap();
        let verdict = verify(&h.schedule, &h.version_order, &h.serial_order);
        assert!(verdict.all(), "{protocol}: {verdict:?}");
    }
}
