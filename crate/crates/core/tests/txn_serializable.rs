use std::collections::{BTreeMap, HashMap};

use cuckoo_kick::txn::{run_workload, CommitRecord, EngineConfig, TxnTable, Worker, WorkloadSpec};
use cuckoo_kick::Hashes;

/// Applies committed write sets in weakly increasing transaction-ID order.
fn replay(mut log: Vec<CommitRecord>) -> BTreeMap<u64, u64> {
    log.sort_by_key(|c| (c.txn_id, c.commit_seq));
    let mut state = BTreeMap::new();
    for c in &log {
        for &(k, v) in &c.writes {
            match v {
                Some(p) => state.insert(k, p),
                None => state.remove(&k),
            };
        }
    }
    state
}

fn check_log(log: &[CommitRecord]) {
    let mut last: HashMap<usize, u64> = HashMap::new();
    let mut by_seq = log.to_vec();
    by_seq.sort_by_key(|c| c.commit_seq);
    for c in &by_seq {
        assert!(
            c.txn_id > c.max_observed,
            "txn {} observed version {}",
            c.txn_id,
            c.max_observed
        );
        if let Some(&prev) = last.get(&c.worker) {
            assert!(
                c.txn_id > prev,
                "worker {} ids went {prev} -> {}",
                c.worker,
                c.txn_id
            );
        }
        last.insert(c.worker, c.txn_id);
    }
}

fn run(preset: u8, heavy: bool, seed: u64) {
    let cfg = EngineConfig::preset(256, 4, preset)
        .unwrap()
        .with_commit_log(true);
    let table = TxnTable::new(cfg).unwrap();
    let mut spec = if heavy {
        WorkloadSpec::delete_heavy(4, 0.93, seed)
    } else {
        WorkloadSpec::delete_light(4, 0.93, seed)
    };
    spec.ops_per_txn = 12;
    spec.max_txns = Some(150);
    let stats = run_workload(&table, &spec);
    assert_eq!(table.audit(), (0, 0), "locks or claims leaked");
    table.check_invariants().unwrap();
    let log = table.take_commit_log();
    assert_eq!(log.len() as u64, stats.commits);
    check_log(&log);
    assert_eq!(
        table.snapshot(),
        replay(log),
        "preset {preset} heavy={heavy} seed {seed}"
    );
    if preset >= 5 {
        for e in &stats.events {
            assert!(
                e.cause.survives_claims_and_retries(),
                "unexpected cause {}",
                e.cause
            );
        }
    }
}

#[test]
fn every_preset_is_serializable_under_both_workloads() {
    for preset in 1..=6 {
        for heavy in [false, true] {
            for seed in 0..3 {
                run(preset, heavy, seed);
            }
        }
    }
}

#[test]
fn concurrent_begins_are_independent() {
    let table = TxnTable::new(EngineConfig::preset(64, 4, 6).unwrap()).unwrap();
    let mut workers: Vec<Worker> = (0..15).map(|i| Worker::new(i, 1)).collect();
    let mut txns: Vec<_> = workers.iter_mut().map(|w| table.begin(w)).collect();
    for (i, t) in txns.iter_mut().enumerate() {
        assert_eq!(t.read_set_len() + t.write_set_len(), 0);
        let a = 2 * i;
        t.insert(
            i as u64,
            i as u64,
            Hashes::new(&[a % 64, (a + 1) % 64]).unwrap(),
        )
        .unwrap();
    }
    for t in txns {
        t.commit().unwrap();
    }
    assert_eq!(table.len(), 15);
}

#[test]
fn single_thread_runs_are_reproducible() {
    let run = || {
        let table = TxnTable::new(EngineConfig::preset(128, 4, 6).unwrap()).unwrap();
        let stats = run_workload(&table, &WorkloadSpec::delete_heavy(1, 0.9, 42));
        assert_eq!(stats.aborts(), 0);
        table.snapshot()
    };
    assert_eq!(run(), run());
}

#[test]
fn disjoint_transactions_match_serial_execution() {
    let serial = TxnTable::new(EngineConfig::preset(64, 4, 2).unwrap()).unwrap();
    let concurrent = TxnTable::new(EngineConfig::preset(64, 4, 2).unwrap()).unwrap();
    let ops = |t: &mut cuckoo_kick::txn::Transaction<'_>, base: u64, bin: usize| {
        for k in 0..3 {
            t.insert(
                base + k,
                base * 10 + k,
                Hashes::new(&[bin, bin + 1]).unwrap(),
            )
            .unwrap();
        }
    };
    let (mut w1, mut w2) = (Worker::new(0, 1), Worker::new(1, 1));
    let mut a = serial.begin(&mut w1);
    ops(&mut a, 100, 0);
    a.commit().unwrap();
    let mut b = serial.begin(&mut w2);
    ops(&mut b, 200, 10);
    b.commit().unwrap();

    let (mut w1, mut w2) = (Worker::new(0, 1), Worker::new(1, 1));
    let mut a = concurrent.begin(&mut w1);
    let mut b = concurrent.begin(&mut w2);
    ops(&mut a, 100, 0);
    ops(&mut b, 200, 10);
    b.commit().unwrap();
    a.commit().unwrap();
    assert_eq!(serial.snapshot(), concurrent.snapshot());
}
