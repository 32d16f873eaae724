//! Multi-threaded insert/delete/overwrite/read workload with abort
//! accounting.

use std::collections::BTreeMap;
use std::thread;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::engine::{AbortCause, TxnTable, Worker};
use crate::model::Hashes;

#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadSpec {
    /// Relative weights of insert, delete, overwrite and read operations.
    pub ratios: [u32; 4],
    pub ops_per_txn: usize,
    pub threads: usize,
    /// Threads stop once the table reaches this load.
    pub target_density: f64,
    /// Per-thread cap on committed transactions.
    pub max_txns: Option<u64>,
    /// Attempts at one operation list before a thread drops it.
    pub max_attempts_per_txn: u64,
    pub seed: u64,
    /// Yield the CPU after every planned operation, so transactions overlap
    /// even on few cores.
    pub yield_between_ops: bool,
}

impl WorkloadSpec {
    /// Insert-heavy mix, weights 1:0:1:1.
    pub fn delete_light(threads: usize, target_density: f64, seed: u64) -> Self {
        Self {
            ratios: [1, 0, 1, 1],
            ops_per_txn: 4,
            threads,
            target_density,
            max_txns: None,
            max_attempts_per_txn: 1000,
            seed,
            yield_between_ops: true,
        }
    }

    /// Mix with deletes, weights 2:1:2:2.
    pub fn delete_heavy(threads: usize, target_density: f64, seed: u64) -> Self {
        Self {
            ratios: [2, 1, 2, 2],
            ..Self::delete_light(threads, target_density, seed)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AbortEvent {
    /// Table load when the attempt aborted.
    pub density: f64,
    pub cause: AbortCause,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AbortStats {
    pub events: Vec<AbortEvent>,
    pub commits: u64,
    pub attempts: u64,
    /// Operation lists given up after too many attempts.
    pub dropped: u64,
    pub final_density: f64,
}

impl AbortStats {
    pub fn aborts(&self) -> usize {
        self.events.len()
    }

    /// Aborts that happened below `density`.
    pub fn aborts_before(&self, density: f64) -> usize {
        self.events.iter().filter(|e| e.density < density).count()
    }

    pub fn by_cause(&self) -> BTreeMap<AbortCause, usize> {
        let mut out = BTreeMap::new();
        for e in &self.events {
            *out.entry(e.cause).or_insert(0) += 1;
        }
        out
    }

    fn merge(&mut self, other: AbortStats) {
        self.events.extend(other.events);
        self.commits += other.commits;
        self.attempts += other.attempts;
        self.dropped += other.dropped;
    }
}

#[derive(Clone, Copy)]
enum Op {
    Insert(u64, u64, Hashes),
    Delete(u64, Hashes),
    Overwrite(u64, Hashes, u64),
    Read(u64, Hashes),
}

/// Runs `spec` against `table` and returns every abort with the load at
/// which it happened. Events are sorted by density.
pub fn run_workload(table: &TxnTable, spec: &WorkloadSpec) -> AbortStats {
    let mut total = thread::scope(|scope| {
        let handles: Vec<_> = (0..spec.threads)
            .map(|id| scope.spawn(move || run_thread(table, spec, id)))
            .collect();
        let mut total = AbortStats::default();
        for h in handles {
            total.merge(h.join().expect("workload thread panicked"));
        }
        total
    });
    total.events.sort_by(|a, b| a.density.total_cmp(&b.density));
    total.final_density = table.density();
    total
}

fn run_thread(table: &TxnTable, spec: &WorkloadSpec, id: usize) -> AbortStats {
    let n = table.config().num_bins;
    let mut worker = Worker::new(id, spec.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_f00d);
    rng.set_stream(id as u64 + (1 << 32));
    let weights = WeightedIndex::new(spec.ratios).expect("ratios need a positive weight");
    let mut stats = AbortStats::default();
    // Keys this thread has committed and not deleted.
    let mut live: Vec<(u64, Hashes)> = Vec::new();
    let mut next_key = (id as u64) << 40;
    let mut payload = 0u64;

    while table.density() < spec.target_density && spec.max_txns.is_none_or(|m| stats.commits < m) {
        let mut ops = Vec::with_capacity(spec.ops_per_txn);
        let mut doomed = Vec::new();
        for _ in 0..spec.ops_per_txn {
            let kind = weights.sample(&mut rng);
            payload += 1;
            let pick = match live.len() {
                0 => None,
                len => Some(live[rand::Rng::gen_range(&mut rng, 0..len)]),
            };
            let op = match (kind, pick) {
                (1, Some((k, h))) if !doomed.contains(&k) => {
                    doomed.push(k);
                    Op::Delete(k, h)
                }
                (2, Some((k, h))) => Op::Overwrite(k, h, payload),
                (3, Some((k, h))) => Op::Read(k, h),
                _ => {
                    next_key += 1;
                    Op::Insert(next_key, payload, Hashes::random(&mut rng, n, 2))
                }
            };
            ops.push(op);
        }

        let mut committed = false;
        for _ in 0..spec.max_attempts_per_txn {
            stats.attempts += 1;
            match attempt(table, &mut worker, &ops, spec.yield_between_ops) {
                Ok(()) => {
                    committed = true;
                    break;
                }
                Err(cause) => stats.events.push(AbortEvent {
                    density: table.density(),
                    cause,
                }),
            }
            if table.density() >= spec.target_density {
                break;
            }
        }
        if !committed {
            stats.dropped += 1;
            continue;
        }
        stats.commits += 1;
        for op in &ops {
            match *op {
                Op::Insert(k, _, h) => live.push((k, h)),
                Op::Delete(k, _) => {
                    if let Some(i) = live.iter().position(|e| e.0 == k) {
                        live.swap_remove(i);
                    }
                }
                Op::Overwrite(..) | Op::Read(..) => {}
            }
        }
    }
    stats
}

fn attempt(
    table: &TxnTable,
    worker: &mut Worker,
    ops: &[Op],
    yield_between_ops: bool,
) -> Result<(), AbortCause> {
    let mut tx = table.begin(worker);
    for op in ops {
        let res = match *op {
            Op::Insert(k, p, h) => tx.insert(k, p, h).map(drop),
            Op::Delete(k, h) => tx.delete(k, h).map(drop),
            Op::Overwrite(k, h, p) => tx.overwrite(k, h, p).map(drop),
            Op::Read(k, h) => tx.read(k, h).map(drop),
        };
        res.map_err(|a| a.cause)?;
        if yield_between_ops {
            thread::yield_now();
        }
    }
    tx.commit().map(drop).map_err(|a| a.cause)
}
