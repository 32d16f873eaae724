use std::collections::{HashMap, HashSet};

use cuckoo_kick::{KeyEntry, Policy, Table, TableConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const BUCKETED: [Policy; 5] = [
    Policy::RandomKick,
    Policy::QueueKick,
    Policy::Bfs,
    Policy::SortedSearch,
    Policy::Hybrid,
];

fn table(policy: Policy, n: usize, b: usize, h: usize, ghosts: bool, seed: u64) -> Table {
    Table::new(
        TableConfig::new(n, b, h, policy)
            .with_ghosts(ghosts)
            .with_seed(seed)
            .with_max_steps(10_000)
            .with_max_spawns(100_000),
    )
    .unwrap()
}

/// Key -> number of slots holding it, and whether all copies are flagged.
fn copies(t: &Table) -> HashMap<u64, (usize, bool)> {
    let mut out: HashMap<u64, (usize, bool)> = HashMap::new();
    for (_, _, s) in t.iter() {
        let e = out.entry(s.entry().unwrap().key).or_insert((0, true));
        e.0 += 1;
        e.1 &= s.is_duplicate();
    }
    out
}

fn check_residency(t: &Table) {
    for (b, _, s) in t.iter() {
        assert!(s.entry().unwrap().hashes.contains(b));
    }
}

fn check_copies(t: &Table) {
    for (key, (count, dup)) in copies(t) {
        match count {
            1 => {}
            2 => assert!(t.ghosts() && dup, "key {key} stored twice"),
            _ => panic!("key {key} stored {count} times"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mixed_operations_keep_keys_in_their_bins(
        policy in prop::sample::select(BUCKETED.to_vec()),
        ghosts in any::<bool>(),
        seed in any::<u64>(),
        ops in prop::collection::vec((0u8..4, any::<u16>()), 50..400),
    ) {
        let (n, b) = (32, 4);
        let mut t = table(policy, n, b, 2, ghosts, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut live: Vec<KeyEntry> = Vec::new();
        let mut model: HashMap<u64, u64> = HashMap::new();
        let mut next = 0u64;
        for (kind, pick) in ops {
            let target = (!live.is_empty()).then(|| live[pick as usize % live.len()]);
            match (kind, target) {
                (1, Some(k)) => {
                    prop_assert!(t.delete(&k));
                    live.retain(|e| e.key != k.key);
                    model.remove(&k.key);
                }
                (2, Some(k)) => {
                    prop_assert!(t.overwrite(&k, pick as u64));
                    model.insert(k.key, pick as u64);
                }
                (3, Some(k)) => prop_assert_eq!(t.lookup(&k), model.get(&k.key).copied()),
                _ if t.len() < t.capacity() * 85 / 100 => {
                    let k = KeyEntry::random(&mut rng, next, next, n, 2);
                    next += 1;
                    let out = t.insert(k).unwrap();
                    prop_assert!(out.success);
                    prop_assert_eq!(out.steps.len() as u64, out.metrics.chain_length + 1);
                    prop_assert!(out.metrics.chain_length <= out.metrics.bins_viewed);
                    live.push(k);
                    model.insert(k.key, k.key);
                }
                _ => {}
            }
        }
        check_residency(&t);
        check_copies(&t);
        t.check_invariants().unwrap();
        prop_assert_eq!(t.len(), model.len());
        for k in &live {
            prop_assert_eq!(t.lookup(k), model.get(&k.key).copied());
        }
    }

    #[test]
    fn lookups_fetch_at_most_h_bins(h in 2usize..5, seed in any::<u64>()) {
        let mut t = table(Policy::RandomKick, 64, 2, h, false, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keys: Vec<KeyEntry> = (0..80).map(|k| KeyEntry::random(&mut rng, k, k, 64, h)).collect();
        for k in &keys[..60] {
            t.insert(*k).unwrap();
        }
        for k in &keys {
            let before = t.fetch_count();
            t.lookup(k);
            prop_assert!(t.fetch_count() - before <= h as u64);
        }
    }

    #[test]
    fn spawn_counts_sum_to_spawns_performed(
        policy in prop::sample::select(vec![Policy::Bfs, Policy::SortedSearch, Policy::Hybrid]),
        seed in any::<u64>(),
    ) {
        let mut t = table(policy, 64, 2, 2, false, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut spawns = 0;
        for k in 0..(t.capacity() as u64 * 9 / 10) {
            // Failed searches still spawn and count.
            let out = t.insert(KeyEntry::random(&mut rng, k, k, 64, 2)).unwrap();
            spawns += out.metrics.spawns;
            if !out.success {
                break;
            }
        }
        let recorded: u64 = (0..64).map(|b| t.meta(b).spawn_count as u64).sum();
        prop_assert_eq!(recorded, spawns);
        prop_assert_eq!(t.total_spawns(), spawns);
    }
}

/// Insert-only ghost fills: every chain that kicks anything ends in a bin
/// that held a duplicate before the chain started.
#[test]
fn ghost_chains_end_at_a_duplicate() {
    for policy in [
        Policy::RandomKick,
        Policy::QueueKick,
        Policy::SortedSearch,
        Policy::Bfs,
    ] {
        for seed in 0..4 {
            let n = 256;
            let mut t = table(policy, n, 4, 2, true, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut chains = 0;
            for k in 0..(n as u64 * 4 * 975 / 1000) {
                let had_dup: HashSet<usize> = t
                    .iter()
                    .filter(|(_, _, s)| s.is_duplicate())
                    .map(|(b, _, _)| b)
                    .collect();
                let out = t.insert(KeyEntry::random(&mut rng, k, k, n, 2)).unwrap();
                assert!(out.success);
                if out.metrics.chain_length > 0 {
                    chains += 1;
                    let last = out.steps.last().unwrap();
                    assert!(
                        had_dup.contains(&last.bin),
                        "{policy} seed {seed}: chain ended in bin {} without a duplicate",
                        last.bin
                    );
                }
            }
            assert!(chains > 0);
            check_copies(&t);
        }
    }
}

#[test]
fn identical_seeds_give_identical_tables() {
    for policy in BUCKETED {
        let run = || {
            let mut t = table(policy, 128, 4, 2, false, 9);
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let metrics: Vec<_> = (0..490)
                .map(|k| {
                    t.insert(KeyEntry::random(&mut rng, k, k, 128, 2))
                        .unwrap()
                        .metrics
                })
                .collect();
            let slots: Vec<_> = t
                .iter()
                .map(|(b, s, slot)| (b, s, slot.entry().unwrap().key))
                .collect();
            (metrics, slots)
        };
        assert_eq!(run(), run(), "{policy}");
    }
}
