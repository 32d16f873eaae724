use cuckoo_kick::{DaryTable, KeyEntry, Policy};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fill(
    policy: Policy,
    n: usize,
    d: usize,
    density: f64,
    seed: u64,
    mut each: impl FnMut(&DaryTable),
) -> DaryTable {
    let mut t = DaryTable::new(n, d, policy, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 77);
    for k in 0..(density * n as f64) as u64 {
        let out = t.insert(KeyEntry::random(&mut rng, k, k, n, d)).unwrap();
        assert!(out.success, "{policy} failed at key {k}");
        assert_eq!(out.steps.len() as u64, out.metrics.chain_length + 1);
        each(&t);
    }
    t.table().check_invariants().unwrap();
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// A record with counter r sits in hashes[r mod d]: it has cycled through
    /// its hash functions in order, each once before any repeats.
    #[test]
    fn rattle_records_sit_at_their_counter_position(d in 3usize..6, seed in any::<u64>()) {
        let t = fill(Policy::Rattle, 512, d, 0.9, seed, |_| {});
        for (b, _, s) in t.table().iter() {
            let e = s.entry().unwrap();
            prop_assert_eq!(e.hashes.get(e.rattle_counter as usize % d), b);
        }
    }

    #[test]
    fn rattle_counters_stay_close(seed in any::<u64>()) {
        let d = 4;
        let t = fill(Policy::Rattle, 1024, d, 0.95, seed, |_| {});
        let mut r: Vec<u32> = t.rattle_counters().collect();
        r.sort_unstable();
        let p95 = r[r.len() * 95 / 100];
        prop_assert!(p95 - r[0] <= d as u32 + 2, "spread {}", p95 - r[0]);
    }

    #[test]
    fn khosla_labels_never_decrease(seed in any::<u64>()) {
        let mut prev = vec![0u32; 256];
        fill(Policy::Khosla, 256, 4, 0.9, seed, |t| {
            for (b, l) in t.khosla_labels().enumerate() {
                assert!(l >= prev[b], "bin {b} label fell from {} to {l}", prev[b]);
                prev[b] = l;
            }
        });
    }

    #[test]
    fn every_dary_policy_keeps_keys_in_their_bins(
        policy in prop::sample::select(vec![Policy::RandomKick, Policy::Rattle, Policy::Khosla, Policy::Bfs, Policy::SortedSearch]),
        seed in any::<u64>(),
    ) {
        let t = fill(policy, 256, 4, 0.9, seed, |_| {});
        prop_assert_eq!(t.table().len(), (0.9f64 * 256.0) as usize);
        for (b, _, s) in t.table().iter() {
            prop_assert!(s.entry().unwrap().hashes.contains(b));
        }
    }
}
