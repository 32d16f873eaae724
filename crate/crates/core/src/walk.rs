//! Walk-based insertion: random kicking, queue-kicking with hit balancing,
//! and the ghost-insertion overlay that sits in front of every policy.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{KeyEntry, OpMetrics, Policy, Table};
use crate::search::{self, FrontierOrder};

/// One placement of a walk: the slot written and the key it displaced, if
/// any. The displaced key is the one that continues the walk.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WalkStep {
    pub bin: usize,
    pub slot: usize,
    pub displaced: Option<u64>,
}

/// Result of one insertion.
///
/// `steps` holds `chain_length + 1` entries on success. On failure the walk
/// stopped at the kick-out cap and `homeless` holds the record that was left
/// without a slot (not necessarily the key being inserted).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WalkOutcome {
    pub metrics: OpMetrics,
    pub success: bool,
    pub steps: Vec<WalkStep>,
    pub homeless: Option<KeyEntry>,
}

impl WalkOutcome {
    pub(crate) fn push(&mut self, bin: usize, slot: usize, displaced: Option<u64>) {
        self.steps.push(WalkStep {
            bin,
            slot,
            displaced,
        });
    }

    fn settled(&mut self, bin: usize, slot: usize) {
        self.push(bin, slot, None);
        self.success = true;
    }

    fn gave_up(&mut self, homeless: KeyEntry) {
        self.success = false;
        self.homeless = Some(homeless);
    }
}

/// Runs `body` and charges it with the table fetches it made; counts the new
/// record on success.
pub(crate) fn measured(
    table: &mut Table,
    body: impl FnOnce(&mut Table, &mut WalkOutcome),
) -> WalkOutcome {
    let start = table.fetch_count();
    let mut out = WalkOutcome::default();
    body(table, &mut out);
    out.metrics.bins_viewed = table.fetch_count() - start;
    if out.success {
        table.add_record();
    }
    out
}

/// Picks the bin a new key should go to, fetching each of its bins.
///
/// Bins with a free slot win, the emptier one first; ties go to the smaller
/// hit-counter, then the lower bin index. When every bin is full,
/// queue-kicking takes the smaller hit-counter (hit balancing) and every
/// other policy picks uniformly at random.
pub fn choose_insert_bin(table: &mut Table, key: &KeyEntry) -> usize {
    for b in key.hashes.iter() {
        table.fetch(b);
    }
    pick_bin(table, key)
}

/// [`choose_insert_bin`] for bins that were already fetched.
pub(crate) fn pick_bin(table: &mut Table, key: &KeyEntry) -> usize {
    let best_free = key
        .hashes
        .iter()
        .map(|b| (b, table.free_count(b)))
        .filter(|&(_, free)| free > 0)
        .min_by_key(|&(b, free)| (std::cmp::Reverse(free), table.meta(b).hit_counter, b));
    if let Some((b, _)) = best_free {
        return b;
    }
    if table.config().policy == Policy::QueueKick {
        return key
            .hashes
            .iter()
            .min_by_key(|&b| (table.meta(b).hit_counter, b))
            .expect("at least two hashes");
    }
    let i = table.rng().gen_range(0..key.hashes.len());
    key.hashes.get(i)
}

/// Removes the duplicate copy held at `(bin, slot)`, promoting its twin.
fn drop_duplicate_at(table: &mut Table, bin: usize, slot: usize) {
    let dup = *table
        .slot(bin, slot)
        .entry()
        .expect("duplicate slot is occupied");
    let twin_bin = dup.hashes.other(bin);
    promote_duplicate(table, &dup, twin_bin).expect("ghost copies come in pairs");
}

/// Places `entry` in `bin` if it has a free slot, or (with ghosts) a
/// duplicate that can be dropped. Hands the entry back otherwise.
fn settle(table: &mut Table, bin: usize, entry: KeyEntry) -> std::result::Result<usize, KeyEntry> {
    if let Some(s) = table.free_slot(bin) {
        table.put(bin, s, entry);
        return Ok(s);
    }
    if table.ghosts() {
        if let Some(s) = table.duplicate_slot(bin) {
            drop_duplicate_at(table, bin, s);
            table.put(bin, s, entry);
            return Ok(s);
        }
    }
    Err(entry)
}

/// Where a record evicted from `from` tries next.
fn next_bin(table: &mut Table, victim: &KeyEntry, from: usize) -> usize {
    if victim.hashes.len() == 2 {
        return victim.hashes.other(from);
    }
    loop {
        let i = table.rng().gen_range(0..victim.hashes.len());
        let b = victim.hashes.get(i);
        if b != from {
            return b;
        }
    }
}

/// Random walk starting at a full `bin` that has already been fetched.
fn random_walk(
    table: &mut Table,
    mut incoming: KeyEntry,
    mut bin: usize,
    max_steps: usize,
    out: &mut WalkOutcome,
) {
    let bin_size = table.bin_size();
    loop {
        if out.metrics.chain_length as usize >= max_steps {
            out.gave_up(incoming);
            return;
        }
        let slot = table.rng().gen_range(0..bin_size);
        let victim = table
            .swap(bin, slot, incoming)
            .expect("walk only kicks from full bins");
        out.push(bin, slot, Some(victim.key));
        out.metrics.chain_length += 1;

        let next = next_bin(table, &victim, bin);
        table.fetch(next);
        match settle(table, next, victim) {
            Ok(s) => return out.settled(next, s),
            Err(v) => {
                incoming = v;
                bin = next;
            }
        }
    }
}

/// Inserts with random kicking: the victim is a uniformly random slot of
/// the chosen bin and re-enters the table through its other bin.
pub fn insert_random_kick(table: &mut Table, key: KeyEntry, max_steps: usize) -> WalkOutcome {
    measured(table, |table, out| {
        let bin = choose_insert_bin(table, &key);
        match table.free_slot(bin) {
            Some(s) => {
                table.put(bin, s, key);
                out.settled(bin, s);
            }
            None => random_walk(table, key, bin, max_steps, out),
        }
    })
}

/// Bumps the hit-counter of `bin` and returns the slot it now points at.
fn queue_slot(table: &mut Table, bin: usize) -> usize {
    let meta = table.meta_mut(bin);
    meta.hit_counter = meta.hit_counter.wrapping_add(1);
    meta.hit_counter as usize % table.bin_size()
}

/// Queue-kicking walk from an already fetched `bin`.
fn queue_walk(
    table: &mut Table,
    mut incoming: KeyEntry,
    mut bin: usize,
    max_steps: usize,
    out: &mut WalkOutcome,
) {
    loop {
        let full = table.free_slot(bin).is_none();
        if full && table.ghosts() {
            if let Some(s) = table.duplicate_slot(bin) {
                drop_duplicate_at(table, bin, s);
                table.put(bin, s, incoming);
                return out.settled(bin, s);
            }
        }
        if full && out.metrics.chain_length as usize >= max_steps {
            out.gave_up(incoming);
            return;
        }
        let slot = queue_slot(table, bin);
        match table.swap(bin, slot, incoming) {
            None => return out.settled(bin, slot),
            Some(victim) => {
                out.push(bin, slot, Some(victim.key));
                out.metrics.chain_length += 1;
                let next = if victim.hashes.len() == 2 {
                    victim.hashes.other(bin)
                } else {
                    victim
                        .hashes
                        .iter()
                        .filter(|&b| b != bin)
                        .min_by_key(|&b| (table.meta(b).hit_counter, b))
                        .expect("at least two hashes")
                };
                table.fetch(next);
                incoming = victim;
                bin = next;
            }
        }
    }
}

/// Inserts with queue-kicking: each bin is a FIFO simulated by its
/// hit-counter. The counter is bumped first and the record lands in slot
/// `counter mod B`, evicting whatever is there.
pub fn insert_queue_kick(table: &mut Table, key: KeyEntry, max_steps: usize) -> WalkOutcome {
    measured(table, |table, out| {
        let bin = choose_insert_bin(table, &key);
        queue_walk(table, key, bin, max_steps, out);
    })
}

/// Slot a fresh copy goes to in a bin known to have room.
fn placement_slot(table: &mut Table, bin: usize) -> usize {
    if table.config().policy == Policy::QueueKick {
        let s = queue_slot(table, bin);
        if table.slot(bin, s).is_empty() {
            return s;
        }
    }
    table.free_slot(bin).expect("bin has room")
}

/// Ghost insertion in front of the configured policy.
///
/// With room in both bins the key is stored twice, both copies marked as
/// duplicates. With room in one bin it is stored once. Otherwise a
/// duplicate in either bin is dropped to make room, and only when there is
/// none does the policy's own kick-out run, treating any duplicate it meets
/// as a free slot.
pub fn ghost_insert(table: &mut Table, key: KeyEntry) -> Result<WalkOutcome> {
    if !table.ghosts() || table.config().num_hashes != 2 {
        return Err(Error::InvalidConfig(
            "ghost insertion needs ghosts enabled and two hash functions".into(),
        ));
    }
    let max_steps = table.config().max_steps;
    let policy = table.config().policy;
    Ok(measured(table, |table, out| {
        let (b0, b1) = (key.hashes.get(0), key.hashes.get(1));
        table.fetch(b0);
        table.fetch(b1);
        let room0 = table.free_slot(b0).is_some();
        let room1 = table.free_slot(b1).is_some();
        match (room0, room1) {
            (true, true) => {
                let s0 = placement_slot(table, b0);
                let s1 = placement_slot(table, b1);
                table.put_duplicate(b0, s0, key);
                table.put_duplicate(b1, s1, key);
                // Both copies share one step: the walk placed a single record.
                out.settled(b0, s0);
                return;
            }
            (true, false) | (false, true) => {
                let b = if room0 { b0 } else { b1 };
                let s = placement_slot(table, b);
                table.put(b, s, key);
                out.settled(b, s);
                return;
            }
            (false, false) => {}
        }
        for b in [b0, b1] {
            if let Some(s) = table.duplicate_slot(b) {
                drop_duplicate_at(table, b, s);
                table.put(b, s, key);
                out.settled(b, s);
                return;
            }
        }
        match policy {
            Policy::QueueKick => {
                let bin = pick_bin(table, &key);
                queue_walk(table, key, bin, max_steps, out);
            }
            Policy::Bfs => search::insert_from_full(table, key, FrontierOrder::Fifo, out),
            Policy::SortedSearch => {
                search::insert_from_full(table, key, FrontierOrder::SpawnCount, out)
            }
            Policy::Hybrid => {
                search::insert_from_full(table, key, FrontierOrder::DepthThenSpawnCount, out)
            }
            Policy::RandomKick | Policy::Rattle | Policy::Khosla => {
                let bin = pick_bin(table, &key);
                random_walk(table, key, bin, max_steps, out);
            }
        }
    }))
}

/// Keeps the copy of a duplicated `key` in `surviving_bin` and frees the
/// other copy's slot.
pub fn promote_duplicate(table: &mut Table, key: &KeyEntry, surviving_bin: usize) -> Result<()> {
    let find_dup = |table: &Table, b: usize| {
        (0..table.bin_size()).find(|&s| {
            let slot = table.slot(b, s);
            slot.is_duplicate() && slot.holds(key.key)
        })
    };
    let corrupt = || {
        Err(Error::CorruptState(format!(
            "key {} is not duplicated in bins {:?}",
            key.key, key.hashes
        )))
    };
    if !key.hashes.contains(surviving_bin) {
        return corrupt();
    }
    let other_bin = key.hashes.other(surviving_bin);
    let (Some(keep), Some(drop)) = (find_dup(table, surviving_bin), find_dup(table, other_bin))
    else {
        return corrupt();
    };
    table.take(other_bin, drop);
    let entry = table.take(surviving_bin, keep).expect("checked above");
    table.put(surviving_bin, keep, entry);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Hashes, TableConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn entry(key: u64, bins: &[usize]) -> KeyEntry {
        KeyEntry::new(key, key + 1000, Hashes::new(bins).unwrap())
    }

    fn table(policy: Policy, ghosts: bool) -> Table {
        Table::new(
            TableConfig::new(8, 4, 2, policy)
                .with_ghosts(ghosts)
                .with_seed(1),
        )
        .unwrap()
    }

    fn fill_bin(t: &mut Table, bin: usize, first_key: u64) {
        for s in 0..t.bin_size() {
            let k = entry(first_key + s as u64, &[bin, (bin + 1 + s) % t.num_bins()]);
            t.put(bin, s, k);
            t.add_record();
        }
    }

    #[test]
    fn less_full_bin_is_chosen() {
        let mut t = table(Policy::RandomKick, false);
        fill_bin(&mut t, 1, 100);
        let a = entry(900, &[0, 1]);
        t.put(0, 0, a);
        t.put(0, 1, entry(901, &[0, 2]));
        assert_eq!(choose_insert_bin(&mut t, &entry(1, &[0, 1])), 0);
        assert_eq!(choose_insert_bin(&mut t, &entry(2, &[1, 0])), 0);
    }

    #[test]
    fn full_bins_use_hit_balancing_under_queue_kick() {
        let mut t = table(Policy::QueueKick, false);
        fill_bin(&mut t, 2, 100);
        fill_bin(&mut t, 3, 200);
        t.meta_mut(2).hit_counter = 9;
        t.meta_mut(3).hit_counter = 5;
        assert_eq!(choose_insert_bin(&mut t, &entry(1, &[2, 3])), 3);
    }

    #[test]
    fn equal_bins_tie_break_to_lower_index() {
        let mut t = table(Policy::RandomKick, false);
        for (b, base) in [(4, 10), (6, 20)] {
            for s in 0..3 {
                t.put(b, s, entry(base + s as u64, &[b, 0]));
            }
        }
        assert_eq!(choose_insert_bin(&mut t, &entry(1, &[6, 4])), 4);
    }

    #[test]
    fn empty_table_insert_views_two_bins() {
        let mut t = table(Policy::RandomKick, false);
        let out = insert_random_kick(&mut t, entry(1, &[0, 5]), 500);
        assert!(out.success);
        assert_eq!(out.metrics.chain_length, 0);
        assert_eq!(out.metrics.bins_viewed, 2);
        assert_eq!(out.steps.len(), 1);
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn random_kick_on_unsatisfiable_instance_hits_the_cap() {
        // Two single-slot bins already holding two keys hashed to both:
        // a third key sharing those bins has no free slot reachable at all.
        let mut t = Table::new(TableConfig::new(2, 1, 2, Policy::RandomKick).with_seed(3)).unwrap();
        t.put(0, 0, entry(1, &[0, 1]));
        t.put(1, 0, entry(2, &[1, 0]));
        t.add_record();
        t.add_record();
        let out = insert_random_kick(&mut t, entry(3, &[0, 1]), 50);
        assert!(!out.success);
        assert_eq!(out.metrics.chain_length, 50);
        assert!(out.homeless.is_some());
        // The table still holds two of the three keys, in legal bins.
        assert_eq!(t.iter().count(), 2);
        t.check_invariants().unwrap();
    }

    #[test]
    fn queue_kick_places_at_counter_slot() {
        let mut t = table(Policy::QueueKick, false);
        let out = insert_queue_kick(&mut t, entry(1, &[3, 4]), 500);
        assert_eq!(out.steps[0].bin, 3);
        assert_eq!(out.steps[0].slot, 1);
        assert_eq!(t.meta(3).hit_counter, 1);
        assert_eq!(out.metrics.chain_length, 0);
    }

    #[test]
    fn queue_kick_evicts_counter_slot_of_full_bin() {
        let mut t = table(Policy::QueueKick, false);
        fill_bin(&mut t, 2, 100);
        fill_bin(&mut t, 3, 200);
        t.meta_mut(2).hit_counter = 7;
        t.meta_mut(3).hit_counter = 9;
        let out = insert_queue_kick(&mut t, entry(1, &[2, 3]), 500);
        assert!(out.success);
        // Counter 7 -> 8, 8 mod 4 = 0.
        assert_eq!(
            out.steps[0],
            WalkStep {
                bin: 2,
                slot: 0,
                displaced: Some(100)
            }
        );
        assert!(t.slot(2, 0).holds(1));
        t.check_invariants().unwrap();
    }

    #[test]
    fn queue_kick_cycles_through_slots() {
        let cfg = TableConfig::new(64, 4, 2, Policy::QueueKick).with_seed(5);
        let mut t = Table::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut evicted: std::collections::HashMap<usize, Vec<usize>> = Default::default();
        for k in 0..(64 * 4 * 9 / 10) as u64 {
            let out = insert_queue_kick(&mut t, KeyEntry::random(&mut rng, k, k, 64, 2), 500);
            assert!(out.success);
            for step in out.steps.iter().filter(|s| s.displaced.is_some()) {
                evicted.entry(step.bin).or_default().push(step.slot);
            }
        }
        for slots in evicted.values() {
            for w in slots.windows(4) {
                let mut seen = w.to_vec();
                seen.sort_unstable();
                seen.dedup();
                assert_eq!(seen.len(), 4, "slot reused before the others: {slots:?}");
            }
        }
        t.check_invariants().unwrap();
    }

    #[test]
    fn ghost_insert_into_two_free_bins_writes_two_duplicates() {
        let mut t = table(Policy::RandomKick, true);
        let k = entry(1, &[2, 5]);
        let out = ghost_insert(&mut t, k).unwrap();
        assert!(out.success);
        assert_eq!(out.metrics.bins_viewed, 2);
        let copies: Vec<_> = t.iter().filter(|(_, _, s)| s.holds(1)).collect();
        assert_eq!(copies.len(), 2);
        assert!(copies.iter().all(|(_, _, s)| s.is_duplicate()));
        assert_eq!(t.len(), 1);
        t.check_invariants().unwrap();
    }

    #[test]
    fn ghost_insert_drops_a_duplicate_before_kicking() {
        let mut t = table(Policy::RandomKick, true);
        let dup = entry(50, &[2, 7]);
        t.put_duplicate(2, 0, dup);
        t.put_duplicate(7, 0, dup);
        t.add_record();
        for s in 1..4 {
            t.put(2, s, entry(60 + s as u64, &[2, 0]));
            t.add_record();
        }
        fill_bin(&mut t, 3, 200);
        let out = ghost_insert(&mut t, entry(1, &[3, 2])).unwrap();
        assert!(out.success);
        assert_eq!(out.metrics.chain_length, 0);
        assert!(t.slot(2, 0).holds(1));
        assert!(t.slot(7, 0).holds(50) && !t.slot(7, 0).is_duplicate());
        t.check_invariants().unwrap();
    }

    #[test]
    fn ghost_insert_rejects_non_ghost_tables() {
        let mut t = table(Policy::RandomKick, false);
        assert!(ghost_insert(&mut t, entry(1, &[0, 1])).is_err());
    }

    #[test]
    fn promote_duplicate_keeps_one_copy() {
        let mut t = table(Policy::RandomKick, true);
        let k = entry(1, &[2, 5]);
        ghost_insert(&mut t, k).unwrap();
        promote_duplicate(&mut t, &k, 2).unwrap();
        assert!(t.bin(5).iter().all(|s| !s.holds(1)));
        assert!(t.bin(2).iter().any(|s| s.holds(1) && !s.is_duplicate()));
        assert_eq!(t.lookup(&k), Some(1001));
        t.check_invariants().unwrap();
        assert!(matches!(
            promote_duplicate(&mut t, &k, 2),
            Err(Error::CorruptState(_))
        ));
    }

    #[test]
    fn walks_are_deterministic_per_seed() {
        let run = || {
            let cfg = TableConfig::new(32, 4, 2, Policy::RandomKick).with_seed(77);
            let mut t = Table::new(cfg).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(78);
            (0..120u64)
                .map(|k| t.insert(KeyEntry::random(&mut rng, k, k, 32, 2)).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
