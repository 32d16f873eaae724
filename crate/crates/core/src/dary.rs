//! d-ary cuckoo hashing: single-slot bins and d hash functions per key.
//!
//! Rattle-kicking sends a record to `hashes[r mod d]`, where `r` is its
//! rattle-counter, so a record cycles through all of its hash functions
//! before reusing one. When two records want the same bin the one with the
//! higher counter stays.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{KeyEntry, Policy, Table, TableConfig};
use crate::walk::{measured, WalkOutcome};

/// A table with single-slot bins, for the d-ary policies.
#[derive(Debug)]
pub struct DaryTable {
    table: Table,
}

impl DaryTable {
    pub fn new(num_bins: usize, d: usize, policy: Policy, seed: u64) -> Result<Self> {
        Self::from_config(TableConfig::new(num_bins, 1, d, policy).with_seed(seed))
    }

    pub fn from_config(config: TableConfig) -> Result<Self> {
        if config.bin_size != 1 {
            return Err(Error::InvalidConfig(format!(
                "d-ary tables have single-slot bins, got bin_size {}",
                config.bin_size
            )));
        }
        Ok(Self {
            table: Table::new(config)?,
        })
    }

    pub fn table(&self) -> &Table {
        &self.table
    }

    pub fn table_mut(&mut self) -> &mut Table {
        &mut self.table
    }

    pub fn into_table(self) -> Table {
        self.table
    }

    /// Inserts with the configured policy.
    pub fn insert(&mut self, key: KeyEntry) -> Result<WalkOutcome> {
        self.table.insert(key)
    }

    pub fn insert_rattle(&mut self, key: KeyEntry, max_steps: usize) -> WalkOutcome {
        rattle(&mut self.table, key, max_steps)
    }

    pub fn insert_khosla(&mut self, key: KeyEntry, max_steps: usize) -> WalkOutcome {
        khosla(&mut self.table, key, max_steps)
    }

    pub fn insert_random(&mut self, key: KeyEntry, max_steps: usize) -> WalkOutcome {
        random_dary(&mut self.table, key, max_steps)
    }

    /// Rattle-counters of the stored records.
    pub fn rattle_counters(&self) -> impl Iterator<Item = u32> + '_ {
        self.table
            .iter()
            .map(|(_, _, s)| s.entry().expect("occupied").rattle_counter)
    }

    pub fn khosla_labels(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.table.num_bins()).map(|b| self.table.meta(b).khosla_label)
    }
}

/// Rattle-kicking. Every failed attempt, whether it evicted the occupant or
/// bounced the incoming record, counts as one step of the chain.
pub(crate) fn rattle(table: &mut Table, key: KeyEntry, max_steps: usize) -> WalkOutcome {
    measured(table, |table, out| {
        let mut x = key;
        loop {
            let d = x.hashes.len() as u32;
            let bin = x.hashes.get((x.rattle_counter % d) as usize);
            table.fetch(bin);
            let Some(y) = table.slot(bin, 0).entry().copied() else {
                table.put(bin, 0, x);
                out.push(bin, 0, None);
                out.success = true;
                return;
            };
            if out.metrics.chain_length as usize >= max_steps {
                out.homeless = Some(x);
                return;
            }
            out.metrics.chain_length += 1;
            let mut loser = if x.rattle_counter > y.rattle_counter {
                table.swap(bin, 0, x);
                out.push(bin, 0, Some(y.key));
                y
            } else {
                out.push(bin, 0, None);
                x
            };
            loser.rattle_counter += 1;
            x = loser;
        }
    })
}

/// Random kicking on single-slot bins. The key's bins are probed in hash
/// order until an empty one turns up; if none does, a random bin is taken
/// and each evicted record moves to a random bin of its own other than the
/// one it was just evicted from.
pub(crate) fn random_dary(table: &mut Table, key: KeyEntry, max_steps: usize) -> WalkOutcome {
    measured(table, |table, out| {
        for b in key.hashes.iter() {
            table.fetch(b);
            if table.slot(b, 0).is_empty() {
                table.put(b, 0, key);
                out.push(b, 0, None);
                out.success = true;
                return;
            }
        }
        let d = key.hashes.len();
        let mut bin = key.hashes.get(table.rng().gen_range(0..d));
        let mut x = key;
        loop {
            if out.metrics.chain_length as usize >= max_steps {
                out.homeless = Some(x);
                return;
            }
            let y = table
                .swap(bin, 0, x)
                .expect("walk only kicks from full bins");
            out.push(bin, 0, Some(y.key));
            out.metrics.chain_length += 1;
            let next = loop {
                let b = y.hashes.get(table.rng().gen_range(0..y.hashes.len()));
                if b != bin {
                    break b;
                }
            };
            table.fetch(next);
            if table.slot(next, 0).is_empty() {
                table.put(next, 0, y);
                out.push(next, 0, None);
                out.success = true;
                return;
            }
            x = y;
            bin = next;
        }
    })
}

/// Khosla's min-label scheme. A fresh key reads the labels of all d of its
/// bins; an evicted record reads the d - 1 it is not already in. An empty
/// candidate is taken if there is one. Otherwise the record goes to the
/// candidate with the smallest label (lowest index on ties), that bin's
/// label becomes one more than the smallest label among the record's bins,
/// and the occupant is evicted.
pub(crate) fn khosla(table: &mut Table, key: KeyEntry, max_steps: usize) -> WalkOutcome {
    measured(table, |table, out| {
        let mut x = key;
        let mut from: Option<usize> = None;
        loop {
            let candidates = || x.hashes.iter().filter(move |&b| Some(b) != from);
            for b in candidates() {
                table.fetch(b);
            }
            if let Some(b) = candidates().find(|&b| table.slot(b, 0).is_empty()) {
                table.put(b, 0, x);
                out.push(b, 0, None);
                out.success = true;
                return;
            }
            if out.metrics.chain_length as usize >= max_steps {
                out.homeless = Some(x);
                return;
            }
            let bin = candidates()
                .min_by_key(|&b| (table.meta(b).khosla_label, b))
                .expect("at least one candidate");
            let min_label = x
                .hashes
                .iter()
                .map(|b| table.meta(b).khosla_label)
                .min()
                .expect("at least two hashes");
            let meta = table.meta_mut(bin);
            meta.khosla_label = meta.khosla_label.max(min_label + 1);
            let y = table.swap(bin, 0, x).expect("all candidates are full");
            out.push(bin, 0, Some(y.key));
            out.metrics.chain_length += 1;
            x = y;
            from = Some(bin);
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Hashes;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn entry(key: u64, bins: &[usize]) -> KeyEntry {
        KeyEntry::new(key, key, Hashes::new(bins).unwrap())
    }

    fn fill(policy: Policy, n: usize, d: usize, density: f64, seed: u64) -> DaryTable {
        let mut t = DaryTable::new(n, d, policy, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let target = (density * n as f64) as usize;
        let mut k = 0;
        while t.table().len() < target {
            let out = t.insert(KeyEntry::random(&mut rng, k, k, n, d)).unwrap();
            assert!(out.success, "{policy} failed at {}", t.table().density());
            k += 1;
        }
        t
    }

    #[test]
    fn rattle_places_in_empty_target() {
        let mut t = DaryTable::new(16, 4, Policy::Rattle, 0).unwrap();
        let out = t.insert_rattle(entry(1, &[3, 5, 7, 9]), 100);
        assert!(out.success);
        assert_eq!(out.metrics.chain_length, 0);
        assert_eq!(out.metrics.bins_viewed, 1);
        assert!(t.table().slot(3, 0).holds(1));
    }

    #[test]
    fn higher_counter_stays() {
        let mut t = DaryTable::new(16, 4, Policy::Rattle, 0).unwrap();
        let mut y = entry(2, &[3, 6, 8, 10]);
        y.rattle_counter = 1;
        // Record 2 sits in bin 6 = hashes[1].
        t.table_mut().put(6, 0, y);
        t.table_mut().add_record();
        let mut x = entry(1, &[0, 1, 6, 9]);
        x.rattle_counter = 2;
        let out = t.insert_rattle(x, 100);
        assert!(out.success);
        assert!(t.table().slot(6, 0).holds(1));
        // Record 2 lost: r becomes 2 and it moves to hashes[2] = 8.
        let moved = t.table().slot(8, 0).entry().unwrap();
        assert_eq!((moved.key, moved.rattle_counter), (2, 2));
        assert_eq!(out.metrics.chain_length, 1);
        assert_eq!(out.metrics.bins_viewed, 2);
    }

    #[test]
    fn tie_keeps_incumbent() {
        let mut t = DaryTable::new(16, 4, Policy::Rattle, 0).unwrap();
        t.table_mut().put(0, 0, entry(2, &[0, 6, 8, 10]));
        t.table_mut().add_record();
        let out = t.insert_rattle(entry(1, &[0, 1, 6, 9]), 100);
        assert!(out.success);
        assert!(t.table().slot(0, 0).holds(2));
        let placed = t.table().slot(1, 0).entry().unwrap();
        assert_eq!((placed.key, placed.rattle_counter), (1, 1));
    }

    #[test]
    fn rattle_tries_every_hash_before_reusing() {
        // Fill bins 0..4 with records that always win (huge counters).
        let mut t = DaryTable::new(16, 4, Policy::Rattle, 0).unwrap();
        for b in 0..4 {
            let mut e = entry(100 + b as u64, &[b, 10, 11, 12]);
            e.rattle_counter = 1000;
            t.table_mut().put(b, 0, e);
            t.table_mut().add_record();
        }
        let out = t.insert_rattle(entry(1, &[0, 1, 2, 3]), 8);
        assert!(!out.success);
        let bins: Vec<usize> = out.steps.iter().map(|s| s.bin).collect();
        assert_eq!(bins, vec![0, 1, 2, 3, 0, 1, 2, 3]);
        assert_eq!(out.homeless.unwrap().rattle_counter, 8);
    }

    #[test]
    fn khosla_takes_empty_candidate() {
        let mut t = DaryTable::new(16, 4, Policy::Khosla, 0).unwrap();
        t.table_mut().put(2, 0, entry(9, &[2, 4, 5, 6]));
        t.table_mut().add_record();
        let out = t.insert_khosla(entry(1, &[2, 7, 8, 9]), 100);
        assert!(out.success);
        assert!(t.table().slot(7, 0).holds(1));
        assert_eq!(out.metrics.bins_viewed, 4);
        assert!(t.khosla_labels().all(|l| l == 0));
    }

    #[test]
    fn khosla_evicts_min_label_and_relabels() {
        let mut t = DaryTable::new(16, 4, Policy::Khosla, 0).unwrap();
        let labels = [(0, 2), (1, 0), (2, 1), (3, 3)];
        for (b, l) in labels {
            t.table_mut().meta_mut(b).khosla_label = l;
            t.table_mut()
                .put(b, 0, entry(100 + b as u64, &[b, 10, 11, 12]));
            t.table_mut().add_record();
        }
        let out = t.insert_khosla(entry(1, &[0, 1, 2, 3]), 100);
        assert!(out.success);
        assert!(t.table().slot(1, 0).holds(1));
        assert_eq!(t.table().meta(1).khosla_label, 1);
        // Record 101 went on to its first free other bin.
        assert!(t.table().slot(10, 0).holds(101));
        assert_eq!(out.metrics.bins_viewed, 4 + 3);
    }

    #[test]
    fn random_dary_never_bounces_straight_back() {
        let mut t = DaryTable::new(64, 3, Policy::RandomKick, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in 0..60 {
            let out = t.insert_random(KeyEntry::random(&mut rng, k, k, 64, 3), 1000);
            for w in out.steps.windows(2) {
                assert_ne!(w[0].bin, w[1].bin);
            }
        }
        t.table().check_invariants().unwrap();
    }

    #[test]
    fn fills_keep_invariants() {
        for policy in [
            Policy::Rattle,
            Policy::Khosla,
            Policy::RandomKick,
            Policy::Bfs,
            Policy::SortedSearch,
        ] {
            let t = fill(policy, 512, 4, 0.95, 3);
            t.table().check_invariants().unwrap();
        }
    }

    #[test]
    fn khosla_labels_never_decrease() {
        let mut t = DaryTable::new(256, 4, Policy::Khosla, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut prev: Vec<u32> = t.khosla_labels().collect();
        let mut k = 0;
        while t.table().density() < 0.95 {
            t.insert(KeyEntry::random(&mut rng, k, k, 256, 4)).unwrap();
            let now: Vec<u32> = t.khosla_labels().collect();
            assert!(now.iter().zip(&prev).all(|(a, b)| a >= b));
            prev = now;
            k += 1;
        }
    }

    #[test]
    fn rattle_counters_stay_balanced() {
        let t = fill(Policy::Rattle, 4096, 4, 0.95, 12);
        let mut r: Vec<u32> = t.rattle_counters().collect();
        r.sort_unstable();
        let p95 = r[r.len() * 95 / 100];
        assert!(p95 - r[0] <= 4 + 2, "spread {} too wide", p95 - r[0]);
    }

    #[test]
    fn rejects_wide_bins() {
        let cfg = TableConfig::new(16, 2, 4, Policy::RandomKick);
        assert!(DaryTable::from_config(cfg).is_err());
    }
}
