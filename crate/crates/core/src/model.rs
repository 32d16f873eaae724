//! Table geometry, slot and bin state, and the operations every policy
//! shares: lookup, delete and overwrite.
//!
//! A table is `num_bins` bins of `bin_size` slots. Every key carries its own
//! list of `num_hashes` distinct bin indices, so a stored key can only ever
//! live in one of those bins and a lookup never touches anything else.

use std::cell::Cell;
use std::fmt;
use std::hash::{BuildHasher, Hash};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::walk::WalkOutcome;

/// Upper bound on hash functions per key (the d of d-ary tables).
pub const MAX_HASHES: usize = 8;

/// Default kick-out cap for walk-based policies.
pub const DEFAULT_MAX_STEPS: usize = 500;

/// Default spawn budget for search-based policies.
pub const DEFAULT_MAX_SPAWNS: usize = 2000;

/// Kick-out eviction policy used by [`Table::insert`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Policy {
    RandomKick,
    QueueKick,
    Bfs,
    SortedSearch,
    Hybrid,
    Rattle,
    Khosla,
}

impl Policy {
    pub const ALL: [Policy; 7] = [
        Policy::RandomKick,
        Policy::QueueKick,
        Policy::Bfs,
        Policy::SortedSearch,
        Policy::Hybrid,
        Policy::Rattle,
        Policy::Khosla,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::RandomKick => "random",
            Policy::QueueKick => "queue",
            Policy::Bfs => "bfs",
            Policy::SortedSearch => "sorted",
            Policy::Hybrid => "hybrid",
            Policy::Rattle => "rattle",
            Policy::Khosla => "khosla",
        }
    }

    /// Policies that plan a whole chain with a search before moving anything.
    pub fn is_search(self) -> bool {
        matches!(self, Policy::Bfs | Policy::SortedSearch | Policy::Hybrid)
    }

    /// Policies only defined for single-slot bins.
    pub fn is_dary_only(self) -> bool {
        matches!(self, Policy::Rattle | Policy::Khosla)
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Policy::ALL
            .into_iter()
            .find(|p| p.name() == lower)
            .or(match lower.as_str() {
                "random-kick" | "randomkick" => Some(Policy::RandomKick),
                "queue-kick" | "queuekick" => Some(Policy::QueueKick),
                "sorted-search" | "sortedsearch" => Some(Policy::SortedSearch),
                _ => None,
            })
            .ok_or_else(|| Error::InvalidConfig(format!("unknown policy `{s}`")))
    }
}

/// Parameters of a serial table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableConfig {
    pub num_bins: usize,
    pub bin_size: usize,
    /// H for two-choice tables, d for d-ary tables.
    pub num_hashes: usize,
    pub policy: Policy,
    pub ghost_enabled: bool,
    pub rng_seed: u64,
    pub max_steps: usize,
    pub max_spawns: usize,
    /// Number of candidates a sorted search pops per round.
    pub search_batch: usize,
}

impl TableConfig {
    pub fn new(num_bins: usize, bin_size: usize, num_hashes: usize, policy: Policy) -> Self {
        Self {
            num_bins,
            bin_size,
            num_hashes,
            policy,
            ghost_enabled: false,
            rng_seed: 0,
            max_steps: DEFAULT_MAX_STEPS,
            max_spawns: DEFAULT_MAX_SPAWNS,
            search_batch: 1,
        }
    }

    pub fn with_ghosts(mut self, enabled: bool) -> Self {
        self.ghost_enabled = enabled;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn with_max_spawns(mut self, max_spawns: usize) -> Self {
        self.max_spawns = max_spawns;
        self
    }

    pub fn with_search_batch(mut self, batch: usize) -> Self {
        self.search_batch = batch;
        self
    }

    pub fn capacity(&self) -> usize {
        self.num_bins * self.bin_size
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_bins < 2 {
            return bad(format!(
                "num_bins must be at least 2, got {}",
                self.num_bins
            ));
        }
        if self.num_bins > u32::MAX as usize {
            return bad(format!(
                "num_bins {} does not fit a bin index",
                self.num_bins
            ));
        }
        if self.bin_size == 0 {
            return bad("bin_size must be at least 1".into());
        }
        if self.num_hashes < 2 || self.num_hashes > MAX_HASHES {
            return bad(format!(
                "num_hashes must be in 2..={MAX_HASHES}, got {}",
                self.num_hashes
            ));
        }
        if self.num_hashes > self.num_bins {
            return bad(format!(
                "{} distinct hashes cannot fit in {} bins",
                self.num_hashes, self.num_bins
            ));
        }
        if self.policy.is_dary_only() && self.bin_size != 1 {
            return bad(format!(
                "{} requires single-slot bins, got bin_size {}",
                self.policy, self.bin_size
            ));
        }
        if self.ghost_enabled && self.num_hashes != 2 {
            return bad("ghost insertions require exactly two hash functions".into());
        }
        if self.ghost_enabled && self.policy.is_dary_only() {
            return bad(format!("{} does not support ghost insertions", self.policy));
        }
        if self.policy.is_search() && self.bin_size * (self.num_hashes - 1) <= 1 {
            // With B(H-1) = 1 every spawn replaces one candidate with one
            // child and the frontier never grows.
            return bad(format!(
                "{} requires bin_size * (num_hashes - 1) > 1",
                self.policy
            ));
        }
        if self.search_batch == 0 {
            return bad("search_batch must be at least 1".into());
        }
        Ok(())
    }
}

/// A key's list of distinct candidate bins, in hash-function order.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Hashes {
    bins: [u32; MAX_HASHES],
    len: u8,
}

impl Hashes {
    pub fn new(bins: &[usize]) -> Result<Self> {
        if bins.len() < 2 || bins.len() > MAX_HASHES {
            return Err(Error::InvalidHashes(format!(
                "expected 2..={MAX_HASHES} bins, got {}",
                bins.len()
            )));
        }
        let mut out = [0u32; MAX_HASHES];
        for (i, &b) in bins.iter().enumerate() {
            if bins[..i].contains(&b) {
                return Err(Error::InvalidHashes(format!("bin {b} listed twice")));
            }
            out[i] = u32::try_from(b)
                .map_err(|_| Error::InvalidHashes(format!("bin {b} out of range")))?;
        }
        Ok(Self {
            bins: out,
            len: bins.len() as u8,
        })
    }

    /// Draws `count` distinct bins uniformly from `0..num_bins`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, num_bins: usize, count: usize) -> Self {
        assert!((2..=MAX_HASHES).contains(&count) && count <= num_bins);
        let mut out = [0u32; MAX_HASHES];
        let mut i = 0;
        while i < count {
            let b = rng.gen_range(0..num_bins) as u32;
            if !out[..i].contains(&b) {
                out[i] = b;
                i += 1;
            }
        }
        Self {
            bins: out,
            len: count as u8,
        }
    }

    /// Derives `count` distinct bins for `key` from a hash builder, salting
    /// the hash with the function index and a retry counter until each new
    /// bin differs from the earlier ones.
    pub fn from_hasher<S: BuildHasher>(
        hasher: &S,
        key: u64,
        num_bins: usize,
        count: usize,
    ) -> Self {
        assert!((2..=MAX_HASHES).contains(&count) && count <= num_bins);
        let mut out = [0u32; MAX_HASHES];
        for i in 0..count {
            let mut attempt = 0u32;
            loop {
                let b = (hasher.hash_one((key, i as u32, attempt)) % num_bins as u64) as u32;
                if !out[..i].contains(&b) {
                    out[i] = b;
                    break;
                }
                attempt += 1;
            }
        }
        Self {
            bins: out,
            len: count as u8,
        }
    }

    /// Two distinct bins, packed as the concurrent engine stores them.
    pub(crate) fn pair(a: u32, b: u32) -> Self {
        debug_assert_ne!(a, b);
        let mut bins = [0u32; MAX_HASHES];
        bins[0] = a;
        bins[1] = b;
        Self { bins, len: 2 }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len as usize
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> usize {
        self.as_slice()[i] as usize
    }

    #[inline]
    pub fn as_slice(&self) -> &[u32] {
        &self.bins[..self.len as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.as_slice().iter().map(|&b| b as usize)
    }

    pub fn contains(&self, bin: usize) -> bool {
        self.iter().any(|b| b == bin)
    }

    /// For a two-choice key, the candidate bin that is not `bin`.
    pub fn other(&self, bin: usize) -> usize {
        debug_assert!(self.contains(bin));
        if self.get(0) == bin {
            self.get(1)
        } else {
            self.get(0)
        }
    }
}

impl fmt::Debug for Hashes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.as_slice()).finish()
    }
}

/// A record together with its precomputed hashes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KeyEntry {
    pub key: u64,
    pub payload: u64,
    pub hashes: Hashes,
    /// r(x) for rattle-kicking: how many times the record lost a bin.
    pub rattle_counter: u32,
}

impl KeyEntry {
    pub fn new(key: u64, payload: u64, hashes: Hashes) -> Self {
        Self {
            key,
            payload,
            hashes,
            rattle_counter: 0,
        }
    }

    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        key: u64,
        payload: u64,
        num_bins: usize,
        num_hashes: usize,
    ) -> Self {
        Self::new(key, payload, Hashes::random(rng, num_bins, num_hashes))
    }

    /// Builds an entry for a real key using a user hash builder.
    pub fn hashed<S: BuildHasher>(
        hasher: &S,
        key: u64,
        payload: u64,
        config: &TableConfig,
    ) -> Self {
        Self::new(
            key,
            payload,
            Hashes::from_hasher(hasher, key, config.num_bins, config.num_hashes),
        )
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Slot {
    entry: Option<KeyEntry>,
    is_duplicate: bool,
}

impl Slot {
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.entry.is_none()
    }

    #[inline]
    pub fn entry(&self) -> Option<&KeyEntry> {
        self.entry.as_ref()
    }

    #[inline]
    pub fn is_duplicate(&self) -> bool {
        self.is_duplicate
    }

    #[inline]
    pub fn holds(&self, key: u64) -> bool {
        self.entry.is_some_and(|e| e.key == key)
    }
}

/// Per-bin bookkeeping shared by the policies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BinMeta {
    /// Queue-kicking insert counter; wraps, only its value mod B matters.
    pub hit_counter: u8,
    /// Lifetime spawns of records held in this bin; saturates.
    pub spawn_count: u8,
    pub khosla_label: u32,
}

/// Cost of one insertion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpMetrics {
    /// Bin fetches, counting the initial candidate bins.
    pub bins_viewed: u64,
    /// Kick-outs in the applied chain.
    pub chain_length: u64,
    /// Records spawned by a search.
    pub spawns: u64,
}

/// A serial cuckoo table. Not shareable across threads.
pub struct Table {
    config: TableConfig,
    slots: Vec<Slot>,
    bins: Vec<BinMeta>,
    rng: ChaCha8Rng,
    fetches: Cell<u64>,
    total_spawns: u64,
    records: usize,
}

impl fmt::Debug for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Table")
            .field("config", &self.config)
            .field("records", &self.records)
            .finish_non_exhaustive()
    }
}

impl Table {
    pub fn new(config: TableConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            slots: vec![Slot::default(); config.capacity()],
            bins: vec![BinMeta::default(); config.num_bins],
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
            fetches: Cell::new(0),
            total_spawns: 0,
            records: 0,
            config,
        })
    }

    #[inline]
    pub fn config(&self) -> &TableConfig {
        &self.config
    }

    #[inline]
    pub fn num_bins(&self) -> usize {
        self.config.num_bins
    }

    #[inline]
    pub fn bin_size(&self) -> usize {
        self.config.bin_size
    }

    #[inline]
    pub fn ghosts(&self) -> bool {
        self.config.ghost_enabled
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    /// Distinct records stored (a duplicated record counts once).
    pub fn len(&self) -> usize {
        self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records == 0
    }

    /// Records divided by slots.
    pub fn density(&self) -> f64 {
        self.records as f64 / self.capacity() as f64
    }

    /// Slots of bin `b` without counting a fetch.
    #[inline]
    pub fn bin(&self, b: usize) -> &[Slot] {
        let bs = self.config.bin_size;
        &self.slots[b * bs..(b + 1) * bs]
    }

    /// Slots of bin `b`, counted as one bin viewed.
    #[inline]
    pub fn fetch(&self, b: usize) -> &[Slot] {
        self.fetches.set(self.fetches.get() + 1);
        self.bin(b)
    }

    /// Total bin fetches since the table was created.
    pub fn fetch_count(&self) -> u64 {
        self.fetches.get()
    }

    #[inline]
    pub fn slot(&self, b: usize, s: usize) -> &Slot {
        &self.slots[b * self.config.bin_size + s]
    }

    #[inline]
    pub fn meta(&self, b: usize) -> &BinMeta {
        &self.bins[b]
    }

    /// Sum of spawns performed by every search on this table.
    pub fn total_spawns(&self) -> u64 {
        self.total_spawns
    }

    pub fn free_slot(&self, b: usize) -> Option<usize> {
        self.bin(b).iter().position(Slot::is_empty)
    }

    pub fn duplicate_slot(&self, b: usize) -> Option<usize> {
        self.bin(b).iter().position(Slot::is_duplicate)
    }

    pub fn free_count(&self, b: usize) -> usize {
        self.bin(b).iter().filter(|s| s.is_empty()).count()
    }

    /// Every stored record with its location, duplicates included.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &Slot)> + '_ {
        let bs = self.config.bin_size;
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.is_empty())
            .map(move |(i, s)| (i / bs, i % bs, s))
    }

    pub fn lookup(&self, key: &KeyEntry) -> Option<u64> {
        key.hashes.iter().find_map(|b| {
            self.fetch(b)
                .iter()
                .find_map(|s| s.entry.filter(|e| e.key == key.key).map(|e| e.payload))
        })
    }

    /// Removes every copy of `key`.
    pub fn delete(&mut self, key: &KeyEntry) -> bool {
        let mut removed = false;
        for b in key.hashes.iter() {
            self.fetches.set(self.fetches.get() + 1);
            for s in 0..self.config.bin_size {
                if self.slot(b, s).holds(key.key) {
                    *self.slot_mut(b, s) = Slot::default();
                    removed = true;
                }
            }
        }
        if removed {
            self.records -= 1;
        }
        removed
    }

    /// Replaces the payload of every copy of `key`.
    pub fn overwrite(&mut self, key: &KeyEntry, payload: u64) -> bool {
        let mut found = false;
        for b in key.hashes.iter() {
            self.fetches.set(self.fetches.get() + 1);
            for s in 0..self.config.bin_size {
                if let Some(e) = self.slot_mut(b, s).entry.as_mut() {
                    if e.key == key.key {
                        e.payload = payload;
                        found = true;
                    }
                }
            }
        }
        found
    }

    /// Inserts a key that is not already present, using the configured
    /// policy (and ghost insertions when enabled).
    pub fn insert(&mut self, key: KeyEntry) -> Result<WalkOutcome> {
        if key.hashes.len() != self.config.num_hashes
            || key.hashes.iter().any(|b| b >= self.config.num_bins)
        {
            return Err(Error::InvalidHashes(format!(
                "key {} has hashes {:?}, table expects {} bins below {}",
                key.key, key.hashes, self.config.num_hashes, self.config.num_bins
            )));
        }
        let out = if self.config.ghost_enabled {
            crate::walk::ghost_insert(self, key)?
        } else {
            let max_steps = self.config.max_steps;
            match self.config.policy {
                Policy::RandomKick if self.config.bin_size == 1 => {
                    crate::dary::random_dary(self, key, max_steps)
                }
                Policy::RandomKick => crate::walk::insert_random_kick(self, key, max_steps),
                Policy::QueueKick => crate::walk::insert_queue_kick(self, key, max_steps),
                Policy::Bfs | Policy::SortedSearch | Policy::Hybrid => {
                    crate::search::insert_searched(self, key)
                }
                Policy::Rattle => crate::dary::rattle(self, key, max_steps),
                Policy::Khosla => crate::dary::khosla(self, key, max_steps),
            }
        };
        Ok(out)
    }

    /// Full scan of the structural invariants: two-bin residency, no
    /// duplicated non-ghost keys, ghost copies come in marked pairs, and the
    /// record count matches.
    pub fn check_invariants(&self) -> Result<()> {
        use std::collections::HashMap;
        let corrupt = |msg: String| Err(Error::CorruptState(msg));
        let mut copies: HashMap<u64, Vec<(usize, bool, u64)>> = HashMap::new();
        for (b, s, slot) in self.iter() {
            let e = slot.entry.expect("iter yields occupied slots");
            if !e.hashes.contains(b) {
                return corrupt(format!(
                    "key {} stored in bin {b} outside its hashes",
                    e.key
                ));
            }
            if slot.is_duplicate && !self.config.ghost_enabled {
                return corrupt(format!("duplicate mark at ({b}, {s}) without ghosts"));
            }
            copies
                .entry(e.key)
                .or_default()
                .push((b, slot.is_duplicate, e.payload));
        }
        for (key, locs) in &copies {
            match locs.as_slice() {
                [(_, false, _)] => {}
                [(b1, true, p1), (b2, true, p2)] if b1 != b2 && p1 == p2 => {}
                other => return corrupt(format!("key {key} has inconsistent copies {other:?}")),
            }
        }
        if copies.len() != self.records {
            return corrupt(format!(
                "record count {} but {} distinct keys stored",
                self.records,
                copies.len()
            ));
        }
        Ok(())
    }

    // ---- crate-internal mutation helpers ----

    #[inline]
    pub(crate) fn slot_mut(&mut self, b: usize, s: usize) -> &mut Slot {
        let bs = self.config.bin_size;
        &mut self.slots[b * bs + s]
    }

    #[inline]
    pub(crate) fn meta_mut(&mut self, b: usize) -> &mut BinMeta {
        &mut self.bins[b]
    }

    #[inline]
    pub(crate) fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub(crate) fn note_spawn(&mut self, b: usize) {
        let meta = &mut self.bins[b];
        meta.spawn_count = meta.spawn_count.saturating_add(1);
        self.total_spawns += 1;
    }

    pub(crate) fn add_record(&mut self) {
        self.records += 1;
    }

    /// Writes a single (non-duplicate) copy into an empty slot.
    pub(crate) fn put(&mut self, b: usize, s: usize, entry: KeyEntry) {
        debug_assert!(
            self.slot(b, s).is_empty(),
            "put into occupied slot ({b}, {s})"
        );
        *self.slot_mut(b, s) = Slot {
            entry: Some(entry),
            is_duplicate: false,
        };
    }

    pub(crate) fn put_duplicate(&mut self, b: usize, s: usize, entry: KeyEntry) {
        debug_assert!(self.slot(b, s).is_empty());
        *self.slot_mut(b, s) = Slot {
            entry: Some(entry),
            is_duplicate: true,
        };
    }

    /// Puts `entry` in slot `(b, s)` and returns the previous occupant.
    pub(crate) fn swap(&mut self, b: usize, s: usize, entry: KeyEntry) -> Option<KeyEntry> {
        let old = std::mem::replace(
            self.slot_mut(b, s),
            Slot {
                entry: Some(entry),
                is_duplicate: false,
            },
        );
        debug_assert!(!old.is_duplicate, "evicted a duplicate as a normal victim");
        old.entry
    }

    pub(crate) fn take(&mut self, b: usize, s: usize) -> Option<KeyEntry> {
        std::mem::take(self.slot_mut(b, s)).entry
    }

    /// Counts a fetch made by a mutating operation.
    pub(crate) fn count_fetch(&self) {
        self.fetches.set(self.fetches.get() + 1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn entry(key: u64, bins: &[usize]) -> KeyEntry {
        KeyEntry::new(key, key * 10, Hashes::new(bins).unwrap())
    }

    #[test]
    fn empty_table_has_all_slots_free() {
        let t = Table::new(TableConfig::new(8, 4, 2, Policy::RandomKick)).unwrap();
        assert_eq!(t.capacity(), 32);
        assert!(t.iter().next().is_none());
        assert!((0..8).all(|b| t.meta(b) == &BinMeta::default()));
        assert_eq!(t.len(), 0);
    }

    #[test]
    fn serial_geometry_is_valid() {
        let cfg = TableConfig::new(1 << 13, 4, 2, Policy::SortedSearch);
        assert!(Table::new(cfg).is_ok());
    }

    #[test]
    fn config_invariants_are_enforced() {
        let rattle = TableConfig::new(4, 4, 2, Policy::Rattle);
        assert!(matches!(Table::new(rattle), Err(Error::InvalidConfig(_))));
        let khosla = TableConfig::new(16, 2, 4, Policy::Khosla);
        assert!(matches!(Table::new(khosla), Err(Error::InvalidConfig(_))));
        let one_bin = TableConfig::new(1, 4, 2, Policy::RandomKick);
        assert!(Table::new(one_bin).is_err());
        let one_hash = TableConfig::new(8, 4, 1, Policy::RandomKick);
        assert!(Table::new(one_hash).is_err());
        let empty_bins = TableConfig::new(8, 0, 2, Policy::RandomKick);
        assert!(Table::new(empty_bins).is_err());
        let ghost_dary = TableConfig::new(16, 1, 4, Policy::Rattle).with_ghosts(true);
        assert!(Table::new(ghost_dary).is_err());
        let flat_search = TableConfig::new(16, 1, 2, Policy::Bfs);
        assert!(Table::new(flat_search).is_err());
        assert!(Table::new(TableConfig::new(16, 1, 4, Policy::Rattle)).is_ok());
        assert!(Table::new(TableConfig::new(16, 1, 4, Policy::Bfs)).is_ok());
    }

    #[test]
    fn hashes_reject_repeats_and_resample() {
        assert!(Hashes::new(&[3, 3]).is_err());
        assert!(Hashes::new(&[3]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let h = Hashes::random(&mut rng, 4, 4);
            let mut v: Vec<_> = h.iter().collect();
            v.sort_unstable();
            assert_eq!(v, vec![0, 1, 2, 3]);
        }
        let state = std::collections::hash_map::RandomState::new();
        for key in 0..1000u64 {
            let h = Hashes::from_hasher(&state, key, 3, 3);
            let mut v: Vec<_> = h.iter().collect();
            v.sort_unstable();
            assert_eq!(v, vec![0, 1, 2]);
            assert_eq!(h, Hashes::from_hasher(&state, key, 3, 3));
        }
    }

    #[test]
    fn lookup_finds_key_in_second_bin() {
        let mut t = Table::new(TableConfig::new(8, 4, 2, Policy::RandomKick)).unwrap();
        let k = entry(7, &[2, 5]);
        t.put(5, 3, k);
        t.add_record();
        let before = t.fetch_count();
        assert_eq!(t.lookup(&k), Some(70));
        assert!(t.fetch_count() - before <= 2);
        assert_eq!(t.lookup(&entry(8, &[2, 5])), None);
        assert!(t.fetch_count() - before <= 4);
    }

    #[test]
    fn delete_and_overwrite() {
        let mut t = Table::new(TableConfig::new(8, 4, 2, Policy::RandomKick)).unwrap();
        let k = entry(1, &[0, 1]);
        t.put(0, 2, k);
        t.add_record();
        assert!(t.overwrite(&k, 99));
        assert_eq!(t.lookup(&k), Some(99));
        assert!(!t.overwrite(&entry(2, &[0, 1]), 5));
        assert!(t.delete(&k));
        assert!(t.slot(0, 2).is_empty());
        assert!(!t.delete(&k));
        assert_eq!(t.len(), 0);
        t.check_invariants().unwrap();
    }

    #[test]
    fn duplicated_key_is_read_overwritten_and_deleted_everywhere() {
        let cfg = TableConfig::new(8, 4, 2, Policy::RandomKick).with_ghosts(true);
        let mut t = Table::new(cfg).unwrap();
        let k = entry(4, &[3, 6]);
        t.put_duplicate(3, 0, k);
        t.put_duplicate(6, 1, k);
        t.add_record();
        t.check_invariants().unwrap();
        assert_eq!(t.lookup(&k), Some(40));

        assert!(t.overwrite(&k, 41));
        let payloads: Vec<u64> = t
            .iter()
            .filter_map(|(_, _, s)| s.entry().filter(|e| e.key == 4).map(|e| e.payload))
            .collect();
        assert_eq!(payloads, vec![41, 41]);

        assert!(t.delete(&k));
        assert_eq!(t.iter().filter(|(_, _, s)| s.holds(4)).count(), 0);
        t.check_invariants().unwrap();
    }

    #[test]
    fn policy_names_round_trip() {
        for p in Policy::ALL {
            assert_eq!(p.name().parse::<Policy>().unwrap(), p);
        }
        assert!("nope".parse::<Policy>().is_err());
    }
}
