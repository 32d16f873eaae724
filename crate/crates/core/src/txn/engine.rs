use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{fence, AtomicI64, AtomicU64, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::cell::{is_locked, version_of, BinCell, Record, SlotCell, EMPTY_KEY};
use crate::error::{Error, Result};
use crate::model::Hashes;

/// Why a transaction attempt aborted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AbortCause {
    /// A slot in the read set changed, or another writer held it, before
    /// commit.
    ReadInvalidated,
    /// A slot this transaction deletes or overwrites was changed under it.
    ConcurrentEdit,
    /// A delete or overwrite met a slot claimed by another transaction.
    ClaimedSlot,
    /// A key this transaction relied on being absent appeared.
    PhantomKey,
    /// No usable slot or chain: everything reachable was claimed or locked.
    BinExhausted,
    /// A bin version changed and local retries are off.
    BinVersionChanged,
    /// Another transaction wrote a slot this one planned to fill first.
    InsertCollision,
    /// A kick-out walk reached its step cap.
    WalkFailed,
    /// Commit gave up after too many local retries.
    RetryLimit,
    /// A read kept seeing its slot change mid-copy.
    TornRead,
}

impl AbortCause {
    pub const ALL: [AbortCause; 10] = [
        AbortCause::ReadInvalidated,
        AbortCause::ConcurrentEdit,
        AbortCause::ClaimedSlot,
        AbortCause::PhantomKey,
        AbortCause::BinExhausted,
        AbortCause::BinVersionChanged,
        AbortCause::InsertCollision,
        AbortCause::WalkFailed,
        AbortCause::RetryLimit,
        AbortCause::TornRead,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AbortCause::ReadInvalidated => "read-invalidated",
            AbortCause::ConcurrentEdit => "concurrent-edit",
            AbortCause::ClaimedSlot => "claimed-slot",
            AbortCause::PhantomKey => "phantom-key",
            AbortCause::BinExhausted => "bin-exhausted",
            AbortCause::BinVersionChanged => "bin-version-changed",
            AbortCause::InsertCollision => "insert-collision",
            AbortCause::WalkFailed => "walk-failed",
            AbortCause::RetryLimit => "retry-limit",
            AbortCause::TornRead => "torn-read",
        }
    }

    /// The causes that remain once claim flags and local retries are on.
    pub fn survives_claims_and_retries(self) -> bool {
        matches!(
            self,
            AbortCause::ReadInvalidated
                | AbortCause::ConcurrentEdit
                | AbortCause::ClaimedSlot
                | AbortCause::PhantomKey
                | AbortCause::BinExhausted
        )
    }
}

impl fmt::Display for AbortCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("transaction aborted: {cause}")]
pub struct Abort {
    pub cause: AbortCause,
}

/// How an insertion finds room when both of its bins are full.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChainPlanner {
    RandomWalk,
    QueueWalk,
    Sorted,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EngineConfig {
    pub num_bins: usize,
    pub bin_size: usize,
    pub local_retries: bool,
    /// Insert slots come from the bin's hit-counter.
    pub queue_kicking: bool,
    /// Kick-out chains run as their own micro-transactions during planning.
    pub system_kickouts: bool,
    pub claim_flags: bool,
    pub planner: ChainPlanner,
    pub max_steps: usize,
    pub max_spawns: usize,
    pub max_local_retries: usize,
    /// System chains replanned this many times before the insertion falls
    /// back to applying its chain at commit.
    pub max_replans: usize,
    /// Slot re-choices after losing a claim race.
    pub max_claim_retries: usize,
    pub max_torn_reads: usize,
    /// Keep a log of committed write sets (for serializability checks).
    pub record_commits: bool,
}

impl EngineConfig {
    /// The naive scheme: no local retries, claims, queue-kicking or system
    /// kick-outs.
    pub fn new(num_bins: usize, bin_size: usize) -> Self {
        Self {
            num_bins,
            bin_size,
            local_retries: false,
            queue_kicking: false,
            system_kickouts: false,
            claim_flags: false,
            planner: ChainPlanner::RandomWalk,
            max_steps: crate::model::DEFAULT_MAX_STEPS,
            max_spawns: crate::model::DEFAULT_MAX_SPAWNS,
            max_local_retries: 64,
            max_replans: 3,
            max_claim_retries: 3,
            max_torn_reads: 100,
            record_commits: false,
        }
    }

    /// The six benchmark variants:
    /// 1 naive, 2 local retries, 3 retries + queue-kicking,
    /// 4 retries + queue-kicking + system kick-outs, 5 retries + claim flags,
    /// 6 retries + claim flags + system kick-outs.
    pub fn preset(num_bins: usize, bin_size: usize, preset: u8) -> Result<Self> {
        let base = Self::new(num_bins, bin_size);
        let cfg = match preset {
            1 => base,
            2 => Self {
                local_retries: true,
                ..base
            },
            3 | 4 => Self {
                local_retries: true,
                queue_kicking: true,
                system_kickouts: preset == 4,
                planner: ChainPlanner::QueueWalk,
                ..base
            },
            5 | 6 => Self {
                local_retries: true,
                claim_flags: true,
                system_kickouts: preset == 6,
                planner: ChainPlanner::Sorted,
                ..base
            },
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "preset must be 1..=6, got {preset}"
                )))
            }
        };
        Ok(cfg)
    }

    pub fn with_commit_log(mut self, on: bool) -> Self {
        self.record_commits = on;
        self
    }

    pub fn capacity(&self) -> usize {
        self.num_bins * self.bin_size
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.num_bins < 2 || self.num_bins > u32::MAX as usize {
            return bad(format!("num_bins {} out of range", self.num_bins));
        }
        if self.bin_size == 0 {
            return bad("bin_size must be at least 1".into());
        }
        if self.planner == ChainPlanner::Sorted && self.bin_size < 2 {
            return bad("sorted chain planning needs bin_size >= 2 with two hashes".into());
        }
        Ok(())
    }
}

/// One committed transaction's key-level effects.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommitRecord {
    pub txn_id: u64,
    /// Global commit order, for breaking ties between equal IDs.
    pub commit_seq: u64,
    pub worker: usize,
    /// In program order: `Some(payload)` for inserts and overwrites,
    /// `None` for deletes.
    pub writes: Vec<(u64, Option<u64>)>,
    /// Largest version observed in the read and write sets.
    pub max_observed: u64,
}

/// Per-thread state that outlives single transactions.
#[derive(Debug)]
pub struct Worker {
    pub id: usize,
    pub last_txn_id: u64,
    pub(crate) rng: ChaCha8Rng,
}

impl Worker {
    pub fn new(id: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id as u64);
        Self {
            id,
            last_txn_id: 0,
            rng,
        }
    }
}

/// The shared table.
pub struct TxnTable {
    pub(crate) config: EngineConfig,
    pub(crate) bins: Box<[BinCell]>,
    pub(crate) slots: Box<[SlotCell]>,
    records: AtomicI64,
    commit_seq: AtomicU64,
    log: Mutex<Vec<CommitRecord>>,
}

impl fmt::Debug for TxnTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TxnTable")
            .field("config", &self.config)
            .field("records", &self.len())
            .finish_non_exhaustive()
    }
}

impl TxnTable {
    pub fn new(config: EngineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            bins: (0..config.num_bins).map(|_| BinCell::default()).collect(),
            slots: (0..config.capacity())
                .map(|_| SlotCell::default())
                .collect(),
            records: AtomicI64::new(0),
            commit_seq: AtomicU64::new(0),
            log: Mutex::new(Vec::new()),
            config,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn len(&self) -> usize {
        self.records.load(Ordering::Acquire).max(0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn density(&self) -> f64 {
        self.len() as f64 / self.capacity() as f64
    }

    pub fn begin<'e>(&'e self, worker: &'e mut Worker) -> Transaction<'e> {
        Transaction {
            engine: self,
            worker,
            status: TxnStatus::Planning,
            aborted: None,
            pending: HashMap::new(),
            read_slots: HashMap::new(),
            read_bins: HashMap::new(),
            write_slots: BTreeMap::new(),
            write_bins: BTreeMap::new(),
            absent: HashMap::new(),
            claims: HashSet::new(),
            writes_log: Vec::new(),
            record_delta: 0,
        }
    }

    #[inline]
    pub(crate) fn slot_index(&self, bin: usize, slot: usize) -> usize {
        bin * self.config.bin_size + slot
    }

    /// Consistent copy of a slot, or `None` if it kept changing.
    pub(crate) fn read_slot(&self, s: usize) -> Option<(u64, Option<Record>)> {
        let cell = &self.slots[s];
        for _ in 0..=self.config.max_torn_reads {
            let w1 = cell.cell.stable();
            let rec = cell.load_record();
            fence(Ordering::Acquire);
            if cell.cell.raw(Ordering::Relaxed) == w1 {
                return Some((version_of(w1), rec));
            }
        }
        None
    }

    /// Unsynchronised payload lookup for quiescent inspection.
    pub fn peek(&self, key: u64, hashes: &Hashes) -> Option<u64> {
        hashes.iter().find_map(|b| {
            (0..self.config.bin_size)
                .filter_map(|s| self.slots[self.slot_index(b, s)].load_record())
                .find(|r| r.key == key)
                .map(|r| r.payload)
        })
    }

    /// Key to payload map of the whole table. Only meaningful while no
    /// transaction is running.
    pub fn snapshot(&self) -> BTreeMap<u64, u64> {
        self.slots
            .iter()
            .filter_map(|s| s.load_record())
            .map(|r| (r.key, r.payload))
            .collect()
    }

    /// Locked cells and claimed slots; both must be zero when quiescent.
    pub fn audit(&self) -> (usize, usize) {
        let locked = self.bins.iter().filter(|b| b.cell.is_locked()).count()
            + self.slots.iter().filter(|s| s.cell.is_locked()).count();
        let claimed = self.slots.iter().filter(|s| s.is_claimed()).count();
        (locked, claimed)
    }

    /// Quiescent structural check: residency, no duplicate keys, record
    /// count.
    pub fn check_invariants(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (i, s) in self.slots.iter().enumerate() {
            if let Some(r) = s.load_record() {
                let bin = i / self.config.bin_size;
                if !r.hashes.contains(bin) {
                    return Err(Error::CorruptState(format!(
                        "key {} in foreign bin {bin}",
                        r.key
                    )));
                }
                if !seen.insert(r.key) {
                    return Err(Error::CorruptState(format!("key {} stored twice", r.key)));
                }
            }
        }
        if seen.len() != self.len() {
            return Err(Error::CorruptState(format!(
                "record count {} but {} keys stored",
                self.len(),
                seen.len()
            )));
        }
        Ok(())
    }

    /// Drains the commit log.
    pub fn take_commit_log(&self) -> Vec<CommitRecord> {
        std::mem::take(&mut *self.log.lock().expect("commit log poisoned"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TxnStatus {
    Planning,
    Validating,
    Committed,
    Aborted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum WriteKind {
    Insert,
    Edit,
    Chain,
}

pub(crate) enum Found {
    Pending(usize, Record),
    Table(usize, u64, Record),
    Absent,
}

/// A transaction in its planning stage. Owned by one thread.
pub struct Transaction<'e> {
    pub(crate) engine: &'e TxnTable,
    pub(crate) worker: &'e mut Worker,
    status: TxnStatus,
    aborted: Option<AbortCause>,
    /// Planned slot contents.
    pub(crate) pending: HashMap<usize, Option<Record>>,
    pub(crate) read_slots: HashMap<usize, u64>,
    pub(crate) read_bins: HashMap<usize, u64>,
    pub(crate) write_slots: BTreeMap<usize, (u64, WriteKind)>,
    pub(crate) write_bins: BTreeMap<usize, u64>,
    /// Keys this transaction relies on being absent, per bin.
    absent: HashMap<usize, Vec<u64>>,
    pub(crate) claims: HashSet<usize>,
    writes_log: Vec<(u64, Option<u64>)>,
    record_delta: i64,
}

impl Drop for Transaction<'_> {
    fn drop(&mut self) {
        if self.status != TxnStatus::Committed {
            self.release_claims();
        }
    }
}

impl<'e> Transaction<'e> {
    pub fn status(&self) -> TxnStatus {
        self.status
    }

    /// Slot and bin entries in the read set.
    pub fn read_set_len(&self) -> usize {
        self.read_slots.len() + self.read_bins.len()
    }

    pub fn write_set_len(&self) -> usize {
        self.write_slots.len() + self.write_bins.len()
    }

    pub fn read(&mut self, key: u64, hashes: Hashes) -> Result<Option<u64>, Abort> {
        self.check_live()?;
        match self.locate(key, &hashes)? {
            Found::Pending(_, r) => Ok(Some(r.payload)),
            Found::Table(s, v, r) => {
                self.add_read_slot(s, v);
                Ok(Some(r.payload))
            }
            Found::Absent => Ok(None),
        }
    }

    /// Plans an insertion. Returns false, changing nothing, if the key is
    /// already present.
    pub fn insert(&mut self, key: u64, payload: u64, hashes: Hashes) -> Result<bool, Abort> {
        self.check_live()?;
        assert_eq!(hashes.len(), 2, "the engine uses two hash functions");
        match self.locate(key, &hashes)? {
            Found::Pending(..) => return Ok(false),
            Found::Table(s, v, _) => {
                self.add_read_slot(s, v);
                return Ok(false);
            }
            Found::Absent => {}
        }
        self.place(Record {
            key,
            payload,
            hashes,
        })?;
        self.writes_log.push((key, Some(payload)));
        self.record_delta += 1;
        Ok(true)
    }

    pub fn delete(&mut self, key: u64, hashes: Hashes) -> Result<bool, Abort> {
        self.edit(key, hashes, None)
    }

    pub fn overwrite(&mut self, key: u64, hashes: Hashes, payload: u64) -> Result<bool, Abort> {
        self.edit(key, hashes, Some(payload))
    }

    fn edit(&mut self, key: u64, hashes: Hashes, payload: Option<u64>) -> Result<bool, Abort> {
        self.check_live()?;
        let (s, rec) = match self.locate(key, &hashes)? {
            Found::Absent => return Ok(false),
            Found::Pending(s, r) => (s, r),
            Found::Table(s, v, r) => {
                let v = self.claim_for_edit(s, v, key)?;
                self.add_write_slot(s, v, WriteKind::Edit);
                (s, r)
            }
        };
        let image = payload.map(|p| Record { payload: p, ..rec });
        self.pending.insert(s, image);
        self.writes_log.push((key, payload));
        if payload.is_none() {
            self.record_delta -= 1;
        }
        Ok(true)
    }

    /// With claim flags, claims a slot found holding `key` and returns the
    /// version to validate against.
    fn claim_for_edit(&mut self, s: usize, seen: u64, key: u64) -> Result<u64, Abort> {
        if !self.engine.config.claim_flags || self.claims.contains(&s) {
            return Ok(seen);
        }
        let slot = &self.engine.slots[s];
        if !slot.claim() {
            return Err(self.fail(AbortCause::ClaimedSlot));
        }
        self.claims.insert(s);
        match self.engine.read_slot(s) {
            Some((v, Some(r))) if r.key == key => Ok(v),
            Some(_) => Err(self.fail(AbortCause::ConcurrentEdit)),
            None => Err(self.fail(AbortCause::TornRead)),
        }
    }

    pub fn abort(mut self) {
        self.fail(AbortCause::ConcurrentEdit);
    }

    fn check_live(&self) -> Result<(), Abort> {
        match self.aborted {
            Some(cause) => Err(Abort { cause }),
            None => Ok(()),
        }
    }

    pub(crate) fn fail(&mut self, cause: AbortCause) -> Abort {
        self.release_claims();
        self.status = TxnStatus::Aborted;
        self.aborted = Some(cause);
        Abort { cause }
    }

    fn release_claims(&mut self) {
        for s in self.claims.drain() {
            self.engine.slots[s].unclaim();
        }
    }

    /// Finds `key` in its bins, looking at planned contents first. A miss
    /// puts both bins in the read set as absence checks.
    pub(crate) fn locate(&mut self, key: u64, hashes: &Hashes) -> Result<Found, Abort> {
        let bs = self.engine.config.bin_size;
        for b in hashes.iter() {
            for s in b * bs..(b + 1) * bs {
                if let Some(Some(r)) = self.pending.get(&s) {
                    if r.key == key {
                        return Ok(Found::Pending(s, *r));
                    }
                }
            }
        }
        let mut versions = [0u64; 2];
        for (i, b) in hashes.iter().enumerate() {
            let bin = &self.engine.bins[b].cell;
            let mut torn = 0;
            loop {
                let w = bin.stable();
                for s in b * bs..(b + 1) * bs {
                    if self.pending.contains_key(&s) {
                        continue;
                    }
                    match self.engine.read_slot(s) {
                        Some((v, Some(r))) if r.key == key => return Ok(Found::Table(s, v, r)),
                        Some(_) => {}
                        None => return Err(self.fail(AbortCause::TornRead)),
                    }
                }
                fence(Ordering::Acquire);
                if bin.raw(Ordering::Relaxed) == w {
                    versions[i] = version_of(w);
                    break;
                }
                torn += 1;
                if torn > self.engine.config.max_torn_reads {
                    return Err(self.fail(AbortCause::TornRead));
                }
            }
        }
        for (i, b) in hashes.iter().enumerate() {
            self.absent.entry(b).or_default().push(key);
            if !self.write_bins.contains_key(&b) {
                self.read_bins.entry(b).or_insert(versions[i]);
            }
        }
        Ok(Found::Absent)
    }

    pub(crate) fn add_read_slot(&mut self, s: usize, v: u64) {
        if !self.write_slots.contains_key(&s) {
            self.read_slots.entry(s).or_insert(v);
        }
    }

    /// Moves or adds a slot to the write set, keeping the earliest version
    /// seen.
    pub(crate) fn add_write_slot(&mut self, s: usize, v: u64, kind: WriteKind) {
        let v = self.read_slots.remove(&s).unwrap_or(v);
        self.write_slots.entry(s).or_insert((v, kind));
    }

    pub(crate) fn add_write_bin(&mut self, b: usize) {
        if self.write_bins.contains_key(&b) {
            return;
        }
        let v = match self.read_bins.remove(&b) {
            Some(v) => v,
            None => version_of(self.engine.bins[b].cell.stable()),
        };
        self.write_bins.insert(b, v);
    }

    /// True if none of the keys this transaction needs absent from bin `b`
    /// is stored there. Reads keys without waiting; keys only enter a bin
    /// under its lock.
    fn still_absent(&self, b: usize) -> bool {
        let Some(keys) = self.absent.get(&b) else {
            return true;
        };
        let bs = self.engine.config.bin_size;
        (b * bs..(b + 1) * bs)
            .filter(|s| !self.pending.contains_key(s))
            .map(|s| self.engine.slots[s].key())
            .all(|k| k == EMPTY_KEY || !keys.contains(&k))
    }

    fn unlock_all(&self, bins: &[usize], slots: &[usize]) {
        for &s in slots {
            self.engine.slots[s].cell.unlock_unchanged();
        }
        for &b in bins {
            self.engine.bins[b].cell.unlock_unchanged();
        }
    }

    /// Stage 2 (lock and verify) and stage 3 (apply and stamp). Returns the
    /// transaction ID.
    pub fn commit(mut self) -> Result<u64, Abort> {
        self.check_live()?;
        self.status = TxnStatus::Validating;
        let engine = self.engine;
        let cfg = &engine.config;
        let mut restarts = 0;
        let (locked_bins, locked_slots) = 'stage2: loop {
            let mut locked_bins = Vec::with_capacity(self.write_bins.len());
            let mut locked_slots = Vec::with_capacity(self.write_slots.len());
            let bins: Vec<usize> = self.write_bins.keys().copied().collect();
            for b in bins {
                let now = version_of(engine.bins[b].cell.lock());
                locked_bins.push(b);
                if now != self.write_bins[&b] {
                    let cause = if !cfg.local_retries {
                        Some(AbortCause::BinVersionChanged)
                    } else if !self.still_absent(b) {
                        Some(AbortCause::PhantomKey)
                    } else {
                        None
                    };
                    if let Some(cause) = cause {
                        self.unlock_all(&locked_bins, &locked_slots);
                        return Err(self.fail(cause));
                    }
                    self.write_bins.insert(b, now);
                }
            }
            let slots: Vec<(usize, (u64, WriteKind))> =
                self.write_slots.iter().map(|(&s, &v)| (s, v)).collect();
            for (s, (v, kind)) in slots {
                let now = version_of(engine.slots[s].cell.lock());
                locked_slots.push(s);
                if now != v {
                    self.unlock_all(&locked_bins, &locked_slots);
                    let cause = match kind {
                        WriteKind::Edit => AbortCause::ConcurrentEdit,
                        WriteKind::Insert | WriteKind::Chain => AbortCause::InsertCollision,
                    };
                    return Err(self.fail(cause));
                }
            }
            for (&s, &v) in &self.read_slots {
                let w = engine.slots[s].cell.raw(Ordering::Acquire);
                if is_locked(w) || version_of(w) != v {
                    self.unlock_all(&locked_bins, &locked_slots);
                    return Err(self.fail(AbortCause::ReadInvalidated));
                }
            }
            let changed: Vec<usize> = self
                .read_bins
                .iter()
                .filter(|(&b, &v)| {
                    let w = engine.bins[b].cell.raw(Ordering::Acquire);
                    is_locked(w) || version_of(w) != v
                })
                .map(|(&b, _)| b)
                .collect();
            if changed.is_empty() {
                break 'stage2 (locked_bins, locked_slots);
            }
            self.unlock_all(&locked_bins, &locked_slots);
            if !cfg.local_retries {
                return Err(self.fail(AbortCause::BinVersionChanged));
            }
            restarts += 1;
            if restarts > cfg.max_local_retries {
                return Err(self.fail(AbortCause::RetryLimit));
            }
            for b in changed {
                match self.recheck_absent(b) {
                    Some(v) => {
                        self.read_bins.insert(b, v);
                    }
                    None => return Err(self.fail(AbortCause::PhantomKey)),
                }
            }
        };

        let max_observed = self
            .read_slots
            .values()
            .chain(self.read_bins.values())
            .chain(self.write_slots.values().map(|(v, _)| v))
            .chain(self.write_bins.values())
            .copied()
            .max()
            .unwrap_or(0);
        let txn_id = (max_observed + 1).max(self.worker.last_txn_id + 1);
        for (&s, image) in &self.pending {
            engine.slots[s].store_record(*image);
        }
        let seq = engine.commit_seq.fetch_add(1, Ordering::AcqRel);
        if cfg.record_commits {
            engine
                .log
                .lock()
                .expect("commit log poisoned")
                .push(CommitRecord {
                    txn_id,
                    commit_seq: seq,
                    worker: self.worker.id,
                    writes: std::mem::take(&mut self.writes_log),
                    max_observed,
                });
        }
        engine
            .records
            .fetch_add(self.record_delta, Ordering::AcqRel);
        for &s in &locked_slots {
            engine.slots[s].cell.unlock(txn_id);
        }
        for &b in &locked_bins {
            engine.bins[b].cell.unlock(txn_id);
        }
        self.release_claims();
        self.status = TxnStatus::Committed;
        self.worker.last_txn_id = txn_id;
        Ok(txn_id)
    }

    /// Local retry of an absence check: waits out writers, rescans the bin
    /// and returns its new version if every relied-on key is still absent.
    fn recheck_absent(&self, b: usize) -> Option<u64> {
        let bin = &self.engine.bins[b].cell;
        loop {
            let w = bin.stable();
            let ok = self.still_absent(b);
            fence(Ordering::Acquire);
            if bin.raw(Ordering::Relaxed) == w {
                return ok.then_some(version_of(w));
            }
        }
    }
}
