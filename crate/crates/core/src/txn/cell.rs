//! Lock-plus-version words and the slot and bin cells built on them.
//!
//! A cell's lock bit and version share one 64-bit word. Readers use it as a
//! sequence lock: load the word, copy the data, load it again, and retry if
//! the two loads differ. Writers take the lock bit, write the data, and
//! release by storing the new version with the bit cleared.

use std::sync::atomic::{fence, AtomicBool, AtomicU32, AtomicU64, AtomicU8, Ordering};

use crate::model::Hashes;

const LOCK_BIT: u64 = 1 << 63;
pub(crate) const EMPTY_KEY: u64 = u64::MAX;

#[inline]
pub(crate) fn is_locked(word: u64) -> bool {
    word & LOCK_BIT != 0
}

#[inline]
pub(crate) fn version_of(word: u64) -> u64 {
    word & !LOCK_BIT
}

/// Spin briefly, then hand the CPU to other threads.
#[derive(Default)]
pub(crate) struct Backoff(u32);

impl Backoff {
    pub(crate) fn snooze(&mut self) {
        if self.0 < 6 {
            for _ in 0..(1 << self.0) {
                std::hint::spin_loop();
            }
        } else {
            std::thread::yield_now();
        }
        self.0 = self.0.saturating_add(1);
    }
}

/// An exclusive lock and a version number in one word.
#[derive(Debug, Default)]
pub struct VersionedCell {
    word: AtomicU64,
}

impl VersionedCell {
    /// Current version, whether or not the cell is locked.
    pub fn version(&self) -> u64 {
        version_of(self.word.load(Ordering::Acquire))
    }

    pub fn is_locked(&self) -> bool {
        is_locked(self.word.load(Ordering::Acquire))
    }

    #[inline]
    pub(crate) fn raw(&self, order: Ordering) -> u64 {
        self.word.load(order)
    }

    /// Waits until no writer holds the cell and returns its version word.
    pub(crate) fn stable(&self) -> u64 {
        let mut backoff = Backoff::default();
        loop {
            let w = self.word.load(Ordering::Acquire);
            if !is_locked(w) {
                return w;
            }
            backoff.snooze();
        }
    }

    /// Takes the lock, returning the version it held.
    pub fn lock(&self) -> u64 {
        let mut backoff = Backoff::default();
        loop {
            let w = self.word.load(Ordering::Relaxed);
            if !is_locked(w)
                && self
                    .word
                    .compare_exchange_weak(w, w | LOCK_BIT, Ordering::Acquire, Ordering::Relaxed)
                    .is_ok()
            {
                // Data written after this point must not become visible
                // before the lock bit does.
                fence(Ordering::Release);
                return w;
            }
            backoff.snooze();
        }
    }

    /// Releases the lock, installing `version`.
    pub fn unlock(&self, version: u64) {
        debug_assert!(self.is_locked());
        debug_assert_eq!(version & LOCK_BIT, 0);
        self.word.store(version, Ordering::Release);
    }

    /// Releases the lock without changing the version.
    pub fn unlock_unchanged(&self) {
        debug_assert!(self.is_locked());
        self.word.fetch_and(!LOCK_BIT, Ordering::Release);
    }
}

/// A stored record as the engine keeps it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Record {
    pub key: u64,
    pub payload: u64,
    pub hashes: Hashes,
}

impl Record {
    pub(crate) fn other_bin(&self, bin: usize) -> usize {
        self.hashes.other(bin)
    }
}

#[derive(Debug)]
pub(crate) struct SlotCell {
    pub(crate) cell: VersionedCell,
    claim: AtomicBool,
    key: AtomicU64,
    payload: AtomicU64,
    hashes: AtomicU64,
}

impl Default for SlotCell {
    fn default() -> Self {
        Self {
            cell: VersionedCell::default(),
            claim: AtomicBool::new(false),
            key: AtomicU64::new(EMPTY_KEY),
            payload: AtomicU64::new(0),
            hashes: AtomicU64::new(0),
        }
    }
}

impl SlotCell {
    /// Raw data loads; only meaningful inside a version check or while
    /// holding the lock.
    pub(crate) fn load_record(&self) -> Option<Record> {
        let key = self.key.load(Ordering::Relaxed);
        if key == EMPTY_KEY {
            return None;
        }
        let payload = self.payload.load(Ordering::Relaxed);
        let packed = self.hashes.load(Ordering::Relaxed);
        Some(Record {
            key,
            payload,
            hashes: Hashes::pair(packed as u32, (packed >> 32) as u32),
        })
    }

    pub(crate) fn key(&self) -> u64 {
        self.key.load(Ordering::Relaxed)
    }

    /// Writes the slot contents; the caller holds the lock.
    pub(crate) fn store_record(&self, record: Option<Record>) {
        debug_assert!(self.cell.is_locked());
        match record {
            None => self.key.store(EMPTY_KEY, Ordering::Relaxed),
            Some(r) => {
                let h = r.hashes.as_slice();
                self.payload.store(r.payload, Ordering::Relaxed);
                self.hashes
                    .store(h[0] as u64 | (h[1] as u64) << 32, Ordering::Relaxed);
                self.key.store(r.key, Ordering::Relaxed);
            }
        }
    }

    /// Indivisible test-and-set; true if this call took the claim.
    pub fn claim(&self) -> bool {
        !self.claim.swap(true, Ordering::AcqRel)
    }

    pub fn unclaim(&self) {
        self.claim.store(false, Ordering::Release);
    }

    pub fn is_claimed(&self) -> bool {
        self.claim.load(Ordering::Acquire)
    }
}

#[derive(Debug, Default)]
pub(crate) struct BinCell {
    pub(crate) cell: VersionedCell,
    pub(crate) hit_counter: AtomicU32,
    pub(crate) spawn_count: AtomicU8,
}

impl BinCell {
    /// Bumps the hit-counter and returns the slot it now points at.
    pub(crate) fn next_queue_slot(&self, bin_size: usize) -> usize {
        let c = self
            .hit_counter
            .fetch_add(1, Ordering::AcqRel)
            .wrapping_add(1);
        c as usize % bin_size
    }

    pub(crate) fn note_spawn(&self) {
        let _ = self
            .spawn_count
            .fetch_update(Ordering::Relaxed, Ordering::Relaxed, |c| c.checked_add(1));
    }
}
