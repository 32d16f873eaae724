//! Slot choice and kick-out chains for transactional inserts.

use std::cell::RefCell;
use std::collections::{HashMap, HashSet};

use rand::Rng;

use super::cell::{version_of, Record, EMPTY_KEY};
use super::engine::{AbortCause, ChainPlanner, Transaction, WriteKind};
use super::Abort;
use crate::error::Error;
use crate::model::Hashes;
use crate::search::{plan_with, ChainMove, ChainSource, FrontierOrder, KickoutChain, SlotView};

/// Slot images seen while planning, keyed by global slot index.
type Observed = HashMap<usize, (u64, Option<Record>)>;

enum Attempt {
    Placed,
    /// A claim race or a slot that changed before it could be claimed.
    Lost,
    /// A system kick-out found the table different from its plan.
    Stale,
}

/// The live table as the sorted planner sees it from inside a transaction.
struct PlanView<'t, 'e> {
    tx: &'t Transaction<'e>,
    observed: RefCell<Observed>,
    torn: RefCell<bool>,
}

impl ChainSource for PlanView<'_, '_> {
    fn bin_size(&self) -> usize {
        self.tx.engine.config.bin_size
    }

    fn view_slot(&self, bin: usize, slot: usize) -> SlotView {
        let s = self.tx.engine.slot_index(bin, slot);
        if self.tx.blocked(s) {
            return SlotView::Blocked;
        }
        let mut observed = self.observed.borrow_mut();
        let seen = match observed.get(&s) {
            Some(seen) => *seen,
            None => match self.tx.engine.read_slot(s) {
                Some(seen) => {
                    observed.insert(s, seen);
                    seen
                }
                None => {
                    *self.torn.borrow_mut() = true;
                    return SlotView::Blocked;
                }
            },
        };
        match seen.1 {
            None => SlotView::Free,
            Some(r) => SlotView::Occupied {
                key: r.key,
                hashes: r.hashes,
            },
        }
    }

    fn touch_bin(&mut self, _bin: usize) {}

    fn spawn_count(&self, bin: usize) -> u8 {
        self.tx.engine.bins[bin]
            .spawn_count
            .load(std::sync::atomic::Ordering::Relaxed)
    }

    fn record_spawn(&mut self, bin: usize) {
        self.tx.engine.bins[bin].note_spawn();
    }
}

impl Transaction<'_> {
    /// Slots a chain must not touch: anything this transaction has read or
    /// plans to write, and, with claim flags, slots claimed by others.
    pub(crate) fn blocked(&self, s: usize) -> bool {
        self.pending.contains_key(&s)
            || self.read_slots.contains_key(&s)
            || self.write_slots.contains_key(&s)
            || (self.engine.config.claim_flags
                && !self.claims.contains(&s)
                && self.engine.slots[s].is_claimed())
    }

    /// Usable empty slots of bin `b`: own planned deletions, or table slots
    /// that look empty and are not claimed by others.
    fn free_slots(&self, b: usize) -> Vec<usize> {
        let bs = self.engine.config.bin_size;
        (b * bs..(b + 1) * bs)
            .filter(|&s| match self.pending.get(&s) {
                Some(image) => image.is_none(),
                None => !self.blocked(s) && self.engine.slots[s].key() == EMPTY_KEY,
            })
            .collect()
    }

    fn observe(
        &mut self,
        s: usize,
        observed: &mut Observed,
    ) -> Result<(u64, Option<Record>), Abort> {
        if let Some(seen) = observed.get(&s) {
            return Ok(*seen);
        }
        match self.engine.read_slot(s) {
            Some(seen) => {
                observed.insert(s, seen);
                Ok(seen)
            }
            None => Err(self.fail(AbortCause::TornRead)),
        }
    }

    /// Finds room for `record` and adds the resulting writes to the plan.
    pub(crate) fn place(&mut self, record: Record) -> Result<(), Abort> {
        let cfg = &self.engine.config;
        let (max_lost, max_stale) = (cfg.max_claim_retries, cfg.max_replans);
        let mut system = cfg.system_kickouts;
        let (mut lost, mut stale) = (0, 0);
        loop {
            match self.try_place(record, system)? {
                Attempt::Placed => return Ok(()),
                Attempt::Lost => {
                    lost += 1;
                    if lost > max_lost {
                        return Err(self.fail(AbortCause::BinExhausted));
                    }
                }
                Attempt::Stale => {
                    stale += 1;
                    if stale > max_stale {
                        system = false;
                    }
                }
            }
        }
    }

    fn try_place(&mut self, record: Record, system: bool) -> Result<Attempt, Abort> {
        let cfg = self.engine.config.clone();
        let bs = cfg.bin_size;
        let (b0, b1) = (record.hashes.get(0), record.hashes.get(1));
        let (f0, f1) = (self.free_slots(b0), self.free_slots(b1));
        let mut observed = Observed::new();

        if !f0.is_empty() || !f1.is_empty() {
            let (bin, free) = if f1.len() > f0.len() || (f1.len() == f0.len() && b1 < b0) {
                (b1, f1)
            } else {
                (b0, f0)
            };
            let mut root = free[0];
            if cfg.queue_kicking {
                if let Some(q) = self.queue_root(bin) {
                    root = q;
                }
            }
            let occupied = match self.pending.get(&root) {
                Some(_) => false,
                None => self.observe(root, &mut observed)?.1.is_some(),
            };
            if !occupied {
                let chain = KickoutChain::trivial(bin, root - bin * bs, false);
                return self.adopt(record, &chain, &mut observed);
            }
            return self.walk_and_adopt(record, bin, root, &mut observed, system);
        }

        if cfg.planner == ChainPlanner::Sorted {
            let (chain, observed) = self.plan_sorted(&record.hashes)?;
            let mut observed = observed;
            return match chain {
                Some(chain) if chain.is_empty() => self.adopt(record, &chain, &mut observed),
                Some(chain) if system => self.run_system(record, &chain, &mut observed),
                Some(chain) => self.adopt(record, &chain, &mut observed),
                None => Ok(Attempt::Lost),
            };
        }

        let first = if self.worker.rng.gen_bool(0.5) {
            b0
        } else {
            b1
        };
        for bin in [first, record.hashes.other(first)] {
            let root = if cfg.queue_kicking {
                self.queue_root(bin)
            } else {
                self.random_unblocked(bin, &HashSet::new())
            };
            if let Some(root) = root {
                return self.walk_and_adopt(record, bin, root, &mut observed, system);
            }
        }
        Err(self.fail(AbortCause::BinExhausted))
    }

    /// The hit-counter's slot in `bin`, skipping blocked slots.
    fn queue_root(&self, bin: usize) -> Option<usize> {
        let bs = self.engine.config.bin_size;
        (0..bs)
            .map(|_| bin * bs + self.engine.bins[bin].next_queue_slot(bs))
            .find(|&s| !self.blocked(s) || matches!(self.pending.get(&s), Some(None)))
    }

    fn random_unblocked(&mut self, bin: usize, used: &HashSet<usize>) -> Option<usize> {
        let bs = self.engine.config.bin_size;
        let open: Vec<usize> = (bin * bs..(bin + 1) * bs)
            .filter(|s| !self.blocked(*s) && !used.contains(s))
            .collect();
        match open.len() {
            0 => None,
            n => Some(open[self.worker.rng.gen_range(0..n)]),
        }
    }

    fn walk_and_adopt(
        &mut self,
        record: Record,
        bin: usize,
        root: usize,
        observed: &mut Observed,
        system: bool,
    ) -> Result<Attempt, Abort> {
        let chain = self.plan_walk(bin, root, observed)?;
        if system && !chain.is_empty() {
            self.run_system(record, &chain, observed)
        } else {
            self.adopt(record, &chain, observed)
        }
    }

    /// A random or queue-driven walk from an occupied root. Never moves a
    /// record into a slot the chain already uses.
    fn plan_walk(
        &mut self,
        root_bin: usize,
        root: usize,
        observed: &mut Observed,
    ) -> Result<KickoutChain, Abort> {
        let cfg = self.engine.config.clone();
        let bs = cfg.bin_size;
        let mut used = HashSet::from([root]);
        let (mut cur_bin, mut cur) = (root_bin, root);
        let mut moves = Vec::new();
        loop {
            let Some(victim) = self.observe(cur, observed)?.1 else {
                return Ok(KickoutChain {
                    root: (root_bin, root - root_bin * bs),
                    terminal: (cur_bin, cur - cur_bin * bs),
                    moves,
                    terminal_duplicate: false,
                });
            };
            if moves.len() >= cfg.max_steps {
                return Err(self.fail(AbortCause::WalkFailed));
            }
            let next_bin = victim.other_bin(cur_bin);
            let dest = if cfg.queue_kicking {
                (0..bs)
                    .map(|_| next_bin * bs + self.engine.bins[next_bin].next_queue_slot(bs))
                    .find(|s| !self.blocked(*s) && !used.contains(s))
            } else {
                let mut free = None;
                for s in next_bin * bs..(next_bin + 1) * bs {
                    if !self.blocked(s)
                        && !used.contains(&s)
                        && self.observe(s, observed)?.1.is_none()
                    {
                        free = Some(s);
                        break;
                    }
                }
                free.or_else(|| self.random_unblocked(next_bin, &used))
            };
            let Some(dest) = dest else {
                return Err(self.fail(AbortCause::BinExhausted));
            };
            moves.push(ChainMove {
                key: victim.key,
                from_bin: cur_bin,
                from_slot: cur - cur_bin * bs,
                to_bin: next_bin,
                to_slot: dest - next_bin * bs,
            });
            used.insert(dest);
            (cur_bin, cur) = (next_bin, dest);
        }
    }

    /// Spawn-count ordered search over the live table. `None` means every
    /// route was blocked by other transactions.
    fn plan_sorted(&mut self, hashes: &Hashes) -> Result<(Option<KickoutChain>, Observed), Abort> {
        let (max_spawns, order) = (self.engine.config.max_spawns, FrontierOrder::SpawnCount);
        let mut view = PlanView {
            tx: self,
            observed: RefCell::new(Observed::new()),
            torn: RefCell::new(false),
        };
        let (res, _) = plan_with(&mut view, hashes, order, max_spawns, 1);
        let (observed, torn) = (view.observed.into_inner(), view.torn.into_inner());
        match res {
            Ok(chain) => Ok((Some(chain), observed)),
            Err(Error::SearchExhausted { spawns }) if spawns >= max_spawns => {
                Err(self.fail(AbortCause::WalkFailed))
            }
            Err(_) if torn => Err(self.fail(AbortCause::TornRead)),
            Err(_) => Ok((None, observed)),
        }
    }

    fn chain_slots(&self, chain: &KickoutChain) -> Vec<usize> {
        let (rb, rs) = chain.root;
        std::iter::once(self.engine.slot_index(rb, rs))
            .chain(
                chain
                    .moves
                    .iter()
                    .map(|m| self.engine.slot_index(m.to_bin, m.to_slot)),
            )
            .collect()
    }

    /// With claim flags, claims every slot in `slots` not already held and
    /// checks each still has its observed version. Returns the slots newly
    /// claimed, or `None` after undoing a failed attempt.
    fn claim_all(&mut self, slots: &[usize], observed: &Observed) -> Option<Vec<usize>> {
        if !self.engine.config.claim_flags {
            return Some(Vec::new());
        }
        let mut taken = Vec::new();
        let mut ok = true;
        for &s in slots {
            if self.claims.contains(&s) || self.pending.contains_key(&s) {
                continue;
            }
            if !self.engine.slots[s].claim() {
                ok = false;
                break;
            }
            taken.push(s);
            let w = self.engine.slots[s]
                .cell
                .raw(std::sync::atomic::Ordering::Acquire);
            if super::cell::is_locked(w) || Some(version_of(w)) != observed.get(&s).map(|o| o.0) {
                ok = false;
                break;
            }
        }
        if !ok {
            for s in taken {
                self.engine.slots[s].unclaim();
            }
            return None;
        }
        self.claims.extend(taken.iter().copied());
        Some(taken)
    }

    /// Commit-time chain: every moved record and the new one become planned
    /// writes, validated with the rest of the write set.
    fn adopt(
        &mut self,
        record: Record,
        chain: &KickoutChain,
        observed: &mut Observed,
    ) -> Result<Attempt, Abort> {
        let slots = self.chain_slots(chain);
        for &s in &slots {
            if !self.pending.contains_key(&s) {
                self.observe(s, observed)?;
            }
        }
        // The plan must still describe what was observed.
        for m in &chain.moves {
            let from = self.engine.slot_index(m.from_bin, m.from_slot);
            if observed[&from].1.map(|r| r.key) != Some(m.key) {
                return Ok(Attempt::Lost);
            }
        }
        let terminal = *slots.last().expect("chain has a root");
        if !self.pending.contains_key(&terminal) && observed[&terminal].1.is_some() {
            return Ok(Attempt::Lost);
        }
        if self.claim_all(&slots, observed).is_none() {
            return Ok(Attempt::Lost);
        }
        for m in chain.moves.iter().rev() {
            let from = self.engine.slot_index(m.from_bin, m.from_slot);
            let to = self.engine.slot_index(m.to_bin, m.to_slot);
            let moved = observed[&from].1;
            self.add_write_slot(to, observed[&to].0, WriteKind::Chain);
            self.pending.insert(to, moved);
            self.add_write_bin(m.to_bin);
        }
        let root = slots[0];
        if !self.write_slots.contains_key(&root) {
            self.add_write_slot(root, observed[&root].0, WriteKind::Insert);
        }
        self.pending.insert(root, Some(record));
        self.add_write_bin(chain.root.0);
        Ok(Attempt::Placed)
    }

    /// Runs a chain's moves now, terminal first, each as its own small
    /// transaction, then plans the insert into the emptied root.
    fn run_system(
        &mut self,
        record: Record,
        chain: &KickoutChain,
        observed: &mut Observed,
    ) -> Result<Attempt, Abort> {
        let engine = self.engine;
        let slots = self.chain_slots(chain);
        for &s in &slots {
            self.observe(s, observed)?;
        }
        let Some(taken) = self.claim_all(&slots, observed) else {
            return Ok(Attempt::Lost);
        };
        let mut versions: HashMap<usize, u64> = slots.iter().map(|s| (*s, observed[s].0)).collect();
        let mut ok = true;
        for m in chain.moves.iter().rev() {
            let from = engine.slot_index(m.from_bin, m.from_slot);
            let to = engine.slot_index(m.to_bin, m.to_slot);
            let bin = &engine.bins[m.to_bin].cell;
            let (lo, hi) = (from.min(to), from.max(to));
            let wb = bin.lock();
            let wl = engine.slots[lo].cell.lock();
            let wh = engine.slots[hi].cell.lock();
            let (wf, wt) = if from == lo { (wl, wh) } else { (wh, wl) };
            let valid = version_of(wf) == versions[&from]
                && version_of(wt) == versions[&to]
                && engine.slots[from].key() == m.key
                && engine.slots[to].key() == EMPTY_KEY;
            if !valid {
                engine.slots[hi].cell.unlock_unchanged();
                engine.slots[lo].cell.unlock_unchanged();
                bin.unlock_unchanged();
                ok = false;
                break;
            }
            let id = version_of(wb).max(version_of(wf)).max(version_of(wt)) + 1;
            engine.slots[to].store_record(engine.slots[from].load_record());
            engine.slots[from].store_record(None);
            engine.slots[hi].cell.unlock(id);
            engine.slots[lo].cell.unlock(id);
            bin.unlock(id);
            versions.insert(from, id);
            versions.insert(to, id);
        }
        let root = slots[0];
        for &s in &taken {
            if s != root || !ok {
                self.claims.remove(&s);
                engine.slots[s].unclaim();
            }
        }
        if !ok {
            return Ok(Attempt::Stale);
        }
        observed.insert(root, (versions[&root], None));
        let (rb, rs) = chain.root;
        self.adopt(record, &KickoutChain::trivial(rb, rs, false), observed)
    }
}
