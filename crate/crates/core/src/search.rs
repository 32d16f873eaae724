//! Search-based chain planning: breadth-first search, sorted search ordered
//! by spawn count, and the depth-then-spawn-count hybrid.
//!
//! A search never moves anything. It returns a [`KickoutChain`] that
//! [`apply_chain`] executes last-move-first, so every move lands in a slot
//! that was just vacated. The planners run over any [`ChainSource`], which
//! is how the transactional engine reuses them on its own storage.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use crate::error::{Error, Result};
use crate::model::{Hashes, KeyEntry, OpMetrics, Policy, Table, MAX_HASHES};
use crate::walk::{measured, WalkOutcome};

/// What a planner sees when it looks at a slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlotView {
    Free,
    /// A ghost copy that can be dropped; ends a chain like a free slot.
    Duplicate,
    Occupied {
        key: u64,
        hashes: Hashes,
    },
    /// Claimed or otherwise off limits: neither a victim nor a terminal.
    Blocked,
}

/// Storage a chain can be planned against.
pub trait ChainSource {
    fn bin_size(&self) -> usize;
    fn view_slot(&self, bin: usize, slot: usize) -> SlotView;
    /// Accounts one bin fetch.
    fn touch_bin(&mut self, bin: usize);
    fn spawn_count(&self, bin: usize) -> u8;
    fn record_spawn(&mut self, bin: usize);
}

impl ChainSource for Table {
    fn bin_size(&self) -> usize {
        Table::bin_size(self)
    }

    fn view_slot(&self, bin: usize, slot: usize) -> SlotView {
        let s = self.slot(bin, slot);
        match s.entry() {
            None => SlotView::Free,
            Some(_) if s.is_duplicate() => SlotView::Duplicate,
            Some(e) => SlotView::Occupied {
                key: e.key,
                hashes: e.hashes,
            },
        }
    }

    fn touch_bin(&mut self, _bin: usize) {
        self.count_fetch();
    }

    fn spawn_count(&self, bin: usize) -> u8 {
        self.meta(bin).spawn_count
    }

    fn record_spawn(&mut self, bin: usize) {
        self.note_spawn(bin);
    }
}

/// One record moved by a chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChainMove {
    pub key: u64,
    pub from_bin: usize,
    pub from_slot: usize,
    pub to_bin: usize,
    pub to_slot: usize,
}

/// A planned kick-out chain.
///
/// The key being inserted goes to `root`. `moves[0]` moves the record
/// currently at `root`, each later move vacates the destination of the
/// previous one, and the last move lands on `terminal`, which was free (or a
/// duplicate) when the chain was planned. An empty chain has
/// `root == terminal`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KickoutChain {
    pub root: (usize, usize),
    pub moves: Vec<ChainMove>,
    pub terminal: (usize, usize),
    pub terminal_duplicate: bool,
}

impl KickoutChain {
    pub fn trivial(bin: usize, slot: usize, duplicate: bool) -> Self {
        Self {
            root: (bin, slot),
            moves: Vec::new(),
            terminal: (bin, slot),
            terminal_duplicate: duplicate,
        }
    }

    /// Number of kick-outs.
    pub fn len(&self) -> usize {
        self.moves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrontierOrder {
    /// Breadth-first: oldest candidate first.
    Fifo,
    /// Smallest spawn count of the candidate's bin first.
    SpawnCount,
    /// Shallowest first, then smallest spawn count.
    DepthThenSpawnCount,
}

impl FrontierOrder {
    pub fn for_policy(policy: Policy) -> Option<Self> {
        match policy {
            Policy::Bfs => Some(FrontierOrder::Fifo),
            Policy::SortedSearch => Some(FrontierOrder::SpawnCount),
            Policy::Hybrid => Some(FrontierOrder::DepthThenSpawnCount),
            _ => None,
        }
    }
}

/// A record viewed by a search but not necessarily spawned yet.
#[derive(Clone, Copy, Debug)]
pub struct Candidate {
    pub bin: usize,
    pub slot: usize,
    pub key: u64,
    pub hashes: Hashes,
    pub depth: u32,
    pub parent: Option<usize>,
    /// Spawn count of `bin` when the candidate was pushed.
    pub spawn_count: u8,
}

/// Candidates of one search. Ties always resolve by insertion order.
pub struct Frontier {
    order: FrontierOrder,
    arena: Vec<Candidate>,
    queue: VecDeque<usize>,
    heap: BinaryHeap<Reverse<(u64, usize)>>,
    heap_only: bool,
}

impl Frontier {
    pub fn new(order: FrontierOrder) -> Self {
        Self {
            order,
            arena: Vec::new(),
            queue: VecDeque::new(),
            heap: BinaryHeap::new(),
            heap_only: false,
        }
    }

    /// FIFO order realised through the priority heap with a constant key;
    /// used to cross-check the heap path against the queue path.
    #[cfg(test)]
    fn fifo_through_heap() -> Self {
        Self {
            heap_only: true,
            ..Self::new(FrontierOrder::Fifo)
        }
    }

    fn sort_key(&self, c: &Candidate) -> u64 {
        match self.order {
            FrontierOrder::Fifo => 0,
            FrontierOrder::SpawnCount => c.spawn_count as u64,
            FrontierOrder::DepthThenSpawnCount => ((c.depth as u64) << 8) | c.spawn_count as u64,
        }
    }

    pub fn push(&mut self, c: Candidate) -> usize {
        let idx = self.arena.len();
        if self.order == FrontierOrder::Fifo && !self.heap_only {
            self.queue.push_back(idx);
        } else {
            self.heap.push(Reverse((self.sort_key(&c), idx)));
        }
        self.arena.push(c);
        idx
    }

    pub fn pop(&mut self) -> Option<usize> {
        if self.order == FrontierOrder::Fifo && !self.heap_only {
            self.queue.pop_front()
        } else {
            self.heap.pop().map(|Reverse((_, idx))| idx)
        }
    }

    pub fn get(&self, idx: usize) -> &Candidate {
        &self.arena[idx]
    }

    /// Candidates still waiting to be spawned.
    pub fn len(&self) -> usize {
        self.queue.len() + self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every candidate ever pushed.
    pub fn viewed(&self) -> usize {
        self.arena.len()
    }
}

/// Bins fetched by one search, kept in a small linear-probing table whose
/// hash is the bin index itself.
pub struct VisitedBins {
    cells: Vec<u32>,
    len: usize,
}

impl VisitedBins {
    const EMPTY: u32 = u32::MAX;

    pub fn new() -> Self {
        Self {
            cells: vec![Self::EMPTY; 64],
            len: 0,
        }
    }

    fn probe(&self, bin: u32) -> usize {
        let mask = self.cells.len() - 1;
        let mut i = bin as usize & mask;
        while self.cells[i] != Self::EMPTY && self.cells[i] != bin {
            i = (i + 1) & mask;
        }
        i
    }

    pub fn contains(&self, bin: usize) -> bool {
        self.cells[self.probe(bin as u32)] == bin as u32
    }

    /// Returns true if `bin` was not in the set.
    pub fn insert(&mut self, bin: usize) -> bool {
        let i = self.probe(bin as u32);
        if self.cells[i] == bin as u32 {
            return false;
        }
        self.cells[i] = bin as u32;
        self.len += 1;
        if self.len * 2 > self.cells.len() {
            let grown = vec![Self::EMPTY; self.cells.len() * 2];
            let old = std::mem::replace(&mut self.cells, grown);
            for b in old.into_iter().filter(|&b| b != Self::EMPTY) {
                let j = self.probe(b);
                self.cells[j] = b;
            }
        }
        true
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

impl Default for VisitedBins {
    fn default() -> Self {
        Self::new()
    }
}

/// Outcome of spawning one candidate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SpawnResult {
    /// A child bin had a free or duplicate slot.
    Terminal(KickoutChain),
    /// Every child bin was full; this many children were queued.
    Expanded { children: usize },
    /// All of the candidate's other bins were already fetched by this
    /// search, so spawning it would view nothing new.
    Skipped,
}

/// A search in progress.
pub struct ChainSearch<'s, S: ChainSource + ?Sized> {
    source: &'s mut S,
    frontier: Frontier,
    visited: VisitedBins,
    spawns: usize,
    bins_viewed: u64,
}

impl<'s, S: ChainSource + ?Sized> ChainSearch<'s, S> {
    /// Seeds a search with the records of the key's bins. Those bins must
    /// already have been fetched (and found full) by the caller.
    pub fn new(source: &'s mut S, key_hashes: &Hashes, order: FrontierOrder) -> Self {
        Self::with_frontier(source, key_hashes, Frontier::new(order))
    }

    fn with_frontier(source: &'s mut S, key_hashes: &Hashes, mut frontier: Frontier) -> Self {
        let mut visited = VisitedBins::new();
        for b in key_hashes.iter() {
            visited.insert(b);
        }
        for b in key_hashes.iter() {
            push_children(source, &mut frontier, b, 0, None);
        }
        Self {
            source,
            frontier,
            visited,
            spawns: 0,
            bins_viewed: 0,
        }
    }

    pub fn frontier(&self) -> &Frontier {
        &self.frontier
    }

    pub fn spawns(&self) -> usize {
        self.spawns
    }

    fn fresh_children(&self, idx: usize) -> ([usize; MAX_HASHES], usize) {
        let c = self.frontier.get(idx);
        let mut out = [0; MAX_HASHES];
        let mut n = 0;
        for b in c.hashes.iter() {
            if b != c.bin && !self.visited.contains(b) {
                out[n] = b;
                n += 1;
            }
        }
        (out, n)
    }

    /// Looks at the children of candidate `idx`: fetches its other bins,
    /// ends the search if one of them has room, and queues their records
    /// otherwise. Bumps the spawn count of the candidate's bin.
    pub fn spawn(&mut self, idx: usize) -> SpawnResult {
        let (children, n) = self.fresh_children(idx);
        if n == 0 {
            return SpawnResult::Skipped;
        }
        let cand = *self.frontier.get(idx);
        self.source.record_spawn(cand.bin);
        self.spawns += 1;
        for &b in &children[..n] {
            self.visited.insert(b);
            self.source.touch_bin(b);
            self.bins_viewed += 1;
        }
        for want_free in [true, false] {
            for &b in &children[..n] {
                for s in 0..self.source.bin_size() {
                    let hit = match self.source.view_slot(b, s) {
                        SlotView::Free => want_free,
                        SlotView::Duplicate => !want_free,
                        _ => false,
                    };
                    if hit {
                        return SpawnResult::Terminal(self.chain_to(idx, b, s, !want_free));
                    }
                }
            }
        }
        let before = self.frontier.viewed();
        for &b in &children[..n] {
            push_children(
                self.source,
                &mut self.frontier,
                b,
                cand.depth + 1,
                Some(idx),
            );
        }
        SpawnResult::Expanded {
            children: self.frontier.viewed() - before,
        }
    }

    fn chain_to(&self, idx: usize, bin: usize, slot: usize, duplicate: bool) -> KickoutChain {
        let mut path = Vec::new();
        let mut cur = Some(idx);
        while let Some(i) = cur {
            path.push(*self.frontier.get(i));
            cur = self.frontier.get(i).parent;
        }
        path.reverse();
        let moves = path
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let (to_bin, to_slot) = path.get(i + 1).map_or((bin, slot), |n| (n.bin, n.slot));
                ChainMove {
                    key: c.key,
                    from_bin: c.bin,
                    from_slot: c.slot,
                    to_bin,
                    to_slot,
                }
            })
            .collect();
        KickoutChain {
            root: (path[0].bin, path[0].slot),
            moves,
            terminal: (bin, slot),
            terminal_duplicate: duplicate,
        }
    }

    /// Spawns candidates `batch` at a time until a terminal is found.
    pub fn run(mut self, max_spawns: usize, batch: usize) -> (Result<KickoutChain>, OpMetrics) {
        let mut round = Vec::with_capacity(batch.max(1));
        let result = 'search: loop {
            round.clear();
            while round.len() < batch.max(1) {
                match self.frontier.pop() {
                    Some(idx) => round.push(idx),
                    None => break,
                }
            }
            if round.is_empty() {
                break 'search Err(Error::SearchExhausted {
                    spawns: self.spawns,
                });
            }
            for &idx in &round {
                if self.spawns >= max_spawns && self.fresh_children(idx).1 > 0 {
                    break 'search Err(Error::SearchExhausted {
                        spawns: self.spawns,
                    });
                }
                if let SpawnResult::Terminal(chain) = self.spawn(idx) {
                    break 'search Ok(chain);
                }
            }
        };
        let metrics = OpMetrics {
            bins_viewed: self.bins_viewed,
            chain_length: result.as_ref().map_or(0, |c| c.len() as u64),
            spawns: self.spawns as u64,
        };
        (result, metrics)
    }
}

fn push_children<S: ChainSource + ?Sized>(
    source: &S,
    frontier: &mut Frontier,
    bin: usize,
    depth: u32,
    parent: Option<usize>,
) {
    let spawn_count = source.spawn_count(bin);
    for s in 0..source.bin_size() {
        if let SlotView::Occupied { key, hashes } = source.view_slot(bin, s) {
            frontier.push(Candidate {
                bin,
                slot: s,
                key,
                hashes,
                depth,
                parent,
                spawn_count,
            });
        }
    }
}

/// Fetches the key's bins and returns an empty chain if one of them has
/// room. Single-slot bins are probed in hash order and the probe stops at
/// the first free bin; wider bins are all fetched and the emptiest wins.
fn probe_key_bins<S: ChainSource + ?Sized>(
    source: &mut S,
    hashes: &Hashes,
) -> Option<KickoutChain> {
    let bin_size = source.bin_size();
    let free_slots = |source: &S, b: usize| {
        (0..bin_size)
            .filter(|&s| source.view_slot(b, s) == SlotView::Free)
            .collect::<Vec<_>>()
    };
    if bin_size == 1 {
        for b in hashes.iter() {
            source.touch_bin(b);
            if source.view_slot(b, 0) == SlotView::Free {
                return Some(KickoutChain::trivial(b, 0, false));
            }
        }
    } else {
        for b in hashes.iter() {
            source.touch_bin(b);
        }
        let best = hashes
            .iter()
            .map(|b| (b, free_slots(source, b)))
            .filter(|(_, f)| !f.is_empty())
            .min_by_key(|(b, f)| (Reverse(f.len()), *b));
        if let Some((b, f)) = best {
            return Some(KickoutChain::trivial(b, f[0], false));
        }
    }
    hashes.iter().find_map(|b| {
        (0..bin_size)
            .find(|&s| source.view_slot(b, s) == SlotView::Duplicate)
            .map(|s| KickoutChain::trivial(b, s, true))
    })
}

/// Plans a chain for a key on any chain source, including the initial
/// fetch of the key's own bins.
pub fn plan_with<S: ChainSource + ?Sized>(
    source: &mut S,
    hashes: &Hashes,
    order: FrontierOrder,
    max_spawns: usize,
    batch: usize,
) -> (Result<KickoutChain>, OpMetrics) {
    let probe_views = match source.bin_size() {
        1 => None,
        _ => Some(hashes.len() as u64),
    };
    let mut counter = CountingSource {
        inner: source,
        touched: 0,
    };
    if let Some(chain) = probe_key_bins(&mut counter, hashes) {
        let metrics = OpMetrics {
            bins_viewed: counter.touched,
            ..OpMetrics::default()
        };
        return (Ok(chain), metrics);
    }
    debug_assert!(probe_views.is_none_or(|v| v == counter.touched));
    let initial = counter.touched;
    let (res, mut metrics) = ChainSearch::new(counter.inner, hashes, order).run(max_spawns, batch);
    metrics.bins_viewed += initial;
    (res, metrics)
}

struct CountingSource<'a, S: ?Sized> {
    inner: &'a mut S,
    touched: u64,
}

impl<S: ChainSource + ?Sized> ChainSource for CountingSource<'_, S> {
    fn bin_size(&self) -> usize {
        self.inner.bin_size()
    }
    fn view_slot(&self, bin: usize, slot: usize) -> SlotView {
        self.inner.view_slot(bin, slot)
    }
    fn touch_bin(&mut self, bin: usize) {
        self.touched += 1;
        self.inner.touch_bin(bin);
    }
    fn spawn_count(&self, bin: usize) -> u8 {
        self.inner.spawn_count(bin)
    }
    fn record_spawn(&mut self, bin: usize) {
        self.inner.record_spawn(bin);
    }
}

/// Breadth-first search: returns a shortest chain.
pub fn plan_bfs(
    table: &mut Table,
    key: &KeyEntry,
    max_spawns: usize,
) -> (Result<KickoutChain>, OpMetrics) {
    plan_with(table, &key.hashes, FrontierOrder::Fifo, max_spawns, 1)
}

/// Sorted search: spawns the candidate whose bin has the smallest spawn
/// count, `batch` candidates per round.
pub fn plan_sorted(
    table: &mut Table,
    key: &KeyEntry,
    max_spawns: usize,
    batch: usize,
) -> (Result<KickoutChain>, OpMetrics) {
    plan_with(
        table,
        &key.hashes,
        FrontierOrder::SpawnCount,
        max_spawns,
        batch,
    )
}

/// Hybrid search: breadth-first layers, each layer in spawn-count order.
pub fn plan_hybrid(
    table: &mut Table,
    key: &KeyEntry,
    max_spawns: usize,
) -> (Result<KickoutChain>, OpMetrics) {
    plan_with(
        table,
        &key.hashes,
        FrontierOrder::DepthThenSpawnCount,
        max_spawns,
        1,
    )
}

/// Executes a chain terminal-first, leaving its root slot empty.
pub fn apply_chain(table: &mut Table, chain: &KickoutChain) -> Result<()> {
    let (tb, ts) = chain.terminal;
    let terminal = table.slot(tb, ts);
    let terminal_ok = if chain.terminal_duplicate {
        terminal.is_duplicate()
    } else {
        terminal.is_empty()
    };
    if !terminal_ok {
        return Err(Error::StaleChain(format!(
            "terminal slot ({tb}, {ts}) changed"
        )));
    }
    for m in &chain.moves {
        let slot = table.slot(m.from_bin, m.from_slot);
        let legal = slot.entry().is_some_and(|e| e.hashes.contains(m.to_bin));
        if !slot.holds(m.key) || slot.is_duplicate() || !legal {
            return Err(Error::StaleChain(format!(
                "slot ({}, {}) no longer holds key {}",
                m.from_bin, m.from_slot, m.key
            )));
        }
    }
    if chain.terminal_duplicate {
        let dup = *table.slot(tb, ts).entry().expect("checked above");
        crate::walk::promote_duplicate(table, &dup, dup.hashes.other(tb))?;
    }
    for m in chain.moves.iter().rev() {
        let entry = table.take(m.from_bin, m.from_slot).expect("checked above");
        table.put(m.to_bin, m.to_slot, entry);
    }
    Ok(())
}

fn record_chain(table: &mut Table, key: KeyEntry, chain: &KickoutChain, out: &mut WalkOutcome) {
    apply_chain(table, chain).expect("a freshly planned chain applies");
    let (rb, rs) = chain.root;
    table.put(rb, rs, key);
    for m in &chain.moves {
        out.push(m.from_bin, m.from_slot, Some(m.key));
    }
    out.push(chain.terminal.0, chain.terminal.1, None);
    out.metrics.chain_length = chain.len() as u64;
    out.success = true;
}

/// Inserts with the table's search policy.
pub(crate) fn insert_searched(table: &mut Table, key: KeyEntry) -> WalkOutcome {
    let order = FrontierOrder::for_policy(table.config().policy).expect("search policy");
    let max_spawns = table.config().max_spawns;
    let batch = table.config().search_batch;
    measured(table, |table, out| {
        let (res, metrics) = plan_with(table, &key.hashes, order, max_spawns, batch);
        out.metrics.spawns = metrics.spawns;
        match res {
            Ok(chain) => record_chain(table, key, &chain, out),
            Err(_) => out.homeless = Some(key),
        }
    })
}

/// Search insertion whose key bins were already fetched and are full.
pub(crate) fn insert_from_full(
    table: &mut Table,
    key: KeyEntry,
    order: FrontierOrder,
    out: &mut WalkOutcome,
) {
    let max_spawns = table.config().max_spawns;
    let batch = table.config().search_batch;
    let (res, metrics) = ChainSearch::new(table, &key.hashes, order).run(max_spawns, batch);
    out.metrics.spawns = metrics.spawns;
    match res {
        Ok(chain) => record_chain(table, key, &chain, out),
        Err(_) => out.homeless = Some(key),
    }
}
