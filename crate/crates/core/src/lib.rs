//! Cuckoo hash tables with pluggable kick-out eviction policies and a
//! transactional multi-writer engine.
//!
//! Serial tables live in [`model`]; [`walk`], [`search`] and [`dary`] hold
//! the insertion policies, and [`txn`] the concurrent engine.

pub mod dary;
pub mod error;
pub mod model;
pub mod search;
pub mod txn;
pub mod walk;

pub use dary::DaryTable;
pub use error::{Error, Result};
pub use model::{
    BinMeta, Hashes, KeyEntry, OpMetrics, Policy, Slot, Table, TableConfig, DEFAULT_MAX_SPAWNS,
    DEFAULT_MAX_STEPS, MAX_HASHES,
};
pub use search::{
    apply_chain, plan_bfs, plan_hybrid, plan_sorted, plan_with, ChainMove, ChainSource,
    FrontierOrder, KickoutChain, SlotView,
};
pub use walk::{choose_insert_bin, ghost_insert, promote_duplicate, WalkOutcome, WalkStep};
