//! Transactional multi-writer cuckoo table.
//!
//! Transactions follow a three-stage optimistic scheme: plan against the
//! live table while recording the versions of every cell read or to be
//! written, lock the write set in a global order and re-check every
//! recorded version, then apply and stamp the written cells with the
//! transaction ID. Local retries, queue-kicking, system-transaction
//! kick-outs and claim flags are switched on through [`EngineConfig`].
//!
//! The engine supports two hash functions per key.

mod cell;
mod chain;
mod engine;
mod workload;

pub use cell::{Record, VersionedCell};
pub use engine::{
    Abort, AbortCause, ChainPlanner, CommitRecord, EngineConfig, Transaction, TxnStatus, TxnTable,
    Worker,
};
pub use workload::{run_workload, AbortEvent, AbortStats, WorkloadSpec};
