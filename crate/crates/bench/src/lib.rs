//! Experiment harness for `cuckoo-kick`: density sweeps over serial and
//! d-ary tables, kick-out chain lengths, transaction aborts and the
//! bin-touch simulation. Results are CSV.

pub mod config;
pub mod output;
pub mod sweep;
pub mod touch;
pub mod txn;

pub use config::{parse_ratios, Experiment, ExperimentConfig, TouchSettings, TxnSettings};
pub use output::{emit_csv, write_csv, MetricsRow};
pub use sweep::{
    fill, run_chain_length, run_dary_fill, run_fill_sweep, run_serial_fill, Sample, SweepReport,
    Trace,
};
pub use touch::{analytic_bound, run_touch_sim, TouchConfig, TouchResult};
pub use txn::{replay, run_txn_aborts};
