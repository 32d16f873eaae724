//! Transaction-abort experiments.

use std::collections::BTreeMap;

use anyhow::{ensure, Result};
use cuckoo_kick::txn::{
    run_workload, AbortStats, CommitRecord, EngineConfig, TxnTable, WorkloadSpec,
};

use crate::config::ExperimentConfig;
use crate::output::MetricsRow;
use crate::sweep::derive_seed;

/// Final table implied by applying committed write sets in transaction-ID
/// order, ties in commit order.
pub fn replay(log: &[CommitRecord]) -> BTreeMap<u64, u64> {
    let mut order: Vec<&CommitRecord> = log.iter().collect();
    order.sort_by_key(|c| (c.txn_id, c.commit_seq));
    let mut state = BTreeMap::new();
    for c in order {
        for &(k, v) in &c.writes {
            match v {
                Some(p) => state.insert(k, p),
                None => state.remove(&k),
            };
        }
    }
    state
}

pub fn workload_spec(cfg: &ExperimentConfig, trial: usize) -> WorkloadSpec {
    WorkloadSpec {
        ratios: cfg.txn.ratios,
        ops_per_txn: cfg.txn.ops_per_txn,
        threads: cfg.txn.threads,
        target_density: cfg.max_density(),
        max_txns: None,
        max_attempts_per_txn: 1000,
        seed: derive_seed(cfg.seed, trial as u64),
        yield_between_ops: cfg.txn.yield_between_ops,
    }
}

/// Runs one workload on a fresh engine and checks the result against a
/// serial replay of its commits.
pub fn run_trial(engine: EngineConfig, spec: &WorkloadSpec) -> Result<AbortStats> {
    let table = TxnTable::new(engine.with_commit_log(true))?;
    let stats = run_workload(&table, spec);
    ensure!(
        table.audit() == (0, 0),
        "locks or claims left held after the run"
    );
    table.check_invariants()?;
    let log = table.take_commit_log();
    ensure!(
        table.snapshot() == replay(&log),
        "final table differs from the serial replay of {} commits",
        log.len()
    );
    Ok(stats)
}

/// Every trial of one preset.
pub fn preset_trials(cfg: &ExperimentConfig, preset: u8) -> Result<Vec<AbortStats>> {
    (0..cfg.trials)
        .map(|t| {
            let engine = EngineConfig::preset(cfg.num_bins, cfg.bin_size, preset)?;
            run_trial(engine, &workload_spec(cfg, t))
        })
        .collect()
}

/// Aborted attempts below `density`, summed over trials.
pub fn aborts_below(trials: &[AbortStats], density: f64) -> u64 {
    trials.iter().map(|s| s.aborts_before(density) as u64).sum()
}

/// Cumulative abort counts per preset and density, summed over trials.
pub fn run_txn_aborts(cfg: &ExperimentConfig) -> Result<Vec<MetricsRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &preset in &cfg.txn.presets {
        let trials = preset_trials(cfg, preset)?;
        rows.extend(cfg.densities.iter().map(|&d| MetricsRow {
            experiment: cfg.experiment.name().into(),
            policy: format!("preset-{preset}"),
            ghosts: false,
            n: cfg.num_bins,
            b: cfg.bin_size,
            h: 2,
            density: d,
            bins_viewed_mean: None,
            chain_len_mean: None,
            spawns_mean: None,
            aborts: Some(aborts_below(&trials, d)),
            trials: trials.len(),
            seed: cfg.seed,
        }));
    }
    Ok(rows)
}
