//! Density sweeps over serial tables.

use anyhow::Result;
use cuckoo_kick::{KeyEntry, Policy, Table, TableConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{Experiment, ExperimentConfig, BAND};
use crate::output::MetricsRow;

/// Cost of one insertion and the load just before it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub density: f64,
    pub bins_viewed: u64,
    pub chain_length: u64,
    pub spawns: u64,
}

/// One fill from empty.
#[derive(Debug)]
pub struct Trace {
    pub samples: Vec<Sample>,
    /// Load at which an insertion hit its cap, ending the fill.
    pub failed_at: Option<f64>,
    pub table: Table,
}

impl Trace {
    /// Kick-outs summed over the whole fill.
    pub fn total_kicks(&self) -> u64 {
        self.samples.iter().map(|s| s.chain_length).sum()
    }

    pub fn in_band(&self, upper: f64) -> impl Iterator<Item = &Sample> + '_ {
        self.samples
            .iter()
            .filter(move |s| s.density >= upper - BAND && s.density < upper)
    }
}

/// Independent seed for stream `stream` of a run seeded with `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.gen()
}

/// Fills `config`'s table with random keys until its load reaches `to`, or
/// until an insertion fails.
pub fn fill(config: TableConfig, to: f64, key_seed: u64) -> Result<Trace> {
    let (n, h) = (config.num_bins, config.num_hashes);
    let mut table = Table::new(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(key_seed);
    let target = (to * table.capacity() as f64).ceil() as usize;
    let mut samples = Vec::with_capacity(target);
    let mut failed_at = None;
    let mut key = 0u64;
    while table.len() < target {
        let density = table.density();
        let out = table.insert(KeyEntry::random(&mut rng, key, key, n, h))?;
        if !out.success {
            failed_at = Some(density);
            break;
        }
        samples.push(Sample {
            density,
            bins_viewed: out.metrics.bins_viewed,
            chain_length: out.metrics.chain_length,
            spawns: out.metrics.spawns,
        });
        key += 1;
    }
    Ok(Trace {
        samples,
        failed_at,
        table,
    })
}

/// A trial that stopped before reaching the top of the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialFailure {
    pub policy: Policy,
    pub ghosts: bool,
    pub trial: usize,
    pub density: f64,
}

#[derive(Debug, Default)]
pub struct SweepReport {
    pub rows: Vec<MetricsRow>,
    pub failures: Vec<TrialFailure>,
}

/// Table settings for one trial. Every policy sees the same key stream
/// for a given trial.
pub fn trial_config(
    cfg: &ExperimentConfig,
    policy: Policy,
    ghosts: bool,
    trial: usize,
) -> (TableConfig, u64) {
    let table = TableConfig::new(cfg.num_bins, cfg.bin_size, cfg.num_hashes, policy)
        .with_ghosts(ghosts)
        .with_seed(derive_seed(cfg.seed, 2 * trial as u64))
        .with_max_steps(cfg.max_steps)
        .with_max_spawns(cfg.max_spawns)
        .with_search_batch(cfg.search_batch);
    (table, derive_seed(cfg.seed, 2 * trial as u64 + 1))
}

/// Runs every trial of one policy, in parallel across trials.
pub fn traces(cfg: &ExperimentConfig, policy: Policy, ghosts: bool) -> Result<Vec<Trace>> {
    (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let (table, keys) = trial_config(cfg, policy, ghosts, t);
            fill(table, cfg.max_density(), keys)
        })
        .collect()
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Band means: each trial's mean over its insertions in the band, averaged
/// over the trials that reached the band.
pub fn band_rows(
    cfg: &ExperimentConfig,
    policy: Policy,
    ghosts: bool,
    traces: &[Trace],
) -> Vec<MetricsRow> {
    cfg.densities
        .iter()
        .map(|&d| {
            let per_trial: Vec<[f64; 3]> = traces
                .iter()
                .filter_map(|t| {
                    let band: Vec<&Sample> = t.in_band(d).collect();
                    let m = |f: fn(&Sample) -> u64| mean(band.iter().map(|s| f(s) as f64));
                    Some([
                        m(|s| s.bins_viewed)?,
                        m(|s| s.chain_length)?,
                        m(|s| s.spawns)?,
                    ])
                })
                .collect();
            let col = |i: usize| mean(per_trial.iter().map(|r| r[i]));
            MetricsRow {
                experiment: cfg.experiment.name().into(),
                policy: policy.name().into(),
                ghosts,
                n: cfg.num_bins,
                b: cfg.bin_size,
                h: cfg.num_hashes,
                density: d,
                bins_viewed_mean: col(0),
                chain_len_mean: col(1),
                spawns_mean: col(2),
                aborts: None,
                trials: per_trial.len(),
                seed: cfg.seed,
            }
        })
        .collect()
}

/// Fills for every policy and ghost setting. Trials that stop early are
/// reported, not fatal.
pub fn run_fill_sweep(cfg: &ExperimentConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let mut report = SweepReport::default();
    for &policy in &cfg.policies {
        for &ghosts in &cfg.ghosts {
            let traces = traces(cfg, policy, ghosts)?;
            for (trial, t) in traces.iter().enumerate() {
                if let Some(density) = t.failed_at {
                    report.failures.push(TrialFailure {
                        policy,
                        ghosts,
                        trial,
                        density,
                    });
                }
            }
            report.rows.extend(band_rows(cfg, policy, ghosts, &traces));
        }
    }
    Ok(report)
}

pub fn run_serial_fill(cfg: &ExperimentConfig) -> Result<SweepReport> {
    debug_assert_eq!(cfg.experiment, Experiment::SerialFill);
    run_fill_sweep(cfg)
}

pub fn run_dary_fill(cfg: &ExperimentConfig) -> Result<SweepReport> {
    debug_assert_eq!(cfg.experiment, Experiment::DaryFill);
    run_fill_sweep(cfg)
}

pub fn run_chain_length(cfg: &ExperimentConfig) -> Result<SweepReport> {
    debug_assert_eq!(cfg.experiment, Experiment::ChainLength);
    run_fill_sweep(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(experiment: Experiment) -> ExperimentConfig {
        ExperimentConfig {
            num_bins: 128,
            trials: 4,
            densities: vec![0.1, 0.5, 0.9],
            ..ExperimentConfig::defaults(experiment)
        }
    }

    #[test]
    fn near_empty_tables_view_about_two_bins() {
        let report = run_serial_fill(&small(Experiment::SerialFill)).unwrap();
        for row in report.rows.iter().filter(|r| r.density == 0.1) {
            let v = row.bins_viewed_mean.unwrap();
            assert!((v - 2.0).abs() <= 0.1, "{}: {v}", row.policy);
        }
    }

    #[test]
    fn empty_band_chains_are_empty() {
        let mut cfg = small(Experiment::ChainLength);
        cfg.densities = vec![0.05];
        for row in run_chain_length(&cfg).unwrap().rows {
            assert_eq!(row.chain_len_mean, Some(0.0), "{}", row.policy);
        }
    }

    #[test]
    fn dary_inserts_view_fewer_than_d_bins_when_sparse() {
        let mut cfg = small(Experiment::DaryFill);
        cfg.num_bins = 1024;
        cfg.densities = vec![0.05];
        cfg.policies = vec![Policy::RandomKick, Policy::Rattle];
        for row in run_dary_fill(&cfg).unwrap().rows {
            assert!(row.bins_viewed_mean.unwrap() < 4.0, "{}", row.policy);
        }
    }

    #[test]
    fn rows_cover_every_policy_and_band() {
        let cfg = small(Experiment::SerialFill);
        let report = run_serial_fill(&cfg).unwrap();
        assert_eq!(report.rows.len(), cfg.policies.len() * cfg.densities.len());
        assert!(report.failures.is_empty());
        assert!(report.rows.iter().all(|r| r.trials == cfg.trials));
    }

    #[test]
    fn band_means_average_trial_means() {
        let cfg = ExperimentConfig {
            densities: vec![0.5],
            ..small(Experiment::SerialFill)
        };
        let sample = |density, bins_viewed| Sample {
            density,
            bins_viewed,
            chain_length: 0,
            spawns: 0,
        };
        let table = || Table::new(TableConfig::new(4, 1, 2, Policy::RandomKick)).unwrap();
        let traces = vec![
            Trace {
                samples: vec![sample(0.496, 2), sample(0.497, 4), sample(0.5, 100)],
                failed_at: None,
                table: table(),
            },
            Trace {
                samples: vec![sample(0.499, 9)],
                failed_at: None,
                table: table(),
            },
            Trace {
                samples: vec![sample(0.2, 1)],
                failed_at: Some(0.2),
                table: table(),
            },
        ];
        let row = &band_rows(&cfg, Policy::RandomKick, false, &traces)[0];
        assert_eq!(row.trials, 2);
        assert_eq!(row.bins_viewed_mean, Some(6.0));
    }

    #[test]
    fn seeds_are_deterministic_and_distinct() {
        assert_eq!(derive_seed(3, 1), derive_seed(3, 1));
        assert_ne!(derive_seed(3, 1), derive_seed(3, 2));
        assert_ne!(derive_seed(3, 1), derive_seed(4, 1));
    }
}
