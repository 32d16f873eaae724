use std::fmt;

use anyhow::{bail, ensure, Result};
use cuckoo_kick::Policy;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    SerialFill,
    DaryFill,
    ChainLength,
    TxnAborts,
    TouchSim,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::SerialFill => "serial-fill",
            Experiment::DaryFill => "dary-fill",
            Experiment::ChainLength => "chain-length",
            Experiment::TxnAborts => "txn-aborts",
            Experiment::TouchSim => "touch-sim",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything one experiment run needs.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub num_bins: usize,
    pub bin_size: usize,
    /// Hash functions per key; `d` for the d-ary experiments.
    pub num_hashes: usize,
    pub policies: Vec<Policy>,
    /// Ghost settings to run each policy with.
    pub ghosts: Vec<bool>,
    pub trials: usize,
    /// Upper edges of the reported density bands. The table is filled to
    /// the last one.
    pub densities: Vec<f64>,
    pub seed: u64,
    pub max_steps: usize,
    pub max_spawns: usize,
    pub search_batch: usize,
    pub txn: TxnSettings,
    pub touch: TouchSettings,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TxnSettings {
    pub threads: usize,
    pub ops_per_txn: usize,
    /// Insert, delete, overwrite and read weights.
    pub ratios: [u32; 4],
    pub presets: Vec<u8>,
    pub yield_between_ops: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TouchSettings {
    /// Concurrent threads.
    pub threads: usize,
    /// Touches per thread per round.
    pub touches: usize,
    /// Rounds per trial.
    pub rounds: usize,
}

/// Width of a density band; a band reported at `d` covers `[d - BAND, d)`.
pub const BAND: f64 = 0.005;

/// Per-trial kick-out and search caps. Larger than the library defaults so
/// fills near 97.5% rarely stop early.
pub const BENCH_MAX_STEPS: usize = 10_000;
pub const BENCH_MAX_SPAWNS: usize = 100_000;

fn default_grid() -> Vec<f64> {
    vec![
        0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.85, 0.9, 0.925, 0.95, 0.96, 0.97, 0.975,
    ]
}

impl ExperimentConfig {
    /// Desk-scale defaults for each experiment.
    pub fn defaults(experiment: Experiment) -> Self {
        let base = Self {
            experiment,
            num_bins: 1 << 10,
            bin_size: 4,
            num_hashes: 2,
            policies: vec![
                Policy::RandomKick,
                Policy::QueueKick,
                Policy::Bfs,
                Policy::Hybrid,
                Policy::SortedSearch,
            ],
            ghosts: vec![false],
            trials: 50,
            densities: default_grid(),
            seed: 1,
            max_steps: BENCH_MAX_STEPS,
            max_spawns: BENCH_MAX_SPAWNS,
            search_batch: 1,
            txn: TxnSettings {
                threads: 8,
                ops_per_txn: 100,
                ratios: [1, 0, 1, 1],
                presets: (1..=6).collect(),
                yield_between_ops: true,
            },
            touch: TouchSettings {
                threads: 15,
                touches: 2,
                rounds: 1000,
            },
        };
        match experiment {
            Experiment::SerialFill => base,
            Experiment::DaryFill => Self {
                num_bins: 1 << 13,
                bin_size: 1,
                num_hashes: 4,
                policies: vec![
                    Policy::RandomKick,
                    Policy::Rattle,
                    Policy::Khosla,
                    Policy::Bfs,
                    Policy::SortedSearch,
                ],
                ..base
            },
            Experiment::ChainLength => Self {
                policies: vec![Policy::RandomKick, Policy::Bfs, Policy::SortedSearch],
                ghosts: vec![false, true],
                ..base
            },
            Experiment::TxnAborts => Self {
                num_bins: 1 << 11,
                bin_size: 8,
                trials: 20,
                densities: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95],
                ..base
            },
            Experiment::TouchSim => Self {
                num_bins: 1 << 14,
                bin_size: 8,
                trials: 1000,
                ..base
            },
        }
    }

    pub fn max_density(&self) -> f64 {
        self.densities.last().copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.trials >= 1, "trials must be at least 1");
        ensure!(!self.densities.is_empty(), "density grid is empty");
        ensure!(
            self.densities.windows(2).all(|w| w[0] < w[1]),
            "density grid must be strictly increasing"
        );
        ensure!(
            self.densities[0] > 0.0 && self.max_density() <= 0.99,
            "densities must lie in (0, 0.99]"
        );
        match self.experiment {
            Experiment::SerialFill | Experiment::ChainLength | Experiment::DaryFill => {
                ensure!(!self.policies.is_empty(), "no policies given");
                ensure!(!self.ghosts.is_empty(), "no ghost settings given");
                if self.experiment == Experiment::DaryFill {
                    ensure!(self.bin_size == 1, "d-ary fills use single-slot bins");
                }
            }
            Experiment::TxnAborts => {
                ensure!(
                    self.num_hashes == 2,
                    "the transactional engine uses two hashes"
                );
                ensure!(self.txn.threads >= 1, "threads must be at least 1");
                ensure!(self.txn.ops_per_txn >= 1, "ops-per-txn must be at least 1");
                ensure!(
                    self.txn.ratios.iter().any(|&r| r > 0),
                    "ratios must have a positive weight"
                );
                ensure!(!self.txn.presets.is_empty(), "no presets given");
                if let Some(p) = self.txn.presets.iter().find(|p| !(1..=6).contains(*p)) {
                    bail!("preset {p} is not in 1..=6");
                }
            }
            Experiment::TouchSim => {
                ensure!(
                    self.touch.threads >= 1 && self.touch.touches >= 1,
                    "t and j must be positive"
                );
                ensure!(self.touch.rounds >= 1, "rounds must be at least 1");
                ensure!(self.num_bins >= 1, "bins must be at least 1");
            }
        }
        Ok(())
    }
}

/// Parses `i:d:o:r` operation weights.
pub fn parse_ratios(s: &str) -> Result<[u32; 4]> {
    let parts: Vec<&str> = s.split(':').collect();
    ensure!(parts.len() == 4, "ratios take the form i:d:o:r, got {s:?}");
    let mut out = [0u32; 4];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p
            .trim()
            .parse()
            .map_err(|e| anyhow::anyhow!("bad ratio {p:?}: {e}"))?;
    }
    Ok(out)
}
