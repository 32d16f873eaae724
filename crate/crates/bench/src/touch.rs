//! Monte Carlo check of how often concurrent inserts oversubscribe a bin.
//!
//! Each round, `t` threads each touch `j` uniformly random bins at once. A
//! round oversubscribes if any bin takes more than `B` touches. The analytic
//! bound on the chance that any of `D` rounds does so is
//! `D * t * j * (t * j / n)^B`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::sweep::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TouchConfig {
    pub threads: usize,
    pub touches: usize,
    pub num_bins: usize,
    pub bin_size: usize,
    pub rounds: usize,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TouchResult {
    pub t: usize,
    pub j: usize,
    pub n: usize,
    #[serde(rename = "B")]
    pub b: usize,
    #[serde(rename = "D")]
    pub rounds: usize,
    pub trials: usize,
    /// Oversubscribed rounds over all rounds.
    pub round_frequency: f64,
    /// Trials with at least one oversubscribed round.
    pub trial_frequency: f64,
    pub bound: f64,
    pub seed: u64,
}

pub fn analytic_bound(
    threads: usize,
    touches: usize,
    num_bins: usize,
    bin_size: usize,
    rounds: usize,
) -> f64 {
    let tj = (threads * touches) as f64;
    rounds as f64 * tj * (tj / num_bins as f64).powi(bin_size as i32)
}

/// Oversubscribed rounds in one trial.
fn trial(cfg: &TouchConfig, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut load = vec![0u32; cfg.num_bins];
    let mut touched = Vec::with_capacity(cfg.threads * cfg.touches);
    let mut over = 0;
    for _ in 0..cfg.rounds {
        let mut hit = false;
        for _ in 0..cfg.threads * cfg.touches {
            let b = rng.gen_range(0..cfg.num_bins);
            load[b] += 1;
            hit |= load[b] as usize > cfg.bin_size;
            touched.push(b);
        }
        for b in touched.drain(..) {
            load[b] = 0;
        }
        over += usize::from(hit);
    }
    over
}

pub fn run_touch_sim(cfg: &TouchConfig) -> TouchResult {
    let per_trial: Vec<usize> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| trial(cfg, derive_seed(cfg.seed, t as u64)))
        .collect();
    let rounds: usize = per_trial.iter().sum();
    let trials_hit = per_trial.iter().filter(|&&r| r > 0).count();
    TouchResult {
        t: cfg.threads,
        j: cfg.touches,
        n: cfg.num_bins,
        b: cfg.bin_size,
        rounds: cfg.rounds,
        trials: cfg.trials,
        round_frequency: rounds as f64 / (cfg.trials * cfg.rounds) as f64,
        trial_frequency: trials_hit as f64 / cfg.trials as f64,
        bound: analytic_bound(
            cfg.threads,
            cfg.touches,
            cfg.num_bins,
            cfg.bin_size,
            cfg.rounds,
        ),
        seed: cfg.seed,
    }
}
