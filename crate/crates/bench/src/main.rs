use std::io;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use cuckoo_kick::Policy;
use cuckoo_kick_bench::{
    emit_csv, parse_ratios, run_fill_sweep, run_touch_sim, run_txn_aborts, write_csv, Experiment,
    ExperimentConfig, TouchConfig,
};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "cuckoo-bench",
    version,
    about = "Cuckoo hashing kick-out experiments, as CSV"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bins viewed per insert across a density sweep (bucketed bins).
    SerialFill(Opts),
    /// Bins viewed per insert on single-slot, d-hash tables.
    DaryFill(Opts),
    /// Kick-out chain lengths across a density sweep.
    ChainLength(Opts),
    /// Cumulative transaction aborts per engine preset.
    TxnAborts(Opts),
    /// Monte Carlo frequency of bins touched more than B times at once.
    TouchSim(Opts),
}

#[derive(Clone, Copy, ValueEnum)]
enum Ghosts {
    Off,
    On,
    Both,
}

#[derive(Args)]
struct Opts {
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    bin_size: Option<usize>,
    /// Hash functions per key (d for d-ary fills).
    #[arg(long)]
    hashes: Option<usize>,
    /// Policy to run; repeat for several.
    #[arg(long = "policy")]
    policies: Vec<Policy>,
    #[arg(long, value_enum)]
    ghosts: Option<Ghosts>,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated upper edges of the density bands.
    #[arg(long, value_delimiter = ',')]
    densities: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    max_spawns: Option<usize>,
    #[arg(long)]
    search_batch: Option<usize>,
    /// Worker threads (txn-aborts) or touching threads t (touch-sim).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    ops_per_txn: Option<usize>,
    /// Insert:delete:overwrite:read weights, e.g. 2:1:2:2.
    #[arg(long, value_parser = parse_ratios)]
    ratios: Option<[u32; 4]>,
    /// Engine preset 1..=6; repeat for several.
    #[arg(long = "preset")]
    presets: Vec<u8>,
    /// Let transactions run without yielding between operations.
    #[arg(long)]
    no_yield: bool,
    /// Touches per thread per round (touch-sim j).
    #[arg(long)]
    touches: Option<usize>,
    /// Rounds per trial (touch-sim D).
    #[arg(long)]
    rounds: Option<usize>,
    /// Output file; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Opts {
    fn config(&self, experiment: Experiment) -> ExperimentConfig {
        let mut c = ExperimentConfig::defaults(experiment);
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { $target = v; })*
            };
        }
        set! {
            bins => c.num_bins,
            bin_size => c.bin_size,
            hashes => c.num_hashes,
            trials => c.trials,
            densities => c.densities,
            seed => c.seed,
            max_steps => c.max_steps,
            max_spawns => c.max_spawns,
            search_batch => c.search_batch,
            ops_per_txn => c.txn.ops_per_txn,
            ratios => c.txn.ratios,
            touches => c.touch.touches,
            rounds => c.touch.rounds,
        }
        if let Some(t) = self.threads {
            c.txn.threads = t;
            c.touch.threads = t;
        }
        if !self.policies.is_empty() {
            c.policies = self.policies.clone();
        }
        if !self.presets.is_empty() {
            c.txn.presets = self.presets.clone();
        }
        if let Some(g) = self.ghosts {
            c.ghosts = match g {
                Ghosts::Off => vec![false],
                Ghosts::On => vec![true],
                Ghosts::Both => vec![false, true],
            };
        }
        c.txn.yield_between_ops = !self.no_yield;
        c
    }
}

fn emit<T: Serialize>(rows: &[T], out: &Option<PathBuf>) -> Result<()> {
    match out {
        Some(path) => emit_csv(rows, path),
        None => write_csv(rows, io::stdout().lock()),
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let (experiment, opts) = match &cli.command {
        Command::SerialFill(o) => (Experiment::SerialFill, o),
        Command::DaryFill(o) => (Experiment::DaryFill, o),
        Command::ChainLength(o) => (Experiment::ChainLength, o),
        Command::TxnAborts(o) => (Experiment::TxnAborts, o),
        Command::TouchSim(o) => (Experiment::TouchSim, o),
    };
    let cfg = opts.config(experiment);
    cfg.validate()?;
    match experiment {
        Experiment::SerialFill | Experiment::DaryFill | Experiment::ChainLength => {
            let report = run_fill_sweep(&cfg)?;
            for f in &report.failures {
                eprintln!(
                    "note: {} (ghosts={}) trial {} stopped at density {:.4}",
                    f.policy, f.ghosts, f.trial, f.density
                );
            }
            emit(&report.rows, &opts.out)
        }
        Experiment::TxnAborts => emit(&run_txn_aborts(&cfg)?, &opts.out),
        Experiment::TouchSim => {
            let result = run_touch_sim(&TouchConfig {
                threads: cfg.touch.threads,
                touches: cfg.touch.touches,
                num_bins: cfg.num_bins,
                bin_size: cfg.bin_size,
                rounds: cfg.touch.rounds,
                trials: cfg.trials,
                seed: cfg.seed,
            });
            emit(&[result], &opts.out)
        }
    }
}
