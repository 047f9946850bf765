//! One module per subcommand. Each computes its results (in parallel where
//! replicates are independent) and then writes them from a single thread.

pub mod allan;
pub mod budget;
pub mod calibrate;
pub mod filter;
pub mod simulate;
pub mod sweep;

use std::path::PathBuf;

use atomnum_core::rng::side_stream;
use rand::Rng;
use serde::Serialize;

use crate::config::{InitialAtoms, LoadedConfig};
use crate::error::CliResult;
use crate::output::RunDir;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Allan,
    Simulate,
    Filter,
    Calibrate,
    Budget,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Allan => "allan",
            Command::Simulate => "simulate",
            Command::Filter => "filter",
            Command::Calibrate => "calibrate",
            Command::Budget => "budget",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_base: PathBuf,
    pub svg: bool,
}

/// Where a command wrote its files, plus a one-paragraph summary for the terminal.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub dir: PathBuf,
    pub summary: String,
}

pub fn execute(command: Command, loaded: &LoadedConfig, opts: &RunOptions) -> CliResult<Outcome> {
    loaded.validate()?;
    match command {
        Command::Allan => allan::run(loaded, opts),
        Command::Simulate => simulate::run(loaded, opts),
        Command::Filter => filter::run(loaded, opts),
        Command::Calibrate => calibrate::run(loaded, opts),
        Command::Budget => budget::run(loaded, opts),
        Command::Sweep => sweep::run(loaded, opts),
    }
}

pub(crate) fn open_run(command: Command, loaded: &LoadedConfig, opts: &RunOptions, extra: &[u8]) -> CliResult<RunDir> {
    let cfg = &loaded.config;
    let mut salt = command.name().as_bytes().to_vec();
    salt.extend_from_slice(extra);
    RunDir::create(&opts.out_base, command.name(), &cfg.hash(&salt), cfg.seed, cfg.replicates)
}

/// Initial atom number for the replicate seeded with `seed`: the fixed value,
/// or a uniform draw from a side stream that leaves the main stream untouched.
pub fn initial_atoms(n0: InitialAtoms, seed: u64) -> u64 {
    match n0 {
        InitialAtoms::Fixed(n) => n,
        InitialAtoms::Range([lo, hi]) => side_stream(seed, 1).random_range(lo..=hi),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub p10: f64,
    pub p90: f64,
}

/// Order statistics and moments of the finite entries of `values`.
pub fn summarize(values: &[f64]) -> Summary {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return Summary {
            count: 0,
            mean: f64::NAN,
            std: f64::NAN,
            median: f64::NAN,
            min: f64::NAN,
            max: f64::NAN,
            p10: f64::NAN,
            p90: f64::NAN,
        };
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Summary {
        count: n,
        mean,
        std,
        median: quantile(&v, 0.5),
        min: v[0],
        max: v[n - 1],
        p10: quantile(&v, 0.1),
        p90: quantile(&v, 0.9),
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let pairs: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_statistics() {
        let s = summarize(&[3.0, 1.0, f64::NAN, 2.0, 4.0]);
        assert_eq!(s.count, 4);
        assert_eq!(s.median, 2.5);
        assert_eq!((s.min, s.max), (1.0, 4.0));
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!(summarize(&[]).median.is_nan());
    }

    #[test]
    fn initial_atoms_stay_in_range_and_repeat() {
        for seed in 0..50 {
            let n = initial_atoms(InitialAtoms::Range([1000, 2500]), seed);
            assert!((1000..=2500).contains(&n));
            assert_eq!(n, initial_atoms(InitialAtoms::Range([1000, 2500]), seed));
        }
        assert_eq!(initial_atoms(InitialAtoms::Fixed(7), 3), 7);
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.5)).collect();
        assert!((log_log_slope(&x, &y) + 0.5).abs() < 1e-12);
    }
}
