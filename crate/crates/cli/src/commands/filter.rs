//! Simulate-and-filter replicates with per-run traces and an aggregate of the
//! minimum Fano factors.

use atomnum_core::bayes::DiscreteDistribution;
use atomnum_core::budget::{min_fano, tomography_nloss};
use atomnum_core::rng::replicate_seed;
use atomnum_core::scenario::simulate_and_filter;
use atomnum_core::{FilterRun, StepModel};
use rayon::prelude::*;
use serde::Serialize;

use super::simulate::{trajectory_rows, write_trajectory_plot, ModelReport, TRAJECTORY_HEADER};
use super::{initial_atoms, open_run, summarize, Command, Outcome, RunOptions, Summary};
use crate::config::{LoadedConfig, RunConfig};
use crate::error::CliResult;
use crate::output::num;
use crate::svg::{Chart, Series};

pub const FILTER_HEADER: [&str; 4] = ["t_s", "post_mean", "post_var", "fano_db"];

/// What a single replicate reports, restricted to steps before `max_loss`.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicateSummary {
    pub replicate: usize,
    pub seed: u64,
    pub n0: u64,
    pub min_fano_db: Option<f64>,
    pub step_of_min: Option<usize>,
    pub loss_fraction_at_min: Option<f64>,
    /// Probe photons sent through the ensemble up to the minimum.
    pub photons_used: Option<f64>,
    /// Photons scattered per atom up to the minimum.
    pub n_sc_at_min: Option<f64>,
    pub post_mean_at_min: Option<f64>,
    pub post_std_at_min: Option<f64>,
    pub true_n_at_min: Option<u64>,
    /// Minimum over the whole run, ignoring `max_loss`.
    pub overall_min_fano_db: f64,
    pub skipped_updates: usize,
    /// Steps whose posterior mean ± 2σ contains the true atom number.
    pub covered_steps: usize,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct ReplicateRun {
    pub run: FilterRun,
    pub summary: ReplicateSummary,
}

/// The loss budget the closed-form model should be compared against.
pub fn matched_n_loss(cfg: &RunConfig) -> f64 {
    if cfg.trap.repump {
        cfg.n_heat()
    } else {
        tomography_nloss(cfg.trap.n_hf, cfg.n_heat()).unwrap_or(f64::NAN)
    }
}

pub fn run_replicate(cfg: &RunConfig, model: &StepModel, replicate: usize, seed: u64, n0: u64) -> CliResult<ReplicateRun> {
    let f = &cfg.filter;
    let prior = DiscreteDistribution::uniform(f.n_max);
    let run = simulate_and_filter(model, n0, f.steps, prior, f.band_sigmas, seed)?;
    let covered_steps = run
        .output
        .steps
        .iter()
        .zip(&run.trajectory.n_true)
        .filter(|(s, &n)| (s.mean - n as f64).abs() <= 2.0 * s.variance.sqrt())
        .count();
    let best = run.min_fano_before_loss(model, f.max_loss);
    let at = |g: &dyn Fn(usize) -> f64| best.map(|(_, step)| g(step));
    let summary = ReplicateSummary {
        replicate,
        seed,
        n0,
        min_fano_db: best.map(|b| b.0),
        step_of_min: best.map(|b| b.1),
        loss_fraction_at_min: at(&|s| 1.0 - (1.0 - model.loss_p).powi(s as i32)),
        photons_used: at(&|s| run.photons_used(model, s)),
        n_sc_at_min: at(&|s| model.n_sc_per_step * s as f64),
        post_mean_at_min: at(&|s| run.output.steps[s - 1].mean),
        post_std_at_min: at(&|s| run.output.steps[s - 1].variance.sqrt()),
        true_n_at_min: best.map(|(_, s)| run.trajectory.n_true[s - 1]),
        overall_min_fano_db: run.output.min_fano_db,
        skipped_updates: run.output.skipped_updates.len(),
        covered_steps,
        steps: run.output.steps.len(),
    };
    Ok(ReplicateRun { run, summary })
}

/// Replicate `i` uses seed `replicate_seed(seed, i)`.
pub fn run_replicates(cfg: &RunConfig) -> CliResult<(StepModel, Vec<ReplicateRun>)> {
    let model = cfg.step_model()?;
    let runs = (0..cfg.replicates)
        .into_par_iter()
        .map(|i| {
            let seed = replicate_seed(cfg.seed, i as u64);
            run_replicate(cfg, &model, i, seed, initial_atoms(cfg.filter.n0, seed))
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok((model, runs))
}

#[derive(Debug, Clone, Serialize)]
pub struct Histogram {
    pub edges_db: Vec<f64>,
    pub counts: Vec<usize>,
}

/// 1 dB bins covering all finite values.
pub fn histogram(values: &[f64]) -> Histogram {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return Histogram { edges_db: vec![], counts: vec![] };
    }
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min).floor();
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max).floor() + 1.0;
    let bins = (hi - lo) as usize;
    let mut counts = vec![0; bins];
    for v in finite {
        counts[((v - lo) as usize).min(bins - 1)] += 1;
    }
    Histogram {
        edges_db: (0..=bins).map(|i| lo + i as f64).collect(),
        counts,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Aggregate {
    pub replicates: usize,
    pub n0_min: u64,
    pub n0_max: u64,
    pub max_loss: f64,
    pub min_fano_db: Summary,
    pub histogram: Histogram,
    pub post_std_at_min: Summary,
    pub loss_fraction_at_min: Summary,
    pub fraction_below_minus_10_db: f64,
    /// Fraction of all steps whose posterior mean ± 2σ contains the truth.
    pub coverage_2sigma: f64,
    pub skipped_updates: usize,
    /// Closed-form single-step minimum at the median initial atom number.
    pub budget_fano_min_db: f64,
    pub budget_n_loss: f64,
    pub model: ModelReport,
}

pub fn aggregate(cfg: &RunConfig, model: &StepModel, runs: &[ReplicateRun]) -> Aggregate {
    let mins: Vec<f64> = runs.iter().map(|r| r.summary.min_fano_db.unwrap_or(f64::NAN)).collect();
    let stds: Vec<f64> = runs.iter().map(|r| r.summary.post_std_at_min.unwrap_or(f64::NAN)).collect();
    let losses: Vec<f64> = runs.iter().map(|r| r.summary.loss_fraction_at_min.unwrap_or(f64::NAN)).collect();
    let n0s: Vec<f64> = runs.iter().map(|r| r.summary.n0 as f64).collect();
    let covered: usize = runs.iter().map(|r| r.summary.covered_steps).sum();
    let total: usize = runs.iter().map(|r| r.summary.steps).sum();
    let n_loss = matched_n_loss(cfg);
    let (lo, hi) = cfg.filter.n0.bounds();
    Aggregate {
        replicates: runs.len(),
        n0_min: lo,
        n0_max: hi,
        max_loss: cfg.filter.max_loss,
        min_fano_db: summarize(&mins),
        histogram: histogram(&mins),
        post_std_at_min: summarize(&stds),
        loss_fraction_at_min: summarize(&losses),
        fraction_below_minus_10_db: mins.iter().filter(|&&m| m <= -10.0).count() as f64 / runs.len().max(1) as f64,
        coverage_2sigma: covered as f64 / total.max(1) as f64,
        skipped_updates: runs.iter().map(|r| r.summary.skipped_updates).sum(),
        budget_fano_min_db: min_fano(summarize(&n0s).median, cfg.q(), cfg.coupling.alpha_at, n_loss)
            .map_or(f64::NAN, |m| m.fano_db),
        budget_n_loss: n_loss,
        model: ModelReport::new(cfg, *model),
    }
}

pub fn run(loaded: &LoadedConfig, opts: &RunOptions) -> CliResult<Outcome> {
    let cfg = &loaded.config;
    let (model, runs) = run_replicates(cfg)?;
    let mut out = open_run(Command::Filter, loaded, opts, &[])?;
    for (i, r) in runs.iter().enumerate() {
        let dir = format!("replicate_{i:04}");
        out.write_csv(&format!("{dir}/trajectory.csv"), &TRAJECTORY_HEADER, trajectory_rows(&r.run.trajectory))?;
        let rows = r.run.trajectory.times().zip(&r.run.output.steps).map(|(t, s)| {
            vec![num(t), num(s.mean), num(s.variance), num(s.fano_db)]
        });
        out.write_csv(&format!("{dir}/filter.csv"), &FILTER_HEADER, rows)?;
        out.write_json(&format!("{dir}/summary.json"), &r.summary)?;
    }
    let agg = aggregate(cfg, &model, &runs);
    out.write_json("filter_aggregate.json", &agg)?;

    if opts.svg {
        if let Some(first) = runs.first() {
            let times: Vec<f64> = first.run.trajectory.times().map(|t| t * 1e3).collect();
            let fano: Vec<f64> = first.run.output.steps.iter().map(|s| s.fano_db).collect();
            let chart = Chart {
                title: "Posterior Fano factor (replicate 0)",
                x_label: "time (ms)",
                y_label: "Fano factor (dB)",
                log_x: false,
                log_y: false,
                series: vec![Series { label: "filter", x: &times, y: &fano, dashed: false }],
            };
            out.write_bytes("fano.svg", chart.render().as_bytes())?;
            write_trajectory_plot(&mut out, "trajectory.svg", &first.run.trajectory, model.k_phase)?;
        }
    }

    let summary = format!(
        "{} replicates: median min Fano {:.2} dB (closed form {:.2} dB), median posterior std at min {:.2} atoms, coverage {:.3}",
        agg.replicates, agg.min_fano_db.median, agg.budget_fano_min_db, agg.post_std_at_min.median, agg.coverage_2sigma
    );
    Ok(Outcome {
        dir: out.finish()?,
        summary,
    })
}
