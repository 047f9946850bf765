//! Realized minimum Fano factor against initial atom number, next to the
//! closed-form single-step prediction.

use atomnum_core::budget::{min_fano, optimal_nsc};
use atomnum_core::rng::replicate_seed;
use rayon::prelude::*;
use serde::Serialize;

use super::filter::{matched_n_loss, run_replicate, ReplicateRun};
use super::{open_run, summarize, Command, Outcome, RunOptions};
use crate::config::{LoadedConfig, RunConfig};
use crate::error::CliResult;
use crate::output::num;
use crate::svg::{Chart, Series};

pub const SWEEP_HEADER: [&str; 8] = [
    "n0",
    "median_min_fano_db",
    "mean_min_fano_db",
    "std_min_fano_db",
    "median_post_std",
    "coverage",
    "budget_fano_min_db",
    "budget_n_sc_opt",
];

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub n0: u64,
    pub median_min_fano_db: f64,
    pub mean_min_fano_db: f64,
    pub std_min_fano_db: f64,
    pub median_post_std: f64,
    pub coverage: f64,
    pub budget_fano_min_db: f64,
    pub budget_n_sc_opt: f64,
}

#[derive(Serialize)]
struct Report<'a> {
    replicates: usize,
    max_loss: f64,
    budget_n_loss: f64,
    points: &'a [SweepPoint],
}

/// Atom number `j`, replicate `r` uses seed `replicate_seed(seed, j·R + r)`.
pub fn compute(cfg: &RunConfig) -> CliResult<Vec<SweepPoint>> {
    let model = cfg.step_model()?;
    let reps = cfg.replicates;
    let n_loss = matched_n_loss(cfg);
    let jobs: Vec<(usize, usize)> = (0..cfg.sweep.n0.len()).flat_map(|j| (0..reps).map(move |r| (j, r))).collect();
    let runs: Vec<ReplicateRun> = jobs
        .par_iter()
        .map(|&(j, r)| {
            let seed = replicate_seed(cfg.seed, (j * reps + r) as u64);
            run_replicate(cfg, &model, r, seed, cfg.sweep.n0[j])
        })
        .collect::<CliResult<_>>()?;

    cfg.sweep
        .n0
        .iter()
        .zip(runs.chunks(reps))
        .map(|(&n0, group)| {
            let mins: Vec<f64> = group.iter().map(|r| r.summary.min_fano_db.unwrap_or(f64::NAN)).collect();
            let stds: Vec<f64> = group.iter().map(|r| r.summary.post_std_at_min.unwrap_or(f64::NAN)).collect();
            let covered: usize = group.iter().map(|r| r.summary.covered_steps).sum();
            let total: usize = group.iter().map(|r| r.summary.steps).sum();
            let s = summarize(&mins);
            let (q, alpha) = (cfg.q(), cfg.coupling.alpha_at);
            Ok(SweepPoint {
                n0,
                median_min_fano_db: s.median,
                mean_min_fano_db: s.mean,
                std_min_fano_db: s.std,
                median_post_std: summarize(&stds).median,
                coverage: covered as f64 / total.max(1) as f64,
                budget_fano_min_db: min_fano(n0 as f64, q, alpha, n_loss)?.fano_db,
                budget_n_sc_opt: optimal_nsc(n0 as f64, q, alpha, n_loss)?,
            })
        })
        .collect()
}

pub fn run(loaded: &LoadedConfig, opts: &RunOptions) -> CliResult<Outcome> {
    let cfg = &loaded.config;
    let points = compute(cfg)?;
    let mut out = open_run(Command::Sweep, loaded, opts, &[])?;
    let rows = points.iter().map(|p| {
        vec![
            p.n0.to_string(),
            num(p.median_min_fano_db),
            num(p.mean_min_fano_db),
            num(p.std_min_fano_db),
            num(p.median_post_std),
            num(p.coverage),
            num(p.budget_fano_min_db),
            num(p.budget_n_sc_opt),
        ]
    });
    out.write_csv("sweep.csv", &SWEEP_HEADER, rows)?;
    out.write_json(
        "sweep_summary.json",
        &Report {
            replicates: cfg.replicates,
            max_loss: cfg.filter.max_loss,
            budget_n_loss: matched_n_loss(cfg),
            points: &points,
        },
    )?;
    if opts.svg {
        let x: Vec<f64> = points.iter().map(|p| p.n0 as f64).collect();
        let realized: Vec<f64> = points.iter().map(|p| p.median_min_fano_db).collect();
        let budget: Vec<f64> = points.iter().map(|p| p.budget_fano_min_db).collect();
        let chart = Chart {
            title: "Minimum Fano factor against atom number",
            x_label: "initial atoms",
            y_label: "min Fano factor (dB)",
            log_x: false,
            log_y: false,
            series: vec![
                Series { label: "filter (median)", x: &x, y: &realized, dashed: false },
                Series { label: "closed form", x: &x, y: &budget, dashed: true },
            ],
        };
        out.write_bytes("sweep.svg", chart.render().as_bytes())?;
    }
    let summary = points
        .iter()
        .map(|p| format!("N0 {}: median min Fano {:.2} dB, closed form {:.2} dB", p.n0, p.median_min_fano_db, p.budget_fano_min_db))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Outcome {
        dir: out.finish()?,
        summary,
    })
}
