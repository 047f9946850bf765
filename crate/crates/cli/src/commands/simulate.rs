//! Ground-truth loss trajectories and their noisy phase records.

use atomnum_core::dynamics::simulate_trajectory;
use atomnum_core::rng::replicate_seed;
use atomnum_core::{StepModel, Trajectory};
use rayon::prelude::*;
use serde::Serialize;

use super::{initial_atoms, open_run, Command, Outcome, RunOptions};
use crate::config::{LoadedConfig, RunConfig};
use crate::error::CliResult;
use crate::output::{num, RunDir};
use crate::svg::{Chart, Series};

pub const TRAJECTORY_HEADER: [&str; 4] = ["t_s", "n_true", "phi_meas_rad", "n_sc_cum"];

pub fn trajectory_rows(t: &Trajectory) -> impl Iterator<Item = Vec<String>> + '_ {
    t.times().enumerate().map(move |(i, time)| {
        vec![
            num(time),
            t.n_true[i].to_string(),
            num(t.phi_meas[i]),
            num(t.n_sc_cum[i]),
        ]
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelReport {
    pub q: f64,
    pub alpha_at: f64,
    pub n_heat: f64,
    pub photon_flux: f64,
    #[serde(flatten)]
    pub step: StepModel,
    pub atoms_per_step_noise: f64,
}

impl ModelReport {
    pub fn new(cfg: &RunConfig, step: StepModel) -> Self {
        Self {
            q: cfg.q(),
            alpha_at: cfg.coupling.alpha_at,
            n_heat: cfg.n_heat(),
            photon_flux: cfg.probe().photon_flux(),
            atoms_per_step_noise: step.atoms_per_step_noise(),
            step,
        }
    }
}

#[derive(Serialize)]
struct ReplicateReport {
    replicate: usize,
    seed: u64,
    n0: u64,
    n_final: u64,
    file: String,
}

#[derive(Serialize)]
struct Report {
    model: ModelReport,
    steps: usize,
    replicates: Vec<ReplicateReport>,
    mean_surviving_fraction: f64,
    expected_surviving_fraction: f64,
}

pub(crate) fn write_trajectory_plot(out: &mut RunDir, rel: &str, t: &Trajectory, k_phase: f64) -> CliResult<()> {
    let times: Vec<f64> = t.times().map(|x| x * 1e3).collect();
    let n: Vec<f64> = t.n_true.iter().map(|&v| v as f64).collect();
    let from_phase: Vec<f64> = t.phi_meas.iter().map(|p| p / k_phase).collect();
    let chart = Chart {
        title: "Simulated atom number",
        x_label: "time (ms)",
        y_label: "atoms",
        log_x: false,
        log_y: false,
        series: vec![
            Series { label: "phase / k", x: &times, y: &from_phase, dashed: false },
            Series { label: "true N", x: &times, y: &n, dashed: false },
        ],
    };
    out.write_bytes(rel, chart.render().as_bytes())?;
    Ok(())
}

pub fn run(loaded: &LoadedConfig, opts: &RunOptions) -> CliResult<Outcome> {
    let cfg = &loaded.config;
    let model = cfg.step_model()?;
    let steps = cfg.filter.steps;
    let runs: Vec<(u64, u64, Trajectory)> = (0..cfg.replicates)
        .into_par_iter()
        .map(|i| {
            let seed = replicate_seed(cfg.seed, i as u64);
            let n0 = initial_atoms(cfg.filter.n0, seed);
            let t = simulate_trajectory(&model.trajectory_params(n0, steps), seed)?;
            Ok((seed, n0, t))
        })
        .collect::<CliResult<_>>()?;

    let mut out = open_run(Command::Simulate, loaded, opts, &[])?;
    let mut replicates = Vec::with_capacity(runs.len());
    for (i, (seed, n0, t)) in runs.iter().enumerate() {
        let file = format!("replicate_{i:04}/trajectory.csv");
        out.write_csv(&file, &TRAJECTORY_HEADER, trajectory_rows(t))?;
        replicates.push(ReplicateReport {
            replicate: i,
            seed: *seed,
            n0: *n0,
            n_final: t.n_true.last().copied().unwrap_or(*n0),
            file,
        });
    }
    if opts.svg {
        if let Some((_, _, t)) = runs.first() {
            write_trajectory_plot(&mut out, "trajectory.svg", t, model.k_phase)?;
        }
    }
    let surviving: f64 = replicates
        .iter()
        .filter(|r| r.n0 > 0)
        .map(|r| r.n_final as f64 / r.n0 as f64)
        .sum::<f64>()
        / replicates.iter().filter(|r| r.n0 > 0).count().max(1) as f64;
    let report = Report {
        model: ModelReport::new(cfg, model),
        steps,
        replicates,
        mean_surviving_fraction: surviving,
        expected_surviving_fraction: (1.0 - model.loss_p).powi(steps as i32),
    };
    out.write_json("simulate_summary.json", &report)?;
    let summary = format!(
        "{} trajectories of {steps} steps; surviving fraction {:.4} (expected {:.4})",
        cfg.replicates, report.mean_surviving_fraction, report.expected_surviving_fraction
    );
    Ok(Outcome {
        dir: out.finish()?,
        summary,
    })
}
