//! Absolute atom number from an optical-pumping transient: synthetic
//! generate-and-fit, fit of a measured CSV, or the scattered-photon
//! asymptote alone.

use std::path::Path;

use atomnum_core::calib::{
    add_transmission_noise, atoms_from_asymptote, average_transients, cumulative_scattered, fit_transient,
    heterodyne_transmission_sigma, time_grid, transmission_model,
};
use atomnum_core::physics::photon_flux;
use atomnum_core::rng::{replicate_seed, side_stream};
use atomnum_core::{CalibFit, PumpTransient};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{open_run, Command, Outcome, RunOptions};
use crate::config::{CalibMode, LoadedConfig, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::num;
use crate::svg::{Chart, Series};

#[derive(Debug, Clone, Serialize)]
pub struct Averaging {
    pub runs: usize,
    pub n_spread: f64,
    pub n_true_per_run: Vec<f64>,
    pub alpha_per_run_mean: f64,
    pub alpha_per_run_std: f64,
    pub n_per_run_mean: f64,
    /// `(α_averaged − mean α_run) / stat_err_alpha` of the averaged fit.
    pub alpha_shift_in_stat_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibReport {
    pub mode: CalibMode,
    pub n_atoms: f64,
    pub alpha_at: Option<f64>,
    pub stat_err_n: Option<f64>,
    pub stat_err_alpha: Option<f64>,
    pub sys_band_n: Option<f64>,
    pub converged: bool,
    pub residual_norm: Option<f64>,
    pub iterations: Option<usize>,
    pub k_branch: f64,
    pub input_flux: f64,
    pub total_scattered: f64,
    /// `total_scattered / k_branch`.
    pub asymptote_n_atoms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub averaging: Option<Averaging>,
}

#[derive(Debug, Deserialize)]
struct DataRow {
    t_s: f64,
    transmission: f64,
}

pub fn read_transient(path: &Path, flux: f64, k_branch: f64) -> CliResult<PumpTransient> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Config(format!("cannot read calibration input {}: {e}", path.display())))?;
    let mut times = Vec::new();
    let mut trans = Vec::new();
    for (i, row) in reader.deserialize::<DataRow>().enumerate() {
        let row = row.map_err(|e| CliError::Config(format!("{} record {}: {e}", path.display(), i + 1)))?;
        times.push(row.t_s);
        trans.push(row.transmission);
    }
    Ok(PumpTransient::new(times, trans, flux, k_branch)?)
}

fn flux(cfg: &RunConfig) -> f64 {
    photon_flux(cfg.calib.power_w, cfg.probe.wavelength_m)
}

/// Noisy transients for `runs` independent runs and their true atom numbers.
/// Run `r` uses seed `replicate_seed(seed, r)`; the atom-number spread is
/// drawn from a side stream of the master seed.
pub fn synthesize(cfg: &RunConfig) -> CliResult<(Vec<f64>, Vec<PumpTransient>)> {
    let c = &cfg.calib;
    let flux = flux(cfg);
    let q = cfg.q();
    let photons_per_bin = flux * c.dt_s;
    let shots = c.shots as f64;
    let sigma = |t: f64| heterodyne_transmission_sigma(t, q, photons_per_bin) / shots.sqrt();
    let mut spread = side_stream(cfg.seed, 1);
    let grid = time_grid(c.points, c.dt_s);
    let mut ns = Vec::with_capacity(c.runs);
    let mut traces = Vec::with_capacity(c.runs);
    for r in 0..c.runs {
        let z: f64 = StandardNormal.sample(&mut spread);
        let n = c.n_atoms * (1.0 + c.n_spread * z).max(0.01);
        let clean = PumpTransient::model(n, c.alpha_at, flux, c.k_branch, grid.clone())?;
        traces.push(add_transmission_noise(&clean, replicate_seed(cfg.seed, r as u64), sigma));
        ns.push(n);
    }
    Ok((ns, traces))
}

fn fit_report(mode: CalibMode, data: &PumpTransient, fit: &CalibFit) -> CalibReport {
    let total = cumulative_scattered(data).last().copied().unwrap_or(0.0);
    CalibReport {
        mode,
        n_atoms: fit.n_atoms,
        alpha_at: Some(fit.alpha_at),
        stat_err_n: Some(fit.stat_err_n),
        stat_err_alpha: Some(fit.stat_err_alpha),
        sys_band_n: Some(fit.sys_band_n),
        converged: fit.converged,
        residual_norm: Some(fit.residual_norm),
        iterations: Some(fit.iterations),
        k_branch: data.k_branch,
        input_flux: data.input_flux,
        total_scattered: total,
        asymptote_n_atoms: total / data.k_branch,
        averaging: None,
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// The transient that was fitted (if any) and the report.
pub fn compute(loaded: &LoadedConfig) -> CliResult<(Option<PumpTransient>, CalibReport)> {
    let cfg = &loaded.config;
    let c = &cfg.calib;
    match c.mode {
        CalibMode::Asymptote => {
            let (total, transient) = match (c.total_scattered, &c.input) {
                (Some(total), _) => (total, None),
                (None, Some(input)) => {
                    let t = read_transient(&loaded.resolve_path(input), flux(cfg), c.k_branch)?;
                    (cumulative_scattered(&t).last().copied().unwrap_or(0.0), Some(t))
                }
                (None, None) => unreachable!("validated: asymptote mode has an input"),
            };
            let n = atoms_from_asymptote(total, c.k_branch)?;
            let report = CalibReport {
                mode: c.mode,
                n_atoms: n,
                alpha_at: None,
                stat_err_n: None,
                stat_err_alpha: None,
                sys_band_n: Some(n * atomnum_core::calib::FLUX_SCALE_UNCERTAINTY),
                converged: true,
                residual_norm: None,
                iterations: None,
                k_branch: c.k_branch,
                input_flux: flux(cfg),
                total_scattered: total,
                asymptote_n_atoms: n,
                averaging: None,
            };
            Ok((transient, report))
        }
        CalibMode::Data => {
            let input = c.input.as_ref().expect("validated: data mode has an input");
            let data = read_transient(&loaded.resolve_path(input), flux(cfg), c.k_branch)?;
            let fit = fit_transient(&data)?;
            let report = fit_report(c.mode, &data, &fit);
            Ok((Some(data), report))
        }
        CalibMode::Synthetic => {
            let (ns, traces) = synthesize(cfg)?;
            let data = average_transients(&traces)?;
            let fit = fit_transient(&data)?;
            let mut report = fit_report(c.mode, &data, &fit);
            if traces.len() > 1 {
                let fits = traces.iter().map(fit_transient).collect::<atomnum_core::Result<Vec<_>>>()?;
                let alphas: Vec<f64> = fits.iter().map(|f| f.alpha_at).collect();
                let (a_mean, a_std) = mean_std(&alphas);
                let (n_mean, _) = mean_std(&fits.iter().map(|f| f.n_atoms).collect::<Vec<_>>());
                report.averaging = Some(Averaging {
                    runs: traces.len(),
                    n_spread: c.n_spread,
                    n_true_per_run: ns,
                    alpha_per_run_mean: a_mean,
                    alpha_per_run_std: a_std,
                    n_per_run_mean: n_mean,
                    alpha_shift_in_stat_err: (fit.alpha_at - a_mean) / fit.stat_err_alpha,
                });
            }
            Ok((Some(data), report))
        }
    }
}

/// Input-file contents take part in the run hash, so edited data never
/// lands in a stale directory.
fn input_digest(loaded: &LoadedConfig) -> Vec<u8> {
    loaded
        .config
        .calib
        .input
        .as_ref()
        .and_then(|p| std::fs::read(loaded.resolve_path(p)).ok())
        .map(|bytes| Sha256::digest(bytes).to_vec())
        .unwrap_or_default()
}

pub fn run(loaded: &LoadedConfig, opts: &RunOptions) -> CliResult<Outcome> {
    let (data, report) = compute(loaded)?;
    let mut out = open_run(Command::Calibrate, loaded, opts, &input_digest(loaded))?;
    out.write_json("calib.json", &report)?;

    if let Some(data) = &data {
        let cum = cumulative_scattered(data);
        let asymptote = report.k_branch * report.n_atoms;
        let model: Vec<f64> = match report.alpha_at {
            Some(alpha) => data
                .times_s
                .iter()
                .map(|&t| transmission_model(report.n_atoms, alpha, data.input_flux, data.k_branch, t))
                .collect::<atomnum_core::Result<_>>()?,
            None => vec![f64::NAN; data.len()],
        };
        let rows = (0..data.len()).map(|i| {
            let (t, y) = (data.times_s[i], data.transmission[i]);
            vec![num(t), num(y), num(model[i]), num(y - model[i])]
        });
        out.write_csv("residuals.csv", &["t_s", "transmission", "model", "residual"], rows)?;
        let rows = (0..data.len()).map(|i| vec![num(data.times_s[i]), num(cum[i]), num(asymptote)]);
        out.write_csv("cumulative.csv", &["t_s", "scattered", "asymptote"], rows)?;

        if opts.svg {
            let t_us: Vec<f64> = data.times_s.iter().map(|t| t * 1e6).collect();
            let chart = Chart {
                title: "Optical pumping transient",
                x_label: "time (us)",
                y_label: "transmission",
                log_x: false,
                log_y: false,
                series: vec![
                    Series { label: "data", x: &t_us, y: &data.transmission, dashed: false },
                    Series { label: "fit", x: &t_us, y: &model, dashed: true },
                ],
            };
            out.write_bytes("calib.svg", chart.render().as_bytes())?;
        }
    }

    let converged = report.converged;
    let dir = out.finish()?;
    if !converged {
        return Err(CliError::Numerical(format!(
            "transient fit did not converge; partial results in {}",
            dir.display()
        )));
    }
    let summary = match (report.alpha_at, report.stat_err_n) {
        (Some(alpha), Some(err)) => format!(
            "N = {:.1} ± {:.1} (stat) ± {:.1} (flux scale), alpha_at = {:.5}; asymptote gives N = {:.1}",
            report.n_atoms,
            err,
            report.sys_band_n.unwrap_or(f64::NAN),
            alpha,
            report.asymptote_n_atoms
        ),
        _ => format!("N = {:.1} from {:.4e} scattered photons", report.n_atoms, report.total_scattered),
    };
    Ok(Outcome { dir, summary })
}
