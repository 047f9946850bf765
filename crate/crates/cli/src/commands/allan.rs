//! Shot-noise phase floor: simulated phase record per probe power and its
//! Allan deviation next to `1/(2·sqrt(q·Φ·τ))`.

use atomnum_core::homodyne::{allan_deviation, octave_factors, simulate_phase_stream};
use atomnum_core::rng::replicate_seed;
use atomnum_core::AllanSeries;
use rayon::prelude::*;
use serde::Serialize;

use super::{log_log_slope, open_run, Command, Outcome, RunOptions};
use crate::config::{LoadedConfig, RunConfig};
use crate::error::CliResult;
use crate::output::num;
use crate::svg::{Chart, Series};

#[derive(Debug, Clone)]
pub struct PowerResult {
    pub power_w: f64,
    pub photon_flux: f64,
    pub seed: u64,
    pub series: AllanSeries,
    pub slope: f64,
    /// RMS of `adev/theory − 1` over all averaging times.
    pub rms_rel_dev: f64,
}

#[derive(Serialize)]
struct PowerReport<'a> {
    power_w: f64,
    photon_flux: f64,
    seed: u64,
    file: &'a str,
    slope: f64,
    rms_rel_dev: f64,
    tau_min_s: f64,
    tau_max_s: f64,
}

#[derive(Serialize)]
struct Report<'a> {
    q: f64,
    window_s: f64,
    windows: usize,
    powers: Vec<PowerReport<'a>>,
}

/// Power `i` uses seed `replicate_seed(seed, i)`.
pub fn compute(cfg: &RunConfig) -> CliResult<Vec<PowerResult>> {
    let h = &cfg.homodyne;
    let chain = cfg.chain();
    let hcfg = cfg.homodyne();
    let factors = octave_factors(h.octaves);
    h.powers_w
        .par_iter()
        .enumerate()
        .map(|(i, &power)| {
            let probe = cfg.probe().with_power(power);
            let seed = replicate_seed(cfg.seed, i as u64);
            let phases = simulate_phase_stream(h.phase_rad, &probe, &chain, &hcfg, h.window_periods, h.windows, seed)?;
            let series = allan_deviation(&phases, &factors)?;
            let rel: Vec<f64> = series
                .adev_rad
                .iter()
                .zip(&series.theory_rad)
                .map(|(a, t)| a / t - 1.0)
                .collect();
            Ok(PowerResult {
                power_w: power,
                photon_flux: probe.photon_flux(),
                seed,
                slope: log_log_slope(&series.taus_s, &series.adev_rad),
                rms_rel_dev: (rel.iter().map(|r| r * r).sum::<f64>() / rel.len() as f64).sqrt(),
                series,
            })
        })
        .collect()
}

pub fn run(loaded: &LoadedConfig, opts: &RunOptions) -> CliResult<Outcome> {
    let cfg = &loaded.config;
    let results = compute(cfg)?;
    let mut out = open_run(Command::Allan, loaded, opts, &[])?;

    let files: Vec<String> = (0..results.len()).map(|i| format!("allan_{i:02}.csv")).collect();
    for (r, file) in results.iter().zip(&files) {
        let s = &r.series;
        let rows = (0..s.taus_s.len()).map(|k| vec![num(s.taus_s[k]), num(s.adev_rad[k]), num(s.theory_rad[k])]);
        out.write_csv(file, &["tau_s", "adev_rad", "theory_rad"], rows)?;
    }
    let (samples, _) = cfg.homodyne().window_samples(cfg.homodyne.window_periods);
    let report = Report {
        q: cfg.q(),
        window_s: samples as f64 / cfg.homodyne.sample_rate_hz,
        windows: cfg.homodyne.windows,
        powers: results
            .iter()
            .zip(&files)
            .map(|(r, file)| PowerReport {
                power_w: r.power_w,
                photon_flux: r.photon_flux,
                seed: r.seed,
                file,
                slope: r.slope,
                rms_rel_dev: r.rms_rel_dev,
                tau_min_s: r.series.taus_s.first().copied().unwrap_or(f64::NAN),
                tau_max_s: r.series.taus_s.last().copied().unwrap_or(f64::NAN),
            })
            .collect(),
    };
    out.write_json("allan_summary.json", &report)?;

    if opts.svg {
        let labels: Vec<String> = results.iter().map(|r| format!("{:.3e} W", r.power_w)).collect();
        let theory_labels: Vec<String> = labels.iter().map(|l| format!("{l} shot noise")).collect();
        let mut series = Vec::new();
        for (i, r) in results.iter().enumerate() {
            series.push(Series { label: &labels[i], x: &r.series.taus_s, y: &r.series.adev_rad, dashed: false });
            series.push(Series { label: &theory_labels[i], x: &r.series.taus_s, y: &r.series.theory_rad, dashed: true });
        }
        let chart = Chart {
            title: "Allan deviation of the probe phase",
            x_label: "tau (s)",
            y_label: "Allan deviation (rad)",
            log_x: true,
            log_y: true,
            series,
        };
        out.write_bytes("allan.svg", chart.render().as_bytes())?;
    }

    let summary = results
        .iter()
        .map(|r| format!("{:.3e} W: slope {:.3}, rms deviation from shot noise {:.2}%", r.power_w, r.slope, 100.0 * r.rms_rel_dev))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Outcome {
        dir: out.finish()?,
        summary,
    })
}
