//! Dual-color homodyne readout.
//!
//! The two probe sidebands at ±Ω pick up opposite phase shifts ±φ. Beating
//! them against a strong local oscillator gives, after balanced subtraction,
//!
//! ```text
//! ΔI(t) = 2·sqrt(2·I_s·I_LO)·cos(Ωt + φ)
//! ```
//!
//! so the optical phase shows up as the phase of a beat note. Demodulating
//! over `m` whole beat periods with `sin(Ωt)` and `cos(Ωt)` yields
//! `-τ·sqrt(2 I_s I_LO)·sin φ` and `τ·sqrt(2 I_s I_LO)·cos φ`. The LO shot
//! noise splits evenly between the two quadratures, `n_τ/2` each, which puts
//! the phase floor at `1/(2·sqrt(n_s))` with `n_s = κ·τ·I_s` the detected
//! signal photons.
//!
//! Intensities here are expressed directly as detected photoelectron flux:
//! `signal_intensity = q·Φ` with `Φ` the probe photon flux at the atoms.
//! Shot noise is Gaussian per sample bin with variance equal to the LO
//! photoelectron count in the bin.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, invalid, Error, Result};
use crate::physics::{DetectionChain, ProbeConfig};
use crate::rng::{rng_from_seed, SimRng};

/// LO to signal photoelectron flux ratio below which a trace is flagged.
pub const MIN_LO_RATIO: f64 = 100.0;

/// Receiver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomodyneConfig {
    /// Ω/2π.
    pub beat_freq_hz: f64,
    pub sample_rate_hz: f64,
    /// LO photoelectron flux, 1/s.
    pub lo_flux: f64,
    /// `false` gives the noiseless (infinite LO) limit.
    pub shot_noise: bool,
    /// Diffusion constant of a slow LO phase random walk, rad²/s. Zero disables it.
    pub lo_phase_diffusion: f64,
}

impl Default for HomodyneConfig {
    fn default() -> Self {
        Self {
            beat_freq_hz: 62.5e6,
            sample_rate_hz: 250e6,
            lo_flux: 1e12,
            shot_noise: true,
            lo_phase_diffusion: 0.0,
        }
    }
}

impl HomodyneConfig {
    pub fn validate(&self) -> Result<()> {
        check_positive("beat_freq_hz", self.beat_freq_hz)?;
        check_positive("sample_rate_hz", self.sample_rate_hz)?;
        check_positive("lo_flux", self.lo_flux)?;
        if !(self.lo_phase_diffusion >= 0.0) {
            return Err(invalid("lo_phase_diffusion", "must be >= 0"));
        }
        if self.sample_rate_hz <= 2.0 * self.beat_freq_hz {
            return Err(invalid(
                "sample_rate_hz",
                format!(
                    "{} Hz does not exceed twice the beat frequency {} Hz",
                    self.sample_rate_hz, self.beat_freq_hz
                ),
            ));
        }
        Ok(())
    }

    fn samples_per_period(&self) -> f64 {
        self.sample_rate_hz / self.beat_freq_hz
    }

    /// Sample count for `m` beat periods, and whether that count is exact.
    pub fn window_samples(&self, m_periods: usize) -> (usize, bool) {
        let exact = m_periods as f64 * self.samples_per_period();
        let n = exact.round();
        (n as usize, (exact - n).abs() < 1e-9 * exact.max(1.0))
    }

    /// Largest whole number of beat periods that fits in `window_s`.
    pub fn periods_in(&self, window_s: f64) -> usize {
        ((window_s * self.beat_freq_hz) * (1.0 + 1e-12)).floor() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TraceWarning {
    /// The sample rate is not a whole multiple of the beat frequency per window,
    /// so windows are rounded to the nearest sample.
    NonIntegerPeriods,
    /// The LO does not dominate the signal by at least [`MIN_LO_RATIO`].
    WeakLocalOscillator { ratio: f64 },
}

/// Balanced-detector record in photoelectrons per sample bin.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatTrace {
    pub sample_rate_hz: f64,
    pub beat_freq_hz: f64,
    pub samples: Vec<f64>,
    /// Photoelectrons per unit intensity per second. Intensities are already
    /// photoelectron fluxes, so this is 1 unless a caller rescales.
    pub kappa: f64,
    pub lo_intensity: f64,
    pub signal_intensity: f64,
    pub warnings: Vec<TraceWarning>,
}

impl BeatTrace {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }
}

/// One demodulated phase estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSample {
    /// Start of the window.
    pub time_s: f64,
    pub phase_rad: f64,
    pub window_s: f64,
    /// Detected signal photons in the window, κ·τ·I_s.
    pub n_signal_photons: f64,
}

/// Allan deviation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllanSeries {
    pub taus_s: Vec<f64>,
    pub adev_rad: Vec<f64>,
    pub theory_rad: Vec<f64>,
}

/// Generates balanced-detector samples one at a time.
struct BeatSynth {
    rng: SimRng,
    cycles_per_sample: f64,
    amplitude: f64,
    noise_std: f64,
    phi: f64,
    lo_phase: f64,
    lo_phase_step_std: f64,
    index: u64,
}

impl BeatSynth {
    fn new(phi: f64, signal_intensity: f64, cfg: &HomodyneConfig, seed: u64) -> Self {
        let dt = 1.0 / cfg.sample_rate_hz;
        Self {
            rng: rng_from_seed(seed),
            cycles_per_sample: cfg.beat_freq_hz / cfg.sample_rate_hz,
            amplitude: 2.0 * (2.0 * signal_intensity * cfg.lo_flux).sqrt() * dt,
            noise_std: if cfg.shot_noise {
                (cfg.lo_flux * dt).sqrt()
            } else {
                0.0
            },
            phi,
            lo_phase: 0.0,
            lo_phase_step_std: (cfg.lo_phase_diffusion * dt).sqrt(),
            index: 0,
        }
    }

    fn next_sample(&mut self) -> f64 {
        let carrier = TAU * (self.index as f64 * self.cycles_per_sample).fract();
        self.index += 1;
        let mut x = self.amplitude * (carrier + self.phi + self.lo_phase).cos();
        if self.noise_std > 0.0 {
            let z: f64 = self.rng.sample(StandardNormal);
            x += self.noise_std * z;
        }
        if self.lo_phase_step_std > 0.0 {
            let z: f64 = self.rng.sample(StandardNormal);
            self.lo_phase += self.lo_phase_step_std * z;
        }
        x
    }
}

/// Running sin/cos quadrature sums over one window.
#[derive(Default)]
struct Quadratures {
    sin: f64,
    cos: f64,
}

impl Quadratures {
    fn add(&mut self, x: f64, index: u64, cycles_per_sample: f64) {
        let (s, c) = (TAU * (index as f64 * cycles_per_sample).fract()).sin_cos();
        self.sin += x * s;
        self.cos += x * c;
    }

    fn phase(&self, window: usize) -> Result<f64> {
        if self.sin == 0.0 && self.cos == 0.0 {
            return Err(Error::DegenerateWindow { index: window });
        }
        Ok((-self.sin).atan2(self.cos))
    }
}

fn signal_intensity(probe: &ProbeConfig, chain: &DetectionChain) -> Result<f64> {
    probe.validate()?;
    chain.validate()?;
    Ok(chain.q() * probe.photon_flux())
}

fn trace_warnings(cfg: &HomodyneConfig, signal: f64, m_periods: usize) -> Vec<TraceWarning> {
    let mut warnings = Vec::new();
    if !cfg.window_samples(m_periods.max(1)).1 {
        warnings.push(TraceWarning::NonIntegerPeriods);
    }
    if signal > 0.0 && cfg.lo_flux / signal < MIN_LO_RATIO {
        warnings.push(TraceWarning::WeakLocalOscillator {
            ratio: cfg.lo_flux / signal,
        });
    }
    warnings
}

/// Synthesizes a shot-noise-limited beat record carrying the sideband phase `phi`.
pub fn synthesize_trace(
    phi: f64,
    probe: &ProbeConfig,
    chain: &DetectionChain,
    cfg: &HomodyneConfig,
    duration_s: f64,
    seed: u64,
) -> Result<BeatTrace> {
    cfg.validate()?;
    let signal = signal_intensity(probe, chain)?;
    let n = (duration_s * cfg.sample_rate_hz).round();
    if !(n >= cfg.samples_per_period()) {
        return Err(invalid(
            "duration_s",
            format!("{duration_s} s is shorter than one beat period"),
        ));
    }
    let mut synth = BeatSynth::new(phi, signal, cfg, seed);
    let samples = (0..n as usize).map(|_| synth.next_sample()).collect();
    Ok(BeatTrace {
        sample_rate_hz: cfg.sample_rate_hz,
        beat_freq_hz: cfg.beat_freq_hz,
        samples,
        kappa: 1.0,
        lo_intensity: cfg.lo_flux,
        signal_intensity: signal,
        warnings: trace_warnings(cfg, signal, 1),
    })
}

/// Demodulates consecutive windows of `m_periods` beat periods each.
pub fn demodulate(trace: &BeatTrace, m_periods: usize) -> Result<Vec<PhaseSample>> {
    if m_periods == 0 {
        return Err(invalid("m_periods", "must be >= 1"));
    }
    let cfg = HomodyneConfig {
        beat_freq_hz: trace.beat_freq_hz,
        sample_rate_hz: trace.sample_rate_hz,
        lo_flux: trace.lo_intensity,
        shot_noise: false,
        lo_phase_diffusion: 0.0,
    };
    let (per_window, _) = cfg.window_samples(m_periods);
    if per_window == 0 || trace.samples.len() < per_window {
        return Err(Error::InsufficientData(format!(
            "trace of {} samples is shorter than one window of {per_window}",
            trace.samples.len()
        )));
    }
    let cycles_per_sample = trace.beat_freq_hz / trace.sample_rate_hz;
    let window_s = per_window as f64 / trace.sample_rate_hz;
    let n_signal = trace.kappa * window_s * trace.signal_intensity;
    trace
        .samples
        .chunks_exact(per_window)
        .enumerate()
        .map(|(w, chunk)| {
            let start = (w * per_window) as u64;
            let mut quad = Quadratures::default();
            for (i, &x) in chunk.iter().enumerate() {
                quad.add(x, start + i as u64, cycles_per_sample);
            }
            Ok(PhaseSample {
                time_s: start as f64 / trace.sample_rate_hz,
                phase_rad: quad.phase(w)?,
                window_s,
                n_signal_photons: n_signal,
            })
        })
        .collect()
}

/// Synthesizes and demodulates `n_windows` windows without keeping the raw
/// trace. Produces the same phases as [`synthesize_trace`] followed by
/// [`demodulate`] for the same seed.
pub fn simulate_phase_stream(
    phi: f64,
    probe: &ProbeConfig,
    chain: &DetectionChain,
    cfg: &HomodyneConfig,
    m_periods: usize,
    n_windows: usize,
    seed: u64,
) -> Result<Vec<PhaseSample>> {
    cfg.validate()?;
    if m_periods == 0 {
        return Err(invalid("m_periods", "must be >= 1"));
    }
    let signal = signal_intensity(probe, chain)?;
    let (per_window, _) = cfg.window_samples(m_periods);
    let window_s = per_window as f64 / cfg.sample_rate_hz;
    let cycles_per_sample = cfg.beat_freq_hz / cfg.sample_rate_hz;
    let mut synth = BeatSynth::new(phi, signal, cfg, seed);
    let mut out = Vec::with_capacity(n_windows);
    for w in 0..n_windows {
        let start = synth.index;
        let mut quad = Quadratures::default();
        for _ in 0..per_window {
            let idx = synth.index;
            let x = synth.next_sample();
            quad.add(x, idx, cycles_per_sample);
        }
        out.push(PhaseSample {
            time_s: start as f64 / cfg.sample_rate_hz,
            phase_rad: quad.phase(w)?,
            window_s,
            n_signal_photons: window_s * signal,
        });
    }
    Ok(out)
}

/// Shot-noise-limited phase resolution `1/(2·sqrt(q·n_photons))`.
pub fn phase_resolution(q: f64, n_photons: f64) -> Result<f64> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(invalid("q", format!("{q} not in (0, 1]")));
    }
    check_positive("n_photons", n_photons)?;
    Ok(0.5 / (q * n_photons).sqrt())
}

/// Averaging factors 1, 2, 4, ... (`count` of them).
pub fn octave_factors(count: u32) -> Vec<usize> {
    (0..count).map(|i| 1usize << i).collect()
}

/// Non-overlapping two-sample deviation of a phase stream at base window τ₀,
/// for each averaging factor `k` (window `k·τ₀`).
///
/// Factors leaving fewer than two averaged samples are omitted. The theory
/// column is the shot-noise floor for the signal photons collected in `k·τ₀`.
pub fn allan_deviation(phases: &[PhaseSample], factors: &[usize]) -> Result<AllanSeries> {
    if phases.len() < 16 {
        return Err(Error::InsufficientData(format!(
            "{} phase samples, need at least 16",
            phases.len()
        )));
    }
    let mut sorted = factors.to_vec();
    sorted.sort_unstable();
    sorted.dedup();

    let tau0 = phases[0].window_s;
    let n_s0 = phases.iter().map(|p| p.n_signal_photons).sum::<f64>() / phases.len() as f64;
    let values: Vec<f64> = phases.iter().map(|p| p.phase_rad).collect();

    let mut series = AllanSeries {
        taus_s: Vec::new(),
        adev_rad: Vec::new(),
        theory_rad: Vec::new(),
    };
    for k in sorted.into_iter().filter(|&k| k > 0) {
        let means: Vec<f64> = values
            .chunks_exact(k)
            .map(|c| c.iter().sum::<f64>() / k as f64)
            .collect();
        if means.len() < 2 {
            continue;
        }
        let sum_sq: f64 = means.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
        let avar = sum_sq / (2.0 * (means.len() - 1) as f64);
        series.taus_s.push(k as f64 * tau0);
        series.adev_rad.push(avar.sqrt());
        series
            .theory_rad
            .push(if n_s0 > 0.0 { phase_resolution(1.0, k as f64 * n_s0)? } else { f64::INFINITY });
    }
    Ok(series)
}
