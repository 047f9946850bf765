//! Ground-truth atom-number dynamics.
//!
//! Each atom independently leaves the probed state during a step of length
//! `dt` with probability `P`, so the atom number is a binomially thinned
//! Markov chain. Background collisions, probe heating and (without repump
//! light) hyperfine pumping enter as independent exponential rates.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_non_negative, check_positive, check_range, invalid, Error, Result};
use crate::rng::rng_from_seed;

/// Per-step loss probabilities above this are rejected as outside the model.
pub const MAX_STEP_LOSS: f64 = 0.5;

/// Default step, matching the phase averaging window.
pub const DEFAULT_DT_S: f64 = 5e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapParams {
    /// 1/e lifetime without probe light.
    pub tau_bg_s: f64,
    /// Mean scattering events that heat one atom out of the trap.
    pub n_heat: f64,
    /// Mean scattering events that pump one atom to the other hyperfine level.
    pub n_hf: f64,
    pub repump_on: bool,
}

impl Default for TrapParams {
    fn default() -> Self {
        Self {
            tau_bg_s: 20e-3,
            n_heat: 56.0,
            n_hf: 67.0,
            repump_on: true,
        }
    }
}

impl TrapParams {
    pub fn validate(&self) -> Result<()> {
        check_positive("tau_bg_s", self.tau_bg_s)?;
        check_positive("n_heat", self.n_heat)?;
        check_positive("n_hf", self.n_hf)?;
        Ok(())
    }

    /// Total per-atom loss rate, 1/s.
    pub fn loss_rate(&self, r_sc: f64) -> f64 {
        let hf = if self.repump_on { 0.0 } else { r_sc / self.n_hf };
        1.0 / self.tau_bg_s + r_sc / self.n_heat + hf
    }
}

/// Measured heating budgets at a few probe powers. The power dependence has
/// no model, so lookups pick the nearest entry in log-power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatingTable {
    /// `(power_w, n_heat)` pairs.
    pub entries: Vec<(f64, f64)>,
}

impl HeatingTable {
    pub fn published() -> Self {
        Self {
            entries: vec![(3.6e-9, 380.0), (1.1e-9, 190.0), (0.15e-9, 56.0)],
        }
    }

    pub fn lookup(&self, power_w: f64) -> Option<f64> {
        if !(power_w > 0.0) {
            return self.entries.first().map(|e| e.1);
        }
        let target = power_w.ln();
        self.entries
            .iter()
            .filter(|(p, _)| *p > 0.0)
            .min_by(|a, b| {
                let da = (a.0.ln() - target).abs();
                let db = (b.0.ln() - target).abs();
                da.total_cmp(&db)
            })
            .map(|e| e.1)
    }
}

/// Free-space scattering rate per atom, `flux·α/(1+Δ̃²)`.
pub fn scattering_rate(alpha_at: f64, detuning: f64, flux: f64) -> f64 {
    flux * alpha_at / (1.0 + detuning * detuning)
}

/// Probability that a given atom is lost during one step.
pub fn step_loss_probability(params: &TrapParams, r_sc: f64, dt_s: f64) -> Result<f64> {
    params.validate()?;
    check_non_negative("r_sc", r_sc)?;
    check_non_negative("dt_s", dt_s)?;
    let p = -(-dt_s * params.loss_rate(r_sc)).exp_m1();
    if !(p < 1.0) {
        return Err(invalid("dt_s", format!("loss probability {p} is not < 1")));
    }
    if p > MAX_STEP_LOSS {
        return Err(Error::StepTooLarge {
            p,
            limit: MAX_STEP_LOSS,
        });
    }
    Ok(p)
}

/// Inputs to [`simulate_trajectory`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryParams {
    pub n0: u64,
    pub steps: usize,
    pub loss_p: f64,
    /// Phase per atom, rad.
    pub k_phase: f64,
    /// Standard deviation of the phase noise per step, rad. Zero gives
    /// noise-free observations.
    pub delta_phi: f64,
    pub dt_s: f64,
    /// Photons scattered per atom per step.
    pub n_sc_per_step: f64,
}

/// Simulated record. Entry `i` describes step `l = i + 1`, at time `l·dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt_s: f64,
    pub n0: u64,
    pub n_true: Vec<u64>,
    pub phi_meas: Vec<f64>,
    pub n_sc_cum: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.n_true.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n_true.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (1..=self.len()).map(move |l| l as f64 * self.dt_s)
    }
}

pub fn simulate_trajectory(params: &TrajectoryParams, seed: u64) -> Result<Trajectory> {
    check_range("loss_p", params.loss_p, 0.0, 1.0)?;
    check_non_negative("delta_phi", params.delta_phi)?;
    check_non_negative("dt_s", params.dt_s)?;
    check_non_negative("n_sc_per_step", params.n_sc_per_step)?;
    if !params.k_phase.is_finite() {
        return Err(invalid("k_phase", "must be finite"));
    }
    let noise = Normal::new(0.0, params.delta_phi).map_err(|e| invalid("delta_phi", e.to_string()))?;
    let mut rng = rng_from_seed(seed);

    let mut n = params.n0;
    let mut out = Trajectory {
        dt_s: params.dt_s,
        n0: params.n0,
        n_true: Vec::with_capacity(params.steps),
        phi_meas: Vec::with_capacity(params.steps),
        n_sc_cum: Vec::with_capacity(params.steps),
    };
    for l in 1..=params.steps {
        n = thin(&mut rng, n, 1.0 - params.loss_p);
        let phi = params.k_phase * n as f64 + noise.sample(&mut rng);
        out.n_true.push(n);
        out.phi_meas.push(phi);
        out.n_sc_cum.push(l as f64 * params.n_sc_per_step);
    }
    Ok(out)
}

fn thin<R: Rng>(rng: &mut R, n: u64, survive: f64) -> u64 {
    if n == 0 || survive <= 0.0 {
        return 0;
    }
    if survive >= 1.0 {
        return n;
    }
    // Binomial::new only fails on p outside [0, 1], excluded above.
    Binomial::new(n, survive).expect("valid survival probability").sample(rng)
}

/// Expected atom number after `l` steps: the exact `n0·(1−P)^l` and the
/// small-`P` form `n0·e^{−lP}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanDecay {
    pub exact: f64,
    pub exponential: f64,
}

impl MeanDecay {
    pub fn difference(&self) -> f64 {
        self.exact - self.exponential
    }
}

pub fn mean_decay(n0: f64, l: u32, p: f64) -> Result<MeanDecay> {
    check_range("p", p, 0.0, 1.0)?;
    Ok(MeanDecay {
        exact: n0 * (1.0 - p).powi(l as i32),
        exponential: n0 * (-(l as f64) * p).exp(),
    })
}
