//! Per-step quantities of a dispersive atom-number measurement, derived from
//! the probe, detection chain, coupling and trap, plus the combined
//! simulate-then-filter run.

use serde::{Deserialize, Serialize};

use crate::bayes::{run_filter, DiscreteDistribution, FilterConfig, FilterOutput};
use crate::dynamics::{scattering_rate, simulate_trajectory, step_loss_probability, TrajectoryParams, Trajectory, TrapParams};
use crate::error::{check_positive, Result};
use crate::homodyne::phase_resolution;
use crate::physics::{single_atom_phase, DetectionChain, ProbeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepModel {
    pub dt_s: f64,
    /// Phase per atom, rad.
    pub k_phase: f64,
    /// Shot-noise phase uncertainty per step, rad.
    pub delta_phi: f64,
    pub loss_p: f64,
    /// Probe photons at the atoms per step.
    pub photons_per_step: f64,
    /// Scattering rate per atom, 1/s.
    pub r_sc: f64,
    pub n_sc_per_step: f64,
}

impl StepModel {
    pub fn derive(
        probe: &ProbeConfig,
        chain: &DetectionChain,
        alpha_at: f64,
        trap: &TrapParams,
        dt_s: f64,
    ) -> Result<Self> {
        probe.validate()?;
        chain.validate()?;
        check_positive("alpha_at", alpha_at)?;
        check_positive("dt_s", dt_s)?;
        let flux = probe.photon_flux();
        let photons = flux * dt_s;
        let r_sc = scattering_rate(alpha_at, probe.detuning_halfwidths, flux);
        Ok(Self {
            dt_s,
            k_phase: single_atom_phase(alpha_at, probe.detuning_halfwidths),
            delta_phi: phase_resolution(chain.q(), photons)?,
            loss_p: step_loss_probability(trap, r_sc, dt_s)?,
            photons_per_step: photons,
            r_sc,
            n_sc_per_step: r_sc * dt_s,
        })
    }

    /// Atom-number resolution of a single step, `δφ/k`.
    pub fn atoms_per_step_noise(&self) -> f64 {
        self.delta_phi / self.k_phase.abs()
    }

    pub fn trajectory_params(&self, n0: u64, steps: usize) -> TrajectoryParams {
        TrajectoryParams {
            n0,
            steps,
            loss_p: self.loss_p,
            k_phase: self.k_phase,
            delta_phi: self.delta_phi,
            dt_s: self.dt_s,
            n_sc_per_step: self.n_sc_per_step,
        }
    }

    pub fn filter_config(&self, n_max: usize, band_sigmas: f64) -> FilterConfig {
        FilterConfig {
            k_phase: self.k_phase,
            delta_phi: self.delta_phi,
            loss_p: self.loss_p,
            n_max,
            band_sigmas,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRun {
    pub trajectory: Trajectory,
    pub output: FilterOutput,
}

impl FilterRun {
    /// Smallest Fano factor (dB) among steps whose expected loss is below
    /// `max_loss`, with its 1-based step.
    pub fn min_fano_before_loss(&self, model: &StepModel, max_loss: f64) -> Option<(f64, usize)> {
        self.output
            .steps
            .iter()
            .enumerate()
            .take_while(|(i, _)| 1.0 - (1.0 - model.loss_p).powi(*i as i32 + 1) < max_loss)
            .filter(|(_, s)| s.mean > 0.0)
            .map(|(i, s)| (s.fano_db, i + 1))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }

    /// Scattered photons per atom by `step` (1-based).
    pub fn photons_used(&self, model: &StepModel, step: usize) -> f64 {
        model.photons_per_step * step as f64
    }
}

/// Simulates one ground-truth trajectory and filters its phase record
/// starting from `prior`.
pub fn simulate_and_filter(
    model: &StepModel,
    n0: u64,
    steps: usize,
    prior: DiscreteDistribution,
    band_sigmas: f64,
    seed: u64,
) -> Result<FilterRun> {
    let trajectory = simulate_trajectory(&model.trajectory_params(n0, steps), seed)?;
    let cfg = model.filter_config(prior.n_max(), band_sigmas);
    let output = run_filter(&trajectory.phi_meas, &cfg, prior)?;
    Ok(FilterRun { trajectory, output })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_step_model() {
        let m = StepModel::derive(
            &ProbeConfig::default(),
            &DetectionChain::from_q(0.4).unwrap(),
            0.024,
            &TrapParams::default(),
            5e-6,
        )
        .unwrap();
        assert!((m.k_phase - 4.9913e-4).abs() < 1e-8);
        assert!((m.photons_per_step - 3303.7).abs() < 1.0, "{}", m.photons_per_step);
        assert!((m.loss_p - 2.70e-3).abs() < 1e-5);
        assert!((m.atoms_per_step_noise() - 27.5).abs() < 0.1, "{}", m.atoms_per_step_noise());
    }
}
