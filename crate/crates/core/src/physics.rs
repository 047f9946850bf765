//! Two-level atomic response to a detuned probe and detection-chain efficiency.
//!
//! Detunings are dimensionless, in units of half the natural linewidth
//! (Γ/2). The exact Lorentzian forms are used everywhere; the large-detuning
//! approximations only show up in tests of derived identities.

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, check_range, invalid, Result};

/// Planck constant, J·s (exact SI value).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Speed of light in vacuum, m/s (exact SI value).
pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

/// Saturation power at the default probe detuning, W.
pub const DEFAULT_SATURATION_POWER_W: f64 = 224e-9;

/// Probe powers above this fraction of saturation trigger a warning.
pub const SATURATION_WARN_FRACTION: f64 = 0.1;

/// Dispersive phase shift acquired by light passing an ensemble of optical
/// depth `d0` at detuning `detuning` (in half-linewidths).
pub fn phase_shift(d0: f64, detuning: f64) -> f64 {
    0.5 * d0 * detuning / (1.0 + detuning * detuning)
}

/// Fraction of probe photons removed by an optically thin ensemble.
pub fn absorption_fraction(d0: f64, detuning: f64) -> f64 {
    d0 / (1.0 + detuning * detuning)
}

/// Phase shift due to a single atom, i.e. [`phase_shift`] with `d0 = alpha_at`.
pub fn single_atom_phase(alpha_at: f64, detuning: f64) -> f64 {
    phase_shift(alpha_at, detuning)
}

/// Photons per second carried by `power_watts` at `wavelength_m`.
pub fn photon_flux(power_watts: f64, wavelength_m: f64) -> f64 {
    power_watts * wavelength_m / (PLANCK * SPEED_OF_LIGHT)
}

/// Probe light settings at the atoms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub detuning_halfwidths: f64,
    pub power_watts: f64,
    pub wavelength_m: f64,
    /// Γ/2π in Hz.
    pub natural_linewidth_hz: f64,
}

impl Default for ProbeConfig {
    /// Cs D2 line probed 12 linewidths off resonance with 154 pW.
    fn default() -> Self {
        Self {
            detuning_halfwidths: 24.0,
            power_watts: 154e-12,
            wavelength_m: 852.3e-9,
            natural_linewidth_hz: 5.23e6,
        }
    }
}

impl ProbeConfig {
    pub fn new(
        detuning_halfwidths: f64,
        power_watts: f64,
        wavelength_m: f64,
        natural_linewidth_hz: f64,
    ) -> Result<Self> {
        let probe = Self {
            detuning_halfwidths,
            power_watts,
            wavelength_m,
            natural_linewidth_hz,
        };
        probe.validate()?;
        Ok(probe)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.detuning_halfwidths.is_finite() {
            return Err(invalid("detuning_halfwidths", "must be finite"));
        }
        check_range("power_watts", self.power_watts, 0.0, f64::MAX)?;
        check_positive("wavelength_m", self.wavelength_m)?;
        check_positive("natural_linewidth_hz", self.natural_linewidth_hz)?;
        Ok(())
    }

    pub fn with_power(self, power_watts: f64) -> Self {
        Self {
            power_watts,
            ..self
        }
    }

    pub fn photon_flux(&self) -> f64 {
        photon_flux(self.power_watts, self.wavelength_m)
    }

    /// Detuning in Hz (Δ̃ · Γ/2).
    pub fn detuning_hz(&self) -> f64 {
        0.5 * self.detuning_halfwidths * self.natural_linewidth_hz
    }

    /// A warning if the probe is not comfortably in the linear regime.
    pub fn saturation_warning(&self, saturation_power_w: f64) -> Option<String> {
        let limit = SATURATION_WARN_FRACTION * saturation_power_w;
        (self.power_watts > limit).then(|| {
            format!(
                "probe power {:.3e} W exceeds {:.0}% of the saturation power {:.3e} W; \
                 the linear response model is no longer accurate",
                self.power_watts,
                100.0 * SATURATION_WARN_FRACTION,
                saturation_power_w
            )
        })
    }
}

/// Efficiency factors between the atoms and the recorded photocurrent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionChain {
    /// Detector quantum efficiency ε.
    pub detector_qe: f64,
    /// Fractional loss l between atoms and detector.
    pub path_loss: f64,
    /// Probe/LO mode overlap 𝒱.
    pub mode_overlap: f64,
    /// LO shot noise over total detection noise, η.
    pub noise_ratio: f64,
}

impl Default for DetectionChain {
    /// One factorization giving q ≈ 0.40; only the product is meaningful.
    fn default() -> Self {
        Self {
            detector_qe: 0.8,
            path_loss: 0.2,
            mode_overlap: 0.79,
            noise_ratio: 0.79,
        }
    }
}

impl DetectionChain {
    pub fn new(detector_qe: f64, path_loss: f64, mode_overlap: f64, noise_ratio: f64) -> Result<Self> {
        let chain = Self {
            detector_qe,
            path_loss,
            mode_overlap,
            noise_ratio,
        };
        chain.validate()?;
        Ok(chain)
    }

    /// A chain whose whole efficiency sits in the detector factor.
    pub fn from_q(q: f64) -> Result<Self> {
        Self::new(q, 0.0, 1.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        check_range("detector_qe", self.detector_qe, 0.0, 1.0)?;
        check_range("path_loss", self.path_loss, 0.0, 1.0)?;
        check_range("mode_overlap", self.mode_overlap, 0.0, 1.0)?;
        check_range("noise_ratio", self.noise_ratio, 0.0, 1.0)?;
        Ok(())
    }

    pub fn q(&self) -> f64 {
        quantum_efficiency(self)
    }
}

/// Overall efficiency q = ε(1−l)𝒱η.
pub fn quantum_efficiency(chain: &DetectionChain) -> f64 {
    chain.detector_qe * (1.0 - chain.path_loss) * chain.mode_overlap * chain.noise_ratio
}

/// Atom-light coupling of the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    /// On-resonance optical depth of a single atom.
    pub alpha_at: f64,
    /// On-resonance optical depth of the ensemble, `alpha_at · N`.
    pub d0: f64,
}

impl CouplingParams {
    pub fn for_atoms(alpha_at: f64, n_atoms: f64) -> Result<Self> {
        check_positive("alpha_at", alpha_at)?;
        check_range("n_atoms", n_atoms, 0.0, f64::MAX)?;
        Ok(Self {
            alpha_at,
            d0: alpha_at * n_atoms,
        })
    }

    pub fn n_atoms(&self) -> f64 {
        self.d0 / self.alpha_at
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn phase_shift_examples() {
        assert_eq!(phase_shift(0.5, 0.0), 0.0);
        // 0.012 * 24 / 577
        assert!(rel(phase_shift(0.024, 24.0), 4.991_334_5e-4) < 1e-7);
        assert!((phase_shift(0.024, 24.0) - 4.992e-4).abs() < 1e-7);
        assert_eq!(phase_shift(1.0, -5.0), -phase_shift(1.0, 5.0));
    }

    #[test]
    fn absorption_examples() {
        assert_eq!(absorption_fraction(0.3, 0.0), 0.3);
        assert!((absorption_fraction(0.024, 24.0) - 4.16e-5).abs() < 1e-8);
        assert_eq!(absorption_fraction(0.0, 7.0), 0.0);
    }

    #[test]
    fn single_atom_examples() {
        assert!((single_atom_phase(0.024, 24.0) - 4.992e-4).abs() < 1e-7);
        assert_eq!(single_atom_phase(0.024, 0.0), 0.0);
        for &det in &[10.0, 24.0, 50.0, 200.0] {
            let alpha = 0.024;
            let phi1 = single_atom_phase(alpha, det);
            // scattered photons per probe photon for one atom
            let scattered_per_photon = absorption_fraction(alpha, det);
            let ratio = phi1 * phi1 / scattered_per_photon;
            assert!(rel(ratio, alpha / 4.0) < 0.01);
        }
    }

    #[test]
    fn photon_flux_examples() {
        assert_eq!(photon_flux(0.0, 852.3e-9), 0.0);
        assert!(rel(photon_flux(5.0e-12, 852.3e-9), 2.145e7) < 5e-4);
        assert!(rel(photon_flux(154e-12, 852.3e-9), 6.61e8) < 5e-4);
    }

    #[test]
    fn quantum_efficiency_examples() {
        assert_eq!(quantum_efficiency(&DetectionChain::new(1.0, 0.0, 1.0, 1.0).unwrap()), 1.0);
        let q = DetectionChain::new(0.8, 0.2, 0.79, 0.79).unwrap().q();
        assert!((q - 0.40).abs() < 0.005);
        assert_eq!(DetectionChain::new(0.5, 1.0, 1.0, 1.0).unwrap().q(), 0.0);
        assert!(DetectionChain::new(1.1, 0.0, 1.0, 1.0).is_err());
        assert!(DetectionChain::new(f64::NAN, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn dispersion_peaks_at_one_halfwidth() {
        let (best, _) = (0..=40_000)
            .map(|i| -20.0 + i as f64 * 1e-3)
            .map(|det| (det, phase_shift(1.0, det).abs()))
            .fold((0.0, f64::MIN), |acc, x| if x.1 > acc.1 { x } else { acc });
        assert!((best.abs() - 1.0).abs() < 1.5e-3);
    }

    #[test]
    fn exact_single_atom_identity() {
        for &det in &[10.0, 17.5, 24.0, 100.0] {
            let alpha = 0.0164;
            let phi1 = single_atom_phase(alpha, det);
            let value = phi1 * phi1 * (1.0 + det * det) * (1.0 + det * det) / (alpha * alpha * det * det / 4.0);
            assert!((value - 1.0).abs() < 1e-12);
            let approx = phi1 * phi1 / absorption_fraction(alpha, det) / (alpha / 4.0);
            assert!((approx - 1.0).abs() < 2.0 / (det * det));
        }
    }

    #[test]
    fn probe_validation_and_warning() {
        assert!(ProbeConfig::new(24.0, -1.0, 852e-9, 5.23e6).is_err());
        assert!(ProbeConfig::new(24.0, 1e-12, 0.0, 5.23e6).is_err());
        let p = ProbeConfig::default();
        assert!(p.saturation_warning(DEFAULT_SATURATION_POWER_W).is_none());
        assert!(p.with_power(30e-9).saturation_warning(DEFAULT_SATURATION_POWER_W).is_some());
        assert!((p.detuning_hz() - 62.76e6).abs() < 1e3);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn antisymmetric_and_linear(d0 in 0.0..100.0f64, det in -100.0..100.0f64, a in 0.0..10.0f64) {
                prop_assert_eq!(phase_shift(d0, -det), -phase_shift(d0, det));
                let lhs = phase_shift(a * d0, det);
                let rhs = a * phase_shift(d0, det);
                prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-300));
            }

            #[test]
            fn q_monotone(e in 0.0..1.0f64, l in 0.0..1.0f64, v in 0.0..1.0f64, n in 0.0..1.0f64, step in 0.0..0.5f64) {
                let q = |e, l, v, n| DetectionChain { detector_qe: e, path_loss: l, mode_overlap: v, noise_ratio: n }.q();
                let base = q(e, l, v, n);
                let up = |x: f64| (x + step).min(1.0);
                let (qe, qv, qn, ql) = (q(up(e), l, v, n), q(e, l, up(v), n), q(e, l, v, up(n)), q(e, up(l), v, n));
                prop_assert!(qe >= base);
                prop_assert!(qv >= base);
                prop_assert!(qn >= base);
                prop_assert!(ql <= base);
                prop_assert!((0.0..=1.0).contains(&base));
            }
        }
    }
}
