//! Closed-form single-step measurement budget.
//!
//! The variance of an atom-number estimate after scattering `n_sc` photons per
//! atom combines the information gain of the dispersive measurement with the
//! binomial noise of probe-induced loss:
//!
//! ```text
//! (ΔN)² = (1/(ΔN_i)² + q·α·n_sc)⁻¹ + N·n_sc/n_loss
//! ```
//!
//! For spin squeezing the loss term is dropped, the prior is the coherent
//! state's `N/4` and the Ramsey contrast penalty `e^{n_sc}` is applied:
//! `ξ = e^{n_sc} / (1 + q·d₀·n_sc/4)`.

use serde::{Deserialize, Serialize};

use crate::bayes::to_db;
use crate::error::{check_non_negative, check_positive, invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetParams {
    /// Prior variance `(ΔN_i)²`; `f64::INFINITY` for an uninformative prior.
    pub prior_var: f64,
    pub q: f64,
    pub alpha_at: f64,
    pub n_atoms: f64,
    /// Scattering events per lost atom; infinite disables loss.
    pub n_loss: f64,
    /// Photons scattered per atom.
    pub n_sc: f64,
}

impl BudgetParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(invalid("q", format!("{} not in (0, 1]", self.q)));
        }
        check_positive("alpha_at", self.alpha_at)?;
        check_positive("n_atoms", self.n_atoms)?;
        check_positive("n_loss", self.n_loss)?;
        check_non_negative("n_sc", self.n_sc)?;
        check_positive("prior_var", self.prior_var)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezeParams {
    pub q: f64,
    /// Ensemble on-resonance optical depth.
    pub d0: f64,
    pub n_sc: f64,
}

/// Variance of the single-step atom-number estimator.
pub fn estimator_variance(p: &BudgetParams) -> Result<f64> {
    p.validate()?;
    let information = 1.0 / p.prior_var + p.q * p.alpha_at * p.n_sc;
    let loss = if p.n_loss.is_infinite() {
        0.0
    } else {
        p.n_atoms * p.n_sc / p.n_loss
    };
    Ok(1.0 / information + loss)
}

/// Scattered photons per atom minimizing the variance for an uninformative prior.
pub fn optimal_nsc(n_atoms: f64, q: f64, alpha_at: f64, n_loss: f64) -> Result<f64> {
    check_all_positive(n_atoms, q, alpha_at, n_loss)?;
    Ok((n_loss / (n_atoms * q * alpha_at)).sqrt())
}

/// Variance at [`optimal_nsc`], `sqrt(4N/(n_loss·q·α))`.
pub fn min_variance(n_atoms: f64, q: f64, alpha_at: f64, n_loss: f64) -> Result<f64> {
    check_all_positive(n_atoms, q, alpha_at, n_loss)?;
    Ok((4.0 * n_atoms / (n_loss * q * alpha_at)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinFano {
    pub fano: f64,
    pub fano_db: f64,
}

/// Smallest Fano factor reachable in one step, `sqrt(4/(N·n_loss·q·α))`.
pub fn min_fano(n_atoms: f64, q: f64, alpha_at: f64, n_loss: f64) -> Result<MinFano> {
    check_all_positive(n_atoms, q, alpha_at, n_loss)?;
    let fano = (4.0 / (n_atoms * n_loss * q * alpha_at)).sqrt();
    Ok(MinFano {
        fano,
        fano_db: to_db(fano),
    })
}

/// Harmonic combination of hyperfine pumping and heating budgets, the loss
/// relevant when repump light cannot be used.
pub fn tomography_nloss(n_hf: f64, n_heat: f64) -> Result<f64> {
    check_positive("n_hf", n_hf)?;
    check_positive("n_heat", n_heat)?;
    Ok(1.0 / (1.0 / n_hf + 1.0 / n_heat))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Squeezing {
    pub xi: f64,
    pub xi_db: f64,
}

/// Metrological squeezing after scattering `n_sc` photons per atom.
pub fn squeezing(n_sc: f64, q: f64, d0: f64) -> Result<Squeezing> {
    check_non_negative("n_sc", n_sc)?;
    check_non_negative("q", q)?;
    check_non_negative("d0", d0)?;
    let xi = n_sc.exp() / (1.0 + q * d0 * n_sc / 4.0);
    Ok(Squeezing { xi, xi_db: to_db(xi) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalSqueezing {
    pub n_sc: f64,
    pub xi: f64,
    pub xi_db: f64,
}

/// Minimizes [`squeezing`] over `n_sc`: `n_sc = max(0, 1 − 4/(q·d₀))`.
pub fn optimal_squeezing(q: f64, d0: f64) -> Result<OptimalSqueezing> {
    check_positive("q", q)?;
    check_positive("d0", d0)?;
    let n_sc = (1.0 - 4.0 / (q * d0)).max(0.0);
    let s = squeezing(n_sc, q, d0)?;
    Ok(OptimalSqueezing {
        n_sc,
        xi: s.xi,
        xi_db: s.xi_db,
    })
}

/// Squeezing is possible at all only when `q·d₀ > 4`.
pub fn squeezing_threshold_ok(q: f64, d0: f64) -> bool {
    q * d0 > 4.0
}

fn check_all_positive(n_atoms: f64, q: f64, alpha_at: f64, n_loss: f64) -> Result<()> {
    check_positive("n_atoms", n_atoms)?;
    check_positive("q", q)?;
    check_positive("alpha_at", alpha_at)?;
    check_positive("n_loss", n_loss)
}

/// Named parameter sets for the three measurement tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Atom-number preparation with repump light: loss from heating only.
    Preparation,
    /// State tomography: half the population in the probed level, loss
    /// from heating and hyperfine pumping.
    Tomography,
    /// Squeezing of a coherent spin state probed on the cycling transition.
    Squeezing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PresetParams {
    pub n_atoms: f64,
    pub n_loss: f64,
    pub q: f64,
    pub alpha_at: f64,
}

impl Preset {
    pub fn params(self, n_total: f64, q: f64, alpha_at: f64) -> PresetParams {
        match self {
            Preset::Preparation => PresetParams {
                n_atoms: n_total,
                n_loss: 56.0,
                q,
                alpha_at,
            },
            Preset::Tomography => PresetParams {
                n_atoms: n_total / 2.0,
                n_loss: 30.0,
                q,
                alpha_at,
            },
            Preset::Squeezing => PresetParams {
                n_atoms: n_total,
                n_loss: f64::INFINITY,
                q,
                alpha_at,
            },
        }
    }
}
