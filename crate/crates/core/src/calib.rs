//! Absolute atom-number calibration from optical-pumping transients.
//!
//! A resonant probe pumps atoms into a dark hyperfine state; each atom needs
//! on average `k_branch` scattering events to go dark. With constant input
//! flux `Φ` the optical depth obeys `d' = −(α·Φ/k)·(1 − e^{−d})`, solved by
//!
//! ```text
//! d(t) = ln(1 + (e^{d₀} − 1)·e^{−α·Φ·t/k}),    T(t) = e^{−d(t)}
//! ```
//!
//! with `d₀ = α·N`. Integrating the absorbed flux `Φ·(1 − T)` to full
//! transmission counts `k·N` scattered photons, which fixes `N` without
//! knowing `α`; fitting the whole transient gives both.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_non_negative, check_positive, invalid, Error, Result};
use crate::rng::rng_from_seed;

/// Mean scattering events to pump one atom into the dark state, from the
/// 7/12 : 5/12 excited-state branching.
pub const DEFAULT_K_BRANCH: f64 = 2.4;

/// Relative uncertainty of the input flux scale, propagated to `N` as a band.
pub const FLUX_SCALE_UNCERTAINTY: f64 = 0.10;

const MAX_ITERATIONS: usize = 200;

/// `ln(e^a − 1)` without overflow for large `a`.
fn ln_expm1(a: f64) -> f64 {
    if a > 1.0 {
        a + (-(-a).exp()).ln_1p()
    } else {
        a.exp_m1().ln()
    }
}

/// `ln(1 + e^z)`.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `1/(1 + e^z)`.
fn logistic_complement(z: f64) -> f64 {
    if z > 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// Exponent `z = ln(e^{αN} − 1) − α·Φ·t/k`, so that `T = 1/(1 + e^z)`.
fn transient_exponent(d0: f64, alpha_at: f64, flux: f64, k_branch: f64, t_s: f64) -> f64 {
    ln_expm1(d0) - alpha_at * flux * t_s / k_branch
}

fn check_model(n_atoms: f64, alpha_at: f64, flux: f64, k_branch: f64) -> Result<()> {
    check_positive("n_atoms", n_atoms)?;
    check_positive("alpha_at", alpha_at)?;
    check_positive("flux", flux)?;
    check_positive("k_branch", k_branch)
}

/// Probe transmission during the pumping transient.
pub fn transmission_model(n_atoms: f64, alpha_at: f64, flux: f64, k_branch: f64, t_s: f64) -> Result<f64> {
    check_model(n_atoms, alpha_at, flux, k_branch)?;
    check_non_negative("t_s", t_s)?;
    Ok(logistic_complement(transient_exponent(
        alpha_at * n_atoms,
        alpha_at,
        flux,
        k_branch,
        t_s,
    )))
}

/// Optical depth during the pumping transient, starting from `d0_initial`.
pub fn od_solution(d0_initial: f64, alpha_at: f64, flux: f64, k_branch: f64, t_s: f64) -> Result<f64> {
    check_positive("d0_initial", d0_initial)?;
    check_model(1.0, alpha_at, flux, k_branch)?;
    check_non_negative("t_s", t_s)?;
    Ok(softplus(transient_exponent(d0_initial, alpha_at, flux, k_branch, t_s)))
}

/// Number of atoms implied by the total count of scattered photons.
pub fn atoms_from_asymptote(total_scattered: f64, k_branch: f64) -> Result<f64> {
    check_non_negative("total_scattered", total_scattered)?;
    check_positive("k_branch", k_branch)?;
    Ok(total_scattered / k_branch)
}

/// A recorded (or synthesized) transmission transient at constant input flux.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpTransient {
    pub times_s: Vec<f64>,
    pub transmission: Vec<f64>,
    /// Input photon flux, 1/s.
    pub input_flux: f64,
    pub k_branch: f64,
}

impl PumpTransient {
    pub fn new(times_s: Vec<f64>, transmission: Vec<f64>, input_flux: f64, k_branch: f64) -> Result<Self> {
        if times_s.len() != transmission.len() {
            return Err(invalid("transmission", "length differs from times"));
        }
        if times_s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("times_s", "must be strictly increasing"));
        }
        if times_s.iter().chain(&transmission).any(|x| !x.is_finite()) {
            return Err(invalid("transient", "values must be finite"));
        }
        check_positive("input_flux", input_flux)?;
        if !(k_branch > 1.0) {
            return Err(invalid("k_branch", format!("{k_branch} must exceed 1")));
        }
        Ok(Self {
            times_s,
            transmission,
            input_flux,
            k_branch,
        })
    }

    /// Noiseless transient on `times_s`.
    pub fn model(n_atoms: f64, alpha_at: f64, flux: f64, k_branch: f64, times_s: Vec<f64>) -> Result<Self> {
        let transmission = times_s
            .iter()
            .map(|&t| transmission_model(n_atoms, alpha_at, flux, k_branch, t))
            .collect::<Result<Vec<_>>>()?;
        Self::new(times_s, transmission, flux, k_branch)
    }

    pub fn len(&self) -> usize {
        self.times_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_s.is_empty()
    }
}

/// Uniform time grid `0, dt, 2dt, ...` with `n` points.
pub fn time_grid(n: usize, dt_s: f64) -> Vec<f64> {
    (0..n).map(|i| i as f64 * dt_s).collect()
}

/// Standard deviation of a transmission estimate from one heterodyne bin.
///
/// Each field quadrature carries `1/(2q)` noise in photon-amplitude units,
/// referred to the input. With `n` input photons in the bin, the debiased
/// intensity estimate has variance `2T/(qn) + 1/(qn)²`.
pub fn heterodyne_transmission_sigma(transmission: f64, q: f64, photons_per_bin: f64) -> f64 {
    let qn = q * photons_per_bin;
    (2.0 * transmission.max(0.0) / qn + 1.0 / (qn * qn)).sqrt()
}

/// Adds independent Gaussian noise, `sigma(T)` per point.
pub fn add_transmission_noise(transient: &PumpTransient, seed: u64, sigma: impl Fn(f64) -> f64) -> PumpTransient {
    let mut rng = rng_from_seed(seed);
    let transmission = transient
        .transmission
        .iter()
        .map(|&t| {
            let z: f64 = StandardNormal.sample(&mut rng);
            t + sigma(t) * z
        })
        .collect();
    PumpTransient {
        transmission,
        ..transient.clone()
    }
}

/// Point-wise mean of transients recorded on the same grid.
pub fn average_transients(traces: &[PumpTransient]) -> Result<PumpTransient> {
    let first = traces
        .first()
        .ok_or_else(|| Error::InsufficientData("no transients to average".into()))?;
    if traces.iter().any(|t| t.times_s != first.times_s) {
        return Err(invalid("traces", "time grids differ"));
    }
    let mut mean = vec![0.0; first.len()];
    for t in traces {
        mean.iter_mut().zip(&t.transmission).for_each(|(m, x)| *m += x);
    }
    let scale = 1.0 / traces.len() as f64;
    mean.iter_mut().for_each(|m| *m *= scale);
    Ok(PumpTransient {
        transmission: mean,
        ..first.clone()
    })
}

/// Running trapezoidal integral of `Φ·(1 − T)`: scattered photons up to each sample.
pub fn cumulative_scattered(transient: &PumpTransient) -> Vec<f64> {
    let flux = transient.input_flux;
    let mut out = Vec::with_capacity(transient.len());
    let mut acc = 0.0;
    for i in 0..transient.len() {
        if i > 0 {
            let dt = transient.times_s[i] - transient.times_s[i - 1];
            let a = 1.0 - transient.transmission[i - 1];
            let b = 1.0 - transient.transmission[i];
            acc += 0.5 * dt * flux * (a + b);
        }
        out.push(acc);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibFit {
    pub n_atoms: f64,
    pub alpha_at: f64,
    pub stat_err_n: f64,
    pub stat_err_alpha: f64,
    /// Systematic half-width on `n_atoms` from the flux-scale uncertainty.
    pub sys_band_n: f64,
    /// Root of the residual sum of squares.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Model transmission and its gradient with respect to `(N, α)`.
fn model_and_gradient(n: f64, alpha: f64, flux: f64, k: f64, t: f64) -> (f64, [f64; 2]) {
    let a = alpha * n;
    let z = transient_exponent(a, alpha, flux, k, t);
    let tr = logistic_complement(z);
    // d/da ln(e^a − 1) = 1/(1 − e^{−a})
    let dl = -1.0 / (-a).exp_m1();
    let dt_dz = -tr * (1.0 - tr);
    let dz_dn = alpha * dl;
    let dz_dalpha = n * dl - flux * t / k;
    (tr, [dt_dz * dz_dn, dt_dz * dz_dalpha])
}

fn residual_sum(data: &PumpTransient, n: f64, alpha: f64) -> f64 {
    data.times_s
        .iter()
        .zip(&data.transmission)
        .map(|(&t, &y)| {
            let (m, _) = model_and_gradient(n, alpha, data.input_flux, data.k_branch, t);
            (m - y).powi(2)
        })
        .sum()
}

/// Closed-form starting point: `N` from the scattered-photon asymptote,
/// `α` from the initial absorption.
pub fn initial_guess(data: &PumpTransient) -> Result<(f64, f64)> {
    let total = *cumulative_scattered(data).last().unwrap_or(&0.0);
    let n0 = atoms_from_asymptote(total.max(0.0), data.k_branch)?;
    if !(n0 > 0.0) {
        return Err(Error::DegenerateData("no absorbed photons".into()));
    }
    let head = data.transmission.iter().take(5);
    let count = head.len() as f64;
    let t0 = (head.sum::<f64>() / count).clamp(1e-6, 0.5);
    Ok((n0, -t0.ln() / n0))
}

/// Least-squares fit of the transient model over `(N, α)`, damped
/// Gauss–Newton with Marquardt diagonal scaling.
pub fn fit_transient(data: &PumpTransient) -> Result<CalibFit> {
    if data.len() < 20 {
        return Err(Error::InsufficientData(format!("{} points, need at least 20", data.len())));
    }
    let lo = data.transmission.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = data.transmission.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo < 0.2 && hi > 0.9) {
        return Err(Error::DegenerateData(format!(
            "transmission spans [{lo:.3}, {hi:.3}], need values below 0.2 and above 0.9"
        )));
    }
    let (mut n, mut alpha) = initial_guess(data)?;
    let (flux, k) = (data.input_flux, data.k_branch);
    let mut cost = residual_sum(data, n, alpha);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (mut jtj, mut jtr) = ([[0.0; 2]; 2], [0.0; 2]);
        for (&t, &y) in data.times_s.iter().zip(&data.transmission) {
            let (m, g) = model_and_gradient(n, alpha, flux, k, t);
            let r = m - y;
            for i in 0..2 {
                jtr[i] += g[i] * r;
                for j in 0..2 {
                    jtj[i][j] += g[i] * g[j];
                }
            }
        }
        let mut accepted = false;
        while lambda < 1e16 {
            let a00 = jtj[0][0] * (1.0 + lambda);
            let a11 = jtj[1][1] * (1.0 + lambda);
            let a01 = jtj[0][1];
            let det = a00 * a11 - a01 * a01;
            if !(det.abs() > 0.0) {
                lambda *= 10.0;
                continue;
            }
            let dn = -(a11 * jtr[0] - a01 * jtr[1]) / det;
            let da = -(a00 * jtr[1] - a01 * jtr[0]) / det;
            let (n_try, a_try) = (n + dn, alpha + da);
            if n_try > 0.0 && a_try > 0.0 {
                let c = residual_sum(data, n_try, a_try);
                if c.is_finite() && c <= cost {
                    let small = dn.abs() <= 1e-12 * n.abs() && da.abs() <= 1e-12 * alpha.abs();
                    let flat = cost - c <= 1e-15 * cost.max(f64::MIN_POSITIVE);
                    n = n_try;
                    alpha = a_try;
                    cost = c;
                    lambda = (lambda * 0.1).max(1e-12);
                    accepted = true;
                    converged = small || flat;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no downhill step at any damping: a (numerical) stationary point
            converged = true;
        }
        if converged {
            break;
        }
    }

    // parameter covariance s²·(JᵀJ)⁻¹ at the solution
    let (mut jtj, dof) = ([[0.0; 2]; 2], data.len() as f64 - 2.0);
    for &t in &data.times_s {
        let (_, g) = model_and_gradient(n, alpha, flux, k, t);
        for i in 0..2 {
            for j in 0..2 {
                jtj[i][j] += g[i] * g[j];
            }
        }
    }
    let s2 = cost / dof;
    let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[0][1];
    let (var_n, var_a) = if det > 0.0 {
        (s2 * jtj[1][1] / det, s2 * jtj[0][0] / det)
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    Ok(CalibFit {
        n_atoms: n,
        alpha_at: alpha,
        stat_err_n: var_n.sqrt(),
        stat_err_alpha: var_a.sqrt(),
        sys_band_n: FLUX_SCALE_UNCERTAINTY * n,
        residual_norm: cost.sqrt(),
        iterations,
        converged,
    })
}
