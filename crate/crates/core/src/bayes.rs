//! Recursive Bayesian estimation of a discrete atom number.
//!
//! The filter state is a probability vector over `N = 0..=n_max`. Each step
//! first propagates it through the binomial loss kernel
//!
//! ```text
//! p'(n) = Σ_{m≥n} C(m, n)·(1−P)^n·P^(m−n)·p(m)
//! ```
//!
//! and then multiplies by the Gaussian likelihood of the new phase sample,
//! `exp(−(φ − k·N)² / (2·δφ²))`, renormalizing after both.
//!
//! For each source count `m` the kernel only enumerates losses within
//! `band_sigmas` standard deviations of `Binomial(m, P)` (at least 5 either
//! side), widened further where the omitted terms would still exceed ~1e-18 of
//! the row peak. Each truncated row is renormalized, so mass is conserved exactly.

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, check_range, invalid, Error, Result};

/// Default kernel half-width in binomial standard deviations.
pub const DEFAULT_BAND_SIGMAS: f64 = 10.0;
/// Smallest kernel half-width, in atoms.
pub const MIN_BAND_HALF_WIDTH: f64 = 5.0;
/// Kernel rows are widened until the next omitted term is below this
/// (natural-log) fraction of the row's peak.
const LN_TAIL_CUTOFF: f64 = -41.4; // ~1e-18

/// Measurements further than this many σ from all supported atom numbers
/// are treated as outliers and skipped.
pub const COLLAPSE_SIGMAS: f64 = 40.0;
/// dB value reported for a degenerate (zero-variance) distribution.
pub const FANO_DB_FLOOR: f64 = -100.0;

/// Probability mass over atom numbers `0..=n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    /// Normalizes `masses`. All entries must be finite and non-negative with
    /// a positive total.
    pub fn from_masses(masses: Vec<f64>) -> Result<Self> {
        if masses.is_empty() {
            return Err(invalid("masses", "empty support"));
        }
        if masses.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(invalid("masses", "entries must be finite and >= 0"));
        }
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) {
            return Err(invalid("masses", "total mass is zero"));
        }
        let mut d = Self { probs: masses };
        d.scale(1.0 / total);
        Ok(d)
    }

    pub fn uniform(n_max: usize) -> Self {
        let w = 1.0 / (n_max + 1) as f64;
        Self {
            probs: vec![w; n_max + 1],
        }
    }

    /// Uniform over `lo..=hi`, zero elsewhere on `0..=n_max`.
    pub fn uniform_range(lo: usize, hi: usize, n_max: usize) -> Result<Self> {
        if lo > hi || hi > n_max {
            return Err(invalid("range", format!("{lo}..={hi} not inside 0..={n_max}")));
        }
        let mut probs = vec![0.0; n_max + 1];
        probs[lo..=hi].fill(1.0);
        Self::from_masses(probs)
    }

    pub fn delta(n: usize, n_max: usize) -> Result<Self> {
        if n > n_max {
            return Err(invalid("n", format!("{n} exceeds n_max {n_max}")));
        }
        let mut probs = vec![0.0; n_max + 1];
        probs[n] = 1.0;
        Ok(Self { probs })
    }

    /// Poisson(λ) truncated to `0..=n_max` and renormalized.
    pub fn poisson(lambda: f64, n_max: usize) -> Result<Self> {
        check_positive("lambda", lambda)?;
        let table = LnFactorial::new(n_max);
        let log_masses: Vec<f64> = (0..=n_max)
            .map(|n| -lambda + n as f64 * lambda.ln() - table.get(n))
            .collect();
        let peak = log_masses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::from_masses(log_masses.iter().map(|l| (l - peak).exp()).collect())
    }

    pub fn n_max(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        let var: f64 = self
            .probs
            .iter()
            .enumerate()
            .map(|(n, p)| (n as f64 - mean).powi(2) * p)
            .sum();
        var.max(0.0)
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Total-variation distance, `½·Σ|p − q|`.
    pub fn total_variation(&self, other: &Self) -> f64 {
        let len = self.probs.len().max(other.probs.len());
        let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
        0.5 * (0..len)
            .map(|i| (get(&self.probs, i) - get(&other.probs, i)).abs())
            .sum::<f64>()
    }

    fn scale(&mut self, factor: f64) {
        self.probs.iter_mut().for_each(|p| *p *= factor);
    }

    fn normalize(&mut self) -> f64 {
        let total: f64 = self.probs.iter().sum();
        if total > 0.0 {
            self.scale(1.0 / total);
        }
        total
    }
}

/// `ln(n!)` for `n = 0..=n_max`.
struct LnFactorial(Vec<f64>);

impl LnFactorial {
    fn new(n_max: usize) -> Self {
        let mut table = Vec::with_capacity(n_max + 1);
        let mut acc = 0.0;
        table.push(0.0);
        for n in 1..=n_max {
            acc += (n as f64).ln();
            table.push(acc);
        }
        Self(table)
    }

    fn get(&self, n: usize) -> f64 {
        self.0[n]
    }
}

/// Banded binomial-thinning transition matrix for a fixed loss probability.
#[derive(Debug, Clone)]
pub struct ThinningKernel {
    loss_p: f64,
    band_sigmas: f64,
    /// For source count `m`: smallest enumerated loss count.
    first_loss: Vec<usize>,
    /// Row `m` occupies `weights[offsets[m]..offsets[m + 1]]`.
    offsets: Vec<usize>,
    weights: Vec<f64>,
}

impl ThinningKernel {
    pub fn new(n_max: usize, loss_p: f64, band_sigmas: f64) -> Result<Self> {
        check_range("loss_p", loss_p, 0.0, 1.0)?;
        check_positive("band_sigmas", band_sigmas)?;
        let ln_fact = LnFactorial::new(n_max);
        let (ln_p, ln_q) = (loss_p.ln(), (1.0 - loss_p).ln());

        let mut first_loss = Vec::with_capacity(n_max + 1);
        let mut offsets = Vec::with_capacity(n_max + 2);
        let mut weights = Vec::new();
        offsets.push(0);
        for m in 0..=n_max {
            let (mut lo, mut hi) = if loss_p == 0.0 {
                (0, 0)
            } else if loss_p == 1.0 {
                (m, m)
            } else {
                let centre = m as f64 * loss_p;
                let half = (band_sigmas * (centre * (1.0 - loss_p)).sqrt()).max(MIN_BAND_HALF_WIDTH);
                let lo = (centre - half).floor().max(0.0) as usize;
                let hi = ((centre + half).ceil() as usize).min(m);
                (lo, hi)
            };
            let ln_row = |j: usize| {
                ln_fact.get(m) - ln_fact.get(j) - ln_fact.get(m - j) + j as f64 * ln_p + (m - j) as f64 * ln_q
            };
            let start = weights.len();
            if lo == hi && (loss_p == 0.0 || loss_p == 1.0 || m == 0) {
                weights.push(1.0);
            } else {
                let mode = (((m + 1) as f64 * loss_p).floor() as usize).clamp(lo, hi);
                let floor = ln_row(mode) + LN_TAIL_CUTOFF;
                while lo > 0 && ln_row(lo - 1) > floor {
                    lo -= 1;
                }
                while hi < m && ln_row(hi + 1) > floor {
                    hi += 1;
                }
                let peak = (lo..=hi).map(ln_row).fold(f64::NEG_INFINITY, f64::max);
                weights.extend((lo..=hi).map(|j| (ln_row(j) - peak).exp()));
                let total: f64 = weights[start..].iter().sum();
                weights[start..].iter_mut().for_each(|w| *w /= total);
            }
            first_loss.push(lo);
            offsets.push(weights.len());
        }
        Ok(Self {
            loss_p,
            band_sigmas,
            first_loss,
            offsets,
            weights,
        })
    }

    pub fn loss_p(&self) -> f64 {
        self.loss_p
    }

    pub fn band_sigmas(&self) -> f64 {
        self.band_sigmas
    }

    pub fn n_max(&self) -> usize {
        self.first_loss.len() - 1
    }

    pub fn apply(&self, dist: &DiscreteDistribution) -> Result<DiscreteDistribution> {
        if dist.n_max() != self.n_max() {
            return Err(invalid(
                "dist",
                format!("support 0..={} does not match kernel 0..={}", dist.n_max(), self.n_max()),
            ));
        }
        let mut out = vec![0.0; dist.probs.len()];
        for (m, &p) in dist.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let row = &self.weights[self.offsets[m]..self.offsets[m + 1]];
            // losses j = first + i leave n = m − j atoms
            let top = m - self.first_loss[m];
            for (i, &w) in row.iter().enumerate() {
                out[top - i] += p * w;
            }
        }
        let mut next = DiscreteDistribution { probs: out };
        next.normalize();
        Ok(next)
    }
}

/// One prediction step with the default band width.
pub fn predict(dist: &DiscreteDistribution, loss_p: f64) -> Result<DiscreteDistribution> {
    predict_with_band(dist, loss_p, DEFAULT_BAND_SIGMAS)
}

pub fn predict_with_band(dist: &DiscreteDistribution, loss_p: f64, band_sigmas: f64) -> Result<DiscreteDistribution> {
    ThinningKernel::new(dist.n_max(), loss_p, band_sigmas)?.apply(dist)
}

/// Conditions `dist` on a phase sample `phi = k_phase·N + noise`, noise ~ N(0, δφ²).
pub fn update(dist: &DiscreteDistribution, phi: f64, k_phase: f64, delta_phi: f64) -> Result<DiscreteDistribution> {
    check_positive("delta_phi", delta_phi)?;
    if !phi.is_finite() || !k_phase.is_finite() {
        return Err(invalid("phi", "measurement and slope must be finite"));
    }
    let z = |n: usize| (phi - k_phase * n as f64) / delta_phi;
    let closest = dist
        .probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(n, _)| z(n).abs())
        .fold(f64::INFINITY, f64::min);
    if closest > COLLAPSE_SIGMAS {
        return Err(Error::LikelihoodCollapse { phi, sigmas: closest });
    }
    // shift the exponent so the most likely supported N has weight 1
    let offset = 0.5 * closest * closest;
    let probs = dist
        .probs
        .iter()
        .enumerate()
        .map(|(n, &p)| {
            if p == 0.0 {
                0.0
            } else {
                p * (offset - 0.5 * z(n).powi(2)).exp()
            }
        })
        .collect();
    let mut post = DiscreteDistribution { probs };
    if !(post.normalize() > 0.0) {
        return Err(Error::LikelihoodCollapse { phi, sigmas: closest });
    }
    Ok(post)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fano {
    pub fano: f64,
    pub fano_db: f64,
}

/// Converts a variance ratio to dB, floored for zero.
pub fn to_db(ratio: f64) -> f64 {
    if ratio > 0.0 {
        (10.0 * ratio.log10()).max(FANO_DB_FLOOR)
    } else {
        FANO_DB_FLOOR
    }
}

/// Variance over mean.
pub fn fano(dist: &DiscreteDistribution) -> Result<Fano> {
    let mean = dist.mean();
    if !(mean > 0.0) {
        return Err(Error::ZeroMean);
    }
    let f = dist.variance() / mean;
    Ok(Fano {
        fano: f,
        fano_db: to_db(f),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Phase per atom, rad.
    pub k_phase: f64,
    /// Per-step phase noise standard deviation, rad.
    pub delta_phi: f64,
    /// Per-atom loss probability per step.
    pub loss_p: f64,
    pub n_max: usize,
    pub band_sigmas: f64,
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        check_positive("delta_phi", self.delta_phi)?;
        if !(self.loss_p >= 0.0 && self.loss_p < 1.0) {
            return Err(invalid("loss_p", format!("{} not in [0, 1)", self.loss_p)));
        }
        if self.n_max < 1 {
            return Err(invalid("n_max", "must be >= 1"));
        }
        check_positive("band_sigmas", self.band_sigmas)?;
        if !self.k_phase.is_finite() {
            return Err(invalid("k_phase", "must be finite"));
        }
        Ok(())
    }
}

/// Posterior summary after one predict/update step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepEstimate {
    pub mean: f64,
    pub variance: f64,
    pub fano: f64,
    pub fano_db: f64,
    /// The measurement was an outlier and only the prediction was kept.
    pub update_skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterOutput {
    /// Entry `i` is step `l = i + 1`.
    pub steps: Vec<StepEstimate>,
    pub min_fano_db: f64,
    /// 1-based step index of the minimum; 0 if no step had a positive mean.
    pub step_of_min: usize,
    /// Expected fraction of atoms lost by `step_of_min`, `1 − Π(1 − P_l)`.
    pub loss_fraction_at_min: f64,
    pub skipped_updates: Vec<usize>,
    pub posterior: DiscreteDistribution,
}

impl FilterOutput {
    pub fn min_step(&self) -> Option<&StepEstimate> {
        self.step_of_min.checked_sub(1).map(|i| &self.steps[i])
    }
}

/// Sequential filter: one `step` per phase sample.
#[derive(Debug, Clone)]
pub struct BayesFilter {
    config: FilterConfig,
    kernel: ThinningKernel,
    dist: DiscreteDistribution,
    survival: f64,
}

impl BayesFilter {
    pub fn new(config: FilterConfig, prior: DiscreteDistribution) -> Result<Self> {
        config.validate()?;
        if prior.n_max() != config.n_max {
            return Err(invalid(
                "prior",
                format!("support 0..={} does not match n_max {}", prior.n_max(), config.n_max),
            ));
        }
        Ok(Self {
            kernel: ThinningKernel::new(config.n_max, config.loss_p, config.band_sigmas)?,
            config,
            dist: prior,
            survival: 1.0,
        })
    }

    pub fn distribution(&self) -> &DiscreteDistribution {
        &self.dist
    }

    /// Expected surviving fraction so far.
    pub fn survival(&self) -> f64 {
        self.survival
    }

    /// Predict with the configured loss probability, then update.
    pub fn step(&mut self, phi: f64) -> Result<StepEstimate> {
        self.step_with_loss(phi, self.config.loss_p)
    }

    /// Predict with `loss_p` for this step only, then update.
    pub fn step_with_loss(&mut self, phi: f64, loss_p: f64) -> Result<StepEstimate> {
        if loss_p != self.kernel.loss_p() {
            self.kernel = ThinningKernel::new(self.config.n_max, loss_p, self.config.band_sigmas)?;
        }
        let predicted = self.kernel.apply(&self.dist)?;
        self.survival *= 1.0 - loss_p;
        let (next, skipped) = match update(&predicted, phi, self.config.k_phase, self.config.delta_phi) {
            Ok(post) => (post, false),
            Err(Error::LikelihoodCollapse { .. }) => (predicted, true),
            Err(e) => return Err(e),
        };
        self.dist = next;
        let (fano, fano_db) = match fano(&self.dist) {
            Ok(f) => (f.fano, f.fano_db),
            Err(_) => (0.0, FANO_DB_FLOOR),
        };
        Ok(StepEstimate {
            mean: self.dist.mean(),
            variance: self.dist.variance(),
            fano,
            fano_db,
            update_skipped: skipped,
        })
    }
}

/// Runs the filter over all observations with a constant loss probability.
pub fn run_filter(observations: &[f64], config: &FilterConfig, prior: DiscreteDistribution) -> Result<FilterOutput> {
    run_filter_with_losses(observations, config, prior, None)
}

/// Like [`run_filter`], optionally with one loss probability per step.
pub fn run_filter_with_losses(
    observations: &[f64],
    config: &FilterConfig,
    prior: DiscreteDistribution,
    losses: Option<&[f64]>,
) -> Result<FilterOutput> {
    if let Some(l) = losses {
        if l.len() != observations.len() {
            return Err(invalid("losses", "one loss probability per observation required"));
        }
    }
    let mut filter = BayesFilter::new(*config, prior)?;
    let mut steps = Vec::with_capacity(observations.len());
    let mut skipped_updates = Vec::new();
    let mut best = (f64::INFINITY, 0usize, 0.0);
    for (i, &phi) in observations.iter().enumerate() {
        let loss_p = losses.map_or(config.loss_p, |l| l[i]);
        let est = filter.step_with_loss(phi, loss_p)?;
        if est.update_skipped {
            skipped_updates.push(i + 1);
        }
        if est.mean > 0.0 && est.fano_db < best.0 {
            best = (est.fano_db, i + 1, 1.0 - filter.survival());
        }
        steps.push(est);
    }
    Ok(FilterOutput {
        steps,
        min_fano_db: if best.1 > 0 { best.0 } else { f64::NAN },
        step_of_min: best.1,
        loss_fraction_at_min: best.2,
        skipped_updates,
        posterior: filter.dist,
    })
}
