//! Brute-force reference implementations used by the integration tests.

#![allow(dead_code)]

/// Binomial coefficient by repeated multiplication, exact for small `n`.
pub fn choose(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Probability that `m` atoms become `n` when each is lost with probability `p`.
pub fn thinning(m: usize, n: usize, p: f64) -> f64 {
    if n > m {
        return 0.0;
    }
    choose(m, n) * (1.0 - p).powi(n as i32) * p.powi((m - n) as i32)
}

pub fn gaussian_likelihood(phi: f64, k: f64, delta_phi: f64, n: usize) -> f64 {
    let z = (phi - k * n as f64) / delta_phi;
    (-0.5 * z * z).exp()
}

/// Filtered marginal after the last observation, from summing the joint
/// weight of every latent path `N_0 ≥ N_1 ≥ … ≥ N_L` explicitly.
pub fn hmm_enumeration(prior: &[f64], observations: &[f64], p: f64, k: f64, delta_phi: f64) -> Vec<f64> {
    let n_max = prior.len() - 1;
    let mut marginal = vec![0.0; n_max + 1];

    fn walk(
        depth: usize,
        current: usize,
        weight: f64,
        observations: &[f64],
        p: f64,
        k: f64,
        delta_phi: f64,
        marginal: &mut [f64],
    ) {
        if depth == observations.len() {
            marginal[current] += weight;
            return;
        }
        for next in 0..=current {
            let w = weight * thinning(current, next, p) * gaussian_likelihood(observations[depth], k, delta_phi, next);
            if w > 0.0 {
                walk(depth + 1, next, w, observations, p, k, delta_phi, marginal);
            }
        }
    }

    for (n0, &w0) in prior.iter().enumerate() {
        if w0 > 0.0 {
            walk(0, n0, w0, observations, p, k, delta_phi, &mut marginal);
        }
    }
    let total: f64 = marginal.iter().sum();
    marginal.iter().map(|m| m / total).collect()
}

pub fn mean_and_variance(probs: &[f64]) -> (f64, f64) {
    let mean: f64 = probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
    let var = probs.iter().enumerate().map(|(n, p)| (n as f64 - mean).powi(2) * p).sum();
    (mean, var)
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Minimizes a unimodal `f` on `[lo, hi]` by golden-section search.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Minimizes a smooth unimodal `f` on `[lo, hi]` by bisecting on the sign of
/// the central-difference slope with step `h`. Locates the argmin far more
/// tightly than comparing function values near a flat minimum.
pub fn slope_bisection(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, h: f64, tol: f64) -> f64 {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f(mid + h) > f(mid - h) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Sample mean and (unbiased) standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
