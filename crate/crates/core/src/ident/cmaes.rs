//! Box-constrained (μ/μ_w, λ)-CMA-ES with cumulative step-size adaptation
//! and rank-one plus rank-μ covariance updates, optionally active (the
//! worst samples shrink the covariance along their directions).
//!
//! Out-of-box samples are redrawn a bounded number of times and then
//! projected onto the box; the projected point is what gets evaluated and
//! what enters the update, so every evaluated vector respects the bounds.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CmaesOptions {
    /// Population size λ; defaults to `4 + ⌊3 ln n⌋`.
    pub population: Option<usize>,
    pub sigma0: f64,
    pub max_evaluations: usize,
    pub seed: u64,
    /// Redraws of an out-of-box sample before projecting it.
    pub max_resample: usize,
    /// Stop once `σ·sqrt(max eigenvalue of C)` falls below this.
    pub tol_x: f64,
    /// Use negative covariance weights for the worst half of the population.
    pub active: bool,
}

impl Default for CmaesOptions {
    fn default() -> Self {
        Self {
            population: None,
            sigma0: 0.3,
            max_evaluations: 4000,
            seed: 0,
            max_resample: 20,
            tol_x: 1e-12,
            active: true,
        }
    }
}

/// Default population size for dimension `n`.
pub fn default_population(n: usize) -> usize {
    4 + (3.0 * (n.max(1) as f64).ln()).floor() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmaesOutcome {
    pub best_x: Vec<f64>,
    pub best_f: f64,
    pub evaluations: usize,
    pub generations: usize,
    /// Best-so-far objective after each generation.
    pub trace: Vec<f64>,
}

struct Strategy {
    n: usize,
    /// Recombination weights of the μ best samples.
    weights: Vec<f64>,
    /// Covariance weights of all λ samples, ranked; negative for the worst when active.
    cov_weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    chi_n: f64,
}

impl Strategy {
    fn new(n: usize, lambda: usize, active: bool) -> Self {
        let nf = n as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (0..lambda)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - ((i + 1) as f64).ln())
            .collect();
        let pos_sum: f64 = raw[..mu].iter().sum();
        let weights: Vec<f64> = raw[..mu].iter().map(|w| w / pos_sum).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1)
            .min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

        let mut cov_weights = weights.clone();
        let negative: Vec<f64> = raw[mu..].iter().copied().filter(|w| *w < 0.0).collect();
        if active && !negative.is_empty() && c_mu > 0.0 {
            let neg_sum: f64 = negative.iter().map(|w| w.abs()).sum();
            let neg_sq: f64 = negative.iter().map(|w| w * w).sum();
            let mu_eff_neg = neg_sum * neg_sum / neg_sq;
            let scale = (1.0 + c_1 / c_mu)
                .min(1.0 + 2.0 * mu_eff_neg / (mu_eff + 2.0))
                .min((1.0 - c_1 - c_mu) / (nf * c_mu));
            cov_weights.extend(raw[mu..].iter().map(|w| if *w < 0.0 { w * scale / neg_sum } else { 0.0 }));
        } else {
            cov_weights.resize(lambda, 0.0);
        }
        Self {
            n,
            weights,
            cov_weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
        }
    }
}

/// Minimize `objective` over the box `[lower, upper]` starting from `x0`.
///
/// Candidates of a generation are evaluated in parallel; results are
/// consumed in sampling order, so the outcome depends only on the seed.
/// `on_generation(generation, best_so_far)` is called after each generation.
pub fn minimize<F>(
    objective: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    options: &CmaesOptions,
    mut on_generation: impl FnMut(usize, f64),
) -> Result<CmaesOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = x0.len();
    if n == 0 || lower.len() != n || upper.len() != n {
        return Err(Error::Config("CMA-ES: inconsistent dimensions".into()));
    }
    if lower.iter().zip(upper).any(|(l, u)| !(l < u)) {
        return Err(Error::Config("CMA-ES: lower bounds must be below upper bounds".into()));
    }
    let lambda = options.population.unwrap_or_else(|| default_population(n));
    if lambda < 2 {
        return Err(Error::Config(format!("CMA-ES: population {lambda} is too small")));
    }
    if options.max_evaluations < lambda {
        return Err(Error::Config(format!(
            "CMA-ES: budget of {} evaluations is below the population size {lambda}",
            options.max_evaluations
        )));
    }
    if !(options.sigma0 > 0.0) {
        return Err(Error::Config("CMA-ES: sigma0 must be > 0".into()));
    }

    let s = Strategy::new(n, lambda, options.active);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut mean = DVector::from_iterator(n, x0.iter().zip(lower.iter().zip(upper)).map(|(x, (l, u))| x.clamp(*l, *u)));
    let mut sigma = options.sigma0;
    let mut cov = DMatrix::<f64>::identity(n, n);
    let mut p_sigma = DVector::<f64>::zeros(n);
    let mut p_c = DVector::<f64>::zeros(n);

    let mut best_x = mean.as_slice().to_vec();
    let mut best_f = f64::INFINITY;
    let mut evaluations = 0usize;
    let mut generation = 0usize;
    let mut trace = Vec::new();

    let in_box = |x: &DVector<f64>| x.iter().enumerate().all(|(i, v)| *v >= lower[i] && *v <= upper[i]);

    while evaluations + lambda <= options.max_evaluations {
        let eig = SymmetricEigen::new(cov.clone());
        let basis = eig.eigenvectors;
        let scales = eig.eigenvalues.map(|v| v.max(1e-300).sqrt());

        let mut steps: Vec<DVector<f64>> = Vec::with_capacity(lambda);
        let mut points: Vec<Vec<f64>> = Vec::with_capacity(lambda);
        for _ in 0..lambda {
            let mut attempt = 0;
            let x = loop {
                let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
                let y = &basis * z.component_mul(&scales);
                let x = &mean + &y * sigma;
                attempt += 1;
                if in_box(&x) || attempt > options.max_resample {
                    break x;
                }
            };
            let x = DVector::from_iterator(n, x.iter().enumerate().map(|(i, v)| v.clamp(lower[i], upper[i])));
            steps.push((&x - &mean) / sigma);
            points.push(x.as_slice().to_vec());
        }

        let values: Vec<f64> = points
            .par_iter()
            .map(|p| {
                let v = objective(p);
                if v.is_nan() {
                    f64::INFINITY
                } else {
                    v
                }
            })
            .collect();
        evaluations += lambda;
        generation += 1;

        let mut order: Vec<usize> = (0..lambda).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        if values[order[0]] < best_f {
            best_f = values[order[0]];
            best_x = points[order[0]].clone();
        }
        trace.push(best_f);
        on_generation(generation, best_f);

        let mut y_w = DVector::<f64>::zeros(n);
        for (w, &i) in s.weights.iter().zip(&order) {
            y_w += &steps[i] * *w;
        }
        mean += &y_w * sigma;

        let inv_scales = scales.map(|d| 1.0 / d);
        let c_inv_sqrt_yw = &basis * (basis.transpose() * &y_w).component_mul(&inv_scales);
        p_sigma = &p_sigma * (1.0 - s.c_sigma)
            + c_inv_sqrt_yw * (s.c_sigma * (2.0 - s.c_sigma) * s.mu_eff).sqrt();
        let ps_norm = p_sigma.norm();
        let h_sigma = ps_norm / (1.0 - (1.0 - s.c_sigma).powi(2 * generation as i32)).sqrt()
            < (1.4 + 2.0 / (s.n as f64 + 1.0)) * s.chi_n;
        let h = if h_sigma { 1.0 } else { 0.0 };
        p_c = &p_c * (1.0 - s.c_c) + &y_w * (h * (s.c_c * (2.0 - s.c_c) * s.mu_eff).sqrt());

        let mut rank_mu = DMatrix::<f64>::zeros(n, n);
        for (w, &i) in s.cov_weights.iter().zip(&order) {
            if *w == 0.0 {
                continue;
            }
            let w = if *w > 0.0 {
                *w
            } else {
                // Negative updates are rescaled to the Mahalanobis length of the step.
                let z = (basis.transpose() * &steps[i]).component_mul(&inv_scales);
                *w * n as f64 / z.norm_squared().max(1e-300)
            };
            rank_mu += &steps[i] * steps[i].transpose() * w;
        }
        let weight_sum: f64 = s.cov_weights.iter().sum();
        let decay = 1.0 - s.c_1 - s.c_mu * weight_sum + (1.0 - h) * s.c_1 * s.c_c * (2.0 - s.c_c);
        cov = &cov * decay + &p_c * p_c.transpose() * s.c_1 + rank_mu * s.c_mu;
        cov = (&cov + cov.transpose()) * 0.5;

        sigma *= ((s.c_sigma / s.d_sigma) * (ps_norm / s.chi_n - 1.0)).exp();
        // Keep the search distribution on the scale of the box.
        let width = upper
            .iter()
            .zip(lower)
            .map(|(u, l)| u - l)
            .fold(0.0, f64::max);
        sigma = sigma.min(width);

        let max_eig = eig.eigenvalues.max();
        if sigma * max_eig.max(0.0).sqrt() < options.tol_x || !sigma.is_finite() {
            break;
        }
    }

    Ok(CmaesOutcome {
        best_x,
        best_f,
        evaluations,
        generations: generation,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| (v - 0.3) * (v - 0.3)).sum()
    }

    fn rosenbrock(x: &[f64]) -> f64 {
        x.windows(2)
            .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
            .sum()
    }

    #[test]
    fn population_default() {
        assert_eq!(default_population(2), 6);
        assert_eq!(default_population(7), 9);
        assert_eq!(default_population(10), 10);
    }

    #[test]
    fn solves_sphere() {
        let opts = CmaesOptions {
            max_evaluations: 3000,
            ..Default::default()
        };
        let out = minimize(sphere, &[0.9; 5], &[0.0; 5], &[1.0; 5], &opts, |_, _| {}).unwrap();
        assert!(out.best_f < 1e-12, "{}", out.best_f);
    }

    #[test]
    fn solves_rosenbrock_in_box() {
        let opts = CmaesOptions {
            max_evaluations: 8000,
            sigma0: 0.5,
            seed: 3,
            ..Default::default()
        };
        let out = minimize(rosenbrock, &[-1.0; 4], &[-2.0; 4], &[2.0; 4], &opts, |_, _| {}).unwrap();
        assert!(out.best_f < 1e-8, "{}", out.best_f);
        for v in &out.best_x {
            assert!((v - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn optimum_on_boundary() {
        // Minimum at the corner (0, 0) of the box.
        let f = |x: &[f64]| x.iter().sum::<f64>();
        let out = minimize(f, &[0.5, 0.5], &[0.0; 2], &[1.0; 2], &CmaesOptions::default(), |_, _| {}).unwrap();
        assert!(out.best_f < 1e-6);
    }

    #[test]
    fn trace_is_monotone_and_budget_respected() {
        let opts = CmaesOptions {
            max_evaluations: 100,
            tol_x: 0.0,
            ..Default::default()
        };
        let out = minimize(sphere, &[0.9; 3], &[0.0; 3], &[1.0; 3], &opts, |_, _| {}).unwrap();
        assert!(out.evaluations <= 100);
        assert_eq!(out.evaluations, out.generations * default_population(3));
        assert!(out.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn evaluations_stay_in_box() {
        use std::sync::Mutex;
        let seen = Mutex::new(Vec::new());
        let f = |x: &[f64]| {
            seen.lock().unwrap().push(x.to_vec());
            -x[0] + x[1]
        };
        let opts = CmaesOptions {
            sigma0: 2.0,
            max_evaluations: 500,
            ..Default::default()
        };
        minimize(f, &[0.5, 0.5], &[0.0, 0.0], &[1.0, 1.0], &opts, |_, _| {}).unwrap();
        for x in seen.into_inner().unwrap() {
            assert!(x.iter().all(|v| (0.0..=1.0).contains(v)), "{x:?}");
        }
    }

    #[test]
    fn seeded_runs_repeat() {
        let opts = CmaesOptions {
            max_evaluations: 600,
            seed: 9,
            ..Default::default()
        };
        let a = minimize(rosenbrock, &[0.0; 3], &[-2.0; 3], &[2.0; 3], &opts, |_, _| {}).unwrap();
        let b = minimize(rosenbrock, &[0.0; 3], &[-2.0; 3], &[2.0; 3], &opts, |_, _| {}).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn budget_below_population_rejected() {
        let opts = CmaesOptions {
            max_evaluations: 3,
            ..Default::default()
        };
        assert!(minimize(sphere, &[0.5; 4], &[0.0; 4], &[1.0; 4], &opts, |_, _| {}).is_err());
    }
}
