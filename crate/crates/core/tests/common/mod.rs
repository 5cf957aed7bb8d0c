#![allow(dead_code)]

use std::time::Instant;

/// Closed-form static boundaries of the load-dependent model,
/// `|τ_m + τ_e| = K_c + K_l·|τ_m − τ_e|`, for `K_l < 1`.
///
/// Each side is linear on either side of `τ_e = τ_m`; the root is the
/// piece whose solution lies on its own half-line.
pub fn m3_boundaries(k_c: f64, k_l: f64, tau_m: f64) -> (f64, f64) {
    let pick = |below: f64, above: f64| if below <= tau_m { below } else { above };
    let drive = pick(
        (k_c - tau_m * (1.0 - k_l)) / (1.0 + k_l),
        (k_c - tau_m * (1.0 + k_l)) / (1.0 - k_l),
    );
    let backdrive = pick(
        -(k_c + tau_m * (1.0 + k_l)) / (1.0 - k_l),
        -(k_c + tau_m * (1.0 - k_l)) / (1.0 + k_l),
    );
    (drive, backdrive)
}

/// Least-squares line fit; returns `(slope, intercept, r²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - (slope * a + intercept)).powi(2))
        .sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    (slope, intercept, r2)
}

/// Folded-normal mean `σ·√(2/π)`.
pub fn noise_floor(sigma: f64) -> f64 {
    sigma * (2.0 / std::f64::consts::PI).sqrt()
}

pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}
