//! Small statistics helpers: the Gaussian tail function, Wilson intervals
//! and closed-form PAM error rates.

use libm::erfc;

/// `Q(x) = P[N(0,1) > x]`.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Symbol error probability of nearest-point detection for `2^bits`-PAM in
/// additive Gaussian noise, as a function of the symbol SNR
/// `E[Θ²] / noise variance`: `2(1 − 2^−K) Q(√(3·SNR/(2^{2K} − 1)))`.
pub fn pam_symbol_error(bits: f64, snr: f64) -> f64 {
    let m = 2f64.powf(bits);
    2.0 * (1.0 - 1.0 / m) * q_function((3.0 * snr / (m * m - 1.0)).sqrt())
}

/// 95% Wilson score interval for `errors` out of `trials`.
pub fn wilson_interval(errors: u64, trials: u64) -> (f64, f64) {
    wilson_interval_z(errors, trials, 1.959_963_984_540_054)
}

pub fn wilson_interval_z(errors: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if errors == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if errors == trials { 1.0 } else { (centre + half).min(1.0) };
    (lo.min(p), hi.max(p))
}

/// Binomial standard error `sqrt(p(1-p)/n)`.
pub fn binomial_se(p: f64, trials: u64) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}
