//! Control-theoretic (LQG) broadcast feedback code.
//!
//! The transmitter runs the unstable system `s ← A·s + z` with
//! `A = diag(a_1, …, a_L)`, starting from the message vector and
//! stabilising it with `x = −c·s`, where `c` comes from the discrete
//! algebraic Riccati equation. Receiver `l` runs `Ŝ ← a_l·Ŝ + y_l` and reads
//! its message off `−a_l^{−N}·Ŝ`.

use nalgebra::{DMatrix, DVector};

use crate::channel::{ChannelConfig, TrialTape};
use crate::error::{Error, Result};
use crate::linear::{Basis, LinearForm};
use crate::modulation::PamConstellation;
use crate::roots::{bisect, golden_section};
use crate::scheme::FeedbackCode;

/// Second moment of the message: that of a uniform variable on `[0, 1]`.
pub const MESSAGE_POWER: f64 = 1.0 / 3.0;

const RICCATI_TOL: f64 = 1e-12;
const RICCATI_MAX_ITER: usize = 100_000;

/// Riccati solution and the resulting feedback gain row.
#[derive(Debug, Clone)]
pub struct RiccatiGain {
    pub g: DMatrix<f64>,
    pub c: DVector<f64>,
    pub iterations: usize,
}

fn riccati_map(a: &DMatrix<f64>, b: &DVector<f64>, g: &DMatrix<f64>) -> DMatrix<f64> {
    let gb = g * b;
    let denom = b.dot(&gb) + 1.0;
    let atgb = a.transpose() * &gb;
    a.transpose() * g * a - (&atgb * atgb.transpose()) / denom
}

/// Frobenius residual of the Riccati fixed point at `g`.
pub fn riccati_residual(a: &DMatrix<f64>, b: &DVector<f64>, g: &DMatrix<f64>) -> f64 {
    (riccati_map(a, b, g) - g).norm()
}

/// Solve `G = AᵀGA − AᵀGb(bᵀGb+1)⁻¹bᵀGA` by fixed-point iteration from the
/// identity, and return `c = (bᵀGb+1)⁻¹bᵀGA`.
pub fn riccati_gain(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<RiccatiGain> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::validation("Riccati: A must be square and match b"));
    }
    let mut g = DMatrix::<f64>::identity(n, n);
    for it in 1..=RICCATI_MAX_ITER {
        let mut next = riccati_map(a, b, &g);
        next = (&next + next.transpose()) * 0.5;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::solver("Riccati iteration diverged"));
        }
        let change = (&next - &g).norm();
        g = next;
        if change <= RICCATI_TOL * g.norm() {
            let gb = &g * b;
            let denom = b.dot(&gb) + 1.0;
            let c = (a.transpose() * gb) / denom;
            return Ok(RiccatiGain { g, c, iterations: it });
        }
    }
    Err(Error::solver(format!(
        "Riccati iteration did not converge in {RICCATI_MAX_ITER} steps"
    )))
}

/// Two-user system matrices `A = diag(a, −a)`, `b = (1, 1)`.
pub fn two_user_system(a: f64) -> (DMatrix<f64>, DVector<f64>) {
    (
        DMatrix::from_diagonal(&DVector::from_vec(vec![a, -a])),
        DVector::from_element(2, 1.0),
    )
}

/// Left side of the asymptotic two-user power equation,
/// `(a⁴−1)(a²+1)/(2a²)`, equal to the stationary power over the noise variance.
pub fn asymptotic_power_ratio(a: f64) -> f64 {
    let a2 = a * a;
    (a2 * a2 - 1.0) * (a2 + 1.0) / (2.0 * a2)
}

/// Root `a > 1` of `(a⁴−1)(a²+1)/(2a²) = snr`.
pub fn find_a_asymptotic(snr: f64) -> Result<f64> {
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(Error::validation(format!("SNR must be positive, got {snr}")));
    }
    let mut hi = 2.0;
    while asymptotic_power_ratio(hi) < snr {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::solver("could not bracket the asymptotic a"));
        }
    }
    bisect(|a| asymptotic_power_ratio(a) - snr, 1.0, hi, 400)
}

/// Average power over `N` uses for the two-user code with parameter `a`,
/// computed from the closed-loop state covariance.
pub fn average_power(a: f64, noise_var: f64, uses: usize, message_power: f64) -> Result<f64> {
    let (am, b) = two_user_system(a);
    let gain = riccati_gain(&am, &b)?;
    let c = gain.c;
    let acl = &am - &b * c.transpose();
    let mut sigma = DMatrix::<f64>::identity(2, 2) * message_power;
    let noise = DMatrix::<f64>::identity(2, 2) * noise_var;
    let mut total = 0.0;
    for _ in 0..uses {
        total += (c.transpose() * &sigma * &c)[(0, 0)];
        sigma = &acl * sigma * acl.transpose() + &noise;
    }
    Ok(total / uses as f64)
}

/// Relative power tolerance for the finite-blocklength search.
pub const POWER_SEARCH_TOL: f64 = 5e-3;

/// Finite-`N` parameter: golden-section search of `|avg power − P|`.
///
/// `noise_var` is the variance of the per-user feedback the transmitter
/// integrates, `σ_b² + σ_f²`.
pub fn find_a_two_user(power: f64, noise_var: f64, uses: usize, message_power: f64) -> Result<f64> {
    let lo = 1.0 + 1e-9;
    let mut hi = 2.0;
    while average_power(hi, noise_var, uses, message_power)? < power {
        hi *= 2.0;
        if hi > 1e4 {
            return Err(Error::solver("could not bracket the LQG parameter"));
        }
    }
    let a = golden_section(
        |a| {
            average_power(a, noise_var, uses, message_power)
                .map(|p| (p - power).abs())
                .unwrap_or(f64::INFINITY)
        },
        lo,
        hi,
        1e-13,
        400,
    );
    let got = average_power(a, noise_var, uses, message_power)?;
    if (got - power).abs() > POWER_SEARCH_TOL * power {
        return Err(Error::solver(format!(
            "LQG power search missed: {got} vs budget {power} (a = {a})"
        )));
    }
    Ok(a)
}

/// Symmetric-rate solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqgRateSolution {
    /// Cooperation factor in `[1, L]`.
    pub phi: f64,
    /// Sum rate `½·log2(1 + P·φ)` in bits per use.
    pub sum_rate: f64,
    /// Per-user rate, `sum_rate / L`.
    pub rate: f64,
    /// `|(L−1)·ln(1+Pφ) − L·ln(1 + (P/L)·φ(L−φ))|` at the returned `φ`.
    pub residual: f64,
}

fn phi_equation(phi: f64, snr: f64, l: f64) -> f64 {
    (l - 1.0) * (snr * phi).ln_1p() - l * (snr / l * phi * (l - phi)).ln_1p()
}

/// Solve `(1+Pφ)^{L−1} = (1 + (P/L)·φ(L−φ))^L` for `φ ∈ [1, L]`.
pub fn lqg_symmetric_rate(snr: f64, users: usize) -> Result<LqgRateSolution> {
    if !(snr > 0.0 && snr.is_finite()) || users == 0 {
        return Err(Error::validation("rate bound needs SNR > 0 and L >= 1"));
    }
    let l = users as f64;
    let phi = if users == 1 {
        1.0
    } else {
        bisect(|p| phi_equation(p, snr, l), 1.0, l, 400)?
    };
    let sum_rate = 0.5 * (snr * phi).ln_1p() / std::f64::consts::LN_2;
    Ok(LqgRateSolution {
        phi,
        sum_rate,
        rate: sum_rate / l,
        residual: phi_equation(phi, snr, l).abs(),
    })
}

/// Per-configuration LQG design for two users.
#[derive(Debug, Clone)]
pub struct LqgDesign {
    pub a: f64,
    pub gain: RiccatiGain,
    pub uses: usize,
    pub message_power: f64,
    pam: PamConstellation,
    /// Exact error variance of each user's estimate.
    error_var: [f64; 2],
}

impl LqgDesign {
    pub fn new(cfg: &ChannelConfig, bits: u32) -> Result<Self> {
        cfg.validate()?;
        if cfg.users != 2 {
            return Err(Error::mismatch("lqg", format!("needs 2 users, got {}", cfg.users)));
        }
        let v = MESSAGE_POWER;
        let a = find_a_two_user(cfg.power, cfg.sigma_b2 + cfg.sigma_f2, cfg.uses, v)?;
        Self::with_a(cfg, bits, a)
    }

    /// Design with a given `a` (no power search).
    pub fn with_a(cfg: &ChannelConfig, bits: u32, a: f64) -> Result<Self> {
        if cfg.users != 2 {
            return Err(Error::mismatch("lqg", format!("needs 2 users, got {}", cfg.users)));
        }
        if a.is_nan() || a <= 1.0 {
            return Err(Error::validation(format!("LQG needs a > 1, got {a}")));
        }
        let (am, b) = two_user_system(a);
        let gain = riccati_gain(&am, &b)?;
        let v = MESSAGE_POWER;
        let pam = PamConstellation::new(bits, v)?;
        let mut design = LqgDesign {
            a,
            gain,
            uses: cfg.uses,
            message_power: v,
            pam,
            error_var: [0.0; 2],
        };
        let basis = Basis::new(2, cfg.uses, v, cfg.sigma_b2, cfg.sigma_f2);
        let errs = design.error_forms(&basis);
        design.error_var = [basis.var(&errs[0]), basis.var(&errs[1])];
        Ok(design)
    }

    pub fn poles(&self) -> [f64; 2] {
        [self.a, -self.a]
    }

    pub fn constellation(&self) -> &PamConstellation {
        &self.pam
    }

    /// Estimation errors `Θ̂_l − Θ_l` as linear forms.
    fn error_forms(&self, basis: &Basis) -> [LinearForm; 2] {
        let poles = self.poles();
        let c = &self.gain.c;
        let mut s = [basis.unit(basis.theta(0)), basis.unit(basis.theta(1))];
        let mut s_hat = [basis.zero(), basis.zero()];
        for t in 0..self.uses {
            let mut x = s[0].scaled(-c[0]);
            x.axpy(-c[1], &s[1]);
            for l in 0..2 {
                let y = x.plus(&basis.unit(basis.n_b(l, t)));
                let z = y.plus(&basis.unit(basis.n_f(l, t)));
                s[l] = s[l].scaled(poles[l]).plus(&z);
                s_hat[l] = s_hat[l].scaled(poles[l]).plus(&y);
            }
        }
        let n = self.uses as i32;
        [0, 1].map(|l| {
            let mut e = s_hat[l].scaled(-poles[l].powi(-n));
            e.axpy(-1.0, &basis.unit(basis.theta(l)));
            e
        })
    }

    pub fn error_variance(&self, user: usize) -> f64 {
        self.error_var[user]
    }

    /// `E[Θ²] / E[(Θ̂ − Θ)²]`.
    pub fn output_snr(&self, user: usize) -> f64 {
        self.message_power / self.error_var[user]
    }

    /// Run one trial for message symbols `theta` and return the estimates.
    pub fn run_symbols(&self, theta: [f64; 2], tape: &mut TrialTape) -> Result<[f64; 2]> {
        if tape.users() != 2 || tape.uses() != self.uses {
            return Err(Error::mismatch("lqg", "tape shape does not match the design"));
        }
        let poles = self.poles();
        let c = &self.gain.c;
        let mut s = theta;
        let mut s_hat = [0.0; 2];
        for _ in 0..self.uses {
            let x = -(c[0] * s[0] + c[1] * s[1]);
            let t = tape.send(x)?;
            for l in 0..2 {
                s[l] = poles[l] * s[l] + tape.z(l, t);
                s_hat[l] = poles[l] * s_hat[l] + tape.y(l, t);
            }
        }
        let n = self.uses as i32;
        Ok([0, 1].map(|l| -s_hat[l] * poles[l].powi(-n)))
    }
}

impl FeedbackCode for LqgDesign {
    fn name(&self) -> &str {
        "lqg"
    }

    fn users(&self) -> usize {
        2
    }

    fn uses(&self) -> usize {
        self.uses
    }

    fn bits(&self) -> u32 {
        self.pam.bits()
    }

    fn run(&self, words: &[u32], tape: &mut TrialTape) -> Result<Vec<u32>> {
        if words.len() != 2 {
            return Err(Error::mismatch("lqg", "needs one word per user"));
        }
        let theta = [self.pam.map(words[0])?, self.pam.map(words[1])?];
        let est = self.run_symbols(theta, tape)?;
        Ok(est.iter().map(|&v| self.pam.demap(v)).collect())
    }
}
