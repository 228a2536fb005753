//! AWGN broadcast channel with passive noisy feedback.
//!
//! The forward link delivers `y_l[t] = x[t] + n_l^b[t]` to every receiver and
//! each receiver echoes its observation back as `z_l[t] = y_l[t] + n_l^f[t]`.
//! Noise for a whole trial is drawn up front (per user and channel use, even
//! when a scheme ignores some observations), so a [`TrialTape`] built from the
//! same `(seed, trial)` pair carries the same noise for every scheme with the
//! same `(L, N)`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Per-trial random stream.
pub type TrialRng = ChaCha8Rng;

/// Channel parameters shared by every scheme and by the power audit.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    /// Number of receivers `L`.
    pub users: usize,
    /// Channel uses per block `N`.
    pub uses: usize,
    /// Average power budget `P` (linear).
    pub power: f64,
    /// Forward noise variance.
    pub sigma_b2: f64,
    /// Feedback noise variance; zero means perfect feedback.
    pub sigma_f2: f64,
    pub seed: u64,
}

impl ChannelConfig {
    pub fn new(
        users: usize,
        uses: usize,
        power: f64,
        sigma_b2: f64,
        sigma_f2: f64,
        seed: u64,
    ) -> Result<Self> {
        let cfg = ChannelConfig {
            users,
            uses,
            power,
            sigma_b2,
            sigma_f2,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Build a configuration from a forward SNR in dB and a feedback noise
    /// power in dB (`None` = perfect feedback), with `P` as given.
    pub fn from_db(
        users: usize,
        uses: usize,
        power: f64,
        snr_b_db: f64,
        sigma_f2_db: Option<f64>,
        seed: u64,
    ) -> Result<Self> {
        let sigma_b2 = power / db_to_linear(snr_b_db);
        let sigma_f2 = sigma_f2_db.map_or(0.0, db_to_linear);
        Self::new(users, uses, power, sigma_b2, sigma_f2, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.users < 1 {
            return Err(Error::validation("user count L must be at least 1"));
        }
        if self.uses < 1 {
            return Err(Error::validation("channel uses N must be at least 1"));
        }
        if !(self.power > 0.0 && self.power.is_finite()) {
            return Err(Error::validation(format!(
                "power P must be positive, got {}",
                self.power
            )));
        }
        if !(self.sigma_b2 > 0.0 && self.sigma_b2.is_finite()) {
            return Err(Error::validation(format!(
                "forward noise variance must be positive, got {}",
                self.sigma_b2
            )));
        }
        if !(self.sigma_f2 >= 0.0 && self.sigma_f2.is_finite()) {
            return Err(Error::validation(format!(
                "feedback noise variance must be non-negative, got {}",
                self.sigma_f2
            )));
        }
        Ok(())
    }

    /// Forward SNR `P / sigma_b^2` (linear).
    pub fn snr(&self) -> f64 {
        self.power / self.sigma_b2
    }

    pub fn with_users_uses(&self, users: usize, uses: usize) -> Self {
        ChannelConfig {
            users,
            uses,
            ..self.clone()
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Counter-based stream for one trial: ChaCha keyed by `seed`, with the trial
/// index selecting the stream. Identical pairs give identical draws no matter
/// which thread runs the trial or in what order.
pub fn derive_trial_rng(seed: u64, trial_index: u64) -> TrialRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial_index);
    rng
}

#[inline]
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// One forward channel use: returns `y_l = x + n_l^b` for every user.
pub fn forward_step<R: Rng + ?Sized>(x: f64, cfg: &ChannelConfig, rng: &mut R) -> Result<Vec<f64>> {
    if !x.is_finite() {
        return Err(Error::validation(format!("transmit symbol is not finite: {x}")));
    }
    let sd = cfg.sigma_b2.sqrt();
    Ok((0..cfg.users).map(|_| x + sd * standard_normal(rng)).collect())
}

/// One feedback use: returns `z_l = y_l + n_l^f`. With zero feedback noise
/// the observations are echoed exactly and no randomness is consumed.
pub fn feedback_step<R: Rng + ?Sized>(y: &[f64], cfg: &ChannelConfig, rng: &mut R) -> Result<Vec<f64>> {
    if let Some(bad) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::validation(format!("observation is not finite: {bad}")));
    }
    if cfg.sigma_f2 == 0.0 {
        return Ok(y.to_vec());
    }
    let sd = cfg.sigma_f2.sqrt();
    Ok(y.iter().map(|&v| v + sd * standard_normal(rng)).collect())
}

/// The noise draws and signals of a single trial.
///
/// Layout is user-major: entry `(l, t)` lives at `l * uses + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialTape {
    users: usize,
    uses: usize,
    n_b: Vec<f64>,
    n_f: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
}

impl TrialTape {
    /// Draw all forward noise (user-major), then all feedback noise, from
    /// `rng`. Feedback noise draws are consumed even for perfect feedback so
    /// the stream position after the tape does not depend on `sigma_f2`.
    pub fn draw<R: Rng + ?Sized>(cfg: &ChannelConfig, rng: &mut R) -> Self {
        let len = cfg.users * cfg.uses;
        let sb = cfg.sigma_b2.sqrt();
        let sf = cfg.sigma_f2.sqrt();
        let n_b = (0..len).map(|_| sb * standard_normal(rng)).collect();
        let n_f = (0..len).map(|_| sf * standard_normal(rng)).collect();
        Self::from_noise(cfg.users, cfg.uses, n_b, n_f)
    }

    pub fn from_noise(users: usize, uses: usize, n_b: Vec<f64>, n_f: Vec<f64>) -> Self {
        assert_eq!(n_b.len(), users * uses, "forward noise has wrong length");
        assert_eq!(n_f.len(), users * uses, "feedback noise has wrong length");
        TrialTape {
            users,
            uses,
            n_b,
            n_f,
            x: Vec::with_capacity(uses),
            y: vec![0.0; users * uses],
            z: vec![0.0; users * uses],
        }
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn uses(&self) -> usize {
        self.uses
    }

    /// Number of symbols transmitted so far.
    pub fn elapsed(&self) -> usize {
        self.x.len()
    }

    /// Transmit `x` at the next channel use and compute every user's forward
    /// observation and feedback. Returns the 0-based time index used.
    pub fn send(&mut self, x: f64) -> Result<usize> {
        let t = self.x.len();
        if t >= self.uses {
            return Err(Error::validation(format!(
                "block of {} channel uses already exhausted",
                self.uses
            )));
        }
        if !x.is_finite() {
            return Err(Error::validation(format!("transmit symbol is not finite: {x}")));
        }
        self.x.push(x);
        for l in 0..self.users {
            let i = l * self.uses + t;
            self.y[i] = x + self.n_b[i];
            self.z[i] = self.y[i] + self.n_f[i];
        }
        Ok(t)
    }

    #[inline]
    pub fn x(&self, t: usize) -> f64 {
        self.x[t]
    }

    pub fn transmitted(&self) -> &[f64] {
        &self.x
    }

    #[inline]
    pub fn y(&self, user: usize, t: usize) -> f64 {
        debug_assert!(t < self.x.len(), "observation read before transmission");
        self.y[user * self.uses + t]
    }

    #[inline]
    pub fn z(&self, user: usize, t: usize) -> f64 {
        debug_assert!(t < self.x.len(), "feedback read before transmission");
        self.z[user * self.uses + t]
    }

    #[inline]
    pub fn n_b(&self, user: usize, t: usize) -> f64 {
        self.n_b[user * self.uses + t]
    }

    #[inline]
    pub fn n_f(&self, user: usize, t: usize) -> f64 {
        self.n_f[user * self.uses + t]
    }

    /// Transmitted energy `sum_t x[t]^2` so far.
    pub fn energy(&self) -> f64 {
        self.x.iter().map(|v| v * v).sum()
    }

    /// Copy of the noise with the signal history cleared, for replaying the
    /// same draws through a different scheme.
    pub fn fresh(&self) -> Self {
        Self::from_noise(self.users, self.uses, self.n_b.clone(), self.n_f.clone())
    }
}

/// Empirical estimator of the average power constraint.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PowerAudit {
    energy: f64,
    energy_sq: f64,
    trials: u64,
    uses: usize,
}

impl PowerAudit {
    pub fn new(uses: usize) -> Self {
        PowerAudit {
            uses,
            ..Default::default()
        }
    }

    /// Record one trial's total energy `sum_t x[t]^2`.
    pub fn record(&mut self, trial_energy: f64) {
        let per_use = trial_energy / self.uses as f64;
        self.energy += trial_energy;
        self.energy_sq += per_use * per_use;
        self.trials += 1;
    }

    pub fn merge(&mut self, other: &PowerAudit) {
        debug_assert_eq!(self.uses, other.uses);
        self.energy += other.energy;
        self.energy_sq += other.energy_sq;
        self.trials += other.trials;
    }

    pub fn trials(&self) -> u64 {
        self.trials
    }

    pub fn total_energy(&self) -> f64 {
        self.energy
    }

    /// Average power per channel use, `energy / (trials * N)`.
    pub fn average_power(&self) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        self.energy / (self.trials as f64 * self.uses as f64)
    }

    /// Standard error of [`Self::average_power`] across trials.
    pub fn standard_error(&self) -> f64 {
        if self.trials < 2 {
            return f64::INFINITY;
        }
        let n = self.trials as f64;
        let mean = self.average_power();
        let var = ((self.energy_sq / n) - mean * mean).max(0.0) * n / (n - 1.0);
        (var / n).sqrt()
    }

    /// True when the empirical power does not exceed `P + 3 SE`.
    pub fn within_budget(&self, power: f64) -> bool {
        self.average_power() <= power + 3.0 * self.standard_error()
    }
}
