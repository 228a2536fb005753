//! Ozarow-Leung (OL) two-user feedback code, its two-sample enhanced variant
//! (EOL), and the single-user Schalkwijk-Kailath (SK) recursion.
//!
//! After the first `L` uses carry each user's unit-power PAM symbol, every
//! later use sends a normalised combination of the receivers' current
//! estimation errors as mirrored at the transmitter from feedback. Each
//! receiver then removes the LMMSE estimate of its error from its running
//! symbol estimate.
//!
//! All gains are fixed per configuration and computed once in an [`OlPlan`]
//! by tracking every signal as a [`LinearForm`] over the trial's primitive
//! random variables. This gives exact second moments under noisy feedback as
//! well, so the transmitter can normalise by the true variance of its
//! mirrored error and meet the power budget exactly.

use crate::channel::{ChannelConfig, TrialTape};
use crate::error::{Error, Result};
use crate::linear::{Basis, LinearForm};
use crate::modulation::PamConstellation;
use crate::scheme::FeedbackCode;

/// How the transmitter normalises and how OL receivers pick their gains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackerMode {
    /// Moments of the actual mirrored signals (power budget met exactly).
    Exact,
    /// Closed-form perfect-feedback trackers, whatever the feedback noise.
    Literal,
}

/// Scheme options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OlOptions {
    /// Two-sample estimator from the fourth use on.
    pub enhanced: bool,
    /// Balance gain between the two users' error terms.
    pub g: f64,
    pub mode: TrackerMode,
}

impl Default for OlOptions {
    fn default() -> Self {
        OlOptions {
            enhanced: false,
            g: 1.0,
            mode: TrackerMode::Exact,
        }
    }
}

/// `sgn*(x)`: sign with `sgn*(0) = +1`.
#[inline]
pub fn sgn_star(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Closed-form perfect-feedback trackers for the two-user scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct OlTrackers {
    alpha: [f64; 2],
    cross: f64,
    g: f64,
    power: f64,
    sigma_b2: f64,
}

impl OlTrackers {
    /// State after the two uncoded rounds.
    pub fn new(power: f64, sigma_b2: f64, g: f64) -> Self {
        let a = sigma_b2 / (power + sigma_b2);
        OlTrackers {
            alpha: [a, a],
            cross: 0.0,
            g,
            power,
            sigma_b2,
        }
    }

    pub fn alpha(&self, user: usize) -> f64 {
        self.alpha[user]
    }

    pub fn rho(&self) -> f64 {
        self.cross / (self.alpha[0] * self.alpha[1]).sqrt()
    }

    /// `D = 1 + g² + 2g|ρ|`.
    pub fn normaliser(&self) -> f64 {
        1.0 + self.g * self.g + 2.0 * self.g * self.rho().abs()
    }

    /// `(E[ε_1 y_1], E[ε_2 y_2])` for the next use.
    pub fn expectations(&self) -> (f64, f64) {
        let rho = self.rho();
        let s = (self.power / self.normaliser()).sqrt();
        let e1 = s * self.alpha[0].sqrt() * (1.0 + self.g * rho.abs());
        let e2 = s * self.alpha[1].sqrt() * (self.g + rho.abs()) * sgn_star(rho);
        (e1, e2)
    }

    /// Receiver gains `E[ε_l y_l] / E[y_l²]`.
    pub fn gains(&self) -> [f64; 2] {
        let (e1, e2) = self.expectations();
        let vy = self.power + self.sigma_b2;
        [e1 / vy, e2 / vy]
    }

    /// Transmit weights on the two mirrored errors.
    pub fn weights(&self) -> [f64; 2] {
        let s = (self.power / self.normaliser()).sqrt();
        [
            s / self.alpha[0].sqrt(),
            s * self.g * sgn_star(self.rho()) / self.alpha[1].sqrt(),
        ]
    }

    /// Advance through one coded use.
    pub fn advance(&mut self) {
        let (e1, e2) = self.expectations();
        let vy = self.power + self.sigma_b2;
        self.cross += -2.0 * e1 * e2 / vy + e1 * e2 * self.power / (vy * vy);
        self.alpha[0] -= e1 * e1 / vy;
        self.alpha[1] -= e2 * e2 / vy;
    }
}

/// First two uses: `x[1] = √P·Θ_1`, `x[2] = √P·Θ_2`.
pub fn ol_first_rounds(theta: [f64; 2], power: f64) -> [f64; 2] {
    let s = power.sqrt();
    [s * theta[0], s * theta[1]]
}

/// Initial LMMSE estimate from a unit-power symbol sent at power `P`.
pub fn initial_estimate(y: f64, power: f64, sigma_b2: f64) -> f64 {
    power.sqrt() / (power + sigma_b2) * y
}

/// Coded transmit symbol from the mirrored errors and the trackers.
pub fn ol_transmit(eps: [f64; 2], alpha: [f64; 2], rho: f64, g: f64, power: f64) -> Result<f64> {
    if !(alpha[0] > 0.0 && alpha[1] > 0.0) {
        return Err(Error::solver(format!(
            "error variance tracker is not positive: {alpha:?}"
        )));
    }
    let d = 1.0 + g * g + 2.0 * g * rho.abs();
    Ok((power / d).sqrt()
        * (eps[0] / alpha[0].sqrt() + eps[1] / alpha[1].sqrt() * g * sgn_star(rho)))
}

/// One-sample update `Θ̂ ← Θ̂ − k·y`.
#[inline]
pub fn ol_receive_update(theta_hat: f64, gain: f64, y: f64) -> f64 {
    theta_hat - gain * y
}

/// Two-sample LMMSE weights `Q⁻¹·cross` for the window `[y[t], y[t−1]]`.
pub fn eol_weights(q: [[f64; 2]; 2], cross: [f64; 2]) -> Result<[f64; 2]> {
    let det = q[0][0] * q[1][1] - q[0][1] * q[1][0];
    let scale = q[0][0].abs().max(q[1][1].abs());
    if det.is_nan() || det.abs() <= 1e-14 * scale * scale {
        return Err(Error::solver(format!(
            "two-sample covariance is singular (det = {det:e})"
        )));
    }
    Ok([
        (q[1][1] * cross[0] - q[0][1] * cross[1]) / det,
        (q[0][0] * cross[1] - q[1][0] * cross[0]) / det,
    ])
}

/// Fixed gains of one coded use.
#[derive(Debug, Clone, PartialEq)]
struct Round {
    weights: Vec<f64>,
    /// Per user: taps on `y[t]` and, for the enhanced variant, `y[t−1]`.
    taps: Vec<Vec<f64>>,
}

/// Per-configuration gains and exact moments of an OL/EOL/SK code.
#[derive(Debug, Clone)]
pub struct OlPlan {
    users: usize,
    uses: usize,
    power: f64,
    init_gain: f64,
    rounds: Vec<Round>,
    scale: Vec<f64>,
    /// `mse[l][t]`: variance of user `l`'s estimation error after use `t`
    /// (from use `L−1` on).
    mse: Vec<Vec<f64>>,
    round_power: Vec<f64>,
    residual_var: Vec<f64>,
    eps_forms: Vec<LinearForm>,
    basis: Basis,
}

impl OlPlan {
    /// Build the plan for `cfg.users ∈ {1, 2}`.
    pub fn new(cfg: &ChannelConfig, opts: OlOptions) -> Result<Self> {
        cfg.validate()?;
        let l_users = cfg.users;
        let n = cfg.uses;
        if !(1..=2).contains(&l_users) {
            return Err(Error::mismatch("ol", format!("needs 1 or 2 users, got {l_users}")));
        }
        if n < l_users {
            return Err(Error::mismatch("ol", format!("needs at least {l_users} uses, got {n}")));
        }
        if !(opts.g >= 0.0 && opts.g.is_finite()) {
            return Err(Error::validation(format!("balance gain must be >= 0, got {}", opts.g)));
        }
        let (p, sb, sf) = (cfg.power, cfg.sigma_b2, cfg.sigma_f2);
        let basis = Basis::new(l_users, n, 1.0, sb, sf);
        let init_gain = p.sqrt() / (p + sb);

        let mut round_power = vec![p; l_users];
        let mut eps = Vec::with_capacity(l_users);
        let mut mirror = Vec::with_capacity(l_users);
        // Forward observations kept for the two-sample window.
        let mut y_prev: Vec<Option<LinearForm>> = vec![None; l_users];
        for l in 0..l_users {
            let mut y = basis.unit(basis.theta(l)).scaled(p.sqrt());
            y.axpy(1.0, &basis.unit(basis.n_b(l, l)));
            let mut e = y.scaled(init_gain);
            e.axpy(-1.0, &basis.unit(basis.theta(l)));
            let mut m = e.clone();
            m.axpy(init_gain, &basis.unit(basis.n_f(l, l)));
            eps.push(e);
            mirror.push(m);
        }
        let mut mse: Vec<Vec<f64>> = eps.iter().map(|e| vec![basis.var(e)]).collect();

        let mut trackers = OlTrackers::new(p, sb, opts.g);
        let mut sk_alpha = sb / (p + sb);
        let mut rounds = Vec::with_capacity(n - l_users);

        for t in l_users..n {
            let weights = match (opts.mode, l_users) {
                (TrackerMode::Exact, 1) => vec![(p / basis.var(&mirror[0])).sqrt()],
                (TrackerMode::Literal, 1) => vec![(p / sk_alpha).sqrt()],
                (TrackerMode::Exact, _) => {
                    let a1 = basis.var(&mirror[0]);
                    let a2 = basis.var(&mirror[1]);
                    let rho = basis.cov(&mirror[0], &mirror[1]) / (a1 * a2).sqrt();
                    let d = 1.0 + opts.g * opts.g + 2.0 * opts.g * rho.abs();
                    let s = (p / d).sqrt();
                    vec![s / a1.sqrt(), s * opts.g * sgn_star(rho) / a2.sqrt()]
                }
                (TrackerMode::Literal, _) => trackers.weights().to_vec(),
            };
            if weights.iter().any(|w| !w.is_finite()) {
                return Err(Error::solver(format!(
                    "error variance collapsed at use {}; blocklength too long for this SNR",
                    t + 1
                )));
            }
            let mut x = basis.zero();
            for (w, m) in weights.iter().zip(&mirror) {
                x.axpy(*w, m);
            }
            round_power.push(basis.var(&x));

            let literal_gains = match l_users {
                1 => [(p * sk_alpha).sqrt() / (p + sb), 0.0],
                _ => trackers.gains(),
            };
            let mut taps = Vec::with_capacity(l_users);
            for l in 0..l_users {
                let mut y = x.clone();
                y.axpy(1.0, &basis.unit(basis.n_b(l, t)));
                let window = match (&y_prev[l], opts.enhanced && t > l_users) {
                    (Some(prev), true) => Some(prev.clone()),
                    _ => None,
                };
                let tap: Vec<f64> = match window {
                    Some(prev) => {
                        let q = [
                            [basis.var(&y), basis.cov(&y, &prev)],
                            [basis.cov(&prev, &y), basis.var(&prev)],
                        ];
                        let c = [basis.cov(&eps[l], &y), basis.cov(&eps[l], &prev)];
                        eol_weights(q, c)?.to_vec()
                    }
                    None => match opts.mode {
                        TrackerMode::Exact => vec![basis.cov(&eps[l], &y) / basis.var(&y)],
                        TrackerMode::Literal => vec![literal_gains[l]],
                    },
                };
                for (j, k) in tap.iter().enumerate() {
                    let yj = if j == 0 { y.clone() } else { y_prev[l].clone().unwrap() };
                    let zj = yj.plus(&basis.unit(basis.n_f(l, t - j)));
                    eps[l].axpy(-k, &yj);
                    mirror[l].axpy(-k, &zj);
                }
                mse[l].push(basis.var(&eps[l]));
                y_prev[l] = Some(y);
                taps.push(tap);
            }
            trackers.advance();
            sk_alpha *= sb / (p + sb);
            rounds.push(Round { weights, taps });
        }

        let scale: Vec<f64> = (0..l_users)
            .map(|l| 1.0 + eps[l].coeff(basis.theta(l)))
            .collect();
        let residual_var = (0..l_users)
            .map(|l| {
                let bias = scale[l] - 1.0;
                (basis.var(&eps[l]) - bias * bias) / (scale[l] * scale[l])
            })
            .collect();
        Ok(OlPlan {
            users: l_users,
            uses: n,
            power: p,
            init_gain,
            rounds,
            scale,
            mse,
            round_power,
            residual_var,
            eps_forms: eps,
            basis,
        })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn uses(&self) -> usize {
        self.uses
    }

    /// Exact `E[x²[t]]` for every use.
    pub fn round_power(&self) -> &[f64] {
        &self.round_power
    }

    /// Exact error variance of user `l`'s running estimate, one entry per
    /// use from the user's own initial slot onwards.
    pub fn mse(&self, user: usize) -> &[f64] {
        &self.mse[user]
    }

    /// Variance of the final unbiased estimate's error.
    pub fn residual_variance(&self, user: usize) -> f64 {
        self.residual_var[user]
    }

    /// Output SNR of the final unbiased estimate for a unit-power symbol.
    pub fn output_snr(&self, user: usize) -> f64 {
        1.0 / self.residual_var[user]
    }

    /// The final running-estimate error of user `l` as a linear form.
    pub fn error_form(&self, user: usize) -> &LinearForm {
        &self.eps_forms[user]
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    /// Run one trial on `tape` for unit-power symbols `theta`, returning the
    /// running estimates before the final unbiasing scale.
    pub fn run_raw(&self, theta: &[f64], tape: &mut TrialTape) -> Result<Vec<f64>> {
        let l_users = self.users;
        if theta.len() != l_users || tape.users() != l_users || tape.uses() != self.uses {
            return Err(Error::mismatch("ol", "tape or message shape does not match the plan"));
        }
        let s = self.power.sqrt();
        for th in theta {
            tape.send(s * th)?;
        }
        let mut est: Vec<f64> = (0..l_users).map(|l| self.init_gain * tape.y(l, l)).collect();
        let mut mirror: Vec<f64> = (0..l_users).map(|l| self.init_gain * tape.z(l, l)).collect();
        for (r, round) in self.rounds.iter().enumerate() {
            let x: f64 = round
                .weights
                .iter()
                .zip(mirror.iter().zip(theta))
                .map(|(w, (m, th))| w * (m - th))
                .sum();
            let t = tape.send(x)?;
            debug_assert_eq!(t, l_users + r);
            for l in 0..l_users {
                for (j, k) in round.taps[l].iter().enumerate() {
                    est[l] = ol_receive_update(est[l], *k, tape.y(l, t - j));
                    mirror[l] = ol_receive_update(mirror[l], *k, tape.z(l, t - j));
                }
            }
        }
        Ok(est)
    }

    /// Final unbiased symbol estimates.
    pub fn run(&self, theta: &[f64], tape: &mut TrialTape) -> Result<Vec<f64>> {
        let raw = self.run_raw(theta, tape)?;
        Ok(raw.iter().zip(&self.scale).map(|(v, s)| v / s).collect())
    }
}

/// OL, EOL or SK as a complete code: plan plus unit-power PAM.
#[derive(Debug, Clone)]
pub struct OlCode {
    plan: OlPlan,
    pam: PamConstellation,
    name: &'static str,
}

impl OlCode {
    pub fn new(cfg: &ChannelConfig, bits: u32, opts: OlOptions) -> Result<Self> {
        let name = match (cfg.users, opts.enhanced) {
            (1, _) => "sk",
            (_, false) => "ol",
            (_, true) => "eol",
        };
        if cfg.users != 1 && cfg.users != 2 {
            return Err(Error::mismatch(name, format!("needs 1 or 2 users, got {}", cfg.users)));
        }
        Ok(OlCode {
            plan: OlPlan::new(cfg, opts)?,
            pam: PamConstellation::new(bits, 1.0)?,
            name,
        })
    }

    /// Single-user SK code.
    pub fn sk(cfg: &ChannelConfig, bits: u32) -> Result<Self> {
        if cfg.users != 1 {
            return Err(Error::mismatch("sk", format!("needs 1 user, got {}", cfg.users)));
        }
        Self::new(cfg, bits, OlOptions::default())
    }

    pub fn plan(&self) -> &OlPlan {
        &self.plan
    }

    pub fn constellation(&self) -> &PamConstellation {
        &self.pam
    }
}

impl FeedbackCode for OlCode {
    fn name(&self) -> &str {
        self.name
    }

    fn users(&self) -> usize {
        self.plan.users
    }

    fn uses(&self) -> usize {
        self.plan.uses
    }

    fn bits(&self) -> u32 {
        self.pam.bits()
    }

    fn run(&self, words: &[u32], tape: &mut TrialTape) -> Result<Vec<u32>> {
        let theta = words
            .iter()
            .map(|&w| self.pam.map(w))
            .collect::<Result<Vec<_>>>()?;
        let est = self.plan.run(&theta, tape)?;
        Ok(est.iter().map(|&v| self.pam.demap(v)).collect())
    }
}

/// Decode one SK block on a single-user tape.
pub fn sk_single_user(cfg: &ChannelConfig, bits: u32, word: u32, tape: &mut TrialTape) -> Result<u32> {
    let code = OlCode::sk(cfg, bits)?;
    Ok(code.run(&[word], tape)?[0])
}
