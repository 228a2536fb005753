//! Broadcast linear feedback code with a β-parameterised encoding matrix and
//! Hadamard spreading (BMCL).
//!
//! The first `L` uses send each user's PAM symbol. The remaining `N̂ = N − L`
//! uses send `Σ_l (F_l ν_l)`, where `ν_l` stacks the feedback residuals
//! `z_l − x` seen at user `l`'s own initial slot and at the coded uses, and
//! `F_l = C_l F C_l` spreads the common base matrix `F` with a Hadamard row.
//! Receiver `l` combines its stacked observations with `q_l = C_l q`.
//!
//! Indices are 0-based throughout: stacked vectors have length `N̂ + 1`,
//! entry 0 is the user's initial slot and entry `k + 1` is use `L + k`.

use nalgebra::{DMatrix, DVector};

use crate::channel::{ChannelConfig, TrialTape};
use crate::error::{Error, Result};
use crate::modulation::PamConstellation;
use crate::roots::bisect;
use crate::scheme::FeedbackCode;
use crate::stats::{pam_symbol_error, q_function};

/// Bracket of the finite-blocklength β search.
pub const BETA_BRACKET: (f64, f64) = (1e-6, 1.0 - 1e-6);
/// Bisection budget of the β searches.
pub const BETA_MAX_ITER: usize = 200;
/// Default γ grid step.
pub const GAMMA_STEP: f64 = 0.01;

fn ensure_power_of_two(users: usize) -> Result<()> {
    if users == 0 || !users.is_power_of_two() {
        return Err(Error::validation(format!(
            "Hadamard spreading needs L to be a power of two, got {users}"
        )));
    }
    Ok(())
}

fn ensure_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::validation(format!("beta must lie in (0, 1), got {beta}")));
    }
    Ok(())
}

/// Sylvester Hadamard matrix of order `L`, as rows of ±1.
pub fn hadamard_rows(users: usize) -> Result<Vec<Vec<i8>>> {
    ensure_power_of_two(users)?;
    let mut h = vec![vec![1i8]];
    while h.len() < users {
        let n = h.len();
        let mut next = vec![vec![0i8; 2 * n]; 2 * n];
        for i in 0..n {
            for j in 0..n {
                next[i][j] = h[i][j];
                next[i][j + n] = h[i][j];
                next[i + n][j] = h[i][j];
                next[i + n][j + n] = -h[i][j];
            }
        }
        h = next;
    }
    Ok(h)
}

/// Diagonal of `C_l`: entry `i` is `c_l[i mod L]`.
pub fn spreading_matrix(user: usize, size: usize, users: usize) -> Result<DVector<f64>> {
    let h = hadamard_rows(users)?;
    if user >= users {
        return Err(Error::validation(format!(
            "user index {user} out of range for L = {users}"
        )));
    }
    Ok(DVector::from_fn(size, |i, _| h[user][i % users] as f64))
}

/// `D·M·D` for a diagonal `D` given by `d`.
fn conjugate(m: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| d[i] * m[(i, j)] * d[j])
}

/// Base encoding matrix of size `(N̂+1)²`.
pub fn f_base(beta: f64, users: usize, n_hat: usize) -> Result<DMatrix<f64>> {
    ensure_beta(beta)?;
    let l = users as i32;
    let lead = -(1.0 - beta.powi(2 * l)) / (users as f64 * beta);
    let m = n_hat + 1;
    Ok(DMatrix::from_fn(m, m, |t, col| {
        if t <= col {
            0.0
        } else {
            let d = (t - col - 1) as i32;
            lead * beta.powi(l * (d / l) - d % l)
        }
    }))
}

/// `‖F‖_F²` by direct summation.
pub fn f_power(beta: f64, users: usize, n_hat: usize) -> Result<f64> {
    Ok(f_base(beta, users, n_hat)?.norm_squared())
}

/// `‖F‖_F²` from the diagonal-count closed form
/// `((β^{2L}−1)/(Lβ))² Σ_k (N̂−k) β^{2k−4·(k mod L)}`.
pub fn f_power_closed_form(beta: f64, users: usize, n_hat: usize) -> f64 {
    let l = users as i32;
    let lead = ((beta.powi(2 * l) - 1.0) / (users as f64 * beta)).powi(2);
    let sum: f64 = (0..n_hat as i32)
        .map(|k| (n_hat as i32 - k) as f64 * beta.powi(2 * k - 4 * (k % l)))
        .sum();
    lead * sum
}

/// Per-use limit `‖F‖_F²/N` as `N → ∞`, written in `u = −ln β` so that it
/// stays accurate for β close to 1:
/// `(1−β^{2L})² / (L² β^{2L} (1−β²))`.
pub fn asymptotic_energy_log(u: f64, users: usize) -> f64 {
    let l = users as f64;
    let a = -(-2.0 * l * u).exp_m1();
    let b = -(-2.0 * u).exp_m1();
    a * a / (l * l * (-2.0 * l * u).exp() * b)
}

/// [`asymptotic_energy_log`] in terms of β.
pub fn asymptotic_energy(beta: f64, users: usize) -> f64 {
    asymptotic_energy_log(-beta.ln(), users)
}

/// Target `NPγ / (L(σ_b²+σ_f²))` of the finite-blocklength power constraint.
pub fn energy_target(gamma: f64, power: f64, sigma_b2: f64, sigma_f2: f64, users: usize, uses: usize) -> f64 {
    uses as f64 * power * gamma / (users as f64 * (sigma_b2 + sigma_f2))
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::validation(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    Ok(())
}

/// β meeting the finite-blocklength power constraint with equality.
pub fn solve_beta(
    gamma: f64,
    power: f64,
    sigma_b2: f64,
    sigma_f2: f64,
    users: usize,
    uses: usize,
) -> Result<f64> {
    check_gamma(gamma)?;
    ensure_power_of_two(users)?;
    if uses <= users {
        return Err(Error::mismatch("bmcl", format!("needs N > L, got N = {uses}, L = {users}")));
    }
    let n_hat = uses - users;
    let target = energy_target(gamma, power, sigma_b2, sigma_f2, users, uses);
    let (lo, hi) = BETA_BRACKET;
    let top = f_power(lo, users, n_hat)?;
    let bottom = f_power(hi, users, n_hat)?;
    if !(target < top && target > bottom) {
        return Err(Error::solver(format!(
            "encoding energy target {target} outside reachable range ({bottom}, {top})"
        )));
    }
    bisect(
        |b| f_power(b, users, n_hat).map(|e| e - target).unwrap_or(f64::NAN),
        lo,
        hi,
        BETA_MAX_ITER,
    )
}

/// Solve `asymptotic_energy(β) = target` for `u = −ln β`.
fn solve_asymptotic_log(target: f64, users: usize) -> Result<f64> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::validation(format!("energy target must be positive, got {target}")));
    }
    let mut hi = 1.0;
    while asymptotic_energy_log(hi, users) < target {
        hi *= 2.0;
        if hi > 700.0 / users as f64 {
            return Err(Error::solver("asymptotic energy target out of floating-point range"));
        }
    }
    let mut lo = hi;
    while asymptotic_energy_log(lo, users) > target {
        lo *= 0.5;
        if lo < 1e-300 {
            return Err(Error::solver("asymptotic energy target too small"));
        }
    }
    bisect(|u| asymptotic_energy_log(u, users) - target, lo, hi, 2000)
}

/// β meeting the asymptotic power constraint
/// `(1−β^{2L})²/(L²β^{2L}(1−β²)) = Pγ/(L(σ_b²+σ_f²))`.
pub fn solve_beta_asymptotic(
    gamma: f64,
    power: f64,
    sigma_b2: f64,
    sigma_f2: f64,
    users: usize,
) -> Result<f64> {
    check_gamma(gamma)?;
    let target = power * gamma / (users as f64 * (sigma_b2 + sigma_f2));
    Ok((-solve_asymptotic_log(target, users)?).exp())
}

/// Sum-rate results for perfect feedback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityResult {
    pub beta_inf: f64,
    /// `−L·log2(β_∞)` bits per use.
    pub c_sum: f64,
    /// Rate parameter of the many-user limit.
    pub alpha_limit: f64,
    /// `α / ln 2`.
    pub c_limit: f64,
    /// Relative residual of the β equation.
    pub beta_residual: f64,
    /// Relative residual of the α equation.
    pub alpha_residual: f64,
}

/// Left side of the many-user equation, `(1−e^{−2α})²/(2αe^{−2α})`.
pub fn limit_equation(alpha: f64) -> f64 {
    let a = -(-2.0 * alpha).exp_m1();
    a * a / (2.0 * alpha * (-2.0 * alpha).exp())
}

/// Maximum sum rate and its `L → ∞` limit at forward SNR `snr` (linear).
pub fn sum_capacity(snr: f64, users: usize) -> Result<CapacityResult> {
    if !(snr > 0.0 && snr.is_finite()) || users == 0 {
        return Err(Error::validation("sum capacity needs SNR > 0 and L >= 1"));
    }
    let target = snr / users as f64;
    let u = solve_asymptotic_log(target, users)?;
    let beta_inf = (-u).exp();
    let c_sum = users as f64 * u / std::f64::consts::LN_2;
    let beta_residual = (asymptotic_energy_log(u, users) - target).abs() / target;

    let mut hi = 1.0;
    while limit_equation(hi) < snr {
        hi *= 2.0;
    }
    let alpha = bisect(|a| limit_equation(a) - snr, 1e-12, hi, 2000)?;
    Ok(CapacityResult {
        beta_inf,
        c_sum,
        alpha_limit: alpha,
        c_limit: alpha / std::f64::consts::LN_2,
        beta_residual,
        alpha_residual: (limit_equation(alpha) - snr).abs() / snr,
    })
}

/// `σ_b²(I + F + Fᵀ) + (σ_b²+σ_f²)·Σ_l F_l F_lᵀ`.
pub fn noise_covariance(f: &DMatrix<f64>, f_users: &[DMatrix<f64>], sigma_b2: f64, sigma_f2: f64) -> DMatrix<f64> {
    let m = f.nrows();
    let mut r = (DMatrix::<f64>::identity(m, m) + f + f.transpose()) * sigma_b2;
    for fl in f_users {
        r += fl * fl.transpose() * (sigma_b2 + sigma_f2);
    }
    r
}

/// Combiner choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombinerMode {
    /// `R⁻¹e₁ / (e₁ᵀR⁻¹e₁)`.
    Optimal,
    /// `[1, β, β², …, β^{N̂}]`.
    Asymptotic,
}

/// Base combiner `q`.
pub fn combiner(r: &DMatrix<f64>, mode: CombinerMode, beta: f64) -> Result<DVector<f64>> {
    let m = r.nrows();
    match mode {
        CombinerMode::Asymptotic => Ok(DVector::from_fn(m, |i, _| beta.powi(i as i32))),
        CombinerMode::Optimal => {
            let chol = r
                .clone()
                .cholesky()
                .ok_or_else(|| Error::solver("noise covariance is not positive definite"))?;
            let mut e1 = DVector::zeros(m);
            e1[0] = 1.0;
            let w = chol.solve(&e1);
            if w[0].is_nan() || w[0] <= 0.0 || !w.iter().all(|v| v.is_finite()) {
                return Err(Error::solver("combiner solve failed"));
            }
            Ok(&w / w[0])
        }
    }
}

/// `(‖ψ‖², Σ_{i≠l}‖ζ_{l,i}‖²)` from their closed forms, for the asymptotic
/// combiner.
pub fn closed_form_noise_terms(beta: f64, users: usize, n_hat: usize) -> (f64, f64) {
    let l = users as i32;
    let n = n_hat as i32;
    let b2l = beta.powi(2 * l);
    let mut psi = beta.powi(2 * n);
    for d in 0..n {
        let inner = 1.0 - ((d % l) + 1) as f64 / users as f64 * (1.0 - b2l);
        psi += beta.powi(2 * (n - d - 1) + 4 * l * (d / l)) * inner * inner;
    }
    let mut zeta = 0.0;
    for r in 0..l.min(n + 1) {
        let weight = (l * r - r * r) as f64;
        zeta += weight * beta.powi(2 * (n - r)) * (1.0 - beta.powi(2 * l * ((n - r) / l + 1)));
    }
    zeta *= (1.0 - b2l) / (users * users) as f64;
    (psi, zeta)
}

/// The same two terms by direct matrix products with `q = q_∞`, for user 0.
pub fn direct_noise_terms(beta: f64, users: usize, n_hat: usize) -> Result<(f64, f64)> {
    let f = f_base(beta, users, n_hat)?;
    let m = n_hat + 1;
    let q = DVector::from_fn(m, |i, _| beta.powi(i as i32));
    let psi = ((DMatrix::<f64>::identity(m, m) + &f).transpose() * &q).norm_squared();
    let c0 = spreading_matrix(0, m, users)?;
    let q0 = q.component_mul(&c0);
    let mut zeta = 0.0;
    for i in 1..users {
        let ci = spreading_matrix(i, m, users)?;
        zeta += (f.transpose() * q0.component_mul(&ci)).norm_squared();
    }
    Ok((psi, zeta))
}

/// Block error probability of `2^K`-PAM at combiner-output SNR `snr`, with
/// `K = NR` message bits: `2(1−2^{−K})·Q(√(3·SNR/(2^{2K}−1)))`.
pub fn bler_prediction(snr: f64, bits: f64) -> f64 {
    pam_symbol_error(bits, snr)
}

/// The variant with `6·SNR` inside the Q function. It is about 3 dB more
/// optimistic than nearest-point PAM detection and is kept for comparison.
pub fn bler_prediction_optimistic(snr: f64, bits: f64) -> f64 {
    let m2 = 4f64.powf(bits);
    2.0 * (1.0 - 1.0 / m2.sqrt()) * q_function((6.0 * snr / (m2 - 1.0)).sqrt())
}

/// A complete BMCL design for one configuration and power split.
#[derive(Debug, Clone)]
pub struct BmclDesign {
    pub users: usize,
    pub uses: usize,
    pub n_hat: usize,
    pub gamma: f64,
    pub beta: f64,
    pub power: f64,
    pub sigma_b2: f64,
    pub sigma_f2: f64,
    pub f: DMatrix<f64>,
    /// Diagonals of the spreading matrices `C_l`.
    pub spread: Vec<DVector<f64>>,
    pub f_users: Vec<DMatrix<f64>>,
    pub r_cov: DMatrix<f64>,
    pub q: DVector<f64>,
    pub mode: CombinerMode,
}

impl BmclDesign {
    /// Design for a fixed `γ`, solving β from the finite-blocklength
    /// constraint.
    pub fn new(cfg: &ChannelConfig, gamma: f64, mode: CombinerMode) -> Result<Self> {
        cfg.validate()?;
        let beta = solve_beta(gamma, cfg.power, cfg.sigma_b2, cfg.sigma_f2, cfg.users, cfg.uses)?;
        Self::with_beta(cfg, gamma, beta, mode)
    }

    /// Design for given `γ` and `β`.
    pub fn with_beta(cfg: &ChannelConfig, gamma: f64, beta: f64, mode: CombinerMode) -> Result<Self> {
        check_gamma(gamma)?;
        ensure_power_of_two(cfg.users)?;
        if cfg.uses <= cfg.users {
            return Err(Error::mismatch(
                "bmcl",
                format!("needs N > L, got N = {}, L = {}", cfg.uses, cfg.users),
            ));
        }
        let n_hat = cfg.uses - cfg.users;
        let m = n_hat + 1;
        let f = f_base(beta, cfg.users, n_hat)?;
        let spread = (0..cfg.users)
            .map(|l| spreading_matrix(l, m, cfg.users))
            .collect::<Result<Vec<_>>>()?;
        let f_users: Vec<_> = spread.iter().map(|c| conjugate(&f, c)).collect();
        let r_cov = noise_covariance(&f, &f_users, cfg.sigma_b2, cfg.sigma_f2);
        let q = combiner(&r_cov, mode, beta)?;
        Ok(BmclDesign {
            users: cfg.users,
            uses: cfg.uses,
            n_hat,
            gamma,
            beta,
            power: cfg.power,
            sigma_b2: cfg.sigma_b2,
            sigma_f2: cfg.sigma_f2,
            f,
            spread,
            f_users,
            r_cov,
            q,
            mode,
        })
    }

    /// `E[Θ_l²] = (1−γ)NP/L`.
    pub fn symbol_power(&self) -> f64 {
        (1.0 - self.gamma) * self.uses as f64 * self.power / self.users as f64
    }

    /// Combiner of user `l`, `q_l = C_l q`.
    pub fn user_combiner(&self, user: usize) -> DVector<f64> {
        self.q.component_mul(&self.spread[user])
    }

    /// Output SNR of user `l` from the three-term denominator.
    pub fn output_snr(&self, user: usize) -> f64 {
        let m = self.n_hat + 1;
        let eye = DMatrix::<f64>::identity(m, m);
        let q = &self.q;
        let ql = self.user_combiner(user);
        let own = ((&eye + &self.f).transpose() * q).norm_squared();
        let cross: f64 = (0..self.users)
            .filter(|&i| i != user)
            .map(|i| (self.f.transpose() * ql.component_mul(&self.spread[i])).norm_squared())
            .sum();
        let fb = (self.f.transpose() * q).norm_squared();
        let denom = self.sigma_b2 * own + (self.sigma_b2 + self.sigma_f2) * cross + self.sigma_f2 * fb;
        self.symbol_power() / denom
    }

    /// Output SNR from the covariance form `E[Θ²] / (qᵀRq)`.
    pub fn output_snr_quadratic(&self) -> f64 {
        self.symbol_power() / (self.q.transpose() * &self.r_cov * &self.q)[(0, 0)]
    }

    /// Predicted block error rate for `bits` per user.
    pub fn predicted_bler(&self, user: usize, bits: u32) -> f64 {
        bler_prediction(self.output_snr(user), bits as f64)
    }

    /// Stack user `l`'s entries of a per-(user, use) quantity:
    /// `[v(l, l), v(l, L), …, v(l, N−1)]`.
    pub fn stack<F: Fn(usize, usize) -> f64>(&self, user: usize, v: F) -> DVector<f64> {
        DVector::from_fn(self.n_hat + 1, |i, _| {
            if i == 0 {
                v(user, user)
            } else {
                v(user, self.users + i - 1)
            }
        })
    }

    /// Time-domain transmission of one trial. Returns each user's stacked
    /// observation vector.
    pub fn transmit(&self, theta: &[f64], tape: &mut TrialTape) -> Result<Vec<DVector<f64>>> {
        let l_users = self.users;
        if theta.len() != l_users || tape.users() != l_users || tape.uses() != self.uses {
            return Err(Error::mismatch("bmcl", "tape or message shape does not match the design"));
        }
        for &th in theta {
            tape.send(th)?;
        }
        let m = self.n_hat + 1;
        let mut nu = vec![vec![0.0; m]; l_users];
        for (l, v) in nu.iter_mut().enumerate() {
            v[0] = tape.z(l, l) - tape.x(l);
        }
        for k in 0..self.n_hat {
            let row = k + 1;
            let mut x = 0.0;
            for (fl, v) in self.f_users.iter().zip(&nu) {
                for (col, nv) in v.iter().enumerate().take(row) {
                    x += fl[(row, col)] * nv;
                }
            }
            let t = tape.send(x)?;
            for (l, v) in nu.iter_mut().enumerate() {
                v[row] = tape.z(l, t) - x;
            }
        }
        Ok((0..l_users).map(|l| self.stack(l, |u, t| tape.y(u, t))).collect())
    }

    /// User `l`'s stacked observation assembled from the noise draws alone:
    /// `e₁Θ_l + (I+F_l)n_l^b + F_l n_l^f + Σ_{l'≠l} F_{l'}(n_{l'}^b + n_{l'}^f)`.
    pub fn matrix_model(&self, user: usize, theta: f64, tape: &TrialTape) -> DVector<f64> {
        let nb = self.stack(user, |u, t| tape.n_b(u, t));
        let nf = self.stack(user, |u, t| tape.n_f(u, t));
        let fl = &self.f_users[user];
        let mut y = &nb + fl * (&nb + &nf);
        y[0] += theta;
        for other in (0..self.users).filter(|&i| i != user) {
            let nu = self.stack(other, |u, t| tape.n_b(u, t) + tape.n_f(u, t));
            y += &self.f_users[other] * nu;
        }
        y
    }

    /// Combiner estimates `q_lᵀ y_l`.
    pub fn estimate(&self, stacked: &[DVector<f64>]) -> Vec<f64> {
        stacked
            .iter()
            .enumerate()
            .map(|(l, y)| self.user_combiner(l).dot(y))
            .collect()
    }
}

/// Best design over a `γ` grid `{step, 2·step, …} ∩ (0, 1)`.
pub fn optimize_gamma(cfg: &ChannelConfig, step: f64) -> Result<BmclDesign> {
    if !(step > 0.0 && step < 0.5) {
        return Err(Error::validation(format!("gamma grid step must be in (0, 0.5), got {step}")));
    }
    let count = (1.0 / step).round() as usize;
    let mut best: Option<(f64, BmclDesign)> = None;
    let mut last_err = None;
    for i in 1..count {
        let gamma = i as f64 * step;
        if gamma >= 1.0 {
            break;
        }
        match BmclDesign::new(cfg, gamma, CombinerMode::Optimal) {
            Ok(d) => {
                let snr = d.output_snr(0);
                if best.as_ref().is_none_or(|(s, _)| snr > *s) {
                    best = Some((snr, d));
                }
            }
            Err(e @ Error::Solver(_)) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    best.map(|(_, d)| d)
        .ok_or_else(|| last_err.unwrap_or_else(|| Error::solver("no feasible gamma on the grid")))
}

/// BMCL as a complete code: design plus PAM at the symbol power.
#[derive(Debug, Clone)]
pub struct BmclCode {
    design: BmclDesign,
    pam: PamConstellation,
}

impl BmclCode {
    pub fn new(design: BmclDesign, bits: u32) -> Result<Self> {
        let pam = PamConstellation::new(bits, design.symbol_power())?;
        Ok(BmclCode { design, pam })
    }

    /// γ-optimised code for `cfg`.
    pub fn optimized(cfg: &ChannelConfig, bits: u32, step: f64) -> Result<Self> {
        Self::new(optimize_gamma(cfg, step)?, bits)
    }

    pub fn design(&self) -> &BmclDesign {
        &self.design
    }

    pub fn constellation(&self) -> &PamConstellation {
        &self.pam
    }
}

impl FeedbackCode for BmclCode {
    fn name(&self) -> &str {
        "bmcl"
    }

    fn users(&self) -> usize {
        self.design.users
    }

    fn uses(&self) -> usize {
        self.design.uses
    }

    fn bits(&self) -> u32 {
        self.pam.bits()
    }

    fn run(&self, words: &[u32], tape: &mut TrialTape) -> Result<Vec<u32>> {
        let theta = words
            .iter()
            .map(|&w| self.pam.map(w))
            .collect::<Result<Vec<_>>>()?;
        let stacked = self.design.transmit(&theta, tape)?;
        Ok(self
            .design
            .estimate(&stacked)
            .iter()
            .map(|&v| self.pam.demap(v))
            .collect())
    }
}
