//! Acceptance suite. One PASS/FAIL line per criterion; exits non-zero if any
//! criterion fails. All tolerances are fixed below.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;

use bcfeedback::bmcl::{asymptotic_energy, f_power, sum_capacity, BmclCode, GAMMA_STEP};
use bcfeedback::channel::{db_to_linear, derive_trial_rng};
use bcfeedback::harness::{run_monte_carlo, SimResult, SimSpec};
use bcfeedback::lqg::{lqg_symmetric_rate, LqgDesign};
use bcfeedback::ol::{OlCode, OlOptions};
use bcfeedback::scheme::Uncoded;
use bcfeedback::stats::{binomial_se, q_function};
use bcfeedback::{ChannelConfig, FeedbackCode, TrialTape};

const SEED: u64 = 20_240_917;
const MC_TRIALS: u64 = 1_000_000;
const K: u32 = 3;
const N: usize = 9;

const CAPACITY_TOL: f64 = 1e-6;
const LIMIT_GAP: f64 = 1e-2;
const MODEL_TOL: f64 = 1e-9;
const MODEL_TAPES: u64 = 10_000;
const MONO_GRID: usize = 200;
const SIGMAS: f64 = 3.0;
const ROUND_POWER_TRIALS: u64 = 200_000;

#[derive(Default)]
struct Report {
    failed: usize,
    lines: BTreeMap<u32, String>,
}

impl Report {
    fn line(&mut self, id: u32, ok: bool, what: &str, detail: String, started: Instant) {
        if !ok {
            self.failed += 1;
        }
        let text = format!(
            "criterion {id}: {} {what} ({detail}) [{:.1}s]",
            if ok { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64()
        );
        self.lines.insert(id, text);
    }
}

fn cfg(snr_db: f64, fb_db: Option<f64>) -> ChannelConfig {
    ChannelConfig::from_db(2, N, 1.0, snr_db, fb_db, SEED).expect("valid channel")
}

fn simulate(code: &dyn FeedbackCode, c: &ChannelConfig) -> SimResult {
    run_monte_carlo(code, c, &SimSpec::fixed(MC_TRIALS)).expect("simulation runs")
}

fn fmt_ci(r: &SimResult, user: usize) -> String {
    let (lo, hi) = r.ci(user);
    format!("{}[{:.2e},{:.2e}]", r.scheme, lo, hi)
}

/// `a ≤ b` is consistent with the intervals unless `a` is confidently larger.
fn not_above(a: &SimResult, b: &SimResult) -> bool {
    (0..2).all(|l| a.ci(l).0 <= b.ci(l).1)
}

/// `a < b` with disjoint intervals.
fn strictly_below(a: &SimResult, b: &SimResult) -> bool {
    (0..2).all(|l| a.ci(l).1 < b.ci(l).0)
}

fn capacity_equality(rep: &mut Report) {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for snr_db in [-5.0, 0.0, 5.0, 10.0, 15.0] {
        let snr = db_to_linear(snr_db);
        let cap = sum_capacity(snr, 2).unwrap();
        let lqg = lqg_symmetric_rate(snr, 2).unwrap();
        worst = worst.max((cap.c_sum - lqg.sum_rate).abs());
    }
    rep.line(1, worst < CAPACITY_TOL, "sum capacity equals LQG rate bound, L=2", format!("max gap {worst:.2e} bits"), t);
}

fn many_user_limit(rep: &mut Report) {
    let t = Instant::now();
    let snr = db_to_linear(10.0);
    let mut prev = f64::NEG_INFINITY;
    let mut increasing = true;
    let mut bounded = true;
    let mut last = None;
    let mut users = 2;
    while users <= 256 {
        let cap = sum_capacity(snr, users).unwrap();
        increasing &= cap.c_sum > prev;
        bounded &= cap.c_sum <= cap.c_limit;
        prev = cap.c_sum;
        last = Some(cap);
        users *= 2;
    }
    let last = last.unwrap();
    let gap = last.c_limit - last.c_sum;
    rep.line(
        2,
        increasing && bounded && gap < LIMIT_GAP,
        "sum capacity increasing in L and converging at 10 dB",
        format!("increasing={increasing} bounded={bounded} gap@256={gap:.3e}"),
        t,
    );
}

fn energy_monotone(rep: &mut Report) {
    let t = Instant::now();
    let grid: Vec<f64> = (1..=MONO_GRID)
        .map(|i| i as f64 / (MONO_GRID + 1) as f64)
        .collect();
    let mut asym_ok = true;
    let mut finite_ok = true;
    for users in [1, 2, 4, 8] {
        let asym: Vec<f64> = grid.iter().map(|&b| asymptotic_energy(b, users)).collect();
        asym_ok &= asym.windows(2).all(|w| w[1] < w[0]);
        for n_hat in [4, 8, 16] {
            let fin: Vec<f64> = grid.iter().map(|&b| f_power(b, users, n_hat).unwrap()).collect();
            finite_ok &= fin.windows(2).all(|w| w[1] < w[0]);
        }
    }
    rep.line(
        3,
        asym_ok && finite_ok,
        "energy maps strictly decreasing in beta",
        format!("asymptotic={asym_ok} finite={finite_ok}"),
        t,
    );
}

fn model_equivalence(rep: &mut Report) {
    let t = Instant::now();
    let c = cfg(4.0, Some(-20.0));
    let code = BmclCode::optimized(&c, K, GAMMA_STEP).unwrap();
    let d = code.design();
    let pam = code.constellation();
    let mut worst: f64 = 0.0;
    for trial in 0..MODEL_TAPES {
        let mut rng = derive_trial_rng(SEED, trial);
        let mut tape = TrialTape::draw(&c, &mut rng);
        let theta: Vec<f64> = (0..2).map(|_| pam.point(rng.random_range(0..pam.order()))).collect();
        let stacked = d.transmit(&theta, &mut tape).unwrap();
        for (l, y) in stacked.iter().enumerate() {
            let m = d.matrix_model(l, theta[l], &tape);
            worst = worst.max((y - m).amax());
        }
    }
    rep.line(4, worst < MODEL_TOL, "time-domain BMCL matches matrix model", format!("max |diff| {worst:.2e}"), t);
}

struct Sims {
    rows: Vec<SimResult>,
    bmcl_perfect_4: Option<SimResult>,
    bmcl_noisy_4: Option<SimResult>,
}

fn prediction_vs_simulation(rep: &mut Report, sims: &mut Sims) {
    let t = Instant::now();
    let mut ok = true;
    let mut details = Vec::new();
    for snr_db in [2.0, 4.0, 6.0] {
        for fb in [None, Some(-30.0), Some(-20.0)] {
            let c = cfg(snr_db, fb);
            let code = BmclCode::optimized(&c, K, GAMMA_STEP).unwrap();
            let r = simulate(&code, &c);
            for l in 0..2 {
                let p = code.design().predicted_bler(l, K);
                let se = binomial_se(p, r.trials);
                let z = (r.bler(l) - p).abs() / se;
                ok &= z <= SIGMAS;
                if l == 0 {
                    details.push(format!(
                        "{snr_db}dB/{}: pred {p:.3e} sim {:.3e} z={z:.2}",
                        fb.map_or("perfect".into(), |v| format!("{v}dB")),
                        r.bler(l)
                    ));
                }
            }
            if snr_db == 4.0 && fb.is_none() {
                sims.bmcl_perfect_4 = Some(r.clone());
            }
            if snr_db == 4.0 && fb == Some(-20.0) {
                sims.bmcl_noisy_4 = Some(r.clone());
            }
            sims.rows.push(r);
        }
    }
    rep.line(5, ok, "BMCL predicted BLER within 3 SE of simulation", details.join("; "), t);
}

fn perfect_ordering(rep: &mut Report, sims: &mut Sims) {
    let t = Instant::now();
    let c = cfg(4.0, None);
    let lqg = simulate(&LqgDesign::new(&c, K).unwrap(), &c);
    let eol = simulate(&OlCode::new(&c, K, OlOptions { enhanced: true, ..OlOptions::default() }).unwrap(), &c);
    let ol = simulate(&OlCode::new(&c, K, OlOptions::default()).unwrap(), &c);
    let bmcl = sims.bmcl_perfect_4.clone().unwrap();
    let lqg_bmcl = not_above(&lqg, &bmcl);
    let bmcl_eol = not_above(&bmcl, &eol);
    let bmcl_ol = not_above(&bmcl, &ol);
    let eol_ol = not_above(&eol, &ol);
    rep.line(
        6,
        lqg_bmcl && bmcl_eol && bmcl_ol && eol_ol,
        "perfect-feedback ordering LQG <= BMCL <= EOL <= OL at 4 dB",
        format!(
            "lqg<=bmcl {lqg_bmcl}, bmcl<=eol {bmcl_eol}, bmcl<=ol {bmcl_ol}, eol<=ol {eol_ol}; {} {} {} {}",
            fmt_ci(&lqg, 0),
            fmt_ci(&bmcl, 0),
            fmt_ci(&eol, 0),
            fmt_ci(&ol, 0)
        ),
        t,
    );
    sims.rows.extend([lqg, eol, ol]);
}

fn noisy_ordering(rep: &mut Report, sims: &mut Sims) {
    let t = Instant::now();
    let c = cfg(4.0, Some(-20.0));
    let lqg = simulate(&LqgDesign::new(&c, K).unwrap(), &c);
    let ol = simulate(&OlCode::new(&c, K, OlOptions::default()).unwrap(), &c);
    let bmcl = sims.bmcl_noisy_4.clone().unwrap();
    let vs_ol = strictly_below(&bmcl, &ol);
    let vs_lqg = strictly_below(&bmcl, &lqg);
    rep.line(
        7,
        vs_ol && vs_lqg,
        "BMCL below OL and LQG with -20 dB feedback noise at 4 dB",
        format!(
            "bmcl<ol {vs_ol}, bmcl<lqg {vs_lqg}; {} {} {}",
            fmt_ci(&bmcl, 0),
            fmt_ci(&ol, 0),
            fmt_ci(&lqg, 0)
        ),
        t,
    );
    sims.rows.extend([lqg, ol]);
}

/// Per-round power of OL with perfect feedback: mean and standard error of
/// `x_t²` for each use.
fn ol_round_power(c: &ChannelConfig) -> Vec<(f64, f64)> {
    let code = OlCode::new(c, K, OlOptions::default()).unwrap();
    let order = 1u32 << K;
    let mut sum = vec![0.0; N];
    let mut sum_sq = vec![0.0; N];
    for trial in 0..ROUND_POWER_TRIALS {
        let mut rng = derive_trial_rng(SEED ^ 0x5eed, trial);
        let mut tape = TrialTape::draw(c, &mut rng);
        let words = [rng.random_range(0..order), rng.random_range(0..order)];
        code.run(&words, &mut tape).unwrap();
        for (t, &x) in tape.transmitted().iter().enumerate() {
            sum[t] += x * x;
            sum_sq[t] += x.powi(4);
        }
    }
    let n = ROUND_POWER_TRIALS as f64;
    (0..N)
        .map(|t| {
            let mean = sum[t] / n;
            let var = (sum_sq[t] / n - mean * mean) * n / (n - 1.0);
            (mean, (var / n).sqrt())
        })
        .collect()
}

fn power_audits(rep: &mut Report, sims: &Sims) {
    let t = Instant::now();
    let bad: Vec<String> = sims
        .rows
        .iter()
        .filter(|r| !r.power_ok())
        .map(|r| format!("{}@{:?}dB:{:.4}", r.scheme, r.sigma_f2_db, r.avg_power()))
        .collect();
    let c = cfg(4.0, None);
    let rounds = ol_round_power(&c);
    let worst_z = rounds
        .iter()
        .map(|(m, se)| (m - c.power).abs() / se)
        .fold(0.0, f64::max);
    rep.line(
        8,
        bad.is_empty() && worst_z <= SIGMAS,
        "power audits on all rows and OL per-round power",
        format!(
            "{} rows, {} over budget {:?}; OL per-round worst z={worst_z:.2}",
            sims.rows.len(),
            bad.len(),
            bad
        ),
        t,
    );
}

fn uncoded_anchor(rep: &mut Report, sims: &mut Sims) {
    let t = Instant::now();
    let c = ChannelConfig::from_db(1, 1, 1.0, 0.0, None, SEED).unwrap();
    let r = simulate(&Uncoded::new(1, 1, 1, 1.0).unwrap(), &c);
    let p = q_function(2f64.sqrt());
    let z = (r.bler(0) - p).abs() / binomial_se(p, r.trials);
    // Nearest-point BPSK on y = x + N(0, σ²) errs with Q(√(P/σ²)).
    let p_snr = q_function(c.snr().sqrt());
    let z_snr = (r.bler(0) - p_snr).abs() / binomial_se(p_snr, r.trials);
    rep.line(
        9,
        z <= SIGMAS,
        "uncoded BPSK at 0 dB matches Q(sqrt 2)",
        format!(
            "sim {:.5e} vs {p:.5e}, z={z:.2}; Q(sqrt(P/sigma_b2)) = {p_snr:.5e}, z={z_snr:.2}",
            r.bler(0)
        ),
        t,
    );
    sims.rows.push(r);
}

fn main() -> ExitCode {
    let mut rep = Report::default();
    let mut sims = Sims {
        rows: Vec::new(),
        bmcl_perfect_4: None,
        bmcl_noisy_4: None,
    };
    capacity_equality(&mut rep);
    many_user_limit(&mut rep);
    energy_monotone(&mut rep);
    model_equivalence(&mut rep);
    prediction_vs_simulation(&mut rep, &mut sims);
    perfect_ordering(&mut rep, &mut sims);
    noisy_ordering(&mut rep, &mut sims);
    uncoded_anchor(&mut rep, &mut sims);
    power_audits(&mut rep, &sims);
    for text in rep.lines.values() {
        println!("{text}");
    }
    println!("acceptance: {} of 9 criteria passed", 9 - rep.failed);
    if rep.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
