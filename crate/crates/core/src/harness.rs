//! Monte Carlo orchestration.
//!
//! Trials are grouped into fixed-size batches and batches into fixed-size
//! waves. A wave is evaluated in parallel, then its batches are merged in
//! index order and the stopping rule is checked after each one, so the
//! result depends only on `(seed, spec)` and never on the worker count.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::bmcl::{BmclCode, GAMMA_STEP};
use crate::channel::{derive_trial_rng, ChannelConfig, PowerAudit, TrialTape};
use crate::error::{Error, Result};
use crate::lqg::LqgDesign;
use crate::ol::{OlCode, OlOptions};
use crate::scheme::{tdd_wrap, FeedbackCode, Uncoded};
use crate::stats::wilson_interval;

/// Trials per batch.
pub const BATCH: u64 = 2_000;
/// Batches evaluated together before the stopping rule is checked.
pub const WAVE: usize = 32;
/// Rows whose empirical power exceeds `P` by more than this factor fail a sweep.
pub const POWER_FAIL_FACTOR: f64 = 1.01;

/// The codes the harness can build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SchemeKind {
    Ol,
    Eol,
    Lqg,
    Bmcl,
    SkTdd,
    Uncoded,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 6] = [
        SchemeKind::Ol,
        SchemeKind::Eol,
        SchemeKind::Lqg,
        SchemeKind::Bmcl,
        SchemeKind::SkTdd,
        SchemeKind::Uncoded,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SchemeKind::Ol => "ol",
            SchemeKind::Eol => "eol",
            SchemeKind::Lqg => "lqg",
            SchemeKind::Bmcl => "bmcl",
            SchemeKind::SkTdd => "sk-tdd",
            SchemeKind::Uncoded => "uncoded",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeKind::ALL
            .iter()
            .find(|k| k.as_str() == s)
            .copied()
            .ok_or_else(|| Error::validation(format!("unknown scheme `{s}`")))
    }
}

/// Scheme-specific knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodeOptions {
    /// OL/EOL balance gain.
    pub g: f64,
    /// BMCL γ grid step.
    pub gamma_step: f64,
}

impl Default for CodeOptions {
    fn default() -> Self {
        CodeOptions {
            g: 1.0,
            gamma_step: GAMMA_STEP,
        }
    }
}

/// Build a code for `cfg` with `bits` per user.
pub fn build_code(
    kind: SchemeKind,
    cfg: &ChannelConfig,
    bits: u32,
    opts: CodeOptions,
) -> Result<Box<dyn FeedbackCode>> {
    cfg.validate()?;
    let ol_opts = |enhanced| OlOptions {
        enhanced,
        g: opts.g,
        ..Default::default()
    };
    Ok(match kind {
        SchemeKind::Ol | SchemeKind::Eol => {
            if cfg.users != 2 {
                return Err(Error::mismatch(kind.as_str(), format!("needs L = 2, got {}", cfg.users)));
            }
            Box::new(OlCode::new(cfg, bits, ol_opts(kind == SchemeKind::Eol))?)
        }
        SchemeKind::Lqg => Box::new(LqgDesign::new(cfg, bits)?),
        SchemeKind::Bmcl => Box::new(BmclCode::optimized(cfg, bits, opts.gamma_step)?),
        SchemeKind::SkTdd => {
            if cfg.users != 2 {
                return Err(Error::mismatch("sk-tdd", format!("needs L = 2, got {}", cfg.users)));
            }
            if !cfg.uses.is_multiple_of(2) {
                return Err(Error::validation(format!(
                    "TDD needs an even blocklength, got {}",
                    cfg.uses
                )));
            }
            let single = cfg.with_users_uses(1, cfg.uses / 2);
            Box::new(tdd_wrap(OlCode::sk(&single, bits)?, cfg.uses)?)
        }
        SchemeKind::Uncoded => Box::new(Uncoded::new(cfg.users, cfg.uses, bits, cfg.power)?),
    })
}

/// Monte Carlo budget and stopping rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSpec {
    /// Maximum number of trials.
    pub trials: u64,
    /// Stop once every user has at least this many block errors (0 disables).
    pub min_errors: u64,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for SimSpec {
    fn default() -> Self {
        SimSpec {
            trials: 1_000_000,
            min_errors: 100,
            threads: None,
        }
    }
}

impl SimSpec {
    pub fn fixed(trials: u64) -> Self {
        SimSpec {
            trials,
            min_errors: 0,
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::validation("trial count must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(Error::validation("thread count must be at least 1"));
        }
        Ok(())
    }
}

/// Outcome of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub scheme: String,
    pub users: usize,
    pub bits: u32,
    pub uses: usize,
    pub snr_b_db: f64,
    /// Feedback noise in dB; `None` is perfect feedback.
    pub sigma_f2_db: Option<f64>,
    pub errors: Vec<u64>,
    pub trials: u64,
    pub power: f64,
    pub audit: PowerAudit,
    pub seconds: f64,
}

impl SimResult {
    pub fn bler(&self, user: usize) -> f64 {
        self.errors[user] as f64 / self.trials as f64
    }

    /// 95% Wilson interval of user `l`'s BLER.
    pub fn ci(&self, user: usize) -> (f64, f64) {
        wilson_interval(self.errors[user], self.trials)
    }

    /// Mean BLER over users.
    pub fn mean_bler(&self) -> f64 {
        (0..self.users).map(|l| self.bler(l)).sum::<f64>() / self.users as f64
    }

    pub fn avg_power(&self) -> f64 {
        self.audit.average_power()
    }

    /// `avg_power ≤ P + 3·SE`.
    pub fn power_ok(&self) -> bool {
        self.audit.within_budget(self.power)
    }
}

#[derive(Debug, Clone)]
struct BatchStats {
    trials: u64,
    errors: Vec<u64>,
    audit: PowerAudit,
}

fn run_batch(code: &dyn FeedbackCode, cfg: &ChannelConfig, start: u64, count: u64) -> Result<BatchStats> {
    let users = code.users();
    let order = 1u32 << code.bits();
    let mut errors = vec![0u64; users];
    let mut audit = PowerAudit::new(code.uses());
    let mut words = vec![0u32; users];
    for trial in start..start + count {
        let mut rng = derive_trial_rng(cfg.seed, trial);
        let mut tape = TrialTape::draw(cfg, &mut rng);
        for w in words.iter_mut() {
            *w = rng.random_range(0..order);
        }
        let decoded = code.run(&words, &mut tape)?;
        for ((e, d), w) in errors.iter_mut().zip(&decoded).zip(&words) {
            *e += (d != w) as u64;
        }
        audit.record(tape.energy());
    }
    Ok(BatchStats {
        trials: count,
        errors,
        audit,
    })
}

fn monte_carlo_inner(code: &dyn FeedbackCode, cfg: &ChannelConfig, spec: &SimSpec) -> Result<(u64, Vec<u64>, PowerAudit)> {
    let users = code.users();
    let mut trials = 0u64;
    let mut errors = vec![0u64; users];
    let mut audit = PowerAudit::new(code.uses());
    let total_batches = spec.trials.div_ceil(BATCH);
    let mut next = 0u64;
    while next < total_batches {
        let wave_end = (next + WAVE as u64).min(total_batches);
        let stats = (next..wave_end)
            .into_par_iter()
            .map(|b| {
                let start = b * BATCH;
                let count = BATCH.min(spec.trials - start);
                run_batch(code, cfg, start, count)
            })
            .collect::<Result<Vec<_>>>()?;
        for s in stats {
            trials += s.trials;
            for (e, se) in errors.iter_mut().zip(&s.errors) {
                *e += se;
            }
            audit.merge(&s.audit);
            if spec.min_errors > 0 && errors.iter().all(|&e| e >= spec.min_errors) {
                return Ok((trials, errors, audit));
            }
        }
        next = wave_end;
    }
    Ok((trials, errors, audit))
}

/// Run `code` on `cfg` until the stopping rule fires.
pub fn run_monte_carlo(code: &dyn FeedbackCode, cfg: &ChannelConfig, spec: &SimSpec) -> Result<SimResult> {
    spec.validate()?;
    cfg.validate()?;
    if code.users() != cfg.users || code.uses() != cfg.uses {
        return Err(Error::mismatch(
            code.name().to_string(),
            format!(
                "code is for L = {}, N = {} but channel has L = {}, N = {}",
                code.users(),
                code.uses(),
                cfg.users,
                cfg.uses
            ),
        ));
    }
    let started = Instant::now();
    let (trials, errors, audit) = match spec.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::validation(format!("cannot build thread pool: {e}")))?
            .install(|| monte_carlo_inner(code, cfg, spec))?,
        None => monte_carlo_inner(code, cfg, spec)?,
    };
    let fb_db = (cfg.sigma_f2 > 0.0).then(|| crate::channel::linear_to_db(cfg.sigma_f2));
    Ok(SimResult {
        scheme: code.name().to_string(),
        users: cfg.users,
        bits: code.bits(),
        uses: cfg.uses,
        snr_b_db: crate::channel::linear_to_db(cfg.snr()),
        sigma_f2_db: fb_db,
        errors,
        trials,
        power: cfg.power,
        audit,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// A grid of configurations for one scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub scheme: SchemeKind,
    pub users: usize,
    pub bits: u32,
    pub uses: usize,
    pub power: f64,
    pub snr_db: Vec<f64>,
    /// Feedback noise levels in dB; `None` is perfect feedback.
    pub fb_db: Vec<Option<f64>>,
    pub sim: SimSpec,
    pub seed: u64,
    pub code: CodeOptions,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.snr_db.is_empty() || self.fb_db.is_empty() {
            return Err(Error::validation("sweep grids must not be empty"));
        }
        self.sim.validate()
    }

    /// Channel configuration of one grid point.
    pub fn config(&self, snr_db: f64, fb_db: Option<f64>) -> Result<ChannelConfig> {
        ChannelConfig::from_db(self.users, self.uses, self.power, snr_db, fb_db, self.seed)
    }

    fn key(&self, snr_db: f64, fb_db: Option<f64>) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.scheme,
            self.users,
            self.bits,
            self.uses,
            fmt_float(snr_db),
            fmt_db(fb_db)
        )
    }
}

/// Evaluate the Cartesian product of the grids, passing each finished row to
/// `emit` in grid order. Grid points whose key is in `skip` are not run.
pub fn sweep_with<F>(spec: &SweepSpec, skip: &BTreeSet<String>, mut emit: F) -> Result<Vec<SimResult>>
where
    F: FnMut(&SimResult) -> Result<()>,
{
    spec.validate()?;
    let mut out = Vec::new();
    for &fb in &spec.fb_db {
        for &snr in &spec.snr_db {
            if skip.contains(&spec.key(snr, fb)) {
                continue;
            }
            let cfg = spec.config(snr, fb)?;
            let code = build_code(spec.scheme, &cfg, spec.bits, spec.code)?;
            let mut res = run_monte_carlo(code.as_ref(), &cfg, &spec.sim)?;
            res.scheme = spec.scheme.to_string();
            res.snr_b_db = snr;
            res.sigma_f2_db = fb;
            emit(&res)?;
            if res.avg_power() > POWER_FAIL_FACTOR * res.power {
                return Err(Error::solver(format!(
                    "power audit failed for {} at {} dB: {} > {}",
                    res.scheme,
                    snr,
                    res.avg_power(),
                    POWER_FAIL_FACTOR * res.power
                )));
            }
            out.push(res);
        }
    }
    Ok(out)
}

/// [`sweep_with`] without skipping or streaming.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<SimResult>> {
    sweep_with(spec, &BTreeSet::new(), |_| Ok(()))
}

/// Run a sweep into a CSV file, appending only the grid points not already
/// present so an interrupted sweep can be resumed.
pub fn sweep_to_csv(spec: &SweepSpec, path: &Path) -> Result<Vec<SimResult>> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let done = if path.exists() {
        completed_keys(path)?
    } else {
        BTreeSet::new()
    };
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err)?;
    let mut w = BufWriter::new(file);
    if done.is_empty() && path.metadata().map_err(io_err)?.len() == 0 {
        writeln!(w, "{CSV_HEADER}").map_err(io_err)?;
    }
    let rows = sweep_with(spec, &done, |r| {
        write_rows(&mut w, r).map_err(io_err)?;
        w.flush().map_err(io_err)
    })?;
    Ok(rows)
}

/// CSV column names.
pub const CSV_HEADER: &str =
    "scheme,L,K,N,snr_b_db,sigma_f2_db,user,bler,ci_lo,ci_hi,errors,trials,avg_power";

/// Nine significant digits in scientific notation.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.8e}")
}

fn fmt_db(v: Option<f64>) -> String {
    v.map_or_else(|| "-inf".to_string(), fmt_float)
}

fn write_rows<W: Write>(w: &mut W, r: &SimResult) -> std::io::Result<()> {
    for user in 0..r.users {
        let (lo, hi) = r.ci(user);
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.scheme,
            r.users,
            r.bits,
            r.uses,
            fmt_float(r.snr_b_db),
            fmt_db(r.sigma_f2_db),
            user + 1,
            fmt_float(r.bler(user)),
            fmt_float(lo),
            fmt_float(hi),
            r.errors[user],
            r.trials,
            fmt_float(r.avg_power())
        )?;
    }
    Ok(())
}

/// Write results as CSV, one line per user.
pub fn emit_csv(results: &[SimResult], path: &Path) -> Result<()> {
    if results.is_empty() {
        return Err(Error::validation("no results to write"));
    }
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    writeln!(w, "{CSV_HEADER}").map_err(io_err)?;
    for r in results {
        write_rows(&mut w, r).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// One parsed CSV line.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub scheme: String,
    pub users: usize,
    pub bits: u32,
    pub uses: usize,
    pub snr_b_db: f64,
    pub sigma_f2_db: Option<f64>,
    pub user: usize,
    pub bler: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub errors: u64,
    pub trials: u64,
    pub avg_power: f64,
}

fn parse_field<T: FromStr>(s: &str, name: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::validation(format!("bad CSV field {name}: `{s}`")))
}

impl FromStr for CsvRow {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 13 {
            return Err(Error::validation(format!("expected 13 CSV fields, got {}", f.len())));
        }
        Ok(CsvRow {
            scheme: f[0].to_string(),
            users: parse_field(f[1], "L")?,
            bits: parse_field(f[2], "K")?,
            uses: parse_field(f[3], "N")?,
            snr_b_db: parse_field(f[4], "snr_b_db")?,
            sigma_f2_db: if f[5] == "-inf" {
                None
            } else {
                Some(parse_field(f[5], "sigma_f2_db")?)
            },
            user: parse_field(f[6], "user")?,
            bler: parse_field(f[7], "bler")?,
            ci_lo: parse_field(f[8], "ci_lo")?,
            ci_hi: parse_field(f[9], "ci_hi")?,
            errors: parse_field(f[10], "errors")?,
            trials: parse_field(f[11], "trials")?,
            avg_power: parse_field(f[12], "avg_power")?,
        })
    }
}

/// Parse a CSV written by [`emit_csv`].
pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        rows.push(line.parse()?);
    }
    Ok(rows)
}

fn completed_keys(path: &Path) -> Result<BTreeSet<String>> {
    Ok(read_csv(path)?
        .into_iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{}",
                r.scheme,
                r.users,
                r.bits,
                r.uses,
                fmt_float(r.snr_b_db),
                fmt_db(r.sigma_f2_db)
            )
        })
        .collect())
}

/// Whitespace-separated plot data: one block per (scheme, feedback level)
/// with columns `snr_b_db mean_bler ci_lo ci_hi`, blocks separated by two
/// blank lines.
pub fn emit_plotdata(results: &[SimResult], path: &Path) -> Result<()> {
    if results.is_empty() {
        return Err(Error::validation("no results to write"));
    }
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut groups: Vec<(String, Vec<&SimResult>)> = Vec::new();
    for r in results {
        let key = format!(
            "scheme={} L={} K={} N={} sigma_f2_db={}",
            r.scheme,
            r.users,
            r.bits,
            r.uses,
            fmt_db(r.sigma_f2_db)
        );
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for (i, (key, rows)) in groups.iter().enumerate() {
        if i > 0 {
            writeln!(w, "\n").map_err(io_err)?;
        }
        writeln!(w, "# {key}").map_err(io_err)?;
        let mut rows = rows.clone();
        rows.sort_by(|a, b| a.snr_b_db.total_cmp(&b.snr_b_db));
        for r in rows {
            let total: u64 = r.errors.iter().sum();
            let (lo, hi) = wilson_interval(total, r.trials * r.users as u64);
            writeln!(
                w,
                "{} {} {} {}",
                fmt_float(r.snr_b_db),
                fmt_float(r.mean_bler()),
                fmt_float(lo),
                fmt_float(hi)
            )
            .map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SweepSpec {
        SweepSpec {
            scheme: SchemeKind::Ol,
            users: 2,
            bits: 2,
            uses: 6,
            power: 1.0,
            snr_db: vec![2.0],
            fb_db: vec![None],
            sim: SimSpec::fixed(5_000),
            seed: 3,
            code: CodeOptions::default(),
        }
    }

    #[test]
    fn scheme_names_round_trip() {
        for k in SchemeKind::ALL {
            assert_eq!(k.as_str().parse::<SchemeKind>().unwrap(), k);
        }
        assert!("deepcode".parse::<SchemeKind>().is_err());
    }

    #[test]
    fn rejects_zero_trials_and_mismatch() {
        let cfg = ChannelConfig::new(2, 6, 1.0, 1.0, 0.0, 1).unwrap();
        let code = build_code(SchemeKind::Ol, &cfg, 2, CodeOptions::default()).unwrap();
        assert!(run_monte_carlo(code.as_ref(), &cfg, &SimSpec::fixed(0)).is_err());
        let other = ChannelConfig::new(2, 8, 1.0, 1.0, 0.0, 1).unwrap();
        assert!(run_monte_carlo(code.as_ref(), &other, &SimSpec::fixed(10)).is_err());
        let three = ChannelConfig::new(3, 6, 1.0, 1.0, 0.0, 1).unwrap();
        assert!(build_code(SchemeKind::Ol, &three, 2, CodeOptions::default()).is_err());
        let odd = ChannelConfig::new(2, 7, 1.0, 1.0, 0.0, 1).unwrap();
        assert!(build_code(SchemeKind::SkTdd, &odd, 2, CodeOptions::default()).is_err());
    }

    #[test]
    fn stopping_rule_is_batch_aligned() {
        let cfg = ChannelConfig::from_db(1, 1, 1.0, 0.0, None, 5).unwrap();
        let code = build_code(SchemeKind::Uncoded, &cfg, 1, CodeOptions::default()).unwrap();
        let spec = SimSpec {
            trials: 1_000_000,
            min_errors: 50,
            threads: None,
        };
        let r = run_monte_carlo(code.as_ref(), &cfg, &spec).unwrap();
        assert_eq!(r.trials, BATCH);
        assert!(r.errors[0] >= 50);
        let capped = run_monte_carlo(code.as_ref(), &cfg, &SimSpec::fixed(2_345)).unwrap();
        assert_eq!(capped.trials, 2_345);
    }

    #[test]
    fn one_point_sweep_gives_one_row() {
        let rows = sweep(&small_spec()).unwrap();
        assert_eq!(rows.len(), 1);
        let r = &rows[0];
        for l in 0..2 {
            let (lo, hi) = r.ci(l);
            assert!(lo <= r.bler(l) && r.bler(l) <= hi);
            assert!(r.errors[l] <= r.trials);
        }
        assert!(r.power_ok());
    }

    #[test]
    fn float_format_has_nine_significant_digits() {
        assert_eq!(fmt_float(0.0786496035), "7.86496035e-2");
        let v = 1.234567891234;
        let back: f64 = fmt_float(v).parse().unwrap();
        assert!((back - 1.23456789).abs() < 1e-15);
    }
}
