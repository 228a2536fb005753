//! Common interface of all codes, plus the uncoded baseline and the
//! time-division wrapper that serves users one after another with a
//! single-user code.

use crate::channel::TrialTape;
use crate::error::{Error, Result};
use crate::modulation::PamConstellation;

/// A broadcast feedback code: one `K`-bit message per user in, one decoded
/// word per user out, consuming exactly `N` uses of a tape.
pub trait FeedbackCode: Send + Sync {
    fn name(&self) -> &str;
    fn users(&self) -> usize;
    fn uses(&self) -> usize;
    fn bits(&self) -> u32;
    /// Encode `words`, drive the channel through `tape` and decode.
    fn run(&self, words: &[u32], tape: &mut TrialTape) -> Result<Vec<u32>>;
}

/// Uncoded PAM with repetition: user `l` owns every use `t` with
/// `t mod L = l` and averages its repetitions. Requires `L | N`.
#[derive(Debug, Clone)]
pub struct Uncoded {
    users: usize,
    uses: usize,
    pam: PamConstellation,
}

impl Uncoded {
    pub fn new(users: usize, uses: usize, bits: u32, power: f64) -> Result<Self> {
        if users == 0 || uses == 0 || !uses.is_multiple_of(users) {
            return Err(Error::mismatch(
                "uncoded",
                format!("needs N to be a multiple of L, got N = {uses}, L = {users}"),
            ));
        }
        Ok(Uncoded {
            users,
            uses,
            pam: PamConstellation::new(bits, power)?,
        })
    }
}

impl FeedbackCode for Uncoded {
    fn name(&self) -> &str {
        "uncoded"
    }

    fn users(&self) -> usize {
        self.users
    }

    fn uses(&self) -> usize {
        self.uses
    }

    fn bits(&self) -> u32 {
        self.pam.bits()
    }

    fn run(&self, words: &[u32], tape: &mut TrialTape) -> Result<Vec<u32>> {
        if words.len() != self.users || tape.users() != self.users || tape.uses() != self.uses {
            return Err(Error::mismatch("uncoded", "tape or message shape does not match"));
        }
        let symbols = words
            .iter()
            .map(|&w| self.pam.map(w))
            .collect::<Result<Vec<_>>>()?;
        let mut acc = vec![0.0; self.users];
        for t in 0..self.uses {
            let owner = t % self.users;
            tape.send(symbols[owner])?;
            acc[owner] += tape.y(owner, t);
        }
        let reps = (self.uses / self.users) as f64;
        Ok(acc.iter().map(|s| self.pam.demap(s / reps)).collect())
    }
}

/// Two-user time division: user 1 gets uses `0..N/2`, user 2 gets
/// `N/2..N`, each served by the same single-user code of `N/2` uses.
pub struct Tdd<C: FeedbackCode> {
    inner: C,
    name: String,
}

impl<C: FeedbackCode> Tdd<C> {
    pub fn new(inner: C) -> Result<Self> {
        if inner.users() != 1 {
            return Err(Error::mismatch(
                "tdd",
                format!("inner code must be single-user, got L = {}", inner.users()),
            ));
        }
        let name = format!("{}-tdd", inner.name());
        Ok(Tdd { inner, name })
    }

    pub fn inner(&self) -> &C {
        &self.inner
    }
}

/// Wrap a single-user code of `N/2` uses into a two-user code of `N` uses.
pub fn tdd_wrap<C: FeedbackCode>(inner: C, total_uses: usize) -> Result<Tdd<C>> {
    if !total_uses.is_multiple_of(2) {
        return Err(Error::validation(format!("TDD needs an even blocklength, got {total_uses}")));
    }
    if inner.uses() * 2 != total_uses {
        return Err(Error::mismatch(
            "tdd",
            format!("inner code has {} uses, expected {}", inner.uses(), total_uses / 2),
        ));
    }
    Tdd::new(inner)
}

impl<C: FeedbackCode> FeedbackCode for Tdd<C> {
    fn name(&self) -> &str {
        &self.name
    }

    fn users(&self) -> usize {
        2
    }

    fn uses(&self) -> usize {
        2 * self.inner.uses()
    }

    fn bits(&self) -> u32 {
        self.inner.bits()
    }

    fn run(&self, words: &[u32], tape: &mut TrialTape) -> Result<Vec<u32>> {
        let half = self.inner.uses();
        if words.len() != 2 || tape.users() != 2 || tape.uses() != 2 * half {
            return Err(Error::mismatch(self.name.clone(), "tape or message shape does not match"));
        }
        let mut decoded = Vec::with_capacity(2);
        for (user, &word) in words.iter().enumerate() {
            let offset = user * half;
            let n_b = (0..half).map(|t| tape.n_b(user, offset + t)).collect();
            let n_f = (0..half).map(|t| tape.n_f(user, offset + t)).collect();
            let mut sub = TrialTape::from_noise(1, half, n_b, n_f);
            decoded.push(self.inner.run(&[word], &mut sub)?[0]);
            for &x in sub.transmitted() {
                tape.send(x)?;
            }
        }
        Ok(decoded)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{derive_trial_rng, ChannelConfig};

    #[test]
    fn uncoded_noiseless() {
        let cfg = ChannelConfig::new(2, 4, 1.0, 1e-12, 0.0, 0).unwrap();
        let code = Uncoded::new(2, 4, 3, 1.0).unwrap();
        let mut tape = TrialTape::draw(&cfg, &mut derive_trial_rng(0, 0));
        assert_eq!(code.run(&[5, 2], &mut tape).unwrap(), vec![5, 2]);
        assert_eq!(tape.elapsed(), 4);
        assert!(Uncoded::new(2, 3, 1, 1.0).is_err());
    }

    #[test]
    fn tdd_replays_subtape_onto_main_tape() {
        let cfg = ChannelConfig::new(2, 4, 1.0, 0.5, 0.1, 0).unwrap();
        let code = tdd_wrap(Uncoded::new(1, 2, 2, 1.0).unwrap(), 4).unwrap();
        assert_eq!(code.name(), "uncoded-tdd");
        let mut tape = TrialTape::draw(&cfg, &mut derive_trial_rng(0, 1));
        code.run(&[1, 3], &mut tape).unwrap();
        assert_eq!(tape.elapsed(), 4);
        let eta = PamConstellation::new(2, 1.0).unwrap();
        assert_eq!(tape.x(0), eta.point(1));
        assert_eq!(tape.x(3), eta.point(3));
    }

    #[test]
    fn tdd_rejects_bad_shapes() {
        assert!(tdd_wrap(Uncoded::new(1, 2, 1, 1.0).unwrap(), 5).is_err());
        assert!(tdd_wrap(Uncoded::new(1, 2, 1, 1.0).unwrap(), 6).is_err());
        assert!(Tdd::new(Uncoded::new(2, 2, 1, 1.0).unwrap()).is_err());
    }
}
