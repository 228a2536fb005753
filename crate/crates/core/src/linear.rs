//! Exact second-moment bookkeeping for linear feedback codes.
//!
//! Every signal in a linear scheme is a fixed linear combination of the
//! primitive random variables of one trial: the `L` message symbols, the
//! forward noises `n_b[l][t]` and the feedback noises `n_f[l][t]`. These are
//! mutually independent and zero-mean, so covariances of any two signals
//! follow from their coefficient vectors.

use crate::channel::TrialTape;

/// Index layout and variances of the primitive variables.
#[derive(Debug, Clone)]
pub struct Basis {
    users: usize,
    uses: usize,
    variance: Vec<f64>,
}

impl Basis {
    pub fn new(users: usize, uses: usize, symbol_var: f64, sigma_b2: f64, sigma_f2: f64) -> Self {
        let mut variance = vec![symbol_var; users];
        variance.extend(std::iter::repeat_n(sigma_b2, users * uses));
        variance.extend(std::iter::repeat_n(sigma_f2, users * uses));
        Basis {
            users,
            uses,
            variance,
        }
    }

    pub fn dim(&self) -> usize {
        self.variance.len()
    }

    pub fn theta(&self, user: usize) -> usize {
        user
    }

    pub fn n_b(&self, user: usize, t: usize) -> usize {
        self.users + user * self.uses + t
    }

    pub fn n_f(&self, user: usize, t: usize) -> usize {
        self.users + self.users * self.uses + user * self.uses + t
    }

    pub fn zero(&self) -> LinearForm {
        LinearForm(vec![0.0; self.dim()])
    }

    pub fn unit(&self, index: usize) -> LinearForm {
        let mut f = self.zero();
        f.0[index] = 1.0;
        f
    }

    pub fn cov(&self, a: &LinearForm, b: &LinearForm) -> f64 {
        a.0.iter()
            .zip(&b.0)
            .zip(&self.variance)
            .map(|((u, v), s)| u * v * s)
            .sum()
    }

    pub fn var(&self, a: &LinearForm) -> f64 {
        self.cov(a, a)
    }

    /// The primitive values of one trial, in basis order.
    pub fn realise(&self, symbols: &[f64], tape: &TrialTape) -> Vec<f64> {
        let mut v = symbols.to_vec();
        for l in 0..self.users {
            v.extend((0..self.uses).map(|t| tape.n_b(l, t)));
        }
        for l in 0..self.users {
            v.extend((0..self.uses).map(|t| tape.n_f(l, t)));
        }
        v
    }
}

/// Coefficient vector over a [`Basis`].
#[derive(Debug, Clone, PartialEq)]
pub struct LinearForm(pub Vec<f64>);

impl LinearForm {
    pub fn coeff(&self, index: usize) -> f64 {
        self.0[index]
    }

    /// `self += k * other`.
    pub fn axpy(&mut self, k: f64, other: &LinearForm) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += k * b;
        }
    }

    pub fn scaled(&self, k: f64) -> LinearForm {
        LinearForm(self.0.iter().map(|v| k * v).collect())
    }

    pub fn plus(&self, other: &LinearForm) -> LinearForm {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn eval(&self, primitives: &[f64]) -> f64 {
        self.0.iter().zip(primitives).map(|(a, b)| a * b).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariance_of_units() {
        let b = Basis::new(2, 3, 1.0, 0.5, 0.25);
        assert_eq!(b.dim(), 2 + 6 + 6);
        assert_eq!(b.var(&b.unit(b.theta(1))), 1.0);
        assert_eq!(b.var(&b.unit(b.n_b(1, 2))), 0.5);
        assert_eq!(b.var(&b.unit(b.n_f(0, 0))), 0.25);
        assert_eq!(b.cov(&b.unit(b.n_b(0, 1)), &b.unit(b.n_b(1, 1))), 0.0);
    }

    #[test]
    fn sum_of_forms() {
        let b = Basis::new(1, 2, 2.0, 1.0, 0.0);
        let y = b.unit(b.theta(0)).plus(&b.unit(b.n_b(0, 0)));
        assert_eq!(b.var(&y), 3.0);
        assert_eq!(b.cov(&y, &b.unit(b.theta(0))), 2.0);
        let mut e = y.scaled(0.5);
        e.axpy(-1.0, &b.unit(b.theta(0)));
        assert!((b.var(&e) - (0.25 * 3.0 - 2.0 * 0.5 * 2.0 + 2.0)).abs() < 1e-15);
    }

    #[test]
    fn realise_matches_layout() {
        let n_b = vec![1.0, 2.0, 3.0, 4.0];
        let n_f = vec![5.0, 6.0, 7.0, 8.0];
        let tape = TrialTape::from_noise(2, 2, n_b, n_f);
        let b = Basis::new(2, 2, 1.0, 1.0, 1.0);
        let v = b.realise(&[-1.0, 1.0], &tape);
        assert_eq!(v[b.n_b(1, 0)], 3.0);
        assert_eq!(v[b.n_f(0, 1)], 6.0);
        assert_eq!(v[b.theta(1)], 1.0);
    }
}
