//! Finite continuous-time Markov chains: probability vectors, birth-death
//! rates, dense generators, stationary and transient laws.

use std::fmt::{Display, Write as _};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Probability mass function on the integer support `offset..offset + len`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pmf {
    pub offset: usize,
    pub weights: Vec<f64>,
}

impl Pmf {
    /// Checks nonnegativity and unit mass to within 1e-12.
    pub fn new(offset: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("empty pmf".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "negative or NaN weight {w}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("weights sum to {total}")));
        }
        Ok(Pmf { offset, weights })
    }

    /// Scales nonnegative weights to unit mass.
    pub fn normalized(offset: usize, mut weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Invariant(format!("cannot normalize mass {total}")));
        }
        for w in &mut weights {
            *w /= total;
        }
        Pmf::new(offset, weights)
    }

    pub fn point_mass(offset: usize, len: usize, at: usize) -> Self {
        let mut weights = vec![0.0; len];
        weights[at - offset] = 1.0;
        Pmf { offset, weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Largest state in the support.
    pub fn last_state(&self) -> usize {
        self.offset + self.weights.len() - 1
    }

    pub fn prob(&self, k: usize) -> f64 {
        if k < self.offset {
            return 0.0;
        }
        self.weights.get(k - self.offset).copied().unwrap_or(0.0)
    }

    /// `P(X > n)`, summed from the top to keep small tails accurate.
    pub fn tail(&self, n: usize) -> f64 {
        let mut acc = 0.0;
        for k in (0..self.weights.len()).rev() {
            if self.offset + k <= n {
                break;
            }
            acc += self.weights[k];
        }
        acc
    }

    /// Total variation distance; supports may differ.
    pub fn tv(&self, other: &Pmf) -> f64 {
        let lo = self.offset.min(other.offset);
        let hi = self.last_state().max(other.last_state());
        0.5 * (lo..=hi)
            .map(|k| (self.prob(k) - other.prob(k)).abs())
            .sum::<f64>()
    }

    pub fn mean(&self) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(i, w)| (self.offset + i) as f64 * w)
            .sum()
    }

    pub fn to_csv(&self, header: &str) -> String {
        let mut out = String::new();
        writeln!(out, "{header}").unwrap();
        for (i, w) in self.weights.iter().enumerate() {
            writeln!(out, "{},{}", self.offset + i, w).unwrap();
        }
        out
    }
}

/// Jump times with the state entered at each time; the first entry is the
/// initial state at time 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory<S> {
    pub times: Vec<f64>,
    pub states: Vec<S>,
}

impl<S: Display> Trajectory<S> {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,state\n");
        for (t, x) in self.times.iter().zip(&self.states) {
            writeln!(out, "{t},{x}").unwrap();
        }
        out
    }
}

impl<S> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Nearest-neighbour rates on `offset..offset + len`: `lam[i]` is the rate
/// of `i -> i + 1` and `mu[i]` the rate of `i -> i - 1` (in local indices).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BirthDeathRates {
    pub offset: usize,
    pub lam: Vec<f64>,
    pub mu: Vec<f64>,
}

impl BirthDeathRates {
    pub fn len(&self) -> usize {
        self.lam.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lam.is_empty()
    }

    pub fn up(&self, k: usize) -> f64 {
        self.lam[k - self.offset]
    }

    pub fn down(&self, k: usize) -> f64 {
        self.mu[k - self.offset]
    }

    /// Stationary law from the product formula, accumulated in log space and
    /// normalized by log-sum-exp. Requires all interior rates to be positive.
    pub fn stationary(&self) -> Result<Pmf> {
        let n = self.len();
        let mut logw = Vec::with_capacity(n);
        logw.push(0.0);
        for i in 1..n {
            let (up, down) = (self.lam[i - 1], self.mu[i]);
            if !(up > 0.0 && down > 0.0) {
                return Err(Error::Invariant(format!(
                    "birth-death chain not irreducible at state {}",
                    self.offset + i
                )));
            }
            logw.push(logw[i - 1] + up.ln() - down.ln());
        }
        let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logw.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        let weights = logw.iter().map(|l| (l - lse).exp()).collect();
        Pmf::normalized(self.offset, weights)
    }

    pub fn to_matrix(&self) -> RateMatrix {
        let n = self.len();
        let mut q = RateMatrix::zeros(self.offset, n);
        for i in 0..n {
            if i + 1 < n {
                q.set(self.offset + i, self.offset + i + 1, self.lam[i]);
            }
            if i > 0 {
                q.set(self.offset + i, self.offset + i - 1, self.mu[i]);
            }
        }
        q.fill_diagonal();
        q
    }
}

/// Dense generator on states `offset..offset + dim`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateMatrix {
    pub offset: usize,
    pub dim: usize,
    q: Vec<f64>,
}

impl RateMatrix {
    pub fn zeros(offset: usize, dim: usize) -> Self {
        RateMatrix {
            offset,
            dim,
            q: vec![0.0; dim * dim],
        }
    }

    #[inline]
    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.q[(from - self.offset) * self.dim + (to - self.offset)]
    }

    #[inline]
    pub fn set(&mut self, from: usize, to: usize, rate: f64) {
        self.q[(from - self.offset) * self.dim + (to - self.offset)] = rate;
    }

    pub fn row(&self, from: usize) -> &[f64] {
        let i = from - self.offset;
        &self.q[i * self.dim..(i + 1) * self.dim]
    }

    /// Sets each diagonal entry to minus its off-diagonal row sum.
    pub fn fill_diagonal(&mut self) {
        for i in 0..self.dim {
            let row = &mut self.q[i * self.dim..(i + 1) * self.dim];
            row[i] = 0.0;
            let out: f64 = row.iter().sum();
            row[i] = -out;
        }
    }

    /// Largest |row sum| and whether all off-diagonal entries are nonnegative.
    pub fn check(&self) -> (f64, bool) {
        let mut worst = 0.0f64;
        let mut nonneg = true;
        for i in 0..self.dim {
            let row = &self.q[i * self.dim..(i + 1) * self.dim];
            worst = worst.max(row.iter().sum::<f64>().abs());
            nonneg &= row.iter().enumerate().all(|(j, &x)| j == i || x >= 0.0);
        }
        (worst, nonneg)
    }

    /// Every state reaches every other along positive rates.
    pub fn is_irreducible(&self) -> bool {
        let reach = |forward: bool| {
            let mut seen = vec![false; self.dim];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(i) = stack.pop() {
                for j in 0..self.dim {
                    let r = if forward {
                        self.q[i * self.dim + j]
                    } else {
                        self.q[j * self.dim + i]
                    };
                    if j != i && r > 0.0 && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen.into_iter().all(|x| x)
        };
        self.dim == 1 || (reach(true) && reach(false))
    }

    /// `max_i |(rho Q)_i|`.
    pub fn left_residual(&self, rho: &[f64]) -> f64 {
        (0..self.dim)
            .map(|j| {
                (0..self.dim)
                    .map(|i| rho[i] * self.q[i * self.dim + j])
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max)
    }

    /// Solves `rho Q = 0`, `sum rho = 1` with the last column of `Q` replaced
    /// by ones.
    pub fn stationary(&self) -> Result<Pmf> {
        let n = self.dim;
        if n == 1 {
            return Ok(Pmf::point_mass(self.offset, 1, self.offset));
        }
        if !self.is_irreducible() {
            return Err(Error::Invariant("generator is not irreducible".into()));
        }
        // transpose: rows of `a` are columns of Q
        let mut a = DMatrix::<f64>::from_fn(n, n, |r, c| self.q[c * n + r]);
        for c in 0..n {
            a[(n - 1, c)] = 1.0;
        }
        let mut rhs = DVector::<f64>::zeros(n);
        rhs[n - 1] = 1.0;
        let sol = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Invariant("singular stationary system".into()))?;
        // roundoff can leave entries like -1e-18
        let weights: Vec<f64> = sol.iter().map(|x| x.max(0.0)).collect();
        Pmf::normalized(self.offset, weights)
    }

    /// `initial * exp(Q t)` by uniformization.
    ///
    /// With `Lambda = max |q_ii|` and `P = I + Q / Lambda`, the result is
    /// `sum_m Pois(m; Lambda t) initial P^m`; the series stops once the
    /// Poisson tail is below 1e-13.
    pub fn transient(&self, t: f64, initial: &Pmf) -> Result<Pmf> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "time must be >= 0, got {t}"
            )));
        }
        if initial.offset != self.offset || initial.len() != self.dim {
            return Err(Error::InvalidArgument(
                "initial law does not match the state space".into(),
            ));
        }
        let n = self.dim;
        let rate = (0..n).map(|i| -self.q[i * n + i]).fold(0.0, f64::max);
        if t == 0.0 || rate == 0.0 {
            return Ok(initial.clone());
        }
        // sparse copy of P = I + Q / rate
        let mut jumps: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, row) in jumps.iter_mut().enumerate() {
            for j in 0..n {
                let mut p = self.q[i * n + j] / rate;
                if i == j {
                    p += 1.0;
                }
                if p > 0.0 {
                    row.push((j, p));
                }
            }
        }

        let lt = rate * t;
        let ln_lt = lt.ln();
        let mut v = initial.weights.clone();
        let mut next = vec![0.0; n];
        let mut out = vec![0.0; n];
        let mut ln_w = -lt;
        let mut m = 0u64;
        loop {
            let w = ln_w.exp();
            if w > 0.0 {
                for (o, x) in out.iter_mut().zip(&v) {
                    *o += w * x;
                }
            }
            // tail beyond m is at most w * r / (1 - r) with r = lt / (m + 2)
            let r = lt / (m as f64 + 2.0);
            if (m as f64 + 1.0) > lt && r < 1.0 && w * r / (1.0 - r) < 1e-13 {
                break;
            }
            next.iter_mut().for_each(|x| *x = 0.0);
            for (i, row) in jumps.iter().enumerate() {
                let vi = v[i];
                if vi < 1e-300 {
                    continue;
                }
                for &(j, p) in row {
                    next[j] += vi * p;
                }
            }
            std::mem::swap(&mut v, &mut next);
            m += 1;
            ln_w += ln_lt - (m as f64).ln();
        }
        Pmf::normalized(self.offset, out)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("from,to,rate\n");
        for i in 0..self.dim {
            for j in 0..self.dim {
                let r = self.q[i * self.dim + j];
                if r != 0.0 {
                    writeln!(out, "{},{},{}", self.offset + i, self.offset + j, r).unwrap();
                }
            }
        }
        out
    }
}
