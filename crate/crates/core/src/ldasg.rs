//! Pruned lookdown ASG: the finite jump process of occupied levels with
//! its immune line, the line-counting chain and its stationary law, the
//! large-population chain, and the representative-ancestral-type
//! estimator.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::asg::Estimate;
use crate::chain::{Pmf, RateMatrix};
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LdState {
    /// Number of occupied levels.
    pub levels: usize,
    /// Level of the immune line.
    pub immune: usize,
}

/// Events in level coordinates. For `Collision` and `ExchangeCollision`
/// the pair is `(lower, upper)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LdEventKind {
    Branch { level: usize },
    Collision { lower: usize, upper: usize },
    ExchangeCollision { lower: usize, upper: usize },
    Coalescence { lower: usize, upper: usize },
    Mut0 { level: usize },
    Mut1 { level: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LdEvent {
    pub time: f64,
    pub kind: LdEventKind,
}

/// `states[0]` is the initial state at time 0 and `states[e + 1]` the
/// state right after `events[e]`, which happens at `times[e + 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LdPath {
    pub times: Vec<f64>,
    pub states: Vec<LdState>,
    pub events: Vec<LdEvent>,
}

impl LdPath {
    /// Event log with tags `branch`, `coll`, `xcoll`, `coal`, `mut0`, `mut1`.
    pub fn to_event_log(&self) -> String {
        let mut out = String::new();
        for ev in &self.events {
            let t = ev.time;
            match ev.kind {
                LdEventKind::Branch { level } => writeln!(out, "{t} branch {level}"),
                LdEventKind::Collision { lower, upper } => {
                    writeln!(out, "{t} coll {lower} {upper}")
                }
                LdEventKind::ExchangeCollision { lower, upper } => {
                    writeln!(out, "{t} xcoll {lower} {upper}")
                }
                LdEventKind::Coalescence { lower, upper } => {
                    writeln!(out, "{t} coal {lower} {upper}")
                }
                LdEventKind::Mut0 { level } => writeln!(out, "{t} mut0 {level}"),
                LdEventKind::Mut1 { level } => writeln!(out, "{t} mut1 {level}"),
            }
            .unwrap();
        }
        out
    }
}

/// Generator of the finite line-counting chain on `1..=N`.
pub fn ld_rates(params: &ModelParams) -> RateMatrix {
    let n = params.n();
    let nf = n as f64;
    let (s, u, nu0, nu1) = (params.s(), params.u(), params.nu0(), params.nu1());
    let mut q = RateMatrix::zeros(1, n);
    for i in 1..=n {
        let fi = i as f64;
        if i < n {
            q.set(i, i + 1, fi * (n - i) as f64 * s / nf);
        }
        if i > 1 {
            q.set(
                i,
                i - 1,
                fi * (fi - 1.0) / nf + (fi - 1.0) * u * nu1 + u * nu0,
            );
        }
        for j in 1..i.saturating_sub(1) {
            q.set(i, j, u * nu0);
        }
    }
    q.fill_diagonal();
    q
}

/// Stationary law of the finite line-counting chain.
pub fn stationary_ld(params: &ModelParams) -> Result<Pmf> {
    if params.n() == 1 {
        return Ok(Pmf::point_mass(1, 1, 1));
    }
    if params.s() == 0.0 {
        return Err(Error::SelectionRequired);
    }
    ld_rates(params).stationary()
}

/// Level that carries the ancestry: the lowest type-0 level, or the immune
/// level when every level has type 1. `types[i - 1]` is the type at level
/// `i`.
pub fn ancestral_level(state: LdState, types: &[u8]) -> usize {
    assert_eq!(types.len(), state.levels, "one type per occupied level");
    types
        .iter()
        .position(|&t| t == 0)
        .map_or(state.immune, |i| i + 1)
}

/// Jump process of the finite pruned lookdown ASG.
///
/// Reproduction arrows and mutations are drawn on population positions and
/// read in level coordinates. Two choices keep the level count on the
/// generator of [`ld_rates`]: a type-0 mutation on an immune line below
/// the top removes the levels above it (those levels can no longer carry
/// the ancestry), and an exchange collision shifts every level from the
/// lower to the upper endpoint, the immune one included.
pub struct LdWalk {
    n: usize,
    s: f64,
    u: f64,
    nu0: f64,
    rng: Stream,
    time: f64,
    state: LdState,
}

impl LdWalk {
    pub fn new(params: &ModelParams, seed: u64) -> Self {
        LdWalk {
            n: params.n(),
            s: params.s(),
            u: params.u(),
            nu0: params.nu0(),
            rng: rng::stream(seed, 0),
            time: 0.0,
            state: LdState {
                levels: 1,
                immune: 1,
            },
        }
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn state(&self) -> LdState {
        self.state
    }

    /// Next event strictly before `horizon`, if any.
    pub fn step_before(&mut self, horizon: f64) -> Option<LdEvent> {
        let n = self.n;
        let nf = n as f64;
        let l = self.state.levels;
        let lf = l as f64;
        // selective arrows into occupied levels, coalescences, mutations
        let rates = [
            lf * (nf - 1.0) * self.s / nf,
            lf * (lf - 1.0) / nf,
            lf * self.u,
        ];
        let total: f64 = rates.iter().sum();
        if total == 0.0 {
            return None;
        }
        let t = self.time + rng::exponential(&mut self.rng, total);
        if t >= horizon {
            return None;
        }
        self.time = t;
        let rng = &mut self.rng;
        let kind = match rng::categorical(rng, &rates, total) {
            0 => {
                let j = rng.random_range(1..=l);
                let i = loop {
                    let i = rng.random_range(1..=n);
                    if i != j {
                        break i;
                    }
                };
                if i > l {
                    LdEventKind::Branch { level: j }
                } else if i < j {
                    LdEventKind::Collision { lower: i, upper: j }
                } else {
                    LdEventKind::ExchangeCollision { lower: j, upper: i }
                }
            }
            1 => {
                let a = rng.random_range(1..=l);
                let b = loop {
                    let b = rng.random_range(1..=l);
                    if b != a {
                        break b;
                    }
                };
                LdEventKind::Coalescence {
                    lower: a.min(b),
                    upper: a.max(b),
                }
            }
            _ => {
                let level = rng.random_range(1..=l);
                if rng.random::<f64>() < self.nu0 {
                    LdEventKind::Mut0 { level }
                } else {
                    LdEventKind::Mut1 { level }
                }
            }
        };
        self.state = apply_ld(self.state, kind);
        Some(LdEvent { time: t, kind })
    }
}

/// State update for one event.
pub fn apply_ld(state: LdState, kind: LdEventKind) -> LdState {
    let LdState {
        levels: l,
        immune: im,
    } = state;
    match kind {
        LdEventKind::Branch { level } => LdState {
            levels: l + 1,
            immune: if level <= im { im + 1 } else { im },
        },
        LdEventKind::Collision { .. } => state,
        LdEventKind::ExchangeCollision { lower, upper } => LdState {
            levels: l,
            immune: if im == upper {
                lower
            } else if (lower..upper).contains(&im) {
                im + 1
            } else {
                im
            },
        },
        LdEventKind::Coalescence { lower, upper } => LdState {
            levels: l - 1,
            immune: if im > upper {
                im - 1
            } else if im == upper {
                lower
            } else {
                im
            },
        },
        LdEventKind::Mut0 { level } => LdState {
            levels: level.max(1),
            immune: im.min(level),
        },
        LdEventKind::Mut1 { level } => {
            if level == im {
                LdState {
                    levels: l,
                    immune: l,
                }
            } else {
                LdState {
                    levels: l - 1,
                    immune: if im > level { im - 1 } else { im },
                }
            }
        }
    }
}

fn record<F: FnMut(f64) -> Option<(LdEvent, LdState)>>(
    start: LdState,
    mut next: F,
    horizon: f64,
) -> LdPath {
    let mut path = LdPath {
        times: vec![0.0],
        states: vec![start],
        events: Vec::new(),
    };
    while let Some((ev, st)) = next(horizon) {
        path.times.push(ev.time);
        path.states.push(st);
        path.events.push(ev);
    }
    path
}

fn check_horizon(horizon: f64) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    Ok(())
}

/// Simulates the finite pruned lookdown ASG from one level.
pub fn simulate_ld(params: &ModelParams, horizon: f64, seed: u64) -> Result<LdPath> {
    check_horizon(horizon)?;
    let mut walk = LdWalk::new(params, seed);
    Ok(record(
        walk.state(),
        |h| walk.step_before(h).map(|e| (e, walk.state())),
        horizon,
    ))
}

/// Generator of the large-population line-counting chain on `1..=M`. The
/// up-jump out of `M` is dropped, and so is the down-jump out of state 1,
/// which would leave the state space.
pub fn asymptotic_rates(params: &ModelParams, truncation: usize) -> Result<RateMatrix> {
    if truncation < 2 {
        return Err(Error::InvalidArgument(format!(
            "truncation must be at least 2, got {truncation}"
        )));
    }
    let (s, u, nu0, nu1) = (params.s(), params.u(), params.nu0(), params.nu1());
    let mut q = RateMatrix::zeros(1, truncation);
    for i in 1..=truncation {
        let fi = i as f64;
        if i < truncation {
            q.set(i, i + 1, fi * s);
        }
        if i > 1 {
            q.set(i, i - 1, (fi - 1.0) * u * nu1 + u * nu0);
        }
        for j in 1..i.saturating_sub(1) {
            q.set(i, j, u * nu0);
        }
    }
    q.fill_diagonal();
    Ok(q)
}

fn check_asymptotic(params: &ModelParams) -> Result<()> {
    if params.s() == 0.0 {
        return Err(Error::SelectionRequired);
    }
    if params.u() == 0.0 {
        return Err(Error::MutationRequired);
    }
    Ok(())
}

/// Geometric law `(1 - l) l^(k-1)` on `1..=M`, renormalised.
pub fn geometric_law(ell_minus: f64, truncation: usize) -> Result<Pmf> {
    let w = (0..truncation)
        .map(|k| (1.0 - ell_minus) * ell_minus.powi(k as i32))
        .collect();
    Pmf::normalized(1, w)
}

/// Stationary law of the truncated large-population chain: the geometric
/// closed form restricted to `1..=M`, and the solved null vector of
/// [`asymptotic_rates`].
///
/// The solve uses the flux balance across each cut `{1..n} | {n+1..M}`:
/// `n s rho_n = n u rho_(n+1) + n u nu0 sum_(i > n+1) rho_i`. Every term
/// is positive, so the downward recursion from `rho_M` has no
/// cancellation and costs O(M).
pub fn stationary_asymptotic(params: &ModelParams, truncation: usize) -> Result<(Pmf, Pmf)> {
    check_asymptotic(params)?;
    if truncation < 2 {
        return Err(Error::InvalidArgument(format!(
            "truncation must be at least 2, got {truncation}"
        )));
    }
    let (s, u, nu0) = (params.s(), params.u(), params.nu0());
    let mut rho = vec![0.0; truncation];
    // work relative to the top to avoid overflow; rescale as needed
    rho[truncation - 1] = 1.0;
    let mut above = 0.0;
    for n in (1..truncation).rev() {
        let next = rho[n];
        rho[n - 1] = (u * next + u * nu0 * above) / s;
        above += next;
        if rho[n - 1] > 1e250 {
            let scale = 1.0 / rho[n - 1];
            rho[n - 1..].iter_mut().for_each(|x| *x *= scale);
            above *= scale;
        }
    }
    let solved = Pmf::normalized(1, rho)?;
    let closed = geometric_law(params.derive().ell_minus, truncation)?;
    Ok((closed, solved))
}

/// Largest truncation tried by [`auto_truncation`].
pub const MAX_TRUNCATION: usize = 1 << 24;

/// Truncation `60 max(1, s/u)`, doubled until the solved mass at the top
/// state is below 1e-12.
pub fn auto_truncation(params: &ModelParams) -> Result<usize> {
    check_asymptotic(params)?;
    let mut m = (60.0 * (params.s() / params.u()).max(1.0)).ceil() as usize;
    loop {
        let (_, solved) = stationary_asymptotic(params, m)?;
        if *solved.weights.last().unwrap() < 1e-12 {
            return Ok(m);
        }
        m *= 2;
        if m > MAX_TRUNCATION {
            return Err(Error::PrecisionLoss {
                estimate: *solved.weights.last().unwrap(),
            });
        }
    }
}

/// Law at time `t` of the chain with generator `q` started from `initial`.
pub fn transient_distribution(q: &RateMatrix, t: f64, initial: &Pmf) -> Result<Pmf> {
    q.transient(t, initial)
}

/// Default event cap per run of the large-population simulator.
pub const DEFAULT_EVENT_CAP: u64 = 10_000_000;

/// Jump process of the large-population pruned lookdown ASG. The immune
/// line always sits at the top level, so only jumps of the level count are
/// drawn.
pub struct AsymptoticWalk {
    s: f64,
    u: f64,
    nu0: f64,
    rng: Stream,
    time: f64,
    levels: usize,
    events: u64,
    cap: u64,
}

impl AsymptoticWalk {
    pub fn new(params: &ModelParams, seed: u64, replica: u64, cap: u64) -> Self {
        AsymptoticWalk {
            s: params.s(),
            u: params.u(),
            nu0: params.nu0(),
            rng: rng::stream(seed, replica),
            time: 0.0,
            levels: 1,
            events: 0,
            cap,
        }
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn state(&self) -> LdState {
        LdState {
            levels: self.levels,
            immune: self.levels,
        }
    }

    /// Next jump strictly before `horizon`, if any.
    pub fn step_before(&mut self, horizon: f64) -> Result<Option<LdEvent>> {
        let l = self.levels;
        let lf = l as f64;
        // branching, then type-0 and type-1 mutations below the top
        let rates = [
            lf * self.s,
            (lf - 1.0) * self.u * self.nu0,
            (lf - 1.0) * self.u * (1.0 - self.nu0),
        ];
        let total: f64 = rates.iter().sum();
        if total == 0.0 {
            return Ok(None);
        }
        let t = self.time + rng::exponential(&mut self.rng, total);
        if t >= horizon {
            return Ok(None);
        }
        self.events += 1;
        if self.events > self.cap {
            return Err(Error::EventCapExceeded { cap: self.cap });
        }
        self.time = t;
        let rng = &mut self.rng;
        let kind = match rng::categorical(rng, &rates, total) {
            0 => LdEventKind::Branch {
                level: rng.random_range(1..=l),
            },
            1 => LdEventKind::Mut0 {
                level: rng.random_range(1..l),
            },
            _ => LdEventKind::Mut1 {
                level: rng.random_range(1..l),
            },
        };
        self.levels = match kind {
            LdEventKind::Branch { .. } => l + 1,
            LdEventKind::Mut0 { level } => level,
            _ => l - 1,
        };
        Ok(Some(LdEvent { time: t, kind }))
    }

    /// Runs to `horizon` without recording and returns the level count.
    pub fn run_to(&mut self, horizon: f64) -> Result<usize> {
        while self.step_before(horizon)?.is_some() {}
        Ok(self.levels)
    }
}

/// Simulates the large-population pruned lookdown ASG from one level.
pub fn simulate_asymptotic_ld(
    params: &ModelParams,
    horizon: f64,
    seed: u64,
    event_cap: u64,
) -> Result<LdPath> {
    check_asymptotic(params)?;
    check_horizon(horizon)?;
    let mut walk = AsymptoticWalk::new(params, seed, 0, event_cap);
    let mut path = LdPath {
        times: vec![0.0],
        states: vec![walk.state()],
        events: Vec::new(),
    };
    while let Some(ev) = walk.step_before(horizon)? {
        path.times.push(ev.time);
        path.states.push(walk.state());
        path.events.push(ev);
    }
    Ok(path)
}

/// Estimates the probability that the time-`beta` ancestor of a generic
/// individual has type 0, when the levels at time `beta` carry i.i.d.
/// types that are 0 with probability `x`.
///
/// With `rao_blackwell` each replica scores `1 - (1 - x)^L`, the exact
/// conditional probability given the level count; otherwise types are
/// drawn and [`ancestral_level`] decides.
pub fn representative_type(
    params: &ModelParams,
    x: f64,
    beta: f64,
    replicas: u64,
    seed: u64,
    rao_blackwell: bool,
) -> Result<Estimate> {
    check_asymptotic(params)?;
    check_horizon(beta)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidArgument(format!(
            "x must lie in [0, 1], got {x}"
        )));
    }
    if replicas == 0 {
        return Err(Error::InvalidArgument("replicas must be at least 1".into()));
    }
    let xs: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut walk = AsymptoticWalk::new(params, seed, r, DEFAULT_EVENT_CAP);
            let l = walk.run_to(beta)?;
            if rao_blackwell {
                return Ok(-(l as f64 * (-x).ln_1p()).exp_m1());
            }
            let rng = &mut walk.rng;
            let types: Vec<u8> = (0..l).map(|_| u8::from(rng.random::<f64>() >= x)).collect();
            let level = ancestral_level(walk.state(), &types);
            Ok(f64::from(types[level - 1] == 0))
        })
        .collect::<Result<_>>()?;
    Ok(Estimate::from_samples(&xs))
}
