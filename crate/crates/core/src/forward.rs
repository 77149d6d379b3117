//! Forward-in-time Moran chain for the number of type-0 individuals, and
//! its deterministic frequency ODE.

use rand::Rng;

use crate::chain::{BirthDeathRates, Pmf, Trajectory};
use crate::error::{Error, Result};
use crate::params::{drift, ModelParams};
use crate::rng;

/// Birth and death rates of the type-0 count on `0..=N`.
pub fn moran_rates(params: &ModelParams) -> BirthDeathRates {
    let n = params.n();
    let nf = n as f64;
    let (s, u, nu0, nu1) = (params.s(), params.u(), params.nu0(), params.nu1());
    let mut lam = Vec::with_capacity(n + 1);
    let mut mu = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let kf = k as f64;
        let rest = (n - k) as f64;
        lam.push(kf * rest * (1.0 + s) / nf + rest * u * nu0);
        mu.push(kf * rest / nf + kf * u * nu1);
    }
    BirthDeathRates { offset: 0, lam, mu }
}

/// Stationary law of the type-0 count. The chain is absorbing without
/// mutation, so `u > 0` is required.
pub fn stationary_moran(params: &ModelParams) -> Result<Pmf> {
    if params.u() == 0.0 {
        return Err(Error::MutationRequired);
    }
    moran_rates(params).stationary()
}

/// Gillespie jump chain over the type-0 count.
pub struct MoranWalk {
    rates: BirthDeathRates,
    rng: rng::Stream,
    time: f64,
    state: usize,
}

impl MoranWalk {
    pub fn new(params: &ModelParams, k0: usize, seed: u64) -> Result<Self> {
        if k0 > params.n() {
            return Err(Error::InvalidArgument(format!(
                "initial count {k0} exceeds N = {}",
                params.n()
            )));
        }
        Ok(MoranWalk {
            rates: moran_rates(params),
            rng: rng::stream(seed, 0),
            time: 0.0,
            state: k0,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn state(&self) -> usize {
        self.state
    }

    /// Next jump strictly before `horizon`, if any. On `None` the walk stays
    /// at its current state and time.
    pub fn step_before(&mut self, horizon: f64) -> Option<(f64, usize)> {
        let up = self.rates.lam[self.state];
        let down = self.rates.mu[self.state];
        let total = up + down;
        if total == 0.0 {
            return None;
        }
        let t = self.time + rng::exponential(&mut self.rng, total);
        if t >= horizon {
            return None;
        }
        self.time = t;
        if self.rng.random::<f64>() * total < up {
            self.state += 1;
        } else {
            self.state -= 1;
        }
        Some((t, self.state))
    }
}

pub fn simulate_moran(
    params: &ModelParams,
    k0: usize,
    horizon: f64,
    seed: u64,
) -> Result<Trajectory<usize>> {
    check_horizon(horizon)?;
    let mut walk = MoranWalk::new(params, k0, seed)?;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![k0],
    };
    while let Some((t, k)) = walk.step_before(horizon) {
        traj.times.push(t);
        traj.states.push(k);
    }
    Ok(traj)
}

/// Time spent in each state over `[0, horizon]` and the number of jumps out
/// of each state, without storing the path.
pub fn moran_occupation(
    params: &ModelParams,
    k0: usize,
    horizon: f64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<u64>)> {
    check_horizon(horizon)?;
    let mut walk = MoranWalk::new(params, k0, seed)?;
    let mut occ = vec![0.0; params.n() + 1];
    let mut exits = vec![0u64; params.n() + 1];
    let mut last = 0.0;
    let mut prev = k0;
    while let Some((t, k)) = walk.step_before(horizon) {
        occ[prev] += t - last;
        exits[prev] += 1;
        last = t;
        prev = k;
    }
    occ[prev] += horizon - last;
    Ok((occ, exits))
}

fn check_horizon(horizon: f64) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    Ok(())
}

/// Largest accepted RK4 step.
pub fn max_step(params: &ModelParams) -> f64 {
    0.1 / (1.0 + params.s() + params.u())
}

/// Classical RK4 on the frequency ODE with `ceil(t_end / dt)` equal steps.
pub fn ode_solve(params: &ModelParams, z0: f64, t_end: f64, dt: f64) -> Result<Trajectory<f64>> {
    if !(0.0..=1.0).contains(&z0) {
        return Err(Error::InvalidArgument(format!(
            "z0 must lie in [0, 1], got {z0}"
        )));
    }
    check_horizon(t_end)?;
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let bound = max_step(params);
    if dt > bound {
        return Err(Error::StepTooLarge { dt, bound });
    }
    let steps = (t_end / dt).ceil() as usize;
    let h = t_end / steps as f64;
    let f = |z: f64| drift(params, z);
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut z = z0;
    times.push(0.0);
    states.push(z);
    for i in 1..=steps {
        let k1 = f(z);
        let k2 = f(z + 0.5 * h * k1);
        let k3 = f(z + 0.5 * h * k2);
        let k4 = f(z + h * k3);
        z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        // the drift points inward at 0 and 1; this only absorbs roundoff
        z = z.clamp(0.0, 1.0);
        times.push(i as f64 * h);
        states.push(z);
    }
    Ok(Trajectory { times, states })
}
