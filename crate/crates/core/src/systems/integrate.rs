use super::{step_mob, SystemError, SystemKind, SystemModel, SystemParams};

const DIVERGENCE_LIMIT: f64 = 1e6;
const MAX_TIME_CAP: f64 = 5000.0;

/// When to stop a simulation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub max_time: f64,
    /// Fraction of the initial amplitude regarded as "decayed".
    pub amplitude_floor_ratio: f64,
    /// How long the amplitude must stay under the floor.
    pub settle_window: f64,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            max_time: MAX_TIME_CAP,
            amplitude_floor_ratio: (-10.0f64).exp(),
            settle_window: 20.0,
        }
    }
}

impl StopRule {
    /// Horizon of 100 slowest-mode time constants, capped at 5000, with a
    /// settle window of a twentieth of the horizon. Both scale with the
    /// system's own decay time, so slower systems keep the same tail
    /// length relative to their transient.
    pub fn for_model(model: &SystemModel) -> Self {
        let rate = model.slowest_rate();
        let max_time = if rate > 0.0 {
            (100.0 / rate).min(MAX_TIME_CAP)
        } else {
            MAX_TIME_CAP
        };
        Self {
            max_time,
            settle_window: max_time / 20.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SystemError> {
        if !(self.max_time > 0.0) {
            return Err(SystemError::InvalidArgument("max_time must be positive".into()));
        }
        if !(self.amplitude_floor_ratio > 0.0 && self.amplitude_floor_ratio < 1.0) {
            return Err(SystemError::InvalidArgument(
                "amplitude_floor_ratio must lie in (0, 1)".into(),
            ));
        }
        if !(self.settle_window >= 0.0) {
            return Err(SystemError::InvalidArgument(
                "settle_window must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMeta {
    pub kind: SystemKind,
    pub bifurcation_param: f64,
    pub ic: Vec<f64>,
    pub seed: u64,
}

/// Uniformly sampled state history of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    n_state: usize,
    states: Vec<f64>,
    /// `(position index, velocity index)` per generalized coordinate.
    pub coord_pairs: Vec<(usize, usize)>,
    /// Equilibrium the deviations are measured from.
    pub equilibrium: Vec<f64>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.states.len() / self.n_state
    }

    pub fn n_state(&self) -> usize {
        self.n_state
    }

    pub fn duration(&self) -> f64 {
        (self.n_steps() - 1) as f64 * self.dt
    }

    pub fn state(&self, step: usize) -> &[f64] {
        &self.states[step * self.n_state..(step + 1) * self.n_state]
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.n_steps() - 1)
    }

    /// One state component over time, as stored.
    pub fn component(&self, index: usize) -> Vec<f64> {
        self.states
            .chunks_exact(self.n_state)
            .map(|s| s[index])
            .collect()
    }

    /// Position and velocity of coordinate `pair`, as deviations from the
    /// equilibrium.
    pub fn coordinate(&self, pair: usize) -> (Vec<f64>, Vec<f64>) {
        let (ip, iv) = self.coord_pairs[pair];
        let (ep, ev) = (self.equilibrium[ip], self.equilibrium[iv]);
        self.states
            .chunks_exact(self.n_state)
            .map(|s| (s[ip] - ep, s[iv] - ev))
            .unzip()
    }

    /// Polar amplitude of coordinate `pair` at `step`.
    pub fn amplitude(&self, pair: usize, step: usize) -> f64 {
        polar_amplitude(self.state(step), &self.equilibrium, self.coord_pairs[pair])
    }

    /// Largest polar amplitude of any coordinate over the trailing `window`
    /// time units.
    pub fn terminal_amplitude(&self, window: f64) -> f64 {
        let n = self.n_steps();
        let span = ((window / self.dt).round() as usize).clamp(1, n);
        (n - span..n)
            .flat_map(|i| (0..self.coord_pairs.len()).map(move |p| (i, p)))
            .map(|(i, p)| self.amplitude(p, i))
            .fold(0.0, f64::max)
    }

    pub(crate) fn from_parts(
        dt: f64,
        n_state: usize,
        states: Vec<f64>,
        equilibrium: Vec<f64>,
        meta: TrajectoryMeta,
    ) -> Self {
        let coord_pairs = (0..n_state / 2).map(|i| (i, i + n_state / 2)).collect();
        Self {
            dt,
            n_state,
            states,
            coord_pairs,
            equilibrium,
            meta,
        }
    }
}

fn polar_amplitude(state: &[f64], eq: &[f64], (ip, iv): (usize, usize)) -> f64 {
    (state[ip] - eq[ip]).hypot(state[iv] - eq[iv])
}

fn max_amplitude(state: &[f64], eq: &[f64], pairs: &[(usize, usize)]) -> f64 {
    pairs
        .iter()
        .map(|&pair| polar_amplitude(state, eq, pair))
        .fold(0.0, f64::max)
}

/// One classical RK4 step of `model`'s smooth field.
pub fn rk4_step(model: &SystemModel, state: &[f64], dt: f64, out: &mut [f64]) {
    let n = state.len();
    let mut k1 = [0.0; 4];
    let mut k2 = [0.0; 4];
    let mut k3 = [0.0; 4];
    let mut k4 = [0.0; 4];
    let mut tmp = [0.0; 4];
    model.rhs(state, &mut k1[..n]);
    for i in 0..n {
        tmp[i] = state[i] + 0.5 * dt * k1[i];
    }
    model.rhs(&tmp[..n], &mut k2[..n]);
    for i in 0..n {
        tmp[i] = state[i] + 0.5 * dt * k2[i];
    }
    model.rhs(&tmp[..n], &mut k3[..n]);
    for i in 0..n {
        tmp[i] = state[i] + dt * k3[i];
    }
    model.rhs(&tmp[..n], &mut k4[..n]);
    for i in 0..n {
        out[i] = state[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Integrates `model` from `ic` with fixed step `dt`, keeping every step.
///
/// Stops at `max_time`, or once the largest polar amplitude over all
/// coordinates has stayed below `amplitude_floor_ratio` times its initial
/// value for `settle_window`.
pub fn integrate(
    model: &SystemModel,
    ic: &[f64],
    dt: f64,
    stop: &StopRule,
) -> Result<Trajectory, SystemError> {
    let kind = model.kind();
    let n = kind.state_dim();
    if ic.len() != n {
        return Err(SystemError::DimensionMismatch {
            kind,
            expected: n,
            got: ic.len(),
        });
    }
    if !(dt > 0.0) {
        return Err(SystemError::InvalidArgument("dt must be positive".into()));
    }
    if ic.iter().any(|v| !v.is_finite()) {
        return Err(SystemError::InvalidArgument(
            "initial condition must be finite".into(),
        ));
    }
    stop.validate()?;

    let eq = model.equilibrium();
    let pairs: Vec<(usize, usize)> = (0..n / 2).map(|i| (i, i + n / 2)).collect();
    let floor = stop.amplitude_floor_ratio * max_amplitude(ic, &eq, &pairs);
    let max_steps = ((stop.max_time / dt).round() as usize).max(1);
    let settle_steps = (stop.settle_window / dt).round() as usize;

    let mut states = Vec::with_capacity(n * (max_steps + 1).min(1 << 20));
    states.extend_from_slice(ic);
    let mut cur = [0.0; 4];
    cur[..n].copy_from_slice(ic);
    let mut next = [0.0; 4];
    let mut below_for: Option<usize> = None;

    for step in 1..=max_steps {
        match model.params {
            SystemParams::Mob(mp) => {
                let (s, _) = step_mob([cur[0], cur[1]], model.bifurcation_param, dt, &mp);
                next[..2].copy_from_slice(&s);
            }
            _ => rk4_step(model, &cur[..n], dt, &mut next[..n]),
        }
        let magnitude = next[..n].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(magnitude <= DIVERGENCE_LIMIT) {
            return Err(SystemError::Divergence {
                time: step as f64 * dt,
                magnitude,
            });
        }
        cur = next;
        states.extend_from_slice(&cur[..n]);

        if max_amplitude(&cur[..n], &eq, &pairs) < floor {
            let k = below_for.map_or(0, |k| k + 1);
            if k >= settle_steps {
                break;
            }
            below_for = Some(k);
        } else {
            below_for = None;
        }
    }

    let meta = TrajectoryMeta {
        kind,
        bifurcation_param: model.bifurcation_param,
        ic: ic.to_vec(),
        seed: 0,
    };
    Ok(Trajectory::from_parts(dt, n, states, eq, meta))
}
