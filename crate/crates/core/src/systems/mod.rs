//! The four benchmark oscillators, their integration, and reference fold
//! locations.
//!
//! Every model is written as a first-order vector field over
//! `(q_1, .., q_n, q̇_1, .., q̇_n)`. One scalar parameter per model is the
//! bifurcation parameter being swept; the rest are fixed physical constants.

mod fold;
mod integrate;
mod mob;
mod rhs;

pub use fold::{locate_fold_numeric, reference_fold, settles_to_cycle};
pub use integrate::{integrate, rk4_step, StopRule, Trajectory, TrajectoryMeta};
pub use mob::{step_mob, MobPhase, STICK_EVENT_TOL, STICK_REL_TOL};
pub use rhs::{
    friction_coefficient, jacobian, linear_eigenvalues, rhs_mob_slip, rhs_nld, rhs_pnp, rhs_vdp,
};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("state diverged (|x| = {magnitude:.3e}) at t = {time:.3}")]
    Divergence { time: f64, magnitude: f64 },
    #[error("initial condition has {got} components, {kind} needs {expected}")]
    DimensionMismatch {
        kind: SystemKind,
        expected: usize,
        got: usize,
    },
    #[error("no reference fold is known for non-default {0} parameters")]
    UnsupportedParams(SystemKind),
    #[error("fold predicate is {0} at both bracket ends")]
    NoSignChange(bool),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SystemKind {
    NonlinearDamping,
    MassOnBelt,
    VdpDuffing,
    PitchPlunge,
}

impl SystemKind {
    pub const ALL: [SystemKind; 4] = [
        SystemKind::NonlinearDamping,
        SystemKind::MassOnBelt,
        SystemKind::VdpDuffing,
        SystemKind::PitchPlunge,
    ];

    /// Number of first-order state components.
    pub fn state_dim(self) -> usize {
        match self {
            SystemKind::NonlinearDamping | SystemKind::MassOnBelt => 2,
            SystemKind::VdpDuffing | SystemKind::PitchPlunge => 4,
        }
    }

    pub fn dof(self) -> usize {
        self.state_dim() / 2
    }

    /// +1 when periodic branches exist above the fold, -1 when below.
    pub fn direction(self) -> f64 {
        match self {
            SystemKind::MassOnBelt => -1.0,
            _ => 1.0,
        }
    }

    /// Stable wire code used by the dataset format.
    pub fn code(self) -> u8 {
        match self {
            SystemKind::NonlinearDamping => 0,
            SystemKind::MassOnBelt => 1,
            SystemKind::VdpDuffing => 2,
            SystemKind::PitchPlunge => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn short_name(self) -> &'static str {
        match self {
            SystemKind::NonlinearDamping => "nld",
            SystemKind::MassOnBelt => "mob",
            SystemKind::VdpDuffing => "vdp",
            SystemKind::PitchPlunge => "pnp",
        }
    }

    /// Name of the swept parameter, for reports.
    pub fn param_name(self) -> &'static str {
        match self {
            SystemKind::NonlinearDamping => "c3",
            SystemKind::MassOnBelt => "v",
            SystemKind::VdpDuffing => "mu1",
            SystemKind::PitchPlunge => "u",
        }
    }

    /// Display names of the generalized coordinates.
    pub fn coord_names(self) -> &'static [&'static str] {
        match self {
            SystemKind::NonlinearDamping | SystemKind::MassOnBelt => &["x"],
            SystemKind::VdpDuffing => &["x1", "x2"],
            SystemKind::PitchPlunge => &["y", "alpha"],
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for SystemKind {
    type Err = SystemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nld" | "nonlinear-damping" | "nonlineardamping" => Ok(SystemKind::NonlinearDamping),
            "mob" | "mass-on-belt" | "massonbelt" => Ok(SystemKind::MassOnBelt),
            "vdp" | "vdp-duffing" | "vdpduffing" => Ok(SystemKind::VdpDuffing),
            "pnp" | "pitch-plunge" | "pitchplunge" => Ok(SystemKind::PitchPlunge),
            other => Err(SystemError::InvalidArgument(format!(
                "unknown system '{other}' (expected nld, mob, vdp or pnp)"
            ))),
        }
    }
}

/// `ẍ + x + c1 ẋ − c3 ẋ³(1 − ẋ²) = 0`; `c3` is swept.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NldParams {
    pub c1: f64,
}

impl Default for NldParams {
    fn default() -> Self {
        Self { c1: 0.5 }
    }
}

/// Mass on a moving belt with exponentially decaying friction; belt speed
/// `v` is swept.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobParams {
    pub mu_s: f64,
    pub mu_d: f64,
    pub v0: f64,
    pub zeta: f64,
}

impl Default for MobParams {
    fn default() -> Self {
        Self {
            mu_s: 1.0,
            mu_d: 0.5,
            v0: 0.5,
            zeta: 0.05,
        }
    }
}

/// Van der Pol-Duffing oscillator with a dynamic vibration absorber; `mu1`
/// is swept.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VdpParams {
    pub r: f64,
    pub gamma: f64,
    pub mu2: f64,
    pub alpha: f64,
}

impl Default for VdpParams {
    fn default() -> Self {
        Self {
            r: 0.05,
            gamma: 0.97,
            mu2: 0.12,
            alpha: 0.3,
        }
    }
}

/// Pitch-and-plunge airfoil; flow speed `u` is swept.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnpParams {
    pub x_alpha: f64,
    pub r_alpha: f64,
    pub beta: f64,
    pub nu: f64,
    pub omega: f64,
    pub zeta_alpha: f64,
    pub zeta_h: f64,
    pub xi_alpha3: f64,
    pub xi_alpha5: f64,
}

impl Default for PnpParams {
    fn default() -> Self {
        Self {
            x_alpha: 0.2,
            r_alpha: 0.5,
            beta: 0.2,
            nu: 0.08,
            omega: 0.5,
            zeta_alpha: 0.01,
            zeta_h: 0.01,
            xi_alpha3: -1.0,
            xi_alpha5: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SystemParams {
    Nld(NldParams),
    Mob(MobParams),
    Vdp(VdpParams),
    Pnp(PnpParams),
}

impl SystemParams {
    pub fn default_for(kind: SystemKind) -> Self {
        match kind {
            SystemKind::NonlinearDamping => SystemParams::Nld(NldParams::default()),
            SystemKind::MassOnBelt => SystemParams::Mob(MobParams::default()),
            SystemKind::VdpDuffing => SystemParams::Vdp(VdpParams::default()),
            SystemKind::PitchPlunge => SystemParams::Pnp(PnpParams::default()),
        }
    }

    pub fn kind(&self) -> SystemKind {
        match self {
            SystemParams::Nld(_) => SystemKind::NonlinearDamping,
            SystemParams::Mob(_) => SystemKind::MassOnBelt,
            SystemParams::Vdp(_) => SystemKind::VdpDuffing,
            SystemParams::Pnp(_) => SystemKind::PitchPlunge,
        }
    }

    pub fn validate(&self) -> Result<(), SystemError> {
        let bad = |msg: &str| Err(SystemError::InvalidArgument(msg.to_string()));
        match *self {
            SystemParams::Nld(p) if !(p.c1 > 0.0) => bad("c1 must be positive"),
            SystemParams::Mob(p) if !(p.mu_s > p.mu_d && p.mu_d > 0.0) => {
                bad("friction needs mu_s > mu_d > 0")
            }
            SystemParams::Mob(p) if !(p.v0 > 0.0 && p.zeta >= 0.0) => {
                bad("friction needs v0 > 0 and zeta >= 0")
            }
            SystemParams::Vdp(p) if !(p.r > 0.0 && p.gamma > 0.0) => {
                bad("absorber needs r > 0 and gamma > 0")
            }
            SystemParams::Pnp(p) if !(p.r_alpha * p.r_alpha - p.x_alpha * p.x_alpha > 0.0) => {
                bad("pitch-plunge mass matrix is singular")
            }
            _ => Ok(()),
        }
    }
}

/// A parameterized system at one value of its bifurcation parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemModel {
    pub params: SystemParams,
    pub bifurcation_param: f64,
}

impl SystemModel {
    pub fn new(params: SystemParams, bifurcation_param: f64) -> Result<Self, SystemError> {
        params.validate()?;
        if !bifurcation_param.is_finite() {
            return Err(SystemError::InvalidArgument(
                "bifurcation parameter must be finite".into(),
            ));
        }
        if matches!(params, SystemParams::Mob(_)) && !(bifurcation_param > 0.0) {
            return Err(SystemError::InvalidArgument(
                "belt speed must be positive".into(),
            ));
        }
        Ok(Self {
            params,
            bifurcation_param,
        })
    }

    pub fn with_defaults(kind: SystemKind, bifurcation_param: f64) -> Result<Self, SystemError> {
        Self::new(SystemParams::default_for(kind), bifurcation_param)
    }

    pub fn kind(&self) -> SystemKind {
        self.params.kind()
    }

    pub fn direction(&self) -> f64 {
        self.kind().direction()
    }

    /// Evaluates the smooth vector field. For the belt system this is the
    /// slip dynamics; stick is handled by [`step_mob`].
    pub fn rhs(&self, state: &[f64], out: &mut [f64]) {
        let p = self.bifurcation_param;
        match self.params {
            SystemParams::Nld(np) => {
                let d = rhs_nld([state[0], state[1]], np.c1, p);
                out[..2].copy_from_slice(&d);
            }
            SystemParams::Mob(mp) => {
                let d = rhs_mob_slip([state[0], state[1]], p, &mp);
                out[..2].copy_from_slice(&d);
            }
            SystemParams::Vdp(vp) => {
                let d = rhs_vdp([state[0], state[1], state[2], state[3]], p, &vp);
                out[..4].copy_from_slice(&d);
            }
            SystemParams::Pnp(pp) => {
                let d = rhs_pnp([state[0], state[1], state[2], state[3]], p, &pp);
                out[..4].copy_from_slice(&d);
            }
        }
    }

    /// The equilibrium all trajectories are measured against: the origin,
    /// except for the belt system where the spring balances kinetic friction.
    pub fn equilibrium(&self) -> Vec<f64> {
        match self.params {
            SystemParams::Mob(mp) => vec![
                friction_coefficient(self.bifurcation_param, mp.mu_s, mp.mu_d, mp.v0),
                0.0,
            ],
            _ => vec![0.0; self.kind().state_dim()],
        }
    }

    /// Decay rate of the slowest mode of the linearization at the
    /// equilibrium, `|max Re λ|`.
    pub fn slowest_rate(&self) -> f64 {
        linear_eigenvalues(self)
            .iter()
            .map(|l| l.re)
            .fold(f64::NEG_INFINITY, f64::max)
            .abs()
    }
}
