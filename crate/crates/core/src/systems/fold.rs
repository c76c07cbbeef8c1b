use super::{integrate, StopRule, SystemError, SystemKind, SystemModel, SystemParams};

const MOB_FOLD: f64 = 1.83;
const VDP_FOLD: f64 = 0.062;
const PNP_FOLD: f64 = 0.911;

/// Known fold location of the periodic branch. Only the nonlinear-damping
/// oscillator has a closed form (`c3* = 40 c1 / 9`); the other three are
/// tabulated for their default parameters.
pub fn reference_fold(params: &SystemParams) -> Result<f64, SystemError> {
    let kind = params.kind();
    match params {
        SystemParams::Nld(p) => {
            params.validate()?;
            Ok(40.0 * p.c1 / 9.0)
        }
        _ if *params != SystemParams::default_for(kind) => Err(SystemError::UnsupportedParams(kind)),
        SystemParams::Mob(_) => Ok(MOB_FOLD),
        SystemParams::Vdp(_) => Ok(VDP_FOLD),
        SystemParams::Pnp(_) => Ok(PNP_FOLD),
    }
}

/// Initial condition well outside the unstable cycle: the upper corner of
/// each system's test box.
fn large_ic(kind: SystemKind) -> Vec<f64> {
    match kind {
        SystemKind::NonlinearDamping => vec![2.0, 2.0],
        SystemKind::MassOnBelt => vec![3.0, 2.0],
        SystemKind::VdpDuffing => vec![2.0, 2.0, 2.0, 0.0],
        SystemKind::PitchPlunge => vec![0.01, 0.3, 0.005, 0.3],
    }
}

const CYCLE_AMPLITUDE: f64 = 1e-3;

/// Whether a large-amplitude start ends on a non-trivial steady state at
/// this parameter value.
pub fn settles_to_cycle(params: &SystemParams, param: f64) -> Result<bool, SystemError> {
    let model = SystemModel::new(*params, param)?;
    let stop = StopRule::default();
    let tr = integrate(&model, &large_ic(params.kind()), 0.01, &stop)?;
    let decayed = tr.duration() < stop.max_time - 0.5 * tr.dt;
    Ok(!decayed && tr.terminal_amplitude(stop.settle_window) > CYCLE_AMPLITUDE)
}

/// Locates the fold by bisection on the jump predicate
/// [`settles_to_cycle`]; the bracket may be given in either orientation.
pub fn locate_fold_numeric(
    params: &SystemParams,
    bracket: (f64, f64),
    tol: f64,
) -> Result<f64, SystemError> {
    if !(tol > 0.0) {
        return Err(SystemError::InvalidArgument("tol must be positive".into()));
    }
    let (mut lo, mut hi) = if bracket.0 <= bracket.1 {
        bracket
    } else {
        (bracket.1, bracket.0)
    };
    let at_lo = settles_to_cycle(params, lo)?;
    let at_hi = settles_to_cycle(params, hi)?;
    if at_lo == at_hi {
        return Err(SystemError::NoSignChange(at_lo));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if settles_to_cycle(params, mid)? == at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
