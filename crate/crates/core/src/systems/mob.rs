//! Filippov-type stepping for the belt system.
//!
//! The friction force is set-valued at zero relative velocity. Each step
//! runs in one of two smooth regimes: slip, with the friction sign frozen
//! for the whole step so RK4 sees a smooth field, or stick, where the mass
//! rides the belt. Transitions are located by bisection on `v − ẋ`.

use super::MobParams;

/// Stick tolerance on `|v − ẋ|`, relative to the belt speed.
pub const STICK_REL_TOL: f64 = 1e-6;
/// Time resolution of switching events.
pub const STICK_EVENT_TOL: f64 = 1e-9;

const MAX_EVENTS_PER_STEP: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MobPhase {
    Slip,
    Stick,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Regime {
    Stick,
    /// Slip with a frozen sign of the relative velocity.
    Slip(f64),
}

/// Slip field with friction sign `s`. The exponent uses `s·v_rel` so the
/// field stays smooth if an RK4 stage overshoots the switching surface.
fn slip_field(state: [f64; 2], v: f64, s: f64, p: &MobParams) -> [f64; 2] {
    let [x, xd] = state;
    let ff = s * (p.mu_d + (p.mu_s - p.mu_d) * (-(s * (v - xd)) / p.v0).exp());
    [xd, -2.0 * p.zeta * xd - x + ff]
}

fn rk4_slip(state: [f64; 2], v: f64, s: f64, h: f64, p: &MobParams) -> [f64; 2] {
    let add = |a: [f64; 2], k: [f64; 2], c: f64| [a[0] + c * k[0], a[1] + c * k[1]];
    let k1 = slip_field(state, v, s, p);
    let k2 = slip_field(add(state, k1, 0.5 * h), v, s, p);
    let k3 = slip_field(add(state, k2, 0.5 * h), v, s, p);
    let k4 = slip_field(add(state, k3, h), v, s, p);
    [
        state[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        state[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

/// Regime entered from a point with `ẋ = v`: stick if the net spring and
/// damper force fits inside the static cone, otherwise slip in the direction
/// the surplus force pushes.
fn regime_on_surface(x: f64, v: f64, p: &MobParams) -> Regime {
    let load = x + 2.0 * p.zeta * v;
    if load.abs() <= p.mu_s {
        Regime::Stick
    } else {
        Regime::Slip(load.signum())
    }
}

fn classify(state: [f64; 2], v: f64, p: &MobParams) -> Regime {
    let eps = STICK_REL_TOL * v.abs().max(1.0);
    let v_rel = v - state[1];
    if v_rel.abs() <= eps {
        regime_on_surface(state[0], v, p)
    } else {
        Regime::Slip(v_rel.signum())
    }
}

/// Advances the belt system by `dt` and reports the phase at the end of the
/// step. Requires `v > 0` and `dt > 0`.
pub fn step_mob(state: [f64; 2], v: f64, dt: f64, p: &MobParams) -> ([f64; 2], MobPhase) {
    debug_assert!(dt > 0.0 && v > 0.0);
    let mut st = state;
    let mut left = dt;
    let mut regime = classify(st, v, p);

    for _ in 0..MAX_EVENTS_PER_STEP {
        match regime {
            Regime::Stick => {
                st[1] = v;
                // the load x + 2ζv grows while sticking; leave at the cone edge
                let x_exit = p.mu_s - 2.0 * p.zeta * v;
                if st[0] + v * left <= x_exit {
                    st[0] += v * left;
                    return (st, MobPhase::Stick);
                }
                let tau = ((x_exit - st[0]) / v).max(0.0);
                st[0] = x_exit;
                left -= tau;
                regime = Regime::Slip(1.0);
                if left <= 0.0 {
                    return (st, MobPhase::Slip);
                }
            }
            Regime::Slip(s) => {
                let next = rk4_slip(st, v, s, left, p);
                if s * (v - next[1]) > 0.0 {
                    return (next, MobPhase::Slip);
                }
                let h = locate_crossing(st, v, s, left, p);
                st = rk4_slip(st, v, s, h, p);
                st[1] = v;
                left -= h;
                regime = regime_on_surface(st[0], v, p);
                if left <= 0.0 {
                    let phase = match regime {
                        Regime::Stick => MobPhase::Stick,
                        Regime::Slip(_) => MobPhase::Slip,
                    };
                    return (st, phase);
                }
            }
        }
    }
    // Chattering guard: finish the step in slip.
    let s = match classify(st, v, p) {
        Regime::Slip(s) => s,
        Regime::Stick => 1.0,
    };
    (rk4_slip(st, v, s, left, p), MobPhase::Slip)
}

/// Smallest sub-step `h ∈ (0, max_h]` where `s·(v − ẋ)` reaches zero.
fn locate_crossing(state: [f64; 2], v: f64, s: f64, max_h: f64, p: &MobParams) -> f64 {
    let g = |h: f64| s * (v - rk4_slip(state, v, s, h, p)[1]);
    let mut lo = 0.0;
    let mut hi = max_h;
    if g(0.0) <= 0.0 {
        // starting on the surface: find a point where the slip has opened up
        let probes = 16;
        match (1..probes)
            .map(|i| max_h * i as f64 / probes as f64)
            .find(|&h| g(h) > 0.0)
        {
            Some(h) => lo = h,
            None => return max_h.min(STICK_EVENT_TOL),
        }
        // first sign change after lo
        hi = (1..=probes)
            .map(|i| lo + (max_h - lo) * i as f64 / probes as f64)
            .find(|&h| g(h) <= 0.0)
            .unwrap_or(max_h);
    }
    while hi - lo > STICK_EVENT_TOL {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}
