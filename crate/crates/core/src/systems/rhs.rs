use nalgebra::{Complex, DMatrix};

use super::{MobParams, PnpParams, SystemModel, VdpParams};

/// Nonlinear-damping oscillator.
pub fn rhs_nld(state: [f64; 2], c1: f64, c3: f64) -> [f64; 2] {
    let [x, xd] = state;
    let xd2 = xd * xd;
    [xd, -x - c1 * xd + c3 * xd * xd2 * (1.0 - xd2)]
}

/// Kinetic friction law `(μd + (μs − μd) e^{−|v_rel|/v0}) sign(v_rel)`.
///
/// Returns 0 at `v_rel == 0`; the stick branch owns that case.
pub fn friction_coefficient(v_rel: f64, mu_s: f64, mu_d: f64, v0: f64) -> f64 {
    if v_rel == 0.0 {
        return 0.0;
    }
    (mu_d + (mu_s - mu_d) * (-v_rel.abs() / v0).exp()) * v_rel.signum()
}

/// Slip-phase dynamics of the belt system at belt speed `v`.
pub fn rhs_mob_slip(state: [f64; 2], v: f64, p: &MobParams) -> [f64; 2] {
    let [x, xd] = state;
    let ff = friction_coefficient(v - xd, p.mu_s, p.mu_d, p.v0);
    [xd, -2.0 * p.zeta * xd - x + ff]
}

/// Van der Pol-Duffing oscillator with absorber, `M ẍ + C ẋ + K x + b = 0`.
/// State order is `(x1, x2, ẋ1, ẋ2)`.
///
/// The absorber damper acts on the relative velocity, so it contributes
/// `+2γμ2r` to `C11`; the van der Pol term contributes `−2μ1`. With this
/// sign the periodic branch folds at `μ1 ≈ 0.062`.
pub fn rhs_vdp(state: [f64; 4], mu1: f64, p: &VdpParams) -> [f64; 4] {
    let [x1, x2, v1, v2] = state;
    let g2r = p.gamma * p.gamma * p.r;
    let gmr = p.gamma * p.mu2 * p.r;

    let k = [[1.0 + g2r, -g2r], [-g2r, g2r]];
    let c = [[-2.0 * (mu1 - gmr), -2.0 * gmr], [-2.0 * gmr, 2.0 * gmr]];
    let b1 = p.alpha * x1 * x1 * x1 + 2.0 * mu1 * x1 * x1 * v1;

    let f1 = -(c[0][0] * v1 + c[0][1] * v2) - (k[0][0] * x1 + k[0][1] * x2) - b1;
    let f2 = -(c[1][0] * v1 + c[1][1] * v2) - (k[1][0] * x1 + k[1][1] * x2);
    // M = diag(1, r)
    [v1, v2, f1, f2 / p.r]
}

/// Pitch-and-plunge airfoil. State order is `(y, α, ẏ, α̇)`.
pub fn rhs_pnp(state: [f64; 4], u: f64, p: &PnpParams) -> [f64; 4] {
    let [y, a, yd, ad] = state;
    let k = [
        [p.omega * p.omega, p.beta * u * u],
        [0.0, p.r_alpha * p.r_alpha - p.nu * u * u],
    ];
    let c = [[p.zeta_h + p.beta * u, 0.0], [-p.nu * u, p.zeta_alpha]];
    let a2 = a * a;
    let b2 = p.xi_alpha3 * a * a2 + p.xi_alpha5 * a * a2 * a2;

    let f1 = -(c[0][0] * yd + c[0][1] * ad) - (k[0][0] * y + k[0][1] * a);
    let f2 = -(c[1][0] * yd + c[1][1] * ad) - (k[1][0] * y + k[1][1] * a) - b2;

    let m11 = 1.0;
    let m12 = p.x_alpha;
    let m22 = p.r_alpha * p.r_alpha;
    let det = m11 * m22 - m12 * m12;
    let acc_y = (m22 * f1 - m12 * f2) / det;
    let acc_a = (-m12 * f1 + m11 * f2) / det;
    [yd, ad, acc_y, acc_a]
}

/// Central-difference Jacobian of the smooth vector field at `state`.
pub fn jacobian(model: &SystemModel, state: &[f64]) -> DMatrix<f64> {
    let n = state.len();
    let mut jac = DMatrix::zeros(n, n);
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    let mut fp = vec![0.0; n];
    let mut fm = vec![0.0; n];
    for j in 0..n {
        let h = 1e-6 * state[j].abs().max(1.0);
        plus.copy_from_slice(state);
        minus.copy_from_slice(state);
        plus[j] += h;
        minus[j] -= h;
        model.rhs(&plus, &mut fp);
        model.rhs(&minus, &mut fm);
        for i in 0..n {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

/// Eigenvalues of the linearization at the model's equilibrium.
pub fn linear_eigenvalues(model: &SystemModel) -> Vec<Complex<f64>> {
    let eq = model.equilibrium();
    jacobian(model, &eq)
        .complex_eigenvalues()
        .iter()
        .copied()
        .collect()
}
