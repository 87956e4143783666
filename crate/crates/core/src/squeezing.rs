//! Spin-squeezing metrics: the z-variance parameter used as the optimization
//! target, and the minimal perpendicular-variance parameter used for reporting.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::spin::{expectation, variance, DensityMatrix, SpinOperators};

/// Mean-spin magnitudes at or below `SPIN_EPS_PER_SPIN * N` have no usable frame.
pub const SPIN_EPS_PER_SPIN: f64 = 1e-9;

/// `xi_Z^2 = 4 Var(J_z) / N`.
pub fn xi_z_squared(rho: &DensityMatrix, ops: &SpinOperators) -> Result<f64> {
    Ok(4.0 * variance(&ops.jz, rho)? / ops.n_spins as f64)
}

/// Orientation of the mean spin plus two unit vectors spanning the plane
/// perpendicular to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSpinFrame {
    pub theta: f64,
    pub phi: f64,
    pub magnitude: f64,
    pub n1: [f64; 3],
    pub n2: [f64; 3],
}

impl MeanSpinFrame {
    pub fn direction(&self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [st * cp, st * sp, ct]
    }

    /// `n1 cos(angle) + n2 sin(angle)`.
    pub fn perpendicular(&self, angle: f64) -> [f64; 3] {
        let (s, c) = angle.sin_cos();
        [0, 1, 2].map(|i| self.n1[i] * c + self.n2[i] * s)
    }
}

pub fn mean_spin_frame(rho: &DensityMatrix, ops: &SpinOperators) -> Result<MeanSpinFrame> {
    let mx = expectation(&ops.jx, rho)?;
    let my = expectation(&ops.jy, rho)?;
    let mz = expectation(&ops.jz, rho)?;
    let magnitude = (mx * mx + my * my + mz * mz).sqrt();
    let threshold = SPIN_EPS_PER_SPIN * ops.n_spins as f64;
    if magnitude <= threshold {
        return Err(Error::DegenerateSpin { magnitude, threshold });
    }
    let theta = (mz / magnitude).clamp(-1.0, 1.0).acos();
    let sin_theta = theta.sin();
    let phi = if sin_theta < 1e-12 {
        0.0
    } else {
        let sign = if my < 0.0 { -1.0 } else { 1.0 };
        sign * (mx / (magnitude * sin_theta)).clamp(-1.0, 1.0).acos()
    };
    let (sp, cp) = phi.sin_cos();
    let ct = theta.cos();
    Ok(MeanSpinFrame {
        theta,
        phi,
        magnitude,
        n1: [-sp, cp, 0.0],
        n2: [ct * cp, ct * sp, -sin_theta],
    })
}

/// Angle in the `(n1, n2)` plane minimizing the spin variance, given
/// `A = <J_n1^2 - J_n2^2>` and `B = <{J_n1, J_n2}>`.
pub fn optimal_phi(a: f64, b: f64) -> f64 {
    let r = a.hypot(b);
    if r == 0.0 {
        return 0.0;
    }
    let half = 0.5 * (-a / r).clamp(-1.0, 1.0).acos();
    if b <= 0.0 {
        half
    } else {
        PI - half
    }
}

/// Second moments of the perpendicular components: `(S, A, B)` with
/// `S = <J_n1^2 + J_n2^2>`.
fn perpendicular_moments(rho: &DensityMatrix, ops: &SpinOperators, frame: &MeanSpinFrame) -> Result<(f64, f64, f64)> {
    let j1 = ops.along(frame.n1);
    let j2 = ops.along(frame.n2);
    let j1sq = expectation(&(&j1 * &j1), rho)?;
    let j2sq = expectation(&(&j2 * &j2), rho)?;
    let anti = expectation(&(&j1 * &j2 + &j2 * &j1), rho)?;
    Ok((j1sq + j2sq, j1sq - j2sq, anti))
}

/// Direction of least variance perpendicular to the mean spin.
pub fn optimal_direction(rho: &DensityMatrix, ops: &SpinOperators) -> Result<[f64; 3]> {
    let frame = mean_spin_frame(rho, ops)?;
    let (_, a, b) = perpendicular_moments(rho, ops, &frame)?;
    Ok(frame.perpendicular(optimal_phi(a, b)))
}

/// `xi_perp^2 = N [S - sqrt(A^2 + B^2)] / (2 |<J>|^2)`.
pub fn xi_perp_squared(rho: &DensityMatrix, ops: &SpinOperators) -> Result<f64> {
    let frame = mean_spin_frame(rho, ops)?;
    let (s, a, b) = perpendicular_moments(rho, ops, &frame)?;
    let min_var2 = (s - a.hypot(b)).max(0.0);
    Ok(ops.n_spins as f64 * min_var2 / (2.0 * frame.magnitude * frame.magnitude))
}
