//! Collective spin operators in the Dicke basis, coherent spin states, and
//! the expectation/variance primitives everything else is built on.
//!
//! The basis is the `J_z` eigenbasis ordered from `m = +j` down to `m = -j`,
//! so row/column `k` carries `m = j - k`. `hbar = 1` throughout.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

const HERMITIAN_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-8;
const IMAG_TOL: f64 = 1e-8;
const VARIANCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SpinOperators {
    pub n_spins: usize,
    /// Total spin `j = N / 2`.
    pub j: f64,
    pub dim: usize,
    pub jx: CMatrix,
    pub jy: CMatrix,
    pub jz: CMatrix,
    pub jplus: CMatrix,
    pub jminus: CMatrix,
}

impl SpinOperators {
    pub fn new(n_spins: usize) -> Result<Self> {
        if n_spins == 0 {
            return Err(Error::invalid("n_spins must be at least 1"));
        }
        let dim = n_spins + 1;
        let j = n_spins as f64 / 2.0;
        let mut jz = CMatrix::zeros(dim, dim);
        let mut jplus = CMatrix::zeros(dim, dim);
        for k in 0..dim {
            let m = j - k as f64;
            jz[(k, k)] = Complex64::new(m, 0.0);
            // J+ |j, m> = sqrt(j(j+1) - m(m+1)) |j, m+1>, and m+1 sits at row k-1.
            if k > 0 {
                let amp = (j * (j + 1.0) - m * (m + 1.0)).sqrt();
                jplus[(k - 1, k)] = Complex64::new(amp, 0.0);
            }
        }
        let jminus = jplus.adjoint();
        let jx = (&jplus + &jminus).scale(0.5);
        let jy = (&jplus - &jminus) * Complex64::new(0.0, -0.5);
        Ok(Self {
            n_spins,
            j,
            dim,
            jx,
            jy,
            jz,
            jplus,
            jminus,
        })
    }

    /// Magnetic quantum numbers in basis order.
    pub fn m_values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.dim).map(move |k| self.j - k as f64)
    }

    pub fn identity(&self) -> CMatrix {
        CMatrix::identity(self.dim, self.dim)
    }

    /// Spin component along the (not necessarily normalized) direction `n`.
    pub fn along(&self, n: [f64; 3]) -> CMatrix {
        self.jx.scale(n[0]) + self.jy.scale(n[1]) + self.jz.scale(n[2])
    }

    /// `exp(-i alpha J_z)`, diagonal in this basis.
    pub fn z_rotation(&self, alpha: f64) -> CMatrix {
        let diag = CVector::from_iterator(
            self.dim,
            self.m_values().map(|m| Complex64::from_polar(1.0, -alpha * m)),
        );
        CMatrix::from_diagonal(&diag)
    }
}

/// A Hermitian, unit-trace state of the collective spin.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    data: CMatrix,
}

impl DensityMatrix {
    /// Validates squareness, Hermiticity and unit trace.
    pub fn new(data: CMatrix) -> Result<Self> {
        if !data.is_square() || data.nrows() == 0 {
            return Err(Error::invalid("density matrix must be square and non-empty"));
        }
        let rho = Self { data };
        let herm = rho.hermiticity_error();
        if herm > HERMITIAN_TOL {
            return Err(Error::invalid(format!("not Hermitian (max deviation {herm:e})")));
        }
        let tr = rho.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::invalid(format!("trace {tr} is not 1")));
        }
        Ok(rho)
    }

    /// Wraps a matrix without validation. Callers own the invariants.
    pub fn from_matrix_unchecked(data: CMatrix) -> Self {
        Self { data }
    }

    pub fn from_pure(psi: &CVector) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(Error::invalid("zero state vector"));
        }
        let psi = psi.unscale(norm);
        Ok(Self {
            data: &psi * psi.adjoint(),
        })
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        let w = 1.0 / dim as f64;
        Self {
            data: CMatrix::identity(dim, dim).scale(w),
        }
    }

    /// Dicke projector `|j, m><j, m|` for basis index `k` (`m = j - k`).
    pub fn dicke(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::invalid(format!("Dicke index {k} out of range for dim {dim}")));
        }
        let mut data = CMatrix::zeros(dim, dim);
        data[(k, k)] = Complex64::new(1.0, 0.0);
        Ok(Self { data })
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.data
    }

    pub fn into_matrix(self) -> CMatrix {
        self.data
    }

    pub fn trace(&self) -> f64 {
        self.data.trace().re
    }

    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for k in i..n {
                worst = worst.max((self.data[(i, k)] - self.data[(k, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn purity(&self) -> f64 {
        // tr(rho^2) = sum |rho_ik|^2 for Hermitian rho
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.data + self.data.adjoint()).scale(0.5);
        herm.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// `U rho U^dagger`.
    pub fn conjugated(&self, u: &CMatrix) -> Self {
        Self {
            data: u * &self.data * u.adjoint(),
        }
    }

    /// `exp(-i alpha J_z) rho exp(i alpha J_z)`.
    pub fn rotated_about_z(&self, ops: &SpinOperators, alpha: f64) -> Self {
        self.conjugated(&ops.z_rotation(alpha))
    }
}

/// Normalized coherent-spin-state ket pointing along
/// `(sin(theta) cos(phi), sin(theta) sin(phi), cos(theta))`.
pub fn coherent_spin_ket(dim: usize, theta: f64, phi: f64) -> CVector {
    let n = dim - 1;
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let mut binom = 1.0_f64;
    let mut psi = CVector::zeros(dim);
    for k in 0..dim {
        // amplitude of m = j - k: sqrt(C(N, k)) cos^(N-k) sin^k e^{i k phi}
        if k > 0 {
            binom *= (n + 1 - k) as f64 / k as f64;
        }
        let mag = binom.sqrt() * c.powi((n - k) as i32) * s.powi(k as i32);
        psi[k] = Complex64::from_polar(mag, k as f64 * phi);
    }
    let norm = psi.norm();
    psi.unscale(norm)
}

pub fn coherent_spin_state(ops: &SpinOperators, theta: f64, phi: f64) -> DensityMatrix {
    let psi = coherent_spin_ket(ops.dim, theta, phi);
    DensityMatrix {
        data: &psi * psi.adjoint(),
    }
}

fn check_dims(op: &CMatrix, rho: &DensityMatrix) -> Result<()> {
    if op.nrows() != rho.dim() || op.ncols() != rho.dim() {
        return Err(Error::invalid(format!(
            "operator is {}x{} but state has dim {}",
            op.nrows(),
            op.ncols(),
            rho.dim()
        )));
    }
    Ok(())
}

/// `tr(op rho)` without forming the product.
fn trace_product(op: &CMatrix, rho: &CMatrix) -> Complex64 {
    let n = op.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..n {
        for i in 0..n {
            acc += op[(i, k)] * rho[(k, i)];
        }
    }
    acc
}

/// `Re tr(op rho)`; the imaginary part must vanish for Hermitian `op`.
pub fn expectation(op: &CMatrix, rho: &DensityMatrix) -> Result<f64> {
    check_dims(op, rho)?;
    let value = trace_product(op, &rho.data);
    if value.im.abs() >= IMAG_TOL {
        return Err(Error::NumericalConsistency(format!(
            "expectation has imaginary part {:e}; operator or state not Hermitian",
            value.im
        )));
    }
    Ok(value.re)
}

pub fn variance(op: &CMatrix, rho: &DensityMatrix) -> Result<f64> {
    check_dims(op, rho)?;
    let mean = expectation(op, rho)?;
    let second = expectation(&(op * op), rho)?;
    let v = second - mean * mean;
    if v < -VARIANCE_TOL {
        return Err(Error::NumericalConsistency(format!("negative variance {v:e}")));
    }
    Ok(v.max(0.0))
}
