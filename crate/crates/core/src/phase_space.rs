//! Quasi-probability distributions on the Bloch sphere: the Husimi Q function
//! and the spherical (multipole) Wigner function, plus the exact Wigner 3j
//! symbols the latter needs.

use std::f64::consts::PI;
use std::io::Write;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spin::{coherent_spin_ket, DensityMatrix, SpinOperators};

const WIGNER_IMAG_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SphereGrid {
    pub n_theta: usize,
    pub n_phi: usize,
}

impl SphereGrid {
    pub fn new(n_theta: usize, n_phi: usize) -> Result<Self> {
        if n_theta < 2 || n_phi < 2 {
            return Err(Error::invalid(format!(
                "sphere grid needs at least 2x2 nodes, got {n_theta}x{n_phi}"
            )));
        }
        Ok(Self { n_theta, n_phi })
    }

    /// Polar nodes include both poles.
    pub fn theta(&self, i: usize) -> f64 {
        PI * i as f64 / (self.n_theta - 1) as f64
    }

    /// Azimuthal nodes cover `[0, 2 pi)`.
    pub fn phi(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 / self.n_phi as f64
    }
}

/// Field values stored row-major: all `phi` for `theta_0`, then `theta_1`, ...
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseField {
    pub grid: SphereGrid,
    pub values: Vec<f64>,
}

impl PhaseField {
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.grid.n_phi + k]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Grid node `(i, k)` holding the largest value.
    pub fn argmax(&self) -> (usize, usize) {
        let (idx, _) =
            self.values.iter().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |best, (i, &v)| if v > best.1 { (i, v) } else { best },
            );
        (idx / self.grid.n_phi, idx % self.grid.n_phi)
    }

    /// `theta,phi,value` rows in storage order.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "theta,phi,value")?;
        for i in 0..self.grid.n_theta {
            for k in 0..self.grid.n_phi {
                writeln!(
                    w,
                    "{},{},{}",
                    crate::cli::fmt_float(self.grid.theta(i)),
                    crate::cli::fmt_float(self.grid.phi(k)),
                    crate::cli::fmt_float(self.get(i, k))
                )?;
            }
        }
        Ok(())
    }
}

fn check_dim(rho: &DensityMatrix, ops: &SpinOperators) -> Result<()> {
    if rho.dim() != ops.dim {
        return Err(Error::invalid(format!(
            "state dim {} does not match operator dim {}",
            rho.dim(),
            ops.dim
        )));
    }
    Ok(())
}

/// `Q(theta, phi) = <theta, phi| rho |theta, phi>`.
pub fn husimi_q(rho: &DensityMatrix, ops: &SpinOperators, grid: SphereGrid) -> Result<PhaseField> {
    check_dim(rho, ops)?;
    let m = rho.matrix();
    let values = (0..grid.n_theta)
        .into_par_iter()
        .flat_map_iter(|i| {
            (0..grid.n_phi).map(move |k| {
                let psi = coherent_spin_ket(ops.dim, grid.theta(i), grid.phi(k));
                (psi.adjoint() * m * &psi)[(0, 0)].re
            })
        })
        .collect();
    Ok(PhaseField { grid, values })
}

fn half_integer(x: f64, name: &str) -> Result<i64> {
    let twice = 2.0 * x;
    if !twice.is_finite() || (twice - twice.round()).abs() > 1e-9 {
        return Err(Error::invalid(format!("{name} = {x} is not a half-integer")));
    }
    Ok(twice.round() as i64)
}

/// Wigner 3j symbol `(j1 j2 j3; m1 m2 m3)` for half-integer arguments.
pub fn wigner_3j(j1: f64, j2: f64, j3: f64, m1: f64, m2: f64, m3: f64) -> Result<f64> {
    let tj = [
        half_integer(j1, "j1")?,
        half_integer(j2, "j2")?,
        half_integer(j3, "j3")?,
    ];
    let tm = [
        half_integer(m1, "m1")?,
        half_integer(m2, "m2")?,
        half_integer(m3, "m3")?,
    ];
    for a in 0..3 {
        if tj[a] < 0 {
            return Err(Error::invalid(format!("j{} must be nonnegative", a + 1)));
        }
        if (tj[a] - tm[a]).rem_euclid(2) != 0 {
            return Err(Error::invalid(format!("j{0} - m{0} must be an integer", a + 1)));
        }
    }
    Ok(wigner_3j_doubled(tj, tm))
}

fn factorial(n: i64) -> BigInt {
    (2..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

/// Racah formula on doubled quantum numbers, evaluated in exact rational
/// arithmetic; only the final square root is taken in floating point.
/// Inputs must already satisfy the `j - m` integrality checks.
pub(crate) fn wigner_3j_doubled(tj: [i64; 3], tm: [i64; 3]) -> f64 {
    let [j1, j2, j3] = tj;
    let [m1, m2, m3] = tm;
    if m1 + m2 + m3 != 0 {
        return 0.0;
    }
    if (0..3).any(|a| tm[a].abs() > tj[a]) {
        return 0.0;
    }
    if j3 < (j1 - j2).abs() || j3 > j1 + j2 || (j1 + j2 + j3) % 2 != 0 {
        return 0.0;
    }
    // every combination below is an even number, halved to the real integer
    let h = |x: i64| x / 2;
    let tri = [h(j1 + j2 - j3), h(j1 - j2 + j3), h(-j1 + j2 + j3)];
    let top = h(j1 + j2 + j3) + 1;
    let proj = [h(j1 + m1), h(j1 - m1), h(j2 + m2), h(j2 - m2), h(j3 + m3), h(j3 - m3)];

    let t_min = 0.max(h(j2 - j3 - m1)).max(h(j1 - j3 + m2));
    let t_max = h(j1 + j2 - j3).min(h(j1 - m1)).min(h(j2 + m2));
    let mut sum = BigRational::zero();
    for t in t_min..=t_max {
        let denom = factorial(t)
            * factorial(h(j3 - j2 + m1) + t)
            * factorial(h(j3 - j1 - m2) + t)
            * factorial(h(j1 + j2 - j3) - t)
            * factorial(h(j1 - m1) - t)
            * factorial(h(j2 + m2) - t);
        let term = BigRational::new(BigInt::one(), denom);
        if t % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    if sum.is_zero() {
        return 0.0;
    }
    let numer = tri
        .iter()
        .chain(proj.iter())
        .fold(BigInt::one(), |acc, &n| acc * factorial(n));
    let squared = BigRational::new(numer, factorial(top)) * &sum * &sum;
    let magnitude = squared.to_f64().unwrap_or(f64::NAN).sqrt();
    let phase_exp = h(j1 - j2 - m3);
    let mut sign = if phase_exp.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    if sum.is_negative() {
        sign = -sign;
    }
    sign * magnitude
}

/// Orthonormalized associated Legendre values `p[l][m]` (Condon-Shortley
/// phase included) at `x = cos(theta)`, for `0 <= m <= l <= lmax`.
fn legendre_table(lmax: usize, x: f64) -> Vec<Vec<f64>> {
    let mut p = vec![vec![0.0; lmax + 1]; lmax + 1];
    let omx2 = (1.0 - x) * (1.0 + x);
    for m in 0..=lmax {
        let mut pmm = 1.0;
        let mut fact = 1.0;
        for _ in 0..m {
            pmm *= omx2 * fact / (fact + 1.0);
            fact += 2.0;
        }
        pmm = ((2 * m + 1) as f64 * pmm / (4.0 * PI)).sqrt();
        if m % 2 == 1 {
            pmm = -pmm;
        }
        p[m][m] = pmm;
        if m == lmax {
            continue;
        }
        let mut old_fact = ((2 * m + 3) as f64).sqrt();
        let mut pmmp1 = x * old_fact * pmm;
        p[m + 1][m] = pmmp1;
        #[allow(clippy::needless_range_loop)]
        for l in m + 2..=lmax {
            let (lf, mf) = (l as f64, m as f64);
            let fact = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let pll = (x * pmmp1 - pmm / old_fact) * fact;
            old_fact = fact;
            pmm = pmmp1;
            pmmp1 = pll;
            p[l][m] = pll;
        }
    }
    p
}

/// Orthonormal spherical harmonic `Y_lm(theta, phi)`.
pub fn spherical_harmonic(l: usize, m: i64, theta: f64, phi: f64) -> Complex64 {
    if m.unsigned_abs() as usize > l {
        return Complex64::zero();
    }
    let p = legendre_table(l, theta.cos());
    let mu = m.unsigned_abs() as usize;
    let y = Complex64::from_polar(p[l][mu], mu as f64 * phi);
    if m >= 0 {
        y
    } else if mu.is_multiple_of(2) {
        y.conj()
    } else {
        -y.conj()
    }
}

/// Multipole coefficients `rho_kq = tr(rho T_kq^dag)` with
/// `<j,m| T_kq |j,m'> = (-1)^(j-m) sqrt(2k+1) (j k j; -m q m')`.
/// Indexed as `coeffs[k][q + k]`.
pub fn multipole_coefficients(rho: &DensityMatrix, ops: &SpinOperators) -> Result<Vec<Vec<Complex64>>> {
    check_dim(rho, ops)?;
    let tj = ops.n_spins as i64;
    let dim = ops.dim;
    let m = rho.matrix();
    let coeffs = (0..dim)
        .into_par_iter()
        .map(|k| {
            let norm = ((2 * k + 1) as f64).sqrt();
            let tk = 2 * k as i64;
            (-(k as i64)..=k as i64)
                .map(|q| {
                    let mut acc = Complex64::zero();
                    for a in 0..dim {
                        // m = j - a, m' = m - q
                        let b = a as i64 + q;
                        if b < 0 || b >= dim as i64 {
                            continue;
                        }
                        let tm = tj - 2 * a as i64;
                        let tmp = tm - 2 * q;
                        let w = wigner_3j_doubled([tj, tk, tj], [-tm, 2 * q, tmp]);
                        if w == 0.0 {
                            continue;
                        }
                        let phase = if a % 2 == 0 { 1.0 } else { -1.0 };
                        acc += m[(a, b as usize)] * (phase * norm * w);
                    }
                    acc
                })
                .collect()
        })
        .collect();
    Ok(coeffs)
}

/// `W(theta, phi) = sum_{k=0}^{2j} sum_q rho_kq Y_kq(theta, phi)`.
pub fn wigner_function(rho: &DensityMatrix, ops: &SpinOperators, grid: SphereGrid) -> Result<PhaseField> {
    let coeffs = multipole_coefficients(rho, ops)?;
    let lmax = ops.dim - 1;
    let rows: Vec<Result<Vec<f64>>> = (0..grid.n_theta)
        .into_par_iter()
        .map(|i| {
            let p = legendre_table(lmax, grid.theta(i).cos());
            (0..grid.n_phi)
                .map(|kphi| {
                    let phi = grid.phi(kphi);
                    let mut w = Complex64::zero();
                    for (k, row) in coeffs.iter().enumerate() {
                        w += row[k] * p[k][0];
                        for q in 1..=k {
                            let y = Complex64::from_polar(p[k][q], q as f64 * phi);
                            let y_neg = if q % 2 == 0 { y.conj() } else { -y.conj() };
                            w += row[k + q] * y + row[k - q] * y_neg;
                        }
                    }
                    if w.im.abs() >= WIGNER_IMAG_TOL {
                        return Err(Error::NumericalConsistency(format!(
                            "Wigner function has imaginary part {:e}",
                            w.im
                        )));
                    }
                    Ok(w.re)
                })
                .collect()
        })
        .collect();
    let mut values = Vec::with_capacity(grid.n_theta * grid.n_phi);
    for row in rows {
        values.extend(row?);
    }
    Ok(PhaseField { grid, values })
}
