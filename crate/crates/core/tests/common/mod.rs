#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use spinsqueeze::spin::{CMatrix, DensityMatrix};

pub fn random_complex_matrix(dim: usize, rng: &mut impl Rng) -> CMatrix {
    DMatrix::from_fn(dim, dim, |_, _| {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    })
}

/// Full-rank random state `A A^dag / tr`.
pub fn random_state(dim: usize, rng: &mut impl Rng) -> DensityMatrix {
    let a = random_complex_matrix(dim, rng);
    let m = &a * a.adjoint();
    let tr = m.trace();
    DensityMatrix::new(m.unscale(tr.re)).unwrap()
}

/// Random pure state with Gaussian amplitudes in the Dicke basis.
pub fn random_pure_state(dim: usize, rng: &mut impl Rng) -> DensityMatrix {
    let psi = DVector::from_fn(dim, |_, _| {
        Complex64::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        )
    });
    DensityMatrix::from_pure(&psi.unscale(psi.norm())).unwrap()
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
