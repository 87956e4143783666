//! Lindblad evolution of the collective spin under piecewise-constant
//! transverse driving.
//!
//! The generator for drive amplitude `omega` is
//!
//! ```text
//! drho/dt = -i[H, rho] + gamma (n_th + 1) D[J-] rho + gamma n_th D[J+] rho + gamma_z D[Jz] rho
//! H       = kappa Jz^2 + omega Jx
//! D[X]rho = 2 X rho X^dag - X^dag X rho - rho X^dag X
//! ```
//!
//! Segments are integrated with fixed-step classical RK4. Because the
//! generator is linear and constant within a segment, `n` RK4 substeps are the
//! superoperator `T(h)^n` with `T(h) = 1 + hL + (hL)^2/2 + (hL)^3/6 + (hL)^4/24`;
//! [`PropagatorCache`] precomputes that map once per amplitude level.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ga::Evaluator;
use crate::spin::{CMatrix, DensityMatrix, SpinOperators};
use crate::squeezing::xi_z_squared;

/// Raw trace drift per segment that aborts the integration.
pub const TRACE_DRIFT_LIMIT: f64 = 1e-6;
/// Drift above this is reported but tolerated.
pub const TRACE_DRIFT_WARN: f64 = 1e-8;
/// Largest Hilbert-space dimension the exact oracle accepts.
pub const ORACLE_MAX_DIM: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseParams {
    /// Collective decay rate, in units of kappa.
    pub gamma: f64,
    /// Collective dephasing rate, in units of kappa.
    pub gamma_z: f64,
    /// Mean thermal excitation number of the reservoir.
    pub n_th: f64,
}

impl NoiseParams {
    pub const CLOSED: NoiseParams = NoiseParams {
        gamma: 0.0,
        gamma_z: 0.0,
        n_th: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gamma", self.gamma), ("gamma_z", self.gamma_z), ("n_th", self.n_th)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            gamma: 1e-3,
            gamma_z: 1e-3,
            n_th: 0.0,
        }
    }
}

/// A piecewise-constant drive: `sequence[k]` indexes into `levels` for the
/// k-th of `m` equal segments spanning `[0, t_total]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSchedule {
    t_total: f64,
    levels: Vec<f64>,
    sequence: Vec<usize>,
}

impl PulseSchedule {
    pub fn new(t_total: f64, levels: Vec<f64>, sequence: Vec<usize>) -> Result<Self> {
        if !(t_total > 0.0 && t_total.is_finite()) {
            return Err(Error::invalid(format!("t_total must be positive, got {t_total}")));
        }
        if sequence.is_empty() {
            return Err(Error::invalid("schedule needs at least one segment"));
        }
        if let Some(&bad) = sequence.iter().find(|&&i| i >= levels.len()) {
            return Err(Error::invalid(format!(
                "level index {bad} out of range for {} levels",
                levels.len()
            )));
        }
        Ok(Self {
            t_total,
            levels,
            sequence,
        })
    }

    pub fn t_total(&self) -> f64 {
        self.t_total
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn sequence(&self) -> &[usize] {
        &self.sequence
    }

    pub fn segments(&self) -> usize {
        self.sequence.len()
    }

    pub fn segment_length(&self) -> f64 {
        self.t_total / self.sequence.len() as f64
    }

    pub fn amplitudes(&self) -> impl Iterator<Item = f64> + '_ {
        self.sequence.iter().map(|&i| self.levels[i])
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<DensityMatrix>,
    pub xi_z_samples: Vec<f64>,
    pub times: Vec<f64>,
}

impl Trajectory {
    fn start(rho0: DensityMatrix, ops: &SpinOperators, capacity: usize) -> Result<Self> {
        let xi = xi_z_squared(&rho0, ops)?;
        let mut t = Self {
            states: Vec::with_capacity(capacity),
            xi_z_samples: Vec::with_capacity(capacity),
            times: Vec::with_capacity(capacity),
        };
        t.states.push(rho0);
        t.xi_z_samples.push(xi);
        t.times.push(0.0);
        Ok(t)
    }

    fn push(&mut self, rho: DensityMatrix, ops: &SpinOperators, time: f64) -> Result<()> {
        self.xi_z_samples.push(xi_z_squared(&rho, ops)?);
        self.states.push(rho);
        self.times.push(time);
        Ok(())
    }

    pub fn final_state(&self) -> &DensityMatrix {
        self.states.last().expect("trajectory always holds the initial state")
    }

    pub fn final_xi_z(&self) -> f64 {
        *self
            .xi_z_samples
            .last()
            .expect("trajectory always holds the initial sample")
    }
}

/// Constant-amplitude Lindblad generator, with the dissipator products
/// precomputed.
struct Generator {
    hamiltonian: CMatrix,
    channels: Vec<Channel>,
}

struct Channel {
    rate: f64,
    op: CMatrix,
    op_dag: CMatrix,
    op_dag_op: CMatrix,
}

impl Generator {
    fn new(ops: &SpinOperators, omega: f64, kappa: f64, noise: &NoiseParams) -> Self {
        let hamiltonian = (&ops.jz * &ops.jz).scale(kappa) + ops.jx.scale(omega);
        let mut channels = Vec::new();
        for (rate, op) in [
            (noise.gamma * (noise.n_th + 1.0), &ops.jminus),
            (noise.gamma * noise.n_th, &ops.jplus),
            (noise.gamma_z, &ops.jz),
        ] {
            if rate != 0.0 {
                let op_dag = op.adjoint();
                let op_dag_op = &op_dag * op;
                channels.push(Channel {
                    rate,
                    op: op.clone(),
                    op_dag,
                    op_dag_op,
                });
            }
        }
        Self { hamiltonian, channels }
    }

    fn apply(&self, rho: &CMatrix) -> CMatrix {
        let h_rho = &self.hamiltonian * rho;
        let rho_h = rho * &self.hamiltonian;
        let mut out = (h_rho - rho_h) * Complex64::new(0.0, -1.0);
        for ch in &self.channels {
            let jump = &ch.op * rho * &ch.op_dag;
            let anti = &ch.op_dag_op * rho + rho * &ch.op_dag_op;
            out += (jump.scale(2.0) - anti).scale(ch.rate);
        }
        out
    }

    fn rk4_step(&self, rho: &CMatrix, h: f64) -> CMatrix {
        let k1 = self.apply(rho);
        let k2 = self.apply(&(rho + k1.scale(h / 2.0)));
        let k3 = self.apply(&(rho + k2.scale(h / 2.0)));
        let k4 = self.apply(&(rho + k3.scale(h)));
        rho + (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(h / 6.0)
    }

    /// Column-major superoperator: column `a + b*dim` is the image of `|a><b|`.
    fn superoperator(&self, dim: usize) -> CMatrix {
        let d2 = dim * dim;
        let mut sup = CMatrix::zeros(d2, d2);
        let mut basis = CMatrix::zeros(dim, dim);
        for b in 0..dim {
            for a in 0..dim {
                basis[(a, b)] = Complex64::new(1.0, 0.0);
                let image = self.apply(&basis);
                sup.column_mut(a + b * dim).copy_from_slice(image.as_slice());
                basis[(a, b)] = Complex64::new(0.0, 0.0);
            }
        }
        sup
    }
}

fn check_state_dim(ops: &SpinOperators, rho: &DensityMatrix) -> Result<()> {
    if rho.dim() != ops.dim {
        return Err(Error::invalid(format!(
            "state dim {} does not match operator dim {}",
            rho.dim(),
            ops.dim
        )));
    }
    Ok(())
}

/// `drho/dt` at constant drive amplitude `omega`.
pub fn liouvillian_apply(
    ops: &SpinOperators,
    omega: f64,
    kappa: f64,
    noise: &NoiseParams,
    rho: &DensityMatrix,
) -> Result<CMatrix> {
    check_state_dim(ops, rho)?;
    Ok(Generator::new(ops, omega, kappa, noise).apply(rho.matrix()))
}

/// Re-Hermitize and trace-normalize after checking the raw drift.
fn finish_segment(raw: CMatrix, trace_in: f64) -> Result<DensityMatrix> {
    let herm = (&raw + raw.adjoint()).scale(0.5);
    let tr = herm.trace().re;
    let drift = (tr - trace_in).abs();
    // written so that a NaN drift also fails
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(drift < TRACE_DRIFT_LIMIT) {
        return Err(Error::IntegrationAccuracy {
            drift,
            limit: TRACE_DRIFT_LIMIT,
        });
    }
    if drift >= TRACE_DRIFT_WARN {
        log::warn!("trace drift {drift:e} over one segment");
    }
    Ok(DensityMatrix::from_matrix_unchecked(herm.unscale(tr)))
}

fn check_step(dt: f64, substeps: usize) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("segment duration must be positive, got {dt}")));
    }
    if substeps == 0 {
        return Err(Error::invalid("substeps must be at least 1"));
    }
    Ok(())
}

/// Integrate one constant-amplitude segment with `substeps` RK4 steps.
pub fn evolve_segment(
    rho: &DensityMatrix,
    ops: &SpinOperators,
    omega: f64,
    kappa: f64,
    noise: &NoiseParams,
    dt: f64,
    substeps: usize,
) -> Result<DensityMatrix> {
    check_state_dim(ops, rho)?;
    check_step(dt, substeps)?;
    let generator = Generator::new(ops, omega, kappa, noise);
    let h = dt / substeps as f64;
    let mut state = rho.matrix().clone();
    for _ in 0..substeps {
        state = generator.rk4_step(&state, h);
    }
    finish_segment(state, rho.trace())
}

/// Vectorized Liouvillian assembled from Kronecker products, using
/// `vec(A X B) = (B^T (x) A) vec(X)` with column-major `vec`.
pub fn kron_liouvillian(ops: &SpinOperators, omega: f64, kappa: f64, noise: &NoiseParams) -> CMatrix {
    let id = ops.identity();
    let h = (&ops.jz * &ops.jz).scale(kappa) + ops.jx.scale(omega);
    let minus_i = Complex64::new(0.0, -1.0);
    let mut l = (id.kronecker(&h) - h.transpose().kronecker(&id)) * minus_i;
    for (rate, x) in [
        (noise.gamma * (noise.n_th + 1.0), &ops.jminus),
        (noise.gamma * noise.n_th, &ops.jplus),
        (noise.gamma_z, &ops.jz),
    ] {
        if rate == 0.0 {
            continue;
        }
        let xdx = x.adjoint() * x;
        let x_conj = x.map(|z| z.conj());
        let d = x_conj.kronecker(x).scale(2.0) - id.kronecker(&xdx) - xdx.transpose().kronecker(&id);
        l += d.scale(rate);
    }
    l
}

/// Exact evolution through the matrix exponential of the vectorized
/// Liouvillian. Test and validation use only.
pub fn oracle_evolve_exact(
    rho: &DensityMatrix,
    ops: &SpinOperators,
    omega: f64,
    kappa: f64,
    noise: &NoiseParams,
    dt: f64,
) -> Result<DensityMatrix> {
    check_state_dim(ops, rho)?;
    if ops.dim > ORACLE_MAX_DIM {
        return Err(Error::CostGuard {
            dim: ops.dim,
            limit: ORACLE_MAX_DIM,
        });
    }
    let propagator = kron_liouvillian(ops, omega, kappa, noise).scale(dt).exp();
    let v = DVector::from_column_slice(rho.matrix().as_slice());
    let out = propagator * v;
    Ok(DensityMatrix::from_matrix_unchecked(CMatrix::from_column_slice(
        ops.dim,
        ops.dim,
        out.as_slice(),
    )))
}

/// Applies `evolve_segment` for every segment and samples after each one.
pub fn evolve_sequence(
    rho0: &DensityMatrix,
    schedule: &PulseSchedule,
    ops: &SpinOperators,
    kappa: f64,
    noise: &NoiseParams,
    substeps_per_segment: usize,
) -> Result<Trajectory> {
    check_state_dim(ops, rho0)?;
    let dt = schedule.segment_length();
    let mut traj = Trajectory::start(rho0.clone(), ops, schedule.segments() + 1)?;
    let mut rho = rho0.clone();
    for (k, omega) in schedule.amplitudes().enumerate() {
        rho = evolve_segment(&rho, ops, omega, kappa, noise, dt, substeps_per_segment)?;
        traj.push(rho.clone(), ops, (k + 1) as f64 * dt)?;
    }
    Ok(traj)
}

fn mat_pow(base: &CMatrix, mut exp: usize) -> CMatrix {
    let n = base.nrows();
    let mut result: Option<CMatrix> = None;
    let mut square = base.clone();
    loop {
        if exp & 1 == 1 {
            result = Some(match result {
                None => square.clone(),
                Some(r) => r * &square,
            });
        }
        exp >>= 1;
        if exp == 0 {
            break;
        }
        square = &square * &square;
    }
    result.unwrap_or_else(|| CMatrix::identity(n, n))
}

/// One-segment RK4 maps for every amplitude level of a fixed setup.
///
/// Applying a cached map is the same linear operation as running
/// `substeps` RK4 steps, at the cost of one matrix-vector product.
#[derive(Debug, Clone)]
pub struct PropagatorCache {
    dim: usize,
    dt: f64,
    levels: Vec<f64>,
    maps: Vec<CMatrix>,
}

impl PropagatorCache {
    pub fn new(
        ops: &SpinOperators,
        levels: &[f64],
        kappa: f64,
        noise: &NoiseParams,
        dt: f64,
        substeps: usize,
    ) -> Result<Self> {
        check_step(dt, substeps)?;
        noise.validate()?;
        if levels.is_empty() {
            return Err(Error::invalid("level table is empty"));
        }
        let h = dt / substeps as f64;
        let d2 = ops.dim * ops.dim;
        let id = CMatrix::identity(d2, d2);
        let maps = levels
            .iter()
            .map(|&omega| {
                let hl = Generator::new(ops, omega, kappa, noise).superoperator(ops.dim).scale(h);
                // Horner form of the degree-4 Taylor polynomial
                let mut step = &id + hl.scale(0.25);
                step = &id + (&hl * step).scale(1.0 / 3.0);
                step = &id + (&hl * step).scale(0.5);
                step = &id + &hl * step;
                mat_pow(&step, substeps)
            })
            .collect();
        Ok(Self {
            dim: ops.dim,
            dt,
            levels: levels.to_vec(),
            maps,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn apply(&self, level: usize, rho: &DensityMatrix) -> Result<DensityMatrix> {
        finish_segment(self.apply_raw(level, rho)?, rho.trace())
    }

    /// One segment without re-Hermitization or renormalization, for
    /// inspecting the raw integration error.
    pub fn apply_raw(&self, level: usize, rho: &DensityMatrix) -> Result<CMatrix> {
        let map = self
            .maps
            .get(level)
            .ok_or_else(|| Error::invalid(format!("level {level} out of range for {} levels", self.maps.len())))?;
        if rho.dim() != self.dim {
            return Err(Error::invalid(format!(
                "state dim {} does not match cache dim {}",
                rho.dim(),
                self.dim
            )));
        }
        let v = DVector::from_column_slice(rho.matrix().as_slice());
        let out = map * v;
        Ok(CMatrix::from_column_slice(self.dim, self.dim, out.as_slice()))
    }

    /// Same contract as [`evolve_sequence`] for a sequence of level indices.
    pub fn evolve(&self, rho0: &DensityMatrix, ops: &SpinOperators, sequence: &[usize]) -> Result<Trajectory> {
        let mut traj = Trajectory::start(rho0.clone(), ops, sequence.len() + 1)?;
        let mut rho = rho0.clone();
        for (k, &level) in sequence.iter().enumerate() {
            rho = self.apply(level, &rho)?;
            traj.push(rho.clone(), ops, (k + 1) as f64 * self.dt)?;
        }
        Ok(traj)
    }
}

/// GA evaluator that runs pulse sequences through cached segment maps,
/// starting from a fixed initial state.
#[derive(Debug, Clone)]
pub struct SequenceEvaluator {
    ops: SpinOperators,
    rho0: DensityMatrix,
    cache: PropagatorCache,
    pulses: usize,
}

impl SequenceEvaluator {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ops: SpinOperators,
        rho0: DensityMatrix,
        levels: &[f64],
        kappa: f64,
        noise: &NoiseParams,
        t_total: f64,
        pulses: usize,
        substeps: usize,
    ) -> Result<Self> {
        check_state_dim(&ops, &rho0)?;
        if pulses == 0 {
            return Err(Error::invalid("pulse count must be at least 1"));
        }
        if !(t_total > 0.0 && t_total.is_finite()) {
            return Err(Error::invalid(format!("t_total must be positive, got {t_total}")));
        }
        let cache = PropagatorCache::new(&ops, levels, kappa, noise, t_total / pulses as f64, substeps)?;
        Ok(Self {
            ops,
            rho0,
            cache,
            pulses,
        })
    }

    pub fn ops(&self) -> &SpinOperators {
        &self.ops
    }

    pub fn initial_state(&self) -> &DensityMatrix {
        &self.rho0
    }

    pub fn levels(&self) -> &[f64] {
        self.cache.levels()
    }

    pub fn trajectory(&self, sequence: &[usize]) -> Result<Trajectory> {
        self.cache.evolve(&self.rho0, &self.ops, sequence)
    }
}

impl Evaluator for SequenceEvaluator {
    fn evaluate(&self, genes: &[usize]) -> Result<Trajectory> {
        if genes.len() != self.pulses {
            return Err(Error::invalid(format!(
                "sequence has {} pulses, expected {}",
                genes.len(),
                self.pulses
            )));
        }
        self.trajectory(genes)
    }

    fn genes(&self) -> usize {
        self.pulses
    }

    fn level_count(&self) -> usize {
        self.cache.levels().len()
    }
}
