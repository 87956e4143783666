//! Experiment configuration: a TOML file whose every field has a default, so
//! an empty file is a complete configuration.

use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::NoiseParams;
use crate::error::{Error, Result};
use crate::ga::GaConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub n_spins: usize,
    pub kappa: f64,
    pub t_total: f64,
    pub pulses: usize,
    pub levels: Vec<f64>,
    pub substeps: usize,
    /// Initial coherent state direction; the default points along +x.
    pub initial_theta: f64,
    pub initial_phi: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            n_spins: 10,
            kappa: 1.0,
            t_total: 2.0,
            pulses: 100,
            levels: vec![1.0, 0.0, -1.0],
            substeps: 100,
            initial_theta: FRAC_PI_2,
            initial_phi: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Trajectories and KDEs are written for generation 1, every multiple of
    /// this interval, and the last generation.
    pub record_every: usize,
    pub kde_points: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            record_every: 2,
            kde_points: 128,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    Pulses,
    Gears,
    Size,
    Thermal,
}

impl SweepKind {
    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepKind::Pulses => vec![25.0, 50.0, 100.0, 200.0],
            SweepKind::Gears => vec![3.0, 5.0, 7.0, 9.0],
            SweepKind::Size => vec![4.0, 10.0, 20.0],
            SweepKind::Thermal => vec![0.0, 0.1, 0.5, 1.0],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepKind::Pulses => "pulses",
            SweepKind::Gears => "gears",
            SweepKind::Size => "size",
            SweepKind::Thermal => "thermal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub kind: SweepKind,
    /// Empty means the built-in list for `kind`.
    pub values: Vec<f64>,
    pub repetitions: usize,
    /// Overrides `ga.generations` for sweep runs.
    pub generations: usize,
    /// Overrides `output.record_every` for sweep runs.
    pub record_every: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            kind: SweepKind::Pulses,
            values: Vec::new(),
            repetitions: 5,
            generations: 150,
            record_every: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseSpaceConfig {
    /// CSV written by `train` (`segment_index,t_start,omega`).
    pub sequence_file: Option<PathBuf>,
    /// Explicit amplitudes, one per segment; takes precedence over the file.
    pub sequence: Option<Vec<f64>>,
    /// Times at which to sample; each is snapped to the nearest segment
    /// boundary. Empty means the end of the sequence.
    pub sample_times: Vec<f64>,
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Default for PhaseSpaceConfig {
    fn default() -> Self {
        Self {
            sequence_file: None,
            sequence: None,
            sample_times: Vec::new(),
            n_theta: 65,
            n_phi: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub noise: NoiseParams,
    pub ga: GaConfig,
    pub output: OutputConfig,
    pub sweep: SweepConfig,
    pub phase_space: PhaseSpaceConfig,
}

/// Amplitude tables for the gear-count sweep.
pub fn gear_levels(count: usize) -> Result<Vec<f64>> {
    let table: &[f64] = match count {
        3 => &[1.0, 0.0, -1.0],
        5 => &[1.0, 0.5, 0.0, -0.5, -1.0],
        7 => &[1.0, 0.67, 0.33, 0.0, -0.33, -0.67, -1.0],
        9 => &[1.0, 0.75, 0.5, 0.25, 0.0, -0.25, -0.5, -0.75, -1.0],
        _ => {
            return Err(Error::Config(format!(
                "no amplitude table for {count} gears (supported: 3, 5, 7, 9)"
            )))
        }
    };
    Ok(table.to_vec())
}

fn config_err(e: Error) -> Error {
    match e {
        Error::InvalidArgument(msg) => Error::Config(msg),
        other => other,
    }
}

fn as_count(v: f64, what: &str) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::Config(format!(
            "{what} sweep value {v} is not a positive integer"
        )))
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Fills sweep defaults so the echoed config shows every value used.
    pub fn resolve(mut self) -> Self {
        if self.sweep.values.is_empty() {
            self.sweep.values = self.sweep.kind.default_values();
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.system;
        if s.n_spins == 0 {
            return Err(Error::Config("system.n_spins must be at least 1".into()));
        }
        if !(s.kappa.is_finite()) {
            return Err(Error::Config("system.kappa must be finite".into()));
        }
        if !(s.t_total > 0.0 && s.t_total.is_finite()) {
            return Err(Error::Config("system.t_total must be positive".into()));
        }
        if s.pulses == 0 || s.substeps == 0 {
            return Err(Error::Config(
                "system.pulses and system.substeps must be at least 1".into(),
            ));
        }
        if s.levels.is_empty() || s.levels.iter().any(|l| !l.is_finite()) {
            return Err(Error::Config(
                "system.levels must be a non-empty list of finite amplitudes".into(),
            ));
        }
        self.noise.validate().map_err(config_err)?;
        self.ga.validate().map_err(config_err)?;
        if self.output.record_every == 0 || self.sweep.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        if self.sweep.repetitions == 0 {
            return Err(Error::Config("sweep.repetitions must be at least 1".into()));
        }
        if self.sweep.generations == 0 {
            return Err(Error::Config("sweep.generations must be at least 1".into()));
        }
        for &v in &self.sweep.values {
            match self.sweep.kind {
                SweepKind::Pulses | SweepKind::Size => {
                    as_count(v, self.sweep.kind.name())?;
                }
                SweepKind::Gears => {
                    gear_levels(as_count(v, "gears")?)?;
                }
                SweepKind::Thermal => {
                    if !(v >= 0.0 && v.is_finite()) {
                        return Err(Error::Config(format!("thermal sweep value {v} must be >= 0")));
                    }
                }
            }
        }
        if self.phase_space.n_theta < 2 || self.phase_space.n_phi < 2 {
            return Err(Error::Config("phase-space grid needs at least 2x2 nodes".into()));
        }
        Ok(())
    }

    /// Copy of this config with one sweep value applied.
    pub fn with_sweep_value(&self, value: f64) -> Result<Self> {
        let mut cfg = self.clone();
        match self.sweep.kind {
            SweepKind::Pulses => cfg.system.pulses = as_count(value, "pulses")?,
            SweepKind::Gears => cfg.system.levels = gear_levels(as_count(value, "gears")?)?,
            SweepKind::Size => cfg.system.n_spins = as_count(value, "size")?,
            SweepKind::Thermal => cfg.noise.n_th = value,
        }
        cfg.ga.generations = self.sweep.generations;
        cfg.output.record_every = self.sweep.record_every;
        Ok(cfg)
    }
}
