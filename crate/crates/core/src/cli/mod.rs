//! Experiment runner: training runs, parameter sweeps and phase-space
//! snapshots, each written as CSV files plus an echo of the resolved config.
//!
//! Every output is a pure function of the resolved config, so reruns with
//! the same seed are byte-identical regardless of the worker count.

pub mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

pub use config::{gear_levels, ExperimentConfig, OutputConfig, PhaseSpaceConfig, SweepConfig, SweepKind, SystemConfig};

use crate::dynamics::SequenceEvaluator;
use crate::error::{Error, Result};
use crate::ga::{derive_seed, run_ga, GaOutcome};
use crate::phase_space::{husimi_q, wigner_function, SphereGrid};
use crate::spin::{coherent_spin_state, SpinOperators};
use crate::stats::{generation_stats, kde, mean_variance, padded_grid, silverman_bandwidth, Bandwidth};

/// Environment variable consulted when `--workers` is absent.
pub const WORKERS_ENV: &str = "SPINSQUEEZE_WORKERS";

const SWEEP_STREAM: u64 = 0x53_5745_4550;

/// Fixed 17-significant-digit scientific notation.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

struct CsvFile {
    inner: BufWriter<File>,
}

impl CsvFile {
    fn create(path: &Path, header: &str) -> Result<Self> {
        let mut inner = BufWriter::new(File::create(path)?);
        writeln!(inner, "{header}")?;
        Ok(Self { inner })
    }

    fn row(&mut self, fields: &[String]) -> Result<()> {
        writeln!(self.inner, "{}", fields.join(","))?;
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

/// Builds the dynamics-backed evaluator for the configured system.
pub fn build_evaluator(cfg: &ExperimentConfig) -> Result<SequenceEvaluator> {
    let s = &cfg.system;
    let ops = SpinOperators::new(s.n_spins)?;
    let rho0 = coherent_spin_state(&ops, s.initial_theta, s.initial_phi);
    SequenceEvaluator::new(
        ops, rho0, &s.levels, s.kappa, &cfg.noise, s.t_total, s.pulses, s.substeps,
    )
}

/// Generation 1, every multiple of `every`, and the last generation.
pub fn is_recorded(generation: usize, every: usize, total: usize) -> bool {
    generation == 1 || generation == total || generation.is_multiple_of(every)
}

fn fraction_below_one(values: &[f64]) -> f64 {
    values.iter().filter(|&&x| x < 1.0).count() as f64 / values.len() as f64
}

/// Silverman bandwidth, or a small fixed width when all values coincide.
fn population_bandwidth(values: &[f64]) -> f64 {
    let h = silverman_bandwidth(values);
    if h > 0.0 && h.is_finite() {
        h
    } else {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        1e-3 * mean.abs().max(1.0)
    }
}

fn prepare(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let dir = cfg.output.dir.clone();
    fs::create_dir_all(&dir)?;
    write_text(&dir.join("config.resolved.toml"), &cfg.to_toml())?;
    Ok(dir)
}

/// Runs one GA training session and writes its outputs.
pub fn run_train(cfg: &ExperimentConfig) -> Result<GaOutcome> {
    let cfg = cfg.clone().resolve();
    let dir = prepare(&cfg)?;
    let evaluator = build_evaluator(&cfg)?;
    let outcome = run_ga(&cfg.ga, &evaluator)?;
    let s = &cfg.system;
    let dt = s.t_total / s.pulses as f64;
    let total = cfg.ga.generations;
    let every = cfg.output.record_every;

    let mut gens = CsvFile::create(
        &dir.join("generations.csv"),
        "generation,best_performance,mean_performance,median_performance,best_final_xi,mean_final_xi,median_final_xi",
    )?;
    let mut pop = CsvFile::create(&dir.join("population.csv"), "generation,individual,final_xi")?;
    let mut pop_stats = CsvFile::create(
        &dir.join("population_stats.csv"),
        "generation,mean,median,q25,q75,min,max,fraction_below_one",
    )?;
    let mut pop_kde = CsvFile::create(&dir.join("population_kde.csv"), "generation,x,density")?;
    let traj_dir = dir.join("trajectories");
    fs::create_dir_all(&traj_dir)?;

    for rec in &outcome.records {
        let summary = generation_stats(&rec.final_xi)?;
        let g = rec.index.to_string();
        gens.row(&[
            g.clone(),
            fmt_float(rec.best_performance),
            fmt_float(rec.mean_performance),
            fmt_float(rec.median_performance),
            fmt_float(*rec.best_xi_samples.last().unwrap_or(&f64::NAN)),
            fmt_float(summary.mean),
            fmt_float(summary.median),
        ])?;
        for (i, xi) in rec.final_xi.iter().enumerate() {
            pop.row(&[g.clone(), i.to_string(), fmt_float(*xi)])?;
        }
        pop_stats.row(&[
            g.clone(),
            fmt_float(summary.mean),
            fmt_float(summary.median),
            fmt_float(summary.q25),
            fmt_float(summary.q75),
            fmt_float(summary.min),
            fmt_float(summary.max),
            fmt_float(fraction_below_one(&rec.final_xi)),
        ])?;
        if is_recorded(rec.index, every, total) {
            let h = population_bandwidth(&rec.final_xi);
            let grid = padded_grid(&rec.final_xi, h, 3.0, cfg.output.kde_points);
            let est = kde(&rec.final_xi, Bandwidth::Fixed(h), &grid)?;
            for (x, d) in est.grid.iter().zip(&est.density) {
                pop_kde.row(&[g.clone(), fmt_float(*x), fmt_float(*d)])?;
            }
            let mut traj = CsvFile::create(&traj_dir.join(format!("gen_{:04}.csv", rec.index)), "time,xi_z")?;
            for (k, xi) in rec.best_xi_samples.iter().enumerate() {
                traj.row(&[fmt_float(k as f64 * dt), fmt_float(*xi)])?;
            }
            traj.finish()?;
        }
    }
    gens.finish()?;
    pop.finish()?;
    pop_stats.finish()?;
    pop_kde.finish()?;

    let mut seq = CsvFile::create(&dir.join("best_sequence.csv"), "segment_index,t_start,omega")?;
    for (k, &level) in outcome.best.genes.iter().enumerate() {
        seq.row(&[k.to_string(), fmt_float(k as f64 * dt), fmt_float(s.levels[level])])?;
    }
    seq.finish()?;

    let floor_hits: usize = outcome.records.iter().map(|r| r.floor_hits).sum();
    let report = format!(
        "seed = {}\ngenerations = {}\nbest_performance = {}\nbest_final_xi = {}\nxi_floor_hits = {}\n",
        cfg.ga.seed,
        total,
        fmt_float(outcome.best.performance.unwrap_or(f64::NAN)),
        fmt_float(outcome.best.final_xi().unwrap_or(f64::NAN)),
        floor_hits,
    );
    write_text(&dir.join("report.txt"), &report)?;
    if floor_hits > 0 {
        log::warn!("{floor_hits} xi_Z^2 samples hit the reward floor");
    }
    Ok(outcome)
}

/// Best-individual trace at one recorded generation of one sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTrace {
    pub generation: usize,
    pub times: Vec<f64>,
    pub xi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub value: f64,
    pub repetition: usize,
    pub traces: Vec<SweepTrace>,
}

impl SweepCell {
    /// `xi_Z^2` at `t_total` for the last recorded generation.
    pub fn final_xi(&self) -> f64 {
        self.traces
            .last()
            .and_then(|t| t.xi.last().copied())
            .unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummaryRow {
    pub value: f64,
    pub mean_final_xi: f64,
    pub variance_final_xi: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub kind: SweepKind,
    pub cells: Vec<SweepCell>,
    pub summary: Vec<SweepSummaryRow>,
}

/// Seed for repetition `rep`, shared by every sweep value so that values are
/// compared on common random numbers.
pub fn repetition_seed(seed: u64, rep: usize) -> u64 {
    derive_seed(seed, SWEEP_STREAM, rep as u64)
}

fn run_cell(base: &ExperimentConfig, value: f64, rep: usize) -> Result<SweepCell> {
    let mut cfg = base.with_sweep_value(value)?;
    cfg.ga.seed = repetition_seed(base.ga.seed, rep);
    let evaluator = build_evaluator(&cfg)?;
    let outcome = run_ga(&cfg.ga, &evaluator)?;
    let dt = cfg.system.t_total / cfg.system.pulses as f64;
    let traces = outcome
        .records
        .iter()
        .filter(|r| is_recorded(r.index, cfg.output.record_every, cfg.ga.generations))
        .map(|r| SweepTrace {
            generation: r.index,
            times: (0..r.best_xi_samples.len()).map(|k| k as f64 * dt).collect(),
            xi: r.best_xi_samples.clone(),
        })
        .collect();
    Ok(SweepCell {
        value,
        repetition: rep,
        traces,
    })
}

/// Runs every (value, repetition) cell and writes traces, aggregates and the
/// final-time summary.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutcome> {
    let cfg = cfg.clone().resolve();
    let dir = prepare(&cfg)?;
    let reps = cfg.sweep.repetitions;
    let jobs: Vec<(f64, usize)> = cfg
        .sweep
        .values
        .iter()
        .flat_map(|&v| (0..reps).map(move |r| (v, r)))
        .collect();
    let cells = jobs
        .into_par_iter()
        .map(|(v, r)| run_cell(&cfg, v, r))
        .collect::<Result<Vec<_>>>()?;

    let mut traces = CsvFile::create(&dir.join("sweep_traces.csv"), "value,repetition,generation,time,xi_z")?;
    for cell in &cells {
        for tr in &cell.traces {
            for (t, xi) in tr.times.iter().zip(&tr.xi) {
                traces.row(&[
                    fmt_float(cell.value),
                    cell.repetition.to_string(),
                    tr.generation.to_string(),
                    fmt_float(*t),
                    fmt_float(*xi),
                ])?;
            }
        }
    }
    traces.finish()?;

    let mut aggregate = CsvFile::create(
        &dir.join("sweep_aggregate.csv"),
        "value,generation,time,mean_xi_z,variance_xi_z",
    )?;
    let mut summary = Vec::new();
    for group in cells.chunks(reps) {
        let first = &group[0];
        for (ti, tr) in first.traces.iter().enumerate() {
            for (k, t) in tr.times.iter().enumerate() {
                let samples: Vec<f64> = group.iter().map(|c| c.traces[ti].xi[k]).collect();
                let (mean, var) = mean_variance(&samples);
                aggregate.row(&[
                    fmt_float(first.value),
                    tr.generation.to_string(),
                    fmt_float(*t),
                    fmt_float(mean),
                    fmt_float(var),
                ])?;
            }
        }
        let finals: Vec<f64> = group.iter().map(SweepCell::final_xi).collect();
        let (mean, var) = mean_variance(&finals);
        summary.push(SweepSummaryRow {
            value: first.value,
            mean_final_xi: mean,
            variance_final_xi: var,
        });
    }
    aggregate.finish()?;

    let mut summ = CsvFile::create(
        &dir.join("sweep_summary.csv"),
        "value,mean_final_xi_z,variance_final_xi_z",
    )?;
    for row in &summary {
        summ.row(&[
            fmt_float(row.value),
            fmt_float(row.mean_final_xi),
            fmt_float(row.variance_final_xi),
        ])?;
    }
    summ.finish()?;

    Ok(SweepOutcome {
        kind: cfg.sweep.kind,
        cells,
        summary,
    })
}

fn read_sequence_file(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read control sequence {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let col = header
        .split(',')
        .position(|h| h.trim() == "omega")
        .ok_or_else(|| Error::Config(format!("{} has no omega column", path.display())))?;
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .nth(col)
                .and_then(|f| f.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Config(format!("malformed row in {}: {l}", path.display())))
        })
        .collect()
}

/// Phase-space snapshot taken after `segment` pulses.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSample {
    pub segment: usize,
    pub time: f64,
    pub xi_z: f64,
    pub husimi_max: f64,
    pub husimi_argmax: (usize, usize),
    pub wigner_min: f64,
}

/// Writes Husimi and Wigner fields for the initial state and every requested
/// sample along the configured control sequence.
pub fn run_phase_space(cfg: &ExperimentConfig) -> Result<Vec<PhaseSample>> {
    let cfg = cfg.clone().resolve();
    cfg.validate()?;
    let ps = &cfg.phase_space;
    let omegas = match (&ps.sequence, &ps.sequence_file) {
        (Some(seq), _) => seq.clone(),
        (None, Some(path)) => read_sequence_file(path)?,
        (None, None) => {
            return Err(Error::Config(
                "no control sequence: set phase_space.sequence or phase_space.sequence_file".into(),
            ))
        }
    };
    if omegas.iter().any(|w| !w.is_finite()) {
        return Err(Error::Config("control sequence contains non-finite amplitudes".into()));
    }
    let dir = prepare(&cfg)?;
    let s = &cfg.system;
    let ops = SpinOperators::new(s.n_spins)?;
    let rho0 = coherent_spin_state(&ops, s.initial_theta, s.initial_phi);
    let grid = SphereGrid::new(ps.n_theta, ps.n_phi)?;

    let m = omegas.len();
    let states = if m == 0 {
        vec![rho0]
    } else {
        let mut levels: Vec<f64> = Vec::new();
        let genes: Vec<usize> = omegas
            .iter()
            .map(|&w| {
                levels.iter().position(|&l| l == w).unwrap_or_else(|| {
                    levels.push(w);
                    levels.len() - 1
                })
            })
            .collect();
        let evaluator = SequenceEvaluator::new(
            ops.clone(),
            rho0,
            &levels,
            s.kappa,
            &cfg.noise,
            s.t_total,
            m,
            s.substeps,
        )?;
        evaluator.trajectory(&genes)?.states
    };
    let dt = if m == 0 { 0.0 } else { s.t_total / m as f64 };

    let mut segments = vec![0usize];
    if m > 0 {
        if ps.sample_times.is_empty() {
            segments.push(m);
        } else {
            segments.extend(
                ps.sample_times
                    .iter()
                    .map(|&t| ((t / dt).round().max(0.0) as usize).min(m)),
            );
        }
    }
    segments.sort_unstable();
    segments.dedup();

    let mut samples = Vec::with_capacity(segments.len());
    let mut table = CsvFile::create(&dir.join("phase_space.csv"), "segment,time,xi_z,husimi_max,wigner_min")?;
    for &k in &segments {
        let rho = &states[k];
        let husimi = husimi_q(rho, &ops, grid)?;
        let wigner = wigner_function(rho, &ops, grid)?;
        husimi.write_csv(BufWriter::new(File::create(dir.join(format!("husimi_seg{k:04}.csv")))?))?;
        wigner.write_csv(BufWriter::new(File::create(dir.join(format!("wigner_seg{k:04}.csv")))?))?;
        let sample = PhaseSample {
            segment: k,
            time: k as f64 * dt,
            xi_z: crate::squeezing::xi_z_squared(rho, &ops)?,
            husimi_max: husimi.max(),
            husimi_argmax: husimi.argmax(),
            wigner_min: wigner.min(),
        };
        table.row(&[
            k.to_string(),
            fmt_float(sample.time),
            fmt_float(sample.xi_z),
            fmt_float(sample.husimi_max),
            fmt_float(sample.wigner_min),
        ])?;
        samples.push(sample);
    }
    table.finish()?;
    Ok(samples)
}

#[derive(Debug, Parser)]
#[command(
    name = "spinsqueeze",
    version,
    about = "Genetic-algorithm pulse optimization for spin squeezing"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one GA training session.
    Train(RunArgs),
    /// Sweep pulses, gears, system size or thermal occupation.
    Sweep(RunArgs),
    /// Emit Husimi and Wigner fields along a control sequence.
    PhaseSpace(RunArgs),
    /// Check a config file and print it with all defaults filled in.
    ValidateConfig(RunArgs),
}

#[derive(Debug, Args, Clone)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, env = WORKERS_ENV)]
    pub workers: Option<usize>,
}

impl RunArgs {
    /// File values, then flag overrides.
    pub fn resolve_config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.ga.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        Ok(cfg.resolve())
    }
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match workers {
        None => f(),
        Some(0) => Err(Error::Config("--workers must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?
            .install(f),
    }
}

fn dispatch(command: &Command) -> Result<()> {
    match command {
        Command::Train(args) => {
            let cfg = args.resolve_config()?;
            cfg.validate()?;
            let outcome = with_workers(args.workers, || run_train(&cfg))?;
            println!(
                "best performance {:.6}, best final xi_Z^2 {:.6}; outputs in {}",
                outcome.best.performance.unwrap_or(f64::NAN),
                outcome.best.final_xi().unwrap_or(f64::NAN),
                cfg.output.dir.display()
            );
        }
        Command::Sweep(args) => {
            let cfg = args.resolve_config()?;
            cfg.validate()?;
            let outcome = with_workers(args.workers, || run_sweep(&cfg))?;
            for row in &outcome.summary {
                println!(
                    "{} = {}: mean final xi_Z^2 {:.6} (variance {:.3e})",
                    outcome.kind.name(),
                    row.value,
                    row.mean_final_xi,
                    row.variance_final_xi
                );
            }
        }
        Command::PhaseSpace(args) => {
            let cfg = args.resolve_config()?;
            cfg.validate()?;
            let samples = with_workers(args.workers, || run_phase_space(&cfg))?;
            println!(
                "wrote {} phase-space samples to {}",
                samples.len(),
                cfg.output.dir.display()
            );
        }
        Command::ValidateConfig(args) => {
            let cfg = args.resolve_config()?;
            cfg.validate()?;
            print!("{}", cfg.to_toml());
        }
    }
    Ok(())
}

/// Exit status for an error: 1 for configuration problems, 2 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 1,
        _ => 2,
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
