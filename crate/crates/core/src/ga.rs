//! Adaptive genetic algorithm over discrete pulse sequences.
//!
//! Individuals are sequences of level indices. Performance rewards low
//! `xi_Z^2` at the end of the sequence and along the way; fitness is
//! performance relative to the population minimum. Parents are drawn by
//! roulette wheel, the best `elite_count` individuals survive unchanged, the
//! crossover rate grows with the parents' fitness gap, and the mutation rate
//! decays linearly to zero over the run.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::stats::median;

/// Floor applied to `xi_Z^2` samples before inverting them into rewards.
pub const XI_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaConfig {
    pub population_size: usize,
    pub generations: usize,
    /// Minimum crossover rate.
    pub c_s: f64,
    /// Characteristic fitness gap scaling the adaptive crossover rate.
    pub f_h: f64,
    /// Mutation rate at the first generation.
    pub m_s: f64,
    pub p_final: f64,
    pub p_process: f64,
    pub elite_count: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 50,
            generations: 20,
            c_s: 0.8,
            f_h: 0.5,
            m_s: 0.2,
            p_final: 0.8,
            p_process: 0.2,
            elite_count: 2,
            seed: 42,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(msg));
        if self.population_size == 0 {
            return bad("population_size must be at least 1".into());
        }
        if self.generations == 0 {
            return bad("generations must be at least 1".into());
        }
        if !(self.c_s > 0.0 && self.c_s <= 1.0) {
            return bad(format!("c_s must lie in (0, 1], got {}", self.c_s));
        }
        if !(self.f_h > 0.0 && self.f_h.is_finite()) {
            return bad(format!("f_h must be positive, got {}", self.f_h));
        }
        if !(0.0..=1.0).contains(&self.m_s) {
            return bad(format!("m_s must lie in [0, 1], got {}", self.m_s));
        }
        if !(self.p_final >= 0.0 && self.p_process >= 0.0) || (self.p_final + self.p_process - 1.0).abs() > 1e-12 {
            return bad(format!(
                "p_final and p_process must be nonnegative and sum to 1, got {} + {}",
                self.p_final, self.p_process
            ));
        }
        if self.elite_count >= self.population_size {
            return bad(format!(
                "elite_count {} must be smaller than population_size {}",
                self.elite_count, self.population_size
            ));
        }
        Ok(())
    }
}

/// Maps a gene sequence to the sampled trajectory it produces.
pub trait Evaluator: Sync {
    fn evaluate(&self, genes: &[usize]) -> Result<Trajectory>;

    fn genes(&self) -> usize;

    fn level_count(&self) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Performance {
    pub value: f64,
    /// Samples that hit [`XI_FLOOR`].
    pub floor_hits: usize,
}

/// Weighted reward `p_final / xi_final + p_process * mean_q(1 / xi_q)` over
/// the samples after pulses `1..m-1`. The initial sample is never scored.
/// With a single pulse there are no intermediate samples and the process
/// term falls back to the final reward.
pub fn performance_from_samples(xi_samples: &[f64], p_final: f64, p_process: f64) -> Result<Performance> {
    if xi_samples.len() < 2 {
        return Err(Error::invalid(format!(
            "need the initial sample plus at least one pulse, got {} samples",
            xi_samples.len()
        )));
    }
    let mut floor_hits = 0;
    let mut reward = |xi: f64| -> Result<f64> {
        if xi.is_nan() {
            return Err(Error::NumericalConsistency("xi_Z^2 sample is NaN".into()));
        }
        if xi <= XI_FLOOR {
            floor_hits += 1;
            Ok(1.0 / XI_FLOOR)
        } else {
            Ok(1.0 / xi)
        }
    };
    let m = xi_samples.len() - 1;
    let final_reward = reward(xi_samples[m])?;
    let process = if m > 1 {
        let mut sum = 0.0;
        for &xi in &xi_samples[1..m] {
            sum += reward(xi)?;
        }
        sum / (m - 1) as f64
    } else {
        final_reward
    };
    Ok(Performance {
        value: p_final * final_reward + p_process * process,
        floor_hits,
    })
}

pub fn performance(traj: &Trajectory, p_final: f64, p_process: f64) -> Result<Performance> {
    performance_from_samples(&traj.xi_z_samples, p_final, p_process)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genes: Vec<usize>,
    pub performance: Option<f64>,
    pub fitness: Option<f64>,
    /// `xi_Z^2` at t = 0 and after every pulse, once evaluated.
    pub xi_samples: Option<Vec<f64>>,
    pub floor_hits: usize,
}

impl Individual {
    pub fn new(genes: Vec<usize>) -> Self {
        Self {
            genes,
            performance: None,
            fitness: None,
            xi_samples: None,
            floor_hits: 0,
        }
    }

    pub fn is_evaluated(&self) -> bool {
        self.performance.is_some()
    }

    pub fn final_xi(&self) -> Option<f64> {
        self.xi_samples.as_ref().and_then(|s| s.last().copied())
    }

    fn perf(&self) -> f64 {
        self.performance.expect("individual evaluated before ranking")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord {
    /// 1-based generation index.
    pub index: usize,
    pub final_xi: Vec<f64>,
    pub performances: Vec<f64>,
    pub best_performance: f64,
    pub mean_performance: f64,
    pub median_performance: f64,
    pub best_genes: Vec<usize>,
    pub best_xi_samples: Vec<f64>,
    pub floor_hits: usize,
}

#[derive(Debug, Clone)]
pub struct GaOutcome {
    pub records: Vec<GenerationRecord>,
    pub best: Individual,
}

/// SplitMix64 finalizer used to derive independent sub-seeds.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic sub-seed for `(seed, a, b)`.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    mix64(mix64(mix64(seed) ^ a) ^ b.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn init_population(config: &GaConfig, genes: usize, level_count: usize, rng: &mut impl Rng) -> Vec<Individual> {
    (0..config.population_size)
        .map(|_| Individual::new((0..genes).map(|_| rng.gen_range(0..level_count)).collect()))
        .collect()
}

/// `F_i = R_i - min_l R_l`.
pub fn fitness_assign(population: &mut [Individual]) {
    let min = population.iter().map(Individual::perf).fold(f64::INFINITY, f64::min);
    for ind in population.iter_mut() {
        ind.fitness = Some(ind.perf() - min);
    }
}

/// Fitness-proportional sampler; uniform when every fitness is zero.
#[derive(Debug, Clone)]
pub struct RouletteWheel {
    cumulative: Vec<f64>,
}

impl RouletteWheel {
    pub fn new(fitness: &[f64]) -> Self {
        let mut acc = 0.0;
        let cumulative = fitness
            .iter()
            .map(|&f| {
                acc += f.max(0.0);
                acc
            })
            .collect();
        Self { cumulative }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        let n = self.cumulative.len();
        let total = self.cumulative.last().copied().unwrap_or(0.0);
        if total <= 0.0 {
            return rng.gen_range(0..n);
        }
        let u = rng.gen::<f64>() * total;
        // first index whose cumulative weight exceeds u; zero-weight entries are never chosen
        let idx = self.cumulative.partition_point(|&c| c <= u);
        idx.min(n - 1)
    }
}

pub fn select_parent(population: &[Individual], rng: &mut impl Rng) -> usize {
    let fitness: Vec<f64> = population.iter().map(|i| i.fitness.unwrap_or(0.0)).collect();
    RouletteWheel::new(&fitness).sample(rng)
}

/// `c_d = c_s + (1 - c_s) |F_i - F_j| / f_h`, clamped to `[c_s, 1]`.
pub fn crossover_rate(f_i: f64, f_j: f64, c_s: f64, f_h: f64) -> f64 {
    (c_s + (1.0 - c_s) * (f_i - f_j).abs() / f_h).clamp(c_s, 1.0)
}

/// Each locus takes parent i's gene when `U <= c_d`, else parent j's.
pub fn crossover(
    parent_i: &[usize],
    parent_j: &[usize],
    f_i: f64,
    f_j: f64,
    c_s: f64,
    f_h: f64,
    rng: &mut impl Rng,
) -> Result<Individual> {
    if parent_i.len() != parent_j.len() {
        return Err(Error::invalid(format!(
            "parents have different lengths {} and {}",
            parent_i.len(),
            parent_j.len()
        )));
    }
    let c_d = crossover_rate(f_i, f_j, c_s, f_h);
    let genes = parent_i
        .iter()
        .zip(parent_j)
        .map(|(&gi, &gj)| if rng.gen::<f64>() <= c_d { gi } else { gj })
        .collect();
    Ok(Individual::new(genes))
}

/// `m_d = m_s (1 - g_t / g)`.
pub fn mutation_rate(g_t: usize, g: usize, m_s: f64) -> f64 {
    m_s * (1.0 - g_t as f64 / g as f64)
}

/// Resamples each gene uniformly over all levels with probability `rate`.
pub fn mutate_genes(genes: &mut [usize], rate: f64, level_count: usize, rng: &mut impl Rng) {
    for gene in genes.iter_mut() {
        if rng.gen::<f64>() < rate {
            *gene = rng.gen_range(0..level_count);
        }
    }
}

pub fn mutate(ind: &Individual, g_t: usize, g: usize, m_s: f64, level_count: usize, rng: &mut impl Rng) -> Individual {
    let rate = mutation_rate(g_t, g, m_s);
    let mut genes = ind.genes.clone();
    mutate_genes(&mut genes, rate, level_count, rng);
    if genes == ind.genes {
        ind.clone()
    } else {
        Individual::new(genes)
    }
}

#[derive(Debug, Clone)]
struct Evaluation {
    performance: f64,
    xi_samples: Vec<f64>,
    floor_hits: usize,
}

fn evaluate_population(
    population: &mut [Individual],
    evaluator: &impl Evaluator,
    config: &GaConfig,
    memo: &mut HashMap<Vec<usize>, Evaluation>,
    generation: usize,
) -> Result<()> {
    let mut pending: Vec<Vec<usize>> = population
        .iter()
        .filter(|i| !i.is_evaluated() && !memo.contains_key(&i.genes))
        .map(|i| i.genes.clone())
        .collect();
    pending.sort_unstable();
    pending.dedup();
    let fresh: Vec<Result<(Vec<usize>, Evaluation)>> = pending
        .into_par_iter()
        .map(|genes| {
            let traj = evaluator.evaluate(&genes)?;
            let perf = performance(&traj, config.p_final, config.p_process)?;
            Ok((
                genes,
                Evaluation {
                    performance: perf.value,
                    xi_samples: traj.xi_z_samples,
                    floor_hits: perf.floor_hits,
                },
            ))
        })
        .collect();
    for item in fresh {
        let (genes, eval) = item.map_err(|e| Error::Evaluation {
            generation,
            source: Box::new(e),
        })?;
        memo.insert(genes, eval);
    }
    for ind in population.iter_mut().filter(|i| !i.is_evaluated()) {
        let eval = &memo[&ind.genes];
        ind.performance = Some(eval.performance);
        ind.xi_samples = Some(eval.xi_samples.clone());
        ind.floor_hits = eval.floor_hits;
    }
    Ok(())
}

/// Indices sorted by descending performance; ties keep population order.
fn ranking(population: &[Individual]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..population.len()).collect();
    order.sort_by(|&a, &b| population[b].perf().total_cmp(&population[a].perf()));
    order
}

fn record(index: usize, population: &[Individual], best: usize) -> GenerationRecord {
    let performances: Vec<f64> = population.iter().map(Individual::perf).collect();
    let final_xi: Vec<f64> = population.iter().map(|i| i.final_xi().unwrap_or(f64::NAN)).collect();
    let mean = performances.iter().sum::<f64>() / performances.len() as f64;
    GenerationRecord {
        index,
        median_performance: median(&performances),
        mean_performance: mean,
        best_performance: performances[best],
        best_genes: population[best].genes.clone(),
        best_xi_samples: population[best].xi_samples.clone().unwrap_or_default(),
        floor_hits: population.iter().map(|i| i.floor_hits).sum(),
        final_xi,
        performances,
    }
}

fn breed(population: &[Individual], config: &GaConfig, g_t: usize, level_count: usize) -> Result<Vec<Individual>> {
    let order = ranking(population);
    let mut next: Vec<Individual> = order[..config.elite_count]
        .iter()
        .map(|&i| population[i].clone())
        .collect();
    let fitness: Vec<f64> = population.iter().map(|i| i.fitness.unwrap_or(0.0)).collect();
    let wheel = RouletteWheel::new(&fitness);
    for slot in config.elite_count..config.population_size {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, g_t as u64, slot as u64));
        let i = wheel.sample(&mut rng);
        let j = wheel.sample(&mut rng);
        let child = crossover(
            &population[i].genes,
            &population[j].genes,
            fitness[i],
            fitness[j],
            config.c_s,
            config.f_h,
            &mut rng,
        )?;
        next.push(mutate(
            &child,
            g_t,
            config.generations,
            config.m_s,
            level_count,
            &mut rng,
        ));
    }
    Ok(next)
}

/// Runs the full generation loop. Output depends only on `config` and the
/// evaluator, not on how evaluations are scheduled across threads.
pub fn run_ga(config: &GaConfig, evaluator: &impl Evaluator) -> Result<GaOutcome> {
    config.validate()?;
    let genes = evaluator.genes();
    let level_count = evaluator.level_count();
    if genes == 0 || level_count == 0 {
        return Err(Error::invalid("evaluator must expose at least one gene and one level"));
    }
    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0, u64::MAX));
    let mut population = init_population(config, genes, level_count, &mut init_rng);
    let mut memo = HashMap::new();
    let mut records = Vec::with_capacity(config.generations);
    let mut best: Option<Individual> = None;

    for g_t in 1..=config.generations {
        evaluate_population(&mut population, evaluator, config, &mut memo, g_t)?;
        fitness_assign(&mut population);
        let top = ranking(&population)[0];
        records.push(record(g_t, &population, top));
        if best.as_ref().is_none_or(|b| population[top].perf() > b.perf()) {
            best = Some(population[top].clone());
        }
        if g_t < config.generations {
            population = breed(&population, config, g_t, level_count)?;
        }
    }

    Ok(GaOutcome {
        records,
        best: best.expect("at least one generation ran"),
    })
}

/// Exhaustive search over every sequence; only sensible for tiny spaces.
pub fn exhaustive_best(evaluator: &impl Evaluator, p_final: f64, p_process: f64) -> Result<(Vec<usize>, f64)> {
    let genes = evaluator.genes();
    let levels = evaluator.level_count();
    let total = levels
        .checked_pow(genes as u32)
        .filter(|&t| t <= 1 << 20)
        .ok_or_else(|| Error::invalid("search space too large for exhaustive enumeration"))?;
    let scored: Vec<Result<(Vec<usize>, f64)>> = (0..total)
        .into_par_iter()
        .map(|code| {
            let mut rest = code;
            let seq: Vec<usize> = (0..genes)
                .map(|_| {
                    let g = rest % levels;
                    rest /= levels;
                    g
                })
                .collect();
            let traj = evaluator.evaluate(&seq)?;
            Ok((seq, performance(&traj, p_final, p_process)?.value))
        })
        .collect();
    let mut best: Option<(Vec<usize>, f64)> = None;
    for s in scored {
        let (seq, r) = s?;
        if best.as_ref().is_none_or(|(_, b)| r > *b) {
            best = Some((seq, r));
        }
    }
    Ok(best.expect("search space is non-empty"))
}
