//! Population statistics: Gaussian kernel density estimates and the summary
//! numbers behind violin-style plots.

use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// Silverman's rule, `1.06 * sd * n^(-1/5)`.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdeEstimate {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

fn gaussian(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
}

/// Sample standard deviation (n - 1 denominator); zero for a single sample.
pub fn std_dev(samples: &[f64]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let ss: f64 = samples.iter().map(|x| (x - mean).powi(2)).sum();
    (ss / (n - 1) as f64).sqrt()
}

pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    1.06 * std_dev(samples) * (samples.len() as f64).powf(-0.2)
}

pub fn kde(samples: &[f64], bandwidth: Bandwidth, grid: &[f64]) -> Result<KdeEstimate> {
    if samples.is_empty() {
        return Err(Error::invalid("kde needs at least one sample"));
    }
    // fixed summation order makes the estimate exactly permutation invariant
    let samples = sorted(samples);
    let h = match bandwidth {
        Bandwidth::Auto => silverman_bandwidth(&samples),
        Bandwidth::Fixed(h) => h,
    };
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("bandwidth must be positive, got {h}")));
    }
    let norm = 1.0 / (samples.len() as f64 * h);
    let density = grid
        .iter()
        .map(|&x| norm * samples.iter().map(|&xi| gaussian((x - xi) / h)).sum::<f64>())
        .collect();
    Ok(KdeEstimate {
        grid: grid.to_vec(),
        density,
        bandwidth: h,
    })
}

/// `n` evenly spaced points covering `[min - pad*h, max + pad*h]`.
pub fn padded_grid(samples: &[f64], h: f64, pad: f64, n: usize) -> Vec<f64> {
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - pad * h;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + pad * h;
    let step = (hi - lo) / (n.max(2) - 1) as f64;
    (0..n.max(2)).map(|i| lo + i as f64 * step).collect()
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub min: f64,
    pub max: f64,
}

/// Linear-interpolation quantile of already sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// NaN for empty input.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    quantile_sorted(&sorted(values), 0.5)
}

pub fn generation_stats(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::invalid("statistics need at least one value"));
    }
    let s = sorted(values);
    Ok(Summary {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        median: quantile_sorted(&s, 0.5),
        q25: quantile_sorted(&s, 0.25),
        q75: quantile_sorted(&s, 0.75),
        min: s[0],
        max: s[s.len() - 1],
    })
}

/// Mean and population variance (`1/n`), so a single value has variance 0.
pub fn mean_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}
