//! Entropy, expected guesses and marginal guesswork over n-gram frequencies.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ngram::NGramModel;

const CUMULATIVE_TOLERANCE: f64 = 1e-12;
const SUM_TOLERANCE: f64 = 1e-9;

/// Online-attack budget used for the pass/fail annotation.
pub const ONLINE_ATTACK_GUESSES: f64 = 1e6;

#[derive(Debug, Error, PartialEq)]
pub enum GuessworkError {
    #[error("alpha must be in (0, 1], got {0}")]
    AlphaOutOfRange(f64),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
}

/// `k * log2(vocab_size)`.
pub fn entropy_bits(vocab_size: u64, k: u32) -> f64 {
    assert!(vocab_size >= 1, "vocabulary must be non-empty");
    f64::from(k) * (vocab_size as f64).log2()
}

/// Sum of `log2` of each slot's dictionary size.
pub fn slot_entropy_bits(dictionary_sizes: &[u64]) -> f64 {
    dictionary_sizes.iter().map(|&n| (n as f64).log2()).sum()
}

/// `vocab_size^k / 2`.
pub fn expected_guesses(vocab_size: u64, k: u32) -> f64 {
    (vocab_size as f64).powi(k as i32) / 2.0
}

pub fn expected_guesses_log2(vocab_size: u64, k: u32) -> f64 {
    entropy_bits(vocab_size, k) - 1.0
}

pub fn resists_online_attack(expected_guesses_log2: f64) -> bool {
    expected_guesses_log2 > ONLINE_ATTACK_GUESSES.log2()
}

/// Probabilities sorted in descending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuessworkDistribution {
    probabilities: Vec<f64>,
}

impl GuessworkDistribution {
    pub fn new(mut probabilities: Vec<f64>) -> Result<Self, GuessworkError> {
        if probabilities.is_empty() {
            return Err(GuessworkError::InvalidDistribution("empty".into()));
        }
        if let Some(p) = probabilities.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(GuessworkError::InvalidDistribution(format!("probability {p}")));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(GuessworkError::InvalidDistribution(format!("sums to {total}")));
        }
        probabilities.sort_by(|a, b| b.total_cmp(a));
        Ok(Self { probabilities })
    }

    /// Relative frequencies of positive counts.
    pub fn from_counts<I: IntoIterator<Item = u64>>(counts: I) -> Result<Self, GuessworkError> {
        let counts: Vec<u64> = counts.into_iter().filter(|&c| c > 0).collect();
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(GuessworkError::InvalidDistribution("no observations".into()));
        }
        Self::new(counts.iter().map(|&c| c as f64 / total as f64).collect())
    }

    pub fn uniform(n: usize) -> Result<Self, GuessworkError> {
        Self::new(vec![1.0 / n as f64; n])
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn support(&self) -> usize {
        self.probabilities.len()
    }

    /// Shannon entropy in bits.
    pub fn shannon_bits(&self) -> f64 {
        -self.probabilities.iter().map(|p| p * p.log2()).sum::<f64>()
    }
}

fn check_alpha(alpha: f64) -> Result<(), GuessworkError> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(GuessworkError::AlphaOutOfRange(alpha))
    }
}

/// Smallest number of top guesses whose cumulative probability reaches α.
pub fn marginal_guesswork(dist: &GuessworkDistribution, alpha: f64) -> Result<usize, GuessworkError> {
    check_alpha(alpha)?;
    let mut cumulative = 0.0;
    for (i, p) in dist.probabilities.iter().enumerate() {
        cumulative += p;
        if cumulative >= alpha - CUMULATIVE_TOLERANCE {
            return Ok(i + 1);
        }
    }
    Ok(dist.support())
}

/// Evaluates w_α at every grid point in one cumulative pass. The grid need
/// not be sorted.
pub fn marginal_guesswork_many(dist: &GuessworkDistribution, alphas: &[f64]) -> Result<Vec<usize>, GuessworkError> {
    for &a in alphas {
        check_alpha(a)?;
    }
    let mut order: Vec<usize> = (0..alphas.len()).collect();
    order.sort_by(|&i, &j| alphas[i].total_cmp(&alphas[j]));
    let mut out = vec![0; alphas.len()];
    let mut cumulative = 0.0;
    let mut taken = 0;
    for idx in order {
        let target = alphas[idx] - CUMULATIVE_TOLERANCE;
        while cumulative < target && taken < dist.support() {
            cumulative += dist.probabilities[taken];
            taken += 1;
        }
        out[idx] = taken.max(1);
    }
    Ok(out)
}

/// 0.05, 0.10, ..., 1.0.
pub fn default_alpha_grid() -> Vec<f64> {
    (1..=20).map(|k| k as f64 / 20.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub alpha: f64,
    pub guesses: usize,
    pub bits: f64,
}

/// Marginal guesswork over the model's empirical n-gram frequencies.
pub fn guesswork_curve(model: &NGramModel, alpha_grid: &[f64]) -> Result<Vec<CurvePoint>, GuessworkError> {
    let dist = GuessworkDistribution::from_counts(model.count_values())?;
    curve_for(&dist, alpha_grid)
}

pub fn curve_for(dist: &GuessworkDistribution, alpha_grid: &[f64]) -> Result<Vec<CurvePoint>, GuessworkError> {
    let guesses = marginal_guesswork_many(dist, alpha_grid)?;
    Ok(alpha_grid
        .iter()
        .zip(guesses)
        .map(|(&alpha, g)| CurvePoint {
            alpha,
            guesses: g,
            bits: (g as f64).log2(),
        })
        .collect())
}
