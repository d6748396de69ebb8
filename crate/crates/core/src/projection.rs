//! Exact t-SNE for the category overview.
//!
//! N is the number of categories (tens), so all pairwise quantities are
//! computed densely.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{SignatureMatrix, Split};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

const ENTROPY_TOL: f64 = 1e-10;
const MAX_BISECTION_STEPS: usize = 200;
const PROB_FLOOR: f64 = 1e-12;
const MIN_GAIN: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    /// `None` picks `min(30, ⌊(N−1)/3⌋)`.
    pub perplexity: Option<f64>,
    pub iterations: usize,
    pub early_exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub learning_rate: f64,
    pub momentum_start: f64,
    pub momentum_final: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: None,
            iterations: 1000,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            learning_rate: 200.0,
            momentum_start: 0.5,
            momentum_final: 0.8,
            seed: 0,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(p) = self.perplexity {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::invalid(format!("perplexity must be > 0, got {p}")));
            }
        }
        if self.iterations < self.exaggeration_iterations.max(250) {
            return Err(Error::invalid(format!(
                "iterations must be at least 250 and cover the exaggeration phase, got {}",
                self.iterations
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be > 0"));
        }
        if !(self.early_exaggeration >= 1.0 && self.early_exaggeration.is_finite()) {
            return Err(Error::invalid("early_exaggeration must be >= 1"));
        }
        for m in [self.momentum_start, self.momentum_final] {
            if !(0.0..1.0).contains(&m) {
                return Err(Error::invalid("momentum must lie in [0, 1)"));
            }
        }
        Ok(())
    }

    /// Requested perplexity (or the default) capped at `(N−1)/3`.
    pub fn effective_perplexity(&self, n: usize) -> f64 {
        let cap = (n.saturating_sub(1)) as f64 / 3.0;
        match self.perplexity {
            Some(p) => p.min(cap),
            None => 30f64.min(cap.floor()),
        }
        .max(1.0)
    }
}

/// Perplexity-calibrated Gaussian conditionals, one row per point.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditionals {
    pub probabilities: Matrix<f64>,
    /// Precision `β_i = 1 / (2σ_i²)` found for each row.
    pub precisions: Vec<f64>,
}

fn squared_distances(x: &Matrix<f64>) -> Matrix<f64> {
    let n = x.rows();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b).powi(2)).sum();
            d.set(i, j, v);
            d.set(j, i, v);
        }
    }
    d
}

/// Row-wise bisection on the Gaussian precision so that each conditional
/// distribution has entropy `ln(perplexity)`.
pub fn conditional_affinities(x: &Matrix<f64>, perplexity: f64) -> Result<Conditionals> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::invalid(format!("t-SNE needs at least 2 points, got {n}")));
    }
    if !x.is_finite() {
        return Err(Error::invalid("t-SNE input has non-finite values"));
    }
    if !(perplexity > 0.0 && perplexity.is_finite()) {
        return Err(Error::invalid(format!("perplexity {perplexity} invalid")));
    }
    let dist = squared_distances(x);
    let target = perplexity.ln();
    let mut p = Matrix::zeros(n, n);
    let mut precisions = Vec::with_capacity(n);
    let mut row = vec![0.0; n];

    for i in 0..n {
        // shift by the nearest neighbour distance so the largest kernel value is 1
        let dmin = (0..n)
            .filter(|&j| j != i)
            .map(|j| dist.get(i, j))
            .fold(f64::INFINITY, f64::min);
        let entropy_at = |beta: f64, row: &mut [f64]| -> f64 {
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for j in 0..n {
                if j == i {
                    row[j] = 0.0;
                    continue;
                }
                let dj = dist.get(i, j) - dmin;
                let v = (-beta * dj).exp();
                row[j] = v;
                sum += v;
                weighted += dj * v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
            sum.ln() + beta * weighted / sum
        };

        let mut beta = 1.0;
        let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
        let mut entropy = entropy_at(beta, &mut row);
        for _ in 0..MAX_BISECTION_STEPS {
            let diff = entropy - target;
            if diff.abs() <= ENTROPY_TOL {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
            entropy = entropy_at(beta, &mut row);
        }
        p.row_mut(i).copy_from_slice(&row);
        precisions.push(beta);
    }
    Ok(Conditionals {
        probabilities: p,
        precisions,
    })
}

/// Symmetric joint affinities `P = (P_{j|i} + P_{i|j}) / 2N`.
pub fn compute_affinities(x: &Matrix<f64>, perplexity: f64) -> Result<Matrix<f64>> {
    let n = x.rows();
    let perplexity = perplexity.min(n.saturating_sub(1) as f64 / 3.0).max(1.0);
    let cond = conditional_affinities(x, perplexity)?.probabilities;
    let mut p = Matrix::zeros(n, n);
    let denom = 2.0 * n as f64;
    for i in 0..n {
        for j in i + 1..n {
            let v = (cond.get(i, j) + cond.get(j, i)) / denom;
            p.set(i, j, v);
            p.set(j, i, v);
        }
    }
    Ok(p)
}

/// Exponential of the row entropy of a conditional distribution, in the
/// same base as the entropy.
pub fn row_perplexity(row: &[f64]) -> f64 {
    let h: f64 = row.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum();
    h.exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub coords: Matrix<f64>,
    /// KL(P‖Q) after each iteration, against the unexaggerated P.
    pub kl_history: Vec<f64>,
    pub perplexity: f64,
}

impl Embedding {
    pub fn final_kl(&self) -> f64 {
        *self.kl_history.last().expect("at least one iteration")
    }
}

fn kl_and_gradient(p: &Matrix<f64>, y: &Matrix<f64>, exaggeration: f64, grad: &mut Matrix<f64>) -> f64 {
    let n = p.rows();
    let mut num = Matrix::zeros(n, n);
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let d = (y.get(i, 0) - y.get(j, 0)).powi(2) + (y.get(i, 1) - y.get(j, 1)).powi(2);
            let v = 1.0 / (1.0 + d);
            num.set(i, j, v);
            num.set(j, i, v);
            total += 2.0 * v;
        }
    }
    let mut kl = 0.0;
    for v in grad.as_mut_slice() {
        *v = 0.0;
    }
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let q = (num.get(i, j) / total).max(PROB_FLOOR);
            let pij = p.get(i, j);
            if pij > 0.0 {
                kl += pij * (pij.max(PROB_FLOOR) / q).ln();
            }
            let mult = 4.0 * (exaggeration * pij - q) * num.get(i, j);
            for c in 0..2 {
                let g = grad.get(i, c) + mult * (y.get(i, c) - y.get(j, c));
                grad.set(i, c, g);
            }
        }
    }
    kl.max(0.0)
}

/// Gradient descent on KL(P‖Q) with a Student-t kernel in 2-D, early
/// exaggeration, a momentum switch and per-coordinate gains.
pub fn project(x: &Matrix<f64>, config: &TsneConfig) -> Result<Embedding> {
    config.validate()?;
    let n = x.rows();
    let perplexity = config.effective_perplexity(n);
    let p = compute_affinities(x, perplexity)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut y = Matrix::zeros(n, 2);
    for v in y.as_mut_slice() {
        *v = 1e-2 * rng.sample::<f64, _>(StandardNormal);
    }
    let mut update = Matrix::<f64>::zeros(n, 2);
    let mut gains = Matrix::<f64>::from_vec(n, 2, vec![1.0; 2 * n])?;
    let mut grad = Matrix::zeros(n, 2);
    let mut kl_history = Vec::with_capacity(config.iterations);

    for it in 0..config.iterations {
        let exaggerating = it < config.exaggeration_iterations;
        let exaggeration = if exaggerating { config.early_exaggeration } else { 1.0 };
        let momentum = if exaggerating {
            config.momentum_start
        } else {
            config.momentum_final
        };
        kl_and_gradient(&p, &y, exaggeration, &mut grad);
        for idx in 0..2 * n {
            let g = grad.as_slice()[idx];
            let u = update.as_slice()[idx];
            let gain = &mut gains.as_mut_slice()[idx];
            *gain = if (g > 0.0) != (u > 0.0) {
                *gain + 0.2
            } else {
                (*gain * 0.8).max(MIN_GAIN)
            };
            let step = momentum * u - config.learning_rate * *gain * g;
            update.as_mut_slice()[idx] = step;
            y.as_mut_slice()[idx] += step;
        }
        for c in 0..2 {
            let mean = (0..n).map(|i| y.get(i, c)).sum::<f64>() / n as f64;
            for i in 0..n {
                y.set(i, c, y.get(i, c) - mean);
            }
        }
        let kl = kl_and_gradient(&p, &y, 1.0, &mut grad);
        if !kl.is_finite() || !y.is_finite() {
            return Err(Error::ProjectionDiverged { iteration: it + 1 });
        }
        kl_history.push(kl);
    }
    Ok(Embedding {
        coords: y,
        kl_history,
        perplexity,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    pub coords: Matrix<f64>,
    pub kl_history: Vec<f64>,
    pub seen_mask: Vec<bool>,
}

/// Projects the standardized signature matrix, one point per category.
pub fn project_categories(
    signatures: &SignatureMatrix,
    split: &Split,
    config: &TsneConfig,
) -> Result<ProjectionResult> {
    let emb = project(signatures.matrix(), config)?;
    Ok(ProjectionResult {
        coords: emb.coords,
        kl_history: emb.kl_history,
        seen_mask: (0..signatures.num_classes()).map(|c| split.is_seen(c)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_matrix(n: usize, a: usize, seed: u64) -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * a).map(|_| rng.sample(StandardNormal)).collect();
        Matrix::from_vec(n, a, data).unwrap()
    }

    #[test]
    fn equidistant_points_give_uniform_rows() {
        let x = Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]])
            .unwrap();
        let c = conditional_affinities(&x, 1.5).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 0.0 } else { 0.5 };
                assert!((c.probabilities.get(i, j) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rows_hit_target_perplexity() {
        let x = random_matrix(50, 85, 3);
        let c = conditional_affinities(&x, 16.0).unwrap();
        for i in 0..50 {
            let row = c.probabilities.row(i);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((row_perplexity(row) - 16.0).abs() <= 1e-4);
        }
    }

    #[test]
    fn joint_affinities_are_scale_invariant() {
        let x = random_matrix(30, 10, 5);
        let mut scaled = x.clone();
        for v in scaled.as_mut_slice() {
            *v *= 7.5;
        }
        let p = compute_affinities(&x, 9.0).unwrap();
        let q = compute_affinities(&scaled, 9.0).unwrap();
        for (a, b) in p.as_slice().iter().zip(q.as_slice()) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn two_points_project_apart() {
        let x = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let e = project(&x, &TsneConfig::default()).unwrap();
        let d = (e.coords.get(0, 0) - e.coords.get(1, 0)).hypot(e.coords.get(0, 1) - e.coords.get(1, 1));
        assert!(d > 0.0);
        assert!(e.final_kl().is_finite() && e.final_kl() >= 0.0);
    }

    #[test]
    fn projection_is_deterministic_and_centered() {
        let x = random_matrix(12, 5, 8);
        let cfg = TsneConfig {
            iterations: 300,
            seed: 4,
            ..TsneConfig::default()
        };
        let a = project(&x, &cfg).unwrap();
        let b = project(&x, &cfg).unwrap();
        assert_eq!(a, b);
        for c in 0..2 {
            let mean: f64 = (0..12).map(|i| a.coords.get(i, c)).sum::<f64>() / 12.0;
            assert!(mean.abs() < 1e-9);
        }
    }

    #[test]
    fn default_perplexity_is_capped() {
        let cfg = TsneConfig::default();
        assert_eq!(cfg.effective_perplexity(50), 16.0);
        assert_eq!(cfg.effective_perplexity(200), 30.0);
        assert!(TsneConfig {
            iterations: 100,
            ..cfg
        }
        .validate()
        .is_err());
    }

    #[test]
    fn single_point_is_rejected() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(compute_affinities(&x, 5.0).is_err());
    }
}
