//! Exact O(N²) t-SNE.
//!
//! Affinities: per-point Gaussian precisions found by binary search so each
//! conditional row hits the target entropy, then symmetrized into a joint
//! distribution. Embedding: momentum gradient descent on KL(P‖Q) with a
//! Student-t Q, early exaggeration, and a KL trace recorded against the
//! true (unexaggerated) P. The descent loop is sequential; only the
//! row-independent affinity search runs in parallel.

use rayon::prelude::*;

use crate::embedding::EmbeddingError;
use crate::tensor::SeedRng;

/// Entropy tolerance for the precision search, in bits.
const ENTROPY_TOLERANCE_BITS: f64 = 1e-3;
/// Squared-distance floor; keeps duplicate points from collapsing a row.
const MIN_SQ_DISTANCE: f64 = 1e-12;

/// Descent schedule. Defaults follow the standard recipe: perplexity 30,
/// 1000 iterations at learning rate 100, momentum 0.5 switching to 0.8 at
/// iteration 250, and ×4 early exaggeration for the first 50 iterations.
#[derive(Clone, Debug)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    /// First iteration (0-based) that uses `final_momentum`.
    pub momentum_switch: usize,
    pub exaggeration: f64,
    /// Number of leading iterations that multiply P by `exaggeration`.
    pub exaggeration_iters: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 100.0,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            exaggeration: 4.0,
            exaggeration_iters: 50,
            seed: 0,
        }
    }
}

/// Joint affinities plus the realized per-row conditional entropies.
#[derive(Clone, Debug)]
pub struct Affinities {
    /// Symmetric N×N joint distribution, zero diagonal, total mass 1.
    pub joint: Vec<Vec<f64>>,
    /// Realized entropy of each conditional row, in bits.
    pub row_entropy_bits: Vec<f64>,
}

/// Embedding coordinates plus the KL(P‖Q) value before each update and
/// after the last (so `kl_trace.len() == iterations + 1`).
#[derive(Clone, Debug)]
pub struct TsneResult {
    pub coordinates: Vec<[f64; 2]>,
    pub kl_trace: Vec<f64>,
}

fn squared_distances(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = points.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        return 0.0;
                    }
                    let d2: f64 = points[i]
                        .iter()
                        .zip(&points[j])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    d2.max(MIN_SQ_DISTANCE)
                })
                .collect()
        })
        .collect()
}

/// Conditional row for precision `beta` and its entropy in bits.
/// Distances are shifted by the row minimum before exponentiating, which
/// leaves the normalized row unchanged but never underflows to all-zero.
fn conditional_row(sq_dist: &[f64], row: usize, beta: f64) -> (Vec<f64>, f64) {
    let min_d2 = sq_dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != row)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    let mut p: Vec<f64> = sq_dist
        .iter()
        .enumerate()
        .map(|(j, &d2)| if j == row { 0.0 } else { (-beta * (d2 - min_d2)).exp() })
        .collect();
    let sum: f64 = p.iter().sum();
    let mut entropy_bits = 0.0;
    for v in &mut p {
        *v /= sum;
        if *v > 0.0 {
            entropy_bits -= *v * v.log2();
        }
    }
    (p, entropy_bits)
}

/// Binary search the precision until the row entropy is within
/// `ENTROPY_TOLERANCE_BITS` of `target_bits` (best effort on degenerate
/// rows, whose entropy does not depend on the precision).
fn search_row(sq_dist: &[f64], row: usize, target_bits: f64) -> (Vec<f64>, f64) {
    let mut beta = 1.0;
    let mut beta_min = f64::NEG_INFINITY;
    let mut beta_max = f64::INFINITY;
    let mut best = conditional_row(sq_dist, row, beta);
    for _ in 0..200 {
        let diff = best.1 - target_bits;
        if diff.abs() <= ENTROPY_TOLERANCE_BITS {
            break;
        }
        if diff > 0.0 {
            // Entropy too high: sharpen the kernel.
            beta_min = beta;
            beta = if beta_max.is_finite() { (beta + beta_max) / 2.0 } else { beta * 2.0 };
        } else {
            beta_max = beta;
            beta = if beta_min.is_finite() { (beta + beta_min) / 2.0 } else { beta / 2.0 };
        }
        best = conditional_row(sq_dist, row, beta);
    }
    best
}

/// Joint affinities P from feature rows: conditional Gaussians at the
/// requested perplexity, symmetrized as p_ij = (p_{j|i} + p_{i|j}) / 2N.
pub fn tsne_affinities(
    features: &[Vec<f64>],
    perplexity: f64,
) -> Result<Affinities, EmbeddingError> {
    let n = features.len();
    if n < 4 {
        return Err(EmbeddingError::TooFewPoints { got: n, need: 4 });
    }
    if !(perplexity > 1.0 && perplexity < (n - 1) as f64) {
        return Err(EmbeddingError::BadPerplexity { perplexity, points: n });
    }
    let width = features[0].len();
    if features.iter().any(|f| f.len() != width) {
        return Err(EmbeddingError::RaggedFeatures {
            got: features.iter().map(Vec::len).find(|&l| l != width).unwrap(),
            want: width,
        });
    }

    let sq = squared_distances(features);
    let target_bits = perplexity.log2();
    let rows: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| search_row(&sq[i], i, target_bits))
        .collect();

    let mut joint = vec![vec![0.0; n]; n];
    let mut row_entropy_bits = Vec::with_capacity(n);
    for (i, (row, entropy)) in rows.iter().enumerate() {
        row_entropy_bits.push(*entropy);
        for j in 0..n {
            if i != j {
                joint[i][j] += row[j] / (2.0 * n as f64);
                joint[j][i] += row[j] / (2.0 * n as f64);
            }
        }
    }
    Ok(Affinities { joint, row_entropy_bits })
}

/// Student-t kernel matrix (unnormalized) and its total mass.
fn student_t_kernel(y: &[[f64; 2]]) -> (Vec<Vec<f64>>, f64) {
    let n = y.len();
    let mut num = vec![vec![0.0; n]; n];
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let k = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i][j] = k;
            num[j][i] = k;
            total += 2.0 * k;
        }
    }
    (num, total)
}

fn kl_divergence(p: &[Vec<f64>], num: &[Vec<f64>], total: f64) -> f64 {
    let mut kl = 0.0;
    for (p_row, num_row) in p.iter().zip(num) {
        for (&pij, &nij) in p_row.iter().zip(num_row) {
            if pij > 0.0 {
                kl += pij * (pij / (nij / total)).ln();
            }
        }
    }
    kl
}

/// Gradient-descent embedding of a joint affinity matrix into 2-D.
pub fn tsne_embed(p: &[Vec<f64>], cfg: &TsneConfig) -> Result<TsneResult, EmbeddingError> {
    let n = p.len();
    if n < 2 {
        return Err(EmbeddingError::TooFewPoints { got: n, need: 2 });
    }
    if p.iter().any(|row| row.len() != n) {
        return Err(EmbeddingError::RaggedFeatures {
            got: p.iter().map(Vec::len).find(|&l| l != n).unwrap(),
            want: n,
        });
    }

    let mut rng = SeedRng::new(cfg.seed).derive("tsne/init");
    let mut y = vec![[0.0f64; 2]; n];
    for point in y.iter_mut() {
        point[0] = rng.next_normal(0.0, 1e-4);
        point[1] = rng.next_normal(0.0, 1e-4);
    }
    let mut velocity = vec![[0.0f64; 2]; n];
    let mut kl_trace = Vec::with_capacity(cfg.iterations + 1);

    for iter in 0..cfg.iterations {
        let (num, total) = student_t_kernel(&y);
        kl_trace.push(kl_divergence(p, &num, total));

        let exaggeration =
            if iter < cfg.exaggeration_iters { cfg.exaggeration } else { 1.0 };
        let momentum = if iter < cfg.momentum_switch {
            cfg.initial_momentum
        } else {
            cfg.final_momentum
        };

        let mut grad = vec![[0.0f64; 2]; n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let coeff = 4.0 * (exaggeration * p[i][j] - num[i][j] / total) * num[i][j];
                grad[i][0] += coeff * (y[i][0] - y[j][0]);
                grad[i][1] += coeff * (y[i][1] - y[j][1]);
            }
        }

        let mut mean = [0.0f64; 2];
        for i in 0..n {
            for d in 0..2 {
                velocity[i][d] = momentum * velocity[i][d] - cfg.learning_rate * grad[i][d];
                y[i][d] += velocity[i][d];
                mean[d] += y[i][d];
            }
        }
        // Recenter: KL is translation invariant, this pins the gauge.
        for point in y.iter_mut() {
            point[0] -= mean[0] / n as f64;
            point[1] -= mean[1] / n as f64;
        }
    }

    let (num, total) = student_t_kernel(&y);
    kl_trace.push(kl_divergence(p, &num, total));
    Ok(TsneResult { coordinates: y, kl_trace })
}

/// Serialize an embedding as TSV: `patch_id, label, x, y`.
pub fn embedding_to_tsv(
    rows: &[crate::embedding::FeatureRow],
    coordinates: &[[f64; 2]],
) -> Result<String, EmbeddingError> {
    if rows.len() != coordinates.len() {
        return Err(EmbeddingError::LengthMismatch {
            points: coordinates.len(),
            labels: rows.len(),
        });
    }
    let mut out = String::from("patch_id\tlabel\tx\ty\n");
    for (row, point) in rows.iter().zip(coordinates) {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            row.patch_id,
            row.label.as_str(),
            point[0],
            point[1]
        ));
    }
    Ok(out)
}
