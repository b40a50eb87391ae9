//! Exact O(N^2) t-SNE to two dimensions.
//!
//! High-dimensional affinities are per-point Gaussian conditionals whose
//! bandwidths are found by binary search so each row's perplexity matches
//! the target, then symmetrized to `P = (P_c + P_c^T) / 2N`. The 2D
//! embedding minimizes `KL(P || Q)` with a Student-t kernel (one degree
//! of freedom) by gradient descent with momentum and early exaggeration.
//! Exactness keeps the gradient checkable against finite differences;
//! the intended inputs (a few hundred projected words) never need
//! Barnes-Hut approximations.

use rayon::prelude::*;
use serde::Serialize;

use crate::embedding::EmbeddingTable;
use crate::error::Error;
use crate::rng::{derive_seed, SplitMix64};
use crate::Result;

/// Optimizer and affinity settings.
#[derive(Debug, Clone, Serialize)]
pub struct ProjectionConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    /// P is scaled by this factor for the first `exaggeration_iters`.
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub momentum_initial: f64,
    pub momentum_final: f64,
    pub momentum_switch_iter: usize,
    pub seed: u64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            momentum_initial: 0.5,
            momentum_final: 0.8,
            momentum_switch_iter: 250,
            seed: 0,
        }
    }
}

/// Symmetrized affinity matrix.
#[derive(Debug, Clone)]
pub struct Affinities {
    /// `p[i][j]`, zero diagonal, entries summing to 1.
    pub p: Vec<Vec<f64>>,
    /// Whether duplicate input points had to be jittered apart.
    pub jittered: bool,
}

const PERPLEXITY_TOLERANCE: f64 = 1e-5;
const BANDWIDTH_SEARCH_ITERS: usize = 50;
const JITTER_SCALE: f64 = 1e-12;

/// Builds the symmetric affinity matrix for `points` at the target
/// perplexity. Exact duplicate points get a deterministic jitter of
/// scale 1e-12 so their rows stay searchable.
pub fn pairwise_affinities(
    points: &[Vec<f64>],
    perplexity: f64,
    seed: u64,
) -> Result<Affinities> {
    let n = points.len();
    if n < 4 {
        return Err(Error::InvalidInput(format!(
            "t-SNE needs at least 4 points, got {n}"
        )));
    }
    // Upper bound (N-1)/3, floored at 2 so small-N inputs (N >= 4) keep
    // a usable range.
    let max_perplexity = ((n - 1) as f64 / 3.0).max(2.0);
    if !(perplexity > 1.0 && perplexity < max_perplexity) {
        return Err(Error::InvalidInput(format!(
            "perplexity {perplexity} outside (1, {max_perplexity})"
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::InvalidInput(
            "all points must share one dimension".into(),
        ));
    }

    // Jitter any point that exactly duplicates an earlier one.
    let mut owned: Vec<Vec<f64>> = points.to_vec();
    let mut jittered = false;
    let mut rng = SplitMix64::new(derive_seed(seed, "jitter"));
    for i in 1..n {
        let duplicate = (0..i).any(|j| owned[i] == owned[j]);
        if duplicate {
            jittered = true;
            for c in owned[i].iter_mut() {
                *c += rng.next_gaussian() * JITTER_SCALE;
            }
        }
    }

    let d2: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| squared_distance(&owned[i], &owned[j]))
                .collect()
        })
        .collect();

    let conditionals: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| conditional_row(&d2[i], i, perplexity))
        .collect();

    let norm = 2.0 * n as f64;
    let p: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        (conditionals[i][j] + conditionals[j][i]) / norm
                    }
                })
                .collect()
        })
        .collect();

    Ok(Affinities { p, jittered })
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// One row of conditional affinities, bandwidth found by binary search
/// on `beta = 1 / (2 sigma^2)` until `exp(H)` matches the perplexity.
fn conditional_row(d2: &[f64], i: usize, perplexity: f64) -> Vec<f64> {
    let n = d2.len();
    let mut beta = 1.0f64;
    let mut beta_min = f64::NEG_INFINITY;
    let mut beta_max = f64::INFINITY;
    let mut row = vec![0.0; n];

    // Shift by the smallest off-diagonal distance so the largest kernel
    // value is exp(0); the normalized row is unchanged.
    let d_min = d2
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);

    for _ in 0..BANDWIDTH_SEARCH_ITERS {
        let mut sum = 0.0;
        let mut weighted = 0.0;
        for (j, &d) in d2.iter().enumerate() {
            if j == i {
                row[j] = 0.0;
                continue;
            }
            let shifted = d - d_min;
            let e = (-beta * shifted).exp();
            row[j] = e;
            sum += e;
            weighted += e * shifted;
        }
        // Entropy in nats of the normalized row: ln(sum) + beta * E[d].
        let entropy = sum.ln() + beta * weighted / sum;
        let current = entropy.exp();

        if (current - perplexity).abs() <= PERPLEXITY_TOLERANCE {
            break;
        }
        if current > perplexity {
            // Too flat: sharpen with a larger beta.
            beta_min = beta;
            beta = if beta_max.is_infinite() {
                beta * 2.0
            } else {
                (beta + beta_max) / 2.0
            };
        } else {
            beta_max = beta;
            beta = if beta_min.is_infinite() {
                beta / 2.0
            } else {
                (beta + beta_min) / 2.0
            };
        }
    }

    let sum: f64 = row.iter().sum();
    if sum > 0.0 {
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    row
}

/// Student-t kernel weights and their total over all ordered pairs.
fn t_kernel(y: &[[f64; 2]]) -> (Vec<Vec<f64>>, f64) {
    let n = y.len();
    let w: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        let dx = y[i][0] - y[j][0];
                        let dy = y[i][1] - y[j][1];
                        1.0 / (1.0 + dx * dx + dy * dy)
                    }
                })
                .collect()
        })
        .collect();
    let z: f64 = w.iter().map(|row| row.iter().sum::<f64>()).sum();
    (w, z)
}

/// `KL(P || Q)` of an embedding; non-negative by construction.
pub fn kl_divergence(p: &[Vec<f64>], y: &[[f64; 2]]) -> f64 {
    let (w, z) = t_kernel(y);
    let mut kl = 0.0;
    for (pi, wi) in p.iter().zip(&w) {
        for (&pij, &wij) in pi.iter().zip(wi) {
            if pij > 0.0 {
                let qij = wij / z;
                kl += pij * (pij / qij).ln();
            }
        }
    }
    kl
}

/// Analytic gradient of `KL(exaggeration * P || Q)` with respect to `y`.
pub fn kl_gradient(p: &[Vec<f64>], y: &[[f64; 2]], exaggeration: f64) -> Vec<[f64; 2]> {
    let (w, z) = t_kernel(y);
    (0..y.len())
        .into_par_iter()
        .map(|i| {
            let mut g = [0.0; 2];
            for j in 0..y.len() {
                if i == j {
                    continue;
                }
                let wij = w[i][j];
                let factor = 4.0 * (exaggeration * p[i][j] - wij / z) * wij;
                g[0] += factor * (y[i][0] - y[j][0]);
                g[1] += factor * (y[i][1] - y[j][1]);
            }
            g
        })
        .collect()
}

/// An optimized 2D embedding.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub y: Vec<[f64; 2]>,
    pub final_kl: f64,
}

/// Runs the gradient descent on a prepared affinity matrix.
pub fn embed(p: &[Vec<f64>], cfg: &ProjectionConfig) -> Result<Embedding> {
    let n = p.len();
    let mut rng = SplitMix64::new(derive_seed(cfg.seed, "init"));
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| {
            [
                rng.next_gaussian() * 1e-2,
                rng.next_gaussian() * 1e-2,
            ]
        })
        .collect();
    let mut velocity = vec![[0.0f64; 2]; n];

    for iteration in 0..cfg.iterations {
        let exaggeration = if iteration < cfg.exaggeration_iters {
            cfg.early_exaggeration
        } else {
            1.0
        };
        let grad = kl_gradient(p, &y, exaggeration);
        if grad.iter().any(|g| !g[0].is_finite() || !g[1].is_finite()) {
            return Err(Error::NonFiniteGradient { iteration });
        }

        let momentum = if iteration < cfg.momentum_switch_iter {
            cfg.momentum_initial
        } else {
            cfg.momentum_final
        };
        for i in 0..n {
            for c in 0..2 {
                velocity[i][c] = momentum * velocity[i][c] - cfg.learning_rate * grad[i][c];
                y[i][c] += velocity[i][c];
            }
        }
        // Keep the embedding centered; KL is translation invariant.
        let mut mean = [0.0f64; 2];
        for point in &y {
            mean[0] += point[0];
            mean[1] += point[1];
        }
        mean[0] /= n as f64;
        mean[1] /= n as f64;
        for point in y.iter_mut() {
            point[0] -= mean[0];
            point[1] -= mean[1];
        }
    }

    let final_kl = kl_divergence(p, &y);
    Ok(Embedding { y, final_kl })
}

/// One projected word.
#[derive(Debug, Clone, Serialize)]
pub struct ProjectedPoint {
    pub word: String,
    pub corpus: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone)]
pub struct TsneOutput {
    pub points: Vec<ProjectedPoint>,
    pub final_kl: f64,
    pub jittered: bool,
}

/// Projects labeled words: one output point per `(word, corpus)` input,
/// in input order. Every word must be present in the table.
pub fn tsne(
    table: &EmbeddingTable,
    cfg: &ProjectionConfig,
    labels: &[(String, String)],
) -> Result<TsneOutput> {
    let points: Vec<Vec<f64>> = labels
        .iter()
        .map(|(word, _)| {
            table
                .get(word)
                .map(|v| v.to_vec())
                .ok_or_else(|| Error::InvalidInput(format!("word {word:?} not in embedding table")))
        })
        .collect::<Result<_>>()?;

    let affinities = pairwise_affinities(&points, cfg.perplexity, cfg.seed)?;
    let embedding = embed(&affinities.p, cfg)?;

    let points = labels
        .iter()
        .zip(&embedding.y)
        .map(|((word, corpus), y)| ProjectedPoint {
            word: word.clone(),
            corpus: corpus.clone(),
            x: y[0],
            y: y[1],
        })
        .collect();

    Ok(TsneOutput {
        points,
        final_kl: embedding.final_kl,
        jittered: affinities.jittered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_points(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = SplitMix64::new(seed);
        (0..n)
            .map(|_| (0..dim).map(|_| rng.next_gaussian()).collect())
            .collect()
    }

    #[test]
    fn affinities_reject_too_few_points() {
        let pts = random_points(3, 5, 1);
        assert!(pairwise_affinities(&pts, 1.5, 0).is_err());
    }

    #[test]
    fn affinities_reject_out_of_range_perplexity() {
        let pts = random_points(10, 5, 1);
        assert!(pairwise_affinities(&pts, 1.0, 0).is_err());
        assert!(pairwise_affinities(&pts, 2.9, 0).is_ok());
        assert!(pairwise_affinities(&pts, 3.0, 0).is_err()); // (10-1)/3 = 3
        // Small-N floor keeps N=4 usable.
        let four = random_points(4, 5, 2);
        assert!(pairwise_affinities(&four, 1.5, 0).is_ok());
        assert!(pairwise_affinities(&four, 2.0, 0).is_err());
    }

    #[test]
    fn affinity_matrix_is_a_probability_table() {
        for seed in [1, 2, 3] {
            let pts = random_points(20, 8, seed);
            let a = pairwise_affinities(&pts, 5.0, 0).unwrap();
            let n = pts.len();
            let mut total = 0.0;
            for i in 0..n {
                assert_eq!(a.p[i][i], 0.0);
                for j in 0..n {
                    assert!(a.p[i][j] >= 0.0);
                    assert_eq!(a.p[i][j], a.p[j][i]);
                    total += a.p[i][j];
                }
            }
            assert!((total - 1.0).abs() < 1e-9, "sum {total}");
            assert!(!a.jittered);
        }
    }

    #[test]
    fn conditional_row_entropy_matches_target_perplexity() {
        let pts = random_points(30, 6, 4);
        let target = 7.0;
        let d2: Vec<Vec<f64>> = (0..30)
            .map(|i| (0..30).map(|j| squared_distance(&pts[i], &pts[j])).collect())
            .collect();
        for i in 0..pts.len() {
            let row = conditional_row(&d2[i], i, target);
            assert_eq!(row[i], 0.0);
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            let entropy: f64 = row
                .iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| -p * p.ln())
                .sum();
            assert!(
                (entropy.exp() - target).abs() <= 1e-5,
                "row {i}: perplexity {} vs {target}",
                entropy.exp()
            );
        }
    }

    #[test]
    fn square_corners_have_symmetric_affinities() {
        let pts = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
        ];
        let a = pairwise_affinities(&pts, 1.5, 0).unwrap();
        // Every corner has two side-neighbors at distance 1 and one
        // diagonal neighbor at sqrt(2): all side affinities equal, all
        // diagonal affinities equal, sides strictly closer.
        let side = a.p[0][1];
        let diagonal = a.p[0][2];
        let sides = [(0, 1), (1, 2), (2, 3), (3, 0)];
        for (i, j) in sides {
            assert!((a.p[i][j] - side).abs() < 1e-12);
        }
        for (i, j) in [(0, 2), (1, 3)] {
            assert!((a.p[i][j] - diagonal).abs() < 1e-12);
        }
        assert!(side > diagonal);
    }

    #[test]
    fn duplicates_are_jittered_and_flagged() {
        let mut pts = random_points(8, 4, 9);
        pts[5] = pts[2].clone();
        let a = pairwise_affinities(&pts, 2.0, 0).unwrap();
        assert!(a.jittered);
        let total: f64 = a.p.iter().flatten().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let pts = random_points(10, 5, 11);
        let a = pairwise_affinities(&pts, 2.5, 0).unwrap();
        let mut rng = SplitMix64::new(13);

        for trial in 0..5 {
            let y: Vec<[f64; 2]> = (0..pts.len())
                .map(|_| [rng.next_gaussian(), rng.next_gaussian()])
                .collect();
            let grad = kl_gradient(&a.p, &y, 1.0);
            let eps = 1e-6;
            for i in 0..pts.len() {
                for c in 0..2 {
                    let mut plus = y.clone();
                    plus[i][c] += eps;
                    let mut minus = y.clone();
                    minus[i][c] -= eps;
                    let numeric =
                        (kl_divergence(&a.p, &plus) - kl_divergence(&a.p, &minus)) / (2.0 * eps);
                    let rel = (grad[i][c] - numeric).abs() / grad[i][c].abs().max(1e-4);
                    assert!(
                        rel < 1e-4,
                        "trial {trial} point {i} coord {c}: {} vs {numeric}",
                        grad[i][c]
                    );
                }
            }
        }
    }

    #[test]
    fn plain_gradient_descent_never_increases_kl() {
        let pts = random_points(20, 6, 17);
        let a = pairwise_affinities(&pts, 4.0, 0).unwrap();
        let mut rng = SplitMix64::new(19);
        let mut y: Vec<[f64; 2]> = (0..20)
            .map(|_| [rng.next_gaussian() * 1e-2, rng.next_gaussian() * 1e-2])
            .collect();
        let mut last = kl_divergence(&a.p, &y);
        for _ in 0..100 {
            let grad = kl_gradient(&a.p, &y, 1.0);
            for (point, g) in y.iter_mut().zip(&grad) {
                point[0] -= 1e-3 * g[0];
                point[1] -= 1e-3 * g[1];
            }
            let kl = kl_divergence(&a.p, &y);
            assert!(kl <= last + 1e-12, "KL rose from {last} to {kl}");
            last = kl;
        }
    }

    #[test]
    fn final_kl_is_non_negative() {
        let pts = random_points(12, 4, 21);
        let a = pairwise_affinities(&pts, 3.0, 0).unwrap();
        let cfg = ProjectionConfig {
            iterations: 120,
            ..Default::default()
        };
        let out = embed(&a.p, &cfg).unwrap();
        assert!(out.final_kl >= 0.0);
        assert_eq!(out.y.len(), 12);
    }

    #[test]
    fn identical_inputs_become_mutual_nearest_neighbors() {
        // Eleven scaled basis vectors (pairwise equidistant) plus one
        // exact duplicate of point 3 in position 7.
        let mut pts: Vec<Vec<f64>> = (0..12)
            .map(|k| {
                let mut p = vec![0.0; 12];
                p[k] = 5.0;
                p
            })
            .collect();
        pts[7] = pts[3].clone();
        let a = pairwise_affinities(&pts, 2.0, 0).unwrap();
        assert!(a.jittered);
        // Gentle settings: N is tiny, and the default learning rate with
        // early exaggeration can fling a pair apart for good.
        let cfg = ProjectionConfig {
            iterations: 600,
            learning_rate: 10.0,
            early_exaggeration: 1.0,
            ..Default::default()
        };
        let out = embed(&a.p, &cfg).unwrap();
        let nearest = |i: usize| {
            (0..out.y.len())
                .filter(|&j| j != i)
                .min_by(|&a_, &b_| {
                    let da = squared_distance_2d(out.y[i], out.y[a_]);
                    let db = squared_distance_2d(out.y[i], out.y[b_]);
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap()
        };
        assert_eq!(nearest(3), 7);
        assert_eq!(nearest(7), 3);
    }

    fn squared_distance_2d(a: [f64; 2], b: [f64; 2]) -> f64 {
        (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
    }

    fn top5(y: &[[f64; 2]], i: usize) -> std::collections::BTreeSet<usize> {
        let mut order: Vec<usize> = (0..y.len()).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| {
            squared_distance_2d(y[i], y[a])
                .partial_cmp(&squared_distance_2d(y[i], y[b]))
                .unwrap()
        });
        order.into_iter().take(5).collect()
    }

    #[test]
    fn neighbor_ranks_survive_global_rotation() {
        let mut rng = SplitMix64::new(29);
        let dim = 12;
        let n = 30;
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.next_gaussian()).collect())
            .collect();
        let (sin, cos) = 0.6f64.sin_cos();
        let rotated: Vec<Vec<f64>> = pts
            .iter()
            .map(|p| {
                let mut q = p.clone();
                q[0] = cos * p[0] - sin * p[1];
                q[1] = sin * p[0] + cos * p[1];
                q
            })
            .collect();

        // No exaggeration here: its high-gear phase amplifies the
        // last-ulp distance differences the rotation introduces into
        // different local minima.
        let cfg = ProjectionConfig {
            perplexity: 8.0,
            iterations: 500,
            early_exaggeration: 1.0,
            learning_rate: 50.0,
            ..Default::default()
        };
        let a = pairwise_affinities(&pts, cfg.perplexity, cfg.seed).unwrap();
        let b = pairwise_affinities(&rotated, cfg.perplexity, cfg.seed).unwrap();
        let ya = embed(&a.p, &cfg).unwrap().y;
        let yb = embed(&b.p, &cfg).unwrap().y;
        let preserved = (0..pts.len())
            .filter(|&i| top5(&ya, i) == top5(&yb, i))
            .count();
        assert!(
            preserved as f64 >= 0.9 * n as f64,
            "only {preserved}/{n} points kept their 5-NN set"
        );
    }

    #[test]
    fn tsne_projects_one_point_per_label() {
        use std::io::Cursor;
        let mut content = String::from("6 4\n");
        let mut rng = SplitMix64::new(31);
        for w in ["alpha", "beta", "gamma", "delta", "epsilon", "zeta"] {
            content.push_str(w);
            for _ in 0..4 {
                content.push_str(&format!(" {:.4}", rng.next_gaussian()));
            }
            content.push('\n');
        }
        let loaded =
            crate::embedding::load_embeddings_reader(Cursor::new(content), &Default::default())
                .unwrap();
        let labels: Vec<(String, String)> = ["alpha", "beta", "gamma", "delta", "alpha", "zeta"]
            .iter()
            .enumerate()
            .map(|(i, w)| (w.to_string(), format!("C{}", i % 2)))
            .collect();
        let cfg = ProjectionConfig {
            perplexity: 1.5,
            iterations: 150,
            ..Default::default()
        };
        let out = tsne(&loaded.table, &cfg, &labels).unwrap();
        assert_eq!(out.points.len(), labels.len());
        // "alpha" appears under two corpora: duplicates forced a jitter.
        assert!(out.jittered);
        for p in &out.points {
            assert!(p.x.is_finite() && p.y.is_finite());
        }
        let missing = tsne(
            &loaded.table,
            &cfg,
            &[("nope".to_string(), "C0".to_string())],
        );
        assert!(missing.is_err());
    }
}
