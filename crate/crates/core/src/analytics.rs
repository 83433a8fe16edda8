//! Downstream analyses over many fits: derived metrics, hazard curves,
//! grid PCA of curves, three-group clustering.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clem::{fit, FitConfig, FitResult};
use crate::error::{Error, Result};
use crate::hazard::HazardSpec;
use crate::model::{expected_episode_length, expected_events_per_episode, EventSequence, ModelParams};
use crate::simulate::rng_for;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedMetrics {
    /// `∫₀¹ λ(t) dt`.
    pub avg_daily_hazard: f64,
    pub events_per_episode: f64,
    pub episode_length: f64,
}

pub fn derived_metrics(params: &ModelParams) -> DerivedMetrics {
    DerivedMetrics {
        avg_daily_hazard: params.hazard.integral(0.0, 1.0),
        events_per_episode: expected_events_per_episode(params),
        episode_length: expected_episode_length(params),
    }
}

/// Independent fits; a failure is kept in place and does not stop the batch.
pub fn batch_fit(datasets: &[EventSequence], config: &FitConfig) -> Vec<Result<FitResult>> {
    datasets.par_iter().map(|d| fit(d, config)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HazardCurves {
    /// Equispaced points `k / grid_size` on `[0, 1)`.
    pub grid: Vec<f64>,
    /// One row per hazard.
    pub values: Vec<Vec<f64>>,
    /// Trapezoid average over the day, closing the curve at `t = 1`.
    pub averages: Vec<f64>,
}

pub fn hazard_curves(hazards: &[&HazardSpec], grid_size: usize) -> Result<HazardCurves> {
    if grid_size < 2 {
        return Err(Error::InvalidParameter {
            name: "grid_size",
            reason: format!("need at least 2 points, got {grid_size}"),
        });
    }
    let grid: Vec<f64> = (0..grid_size).map(|k| k as f64 / grid_size as f64).collect();
    let values: Vec<Vec<f64>> = hazards
        .iter()
        .map(|h| grid.iter().map(|&t| h.evaluate(t)).collect())
        .collect();
    // Periodic trapezoid: the endpoint value at t = 1 equals the one at t = 0.
    let averages = values
        .iter()
        .map(|row| row.iter().sum::<f64>() / grid_size as f64)
        .collect();
    Ok(HazardCurves { grid, values, averages })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePca {
    pub mean: Vec<f64>,
    /// Unit-norm eigenvectors, leading first.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub explained: Vec<f64>,
}

impl CurvePca {
    /// Coordinates of `curve` on every component.
    pub fn scores(&self, curve: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|phi| phi.iter().zip(curve).zip(&self.mean).map(|((p, c), m)| p * (c - m)).sum())
            .collect()
    }
}

/// PCA of grid-sampled curves (rows of `curves`).
pub fn curve_pca(curves: &[Vec<f64>]) -> Result<CurvePca> {
    if curves.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "curves",
            reason: format!("need at least 2 curves, got {}", curves.len()),
        });
    }
    let g = curves[0].len();
    if g == 0 || curves.iter().any(|c| c.len() != g) {
        return Err(Error::InvalidParameter {
            name: "curves",
            reason: "curves must share a nonempty grid".into(),
        });
    }
    let n = curves.len();
    let mean: Vec<f64> = (0..g).map(|j| curves.iter().map(|c| c[j]).sum::<f64>() / n as f64).collect();
    let centered = DMatrix::from_fn(n, g, |i, j| curves[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    let trace = cov.trace();
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..g).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let cutoff = 1e-12 * trace;
    let mut components = Vec::new();
    let mut eigenvalues = Vec::new();
    for k in order {
        let lambda = eig.eigenvalues[k];
        if !(trace > 0.0) || lambda <= cutoff {
            break;
        }
        let mut phi: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        if phi.iter().sum::<f64>() < 0.0 {
            phi.iter_mut().for_each(|v| *v = -*v);
        }
        components.push(phi);
        eigenvalues.push(lambda);
    }
    let kept: f64 = eigenvalues.iter().sum();
    let explained = eigenvalues.iter().map(|l| l / kept).collect();
    Ok(CurvePca {
        mean,
        components,
        eigenvalues,
        explained,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Low,
    Medium,
    High,
}

impl Group {
    pub fn name(self) -> &'static str {
        match self {
            Group::Low => "low",
            Group::Medium => "medium",
            Group::High => "high",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub labels: Vec<Group>,
    /// Low, medium, high.
    pub centers: [f64; 3],
    /// Within-cluster sum of squares.
    pub objective: f64,
}

const RESTARTS: usize = 50;
const CLUSTER_SEED: u64 = 0x6b6d_6561_6e73;

/// Lloyd iterations from the given centers, then Hartigan single-point
/// exchanges, which also escape some Lloyd fixed points.
fn lloyd(x: &[f64], mut centers: [f64; 3]) -> ([f64; 3], f64) {
    let mut assign = vec![usize::MAX; x.len()];
    for _ in 0..200 {
        centers.sort_by(f64::total_cmp);
        let mut changed = false;
        for (i, &v) in x.iter().enumerate() {
            let k = nearest(&centers, v);
            if assign[i] != k {
                assign[i] = k;
                changed = true;
            }
        }
        let (sum, count) = cluster_sums(x, &assign);
        for k in 0..3 {
            if count[k] > 0 {
                centers[k] = sum[k] / count[k] as f64;
            } else {
                // Empty cluster: move it onto the worst-served point.
                let far = x
                    .iter()
                    .copied()
                    .max_by(|a, b| dist2(&centers, *a).total_cmp(&dist2(&centers, *b)))
                    .unwrap();
                centers[k] = far;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    hartigan(x, &mut assign);
    let (sum, count) = cluster_sums(x, &assign);
    for k in 0..3 {
        if count[k] > 0 {
            centers[k] = sum[k] / count[k] as f64;
        }
    }
    let obj = x.iter().zip(&assign).map(|(v, &k)| (v - centers[k]).powi(2)).sum();
    centers.sort_by(f64::total_cmp);
    (centers, obj)
}

fn cluster_sums(x: &[f64], assign: &[usize]) -> ([f64; 3], [usize; 3]) {
    let mut sum = [0.0; 3];
    let mut count = [0usize; 3];
    for (v, &k) in x.iter().zip(assign) {
        sum[k] += v;
        count[k] += 1;
    }
    (sum, count)
}

/// Move single points while doing so lowers the within-cluster sum of squares.
fn hartigan(x: &[f64], assign: &mut [usize]) {
    let (mut sum, mut count) = cluster_sums(x, assign);
    for _ in 0..1000 {
        let mut moved = false;
        for (i, &v) in x.iter().enumerate() {
            let a = assign[i];
            if count[a] <= 1 {
                continue;
            }
            let na = count[a] as f64;
            let ca = sum[a] / na;
            let leave = na / (na - 1.0) * (v - ca).powi(2);
            let best = (0..3)
                .filter(|&b| b != a && count[b] > 0)
                .map(|b| {
                    let nb = count[b] as f64;
                    (b, nb / (nb + 1.0) * (v - sum[b] / nb).powi(2))
                })
                .min_by(|p, q| p.1.total_cmp(&q.1));
            if let Some((b, join)) = best {
                if join < leave * (1.0 - 1e-12) {
                    assign[i] = b;
                    sum[a] -= v;
                    count[a] -= 1;
                    sum[b] += v;
                    count[b] += 1;
                    moved = true;
                }
            }
        }
        if !moved {
            break;
        }
    }
}

fn nearest(centers: &[f64; 3], v: f64) -> usize {
    (0..3)
        .min_by(|&a, &b| (v - centers[a]).abs().total_cmp(&(v - centers[b]).abs()))
        .unwrap()
}

fn dist2(centers: &[f64; 3], v: f64) -> f64 {
    centers.iter().map(|c| (v - c).powi(2)).fold(f64::INFINITY, f64::min)
}

fn kmeans_pp<R: Rng>(x: &[f64], rng: &mut R) -> [f64; 3] {
    let mut centers = vec![x[rng.random_range(0..x.len())]];
    while centers.len() < 3 {
        let d: Vec<f64> = x
            .iter()
            .map(|&v| centers.iter().map(|c| (v - c).powi(2)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = x[x.len() - 1];
        for (i, w) in d.iter().enumerate() {
            if u < *w {
                pick = x[i];
                break;
            }
            u -= w;
        }
        centers.push(pick);
    }
    [centers[0], centers[1], centers[2]]
}

/// One-dimensional k-means with k = 3; groups are named by sorted centers.
pub fn three_group_cluster(values: &[f64]) -> Result<Clustering> {
    let mut x: Vec<f64> = values.to_vec();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "metric",
            reason: "values must be finite".into(),
        });
    }
    x.sort_by(f64::total_cmp);
    let mut distinct = x.clone();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Degenerate(format!(
            "need at least 3 distinct values, got {}",
            distinct.len()
        )));
    }
    let n = x.len();
    let tertiles = [x[n / 6], x[n / 2], x[(5 * n) / 6]];
    let mut best = lloyd(&x, tertiles);
    let mut rng = rng_for(CLUSTER_SEED, 0);
    for _ in 0..RESTARTS {
        let cand = lloyd(&x, kmeans_pp(&x, &mut rng));
        if cand.1 < best.1 {
            best = cand;
        }
    }
    let (centers, objective) = best;
    let groups = [Group::Low, Group::Medium, Group::High];
    let labels = values.iter().map(|&v| groups[nearest(&centers, v)]).collect();
    Ok(Clustering {
        labels,
        centers,
        objective,
    })
}
