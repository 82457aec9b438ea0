//! Seeded k-means (k-means++ initialisation, Lloyd iterations) over scenario
//! feature vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    /// Case labels.
    pub rows: Vec<String>,
    /// Zone labels.
    pub cols: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn new(rows: Vec<String>, cols: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != rows.len() {
            return Err(Error::InvalidOption(format!(
                "{} row labels for {} rows",
                rows.len(),
                values.len()
            )));
        }
        for (label, row) in rows.iter().zip(&values) {
            if row.len() != cols.len() {
                return Err(Error::InvalidOption(format!(
                    "row {label} has {} values, expected {}",
                    row.len(),
                    cols.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidOption(format!("row {label} has an undefined entry")));
            }
        }
        Ok(FeatureMatrix { rows, cols, values })
    }

    pub fn n_rows(&self) -> usize {
        self.values.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    /// Rows whose index satisfies `keep`, in order.
    pub fn select_rows(&self, keep: impl Fn(usize) -> bool) -> FeatureMatrix {
        let idx: Vec<usize> = (0..self.n_rows()).filter(|&i| keep(i)).collect();
        FeatureMatrix {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            cols: self.cols.clone(),
            values: idx.iter().map(|&i| self.values[i].clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    /// Cluster index per feature row.
    pub assignment: Vec<usize>,
    pub inertia: f64,
    /// Inertia after the initial assignment and after every Lloyd iteration.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
    pub seed: u64,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid, ties to the lowest index.
fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, m) in centroids.iter().enumerate() {
        let d = dist2(x, m);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn inertia(x: &[Vec<f64>], centroids: &[Vec<f64>], assignment: &[usize]) -> f64 {
    x.iter()
        .zip(assignment)
        .map(|(p, &c)| dist2(p, &centroids[c]))
        .sum()
}

fn means(x: &[Vec<f64>], assignment: &[usize], k: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut sum = vec![vec![0.0; dim]; k];
    let mut count = vec![0usize; k];
    for (p, &c) in x.iter().zip(assignment) {
        count[c] += 1;
        for (s, v) in sum[c].iter_mut().zip(p) {
            *s += v;
        }
    }
    for (s, &n) in sum.iter_mut().zip(&count) {
        if n > 0 {
            s.iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    (sum, count)
}

fn check_k(features: &FeatureMatrix, k: usize) -> Result<()> {
    if features.n_rows() == 0 {
        return Err(Error::EmptyFeatures);
    }
    if k < 1 || k > features.n_rows() {
        return Err(Error::InvalidClusterCount {
            k,
            rows: features.n_rows(),
        });
    }
    Ok(())
}

/// k-means++ seeding: first centre uniform, the rest with probability
/// proportional to squared distance from the nearest chosen centre.
fn plus_plus(x: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = x.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = x.iter().map(|p| dist2(p, &x[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let r = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if r < acc && *d > 0.0 {
                    pick = i;
                    break;
                }
            }
            while d2[pick] == 0.0 {
                pick -= 1;
            }
            pick
        } else {
            // every point coincides with a centre already
            (0..n).find(|i| !chosen.contains(i)).unwrap()
        };
        chosen.push(next);
        for (d, p) in d2.iter_mut().zip(x) {
            *d = d.min(dist2(p, &x[next]));
        }
    }
    chosen
}

pub fn kmeans(features: &FeatureMatrix, k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<ClusterModel> {
    check_k(features, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = plus_plus(&features.values, k, &mut rng);
    let mut model = lloyd(features, &init, max_iter, tol)?;
    model.seed = seed;
    Ok(model)
}

/// Lloyd iterations from the given rows as initial centroids.
pub fn kmeans_from_indices(
    features: &FeatureMatrix,
    init: &[usize],
    max_iter: usize,
    tol: f64,
) -> Result<ClusterModel> {
    check_k(features, init.len())?;
    if let Some(&bad) = init.iter().find(|&&i| i >= features.n_rows()) {
        return Err(Error::InvalidOption(format!("initial row {bad} out of range")));
    }
    lloyd(features, init, max_iter, tol)
}

fn lloyd(features: &FeatureMatrix, init: &[usize], max_iter: usize, tol: f64) -> Result<ClusterModel> {
    if max_iter < 1 {
        return Err(Error::InvalidOption("max_iter must be at least 1".into()));
    }
    if !(tol >= 0.0) {
        return Err(Error::InvalidOption(format!("tol must be non-negative, got {tol}")));
    }
    let x = &features.values;
    let k = init.len();
    let dim = features.n_cols();
    let mut centroids: Vec<Vec<f64>> = init.iter().map(|&i| x[i].clone()).collect();
    let mut assignment: Vec<usize> = x.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut trace = vec![inertia(x, &centroids, &assignment)];
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let (mut next, mut count) = means(x, &assignment, k, dim);
        // empty clusters take the point farthest from its own centre
        while let Some(empty) = count.iter().position(|&n| n == 0) {
            let (far, d) = x
                .iter()
                .enumerate()
                .map(|(i, p)| (i, dist2(p, &next[assignment[i]])))
                .fold((0, -1.0), |best, (i, d)| if d > best.1 { (i, d) } else { best });
            if d <= 0.0 {
                break;
            }
            assignment[far] = empty;
            (next, count) = means(x, &assignment, k, dim);
        }
        for (c, n) in count.iter().enumerate() {
            if *n == 0 {
                next[c] = centroids[c].clone();
            }
        }
        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| dist2(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        let reassigned: Vec<usize> = x.iter().map(|p| nearest(p, &centroids).0).collect();
        let stable = reassigned == assignment;
        assignment = reassigned;
        let value = inertia(x, &centroids, &assignment);
        let last = *trace.last().unwrap();
        debug_assert!(value <= last + 1e-12 * last.abs().max(1.0), "inertia rose: {last} -> {value}");
        trace.push(value);
        if stable || shift < tol {
            break;
        }
    }

    let (final_means, count) = means(x, &assignment, k, dim);
    for c in 0..k {
        if count[c] > 0 {
            centroids[c] = final_means[c].clone();
        }
    }
    let value = inertia(x, &centroids, &assignment);
    if value < *trace.last().unwrap() {
        trace.push(value);
    }
    Ok(ClusterModel {
        k,
        centroids,
        assignment,
        inertia: *trace.last().unwrap(),
        inertia_trace: trace,
        iterations,
        seed: 0,
    })
}

/// Display order of clusters: descending mean centroid value, ties to the
/// lower index.
pub fn order_clusters(model: &ClusterModel) -> Vec<usize> {
    let mean = |c: &Vec<f64>| {
        if c.is_empty() {
            0.0
        } else {
            c.iter().sum::<f64>() / c.len() as f64
        }
    };
    let mut order: Vec<usize> = (0..model.k).collect();
    order.sort_by(|&a, &b| {
        mean(&model.centroids[b])
            .total_cmp(&mean(&model.centroids[a]))
            .then(a.cmp(&b))
    });
    order
}

/// Feature rows grouped by cluster display order, original order within a
/// cluster. Returns the row order and the group sizes.
pub fn row_display_order(model: &ClusterModel) -> (Vec<usize>, Vec<usize>) {
    let mut rows = Vec::with_capacity(model.assignment.len());
    let mut sizes = Vec::new();
    for c in order_clusters(model) {
        let members: Vec<usize> = (0..model.assignment.len())
            .filter(|&i| model.assignment[i] == c)
            .collect();
        if !members.is_empty() {
            sizes.push(members.len());
            rows.extend(members);
        }
    }
    (rows, sizes)
}

/// Inertia for k = 1..=min(k_max, rows).
pub fn elbow(features: &FeatureMatrix, k_max: usize, seed: u64, max_iter: usize, tol: f64) -> Result<Vec<(usize, f64)>> {
    let top = k_max.min(features.n_rows());
    (1..=top)
        .map(|k| kmeans(features, k, seed, max_iter, tol).map(|m| (k, m.inertia)))
        .collect()
}
