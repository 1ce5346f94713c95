//! Spectral clustering of the affinity graph with model-order selection.
//!
//! For a candidate `K` the rows of the `K` lowest Laplacian eigenvectors are
//! normalized and grouped with k-means. The number of clusters minimizes the
//! mean partition cost `(1/K) sum_k b_k' L b_k + eps K`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphbuild::AffinityGraph;

/// Rows with a smaller norm are treated as zero rows.
const ZERO_ROW: f64 = 1e-12;

/// A partition of the graph's nodes. Labels are 0-based and every label in
/// `0..k` has at least one member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    k: usize,
    labels: Vec<usize>,
    cost: Option<f64>,
}

impl Clustering {
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut used = vec![false; k];
        for &l in &labels {
            used[l] = true;
        }
        if let Some(empty) = used.iter().position(|u| !u) {
            return Err(Error::param(format!("cluster {empty} has no members")));
        }
        Ok(Self { k, labels, cost: None })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Mean partition cost including the model-order penalty, when known.
    pub fn cost(&self) -> Option<f64> {
        self.cost
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == cluster)
            .map(|(i, _)| i)
            .collect()
    }

    /// Binary membership vector `b_k`.
    pub fn indicator(&self, cluster: usize) -> DVector<f64> {
        DVector::from_iterator(
            self.labels.len(),
            self.labels.iter().map(|&l| if l == cluster { 1.0 } else { 0.0 }),
        )
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

/// Eigenvectors of the Laplacian for the `K` smallest eigenvalues (`x`) and
/// their row-normalized form (`y`).
#[derive(Debug, Clone)]
pub struct EigenEmbedding {
    pub eigenvalues: Vec<f64>,
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
}

/// Full eigendecomposition of a graph Laplacian in ascending order.
///
/// Each eigenvector is signed so that its first entry of non-negligible
/// magnitude is positive.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
}

impl EigenBasis {
    pub fn new(graph: &AffinityGraph) -> Result<Self> {
        let l = graph.laplacian().clone();
        let n = l.nrows();
        let frob = l.norm();
        let eig = SymmetricEigen::try_new(l, f64::EPSILON, 1000 * n.max(1)).ok_or_else(|| {
            Error::Numerical(format!(
                "symmetric eigensolver did not converge (n = {n}, ||L||_F = {frob:.3e})"
            ))
        })?;
        if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite eigenvalue (n = {n}, ||L||_F = {frob:.3e})"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut vectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            let mut col = eig.eigenvectors.column(src).into_owned();
            if let Some(first) = col.iter().find(|v| v.abs() > ZERO_ROW) {
                if *first < 0.0 {
                    col.neg_mut();
                }
            }
            vectors.set_column(dst, &col);
        }
        Ok(Self { values, vectors })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    /// Embedding on the first `k` eigenvectors. Zero rows of `x` map to the
    /// first canonical unit vector.
    pub fn embed(&self, k: usize) -> Result<EigenEmbedding> {
        let n = self.vectors.nrows();
        if k == 0 || k > n {
            return Err(Error::param(format!("K must lie in 1..={n}, got {k}")));
        }
        let x = self.vectors.columns(0, k).into_owned();
        let mut y = x.clone();
        for mut row in y.row_iter_mut() {
            let norm = row.norm();
            if norm > ZERO_ROW {
                row /= norm;
            } else {
                row.fill(0.0);
                row[0] = 1.0;
            }
        }
        Ok(EigenEmbedding {
            eigenvalues: self.values[..k].to_vec(),
            x,
            y,
        })
    }
}

pub fn spectral_embed(graph: &AffinityGraph, k: usize) -> Result<EigenEmbedding> {
    EigenBasis::new(graph)?.embed(k)
}

/// Lloyd iteration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop once the relative inertia improvement falls below this.
    pub tolerance: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            restarts: 20,
            max_iter: 300,
            tolerance: 1e-6,
        }
    }
}

/// k-means over the rows of `points`, k-means++ seeded, best of several
/// restarts. Labels are renumbered in order of first appearance.
pub fn kmeans(points: &DMatrix<f64>, k: usize, seed: u64) -> Result<Vec<usize>> {
    kmeans_with(points, k, seed, &KMeansParams::default())
}

pub fn kmeans_with(
    points: &DMatrix<f64>,
    k: usize,
    seed: u64,
    params: &KMeansParams,
) -> Result<Vec<usize>> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::param(format!("k-means needs 1 <= K <= N (K = {k}, N = {n})")));
    }
    if k == 1 {
        return Ok(vec![0; n]);
    }
    let rows = Rows::new(points);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..params.restarts.max(1) {
        let centers = plus_plus_init(&rows, k, &mut rng);
        let (inertia, labels) = lloyd(&rows, centers, params);
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, labels));
        }
    }
    let (_, labels) = best.expect("at least one restart");
    Ok(relabel(&labels, k))
}

struct Rows {
    data: Vec<f64>,
    dim: usize,
}

impl Rows {
    fn new(m: &DMatrix<f64>) -> Self {
        let dim = m.ncols();
        let mut data = Vec::with_capacity(m.nrows() * dim);
        for row in m.row_iter() {
            data.extend(row.iter());
        }
        Self { data, dim }
    }

    fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus_init(rows: &Rows, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centers = vec![rows.row(first).to_vec()];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(rows.row(i), &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                pick = Some(i);
                if target < w {
                    break;
                }
                target -= w;
            }
            pick.expect("positive total weight")
        } else {
            // All points coincide with existing centers.
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[next] = true;
        let c = rows.row(next).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(rows.row(i), &c));
        }
        centers.push(c);
    }
    centers
}

fn nearest(row: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(row, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn lloyd(rows: &Rows, mut centers: Vec<Vec<f64>>, params: &KMeansParams) -> (f64, Vec<usize>) {
    let n = rows.len();
    let k = centers.len();
    let dim = rows.dim;
    let mut labels = vec![usize::MAX; n];
    let mut dists = vec![0.0; n];
    let mut prev_inertia = f64::INFINITY;
    let mut inertia = f64::INFINITY;
    for _ in 0..params.max_iter.max(1) {
        let mut changed = false;
        for i in 0..n {
            let (c, d) = nearest(rows.row(i), &centers);
            changed |= labels[i] != c;
            labels[i] = c;
            dists[i] = d;
        }
        fill_empty_clusters(&mut labels, &mut dists, k);

        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let l = labels[i];
            counts[l] += 1;
            for (s, v) in sums[l * dim..(l + 1) * dim].iter_mut().zip(rows.row(i)) {
                *s += v;
            }
        }
        for (c, center) in centers.iter_mut().enumerate() {
            for (d, slot) in center.iter_mut().enumerate() {
                *slot = sums[c * dim + d] / counts[c] as f64;
            }
        }
        inertia = (0..n).map(|i| sq_dist(rows.row(i), &centers[labels[i]])).sum();
        let converged = !changed
            || prev_inertia - inertia <= params.tolerance * prev_inertia.max(f64::MIN_POSITIVE);
        prev_inertia = inertia;
        if converged {
            break;
        }
    }
    (inertia, labels)
}

/// Moves the worst-fitting point of a multi-member cluster into each empty
/// cluster.
fn fill_empty_clusters(labels: &mut [usize], dists: &mut [f64], k: usize) {
    let mut counts = vec![0usize; k];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let donor = (0..labels.len())
            .filter(|&i| counts[labels[i]] > 1)
            .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
            .expect("K <= N leaves a cluster with two members");
        counts[labels[donor]] -= 1;
        labels[donor] = empty;
        dists[donor] = 0.0;
        counts[empty] = 1;
    }
}

fn relabel(labels: &[usize], k: usize) -> Vec<usize> {
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    labels
        .iter()
        .map(|&l| {
            if map[l] == usize::MAX {
                map[l] = next;
                next += 1;
            }
            map[l]
        })
        .collect()
}

/// Sum over clusters of `b_k' L b_k`.
pub fn cut_cost_sum(graph: &AffinityGraph, labels: &[usize]) -> f64 {
    let l = graph.laplacian();
    let n = labels.len();
    let mut total = 0.0;
    for j in 0..n {
        for i in 0..n {
            if labels[i] == labels[j] {
                total += l[(i, j)];
            }
        }
    }
    total
}

/// `(1/K) sum_k b_k' L b_k + eps K`.
pub fn partition_cost(graph: &AffinityGraph, clustering: &Clustering, eps: f64) -> Result<f64> {
    if clustering.len() != graph.len() {
        return Err(Error::param(format!(
            "clustering covers {} points, graph has {}",
            clustering.len(),
            graph.len()
        )));
    }
    let k = clustering.k() as f64;
    Ok(cut_cost_sum(graph, clustering.labels()) / k + eps * k)
}

fn seed_for_order(seed: u64, k: usize) -> u64 {
    seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Clusters for every `K` in `1..=k_max` and keeps the cheapest; equal
/// costs resolve to the smaller `K`.
pub fn select_model_order(
    graph: &AffinityGraph,
    k_max: usize,
    eps: f64,
    seed: u64,
) -> Result<Clustering> {
    let n = graph.len();
    if k_max == 0 || k_max > n {
        return Err(Error::param(format!("K_max must lie in 1..={n}, got {k_max}")));
    }
    if !eps.is_finite() {
        return Err(Error::param("model-order penalty must be finite"));
    }
    let basis = EigenBasis::new(graph)?;
    let candidates: Vec<Clustering> = (1..=k_max)
        .into_par_iter()
        .map(|k| {
            let labels = if k == 1 {
                vec![0; n]
            } else {
                kmeans(&basis.embed(k)?.y, k, seed_for_order(seed, k))?
            };
            let mut c = Clustering::new(labels)?;
            c.cost = Some(partition_cost(graph, &c, eps)?);
            Ok(c)
        })
        .collect::<Result<_>>()?;
    let mut best: Option<Clustering> = None;
    for c in candidates {
        let better = match &best {
            None => true,
            Some(b) => c.cost.unwrap() < b.cost.unwrap(),
        };
        if better {
            best = Some(c);
        }
    }
    Ok(best.expect("k_max >= 1"))
}

/// Default search bound `min(N, 10)`.
pub fn default_k_max(n: usize) -> usize {
    n.min(10)
}
