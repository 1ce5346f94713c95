#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sonarblob::{AffinityGraph, EchoPoint};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Symmetric weights with unit diagonal; each off-diagonal pair is kept
/// with probability `density`.
pub fn random_weights(rng: &mut ChaCha8Rng, n: usize, density: f64) -> DMatrix<f64> {
    let mut w = DMatrix::identity(n, n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < density {
                let v = rng.random::<f64>();
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
    }
    w
}

pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, density: f64) -> AffinityGraph {
    AffinityGraph::from_weights(random_weights(rng, n, density)).unwrap()
}

/// Graph made of disjoint blocks with irregular dense interiors.
pub fn component_graph(rng: &mut ChaCha8Rng, sizes: &[usize]) -> (AffinityGraph, Vec<usize>) {
    let n: usize = sizes.iter().sum();
    let mut w = DMatrix::identity(n, n);
    let mut truth = Vec::with_capacity(n);
    let mut start = 0;
    for (c, &s) in sizes.iter().enumerate() {
        for i in start..start + s {
            truth.push(c);
            for j in i + 1..start + s {
                let v = rng.random_range(0.3..1.0);
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
        start += s;
    }
    (AffinityGraph::from_weights(w).unwrap(), truth)
}

/// Random point on the probability simplex.
pub fn simplex(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..m).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, bins: usize) -> Vec<EchoPoint> {
    (0..n)
        .map(|_| {
            let p = EchoPoint::new(rng.random_range(0.0..20.0), rng.random_range(1..=10), 1e-5);
            p.with_spectrum(simplex(rng, bins)).unwrap()
        })
        .collect()
}

/// Every partition of `0..n` into at most `k_max` blocks, as labels in
/// first-appearance order.
pub fn set_partitions(n: usize, k_max: usize) -> Vec<Vec<usize>> {
    fn go(i: usize, n: usize, k_max: usize, used: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for l in 0..=used.min(k_max - 1) {
            if l == used && used == k_max {
                continue;
            }
            cur.push(l);
            go(i + 1, n, k_max, used.max(l + 1), cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k_max, 0, &mut Vec::new(), &mut out);
    out
}

/// Connectivity by explicit pair sum over members, self-weights included.
pub fn connectivity_loop(w: &DMatrix<f64>, labels: &[usize], cluster: usize) -> f64 {
    let mut c = 0.0;
    for i in 0..labels.len() {
        for j in 0..labels.len() {
            if labels[i] == cluster && labels[j] == cluster {
                c += w[(i, j)];
            }
        }
    }
    c
}
