mod common;

use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use sonarblob::classify::{calibrate_thresholds, connectivity, decide};
use sonarblob::cluster::{kmeans, select_model_order};
use sonarblob::graphbuild::{build_graph, build_graph_exhaustive};
use sonarblob::infodist::{marginal_entropy, mutual_information, nid, SpectrumPair};
use sonarblob::signalproc::{make_chirp, matched_filter, spectral_entropy, threshold_detect};
use sonarblob::{AffinityGraph, AffinityParams, ChirpSpec, Clustering, Label, PingRecord, Thresholds};

use common::*;

fn simplex_strategy(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-9f64..1.0, m).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn weights_strategy(max_n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (2..=max_n, any::<u64>(), 0.0f64..1.0).prop_map(|(n, seed, density)| {
        random_weights(&mut rng(seed), n, density)
    })
}

fn chirp96() -> ChirpSpec {
    ChirpSpec {
        sample_rate: 96_000.0,
        ..ChirpSpec::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn entropy_is_bounded(z in (1usize..300).prop_flat_map(simplex_strategy)) {
        let h = spectral_entropy(&z).unwrap();
        prop_assert!(h >= 0.0);
        prop_assert!(h <= (z.len() as f64).log2() + 1e-12);
    }

    #[test]
    fn entropy_matches_direct_sum(z in simplex_strategy(64)) {
        let direct: f64 = z.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum();
        prop_assert!((spectral_entropy(&z).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn nid_invariants(
        (a, b) in (2usize..128).prop_flat_map(|m| (simplex_strategy(m), simplex_strategy(m))),
        bins in 2usize..32,
    ) {
        let ab = SpectrumPair::new(&a, &b, bins).unwrap();
        let ba = SpectrumPair::new(&b, &a, bins).unwrap();
        let d = nid(&ab).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!((d - nid(&ba).unwrap()).abs() <= 1e-12);
        prop_assert_eq!(nid(&SpectrumPair::new(&a, &a, bins).unwrap()).unwrap(), 0.0);
        let i = mutual_information(&ab).unwrap();
        let h_min = marginal_entropy(&a, bins).unwrap().min(marginal_entropy(&b, bins).unwrap());
        prop_assert!(i >= 0.0 && i <= h_min + 1e-9);
    }

    #[test]
    fn raising_the_threshold_never_adds_points(
        mf in prop::collection::vec(0.0f64..1e-4, 2000..4000),
        lo in 1e-6f64..5e-5,
        factor in 1.0f64..3.0,
    ) {
        let chirp = chirp96();
        let low = threshold_detect(&mf, lo, 1, &chirp).unwrap();
        let high = threshold_detect(&mf, lo * factor, 1, &chirp).unwrap();
        prop_assert!(high.len() <= low.len());
        for p in &high {
            prop_assert!(p.mf_value > lo * factor);
        }
    }

    #[test]
    fn matched_filter_is_scale_invariant(seed in any::<u64>(), scale in 1e-3f64..1e3) {
        use rand::Rng;
        let chirp = chirp96();
        let replica = make_chirp(&chirp).unwrap();
        let mut r = rng(seed);
        let x: Vec<f64> = (0..3000).map(|_| r.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| v * scale).collect();
        let mx = matched_filter(&PingRecord::new(1, x, chirp.sample_rate).unwrap(), &replica).unwrap();
        let my = matched_filter(&PingRecord::new(1, y, chirp.sample_rate).unwrap(), &replica).unwrap();
        let argmax = |v: &[f64]| v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        prop_assert_eq!(argmax(&mx), argmax(&my));
        for (a, b) in mx.iter().zip(&my) {
            prop_assert!((a * scale - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn injected_replica_maps_to_its_range(delay in 0usize..4000, amp in 1e-4f64..1.0) {
        let chirp = chirp96();
        let replica = make_chirp(&chirp).unwrap();
        let mut x = vec![0.0; 6000];
        for (k, v) in replica.iter().enumerate() {
            x[delay + k] = amp * v;
        }
        let mf = matched_filter(&PingRecord::new(1, x, chirp.sample_rate).unwrap(), &replica).unwrap();
        let pts = threshold_detect(&mf, amp * 0.5, 1, &chirp).unwrap();
        prop_assert_eq!(pts.len(), 1);
        let t = delay as f64 / chirp.sample_rate;
        prop_assert!((pts[0].range - chirp.sound_speed * t / 2.0).abs()
            < chirp.sound_speed / (2.0 * chirp.sample_rate));
    }

    #[test]
    fn laplacian_is_symmetric_psd(w in weights_strategy(40)) {
        let g = AffinityGraph::from_weights(w).unwrap();
        let l = g.laplacian();
        prop_assert!((l - l.transpose()).abs().max() < 1e-14);
        let eig = SymmetricEigen::new(l.clone());
        prop_assert!(eig.eigenvalues.min() >= -1e-8);
        let a = g.adjacency();
        let d = g.degrees();
        for i in 0..g.len() {
            for j in 0..g.len() {
                if d[i] > 0.0 && d[j] > 0.0 {
                    let r = a[(i, j)] / (d[i] * d[j]).sqrt();
                    prop_assert!((0.0..=1.0 + 1e-12).contains(&r));
                }
            }
        }
    }

    #[test]
    fn skipping_nid_changes_weights_by_at_most_1e_6(seed in any::<u64>(), n in 2usize..25) {
        let mut r = rng(seed);
        let pts = random_points(&mut r, n, 32);
        let params = AffinityParams { v_max: 30.0, ..AffinityParams::default() };
        let fast = build_graph(&pts, &params).unwrap();
        let full = build_graph_exhaustive(&pts, &params).unwrap();
        prop_assert!((fast.weights() - full.weights()).abs().max() <= 1e-6);
    }

    #[test]
    fn connectivity_bounds(w in weights_strategy(30), seed in any::<u64>()) {
        use rand::Rng;
        let g = AffinityGraph::from_weights(w).unwrap();
        let n = g.len();
        let mut r = rng(seed);
        let k = r.random_range(1..=n);
        let labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { r.random_range(0..k) }).collect();
        let c = Clustering::new(labels).unwrap();
        let total: f64 = g.weights().sum();
        let mut sum = 0.0;
        for cl in 0..c.k() {
            let v = connectivity(&g, &c.indicator(cl));
            let size = c.members(cl).len() as f64;
            prop_assert!(v >= size - 1e-12 && v <= size * size + 1e-12);
            sum += v;
        }
        prop_assert!(sum <= total + 1e-9);
    }

    #[test]
    fn decision_is_monotone(
        c in 0.0f64..100.0, h in 0.0f64..8.0, dc in 0.0f64..10.0, dh in 0.0f64..2.0,
        eta_c in 0.0f64..100.0, eta_h in 0.0f64..8.0,
    ) {
        let t = Thresholds { eta_c, eta_h };
        if decide(c, h, &t) == Label::Target {
            prop_assert_eq!(decide(c + dc, h - dh, &t), Label::Target);
        }
    }

    #[test]
    fn calibration_uses_the_right_tails(
        samples in prop::collection::vec((0.0f64..100.0, 0.0f64..8.0), 30..200),
        q in 0.0f64..0.5,
    ) {
        let t = calibrate_thresholds(&samples, q).unwrap();
        let above = samples.iter().filter(|s| s.0 > t.eta_c).count() as f64;
        let below = samples.iter().filter(|s| s.1 < t.eta_h).count() as f64;
        let n = samples.len() as f64;
        prop_assert!(above <= q * n + 1.0);
        prop_assert!(below <= q * n + 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn model_order_selection_is_deterministic(w in weights_strategy(20), seed in any::<u64>()) {
        let g = AffinityGraph::from_weights(w).unwrap();
        let k = g.len().min(5);
        let a = select_model_order(&g, k, 0.2, seed).unwrap();
        let b = select_model_order(&g, k, 0.2, seed).unwrap();
        prop_assert_eq!(a.labels(), b.labels());
        prop_assert_eq!(a.cost(), b.cost());
        prop_assert_eq!(a.sizes().iter().sum::<usize>(), g.len());
    }

    #[test]
    fn kmeans_labels_cover_every_cluster(seed in any::<u64>(), n in 3usize..40, k in 1usize..4) {
        use rand::Rng;
        let k = k.min(n);
        let mut r = rng(seed);
        let y = DMatrix::from_fn(n, 2, |_, _| r.random_range(-1.0..1.0));
        let labels = kmeans(&y, k, seed).unwrap();
        let mut seen = vec![false; k];
        for &l in &labels {
            seen[l] = true;
        }
        prop_assert!(seen.into_iter().all(|s| s));
        // First appearance order.
        prop_assert_eq!(labels[0], 0);
    }
}
