//! The full processing chain for one block of pings:
//! matched filter, thresholding, spectra, affinity graph, clustering and
//! classification.

use serde::{Deserialize, Serialize};

use crate::classify::{classify_clusters, ClusterReport, Label, Thresholds};
use crate::cluster::{default_k_max, select_model_order, Clustering};
use crate::error::{Error, Result};
use crate::graphbuild::{build_graph, AffinityGraph, AffinityParams};
use crate::signalproc::{
    make_chirp, threshold_detect, ChirpSpec, EchoPoint, MatchedFilter, PingRecord,
    SpectrumExtractor, DEFAULT_SPECTRUM_BINS,
};

/// Detector settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub eta_mf: f64,
    pub spectrum_bins: usize,
    pub affinity: AffinityParams,
    /// Model-order penalty per cluster.
    pub epsilon: f64,
    /// Largest number of clusters tried; `None` means `min(N, 10)`.
    pub k_max: Option<usize>,
    pub thresholds: Thresholds,
    /// Seed for the k-means restarts.
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            eta_mf: 5e-6,
            spectrum_bins: DEFAULT_SPECTRUM_BINS,
            affinity: AffinityParams::default(),
            epsilon: 1.0,
            k_max: None,
            thresholds: Thresholds {
                eta_c: 5.0,
                eta_h: 4.5,
            },
            seed: 0,
        }
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        DetectorConfig::default().thresholds
    }
}

/// Everything produced for a block.
#[derive(Debug, Clone)]
pub struct BlockResult {
    pub points: Vec<EchoPoint>,
    /// Absent when fewer than two points survive thresholding.
    pub graph: Option<AffinityGraph>,
    pub clustering: Option<Clustering>,
    pub reports: Vec<ClusterReport>,
}

impl BlockResult {
    pub fn target_clusters(&self) -> impl Iterator<Item = &ClusterReport> {
        self.reports.iter().filter(|r| r.label == Label::Target)
    }

    /// Recomputes labels under different thresholds.
    pub fn relabel(&mut self, thresholds: &Thresholds) {
        for r in &mut self.reports {
            r.label = crate::classify::decide(r.connectivity, r.median_entropy, thresholds);
        }
    }
}

/// Matched filter, threshold and spectrum extraction for a block of pings.
pub fn extract_points(pings: &[PingRecord], chirp: &ChirpSpec, cfg: &DetectorConfig) -> Result<Vec<EchoPoint>> {
    chirp.validate()?;
    let Some(first) = pings.first() else {
        return Ok(Vec::new());
    };
    let len = first.samples.len();
    for p in pings {
        if (p.sample_rate - chirp.sample_rate).abs() > 1e-9 {
            return Err(Error::param(format!(
                "ping {} sampled at {} Hz, chirp expects {} Hz",
                p.ping, p.sample_rate, chirp.sample_rate
            )));
        }
        if p.samples.len() != len {
            return Err(Error::param("pings of a block must have equal length"));
        }
    }
    let replica = make_chirp(chirp)?;
    let filter = MatchedFilter::new(&replica, len)?;
    let extractor = SpectrumExtractor::new(chirp, cfg.spectrum_bins)?;
    let mut points = Vec::new();
    for ping in pings {
        let mf = filter.apply(&ping.samples)?;
        for point in threshold_detect(&mf, cfg.eta_mf, ping.ping, chirp)? {
            let z = extractor.extract(ping, &point);
            points.push(point.with_spectrum(z)?);
        }
    }
    Ok(points)
}

/// Clusters and classifies an already extracted point cloud.
pub fn cluster_points(points: Vec<EchoPoint>, cfg: &DetectorConfig) -> Result<BlockResult> {
    match points.len() {
        0 => Ok(BlockResult {
            points,
            graph: None,
            clustering: None,
            reports: Vec::new(),
        }),
        1 => {
            // A lone point is its own cluster with unit self-weight.
            let h = points[0].entropy;
            let reports = vec![ClusterReport {
                cluster_id: 1,
                connectivity: 1.0,
                median_entropy: h,
                size: 1,
                label: crate::classify::decide(1.0, h, &cfg.thresholds),
                members: vec![0],
            }];
            Ok(BlockResult {
                points,
                graph: None,
                clustering: Some(Clustering::new(vec![0])?),
                reports,
            })
        }
        n => {
            let graph = build_graph(&points, &cfg.affinity)?;
            let k_max = cfg.k_max.unwrap_or_else(|| default_k_max(n)).clamp(1, n);
            let clustering = select_model_order(&graph, k_max, cfg.epsilon, cfg.seed)?;
            let reports = classify_clusters(&graph, &clustering, &points, &cfg.thresholds)?;
            Ok(BlockResult {
                points,
                graph: Some(graph),
                clustering: Some(clustering),
                reports,
            })
        }
    }
}

/// Runs the whole chain on one block.
pub fn detect_block(pings: &[PingRecord], chirp: &ChirpSpec, cfg: &DetectorConfig) -> Result<BlockResult> {
    cluster_points(extract_points(pings, chirp, cfg)?, cfg)
}
