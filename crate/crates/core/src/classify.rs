//! Target/clutter decision for clusters.
//!
//! A cluster is a target when it is strongly connected (`c_k > eta_c`) and
//! its members are spectrally diverse (median entropy `< eta_h`).

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::cluster::Clustering;
use crate::error::{Error, Result};
use crate::graphbuild::AffinityGraph;
use crate::signalproc::EchoPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Target,
    Clutter,
}

/// Decision thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub eta_c: f64,
    pub eta_h: f64,
}

/// Features and decision for one cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    /// 1-based, as in the clustering export.
    pub cluster_id: usize,
    pub connectivity: f64,
    #[serde(rename = "median_entropy_bits")]
    pub median_entropy: f64,
    pub size: usize,
    pub label: Label,
    #[serde(default, skip_serializing)]
    pub members: Vec<usize>,
}

/// `b' W b` for a membership vector `b`, self-weights included.
pub fn connectivity(graph: &AffinityGraph, membership: &DVector<f64>) -> f64 {
    membership.dot(&(graph.weights() * membership))
}

fn median_of(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median spectral entropy of the given members.
pub fn median_entropy(points: &[&EchoPoint]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::param("median entropy of an empty cluster"));
    }
    let mut h: Vec<f64> = points.iter().map(|p| p.entropy).collect();
    Ok(median_of(&mut h))
}

pub fn decide(connectivity: f64, median_entropy: f64, thresholds: &Thresholds) -> Label {
    if connectivity > thresholds.eta_c && median_entropy < thresholds.eta_h {
        Label::Target
    } else {
        Label::Clutter
    }
}

/// Features and labels for every cluster of a block.
pub fn classify_clusters(
    graph: &AffinityGraph,
    clustering: &Clustering,
    points: &[EchoPoint],
    thresholds: &Thresholds,
) -> Result<Vec<ClusterReport>> {
    if clustering.len() != points.len() || graph.len() != points.len() {
        return Err(Error::param("graph, clustering and points disagree in size"));
    }
    (0..clustering.k())
        .map(|k| {
            let members = clustering.members(k);
            let refs: Vec<&EchoPoint> = members.iter().map(|&i| &points[i]).collect();
            let c = connectivity(graph, &clustering.indicator(k));
            let h = median_entropy(&refs)?;
            Ok(ClusterReport {
                cluster_id: k + 1,
                connectivity: c,
                median_entropy: h,
                size: members.len(),
                label: decide(c, h, thresholds),
                members,
            })
        })
        .collect()
}

/// Linear-interpolation empirical quantile (`q` in `[0, 1]`).
pub fn empirical_quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::param("quantile of an empty sample"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::param(format!("quantile level {q} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

/// Minimum number of clutter samples for calibration.
pub const MIN_CALIBRATION_SAMPLES: usize = 30;

/// Thresholds that let a fraction `q` of clutter clusters pass each test:
/// `eta_c` is the `1 - q` quantile of clutter connectivity and `eta_h` the
/// `q` quantile of clutter median entropy.
pub fn calibrate_thresholds(clutter: &[(f64, f64)], q: f64) -> Result<Thresholds> {
    if clutter.len() < MIN_CALIBRATION_SAMPLES {
        return Err(Error::param(format!(
            "calibration needs at least {MIN_CALIBRATION_SAMPLES} clutter samples, got {}",
            clutter.len()
        )));
    }
    let c: Vec<f64> = clutter.iter().map(|s| s.0).collect();
    let h: Vec<f64> = clutter.iter().map(|s| s.1).collect();
    Ok(Thresholds {
        eta_c: empirical_quantile(&c, 1.0 - q)?,
        eta_h: empirical_quantile(&h, q)?,
    })
}

/// Writes reports as a JSON array.
pub fn write_reports_json<W: Write>(reports: &[ClusterReport], out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, reports)?;
    Ok(())
}
