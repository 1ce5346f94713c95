//! Detection and classification metrics over sets of scenarios, and
//! parameter sweeps that produce ROC and precision-recall tables.
//!
//! A scenario with a target is detected when at least one target-labelled
//! cluster is credited to the target, i.e. at least half of its members lie
//! within the ground-truth gate. Target-labelled clusters that are not
//! credited raise a false alarm. `P_D` is taken over scenarios with a target
//! and `P_FA` over clutter-only scenarios.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{decide, ClusterReport, Label, Thresholds};
use crate::error::{Error, Result};
use crate::graphbuild::AffinityParams;
use crate::pipeline::{cluster_points, extract_points, BlockResult, DetectorConfig};
use crate::signalproc::{ChirpSpec, EchoPoint};
use crate::simulate::{derive_seed, synth_block, Scenario, ScenarioConfig};

/// Default ground-truth gate (m).
pub const DEFAULT_GATE: f64 = 0.5;

/// Target path and the gate used to call a point a target point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Range per ping, ping `p` at index `p - 1`.
    pub path: Vec<f64>,
    pub gate: f64,
}

impl GroundTruth {
    pub fn new(path: Vec<f64>, gate: f64) -> Result<Self> {
        if !(gate > 0.0) {
            return Err(Error::param("ground-truth gate must be positive"));
        }
        Ok(Self { path, gate })
    }

    pub fn from_scenario(scenario: &Scenario, gate: f64) -> Result<Option<Self>> {
        if scenario.config.has_target {
            Self::new(scenario.path.clone(), gate).map(Some)
        } else {
            Ok(None)
        }
    }
}

/// Target iff `|r - rho(p)| < gate`.
pub fn point_ground_truth(point: &EchoPoint, truth: &GroundTruth) -> Label {
    let Some(&rho) = (point.ping as usize)
        .checked_sub(1)
        .and_then(|i| truth.path.get(i))
    else {
        return Label::Clutter;
    };
    if (point.range - rho).abs() < truth.gate {
        Label::Target
    } else {
        Label::Clutter
    }
}

/// Per-scenario detection events. A scenario can be both a true detection
/// and a false alarm.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionEvents {
    pub true_detection: bool,
    pub false_alarm: bool,
    pub miss: bool,
    pub correct_rejection: bool,
}

/// Classification-independent summary of one cluster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterFeatures {
    pub connectivity: f64,
    pub median_entropy: f64,
    pub size: usize,
    /// Members inside the ground-truth gate.
    pub true_members: usize,
}

impl ClusterFeatures {
    /// At least half of the members are target points.
    pub fn credited(&self) -> bool {
        self.size > 0 && 2 * self.true_members >= self.size
    }
}

/// Everything needed to score a scenario under any thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFeatures {
    pub has_target: bool,
    pub clusters: Vec<ClusterFeatures>,
    /// Target points in the whole cloud.
    pub true_points: usize,
}

/// Point-level confusion counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ScenarioFeatures {
    pub fn from_reports(
        reports: &[ClusterReport],
        points: &[EchoPoint],
        truth: Option<&GroundTruth>,
    ) -> Self {
        let is_true = |i: usize| truth.is_some_and(|t| point_ground_truth(&points[i], t) == Label::Target);
        let clusters = reports
            .iter()
            .map(|r| ClusterFeatures {
                connectivity: r.connectivity,
                median_entropy: r.median_entropy,
                size: r.size,
                true_members: r.members.iter().filter(|&&i| is_true(i)).count(),
            })
            .collect();
        Self {
            has_target: truth.is_some(),
            clusters,
            true_points: (0..points.len()).filter(|&i| is_true(i)).count(),
        }
    }

    pub fn from_block(block: &BlockResult, truth: Option<&GroundTruth>) -> Self {
        Self::from_reports(&block.reports, &block.points, truth)
    }

    pub fn events(&self, thresholds: &Thresholds) -> DetectionEvents {
        let mut credited = false;
        let mut spurious = false;
        for c in &self.clusters {
            if decide(c.connectivity, c.median_entropy, thresholds) == Label::Target {
                if self.has_target && c.credited() {
                    credited = true;
                } else {
                    spurious = true;
                }
            }
        }
        DetectionEvents {
            true_detection: self.has_target && credited,
            false_alarm: spurious,
            miss: self.has_target && !credited,
            correct_rejection: !self.has_target && !spurious,
        }
    }

    pub fn counts(&self, thresholds: &Thresholds) -> PointCounts {
        let mut tp = 0;
        let mut fp = 0;
        for c in &self.clusters {
            if decide(c.connectivity, c.median_entropy, thresholds) == Label::Target {
                tp += c.true_members;
                fp += c.size - c.true_members;
            }
        }
        PointCounts {
            tp,
            fp,
            fn_: self.true_points - tp,
        }
    }
}

/// Detection events of one block from its labelled reports.
pub fn scenario_detection(
    reports: &[ClusterReport],
    points: &[EchoPoint],
    truth: Option<&GroundTruth>,
) -> DetectionEvents {
    let features = ScenarioFeatures::from_reports(reports, points, truth);
    let mut events = DetectionEvents::default();
    let mut credited = false;
    for (r, c) in reports.iter().zip(&features.clusters) {
        if r.label == Label::Target {
            if features.has_target && c.credited() {
                credited = true;
            } else {
                events.false_alarm = true;
            }
        }
    }
    events.true_detection = features.has_target && credited;
    events.miss = features.has_target && !credited;
    events.correct_rejection = !features.has_target && !events.false_alarm;
    events
}

/// Outcome of one scenario under fixed thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub has_target: bool,
    pub events: DetectionEvents,
    pub counts: PointCounts,
}

impl ScenarioOutcome {
    pub fn new(features: &ScenarioFeatures, thresholds: &Thresholds) -> Self {
        Self {
            has_target: features.has_target,
            events: features.events(thresholds),
            counts: features.counts(thresholds),
        }
    }

    /// Outcome under the labels already stored in `reports`.
    pub fn from_reports(
        reports: &[ClusterReport],
        points: &[EchoPoint],
        truth: Option<&GroundTruth>,
    ) -> Self {
        let features = ScenarioFeatures::from_reports(reports, points, truth);
        let mut counts = PointCounts::default();
        for (r, c) in reports.iter().zip(&features.clusters) {
            if r.label == Label::Target {
                counts.tp += c.true_members;
                counts.fp += c.size - c.true_members;
            }
        }
        counts.fn_ = features.true_points - counts.tp;
        Self {
            has_target: features.has_target,
            events: scenario_detection(reports, points, truth),
            counts,
        }
    }
}

/// Ground-truth sidecar written next to simulated pings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub has_target: bool,
    pub gate: f64,
    /// Target range per ping (m).
    pub path: Vec<f64>,
    pub valid_pings: Vec<bool>,
    pub seed: u64,
}

impl TruthRecord {
    pub fn from_scenario(scenario: &Scenario, gate: f64) -> Self {
        Self {
            has_target: scenario.config.has_target,
            gate,
            path: scenario.path.clone(),
            valid_pings: scenario.valid_pings.clone(),
            seed: scenario.seed,
        }
    }

    pub fn ground_truth(&self) -> Result<Option<GroundTruth>> {
        if self.has_target {
            GroundTruth::new(self.path.clone(), self.gate).map(Some)
        } else {
            Ok(None)
        }
    }
}

/// Rates and counts aggregated over a set of scenarios. Rates with a zero
/// denominator are `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub p_d: Option<f64>,
    pub p_fa: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub n_tp: usize,
    pub n_fp: usize,
    pub n_fn: usize,
    pub target_scenarios: usize,
    pub detected: usize,
    pub clutter_scenarios: usize,
    pub false_alarms: usize,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Pools outcomes. Precision and recall count points of scenarios with a
/// target only; clutter-only scenarios enter through `P_FA`.
pub fn aggregate<'a>(outcomes: impl IntoIterator<Item = &'a ScenarioOutcome>) -> Metrics {
    let mut m = Metrics::default();
    for o in outcomes {
        if o.has_target {
            m.target_scenarios += 1;
            m.detected += usize::from(o.events.true_detection);
            m.n_tp += o.counts.tp;
            m.n_fp += o.counts.fp;
            m.n_fn += o.counts.fn_;
        } else {
            m.clutter_scenarios += 1;
            m.false_alarms += usize::from(o.events.false_alarm);
        }
    }
    m.p_d = ratio(m.detected, m.target_scenarios);
    m.p_fa = ratio(m.false_alarms, m.clutter_scenarios);
    m.precision = ratio(m.n_tp, m.n_tp + m.n_fp);
    m.recall = ratio(m.n_tp, m.n_tp + m.n_fn);
    m
}

/// Simulates a scenario and runs the detector on it.
pub fn run_scenario(
    seed: u64,
    scenario_cfg: &ScenarioConfig,
    chirp: &ChirpSpec,
    detector: &DetectorConfig,
    gate: f64,
) -> Result<(Scenario, BlockResult, ScenarioFeatures)> {
    let bank = Scenario::synthetic_clutter(seed, scenario_cfg, chirp)?;
    let scenario = Scenario::generate(seed, scenario_cfg, chirp, &bank)?;
    let pings = synth_block(&scenario, chirp, &bank)?;
    let points = extract_points(&pings, chirp, detector)?;
    let block = cluster_points(points, detector)?;
    let truth = GroundTruth::from_scenario(&scenario, gate)?;
    let features = ScenarioFeatures::from_block(&block, truth.as_ref());
    Ok((scenario, block, features))
}

/// Parameter grid of a sweep. Every combination of the pipeline axes
/// (SCR, valid fraction, affinity weights) is simulated once; the
/// threshold axes are applied to the resulting clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrid {
    pub scr_db: Vec<f64>,
    pub valid_fraction: Vec<f64>,
    /// `(alpha, beta, tau)` triples.
    pub weights: Vec<(f64, f64, f64)>,
    pub eta_c: Vec<f64>,
    pub eta_h: Vec<f64>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            scr_db: vec![-9.0],
            valid_fraction: vec![1.0],
            weights: vec![(0.1, 1.0, 1.0)],
            eta_c: vec![5.0],
            eta_h: vec![4.5],
        }
    }
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        let axes = [
            ("scr_db", self.scr_db.len()),
            ("valid_fraction", self.valid_fraction.len()),
            ("weights", self.weights.len()),
            ("eta_c", self.eta_c.len()),
            ("eta_h", self.eta_h.len()),
        ];
        if let Some((name, _)) = axes.iter().find(|(_, n)| *n == 0) {
            return Err(Error::param(format!("sweep axis {name} is empty")));
        }
        if self.valid_fraction.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::param("valid fractions must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Sweep settings other than the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub chirp: ChirpSpec,
    pub scenario: ScenarioConfig,
    pub detector: DetectorConfig,
    pub gate: f64,
    pub target_scenarios: usize,
    pub clutter_scenarios: usize,
    pub master_seed: u64,
}

/// One grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scr_db: f64,
    pub valid_fraction: f64,
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    pub eta_c: f64,
    pub eta_h: f64,
    pub metrics: Metrics,
}

/// Long-format table with one row per grid cell.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

const TABLE_HEADER: [&str; 18] = [
    "scr_db",
    "valid_fraction",
    "alpha",
    "beta",
    "tau",
    "eta_c",
    "eta_h",
    "p_d",
    "p_fa",
    "precision",
    "recall",
    "n_tp",
    "n_fp",
    "n_fn",
    "target_scenarios",
    "detected",
    "clutter_scenarios",
    "false_alarms",
];

fn rate_field(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x}"))
}

impl MetricsTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TABLE_HEADER)?;
        for r in &self.rows {
            let m = &r.metrics;
            w.write_record([
                format!("{}", r.scr_db),
                format!("{}", r.valid_fraction),
                format!("{}", r.alpha),
                format!("{}", r.beta),
                format!("{}", r.tau),
                format!("{}", r.eta_c),
                format!("{}", r.eta_h),
                rate_field(m.p_d),
                rate_field(m.p_fa),
                rate_field(m.precision),
                rate_field(m.recall),
                m.n_tp.to_string(),
                m.n_fp.to_string(),
                m.n_fn.to_string(),
                m.target_scenarios.to_string(),
                m.detected.to_string(),
                m.clutter_scenarios.to_string(),
                m.false_alarms.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

const KIND_TARGET: u64 = 0x7461_7267;
const KIND_CLUTTER: u64 = 0x636c_7574;

/// Seed of the `index`-th target or clutter-only scenario. Target scenarios
/// share seeds across SCR values and valid fractions.
pub fn scenario_seed(master: u64, has_target: bool, index: usize) -> u64 {
    let kind = if has_target { KIND_TARGET } else { KIND_CLUTTER };
    derive_seed(derive_seed(master, kind), index as u64)
}

/// Features of a batch of seeded scenarios.
pub fn simulate_features(
    settings: &SweepSettings,
    scenario_cfg: &ScenarioConfig,
    detector: &DetectorConfig,
    has_target: bool,
    count: usize,
) -> Result<Vec<ScenarioFeatures>> {
    let cfg = ScenarioConfig {
        has_target,
        ..scenario_cfg.clone()
    };
    (0..count)
        .into_par_iter()
        .map(|i| {
            let seed = scenario_seed(settings.master_seed, has_target, i);
            run_scenario(seed, &cfg, &settings.chirp, detector, settings.gate).map(|r| r.2)
        })
        .collect()
}

/// Pools features of target and clutter-only scenarios under thresholds.
pub fn metrics_for(
    targets: &[ScenarioFeatures],
    clutter: &[ScenarioFeatures],
    thresholds: &Thresholds,
) -> Metrics {
    let outcomes: Vec<ScenarioOutcome> = targets
        .iter()
        .chain(clutter)
        .map(|f| ScenarioOutcome::new(f, thresholds))
        .collect();
    aggregate(&outcomes)
}

/// Runs the full grid. Rows are ordered by weights, valid fraction, SCR,
/// `eta_h`, then `eta_c`, and are reproducible from the master seed.
pub fn sweep(grid: &SweepGrid, settings: &SweepSettings) -> Result<MetricsTable> {
    grid.validate()?;
    let mut table = MetricsTable::default();
    for &(alpha, beta, tau) in &grid.weights {
        let detector = DetectorConfig {
            affinity: AffinityParams {
                alpha,
                beta,
                tau,
                ..settings.detector.affinity
            },
            ..settings.detector.clone()
        };
        let clutter = simulate_features(
            settings,
            &settings.scenario,
            &detector,
            false,
            settings.clutter_scenarios,
        )?;
        for &valid_fraction in &grid.valid_fraction {
            for &scr_db in &grid.scr_db {
                let cfg = ScenarioConfig {
                    scr_db,
                    valid_fraction,
                    ..settings.scenario.clone()
                };
                let targets =
                    simulate_features(settings, &cfg, &detector, true, settings.target_scenarios)?;
                for &eta_h in &grid.eta_h {
                    for &eta_c in &grid.eta_c {
                        let thresholds = Thresholds { eta_c, eta_h };
                        table.rows.push(MetricsRow {
                            scr_db,
                            valid_fraction,
                            alpha,
                            beta,
                            tau,
                            eta_c,
                            eta_h,
                            metrics: metrics_for(&targets, &clutter, &thresholds),
                        });
                    }
                }
            }
        }
    }
    Ok(table)
}
