use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sonarblob::classify::write_reports_json;
use sonarblob::config::RunConfig;
use sonarblob::evaluate::{
    aggregate, scenario_seed, sweep as run_sweep, MetricsRow, MetricsTable, ScenarioOutcome,
    TruthRecord,
};
use sonarblob::io::{
    read_clustering, read_point_cloud, read_raw_f32_file, write_clustering, write_point_cloud,
    write_raw_f32,
};
use sonarblob::simulate::synth_block;
use sonarblob::{detect_block, ClusterReport, EchoPoint, Error, PingRecord, Result, Scenario, ScenarioConfig};

use crate::manifest::{sha256_file, Outputs};

const TRUTH_NAME: &str = "truth.json";
const SCENARIO_NAME: &str = "scenario.json";
const POINTS_NAME: &str = "points.csv";
const CLUSTERS_NAME: &str = "clusters.csv";
const REPORTS_NAME: &str = "reports.json";
const METRICS_NAME: &str = "metrics.csv";
const METRICS_META_NAME: &str = "metrics.meta.json";
const EVENTS_NAME: &str = "events.csv";

type Files = Vec<(String, Vec<u8>)>;

fn rel(dir: &str, file: &str) -> String {
    if dir.is_empty() {
        file.to_string()
    } else {
        format!("{dir}/{file}")
    }
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn ping_file_name(ping: u32) -> String {
    format!("ping_{ping:03}.f32")
}

fn parse_ping_file(name: &str) -> Option<u32> {
    name.strip_prefix("ping_")?
        .strip_suffix(".f32")?
        .parse()
        .ok()
}

/// Scenario directories below `root`: the root itself when it holds
/// `marker`, otherwise every immediate subdirectory that does, by name.
fn scenario_dirs(root: &Path, marker: impl Fn(&Path) -> Result<bool>) -> Result<Vec<(String, PathBuf)>> {
    if !root.is_dir() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} is not a directory", root.display()),
        )));
    }
    if marker(root)? {
        return Ok(vec![(String::new(), root.to_path_buf())]);
    }
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root)? {
        let path = entry?.path();
        if path.is_dir() && marker(&path)? {
            let name = path
                .file_name()
                .and_then(|n| n.to_str())
                .ok_or_else(|| Error::Format(format!("bad directory name {}", path.display())))?
                .to_string();
            dirs.push((name, path));
        }
    }
    dirs.sort();
    Ok(dirs)
}

fn ping_files(dir: &Path) -> Result<Vec<(u32, PathBuf)>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if let Some(ping) = path.file_name().and_then(|n| n.to_str()).and_then(parse_ping_file) {
            files.push((ping, path));
        }
    }
    files.sort();
    Ok(files)
}

fn simulate_one(cfg: &RunConfig, has_target: bool, index: usize) -> Result<(String, Files)> {
    let scenario_cfg = ScenarioConfig {
        has_target,
        ..cfg.scenario.clone()
    };
    let seed = scenario_seed(cfg.master_seed, has_target, index);
    let bank = Scenario::synthetic_clutter(seed, &scenario_cfg, &cfg.chirp)?;
    let scenario = Scenario::generate(seed, &scenario_cfg, &cfg.chirp, &bank)?;
    let pings = synth_block(&scenario, &cfg.chirp, &bank)?;
    let dir = format!("{}_{index:04}", if has_target { "target" } else { "clutter" });
    let mut files = Vec::with_capacity(pings.len() + 2);
    for p in &pings {
        let mut bytes = Vec::with_capacity(4 * p.samples.len());
        write_raw_f32(&p.samples, &mut bytes)?;
        files.push((rel(&dir, &ping_file_name(p.ping)), bytes));
    }
    files.push((
        rel(&dir, TRUTH_NAME),
        json_bytes(&TruthRecord::from_scenario(&scenario, cfg.gate))?,
    ));
    files.push((rel(&dir, SCENARIO_NAME), json_bytes(&scenario)?));
    Ok((dir, files))
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let jobs: Vec<(bool, usize)> = (0..cfg.target_scenarios)
        .map(|i| (true, i))
        .chain((0..cfg.clutter_scenarios).map(|i| (false, i)))
        .collect();
    let mut outputs = Outputs::new(out)?;
    // Bounded batches keep memory flat for large runs.
    for batch in jobs.chunks(64) {
        let results: Vec<(String, Files)> = batch
            .par_iter()
            .map(|&(t, i)| simulate_one(cfg, t, i))
            .collect::<Result<_>>()?;
        for (_, files) in results {
            for (name, bytes) in files {
                outputs.write(&name, &bytes)?;
            }
        }
    }
    log::info!("simulated {} scenarios into {}", jobs.len(), out.display());
    outputs.finish("simulate", cfg, BTreeMap::new())?;
    Ok(())
}

fn detect_one(cfg: &RunConfig, name: &str, dir: &Path) -> Result<(Files, BTreeMap<String, String>)> {
    let mut pings = Vec::new();
    let mut inputs = BTreeMap::new();
    for (ping, path) in ping_files(dir)? {
        inputs.insert(rel(name, &ping_file_name(ping)), sha256_file(&path)?);
        pings.push(PingRecord::new(ping, read_raw_f32_file(&path)?, cfg.chirp.sample_rate)?);
    }
    let block = detect_block(&pings, &cfg.chirp, &cfg.detector)?;
    let mut points = Vec::new();
    write_point_cloud(&block.points, &mut points)?;
    let mut clusters = Vec::new();
    write_clustering(&block.points, block.clustering.as_ref(), &mut clusters)?;
    let mut reports = Vec::new();
    write_reports_json(&block.reports, &mut reports)?;
    reports.push(b'\n');
    let files = vec![
        (rel(name, POINTS_NAME), points),
        (rel(name, CLUSTERS_NAME), clusters),
        (rel(name, REPORTS_NAME), reports),
    ];
    Ok((files, inputs))
}

pub fn detect(cfg: &RunConfig, input: &Path, out: &Path) -> Result<()> {
    let dirs = scenario_dirs(input, |d| Ok(!ping_files(d)?.is_empty()))?;
    if dirs.is_empty() {
        log::warn!("no ping files under {}", input.display());
    }
    let mut outputs = Outputs::new(out)?;
    let mut inputs = BTreeMap::new();
    for batch in dirs.chunks(64) {
        let results: Vec<_> = batch
            .par_iter()
            .map(|(name, dir)| detect_one(cfg, name, dir))
            .collect::<Result<_>>()?;
        for (files, hashes) in results {
            for (name, bytes) in files {
                outputs.write(&name, &bytes)?;
            }
            inputs.extend(hashes);
        }
    }
    outputs.finish("detect", cfg, inputs)?;
    Ok(())
}

/// Rebuilds the labelled reports and point cloud written by `detect`.
fn read_detections(dir: &Path) -> Result<(Vec<ClusterReport>, Vec<EchoPoint>)> {
    let rows = read_point_cloud(fs::File::open(dir.join(POINTS_NAME))?)?;
    let points: Vec<EchoPoint> = rows
        .iter()
        .map(|r| {
            let mut p = EchoPoint::new(r.range_m, r.ping, r.mf_value);
            p.entropy = r.entropy_bits;
            p
        })
        .collect();
    let assignment = read_clustering(fs::File::open(dir.join(CLUSTERS_NAME))?)?;
    let mut reports: Vec<ClusterReport> =
        serde_json::from_reader(fs::File::open(dir.join(REPORTS_NAME))?)?;
    for row in &assignment {
        if row.point_index >= points.len() {
            return Err(Error::Format(format!(
                "{}: point index {} out of range",
                dir.join(CLUSTERS_NAME).display(),
                row.point_index
            )));
        }
        let report = reports
            .iter_mut()
            .find(|r| r.cluster_id == row.cluster_label)
            .ok_or_else(|| {
                Error::Format(format!(
                    "{}: cluster {} missing from {REPORTS_NAME}",
                    dir.display(),
                    row.cluster_label
                ))
            })?;
        report.members.push(row.point_index);
    }
    Ok((reports, points))
}

#[derive(Debug, Serialize)]
struct EventRow<'a> {
    scenario: &'a str,
    has_target: bool,
    true_detection: bool,
    false_alarm: bool,
    n_tp: usize,
    n_fp: usize,
    n_fn: usize,
}

#[derive(Debug, Serialize)]
struct MetricsMeta<'a> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    master_seed: u64,
    gate: f64,
    target_scenarios: usize,
    clutter_scenarios: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<&'a sonarblob::evaluate::SweepGrid>,
}

fn write_table(outputs: &mut Outputs, table: &MetricsTable, meta: &MetricsMeta) -> Result<()> {
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    outputs.write(METRICS_NAME, &csv)?;
    outputs.write(METRICS_META_NAME, &json_bytes(meta)?)
}

fn single_row(cfg: &RunConfig, metrics: sonarblob::evaluate::Metrics) -> MetricsRow {
    let a = &cfg.detector.affinity;
    MetricsRow {
        scr_db: cfg.scenario.scr_db,
        valid_fraction: cfg.scenario.valid_fraction,
        alpha: a.alpha,
        beta: a.beta,
        tau: a.tau,
        eta_c: cfg.detector.thresholds.eta_c,
        eta_h: cfg.detector.thresholds.eta_h,
        metrics,
    }
}

pub fn evaluate(cfg: &RunConfig, input: &Path, truth_root: &Path, out: &Path) -> Result<()> {
    let dirs = scenario_dirs(input, |d| Ok(d.join(REPORTS_NAME).is_file()))?;
    let mut inputs = BTreeMap::new();
    let mut outcomes = Vec::with_capacity(dirs.len());
    let mut events = csv::Writer::from_writer(Vec::new());
    for (name, dir) in &dirs {
        let truth_path = if name.is_empty() {
            truth_root.join(TRUTH_NAME)
        } else {
            truth_root.join(name).join(TRUTH_NAME)
        };
        let truth: TruthRecord = serde_json::from_slice(&fs::read(&truth_path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("missing truth sidecar {}: {e}", truth_path.display()),
            ))
        })?)?;
        for file in [POINTS_NAME, CLUSTERS_NAME, REPORTS_NAME] {
            inputs.insert(rel(name, file), sha256_file(&dir.join(file))?);
        }
        inputs.insert(rel(name, TRUTH_NAME), sha256_file(&truth_path)?);
        let (reports, points) = read_detections(dir)?;
        let gt = truth.ground_truth()?;
        let outcome = ScenarioOutcome::from_reports(&reports, &points, gt.as_ref());
        events
            .serialize(EventRow {
                scenario: if name.is_empty() { "." } else { name },
                has_target: outcome.has_target,
                true_detection: outcome.events.true_detection,
                false_alarm: outcome.events.false_alarm,
                n_tp: outcome.counts.tp,
                n_fp: outcome.counts.fp,
                n_fn: outcome.counts.fn_,
            })
            .map_err(Error::from)?;
        outcomes.push(outcome);
    }
    let metrics = aggregate(&outcomes);
    let table = MetricsTable {
        rows: vec![single_row(cfg, metrics)],
    };
    let mut outputs = Outputs::new(out)?;
    write_table(
        &mut outputs,
        &table,
        &MetricsMeta {
            tool: "sonarblob",
            version: env!("CARGO_PKG_VERSION"),
            command: "evaluate",
            master_seed: cfg.master_seed,
            gate: cfg.gate,
            target_scenarios: metrics.target_scenarios,
            clutter_scenarios: metrics.clutter_scenarios,
            sweep: None,
        },
    )?;
    let events = events
        .into_inner()
        .map_err(|e| Error::Format(format!("events table: {e}")))?;
    let events = if dirs.is_empty() {
        b"scenario,has_target,true_detection,false_alarm,n_tp,n_fp,n_fn\n".to_vec()
    } else {
        events
    };
    outputs.write(EVENTS_NAME, &events)?;
    outputs.finish("evaluate", cfg, inputs)?;
    Ok(())
}

pub fn sweep(cfg: &RunConfig, out: &Path) -> Result<()> {
    let table = run_sweep(&cfg.sweep, &cfg.sweep_settings())?;
    let mut outputs = Outputs::new(out)?;
    write_table(
        &mut outputs,
        &table,
        &MetricsMeta {
            tool: "sonarblob",
            version: env!("CARGO_PKG_VERSION"),
            command: "sweep",
            master_seed: cfg.master_seed,
            gate: cfg.gate,
            target_scenarios: cfg.target_scenarios,
            clutter_scenarios: cfg.clutter_scenarios,
            sweep: Some(&cfg.sweep),
        },
    )?;
    outputs.finish("sweep", cfg, BTreeMap::new())?;
    Ok(())
}
