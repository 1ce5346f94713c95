//! File formats: raw 32-bit float signals and CSV exports.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cluster::Clustering;
use crate::error::{Error, Result};
use crate::signalproc::EchoPoint;

/// Writes samples as little-endian `f32`.
pub fn write_raw_f32<W: Write>(samples: &[f64], mut out: W) -> Result<()> {
    for &v in samples {
        out.write_all(&(v as f32).to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Reads little-endian `f32` samples.
pub fn read_raw_f32<R: Read>(mut input: R) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Format(format!(
            "raw f32 stream length {} is not a multiple of 4",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect())
}

pub fn write_raw_f32_file(path: &Path, samples: &[f64]) -> Result<()> {
    write_atomic(path, |w| write_raw_f32(samples, w))
}

pub fn read_raw_f32_file(path: &Path) -> Result<Vec<f64>> {
    read_raw_f32(BufReader::new(File::open(path)?))
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::param(format!("{} has no file name", path.display())))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut writer = BufWriter::new(File::create(&tmp)?);
        body(&mut writer)?;
        writer.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// One row of the point-cloud CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRow {
    pub ping: u32,
    pub range_m: f64,
    pub mf_value: f64,
    pub entropy_bits: f64,
}

impl From<&EchoPoint> for PointRow {
    fn from(p: &EchoPoint) -> Self {
        Self {
            ping: p.ping,
            range_m: p.range,
            mf_value: p.mf_value,
            entropy_bits: p.entropy,
        }
    }
}

/// `ping,range_m,mf_value,entropy_bits`
pub fn write_point_cloud<W: Write>(points: &[EchoPoint], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    if points.is_empty() {
        writer.write_record(["ping", "range_m", "mf_value", "entropy_bits"])?;
    }
    for p in points {
        writer.serialize(PointRow::from(p))?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_point_cloud<R: Read>(input: R) -> Result<Vec<PointRow>> {
    let mut reader = csv::Reader::from_reader(input);
    reader
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRow {
    pub point_index: usize,
    pub ping: u32,
    pub range_m: f64,
    /// 1-based cluster label.
    pub cluster_label: usize,
}

/// `point_index,ping,range_m,cluster_label` with labels starting at 1.
pub fn write_clustering<W: Write>(points: &[EchoPoint], clustering: Option<&Clustering>, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let labels = clustering.map(Clustering::labels).unwrap_or(&[]);
    if labels.len() != points.len() {
        return Err(Error::param("clustering does not match the point cloud"));
    }
    if points.is_empty() {
        writer.write_record(["point_index", "ping", "range_m", "cluster_label"])?;
    }
    for (i, (p, &l)) in points.iter().zip(labels).enumerate() {
        writer.serialize(ClusterRow {
            point_index: i,
            ping: p.ping,
            range_m: p.range,
            cluster_label: l + 1,
        })?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_clustering<R: Read>(input: R) -> Result<Vec<ClusterRow>> {
    let mut reader = csv::Reader::from_reader(input);
    reader
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_round_trip_is_f32_exact() {
        let x = vec![0.0, 1.5, -2.25, 5e-6, 1e-30];
        let mut buf = Vec::new();
        write_raw_f32(&x, &mut buf).unwrap();
        assert_eq!(buf.len(), 20);
        let back = read_raw_f32(&buf[..]).unwrap();
        let expected: Vec<f64> = x.iter().map(|&v| f64::from(v as f32)).collect();
        assert_eq!(back, expected);
        assert!(read_raw_f32(&buf[..7]).is_err());
    }

    #[test]
    fn point_cloud_header() {
        let mut p = EchoPoint::new(12.5, 3, 7e-6);
        p.entropy = 4.25;
        let mut buf = Vec::new();
        write_point_cloud(&[p], &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next(), Some("ping,range_m,mf_value,entropy_bits"));
        let rows = read_point_cloud(&buf[..]).unwrap();
        assert_eq!(rows[0].ping, 3);
        assert_eq!(rows[0].entropy_bits, 4.25);

        let mut empty = Vec::new();
        write_point_cloud(&[], &mut empty).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap().trim(), "ping,range_m,mf_value,entropy_bits");
    }

    #[test]
    fn clustering_csv_is_one_based() {
        let pts = vec![EchoPoint::new(1.0, 1, 1.0), EchoPoint::new(2.0, 2, 1.0)];
        let c = Clustering::new(vec![0, 1]).unwrap();
        let mut buf = Vec::new();
        write_clustering(&pts, Some(&c), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("point_index,ping,range_m,cluster_label"));
        assert!(text.lines().nth(2).unwrap().ends_with(",2"));
    }
}
