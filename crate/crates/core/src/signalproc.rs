//! Transmit replica, matched filtering, peak picking and per-echo spectra.
//!
//! Ranges are two-way: a lag of `k` samples maps to `c * k / (2 * fs)` metres.

use std::f64::consts::PI;
use std::sync::Arc;

use log::warn;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of spectrum bins per echo point.
pub const DEFAULT_SPECTRUM_BINS: usize = 100;

/// Linear-FM transmit pulse and the acquisition parameters needed to
/// interpret received samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChirpSpec {
    /// Start frequency of the sweep (Hz).
    pub f_min: f64,
    /// End frequency of the sweep (Hz).
    pub f_max: f64,
    /// Pulse duration (s).
    pub duration: f64,
    /// Sample rate (Hz).
    pub sample_rate: f64,
    /// Speed of sound (m/s).
    pub sound_speed: f64,
}

impl Default for ChirpSpec {
    fn default() -> Self {
        Self {
            f_min: 7_000.0,
            f_max: 17_000.0,
            duration: 0.010,
            sample_rate: 96_000.0,
            sound_speed: 1_500.0,
        }
    }
}

impl ChirpSpec {
    /// Checks the physical invariants. A zero-width sweep (`f_min == f_max`)
    /// is accepted and produces a pure tone.
    pub fn validate(&self) -> Result<()> {
        let all_finite = [
            self.f_min,
            self.f_max,
            self.duration,
            self.sample_rate,
            self.sound_speed,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::param("chirp parameters must be finite"));
        }
        if self.f_min <= 0.0 {
            return Err(Error::param(format!("f_min must be positive, got {}", self.f_min)));
        }
        if self.f_min > self.f_max {
            return Err(Error::param(format!(
                "f_min ({}) exceeds f_max ({})",
                self.f_min, self.f_max
            )));
        }
        if self.duration <= 0.0 {
            return Err(Error::param("chirp duration must be positive"));
        }
        if self.sample_rate <= 2.0 * self.f_max {
            return Err(Error::param(format!(
                "sample rate {} Hz does not exceed twice f_max ({} Hz)",
                self.sample_rate, self.f_max
            )));
        }
        if self.sound_speed <= 0.0 {
            return Err(Error::param("sound speed must be positive"));
        }
        Ok(())
    }

    pub fn bandwidth(&self) -> f64 {
        self.f_max - self.f_min
    }

    /// Replica length in samples.
    pub fn replica_len(&self) -> usize {
        (self.duration * self.sample_rate).round() as usize
    }

    /// Sweep rate in Hz/s.
    pub fn sweep_rate(&self) -> f64 {
        self.bandwidth() / self.duration
    }

    /// Phase of the transmitted sweep at time `t` (radians).
    pub fn phase(&self, t: f64) -> f64 {
        2.0 * PI * (self.f_min * t + 0.5 * self.sweep_rate() * t * t)
    }

    pub fn instantaneous_frequency(&self, t: f64) -> f64 {
        self.f_min + self.sweep_rate() * t
    }

    /// Two-way range corresponding to a lag in samples.
    pub fn lag_to_range(&self, lag: usize) -> f64 {
        self.sound_speed * (lag as f64 / self.sample_rate) / 2.0
    }

    /// Nearest sample lag for a two-way range.
    pub fn range_to_lag(&self, range: f64) -> usize {
        (2.0 * range / self.sound_speed * self.sample_rate).round().max(0.0) as usize
    }

    /// Largest range observable in a record of `segment_duration` seconds.
    pub fn max_range(&self, segment_duration: f64) -> f64 {
        self.sound_speed * segment_duration / 2.0
    }
}

/// The received samples of one emission.
#[derive(Debug, Clone, PartialEq)]
pub struct PingRecord {
    /// 1-based index of the emission within its block.
    pub ping: u32,
    pub samples: Vec<f64>,
    pub sample_rate: f64,
}

impl PingRecord {
    pub fn new(ping: u32, samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if ping == 0 {
            return Err(Error::param("ping index is 1-based"));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::param("sample rate must be positive"));
        }
        Ok(Self {
            ping,
            samples,
            sample_rate,
        })
    }

    pub fn segment_duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }
}

/// A thresholded matched-filter peak together with its spectral signature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoPoint {
    /// Two-way range (m).
    pub range: f64,
    /// 1-based ping index.
    pub ping: u32,
    /// Matched-filter magnitude at the peak.
    pub mf_value: f64,
    /// Normalized in-band power spectrum; empty until extracted.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub spectrum: Vec<f64>,
    /// Spectral entropy of `spectrum` (bits).
    pub entropy: f64,
}

impl EchoPoint {
    pub fn new(range: f64, ping: u32, mf_value: f64) -> Self {
        Self {
            range,
            ping,
            mf_value,
            spectrum: Vec::new(),
            entropy: 0.0,
        }
    }

    /// Attaches a spectrum and its entropy.
    pub fn with_spectrum(mut self, spectrum: Vec<f64>) -> Result<Self> {
        self.entropy = spectral_entropy(&spectrum)?;
        self.spectrum = spectrum;
        Ok(self)
    }
}

/// Generates the transmit replica: a unit-amplitude linear sweep from
/// `f_min` to `f_max`.
pub fn make_chirp(spec: &ChirpSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let fs = spec.sample_rate;
    Ok((0..spec.replica_len())
        .map(|k| spec.phase(k as f64 / fs).cos())
        .collect())
}

/// Correlates records against a fixed replica using FFTs.
///
/// The output at lag `k` is `|sum_j y[k + j] s[j]| / sum_j s[j]^2`, so a
/// replica copy of amplitude `a` placed at lag `k` yields `a` there. Lags run
/// over the whole record; near the end the replica is implicitly zero-padded.
pub struct MatchedFilter {
    replica: Vec<f64>,
    energy: f64,
    record_len: usize,
    fft_len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    replica_spectrum: Vec<Complex<f64>>,
}

impl MatchedFilter {
    pub fn new(replica: &[f64], record_len: usize) -> Result<Self> {
        if replica.is_empty() {
            return Err(Error::param("empty replica"));
        }
        if replica.len() > record_len {
            return Err(Error::param(format!(
                "replica ({} samples) is longer than the record ({} samples)",
                replica.len(),
                record_len
            )));
        }
        let energy: f64 = replica.iter().map(|v| v * v).sum();
        if energy <= 0.0 {
            return Err(Error::param("replica has zero energy"));
        }
        let fft_len = (record_len + replica.len() - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(fft_len);
        let inverse = planner.plan_fft_inverse(fft_len);
        let mut replica_spectrum = vec![Complex::new(0.0, 0.0); fft_len];
        for (dst, &v) in replica_spectrum.iter_mut().zip(replica) {
            dst.re = v;
        }
        forward.process(&mut replica_spectrum);
        for v in &mut replica_spectrum {
            *v = v.conj();
        }
        Ok(Self {
            replica: replica.to_vec(),
            energy,
            record_len,
            fft_len,
            forward,
            inverse,
            replica_spectrum,
        })
    }

    pub fn replica(&self) -> &[f64] {
        &self.replica
    }

    pub fn apply(&self, samples: &[f64]) -> Result<Vec<f64>> {
        if samples.len() != self.record_len {
            return Err(Error::param(format!(
                "record has {} samples, filter was planned for {}",
                samples.len(),
                self.record_len
            )));
        }
        let mut buf = vec![Complex::new(0.0, 0.0); self.fft_len];
        for (dst, &v) in buf.iter_mut().zip(samples) {
            dst.re = v;
        }
        self.forward.process(&mut buf);
        for (b, s) in buf.iter_mut().zip(&self.replica_spectrum) {
            *b *= s;
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / (self.fft_len as f64 * self.energy);
        Ok(buf[..self.record_len]
            .iter()
            .map(|c| (c.re * scale).abs())
            .collect())
    }
}

/// Matched filter output for a single record.
pub fn matched_filter(ping: &PingRecord, replica: &[f64]) -> Result<Vec<f64>> {
    MatchedFilter::new(replica, ping.samples.len())?.apply(&ping.samples)
}

/// Picks local maxima of the matched-filter output above `eta`.
///
/// Peaks closer than one replica length to a stronger accepted peak are
/// absorbed by it. Returned points are ordered by range and carry no
/// spectrum yet.
pub fn threshold_detect(
    mf_out: &[f64],
    eta: f64,
    ping: u32,
    chirp: &ChirpSpec,
) -> Result<Vec<EchoPoint>> {
    if !(eta > 0.0) {
        return Err(Error::param(format!("MF threshold must be positive, got {eta}")));
    }
    let radius = chirp.replica_len().max(1);
    let n = mf_out.len();
    let mut candidates: Vec<usize> = (0..n)
        .filter(|&k| {
            let v = mf_out[k];
            v > eta
                && (k == 0 || v >= mf_out[k - 1])
                && (k + 1 == n || v > mf_out[k + 1])
        })
        .collect();
    candidates.sort_by(|&a, &b| mf_out[b].total_cmp(&mf_out[a]).then(a.cmp(&b)));

    let mut accepted: Vec<usize> = Vec::new();
    for k in candidates {
        if accepted.iter().all(|&a| a.abs_diff(k) >= radius) {
            accepted.push(k);
        }
    }
    accepted.sort_unstable();
    Ok(accepted
        .into_iter()
        .map(|k| EchoPoint::new(chirp.lag_to_range(k), ping, mf_out[k]))
        .collect())
}

/// Computes normalized in-band power spectra of echo windows.
///
/// The window is `T_s` long and starts at the echo's two-way delay. Its
/// zero-padded power spectrum is summed into `bins` equal-width bands
/// covering `[f_min, f_max]` and normalized to unit sum.
pub struct SpectrumExtractor {
    chirp: ChirpSpec,
    bins: usize,
    window_len: usize,
    fft: Arc<dyn Fft<f64>>,
    /// (fft index, spectrum bin) pairs that fall inside the band.
    bin_map: Vec<(usize, usize)>,
    fft_len: usize,
}

impl SpectrumExtractor {
    pub fn new(chirp: &ChirpSpec, bins: usize) -> Result<Self> {
        chirp.validate()?;
        if bins == 0 {
            return Err(Error::param("spectrum needs at least one bin"));
        }
        if chirp.bandwidth() <= 0.0 {
            return Err(Error::param("spectrum extraction needs f_min < f_max"));
        }
        let window_len = chirp.replica_len().max(1);
        // At least four FFT samples per output band.
        let min_len = (4.0 * bins as f64 * chirp.sample_rate / chirp.bandwidth()).ceil() as usize;
        let fft_len = window_len.max(min_len).next_power_of_two();
        let fft = FftPlanner::new().plan_fft_forward(fft_len);
        let df = chirp.sample_rate / fft_len as f64;
        let bin_map = (0..=fft_len / 2)
            .filter_map(|q| {
                let f = q as f64 * df;
                if f < chirp.f_min || f > chirp.f_max {
                    return None;
                }
                let m = ((f - chirp.f_min) / chirp.bandwidth() * bins as f64).floor() as usize;
                Some((q, m.min(bins - 1)))
            })
            .collect();
        Ok(Self {
            chirp: *chirp,
            bins,
            window_len,
            fft,
            bin_map,
            fft_len,
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Spectrum of the window starting at sample `start`.
    pub fn spectrum_at(&self, samples: &[f64], start: usize) -> Vec<f64> {
        let end = start.saturating_add(self.window_len);
        if end > samples.len() {
            warn!(
                "spectrum window [{start}, {end}) exceeds record of {} samples; zero-padding",
                samples.len()
            );
        }
        let mut buf = vec![Complex::new(0.0, 0.0); self.fft_len];
        let available = samples.get(start..end.min(samples.len())).unwrap_or(&[]);
        for (dst, &v) in buf.iter_mut().zip(available) {
            dst.re = v;
        }
        self.fft.process(&mut buf);
        let mut z = vec![0.0; self.bins];
        for &(q, m) in &self.bin_map {
            z[m] += buf[q].norm_sqr();
        }
        let total: f64 = z.iter().sum();
        if total > 0.0 && total.is_finite() {
            z.iter_mut().for_each(|v| *v /= total);
        } else {
            // Silent window: no spectral structure at all.
            z.iter_mut().for_each(|v| *v = 1.0 / self.bins as f64);
        }
        z
    }

    pub fn extract(&self, ping: &PingRecord, point: &EchoPoint) -> Vec<f64> {
        self.spectrum_at(&ping.samples, self.chirp.range_to_lag(point.range))
    }
}

/// Normalized power spectrum of the echo window belonging to `point`.
pub fn extract_spectrum(
    ping: &PingRecord,
    point: &EchoPoint,
    chirp: &ChirpSpec,
    bins: usize,
) -> Result<Vec<f64>> {
    Ok(SpectrumExtractor::new(chirp, bins)?.extract(ping, point))
}

/// Shannon entropy in bits of a normalized spectrum. Empty bins contribute
/// nothing.
pub fn spectral_entropy(z: &[f64]) -> Result<f64> {
    let mut h = 0.0;
    for &p in z {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::param(format!("spectrum entry {p} is not a valid mass")));
        }
        if p > 0.0 {
            h -= p * p.log2();
        }
    }
    Ok(h.max(0.0))
}

/// Object sizes `(l_min, l_max)` whose echoes fall in the interference
/// region `0.7 <= l / lambda <= 200` over the band `[f_min, f_max]`.
pub fn interference_region(f_min: f64, f_max: f64, sound_speed: f64) -> Result<(f64, f64)> {
    if !(f_min > 0.0 && f_max > 0.0) {
        return Err(Error::param("frequencies must be positive"));
    }
    if !(sound_speed > 0.0) {
        return Err(Error::param("sound speed must be positive"));
    }
    if f_min >= f_max {
        return Err(Error::param("f_min must be below f_max"));
    }
    Ok((0.7 * sound_speed / f_min, 200.0 * sound_speed / f_max))
}
