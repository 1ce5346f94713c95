//! Seeded synthetic scenarios: a random-walk target with a random impulse
//! response, embedded in clutter at a controlled signal-to-clutter ratio.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signalproc::{make_chirp, ChirpSpec, PingRecord};

/// Derives an independent stream seed from a parent seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_PATH: u64 = 1;
const STREAM_IMPULSE: u64 = 2;
const STREAM_VALID: u64 = 3;
const STREAM_CLUTTER: u64 = 4;
const STREAM_CLUTTER_START: u64 = 5;

/// Synthetic clutter model: band-limited Gaussian reverberation plus point
/// scatterers whose echoes are copies of the transmitted pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClutterParams {
    /// RMS of the band-limited noise floor.
    pub noise_rms: f64,
    /// Scatterers per metre of range that persist from ping to ping.
    pub persistent_density: f64,
    /// Scatterers per metre of range drawn afresh on every ping.
    pub transient_density: f64,
    /// Rayleigh scale of scatterer echo amplitudes.
    pub scatterer_scale: f64,
    /// Per-ping range jitter of persistent scatterers (m).
    pub scatterer_drift: f64,
}

impl Default for ClutterParams {
    fn default() -> Self {
        Self {
            noise_rms: 2e-5,
            persistent_density: 0.05,
            transient_density: 0.1,
            scatterer_scale: 5e-6,
            scatterer_drift: 0.05,
        }
    }
}

impl ClutterParams {
    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.noise_rms,
            self.persistent_density,
            self.transient_density,
            self.scatterer_scale,
            self.scatterer_drift,
        ];
        if vals.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::param("clutter parameters must be finite and non-negative"));
        }
        Ok(())
    }
}

/// A pool of clutter samples sliced into per-ping records.
///
/// Consecutive pings read consecutive frames, `frame_stride` samples apart.
#[derive(Debug, Clone, PartialEq)]
pub struct ClutterBank {
    samples: Vec<f64>,
    sample_rate: f64,
    frame_stride: usize,
    source: String,
}

impl ClutterBank {
    pub fn new(
        samples: Vec<f64>,
        sample_rate: f64,
        frame_stride: usize,
        source: impl Into<String>,
    ) -> Result<Self> {
        if frame_stride == 0 {
            return Err(Error::param("clutter frame stride must be positive"));
        }
        if !(sample_rate > 0.0) {
            return Err(Error::param("clutter sample rate must be positive"));
        }
        Ok(Self {
            samples,
            sample_rate,
            frame_stride,
            source: source.into(),
        })
    }

    /// A continuous recording made with pings every `t_pri` seconds.
    pub fn from_recording(samples: Vec<f64>, sample_rate: f64, t_pri: f64) -> Result<Self> {
        let stride = (t_pri * sample_rate).round() as usize;
        Self::new(samples, sample_rate, stride, "recording")
    }

    /// Synthetic clutter with `frames` back-to-back ping segments.
    pub fn synthetic(
        seed: u64,
        frames: usize,
        segment_duration: f64,
        chirp: &ChirpSpec,
        params: &ClutterParams,
    ) -> Result<Self> {
        let frame_len = (segment_duration * chirp.sample_rate).round() as usize;
        let samples =
            gen_clutter_synthetic(seed, frames as f64 * segment_duration, segment_duration, chirp, params)?;
        Self::new(samples, chirp.sample_rate, frame_len, "synthetic")
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Number of complete frames of `segment_len` samples.
    pub fn frames(&self, segment_len: usize) -> usize {
        if self.samples.len() < segment_len {
            0
        } else {
            (self.samples.len() - segment_len) / self.frame_stride + 1
        }
    }

    pub fn frame(&self, index: usize, segment_len: usize) -> Result<&[f64]> {
        let start = index * self.frame_stride;
        self.samples.get(start..start + segment_len).ok_or_else(|| {
            Error::param(format!(
                "clutter source too short for frame {index} ({segment_len} samples)"
            ))
        })
    }
}

/// Band-limited noise floor plus point-scatterer echoes, `segment_duration`
/// long per frame, frames concatenated.
pub fn gen_clutter_synthetic(
    seed: u64,
    duration: f64,
    segment_duration: f64,
    chirp: &ChirpSpec,
    params: &ClutterParams,
) -> Result<Vec<f64>> {
    chirp.validate()?;
    params.validate()?;
    if !(duration > 0.0 && segment_duration > 0.0) {
        return Err(Error::param("clutter duration must be positive"));
    }
    let fs = chirp.sample_rate;
    let frame_len = (segment_duration * fs).round() as usize;
    let frames = ((duration / segment_duration).round() as usize).max(1);
    let max_range = chirp.max_range(segment_duration);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let fft_len = frame_len.next_power_of_two();
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(fft_len);
    let inverse = planner.plan_fft_inverse(fft_len);
    let df = fs / fft_len as f64;
    let in_band = |q: usize| {
        let f = q.min(fft_len - q) as f64 * df;
        f >= chirp.f_min && f <= chirp.f_max
    };
    let band_fraction = (0..fft_len).filter(|&q| in_band(q)).count() as f64 / fft_len as f64;
    let noise_gain = if band_fraction > 0.0 {
        params.noise_rms / band_fraction.sqrt()
    } else {
        0.0
    };
    let gauss = Normal::new(0.0, 1.0).expect("unit normal");

    let count = |rng: &mut ChaCha8Rng, density: f64| -> usize {
        let mean = density * max_range;
        if mean > 0.0 {
            Poisson::new(mean).expect("positive mean").sample(rng) as usize
        } else {
            0
        }
    };
    let mut persistent: Vec<f64> = {
        let n = count(&mut rng, params.persistent_density);
        (0..n).map(|_| rng.random_range(0.0..max_range)).collect()
    };

    let mut out = Vec::with_capacity(frames * frame_len);
    for _ in 0..frames {
        let mut frame = vec![0.0; frame_len];
        if noise_gain > 0.0 {
            let mut buf: Vec<Complex<f64>> = (0..fft_len)
                .map(|_| Complex::new(gauss.sample(&mut rng), 0.0))
                .collect();
            forward.process(&mut buf);
            for (q, v) in buf.iter_mut().enumerate() {
                if !in_band(q) {
                    *v = Complex::new(0.0, 0.0);
                }
            }
            inverse.process(&mut buf);
            let scale = noise_gain / fft_len as f64;
            for (dst, v) in frame.iter_mut().zip(&buf) {
                *dst = v.re * scale;
            }
        }

        for r in persistent.iter_mut() {
            if params.scatterer_drift > 0.0 {
                *r = (*r + params.scatterer_drift * gauss.sample(&mut rng)).clamp(0.0, max_range);
            }
        }
        let transient_n = count(&mut rng, params.transient_density);
        let transient: Vec<f64> = (0..transient_n)
            .map(|_| rng.random_range(0.0..max_range))
            .collect();
        for &r in persistent.iter().chain(&transient) {
            let amp = rayleigh(&mut rng, params.scatterer_scale);
            add_delayed_chirp(&mut frame, chirp, 2.0 * r / chirp.sound_speed, amp);
        }
        out.extend_from_slice(&frame);
    }
    Ok(out)
}

fn rayleigh(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    let u: f64 = rng.random::<f64>();
    scale * (-2.0 * (1.0 - u).ln()).sqrt()
}

/// Adds `amp * s(t - delay)` to `frame`, evaluating the sweep analytically so
/// the delay need not be a whole number of samples.
fn add_delayed_chirp(frame: &mut [f64], chirp: &ChirpSpec, delay: f64, amp: f64) {
    let fs = chirp.sample_rate;
    let start = (delay * fs).ceil() as usize;
    let end = ((delay + chirp.duration) * fs).ceil() as usize;
    for k in start..end.min(frame.len()) {
        let t = k as f64 / fs - delay;
        if (0.0..chirp.duration).contains(&t) {
            frame[k] += amp * chirp.phase(t).cos();
        }
    }
}

/// Random-walk target ranges, reflected at the bounds of `range`.
pub fn gen_path(seed: u64, n_pings: usize, sigma_n: f64, range: (f64, f64)) -> Result<Vec<f64>> {
    let (lo, hi) = range;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::param(format!("invalid path range [{lo}, {hi}]")));
    }
    if !(sigma_n >= 0.0 && sigma_n.is_finite()) {
        return Err(Error::param("path step deviation must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut path = Vec::with_capacity(n_pings);
    if n_pings == 0 {
        return Ok(path);
    }
    let mut rho = rng.random_range(lo..hi);
    path.push(rho);
    let step = Normal::new(0.0, sigma_n.max(f64::MIN_POSITIVE)).expect("valid normal");
    for _ in 1..n_pings {
        rho += if sigma_n > 0.0 { step.sample(&mut rng) } else { 0.0 };
        while rho < lo || rho > hi {
            rho = if rho < lo { 2.0 * lo - rho } else { 2.0 * hi - rho };
        }
        path.push(rho);
    }
    Ok(path)
}

/// Impulse response with taps uniform in `[-1, 1]`, scaled to unit norm.
pub fn gen_impulse(seed: u64, taps: usize) -> Result<Vec<f64>> {
    if taps == 0 {
        return Err(Error::param("impulse response needs at least one tap"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let h: Vec<f64> = (0..taps).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            return Ok(h.into_iter().map(|v| v / norm).collect());
        }
    }
}

fn mean_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
    }
}

/// Amplitude factor that brings the target window to `scr_db` relative to
/// the mean clutter power.
pub fn set_scr(target_window: &[f64], clutter_reference: &[f64], scr_db: f64) -> Result<f64> {
    if clutter_reference.is_empty() {
        return Err(Error::param("empty clutter reference"));
    }
    let pc = mean_power(clutter_reference);
    if !(pc > 0.0) {
        return Err(Error::param("clutter reference has zero power"));
    }
    let pt = mean_power(target_window);
    if !(pt > 0.0) {
        return Err(Error::param("target window has zero power"));
    }
    Ok((10f64.powf(scr_db / 10.0) * pc / pt).sqrt())
}

/// Measured signal-to-clutter ratio in dB.
pub fn measure_scr(target_window: &[f64], clutter_reference: &[f64]) -> f64 {
    10.0 * (mean_power(target_window) / mean_power(clutter_reference)).log10()
}

/// Settings that define a family of scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub n_pings: usize,
    /// Ping repetition interval (s).
    pub t_pri: f64,
    /// Length of each ping record (s).
    pub segment_duration: f64,
    /// Standard deviation of the per-ping range step (m).
    pub sigma_n: f64,
    pub impulse_taps: usize,
    pub scr_db: f64,
    /// Fraction of pings that carry a target echo.
    pub valid_fraction: f64,
    pub has_target: bool,
    /// Add the echo to the clutter instead of replacing it.
    pub additive: bool,
    /// Closest target range (m).
    pub min_range: f64,
    pub clutter: ClutterParams,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_pings: 20,
            t_pri: 0.7,
            segment_duration: 0.090,
            sigma_n: 2.0,
            impulse_taps: 100,
            scr_db: -9.0,
            valid_fraction: 1.0,
            has_target: true,
            additive: false,
            min_range: 1.0,
            clutter: ClutterParams::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self, chirp: &ChirpSpec) -> Result<()> {
        chirp.validate()?;
        self.clutter.validate()?;
        if self.n_pings == 0 {
            return Err(Error::param("a scenario needs at least one ping"));
        }
        if !(self.t_pri > 0.0) {
            return Err(Error::param("T_PRI must be positive"));
        }
        if !(self.segment_duration > chirp.duration) {
            return Err(Error::param("ping segment must be longer than the pulse"));
        }
        if !(0.0..=1.0).contains(&self.valid_fraction) {
            return Err(Error::param("valid fraction must lie in [0, 1]"));
        }
        if !self.scr_db.is_finite() {
            return Err(Error::param("SCR must be finite"));
        }
        let (lo, hi) = self.range_limits(chirp);
        if !(lo >= 0.0 && lo < hi) {
            return Err(Error::param(format!("no room for a target path in [{lo}, {hi}] m")));
        }
        Ok(())
    }

    pub fn segment_len(&self, chirp: &ChirpSpec) -> usize {
        (self.segment_duration * chirp.sample_rate).round() as usize
    }

    /// Ranges at which the whole echo window fits in the record.
    pub fn range_limits(&self, chirp: &ChirpSpec) -> (f64, f64) {
        (
            self.min_range,
            chirp.sound_speed * (self.segment_duration - chirp.duration) / 2.0,
        )
    }
}

/// One seeded trial with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub config: ScenarioConfig,
    /// Target range per ping (m), ping `p` at index `p - 1`.
    pub path: Vec<f64>,
    pub impulse: Vec<f64>,
    /// Pings that carry a target echo.
    pub valid_pings: Vec<bool>,
    /// First clutter frame used by ping 1.
    pub clutter_start: usize,
    pub clutter_source: String,
    /// Echo amplitude factor realizing the configured SCR.
    pub echo_scale: f64,
}

impl Scenario {
    /// Draws the random parts of a trial and fixes the echo amplitude
    /// against the clutter of the whole block.
    pub fn generate(
        seed: u64,
        config: &ScenarioConfig,
        chirp: &ChirpSpec,
        clutter: &ClutterBank,
    ) -> Result<Self> {
        config.validate(chirp)?;
        if (clutter.sample_rate() - chirp.sample_rate).abs() > 1e-9 {
            return Err(Error::param("clutter and chirp sample rates differ"));
        }
        let seg_len = config.segment_len(chirp);
        let available = clutter.frames(seg_len);
        if available < config.n_pings {
            return Err(Error::param(format!(
                "clutter source holds {available} ping frames, {} needed",
                config.n_pings
            )));
        }
        let clutter_start = if available == config.n_pings {
            0
        } else {
            ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_CLUTTER_START))
                .random_range(0..=available - config.n_pings)
        };
        let path = gen_path(
            derive_seed(seed, STREAM_PATH),
            config.n_pings,
            config.sigma_n,
            config.range_limits(chirp),
        )?;
        let impulse = gen_impulse(derive_seed(seed, STREAM_IMPULSE), config.impulse_taps)?;
        let n_valid = if config.has_target {
            (config.valid_fraction * config.n_pings as f64).round() as usize
        } else {
            0
        };
        let mut valid_pings = vec![false; config.n_pings];
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_VALID));
        for i in index::sample(&mut rng, config.n_pings, n_valid) {
            valid_pings[i] = true;
        }

        let mut scenario = Self {
            seed,
            config: config.clone(),
            path,
            impulse,
            valid_pings,
            clutter_start,
            clutter_source: clutter.source().to_string(),
            echo_scale: 0.0,
        };
        if config.has_target {
            let window = scenario.unit_echo(chirp)?;
            let mut reference = Vec::with_capacity(config.n_pings * seg_len);
            for m in 0..config.n_pings {
                reference.extend_from_slice(clutter.frame(clutter_start + m, seg_len)?);
            }
            scenario.echo_scale = set_scr(&window[..chirp.replica_len()], &reference, config.scr_db)?;
        }
        Ok(scenario)
    }

    /// Synthetic clutter drawn from the scenario's own seed.
    pub fn synthetic_clutter(seed: u64, config: &ScenarioConfig, chirp: &ChirpSpec) -> Result<ClutterBank> {
        ClutterBank::synthetic(
            derive_seed(seed, STREAM_CLUTTER),
            config.n_pings,
            config.segment_duration,
            chirp,
            &config.clutter,
        )
    }

    /// `s * h` before amplitude scaling.
    pub fn unit_echo(&self, chirp: &ChirpSpec) -> Result<Vec<f64>> {
        let s = make_chirp(chirp)?;
        Ok(convolve(&s, &self.impulse))
    }

    pub fn is_valid(&self, ping: u32) -> bool {
        self.config.has_target
            && ping >= 1
            && self.valid_pings.get(ping as usize - 1).copied().unwrap_or(false)
    }

    /// Echo delay in samples for a ping.
    pub fn echo_lag(&self, ping: u32, chirp: &ChirpSpec) -> usize {
        chirp.range_to_lag(self.path[ping as usize - 1])
    }
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Received record for ping `m` (1-based).
///
/// The clutter frame is copied verbatim; on valid pings the window
/// `[T_m, T_m + T_s)` is overwritten by the scaled echo (or the full echo is
/// added when the scenario is additive).
pub fn synth_ping(
    scenario: &Scenario,
    m: u32,
    chirp: &ChirpSpec,
    clutter: &ClutterBank,
) -> Result<PingRecord> {
    let n = scenario.config.n_pings;
    if m == 0 || m as usize > n {
        return Err(Error::param(format!("ping {m} outside 1..={n}")));
    }
    let seg_len = scenario.config.segment_len(chirp);
    let mut samples = clutter
        .frame(scenario.clutter_start + m as usize - 1, seg_len)?
        .to_vec();
    if scenario.is_valid(m) {
        let echo = scenario.unit_echo(chirp)?;
        let start = scenario.echo_lag(m, chirp);
        let span = if scenario.config.additive {
            echo.len()
        } else {
            chirp.replica_len()
        };
        for (k, &e) in echo.iter().take(span).enumerate() {
            let Some(slot) = samples.get_mut(start + k) else { break };
            let v = scenario.echo_scale * e;
            if scenario.config.additive {
                *slot += v;
            } else {
                *slot = v;
            }
        }
    }
    PingRecord::new(m, samples, chirp.sample_rate)
}

/// All pings of a scenario.
pub fn synth_block(scenario: &Scenario, chirp: &ChirpSpec, clutter: &ClutterBank) -> Result<Vec<PingRecord>> {
    (1..=scenario.config.n_pings as u32)
        .map(|m| synth_ping(scenario, m, chirp, clutter))
        .collect()
}
