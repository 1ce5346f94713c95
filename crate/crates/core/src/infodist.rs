//! Histogram estimates of entropy, mutual information and normalized
//! information distance between two spectra.
//!
//! Each spectrum is treated as `M` samples of a value. Values are quantized
//! into `B` equal-width bins over `[0, max]` of that spectrum; the joint
//! statistics come from the `B x B` histogram of the paired quantized values.
//! Marginal and joint entropies use the same quantization, which keeps the
//! mutual information non-negative.

use crate::error::{Error, Result};

/// Default value-quantization bin count.
pub const DEFAULT_VALUE_BINS: usize = 16;

/// A pair of equal-length spectra and the quantization used to compare them.
#[derive(Debug, Clone, Copy)]
pub struct SpectrumPair<'a> {
    pub first: &'a [f64],
    pub second: &'a [f64],
    pub bins: usize,
}

impl<'a> SpectrumPair<'a> {
    pub fn new(first: &'a [f64], second: &'a [f64], bins: usize) -> Result<Self> {
        if first.len() != second.len() {
            return Err(Error::param(format!(
                "spectrum lengths differ: {} vs {}",
                first.len(),
                second.len()
            )));
        }
        if first.is_empty() {
            return Err(Error::param("empty spectra"));
        }
        if bins < 2 {
            return Err(Error::param("at least two value bins are required"));
        }
        Ok(Self { first, second, bins })
    }

    fn quantized(&self) -> Result<(Quantized, Quantized)> {
        Ok((
            Quantized::new(self.first, self.bins)?,
            Quantized::new(self.second, self.bins)?,
        ))
    }
}

/// A spectrum reduced to value-bin indices, plus its marginal entropy.
///
/// Quantizing once per spectrum lets an `N x N` distance matrix do only the
/// joint histogram per pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantized {
    codes: Vec<u16>,
    bins: usize,
    entropy: f64,
}

impl Quantized {
    pub fn new(values: &[f64], bins: usize) -> Result<Self> {
        if bins < 2 || bins > u16::MAX as usize {
            return Err(Error::param(format!("unsupported value bin count {bins}")));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::param("spectrum entries must be finite and non-negative"));
        }
        let max = values.iter().copied().fold(0.0_f64, f64::max);
        let codes: Vec<u16> = values
            .iter()
            .map(|&v| {
                if max > 0.0 {
                    ((v / max * bins as f64).floor() as usize).min(bins - 1) as u16
                } else {
                    0
                }
            })
            .collect();
        let mut counts = vec![0u32; bins];
        for &c in &codes {
            counts[c as usize] += 1;
        }
        let entropy = entropy_of_counts(&mut counts, codes.len());
        Ok(Self {
            codes,
            bins,
            entropy,
        })
    }

    /// Marginal entropy of the quantized values (bits).
    pub fn entropy(&self) -> f64 {
        self.entropy
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Joint entropy with another quantized spectrum of the same shape.
    pub fn joint_entropy(&self, other: &Quantized) -> Result<f64> {
        if self.codes.len() != other.codes.len() || self.bins != other.bins {
            return Err(Error::param("quantized spectra are not comparable"));
        }
        let b = self.bins;
        let mut cells = vec![0u32; b * b];
        for (&x, &y) in self.codes.iter().zip(&other.codes) {
            cells[x as usize * b + y as usize] += 1;
        }
        Ok(entropy_of_counts(&mut cells, self.codes.len()))
    }

    pub fn mutual_information(&self, other: &Quantized) -> Result<f64> {
        let joint = self.joint_entropy(other)?;
        let upper = self.entropy.min(other.entropy);
        Ok((self.entropy + other.entropy - joint).clamp(0.0, upper))
    }

    /// Normalized information distance in `[0, 1]`. Two zero-entropy
    /// spectra are at distance 0.
    pub fn nid(&self, other: &Quantized) -> Result<f64> {
        let denom = self.entropy.max(other.entropy);
        let mi = self.mutual_information(other)?;
        if denom <= 0.0 {
            return Ok(0.0);
        }
        Ok((1.0 - mi / denom).clamp(0.0, 1.0))
    }
}

/// Entropy in bits of a histogram. The counts are sorted first so the
/// result depends only on the multiset of counts (a transposed joint
/// histogram gives a bit-identical value).
fn entropy_of_counts(counts: &mut [u32], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    counts.sort_unstable();
    let n = total as f64;
    let mut h = 0.0;
    for &c in counts.iter().filter(|&&c| c > 0) {
        let p = c as f64 / n;
        h -= p * p.log2();
    }
    h.max(0.0)
}

pub fn joint_entropy(pair: &SpectrumPair<'_>) -> Result<f64> {
    let (a, b) = pair.quantized()?;
    a.joint_entropy(&b)
}

/// `I = H_i + H_j - H_ij` with histogram-consistent marginals.
pub fn mutual_information(pair: &SpectrumPair<'_>) -> Result<f64> {
    let (a, b) = pair.quantized()?;
    a.mutual_information(&b)
}

/// `NID = 1 - I / max(H_i, H_j)`.
pub fn nid(pair: &SpectrumPair<'_>) -> Result<f64> {
    let (a, b) = pair.quantized()?;
    a.nid(&b)
}

/// Marginal entropy of one spectrum under the value quantization.
pub fn marginal_entropy(values: &[f64], bins: usize) -> Result<f64> {
    Ok(Quantized::new(values, bins)?.entropy())
}
