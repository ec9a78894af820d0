//! Activation and weight interchange files.
//!
//! `FLA1` (activations), all integers little-endian `u32` unless noted:
//!
//! ```text
//! "FLA1" version layer_index split n_samples n_filters spatial_per_filter n_labels
//! labels:   n_samples x u16
//! features: n_samples x n_filters x spatial_per_filter x f32   (sample, filter, slot)
//! ```
//!
//! `FLW1` (probe weights):
//!
//! ```text
//! "FLW1" version n_labels n_features
//! weights: n_labels x n_features x f32   (label-major)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FLA_MAGIC: [u8; 4] = *b"FLA1";
pub const FLW_MAGIC: [u8; 4] = *b"FLW1";
pub const FORMAT_VERSION: u32 = 1;

/// Bytes before the label block of an `FLA1` file.
pub const FLA_HEADER_LEN: u64 = 4 + 7 * 4;
/// Bytes before the weight block of an `FLW1` file.
pub const FLW_HEADER_LEN: u64 = 4 + 3 * 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn code(self) -> u32 {
        match self {
            Split::Train => 0,
            Split::Test => 1,
        }
    }

    fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(Split::Train),
            1 => Ok(Split::Test),
            other => Err(Error::InvalidSet(format!("unknown split code {other}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Post-pooling features of one layer together with the sample labels.
///
/// Row `n` of the feature matrix holds `n_filters * spatial_per_filter`
/// values, filter-major: filter `k` owns columns `k*S .. (k+1)*S`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSet {
    layer_index: u32,
    split: Split,
    n_labels: usize,
    n_filters: usize,
    spatial_per_filter: usize,
    labels: Vec<u16>,
    features: Vec<f32>,
}

impl ActivationSet {
    pub fn new(
        layer_index: u32,
        split: Split,
        n_labels: usize,
        n_filters: usize,
        spatial_per_filter: usize,
        labels: Vec<u16>,
        features: Vec<f32>,
    ) -> Result<Self> {
        let set = ActivationSet {
            layer_index,
            split,
            n_labels,
            n_filters,
            spatial_per_filter,
            labels,
            features,
        };
        set.validate()?;
        Ok(set)
    }

    fn validate(&self) -> Result<()> {
        if self.n_labels == 0 || self.n_labels > u16::MAX as usize + 1 {
            return Err(Error::InvalidSet(format!(
                "n_labels must be in 1..=65536, got {}",
                self.n_labels
            )));
        }
        if self.n_filters == 0 || self.spatial_per_filter == 0 {
            return Err(Error::InvalidSet(
                "n_filters and spatial_per_filter must be positive".into(),
            ));
        }
        let width = self.n_features();
        if self.features.len() != self.labels.len() * width {
            return Err(Error::InvalidSet(format!(
                "feature buffer has {} values, expected {} samples x {} columns",
                self.features.len(),
                self.labels.len(),
                width
            )));
        }
        if let Some((n, &l)) = self
            .labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l as usize >= self.n_labels)
        {
            return Err(Error::InvalidSet(format!(
                "label {l} of sample {n} is not below n_labels = {}",
                self.n_labels
            )));
        }
        if let Some(i) = self.features.iter().position(|v| v.is_nan() || *v < 0.0) {
            return Err(Error::NegativeFeature {
                sample: i / width,
                column: i % width,
                value: self.features[i],
            });
        }
        Ok(())
    }

    pub fn layer_index(&self) -> u32 {
        self.layer_index
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn n_filters(&self) -> usize {
        self.n_filters
    }

    pub fn spatial_per_filter(&self) -> usize {
        self.spatial_per_filter
    }

    /// Probe input width `N = K * S`.
    pub fn n_features(&self) -> usize {
        self.n_filters * self.spatial_per_filter
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn label(&self, sample: usize) -> usize {
        self.labels[sample] as usize
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn sample(&self, n: usize) -> &[f32] {
        let w = self.n_features();
        &self.features[n * w..(n + 1) * w]
    }

    /// Feature slots of filter `k` for sample `n`.
    pub fn filter_slots(&self, n: usize, k: usize) -> &[f32] {
        let s = self.spatial_per_filter;
        &self.sample(n)[k * s..(k + 1) * s]
    }

    /// Number of samples carrying each label.
    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_labels];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Exact size in bytes of this set once written as `FLA1`.
    pub fn encoded_len(&self) -> u64 {
        fla_file_len(self.n_samples(), self.n_filters, self.spatial_per_filter)
    }
}

/// Size of an `FLA1` file with the given dimensions.
pub fn fla_file_len(n_samples: usize, n_filters: usize, spatial: usize) -> u64 {
    let n = n_samples as u64;
    FLA_HEADER_LEN + 2 * n + 4 * n * n_filters as u64 * spatial as u64
}

fn header_u32(field: &'static str, value: usize) -> Result<u32> {
    u32::try_from(value).map_err(|_| Error::HeaderOverflow { field, value })
}

pub fn encode_activations(set: &ActivationSet, out: &mut impl Write) -> std::io::Result<()> {
    out.write_all(&FLA_MAGIC)?;
    // Header fields were range-checked by the caller.
    for v in [
        FORMAT_VERSION,
        set.layer_index,
        set.split.code(),
        set.n_samples() as u32,
        set.n_filters as u32,
        set.spatial_per_filter as u32,
        set.n_labels as u32,
    ] {
        out.write_all(&v.to_le_bytes())?;
    }
    for &l in &set.labels {
        out.write_all(&l.to_le_bytes())?;
    }
    for &f in &set.features {
        out.write_all(&f.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_activations(set: &ActivationSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if set.n_samples() == 0 {
        return Err(Error::EmptySet);
    }
    header_u32("n_samples", set.n_samples())?;
    header_u32("n_filters", set.n_filters)?;
    header_u32("spatial_per_filter", set.spatial_per_filter)?;
    header_u32("n_labels", set.n_labels)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    encode_activations(set, &mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

struct Cursor<R> {
    inner: R,
}

impl<R: Read> Cursor<R> {
    fn bytes<const N: usize>(&mut self) -> std::io::Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf)?;
        Ok(buf)
    }

    fn u32(&mut self) -> std::io::Result<u32> {
        self.bytes::<4>().map(u32::from_le_bytes)
    }
}

fn check_len(expected: u64, actual: u64) -> Result<()> {
    if actual < expected {
        Err(Error::Truncated { expected, actual })
    } else if actual > expected {
        Err(Error::TrailingData { expected, actual })
    } else {
        Ok(())
    }
}

fn check_magic(found: [u8; 4], expected: [u8; 4]) -> Result<()> {
    if found != expected {
        return Err(Error::BadMagic { expected, found });
    }
    Ok(())
}

pub fn read_activations(path: impl AsRef<Path>) -> Result<ActivationSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let actual = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let io = |e| Error::io(path, e);

    if actual < FLA_HEADER_LEN {
        return Err(if actual >= 4 {
            let mut magic = [0u8; 4];
            File::open(path)
                .and_then(|mut f| f.read_exact(&mut magic))
                .map_err(io)?;
            check_magic(magic, FLA_MAGIC)
                .err()
                .unwrap_or(Error::Truncated {
                    expected: FLA_HEADER_LEN,
                    actual,
                })
        } else {
            Error::Truncated {
                expected: FLA_HEADER_LEN,
                actual,
            }
        });
    }

    let mut cur = Cursor {
        inner: BufReader::new(file),
    };
    check_magic(cur.bytes::<4>().map_err(io)?, FLA_MAGIC)?;
    let version = cur.u32().map_err(io)?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch(version));
    }
    let layer_index = cur.u32().map_err(io)?;
    let split = Split::from_code(cur.u32().map_err(io)?)?;
    let n_samples = cur.u32().map_err(io)? as usize;
    let n_filters = cur.u32().map_err(io)? as usize;
    let spatial = cur.u32().map_err(io)? as usize;
    let n_labels = cur.u32().map_err(io)? as usize;

    check_len(fla_file_len(n_samples, n_filters, spatial), actual)?;
    if n_samples == 0 {
        return Err(Error::EmptySet);
    }

    let mut raw = vec![0u8; n_samples * 2];
    cur.inner.read_exact(&mut raw).map_err(io)?;
    let labels = raw
        .chunks_exact(2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .collect();

    let n_values = n_samples * n_filters * spatial;
    let mut features = Vec::with_capacity(n_values);
    let mut chunk = vec![0u8; 4 * 16 * 1024];
    let mut remaining = n_values;
    while remaining > 0 {
        let take = remaining.min(chunk.len() / 4);
        let buf = &mut chunk[..take * 4];
        cur.inner.read_exact(buf).map_err(io)?;
        features.extend(
            buf.chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
        );
        remaining -= take;
    }

    ActivationSet::new(
        layer_index,
        split,
        n_labels,
        n_filters,
        spatial,
        labels,
        features,
    )
}

/// Bias-free linear read-out: an `n_labels x n_features` matrix, label-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeWeights {
    n_labels: usize,
    n_features: usize,
    weights: Vec<f64>,
}

impl ProbeWeights {
    pub fn new(n_labels: usize, n_features: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != n_labels * n_features {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for a {n_labels}x{n_features} probe",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidParameter(
                "probe weights must be finite".into(),
            ));
        }
        Ok(ProbeWeights {
            n_labels,
            n_features,
            weights,
        })
    }

    pub fn zeros(n_labels: usize, n_features: usize) -> Self {
        ProbeWeights {
            n_labels,
            n_features,
            weights: vec![0.0; n_labels * n_features],
        }
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn get(&self, label: usize, feature: usize) -> f64 {
        self.weights[label * self.n_features + feature]
    }

    pub fn row(&self, label: usize) -> &[f64] {
        &self.weights[label * self.n_features..(label + 1) * self.n_features]
    }

    /// Multiplies every weight by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        ProbeWeights {
            n_labels: self.n_labels,
            n_features: self.n_features,
            weights: self.weights.iter().map(|w| w * c).collect(),
        }
    }

    /// Output fields `W x` for one feature row.
    pub fn fields(&self, x: &[f32]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_features);
        (0..self.n_labels)
            .map(|j| {
                self.row(j)
                    .iter()
                    .zip(x)
                    .map(|(w, &v)| w * v as f64)
                    .sum()
            })
            .collect()
    }

    pub fn check_compatible(&self, set: &ActivationSet) -> Result<()> {
        if self.n_labels != set.n_labels() || self.n_features != set.n_features() {
            return Err(Error::DimensionMismatch(format!(
                "probe is {}x{}, activations have {} labels and {} features",
                self.n_labels,
                self.n_features,
                set.n_labels(),
                set.n_features()
            )));
        }
        Ok(())
    }
}

pub fn write_weights(w: &ProbeWeights, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    header_u32("n_labels", w.n_labels)?;
    header_u32("n_features", w.n_features)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        out.write_all(&FLW_MAGIC)?;
        for v in [FORMAT_VERSION, w.n_labels as u32, w.n_features as u32] {
            out.write_all(&v.to_le_bytes())?;
        }
        for &x in &w.weights {
            out.write_all(&(x as f32).to_le_bytes())?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

/// Reads an `FLW1` file. Weights are stored as `f32`, so a written-then-read
/// probe equals the original rounded to single precision.
pub fn read_weights(path: impl AsRef<Path>) -> Result<ProbeWeights> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let actual = bytes.len() as u64;
    if actual < FLW_HEADER_LEN {
        if actual >= 4 {
            check_magic(bytes[..4].try_into().unwrap(), FLW_MAGIC)?;
        }
        return Err(Error::Truncated {
            expected: FLW_HEADER_LEN,
            actual,
        });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    check_magic(bytes[..4].try_into().unwrap(), FLW_MAGIC)?;
    let version = word(4);
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch(version));
    }
    let n_labels = word(8) as usize;
    let n_features = word(12) as usize;
    check_len(
        FLW_HEADER_LEN + 4 * n_labels as u64 * n_features as u64,
        actual,
    )?;
    let weights = bytes[FLW_HEADER_LEN as usize..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    ProbeWeights::new(n_labels, n_features, weights)
}
