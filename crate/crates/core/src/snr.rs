//! Signal-to-noise account of layer-level classification.
//!
//! An input of label `y` drives a unit field on every label of each filter
//! cluster that contains `y` (the signal on `y`). Competing labels collect
//! fields from the clusters they share with `y`, offset by the mean
//! sub-threshold field `nu` on the filters where they are not co-members.

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::filters::ClusterSet;

fn finite_or_null<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_some(&crate::round_sig6(*v))
    } else {
        s.serialize_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnrParams {
    pub n_filters: usize,
    pub cluster_size: usize,
    pub n_labels: usize,
    /// Mean sub-threshold field, in units of the unit field.
    pub mean_subthreshold_field: f64,
    pub unit_field: f64,
}

impl SnrParams {
    pub fn new(n_filters: usize, cluster_size: usize, n_labels: usize, nu: f64) -> Self {
        SnrParams {
            n_filters,
            cluster_size,
            n_labels,
            mean_subthreshold_field: nu,
            unit_field: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.n_filters == 0 {
            return bad("at least one filter is required");
        }
        if self.n_labels < 2 {
            return bad("at least two labels are required");
        }
        if self.cluster_size == 0 || self.cluster_size > self.n_labels {
            return bad("cluster size must be in 1..=n_labels");
        }
        if self.unit_field.is_nan() || self.unit_field <= 0.0 || !self.mean_subthreshold_field.is_finite() {
            return bad("unit field must be positive and nu finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnrReport {
    pub signal: f64,
    pub noise_per_other_label: f64,
    pub negative_correction: f64,
    /// `+inf` when the noise denominator is not positive, see `unbounded`.
    #[serde(serialize_with = "finite_or_null")]
    pub ratio: f64,
    pub unbounded: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
    /// Corrected noise per competing label; `None` at the input label.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub per_label_noise: Vec<Option<f64>>,
}

fn ratio(signal: f64, denom: f64) -> (f64, bool) {
    if denom > 0.0 {
        (signal / denom, false)
    } else {
        (f64::INFINITY, true)
    }
}

/// Closed form for `K` filters with one size-`s` cluster each, labels
/// spread evenly over the clusters.
pub fn idealized_snr(p: &SnrParams) -> Result<SnrReport> {
    p.validate()?;
    let k = p.n_filters as f64;
    let s = p.cluster_size as f64;
    let l = p.n_labels as f64;
    let signal = k * s / l * p.unit_field;
    let noise = signal * (s - 1.0) / (l - 1.0);
    let correction = (signal - noise) * p.mean_subthreshold_field;
    let (ratio, unbounded) = ratio(signal, noise + correction);
    Ok(SnrReport {
        signal,
        noise_per_other_label: noise,
        negative_correction: correction,
        ratio,
        unbounded,
        label: None,
        per_label_noise: Vec::new(),
    })
}

/// Counts over measured cluster sets for input label `label`.
pub fn empirical_snr(
    cluster_sets: &[ClusterSet],
    n_labels: usize,
    label: usize,
    nu: f64,
) -> Result<SnrReport> {
    if label >= n_labels || n_labels < 2 {
        return Err(Error::InvalidParameter(format!(
            "label {label} with {n_labels} labels"
        )));
    }
    let mut signal = 0usize;
    let mut shared = vec![0usize; n_labels];
    for cs in cluster_sets {
        if let Some(cl) = cs.cluster_of(label) {
            signal += 1;
            for &z in cl {
                if z >= n_labels {
                    return Err(Error::InvalidParameter(format!(
                        "cluster label {z} >= {n_labels}"
                    )));
                }
                shared[z] += 1;
            }
        }
    }
    let signal_f = signal as f64;
    let corrected = |z: usize| shared[z] as f64 + nu * (signal_f - shared[z] as f64);
    let worst = (0..n_labels)
        .filter(|&z| z != label)
        .fold(None, |best: Option<usize>, z| match best {
            Some(b) if corrected(b) >= corrected(z) => Some(b),
            _ => Some(z),
        })
        .expect("at least two labels");
    let noise = shared[worst] as f64;
    let correction = nu * (signal_f - noise);
    let (ratio, unbounded) = ratio(signal_f, noise + correction);
    Ok(SnrReport {
        signal: signal_f,
        noise_per_other_label: noise,
        negative_correction: correction,
        ratio,
        unbounded,
        label: Some(label),
        per_label_noise: (0..n_labels)
            .map(|z| (z != label).then(|| corrected(z)))
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerSnrSummary {
    pub layer_index: u32,
    pub nu: f64,
    pub mean_signal: f64,
    /// Mean over labels with a bounded ratio.
    pub mean_ratio: Option<f64>,
    pub min_ratio: Option<f64>,
    pub n_unbounded: usize,
    pub per_label: Vec<SnrReport>,
}

pub fn layer_snr(
    layer_index: u32,
    cluster_sets: &[ClusterSet],
    n_labels: usize,
    nu: f64,
) -> Result<LayerSnrSummary> {
    let per_label = (0..n_labels)
        .map(|y| empirical_snr(cluster_sets, n_labels, y, nu))
        .collect::<Result<Vec<_>>>()?;
    let bounded: Vec<f64> = per_label
        .iter()
        .filter(|r| !r.unbounded)
        .map(|r| r.ratio)
        .collect();
    Ok(LayerSnrSummary {
        layer_index,
        nu,
        mean_signal: per_label.iter().map(|r| r.signal).sum::<f64>() / n_labels as f64,
        mean_ratio: (!bounded.is_empty()).then(|| bounded.iter().sum::<f64>() / bounded.len() as f64),
        min_ratio: bounded.iter().cloned().reduce(f64::min),
        n_unbounded: per_label.len() - bounded.len(),
        per_label,
    })
}
