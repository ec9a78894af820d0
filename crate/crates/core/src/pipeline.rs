//! Per-filter and per-layer analysis built from the individual operations.
//!
//! Filters are analyzed independently (in parallel on the global rayon
//! pool). A filter whose field matrix has no positive element cannot be
//! max-normalized; it is reported with `normalized == false` and left out of
//! the layer aggregates.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::filters::{
    clip, decision_matrix, field_matrix, find_clusters, permute_blocks, single_filter_fields,
    BlockPermutation, ClipMatrix, ClusterSet, DecisionMatrix, FieldMatrix, ScanOrder,
};
use crate::snr::{layer_snr, LayerSnrSummary};
use crate::stats::{
    field_histograms, label_occurrences, layer_statistics, threshold_sweep, FieldHistograms,
    LabelOccurrences, LayerStatistics, SweepPoint, DEFAULT_HISTOGRAM_BINS,
};
use crate::store::{ActivationSet, ProbeWeights};

#[derive(Debug, Clone, Serialize)]
pub struct FilterReport {
    pub filter_id: usize,
    /// Which trained probe the filter was read through, when pooling.
    pub sample: usize,
    pub normalized: bool,
    pub decision: DecisionMatrix,
    pub field: FieldMatrix,
    pub clip: ClipMatrix,
    pub clusters: ClusterSet,
    pub clusters_reverse: ClusterSet,
    pub permutation: BlockPermutation,
}

pub fn analyze_filter(
    w: &ProbeWeights,
    set: &ActivationSet,
    filter_id: usize,
    theta: f64,
) -> Result<FilterReport> {
    let fields = single_filter_fields(w, set, filter_id)?;
    let decision = decision_matrix(&fields, set.labels())?;
    let field = field_matrix(&fields, set.labels())?;
    let clip = if field.normalized {
        clip(&field, theta)?
    } else {
        ClipMatrix::from_fn(set.n_labels(), |_, _| false)
    };
    let clusters = find_clusters(&clip, ScanOrder::Forward);
    let clusters_reverse = find_clusters(&clip, ScanOrder::Reverse);
    let permutation = permute_blocks(&clip, &clusters)?;
    Ok(FilterReport {
        filter_id,
        sample: 0,
        normalized: field.normalized,
        decision,
        field,
        clip,
        clusters,
        clusters_reverse,
        permutation,
    })
}

/// Analyzes every filter of the layer, in filter order.
pub fn analyze_filters(w: &ProbeWeights, set: &ActivationSet, theta: f64) -> Result<Vec<FilterReport>> {
    w.check_compatible(set)?;
    (0..set.n_filters())
        .into_par_iter()
        .map(|k| analyze_filter(w, set, k, theta))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct LayerSummary {
    pub layer_index: u32,
    pub theta: f64,
    pub n_unnormalized: usize,
    pub stats: LayerStatistics,
    pub stats_reverse: LayerStatistics,
    pub occurrences: LabelOccurrences,
    pub histograms: FieldHistograms,
    pub snr: LayerSnrSummary,
    pub sweep: Vec<SweepPoint>,
}

pub fn summarize_layer(
    layer_index: u32,
    n_labels: usize,
    reports: &[FilterReport],
    theta: f64,
    sweep_thetas: &[f64],
) -> Result<LayerSummary> {
    let live: Vec<&FilterReport> = reports.iter().filter(|r| r.normalized).collect();
    if live.is_empty() {
        return Err(crate::Error::EmptyInput("normalizable filters"));
    }
    let forward: Vec<ClusterSet> = live.iter().map(|r| r.clusters.clone()).collect();
    let reverse: Vec<ClusterSet> = live.iter().map(|r| r.clusters_reverse.clone()).collect();
    let fields: Vec<FieldMatrix> = live.iter().map(|r| r.field.clone()).collect();
    let histograms = field_histograms(&fields, &forward, theta, DEFAULT_HISTOGRAM_BINS)?;
    let nu = histograms.cluster_rows.mean.unwrap_or(0.0);
    Ok(LayerSummary {
        layer_index,
        theta,
        n_unnormalized: reports.len() - live.len(),
        stats: layer_statistics(layer_index, &forward)?,
        stats_reverse: layer_statistics(layer_index, &reverse)?,
        occurrences: label_occurrences(&forward, n_labels)?,
        snr: layer_snr(layer_index, &forward, n_labels, nu)?,
        histograms,
        sweep: threshold_sweep(layer_index, &fields, sweep_thetas)?,
    })
}
