//! Layer-level aggregation of per-filter cluster analyses.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::filters::{clip, find_clusters, ClusterSet, FieldMatrix, ScanOrder};

pub const DEFAULT_HISTOGRAM_BINS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerStatistics {
    pub layer_index: u32,
    pub n_filters: usize,
    pub av_noise: f64,
    pub av_clusters_per_filter: f64,
    /// Mean size over all clusters of the layer; 0 when there are none.
    pub av_cluster_size: f64,
    /// Cluster size to fraction of all clusters with that size.
    pub size_fractions: BTreeMap<usize, f64>,
}

/// Filters from several trained samples of the same layer are pooled by
/// concatenating their cluster sets before calling this.
pub fn layer_statistics(layer_index: u32, cluster_sets: &[ClusterSet]) -> Result<LayerStatistics> {
    if cluster_sets.is_empty() {
        return Err(Error::EmptyInput("cluster sets"));
    }
    let k = cluster_sets.len() as f64;
    let mut by_size: BTreeMap<usize, usize> = BTreeMap::new();
    let mut total_noise = 0usize;
    for cs in cluster_sets {
        total_noise += cs.noise_count;
        for s in cs.sizes() {
            *by_size.entry(s).or_default() += 1;
        }
    }
    let n_clusters: usize = by_size.values().sum();
    let size_sum: usize = by_size.iter().map(|(s, c)| s * c).sum();
    let size_fractions = by_size
        .iter()
        .map(|(&s, &c)| (s, c as f64 / n_clusters as f64))
        .collect();
    Ok(LayerStatistics {
        layer_index,
        n_filters: cluster_sets.len(),
        av_noise: total_noise as f64 / k,
        av_clusters_per_filter: n_clusters as f64 / k,
        av_cluster_size: if n_clusters == 0 {
            0.0
        } else {
            size_sum as f64 / n_clusters as f64
        },
        size_fractions,
    })
}

/// Expected number of clusters holding a given label under perfect
/// equalization: `K * c * s / L`.
pub fn expected_occurrence(n_filters: f64, clusters_per_filter: f64, av_size: f64, n_labels: f64) -> f64 {
    n_filters * clusters_per_filter * av_size / n_labels
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelOccurrences {
    pub counts: Vec<usize>,
    pub expected: f64,
}

pub fn label_occurrences(cluster_sets: &[ClusterSet], n_labels: usize) -> Result<LabelOccurrences> {
    let mut counts = vec![0usize; n_labels];
    let mut n_clusters = 0usize;
    for cs in cluster_sets {
        for cl in &cs.clusters {
            n_clusters += 1;
            for &l in cl {
                if l >= n_labels {
                    return Err(Error::InvalidParameter(format!(
                        "cluster label {l} >= {n_labels}"
                    )));
                }
                counts[l] += 1;
            }
        }
    }
    let expected = if cluster_sets.is_empty() || n_clusters == 0 {
        0.0
    } else {
        let k = cluster_sets.len() as f64;
        let size_sum: usize = counts.iter().sum();
        expected_occurrence(
            k,
            n_clusters as f64 / k,
            size_sum as f64 / n_clusters as f64,
            n_labels as f64,
        )
    };
    Ok(LabelOccurrences { counts, expected })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinSpec {
    pub lo: f64,
    pub hi: f64,
    pub n_bins: usize,
}

impl BinSpec {
    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.n_bins as f64
    }

    pub fn bin_of(&self, v: f64) -> usize {
        let w = self.width();
        if w <= 0.0 {
            return self.n_bins - 1;
        }
        (((v - self.lo) / w).floor().max(0.0) as usize).min(self.n_bins - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub counts: Vec<usize>,
    pub n: usize,
    pub mean: Option<f64>,
}

impl Histogram {
    fn build(values: &[f64], bins: &BinSpec) -> Self {
        let mut counts = vec![0; bins.n_bins];
        for &v in values {
            counts[bins.bin_of(v)] += 1;
        }
        Histogram {
            counts,
            n: values.len(),
            mean: (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64),
        }
    }
}

/// Sub-threshold elements of normalized field matrices, split by whether the
/// row label belongs to one of that filter's clusters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldHistograms {
    pub theta: f64,
    pub bins: BinSpec,
    pub cluster_rows: Histogram,
    pub non_cluster_rows: Histogram,
}

/// Elements `<= theta` of each matrix, as (cluster-row, non-cluster-row).
pub fn sub_threshold_elements(
    field_matrices: &[FieldMatrix],
    cluster_sets: &[ClusterSet],
    theta: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if field_matrices.len() != cluster_sets.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} field matrices for {} cluster sets",
            field_matrices.len(),
            cluster_sets.len()
        )));
    }
    let mut inside = Vec::new();
    let mut outside = Vec::new();
    for (fm, cs) in field_matrices.iter().zip(cluster_sets) {
        if !fm.normalized {
            return Err(Error::Unnormalized);
        }
        for (i, row) in fm.values.iter().enumerate() {
            let dst = if cs.contains(i) { &mut inside } else { &mut outside };
            dst.extend(row.iter().copied().filter(|&v| v <= theta));
        }
    }
    Ok((inside, outside))
}

pub fn field_histograms(
    field_matrices: &[FieldMatrix],
    cluster_sets: &[ClusterSet],
    theta: f64,
    n_bins: usize,
) -> Result<FieldHistograms> {
    if n_bins == 0 {
        return Err(Error::InvalidParameter("histogram needs at least one bin".into()));
    }
    let (inside, outside) = sub_threshold_elements(field_matrices, cluster_sets, theta)?;
    let lo = inside
        .iter()
        .chain(&outside)
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let bins = BinSpec {
        lo: if lo.is_finite() { lo } else { theta },
        hi: theta,
        n_bins,
    };
    Ok(FieldHistograms {
        theta,
        bins,
        cluster_rows: Histogram::build(&inside, &bins),
        non_cluster_rows: Histogram::build(&outside, &bins),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub theta: f64,
    pub above_threshold: usize,
    pub stats: LayerStatistics,
}

/// Reruns clip, forward cluster scan and layer statistics for each threshold.
pub fn threshold_sweep(
    layer_index: u32,
    field_matrices: &[FieldMatrix],
    thetas: &[f64],
) -> Result<Vec<SweepPoint>> {
    thetas
        .iter()
        .map(|&theta| {
            let mut above = 0;
            let sets = field_matrices
                .iter()
                .map(|fm| {
                    let c = clip(fm, theta)?;
                    above += c.count_ones();
                    Ok(find_clusters(&c, ScanOrder::Forward))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SweepPoint {
                theta,
                above_threshold: above,
                stats: layer_statistics(layer_index, &sets)?,
            })
        })
        .collect()
}

/// `lo, lo+step, ...` up to and including `hi` (within rounding).
pub fn theta_range(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !lo.is_finite() || !hi.is_finite() || step.is_nan() || step <= 0.0 || lo > hi {
        return Err(Error::InvalidParameter(format!(
            "bad threshold range {lo}:{hi}:{step}"
        )));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| crate::round_sig6(lo + step * i as f64)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::ClipMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set_of(n: usize, clusters: Vec<Vec<usize>>) -> ClusterSet {
        let c = ClipMatrix::from_fn(n, |i, j| clusters.iter().any(|cl| cl.contains(&i) && cl.contains(&j)));
        ClusterSet::from_clusters(&c, clusters, ScanOrder::Forward)
    }

    #[test]
    fn single_filter_stats() {
        let s = layer_statistics(13, &[set_of(10, vec![vec![1, 5, 8]])]).unwrap();
        assert_eq!(s.av_noise, 0.0);
        assert_eq!(s.av_clusters_per_filter, 1.0);
        assert_eq!(s.av_cluster_size, 3.0);
        assert_eq!(s.size_fractions, BTreeMap::from([(3, 1.0)]));
        assert!(layer_statistics(1, &[]).is_err());
    }

    #[test]
    fn expected_occurrence_values() {
        assert!((expected_occurrence(512.0, 1.0, 3.0, 10.0) - 153.6).abs() < 1e-12);
        assert!((expected_occurrence(256.0, 1.3, 1.66, 10.0) - 55.2448).abs() < 1e-9);
        assert_eq!(expected_occurrence(10.0, 1.0, 10.0, 10.0), 10.0);
    }

    #[test]
    fn occurrence_single_label() {
        let o = label_occurrences(&[set_of(10, vec![vec![0]])], 10).unwrap();
        assert_eq!(o.counts, vec![1, 0, 0, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(o.expected, 0.1);
    }

    fn random_sets(seed: u64, k: usize, n: usize) -> Vec<ClusterSet> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..k)
            .map(|_| {
                let bits: Vec<bool> = (0..n * n).map(|_| rng.gen_bool(0.5)).collect();
                let c = ClipMatrix::from_fn(n, |i, j| bits[i * n + j]);
                find_clusters(&c, ScanOrder::Forward)
            })
            .collect()
    }

    #[test]
    fn counting_identity_and_size_reconstruction() {
        for seed in 0..20 {
            let sets = random_sets(seed, 30, 10);
            let occ = label_occurrences(&sets, 10).unwrap();
            let total: usize = sets.iter().flat_map(|s| s.sizes()).sum();
            assert_eq!(occ.counts.iter().sum::<usize>(), total);
            let st = layer_statistics(1, &sets).unwrap();
            let recon: f64 = st.size_fractions.iter().map(|(&s, f)| s as f64 * f).sum();
            assert!((recon - st.av_cluster_size).abs() < 1e-9);
            let fsum: f64 = st.size_fractions.values().sum();
            assert!((fsum - 1.0).abs() < 1e-9);
            assert!((occ.expected * 10.0 - total as f64).abs() < 1e-9);
        }
    }

    fn matrix(vals: Vec<Vec<f64>>) -> FieldMatrix {
        FieldMatrix::from_values(vals).unwrap()
    }

    #[test]
    fn cluster_row_histogram_mean() {
        let mut vals = vec![vec![-0.1; 10]; 10];
        for &i in &[1, 5, 8] {
            for &j in &[1, 5, 8] {
                vals[i][j] = 1.0;
            }
        }
        let fm = matrix(vals);
        let cs = set_of(10, vec![vec![1, 5, 8]]);
        let h = field_histograms(&[fm], &[cs], 0.3, 50).unwrap();
        assert_eq!(h.cluster_rows.n, 3 * 7);
        assert!((h.cluster_rows.mean.unwrap() + 0.1).abs() < 1e-12);
        assert_eq!(h.non_cluster_rows.n, 70);
        assert_eq!(h.bins.lo, -0.1);
    }

    #[test]
    fn full_clusters_leave_no_non_cluster_rows() {
        let fm = matrix(vec![vec![1.0; 10]; 10]);
        let cs = set_of(10, vec![(0..10).collect()]);
        let h = field_histograms(&[fm], &[cs], 0.3, 50).unwrap();
        assert_eq!(h.non_cluster_rows.n, 0);
        assert_eq!(h.non_cluster_rows.mean, None);
        assert!(field_histograms(&[], &[set_of(2, vec![])], 0.3, 50).is_err());
    }

    #[test]
    fn histogram_matches_element_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let theta = 0.4;
        let fms: Vec<FieldMatrix> = (0..8)
            .map(|_| matrix((0..6).map(|_| (0..6).map(|_| rng.gen_range(-0.5..1.0)).collect()).collect()))
            .collect();
        let sets: Vec<ClusterSet> = fms
            .iter()
            .map(|fm| find_clusters(&clip(fm, theta).unwrap(), ScanOrder::Forward))
            .collect();
        let n_bins = 7;
        let h = field_histograms(&fms, &sets, theta, n_bins).unwrap();

        let mut all = Vec::new();
        let mut want_in = vec![0usize; n_bins];
        let mut want_out = vec![0usize; n_bins];
        for (fm, cs) in fms.iter().zip(&sets) {
            for i in 0..6 {
                for j in 0..6 {
                    let v = fm.values[i][j];
                    if v <= theta {
                        all.push((v, cs.clusters.iter().any(|c| c.contains(&i))));
                    }
                }
            }
        }
        let lo = all.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let w = (theta - lo) / n_bins as f64;
        for (v, inside) in all {
            let mut b = 0;
            while b + 1 < n_bins && v >= lo + w * (b + 1) as f64 {
                b += 1;
            }
            if inside {
                want_in[b] += 1;
            } else {
                want_out[b] += 1;
            }
        }
        assert_eq!(h.cluster_rows.counts, want_in);
        assert_eq!(h.non_cluster_rows.counts, want_out);
    }

    #[test]
    fn sweep_monotone_and_empty_at_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fms: Vec<FieldMatrix> = (0..20)
            .map(|_| matrix((0..10).map(|_| (0..10).map(|_| rng.gen_range(-0.3..1.0)).collect()).collect()))
            .collect();
        let thetas = theta_range(0.1, 1.0, 0.05).unwrap();
        assert_eq!(thetas.len(), 19);
        assert_eq!(*thetas.last().unwrap(), 1.0);
        let sweep = threshold_sweep(10, &fms, &thetas).unwrap();
        for w in sweep.windows(2) {
            assert!(w[1].above_threshold <= w[0].above_threshold);
        }
        let last = sweep.last().unwrap();
        assert_eq!(last.above_threshold, 0);
        assert_eq!(last.stats.av_clusters_per_filter, 0.0);
    }

    #[test]
    fn theta_range_validation() {
        assert_eq!(theta_range(0.3, 0.6, 0.1).unwrap(), vec![0.3, 0.4, 0.5, 0.6]);
        assert!(theta_range(0.6, 0.3, 0.1).is_err());
        assert!(theta_range(0.3, 0.6, 0.0).is_err());
    }
}
