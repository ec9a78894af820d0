//! Activations with planted per-filter label clusters.
//!
//! Filter `f` responds strongly to the labels in `planted_clusters[f]` and
//! stays near zero otherwise, so a probe trained on the output has a known
//! single-filter cluster structure to recover.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::store::{ActivationSet, Split};

/// In-cluster responses are drawn from this range, times the amplitude.
pub const IN_CLUSTER_RANGE: (f32, f32) = (0.5, 1.5);
/// Out-of-cluster responses are drawn from this range, times the amplitude.
pub const OFF_CLUSTER_RANGE: (f32, f32) = (0.0, 0.02);

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub n_labels: usize,
    pub n_filters: usize,
    pub spatial_per_filter: usize,
    /// One label subset per filter.
    pub planted_clusters: Vec<Vec<usize>>,
    pub response_amplitude: f32,
    pub off_cluster_noise_rate: f64,
    pub samples_per_label: usize,
    pub seed: u64,
    pub layer_index: u32,
    pub split: Split,
    /// Require every label to appear in at least one planted cluster.
    pub equalized: bool,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSynthetic(m));
        if self.n_labels == 0 || self.n_labels > u16::MAX as usize + 1 {
            return bad(format!("n_labels = {} out of range", self.n_labels));
        }
        if self.n_filters == 0 || self.spatial_per_filter == 0 {
            return bad("n_filters and spatial_per_filter must be positive".into());
        }
        if self.planted_clusters.len() != self.n_filters {
            return bad(format!(
                "{} planted clusters for {} filters",
                self.planted_clusters.len(),
                self.n_filters
            ));
        }
        for (f, c) in self.planted_clusters.iter().enumerate() {
            if c.is_empty() {
                return bad(format!("planted cluster of filter {f} is empty"));
            }
            if let Some(&l) = c.iter().find(|&&l| l >= self.n_labels) {
                return bad(format!("filter {f}: label {l} out of range"));
            }
            let mut sorted = c.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != c.len() {
                return bad(format!("filter {f}: duplicate labels in planted cluster"));
            }
        }
        if !self.response_amplitude.is_finite() || self.response_amplitude <= 0.0 {
            return bad("response_amplitude must be a positive finite number".into());
        }
        if !(0.0..=1.0).contains(&self.off_cluster_noise_rate) {
            return bad("off_cluster_noise_rate must be a probability".into());
        }
        if self.samples_per_label == 0 {
            return bad("samples_per_label must be positive".into());
        }
        if self.equalized {
            let mut seen = vec![false; self.n_labels];
            for c in &self.planted_clusters {
                for &l in c {
                    seen[l] = true;
                }
            }
            if let Some(l) = seen.iter().position(|s| !s) {
                return bad(format!("label {l} appears in no planted cluster"));
            }
        }
        Ok(())
    }
}

/// Above this many candidate subsets, clusters are drawn from the least
/// used labels only, without balancing label pairs.
const MAX_PAIR_BALANCED_CANDIDATES: usize = 20_000;

fn n_choose_k(n: usize, k: usize) -> usize {
    let mut r: usize = 1;
    for i in 0..k {
        r = r.saturating_mul(n - i) / (i + 1);
    }
    r
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..=n - (k - cur.len()) {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Assigns one size-`cluster_size` subset to each of `n_filters` filters so
/// that label appearance counts differ by at most one across labels. When
/// the number of candidate subsets is manageable, co-appearance counts of
/// label pairs are balanced as well.
pub fn equalized_clusters(
    n_labels: usize,
    n_filters: usize,
    cluster_size: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if cluster_size == 0 || cluster_size > n_labels {
        return Err(Error::InvalidSynthetic(format!(
            "cluster size {cluster_size} must be in 1..={n_labels}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uses = vec![0usize; n_labels];
    let mut out = Vec::with_capacity(n_filters);

    if n_choose_k(n_labels, cluster_size) <= MAX_PAIR_BALANCED_CANDIDATES {
        let mut candidates = subsets(n_labels, cluster_size);
        let mut pairs = vec![0usize; n_labels * n_labels];
        for _ in 0..n_filters {
            candidates.shuffle(&mut rng);
            let score = |c: &Vec<usize>| {
                let labels: usize = c.iter().map(|&l| uses[l]).sum();
                let mut shared = 0;
                for (a, &i) in c.iter().enumerate() {
                    for &j in &c[a + 1..] {
                        shared += pairs[i * n_labels + j];
                    }
                }
                (labels, shared)
            };
            let best = candidates
                .iter()
                .min_by_key(|c| score(c))
                .expect("at least one candidate")
                .clone();
            for (a, &i) in best.iter().enumerate() {
                uses[i] += 1;
                for &j in &best[a + 1..] {
                    pairs[i * n_labels + j] += 1;
                }
            }
            out.push(best);
        }
        return Ok(out);
    }

    for _ in 0..n_filters {
        let mut order: Vec<usize> = (0..n_labels).collect();
        order.shuffle(&mut rng);
        // Stable sort keeps the random order among equally used labels.
        order.sort_by_key(|&l| uses[l]);
        let mut cluster: Vec<usize> = order[..cluster_size].to_vec();
        cluster.sort_unstable();
        for &l in &cluster {
            uses[l] += 1;
        }
        out.push(cluster);
    }
    Ok(out)
}

/// Builds an activation set from `spec`. Sample `n` carries label `n % L`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<ActivationSet> {
    spec.validate()?;
    let l = spec.n_labels;
    let k = spec.n_filters;
    let s = spec.spatial_per_filter;
    let n = l * spec.samples_per_label;

    let mut member = vec![false; k * l];
    for (f, c) in spec.planted_clusters.iter().enumerate() {
        for &lab in c {
            member[f * l + lab] = true;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let amp = spec.response_amplitude;
    let labels: Vec<u16> = (0..n).map(|i| (i % l) as u16).collect();
    let mut features = Vec::with_capacity(n * k * s);
    for &y in &labels {
        for f in 0..k {
            let responsive = member[f * l + y as usize]
                || (spec.off_cluster_noise_rate > 0.0 && rng.gen_bool(spec.off_cluster_noise_rate));
            let (lo, hi) = if responsive {
                IN_CLUSTER_RANGE
            } else {
                OFF_CLUSTER_RANGE
            };
            for _ in 0..s {
                features.push(rng.gen_range(lo..=hi) * amp);
            }
        }
    }
    ActivationSet::new(spec.layer_index, spec.split, l, k, s, labels, features)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n_labels: 10,
            n_filters: 16,
            spatial_per_filter: 2,
            planted_clusters: equalized_clusters(10, 16, 3, 7).unwrap(),
            response_amplitude: 2.0,
            off_cluster_noise_rate: 0.0,
            samples_per_label: 10,
            seed,
            layer_index: 4,
            split: Split::Train,
            equalized: true,
        }
    }

    #[test]
    fn sample_counts() {
        let set = generate_synthetic(&spec(1)).unwrap();
        assert_eq!(set.n_samples(), 100);
        assert_eq!(set.label_counts(), vec![10; 10]);
        assert_eq!(set.n_features(), 32);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = generate_synthetic(&spec(5)).unwrap();
        let b = generate_synthetic(&spec(5)).unwrap();
        let c = generate_synthetic(&spec(6)).unwrap();
        let bits = |s: &ActivationSet| s.features().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn responses_follow_planted_clusters() {
        let sp = spec(2);
        let set = generate_synthetic(&sp).unwrap();
        for n in 0..set.n_samples() {
            let y = set.label(n);
            for f in 0..sp.n_filters {
                let inside = sp.planted_clusters[f].contains(&y);
                for &v in set.filter_slots(n, f) {
                    if inside {
                        assert!((1.0..=3.0).contains(&v), "{v}");
                    } else {
                        assert!((0.0..=0.04).contains(&v), "{v}");
                    }
                }
            }
        }
    }

    #[test]
    fn noise_rate_one_makes_everything_responsive() {
        let mut sp = spec(3);
        sp.off_cluster_noise_rate = 1.0;
        let set = generate_synthetic(&sp).unwrap();
        assert!(set.features().iter().all(|&v| v >= 1.0));
    }

    #[test]
    fn equalized_counts_differ_by_at_most_one() {
        for (l, k, s) in [(10, 64, 3), (10, 512, 3), (7, 20, 2), (10, 5, 10), (100, 40, 4)] {
            let cs = equalized_clusters(l, k, s, 11).unwrap();
            let mut counts = vec![0usize; l];
            for c in &cs {
                assert_eq!(c.len(), s);
                for &x in c {
                    counts[x] += 1;
                }
            }
            let (mn, mx) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            assert!(mx - mn <= 1, "{counts:?}");
        }
    }

    #[test]
    fn equalized_pairs_are_balanced() {
        let cs = equalized_clusters(10, 1200, 3, 4).unwrap();
        let mut pairs = vec![0usize; 100];
        for c in &cs {
            for &i in c {
                for &j in c {
                    if i < j {
                        pairs[i * 10 + j] += 1;
                    }
                }
            }
        }
        let used: Vec<usize> = (0..10)
            .flat_map(|i| (i + 1..10).map(move |j| (i, j)))
            .map(|(i, j)| pairs[i * 10 + j])
            .collect();
        // 1200 triplets hold 3600 pairs over 45 label pairs: 80 each.
        assert!(used.iter().all(|&p| p.abs_diff(80) <= 3), "{used:?}");
    }

    #[test]
    fn validation_errors() {
        let mut sp = spec(0);
        sp.planted_clusters[3].clear();
        assert!(generate_synthetic(&sp).is_err());

        let mut sp = spec(0);
        sp.planted_clusters = vec![vec![0]; 16];
        assert!(matches!(sp.validate(), Err(Error::InvalidSynthetic(_))));
        sp.equalized = false;
        assert!(sp.validate().is_ok());

        let mut sp = spec(0);
        sp.off_cluster_noise_rate = 1.5;
        assert!(sp.validate().is_err());
        assert!(equalized_clusters(10, 4, 11, 0).is_err());
    }
}
