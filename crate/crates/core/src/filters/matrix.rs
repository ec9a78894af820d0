use serde::Serialize;

use crate::error::{Error, Result};
use crate::probe::argmax;
use crate::store::{ActivationSet, ProbeWeights};

/// Output fields produced by one filter alone: all other probe weights
/// silenced.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterFields {
    pub filter_id: usize,
    pub layer_index: u32,
    n_labels: usize,
    fields: Vec<f64>,
}

impl FilterFields {
    pub fn from_raw(filter_id: usize, layer_index: u32, n_labels: usize, fields: Vec<f64>) -> Self {
        assert!(n_labels > 0 && fields.len().is_multiple_of(n_labels));
        FilterFields {
            filter_id,
            layer_index,
            n_labels,
            fields,
        }
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn n_samples(&self) -> usize {
        self.fields.len() / self.n_labels
    }

    pub fn sample(&self, n: usize) -> &[f64] {
        &self.fields[n * self.n_labels..(n + 1) * self.n_labels]
    }
}

pub fn single_filter_fields(
    w: &ProbeWeights,
    set: &ActivationSet,
    filter_id: usize,
) -> Result<FilterFields> {
    w.check_compatible(set)?;
    if filter_id >= set.n_filters() {
        return Err(Error::FilterOutOfRange {
            id: filter_id,
            n_filters: set.n_filters(),
        });
    }
    let l = set.n_labels();
    let s = set.spatial_per_filter();
    let offset = filter_id * s;
    let mut fields = Vec::with_capacity(set.n_samples() * l);
    for n in 0..set.n_samples() {
        let x = set.filter_slots(n, filter_id);
        for j in 0..l {
            let cols = &w.row(j)[offset..offset + s];
            fields.push(cols.iter().zip(x).map(|(w, &v)| w * v as f64).sum());
        }
    }
    Ok(FilterFields {
        filter_id,
        layer_index: set.layer_index(),
        n_labels: l,
        fields,
    })
}

/// Row `i`: distribution of single-filter predictions over label-`i`
/// inputs that produced at least one non-zero field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionMatrix {
    pub n_labels: usize,
    pub probabilities: Vec<Vec<f64>>,
    pub included: Vec<usize>,
    pub excluded: Vec<usize>,
}

pub fn decision_matrix(f: &FilterFields, labels: &[u16]) -> Result<DecisionMatrix> {
    if labels.len() != f.n_samples() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} samples",
            labels.len(),
            f.n_samples()
        )));
    }
    let l = f.n_labels();
    let mut counts = vec![vec![0usize; l]; l];
    let mut included = vec![0; l];
    let mut excluded = vec![0; l];
    for (n, &y) in labels.iter().enumerate() {
        let y = y as usize;
        if y >= l {
            return Err(Error::DimensionMismatch(format!("label {y} >= {l}")));
        }
        let fields = f.sample(n);
        if fields.iter().all(|&v| v == 0.0) {
            excluded[y] += 1;
            continue;
        }
        included[y] += 1;
        counts[y][argmax(fields)] += 1;
    }
    let probabilities = counts
        .iter()
        .zip(&included)
        .map(|(row, &inc)| {
            row.iter()
                .map(|&c| if inc == 0 { 0.0 } else { c as f64 / inc as f64 })
                .collect()
        })
        .collect();
    Ok(DecisionMatrix {
        n_labels: l,
        probabilities,
        included,
        excluded,
    })
}

/// Element `(i, j)`: mean field on output `j` over label-`i` inputs,
/// divided by the largest element when that element is positive.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldMatrix {
    pub n_labels: usize,
    pub values: Vec<Vec<f64>>,
    pub normalizer: f64,
    pub normalized: bool,
}

impl FieldMatrix {
    pub fn from_values(values: Vec<Vec<f64>>) -> Result<Self> {
        let n = values.len();
        if let Some(r) = values.iter().find(|r| r.len() != n) {
            return Err(Error::NotSquare {
                rows: n,
                cols: r.len(),
            });
        }
        Ok(normalize(values))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }
}

fn normalize(mut values: Vec<Vec<f64>>) -> FieldMatrix {
    let n = values.len();
    let max = values
        .iter()
        .flatten()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let normalized = max > 0.0;
    if normalized {
        for v in values.iter_mut().flatten() {
            *v /= max;
        }
    }
    FieldMatrix {
        n_labels: n,
        values,
        normalizer: max,
        normalized,
    }
}

pub fn field_matrix(f: &FilterFields, labels: &[u16]) -> Result<FieldMatrix> {
    if labels.len() != f.n_samples() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} samples",
            labels.len(),
            f.n_samples()
        )));
    }
    let l = f.n_labels();
    let mut sums = vec![vec![0.0; l]; l];
    let mut counts = vec![0usize; l];
    for (n, &y) in labels.iter().enumerate() {
        let y = y as usize;
        if y >= l {
            return Err(Error::DimensionMismatch(format!("label {y} >= {l}")));
        }
        counts[y] += 1;
        for (acc, v) in sums[y].iter_mut().zip(f.sample(n)) {
            *acc += v;
        }
    }
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(Error::MissingLabel(missing));
    }
    for (row, &c) in sums.iter_mut().zip(&counts) {
        for v in row.iter_mut() {
            *v /= c as f64;
        }
    }
    Ok(normalize(sums))
}

/// Boolean field matrix: entry set iff the normalized element exceeds
/// `theta` strictly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClipMatrix {
    n: usize,
    bits: Vec<bool>,
}

impl ClipMatrix {
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let mut bits = Vec::with_capacity(n * n);
        for r in rows {
            let r = r.as_ref();
            if r.len() != n {
                return Err(Error::NotSquare {
                    rows: n,
                    cols: r.len(),
                });
            }
            bits.extend(r.iter().map(|&b| b != 0));
        }
        Ok(ClipMatrix { n, bits })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let bits = (0..n * n).map(|k| f(k / n, k % n)).collect();
        ClipMatrix { n, bits }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, |i, j| i == j)
    }

    pub fn n_labels(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j]
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) as u8).collect())
            .collect()
    }

    /// Row `i` as a bit mask (bit `j` set iff entry `(i, j)` is set).
    /// Only meaningful for at most 64 labels.
    pub(crate) fn row_mask(&self, i: usize) -> u64 {
        (0..self.n).fold(0u64, |m, j| if self.get(i, j) { m | 1 << j } else { m })
    }
}

impl Serialize for ClipMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

pub fn clip(fm: &FieldMatrix, theta: f64) -> Result<ClipMatrix> {
    if !fm.normalized {
        return Err(Error::Unnormalized);
    }
    if !theta.is_finite() {
        return Err(Error::InvalidParameter(format!("threshold {theta}")));
    }
    let n = fm.n_labels;
    Ok(ClipMatrix::from_fn(n, |i, j| fm.values[i][j] > theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::Split;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(seed: u64, l: usize, k: usize, s: usize, n: usize) -> (ProbeWeights, ActivationSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wv = (0..l * k * s).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let labels = (0..n).map(|i| (i % l) as u16).collect();
        let feats = (0..n * k * s)
            .map(|_| if rng.gen_bool(0.4) { 0.0 } else { rng.gen_range(0.0..2.0f32) })
            .collect();
        (
            ProbeWeights::new(l, k * s, wv).unwrap(),
            ActivationSet::new(7, Split::Test, l, k, s, labels, feats).unwrap(),
        )
    }

    #[test]
    fn zero_features_give_zero_fields() {
        let w = ProbeWeights::new(2, 2, vec![1.0, -2.0, 3.0, 4.0]).unwrap();
        let set = ActivationSet::new(1, Split::Test, 2, 2, 1, vec![0, 1], vec![0.0; 4]).unwrap();
        let f = single_filter_fields(&w, &set, 1).unwrap();
        assert!(f.fields.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_feature_returns_weight_column() {
        let w = ProbeWeights::new(3, 2, vec![1.0, -2.0, 3.0, 4.0, 0.5, -0.25]).unwrap();
        let set = ActivationSet::new(1, Split::Test, 3, 2, 1, vec![2], vec![0.0, 1.0]).unwrap();
        let f = single_filter_fields(&w, &set, 1).unwrap();
        assert_eq!(f.sample(0), &[-2.0, 4.0, -0.25]);
        assert!(matches!(
            single_filter_fields(&w, &set, 2),
            Err(Error::FilterOutOfRange { id: 2, n_filters: 2 })
        ));
    }

    #[test]
    fn masking_equivalence_against_dense_product() {
        for seed in 0..5 {
            let (w, set) = random_instance(seed, 4, 5, 3, 12);
            for k in 0..5 {
                let f = single_filter_fields(&w, &set, k).unwrap();
                for n in 0..set.n_samples() {
                    let masked: Vec<f32> = set
                        .sample(n)
                        .iter()
                        .enumerate()
                        .map(|(c, &v)| if c / 3 == k { v } else { 0.0 })
                        .collect();
                    let dense = w.fields(&masked);
                    assert_eq!(f.sample(n), dense.as_slice());
                }
            }
        }
    }

    #[test]
    fn decision_always_label_one() {
        let labels: Vec<u16> = (0..20).map(|i| (i % 4) as u16).collect();
        let fields = labels
            .iter()
            .flat_map(|_| [0.1, 5.0, -1.0, 0.3])
            .collect();
        let f = FilterFields::from_raw(0, 1, 4, fields);
        let d = decision_matrix(&f, &labels).unwrap();
        for row in &d.probabilities {
            assert_eq!(row, &vec![0.0, 1.0, 0.0, 0.0]);
        }
        assert_eq!(d.included, vec![5; 4]);
    }

    #[test]
    fn decision_all_zero_fields_excluded() {
        let labels: Vec<u16> = vec![0, 1, 2, 2, 1];
        let f = FilterFields::from_raw(0, 1, 3, vec![0.0; 15]);
        let d = decision_matrix(&f, &labels).unwrap();
        assert!(d.probabilities.iter().flatten().all(|&p| p == 0.0));
        assert_eq!(d.excluded, vec![1, 2, 2]);
        assert_eq!(d.included, vec![0, 0, 0]);
    }

    #[test]
    fn decision_hand_enumerated_toy() {
        // Two samples per label over three labels.
        let labels: Vec<u16> = vec![0, 0, 1, 1, 2, 2];
        let fields = vec![
            1.0, 0.0, 0.0, // label 0 -> 0
            0.0, 2.0, 2.0, // label 0 -> 1 (tie, lowest index)
            0.0, 0.0, 0.0, // label 1 excluded
            0.0, -1.0, 0.5, // label 1 -> 2
            0.0, 0.0, -0.1, // label 2 -> 0 (non-zero fields, max is 0 at index 0)
            -3.0, 4.0, 1.0, // label 2 -> 1
        ];
        let f = FilterFields::from_raw(0, 1, 3, fields);
        let d = decision_matrix(&f, &labels).unwrap();
        assert_eq!(d.probabilities[0], vec![0.5, 0.5, 0.0]);
        assert_eq!(d.probabilities[1], vec![0.0, 0.0, 1.0]);
        assert_eq!(d.probabilities[2], vec![0.5, 0.5, 0.0]);
        assert_eq!(d.included, vec![2, 1, 2]);
        assert_eq!(d.excluded, vec![0, 1, 0]);
    }

    #[test]
    fn decision_rows_are_stochastic() {
        let (w, set) = random_instance(3, 5, 6, 2, 60);
        for k in 0..6 {
            let f = single_filter_fields(&w, &set, k).unwrap();
            let d = decision_matrix(&f, set.labels()).unwrap();
            for (row, &inc) in d.probabilities.iter().zip(&d.included) {
                let s: f64 = row.iter().sum();
                if inc > 0 {
                    assert!((s - 1.0).abs() < 1e-9);
                } else {
                    assert_eq!(s, 0.0);
                }
            }
        }
    }

    #[test]
    fn field_matrix_single_unit_field() {
        let labels = vec![0u16, 1, 2];
        let mut fields = vec![0.0; 9];
        fields[3 + 2] = 1.0;
        let fm = field_matrix(&FilterFields::from_raw(0, 1, 3, fields), &labels).unwrap();
        assert!(fm.normalized);
        assert_eq!(fm.values[1][2], 1.0);
        assert_eq!(fm.values.iter().flatten().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn field_matrix_non_positive_left_unscaled() {
        let labels = vec![0u16, 1];
        let fields = vec![-1.0, -2.0, 0.0, -0.5];
        let fm = field_matrix(&FilterFields::from_raw(0, 1, 2, fields), &labels).unwrap();
        assert!(!fm.normalized);
        assert_eq!(fm.values, vec![vec![-1.0, -2.0], vec![0.0, -0.5]]);
        assert!(matches!(clip(&fm, 0.3), Err(Error::Unnormalized)));
    }

    #[test]
    fn field_matrix_missing_label() {
        let f = FilterFields::from_raw(0, 1, 3, vec![1.0; 6]);
        assert!(matches!(field_matrix(&f, &[0, 2]), Err(Error::MissingLabel(1))));
    }

    #[test]
    fn field_matrix_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let l = 4;
        let labels: Vec<u16> = (0..23).map(|_| rng.gen_range(0..l as u16)).chain(0..l as u16).collect();
        let n = labels.len();
        let fields: Vec<f64> = (0..n * l).map(|_| rng.gen_range(-1.0..3.0)).collect();
        let fm = field_matrix(&FilterFields::from_raw(0, 1, l, fields.clone()), &labels).unwrap();

        let mut expect = vec![vec![0.0; l]; l];
        for i in 0..l {
            let members: Vec<usize> = (0..n).filter(|&s| labels[s] as usize == i).collect();
            for j in 0..l {
                expect[i][j] =
                    members.iter().map(|&s| fields[s * l + j]).sum::<f64>() / members.len() as f64;
            }
        }
        let max = expect.iter().flatten().cloned().fold(f64::MIN, f64::max);
        for i in 0..l {
            for j in 0..l {
                assert!((fm.values[i][j] - expect[i][j] / max).abs() < 1e-12);
            }
        }
        assert_eq!(fm.values.iter().flatten().cloned().fold(f64::MIN, f64::max), 1.0);
    }

    #[test]
    fn clip_is_strict() {
        let fm = FieldMatrix::from_values(vec![vec![0.2, 0.3], vec![0.9, 1.0]]).unwrap();
        let c = clip(&fm, 0.3).unwrap();
        assert_eq!(c.rows(), vec![vec![0, 0], vec![1, 1]]);
    }

    #[test]
    fn clip_at_one_is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let vals = (0..6)
                .map(|_| (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let fm = FieldMatrix::from_values(vals).unwrap();
            if fm.normalized {
                assert_eq!(clip(&fm, 1.0).unwrap().count_ones(), 0);
            }
        }
    }

    #[test]
    fn clip_nine_dominant_elements() {
        let mut vals = vec![vec![0.05; 10]; 10];
        for &i in &[1, 5, 8] {
            for &j in &[1, 5, 8] {
                vals[i][j] = 0.7 + 0.1 * ((i + j) % 3) as f64;
            }
        }
        vals[3][7] = -0.2;
        let c = clip(&FieldMatrix::from_values(vals).unwrap(), 0.3).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                let inside = [1, 5, 8].contains(&i) && [1, 5, 8].contains(&j);
                assert_eq!(c.get(i, j), inside);
            }
        }
    }

    #[test]
    fn non_square_rejected() {
        assert!(matches!(
            ClipMatrix::from_rows(&[vec![1u8, 0], vec![1]]),
            Err(Error::NotSquare { .. })
        ));
    }
}
