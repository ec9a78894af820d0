use serde::Serialize;

use super::matrix::ClipMatrix;
use crate::error::{Error, Result};

/// Exhaustive clique enumeration scans all `2^L` label subsets.
pub const MAX_EXHAUSTIVE_LABELS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanOrder {
    Forward,
    Reverse,
}

impl ScanOrder {
    fn indices(self, n: usize) -> Box<dyn Iterator<Item = usize>> {
        match self {
            ScanOrder::Forward => Box::new(0..n),
            ScanOrder::Reverse => Box::new((0..n).rev()),
        }
    }
}

/// Disjoint diagonal blocks of a clip matrix and the set entries left over.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSet {
    pub order: ScanOrder,
    /// Clusters in discovery order, members in the order they joined.
    pub clusters: Vec<Vec<usize>>,
    pub noise_count: usize,
    pub noise_coordinates: Vec<(usize, usize)>,
}

impl ClusterSet {
    /// Derives the noise entries of `c` outside the blocks of `clusters`.
    pub fn from_clusters(c: &ClipMatrix, clusters: Vec<Vec<usize>>, order: ScanOrder) -> Self {
        let n = c.n_labels();
        let mut owner = vec![usize::MAX; n];
        for (k, cl) in clusters.iter().enumerate() {
            for &i in cl {
                owner[i] = k;
            }
        }
        let mut noise_coordinates = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if c.get(i, j) && (owner[i] == usize::MAX || owner[i] != owner[j]) {
                    noise_coordinates.push((i, j));
                }
            }
        }
        ClusterSet {
            order,
            clusters,
            noise_count: noise_coordinates.len(),
            noise_coordinates,
        }
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn sizes(&self) -> impl Iterator<Item = usize> + '_ {
        self.clusters.iter().map(Vec::len)
    }

    /// The cluster holding `label`, if any.
    pub fn cluster_of(&self, label: usize) -> Option<&[usize]> {
        self.clusters
            .iter()
            .find(|c| c.contains(&label))
            .map(Vec::as_slice)
    }

    pub fn contains(&self, label: usize) -> bool {
        self.cluster_of(label).is_some()
    }
}

/// Whether every pair (including each diagonal) of `members` is set.
pub fn is_clique(c: &ClipMatrix, members: &[usize]) -> bool {
    members
        .iter()
        .all(|&i| members.iter().all(|&j| c.get(i, j)))
}

/// Greedy diagonal scan. The first unassigned index with a set diagonal
/// opens a cluster; each later set diagonal joins the earliest open cluster
/// it completes to a clique, or opens a new one.
pub fn find_clusters(c: &ClipMatrix, order: ScanOrder) -> ClusterSet {
    let n = c.n_labels();
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for i in order.indices(n) {
        if !c.get(i, i) {
            continue;
        }
        let home = clusters
            .iter()
            .position(|cl| cl.iter().all(|&m| c.get(i, m) && c.get(m, i)));
        match home {
            Some(k) => clusters[k].push(i),
            None => clusters.push(vec![i]),
        }
    }
    ClusterSet::from_clusters(c, clusters, order)
}

/// All inclusion-maximal label subsets whose full block is set, each sorted
/// ascending, listed in increasing bit-mask order.
pub fn enumerate_cliques(c: &ClipMatrix) -> Result<Vec<Vec<usize>>> {
    let n = c.n_labels();
    if n > MAX_EXHAUSTIVE_LABELS {
        return Err(Error::TooManyLabels {
            got: n,
            max: MAX_EXHAUSTIVE_LABELS,
        });
    }
    let rows: Vec<u64> = (0..n).map(|i| c.row_mask(i)).collect();
    let clique = |s: u64| (0..n).all(|i| s >> i & 1 == 0 || rows[i] & s == s);
    let mut out = Vec::new();
    for s in 1u64..(1u64 << n) {
        if !clique(s) {
            continue;
        }
        let maximal = (0..n).all(|j| s >> j & 1 == 1 || !clique(s | 1 << j));
        if maximal {
            out.push((0..n).filter(|&i| s >> i & 1 == 1).collect());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockPermutation {
    /// `permutation[a]` is the original label shown at position `a`.
    pub permutation: Vec<usize>,
    pub matrix: ClipMatrix,
    pub block_sizes: Vec<usize>,
}

/// Reorders labels so that clusters form leading contiguous diagonal blocks
/// (discovery order), followed by the unclustered labels ascending.
pub fn permute_blocks(c: &ClipMatrix, cs: &ClusterSet) -> Result<BlockPermutation> {
    let n = c.n_labels();
    let mut seen = vec![false; n];
    let mut permutation = Vec::with_capacity(n);
    for cl in &cs.clusters {
        for &i in cl {
            if i >= n {
                return Err(Error::InconsistentClusters(format!("label {i} >= {n}")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InconsistentClusters(format!(
                    "label {i} belongs to two clusters"
                )));
            }
            permutation.push(i);
        }
        if !is_clique(c, cl) {
            return Err(Error::InconsistentClusters(format!(
                "cluster {cl:?} is not an all-ones block"
            )));
        }
    }
    let expected_noise = c.count_ones() - cs.sizes().map(|s| s * s).sum::<usize>();
    if cs.noise_count != expected_noise {
        return Err(Error::InconsistentClusters(format!(
            "noise count {} but matrix implies {expected_noise}",
            cs.noise_count
        )));
    }
    permutation.extend((0..n).filter(|&i| !seen[i]));
    let matrix = ClipMatrix::from_fn(n, |a, b| c.get(permutation[a], permutation[b]));
    Ok(BlockPermutation {
        permutation,
        matrix,
        block_sizes: cs.sizes().collect(),
    })
}
