//! Single-filter functionality: output fields of one filter, the derived
//! label matrices, and diagonal clusters of the clipped field matrix.

mod cluster;
mod matrix;

pub use cluster::{
    enumerate_cliques, find_clusters, is_clique, permute_blocks, BlockPermutation, ClusterSet,
    ScanOrder, MAX_EXHAUSTIVE_LABELS,
};
pub use matrix::{
    clip, decision_matrix, field_matrix, single_filter_fields, ClipMatrix, DecisionMatrix,
    FieldMatrix, FilterFields,
};
