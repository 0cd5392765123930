//! Significant vector regression: slice the response range, summarize each
//! slice by its mean and significant vector, assign points to the nearest
//! heavy slice and regress on the projection onto that slice's vector.

mod local;
mod model;
mod partition;
mod slice;

pub use local::{fit_local_regressor, least_squares_poly, LocalFitParams, LocalRegressor};
pub use model::{
    classification_indices, fit, fit_with, nearest_heavy_slice, predict, predict_many, FitConfig, SliceOverride,
    SvrModel, MODEL_VERSION,
};
pub use partition::{assign, partition_range, Partition, PartitionMode};
pub use slice::{canonical_sign, h_statistic, slice_distance, slice_stats_from_rows, DistanceMode, SliceStats};

use crate::error::Result;

/// Slice statistics for a sample: responses are partitioned by
/// `partition`, and a slice is heavy when it holds at least
/// `factor * n / l` points.
pub fn compute_slice_stats(x: &[f64], y: &[f64], d: usize, partition: &Partition, factor: f64) -> Result<Vec<SliceStats>> {
    let labels = assign(y, partition);
    let l = partition.l();
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); l];
    for (i, &h) in labels.iter().enumerate() {
        rows[h].push(i);
    }
    let threshold = factor * y.len() as f64 / l as f64;
    (0..l)
        .map(|h| {
            let heavy = !rows[h].is_empty() && rows[h].len() as f64 >= threshold;
            slice_stats_from_rows(h, partition.interval(h), x, d, &rows[h], heavy)
        })
        .collect()
}
