use crate::error::{Result, SvrError};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    Uniform,
    Quantile,
}

/// Partition of the response range into intervals [k_h, k_{h+1}), the last
/// one closed. A value sitting on a knot belongs to the interval on its right.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub mode: PartitionMode,
    pub knots: Vec<f64>,
    /// Set when all responses coincide and the partition collapsed to one
    /// interval.
    pub degenerate: bool,
}

impl Partition {
    pub fn l(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn interval(&self, h: usize) -> (f64, f64) {
        (self.knots[h], self.knots[h + 1])
    }

    /// Interval index of y; values outside the range clamp to the nearest
    /// interval.
    pub fn index_of(&self, y: f64) -> usize {
        let l = self.l();
        let interior = &self.knots[1..l];
        interior.partition_point(|&k| k <= y).min(l - 1)
    }
}

/// Partition of the responses. `y` is expected in canonical order (see
/// `fit`); quantile ties are resolved by that order.
pub fn partition_range(y: &[f64], l: usize, mode: PartitionMode) -> Result<Partition> {
    let n = y.len();
    if l == 0 || n < l {
        return Err(SvrError::InsufficientData { n, required: l.max(1) });
    }
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(SvrError::InvalidArgument("responses must be finite".into()));
    }
    if lo == hi {
        return Ok(Partition { mode, knots: vec![lo, hi], degenerate: true });
    }
    let knots = match mode {
        PartitionMode::Uniform => {
            let mut k: Vec<f64> = (0..=l).map(|h| lo + (hi - lo) * h as f64 / l as f64).collect();
            k[l] = hi;
            k
        }
        PartitionMode::Quantile => {
            let mut sorted = y.to_vec();
            sorted.sort_by(|a, b| a.total_cmp(b));
            let mut k = Vec::with_capacity(l + 1);
            k.push(lo);
            for h in 1..l {
                k.push(sorted[quantile_start(h, n, l)]);
            }
            k.push(hi);
            k
        }
    };
    Ok(Partition { mode, knots, degenerate: false })
}

/// First rank belonging to quantile slice h.
fn quantile_start(h: usize, n: usize, l: usize) -> usize {
    (h * n).div_ceil(l)
}

/// Slice index of every training response. Uniform partitions assign by
/// value; quantile partitions assign by rank in (Y, input order) so every
/// slice gets its share even when responses tie.
pub fn assign(y: &[f64], partition: &Partition) -> Vec<usize> {
    match (partition.mode, partition.degenerate) {
        (_, true) => vec![0; y.len()],
        (PartitionMode::Uniform, false) => y.iter().map(|&v| partition.index_of(v)).collect(),
        (PartitionMode::Quantile, false) => {
            let (n, l) = (y.len(), partition.l());
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
            let mut out = vec![0; n];
            let mut h = 0;
            for (rank, &i) in order.iter().enumerate() {
                while h + 1 < l && rank >= quantile_start(h + 1, n, l) {
                    h += 1;
                }
                out[i] = h;
            }
            out
        }
    }
}
