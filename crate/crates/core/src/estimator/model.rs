use super::local::{fit_local_regressor, LocalFitParams, LocalRegressor};
use super::partition::{assign, partition_range, Partition, PartitionMode};
use super::slice::{slice_distance, slice_stats_from_rows, DistanceMode, SliceStats};
use crate::error::{Result, SvrError};
use crate::synthesis::Dataset;
use crate::util::cmp_rows;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub l: usize,
    pub j: usize,
    pub m: usize,
    /// Truncation level; `None` is unbounded.
    #[serde(rename = "M")]
    pub truncation: Option<f64>,
    pub partition: PartitionMode,
    pub distance: DistanceMode,
    pub heavy_threshold_factor: f64,
    /// Predict 0 (instead of the pooled mean) outside the fitted bins.
    pub strict_paper_fallback: bool,
}

impl FitConfig {
    pub fn new(l: usize, j: usize, m: usize) -> Self {
        Self {
            l,
            j,
            m,
            truncation: None,
            partition: PartitionMode::Uniform,
            distance: DistanceMode::Paper,
            heavy_threshold_factor: 1.0,
            strict_paper_fallback: false,
        }
    }

    pub fn with_heavy_factor(mut self, factor: f64) -> Self {
        self.heavy_threshold_factor = factor;
        self
    }

    /// Polynomial degree matching a link of smoothness s.
    pub fn default_degree(s: f64) -> usize {
        if s < 1.0 {
            0
        } else if s < 2.0 {
            1
        } else {
            2
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SvrError::InvalidSpec(m.to_string()));
        if self.l == 0 || self.j == 0 {
            return bad("l and j must be at least 1");
        }
        if self.m > 2 {
            return bad("m must be 0, 1 or 2");
        }
        if let Some(m) = self.truncation {
            if !(m > 0.0) {
                return bad("truncation level M must be positive");
            }
        }
        if !(self.heavy_threshold_factor >= 0.0 && self.heavy_threshold_factor.is_finite()) {
            return bad("heavy threshold factor must be nonnegative");
        }
        Ok(())
    }
}

/// Replacement slice parameters, used to fit with oracle centers and
/// tangents.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceOverride {
    pub mean: Vec<f64>,
    pub direction: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub version: u32,
    pub config: FitConfig,
    pub range_knots: Partition,
    pub slices: Vec<SliceStats>,
    /// One per heavy slice, ordered by slice index.
    pub regressors: Vec<LocalRegressor>,
    pub d: usize,
    pub n: usize,
}

impl SvrModel {
    pub fn heavy(&self) -> impl Iterator<Item = &SliceStats> {
        self.slices.iter().filter(|s| s.heavy)
    }

    pub fn regressor_for(&self, h: usize) -> Option<&LocalRegressor> {
        self.regressors.binary_search_by_key(&h, |r| r.h).ok().map(|i| &self.regressors[i])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: SvrModel = serde_json::from_str(text)?;
        if model.version != MODEL_VERSION {
            return Err(SvrError::InvalidArgument(format!("unsupported model version {}", model.version)));
        }
        if model.heavy().any(|s| model.regressor_for(s.h).is_none()) || model.regressors.is_empty() {
            return Err(SvrError::InvalidArgument("model has a heavy slice without regressor".into()));
        }
        Ok(model)
    }
}

pub fn fit(ds: &Dataset, cfg: &FitConfig) -> Result<SvrModel> {
    fit_with(ds, cfg, |_| Vec::new())
}

/// Fit where `overrides` may replace the centers and significant vectors of
/// chosen slices once the range partition is known.
pub fn fit_with<F>(ds: &Dataset, cfg: &FitConfig, overrides: F) -> Result<SvrModel>
where
    F: FnOnce(&Partition) -> Vec<Option<SliceOverride>>,
{
    cfg.validate()?;
    ds.validate()?;
    let (n, d) = (ds.n(), ds.d);
    let required = cfg.l.max(2 * d);
    if n < required {
        return Err(SvrError::InsufficientData { n, required });
    }

    // Canonical order makes the fit independent of the input order.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ds.y[a].total_cmp(&ds.y[b]).then_with(|| cmp_rows(ds.row(a), ds.row(b))));
    let mut x = Vec::with_capacity(n * d);
    for &i in &order {
        x.extend_from_slice(ds.row(i));
    }
    let y: Vec<f64> = order.iter().map(|&i| ds.y[i]).collect();

    let partition = partition_range(&y, cfg.l, cfg.partition)?;
    let l = partition.l();
    let labels = assign(&y, &partition);
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); l];
    for (i, &h) in labels.iter().enumerate() {
        rows[h].push(i);
    }
    let threshold = cfg.heavy_threshold_factor * n as f64 / l as f64;
    let mut slices = (0..l)
        .into_par_iter()
        .map(|h| {
            let heavy = !rows[h].is_empty() && rows[h].len() as f64 >= threshold;
            slice_stats_from_rows(h, partition.interval(h), &x, d, &rows[h], heavy)
        })
        .collect::<Result<Vec<_>>>()?;

    for (h, o) in overrides(&partition).into_iter().enumerate().take(l) {
        if let Some(o) = o {
            if o.mean.len() != d || o.direction.len() != d {
                return Err(SvrError::InvalidArgument(format!("override for slice {h} has wrong dimension")));
            }
            slices[h].mean = o.mean;
            slices[h].sig_vec = o.direction;
        }
    }
    if !slices.iter().any(|s| s.heavy) {
        return Err(SvrError::NoHeavySlices { l });
    }

    let params = LocalFitParams {
        j: cfg.j,
        m: cfg.m,
        clip: cfg.truncation,
        strict_paper_fallback: cfg.strict_paper_fallback,
    };
    let regressors: Vec<LocalRegressor> = slices
        .par_iter()
        .filter(|s| s.heavy)
        .map(|s| {
            let h = s.h;
            let pooled = h.saturating_sub(1)..(h + 2).min(l);
            let mut z = Vec::new();
            let mut yy = Vec::new();
            for hp in pooled {
                for &i in &rows[hp] {
                    z.push(s.sig_vec.iter().zip(&x[i * d..(i + 1) * d]).map(|(a, b)| a * b).sum::<f64>());
                    yy.push(y[i]);
                }
            }
            fit_local_regressor(h, s.sig_vec.clone(), &z, &yy, s.n_lh, params)
        })
        .collect();

    Ok(SvrModel {
        version: MODEL_VERSION,
        config: cfg.clone(),
        range_knots: partition,
        slices,
        regressors,
        d,
        n,
    })
}

/// Heavy slice minimizing the configured distance; ties go to the smaller
/// index.
pub fn nearest_heavy_slice(model: &SvrModel, x: &[f64]) -> usize {
    let mut best = (usize::MAX, f64::INFINITY);
    for s in model.heavy() {
        let v = slice_distance(x, s, model.config.distance);
        if best.0 == usize::MAX || v < best.1 {
            best = (s.h, v);
        }
    }
    best.0
}

pub fn predict(model: &SvrModel, x: &[f64]) -> f64 {
    let h = nearest_heavy_slice(model, x);
    let v = match model.regressor_for(h) {
        Some(r) => r.eval(x),
        None => 0.0,
    };
    if v.is_finite() {
        v
    } else {
        model.regressor_for(h).map(|r| r.fallback).unwrap_or(0.0)
    }
}

/// Predictions for a row-major batch.
pub fn predict_many(model: &SvrModel, xs: &[f64]) -> Vec<f64> {
    xs.par_chunks(model.d).map(|x| predict(model, x)).collect()
}

/// (estimated nearest slice, slice whose interval holds the true value).
pub fn classification_indices(model: &SvrModel, x: &[f64], true_value: f64) -> (usize, usize) {
    (nearest_heavy_slice(model, x), model.range_knots.index_of(true_value))
}
