//! Link functions f: [0, len] -> R and numerical estimates of their
//! monotonicity and smoothness constants.

use crate::error::{Result, SvrError};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LinkKind {
    Identity,
    /// scale * exp(t / scale)
    ExpScaled { scale: f64 },
    /// t^exponent
    PowerHolder { exponent: f64 },
    /// Piecewise-linear interpolation of (t, y) knots, t strictly increasing.
    CustomTable { t: Vec<f64>, y: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub kind: LinkKind,
    /// Claimed smoothness exponent.
    pub s: f64,
    pub domain: (f64, f64),
}

impl LinkSpec {
    pub fn new(kind: LinkKind, s: f64, domain: (f64, f64)) -> Result<Self> {
        let link = Self { kind, s, domain };
        link.validate()?;
        Ok(link)
    }

    pub fn identity(len: f64) -> Self {
        Self { kind: LinkKind::Identity, s: 1.0, domain: (0.0, len) }
    }

    pub fn exp_scaled(scale: f64, len: f64) -> Self {
        Self { kind: LinkKind::ExpScaled { scale }, s: 2.0, domain: (0.0, len) }
    }

    pub fn power(exponent: f64, len: f64) -> Self {
        Self { kind: LinkKind::PowerHolder { exponent }, s: exponent.clamp(0.5, 2.0), domain: (0.0, len) }
    }

    /// A constant link, stored as a flat table.
    pub fn constant(value: f64, len: f64) -> Self {
        Self {
            kind: LinkKind::CustomTable { t: vec![0.0, len], y: vec![value, value] },
            s: 2.0,
            domain: (0.0, len),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SvrError::InvalidSpec(m.to_string()));
        if !(0.5..=2.0).contains(&self.s) {
            return bad("link smoothness s must lie in [0.5, 2]");
        }
        let (a, b) = self.domain;
        if !(a.is_finite() && b.is_finite() && b > a) {
            return bad("link domain must be a nonempty finite interval");
        }
        match &self.kind {
            LinkKind::Identity => {}
            LinkKind::ExpScaled { scale } => {
                if !(*scale > 0.0 && scale.is_finite()) {
                    return bad("exp link scale must be positive");
                }
            }
            LinkKind::PowerHolder { exponent } => {
                if !(*exponent > 0.0 && exponent.is_finite()) {
                    return bad("power link exponent must be positive");
                }
                if a < 0.0 {
                    return bad("power link needs a nonnegative domain");
                }
            }
            LinkKind::CustomTable { t, y } => {
                if t.len() < 2 || t.len() != y.len() {
                    return bad("link table needs at least two (t, y) pairs");
                }
                if t.windows(2).any(|w| !(w[1] > w[0])) {
                    return bad("link table t values must increase strictly");
                }
                if y.iter().chain(t).any(|v| !v.is_finite()) {
                    return bad("link table values must be finite");
                }
            }
        }
        Ok(())
    }

    /// f(t), with t clamped to the domain.
    pub fn eval(&self, t: f64) -> f64 {
        let t = t.clamp(self.domain.0, self.domain.1);
        match &self.kind {
            LinkKind::Identity => t,
            LinkKind::ExpScaled { scale } => scale * (t / scale).exp(),
            LinkKind::PowerHolder { exponent } => t.powf(*exponent),
            LinkKind::CustomTable { t: ts, y } => {
                if t <= ts[0] {
                    return y[0];
                }
                let i = ts.partition_point(|&v| v <= t).min(ts.len() - 1);
                let (t0, t1) = (ts[i - 1], ts[i]);
                let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
                y[i - 1] + w * (y[i] - y[i - 1])
            }
        }
    }

    /// sup |f| over a uniform grid of the domain.
    pub fn sup_norm(&self, grid: usize) -> f64 {
        self.grid_values(grid).1.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn grid_values(&self, grid: usize) -> (Vec<f64>, Vec<f64>) {
        let (a, b) = self.domain;
        let g = grid.max(2);
        let t: Vec<f64> = (0..g).map(|i| a + (b - a) * i as f64 / (g - 1) as f64).collect();
        let y = t.iter().map(|&v| self.eval(v)).collect();
        (t, y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityConstants {
    pub c_f: f64,
    pub c_f_prime: f64,
    pub omega_f: f64,
}

/// Sparse table answering range min and max queries in O(1).
struct RangeMinMax {
    min: Vec<Vec<usize>>,
    max: Vec<Vec<usize>>,
}

impl RangeMinMax {
    fn new(v: &[usize]) -> Self {
        let mut min = vec![v.to_vec()];
        let mut max = vec![v.to_vec()];
        let mut w = 1;
        while 2 * w <= v.len() {
            let (pm, px) = (min.last().unwrap(), max.last().unwrap());
            let nm = (0..=v.len() - 2 * w).map(|i| pm[i].min(pm[i + w])).collect();
            let nx = (0..=v.len() - 2 * w).map(|i| px[i].max(px[i + w])).collect();
            min.push(nm);
            max.push(nx);
            w *= 2;
        }
        Self { min, max }
    }

    /// Inclusive range [a, b].
    fn query(&self, a: usize, b: usize) -> (usize, usize) {
        let k = (usize::BITS - 1 - (b - a + 1).leading_zeros()) as usize;
        let w = 1 << k;
        (
            self.min[k][a].min(self.min[k][b + 1 - w]),
            self.max[k][a].max(self.max[k][b + 1 - w]),
        )
    }
}

/// Grid search for the coarse-monotonicity constants.
///
/// Output intervals T of length h slide across [min f, max f] with step h/2
/// for a geometric sweep of scales h >= `min_scale`. For each T the preimage
/// span |[min f^-1(T), max f^-1(T)]| / |T| is recorded. A scale counts as
/// regular when every tested preimage holds at least two grid nodes and its
/// span is at most twice its measure, i.e. the preimage is essentially one
/// interval. omega_f is the smallest scale from which on every larger
/// tested scale is regular (0 when the smallest one already is), and the
/// constants are the extreme ratios over the regular scales.
pub fn estimate_monotonicity_constants(
    link: &LinkSpec,
    grid: usize,
    min_scale: f64,
) -> Result<MonotonicityConstants> {
    if grid < 1000 {
        return Err(SvrError::InvalidArgument(format!("grid {grid} is below 1000")));
    }
    if !(min_scale > 0.0) {
        return Err(SvrError::InvalidArgument("min_scale must be positive".into()));
    }
    let (t, y) = link.grid_values(grid);
    let dt = t[1] - t[0];
    let mut order: Vec<usize> = (0..grid).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
    let sorted_y: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let rmq = RangeMinMax::new(&order);
    let (ymin, ymax) = (sorted_y[0], sorted_y[grid - 1]);
    let range = ymax - ymin;
    if !(range > 0.0) || min_scale > range {
        return Err(SvrError::EmptyPreimage);
    }

    let mut scales = Vec::new();
    let mut h = min_scale;
    while h < range {
        scales.push(h);
        h *= 2f64.sqrt();
    }
    scales.push(range);

    struct ScaleStats {
        h: f64,
        regular: bool,
        min_ratio: f64,
        max_ratio: f64,
    }
    let mut stats = Vec::with_capacity(scales.len());
    for &h in &scales {
        let mut regular = true;
        let mut seen = false;
        let (mut lo_r, mut hi_r) = (f64::INFINITY, 0.0f64);
        let mut starts = Vec::new();
        let mut a = ymin;
        while a + h < ymax {
            starts.push(a);
            a += 0.5 * h;
        }
        starts.push(ymax - h);
        for a in starts {
            let b = a + h;
            let i0 = sorted_y.partition_point(|&v| v < a);
            let i1 = sorted_y.partition_point(|&v| v <= b);
            if i1 <= i0 {
                continue;
            }
            seen = true;
            let count = i1 - i0;
            let (lo, hi) = rmq.query(i0, i1 - 1);
            // extend both ends to the level crossing of the interpolant, the
            // outer neighbours lie outside [a, b] by construction
            let cross = |inner: f64, outer: f64| {
                let level = if outer < a { a } else { b };
                ((inner - level) / (inner - outer)).clamp(0.0, 1.0)
            };
            let left = if lo > 0 { cross(y[lo], y[lo - 1]) } else { 0.0 };
            let right = if hi + 1 < grid { cross(y[hi], y[hi + 1]) } else { 0.0 };
            let span = ((hi - lo) as f64 + left + right) * dt;
            let ratio = span / h;
            if count < 2 || span > 2.0 * count as f64 * dt {
                regular = false;
            }
            lo_r = lo_r.min(ratio);
            hi_r = hi_r.max(ratio);
        }
        if seen {
            stats.push(ScaleStats { h, regular, min_ratio: lo_r, max_ratio: hi_r });
        }
    }
    if stats.is_empty() {
        return Err(SvrError::EmptyPreimage);
    }
    let mut first = stats.len() - 1;
    while first > 0 && stats[first - 1].regular {
        first -= 1;
    }
    let omega_f = if first == 0 && stats[0].regular { 0.0 } else { stats[first].h };
    let c_f = stats[first..].iter().map(|s| s.max_ratio).fold(0.0, f64::max);
    let c_f_prime = stats[first..].iter().map(|s| s.min_ratio).fold(f64::INFINITY, f64::min);
    Ok(MonotonicityConstants { c_f, c_f_prime, omega_f })
}

/// Holder seminorm of order s on a uniform grid: the largest difference
/// quotient for s <= 1, or the same quotient of order s - 1 applied to a
/// finite-difference derivative for s in (1, 2].
pub fn estimate_holder_seminorm(link: &LinkSpec, s: f64, grid: usize) -> Result<f64> {
    if !(s > 0.0 && s <= 2.0) {
        return Err(SvrError::InvalidArgument(format!("exponent {s} outside (0, 2]")));
    }
    if grid < 1000 {
        return Err(SvrError::InvalidArgument(format!("grid {grid} is below 1000")));
    }
    let (t, y) = link.grid_values(grid);
    if s <= 1.0 {
        return Ok(max_quotient(&t, &y, s));
    }
    let dt = t[1] - t[0];
    let mid: Vec<f64> = t.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let der: Vec<f64> = y.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
    Ok(max_quotient(&mid, &der, s - 1.0))
}

fn max_quotient(t: &[f64], y: &[f64], s: f64) -> f64 {
    let mut best = 0.0f64;
    for i in 0..t.len() {
        for k in i + 1..t.len() {
            let q = (y[k] - y[i]).abs() / (t[k] - t[i]).powf(s);
            best = best.max(q);
        }
    }
    best
}
