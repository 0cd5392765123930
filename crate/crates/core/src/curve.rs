//! Curves in R^d: construction, arc-length discretization, closest-point
//! projection, reach and the summary statistics used to compare curves.

use crate::error::{Result, SvrError};
use crate::link::LinkSpec;
use crate::util::{dist2, dot, norm};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::OnceLock;

/// Native-parameter oversampling factor used before arc-length resampling.
const OVERSAMPLE: usize = 50;
/// Pairs closer than this many grid steps are skipped by the bottleneck bound.
const BOTTLENECK_GUARD: usize = 10;
const LEAF_SIZE: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decay {
    /// exp(-z^2 / (1 + z))
    Bernstein,
    /// exp(-z^2)
    Gaussian,
}

impl Decay {
    fn eval(self, z: f64) -> f64 {
        match self {
            Decay::Bernstein => (-z * z / (1.0 + z)).exp(),
            Decay::Gaussian => (-z * z).exp(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CurveShape {
    /// Segment from the origin along the first axis.
    Line { length: f64 },
    /// Arc of radius 1/kappa in the plane of the first two axes.
    CircularArc { kappa: f64, length: f64 },
    /// Meyer staircase; `delta = None` selects the modified width 1/d.
    MeyerStaircase { delta: Option<f64> },
    /// Meyer helix with phase constant `a` and width modulation `amplitude`.
    MeyerHelix { a: f64, amplitude: f64, decay: Decay },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec {
    pub shape: CurveShape,
    pub d: usize,
    pub scale: f64,
}

impl CurveSpec {
    pub fn line(d: usize, length: f64) -> Self {
        Self { shape: CurveShape::Line { length }, d, scale: 1.0 }
    }

    pub fn arc(d: usize, kappa: f64, length: f64) -> Self {
        Self { shape: CurveShape::CircularArc { kappa, length }, d, scale: 1.0 }
    }

    pub fn meyer_staircase(d: usize, delta: Option<f64>) -> Self {
        Self { shape: CurveShape::MeyerStaircase { delta }, d, scale: 1.0 }
    }

    /// The helix with the standard constants a = 10, amplitude 0.3 and
    /// Bernstein-type decay.
    pub fn meyer_helix(d: usize) -> Self {
        Self {
            shape: CurveShape::MeyerHelix { a: 10.0, amplitude: 0.3, decay: Decay::Bernstein },
            d,
            scale: 1.0,
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn kind_name(&self) -> &'static str {
        match self.shape {
            CurveShape::Line { .. } => "line",
            CurveShape::CircularArc { .. } => "arc",
            CurveShape::MeyerStaircase { .. } => "meyer-staircase",
            CurveShape::MeyerHelix { .. } => "meyer-helix",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SvrError::InvalidSpec(m.to_string()));
        if self.d < 2 {
            return bad("d must be at least 2");
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return bad("scale must be positive");
        }
        match self.shape {
            CurveShape::Line { length } => {
                if !(length > 0.0 && length.is_finite()) {
                    return bad("line length must be positive");
                }
            }
            CurveShape::CircularArc { kappa, length } => {
                if !(kappa > 0.0 && kappa.is_finite()) {
                    return bad("arc curvature must be positive");
                }
                if !(length > 0.0 && length.is_finite()) {
                    return bad("arc length must be positive");
                }
            }
            CurveShape::MeyerStaircase { delta } => {
                if let Some(w) = delta {
                    if !(w > 0.0 && w.is_finite()) {
                        return bad("staircase width must be positive");
                    }
                }
            }
            CurveShape::MeyerHelix { a, amplitude, .. } => {
                if !a.is_finite() {
                    return bad("helix constant a must be finite");
                }
                // keeps both widths delta_d and delta'_d positive
                if !(0.0..1.0).contains(&amplitude) {
                    return bad("helix amplitude must lie in [0, 1)");
                }
            }
        }
        Ok(())
    }

    fn native_domain(&self) -> (f64, f64) {
        match self.shape {
            CurveShape::Line { length } => (0.0, length),
            CurveShape::CircularArc { length, .. } => (0.0, length),
            CurveShape::MeyerStaircase { .. } | CurveShape::MeyerHelix { .. } => (0.0, 1.0),
        }
    }

    /// The analytic map in its native parameter, before scaling.
    pub fn eval_native(&self, u: f64, out: &mut [f64]) {
        let d = self.d;
        out.iter_mut().for_each(|v| *v = 0.0);
        let norm_c = (2.0 * PI).powf(-0.25);
        match self.shape {
            CurveShape::Line { .. } => out[0] = u,
            CurveShape::CircularArc { kappa, .. } => {
                let r = 1.0 / kappa;
                out[0] = r * (u / r).sin();
                out[1] = r * (1.0 - (u / r).cos());
            }
            CurveShape::MeyerStaircase { delta } => {
                let w = delta.unwrap_or(1.0 / d as f64);
                let c = norm_c / w.sqrt();
                for (k, v) in out.iter_mut().enumerate() {
                    let g = (k + 1) as f64 / d as f64;
                    *v = c * (-(g - u) * (g - u) / (4.0 * w * w)).exp();
                }
            }
            CurveShape::MeyerHelix { a, amplitude, decay } => {
                for (k, v) in out.iter_mut().enumerate() {
                    let kf = (k + 1) as f64;
                    let g = kf / d as f64;
                    let w = (1.0 + amplitude * (a * kf).cos()) / d as f64;
                    let wp = (1.0 + amplitude * (a * kf).sin()) / d as f64;
                    *v = norm_c / w.sqrt()
                        * (a * kf + (u - g) / wp).cos()
                        * decay.eval((g - u).abs() / w);
                }
            }
        }
    }
}

/// Global reach; straight curves have no finite reach.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Reach {
    Finite(f64),
    Unbounded,
}

impl Reach {
    pub fn value(self) -> f64 {
        match self {
            Reach::Finite(r) => r,
            Reach::Unbounded => f64::INFINITY,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Reach::Finite(r) => Some(r),
            Reach::Unbounded => None,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct BallNode {
    lo: usize,
    hi: usize,
    radius: f64,
    children: Option<(usize, usize)>,
}

/// Ball tree over contiguous runs of curve nodes. Runs along a curve are
/// spatially compact, so no reordering is needed and leaf scans visit
/// indices in increasing order.
#[derive(Clone, Debug)]
struct BallTree {
    nodes: Vec<BallNode>,
    centers: Vec<f64>,
    d: usize,
}

impl BallTree {
    fn build(points: &[f64], d: usize) -> Self {
        let n = points.len() / d;
        let mut tree = BallTree { nodes: Vec::new(), centers: Vec::new(), d };
        tree.build_range(points, 0, n);
        tree
    }

    fn build_range(&mut self, points: &[f64], lo: usize, hi: usize) -> usize {
        let d = self.d;
        let mut c = vec![0.0; d];
        for i in lo..hi {
            for k in 0..d {
                c[k] += points[i * d + k];
            }
        }
        c.iter_mut().for_each(|v| *v /= (hi - lo) as f64);
        let radius = (lo..hi)
            .map(|i| dist2(&points[i * d..(i + 1) * d], &c))
            .fold(0.0, f64::max)
            .sqrt();
        let id = self.nodes.len();
        self.nodes.push(BallNode { lo, hi, radius, children: None });
        self.centers.extend_from_slice(&c);
        if hi - lo > LEAF_SIZE {
            let mid = lo + (hi - lo) / 2;
            let l = self.build_range(points, lo, mid);
            let r = self.build_range(points, mid, hi);
            self.nodes[id].children = Some((l, r));
        }
        id
    }

    fn lower_bound(&self, id: usize, x: &[f64]) -> f64 {
        let c = &self.centers[id * self.d..(id + 1) * self.d];
        (dist2(x, c).sqrt() - self.nodes[id].radius).max(0.0)
    }

    /// Smallest index among nodes whose squared distance is within a
    /// relative 1e-9 of the minimum.
    fn nearest(&self, points: &[f64], x: &[f64]) -> (usize, f64) {
        let mut best = (0usize, f64::INFINITY);
        self.nearest_rec(0, points, x, &mut best);
        let thr = best.1 * (1.0 + 2e-9);
        let mut first = None;
        self.first_within(0, points, x, thr, &mut first);
        let i = first.unwrap_or(best.0);
        (i, dist2(x, &points[i * self.d..(i + 1) * self.d]))
    }

    fn nearest_rec(&self, id: usize, points: &[f64], x: &[f64], best: &mut (usize, f64)) {
        let lb = self.lower_bound(id, x);
        if lb * lb > best.1 {
            return;
        }
        let node = self.nodes[id];
        match node.children {
            None => {
                for i in node.lo..node.hi {
                    let v = dist2(x, &points[i * self.d..(i + 1) * self.d]);
                    if v < best.1 {
                        *best = (i, v);
                    }
                }
            }
            Some((l, r)) => {
                let (a, b) = if self.lower_bound(l, x) <= self.lower_bound(r, x) { (l, r) } else { (r, l) };
                self.nearest_rec(a, points, x, best);
                self.nearest_rec(b, points, x, best);
            }
        }
    }

    fn first_within(&self, id: usize, points: &[f64], x: &[f64], thr: f64, out: &mut Option<usize>) {
        if out.is_some() {
            return;
        }
        let lb = self.lower_bound(id, x);
        if lb * lb > thr {
            return;
        }
        let node = self.nodes[id];
        match node.children {
            None => {
                for i in node.lo..node.hi {
                    if dist2(x, &points[i * self.d..(i + 1) * self.d]) <= thr {
                        *out = Some(i);
                        return;
                    }
                }
            }
            Some((l, r)) => {
                self.first_within(l, points, x, thr, out);
                self.first_within(r, points, x, thr, out);
            }
        }
    }

    fn for_each_within(&self, id: usize, points: &[f64], x: &[f64], radius: f64, f: &mut impl FnMut(usize)) {
        if self.lower_bound(id, x) > radius {
            return;
        }
        let node = self.nodes[id];
        match node.children {
            None => {
                let r2 = radius * radius;
                for i in node.lo..node.hi {
                    if dist2(x, &points[i * self.d..(i + 1) * self.d]) <= r2 {
                        f(i);
                    }
                }
            }
            Some((l, r)) => {
                self.for_each_within(l, points, x, radius, f);
                self.for_each_within(r, points, x, radius, f);
            }
        }
    }
}

/// Arc-length parameterized polyline with unit tangents. Positions between
/// nodes use cubic Hermite interpolation, so the curve is C^1.
#[derive(Clone, Debug)]
pub struct DiscretizedCurve {
    t: Vec<f64>,
    points: Vec<f64>,
    tangents: Vec<f64>,
    len: f64,
    d: usize,
    tree: BallTree,
    reach: OnceLock<Reach>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub t: f64,
    pub dist: f64,
}

pub fn build_curve(spec: &CurveSpec, grid_size: usize) -> Result<DiscretizedCurve> {
    spec.validate()?;
    if grid_size < 1000 {
        return Err(SvrError::InvalidArgument(format!("grid_size {grid_size} is below 1000")));
    }
    let d = spec.d;
    let fine = OVERSAMPLE * grid_size;
    let (u0, u1) = spec.native_domain();
    let du = (u1 - u0) / (fine - 1) as f64;

    let mut cum = Vec::with_capacity(fine);
    let mut prev = vec![0.0; d];
    let mut cur = vec![0.0; d];
    spec.eval_native(u0, &mut prev);
    cum.push(0.0);
    for i in 1..fine {
        spec.eval_native(u0 + du * i as f64, &mut cur);
        cum.push(cum[i - 1] + dist2(&prev, &cur).sqrt());
        std::mem::swap(&mut prev, &mut cur);
    }
    let total = cum[fine - 1];
    if !(total * spec.scale >= 1e-12) {
        return Err(SvrError::DegenerateCurve(total * spec.scale));
    }

    let mut t = Vec::with_capacity(grid_size);
    let mut points = vec![0.0; grid_size * d];
    let mut cell = 0usize;
    for k in 0..grid_size {
        let s = total * k as f64 / (grid_size - 1) as f64;
        while cell + 2 < fine && cum[cell + 1] < s {
            cell += 1;
        }
        let w = cum[cell + 1] - cum[cell];
        let frac = if w > 0.0 { ((s - cum[cell]) / w).clamp(0.0, 1.0) } else { 0.0 };
        let u = if k == grid_size - 1 { u1 } else { u0 + du * (cell as f64 + frac) };
        spec.eval_native(u, &mut points[k * d..(k + 1) * d]);
        t.push(s * spec.scale);
    }
    points.iter_mut().for_each(|v| *v *= spec.scale);
    DiscretizedCurve::from_parts(t, points, d)
}

impl DiscretizedCurve {
    /// Arc-length discretization of an arbitrary polyline: t is the
    /// cumulative chord length. Repeated consecutive nodes are dropped.
    pub fn from_polyline(points: &[f64], d: usize) -> Result<Self> {
        if d == 0 || points.len() % d != 0 {
            return Err(SvrError::InvalidArgument("point buffer does not match dimension".into()));
        }
        let n = points.len() / d;
        let mut kept: Vec<f64> = Vec::with_capacity(points.len());
        let mut t = Vec::with_capacity(n);
        for i in 0..n {
            let p = &points[i * d..(i + 1) * d];
            if let Some(&last_t) = t.last() {
                let q = &kept[kept.len() - d..];
                let step = dist2(p, q).sqrt();
                if step <= 1e-14 * (1.0 + norm(p)) {
                    continue;
                }
                t.push(last_t + step);
            } else {
                t.push(0.0);
            }
            kept.extend_from_slice(p);
        }
        let len = *t.last().unwrap_or(&0.0);
        if t.len() < 3 || len < 1e-12 {
            return Err(SvrError::DegenerateCurve(len));
        }
        Self::from_parts(t, kept, d)
    }

    fn from_parts(t: Vec<f64>, points: Vec<f64>, d: usize) -> Result<Self> {
        let n = t.len();
        if n < 3 {
            return Err(SvrError::DegenerateCurve(*t.last().unwrap_or(&0.0)));
        }
        let len = t[n - 1];
        let tangents = difference_tangents(&t, &points, d)?;
        let tree = BallTree::build(&points, d);
        Ok(Self { t, points, tangents, len, d, tree, reach: OnceLock::new() })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> f64 {
        self.len
    }

    pub fn n_nodes(&self) -> usize {
        self.t.len()
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    /// Row-major node positions, `n_nodes() * d()` values.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    pub fn tangent(&self, i: usize) -> &[f64] {
        &self.tangents[i * self.d..(i + 1) * self.d]
    }

    /// Mean grid step.
    pub fn spacing(&self) -> f64 {
        self.len / (self.n_nodes() - 1) as f64
    }

    fn cell_of(&self, t: f64) -> usize {
        let i = self.t.partition_point(|&v| v <= t);
        i.saturating_sub(1).min(self.n_nodes() - 2)
    }

    /// gamma(t) with t clamped to [0, len].
    pub fn point_at(&self, t: f64, out: &mut [f64]) {
        let t = t.clamp(0.0, self.len);
        let i = self.cell_of(t);
        let h = self.t[i + 1] - self.t[i];
        let s = (t - self.t[i]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = (s3 - 2.0 * s2 + s) * h;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = (s3 - s2) * h;
        let (p0, p1) = (self.point(i), self.point(i + 1));
        let (m0, m1) = (self.tangent(i), self.tangent(i + 1));
        for k in 0..self.d {
            out[k] = h00 * p0[k] + h10 * m0[k] + h01 * p1[k] + h11 * m1[k];
        }
    }

    /// Derivative of the interpolant, not normalized.
    fn velocity_at(&self, t: f64, out: &mut [f64]) {
        let t = t.clamp(0.0, self.len);
        let i = self.cell_of(t);
        let h = self.t[i + 1] - self.t[i];
        let s = (t - self.t[i]) / h;
        let s2 = s * s;
        let d00 = (6.0 * s2 - 6.0 * s) / h;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = (-6.0 * s2 + 6.0 * s) / h;
        let d11 = 3.0 * s2 - 2.0 * s;
        let (p0, p1) = (self.point(i), self.point(i + 1));
        let (m0, m1) = (self.tangent(i), self.tangent(i + 1));
        for k in 0..self.d {
            out[k] = d00 * p0[k] + d10 * m0[k] + d01 * p1[k] + d11 * m1[k];
        }
    }

    /// Unit tangent gamma'(t).
    pub fn tangent_at(&self, t: f64, out: &mut [f64]) {
        self.velocity_at(t, out);
        let nv = norm(out);
        if nv > 0.0 {
            out.iter_mut().for_each(|v| *v /= nv);
        }
    }

    /// Closest point on the curve. Coarse pass over the nodes, then a
    /// bracketing refinement on the two cells adjacent to the best node.
    /// Ties resolve to the smallest parameter.
    pub fn project(&self, x: &[f64]) -> Projection {
        let (i, d2) = self.tree.nearest(&self.points, x);
        let mut best_t = self.t[i];
        let mut best_d2 = d2;
        let mut g = vec![0.0; self.d];
        let lo = i.saturating_sub(1);
        let hi = (i + 1).min(self.n_nodes() - 1);
        for c in lo..hi {
            if let Some(tc) = self.refine_cell(c, x, &mut g) {
                self.point_at(tc, &mut g);
                let v = dist2(x, &g);
                if v < best_d2 - 1e-12 * best_d2 {
                    best_d2 = v;
                    best_t = tc;
                }
            }
        }
        Projection { t: best_t, dist: best_d2.sqrt() }
    }

    /// Interior stationary point of the squared distance on cell c, found by
    /// bisection on phi(t) = <gamma(t) - x, gamma'(t)>.
    fn refine_cell(&self, c: usize, x: &[f64], buf: &mut [f64]) -> Option<f64> {
        let mut v = vec![0.0; self.d];
        let mut phi = |t: f64| {
            self.point_at(t, buf);
            self.velocity_at(t, &mut v);
            buf.iter().zip(x).zip(&v).map(|((g, xi), vi)| (g - xi) * vi).sum::<f64>()
        };
        let (mut a, mut b) = (self.t[c], self.t[c + 1]);
        let (fa, fb) = (phi(a), phi(b));
        if !(fa < 0.0 && fb > 0.0) {
            return None;
        }
        let tol = 1e-10 * (b - a).max(1e-300) * 1e-3;
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b || b - a <= tol {
                break;
            }
            if phi(m) < 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        Some(0.5 * (a + b))
    }

    pub fn project_many(&self, xs: &[f64]) -> Vec<Projection> {
        use rayon::prelude::*;
        xs.par_chunks(self.d).map(|x| self.project(x)).collect()
    }

    /// Per-node curvature from second differences on the arc-length grid;
    /// the endpoints copy their neighbours.
    pub fn curvatures(&self) -> Vec<f64> {
        let n = self.n_nodes();
        let d = self.d;
        let mut kappa = vec![0.0; n];
        let mut acc = vec![0.0; d];
        for i in 1..n - 1 {
            let h0 = self.t[i] - self.t[i - 1];
            let h1 = self.t[i + 1] - self.t[i];
            let (pm, p, pp) = (self.point(i - 1), self.point(i), self.point(i + 1));
            for k in 0..d {
                acc[k] = 2.0 * ((pp[k] - p[k]) / h1 - (p[k] - pm[k]) / h0) / (h0 + h1);
            }
            kappa[i] = norm(&acc);
        }
        kappa[0] = kappa[1];
        kappa[n - 1] = kappa[n - 2];
        kappa
    }

    /// Smaller of the curvature bound and the pairwise bottleneck bound.
    pub fn reach_estimate(&self) -> Result<Reach> {
        if self.n_nodes() < 100 {
            return Err(SvrError::GridTooCoarse(self.n_nodes()));
        }
        Ok(*self.reach.get_or_init(|| self.compute_reach()))
    }

    fn compute_reach(&self) -> Reach {
        let max_k = self.curvatures().into_iter().fold(0.0, f64::max);
        if max_k * self.len <= 1e-9 {
            return Reach::Unbounded;
        }
        let mut best = 1.0 / max_k;
        let d = self.d;
        let mut w = vec![0.0; d];
        for p in 0..self.n_nodes() {
            let (pp, tp) = (self.point(p), self.tangent(p));
            let radius = 2.0 * best;
            let mut local = best;
            self.tree.for_each_within(0, &self.points, pp, radius, &mut |q| {
                if q.abs_diff(p) <= BOTTLENECK_GUARD {
                    return;
                }
                let pq = self.point(q);
                for k in 0..d {
                    w[k] = pq[k] - pp[k];
                }
                let a = dot(&w, tp);
                let w2 = dot(&w, &w);
                let perp = w.iter().zip(tp).map(|(wk, tk)| (wk - a * tk).powi(2)).sum::<f64>().sqrt();
                if perp > 1e-12 * w2.sqrt() {
                    local = local.min(w2 / (2.0 * perp));
                }
            });
            best = local;
        }
        Reach::Finite(best)
    }

    /// Similarity copy with points and parameters multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(SvrError::InvalidArgument("scale factor must be positive".into()));
        }
        let t = self.t.iter().map(|v| v * factor).collect();
        let points = self.points.iter().map(|v| v * factor).collect();
        let tree = BallTree::build(&self.points.iter().map(|v| v * factor).collect::<Vec<_>>(), self.d);
        let out = Self {
            t,
            points,
            tangents: self.tangents.clone(),
            len: self.len * factor,
            d: self.d,
            tree,
            reach: OnceLock::new(),
        };
        if let Some(r) = self.reach.get() {
            let _ = out.reach.set(match r {
                Reach::Finite(v) => Reach::Finite(v * factor),
                Reach::Unbounded => Reach::Unbounded,
            });
        }
        Ok(out)
    }
}

fn difference_tangents(t: &[f64], points: &[f64], d: usize) -> Result<Vec<f64>> {
    let n = t.len();
    let mut out = vec![0.0; n * d];
    let p = |i: usize, k: usize| points[i * d + k];
    for i in 0..n {
        let (a, b, c, ia, ib, ic) = if i == 0 {
            let (h0, h1) = (t[1] - t[0], t[2] - t[1]);
            (
                -(2.0 * h0 + h1) / (h0 * (h0 + h1)),
                (h0 + h1) / (h0 * h1),
                -h0 / (h1 * (h0 + h1)),
                0,
                1,
                2,
            )
        } else if i == n - 1 {
            let (h0, h1) = (t[n - 2] - t[n - 3], t[n - 1] - t[n - 2]);
            (
                h1 / (h0 * (h0 + h1)),
                -(h0 + h1) / (h0 * h1),
                (2.0 * h1 + h0) / (h1 * (h0 + h1)),
                n - 3,
                n - 2,
                n - 1,
            )
        } else {
            let (h0, h1) = (t[i] - t[i - 1], t[i + 1] - t[i]);
            (-h1 / (h0 * (h0 + h1)), (h1 - h0) / (h0 * h1), h0 / (h1 * (h0 + h1)), i - 1, i, i + 1)
        };
        let row = &mut out[i * d..(i + 1) * d];
        for k in 0..d {
            row[k] = a * p(ia, k) + b * p(ib, k) + c * p(ic, k);
        }
        let nr = norm(row);
        if !(nr > 0.0) {
            return Err(SvrError::DegenerateCurve(0.0));
        }
        row.iter_mut().for_each(|v| *v /= nr);
    }
    Ok(out)
}

pub fn closest_point_projection(curve: &DiscretizedCurve, x: &[f64]) -> Projection {
    curve.project(x)
}

pub fn reach_estimate(curve: &DiscretizedCurve) -> Result<Reach> {
    curve.reach_estimate()
}

pub fn normalize_to_reach(curve: &DiscretizedCurve, target: f64) -> Result<DiscretizedCurve> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(SvrError::InvalidArgument("target reach must be positive".into()));
    }
    match curve.reach_estimate()? {
        Reach::Unbounded => Err(SvrError::UnboundedReach),
        Reach::Finite(r) if r > 0.0 => curve.scaled(target / r),
        Reach::Finite(_) => Err(SvrError::DegenerateCurve(0.0)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveGeometryReport {
    pub len: f64,
    pub reach: Reach,
    pub max_curvature: f64,
    pub stable_rank_sum: f64,
    pub stable_rank_count: usize,
    pub regression_complexity: f64,
}

/// Singular values of the centered node matrix, descending.
pub fn singular_values(curve: &DiscretizedCurve) -> Vec<f64> {
    let gram = centered_gram(curve);
    let mut ev: Vec<f64> = gram.symmetric_eigenvalues().iter().map(|v| v.max(0.0).sqrt()).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

fn centered_gram(curve: &DiscretizedCurve) -> DMatrix<f64> {
    let (n, d) = (curve.n_nodes(), curve.d());
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(curve.point(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut g = DMatrix::<f64>::zeros(d, d);
    let mut c = vec![0.0; d];
    for i in 0..n {
        for (k, v) in curve.point(i).iter().enumerate() {
            c[k] = v - mean[k];
        }
        for a in 0..d {
            for b in a..d {
                g[(a, b)] += c[a] * c[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            g[(a, b)] = g[(b, a)];
        }
    }
    g
}

pub fn geometry_report(curve: &DiscretizedCurve) -> Result<CurveGeometryReport> {
    let reach = curve.reach_estimate()?;
    let max_curvature = curve.curvatures().into_iter().fold(0.0, f64::max);
    let sv = singular_values(curve);
    let top = sv[0];
    let (stable_rank_sum, stable_rank_count) = if top > 0.0 {
        (sv.iter().sum::<f64>() / top, sv.iter().filter(|&&v| v > 0.05 * top).count())
    } else {
        (1.0, 1)
    };
    let regression_complexity = match reach {
        Reach::Finite(r) => curve.len() / r,
        Reach::Unbounded => 0.0,
    };
    Ok(CurveGeometryReport {
        len: curve.len(),
        reach,
        max_curvature,
        stable_rank_sum,
        stable_rank_count,
        regression_complexity,
    })
}

/// Top-k principal directions of the curve nodes as a d x k matrix.
pub fn pca_projector(curve: &DiscretizedCurve, k: usize) -> Result<DMatrix<f64>> {
    let d = curve.d();
    if k == 0 || k > d {
        return Err(SvrError::InvalidArgument(format!("projection rank {k} outside 1..={d}")));
    }
    let eig = centered_gram(curve).symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut p = DMatrix::<f64>::zeros(d, k);
    for (c, &i) in order.iter().take(k).enumerate() {
        p.set_column(c, &eig.eigenvectors.column(i));
    }
    Ok(p)
}

/// Maps the curve through `projector` (d x d', orthonormal columns),
/// optionally rescales by sqrt(d/d'), and reports the image geometry.
pub fn project_and_measure(
    curve: &DiscretizedCurve,
    projector: &DMatrix<f64>,
    rescale: bool,
) -> Result<CurveGeometryReport> {
    let (d, dp) = projector.shape();
    if d != curve.d() || dp == 0 {
        return Err(SvrError::InvalidArgument(format!(
            "projector is {d}x{dp}, curve dimension is {}",
            curve.d()
        )));
    }
    let gram = projector.transpose() * projector;
    let dev = (gram - DMatrix::<f64>::identity(dp, dp)).abs().max();
    if dev > 1e-9 {
        return Err(SvrError::InvalidArgument(format!("projector columns not orthonormal ({dev:e})")));
    }
    let factor = if rescale { (d as f64 / dp as f64).sqrt() } else { 1.0 };
    let n = curve.n_nodes();
    let mut out = vec![0.0; n * dp];
    for i in 0..n {
        let p = curve.point(i);
        for c in 0..dp {
            out[i * dp + c] = factor * projector.column(c).iter().zip(p).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    let image = DiscretizedCurve::from_polyline(&out, dp)?;
    geometry_report(&image)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Alignment {
    /// Angle in radians between the response gradient and the tangent line.
    Angle(f64),
    /// The gradient is numerically zero.
    FlatLink,
}

/// Central-difference gradient of x -> f(Pi_gamma x).
pub fn response_gradient(curve: &DiscretizedCurve, link: &LinkSpec, x: &[f64], step: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    let mut g = vec![0.0; x.len()];
    for k in 0..x.len() {
        xp[k] = x[k] + step;
        let fp = link.eval(curve.project(&xp).t);
        xp[k] = x[k] - step;
        let fm = link.eval(curve.project(&xp).t);
        xp[k] = x[k];
        g[k] = (fp - fm) / (2.0 * step);
    }
    g
}

pub fn level_set_alignment_check(
    curve: &DiscretizedCurve,
    link: &LinkSpec,
    x: &[f64],
    step: f64,
) -> Result<Alignment> {
    if !(step > 0.0 && step <= 1e-4 * curve.len()) {
        return Err(SvrError::InvalidArgument(format!("step {step} must lie in (0, 1e-4 * len]")));
    }
    let g = response_gradient(curve, link, x, step);
    let ng = norm(&g);
    if ng < 1e-10 {
        return Ok(Alignment::FlatLink);
    }
    let mut tan = vec![0.0; curve.d()];
    curve.tangent_at(curve.project(x).t, &mut tan);
    let c = (dot(&g, &tan).abs() / ng).min(1.0);
    Ok(Alignment::Angle(c.acos()))
}
