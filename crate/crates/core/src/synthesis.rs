//! Sampling from the tube model X = gamma(t) + M_{gamma'(t)} (Z, 0),
//! Y = f(t) + zeta.

use crate::curve::{DiscretizedCurve, Reach};
use crate::error::{Result, SvrError};
use crate::link::LinkSpec;
use crate::util::{dot, norm};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::sync::Arc;

/// Generator used for every random draw in the crate. ChaCha8 is portable
/// and its output is fixed for a given seed.
pub type SvrRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SvrRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TDistribution {
    UniformArcLength,
}

#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub curve: Arc<DiscretizedCurve>,
    pub link: LinkSpec,
    pub sigma_gamma: f64,
    pub sigma_zeta: f64,
    pub trunc_frac: f64,
    /// Overrides the tube radius; required in spirit for straight curves,
    /// where it defaults to 10 * sigma_gamma.
    pub tube_radius: Option<f64>,
    pub t_distribution: TDistribution,
}

impl ModelSpec {
    pub fn new(curve: Arc<DiscretizedCurve>, link: LinkSpec, sigma_gamma: f64, sigma_zeta: f64) -> Self {
        Self {
            curve,
            link,
            sigma_gamma,
            sigma_zeta,
            trunc_frac: 0.9,
            tube_radius: None,
            t_distribution: TDistribution::UniformArcLength,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_gamma > 0.0 && self.sigma_gamma.is_finite()) {
            return Err(SvrError::InvalidSpec("sigma_gamma must be positive".into()));
        }
        if !(self.sigma_zeta >= 0.0 && self.sigma_zeta.is_finite()) {
            return Err(SvrError::InvalidSpec("sigma_zeta must be nonnegative".into()));
        }
        if !(self.trunc_frac > 0.0 && self.trunc_frac < 1.0) {
            return Err(SvrError::InvalidSpec("trunc_frac must lie in (0, 1)".into()));
        }
        if let Some(r) = self.tube_radius {
            if !(r > 0.0) {
                return Err(SvrError::InvalidSpec("tube radius must be positive".into()));
            }
        }
        self.link.validate()
    }

    /// Radius of the truncated normal displacement.
    pub fn tube_radius(&self) -> Result<f64> {
        if let Some(r) = self.tube_radius {
            return Ok(r);
        }
        Ok(match self.curve.reach_estimate()? {
            Reach::Finite(r) => self.trunc_frac * r,
            Reach::Unbounded => 10.0 * self.sigma_gamma,
        })
    }

    /// Probability that an untruncated displacement lands inside the tube.
    pub fn acceptance_probability(&self) -> Result<f64> {
        let k = (self.curve.d() - 1) as f64;
        let r = self.tube_radius()? / self.sigma_gamma;
        let chi = ChiSquared::new(k).map_err(|e| SvrError::InvalidSpec(e.to_string()))?;
        Ok(chi.cdf(r * r))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub d: usize,
    /// Row-major n x d.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub oracle_t: Option<Vec<f64>>,
    /// Row-major n x d unit tangents.
    pub oracle_tangent: Option<Vec<f64>>,
    pub seed: u64,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn has_oracle(&self) -> bool {
        self.oracle_t.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if self.d == 0 || self.x.len() != n * self.d {
            return Err(SvrError::InvalidArgument("X and Y row counts disagree".into()));
        }
        if let Some(t) = &self.oracle_t {
            if t.len() != n {
                return Err(SvrError::InvalidArgument("oracle t length disagrees with n".into()));
            }
        }
        if let Some(g) = &self.oracle_tangent {
            if g.len() != n * self.d {
                return Err(SvrError::InvalidArgument("oracle tangent shape disagrees".into()));
            }
        }
        Ok(())
    }

    /// Rows selected by `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let d = self.d;
        let mut x = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            x.extend_from_slice(self.row(i));
        }
        Dataset {
            d,
            x,
            y: idx.iter().map(|&i| self.y[i]).collect(),
            oracle_t: self.oracle_t.as_ref().map(|t| idx.iter().map(|&i| t[i]).collect()),
            oracle_tangent: self.oracle_tangent.as_ref().map(|g| {
                let mut out = Vec::with_capacity(idx.len() * d);
                for &i in idx {
                    out.extend_from_slice(&g[i * d..(i + 1) * d]);
                }
                out
            }),
            seed: self.seed,
        }
    }
}

/// Householder reflection M_v with M_v e_d = v.
#[derive(Clone, Debug)]
pub struct Householder {
    w: Option<Vec<f64>>,
    d: usize,
}

impl Householder {
    pub fn apply(&self, z: &[f64], out: &mut [f64]) {
        out.copy_from_slice(z);
        if let Some(w) = &self.w {
            let c = 2.0 * dot(w, z);
            for (o, wk) in out.iter_mut().zip(w) {
                *o -= c * wk;
            }
        }
    }

    pub fn to_matrix(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::<f64>::identity(self.d, self.d);
        if let Some(w) = &self.w {
            for a in 0..self.d {
                for b in 0..self.d {
                    m[(a, b)] -= 2.0 * w[a] * w[b];
                }
            }
        }
        m
    }
}

pub fn rotation_to(v: &[f64]) -> Result<Householder> {
    let nv = norm(v);
    if (nv - 1.0).abs() > 1e-9 {
        return Err(SvrError::NonUnitVector(nv));
    }
    let d = v.len();
    let mut u: Vec<f64> = v.iter().map(|x| -x).collect();
    u[d - 1] += 1.0;
    let nu = norm(&u);
    if nu <= 1e-14 {
        return Ok(Householder { w: None, d });
    }
    u.iter_mut().for_each(|x| *x /= nu);
    Ok(Householder { w: Some(u), d })
}

/// Draws n samples. Per sample the order of draws is: t, displacement
/// (rejection loop), then noise, all from one ChaCha8 stream.
pub fn sample_dataset(model: &ModelSpec, n: usize, seed: u64) -> Result<Dataset> {
    model.validate()?;
    if n == 0 {
        return Err(SvrError::InvalidArgument("n must be at least 1".into()));
    }
    let radius = model.tube_radius()?;
    let prob = model.acceptance_probability()?;
    if prob < 1e-4 {
        return Err(SvrError::TubeCondition { prob, sigma_gamma: model.sigma_gamma, radius });
    }
    let curve = &model.curve;
    let d = curve.d();
    let len = curve.len();
    let mut rng = rng_from_seed(seed);
    let mut x = vec![0.0; n * d];
    let mut y = vec![0.0; n];
    let mut ts = vec![0.0; n];
    let mut tangents = vec![0.0; n * d];
    let mut z = vec![0.0; d];
    let mut disp = vec![0.0; d];
    let r2 = radius * radius;
    for i in 0..n {
        let t = len * rng.random::<f64>();
        let row = &mut x[i * d..(i + 1) * d];
        curve.point_at(t, row);
        let tan = &mut tangents[i * d..(i + 1) * d];
        curve.tangent_at(t, tan);
        loop {
            let mut s = 0.0;
            for zk in z.iter_mut().take(d - 1) {
                let g: f64 = rng.sample(StandardNormal);
                *zk = model.sigma_gamma * g;
                s += *zk * *zk;
            }
            if s < r2 {
                break;
            }
        }
        z[d - 1] = 0.0;
        rotation_to(tan)?.apply(&z, &mut disp);
        for (r, v) in row.iter_mut().zip(&disp) {
            *r += v;
        }
        let noise: f64 = rng.sample(StandardNormal);
        y[i] = model.link.eval(t) + model.sigma_zeta * noise;
        ts[i] = t;
    }
    Ok(Dataset { d, x, y, oracle_t: Some(ts), oracle_tangent: Some(tangents), seed })
}

/// F(x) = f(Pi_gamma x).
pub fn evaluate_f(model: &ModelSpec, x: &[f64]) -> f64 {
    model.link.eval(model.curve.project(x).t)
}
