//! Theory-driven choice of (l, j) and assumption diagnostics.

use crate::curve::{geometry_report, singular_values, Reach};
use crate::error::{Result, SvrError};
use crate::link::{estimate_holder_seminorm, estimate_monotonicity_constants};
use crate::synthesis::ModelSpec;
use serde::{Deserialize, Serialize};

/// Multipliers standing in for the unspecified absolute constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbsConstants {
    /// Multiplies C_{gamma,f}.
    pub c_gamma_f: f64,
    /// The constant C in j* = C.
    pub c_j: f64,
    /// Multiplies l_max (and hence the wide selector).
    pub c_l_max: f64,
    /// Right-hand multiplier of the first regime test.
    pub c_regime_a: f64,
    /// Constant C in the second regime test.
    pub c_regime_b: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for AbsConstants {
    fn default() -> Self {
        Self { c_gamma_f: 1.0, c_j: 1.0, c_l_max: 1.0, c_regime_a: 1.0, c_regime_b: 1.0, c1: 1.0, c2: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub c_f: f64,
    pub c_f_prime: f64,
    pub omega_f: f64,
    pub c_y: f64,
    pub r0: f64,
    pub sigma_gamma: f64,
    pub sigma_zeta: f64,
    pub len: f64,
    pub reach: f64,
    pub s: f64,
    pub seminorm_f: f64,
    pub sup_f: f64,
    pub seminorm_rho: f64,
    pub d: usize,
    pub abs_const: AbsConstants,
}

impl TheoryConstants {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SvrError::InvalidSpec(m.to_string()));
        if !(self.c_f_prime > 0.0 && self.c_f >= self.c_f_prime) {
            return bad("need C_f >= C_f' > 0");
        }
        if !(self.omega_f >= 0.0 && self.sigma_zeta >= 0.0) {
            return bad("omega_f and sigma_zeta must be nonnegative");
        }
        if !(self.c_y > 0.0 && self.r0 > 0.0 && self.sigma_gamma > 0.0 && self.len > 0.0 && self.reach > 0.0) {
            return bad("scale constants must be positive");
        }
        if !(0.5..=2.0).contains(&self.s) {
            return bad("s must lie in [0.5, 2]");
        }
        if self.d == 0 {
            return bad("d must be positive");
        }
        Ok(())
    }

    /// Constants of a synthetic model from its curve and link.
    ///
    /// R0 = sqrt(largest eigenvalue of the curve's point covariance +
    /// sigma_gamma^2); C_Y R0 is the range of f, so C_Y = range / R0. The
    /// density seminorm is 0 because t is uniform in arc length.
    pub fn from_model(model: &ModelSpec, abs_const: AbsConstants) -> Result<Self> {
        const GRID: usize = 4000;
        let curve = &model.curve;
        let report = geometry_report(curve)?;
        let reach = match report.reach {
            Reach::Finite(r) => r,
            Reach::Unbounded => model.tube_radius()?,
        };
        let sv = singular_values(curve);
        let var_max = sv[0] * sv[0] / curve.n_nodes() as f64;
        let r0 = (var_max + model.sigma_gamma.powi(2)).sqrt();

        let link = &model.link;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..GRID {
            let t = link.domain.0 + (link.domain.1 - link.domain.0) * i as f64 / (GRID - 1) as f64;
            let v = link.eval(t);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let range = hi - lo;
        if !(range > 0.0) {
            return Err(SvrError::InvalidSpec("link is constant; theory constants are undefined".into()));
        }
        let mono = estimate_monotonicity_constants(link, 20_000, range * 1e-3)?;
        Ok(Self {
            c_f: mono.c_f,
            c_f_prime: mono.c_f_prime,
            omega_f: mono.omega_f,
            c_y: range / r0,
            r0,
            sigma_gamma: model.sigma_gamma,
            sigma_zeta: model.sigma_zeta,
            len: curve.len(),
            reach,
            s: link.s,
            seminorm_f: estimate_holder_seminorm(link, link.s, 1500)?,
            sup_f: link.sup_norm(GRID),
            seminorm_rho: 0.0,
            d: curve.d(),
            abs_const,
        })
    }

    fn noise_scale(&self) -> f64 {
        self.sigma_zeta.max(self.omega_f)
    }
}

/// C_{gamma,f} including its absolute multiplier.
pub fn c_gamma_f(tc: &TheoryConstants) -> f64 {
    let d = tc.d as f64;
    let (r0, cf, cfp, sg) = (tc.r0, tc.c_f, tc.c_f_prime, tc.sigma_gamma);
    let first = tc.len * d.powf(1.5) / sg.powi(4);
    let second = r0.powi(5) * cf * cf * d.powi(4) / (cfp.powi(3) * sg.powi(8));
    tc.abs_const.c_gamma_f * (r0.powi(3) * cf * cf / cfp) * first.max(second)
}

pub fn m_star(tc: &TheoryConstants) -> Result<f64> {
    if !(tc.sigma_zeta > 0.0) {
        return Err(SvrError::ZeroNoise);
    }
    let s = tc.s;
    let base = (tc.c_f * tc.c_y * tc.r0).powf(s) * (tc.seminorm_f + tc.sup_f * tc.seminorm_rho) / tc.sigma_zeta;
    Ok(base.powf(2.0 / (2.0 * s + 1.0)))
}

pub fn l_max(tc: &TheoryConstants) -> Result<f64> {
    let den = tc.noise_scale();
    if !(den > 0.0) {
        return Err(SvrError::ZeroNoise);
    }
    Ok(tc.abs_const.c_l_max * tc.c_y * tc.r0 / den)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub c_gamma_f: f64,
    pub m_star: f64,
    pub l_max: f64,
}

pub fn derived_constants(tc: &TheoryConstants) -> Result<DerivedConstants> {
    Ok(DerivedConstants { c_gamma_f: c_gamma_f(tc), m_star: m_star(tc)?, l_max: l_max(tc)? })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Sample-limited: l* = n / (C_{gamma,f} log^2 n).
    SampleLimited,
    /// Noise saturated: l* = l_max, j* grows with n.
    Saturated,
    /// Balanced: l* = n^{1/(2s+1)} M*.
    Balanced,
    Noiseless,
    Wide,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::SampleLimited => "sample_limited",
            Regime::Saturated => "saturated",
            Regime::Balanced => "balanced",
            Regime::Noiseless => "noiseless",
            Regime::Wide => "wide",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub l: usize,
    pub j: usize,
    pub regime: Regime,
}

fn floor_count(v: f64) -> usize {
    if v.is_finite() && v >= 1.0 {
        v.floor() as usize
    } else if v.is_infinite() && v > 0.0 {
        usize::MAX
    } else {
        1
    }
}

fn cap_l(l: usize, n: usize, d: usize) -> usize {
    l.min(n / (2 * d)).max(1)
}

pub fn select_noisy(tc: &TheoryConstants, n: usize) -> Result<Selection> {
    let dc = derived_constants(tc)?;
    Ok(select_noisy_derived(&dc, tc, n))
}

/// The three-regime selector on precomputed constants.
pub fn select_noisy_derived(dc: &DerivedConstants, tc: &TheoryConstants, n: usize) -> Selection {
    let nf = n.max(2) as f64;
    let s = tc.s;
    let ab = &tc.abs_const;
    let log = nf.ln();
    let j_const = floor_count(ab.c_j);
    let a_lhs = nf.powf(2.0 * s / (2.0 * s + 1.0)) / (log * log);
    let rate = nf.powf(1.0 / (2.0 * s + 1.0));
    let (l, j, regime) = if a_lhs <= ab.c_regime_a * dc.c_gamma_f * dc.m_star {
        (floor_count(nf / (dc.c_gamma_f * log * log)), j_const, Regime::SampleLimited)
    } else if rate >= ab.c_regime_b * tc.c_y * tc.r0 / (dc.m_star * tc.noise_scale()) {
        let j = floor_count(ab.c_j * dc.m_star / dc.l_max * rate);
        (floor_count(dc.l_max), j, Regime::Saturated)
    } else {
        (floor_count(rate * dc.m_star), j_const, Regime::Balanced)
    };
    Selection { l: cap_l(l, n, tc.d), j: j.max(1), regime }
}

pub fn select_noiseless(tc: &TheoryConstants, n: usize) -> Result<Selection> {
    if tc.sigma_zeta > 0.0 {
        return Err(SvrError::NonzeroNoise);
    }
    Ok(select_noiseless_with(c_gamma_f(tc), tc.abs_const.c_j, tc.d, n))
}

pub fn select_noiseless_with(c_gamma_f: f64, c_j: f64, d: usize, n: usize) -> Selection {
    let nf = n.max(2) as f64;
    let l = floor_count(nf / (c_gamma_f * nf.ln().powf(1.5)));
    Selection { l: cap_l(l, n, d), j: floor_count(c_j), regime: Regime::Noiseless }
}

pub fn select_wide(tc: &TheoryConstants) -> Result<Selection> {
    let l = l_max(tc)?;
    Ok(Selection { l: floor_count(l), j: floor_count(tc.abs_const.c_j), regime: Regime::Wide })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub lcv_margin: f64,
    pub lcv_ok: bool,
    /// c1 C_f max(sigma_zeta, omega_f) - sigma_gamma
    pub sc_margin_noise: f64,
    /// c2 reach - C_f max(sigma_zeta, omega_f)
    pub sc_margin_reach: f64,
    pub sc_ok: bool,
    pub omega_ok: bool,
    pub n_min_noisy: u64,
    pub n_min_noiseless: u64,
}

/// Smallest integer n >= 5 with n / ln(n)^{3/2} >= rhs, by bisection.
pub fn n_min_for(rhs: f64) -> u64 {
    let g = |n: f64| n / n.ln().powf(1.5);
    let mut lo = 5.0f64;
    if g(lo) >= rhs {
        return 5;
    }
    let mut hi = 10.0f64;
    while g(hi) < rhs {
        hi *= 2.0;
        if hi > 1e300 {
            return u64::MAX;
        }
    }
    while hi - lo > 1.0 {
        let mid = (0.5 * (lo + hi)).floor();
        if mid <= lo {
            break;
        }
        if g(mid) >= rhs {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if hi >= u64::MAX as f64 {
        u64::MAX
    } else {
        hi as u64
    }
}

pub fn assumption_report(model: &ModelSpec, tc: &TheoryConstants) -> AssumptionReport {
    let noise = tc.noise_scale();
    let lcv_margin = model.sigma_gamma - 2.0 * tc.c_f * noise;
    let sc_margin_noise = tc.abs_const.c1 * tc.c_f * noise - model.sigma_gamma;
    let sc_margin_reach = tc.abs_const.c2 * tc.reach - tc.c_f * noise;
    let omega_ok = tc.c_f.is_finite() && tc.c_f_prime.is_finite() && tc.c_f_prime > 0.0 && tc.c_f >= tc.c_f_prime;
    let rhs = c_gamma_f(tc) * tc.c_f * tc.len / (tc.c_f_prime * tc.sigma_gamma);
    let n_min = n_min_for(rhs);
    AssumptionReport {
        lcv_margin,
        lcv_ok: lcv_margin > 0.0,
        sc_margin_noise,
        sc_margin_reach,
        sc_ok: sc_margin_noise >= 0.0 && sc_margin_reach >= 0.0,
        omega_ok,
        n_min_noisy: n_min,
        n_min_noiseless: n_min,
    }
}
