//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Every key must be
//! one of [`KNOWN_KEYS`]; anything else is an error, as is a repeated key.

use crate::curve::{build_curve, normalize_to_reach, CurveShape, CurveSpec, Decay};
use crate::error::{Result, SvrError};
use crate::estimator::{DistanceMode, FitConfig, PartitionMode};
use crate::experiments::{ExperimentConfig, ParamStrategy};
use crate::link::{LinkKind, LinkSpec};
use crate::synthesis::ModelSpec;
use crate::tuning::AbsConstants;
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

pub const KNOWN_KEYS: &[&str] = &[
    "curve.kind",
    "curve.d",
    "curve.length",
    "curve.kappa",
    "curve.delta",
    "curve.a",
    "curve.amplitude",
    "curve.decay",
    "curve.scale",
    "curve.grid",
    "curve.normalize_reach",
    "link.kind",
    "link.s",
    "link.scale",
    "link.exponent",
    "link.table_t",
    "link.table_y",
    "sigma_gamma",
    "sigma_zeta",
    "trunc_frac",
    "tube_radius",
    "fit.l",
    "fit.j",
    "fit.m",
    "fit.M",
    "fit.partition",
    "fit.distance",
    "fit.heavy_factor",
    "fit.strict_paper_fallback",
    "abs.c_gamma_f",
    "abs.c_j",
    "abs.c_l_max",
    "abs.c_regime_a",
    "abs.c_regime_b",
    "abs.c1",
    "abs.c2",
    "experiment.id",
    "experiment.n_grid",
    "experiment.reps",
    "experiment.train_frac",
    "experiment.strategy",
    "experiment.oracle_n",
    "experiment.desk_scale",
    "experiment.seed",
    "experiment.timings",
];

pub const DEFAULT_GRID: usize = 4000;

fn default_smoothness(kind: &LinkKind) -> f64 {
    match kind {
        LinkKind::Identity | LinkKind::CustomTable { .. } => 1.0,
        LinkKind::ExpScaled { .. } => 2.0,
        LinkKind::PowerHolder { exponent } => exponent.clamp(0.5, 2.0),
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, (String, usize)>,
}

fn parse_err(line: usize, msg: impl Into<String>) -> SvrError {
    SvrError::Parse { line, msg: msg.into() }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let s = raw.trim();
            if s.is_empty() || s.starts_with('#') {
                continue;
            }
            let (k, v) = s.split_once('=').ok_or_else(|| parse_err(line, "expected key = value"))?;
            let (k, v) = (k.trim(), v.trim());
            if !KNOWN_KEYS.contains(&k) {
                return Err(parse_err(line, format!("unknown key {k:?}")));
            }
            if values.insert(k.to_string(), (v.to_string(), line)).is_some() {
                return Err(parse_err(line, format!("duplicate key {k:?}")));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Sets or replaces a key, validating the name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(parse_err(0, format!("unknown key {key:?}")));
        }
        self.values.insert(key.to_string(), (value.to_string(), 0));
        Ok(())
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(v, _)| v.as_str())
    }

    fn typed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some((v, line)) => {
                v.parse::<T>().map(Some).map_err(|_| parse_err(*line, format!("bad value {v:?} for {key}")))
            }
        }
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.typed(key)
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        self.typed(key)
    }

    fn require<T>(&self, key: &str, v: Option<T>) -> Result<T> {
        v.ok_or_else(|| parse_err(0, format!("missing key {key}")))
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.values.get(key) {
            None => Ok(None),
            Some((v, line)) => v
                .split(',')
                .map(|p| p.trim().parse::<f64>().map_err(|_| parse_err(*line, format!("bad number {p:?} in {key}"))))
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }

    pub fn curve_spec(&self) -> Result<CurveSpec> {
        let d = self.require("curve.d", self.get_usize("curve.d")?)?;
        let kind = self.require("curve.kind", self.get_str("curve.kind"))?;
        let length = self.get_f64("curve.length")?.unwrap_or(1.0);
        let shape = match kind {
            "line" => CurveShape::Line { length },
            "arc" => CurveShape::CircularArc {
                kappa: self.require("curve.kappa", self.get_f64("curve.kappa")?)?,
                length,
            },
            "meyer-staircase" => CurveShape::MeyerStaircase { delta: self.get_f64("curve.delta")? },
            "meyer-helix" => CurveShape::MeyerHelix {
                a: self.get_f64("curve.a")?.unwrap_or(10.0),
                amplitude: self.get_f64("curve.amplitude")?.unwrap_or(0.3),
                decay: match self.get_str("curve.decay").unwrap_or("bernstein") {
                    "bernstein" => Decay::Bernstein,
                    "gaussian" => Decay::Gaussian,
                    other => return Err(parse_err(0, format!("unknown decay {other:?}"))),
                },
            },
            other => return Err(parse_err(0, format!("unknown curve kind {other:?}"))),
        };
        let spec = CurveSpec { shape, d, scale: self.get_f64("curve.scale")?.unwrap_or(1.0) };
        spec.validate()?;
        Ok(spec)
    }

    /// Target reach: a number, or `sqrt_d` for sqrt(curve.d).
    pub fn normalize_reach(&self) -> Result<Option<f64>> {
        match self.get_str("curve.normalize_reach") {
            None => Ok(None),
            Some("sqrt_d") => {
                let d = self.require("curve.d", self.get_usize("curve.d")?)?;
                Ok(Some((d as f64).sqrt()))
            }
            Some(_) => self.get_f64("curve.normalize_reach"),
        }
    }

    fn link_kind(&self, len: f64) -> Result<LinkKind> {
        Ok(match self.get_str("link.kind").unwrap_or("identity") {
            "identity" => LinkKind::Identity,
            "exp_scaled" => LinkKind::ExpScaled { scale: self.get_f64("link.scale")?.unwrap_or(len) },
            "power_holder" => LinkKind::PowerHolder { exponent: self.get_f64("link.exponent")?.unwrap_or(0.7) },
            "custom_table" => LinkKind::CustomTable {
                t: self.require("link.table_t", self.list("link.table_t")?)?,
                y: self.require("link.table_y", self.list("link.table_y")?)?,
            },
            other => return Err(parse_err(0, format!("unknown link kind {other:?}"))),
        })
    }

    pub fn link_spec(&self, len: f64) -> Result<LinkSpec> {
        let kind = self.link_kind(len)?;
        let s = self.get_f64("link.s")?.unwrap_or_else(|| default_smoothness(&kind));
        LinkSpec::new(kind, s, (0.0, len))
    }

    /// `link.s`, or the default for `link.kind`.
    pub fn link_smoothness(&self) -> Result<f64> {
        if let Some(s) = self.get_f64("link.s")? {
            return Ok(s);
        }
        // the domain length only enters the exp scale, not the smoothness
        Ok(default_smoothness(&self.link_kind(1.0)?))
    }

    /// Builds (and optionally normalizes) the curve and assembles the model.
    pub fn model_spec(&self) -> Result<ModelSpec> {
        let spec = self.curve_spec()?;
        let grid = self.get_usize("curve.grid")?.unwrap_or(DEFAULT_GRID);
        let mut curve = build_curve(&spec, grid)?;
        if let Some(target) = self.normalize_reach()? {
            curve = normalize_to_reach(&curve, target)?;
        }
        let link = self.link_spec(curve.len())?;
        let mut model = ModelSpec::new(
            Arc::new(curve),
            link,
            self.require("sigma_gamma", self.get_f64("sigma_gamma")?)?,
            self.get_f64("sigma_zeta")?.unwrap_or(0.0),
        );
        if let Some(tf) = self.get_f64("trunc_frac")? {
            model.trunc_frac = tf;
        }
        model.tube_radius = self.get_f64("tube_radius")?;
        model.validate()?;
        Ok(model)
    }

    /// Fit settings; l and j default to 1 and m to the rule for the link
    /// smoothness.
    pub fn fit_config(&self) -> Result<FitConfig> {
        let s = self.link_smoothness()?;
        let mut fc = FitConfig::new(
            self.get_usize("fit.l")?.unwrap_or(1),
            self.get_usize("fit.j")?.unwrap_or(1),
            self.get_usize("fit.m")?.unwrap_or_else(|| FitConfig::default_degree(s)),
        );
        fc.truncation = match self.get_str("fit.M") {
            None | Some("inf") => None,
            Some(_) => self.get_f64("fit.M")?,
        };
        fc.partition = match self.get_str("fit.partition").unwrap_or("uniform") {
            "uniform" => PartitionMode::Uniform,
            "quantile" => PartitionMode::Quantile,
            other => return Err(parse_err(0, format!("unknown partition {other:?}"))),
        };
        fc.distance = match self.get_str("fit.distance").unwrap_or("paper") {
            "paper" => DistanceMode::Paper,
            "mahalanobis" => DistanceMode::Mahalanobis,
            other => return Err(parse_err(0, format!("unknown distance {other:?}"))),
        };
        if let Some(f) = self.get_f64("fit.heavy_factor")? {
            fc.heavy_threshold_factor = f;
        }
        if let Some(b) = self.typed::<bool>("fit.strict_paper_fallback")? {
            fc.strict_paper_fallback = b;
        }
        fc.validate()?;
        Ok(fc)
    }

    pub fn abs_constants(&self) -> Result<AbsConstants> {
        let mut a = AbsConstants::default();
        let fields: [(&str, &mut f64); 7] = [
            ("abs.c_gamma_f", &mut a.c_gamma_f),
            ("abs.c_j", &mut a.c_j),
            ("abs.c_l_max", &mut a.c_l_max),
            ("abs.c_regime_a", &mut a.c_regime_a),
            ("abs.c_regime_b", &mut a.c_regime_b),
            ("abs.c1", &mut a.c1),
            ("abs.c2", &mut a.c2),
        ];
        for (k, slot) in fields {
            if let Some(v) = self.get_f64(k)? {
                *slot = v;
            }
        }
        Ok(a)
    }

    pub fn experiment_config(&self) -> Result<ExperimentConfig> {
        let strategy = match self.get_str("experiment.strategy").unwrap_or("theory_noisy") {
            "theory_noisy" => ParamStrategy::TheoryNoisy,
            "theory_noiseless" => ParamStrategy::TheoryNoiseless,
            "theory_wide" => ParamStrategy::TheoryWide,
            "fixed" => ParamStrategy::Fixed {
                l: self.require("fit.l", self.get_usize("fit.l")?)?,
                j: self.get_usize("fit.j")?.unwrap_or(1),
            },
            other => return Err(parse_err(0, format!("unknown strategy {other:?}"))),
        };
        let n_grid = match self.list("experiment.n_grid")? {
            Some(v) => v.into_iter().map(|x| x as usize).collect(),
            None => vec![1_000, 3_000, 10_000, 30_000, 100_000, 200_000],
        };
        let kind = self.curve_spec()?.kind_name().to_string();
        let mut cfg = ExperimentConfig::new(
            self.get_str("experiment.id").unwrap_or("experiment"),
            &kind,
            n_grid,
            strategy,
        );
        if let Some(r) = self.get_usize("experiment.reps")? {
            cfg.reps = r;
        }
        if let Some(f) = self.get_f64("experiment.train_frac")? {
            cfg.train_frac = f;
        }
        let desk = self.get_f64("experiment.desk_scale")?.unwrap_or(10.0);
        cfg.oracle_n = match self.get_usize("experiment.oracle_n")? {
            Some(v) => v,
            None => (2e6 / desk).round() as usize,
        };
        if let Some(s) = self.typed::<u64>("experiment.seed")? {
            cfg.seed = s;
        }
        if let Some(b) = self.typed::<bool>("experiment.timings")? {
            cfg.record_timings = b;
        }
        cfg.m = self.get_usize("fit.m")?;
        cfg.fit = self.fit_config()?;
        cfg.abs_const = self.abs_constants()?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let err = Config::parse("# model\ncurve.d = 3\ncurve.colour = red\n").unwrap_err();
        assert!(matches!(err, SvrError::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn duplicate_key_is_rejected() {
        assert!(Config::parse("curve.d = 3\ncurve.d = 4\n").is_err());
    }

    #[test]
    fn fit_section_defaults() {
        let c = Config::parse("fit.l = 20\nfit.M = inf\nfit.partition = quantile\n").unwrap();
        let f = c.fit_config().unwrap();
        assert_eq!((f.l, f.j, f.m), (20, 1, 1));
        assert_eq!(f.truncation, None);
        assert_eq!(f.partition, PartitionMode::Quantile);
    }

    #[test]
    fn sqrt_d_normalization() {
        let c = Config::parse("curve.kind = meyer-helix\ncurve.d = 9\ncurve.normalize_reach = sqrt_d\n").unwrap();
        assert_eq!(c.normalize_reach().unwrap(), Some(3.0));
    }
}
