//! Experiment harness: repeated fits over a grid of sample sizes, oracle
//! slice parameters, error metrics, rate fitting and CSV output.

use crate::error::{Result, SvrError};
use crate::estimator::{
    classification_indices, fit, fit_with, predict_many, FitConfig, Partition, SliceOverride, SvrModel,
};
use crate::synthesis::{rng_from_seed, sample_dataset, Dataset, ModelSpec};
use crate::tuning::{select_noiseless, select_noisy, select_wide, AbsConstants, Selection, TheoryConstants};
use crate::util::{derive_seed, dot, ls_slope, mix64};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::time::Instant;

pub const CSV_HEADER: [&str; 19] = [
    "experiment_id",
    "curve_kind",
    "d",
    "n",
    "rep",
    "sigma_zeta",
    "sigma_gamma",
    "l",
    "j",
    "m",
    "mse",
    "rel_mse",
    "center_err",
    "vec_err",
    "h_mean",
    "misclass2",
    "fit_ms",
    "pred_ms",
    "failed",
];

const ORACLE_STREAM: u64 = 0x6f72_6163_6c65;
const SPLIT_STREAM: u64 = 0x7370_6c69_74;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ParamStrategy {
    TheoryNoisy,
    TheoryNoiseless,
    TheoryWide,
    Fixed { l: usize, j: usize },
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub id: String,
    pub curve_kind: String,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub train_frac: f64,
    pub strategy: ParamStrategy,
    /// Polynomial degree; defaults to the link smoothness rule.
    pub m: Option<usize>,
    pub oracle_n: usize,
    pub seed: u64,
    /// Template for the fit; l, j and m are filled in per cell.
    pub fit: FitConfig,
    pub abs_const: AbsConstants,
    /// When false, timings are written as 0 so reruns are byte-identical.
    pub record_timings: bool,
}

impl ExperimentConfig {
    pub fn new(id: &str, curve_kind: &str, n_grid: Vec<usize>, strategy: ParamStrategy) -> Self {
        Self {
            id: id.to_string(),
            curve_kind: curve_kind.to_string(),
            n_grid,
            reps: 5,
            train_frac: 0.9,
            strategy,
            m: None,
            oracle_n: 200_000,
            seed: 0,
            fit: FitConfig::new(1, 1, 1),
            abs_const: AbsConstants::default(),
            record_timings: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SvrError::InvalidSpec(m.to_string()));
        if self.n_grid.is_empty() || self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad("n_grid must be nonempty and strictly ascending");
        }
        if self.reps == 0 {
            return bad("reps must be at least 1");
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return bad("train_frac must lie in (0, 1)");
        }
        if self.oracle_n == 0 {
            return bad("oracle_n must be positive");
        }
        self.fit.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub experiment_id: String,
    pub curve_kind: String,
    pub d: usize,
    pub n: usize,
    pub rep: usize,
    pub sigma_zeta: f64,
    pub sigma_gamma: f64,
    pub l: usize,
    pub j: usize,
    pub m: usize,
    pub mse: f64,
    pub rel_mse: f64,
    pub center_err: f64,
    pub vec_err: f64,
    pub h_mean: f64,
    pub misclass2: f64,
    pub fit_ms: f64,
    pub pred_ms: f64,
    pub failed: bool,
}

impl MetricsRow {
    /// Numeric column by CSV name.
    pub fn field(&self, name: &str) -> Option<f64> {
        Some(match name {
            "d" => self.d as f64,
            "n" => self.n as f64,
            "rep" => self.rep as f64,
            "sigma_zeta" => self.sigma_zeta,
            "sigma_gamma" => self.sigma_gamma,
            "l" => self.l as f64,
            "j" => self.j as f64,
            "m" => self.m as f64,
            "mse" => self.mse,
            "rel_mse" => self.rel_mse,
            "center_err" => self.center_err,
            "vec_err" => self.vec_err,
            "h_mean" => self.h_mean,
            "misclass2" => self.misclass2,
            "fit_ms" => self.fit_ms,
            "pred_ms" => self.pred_ms,
            _ => return None,
        })
    }
}

/// Per-slice oracle center and normalized mean tangent; `None` where the
/// oracle sample left the slice empty.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleSliceParams {
    pub means: Vec<Option<Vec<f64>>>,
    pub tangents: Vec<Option<Vec<f64>>>,
}

impl OracleSliceParams {
    pub fn overrides(&self) -> Vec<Option<SliceOverride>> {
        self.means
            .iter()
            .zip(&self.tangents)
            .map(|(m, t)| match (m, t) {
                (Some(m), Some(t)) => Some(SliceOverride { mean: m.clone(), direction: t.clone() }),
                _ => None,
            })
            .collect()
    }
}

/// Bins an oracle sample (noisy responses, generation tangents) by the
/// intervals of `partition`.
pub fn oracle_params_from_sample(oracle: &Dataset, partition: &Partition) -> Result<OracleSliceParams> {
    let tangents = oracle
        .oracle_tangent
        .as_ref()
        .ok_or_else(|| SvrError::InvalidArgument("oracle sample lacks tangents".into()))?;
    let (d, l) = (oracle.d, partition.l());
    let mut sum_x = vec![0.0; l * d];
    let mut sum_t = vec![0.0; l * d];
    let mut count = vec![0usize; l];
    for i in 0..oracle.n() {
        let h = partition.index_of(oracle.y[i]);
        count[h] += 1;
        for k in 0..d {
            sum_x[h * d + k] += oracle.x[i * d + k];
            sum_t[h * d + k] += tangents[i * d + k];
        }
    }
    let mut means = Vec::with_capacity(l);
    let mut tans = Vec::with_capacity(l);
    for h in 0..l {
        let c = count[h];
        let t = &sum_t[h * d..(h + 1) * d];
        let nt = dot(t, t).sqrt();
        if c == 0 || !(nt > 0.0) {
            means.push(None);
            tans.push(None);
            continue;
        }
        means.push(Some(sum_x[h * d..(h + 1) * d].iter().map(|v| v / c as f64).collect()));
        tans.push(Some(t.iter().map(|v| v / nt).collect()));
    }
    Ok(OracleSliceParams { means, tangents: tans })
}

pub fn compute_oracle_params(
    model: &ModelSpec,
    partition: &Partition,
    oracle_n: usize,
    seed: u64,
) -> Result<OracleSliceParams> {
    let need = 10 * partition.l() * model.curve.d();
    if oracle_n < need {
        return Err(SvrError::InsufficientData { n: oracle_n, required: need });
    }
    let oracle = sample_dataset(model, oracle_n, seed)?;
    oracle_params_from_sample(&oracle, partition)
}

/// Train/test split of 0..n drawn from its own stream of `seed`.
pub fn split_indices(n: usize, train_frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from_seed(mix64(seed ^ SPLIT_STREAM)));
    let n_train = ((n as f64) * train_frac).floor() as usize;
    let test = idx.split_off(n_train.min(n));
    (idx, test)
}

/// Mean squared error and its ratio to the variance of the truth.
pub fn mse_and_relative(pred: &[f64], truth: &[f64]) -> (f64, f64) {
    let n = truth.len() as f64;
    let mse = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
    let mean = truth.iter().sum::<f64>() / n;
    let var = truth.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
    (mse, if var > 0.0 { mse / var } else { f64::NAN })
}

/// min(|v - g|, |v + g|)
pub fn sign_safe_distance(v: &[f64], g: &[f64]) -> f64 {
    let (mut a, mut b) = (0.0, 0.0);
    for (x, y) in v.iter().zip(g) {
        a += (x - y) * (x - y);
        b += (x + y) * (x + y);
    }
    a.min(b).sqrt()
}

/// (center_err, vec_err, h_mean) over heavy slices with oracle values.
pub fn parameter_errors(model: &SvrModel, oracle: &OracleSliceParams) -> (f64, f64, f64) {
    let (mut ce, mut ve, mut k) = (0.0, 0.0, 0usize);
    let (mut hs, mut hk) = (0.0, 0usize);
    for s in model.heavy() {
        if s.h_stat.is_finite() {
            hs += s.h_stat;
            hk += 1;
        }
        if let (Some(Some(mu)), Some(Some(g))) = (oracle.means.get(s.h), oracle.tangents.get(s.h)) {
            let diff: Vec<f64> = s.mean.iter().zip(mu).map(|(a, b)| a - b).collect();
            ce += dot(&diff, g).abs();
            ve += sign_safe_distance(&s.sig_vec, g);
            k += 1;
        }
    }
    let avg = |v: f64, c: usize| if c > 0 { v / c as f64 } else { f64::NAN };
    (avg(ce, k), avg(ve, k), avg(hs, hk))
}

fn truth_of(model: &ModelSpec, ds: &Dataset) -> Result<Vec<f64>> {
    let t = ds
        .oracle_t
        .as_ref()
        .ok_or_else(|| SvrError::InvalidArgument("dataset lacks oracle parameters".into()))?;
    Ok(t.iter().map(|&v| model.link.eval(v)).collect())
}

/// Sample sizes and selectors share this: (l, j) for a training size.
pub fn select_params(strategy: ParamStrategy, tc: Option<&TheoryConstants>, n_train: usize) -> Result<Selection> {
    use crate::tuning::Regime;
    let need_tc = || tc.ok_or_else(|| SvrError::InvalidArgument("theory constants unavailable".into()));
    match strategy {
        ParamStrategy::Fixed { l, j } => Ok(Selection { l, j, regime: Regime::Balanced }),
        ParamStrategy::TheoryNoisy => select_noisy(need_tc()?, n_train),
        ParamStrategy::TheoryNoiseless => select_noiseless(need_tc()?, n_train),
        ParamStrategy::TheoryWide => select_wide(need_tc()?),
    }
}

fn theory_for(cfg: &ExperimentConfig, model: &ModelSpec) -> Result<Option<TheoryConstants>> {
    match cfg.strategy {
        ParamStrategy::Fixed { .. } => Ok(None),
        _ => Ok(Some(TheoryConstants::from_model(model, cfg.abs_const)?)),
    }
}

fn degree(cfg: &ExperimentConfig, model: &ModelSpec) -> usize {
    cfg.m.unwrap_or_else(|| FitConfig::default_degree(model.link.s))
}

struct Cell<'a> {
    cfg: &'a ExperimentConfig,
    model: &'a ModelSpec,
    tc: Option<&'a TheoryConstants>,
    oracle: &'a Dataset,
}

impl Cell<'_> {
    fn run(&self, n: usize, rep: usize) -> MetricsRow {
        let (cfg, model) = (self.cfg, self.model);
        let m = degree(cfg, model);
        let mut row = MetricsRow {
            experiment_id: cfg.id.clone(),
            curve_kind: cfg.curve_kind.clone(),
            d: model.curve.d(),
            n,
            rep,
            sigma_zeta: model.sigma_zeta,
            sigma_gamma: model.sigma_gamma,
            l: 0,
            j: 0,
            m,
            mse: f64::NAN,
            rel_mse: f64::NAN,
            center_err: f64::NAN,
            vec_err: f64::NAN,
            h_mean: f64::NAN,
            misclass2: f64::NAN,
            fit_ms: 0.0,
            pred_ms: 0.0,
            failed: true,
        };
        let _ = self.fill(&mut row);
        row
    }

    fn fill(&self, row: &mut MetricsRow) -> Result<()> {
        let (cfg, model) = (self.cfg, self.model);
        let seed = derive_seed(cfg.seed, row.n as u64, row.rep as u64);
        let ds = sample_dataset(model, row.n, seed)?;
        let (train_idx, test_idx) = split_indices(row.n, cfg.train_frac, seed);
        let train = ds.subset(&train_idx);
        let test = ds.subset(&test_idx);
        let sel = select_params(cfg.strategy, self.tc, train.n())?;
        row.l = sel.l;
        row.j = sel.j;
        let fc = FitConfig { l: sel.l, j: sel.j, m: row.m, ..cfg.fit.clone() };

        let t0 = Instant::now();
        let fitted = fit(&train, &fc)?;
        let fit_ms = t0.elapsed().as_secs_f64() * 1e3;
        let t1 = Instant::now();
        let pred = predict_many(&fitted, &test.x);
        let pred_ms = t1.elapsed().as_secs_f64() * 1e3;

        let truth = truth_of(model, &test)?;
        let (mse, rel) = mse_and_relative(&pred, &truth);
        let oracle = oracle_params_from_sample(self.oracle, &fitted.range_knots)?;
        let (ce, ve, hm) = parameter_errors(&fitted, &oracle);
        let mut mis = 0usize;
        for i in 0..test.n() {
            let (a, b) = classification_indices(&fitted, test.row(i), truth[i]);
            if a.abs_diff(b) >= 2 {
                mis += 1;
            }
        }
        row.mse = mse;
        row.rel_mse = rel;
        row.center_err = ce;
        row.vec_err = ve;
        row.h_mean = hm;
        row.misclass2 = mis as f64 / test.n().max(1) as f64;
        if cfg.record_timings {
            row.fit_ms = fit_ms;
            row.pred_ms = pred_ms;
        }
        row.failed = false;
        Ok(())
    }
}

/// Draws the oracle sample shared by every cell of an experiment.
pub fn oracle_sample(cfg: &ExperimentConfig, model: &ModelSpec) -> Result<Dataset> {
    sample_dataset(model, cfg.oracle_n, mix64(cfg.seed ^ ORACLE_STREAM))
}

/// Runs every (n, rep) cell. Rows come back ordered by (n, rep); a failed
/// fit yields a row with `failed = true` and NaN metrics.
pub fn run_experiment(cfg: &ExperimentConfig, model: &ModelSpec) -> Result<Vec<MetricsRow>> {
    cfg.validate()?;
    let tc = theory_for(cfg, model)?;
    let oracle = oracle_sample(cfg, model)?;
    let cell = Cell { cfg, model, tc: tc.as_ref(), oracle: &oracle };
    let cells: Vec<(usize, usize)> =
        cfg.n_grid.iter().flat_map(|&n| (0..cfg.reps).map(move |r| (n, r))).collect();
    Ok(cells.par_iter().map(|&(n, r)| cell.run(n, r)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaturationResult {
    pub mse: f64,
    pub l: usize,
    pub j: usize,
    /// Every grid point tried: (l, j, test mse); failed fits are omitted.
    pub grid: Vec<(usize, usize, f64)>,
}

/// Smallest test mse at sample size n over l in {l*/2, l*, 2 l*} and
/// j in {1, 2, 4}, fitting with oracle centers and tangents in place of the
/// estimated ones. l* comes from the configured strategy.
pub fn mse_at_saturation(cfg: &ExperimentConfig, model: &ModelSpec, n: usize) -> Result<SaturationResult> {
    cfg.validate()?;
    let tc = theory_for(cfg, model)?;
    let oracle = oracle_sample(cfg, model)?;
    let seed = derive_seed(cfg.seed, n as u64, 0);
    let ds = sample_dataset(model, n, seed)?;
    let (train_idx, test_idx) = split_indices(n, cfg.train_frac, seed);
    let train = ds.subset(&train_idx);
    let test = ds.subset(&test_idx);
    let truth = truth_of(model, &test)?;
    let l_star = select_params(cfg.strategy, tc.as_ref(), train.n())?.l;
    let mut ls = vec![(l_star / 2).max(1), l_star, 2 * l_star];
    ls.dedup();
    let m = degree(cfg, model);
    let mut grid = Vec::new();
    for &l in &ls {
        for j in [1, 2, 4] {
            let fc = FitConfig { l, j, m, ..cfg.fit.clone() };
            let fitted = fit_with(&train, &fc, |p| {
                oracle_params_from_sample(&oracle, p).map(|o| o.overrides()).unwrap_or_default()
            });
            if let Ok(fm) = fitted {
                let pred = predict_many(&fm, &test.x);
                grid.push((l, j, mse_and_relative(&pred, &truth).0));
            }
        }
    }
    let best = grid
        .iter()
        .copied()
        .filter(|g| g.2.is_finite())
        .min_by(|a, b| a.2.total_cmp(&b.2))
        .ok_or(SvrError::NoHeavySlices { l: l_star })?;
    Ok(SaturationResult { mse: best.2, l: best.0, j: best.1, grid })
}

/// Log-log least-squares slope of the per-n mean of `y_field` against
/// `x_field`, over non-failed rows with x in the closed window.
pub fn fit_rate(rows: &[MetricsRow], x_field: &str, y_field: &str, window: (f64, f64)) -> Result<f64> {
    let mut groups: Vec<(f64, f64, usize)> = Vec::new();
    let mut used = 0usize;
    for r in rows.iter().filter(|r| !r.failed) {
        let x = r.field(x_field).ok_or_else(|| SvrError::RateFit(format!("unknown field {x_field}")))?;
        let y = r.field(y_field).ok_or_else(|| SvrError::RateFit(format!("unknown field {y_field}")))?;
        if x < window.0 || x > window.1 {
            continue;
        }
        if !(x > 0.0 && y > 0.0) {
            return Err(SvrError::RateFit(format!("nonpositive value ({x}, {y})")));
        }
        used += 1;
        match groups.iter_mut().find(|g| g.0 == x) {
            Some(g) => {
                g.1 += y;
                g.2 += 1;
            }
            None => groups.push((x, y, 1)),
        }
    }
    if used < 3 || groups.len() < 2 {
        return Err(SvrError::RateFit(format!("{used} rows over {} sizes in window", groups.len())));
    }
    let lx: Vec<f64> = groups.iter().map(|g| g.0.ln()).collect();
    let ly: Vec<f64> = groups.iter().map(|g| (g.1 / g.2 as f64).ln()).collect();
    Ok(ls_slope(&lx, &ly))
}

pub fn write_csv<W: Write>(rows: &[MetricsRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<MetricsRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(|s| s.to_string()).collect();
    if header != CSV_HEADER {
        return Err(SvrError::InvalidArgument(format!("unexpected CSV header {header:?}")));
    }
    let mut rows = Vec::new();
    for r in rd.deserialize() {
        rows.push(r?);
    }
    Ok(rows)
}
