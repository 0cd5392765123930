use proptest::prelude::*;
use std::collections::HashSet;
use std::sync::{Arc, Mutex};
use std::time::Instant;
use svr_core::curve::{build_curve, normalize_to_reach, CurveSpec};
use svr_core::estimator::{fit, partition_range, FitConfig, PartitionMode};
use svr_core::experiments::{
    compute_oracle_params, fit_rate, mse_and_relative, mse_at_saturation, parameter_errors, read_csv, run_experiment,
    sign_safe_distance, split_indices, write_csv, ExperimentConfig, MetricsRow, ParamStrategy, CSV_HEADER,
};
use svr_core::link::LinkSpec;
use svr_core::synthesis::{sample_dataset, ModelSpec};
use svr_core::util::dot;

// timing tests must not share the machine with the heavier fits
static LOCK: Mutex<()> = Mutex::new(());

fn guard() -> std::sync::MutexGuard<'static, ()> {
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn line(d: usize, link: LinkSpec, sigma_gamma: f64, sigma_zeta: f64) -> ModelSpec {
    let c = build_curve(&CurveSpec::line(d, 1.0), 1000).unwrap();
    ModelSpec::new(Arc::new(c), link, sigma_gamma, sigma_zeta)
}

fn arc(kappa: f64, length: f64, sigma_zeta: f64) -> ModelSpec {
    let c = build_curve(&CurveSpec::arc(5, kappa, length), 2000).unwrap();
    ModelSpec::new(Arc::new(c), LinkSpec::exp_scaled(length, length), 0.5, sigma_zeta)
}

fn small_config(id: &str) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(id, "arc", vec![2000, 5000], ParamStrategy::Fixed { l: 10, j: 2 });
    cfg.reps = 2;
    cfg.oracle_n = 20_000;
    cfg.seed = 99;
    cfg.m = Some(1);
    cfg.record_timings = false;
    cfg
}

fn row(n: usize, y: f64) -> MetricsRow {
    MetricsRow {
        experiment_id: "r".into(),
        curve_kind: "line".into(),
        d: 2,
        n,
        rep: 0,
        sigma_zeta: 0.0,
        sigma_gamma: 1.0,
        l: 1,
        j: 1,
        m: 0,
        mse: y,
        rel_mse: y,
        center_err: y,
        vec_err: y,
        h_mean: 0.0,
        misclass2: 0.0,
        fit_ms: 0.0,
        pred_ms: 0.0,
        failed: false,
    }
}

#[test]
fn experiment_csv_is_reproducible() {
    let _g = guard();
    let model = arc(0.2, 1.0, 0.05);
    let cfg = small_config("repro");
    let mut a = Vec::new();
    let mut b = Vec::new();
    write_csv(&run_experiment(&cfg, &model).unwrap(), &mut a).unwrap();
    write_csv(&run_experiment(&cfg, &model).unwrap(), &mut b).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    assert_eq!(text.lines().count(), 1 + 4);
}

#[test]
fn adding_grid_points_keeps_existing_rows() {
    let _g = guard();
    let model = arc(0.2, 1.0, 0.05);
    let cfg = small_config("grow");
    let mut wider = cfg.clone();
    wider.n_grid = vec![1000, 2000, 5000];
    let (a, b) = (run_experiment(&cfg, &model).unwrap(), run_experiment(&wider, &model).unwrap());
    assert_eq!(&b[2..], &a[..]);
}

#[test]
fn rows_are_ordered_and_sane() {
    let _g = guard();
    let model = arc(0.2, 1.0, 0.05);
    let rows = run_experiment(&small_config("sane"), &model).unwrap();
    let keys: Vec<(usize, usize)> = rows.iter().map(|r| (r.n, r.rep)).collect();
    assert_eq!(keys, vec![(2000, 0), (2000, 1), (5000, 0), (5000, 1)]);
    for r in &rows {
        assert!(!r.failed);
        assert!(r.mse >= 0.0);
        assert!((0.0..=1.0).contains(&r.misclass2));
        assert!((0.0..=2.0).contains(&r.vec_err));
        assert_eq!((r.l, r.j, r.m), (10, 2, 1));
    }
}

#[test]
fn csv_round_trips() {
    let mut rows = vec![row(1000, 0.5), row(2000, 1.25e-7)];
    rows[1].failed = true;
    rows[1].mse = f64::NAN;
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf).unwrap();
    let back = read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.len(), 2);
    assert_eq!(back[0], rows[0]);
    assert!(back[1].failed && back[1].mse.is_nan());
    let bad = "n,mse\n1,2\n";
    assert!(read_csv(bad.as_bytes()).is_err());
}

#[test]
fn failed_cells_are_recorded() {
    let _g = guard();
    let model = arc(0.2, 1.0, 0.05);
    let mut cfg = small_config("fail");
    // more slices than training points
    cfg.strategy = ParamStrategy::Fixed { l: 3000, j: 1 };
    let rows = run_experiment(&cfg, &model).unwrap();
    assert!(rows[..2].iter().all(|r| r.failed && r.mse.is_nan()));
    assert_eq!(rows.len(), 4);
}

#[test]
fn train_and_test_are_disjoint() {
    for (n, frac, seed) in [(10, 0.9, 1), (1000, 0.9, 2), (12_345, 0.5, 3), (7, 0.3, 4)] {
        let (train, test) = split_indices(n, frac, seed);
        let a: HashSet<usize> = train.iter().copied().collect();
        let b: HashSet<usize> = test.iter().copied().collect();
        assert!(a.is_disjoint(&b));
        assert_eq!(a.len() + b.len(), n);
        assert_eq!(train.len(), (n as f64 * frac).floor() as usize);
        assert!(a.iter().chain(&b).all(|&i| i < n));
    }
    assert_eq!(split_indices(500, 0.9, 7), split_indices(500, 0.9, 7));
    assert_ne!(split_indices(500, 0.9, 7), split_indices(500, 0.9, 8));
}

#[test]
fn mean_predictor_has_unit_relative_mse() {
    let model = arc(0.2, 1.0, 0.1);
    for (n, seed) in [(10_000, 1), (30_000, 2)] {
        let ds = sample_dataset(&model, n, seed).unwrap();
        let (train, test) = split_indices(n, 0.9, seed);
        let mean = train.iter().map(|&i| ds.y[i]).sum::<f64>() / train.len() as f64;
        let t = ds.oracle_t.as_ref().unwrap();
        let truth: Vec<f64> = test.iter().map(|&i| model.link.eval(t[i])).collect();
        let (_, rel) = mse_and_relative(&vec![mean; truth.len()], &truth);
        assert!((rel - 1.0).abs() <= 0.1, "n={n}: {rel}");
    }
}

#[test]
fn relative_mse_examples() {
    let (mse, rel) = mse_and_relative(&[1.0, 2.0, 3.0], &[1.0, 2.0, 5.0]);
    assert!((mse - 4.0 / 3.0).abs() < 1e-15);
    // truth variance is 26/9
    assert!((rel - (4.0 / 3.0) / (26.0 / 9.0)).abs() < 1e-15);
    assert!(mse_and_relative(&[1.0, 1.0], &[2.0, 2.0]).1.is_nan());
}

proptest! {
    #[test]
    fn vector_error_is_sign_safe(
        v in prop::collection::vec(-1.0f64..1.0, 1..12),
        g in prop::collection::vec(-1.0f64..1.0, 12),
    ) {
        let g = &g[..v.len()];
        let plus: f64 = v.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let minus: f64 = v.iter().zip(g).map(|(a, b)| (a + b) * (a + b)).sum::<f64>().sqrt();
        let s = sign_safe_distance(&v, g);
        prop_assert!(s <= plus + 1e-15 && s <= minus + 1e-15);
        prop_assert!((s - plus.min(minus)).abs() <= 1e-15);
        let neg: Vec<f64> = v.iter().map(|a| -a).collect();
        prop_assert_eq!(s, sign_safe_distance(&neg, g));
    }
}

#[test]
fn vector_error_of_a_fit_is_sign_safe() {
    let model = arc(0.2, 1.0, 0.05);
    let ds = sample_dataset(&model, 20_000, 5).unwrap();
    let fitted = fit(&ds, &FitConfig::new(10, 1, 1)).unwrap();
    let oracle = compute_oracle_params(&model, &fitted.range_knots, 50_000, 6).unwrap();
    let (_, ve, _) = parameter_errors(&fitted, &oracle);
    let mut fixed = [0.0f64; 2];
    let mut k = 0;
    for s in fitted.heavy() {
        if let Some(g) = &oracle.tangents[s.h] {
            for (f, sign) in fixed.iter_mut().zip([1.0, -1.0]) {
                *f += s.sig_vec.iter().zip(g).map(|(a, b)| (a - sign * b).powi(2)).sum::<f64>().sqrt();
            }
            k += 1;
        }
    }
    assert!(k > 0);
    assert!(fixed.iter().all(|f| ve <= f / k as f64 + 1e-12));
    assert!(ve <= 2.0);
}

fn median3(mut v: [f64; 3]) -> f64 {
    v.sort_by(f64::total_cmp);
    v[1]
}

#[test]
fn fit_time_grows_subquadratically() {
    let _g = guard();
    let c = build_curve(&CurveSpec::meyer_helix(10), 8000).unwrap();
    let c = normalize_to_reach(&c, 10f64.sqrt()).unwrap();
    let len = c.len();
    let model = ModelSpec::new(Arc::new(c), LinkSpec::exp_scaled(len, len), 0.5, 0.1);
    let big = sample_dataset(&model, 100_000, 7).unwrap();
    let small = big.subset(&(0..50_000).collect::<Vec<_>>());
    let cfg = FitConfig::new(100, 2, 1);
    let time = |ds| {
        let t = Instant::now();
        fit(ds, &cfg).unwrap();
        t.elapsed().as_secs_f64()
    };
    time(&small);
    let ratios = [0, 1, 2].map(|_| time(&big) / time(&small));
    let r = median3(ratios);
    assert!(r <= 2.6, "time ratio {r} ({ratios:?})");
}

#[test]
fn fit_rate_of_power_law() {
    let rows: Vec<MetricsRow> =
        [1e3, 3e3, 1e4, 3e4, 1e5].iter().map(|&n: &f64| row(n as usize, 3.0 * n.powf(-0.5))).collect();
    let slope = fit_rate(&rows, "n", "mse", (1.0, 1e6)).unwrap();
    assert!((slope + 0.5).abs() < 1e-12, "{slope}");
    let flat: Vec<MetricsRow> = [1e3, 1e4, 1e5].iter().map(|&n| row(n as usize, 0.25)).collect();
    assert!(fit_rate(&flat, "n", "vec_err", (1.0, 1e6)).unwrap().abs() < 1e-12);
}

#[test]
fn fit_rate_averages_reps_and_respects_window() {
    let mut rows = Vec::new();
    for &n in &[1000usize, 10_000, 100_000, 1_000_000] {
        // the mean over reps follows n^-1
        for (rep, f) in [(0, 0.5), (1, 1.5)] {
            let mut r = row(n, f / n as f64);
            r.rep = rep;
            rows.push(r);
        }
    }
    // outside the window the trend breaks
    rows.push(row(10, 1e9));
    let mut failed = row(20_000, 1e9);
    failed.failed = true;
    rows.push(failed);
    let slope = fit_rate(&rows, "n", "mse", (1e3, 1e6)).unwrap();
    assert!((slope + 1.0).abs() < 1e-12, "{slope}");
    assert!(fit_rate(&rows, "n", "nope", (1e3, 1e6)).is_err());
    assert!(fit_rate(&rows, "n", "mse", (1e3, 1.5e3)).is_err());
    assert!(fit_rate(&[row(10, 0.0), row(100, 1.0), row(1000, 1.0)], "n", "mse", (1.0, 1e4)).is_err());
}

#[test]
fn constant_link_has_zero_error() {
    let _g = guard();
    let model = line(4, LinkSpec::constant(-1.5, 1.0), 0.5, 0.0);
    let mut cfg = small_config("const");
    cfg.curve_kind = "line".into();
    let rows = run_experiment(&cfg, &model).unwrap();
    for r in &rows {
        assert!(!r.failed);
        assert!(r.mse <= 1e-12, "{}", r.mse);
    }
}

#[test]
fn line_oracle_tangent_is_the_direction() {
    let model = line(6, LinkSpec::identity(1.0), 0.5, 0.05);
    let u = model.curve.tangent(0).to_vec();
    let ds = sample_dataset(&model, 5000, 8).unwrap();
    let p = partition_range(&ds.y, 12, PartitionMode::Uniform).unwrap();
    let o = compute_oracle_params(&model, &p, 50_000, 9).unwrap();
    for g in o.tangents.iter().flatten() {
        assert!((dot(g, &u) - 1.0).abs() < 1e-12);
    }
    assert!(o.tangents.iter().filter(|g| g.is_some()).count() >= 10);
    assert!(compute_oracle_params(&model, &p, 100, 9).is_err());
}

#[test]
fn arc_oracle_tangents_turn_with_the_arc() {
    let (kappa, length, l) = (0.5, 2.0, 10);
    let c = build_curve(&CurveSpec::arc(4, kappa, length), 4000).unwrap();
    let model = ModelSpec::new(Arc::new(c), LinkSpec::identity(length), 0.5, 0.0);
    let ds = sample_dataset(&model, 200_000, 10).unwrap();
    let p = partition_range(&ds.y, l, PartitionMode::Uniform).unwrap();
    let o = compute_oracle_params(&model, &p, 400_000, 11).unwrap();
    let first = o.tangents[0].as_ref().unwrap();
    let last = o.tangents[l - 1].as_ref().unwrap();
    // y = t is uniform, so each mean tangent points along the slice midpoint
    let mid = |h: usize| 0.5 * (p.knots[h] + p.knots[h + 1]);
    let want = kappa * (mid(l - 1) - mid(0));
    let got = dot(first, last).clamp(-1.0, 1.0).acos();
    assert!((got - want).abs().to_degrees() < 2.0, "{} vs {}", got.to_degrees(), want.to_degrees());
}

#[test]
fn thin_tube_means_lie_on_the_curve() {
    let model = line(5, LinkSpec::identity(1.0), 1e-9, 0.0);
    let (p0, u) = (model.curve.point(0).to_vec(), model.curve.tangent(0).to_vec());
    let ds = sample_dataset(&model, 2000, 12).unwrap();
    let p = partition_range(&ds.y, 8, PartitionMode::Uniform).unwrap();
    let o = compute_oracle_params(&model, &p, 20_000, 13).unwrap();
    for mu in o.means.iter().flatten() {
        let diff: Vec<f64> = mu.iter().zip(&p0).map(|(a, b)| a - b).collect();
        let along = dot(&diff, &u);
        let off = (dot(&diff, &diff) - along * along).max(0.0).sqrt();
        assert!(off <= 1e-6, "{off}");
    }
}

fn saturation(model: &ModelSpec, n: usize) -> f64 {
    let mut cfg = ExperimentConfig::new("sat", "x", vec![n], ParamStrategy::Fixed { l: 20, j: 2 });
    cfg.oracle_n = 200_000;
    cfg.m = Some(1);
    cfg.seed = 3;
    // exp links leave the upper slices light under the default n/l rule
    cfg.fit = cfg.fit.with_heavy_factor(0.5);
    mse_at_saturation(&cfg, model, n).unwrap().mse
}

#[test]
fn noiseless_saturation_keeps_falling() {
    let _g = guard();
    let model = line(5, LinkSpec::exp_scaled(1.0, 1.0), 0.5, 0.0);
    let mut cfg = ExperimentConfig::new("sat", "line", vec![1], ParamStrategy::TheoryNoiseless);
    cfg.oracle_n = 200_000;
    cfg.m = Some(1);
    cfg.fit = cfg.fit.with_heavy_factor(0.5);
    cfg.abs_const.c_gamma_f = 1.0 / svr_core::tuning::c_gamma_f(
        &svr_core::tuning::TheoryConstants::from_model(&model, Default::default()).unwrap(),
    );
    let small = mse_at_saturation(&cfg, &model, 10_000).unwrap();
    let large = mse_at_saturation(&cfg, &model, 100_000).unwrap();
    assert!(large.l > small.l);
    assert!(large.mse < 0.25 * small.mse, "{} -> {}", small.mse, large.mse);
}

#[test]
fn straight_curves_saturate_below_bent_ones() {
    let _g = guard();
    let n = 30_000;
    let flat = saturation(&arc(1e-6, 2.0, 0.1), n);
    let bent = saturation(&arc(0.4, 2.0, 0.1), n);
    let straight = {
        let c = build_curve(&CurveSpec::line(5, 2.0), 2000).unwrap();
        saturation(&ModelSpec::new(Arc::new(c), LinkSpec::exp_scaled(2.0, 2.0), 0.5, 0.1), n)
    };
    assert!(straight < bent, "{straight} vs {bent}");
    assert!(flat < bent, "{flat} vs {bent}");
}

#[test]
fn saturation_grid_is_documented() {
    let _g = guard();
    let model = arc(0.2, 1.0, 0.05);
    let mut cfg = ExperimentConfig::new("grid", "arc", vec![1], ParamStrategy::Fixed { l: 8, j: 1 });
    cfg.oracle_n = 50_000;
    cfg.m = Some(1);
    let res = mse_at_saturation(&cfg, &model, 10_000).unwrap();
    let ls: HashSet<usize> = res.grid.iter().map(|g| g.0).collect();
    let js: HashSet<usize> = res.grid.iter().map(|g| g.1).collect();
    assert_eq!(ls, [4, 8, 16].into_iter().collect());
    assert_eq!(js, [1, 2, 4].into_iter().collect());
    assert!(res.grid.iter().all(|g| g.2 >= res.mse));
}

#[test]
fn invalid_configs_are_rejected() {
    let model = arc(0.2, 1.0, 0.05);
    let mut cfg = small_config("bad");
    cfg.n_grid = vec![5000, 2000];
    assert!(run_experiment(&cfg, &model).is_err());
    let mut cfg = small_config("bad");
    cfg.reps = 0;
    assert!(run_experiment(&cfg, &model).is_err());
    let mut cfg = small_config("bad");
    cfg.train_frac = 1.0;
    assert!(run_experiment(&cfg, &model).is_err());
}
