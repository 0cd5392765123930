use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::sync::Arc;
use svr_core::curve::{build_curve, CurveSpec};
use svr_core::link::{estimate_holder_seminorm, estimate_monotonicity_constants, LinkKind, LinkSpec};
use svr_core::synthesis::{evaluate_f, rotation_to, sample_dataset, ModelSpec};
use svr_core::util::{dot, norm};
use svr_core::SvrError;

fn arc_model(d: usize, sigma_gamma: f64, sigma_zeta: f64) -> ModelSpec {
    let c = build_curve(&CurveSpec::arc(d, 0.4, 1.0), 2000).unwrap();
    ModelSpec::new(Arc::new(c), LinkSpec::exp_scaled(1.0, 1.0), sigma_gamma, sigma_zeta)
}

fn random_unit(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let n = norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

#[test]
fn rotation_to_last_axis_is_identity() {
    let mut e = vec![0.0; 5];
    e[4] = 1.0;
    let m = rotation_to(&e).unwrap().to_matrix();
    assert_eq!(m, nalgebra::DMatrix::<f64>::identity(5, 5));
}

#[test]
fn rotation_to_negative_axis_flips_last_coordinate() {
    let mut e = vec![0.0; 4];
    e[3] = -1.0;
    let m = rotation_to(&e).unwrap().to_matrix();
    let mut want = nalgebra::DMatrix::<f64>::identity(4, 4);
    want[(3, 3)] = -1.0;
    assert!((m - want).abs().max() < 1e-15);
}

#[test]
fn rotation_maps_axis_and_is_orthogonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let v = random_unit(8, &mut rng);
        let h = rotation_to(&v).unwrap();
        let m = h.to_matrix();
        let mut e = vec![0.0; 8];
        e[7] = 1.0;
        let mut out = vec![0.0; 8];
        h.apply(&e, &mut out);
        let err: f64 = out.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 1e-10);
        let dev = (m.transpose() * &m - nalgebra::DMatrix::<f64>::identity(8, 8)).abs().max();
        assert!(dev <= 1e-10);
    }
}

#[test]
fn rotation_rejects_non_unit_vectors() {
    assert!(matches!(rotation_to(&[0.0, 2.0]), Err(SvrError::NonUnitVector(_))));
}

#[test]
fn sampling_is_deterministic() {
    let m = arc_model(6, 0.3, 0.1);
    let a = sample_dataset(&m, 2000, 99).unwrap();
    let b = sample_dataset(&m, 2000, 99).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.x), bits(&b.x));
    assert_eq!(bits(&a.y), bits(&b.y));
    assert_eq!(a, b);
    let c = sample_dataset(&m, 2000, 100).unwrap();
    assert_ne!(a.x, c.x);
}

#[test]
fn displacement_is_normal_to_tangent() {
    let m = arc_model(7, 0.5, 0.0);
    let ds = sample_dataset(&m, 5000, 3).unwrap();
    let (t, g) = (ds.oracle_t.as_ref().unwrap(), ds.oracle_tangent.as_ref().unwrap());
    let mut p = vec![0.0; 7];
    for i in 0..ds.n() {
        m.curve.point_at(t[i], &mut p);
        let disp: Vec<f64> = ds.row(i).iter().zip(&p).map(|(a, b)| a - b).collect();
        let tan = &g[i * 7..(i + 1) * 7];
        assert!(dot(&disp, tan).abs() <= 1e-6 * norm(&disp) + 1e-9);
        assert!((norm(tan) - 1.0).abs() < 1e-9);
    }
}

#[test]
fn projection_recovers_generation_parameter() {
    for (curve, sigma) in [
        (build_curve(&CurveSpec::arc(5, 0.4, 1.0), 2000).unwrap(), 0.5),
        (build_curve(&CurveSpec::meyer_helix(4), 3000).unwrap(), 0.02),
    ] {
        let h = curve.spacing();
        let m = ModelSpec::new(Arc::new(curve), LinkSpec::identity(1.0), sigma, 0.0);
        let ds = sample_dataset(&m, 10_000, 5).unwrap();
        let t = ds.oracle_t.as_ref().unwrap();
        let good = (0..ds.n()).filter(|&i| (m.curve.project(ds.row(i)).t - t[i]).abs() <= 2.0 * h).count();
        assert!(good as f64 >= 0.999 * ds.n() as f64, "{good} of {}", ds.n());
    }
}

#[test]
fn noise_variance_matches_sigma_zeta() {
    let c = build_curve(&CurveSpec::arc(3, 0.4, 1.0), 2000).unwrap();
    let sz = 0.7;
    let m = ModelSpec::new(Arc::new(c), LinkSpec::constant(3.0, 1.0), 0.2, sz);
    let n = 100_000;
    let ds = sample_dataset(&m, n, 8).unwrap();
    let mean = ds.y.iter().sum::<f64>() / n as f64;
    let var = ds.y.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = sz * sz * (2.0 / (n - 1) as f64).sqrt();
    assert!((var - sz * sz).abs() <= 3.0 * se, "var {var}");
}

#[test]
fn degenerate_tube_stays_on_curve() {
    let m = arc_model(4, 1e-9, 0.0);
    let ds = sample_dataset(&m, 1000, 1).unwrap();
    let t = ds.oracle_t.as_ref().unwrap();
    let mut p = vec![0.0; 4];
    for i in 0..ds.n() {
        m.curve.point_at(t[i], &mut p);
        let err: f64 = ds.row(i).iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err < 1e-6);
        assert!((ds.y[i] - t[i].exp()).abs() < 1e-12);
    }
}

#[test]
fn line_identity_is_single_index() {
    let c = build_curve(&CurveSpec::line(5, 2.0), 1000).unwrap();
    let u = c.tangent(0).to_vec();
    let o = c.point(0).to_vec();
    let m = ModelSpec::new(Arc::new(c), LinkSpec::identity(2.0), 0.3, 0.0);
    let ds = sample_dataset(&m, 2000, 4).unwrap();
    for i in 0..ds.n() {
        let rel: Vec<f64> = ds.row(i).iter().zip(&o).map(|(a, b)| a - b).collect();
        assert!((ds.y[i] - dot(&rel, &u)).abs() < 1e-12);
    }
    // lines use a tube radius of 10 sigma_gamma
    assert!((m.tube_radius().unwrap() - 3.0).abs() < 1e-15);
}

#[test]
fn truncated_displacement_variance_matches_monte_carlo() {
    let d = 6;
    let (sg, radius) = (0.5, 0.9 * 2.5);
    // oracle: truncated per-coordinate variance from direct rejection draws
    let mut rng = ChaCha8Rng::seed_from_u64(12345);
    let (mut acc, mut kept) = (0.0, 0usize);
    while kept < 2_000_000 {
        let z: Vec<f64> = (0..d - 1).map(|_| sg * rng.sample::<f64, _>(StandardNormal)).collect();
        let s: f64 = z.iter().map(|v| v * v).sum();
        if s < radius * radius {
            acc += s / (d - 1) as f64;
            kept += 1;
        }
    }
    let oracle = acc / kept as f64;
    let m = arc_model(d, sg, 0.0);
    let ds = sample_dataset(&m, 100_000, 21).unwrap();
    let t = ds.oracle_t.as_ref().unwrap();
    let mut p = vec![0.0; d];
    let mut tot = 0.0;
    for i in 0..ds.n() {
        m.curve.point_at(t[i], &mut p);
        tot += ds.row(i).iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (d - 1) as f64;
    }
    let emp = tot / ds.n() as f64;
    assert!((emp / oracle - 1.0).abs() < 0.05, "empirical {emp}, oracle {oracle}");
    assert!((oracle / (sg * sg) - 1.0).abs() < 0.05);
}

#[test]
fn wide_tube_is_rejected() {
    let m = arc_model(10, 5.0, 0.0);
    assert!(matches!(sample_dataset(&m, 10, 1), Err(SvrError::TubeCondition { .. })));
}

#[test]
fn invalid_models_are_rejected() {
    let mut m = arc_model(3, 0.5, 0.0);
    m.trunc_frac = 1.0;
    assert!(sample_dataset(&m, 10, 1).is_err());
    let m = arc_model(3, 0.0, 0.0);
    assert!(sample_dataset(&m, 10, 1).is_err());
    let m = arc_model(3, 0.5, -1.0);
    assert!(sample_dataset(&m, 10, 1).is_err());
}

#[test]
fn evaluate_f_matches_generation() {
    let m = arc_model(5, 0.5, 0.0);
    let ds = sample_dataset(&m, 100, 2).unwrap();
    for i in 0..ds.n() {
        assert!((evaluate_f(&m, ds.row(i)) - ds.y[i]).abs() < 1e-6);
    }
    let mut p = vec![0.0; 5];
    m.curve.point_at(0.3, &mut p);
    assert!((evaluate_f(&m, &p) - 0.3f64.exp()).abs() < 1e-9);
}

#[test]
fn evaluate_f_clamps_on_lines() {
    let c = build_curve(&CurveSpec::line(2, 1.0), 1000).unwrap();
    let u = c.tangent(0).to_vec();
    let o = c.point(0).to_vec();
    let m = ModelSpec::new(Arc::new(c), LinkSpec::exp_scaled(1.0, 1.0), 0.1, 0.0);
    for s in [-0.5, 0.25, 0.9, 3.0] {
        let x: Vec<f64> = o.iter().zip(&u).map(|(a, b)| a + s * b).collect();
        assert!((evaluate_f(&m, &x) - f64::clamp(s, 0.0, 1.0).exp()).abs() < 1e-9);
    }
}

#[test]
fn identity_link_constants() {
    let c = estimate_monotonicity_constants(&LinkSpec::identity(1.0), 10_000, 1e-3).unwrap();
    assert!((c.c_f - 1.0).abs() < 0.01 && (c.c_f_prime - 1.0).abs() < 0.01, "{c:?}");
    assert_eq!(c.omega_f, 0.0);
}

#[test]
fn doubled_identity_constants() {
    let f = LinkSpec::new(LinkKind::CustomTable { t: vec![0.0, 1.0], y: vec![0.0, 2.0] }, 1.0, (0.0, 1.0)).unwrap();
    let c = estimate_monotonicity_constants(&f, 10_000, 1e-3).unwrap();
    assert!((c.c_f - 0.5).abs() < 0.01 && (c.c_f_prime - 0.5).abs() < 0.01, "{c:?}");
}

#[test]
fn power_link_constants_match_inverse_map() {
    // preimage of [a, b] under t^p is [a^(1/p), b^(1/p)]
    let p: f64 = 0.7;
    let q = 1.0 / p;
    let s = 1e-2;
    let c = estimate_monotonicity_constants(&LinkSpec::power(p, 1.0), 200_000, s).unwrap();
    // smallest ratio: the window [0, s] at the steep start
    let c_f_prime = s.powf(q) / s;
    // largest ratio: the slope of the inverse at 1, approached by the top windows
    let c_f = q;
    assert!((c.c_f_prime / c_f_prime - 1.0).abs() < 0.02, "{} vs {c_f_prime}", c.c_f_prime);
    assert!(c.c_f <= c_f * 1.001 && c.c_f >= (1.0 - (1.0 - s).powf(q)) / s * 0.999, "{}", c.c_f);
    assert!(c.omega_f <= s);
}

#[test]
fn constant_link_has_empty_preimages() {
    assert!(matches!(
        estimate_monotonicity_constants(&LinkSpec::constant(1.0, 1.0), 2000, 1e-3),
        Err(SvrError::EmptyPreimage)
    ));
}

#[test]
fn non_monotone_link_has_positive_coarse_scale() {
    // a tent: every output level below the peak has two preimages
    let f = LinkSpec::new(LinkKind::CustomTable { t: vec![0.0, 0.5, 1.0], y: vec![0.0, 1.0, 0.0] }, 1.0, (0.0, 1.0))
        .unwrap();
    let c = estimate_monotonicity_constants(&f, 4000, 1e-3).unwrap();
    assert!(c.omega_f > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn increasing_links_have_no_coarse_scale(scale in 0.2f64..5.0, p in 0.5f64..2.0, min_scale in 1e-3f64..1e-2) {
        for f in [LinkSpec::exp_scaled(scale, 1.0), LinkSpec::power(p, 1.0)] {
            let c = estimate_monotonicity_constants(&f, 20_000, min_scale).unwrap();
            prop_assert!(c.omega_f <= min_scale, "{:?}", c);
            prop_assert!(c.c_f >= c.c_f_prime && c.c_f_prime > 0.0);
        }
    }
}

#[test]
fn holder_seminorms() {
    let g = 1500;
    assert!((estimate_holder_seminorm(&LinkSpec::identity(1.0), 1.0, g).unwrap() - 1.0).abs() < 1e-9);
    for s in [0.5, 1.0, 1.5, 2.0] {
        assert_eq!(estimate_holder_seminorm(&LinkSpec::constant(2.0, 1.0), s, g).unwrap(), 0.0);
    }
    let sqrt = LinkSpec::power(0.5, 1.0);
    assert!((estimate_holder_seminorm(&sqrt, 0.5, g).unwrap() - 1.0).abs() < 0.02);
    // exp on [0, 1]: the C^2 seminorm is sup f'' = e
    let e = estimate_holder_seminorm(&LinkSpec::exp_scaled(1.0, 1.0), 2.0, g).unwrap();
    assert!((e / std::f64::consts::E - 1.0).abs() < 0.01, "{e}");
}
