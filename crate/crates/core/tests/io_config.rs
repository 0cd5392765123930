use std::fs::File;
use std::io::BufReader;
use svr_core::config::Config;
use svr_core::curve::Reach;
use svr_core::estimator::{DistanceMode, PartitionMode};
use svr_core::experiments::ParamStrategy;
use svr_core::io::{read_dataset, write_dataset};
use svr_core::link::LinkKind;
use svr_core::synthesis::sample_dataset;
use svr_core::SvrError;

const HELIX: &str = "\
curve.kind = meyer-helix
curve.d = 4
curve.normalize_reach = sqrt_d
link.kind = exp_scaled
sigma_gamma = 0.5
sigma_zeta = 0.1
fit.l = 40
fit.j = 3
fit.M = 25
fit.distance = mahalanobis
fit.heavy_factor = 0.5
abs.c_l_max = 0.25
experiment.n_grid = 1000, 3000
experiment.strategy = fixed
experiment.desk_scale = 20
experiment.seed = 7
";

#[test]
fn sampled_dataset_survives_a_file() {
    let cfg = Config::parse(HELIX).unwrap();
    let model = cfg.model_spec().unwrap();
    let ds = sample_dataset(&model, 300, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.txt");
    write_dataset(&ds, File::create(&path).unwrap()).unwrap();
    let mut back = read_dataset(BufReader::new(File::open(&path).unwrap())).unwrap();
    // the seed is not part of the file format
    back.seed = ds.seed;
    assert_eq!(back, ds);
}

#[test]
fn plain_datasets_have_no_oracle() {
    let ds = read_dataset("3,2,0\n1,2,3,4\n-1,0.5,2e-3,7\n".as_bytes()).unwrap();
    assert_eq!((ds.d, ds.n()), (3, 2));
    assert_eq!(ds.y, vec![4.0, 7.0]);
    assert!(ds.oracle_t.is_none() && ds.oracle_tangent.is_none());
}

#[test]
fn malformed_datasets_report_the_line() {
    for (text, line) in [
        ("3,2\n", 1),
        ("0,1,0\n1\n", 1),
        ("2,2,0\n1,2,3\n1,2\n", 3),
        ("2,1,0\n1,x,3\n", 2),
        ("2,1,0\n1,2,3\n4,5,6\n", 3),
    ] {
        match read_dataset(text.as_bytes()) {
            Err(SvrError::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
            other => panic!("{text:?}: {other:?}"),
        }
    }
}

#[test]
fn config_file_builds_every_piece() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("helix.cfg");
    std::fs::write(&path, HELIX).unwrap();
    let cfg = Config::load(&path).unwrap();

    let model = cfg.model_spec().unwrap();
    assert_eq!(model.curve.d(), 4);
    let reach = model.curve.reach_estimate().unwrap();
    assert!(matches!(reach, Reach::Finite(r) if (r - 2.0).abs() < 0.04), "{reach:?}");
    assert!(matches!(model.link.kind, LinkKind::ExpScaled { .. }));
    assert_eq!(model.link.s, 2.0);
    assert!((model.link.domain.1 - model.curve.len()).abs() < 1e-9);

    let fc = cfg.fit_config().unwrap();
    assert_eq!((fc.l, fc.j, fc.m), (40, 3, 2));
    assert_eq!(fc.truncation, Some(25.0));
    assert_eq!(fc.distance, DistanceMode::Mahalanobis);
    assert_eq!(fc.partition, PartitionMode::Uniform);
    assert_eq!(fc.heavy_threshold_factor, 0.5);

    assert_eq!(cfg.abs_constants().unwrap().c_l_max, 0.25);

    let ec = cfg.experiment_config().unwrap();
    assert_eq!(ec.n_grid, vec![1000, 3000]);
    assert_eq!(ec.strategy, ParamStrategy::Fixed { l: 40, j: 3 });
    assert_eq!(ec.oracle_n, 100_000);
    assert_eq!((ec.seed, ec.reps, ec.train_frac), (7, 5, 0.9));
    assert_eq!(ec.curve_kind, "meyer-helix");
}

#[test]
fn config_errors() {
    assert!(Config::parse("curve.kind = line\ncurve.d = 3\n").unwrap().model_spec().is_err());
    let c = Config::parse("curve.kind = spiral\ncurve.d = 3\nsigma_gamma = 1\n").unwrap();
    assert!(c.model_spec().is_err());
    let c = Config::parse("fit.l = many\n").unwrap();
    assert!(matches!(c.fit_config(), Err(SvrError::Parse { line: 1, .. })));
    let c = Config::parse("curve.kind = line\ncurve.d = 2\nexperiment.n_grid = 10, 5\n").unwrap();
    assert!(c.experiment_config().is_err());
    assert!(Config::parse("no equals sign\n").is_err());
}
