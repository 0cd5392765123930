use clap::{Parser, Subcommand, ValueEnum};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use svr_core::config::{Config, DEFAULT_GRID};
use svr_core::curve::{build_curve, geometry_report, normalize_to_reach};
use svr_core::estimator::{fit, predict_many, SvrModel};
use svr_core::experiments::{run_experiment, write_csv};
use svr_core::io::{read_dataset, write_dataset};
use svr_core::synthesis::{sample_dataset, Dataset};
use svr_core::tuning::{
    assumption_report, c_gamma_f, l_max, m_star, select_noiseless, select_noisy, select_wide, TheoryConstants,
};
use svr_core::Result;

#[derive(Parser)]
#[command(name = "svr", version, about = "Significant vector regression on curve-indexed data")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Line,
    Arc,
    MeyerStaircase,
    MeyerHelix,
}

impl Kind {
    fn key(self) -> &'static str {
        match self {
            Kind::Line => "line",
            Kind::Arc => "arc",
            Kind::MeyerStaircase => "meyer-staircase",
            Kind::MeyerHelix => "meyer-helix",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TuneRegime {
    Noisy,
    Noiseless,
    Wide,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print length, reach, curvature and rank measures of a curve
    CurveInfo {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        length: Option<f64>,
        #[arg(long)]
        normalize_reach: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_GRID)]
        grid: usize,
    },
    /// Sample a dataset from a model config
    Synth {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model to a dataset and write it as JSON
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict responses for the rows of a dataset
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Theory-driven slice and bin counts for a model and sample size
    Tune {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: usize,
        /// Defaults to noisy when sigma_zeta > 0, noiseless otherwise
        #[arg(long, value_enum)]
        regime: Option<TuneRegime>,
    },
    /// Run a convergence study and write one CSV row per (n, rep)
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    read_dataset(BufReader::new(File::open(path)?))
}

fn curve_info(
    kind: Kind,
    d: usize,
    kappa: Option<f64>,
    length: Option<f64>,
    target: Option<f64>,
    grid: usize,
) -> Result<()> {
    let mut cfg = Config::default();
    cfg.set("curve.kind", kind.key())?;
    cfg.set("curve.d", &d.to_string())?;
    if let Some(k) = kappa {
        cfg.set("curve.kappa", &k.to_string())?;
    }
    if let Some(l) = length {
        cfg.set("curve.length", &l.to_string())?;
    }
    let mut curve = build_curve(&cfg.curve_spec()?, grid)?;
    if let Some(r) = target {
        curve = normalize_to_reach(&curve, r)?;
    }
    let rep = geometry_report(&curve)?;
    println!("kind,d,len,reach,max_curvature,srank_sum,srank_count,complexity");
    println!(
        "{},{},{},{},{},{},{},{}",
        kind.key(),
        d,
        rep.len,
        rep.reach.value(),
        rep.max_curvature,
        rep.stable_rank_sum,
        rep.stable_rank_count,
        rep.regression_complexity
    );
    Ok(())
}

fn tune(model: &Path, n: usize, regime: Option<TuneRegime>) -> Result<()> {
    let cfg = Config::load(model)?;
    let spec = cfg.model_spec()?;
    let tc = TheoryConstants::from_model(&spec, cfg.abs_constants()?)?;
    let regime = regime.unwrap_or(if tc.sigma_zeta > 0.0 { TuneRegime::Noisy } else { TuneRegime::Noiseless });
    let sel = match regime {
        TuneRegime::Noisy => select_noisy(&tc, n)?,
        TuneRegime::Noiseless => select_noiseless(&tc, n)?,
        TuneRegime::Wide => select_wide(&tc)?,
    };
    let report = assumption_report(&spec, &tc);
    // quantities undefined for this model print as NaN
    let ms = m_star(&tc).unwrap_or(f64::NAN);
    let lm = l_max(&tc).unwrap_or(f64::NAN);
    println!("l,j,regime,C_gamma_f,M_star,l_max,n_min");
    println!("{},{},{},{},{},{},{}", sel.l, sel.j, sel.regime.name(), c_gamma_f(&tc), ms, lm, report.n_min_noisy);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::CurveInfo { kind, d, kappa, length, normalize_reach, grid } => {
            curve_info(kind, d, kappa, length, normalize_reach, grid)
        }
        Cmd::Synth { model, n, seed, out } => {
            let spec = Config::load(&model)?.model_spec()?;
            let ds = sample_dataset(&spec, n, seed)?;
            write_dataset(&ds, create(&out)?)
        }
        Cmd::Fit { data, config, out } => {
            let fc = Config::load(&config)?.fit_config()?;
            let model = fit(&load_dataset(&data)?, &fc)?;
            let mut w = create(&out)?;
            w.write_all(model.to_json()?.as_bytes())?;
            w.flush()?;
            Ok(())
        }
        Cmd::Predict { model, data, out } => {
            let model = SvrModel::from_json(&std::fs::read_to_string(model)?)?;
            let ds = load_dataset(&data)?;
            if ds.d != model.d {
                return Err(svr_core::SvrError::InvalidArgument(format!(
                    "dataset has d = {}, model expects {}",
                    ds.d, model.d
                )));
            }
            let mut w = create(&out)?;
            writeln!(w, "prediction")?;
            for p in predict_many(&model, &ds.x) {
                writeln!(w, "{p:?}")?;
            }
            w.flush()?;
            Ok(())
        }
        Cmd::Tune { model, n, regime } => tune(&model, n, regime),
        Cmd::Experiment { config, out } => {
            let cfg = Config::load(&config)?;
            let rows = run_experiment(&cfg.experiment_config()?, &cfg.model_spec()?)?;
            write_csv(&rows, create(&out)?)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
