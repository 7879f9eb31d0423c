//! Command-line front end: `train`, `predict`, `evaluate`, `bench`, `synth`.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data or
//! checkpoint error, 4 numerical failure.

pub mod alloc;
pub mod bench;
pub mod checkpoint;
pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::dataio::{synth_multisin, Dataset, SynthConfig};
use crate::error::{Error, Result};
use crate::forecast::{crps, crps_parts, seasonal_naive, ForecastConfig, ForecastModel, PredictiveBand, QuantileForecast, Standardizer};
use checkpoint::{Checkpoint, SeriesInfo};
use config::RunConfig;

pub const THREADS_ENV: &str = "SIGFORECAST_THREADS";

#[derive(Debug, Parser)]
#[command(name = "sigforecast", version, about = "Signature-feature Gaussian process forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on the observed part of every series.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Objective trace CSV; defaults to `<out>.trace.csv`.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Write quantile forecasts and a mean ± 3σ band.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Band CSV; defaults to `<out>.band.csv`.
        #[arg(long)]
        band: Option<PathBuf>,
        /// Forecast past the end of each series instead of its final
        /// `prediction_length` values.
        #[arg(long)]
        full_history: bool,
        #[arg(long)]
        no_calibrate: bool,
    },
    /// Score forecasts of the final `prediction_length` values with CRPS.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Per-series scores CSV.
        #[arg(long)]
        per_series: Option<PathBuf>,
        /// Also write the scored forecasts.
        #[arg(long)]
        forecasts: Option<PathBuf>,
        /// Report the seasonal-naive baseline alongside.
        #[arg(long)]
        seasonal_naive: bool,
        #[arg(long)]
        no_calibrate: bool,
    },
    /// Time the feature pass over a list of sequence lengths.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "1000,10000,100000")]
        lengths: Vec<usize>,
        #[arg(long = "D", default_value_t = 200)]
        features: usize,
        #[arg(long = "M", default_value_t = 5)]
        levels: usize,
        #[arg(long, default_value_t = 9)]
        lags: usize,
        #[arg(long = "W", default_value_t = 32)]
        window: usize,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate the synthetic multi-sinusoid dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 700)]
        n_train: usize,
        #[arg(long, default_value_t = 100)]
        horizon: usize,
        /// Also export `item_id,t,value` CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Argument(_) => 2,
        Error::Numerical { .. } | Error::Resource(_) => 4,
        Error::Parse { .. } | Error::Data(_) | Error::Incompatible(_) | Error::Io(_) => 3,
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    s.into()
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        if n > 0 && rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::warn!("thread pool already initialized; {THREADS_ENV} ignored");
        }
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    configure_threads();
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::arg(format!("cannot read config {}: {e}", p.display())))?;
            RunConfig::parse(&text).map_err(|e| Error::arg(format!("config {}: {e}", p.display())))
        }
    }
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    if !path.exists() {
        return Err(Error::arg(format!("dataset {} does not exist", path.display())));
    }
    Dataset::load(path)
}

pub fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train {
            data,
            config,
            seed,
            out,
            trace,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            let ds = load_dataset(&data)?;
            let trace_path = trace.unwrap_or_else(|| with_suffix(&out, ".trace.csv"));
            cmd_train(&ds, &cfg, &out, &trace_path)
        }
        Command::Predict {
            model,
            data,
            out,
            band,
            full_history,
            no_calibrate,
        } => {
            let ck = Checkpoint::load(&model)?;
            let ds = load_dataset(&data)?;
            let band_path = band.unwrap_or_else(|| with_suffix(&out, ".band.csv"));
            let fc = forecast_dataset(&ck, &ds, full_history, !no_calibrate)?;
            fs::write(&out, forecast_csv(&fc))?;
            fs::write(&band_path, band_csv(&fc))?;
            Ok(())
        }
        Command::Evaluate {
            model,
            data,
            per_series,
            forecasts,
            seasonal_naive,
            no_calibrate,
        } => {
            let ck = Checkpoint::load(&model)?;
            let ds = load_dataset(&data)?;
            let report = cmd_evaluate(&ck, &ds, !no_calibrate, seasonal_naive)?;
            if let Some(p) = per_series {
                fs::write(p, report.per_series_csv())?;
            }
            if let Some(p) = forecasts {
                fs::write(p, forecast_csv(&report.forecasts))?;
            }
            println!("{}", report.summary_json());
            Ok(())
        }
        Command::Bench {
            lengths,
            features,
            levels,
            lags,
            window,
            threads,
            seed,
            out,
        } => {
            let cfg = bench::BenchConfig {
                lengths,
                features,
                levels,
                lags,
                window,
                threads: threads.unwrap_or_else(rayon::current_num_threads),
                seed,
            };
            let csv = bench::to_csv(&bench::run(&cfg)?);
            match out {
                Some(p) => fs::write(p, csv)?,
                None => print!("{csv}"),
            }
            Ok(())
        }
        Command::Synth {
            out,
            seed,
            n_train,
            horizon,
            csv,
        } => {
            if horizon == 0 {
                return Err(Error::arg("horizon must be >= 1"));
            }
            let ds = synth_multisin(&SynthConfig {
                n_train,
                horizon,
                seed,
                ..Default::default()
            })?;
            ds.write(&out)?;
            if let Some(p) = csv {
                ds.write_csv(fs::File::create(p)?)?;
            }
            Ok(())
        }
    }
}

fn forecast_config(cfg: &RunConfig, horizon: usize) -> ForecastConfig {
    ForecastConfig {
        horizon,
        lags: cfg.lags,
        quantiles: cfg.quantiles.clone(),
        calibration_grid: cfg.calibration_grid.clone(),
        season: cfg.season,
    }
}

/// Trains on every series' observed part, calibrates each, and writes the
/// checkpoint and trace. On a numerical failure the last finite model is
/// still written before the error is returned.
pub fn cmd_train(ds: &Dataset, cfg: &RunConfig, out: &Path, trace_path: &Path) -> Result<()> {
    let fcfg = forecast_config(cfg, ds.horizon());
    fcfg.validate()?;
    let series: Vec<&[f64]> = (0..ds.len()).map(|i| ds.observed(i)).collect();
    let (model, trace, failure) = match ForecastModel::train(&series, &fcfg, &cfg.train) {
        Ok(o) => (o.model, o.trace, None),
        Err(f) => {
            let f = *f;
            match f.last_good {
                Some(m) => (m, f.trace, Some(f.error)),
                None => return Err(f.error),
            }
        }
    };
    let mut infos = Vec::with_capacity(ds.len());
    for (i, y) in series.iter().enumerate() {
        let beta = if failure.is_none() {
            Some(model.calibrate(y, &fcfg.calibration_grid, &fcfg.quantiles)?)
        } else {
            None
        };
        infos.push(SeriesInfo {
            item_id: ds.records[i].item_id.clone(),
            stats: Standardizer::fit(y)?,
            beta,
        });
    }
    let mut t = String::from("step,loss\n");
    for (i, v) in trace.iter().enumerate() {
        let _ = writeln!(t, "{},{v}", i + 1);
    }
    fs::write(trace_path, t)?;
    Checkpoint {
        model,
        config: cfg.clone(),
        series: infos,
    }
    .save(out)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// One series' forecast as emitted by `predict` and scored by `evaluate`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesForecast {
    pub item_id: String,
    /// Length of the history the forecast conditions on.
    pub origin: usize,
    pub beta: f64,
    pub band: PredictiveBand,
    pub quantiles: QuantileForecast,
}

pub fn forecast_dataset(ck: &Checkpoint, ds: &Dataset, full_history: bool, calibrate: bool) -> Result<Vec<SeriesForecast>> {
    if ds.horizon() != ck.model.horizon {
        return Err(Error::Incompatible(format!(
            "dataset prediction_length {} differs from the model's {} heads",
            ds.horizon(),
            ck.model.horizon
        )));
    }
    let levels = &ck.config.quantiles;
    (0..ds.len())
        .map(|i| {
            let rec = &ds.records[i];
            let observed = if full_history { &rec.target[..] } else { ds.observed(i) };
            if observed.is_empty() {
                return Err(Error::Data(format!("series '{}' has no observed values", rec.item_id)));
            }
            let beta = if !calibrate {
                1.0
            } else if let Some(b) = ck.beta_for(&rec.item_id) {
                b
            } else {
                ck.model.calibrate(observed, &ck.config.calibration_grid, levels)?
            };
            let band = ck.model.predict_band(observed)?.scaled(beta);
            let quantiles = band.quantiles(levels);
            Ok(SeriesForecast {
                item_id: rec.item_id.clone(),
                origin: observed.len(),
                beta,
                band,
                quantiles,
            })
        })
        .collect()
}

pub fn forecast_csv(fc: &[SeriesForecast]) -> String {
    let mut s = String::from("series_id,step,quantile,value\n");
    for f in fc {
        for h in 0..f.quantiles.horizon() {
            for (j, tau) in f.quantiles.levels.iter().enumerate() {
                let _ = writeln!(s, "{},{},{},{}", f.item_id, h + 1, tau, f.quantiles.values[[h, j]]);
            }
        }
    }
    s
}

pub fn band_csv(fc: &[SeriesForecast]) -> String {
    let mut s = String::from("series_id,t,mean,lower,upper\n");
    for f in fc {
        for (h, (m, sd)) in f.band.mean.iter().zip(&f.band.std).enumerate() {
            let _ = writeln!(s, "{},{},{},{},{}", f.item_id, f.origin + h, m, m - 3.0 * sd, m + 3.0 * sd);
        }
    }
    s
}

#[derive(Debug, Clone)]
pub struct EvaluationReport {
    pub forecasts: Vec<SeriesForecast>,
    pub crps: f64,
    pub per_series: Vec<(String, f64)>,
    /// `(season, pooled CRPS, per-series CRPS)` of the baseline.
    pub naive: Option<(usize, f64, Vec<f64>)>,
}

impl EvaluationReport {
    pub fn per_series_csv(&self) -> String {
        let mut s = String::from("series_id,crps,beta");
        if self.naive.is_some() {
            s.push_str(",seasonal_naive_crps");
        }
        s.push('\n');
        for (i, (id, c)) in self.per_series.iter().enumerate() {
            let _ = write!(s, "{id},{c},{}", self.forecasts[i].beta);
            if let Some((_, _, per)) = &self.naive {
                let _ = write!(s, ",{}", per[i]);
            }
            s.push('\n');
        }
        s
    }

    pub fn summary_json(&self) -> String {
        let mut v = serde_json::json!({
            "crps": self.crps,
            "n_series": self.forecasts.len(),
            "horizon": self.forecasts.first().map_or(0, |f| f.quantiles.horizon()),
        });
        if let Some((season, c, _)) = &self.naive {
            v["seasonal_naive_crps"] = serde_json::json!(c);
            v["season"] = serde_json::json!(season);
        }
        v.to_string()
    }
}

fn series_crps(f: &QuantileForecast, y: &[f64]) -> f64 {
    crps(std::slice::from_ref(f), &[y]).unwrap_or(f64::NAN)
}

pub fn cmd_evaluate(ck: &Checkpoint, ds: &Dataset, calibrate: bool, with_naive: bool) -> Result<EvaluationReport> {
    let fc = forecast_dataset(ck, ds, false, calibrate)?;
    let actuals: Vec<&[f64]> = (0..ds.len()).map(|i| ds.actuals(i)).collect();
    for (f, a) in fc.iter().zip(&actuals) {
        if a.len() != ck.model.horizon {
            return Err(Error::Data(format!("series '{}' is shorter than the horizon", f.item_id)));
        }
    }
    let qf: Vec<QuantileForecast> = fc.iter().map(|f| f.quantiles.clone()).collect();
    let total = crps(&qf, &actuals)?;
    let per_series = fc
        .iter()
        .zip(&actuals)
        .map(|(f, a)| (f.item_id.clone(), series_crps(&f.quantiles, a)))
        .collect();
    let naive = if with_naive {
        let season = ck.config.season.unwrap_or_else(|| ds.metadata.default_season());
        let nf: Vec<QuantileForecast> = (0..ds.len())
            .map(|i| seasonal_naive(ds.observed(i), season, ds.horizon(), &ck.config.quantiles))
            .collect::<Result<_>>()?;
        let (num, den) = crps_parts(&nf, &actuals)?;
        let per = nf.iter().zip(&actuals).map(|(f, a)| series_crps(f, a)).collect();
        Some((season, num / den, per))
    } else {
        None
    };
    Ok(EvaluationReport {
        forecasts: fc,
        crps: total,
        per_series,
        naive,
    })
}
