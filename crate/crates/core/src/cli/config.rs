//! Plain key/value run configuration.

use crate::dataio::split_key_value;
use crate::error::{Error, Result};
use crate::forecast::{default_calibration_grid, default_quantiles, TrainConfig};
use crate::randfourier::SpectralMode;
use crate::vargp::ObjectiveMode;

/// Everything a run reads from the config file; the horizon comes from the
/// dataset metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub lags: usize,
    pub quantiles: Vec<f64>,
    pub calibration_grid: Vec<f64>,
    pub season: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            lags: 9,
            quantiles: default_quantiles(),
            calibration_grid: default_calibration_grid(),
            season: None,
        }
    }
}

fn list(v: &str) -> std::result::Result<Vec<f64>, String> {
    v.split([',', ' '])
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| format!("'{s}': {e}")))
        .collect()
}

impl RunConfig {
    /// Keys: `D, M, lags, W, lr, epochs, min_steps, penalty_weight, mode,
    /// spectral, quantiles, calibration_grid, season, seed`. `#` starts a
    /// comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: i + 1, message };
            let (key, value) = split_key_value(line).ok_or_else(|| err(format!("expected 'key = value', got '{line}'")))?;
            let int = || value.parse::<usize>().map_err(|e| err(format!("{key}: {e}")));
            let float = || value.parse::<f64>().map_err(|e| err(format!("{key}: {e}")));
            match key {
                "D" => c.train.features = int()?,
                "M" => c.train.levels = int()?,
                "lags" => c.lags = int()?,
                "W" => c.train.window = int()?,
                "lr" => c.train.lr = float()?,
                "epochs" => c.train.epochs = int()?,
                "min_steps" => c.train.min_steps = int()?,
                "penalty_weight" => c.train.penalty_weight = float()?,
                "mode" => c.train.mode = ObjectiveMode::parse(value).map_err(|e| err(e.to_string()))?,
                "spectral" => c.train.spectral = SpectralMode::parse(value).map_err(|e| err(e.to_string()))?,
                "quantiles" => c.quantiles = list(value).map_err(|m| err(format!("quantiles: {m}")))?,
                "calibration_grid" => c.calibration_grid = list(value).map_err(|m| err(format!("calibration_grid: {m}")))?,
                "season" => c.season = Some(int()?),
                "seed" => c.train.seed = value.parse::<u64>().map_err(|e| err(format!("seed: {e}")))?,
                other => return Err(err(format!("unknown key '{other}'"))),
            }
        }
        c.train.validate()?;
        Ok(c)
    }

    pub fn to_text(&self) -> String {
        let fmt_list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let t = &self.train;
        let mut s = format!(
            "D = {}\nM = {}\nlags = {}\nW = {}\nlr = {}\nepochs = {}\nmin_steps = {}\npenalty_weight = {}\nmode = {}\nspectral = {}\nquantiles = {}\ncalibration_grid = {}\nseed = {}\n",
            t.features,
            t.levels,
            self.lags,
            t.window,
            t.lr,
            t.epochs,
            t.min_steps,
            t.penalty_weight,
            t.mode.name(),
            t.spectral.name(),
            fmt_list(&self.quantiles),
            fmt_list(&self.calibration_grid),
            t.seed
        );
        if let Some(p) = self.season {
            s.push_str(&format!("season = {p}\n"));
        }
        s
    }
}
