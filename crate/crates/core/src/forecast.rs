//! Forecasting pipeline: preprocessing, multi-horizon training, quantile
//! prediction, post-hoc calibration, metrics and the seasonal-naive
//! baseline.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::randfourier::{median_heuristic_lengthscales, RandomBasis, SpectralMode};
use crate::vargp::{
    compute_features, gradients, latent_variances, Adam, Batch, Dims, ObjectiveConfig, ObjectiveMode, VariationalState,
};

pub const STD_FLOOR: f64 = 1e-8;

pub fn default_quantiles() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

pub fn default_calibration_grid() -> Vec<f64> {
    (1..=20).map(|i| i as f64 / 10.0).collect()
}

/// Forecasting task settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastConfig {
    pub horizon: usize,
    pub lags: usize,
    pub quantiles: Vec<f64>,
    pub calibration_grid: Vec<f64>,
    /// Baseline season; `None` defers to the dataset metadata.
    pub season: Option<usize>,
}

impl ForecastConfig {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            lags: 9,
            quantiles: default_quantiles(),
            calibration_grid: default_calibration_grid(),
            season: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::arg("horizon must be >= 1"));
        }
        if self.quantiles.is_empty()
            || self.quantiles.iter().any(|&t| !(t > 0.0 && t < 1.0))
            || self.quantiles.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::arg("quantile levels must be strictly increasing in (0, 1)"));
        }
        if self.calibration_grid.is_empty() || self.calibration_grid.iter().any(|&b| !(b > 0.0)) {
            return Err(Error::arg("calibration grid must be non-empty and positive"));
        }
        if self.season == Some(0) {
            return Err(Error::arg("season must be >= 1"));
        }
        Ok(())
    }
}

/// Model and optimizer settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub features: usize,
    pub levels: usize,
    pub window: usize,
    pub lr: f64,
    pub epochs: usize,
    pub min_steps: usize,
    pub mode: ObjectiveMode,
    pub spectral: SpectralMode,
    pub penalty_weight: f64,
    pub seed: u64,
    pub decay_init: f64,
    pub order_init: f64,
    /// Initial noise variance as a fraction of the target variance.
    pub noise_ratio: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            features: 200,
            levels: 5,
            window: 32,
            lr: 1e-3,
            epochs: 200,
            min_steps: 20_000,
            mode: ObjectiveMode::PenalizedPpgpr,
            spectral: SpectralMode::Variational,
            penalty_weight: 0.01,
            seed: 0,
            decay_init: 0.99,
            order_init: 0.5,
            noise_ratio: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn objective(&self) -> ObjectiveConfig {
        ObjectiveConfig {
            mode: self.mode,
            spectral: self.spectral,
            penalty_weight: self.penalty_weight,
            window: self.window,
        }
    }

    pub fn steps_for(&self, n_series: usize) -> usize {
        (self.epochs * n_series).max(self.min_steps)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features == 0 || self.levels == 0 || self.window == 0 {
            return Err(Error::arg("D, M and W must be >= 1"));
        }
        if !(self.lr > 0.0) || self.penalty_weight < 0.0 || !(self.noise_ratio > 0.0) {
            return Err(Error::arg("lr and noise ratio must be positive, penalty_weight non-negative"));
        }
        Ok(())
    }
}

/// Row `t` is `(y_t, y_{t−1}, …, y_{t−l})`, zero before the series start.
pub fn lag_augment(y: &[f64], lags: usize) -> Array2<f64> {
    Array2::from_shape_fn((y.len(), lags + 1), |(t, j)| if j <= t { y[t - j] } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

impl Standardizer {
    pub fn fit(y: &[f64]) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::Data("cannot standardize an empty series".into()));
        }
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Ok(Self {
            mean,
            std: var.sqrt().max(STD_FLOOR),
        })
    }

    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| (v - self.mean) / self.std).collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter().map(|v| v * self.std + self.mean).collect()
    }
}

/// Head targets: entry `(l, h−1)` is `y_{l+h}`; pairs past the end are
/// masked out.
pub fn build_targets(y: &[f64], horizon: usize) -> (Array2<f64>, Array2<bool>) {
    let n = y.len();
    let mask = Array2::from_shape_fn((n, horizon), |(l, h)| l + h + 1 < n);
    let targets = Array2::from_shape_fn((n, horizon), |(l, h)| if l + h + 1 < n { y[l + h + 1] } else { 0.0 });
    (targets, mask)
}

/// Trained forecaster: the frozen basis, the variational state and the
/// settings it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastModel {
    pub horizon: usize,
    pub lags: usize,
    pub train: TrainConfig,
    pub basis: RandomBasis,
    pub state: VariationalState,
}

/// Per-step Gaussian forecast in the original scale.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveBand {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl PredictiveBand {
    pub fn scaled(&self, beta: f64) -> Self {
        Self {
            mean: self.mean.clone(),
            std: self.std.iter().map(|s| s * beta).collect(),
        }
    }

    pub fn quantiles(&self, levels: &[f64]) -> QuantileForecast {
        let normal = Normal::standard();
        let z: Vec<f64> = levels
            .iter()
            .map(|&t| if t == 0.5 { 0.0 } else { normal.inverse_cdf(t) })
            .collect();
        let values = Array2::from_shape_fn((self.mean.len(), levels.len()), |(h, j)| self.mean[h] + z[j] * self.std[h]);
        QuantileForecast {
            levels: levels.to_vec(),
            values,
        }
    }
}

/// Forecast quantiles `[H × #levels]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileForecast {
    pub levels: Vec<f64>,
    pub values: Array2<f64>,
}

impl QuantileForecast {
    pub fn horizon(&self) -> usize {
        self.values.nrows()
    }

    /// The median column, or the middle level when 0.5 is absent.
    pub fn point(&self) -> ArrayView1<'_, f64> {
        let j = self
            .levels
            .iter()
            .position(|&t| t == 0.5)
            .unwrap_or(self.levels.len() / 2);
        self.values.column(j)
    }
}

struct Prepared {
    batches: Vec<Batch>,
    lengthscales: Vec<f64>,
    target_var: f64,
}

fn prepare(series: &[&[f64]], horizon: usize, lags: usize) -> Result<Prepared> {
    let mut batches = Vec::with_capacity(series.len());
    let mut pooled = Vec::new();
    let (mut sum, mut sum2, mut count) = (0.0, 0.0, 0usize);
    for y in series {
        if y.len() < 2 {
            return Err(Error::Data("every training series needs at least 2 observations".into()));
        }
        let z = Standardizer::fit(y)?.apply(y);
        let x = lag_augment(&z, lags);
        let (targets, mask) = build_targets(&z, horizon);
        for (&t, &m) in targets.iter().zip(&mask) {
            if m {
                sum += t;
                sum2 += t * t;
                count += 1;
            }
        }
        if pooled.len() < 2000 {
            pooled.extend(x.rows().into_iter().take(2000 - pooled.len()).map(|r| r.to_vec()));
        }
        batches.push(Batch::new(x, targets, mask)?);
    }
    if count == 0 {
        return Err(Error::Data("training series are too short to supervise any horizon".into()));
    }
    let total: usize = batches.iter().map(|b| b.pairs()).sum();
    let batches = batches.into_iter().map(|b| b.with_total_pairs(total)).collect();
    let flat: Vec<f64> = pooled.iter().flatten().copied().collect();
    let xs = Array2::from_shape_vec((pooled.len(), lags + 1), flat).expect("pooled rows");
    let mean = sum / count as f64;
    Ok(Prepared {
        batches,
        lengthscales: median_heuristic_lengthscales(xs.view(), 500),
        target_var: (sum2 / count as f64 - mean * mean).max(STD_FLOOR),
    })
}

/// Result of a training run that hit a non-finite value.
#[derive(Debug)]
pub struct TrainFailure {
    pub error: Error,
    /// Model before the failing step, when training got that far.
    pub last_good: Option<ForecastModel>,
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ForecastModel,
    /// Negated objective per step (lower is better).
    pub trace: Vec<f64>,
}

impl ForecastModel {
    /// Initial model for the given training series.
    pub fn initialize(series: &[&[f64]], fcfg: &ForecastConfig, tcfg: &TrainConfig) -> Result<Self> {
        Ok(Self::init_with(series, fcfg, tcfg)?.0)
    }

    fn init_with(series: &[&[f64]], fcfg: &ForecastConfig, tcfg: &TrainConfig) -> Result<(Self, Vec<Batch>)> {
        fcfg.validate()?;
        tcfg.validate()?;
        if series.is_empty() {
            return Err(Error::Data("training set is empty".into()));
        }
        let prep = prepare(series, fcfg.horizon, fcfg.lags)?;
        let dims = Dims {
            levels: tcfg.levels,
            input_dim: fcfg.lags + 1,
            features: tcfg.features,
            heads: fcfg.horizon,
        };
        let basis = RandomBasis::sample(dims.levels, dims.input_dim, dims.features, tcfg.seed)?;
        let state = VariationalState::initialize(
            dims,
            &basis,
            &prep.lengthscales,
            tcfg.noise_ratio * prep.target_var,
            tcfg.decay_init,
            tcfg.order_init,
        )?;
        Ok((
            Self {
                horizon: fcfg.horizon,
                lags: fcfg.lags,
                train: tcfg.clone(),
                basis,
                state,
            },
            prep.batches,
        ))
    }

    /// Adam on full-series batches for `max(epochs × #series, min_steps)`
    /// steps, visiting series in a seeded random order each epoch.
    pub fn train(
        series: &[&[f64]],
        fcfg: &ForecastConfig,
        tcfg: &TrainConfig,
    ) -> std::result::Result<TrainOutcome, Box<TrainFailure>> {
        let (model, batches) = Self::init_with(series, fcfg, tcfg).map_err(|error| {
            Box::new(TrainFailure {
                error,
                last_good: None,
                trace: Vec::new(),
            })
        })?;
        let steps = tcfg.steps_for(series.len());
        model.train_for(&batches, steps)
    }

    fn train_for(mut self, batches: &[Batch], steps: usize) -> std::result::Result<TrainOutcome, Box<TrainFailure>> {
        let cfg = self.train.objective();
        let mut adam = Adam::new(self.state.len(), self.train.lr).expect("validated lr");
        let mut rng = ChaCha20Rng::seed_from_u64(self.train.seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut order: Vec<usize> = (0..batches.len()).collect();
        let mut trace = Vec::with_capacity(steps);
        for step in 0..steps {
            let pos = step % batches.len();
            if pos == 0 {
                order.shuffle(&mut rng);
            }
            let ev = match gradients(&batches[order[pos]], &self.state, &self.basis, &cfg) {
                Ok(ev) => ev,
                Err(error) => {
                    return Err(Box::new(TrainFailure {
                        error,
                        last_good: Some(self),
                        trace,
                    }))
                }
            };
            trace.push(-ev.terms.total);
            let before = self.state.clone();
            adam.ascend(self.state.as_mut_slice(), ev.gradient.as_slice());
            if let Err(error) = self.state.check_finite("parameter after update") {
                self.state = before;
                return Err(Box::new(TrainFailure {
                    error,
                    last_good: Some(self),
                    trace,
                }));
            }
            if (step + 1) % 1000 == 0 {
                log::info!("step {}/{steps}: objective {:.6}", step + 1, ev.terms.total);
            }
        }
        Ok(TrainOutcome { model: self, trace })
    }

    fn features(&self, z: &[f64]) -> Result<Array2<f64>> {
        let x = lag_augment(z, self.lags);
        Ok(compute_features(x.view(), &self.state, &self.basis, self.train.spectral, self.train.window)?.phi)
    }

    /// Standardized head means `[rows × H]` and total predictive variances
    /// `[rows]` (latent plus noise) at the given feature rows.
    fn head_moments(&self, phi: ArrayView2<f64>) -> (Array2<f64>, Vec<f64>) {
        let posterior = self.state.posterior();
        let means = phi.dot(&posterior.mean);
        let noise = self.state.noise_var();
        let vars = latent_variances(phi, posterior.chol.view())
            .iter()
            .map(|v| v + noise)
            .collect();
        (means, vars)
    }

    /// Gaussian forecast for the `H` steps after the end of `observed`.
    pub fn predict_band(&self, observed: &[f64]) -> Result<PredictiveBand> {
        let st = Standardizer::fit(observed)?;
        let z = st.apply(observed);
        let phi = self.features(&z)?;
        let last = phi.slice(ndarray::s![phi.nrows() - 1.., ..]);
        let (means, vars) = self.head_moments(last);
        let sd = vars[0].sqrt() * st.std;
        Ok(PredictiveBand {
            mean: means.row(0).iter().map(|m| m * st.std + st.mean).collect(),
            std: vec![sd; self.horizon],
        })
    }

    pub fn predict(&self, observed: &[f64], quantiles: &[f64], beta: f64) -> Result<QuantileForecast> {
        Ok(self.predict_band(observed)?.scaled(beta).quantiles(quantiles))
    }

    /// Selects `β` from `grid` minimizing the CRPS of rolling forecasts on
    /// `observed` (non-overlapping windows of length `H` ending at its end).
    pub fn calibrate(&self, observed: &[f64], grid: &[f64], quantiles: &[f64]) -> Result<f64> {
        if grid.is_empty() {
            return Err(Error::arg("calibration grid is empty"));
        }
        if grid.len() == 1 {
            return Ok(grid[0]);
        }
        let h = self.horizon;
        if observed.len() <= h {
            log::warn!("series of length {} too short to calibrate horizon {h}; using beta = 1", observed.len());
            return Ok(1.0);
        }
        let st = Standardizer::fit(observed)?;
        let z = st.apply(observed);
        let phi = self.features(&z)?;
        let origins: Vec<usize> = (1..)
            .map_while(|k: usize| (observed.len() - 1).checked_sub(h * k))
            .collect();
        let rows = Array2::from_shape_fn((origins.len(), phi.ncols()), |(i, j)| phi[[origins[i], j]]);
        let (means, vars) = self.head_moments(rows.view());
        let mut bands = Vec::with_capacity(origins.len());
        let mut actuals = Vec::with_capacity(origins.len());
        for (i, &t) in origins.iter().enumerate() {
            bands.push(PredictiveBand {
                mean: means.row(i).iter().map(|m| m * st.std + st.mean).collect(),
                std: vec![vars[i].sqrt() * st.std; h],
            });
            actuals.push(observed[t + 1..t + 1 + h].to_vec());
        }
        Ok(select_beta(&bands, &actuals, grid, quantiles))
    }
}

/// Grid value minimizing the pooled CRPS of `bands` scaled by `β`; ties keep
/// the earliest grid entry. Returns 1 when nothing can be scored.
pub fn select_beta(bands: &[PredictiveBand], actuals: &[Vec<f64>], grid: &[f64], quantiles: &[f64]) -> f64 {
    let mut best = (1.0, f64::INFINITY);
    for &beta in grid {
        let forecasts: Vec<QuantileForecast> = bands.iter().map(|b| b.scaled(beta).quantiles(quantiles)).collect();
        let refs: Vec<&[f64]> = actuals.iter().map(|a| a.as_slice()).collect();
        match crps(&forecasts, &refs) {
            Ok(score) if score < best.1 => best = (beta, score),
            Ok(_) => {}
            Err(_) => return 1.0,
        }
    }
    best.0
}

/// `L_τ(q, y) = (τ − 1{y < q})(y − q)`.
pub fn pinball(q: f64, y: f64, tau: f64) -> f64 {
    let ind = if y < q { 1.0 } else { 0.0 };
    (tau - ind) * (y - q)
}

/// Numerator and normalizer of [`crps`], for pooling across calls.
pub fn crps_parts(forecasts: &[QuantileForecast], actuals: &[&[f64]]) -> Result<(f64, f64)> {
    if forecasts.len() != actuals.len() {
        return Err(Error::arg("forecasts and actuals differ in series count"));
    }
    let mut num = 0.0;
    let mut abs = 0.0;
    for (f, y) in forecasts.iter().zip(actuals) {
        if f.horizon() != y.len() {
            return Err(Error::arg(format!(
                "forecast horizon {} does not match {} actuals",
                f.horizon(),
                y.len()
            )));
        }
        for (h, &yv) in y.iter().enumerate() {
            abs += yv.abs();
            for (j, &tau) in f.levels.iter().enumerate() {
                num += 2.0 * pinball(f.values[[h, j]], yv, tau);
            }
        }
    }
    let levels = forecasts.first().map_or(0, |f| f.levels.len());
    Ok((num, levels as f64 * abs))
}

/// Normalized mean quantile loss:
/// `Σ 2 L_τ(F⁻¹(τ), y) / (#levels · Σ |y|)`.
pub fn crps(forecasts: &[QuantileForecast], actuals: &[&[f64]]) -> Result<f64> {
    let (num, den) = crps_parts(forecasts, actuals)?;
    if !(den > 0.0) {
        return Err(Error::Data("CRPS normalization is undefined: all actuals are zero".into()));
    }
    Ok(num / den)
}

/// `ŷ_{T+h} = y_{T+h−season}`, repeating the last season for long
/// horizons; every quantile column holds the point forecast.
pub fn seasonal_naive(series: &[f64], season: usize, horizon: usize, quantiles: &[f64]) -> Result<QuantileForecast> {
    if series.is_empty() {
        return Err(Error::Data("seasonal naive needs at least one observation".into()));
    }
    let n = series.len();
    let point: Vec<f64> = if season == 0 || n < season {
        vec![series[n - 1]; horizon]
    } else {
        (0..horizon).map(|h| series[n - season + h % season]).collect()
    };
    Ok(QuantileForecast {
        levels: quantiles.to_vec(),
        values: Array2::from_shape_fn((horizon, quantiles.len()), |(h, _)| point[h]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn lags() {
        let x = lag_augment(&[1.0, 2.0, 3.0], 2);
        assert_eq!(x.row(2).to_vec(), vec![3.0, 2.0, 1.0]);
        assert_eq!(x.row(0).to_vec(), vec![1.0, 0.0, 0.0]);
        assert_eq!(lag_augment(&[4.0, 5.0], 0).column(0).to_vec(), vec![4.0, 5.0]);
    }

    #[test]
    fn standardization() {
        let st = Standardizer::fit(&[2.0; 5]).unwrap();
        assert!(st.apply(&[2.0; 5]).iter().all(|&z| z == 0.0));
        let y: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin() * 7.0 + 3.0).collect();
        let st = Standardizer::fit(&y).unwrap();
        let z = st.apply(&y);
        assert!((z.iter().sum::<f64>() / 50.0).abs() < 1e-10);
        for (a, b) in st.invert(&z).iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn targets_and_masks() {
        let y = [1.0, 2.0, 3.0, 4.0, 5.0];
        let (t, m) = build_targets(&y, 1);
        assert_eq!(t.column(0).to_vec()[..4], [2.0, 3.0, 4.0, 5.0]);
        let (_, m3) = build_targets(&y, 3);
        for h in 0..3 {
            assert_eq!(m3.column(h).iter().filter(|&&v| v).count(), y.len() - (h + 1));
        }
        assert!(!m[[4, 0]]);
    }

    #[test]
    fn pinball_and_crps_examples() {
        assert_eq!(pinball(1.3, 1.3, 0.7), 0.0);
        assert_eq!(pinball(0.0, 2.0, 0.5), 1.0);
        assert_abs_diff_eq!(pinball(3.0, 1.0, 0.9), 0.2, epsilon = 1e-15);
        let f = QuantileForecast {
            levels: default_quantiles(),
            values: Array2::zeros((1, 9)),
        };
        assert_eq!(crps(std::slice::from_ref(&f), &[&[2.0]]).unwrap(), 1.0);
        assert!(crps(&[f], &[&[0.0]]).is_err());
        let band = PredictiveBand {
            mean: vec![1.0, -2.0],
            std: vec![0.5, 0.1],
        };
        let q = band.quantiles(&default_quantiles());
        let y = [1.4, -2.3];
        let base = crps(std::slice::from_ref(&q), &[&y]).unwrap();
        let scaled = QuantileForecast {
            levels: q.levels.clone(),
            values: q.values.mapv(|v| v * 3.5),
        };
        let ys: Vec<f64> = y.iter().map(|v| v * 3.5).collect();
        assert_abs_diff_eq!(crps(&[scaled], &[&ys]).unwrap(), base, epsilon = 1e-14);
        let exact = PredictiveBand {
            mean: y.to_vec(),
            std: vec![0.0; 2],
        };
        assert_eq!(crps(&[exact.quantiles(&default_quantiles())], &[&y]).unwrap(), 0.0);
    }

    #[test]
    fn quantiles_from_band() {
        let band = PredictiveBand {
            mean: vec![0.3, 4.0],
            std: vec![1.0, 2.0],
        };
        let q = band.quantiles(&default_quantiles());
        assert_eq!(q.point().to_vec(), vec![0.3, 4.0]);
        for row in q.values.rows() {
            assert!(row.windows(2).into_iter().all(|w| w[0] <= w[1]));
        }
        let flat = band.scaled(0.0).quantiles(&default_quantiles());
        assert!(flat.values.row(1).iter().all(|&v| v == 4.0));
    }

    #[test]
    fn naive_baseline() {
        let y: Vec<f64> = (0..30).map(|t| [1.0, 5.0, 2.0][t % 3]).collect();
        let f = seasonal_naive(&y[..24], 3, 6, &default_quantiles()).unwrap();
        assert_eq!(f.point().to_vec(), y[24..30].to_vec());
        assert_eq!(crps(&[f], &[&y[24..30]]).unwrap(), 0.0);
        let last = seasonal_naive(&y, 1, 4, &[0.5]).unwrap();
        assert!(last.values.iter().all(|&v| v == y[29]));
        let short = seasonal_naive(&y[..2], 3, 2, &[0.5]).unwrap();
        assert!(short.values.iter().all(|&v| v == y[1]));
        let slice = seasonal_naive(&y, 10, 4, &[0.5]).unwrap();
        assert_eq!(slice.point().to_vec(), y[20..24].to_vec());
    }

    fn calibration_sim(std_scale: f64) -> f64 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (mut bands, mut actuals) = (Vec::new(), Vec::new());
        for _ in 0..400 {
            let mean: Vec<f64> = (0..10).map(|_| rng.random_range(-5.0..5.0)).collect();
            let sd: Vec<f64> = (0..10).map(|_| rng.random_range(0.5..2.0)).collect();
            let y: Vec<f64> = mean
                .iter()
                .zip(&sd)
                .map(|(m, s)| { let e: f64 = StandardNormal.sample(&mut rng); m + s * e })
                .collect();
            bands.push(PredictiveBand {
                mean,
                std: sd.iter().map(|s| s * std_scale).collect(),
            });
            actuals.push(y);
        }
        select_beta(&bands, &actuals, &default_calibration_grid(), &default_quantiles())
    }

    #[test]
    fn calibration_recovers_scale() {
        assert!((calibration_sim(1.0) - 1.0).abs() <= 0.1 + 1e-12);
        assert!((calibration_sim(2.0) - 0.5).abs() <= 0.1 + 1e-12);
        assert_eq!(select_beta(&[], &[], &[0.7], &default_quantiles()), 1.0);
    }

    fn tiny_setup() -> (Vec<f64>, ForecastConfig, TrainConfig) {
        let y: Vec<f64> = (0..60).map(|t| (t as f64 * 0.5).sin() + 0.3 * (t as f64 * 0.13).cos()).collect();
        let mut f = ForecastConfig::new(3);
        f.lags = 2;
        let t = TrainConfig {
            features: 6,
            levels: 2,
            window: 8,
            lr: 1e-2,
            epochs: 1,
            min_steps: 30,
            seed: 3,
            ..Default::default()
        };
        (y, f, t)
    }

    #[test]
    fn training_is_deterministic_and_finite() {
        let (y, f, t) = tiny_setup();
        let a = ForecastModel::train(&[&y], &f, &t).unwrap();
        let b = ForecastModel::train(&[&y], &f, &t).unwrap();
        assert_eq!(a.trace.len(), 30);
        assert!(a.trace.iter().all(|v| v.is_finite()));
        assert_eq!(a.model.state.as_slice(), b.model.state.as_slice());
        let zero = TrainConfig { min_steps: 0, epochs: 0, ..t };
        let z = ForecastModel::train(&[&y], &f, &zero).unwrap();
        assert_eq!(z.model, ForecastModel::initialize(&[&y], &f, &zero).unwrap());
    }

    #[test]
    fn forecast_is_causal_and_well_formed() {
        let (y, f, t) = tiny_setup();
        let model = ForecastModel::train(&[&y[..50]], &f, &t).unwrap().model;
        let q = model.predict(&y[..50], &f.quantiles, 1.0).unwrap();
        assert_eq!(q.values.dim(), (3, 9));
        for row in q.values.rows() {
            assert!(row.windows(2).into_iter().all(|w| w[0] <= w[1]));
        }
        let mut other = y.clone();
        for v in &mut other[50..] {
            *v = 1e3;
        }
        assert_eq!(model.predict(&other[..50], &f.quantiles, 1.0).unwrap(), q);
        let beta = model.calibrate(&y[..50], &f.calibration_grid, &f.quantiles).unwrap();
        assert!(f.calibration_grid.contains(&beta));
        assert_eq!(model.calibrate(&y[..2], &f.calibration_grid, &f.quantiles).unwrap(), 1.0);
        assert_eq!(model.calibrate(&y[..50], &[0.3], &f.quantiles).unwrap(), 0.3);
    }
}
