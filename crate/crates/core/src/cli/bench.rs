//! Feature-pass throughput and memory measurements.

use std::time::Instant;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use super::alloc;
use crate::arrayops::{DecayVector, FracDiffOrders};
use crate::error::{Error, Result};
use crate::forecast::lag_augment;
use crate::randfourier::{reparam_frequencies, reparam_phases, RandomBasis, SpectralMode, SpectralParams};
use crate::sigfeatures::{assemble, rfdsf_from_inputs};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub lengths: Vec<usize>,
    pub features: usize,
    pub levels: usize,
    pub lags: usize,
    pub window: usize,
    pub threads: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            lengths: vec![1_000, 10_000, 100_000],
            features: 200,
            levels: 5,
            lags: 9,
            window: 32,
            threads: rayon::current_num_threads(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub len: usize,
    pub seconds: f64,
    /// Peak heap growth during the pass; 0 when the tracking allocator is
    /// not installed.
    pub peak_bytes: usize,
    pub threads: usize,
    /// Sum of the final assembled feature row, for cross-run comparison.
    pub checksum: f64,
}

/// Random-walk input of length `len`, lag-augmented to `lags + 1` columns.
pub fn bench_input(len: usize, lags: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut y = Vec::with_capacity(len);
    let mut acc = 0.0;
    for _ in 0..len {
        let e: f64 = StandardNormal.sample(&mut rng);
        acc += 0.1 * e;
        y.push(acc);
    }
    lag_augment(&y, lags)
}

/// One full decayed feature pass (activations, increments, recursion,
/// normalization) over `x`; returns the checksum of the last feature row.
pub fn feature_pass(x: &Array2<f64>, basis: &RandomBasis, window: usize) -> Result<f64> {
    let d = x.ncols();
    let dd = basis.features();
    let params = SpectralParams::initialize(basis, &vec![1.0; d])?;
    let omega = reparam_frequencies(basis, &params, SpectralMode::Prior)?;
    let phases = reparam_phases(basis, &params, SpectralMode::Prior)?;
    let orders = FracDiffOrders::uniform(0.5, dd, window)?;
    let lambda = DecayVector::new(vec![0.99; dd])?;
    let levels = rfdsf_from_inputs(x.view(), &omega, &phases, &orders, Some(&lambda))?;
    let phi = assemble(&levels).phi;
    Ok(phi.row(phi.nrows() - 1).sum())
}

pub fn run(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if cfg.threads == 0 {
        return Err(Error::arg("threads must be >= 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Resource(e.to_string()))?;
    let basis = RandomBasis::sample(cfg.levels, cfg.lags + 1, cfg.features, cfg.seed)?;
    let mut rows = Vec::with_capacity(cfg.lengths.len());
    for &len in &cfg.lengths {
        if len == 0 {
            return Err(Error::arg("sequence lengths must be >= 1"));
        }
        let x = bench_input(len, cfg.lags, cfg.seed);
        alloc::reset_peak();
        let base = alloc::live_bytes();
        let start = Instant::now();
        let checksum = pool.install(|| feature_pass(&x, &basis, cfg.window))?;
        let seconds = start.elapsed().as_secs_f64();
        let peak = if alloc::is_installed() {
            alloc::peak_bytes().saturating_sub(base)
        } else {
            0
        };
        rows.push(BenchRow {
            len,
            seconds,
            peak_bytes: peak,
            threads: cfg.threads,
            checksum,
        });
    }
    Ok(rows)
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("L,seconds,peak_bytes,threads\n");
    for r in rows {
        s.push_str(&format!("{},{:.6},{},{}\n", r.len, r.seconds, r.peak_bytes, r.threads));
    }
    s
}
