//! Flat, named parameter storage for the trainable state.
//!
//! Every trainable quantity lives in one contiguous vector so the optimizer
//! and finite-difference checks treat the state uniformly; blocks are
//! addressed by [`Block`]. Constrained quantities are stored unconstrained:
//! log for positive values, logit for values in `(0, 1)`.

use ndarray::{Array2, Array3, ArrayView2, ArrayViewMut2};

use crate::error::{Error, Result};
use crate::randfourier::{RandomBasis, SpectralParams};

/// Parameter blocks, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Block {
    /// `μ_w`, `[W × H]`.
    WeightMean,
    /// `L_w`, `[W × W]` lower-triangular; the diagonal is stored as its log.
    WeightChol,
    /// `log σ_y²`.
    LogNoise,
    /// `log ℓ`, `[M × d]`.
    LogLengthscale,
    /// `ρ_λ` with `λ = sigmoid(ρ_λ)`, `[D]`.
    DecayLogit,
    /// `ρ_q` with `q = sigmoid(ρ_q)`, `[D]`.
    OrderLogit,
    /// `μ`, `[M × d × D]`.
    FreqMean,
    /// `log σ`, `[M × d × D]`.
    FreqLogStd,
    /// `log (a, b)`, `[M × D × 2]`.
    PhaseLogShape,
}

impl Block {
    pub const ALL: [Block; 9] = [
        Block::WeightMean,
        Block::WeightChol,
        Block::LogNoise,
        Block::LogLengthscale,
        Block::DecayLogit,
        Block::OrderLogit,
        Block::FreqMean,
        Block::FreqLogStd,
        Block::PhaseLogShape,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::WeightMean => "weight_mean",
            Block::WeightChol => "weight_chol",
            Block::LogNoise => "log_noise_var",
            Block::LogLengthscale => "log_lengthscale",
            Block::DecayLogit => "decay_logit",
            Block::OrderLogit => "order_logit",
            Block::FreqMean => "freq_mean",
            Block::FreqLogStd => "freq_log_std",
            Block::PhaseLogShape => "phase_log_shape",
        }
    }

    pub fn from_name(name: &str) -> Option<Block> {
        Block::ALL.into_iter().find(|b| b.name() == name)
    }

    fn index(self) -> usize {
        Block::ALL.iter().position(|&b| b == self).unwrap()
    }
}

/// Model dimensions: `M` levels, input dimension `d`, `D` random features
/// per level and `H` forecast heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub levels: usize,
    pub input_dim: usize,
    pub features: usize,
    pub heads: usize,
}

impl Dims {
    /// Feature width `MD + 1`.
    pub fn width(&self) -> usize {
        self.levels * self.features + 1
    }

    fn block_shape(&self, b: Block) -> Vec<usize> {
        let (m, d, dd, h, w) = (self.levels, self.input_dim, self.features, self.heads, self.width());
        match b {
            Block::WeightMean => vec![w, h],
            Block::WeightChol => vec![w, w],
            Block::LogNoise => vec![1],
            Block::LogLengthscale => vec![m, d],
            Block::DecayLogit | Block::OrderLogit => vec![dd],
            Block::FreqMean | Block::FreqLogStd => vec![m, d, dd],
            Block::PhaseLogShape => vec![m, dd, 2],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.input_dim == 0 || self.features == 0 || self.heads == 0 {
            return Err(Error::arg("all model dimensions must be >= 1"));
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// All trainable parameters in unconstrained form.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState {
    dims: Dims,
    offsets: [usize; 10],
    data: Vec<f64>,
}

impl VariationalState {
    pub fn zeros(dims: Dims) -> Result<Self> {
        dims.validate()?;
        let mut offsets = [0usize; 10];
        for (i, b) in Block::ALL.iter().enumerate() {
            offsets[i + 1] = offsets[i] + dims.block_shape(*b).iter().product::<usize>();
        }
        Ok(Self {
            dims,
            data: vec![0.0; offsets[9]],
            offsets,
        })
    }

    /// Initial state: `μ_w = 0`, `L_w = 1e-2 I`, noise variance `noise_var`,
    /// decay `λ0`, order `q0`, spectral parameters from
    /// [`SpectralParams::initialize`].
    pub fn initialize(
        dims: Dims,
        basis: &RandomBasis,
        lengthscales: &[f64],
        noise_var: f64,
        decay: f64,
        order: f64,
    ) -> Result<Self> {
        if basis.levels() != dims.levels || basis.input_dim() != dims.input_dim || basis.features() != dims.features {
            return Err(Error::arg("basis dimensions do not match the model"));
        }
        if !(noise_var > 0.0) || !(decay > 0.0 && decay < 1.0) || !(order > 0.0 && order < 1.0) {
            return Err(Error::arg("initial noise must be positive; decay and order must lie in (0, 1)"));
        }
        let mut s = Self::zeros(dims)?;
        {
            let w = dims.width();
            let chol = s.block_mut(Block::WeightChol);
            for i in 0..w {
                chol[i * w + i] = 1e-2f64.ln();
            }
        }
        s.block_mut(Block::LogNoise)[0] = noise_var.ln();
        s.block_mut(Block::DecayLogit).fill(logit(decay));
        s.block_mut(Block::OrderLogit).fill(logit(order));
        let sp = SpectralParams::initialize(basis, lengthscales)?;
        s.set_spectral(&sp);
        Ok(s)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn block(&self, b: Block) -> &[f64] {
        let i = b.index();
        &self.data[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn block_mut(&mut self, b: Block) -> &mut [f64] {
        let i = b.index();
        &mut self.data[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn block_shape(&self, b: Block) -> Vec<usize> {
        self.dims.block_shape(b)
    }

    pub fn block_range(&self, b: Block) -> std::ops::Range<usize> {
        let i = b.index();
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Overwrites one block from a flat slice (checkpoint loading).
    pub fn set_block(&mut self, b: Block, values: &[f64]) -> Result<()> {
        let dst = self.block_mut(b);
        if dst.len() != values.len() {
            return Err(Error::arg(format!("block {} expects {} values", b.name(), dst.len())));
        }
        dst.copy_from_slice(values);
        Ok(())
    }

    pub fn weight_mean(&self) -> ArrayView2<'_, f64> {
        let d = self.dims;
        ArrayView2::from_shape((d.width(), d.heads), self.block(Block::WeightMean)).unwrap()
    }

    pub fn weight_mean_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        let d = self.dims;
        ArrayViewMut2::from_shape((d.width(), d.heads), self.block_mut(Block::WeightMean)).unwrap()
    }

    /// The lower-triangular Cholesky factor with its positive diagonal.
    pub fn chol(&self) -> Array2<f64> {
        let w = self.dims.width();
        let raw = self.block(Block::WeightChol);
        Array2::from_shape_fn((w, w), |(i, j)| match i.cmp(&j) {
            std::cmp::Ordering::Greater => raw[i * w + j],
            std::cmp::Ordering::Equal => raw[i * w + j].exp(),
            std::cmp::Ordering::Less => 0.0,
        })
    }

    pub fn set_chol(&mut self, chol: &Array2<f64>) -> Result<()> {
        let w = self.dims.width();
        if chol.dim() != (w, w) {
            return Err(Error::arg("Cholesky factor has the wrong shape"));
        }
        let raw = self.block_mut(Block::WeightChol);
        for i in 0..w {
            for j in 0..w {
                raw[i * w + j] = match i.cmp(&j) {
                    std::cmp::Ordering::Greater => chol[[i, j]],
                    std::cmp::Ordering::Equal => {
                        if !(chol[[i, i]] > 0.0) {
                            return Err(Error::arg("Cholesky diagonal must be positive"));
                        }
                        chol[[i, i]].ln()
                    }
                    std::cmp::Ordering::Less => 0.0,
                };
            }
        }
        Ok(())
    }

    pub fn posterior(&self) -> super::WeightPosterior {
        super::WeightPosterior {
            mean: self.weight_mean().to_owned(),
            chol: self.chol(),
        }
    }

    pub fn noise_var(&self) -> f64 {
        self.block(Block::LogNoise)[0].exp()
    }

    pub fn decay(&self) -> Vec<f64> {
        self.block(Block::DecayLogit).iter().map(|&r| sigmoid(r)).collect()
    }

    pub fn orders(&self) -> Vec<f64> {
        self.block(Block::OrderLogit).iter().map(|&r| sigmoid(r)).collect()
    }

    pub fn spectral(&self) -> SpectralParams {
        let d = self.dims;
        let (m, di, dd) = (d.levels, d.input_dim, d.features);
        let exp_vec = |b: Block| self.block(b).iter().map(|v| v.exp()).collect::<Vec<_>>();
        SpectralParams {
            lengthscales: Array2::from_shape_vec((m, di), exp_vec(Block::LogLengthscale)).unwrap(),
            freq_means: Array3::from_shape_vec((m, di, dd), self.block(Block::FreqMean).to_vec()).unwrap(),
            freq_stds: Array3::from_shape_vec((m, di, dd), exp_vec(Block::FreqLogStd)).unwrap(),
            phase_shapes: Array3::from_shape_vec((m, dd, 2), exp_vec(Block::PhaseLogShape)).unwrap(),
        }
    }

    pub fn set_spectral(&mut self, sp: &SpectralParams) {
        let ln = |a: &[f64]| a.iter().map(|v| v.ln()).collect::<Vec<_>>();
        let ls = ln(sp.lengthscales.as_standard_layout().as_slice().unwrap());
        self.block_mut(Block::LogLengthscale).copy_from_slice(&ls);
        self.block_mut(Block::FreqMean)
            .copy_from_slice(sp.freq_means.as_standard_layout().as_slice().unwrap());
        let st = ln(sp.freq_stds.as_standard_layout().as_slice().unwrap());
        self.block_mut(Block::FreqLogStd).copy_from_slice(&st);
        let sh = ln(sp.phase_shapes.as_standard_layout().as_slice().unwrap());
        self.block_mut(Block::PhaseLogShape).copy_from_slice(&sh);
    }

    /// Fails with a numerical error naming the first block holding a
    /// non-finite value.
    pub fn check_finite(&self, what: &str) -> Result<()> {
        for b in Block::ALL {
            if self.block(b).iter().any(|v| !v.is_finite()) {
                return Err(Error::numerical(b.name(), format!("non-finite {what}")));
            }
        }
        Ok(())
    }
}
