//! Training objectives and their reverse-mode gradients.

use ndarray::{s, Array2, Array3, ArrayView2, Axis, Zip};

use super::state::{Block, VariationalState};
use super::{kl_frequencies, kl_phases, kl_weights, WeightPosterior};
use crate::arrayops::{DecayVector, FracDiffOrders};
use crate::error::{Error, Result};
use crate::randfourier::{
    phases_with_jacobian, reparam_frequencies, reparam_phases, rff_eval, rff_eval_vjp, RandomBasis, SpectralMode,
    SpectralParams,
};
use crate::sigfeatures::{assemble, assemble_vjp, rfdsf_from_inputs, AssembledFeatures, FeatureLevels, FeaturePass};
use crate::special::trigamma;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveMode {
    Elbo,
    Ppgpr,
    PenalizedPpgpr,
}

impl ObjectiveMode {
    pub fn name(self) -> &'static str {
        match self {
            ObjectiveMode::Elbo => "elbo",
            ObjectiveMode::Ppgpr => "ppgpr",
            ObjectiveMode::PenalizedPpgpr => "ppgpr+penalty",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "elbo" => Ok(ObjectiveMode::Elbo),
            "ppgpr" => Ok(ObjectiveMode::Ppgpr),
            "ppgpr+penalty" | "penalized" | "penalized_ppgpr" => Ok(ObjectiveMode::PenalizedPpgpr),
            other => Err(Error::arg(format!("unknown objective mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    pub mode: ObjectiveMode,
    pub spectral: SpectralMode,
    pub penalty_weight: f64,
    /// Fractional differencing window `W`.
    pub window: usize,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            mode: ObjectiveMode::PenalizedPpgpr,
            spectral: SpectralMode::Variational,
            penalty_weight: 0.01,
            window: 32,
        }
    }
}

/// One training sequence: inputs `[L × d]`, head targets `[L × H]` and the
/// mask of supervised `(step, head)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
    pub mask: Array2<bool>,
    /// Supervised pairs in the whole training set, for KL scaling.
    pub total_pairs: usize,
}

impl Batch {
    pub fn new(inputs: Array2<f64>, targets: Array2<f64>, mask: Array2<bool>) -> Result<Self> {
        if targets.nrows() != inputs.nrows() || mask.dim() != targets.dim() {
            return Err(Error::arg(format!(
                "batch shapes disagree: inputs {:?}, targets {:?}, mask {:?}",
                inputs.dim(),
                targets.dim(),
                mask.dim()
            )));
        }
        if Zip::from(&targets).and(&mask).fold(false, |bad, &y, &m| bad || (m && !y.is_finite())) {
            return Err(Error::Data("non-finite supervised target".into()));
        }
        let mut b = Self {
            inputs,
            targets,
            mask,
            total_pairs: 0,
        };
        b.total_pairs = b.pairs();
        Ok(b)
    }

    pub fn with_total_pairs(mut self, total: usize) -> Self {
        self.total_pairs = total;
        self
    }

    pub fn pairs(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    fn kl_scale(&self) -> f64 {
        if self.total_pairs == 0 {
            1.0
        } else {
            self.pairs() as f64 / self.total_pairs as f64
        }
    }
}

/// Objective value split into its pieces; `total` is what training maximizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveTerms {
    pub datafit: f64,
    pub penalty: f64,
    pub kl_weights: f64,
    pub kl_frequencies: f64,
    pub kl_phases: f64,
    pub kl_scale: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub terms: ObjectiveTerms,
    /// Gradient of `terms.total`, laid out like the state.
    pub gradient: VariationalState,
}

fn frequencies_and_phases(
    state: &VariationalState,
    basis: &RandomBasis,
    spectral: SpectralMode,
) -> Result<(SpectralParams, Array3<f64>, Array2<f64>)> {
    let sp = state.spectral();
    let omega = reparam_frequencies(basis, &sp, spectral)?;
    let phases = reparam_phases(basis, &sp, spectral)?;
    Ok((sp, omega, phases))
}

fn orders_and_decay(state: &VariationalState, window: usize) -> Result<(FracDiffOrders, Vec<f64>)> {
    Ok((FracDiffOrders::new(state.orders(), window)?, state.decay()))
}

/// Normalized feature matrix `[L × (MD+1)]` for one input sequence.
pub fn compute_features(
    x: ArrayView2<f64>,
    state: &VariationalState,
    basis: &RandomBasis,
    spectral: SpectralMode,
    window: usize,
) -> Result<AssembledFeatures> {
    let (_, omega, phases) = frequencies_and_phases(state, basis, spectral)?;
    let (orders, lam) = orders_and_decay(state, window)?;
    let lam = DecayVector::new(lam)?;
    let levels = rfdsf_from_inputs(x, &omega, &phases, &orders, Some(&lam))?;
    Ok(assemble(&levels))
}

struct Readout {
    datafit: f64,
    penalty: f64,
    /// `∂/∂mean`, `[L × H]`.
    g_mean: Array2<f64>,
    /// `∂/∂var`, summed over heads, `[L]`.
    g_var: Vec<f64>,
    g_noise_var: f64,
}

fn readout(batch: &Batch, means: &Array2<f64>, vars: &[f64], noise: f64, cfg: &ObjectiveConfig) -> Readout {
    let (len, heads) = batch.targets.dim();
    let alpha = match cfg.mode {
        ObjectiveMode::PenalizedPpgpr => cfg.penalty_weight,
        _ => 0.0,
    };
    let mut out = Readout {
        datafit: 0.0,
        penalty: 0.0,
        g_mean: Array2::zeros((len, heads)),
        g_var: vec![0.0; len],
        g_noise_var: 0.0,
    };
    for l in 0..len {
        let var = vars[l];
        for h in 0..heads {
            if !batch.mask[[l, h]] {
                continue;
            }
            let r = batch.targets[[l, h]] - means[[l, h]];
            match cfg.mode {
                ObjectiveMode::Elbo => {
                    let q = r * r + var;
                    out.datafit += -0.5 * (LN_2PI + noise.ln()) - q / (2.0 * noise);
                    out.g_mean[[l, h]] = r / noise;
                    out.g_var[l] += -0.5 / noise;
                    out.g_noise_var += -0.5 / noise + q / (2.0 * noise * noise);
                }
                ObjectiveMode::Ppgpr | ObjectiveMode::PenalizedPpgpr => {
                    let v = var + noise;
                    out.datafit += -0.5 * (LN_2PI + v.ln()) - r * r / (2.0 * v);
                    out.g_mean[[l, h]] = r / v;
                    let gv = -0.5 / v + r * r / (2.0 * v * v);
                    out.g_var[l] += gv;
                    out.g_noise_var += gv;
                }
            }
            if alpha > 0.0 {
                out.penalty += alpha * var;
                out.g_var[l] -= alpha;
            }
        }
    }
    out
}

fn check_shapes(batch: &Batch, state: &VariationalState) -> Result<()> {
    let d = state.dims();
    if batch.inputs.ncols() != d.input_dim || batch.targets.ncols() != d.heads {
        return Err(Error::arg(format!(
            "batch has {} inputs and {} heads, model expects {} and {}",
            batch.inputs.ncols(),
            batch.targets.ncols(),
            d.input_dim,
            d.heads
        )));
    }
    Ok(())
}

fn kl_terms(sp: &SpectralParams, posterior: &WeightPosterior, spectral: SpectralMode) -> (f64, f64, f64) {
    match spectral {
        SpectralMode::Variational => (kl_weights(posterior), kl_frequencies(sp), kl_phases(sp)),
        SpectralMode::Prior => (kl_weights(posterior), 0.0, 0.0),
    }
}

fn finish_terms(datafit: f64, penalty: f64, kl: (f64, f64, f64), scale: f64) -> Result<ObjectiveTerms> {
    let total = datafit - penalty - scale * (kl.0 + kl.1 + kl.2);
    if !total.is_finite() {
        let block = if !datafit.is_finite() {
            "datafit"
        } else if !kl.0.is_finite() {
            Block::WeightChol.name()
        } else {
            Block::FreqLogStd.name()
        };
        return Err(Error::numerical(block, "non-finite objective value"));
    }
    Ok(ObjectiveTerms {
        datafit,
        penalty,
        kl_weights: kl.0,
        kl_frequencies: kl.1,
        kl_phases: kl.2,
        kl_scale: scale,
        total,
    })
}

/// Objective terms without gradients.
pub fn evaluate(batch: &Batch, state: &VariationalState, basis: &RandomBasis, cfg: &ObjectiveConfig) -> Result<ObjectiveTerms> {
    check_shapes(batch, state)?;
    let phi = compute_features(batch.inputs.view(), state, basis, cfg.spectral, cfg.window)?.phi;
    let posterior = state.posterior();
    let means = phi.dot(&posterior.mean);
    let vars = super::latent_variances(phi.view(), posterior.chol.view()).to_vec();
    let r = readout(batch, &means, &vars, state.noise_var(), cfg);
    let sp = state.spectral();
    finish_terms(r.datafit, r.penalty, kl_terms(&sp, &posterior, cfg.spectral), batch.kl_scale())
}

/// The objective value being maximized.
pub fn objective(batch: &Batch, state: &VariationalState, basis: &RandomBasis, cfg: &ObjectiveConfig) -> Result<f64> {
    Ok(evaluate(batch, state, basis, cfg)?.total)
}

const TRI_BLOCK: usize = 64;

/// `A·L` for lower-triangular `L`, skipping the zero upper part.
fn mul_lower(a: ArrayView2<f64>, l: ArrayView2<f64>) -> Array2<f64> {
    let w = l.nrows();
    let mut out = Array2::zeros((a.nrows(), w));
    for j0 in (0..w).step_by(TRI_BLOCK) {
        let j1 = (j0 + TRI_BLOCK).min(w);
        let blk = a.slice(s![.., j0..]).dot(&l.slice(s![j0.., j0..j1]));
        out.slice_mut(s![.., j0..j1]).assign(&blk);
    }
    out
}

/// `G·Lᵀ` for lower-triangular `L`.
fn mul_lower_t(g: ArrayView2<f64>, l: ArrayView2<f64>) -> Array2<f64> {
    let w = l.nrows();
    let mut out = Array2::zeros((g.nrows(), w));
    for i0 in (0..w).step_by(TRI_BLOCK) {
        let i1 = (i0 + TRI_BLOCK).min(w);
        let blk = g.slice(s![.., ..i1]).dot(&l.slice(s![i0..i1, ..i1]).t());
        out.slice_mut(s![.., i0..i1]).assign(&blk);
    }
    out
}

/// Lower triangle (diagonal included) of `Aᵀ·B`; the strict upper part is
/// left at zero.
fn lower_of_product(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let w = a.ncols();
    let mut out = Array2::zeros((w, w));
    for j0 in (0..w).step_by(TRI_BLOCK) {
        let j1 = (j0 + TRI_BLOCK).min(w);
        let blk = a.slice(s![.., j0..]).t().dot(&b.slice(s![.., j0..j1]));
        out.slice_mut(s![j0.., j0..j1]).assign(&blk);
        for i in j0..j1 {
            for j in i + 1..j1 {
                out[[i, j]] = 0.0;
            }
        }
    }
    out
}

/// Objective value and its exact gradient with respect to every block.
pub fn gradients(batch: &Batch, state: &VariationalState, basis: &RandomBasis, cfg: &ObjectiveConfig) -> Result<Evaluation> {
    check_shapes(batch, state)?;
    let dims = state.dims();
    let (m_levels, dd, heads) = (dims.levels, dims.features, dims.heads);
    let (sp, omega) = {
        let sp = state.spectral();
        let omega = reparam_frequencies(basis, &sp, cfg.spectral)?;
        (sp, omega)
    };
    let (phases, dphase_a, dphase_b) = match cfg.spectral {
        SpectralMode::Variational => {
            let (p, a, b) = phases_with_jacobian(basis, &sp);
            (p, Some(a), Some(b))
        }
        SpectralMode::Prior => (reparam_phases(basis, &sp, cfg.spectral)?, None, None),
    };
    let (orders, lam) = orders_and_decay(state, cfg.window)?;
    DecayVector::new(lam.clone())?;

    // forward
    let x = batch.inputs.view();
    let u: Vec<Array2<f64>> = (0..m_levels)
        .map(|m| rff_eval(x, omega.index_axis(Axis(0), m), phases.row(m).as_slice().unwrap()))
        .collect::<Result<_>>()?;
    let pass = FeaturePass::forward(&u, &orders, lam.clone());
    drop(u);
    let levels = FeatureLevels::new(pass.levels().to_vec())?;
    let phi = assemble(&levels).phi;
    drop(levels);
    let posterior = state.posterior();
    let chol = &posterior.chol;
    let means = phi.dot(&posterior.mean);
    let v = mul_lower(phi.view(), chol.view());
    let vars: Vec<f64> = v.rows().into_iter().map(|r| r.dot(&r)).collect();
    let noise = state.noise_var();
    let r = readout(batch, &means, &vars, noise, cfg);
    let scale = batch.kl_scale();
    let terms = finish_terms(r.datafit, r.penalty, kl_terms(&sp, &posterior, cfg.spectral), scale)?;

    let mut grad = VariationalState::zeros(dims)?;

    // readout
    let mut gv = v;
    for (mut row, &g) in gv.rows_mut().into_iter().zip(&r.g_var) {
        row *= 2.0 * g;
    }
    let g_mu = phi.t().dot(&r.g_mean) - &(&posterior.mean * scale);
    grad.weight_mean_mut().assign(&g_mu);
    let g_chol = lower_of_product(phi.view(), gv.view());
    let width = dims.width();
    {
        let hs = heads as f64 * scale;
        let raw = grad.block_mut(Block::WeightChol);
        for i in 0..width {
            for j in 0..i {
                raw[i * width + j] = g_chol[[i, j]] - hs * chol[[i, j]];
            }
            let lii = chol[[i, i]];
            raw[i * width + i] = (g_chol[[i, i]] - hs * (lii - 1.0 / lii)) * lii;
        }
    }
    drop(g_chol);
    grad.block_mut(Block::LogNoise)[0] = r.g_noise_var * noise;
    let mut g_phi = mul_lower_t(gv.view(), chol.view());
    ndarray::linalg::general_mat_mul(1.0, &r.g_mean, &posterior.mean.t(), 1.0, &mut g_phi);
    drop(gv);

    // features
    let g_levels = assemble_vjp(pass.levels(), g_phi.view());
    drop(g_phi);
    let (g_u, g_q, g_lam) = pass.backward(g_levels);
    for (k, (g, q)) in grad.block_mut(Block::OrderLogit).iter_mut().zip(state.orders()).enumerate() {
        *g = g_q[k] * q * (1.0 - q);
    }
    for (k, (g, l)) in grad.block_mut(Block::DecayLogit).iter_mut().zip(&lam).enumerate() {
        *g = g_lam[k] * l * (1.0 - l);
    }

    // random features
    let d = dims.input_dim;
    let mut g_omega = Array3::<f64>::zeros((m_levels, d, dd));
    let mut g_phase = Array2::<f64>::zeros((m_levels, dd));
    for m in 0..m_levels {
        let (go, gb) = rff_eval_vjp(
            x,
            omega.index_axis(Axis(0), m),
            phases.row(m).as_slice().unwrap(),
            g_u[m].view(),
        );
        g_omega.index_axis_mut(Axis(0), m).assign(&go);
        g_phase.row_mut(m).assign(&ndarray::Array1::from(gb));
    }
    drop(g_u);

    match cfg.spectral {
        SpectralMode::Prior => {
            let g = grad.block_mut(Block::LogLengthscale);
            for m in 0..m_levels {
                for i in 0..d {
                    g[m * d + i] = -(0..dd).map(|k| g_omega[[m, i, k]] * omega[[m, i, k]]).sum::<f64>();
                }
            }
        }
        SpectralMode::Variational => {
            let eps = basis.normals();
            {
                let g = grad.block_mut(Block::LogLengthscale);
                for m in 0..m_levels {
                    for i in 0..d {
                        let l = sp.lengthscales[[m, i]];
                        g[m * d + i] = -scale
                            * (0..dd)
                                .map(|k| {
                                    let (mu, sd) = (sp.freq_means[[m, i, k]], sp.freq_stds[[m, i, k]]);
                                    -1.0 + l * l * (sd * sd + mu * mu)
                                })
                                .sum::<f64>();
                    }
                }
            }
            let idx = |m: usize, i: usize, k: usize| (m * d + i) * dd + k;
            {
                let g = grad.block_mut(Block::FreqMean);
                for m in 0..m_levels {
                    for i in 0..d {
                        let l2 = sp.lengthscales[[m, i]].powi(2);
                        for k in 0..dd {
                            g[idx(m, i, k)] = g_omega[[m, i, k]] - scale * l2 * sp.freq_means[[m, i, k]];
                        }
                    }
                }
            }
            {
                let g = grad.block_mut(Block::FreqLogStd);
                for m in 0..m_levels {
                    for i in 0..d {
                        let l2 = sp.lengthscales[[m, i]].powi(2);
                        for k in 0..dd {
                            let sd = sp.freq_stds[[m, i, k]];
                            g[idx(m, i, k)] = g_omega[[m, i, k]] * sd * eps[[m, i, k]] - scale * (-1.0 + l2 * sd * sd);
                        }
                    }
                }
            }
            let (da, db) = (dphase_a.unwrap(), dphase_b.unwrap());
            let g = grad.block_mut(Block::PhaseLogShape);
            for m in 0..m_levels {
                for k in 0..dd {
                    let a = sp.phase_shapes[[m, k, 0]];
                    let b = sp.phase_shapes[[m, k, 1]];
                    let t_ab = (a + b - 2.0) * trigamma(a + b);
                    let dkl_a = (a - 1.0) * trigamma(a) - t_ab;
                    let dkl_b = (b - 1.0) * trigamma(b) - t_ab;
                    g[(m * dd + k) * 2] = (g_phase[[m, k]] * da[[m, k]] - scale * dkl_a) * a;
                    g[(m * dd + k) * 2 + 1] = (g_phase[[m, k]] * db[[m, k]] - scale * dkl_b) * b;
                }
            }
        }
    }
    grad.check_finite("gradient")?;
    Ok(Evaluation { terms, gradient: grad })
}
