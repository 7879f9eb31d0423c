//! Random Fourier (decayed) signature features.
//!
//! For each level `m` the per-step RFF activations are turned into
//! increments by channelwise fractional differencing, then combined across
//! levels with shifts, Hadamard products and geometric scans so that every
//! prefix `x_{0:l}` gets its level-`m` feature in a single pass.
//!
//! The activations of each level are anchored at their first time step
//! before differencing, so the increment at the first step is exactly zero
//! and every level vanishes there (the empty-signature base case).

use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3, Axis, Zip};
use rayon::prelude::*;

use crate::arrayops::{
    frac_diff_2d, frac_diff_2d_adjoint, frac_diff_2d_order_grad, geometric_scan_2d, geometric_scan_reverse_2d,
    unshift_2d, DecayVector, FracDiffOrders,
};
use crate::error::{Error, Result};
use crate::randfourier::rff_eval;

/// Level norms below this are treated as zero during normalization.
pub const ZERO_NORM: f64 = 1e-12;

/// Unscaled level arrays `P_1..P_M`, each `[L × D]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLevels {
    levels: Vec<Array2<f64>>,
}

impl FeatureLevels {
    pub fn new(levels: Vec<Array2<f64>>) -> Result<Self> {
        let Some(first) = levels.first() else {
            return Err(Error::arg("at least one signature level is required"));
        };
        let dim = first.dim();
        if levels.iter().any(|l| l.dim() != dim) {
            return Err(Error::arg("all signature levels must share one shape"));
        }
        Ok(Self { levels })
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn len(&self) -> usize {
        self.levels[0].nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn features(&self) -> usize {
        self.levels[0].ncols()
    }

    /// Level `m` (1-based), unscaled.
    pub fn level(&self, m: usize) -> &Array2<f64> {
        &self.levels[m - 1]
    }

    pub fn levels(&self) -> &[Array2<f64>] {
        &self.levels
    }

    /// The `√(2^m / D)` prefactor of level `m`.
    pub fn scale(&self, m: usize) -> f64 {
        (2f64.powi(m as i32) / self.features() as f64).sqrt()
    }

    /// `Φ_m` for every prefix, i.e. level `m` with its prefactor applied.
    pub fn scaled_level(&self, m: usize) -> Array2<f64> {
        self.level(m) * self.scale(m)
    }
}

/// `[L × (MD + 1)]` normalized features: a constant 1 followed by one
/// unit-norm (or all-zero) block per level.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledFeatures {
    pub phi: Array2<f64>,
    pub levels: usize,
    pub features: usize,
}

impl AssembledFeatures {
    pub fn width(&self) -> usize {
        self.phi.ncols()
    }

    pub fn block(&self, t: usize, m: usize) -> ndarray::ArrayView1<'_, f64> {
        let start = 1 + (m - 1) * self.features;
        self.phi.slice(s![t, start..start + self.features])
    }
}

/// RFF activations for all levels, `[M × L × D]`, from `Ω [M × d × D]` and `B [M × D]`.
pub fn rff_activations(x: ArrayView2<f64>, omega: &Array3<f64>, phases: &Array2<f64>) -> Result<Array3<f64>> {
    let (m, d, dd) = omega.dim();
    if phases.dim() != (m, dd) || x.ncols() != d {
        return Err(Error::arg("RFF activation shapes are inconsistent"));
    }
    let mut u = Array3::zeros((m, x.nrows(), dd));
    for lvl in 0..m {
        let b = phases.row(lvl).to_vec();
        u.index_axis_mut(Axis(0), lvl)
            .assign(&rff_eval(x, omega.index_axis(Axis(0), lvl), &b)?);
    }
    Ok(u)
}

fn anchored(u: ArrayView2<f64>) -> Array2<f64> {
    let mut a = u.to_owned();
    if a.nrows() > 0 {
        let first = u.row(0).to_owned();
        for mut row in a.axis_iter_mut(Axis(0)) {
            row -= &first;
        }
    }
    a
}

/// Increments `δ^q (U_m − U_m[0])` for every level, `[M × L × D]`.
pub fn anchored_increments(u: ArrayView3<f64>, orders: &FracDiffOrders) -> Result<Array3<f64>> {
    if u.dim().2 != orders.len() {
        return Err(Error::arg("differencing orders must match the feature dimension D"));
    }
    let w = orders.weights();
    let mut out = Array3::zeros(u.raw_dim());
    for lvl in 0..u.dim().0 {
        let a = anchored(u.index_axis(Axis(0), lvl));
        out.index_axis_mut(Axis(0), lvl).assign(&frac_diff_2d(a.view(), w.view()));
    }
    Ok(out)
}

/// Undecayed features from RFF activations `U [M × L × D]`.
pub fn rfsf(u: ArrayView3<f64>, orders: &FracDiffOrders) -> Result<FeatureLevels> {
    let delta = anchored_increments(u, orders)?;
    signature_levels(delta.view(), None)
}

/// Decayed features from RFF activations `U [M × L × D]`.
pub fn rfdsf(u: ArrayView3<f64>, orders: &FracDiffOrders, lambda: &DecayVector) -> Result<FeatureLevels> {
    let delta = anchored_increments(u, orders)?;
    signature_levels(delta.view(), Some(lambda))
}

/// The level recursion on precomputed increments `[M × L × D]`; `None`
/// means no decay.
pub fn signature_levels(increments: ArrayView3<f64>, lambda: Option<&DecayVector>) -> Result<FeatureLevels> {
    let (m, _, dd) = increments.dim();
    if m == 0 {
        return Err(Error::arg("truncation level M must be >= 1"));
    }
    let lam = decay_or_ones(lambda, dd)?;
    let deltas: Vec<Array2<f64>> = increments.outer_iter().map(|a| a.to_owned()).collect();
    let cache = LevelCache::forward(deltas, lam, false);
    FeatureLevels::new(cache.levels)
}

fn decay_or_ones(lambda: Option<&DecayVector>, dd: usize) -> Result<Vec<f64>> {
    match lambda {
        Some(l) if l.len() != dd => Err(Error::arg("decay vector must match the feature dimension D")),
        Some(l) => Ok(l.as_slice().to_vec()),
        None => Ok(vec![1.0; dd]),
    }
}

/// Memory-lean decayed feature pass straight from inputs: activations,
/// increments and the recursion are produced one level at a time.
pub fn rfdsf_from_inputs(
    x: ArrayView2<f64>,
    omega: &Array3<f64>,
    phases: &Array2<f64>,
    orders: &FracDiffOrders,
    lambda: Option<&DecayVector>,
) -> Result<FeatureLevels> {
    let (m, d, dd) = omega.dim();
    if phases.dim() != (m, dd) || x.ncols() != d || orders.len() != dd {
        return Err(Error::arg("feature pass shapes are inconsistent"));
    }
    let lam = decay_or_ones(lambda, dd)?;
    let w = orders.weights();
    let mut levels: Vec<Array2<f64>> = Vec::with_capacity(m);
    let mut prev_r: Vec<Array2<f64>> = Vec::new();
    for lvl in 0..m {
        let b = phases.row(lvl).to_vec();
        let u = rff_eval(x, omega.index_axis(Axis(0), lvl), &b)?;
        let delta = frac_diff_2d(anchored(u.view()).view(), w.view());
        let (p, r) = level_step(lvl + 1, &delta, levels.last(), &prev_r, &lam);
        levels.push(p);
        prev_r = r;
    }
    FeatureLevels::new(levels)
}

fn pow_vec(lam: &[f64], p: usize) -> Vec<f64> {
    lam.iter().map(|l| l.powi(p as i32)).collect()
}

/// One level of the recursion. Returns `P_m` and the list `R'` of
/// per-repetition terms consumed by the next level.
fn level_step(
    m: usize,
    delta: &Array2<f64>,
    prev_level: Option<&Array2<f64>>,
    prev_r: &[Array2<f64>],
    lam: &[f64],
) -> (Array2<f64>, Vec<Array2<f64>>) {
    if m == 1 {
        let p = geometric_scan_2d(delta.view(), lam);
        return (p, vec![delta.clone()]);
    }
    let prev = prev_level.expect("previous level");
    let c = pow_vec(lam, m - 1);
    let (len, dd) = delta.dim();
    let mut first = Array2::zeros((len, dd));
    if len > 1 {
        Zip::from(first.slice_mut(s![1.., ..]).rows_mut())
            .and(prev.slice(s![..len - 1, ..]).rows())
            .and(delta.slice(s![1.., ..]).rows())
            .par_for_each(|mut out, p, dl| {
                for k in 0..dd {
                    out[k] = c[k] * p[k] * dl[k];
                }
            });
    }
    let mut r = Vec::with_capacity(m);
    let mut sum = first.clone();
    r.push(first);
    for p in 2..=m {
        let inv = 1.0 / p as f64;
        let mut q = Array2::zeros((len, dd));
        Zip::from(&mut q)
            .and(&prev_r[p - 2])
            .and(delta)
            .par_for_each(|q, &rp, &d| *q = inv * rp * d);
        sum += &q;
        r.push(q);
    }
    let p = geometric_scan_2d(sum.view(), &pow_vec(lam, m));
    (p, r)
}

/// Forward pass of the level recursion keeping everything the reverse
/// pass needs.
#[derive(Debug, Clone)]
pub(crate) struct LevelCache {
    pub deltas: Vec<Array2<f64>>,
    pub levels: Vec<Array2<f64>>,
    r_lists: Vec<Vec<Array2<f64>>>,
    lambda: Vec<f64>,
}

impl LevelCache {
    pub fn forward(deltas: Vec<Array2<f64>>, lambda: Vec<f64>, keep: bool) -> Self {
        let mut levels: Vec<Array2<f64>> = Vec::with_capacity(deltas.len());
        let mut r_lists: Vec<Vec<Array2<f64>>> = Vec::new();
        let mut prev_r: Vec<Array2<f64>> = Vec::new();
        for (j, delta) in deltas.iter().enumerate() {
            let (p, r) = level_step(j + 1, delta, levels.last(), &prev_r, &lambda);
            levels.push(p);
            if keep {
                r_lists.push(prev_r);
            }
            prev_r = r;
        }
        Self {
            deltas,
            levels,
            r_lists,
            lambda,
        }
    }

    /// Given `∂/∂P_m` for every level, returns `(∂/∂δ_m, ∂/∂λ)`.
    pub fn backward(&self, mut grad_levels: Vec<Array2<f64>>) -> (Vec<Array2<f64>>, Vec<f64>) {
        let m_total = self.levels.len();
        let lam = &self.lambda;
        let dd = lam.len();
        let mut g_delta: Vec<Array2<f64>> = self.deltas.iter().map(|d| Array2::zeros(d.raw_dim())).collect();
        let mut g_lam = vec![0.0; dd];
        // Gradient flowing into the R list produced at the current level.
        let mut g_r_next: Vec<Array2<f64>> = Vec::new();

        for m in (1..=m_total).rev() {
            let j = m - 1;
            let lam_m = pow_vec(lam, m);
            let g_sum = geometric_scan_reverse_2d(grad_levels[j].view(), &lam_m);
            // λ-sensitivity of the scan: Σ_l ḡ_l P_{l−1}, then chain through λ^m.
            let lag = lagged_dot(&g_sum, &self.levels[j]);
            for k in 0..dd {
                g_lam[k] += m as f64 * lam[k].powi(m as i32 - 1) * lag[k];
            }

            if m == 1 {
                g_delta[0] += &g_sum;
                if let Some(g) = g_r_next.first() {
                    g_delta[0] += g;
                }
                break;
            }

            let g_r: Vec<Array2<f64>> = (0..m)
                .map(|p| match g_r_next.get(p) {
                    Some(g) => &g_sum + g,
                    None => g_sum.clone(),
                })
                .collect();

            let delta = &self.deltas[j];
            let prev = &self.levels[j - 1];
            let shifted = crate::arrayops::shift(prev, 1, 0).expect("shift by one");
            let c = pow_vec(lam, m - 1);
            let mut gd = &shifted * &g_r[0];
            mul_rows(&mut gd, &c);
            let mut gp = delta * &g_r[0];
            mul_rows(&mut gp, &c);
            let gp_unshifted = unshift_2d(gp.view());
            // d(λ^{m−1})/dλ contribution
            let cross = (&shifted * delta) * &g_r[0];
            let cross_sum = cross.sum_axis(Axis(0));
            for k in 0..dd {
                g_lam[k] += (m - 1) as f64 * lam[k].powi(m as i32 - 2) * cross_sum[k];
            }
            grad_levels[j - 1] += &gp_unshifted;

            let prev_r = &self.r_lists[j];
            let mut g_prev_r: Vec<Array2<f64>> = prev_r.iter().map(|a| Array2::zeros(a.raw_dim())).collect();
            for p in 2..=m {
                let inv = 1.0 / p as f64;
                gd.scaled_add(inv, &(&prev_r[p - 2] * &g_r[p - 1]));
                g_prev_r[p - 2].scaled_add(inv, &(delta * &g_r[p - 1]));
            }
            g_delta[j] += &gd;
            g_r_next = g_prev_r;
        }
        (g_delta, g_lam)
    }
}

fn mul_rows(a: &mut Array2<f64>, c: &[f64]) {
    for mut row in a.axis_iter_mut(Axis(0)) {
        for (v, &ck) in row.iter_mut().zip(c) {
            *v *= ck;
        }
    }
}

/// `Σ_l a[l] ⊙ b[l − 1]` per channel.
fn lagged_dot(a: &Array2<f64>, b: &Array2<f64>) -> Vec<f64> {
    let len = a.nrows();
    let dd = a.ncols();
    let mut out = vec![0.0; dd];
    for l in 1..len {
        let ar = a.row(l);
        let br = b.row(l - 1);
        for k in 0..dd {
            out[k] += ar[k] * br[k];
        }
    }
    out
}

/// Full differentiable feature pass from RFF activations to levels.
#[derive(Debug, Clone)]
pub(crate) struct FeaturePass {
    anchored: Vec<Array2<f64>>,
    weights: Array2<f64>,
    weight_derivs: Array2<f64>,
    pub cache: LevelCache,
}

impl FeaturePass {
    pub fn forward(u: &[Array2<f64>], orders: &FracDiffOrders, lambda: Vec<f64>) -> Self {
        let weights = orders.weights();
        let weight_derivs = orders.weight_derivatives();
        let anchored: Vec<Array2<f64>> = u.iter().map(|a| anchored(a.view())).collect();
        let deltas: Vec<Array2<f64>> = anchored
            .par_iter()
            .map(|a| frac_diff_2d(a.view(), weights.view()))
            .collect();
        let cache = LevelCache::forward(deltas, lambda, true);
        Self {
            anchored,
            weights,
            weight_derivs,
            cache,
        }
    }

    pub fn levels(&self) -> &[Array2<f64>] {
        &self.cache.levels
    }

    /// Returns `(∂/∂U_m, ∂/∂q, ∂/∂λ)`.
    pub fn backward(&self, grad_levels: Vec<Array2<f64>>) -> (Vec<Array2<f64>>, Vec<f64>, Vec<f64>) {
        let (g_delta, g_lam) = self.cache.backward(grad_levels);
        let dd = self.weights.ncols();
        let mut g_q = vec![0.0; dd];
        let mut g_u = Vec::with_capacity(g_delta.len());
        for (a, gd) in self.anchored.iter().zip(&g_delta) {
            let gq = frac_diff_2d_order_grad(a.view(), gd.view(), self.weight_derivs.view());
            for k in 0..dd {
                g_q[k] += gq[k];
            }
            let mut ga = frac_diff_2d_adjoint(gd.view(), self.weights.view());
            // adjoint of subtracting the first row
            let total = ga.sum_axis(Axis(0));
            let mut first = ga.row_mut(0);
            first -= &total;
            g_u.push(ga);
        }
        (g_u, g_q, g_lam)
    }
}

/// Normalizes each level block per time step and prepends the constant 1.
pub fn assemble(levels: &FeatureLevels) -> AssembledFeatures {
    let (len, dd) = (levels.len(), levels.features());
    let m = levels.num_levels();
    let mut phi = Array2::zeros((len, m * dd + 1));
    phi.column_mut(0).fill(1.0);
    for lvl in 1..=m {
        let scale = levels.scale(lvl);
        let src = levels.level(lvl);
        let start = 1 + (lvl - 1) * dd;
        Zip::from(phi.slice_mut(s![.., start..start + dd]).rows_mut())
            .and(src.rows())
            .par_for_each(|mut out, p| {
                let norm = scale * p.dot(&p).sqrt();
                if norm >= ZERO_NORM {
                    let f = scale / norm;
                    for (o, &v) in out.iter_mut().zip(p) {
                        *o = v * f;
                    }
                }
            });
    }
    AssembledFeatures {
        phi,
        levels: m,
        features: dd,
    }
}

/// Reverse pass of [`assemble`]: `∂/∂P_m` from `∂/∂φ`.
pub(crate) fn assemble_vjp(levels: &[Array2<f64>], grad_phi: ArrayView2<f64>) -> Vec<Array2<f64>> {
    let dd = levels[0].ncols();
    levels
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let scale = (2f64.powi(j as i32 + 1) / dd as f64).sqrt();
            let start = 1 + j * dd;
            let mut g = Array2::zeros(p.raw_dim());
            Zip::from(g.rows_mut())
                .and(p.rows())
                .and(grad_phi.slice(s![.., start..start + dd]).rows())
                .par_for_each(|mut gout, prow, gphi| {
                    let raw = prow.dot(&prow).sqrt();
                    if scale * raw >= ZERO_NORM {
                        // z = p/‖p‖;  ∂z/∂p · ḡ = (ḡ − z (z·ḡ)) / ‖p‖
                        let zg: f64 = prow.iter().zip(gphi).map(|(a, b)| a * b).sum::<f64>() / raw;
                        for k in 0..prow.len() {
                            gout[k] = (gphi[k] - prow[k] / raw * zg) / raw;
                        }
                    }
                });
            g
        })
        .collect()
}

/// `⟨Φ_m(x), Φ_m(y)⟩` at the final time step of each sequence.
pub fn unnormalized_inner(x: &FeatureLevels, y: &FeatureLevels, m: usize) -> Result<f64> {
    if m == 0 || m > x.num_levels() || m > y.num_levels() {
        return Err(Error::arg(format!("level {m} out of range")));
    }
    if x.features() != y.features() {
        return Err(Error::arg("feature dimensions differ"));
    }
    if x.is_empty() || y.is_empty() {
        return Err(Error::arg("empty feature sequence"));
    }
    let px = x.level(m).row(x.len() - 1);
    let py = y.level(m).row(y.len() - 1);
    Ok(x.scale(m) * y.scale(m) * px.dot(&py))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randfourier::{reparam_frequencies, reparam_phases, RandomBasis, SpectralMode, SpectralParams};
    use ndarray::Array3;

    fn small_u(m: usize, x: &Array2<f64>, dd: usize, seed: u64) -> Array3<f64> {
        let basis = RandomBasis::sample(m, x.ncols(), dd, seed).unwrap();
        let params = SpectralParams::initialize(&basis, &vec![1.0; x.ncols()]).unwrap();
        let om = reparam_frequencies(&basis, &params, SpectralMode::Prior).unwrap();
        let b = reparam_phases(&basis, &params, SpectralMode::Prior).unwrap();
        rff_activations(x.view(), &om, &b).unwrap()
    }

    fn walk(len: usize, d: usize) -> Array2<f64> {
        Array2::from_shape_fn((len, d), |(l, i)| ((l * 7 + i * 3) % 5) as f64 * 0.4 - 0.8 + 0.1 * l as f64)
    }

    #[test]
    fn constant_sequence_gives_zero_levels() {
        let x = Array2::from_elem((6, 2), 0.7);
        let u = small_u(3, &x, 4, 1);
        let q = FracDiffOrders::uniform(1.0, 4, 4).unwrap();
        let lv = rfsf(u.view(), &q).unwrap();
        assert!(lv.levels().iter().all(|p| p.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn unit_decay_matches_undecayed_bitwise() {
        let x = walk(9, 2);
        let u = small_u(3, &x, 5, 2);
        let q = FracDiffOrders::uniform(0.4, 5, 4).unwrap();
        let a = rfsf(u.view(), &q).unwrap();
        let b = rfdsf(u.view(), &q, &DecayVector::ones(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn streaming_pass_matches_batched() {
        let x = walk(11, 3);
        let basis = RandomBasis::sample(3, 3, 4, 9).unwrap();
        let params = SpectralParams::initialize(&basis, &[1.0, 0.5, 2.0]).unwrap();
        let om = reparam_frequencies(&basis, &params, SpectralMode::Variational).unwrap();
        let b = reparam_phases(&basis, &params, SpectralMode::Variational).unwrap();
        let u = rff_activations(x.view(), &om, &b).unwrap();
        let q = FracDiffOrders::uniform(0.6, 4, 5).unwrap();
        let lam = DecayVector::new(vec![0.9, 0.5, 0.99, 1.0]).unwrap();
        let batched = rfdsf(u.view(), &q, &lam).unwrap();
        let streamed = rfdsf_from_inputs(x.view(), &om, &b, &q, Some(&lam)).unwrap();
        assert_eq!(batched, streamed);
    }

    #[test]
    fn duplicated_point_leaves_final_row_unchanged() {
        let x = walk(7, 2);
        let mut dup = Array2::zeros((8, 2));
        dup.slice_mut(s![..4, ..]).assign(&x.slice(s![..4, ..]));
        dup.slice_mut(s![4.., ..]).assign(&x.slice(s![3.., ..]));
        let q = FracDiffOrders::uniform(1.0, 3, 2).unwrap();
        let a = rfsf(small_u(3, &x, 3, 4).view(), &q).unwrap();
        let b = rfsf(small_u(3, &dup, 3, 4).view(), &q).unwrap();
        for m in 1..=3 {
            let ra = a.level(m).row(6);
            let rb = b.level(m).row(7);
            for (u, v) in ra.iter().zip(rb) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn vanishing_decay_keeps_last_increment_only() {
        let x = walk(6, 1);
        let u = small_u(1, &x, 3, 5);
        let q = FracDiffOrders::uniform(1.0, 3, 2).unwrap();
        let lv = rfdsf(u.view(), &q, &DecayVector::new(vec![1e-300; 3]).unwrap()).unwrap();
        let scaled = lv.scaled_level(1);
        let scale = (2.0f64 / 3.0).sqrt();
        for k in 0..3 {
            let last = scale * (u[[0, 5, k]] - u[[0, 4, k]]);
            assert!((scaled[[5, k]] - last).abs() < 1e-14);
        }
    }

    #[test]
    fn assemble_normalizes_blocks() {
        let x = walk(8, 2);
        let u = small_u(3, &x, 4, 6);
        let q = FracDiffOrders::uniform(0.5, 4, 3).unwrap();
        let lv = rfsf(u.view(), &q).unwrap();
        let feats = assemble(&lv);
        assert_eq!(feats.width(), 3 * 4 + 1);
        assert_eq!(feats.phi.row(0).to_vec(), {
            let mut v = vec![0.0; 13];
            v[0] = 1.0;
            v
        });
        for t in 1..8 {
            assert_eq!(feats.phi[[t, 0]], 1.0);
            for m in 1..=3 {
                let b = feats.block(t, m);
                let n = b.dot(&b).sqrt();
                assert!(n == 0.0 || (n - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn causal_prefix_rows() {
        let x = walk(10, 2);
        let mut y = x.clone();
        y.slice_mut(s![6.., ..]).mapv_inplace(|v| v * 3.0 - 1.0);
        let q = FracDiffOrders::uniform(0.3, 4, 8).unwrap();
        let lam = DecayVector::new(vec![0.8; 4]).unwrap();
        let a = rfdsf(small_u(3, &x, 4, 8).view(), &q, &lam).unwrap();
        let b = rfdsf(small_u(3, &y, 4, 8).view(), &q, &lam).unwrap();
        for m in 1..=3 {
            assert_eq!(a.level(m).slice(s![..6, ..]), b.level(m).slice(s![..6, ..]));
        }
    }

    #[test]
    fn inner_of_constant_sequences_is_zero() {
        let x = Array2::from_elem((4, 2), 1.5);
        let q = FracDiffOrders::uniform(1.0, 3, 2).unwrap();
        let lv = rfsf(small_u(2, &x, 3, 3).view(), &q).unwrap();
        for m in 1..=2 {
            assert_eq!(unnormalized_inner(&lv, &lv, m).unwrap(), 0.0);
        }
        assert!(unnormalized_inner(&lv, &lv, 3).is_err());
    }
}
