//! Dense array kernels: slice sums, cumulative and geometric scans,
//! channelwise fractional differencing, shifts and Hadamard products.
//!
//! Out-of-bounds reads are zero (no circular wrap). Channel-aware kernels
//! treat the last axis as the channel axis and scan along a separate time
//! axis. The hot paths work on time-major `[L × D]` slabs so the scan axis
//! is the slow axis and channel updates are contiguous.

use log::warn;
use ndarray::{Array, Array2, ArrayBase, ArrayView2, ArrayViewMut2, Axis, Data, Dimension, IxDyn, RemoveAxis, Zip};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Rows per block in the blocked parallel scan. Fixed so results do not
/// depend on the number of worker threads.
pub const SCAN_BLOCK: usize = 512;

/// Rows per parallel chunk for the convolution-style kernels.
const ROW_CHUNK: usize = 256;

pub fn ensure_finite<S, D>(a: &ArrayBase<S, D>, what: &str) -> Result<()>
where
    S: Data<Elem = f64>,
    D: Dimension,
{
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::arg(format!("{what} contains non-finite entries")))
    }
}

/// Channelwise decay factors, each in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayVector(Vec<f64>);

impl DecayVector {
    pub fn new(lambda: Vec<f64>) -> Result<Self> {
        if lambda.is_empty() {
            return Err(Error::arg("decay vector is empty"));
        }
        if let Some(bad) = lambda.iter().find(|&&l| !(l > 0.0 && l <= 1.0)) {
            return Err(Error::arg(format!("decay factor {bad} outside (0, 1]")));
        }
        Ok(Self(lambda))
    }

    pub fn ones(channels: usize) -> Self {
        Self(vec![1.0; channels])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Elementwise power `λ^{⊙p}`.
    pub fn powi(&self, p: i32) -> Self {
        Self(self.0.iter().map(|l| l.powi(p)).collect())
    }
}

/// Fractional differencing orders (one per channel) with a finite window.
#[derive(Debug, Clone, PartialEq)]
pub struct FracDiffOrders {
    q: Vec<f64>,
    window: usize,
}

impl FracDiffOrders {
    /// Orders outside `(0, 1)` are accepted with a warning: `q = 0` and
    /// `q = 1` are the identity and first-difference filters.
    pub fn new(q: Vec<f64>, window: usize) -> Result<Self> {
        if window < 1 {
            return Err(Error::arg("fractional differencing window must be >= 1"));
        }
        if q.is_empty() {
            return Err(Error::arg("fractional differencing orders are empty"));
        }
        if let Some(bad) = q.iter().find(|v| !v.is_finite()) {
            return Err(Error::arg(format!("non-finite differencing order {bad}")));
        }
        if q.iter().any(|&v| v <= 0.0 || v >= 1.0) {
            warn!("fractional differencing order outside (0, 1); weights remain defined");
        }
        Ok(Self { q, window })
    }

    pub fn uniform(q: f64, channels: usize, window: usize) -> Result<Self> {
        Self::new(vec![q; channels], window)
    }

    pub fn orders(&self) -> &[f64] {
        &self.q
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Filter weights `w_κ = (−1)^κ binom(q, κ)` laid out `[W × D]`.
    pub fn weights(&self) -> Array2<f64> {
        let mut w = Array2::zeros((self.window, self.q.len()));
        for (k, &q) in self.q.iter().enumerate() {
            for (kappa, v) in frac_diff_weights(q, self.window).into_iter().enumerate() {
                w[[kappa, k]] = v;
            }
        }
        w
    }

    /// `∂w_κ/∂q` laid out `[W × D]`.
    pub fn weight_derivatives(&self) -> Array2<f64> {
        let mut dw = Array2::zeros((self.window, self.q.len()));
        for (k, &q) in self.q.iter().enumerate() {
            for (kappa, v) in frac_diff_weight_derivatives(q, self.window).into_iter().enumerate() {
                dw[[kappa, k]] = v;
            }
        }
        dw
    }
}

/// `w_κ = (−1)^κ binom(q, κ)` for `κ = 0..window`.
///
/// Uses the ratio `w_κ = w_{κ−1} (κ − 1 − q) / κ`, which is exact at the
/// poles of the Γ-ratio form (integer `q`) and bounded by 1 for `q ∈ [0, 1]`.
pub fn frac_diff_weights(q: f64, window: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(window);
    if window == 0 {
        return w;
    }
    w.push(1.0);
    for kappa in 1..window {
        let k = kappa as f64;
        let prev = w[kappa - 1];
        w.push(prev * (k - 1.0 - q) / k);
    }
    w
}

pub fn frac_diff_weight_derivatives(q: f64, window: usize) -> Vec<f64> {
    let w = frac_diff_weights(q, window);
    let mut dw = vec![0.0; window];
    for kappa in 1..window {
        let k = kappa as f64;
        dw[kappa] = (dw[kappa - 1] * (k - 1.0 - q) - w[kappa - 1]) / k;
    }
    dw
}

fn check_axis(ndim: usize, axis: usize) -> Result<()> {
    if axis >= ndim {
        Err(Error::arg(format!("axis {axis} invalid for array of rank {ndim}")))
    } else {
        Ok(())
    }
}

/// Slice-wise sum along `axis`; the output has rank one less.
pub fn slice_sum<S, D>(a: &ArrayBase<S, D>, axis: usize) -> Result<Array<f64, D::Smaller>>
where
    S: Data<Elem = f64>,
    D: Dimension + RemoveAxis,
{
    check_axis(a.ndim(), axis)?;
    Ok(a.sum_axis(Axis(axis)))
}

/// Cumulative sum along `axis`. Runs through the same blocked scan as
/// [`geometric_scan`] with unit decay, so the two agree bit-for-bit.
pub fn cumsum<S, D>(a: &ArrayBase<S, D>, axis: usize) -> Result<Array<f64, D>>
where
    S: Data<Elem = f64>,
    D: Dimension,
{
    check_axis(a.ndim(), axis)?;
    let last = a.ndim() - 1;
    if axis == last {
        // The scan axis is the channel axis: treat every lane as one channel.
        let mut out = a.to_owned();
        for mut lane in out.lanes_mut(Axis(axis)) {
            let mut buf: Vec<f64> = lane.iter().copied().collect();
            let n = buf.len();
            let view = ArrayViewMut2::from_shape((n, 1), &mut buf).expect("lane shape");
            scan_in_place(view, &[1.0]);
            for (dst, src) in lane.iter_mut().zip(buf) {
                *dst = src;
            }
        }
        return Ok(out);
    }
    let channels = a.shape()[last];
    with_time_channel_slabs(a, axis, |slab| scan_in_place(slab, &vec![1.0; channels]))
}

/// Channelwise geometric scan along the time `axis`:
/// `out[l, k] = Σ_{κ ≤ l} λ_k^{l−κ} A[κ, k]`. Channels are the last axis.
pub fn geometric_scan<S, D>(a: &ArrayBase<S, D>, lambda: &DecayVector, axis: usize) -> Result<Array<f64, D>>
where
    S: Data<Elem = f64>,
    D: Dimension,
{
    check_channel_kernel(a.shape(), axis, lambda.len())?;
    with_time_channel_slabs(a, axis, |slab| scan_in_place(slab, lambda.as_slice()))
}

/// Channelwise fractional difference along the time `axis`:
/// `out[l, k] = Σ_{κ < W} (−1)^κ binom(q_k, κ) A[l − κ, k]`, zero-padded.
pub fn frac_diff<S, D>(a: &ArrayBase<S, D>, orders: &FracDiffOrders, axis: usize) -> Result<Array<f64, D>>
where
    S: Data<Elem = f64>,
    D: Dimension,
{
    check_channel_kernel(a.shape(), axis, orders.len())?;
    let weights = orders.weights();
    with_time_channel_slabs(a, axis, |mut slab| {
        let out = frac_diff_2d(slab.view(), weights.view());
        slab.assign(&out);
    })
}

/// Shift along `axis` by `+m`: `out[i] = A[i − m]`, vacated entries zero.
pub fn shift<S, D>(a: &ArrayBase<S, D>, m: usize, axis: usize) -> Result<Array<f64, D>>
where
    S: Data<Elem = f64>,
    D: Dimension,
{
    check_axis(a.ndim(), axis)?;
    if m < 1 {
        return Err(Error::arg("shift amount must be >= 1"));
    }
    let mut out = Array::zeros(a.raw_dim());
    let n = a.shape()[axis];
    if m < n {
        out.slice_axis_mut(Axis(axis), (m..n).into())
            .assign(&a.slice_axis(Axis(axis), (0..n - m).into()));
    }
    Ok(out)
}

pub fn hadamard<S1, S2, D>(a: &ArrayBase<S1, D>, b: &ArrayBase<S2, D>) -> Result<Array<f64, D>>
where
    S1: Data<Elem = f64>,
    S2: Data<Elem = f64>,
    D: Dimension,
{
    if a.shape() != b.shape() {
        return Err(Error::arg(format!(
            "Hadamard shape mismatch: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(a * b)
}

fn check_channel_kernel(shape: &[usize], axis: usize, channels: usize) -> Result<()> {
    let ndim = shape.len();
    if ndim < 2 {
        return Err(Error::arg("channelwise kernels need a time axis and a channel axis"));
    }
    check_axis(ndim, axis)?;
    if axis == ndim - 1 {
        return Err(Error::arg("the time axis cannot be the channel (last) axis"));
    }
    if shape[ndim - 1] != channels {
        return Err(Error::arg(format!(
            "channel length {} does not match parameter length {channels}",
            shape[ndim - 1]
        )));
    }
    Ok(())
}

/// Moves `axis` next to the channel axis, runs `f` on every `[L × D]` slab
/// and restores the original layout.
fn with_time_channel_slabs<S, D, F>(a: &ArrayBase<S, D>, axis: usize, f: F) -> Result<Array<f64, D>>
where
    S: Data<Elem = f64>,
    D: Dimension,
    F: Fn(ArrayViewMut2<f64>) + Sync,
{
    let ndim = a.ndim();
    let last = ndim - 1;
    let mut perm: Vec<usize> = (0..ndim).filter(|&i| i != axis && i != last).collect();
    perm.push(axis);
    perm.push(last);
    let permuted = a.view().into_dyn().permuted_axes(IxDyn(&perm));
    let pshape = permuted.shape().to_vec();
    let (len, ch) = (pshape[ndim - 2], pshape[ndim - 1]);
    let mut flat: Vec<f64> = permuted.iter().copied().collect();
    if len * ch > 0 {
        flat.par_chunks_mut(len * ch).for_each(|chunk| {
            f(ArrayViewMut2::from_shape((len, ch), chunk).expect("slab shape"));
        });
    }
    let restored = Array::from_shape_vec(IxDyn(&pshape), flat).expect("permuted shape");
    let mut inverse = vec![0; ndim];
    for (i, &p) in perm.iter().enumerate() {
        inverse[p] = i;
    }
    let out = restored.permuted_axes(IxDyn(&inverse));
    let out = out.as_standard_layout().into_owned();
    Ok(out.into_dimensionality::<D>().expect("rank preserved"))
}

/// Sequential reference: `y_l = λ ⊙ y_{l−1} + u_l` row by row.
pub fn geometric_scan_sequential(a: ArrayView2<f64>, lambda: &[f64]) -> Array2<f64> {
    let mut out = a.to_owned();
    scan_rows(out.view_mut(), lambda, None);
    out
}

/// Blocked parallel scan over a time-major `[L × D]` array.
pub fn geometric_scan_2d(a: ArrayView2<f64>, lambda: &[f64]) -> Array2<f64> {
    let mut out = a.as_standard_layout().into_owned();
    scan_in_place(out.view_mut(), lambda);
    out
}

fn scan_rows(mut a: ArrayViewMut2<f64>, lambda: &[f64], carry: Option<&[f64]>) {
    let len = a.nrows();
    if len == 0 {
        return;
    }
    if let Some(c) = carry {
        let mut row = a.row_mut(0);
        for ((y, &l), &c) in row.iter_mut().zip(lambda).zip(c) {
            *y += l * c;
        }
    }
    for t in 1..len {
        let (prev, mut cur) = a.multi_slice_mut((ndarray::s![t - 1, ..], ndarray::s![t, ..]));
        Zip::from(&mut cur).and(&prev).and(lambda).for_each(|y, &p, &l| *y += l * p);
    }
}

/// The three-phase work-efficient scan: independent local scans per block,
/// a sequential carry pass over block totals, then a parallel fix-up that
/// adds `λ^{r+1} ⊙ carry` to row `r` of each block. This realizes the
/// associative combine `(a₁, b₁) ∘ (a₂, b₂) = (a₁a₂, a₂b₁ + b₂)` at block
/// granularity.
pub(crate) fn scan_in_place(mut a: ArrayViewMut2<f64>, lambda: &[f64]) {
    let (len, ch) = a.dim();
    debug_assert_eq!(ch, lambda.len());
    if len <= SCAN_BLOCK || ch == 0 {
        scan_rows(a, lambda, None);
        return;
    }
    let slice = a.as_slice_mut().expect("time-major slab is contiguous");
    let block_elems = SCAN_BLOCK * ch;

    slice.par_chunks_mut(block_elems).for_each(|block| {
        let rows = block.len() / ch;
        scan_rows(ArrayViewMut2::from_shape((rows, ch), block).unwrap(), lambda, None);
    });

    let n_blocks = len.div_ceil(SCAN_BLOCK);
    let mut carries = vec![vec![0.0; ch]; n_blocks];
    let mut carry = vec![0.0; ch];
    for b in 0..n_blocks {
        carries[b].copy_from_slice(&carry);
        let rows = (len - b * SCAN_BLOCK).min(SCAN_BLOCK);
        let last = &slice[(b * SCAN_BLOCK + rows - 1) * ch..(b * SCAN_BLOCK + rows) * ch];
        for k in 0..ch {
            carry[k] = lambda[k].powi(rows as i32) * carry[k] + last[k];
        }
    }

    slice
        .par_chunks_mut(block_elems)
        .zip(carries.par_iter())
        .skip(1)
        .for_each(|(block, carry)| {
            let mut pw = lambda.to_vec();
            for row in block.chunks_mut(ch) {
                for k in 0..ch {
                    row[k] += pw[k] * carry[k];
                    pw[k] *= lambda[k];
                }
            }
        });
}

/// Reverse-time geometric scan: `g_l = ḡ_l + λ ⊙ g_{l+1}`. This is the
/// adjoint of [`geometric_scan_2d`] with respect to its input.
pub fn geometric_scan_reverse_2d(a: ArrayView2<f64>, lambda: &[f64]) -> Array2<f64> {
    let mut rev = a.slice(ndarray::s![..;-1, ..]).as_standard_layout().into_owned();
    scan_in_place(rev.view_mut(), lambda);
    rev.slice(ndarray::s![..;-1, ..]).as_standard_layout().into_owned()
}

/// Fractional difference of a time-major `[L × D]` array with `[W × D]` weights.
pub fn frac_diff_2d(a: ArrayView2<f64>, weights: ArrayView2<f64>) -> Array2<f64> {
    let (len, ch) = a.dim();
    let window = weights.nrows();
    let mut out = Array2::zeros((len, ch));
    if len == 0 || ch == 0 {
        return out;
    }
    let a = a.as_standard_layout();
    let src = a.as_slice().unwrap();
    let w = weights.as_standard_layout();
    let wsl = w.as_slice().unwrap();
    out.as_slice_mut()
        .unwrap()
        .par_chunks_mut(ROW_CHUNK * ch)
        .enumerate()
        .for_each(|(c, chunk)| {
            let base = c * ROW_CHUNK;
            for (r, row) in chunk.chunks_mut(ch).enumerate() {
                let l = base + r;
                for kappa in 0..window.min(l + 1) {
                    let srow = &src[(l - kappa) * ch..(l - kappa + 1) * ch];
                    let wrow = &wsl[kappa * ch..(kappa + 1) * ch];
                    for k in 0..ch {
                        row[k] += wrow[k] * srow[k];
                    }
                }
            }
        });
    out
}

/// Adjoint of [`frac_diff_2d`] with respect to its input:
/// `g[j, k] = Σ_κ w[κ, k] ḡ[j + κ, k]`.
pub fn frac_diff_2d_adjoint(grad_out: ArrayView2<f64>, weights: ArrayView2<f64>) -> Array2<f64> {
    let (len, ch) = grad_out.dim();
    let window = weights.nrows();
    let mut out = Array2::zeros((len, ch));
    if len == 0 || ch == 0 {
        return out;
    }
    let g = grad_out.as_standard_layout();
    let src = g.as_slice().unwrap();
    let w = weights.as_standard_layout();
    let wsl = w.as_slice().unwrap();
    out.as_slice_mut()
        .unwrap()
        .par_chunks_mut(ROW_CHUNK * ch)
        .enumerate()
        .for_each(|(c, chunk)| {
            let base = c * ROW_CHUNK;
            for (r, row) in chunk.chunks_mut(ch).enumerate() {
                let j = base + r;
                for kappa in 0..window.min(len - j) {
                    let srow = &src[(j + kappa) * ch..(j + kappa + 1) * ch];
                    let wrow = &wsl[kappa * ch..(kappa + 1) * ch];
                    for k in 0..ch {
                        row[k] += wrow[k] * srow[k];
                    }
                }
            }
        });
    out
}

/// Gradient of `Σ ḡ ⊙ frac_diff(a)` with respect to the orders, given `∂w/∂q`.
pub fn frac_diff_2d_order_grad(
    a: ArrayView2<f64>,
    grad_out: ArrayView2<f64>,
    weight_derivs: ArrayView2<f64>,
) -> Vec<f64> {
    let (len, ch) = a.dim();
    let window = weight_derivs.nrows();
    let mut g = vec![0.0; ch];
    for kappa in 0..window.min(len) {
        let mut acc = vec![0.0; ch];
        for l in kappa..len {
            let src = a.row(l - kappa);
            let go = grad_out.row(l);
            for k in 0..ch {
                acc[k] += go[k] * src[k];
            }
        }
        for k in 0..ch {
            g[k] += weight_derivs[[kappa, k]] * acc[k];
        }
    }
    g
}

/// Shift a `[L × D]` array back in time by one step (adjoint of `shift(·, 1)`).
pub fn unshift_2d(a: ArrayView2<f64>) -> Array2<f64> {
    let len = a.nrows();
    let mut out = Array2::zeros(a.raw_dim());
    if len > 1 {
        out.slice_mut(ndarray::s![..len - 1, ..])
            .assign(&a.slice(ndarray::s![1.., ..]));
    }
    out
}
