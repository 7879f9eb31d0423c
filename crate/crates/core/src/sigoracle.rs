//! Brute-force signature references for tests.
//!
//! Everything here enumerates multi-indices directly and is guarded by
//! size limits; none of it is used on the forecasting path.

use ndarray::{Array2, ArrayView2, ArrayView3};

use crate::error::{Error, Result};
use crate::sigfeatures::FeatureLevels;

/// Largest tensor level size `d^M` accepted by [`exact_signature`].
pub const MAX_TENSOR_ENTRIES: usize = 1_000_000;
/// Largest `|Δ_m(K)| · |Δ_m(L)|` accepted by [`exact_sig_kernel`].
pub const MAX_KERNEL_TERMS: usize = 10_000_000;
pub const MAX_DIRECT_LEN: usize = 12;
pub const MAX_DIRECT_LEVELS: usize = 4;

/// Signature levels `S_0 = 1, S_1, …, S_M`; level `m` is a flat `d^m` tensor
/// in row-major multi-index order.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureTensors {
    pub dim: usize,
    pub levels: Vec<Vec<f64>>,
}

impl SignatureTensors {
    fn zeros(dim: usize, depth: usize) -> Self {
        let levels = (0..=depth)
            .map(|m| if m == 0 { vec![1.0] } else { vec![0.0; dim.pow(m as u32)] })
            .collect();
        Self { dim, levels }
    }

    pub fn level(&self, m: usize) -> &[f64] {
        &self.levels[m]
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }
}

fn increments(x: ArrayView2<f64>) -> Vec<Vec<f64>> {
    (1..x.nrows())
        .map(|l| x.row(l).iter().zip(x.row(l - 1)).map(|(a, b)| a - b).collect())
        .collect()
}

fn tensor(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        for &y in b {
            out.push(x * y);
        }
    }
    out
}

fn check_tensor_size(d: usize, depth: usize) -> Result<()> {
    match d.checked_pow(depth as u32) {
        Some(n) if n <= MAX_TENSOR_ENTRIES => Ok(()),
        _ => Err(Error::Resource(format!("d^M = {d}^{depth} exceeds {MAX_TENSOR_ENTRIES}"))),
    }
}

/// Signature of the piecewise-linear path through the rows of `x` via the
/// one-step extension `S_m ← S_m + Σ_p S_{m−p} ⊗ δx^{⊗p} / p!`.
pub fn exact_signature(x: ArrayView2<f64>, depth: usize) -> Result<SignatureTensors> {
    if x.nrows() == 0 || depth == 0 {
        return Err(Error::arg("need at least one point and depth >= 1"));
    }
    let d = x.ncols();
    check_tensor_size(d, depth)?;
    let mut sig = SignatureTensors::zeros(d, depth);
    for dx in increments(x) {
        // powers[p] = δx^{⊗p} / p!
        let mut powers = vec![vec![1.0]];
        for p in 1..=depth {
            let next: Vec<f64> = tensor(&powers[p - 1], &dx).into_iter().map(|v| v / p as f64).collect();
            powers.push(next);
        }
        let old = sig.clone();
        for m in 1..=depth {
            for p in 1..=m {
                let term = tensor(&old.levels[m - p], &powers[p]);
                for (s, t) in sig.levels[m].iter_mut().zip(term) {
                    *s += t;
                }
            }
        }
    }
    Ok(sig)
}

/// All non-decreasing `m`-tuples over `lo..=hi`.
fn nondecreasing_tuples(m: usize, lo: usize, hi: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if m == 0 {
        out.push(Vec::new());
        return out;
    }
    if lo > hi {
        return out;
    }
    let mut cur = vec![lo; m];
    loop {
        out.push(cur.clone());
        let mut pos = m;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            if cur[pos] < hi {
                cur[pos] += 1;
                let v = cur[pos];
                for c in cur.iter_mut().skip(pos + 1) {
                    *c = v;
                }
                break;
            }
        }
    }
}

/// `i!`: the product over distinct indices of (multiplicity)!.
pub fn repetition_factorial(idx: &[usize]) -> f64 {
    let mut counts: std::collections::BTreeMap<usize, u32> = std::collections::BTreeMap::new();
    for &i in idx {
        *counts.entry(i).or_default() += 1;
    }
    counts
        .values()
        .map(|&c| (1..=c).map(f64::from).product::<f64>())
        .product()
}

/// `S_m` by direct summation over `Δ_m` with `1/i!` weights.
pub fn signature_by_enumeration(x: ArrayView2<f64>, depth: usize) -> Result<SignatureTensors> {
    if x.nrows() == 0 || depth == 0 {
        return Err(Error::arg("need at least one point and depth >= 1"));
    }
    let d = x.ncols();
    check_tensor_size(d, depth)?;
    let dx = increments(x);
    let mut sig = SignatureTensors::zeros(d, depth);
    if dx.is_empty() {
        return Ok(sig);
    }
    for m in 1..=depth {
        for idx in nondecreasing_tuples(m, 0, dx.len() - 1) {
            let w = 1.0 / repetition_factorial(&idx);
            let mut t = vec![w];
            for &i in &idx {
                t = tensor(&t, &dx[i]);
            }
            for (s, v) in sig.levels[m].iter_mut().zip(t) {
                *s += v;
            }
        }
    }
    Ok(sig)
}

/// Static kernel lifted into the signature kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseKernel {
    Linear,
    /// `exp(−Σ_i (x_i − y_i)² / (2 ℓ_i²))`
    Gaussian { lengthscales: Vec<f64> },
}

impl BaseKernel {
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            BaseKernel::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
            BaseKernel::Gaussian { lengthscales } => {
                let q: f64 = x
                    .iter()
                    .zip(y)
                    .zip(lengthscales)
                    .map(|((a, b), l)| ((a - b) / l).powi(2))
                    .sum();
                (-0.5 * q).exp()
            }
        }
    }
}

/// Per-level signature kernel values `k_{S_0}, …, k_{S_M}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SigKernelValue {
    pub per_level: Vec<f64>,
}

impl SigKernelValue {
    pub fn level(&self, m: usize) -> f64 {
        self.per_level[m]
    }

    pub fn total(&self) -> f64 {
        self.per_level.iter().sum()
    }
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Truncated discrete signature kernel by enumeration over pairs of
/// multi-indices with the second-order differenced base kernel.
pub fn exact_sig_kernel(x: ArrayView2<f64>, y: ArrayView2<f64>, depth: usize, base: &BaseKernel) -> Result<SigKernelValue> {
    if x.ncols() != y.ncols() {
        return Err(Error::arg("sequences must share the state dimension"));
    }
    let (k_len, l_len) = (x.nrows().saturating_sub(1), y.nrows().saturating_sub(1));
    let mut per_level = vec![1.0];
    if depth == 0 {
        return Ok(SigKernelValue { per_level });
    }
    for m in 1..=depth {
        let terms = binom(k_len + m - 1, m) * binom(l_len + m - 1, m);
        if terms > MAX_KERNEL_TERMS as f64 {
            return Err(Error::Resource(format!("{terms} kernel terms exceed {MAX_KERNEL_TERMS}")));
        }
    }
    // gram[i][j] = k(x_i, y_j)
    let gram: Vec<Vec<f64>> = x
        .rows()
        .into_iter()
        .map(|xr| {
            let xr = xr.to_vec();
            y.rows().into_iter().map(|yr| base.eval(&xr, &yr.to_vec())).collect()
        })
        .collect();
    // δk at increment indices (i, j) ≥ (1, 1)
    let dk = |i: usize, j: usize| gram[i][j] - gram[i - 1][j] - gram[i][j - 1] + gram[i - 1][j - 1];
    for m in 1..=depth {
        if k_len == 0 || l_len == 0 {
            per_level.push(0.0);
            continue;
        }
        let is = nondecreasing_tuples(m, 1, k_len);
        let js = nondecreasing_tuples(m, 1, l_len);
        let mut total = 0.0;
        for i in &is {
            let wi = 1.0 / repetition_factorial(i);
            for j in &js {
                let wj = 1.0 / repetition_factorial(j);
                let prod: f64 = i.iter().zip(j).map(|(&a, &b)| dk(a, b)).product();
                total += wi * wj * prod;
            }
        }
        per_level.push(total);
    }
    Ok(SigKernelValue { per_level })
}

/// Unscaled feature levels by direct enumeration over `Δ_m(l)` for every
/// prefix `l`, with optional channelwise decay `λ^{l − i_p}`. Level `m`
/// uses increment arrays `1..=m` in order.
pub fn direct_rfsf(increments: ArrayView3<f64>, depth: usize, lambda: Option<&[f64]>) -> Result<FeatureLevels> {
    let (m_avail, len, dd) = increments.dim();
    if depth == 0 || depth > m_avail {
        return Err(Error::arg("depth must be within the available increment levels"));
    }
    if len > MAX_DIRECT_LEN || depth > MAX_DIRECT_LEVELS {
        return Err(Error::Resource(format!(
            "direct enumeration limited to L <= {MAX_DIRECT_LEN}, M <= {MAX_DIRECT_LEVELS}"
        )));
    }
    if let Some(l) = lambda {
        if l.len() != dd {
            return Err(Error::arg("decay length must match D"));
        }
    }
    let mut levels = Vec::with_capacity(depth);
    for m in 1..=depth {
        let mut out = Array2::zeros((len, dd));
        for t in 0..len {
            for idx in nondecreasing_tuples(m, 0, t) {
                let w = 1.0 / repetition_factorial(&idx);
                for k in 0..dd {
                    let mut prod = w;
                    for (p, &i) in idx.iter().enumerate() {
                        prod *= increments[[p, i, k]];
                        if let Some(lam) = lambda {
                            prod *= lam[k].powi((t - i) as i32);
                        }
                    }
                    out[[t, k]] += prod;
                }
            }
        }
        levels.push(out);
    }
    FeatureLevels::new(levels)
}

/// First differences of `cos(Ωᵀx + b)` computed directly from the inputs,
/// `[M × L × D]`, with a zero increment at the first step.
pub fn cosine_increments(x: ArrayView2<f64>, omega: ArrayView3<f64>, phases: ArrayView2<f64>) -> ndarray::Array3<f64> {
    let (m, d, dd) = omega.dim();
    let len = x.nrows();
    let feat = |lvl: usize, t: usize, k: usize| -> f64 {
        let mut a = phases[[lvl, k]];
        for i in 0..d {
            a += omega[[lvl, i, k]] * x[[t, i]];
        }
        a.cos()
    };
    ndarray::Array3::from_shape_fn((m, len, dd), |(lvl, t, k)| {
        if t == 0 {
            0.0
        } else {
            feat(lvl, t, k) - feat(lvl, t - 1, k)
        }
    })
}
