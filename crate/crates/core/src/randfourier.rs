//! Frozen random Fourier bases.
//!
//! All randomness is drawn once, at construction, from a seeded ChaCha
//! stream. Frequencies and phases are deterministic, differentiable
//! functions of those frozen outcomes and the distributional parameters:
//! Gaussian frequencies by location-scale, Beta phases through two
//! reparameterized Gamma variates with shape augmentation.

use std::f64::consts::PI;

use ndarray::{Array2, Array3, Array4, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Shape augmentation used by the Gamma reparameterization.
pub const SHAPE_AUGMENTATION: usize = 10;

const TWO_PI: f64 = 2.0 * PI;

/// Which distribution the frequencies and phases are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralMode {
    /// `ω = ε / ℓ`, `b = 2π u`: the prior, with learnable lengthscales.
    Prior,
    /// `ω = μ + σ ε`, `b ~ 2π · Beta(a, b)`.
    Variational,
}

impl SpectralMode {
    pub fn name(self) -> &'static str {
        match self {
            SpectralMode::Prior => "prior",
            SpectralMode::Variational => "variational",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "prior" => Ok(SpectralMode::Prior),
            "variational" => Ok(SpectralMode::Variational),
            other => Err(Error::arg(format!("unknown spectral mode {other:?}"))),
        }
    }
}

/// Raw random outcomes behind the frequencies `Ω` and phases `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomBasis {
    seed: u64,
    /// Standard normals `ε`, `[M × d × D]`.
    normals: Array3<f64>,
    /// Uniforms on `[0, 1)` for prior phases, `[M × D]`.
    phase_uniforms: Array2<f64>,
    /// Accepted Marsaglia–Tsang normals for the two Gamma variates, `[M × D × 2]`.
    gamma_normals: Array3<f64>,
    /// Shape-augmentation uniforms on `(0, 1]`, `[M × D × 2 × B]`.
    gamma_uniforms: Array4<f64>,
}

impl RandomBasis {
    pub fn sample(levels: usize, input_dim: usize, features: usize, seed: u64) -> Result<Self> {
        if levels == 0 || input_dim == 0 || features == 0 {
            return Err(Error::arg("basis dimensions M, d, D must all be >= 1"));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let normals = Array3::from_shape_simple_fn((levels, input_dim, features), || {
            rng.sample::<f64, _>(StandardNormal)
        });
        let phase_uniforms = Array2::from_shape_simple_fn((levels, features), || rng.random::<f64>());
        let init_shape = 1.0 + SHAPE_AUGMENTATION as f64;
        let gamma_normals = Array3::from_shape_simple_fn((levels, features, 2), || {
            accepted_gamma_normal(&mut rng, init_shape)
        });
        let gamma_uniforms = Array4::from_shape_simple_fn((levels, features, 2, SHAPE_AUGMENTATION), || {
            1.0 - rng.random::<f64>()
        });
        Ok(Self {
            seed,
            normals,
            phase_uniforms,
            gamma_normals,
            gamma_uniforms,
        })
    }

    /// Rebuilds a basis from stored outcomes (checkpoint loading).
    pub fn from_raw(
        seed: u64,
        normals: Array3<f64>,
        phase_uniforms: Array2<f64>,
        gamma_normals: Array3<f64>,
        gamma_uniforms: Array4<f64>,
    ) -> Result<Self> {
        let (m, _, dd) = normals.dim();
        if phase_uniforms.dim() != (m, dd)
            || gamma_normals.dim() != (m, dd, 2)
            || gamma_uniforms.dim() != (m, dd, 2, SHAPE_AUGMENTATION)
        {
            return Err(Error::arg("inconsistent random basis array shapes"));
        }
        if gamma_uniforms.iter().any(|&u| !(u > 0.0 && u <= 1.0)) {
            return Err(Error::arg("augmentation uniforms must lie in (0, 1]"));
        }
        Ok(Self {
            seed,
            normals,
            phase_uniforms,
            gamma_normals,
            gamma_uniforms,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn levels(&self) -> usize {
        self.normals.dim().0
    }

    pub fn input_dim(&self) -> usize {
        self.normals.dim().1
    }

    pub fn features(&self) -> usize {
        self.normals.dim().2
    }

    pub fn normals(&self) -> &Array3<f64> {
        &self.normals
    }

    pub fn phase_uniforms(&self) -> &Array2<f64> {
        &self.phase_uniforms
    }

    pub fn gamma_normals(&self) -> &Array3<f64> {
        &self.gamma_normals
    }

    pub fn gamma_uniforms(&self) -> &Array4<f64> {
        &self.gamma_uniforms
    }
}

/// Runs the Marsaglia–Tsang acceptance test at `shape` and returns the
/// first accepted normal.
fn accepted_gamma_normal(rng: &mut ChaCha20Rng, shape: f64) -> f64 {
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let eps: f64 = rng.sample(StandardNormal);
        let v = (1.0 + c * eps).powi(3);
        if v <= 0.0 {
            continue;
        }
        let u: f64 = 1.0 - rng.random::<f64>();
        if u.ln() < 0.5 * eps * eps + d - d * v + d * v.ln() {
            return eps;
        }
    }
}

/// Shape-augmented Gamma reparameterization for fixed outcomes.
///
/// `G(α) = h(ε, α + B) · Π_{i<B} u_i^{1/(α+i)}` with the Marsaglia–Tsang
/// transform `h(ε, s) = (s − 1/3)(1 + ε/√(9s − 3))³`. Returns `(G, ∂G/∂α)`.
pub fn gamma_reparam(eps: f64, uniforms: &[f64], alpha: f64) -> (f64, f64) {
    let s = alpha + uniforms.len() as f64;
    let root = (9.0 * s - 3.0).sqrt();
    let base = 1.0 + eps / root;
    let h = (s - 1.0 / 3.0) * base.powi(3);
    // ∂h/∂s
    let dbase = -0.5 * eps * 9.0 / (root * root * root);
    let dh = base.powi(3) + (s - 1.0 / 3.0) * 3.0 * base * base * dbase;

    let mut log_corr = 0.0;
    let mut dlog_corr = 0.0;
    for (i, &u) in uniforms.iter().enumerate() {
        let a = alpha + i as f64;
        let lu = u.ln();
        log_corr += lu / a;
        dlog_corr -= lu / (a * a);
    }
    let g = h * log_corr.exp();
    let dg = g * (dh / h + dlog_corr);
    (g, dg)
}

/// Distributional parameters of the spectral measure and its variational
/// approximation.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralParams {
    /// `ℓ`, `[M × d]`.
    pub lengthscales: Array2<f64>,
    /// `μ`, `[M × d × D]`, same layout as `Ω`.
    pub freq_means: Array3<f64>,
    /// `σ`, `[M × d × D]`.
    pub freq_stds: Array3<f64>,
    /// Beta shapes `(a, b)`, `[M × D × 2]`.
    pub phase_shapes: Array3<f64>,
}

impl SpectralParams {
    /// Variational parameters start at the prior draw: `μ = ε/ℓ`, `σ = 1e-2`,
    /// uniform phases (`a = b = 1`).
    pub fn initialize(basis: &RandomBasis, lengthscales: &[f64]) -> Result<Self> {
        let (m, d, dd) = basis.normals.dim();
        if lengthscales.len() != d {
            return Err(Error::arg("one initial lengthscale per input dimension is required"));
        }
        let ls = Array2::from_shape_fn((m, d), |(_, i)| lengthscales[i]);
        let freq_means = Array3::from_shape_fn((m, d, dd), |(lvl, i, k)| basis.normals[[lvl, i, k]] / ls[[lvl, i]]);
        Ok(Self {
            lengthscales: ls,
            freq_means,
            freq_stds: Array3::from_elem((m, d, dd), 1e-2),
            phase_shapes: Array3::ones((m, dd, 2)),
        })
    }

    pub fn validate(&self, basis: &RandomBasis) -> Result<()> {
        let (m, d, dd) = basis.normals.dim();
        if self.lengthscales.dim() != (m, d)
            || self.freq_means.dim() != (m, d, dd)
            || self.freq_stds.dim() != (m, d, dd)
            || self.phase_shapes.dim() != (m, dd, 2)
        {
            return Err(Error::arg("spectral parameters do not match the basis dimensions"));
        }
        if self.lengthscales.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::arg("lengthscales must be positive"));
        }
        if self.freq_stds.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::arg("frequency standard deviations must be positive"));
        }
        if self.phase_shapes.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::arg("phase shapes must be positive"));
        }
        Ok(())
    }
}

/// Frequencies `Ω`, `[M × d × D]`.
pub fn reparam_frequencies(basis: &RandomBasis, params: &SpectralParams, mode: SpectralMode) -> Result<Array3<f64>> {
    params.validate(basis)?;
    let eps = &basis.normals;
    Ok(match mode {
        SpectralMode::Prior => {
            let ls = &params.lengthscales;
            Array3::from_shape_fn(eps.dim(), |(m, i, k)| eps[[m, i, k]] / ls[[m, i]])
        }
        SpectralMode::Variational => &params.freq_means + &(&params.freq_stds * eps),
    })
}

/// Phases `B`, `[M × D]`, in `[0, 2π]`.
pub fn reparam_phases(basis: &RandomBasis, params: &SpectralParams, mode: SpectralMode) -> Result<Array2<f64>> {
    params.validate(basis)?;
    Ok(match mode {
        SpectralMode::Prior => basis.phase_uniforms.mapv(|u| TWO_PI * u),
        SpectralMode::Variational => phases_with_jacobian(basis, params).0,
    })
}

/// Variational phases together with `∂b/∂a` and `∂b/∂b'`, each `[M × D]`.
pub(crate) fn phases_with_jacobian(basis: &RandomBasis, params: &SpectralParams) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let (m, dd) = basis.phase_uniforms.dim();
    let mut phases = Array2::zeros((m, dd));
    let mut d_a = Array2::zeros((m, dd));
    let mut d_b = Array2::zeros((m, dd));
    for lvl in 0..m {
        for k in 0..dd {
            let ua = basis.gamma_uniforms.slice(ndarray::s![lvl, k, 0, ..]);
            let ub = basis.gamma_uniforms.slice(ndarray::s![lvl, k, 1, ..]);
            let (ga, dga) = gamma_reparam(
                basis.gamma_normals[[lvl, k, 0]],
                ua.as_slice().expect("contiguous uniforms"),
                params.phase_shapes[[lvl, k, 0]],
            );
            let (gb, dgb) = gamma_reparam(
                basis.gamma_normals[[lvl, k, 1]],
                ub.as_slice().expect("contiguous uniforms"),
                params.phase_shapes[[lvl, k, 1]],
            );
            let s = ga + gb;
            phases[[lvl, k]] = TWO_PI * ga / s;
            d_a[[lvl, k]] = TWO_PI * gb / (s * s) * dga;
            d_b[[lvl, k]] = -TWO_PI * ga / (s * s) * dgb;
        }
    }
    (phases, d_a, d_b)
}

/// Per-step RFF activations `U[l, k] = cos(Ω[:, k]·x_l + b[k])`, `[L × D]`.
pub fn rff_eval(x: ArrayView2<f64>, omega: ArrayView2<f64>, phases: &[f64]) -> Result<Array2<f64>> {
    if x.ncols() != omega.nrows() || omega.ncols() != phases.len() {
        return Err(Error::arg(format!(
            "RFF dimension mismatch: x {:?}, Ω {:?}, b {}",
            x.dim(),
            omega.dim(),
            phases.len()
        )));
    }
    let mut pre = x.dot(&omega);
    for mut row in pre.axis_iter_mut(Axis(0)) {
        for (v, &b) in row.iter_mut().zip(phases) {
            *v = (*v + b).cos();
        }
    }
    Ok(pre)
}

/// Vector-Jacobian product of [`rff_eval`]: returns `(∂/∂Ω [d × D], ∂/∂b [D])`.
pub fn rff_eval_vjp(
    x: ArrayView2<f64>,
    omega: ArrayView2<f64>,
    phases: &[f64],
    grad_u: ArrayView2<f64>,
) -> (Array2<f64>, Vec<f64>) {
    let mut gpre = x.dot(&omega);
    for (mut row, grow) in gpre.axis_iter_mut(Axis(0)).zip(grad_u.axis_iter(Axis(0))) {
        for ((v, &b), &g) in row.iter_mut().zip(phases).zip(grow) {
            *v = -(*v + b).sin() * g;
        }
    }
    let g_omega = x.t().dot(&gpre);
    let g_b = gpre.sum_axis(Axis(0)).to_vec();
    (g_omega, g_b)
}

/// Median pairwise absolute difference per input dimension over an evenly
/// strided subsample of at most `max_points` rows, floored at `1e-3`.
pub fn median_heuristic_lengthscales(x: ArrayView2<f64>, max_points: usize) -> Vec<f64> {
    let n = x.nrows();
    let stride = n.div_ceil(max_points.max(2)).max(1);
    let rows: Vec<usize> = (0..n).step_by(stride).collect();
    (0..x.ncols())
        .map(|i| {
            let mut dists = Vec::with_capacity(rows.len() * rows.len() / 2);
            for (a, &ra) in rows.iter().enumerate() {
                for &rb in &rows[a + 1..] {
                    dists.push((x[[ra, i]] - x[[rb, i]]).abs());
                }
            }
            if dists.is_empty() {
                return 1.0;
            }
            dists.sort_by(|a, b| a.total_cmp(b));
            let mid = dists.len() / 2;
            let med = if dists.len() % 2 == 0 {
                0.5 * (dists[mid - 1] + dists[mid])
            } else {
                dists[mid]
            };
            med.max(1e-3)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn basis_is_deterministic_in_seed() {
        let a = RandomBasis::sample(2, 3, 4, 7).unwrap();
        let b = RandomBasis::sample(2, 3, 4, 7).unwrap();
        let c = RandomBasis::sample(2, 3, 4, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.normals(), c.normals());
        assert!(RandomBasis::sample(0, 1, 1, 0).is_err());
    }

    #[test]
    fn raw_normals_mean_within_bound() {
        let basis = RandomBasis::sample(3, 5, 40, 11).unwrap();
        let n = basis.normals().len() as f64;
        assert!(basis.normals().mean().unwrap().abs() < 4.0 / n.sqrt());
    }

    #[test]
    fn frequency_reparam_identities() {
        let basis = RandomBasis::sample(2, 2, 3, 3).unwrap();
        let mut params = SpectralParams::initialize(&basis, &[2.0, 2.0]).unwrap();
        let prior = reparam_frequencies(&basis, &params, SpectralMode::Prior).unwrap();
        assert_eq!(prior, basis.normals().mapv(|e| e / 2.0));

        params.freq_means.fill(0.0);
        params.freq_stds.fill(1.0);
        let var = reparam_frequencies(&basis, &params, SpectralMode::Variational).unwrap();
        assert_eq!(&var, basis.normals());

        params.freq_means.fill(3.0);
        params.freq_stds.fill(1e-12);
        let var = reparam_frequencies(&basis, &params, SpectralMode::Variational).unwrap();
        assert!(var.iter().all(|w| (w - 3.0).abs() < 1e-10));

        params.freq_stds.fill(0.0);
        assert!(reparam_frequencies(&basis, &params, SpectralMode::Variational).is_err());
    }

    #[test]
    fn prior_phases_in_range() {
        let basis = RandomBasis::sample(3, 1, 50, 5).unwrap();
        let params = SpectralParams::initialize(&basis, &[1.0]).unwrap();
        let b = reparam_phases(&basis, &params, SpectralMode::Prior).unwrap();
        assert!(b.iter().all(|&v| (0.0..TWO_PI).contains(&v)));
        let v = reparam_phases(&basis, &params, SpectralMode::Variational).unwrap();
        assert!(v.iter().all(|&p| (0.0..=TWO_PI).contains(&p)));
    }

    #[test]
    fn gamma_reparam_derivative() {
        let u = [0.3, 0.9, 0.55, 0.01, 0.77, 0.42, 0.61, 0.2, 0.95, 0.5];
        for &alpha in &[0.3, 1.0, 4.5] {
            let (_, dg) = gamma_reparam(-0.4, &u, alpha);
            let h = 1e-6;
            let fd = (gamma_reparam(-0.4, &u, alpha + h).0 - gamma_reparam(-0.4, &u, alpha - h).0) / (2.0 * h);
            assert!((dg - fd).abs() < 1e-6 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn phases_continuous_in_shapes() {
        let basis = RandomBasis::sample(2, 1, 8, 21).unwrap();
        let mut params = SpectralParams::initialize(&basis, &[1.0]).unwrap();
        params.phase_shapes.fill(1.7);
        let b0 = reparam_phases(&basis, &params, SpectralMode::Variational).unwrap();
        params.phase_shapes.mapv_inplace(|s| s + 1e-6);
        let b1 = reparam_phases(&basis, &params, SpectralMode::Variational).unwrap();
        let max = (&b1 - &b0).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max > 0.0 && max < 1e-4, "max change {max}");
    }

    #[test]
    fn rff_eval_values() {
        let x = array![[0.0, 0.0], [0.0, 0.0]];
        let omega = array![[1.0, -2.0, 0.5], [0.3, 0.1, 4.0]];
        let u = rff_eval(x.view(), omega.view(), &[0.0; 3]).unwrap();
        assert!(u.iter().all(|&v| v == 1.0));

        let u = rff_eval(array![[1.0]].view(), array![[PI]].view(), &[PI / 2.0]).unwrap();
        assert!(u[[0, 0]].abs() < 1e-15);

        let x = Array2::from_shape_fn((20, 2), |(l, i)| (l as f64 - 7.0) * (i as f64 + 0.3));
        let u = rff_eval(x.view(), omega.view(), &[0.1, 2.0, 5.0]).unwrap();
        assert!(u.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(rff_eval(x.view(), omega.view(), &[0.0; 2]).is_err());
    }

    #[test]
    fn rff_vjp_matches_difference_quotient() {
        let x = Array2::from_shape_fn((6, 2), |(l, i)| 0.3 * l as f64 - 0.7 * i as f64);
        let omega = array![[0.4, -1.1], [0.9, 0.2]];
        let b = [0.5, 2.5];
        let g = Array2::from_shape_fn((6, 2), |(l, k)| ((l + 2 * k) % 3) as f64 - 1.0);
        let f = |om: &Array2<f64>, b: &[f64]| (&rff_eval(x.view(), om.view(), b).unwrap() * &g).sum();
        let (g_om, g_b) = rff_eval_vjp(x.view(), omega.view(), &b, g.view());
        let h = 1e-6;
        for i in 0..2 {
            for k in 0..2 {
                let mut up = omega.clone();
                up[[i, k]] += h;
                let mut dn = omega.clone();
                dn[[i, k]] -= h;
                let fd = (f(&up, &b) - f(&dn, &b)) / (2.0 * h);
                assert!((fd - g_om[[i, k]]).abs() < 1e-7);
            }
            let mut bu = b;
            bu[i] += h;
            let mut bd = b;
            bd[i] -= h;
            assert!(((f(&omega, &bu) - f(&omega, &bd)) / (2.0 * h) - g_b[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn median_heuristic_floor() {
        let x = Array2::from_elem((10, 2), 3.0);
        assert_eq!(median_heuristic_lengthscales(x.view(), 100), vec![1e-3, 1e-3]);
        let x = Array2::from_shape_fn((3, 1), |(l, _)| l as f64);
        // pairwise distances 1, 2, 1
        assert_eq!(median_heuristic_lengthscales(x.view(), 100), vec![1.0]);
    }
}
