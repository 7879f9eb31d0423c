//! Variational sparse-spectrum GP readout on top of the signature features.
//!
//! The weight posterior is `q(w_h) = N(μ_h, L Lᵀ)` per forecast head with a
//! covariance factor shared by all heads; frequencies and phases carry their
//! own variational families (see [`crate::randfourier`]).

mod adam;
mod objective;
mod state;

pub use adam::Adam;
pub use objective::{
    compute_features, evaluate, gradients, objective, Batch, Evaluation, ObjectiveConfig, ObjectiveMode,
    ObjectiveTerms,
};
pub use state::{logit, sigmoid, Block, Dims, VariationalState};

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::randfourier::SpectralParams;
use crate::special::{digamma, ln_beta};

/// Gaussian weight posterior: one mean column per head, one shared
/// lower-triangular factor.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightPosterior {
    pub mean: Array2<f64>,
    pub chol: Array2<f64>,
}

impl WeightPosterior {
    pub fn new(mean: Array2<f64>, chol: Array2<f64>) -> Result<Self> {
        let w = mean.nrows();
        if chol.dim() != (w, w) {
            return Err(Error::arg(format!(
                "Cholesky factor {:?} does not match weight width {w}",
                chol.dim()
            )));
        }
        for i in 0..w {
            if !(chol[[i, i]] > 0.0) {
                return Err(Error::arg("Cholesky diagonal must be strictly positive"));
            }
            for j in i + 1..w {
                if chol[[i, j]] != 0.0 {
                    return Err(Error::arg("Cholesky factor must be lower-triangular"));
                }
            }
        }
        Ok(Self { mean, chol })
    }

    pub fn width(&self) -> usize {
        self.mean.nrows()
    }

    pub fn heads(&self) -> usize {
        self.mean.ncols()
    }
}

/// Per-point latent Gaussian marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDistribution {
    pub means: Array1<f64>,
    pub vars: Array1<f64>,
}

/// Latent variances `‖Lᵀ φ_i‖²` for every row of `phi`.
pub fn latent_variances(phi: ArrayView2<f64>, chol: ArrayView2<f64>) -> Array1<f64> {
    let v = phi.dot(&chol);
    v.map_axis(Axis(1), |r| r.dot(&r))
}

pub fn predictive(phi: ArrayView2<f64>, posterior: &WeightPosterior, head: usize) -> Result<PredictiveDistribution> {
    if phi.ncols() != posterior.width() {
        return Err(Error::arg(format!(
            "feature width {} does not match posterior width {}",
            phi.ncols(),
            posterior.width()
        )));
    }
    if head >= posterior.heads() {
        return Err(Error::arg(format!("head {head} out of range ({} heads)", posterior.heads())));
    }
    Ok(PredictiveDistribution {
        means: phi.dot(&posterior.mean.column(head)),
        vars: latent_variances(phi, posterior.chol.view()),
    })
}

fn check_pred(y: ArrayView1<f64>, pred: &PredictiveDistribution) {
    assert_eq!(y.len(), pred.means.len(), "targets and predictions differ in length");
}

/// `Σ_i E_q[log N(y_i | f_i, σ_y²)]`.
pub fn elbo_datafit(y: ArrayView1<f64>, pred: &PredictiveDistribution, noise_var: f64) -> f64 {
    check_pred(y, pred);
    let c = -0.5 * (2.0 * PI * noise_var).ln();
    y.iter()
        .zip(&pred.means)
        .zip(&pred.vars)
        .map(|((&y, &m), &v)| c - ((y - m).powi(2) + v) / (2.0 * noise_var))
        .sum()
}

/// `Σ_i log N(y_i | μ_i, σ_i² + σ_y²)`.
pub fn ppgpr_datafit(y: ArrayView1<f64>, pred: &PredictiveDistribution, noise_var: f64) -> f64 {
    check_pred(y, pred);
    y.iter()
        .zip(&pred.means)
        .zip(&pred.vars)
        .map(|((&y, &m), &v)| {
            let s = v + noise_var;
            -0.5 * (2.0 * PI * s).ln() - (y - m).powi(2) / (2.0 * s)
        })
        .sum()
}

/// `Σ_h KL(N(μ_h, L Lᵀ) ‖ N(0, I))`.
pub fn kl_weights(posterior: &WeightPosterior) -> f64 {
    let w = posterior.width() as f64;
    let h = posterior.heads() as f64;
    let trace: f64 = posterior.chol.iter().map(|v| v * v).sum();
    let logdet: f64 = 2.0 * posterior.chol.diag().iter().map(|v| v.ln()).sum::<f64>();
    let mean_sq: f64 = posterior.mean.iter().map(|v| v * v).sum();
    0.5 * (h * (trace - w - logdet) + mean_sq)
}

/// `KL(N(μ, σ²) ‖ N(0, ℓ⁻²))` for one frequency component.
pub fn kl_frequency_term(mean: f64, std: f64, lengthscale: f64) -> f64 {
    let l2 = lengthscale * lengthscale;
    -lengthscale.ln() - std.ln() + 0.5 * l2 * (std * std + mean * mean) - 0.5
}

pub fn kl_frequencies(params: &SpectralParams) -> f64 {
    let (m, d, dd) = params.freq_means.dim();
    (0..m)
        .into_par_iter()
        .map(|lvl| {
            let mut acc = 0.0;
            for i in 0..d {
                let l = params.lengthscales[[lvl, i]];
                for k in 0..dd {
                    acc += kl_frequency_term(params.freq_means[[lvl, i, k]], params.freq_stds[[lvl, i, k]], l);
                }
            }
            acc
        })
        .sum()
}

/// Negative differential entropy of `Beta(a, b)`, which equals the KL from
/// the `2π`-scaled Beta to the uniform phase prior.
pub fn kl_phase_term(a: f64, b: f64) -> f64 {
    -(ln_beta(a, b) - (a - 1.0) * digamma(a) - (b - 1.0) * digamma(b) + (a + b - 2.0) * digamma(a + b))
}

pub fn kl_phases(params: &SpectralParams) -> f64 {
    params
        .phase_shapes
        .outer_iter()
        .map(|lvl| lvl.outer_iter().map(|ab| kl_phase_term(ab[0], ab[1])).sum::<f64>())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::trigamma;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array3};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn posterior_1d(mu: f64, l: f64) -> WeightPosterior {
        WeightPosterior::new(array![[mu]], array![[l]]).unwrap()
    }

    #[test]
    fn scalar_predictive() {
        let p = predictive(array![[3.0]].view(), &posterior_1d(1.0, 2.0), 0).unwrap();
        assert_eq!(p.means[0], 3.0);
        assert_eq!(p.vars[0], 36.0);
        let p0 = predictive(array![[3.0]].view(), &posterior_1d(1.0, 1e-300), 0).unwrap();
        assert_eq!(p0.means[0], 3.0);
        assert!(p0.vars[0] < 1e-290);
        assert!(predictive(array![[1.0, 2.0]].view(), &posterior_1d(1.0, 1.0), 0).is_err());
    }

    #[test]
    fn datafit_examples() {
        let y = array![0.7];
        let pred = PredictiveDistribution {
            means: array![0.7],
            vars: array![0.0],
        };
        assert_abs_diff_eq!(elbo_datafit(y.view(), &pred, 1.0 / (2.0 * PI)), 0.0, epsilon = 1e-14);
        let mut last = f64::INFINITY;
        for v in [0.0, 0.1, 1.0, 5.0] {
            let p = PredictiveDistribution {
                means: array![0.2],
                vars: array![v],
            };
            let e = elbo_datafit(y.view(), &p, 0.3);
            assert!(e < last);
            last = e;
        }
        let pp = PredictiveDistribution {
            means: array![0.7],
            vars: array![0.4],
        };
        assert_abs_diff_eq!(
            ppgpr_datafit(y.view(), &pp, 0.6),
            -0.5 * (2.0 * PI).ln(),
            epsilon = 1e-14
        );
        let p0 = PredictiveDistribution {
            means: array![1.0],
            vars: array![0.0],
        };
        let s2: f64 = 0.25;
        let exact = -0.5 * (2.0 * PI * s2).ln() - (0.7f64 - 1.0).powi(2) / (2.0 * s2);
        assert_abs_diff_eq!(ppgpr_datafit(y.view(), &p0, s2), exact, epsilon = 1e-14);
    }

    #[test]
    fn datafit_monte_carlo() {
        let (y, mu, var, noise) = (0.4, -0.3, 0.8, 0.5);
        let pred = PredictiveDistribution {
            means: array![mu],
            vars: array![var],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1_000_000;
        let (mut s_log, mut s_log2, mut s_p, mut s_p2) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let e: f64 = StandardNormal.sample(&mut rng);
            let f = mu + var.sqrt() * e;
            let lp = -0.5 * (2.0 * PI * noise).ln() - (y - f).powi(2) / (2.0 * noise);
            s_log += lp;
            s_log2 += lp * lp;
            s_p += lp.exp();
            s_p2 += lp.exp().powi(2);
        }
        let nf = n as f64;
        let (m_log, m_p) = (s_log / nf, s_p / nf);
        let se_log = ((s_log2 / nf - m_log * m_log) / nf).sqrt();
        let se_p = ((s_p2 / nf - m_p * m_p) / nf).sqrt();
        assert!((elbo_datafit(array![y].view(), &pred, noise) - m_log).abs() < 3.0 * se_log);
        // delta method: se(log p̂) ≈ se(p̂)/p̂
        assert!((ppgpr_datafit(array![y].view(), &pred, noise) - m_p.ln()).abs() < 3.0 * se_p / m_p);
    }

    #[test]
    fn kl_weight_examples() {
        let w = WeightPosterior::new(Array2::zeros((3, 2)), Array2::eye(3)).unwrap();
        assert_abs_diff_eq!(kl_weights(&w), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(kl_weights(&posterior_1d(1.0, 1.0)), 0.5, epsilon = 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let n = rng.random_range(1..6);
            let h = rng.random_range(1..4);
            let mean = Array2::from_shape_fn((n, h), |_| rng.random_range(-2.0..2.0));
            let chol = Array2::from_shape_fn((n, n), |(i, j)| match i.cmp(&j) {
                std::cmp::Ordering::Greater => rng.random_range(-1.0..1.0),
                std::cmp::Ordering::Equal => rng.random_range(0.1..2.0),
                _ => 0.0,
            });
            assert!(kl_weights(&WeightPosterior::new(mean, chol).unwrap()) >= -1e-12);
        }
    }

    fn spectral(mean: f64, std: f64, ls: f64, a: f64, b: f64) -> SpectralParams {
        SpectralParams {
            lengthscales: array![[ls]],
            freq_means: Array3::from_elem((1, 1, 1), mean),
            freq_stds: Array3::from_elem((1, 1, 1), std),
            phase_shapes: Array3::from_shape_vec((1, 1, 2), vec![a, b]).unwrap(),
        }
    }

    #[test]
    fn kl_frequency_examples() {
        assert_abs_diff_eq!(kl_frequencies(&spectral(0.0, 1.0, 1.0, 1.0, 1.0)), 0.0, epsilon = 1e-15);
        let expected = 0.5 * (0.25 - 1.0 + 4f64.ln());
        assert_abs_diff_eq!(kl_frequencies(&spectral(0.0, 1.0, 0.5, 1.0, 1.0)), expected, epsilon = 1e-14);
        assert_abs_diff_eq!(expected, 0.3181, epsilon = 1e-4);
        // prior matched: std = 1/ℓ
        assert_abs_diff_eq!(kl_frequencies(&spectral(0.0, 0.25, 4.0, 1.0, 1.0)), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn kl_phase_examples() {
        assert_abs_diff_eq!(kl_phase_term(1.0, 1.0), 0.0, epsilon = 1e-14);
        // ∫ q log(q/p) for q = Beta(2,2) scaled to [0, 2π], p uniform: midpoint quadrature
        let n = 200_000;
        let h = 1.0 / n as f64;
        let mut quad = 0.0;
        for i in 0..n {
            let x = (i as f64 + 0.5) * h;
            let q = 6.0 * x * (1.0 - x);
            quad += q * q.ln() * h;
        }
        assert_abs_diff_eq!(kl_phase_term(2.0, 2.0), quad, epsilon = 1e-8);
        assert_abs_diff_eq!(kl_phases(&spectral(0.0, 1.0, 1.0, 2.0, 2.0)), quad, epsilon = 1e-8);
        for &(a, b) in &[(0.3, 0.7), (1.0, 5.0), (10.0, 0.5), (3.0, 3.0)] {
            assert!(kl_phase_term(a, b) >= 0.0);
        }
    }

    #[test]
    fn kl_phase_gradient_formula() {
        let (a, b) = (1.7, 0.6);
        let analytic = (a - 1.0) * trigamma(a) - (a + b - 2.0) * trigamma(a + b);
        let h = 1e-6;
        let fd = (kl_phase_term(a + h, b) - kl_phase_term(a - h, b)) / (2.0 * h);
        assert!((analytic - fd).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn variances_invariant_under_rotation(seed in 0u64..1000, angle in 0.0f64..6.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let phi = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0));
            let chol = Array2::from_shape_fn((3, 3), |(i, j)| if i >= j { rng.random_range(0.2..1.0) } else { 0.0 });
            let (c, s) = (angle.cos(), angle.sin());
            // rotation in the (0, 2) plane composed with a reflection of axis 1
            let rot = array![[c, 0.0, -s], [0.0, -1.0, 0.0], [s, 0.0, c]];
            let a = latent_variances(phi.view(), chol.view());
            let b = latent_variances(phi.view(), chol.dot(&rot).view());
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert!((x - y).abs() < 1e-12 * x.max(1.0));
            }
        }

        #[test]
        fn ppgpr_dominates_elbo(y in -3.0f64..3.0, mu in -3.0f64..3.0, var in 0.0f64..4.0, noise in 0.01f64..3.0) {
            let pred = PredictiveDistribution { means: array![mu], vars: array![var] };
            prop_assert!(ppgpr_datafit(array![y].view(), &pred, noise) >= elbo_datafit(array![y].view(), &pred, noise) - 1e-12);
        }
    }
}
