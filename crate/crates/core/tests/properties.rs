use ndarray::{Array2, Array3};
use proptest::prelude::*;

use sigforecast::arrayops::{frac_diff, geometric_scan_2d, geometric_scan_sequential, FracDiffOrders};
use sigforecast::sigfeatures::signature_levels;
use sigforecast::sigoracle::{direct_rfsf, exact_sig_kernel, exact_signature, signature_by_enumeration, BaseKernel};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-2.0f64..2.0, rows * cols).prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

fn sized_matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = Array2<f64>> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| matrix(r, c))
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn frac_diff_is_linear(a in matrix(20, 3), b in matrix(20, 3), alpha in -3.0f64..3.0, q in 0.05f64..0.95) {
        let orders = FracDiffOrders::uniform(q, 3, 6).unwrap();
        let combined = frac_diff(&(&a * alpha + &b), &orders, 0).unwrap();
        let separate = frac_diff(&a, &orders, 0).unwrap() * alpha + frac_diff(&b, &orders, 0).unwrap();
        prop_assert!(max_abs_diff(&combined, &separate) < 1e-12);
    }

    #[test]
    fn blocked_scan_matches_recurrence(len in 1usize..2000, seed in 0u64..1000) {
        let a = Array2::from_shape_fn((len, 3), |(l, k)| ((l * 7 + k * 13 + seed as usize) % 17) as f64 / 8.0 - 1.0);
        let lambda = [0.3 + (seed % 7) as f64 / 10.0, 1.0, 0.999];
        let par = geometric_scan_2d(a.view(), &lambda);
        let seq = geometric_scan_sequential(a.view(), &lambda);
        for (p, s) in par.iter().zip(&seq) {
            prop_assert!((p - s).abs() <= 1e-12 * s.abs().max(1.0));
        }
    }

    #[test]
    fn signature_kernel_is_symmetric(x in sized_matrix(4, 2), y in sized_matrix(4, 2), ell in 0.3f64..3.0) {
        prop_assume!(x.ncols() == y.ncols());
        let base = BaseKernel::Gaussian { lengthscales: vec![ell; x.ncols()] };
        let kxy = exact_sig_kernel(x.view(), y.view(), 3, &base).unwrap();
        let kyx = exact_sig_kernel(y.view(), x.view(), 3, &base).unwrap();
        for m in 0..=3 {
            prop_assert!((kxy.level(m) - kyx.level(m)).abs() <= 1e-12 * kxy.level(m).abs().max(1.0));
        }
    }

    #[test]
    fn linear_kernel_is_signature_inner_product(x in sized_matrix(5, 2), y in sized_matrix(5, 2)) {
        prop_assume!(x.ncols() == y.ncols());
        let k = exact_sig_kernel(x.view(), y.view(), 3, &BaseKernel::Linear).unwrap();
        let sx = exact_signature(x.view(), 3).unwrap();
        let sy = exact_signature(y.view(), 3).unwrap();
        for m in 1..=3 {
            let dot: f64 = sx.level(m).iter().zip(sy.level(m)).map(|(a, b)| a * b).sum();
            prop_assert!((k.level(m) - dot).abs() <= 1e-10 * dot.abs().max(1.0), "level {m}: {} vs {dot}", k.level(m));
        }
    }

    #[test]
    fn chen_recursion_matches_enumeration(x in sized_matrix(6, 3), depth in 1usize..=3) {
        let fast = exact_signature(x.view(), depth).unwrap();
        let slow = signature_by_enumeration(x.view(), depth).unwrap();
        for m in 0..=depth {
            for (a, b) in fast.level(m).iter().zip(slow.level(m)) {
                prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn feature_recursion_matches_enumeration(v in prop::collection::vec(-1.0f64..1.0, 3 * 5 * 2), decay in 0.1f64..1.0) {
        let inc = Array3::from_shape_vec((3, 5, 2), v).unwrap();
        let lambda = sigforecast::arrayops::DecayVector::new(vec![decay, 1.0]).unwrap();
        let fast = signature_levels(inc.view(), Some(&lambda)).unwrap();
        let slow = direct_rfsf(inc.view(), 3, Some(&[decay, 1.0])).unwrap();
        for m in 1..=3 {
            prop_assert!(max_abs_diff(fast.level(m), slow.level(m)) < 1e-12);
        }
    }
}
