use nalgebra::SymmetricEigen;
use onebit_core::channel::quantize;
use onebit_core::estimator::{lra_ls_estimate, update_rhat, BussgangOperator, EstimatorState};
use onebit_core::channel::QuantizedBatch;
use onebit_core::gaussian::bvn_upper;
use onebit_core::linalg::{CMatrix, CVector, RVector, C64};
use onebit_core::model::{stack_real_matrix, stack_real_vector, unstack_real_vector};
use proptest::prelude::*;

fn cvec(len: usize) -> impl Strategy<Value = CVector> {
    prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), len)
        .prop_map(|v| CVector::from_iterator(v.len(), v.into_iter().map(|(a, b)| C64::new(a, b))))
}

fn cmat(rows: usize, cols: usize) -> impl Strategy<Value = CMatrix> {
    cvec(rows * cols).prop_map(move |v| CMatrix::from_column_slice(rows, cols, v.as_slice()))
}

proptest! {
    #[test]
    fn quantizer_is_idempotent_and_unit_modulus(y in cvec(12)) {
        let q = quantize(&y);
        prop_assert_eq!(quantize(&q), q.clone());
        for (a, b) in y.iter().zip(q.iter()) {
            prop_assert!((b.norm() - 1.0).abs() < 1e-15);
            prop_assert_eq!(a.re >= 0.0, b.re > 0.0);
            prop_assert_eq!(a.im >= 0.0, b.im > 0.0);
        }
    }

    #[test]
    fn quantizer_ignores_positive_scaling(y in cvec(8), s in 1e-3..1e3f64) {
        prop_assert_eq!(quantize(&(&y * C64::new(s, 0.0))), quantize(&y));
    }

    #[test]
    fn lra_ls_scales_inversely_with_gain(phi in cmat(8, 2), y in cvec(8), s in 0.1..10.0f64) {
        let d = RVector::from_element(8, 1.0) + RVector::from_fn(8, |i, _| 0.1 * i as f64);
        let batch = QuantizedBatch {
            y_unquantized: y.clone(),
            y_quantized: quantize(&y),
            phi_p: phi.clone(),
            noise_var: 1.0,
        };
        let a = lra_ls_estimate(&batch, &BussgangOperator::new(&phi, d.clone()).unwrap());
        let b = lra_ls_estimate(&batch, &BussgangOperator::new(&phi, d * (s * s)).unwrap());
        if let (Ok(a), Ok(b)) = (a, b) {
            let scaled = &a * C64::new(s, 0.0);
            prop_assert!((b - &scaled).camax() <= 1e-8 * scaled.camax().max(1.0));
        }
    }

    #[test]
    fn rhat_stays_hermitian_psd(hs in prop::collection::vec(cvec(4), 1..20), lambda in 0.5..1.0f64) {
        let mut s = EstimatorState::new(4, lambda);
        for h in &hs {
            s = update_rhat(s, h);
        }
        prop_assert!((s.r_hat.adjoint() - &s.r_hat).camax() < 1e-12);
        let eig = SymmetricEigen::new(s.r_hat.clone()).eigenvalues;
        let scale = eig.amax().max(1.0);
        prop_assert!(eig.min() >= -1e-10 * scale);
        prop_assert_eq!(s.step, hs.len() + 1);
    }

    #[test]
    fn orthant_is_symmetric_and_bounded(h in -4.0..4.0f64, k in -4.0..4.0f64, r in -0.99..0.99f64) {
        let p = bvn_upper(h, k, r);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((p - bvn_upper(k, h, r)).abs() < 1e-12);
        // P(X>h, Y>k) + P(X>h, Y<=k) = Q(h)
        let q = 0.5 * libm::erfc(h / std::f64::consts::SQRT_2);
        prop_assert!((p + bvn_upper(h, -k, -r) - q).abs() < 1e-10);
    }

    #[test]
    fn real_stacking_is_consistent(phi in cmat(5, 3), h in cvec(3)) {
        prop_assert_eq!(unstack_real_vector(&stack_real_vector(&h)), h.clone());
        let lhs = stack_real_matrix(&phi) * stack_real_vector(&h);
        let rhs = stack_real_vector(&(&phi * &h));
        prop_assert!((lhs - rhs).amax() < 1e-12);
    }
}
