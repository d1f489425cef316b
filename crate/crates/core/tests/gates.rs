use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

use reducible::gates::{
    is_dual_unitary, is_unitary, max_abs_diff, operator_schmidt_spectrum, random_chm,
    random_dual_unitary, random_unitary, realign, realign_matrix, schmidt_rank_of_spectrum,
    ComplexHadamard, Tolerance, TwoSiteGate,
};

type CMatrix = DMatrix<Complex64>;

fn tol() -> Tolerance {
    Tolerance::new(1e-9).unwrap()
}

/// `U` is unitary iff `U†U = 1`; written out independently of the library.
fn unitary_by_hand(u: &CMatrix) -> bool {
    let n = u.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            for k in 0..n {
                s += u[(k, i)].conj() * u[(k, j)];
            }
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((s - Complex64::new(target, 0.0)).norm());
        }
    }
    worst < 1e-9
}

/// Space-direction reshuffle `R[(a c), (b e)] = U[(a b), (c e)]` with
/// explicit tensor indices.
fn reshuffle_by_hand(u: &CMatrix, d: usize) -> CMatrix {
    CMatrix::from_fn(d * d, d * d, |row, col| {
        let (a, c) = (row / d, row % d);
        let (b, e) = (col / d, col % d);
        u[(a * d + b, c * d + e)]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_dual_unitaries_pass_both_verifiers(d in 2usize..=5, seed in any::<u64>()) {
        let g = random_dual_unitary(d, seed).unwrap();
        prop_assert!(is_unitary(&g, tol()));
        prop_assert!(is_dual_unitary(&g, tol()));
        prop_assert!(unitary_by_hand(g.matrix()));
        prop_assert!(unitary_by_hand(&reshuffle_by_hand(g.matrix(), d)));
    }

    #[test]
    fn flat_spectrum_iff_dual_unitary(d in 2usize..=4, seed in any::<u64>()) {
        let du = random_dual_unitary(d, seed).unwrap();
        let spectrum = operator_schmidt_spectrum(&du);
        prop_assert_eq!(spectrum.len(), d * d);
        prop_assert!(spectrum.iter().all(|s| (s - 1.0).abs() < 1e-9));

        let generic = random_unitary(d, seed).unwrap();
        let spectrum = operator_schmidt_spectrum(&generic);
        let flat = spectrum.iter().all(|s| (s - 1.0).abs() < 1e-9);
        prop_assert_eq!(flat, is_dual_unitary(&generic, tol()));
        prop_assert!(!flat);
    }

    #[test]
    fn realignment_is_an_involution(d in 2usize..=4, seed in any::<u64>()) {
        let g = random_unitary(d, seed).unwrap();
        let r = realign(&g);
        prop_assert!(max_abs_diff(&r, &reshuffle_by_hand(g.matrix(), d)) == 0.0);
        prop_assert!(max_abs_diff(&realign_matrix(&r, d), g.matrix()) == 0.0);
    }

    #[test]
    fn json_round_trip_is_exact(d in 2usize..=4, seed in any::<u64>()) {
        let g = random_dual_unitary(d, seed).unwrap();
        let back = TwoSiteGate::from_json(&g.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn random_chm_satisfies_invariants(d in 2usize..=5, seed in any::<u64>()) {
        let h = random_chm(d, seed).unwrap();
        prop_assert!(h.satisfies_invariants(tol()));
        let cp = h.as_controlled_phase();
        prop_assert!(is_unitary(&cp, tol()));
    }
}

#[test]
fn swap_is_dual_unitary_and_identity_is_not() {
    for d in 2..=4 {
        assert!(is_dual_unitary(&TwoSiteGate::swap(d), tol()));
        let id = TwoSiteGate::identity(d);
        assert!(is_unitary(&id, tol()));
        assert!(!is_dual_unitary(&id, tol()));
        // The identity has operator-Schmidt rank one.
        assert_eq!(
            schmidt_rank_of_spectrum(&operator_schmidt_spectrum(&id), 1e-9),
            1
        );
    }
}

#[test]
fn fourier_matrix_is_complex_hadamard() {
    for d in 2..=6 {
        let f = ComplexHadamard::fourier(d);
        assert!(f.satisfies_invariants(tol()));
        assert!(f.matrix().iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    }
}

#[test]
fn non_unimodular_matrix_is_rejected_as_hadamard() {
    let mut m = ComplexHadamard::fourier(3).matrix().clone();
    m[(0, 0)] *= Complex64::new(2.0, 0.0);
    assert!(ComplexHadamard::new(m, tol()).is_err());
}

#[test]
fn composition_preserves_dual_unitarity_with_swap() {
    // SWAP composed with a controlled phase is dual-unitary for any phases.
    let cp = TwoSiteGate::controlled_phase(2, &[0.3, 1.1, -0.7, 2.0]).unwrap();
    let g = TwoSiteGate::swap(2).compose(&cp).unwrap();
    assert!(is_dual_unitary(&g, tol()));
    assert!(!is_dual_unitary(&cp, tol()));
}

#[test]
fn tolerance_rejects_negative_and_nan_values() {
    assert!(Tolerance::new(0.0).is_ok());
    assert!(Tolerance::new(-1e-3).is_err());
    assert!(Tolerance::new(f64::NAN).is_err());
}
