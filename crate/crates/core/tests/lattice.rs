use num_rational::Rational64;
use num_traits::{Signed, Zero};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use reducible::lattice::{
    builtin, family_u, family_v, schmidt_rank, trace_worldlines, worldlines, BaseGateSpec,
    CellGates, FlowSpectrum, Solvability, BUILTIN_NAMES,
};

fn builtins() -> Vec<BaseGateSpec> {
    BUILTIN_NAMES
        .iter()
        .filter_map(|name| builtin(name, 2).ok())
        .collect()
}

fn dual_unitary_builtins() -> Vec<BaseGateSpec> {
    builtins()
        .into_iter()
        .filter(|s| s.is_dual_unitary_cell())
        .collect()
}

#[test]
fn flow_spectra_are_well_formed() {
    for spec in dual_unitary_builtins() {
        let flow = trace_worldlines(&spec).unwrap();
        let total: u32 = flow.entries().iter().map(|e| e.1).sum();
        assert_eq!(total as usize, 2 * spec.half_width(), "{}", spec.name());
        assert!(flow
            .entries()
            .iter()
            .all(|(v, _)| v.abs() <= Rational64::from_integer(1)));
        // One worldline per leg.
        assert_eq!(worldlines(&spec).unwrap().len(), spec.legs());
    }
}

#[test]
fn reducible_builtins_have_mirror_symmetric_flows() {
    for name in [
        "du",
        "kagome",
        "nested_kagome",
        "pyramid4",
        "rocket4",
        "fiveray",
    ] {
        let flow = trace_worldlines(&builtin(name, 2).unwrap()).unwrap();
        assert!(flow.is_mirror_symmetric(), "{name}");
    }
}

#[test]
fn schmidt_rank_is_d_to_the_weighted_speed() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for spec in dual_unitary_builtins() {
        if spec.legs() > 8 || spec.solvability() != Solvability::CompletelyReducible {
            continue;
        }
        let exponent = trace_worldlines(&spec).unwrap().weighted_speed();
        assert!(
            exponent.is_integer(),
            "{}: Σ n|v| = {exponent}",
            spec.name()
        );
        let expected = spec.d().pow(exponent.to_integer() as u32);
        for _ in 0..3 {
            let gates = CellGates::random(&spec, &mut rng);
            assert_eq!(
                schmidt_rank(&spec, &gates, 1e-9).unwrap(),
                expected,
                "{}",
                spec.name()
            );
        }
    }
}

#[test]
fn swap_cell_has_full_schmidt_rank_only_for_du() {
    let du = builtin("du", 2).unwrap();
    assert_eq!(
        schmidt_rank(&du, &CellGates::swaps(&du).unwrap(), 1e-9).unwrap(),
        4
    );
}

#[test]
fn dsl_round_trip() {
    for spec in builtins() {
        let text = spec.to_dsl();
        let back = BaseGateSpec::from_dsl(&text).unwrap();
        assert_eq!(back, spec, "{}", spec.name());
    }
}

#[test]
fn families_start_with_the_four_leg_gates() {
    let flows = |s: &BaseGateSpec| trace_worldlines(s).unwrap();
    assert_eq!(
        flows(&family_u(4, 2).unwrap()),
        flows(&builtin("pyramid4", 2).unwrap())
    );
    assert_eq!(
        flows(&family_v(4, 2).unwrap()),
        flows(&builtin("rocket4", 2).unwrap())
    );
    assert!(family_u(3, 2).is_err());
}

#[test]
fn family_flows_have_slow_rays() {
    for n in 4..=8i64 {
        for spec in [
            family_u(n as usize, 2).unwrap(),
            family_v(n as usize, 2).unwrap(),
        ] {
            let flow = trace_worldlines(&spec).unwrap();
            let slow = Rational64::new(n - 3, n - 1);
            assert!(flow.multiplicity(slow) > 0, "{}", spec.name());
            assert!(
                flow.multiplicity(Rational64::from_integer(1)) > 0,
                "{}",
                spec.name()
            );
        }
    }
}

#[test]
fn swap_permutation_is_a_bijection() {
    for spec in dual_unitary_builtins() {
        let mut p = spec.swap_permutation().unwrap();
        p.sort_unstable();
        assert_eq!(p, (0..spec.legs()).collect::<Vec<_>>(), "{}", spec.name());
    }
}

#[test]
fn unknown_lattice_is_an_error() {
    assert!(builtin("no_such_lattice", 2).is_err());
}

fn spectrum_strategy() -> impl Strategy<Value = (usize, Vec<(Rational64, u32)>)> {
    (1usize..=6).prop_flat_map(|half| {
        prop::collection::vec((0i64..=6, 1i64..=6), 1..=half).prop_map(move |pairs| {
            // Mirror-symmetric spectrum with total multiplicity 2N.
            let mut entries = Vec::new();
            let mut left = 2 * half as u32;
            for (k, (num, den)) in pairs.iter().enumerate() {
                let v = Rational64::new(*num.min(den), *den);
                let take = if k + 1 == pairs.len() {
                    left / 2
                } else {
                    1.min(left / 2)
                };
                if take == 0 {
                    break;
                }
                entries.push((v, take));
                entries.push((-v, take));
                left -= 2 * take;
            }
            (half, entries)
        })
    })
}

proptest! {
    #[test]
    fn flow_spectrum_merges_and_validates((half, entries) in spectrum_strategy()) {
        let flow = FlowSpectrum::new(half, &entries).unwrap();
        prop_assert!(flow.is_mirror_symmetric());
        let total: u32 = flow.entries().iter().map(|e| e.1).sum();
        prop_assert_eq!(total as usize, 2 * half);
        let by_hand: Rational64 = entries.iter().map(|&(v, n)| v.abs() * Rational64::from_integer(n as i64)).sum();
        prop_assert_eq!(flow.weighted_speed(), by_hand);
        // Strictly increasing velocities after merging.
        prop_assert!(flow.entries().windows(2).all(|w| w[0].0 < w[1].0));
        prop_assert!(!flow.weighted_speed().is_negative() || flow.weighted_speed().is_zero());
    }

    #[test]
    fn flow_spectrum_rejects_wrong_totals(half in 1usize..6, extra in 1u32..4) {
        let entries = [(Rational64::zero(), 2 * half as u32 + extra)];
        prop_assert!(FlowSpectrum::new(half, &entries).is_err());
    }
}
