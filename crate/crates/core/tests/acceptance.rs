//! Acceptance criteria. Every test prints one `PASS`/`FAIL` line for its
//! criterion before asserting, so `cargo test --test acceptance -- --nocapture`
//! gives a compact report.

use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_rational::Rational64;
use num_traits::Signed;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use reducible::defects::{
    crossing_v0, defect_diagram, family_pattern, is_kbody_irreducible, scan_kbody,
    ObstructionPattern,
};
use reducible::diagram::{elt_from_reduction, is_completely_reducible};
use reducible::elt::{
    continuous_elt, curvature_check, elt_curve, elt_point, v_entanglement, ve_from_schmidt,
    FlowDensity,
};
use reducible::knots::{kauffman_bracket, rii_unlink, unfold_diagram, unfold_to_link, z2_check};
use reducible::lattice::{
    builtin, compress, family_u, family_v, trace_worldlines, BaseGateSpec, CellGates, Solvability,
    BUILTIN_NAMES,
};
use reducible::numeric::{
    contract_z_numeric, correlation_channel, correlation_cone, flat_spectrum_check, predicted_z,
    rmt, sff, worldline_endpoint, CorrelationPoint, GateDraw, RmtEnsemble,
};

type CMatrix = DMatrix<Complex64>;

fn r(n: i64, d: i64) -> Rational64 {
    Rational64::new(n, d)
}

/// Criteria run one at a time so that each runtime budget measures only its own work.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL
        .lock()
        .unwrap_or_else(|poisoned| poisoned.into_inner())
}

/// Prints the criterion line and panics on failure.
fn report(id: u32, title: &str, failures: &[String], elapsed: Duration, budget: Duration) {
    let mut failures = failures.to_vec();
    if elapsed > budget {
        failures.push(format!(
            "runtime {:.1?} exceeds budget {:.0?}",
            elapsed, budget
        ));
    }
    if failures.is_empty() {
        println!("criterion {id:>2}: PASS  {title} ({elapsed:.2?})");
    } else {
        println!("criterion {id:>2}: FAIL  {title} ({elapsed:.2?})");
        for f in &failures {
            println!("      - {f}");
        }
        panic!("criterion {id} failed: {} problem(s)", failures.len());
    }
}

/// Lattices with exactly known line tensions, paired with closed forms.
fn exact_lattices() -> Vec<(BaseGateSpec, Box<dyn Fn(Rational64) -> Rational64>)> {
    let one = r(1, 1);
    let third = r(1, 3);
    let mut out: Vec<(BaseGateSpec, Box<dyn Fn(Rational64) -> Rational64>)> = vec![
        (
            builtin("du", 2).unwrap(),
            Box::new(move |v: Rational64| if v.abs() <= one { one } else { v.abs() }),
        ),
        (
            builtin("kagome", 2).unwrap(),
            Box::new(move |v: Rational64| {
                if v.abs() <= one {
                    (one + v.abs()) / 2
                } else {
                    v.abs()
                }
            }),
        ),
        (
            builtin("nested_kagome", 2).unwrap(),
            Box::new(move |v: Rational64| {
                if v.abs() <= one {
                    (one + v.abs() * 3) / 4
                } else {
                    v.abs()
                }
            }),
        ),
    ];
    let four_ray = move |v: Rational64| {
        if v.abs() <= third {
            r(1, 2)
        } else if v.abs() <= one {
            (one + v.abs() * 3) / 4
        } else {
            v.abs()
        }
    };
    out.push((builtin("pyramid4", 2).unwrap(), Box::new(four_ray)));
    out.push((builtin("rocket4", 2).unwrap(), Box::new(four_ray)));
    out.push((
        builtin("fiveray", 2).unwrap(),
        Box::new(move |v: Rational64| {
            if v.abs() <= third {
                (r(2, 1) + v.abs()) / 5
            } else if v.abs() <= one {
                (one + v.abs() * 4) / 5
            } else {
                v.abs()
            }
        }),
    ));
    for n in 4..=8i64 {
        let family = move |v: Rational64| {
            if v.abs() <= r(n - 3, n - 1) {
                r(n - 2, n)
            } else if v.abs() <= one {
                (one + v.abs() * (n - 1)) / n
            } else {
                v.abs()
            }
        };
        out.push((family_u(n as usize, 2).unwrap(), Box::new(family)));
        out.push((family_v(n as usize, 2).unwrap(), Box::new(family)));
    }
    out
}

#[test]
fn criterion_01_exact_elt() {
    let _guard = serial();
    let start = Instant::now();
    let vs = [
        r(0, 1),
        r(1, 5),
        r(1, 4),
        r(1, 3),
        r(1, 2),
        r(2, 3),
        r(1, 1),
        r(3, 2),
    ];
    let mut failures = Vec::new();
    for (spec, closed) in exact_lattices() {
        let curve = elt_curve(&trace_worldlines(&spec).unwrap());
        for &v in &vs {
            for v in [v, -v] {
                let got = curve.value(v);
                if got != closed(v) {
                    failures.push(format!(
                        "{}: E({v}) = {got}, expected {}",
                        spec.name(),
                        closed(v)
                    ));
                }
            }
        }
    }
    report(
        1,
        "exact line tensions",
        &failures,
        start.elapsed(),
        Duration::from_secs(1),
    );
}

#[test]
fn criterion_02_reduction_matches_worldlines() {
    let _guard = serial();
    let start = Instant::now();
    let mut failures = Vec::new();
    for (spec, _) in exact_lattices() {
        let flow = trace_worldlines(&spec).unwrap();
        for v in [r(0, 1), r(1, 3), r(1, 1)] {
            let measured = elt_from_reduction(&spec, v, 12).unwrap();
            if measured.value != elt_point(&flow, v) || !measured.stabilized {
                failures.push(format!(
                    "{} at v = {v}: reduction {} (stabilized: {}), worldlines {}",
                    spec.name(),
                    measured.value,
                    measured.stabilized,
                    elt_point(&flow, v)
                ));
            }
        }
    }
    report(
        2,
        "reduction and worldline line tensions agree",
        &failures,
        start.elapsed(),
        Duration::from_secs(30),
    );
}

#[test]
fn criterion_03_reducibility_classification() {
    let _guard = serial();
    let start = Instant::now();
    let mut failures = Vec::new();
    for (spec, _) in exact_lattices() {
        for m in 1..=5 {
            for n in 1..=5 {
                if !is_completely_reducible(&spec, m, n).unwrap() {
                    failures.push(format!("{} not reducible at ({m}, {n})", spec.name()));
                }
            }
        }
    }
    for name in ["pyramid3", "twoloc"] {
        let spec = builtin(name, 2).unwrap();
        for n in 2..=4 {
            if is_completely_reducible(&spec, n, n).unwrap() {
                failures.push(format!("{name} reducible at ({n}, {n})"));
            }
        }
    }
    for name in BUILTIN_NAMES {
        let spec = match builtin(name, 2) {
            Ok(s) => s,
            Err(_) => continue, // parametric families
        };
        if spec.compressed_from().is_some() {
            continue; // complex-Hadamard realisations carry no worldlines of their own
        }
        let crossing = crossing_v0(&spec).unwrap().crossing;
        let expected = matches!(*name, "pyramid3" | "twoloc");
        if crossing != expected {
            failures.push(format!(
                "crossing_v0({name}) = {crossing}, expected {expected}"
            ));
        }
    }
    report(
        3,
        "reducibility classification",
        &failures,
        start.elapsed(),
        Duration::from_secs(10),
    );
}

#[test]
fn criterion_04_defect_catalogue() {
    let _guard = serial();
    let start = Instant::now();
    let mut failures = Vec::new();

    let twoloc = builtin("twoloc", 2).unwrap();
    let one_body = scan_kbody(&twoloc, 1, 1, 1).unwrap();
    if one_body.len() != 2
        || one_body
            .iter()
            .any(|o| o.pattern != ObstructionPattern::OneBody)
    {
        failures.push(format!(
            "twoloc (1,1): {} one-body obstructions, expected 2",
            one_body.len()
        ));
    }

    let three = builtin("threeunsolv", 2).unwrap();
    let one = scan_kbody(&three, 2, 2, 1).unwrap();
    if !one.is_empty() {
        failures.push(format!(
            "threeunsolv (2,2): {} one-body obstructions, expected none",
            one.len()
        ));
    }
    let two = scan_kbody(&three, 2, 2, 2).unwrap();
    if !two
        .iter()
        .any(|o| o.pattern == ObstructionPattern::TwoBodyI)
    {
        failures.push("threeunsolv (2,2): no two-body-i obstruction".into());
    }

    let pyr3 = builtin("pyramid3", 2).unwrap();
    let mut found = 0;
    for n in 1..=4 {
        let obs = scan_kbody(&pyr3, n, n, 1).unwrap();
        found += obs.len();
        for o in &obs {
            let col = o.positions[0].column();
            if col.abs() > 2 {
                failures.push(format!("pyramid3 ({n},{n}): obstruction at column {col}"));
            }
        }
    }

    if found == 0 {
        failures.push("pyramid3: no one-body obstruction for n ≤ 4".into());
    }

    for n in 1..=5 {
        let dgm = family_pattern(n).unwrap();
        if !is_kbody_irreducible(&dgm).unwrap() {
            failures.push(format!(
                "ladder pattern with {n} defects is not {n}-body irreducible"
            ));
        }
    }
    report(
        4,
        "defect catalogue",
        &failures,
        start.elapsed(),
        Duration::from_secs(60),
    );
}

#[test]
fn criterion_05_numeric_oracle() {
    let _guard = serial();
    let start = Instant::now();
    let mut failures = Vec::new();
    let draws = 5u64;
    let mut check = |spec: &BaseGateSpec, m: usize, n: usize, alpha: u32| {
        let expected = predicted_z(spec, m, n, alpha).unwrap();
        for seed in 0..draws {
            let z =
                contract_z_numeric(spec, &GateDraw::RandomPerCell { seed }, m, n, alpha).unwrap();
            if (z - expected).abs() > 1e-10 {
                failures.push(format!(
                    "{} (m={m}, n={n}, α={alpha}, seed {seed}): {z} vs {expected}",
                    spec.name()
                ));
            }
        }
    };
    let du = builtin("du", 2).unwrap();
    for alpha in [2, 3] {
        for m in 1..=3 {
            for n in 1..=3 {
                check(&du, m, n, alpha);
            }
        }
    }
    let kagome = builtin("kagome", 2).unwrap();
    for m in 1..=2 {
        for n in 1..=2 {
            check(&kagome, m, n, 2);
        }
    }
    for name in ["pyramid4_chm", "rocket4_chm"] {
        let spec = builtin(name, 2).unwrap();
        for k in 1..=2 {
            check(&spec, k, k, 2);
        }
    }

    let twoloc = builtin("twoloc", 2).unwrap();
    let zs: Vec<f64> = (0..draws)
        .map(|seed| {
            contract_z_numeric(&twoloc, &GateDraw::RandomPerCell { seed }, 1, 1, 2).unwrap()
        })
        .collect();
    let (lo, hi) = zs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &z| {
            (a.min(z), b.max(z))
        });
    let spread = (hi - lo) / hi.abs();
    if spread <= 1e-4 {
        failures.push(format!(
            "twoloc relative spread {spread:.3e} is not gate dependent"
        ));
    }
    report(
        5,
        "dense contraction matches the reduction exponent",
        &failures,
        start.elapsed(),
        Duration::from_secs(600),
    );
}

#[test]
fn criterion_06_flat_spectra_and_schmidt_rank() {
    let _guard = serial();
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut specs: Vec<BaseGateSpec> = BUILTIN_NAMES
        .iter()
        .filter_map(|name| builtin(name, 2).ok())
        .filter(|s| s.solvability() == Solvability::CompletelyReducible)
        .collect();
    specs.push(family_u(4, 2).unwrap());
    specs.push(family_v(4, 2).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for spec in &specs {
        if !flat_spectrum_check(spec, 10, 6).unwrap() {
            failures.push(format!("{}: spectrum not flat", spec.name()));
        }
        let gates = CellGates::random(spec, &mut rng);
        let ve = ve_from_schmidt(spec, &gates, 1e-9).unwrap();
        let worldline_spec = match spec.compressed_from() {
            Some(source) => builtin(source, 2).unwrap(),
            None => spec.clone(),
        };
        let exact = v_entanglement(&trace_worldlines(&worldline_spec).unwrap());
        let exact = *exact.numer() as f64 / *exact.denom() as f64;
        if (ve - exact).abs() > 1e-9 {
            failures.push(format!(
                "{}: Schmidt-rank velocity {ve} vs {exact}",
                spec.name()
            ));
        }
    }
    report(
        6,
        "flat spectra and Schmidt rank relation",
        &failures,
        start.elapsed(),
        Duration::from_secs(120),
    );
}

#[test]
fn criterion_07_knots() {
    let _guard = serial();
    let start = Instant::now();
    let mut failures = Vec::new();
    let d = 2;
    for name in ["du", "pyramid4"] {
        let spec = builtin(name, d).unwrap();
        for m in 1..=3 {
            for n in 1..=3 {
                let unfolded = unfold_to_link(&spec, m, n).unwrap();
                let simplified = rii_unlink(&unfolded.link);
                if !simplified.unlinked {
                    failures.push(format!(
                        "{name} ({m},{n}): Reidemeister-II simplification left crossings"
                    ));
                }
                let report = z2_check(&spec, m, n, d, 7).unwrap();
                let from_components = report.components as i64 - report.terminals as i64;
                if report.diagram_exponent != Some(from_components)
                    || report.bracket_exponent != Some(from_components)
                {
                    failures.push(format!(
                        "{name} ({m},{n}): components give d^{from_components}, diagram {:?}, bracket {:?}",
                        report.diagram_exponent, report.bracket_exponent
                    ));
                }
                if !report.consistent {
                    failures.push(format!("{name} ({m},{n}): Z2 sources disagree: {report:?}"));
                }
                // Full state sum on the unsimplified link where affordable.
                if unfolded.link.crossing_count() <= 16 {
                    let value = kauffman_bracket(&unfolded.link)
                        .unwrap()
                        .evaluate_at_loop_value(d as i64)
                        .unwrap();
                    let expected = (d as i128).pow(simplified.components as u32);
                    if value != (expected, 0) {
                        failures.push(format!(
                            "{name} ({m},{n}): full bracket {value:?}, expected ({expected}, 0)"
                        ));
                    }
                }
            }
        }
    }

    // The one-body obstruction of the two-local lattice is a genuine link.
    let twoloc = builtin("twoloc", d).unwrap();
    for ob in scan_kbody(&twoloc, 1, 1, 1).unwrap() {
        let dgm = defect_diagram(&twoloc, 1, 1, &ob.positions).unwrap();
        let link = unfold_diagram(&dgm).unwrap().link;
        let simplified = rii_unlink(&link);
        let linked = simplified
            .link
            .linking_numbers()
            .iter()
            .any(|&(_, _, lk)| lk.abs() == 1);
        if simplified.unlinked || !linked {
            failures.push(format!(
                "twoloc obstruction {:?}: unlinked = {}, linking numbers {:?}",
                ob.positions,
                simplified.unlinked,
                simplified.link.linking_numbers()
            ));
        }
    }
    report(
        7,
        "link unfolding, unlinking and bracket",
        &failures,
        start.elapsed(),
        Duration::from_secs(120),
    );
}

fn pauli(which: char) -> CMatrix {
    let (o, i) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0));
    let z = Complex64::new(0.0, 0.0);
    match which {
        'x' => CMatrix::from_row_slice(2, 2, &[z, o, o, z]),
        'y' => CMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        _ => CMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
    }
}

#[test]
fn criterion_08_correlations() {
    let _guard = serial();
    let start = Instant::now();
    let mut failures = Vec::new();
    let du = builtin("du", 2).unwrap();
    let sites = 10;
    let draw = GateDraw::RandomPerCell { seed: 8 };
    let paulis = ['x', 'y', 'z'];
    for t in 1..=4usize {
        let x0 = 5i64;
        for x in -(t as i64)..=(t as i64) {
            let point = CorrelationPoint {
                start_leg: x0,
                end_leg: x0 + x,
                layers: t,
            };
            for &a in &paulis {
                for &b in &paulis {
                    let cone =
                        correlation_cone(&du, &draw, &pauli(a), &pauli(b), &point, sites).unwrap();
                    if x.abs() < t as i64 {
                        if cone.norm() > 1e-12 {
                            failures.push(format!(
                                "t={t}, x={x}, {a}{b}: C = {cone} inside the light cone"
                            ));
                        }
                    } else if worldline_endpoint(&du, x0, t).unwrap() == x0 + x {
                        let channel =
                            correlation_channel(&du, &draw, &pauli(a), &pauli(b), &point).unwrap();
                        if (channel - cone).norm() > 1e-10 {
                            failures.push(format!(
                                "t={t}, x={x}, {a}{b}: channel {channel} vs brute force {cone}"
                            ));
                        }
                    }
                }
            }
        }
    }

    // Slow worldline of the four-pyramid lattice.
    let pyr = builtin("pyramid4", 2).unwrap();
    let draw = GateDraw::RandomPerCell { seed: 9 };
    let (start_leg, layers) = (9i64, 3usize);
    let end_leg = worldline_endpoint(&pyr, start_leg, layers).unwrap();
    let v = r(
        (end_leg - start_leg) / pyr.half_width() as i64,
        layers as i64,
    );
    if v.abs() != r(1, 3) {
        failures.push(format!(
            "pyramid4 worldline from leg {start_leg} has velocity {v}, expected ±1/3"
        ));
    }
    let point = CorrelationPoint {
        start_leg,
        end_leg,
        layers,
    };
    let cone = correlation_cone(&pyr, &draw, &pauli('z'), &pauli('z'), &point, 8).unwrap();
    let channel = correlation_channel(&pyr, &draw, &pauli('z'), &pauli('z'), &point).unwrap();
    if (cone - channel).norm() > 1e-10 {
        failures.push(format!(
            "pyramid4 v=1/3: channel {channel} vs brute force {cone}"
        ));
    }
    if cone.norm() < 1e-6 {
        failures.push(format!("pyramid4 v=1/3: correlation {cone} vanishes"));
    }
    report(
        8,
        "correlations on and off worldlines",
        &failures,
        start.elapsed(),
        Duration::from_secs(300),
    );
}

#[test]
fn criterion_09_spectral_form_factor() {
    let _guard = serial();
    let start = Instant::now();
    let mut failures = Vec::new();
    let du = builtin("du", 2).unwrap();
    let result = sff(&du, 8, 30, 300, 9).unwrap();
    for (k, &t) in result.times.iter().enumerate() {
        let cue = rmt(RmtEnsemble::Cue, result.dimension, t);
        let z = (result.mean[k] - cue) / result.stderr[k];
        if z.abs() > 3.0 {
            let kind = if z < 0.0 { "dip" } else { "excess" };
            failures.push(format!(
                "t={t}: K = {:.3} vs CUE {cue}, {kind} of {z:.2} standard errors",
                result.mean[k]
            ));
        }
    }
    report(
        9,
        "spectral form factor follows CUE",
        &failures,
        start.elapsed(),
        Duration::from_secs(1200),
    );
}

#[test]
fn criterion_10_continuous_density() {
    let _guard = serial();
    let start = Instant::now();
    let mut failures = Vec::new();
    let uniform = FlowDensity::uniform();
    for k in 0..10 {
        let v = k as f64 / 10.0;
        let e = continuous_elt(&uniform, v).unwrap();
        if (e - (1.0 + v * v) / 2.0).abs() > 1e-8 {
            failures.push(format!("E({v}) = {e}, expected {}", (1.0 + v * v) / 2.0));
        }
        if k > 0 {
            let c = curvature_check(&uniform, v).unwrap();
            if (c - 2.0 * uniform.value(v)).abs() > 1e-3 {
                failures.push(format!(
                    "curvature at {v}: {c}, expected {}",
                    2.0 * uniform.value(v)
                ));
            }
        }
    }
    report(
        10,
        "continuous flow densities",
        &failures,
        start.elapsed(),
        Duration::from_secs(1),
    );
}

#[test]
fn compressed_cells_are_built_from_their_sources() {
    // Sanity link between criterion 5's compressed builtins and `compress`.
    for (name, source) in [("pyramid4_chm", "pyramid4"), ("rocket4_chm", "rocket4")] {
        let built = builtin(name, 2).unwrap();
        let direct = compress(&builtin(source, 2).unwrap()).unwrap();
        assert_eq!(built.legs(), direct.legs());
        assert_eq!(built.compressed_from(), Some(source));
    }
}
