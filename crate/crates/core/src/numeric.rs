//! Dense numerical oracles: `Z_α` contraction, two-point correlation
//! functions, Floquet spectral form factors and flat-spectrum checks.

use std::collections::BTreeSet;

use nalgebra::DVector;
use num_complex::Complex64;
use num_rational::Rational64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagram::{build_zalpha, reduce_boundary};
use crate::error::{Error, Result};
use crate::gates::CMatrix;
use crate::lattice::{builtin, cell_operators, schmidt_spectrum, BaseGateSpec, CellGates, Element};
use crate::register::{apply_left, conjugate, reduce_to_site, register_dim};

/// Largest register dimension for the dense `Z_α` contraction.
pub const Z_DENSE_LIMIT: usize = 1 << 10;

/// Largest operator dimension for the brute-force correlation backend.
pub const CORRELATION_DENSE_LIMIT: usize = 1 << 12;

/// Largest Floquet dimension for the spectral form factor.
pub const SFF_DENSE_LIMIT: usize = 1 << 12;

/// How gates are assigned to the cells of a circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateDraw {
    /// Every dual-unitary placement is a SWAP.
    Swaps,
    /// One random draw shared by every cell (translation-invariant circuit).
    Uniform { seed: u64 },
    /// An independent random draw for every cell.
    RandomPerCell { seed: u64 },
}

impl GateDraw {
    /// Gates of the cell identified by `key`.
    pub fn cell(&self, spec: &BaseGateSpec, key: (i64, i64)) -> Result<CellGates> {
        match *self {
            GateDraw::Swaps => CellGates::swaps(spec),
            GateDraw::Uniform { seed } => Ok(CellGates::random(
                spec,
                &mut ChaCha8Rng::seed_from_u64(seed),
            )),
            GateDraw::RandomPerCell { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                // Independent stream per cell, derived from the pair key.
                let stream = (key.0 as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
                    ^ (key.1 as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
                rng.set_stream(stream);
                Ok(CellGates::random(spec, &mut rng))
            }
        }
    }
}

/// A gate of an extended circuit with its global legs.
#[derive(Debug, Clone)]
struct PlacedGate {
    legs: Vec<usize>,
    matrix: CMatrix,
}

fn place_cell(
    spec: &BaseGateSpec,
    gates: &CellGates,
    offset: usize,
    wrap: Option<usize>,
) -> Vec<PlacedGate> {
    cell_operators(spec, gates)
        .into_iter()
        .map(|op| PlacedGate {
            legs: op
                .legs
                .iter()
                .map(|&l| wrap.map_or(offset + l, |w| (offset + l) % w))
                .collect(),
            matrix: op.matrix,
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Z_α
// ---------------------------------------------------------------------------

/// Dense `Z_α(m, n) = tr[(tr_A |V⟩⟨V|)^α]` for the light-cone diamond `V`.
///
/// The diamond acts on `L = N(m+n)` legs. Cell `(i, j)` sits at leg offset
/// `N(i − j + n − 1)`; subsystem `A` consists of the first `mN` output legs
/// and the first `nN` input legs (the Square boundary).
pub fn contract_z_numeric(
    spec: &BaseGateSpec,
    draw: &GateDraw,
    m: usize,
    n: usize,
    alpha: u32,
) -> Result<f64> {
    if !(2..=3).contains(&alpha) {
        return Err(Error::InvalidParameter(format!(
            "α must be 2 or 3, got {alpha}"
        )));
    }
    if m == 0 || n == 0 {
        return Err(Error::InvalidParameter(format!(
            "diamond extent must be positive, got m={m}, n={n}"
        )));
    }
    let d = spec.d();
    let half = spec.half_width();
    let l = half * (m + n);
    let dim = register_dim(d, l, Z_DENSE_LIMIT)?;
    let mut v = CMatrix::identity(dim, dim);
    for s in 0..m + n - 1 {
        for i in 0..m {
            if s < i || s - i >= n {
                continue;
            }
            let j = s - i;
            let gates = draw.cell(spec, (i as i64, j as i64))?;
            let offset = half * (i + n - 1 - j);
            for g in place_cell(spec, &gates, offset, None) {
                apply_left(&mut v, l, d, &g.legs, &g.matrix);
            }
        }
    }
    // Realign V[out, in] into M[(out_A, in_A), (out_B, in_B)].
    let (a, b) = (m * half, n * half);
    let pa = d.pow((l - a) as u32);
    let pb = d.pow((l - b) as u32);
    let db = d.pow(b as u32);
    let mut mat = CMatrix::zeros(dim, dim);
    for out in 0..dim {
        let (oa, ob) = (out / pa, out % pa);
        for inp in 0..dim {
            let (ia, ib) = (inp / pb, inp % pb);
            mat[(oa * db + ia, ob * pb + ib)] = v[(out, inp)];
        }
    }
    let p = &mat * mat.adjoint();
    let tr = match alpha {
        2 => Complex64::new(p.norm_squared(), 0.0),
        _ => (&p * &p * &p).trace(),
    };
    if tr.im.abs() > 1e-10 * tr.re.abs().max(1.0) {
        return Err(Error::Internal(format!("imaginary residue {} in Z", tr.im)));
    }
    Ok(tr.re / (dim as f64).powi(alpha as i32))
}

/// Number of permutation-state overlaps `𝒩` of a completely reducible
/// `Z_α(m, n)`, in legs of `spec`. Compressed cells inherit the exponent of
/// their source lattice rescaled to their own legs.
pub fn reduction_exponent(spec: &BaseGateSpec, m: usize, n: usize) -> Result<Rational64> {
    let (source, scale) = match spec.compressed_from() {
        Some(name) => {
            let src = builtin(name, spec.d())?;
            let scale = Rational64::new(spec.half_width() as i64, src.half_width() as i64);
            (src, scale)
        }
        None => (spec.clone(), Rational64::from_integer(1)),
    };
    let r = reduce_boundary(&build_zalpha(&source, m, n)?);
    if !r.is_fully_reduced() {
        return Err(Error::NotReducible { m, n });
    }
    Ok(Rational64::from_integer(r.overlaps as i64) * scale)
}

/// `d^{−(α−1)𝒩}` predicted by the rewrite engine.
pub fn predicted_z(spec: &BaseGateSpec, m: usize, n: usize, alpha: u32) -> Result<f64> {
    let e = reduction_exponent(spec, m, n)?;
    let e = *e.numer() as f64 / *e.denom() as f64;
    Ok((spec.d() as f64).powf(-(alpha as f64 - 1.0) * e))
}

// ---------------------------------------------------------------------------
// Correlations
// ---------------------------------------------------------------------------

/// Gates of `layers` brickwork layers whose cells touch the leg window
/// `[lo, hi)`; cell offsets follow `parity·N + 2N·k`.
fn brickwork_gates(
    spec: &BaseGateSpec,
    draw: &GateDraw,
    layers: usize,
    lo: i64,
    hi: i64,
) -> Result<Vec<(i64, Vec<(Vec<i64>, CMatrix)>)>> {
    let half = spec.half_width() as i64;
    let width = 2 * half;
    let mut out = Vec::new();
    for tau in 0..layers {
        let shift = (tau as i64 % 2) * half;
        let kmin = (lo - shift - width + 1).div_euclid(width);
        let kmax = (hi - shift).div_euclid(width);
        for k in kmin..=kmax {
            let offset = shift + width * k;
            let gates = draw.cell(spec, (tau as i64, offset))?;
            let ops = cell_operators(spec, &gates)
                .into_iter()
                .map(|op| {
                    (
                        op.legs.iter().map(|&l| offset + l as i64).collect(),
                        op.matrix,
                    )
                })
                .collect();
            out.push((offset, ops));
        }
    }
    Ok(out)
}

fn check_single_site(op: &CMatrix, d: usize) -> Result<()> {
    if op.nrows() != d || op.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "single-site operator must be {d}×{d}"
        )));
    }
    let tr = op.trace();
    if tr.norm() > 1e-12 {
        return Err(Error::NotTraceless(tr.norm()));
    }
    Ok(())
}

/// Correlation query on an open chain of `sites` composite qudits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationPoint {
    /// Leg (elementary qudit) carrying `σ` at time 0.
    pub start_leg: i64,
    /// Leg carrying `ρ` after `layers` brickwork layers.
    pub end_leg: i64,
    pub layers: usize,
}

/// `C = tr[ρ · U σ U†] / D` by dense evolution of `σ` restricted to the
/// intersection of its forward light cone with the backward cone of `ρ`.
/// `U` is `layers` brickwork layers on a chain of `sites` composite qudits;
/// the cone must stay inside the chain.
pub fn correlation_cone(
    spec: &BaseGateSpec,
    draw: &GateDraw,
    sigma: &CMatrix,
    rho: &CMatrix,
    point: &CorrelationPoint,
    sites: usize,
) -> Result<Complex64> {
    let d = spec.d();
    check_single_site(sigma, d)?;
    check_single_site(rho, d)?;
    let legs = (sites * spec.half_width()) as i64;
    let reach = (2 * spec.half_width() * (point.layers + 1)) as i64;
    let lo = point.start_leg - reach;
    let hi = point.start_leg + reach;
    let cells = brickwork_gates(spec, draw, point.layers, lo, hi)?;
    let all: Vec<(Vec<i64>, CMatrix)> = cells.into_iter().flat_map(|(_, ops)| ops).collect();
    // Forward cone of σ.
    let mut supp: BTreeSet<i64> = BTreeSet::from([point.start_leg]);
    let mut forward = Vec::new();
    for (k, (ls, _)) in all.iter().enumerate() {
        if ls.iter().any(|l| supp.contains(l)) {
            supp.extend(ls.iter().copied());
            forward.push(k);
        }
    }
    if !supp.contains(&point.end_leg) {
        return Ok(Complex64::new(0.0, 0.0));
    }
    // Backward cone of ρ within the forward cone.
    let mut back: BTreeSet<i64> = BTreeSet::from([point.end_leg]);
    let mut keep = Vec::new();
    for &k in forward.iter().rev() {
        let ls = &all[k].0;
        if ls.iter().any(|l| back.contains(l)) {
            back.extend(ls.iter().copied());
            keep.push(k);
        }
    }
    keep.reverse();
    let mut region: BTreeSet<i64> = BTreeSet::from([point.start_leg, point.end_leg]);
    for &k in &keep {
        region.extend(all[k].0.iter().copied());
    }
    if region.iter().any(|&l| l < 0 || l >= legs) {
        return Err(Error::InvalidParameter(format!(
            "light cone leaves the chain of {sites} sites"
        )));
    }
    let local: Vec<i64> = region.iter().copied().collect();
    let idx = |g: i64| local.binary_search(&g).expect("leg in region");
    let s = local.len();
    let dim = register_dim(d, s, CORRELATION_DENSE_LIMIT)?;
    let mut x = CMatrix::identity(dim, dim);
    apply_left(&mut x, s, d, &[idx(point.start_leg)], sigma);
    for &k in &keep {
        let (ls, m) = &all[k];
        let sites_local: Vec<usize> = ls.iter().map(|&g| idx(g)).collect();
        conjugate(&mut x, s, d, &sites_local, m);
    }
    let red = reduce_to_site(&x, s, d, idx(point.end_leg));
    Ok((rho * red).trace() / Complex64::new(d as f64, 0.0))
}

/// Channel of a two-leg gate on an operator entering on one leg and
/// leaving on the other: `X ↦ tr_{stay}[U (X ⊗ 1) U†] / d`.
fn gate_channel(u: &CMatrix, d: usize, enter_left: bool, x: &CMatrix) -> CMatrix {
    let id = CMatrix::identity(d, d);
    let full = if enter_left {
        crate::gates::kron(x, &id)
    } else {
        crate::gates::kron(&id, x)
    };
    let y = u * full * u.adjoint();
    // The operator exits on the opposite leg: right when entering left.
    reduce_to_site(&y, 2, d, if enter_left { 1 } else { 0 })
}

/// `C` from the product of single-gate channels along the worldline that
/// starts at `point.start_leg`. Requires a dual-unitary cell and a point on
/// that worldline.
pub fn correlation_channel(
    spec: &BaseGateSpec,
    draw: &GateDraw,
    sigma: &CMatrix,
    rho: &CMatrix,
    point: &CorrelationPoint,
) -> Result<Complex64> {
    let d = spec.d();
    check_single_site(sigma, d)?;
    check_single_site(rho, d)?;
    spec.bonds()?;
    let half = spec.half_width() as i64;
    let width = 2 * half;
    let mut pos = point.start_leg;
    let mut op = sigma.clone();
    for tau in 0..point.layers {
        let shift = (tau as i64 % 2) * half;
        let offset = shift + width * (pos - shift).div_euclid(width);
        let gates = draw.cell(spec, (tau as i64, offset))?;
        for (el, m) in spec.elements().iter().zip(gates.matrices()) {
            if let Element::DualUnitary { bond } = *el {
                let b = offset + bond as i64;
                if pos == b {
                    op = gate_channel(m, d, true, &op);
                    pos = b + 1;
                } else if pos == b + 1 {
                    op = gate_channel(m, d, false, &op);
                    pos = b;
                }
            }
        }
    }
    if pos != point.end_leg {
        return Err(Error::OffWorldline {
            x: point.end_leg - point.start_leg,
            t: point.layers,
        });
    }
    Ok((rho * op).trace() / Complex64::new(d as f64, 0.0))
}

/// Leg reached after `layers` brickwork layers by the SWAP worldline from `start_leg`.
pub fn worldline_endpoint(spec: &BaseGateSpec, start_leg: i64, layers: usize) -> Result<i64> {
    let half = spec.half_width() as i64;
    let width = 2 * half;
    let mut pos = start_leg;
    for tau in 0..layers {
        let shift = (tau as i64 % 2) * half;
        let offset = shift + width * (pos - shift).div_euclid(width);
        for layer in spec.bonds()? {
            for b in layer {
                let b = offset + b as i64;
                if pos == b {
                    pos = b + 1;
                } else if pos == b + 1 {
                    pos = b;
                }
            }
        }
    }
    Ok(pos)
}

// ---------------------------------------------------------------------------
// Spectral form factor
// ---------------------------------------------------------------------------

/// One Floquet period (two brickwork layers) on a ring of `sites` composite qudits.
pub fn floquet_unitary(spec: &BaseGateSpec, draw: &GateDraw, sites: usize) -> Result<CMatrix> {
    if sites < 2 || sites % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "the ring needs an even number of sites ≥ 2, got {sites}"
        )));
    }
    let half = spec.half_width();
    let legs = sites * half;
    let d = spec.d();
    let dim = register_dim(d, legs, SFF_DENSE_LIMIT)?;
    let mut u = CMatrix::identity(dim, dim);
    for parity in 0..2 {
        for k in 0..sites / 2 {
            let offset = parity * half + 2 * half * k;
            let gates = draw.cell(spec, (parity as i64, k as i64))?;
            for g in place_cell(spec, &gates, offset, Some(legs)) {
                apply_left(&mut u, legs, d, &g.legs, &g.matrix);
            }
        }
    }
    Ok(u)
}

/// Eigenphases of a unitary matrix.
pub fn eigenphases(u: &CMatrix) -> Vec<f64> {
    let t = u.clone().schur().unpack().1;
    t.diagonal().iter().map(|z| z.arg()).collect()
}

/// `K(t) = |Σ_k e^{i t θ_k}|²`.
pub fn form_factor(phases: &[f64], t: usize) -> f64 {
    let z: Complex64 = phases
        .iter()
        .map(|&th| Complex64::from_polar(1.0, th * t as f64))
        .sum();
    z.norm_sqr()
}

/// Random-matrix predictions for the form factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RmtEnsemble {
    Cue,
    Coe,
}

/// Form factor of the circular ensembles at dimension `dim`.
pub fn rmt(kind: RmtEnsemble, dim: usize, t: usize) -> f64 {
    let (t, d) = (t as f64, dim as f64);
    match kind {
        RmtEnsemble::Cue => t.min(d),
        RmtEnsemble::Coe => {
            if t <= d {
                2.0 * t - t * (1.0 + 2.0 * t / d).ln()
            } else {
                2.0 * d - t * ((2.0 * t + d) / (2.0 * t - d)).ln()
            }
        }
    }
}

/// Averaged spectral form factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SffResult {
    pub dimension: usize,
    pub realizations: usize,
    pub times: Vec<usize>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Eigenphases of every realization, in realization order.
    pub phases: Vec<Vec<f64>>,
}

impl SffResult {
    /// Ensemble whose prediction fits the averaged form factor better, by
    /// the sum of squared deviations in units of the standard error.
    pub fn best_fit(&self) -> RmtEnsemble {
        let score = |kind| -> f64 {
            self.times
                .iter()
                .enumerate()
                .map(|(k, &t)| {
                    ((self.mean[k] - rmt(kind, self.dimension, t))
                        / self.stderr[k].max(f64::EPSILON))
                    .powi(2)
                })
                .sum()
        };
        if score(RmtEnsemble::Coe) < score(RmtEnsemble::Cue) {
            RmtEnsemble::Coe
        } else {
            RmtEnsemble::Cue
        }
    }

    /// CSV with columns `t, K, stderr, rmt_cue, rmt_coe`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,K,stderr,rmt_cue,rmt_coe\n");
        for (k, &t) in self.times.iter().enumerate() {
            s.push_str(&format!(
                "{t},{},{},{},{}\n",
                self.mean[k],
                self.stderr[k],
                rmt(RmtEnsemble::Cue, self.dimension, t),
                rmt(RmtEnsemble::Coe, self.dimension, t)
            ));
        }
        s
    }
}

/// Minimum number of realizations accepted by [`sff`].
pub const MIN_REALIZATIONS: usize = 10;

/// Spectral form factor of the Floquet circuit on a ring of `sites`
/// composite qudits, averaged over `realizations` independent draws of all
/// gates. Realization `r` uses seed `seed + r`, so the result does not depend
/// on the thread schedule.
pub fn sff(
    spec: &BaseGateSpec,
    sites: usize,
    t_max: usize,
    realizations: usize,
    seed: u64,
) -> Result<SffResult> {
    if realizations < MIN_REALIZATIONS {
        return Err(Error::InvalidParameter(format!(
            "at least {MIN_REALIZATIONS} realizations are required, got {realizations}"
        )));
    }
    let dim = register_dim(spec.d(), sites * spec.half_width(), SFF_DENSE_LIMIT)?;
    if t_max == 0 || t_max > 10 * dim {
        return Err(Error::InvalidParameter(format!(
            "t_max must lie in [1, {}], got {t_max}",
            10 * dim
        )));
    }
    let phases: Vec<Vec<f64>> = (0..realizations)
        .into_par_iter()
        .map(|r| {
            let draw = GateDraw::RandomPerCell {
                seed: seed.wrapping_add(r as u64),
            };
            floquet_unitary(spec, &draw, sites).map(|u| eigenphases(&u))
        })
        .collect::<Result<_>>()?;
    let times: Vec<usize> = (1..=t_max).collect();
    let m = realizations as f64;
    let mut mean = Vec::with_capacity(t_max);
    let mut stderr = Vec::with_capacity(t_max);
    for &t in &times {
        let ks = DVector::from_iterator(realizations, phases.iter().map(|p| form_factor(p, t)));
        let mu = ks.mean();
        let var = ks.iter().map(|k| (k - mu).powi(2)).sum::<f64>() / (m - 1.0);
        mean.push(mu);
        stderr.push((var / m).sqrt());
    }
    Ok(SffResult {
        dimension: dim,
        realizations,
        times,
        mean,
        stderr,
        phases,
    })
}

// ---------------------------------------------------------------------------
// Flat spectra
// ---------------------------------------------------------------------------

/// True when, for `trials` random instantiations, every nonzero
/// operator-Schmidt value of the composed base gate is the same within 1e-9.
pub fn flat_spectrum_check(spec: &BaseGateSpec, trials: usize, seed: u64) -> Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let gates = CellGates::random(spec, &mut rng);
        if !is_flat(&schmidt_spectrum(spec, &gates)?) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn is_flat(spectrum: &[f64]) -> bool {
    let max = spectrum.iter().cloned().fold(0.0, f64::max);
    let nonzero: Vec<f64> = spectrum
        .iter()
        .copied()
        .filter(|&s| s > 1e-7 * max)
        .collect();
    nonzero.iter().all(|&s| (s - max).abs() < 1e-9)
}
