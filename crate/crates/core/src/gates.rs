//! Two-site gates, complex Hadamard matrices and the algebraic primitives of
//! the folded calculus.
//!
//! Index convention: a two-site gate on qudits of dimension `d` is a
//! `d² × d²` matrix whose row index is `(a, b) ↦ a·d + b` (left qudit `a`,
//! right qudit `b`) and whose column index is `(c, e) ↦ c·d + e`.
//! The *realignment* reshuffles these indices as
//! `R[(a,c),(b,e)] = U[(a,b),(c,e)]`; a gate is dual-unitary exactly when its
//! realignment is unitary, which is also the statement that its operator-Schmidt
//! spectrum across the two qudits is flat.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Dense complex matrix used for all gates and operators.
pub type CMatrix = DMatrix<Complex64>;

/// Numerical tolerance for unitarity-type checks.
///
/// The default is `1e-10`; values of `1e-6` or larger are rejected since they
/// would no longer discriminate dual-unitary from generic gates.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Tolerance(f64);

impl Tolerance {
    /// Largest admissible tolerance (exclusive).
    pub const MAX: f64 = 1e-6;

    /// Creates a tolerance, checking `0 ≤ eps < 1e-6`.
    pub fn new(eps: f64) -> Result<Self> {
        if !(0.0..Self::MAX).contains(&eps) {
            return Err(Error::InvalidParameter(format!(
                "tolerance {eps} outside [0, {})",
                Self::MAX
            )));
        }
        Ok(Tolerance(eps))
    }

    /// The raw value.
    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance(1e-10)
    }
}

/// The two permutation states that appear as boundary conditions of the
/// replicated (folded) diagrams.
///
/// An overlap of unequal labels on one `d`-dimensional leg contributes a
/// factor `d^{1-α}`; equal labels contribute one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PermutationLabel {
    /// Identity pairing of the replicas.
    Circle,
    /// Cyclically shifted pairing of the replicas.
    Square,
}

impl PermutationLabel {
    /// The other label.
    pub fn flipped(self) -> Self {
        match self {
            PermutationLabel::Circle => PermutationLabel::Square,
            PermutationLabel::Square => PermutationLabel::Circle,
        }
    }
}

/// Origin of a two-site gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateKind {
    /// The exchange gate.
    Swap,
    /// Any other two-site unitary.
    Generic,
    /// A gate assembled from complex Hadamard matrices and controlled phases.
    ChmComposite,
}

/// A unitary acting on two qudits of dimension `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSiteGate {
    d: usize,
    kind: GateKind,
    matrix: CMatrix,
}

impl TwoSiteGate {
    /// Wraps a `d² × d²` matrix. Unitarity is not checked here; use
    /// [`is_unitary`] for that.
    pub fn new(d: usize, kind: GateKind, matrix: CMatrix) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidParameter(format!("local dimension {d} < 2")));
        }
        let n = d * d;
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "expected {n}×{n} matrix for d = {d}, got {}×{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(TwoSiteGate { d, kind, matrix })
    }

    /// The exchange gate `|a,b⟩ ↦ |b,a⟩`.
    pub fn swap(d: usize) -> Self {
        let n = d * d;
        let mut m = CMatrix::zeros(n, n);
        for a in 0..d {
            for b in 0..d {
                m[(b * d + a, a * d + b)] = Complex64::new(1.0, 0.0);
            }
        }
        TwoSiteGate {
            d,
            kind: GateKind::Swap,
            matrix: m,
        }
    }

    /// The identity on two qudits.
    pub fn identity(d: usize) -> Self {
        TwoSiteGate {
            d,
            kind: GateKind::Generic,
            matrix: CMatrix::identity(d * d, d * d),
        }
    }

    /// The diagonal controlled-phase gate `|a,b⟩ ↦ e^{iθ_ab}|a,b⟩`, with
    /// `phases[a·d + b] = θ_ab`.
    pub fn controlled_phase(d: usize, phases: &[f64]) -> Result<Self> {
        if phases.len() != d * d {
            return Err(Error::DimensionMismatch(format!(
                "expected {} phases, got {}",
                d * d,
                phases.len()
            )));
        }
        let m = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            d * d,
            phases.iter().map(|&t| Complex64::from_polar(1.0, t)),
        ));
        TwoSiteGate::new(d, GateKind::Generic, m)
    }

    /// Local dimension of each qudit.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Gate family.
    pub fn kind(&self) -> GateKind {
        self.kind
    }

    /// The dense matrix.
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// Consumes the gate and returns the dense matrix.
    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    /// Product `self · other` (apply `other` first).
    pub fn compose(&self, other: &TwoSiteGate) -> Result<TwoSiteGate> {
        if self.d != other.d {
            return Err(Error::DimensionMismatch(format!(
                "cannot compose gates on d = {} and d = {}",
                self.d, other.d
            )));
        }
        let kind = if self.kind == other.kind {
            self.kind
        } else {
            GateKind::Generic
        };
        Ok(TwoSiteGate {
            d: self.d,
            kind,
            matrix: &self.matrix * &other.matrix,
        })
    }

    /// Serializable record `{d, kind, rows}` with entries as `[re, im]` pairs.
    pub fn to_record(&self) -> GateRecord {
        let n = self.d * self.d;
        let rows = (0..n)
            .map(|r| {
                (0..n)
                    .map(|c| [self.matrix[(r, c)].re, self.matrix[(r, c)].im])
                    .collect()
            })
            .collect();
        GateRecord {
            d: self.d,
            kind: self.kind,
            rows,
        }
    }

    /// Inverse of [`TwoSiteGate::to_record`].
    pub fn from_record(rec: &GateRecord) -> Result<Self> {
        let n = rec.d * rec.d;
        if rec.rows.len() != n || rec.rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch(format!(
                "gate record for d = {} must have {n}×{n} entries",
                rec.d
            )));
        }
        let m = CMatrix::from_fn(n, n, |r, c| {
            Complex64::new(rec.rows[r][c][0], rec.rows[r][c][1])
        });
        TwoSiteGate::new(rec.d, rec.kind, m)
    }

    /// JSON text of [`TwoSiteGate::to_record`]; round-trips bit-exactly.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_record())?)
    }

    /// Parses the JSON produced by [`TwoSiteGate::to_json`].
    pub fn from_json(text: &str) -> Result<Self> {
        let rec: GateRecord = serde_json::from_str(text)?;
        TwoSiteGate::from_record(&rec)
    }
}

/// JSON form of a [`TwoSiteGate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateRecord {
    /// Local dimension.
    pub d: usize,
    /// Gate family.
    pub kind: GateKind,
    /// Matrix rows; each entry is `[re, im]`.
    pub rows: Vec<Vec<[f64; 2]>>,
}

/// A `d × d` matrix with unit-modulus entries and `H·H† = d·1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexHadamard {
    d: usize,
    matrix: CMatrix,
}

impl ComplexHadamard {
    /// Wraps a matrix after checking the defining properties within `tol`.
    pub fn new(matrix: CMatrix, tol: Tolerance) -> Result<Self> {
        let d = matrix.nrows();
        if matrix.ncols() != d || d < 2 {
            return Err(Error::DimensionMismatch(
                "complex Hadamard matrix must be square, d ≥ 2".into(),
            ));
        }
        let h = ComplexHadamard { d, matrix };
        if !h.satisfies_invariants(tol) {
            return Err(Error::InvalidParameter(
                "matrix is not a complex Hadamard matrix".into(),
            ));
        }
        Ok(h)
    }

    /// The discrete Fourier matrix `F_ab = exp(2πi·ab/d)`.
    pub fn fourier(d: usize) -> Self {
        let m = CMatrix::from_fn(d, d, |a, b| {
            Complex64::from_polar(1.0, 2.0 * PI * ((a * b) % d) as f64 / d as f64)
        });
        ComplexHadamard { d, matrix: m }
    }

    /// Dimension.
    pub fn d(&self) -> usize {
        self.d
    }

    /// The (unnormalised) matrix.
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// `|H_ab| = 1` for all entries and `H·H† = d·1`, within `tol`.
    pub fn satisfies_invariants(&self, tol: Tolerance) -> bool {
        let eps = tol.value().max(1e-12);
        let moduli_ok = self.matrix.iter().all(|z| (z.norm() - 1.0).abs() <= eps);
        let prod = &self.matrix * self.matrix.adjoint();
        let target = CMatrix::identity(self.d, self.d) * Complex64::new(self.d as f64, 0.0);
        moduli_ok && max_abs_diff(&prod, &target) <= eps * self.d as f64
    }

    /// The single-site unitary `H/√d`.
    pub fn as_single_site_unitary(&self) -> CMatrix {
        &self.matrix * Complex64::new(1.0 / (self.d as f64).sqrt(), 0.0)
    }

    /// The two-site controlled phase `|a,b⟩ ↦ H_ab |a,b⟩`.
    pub fn as_controlled_phase(&self) -> TwoSiteGate {
        let d = self.d;
        let diag = nalgebra::DVector::from_iterator(
            d * d,
            (0..d * d).map(|k| self.matrix[(k / d, k % d)]),
        );
        TwoSiteGate {
            d,
            kind: GateKind::ChmComposite,
            matrix: CMatrix::from_diagonal(&diag),
        }
    }
}

/// Largest entrywise modulus of `a − b`.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Realigned matrix `R[(a,c),(b,e)] = U[(a,b),(c,e)]`.
pub fn realign(g: &TwoSiteGate) -> CMatrix {
    realign_matrix(g.matrix(), g.d())
}

/// Realignment of a raw `d² × d²` matrix (see [`realign`]).
pub fn realign_matrix(u: &CMatrix, d: usize) -> CMatrix {
    let n = d * d;
    let mut r = CMatrix::zeros(n, n);
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                for e in 0..d {
                    r[(a * d + c, b * d + e)] = u[(a * d + b, c * d + e)];
                }
            }
        }
    }
    r
}

fn is_unitary_matrix(m: &CMatrix, eps: f64) -> bool {
    if !m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return false;
    }
    let n = m.nrows();
    let id = CMatrix::identity(n, n);
    max_abs_diff(&(m.adjoint() * m), &id) <= eps && max_abs_diff(&(m * m.adjoint()), &id) <= eps
}

/// `U†U = UU† = 1` within `tol` (max-entry deviation).
pub fn is_unitary(g: &TwoSiteGate, tol: Tolerance) -> bool {
    is_unitary_matrix(g.matrix(), tol.value())
}

/// Unitarity of the realignment within `tol`.
pub fn is_dual_unitary(g: &TwoSiteGate, tol: Tolerance) -> bool {
    is_unitary_matrix(&realign(g), tol.value())
}

/// A Haar-random `d × d` unitary drawn from `rng` (QR of a Ginibre matrix
/// with the phase of the diagonal of `R` removed).
pub fn haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    let z = CMatrix::from_fn(d, d, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) / 2f64.sqrt()
    });
    let qr = z.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 {
            rjj / rjj.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// A random dual-unitary gate `(u₁⊗u₂)·SWAP·CP(θ)·(w₁⊗w₂)` drawn from `rng`.
pub fn random_dual_unitary_with<R: Rng + ?Sized>(d: usize, rng: &mut R) -> TwoSiteGate {
    let u1 = haar_unitary(d, rng);
    let u2 = haar_unitary(d, rng);
    let w1 = haar_unitary(d, rng);
    let w2 = haar_unitary(d, rng);
    let phases: Vec<f64> = (0..d * d).map(|_| rng.random::<f64>() * 2.0 * PI).collect();
    let cp = TwoSiteGate::controlled_phase(d, &phases).expect("phase count matches");
    let swap = TwoSiteGate::swap(d);
    let m = kron(&u1, &u2) * swap.matrix() * cp.matrix() * kron(&w1, &w2);
    TwoSiteGate {
        d,
        kind: GateKind::Generic,
        matrix: m,
    }
}

/// Deterministic random dual-unitary gate for a given seed.
pub fn random_dual_unitary(d: usize, seed: u64) -> Result<TwoSiteGate> {
    if d < 2 {
        return Err(Error::InvalidParameter(format!("local dimension {d} < 2")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(random_dual_unitary_with(d, &mut rng))
}

/// A Haar-random two-site unitary (generically not dual-unitary).
pub fn random_unitary(d: usize, seed: u64) -> Result<TwoSiteGate> {
    if d < 2 {
        return Err(Error::InvalidParameter(format!("local dimension {d} < 2")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TwoSiteGate::new(d, GateKind::Generic, haar_unitary(d * d, &mut rng))
}

/// A random complex Hadamard matrix `D₁·F_d·D₂` in the Fourier orbit, drawn from `rng`.
pub fn random_chm_with<R: Rng + ?Sized>(d: usize, rng: &mut R) -> ComplexHadamard {
    let f = ComplexHadamard::fourier(d);
    let d1: Vec<Complex64> = (0..d)
        .map(|_| Complex64::from_polar(1.0, rng.random::<f64>() * 2.0 * PI))
        .collect();
    let d2: Vec<Complex64> = (0..d)
        .map(|_| Complex64::from_polar(1.0, rng.random::<f64>() * 2.0 * PI))
        .collect();
    let m = CMatrix::from_fn(d, d, |a, b| d1[a] * f.matrix[(a, b)] * d2[b]);
    ComplexHadamard { d, matrix: m }
}

/// Deterministic random complex Hadamard matrix for a given seed.
pub fn random_chm(d: usize, seed: u64) -> Result<ComplexHadamard> {
    if d < 2 {
        return Err(Error::InvalidParameter(format!("local dimension {d} < 2")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(random_chm_with(d, &mut rng))
}

/// Singular values of the realignment, sorted in decreasing order and
/// normalised so that their squares sum to `d²`.
pub fn operator_schmidt_spectrum(g: &TwoSiteGate) -> Vec<f64> {
    schmidt_values_of_realigned(&realign(g), g.d())
}

/// Singular values of an already realigned matrix, normalised as in
/// [`operator_schmidt_spectrum`].
pub fn schmidt_values_of_realigned(r: &CMatrix, d: usize) -> Vec<f64> {
    let mut s: Vec<f64> = r.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let norm2: f64 = s.iter().map(|x| x * x).sum();
    if norm2 > 0.0 {
        let scale = ((d * d) as f64 / norm2).sqrt();
        for x in &mut s {
            *x *= scale;
        }
    }
    s
}

/// Number of Schmidt values above `tol · max` (the operator-Schmidt rank).
pub fn schmidt_rank_of_spectrum(spectrum: &[f64], tol: f64) -> usize {
    let max = spectrum.iter().copied().fold(0.0, f64::max);
    spectrum.iter().filter(|&&x| x > tol * max).count()
}
