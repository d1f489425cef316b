//! Base gates (unit cells), their brickwork tiling, SWAP-circuit worldlines and
//! the builtin library of lattices.
//!
//! # Conventions
//!
//! * A base gate acts on `2N` legs of local dimension `d`; legs `0..N` form the
//!   left composite qudit and `N..2N` the right one (`q = d^N`).
//! * Layers are listed bottom (earliest) to top. A dual-unitary placement at
//!   bond `b` acts on legs `(b, b+1)` with `b` as the left qudit.
//! * The brickwork tiling places cells at leg offsets `s·N + 2N·k` in
//!   brickwork layer `s`. One time unit is one brickwork layer, one space unit
//!   one composite qudit, so the light cone is `|v| = 1`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_rational::Rational64;
use num_traits::Signed;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gates::{
    operator_schmidt_spectrum, random_chm_with, random_dual_unitary_with, realign_matrix,
    schmidt_rank_of_spectrum, schmidt_values_of_realigned, CMatrix, GateKind, TwoSiteGate,
};
use crate::register::{apply_left, register_dim};

/// Largest dense dimension `d^{2N}` for which a base gate is composed densely.
pub const DENSE_CELL_LIMIT: usize = 4096;

/// One placement inside a base gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Element {
    /// A generic dual-unitary two-site gate on legs `(bond, bond+1)`.
    DualUnitary { bond: usize },
    /// A single-site unitary `H/√d` built from a complex Hadamard matrix.
    Hadamard { site: usize },
    /// A diagonal controlled phase `|a,b⟩ ↦ H_ab|a,b⟩` on legs `(bond, bond+1)`.
    ControlledPhase { bond: usize },
}

impl Element {
    /// Legs the element acts on, left to right.
    pub fn legs(&self) -> Vec<usize> {
        match *self {
            Element::DualUnitary { bond } | Element::ControlledPhase { bond } => {
                vec![bond, bond + 1]
            }
            Element::Hadamard { site } => vec![site],
        }
    }

    fn is_diagonal(&self) -> bool {
        matches!(self, Element::ControlledPhase { .. })
    }
}

impl Solvability {
    const KEYWORDS: [(Solvability, &'static str); 3] = [
        (Solvability::CompletelyReducible, "completely-reducible"),
        (Solvability::PartiallySolvable, "partially-solvable"),
        (
            Solvability::NotCompletelyReducible,
            "not-completely-reducible",
        ),
    ];

    /// Keyword used in the lattice description language.
    pub fn keyword(self) -> &'static str {
        Self::KEYWORDS
            .iter()
            .find(|k| k.0 == self)
            .map(|k| k.1)
            .expect("every variant has a keyword")
    }

    /// Inverse of [`Solvability::keyword`].
    pub fn from_keyword(s: &str) -> Option<Self> {
        Self::KEYWORDS.iter().find(|k| k.1 == s).map(|k| k.0)
    }
}

/// How much of the dynamics of a lattice is exactly solvable by reduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solvability {
    /// Every `Z_α(m, n)` reduces to permutation-state overlaps.
    CompletelyReducible,
    /// Reducible only in a region of velocities; the full line tension is not known.
    PartiallySolvable,
    /// Reduction gets stuck inside the light cone.
    NotCompletelyReducible,
}

/// A base gate: layered placements on `2N` legs of dimension `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseGateSpec {
    name: String,
    d: usize,
    half_width: usize,
    layers: Vec<Vec<Element>>,
    solvability: Solvability,
    compressed_from: Option<String>,
}

impl BaseGateSpec {
    /// Validates and builds a spec. Placements inside a layer must act on
    /// disjoint legs (diagonal controlled phases commute and may share legs
    /// with each other).
    pub fn new(
        name: impl Into<String>,
        d: usize,
        half_width: usize,
        layers: Vec<Vec<Element>>,
        solvability: Solvability,
    ) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidParameter(format!("local dimension {d} < 2")));
        }
        if half_width < 1 {
            return Err(Error::InvalidParameter(
                "half-width must be at least 1".into(),
            ));
        }
        let legs = 2 * half_width;
        for (li, layer) in layers.iter().enumerate() {
            let mut used = vec![false; legs];
            let mut diag_used = vec![false; legs];
            for el in layer {
                let ls = el.legs();
                if let Some(&bad) = ls.iter().find(|&&l| l >= legs) {
                    return Err(Error::PlacementOutOfRange {
                        layer: li,
                        detail: format!("{el:?} touches leg {bad} but the cell has {legs} legs"),
                    });
                }
                for &l in &ls {
                    let clash = used[l] || (!el.is_diagonal() && diag_used[l]);
                    if clash {
                        return Err(Error::OverlappingPlacement {
                            layer: li,
                            bond: ls[0],
                        });
                    }
                }
                for &l in &ls {
                    if el.is_diagonal() {
                        diag_used[l] = true;
                    } else {
                        used[l] = true;
                    }
                }
            }
        }
        Ok(BaseGateSpec {
            name: name.into(),
            d,
            half_width,
            layers,
            solvability,
            compressed_from: None,
        })
    }

    /// Convenience constructor for cells made of dual-unitary gates only.
    pub fn from_bonds(
        name: impl Into<String>,
        d: usize,
        half_width: usize,
        bonds: &[Vec<usize>],
        solvability: Solvability,
    ) -> Result<Self> {
        let layers = bonds
            .iter()
            .map(|l| {
                l.iter()
                    .map(|&bond| Element::DualUnitary { bond })
                    .collect()
            })
            .collect();
        Self::new(name, d, half_width, layers, solvability)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// `N`: the number of legs per composite qudit.
    pub fn half_width(&self) -> usize {
        self.half_width
    }

    /// `2N`.
    pub fn legs(&self) -> usize {
        2 * self.half_width
    }

    /// Composite local dimension `q = d^N`.
    pub fn q(&self) -> Result<usize> {
        register_dim(self.d, self.half_width, usize::MAX >> 1)
    }

    pub fn layers(&self) -> &[Vec<Element>] {
        &self.layers
    }

    pub fn solvability(&self) -> Solvability {
        self.solvability
    }

    /// For complex-Hadamard cells: the name of the dual-unitary cell they compress.
    pub fn compressed_from(&self) -> Option<&str> {
        self.compressed_from.as_deref()
    }

    /// All placements in application order (layer by layer, left to right).
    pub fn elements(&self) -> Vec<Element> {
        self.layers.iter().flatten().copied().collect()
    }

    /// Number of placements per cell.
    pub fn gate_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    /// True when every placement is a dual-unitary gate.
    pub fn is_dual_unitary_cell(&self) -> bool {
        self.layers
            .iter()
            .flatten()
            .all(|e| matches!(e, Element::DualUnitary { .. }))
    }

    /// Bonds of the dual-unitary placements, layer by layer.
    pub fn bonds(&self) -> Result<Vec<Vec<usize>>> {
        self.layers
            .iter()
            .map(|l| {
                l.iter()
                    .map(|e| match *e {
                        Element::DualUnitary { bond } => Ok(bond),
                        other => Err(Error::InvalidParameter(format!(
                            "cell `{}` contains the non-dual-unitary element {other:?}",
                            self.name
                        ))),
                    })
                    .collect()
            })
            .collect()
    }

    /// Same cell with a different local dimension.
    pub fn with_dimension(&self, d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidParameter(format!("local dimension {d} < 2")));
        }
        Ok(BaseGateSpec { d, ..self.clone() })
    }

    /// The permutation of legs realised when every placement is a SWAP:
    /// a particle entering at leg `l` leaves at leg `perm[l]`.
    pub fn swap_permutation(&self) -> Result<Vec<usize>> {
        let bonds = self.bonds()?;
        let mut perm: Vec<usize> = (0..self.legs()).collect();
        for layer in &bonds {
            for &b in layer {
                for p in perm.iter_mut() {
                    if *p == b {
                        *p = b + 1;
                    } else if *p == b + 1 {
                        *p = b;
                    }
                }
            }
        }
        Ok(perm)
    }

    /// Positions of a particle entering at leg `l` after each layer of the
    /// SWAP-substituted cell (the first entry is `l` itself).
    pub fn swap_path(&self, mut l: usize) -> Result<Vec<usize>> {
        let bonds = self.bonds()?;
        let mut path = vec![l];
        for layer in &bonds {
            for &b in layer {
                if l == b {
                    l = b + 1;
                    break;
                }
                if l == b + 1 {
                    l = b;
                    break;
                }
            }
            path.push(l);
        }
        Ok(path)
    }

    /// Renders the cell in the text description language.
    pub fn to_dsl(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("name {}\n", self.name));
        out.push_str(&format!("dim {}\n", self.d));
        out.push_str(&format!("legs {}\n", self.legs()));
        out.push_str(&format!("solvability {}\n", self.solvability.keyword()));
        if let Some(source) = &self.compressed_from {
            out.push_str(&format!("compressed-from {source}\n"));
        }
        for layer in &self.layers {
            out.push_str("layer:");
            for el in layer {
                match *el {
                    Element::DualUnitary { bond } => out.push_str(&format!(" ({bond})")),
                    Element::Hadamard { site } => out.push_str(&format!(" chm@{site}")),
                    Element::ControlledPhase { bond } => out.push_str(&format!(" cphase@{bond}")),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Parses the text description language:
    ///
    /// ```text
    /// # comment
    /// name kagome
    /// dim 2
    /// legs 4
    /// layer: (1)
    /// layer: (0) (2)
    /// ```
    ///
    /// Layers are bottom to top. Complex-Hadamard cells use `chm@site` and
    /// `cphase@bond` tokens. Parsed cells are tagged as not known to be
    /// reducible; the reduction engine decides.
    pub fn from_dsl(text: &str) -> Result<Self> {
        let mut name = String::from("custom");
        let mut d = None;
        let mut legs = None;
        let mut solvability = Solvability::NotCompletelyReducible;
        let mut compressed_from = None;
        let mut layers = Vec::new();
        let perr = |line: usize, message: String| Error::Parse { line, message };
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("layer:") {
                let mut layer = Vec::new();
                for tok in rest.split_whitespace() {
                    let el = if let Some(inner) =
                        tok.strip_prefix('(').and_then(|t| t.strip_suffix(')'))
                    {
                        Element::DualUnitary {
                            bond: parse_index(inner).map_err(|m| perr(line_no, m))?,
                        }
                    } else if let Some(s) = tok.strip_prefix("chm@") {
                        Element::Hadamard {
                            site: parse_index(s).map_err(|m| perr(line_no, m))?,
                        }
                    } else if let Some(s) = tok.strip_prefix("cphase@") {
                        Element::ControlledPhase {
                            bond: parse_index(s).map_err(|m| perr(line_no, m))?,
                        }
                    } else {
                        return Err(perr(line_no, format!("unrecognised placement `{tok}`")));
                    };
                    layer.push(el);
                }
                layers.push(layer);
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or("");
            let value = parts
                .next()
                .ok_or_else(|| perr(line_no, format!("`{key}` needs a value")))?;
            if parts.next().is_some() {
                return Err(perr(line_no, "trailing tokens".into()));
            }
            match key {
                "name" => name = value.to_string(),
                "dim" => d = Some(parse_index(value).map_err(|m| perr(line_no, m))?),
                "legs" => legs = Some(parse_index(value).map_err(|m| perr(line_no, m))?),
                "solvability" => {
                    solvability = Solvability::from_keyword(value)
                        .ok_or_else(|| perr(line_no, format!("unknown solvability `{value}`")))?
                }
                "compressed-from" => compressed_from = Some(value.to_string()),
                other => return Err(perr(line_no, format!("unknown key `{other}`"))),
            }
        }
        let d = d.ok_or_else(|| perr(0, "missing `dim` line".into()))?;
        let legs = legs.ok_or_else(|| perr(0, "missing `legs` line".into()))?;
        if legs == 0 || legs % 2 != 0 {
            return Err(perr(
                0,
                format!("`legs` must be a positive even number, got {legs}"),
            ));
        }
        let mut spec = Self::new(name, d, legs / 2, layers, solvability)?;
        spec.compressed_from = compressed_from;
        Ok(spec)
    }
}

fn parse_index(s: &str) -> std::result::Result<usize, String> {
    s.parse::<usize>()
        .map_err(|_| format!("`{s}` is not a non-negative integer"))
}

impl fmt::Display for BaseGateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_dsl())
    }
}

// ---------------------------------------------------------------------------
// Gate instantiation and dense composition
// ---------------------------------------------------------------------------

/// Concrete matrices for every placement of one cell, in [`BaseGateSpec::elements`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGates(Vec<CMatrix>);

impl CellGates {
    /// Wraps explicit matrices, checking their count and shapes.
    pub fn new(spec: &BaseGateSpec, matrices: Vec<CMatrix>) -> Result<Self> {
        let els = spec.elements();
        if els.len() != matrices.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} matrices for {} placements",
                matrices.len(),
                els.len()
            )));
        }
        for (el, m) in els.iter().zip(&matrices) {
            let dim = spec.d.pow(el.legs().len() as u32);
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "{el:?} needs a {dim}×{dim} matrix"
                )));
            }
        }
        Ok(CellGates(matrices))
    }

    /// Every dual-unitary placement replaced by SWAP (dual-unitary cells only).
    pub fn swaps(spec: &BaseGateSpec) -> Result<Self> {
        spec.bonds()?;
        let s = TwoSiteGate::swap(spec.d).into_matrix();
        Ok(CellGates(vec![s; spec.gate_count()]))
    }

    /// Independent random draws: dual-unitary gates from
    /// [`random_dual_unitary_with`], single-site gates and controlled phases
    /// from random complex Hadamard matrices.
    pub fn random<R: Rng + ?Sized>(spec: &BaseGateSpec, rng: &mut R) -> Self {
        let d = spec.d;
        let ms = spec
            .elements()
            .iter()
            .map(|el| match el {
                Element::DualUnitary { .. } => random_dual_unitary_with(d, rng).into_matrix(),
                Element::Hadamard { .. } => random_chm_with(d, rng).as_single_site_unitary(),
                Element::ControlledPhase { .. } => {
                    random_chm_with(d, rng).as_controlled_phase().into_matrix()
                }
            })
            .collect();
        CellGates(ms)
    }

    pub fn matrices(&self) -> &[CMatrix] {
        &self.0
    }
}

/// One operator of a cell acting on local legs.
#[derive(Debug, Clone, PartialEq)]
pub struct CellOperator {
    pub legs: Vec<usize>,
    pub matrix: CMatrix,
}

/// Pairs each placement of `spec` with its matrix.
pub fn cell_operators(spec: &BaseGateSpec, gates: &CellGates) -> Vec<CellOperator> {
    spec.elements()
        .iter()
        .zip(gates.matrices())
        .map(|(el, m)| CellOperator {
            legs: el.legs(),
            matrix: m.clone(),
        })
        .collect()
}

/// Dense unitary of the base gate on `q = d^N` composite qudits.
pub fn compose_base_unitary(spec: &BaseGateSpec, gates: &CellGates) -> Result<TwoSiteGate> {
    let legs = spec.legs();
    let dim = register_dim(spec.d, legs, DENSE_CELL_LIMIT)?;
    let mut m = CMatrix::identity(dim, dim);
    for op in cell_operators(spec, gates) {
        apply_left(&mut m, legs, spec.d, &op.legs, &op.matrix);
    }
    let kind = if spec.is_dual_unitary_cell() {
        GateKind::Generic
    } else {
        GateKind::ChmComposite
    };
    TwoSiteGate::new(spec.q()?, kind, m)
}

/// Operator-Schmidt rank of a composed base gate across its two composite qudits.
pub fn schmidt_rank(spec: &BaseGateSpec, gates: &CellGates, tol: f64) -> Result<usize> {
    let u = compose_base_unitary(spec, gates)?;
    Ok(schmidt_rank_of_spectrum(
        &operator_schmidt_spectrum(&u),
        tol,
    ))
}

/// Operator-Schmidt spectrum of a composed base gate.
pub fn schmidt_spectrum(spec: &BaseGateSpec, gates: &CellGates) -> Result<Vec<f64>> {
    let u = compose_base_unitary(spec, gates)?;
    let q = u.d();
    Ok(schmidt_values_of_realigned(
        &realign_matrix(u.matrix(), q),
        q,
    ))
}

// ---------------------------------------------------------------------------
// Worldlines
// ---------------------------------------------------------------------------

/// Velocities of the SWAP-circuit worldlines and their multiplicities.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowSpectrum {
    half_width: usize,
    entries: Vec<(Rational64, u32)>,
}

impl FlowSpectrum {
    /// Builds a spectrum, merging equal velocities and checking that the
    /// multiplicities add up to `2N` and that `|v| ≤ 1`.
    pub fn new(half_width: usize, entries: &[(Rational64, u32)]) -> Result<Self> {
        let mut merged: BTreeMap<Rational64, u32> = BTreeMap::new();
        for &(v, n) in entries {
            if n == 0 {
                continue;
            }
            if v.abs() > Rational64::from_integer(1) {
                return Err(Error::InvalidParameter(format!(
                    "worldline velocity {v} exceeds the light cone"
                )));
            }
            *merged.entry(v).or_insert(0) += n;
        }
        let total: u32 = merged.values().sum();
        if total as usize != 2 * half_width {
            return Err(Error::InvalidParameter(format!(
                "multiplicities sum to {total}, expected 2N = {}",
                2 * half_width
            )));
        }
        Ok(FlowSpectrum {
            half_width,
            entries: merged.into_iter().collect(),
        })
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    /// `(velocity, multiplicity)` pairs sorted by velocity.
    pub fn entries(&self) -> &[(Rational64, u32)] {
        &self.entries
    }

    /// Multiplicity of velocity `v` (zero if absent).
    pub fn multiplicity(&self, v: Rational64) -> u32 {
        self.entries
            .iter()
            .find(|(w, _)| *w == v)
            .map_or(0, |e| e.1)
    }

    /// True when every velocity `v` occurs with the same multiplicity as `−v`.
    pub fn is_mirror_symmetric(&self) -> bool {
        self.entries
            .iter()
            .all(|&(v, n)| self.multiplicity(-v) == n)
    }

    /// `Σ n_i |v_i|`: the exponent of the operator-Schmidt rank.
    pub fn weighted_speed(&self) -> Rational64 {
        self.entries
            .iter()
            .map(|&(v, n)| v.abs() * Rational64::from_integer(n as i64))
            .sum()
    }
}

/// Worldline of one particle of the SWAP circuit started at leg `start_leg`
/// of the cell in brickwork layer 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Worldline {
    pub start_leg: usize,
    /// Velocity in composite qudits per brickwork layer.
    pub velocity: Rational64,
    /// Brickwork layers before the motion becomes periodic.
    pub transient_layers: usize,
    /// Brickwork layers per period.
    pub period_layers: usize,
    /// Global leg positions after every cell layer over one period, starting
    /// at the recurrent state.
    pub periodic_path: Vec<i64>,
}

impl Worldline {
    /// Composite-qudit sites visited during one period.
    pub fn visited_sites(&self, half_width: usize) -> Vec<i64> {
        let mut s: Vec<i64> = self
            .periodic_path
            .iter()
            .map(|p| p.div_euclid(half_width as i64))
            .collect();
        s.sort_unstable();
        s.dedup();
        s
    }
}

/// Traces the worldline of every leg of a dual-unitary cell.
pub fn worldlines(spec: &BaseGateSpec) -> Result<Vec<Worldline>> {
    let n = spec.half_width as i64;
    let legs = spec.legs() as i64;
    let perm = spec.swap_permutation()?;
    let paths: Vec<Vec<usize>> = (0..spec.legs())
        .map(|l| spec.swap_path(l))
        .collect::<Result<_>>()?;
    let bound = 8 * spec.half_width + 2;
    let mut out = Vec::with_capacity(spec.legs());
    for l0 in 0..spec.legs() {
        let mut p = l0 as i64;
        let mut parity = 0i64;
        let mut seen: HashMap<(i64, i64), (usize, i64, usize)> = HashMap::new();
        let mut trail: Vec<i64> = Vec::new();
        let mut steps = 0usize;
        let (k0, p0, i0) = loop {
            let local = (p - parity * n).rem_euclid(legs);
            if let Some(&hit) = seen.get(&(local, parity)) {
                break hit;
            }
            if steps > bound {
                return Err(Error::NoRecurrence(bound));
            }
            seen.insert((local, parity), (steps, p, trail.len()));
            let start = p - local;
            trail.extend(paths[local as usize][1..].iter().map(|&x| start + x as i64));
            p = start + perm[local as usize] as i64;
            parity ^= 1;
            steps += 1;
        };
        let period = steps - k0;
        let velocity = Rational64::new(p - p0, period as i64 * n);
        out.push(Worldline {
            start_leg: l0,
            velocity,
            transient_layers: k0,
            period_layers: period,
            periodic_path: trail[i0..].to_vec(),
        });
    }
    Ok(out)
}

/// Flow spectrum of a dual-unitary cell: substitutes SWAP for every
/// placement and groups the worldline velocities.
pub fn trace_worldlines(spec: &BaseGateSpec) -> Result<FlowSpectrum> {
    let lines = worldlines(spec)?;
    let entries: Vec<(Rational64, u32)> = lines.iter().map(|w| (w.velocity, 1)).collect();
    FlowSpectrum::new(spec.half_width, &entries).map_err(|e| {
        Error::Internal(format!(
            "worldline tracing produced an invalid spectrum: {e}"
        ))
    })
}

// ---------------------------------------------------------------------------
// Builtin library
// ---------------------------------------------------------------------------

/// Names accepted by [`builtin`] (families take a size suffix, e.g. `family_u:6`).
pub const BUILTIN_NAMES: &[&str] = &[
    "du",
    "kagome",
    "nested_kagome",
    "pyramid4",
    "rocket4",
    "fiveray",
    "pyramid3",
    "twoloc",
    "threeunsolv",
    "family_u:N",
    "family_v:N",
    "sheared_square",
    "kagome_table",
    "du2_right",
    "du2_left",
    "sheared_du3",
    "du2_n3a",
    "du2_n3b",
    "du3",
    "kagome_chm",
    "pyramid4_chm",
    "rocket4_chm",
    "nested_chm",
];

/// Bonds of a diamond of side `k` whose leftmost leg is `offset`.
fn diamond(k: usize, offset: usize) -> Vec<Vec<usize>> {
    let c = offset + k - 1;
    (0..2 * k - 1)
        .map(|r| {
            let w = r.min(2 * k - 2 - r);
            (0..=w).map(|j| c - w + 2 * j).collect()
        })
        .collect()
}

/// First infinite family: an `(N−1)×(N−1)` diamond with its bottom gate
/// replaced by two gates on the outermost bonds. `family_u(4)` is the 4-pyramid.
pub fn family_u(n: usize, d: usize) -> Result<BaseGateSpec> {
    if n < 4 {
        return Err(Error::InvalidParameter(format!(
            "family U requires N ≥ 4, got {n}"
        )));
    }
    let mut layers = diamond(n - 1, 1);
    layers[0] = vec![0, 2 * n - 2];
    BaseGateSpec::from_bonds(
        format!("family_u:{n}"),
        d,
        n,
        &layers,
        Solvability::CompletelyReducible,
    )
}

/// Second infinite family: the same diamond with its bottom gate replaced
/// by two gates on the bonds next-nearest to the centre. `family_v(4)` is the 4-rocket.
pub fn family_v(n: usize, d: usize) -> Result<BaseGateSpec> {
    if n < 4 {
        return Err(Error::InvalidParameter(format!(
            "family V requires N ≥ 4, got {n}"
        )));
    }
    let mut layers = diamond(n - 1, 1);
    layers[0] = vec![n - 3, n + 1];
    BaseGateSpec::from_bonds(
        format!("family_v:{n}"),
        d,
        n,
        &layers,
        Solvability::CompletelyReducible,
    )
}

/// Replaces every dual-unitary gate by its complex-Hadamard realisation on a
/// bipartite shading of the cell: gates on even bonds become single-site
/// unitaries on compressed leg `b/2`, gates on odd bonds become controlled
/// phases on compressed bond `(b−1)/2`. The result acts on `N` legs
/// (`N/2` per composite qudit) of the same local dimension.
pub fn compress(spec: &BaseGateSpec) -> Result<BaseGateSpec> {
    if spec.half_width % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "compression needs an even half-width, `{}` has N = {}",
            spec.name, spec.half_width
        )));
    }
    let mut layers: Vec<Vec<Element>> = Vec::new();
    for layer in spec.bonds()? {
        // Controlled phases on neighbouring bonds share a leg; they commute,
        // but a layer is kept free of shared legs for readability of the DSL.
        let mut pending: Vec<Element> = layer
            .iter()
            .map(|&b| {
                if b % 2 == 0 {
                    Element::Hadamard { site: b / 2 }
                } else {
                    Element::ControlledPhase { bond: (b - 1) / 2 }
                }
            })
            .collect();
        while !pending.is_empty() {
            let mut used = std::collections::HashSet::new();
            let mut this = Vec::new();
            let mut rest = Vec::new();
            for el in pending {
                if el.legs().iter().any(|l| used.contains(l)) {
                    rest.push(el);
                } else {
                    used.extend(el.legs());
                    this.push(el);
                }
            }
            layers.push(this);
            pending = rest;
        }
    }
    let mut out = BaseGateSpec::new(
        format!("{}_chm", spec.name),
        spec.d,
        spec.half_width / 2,
        layers,
        spec.solvability,
    )?;
    out.compressed_from = Some(spec.name.clone());
    Ok(out)
}

/// Looks up a builtin cell by name with local dimension `d`.
pub fn builtin(name: &str, d: usize) -> Result<BaseGateSpec> {
    use Solvability::*;
    if let Some((fam, size)) = split_family(name) {
        let n: usize = size
            .parse()
            .map_err(|_| Error::UnknownLattice(name.to_string()))?;
        return match fam {
            "family_u" => family_u(n, d),
            "family_v" => family_v(n, d),
            _ => Err(Error::UnknownLattice(name.to_string())),
        };
    }
    let b = |n: usize, layers: &[&[usize]], s: Solvability| {
        let layers: Vec<Vec<usize>> = layers.iter().map(|l| l.to_vec()).collect();
        BaseGateSpec::from_bonds(name, d, n, &layers, s)
    };
    match name {
        "du" => b(1, &[&[0]], CompletelyReducible),
        "kagome" => b(2, &[&[1], &[0, 2]], CompletelyReducible),
        "nested_kagome" => b(4, &[&[3], &[2, 4], &[1, 5], &[0, 6]], CompletelyReducible),
        "pyramid4" => family_u(4, d).map(|s| BaseGateSpec {
            name: name.into(),
            ..s
        }),
        "rocket4" => family_v(4, d).map(|s| BaseGateSpec {
            name: name.into(),
            ..s
        }),
        "fiveray" => b(
            5,
            &[&[0, 2, 4, 6, 8], &[1, 3, 5, 7], &[2, 6], &[3, 5], &[4]],
            CompletelyReducible,
        ),
        "pyramid3" => b(3, &[&[0, 2, 4], &[1, 3], &[2]], NotCompletelyReducible),
        "twoloc" => b(
            2,
            &[&[1], &[0, 2], &[1], &[0, 2], &[1]],
            NotCompletelyReducible,
        ),
        "threeunsolv" => b(3, &[&[0], &[3], &[0, 2, 4]], NotCompletelyReducible),
        "sheared_square" => b(2, &[&[2], &[1]], CompletelyReducible),
        "kagome_table" => b(2, &[&[0, 2], &[1]], CompletelyReducible),
        "du2_right" => b(2, &[&[2], &[1], &[0, 2]], PartiallySolvable),
        "du2_left" => b(2, &[&[0], &[1], &[0, 2]], PartiallySolvable),
        "sheared_du3" => b(3, &[&[0, 2, 4]], CompletelyReducible),
        "du2_n3a" => b(3, &[&[2], &[1, 3], &[0, 4]], CompletelyReducible),
        "du2_n3b" => b(3, &[&[0, 2, 4], &[1, 3], &[0, 2, 4]], CompletelyReducible),
        "du3" => b(3, &[&[1], &[0, 2, 4], &[1]], PartiallySolvable),
        "kagome_chm" => compress(&builtin("kagome", d)?),
        "pyramid4_chm" => compress(&builtin("pyramid4", d)?),
        "rocket4_chm" => compress(&builtin("rocket4", d)?),
        "nested_chm" => compress(&builtin("nested_kagome", d)?).map(|s| BaseGateSpec {
            name: name.into(),
            ..s
        }),
        _ => Err(Error::UnknownLattice(name.to_string())),
    }
}

fn split_family(name: &str) -> Option<(&str, &str)> {
    let (fam, size) = name.split_once(':').or_else(|| {
        let open = name.find('(')?;
        Some((&name[..open], name[open + 1..].strip_suffix(')')?))
    })?;
    let fam = match fam {
        "family_u" | "familyU" | "U" => "family_u",
        "family_v" | "familyV" | "V" => "family_v",
        _ => return None,
    };
    Some((fam, size))
}

/// Velocity as a reduced fraction string `p/q` (integers print without `/1`).
pub fn format_rational(v: Rational64) -> String {
    if v.is_integer() {
        v.numer().to_string()
    } else {
        format!("{}/{}", v.numer(), v.denom())
    }
}

/// Parses `p/q`, an integer, or a decimal with at most 9 fractional digits.
pub fn parse_rational(s: &str) -> Result<Rational64> {
    let s = s.trim();
    let bad = || Error::InvalidParameter(format!("`{s}` is not a rational number"));
    if let Some((p, q)) = s.split_once('/') {
        let p: i64 = p.trim().parse().map_err(|_| bad())?;
        let q: i64 = q.trim().parse().map_err(|_| bad())?;
        if q == 0 {
            return Err(bad());
        }
        return Ok(Rational64::new(p, q));
    }
    if let Ok(i) = s.parse::<i64>() {
        return Ok(Rational64::from_integer(i));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (ip, fp) = body.split_once('.').ok_or_else(bad)?;
    if fp.len() > 9 || !fp.chars().all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let ip: i64 = if ip.is_empty() {
        0
    } else {
        ip.parse().map_err(|_| bad())?
    };
    let den = 10i64.pow(fp.len() as u32);
    let fpv: i64 = if fp.is_empty() {
        0
    } else {
        fp.parse().map_err(|_| bad())?
    };
    let v = Rational64::new(ip * den + fpv, den);
    Ok(if neg { -v } else { v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::{is_unitary, Tolerance};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn r(p: i64, q: i64) -> Rational64 {
        Rational64::new(p, q)
    }

    #[test]
    fn every_builtin_name_resolves() {
        for name in BUILTIN_NAMES {
            let name = name.replace(":N", ":5");
            let spec = builtin(&name, 2).unwrap();
            assert!(spec.gate_count() >= 1, "{name}");
        }
        assert!(matches!(builtin("nope", 2), Err(Error::UnknownLattice(_))));
        assert!(family_u(3, 2).is_err());
    }

    #[test]
    fn du_cell_has_one_placement() {
        let s = builtin("du", 2).unwrap();
        assert_eq!(s.layers().len(), 1);
        assert_eq!(s.gate_count(), 1);
    }

    #[test]
    fn first_family_at_four_is_the_pyramid() {
        assert_eq!(
            family_u(4, 2).unwrap().layers(),
            builtin("pyramid4", 2).unwrap().layers()
        );
        assert_eq!(
            family_v(4, 2).unwrap().layers(),
            builtin("rocket4", 2).unwrap().layers()
        );
    }

    #[test]
    fn overlapping_placements_are_rejected() {
        let e =
            BaseGateSpec::from_bonds("x", 2, 2, &[vec![0, 1]], Solvability::CompletelyReducible);
        assert!(matches!(e, Err(Error::OverlappingPlacement { .. })));
        let e = BaseGateSpec::from_bonds("x", 2, 2, &[vec![3]], Solvability::CompletelyReducible);
        assert!(matches!(e, Err(Error::PlacementOutOfRange { .. })));
    }

    #[test]
    fn dsl_round_trip() {
        for name in ["kagome", "pyramid4", "pyramid4_chm", "twoloc"] {
            let s = builtin(name, 3).unwrap();
            let back = BaseGateSpec::from_dsl(&s.to_dsl()).unwrap();
            assert_eq!(back.layers(), s.layers());
            assert_eq!(back.d(), 3);
            assert_eq!(back.half_width(), s.half_width());
        }
        assert!(matches!(
            BaseGateSpec::from_dsl("dim 2\nlegs 4\nlayer: (x)"),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(BaseGateSpec::from_dsl("dim 2\nlegs 3\n").is_err());
    }

    #[test]
    fn known_flow_spectra() {
        let f = trace_worldlines(&builtin("du", 2).unwrap()).unwrap();
        assert_eq!(f.entries(), &[(r(-1, 1), 1), (r(1, 1), 1)]);
        let f = trace_worldlines(&builtin("kagome", 2).unwrap()).unwrap();
        assert_eq!(f.entries(), &[(r(-1, 1), 1), (r(0, 1), 2), (r(1, 1), 1)]);
        let f = trace_worldlines(&builtin("pyramid4", 2).unwrap()).unwrap();
        assert_eq!(
            f.entries(),
            &[(r(-1, 1), 1), (r(-1, 3), 3), (r(1, 3), 3), (r(1, 1), 1)]
        );
        let f = trace_worldlines(&builtin("nested_kagome", 2).unwrap()).unwrap();
        assert_eq!(f.entries(), &[(r(-1, 1), 1), (r(0, 1), 6), (r(1, 1), 1)]);
    }

    #[test]
    fn compressed_cells_halve_the_width() {
        let c = builtin("pyramid4_chm", 2).unwrap();
        assert_eq!(c.half_width(), 2);
        assert_eq!(c.compressed_from(), Some("pyramid4"));
        assert_eq!(c.gate_count(), builtin("pyramid4", 2).unwrap().gate_count());
        assert!(trace_worldlines(&c).is_err());
    }

    #[test]
    fn composed_cells_are_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for name in ["kagome", "pyramid4", "pyramid4_chm", "twoloc"] {
            let s = builtin(name, 2).unwrap();
            let u = compose_base_unitary(&s, &CellGates::random(&s, &mut rng)).unwrap();
            assert!(is_unitary(&u, Tolerance::new(1e-9).unwrap()), "{name}");
        }
    }

    #[test]
    fn kagome_swap_cell_is_a_leg_permutation() {
        let s = builtin("kagome", 2).unwrap();
        let perm = s.swap_permutation().unwrap();
        let u = compose_base_unitary(&s, &CellGates::swaps(&s).unwrap()).unwrap();
        // Column for basis state with a single 1 at leg l has its 1 at leg perm[l].
        for l in 0..4 {
            let col = 1usize << (3 - l);
            let row = 1usize << (3 - perm[l]);
            assert!((u.matrix()[(row, col)].re - 1.0).abs() < 1e-12);
        }
        assert_eq!(perm, vec![1, 3, 0, 2]);
    }

    #[test]
    fn rational_parsing() {
        assert_eq!(parse_rational("1/3").unwrap(), r(1, 3));
        assert_eq!(parse_rational("-2/4").unwrap(), r(-1, 2));
        assert_eq!(parse_rational("0.25").unwrap(), r(1, 4));
        assert_eq!(parse_rational("1").unwrap(), r(1, 1));
        assert!(parse_rational("x").is_err());
        assert_eq!(format_rational(r(2, 6)), "1/3");
        assert_eq!(format_rational(r(-2, 1)), "-2");
    }

    #[test]
    fn family_names_parse() {
        assert_eq!(builtin("familyU(6)", 2).unwrap().half_width(), 6);
        assert_eq!(builtin("family_v:5", 2).unwrap().half_width(), 5);
    }
}
