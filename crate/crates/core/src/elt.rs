//! Exact entanglement line tensions from worldline spectra, derived
//! velocities, and the continuous-density extension.
//!
//! For a flow spectrum `{(v_i, n_i)}` of a completely reducible lattice the
//! line tension along the ray `x = v·t`, in units of `s_eq = log q`, is
//!
//! ```text
//! ℰ(v) = (1/2N) · Σ_i n_i · |v − v_i|
//! ```
//!
//! a convex piecewise linear function with kinks at the worldline velocities.
//! The same expression is evaluated for non-mirror-symmetric flows; there the
//! curve need not satisfy `ℰ(v) = |v|` outside the light cone, which
//! [`EltCurve::is_mirror_symmetric`] lets callers detect.

use num_rational::Rational64;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{schmidt_rank, BaseGateSpec, CellGates, FlowSpectrum};

/// `ℰ(v)` as an exact rational.
pub fn elt_point(flow: &FlowSpectrum, v: Rational64) -> Rational64 {
    let sum: Rational64 = flow
        .entries()
        .iter()
        .map(|&(vi, n)| (v - vi).abs() * Rational64::from_integer(n as i64))
        .sum();
    sum / Rational64::from_integer(2 * flow.half_width() as i64)
}

/// One linear piece `ℰ(v) = slope·v + intercept` on `[from, to]`
/// (`None` marks an unbounded end).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub from: Option<Rational64>,
    pub to: Option<Rational64>,
    pub slope: Rational64,
    pub intercept: Rational64,
}

/// Piecewise linear line tension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EltCurve {
    flow: FlowSpectrum,
    breakpoints: Vec<Rational64>,
    segments: Vec<Segment>,
}

impl EltCurve {
    /// Kink velocities (the distinct worldline velocities), ascending.
    pub fn breakpoints(&self) -> &[Rational64] {
        &self.breakpoints
    }

    /// Linear pieces from `−∞` to `+∞`.
    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Exact value at `v`.
    pub fn value(&self, v: Rational64) -> Rational64 {
        elt_point(&self.flow, v)
    }

    /// Slopes increase from piece to piece.
    pub fn is_convex(&self) -> bool {
        self.segments.windows(2).all(|w| w[0].slope <= w[1].slope)
    }

    pub fn is_mirror_symmetric(&self) -> bool {
        self.flow.is_mirror_symmetric()
    }

    pub fn flow(&self) -> &FlowSpectrum {
        &self.flow
    }

    /// Samples `(v, ℰ(v))` on `points` equally spaced velocities in `[lo, hi]`.
    pub fn sample(
        &self,
        lo: Rational64,
        hi: Rational64,
        points: usize,
    ) -> Vec<(Rational64, Rational64)> {
        let steps = points.max(2) - 1;
        (0..=steps)
            .map(|k| {
                let v = lo + (hi - lo) * Rational64::new(k as i64, steps as i64);
                (v, self.value(v))
            })
            .collect()
    }
}

/// Builds the piecewise linear curve of a flow spectrum.
pub fn elt_curve(flow: &FlowSpectrum) -> EltCurve {
    let breakpoints: Vec<Rational64> = flow.entries().iter().map(|e| e.0).collect();
    let two_n = Rational64::from_integer(2 * flow.half_width() as i64);
    // On a piece, |v − v_i| = ±(v − v_i): slope = Σ sign·n_i / 2N.
    let piece = |sample: Rational64| {
        let mut slope = Rational64::zero();
        let mut intercept = Rational64::zero();
        for &(vi, n) in flow.entries() {
            let n = Rational64::from_integer(n as i64);
            if sample > vi {
                slope += n;
                intercept -= n * vi;
            } else {
                slope -= n;
                intercept += n * vi;
            }
        }
        (slope / two_n, intercept / two_n)
    };
    let mut segments = Vec::with_capacity(breakpoints.len() + 1);
    let mut lower: Option<Rational64> = None;
    for k in 0..=breakpoints.len() {
        let upper = breakpoints.get(k).copied();
        let probe = match (lower, upper) {
            (None, Some(u)) => u - Rational64::from_integer(1),
            (Some(l), Some(u)) => (l + u) / Rational64::from_integer(2),
            (Some(l), None) => l + Rational64::from_integer(1),
            (None, None) => Rational64::zero(),
        };
        let (slope, intercept) = piece(probe);
        segments.push(Segment {
            from: lower,
            to: upper,
            slope,
            intercept,
        });
        lower = upper;
    }
    EltCurve {
        flow: flow.clone(),
        breakpoints,
        segments,
    }
}

/// Entanglement velocity `v_E = ℰ(0)`.
pub fn v_entanglement(flow: &FlowSpectrum) -> Rational64 {
    elt_point(flow, Rational64::zero())
}

/// Butterfly velocity: the fastest worldline speed.
pub fn v_butterfly(flow: &FlowSpectrum) -> Rational64 {
    flow.entries()
        .iter()
        .map(|e| e.0.abs())
        .max()
        .unwrap_or_else(Rational64::zero)
}

/// Decay rate `ℰ(v) − v` of out-of-time-order correlators along `x = v·t`,
/// defined inside the butterfly cone `|v| < v_B`.
pub fn otoc_rate(flow: &FlowSpectrum, v: Rational64) -> Result<Rational64> {
    if v.abs() >= v_butterfly(flow) {
        return Err(Error::OutsideButterflyCone(v.to_string()));
    }
    Ok(elt_point(flow, v) - v)
}

/// `log 𝓡 / log q²` from the operator-Schmidt rank of a composed base gate.
pub fn ve_from_schmidt(spec: &BaseGateSpec, gates: &CellGates, tol: f64) -> Result<f64> {
    let rank = schmidt_rank(spec, gates, tol)?;
    let q = spec.q()? as f64;
    Ok((rank as f64).ln() / (q * q).ln())
}

// ---------------------------------------------------------------------------
// Continuous densities
// ---------------------------------------------------------------------------

/// Quadrature tolerance for line tensions of continuous densities.
pub const QUADRATURE_TOL: f64 = 1e-8;

/// Step of the central second difference in [`curvature_check`].
pub const CURVATURE_STEP: f64 = 1e-3;

/// A normalised density of worldline velocities on `[−1, 1]`.
pub struct FlowDensity {
    f: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Points where `f` is not smooth; quadrature splits there.
    kinks: Vec<f64>,
}

impl std::fmt::Debug for FlowDensity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FlowDensity")
            .field("kinks", &self.kinks)
            .finish_non_exhaustive()
    }
}

impl FlowDensity {
    /// Wraps a density; fails unless `∫_{−1}^{1} f = 1` within the
    /// quadrature tolerance and `f ≥ 0` on a sampling grid.
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static, kinks: Vec<f64>) -> Result<Self> {
        let mut kinks: Vec<f64> = kinks.into_iter().filter(|k| k.abs() < 1.0).collect();
        kinks.sort_by(f64::total_cmp);
        let dens = FlowDensity {
            f: Box::new(f),
            kinks,
        };
        if (0..=2000).any(|k| (dens.f)(-1.0 + k as f64 / 1000.0) < 0.0) {
            return Err(Error::InvalidParameter(
                "density takes negative values".into(),
            ));
        }
        let total = dens.integrate(|w| (dens.f)(w), -1.0, 1.0, 1e-12);
        if (total - 1.0).abs() > QUADRATURE_TOL {
            return Err(Error::Unnormalized(total));
        }
        Ok(dens)
    }

    /// `n(v) = 1/2` on `[−1, 1]`.
    pub fn uniform() -> Self {
        FlowDensity::new(|_| 0.5, Vec::new()).expect("uniform density is normalised")
    }

    /// Two boxes of width `w` at `v = ±1`, each of weight 1/2: a smeared
    /// version of the brickwork dual-unitary spectrum.
    pub fn edge_bumps(w: f64) -> Result<Self> {
        if !(w > 0.0 && w <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "bump width {w} outside (0, 1]"
            )));
        }
        let h = 0.5 / w;
        FlowDensity::new(
            move |v: f64| if v.abs() >= 1.0 - w { h } else { 0.0 },
            vec![-1.0 + w, 1.0 - w],
        )
    }

    /// Density value.
    pub fn value(&self, v: f64) -> f64 {
        (self.f)(v)
    }

    fn integrate(&self, g: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        let mut cuts = vec![a];
        cuts.extend(self.kinks.iter().copied().filter(|&k| k > a && k < b));
        cuts.push(b);
        let pieces = (cuts.len() - 1) as f64;
        cuts.windows(2)
            .map(|w| adaptive_simpson(&g, w[0], w[1], tol / pieces))
            .sum()
    }

    fn elt_with_tol(&self, v: f64, tol: f64) -> f64 {
        let below = self.integrate(|w| (self.f)(w) * (v - w), -1.0, v, tol / 2.0);
        let above = self.integrate(|w| (self.f)(w) * (w - v), v, 1.0, tol / 2.0);
        below + above
    }
}

/// `ℰ(v) = ∫_{−1}^{v} n(w)(v − w) dw + ∫_{v}^{1} n(w)(w − v) dw`.
pub fn continuous_elt(density: &FlowDensity, v: f64) -> Result<f64> {
    if !(v > -1.0 && v < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "velocity {v} outside (−1, 1)"
        )));
    }
    Ok(density.elt_with_tol(v, QUADRATURE_TOL))
}

/// Central second difference of `ℰ` at `v` with step [`CURVATURE_STEP`];
/// equals `2·n(v)` for smooth densities.
pub fn curvature_check(density: &FlowDensity, v: f64) -> Result<f64> {
    let h = CURVATURE_STEP;
    if !(v - h > -1.0 && v + h < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "velocity {v} too close to the light cone"
        )));
    }
    // The second difference divides by h², so the integrals need far more
    // accuracy than the line tension itself.
    let tol = 1e-13;
    let e = |x: f64| density.elt_with_tol(x, tol);
    Ok((e(v + h) - 2.0 * e(v) + e(v - h)) / (h * h))
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f((a + b) / 2.0));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = (a + b) / 2.0;
    let (lm, rm) = ((a + m) / 2.0, (m + b) / 2.0);
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}
