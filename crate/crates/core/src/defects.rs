//! Defect insertion into SWAP backgrounds and the catalogue of irreducible
//! obstructions; the crossing zero-velocity worldline criterion.
//!
//! A *k-body irreducible* diagram is a SWAP-background diagram with `k`
//! generic gates that is stuck under reduction but becomes completely
//! reducible as soon as any one of its generic gates is replaced by a SWAP.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagram::{
    build_zalpha_with, reduce_boundary, DiagramShape, FoldedDiagram, GatePosition, NodeTag,
    DEFAULT_MAX_NODES,
};
use crate::error::{Error, Result};
use crate::gates::PermutationLabel;
use crate::lattice::{worldlines, BaseGateSpec, Worldline};
use num_traits::Zero;

/// Largest number of subsets an exhaustive scan may visit.
pub const MAX_SUBSETS: u128 = 1_000_000;

/// Catalogued shapes of stuck residuals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObstructionPattern {
    /// A single stuck gate.
    OneBody,
    /// Two gates joined by two wires.
    TwoBodyI,
    /// Two gates joined by a single wire.
    TwoBodyII,
    /// The `N`-gate zigzag ladder.
    Ladder(usize),
    /// Anything else.
    Other,
}

/// A stuck defect configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstruction {
    /// Generic gates, sorted.
    pub positions: Vec<GatePosition>,
    pub pattern: ObstructionPattern,
    /// Overlaps absorbed before the engine got stuck (the exponent of the
    /// prefactor `d^{−(α−1)·𝒩}` multiplying the residual).
    pub overlaps: usize,
    pub residual: FoldedDiagram,
}

/// Position list of every gate of the `(m, n)` diamond.
pub fn gate_positions(spec: &BaseGateSpec, m: usize, n: usize) -> Vec<GatePosition> {
    let count = spec.gate_count();
    let mut out = Vec::with_capacity(m * n * count);
    for cell_i in 0..m {
        for cell_j in 0..n {
            for element in 0..count {
                out.push(GatePosition {
                    cell_i,
                    cell_j,
                    element,
                });
            }
        }
    }
    out
}

/// Diagram of `Z_α(m, n)` on a SWAP background with the given generic gates.
pub fn defect_diagram(
    spec: &BaseGateSpec,
    m: usize,
    n: usize,
    generic: &[GatePosition],
) -> Result<FoldedDiagram> {
    build_zalpha_with(spec, m, n, DEFAULT_MAX_NODES, |p| {
        if generic.contains(&p) {
            NodeTag::Generic
        } else {
            NodeTag::Swap
        }
    })
}

/// Exhaustive scan for `k`-body irreducible defect sets.
pub fn scan_kbody(spec: &BaseGateSpec, m: usize, n: usize, k: usize) -> Result<Vec<Obstruction>> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let positions = gate_positions(spec, m, n);
    let subsets = binomial(positions.len() as u128, k as u128);
    if subsets > MAX_SUBSETS {
        return Err(Error::BudgetExceeded(format!(
            "{subsets} subsets of size {k} among {} gates exceed the cap of {MAX_SUBSETS}",
            positions.len()
        )));
    }
    let combos = combinations(positions.len(), k);
    let found: Vec<Result<Option<Obstruction>>> = combos
        .par_iter()
        .map(|combo| {
            let set: Vec<GatePosition> = combo.iter().map(|&i| positions[i]).collect();
            let res = reduce_boundary(&defect_diagram(spec, m, n, &set)?);
            if res.is_fully_reduced() {
                return Ok(None);
            }
            for skip in 0..set.len() {
                let fewer: Vec<GatePosition> = set
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != skip)
                    .map(|(_, p)| *p)
                    .collect();
                if !reduce_boundary(&defect_diagram(spec, m, n, &fewer)?).is_fully_reduced() {
                    return Ok(None);
                }
            }
            let pattern = classify(&res.residual);
            Ok(Some(Obstruction {
                positions: set,
                pattern,
                overlaps: res.overlaps,
                residual: res.residual,
            }))
        })
        .collect();
    let mut out = Vec::new();
    for r in found {
        if let Some(o) = r? {
            out.push(o);
        }
    }
    out.sort_by(|a, b| a.positions.cmp(&b.positions));
    Ok(out)
}

/// True when `diagram` is stuck and every single SWAP replacement of one of
/// its generic nodes makes it completely reducible.
pub fn is_kbody_irreducible(diagram: &FoldedDiagram) -> Result<bool> {
    if reduce_boundary(diagram).is_fully_reduced() {
        return Ok(false);
    }
    let generic: Vec<usize> = diagram
        .nodes()
        .filter(|(_, n)| n.tag == NodeTag::Generic)
        .map(|(i, _)| i)
        .collect();
    for id in generic {
        if !reduce_boundary(&diagram.with_swap_at(id)?).is_fully_reduced() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Classifies a stuck residual by its shape.
pub fn classify(residual: &FoldedDiagram) -> ObstructionPattern {
    let shape = residual.shape();
    let k = shape.tags.len();
    if k == 1 {
        return ObstructionPattern::OneBody;
    }
    let between = |a: usize, b: usize| {
        shape
            .connections
            .iter()
            .filter(|c| (c.0 == a && c.2 == b) || (c.0 == b && c.2 == a))
            .count()
    };
    if k == 2 {
        return match between(0, 1) {
            2 => ObstructionPattern::TwoBodyI,
            1 => ObstructionPattern::TwoBodyII,
            _ => ObstructionPattern::Other,
        };
    }
    if k <= 8 {
        if let Ok(template) = family_pattern(k) {
            if shape_variants(&template.shape())
                .iter()
                .any(|t| t.is_isomorphic(&shape))
            {
                return ObstructionPattern::Ladder(k);
            }
        }
    }
    ObstructionPattern::Other
}

/// A shape, its label flip, its left–right mirror and both combined.
fn shape_variants(s: &DiagramShape) -> Vec<DiagramShape> {
    let flip = |s: &DiagramShape| DiagramShape {
        labels: s.labels.iter().map(|l| l.flipped()).collect(),
        ..s.clone()
    };
    let mirror = |s: &DiagramShape| {
        // Left/right mirror: slots 0↔1, 2↔3 and labels exchange roles. Free
        // ports are re-listed in the new slot order.
        let ms = |x: usize| x ^ 1;
        let connections = s
            .connections
            .iter()
            .map(|&(a, sa, b, sb)| (a, ms(sa), b, ms(sb)))
            .collect::<Vec<_>>();
        let used: std::collections::HashSet<(usize, usize)> = s
            .connections
            .iter()
            .flat_map(|&(a, sa, b, sb)| [(a, sa), (b, sb)])
            .collect();
        let mut free = Vec::new();
        let mut it = s.labels.iter();
        for i in 0..s.tags.len() {
            for slot in 0..4 {
                if !used.contains(&(i, slot)) {
                    free.push(((i, ms(slot)), it.next().expect("label").flipped()));
                }
            }
        }
        free.sort_by_key(|f| f.0);
        DiagramShape {
            tags: s.tags.clone(),
            connections,
            labels: free.into_iter().map(|f| f.1).collect(),
        }
    };
    let m = mirror(s);
    vec![s.clone(), flip(s), flip(&m), m]
}

/// Zigzag wiring of the ladder: node `i` connects its out-right (even `i`)
/// or out-left (odd `i`) port to the in-left (even `i`) or in-right (odd `i`)
/// port of node `i + 1`.
pub fn ladder_wiring(n: usize) -> Vec<(usize, usize, usize, usize)> {
    (0..n.saturating_sub(1))
        .map(|i| {
            if i % 2 == 0 {
                (i, 3, i + 1, 0)
            } else {
                (i, 2, i + 1, 1)
            }
        })
        .collect()
}

fn ladder_labels(n: usize) -> Vec<PermutationLabel> {
    use PermutationLabel::{Circle as C, Square as S};
    let mut labels = vec![C, S, S, C];
    if n >= 2 {
        for _ in 0..n - 2 {
            labels.extend([S, C]);
        }
        labels.extend(if n % 2 == 0 { [C, S] } else { [S, C] });
    }
    labels
}

/// The `N`-gate ladder obstruction, verified stuck and `N`-body irreducible.
pub fn family_pattern(n: usize) -> Result<FoldedDiagram> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "ladder needs at least one gate".into(),
        ));
    }
    let d = FoldedDiagram::from_wiring(
        &vec![NodeTag::Generic; n],
        &ladder_wiring(n),
        &ladder_labels(n),
    )?;
    if !is_kbody_irreducible(&d)? {
        return Err(Error::Internal(format!(
            "ladder of {n} gates is not {n}-body irreducible"
        )));
    }
    Ok(d)
}

/// The four-gate obstruction that is not a ladder: a planar 2×2 cycle.
pub fn four_body_special() -> Result<FoldedDiagram> {
    use PermutationLabel::{Circle as C, Square as S};
    let d = FoldedDiagram::from_wiring(
        &[NodeTag::Generic; 4],
        &[(0, 2, 1, 1), (0, 3, 2, 0), (1, 3, 3, 0), (2, 2, 3, 1)],
        &[C, S, S, C, C, S, S, C],
    )?;
    if !is_kbody_irreducible(&d)? {
        return Err(Error::Internal(
            "four-gate cycle is not 4-body irreducible".into(),
        ));
    }
    Ok(d)
}

/// Result of the crossing zero-velocity worldline test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingReport {
    pub crossing: bool,
    /// A zero-velocity worldline that visits more than one composite qudit
    /// per period, if any.
    pub witness: Option<Worldline>,
}

/// Detects zero-velocity worldlines that cross between the two composite
/// qudits of a cell (and hence cross the complementary worldlines).
pub fn crossing_v0(spec: &BaseGateSpec) -> Result<CrossingReport> {
    let lines = worldlines(spec)?;
    let witness = lines
        .into_iter()
        .find(|w| w.velocity.is_zero() && w.visited_sites(spec.half_width()).len() > 1);
    Ok(CrossingReport {
        crossing: witness.is_some(),
        witness,
    })
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
        if r > u64::MAX as u128 {
            return r;
        }
    }
    r
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut c: Vec<usize> = (0..k).collect();
    loop {
        out.push(c.clone());
        // Rightmost entry that can still be advanced.
        let mut i = k;
        while i > 0 && c[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        c[i - 1] += 1;
        for j in i..k {
            c[j] = c[j - 1] + 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::builtin;

    #[test]
    fn combinations_enumerate_all_subsets() {
        assert_eq!(combinations(4, 2).len(), 6);
        assert_eq!(combinations(5, 3).len(), 10);
        assert_eq!(combinations(3, 3), vec![vec![0, 1, 2]]);
        assert_eq!(combinations(3, 1), vec![vec![0], vec![1], vec![2]]);
        assert_eq!(binomial(90, 2), 4005);
    }

    #[test]
    fn ladders_are_irreducible() {
        for n in 1..=4 {
            let d = family_pattern(n).unwrap();
            assert_eq!(
                classify(&d),
                if n == 1 {
                    ObstructionPattern::OneBody
                } else if n == 2 {
                    ObstructionPattern::TwoBodyII
                } else {
                    ObstructionPattern::Ladder(n)
                }
            );
        }
    }

    #[test]
    fn special_four_body_is_not_a_ladder() {
        let d = four_body_special().unwrap();
        assert_eq!(classify(&d), ObstructionPattern::Other);
    }

    #[test]
    fn crossing_criterion_on_small_cells() {
        assert!(
            crossing_v0(&builtin("twoloc", 2).unwrap())
                .unwrap()
                .crossing
        );
        assert!(
            !crossing_v0(&builtin("kagome", 2).unwrap())
                .unwrap()
                .crossing
        );
        assert!(crossing_v0(&builtin("du", 2).unwrap())
            .unwrap()
            .witness
            .is_none());
    }
}
