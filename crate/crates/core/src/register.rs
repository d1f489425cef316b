//! Dense operations on registers of `L` qudits of dimension `d`.
//!
//! Basis index convention: site 0 is the most significant digit, i.e. the
//! basis state `|s₀ s₁ … s_{L−1}⟩` has index `Σ sᵢ·d^{L−1−i}`. This matches the
//! `(a, b) ↦ a·d + b` convention of two-site gates with the left qudit first.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gates::CMatrix;

/// Largest register dimension that dense routines accept by default.
pub const DENSE_LIMIT: usize = 1 << 14;

/// `d^l` with overflow and budget checking.
pub fn register_dim(d: usize, l: usize, limit: usize) -> Result<usize> {
    let mut dim: u128 = 1;
    for _ in 0..l {
        dim *= d as u128;
        if dim > limit as u128 {
            return Err(Error::DimensionOverflow {
                dim: (d as u128).saturating_pow(l as u32),
                limit: limit as u128,
            });
        }
    }
    Ok(dim as usize)
}

/// Multiplies every column of `m` by the operator `op` acting on `sites`
/// (`m ← O·m`). `op` has dimension `d^{sites.len()}`; sites must be distinct.
pub fn apply_left(m: &mut CMatrix, l: usize, d: usize, sites: &[usize], op: &CMatrix) {
    let k = sites.len();
    let dk = d.pow(k as u32);
    debug_assert_eq!(op.nrows(), dk);
    debug_assert_eq!(m.nrows(), d.pow(l as u32));
    let strides: Vec<usize> = sites.iter().map(|&s| d.pow((l - 1 - s) as u32)).collect();
    // Offsets of the d^k sub-block entries relative to the base index, in the
    // operator's own index order (first listed site most significant).
    let offsets: Vec<usize> = (0..dk)
        .map(|mut idx| {
            let mut off = 0;
            for j in (0..k).rev() {
                off += (idx % d) * strides[j];
                idx /= d;
            }
            off
        })
        .collect();
    let dim = m.nrows();
    let bases: Vec<usize> = (0..dim)
        .filter(|&i| strides.iter().all(|&st| (i / st) % d == 0))
        .collect();
    let mut buf = vec![Complex64::new(0.0, 0.0); dk];
    let ncols = m.ncols();
    for c in 0..ncols {
        let mut col = m.column_mut(c);
        for &b in &bases {
            for (j, &o) in offsets.iter().enumerate() {
                buf[j] = col[b + o];
            }
            for (r, &o) in offsets.iter().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, v) in buf.iter().enumerate() {
                    acc += op[(r, j)] * v;
                }
                col[b + o] = acc;
            }
        }
    }
}

/// Conjugation `m ← O·m·O†` for an operator `m` on the register.
pub fn conjugate(m: &mut CMatrix, l: usize, d: usize, sites: &[usize], op: &CMatrix) {
    apply_left(m, l, d, sites, op);
    let mut t = m.adjoint();
    apply_left(&mut t, l, d, sites, op);
    *m = t.adjoint();
}

/// The operator `op ⊗ 1` placed on a single `site` of the register.
pub fn embed_single_site(l: usize, d: usize, site: usize, op: &CMatrix) -> CMatrix {
    let dim = d.pow(l as u32);
    let mut m = CMatrix::identity(dim, dim);
    apply_left(&mut m, l, d, &[site], op);
    m
}

/// Reduced operator on `site`: `tr_{others}(m) / d^{L−1}`.
pub fn reduce_to_site(m: &CMatrix, l: usize, d: usize, site: usize) -> CMatrix {
    let stride = d.pow((l - 1 - site) as u32);
    let dim = m.nrows();
    let mut out = CMatrix::zeros(d, d);
    for i in 0..dim {
        let a = (i / stride) % d;
        let base = i - a * stride;
        for b in 0..d {
            out[(a, b)] += m[(i, base + b * stride)];
        }
    }
    out / Complex64::new(d.pow((l - 1) as u32) as f64, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::{kron, random_dual_unitary};

    #[test]
    fn two_site_application_matches_kronecker_embedding() {
        let d = 2;
        let g = random_dual_unitary(d, 3).unwrap().into_matrix();
        let id = CMatrix::identity(2, 2);
        // Gate on sites (1,2) of a 3-site register equals 1 ⊗ G.
        let mut m = CMatrix::identity(8, 8);
        apply_left(&mut m, 3, d, &[1, 2], &g);
        let expected = kron(&id, &g);
        assert!(crate::gates::max_abs_diff(&m, &expected) < 1e-12);
        // Gate on sites (0,1) equals G ⊗ 1.
        let mut m = CMatrix::identity(8, 8);
        apply_left(&mut m, 3, d, &[0, 1], &g);
        assert!(crate::gates::max_abs_diff(&m, &kron(&g, &id)) < 1e-12);
    }

    #[test]
    fn reversed_site_order_applies_swapped_gate() {
        let d = 2;
        let g = random_dual_unitary(d, 5).unwrap().into_matrix();
        let s = crate::gates::TwoSiteGate::swap(d).into_matrix();
        let mut a = CMatrix::identity(4, 4);
        apply_left(&mut a, 2, d, &[1, 0], &g);
        let b = &s * &g * &s;
        assert!(crate::gates::max_abs_diff(&a, &b) < 1e-12);
    }

    #[test]
    fn reduce_to_site_inverts_embedding() {
        let op = CMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(0.3, 0.0),
                Complex64::new(0.1, -0.2),
                Complex64::new(0.1, 0.2),
                Complex64::new(-0.3, 0.0),
            ],
        );
        let m = embed_single_site(3, 2, 1, &op);
        let r = reduce_to_site(&m, 3, 2, 1);
        assert!(crate::gates::max_abs_diff(&r, &op) < 1e-12);
    }

    #[test]
    fn register_budget_is_enforced() {
        assert!(register_dim(2, 20, DENSE_LIMIT).is_err());
        assert_eq!(register_dim(3, 2, DENSE_LIMIT).unwrap(), 9);
    }
}
