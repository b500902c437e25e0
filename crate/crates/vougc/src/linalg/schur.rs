//! Real Schur decomposition with eigenvalue reordering.
//!
//! nalgebra provides the (unordered) real Schur form; the reordering needed to
//! isolate an invariant subspace is done here by swapping adjacent diagonal
//! blocks, Bai-Demmel style: solve the small Sylvester equation coupling the
//! two blocks, then rotate with an orthogonal completion of the swapped
//! subspace basis.

use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Real Schur decomposition M = Q T Q^T with T quasi-upper-triangular.
pub fn real_schur(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    super::require_square(m)?;
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Degeneracy("Schur iteration failed to converge".into()))?;
    let (q, mut t) = schur.unpack();
    clean_subdiagonal(&mut t);
    Ok((q, t))
}

/// Zero negligible subdiagonal entries so the block structure is unambiguous.
fn clean_subdiagonal(t: &mut DMatrix<f64>) {
    let n = t.nrows();
    for i in 0..n.saturating_sub(1) {
        let scale = t[(i, i)].abs() + t[(i + 1, i + 1)].abs();
        if t[(i + 1, i)].abs() <= f64::EPSILON * scale {
            t[(i + 1, i)] = 0.0;
        }
    }
    // everything below the first subdiagonal is structurally zero
    for j in 0..n {
        for i in (j + 2)..n {
            t[(i, j)] = 0.0;
        }
    }
}

/// Diagonal block layout of a quasi-triangular matrix: (start, size) pairs.
fn blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            out.push((i, 2));
            i += 2;
        } else {
            out.push((i, 1));
            i += 1;
        }
    }
    out
}

/// Eigenvalues of the diagonal block at (start, start) of the given size.
fn block_eigenvalues(t: &DMatrix<f64>, start: usize, size: usize) -> Vec<Complex64> {
    if size == 1 {
        return vec![Complex64::new(t[(start, start)], 0.0)];
    }
    let a = t[(start, start)];
    let b = t[(start, start + 1)];
    let c = t[(start + 1, start)];
    let d = t[(start + 1, start + 1)];
    let mean = 0.5 * (a + d);
    let disc = 0.25 * (a - d) * (a - d) + b * c;
    if disc >= 0.0 {
        let r = disc.sqrt();
        vec![
            Complex64::new(mean + r, 0.0),
            Complex64::new(mean - r, 0.0),
        ]
    } else {
        let r = (-disc).sqrt();
        vec![Complex64::new(mean, r), Complex64::new(mean, -r)]
    }
}

/// Solve the small Sylvester equation A11 X - X A22 = C (sizes <= 2) by a
/// Kronecker-product linear solve. Fails when the block spectra overlap.
fn small_sylvester(
    a11: &DMatrix<f64>,
    a22: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let p = a11.nrows();
    let q = a22.nrows();
    let dim = p * q;
    let mut k = DMatrix::<f64>::zeros(dim, dim);
    // column-major vec: row index i + p*j for X[(i, j)]
    for j in 0..q {
        for i in 0..p {
            let row = i + p * j;
            for l in 0..p {
                k[(row, l + p * j)] += a11[(i, l)];
            }
            for l in 0..q {
                k[(row, i + p * l)] -= a22[(l, j)];
            }
        }
    }
    let rhs = DVector::from_fn(dim, |r, _| c[(r % p, r / p)]);
    let scale = super::max_abs(a11).max(super::max_abs(a22)).max(1e-300);
    let lu = k.clone().lu();
    let det = lu.determinant().abs();
    if det <= 1e-13 * scale.powi(dim as i32) {
        return Err(Error::Degeneracy(
            "cannot reorder Schur form: adjacent blocks have overlapping spectra".into(),
        ));
    }
    let x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Degeneracy("Sylvester solve failed in Schur reordering".into()))?;
    Ok(DMatrix::from_fn(p, q, |i, j| x[i + p * j]))
}

/// Orthonormal completion: given a full-column-rank w x q matrix, return an
/// orthogonal w x w matrix whose first q columns span the same space.
fn orthonormal_completion(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let w = basis.nrows();
    let q = basis.ncols();
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(w);
    let push = |v: DVector<f64>, cols: &mut Vec<DVector<f64>>| -> bool {
        let mut u = v;
        for c in cols.iter() {
            let proj = c.dot(&u);
            u -= c * proj;
        }
        // reorthogonalize once
        for c in cols.iter() {
            let proj = c.dot(&u);
            u -= c * proj;
        }
        let norm = u.norm();
        if norm > 1e-12 {
            cols.push(u / norm);
            true
        } else {
            false
        }
    };
    for j in 0..q {
        let ok = push(basis.column(j).into_owned(), &mut cols);
        debug_assert!(ok, "swap basis must have full column rank");
    }
    let mut e = 0;
    while cols.len() < w && e < w {
        let mut unit = DVector::zeros(w);
        unit[e] = 1.0;
        push(unit, &mut cols);
        e += 1;
    }
    DMatrix::from_columns(&cols)
}

/// Swap the adjacent diagonal blocks at `i` (sizes p then q) in place,
/// updating T and accumulating the rotation into Q.
fn swap_adjacent(
    t: &mut DMatrix<f64>,
    q_acc: &mut DMatrix<f64>,
    i: usize,
    p: usize,
    q: usize,
) -> Result<()> {
    let n = t.nrows();
    let w = p + q;
    let a11 = t.view((i, i), (p, p)).into_owned();
    let a12 = t.view((i, i + p), (p, q)).into_owned();
    let a22 = t.view((i + p, i + p), (q, q)).into_owned();
    let x = small_sylvester(&a11, &a22, &(-a12))?;
    // [X; I] spans the invariant subspace of the trailing block's eigenvalues
    let mut basis = DMatrix::zeros(w, q);
    basis.view_mut((0, 0), (p, q)).copy_from(&x);
    for j in 0..q {
        basis[(p + j, j)] = 1.0;
    }
    let g = orthonormal_completion(&basis);
    // similarity transform restricted to rows/columns i..i+w
    let rows = t.view((i, 0), (w, n)).into_owned();
    t.view_mut((i, 0), (w, n)).copy_from(&(g.transpose() * rows));
    let cols = t.view((0, i), (n, w)).into_owned();
    t.view_mut((0, i), (n, w)).copy_from(&(cols * &g));
    let qc = q_acc.view((0, i), (n, w)).into_owned();
    q_acc.view_mut((0, i), (n, w)).copy_from(&(qc * &g));
    // enforce the block-triangular structure exactly
    for col in i..(i + q) {
        for row in (col + 1).max(i + q)..(i + w) {
            t[(row, col)] = 0.0;
        }
    }
    if q == 2 && t[(i + 1, i)].abs() <= f64::EPSILON * (t[(i, i)].abs() + t[(i + 1, i + 1)].abs())
    {
        t[(i + 1, i)] = 0.0;
    }
    if p == 2 {
        let s = i + q;
        if t[(s + 1, s)].abs() <= f64::EPSILON * (t[(s, s)].abs() + t[(s + 1, s + 1)].abs()) {
            t[(s + 1, s)] = 0.0;
        }
    }
    Ok(())
}

/// Ordered real Schur decomposition: M = Q T Q^T with all eigenvalues
/// satisfying `select` moved to the leading diagonal blocks of T. Returns
/// (Q, T, k) where k is the number of selected eigenvalues.
///
/// 2x2 blocks (complex pairs) are selected as a unit; `select` sees the
/// eigenvalue with nonnegative imaginary part.
pub fn ordered_schur(
    m: &DMatrix<f64>,
    select: impl Fn(Complex64) -> bool,
) -> Result<(DMatrix<f64>, DMatrix<f64>, usize)> {
    let (mut q, mut t) = real_schur(m)?;
    let selected = |t: &DMatrix<f64>, start: usize, size: usize| -> bool {
        let eigs = block_eigenvalues(t, start, size);
        let rep = eigs
            .iter()
            .copied()
            .find(|z| z.im >= 0.0)
            .unwrap_or(eigs[0]);
        select(rep)
    };
    loop {
        let layout = blocks(&t);
        // find the first unselected block followed by a selected one
        let mut swapped = false;
        for w in layout.windows(2) {
            let (s0, z0) = w[0];
            let (_, z1) = w[1];
            if !selected(&t, s0, z0) && selected(&t, s0 + z0, z1) {
                swap_adjacent(&mut t, &mut q, s0, z0, z1)?;
                swapped = true;
                break;
            }
        }
        if !swapped {
            break;
        }
    }
    let mut count = 0;
    for (s, z) in blocks(&t) {
        if selected(&t, s, z) {
            count += z;
        } else {
            break;
        }
    }
    Ok((q, t, count))
}
