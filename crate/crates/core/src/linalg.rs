//! Small dense Hermitian linear algebra for the recovery solvers.
//!
//! The splitting solver needs exactly one factorization per problem: a
//! Cholesky of the Gram matrix `AAᴴ` (or `I + AAᴴ`), reused every iteration
//! across right-hand sides and snapshots. Problem sizes are desk scale
//! (`m ≤ a few hundred`), so unblocked O(m³) routines without external
//! BLAS/LAPACK are the simplest dependable choice.
//!
//! [`cholesky_pivoted`] adds diagonal pivoting for positive *semi*-definite
//! matrices (rank-deficient measurement rows); [`solve_psd_pivoted`] then
//! solves `M·x = b` for consistent right-hand sides and reports
//! inconsistency instead of silently least-squares-ing over it.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use ndarray::{Array1, Array2};
use num_traits::{Float, One, Zero};

/// Conjugate transpose.
pub(crate) fn adjoint<S: Scalar>(a: &Array2<S>) -> Array2<S> {
    a.t().mapv(Scalar::conj)
}

/// Frobenius norm.
pub(crate) fn fro_norm<S: Scalar>(a: &Array2<S>) -> S::Real {
    a.iter().map(|&x| x.modulus_sq()).sum::<S::Real>().sqrt()
}

/// Euclidean norm of a vector.
pub(crate) fn vec_norm<S: Scalar>(v: &Array1<S>) -> S::Real {
    v.iter().map(|&x| x.modulus_sq()).sum::<S::Real>().sqrt()
}

/// Lower-triangular Cholesky factor `L` with `M = L·Lᴴ`, for Hermitian
/// positive-definite `M`. Only the lower triangle of `M` is read.
pub(crate) fn cholesky<S: Scalar>(m: &Array2<S>) -> Result<Array2<S>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "cholesky needs a square matrix, got {}×{}",
            n,
            m.ncols()
        )));
    }
    let mut l = Array2::<S>::zeros((n, n));
    for j in 0..n {
        let mut d = m[(j, j)].real_part();
        for k in 0..j {
            d -= l[(j, k)].modulus_sq();
        }
        if !(d > S::Real::zero()) || !d.is_finite() {
            return Err(Error::Numerical(format!(
                "matrix is not positive definite (pivot {d} at column {j})"
            )));
        }
        let djj = d.sqrt();
        l[(j, j)] = S::from_real(djj);
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s.scale(S::Real::one() / djj);
        }
    }
    Ok(l)
}

/// Diagonally pivoted Cholesky for Hermitian positive *semi*-definite `M`:
/// `P·M·Pᵀ = L·Lᴴ` with `L` lower-trapezoidal of the returned numerical
/// rank. Pivots below `rel_tol × max initial diagonal` stop the
/// factorization.
///
/// Returns `(perm, l, rank)` where `perm[i]` is the original index of
/// pivoted row `i`.
pub(crate) fn cholesky_pivoted<S: Scalar>(
    m: &Array2<S>,
    rel_tol: S::Real,
) -> Result<(Vec<usize>, Array2<S>, usize)> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "pivoted cholesky needs a square matrix, got {}×{}",
            n,
            m.ncols()
        )));
    }
    // Work on a full copy; symmetric row/column swaps keep it Hermitian.
    let mut a = m.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let max_diag = (0..n)
        .map(|i| a[(i, i)].real_part())
        .fold(S::Real::zero(), |acc, d| acc.max(d));
    let cutoff = rel_tol * max_diag.max(S::Real::one() * S::Real::epsilon());
    let mut rank = n;
    for j in 0..n {
        // Largest remaining diagonal entry to the front.
        let (piv, dmax) = (j..n)
            .map(|i| (i, a[(i, i)].real_part()))
            .fold((j, S::Real::neg_infinity()), |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            });
        if !dmax.is_finite() {
            return Err(Error::Numerical(
                "non-finite diagonal during pivoted factorization".into(),
            ));
        }
        if dmax <= cutoff {
            rank = j;
            break;
        }
        if piv != j {
            swap_symmetric(&mut a, j, piv);
            perm.swap(j, piv);
        }
        let djj = dmax.sqrt();
        a[(j, j)] = S::from_real(djj);
        for i in (j + 1)..n {
            a[(i, j)] = a[(i, j)].scale(S::Real::one() / djj);
        }
        // Mirror the trailing update so later symmetric swaps stay valid.
        for c in (j + 1)..n {
            for r in c..n {
                let upd = a[(r, j)] * a[(c, j)].conj();
                a[(r, c)] -= upd;
                if r != c {
                    a[(c, r)] = a[(r, c)].conj();
                }
            }
        }
    }
    // Zero the upper triangle and the columns beyond the rank.
    let mut l = Array2::<S>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i.min(rank.saturating_sub(1)) {
            l[(i, j)] = a[(i, j)];
        }
    }
    Ok((perm, l, rank))
}

fn swap_symmetric<S: Scalar>(a: &mut Array2<S>, i: usize, j: usize) {
    let n = a.nrows();
    for c in 0..n {
        let (x, y) = (a[(i, c)], a[(j, c)]);
        a[(i, c)] = y;
        a[(j, c)] = x;
    }
    for r in 0..n {
        let (x, y) = (a[(r, i)], a[(r, j)]);
        a[(r, i)] = y;
        a[(r, j)] = x;
    }
}

/// Solves `L·X = B` in place for lower-triangular `L` (leading `rank`
/// columns), matrix right-hand side.
pub(crate) fn solve_lower_inplace<S: Scalar>(l: &Array2<S>, b: &mut Array2<S>, rank: usize) {
    let ncols = b.ncols();
    for c in 0..ncols {
        for i in 0..rank {
            let mut s = b[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * b[(k, c)];
            }
            b[(i, c)] = s.scale(S::Real::one() / l[(i, i)].real_part());
        }
    }
}

/// Solves `Lᴴ·X = B` in place (back substitution on the adjoint of the
/// leading `rank × rank` triangle).
pub(crate) fn solve_adjoint_inplace<S: Scalar>(l: &Array2<S>, b: &mut Array2<S>, rank: usize) {
    let ncols = b.ncols();
    for c in 0..ncols {
        for i in (0..rank).rev() {
            let mut s = b[(i, c)];
            for k in (i + 1)..rank {
                s -= l[(k, i)].conj() * b[(k, c)];
            }
            b[(i, c)] = s.scale(S::Real::one() / l[(i, i)].real_part());
        }
    }
}

/// Solves `M·X = B` given the plain Cholesky factor `L` of `M`.
pub(crate) fn solve_hermitian<S: Scalar>(l: &Array2<S>, b: &Array2<S>) -> Array2<S> {
    let mut x = b.clone();
    let n = l.nrows();
    solve_lower_inplace(l, &mut x, n);
    solve_adjoint_inplace(l, &mut x, n);
    x
}

/// Solves `M·X = B` through a pivoted factorization of the positive
/// semi-definite `M`; any solution is returned (they differ only by
/// null-space components). Errors with [`Error::Infeasible`] when `B` has a
/// component outside the range of `M` larger than `tol` (relative to `‖B‖`).
pub(crate) fn solve_psd_pivoted<S: Scalar>(
    perm: &[usize],
    l: &Array2<S>,
    rank: usize,
    b: &Array2<S>,
    tol: S::Real,
) -> Result<Array2<S>> {
    let n = l.nrows();
    let ncols = b.ncols();
    // Permute the right-hand side.
    let mut pb = Array2::<S>::zeros((n, ncols));
    for i in 0..n {
        for c in 0..ncols {
            pb[(i, c)] = b[(perm[i], c)];
        }
    }
    // Forward solve on the leading triangle: c = L₁⁻¹ (P·B)[..rank].
    solve_lower_inplace(l, &mut pb, rank);
    // Consistency: the trailing rows must be reproduced by L₂·c.
    let scale = fro_norm(b).max(S::Real::one());
    let mut defect = S::Real::zero();
    for i in rank..n {
        for c in 0..ncols {
            let mut s = pb[(i, c)];
            for k in 0..rank {
                s -= l[(i, k)] * pb[(k, c)];
            }
            defect += s.modulus_sq();
        }
    }
    if defect.sqrt() > tol * scale {
        return Err(Error::Infeasible(format!(
            "right-hand side leaves the range of the rank-{rank} Gram matrix \
             (defect {} vs tolerance {})",
            defect.sqrt(),
            tol * scale
        )));
    }
    // Back solve and un-permute, zero-padding the null-space coordinates.
    solve_adjoint_inplace(l, &mut pb, rank);
    let mut x = Array2::<S>::zeros((n, ncols));
    for i in 0..n {
        for c in 0..ncols {
            x[(perm[i], c)] = if i < rank { pb[(i, c)] } else { S::zero() };
        }
    }
    Ok(x)
}
