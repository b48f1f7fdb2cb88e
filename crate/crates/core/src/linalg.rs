//! Dense linear-algebra helpers shared by the model, estimator and bounds.

use nalgebra::{Complex, ComplexField, DMatrix, DVector};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;
pub type RMatrix = DMatrix<f64>;
pub type RVector = DVector<f64>;

/// Relative singular-value cutoff for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Kronecker product `a ⊗ b`.
pub fn kron<T: ComplexField + Copy>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = DMatrix::zeros(ar * br, ac * bc);
    for j in 0..ac {
        for i in 0..ar {
            let s = a[(i, j)];
            for q in 0..bc {
                for p in 0..br {
                    out[(i * br + p, j * bc + q)] = s * b[(p, q)];
                }
            }
        }
    }
    out
}

pub fn to_complex(m: &RMatrix) -> CMatrix {
    m.map(|v| C64::new(v, 0.0))
}

/// Column groups that share no nonzero row, with the rows each group touches.
///
/// Least-squares problems over disjoint groups decouple exactly.
pub fn column_components(a: &CMatrix) -> Vec<(Vec<usize>, Vec<usize>)> {
    let (rows, cols) = a.shape();
    let mut parent: Vec<usize> = (0..cols).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut row_anchor = vec![usize::MAX; rows];
    for i in 0..rows {
        for j in 0..cols {
            if a[(i, j)] != C64::new(0.0, 0.0) {
                if row_anchor[i] == usize::MAX {
                    row_anchor[i] = j;
                } else {
                    let (ra, rb) = (find(&mut parent, row_anchor[i]), find(&mut parent, j));
                    if ra != rb {
                        parent[rb] = ra;
                    }
                }
            }
        }
    }
    let mut index_of_root = vec![usize::MAX; cols];
    let mut groups: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    for j in 0..cols {
        let r = find(&mut parent, j);
        if index_of_root[r] == usize::MAX {
            index_of_root[r] = groups.len();
            groups.push((Vec::new(), Vec::new()));
        }
        groups[index_of_root[r]].0.push(j);
    }
    for (i, &anchor) in row_anchor.iter().enumerate() {
        if anchor != usize::MAX {
            let r = find(&mut parent, anchor);
            groups[index_of_root[r]].1.push(i);
        }
    }
    groups
}

/// Minimum-norm-residual solution of `a x ≈ b` for full-column-rank `a`.
///
/// Independent column groups are solved separately with an SVD each; singular
/// values below `RANK_TOL * sigma_max` (global maximum) count as zero and make
/// the problem rank deficient.
pub fn least_squares(a: &CMatrix, b: &CVector) -> Result<CVector> {
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "least_squares rhs",
            expected: a.nrows(),
            actual: b.len(),
        });
    }
    let cols = a.ncols();
    let groups = column_components(a);
    let mut svds = Vec::with_capacity(groups.len());
    let mut sigma_max = 0.0f64;
    for (gcols, grows) in &groups {
        if grows.len() < gcols.len() {
            return Err(Error::RankDeficient {
                rank: grows.len(),
                cols,
            });
        }
        let sub = CMatrix::from_fn(grows.len(), gcols.len(), |i, j| a[(grows[i], gcols[j])]);
        let svd = sub.svd(true, true);
        sigma_max = svd.singular_values.iter().fold(sigma_max, |m, &s| m.max(s));
        svds.push(svd);
    }
    let cutoff = RANK_TOL * sigma_max;
    let rank: usize = svds
        .iter()
        .map(|s| s.singular_values.iter().filter(|&&v| v > cutoff).count())
        .sum();
    if rank < cols || sigma_max == 0.0 {
        return Err(Error::RankDeficient { rank, cols });
    }
    let mut x = CVector::zeros(cols);
    for ((gcols, grows), svd) in groups.iter().zip(svds) {
        let rhs = CVector::from_fn(grows.len(), |i, _| b[grows[i]]);
        let u = svd.u.as_ref().expect("u requested");
        let v_t = svd.v_t.as_ref().expect("v_t requested");
        let mut coef = u.adjoint() * rhs;
        for (c, &s) in coef.iter_mut().zip(svd.singular_values.iter()) {
            *c /= s;
        }
        let sol = v_t.adjoint() * coef;
        for (k, &j) in gcols.iter().enumerate() {
            x[j] = sol[k];
        }
    }
    Ok(x)
}

/// Moore-Penrose pseudo-inverse through an SVD with the `RANK_TOL` cutoff.
pub fn pinv(a: &CMatrix) -> CMatrix {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = RANK_TOL * smax;
    let u = svd.u.as_ref().unwrap();
    let v_t = svd.v_t.as_ref().unwrap();
    let mut out = CMatrix::zeros(a.ncols(), a.nrows());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            let vk = v_t.row(k).adjoint();
            let uk = u.column(k).adjoint();
            out += (vk * uk).map(|z| z / s);
        }
    }
    out
}

/// Symmetrizes a real matrix in place: `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut RMatrix) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Hermitian symmetrization `(m + mᴴ) / 2`.
pub fn hermitize(m: &mut CMatrix) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)].im = 0.0;
        for j in (i + 1)..n {
            let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn kron_small() {
        let a = RMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let b = RMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        let k = kron(&a, &b);
        assert_eq!(k, RMatrix::from_row_slice(2, 2, &[3.0, 4.0, 6.0, 8.0]));
    }

    #[test]
    fn least_squares_matches_normal_equations() {
        let a = CMatrix::from_row_slice(
            4,
            2,
            &[c(1.0, 0.5), c(0.0, 0.0), c(0.3, -1.0), c(0.0, 0.0), c(0.0, 0.0), c(2.0, 1.0), c(0.0, 0.0), c(-0.5, 0.2)],
        );
        let b = CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 2.0), c(0.5, 0.5)]);
        let x = least_squares(&a, &b).unwrap();
        let ah = a.adjoint();
        let normal = (&ah * &a).try_inverse().unwrap() * &ah * &b;
        assert!((x - normal).norm() < 1e-12);
        assert_eq!(column_components(&a).len(), 2);
    }

    #[test]
    fn least_squares_flags_rank_deficiency() {
        let a = CMatrix::from_row_slice(3, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(4.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)]);
        let b = CVector::from_element(3, c(1.0, 0.0));
        assert!(matches!(least_squares(&a, &b), Err(Error::RankDeficient { .. })));
        let zero_col = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        assert!(least_squares(&zero_col, &CVector::zeros(2)).is_err());
    }

    #[test]
    fn pinv_penrose_identity() {
        let a = CMatrix::from_row_slice(3, 2, &[c(1.0, 1.0), c(0.0, 2.0), c(-1.0, 0.0), c(0.5, 0.5), c(0.0, 0.0), c(1.0, -1.0)]);
        let p = pinv(&a);
        assert!((&a * &p * &a - &a).norm() < 1e-12);
        assert!((&p * &a * &p - &p).norm() < 1e-12);
    }
}
