//! Small dense linear algebra over [`Scalar`] entries.
//!
//! The fundamental tensor is indefinite, so systems with it are solved by a
//! symmetric block LDLᵀ elimination with Bunch–Parlett pivoting. Pivots are
//! chosen from constant terms, which makes the same routine usable for plain
//! floats and for jets.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::jets::Scalar;

/// Default pivot tolerance, relative to the largest entry.
pub const PIVOT_TOL: f64 = 1e-12;

const ALPHA: f64 = 0.640_388_203_202_208_4; // (1 + sqrt(17)) / 8

/// Solve `A X = B` for symmetric `A` (row-major `n×n`) and `m` right-hand
/// sides given as rows of `b` (`b[k]` is the k-th right-hand side).
pub fn sym_solve<S: Scalar>(a: &[Vec<S>], b: &[Vec<S>], tol: f64) -> Result<Vec<Vec<S>>> {
    let n = a.len();
    let mut a: Vec<Vec<S>> = a.to_vec();
    // rhs stored column-wise per unknown row: rhs[i][k]
    let m = b.len();
    let mut rhs: Vec<Vec<S>> = (0..n).map(|i| (0..m).map(|k| b[k][i].clone()).collect()).collect();
    let mut perm: Vec<usize> = (0..n).collect();
    let scale = a
        .iter()
        .flat_map(|r| r.iter().map(|x| x.value().abs()))
        .fold(0.0_f64, f64::max);
    if scale == 0.0 {
        return Err(Error::Degenerate("zero matrix".into()));
    }
    let thresh = tol * scale;

    let swap = |a: &mut Vec<Vec<S>>, rhs: &mut Vec<Vec<S>>, perm: &mut Vec<usize>, i: usize, j: usize| {
        if i == j {
            return;
        }
        a.swap(i, j);
        for row in a.iter_mut() {
            row.swap(i, j);
        }
        rhs.swap(i, j);
        perm.swap(i, j);
    };

    let mut blocks = Vec::new();
    let mut k = 0;
    while k < n {
        let mut diag_max = 0.0;
        let mut diag_idx = k;
        let mut off_max = 0.0;
        let mut off_idx = (k, k);
        for i in k..n {
            let d = a[i][i].value().abs();
            if d > diag_max {
                diag_max = d;
                diag_idx = i;
            }
            for j in (i + 1)..n {
                let o = a[i][j].value().abs();
                if o > off_max {
                    off_max = o;
                    off_idx = (i, j);
                }
            }
        }
        if diag_max.max(off_max) <= thresh {
            return Err(Error::Degenerate(format!(
                "pivot {:.3e} below tolerance {:.3e}",
                diag_max.max(off_max),
                thresh
            )));
        }
        if diag_max >= ALPHA * off_max || k + 1 == n {
            swap(&mut a, &mut rhs, &mut perm, k, diag_idx);
            let piv = a[k][k].clone();
            for i in (k + 1)..n {
                let l = a[i][k].try_div(&piv)?;
                for j in (k + 1)..n {
                    let upd = a[i][j].clone() - l.clone() * a[k][j].clone();
                    a[i][j] = upd;
                }
                for c in 0..m {
                    let upd = rhs[i][c].clone() - l.clone() * rhs[k][c].clone();
                    rhs[i][c] = upd;
                }
            }
            blocks.push((k, 1));
            k += 1;
        } else {
            let (p, q) = off_idx;
            swap(&mut a, &mut rhs, &mut perm, k, p);
            let q = if q == k { p } else { q };
            swap(&mut a, &mut rhs, &mut perm, k + 1, q);
            let (p11, p12, p22) = (a[k][k].clone(), a[k][k + 1].clone(), a[k + 1][k + 1].clone());
            let det = p11.clone() * p22.clone() - p12.clone() * p12.clone();
            if det.value().abs() <= thresh * thresh {
                return Err(Error::Degenerate("singular 2x2 pivot".into()));
            }
            for i in (k + 2)..n {
                let (ai0, ai1) = (a[i][k].clone(), a[i][k + 1].clone());
                let l0 = (ai0.clone() * p22.clone() - ai1.clone() * p12.clone()).try_div(&det)?;
                let l1 = (ai1 * p11.clone() - ai0 * p12.clone()).try_div(&det)?;
                for j in (k + 2)..n {
                    let upd = a[i][j].clone() - l0.clone() * a[k][j].clone() - l1.clone() * a[k + 1][j].clone();
                    a[i][j] = upd;
                }
                for c in 0..m {
                    let upd = rhs[i][c].clone()
                        - l0.clone() * rhs[k][c].clone()
                        - l1.clone() * rhs[k + 1][c].clone();
                    rhs[i][c] = upd;
                }
            }
            blocks.push((k, 2));
            k += 2;
        }
    }

    let mut y: Vec<Vec<Option<S>>> = vec![vec![None; m]; n];
    for &(k, size) in blocks.iter().rev() {
        for c in 0..m {
            let mut r: Vec<S> = (k..k + size)
                .map(|row| {
                    let mut acc = rhs[row][c].clone();
                    for j in (k + size)..n {
                        let yj = y[j][c].clone().expect("solved");
                        acc = acc - a[row][j].clone() * yj;
                    }
                    acc
                })
                .collect();
            if size == 1 {
                y[k][c] = Some(r.pop().expect("one row").try_div(&a[k][k])?);
            } else {
                let (p11, p12, p22) = (a[k][k].clone(), a[k][k + 1].clone(), a[k + 1][k + 1].clone());
                let det = p11.clone() * p22.clone() - p12.clone() * p12.clone();
                let (r0, r1) = (r[0].clone(), r[1].clone());
                y[k][c] = Some((r0.clone() * p22 - r1.clone() * p12.clone()).try_div(&det)?);
                y[k + 1][c] = Some((r1 * p11 - r0 * p12).try_div(&det)?);
            }
        }
    }

    let mut x: Vec<Vec<Option<S>>> = vec![vec![None; n]; m];
    for (row, &orig) in perm.iter().enumerate() {
        for c in 0..m {
            x[c][orig] = y[row][c].take();
        }
    }
    Ok(x
        .into_iter()
        .map(|col| col.into_iter().map(|e| e.expect("filled")).collect())
        .collect())
}

/// Inverse of a symmetric float matrix via [`sym_solve`].
pub fn sym_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a[(i, j)]).collect()).collect();
    let eye: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let cols = sym_solve(&rows, &eye, PIVOT_TOL)?;
    Ok(DMatrix::from_fn(n, n, |i, j| cols[j][i]))
}

/// Bilinear form `uᵀ g w`.
pub fn bilinear(g: &DMatrix<f64>, u: &[f64], w: &[f64]) -> f64 {
    let n = u.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += u[i] * g[(i, j)] * w[j];
        }
    }
    acc
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let sym = (a + a.transpose()) * 0.5;
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

/// Gram–Schmidt under the Lorentzian form `g` starting from the timelike `v`,
/// completed with coordinate axes. Returns `[v/F(v), e_1, …, e_n]` with
/// `g(e_0,e_0) = -1`, `g(e_i,e_j) = δ_ij`.
pub fn lorentz_gram_schmidt(g: &DMatrix<f64>, v: &[f64]) -> Result<Vec<Vec<f64>>> {
    let dim = v.len();
    let lv = bilinear(g, v, v);
    if lv >= 0.0 {
        return Err(Error::Degenerate("frame seed is not timelike".into()));
    }
    let f = (-lv).sqrt();
    let mut frame: Vec<Vec<f64>> = vec![v.iter().map(|c| c / f).collect()];
    let mut norms = vec![-1.0];
    let mut axis = 0;
    while frame.len() < dim {
        if axis >= dim {
            return Err(Error::Degenerate("Gram–Schmidt breakdown".into()));
        }
        let mut w = vec![0.0; dim];
        w[axis] = 1.0;
        axis += 1;
        // two passes for stability
        for _ in 0..2 {
            for (e, &s) in frame.iter().zip(&norms) {
                let p = bilinear(g, &w, e) * s;
                for (wi, ei) in w.iter_mut().zip(e) {
                    *wi -= p * ei;
                }
            }
        }
        let q = bilinear(g, &w, &w);
        let wn: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if q <= 1e-10 * wn * wn.max(1.0) {
            continue;
        }
        let s = q.sqrt();
        frame.push(w.iter().map(|c| c / s).collect());
        norms.push(1.0);
    }
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::Jet;

    #[test]
    fn indefinite_solve_needs_pivoting() {
        // zero diagonal forces a 2x2 pivot
        let a = vec![vec![0.0, 2.0, 1.0], vec![2.0, 0.0, 3.0], vec![1.0, 3.0, -1.0]];
        let x_true = [1.0, -2.0, 0.5];
        let b: Vec<f64> = (0..3).map(|i| (0..3).map(|j| a[i][j] * x_true[j]).sum()).collect();
        let x = sym_solve(&a, &[b], PIVOT_TOL).unwrap();
        for (xi, ti) in x[0].iter().zip(x_true) {
            assert!((xi - ti).abs() < 1e-13);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        assert!(sym_solve(&a, &[vec![1.0, 0.0]], PIVOT_TOL).is_err());
    }

    #[test]
    fn jet_solve_differentiates_inverse() {
        // A(t) = [[-1-t, t],[t, 1]], x = A^{-1} e0, compare d/dt with -A^{-1} A' A^{-1} e0
        let t = &Jet::lift(&[0.3], 1)[0];
        let a = vec![
            vec![-(t.clone() + 1.0), t.clone()],
            vec![t.clone(), t.constant_like(1.0)],
        ];
        let e0 = vec![t.constant_like(1.0), t.constant_like(0.0)];
        let x = sym_solve(&a, &[e0], PIVOT_TOL).unwrap();
        let a0 = DMatrix::from_row_slice(2, 2, &[-1.3, 0.3, 0.3, 1.0]);
        let da = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, 0.0]);
        let inv = a0.clone().try_inverse().unwrap();
        let dx = -&inv * da * &inv;
        for i in 0..2 {
            assert!((x[0][i].value() - inv[(i, 0)]).abs() < 1e-14);
            assert!((x[0][i].d1(0) - dx[(i, 0)]).abs() < 1e-13);
        }
    }

    #[test]
    fn gram_schmidt_minkowski() {
        let g = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, 1.0, 1.0]));
        let f = lorentz_gram_schmidt(&g, &[2.0, 1.0, 0.0]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i != j { 0.0 } else if i == 0 { -1.0 } else { 1.0 };
                assert!((bilinear(&g, &f[i], &f[j]) - want).abs() < 1e-13);
            }
        }
    }
}
