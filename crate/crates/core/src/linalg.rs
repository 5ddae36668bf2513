//! Dense linear-algebra helpers shared by the system, fitting and margin code.
//!
//! Everything here works on `nalgebra::DMatrix`. Complex solves go through LU with
//! partial pivoting; the ratio of smallest to largest pivot magnitude is used as a
//! cheap reciprocal-condition estimate.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Pivot ratios below this are treated as an exactly singular solve.
pub const DEFAULT_MIN_PIVOT_RATIO: f64 = 1e-20;

/// Eigenvalues `mu` of the shift-inverted pencil with `|mu| <= INFINITE_EIG_TOL * max|mu|`
/// are reported as infinite generalized eigenvalues.
pub const INFINITE_EIG_TOL: f64 = 1e-12;

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Smallest over largest |U_ii| of an LU factorization; 0 for an exactly singular matrix.
pub fn pivot_ratio(u_diag: impl Iterator<Item = f64>) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    let mut any = false;
    for d in u_diag {
        any = true;
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if !any {
        return 1.0;
    }
    if hi == 0.0 || !lo.is_finite() {
        0.0
    } else {
        lo / hi
    }
}

/// Solve `m x = rhs` for complex `m`. Returns `None` when the pivot ratio falls below
/// `min_pivot_ratio` or the solution is not finite.
pub fn solve_complex(m: CMatrix, rhs: &CMatrix, min_pivot_ratio: f64) -> Option<CMatrix> {
    if m.nrows() == 0 {
        return Some(CMatrix::zeros(0, rhs.ncols()));
    }
    let lu = m.lu();
    let u = lu.u();
    let ratio = pivot_ratio(u.diagonal().iter().map(|z| z.norm()));
    if ratio < min_pivot_ratio {
        return None;
    }
    let x = lu.solve(rhs)?;
    if x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Some(x)
    } else {
        None
    }
}

/// Real counterpart of [`solve_complex`].
pub fn solve_real(m: DMatrix<f64>, rhs: &DMatrix<f64>, min_pivot_ratio: f64) -> Option<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Some(DMatrix::zeros(0, rhs.ncols()));
    }
    let lu = m.lu();
    let ratio = pivot_ratio(lu.u().diagonal().iter().map(|x| x.abs()));
    if ratio < min_pivot_ratio {
        return None;
    }
    let x = lu.solve(rhs)?;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

pub fn real_pivot_ratio(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let lu = m.clone().lu();
    pivot_ratio(lu.u().diagonal().iter().map(|x| x.abs()))
}

/// Eigenvalues of a real square matrix via the real Schur form.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Eigen("matrix has non-finite entries".into()));
    }
    let schur = m
        .clone()
        .try_schur(f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Eigen("Schur iteration did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Shift used to invert a pencil `(A, E)`: the candidate giving the best-conditioned
/// `A - sigma E`.
pub fn pencil_shift(a: &DMatrix<f64>, e: &DMatrix<f64>) -> Result<(f64, f64)> {
    let na = a.norm();
    let ne = e.norm();
    let scale = if ne > 0.0 && na > 0.0 { na / ne } else { 1.0 };
    // Irrational-looking multipliers keep the shift off structured eigenvalues.
    #[allow(clippy::approx_constant)]
    const CANDIDATES: [f64; 8] = [0.7071, -1.3183, 2.2361, -0.4142, 3.6056, 0.1732, -5.099, 9.1104];
    let mut best = (0.0, -1.0);
    for c in CANDIDATES {
        let sigma = c * scale;
        let ratio = real_pivot_ratio(&(a - e * sigma));
        if ratio > best.1 {
            best = (sigma, ratio);
        }
    }
    if best.1 <= 0.0 {
        return Err(Error::SingularPencil);
    }
    Ok(best)
}

/// Finite generalized eigenvalues of `(A, E)` (solutions of det(sE - A) = 0) and the
/// count of infinite ones.
pub fn generalized_eigenvalues(a: &DMatrix<f64>, e: &DMatrix<f64>) -> Result<(Vec<Complex64>, usize)> {
    let n = a.nrows();
    if n == 0 {
        return Ok((Vec::new(), 0));
    }
    let (sigma, _) = pencil_shift(a, e)?;
    let shifted = a - e * sigma;
    let m = solve_real(shifted, e, 0.0).ok_or(Error::SingularPencil)?;
    let mus = eigenvalues(&m)?;
    let max_mu = mus.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut finite = Vec::with_capacity(n);
    let mut infinite = 0;
    for mu in mus {
        if mu.norm() <= INFINITE_EIG_TOL * max_mu || max_mu == 0.0 {
            infinite += 1;
        } else {
            finite.push(Complex64::new(sigma, 0.0) + mu.inv());
        }
    }
    Ok((finite, infinite))
}

/// Right eigenvectors of a complex matrix for the given eigenvalues, by inverse iteration.
pub fn eigenvectors(m: &CMatrix, eigs: &[Complex64]) -> Result<CMatrix> {
    let n = m.nrows();
    let mut out = CMatrix::zeros(n, eigs.len());
    let scale = m.norm().max(f64::MIN_POSITIVE);
    for (k, &lambda) in eigs.iter().enumerate() {
        // Tiny perturbation keeps the shifted matrix invertible in floating point.
        let shift = lambda + Complex64::new(scale * 1e-13, scale * 7e-14);
        let shifted = m - CMatrix::identity(n, n) * shift;
        let lu = shifted.lu();
        let mut v = CMatrix::from_fn(n, 1, |i, _| Complex64::new(1.0 + 0.1 * i as f64, 0.0));
        for _ in 0..3 {
            v = lu.solve(&v).ok_or_else(|| Error::Eigen(format!("inverse iteration failed at {lambda}")))?;
            let nv = v.norm();
            if !(nv.is_finite() && nv > 0.0) {
                return Err(Error::Eigen(format!("inverse iteration diverged at {lambda}")));
            }
            v /= Complex64::new(nv, 0.0);
        }
        out.set_column(k, &v.column(0));
    }
    Ok(out)
}

/// Thin SVD with singular values sorted in decreasing order: `(U, sigma, V)` with
/// `m = U diag(sigma) V^T`.
pub fn svd_sorted(m: DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let svd = m.svd(true, true);
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested V^T").transpose();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sigma = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u_sorted = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let v_sorted = DMatrix::from_fn(v.nrows(), order.len(), |r, c| v[(r, order[c])]);
    (u_sorted, sigma, v_sorted)
}
