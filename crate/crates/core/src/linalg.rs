//! Dense linear-algebra helpers shared by the fitters and the circuit engine.
//!
//! Everything here works on small dense matrices (a few hundred columns at
//! most) and is backed by nalgebra's SVD and real Schur decompositions.

use nalgebra::{DMatrix, DVector, Schur, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

const SCHUR_MAX_ITERS: usize = 20_000;
const SVD_MAX_ITERS: usize = 20_000;

/// Diagonal similarity scaling (Parlett–Reinsch) applied in place.
///
/// Eigenvalues are preserved; row/column norms are equalized with powers of
/// two so no rounding is introduced by the scaling itself.
pub fn balance(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    let radix = 2.0_f64;
    let radix2 = radix * radix;
    let mut converged = false;
    while !converged {
        converged = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].abs();
                    r += m[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / radix;
            while c < g {
                f *= radix;
                c *= radix2;
            }
            g = r * radix;
            while c > g {
                f /= radix;
                c /= radix2;
            }
            if (c + r) / f < 0.95 * s {
                converged = false;
                for j in 0..n {
                    m[(i, j)] /= f;
                }
                for j in 0..n {
                    m[(j, i)] *= f;
                }
            }
        }
    }
}

/// Eigenvalues of a real square matrix. Conjugate pairs come out exactly
/// conjugate and real eigenvalues carry an exactly zero imaginary part.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite entry in eigenvalue problem".into()));
    }
    if n == 1 {
        return Ok(vec![Complex64::new(m[(0, 0)], 0.0)]);
    }
    let mut a = m.clone();
    balance(&mut a);
    // Balancing occasionally stalls the QR iteration on badly graded
    // matrices; the unbalanced matrix is the fallback.
    let schur = Schur::try_new(a, f64::EPSILON, SCHUR_MAX_ITERS)
        .or_else(|| Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITERS))
        .ok_or_else(|| Error::Numeric("real Schur decomposition did not converge".into()))?;
    let mut ev: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    // nalgebra returns pairs as (a+bi, a-bi) from 2x2 blocks; make the pairing exact.
    for v in ev.iter_mut() {
        if v.im == 0.0 {
            *v = Complex64::new(v.re, 0.0);
        }
    }
    Ok(ev)
}

/// Roots of a real polynomial given in ascending-power coefficients.
///
/// Trailing (highest-power) coefficients that are exactly zero are dropped;
/// the remaining leading coefficient defines the companion matrix.
pub fn poly_roots(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    let mut deg = coeffs.len();
    while deg > 0 && coeffs[deg - 1] == 0.0 {
        deg -= 1;
    }
    if deg == 0 {
        return Err(Error::Numeric("zero polynomial has no defined roots".into()));
    }
    let n = deg - 1;
    if n == 0 {
        return Ok(Vec::new());
    }
    let lead = coeffs[n];
    let mut comp = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        comp[(i, n - 1)] = -coeffs[i] / lead;
    }
    eigenvalues(&comp)
}

/// Right singular vector of the smallest singular value, with unit norm.
///
/// Returns the vector together with the full singular-value list
/// (descending) for rank diagnostics.
pub fn null_direction(a: &DMatrix<f64>) -> Result<(DVector<f64>, Vec<f64>)> {
    let ncols = a.ncols();
    if ncols == 0 {
        return Err(Error::Numeric("empty system".into()));
    }
    // Reduce tall systems to their triangular factor first: same right
    // singular vectors, much smaller SVD.
    let reduced = if a.nrows() > ncols {
        a.clone().qr().r()
    } else {
        a.clone()
    };
    let mut padded = reduced;
    if padded.nrows() < ncols {
        padded = padded.resize_vertically(ncols, 0.0);
    }
    let svd = SVD::try_new(padded, false, true, f64::EPSILON, SVD_MAX_ITERS)
        .ok_or_else(|| Error::Numeric("SVD did not converge".into()))?;
    let v_t = svd.v_t.as_ref().expect("requested V");
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let last = sv.len() - 1;
    let mut v: DVector<f64> = v_t.row(last).transpose();
    // Fix the sign so the result is deterministic: largest-magnitude entry positive.
    let (imax, _) = v
        .iter()
        .enumerate()
        .fold((0, 0.0_f64), |acc, (i, x)| if x.abs() > acc.1 { (i, x.abs()) } else { acc });
    if v[imax] < 0.0 {
        v = -v;
    }
    let norm = v.norm();
    Ok((v / norm, sv))
}

/// Minimum-norm least-squares solution of `a x ≈ b`.
///
/// Columns are scaled to unit norm before the SVD; singular values below
/// `rcond` times the largest are treated as zero.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>, rcond: f64) -> Result<DVector<f64>> {
    let ncols = a.ncols();
    if ncols == 0 {
        return Ok(DVector::zeros(0));
    }
    let mut scaled = a.clone();
    let mut scale = vec![1.0; ncols];
    for (j, s) in scale.iter_mut().enumerate() {
        let n = scaled.column(j).norm();
        if n > 0.0 {
            *s = 1.0 / n;
            scaled.column_mut(j).scale_mut(*s);
        }
    }
    // Thin QR first, then SVD of the small triangular factor.
    let (q_tb, r) = if scaled.nrows() > ncols {
        let qr = scaled.qr();
        let q = qr.q();
        (q.transpose() * b, qr.r())
    } else {
        (b.clone(), scaled)
    };
    let svd = SVD::try_new(r, true, true, f64::EPSILON, SVD_MAX_ITERS)
        .ok_or_else(|| Error::Numeric("SVD did not converge".into()))?;
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let x = svd
        .solve(&q_tb, smax * rcond)
        .map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(DVector::from_iterator(
        ncols,
        x.iter().zip(scale.iter()).map(|(v, s)| v * s),
    ))
}

/// Upper triangular factor of the QR decomposition (min(m, n) × n).
pub fn qr_r(a: DMatrix<f64>) -> DMatrix<f64> {
    a.qr().r()
}

/// Finite generalized eigenvalues λ of `det(a - λ b) = 0`.
///
/// Solved by shift-and-invert: with `k = a - σb` nonsingular, the
/// eigenvalues μ of `k⁻¹ b` satisfy `λ = σ + 1/μ`. Eigenvalues with
/// `|λ| > cutoff` (including μ = 0) are counted as infinite. Shifts are
/// tried as multiples of `scale` until `k` is well conditioned.
///
/// Returns `None` when every shift leaves `k` singular, i.e. the pencil is
/// singular for all λ.
pub fn generalized_eigenvalues(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    scale: f64,
    cutoff: f64,
) -> Result<Option<(Vec<Complex64>, usize)>> {
    for factor in [0.371, -0.529, 1.137, -2.41, 0.0173, 5.3] {
        let sigma = factor * scale;
        let k = a - b * sigma;
        let sv = k.clone().svd(false, false).singular_values;
        let (smax, smin) = (sv.max(), sv.min());
        if !(smin > 1e-13 * smax) {
            continue;
        }
        let Some(m) = k.lu().solve(b) else { continue };
        let mut finite = Vec::new();
        let mut infinite = 0;
        for mu in eigenvalues(&m)? {
            if mu == Complex64::new(0.0, 0.0) {
                infinite += 1;
                continue;
            }
            let lambda = Complex64::new(sigma, 0.0) + mu.inv();
            if lambda.norm() <= cutoff && lambda.re.is_finite() && lambda.im.is_finite() {
                finite.push(lambda);
            } else {
                infinite += 1;
            }
        }
        return Ok(Some((finite, infinite)));
    }
    Ok(None)
}
