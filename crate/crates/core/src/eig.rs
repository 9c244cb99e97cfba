//! Thin safe wrappers over LAPACK's dense complex eigensolvers.
//!
//! Only two routines are needed: `zgeev` for general complex spectra (the
//! Liouvillian and the small Arnoldi Hessenberg matrices) and `zheev` for
//! Hermitian eigenvalues (density-matrix positivity checks). Matrices are
//! copied into column-major scratch buffers at the call boundary; everything
//! else in the crate stays row-major.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{CoreError, Result};

/// Eigenvalues and (optionally) right eigenvectors of a general complex
/// matrix. `vectors` holds one normalized eigenvector per column, aligned
/// with `values`.
pub struct EigDecomposition {
    pub values: Vec<Complex64>,
    pub vectors: Option<Array2<Complex64>>,
}

fn to_col_major(a: &Array2<Complex64>) -> Vec<Complex64> {
    let n = a.nrows();
    let mut buf = vec![Complex64::default(); n * n];
    for j in 0..n {
        for i in 0..n {
            buf[j * n + i] = a[(i, j)];
        }
    }
    buf
}

/// Full eigendecomposition via `zgeev`.
pub fn eig_general(a: &Array2<Complex64>, want_vectors: bool) -> Result<EigDecomposition> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(CoreError::DimensionMismatch { expected: n, got: a.ncols() });
    }
    if n == 0 {
        return Ok(EigDecomposition { values: vec![], vectors: None });
    }
    let n_i = n as i32;
    let mut buf = to_col_major(a);
    let mut w = vec![Complex64::default(); n];
    let mut vr = if want_vectors { vec![Complex64::default(); n * n] } else { vec![] };
    let jobvr: &[u8] = if want_vectors { b"V" } else { b"N" };
    let ldvr = if want_vectors { n_i } else { 1 };
    let mut rwork = vec![0.0f64; 2 * n];
    let mut info = 0i32;

    // Workspace query, then the real call.
    let mut work_len = {
        let mut probe = [Complex64::default(); 1];
        let lwork = -1i32;
        unsafe {
            lapack_sys::zgeev_(
                b"N".as_ptr().cast(),
                jobvr.as_ptr().cast(),
                &n_i,
                buf.as_mut_ptr().cast(),
                &n_i,
                w.as_mut_ptr().cast(),
                std::ptr::null_mut(),
                &1,
                vr.as_mut_ptr().cast(),
                &ldvr,
                probe.as_mut_ptr().cast(),
                &lwork,
                rwork.as_mut_ptr(),
                &mut info,
            );
        }
        if info != 0 {
            return Err(CoreError::LapackFailure { routine: "zgeev (workspace)", info });
        }
        probe[0].re as usize
    };
    work_len = work_len.max(2 * n);
    let mut work = vec![Complex64::default(); work_len];
    let lwork = work_len as i32;
    unsafe {
        lapack_sys::zgeev_(
            b"N".as_ptr().cast(),
            jobvr.as_ptr().cast(),
            &n_i,
            buf.as_mut_ptr().cast(),
            &n_i,
            w.as_mut_ptr().cast(),
            std::ptr::null_mut(),
            &1,
            vr.as_mut_ptr().cast(),
            &ldvr,
            work.as_mut_ptr().cast(),
            &lwork,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(CoreError::LapackFailure { routine: "zgeev", info });
    }
    let vectors = if want_vectors {
        let mut m = Array2::default((n, n));
        for j in 0..n {
            for i in 0..n {
                m[(i, j)] = vr[j * n + i];
            }
        }
        Some(m)
    } else {
        None
    };
    Ok(EigDecomposition { values: w, vectors })
}

/// Eigenvalues only of a general complex matrix.
pub fn eigvals_general(a: &Array2<Complex64>) -> Result<Vec<Complex64>> {
    Ok(eig_general(a, false)?.values)
}

/// Real eigenvalues of a Hermitian matrix via `zheev`, ascending.
pub fn eigvals_hermitian(a: &Array2<Complex64>) -> Result<Vec<f64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(CoreError::DimensionMismatch { expected: n, got: a.ncols() });
    }
    if n == 0 {
        return Ok(vec![]);
    }
    let n_i = n as i32;
    let mut buf = to_col_major(a);
    let mut w = vec![0.0f64; n];
    let mut rwork = vec![0.0f64; (3 * n).saturating_sub(2).max(1)];
    let mut info = 0i32;
    let mut work_len = {
        let mut probe = [Complex64::default(); 1];
        let lwork = -1i32;
        unsafe {
            lapack_sys::zheev_(
                b"N".as_ptr().cast(),
                b"L".as_ptr().cast(),
                &n_i,
                buf.as_mut_ptr().cast(),
                &n_i,
                w.as_mut_ptr(),
                probe.as_mut_ptr().cast(),
                &lwork,
                rwork.as_mut_ptr(),
                &mut info,
            );
        }
        if info != 0 {
            return Err(CoreError::LapackFailure { routine: "zheev (workspace)", info });
        }
        probe[0].re as usize
    };
    work_len = work_len.max(2 * n);
    let mut work = vec![Complex64::default(); work_len];
    let lwork = work_len as i32;
    unsafe {
        lapack_sys::zheev_(
            b"N".as_ptr().cast(),
            b"L".as_ptr().cast(),
            &n_i,
            buf.as_mut_ptr().cast(),
            &n_i,
            w.as_mut_ptr(),
            work.as_mut_ptr().cast(),
            &lwork,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(CoreError::LapackFailure { routine: "zheev", info });
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn companion_2x2() {
        // [[0,1],[-2,-3]] has eigenvalues −1 and −2.
        let a = array![[c(0.0, 0.0), c(1.0, 0.0)], [c(-2.0, 0.0), c(-3.0, 0.0)]];
        let mut vals = eigvals_general(&a).unwrap();
        vals.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap());
        assert_abs_diff_eq!(vals[0].re, -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1].re, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[0].im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn complex_rotation_eigenvalues() {
        // i·σ_y has eigenvalues ±i... in fact [[0,1],[-1,0]] -> ±i.
        let a = array![[c(0.0, 0.0), c(1.0, 0.0)], [c(-1.0, 0.0), c(0.0, 0.0)]];
        let mut vals = eigvals_general(&a).unwrap();
        vals.sort_by(|x, y| x.im.partial_cmp(&y.im).unwrap());
        assert_abs_diff_eq!(vals[0].im, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1].im, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn eigenvectors_satisfy_definition() {
        let a = array![
            [c(1.0, 0.5), c(0.3, -0.2), c(0.0, 0.0)],
            [c(0.0, 1.0), c(-0.7, 0.0), c(0.2, 0.2)],
            [c(0.5, 0.0), c(0.1, -0.1), c(0.4, -0.9)]
        ];
        let dec = eig_general(&a, true).unwrap();
        let v = dec.vectors.unwrap();
        for (k, lam) in dec.values.iter().enumerate() {
            let mut resid = 0.0f64;
            for i in 0..3 {
                let mut av = Complex64::default();
                for j in 0..3 {
                    av += a[(i, j)] * v[(j, k)];
                }
                resid += (av - lam * v[(i, k)]).norm_sqr();
            }
            assert!(resid.sqrt() < 1e-12, "residual {} for eigenvalue {lam}", resid.sqrt());
        }
    }

    #[test]
    fn hermitian_eigenvalues_real_sorted() {
        let a = array![[c(2.0, 0.0), c(0.0, 1.0)], [c(0.0, -1.0), c(3.0, 0.0)]];
        let w = eigvals_hermitian(&a).unwrap();
        // Pauli-like 2×2: eigenvalues (5 ± √5)/2.
        let s = 5f64.sqrt();
        assert_abs_diff_eq!(w[0], (5.0 - s) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w[1], (5.0 + s) / 2.0, epsilon = 1e-12);
    }
}
