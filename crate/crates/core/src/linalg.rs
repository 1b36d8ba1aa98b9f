//! Thin safe wrappers over the handful of LAPACK/BLAS routines the solvers need.
//! All matrices are column-major.

use std::os::raw::{c_char, c_int};

use cblas_sys::{CBLAS_LAYOUT, CBLAS_TRANSPOSE};
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

fn check(routine: &'static str, info: c_int) -> Result<()> {
    if info == 0 {
        Ok(())
    } else {
        Err(Error::Lapack { routine, info })
    }
}

/// Real symmetric band matrix in LAPACK lower storage: `ab[d + j*(kd+1)] = A[j+d, j]`.
#[derive(Clone, Debug)]
pub struct SymBand {
    pub n: usize,
    pub kd: usize,
    pub ab: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, kd: usize) -> Self {
        SymBand { n, kd, ab: vec![0.0; n * (kd + 1)] }
    }

    /// Sets `A[i, j]` (and implicitly `A[j, i]`); requires `|i - j| <= kd`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(r - c <= self.kd);
        self.ab[(r - c) + c * (self.kd + 1)] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(r - c <= self.kd);
        self.ab[(r - c) + c * (self.kd + 1)] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.kd {
            0.0
        } else {
            self.ab[(r - c) + c * (self.kd + 1)]
        }
    }

    /// Eigenpairs with (0-based, inclusive) indices `il..=iu` in ascending order.
    /// Returns the eigenvalues and, if requested, the n x m eigenvector matrix.
    pub fn eigen_range(&self, il: usize, iu: usize, vectors: bool) -> Result<(Vec<f64>, Option<DMatrix<f64>>)> {
        assert!(il <= iu && iu < self.n);
        let n = self.n as c_int;
        let kd = self.kd as c_int;
        let ldab = kd + 1;
        let mut ab = self.ab.clone();
        let jobz = if vectors { b'V' } else { b'N' } as c_char;
        let range = b'I' as c_char;
        let uplo = b'L' as c_char;
        let ldq = if vectors { n } else { 1 };
        let mut q = vec![0.0; if vectors { self.n * self.n } else { 1 }];
        let (vl, vu) = (0.0, 0.0);
        let (ilf, iuf) = (il as c_int + 1, iu as c_int + 1);
        let abstol = 0.0;
        let want = iu - il + 1;
        let mut m: c_int = 0;
        let mut w = vec![0.0; self.n];
        let ldz = if vectors { n } else { 1 };
        let mut z = vec![0.0; if vectors { self.n * want } else { 1 }];
        let mut work = vec![0.0; 7 * self.n];
        let mut iwork = vec![0 as c_int; 5 * self.n];
        let mut ifail = vec![0 as c_int; self.n];
        let mut info: c_int = 0;
        unsafe {
            lapack_sys::dsbevx_(
                &jobz, &range, &uplo, &n, &kd, ab.as_mut_ptr(), &ldab, q.as_mut_ptr(), &ldq, &vl, &vu, &ilf,
                &iuf, &abstol, &mut m, w.as_mut_ptr(), z.as_mut_ptr(), &ldz, work.as_mut_ptr(),
                iwork.as_mut_ptr(), ifail.as_mut_ptr(), &mut info,
            );
        }
        check("dsbevx", info)?;
        if m as usize != want {
            return Err(Error::Lapack { routine: "dsbevx", info: -1000 - m });
        }
        w.truncate(want);
        let z = vectors.then(|| DMatrix::from_vec(self.n, want, z));
        Ok((w, z))
    }
}

/// Full eigendecomposition of a real symmetric matrix (ascending eigenvalues, orthonormal columns).
pub fn sym_eigh(a: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let nn = a.nrows();
    assert_eq!(nn, a.ncols());
    let mut v = a.clone();
    let n = nn as c_int;
    let mut w = vec![0.0; nn];
    let jobz = b'V' as c_char;
    let uplo = b'L' as c_char;
    let mut info: c_int = 0;
    let mut lwork_q = 0.0;
    let mut liwork_q: c_int = 0;
    let query: c_int = -1;
    unsafe {
        lapack_sys::dsyevd_(
            &jobz, &uplo, &n, v.as_mut_slice().as_mut_ptr(), &n, w.as_mut_ptr(), &mut lwork_q, &query,
            &mut liwork_q, &query, &mut info,
        );
    }
    check("dsyevd", info)?;
    let lwork = lwork_q as c_int;
    let mut work = vec![0.0; lwork as usize];
    let mut iwork = vec![0 as c_int; liwork_q as usize];
    unsafe {
        lapack_sys::dsyevd_(
            &jobz, &uplo, &n, v.as_mut_slice().as_mut_ptr(), &n, w.as_mut_ptr(), work.as_mut_ptr(), &lwork,
            iwork.as_mut_ptr(), &liwork_q, &mut info,
        );
    }
    check("dsyevd", info)?;
    Ok((w, v))
}

/// Complex Schur factorization `A = Z T Z^H`. Returns the diagonal of `T`, the unitary `Z`,
/// and the largest strictly-upper element of `T` (zero for a normal matrix).
pub fn complex_schur(a: &DMatrix<Complex64>) -> Result<(Vec<Complex64>, DMatrix<Complex64>, f64)> {
    let nn = a.nrows();
    assert_eq!(nn, a.ncols());
    let mut t = a.clone();
    let n = nn as c_int;
    let jobvs = b'V' as c_char;
    let sort = b'N' as c_char;
    let mut sdim: c_int = 0;
    let mut w = vec![Complex64::new(0.0, 0.0); nn];
    let mut vs = DMatrix::<Complex64>::zeros(nn, nn);
    let mut rwork = vec![0.0; nn];
    let mut bwork = vec![0 as c_int; nn];
    let mut info: c_int = 0;
    let mut wq = [Complex64::new(0.0, 0.0)];
    let query: c_int = -1;
    // num_complex::Complex64 is repr(C) {re, im}, identical to the bindgen complex layout.
    unsafe {
        lapack_sys::zgees_(
            &jobvs, &sort, None, &n, t.as_mut_slice().as_mut_ptr() as *mut _, &n, &mut sdim,
            w.as_mut_ptr() as *mut _, vs.as_mut_slice().as_mut_ptr() as *mut _, &n, wq.as_mut_ptr() as *mut _,
            &query, rwork.as_mut_ptr(), bwork.as_mut_ptr(), &mut info,
        );
    }
    check("zgees", info)?;
    let lwork = wq[0].re as c_int;
    let mut work = vec![Complex64::new(0.0, 0.0); lwork as usize];
    unsafe {
        lapack_sys::zgees_(
            &jobvs, &sort, None, &n, t.as_mut_slice().as_mut_ptr() as *mut _, &n, &mut sdim,
            w.as_mut_ptr() as *mut _, vs.as_mut_slice().as_mut_ptr() as *mut _, &n, work.as_mut_ptr() as *mut _,
            &lwork, rwork.as_mut_ptr(), bwork.as_mut_ptr(), &mut info,
        );
    }
    check("zgees", info)?;
    let mut off = 0.0f64;
    for j in 0..nn {
        for i in 0..j {
            off = off.max(t[(i, j)].norm());
        }
    }
    Ok((w, vs, off))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    N,
    T,
    C,
}

impl Op {
    fn cblas(self) -> CBLAS_TRANSPOSE {
        match self {
            Op::N => CBLAS_TRANSPOSE::CblasNoTrans,
            Op::T => CBLAS_TRANSPOSE::CblasTrans,
            Op::C => CBLAS_TRANSPOSE::CblasConjTrans,
        }
    }
}

/// `C <- alpha * op(A) * op(B) + beta * C` on raw column-major slices.
#[allow(clippy::too_many_arguments)]
pub fn dgemm_raw(
    ta: Op, tb: Op, m: usize, n: usize, k: usize, alpha: f64, a: &[f64], lda: usize, b: &[f64], ldb: usize,
    beta: f64, c: &mut [f64], ldc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    unsafe {
        cblas_sys::cblas_dgemm(
            CBLAS_LAYOUT::CblasColMajor, ta.cblas(), tb.cblas(), m as c_int, n as c_int, k as c_int, alpha,
            a.as_ptr(), lda as c_int, b.as_ptr(), ldb as c_int, beta, c.as_mut_ptr(), ldc as c_int,
        );
    }
}

/// `op(A) * op(B)` for complex matrices.
pub fn zgemm(ta: Op, a: &DMatrix<Complex64>, tb: Op, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let (m, ka) = if ta == Op::N { (a.nrows(), a.ncols()) } else { (a.ncols(), a.nrows()) };
    let (kb, n) = if tb == Op::N { (b.nrows(), b.ncols()) } else { (b.ncols(), b.nrows()) };
    assert_eq!(ka, kb, "zgemm inner dimension mismatch");
    let mut c = DMatrix::<Complex64>::zeros(m, n);
    if m == 0 || n == 0 {
        return c;
    }
    let one = [1.0, 0.0];
    let zero = [0.0, 0.0];
    unsafe {
        cblas_sys::cblas_zgemm(
            CBLAS_LAYOUT::CblasColMajor, ta.cblas(), tb.cblas(), m as c_int, n as c_int, ka as c_int,
            &one, a.as_slice().as_ptr() as *const _, a.nrows().max(1) as c_int, b.as_slice().as_ptr() as *const _,
            b.nrows().max(1) as c_int, &zero, c.as_mut_slice().as_mut_ptr() as *mut _, m as c_int,
        );
    }
    c
}

/// Largest element of `|A^H A - I|`.
pub fn unitarity_defect(a: &DMatrix<Complex64>) -> f64 {
    let p = zgemm(Op::C, a, Op::N, a);
    let mut d = 0.0f64;
    for j in 0..p.ncols() {
        for i in 0..p.nrows() {
            let e = if i == j { p[(i, j)] - 1.0 } else { p[(i, j)] };
            d = d.max(e.norm());
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_matches_dense() {
        let n = 12;
        let kd = 3;
        let mut b = SymBand::zeros(n, kd);
        let mut dense = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(kd)..=i {
                let v = ((i * 7 + j * 3) % 11) as f64 - 5.0 + if i == j { 2.0 * i as f64 } else { 0.0 };
                b.set(i, j, v);
                dense[(i, j)] = v;
                dense[(j, i)] = v;
            }
        }
        let (wd, _) = sym_eigh(&dense).unwrap();
        let (wb, z) = b.eigen_range(2, 6, true).unwrap();
        for (k, w) in wb.iter().enumerate() {
            assert!((w - wd[k + 2]).abs() < 1e-10);
        }
        let z = z.unwrap();
        let r = &dense * &z;
        for k in 0..5 {
            let resid = (r.column(k) - z.column(k) * wb[k]).norm();
            assert!(resid < 1e-10);
        }
    }

    #[test]
    fn schur_of_unitary_is_diagonal() {
        let th = [0.3, -1.1, 2.0];
        let mut d = DMatrix::<Complex64>::zeros(3, 3);
        for (i, t) in th.iter().enumerate() {
            d[(i, i)] = Complex64::from_polar(1.0, *t);
        }
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let mut q = DMatrix::<Complex64>::identity(3, 3);
        q[(0, 0)] = Complex64::new(c, 0.0);
        q[(0, 1)] = Complex64::new(0.0, c);
        q[(1, 0)] = Complex64::new(0.0, c);
        q[(1, 1)] = Complex64::new(c, 0.0);
        let u = zgemm(Op::N, &zgemm(Op::N, &q, Op::N, &d), Op::C, &q);
        assert!(unitarity_defect(&u) < 1e-14);
        let (w, z, off) = complex_schur(&u).unwrap();
        assert!(off < 1e-12);
        let mut args: Vec<f64> = w.iter().map(|l| l.arg()).collect();
        args.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((args[0] + 1.1).abs() < 1e-12 && (args[1] - 0.3).abs() < 1e-12 && (args[2] - 2.0).abs() < 1e-12);
        assert!(unitarity_defect(&z) < 1e-13);
    }
}
