//! Thin dense linear-algebra helpers shared by every module.
//!
//! All matrices are `Array2<Complex64>` in row-major layout; matrix products
//! go through BLAS `zgemm` via `ndarray`'s `blas` feature. Hermitian
//! eigensolves call LAPACK's divide-and-conquer driver `zheevd` directly
//! (3–4× faster than the classic `zheev` for the full decompositions that
//! dominate this crate's runtime at dimensions ≥ 10³).

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{CoreError, Result};

/// Dense complex matrix.
pub type CMat = Array2<Complex64>;
/// Dense complex vector.
pub type CVec = Array1<Complex64>;

/// Complex unit shorthand.
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Real 1.0 as a complex scalar.
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Complex zero.
pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `c(re, im)` constructor shorthand.
#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Identity matrix of dimension `d`.
pub fn eye(d: usize) -> CMat {
    CMat::eye(d)
}

/// Largest entrywise modulus of `m`.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Largest entrywise modulus of the difference `a − b`.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b.iter())
        .fold(0.0, |acc, (x, y)| acc.max((x - y).norm()))
}

/// Conjugate transpose.
pub fn dagger(m: &CMat) -> CMat {
    m.t().mapv(|z| z.conj())
}

/// Trace of a square matrix.
pub fn trace(m: &CMat) -> Complex64 {
    m.diag().sum()
}

/// Hilbert–Schmidt inner product `Tr(a† b) = Σ conj(a_ij) b_ij`.
pub fn hs_dot(a: &CMat, b: &CMat) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// `Tr(a · b)` without forming the product: Σ_ij a_ij b_ji.
pub fn trace_prod(a: &CMat, b: &CMat) -> Complex64 {
    a.iter().zip(b.t().iter()).map(|(x, y)| x * y).sum()
}

/// Checks `m` is Hermitian to `tol` (max entrywise deviation of m − m†).
pub fn check_hermitian(m: &CMat, tol: f64) -> Result<()> {
    let (r, c_) = m.dim();
    if r != c_ {
        return Err(CoreError::DimensionMismatch(format!(
            "hermiticity check on {r}×{c_} matrix"
        )));
    }
    let mut worst = 0.0f64;
    for i in 0..r {
        for j in i..r {
            let dev = (m[[i, j]] - m[[j, i]].conj()).norm();
            if dev > worst {
                worst = dev;
            }
        }
    }
    if worst > tol {
        return Err(CoreError::NotHermitian {
            residual: worst,
            tol,
        });
    }
    Ok(())
}

/// Raw call into LAPACK's divide-and-conquer Hermitian eigensolver.
///
/// Consumes a square row-major matrix; returns ascending eigenvalues and,
/// when `want_vectors`, the overwritten buffer whose LAPACK-side columns are
/// eigenvectors of what LAPACK saw. Layout/conjugation bookkeeping is done by
/// the public wrappers below.
fn zheevd(want_vectors: bool, mut a: CMat) -> Result<(Vec<f64>, CMat)> {
    use std::os::raw::{c_char, c_int};

    let (rows, cols) = a.dim();
    if rows != cols {
        return Err(CoreError::DimensionMismatch(format!(
            "eigendecomposition of {rows}×{cols} matrix"
        )));
    }
    let n = rows;
    if n == 0 {
        return Ok((Vec::new(), a));
    }
    let jobz = if want_vectors { b'V' } else { b'N' } as c_char;
    let uplo = b'L' as c_char;
    let ni = n as c_int;
    let mut w = vec![0.0f64; n];
    let mut info: c_int = 0;
    let a_ptr = a
        .as_slice_mut()
        .expect("matrix buffer must be contiguous")
        .as_mut_ptr() as *mut lapack_sys::c_double_complex;

    // Workspace query: lwork = −1 makes the driver report optimal sizes in
    // the leading element of each workspace array.
    let query: c_int = -1;
    let mut wq = lapack_sys::c_double_complex { re: 0.0, im: 0.0 };
    let mut rq = 0.0f64;
    let mut iq: c_int = 0;
    unsafe {
        lapack_sys::zheevd_(
            &jobz,
            &uplo,
            &ni,
            a_ptr,
            &ni,
            w.as_mut_ptr(),
            &mut wq,
            &query,
            &mut rq,
            &query,
            &mut iq,
            &query,
            &mut info,
        );
    }
    if info != 0 {
        return Err(CoreError::Lapack {
            driver: "zheevd (workspace query)",
            info,
        });
    }

    let lwork = wq.re as c_int;
    let lrwork = rq as c_int;
    let liwork = iq;
    let mut work = vec![lapack_sys::c_double_complex { re: 0.0, im: 0.0 }; lwork.max(1) as usize];
    let mut rwork = vec![0.0f64; lrwork.max(1) as usize];
    let mut iwork = vec![0 as c_int; liwork.max(1) as usize];
    unsafe {
        lapack_sys::zheevd_(
            &jobz,
            &uplo,
            &ni,
            a_ptr,
            &ni,
            w.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            rwork.as_mut_ptr(),
            &lrwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(CoreError::Lapack {
            driver: "zheevd",
            info,
        });
    }
    Ok((w, a))
}

/// Hermitian eigendecomposition (ascending eigenvalues, columns of the
/// returned matrix are eigenvectors).
///
/// LAPACK reads our row-major buffer column-major, i.e. it decomposes
/// Mᵀ = conj(M) for Hermitian M, and writes its eigenvector columns into our
/// rows. Undoing both (transpose + one conjugation) yields the true
/// eigenvectors of M; the `eigh_columns_are_right_eigenvectors` test pins
/// this orientation against H v = E v.
pub fn eigh(m: &CMat) -> Result<(Vec<f64>, CMat)> {
    let (w, out) = zheevd(true, m.clone())?;
    Ok((w, out.t().mapv(|z| z.conj())))
}

/// Eigenvalues only (skips the eigenvector back-transformation; considerably
/// cheaper than `eigh` at large dimension).
pub fn eigvalsh(m: &CMat) -> Result<Vec<f64>> {
    let (w, _) = zheevd(false, m.clone())?;
    Ok(w)
}

/// Suggests a value for `OPENBLAS_CORETYPE` when the current process would
/// benefit from setting it, or `None`.
///
/// OpenBLAS selects its kernels from the CPUID model string *in its library
/// constructor*, i.e. before `main` runs — setting the variable from inside
/// the process has no effect. On masked or virtualized CPUs that report a
/// generic model it falls back to a slow portable target even when AVX-512
/// is available (observed: ~4× slower `zgemm`). Callers that control their
/// own startup (the CLI) can re-exec themselves with the returned value in
/// the environment; other BLAS implementations ignore the variable.
pub fn blas_dispatch_hint() -> Option<&'static str> {
    if std::env::var_os("OPENBLAS_CORETYPE").is_some() {
        return None;
    }
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f")
            && std::arch::is_x86_feature_detected!("avx512vl")
            && std::arch::is_x86_feature_detected!("avx512bw")
            && std::arch::is_x86_feature_detected!("avx512dq")
        {
            return Some("SKYLAKEX");
        }
    }
    None
}

/// Trace norm ‖m‖₁ = Σ|eigenvalues| of a Hermitian matrix.
pub fn trace_norm_hermitian(m: &CMat) -> Result<f64> {
    let vals = eigvalsh(m)?;
    Ok(vals.iter().map(|v| v.abs()).sum())
}

/// Spectral norm of a Hermitian matrix: max |eigenvalue|.
pub fn spectral_norm_hermitian(m: &CMat) -> Result<f64> {
    let vals = eigvalsh(m)?;
    Ok(vals.iter().fold(0.0f64, |a, &v| a.max(v.abs())))
}

/// `basis · diag(w) · basis†` for a real weight vector (used to rebuild
/// operators from spectral data). One column scaling plus one `zgemm`.
pub fn from_eigen_real(basis: &CMat, w: &[f64]) -> CMat {
    let mut scaled = basis.clone();
    for (j, &wj) in w.iter().enumerate() {
        scaled.column_mut(j).mapv_inplace(|z| z * wj);
    }
    scaled.dot(&dagger(basis))
}

/// `basis · diag(w) · basis†` for complex weights (e.g. e^{−iEt} phases).
pub fn from_eigen_complex(basis: &CMat, w: &[Complex64]) -> CMat {
    let mut scaled = basis.clone();
    for (j, &wj) in w.iter().enumerate() {
        scaled.column_mut(j).mapv_inplace(|z| z * wj);
    }
    scaled.dot(&dagger(basis))
}

/// Similarity transform into an eigenbasis: `basis† · m · basis`.
pub fn to_eigenbasis(basis: &CMat, m: &CMat) -> CMat {
    dagger(basis).dot(&m.dot(basis))
}

/// Deviation of `u` from unitarity: ‖u†u − I‖_max.
pub fn unitarity_residual(u: &CMat) -> f64 {
    let d = u.nrows();
    max_abs_diff(&dagger(u).dot(u), &eye(d))
}

/// Kronecker product a ⊗ b (row-major block layout).
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = CMat::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[[i, j]];
            if aij == ZERO {
                continue;
            }
            let mut block = out.slice_mut(ndarray::s![i * br..(i + 1) * br, j * bc..(j + 1) * bc]);
            block.zip_mut_with(b, |o, &bb| *o = aij * bb);
        }
    }
    out
}

/// Within each column range of `basis`, diagonalizes the restriction of a
/// commuting Hermitian operator and rotates the columns accordingly, making
/// the operator diagonal on every range without disturbing whatever is
/// already diagonal there (the ranges are degenerate clusters, so any
/// unitary mix inside a range is allowed). Returns the operator's eigenvalue
/// per column, ascending within each range.
///
/// `apply_op` maps a d×k column block W to OP·W; this keeps the cost at one
/// block product per cluster for sparse/diagonal operators and lets dense
/// callers use `op.dot`.
pub fn resolve_degenerate_clusters(
    basis: &mut CMat,
    ranges: &[(usize, usize)],
    mut apply_op: impl FnMut(&CMat) -> CMat,
) -> Result<Vec<f64>> {
    let mut values = vec![0.0f64; basis.ncols()];
    for &(start, end) in ranges {
        let k = end - start;
        let w = basis.slice(ndarray::s![.., start..end]).to_owned();
        let ow = apply_op(&w);
        let restriction: CMat = w.t().mapv(|z| z.conj()).dot(&ow);
        check_hermitian(&restriction, 1e-7).map_err(|_| {
            CoreError::SymmetryViolation(
                "operator restricted to a degenerate cluster is not Hermitian; \
                 it does not commute with the decomposed matrix"
                    .into(),
            )
        })?;
        if k == 1 {
            values[start] = restriction[[0, 0]].re;
            continue;
        }
        let (mu, u) = eigh(&restriction)?;
        let rotated = w.dot(&u);
        basis
            .slice_mut(ndarray::s![.., start..end])
            .assign(&rotated);
        values[start..end].copy_from_slice(&mu);
    }
    Ok(values)
}

/// Groups a sorted slice into maximal clusters whose consecutive gaps are
/// below `tol`; returns (start, end) index ranges (end exclusive). The
/// clusters partition `0..values.len()`.
pub fn cluster_sorted(values: &[f64], tol: f64) -> Vec<(usize, usize)> {
    let n = values.len();
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..n {
        if values[i] - values[i - 1] > tol {
            out.push((start, i));
            start = i;
        }
    }
    if n > 0 {
        out.push((start, n));
    }
    out
}
