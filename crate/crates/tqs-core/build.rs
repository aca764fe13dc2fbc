//! Links the system OpenBLAS, which on Debian/Ubuntu bundles BLAS, CBLAS
//! and LAPACK in one shared object. This satisfies both `ndarray`'s `blas`
//! feature (cblas_* symbols) and `ndarray-linalg`/`lax` (LAPACK symbols)
//! without pulling in a from-source BLAS build.
//!
//! Override with TQS_BLAS_LIB=<name> if your BLAS/LAPACK live in a
//! differently named library (it must provide CBLAS and LAPACK symbols).

fn main() {
    println!("cargo:rerun-if-env-changed=TQS_BLAS_LIB");
    let lib = std::env::var("TQS_BLAS_LIB").unwrap_or_else(|_| "openblas".to_string());
    println!("cargo:rustc-link-lib=dylib={lib}");
}
