//! Parity-resolved exact diagonalization, thermal states, sector thermal
//! states, the sector-parameter solver, and the stochastic noise model.
//!
//! For a parity-symmetric H ([H, P] = 0, P² = I) there is an eigenbasis in
//! which every eigenvector also has definite parity p_n = ⟨n|P|n⟩ ∈ {±1};
//! degenerate energy clusters are rotated by diagonalizing the restriction
//! of P. On top of that basis:
//!
//! - ρ_β = e^{−βH}/Z (full Gibbs state),
//! - H_S = (H + HP)/2 and H_A = (H − HP)/2, whose Gibbs states mix Gibbs
//!   weights on one parity sector with *uniform* weight on the other
//!   (e^{−βH_S} acts as the identity on odd states),
//! - the four sector parameters (Z_S, Z_A, N_S, N_A) recovered from the
//!   three measurable parity traces Tr(ρP), Tr(ρ_S P), Tr(ρ_A P) plus the
//!   known dimension d,
//! - a reproducible perturbation ρ → (ρ + ε ϱ)/(1 + ε) with ϱ = e^{Ẽ}/Tr e^{Ẽ}
//!   built from a trace-normalized random Hermitian Ẽ.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{CoreError, Result};
use crate::linalg::{
    c, check_hermitian, cluster_sorted, dagger, eigh, from_eigen_real, max_abs, max_abs_diff,
    CMat, ZERO,
};

/// Eigendecomposition of a parity-symmetric Hamiltonian: ascending energies,
/// eigenvector columns, and a definite parity ±1 per eigenvector.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub energies: Vec<f64>,
    pub basis: CMat,
    pub parities: Vec<f64>,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// Number of even-parity (symmetric) and odd-parity (asymmetric)
    /// eigenvectors.
    pub fn sector_counts(&self) -> (usize, usize) {
        let even = self.parities.iter().filter(|&&p| p > 0.0).count();
        (even, self.dim() - even)
    }

    /// Index of the lowest-energy eigenvector with the requested parity
    /// (+1 even / −1 odd), if that sector is nonempty.
    pub fn sector_ground(&self, parity: i8) -> Option<usize> {
        self.parities
            .iter()
            .position(|&p| (p > 0.0) == (parity > 0))
    }
}

/// Which Gibbs-type state a density matrix represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    Full,
    Symmetric,
    Asymmetric,
    Custom,
}

/// A density matrix tagged with its inverse temperature and construction.
#[derive(Debug, Clone)]
pub struct ThermalState {
    pub rho: CMat,
    pub beta: f64,
    pub kind: StateKind,
}

/// The four sector parameters together with their consistency data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorData {
    pub z_s: f64,
    pub z_a: f64,
    pub n_s: f64,
    pub n_a: f64,
    pub z: f64,
    pub d: usize,
}

/// Resolves the eigenbasis of `h` so every eigenvector has definite parity.
///
/// Standard Hermitian eigendecomposition first; then, within each energy
/// cluster (gap < `degeneracy_tol`, default 1e−8·max|E|), the restriction
/// 𝒫 = W†PW is diagonalized and the cluster basis rotated, which leaves the
/// energies untouched (H is a multiple of the identity on the cluster) but
/// makes the parities definite. Within a cluster, even vectors are ordered
/// before odd ones.
///
/// `p` may be any dense involution commuting with `h`; diagonal `p` (the
/// usual ∏Z parity word) takes cheap O(d²) fast paths.
pub fn eigendecompose_with_parity(
    h: &CMat,
    p: &CMat,
    degeneracy_tol: Option<f64>,
) -> Result<EigenSystem> {
    let d = h.nrows();
    let scale = max_abs(h).max(1e-300);
    check_hermitian(h, 1e-10 * scale)?;
    check_hermitian(p, 1e-10)?;

    // Detect a diagonal parity; it makes the precondition checks and the
    // P·V product linear-time per column.
    let p_diag = detect_diagonal(p);

    // P² = I and [H, P] = 0 preconditions.
    match &p_diag {
        Some(diag) => {
            for &v in diag {
                if (v.abs() - 1.0).abs() > 1e-10 {
                    return Err(CoreError::InvalidInput(format!(
                        "parity diagonal entry {v} is not ±1"
                    )));
                }
            }
            let mut worst = 0.0f64;
            for ((i, j), z) in h.indexed_iter() {
                worst = worst.max(z.norm() * (diag[j] - diag[i]).abs());
            }
            if worst > 1e-10 * scale {
                return Err(CoreError::SymmetryViolation(format!(
                    "[H, P] residual {worst:.3e} exceeds tolerance"
                )));
            }
        }
        None => {
            if max_abs_diff(&p.dot(p), &CMat::eye(d)) > 1e-10 {
                return Err(CoreError::InvalidInput("parity operator is not an involution".into()));
            }
            if max_abs_diff(&h.dot(p), &p.dot(h)) > 1e-10 * scale {
                return Err(CoreError::SymmetryViolation(
                    "[H, P] exceeds tolerance; cannot resolve parities".into(),
                ));
            }
        }
    }

    let (energies, mut basis) = eigh(h)?;
    let e_scale = energies.iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(1e-300);
    let tol = degeneracy_tol.unwrap_or(1e-8 * e_scale);

    let clusters = cluster_sorted(&energies, tol);
    let raw = crate::linalg::resolve_degenerate_clusters(&mut basis, &clusters, |block| {
        apply_parity(p, &p_diag, block)
    })?;

    // Validate ±1 parities; within each cluster order even (+1) before odd
    // (−1) by reversing the ascending order the resolver returns.
    let mut parities = vec![0.0f64; d];
    for &(start, end) in &clusters {
        let k = end - start;
        for (j, &mu) in raw[start..end].iter().enumerate() {
            if (mu.abs() - 1.0).abs() > 1e-8 {
                return Err(CoreError::ParityResolution(format!(
                    "cluster of size {k} has restricted-parity eigenvalue {mu}"
                )));
            }
            parities[start + k - 1 - j] = mu.signum();
        }
        if k > 1 {
            let block = basis.slice(ndarray::s![.., start..end]).to_owned();
            for j in 0..k {
                basis
                    .slice_mut(ndarray::s![.., start + j])
                    .assign(&block.slice(ndarray::s![.., k - 1 - j]));
            }
        }
    }

    // Per-vector parity residual ‖P v − p v‖∞ from the rotated basis; cheap
    // (O(d²) for diagonal P, one product otherwise) and implies the
    // V†PV ≈ diag(p) invariant.
    let pv = apply_parity(p, &p_diag, &basis);
    for n in 0..d {
        let mut worst = 0.0f64;
        for i in 0..d {
            worst = worst.max((pv[[i, n]] - basis[[i, n]] * parities[n]).norm());
        }
        if worst > 1e-9 {
            return Err(CoreError::ParityResolution(format!(
                "eigenvector {n} has parity residual {worst:.3e}"
            )));
        }
    }

    Ok(EigenSystem {
        energies,
        basis,
        parities,
    })
}

/// Off-diagonal scan: Some(diagonal) when `m` is numerically diagonal.
pub(crate) fn detect_diagonal(m: &CMat) -> Option<Vec<f64>> {
    let mut off = 0.0f64;
    for ((i, j), z) in m.indexed_iter() {
        if i != j {
            off = off.max(z.norm());
        }
    }
    if off < 1e-14 {
        Some(m.diag().iter().map(|z| z.re).collect())
    } else {
        None
    }
}

/// P·block, via O(d·k) row scaling when the parity is diagonal.
pub(crate) fn apply_parity(p: &CMat, p_diag: &Option<Vec<f64>>, block: &CMat) -> CMat {
    match p_diag {
        Some(diag) => {
            let mut out = block.clone();
            for (i, mut row) in out.outer_iter_mut().enumerate() {
                let s = diag[i];
                row.mapv_inplace(|z| z * s);
            }
            out
        }
        None => p.dot(block),
    }
}

/// Max-shifted Gibbs weights e^{−β(E_n − E_min)}, normalized to sum 1.
pub fn gibbs_weights(energies: &[f64], beta: f64) -> Vec<f64> {
    let e_min = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = energies.iter().map(|&e| (-beta * (e - e_min)).exp()).collect();
    let z: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= z);
    w
}

/// Normalized eigenbasis weights of e^{−βH_S} (for `symmetric`) or
/// e^{−βH_A}: Gibbs weights on the matching-parity states, uniform weight on
/// the others (where the sector Hamiltonian vanishes). Max-shifted.
pub fn sector_weights(es: &EigenSystem, beta: f64, symmetric: bool) -> Vec<f64> {
    let want = if symmetric { 1.0 } else { -1.0 };
    // Spectrum of the sector Hamiltonian: E_n on matching states, 0 on the
    // rest; shift by its minimum before exponentiating.
    let shift = es
        .energies
        .iter()
        .zip(&es.parities)
        .filter(|(_, &p)| p == want)
        .map(|(&e, _)| e)
        .fold(0.0f64, f64::min);
    let mut w: Vec<f64> = es
        .energies
        .iter()
        .zip(&es.parities)
        .map(|(&e, &p)| {
            let level = if p == want { e } else { 0.0 };
            (-beta * (level - shift)).exp()
        })
        .collect();
    let z: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= z);
    w
}

/// The Gibbs state ρ_β = e^{−βH}/Z in dense form. `beta = ∞` returns the
/// ground-state projector and errors when the ground space is degenerate
/// (use a sector ground state instead in that case).
pub fn thermal_state(es: &EigenSystem, beta: f64) -> Result<ThermalState> {
    if beta < 0.0 || beta.is_nan() {
        return Err(CoreError::InvalidInput(format!(
            "inverse temperature must be ≥ 0, got {beta}"
        )));
    }
    let d = es.dim();
    let rho = if beta.is_infinite() {
        let e_scale = es.energies.iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(1e-300);
        if d > 1 && es.energies[1] - es.energies[0] < 1e-10 * e_scale {
            return Err(CoreError::InvalidInput(
                "degenerate ground space at beta = ∞; pick a parity-sector ground state".into(),
            ));
        }
        let mut w = vec![0.0; d];
        w[0] = 1.0;
        from_eigen_real(&es.basis, &w)
    } else {
        from_eigen_real(&es.basis, &gibbs_weights(&es.energies, beta))
    };
    Ok(ThermalState {
        rho,
        beta,
        kind: StateKind::Full,
    })
}

/// Dense sector Hamiltonians H_S = (H + HP)/2 and H_A = (H − HP)/2, i.e. H
/// restricted to the even/odd eigenvectors. Validated against `h` entrywise.
pub fn sector_hamiltonians(h: &CMat, es: &EigenSystem) -> Result<(CMat, CMat)> {
    let even: Vec<f64> = es
        .energies
        .iter()
        .zip(&es.parities)
        .map(|(&e, &p)| if p > 0.0 { e } else { 0.0 })
        .collect();
    let odd: Vec<f64> = es
        .energies
        .iter()
        .zip(&es.parities)
        .map(|(&e, &p)| if p < 0.0 { e } else { 0.0 })
        .collect();
    let h_s = from_eigen_real(&es.basis, &even);
    let h_a = from_eigen_real(&es.basis, &odd);
    let scale = max_abs(h).max(1.0);
    let sum = &h_s + &h_a;
    if max_abs_diff(&sum, h) > 1e-9 * scale {
        return Err(CoreError::InvalidInput(
            "eigensystem is inconsistent with H: sector parts do not sum back".into(),
        ));
    }
    Ok((h_s, h_a))
}

/// The sector thermal states ρ_S = e^{−βH_S}/Tr e^{−βH_S} and its odd-sector
/// analogue, as dense density matrices.
pub fn sector_thermal_states(es: &EigenSystem, beta: f64) -> Result<(ThermalState, ThermalState)> {
    if !(beta >= 0.0) || beta.is_infinite() {
        return Err(CoreError::InvalidInput(format!(
            "sector thermal states need finite beta ≥ 0, got {beta}"
        )));
    }
    let rho_s = from_eigen_real(&es.basis, &sector_weights(es, beta, true));
    let rho_a = from_eigen_real(&es.basis, &sector_weights(es, beta, false));
    Ok((
        ThermalState {
            rho: rho_s,
            beta,
            kind: StateKind::Symmetric,
        },
        ThermalState {
            rho: rho_a,
            beta,
            kind: StateKind::Asymmetric,
        },
    ))
}

/// Recovers (Z_S, Z_A, N_S, N_A, Z) from the three parity traces
/// p_T = Tr(ρ_β P), p_S = Tr(ρ_S P), p_A = Tr(ρ_A P) and the dimension d.
///
/// Two independent closed forms are evaluated — the sector-ratio route
///   N_S/N_A = (1+p_A)(1+p_S)(1−p_T) / [(1−p_A)(1−p_S)(1+p_T)]
/// followed by back-substitution, and the direct product form
///   λ = d / (2[1 + p_A p_S − p_T p_A − p_T p_S]),
///   N_S = (1+p_A)(1+p_S)(1−p_T)·λ,  N_A = (1−p_A)(1−p_S)(1+p_T)·λ,
///   Z_S = (1−p_A)(1+p_S)(1+p_T)·λ,  Z_A = (1−p_A)(1+p_S)(1−p_T)·λ
/// — and must agree to 1e−9 relative.
pub fn solve_sector_data(
    tr_rho_p: f64,
    tr_rhos_p: f64,
    tr_rhoa_p: f64,
    d: usize,
) -> Result<SectorData> {
    if d < 2 {
        return Err(CoreError::InvalidInput(format!(
            "sector solve needs dimension ≥ 2, got {d}"
        )));
    }
    for (name, v) in [
        ("Tr(ρP)", tr_rho_p),
        ("Tr(ρ_S P)", tr_rhos_p),
        ("Tr(ρ_A P)", tr_rhoa_p),
    ] {
        if !(v > -1.0 && v < 1.0) {
            return Err(CoreError::SectorSolve(format!(
                "{name} = {v} must lie strictly inside (−1, 1); a fully polarized sector is unsolvable"
            )));
        }
    }
    let (p_t, p_s, p_a) = (tr_rho_p, tr_rhos_p, tr_rhoa_p);
    let df = d as f64;

    // Route 1: ratio + back-substitution.
    let ratio =
        ((1.0 + p_a) * (1.0 + p_s) * (1.0 - p_t)) / ((1.0 - p_a) * (1.0 - p_s) * (1.0 + p_t));
    let n_a_1 = df / (1.0 + ratio);
    let n_s_1 = df - n_a_1;
    let z_s_1 = n_a_1 * (1.0 + p_s) / (1.0 - p_s);
    let z_a_1 = n_s_1 * (1.0 - p_a) / (1.0 + p_a);

    // Route 2: the direct product form.
    let denom = 1.0 + p_a * p_s - p_t * p_a - p_t * p_s;
    if denom <= 0.0 {
        return Err(CoreError::SectorSolve(format!(
            "trace combination is unphysical (normalization denominator {denom} ≤ 0)"
        )));
    }
    let lambda = df / (2.0 * denom);
    let n_s_2 = (1.0 + p_a) * (1.0 + p_s) * (1.0 - p_t) * lambda;
    let n_a_2 = (1.0 - p_a) * (1.0 - p_s) * (1.0 + p_t) * lambda;
    let z_s_2 = (1.0 - p_a) * (1.0 + p_s) * (1.0 + p_t) * lambda;
    let z_a_2 = (1.0 - p_a) * (1.0 + p_s) * (1.0 - p_t) * lambda;

    for (a, b) in [(n_s_1, n_s_2), (n_a_1, n_a_2), (z_s_1, z_s_2), (z_a_1, z_a_2)] {
        if (a - b).abs() > 1e-9 * a.abs().max(b.abs()).max(1e-300) {
            return Err(CoreError::SectorSolve(format!(
                "closed-form routes disagree: {a} vs {b}"
            )));
        }
    }
    let data = SectorData {
        z_s: z_s_2,
        z_a: z_a_2,
        n_s: n_s_2,
        n_a: n_a_2,
        z: z_s_2 + z_a_2,
        d,
    };
    for (name, v) in [
        ("Z_S", data.z_s),
        ("Z_A", data.z_a),
        ("N_S", data.n_s),
        ("N_A", data.n_a),
    ] {
        if !(v > 0.0) {
            return Err(CoreError::SectorSolve(format!(
                "solved {name} = {v} is non-positive"
            )));
        }
    }
    Ok(data)
}

/// Mixes `rho` with a reproducible random density matrix:
/// result = (ρ + ε ϱ)/(1 + ε), where ϱ = e^{Ẽ}/Tr e^{Ẽ} and Ẽ is a random
/// Hermitian matrix (i.i.d. standard-normal real/imaginary parts,
/// Hermitized as (E + E†)/2, trace removed, normalized to trace norm 1).
/// Always a valid density matrix; ‖result − ρ‖₁ ≈ ε for generic states.
pub fn perturb_state(rho: &ThermalState, epsilon: f64, seed: u64) -> Result<ThermalState> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(CoreError::InvalidInput(format!(
            "noise strength must lie in [0, 1], got {epsilon}"
        )));
    }
    if epsilon == 0.0 {
        return Ok(rho.clone());
    }
    let d = rho.rho.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    // Entries drawn in row-major order for reproducibility.
    let mut e = Array2::from_elem((d, d), ZERO);
    for i in 0..d {
        for j in 0..d {
            let re: f64 = normal.sample(&mut rng);
            let im: f64 = normal.sample(&mut rng);
            e[[i, j]] = c(re, im);
        }
    }
    let mut herm = (&e + &dagger(&e)).mapv(|z| z * 0.5);
    let shift = herm.diag().sum().re / d as f64;
    for i in 0..d {
        herm[[i, i]] -= c(shift, 0.0);
    }
    // One eigendecomposition supplies both the trace norm and the matrix
    // exponential (Ẽ = herm / ‖herm‖₁ shares its eigenvectors).
    let (vals, vecs) = eigh(&herm)?;
    let trace_norm: f64 = vals.iter().map(|v| v.abs()).sum();
    let mut w: Vec<f64> = vals.iter().map(|v| (v / trace_norm).exp()).collect();
    let z: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= z);
    let varrho = from_eigen_real(&vecs, &w);

    let mixed = (&rho.rho + &varrho.mapv(|v| v * epsilon)).mapv(|v| v / (1.0 + epsilon));
    Ok(ThermalState {
        rho: mixed,
        beta: rho.beta,
        kind: StateKind::Custom,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eigvalsh, eye, trace, trace_norm_hermitian, trace_prod};
    use crate::models::{build_xxz, XXZParams};
    use crate::operators::{parity_operator, pauli_to_dense, Pauli, PauliString};
    use num_complex::Complex64;
    use rand::Rng;

    fn xx_pair() -> (CMat, CMat) {
        let mut letters = vec![Pauli::X, Pauli::X];
        let h = pauli_to_dense(&PauliString::new(letters.clone()));
        letters[0] = Pauli::Z;
        letters[1] = Pauli::Z;
        let p = pauli_to_dense(&PauliString::new(letters));
        (h, p)
    }

    fn density_checks(rho: &CMat, tol: f64) {
        assert!((trace(rho).re - 1.0).abs() < tol);
        assert!(trace(rho).im.abs() < tol);
        check_hermitian(rho, tol).unwrap();
        let vals = eigvalsh(rho).unwrap();
        assert!(vals[0] > -1e-12, "min eigenvalue {}", vals[0]);
    }

    #[test]
    fn degenerate_xx_cluster_splits_by_parity() {
        let (h, p) = xx_pair();
        let es = eigendecompose_with_parity(&h, &p, None).unwrap();
        assert_eq!(es.sector_counts(), (2, 2));
        // E = +1 cluster: even vector (|00⟩+|11⟩)/√2, odd (|01⟩+|10⟩)/√2.
        for n in 0..4 {
            if es.energies[n] > 0.0 {
                let v = es.basis.column(n);
                let target: [Complex64; 4] = if es.parities[n] > 0.0 {
                    [c(1.0, 0.0), ZERO, ZERO, c(1.0, 0.0)]
                } else {
                    [ZERO, c(1.0, 0.0), c(1.0, 0.0), ZERO]
                };
                let overlap: Complex64 = v
                    .iter()
                    .zip(target.iter())
                    .map(|(a, b)| a.conj() * b / c(std::f64::consts::SQRT_2, 0.0))
                    .sum();
                assert!(
                    (overlap.norm() - 1.0).abs() < 1e-10,
                    "n={n} overlap {overlap}"
                );
            }
        }
        // Full invariants: reconstruction and diagonalized parity.
        let rebuilt = from_eigen_real(&es.basis, &es.energies);
        assert!(max_abs_diff(&rebuilt, &h) < 1e-10);
        let ptilde = dagger(&es.basis).dot(&p.dot(&es.basis));
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { es.parities[i] } else { 0.0 };
                assert!((ptilde[[i, j]] - c(expect, 0.0)).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn single_qubit_z_parities() {
        let h = pauli_to_dense(&PauliString::new(vec![Pauli::Z]));
        let es = eigendecompose_with_parity(&h, &h, None).unwrap();
        // Ascending energies: |1⟩ (E=−1, P=−1) then |0⟩ (E=+1, P=+1).
        assert_eq!(es.parities, vec![-1.0, 1.0]);
        assert!((es.basis[[1, 0]].norm() - 1.0).abs() < 1e-12);
        assert!((es.basis[[0, 1]].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn xxz_parities_and_matrix_element_selection_rule() {
        let lh = build_xxz(XXZParams::open(1.0, 2.0, 1.0, 4)).unwrap();
        let p = pauli_to_dense(&lh.parity);
        let es = eigendecompose_with_parity(&lh.h, &p, None).unwrap();
        for &pn in &es.parities {
            assert!(pn == 1.0 || pn == -1.0);
        }
        let rebuilt = from_eigen_real(&es.basis, &es.energies);
        let scale = max_abs(&lh.h);
        assert!(max_abs_diff(&rebuilt, &lh.h) < 1e-10 * scale);

        // For A anticommuting with P, ⟨n|A|m⟩ vanishes whenever p_n p_m = +1.
        for a in [
            pauli_to_dense(&PauliString::single(4, 0, Pauli::X)),
            pauli_to_dense(&PauliString::single(4, 1, Pauli::Y)),
        ] {
            let a_eig = dagger(&es.basis).dot(&a.dot(&es.basis));
            for n in 0..16 {
                for m in 0..16 {
                    if es.parities[n] * es.parities[m] > 0.0 {
                        assert!(
                            a_eig[[n, m]].norm() < 1e-10,
                            "matrix element ({n},{m}) = {}",
                            a_eig[[n, m]]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn decomposition_rejects_broken_symmetry() {
        let n = 2;
        let h = pauli_to_dense(&PauliString::single(n, 0, Pauli::X)); // {X₀, P} ≠ 0
        let p = pauli_to_dense(&parity_operator(n));
        assert!(eigendecompose_with_parity(&h, &p, None).is_err());
    }

    #[test]
    fn thermal_state_limits_and_two_level_form() {
        let h = pauli_to_dense(&PauliString::new(vec![Pauli::Z]));
        let es = eigendecompose_with_parity(&h, &h, None).unwrap();

        let hot = thermal_state(&es, 0.0).unwrap();
        assert!(max_abs_diff(&hot.rho, &eye(2).mapv(|z| z * 0.5)) < 1e-14);

        let beta1 = thermal_state(&es, 1.0).unwrap();
        let z = 1f64.exp() + (-1f64).exp();
        assert!((beta1.rho[[0, 0]].re - (-1f64).exp() / z).abs() < 1e-14);
        assert!((beta1.rho[[1, 1]].re - 1f64.exp() / z).abs() < 1e-14);
        density_checks(&beta1.rho, 1e-12);

        let ground = thermal_state(&es, f64::INFINITY).unwrap();
        // Ground state of Z is |1⟩.
        assert!((ground.rho[[1, 1]].re - 1.0).abs() < 1e-14);
        assert!(thermal_state(&es, -0.5).is_err());

        // Degenerate ground space at beta = ∞ is rejected.
        let (hxx, pzz) = xx_pair();
        let es2 = eigendecompose_with_parity(&hxx, &pzz, None).unwrap();
        assert!(thermal_state(&es2, f64::INFINITY).is_err());
    }

    #[test]
    fn sector_hamiltonians_pinned_and_algebraic() {
        let h = pauli_to_dense(&PauliString::new(vec![Pauli::Z]));
        let es = eigendecompose_with_parity(&h, &h, None).unwrap();
        let (h_s, h_a) = sector_hamiltonians(&h, &es).unwrap();
        assert!((h_s[[0, 0]].re - 1.0).abs() < 1e-14 && h_s[[1, 1]].norm() < 1e-14);
        assert!((h_a[[1, 1]].re + 1.0).abs() < 1e-14 && h_a[[0, 0]].norm() < 1e-14);

        let lh = build_xxz(XXZParams::open(1.0, 2.0, 1.0, 4)).unwrap();
        let p = pauli_to_dense(&lh.parity);
        let es = eigendecompose_with_parity(&lh.h, &p, None).unwrap();
        let (h_s, h_a) = sector_hamiltonians(&lh.h, &es).unwrap();
        let sum = &h_s + &h_a;
        assert!(max_abs_diff(&sum, &lh.h) < 1e-10);
        // H_S P = H_S, H_A P = −H_A.
        assert!(max_abs_diff(&h_s.dot(&p), &h_s) < 1e-10);
        assert!(max_abs_diff(&h_a.dot(&p), &h_a.mapv(|z| -z)) < 1e-10);
        // Agreement with the defining dense formula (H ± HP)/2.
        let hp = lh.h.dot(&p);
        assert!(max_abs_diff(&h_s, &(&lh.h + &hp).mapv(|z| z * 0.5)) < 1e-10);
        assert!(max_abs_diff(&h_a, &(&lh.h - &hp).mapv(|z| z * 0.5)) < 1e-10);
    }

    #[test]
    fn sector_thermal_states_mix_gibbs_with_uniform() {
        let h = pauli_to_dense(&PauliString::new(vec![Pauli::Z]));
        let es = eigendecompose_with_parity(&h, &h, None).unwrap();
        let (rho_s, rho_a) = sector_thermal_states(&es, 1.0).unwrap();
        // H_S = diag(1, 0): e^{−βH_S} = diag(e^{−1}, 1).
        let z_s = (-1f64).exp() + 1.0;
        assert!((rho_s.rho[[0, 0]].re - (-1f64).exp() / z_s).abs() < 1e-14);
        assert!((rho_s.rho[[1, 1]].re - 1.0 / z_s).abs() < 1e-14);
        // H_A = diag(0, −1): e^{−βH_A} = diag(1, e^{1}).
        let z_a = 1.0 + 1f64.exp();
        assert!((rho_a.rho[[0, 0]].re - 1.0 / z_a).abs() < 1e-14);
        assert!((rho_a.rho[[1, 1]].re - 1f64.exp() / z_a).abs() < 1e-14);

        let hot = sector_thermal_states(&es, 0.0).unwrap();
        assert!(max_abs_diff(&hot.0.rho, &eye(2).mapv(|z| z * 0.5)) < 1e-14);
        assert!(max_abs_diff(&hot.1.rho, &eye(2).mapv(|z| z * 0.5)) < 1e-14);
    }

    #[test]
    fn sector_traces_match_eigencount_formulas() {
        // Tr(ρ_S P) = (Z_S − N_A)/(Z_S + N_A) and the asymmetric analogue,
        // with all quantities from the exact spectrum.
        let lh = build_xxz(XXZParams::open(1.0, 2.0, 1.0, 4)).unwrap();
        let p = pauli_to_dense(&lh.parity);
        let es = eigendecompose_with_parity(&lh.h, &p, None).unwrap();
        let beta = 1.0;
        let (rho_s, rho_a) = sector_thermal_states(&es, beta).unwrap();
        let rho = thermal_state(&es, beta).unwrap();

        let (z_s, z_a, n_s, n_a) = exact_sector_quantities(&es, beta);
        let tr = |r: &CMat| trace_prod(r, &p).re;
        assert!((tr(&rho_s.rho) - (z_s - n_a) / (z_s + n_a)).abs() < 1e-12);
        assert!((tr(&rho_a.rho) - (n_s - z_a) / (n_s + z_a)).abs() < 1e-12);
        assert!((tr(&rho.rho) - (z_s - z_a) / (z_s + z_a)).abs() < 1e-12);
    }

    /// Exact (Z_S, Z_A, N_S, N_A) by direct summation over the spectrum.
    fn exact_sector_quantities(es: &EigenSystem, beta: f64) -> (f64, f64, f64, f64) {
        let mut z_s = 0.0;
        let mut z_a = 0.0;
        let (n_even, n_odd) = es.sector_counts();
        for (e, p) in es.energies.iter().zip(&es.parities) {
            if *p > 0.0 {
                z_s += (-beta * e).exp();
            } else {
                z_a += (-beta * e).exp();
            }
        }
        (z_s, z_a, n_even as f64, n_odd as f64)
    }

    #[test]
    fn sector_solver_inverts_forward_map() {
        // Trivial symmetric case.
        let data = solve_sector_data(0.0, 0.0, 0.0, 16).unwrap();
        assert!((data.n_s - 8.0).abs() < 1e-12 && (data.n_a - 8.0).abs() < 1e-12);
        assert!((data.z_s - 8.0).abs() < 1e-12 && (data.z_a - 8.0).abs() < 1e-12);

        // XXZ N=4: feed exact traces; recover exact sector quantities.
        let lh = build_xxz(XXZParams::open(1.0, 2.0, 1.0, 4)).unwrap();
        let p = pauli_to_dense(&lh.parity);
        let es = eigendecompose_with_parity(&lh.h, &p, None).unwrap();
        let beta = 1.0;
        let (z_s, z_a, n_s, n_a) = exact_sector_quantities(&es, beta);
        let p_t = (z_s - z_a) / (z_s + z_a);
        let p_s = (z_s - n_a) / (z_s + n_a);
        let p_a = (n_s - z_a) / (n_s + z_a);
        let data = solve_sector_data(p_t, p_s, p_a, 16).unwrap();
        for (got, want) in [
            (data.z_s, z_s),
            (data.z_a, z_a),
            (data.n_s, n_s),
            (data.n_a, n_a),
        ] {
            assert!(
                (got - want).abs() < 1e-9 * want.abs(),
                "{got} vs {want}"
            );
        }
        assert!((data.z - (z_s + z_a)).abs() < 1e-9 * data.z);

        // Random consistent systems round-trip too.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let d = 2 * rng.gen_range(2..40usize);
            let n_s = rng.gen_range(1..d) as f64;
            let n_a = d as f64 - n_s;
            let z_s = rng.gen_range(0.05..3.0) * n_s;
            let z_a = rng.gen_range(0.05..3.0) * n_a;
            let p_t = (z_s - z_a) / (z_s + z_a);
            let p_s = (z_s - n_a) / (z_s + n_a);
            let p_a = (n_s - z_a) / (n_s + z_a);
            let data = solve_sector_data(p_t, p_s, p_a, d).unwrap();
            for (got, want) in [
                (data.z_s, z_s),
                (data.z_a, z_a),
                (data.n_s, n_s),
                (data.n_a, n_a),
            ] {
                assert!((got - want).abs() < 1e-9 * want.abs().max(1.0));
            }
        }

        // Boundary traces are rejected.
        assert!(solve_sector_data(1.0, 0.0, 0.0, 4).is_err());
        assert!(solve_sector_data(0.0, -1.0, 0.0, 4).is_err());
        assert!(solve_sector_data(0.0, 0.0, 0.0, 1).is_err());
    }

    #[test]
    fn perturbation_is_reproducible_and_valid() {
        let lh = build_xxz(XXZParams::open(1.0, 2.0, 1.0, 4)).unwrap();
        let p = pauli_to_dense(&lh.parity);
        let es = eigendecompose_with_parity(&lh.h, &p, None).unwrap();
        let rho = thermal_state(&es, 1.0).unwrap();

        let unchanged = perturb_state(&rho, 0.0, 3).unwrap();
        assert!(max_abs_diff(&unchanged.rho, &rho.rho) == 0.0);

        let a = perturb_state(&rho, 0.1, 42).unwrap();
        let b = perturb_state(&rho, 0.1, 42).unwrap();
        assert!(max_abs_diff(&a.rho, &b.rho) == 0.0, "same seed, same state");
        let c_ = perturb_state(&rho, 0.1, 43).unwrap();
        assert!(max_abs_diff(&a.rho, &c_.rho) > 1e-6, "different seed differs");
        density_checks(&a.rho, 1e-12);
        assert_eq!(a.kind, StateKind::Custom);

        assert!(perturb_state(&rho, -0.1, 1).is_err());
        assert!(perturb_state(&rho, 1.5, 1).is_err());
    }

    #[test]
    fn perturbation_strength_tracks_epsilon() {
        // d = 64 random Hermitian H with spectral norm π, β = 1: over 20
        // seeds the trace distance stays within [ε/2, 3ε/2].
        let d = 64;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut h = CMat::from_shape_fn((d, d), |_| {
            c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        h = (&h + &dagger(&h)).mapv(|z| z * 0.5);
        let norm = crate::linalg::spectral_norm_hermitian(&h).unwrap();
        h.mapv_inplace(|z| z * (std::f64::consts::PI / norm));
        let (vals, vecs) = eigh(&h).unwrap();
        let es = EigenSystem {
            energies: vals,
            basis: vecs,
            parities: vec![1.0; d], // parities unused here
        };
        let rho = thermal_state(&es, 1.0).unwrap();
        let eps = 0.1;
        for seed in 0..20u64 {
            let noisy = perturb_state(&rho, eps, seed).unwrap();
            let diff = &noisy.rho - &rho.rho;
            let dist = trace_norm_hermitian(&diff).unwrap();
            assert!(
                dist > 0.5 * eps && dist < 1.5 * eps,
                "seed {seed}: ‖Δ‖₁ = {dist}"
            );
            density_checks(&noisy.rho, 1e-12);
        }
    }
}
