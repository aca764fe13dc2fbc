//! Exact and Trotter–Suzuki propagation, eigenphase analysis of the step
//! unitary, and a fast engine for expectation series Tr(ρ′ B(t)).
//!
//! The performance-critical idea: once ρ′ and B are rotated into an
//! eigenbasis (exact, or the effective eigenbasis of the Trotter step), the
//! series is a pure phase sum
//!
//!   Tr(ρ′ B(t)) = Σ_{n,m} ρ̃′_{nm} B̃_{mn} e^{i(E_m − E_n)t} = v(t)† G v(t),
//!
//! with G = ρ̃′ ⊙ B̃ᵀ and v_m(t) = e^{iE_m t} — O(d²) per time point,
//! evaluated in batches of time columns through one matrix product each.
//!
//! Trotter steps are assembled from per-term factors e^{−iθw} = cos θ·I −
//! i sin θ·w (every generating word is an involution, and words within a
//! layer commute), so building the step costs O(d²) per term with no
//! diagonalization; diagonal layers collapse to a single phase-vector pass.

use ndarray::s;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::linalg::{
    c, cluster_sorted, dagger, eigh, from_eigen_complex, resolve_degenerate_clusters,
    unitarity_residual, CMat, CVec, ZERO,
};
use crate::models::LayeredHamiltonian;
use crate::states::{apply_parity, detect_diagonal, EigenSystem};

/// Propagation method for the time grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvolutionMethod {
    Exact,
    Trotter1,
    Trotter2,
}

/// Time-step recipe: method, step size, and the layer count it will use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagatorSpec {
    pub method: EvolutionMethod,
    pub dt: f64,
    pub n_layers: usize,
}

impl PropagatorSpec {
    pub fn new(method: EvolutionMethod, dt: f64, lh: &LayeredHamiltonian) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(CoreError::InvalidInput(format!(
                "time step must be positive, got {dt}"
            )));
        }
        Ok(PropagatorSpec {
            method,
            dt,
            n_layers: lh.layers.len(),
        })
    }
}

/// Eigenphase decomposition of a parity-symmetric step unitary: effective
/// energies Ẽ_n = θ_n/dt with θ_n ∈ (−π, π], the rotated basis, and a
/// definite parity per column.
#[derive(Debug, Clone)]
pub struct EffectiveEigenSystem {
    pub phases: Vec<f64>,
    pub energies: Vec<f64>,
    pub basis: CMat,
    pub parities: Vec<f64>,
}

impl EffectiveEigenSystem {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }
}

/// Anything that provides an (energies, basis, parities) spectral view; the
/// series engine and the quench reconstructions are agnostic to whether the
/// spectrum is exact or effective.
pub trait SpectralDecomposition {
    fn energies(&self) -> &[f64];
    fn basis(&self) -> &CMat;
    fn parities(&self) -> &[f64];

    fn dim(&self) -> usize {
        self.energies().len()
    }
}

impl SpectralDecomposition for EigenSystem {
    fn energies(&self) -> &[f64] {
        &self.energies
    }
    fn basis(&self) -> &CMat {
        &self.basis
    }
    fn parities(&self) -> &[f64] {
        &self.parities
    }
}

impl SpectralDecomposition for EffectiveEigenSystem {
    fn energies(&self) -> &[f64] {
        &self.energies
    }
    fn basis(&self) -> &CMat {
        &self.basis
    }
    fn parities(&self) -> &[f64] {
        &self.parities
    }
}

/// Exact one-step propagator e^{−iH dt} = V diag(e^{−iE_n dt}) V†.
pub fn exact_step(es: &EigenSystem, dt: f64) -> CMat {
    let phases: Vec<Complex64> = es
        .energies
        .iter()
        .map(|&e| Complex64::from_polar(1.0, -e * dt))
        .collect();
    from_eigen_complex(&es.basis, &phases)
}

/// Multiplies `acc` on the right by e^{−iθw} = cos θ·I − i sin θ·w for an
/// involutory word w (in-place, one permutation product per term).
fn right_multiply_term_exponential(acc: &mut CMat, term: &crate::operators::ScaledObservable, dt: f64) {
    let theta = term.scale * dt;
    let (s, co) = theta.sin_cos();
    let acc_w = term.pauli.mul_right(acc);
    acc.zip_mut_with(&acc_w, |a, &aw| *a = *a * co - aw * c(0.0, s));
}

/// One Trotter–Suzuki step for the layered Hamiltonian.
///
/// Order 1 is the ordered product ∏_γ e^{−iT_γ dt} (first layer leftmost);
/// order 2 is the symmetric (Strang) product ∏_γ e^{−iT_γ dt/2} ·
/// ∏_{γ reversed} e^{−iT_γ dt/2}. Layers are exponentiated exactly via
/// per-term factors; diagonal layers via a single phase vector.
pub fn trotter_step(lh: &LayeredHamiltonian, dt: f64, order: u8) -> Result<CMat> {
    if !(dt > 0.0) {
        return Err(CoreError::InvalidInput(format!(
            "time step must be positive, got {dt}"
        )));
    }
    let d = lh.dim();
    let mut acc = CMat::eye(d);
    // `acc ← acc · E_layer` applied left-to-right builds E₁E₂⋯E_Γ.
    let apply_layer = |acc: &mut CMat, layer: &crate::models::Layer, step: f64| {
        if layer.is_diagonal() {
            let mut phase = vec![0.0f64; d];
            for t in &layer.terms {
                let diag = t.pauli.diagonal();
                for (i, z) in diag.iter().enumerate() {
                    phase[i] += t.scale * z.re;
                }
            }
            let col: Vec<Complex64> = phase
                .iter()
                .map(|&p| Complex64::from_polar(1.0, -p * step))
                .collect();
            for (j, mut column) in acc.columns_mut().into_iter().enumerate() {
                column.mapv_inplace(|z| z * col[j]);
            }
        } else {
            for t in &layer.terms {
                right_multiply_term_exponential(acc, t, step);
            }
        }
    };
    match order {
        1 => {
            for layer in &lh.layers {
                apply_layer(&mut acc, layer, dt);
            }
        }
        2 => {
            for layer in &lh.layers {
                apply_layer(&mut acc, layer, 0.5 * dt);
            }
            for layer in lh.layers.iter().rev() {
                apply_layer(&mut acc, layer, 0.5 * dt);
            }
        }
        _ => {
            return Err(CoreError::InvalidInput(format!(
                "unsupported Trotter order {order} (expected 1 or 2)"
            )))
        }
    }
    Ok(acc)
}

/// Eigenphase decomposition of a parity-symmetric unitary step.
///
/// U is normal, so it shares an eigenbasis with the Hermitian pair
/// C = (U+U†)/2 and S = (U−U†)/(2i), whose eigenvalues are cos θ and sin θ.
/// Diagonalize C; resolve S inside cos-degenerate clusters; resolve P inside
/// the remaining genuinely degenerate eigenphase clusters. Phases use the
/// e^{−iθ} convention (θ = −arg λ), unwrapped to (−π, π], so Ẽ = θ/dt
/// reproduces the true energies whenever dt·‖H‖ < π.
pub fn effective_eigensystem(u: &CMat, p: &CMat, dt: f64) -> Result<EffectiveEigenSystem> {
    if !(dt > 0.0) {
        return Err(CoreError::InvalidInput(format!(
            "time step must be positive, got {dt}"
        )));
    }
    let d = u.nrows();
    let res = unitarity_residual(u);
    if res > 1e-10 {
        return Err(CoreError::InvalidInput(format!(
            "step operator is not unitary (residual {res:.3e})"
        )));
    }
    let p_diag = detect_diagonal(p);
    let udag = dagger(u);

    let cos_part = (u + &udag).mapv(|z| z * 0.5);
    let (cos_vals, mut basis) = eigh(&cos_part)?;

    // Stage 1: sin within cos-clusters. S restricted there is Hermitian with
    // eigenvalues ±√(1−cos²θ).
    let cos_clusters = cluster_sorted(&cos_vals, 1e-9);
    let sin_vals = resolve_degenerate_clusters(&mut basis, &cos_clusters, |block| {
        let ub = u.dot(block);
        let udb = udag.dot(block);
        (&ub - &udb).mapv(|z| z * c(0.0, -0.5))
    })?;

    // Stage 2: parity within joint (cos, sin) clusters.
    let mut joint = Vec::new();
    for &(start, end) in &cos_clusters {
        for (s0, e0) in cluster_sorted(&sin_vals[start..end], 1e-9) {
            joint.push((start + s0, start + e0));
        }
    }
    let raw_parities = resolve_degenerate_clusters(&mut basis, &joint, |block| {
        apply_parity(p, &p_diag, block)
    })?;
    for &mu in &raw_parities {
        if (mu.abs() - 1.0).abs() > 1e-8 {
            return Err(CoreError::ParityResolution(format!(
                "eigenphase cluster has restricted-parity eigenvalue {mu}"
            )));
        }
    }

    // Phases θ = −atan2(sin, cos) folded into (−π, π]; verify each rotated
    // column is an eigenvector of U with eigenvalue cos θ + i sin θ.
    let uv = u.dot(&basis);
    let mut entries: Vec<(f64, f64, usize)> = Vec::with_capacity(d);
    for n in 0..d {
        let (co, si) = (cos_vals[n], sin_vals[n]);
        let lambda = c(co, si);
        let mut worst = 0.0f64;
        for i in 0..d {
            worst = worst.max((uv[[i, n]] - basis[[i, n]] * lambda).norm());
        }
        if worst > 1e-9 {
            return Err(CoreError::ParityResolution(format!(
                "eigenphase column {n} has residual {worst:.3e}"
            )));
        }
        let mut theta = -si.atan2(co);
        if theta <= -std::f64::consts::PI {
            theta += 2.0 * std::f64::consts::PI;
        }
        entries.push((theta, raw_parities[n].signum(), n));
    }

    // Ascending effective energy; even parity first among exact ties.
    entries.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(b.1.partial_cmp(&a.1).unwrap())
    });
    let mut sorted_basis = CMat::from_elem((d, d), ZERO);
    let mut phases = Vec::with_capacity(d);
    let mut parities = Vec::with_capacity(d);
    for (j, &(theta, parity, src)) in entries.iter().enumerate() {
        sorted_basis
            .slice_mut(s![.., j])
            .assign(&basis.slice(s![.., src]));
        phases.push(theta);
        parities.push(parity);
    }
    let energies: Vec<f64> = phases.iter().map(|&t| t / dt).collect();
    Ok(EffectiveEigenSystem {
        phases,
        energies,
        basis: sorted_basis,
        parities,
    })
}

/// Batched phase sum value(t) = v(t)† G v(t), v_m(t) = e^{iE_m t}.
///
/// The time grid is split into column blocks; each block costs one
/// (d × d)·(d × block) product. Blocks are independent and evaluated in
/// parallel; results are ordered like `times`.
pub fn phase_series(g: &CMat, energies: &[f64], times: &[f64]) -> Vec<Complex64> {
    let d = energies.len();
    debug_assert_eq!(g.dim(), (d, d));
    const BLOCK: usize = 256;
    times
        .par_chunks(BLOCK)
        .flat_map_iter(|chunk| {
            let cols = chunk.len();
            let mut phi = CMat::from_elem((d, cols), ZERO);
            for (col, &t) in chunk.iter().enumerate() {
                for m in 0..d {
                    phi[[m, col]] = Complex64::from_polar(1.0, energies[m] * t);
                }
            }
            let y = g.dot(&phi);
            (0..cols)
                .map(|col| {
                    let mut acc = ZERO;
                    for n in 0..d {
                        acc += phi[[n, col]].conj() * y[[n, col]];
                    }
                    acc
                })
                .collect::<Vec<_>>()
                .into_iter()
        })
        .collect()
}

/// The amplitude matrix G = ρ̃′ ⊙ B̃ᵀ from operators already expressed in the
/// eigenbasis.
pub fn amplitude_matrix(rho_eig: &CMat, b_eig: &CMat) -> CMat {
    let mut g = rho_eig.clone();
    g.zip_mut_with(&b_eig.t(), |r, &b| *r *= b);
    g
}

/// Rank-one amplitude matrix for a pure-state sandwich ⟨φ|B(t)|ψ⟩, i.e.
/// ρ′ = |ψ⟩⟨φ| without forming it densely: G_{nm} = φ̃*_n B̃_{nm} ψ̃_m... with
/// the engine's convention this is G = (φ̃ ψ̃ᵀ)ᵀ ⊙ B̃ᵀ; spelled out below.
pub fn amplitude_matrix_pure(phi_eig: &CVec, psi_eig: &CVec, b_eig: &CMat) -> CMat {
    let d = b_eig.nrows();
    let mut g = CMat::from_elem((d, d), ZERO);
    // ρ̃′_{nm} = ψ̃_n φ̃*_m, so G_{nm} = ψ̃_n φ̃*_m B̃_{mn}.
    for n in 0..d {
        for m in 0..d {
            g[[n, m]] = psi_eig[n] * phi_eig[m].conj() * b_eig[[m, n]];
        }
    }
    g
}

/// Tr(ρ′ B(t)) over a time grid: two one-time basis rotations, then the
/// O(d²)-per-point phase sum. ρ′ may be any operator (not necessarily
/// Hermitian or normalized), which lets callers fold products like ρA into
/// one series.
pub fn expectation_series<S: SpectralDecomposition>(
    rho_prime: &CMat,
    b: &CMat,
    es: &S,
    times: &[f64],
) -> Result<Vec<Complex64>> {
    let d = es.dim();
    if rho_prime.dim() != (d, d) || b.dim() != (d, d) {
        return Err(CoreError::DimensionMismatch(format!(
            "expectation series: ρ′ {:?}, B {:?}, eigensystem dim {d}",
            rho_prime.dim(),
            b.dim()
        )));
    }
    let v = es.basis();
    let rho_eig = dagger(v).dot(&rho_prime.dot(v));
    let b_eig = dagger(v).dot(&b.dot(v));
    let g = amplitude_matrix(&rho_eig, &b_eig);
    Ok(phase_series(&g, es.energies(), times))
}
