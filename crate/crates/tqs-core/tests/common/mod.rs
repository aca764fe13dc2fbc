//! Shared fixtures for the integration suites: reproducible random problem
//! instances (parity-symmetric Hamiltonians, stationary states, observable
//! words) and brute-force correlator oracles that deliberately avoid the
//! quench-decomposition code paths under test.
#![allow(dead_code)]

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use tqs_core::evolution::exact_step;
use tqs_core::linalg::{c, dagger, trace_prod, CMat};
use tqs_core::operators::{parity_operator, Pauli, PauliString};
use tqs_core::states::EigenSystem;

pub fn word(text: &str) -> PauliString {
    text.parse().unwrap()
}

pub fn grid(n: usize, dt: f64) -> Vec<f64> {
    (0..n).map(|k| k as f64 * dt).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dense Hermitian matrix with i.i.d. standard-normal entries, Hermitized.
pub fn random_hermitian(d: usize, rng: &mut ChaCha8Rng) -> CMat {
    let mut g = CMat::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            g[[i, j]] = c(re, im);
        }
    }
    let gd = dagger(&g);
    (&g + &gd).mapv(|z| z * 0.5)
}

/// Random Hermitian Hamiltonian commuting with the ∏Z parity word:
/// H = (G + PGP)/2 for a fully random Hermitian G.
pub fn random_parity_symmetric(n_sites: usize, rng: &mut ChaCha8Rng) -> (CMat, PauliString) {
    let p = parity_operator(n_sites);
    let g = random_hermitian(1 << n_sites, rng);
    let pgp = p.mul_left(&p.mul_right(&g));
    ((&g + &pgp).mapv(|z| z * 0.5), p)
}

/// Random stationary density matrix: a strictly positive random mixture of
/// the supplied eigenbasis columns (commutes with anything diagonal in that
/// basis, in particular H and — for a parity-resolved basis — P).
pub fn random_stationary_density(basis: &CMat, rng: &mut ChaCha8Rng) -> CMat {
    let d = basis.nrows();
    let mut w: Vec<f64> = (0..d).map(|_| rng.gen_range(0.05..1.0)).collect();
    let norm: f64 = w.iter().sum();
    for x in &mut w {
        *x /= norm;
    }
    tqs_core::linalg::from_eigen_real(basis, &w)
}

/// Uniformly random non-identity Pauli word (phase +1, hence Hermitian).
pub fn random_any_word(n_sites: usize, rng: &mut ChaCha8Rng) -> PauliString {
    loop {
        let letters: Vec<Pauli> = (0..n_sites)
            .map(|_| match rng.gen_range(0..4) {
                0 => Pauli::I,
                1 => Pauli::X,
                2 => Pauli::Y,
                _ => Pauli::Z,
            })
            .collect();
        if letters.iter().any(|&l| l != Pauli::I) {
            return PauliString::new(letters);
        }
    }
}

/// Random word that anticommutes with the ∏Z parity word (odd number of
/// X/Y letters).
pub fn random_odd_word(n_sites: usize, rng: &mut ChaCha8Rng) -> PauliString {
    let p = parity_operator(n_sites);
    loop {
        let candidate = random_any_word(n_sites, rng);
        if !candidate.commutes_with(&p) {
            return candidate;
        }
    }
}

/// Direct two-sided oracle for C(t) = Tr(ρ X B(t)): rotate ρX and B into the
/// eigenbasis once and sum the pair amplitudes with explicit phases,
/// Σ_{n,m} (ρX)~_{nm} B̃_{mn} e^{i(E_m − E_n)t}. No quench decomposition, no
/// channel assembly — an independent route through the same spectral data.
pub fn lehmann_oracle(
    energies: &[f64],
    basis: &CMat,
    rho: &CMat,
    x: &CMat,
    b: &CMat,
    times: &[f64],
) -> Vec<Complex64> {
    let d = basis.nrows();
    let x_eig = dagger(basis).dot(&rho.dot(x).dot(basis));
    let b_eig = dagger(basis).dot(&b.dot(basis));
    times
        .iter()
        .map(|&t| {
            let mut acc = Complex64::new(0.0, 0.0);
            for n in 0..d {
                for m in 0..d {
                    let phase = Complex64::from_polar(1.0, (energies[m] - energies[n]) * t);
                    acc += x_eig[[n, m]] * b_eig[[m, n]] * phase;
                }
            }
            acc
        })
        .collect()
}

/// Slow explicit-propagator oracle for small dimensions: build e^{−iHt}
/// densely per point and conjugate. Structurally the most independent check
/// (no amplitude matrices at all); use sparingly.
pub fn propagator_oracle(
    es: &EigenSystem,
    rho: &CMat,
    x: &CMat,
    b: &CMat,
    times: &[f64],
) -> Vec<Complex64> {
    times
        .iter()
        .map(|&t| {
            let u = exact_step(es, t);
            let b_t = dagger(&u).dot(&b.dot(&u));
            trace_prod(&rho.dot(x), &b_t)
        })
        .collect()
}

/// Projector |n⟩⟨n| onto one column of an eigenbasis, as a dense state.
pub fn pure_density(basis: &CMat, index: usize) -> CMat {
    let d = basis.nrows();
    let col = basis.column(index);
    CMat::from_shape_fn((d, d), |(i, j)| col[i] * col[j].conj())
}

/// Absolute sector quantities (Z_S, Z_A, N_S, N_A) by direct summation over
/// the labelled spectrum — the eigen-count oracle for the sector solver.
pub fn sector_oracle(es: &EigenSystem, beta: f64) -> (f64, f64, f64, f64) {
    let mut z_s = 0.0;
    let mut z_a = 0.0;
    let mut n_s = 0.0;
    let mut n_a = 0.0;
    for (&e, &p) in es.energies.iter().zip(&es.parities) {
        if p > 0.0 {
            z_s += (-beta * e).exp();
            n_s += 1.0;
        } else {
            z_a += (-beta * e).exp();
            n_a += 1.0;
        }
    }
    (z_s, z_a, n_s, n_a)
}

/// Largest pointwise deviation between a complex series and an oracle.
pub fn max_dev(got: &[Complex64], want: &[Complex64]) -> f64 {
    got.iter()
        .zip(want)
        .map(|(g, w)| (g - w).norm())
        .fold(0.0, f64::max)
}

/// Largest pointwise deviation between a real series and a real oracle.
pub fn max_dev_real(got: &[f64], want: &[f64]) -> f64 {
    got.iter()
        .zip(want)
        .map(|(g, w)| (g - w).abs())
        .fold(0.0, f64::max)
}
