//! Tailored-quench reconstruction of two-point correlators.
//!
//! The measurement primitive throughout is the quench function
//!
//! ```text
//! Q(ρ, K, M; t) = Tr(K ρ K† · e^{iHt} M e^{−iHt})
//! ```
//!
//! — prepare ρ, apply a short unitary quench K, evolve, measure M. No
//! ancilla and no controlled evolution appear anywhere. The quench operators
//! come from a five-element family built out of an involutory Hermitian
//! observable A and the parity word P:
//!
//! * `Identity`, `PlainA` (= A), `PlainP` (= P) — trivial quenches,
//! * `ImQuench` = (I + iA)/√2 = e^{iπA/4} — one Pauli rotation,
//! * `ReQuench` = (P + A)/√2 — a product of two Pauli rotations
//!   (unitary whenever {A, P} = 0).
//!
//! Expanding K ρ K† shows two identities that hold *pointwise in t*:
//!
//! * for any ρ and any Hermitian M,
//!   `Im Tr(ρ A M(t)) = Q(ImQuench) − ½Q(PlainA) − ½Q(Identity)`;
//! * whenever [ρ, P] = 0,
//!   `Re Tr(ρ P A M(t)) = Q(ReQuench) − ½Q(PlainP) − ½Q(PlainA)`.
//!
//! For a parity eigenstate (P|ψ⟩ = p|ψ⟩) and parity-anticommuting A, B the
//! three trivial channels vanish identically and the full correlator
//! collapses to two runs: `C(A,B,t) = p·Q(ReQuench) + i·Q(ImQuench)`.
//! For a Gibbs state the real part is assembled from ReQuench runs on the
//! symmetric/asymmetric sector states plus an infinite-temperature trace
//! term, with weights solved from three measured parity expectations
//! ([`crate::states::solve_sector_data`]); the imaginary part needs no
//! parity structure at all.
//!
//! Everything here works in the *dynamics* eigenbasis (exact or
//! product-formula effective): states enter either as pure vectors, as
//! diagonal weight vectors (stationary states under exact evolution), or as
//! dense rotated matrices, and each quench channel reduces to one
//! [`crate::evolution::phase_series`] call. The channel decomposition of
//! every reconstruction is retained on the output ([`ChannelRecord`]) so
//! that shot-noise emulation can resample raw measurement values and
//! downstream tooling can audit exactly which runs produced the real and
//! imaginary parts.

use num_complex::Complex64;
use rand::distributions::{Bernoulli, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{CoreError, Result};
use crate::evolution::{
    amplitude_matrix, amplitude_matrix_pure, phase_series, EffectiveEigenSystem,
    SpectralDecomposition,
};
use crate::linalg::{c, check_hermitian, dagger, eye, trace, trace_prod, CMat, CVec, ONE, ZERO};
use crate::operators::{PauliString, ScaledObservable};
use crate::states::{
    gibbs_weights, perturb_state, sector_thermal_states, sector_weights, solve_sector_data,
    thermal_state, EigenSystem, SectorData, StateKind, ThermalState,
};

/// Quench outputs are expectation values of Hermitian observables on valid
/// states; any imaginary residue is numerical and must stay below this.
pub const QUENCH_REALITY_TOL: f64 = 1e-10;

/// Tolerance on ‖[ρ, P]‖_max for reconstructions that assume a
/// parity-symmetric state.
pub const PARITY_COMMUTATION_TOL: f64 = 1e-10;

/// Relative commutator residual above which a state is flagged (warn-only)
/// as non-stationary in [`quench_function`].
pub const STATIONARITY_WARN_TOL: f64 = 1e-8;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

// ---------------------------------------------------------------------------
// Quench operators
// ---------------------------------------------------------------------------

/// The five quench operators of the protocol, parameterized by an involutory
/// observable word A and the parity word P.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuenchKind {
    /// K = I: measures the plain expectation Tr(ρ M(t)).
    Identity,
    /// K = A.
    PlainA,
    /// K = P.
    PlainP,
    /// K = (I + iA)/√2, the single Pauli rotation e^{iπA/4}.
    ImQuench,
    /// K = (P + A)/√2, unitary when {A, P} = 0.
    ReQuench,
}

impl QuenchKind {
    /// All five variants, in a fixed order.
    pub const ALL: [QuenchKind; 5] = [
        QuenchKind::Identity,
        QuenchKind::PlainA,
        QuenchKind::PlainP,
        QuenchKind::ImQuench,
        QuenchKind::ReQuench,
    ];

    /// Stable short name used in channel labels and artifacts.
    pub fn label(self) -> &'static str {
        match self {
            QuenchKind::Identity => "identity",
            QuenchKind::PlainA => "plain-A",
            QuenchKind::PlainP => "plain-P",
            QuenchKind::ImQuench => "im-quench",
            QuenchKind::ReQuench => "re-quench",
        }
    }

    fn needs_parity_word(self) -> bool {
        matches!(self, QuenchKind::PlainP | QuenchKind::ReQuench)
    }

    /// Dense realization of K. Every variant is unitary given A² = P² = I,
    /// except `ReQuench` which additionally needs {A, P} = 0.
    pub fn dense(self, a: &PauliString, p: Option<&PauliString>) -> Result<CMat> {
        let (a, p) = validate_quench_words(self, a, p)?;
        let d = a.dim();
        Ok(match self {
            QuenchKind::Identity => eye(d),
            QuenchKind::PlainA => a.dense(),
            QuenchKind::PlainP => p.unwrap().dense(),
            QuenchKind::ImQuench => {
                let mut k = eye(d);
                k.mapv_inplace(|z| z * FRAC_1_SQRT_2);
                a.add_scaled_to(&mut k, c(0.0, FRAC_1_SQRT_2));
                k
            }
            QuenchKind::ReQuench => {
                let mut k = CMat::zeros((d, d));
                p.unwrap().add_scaled_to(&mut k, c(FRAC_1_SQRT_2, 0.0));
                a.add_scaled_to(&mut k, c(FRAC_1_SQRT_2, 0.0));
                k
            }
        })
    }

    /// K ρ K† in O(d²) via Pauli-word row/column permutations, without ever
    /// forming K densely.
    pub fn apply_density(
        self,
        rho: &CMat,
        a: &PauliString,
        p: Option<&PauliString>,
    ) -> Result<CMat> {
        let (a, p) = validate_quench_words(self, a, p)?;
        if rho.dim() != (a.dim(), a.dim()) {
            return Err(CoreError::DimensionMismatch(format!(
                "state {:?} vs quench words on dimension {}",
                rho.dim(),
                a.dim()
            )));
        }
        Ok(match self {
            QuenchKind::Identity => rho.clone(),
            QuenchKind::PlainA => a.mul_left(&a.mul_right(rho)),
            QuenchKind::PlainP => {
                let p = p.unwrap();
                p.mul_left(&p.mul_right(rho))
            }
            QuenchKind::ImQuench => {
                // ½(I + iA) ρ (I − iA) = ½[ρ + AρA + i(Aρ − ρA)]
                let a_rho = a.mul_left(rho);
                let rho_a = a.mul_right(rho);
                let a_rho_a = a.mul_right(&a_rho);
                let mut out = rho.clone();
                out.zip_mut_with(&a_rho_a, |o, &x| *o += x);
                out.zip_mut_with(&a_rho, |o, &x| *o += crate::linalg::I * x);
                out.zip_mut_with(&rho_a, |o, &x| *o -= crate::linalg::I * x);
                out.mapv_inplace(|z| z * 0.5);
                out
            }
            QuenchKind::ReQuench => {
                // ½(P + A) ρ (P + A) = ½[PρP + PρA + AρP + AρA]
                let p = p.unwrap();
                let p_rho = p.mul_left(rho);
                let a_rho = a.mul_left(rho);
                let mut out = p.mul_right(&p_rho);
                out.zip_mut_with(&a.mul_right(&p_rho), |o, &x| *o += x);
                out.zip_mut_with(&p.mul_right(&a_rho), |o, &x| *o += x);
                out.zip_mut_with(&a.mul_right(&a_rho), |o, &x| *o += x);
                out.mapv_inplace(|z| z * 0.5);
                out
            }
        })
    }

    /// K|ψ⟩ in O(d), the pure-state counterpart of [`Self::apply_density`].
    pub fn apply_vector(
        self,
        psi: &CVec,
        a: &PauliString,
        p: Option<&PauliString>,
    ) -> Result<CVec> {
        let (a, p) = validate_quench_words(self, a, p)?;
        if psi.len() != a.dim() {
            return Err(CoreError::DimensionMismatch(format!(
                "state vector of length {} vs quench words on dimension {}",
                psi.len(),
                a.dim()
            )));
        }
        Ok(match self {
            QuenchKind::Identity => psi.clone(),
            QuenchKind::PlainA => a.apply_vec(psi),
            QuenchKind::PlainP => p.unwrap().apply_vec(psi),
            QuenchKind::ImQuench => {
                let a_psi = a.apply_vec(psi);
                let mut out = psi.clone();
                out.zip_mut_with(&a_psi, |o, &x| *o += crate::linalg::I * x);
                out.mapv_inplace(|z| z * FRAC_1_SQRT_2);
                out
            }
            QuenchKind::ReQuench => {
                let mut out = p.unwrap().apply_vec(psi);
                out.zip_mut_with(&a.apply_vec(psi), |o, &x| *o += x);
                out.mapv_inplace(|z| z * FRAC_1_SQRT_2);
                out
            }
        })
    }
}

impl std::fmt::Display for QuenchKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

fn validate_quench_words<'a>(
    kind: QuenchKind,
    a: &'a PauliString,
    p: Option<&'a PauliString>,
) -> Result<(&'a PauliString, Option<&'a PauliString>)> {
    if !a.is_hermitian() {
        return Err(CoreError::InvalidInput(format!(
            "quench observable {a} carries a non-real phase and is not an involution"
        )));
    }
    if let Some(p) = p {
        if !p.is_hermitian() {
            return Err(CoreError::InvalidInput(format!(
                "parity word {p} carries a non-real phase"
            )));
        }
        if p.n_sites() != a.n_sites() {
            return Err(CoreError::DimensionMismatch(format!(
                "observable on {} sites vs parity on {} sites",
                a.n_sites(),
                p.n_sites()
            )));
        }
    } else if kind.needs_parity_word() {
        return Err(CoreError::InvalidInput(format!(
            "quench kind {kind} requires the parity word"
        )));
    }
    Ok((a, p))
}

// ---------------------------------------------------------------------------
// Series containers
// ---------------------------------------------------------------------------

/// One raw quench run retained inside a [`CorrelatorSeries`]: the measured
/// series Q(t) together with the complex weight with which it enters the
/// assembled correlator, `C(t) = scale · Σ_channels weight · Q(t)`.
///
/// `values` are genuine measurement expectations (bounded by 1 for a Pauli
/// measurement), so shot-noise emulation resamples them directly.
#[derive(Debug, Clone)]
pub struct ChannelRecord {
    /// Human-readable provenance, e.g. `"Q(rho_sym, re-quench)"`.
    pub label: String,
    /// Complex assembly weight; a real weight feeds Re C, an imaginary one
    /// feeds Im C.
    pub weight: Complex64,
    /// The raw measured series over the time grid.
    pub values: Vec<f64>,
}

/// A reconstructed complex correlator over a time grid, carrying its full
/// quench-channel decomposition and the accumulated observable scale.
#[derive(Debug, Clone)]
pub struct CorrelatorSeries {
    /// Strictly increasing time grid.
    pub times: Vec<f64>,
    /// C(t) on the grid, scale included.
    pub values: Vec<Complex64>,
    /// The raw quench runs and weights that produced `values`.
    pub channels: Vec<ChannelRecord>,
    /// Product of the scalar prefactors stripped off the observables
    /// (e.g. ¼ for A = B = (c₀ + c₀†)/2).
    pub scale: f64,
}

impl CorrelatorSeries {
    /// Validates grid monotonicity, finiteness, and length consistency.
    pub fn new(
        times: Vec<f64>,
        values: Vec<Complex64>,
        channels: Vec<ChannelRecord>,
        scale: f64,
    ) -> Result<Self> {
        if times.is_empty() {
            return Err(CoreError::InvalidInput("empty time grid".into()));
        }
        if times.len() != values.len() {
            return Err(CoreError::DimensionMismatch(format!(
                "{} times vs {} values",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(CoreError::InvalidInput(
                "time grid must be finite and strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(CoreError::InvalidInput(
                "correlator values must be finite".into(),
            ));
        }
        if !scale.is_finite() || scale == 0.0 {
            return Err(CoreError::InvalidInput(format!(
                "correlator scale {scale} must be finite and nonzero"
            )));
        }
        for ch in &channels {
            if ch.values.len() != times.len() {
                return Err(CoreError::DimensionMismatch(format!(
                    "channel '{}' has {} values on a {}-point grid",
                    ch.label,
                    ch.values.len(),
                    times.len()
                )));
            }
        }
        Ok(Self {
            times,
            values,
            channels,
            scale,
        })
    }

    /// Builds the series from its channel decomposition:
    /// `values[k] = scale · Σ_ch weight_ch · q_ch[k]`.
    pub fn assemble(times: Vec<f64>, channels: Vec<ChannelRecord>, scale: f64) -> Result<Self> {
        if channels.is_empty() {
            return Err(CoreError::InvalidInput(
                "cannot assemble a correlator from zero channels".into(),
            ));
        }
        let mut values = vec![ZERO; times.len()];
        for ch in &channels {
            for (v, &q) in values.iter_mut().zip(ch.values.iter()) {
                *v += ch.weight * q;
            }
        }
        for v in &mut values {
            *v *= scale;
        }
        Self::new(times, values, channels, scale)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Replaces every channel's exact measurement values by finite-shot
    /// sample means and reassembles the correlator. Channel `i` draws from
    /// an independent stream derived from `cfg.seed`. Exact mode returns a
    /// plain clone.
    pub fn with_shot_noise(&self, cfg: &ShotConfig) -> Result<Self> {
        if self.channels.is_empty() {
            return Err(CoreError::InvalidInput(
                "series carries no channel decomposition to resample".into(),
            ));
        }
        if cfg.shots_per_point.is_none() {
            return Ok(self.clone());
        }
        let noisy = self
            .channels
            .iter()
            .enumerate()
            .map(|(i, ch)| {
                let sub = ShotConfig {
                    shots_per_point: cfg.shots_per_point,
                    seed: cfg
                        .seed
                        .wrapping_add((i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)),
                };
                Ok(ChannelRecord {
                    label: ch.label.clone(),
                    weight: ch.weight,
                    values: emulate_shots_series(&ch.values, &sub)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(self.times.clone(), noisy, self.scale)
    }
}

/// Readout mode: exact expectation values, or a finite number of ±1
/// measurement shots per time point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShotConfig {
    /// `None` — exact expectations; `Some(n)` — n Bernoulli shots per value.
    pub shots_per_point: Option<u64>,
    /// Base seed for the shot streams.
    pub seed: u64,
}

impl ShotConfig {
    pub fn exact() -> Self {
        Self {
            shots_per_point: None,
            seed: 0,
        }
    }

    pub fn sampled(shots: u64, seed: u64) -> Result<Self> {
        if shots == 0 {
            return Err(CoreError::InvalidInput(
                "shot sampling needs at least one shot per point".into(),
            ));
        }
        Ok(Self {
            shots_per_point: Some(shots),
            seed,
        })
    }
}

/// Estimates a quench expectation from finitely many ±1 measurement
/// outcomes: draws `shots` Bernoulli outcomes with mean `exact_q` and
/// returns the sample mean. Exact mode passes the value through.
pub fn emulate_shots(exact_q: f64, cfg: &ShotConfig) -> Result<f64> {
    match cfg.shots_per_point {
        None => Ok(exact_q),
        Some(shots) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            sample_mean(exact_q, shots, &mut rng)
        }
    }
}

/// [`emulate_shots`] over a whole series with one continuous random stream.
pub fn emulate_shots_series(qs: &[f64], cfg: &ShotConfig) -> Result<Vec<f64>> {
    match cfg.shots_per_point {
        None => Ok(qs.to_vec()),
        Some(shots) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            qs.iter().map(|&q| sample_mean(q, shots, &mut rng)).collect()
        }
    }
}

fn sample_mean(exact_q: f64, shots: u64, rng: &mut ChaCha8Rng) -> Result<f64> {
    if !(exact_q.abs() <= 1.0 + 1e-9) {
        return Err(CoreError::InvalidInput(format!(
            "expectation {exact_q} of a ±1-valued measurement lies outside [−1, 1]"
        )));
    }
    let p_plus = ((1.0 + exact_q) / 2.0).clamp(0.0, 1.0);
    let bern = Bernoulli::new(p_plus)
        .map_err(|e| CoreError::InvalidInput(format!("invalid Bernoulli parameter: {e}")))?;
    let successes = (0..shots).filter(|_| bern.sample(rng)).count() as f64;
    Ok(2.0 * successes / shots as f64 - 1.0)
}

// ---------------------------------------------------------------------------
// Initial-state recipes
// ---------------------------------------------------------------------------

/// Which initial state a reconstruction front-end prepares.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StatePrep {
    /// The global ground state (lowest energy across both parity sectors).
    Ground,
    /// A specific eigenvector by index in the ascending-energy ordering.
    Eigenstate(usize),
    /// The Gibbs state at finite inverse temperature β ≥ 0.
    Thermal(f64),
}

/// Reproducible state-preparation noise: every prepared density matrix ρ is
/// replaced by (ρ + ε ϱ)/(1 + ε) with a seeded random density matrix ϱ
/// ([`crate::states::perturb_state`]).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub epsilon: f64,
    pub seed: u64,
}

/// The three measured parity expectations driving the sector solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParityTraces {
    /// Tr(ρ_β P).
    pub full: f64,
    /// Tr(ρ_S P).
    pub symmetric: f64,
    /// Tr(ρ_A P).
    pub asymmetric: f64,
}

/// A thermal reconstruction together with the measured parity traces and the
/// solved sector data (whose derived channel weights are the conditioning of
/// the assembly).
#[derive(Debug, Clone)]
pub struct ThermalReconstruction {
    pub series: CorrelatorSeries,
    pub traces: ParityTraces,
    pub sector: SectorData,
}

// ---------------------------------------------------------------------------
// Dynamics view and eigenbasis plumbing
// ---------------------------------------------------------------------------

/// Borrowed spectral view of the dynamics: the exact spectrum, or a
/// product-formula effective one when supplied.
#[derive(Clone, Copy)]
struct DynView<'a> {
    energies: &'a [f64],
    basis: &'a CMat,
    parities: &'a [f64],
}

impl<'a> DynView<'a> {
    fn of(es: &'a EigenSystem, effective: Option<&'a EffectiveEigenSystem>) -> Self {
        match effective {
            None => DynView {
                energies: &es.energies,
                basis: &es.basis,
                parities: &es.parities,
            },
            Some(eff) => DynView {
                energies: &eff.energies,
                basis: &eff.basis,
                parities: &eff.parities,
            },
        }
    }

    fn dim(&self) -> usize {
        self.energies.len()
    }
}

impl SpectralDecomposition for DynView<'_> {
    fn energies(&self) -> &[f64] {
        self.energies
    }
    fn basis(&self) -> &CMat {
        self.basis
    }
    fn parities(&self) -> &[f64] {
        self.parities
    }
}

/// V† x without materializing V†.
fn rotate_vector(basis: &CMat, x: &CVec) -> CVec {
    let d = basis.nrows();
    let mut out = CVec::zeros(d);
    for (j, row) in basis.outer_iter().enumerate() {
        let xj = x[j];
        for (o, &v) in out.iter_mut().zip(row.iter()) {
            *o += v.conj() * xj;
        }
    }
    out
}

/// V† M V.
fn rotate_density(basis: &CMat, m: &CMat) -> CMat {
    dagger(basis).dot(&m.dot(basis))
}

/// Ṽ†(W·Ṽ) for a Pauli word W — one dense product thanks to the O(d²)
/// word–matrix multiplication.
fn rotate_word(basis: &CMat, w: &PauliString) -> CMat {
    dagger(basis).dot(&w.mul_left(basis))
}

/// A prepared (and already quenched) initial state expressed in the dynamics
/// eigenbasis. `Diagonal` is the exact-evolution stationary fast path; every
/// channel on such a state costs at most one dense product.
enum StateInBasis {
    Pure(CVec),
    Diagonal(Vec<f64>),
    Dense(CMat),
}

/// K̃ diag(w) K̃† for a stationary state with weights w, built from the
/// rotated words Ã and P̃.
fn quench_diagonal(
    kind: QuenchKind,
    w: &[f64],
    a_eig: &CMat,
    p_eig: Option<&CMat>,
) -> StateInBasis {
    let d = w.len();
    // (X diag(w)) X for Hermitian X: the only dense product per channel.
    let sandwich = |x: &CMat| -> CMat {
        let mut xw = x.clone();
        for (m, &wm) in w.iter().enumerate() {
            xw.column_mut(m).mapv_inplace(|z| z * wm);
        }
        xw.dot(x)
    };
    match kind {
        QuenchKind::Identity => StateInBasis::Diagonal(w.to_vec()),
        QuenchKind::PlainA => StateInBasis::Dense(sandwich(a_eig)),
        QuenchKind::PlainP => StateInBasis::Dense(sandwich(p_eig.expect("parity word required"))),
        QuenchKind::ImQuench => {
            // ½[diag(w) + Ã w Ã + i(Ã w − w Ã)]
            let mut out = sandwich(a_eig);
            for n in 0..d {
                for m in 0..d {
                    let awa = out[[n, m]];
                    let skew = crate::linalg::I * a_eig[[n, m]] * (w[m] - w[n]);
                    out[[n, m]] = 0.5 * (awa + skew);
                }
                out[[n, n]] += 0.5 * w[n];
            }
            StateInBasis::Dense(out)
        }
        QuenchKind::ReQuench => {
            let x = p_eig.expect("parity word required") + a_eig;
            let mut out = sandwich(&x);
            out.mapv_inplace(|z| z * 0.5);
            StateInBasis::Dense(out)
        }
    }
}

/// The amplitude matrix G with G_{nm} e^{i(E_m−E_n)t} summing to Q(t).
fn amplitude_for(state: &StateInBasis, b_eig: &CMat) -> CMat {
    match state {
        StateInBasis::Pure(psi) => amplitude_matrix_pure(psi, psi, b_eig),
        StateInBasis::Dense(rho) => amplitude_matrix(rho, b_eig),
        StateInBasis::Diagonal(w) => {
            let d = w.len();
            let mut g = CMat::zeros((d, d));
            for (n, &wn) in w.iter().enumerate() {
                g[[n, n]] = wn * b_eig[[n, n]];
            }
            g
        }
    }
}

/// Tr(ρ P) for a prepared state — the t = 0 readout of the quench run with
/// measurement P. On the diagonal fast path this contracts the state weights
/// with the basis parity labels (each validated against P at
/// eigendecomposition time), which keeps the β = 0 traces exact; dense and
/// pure states contract against the rotated word P̃.
fn parity_trace(state: &StateInBasis, p_eig: &CMat, parities: &[f64]) -> f64 {
    match state {
        StateInBasis::Diagonal(w) => w.iter().zip(parities).map(|(&wn, &pn)| wn * pn).sum(),
        StateInBasis::Dense(rho) => trace_prod(rho, p_eig).re,
        StateInBasis::Pure(psi) => {
            let mut acc = ZERO;
            for (n, row) in p_eig.outer_iter().enumerate() {
                let pn = psi[n].conj();
                for (m, &pe) in row.iter().enumerate() {
                    acc += pn * pe * psi[m];
                }
            }
            acc.re
        }
    }
}

/// Asserts that a measured quench series is real and strips the checked
/// imaginary residue.
fn realify(values: Vec<Complex64>, context: &str) -> Result<Vec<f64>> {
    let worst = values.iter().fold(0.0f64, |acc, v| acc.max(v.im.abs()));
    if worst > QUENCH_REALITY_TOL {
        return Err(CoreError::SymmetryViolation(format!(
            "{context}: imaginary residue {worst:.3e} exceeds {QUENCH_REALITY_TOL:.1e}"
        )));
    }
    Ok(values.into_iter().map(|v| v.re).collect())
}

/// One planned quench run: the post-quench state, its assembly weight, and
/// its provenance label.
struct ChannelPlan {
    label: String,
    weight: Complex64,
    state: StateInBasis,
}

/// Runs a plan against a fixed measurement B̃ via the phase-sum engine.
fn run_static_channel(
    plan: &ChannelPlan,
    b_eig: &CMat,
    energies: &[f64],
    times: &[f64],
) -> Result<ChannelRecord> {
    let g = amplitude_for(&plan.state, b_eig);
    let values = realify(phase_series(&g, energies, times), &plan.label)?;
    Ok(ChannelRecord {
        label: plan.label.clone(),
        weight: plan.weight,
        values,
    })
}

// ---------------------------------------------------------------------------
// Low-level quench operations
// ---------------------------------------------------------------------------

/// The protocol primitive: Q(ρ, K, B; t) = Tr(K ρ K† e^{iHt} B e^{−iHt})
/// over the time grid, with K the `kind` quench built from the words `a`
/// and `p`.
///
/// `rho` may be any density matrix; stationarity ([ρ, H] = 0) is what gives
/// the output its correlator reading, so a violated stationarity is reported
/// as a warning (see [`STATIONARITY_WARN_TOL`]) rather than an error —
/// deliberately perturbed preparations remain measurable. `b` must be
/// Hermitian; the output series is checked real to [`QUENCH_REALITY_TOL`].
pub fn quench_function<S: SpectralDecomposition>(
    rho: &CMat,
    kind: QuenchKind,
    a: &PauliString,
    p: Option<&PauliString>,
    b: &CMat,
    es: &S,
    times: &[f64],
) -> Result<Vec<f64>> {
    let d = es.dim();
    if rho.dim() != (d, d) || b.dim() != (d, d) {
        return Err(CoreError::DimensionMismatch(format!(
            "state {:?} and measurement {:?} vs dynamics dimension {d}",
            rho.dim(),
            b.dim()
        )));
    }
    check_hermitian(b, QUENCH_REALITY_TOL)?;
    warn_if_not_stationary(rho, es, "quench function");
    let rho_prime = kind.apply_density(rho, a, p)?;
    let basis = es.basis();
    let g = amplitude_matrix(&rotate_density(basis, &rho_prime), &rotate_density(basis, b));
    realify(
        phase_series(&g, es.energies(), times),
        &format!("Q({kind})"),
    )
}

/// Im Tr(ρ A B(t)) from three quench runs:
/// `Q(ImQuench) − ½Q(PlainA) − ½Q(Identity)`. Holds for arbitrary ρ and
/// Hermitian B — no parity structure enters.
pub fn im_correlator<S: SpectralDecomposition>(
    rho: &CMat,
    a: &PauliString,
    b: &CMat,
    es: &S,
    times: &[f64],
) -> Result<Vec<f64>> {
    let q_im = quench_function(rho, QuenchKind::ImQuench, a, None, b, es, times)?;
    let q_a = quench_function(rho, QuenchKind::PlainA, a, None, b, es, times)?;
    let q_id = quench_function(rho, QuenchKind::Identity, a, None, b, es, times)?;
    Ok(q_im
        .iter()
        .zip(q_a.iter().zip(q_id.iter()))
        .map(|(&im, (&qa, &qi))| im - 0.5 * qa - 0.5 * qi)
        .collect())
}

/// Re Tr(ρ P A B(t)) from three quench runs:
/// `Q(ReQuench) − ½Q(PlainP) − ½Q(PlainA)`. Requires [ρ, P] = 0 (checked to
/// [`PARITY_COMMUTATION_TOL`]); A need not anticommute with P here.
pub fn re_correlator_parity<S: SpectralDecomposition>(
    rho: &CMat,
    p: &PauliString,
    a: &PauliString,
    b: &CMat,
    es: &S,
    times: &[f64],
) -> Result<Vec<f64>> {
    let residual = crate::linalg::max_abs_diff(&p.mul_left(rho), &p.mul_right(rho));
    if residual > PARITY_COMMUTATION_TOL {
        return Err(CoreError::SymmetryViolation(format!(
            "state does not commute with parity (‖[ρ,P]‖_max = {residual:.3e})"
        )));
    }
    let q_re = quench_function(rho, QuenchKind::ReQuench, a, Some(p), b, es, times)?;
    let q_p = quench_function(rho, QuenchKind::PlainP, a, Some(p), b, es, times)?;
    let q_a = quench_function(rho, QuenchKind::PlainA, a, Some(p), b, es, times)?;
    Ok(q_re
        .iter()
        .zip(q_p.iter().zip(q_a.iter()))
        .map(|(&re, (&qp, &qa))| re - 0.5 * qp - 0.5 * qa)
        .collect())
}

/// Re Tr(A B(t)) via the infinite-temperature trick: prepare the valid
/// density matrix (I + A)/d, measure B, and rescale —
/// `Tr(A B(t)) = d·Q((I+A)/d, Identity, B; t) − Tr B`.
///
/// `a` must be a non-identity Hermitian word (so (I + A)/d is a unit-trace
/// PSD state); for Hermitian A, B the result is real, which is enforced by
/// the quench reality check.
pub fn trace_term<S: SpectralDecomposition>(
    a: &PauliString,
    b: &CMat,
    es: &S,
    times: &[f64],
) -> Result<Vec<f64>> {
    if a.weight() == 0 {
        return Err(CoreError::InvalidInput(
            "trace estimator needs a non-identity word: (I + I)/d is not a density matrix".into(),
        ));
    }
    if !a.is_hermitian() {
        return Err(CoreError::InvalidInput(format!(
            "trace estimator observable {a} is not Hermitian"
        )));
    }
    let d = es.dim();
    if a.dim() != d {
        return Err(CoreError::DimensionMismatch(format!(
            "word on dimension {} vs dynamics dimension {d}",
            a.dim()
        )));
    }
    check_hermitian(b, QUENCH_REALITY_TOL)?;
    let inv_d = 1.0 / d as f64;
    let mut rho = eye(d);
    rho.mapv_inplace(|z| z * inv_d);
    a.add_scaled_to(&mut rho, c(inv_d, 0.0));
    // The mixed state (I + A)/d is generically non-stationary; the estimator
    // needs no stationarity (it reads Tr(ρ B(t)) literally), so the plain
    // rotation path is used without the warning check.
    let rho_eig = rotate_density(es.basis(), &rho);
    let g = amplitude_matrix(&rho_eig, &rotate_density(es.basis(), b));
    let q = realify(phase_series(&g, es.energies(), times), "trace estimator")?;
    let tr_b = trace(b).re;
    Ok(q.iter().map(|&qk| d as f64 * qk - tr_b).collect())
}

fn warn_if_not_stationary<S: SpectralDecomposition>(rho: &CMat, es: &S, context: &str) {
    let res = stationarity_residual(rho, es);
    if res > STATIONARITY_WARN_TOL {
        log::warn!(
            "{context}: initial state is not stationary (relative commutator residual \
             {res:.3e}); quench values remain exact but lose their equilibrium-correlator \
             reading"
        );
    }
}

/// Probe-based relative residual of [ρ, H]: ‖H(ρx) − ρ(Hx)‖₂ normalized by
/// ‖H‖·‖ρx‖₂, maximized over a fixed pair of seeded random probes. O(d²).
fn stationarity_residual<S: SpectralDecomposition>(rho: &CMat, es: &S) -> f64 {
    let d = es.dim();
    let basis = es.basis();
    let energies = es.energies();
    let e_scale = energies.iter().fold(0.0f64, |m, &e| m.max(e.abs())).max(1e-300);
    let apply_h = |x: &CVec| -> CVec {
        let mut y = rotate_vector(basis, x);
        for (yn, &en) in y.iter_mut().zip(energies) {
            *yn *= en;
        }
        basis.dot(&y)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x7153_ab9c_04d2_11ee);
    let mut worst = 0.0f64;
    for _ in 0..2 {
        let x = CVec::from_iter((0..d).map(|_| {
            c(
                rand::Rng::sample(&mut rng, StandardNormal),
                rand::Rng::sample(&mut rng, StandardNormal),
            )
        }));
        let rho_x = rho.dot(&x);
        let h_rho_x = apply_h(&rho_x);
        let rho_h_x = rho.dot(&apply_h(&x));
        let num = (&h_rho_x - &rho_h_x)
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt();
        let den = e_scale * rho_x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        worst = worst.max(num / den.max(1e-300));
    }
    worst
}

// ---------------------------------------------------------------------------
// Channel planning
// ---------------------------------------------------------------------------

fn check_anticommutes_with_parity(word: &PauliString, p: &PauliString, role: &str) -> Result<()> {
    if word.commutes_with(p) {
        return Err(CoreError::SymmetryViolation(format!(
            "{role} observable {word} commutes with the parity word {p}; the reconstruction \
             requires anticommutation"
        )));
    }
    Ok(())
}

/// Plans the two channels of the parity-eigenstate reconstruction
/// `C(A,B,t) = p·Q(ReQuench) + i·Q(ImQuench)`.
///
/// The clean path keeps the state pure (the quench acts on the vector in the
/// computational basis, one O(d²) rotation per channel); under preparation
/// noise the state becomes a perturbed projector and the channels fall back
/// to dense quenched densities.
fn plan_eigenstate_channels(
    psi: &CVec,
    parity_sign: f64,
    a: &PauliString,
    p: &PauliString,
    dv: &DynView<'_>,
    noise: Option<NoiseSpec>,
) -> Result<Vec<ChannelPlan>> {
    let kinds = [
        (QuenchKind::ReQuench, c(parity_sign, 0.0)),
        (QuenchKind::ImQuench, crate::linalg::I),
    ];
    let mut plans = Vec::with_capacity(2);
    match noise {
        None => {
            for (kind, weight) in kinds {
                let psi_prime = kind.apply_vector(psi, a, Some(p))?;
                plans.push(ChannelPlan {
                    label: format!("Q(psi, {kind})"),
                    weight,
                    state: StateInBasis::Pure(rotate_vector(dv.basis, &psi_prime)),
                });
            }
        }
        Some(ns) => {
            let d = psi.len();
            let mut rho = CMat::zeros((d, d));
            for (i, &pi) in psi.iter().enumerate() {
                for (j, &pj) in psi.iter().enumerate() {
                    rho[[i, j]] = pi * pj.conj();
                }
            }
            let noisy = perturb_state(
                &ThermalState {
                    rho,
                    beta: f64::INFINITY,
                    kind: StateKind::Custom,
                },
                ns.epsilon,
                ns.seed,
            )?;
            for (kind, weight) in kinds {
                let rho_prime = kind.apply_density(&noisy.rho, a, Some(p))?;
                plans.push(ChannelPlan {
                    label: format!("Q(psi+noise, {kind})"),
                    weight,
                    state: StateInBasis::Dense(rotate_density(dv.basis, &rho_prime)),
                });
            }
        }
    }
    Ok(plans)
}

struct ThermalPlan {
    plans: Vec<ChannelPlan>,
    traces: ParityTraces,
    sector: SectorData,
}

/// Plans the six channels of the finite-temperature reconstruction:
///
/// * Im C from the full Gibbs state — `i·Q(ImQuench) − (i/2)·Q(PlainA) −
///   (i/2)·Q(Identity)`;
/// * Re C from the sector states and the trace estimator —
///   `c_S·Q(ρ_S, ReQuench) − c_A·Q(ρ_A, ReQuench) + (d/Z)·Q((I+A)/d,
///   Identity)` with c_S = (Z_S+N_A)/Z, c_A = (N_S+Z_A)/Z solved from the
///   three measured parity traces.
///
/// Under exact dynamics with clean preparation all states stay diagonal in
/// the dynamics basis; otherwise (effective dynamics and/or preparation
/// noise) they are built densely in the computational basis, perturbed if
/// requested, and rotated.
fn plan_thermal_channels(
    es: &EigenSystem,
    p: &PauliString,
    beta: f64,
    a: &PauliString,
    dv: &DynView<'_>,
    diagonal_fast_path: bool,
    noise: Option<NoiseSpec>,
) -> Result<ThermalPlan> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(CoreError::InvalidInput(format!(
            "thermal reconstruction needs finite β ≥ 0, got {beta}"
        )));
    }
    let d = dv.dim();
    let a_eig = rotate_word(dv.basis, a);
    let p_eig = rotate_word(dv.basis, p);

    // Prepared states, in the dynamics basis.
    let (st_full, st_sym, st_asym, st_trace) = if diagonal_fast_path && noise.is_none() {
        let trace_state = {
            let mut m = a_eig.clone();
            let inv_d = 1.0 / d as f64;
            m.mapv_inplace(|z| z * inv_d);
            for n in 0..d {
                m[[n, n]] += inv_d;
            }
            StateInBasis::Dense(m)
        };
        (
            StateInBasis::Diagonal(gibbs_weights(&es.energies, beta)),
            StateInBasis::Diagonal(sector_weights(es, beta, true)),
            StateInBasis::Diagonal(sector_weights(es, beta, false)),
            trace_state,
        )
    } else {
        let rho_full = thermal_state(es, beta)?;
        let (rho_sym, rho_asym) = sector_thermal_states(es, beta)?;
        let mut trace_rho = eye(d);
        let inv_d = 1.0 / d as f64;
        trace_rho.mapv_inplace(|z| z * inv_d);
        a.add_scaled_to(&mut trace_rho, c(inv_d, 0.0));
        let trace_state = ThermalState {
            rho: trace_rho,
            beta: 0.0,
            kind: StateKind::Custom,
        };
        let mut prepared = [rho_full, rho_sym, rho_asym, trace_state];
        if let Some(ns) = noise {
            for (k, state) in prepared.iter_mut().enumerate() {
                *state = perturb_state(state, ns.epsilon, ns.seed.wrapping_add(k as u64))?;
            }
        }
        let [f, s, asy, tr] = prepared;
        (
            StateInBasis::Dense(rotate_density(dv.basis, &f.rho)),
            StateInBasis::Dense(rotate_density(dv.basis, &s.rho)),
            StateInBasis::Dense(rotate_density(dv.basis, &asy.rho)),
            StateInBasis::Dense(rotate_density(dv.basis, &tr.rho)),
        )
    };

    // Parity traces are the t = 0 readouts with measurement P; the sector
    // scalars are *solved* from them, never read off the spectrum.
    let traces = ParityTraces {
        full: parity_trace(&st_full, &p_eig, dv.parities),
        symmetric: parity_trace(&st_sym, &p_eig, dv.parities),
        asymmetric: parity_trace(&st_asym, &p_eig, dv.parities),
    };
    let sector = solve_sector_data(traces.full, traces.symmetric, traces.asymmetric, d)?;
    let c_sym = (sector.z_s + sector.n_a) / sector.z;
    let c_asym = (sector.n_s + sector.z_a) / sector.z;

    let quench = |st: &StateInBasis, kind: QuenchKind| -> Result<StateInBasis> {
        Ok(match st {
            StateInBasis::Diagonal(w) => quench_diagonal(kind, w, &a_eig, Some(&p_eig)),
            StateInBasis::Dense(rho) => {
                // K̃ ρ̃ K̃† via the rotated words — the state is already in the
                // dynamics basis, so quench it there.
                match kind {
                    QuenchKind::Identity => StateInBasis::Dense(rho.clone()),
                    QuenchKind::PlainA => StateInBasis::Dense(a_eig.dot(&rho.dot(&a_eig))),
                    QuenchKind::PlainP => StateInBasis::Dense(p_eig.dot(&rho.dot(&p_eig))),
                    QuenchKind::ImQuench => {
                        let rho_a = rho.dot(&a_eig);
                        let a_rho = a_eig.dot(rho);
                        let mut out = a_eig.dot(&rho_a);
                        out.zip_mut_with(rho, |o, &x| *o += x);
                        out.zip_mut_with(&a_rho, |o, &x| *o += crate::linalg::I * x);
                        out.zip_mut_with(&rho_a, |o, &x| *o -= crate::linalg::I * x);
                        out.mapv_inplace(|z| z * 0.5);
                        StateInBasis::Dense(out)
                    }
                    QuenchKind::ReQuench => {
                        let x = &p_eig + &a_eig;
                        let mut out = x.dot(&rho.dot(&x));
                        out.mapv_inplace(|z| z * 0.5);
                        StateInBasis::Dense(out)
                    }
                }
            }
            StateInBasis::Pure(_) => unreachable!("thermal states are never pure"),
        })
    };

    let entries: [(&StateInBasis, &str, QuenchKind, Complex64); 6] = [
        (&st_full, "rho_beta", QuenchKind::ImQuench, crate::linalg::I),
        (
            &st_full,
            "rho_beta",
            QuenchKind::PlainA,
            c(0.0, -0.5),
        ),
        (
            &st_full,
            "rho_beta",
            QuenchKind::Identity,
            c(0.0, -0.5),
        ),
        (&st_sym, "rho_sym", QuenchKind::ReQuench, c(c_sym, 0.0)),
        (
            &st_asym,
            "rho_asym",
            QuenchKind::ReQuench,
            c(-c_asym, 0.0),
        ),
        (
            &st_trace,
            "(I+A)/d",
            QuenchKind::Identity,
            c(d as f64 / sector.z, 0.0),
        ),
    ];
    let mut plans = Vec::with_capacity(entries.len());
    for (st, state_name, kind, weight) in entries {
        plans.push(ChannelPlan {
            label: format!("Q({state_name}, {kind})"),
            weight,
            state: quench(st, kind)?,
        });
    }
    Ok(ThermalPlan {
        plans,
        traces,
        sector,
    })
}

// ---------------------------------------------------------------------------
// Correlator front-ends
// ---------------------------------------------------------------------------

/// C(A, B, t) = ⟨ψ|A B(t)|ψ⟩ for a parity eigenstate |ψ⟩ (row `index` of the
/// ascending-energy eigensystem), reconstructed from two quench runs:
/// `p·Q(ReQuench) + i·Q(ImQuench)`.
///
/// Both observables must anticommute with the parity word (checked
/// symbolically); their scalar prefactors multiply into `scale`. Pass
/// `effective` to evolve with a product-formula spectrum instead of the
/// exact one; pass `noise` to perturb the prepared projector.
pub fn eigenstate_correlator(
    es: &EigenSystem,
    index: usize,
    a: &ScaledObservable,
    b: &ScaledObservable,
    p: &PauliString,
    effective: Option<&EffectiveEigenSystem>,
    times: &[f64],
    noise: Option<NoiseSpec>,
) -> Result<CorrelatorSeries> {
    let d = es.dim();
    if index >= d {
        return Err(CoreError::InvalidInput(format!(
            "eigenstate index {index} out of range (dimension {d})"
        )));
    }
    check_anticommutes_with_parity(&a.pauli, p, "quench")?;
    check_anticommutes_with_parity(&b.pauli, p, "measured")?;
    let dv = DynView::of(es, effective);
    if dv.dim() != d {
        return Err(CoreError::DimensionMismatch(format!(
            "state dimension {d} vs dynamics dimension {}",
            dv.dim()
        )));
    }
    let psi = es.basis.column(index).to_owned();
    let parity_sign = es.parities[index];
    let plans = plan_eigenstate_channels(&psi, parity_sign, &a.pauli, p, &dv, noise)?;
    let b_eig = rotate_word(dv.basis, &b.pauli);
    let channels = plans
        .iter()
        .map(|plan| run_static_channel(plan, &b_eig, dv.energies, times))
        .collect::<Result<Vec<_>>>()?;
    CorrelatorSeries::assemble(times.to_vec(), channels, a.scale * b.scale)
}

/// C(A, B, t) = Tr(ρ_β A B(t)) for the Gibbs state at inverse temperature
/// β, assembled per the six-channel plan of [`plan_thermal_channels`]; the
/// measured parity traces and solved sector data are returned alongside the
/// series.
pub fn thermal_correlator(
    es: &EigenSystem,
    p: &PauliString,
    beta: f64,
    a: &ScaledObservable,
    b: &ScaledObservable,
    effective: Option<&EffectiveEigenSystem>,
    times: &[f64],
    noise: Option<NoiseSpec>,
) -> Result<ThermalReconstruction> {
    check_anticommutes_with_parity(&a.pauli, p, "quench")?;
    check_anticommutes_with_parity(&b.pauli, p, "measured")?;
    let dv = DynView::of(es, effective);
    if dv.dim() != es.dim() {
        return Err(CoreError::DimensionMismatch(format!(
            "state dimension {} vs dynamics dimension {}",
            es.dim(),
            dv.dim()
        )));
    }
    let ThermalPlan {
        plans,
        traces,
        sector,
    } = plan_thermal_channels(es, p, beta, &a.pauli, &dv, effective.is_none(), noise)?;
    let b_eig = rotate_word(dv.basis, &b.pauli);
    let channels = plans
        .iter()
        .map(|plan| run_static_channel(plan, &b_eig, dv.energies, times))
        .collect::<Result<Vec<_>>>()?;
    let series = CorrelatorSeries::assemble(times.to_vec(), channels, a.scale * b.scale)?;
    Ok(ThermalReconstruction {
        series,
        traces,
        sector,
    })
}

/// C(c_i, c_{i′}†, t) assembled from four Majorana-word correlators:
/// with c = (A + iB)/2,
/// `C(c_i, c_{i′}†, t) = ¼[C(A_i,A_{i′}) + C(B_i,B_{i′}) − iC(A_i,B_{i′}) +
/// iC(B_i,A_{i′})]`.
///
/// Each term runs the eigenstate or thermal reconstruction per `prep`; the
/// flattened channel decomposition keeps every raw quench run addressable.
pub fn fermionic_correlator(
    es: &EigenSystem,
    p: &PauliString,
    mode: usize,
    mode_prime: usize,
    prep: StatePrep,
    effective: Option<&EffectiveEigenSystem>,
    times: &[f64],
    noise: Option<NoiseSpec>,
) -> Result<CorrelatorSeries> {
    let n_modes = p.n_sites();
    let (a_i, b_i) = crate::operators::majorana_parts(mode, n_modes)?;
    let (a_j, b_j) = crate::operators::majorana_parts(mode_prime, n_modes)?;
    let parts: [(&ScaledObservable, &ScaledObservable, Complex64, &str); 4] = [
        (&a_i, &a_j, ONE, "xx"),
        (&b_i, &b_j, ONE, "yy"),
        (&a_i, &b_j, c(0.0, -1.0), "xy"),
        (&b_i, &a_j, crate::linalg::I, "yx"),
    ];
    let out_scale = a_i.scale * a_j.scale;
    let mut channels = Vec::new();
    for (oa, ob, coeff, tag) in parts {
        let sub = match prep {
            StatePrep::Ground => eigenstate_correlator(es, 0, oa, ob, p, effective, times, noise)?,
            StatePrep::Eigenstate(k) => {
                eigenstate_correlator(es, k, oa, ob, p, effective, times, noise)?
            }
            StatePrep::Thermal(beta) => {
                thermal_correlator(es, p, beta, oa, ob, effective, times, noise)?.series
            }
        };
        let rescale = sub.scale / out_scale;
        for ch in sub.channels {
            channels.push(ChannelRecord {
                label: format!("{tag}:{}", ch.label),
                weight: ch.weight * coeff * rescale,
                values: ch.values,
            });
        }
    }
    CorrelatorSeries::assemble(times.to_vec(), channels, out_scale)
}

/// Out-of-time-order correlator F(t) = Tr[ρ A B(t) A B(t)], reconstructed by
/// running the standard machinery with the dressed measurement
/// Ã(t) = B e^{−iHt} A e^{iHt} B in place of B: conjugating Ã(t) by the
/// forward propagator gives exactly B(t) A B(t).
///
/// A must anticommute with the parity word; Ã(t) then anticommutes with P
/// automatically (the propagator commutes with P and B has a definite parity
/// character), which is asserted numerically at every time point. With
/// `StatePrep::Thermal` the full sector machinery runs with the dressed
/// measurement, including the trace channel (whose B-squared cross term
/// vanishes identically since B² = I).
pub fn otoc(
    es: &EigenSystem,
    p: &PauliString,
    prep: StatePrep,
    a: &PauliString,
    b: &PauliString,
    effective: Option<&EffectiveEigenSystem>,
    times: &[f64],
    noise: Option<NoiseSpec>,
) -> Result<CorrelatorSeries> {
    if !a.is_hermitian() || !b.is_hermitian() {
        return Err(CoreError::InvalidInput(
            "scrambling observables must be Hermitian words".into(),
        ));
    }
    check_anticommutes_with_parity(a, p, "quench")?;
    let dv = DynView::of(es, effective);
    let a_eig = rotate_word(dv.basis, a);
    let b_eig = rotate_word(dv.basis, b);

    let plans = match prep {
        StatePrep::Ground | StatePrep::Eigenstate(_) => {
            let index = match prep {
                StatePrep::Eigenstate(k) => k,
                _ => 0,
            };
            if index >= es.dim() {
                return Err(CoreError::InvalidInput(format!(
                    "eigenstate index {index} out of range (dimension {})",
                    es.dim()
                )));
            }
            let psi = es.basis.column(index).to_owned();
            plan_eigenstate_channels(&psi, es.parities[index], a, p, &dv, noise)?
        }
        StatePrep::Thermal(beta) => {
            plan_thermal_channels(es, p, beta, a, &dv, effective.is_none(), noise)?.plans
        }
    };

    let d = dv.dim();
    let mut per_channel: Vec<Vec<f64>> = vec![Vec::with_capacity(times.len()); plans.len()];
    let mut phases = vec![ZERO; d];
    for &t in times {
        for (ph, &e) in phases.iter_mut().zip(dv.energies) {
            *ph = Complex64::from_polar(1.0, e * t);
        }
        // M̃ = B̃ · [e^{−iHt} A e^{iHt}]~ · B̃; the core dressing is
        // e^{−iE_n t} Ã_{nm} e^{+iE_m t}.
        let mut dressed_core = a_eig.clone();
        for n in 0..d {
            for m in 0..d {
                dressed_core[[n, m]] *= phases[n].conj() * phases[m];
            }
        }
        let m_eig = b_eig.dot(&dressed_core.dot(&b_eig));
        // {Ã(t), P} = 0 ⇒ Ã(t) has support only where the parity labels differ.
        let mut parity_residual = 0.0f64;
        for n in 0..d {
            for m in 0..d {
                if dv.parities[n] * dv.parities[m] > 0.0 {
                    parity_residual = parity_residual.max(m_eig[[n, m]].norm());
                }
            }
        }
        if parity_residual > QUENCH_REALITY_TOL {
            return Err(CoreError::SymmetryViolation(format!(
                "dressed scrambling observable fails to anticommute with parity at t = {t} \
                 (residual {parity_residual:.3e})"
            )));
        }
        for (plan, series) in plans.iter().zip(per_channel.iter_mut()) {
            let q = match &plan.state {
                StateInBasis::Pure(psi) => {
                    // ⟨ψ̃| D(t)† M̃ D(t) |ψ̃⟩ with D(t) = e^{−iEt}.
                    let u =
                        CVec::from_iter(psi.iter().zip(&phases).map(|(&pn, &ph)| ph.conj() * pn));
                    let mut acc = ZERO;
                    for (n, row) in m_eig.outer_iter().enumerate() {
                        let un = u[n].conj();
                        for (m, &me) in row.iter().enumerate() {
                            acc += un * me * u[m];
                        }
                    }
                    acc
                }
                StateInBasis::Diagonal(w) => {
                    // Σₙ wₙ M̃ₙₙ — the outer phases cancel on the diagonal.
                    w.iter()
                        .enumerate()
                        .map(|(n, &wn)| wn * m_eig[[n, n]])
                        .sum()
                }
                StateInBasis::Dense(rho) => {
                    // Σ_{nm} ρ̃′_{nm} e^{i(E_m−E_n)t} M̃_{mn}
                    let mut acc = ZERO;
                    for (n, row) in rho.outer_iter().enumerate() {
                        let phn = phases[n].conj();
                        for (m, &rnm) in row.iter().enumerate() {
                            acc += rnm * phases[m] * phn * m_eig[[m, n]];
                        }
                    }
                    acc
                }
            };
            if q.im.abs() > QUENCH_REALITY_TOL {
                return Err(CoreError::SymmetryViolation(format!(
                    "{}: imaginary residue {:.3e} exceeds {QUENCH_REALITY_TOL:.1e}",
                    plan.label,
                    q.im.abs()
                )));
            }
            series.push(q.re);
        }
    }

    let channels = plans
        .iter()
        .zip(per_channel)
        .map(|(plan, values)| ChannelRecord {
            label: format!("{} [dressed]", plan.label),
            weight: plan.weight,
            values,
        })
        .collect();
    CorrelatorSeries::assemble(times.to_vec(), channels, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{expectation_series, trotter_step, effective_eigensystem, exact_step};
    use crate::linalg::{from_eigen_complex, max_abs, max_abs_diff, unitarity_residual};
    use crate::models::{build_fermi_hubbard, build_xxz, FHParams, XXZParams};
    use crate::operators::{jw_annihilation, parity_operator, pauli_to_dense};
    use crate::states::eigendecompose_with_parity;
    use rand::Rng;

    fn word(text: &str) -> PauliString {
        text.parse().unwrap()
    }

    fn grid(n: usize, dt: f64) -> Vec<f64> {
        (0..n).map(|k| k as f64 * dt).collect()
    }

    /// Dense oracle: Tr(ρ X e^{iHt} Y e^{−iHt}) via explicit propagators.
    fn naive_correlator(
        es: &EigenSystem,
        rho: &CMat,
        x: &CMat,
        y: &CMat,
        times: &[f64],
    ) -> Vec<Complex64> {
        times
            .iter()
            .map(|&t| {
                let u = exact_step(es, t);
                let y_t = dagger(&u).dot(&y.dot(&u));
                trace_prod(&rho.dot(x), &y_t)
            })
            .collect()
    }

    fn single_qubit_setup() -> (EigenSystem, PauliString, PauliString, CMat) {
        let h = pauli_to_dense(&word("Z"));
        let p = word("Z");
        let es = eigendecompose_with_parity(&h, &pauli_to_dense(&p), None).unwrap();
        let a = word("X");
        let rho0 = {
            // |0⟩⟨0|
            let mut m = CMat::zeros((2, 2));
            m[[0, 0]] = ONE;
            m
        };
        (es, p, a, rho0)
    }

    fn xxz4() -> (EigenSystem, PauliString) {
        let lh = build_xxz(XXZParams::open(1.0, 2.0, 1.0, 4)).unwrap();
        let p = lh.parity.clone();
        let es = eigendecompose_with_parity(&lh.h, &pauli_to_dense(&p), None).unwrap();
        (es, p)
    }

    #[test]
    fn quench_kinds_dense_are_unitary() {
        let a = word("XYX");
        let p = parity_operator(3);
        assert!(!a.commutes_with(&p), "test fixture must anticommute");
        for kind in QuenchKind::ALL {
            let k = kind.dense(&a, Some(&p)).unwrap();
            assert!(
                unitarity_residual(&k) < 1e-12,
                "{kind} dense realization must be unitary"
            );
        }
    }

    #[test]
    fn quench_application_matches_dense_conjugation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let d = 8usize;
        let mut rho = CMat::zeros((d, d));
        for i in 0..d {
            for j in 0..d {
                rho[[i, j]] = c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
            }
        }
        let rho = {
            let h = (&rho + &dagger(&rho)).mapv(|z| z * 0.5);
            h
        };
        let a = word("XZY");
        let p = parity_operator(3);
        for kind in QuenchKind::ALL {
            let k = kind.dense(&a, Some(&p)).unwrap();
            let via_dense = k.dot(&rho.dot(&dagger(&k)));
            let via_words = kind.apply_density(&rho, &a, Some(&p)).unwrap();
            assert!(
                max_abs_diff(&via_dense, &via_words) < 1e-12,
                "{kind} density application disagrees with dense conjugation"
            );

            let psi = CVec::from_iter((0..d).map(|i| c(1.0 / (i as f64 + 1.0), 0.3 * i as f64)));
            let via_dense_vec = k.dot(&psi);
            let via_words_vec = kind.apply_vector(&psi, &a, Some(&p)).unwrap();
            let err = via_dense_vec
                .iter()
                .zip(via_words_vec.iter())
                .fold(0.0f64, |m, (&x, &y)| m.max((x - y).norm()));
            assert!(err < 1e-12, "{kind} vector application disagrees");
        }
    }

    #[test]
    fn parity_word_is_required_exactly_where_it_enters() {
        let a = word("X");
        assert!(QuenchKind::ImQuench.dense(&a, None).is_ok());
        assert!(QuenchKind::ReQuench.dense(&a, None).is_err());
        assert!(QuenchKind::PlainP
            .apply_density(&eye(2), &a, None)
            .is_err());
    }

    #[test]
    fn single_qubit_requench_produces_plus_state_series() {
        // K = (Z + X)/√2 maps |0⟩ to |+⟩; measuring X after evolving under
        // H = Z gives ⟨+|X(t)|+⟩ = cos 2t.
        let (es, p, a, rho0) = single_qubit_setup();
        let b = pauli_to_dense(&word("X"));
        let times = grid(40, 0.1);
        let q = quench_function(&rho0, QuenchKind::ReQuench, &a, Some(&p), &b, &es, &times)
            .unwrap();
        for (&t, &qt) in times.iter().zip(&q) {
            assert!((qt - (2.0 * t).cos()).abs() < 1e-12);
        }
        // The identity quench sees the unrotated |0⟩: Tr(|0⟩⟨0| X(t)) = 0.
        let q_id =
            quench_function(&rho0, QuenchKind::Identity, &a, Some(&p), &b, &es, &times).unwrap();
        assert!(q_id.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn im_correlator_single_qubit_and_equal_time() {
        // C(X, X, t) = e^{−2it} for |0⟩ under H = Z: the imaginary part is
        // −sin 2t, and at t = 0 it vanishes (C(A,A,0) = Tr ρ = 1 is real).
        let (es, _p, a, rho0) = single_qubit_setup();
        let b = pauli_to_dense(&word("X"));
        let times = grid(40, 0.1);
        let im = im_correlator(&rho0, &a, &b, &es, &times).unwrap();
        for (&t, &v) in times.iter().zip(&im) {
            assert!((v + (2.0 * t).sin()).abs() < 1e-12);
        }
        assert!(im[0].abs() < 1e-12);
    }

    #[test]
    fn im_correlator_matches_oracle_without_any_parity_structure() {
        // Degenerate diagonal H with a random block-structured ρ commuting
        // with it (but NOT with the parity word): the three-channel identity
        // still reproduces Im Tr(ρ A B(t)) pointwise.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let d = 8usize;
        let diag = [1.5, 1.5, -0.25, -0.25, -0.25, 0.75, 2.0, 2.0];
        let mut h = CMat::zeros((d, d));
        for (i, &e) in diag.iter().enumerate() {
            h[[i, i]] = c(e, 0.0);
        }
        let p = parity_operator(3);
        let es = eigendecompose_with_parity(&h, &pauli_to_dense(&p), None).unwrap();

        // Random Hermitian PSD within the degenerate blocks of H only.
        let mut rho = CMat::zeros((d, d));
        for (start, end) in [(0usize, 2usize), (2, 5), (5, 6), (6, 8)] {
            for i in start..end {
                for j in start..end {
                    rho[[i, j]] = c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
                }
            }
        }
        let mut rho = {
            let sq = rho.dot(&dagger(&rho));
            sq
        };
        let tr = trace(&rho).re;
        rho.mapv_inplace(|z| z / tr);

        let a = word("XZI");
        let mut b = CMat::zeros((d, d));
        for i in 0..d {
            for j in 0..d {
                b[[i, j]] = c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
            }
        }
        let b = (&b + &dagger(&b)).mapv(|z| z * 0.5);

        let times = grid(25, 0.17);
        let im = im_correlator(&rho, &a, &b, &es, &times).unwrap();
        let oracle = naive_correlator(&es, &rho, &pauli_to_dense(&a), &b, &times);
        for (&v, o) in im.iter().zip(&oracle) {
            assert!((v - o.im).abs() < 1e-10, "{v} vs {}", o.im);
        }
    }

    #[test]
    fn re_correlator_matches_oracle_for_parity_symmetric_state() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(37);
        let (es, p) = xxz4();
        let d = es.dim();
        // Random PSD state symmetrized to commute with P.
        let mut m = CMat::zeros((d, d));
        for i in 0..d {
            for j in 0..d {
                m[[i, j]] = c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
            }
        }
        let mut rho = m.dot(&dagger(&m));
        let sym = p.mul_left(&p.mul_right(&rho));
        rho.zip_mut_with(&sym, |r, &s| *r = 0.5 * (*r + s));
        let tr = trace(&rho).re;
        rho.mapv_inplace(|z| z / tr);

        let a = word("XIII");
        let mut b = CMat::zeros((d, d));
        for i in 0..d {
            for j in 0..d {
                b[[i, j]] = c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
            }
        }
        let b = (&b + &dagger(&b)).mapv(|z| z * 0.5);

        let times = grid(20, 0.13);
        let re = re_correlator_parity(&rho, &p, &a, &b, &es, &times).unwrap();
        let pa = p.mul_left(&pauli_to_dense(&a));
        let oracle = times.iter().map(|&t| {
            let u = exact_step(&es, t);
            let b_t = dagger(&u).dot(&b.dot(&u));
            trace_prod(&rho.dot(&pa), &b_t)
        });
        for (&v, o) in re.iter().zip(oracle) {
            assert!((v - o.re).abs() < 1e-10, "{v} vs {}", o.re);
        }

        // A state that fails to commute with P is rejected.
        let mut bad = rho.clone();
        bad[[0, 1]] += c(0.05, 0.0);
        bad[[1, 0]] += c(0.05, 0.0);
        assert!(re_correlator_parity(&bad, &p, &a, &b, &es, &times).is_err());
    }

    #[test]
    fn trivial_channels_vanish_for_parity_antisymmetric_observables() {
        // [ρ, P] = 0 and {A, P} = {B, P} = 0 force Q(ρ, K, B(t)) = 0 for the
        // three trivial quenches: KρK† keeps parity blocks, B(t) only
        // connects opposite blocks.
        let lh = build_xxz(XXZParams::open(0.9, 1.7, 0.4, 3)).unwrap();
        let p = lh.parity.clone();
        let es = eigendecompose_with_parity(&lh.h, &pauli_to_dense(&p), None).unwrap();
        let rho = thermal_state(&es, 0.7).unwrap().rho;
        let a = word("XII");
        let b = pauli_to_dense(&word("IYI"));
        let times = grid(12, 0.21);
        for kind in [QuenchKind::Identity, QuenchKind::PlainA, QuenchKind::PlainP] {
            let q = quench_function(&rho, kind, &a, Some(&p), &b, &es, &times).unwrap();
            let worst = q.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            assert!(worst < 1e-11, "{kind} channel should vanish, got {worst}");
        }
    }

    #[test]
    fn trace_estimator_pins_and_oracle() {
        let (es, _p) = xxz4();
        let d = es.dim() as f64;
        let a = word("XIII");
        // t = 0: Tr(A·A) = d and Tr(A·B) = 0 for distinct words.
        let same = trace_term(&a, &pauli_to_dense(&a), &es, &[0.0]).unwrap();
        assert!((same[0] - d).abs() < 1e-9);
        let orth = trace_term(&a, &pauli_to_dense(&word("IYII")), &es, &[0.0]).unwrap();
        assert!(orth[0].abs() < 1e-9);

        let b = pauli_to_dense(&a);
        let times = grid(30, 0.11);
        let series = trace_term(&a, &b, &es, &times).unwrap();
        let oracle = naive_correlator(&es, &eye(16), &pauli_to_dense(&a), &b, &times);
        for (&v, o) in series.iter().zip(&oracle) {
            assert!((v - o.re).abs() < 1e-9);
        }
        // The identity word is not a valid trace-estimator observable.
        assert!(trace_term(&word("IIII"), &b, &es, &[0.0]).is_err());
    }

    #[test]
    fn eigenstate_correlator_single_qubit_phase() {
        let (es, p, _a, _rho0) = single_qubit_setup();
        let x = ScaledObservable::unit(word("X")).unwrap();
        let times = grid(30, 0.15);
        // index 1 is |0⟩ (energy +1, parity +1): C(X, X, t) = e^{−2it}.
        let series = eigenstate_correlator(&es, 1, &x, &x, &p, None, &times, None).unwrap();
        for (&t, &v) in times.iter().zip(&series.values) {
            let expect = Complex64::from_polar(1.0, -2.0 * t);
            assert!((v - expect).norm() < 1e-12);
        }
        assert_eq!(series.channels.len(), 2);
    }

    #[test]
    fn eigenstate_correlator_matches_oracle_on_xxz() {
        let (es, p) = xxz4();
        let a = ScaledObservable::unit(word("XIII")).unwrap();
        let times = grid(50, 0.2);
        for index in [0usize, 3, 9] {
            let series =
                eigenstate_correlator(&es, index, &a, &a, &p, None, &times, None).unwrap();
            let mut rho = CMat::zeros((16, 16));
            let psi = es.basis.column(index);
            for i in 0..16 {
                for j in 0..16 {
                    rho[[i, j]] = psi[i] * psi[j].conj();
                }
            }
            let oracle =
                naive_correlator(&es, &rho, &pauli_to_dense(&a.pauli), &pauli_to_dense(&a.pauli), &times);
            for (v, o) in series.values.iter().zip(&oracle) {
                assert!((v - o).norm() < 1e-10, "index {index}: {v} vs {o}");
            }
        }
    }

    #[test]
    fn eigenstate_noise_epsilon_zero_equals_clean_route() {
        // ε = 0 exercises the dense density-matrix route against the pure
        // fast path — the two independent assemblies must agree exactly.
        let (es, p) = xxz4();
        let a = ScaledObservable::unit(word("XIII")).unwrap();
        let times = grid(20, 0.3);
        let clean = eigenstate_correlator(&es, 0, &a, &a, &p, None, &times, None).unwrap();
        let zero_noise = eigenstate_correlator(
            &es,
            0,
            &a,
            &a,
            &p,
            None,
            &times,
            Some(NoiseSpec {
                epsilon: 0.0,
                seed: 7,
            }),
        )
        .unwrap();
        for (v, w) in clean.values.iter().zip(&zero_noise.values) {
            assert!((v - w).norm() < 1e-11);
        }
    }

    #[test]
    fn observable_scales_multiply_into_the_series() {
        let (es, p) = xxz4();
        let unit = ScaledObservable::unit(word("XIII")).unwrap();
        let half = ScaledObservable::new(0.5, word("XIII")).unwrap();
        let times = grid(10, 0.25);
        let u = eigenstate_correlator(&es, 0, &unit, &unit, &p, None, &times, None).unwrap();
        let h = eigenstate_correlator(&es, 0, &half, &half, &p, None, &times, None).unwrap();
        assert!((h.scale - 0.25).abs() < 1e-15);
        for (vu, vh) in u.values.iter().zip(&h.values) {
            assert!((vh - vu * 0.25).norm() < 1e-12);
        }
    }

    #[test]
    fn thermal_correlator_infinite_temperature_reduces_to_trace() {
        let (es, p) = xxz4();
        let a = ScaledObservable::unit(word("XIII")).unwrap();
        let times = grid(25, 0.2);
        let rec = thermal_correlator(&es, &p, 0.0, &a, &a, None, &times, None).unwrap();
        let tr = trace_term(&a.pauli, &pauli_to_dense(&a.pauli), &es, &times).unwrap();
        for (v, &t) in rec.series.values.iter().zip(&tr) {
            assert!((v.re - t / 16.0).abs() < 1e-10);
            assert!(v.im.abs() < 1e-10);
        }
        // β = 0 sector data is exact: N_S = N_A = d/2.
        assert_eq!(rec.sector.n_s, 8.0);
        assert_eq!(rec.sector.n_a, 8.0);
        assert_eq!(rec.traces.full, 0.0);
    }

    #[test]
    fn thermal_correlator_matches_oracle_and_channel_assembly() {
        let (es, p) = xxz4();
        let a = ScaledObservable::unit(word("XIII")).unwrap();
        let beta = 1.0;
        let times = grid(50, 0.2);
        let rec = thermal_correlator(&es, &p, beta, &a, &a, None, &times, None).unwrap();
        let rho = thermal_state(&es, beta).unwrap().rho;
        let oracle = naive_correlator(
            &es,
            &rho,
            &pauli_to_dense(&a.pauli),
            &pauli_to_dense(&a.pauli),
            &times,
        );
        for (v, o) in rec.series.values.iter().zip(&oracle) {
            assert!((v - o).norm() < 1e-9, "{v} vs {o}");
        }
        // The stored values must equal the channel assembly identically.
        for (k, v) in rec.series.values.iter().enumerate() {
            let mut acc = ZERO;
            for ch in &rec.series.channels {
                acc += ch.weight * ch.values[k];
            }
            acc *= rec.series.scale;
            assert!((v - acc).norm() < 1e-12);
        }
        // Sector data agrees with the spectrum-side oracle.
        let z_s_oracle: f64 = es
            .energies
            .iter()
            .zip(&es.parities)
            .filter(|(_, &pp)| pp > 0.0)
            .map(|(&e, _)| (-beta * e).exp())
            .sum();
        assert!((rec.sector.z_s - z_s_oracle).abs() < 1e-9 * z_s_oracle);
    }

    #[test]
    fn thermal_diagonal_and_dense_state_routes_agree() {
        // The exact-dynamics diagonal fast path and the generic dense route
        // (forced here by a zero-amplitude noise spec) are independent
        // assemblies of the same reconstruction.
        let (es, p) = xxz4();
        let a = ScaledObservable::unit(word("XIII")).unwrap();
        let times = grid(15, 0.3);
        let fast = thermal_correlator(&es, &p, 0.8, &a, &a, None, &times, None).unwrap();
        let dense = thermal_correlator(
            &es,
            &p,
            0.8,
            &a,
            &a,
            None,
            &times,
            Some(NoiseSpec {
                epsilon: 0.0,
                seed: 3,
            }),
        )
        .unwrap();
        for (v, w) in fast.series.values.iter().zip(&dense.series.values) {
            assert!((v - w).norm() < 1e-10);
        }
        assert!((fast.traces.symmetric - dense.traces.symmetric).abs() < 1e-12);
    }

    #[test]
    fn thermal_trotter_route_matches_trotter_oracle() {
        // Under product-formula dynamics the reconstruction must equal the
        // oracle evolved with the same product formula — the identities are
        // exact per evolution step.
        let lh = build_xxz(XXZParams::open(1.0, 2.0, 1.0, 4)).unwrap();
        let p = lh.parity.clone();
        let p_dense = pauli_to_dense(&p);
        let es = eigendecompose_with_parity(&lh.h, &p_dense, None).unwrap();
        let dt = 0.1;
        let u = trotter_step(&lh, dt, 1).unwrap();
        let eff = effective_eigensystem(&u, &p_dense, dt).unwrap();
        let a = ScaledObservable::unit(word("XIII")).unwrap();
        let times = grid(30, dt);
        let rec = thermal_correlator(&es, &p, 1.0, &a, &a, Some(&eff), &times, None).unwrap();

        let rho = thermal_state(&es, 1.0).unwrap().rho;
        let a_dense = pauli_to_dense(&a.pauli);
        let mut u_k = eye(16);
        let mut oracle = Vec::new();
        for _ in 0..times.len() {
            let b_t = dagger(&u_k).dot(&a_dense.dot(&u_k));
            oracle.push(trace_prod(&rho.dot(&a_dense), &b_t));
            u_k = u_k.dot(&u);
        }
        for (v, o) in rec.series.values.iter().zip(&oracle) {
            assert!((v - o).norm() < 1e-9, "{v} vs {o}");
        }
    }

    #[test]
    fn fermionic_correlator_half_filling_and_ground_oracle() {
        // Infinite temperature, t = 0: Tr(c₀ c₀†)/d = ½.
        let lh = build_fermi_hubbard(FHParams::open(1, 2, 1.5)).unwrap();
        let p = lh.parity.clone();
        let es = eigendecompose_with_parity(&lh.h, &pauli_to_dense(&p), None).unwrap();
        let times = vec![0.0];
        let rec = fermionic_correlator(
            &es,
            &p,
            0,
            0,
            StatePrep::Thermal(0.0),
            None,
            &times,
            None,
        )
        .unwrap();
        assert!((rec.values[0] - c(0.5, 0.0)).norm() < 1e-10);

        // Ground state vs the dense annihilation-operator oracle.
        let c0 = jw_annihilation(0, 4).unwrap();
        let times = grid(40, 0.15);
        let rec =
            fermionic_correlator(&es, &p, 0, 0, StatePrep::Ground, None, &times, None).unwrap();
        let psi = es.basis.column(0);
        let mut rho = CMat::zeros((16, 16));
        for i in 0..16 {
            for j in 0..16 {
                rho[[i, j]] = psi[i] * psi[j].conj();
            }
        }
        let oracle = naive_correlator(&es, &rho, &c0, &dagger(&c0), &times);
        for (v, o) in rec.values.iter().zip(&oracle) {
            assert!((v - o).norm() < 1e-9, "{v} vs {o}");
        }

        // Thermal prep against the same oracle at β = 1.
        let rec = fermionic_correlator(
            &es,
            &p,
            0,
            0,
            StatePrep::Thermal(1.0),
            None,
            &times,
            None,
        )
        .unwrap();
        let rho = thermal_state(&es, 1.0).unwrap().rho;
        let oracle = naive_correlator(&es, &rho, &c0, &dagger(&c0), &times);
        for (v, o) in rec.values.iter().zip(&oracle) {
            assert!((v - o).norm() < 1e-9, "{v} vs {o}");
        }
    }

    #[test]
    fn fermionic_linearity_over_mode_superpositions() {
        // C(αc₀ + βc₁, c₀†, t) = αC(c₀,c₀†,t) + βC(c₁,c₀†,t): the mode
        // correlators compose linearly, so cross-mode assemblies must equal
        // the sum of their parts.
        let lh = build_fermi_hubbard(FHParams::open(1, 2, 2.5)).unwrap();
        let p = lh.parity.clone();
        let es = eigendecompose_with_parity(&lh.h, &pauli_to_dense(&p), None).unwrap();
        let times = grid(15, 0.2);
        let c00 =
            fermionic_correlator(&es, &p, 0, 0, StatePrep::Thermal(0.9), None, &times, None)
                .unwrap();
        let c10 =
            fermionic_correlator(&es, &p, 1, 0, StatePrep::Thermal(0.9), None, &times, None)
                .unwrap();
        let (alpha, beta_c) = (c(0.6, 0.0), c(0.0, 0.8));
        let rho = thermal_state(&es, 0.9).unwrap().rho;
        let c0 = jw_annihilation(0, 4).unwrap();
        let c1 = jw_annihilation(1, 4).unwrap();
        let mixed = c0.mapv(|z| z * alpha) + c1.mapv(|z| z * beta_c);
        let oracle = naive_correlator(&es, &rho, &mixed, &dagger(&c0), &times);
        for ((v0, v1), o) in c00.values.iter().zip(&c10.values).zip(&oracle) {
            let combined = alpha * v0 + beta_c * v1;
            assert!((combined - o).norm() < 1e-9);
        }
    }

    #[test]
    fn otoc_equal_time_commutation_signs() {
        let (es, p) = xxz4();
        // [X₀, X₀X₁] = 0 ⇒ F(0) = 1; {X₀, Y₀} = 0 ⇒ F(0) = −1.
        let commuting = otoc(
            &es,
            &p,
            StatePrep::Thermal(1.0),
            &word("XIII"),
            &word("XXII"),
            None,
            &[0.0],
            None,
        )
        .unwrap();
        assert!((commuting.values[0] - ONE).norm() < 1e-9);
        let anticommuting = otoc(
            &es,
            &p,
            StatePrep::Thermal(1.0),
            &word("XIII"),
            &word("YIII"),
            None,
            &[0.0],
            None,
        )
        .unwrap();
        assert!((anticommuting.values[0] + ONE).norm() < 1e-9);
    }

    #[test]
    fn otoc_matches_four_operator_oracle() {
        let (es, p) = xxz4();
        let a = word("XIII");
        let b = word("IIZI");
        let times = grid(25, 0.2);
        let a_dense = pauli_to_dense(&a);
        let b_dense = pauli_to_dense(&b);
        let four_op = |rho: &CMat| -> Vec<Complex64> {
            times
                .iter()
                .map(|&t| {
                    let u = exact_step(&es, t);
                    let b_t = dagger(&u).dot(&b_dense.dot(&u));
                    let op = a_dense.dot(&b_t.dot(&a_dense.dot(&b_t)));
                    trace_prod(rho, &op)
                })
                .collect()
        };

        // Thermal preparation.
        let rec = otoc(
            &es,
            &p,
            StatePrep::Thermal(1.0),
            &a,
            &b,
            None,
            &times,
            None,
        )
        .unwrap();
        let rho = thermal_state(&es, 1.0).unwrap().rho;
        for (v, o) in rec.values.iter().zip(four_op(&rho)) {
            assert!((v - o).norm() < 1e-9, "{v} vs {o}");
        }

        // Ground-state preparation.
        let rec = otoc(&es, &p, StatePrep::Ground, &a, &b, None, &times, None).unwrap();
        let psi = es.basis.column(0);
        let mut rho = CMat::zeros((16, 16));
        for i in 0..16 {
            for j in 0..16 {
                rho[[i, j]] = psi[i] * psi[j].conj();
            }
        }
        for (v, o) in rec.values.iter().zip(four_op(&rho)) {
            assert!((v - o).norm() < 1e-9, "{v} vs {o}");
        }
    }

    #[test]
    fn shot_emulation_is_deterministic_unbiased_and_converging() {
        // Exact mode is the identity.
        assert_eq!(emulate_shots(0.37, &ShotConfig::exact()).unwrap(), 0.37);
        // Out-of-range expectations are rejected in sampling mode.
        assert!(emulate_shots(1.2, &ShotConfig::sampled(10, 0).unwrap()).is_err());
        assert!(ShotConfig::sampled(0, 1).is_err());

        let cfg = ShotConfig::sampled(10_000, 42).unwrap();
        let e1 = emulate_shots(0.0, &cfg).unwrap();
        let e2 = emulate_shots(0.0, &cfg).unwrap();
        assert_eq!(e1, e2, "same seed must reproduce the same estimate");
        assert!(e1.abs() < 0.05);

        // Standard error shrinks like shots^{−1/2}: one decade in shots is
        // about √10 ≈ 3.16 in error; check the two-decade ratio ≈ 10 with
        // wide bounds on 40 seeds.
        let q = 0.3;
        let se = |shots: u64| -> f64 {
            let n = 40;
            let mean_sq: f64 = (0..n)
                .map(|s| {
                    let est =
                        emulate_shots(q, &ShotConfig::sampled(shots, 1000 + s).unwrap()).unwrap();
                    (est - q).powi(2)
                })
                .sum::<f64>()
                / n as f64;
            mean_sq.sqrt()
        };
        let ratio = se(100) / se(10_000);
        assert!(
            (5.0..20.0).contains(&ratio),
            "two-decade standard-error ratio {ratio} should be near 10"
        );
    }

    #[test]
    fn shot_noise_resampling_keeps_assembly_consistent() {
        let (es, p) = xxz4();
        let a = ScaledObservable::unit(word("XIII")).unwrap();
        let times = grid(10, 0.2);
        let rec = thermal_correlator(&es, &p, 1.0, &a, &a, None, &times, None).unwrap();

        let exact = rec.series.with_shot_noise(&ShotConfig::exact()).unwrap();
        for (v, w) in rec.series.values.iter().zip(&exact.values) {
            assert_eq!(v, w);
        }

        let cfg = ShotConfig::sampled(100_000, 9).unwrap();
        let noisy = rec.series.with_shot_noise(&cfg).unwrap();
        let noisy2 = rec.series.with_shot_noise(&cfg).unwrap();
        for (k, v) in noisy.values.iter().enumerate() {
            assert_eq!(*v, noisy2.values[k], "resampling must be deterministic");
            // 10⁵ shots keep each channel within ~1e-2, so the assembly
            // stays close to the exact series without being equal.
            assert!((v - rec.series.values[k]).norm() < 0.1);
            let mut acc = ZERO;
            for ch in &noisy.channels {
                acc += ch.weight * ch.values[k];
            }
            assert!((v - acc * noisy.scale).norm() < 1e-12);
        }
    }

    #[test]
    fn series_validation_rejects_malformed_grids() {
        let ch = ChannelRecord {
            label: "q".into(),
            weight: ONE,
            values: vec![0.0, 0.0],
        };
        assert!(CorrelatorSeries::new(vec![0.0, 0.0], vec![ZERO, ZERO], vec![], 1.0).is_err());
        assert!(CorrelatorSeries::new(vec![0.0, -1.0], vec![ZERO, ZERO], vec![], 1.0).is_err());
        assert!(CorrelatorSeries::new(vec![0.0], vec![ZERO, ZERO], vec![], 1.0).is_err());
        assert!(CorrelatorSeries::new(vec![0.0, 1.0], vec![ZERO, ZERO], vec![], 0.0).is_err());
        assert!(
            CorrelatorSeries::new(vec![0.0, 1.0, 2.0], vec![ZERO; 3], vec![ch], 1.0).is_err(),
            "channel length mismatch must be rejected"
        );
    }

    #[test]
    fn quench_function_rejects_non_hermitian_measurements() {
        let (es, p, a, rho0) = single_qubit_setup();
        let mut b = CMat::zeros((2, 2));
        b[[0, 1]] = ONE; // raising operator, not Hermitian
        assert!(
            quench_function(&rho0, QuenchKind::Identity, &a, Some(&p), &b, &es, &[0.0]).is_err()
        );
    }

    #[test]
    fn measured_parity_traces_agree_with_raw_quench_route() {
        let (es, p) = xxz4();
        let beta = 0.8;
        let a = ScaledObservable::unit(word("XIII")).unwrap();
        let rec = thermal_correlator(&es, &p, beta, &a, &a, None, &[0.0, 0.1], None).unwrap();
        let rho = thermal_state(&es, beta).unwrap().rho;
        let q = quench_function(
            &rho,
            QuenchKind::Identity,
            &a.pauli,
            Some(&p),
            &pauli_to_dense(&p),
            &es,
            &[0.0],
        )
        .unwrap();
        assert!((rec.traces.full - q[0]).abs() < 1e-12);
    }

    #[test]
    fn stationarity_probe_flags_commutator_violations() {
        let (es, _p) = xxz4();
        let stationary = thermal_state(&es, 1.0).unwrap().rho;
        assert!(stationarity_residual(&stationary, &es) < 1e-10);
        let moving = {
            let mut m = CMat::zeros((16, 16));
            m[[0, 0]] = c(0.5, 0.0);
            m[[3, 3]] = c(0.5, 0.0);
            m[[0, 3]] = c(0.4, 0.1);
            m[[3, 0]] = c(0.4, -0.1);
            m
        };
        assert!(stationarity_residual(&moving, &es) > 1e-3);
    }

    #[test]
    fn dressed_measurement_time_dependence_is_nontrivial() {
        // A constant OTOC would indicate the dressing collapsed; for a
        // scrambling pair the series must move and stay within |F| ≤ 1.
        let (es, p) = xxz4();
        let times = grid(40, 0.25);
        let rec = otoc(
            &es,
            &p,
            StatePrep::Thermal(1.0),
            &word("XIII"),
            &word("IIZI"),
            None,
            &times,
            None,
        )
        .unwrap();
        let spread = rec
            .values
            .iter()
            .map(|v| (v - rec.values[0]).norm())
            .fold(0.0f64, f64::max);
        assert!(spread > 0.1, "OTOC should evolve, spread {spread}");
        assert!(rec.values.iter().all(|v| v.norm() <= 1.0 + 1e-9));
    }

    #[test]
    fn exact_and_expectation_series_backends_agree_on_quench_values() {
        // The quench engine (rotate + phase sum) must agree with the generic
        // expectation-series route on the same K ρ K†.
        let (es, p) = xxz4();
        let rho = thermal_state(&es, 1.2).unwrap().rho;
        let a = word("XIII");
        let b = pauli_to_dense(&word("XIII"));
        let times = grid(12, 0.4);
        for kind in QuenchKind::ALL {
            let via_quench =
                quench_function(&rho, kind, &a, Some(&p), &b, &es, &times).unwrap();
            let rho_prime = kind.apply_density(&rho, &a, Some(&p)).unwrap();
            let via_series = expectation_series(&rho_prime, &b, &es, &times).unwrap();
            for (&x, y) in via_quench.iter().zip(&via_series) {
                assert!((x - y.re).abs() < 1e-12);
                assert!(y.im.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn correlator_time_symmetry_for_thermal_states() {
        // C(A, B, −t) = conj C(B, A, t) for any stationary ρ: check via two
        // assembled reconstructions on mirrored grids.
        let (es, p) = xxz4();
        let a = ScaledObservable::unit(word("XIII")).unwrap();
        let b = ScaledObservable::unit(word("IXII")).unwrap();
        let dt = 0.2;
        let forward = grid(15, dt);
        let backward: Vec<f64> = forward.iter().map(|&t| -t).rev().collect();
        let ab = thermal_correlator(&es, &p, 1.0, &a, &b, None, &backward, None).unwrap();
        let ba = thermal_correlator(&es, &p, 1.0, &b, &a, None, &forward, None).unwrap();
        for (k, v) in ab.series.values.iter().enumerate() {
            let mirrored = ba.series.values[forward.len() - 1 - k].conj();
            assert!((v - mirrored).norm() < 1e-10);
        }
    }

    #[test]
    fn trotter_effective_route_matches_exact_at_fine_steps() {
        // Sanity that the full thermal pipeline degrades smoothly: at small
        // dt the effective-dynamics reconstruction approaches the exact one.
        let lh = build_xxz(XXZParams::open(1.0, 2.0, 1.0, 4)).unwrap();
        let p = lh.parity.clone();
        let p_dense = pauli_to_dense(&p);
        let es = eigendecompose_with_parity(&lh.h, &p_dense, None).unwrap();
        let a = ScaledObservable::unit(word("XIII")).unwrap();
        let dt = 0.02;
        let u = trotter_step(&lh, dt, 2).unwrap();
        let eff = effective_eigensystem(&u, &p_dense, dt).unwrap();
        let times = grid(10, dt);
        let exact = thermal_correlator(&es, &p, 1.0, &a, &a, None, &times, None).unwrap();
        let trot = thermal_correlator(&es, &p, 1.0, &a, &a, Some(&eff), &times, None).unwrap();
        let worst = exact
            .series
            .values
            .iter()
            .zip(&trot.series.values)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0f64, f64::max);
        assert!(worst < 1e-4, "order-2 at dt=0.02 should be ~1e-6..1e-4, got {worst}");
    }

    #[test]
    fn effective_route_energies_are_used_not_exact_ones() {
        // Guard against silently substituting exact dynamics when an
        // effective system is supplied: at coarse dt the two must differ.
        let lh = build_xxz(XXZParams::open(1.0, 2.0, 1.0, 4)).unwrap();
        let p = lh.parity.clone();
        let p_dense = pauli_to_dense(&p);
        let es = eigendecompose_with_parity(&lh.h, &p_dense, None).unwrap();
        let a = ScaledObservable::unit(word("XIII")).unwrap();
        let dt = 0.4;
        let u = trotter_step(&lh, dt, 1).unwrap();
        let eff = effective_eigensystem(&u, &p_dense, dt).unwrap();
        let times = grid(12, dt);
        let exact = thermal_correlator(&es, &p, 1.0, &a, &a, None, &times, None).unwrap();
        let trot = thermal_correlator(&es, &p, 1.0, &a, &a, Some(&eff), &times, None).unwrap();
        let diff = exact
            .series
            .values
            .iter()
            .zip(&trot.series.values)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0f64, f64::max);
        assert!(diff > 1e-3, "coarse Trotter must visibly differ, got {diff}");
    }

    #[test]
    fn noisy_preparation_shifts_but_does_not_destroy_the_series() {
        let (es, p) = xxz4();
        let a = ScaledObservable::unit(word("XIII")).unwrap();
        let times = grid(20, 0.2);
        let clean = thermal_correlator(&es, &p, 1.0, &a, &a, None, &times, None).unwrap();
        let noisy = thermal_correlator(
            &es,
            &p,
            1.0,
            &a,
            &a,
            None,
            &times,
            Some(NoiseSpec {
                epsilon: 0.1,
                seed: 5,
            }),
        )
        .unwrap();
        let dev = clean
            .series
            .values
            .iter()
            .zip(&noisy.series.values)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0f64, f64::max);
        assert!(dev > 1e-4, "ε = 0.1 must visibly perturb the series");
        assert!(dev < 0.5, "ε = 0.1 must not destroy the series, got {dev}");
        // Determinism: same noise spec, same output.
        let again = thermal_correlator(
            &es,
            &p,
            1.0,
            &a,
            &a,
            None,
            &times,
            Some(NoiseSpec {
                epsilon: 0.1,
                seed: 5,
            }),
        )
        .unwrap();
        for (v, w) in noisy.series.values.iter().zip(&again.series.values) {
            assert_eq!(v, w);
        }
    }

    #[test]
    fn anticommutation_preconditions_are_enforced() {
        let (es, p) = xxz4();
        let good = ScaledObservable::unit(word("XIII")).unwrap();
        let commuting = ScaledObservable::unit(word("ZIII")).unwrap();
        let times = [0.0, 0.1];
        assert!(
            eigenstate_correlator(&es, 0, &commuting, &good, &p, None, &times, None).is_err()
        );
        assert!(
            thermal_correlator(&es, &p, 1.0, &good, &commuting, None, &times, None).is_err()
        );
        assert!(otoc(
            &es,
            &p,
            StatePrep::Ground,
            &word("ZIII"),
            &word("XIII"),
            None,
            &times,
            None
        )
        .is_err());
    }

    #[test]
    fn phase_dressing_uses_from_eigen_consistently() {
        // Cross-check the dressed core D(−t) Ã D(t) against the dense
        // propagator sandwich on a random time.
        let (es, _p) = xxz4();
        let a = word("XIII");
        let t = 0.37;
        let a_eig = rotate_word(&es.basis, &a);
        let d = es.dim();
        let mut dressed = a_eig.clone();
        for n in 0..d {
            for m in 0..d {
                let phase = Complex64::from_polar(1.0, (es.energies[n] - es.energies[m]) * t);
                dressed[[n, m]] *= phase;
            }
        }
        let u = from_eigen_complex(
            &eye(d),
            &es.energies
                .iter()
                .map(|&e| Complex64::from_polar(1.0, -e * t))
                .collect::<Vec<_>>(),
        );
        let oracle = dagger(&u).dot(&a_eig.dot(&u));
        assert!(max_abs(&(&dressed - &oracle)) < 1e-12);
    }
}
