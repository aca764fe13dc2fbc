//! Benchmark Hamiltonians: the 1D XXZ chain and the 2D Fermi–Hubbard model
//! under the Jordan–Wigner mapping, together with spectral-norm rescaling
//! and a decomposition into layers of mutually commuting Pauli words for
//! product-formula time evolution.
//!
//! XXZ chain (open by default):
//!   H = J_X Σ_n (X_n X_{n+1} + Y_n Y_{n+1}) + J_Z Σ_n Z_n Z_{n+1} + h Σ_n Z_n
//!
//! Fermi–Hubbard on an Lx×Ly lattice with spin, mapped to 2·Lx·Ly qubits:
//!   H = −Σ_{⟨a,b⟩,σ} (c†_{aσ} c_{bσ} + h.c.) + h_U Σ_a n_{a↑} n_{a↓}
//!
//! with modes interleaved as (x, y, σ) → 2(Ly·x + y) + σ, so for the 2×3
//! lattice the layers are the familiar grouping: y-direction hops
//! {0,1,6,7}→+2, y-direction hops {2,3,8,9}→+2, x-direction hops {0..5}→+6,
//! and the on-site interaction h_U Σ_j n_{2j} n_{2j+1}.

use crate::error::{CoreError, Result};
use crate::linalg::{eigvalsh, CMat, ZERO};
use crate::operators::{parity_operator, Pauli, PauliString, ScaledObservable};

/// Couplings and geometry of the XXZ chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XXZParams {
    pub j_x: f64,
    pub j_z: f64,
    pub h: f64,
    pub n_sites: usize,
    pub periodic: bool,
}

impl XXZParams {
    /// Open-chain parameters (the only geometry exercised by the benchmark
    /// experiments).
    pub fn open(j_x: f64, j_z: f64, h: f64, n_sites: usize) -> Self {
        XXZParams {
            j_x,
            j_z,
            h,
            n_sites,
            periodic: false,
        }
    }
}

/// Geometry and interaction strength of the Fermi–Hubbard model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FHParams {
    pub lx: usize,
    pub ly: usize,
    pub h_u: f64,
    pub periodic: bool,
}

impl FHParams {
    /// Open-boundary parameters (used by all benchmark experiments).
    pub fn open(lx: usize, ly: usize, h_u: f64) -> Self {
        FHParams {
            lx,
            ly,
            h_u,
            periodic: false,
        }
    }

    /// Number of fermionic modes = qubits (two spin species per site).
    pub fn n_modes(&self) -> usize {
        2 * self.lx * self.ly
    }

    /// Mode index of lattice site (x, y) with spin σ ∈ {0 = ↑, 1 = ↓}.
    pub fn mode(&self, x: usize, y: usize, spin: usize) -> usize {
        debug_assert!(x < self.lx && y < self.ly && spin < 2);
        2 * (self.ly * x + y) + spin
    }
}

/// One Trotter layer: a list of mutually commuting weighted Pauli words.
#[derive(Debug, Clone)]
pub struct Layer {
    pub terms: Vec<ScaledObservable>,
}

impl Layer {
    /// Number of qubits the layer acts on.
    pub fn n_sites(&self) -> usize {
        self.terms[0].n_sites()
    }

    /// True when every word is built from I/Z only, so e^{−iθ·layer} is a
    /// diagonal phase vector.
    pub fn is_diagonal(&self) -> bool {
        self.terms.iter().all(|t| t.pauli.is_diagonal())
    }

    /// Dense sum of the layer's terms.
    pub fn dense(&self) -> CMat {
        let d = 1usize << self.n_sites();
        let mut acc = CMat::from_elem((d, d), ZERO);
        for t in &self.terms {
            t.pauli.add_scaled_to(&mut acc, crate::linalg::c(t.scale, 0.0));
        }
        acc
    }

    /// Checks that all words in the layer mutually commute (symbolically),
    /// which is what licenses exponentiating the layer term by term.
    fn check_mutually_commuting(&self, label: &str) -> Result<()> {
        for (i, a) in self.terms.iter().enumerate() {
            for b in &self.terms[i + 1..] {
                if !a.pauli.commutes_with(&b.pauli) {
                    return Err(CoreError::SymmetryViolation(format!(
                        "layer {label}: words {} and {} do not commute",
                        a.pauli, b.pauli
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A Hamiltonian with its dense form, commuting-layer decomposition, parity
/// word, and the cumulative spectral rescale factor applied so far.
///
/// Constructors maintain the invariants (layers sum to `h`, words within a
/// layer commute, every word commutes with `parity`); treat the fields as
/// read-only.
#[derive(Debug, Clone)]
pub struct LayeredHamiltonian {
    pub h: CMat,
    pub layers: Vec<Layer>,
    pub gamma: f64,
    pub parity: PauliString,
}

impl LayeredHamiltonian {
    /// Validates layer-wise commutation and parity symmetry, then
    /// accumulates the dense Hamiltonian as the exact sum of the layers.
    fn from_layers(layers: Vec<Layer>, parity: PauliString) -> Result<Self> {
        if layers.is_empty() {
            return Err(CoreError::InvalidInput("no Hamiltonian terms".into()));
        }
        for (idx, layer) in layers.iter().enumerate() {
            layer.check_mutually_commuting(&format!("{idx}"))?;
            for t in &layer.terms {
                if !t.pauli.commutes_with(&parity) {
                    return Err(CoreError::SymmetryViolation(format!(
                        "word {} anticommutes with parity {}",
                        t.pauli, parity
                    )));
                }
            }
        }
        let d = layers[0].terms[0].pauli.dim();
        let mut h = CMat::from_elem((d, d), ZERO);
        for layer in &layers {
            for t in &layer.terms {
                t.pauli.add_scaled_to(&mut h, crate::linalg::c(t.scale, 0.0));
            }
        }
        Ok(LayeredHamiltonian {
            h,
            layers,
            gamma: 1.0,
            parity,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.parity.n_sites()
    }

    pub fn dim(&self) -> usize {
        self.parity.dim()
    }
}

/// Builds the XXZ chain with three commuting layers: even bonds (XX + YY),
/// odd bonds (XX + YY), and the diagonal part (ZZ + field).
///
/// Periodic chains need N ≥ 3 and even N (odd N breaks the two-coloring of
/// bonds, surfacing as a layer-commutation error).
pub fn build_xxz(params: XXZParams) -> Result<LayeredHamiltonian> {
    let n = params.n_sites;
    if n < 2 {
        return Err(CoreError::InvalidInput(format!(
            "XXZ chain needs at least 2 sites, got {n}"
        )));
    }
    if params.periodic && n < 3 {
        return Err(CoreError::InvalidInput(
            "periodic XXZ chain needs at least 3 sites".into(),
        ));
    }

    let mut bonds: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    if params.periodic {
        bonds.push((n - 1, 0));
    }

    let two_site = |a: usize, b: usize, letter: Pauli| {
        let mut letters = vec![Pauli::I; n];
        letters[a] = letter;
        letters[b] = letter;
        PauliString::new(letters)
    };

    let mut even = Vec::new();
    let mut odd = Vec::new();
    let mut diag = Vec::new();
    for (idx, &(a, b)) in bonds.iter().enumerate() {
        if params.j_x != 0.0 {
            let xx = ScaledObservable::new(params.j_x, two_site(a, b, Pauli::X))?;
            let yy = ScaledObservable::new(params.j_x, two_site(a, b, Pauli::Y))?;
            if idx % 2 == 0 {
                even.extend([xx, yy]);
            } else {
                odd.extend([xx, yy]);
            }
        }
        if params.j_z != 0.0 {
            diag.push(ScaledObservable::new(params.j_z, two_site(a, b, Pauli::Z))?);
        }
    }
    if params.h != 0.0 {
        for site in 0..n {
            diag.push(ScaledObservable::new(
                params.h,
                PauliString::single(n, site, Pauli::Z),
            )?);
        }
    }

    let layers: Vec<Layer> = [even, odd, diag]
        .into_iter()
        .filter(|terms| !terms.is_empty())
        .map(|terms| Layer { terms })
        .collect();
    LayeredHamiltonian::from_layers(layers, parity_operator(n))
}

/// The two Jordan–Wigner words of a hopping term on modes a < b,
/// −(c†_a c_b + c†_b c_a) = −½ (X_a Z…Z X_b + Y_a Z…Z Y_b),
/// with the Z-string covering the modes strictly between.
fn hopping_words(n_modes: usize, a: usize, b: usize) -> Result<[ScaledObservable; 2]> {
    debug_assert!(a < b && b < n_modes);
    let word = |letter: Pauli| {
        let mut letters = vec![Pauli::I; n_modes];
        letters[a] = letter;
        letters[b] = letter;
        for k in a + 1..b {
            letters[k] = Pauli::Z;
        }
        ScaledObservable::new(-0.5, PauliString::new(letters))
    };
    Ok([word(Pauli::X)?, word(Pauli::Y)?])
}

/// The four diagonal words of h_U · n_a n_b = (h_U/4)(I − Z_a − Z_b + Z_a Z_b).
fn density_density_words(n_modes: usize, a: usize, b: usize, h_u: f64) -> Result<Vec<ScaledObservable>> {
    let q = h_u / 4.0;
    let mut zz = vec![Pauli::I; n_modes];
    zz[a] = Pauli::Z;
    zz[b] = Pauli::Z;
    Ok(vec![
        ScaledObservable::new(q, PauliString::identity(n_modes))?,
        ScaledObservable::new(-q, PauliString::single(n_modes, a, Pauli::Z))?,
        ScaledObservable::new(-q, PauliString::single(n_modes, b, Pauli::Z))?,
        ScaledObservable::new(q, PauliString::new(zz))?,
    ])
}

/// Builds the Fermi–Hubbard Hamiltonian with hopping layers grouped by edge
/// parity (y-even, y-odd, x-even, x-odd; empty groups dropped) and one
/// diagonal interaction layer. For the 2×3 lattice this reproduces the
/// four-layer grouping T₁…T₄ described in the module docs.
pub fn build_fermi_hubbard(params: FHParams) -> Result<LayeredHamiltonian> {
    let (lx, ly) = (params.lx, params.ly);
    if lx * ly < 1 {
        return Err(CoreError::InvalidInput(
            "Fermi–Hubbard lattice needs at least one site".into(),
        ));
    }
    if params.periodic && (lx == 2 || ly == 2 || (lx == 1 && ly == 1)) {
        return Err(CoreError::InvalidInput(
            "periodic extents of 1 or 2 duplicate lattice edges".into(),
        ));
    }
    let m = params.n_modes();

    // Lattice edges grouped so that edges within a group are vertex-disjoint.
    let mut y_groups = [Vec::new(), Vec::new()];
    let mut x_groups = [Vec::new(), Vec::new()];
    for x in 0..lx {
        for y in 0..ly.saturating_sub(1) {
            y_groups[y % 2].push(((x, y), (x, y + 1)));
        }
        if params.periodic && ly > 2 {
            y_groups[(ly - 1) % 2].push(((x, ly - 1), (x, 0)));
        }
    }
    for y in 0..ly {
        for x in 0..lx.saturating_sub(1) {
            x_groups[x % 2].push(((x, y), (x + 1, y)));
        }
        if params.periodic && lx > 2 {
            x_groups[(lx - 1) % 2].push(((lx - 1, y), (0, y)));
        }
    }

    let mut layers = Vec::new();
    for group in y_groups.iter().chain(x_groups.iter()) {
        let mut terms = Vec::new();
        for &((x1, y1), (x2, y2)) in group {
            for spin in 0..2 {
                let (a, b) = (params.mode(x1, y1, spin), params.mode(x2, y2, spin));
                let (a, b) = (a.min(b), a.max(b));
                terms.extend(hopping_words(m, a, b)?);
            }
        }
        if !terms.is_empty() {
            layers.push(Layer { terms });
        }
    }
    if params.h_u != 0.0 {
        let mut terms = Vec::new();
        for site in 0..lx * ly {
            terms.extend(density_density_words(m, 2 * site, 2 * site + 1, params.h_u)?);
        }
        layers.push(Layer { terms });
    }
    if layers.is_empty() {
        return Err(CoreError::InvalidInput(
            "Fermi–Hubbard model with no edges and h_U = 0 is empty".into(),
        ));
    }
    LayeredHamiltonian::from_layers(layers, parity_operator(m))
}

/// Rescales H (and every layer term) so its spectral norm hits
/// `target_norm`; the returned `gamma` is the factor applied to the input
/// (composed with any previous rescale).
pub fn rescale_to_norm(mut lh: LayeredHamiltonian, target_norm: f64) -> Result<LayeredHamiltonian> {
    if !(target_norm > 0.0) {
        return Err(CoreError::InvalidInput(format!(
            "target spectral norm must be positive, got {target_norm}"
        )));
    }
    let vals = eigvalsh(&lh.h)?;
    let norm = vals.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if norm < 1e-300 {
        return Err(CoreError::InvalidInput(
            "cannot rescale the zero operator".into(),
        ));
    }
    let gamma = target_norm / norm;
    lh.h.mapv_inplace(|z| z * gamma);
    for layer in &mut lh.layers {
        for t in &mut layer.terms {
            t.scale *= gamma;
        }
    }
    lh.gamma *= gamma;
    Ok(lh)
}
