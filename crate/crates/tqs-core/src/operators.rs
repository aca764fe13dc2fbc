//! Symbolic Pauli-string algebra, dense realization, Jordan–Wigner fermions
//! and parity operators.
//!
//! Conventions (global, used by every module):
//! * qubit basis ordered |0⟩, |1⟩ per site, Z = diag(1, −1);
//! * site 0 is the **leftmost** Kronecker factor, i.e. the most significant
//!   bit of a computational-basis index;
//! * σ⁻ = (X + iY)/2 = [[0,1],[0,0]] maps |1⟩ → |0⟩, so the number operator
//!   c†c is (I − Z)/2 densely.
//!
//! A Pauli word has exactly one nonzero entry per column, so its dense form
//! is built in O(d) and products with dense matrices cost O(d²) (row/column
//! permutation with phases) — no `zgemm` needed. The quench-channel and
//! Trotter machinery lean on this heavily.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{CoreError, Result};
use crate::linalg::{c, max_abs, CMat, CVec};

/// Single-site Pauli letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    fn from_char(ch: char) -> Option<Pauli> {
        match ch {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    /// Single-site product: returns (power of i, resulting letter) with
    /// `self · other = i^k · letter`.
    fn mul(self, other: Pauli) -> (u8, Pauli) {
        use Pauli::*;
        match (self, other) {
            (I, p) => (0, p),
            (p, I) => (0, p),
            (X, X) | (Y, Y) | (Z, Z) => (0, I),
            (X, Y) => (1, Z),
            (Y, X) => (3, Z),
            (Y, Z) => (1, X),
            (Z, Y) => (3, X),
            (Z, X) => (1, Y),
            (X, Z) => (3, Y),
        }
    }
}

/// A phased Pauli word: `i^phase_pow · letters[0] ⊗ letters[1] ⊗ …`.
///
/// The phase is restricted to fourth roots of unity, which the product of
/// two Pauli words never leaves (closure).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PauliString {
    /// Power k of the global phase i^k, stored mod 4.
    phase_pow: u8,
    letters: Vec<Pauli>,
}

/// Dense complex matrix realization of an operator.
pub type DenseOperator = CMat;

impl PauliString {
    /// Word with phase +1.
    pub fn new(letters: Vec<Pauli>) -> Self {
        assert!(!letters.is_empty(), "PauliString needs at least one site");
        PauliString {
            phase_pow: 0,
            letters,
        }
    }

    /// All-identity word on `n_sites`.
    pub fn identity(n_sites: usize) -> Self {
        Self::new(vec![Pauli::I; n_sites])
    }

    /// Word with `letter` at `site`, identity elsewhere.
    pub fn single(n_sites: usize, site: usize, letter: Pauli) -> Self {
        assert!(site < n_sites, "site {site} out of range (n = {n_sites})");
        let mut letters = vec![Pauli::I; n_sites];
        letters[site] = letter;
        Self::new(letters)
    }

    /// Same word with global phase i^k (k taken mod 4).
    pub fn with_phase_pow(mut self, k: u8) -> Self {
        self.phase_pow = k % 4;
        self
    }

    pub fn n_sites(&self) -> usize {
        self.letters.len()
    }

    /// Hilbert-space dimension 2^n_sites.
    pub fn dim(&self) -> usize {
        1usize << self.letters.len()
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.letters
    }

    /// Global phase as a complex number (a fourth root of unity).
    pub fn phase(&self) -> Complex64 {
        match self.phase_pow % 4 {
            0 => c(1.0, 0.0),
            1 => c(0.0, 1.0),
            2 => c(-1.0, 0.0),
            _ => c(0.0, -1.0),
        }
    }

    /// True when the dense form is Hermitian, i.e. the phase is ±1 (every
    /// unphased Pauli word is Hermitian).
    pub fn is_hermitian(&self) -> bool {
        self.phase_pow % 2 == 0
    }

    /// Number of non-identity letters.
    pub fn weight(&self) -> usize {
        self.letters.iter().filter(|&&p| p != Pauli::I).count()
    }

    /// Product of two words — again a PauliString (closure).
    pub fn mul(&self, other: &PauliString) -> Result<PauliString> {
        if self.n_sites() != other.n_sites() {
            return Err(CoreError::DimensionMismatch(format!(
                "Pauli product on {} vs {} sites",
                self.n_sites(),
                other.n_sites()
            )));
        }
        let mut phase_pow = (self.phase_pow + other.phase_pow) % 4;
        let mut letters = Vec::with_capacity(self.n_sites());
        for (&a, &b) in self.letters.iter().zip(&other.letters) {
            let (k, l) = a.mul(b);
            phase_pow = (phase_pow + k) % 4;
            letters.push(l);
        }
        Ok(PauliString { phase_pow, letters })
    }

    /// Symbolic commutation test: two Pauli words commute iff the number of
    /// sites where both letters are non-identity and different is even.
    pub fn commutes_with(&self, other: &PauliString) -> bool {
        let clashes = self
            .letters
            .iter()
            .zip(&other.letters)
            .filter(|(&a, &b)| a != Pauli::I && b != Pauli::I && a != b)
            .count();
        clashes % 2 == 0
    }

    /// Bit position (from the least significant end) carrying `site`.
    #[inline]
    fn bit_of_site(&self, site: usize) -> usize {
        self.letters.len() - 1 - site
    }

    /// Column structure of the dense form: for basis column `col` the single
    /// nonzero sits at `row = col ^ flip_mask` with value `entry(col)`.
    fn flip_mask(&self) -> usize {
        let mut mask = 0usize;
        for (site, &l) in self.letters.iter().enumerate() {
            if matches!(l, Pauli::X | Pauli::Y) {
                mask |= 1 << self.bit_of_site(site);
            }
        }
        mask
    }

    /// Value of the single nonzero entry in column `col`.
    #[inline]
    fn column_value(&self, col: usize) -> Complex64 {
        let mut val = self.phase();
        for (site, &l) in self.letters.iter().enumerate() {
            let bit = (col >> self.bit_of_site(site)) & 1;
            match l {
                Pauli::I | Pauli::X => {}
                Pauli::Y => {
                    // Y|0⟩ = i|1⟩, Y|1⟩ = −i|0⟩
                    val *= if bit == 0 { c(0.0, 1.0) } else { c(0.0, -1.0) };
                }
                Pauli::Z => {
                    if bit == 1 {
                        val = -val;
                    }
                }
            }
        }
        val
    }

    /// Dense d×d realization, built in O(d) from the one-nonzero-per-column
    /// structure (equals the Kronecker product of single-site matrices times
    /// the phase; the equality is pinned by tests against a naive kron).
    pub fn dense(&self) -> DenseOperator {
        let d = self.dim();
        let flips = self.flip_mask();
        let mut m = CMat::zeros((d, d));
        for col in 0..d {
            m[[col ^ flips, col]] = self.column_value(col);
        }
        m
    }

    /// Accumulates `coeff ·` (this word, dense) into `acc` in O(d).
    pub fn add_scaled_to(&self, acc: &mut CMat, coeff: Complex64) {
        let d = self.dim();
        assert_eq!(acc.dim(), (d, d), "accumulator dimension mismatch");
        let flips = self.flip_mask();
        for col in 0..d {
            acc[[col ^ flips, col]] += coeff * self.column_value(col);
        }
    }

    /// `self · v` for a dense vector in O(d).
    pub fn apply_vec(&self, v: &CVec) -> CVec {
        let d = self.dim();
        assert_eq!(v.len(), d, "vector dimension mismatch");
        let flips = self.flip_mask();
        let mut out = CVec::zeros(d);
        for col in 0..d {
            out[col ^ flips] = self.column_value(col) * v[col];
        }
        out
    }

    /// `self · m` (dense left multiplication) in O(d²): row `col` of `m`
    /// lands, scaled, on row `col ^ flips` of the output.
    pub fn mul_left(&self, m: &CMat) -> CMat {
        let d = self.dim();
        assert_eq!(m.nrows(), d, "matrix dimension mismatch");
        let flips = self.flip_mask();
        let mut out = CMat::zeros(m.dim());
        for col in 0..d {
            let val = self.column_value(col);
            let src = m.row(col);
            let mut dst = out.row_mut(col ^ flips);
            dst.iter_mut().zip(src.iter()).for_each(|(o, &s)| *o = val * s);
        }
        out
    }

    /// `m · self` (dense right multiplication) in O(d²): output column `j`
    /// is column `j ^ flips` of `m` scaled by the entry value of column `j`.
    pub fn mul_right(&self, m: &CMat) -> CMat {
        let d = self.dim();
        assert_eq!(m.ncols(), d, "matrix dimension mismatch");
        let flips = self.flip_mask();
        let mut out = CMat::zeros(m.dim());
        for j in 0..d {
            let val = self.column_value(j);
            let src = m.column(j ^ flips);
            let mut dst = out.column_mut(j);
            dst.iter_mut().zip(src.iter()).for_each(|(o, &s)| *o = val * s);
        }
        out
    }

    /// True when every letter is I or Z (dense form diagonal).
    pub fn is_diagonal(&self) -> bool {
        self.letters
            .iter()
            .all(|&l| matches!(l, Pauli::I | Pauli::Z))
    }

    /// Diagonal of the dense form (only meaningful when `is_diagonal`).
    pub fn diagonal(&self) -> CVec {
        debug_assert!(self.is_diagonal());
        let d = self.dim();
        CVec::from_iter((0..d).map(|col| self.column_value(col)))
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.phase_pow % 4 {
            0 => "",
            1 => "i",
            2 => "-",
            _ => "-i",
        };
        write!(f, "{prefix}")?;
        for l in &self.letters {
            write!(f, "{}", l.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = CoreError;

    /// Parses the text format used in config files: optional phase prefix
    /// "+", "-", "i", "-i" followed by letters over {I, X, Y, Z},
    /// e.g. "ZZXI", "-iXY".
    fn from_str(s: &str) -> Result<PauliString> {
        let s = s.trim();
        let (phase_pow, rest) = if let Some(r) = s.strip_prefix("-i") {
            (3u8, r)
        } else if let Some(r) = s.strip_prefix("+i").or_else(|| s.strip_prefix('i')) {
            (1u8, r)
        } else if let Some(r) = s.strip_prefix('-') {
            (2u8, r)
        } else if let Some(r) = s.strip_prefix('+') {
            (0u8, r)
        } else {
            (0u8, s)
        };
        if rest.is_empty() {
            return Err(CoreError::Parse(format!("empty Pauli word in {s:?}")));
        }
        let letters = rest
            .chars()
            .map(|ch| {
                Pauli::from_char(ch)
                    .ok_or_else(|| CoreError::Parse(format!("invalid Pauli letter {ch:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PauliString { phase_pow, letters })
    }
}

/// A Hermitian, involutory Pauli word together with a real prefactor.
///
/// Quench operators require observables with A² = I; physical observables
/// like (c₀ + c₀†)/2 carry a scale (here ½) that is stripped before
/// quenching and re-applied to the reconstructed correlator (linearity).
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledObservable {
    pub scale: f64,
    pub pauli: PauliString,
}

impl ScaledObservable {
    /// Requires a Hermitian word (phase ±1); such words square to identity.
    pub fn new(scale: f64, pauli: PauliString) -> Result<Self> {
        if !pauli.is_hermitian() {
            return Err(CoreError::InvalidInput(format!(
                "observable word {pauli} has non-real phase; not Hermitian"
            )));
        }
        Ok(ScaledObservable { scale, pauli })
    }

    /// Unit-scale observable from a word.
    pub fn unit(pauli: PauliString) -> Result<Self> {
        Self::new(1.0, pauli)
    }

    /// Dense form including the scale.
    pub fn dense(&self) -> DenseOperator {
        let mut m = self.pauli.dense();
        m.mapv_inplace(|z| z * self.scale);
        m
    }

    pub fn n_sites(&self) -> usize {
        self.pauli.n_sites()
    }
}

/// Dense realization of a Pauli word (free-function form of
/// [`PauliString::dense`]).
pub fn pauli_to_dense(p: &PauliString) -> DenseOperator {
    p.dense()
}

/// The parity word P = ∏_j Z_j: Hermitian, traceless (n ≥ 1), involutory,
/// diagonal, and anticommuting with every Jordan–Wigner Majorana part.
pub fn parity_operator(n_sites: usize) -> PauliString {
    assert!(n_sites >= 1);
    PauliString::new(vec![Pauli::Z; n_sites])
}

/// Jordan–Wigner annihilation operator c_j = (∏_{k<j} Z_k) σ⁻_j densely.
pub fn jw_annihilation(j: usize, n_modes: usize) -> Result<DenseOperator> {
    let (a, b) = majorana_parts(j, n_modes)?;
    // c = (A + iB)/2 with unit-scale words A, B.
    let mut m = a.pauli.dense();
    let bm = b.pauli.dense();
    m.zip_mut_with(&bm, |x, y| *x = (*x + c(0.0, 1.0) * y) * 0.5);
    Ok(m)
}

/// Majorana parts of mode j: c_j = ½(A_j + i B_j) with
/// A_j = Z…Z X_j and B_j = Z…Z Y_j (Z string over modes k < j).
/// Both are unit-norm Hermitian words, carry scale ½, anticommute with each
/// other and with the parity word.
pub fn majorana_parts(j: usize, n_modes: usize) -> Result<(ScaledObservable, ScaledObservable)> {
    if j >= n_modes {
        return Err(CoreError::InvalidInput(format!(
            "mode index {j} out of range (n_modes = {n_modes})"
        )));
    }
    let mut letters_a = vec![Pauli::I; n_modes];
    let mut letters_b = vec![Pauli::I; n_modes];
    for k in 0..j {
        letters_a[k] = Pauli::Z;
        letters_b[k] = Pauli::Z;
    }
    letters_a[j] = Pauli::X;
    letters_b[j] = Pauli::Y;
    Ok((
        ScaledObservable::new(0.5, PauliString::new(letters_a))?,
        ScaledObservable::new(0.5, PauliString::new(letters_b))?,
    ))
}

/// ‖ab − ba‖_max ≤ tol.
pub fn commutes(a: &DenseOperator, b: &DenseOperator, tol: f64) -> Result<bool> {
    let (ab, ba) = both_products(a, b)?;
    let mut diff = ab;
    diff.zip_mut_with(&ba, |x, y| *x -= y);
    Ok(max_abs(&diff) <= tol)
}

/// ‖ab + ba‖_max ≤ tol.
pub fn anticommutes(a: &DenseOperator, b: &DenseOperator, tol: f64) -> Result<bool> {
    let (ab, ba) = both_products(a, b)?;
    let mut sum = ab;
    sum.zip_mut_with(&ba, |x, y| *x += y);
    Ok(max_abs(&sum) <= tol)
}

fn both_products(a: &DenseOperator, b: &DenseOperator) -> Result<(CMat, CMat)> {
    if a.dim() != b.dim() || a.nrows() != a.ncols() {
        return Err(CoreError::DimensionMismatch(format!(
            "commutator of {:?} and {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok((a.dot(b), b.dot(a)))
}
