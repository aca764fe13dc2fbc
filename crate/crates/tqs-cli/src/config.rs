//! Experiment configuration: the JSON schema, validation of every invariant
//! the runners rely on, and the canonical serialized form that seeds the
//! provenance hash.
//!
//! The full schema is documented field by field in the repository README;
//! every struct here mirrors one block of it.

use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Relative slack when checking that the Trotter step divides the
/// evaluation step: `dt / dt_trotter` must be an integer to this accuracy.
pub const STEP_DIVISION_TOL: f64 = 1e-9;

/// Time-window guidance constant: with a user-declared energy-gap lower
/// bound ΔE, windows shorter than `c/ΔE` (c = 2π·5) draw a warning because
/// the frequency scan cannot then separate gaps ΔE apart.
pub const T_MAX_GUIDANCE_FACTOR: f64 = std::f64::consts::TAU * 5.0;

// ---------------------------------------------------------------------------
// Schema blocks
// ---------------------------------------------------------------------------

/// Which Hamiltonian family to build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// XXZ spin chain with transverse field h (Pauli convention).
    Xxz {
        j_x: f64,
        j_z: f64,
        h: f64,
        n_sites: usize,
        #[serde(default)]
        periodic: bool,
    },
    /// Fermi–Hubbard lattice (lx × ly sites, spinful, Jordan–Wigner mapped).
    FermiHubbard {
        lx: usize,
        ly: usize,
        h_u: f64,
        #[serde(default)]
        periodic: bool,
    },
}

/// The experiment driven by the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    ThermalGreen,
    GroundGreen,
    Otoc,
    MusicOnly,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::ThermalGreen => "thermal_green",
            Protocol::GroundGreen => "ground_green",
            Protocol::Otoc => "otoc",
            Protocol::MusicOnly => "music_only",
        }
    }
}

/// Which Hermitian part of an annihilation operator a Majorana observable
/// takes: `Re` is (c + c†)/2, `Im` is (c − c†)/(2i).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MajoranaPart {
    Re,
    Im,
}

/// One observable of the correlator. Pauli text and Majorana parts describe
/// Hermitian involutions (up to the recorded scale); the annihilation /
/// creation pair selects the fermionic decomposition protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservableSpec {
    /// A Pauli word such as `"XIIIIIII"`, optionally scaled by a real factor.
    Pauli {
        word: String,
        #[serde(default = "default_scale")]
        scale: f64,
    },
    /// (c_j + c_j†)/2 (`re`) or (c_j − c_j†)/(2i) (`im`) on a fermionic
    /// model's mode j.
    Majorana { mode: usize, part: MajoranaPart },
    /// The annihilation operator c_j; pairs with a `creation` partner.
    Annihilation { mode: usize },
    /// The creation operator c_j'†; pairs with an `annihilation` partner.
    Creation { mode: usize },
}

fn default_scale() -> f64 {
    1.0
}

/// Uniform evaluation grid t_k = k·dt for k = 0…⌊t_max/dt⌋.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGridSpec {
    pub t_max: f64,
    pub dt: f64,
}

impl TimeGridSpec {
    /// Materializes the grid, t = 0 included.
    pub fn times(&self) -> Vec<f64> {
        let n = (self.t_max / self.dt + STEP_DIVISION_TOL).floor() as usize;
        (0..=n).map(|k| k as f64 * self.dt).collect()
    }
}

/// How B(t) is propagated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EvolutionSpec {
    Exact,
    Trotter1 { dt_trotter: f64 },
    Trotter2 { dt_trotter: f64 },
}

impl EvolutionSpec {
    pub fn is_exact(&self) -> bool {
        matches!(self, EvolutionSpec::Exact)
    }

    /// (step, order) for the product-formula modes.
    pub fn trotter(&self) -> Option<(f64, u8)> {
        match *self {
            EvolutionSpec::Exact => None,
            EvolutionSpec::Trotter1 { dt_trotter } => Some((dt_trotter, 1)),
            EvolutionSpec::Trotter2 { dt_trotter } => Some((dt_trotter, 2)),
        }
    }
}

/// State-preparation noise: ρ → (ρ + ε ϱ)/(1 + ε) with a seeded random
/// density matrix ϱ. A missing seed falls back to the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub epsilon: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Signal/noise subspace split rule: `{"threshold": 1.0}` keeps every
/// singular value above the threshold, `{"explicit": 5}` forces the rank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RankRuleSpec {
    Threshold(f64),
    Explicit(usize),
}

impl Default for RankRuleSpec {
    fn default() -> Self {
        RankRuleSpec::Threshold(tqs_core::music::DEFAULT_SINGULAR_THRESHOLD)
    }
}

impl From<RankRuleSpec> for tqs_core::music::RankRule {
    fn from(spec: RankRuleSpec) -> Self {
        match spec {
            RankRuleSpec::Threshold(t) => tqs_core::music::RankRule::Threshold(t),
            RankRuleSpec::Explicit(chi) => tqs_core::music::RankRule::Explicit(chi),
        }
    }
}

/// Frequency-scan stage configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MusicConfig {
    /// Number of scan grid points.
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    /// Scan window [lo, hi] ⊂ [−π, π] in per-sample frequency units;
    /// defaults to the full alias-free band.
    #[serde(default)]
    pub window: Option<[f64; 2]>,
    /// Signal/noise subspace split.
    #[serde(default)]
    pub rank: RankRuleSpec,
    /// Parabolic refinement of single-point minima.
    #[serde(default = "default_true")]
    pub refine: bool,
    /// Depth cut for reported minima as a fraction of the median R
    /// (`null` reports every interior minimum).
    #[serde(default = "default_r_cut")]
    pub r_cut_fraction: Option<f64>,
}

fn default_grid_points() -> usize {
    tqs_core::music::DEFAULT_GRID_POINTS
}

fn default_true() -> bool {
    true
}

fn default_r_cut() -> Option<f64> {
    Some(0.5)
}

impl Default for MusicConfig {
    fn default() -> Self {
        MusicConfig {
            grid_points: default_grid_points(),
            window: None,
            rank: RankRuleSpec::default(),
            refine: true,
            r_cut_fraction: default_r_cut(),
        }
    }
}

/// Ground-sector directive for degenerate ground states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundSector {
    Even,
    Odd,
}

// ---------------------------------------------------------------------------
// Top-level config
// ---------------------------------------------------------------------------

/// One experiment, fully specified. Together with the master seed this
/// determines every emitted artifact bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub observable_a: Option<ObservableSpec>,
    #[serde(default)]
    pub observable_b: Option<ObservableSpec>,
    #[serde(default)]
    pub time_grid: Option<TimeGridSpec>,
    #[serde(default = "default_evolution")]
    pub evolution: EvolutionSpec,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub shots: Option<u64>,
    #[serde(default)]
    pub music: MusicConfig,
    /// Master seed: shot streams use it directly; state-preparation noise
    /// uses it when `noise.seed` is absent.
    #[serde(default)]
    pub seed: u64,
    /// Declared lower bound on the energy gaps of interest; only used to
    /// warn when the time window is too short to resolve them.
    #[serde(default)]
    pub delta_e: Option<f64>,
    /// Ground-sector directive for `ground_green` on a degenerate ground
    /// state.
    #[serde(default)]
    pub ground_sector: Option<GroundSector>,
    /// Input signal CSV for `music_only`.
    #[serde(default)]
    pub signal_file: Option<PathBuf>,
    /// Default artifact directory; the `--out` flag overrides it.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_evolution() -> EvolutionSpec {
    EvolutionSpec::Exact
}

/// Coarse classification used by the pairing rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservableClass {
    /// Pauli word or Majorana part: a Hermitian involution up to scale.
    Word,
    Annihilation,
    Creation,
}

impl ObservableSpec {
    pub fn class(&self) -> ObservableClass {
        match self {
            ObservableSpec::Pauli { .. } | ObservableSpec::Majorana { .. } => {
                ObservableClass::Word
            }
            ObservableSpec::Annihilation { .. } => ObservableClass::Annihilation,
            ObservableSpec::Creation { .. } => ObservableClass::Creation,
        }
    }
}

impl ExperimentConfig {
    /// Parses and structurally checks a config file (invariants included).
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).context("parsing config JSON")?;
        Ok(cfg)
    }

    /// Canonical serialized form: the parsed, override-applied struct in
    /// fixed field order. Both the provenance echo and the config hash are
    /// derived from this.
    pub fn canonical_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).context("serializing config")
    }

    /// SHA-256 of the canonical form, hex-encoded.
    pub fn hash(&self) -> Result<String> {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_json()?.as_bytes());
        Ok(format!("{:x}", hasher.finalize()))
    }

    /// Resolved seed for state-preparation noise.
    pub fn noise_seed(&self) -> Option<u64> {
        self.noise.map(|n| n.seed.unwrap_or(self.seed))
    }

    /// Enforces every cross-field invariant. `expected` is the protocol the
    /// invoked subcommand implements; a conflicting `protocol` field is the
    /// most common way to run the wrong file.
    pub fn validate(&self, expected: Protocol) -> Result<()> {
        ensure!(
            self.protocol == expected,
            "config declares protocol '{}' but the subcommand runs '{}'",
            self.protocol.name(),
            expected.name()
        );

        if let Some(tg) = &self.time_grid {
            ensure!(
                tg.t_max > 0.0 && tg.t_max.is_finite(),
                "t_max must be positive and finite, got {}",
                tg.t_max
            );
            ensure!(
                tg.dt > 0.0 && tg.dt.is_finite(),
                "dt must be positive and finite, got {}",
                tg.dt
            );
            ensure!(
                tg.dt <= tg.t_max,
                "dt = {} exceeds t_max = {}: the grid would hold a single point",
                tg.dt,
                tg.t_max
            );
        }

        if let Some((dt_trotter, _)) = self.evolution.trotter() {
            ensure!(
                dt_trotter > 0.0 && dt_trotter.is_finite(),
                "dt_trotter must be positive and finite, got {dt_trotter}"
            );
            let tg = self
                .time_grid
                .as_ref()
                .context("product-formula evolution requires a time grid")?;
            let ratio = tg.dt / dt_trotter;
            let m = ratio.round();
            ensure!(
                m >= 1.0 && (ratio - m).abs() <= STEP_DIVISION_TOL * ratio.max(1.0),
                "dt_trotter = {dt_trotter} must divide the evaluation step dt = {} \
                 (got ratio {ratio}); every evaluation time must be an integer \
                 number of product-formula steps",
                tg.dt
            );
        }

        if let Some(n) = &self.noise {
            ensure!(
                (0.0..=1.0).contains(&n.epsilon) && n.epsilon.is_finite(),
                "noise epsilon must lie in [0, 1], got {}",
                n.epsilon
            );
        }
        if let Some(shots) = self.shots {
            ensure!(shots > 0, "shots must be positive when given");
        }
        if let Some(beta) = self.beta {
            ensure!(
                beta >= 0.0 && beta.is_finite(),
                "beta must be nonnegative and finite, got {beta}"
            );
        }
        if let Some(de) = self.delta_e {
            ensure!(
                de > 0.0 && de.is_finite(),
                "delta_e must be positive and finite, got {de}"
            );
        }

        ensure!(
            self.music.grid_points >= 3,
            "music.grid_points must be at least 3, got {}",
            self.music.grid_points
        );
        if let Some([lo, hi]) = self.music.window {
            ensure!(
                lo < hi && lo >= -std::f64::consts::PI - 1e-12 && hi <= std::f64::consts::PI + 1e-12,
                "music.window [{lo}, {hi}] must be an increasing interval within [-pi, pi]"
            );
        }
        if let Some(frac) = self.music.r_cut_fraction {
            ensure!(
                frac > 0.0 && frac.is_finite(),
                "music.r_cut_fraction must be positive when given, got {frac}"
            );
        }
        if let RankRuleSpec::Threshold(t) = self.music.rank {
            ensure!(
                t >= 0.0 && t.is_finite(),
                "music.rank threshold must be nonnegative and finite, got {t}"
            );
        }

        match self.protocol {
            Protocol::MusicOnly => {
                ensure!(
                    self.signal_file.is_some(),
                    "music_only requires signal_file (or the --signal flag)"
                );
            }
            proto => {
                ensure!(
                    self.model.is_some(),
                    "{} requires a model block",
                    proto.name()
                );
                ensure!(
                    self.time_grid.is_some(),
                    "{} requires a time grid",
                    proto.name()
                );
                let a = self
                    .observable_a
                    .as_ref()
                    .with_context(|| format!("{} requires observable_a", proto.name()))?;
                let b = self
                    .observable_b
                    .as_ref()
                    .with_context(|| format!("{} requires observable_b", proto.name()))?;
                self.check_observable_pair(proto, a, b)?;
                if proto == Protocol::ThermalGreen {
                    ensure!(
                        self.beta.is_some(),
                        "thermal_green requires beta (use 0 for infinite temperature)"
                    );
                }
            }
        }
        Ok(())
    }

    fn check_observable_pair(
        &self,
        proto: Protocol,
        a: &ObservableSpec,
        b: &ObservableSpec,
    ) -> Result<()> {
        use ObservableClass::*;
        let fermionic_model = matches!(self.model, Some(ModelSpec::FermiHubbard { .. }));
        for (name, spec) in [("observable_a", a), ("observable_b", b)] {
            if matches!(
                spec,
                ObservableSpec::Majorana { .. }
                    | ObservableSpec::Annihilation { .. }
                    | ObservableSpec::Creation { .. }
            ) {
                ensure!(
                    fermionic_model,
                    "{name} addresses a fermionic mode but the model is not a \
                     Fermi-Hubbard lattice"
                );
            }
            if let ObservableSpec::Pauli { scale, .. } = spec {
                ensure!(
                    scale.is_finite() && *scale != 0.0,
                    "{name} has a zero or non-finite scale"
                );
            }
        }
        match (a.class(), b.class()) {
            (Word, Word) => {
                if proto == Protocol::Otoc {
                    for (name, spec) in [("observable_a", a), ("observable_b", b)] {
                        match spec {
                            ObservableSpec::Pauli { scale, .. } if *scale == 1.0 => {}
                            _ => bail!(
                                "{name}: the scrambling protocol takes plain \
                                 (unscaled) Pauli words"
                            ),
                        }
                    }
                }
                Ok(())
            }
            (Annihilation, Creation) => {
                ensure!(
                    proto != Protocol::Otoc,
                    "the scrambling protocol takes Pauli words, not fermionic modes"
                );
                Ok(())
            }
            (ac, bc) => bail!(
                "unsupported observable pairing {ac:?}/{bc:?}: use two Hermitian \
                 words, or annihilation (A) with creation (B)"
            ),
        }
    }
}
