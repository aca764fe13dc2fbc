//! Artifact emission: CSV and JSON writers with fixed formatting so that a
//! run is reproducible bit for bit from its config and seed.
//!
//! Every float in CSV output is printed as 17-significant-digit scientific
//! notation (`{:.16e}`), which round-trips `f64` exactly; JSON numbers go
//! through serde_json's shortest-exact representation. The one deliberately
//! non-reproducible value — wall time — lives in its own sidecar
//! (`timing.json`) so the deterministic artifact set stays byte-comparable.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use num_complex::Complex64;
use serde::Serialize;

use crate::config::ExperimentConfig;
use tqs_core::quench::ChannelRecord;

/// Name of the provenance file; its presence marks a directory as owned by
/// a completed run.
pub const PROVENANCE_FILE: &str = "provenance.json";

/// Wall-time sidecar, excluded from the determinism guarantee.
pub const TIMING_FILE: &str = "timing.json";

/// A run directory accepting artifacts. Tracks emitted file names so the
/// provenance record can enumerate them.
pub struct ArtifactSet {
    dir: PathBuf,
    files: Vec<String>,
}

/// Oracle data accompanying a correlator CSV.
pub enum OracleColumns<'a> {
    /// No oracle columns (product-formula evolution).
    None,
    /// Independent reference series: emits `re_oracle`, `im_oracle`.
    Series(&'a [Complex64]),
    /// Reference series plus the pointwise deviation of the reconstruction:
    /// emits `re_oracle`, `im_oracle`, `oracle_deviation`.
    SeriesAndDeviation(&'a [Complex64]),
}

impl<'a> OracleColumns<'a> {
    fn reference(&self) -> Option<&'a [Complex64]> {
        match self {
            OracleColumns::None => None,
            OracleColumns::Series(r) | OracleColumns::SeriesAndDeviation(r) => Some(r),
        }
    }
}

impl ArtifactSet {
    /// Creates (or reuses) the directory. A directory already holding a
    /// provenance record is refused: one run owns one directory.
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating run directory {}", dir.display()))?;
        let marker = dir.join(PROVENANCE_FILE);
        if marker.exists() {
            bail!(
                "run directory {} already holds {PROVENANCE_FILE}; refusing to mix runs",
                dir.display()
            );
        }
        Ok(ArtifactSet {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Emitted file names, in emission order.
    pub fn files(&self) -> &[String] {
        &self.files
    }

    fn open(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let file = File::create(&path)
            .with_context(|| format!("creating artifact {}", path.display()))?;
        self.files.push(name.to_string());
        Ok(BufWriter::new(file))
    }

    /// Correlator CSV: `t,re_c,im_c`, one column of raw measurement values
    /// per quench channel, and oracle columns when supplied.
    pub fn write_correlator_csv(
        &mut self,
        name: &str,
        times: &[f64],
        values: &[Complex64],
        channels: &[ChannelRecord],
        oracle: OracleColumns<'_>,
    ) -> Result<()> {
        let mut w = self.open(name)?;
        let reference = oracle.reference();
        let with_deviation = matches!(oracle, OracleColumns::SeriesAndDeviation(_));
        let mut header = String::from("t,re_c,im_c");
        for ch in channels {
            header.push_str(",q_");
            header.push_str(&sanitize_label(&ch.label));
        }
        if let Some(reference) = reference {
            if reference.len() != times.len() {
                bail!(
                    "oracle series has {} points for {} times",
                    reference.len(),
                    times.len()
                );
            }
            header.push_str(",re_oracle,im_oracle");
            if with_deviation {
                header.push_str(",oracle_deviation");
            }
        }
        writeln!(w, "{header}")?;
        for (k, &t) in times.iter().enumerate() {
            write!(w, "{t:.16e},{:.16e},{:.16e}", values[k].re, values[k].im)?;
            for ch in channels {
                write!(w, ",{:.16e}", ch.values[k])?;
            }
            if let Some(reference) = reference {
                write!(w, ",{:.16e},{:.16e}", reference[k].re, reference[k].im)?;
                if with_deviation {
                    write!(w, ",{:.16e}", (values[k] - reference[k]).norm())?;
                }
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Frequency-scan curve: `omega,r`.
    pub fn write_rcurve_csv(&mut self, omegas: &[f64], r_values: &[f64]) -> Result<()> {
        let mut w = self.open("rcurve.csv")?;
        writeln!(w, "omega,r")?;
        for (&omega, &r) in omegas.iter().zip(r_values) {
            writeln!(w, "{omega:.16e},{r:.16e}")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Pretty-printed JSON artifact.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut w = self.open(name)?;
        serde_json::to_writer_pretty(&mut w, value)
            .with_context(|| format!("serializing {name}"))?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    /// Wall-time sidecar; intentionally kept out of the emitted-files list
    /// and of the determinism guarantee.
    pub fn write_timing(&self, wall_seconds: f64) -> Result<()> {
        let path = self.dir.join(TIMING_FILE);
        let mut w = BufWriter::new(
            File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        );
        serde_json::to_writer_pretty(&mut w, &serde_json::json!({ "wall_seconds": wall_seconds }))?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

/// Lowercases a channel label and collapses every non-alphanumeric run to a
/// single underscore, yielding a stable CSV column suffix.
pub fn sanitize_label(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    let mut gap = false;
    for ch in label.chars() {
        if ch.is_ascii_alphanumeric() {
            if gap && !out.is_empty() {
                out.push('_');
            }
            gap = false;
            out.push(ch.to_ascii_lowercase());
        } else {
            gap = true;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// JSON payloads
// ---------------------------------------------------------------------------

/// `minima.json`: the frequency-scan outcome.
#[derive(Debug, Serialize)]
pub struct MinimaReport {
    /// Scan grid size.
    pub grid_points: usize,
    /// Scan grid spacing (per-sample frequency units).
    pub grid_resolution: f64,
    /// Retained signal-space rank.
    pub retained_rank: usize,
    /// Absolute depth cut applied to reported minima, if any.
    pub r_cut: Option<f64>,
    /// Minima positions in per-sample frequency units, ascending.
    pub frequencies_per_sample: Vec<f64>,
    /// R value at each reported minimum.
    pub r_values: Vec<f64>,
    /// Minima mapped to physical frequencies (gaps), when the sample
    /// spacing is known.
    pub deltas: Option<Vec<f64>>,
    /// Leading singular values of the Hankel embedding (up to 64).
    pub singular_values_top: Vec<f64>,
    /// Total number of singular values behind the truncated list above.
    pub singular_value_count: usize,
}

/// One pole of `greens.json`.
#[derive(Debug, Serialize)]
pub struct PoleRow {
    pub delta: f64,
    pub re_weight: f64,
    pub im_weight: f64,
    pub abs_weight: f64,
}

/// `greens.json`: the assembled pole/weight form.
#[derive(Debug, Serialize)]
pub struct GreensReport {
    pub poles: Vec<PoleRow>,
    /// RMS misfit of the amplitude solve on the time grid.
    pub fit_residual: f64,
}

/// One row of the excitation-spectrum comparison table (`gaps.json`).
#[derive(Debug, Serialize)]
pub struct GapRow {
    /// Exact excitation gap E_n − E_g.
    pub gap: f64,
    /// Spectroscopic weight |⟨n|A|g⟩|².
    pub weight: f64,
    /// Nearest scan minimum in physical units, if any minimum was found.
    pub nearest_delta: Option<f64>,
    /// |gap − nearest_delta|.
    pub distance: Option<f64>,
    /// Whether the distance is within the window resolution 2π/t_max.
    pub within_resolution: Option<bool>,
}

/// `gaps.json`: exact-dynamics spectrum vs scan minima.
#[derive(Debug, Serialize)]
pub struct GapsReport {
    pub weight_threshold: f64,
    /// Window resolution 2π/t_max used for the match column.
    pub resolution: f64,
    pub gaps: Vec<GapRow>,
}

/// Parity traces echoed into provenance.
#[derive(Debug, Serialize)]
pub struct TracesReport {
    pub full: f64,
    pub symmetric: f64,
    pub asymmetric: f64,
}

/// Solved sector data echoed into provenance.
#[derive(Debug, Serialize)]
pub struct SectorReport {
    pub z_s: f64,
    pub z_a: f64,
    pub n_s: f64,
    pub n_a: f64,
    pub z: f64,
    pub dimension: usize,
    pub traces: TracesReport,
}

/// Channel weights: the conditioning record of the assembly.
#[derive(Debug, Serialize)]
pub struct ChannelWeightRow {
    pub label: String,
    pub re_weight: f64,
    pub im_weight: f64,
}

/// Tolerances and decision knobs echoed from the library.
#[derive(Debug, Serialize)]
pub struct ToleranceEcho {
    pub quench_reality: f64,
    pub parity_commutation: f64,
    pub frequency_merge: f64,
    pub design_rank: f64,
    pub pole_drop: f64,
    pub default_singular_threshold: f64,
    pub step_division: f64,
}

impl Default for ToleranceEcho {
    fn default() -> Self {
        ToleranceEcho {
            quench_reality: tqs_core::quench::QUENCH_REALITY_TOL,
            parity_commutation: tqs_core::quench::PARITY_COMMUTATION_TOL,
            frequency_merge: tqs_core::greens::FREQUENCY_MERGE_TOL,
            design_rank: tqs_core::greens::DESIGN_RANK_TOL,
            pole_drop: tqs_core::greens::DEFAULT_DROP_TOL,
            default_singular_threshold: tqs_core::music::DEFAULT_SINGULAR_THRESHOLD,
            step_division: crate::config::STEP_DIVISION_TOL,
        }
    }
}

/// `provenance.json`: everything needed to reproduce and audit the run,
/// wall time excluded.
#[derive(Debug, Serialize)]
pub struct Provenance<'a> {
    pub tool: &'static str,
    pub version_cli: &'static str,
    pub version_core: &'static str,
    pub config_hash: String,
    pub master_seed: u64,
    pub noise_seed: Option<u64>,
    pub shots: Option<u64>,
    pub tolerances: ToleranceEcho,
    pub channel_weights: Option<Vec<ChannelWeightRow>>,
    pub sector: Option<SectorReport>,
    pub artifacts: Vec<String>,
    pub config: &'a ExperimentConfig,
}
