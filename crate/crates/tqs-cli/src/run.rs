//! Experiment orchestration: model construction, dynamics selection, the
//! reconstruction protocols, frequency analysis, and artifact emission.
//!
//! Every stage failure is tagged (`[model]`, `[eigensystem]`, `[evolution]`,
//! `[channels]`, `[oracle]`, `[music]`, `[greens]`, `[artifacts]`, `[io]`)
//! so the process exit message names where a run died.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, ensure, Context, Result};
use num_complex::Complex64;

use crate::artifacts::{
    ArtifactSet, ChannelWeightRow, GapRow, GapsReport, GreensReport, MinimaReport, OracleColumns,
    PoleRow, Provenance, SectorReport, ToleranceEcho, TracesReport, PROVENANCE_FILE,
};
use crate::config::{
    ExperimentConfig, GroundSector, MajoranaPart, ModelSpec, ObservableSpec, Protocol,
    T_MAX_GUIDANCE_FACTOR,
};

use tqs_core::evolution::{
    effective_eigensystem, exact_step, expectation_series, trotter_step, EffectiveEigenSystem,
};
use tqs_core::greens::{frequency_to_delta, greens_from_series};
use tqs_core::linalg::{dagger, trace_prod, CMat};
use tqs_core::models::{build_fermi_hubbard, build_xxz, FHParams, LayeredHamiltonian, XXZParams};
use tqs_core::music::{
    find_minima, omega_grid, run_music, FrequencyEstimates, MusicAnalysis, Signal,
};
use tqs_core::operators::{jw_annihilation, majorana_parts, PauliString, ScaledObservable};
use tqs_core::quench::{
    eigenstate_correlator, fermionic_correlator, otoc, thermal_correlator, CorrelatorSeries,
    NoiseSpec, ShotConfig, StatePrep,
};
use tqs_core::states::{eigendecompose_with_parity, thermal_state, EigenSystem};

/// Spectroscopic weight below which an excitation gap is left out of the
/// comparison table.
pub const GAP_WEIGHT_THRESHOLD: f64 = 0.01;

/// What a completed run leaves behind.
#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub artifacts: Vec<String>,
}

// ---------------------------------------------------------------------------
// Shared stages
// ---------------------------------------------------------------------------

/// A built model: layered Hamiltonian, parity word, and the parity-resolved
/// eigensystem.
struct Workspace {
    lh: LayeredHamiltonian,
    p: PauliString,
    p_dense: CMat,
    es: EigenSystem,
}

fn build_workspace(cfg: &ExperimentConfig) -> Result<Workspace> {
    let spec = cfg
        .model
        .as_ref()
        .ok_or_else(|| anyhow!("[model] missing model block"))?;
    let lh = match *spec {
        ModelSpec::Xxz {
            j_x,
            j_z,
            h,
            n_sites,
            periodic,
        } => build_xxz(XXZParams {
            j_x,
            j_z,
            h,
            n_sites,
            periodic,
        }),
        ModelSpec::FermiHubbard {
            lx,
            ly,
            h_u,
            periodic,
        } => build_fermi_hubbard(FHParams {
            lx,
            ly,
            h_u,
            periodic,
        }),
    }
    .context("[model] building the Hamiltonian")?;
    let p = lh.parity.clone();
    let p_dense = tqs_core::operators::pauli_to_dense(&p);
    let es = eigendecompose_with_parity(&lh.h, &p_dense, None)
        .context("[eigensystem] parity-resolved diagonalization")?;
    Ok(Workspace { lh, p, p_dense, es })
}

/// Builds the product-formula effective spectrum when requested.
fn build_effective(
    cfg: &ExperimentConfig,
    ws: &Workspace,
) -> Result<Option<EffectiveEigenSystem>> {
    match cfg.evolution.trotter() {
        None => Ok(None),
        Some((dt_trotter, order)) => {
            let u = trotter_step(&ws.lh, dt_trotter, order)
                .context("[evolution] building the product-formula step")?;
            let eff = effective_eigensystem(&u, &ws.p_dense, dt_trotter)
                .context("[evolution] diagonalizing the step operator")?;
            Ok(Some(eff))
        }
    }
}

/// Resolves a Hermitian-word observable spec against the model size.
fn word_observable(
    spec: &ObservableSpec,
    n_sites: usize,
    name: &str,
) -> Result<ScaledObservable> {
    match spec {
        ObservableSpec::Pauli { word, scale } => {
            let w: PauliString = word
                .parse()
                .map_err(|e| anyhow!("[model] {name}: {e}"))?;
            ensure!(
                w.n_sites() == n_sites,
                "[model] {name} addresses {} sites but the model has {n_sites}",
                w.n_sites()
            );
            ScaledObservable::new(*scale, w).map_err(|e| anyhow!("[model] {name}: {e}"))
        }
        ObservableSpec::Majorana { mode, part } => {
            let (re, im) =
                majorana_parts(*mode, n_sites).map_err(|e| anyhow!("[model] {name}: {e}"))?;
            Ok(match part {
                MajoranaPart::Re => re,
                MajoranaPart::Im => im,
            })
        }
        _ => bail!("[model] {name}: ladder operators belong to the fermionic route"),
    }
}

fn noise_spec(cfg: &ExperimentConfig) -> Option<NoiseSpec> {
    cfg.noise.map(|n| NoiseSpec {
        epsilon: n.epsilon,
        seed: n.seed.unwrap_or(cfg.seed),
    })
}

/// Replaces exact channel expectations by finite-shot estimates when
/// configured. Parity traces and sector solving are left exact: shot
/// emulation models the time-series measurements.
fn apply_shots(series: CorrelatorSeries, cfg: &ExperimentConfig) -> Result<CorrelatorSeries> {
    match cfg.shots {
        None => Ok(series),
        Some(shots) => {
            let shot_cfg = ShotConfig::sampled(shots, cfg.seed)
                .map_err(|e| anyhow!("[channels] {e}"))?;
            series
                .with_shot_noise(&shot_cfg)
                .map_err(|e| anyhow!("[channels] shot emulation: {e}"))
        }
    }
}

/// Warns when the configured window cannot resolve the declared gap scale,
/// and when the sample spacing aliases the exact spectrum.
fn window_guidance(cfg: &ExperimentConfig, es: Option<&EigenSystem>) {
    let Some(tg) = &cfg.time_grid else { return };
    if let Some(de) = cfg.delta_e {
        let needed = T_MAX_GUIDANCE_FACTOR / de;
        if tg.t_max < needed {
            log::warn!(
                "t_max = {:.3} is below the guidance 2*pi*5/delta_e = {needed:.3}; \
                 gaps {de} apart may not be separated",
                tg.t_max
            );
        }
    }
    if let (Some(es), false) = (es, cfg.evolution.trotter().is_some()) {
        let e_min = es.energies.first().copied().unwrap_or(0.0);
        let e_max = es.energies.last().copied().unwrap_or(0.0);
        let span = e_max - e_min;
        if span * tg.dt > PI {
            log::warn!(
                "dt = {} exceeds the alias-free spacing pi/(E_max - E_min) = {:.4}; \
                 fast poles will fold into the scan window",
                tg.dt,
                PI / span
            );
        }
    }
}

// ---------------------------------------------------------------------------
// Frequency analysis
// ---------------------------------------------------------------------------

struct MusicStage {
    analysis: MusicAnalysis,
    estimates: FrequencyEstimates,
    r_cut: Option<f64>,
}

/// The scan signal of a correlator series: the Hankel model indexes samples
/// s_1…s_2N at t = n·dt, so the t = 0 point is dropped and the tail trimmed
/// to even length.
fn series_signal(series: &CorrelatorSeries) -> Result<Signal> {
    ensure!(
        series.values.len() >= 5,
        "time grid too short for the frequency scan ({} points; need at least 5)",
        series.values.len()
    );
    let tail = &series.values[1..];
    let even = tail.len() & !1usize;
    Signal::new(tail[..even].to_vec()).map_err(anyhow::Error::from)
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn music_stage(sig: &Signal, cfg: &ExperimentConfig) -> Result<MusicStage> {
    let mc = &cfg.music;
    let window = mc.window.unwrap_or([-PI, PI]);
    let omegas = omega_grid(window[0], window[1], mc.grid_points)?;
    let analysis = run_music(sig, mc.rank.into(), &omegas, mc.refine, None)?;
    let (estimates, r_cut) = match mc.r_cut_fraction {
        None => (analysis.estimates.clone(), None),
        Some(frac) => {
            let cut = frac * median(&analysis.r_values);
            let kept = find_minima(&analysis.omegas, &analysis.r_values, mc.refine, Some(cut))?;
            (kept, Some(cut))
        }
    };
    Ok(MusicStage {
        analysis,
        estimates,
        r_cut,
    })
}

fn minima_report(stage: &MusicStage, dt: Option<f64>) -> MinimaReport {
    let est = &stage.estimates;
    let deltas = dt.map(|dt| {
        est.frequencies
            .iter()
            .map(|&f| frequency_to_delta(f, dt))
            .collect()
    });
    let top = stage
        .analysis
        .singular_values
        .iter()
        .take(64)
        .copied()
        .collect();
    MinimaReport {
        grid_points: stage.analysis.omegas.len(),
        grid_resolution: est.grid_resolution,
        retained_rank: stage.analysis.retained_rank,
        r_cut: stage.r_cut,
        frequencies_per_sample: est.frequencies.clone(),
        r_values: est.r_values.clone(),
        deltas,
        singular_values_top: top,
        singular_value_count: stage.analysis.singular_values.len(),
    }
}

fn greens_report(
    series: &CorrelatorSeries,
    estimates: &FrequencyEstimates,
) -> Result<Option<GreensReport>> {
    if estimates.frequencies.is_empty() {
        log::warn!("no scan minima survived the depth cut; skipping the pole/weight fit");
        return Ok(None);
    }
    let fit = greens_from_series(series, estimates)?;
    Ok(Some(GreensReport {
        poles: fit
            .greens
            .poles
            .iter()
            .map(|p| PoleRow {
                delta: p.delta,
                re_weight: p.weight.re,
                im_weight: p.weight.im,
                abs_weight: p.weight.norm(),
            })
            .collect(),
        fit_residual: fit.residual,
    }))
}

// ---------------------------------------------------------------------------
// Oracles (exact evolution only)
// ---------------------------------------------------------------------------

/// Tr(ρ' B(t)) over the grid through the direct spectral route — no quench
/// channels, no sector solve — for the oracle columns of the CSVs.
fn direct_series(
    rho_prime: &CMat,
    b_dense: &CMat,
    es: &EigenSystem,
    times: &[f64],
) -> Result<Vec<Complex64>> {
    expectation_series(rho_prime, b_dense, es, times).map_err(anyhow::Error::from)
}

fn pure_density(es: &EigenSystem, index: usize) -> CMat {
    let v = es.basis.column(index);
    CMat::from_shape_fn((es.dim(), es.dim()), |(i, j)| v[i] * v[j].conj())
}

fn thermal_word_oracle(
    ws: &Workspace,
    beta: f64,
    a: &ScaledObservable,
    b: &ScaledObservable,
    times: &[f64],
) -> Result<Vec<Complex64>> {
    let rho = thermal_state(&ws.es, beta)?;
    let rho_a = rho.rho.dot(&a.dense());
    direct_series(&rho_a, &b.dense(), &ws.es, times)
}

fn ground_word_oracle(
    ws: &Workspace,
    index: usize,
    a: &ScaledObservable,
    b: &ScaledObservable,
    times: &[f64],
) -> Result<Vec<Complex64>> {
    let rho_a = pure_density(&ws.es, index).dot(&a.dense());
    direct_series(&rho_a, &b.dense(), &ws.es, times)
}

fn fermionic_oracle(
    ws: &Workspace,
    rho: &CMat,
    mode: usize,
    mode_prime: usize,
    times: &[f64],
) -> Result<Vec<Complex64>> {
    let n_modes = ws.p.n_sites();
    let c_j = jw_annihilation(mode, n_modes)?;
    let c_jp_dag = dagger(&jw_annihilation(mode_prime, n_modes)?);
    let rho_c = rho.dot(&c_j);
    direct_series(&rho_c, &c_jp_dag, &ws.es, times)
}

/// The four-operator scrambling oracle Tr(ρ A B(t) A B(t)) by explicit
/// propagators — O(d³) per time point, intended for the desk-scale models
/// the scrambling runs target.
fn otoc_oracle(
    ws: &Workspace,
    rho: &CMat,
    a: &PauliString,
    b: &PauliString,
    times: &[f64],
) -> Result<Vec<Complex64>> {
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let u = exact_step(&ws.es, t);
        let b_t = dagger(&u).dot(&b.mul_left(&u));
        let ab_t = a.mul_left(&b_t);
        let left = rho.dot(&ab_t);
        out.push(trace_prod(&left, &ab_t));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Ground-state plumbing
// ---------------------------------------------------------------------------

/// Index of the prepared eigenstate, honoring the sector directive and
/// refusing silently ambiguous ground states.
fn ground_index(cfg: &ExperimentConfig, es: &EigenSystem) -> Result<usize> {
    match cfg.ground_sector {
        Some(GroundSector::Even) => es
            .sector_ground(1)
            .ok_or_else(|| anyhow!("[eigensystem] no even-parity eigenstate exists")),
        Some(GroundSector::Odd) => es
            .sector_ground(-1)
            .ok_or_else(|| anyhow!("[eigensystem] no odd-parity eigenstate exists")),
        None => {
            let e = &es.energies;
            if e.len() > 1 {
                let scale = e.iter().fold(0.0f64, |m, &x| m.max(x.abs())).max(1.0);
                if e[1] - e[0] <= 1e-8 * scale && es.parities[0] != es.parities[1] {
                    bail!(
                        "[eigensystem] the ground state is degenerate across parity \
                         sectors (E1 - E0 = {:.3e}); set ground_sector to pick one",
                        e[1] - e[0]
                    );
                }
            }
            Ok(0)
        }
    }
}

/// Excitation gaps carried by the prepared state through the quench
/// observable: pairs (E_n − E_g, spectroscopic weight), aggregated over
/// degenerate gaps, weight above [`GAP_WEIGHT_THRESHOLD`].
fn excitation_gaps(
    ws: &Workspace,
    index: usize,
    a: &ScaledObservable,
) -> Vec<(f64, f64)> {
    let d = ws.es.dim();
    let v_g = CMat::from_shape_fn((d, 1), |(i, _)| ws.es.basis[[i, index]]);
    let a_vg = a.pauli.mul_left(&v_g);
    let overlaps = dagger(&ws.es.basis).dot(&a_vg);
    let e_g = ws.es.energies[index];
    let merge_tol = tqs_core::greens::default_merge_tol(&ws.es);
    let mut rows: Vec<(f64, f64)> = Vec::new();
    for n in 0..d {
        let w = (overlaps[[n, 0]] * a.scale).norm_sqr();
        if w <= 0.0 {
            continue;
        }
        let gap = ws.es.energies[n] - e_g;
        match rows.last_mut() {
            Some((g, acc)) if (gap - *g).abs() <= merge_tol => *acc += w,
            _ => rows.push((gap, w)),
        }
    }
    rows.retain(|&(_, w)| w > GAP_WEIGHT_THRESHOLD);
    rows
}

fn gaps_report(
    gaps: &[(f64, f64)],
    minima_deltas: &[f64],
    t_max: f64,
) -> GapsReport {
    let resolution = std::f64::consts::TAU / t_max;
    let rows = gaps
        .iter()
        .map(|&(gap, weight)| {
            let nearest = minima_deltas
                .iter()
                .copied()
                .min_by(|a, b| (a - gap).abs().total_cmp(&(b - gap).abs()));
            let distance = nearest.map(|d| (d - gap).abs());
            GapRow {
                gap,
                weight,
                nearest_delta: nearest,
                distance,
                within_resolution: distance.map(|d| d <= resolution),
            }
        })
        .collect();
    GapsReport {
        weight_threshold: GAP_WEIGHT_THRESHOLD,
        resolution,
        gaps: rows,
    }
}

// ---------------------------------------------------------------------------
// Artifact assembly shared by the Green's-function protocols
// ---------------------------------------------------------------------------

struct GreenOutputs<'a> {
    series: &'a CorrelatorSeries,
    oracle: Option<Vec<Complex64>>,
    sector: Option<SectorReport>,
    /// Exact excitation gaps for the comparison table (ground runs).
    gaps: Option<Vec<(f64, f64)>>,
}

fn emit_green_run(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    outputs: GreenOutputs<'_>,
    started: Instant,
) -> Result<RunSummary> {
    let mut set = ArtifactSet::create(out_dir).context("[artifacts]")?;
    let series = outputs.series;
    let oracle_cols = match &outputs.oracle {
        Some(reference) => OracleColumns::Series(reference),
        None => OracleColumns::None,
    };
    set.write_correlator_csv(
        "correlator.csv",
        &series.times,
        &series.values,
        &series.channels,
        oracle_cols,
    )
    .context("[artifacts] correlator.csv")?;

    let sig = series_signal(series).context("[music]")?;
    let stage = music_stage(&sig, cfg).context("[music]")?;
    set.write_rcurve_csv(&stage.analysis.omegas, &stage.analysis.r_values)
        .context("[artifacts] rcurve.csv")?;
    let dt = cfg.time_grid.as_ref().map(|tg| tg.dt);
    let minima = minima_report(&stage, dt);
    set.write_json("minima.json", &minima)
        .context("[artifacts] minima.json")?;

    if let (Some(gaps), Some(tg)) = (&outputs.gaps, &cfg.time_grid) {
        let deltas = minima.deltas.clone().unwrap_or_default();
        set.write_json("gaps.json", &gaps_report(gaps, &deltas, tg.t_max))
            .context("[artifacts] gaps.json")?;
    }

    if let Some(report) = greens_report(series, &stage.estimates).context("[greens]")? {
        set.write_json("greens.json", &report)
            .context("[artifacts] greens.json")?;
    }

    let channel_weights = Some(
        series
            .channels
            .iter()
            .map(|ch| ChannelWeightRow {
                label: ch.label.clone(),
                re_weight: ch.weight.re,
                im_weight: ch.weight.im,
            })
            .collect(),
    );
    emit_provenance(&mut set, cfg, channel_weights, outputs.sector)?;
    set.write_timing(started.elapsed().as_secs_f64())
        .context("[artifacts] timing.json")?;
    Ok(RunSummary {
        out_dir: set.dir().to_path_buf(),
        artifacts: set.files().to_vec(),
    })
}

fn emit_provenance(
    set: &mut ArtifactSet,
    cfg: &ExperimentConfig,
    channel_weights: Option<Vec<ChannelWeightRow>>,
    sector: Option<SectorReport>,
) -> Result<()> {
    let mut artifacts = set.files().to_vec();
    artifacts.push(PROVENANCE_FILE.to_string());
    let prov = Provenance {
        tool: "tqs",
        version_cli: env!("CARGO_PKG_VERSION"),
        version_core: tqs_core::VERSION,
        config_hash: cfg.hash()?,
        master_seed: cfg.seed,
        noise_seed: cfg.noise_seed(),
        shots: cfg.shots,
        tolerances: ToleranceEcho::default(),
        channel_weights,
        sector,
        artifacts,
        config: cfg,
    };
    set.write_json(PROVENANCE_FILE, &prov)
        .context("[artifacts] provenance.json")
}

fn sector_report(rec: &tqs_core::quench::ThermalReconstruction) -> SectorReport {
    SectorReport {
        z_s: rec.sector.z_s,
        z_a: rec.sector.z_a,
        n_s: rec.sector.n_s,
        n_a: rec.sector.n_a,
        z: rec.sector.z,
        dimension: rec.sector.d,
        traces: TracesReport {
            full: rec.traces.full,
            symmetric: rec.traces.symmetric,
            asymmetric: rec.traces.asymmetric,
        },
    }
}

// ---------------------------------------------------------------------------
// Protocol runners
// ---------------------------------------------------------------------------

/// Finite-temperature Green's function: parity traces → sector solve →
/// quench channels → assembly → frequency scan → pole/weight fit.
pub fn run_thermal_green(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    let started = Instant::now();
    let ws = build_workspace(cfg)?;
    let effective = build_effective(cfg, &ws)?;
    window_guidance(cfg, Some(&ws.es));
    let times = cfg.time_grid.as_ref().expect("validated").times();
    let beta = cfg.beta.expect("validated");
    let noise = noise_spec(cfg);
    let a_spec = cfg.observable_a.as_ref().expect("validated");
    let b_spec = cfg.observable_b.as_ref().expect("validated");

    let (series, sector) = match (a_spec, b_spec) {
        (
            ObservableSpec::Annihilation { mode },
            ObservableSpec::Creation { mode: mode_prime },
        ) => {
            let series = fermionic_correlator(
                &ws.es,
                &ws.p,
                *mode,
                *mode_prime,
                StatePrep::Thermal(beta),
                effective.as_ref(),
                &times,
                noise,
            )
            .context("[channels] fermionic decomposition")?;
            let series = apply_shots(series, cfg)?;
            (series, None)
        }
        _ => {
            let a = word_observable(a_spec, ws.lh.n_sites(), "observable_a")?;
            let b = word_observable(b_spec, ws.lh.n_sites(), "observable_b")?;
            let rec = thermal_correlator(
                &ws.es,
                &ws.p,
                beta,
                &a,
                &b,
                effective.as_ref(),
                &times,
                noise,
            )
            .context("[channels] thermal reconstruction")?;
            let sector = sector_report(&rec);
            let series = apply_shots(rec.series, cfg)?;
            (series, Some(sector))
        }
    };

    let oracle = if cfg.evolution.is_exact() {
        Some(match (a_spec, b_spec) {
            (
                ObservableSpec::Annihilation { mode },
                ObservableSpec::Creation { mode: mode_prime },
            ) => {
                let rho = thermal_state(&ws.es, beta).context("[oracle]")?;
                fermionic_oracle(&ws, &rho.rho, *mode, *mode_prime, &times)
                    .context("[oracle] fermionic reference series")?
            }
            _ => {
                let a = word_observable(a_spec, ws.lh.n_sites(), "observable_a")?;
                let b = word_observable(b_spec, ws.lh.n_sites(), "observable_b")?;
                thermal_word_oracle(&ws, beta, &a, &b, &times)
                    .context("[oracle] thermal reference series")?
            }
        })
    } else {
        None
    };

    emit_green_run(
        cfg,
        out_dir,
        GreenOutputs {
            series: &series,
            oracle,
            sector,
            gaps: None,
        },
        started,
    )
}

/// Ground-state (or selected-eigenstate) Green's function with the
/// excitation-spectrum comparison table in exact mode.
pub fn run_ground_green(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    let started = Instant::now();
    let ws = build_workspace(cfg)?;
    let effective = build_effective(cfg, &ws)?;
    window_guidance(cfg, Some(&ws.es));
    let times = cfg.time_grid.as_ref().expect("validated").times();
    let noise = noise_spec(cfg);
    let index = ground_index(cfg, &ws.es)?;
    let a_spec = cfg.observable_a.as_ref().expect("validated");
    let b_spec = cfg.observable_b.as_ref().expect("validated");

    let (series, gaps, oracle) = match (a_spec, b_spec) {
        (
            ObservableSpec::Annihilation { mode },
            ObservableSpec::Creation { mode: mode_prime },
        ) => {
            let prep = if index == 0 {
                StatePrep::Ground
            } else {
                StatePrep::Eigenstate(index)
            };
            let series = fermionic_correlator(
                &ws.es,
                &ws.p,
                *mode,
                *mode_prime,
                prep,
                effective.as_ref(),
                &times,
                noise,
            )
            .context("[channels] fermionic decomposition")?;
            let series = apply_shots(series, cfg)?;
            let oracle = if cfg.evolution.is_exact() {
                let rho = pure_density(&ws.es, index);
                Some(
                    fermionic_oracle(&ws, &rho, *mode, *mode_prime, &times)
                        .context("[oracle] fermionic reference series")?,
                )
            } else {
                None
            };
            (series, None, oracle)
        }
        _ => {
            let a = word_observable(a_spec, ws.lh.n_sites(), "observable_a")?;
            let b = word_observable(b_spec, ws.lh.n_sites(), "observable_b")?;
            let series = eigenstate_correlator(
                &ws.es,
                index,
                &a,
                &b,
                &ws.p,
                effective.as_ref(),
                &times,
                noise,
            )
            .context("[channels] eigenstate reconstruction")?;
            let series = apply_shots(series, cfg)?;
            let (gaps, oracle) = if cfg.evolution.is_exact() {
                (
                    Some(excitation_gaps(&ws, index, &a)),
                    Some(
                        ground_word_oracle(&ws, index, &a, &b, &times)
                            .context("[oracle] eigenstate reference series")?,
                    ),
                )
            } else {
                (None, None)
            };
            (series, gaps, oracle)
        }
    };

    emit_green_run(
        cfg,
        out_dir,
        GreenOutputs {
            series: &series,
            oracle,
            sector: None,
            gaps,
        },
        started,
    )
}

/// Out-of-time-order correlator: series CSV with the four-operator oracle
/// columns in exact mode. No frequency scan.
pub fn run_otoc(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    let started = Instant::now();
    let ws = build_workspace(cfg)?;
    let effective = build_effective(cfg, &ws)?;
    window_guidance(cfg, Some(&ws.es));
    let times = cfg.time_grid.as_ref().expect("validated").times();
    let noise = noise_spec(cfg);
    let (a_word, b_word) = match (
        cfg.observable_a.as_ref().expect("validated"),
        cfg.observable_b.as_ref().expect("validated"),
    ) {
        (
            ObservableSpec::Pauli { word: wa, .. },
            ObservableSpec::Pauli { word: wb, .. },
        ) => {
            let a: PauliString = wa.parse().map_err(|e| anyhow!("[model] observable_a: {e}"))?;
            let b: PauliString = wb.parse().map_err(|e| anyhow!("[model] observable_b: {e}"))?;
            (a, b)
        }
        _ => bail!("[model] the scrambling protocol takes plain Pauli words"),
    };

    let index = ground_index(cfg, &ws.es)?;
    let prep = match cfg.beta {
        Some(beta) => StatePrep::Thermal(beta),
        None if index == 0 => StatePrep::Ground,
        None => StatePrep::Eigenstate(index),
    };
    let series = otoc(
        &ws.es,
        &ws.p,
        prep,
        &a_word,
        &b_word,
        effective.as_ref(),
        &times,
        noise,
    )
    .context("[channels] scrambling reconstruction")?;
    let series = apply_shots(series, cfg)?;

    let oracle = if cfg.evolution.is_exact() {
        let rho = match prep {
            StatePrep::Thermal(beta) => thermal_state(&ws.es, beta).context("[oracle]")?.rho,
            StatePrep::Ground => pure_density(&ws.es, 0),
            StatePrep::Eigenstate(i) => pure_density(&ws.es, i),
        };
        Some(
            otoc_oracle(&ws, &rho, &a_word, &b_word, &times)
                .context("[oracle] four-operator reference series")?,
        )
    } else {
        None
    };

    let mut set = ArtifactSet::create(out_dir).context("[artifacts]")?;
    let oracle_cols = match &oracle {
        Some(reference) => OracleColumns::SeriesAndDeviation(reference),
        None => OracleColumns::None,
    };
    set.write_correlator_csv(
        "correlator.csv",
        &series.times,
        &series.values,
        &series.channels,
        oracle_cols,
    )
    .context("[artifacts] correlator.csv")?;
    let channel_weights = Some(
        series
            .channels
            .iter()
            .map(|ch| ChannelWeightRow {
                label: ch.label.clone(),
                re_weight: ch.weight.re,
                im_weight: ch.weight.im,
            })
            .collect(),
    );
    emit_provenance(&mut set, cfg, channel_weights, None)?;
    set.write_timing(started.elapsed().as_secs_f64())
        .context("[artifacts] timing.json")?;
    Ok(RunSummary {
        out_dir: set.dir().to_path_buf(),
        artifacts: set.files().to_vec(),
    })
}

/// Standalone frequency analysis of an external signal file.
pub fn run_music_only(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    let started = Instant::now();
    let path = cfg.signal_file.as_ref().expect("validated");
    let file = std::fs::File::open(path)
        .with_context(|| format!("[io] opening signal file {}", path.display()))?;
    let sig = Signal::read_csv(std::io::BufReader::new(file))
        .map_err(|e| anyhow!("[music] reading signal: {e}"))?;
    let stage = music_stage(&sig, cfg).context("[music]")?;

    let mut set = ArtifactSet::create(out_dir).context("[artifacts]")?;
    set.write_rcurve_csv(&stage.analysis.omegas, &stage.analysis.r_values)
        .context("[artifacts] rcurve.csv")?;
    let dt = cfg.time_grid.as_ref().map(|tg| tg.dt);
    set.write_json("minima.json", &minima_report(&stage, dt))
        .context("[artifacts] minima.json")?;
    emit_provenance(&mut set, cfg, None, None)?;
    set.write_timing(started.elapsed().as_secs_f64())
        .context("[artifacts] timing.json")?;
    Ok(RunSummary {
        out_dir: set.dir().to_path_buf(),
        artifacts: set.files().to_vec(),
    })
}

/// Dispatches on the validated protocol.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    match cfg.protocol {
        Protocol::ThermalGreen => run_thermal_green(cfg, out_dir),
        Protocol::GroundGreen => run_ground_green(cfg, out_dir),
        Protocol::Otoc => run_otoc(cfg, out_dir),
        Protocol::MusicOnly => run_music_only(cfg, out_dir),
    }
}

/// Resolves the artifact directory: flag, then config, in that order.
pub fn resolve_out_dir(cfg: &ExperimentConfig, flag: Option<&Path>) -> Result<PathBuf> {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| anyhow!("[artifacts] no output directory: set --out or output_dir"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TimeGridSpec;

    #[test]
    fn median_handles_even_and_odd_lengths() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn time_grids_include_zero_and_respect_t_max() {
        let tg = TimeGridSpec {
            t_max: 1.0,
            dt: 0.25,
        };
        assert_eq!(tg.times(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }
}
