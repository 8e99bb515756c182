//! Command orchestration: table caching, run execution, policy comparison
//! and health validation. Kept out of `main.rs` so integration tests can
//! drive the same paths without spawning a process.

use anyhow::{anyhow, Context};
use serde::Serialize;
use std::path::{Path, PathBuf};

use pstc_core::pstc::{simulate, SimulationOutput, TriggerMode};
use pstc_core::{build_offline_tables, OfflineTables};

use crate::config::ProblemConfig;
use crate::csvout;
use crate::suites;
use crate::tables;

/// Failure classes, each with a fixed process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad configuration or table/config mismatch.
    Config(anyhow::Error),
    /// A validation suite or comparison guarantee failed.
    Validation(anyhow::Error),
    /// The closed loop produced non-finite states.
    Divergence(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Divergence(_) => 3,
        }
    }

    pub fn message(&self) -> String {
        match self {
            Failure::Config(e) => format!("configuration error: {e:#}"),
            Failure::Validation(e) => format!("validation failure: {e:#}"),
            Failure::Divergence(e) => format!("divergence: {e:#}"),
        }
    }
}

pub type CmdResult<T> = Result<T, Failure>;

fn cfg_err<T>(e: anyhow::Error) -> CmdResult<T> {
    Err(Failure::Config(e))
}

/// Output directory: `--out` flag beats `PSTC_OUT_DIR` beats the working
/// directory (flag/env precedence is clap's; this just defaults and creates).
pub fn resolve_out_dir(out: Option<&Path>) -> CmdResult<PathBuf> {
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating output directory {}", dir.display()))
        .map_err(Failure::Config)?;
    Ok(dir)
}

pub fn load_config(path: &Path) -> CmdResult<ProblemConfig> {
    ProblemConfig::from_file(path).map_err(Failure::Config)
}

fn default_tables_path(out_dir: &Path, cfg: &ProblemConfig) -> PathBuf {
    out_dir.join(format!("{}.tables", cfg.name))
}

fn sidecar_path(tables_path: &Path) -> PathBuf {
    let mut p = tables_path.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

/// Builds the offline tables and persists them next to the sidecar.
fn build_and_store(cfg: &ProblemConfig, path: &Path) -> CmdResult<(OfflineTables, f64)> {
    let plant = cfg.plant().map_err(|e| Failure::Config(anyhow!("{e}")))?;
    let controller = cfg.controller().map_err(|e| Failure::Config(anyhow!("{e}")))?;
    let trig_cfg = cfg.trigger_config().map_err(|e| Failure::Config(anyhow!("{e}")))?;
    let (tables, timings) =
        build_offline_tables(&plant, &controller, &trig_cfg, &cfg.reach_config(), &cfg.wbar, &cfg.v)
            .map_err(|e| Failure::Config(anyhow!("{e}")))?;
    tables::write_tables(path, &tables, &cfg.hash()).map_err(Failure::Config)?;
    tables::write_sidecar(&sidecar_path(path), &cfg.name, &cfg.hash_hex(), &tables, &timings)
        .map_err(Failure::Config)?;
    let total =
        timings.transition_ms + timings.reach_ms + timings.trigger_ms + timings.init_ms;
    Ok((tables, total))
}

/// Loads tables from `path` when present (verifying the config hash), builds
/// and persists them otherwise. Returns whether the cache was hit.
pub fn load_or_build(
    cfg: &ProblemConfig,
    out_dir: &Path,
    explicit: Option<&Path>,
) -> CmdResult<(OfflineTables, PathBuf, bool)> {
    let path = explicit.map(Path::to_path_buf).unwrap_or_else(|| default_tables_path(out_dir, cfg));
    if path.exists() {
        let (tables, hash) = tables::read_tables(&path).map_err(Failure::Config)?;
        if hash != cfg.hash() {
            return cfg_err(anyhow!(
                "table file {} was built from a different configuration (hash mismatch); \
                 re-run precompute or delete the file",
                path.display()
            ));
        }
        return Ok((tables, path, true));
    }
    let (tables, _) = build_and_store(cfg, &path)?;
    Ok((tables, path, false))
}

pub fn cmd_precompute(cfg: &ProblemConfig, out_dir: &Path, explicit: Option<&Path>) -> CmdResult<()> {
    let path = explicit.map(Path::to_path_buf).unwrap_or_else(|| default_tables_path(out_dir, cfg));
    if path.exists() {
        let (_, hash) = tables::read_tables(&path).map_err(Failure::Config)?;
        if hash == cfg.hash() {
            println!("{}: tables up to date at {}", cfg.name, path.display());
            return Ok(());
        }
        return cfg_err(anyhow!(
            "table file {} exists but was built from a different configuration; delete it to rebuild",
            path.display()
        ));
    }
    let (tables, total_ms) = build_and_store(cfg, &path)?;
    println!(
        "{}: built tables (np={} nc={} ny={} nu={} kappa_max={} init_window={}) in {:.2} ms",
        cfg.name,
        tables.trig.np,
        tables.trig.nc,
        tables.trig.ny,
        tables.trig.nu,
        tables.trig.kappa_max,
        tables.init.kbar + 1,
        total_ms
    );
    println!("  -> {}", path.display());
    Ok(())
}

/// Per-run overrides shared by `simulate` and `compare`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub duration: Option<f64>,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Serialize)]
struct PhaseSummary {
    count: usize,
    mean_ms: f64,
    min_ms: f64,
    max_ms: f64,
}

impl PhaseSummary {
    fn from(stats: &pstc_core::pstc::PhaseStats) -> Self {
        Self {
            count: stats.count,
            mean_ms: stats.mean_ms(),
            min_ms: if stats.count == 0 { 0.0 } else { stats.min_ms },
            max_ms: stats.max_ms,
        }
    }
}

#[derive(Debug, Serialize)]
struct RunSummary {
    config: String,
    mode: String,
    seed: u64,
    duration: f64,
    epsilon: f64,
    periods: usize,
    triggers: usize,
    mean_inter_transmission: f64,
    initial_norm: f64,
    final_norm: f64,
    containment_failures: usize,
    model_violations: usize,
    total_ms: f64,
    fusion: PhaseSummary,
    eta_scan: PhaseSummary,
    prediction: PhaseSummary,
}

fn mode_name(mode: TriggerMode) -> &'static str {
    match mode {
        TriggerMode::Pstc => "pstc",
        TriggerMode::Petc => "petc",
        TriggerMode::Periodic => "periodic",
    }
}

fn check_finite(out: &SimulationOutput) -> CmdResult<()> {
    let finite = out.final_xi_p.iter().all(|x| x.is_finite())
        && out.final_xc.iter().all(|x| x.is_finite())
        && out.records.iter().all(|r| r.xi_p.iter().all(|x| x.is_finite()));
    if finite {
        Ok(())
    } else {
        Err(Failure::Divergence(anyhow!(
            "closed loop produced non-finite states; the loop is unstable under this configuration"
        )))
    }
}

fn run_once(
    cfg: &ProblemConfig,
    tables: &OfflineTables,
    mode: TriggerMode,
    ov: &RunOverrides,
) -> CmdResult<SimulationOutput> {
    let plant = cfg.plant().map_err(|e| Failure::Config(anyhow!("{e}")))?;
    let controller = cfg.controller().map_err(|e| Failure::Config(anyhow!("{e}")))?;
    let scenario = cfg.scenario(mode, ov.seed, ov.duration, ov.epsilon);
    let out = simulate(&plant, &controller, tables, &scenario)
        .map_err(|e| Failure::Config(anyhow!("{e}")))?;
    check_finite(&out)?;
    Ok(out)
}

fn summarize(cfg: &ProblemConfig, mode: TriggerMode, ov: &RunOverrides, out: &SimulationOutput) -> RunSummary {
    let initial_norm = (cfg.xi_p0.norm_squared() + cfg.xc0.norm_squared()).sqrt();
    let final_norm = (out.final_xi_p.norm_squared() + out.final_xc.norm_squared()).sqrt();
    RunSummary {
        config: cfg.name.clone(),
        mode: mode_name(mode).to_string(),
        seed: ov.seed.unwrap_or(cfg.seed),
        duration: ov.duration.unwrap_or(cfg.duration),
        epsilon: ov.epsilon.unwrap_or(cfg.epsilon),
        periods: out.periods,
        triggers: out.triggers,
        mean_inter_transmission: if out.triggers == 0 {
            0.0
        } else {
            out.periods as f64 / out.triggers as f64
        },
        initial_norm,
        final_norm,
        containment_failures: out.containment_failures,
        model_violations: out.model_violations,
        total_ms: out.timings.total_ms,
        fusion: PhaseSummary::from(&out.timings.fusion),
        eta_scan: PhaseSummary::from(&out.timings.eta_scan),
        prediction: PhaseSummary::from(&out.timings.prediction),
    }
}

pub fn cmd_simulate(
    cfg: &ProblemConfig,
    out_dir: &Path,
    explicit_tables: Option<&Path>,
    mode: TriggerMode,
    ov: &RunOverrides,
) -> CmdResult<()> {
    let (tables, _, _) = load_or_build(cfg, out_dir, explicit_tables)?;
    let out = run_once(cfg, &tables, mode, ov)?;
    let csv_path = out_dir.join(format!("{}_{}.csv", cfg.name, mode_name(mode)));
    csvout::write_csv(&csv_path, &out, cfg.plant().map_err(|e| Failure::Config(anyhow!("{e}")))?.nw())
        .map_err(Failure::Config)?;
    let summary = summarize(cfg, mode, ov, &out);
    let summary_path = out_dir.join(format!("{}_{}_summary.json", cfg.name, mode_name(mode)));
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary).unwrap())
        .with_context(|| format!("writing {}", summary_path.display()))
        .map_err(Failure::Config)?;
    println!(
        "{} [{}]: {} periods, {} transmissions (mean gap {:.2}), |xi(T)| = {:.3e}",
        cfg.name,
        mode_name(mode),
        out.periods,
        out.triggers,
        summary.mean_inter_transmission,
        summary.final_norm
    );
    println!(
        "  timing per call: fusion {:.3} ms, bound scan {:.3} ms, prediction {:.3} ms",
        summary.fusion.mean_ms, summary.eta_scan.mean_ms, summary.prediction.mean_ms
    );
    if out.containment_failures > 0 || out.model_violations > 0 {
        println!(
            "  WARNING: containment failures = {}, model violations = {}",
            out.containment_failures, out.model_violations
        );
    }
    println!("  -> {}", csv_path.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct CompareSummary {
    config: String,
    seed: u64,
    duration: f64,
    epsilon: f64,
    periods: usize,
    pstc_triggers: usize,
    petc_triggers: usize,
    pstc_mean_gap: f64,
    petc_mean_gap: f64,
    /// mean over self-triggered transmissions of the horizon the periodic
    /// detector would have realized from the same state.
    detector_reference_mean_gap: f64,
    /// Transmissions where the precomputed horizon exceeded the detector's
    /// realized horizon on the same sample path. Must be zero.
    lower_bound_violations: usize,
    pstc_final_norm: f64,
    petc_final_norm: f64,
}

pub fn cmd_compare(
    cfg: &ProblemConfig,
    out_dir: &Path,
    explicit_tables: Option<&Path>,
    ov: &RunOverrides,
) -> CmdResult<()> {
    let (tables, _, _) = load_or_build(cfg, out_dir, explicit_tables)?;
    let pstc = run_once(cfg, &tables, TriggerMode::Pstc, ov)?;
    let petc = run_once(cfg, &tables, TriggerMode::Petc, ov)?;

    let mut violations = 0usize;
    let mut ref_sum = 0usize;
    let mut ref_count = 0usize;
    for rec in pstc.records.iter().filter(|r| r.trigger) {
        if let (Some(ks), Some(kd)) = (rec.kappa_star, rec.petc_kappa) {
            if ks > kd {
                violations += 1;
            }
            ref_sum += kd;
            ref_count += 1;
        }
    }

    let summary = CompareSummary {
        config: cfg.name.clone(),
        seed: ov.seed.unwrap_or(cfg.seed),
        duration: ov.duration.unwrap_or(cfg.duration),
        epsilon: ov.epsilon.unwrap_or(cfg.epsilon),
        periods: pstc.periods,
        pstc_triggers: pstc.triggers,
        petc_triggers: petc.triggers,
        pstc_mean_gap: if pstc.triggers == 0 { 0.0 } else { pstc.periods as f64 / pstc.triggers as f64 },
        petc_mean_gap: if petc.triggers == 0 { 0.0 } else { petc.periods as f64 / petc.triggers as f64 },
        detector_reference_mean_gap: if ref_count == 0 {
            0.0
        } else {
            ref_sum as f64 / ref_count as f64
        },
        lower_bound_violations: violations,
        pstc_final_norm: pstc.final_xi_p.norm() .hypot(pstc.final_xc.norm()),
        petc_final_norm: petc.final_xi_p.norm().hypot(petc.final_xc.norm()),
    };
    let path = out_dir.join(format!("{}_compare.json", cfg.name));
    std::fs::write(&path, serde_json::to_string_pretty(&summary).unwrap())
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::Config)?;
    println!(
        "{}: self-triggered {} transmissions (mean gap {:.2}) vs detector {} (mean gap {:.2})",
        cfg.name, summary.pstc_triggers, summary.pstc_mean_gap, summary.petc_triggers, summary.petc_mean_gap
    );
    println!("  -> {}", path.display());
    if violations > 0 {
        return Err(Failure::Validation(anyhow!(
            "{violations} transmissions exceeded the detector's realized horizon on the same path; \
             the precomputed horizon must be a lower bound"
        )));
    }
    Ok(())
}

pub fn cmd_validate(cfg: &ProblemConfig, out_dir: &Path, explicit_tables: Option<&Path>) -> CmdResult<()> {
    let (tables, path, cached) = load_or_build(cfg, out_dir, explicit_tables)?;
    println!(
        "validating {} against {}{}",
        cfg.name,
        path.display(),
        if cached { " (loaded from cache)" } else { " (freshly built)" }
    );
    let report = suites::run_all(cfg, &tables);
    let mut failed = 0usize;
    for check in &report {
        match &check.outcome {
            Ok(detail) => println!("  PASS {:<28} {detail}", check.name),
            Err(detail) => {
                failed += 1;
                println!("  FAIL {:<28} {detail}", check.name);
            }
        }
    }
    if failed > 0 {
        return Err(Failure::Validation(anyhow!("{failed} of {} checks failed", report.len())));
    }
    println!("all {} checks passed", report.len());
    Ok(())
}
