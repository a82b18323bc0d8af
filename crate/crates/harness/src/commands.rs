use std::fs;
use std::path::PathBuf;

use acgame_core::dynamics::{integrate_with, DensityProfile, DynamicsConfig};
use acgame_core::game::{validate_potential, GameSpec, PotentialReport};
use acgame_core::learner::{player_rng, run, Diagnostics, RunConfig};
use acgame_core::logit::{solve_equilibria, EquilibriumSet};
use acgame_core::measure::GridDensity;
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Thresholds};
use crate::error::{exit, HarnessError, Result};
use crate::output::{ensure_dir, write_json, JsonlWriter};

pub const SUMMARY_FILE: &str = "summary.json";
pub const EQUILIBRIA_FILE: &str = "equilibria.json";
pub const DYNAMICS_FILE: &str = "dynamics.jsonl";
pub const DYNAMICS_SUMMARY_FILE: &str = "dynamics_summary.json";
pub const VALIDATION_FILE: &str = "validation.json";
pub const CONFIG_COPY: &str = "config.toml";

pub fn seed_file(seed: u64) -> String {
    format!("run_seed{seed}.jsonl")
}

/// What a command produced and the exit status it asks for.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub exit_code: i32,
    pub files: Vec<PathBuf>,
    pub message: String,
}

fn prepare(cfg: &ExperimentConfig) -> Result<GameSpec> {
    cfg.validate()?;
    let game = cfg.game.build()?;
    ensure_dir(&cfg.output_dir)?;
    let copy = cfg.output_dir.join(CONFIG_COPY);
    fs::write(&copy, cfg.to_toml()?).map_err(|e| HarnessError::io(&copy, e))?;
    Ok(game)
}

fn equilibria(cfg: &ExperimentConfig, game: &GameSpec) -> Result<EquilibriumSet> {
    let r = &cfg.reference;
    info!("solving for logit equilibria of {} (eta = {}, {} restarts)", game.name(), cfg.eta, r.restarts);
    Ok(solve_equilibria(game, cfg.eta, cfg.grid, &r.options(), r.restarts, r.seed)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub file: String,
    pub error: Option<String>,
    pub iters: Option<u64>,
    pub final_bl: Option<f64>,
    pub final_residuals: Vec<f64>,
    pub final_lyapunov: Option<f64>,
    /// `final_bl < thresholds.bl`; absent when no reference was solved or the seed failed.
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub game: String,
    pub eta: f64,
    pub iters: u64,
    pub thresholds: Thresholds,
    pub reference_components: Option<usize>,
    pub reference_converged: Option<bool>,
    pub seeds: Vec<SeedSummary>,
    pub passed: usize,
    pub pass_fraction: Option<f64>,
    pub pass: Option<bool>,
}

fn run_seed(
    cfg: &ExperimentConfig,
    game: &GameSpec,
    run_cfg: &RunConfig,
    seed: u64,
    reference: Option<&[Vec<GridDensity>]>,
) -> SeedSummary {
    let file = seed_file(seed);
    let mut summary = SeedSummary {
        seed,
        file: file.clone(),
        error: None,
        iters: None,
        final_bl: None,
        final_residuals: Vec::new(),
        final_lyapunov: None,
        pass: None,
    };
    let result = JsonlWriter::create(cfg.output_dir.join(&file)).and_then(|mut out| {
        let record = run(game, run_cfg, seed, reference, |d: &Diagnostics| {
            out.write(d).map_err(|e| acgame_core::Error::Config(e.to_string()))
        })?;
        Ok(record)
    });
    match result {
        Ok(record) => {
            let last = record.last();
            info!("seed {seed}: {} iterations, bl_to_ref = {:?}", last.iter, last.bl_to_ref);
            summary.iters = Some(last.iter);
            summary.final_bl = last.bl_to_ref;
            summary.final_residuals = last.residuals.clone();
            summary.final_lyapunov = last.lyapunov;
            summary.pass = last.bl_to_ref.map(|d| d < cfg.thresholds.bl);
        }
        Err(e) => {
            warn!("seed {seed} failed: {e}");
            summary.error = Some(e.to_string());
        }
    }
    summary
}

/// Runs the learner once per seed on a worker pool, one JSONL file per seed,
/// then writes the summary.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let game = prepare(cfg)?;
    let mut files = Vec::new();
    let reference = if cfg.reference.solve {
        let set = equilibria(cfg, &game)?;
        if !set.all_converged {
            warn!("not every reference restart converged; distances use the components found");
        }
        let path = cfg.output_dir.join(EQUILIBRIA_FILE);
        write_json(&path, &set)?;
        files.push(path);
        Some(set)
    } else {
        None
    };
    let profiles: Option<Vec<Vec<GridDensity>>> =
        reference.as_ref().map(|s| s.components.iter().map(|c| c.profile.clone()).collect());
    let mut run_cfg = RunConfig::new(cfg.eta, cfg.iters).every(cfg.checkpoint_every);
    run_cfg.schedule = cfg.schedule;
    run_cfg.grid = cfg.grid;
    run_cfg.compaction = cfg.compaction.get();
    run_cfg.checkpoints.extend(&cfg.checkpoints);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| HarnessError::Run(format!("building worker pool: {e}")))?;
    let seeds: Vec<SeedSummary> = pool.install(|| {
        cfg.seeds.par_iter().map(|&seed| run_seed(cfg, &game, &run_cfg, seed, profiles.as_deref())).collect()
    });
    files.extend(seeds.iter().map(|s| cfg.output_dir.join(&s.file)));

    let failed = seeds.iter().filter(|s| s.error.is_some()).count();
    let passed = seeds.iter().filter(|s| s.pass == Some(true)).count();
    let pass_fraction = reference.as_ref().map(|_| passed as f64 / seeds.len() as f64);
    let summary = RunSummary {
        game: game.name().to_string(),
        eta: cfg.eta,
        iters: cfg.iters,
        thresholds: cfg.thresholds,
        reference_components: reference.as_ref().map(|s| s.components.len()),
        reference_converged: reference.as_ref().map(|s| s.all_converged),
        seeds,
        passed,
        pass_fraction,
        pass: pass_fraction.map(|f| failed == 0 && f >= cfg.thresholds.pass_fraction),
    };
    let path = cfg.output_dir.join(SUMMARY_FILE);
    write_json(&path, &summary)?;
    files.push(path);
    let message = match pass_fraction {
        Some(f) => format!("{passed}/{} seeds within bl < {} ({:.0}%), {failed} failed", cfg.seeds.len(), cfg.thresholds.bl, 100.0 * f),
        None => format!("{} seeds run, {failed} failed", cfg.seeds.len()),
    };
    Ok(Outcome { exit_code: if failed > 0 { exit::RUN_ERROR } else { exit::OK }, files, message })
}

/// Multi-start logit equilibrium search.
pub fn cmd_equilibrium(cfg: &ExperimentConfig) -> Result<Outcome> {
    let game = prepare(cfg)?;
    let set = equilibria(cfg, &game)?;
    let path = cfg.output_dir.join(EQUILIBRIA_FILE);
    write_json(&path, &set)?;
    let message = format!(
        "{} component(s) from {} restarts, all converged: {}",
        set.components.len(),
        set.restarts,
        set.all_converged
    );
    let exit_code = if set.all_converged { exit::OK } else { exit::NOT_CONVERGED };
    Ok(Outcome { exit_code, files: vec![path], message })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsSummary {
    pub game: String,
    pub eta: f64,
    pub step: f64,
    pub horizon: f64,
    pub steps: usize,
    pub violations: usize,
    pub largest_increase: f64,
    pub max_mass_error: f64,
    pub final_v: f64,
    pub final_residual: f64,
    pub monotone: bool,
}

/// Euler integration of the logit dynamics from the uniform profile.
pub fn cmd_dynamics(cfg: &ExperimentConfig) -> Result<Outcome> {
    let game = prepare(cfg)?;
    let d = &cfg.dynamics;
    let dyn_cfg = DynamicsConfig {
        eta: cfg.eta,
        step: d.step,
        horizon: d.horizon,
        grid: cfg.grid,
        checkpoint_every: d.checkpoint_every,
        record_profiles: d.record_profiles,
    };
    let start = DensityProfile::uniform(&game, cfg.grid)?;
    let path = cfg.output_dir.join(DYNAMICS_FILE);
    let mut out = JsonlWriter::create(&path)?;
    let traj = integrate_with(&start, &game, &dyn_cfg, |cp| out.write(cp).map_err(|e| acgame_core::Error::Config(e.to_string())))?;
    let summary = DynamicsSummary {
        game: game.name().to_string(),
        eta: cfg.eta,
        step: d.step,
        horizon: d.horizon,
        steps: traj.steps,
        violations: traj.violations,
        largest_increase: traj.largest_increase,
        max_mass_error: traj.max_mass_error,
        final_v: traj.checkpoints.last().map_or(f64::NAN, |c| c.v),
        final_residual: traj.final_residual,
        monotone: traj.violations == 0,
    };
    let summary_path = cfg.output_dir.join(DYNAMICS_SUMMARY_FILE);
    write_json(&summary_path, &summary)?;
    let message = format!(
        "{} steps, {} Lyapunov violation(s), final residual {:.3e}",
        traj.steps, traj.violations, traj.final_residual
    );
    let exit_code = if summary.monotone { exit::OK } else { exit::VALIDATION_FAILED };
    Ok(Outcome { exit_code, files: vec![path, summary_path], message })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationOutput {
    pub game: String,
    pub seed: u64,
    pub report: PotentialReport,
}

/// Checks the declared potential on random unilateral deviations.
pub fn cmd_validate_game(cfg: &ExperimentConfig) -> Result<Outcome> {
    let game = prepare(cfg)?;
    let seed = cfg.seeds[0];
    let report = validate_potential(&game, cfg.validation.samples, cfg.validation.tol, &mut player_rng(seed, 0))?;
    let path = cfg.output_dir.join(VALIDATION_FILE);
    write_json(&path, &ValidationOutput { game: game.name().to_string(), seed, report })?;
    let message = format!(
        "{}: max residual {:.3e} over {} samples (tol {:e}): {}",
        game.name(),
        report.max_residual,
        report.samples,
        report.tol,
        if report.pass { "pass" } else { "FAIL" }
    );
    let exit_code = if report.pass { exit::OK } else { exit::VALIDATION_FAILED };
    Ok(Outcome { exit_code, files: vec![path], message })
}
