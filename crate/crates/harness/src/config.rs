//! Experiment configuration, read from TOML.
//!
//! ```toml
//! game = "quadratic_coordination"   # or a [game] table, see GameConfig
//! eta = 0.1
//! iters = 1000
//! seeds = [1]
//! ```
//!
//! Every other key is optional; unknown keys are rejected.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use acgame_core::game::{builtin, BuiltinParams, GameSpec};
use acgame_core::learner::{Compaction, StepSchedule};
use acgame_core::logit::FixedPointOptions;
use serde::de::{self, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub game: GameConfig,
    pub eta: f64,
    #[serde(default = "defaults::iters")]
    pub iters: u64,
    #[serde(default = "defaults::seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "defaults::grid")]
    pub grid: usize,
    #[serde(default)]
    pub schedule: StepSchedule,
    #[serde(default = "defaults::checkpoint_every")]
    pub checkpoint_every: u64,
    /// Extra iterations to record, on top of the `checkpoint_every` multiples.
    #[serde(default)]
    pub checkpoints: Vec<u64>,
    #[serde(default)]
    pub reference: ReferenceConfig,
    #[serde(default)]
    pub dynamics: DynamicsSection,
    #[serde(default)]
    pub compaction: CompactionSection,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub validation: ValidationSection,
    #[serde(default = "defaults::output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads for seed fan-out; 0 means one per available core.
    #[serde(default)]
    pub workers: usize,
}

mod defaults {
    use std::path::PathBuf;

    pub fn iters() -> u64 {
        100_000
    }
    pub fn seeds() -> Vec<u64> {
        vec![0]
    }
    pub fn grid() -> usize {
        256
    }
    pub fn checkpoint_every() -> u64 {
        10_000
    }
    pub fn output_dir() -> PathBuf {
        PathBuf::from("out")
    }
    pub fn yes() -> bool {
        true
    }
}

/// Builtin game selection. Written either as a bare name or as
///
/// ```toml
/// [game]
/// name = "cournot_linear"
/// potential = true          # false drops the potential function
/// [game.params]
/// n = 3
/// [game.perturb]            # adds epsilon * a[player] * sum of the other actions
/// player = 0                # to one player's utility
/// epsilon = 0.05
/// ```
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameConfig {
    pub name: String,
    pub params: BuiltinParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturb: Option<Perturbation>,
    pub potential: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub player: usize,
    pub epsilon: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GameTable {
    name: String,
    #[serde(default)]
    params: BuiltinParams,
    perturb: Option<Perturbation>,
    #[serde(default = "defaults::yes")]
    potential: bool,
}

impl GameConfig {
    pub fn named(name: impl Into<String>) -> Self {
        Self { name: name.into(), params: BuiltinParams::default(), perturb: None, potential: true }
    }

    pub fn build(&self) -> Result<GameSpec> {
        let mut game = builtin(&self.name, &self.params)?;
        if let Some(p) = self.perturb {
            let n = game.n_players();
            if n < 2 || p.player >= n {
                return Err(HarnessError::Config(format!(
                    "game.perturb.player: must name one of at least two players, got {} of {n}",
                    p.player
                )));
            }
            let reach: f64 = game.intervals().iter().map(|iv| iv.lo().abs().max(iv.hi().abs())).product::<f64>();
            let eps = p.epsilon;
            let player = p.player;
            let bump = Arc::new(move |a: &[f64]| {
                let others: f64 = a.iter().enumerate().filter(|(j, _)| *j != player).map(|(_, x)| x).sum();
                eps * a[player] * others
            });
            game = game.perturbed(player, bump, eps.abs() * reach * (n - 1) as f64);
        }
        if !self.potential {
            game = game.without_potential();
        }
        Ok(game)
    }
}

impl<'de> Deserialize<'de> for GameConfig {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct GameVisitor;

        impl<'de> Visitor<'de> for GameVisitor {
            type Value = GameConfig;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a builtin game name or a table with a `name` key")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<GameConfig, E> {
                Ok(GameConfig::named(v))
            }

            fn visit_map<A: MapAccess<'de>>(self, map: A) -> std::result::Result<GameConfig, A::Error> {
                let t = GameTable::deserialize(de::value::MapAccessDeserializer::new(map))?;
                Ok(GameConfig { name: t.name, params: t.params, perturb: t.perturb, potential: t.potential })
            }
        }

        d.deserialize_any(GameVisitor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    /// Solve for logit equilibria before `run` and report distances to them.
    pub solve: bool,
    pub restarts: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub seed: u64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        let fp = FixedPointOptions::default();
        Self { solve: true, restarts: 8, tol: fp.tol, max_iter: fp.max_iter, damping: fp.damping, seed: 0 }
    }
}

impl ReferenceConfig {
    pub fn options(&self) -> FixedPointOptions {
        FixedPointOptions { damping: self.damping, tol: self.tol, max_iter: self.max_iter }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsSection {
    pub step: f64,
    pub horizon: f64,
    /// In Euler steps.
    pub checkpoint_every: usize,
    pub record_profiles: bool,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        Self { step: 0.05, horizon: 30.0, checkpoint_every: 20, record_profiles: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompactionSection {
    pub enabled: bool,
    pub bins: usize,
    pub every: u64,
}

impl Default for CompactionSection {
    fn default() -> Self {
        let c = Compaction::default();
        Self { enabled: true, bins: c.bins, every: c.every }
    }
}

impl CompactionSection {
    pub fn get(&self) -> Option<Compaction> {
        self.enabled.then_some(Compaction { bins: self.bins, every: self.every })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// A seed passes when its final distance to the nearest reference equilibrium is below this.
    pub bl: f64,
    /// Fraction of seeds that must pass.
    pub pass_fraction: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { bl: 0.05, pass_fraction: 0.9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationSection {
    pub samples: usize,
    pub tol: f64,
}

impl Default for ValidationSection {
    fn default() -> Self {
        Self { samples: 10_000, tol: 1e-9 }
    }
}

fn semantic(field: &str, msg: impl fmt::Display) -> HarnessError {
    HarnessError::Config(format!("{field}: {msg}"))
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(semantic(field, format!("must be positive and finite, got {v}")))
    }
}

fn at_least(field: &str, v: u64, min: u64) -> Result<()> {
    if v >= min {
        Ok(())
    } else {
        Err(semantic(field, format!("must be at least {min}, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn minimal(game: &str, eta: f64, iters: u64, seeds: Vec<u64>) -> Self {
        Self {
            game: GameConfig::named(game),
            eta,
            iters,
            seeds,
            grid: defaults::grid(),
            schedule: StepSchedule::default(),
            checkpoint_every: defaults::checkpoint_every(),
            checkpoints: Vec::new(),
            reference: ReferenceConfig::default(),
            dynamics: DynamicsSection::default(),
            compaction: CompactionSection::default(),
            thresholds: Thresholds::default(),
            validation: ValidationSection::default(),
            output_dir: defaults::output_dir(),
            workers: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.game.name.is_empty() {
            return Err(semantic("game.name", "must not be empty"));
        }
        positive("eta", self.eta)?;
        at_least("iters", self.iters, 1)?;
        if self.seeds.is_empty() {
            return Err(semantic("seeds", "must list at least one seed"));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            return Err(semantic("seeds", format!("must be distinct, {dup} appears twice")));
        }
        at_least("grid", self.grid as u64, 16)?;
        self.schedule.validate().map_err(|e| semantic("schedule", e))?;
        at_least("checkpoint_every", self.checkpoint_every, 1)?;
        let r = &self.reference;
        at_least("reference.restarts", r.restarts as u64, 1)?;
        positive("reference.tol", r.tol)?;
        at_least("reference.max_iter", r.max_iter as u64, 1)?;
        if !(r.damping > 0.0 && r.damping <= 1.0) {
            return Err(semantic("reference.damping", format!("must lie in (0, 1], got {}", r.damping)));
        }
        let d = &self.dynamics;
        if !(d.step > 0.0 && d.step <= 0.1) {
            return Err(semantic("dynamics.step", format!("must lie in (0, 0.1], got {}", d.step)));
        }
        positive("dynamics.horizon", d.horizon)?;
        at_least("dynamics.checkpoint_every", d.checkpoint_every as u64, 1)?;
        at_least("compaction.bins", self.compaction.bins as u64, 2)?;
        at_least("compaction.every", self.compaction.every, 1)?;
        positive("thresholds.bl", self.thresholds.bl)?;
        if !(0.0..=1.0).contains(&self.thresholds.pass_fraction) {
            return Err(semantic("thresholds.pass_fraction", format!("must lie in [0, 1], got {}", self.thresholds.pass_fraction)));
        }
        at_least("validation.samples", self.validation.samples as u64, 1)?;
        positive("validation.tol", self.validation.tol)?;
        if let Some(p) = self.game.perturb {
            if !p.epsilon.is_finite() {
                return Err(semantic("game.perturb.epsilon", "must be finite"));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| HarnessError::Config(format!("serializing config: {e}")))
    }
}

/// Parses and validates a TOML config, filling defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_config(&text).map_err(|e| match e {
        HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}
