//! Two-timescale actor-critic learning with logit responses.
//!
//! Each player keeps an atomic mixed strategy (the actor) and a grid critic.
//! One iteration samples actions from the actors, moves every critic towards
//! the realized utility slice with step `γ_n`, draws a logit response from the
//! updated critic and mixes it into the actor with step `α_n`.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{lyapunov, DensityProfile};
use crate::error::{config, domain, Result};
use crate::game::{expected_utility_slice, utility_slice, GameSpec};
use crate::logit::{logit_density, sample_logit, CriticFn, DEFAULT_GRID};
use crate::measure::{profile_distance, trapezoid, AtomicMeasure, GridDensity};

/// BL resolution used for distances to reference equilibria.
pub const REFERENCE_BL_RESOLUTION: usize = 512;

/// Step sizes `α_n = a0(n + n0)^{−ρ_α}` (actor) and `γ_n = g0(n + n0)^{−ρ_γ}` (critic).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleRepr")]
pub struct StepSchedule {
    pub a0: f64,
    pub g0: f64,
    pub rho_alpha: f64,
    pub rho_gamma: f64,
    pub n0: u64,
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ScheduleRepr {
    a0: f64,
    g0: f64,
    rho_alpha: f64,
    rho_gamma: f64,
    n0: u64,
}

impl Default for ScheduleRepr {
    fn default() -> Self {
        let s = StepSchedule::default();
        Self { a0: s.a0, g0: s.g0, rho_alpha: s.rho_alpha, rho_gamma: s.rho_gamma, n0: s.n0 }
    }
}

impl TryFrom<ScheduleRepr> for StepSchedule {
    type Error = crate::Error;

    fn try_from(r: ScheduleRepr) -> Result<Self> {
        StepSchedule::new(r.a0, r.g0, r.rho_alpha, r.rho_gamma, r.n0)
    }
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self { a0: 1.0, g0: 1.0, rho_alpha: 1.0, rho_gamma: 0.6, n0: 1 }
    }
}

impl StepSchedule {
    pub fn new(a0: f64, g0: f64, rho_alpha: f64, rho_gamma: f64, n0: u64) -> Result<Self> {
        let s = Self { a0, g0, rho_alpha, rho_gamma, n0 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let Self { a0, g0, rho_alpha, rho_gamma, n0 } = *self;
        if !(a0 > 0.0 && a0.is_finite() && g0 > 0.0 && g0.is_finite()) {
            return Err(config!("schedule: a0 and g0 must be positive and finite, got a0 = {a0}, g0 = {g0}"));
        }
        if n0 < 1 {
            return Err(config!("schedule: n0 must be at least 1"));
        }
        if !(rho_alpha.is_finite() && rho_gamma.is_finite()) {
            return Err(config!("schedule: exponents must be finite, got rho_alpha = {rho_alpha}, rho_gamma = {rho_gamma}"));
        }
        if rho_gamma <= 0.5 {
            return Err(config!(
                "schedule: rho_gamma = {rho_gamma} must exceed 0.5, otherwise the critic steps are not square-summable"
            ));
        }
        if rho_gamma >= rho_alpha {
            return Err(config!(
                "schedule: rho_gamma = {rho_gamma} must be below rho_alpha = {rho_alpha} so that the actor runs on the slower timescale"
            ));
        }
        if rho_alpha > 1.0 {
            return Err(config!("schedule: rho_alpha = {rho_alpha} must be at most 1, otherwise the actor steps are summable"));
        }
        let (alpha, gamma) = self.raw(1);
        if !(alpha <= 1.0 && gamma <= 1.0) {
            return Err(config!("schedule: first steps must lie in (0, 1], got alpha = {alpha}, gamma = {gamma}"));
        }
        Ok(())
    }

    fn raw(&self, n: u64) -> (f64, f64) {
        let t = (n + self.n0) as f64;
        (self.a0 * t.powf(-self.rho_alpha), self.g0 * t.powf(-self.rho_gamma))
    }

    /// `(α_n, γ_n)` for iteration `n ≥ 1`.
    pub fn at(&self, n: u64) -> Result<(f64, f64)> {
        if n == 0 {
            return Err(domain!("step sizes are indexed from n = 1"));
        }
        Ok(self.raw(n))
    }
}

/// `Q + γ(u − Q)` elementwise.
pub fn critic_update(q: &CriticFn, u_slice: &[f64], gamma: f64) -> Result<CriticFn> {
    let mut next = q.clone();
    critic_update_in_place(&mut next, u_slice, gamma)?;
    Ok(next)
}

fn critic_update_in_place(q: &mut CriticFn, u_slice: &[f64], gamma: f64) -> Result<()> {
    if q.len() != u_slice.len() {
        return Err(domain!("critic has {} nodes, utility slice has {}", q.len(), u_slice.len()));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(domain!("critic step gamma must lie in [0, 1], got {gamma}"));
    }
    for (v, u) in q.values_mut().iter_mut().zip(u_slice) {
        *v += gamma * (u - *v);
    }
    Ok(())
}

/// Periodic pooling of actor atoms, see [`AtomicMeasure::compact`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Compaction {
    pub bins: usize,
    pub every: u64,
}

impl Default for Compaction {
    fn default() -> Self {
        Self { bins: 512, every: 1000 }
    }
}

/// Generator for one player: the master seed with the player index as stream.
pub fn player_rng(seed: u64, player: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(player as u64);
    rng
}

#[derive(Debug, Clone)]
pub struct LearnerState {
    iter: u64,
    grid: usize,
    actors: Vec<AtomicMeasure>,
    critics: Vec<CriticFn>,
    rngs: Vec<ChaCha8Rng>,
    compaction: Option<Compaction>,
}

/// Serializable part of a [`LearnerState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub iter: u64,
    pub actors: Vec<AtomicMeasure>,
    pub critics: Vec<CriticFn>,
}

impl LearnerState {
    /// Uniform atoms at the grid nodes, zero critics, per-player streams of `seed`.
    pub fn new(game: &GameSpec, grid: usize, seed: u64) -> Result<Self> {
        if grid < 2 {
            return Err(domain!("grid needs at least 2 nodes, got {grid}"));
        }
        let mut actors = Vec::with_capacity(game.n_players());
        let mut critics = Vec::with_capacity(game.n_players());
        for &iv in game.intervals() {
            actors.push(AtomicMeasure::uniform_atoms(iv, grid)?);
            critics.push(CriticFn::zeros(iv, grid)?);
        }
        let rngs = (0..game.n_players()).map(|i| player_rng(seed, i)).collect();
        Ok(Self { iter: 0, grid, actors, critics, rngs, compaction: None })
    }

    pub fn with_compaction(mut self, compaction: Option<Compaction>) -> Result<Self> {
        if let Some(c) = compaction {
            if c.bins < 2 || c.every == 0 {
                return Err(config!("compaction needs bins >= 2 and every >= 1"));
            }
        }
        self.compaction = compaction;
        Ok(self)
    }

    pub fn iter(&self) -> u64 {
        self.iter
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn actors(&self) -> &[AtomicMeasure] {
        &self.actors
    }

    pub fn critics(&self) -> &[CriticFn] {
        &self.critics
    }

    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot { iter: self.iter, actors: self.actors.clone(), critics: self.critics.clone() }
    }

    fn check_game(&self, game: &GameSpec) -> Result<()> {
        if self.actors.len() != game.n_players() {
            return Err(domain!("state has {} players, game has {}", self.actors.len(), game.n_players()));
        }
        Ok(())
    }

    /// One simultaneous iteration for all players.
    pub fn step(&mut self, game: &GameSpec, eta: f64, schedule: &StepSchedule) -> Result<()> {
        self.check_game(game)?;
        let n = self.iter + 1;
        let (alpha, gamma) = schedule.at(n)?;
        let actions = self
            .actors
            .iter()
            .zip(self.rngs.iter_mut())
            .map(|(actor, rng)| actor.sample(rng))
            .collect::<Result<Vec<f64>>>()?;
        let mut others = Vec::with_capacity(actions.len().saturating_sub(1));
        for i in 0..self.actors.len() {
            others.clear();
            others.extend(actions.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, a)| *a));
            let slice = utility_slice(game, i, self.grid, &others)?;
            critic_update_in_place(&mut self.critics[i], &slice, gamma)?;
            let response = logit_density(&self.critics[i], eta)?;
            let b = sample_logit(&response, &mut self.rngs[i])?;
            self.actors[i].mix_update_in_place(b, alpha)?;
        }
        self.iter = n;
        if let Some(c) = self.compaction {
            if n.is_multiple_of(c.every) {
                for actor in &mut self.actors {
                    *actor = actor.compact(c.bins)?;
                }
            }
        }
        Ok(())
    }
}

/// Per player, the trapezoid L2 norm of `Q^i − u^i(·, π^{-i})`.
pub fn calibration_residual(state: &LearnerState, game: &GameSpec, grid: usize) -> Result<Vec<f64>> {
    state.check_game(game)?;
    (0..game.n_players())
        .map(|i| {
            let critic = &state.critics[i];
            if critic.len() != grid {
                return Err(domain!("critic of player {i} has {} nodes, not {grid}", critic.len()));
            }
            let others: Vec<&AtomicMeasure> =
                state.actors.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, a)| a).collect();
            let slice = expected_utility_slice(game, i, grid, &others)?;
            let sq: Vec<f64> = critic.values().iter().zip(&slice.values).map(|(q, u)| (q - u) * (q - u)).collect();
            Ok(trapezoid(&sq, game.interval(i).grid_step(grid)).sqrt())
        })
        .collect()
}

/// One run record line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iter: u64,
    /// Step sizes the next iteration uses, `α_{iter+1}` and `γ_{iter+1}`.
    pub alpha: f64,
    pub gamma: f64,
    pub residuals: Vec<f64>,
    /// Distance to the nearest reference equilibrium, when references were given.
    pub bl_to_ref: Option<f64>,
    /// Lyapunov function at the grid-smoothed actors, for potential games.
    pub lyapunov: Option<f64>,
    pub elapsed_s: f64,
}

impl Diagnostics {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub eta: f64,
    pub schedule: StepSchedule,
    pub iters: u64,
    pub grid: usize,
    /// Iterations at which to record diagnostics, besides `0` and `iters`.
    pub checkpoints: Vec<u64>,
    pub compaction: Option<Compaction>,
}

impl RunConfig {
    pub fn new(eta: f64, iters: u64) -> Self {
        Self {
            eta,
            schedule: StepSchedule::default(),
            iters,
            grid: DEFAULT_GRID,
            checkpoints: Vec::new(),
            compaction: Some(Compaction::default()),
        }
    }

    /// Adds a checkpoint at every multiple of `every` up to `iters`.
    pub fn every(mut self, every: u64) -> Self {
        if let Some(count) = self.iters.checked_div(every) {
            self.checkpoints.extend((1..=count).map(|k| k * every));
        }
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(config!("eta must be positive and finite, got {}", self.eta));
        }
        self.schedule.validate()?;
        if self.grid < 2 {
            return Err(config!("grid needs at least 2 nodes, got {}", self.grid));
        }
        Ok(())
    }
}

pub struct RunRecord {
    pub seed: u64,
    pub records: Vec<Diagnostics>,
    pub state: LearnerState,
}

impl RunRecord {
    pub fn last(&self) -> &Diagnostics {
        self.records.last().expect("a run always records its initial state")
    }

    pub fn at(&self, iter: u64) -> Option<&Diagnostics> {
        self.records.iter().find(|d| d.iter == iter)
    }
}

/// Runs `cfg.iters` iterations from the initial state for `seed`, handing each
/// diagnostics record to `sink` as soon as it is computed.
pub fn run(
    game: &GameSpec,
    cfg: &RunConfig,
    seed: u64,
    reference: Option<&[Vec<GridDensity>]>,
    mut sink: impl FnMut(&Diagnostics) -> Result<()>,
) -> Result<RunRecord> {
    cfg.validate()?;
    let started = Instant::now();
    let mut state = LearnerState::new(game, cfg.grid, seed)?.with_compaction(cfg.compaction)?;
    let mut marks: Vec<u64> = cfg.checkpoints.iter().copied().filter(|&c| c > 0 && c < cfg.iters).collect();
    marks.push(cfg.iters);
    marks.sort_unstable();
    marks.dedup();
    let mut records = Vec::with_capacity(marks.len() + 1);
    let mut record = |state: &LearnerState, records: &mut Vec<Diagnostics>| -> Result<()> {
        let d = diagnose(state, game, cfg, reference, started)?;
        sink(&d)?;
        records.push(d);
        Ok(())
    };
    record(&state, &mut records)?;
    for mark in marks {
        while state.iter < mark {
            state.step(game, cfg.eta, &cfg.schedule)?;
        }
        if mark > 0 {
            record(&state, &mut records)?;
        }
    }
    Ok(RunRecord { seed, records, state })
}

fn diagnose(
    state: &LearnerState,
    game: &GameSpec,
    cfg: &RunConfig,
    reference: Option<&[Vec<GridDensity>]>,
    started: Instant,
) -> Result<Diagnostics> {
    let (alpha, gamma) = cfg.schedule.at(state.iter + 1)?;
    let residuals = calibration_residual(state, game, cfg.grid)?;
    let bl_to_ref = match reference {
        Some(components) if !components.is_empty() => {
            let mut best = f64::INFINITY;
            for c in components {
                best = best.min(profile_distance(&state.actors, c, REFERENCE_BL_RESOLUTION)?);
            }
            Some(best)
        }
        _ => None,
    };
    let lyapunov = if game.has_potential() {
        let smooth = state.actors.iter().map(|a| GridDensity::smooth_atoms(a, cfg.grid)).collect::<Result<Vec<_>>>()?;
        Some(lyapunov(&DensityProfile::new(smooth)?, game, cfg.eta)?)
    } else {
        None
    };
    Ok(Diagnostics { iter: state.iter, alpha, gamma, residuals, bl_to_ref, lyapunov, elapsed_s: started.elapsed().as_secs_f64() })
}
