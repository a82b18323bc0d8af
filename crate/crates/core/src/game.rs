//! Continuous-action games, utility slices and potential validation.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, contract, domain, Result};
use crate::measure::{FiniteMeasure, Interval, PROBABILITY_TOL};

/// `u^i(a)` for player `i` at a full action profile.
pub type UtilityFn = Arc<dyn Fn(usize, &[f64]) -> f64 + Send + Sync>;
/// `φ(a)` at a full action profile.
pub type PotentialFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Opponent products larger than this are integrated by Monte Carlo.
pub const EXACT_PRODUCT_LIMIT: usize = 1_000_000;
/// Opponent tuples drawn on the Monte Carlo path.
pub const MONTE_CARLO_DRAWS: usize = 100_000;
const MONTE_CARLO_SEED: u64 = 0x5eed_1e55;

/// An `N`-player game with interval action sets.
///
/// Evaluators must be pure; the spec is immutable once built and cheap to
/// clone.
#[derive(Clone)]
pub struct GameSpec {
    name: String,
    intervals: Vec<Interval>,
    utility: UtilityFn,
    potential: Option<PotentialFn>,
    u_bound: f64,
    lip_bound: f64,
}

impl fmt::Debug for GameSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GameSpec")
            .field("name", &self.name)
            .field("intervals", &self.intervals)
            .field("has_potential", &self.potential.is_some())
            .field("u_bound", &self.u_bound)
            .field("lip_bound", &self.lip_bound)
            .finish()
    }
}

impl GameSpec {
    pub fn new(
        name: impl Into<String>,
        intervals: Vec<Interval>,
        utility: UtilityFn,
        u_bound: f64,
        lip_bound: f64,
    ) -> Result<Self> {
        if intervals.is_empty() {
            return Err(config!("a game needs at least one player"));
        }
        for (what, v) in [("u_bound", u_bound), ("lip_bound", lip_bound)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(config!("{what} must be finite and positive, got {v}"));
            }
        }
        Ok(Self { name: name.into(), intervals, utility, potential: None, u_bound, lip_bound })
    }

    pub fn with_potential(mut self, potential: PotentialFn) -> Self {
        self.potential = Some(potential);
        self
    }

    pub fn without_potential(mut self) -> Self {
        self.potential = None;
        self
    }

    /// Adds `bump(a)` to player `i`'s utility, leaving the potential alone.
    /// Used to build counterexamples for the potential validator.
    pub fn perturbed(mut self, player: usize, bump: PotentialFn, extra_bound: f64) -> Self {
        let base = self.utility.clone();
        self.utility = Arc::new(move |i, a| base(i, a) + if i == player { bump(a) } else { 0.0 });
        self.u_bound += extra_bound.abs();
        self.name = format!("{}+perturbed", self.name);
        self
    }

    /// The identical-interest game in which every player's utility is `φ`.
    /// Logit responses and the Lyapunov function of a potential game are
    /// evaluated in this game.
    pub fn identical_interest(&self) -> Result<GameSpec> {
        let phi = self.potential.clone().ok_or_else(|| config!("game '{}' has no potential function", self.name))?;
        let utility_phi = phi.clone();
        // φ is only defined up to a constant, so its range may exceed u_bound.
        let bound = self.u_bound * (self.n_players() as f64 + 1.0);
        Ok(GameSpec {
            name: format!("{}/identical-interest", self.name),
            intervals: self.intervals.clone(),
            utility: Arc::new(move |_, a| utility_phi(a)),
            potential: Some(phi),
            u_bound: bound,
            lip_bound: self.lip_bound,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_players(&self) -> usize {
        self.intervals.len()
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn interval(&self, i: usize) -> Interval {
        self.intervals[i]
    }

    pub fn u_bound(&self) -> f64 {
        self.u_bound
    }

    pub fn lip_bound(&self) -> f64 {
        self.lip_bound
    }

    pub fn has_potential(&self) -> bool {
        self.potential.is_some()
    }

    pub fn utility(&self, i: usize, profile: &[f64]) -> f64 {
        (self.utility)(i, profile)
    }

    pub fn potential(&self, profile: &[f64]) -> Option<f64> {
        self.potential.as_ref().map(|phi| phi(profile))
    }

    pub fn check_profile(&self, profile: &[f64]) -> Result<()> {
        if profile.len() != self.n_players() {
            return Err(domain!("profile has {} actions for {} players", profile.len(), self.n_players()));
        }
        for (i, (&a, iv)) in profile.iter().zip(&self.intervals).enumerate() {
            iv.check(a, &format!("action of player {i}"))?;
        }
        Ok(())
    }

    fn check_player(&self, i: usize) -> Result<()> {
        if i < self.n_players() {
            Ok(())
        } else {
            Err(domain!("player {i} does not exist in a {}-player game", self.n_players()))
        }
    }
}

/// Inserts `a` as player `i`'s action into the opponents' actions.
fn splice(others: &[f64], i: usize, buf: &mut Vec<f64>) {
    buf.clear();
    buf.extend_from_slice(&others[..i]);
    buf.push(0.0);
    buf.extend_from_slice(&others[i..]);
}

/// `u^i(a, a^{-i})` at the `grid` uniform nodes of player `i`'s interval.
/// `others` holds the opponents' actions in player order with `i` skipped.
pub fn utility_slice(game: &GameSpec, i: usize, grid: usize, others: &[f64]) -> Result<Vec<f64>> {
    game.check_player(i)?;
    if grid < 2 {
        return Err(domain!("slice grid needs at least 2 nodes, got {grid}"));
    }
    if others.len() + 1 != game.n_players() {
        return Err(domain!("expected {} opponent actions, got {}", game.n_players() - 1, others.len()));
    }
    for (j, &a) in others.iter().enumerate() {
        let player = if j < i { j } else { j + 1 };
        game.interval(player).check(a, &format!("action of player {player}"))?;
    }
    let iv = game.interval(i);
    let mut profile = Vec::with_capacity(game.n_players());
    splice(others, i, &mut profile);
    Ok((0..grid)
        .map(|k| {
            profile[i] = iv.node(k, grid);
            game.utility(i, &profile)
        })
        .collect())
}

/// How an expected utility slice was integrated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Estimator {
    /// Weighted sum over the full product of opponent quadrature points.
    Exact,
    /// Sampled opponent tuples; `std_error` is the largest per-node standard error.
    MonteCarlo { draws: usize, std_error: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedSlice {
    pub values: Vec<f64>,
    pub estimator: Estimator,
}

/// `u^i(a, π^{-i})` at the grid nodes of player `i`'s interval.
///
/// `opponents` holds the opponents' strategies in player order with `i`
/// skipped. The expectation is exact over the product of opponent
/// quadrature points while that product has at most
/// [`EXACT_PRODUCT_LIMIT`] elements, and otherwise a Monte Carlo average of
/// [`MONTE_CARLO_DRAWS`] tuples with a fixed seed.
pub fn expected_utility_slice<M: FiniteMeasure>(
    game: &GameSpec,
    i: usize,
    grid: usize,
    opponents: &[M],
) -> Result<ExpectedSlice> {
    game.check_player(i)?;
    if grid < 2 {
        return Err(domain!("slice grid needs at least 2 nodes, got {grid}"));
    }
    if opponents.len() + 1 != game.n_players() {
        return Err(domain!("expected {} opponent strategies, got {}", game.n_players() - 1, opponents.len()));
    }
    let mut rules = Vec::with_capacity(opponents.len());
    for (j, mu) in opponents.iter().enumerate() {
        let player = if j < i { j } else { j + 1 };
        if mu.interval() != game.interval(player) {
            return Err(domain!("strategy of player {player} lives on {:?}, not {:?}", mu.interval(), game.interval(player)));
        }
        let mass = mu.total_mass();
        if (mass - 1.0).abs() > PROBABILITY_TOL {
            return Err(contract!("strategy of player {player} has total mass {mass}, expected 1"));
        }
        rules.push(mu.quadrature().into_iter().filter(|(_, w)| *w > 0.0).collect::<Vec<_>>());
    }
    let product = rules.iter().try_fold(1usize, |acc, r| acc.checked_mul(r.len()));
    let iv = game.interval(i);
    let nodes = iv.nodes(grid);
    match product {
        Some(size) if size <= EXACT_PRODUCT_LIMIT => {
            let mut values = vec![0.0; grid];
            let mut profile = vec![0.0; game.n_players()];
            for_each_tuple(&rules, |actions, weight| {
                fill_opponents(&mut profile, actions, i);
                for (v, &a) in values.iter_mut().zip(&nodes) {
                    profile[i] = a;
                    *v += weight * game.utility(i, &profile);
                }
            });
            Ok(ExpectedSlice { values, estimator: Estimator::Exact })
        }
        _ => Ok(monte_carlo_slice(game, i, &nodes, &rules)),
    }
}

fn fill_opponents(profile: &mut [f64], actions: &[f64], i: usize) {
    for (j, &a) in actions.iter().enumerate() {
        profile[if j < i { j } else { j + 1 }] = a;
    }
}

/// Calls `f(actions, weight)` for every element of the product of rules.
pub(crate) fn for_each_tuple(rules: &[Vec<(f64, f64)>], mut f: impl FnMut(&[f64], f64)) {
    if rules.is_empty() {
        f(&[], 1.0);
        return;
    }
    if rules.iter().any(|r| r.is_empty()) {
        return;
    }
    let n = rules.len();
    let mut idx = vec![0usize; n];
    let mut actions: Vec<f64> = rules.iter().map(|r| r[0].0).collect();
    loop {
        let weight: f64 = idx.iter().zip(rules).map(|(&k, r)| r[k].1).product();
        f(&actions, weight);
        let mut d = n;
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < rules[d].len() {
                actions[d] = rules[d][idx[d]].0;
                break;
            }
            idx[d] = 0;
            actions[d] = rules[d][0].0;
        }
    }
}

/// Inverse-CDF sampler over a discrete quadrature rule.
pub(crate) struct Categorical {
    points: Vec<f64>,
    cdf: Vec<f64>,
}

impl Categorical {
    pub(crate) fn new(rule: &[(f64, f64)]) -> Self {
        let mut acc = 0.0;
        let cdf = rule
            .iter()
            .map(|(_, w)| {
                acc += w;
                acc
            })
            .collect();
        Self { points: rule.iter().map(|p| p.0).collect(), cdf }
    }

    pub(crate) fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let total = *self.cdf.last().expect("non-empty rule");
        let u = rng.random::<f64>() * total;
        let k = self.cdf.partition_point(|&c| c <= u).min(self.points.len() - 1);
        self.points[k]
    }
}

fn monte_carlo_slice(game: &GameSpec, i: usize, nodes: &[f64], rules: &[Vec<(f64, f64)>]) -> ExpectedSlice {
    let samplers: Vec<Categorical> = rules.iter().map(|r| Categorical::new(r)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(MONTE_CARLO_SEED);
    let mut sum = vec![0.0; nodes.len()];
    let mut sum_sq = vec![0.0; nodes.len()];
    let mut profile = vec![0.0; game.n_players()];
    let mut actions = vec![0.0; samplers.len()];
    for _ in 0..MONTE_CARLO_DRAWS {
        for (a, s) in actions.iter_mut().zip(&samplers) {
            *a = s.draw(&mut rng);
        }
        fill_opponents(&mut profile, &actions, i);
        for (k, &a) in nodes.iter().enumerate() {
            profile[i] = a;
            let u = game.utility(i, &profile);
            sum[k] += u;
            sum_sq[k] += u * u;
        }
    }
    let n = MONTE_CARLO_DRAWS as f64;
    let mut std_error = 0.0f64;
    let values = sum
        .iter()
        .zip(&sum_sq)
        .map(|(s, q)| {
            let mean = s / n;
            let var = (q / n - mean * mean).max(0.0) * n / (n - 1.0);
            std_error = std_error.max((var / n).sqrt());
            mean
        })
        .collect();
    ExpectedSlice { values, estimator: Estimator::MonteCarlo { draws: MONTE_CARLO_DRAWS, std_error } }
}

/// Outcome of [`validate_potential`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialReport {
    pub samples: usize,
    pub tol: f64,
    pub max_residual: f64,
    pub pass: bool,
}

/// Checks `u^i(a, a^{-i}) − u^i(ã, a^{-i}) = φ(a, a^{-i}) − φ(ã, a^{-i})` on
/// random unilateral deviations.
pub fn validate_potential<R: Rng + ?Sized>(game: &GameSpec, samples: usize, tol: f64, rng: &mut R) -> Result<PotentialReport> {
    let phi = game.potential.as_ref().ok_or_else(|| config!("game '{}' has no potential function", game.name))?;
    if samples == 0 {
        return Err(domain!("potential validation needs at least one sample"));
    }
    let n = game.n_players();
    let draw = |rng: &mut R, iv: &Interval| iv.lo() + rng.random::<f64>() * iv.width();
    let mut worst = 0.0f64;
    let mut a = vec![0.0; n];
    for _ in 0..samples {
        let i = rng.random_range(0..n);
        for (x, iv) in a.iter_mut().zip(&game.intervals) {
            *x = draw(rng, iv);
        }
        let mut dev = a.clone();
        dev[i] = draw(rng, &game.intervals[i]);
        let du = game.utility(i, &a) - game.utility(i, &dev);
        let dphi = phi(&a) - phi(&dev);
        worst = worst.max((du - dphi).abs());
    }
    Ok(PotentialReport { samples, tol, max_residual: worst, pass: worst <= tol })
}

/// Wonderful Life Utility game: `u^i(a) = G(a) − G(baseline^i, a^{-i})`,
/// whose potential is `G` itself.
pub fn wlu_game(
    global: PotentialFn,
    baselines: Vec<f64>,
    intervals: Vec<Interval>,
    u_bound: f64,
    lip_bound: f64,
) -> Result<GameSpec> {
    if baselines.len() != intervals.len() {
        return Err(domain!("{} baselines for {} players", baselines.len(), intervals.len()));
    }
    for (i, (&b, iv)) in baselines.iter().zip(&intervals).enumerate() {
        iv.check(b, &format!("baseline of player {i}"))?;
    }
    let g = global.clone();
    let utility: UtilityFn = Arc::new(move |i, a| {
        let mut base = a.to_vec();
        base[i] = baselines[i];
        g(a) - g(&base)
    });
    Ok(GameSpec::new("wlu", intervals, utility, u_bound, lip_bound)?.with_potential(global))
}

/// Numeric parameters for the builtin games. Unset fields take the defaults
/// listed on each builtin.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuiltinParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baselines: Option<Vec<f64>>,
}

pub const BUILTIN_NAMES: [&str; 3] = ["quadratic_coordination", "cournot_linear", "wlu_quadratic"];

/// Builds one of the test-corpus games.
///
/// * `quadratic_coordination`: players on `[0,1]`, identical interest
///   `u^i = φ(a) = −Σ(a^i − θ^i)² − κ Σ_{i<j}(a^i − a^j)²`.
///   Defaults: `n = 2`, `θ^i = 0.5`, `κ = 1`.
/// * `cournot_linear`: quantities on `[0, q_max]`,
///   `u^i = a^i(P − Σ_j a^j) − c·a^i` with potential
///   `φ = PΣa^i − Σ(a^i)² − Σ_{i<j}a^i a^j − cΣa^i`.
///   Defaults: `n = 2`, `P = 1`, `c = 0.1`, `q_max = 1`.
/// * `wlu_quadratic`: WLU game built from the `quadratic_coordination`
///   objective with baselines (default: the interval's lower end).
pub fn builtin(name: &str, params: &BuiltinParams) -> Result<GameSpec> {
    match name {
        "quadratic_coordination" => {
            let (theta, kappa) = quadratic_params(params)?;
            let n = theta.len();
            let (phi, bound, lip) = quadratic_objective(theta, kappa);
            let u_phi = phi.clone();
            let utility: UtilityFn = Arc::new(move |_, a| u_phi(a));
            Ok(GameSpec::new(name, vec![Interval::unit(); n], utility, bound, lip)?.with_potential(phi))
        }
        "cournot_linear" => {
            let n = params.n.unwrap_or(2);
            let price = params.price.unwrap_or(1.0);
            let cost = params.cost.unwrap_or(0.1);
            let q_max = params.q_max.unwrap_or(1.0);
            if n == 0 {
                return Err(config!("cournot_linear needs n >= 1"));
            }
            if !(q_max.is_finite() && q_max > 0.0) || !price.is_finite() || !cost.is_finite() {
                return Err(config!("cournot_linear needs finite price/cost and q_max > 0"));
            }
            let utility: UtilityFn = Arc::new(move |i, a| {
                let total: f64 = a.iter().sum();
                a[i] * (price - total) - cost * a[i]
            });
            let phi: PotentialFn = Arc::new(move |a| {
                let sum: f64 = a.iter().sum();
                let sq: f64 = a.iter().map(|x| x * x).sum();
                // Σ_{i<j} a^i a^j = ((Σa)² − Σa²)/2
                price * sum - sq - 0.5 * (sum * sum - sq) - cost * sum
            });
            let nf = n as f64;
            let bound = q_max * ((price - cost).abs() + nf * q_max);
            let lip = (price - cost).abs() + (nf + 1.0) * q_max;
            let iv = Interval::new(0.0, q_max)?;
            Ok(GameSpec::new(name, vec![iv; n], utility, bound, lip)?.with_potential(phi))
        }
        "wlu_quadratic" => {
            let (theta, kappa) = quadratic_params(params)?;
            let n = theta.len();
            let baselines = match &params.baselines {
                Some(b) => b.clone(),
                None => vec![0.0; n],
            };
            let (phi, bound, lip) = quadratic_objective(theta, kappa);
            let mut game = wlu_game(phi, baselines, vec![Interval::unit(); n], 2.0 * bound, 2.0 * lip)?;
            game.name = name.to_string();
            Ok(game)
        }
        other => Err(config!("unknown builtin game '{other}' (expected one of {})", BUILTIN_NAMES.join(", "))),
    }
}

fn quadratic_params(params: &BuiltinParams) -> Result<(Vec<f64>, f64)> {
    let n = params.n.or(params.theta.as_ref().map(Vec::len)).unwrap_or(2);
    if n == 0 {
        return Err(config!("quadratic games need n >= 1"));
    }
    let theta = params.theta.clone().unwrap_or_else(|| vec![0.5; n]);
    if theta.len() != n {
        return Err(config!("theta has {} entries for n = {n}", theta.len()));
    }
    if theta.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(config!("theta entries must lie in [0, 1]"));
    }
    let kappa = params.kappa.unwrap_or(1.0);
    if !kappa.is_finite() || kappa < 0.0 {
        return Err(config!("kappa must be finite and non-negative, got {kappa}"));
    }
    Ok((theta, kappa))
}

/// `φ(a) = −Σ(a^i − θ^i)² − κ Σ_{i<j}(a^i − a^j)²` on `[0,1]^N`, with its
/// sup-norm and per-coordinate Lipschitz bounds.
fn quadratic_objective(theta: Vec<f64>, kappa: f64) -> (PotentialFn, f64, f64) {
    let n = theta.len();
    let nf = n as f64;
    let far: f64 = theta.iter().map(|t| t.max(1.0 - t)).fold(0.0, f64::max);
    let bound = theta.iter().map(|t| t.max(1.0 - t).powi(2)).sum::<f64>() + kappa * nf * (nf - 1.0) / 2.0;
    let lip = 2.0 * far + 2.0 * kappa * (nf - 1.0);
    let phi: PotentialFn = Arc::new(move |a: &[f64]| {
        let mut v = 0.0;
        for (i, (&x, &t)) in a.iter().zip(&theta).enumerate() {
            v -= (x - t) * (x - t);
            for &y in &a[i + 1..] {
                v -= kappa * (x - y) * (x - y);
            }
        }
        v
    });
    // Positive bounds keep GameSpec::new happy for the degenerate θ, κ = 0 case.
    (phi, bound.max(f64::EPSILON), lip.max(f64::EPSILON))
}
