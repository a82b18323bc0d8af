//! Logit (Gibbs) best responses and logit equilibria.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::game::{expected_utility_slice, GameSpec};
use crate::measure::{l1_distance, profile_distance, trapezoid, FiniteMeasure, GridDensity, Interval};

/// Default quadrature grid for critics, logit responses and equilibria.
pub const DEFAULT_GRID: usize = 256;
/// Grid resolution used when comparing restart results.
pub const COMPONENT_BL_RESOLUTION: usize = 256;

/// A value function sampled at the uniform nodes of an interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CriticRepr", into = "CriticRepr")]
pub struct CriticFn {
    interval: Interval,
    values: Vec<f64>,
}

impl CriticFn {
    pub fn new(interval: Interval, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(domain!("critic grid needs at least 2 nodes, got {}", values.len()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(domain!("critic values must be finite, found {v}"));
        }
        Ok(Self { interval, values })
    }

    pub fn zeros(interval: Interval, m: usize) -> Result<Self> {
        Self::new(interval, vec![0.0; m])
    }

    pub fn from_fn(interval: Interval, m: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(interval, interval.nodes(m).into_iter().map(f).collect())
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CriticRepr {
    interval: Interval,
    grid: usize,
    values: Vec<f64>,
}

impl TryFrom<CriticRepr> for CriticFn {
    type Error = crate::Error;

    fn try_from(r: CriticRepr) -> Result<Self> {
        if r.grid != r.values.len() {
            return Err(domain!("grid size {} does not match {} values", r.grid, r.values.len()));
        }
        CriticFn::new(r.interval, r.values)
    }
}

impl From<CriticFn> for CriticRepr {
    fn from(c: CriticFn) -> Self {
        CriticRepr { interval: c.interval, grid: c.values.len(), values: c.values }
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(domain!("noise level eta must be positive and finite, got {eta}"))
    }
}

/// Gibbs density `exp(q/η) / ∫exp(q/η)` on the critic's grid.
///
/// The maximum is subtracted before exponentiating and the normalizer is the
/// trapezoid integral, so the result integrates to one on its own grid.
pub fn logit_density(q: &CriticFn, eta: f64) -> Result<GridDensity> {
    check_eta(eta)?;
    let top = q.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = q.values.iter().map(|v| ((v - top) / eta).exp()).collect();
    let z = trapezoid(&unnorm, q.interval.grid_step(q.len()));
    Ok(GridDensity::from_raw(q.interval, unnorm.into_iter().map(|e| e / z).collect()))
}

/// Inverse-CDF draw from a logit density (piecewise linear between nodes).
pub fn sample_logit<R: Rng + ?Sized>(p: &GridDensity, rng: &mut R) -> Result<f64> {
    p.sample(rng)
}

/// `L_η(π)`: every player's logit response to the others' strategies.
pub fn logit_response_profile<M: FiniteMeasure>(
    game: &GameSpec,
    profile: &[M],
    eta: f64,
    grid: usize,
) -> Result<Vec<GridDensity>> {
    check_eta(eta)?;
    if profile.len() != game.n_players() {
        return Err(domain!("profile has {} strategies for {} players", profile.len(), game.n_players()));
    }
    (0..game.n_players())
        .map(|i| {
            let others: Vec<&M> = profile.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, m)| m).collect();
            let slice = expected_utility_slice(game, i, grid, &others)?;
            logit_density(&CriticFn::new(game.interval(i), slice.values)?, eta)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointOptions {
    /// Weight `λ ∈ (0, 1]` on the new response in each damped step.
    pub damping: f64,
    /// Stop once the largest per-player l1 change of a step is below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self { damping: 0.5, tol: 1e-9, max_iter: 10_000 }
    }
}

impl FixedPointOptions {
    fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(domain!("damping must lie in (0, 1], got {}", self.damping));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(domain!("tolerance must be positive, got {}", self.tol));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub profile: Vec<GridDensity>,
    pub converged: bool,
    pub iterations: usize,
    /// `max_i l1(π^i, L^i_η(π^{-i}))` at the returned profile.
    pub residual: f64,
}

/// Largest per-player l1 gap between a profile and its logit response.
pub fn response_residual(profile: &[GridDensity], response: &[GridDensity]) -> Result<f64> {
    let mut worst = 0.0f64;
    for (p, l) in profile.iter().zip(response) {
        worst = worst.max(l1_distance(p, l)?);
    }
    Ok(worst)
}

/// Damped iteration `π ← (1 − λ)π + λ L_η(π)` from `init` (uniform by default).
///
/// The iteration stops when the step it would take, `λ·max_i l1(π^i, L^i)`,
/// drops below `tol`; a profile that is already a fixed point therefore
/// returns after zero updates. Hitting `max_iter` is reported through
/// `converged = false`, not as an error.
pub fn logit_fixed_point(
    game: &GameSpec,
    eta: f64,
    grid: usize,
    opts: &FixedPointOptions,
    init: Option<Vec<GridDensity>>,
) -> Result<FixedPoint> {
    opts.validate()?;
    check_eta(eta)?;
    let mut profile = match init {
        Some(p) => {
            if p.len() != game.n_players() {
                return Err(domain!("initial profile has {} players, game has {}", p.len(), game.n_players()));
            }
            for (i, d) in p.iter().enumerate() {
                if d.interval() != game.interval(i) || d.len() != grid {
                    return Err(domain!("initial density of player {i} is not on the solver grid"));
                }
            }
            p
        }
        None => uniform_profile(game, grid)?,
    };
    let mut iterations = 0;
    loop {
        let response = logit_response_profile(game, &profile, eta, grid)?;
        let residual = response_residual(&profile, &response)?;
        let converged = opts.damping * residual < opts.tol;
        if converged || iterations >= opts.max_iter {
            return Ok(FixedPoint { profile, converged, iterations, residual });
        }
        profile = profile.iter().zip(&response).map(|(p, l)| p.blend(l, opts.damping)).collect::<Result<_>>()?;
        iterations += 1;
    }
}

pub fn uniform_profile(game: &GameSpec, grid: usize) -> Result<Vec<GridDensity>> {
    game.intervals().iter().map(|&iv| GridDensity::uniform(iv, grid)).collect()
}

/// A smooth random starting density: Gibbs weights of a short random cosine series.
fn random_density<R: Rng + ?Sized>(iv: Interval, grid: usize, rng: &mut R) -> Result<GridDensity> {
    let coeffs: Vec<f64> = (1..=4).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect();
    let values = iv
        .nodes(grid)
        .into_iter()
        .map(|x| {
            let t = (x - iv.lo()) / iv.width();
            let s: f64 = coeffs.iter().enumerate().map(|(k, c)| c * ((k + 1) as f64 * std::f64::consts::PI * t).cos()).sum();
            s.exp()
        })
        .collect();
    GridDensity::normalized(iv, values)
}

/// One distinct logit equilibrium found by the restart search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub profile: Vec<GridDensity>,
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Number of restarts that landed on this component.
    pub multiplicity: usize,
}

/// Result of a multi-start equilibrium search, in the on-disk layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSet {
    pub eta: f64,
    pub grid: usize,
    pub restarts: usize,
    pub all_converged: bool,
    pub components: Vec<Component>,
}

/// Runs [`logit_fixed_point`] from `restarts` starting profiles (the first
/// uniform, the rest random with per-restart seeded streams) in parallel, and
/// merges results whose profile distance is below `10·tol`.
pub fn solve_equilibria(
    game: &GameSpec,
    eta: f64,
    grid: usize,
    opts: &FixedPointOptions,
    restarts: usize,
    seed: u64,
) -> Result<EquilibriumSet> {
    if restarts == 0 {
        return Err(domain!("at least one restart is required"));
    }
    let runs: Vec<FixedPoint> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let init = if r == 0 {
                None
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(r as u64);
                Some(game.intervals().iter().map(|&iv| random_density(iv, grid, &mut rng)).collect::<Result<Vec<_>>>()?)
            };
            logit_fixed_point(game, eta, grid, opts, init)
        })
        .collect::<Result<_>>()?;
    let all_converged = runs.iter().all(|r| r.converged);
    let mut components: Vec<Component> = Vec::new();
    for run in runs {
        let mut merged = false;
        for c in components.iter_mut() {
            if profile_distance(&c.profile, &run.profile, COMPONENT_BL_RESOLUTION)? < 10.0 * opts.tol {
                c.multiplicity += 1;
                merged = true;
                break;
            }
        }
        if !merged {
            components.push(Component {
                profile: run.profile,
                residual: run.residual,
                converged: run.converged,
                iterations: run.iterations,
                multiplicity: 1,
            });
        }
    }
    Ok(EquilibriumSet { eta, grid, restarts, all_converged, components })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{builtin, BuiltinParams};
    use crate::measure::AtomicMeasure;

    fn unit_critic(m: usize, f: impl Fn(f64) -> f64) -> CriticFn {
        CriticFn::from_fn(Interval::unit(), m, f).unwrap()
    }

    #[test]
    fn constant_critic_gives_uniform_density() {
        let iv = Interval::new(0.0, 4.0).unwrap();
        let p = logit_density(&CriticFn::new(iv, vec![2.5; 33]).unwrap(), 0.3).unwrap();
        assert!(p.values().iter().all(|v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn rejects_non_positive_eta() {
        let q = unit_critic(5, |x| x);
        assert!(matches!(logit_density(&q, 0.0), Err(crate::Error::Domain(_))));
        assert!(logit_density(&q, -1.0).is_err());
    }

    #[test]
    fn shift_invariance() {
        // dyadic critic values keep q + c exact in floating point
        let q = unit_critic(65, |x| (x * 64.0).round() / 1024.0);
        let eta = 0.25;
        let base = logit_density(&q, eta).unwrap();
        for c in [1.0, -3.0, 1e3, 2.5e5] {
            let shifted = CriticFn::new(q.interval(), q.values().iter().map(|v| v + c).collect()).unwrap();
            let p = logit_density(&shifted, eta).unwrap();
            for (a, b) in base.values().iter().zip(p.values()) {
                assert!((a - b).abs() <= 1e-12, "c = {c}");
            }
        }
    }

    #[test]
    fn exponential_critic_matches_analytic_normalization() {
        // q(a) = a, η = 1: density e^a/(e − 1), peak e/(e − 1) ≈ 1.58198
        let p = logit_density(&unit_critic(1024, |x| x), 1.0).unwrap();
        let e = std::f64::consts::E;
        let peak = *p.values().last().unwrap();
        assert!((peak - e / (e - 1.0)).abs() < 1e-6, "{peak}");
        assert!((p.integral() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn density_respects_lower_bound_and_large_eta_limit() {
        let game = builtin("quadratic_coordination", &BuiltinParams::default()).unwrap();
        let iv = Interval::unit();
        let q = unit_critic(256, |x| -(x - 0.2).powi(2) - 0.7 * x);
        for eta in [0.05, 0.1, 1.0] {
            let p = logit_density(&q, eta).unwrap();
            let floor = (-2.0 * game.u_bound() / eta).exp() / iv.width();
            assert!(p.values().iter().all(|&v| v >= 0.9 * floor));
            assert!((p.integral() - 1.0).abs() < 1e-12);
        }
        let flat = logit_density(&q, 1e4 * game.u_bound()).unwrap();
        let u = GridDensity::uniform(iv, 256).unwrap();
        assert!(l1_distance(&flat, &u).unwrap() < 1e-3);
    }

    #[test]
    fn sharp_logit_concentrates_near_argmax() {
        let m = 256;
        let q = unit_critic(m, |x| -(x - 0.6).abs());
        let p = logit_density(&q, 0.001).unwrap();
        let h = p.step();
        let argmax = p.values().iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        let centre = Interval::unit().node(argmax, m);
        // mass within two cells, computed from the density itself
        let within = p.cdf(centre + 2.0 * h) - p.cdf(centre - 2.0 * h);
        assert!(within >= 0.99, "{within}");
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let hits = (0..10_000).filter(|_| (sample_logit(&p, &mut rng).unwrap() - centre).abs() <= 2.0 * h).count();
        assert!(hits >= 9_900, "{hits}");
    }

    #[test]
    fn uniform_sampling_passes_ks() {
        let p = GridDensity::uniform(Interval::unit(), 256).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 10_000;
        let mut xs: Vec<f64> = (0..n).map(|_| sample_logit(&p, &mut rng).unwrap()).collect();
        xs.sort_by(f64::total_cmp);
        let d = xs
            .iter()
            .enumerate()
            .map(|(k, &x)| (x - k as f64 / n as f64).abs().max(((k + 1) as f64 / n as f64 - x).abs()))
            .fold(0.0, f64::max);
        // asymptotic KS critical value at α = 0.01
        assert!(d < 1.628 / (n as f64).sqrt(), "D = {d}");
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let p = logit_density(&unit_critic(64, |x| x.sin()), 0.2).unwrap();
        let draws = |s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            (0..100).map(|_| sample_logit(&p, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draws(1), draws(1));
    }

    #[test]
    fn single_player_response_is_gibbs_of_utility() {
        let params = BuiltinParams { n: Some(1), theta: Some(vec![0.3]), kappa: Some(0.0), ..Default::default() };
        let game = builtin("quadratic_coordination", &params).unwrap();
        let u = GridDensity::uniform(Interval::unit(), 64).unwrap();
        let resp = logit_response_profile(&game, &[u], 0.1, 64).unwrap();
        let direct = logit_density(&unit_critic(64, |x| -(x - 0.3).powi(2)), 0.1).unwrap();
        assert!(l1_distance(&resp[0], &direct).unwrap() < 1e-14);
    }

    #[test]
    fn symmetric_game_and_profile_give_symmetric_response() {
        let game = builtin("quadratic_coordination", &BuiltinParams::default()).unwrap();
        let iv = Interval::unit();
        let p = GridDensity::normalized(iv, iv.nodes(128).iter().map(|x| 1.0 + x).collect()).unwrap();
        let resp = logit_response_profile(&game, &[p.clone(), p], 0.1, 128).unwrap();
        for (a, b) in resp[0].values().iter().zip(resp[1].values()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn response_matches_refined_double_integral() {
        // Oracle: integrate the opponent density by the midpoint rule on a
        // grid twice as fine, interpolating the density linearly, then
        // normalize the Gibbs weights by Simpson's rule on the same nodes.
        let game = builtin("quadratic_coordination", &BuiltinParams::default()).unwrap();
        let iv = Interval::unit();
        let m = 256;
        let eta = 0.1;
        let p = GridDensity::normalized(iv, iv.nodes(m).iter().map(|x| 1.0 + 0.8 * (4.0 * x).sin()).collect()).unwrap();
        let resp = logit_response_profile(&game, &[p.clone(), p.clone()], eta, m).unwrap();

        let fine = 2 * m;
        let expected_u = |a: f64| {
            let mut acc = 0.0;
            let mut mass = 0.0;
            for k in 0..fine {
                let b = (k as f64 + 0.5) / fine as f64;
                let w = p.value_at(b) / fine as f64;
                acc += w * game.utility(0, &[a, b]);
                mass += w;
            }
            acc / mass
        };
        let nodes = iv.nodes(m);
        let gibbs: Vec<f64> = nodes.iter().map(|&a| (expected_u(a) / eta).exp()).collect();
        let h = iv.grid_step(m);
        let z = trapezoid(&gibbs, h);
        let oracle = GridDensity::normalized(iv, gibbs.iter().map(|g| g / z).collect()).unwrap();
        let err = l1_distance(&resp[0], &oracle).unwrap();
        assert!(err < 1e-4, "l1 = {err}");
    }

    #[test]
    fn atomic_and_density_profiles_share_the_response_path() {
        let game = builtin("cournot_linear", &BuiltinParams::default()).unwrap();
        let iv = game.interval(0);
        let d = AtomicMeasure::dirac(0.4, iv).unwrap();
        let resp = logit_response_profile(&game, &[d.clone(), d], 0.2, 32).unwrap();
        assert_eq!(resp.len(), 2);
        assert!((resp[0].integral() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_player_converges_in_one_step() {
        let params = BuiltinParams { n: Some(1), theta: Some(vec![0.5]), kappa: Some(0.0), ..Default::default() };
        let game = builtin("quadratic_coordination", &params).unwrap();
        let opts = FixedPointOptions { damping: 1.0, tol: 1e-10, max_iter: 100 };
        let fp = logit_fixed_point(&game, 0.1, 128, &opts, None).unwrap();
        assert!(fp.converged);
        assert_eq!(fp.iterations, 1);
        let gibbs = logit_density(&unit_critic(128, |x| -(x - 0.5).powi(2)), 0.1).unwrap();
        assert!(l1_distance(&fp.profile[0], &gibbs).unwrap() < 1e-14);
    }

    #[test]
    fn coordination_equilibrium_is_symmetric_and_tight() {
        let game = builtin("quadratic_coordination", &BuiltinParams::default()).unwrap();
        let opts = FixedPointOptions { damping: 0.5, tol: 1e-10, max_iter: 10_000 };
        let fp = logit_fixed_point(&game, 0.1, 256, &opts, None).unwrap();
        assert!(fp.converged);
        assert!(fp.residual < 1e-6, "{}", fp.residual);
        assert!(l1_distance(&fp.profile[0], &fp.profile[1]).unwrap() < 1e-12);

        // restarting from the solution moves nothing
        let again = logit_fixed_point(&game, 0.1, 256, &opts, Some(fp.profile.clone())).unwrap();
        assert!(again.converged);
        assert_eq!(again.iterations, 0);
    }

    #[test]
    fn damped_iterates_stay_normalized() {
        let game = builtin("cournot_linear", &BuiltinParams { n: Some(3), ..Default::default() }).unwrap();
        let mut profile = uniform_profile(&game, 64).unwrap();
        for _ in 0..20 {
            let resp = logit_response_profile(&game, &profile, 0.05, 64).unwrap();
            profile = profile.iter().zip(&resp).map(|(p, l)| p.blend(l, 0.3).unwrap()).collect();
            for p in &profile {
                assert!((p.integral() - 1.0).abs() < 1e-9);
                assert!(p.values().iter().all(|v| *v >= 0.0));
            }
        }
    }

    #[test]
    fn equilibrium_is_stable_under_grid_refinement() {
        let opts = FixedPointOptions { damping: 0.5, tol: 1e-10, max_iter: 10_000 };
        for name in crate::game::BUILTIN_NAMES {
            let game = builtin(name, &BuiltinParams::default()).unwrap();
            let coarse = logit_fixed_point(&game, 0.1, 129, &opts, None).unwrap();
            let fine = logit_fixed_point(&game, 0.1, 257, &opts, None).unwrap();
            for (c, f) in coarse.profile.iter().zip(&fine.profile) {
                // compare on the coarse nodes
                let restricted: Vec<f64> = f.values().iter().step_by(2).copied().collect();
                let r = GridDensity::normalized(c.interval(), restricted).unwrap();
                let d = l1_distance(c, &r).unwrap();
                assert!(d < 5e-3, "{name}: {d}");
            }
        }
    }

    #[test]
    fn forced_iteration_cap_reports_non_convergence() {
        let game = builtin("quadratic_coordination", &BuiltinParams::default()).unwrap();
        let opts = FixedPointOptions { damping: 0.5, tol: 1e-10, max_iter: 1 };
        let fp = logit_fixed_point(&game, 0.1, 64, &opts, None).unwrap();
        assert!(!fp.converged);
        assert_eq!(fp.iterations, 1);
    }

    #[test]
    fn restarts_merge_into_one_component() {
        let game = builtin("quadratic_coordination", &BuiltinParams::default()).unwrap();
        let opts = FixedPointOptions { damping: 0.5, tol: 1e-9, max_iter: 10_000 };
        let set = solve_equilibria(&game, 0.1, 128, &opts, 8, 42).unwrap();
        assert!(set.all_converged);
        assert_eq!(set.components.len(), 1, "{:?}", set.components.iter().map(|c| c.multiplicity).collect::<Vec<_>>());
        assert_eq!(set.components[0].multiplicity, 8);
    }
}
