//! Mean-field logit best-response dynamics `π̇ = L_η(π) − π`, the entropy
//! regularised Lyapunov function and the KL form of its time derivative.
//!
//! For potential games every routine here runs in the identical-interest
//! game built from `φ`: the logit responses coincide with those of the
//! original game (utilities differ from `φ` only by terms that do not depend
//! on the player's own action) and the Lyapunov function needs `φ` anyway.

use std::ops::Deref;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};
use crate::game::{for_each_tuple, Categorical, GameSpec, EXACT_PRODUCT_LIMIT, MONTE_CARLO_DRAWS};
use crate::logit::{logit_response_profile, response_residual};
use crate::measure::{entropy, trapezoid, FiniteMeasure, GridDensity, DENSITY_FLOOR, DENSITY_NORM_TOL};

/// Per-step allowance, relative to `1 + |V|`, for Lyapunov increases caused
/// by the Euler discretization.
pub const V_SLACK: f64 = 1e-7;
/// Largest Euler step accepted by [`br_step`] and [`DynamicsConfig`].
pub const MAX_STEP: f64 = 0.1;
const EXPECTATION_SEED: u64 = 0x0f1e_57a7;

/// One normalized density per player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DensityProfile(Vec<GridDensity>);

impl DensityProfile {
    pub fn new(densities: Vec<GridDensity>) -> Result<Self> {
        if densities.is_empty() {
            return Err(domain!("a profile needs at least one player"));
        }
        for (i, d) in densities.iter().enumerate() {
            let mass = d.integral();
            if (mass - 1.0).abs() > DENSITY_NORM_TOL {
                return Err(domain!("density of player {i} integrates to {mass}"));
            }
        }
        Ok(Self(densities))
    }

    pub fn uniform(game: &GameSpec, grid: usize) -> Result<Self> {
        Self::new(crate::logit::uniform_profile(game, grid)?)
    }

    pub fn into_inner(self) -> Vec<GridDensity> {
        self.0
    }

    fn check_game(&self, game: &GameSpec) -> Result<()> {
        if self.0.len() != game.n_players() {
            return Err(domain!("profile has {} players, game has {}", self.0.len(), game.n_players()));
        }
        for (i, d) in self.0.iter().enumerate() {
            if d.interval() != game.interval(i) {
                return Err(domain!("density of player {i} is not on the player's action interval"));
            }
        }
        Ok(())
    }
}

impl Deref for DensityProfile {
    type Target = [GridDensity];

    fn deref(&self) -> &[GridDensity] {
        &self.0
    }
}

/// Game in which the dynamics are evaluated: the identical-interest
/// surrogate when a potential is known, the game itself otherwise.
fn flow_game(game: &GameSpec) -> Result<GameSpec> {
    if game.has_potential() {
        game.identical_interest()
    } else {
        Ok(game.clone())
    }
}

fn check_step(h: f64) -> Result<()> {
    if h > 0.0 && h <= MAX_STEP {
        Ok(())
    } else {
        Err(domain!("Euler step must lie in (0, {MAX_STEP}], got {h}"))
    }
}

fn euler_update(profile: &DensityProfile, response: &[GridDensity], h: f64) -> Result<DensityProfile> {
    let mut next = Vec::with_capacity(profile.len());
    for (p, l) in profile.iter().zip(response) {
        let mut d = p.blend(l, h)?;
        d.renormalize();
        next.push(d);
    }
    Ok(DensityProfile(next))
}

/// One explicit Euler step `π ← (1 − h)π + h·L_η(π)`, renormalized per player.
pub fn br_step(profile: &DensityProfile, game: &GameSpec, eta: f64, h: f64) -> Result<DensityProfile> {
    check_step(h)?;
    profile.check_game(game)?;
    let flow = flow_game(game)?;
    let response = logit_response_profile(&flow, profile, eta, grid_of(profile))?;
    euler_update(profile, &response, h)
}

fn grid_of(profile: &DensityProfile) -> usize {
    profile[0].len()
}

/// Expected value of a profile-level function with an optional standard error
/// (present only when the product quadrature was replaced by sampling).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub value: f64,
    pub std_error: Option<f64>,
}

/// `φ(π)`: tensor-product trapezoid while the product of grids has at most
/// [`EXACT_PRODUCT_LIMIT`] points, Monte Carlo otherwise.
pub fn potential_expectation(profile: &DensityProfile, game: &GameSpec) -> Result<Expectation> {
    profile.check_game(game)?;
    if !game.has_potential() {
        return Err(config!("game '{}' has no potential function", game.name()));
    }
    let phi = |a: &[f64]| game.potential(a).expect("checked above");
    let rules: Vec<Vec<(f64, f64)>> = profile.iter().map(|d| d.quadrature()).collect();
    let size = rules.iter().try_fold(1usize, |acc, r| acc.checked_mul(r.len()));
    match size {
        Some(s) if s <= EXACT_PRODUCT_LIMIT => {
            let mut value = 0.0;
            for_each_tuple(&rules, |a, w| value += w * phi(a));
            Ok(Expectation { value, std_error: None })
        }
        _ => {
            let samplers: Vec<Categorical> = rules.iter().map(|r| Categorical::new(r)).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(EXPECTATION_SEED);
            let mut a = vec![0.0; samplers.len()];
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for _ in 0..MONTE_CARLO_DRAWS {
                for (x, s) in a.iter_mut().zip(&samplers) {
                    *x = s.draw(&mut rng);
                }
                let v = phi(&a);
                sum += v;
                sum_sq += v * v;
            }
            let n = MONTE_CARLO_DRAWS as f64;
            let mean = sum / n;
            let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
            Ok(Expectation { value: mean, std_error: Some((var / n).sqrt()) })
        }
    }
}

/// `V_η(π) = −[φ(π) + η Σ_i entropy(π^i)]`. `η = 0` is accepted here.
pub fn lyapunov(profile: &DensityProfile, game: &GameSpec, eta: f64) -> Result<f64> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(domain!("eta must be non-negative for the Lyapunov function, got {eta}"));
    }
    let phi = potential_expectation(profile, game)?.value;
    let ent: f64 = profile.iter().map(entropy).sum();
    Ok(-(phi + eta * ent))
}

/// `∫ p log(p/q)` by the trapezoid rule, both densities floored at
/// [`DENSITY_FLOOR`].
pub fn kl(p: &GridDensity, q: &GridDensity) -> Result<f64> {
    p.check_same_grid(q)?;
    let integrand: Vec<f64> = p
        .values()
        .iter()
        .zip(q.values())
        .map(|(&a, &b)| {
            let a = a.max(DENSITY_FLOOR);
            a * (a.ln() - b.max(DENSITY_FLOOR).ln())
        })
        .collect();
    Ok(trapezoid(&integrand, p.step()))
}

fn rate_from_response(profile: &DensityProfile, response: &[GridDensity], eta: f64) -> Result<f64> {
    let mut total = 0.0;
    for (p, l) in profile.iter().zip(response) {
        total += kl(l, p)? + kl(p, l)?;
    }
    Ok(-eta * total)
}

/// `dV_η/dt` along the flow, in the form `−η Σ_i [KL(l^i‖p^i) + KL(p^i‖l^i)]`.
pub fn lyapunov_rate(profile: &DensityProfile, game: &GameSpec, eta: f64) -> Result<f64> {
    profile.check_game(game)?;
    if !game.has_potential() {
        return Err(config!("game '{}' has no potential function", game.name()));
    }
    let flow = game.identical_interest()?;
    let response = logit_response_profile(&flow, profile, eta, grid_of(profile))?;
    rate_from_response(profile, &response, eta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub eta: f64,
    /// Euler step `h`.
    pub step: f64,
    /// Time horizon `T`.
    pub horizon: f64,
    pub grid: usize,
    /// Record a checkpoint every this many steps (the final step is always recorded).
    pub checkpoint_every: usize,
    pub record_profiles: bool,
}

impl DynamicsConfig {
    pub fn new(eta: f64, step: f64, horizon: f64, grid: usize) -> Result<Self> {
        let cfg = Self { eta, step, horizon, grid, checkpoint_every: 1, record_profiles: false };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(domain!("eta must be positive, got {}", self.eta));
        }
        check_step(self.step)?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(domain!("horizon must be positive, got {}", self.horizon));
        }
        if self.grid < 2 {
            return Err(domain!("grid needs at least 2 nodes, got {}", self.grid));
        }
        if self.checkpoint_every == 0 {
            return Err(domain!("checkpoint_every must be at least 1"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.step).round().max(1.0) as usize
    }
}

/// One trajectory record, serialized as a JSONL line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: f64,
    #[serde(rename = "V")]
    pub v: f64,
    pub rate: f64,
    pub residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profiles: Option<Vec<GridDensity>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub checkpoints: Vec<Checkpoint>,
    pub steps: usize,
    /// Steps where `V` rose by more than `V_SLACK·(1 + |V|)`.
    pub violations: usize,
    pub largest_increase: f64,
    pub max_mass_error: f64,
    pub final_residual: f64,
    pub final_profile: DensityProfile,
}

/// Integrates the flow with explicit Euler steps over `[0, T]`.
pub fn integrate(profile0: &DensityProfile, game: &GameSpec, cfg: &DynamicsConfig) -> Result<Trajectory> {
    integrate_with(profile0, game, cfg, |_| Ok(()))
}

/// As [`integrate`], handing every checkpoint to `sink` as soon as it is made.
pub fn integrate_with(
    profile0: &DensityProfile,
    game: &GameSpec,
    cfg: &DynamicsConfig,
    mut sink: impl FnMut(&Checkpoint) -> Result<()>,
) -> Result<Trajectory> {
    cfg.validate()?;
    profile0.check_game(game)?;
    if profile0.iter().any(|d| d.len() != cfg.grid) {
        return Err(domain!("initial profile is not on a {}-node grid", cfg.grid));
    }
    if !game.has_potential() {
        return Err(config!("game '{}' has no potential function", game.name()));
    }
    let flow = game.identical_interest()?;
    let steps = cfg.steps();
    let mut profile = profile0.clone();
    let mut checkpoints = Vec::new();
    let mut previous_v: Option<f64> = None;
    let mut violations = 0;
    let mut largest_increase = f64::NEG_INFINITY;
    let mut max_mass_error = profile.iter().map(|d| (d.integral() - 1.0).abs()).fold(0.0, f64::max);
    let mut final_residual = f64::NAN;
    for n in 0..=steps {
        let response = logit_response_profile(&flow, &profile, cfg.eta, cfg.grid)?;
        let v = lyapunov(&profile, &flow, cfg.eta)?;
        let rate = rate_from_response(&profile, &response, cfg.eta)?;
        let residual = response_residual(&profile, &response)?;
        if let Some(prev) = previous_v {
            let rise = v - prev;
            largest_increase = largest_increase.max(rise);
            if rise > V_SLACK * (1.0 + prev.abs()) {
                violations += 1;
            }
        }
        previous_v = Some(v);
        final_residual = residual;
        if n % cfg.checkpoint_every == 0 || n == steps {
            let cp = Checkpoint {
                t: n as f64 * cfg.step,
                v,
                rate,
                residual,
                profiles: cfg.record_profiles.then(|| profile.0.clone()),
            };
            sink(&cp)?;
            checkpoints.push(cp);
        }
        if n < steps {
            profile = euler_update(&profile, &response, cfg.step)?;
            for d in profile.iter() {
                max_mass_error = max_mass_error.max((d.integral() - 1.0).abs());
            }
        }
    }
    Ok(Trajectory {
        checkpoints,
        steps,
        violations,
        largest_increase,
        max_mass_error,
        final_residual,
        final_profile: profile,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{builtin, BuiltinParams};
    use crate::logit::{logit_fixed_point, FixedPointOptions};
    use crate::measure::{l1_distance, Interval};
    use rand::Rng;

    fn coordination() -> GameSpec {
        builtin("quadratic_coordination", &BuiltinParams::default()).unwrap()
    }

    fn density(m: usize, f: impl Fn(f64) -> f64) -> GridDensity {
        let iv = Interval::unit();
        GridDensity::normalized(iv, iv.nodes(m).into_iter().map(f).collect()).unwrap()
    }

    fn equilibrium(game: &GameSpec, eta: f64, grid: usize) -> DensityProfile {
        let opts = FixedPointOptions { damping: 0.5, tol: 1e-13, max_iter: 100_000 };
        let fp = logit_fixed_point(game, eta, grid, &opts, None).unwrap();
        assert!(fp.converged);
        DensityProfile::new(fp.profile).unwrap()
    }

    #[test]
    fn kl_examples() {
        let m = (1 << 20) + 1;
        let u = density(m, |_| 1.0);
        let r = density(m, |x| 2.0 * x);
        assert!(kl(&u, &u).unwrap().abs() < 1e-15);
        // ∫ −log(2x) dx = 1 − log 2; the floored node at 0 adds about 345·h
        let a = kl(&u, &r).unwrap();
        assert!((a - 0.306853).abs() < 1e-3, "{a}");
        let b = kl(&r, &u).unwrap();
        assert!((b - 0.193147).abs() < 1e-5, "{b}");
        assert!(kl(&u, &density(17, |_| 1.0)).is_err());
    }

    #[test]
    fn kl_singular_integral_converges_to_analytic_value() {
        // the error of the floored trapezoid estimate shrinks with refinement
        let exact = 1.0 - 2f64.ln();
        let err = |m| (kl(&density(m, |_| 1.0), &density(m, |x| 2.0 * x)).unwrap() - exact).abs();
        assert!(err(1 << 16) < err(1 << 12));
    }

    #[test]
    fn kl_is_non_negative_and_zero_only_at_equality() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let c: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let p = density(128, |x| (c[0] * x + c[1] * x * x).exp());
            let q = density(128, |x| (c[2] * x + c[3] * (3.0 * x).sin()).exp());
            let d = kl(&p, &q).unwrap();
            assert!(d >= -1e-12);
            if l1_distance(&p, &q).unwrap() >= 1e-10 {
                assert!(d > 0.0);
            }
        }
    }

    #[test]
    fn lyapunov_of_zero_game_at_uniform_is_zero() {
        let p = BuiltinParams { n: Some(2), kappa: Some(0.0), theta: Some(vec![0.5, 0.5]), ..Default::default() };
        let base = builtin("quadratic_coordination", &p).unwrap();
        let zero = GameSpec::new("zero", base.intervals().to_vec(), std::sync::Arc::new(|_, _| 0.0), 1.0, 1.0)
            .unwrap()
            .with_potential(std::sync::Arc::new(|_| 0.0));
        let prof = DensityProfile::uniform(&zero, 64).unwrap();
        assert_eq!(lyapunov(&prof, &zero, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn lyapunov_without_entropy_is_minus_potential() {
        let game = coordination();
        let prof = DensityProfile::new(vec![density(64, |x| 1.0 + x), density(64, |x| 2.0 - x)]).unwrap();
        let phi = potential_expectation(&prof, &game).unwrap();
        assert_eq!(phi.std_error, None);
        assert_eq!(lyapunov(&prof, &game, 0.0).unwrap(), -phi.value);
        assert!(lyapunov(&prof, &game, -0.1).is_err());
    }

    #[test]
    fn lyapunov_at_uniform_matches_fine_quadrature() {
        // φ(π) for independent uniforms on [0,1]² with θ = 0.5, κ = 1:
        // E(a − ½)² = 1/12 for each player, E(a − b)² = 1/6, so φ = −1/3.
        // Checked first against Simpson's rule on a grid four times finer.
        let game = coordination();
        let m = 256;
        let fine = 4 * m + 1;
        let h = 1.0 / (fine - 1) as f64;
        let simpson_w = |k: usize| {
            let c = if k == 0 || k == fine - 1 {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        };
        let mut oracle = 0.0;
        for i in 0..fine {
            for j in 0..fine {
                let (a, b) = (i as f64 * h, j as f64 * h);
                oracle += simpson_w(i) * simpson_w(j) * game.potential(&[a, b]).unwrap();
            }
        }
        assert!((oracle + 1.0 / 3.0).abs() < 1e-12);
        let prof = DensityProfile::uniform(&game, m).unwrap();
        let v = lyapunov(&prof, &game, 0.1).unwrap();
        // entropy of uniforms is 0, so V = −φ; trapezoid error is h²/6 per quadratic term
        assert!((v - (-oracle)).abs() < 3e-5, "{v} vs {}", -oracle);
        let v_fine = lyapunov(&DensityProfile::uniform(&game, 1000).unwrap(), &game, 0.1).unwrap();
        assert!((v_fine - (-oracle)).abs() < 2e-6, "{v_fine}");
    }

    #[test]
    fn large_products_fall_back_to_sampling() {
        // three uniforms: φ = −(3/12 + 3·(1/6)) = −0.75
        let p = BuiltinParams { n: Some(3), ..Default::default() };
        let game = builtin("quadratic_coordination", &p).unwrap();
        let prof = DensityProfile::uniform(&game, 128).unwrap();
        let e = potential_expectation(&prof, &game).unwrap();
        let se = e.std_error.expect("sampled");
        assert!(se > 0.0 && se < 1e-2);
        assert!((e.value + 0.75).abs() < 5.0 * se + 1e-4, "{} ± {se}", e.value);
    }

    #[test]
    fn fixed_point_is_stationary() {
        let game = coordination();
        let eq = equilibrium(&game, 0.1, 64);
        let next = br_step(&eq, &game, 0.1, 0.05).unwrap();
        for (a, b) in eq.iter().zip(next.iter()) {
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
        let rate = lyapunov_rate(&eq, &game, 0.1).unwrap();
        assert!(rate.abs() < 1e-8 && rate <= 1e-12, "{rate}");
    }

    #[test]
    fn br_step_keeps_unit_mass_and_checks_step() {
        let game = coordination();
        let prof = DensityProfile::new(vec![density(64, |x| 1.0 + 3.0 * x), density(64, |x| (5.0 * x).cos() + 1.5)]).unwrap();
        let next = br_step(&prof, &game, 0.1, 0.1).unwrap();
        for d in next.iter() {
            assert!((d.integral() - 1.0).abs() <= 1e-12);
        }
        assert!(br_step(&prof, &game, 0.1, 0.2).is_err());
        assert!(br_step(&prof, &game, 0.1, 0.0).is_err());
    }

    #[test]
    fn euler_local_error_is_second_order() {
        // Reference: 500·(h/0.05) steps of size 1e-4 over the same interval.
        let game = coordination();
        let eta = 0.1;
        let start = DensityProfile::new(vec![density(48, |x| 1.0 + 2.0 * x), density(48, |x| 3.0 - 2.0 * x)]).unwrap();
        let local_error = |h: f64| {
            let one = br_step(&start, &game, eta, h).unwrap();
            let n_ref = (h / 1e-4).round() as usize;
            let mut reference = start.clone();
            for _ in 0..n_ref {
                reference = br_step(&reference, &game, eta, 1e-4).unwrap();
            }
            one.iter().zip(reference.iter()).map(|(a, b)| l1_distance(a, b).unwrap()).fold(0.0, f64::max)
        };
        let e1 = local_error(0.04);
        let e2 = local_error(0.02);
        let ratio = e1 / e2;
        assert!((ratio - 4.0).abs() <= 1.0, "error ratio {ratio} ({e1}, {e2})");
    }

    #[test]
    fn rate_matches_finite_difference_of_lyapunov() {
        for name in crate::game::BUILTIN_NAMES {
            let game = builtin(name, &BuiltinParams::default()).unwrap();
            let eta = 0.1;
            let prof = DensityProfile::new(
                game.intervals().iter().enumerate().map(|(i, &iv)| {
                    GridDensity::normalized(iv, iv.nodes(64).iter().map(|x| 1.0 + (i as f64 + 1.0) * x / iv.width()).collect()).unwrap()
                }).collect(),
            )
            .unwrap();
            let h = 1e-3;
            let rate = lyapunov_rate(&prof, &game, eta).unwrap();
            let fd = (lyapunov(&br_step(&prof, &game, eta, h).unwrap(), &game, eta).unwrap() - lyapunov(&prof, &game, eta).unwrap()) / h;
            assert!(rate < 0.0);
            assert!((rate - fd).abs() <= 1e-2 * rate.abs().max(1e-6), "{name}: {rate} vs {fd}");
        }
    }

    #[test]
    fn rate_vanishes_only_near_equilibrium() {
        let game = coordination();
        let eq = equilibrium(&game, 0.1, 64);
        let off = DensityProfile::new(vec![density(64, |x| 1.0 + x), eq[1].clone()]).unwrap();
        let resid = |p: &DensityProfile| {
            let resp = logit_response_profile(&game.identical_interest().unwrap(), p, 0.1, 64).unwrap();
            response_residual(p, &resp).unwrap()
        };
        assert!(resid(&eq) < 1e-4);
        assert!(lyapunov_rate(&eq, &game, 0.1).unwrap().abs() < 1e-8);
        assert!(resid(&off) >= 1e-4);
        assert!(lyapunov_rate(&off, &game, 0.1).unwrap() < -1e-8);
    }

    #[test]
    fn integrate_from_equilibrium_is_flat() {
        let game = coordination();
        let eq = equilibrium(&game, 0.1, 64);
        let cfg = DynamicsConfig { checkpoint_every: 10, ..DynamicsConfig::new(0.1, 0.05, 5.0, 64).unwrap() };
        let traj = integrate(&eq, &game, &cfg).unwrap();
        assert!(traj.final_residual < 1e-6);
        assert_eq!(traj.violations, 0);
        let v0 = traj.checkpoints[0].v;
        assert!(traj.checkpoints.iter().all(|c| (c.v - v0).abs() < 1e-8));
        assert_eq!(traj.checkpoints.len(), 11);
    }

    #[test]
    fn trajectory_stays_normalized_and_inside_bounds() {
        let game = coordination();
        let eta = 0.1;
        let start = DensityProfile::new(vec![density(64, |x| (8.0 * x).exp()), density(64, |x| (-6.0 * x).exp())]).unwrap();
        let cfg = DynamicsConfig { record_profiles: true, ..DynamicsConfig::new(eta, 0.05, 10.0, 64).unwrap() };
        let traj = integrate(&start, &game, &cfg).unwrap();
        assert!(traj.max_mass_error < 1e-9);
        let width = 1.0;
        let lo = (-2.0 * game.u_bound() / eta).exp() / width;
        let hi = (2.0 * game.u_bound() / eta).exp() / width;
        for cp in traj.checkpoints.iter().filter(|c| c.t >= 5.0) {
            for d in cp.profiles.as_ref().unwrap() {
                assert!(d.values().iter().all(|&v| v >= 0.5 * lo && v <= 2.0 * hi));
            }
        }
        assert_eq!(traj.violations, 0);
        assert!(traj.checkpoints.windows(2).all(|w| w[1].rate <= 1e-12));
    }

    #[test]
    fn initial_condition_decays_exponentially() {
        // Under Euler steps the initial profile keeps weight (1 − h)^n; the
        // rest is a convex combination of logit responses. Removing that
        // weight leaves a density, whose l1 gap to π_n is at most 2(1 − h)^n.
        let game = coordination();
        let spike = DensityProfile::new(vec![density(64, |x| (-200.0 * (x - 0.1).powi(2)).exp()); 2]).unwrap();
        let h = 0.05;
        let mut p = spike.clone();
        for n in 1..=100 {
            p = br_step(&p, &game, 0.1, h).unwrap();
            let keep = (1.0 - h).powi(n);
            for (pn, p0) in p.iter().zip(spike.iter()) {
                let sigma: Vec<f64> = pn.values().iter().zip(p0.values()).map(|(a, b)| (a - keep * b) / (1.0 - keep)).collect();
                assert!(sigma.iter().all(|v| *v >= -1e-9));
                let sigma = GridDensity::normalized(pn.interval(), sigma.iter().map(|v| v.max(0.0)).collect()).unwrap();
                assert!(l1_distance(pn, &sigma).unwrap() <= 2.0 * keep + 1e-9);
            }
        }
    }

    #[test]
    fn config_rejects_large_steps() {
        assert!(DynamicsConfig::new(0.1, 0.2, 1.0, 64).is_err());
        assert!(DynamicsConfig::new(0.0, 0.05, 1.0, 64).is_err());
        assert!(DynamicsConfig::new(0.1, 0.05, 0.0, 64).is_err());
    }

    #[test]
    fn missing_potential_is_rejected() {
        let game = coordination().without_potential();
        let prof = DensityProfile::uniform(&game, 16).unwrap();
        assert!(matches!(lyapunov(&prof, &game, 0.1), Err(crate::Error::Config(_))));
        assert!(matches!(lyapunov_rate(&prof, &game, 0.1), Err(crate::Error::Config(_))));
    }
}
