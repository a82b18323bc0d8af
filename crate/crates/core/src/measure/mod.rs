//! Finite measures on compact intervals.
//!
//! Mixed strategies come in two shapes: [`AtomicMeasure`] (weighted Dirac
//! masses, the actor's representation) and [`GridDensity`] (density values at
//! uniform nodes, used for logit responses and equilibria). Both implement
//! [`FiniteMeasure`], which is all the distance and expectation routines need.

mod atomic;
mod bl;
mod density;
mod interval;

use serde::{Deserialize, Serialize};

pub use atomic::{Atom, AtomicMeasure, MERGE_TOL};
pub use bl::{bl_distance, bl_norm_of_node_masses};
pub use density::GridDensity;
pub use interval::Interval;

use crate::error::{domain, Result};

/// Floor applied to density values before taking logarithms.
pub const DENSITY_FLOOR: f64 = 1e-300;
/// Allowed deviation of an atomic probability measure's total mass from 1.
pub const PROBABILITY_TOL: f64 = 1e-9;
/// Allowed deviation of a density's trapezoid integral from 1.
pub const DENSITY_NORM_TOL: f64 = 1e-9;
/// Smallest grid (in cells) accepted by [`bl_distance`].
pub const MIN_BL_RESOLUTION: usize = 16;

/// What the distance and expectation routines need from a measure.
pub trait FiniteMeasure {
    fn interval(&self) -> Interval;

    fn total_mass(&self) -> f64;

    /// Masses of the measure against the hat functions of a uniform grid
    /// with `cells` cells (`cells + 1` nodes). Exact for integrands that are
    /// piecewise linear on that grid.
    fn node_masses(&self, cells: usize) -> Vec<f64>;

    /// Points and weights such that `Σ w·f(x)` is the integral of `f`
    /// against the measure (exactly for atoms, by the trapezoid rule for
    /// grid densities).
    fn quadrature(&self) -> Vec<(f64, f64)>;
}

/// Either representation of a mixed strategy, serialized by shape:
/// `{"interval":[lo,hi],"atoms":[[x,w],...]}` or
/// `{"interval":[lo,hi],"grid":M,"values":[...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Measure {
    Atomic(AtomicMeasure),
    Density(GridDensity),
}

impl From<AtomicMeasure> for Measure {
    fn from(m: AtomicMeasure) -> Self {
        Measure::Atomic(m)
    }
}

impl From<GridDensity> for Measure {
    fn from(d: GridDensity) -> Self {
        Measure::Density(d)
    }
}

impl FiniteMeasure for Measure {
    fn interval(&self) -> Interval {
        match self {
            Measure::Atomic(m) => m.interval(),
            Measure::Density(d) => d.interval(),
        }
    }

    fn total_mass(&self) -> f64 {
        match self {
            Measure::Atomic(m) => m.total_mass(),
            Measure::Density(d) => d.total_mass(),
        }
    }

    fn node_masses(&self, cells: usize) -> Vec<f64> {
        match self {
            Measure::Atomic(m) => m.node_masses(cells),
            Measure::Density(d) => d.node_masses(cells),
        }
    }

    fn quadrature(&self) -> Vec<(f64, f64)> {
        match self {
            Measure::Atomic(m) => m.quadrature(),
            Measure::Density(d) => d.quadrature(),
        }
    }
}

impl<T: FiniteMeasure + ?Sized> FiniteMeasure for &T {
    fn interval(&self) -> Interval {
        (**self).interval()
    }

    fn total_mass(&self) -> f64 {
        (**self).total_mass()
    }

    fn node_masses(&self, cells: usize) -> Vec<f64> {
        (**self).node_masses(cells)
    }

    fn quadrature(&self) -> Vec<(f64, f64)> {
        (**self).quadrature()
    }
}

/// Composite trapezoid rule on uniformly spaced samples.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values {
        [] | [_] => 0.0,
        [first, inner @ .., last] => h * (0.5 * (first + last) + inner.iter().sum::<f64>()),
    }
}

pub fn trapezoid_weights(m: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; m];
    w[0] = 0.5 * h;
    w[m - 1] = 0.5 * h;
    w
}

/// Max over players of the BL distance between corresponding strategies.
pub fn profile_distance<A, B>(mus: &[A], nus: &[B], resolution: usize) -> Result<f64>
where
    A: FiniteMeasure,
    B: FiniteMeasure,
{
    if mus.len() != nus.len() {
        return Err(domain!("profiles have {} and {} players", mus.len(), nus.len()));
    }
    let mut worst = 0.0f64;
    for (mu, nu) in mus.iter().zip(nus) {
        worst = worst.max(bl_distance(mu, nu, resolution)?);
    }
    Ok(worst)
}

/// Differential entropy `−∫ p log p`, with `p` floored at [`DENSITY_FLOOR`].
pub fn entropy(p: &GridDensity) -> f64 {
    let integrand: Vec<f64> = p
        .values()
        .iter()
        .map(|&v| {
            let v = v.max(DENSITY_FLOOR);
            -v * v.ln()
        })
        .collect();
    trapezoid(&integrand, p.step())
}

/// `∫ |p − q|` on a shared grid.
pub fn l1_distance(p: &GridDensity, q: &GridDensity) -> Result<f64> {
    p.check_same_grid(q)?;
    let diff: Vec<f64> = p.values().iter().zip(q.values()).map(|(a, b)| (a - b).abs()).collect();
    Ok(trapezoid(&diff, p.step()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn density_from(iv: Interval, m: usize, f: impl Fn(f64) -> f64) -> GridDensity {
        GridDensity::normalized(iv, iv.nodes(m).into_iter().map(f).collect()).unwrap()
    }

    #[test]
    fn entropy_of_uniforms() {
        let u1 = GridDensity::uniform(Interval::unit(), 64).unwrap();
        assert!(entropy(&u1).abs() < 1e-15);
        let u2 = GridDensity::uniform(Interval::new(0.0, 2.0).unwrap(), 64).unwrap();
        assert!((entropy(&u2) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn entropy_of_ramp() {
        // −∫ 2x log 2x dx = 1/2 − log 2; trapezoid error is O(h² log h)
        let exact = 0.5 - 2f64.ln();
        let p = density_from(Interval::unit(), 4097, |x| 2.0 * x);
        assert!((entropy(&p) - exact).abs() < 1e-5, "{}", entropy(&p));
        // independent fine quadrature of the same integral by the midpoint rule
        let n = 1_000_000;
        let mid: f64 = (0..n)
            .map(|k| {
                let x = (k as f64 + 0.5) / n as f64;
                -2.0 * x * (2.0 * x).ln()
            })
            .sum::<f64>()
            / n as f64;
        assert!((mid - exact).abs() < 1e-8);
    }

    #[test]
    fn entropy_refinement_is_stable() {
        let iv = Interval::unit();
        let f = |x: f64| 1.0 + 0.5 * (3.0 * x).sin();
        for m in [257, 513, 1025] {
            let a = entropy(&density_from(iv, m, f));
            let b = entropy(&density_from(iv, 2 * m - 1, f));
            assert!((a - b).abs() < 1e-4, "m = {m}");
        }
    }

    #[test]
    fn l1_of_uniform_and_ramp() {
        let iv = Interval::unit();
        let u = GridDensity::uniform(iv, 1025).unwrap();
        let r = density_from(iv, 1025, |x| 2.0 * x);
        assert_eq!(l1_distance(&u, &u).unwrap(), 0.0);
        assert!((l1_distance(&u, &r).unwrap() - 0.5).abs() < 1e-6);
        let other = GridDensity::uniform(iv, 17).unwrap();
        assert!(matches!(l1_distance(&u, &other), Err(crate::Error::Domain(_))));
    }

    #[test]
    fn profile_distance_is_max_over_players() {
        let iv = Interval::unit();
        let a = vec![AtomicMeasure::dirac(0.0, iv).unwrap(), AtomicMeasure::dirac(0.0, iv).unwrap()];
        let b = vec![AtomicMeasure::dirac(0.1, iv).unwrap(), AtomicMeasure::dirac(0.5, iv).unwrap()];
        let d0 = bl_distance(&a[0], &b[0], 128).unwrap();
        let d1 = bl_distance(&a[1], &b[1], 128).unwrap();
        assert_eq!(profile_distance(&a, &b, 128).unwrap(), d0.max(d1));
        assert_eq!(profile_distance(&a, &a, 128).unwrap(), 0.0);
        assert_eq!(profile_distance(&a[..1], &b[..1], 128).unwrap(), d0);
        assert!(profile_distance(&a, &b[..1], 128).is_err());
    }

    #[test]
    fn measure_enum_dispatches_by_json_shape() {
        let atoms: Measure = serde_json::from_str(r#"{"interval":[0,1],"atoms":[[0.5,1.0]]}"#).unwrap();
        assert!(matches!(atoms, Measure::Atomic(_)));
        let dens: Measure = serde_json::from_str(r#"{"interval":[0,1],"grid":2,"values":[1,1]}"#).unwrap();
        assert!(matches!(dens, Measure::Density(_)));
    }

    #[test]
    fn compacting_ten_thousand_atoms_costs_at_most_a_cell() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let raw: Vec<(f64, f64)> = (0..10_000).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
        let total: f64 = raw.iter().map(|p| p.1).sum();
        let pi = AtomicMeasure::new(Interval::unit(), raw.into_iter().map(|(x, w)| (x, w / total))).unwrap();
        let c = pi.compact(256).unwrap();
        assert!(c.len() <= 256);
        assert!((c.total_mass() - pi.total_mass()).abs() < 1e-12);
        assert!(bl_distance(&pi, &c, 512).unwrap() <= 1.0 / 256.0);
    }

    fn random_density(seed: &[f64]) -> GridDensity {
        GridDensity::normalized(Interval::unit(), seed.iter().map(|v| v + 0.01).collect()).unwrap()
    }

    fn atoms_strategy() -> impl Strategy<Value = AtomicMeasure> {
        proptest::collection::vec((0.0f64..=1.0, 0.01f64..1.0), 1..12).prop_map(|pts| {
            let total: f64 = pts.iter().map(|p| p.1).sum();
            AtomicMeasure::new(Interval::unit(), pts.into_iter().map(|(x, w)| (x, w / total))).unwrap()
        })
    }

    proptest! {
        #[test]
        fn l1_triangle_inequality(
            a in proptest::collection::vec(0.0f64..1.0, 33),
            b in proptest::collection::vec(0.0f64..1.0, 33),
            c in proptest::collection::vec(0.0f64..1.0, 33),
        ) {
            let (p, q, r) = (random_density(&a), random_density(&b), random_density(&c));
            let pq = l1_distance(&p, &q).unwrap();
            let qr = l1_distance(&q, &r).unwrap();
            let pr = l1_distance(&p, &r).unwrap();
            prop_assert!(pr <= pq + qr + 1e-12);
        }

        #[test]
        fn bl_is_a_pseudometric(mu in atoms_strategy(), nu in atoms_strategy(), xi in atoms_strategy()) {
            let res = 64;
            let d_mn = bl_distance(&mu, &nu, res).unwrap();
            let d_nm = bl_distance(&nu, &mu, res).unwrap();
            prop_assert_eq!(d_mn, d_nm);
            let d_nx = bl_distance(&nu, &xi, res).unwrap();
            let d_mx = bl_distance(&mu, &xi, res).unwrap();
            prop_assert!(d_mx <= d_mn + d_nx + 1e-6);
            prop_assert!(d_mn >= 0.0);
        }

        #[test]
        fn bl_is_monotone_under_nested_refinement(mu in atoms_strategy(), nu in atoms_strategy()) {
            let coarse = bl_distance(&mu, &nu, 32).unwrap();
            let fine = bl_distance(&mu, &nu, 128).unwrap();
            prop_assert!(fine >= coarse - 1e-12, "{} < {}", fine, coarse);
        }

        #[test]
        fn compact_error_within_one_cell(positions in proptest::collection::vec(0.0f64..=1.0, 50..400)) {
            let w = 1.0 / positions.len() as f64;
            let pi = AtomicMeasure::new(Interval::unit(), positions.iter().map(|&x| (x, w))).unwrap();
            let c = pi.compact(32).unwrap();
            prop_assert!(bl_distance(&pi, &c, 256).unwrap() <= 1.0 / 32.0);
        }
    }
}
