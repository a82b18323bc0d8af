use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{trapezoid, trapezoid_weights, AtomicMeasure, FiniteMeasure, Interval, DENSITY_NORM_TOL};
use crate::error::{contract, domain, Result};

/// An absolutely continuous probability measure given by density values at
/// the nodes of a uniform grid, interpolated linearly between nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DensityRepr", into = "DensityRepr")]
pub struct GridDensity {
    interval: Interval,
    values: Vec<f64>,
}

impl GridDensity {
    /// Validates non-negativity and trapezoid normalization.
    pub fn new(interval: Interval, values: Vec<f64>) -> Result<Self> {
        check_values(&values)?;
        let mass = trapezoid(&values, interval.grid_step(values.len()));
        if (mass - 1.0).abs() > DENSITY_NORM_TOL {
            return Err(contract!("density integrates to {mass}, expected 1"));
        }
        Ok(Self { interval, values })
    }

    /// Rescales non-negative values so their trapezoid integral is 1.
    pub fn normalized(interval: Interval, mut values: Vec<f64>) -> Result<Self> {
        check_values(&values)?;
        let mass = trapezoid(&values, interval.grid_step(values.len()));
        if mass <= 0.0 || !mass.is_finite() {
            return Err(domain!("cannot normalize a density with integral {mass}"));
        }
        values.iter_mut().for_each(|v| *v /= mass);
        Ok(Self { interval, values })
    }

    pub fn uniform(interval: Interval, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(domain!("grid needs at least 2 nodes, got {m}"));
        }
        Ok(Self { interval, values: vec![1.0 / interval.width(); m] })
    }

    /// Density of an atomic measure smoothed onto an `m`-node grid: each atom
    /// is split between its two neighbouring nodes and node masses are divided
    /// by the trapezoid weights.
    pub fn smooth_atoms(measure: &AtomicMeasure, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(domain!("grid needs at least 2 nodes, got {m}"));
        }
        let iv = measure.interval();
        let masses = measure.node_masses(m - 1);
        let weights = trapezoid_weights(m, iv.grid_step(m));
        let values = masses.iter().zip(&weights).map(|(w, t)| w / t).collect();
        GridDensity::normalized(iv, values)
    }

    pub(crate) fn from_raw(interval: Interval, values: Vec<f64>) -> Self {
        Self { interval, values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.interval.grid_step(self.values.len())
    }

    pub fn nodes(&self) -> Vec<f64> {
        self.interval.nodes(self.values.len())
    }

    pub fn integral(&self) -> f64 {
        trapezoid(&self.values, self.step())
    }

    pub fn same_grid(&self, other: &GridDensity) -> bool {
        self.interval == other.interval && self.values.len() == other.values.len()
    }

    pub(crate) fn check_same_grid(&self, other: &GridDensity) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(domain!(
                "grid mismatch: {} nodes on {:?} vs {} nodes on {:?}",
                self.len(),
                self.interval,
                other.len(),
                other.interval
            ))
        }
    }

    /// Linear interpolation of the density at `x`.
    pub fn value_at(&self, x: f64) -> f64 {
        let (k, f) = self.interval.locate(x, self.values.len());
        self.values[k] * (1.0 - f) + self.values[k + 1] * f
    }

    /// Cumulative mass at each node under the piecewise-linear density.
    pub fn cdf_at_nodes(&self) -> Vec<f64> {
        let h = self.step();
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.values.len());
        out.push(0.0);
        for pair in self.values.windows(2) {
            acc += 0.5 * h * (pair[0] + pair[1]);
            out.push(acc);
        }
        out
    }

    /// Cumulative distribution at an arbitrary point.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.interval.lo() {
            return 0.0;
        }
        let m = self.values.len();
        let (k, f) = self.interval.locate(x.min(self.interval.hi()), m);
        let h = self.step();
        let cdf = self.cdf_at_nodes();
        let (p0, p1) = (self.values[k], self.values[k + 1]);
        let t = f * h;
        cdf[k] + p0 * t + 0.5 * (p1 - p0) / h * t * t
    }

    /// Inverse-CDF draw from the piecewise-linear density.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let cdf = self.cdf_at_nodes();
        let total = *cdf.last().expect("grid has nodes");
        if (total - 1.0).abs() > DENSITY_NORM_TOL {
            return Err(contract!("sampling requires a normalized density, integral is {total}"));
        }
        let u = rng.random::<f64>() * total;
        let j = cdf.partition_point(|&c| c <= u).clamp(1, cdf.len() - 1) - 1;
        let h = self.step();
        let p0 = self.values[j];
        let slope = (self.values[j + 1] - p0) / h;
        let r = (u - cdf[j]).max(0.0);
        // Root of p0·t + slope·t²/2 = r in the form that stays stable as slope → 0.
        let disc = (p0 * p0 + 2.0 * slope * r).max(0.0);
        let denom = p0 + disc.sqrt();
        let t = if denom > 0.0 { 2.0 * r / denom } else { 0.0 };
        let x = self.interval.node(j, self.values.len()) + t.clamp(0.0, h);
        Ok(x.min(self.interval.hi()))
    }

    /// `(1 − λ)·self + λ·other` on a shared grid.
    pub fn blend(&self, other: &GridDensity, lambda: f64) -> Result<GridDensity> {
        self.check_same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| (1.0 - lambda) * a + lambda * b).collect();
        Ok(GridDensity::from_raw(self.interval, values))
    }

    /// Divides out the trapezoid integral and returns the correction applied.
    pub fn renormalize(&mut self) -> f64 {
        let mass = self.integral();
        self.values.iter_mut().for_each(|v| *v /= mass);
        mass - 1.0
    }
}

fn check_values(values: &[f64]) -> Result<()> {
    if values.len() < 2 {
        return Err(domain!("grid needs at least 2 nodes, got {}", values.len()));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(domain!("density values must be finite and non-negative, found {v}"));
    }
    Ok(())
}

impl FiniteMeasure for GridDensity {
    fn interval(&self) -> Interval {
        self.interval
    }

    fn total_mass(&self) -> f64 {
        self.integral()
    }

    /// Exact integrals of the piecewise-linear density against the hat
    /// functions of a `cells`-cell grid. Breakpoints of both grids are merged
    /// so every sub-interval carries a quadratic integrand, which Simpson's
    /// rule integrates exactly.
    fn node_masses(&self, cells: usize) -> Vec<f64> {
        let iv = self.interval;
        let m = cells + 1;
        let dm = self.values.len();
        let mut w = vec![0.0; m];
        let mut breaks: Vec<f64> = iv.nodes(m);
        breaks.extend(iv.nodes(dm));
        breaks.sort_by(f64::total_cmp);
        breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * iv.width().max(1.0));
        let h = iv.grid_step(m);
        for pair in breaks.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b <= a {
                continue;
            }
            let mid = 0.5 * (a + b);
            let (k, _) = iv.locate(mid, m);
            let left = iv.node(k, m);
            let hat_right = |x: f64| ((x - left) / h).clamp(0.0, 1.0);
            let len = b - a;
            let (pa, pm, pb) = (self.value_at(a), self.value_at(mid), self.value_at(b));
            let total = len / 6.0 * (pa + 4.0 * pm + pb);
            let right = len / 6.0 * (pa * hat_right(a) + 4.0 * pm * hat_right(mid) + pb * hat_right(b));
            w[k] += total - right;
            w[k + 1] += right;
        }
        w
    }

    fn quadrature(&self) -> Vec<(f64, f64)> {
        let weights = trapezoid_weights(self.values.len(), self.step());
        self.nodes().into_iter().zip(weights.iter().zip(&self.values).map(|(t, p)| t * p)).collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DensityRepr {
    interval: Interval,
    grid: usize,
    values: Vec<f64>,
}

impl TryFrom<DensityRepr> for GridDensity {
    type Error = crate::Error;

    fn try_from(r: DensityRepr) -> Result<Self> {
        if r.grid != r.values.len() {
            return Err(domain!("grid size {} does not match {} values", r.grid, r.values.len()));
        }
        GridDensity::new(r.interval, r.values)
    }
}

impl From<GridDensity> for DensityRepr {
    fn from(d: GridDensity) -> Self {
        DensityRepr { interval: d.interval, grid: d.values.len(), values: d.values }
    }
}
