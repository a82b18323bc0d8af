use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{FiniteMeasure, Interval, PROBABILITY_TOL};
use crate::error::{contract, domain, Result};

/// Atoms closer than this are merged into one.
pub const MERGE_TOL: f64 = 1e-12;

/// A single weighted point mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub position: f64,
    pub weight: f64,
}

/// A finite measure made of weighted Dirac masses on an interval.
///
/// Atoms are kept sorted by position with duplicates (within [`MERGE_TOL`])
/// merged, so two measures with the same mass distribution have the same
/// representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AtomicRepr", into = "AtomicRepr")]
pub struct AtomicMeasure {
    interval: Interval,
    atoms: Vec<Atom>,
}

impl AtomicMeasure {
    pub fn new(interval: Interval, atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut list = Vec::new();
        for (position, weight) in atoms {
            interval.check(position, "atom position")?;
            if !weight.is_finite() || weight < 0.0 {
                return Err(domain!("atom weight must be finite and non-negative, got {weight}"));
            }
            list.push(Atom { position, weight });
        }
        list.sort_by(|a, b| a.position.total_cmp(&b.position));
        let mut merged: Vec<Atom> = Vec::with_capacity(list.len());
        for atom in list {
            match merged.last_mut() {
                Some(last) if atom.position - last.position < MERGE_TOL => last.weight += atom.weight,
                _ => merged.push(atom),
            }
        }
        Ok(Self { interval, atoms: merged })
    }

    /// Unit point mass at `x`.
    pub fn dirac(x: f64, interval: Interval) -> Result<Self> {
        interval.check(x, "dirac position")?;
        Ok(Self { interval, atoms: vec![Atom { position: x, weight: 1.0 }] })
    }

    /// Equal weights `1/m` on the `m` uniform grid nodes of `interval`.
    pub fn uniform_atoms(interval: Interval, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(domain!("uniform atom grid needs at least 2 nodes, got {m}"));
        }
        let w = 1.0 / m as f64;
        Ok(Self {
            interval,
            atoms: interval.nodes(m).into_iter().map(|position| Atom { position, weight: w }).collect(),
        })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn is_probability(&self) -> bool {
        (self.total_mass() - 1.0).abs() <= PROBABILITY_TOL
    }

    /// `π + α(δ_b − π)`: every weight scaled by `1 − α`, then mass `α` added at `b`.
    pub fn mix_update(&self, b: f64, alpha: f64) -> Result<Self> {
        let mut next = self.clone();
        next.mix_update_in_place(b, alpha)?;
        Ok(next)
    }

    pub fn mix_update_in_place(&mut self, b: f64, alpha: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(domain!("mixing weight alpha must lie in [0, 1], got {alpha}"));
        }
        self.interval.check(b, "update target")?;
        if alpha == 0.0 {
            return Ok(());
        }
        if alpha == 1.0 {
            self.atoms.clear();
            self.atoms.push(Atom { position: b, weight: 1.0 });
            return Ok(());
        }
        let keep = 1.0 - alpha;
        for atom in &mut self.atoms {
            atom.weight *= keep;
        }
        let idx = self.atoms.partition_point(|a| a.position < b);
        let near = |k: usize| self.atoms.get(k).is_some_and(|a: &Atom| (a.position - b).abs() < MERGE_TOL);
        if near(idx) {
            self.atoms[idx].weight += alpha;
        } else if idx > 0 && near(idx - 1) {
            self.atoms[idx - 1].weight += alpha;
        } else {
            self.atoms.insert(idx, Atom { position: b, weight: alpha });
        }
        Ok(())
    }

    /// Pools atoms into `bins` uniform cells, each pooled atom sitting at the
    /// weighted mean position of its cell. Mass never leaves its cell, so the
    /// bounded-Lipschitz error is at most one cell width.
    pub fn compact(&self, bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(domain!("compaction needs at least 2 bins, got {bins}"));
        }
        // a single atom pools to itself; keep its position bit-exact
        if self.atoms.len() == 1 {
            return Ok(self.clone());
        }
        let cell_of = |x: f64| {
            let t = (x - self.interval.lo()) / self.interval.width() * bins as f64;
            (t.max(0.0) as usize).min(bins - 1)
        };
        let mut pooled: Vec<Atom> = Vec::new();
        let mut current: Option<(usize, f64, f64)> = None;
        let flush = |cell: Option<(usize, f64, f64)>, out: &mut Vec<Atom>| {
            if let Some((_, mass, moment)) = cell {
                if mass > 0.0 {
                    let position = self.clamp_position(moment / mass);
                    out.push(Atom { position, weight: mass });
                }
            }
        };
        for atom in &self.atoms {
            let cell = cell_of(atom.position);
            match current.as_mut() {
                Some((c, mass, moment)) if *c == cell => {
                    *mass += atom.weight;
                    *moment += atom.weight * atom.position;
                }
                _ => {
                    flush(current.take(), &mut pooled);
                    current = Some((cell, atom.weight, atom.weight * atom.position));
                }
            }
        }
        flush(current, &mut pooled);
        Ok(Self { interval: self.interval, atoms: pooled })
    }

    fn clamp_position(&self, x: f64) -> f64 {
        x.clamp(self.interval.lo(), self.interval.hi())
    }

    /// Draws an atom position with probability equal to its weight.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let total = self.total_mass();
        if (total - 1.0).abs() > PROBABILITY_TOL {
            return Err(contract!("sampling requires a probability measure, total mass is {total}"));
        }
        let u: f64 = rng.random::<f64>() * total;
        let mut acc = 0.0;
        for atom in &self.atoms {
            acc += atom.weight;
            if u < acc {
                return Ok(atom.position);
            }
        }
        // Rounding left `u` past the last partial sum.
        Ok(self.atoms.iter().rev().find(|a| a.weight > 0.0).map_or(self.atoms[0].position, |a| a.position))
    }
}

impl FiniteMeasure for AtomicMeasure {
    fn interval(&self) -> Interval {
        self.interval
    }

    fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    fn node_masses(&self, cells: usize) -> Vec<f64> {
        let m = cells + 1;
        let mut w = vec![0.0; m];
        for atom in &self.atoms {
            let (k, f) = self.interval.locate(atom.position, m);
            w[k] += atom.weight * (1.0 - f);
            w[k + 1] += atom.weight * f;
        }
        w
    }

    fn quadrature(&self) -> Vec<(f64, f64)> {
        self.atoms.iter().map(|a| (a.position, a.weight)).collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomicRepr {
    interval: Interval,
    atoms: Vec<[f64; 2]>,
}

impl TryFrom<AtomicRepr> for AtomicMeasure {
    type Error = crate::Error;

    fn try_from(r: AtomicRepr) -> Result<Self> {
        AtomicMeasure::new(r.interval, r.atoms.into_iter().map(|[x, w]| (x, w)))
    }
}

impl From<AtomicMeasure> for AtomicRepr {
    fn from(m: AtomicMeasure) -> Self {
        AtomicRepr { interval: m.interval, atoms: m.atoms.iter().map(|a| [a.position, a.weight]).collect() }
    }
}
