//! Hazard measures, Bernoulli processes and Poisson processes on `[0, 1)`.
//!
//! The base space is the unit interval. Any standard Borel space with a
//! finite nonatomic measure is measure-isomorphic to an interval with
//! Lebesgue measure, so nothing combinatorial is lost by this choice.
//!
//! Atoms carry an [`AtomId`] token; sharing of an atom across a sequence of
//! realizations is tracked by id rather than by floating-point location.

use std::collections::HashSet;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AtomId(pub u64);

/// Hands out fresh atom ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdSource {
    next: u64,
}

impl IdSource {
    pub fn starting_at(next: u64) -> Self {
        Self { next }
    }

    /// Ids after the ones reserved for the fixed atoms of `spec`.
    pub fn after_fixed(spec: &HazardMeasureSpec) -> Self {
        Self::starting_at(spec.fixed_atoms.len() as u64)
    }

    pub fn fresh(&mut self) -> AtomId {
        let id = AtomId(self.next);
        self.next += 1;
        id
    }
}

/// Location law on `[0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseMeasure {
    Uniform,
    /// Piecewise-constant density on equal-width bins; weights sum to one.
    Grid(Vec<f64>),
}

impl BaseMeasure {
    pub fn grid(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return invalid("grid base needs nonnegative weights");
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return invalid("grid base carries no mass");
        }
        Ok(Self::Grid(weights.into_iter().map(|w| w / total).collect()))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            BaseMeasure::Uniform => rng.random::<f64>(),
            BaseMeasure::Grid(w) => {
                let mut u = rng.random::<f64>();
                let width = 1.0 / w.len() as f64;
                let mut bin = w.len() - 1;
                for (i, wi) in w.iter().enumerate() {
                    if u < *wi {
                        bin = i;
                        break;
                    }
                    u -= wi;
                }
                ((bin as f64 + rng.random::<f64>()) * width).min(1.0 - f64::EPSILON)
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match self {
            BaseMeasure::Uniform => x,
            BaseMeasure::Grid(w) => {
                let scaled = x * w.len() as f64;
                let full = (scaled.floor() as usize).min(w.len());
                let mut acc: f64 = w[..full].iter().sum();
                if full < w.len() {
                    acc += w[full] * (scaled - full as f64);
                }
                acc
            }
        }
    }

    pub fn mass(&self, set: Interval) -> f64 {
        self.cdf(set.hi) - self.cdf(set.lo)
    }
}

/// Half-open interval `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn unit() -> Self {
        Self { lo: 0.0, hi: 1.0 }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x < self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedAtom {
    pub location: f64,
    pub mass: f64,
}

/// A finite hazard measure: `gamma * base` plus fixed atoms with masses in
/// `(0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct HazardMeasureSpec {
    gamma: f64,
    base: BaseMeasure,
    fixed_atoms: Vec<FixedAtom>,
}

impl HazardMeasureSpec {
    pub fn new(gamma: f64, base: BaseMeasure, fixed_atoms: Vec<FixedAtom>) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return invalid(format!("nonatomic mass must be finite and nonnegative, got {gamma}"));
        }
        let mut seen = HashSet::new();
        for a in &fixed_atoms {
            if !(0.0..1.0).contains(&a.location) {
                return invalid(format!("atom location {} outside [0, 1)", a.location));
            }
            if !(a.mass > 0.0 && a.mass <= 1.0) {
                return invalid(format!("atom mass {} outside (0, 1]", a.mass));
            }
            if !seen.insert(a.location.to_bits()) {
                return invalid(format!("duplicate atom location {}", a.location));
            }
        }
        Ok(Self {
            gamma,
            base,
            fixed_atoms,
        })
    }

    pub fn nonatomic(gamma: f64) -> Result<Self> {
        Self::new(gamma, BaseMeasure::Uniform, Vec::new())
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn base(&self) -> &BaseMeasure {
        &self.base
    }

    pub fn fixed_atoms(&self) -> &[FixedAtom] {
        &self.fixed_atoms
    }

    pub fn is_nonatomic(&self) -> bool {
        self.fixed_atoms.is_empty()
    }

    /// Id of the `i`-th fixed atom.
    pub fn fixed_id(i: usize) -> AtomId {
        AtomId(i as u64)
    }

    /// Hazard mass of `[lo, hi)`.
    pub fn mass(&self, set: Interval) -> f64 {
        self.gamma * self.base.mass(set)
            + self
                .fixed_atoms
                .iter()
                .filter(|a| set.contains(a.location))
                .map(|a| a.mass)
                .sum::<f64>()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawBase {
    Named(String),
    Grid { grid: Vec<f64> },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    gamma: f64,
    #[serde(default = "default_base")]
    base: RawBase,
    #[serde(default)]
    atoms: Vec<[f64; 2]>,
}

fn default_base() -> RawBase {
    RawBase::Named("uniform".into())
}

impl TryFrom<RawSpec> for HazardMeasureSpec {
    type Error = crate::Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        let base = match raw.base {
            RawBase::Named(s) if s == "uniform" => BaseMeasure::Uniform,
            RawBase::Named(s) => return invalid(format!("unknown base measure {s:?}")),
            RawBase::Grid { grid } => BaseMeasure::grid(grid)?,
        };
        let atoms = raw
            .atoms
            .into_iter()
            .map(|[location, mass]| FixedAtom { location, mass })
            .collect();
        Self::new(raw.gamma, base, atoms)
    }
}

impl From<HazardMeasureSpec> for RawSpec {
    fn from(s: HazardMeasureSpec) -> Self {
        RawSpec {
            gamma: s.gamma,
            base: match s.base {
                BaseMeasure::Uniform => RawBase::Named("uniform".into()),
                BaseMeasure::Grid(grid) => RawBase::Grid { grid },
            },
            atoms: s.fixed_atoms.iter().map(|a| [a.location, a.mass]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Fixed,
    Ordinary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom(pub AtomId, pub f64, pub Origin);

impl Atom {
    pub fn id(&self) -> AtomId {
        self.0
    }
    pub fn location(&self) -> f64 {
        self.1
    }
    pub fn origin(&self) -> Origin {
        self.2
    }
}

/// One simple point process: a finite set of atoms. Serializes as an array
/// of `[id, location, origin]` triples.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BernoulliRealization {
    pub atoms: Vec<Atom>,
}

impl BernoulliRealization {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn count_in(&self, set: Interval) -> usize {
        self.atoms.iter().filter(|a| set.contains(a.location())).count()
    }

    pub fn contains(&self, id: AtomId) -> bool {
        self.atoms.iter().any(|a| a.id() == id)
    }
}

pub(crate) fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("finite positive mean").sample(rng) as u64
}

/// Poisson process with intensity `mass * base`.
pub fn sample_poisson_points<R: Rng + ?Sized>(
    mass: f64,
    base: &BaseMeasure,
    ids: &mut IdSource,
    rng: &mut R,
) -> Vec<(AtomId, f64)> {
    let count = poisson_count(mass, rng);
    (0..count).map(|_| (ids.fresh(), base.sample(rng))).collect()
}

/// A Bernoulli process with hazard measure `spec`, ordinary ids drawn from
/// `ids`.
pub fn sample_bernoulli_with<R: Rng + ?Sized>(
    spec: &HazardMeasureSpec,
    ids: &mut IdSource,
    rng: &mut R,
) -> BernoulliRealization {
    let mut atoms = Vec::new();
    for (i, a) in spec.fixed_atoms.iter().enumerate() {
        if a.mass >= 1.0 || rng.random::<f64>() < a.mass {
            atoms.push(Atom(HazardMeasureSpec::fixed_id(i), a.location, Origin::Fixed));
        }
    }
    for (id, loc) in sample_poisson_points(spec.gamma, &spec.base, ids, rng) {
        atoms.push(Atom(id, loc, Origin::Ordinary));
    }
    BernoulliRealization { atoms }
}

pub fn sample_bernoulli<R: Rng + ?Sized>(spec: &HazardMeasureSpec, rng: &mut R) -> BernoulliRealization {
    sample_bernoulli_with(spec, &mut IdSource::after_fixed(spec), rng)
}

/// `n^{-1} sum_i X_i(A)` for every test set `A`.
pub fn lln_average(realizations: &[BernoulliRealization], test_sets: &[Interval]) -> Result<Vec<f64>> {
    if realizations.is_empty() {
        return invalid("lln_average needs at least one realization");
    }
    let n = realizations.len() as f64;
    Ok(test_sets
        .iter()
        .map(|&set| realizations.iter().map(|x| x.count_in(set)).sum::<usize>() as f64 / n)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::stats::{chi_square_independence, correlation, mean_and_se, sample_variance};

    fn atoms(pairs: &[(f64, f64)]) -> Vec<FixedAtom> {
        pairs
            .iter()
            .map(|&(location, mass)| FixedAtom { location, mass })
            .collect()
    }

    #[test]
    fn spec_validation() {
        assert!(HazardMeasureSpec::new(-1.0, BaseMeasure::Uniform, vec![]).is_err());
        assert!(HazardMeasureSpec::new(f64::INFINITY, BaseMeasure::Uniform, vec![]).is_err());
        assert!(HazardMeasureSpec::new(1.0, BaseMeasure::Uniform, atoms(&[(0.5, 0.0)])).is_err());
        assert!(HazardMeasureSpec::new(1.0, BaseMeasure::Uniform, atoms(&[(0.5, 1.2)])).is_err());
        assert!(HazardMeasureSpec::new(1.0, BaseMeasure::Uniform, atoms(&[(1.0, 0.5)])).is_err());
        assert!(
            HazardMeasureSpec::new(1.0, BaseMeasure::Uniform, atoms(&[(0.5, 0.2), (0.5, 0.3)]))
                .is_err()
        );
    }

    #[test]
    fn spec_json() {
        let s: HazardMeasureSpec =
            serde_json::from_str(r#"{"gamma":2.0,"base":"uniform","atoms":[[0.25,0.6],[0.5,1.0]]}"#)
                .unwrap();
        assert_eq!(s.gamma(), 2.0);
        assert_eq!(s.fixed_atoms().len(), 2);
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(text, r#"{"gamma":2.0,"base":"uniform","atoms":[[0.25,0.6],[0.5,1.0]]}"#);
        let g: HazardMeasureSpec =
            serde_json::from_str(r#"{"gamma":1.0,"base":{"grid":[1.0,3.0]}}"#).unwrap();
        assert!((g.base().cdf(0.5) - 0.25).abs() < 1e-15);
        assert!(serde_json::from_str::<HazardMeasureSpec>(r#"{"gamma":1.0,"base":"normal"}"#).is_err());
    }

    #[test]
    fn empty_and_certain() {
        let mut rng = seeded(1);
        let empty = HazardMeasureSpec::nonatomic(0.0).unwrap();
        assert!(sample_bernoulli(&empty, &mut rng).is_empty());
        let certain = HazardMeasureSpec::new(0.0, BaseMeasure::Uniform, atoms(&[(0.3, 1.0)])).unwrap();
        for _ in 0..100 {
            let x = sample_bernoulli(&certain, &mut rng);
            assert_eq!(x.len(), 1);
            assert_eq!(x.atoms[0].origin(), Origin::Fixed);
        }
        assert!(sample_poisson_points(0.0, &BaseMeasure::Uniform, &mut IdSource::starting_at(0), &mut rng)
            .is_empty());
    }

    #[test]
    fn poisson_count_moments() {
        let mut rng = seeded(2);
        let spec = HazardMeasureSpec::nonatomic(2.0).unwrap();
        let counts: Vec<f64> = (0..10_000)
            .map(|_| sample_bernoulli(&spec, &mut rng).len() as f64)
            .collect();
        let (m, se) = mean_and_se(&counts);
        assert!((m - 2.0).abs() < 3.0 * se);
        // Var of the sample variance for Poisson(l): (l + 2 l^2) / N approx
        let v = sample_variance(&counts);
        let se_v = ((2.0 + 2.0 * 4.0) / counts.len() as f64).sqrt();
        assert!((v - 2.0).abs() < 3.0 * se_v);
    }

    #[test]
    fn poisson_points_independent_halves() {
        let mut rng = seeded(3);
        let mut ids = IdSource::starting_at(0);
        let (mut left, mut right) = (Vec::new(), Vec::new());
        let mut total = Vec::new();
        for _ in 0..10_000 {
            let pts = sample_poisson_points(5.0, &BaseMeasure::Uniform, &mut ids, &mut rng);
            let l = pts.iter().filter(|p| p.1 < 0.5).count();
            left.push(l as f64);
            right.push((pts.len() - l) as f64);
            total.push(pts.len() as f64);
        }
        let (m, se) = mean_and_se(&total);
        assert!((m - 5.0).abs() < 3.0 * se);
        let (r, se) = correlation(&left, &right);
        assert!(r.abs() < 3.0 * se);
    }

    #[test]
    fn disjoint_counts_chi_square() {
        let mut rng = seeded(4);
        let spec =
            HazardMeasureSpec::new(1.5, BaseMeasure::Uniform, atoms(&[(0.2, 0.4), (0.7, 0.6)])).unwrap();
        let mut table = vec![vec![0u64; 5]; 5];
        for _ in 0..20_000 {
            let x = sample_bernoulli(&spec, &mut rng);
            let a = x.count_in(Interval::new(0.0, 0.5)).min(4);
            let b = x.count_in(Interval::new(0.5, 1.0)).min(4);
            table[a][b] += 1;
        }
        let (_, _, p) = chi_square_independence(&table);
        assert!(p > 1e-3, "p = {p}");
    }

    #[test]
    fn simple_realizations() {
        let mut rng = seeded(5);
        let spec = HazardMeasureSpec::new(3.0, BaseMeasure::Uniform, atoms(&[(0.1, 0.5)])).unwrap();
        for _ in 0..1000 {
            let x = sample_bernoulli(&spec, &mut rng);
            let ids: HashSet<_> = x.atoms.iter().map(|a| a.id()).collect();
            assert_eq!(ids.len(), x.len());
            let locs: HashSet<_> = x.atoms.iter().map(|a| a.location().to_bits()).collect();
            assert_eq!(locs.len(), x.len());
        }
    }

    #[test]
    fn mean_measure() {
        let mut rng = seeded(6);
        let spec = HazardMeasureSpec::new(2.0, BaseMeasure::grid(vec![1.0, 3.0]).unwrap(), atoms(&[(0.3, 0.25)]))
            .unwrap();
        let sets = [Interval::new(0.0, 0.5), Interval::new(0.5, 1.0), Interval::new(0.3, 0.30001)];
        let draws: Vec<_> = (0..10_000).map(|_| sample_bernoulli(&spec, &mut rng)).collect();
        for set in sets {
            let counts: Vec<f64> = draws.iter().map(|x| x.count_in(set) as f64).collect();
            let (m, se) = mean_and_se(&counts);
            assert!((m - spec.mass(set)).abs() < 3.0 * se, "{set:?}: {m} vs {}", spec.mass(set));
        }
    }

    #[test]
    fn lln_examples() {
        let mut rng = seeded(7);
        let spec = HazardMeasureSpec::new(1.0, BaseMeasure::Uniform, vec![]).unwrap();
        let x = sample_bernoulli(&spec, &mut rng);
        let avg = lln_average(std::slice::from_ref(&x), &[Interval::unit()]).unwrap();
        assert_eq!(avg[0], x.len() as f64);
        assert!(lln_average(&[], &[Interval::unit()]).is_err());

        let spec =
            HazardMeasureSpec::new(0.0, BaseMeasure::Uniform, atoms(&[(0.25, 0.3), (0.75, 0.7)])).unwrap();
        let draws: Vec<_> = (0..2000).map(|_| sample_bernoulli(&spec, &mut rng)).collect();
        let avg = lln_average(&draws, &[Interval::new(0.0, 0.5), Interval::new(0.5, 1.0)]).unwrap();
        assert!((avg[0] - 0.3).abs() < 0.05);
        assert!((avg[1] - 0.7).abs() < 0.05);
    }

    #[test]
    fn realization_json() {
        let x = BernoulliRealization {
            atoms: vec![Atom(AtomId(3), 0.5, Origin::Ordinary), Atom(AtomId(0), 0.25, Origin::Fixed)],
        };
        let text = serde_json::to_string(&x).unwrap();
        assert_eq!(text, r#"[[3,0.5,"ordinary"],[0,0.25,"fixed"]]"#);
        let back: BernoulliRealization = serde_json::from_str(&text).unwrap();
        assert_eq!(back, x);
    }
}
