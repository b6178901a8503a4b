//! The continuum-of-urns scheme.
//!
//! Row samplers:
//!
//! * [`cou_direct`] draws an i.i.d. driving sequence `Y_1, ..., Y_n` and runs
//!   an independent urn at every atom that shows up in it. Row `i` contains
//!   atom `s` when the block of urn element `i` was opened by a row `t` with
//!   `Y_t{s} = 1`.
//! * [`cou_sequential`] / [`predictive_step`] add rows one at a time: old
//!   atoms persist with probability `f(n+1, k+1) / f(n, k)` and
//!   `Poisson(gamma Delta_{n+1})` new atoms arrive.
//!
//! The directing measure `H` is built either round by round (atoms first seen
//! in row `m`) or block by block (atoms carried by the `t`-th urn block).

use std::collections::HashSet;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::combinatorics::FeatureAllocation;
use crate::eppf::PartitionModel;
use crate::error::{invalid, Error, Result};
use crate::measures::{
    poisson_count, sample_bernoulli_with, Atom, AtomId, BaseMeasure, BernoulliRealization,
    HazardMeasureSpec, IdSource, Origin,
};
use crate::urn::{
    sample_kernel, sample_posterior_atom, stick_frequencies, urn_step, AtomPrior, KernelOptions,
    UrnState,
};

/// Where an atom of a sampled directing measure comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AtomOrigin {
    /// First seen in row `m` (1-based).
    Round(u64),
    /// Carried by urn block `t` (1-based).
    Block(u64),
    /// A fixed atom of the hazard measure.
    Fixed,
}

impl fmt::Display for AtomOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AtomOrigin::Round(m) => write!(f, "round:{m}"),
            AtomOrigin::Block(t) => write!(f, "block:{t}"),
            AtomOrigin::Fixed => write!(f, "fixed"),
        }
    }
}

impl std::str::FromStr for AtomOrigin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unknown atom origin {s:?}"));
        if s == "fixed" {
            return Ok(AtomOrigin::Fixed);
        }
        let (tag, idx) = s.split_once(':').ok_or_else(bad)?;
        let idx: u64 = idx.parse().map_err(|_| bad())?;
        if idx == 0 {
            return Err(bad());
        }
        match tag {
            "round" => Ok(AtomOrigin::Round(idx)),
            "block" => Ok(AtomOrigin::Block(idx)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HazardAtom {
    pub id: AtomId,
    pub location: f64,
    pub weight: f64,
    pub origin: AtomOrigin,
}

type RawHazardAtom = (AtomId, f64, f64, String);

/// A draw of the directing measure: `dust * B0 + sum_i weight_i delta_{s_i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRealization", into = "RawRealization")]
pub struct AtomicHazardRealization {
    dust: f64,
    atoms: Vec<HazardAtom>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRealization {
    dust: f64,
    atoms: Vec<RawHazardAtom>,
}

impl TryFrom<RawRealization> for AtomicHazardRealization {
    type Error = Error;

    fn try_from(raw: RawRealization) -> Result<Self> {
        let atoms = raw
            .atoms
            .into_iter()
            .map(|(id, location, weight, tag)| {
                Ok(HazardAtom {
                    id,
                    location,
                    weight,
                    origin: tag.parse()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(raw.dust, atoms)
    }
}

impl From<AtomicHazardRealization> for RawRealization {
    fn from(h: AtomicHazardRealization) -> Self {
        RawRealization {
            dust: h.dust,
            atoms: h
                .atoms
                .into_iter()
                .map(|a| (a.id, a.location, a.weight, a.origin.to_string()))
                .collect(),
        }
    }
}

impl AtomicHazardRealization {
    pub fn new(dust: f64, atoms: Vec<HazardAtom>) -> Result<Self> {
        if !(dust >= 0.0 && dust.is_finite()) {
            return invalid(format!("dust coefficient must be finite and nonnegative, got {dust}"));
        }
        let mut ids = HashSet::with_capacity(atoms.len());
        for a in &atoms {
            if !(a.weight > 0.0 && a.weight <= 1.0) {
                return invalid(format!("atom weight {} outside (0, 1]", a.weight));
            }
            if !(0.0..1.0).contains(&a.location) {
                return invalid(format!("atom location {} outside [0, 1)", a.location));
            }
            if !ids.insert(a.id) {
                return invalid(format!("duplicate atom id {}", a.id.0));
            }
        }
        Ok(Self { dust, atoms })
    }

    /// Coefficient of the nonatomic part, `Delta * gamma`.
    pub fn dust(&self) -> f64 {
        self.dust
    }

    pub fn atoms(&self) -> &[HazardAtom] {
        &self.atoms
    }

    /// `sum_i weight_i`.
    pub fn atomic_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// `H(Omega)`.
    pub fn total_mass(&self) -> f64 {
        self.dust + self.atomic_mass()
    }

    /// A Bernoulli process with hazard measure this realization. Dust points
    /// get fresh ids from `ids`.
    pub fn sample_given<R: Rng + ?Sized>(
        &self,
        base: &BaseMeasure,
        ids: &mut IdSource,
        rng: &mut R,
    ) -> BernoulliRealization {
        let mut atoms = Vec::new();
        for a in &self.atoms {
            if a.weight >= 1.0 || rng.random::<f64>() < a.weight {
                let origin = if a.origin == AtomOrigin::Fixed {
                    Origin::Fixed
                } else {
                    Origin::Ordinary
                };
                atoms.push(Atom(a.id, a.location, origin));
            }
        }
        for _ in 0..poisson_count(self.dust, rng) {
            atoms.push(Atom(ids.fresh(), base.sample(rng), Origin::Ordinary));
        }
        BernoulliRealization { atoms }
    }

    /// Smallest id not used by any atom and not below `floor`.
    pub fn next_free_id(&self, floor: u64) -> u64 {
        self.atoms.iter().map(|a| a.id.0 + 1).max().unwrap_or(0).max(floor)
    }
}

fn check_rows(n: usize) -> Result<()> {
    if n == 0 {
        return invalid("need at least one row");
    }
    Ok(())
}

/// Rows `X_1, ..., X_n` of the scheme built from an explicit driving sequence.
///
/// Urns are only run for atoms that appear in some `Y_j`; an atom absent from
/// the whole driving sequence can never appear.
pub fn cou_direct<R: Rng + ?Sized>(
    spec: &HazardMeasureSpec,
    model: &PartitionModel,
    n: usize,
    rng: &mut R,
) -> Result<Vec<BernoulliRealization>> {
    model.require_crp("cou_direct")?;
    check_rows(n)?;
    let mut ids = IdSource::after_fixed(spec);
    let mut incidences: Vec<(Atom, usize)> = Vec::new();
    for j in 0..n {
        let y = sample_bernoulli_with(spec, &mut ids, rng);
        incidences.extend(y.atoms.into_iter().map(|a| (a, j)));
    }
    incidences.sort_by_key(|(a, j)| (a.id(), *j));

    let mut rows = vec![BernoulliRealization::default(); n];
    let mut present = vec![false; n];
    let mut urn = UrnState::new();
    for group in incidences.chunk_by(|a, b| a.0.id() == b.0.id()) {
        present.fill(false);
        for (_, j) in group {
            present[*j] = true;
        }
        urn.clear();
        for _ in 0..n {
            urn_step(model, &mut urn, rng)?;
        }
        let atom = group[0].0;
        for (i, &t) in urn.arrival().iter().enumerate() {
            if present[t] {
                rows[i].atoms.push(atom);
            }
        }
    }
    Ok(rows)
}

/// An ordinary atom tracked by [`CouState`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrdinaryAtom {
    pub id: AtomId,
    pub location: f64,
    /// Number of rows containing the atom.
    pub count: u64,
    /// First row containing it, 1-based.
    pub first_row: u64,
}

#[derive(Debug, Clone, PartialEq)]
struct FixedUrn {
    urn: UrnState,
    marks: Vec<bool>,
}

/// State of a sequential run after `n` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CouState {
    n: u64,
    ordinary: Vec<OrdinaryAtom>,
    fixed: Vec<FixedUrn>,
    ids: IdSource,
}

impl CouState {
    /// The state before any row, with one empty urn per fixed atom of `spec`.
    pub fn new(spec: &HazardMeasureSpec) -> Self {
        Self {
            n: 0,
            ordinary: Vec::new(),
            fixed: vec![
                FixedUrn {
                    urn: UrnState::new(),
                    marks: Vec::new()
                };
                spec.fixed_atoms().len()
            ],
            ids: IdSource::after_fixed(spec),
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn ordinary_atoms(&self) -> &[OrdinaryAtom] {
        &self.ordinary
    }

    /// Urn of the `i`-th fixed atom and the marks of its blocks.
    pub fn fixed_urn(&self, i: usize) -> Option<(&UrnState, &[bool])> {
        self.fixed.get(i).map(|f| (&f.urn, f.marks.as_slice()))
    }
}

/// Draws `X_{n+1}` given the state after `n` rows and advances the state.
pub fn predictive_step<R: Rng + ?Sized>(
    spec: &HazardMeasureSpec,
    model: &PartitionModel,
    state: &mut CouState,
    rng: &mut R,
) -> Result<BernoulliRealization> {
    if state.fixed.len() != spec.fixed_atoms().len() {
        return invalid("state was built for a different set of fixed atoms");
    }
    if !spec.is_nonatomic() {
        model.require_crp("fixed-atom urns")?;
    }
    let n = state.n;
    let mut atoms = Vec::new();
    for (i, (fx, a)) in state.fixed.iter_mut().zip(spec.fixed_atoms()).enumerate() {
        let block = urn_step(model, &mut fx.urn, rng)?;
        if block == fx.marks.len() {
            fx.marks.push(a.mass >= 1.0 || rng.random::<f64>() < a.mass);
        }
        if fx.marks[block] {
            atoms.push(Atom(HazardMeasureSpec::fixed_id(i), a.location, Origin::Fixed));
        }
    }
    for atom in state.ordinary.iter_mut() {
        if rng.random::<f64>() < model.persistence_prob(n, atom.count)? {
            atom.count += 1;
            atoms.push(Atom(atom.id, atom.location, Origin::Ordinary));
        }
    }
    let fresh = poisson_count(spec.gamma() * model.new_token_rate(n + 1)?, rng);
    for _ in 0..fresh {
        let atom = OrdinaryAtom {
            id: state.ids.fresh(),
            location: spec.base().sample(rng),
            count: 1,
            first_row: n + 1,
        };
        state.ordinary.push(atom);
        atoms.push(Atom(atom.id, atom.location, Origin::Ordinary));
    }
    state.n += 1;
    Ok(BernoulliRealization { atoms })
}

/// Rows `X_1, ..., X_n` built one at a time by [`predictive_step`].
pub fn cou_sequential<R: Rng + ?Sized>(
    spec: &HazardMeasureSpec,
    model: &PartitionModel,
    n: usize,
    rng: &mut R,
) -> Result<Vec<BernoulliRealization>> {
    if !spec.is_nonatomic() {
        return invalid("cou_sequential handles nonatomic hazard measures only; use cou_direct for fixed atoms");
    }
    check_rows(n)?;
    let mut state = CouState::new(spec);
    (0..n).map(|_| predictive_step(spec, model, &mut state, rng)).collect()
}

/// `int_{(0,1]} (1-p)^{m-1} nu1(dp)`: the ordinary part of `f(m, 1)`.
fn ordinary_round_rate(model: &PartitionModel, m: u64) -> Result<f64> {
    Ok((model.f(m, 1)? - model.dust()).max(0.0))
}

/// `gamma int_{(0,1]} (1-p)^{k-1} nu1(dp)`, the expected number of atoms of
/// `X_1` first seen after round `k - 1`.
pub fn truncation_bound(model: &PartitionModel, gamma: f64, k: u64) -> Result<f64> {
    if k == 0 {
        return invalid("truncation_bound needs k >= 1");
    }
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return invalid(format!("mass parameter must be finite and nonnegative, got {gamma}"));
    }
    Ok(gamma * ordinary_round_rate(model, k)?)
}

fn push_round<R: Rng + ?Sized>(
    spec: &HazardMeasureSpec,
    model: &PartitionModel,
    m: u64,
    ids: &mut IdSource,
    opts: &KernelOptions,
    atoms: &mut Vec<HazardAtom>,
    rng: &mut R,
) -> Result<()> {
    let count = poisson_count(spec.gamma() * ordinary_round_rate(model, m)?, rng);
    for _ in 0..count {
        let weight = model.sample_tilted(0, m - 1, opts.max_attempts, rng)?;
        let location = spec.base().sample(rng);
        if weight > 0.0 {
            atoms.push(HazardAtom {
                id: ids.fresh(),
                location,
                weight,
                origin: AtomOrigin::Round(m),
            });
        }
    }
    Ok(())
}

fn check_rounds(rounds: u64) -> Result<()> {
    if rounds == 0 {
        return invalid("need at least one round");
    }
    Ok(())
}

/// Ordinary part of the directing measure, rounds `1..=rounds`.
///
/// Round `m` is a Poisson process with intensity
/// `gamma B0(ds) (1-p)^{m-1} nu1(dp)` on `(0, 1]`. Fixed atoms of `spec` are
/// ignored; see [`sample_directing_measure`].
pub fn gbp_stick_by_round<R: Rng + ?Sized>(
    spec: &HazardMeasureSpec,
    model: &PartitionModel,
    rounds: u64,
    rng: &mut R,
) -> Result<AtomicHazardRealization> {
    check_rounds(rounds)?;
    let opts = KernelOptions::default();
    let mut ids = IdSource::after_fixed(spec);
    let mut atoms = Vec::new();
    for m in 1..=rounds {
        push_round(spec, model, m, &mut ids, &opts, &mut atoms, rng)?;
    }
    AtomicHazardRealization::new(model.dust() * spec.gamma(), atoms)
}

/// Ordinary part of the directing measure, blocks `1..=blocks`.
///
/// Block `t` holds `Poisson(gamma)` atoms, each weighted by an independent
/// copy of the limiting frequency `P_t` of the `t`-th urn block.
pub fn gbp_stick_by_block<R: Rng>(
    spec: &HazardMeasureSpec,
    model: &PartitionModel,
    blocks: u64,
    rng: &mut R,
) -> Result<AtomicHazardRealization> {
    check_rounds(blocks)?;
    if model.stick_law().is_none() {
        return Err(Error::Unsupported(
            "block-wise construction needs a stick-breaking law".into(),
        ));
    }
    let mut ids = IdSource::after_fixed(spec);
    let mut atoms = Vec::new();
    for t in 1..=blocks {
        let count = poisson_count(spec.gamma(), rng);
        for _ in 0..count {
            let weight = stick_frequencies(model, t as usize, rng)?.weights[t as usize - 1];
            let location = spec.base().sample(rng);
            if weight > 0.0 {
                atoms.push(HazardAtom {
                    id: ids.fresh(),
                    location,
                    weight,
                    origin: AtomOrigin::Block(t),
                });
            }
        }
    }
    AtomicHazardRealization::new(model.dust() * spec.gamma(), atoms)
}

/// Fixed atoms drawn from the kernel plus `rounds` ordinary rounds.
pub fn sample_directing_measure<R: Rng>(
    spec: &HazardMeasureSpec,
    model: &PartitionModel,
    rounds: u64,
    opts: &KernelOptions,
    rng: &mut R,
) -> Result<AtomicHazardRealization> {
    check_rounds(rounds)?;
    let mut atoms = Vec::new();
    for (i, a) in spec.fixed_atoms().iter().enumerate() {
        let weight = sample_kernel(model, a.mass, opts, rng)?;
        if weight > 0.0 {
            atoms.push(HazardAtom {
                id: HazardMeasureSpec::fixed_id(i),
                location: a.location,
                weight,
                origin: AtomOrigin::Fixed,
            });
        }
    }
    let mut ids = IdSource::after_fixed(spec);
    for m in 1..=rounds {
        push_round(spec, model, m, &mut ids, opts, &mut atoms, rng)?;
    }
    AtomicHazardRealization::new(model.dust() * spec.gamma(), atoms)
}

/// Draws the directing measure given the first `n` rows.
///
/// Observed atoms seen `k` times get posterior weights; an atom seen once may
/// instead be explained by the dust, in which case it carries weight 0 and is
/// left out. The unseen ordinary part is rounds `n+1 ..= n+rounds` of the
/// round-wise construction. `None` means no observations.
pub fn posterior_sample<R: Rng>(
    spec: &HazardMeasureSpec,
    model: &PartitionModel,
    observed: Option<&FeatureAllocation>,
    rounds: u64,
    opts: &KernelOptions,
    rng: &mut R,
) -> Result<AtomicHazardRealization> {
    if !spec.is_nonatomic() {
        return invalid("posterior_sample handles the ordinary part only; draw fixed atoms with sample_posterior_atom");
    }
    check_rounds(rounds)?;
    let mut atoms = Vec::new();
    let mut n = 0u64;
    let mut next_id = 0u64;
    if let Some(alloc) = observed {
        n = alloc.n() as u64;
        let records = match alloc.atoms() {
            Some(r) => r.clone(),
            None if alloc.total_atoms() == 0 => Default::default(),
            None => return invalid("posterior sampling needs atom ids and locations"),
        };
        let dust = model.dust();
        let p_dust = if dust > 0.0 { dust / model.f(n, 1)? } else { 0.0 };
        for (h, recs) in &records {
            let k = h.rows() as u64;
            let first = h.first_row().expect("nonzero history") as u64 + 1;
            for rec in recs {
                next_id = next_id.max(rec.0 .0 + 1);
                if k == 1 && p_dust > 0.0 && rng.random::<f64>() < p_dust {
                    continue;
                }
                let weight = sample_posterior_atom(model, AtomPrior::Ordinary, k, n, opts, rng)?;
                if weight > 0.0 {
                    atoms.push(HazardAtom {
                        id: rec.0,
                        location: rec.1,
                        weight,
                        origin: AtomOrigin::Round(first),
                    });
                }
            }
        }
    }
    let mut ids = IdSource::starting_at(next_id);
    for m in n + 1..=n + rounds {
        push_round(spec, model, m, &mut ids, opts, &mut atoms, rng)?;
    }
    AtomicHazardRealization::new(model.dust() * spec.gamma(), atoms)
}
