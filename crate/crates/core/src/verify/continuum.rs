//! Discretized hazard measures against the continuum.
//!
//! `m` fixed atoms of mass `gamma / m` at the midpoints of `[i/m, (i+1)/m)`
//! put mass `gamma |A| + O(1/m)` on every interval `A`, and exactly
//! `gamma |A|` on dyadic intervals once `m` is a large enough power of two, so
//! the discretized hazard measures converge setwise. Under setwise
//! convergence the allocation laws of the urn schemes converge; under merely
//! weak convergence they need not (see the `m = gamma` case, where every atom
//! is certain to appear).

use crate::cou::{cou_direct, cou_sequential};
use crate::eppf::PartitionModel;
use crate::error::{invalid, Result};
use crate::measures::{BaseMeasure, FixedAtom, HazardMeasureSpec};
use crate::rng::derive_seed;
use crate::stats::tv_two_sample;

use super::suites::allocation_histogram;

/// Equally spaced purely atomic approximation of `gamma * Uniform[0, 1)`.
pub fn discretized_spec(gamma: f64, m: usize) -> Result<HazardMeasureSpec> {
    if m == 0 {
        return invalid("need at least one atom");
    }
    let mass = gamma / m as f64;
    if !(mass > 0.0 && mass <= 1.0) {
        return invalid(format!("atom mass gamma/m = {mass} outside (0, 1]"));
    }
    let atoms = (0..m)
        .map(|i| FixedAtom {
            location: (i as f64 + 0.5) / m as f64,
            mass,
        })
        .collect();
    HazardMeasureSpec::new(0.0, BaseMeasure::Uniform, atoms)
}

/// TV distance between the allocation law of `n` rows under each
/// discretization `m` and under the nonatomic hazard measure of mass `gamma`,
/// both estimated from `samples` draws. Needs `n <= 4`.
pub fn continuum_limit_experiment(
    model: &PartitionModel,
    gamma: f64,
    n: usize,
    atom_counts: &[usize],
    samples: u64,
    seed: u64,
) -> Result<Vec<(usize, f64)>> {
    model.require_crp("continuum_limit_experiment")?;
    let specs = atom_counts
        .iter()
        .map(|&m| discretized_spec(gamma, m))
        .collect::<Result<Vec<_>>>()?;
    let continuum = HazardMeasureSpec::nonatomic(gamma)?;
    let reference = allocation_histogram(derive_seed(seed, "continuum"), samples, n, |rng| {
        cou_sequential(&continuum, model, n, rng)
    })?;
    let mut out = Vec::with_capacity(atom_counts.len());
    for (&m, spec) in atom_counts.iter().zip(&specs) {
        let hist = allocation_histogram(derive_seed(seed, &format!("discrete-{m}")), samples, n, |rng| {
            cou_direct(spec, model, n, rng)
        })?;
        out.push((m, tv_two_sample(&hist, &reference)?));
    }
    Ok(out)
}
