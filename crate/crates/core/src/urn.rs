//! Sequential urn schemes, stick-breaking frequencies and fixed-atom kernels.
//!
//! Tokens are never materialized: an element is identified by the block it
//! joins, and the block by its first element (its arrival time).

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::eppf::{PartitionModel, DEFAULT_MAX_ATTEMPTS};
use crate::error::{invalid, Error, Result};
use crate::special::xlny;

/// Default truncation tolerance for kernel simulation.
pub const DEFAULT_KERNEL_TOL: f64 = 1e-8;
/// Default cap on stick-breaking terms for one kernel draw.
pub const DEFAULT_MAX_TERMS: u64 = 10_000_000;

/// State of a partially run urn.
///
/// `assignment[i]` is the block of element `i` (blocks numbered by first
/// appearance) and `arrival[i]` the index of the first element of that block.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UrnState {
    sizes: Vec<usize>,
    assignment: Vec<usize>,
    arrival: Vec<usize>,
    starts: Vec<usize>,
}

impl UrnState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Empties the state, keeping its allocations.
    pub fn clear(&mut self) {
        self.sizes.clear();
        self.assignment.clear();
        self.arrival.clear();
        self.starts.clear();
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn arrival(&self) -> &[usize] {
        &self.arrival
    }

    /// First element of each block.
    pub fn block_starts(&self) -> &[usize] {
        &self.starts
    }

    /// Appends the next element to `block`; `block == num_blocks()` opens a
    /// new block.
    pub fn push(&mut self, block: usize) -> Result<()> {
        let i = self.n();
        if block < self.sizes.len() {
            self.sizes[block] += 1;
            self.arrival.push(self.starts[block]);
        } else if block == self.sizes.len() {
            self.sizes.push(1);
            self.starts.push(i);
            self.arrival.push(i);
        } else {
            return invalid(format!("block {block} skips ahead of {} blocks", self.sizes.len()));
        }
        self.assignment.push(block);
        Ok(())
    }

    /// Rebuilds a state from 0-based arrival times.
    pub fn from_arrival(arrival: &[usize]) -> Result<Self> {
        let mut state = Self::new();
        let mut block_of_start = std::collections::HashMap::new();
        for (i, &t) in arrival.iter().enumerate() {
            if t > i {
                return invalid(format!("arrival time {t} of element {i} lies in the future"));
            }
            if t == i {
                let b = state.num_blocks();
                block_of_start.insert(i, b);
                state.push(b)?;
            } else {
                match block_of_start.get(&t) {
                    Some(&b) => state.push(b)?,
                    None => {
                        return invalid(format!("element {t} does not open a block"));
                    }
                }
            }
        }
        Ok(state)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UrnStateJson {
    sizes: Vec<usize>,
    arrival: Vec<usize>,
}

impl Serialize for UrnState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        UrnStateJson {
            sizes: self.sizes.clone(),
            arrival: self.arrival.iter().map(|t| t + 1).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for UrnState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = UrnStateJson::deserialize(d)?;
        if raw.arrival.iter().any(|&t| t == 0) {
            return Err(D::Error::custom("arrival times are 1-based"));
        }
        let zero_based: Vec<usize> = raw.arrival.iter().map(|t| t - 1).collect();
        let state = UrnState::from_arrival(&zero_based).map_err(D::Error::custom)?;
        if state.sizes != raw.sizes {
            return Err(D::Error::custom("block sizes disagree with arrival times"));
        }
        Ok(state)
    }
}

/// Seats one more element and returns its block (`num_blocks()` before the
/// call means a new block was opened).
pub fn urn_step<R: Rng + ?Sized>(
    model: &PartitionModel,
    state: &mut UrnState,
    rng: &mut R,
) -> Result<usize> {
    let (theta, alpha) = model.require_crp("urn stepping")?;
    let block = if state.n() == 0 {
        0
    } else {
        let mut u = rng.random::<f64>() * (theta + state.n() as f64);
        let mut chosen = state.num_blocks();
        for (j, &size) in state.sizes.iter().enumerate() {
            let w = size as f64 - alpha;
            if u < w {
                chosen = j;
                break;
            }
            u -= w;
        }
        chosen
    };
    state.push(block)?;
    Ok(block)
}

/// Runs the urn for `n` elements.
pub fn sample_partition<R: Rng + ?Sized>(
    model: &PartitionModel,
    n: usize,
    rng: &mut R,
) -> Result<UrnState> {
    if n == 0 {
        return invalid("sample_partition needs n >= 1");
    }
    let mut state = UrnState::new();
    for _ in 0..n {
        urn_step(model, &mut state, rng)?;
    }
    Ok(state)
}

/// The first `m` limiting block frequencies and the stick mass left over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencySequence {
    pub weights: Vec<f64>,
    pub residual: f64,
}

impl FrequencySequence {
    /// `P_j = V_j * prod_{i<j} (1 - V_i)`, residual `prod_j (1 - V_j)`.
    pub fn from_sticks(sticks: &[f64]) -> Self {
        let mut residual = 1.0;
        let weights = sticks
            .iter()
            .map(|v| {
                let p = v * residual;
                residual *= 1.0 - v;
                p
            })
            .collect();
        Self { weights, residual }
    }
}

pub fn stick_frequencies<R: Rng>(
    model: &PartitionModel,
    m: usize,
    rng: &mut R,
) -> Result<FrequencySequence> {
    if m == 0 {
        return invalid("stick_frequencies needs m >= 1");
    }
    let law = model.stick_law().ok_or_else(|| {
        Error::Unsupported("model has no stick-breaking law for its frequencies".into())
    })?;
    let sticks: Vec<f64> = (1..=m).map(|j| law.sample_stick(j, rng)).collect();
    Ok(FrequencySequence::from_sticks(&sticks))
}

/// Truncation controls for kernel simulation.
#[derive(Debug, Clone, Copy)]
pub struct KernelOptions {
    /// Stop once the unbroken stick mass falls below `tol`.
    pub tol: f64,
    /// Hard cap on stick terms; left-over mass is then treated as dust.
    pub max_terms: u64,
    /// Cap on rejection attempts for tilted kernels.
    pub max_attempts: u64,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_KERNEL_TOL,
            max_terms: DEFAULT_MAX_TERMS,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }
}

impl KernelOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

fn check_kernel_args(q: f64, tol: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&q) {
        return invalid(format!("kernel level q={q} outside [0, 1]"));
    }
    if !(tol > 0.0) {
        return invalid(format!("kernel tolerance must be positive, got {tol}"));
    }
    Ok(())
}

/// Draws `Q_q`, the mass the directing random measure of the urn puts on the
/// tokens marked with probability `q`.
///
/// The one-parameter CRP uses the exact `Beta(theta q, theta (1-q))` law.
/// The two-parameter CRP with `theta > 0` sums `PD(alpha, 0)` kernels over
/// `Beta(1, theta)` sticks; everything else goes through
/// [`sample_kernel_series`]. Either series stops once the unbroken mass is
/// below `opts.tol`.
pub fn sample_kernel<R: Rng>(
    model: &PartitionModel,
    q: f64,
    opts: &KernelOptions,
    rng: &mut R,
) -> Result<f64> {
    check_kernel_args(q, opts.tol)?;
    if q == 0.0 || q == 1.0 {
        return Ok(q);
    }
    match model.crp_params() {
        Some((theta, alpha)) if alpha == 0.0 => Ok(Beta::new(theta * q, theta * (1.0 - q))
            .expect("positive parameters")
            .sample(rng)),
        Some((theta, alpha)) if theta > 0.0 => sample_kernel_fragmented(theta, alpha, q, opts, rng),
        _ => sample_kernel_series(model, q, opts, rng),
    }
}

/// Log of a positive `alpha`-stable variable with Laplace transform
/// `exp(-s^alpha)` (Kanter's representation).
fn ln_positive_stable<R: Rng>(alpha: f64, rng: &mut R) -> f64 {
    let u = std::f64::consts::PI * rng.random::<f64>();
    let e = -(1.0 - rng.random::<f64>()).ln();
    (alpha * u).sin().ln() - u.sin().ln() / alpha
        + (1.0 - alpha) / alpha * (((1.0 - alpha) * u).sin().ln() - e.ln())
}

/// `Q_q` under `PD(alpha, 0)`: the marked share of two independent stable
/// subordinators run for times `q` and `1 - q`.
fn stable_kernel<R: Rng>(alpha: f64, q: f64, rng: &mut R) -> f64 {
    if q == 1.0 {
        return 1.0;
    }
    let la = q.ln() / alpha + ln_positive_stable(alpha, rng);
    let lb = (1.0 - q).ln() / alpha + ln_positive_stable(alpha, rng);
    let r = 1.0 / (1.0 + (lb - la).exp());
    if r.is_nan() {
        q
    } else {
        r
    }
}

/// `Q_q` under `PD(alpha, theta)` with `theta > 0`, using that fragmenting
/// each block of `PD(0, theta)` by an independent `PD(alpha, 0)` gives
/// `PD(alpha, theta)`. The outer sticks are `Beta(1, theta)`, so the series
/// reaches `tol` after `O(log(1/tol))` terms.
fn sample_kernel_fragmented<R: Rng>(
    theta: f64,
    alpha: f64,
    q: f64,
    opts: &KernelOptions,
    rng: &mut R,
) -> Result<f64> {
    let stick = Beta::new(1.0, theta).expect("positive parameters");
    let mut residual = 1.0;
    let mut marked = 0.0;
    let mut j = 0u64;
    while residual >= opts.tol && j < opts.max_terms {
        j += 1;
        let v: f64 = stick.sample(rng);
        marked += v * residual * stable_kernel(alpha, q, rng);
        residual *= 1.0 - v;
    }
    Ok((marked + residual * q).min(1.0))
}

/// `sum_i P_i T_i + (1 - sum_i P_i) q` with `T_i ~ Bernoulli(q)`, truncated
/// once the residual stick mass is below `opts.tol`.
///
/// The returned value is within `tol` of the untruncated series on the same
/// sticks and marks.
pub fn sample_kernel_series<R: Rng>(
    model: &PartitionModel,
    q: f64,
    opts: &KernelOptions,
    rng: &mut R,
) -> Result<f64> {
    check_kernel_args(q, opts.tol)?;
    if q == 0.0 {
        return Ok(0.0);
    }
    let law = model.stick_law().ok_or_else(|| {
        Error::Unsupported(
            "kernel simulation needs a stick-breaking law; generic models must supply one".into(),
        )
    })?;
    let mut residual = 1.0;
    let mut marked = 0.0;
    let mut j = 0u64;
    while residual >= opts.tol && j < opts.max_terms {
        j += 1;
        let v = law.sample_stick(j as usize, rng);
        let p = v * residual;
        if rng.random::<f64>() < q {
            marked += p;
        }
        residual *= 1.0 - v;
    }
    Ok((marked + residual * q).min(1.0))
}

/// Prior for an atom whose posterior weight is drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AtomPrior {
    /// An atom of the ordinary (Poisson) component.
    Ordinary,
    /// A fixed atom of hazard mass `q`.
    Fixed(f64),
}

/// Draws the weight of an atom seen `k` times in `n` rows.
///
/// Ordinary atoms follow the normalized `p^{k-1} (1-p)^{n-k} nu1(dp)` on
/// `(0, 1]`; fixed atoms tilt the kernel law by `p^k (1-p)^{n-k}` via
/// rejection.
pub fn sample_posterior_atom<R: Rng>(
    model: &PartitionModel,
    prior: AtomPrior,
    k: u64,
    n: u64,
    opts: &KernelOptions,
    rng: &mut R,
) -> Result<f64> {
    if k > n {
        return invalid(format!("k={k} exceeds n={n}"));
    }
    match prior {
        AtomPrior::Ordinary => {
            if k == 0 {
                return invalid("ordinary atoms are observed at least once");
            }
            model.sample_tilted(k - 1, n - k, opts.max_attempts, rng)
        }
        AtomPrior::Fixed(q) => {
            if !(q > 0.0 && q <= 1.0) {
                return invalid(format!("fixed atom mass {q} outside (0, 1]"));
            }
            if n == 0 {
                return sample_kernel(model, q, opts, rng);
            }
            let (kf, mf) = (k as f64, (n - k) as f64);
            let mode = kf / n as f64;
            let log_max = xlny(kf, mode) + xlny(mf, 1.0 - mode);
            for _ in 0..opts.max_attempts {
                let p = sample_kernel(model, q, opts, rng)?;
                let log_acc = xlny(kf, p) + xlny(mf, 1.0 - p) - log_max;
                if log_acc > f64::NEG_INFINITY && rng.random::<f64>().ln() < log_acc {
                    return Ok(p);
                }
            }
            Err(Error::SamplingFailure {
                attempts: opts.max_attempts,
                context: format!("fixed atom q={q} tilted by p^{k}(1-p)^{}", n - k),
            })
        }
    }
}
