//! Partition models and the quantities they induce.
//!
//! A [`PartitionModel`] is either a one-parameter Chinese restaurant process,
//! the two-parameter (Pitman-Yor) CRP, or a generic model described only by
//! its structural distribution `nu1` (the law of the limiting frequency of the
//! first block). The generic form determines `f(n, k)`, new-block rates and
//! persistence probabilities, but not the EPPF itself, so EPPF evaluation and
//! urn stepping are restricted to the CRP families.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::special::{lgamma, ln_beta, xlny};

/// Default cap on rejection-sampling attempts.
pub const DEFAULT_MAX_ATTEMPTS: u64 = 1_000_000;

/// Law of the `j`-th stick variable (`j >= 1`) of an independent
/// stick-breaking sequence `P_j = V_j * prod_{i<j} (1 - V_i)`.
pub trait StickLaw: Send + Sync + fmt::Debug {
    fn sample_stick(&self, j: usize, rng: &mut dyn RngCore) -> f64;
}

/// `V_j ~ Beta(a, b + j * b_step)`.
///
/// `BetaSticks { a: 1, b: theta, b_step: 0 }` gives the one-parameter CRP and
/// `BetaSticks { a: 1 - alpha, b: theta, b_step: alpha }` the two-parameter CRP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaSticks {
    pub a: f64,
    pub b: f64,
    pub b_step: f64,
}

impl StickLaw for BetaSticks {
    fn sample_stick(&self, j: usize, rng: &mut dyn RngCore) -> f64 {
        let b = self.b + j as f64 * self.b_step;
        Beta::new(self.a, b)
            .expect("stick parameters validated at construction")
            .sample(rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridNode {
    pub p: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContinuousPart {
    /// `Beta(a, b)` scaled by `1 - dust`.
    Beta { a: f64, b: f64 },
    /// Discrete nodes in `(0, 1]`; weights sum to `1 - dust`.
    Grid(Vec<GridNode>),
}

/// Law of the limiting frequency `P_1` of the first block.
///
/// The atom at zero (`dust`) is the expected limiting frequency of singleton
/// blocks. A `Grid` continuous part is taken as the measure itself, so every
/// integral against it is an exact weighted sum.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralDistribution {
    dust: f64,
    continuous: ContinuousPart,
}

impl StructuralDistribution {
    pub fn beta(dust: f64, a: f64, b: f64) -> Result<Self> {
        check_dust(dust)?;
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return invalid(format!("beta parameters must be positive, got ({a}, {b})"));
        }
        Ok(Self {
            dust,
            continuous: ContinuousPart::Beta { a, b },
        })
    }

    /// Builds a grid measure; weights are rescaled to total `1 - dust`.
    pub fn grid(dust: f64, nodes: Vec<(f64, f64)>) -> Result<Self> {
        check_dust(dust)?;
        let mut total = 0.0;
        for &(p, w) in &nodes {
            if !(p > 0.0 && p <= 1.0) {
                return invalid(format!("grid node {p} outside (0, 1]"));
            }
            if !(w >= 0.0 && w.is_finite()) {
                return invalid(format!("grid weight {w} must be nonnegative"));
            }
            total += w;
        }
        let scale = if total > 0.0 {
            (1.0 - dust) / total
        } else if dust == 1.0 {
            0.0
        } else {
            return invalid("grid carries no mass and dust < 1");
        };
        Ok(Self {
            dust,
            continuous: ContinuousPart::Grid(
                nodes
                    .into_iter()
                    .map(|(p, w)| GridNode { p, weight: w * scale })
                    .collect(),
            ),
        })
    }

    pub fn dust(&self) -> f64 {
        self.dust
    }

    pub fn continuous(&self) -> &ContinuousPart {
        &self.continuous
    }

    /// Total mass, dust included. Equals one up to rounding.
    pub fn total_mass(&self) -> f64 {
        self.dust + self.continuous_moment(0, 0)
    }

    /// `int_(0,1] p^i (1-p)^j nu1(dp)`.
    pub fn continuous_moment(&self, i: u64, j: u64) -> f64 {
        match &self.continuous {
            ContinuousPart::Beta { a, b } => {
                if self.dust == 1.0 {
                    return 0.0;
                }
                (1.0 - self.dust)
                    * (ln_beta(a + i as f64, b + j as f64) - ln_beta(*a, *b)).exp()
            }
            ContinuousPart::Grid(nodes) => nodes
                .iter()
                .map(|n| n.weight * n.p.powi(i as i32) * (1.0 - n.p).powi(j as i32))
                .sum(),
        }
    }

    /// Draws from the normalized measure `p^i (1-p)^j nu1(dp)` restricted to
    /// `(0, 1]`.
    ///
    /// Beta parts use rejection from `nu1` with envelope `max_p p^i (1-p)^j`,
    /// grids sample the tilted node weights directly.
    pub fn sample_tilted_continuous<R: Rng + ?Sized>(
        &self,
        i: u64,
        j: u64,
        max_attempts: u64,
        rng: &mut R,
    ) -> Result<f64> {
        match &self.continuous {
            ContinuousPart::Beta { a, b } => {
                if self.dust == 1.0 {
                    return Err(Error::Unsupported(
                        "structural distribution has no continuous part".into(),
                    ));
                }
                let proposal = Beta::new(*a, *b).expect("validated beta parameters");
                let (fi, fj) = (i as f64, j as f64);
                let mode = if i + j == 0 { 0.0 } else { fi / (fi + fj) };
                let log_max = xlny(fi, mode) + xlny(fj, 1.0 - mode);
                for _ in 0..max_attempts {
                    let p: f64 = proposal.sample(rng);
                    if p <= 0.0 {
                        continue;
                    }
                    let log_acc = xlny(fi, p) + xlny(fj, 1.0 - p) - log_max;
                    if rng.random::<f64>().ln() < log_acc {
                        return Ok(p);
                    }
                }
                Err(Error::SamplingFailure {
                    attempts: max_attempts,
                    context: format!(
                        "tilt p^{i}(1-p)^{j} of Beta({a}, {b}); acceptance rate {:.3e}",
                        self.continuous_moment(i, j) / (1.0 - self.dust) / log_max.exp()
                    ),
                })
            }
            ContinuousPart::Grid(nodes) => {
                let weights: Vec<f64> = nodes
                    .iter()
                    .map(|n| n.weight * n.p.powi(i as i32) * (1.0 - n.p).powi(j as i32))
                    .collect();
                let total: f64 = weights.iter().sum();
                if total <= 0.0 {
                    return Err(Error::Unsupported(format!(
                        "tilt p^{i}(1-p)^{j} annihilates the grid"
                    )));
                }
                let mut u = rng.random::<f64>() * total;
                for (node, w) in nodes.iter().zip(&weights) {
                    if u < *w {
                        return Ok(node.p);
                    }
                    u -= w;
                }
                // Rounding: fall back to the last node with positive weight.
                let last = weights.iter().rposition(|w| *w > 0.0).unwrap();
                Ok(nodes[last].p)
            }
        }
    }
}

fn check_dust(dust: f64) -> Result<()> {
    if (0.0..=1.0).contains(&dust) {
        Ok(())
    } else {
        invalid(format!("dust mass {dust} outside [0, 1]"))
    }
}

/// A generic model: the structural distribution plus, optionally, an
/// independent stick-breaking law for the block frequencies.
#[derive(Debug, Clone)]
pub struct GenericModel {
    pub nu1: StructuralDistribution,
    pub sticks: Option<Arc<dyn StickLaw>>,
}

#[derive(Debug, Clone)]
pub enum ModelKind {
    Crp1 { theta: f64 },
    Crp2 { theta: f64, alpha: f64 },
    Generic(GenericModel),
}

/// An EPPF family instance. Construct through [`PartitionModel::crp1`],
/// [`PartitionModel::crp2`] or [`PartitionModel::generic`], which enforce the
/// parameter ranges.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct PartitionModel {
    kind: ModelKind,
}

impl PartitionModel {
    pub fn crp1(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return invalid(format!("crp1 requires theta > 0, got {theta}"));
        }
        Ok(Self {
            kind: ModelKind::Crp1 { theta },
        })
    }

    /// Two-parameter CRP with `0 <= alpha < 1` and `theta > -alpha`.
    pub fn crp2(theta: f64, alpha: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return invalid(format!("crp2 requires 0 <= alpha < 1, got {alpha}"));
        }
        if !(theta > -alpha && theta.is_finite()) {
            return invalid(format!("crp2 requires theta > -alpha, got theta={theta}"));
        }
        Ok(Self {
            kind: ModelKind::Crp2 { theta, alpha },
        })
    }

    pub fn generic(nu1: StructuralDistribution) -> Self {
        Self {
            kind: ModelKind::Generic(GenericModel { nu1, sticks: None }),
        }
    }

    pub fn generic_with_sticks(nu1: StructuralDistribution, sticks: Arc<dyn StickLaw>) -> Self {
        Self {
            kind: ModelKind::Generic(GenericModel {
                nu1,
                sticks: Some(sticks),
            }),
        }
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    /// `(theta, alpha)` for the CRP families (`alpha = 0` for CRP1).
    pub fn crp_params(&self) -> Option<(f64, f64)> {
        match self.kind {
            ModelKind::Crp1 { theta } => Some((theta, 0.0)),
            ModelKind::Crp2 { theta, alpha } => Some((theta, alpha)),
            ModelKind::Generic(_) => None,
        }
    }

    pub(crate) fn require_crp(&self, op: &str) -> Result<(f64, f64)> {
        self.crp_params().ok_or_else(|| {
            Error::Unsupported(format!(
                "{op} needs an EPPF; generic models only determine nu1-quantities"
            ))
        })
    }

    /// The structural distribution: `Beta(1 - alpha, theta + alpha)` for the
    /// CRP families, with no dust.
    pub fn structural(&self) -> StructuralDistribution {
        match &self.kind {
            ModelKind::Generic(g) => g.nu1.clone(),
            _ => {
                let (theta, alpha) = self.crp_params().unwrap();
                StructuralDistribution::beta(0.0, 1.0 - alpha, theta + alpha)
                    .expect("crp parameters validated")
            }
        }
    }

    /// Mass `Delta` of the structural distribution at zero.
    pub fn dust(&self) -> f64 {
        match &self.kind {
            ModelKind::Generic(g) => g.nu1.dust(),
            _ => 0.0,
        }
    }

    /// Independent stick law of the block frequencies, when known.
    pub fn stick_law(&self) -> Option<Arc<dyn StickLaw>> {
        match &self.kind {
            ModelKind::Crp1 { theta } => Some(Arc::new(BetaSticks {
                a: 1.0,
                b: *theta,
                b_step: 0.0,
            })),
            ModelKind::Crp2 { theta, alpha } => Some(Arc::new(BetaSticks {
                a: 1.0 - alpha,
                b: *theta,
                b_step: *alpha,
            })),
            ModelKind::Generic(g) => g.sticks.clone(),
        }
    }

    /// `ln pi(n_1, ..., n_k)`.
    pub fn log_eppf(&self, c: &Composition) -> Result<f64> {
        let (theta, alpha) = self.require_crp("eppf evaluation")?;
        let n = c.total();
        let k = c.len();
        // [theta + alpha]_{k-1; alpha}
        let mut log_p: f64 = (1..k).map(|i| (theta + i as f64 * alpha).ln()).sum();
        // / [theta + 1]_{n-1}
        log_p -= (1..n).map(|j| (theta + j as f64).ln()).sum::<f64>();
        // * prod_i [1 - alpha]_{n_i - 1}
        for &ni in c.counts() {
            log_p += (1..ni).map(|j| (j as f64 - alpha).ln()).sum::<f64>();
        }
        Ok(log_p)
    }

    pub fn eppf(&self, c: &Composition) -> Result<f64> {
        self.log_eppf(c).map(f64::exp)
    }

    /// Probabilities of joining each existing block, and of opening a new one,
    /// given the current block sizes.
    pub fn predictive_weights(&self, sizes: &[usize]) -> Result<(Vec<f64>, f64)> {
        let (theta, alpha) = self.require_crp("predictive weights")?;
        if sizes.iter().any(|&s| s == 0) {
            return invalid("block sizes must be positive");
        }
        if sizes.is_empty() {
            return Ok((Vec::new(), 1.0));
        }
        let n: usize = sizes.iter().sum();
        let denom = theta + n as f64;
        let joins = sizes.iter().map(|&s| (s as f64 - alpha) / denom).collect();
        let fresh = (theta + sizes.len() as f64 * alpha) / denom;
        Ok((joins, fresh))
    }

    /// `ln f(n, k)` where `f(n, k) = int p^{k-1} (1-p)^{n-k} nu1(dp)`.
    pub fn ln_f(&self, n: u64, k: u64) -> Result<f64> {
        if k < 1 || k > n {
            return invalid(format!("f(n, k) needs 1 <= k <= n, got n={n}, k={k}"));
        }
        if let (Some((theta, alpha)), true) = (self.crp_params(), n <= PRODUCT_MAX_N) {
            return Ok(crp_f_product(theta, alpha, n, k).ln());
        }
        let (nf, kf) = (n as f64, k as f64);
        Ok(match &self.kind {
            ModelKind::Crp1 { theta } => {
                theta.ln() + lgamma(kf) + lgamma(theta + nf - kf) - lgamma(theta + nf)
            }
            ModelKind::Crp2 { theta, alpha } => {
                lgamma(theta + 1.0) + lgamma(kf - alpha) + lgamma(nf - kf + theta + alpha)
                    - lgamma(1.0 - alpha)
                    - lgamma(theta + alpha)
                    - lgamma(nf + theta)
            }
            ModelKind::Generic(g) => {
                let dust = if k == 1 { g.nu1.dust() } else { 0.0 };
                (dust + g.nu1.continuous_moment(k - 1, n - k)).ln()
            }
        })
    }

    pub fn f(&self, n: u64, k: u64) -> Result<f64> {
        match self.crp_params() {
            Some((theta, alpha)) if (1..=n).contains(&k) && n <= PRODUCT_MAX_N => {
                Ok(crp_f_product(theta, alpha, n, k))
            }
            _ => self.ln_f(n, k).map(f64::exp),
        }
    }

    /// Probability that the `n`-th element of the urn opens a new block,
    /// `Delta_n = f(n, 1)`; `Delta_1 = 1`.
    pub fn new_token_rate(&self, n: u64) -> Result<f64> {
        if n == 0 {
            return invalid("new_token_rate needs n >= 1");
        }
        if n == 1 && self.crp_params().is_some() {
            return Ok(1.0);
        }
        self.f(n, 1)
    }

    /// Probability that an atom seen `k` times among `n` rows appears in row
    /// `n + 1`: `f(n + 1, k + 1) / f(n, k)`.
    pub fn persistence_prob(&self, n: u64, k: u64) -> Result<f64> {
        if k < 1 || k > n {
            return invalid(format!("persistence needs 1 <= k <= n, got n={n}, k={k}"));
        }
        match self.crp_params() {
            Some((theta, alpha)) => Ok((k as f64 - alpha) / (theta + n as f64)),
            None => Ok((self.ln_f(n + 1, k + 1)? - self.ln_f(n, k)?).exp()),
        }
    }

    /// Draws from the normalized `p^i (1-p)^j nu1(dp)` on `(0, 1]`.
    ///
    /// Closed-form beta draws for the CRP families; generic models go through
    /// [`StructuralDistribution::sample_tilted_continuous`].
    pub fn sample_tilted<R: Rng + ?Sized>(
        &self,
        i: u64,
        j: u64,
        max_attempts: u64,
        rng: &mut R,
    ) -> Result<f64> {
        match &self.kind {
            ModelKind::Generic(g) => g.nu1.sample_tilted_continuous(i, j, max_attempts, rng),
            _ => {
                let (theta, alpha) = self.crp_params().unwrap();
                let a = 1.0 - alpha + i as f64;
                let b = theta + alpha + j as f64;
                Ok(Beta::new(a, b).expect("positive parameters").sample(rng))
            }
        }
    }
}

/// Largest `n` for which the CRP `f(n, k)` is taken as a product of ratios.
const PRODUCT_MAX_N: u64 = 64;

/// `[1-alpha]_{k-1} [theta+alpha]_{n-k} / [theta+1]_{n-1}`, one ratio per
/// factor of the denominator.
fn crp_f_product(theta: f64, alpha: f64, n: u64, k: u64) -> f64 {
    let num = (0..k - 1)
        .map(|i| 1.0 - alpha + i as f64)
        .chain((0..n - k).map(|j| theta + alpha + j as f64));
    num.zip(0..n - 1)
        .map(|(a, l)| a / (theta + 1.0 + l as f64))
        .product()
}

impl fmt::Display for PartitionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ModelKind::Crp1 { theta } => write!(f, "crp1(theta={theta})"),
            ModelKind::Crp2 { theta, alpha } => write!(f, "crp2(theta={theta}, alpha={alpha})"),
            ModelKind::Generic(g) => write!(f, "generic(dust={})", g.nu1.dust()),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum RawModel {
    Crp1 {
        theta: f64,
    },
    Crp2 {
        theta: f64,
        alpha: f64,
    },
    Generic {
        dust: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta: Option<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<Vec<[f64; 2]>>,
    },
}

impl TryFrom<RawModel> for PartitionModel {
    type Error = Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        match raw {
            RawModel::Crp1 { theta } => Self::crp1(theta),
            RawModel::Crp2 { theta, alpha } => Self::crp2(theta, alpha),
            RawModel::Generic { dust, beta, grid } => match (beta, grid) {
                (Some([a, b]), None) => Ok(Self::generic(StructuralDistribution::beta(dust, a, b)?)),
                (None, Some(nodes)) => Ok(Self::generic(StructuralDistribution::grid(
                    dust,
                    nodes.into_iter().map(|[p, w]| (p, w)).collect(),
                )?)),
                _ => invalid("generic model needs exactly one of \"beta\" or \"grid\""),
            },
        }
    }
}

impl From<PartitionModel> for RawModel {
    fn from(m: PartitionModel) -> Self {
        match m.kind {
            ModelKind::Crp1 { theta } => RawModel::Crp1 { theta },
            ModelKind::Crp2 { theta, alpha } => RawModel::Crp2 { theta, alpha },
            ModelKind::Generic(g) => match g.nu1.continuous {
                ContinuousPart::Beta { a, b } => RawModel::Generic {
                    dust: g.nu1.dust,
                    beta: Some([a, b]),
                    grid: None,
                },
                ContinuousPart::Grid(nodes) => RawModel::Generic {
                    dust: g.nu1.dust,
                    beta: None,
                    grid: Some(nodes.into_iter().map(|n| [n.p, n.weight]).collect()),
                },
            },
        }
    }
}

/// Block sizes `(n_1, ..., n_k)` of a partition of `[n]`, all positive.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Composition(Vec<usize>);

impl Composition {
    pub fn new(counts: Vec<usize>) -> Result<Self> {
        if counts.is_empty() {
            return invalid("a composition needs at least one block");
        }
        if counts.iter().any(|&c| c == 0) {
            return invalid("composition entries must be positive");
        }
        Ok(Self(counts))
    }

    pub fn counts(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    /// `c^{+j}`: one more element in block `j`, or a new block when `j == k`.
    pub fn grow(&self, j: usize) -> Self {
        let mut next = self.0.clone();
        if j == next.len() {
            next.push(1);
        } else {
            next[j] += 1;
        }
        Self(next)
    }
}

/// A set partition of `{0, .., n-1}` in restricted-growth form: `labels[i]`
/// is the block of element `i`, blocks numbered by first appearance.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SetPartition {
    labels: Vec<usize>,
}

impl SetPartition {
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        let mut next = 0;
        for &l in &labels {
            if l > next {
                return invalid("labels are not in restricted-growth form");
            }
            if l == next {
                next += 1;
            }
        }
        Ok(Self { labels })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_blocks(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut blocks = vec![Vec::new(); self.num_blocks()];
        for (i, &l) in self.labels.iter().enumerate() {
            blocks[l].push(i);
        }
        blocks
    }

    pub fn composition(&self) -> Composition {
        Composition(self.blocks().iter().map(Vec::len).collect())
    }
}

impl fmt::Display for SetPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .blocks()
            .iter()
            .map(|b| b.iter().map(|i| (i + 1).to_string()).collect())
            .collect();
        write!(f, "{{{}}}", parts.join("|"))
    }
}

/// Largest `n` accepted by [`enumerate_partition_probabilities`].
pub const MAX_ENUMERATION_N: usize = 8;

/// Every set partition of `[n]` with its EPPF probability.
pub fn enumerate_partition_probabilities(
    model: &PartitionModel,
    n: usize,
) -> Result<Vec<(SetPartition, f64)>> {
    if n == 0 || n > MAX_ENUMERATION_N {
        return invalid(format!(
            "enumeration supports 1 <= n <= {MAX_ENUMERATION_N}, got {n}"
        ));
    }
    model.require_crp("partition enumeration")?;
    let mut out = Vec::new();
    let mut labels = vec![0usize; n];
    enumerate_rgs(&mut labels, 1, 1, &mut |labels| {
        let part = SetPartition {
            labels: labels.to_vec(),
        };
        out.push(part);
    });
    out.into_iter()
        .map(|p| {
            let prob = model.eppf(&p.composition())?;
            Ok((p, prob))
        })
        .collect()
}

fn enumerate_rgs(labels: &mut [usize], pos: usize, blocks: usize, emit: &mut dyn FnMut(&[usize])) {
    if pos == labels.len() {
        emit(labels);
        return;
    }
    for l in 0..=blocks {
        labels[pos] = l;
        enumerate_rgs(labels, pos + 1, blocks.max(l + 1), emit);
    }
}

/// All compositions (ordered block-size vectors) summing to `n`.
pub fn compositions_of(n: usize) -> Vec<Composition> {
    fn rec(rest: usize, cur: &mut Vec<usize>, out: &mut Vec<Composition>) {
        if rest == 0 {
            out.push(Composition(cur.clone()));
            return;
        }
        for first in 1..=rest {
            cur.push(first);
            rec(rest - first, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        rec(n, &mut Vec::new(), &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn crp1(t: f64) -> PartitionModel {
        PartitionModel::crp1(t).unwrap()
    }
    fn crp2(t: f64, a: f64) -> PartitionModel {
        PartitionModel::crp2(t, a).unwrap()
    }
    fn comp(v: &[usize]) -> Composition {
        Composition::new(v.to_vec()).unwrap()
    }

    #[test]
    fn eppf_examples() {
        assert_abs_diff_eq!(crp1(1.0).eppf(&comp(&[1])).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(crp1(1.0).eppf(&comp(&[2])).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(crp1(1.0).eppf(&comp(&[1, 1])).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(crp2(1.0, 0.5).eppf(&comp(&[1, 1])).unwrap(), 0.75, epsilon = 1e-15);
        // sequential seating: theta/(1+theta) for a second table
        let t = 2.5;
        assert_abs_diff_eq!(
            crp1(t).eppf(&comp(&[1, 1])).unwrap(),
            t / (1.0 + t),
            epsilon = 1e-15
        );
    }

    #[test]
    fn eppf_rejects_generic_and_bad_compositions() {
        let g = PartitionModel::generic(StructuralDistribution::beta(0.1, 1.0, 2.0).unwrap());
        assert!(matches!(g.eppf(&comp(&[1])), Err(Error::Unsupported(_))));
        assert!(Composition::new(vec![]).is_err());
        assert!(Composition::new(vec![1, 0]).is_err());
    }

    #[test]
    fn parameter_validation() {
        assert!(PartitionModel::crp1(0.0).is_err());
        assert!(PartitionModel::crp2(1.0, 1.0).is_err());
        assert!(PartitionModel::crp2(1.0, -0.5).is_err());
        assert!(PartitionModel::crp2(-0.5, 0.5).is_err());
        assert!(PartitionModel::crp2(-0.25, 0.5).is_ok());
        assert!(StructuralDistribution::grid(0.0, vec![(0.0, 1.0)]).is_err());
        assert!(StructuralDistribution::grid(0.2, vec![]).is_err());
        assert!(StructuralDistribution::beta(1.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn predictive_examples() {
        let (w, new) = crp1(1.0).predictive_weights(&[]).unwrap();
        assert!(w.is_empty());
        assert_eq!(new, 1.0);
        let (w, new) = crp1(1.0).predictive_weights(&[2]).unwrap();
        assert_abs_diff_eq!(w[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(new, 1.0 / 3.0, epsilon = 1e-15);
        let (w, new) = crp2(1.0, 0.5).predictive_weights(&[1]).unwrap();
        assert_abs_diff_eq!(w[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(new, 0.75, epsilon = 1e-15);
    }

    #[test]
    fn f_examples() {
        for m in [crp1(1.0), crp2(1.0, 0.5), crp1(3.0)] {
            assert_abs_diff_eq!(m.f(1, 1).unwrap(), 1.0, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(crp1(1.0).f(3, 2).unwrap(), 1.0 / 6.0, epsilon = 1e-14);
        assert_abs_diff_eq!(crp2(1.0, 0.5).f(2, 2).unwrap(), 0.25, epsilon = 1e-14);
        assert!(crp1(1.0).f(2, 3).is_err());
        assert!(crp1(1.0).f(2, 0).is_err());
    }

    #[test]
    fn f_generic_includes_dust_only_at_k1() {
        let g = PartitionModel::generic(StructuralDistribution::beta(0.2, 1.0, 1.0).unwrap());
        // continuous part 0.8 * Beta(1,1): int (1-p)^{n-1} = 1/n
        assert_abs_diff_eq!(g.f(3, 1).unwrap(), 0.2 + 0.8 / 3.0, epsilon = 1e-14);
        // int p (1-p) dp = 1/6
        assert_abs_diff_eq!(g.f(3, 2).unwrap(), 0.8 / 6.0, epsilon = 1e-14);
        let grid = PartitionModel::generic(
            StructuralDistribution::grid(0.0, vec![(0.25, 0.5), (0.75, 0.5)]).unwrap(),
        );
        assert_abs_diff_eq!(
            grid.f(2, 2).unwrap(),
            0.5 * 0.25 + 0.5 * 0.75,
            epsilon = 1e-15
        );
    }

    #[test]
    fn crp_matches_generic_beta() {
        let m = crp2(1.5, 0.3);
        let g = PartitionModel::generic(StructuralDistribution::beta(0.0, 0.7, 1.8).unwrap());
        for n in 1..12 {
            for k in 1..=n {
                assert_abs_diff_eq!(m.f(n, k).unwrap(), g.f(n, k).unwrap(), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn rate_examples() {
        assert_eq!(crp1(1.0).new_token_rate(1).unwrap(), 1.0);
        assert_abs_diff_eq!(crp1(1.0).new_token_rate(2).unwrap(), 0.5, epsilon = 1e-13);
        assert_abs_diff_eq!(crp2(1.0, 0.5).new_token_rate(2).unwrap(), 0.75, epsilon = 1e-13);
        assert!(crp1(1.0).new_token_rate(0).is_err());
    }

    #[test]
    fn persistence_examples() {
        assert_abs_diff_eq!(crp2(1.0, 0.5).persistence_prob(1, 1).unwrap(), 0.25, epsilon = 1e-13);
        assert_abs_diff_eq!(crp1(1.0).persistence_prob(1, 1).unwrap(), 0.5, epsilon = 1e-13);
        assert_abs_diff_eq!(crp1(1.0).persistence_prob(2, 2).unwrap(), 2.0 / 3.0, epsilon = 1e-13);
        // closed form agrees with the f-ratio
        let m = crp2(2.0, 0.25);
        for n in 1..10u64 {
            for k in 1..=n {
                let ratio = m.f(n + 1, k + 1).unwrap() / m.f(n, k).unwrap();
                assert_abs_diff_eq!(m.persistence_prob(n, k).unwrap(), ratio, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn log_gamma_path_survives_large_n() {
        let m = crp2(1.0, 0.5);
        let v = m.f(20_000, 3).unwrap();
        assert!(v.is_finite() && v > 0.0);
        assert!(crp1(1.0).new_token_rate(10_000).unwrap() - 1e-4 < 1e-12);
    }

    #[test]
    fn enumeration_small_cases() {
        let one = enumerate_partition_probabilities(&crp1(1.0), 1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].1, 1.0);
        let two = enumerate_partition_probabilities(&crp1(1.0), 2).unwrap();
        assert_eq!(two.len(), 2);
        assert_eq!(two[0].0.to_string(), "{12}");
        assert_abs_diff_eq!(two[0].1, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(two[1].1, 0.5, epsilon = 1e-15);
        let three = enumerate_partition_probabilities(&crp1(1.0), 3).unwrap();
        let p = three.iter().find(|(p, _)| p.to_string() == "{12|3}").unwrap().1;
        assert_abs_diff_eq!(p, 1.0 / 6.0, epsilon = 1e-15);
        let eight = enumerate_partition_probabilities(&crp2(1.0, 0.5), 8).unwrap();
        assert_eq!(eight.len(), 4140);
        assert_abs_diff_eq!(eight.iter().map(|x| x.1).sum::<f64>(), 1.0, epsilon = 1e-10);
        assert!(enumerate_partition_probabilities(&crp1(1.0), 9).is_err());
    }

    #[test]
    fn serde_forms() {
        let m: PartitionModel = serde_json::from_str(r#"{"kind":"crp1","theta":1.0}"#).unwrap();
        assert_eq!(m.crp_params(), Some((1.0, 0.0)));
        let m: PartitionModel =
            serde_json::from_str(r#"{"kind":"crp2","theta":1.0,"alpha":0.5}"#).unwrap();
        assert_eq!(m.crp_params(), Some((1.0, 0.5)));
        let m: PartitionModel =
            serde_json::from_str(r#"{"kind":"generic","dust":0.1,"beta":[1.0,2.0]}"#).unwrap();
        assert_eq!(m.dust(), 0.1);
        let m: PartitionModel =
            serde_json::from_str(r#"{"kind":"generic","dust":0.0,"grid":[[0.25,0.5],[0.75,0.5]]}"#)
                .unwrap();
        assert_abs_diff_eq!(m.structural().total_mass(), 1.0, epsilon = 1e-12);
        let back = serde_json::to_string(&m).unwrap();
        assert_eq!(back, r#"{"kind":"generic","dust":0.0,"grid":[[0.25,0.5],[0.75,0.5]]}"#);
        assert!(serde_json::from_str::<PartitionModel>(r#"{"kind":"crp1","theta":-1}"#).is_err());
        assert!(serde_json::from_str::<PartitionModel>(
            r#"{"kind":"generic","dust":0.0,"beta":[1,1],"grid":[[0.5,1]]}"#
        )
        .is_err());
    }

    #[test]
    fn compositions_enumerate() {
        assert_eq!(compositions_of(3).len(), 4);
        assert_eq!(compositions_of(7).len(), 64);
    }
}
