//! Verification suites.
//!
//! Each suite runs a set of checks and returns one [`TestReport`] per check.
//! Reports are deterministic given the seed: every check derives its own
//! master seed from the suite seed and its name, and Monte Carlo work is
//! split into replicas with independent streams.
//!
//! Two budgets exist. `Default` uses the sample sizes the checks are designed
//! for. `Small` is a smoke run: sample counts drop by 10-100x and the TV
//! thresholds grow by the square root of that factor, since the sampling
//! noise of an empirical TV distance scales like `1/sqrt(samples)`.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{invalid, Error, Result};

mod continuum;
pub mod oracles;
mod suites;

pub use continuum::continuum_limit_experiment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportKind {
    Exact,
    Chi2,
    Ks,
    Tv,
    Moment,
}

/// How `statistic` is compared with `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Comparison {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub suite: String,
    pub name: String,
    pub kind: ReportKind,
    pub statistic: f64,
    pub comparison: Comparison,
    pub threshold: f64,
    pub pass: bool,
    pub samples: u64,
    pub seed: u64,
    /// Manifest id of the property checked.
    pub invariant: String,
}

impl TestReport {
    pub(crate) fn new(
        kind: ReportKind,
        name: impl Into<String>,
        statistic: f64,
        comparison: Comparison,
        threshold: f64,
    ) -> Self {
        let pass = match comparison {
            Comparison::AtMost => statistic <= threshold,
            Comparison::AtLeast => statistic >= threshold,
        };
        Self {
            suite: String::new(),
            name: name.into(),
            kind,
            statistic,
            comparison,
            threshold,
            pass,
            samples: 0,
            seed: 0,
            invariant: String::new(),
        }
    }

    pub(crate) fn at_most(kind: ReportKind, name: impl Into<String>, statistic: f64, threshold: f64) -> Self {
        Self::new(kind, name, statistic, Comparison::AtMost, threshold)
    }

    /// KS or chi-square p-value above `alpha`.
    pub(crate) fn p_value(kind: ReportKind, name: impl Into<String>, p: f64, alpha: f64) -> Self {
        Self::new(kind, name, p, Comparison::AtLeast, alpha)
    }

    /// `|estimate - target| / se <= 3`.
    pub(crate) fn z_score(name: impl Into<String>, estimate: f64, se: f64, target: f64) -> Self {
        let z = if se > 0.0 {
            (estimate - target).abs() / se
        } else if estimate == target {
            0.0
        } else {
            f64::INFINITY
        };
        Self::at_most(ReportKind::Moment, name, z, 3.0)
    }

    pub(crate) fn with(mut self, invariant: &str, samples: u64, seed: u64) -> Self {
        self.invariant = invariant.to_string();
        self.samples = samples;
        self.seed = seed;
        self
    }
}

impl fmt::Display for TestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cmp = match self.comparison {
            Comparison::AtMost => "<=",
            Comparison::AtLeast => ">=",
        };
        write!(
            f,
            "{} {}/{}: {:.6e} {cmp} {:.3e} (n={})",
            if self.pass { "PASS" } else { "FAIL" },
            self.suite,
            self.name,
            self.statistic,
            self.threshold,
            self.samples
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Budget {
    Small,
    Default,
}

impl Budget {
    pub(crate) fn pick(self, default: u64, small: u64) -> u64 {
        match self {
            Budget::Default => default,
            Budget::Small => small,
        }
    }

    /// TV threshold for a check designed at `default` samples and run at
    /// `actual` samples.
    pub(crate) fn tv_threshold(threshold: f64, default: u64, actual: u64) -> f64 {
        threshold * (default as f64 / actual as f64).sqrt().max(1.0)
    }
}

impl FromStr for Budget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small" => Ok(Budget::Small),
            "default" => Ok(Budget::Default),
            _ => invalid(format!("unknown budget {s:?}; expected small or default")),
        }
    }
}

/// Suite names accepted by [`run_suite`], besides `"all"`.
pub const SUITES: &[&str] = &[
    "eppf-consistency",
    "f-oracle",
    "urn",
    "kernel",
    "posterior",
    "measures",
    "sampler-equivalence",
    "pmf-match",
    "exchangeability",
    "ibp-rates",
    "truncation",
    "stick-breaking",
    "de-finetti",
    "lln",
    "continuum-limit",
    "exactness",
    "combinatorics",
];

/// Runs one suite, or every suite for `"all"`.
pub fn run_suite(name: &str, seed: u64, budget: Budget) -> Result<Vec<TestReport>> {
    if name == "all" {
        let mut out = Vec::new();
        for s in SUITES {
            out.extend(run_suite(s, seed, budget)?);
        }
        return Ok(out);
    }
    let mut reports = match name {
        "eppf-consistency" => suites::eppf_consistency()?,
        "f-oracle" => suites::f_oracle()?,
        "urn" => suites::urn(seed, budget)?,
        "kernel" => suites::kernel(seed, budget)?,
        "posterior" => suites::posterior(seed, budget)?,
        "measures" => suites::measures(seed, budget)?,
        "sampler-equivalence" => suites::sampler_equivalence(seed, budget)?,
        "pmf-match" => suites::pmf_match(seed, budget)?,
        "exchangeability" => suites::exchangeability(seed, budget)?,
        "ibp-rates" => suites::ibp_rates(seed, budget)?,
        "truncation" => suites::truncation(seed, budget)?,
        "stick-breaking" => suites::stick_breaking(seed, budget)?,
        "de-finetti" => suites::de_finetti(seed, budget)?,
        "lln" => suites::lln(seed, budget)?,
        "continuum-limit" => suites::continuum_limit(seed, budget)?,
        "exactness" => suites::exactness()?,
        "combinatorics" => suites::combinatorics(seed, budget)?,
        _ => {
            return invalid(format!(
                "unknown suite {name:?}; known suites: all, {}",
                SUITES.join(", ")
            ))
        }
    };
    for r in &mut reports {
        r.suite = name.to_string();
        if r.seed == 0 {
            r.seed = seed;
        }
    }
    Ok(reports)
}

/// One property the suites are expected to exercise.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct InvariantEntry {
    pub id: &'static str,
    pub module: &'static str,
    pub statement: &'static str,
}

const fn inv(id: &'static str, module: &'static str, statement: &'static str) -> InvariantEntry {
    InvariantEntry { id, module, statement }
}

/// Every declared property; `run_suite("all", ..)` covers each id.
pub const INVARIANTS: &[InvariantEntry] = &[
    inv("eppf.consistency", "eppf", "pi(c) = sum_j pi(c^{+j}) for n <= 7"),
    inv("eppf.symmetry", "eppf", "pi is invariant under permutations of the block sizes"),
    inv("eppf.f_oracle", "eppf", "f(n, k) equals the partition-enumeration probability for n <= 8"),
    inv("eppf.telescoping", "eppf", "f(n, k) = f(n+1, k) + f(n+1, k+1)"),
    inv("eppf.new_token_limit", "eppf", "Delta_n is nonincreasing and tends to the dust mass on grid models"),
    inv("eppf.predictive_sum", "eppf", "predictive weights sum to 1"),
    inv("urn.partition_law", "urn", "sampled partitions match the enumeration oracle in TV at n = 4"),
    inv("urn.arrival_rates", "urn", "Pr{K_n > K_(n-1)} = Delta_n for n <= 10"),
    inv("urn.kernel_limit", "urn", "Q_q given a marked first block approaches nu1 as q decreases"),
    inv("urn.stick_residual", "urn", "CRP1 stick residual has mean (theta/(theta+1))^m"),
    inv("urn.kernel_law", "urn", "CRP1 stick-series kernel draws are Beta(theta q, theta (1-q))"),
    inv("urn.kernel_moments", "urn", "kernel mean q and variance q(1-q)/(theta+1)"),
    inv("urn.posterior_laws", "urn", "ordinary posterior weights are Beta(k-alpha, n-k+theta+alpha); rejection path agrees"),
    inv("measures.independence", "measures", "counts on disjoint sets are independent"),
    inv("measures.simplicity", "measures", "realizations never repeat ids or continuous locations"),
    inv("measures.mean_measure", "measures", "E X(A) equals the hazard mass of A"),
    inv("cou.sampler_equivalence", "cou", "direct and sequential samplers give the same allocation law"),
    inv("cou.de_finetti", "cou", "row averages and the round-wise H agree in the first two moments of H(Omega)"),
    inv("cou.exchangeability", "cou", "sampled allocations are row-permutation invariant"),
    inv("cou.truncation", "cou", "Pr{X_1 != truncated X_1} is at most the truncation bound"),
    inv("cou.decomposition", "cou", "round-wise and block-wise constructions agree on E H(Omega)"),
    inv("cou.block_counts", "cou", "block-wise atom counts are i.i.d. Poisson(gamma)"),
    inv("cou.ibp_rates", "cou", "new atoms in row n have mean gamma f(n, 1)"),
    inv("cou.lln", "cou", "row averages converge to the retained directing measure"),
    inv("cou.continuum_limit", "cou", "discretized hazard measures approach the continuum allocation law"),
    inv("comb.row_permutation", "combinatorics", "allocation pmf is exactly invariant under row permutations"),
    inv("comb.efpf_relation", "combinatorics", "pmf = EFPF x zeta!/prod M_h!"),
    inv("comb.step_chain", "combinatorics", "step pmfs telescope to the joint pmf"),
    inv("comb.three_param_ibp", "combinatorics", "CRP2 pmf equals the three-parameter IBP product formula"),
    inv("comb.normalization", "combinatorics", "pmf sums to 1 with the Poisson tail"),
    inv("comb.pmf_match", "combinatorics", "sampled allocations match exp(allocation_log_pmf)"),
    inv("comb.restriction", "combinatorics", "dropping the last row merges M_h0 and M_h1"),
    inv("comb.double_counting", "combinatorics", "sum_h s(h) M_h = sum_j |X_j|"),
    inv("comb.left_order", "combinatorics", "left-ordered form is canonical and sorted"),
    inv("comb.uniform_labeling", "combinatorics", "uniform labeling permutes columns uniformly"),
];

/// Reports as JSON lines.
pub fn reports_to_jsonl(reports: &[TestReport]) -> Result<String> {
    let mut out = String::new();
    for r in reports {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

/// CSV summary with a header row.
pub fn reports_to_csv(reports: &[TestReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "suite", "name", "kind", "statistic", "comparison", "threshold", "pass", "samples", "seed", "invariant",
    ])
    .map_err(csv_error)?;
    for r in reports {
        let kind = serde_json::to_value(r.kind)?;
        let cmp = serde_json::to_value(r.comparison)?;
        w.write_record([
            r.suite.clone(),
            r.name.clone(),
            kind.as_str().unwrap_or_default().to_string(),
            format!("{:e}", r.statistic),
            cmp.as_str().unwrap_or_default().to_string(),
            format!("{:e}", r.threshold),
            r.pass.to_string(),
            r.samples.to_string(),
            r.seed.to_string(),
            r.invariant.clone(),
        ])
        .map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidArgument(e.to_string()))
}

fn csv_error(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv output: {e}"))
}
