use std::collections::{HashMap, HashSet};
use std::hash::Hash;

use rand::Rng;
use statrs::distribution::{Beta as BetaDist, ContinuousCDF};

use super::oracles::{
    crp1_truncation_by_quadrature, f_by_enumeration, ibp3_log_pmf, ibp3_new_rate, new_block_by_enumeration,
    poisson_tail,
};
use super::{Budget, ReportKind, TestReport};
use crate::combinatorics::{
    allocation_log_pmf, efpf_log, enumerate_allocations, expected_atoms, extract_allocation, left_ordered,
    log_ordering_count, pack_rows, step_log_pmf, uniform_labeling, FeatureAllocation, History, PACKED_MAX_ROWS,
};
use crate::cou::{
    cou_direct, cou_sequential, gbp_stick_by_block, gbp_stick_by_round, sample_directing_measure,
    truncation_bound, AtomOrigin,
};
use crate::eppf::{compositions_of, enumerate_partition_probabilities, Composition, PartitionModel, StructuralDistribution};
use crate::error::{invalid, Error, Result};
use crate::measures::{
    sample_bernoulli, AtomId, BaseMeasure, BernoulliRealization, FixedAtom, HazardMeasureSpec, IdSource, Interval,
};
use crate::parallel::{fold_replicas, map_replicas};
use crate::rng::{derive_seed, SimRng};
use crate::stats::{
    chi_square_independence, correlation, ks_one_sample, ks_two_sample, mean_and_se, sample_variance, tv_distance,
    tv_two_sample,
};
use crate::urn::{sample_kernel, sample_kernel_series, sample_partition, sample_posterior_atom, stick_frequencies, AtomPrior, KernelOptions};

use ReportKind::{Chi2, Exact, Ks, Tv};

const ALPHA: f64 = 1e-3;
const BATCH: u64 = 2048;

fn crp1(theta: f64) -> PartitionModel {
    PartitionModel::crp1(theta).expect("valid parameters")
}

fn crp2(theta: f64, alpha: f64) -> PartitionModel {
    PartitionModel::crp2(theta, alpha).expect("valid parameters")
}

fn crp_models() -> Vec<PartitionModel> {
    vec![crp1(0.5), crp1(1.0), crp1(2.0), crp2(1.0, 0.5), crp2(2.0, 0.25)]
}

/// Histogram of `f` over `samples` draws, split into replicas of `BATCH`
/// draws with independent streams.
pub(crate) fn histogram<K, F>(seed: u64, samples: u64, f: F) -> Result<HashMap<K, u64>>
where
    K: Eq + Hash + Send,
    F: Fn(&mut SimRng) -> Result<K> + Sync + Send,
{
    let batches = samples.div_ceil(BATCH);
    let (hist, err) = fold_replicas(
        seed,
        batches,
        || (HashMap::new(), None::<Error>),
        |acc, rng, b| {
            let count = BATCH.min(samples - b * BATCH);
            for _ in 0..count {
                if acc.1.is_some() {
                    return;
                }
                match f(rng) {
                    Ok(k) => *acc.0.entry(k).or_insert(0) += 1,
                    Err(e) => acc.1 = Some(e),
                }
            }
        },
        |mut a, b| {
            for (k, v) in b.0 {
                *a.0.entry(k).or_insert(0) += v;
            }
            if a.1.is_none() {
                a.1 = b.1;
            }
            a
        },
    );
    match err {
        Some(e) => Err(e),
        None => Ok(hist),
    }
}

/// Histogram of packed allocations of `n <= 4` rows drawn by `f`.
pub(crate) fn allocation_histogram<F>(seed: u64, samples: u64, n: usize, f: F) -> Result<HashMap<u128, u64>>
where
    F: Fn(&mut SimRng) -> Result<Vec<BernoulliRealization>> + Sync + Send,
{
    if n > PACKED_MAX_ROWS {
        return invalid(format!("allocation histograms hold at most {PACKED_MAX_ROWS} rows"));
    }
    histogram(seed, samples, |rng| {
        let rows = f(rng)?;
        let mut scratch = Vec::new();
        pack_rows(&rows, &mut scratch).ok_or_else(|| Error::InvalidArgument("history count above 255".into()))
    })
}

/// `exp(allocation_log_pmf)` on every allocation with at most `max_atoms`
/// atoms.
fn exact_pmf(model: &PartitionModel, gamma: f64, n: usize, max_atoms: u64) -> Result<HashMap<u128, f64>> {
    let mut out = HashMap::new();
    for a in enumerate_allocations(n, max_atoms)? {
        out.insert(a.packed().expect("small allocation"), allocation_log_pmf(model, gamma, &a)?.exp());
    }
    Ok(out)
}

/// Replicated scalar draws, in replica order.
fn draws<F>(seed: u64, reps: u64, f: F) -> Result<Vec<f64>>
where
    F: Fn(&mut SimRng) -> Result<f64> + Sync + Send,
{
    map_replicas(seed, reps, |rng, _| f(rng)).into_iter().collect()
}

fn draws_vec<F>(seed: u64, reps: u64, f: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&mut SimRng) -> Result<Vec<f64>> + Sync + Send,
{
    map_replicas(seed, reps, |rng, _| f(rng)).into_iter().collect()
}

fn column(rows: &[Vec<f64>], j: usize) -> Vec<f64> {
    rows.iter().map(|r| r[j]).collect()
}

fn z_report(name: String, xs: &[f64], target: f64, invariant: &str, seed: u64) -> TestReport {
    let (m, se) = mean_and_se(xs);
    TestReport::z_score(name, m, se, target).with(invariant, xs.len() as u64, seed)
}

/// Z-score of a sample variance against `sigma2`, for data with central
/// fourth moment `mu4`.
fn variance_report(name: String, xs: &[f64], sigma2: f64, mu4: f64, invariant: &str, seed: u64) -> TestReport {
    let n = xs.len() as f64;
    let se = ((mu4 - sigma2 * sigma2) / n).sqrt();
    TestReport::z_score(name, sample_variance(xs), se, sigma2).with(invariant, xs.len() as u64, seed)
}

fn new_atoms_per_row(rows: &[BernoulliRealization]) -> Vec<f64> {
    let mut seen: HashSet<AtomId> = HashSet::new();
    rows.iter()
        .map(|r| r.atoms.iter().filter(|a| seen.insert(a.id())).count() as f64)
        .collect()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

pub(super) fn eppf_consistency() -> Result<Vec<TestReport>> {
    let mut out = Vec::new();
    for model in crp_models() {
        let (mut cons, mut sym, mut pred) = (0f64, 0f64, 0f64);
        for n in 1..=7 {
            for c in compositions_of(n) {
                let lhs = model.eppf(&c)?;
                let rhs: f64 = (0..=c.len()).map(|j| model.eppf(&c.grow(j))).sum::<Result<f64>>()?;
                cons = cons.max((lhs - rhs).abs());

                let mut rev = c.counts().to_vec();
                rev.reverse();
                let mut sorted = c.counts().to_vec();
                sorted.sort_unstable();
                for other in [rev, sorted] {
                    let v = model.eppf(&Composition::new(other)?)?;
                    sym = sym.max((v - lhs).abs() / lhs);
                }

                let (w, w_new) = model.predictive_weights(c.counts())?;
                pred = pred.max((w.iter().sum::<f64>() + w_new - 1.0).abs());
            }
        }
        let (w, w_new) = model.predictive_weights(&[])?;
        pred = pred.max((w.iter().sum::<f64>() + w_new - 1.0).abs());
        out.push(TestReport::at_most(Exact, format!("consistency {model}"), cons, 1e-12).with("eppf.consistency", 0, 0));
        out.push(TestReport::at_most(Exact, format!("symmetry {model}"), sym, 1e-14).with("eppf.symmetry", 0, 0));
        out.push(TestReport::at_most(Exact, format!("predictive sum {model}"), pred, 1e-12).with("eppf.predictive_sum", 0, 0));
    }

    let mut tele_models = crp_models();
    tele_models.push(PartitionModel::generic(StructuralDistribution::beta(0.2, 1.5, 2.0)?));
    tele_models.push(grid_model()?);
    for model in &tele_models {
        let mut err = 0f64;
        for n in 1..=40u64 {
            for k in 1..=n {
                err = err.max((model.f(n, k)? - model.f(n + 1, k)? - model.f(n + 1, k + 1)?).abs());
            }
        }
        out.push(TestReport::at_most(Exact, format!("telescoping {model}"), err, 1e-12).with("eppf.telescoping", 0, 0));
    }

    for model in [grid_model()?, PartitionModel::generic(StructuralDistribution::beta(0.3, 2.0, 1.0)?)] {
        let mut increases = 0;
        let mut prev = model.new_token_rate(1)?;
        for n in 2..=1000 {
            let d = model.new_token_rate(n)?;
            if d > prev + 1e-15 {
                increases += 1;
            }
            prev = d;
        }
        out.push(
            TestReport::at_most(Exact, format!("Delta_n nonincreasing {model}"), increases as f64, 0.0)
                .with("eppf.new_token_limit", 0, 0),
        );
    }
    let g = grid_model()?;
    out.push(
        TestReport::at_most(Exact, format!("Delta_1000 - dust {g}"), (g.new_token_rate(1000)? - g.dust()).abs(), 1e-12)
            .with("eppf.new_token_limit", 0, 0),
    );
    Ok(out)
}

fn grid_model() -> Result<PartitionModel> {
    Ok(PartitionModel::generic(StructuralDistribution::grid(
        0.1,
        vec![(0.2, 0.3), (0.6, 0.5), (1.0, 0.2)],
    )?))
}

pub(super) fn f_oracle() -> Result<Vec<TestReport>> {
    let mut out = Vec::new();
    for model in crp_models() {
        let (mut f_err, mut d_err, mut sum_err) = (0f64, 0f64, 0f64);
        for n in 1..=8usize {
            let total: f64 = enumerate_partition_probabilities(&model, n)?.iter().map(|(_, p)| p).sum();
            sum_err = sum_err.max((total - 1.0).abs());
            d_err = d_err.max((model.new_token_rate(n as u64)? - new_block_by_enumeration(&model, n)?).abs());
            for k in 1..=n {
                f_err = f_err.max((model.f(n as u64, k as u64)? - f_by_enumeration(&model, n, k)?).abs());
            }
        }
        out.push(TestReport::at_most(Exact, format!("f(n,k) vs enumeration {model}"), f_err, 1e-10).with("eppf.f_oracle", 0, 0));
        out.push(TestReport::at_most(Exact, format!("Delta_n vs enumeration {model}"), d_err, 1e-10).with("eppf.f_oracle", 0, 0));
        out.push(TestReport::at_most(Exact, format!("enumeration total {model}"), sum_err, 1e-10).with("eppf.f_oracle", 0, 0));
    }
    Ok(out)
}

pub(super) fn urn(seed: u64, budget: Budget) -> Result<Vec<TestReport>> {
    let mut out = Vec::new();
    let samples = budget.pick(100_000, 10_000);
    for model in [crp1(0.5), crp1(1.0), crp1(2.0), crp2(1.0, 0.5)] {
        let name = format!("partition TV n=4 {model}");
        let s = derive_seed(seed, &name);
        let hist = histogram(s, samples, |rng| Ok(sample_partition(&model, 4, rng)?.assignment().to_vec()))?;
        let exact: HashMap<Vec<usize>, f64> = enumerate_partition_probabilities(&model, 4)?
            .into_iter()
            .map(|(p, q)| (p.labels().to_vec(), q))
            .collect();
        let tv = tv_distance(&hist, &exact)?;
        out.push(
            TestReport::at_most(Tv, name, tv, Budget::tv_threshold(0.01, 100_000, samples))
                .with("urn.partition_law", samples, s),
        );
    }

    let reps = budget.pick(20_000, 2_000);
    for model in [crp1(1.0), crp2(1.0, 0.5)] {
        let s = derive_seed(seed, &format!("arrivals {model}"));
        let rows = draws_vec(s, reps, |rng| {
            let st = sample_partition(&model, 10, rng)?;
            Ok(st.arrival().iter().enumerate().map(|(i, &t)| (t == i) as u8 as f64).collect())
        })?;
        for n in 1..=10usize {
            out.push(z_report(
                format!("Pr{{K_{n} > K_{}}} {model}", n - 1),
                &column(&rows, n - 1),
                model.new_token_rate(n as u64)?,
                "urn.arrival_rates",
                s,
            ));
        }
    }

    // Q_q with the first block forced to be marked, against nu1; the residual
    // after 2000 sticks is of order 1e-3 and is spread as q times its mass
    let model = crp2(1.0, 0.5);
    let nu1 = BetaDist::new(0.5, 1.5).expect("valid");
    let law = model.stick_law().expect("CRP sticks");
    let reps = budget.pick(20_000, 4_000);
    let mut ds = Vec::new();
    let s = derive_seed(seed, "kernel limit");
    for q in [0.5, 0.1, 0.02] {
        let xs = draws(s, reps, |rng| {
            let mut residual = 1.0;
            let mut marked = 0.0;
            let mut j = 0usize;
            while j < 2000 {
                j += 1;
                let v = law.sample_stick(j, rng);
                if j == 1 || rng.random::<f64>() < q {
                    marked += v * residual;
                }
                residual *= 1.0 - v;
            }
            Ok(marked + residual * q)
        })?;
        ds.push(ks_one_sample(&xs, |x| nu1.cdf(x.clamp(0.0, 1.0))).0);
    }
    let increases = ds.windows(2).filter(|w| w[1] >= w[0]).count();
    out.push(
        TestReport::at_most(
            Ks,
            format!("KS distance to nu1 decreasing over q=0.5,0.1,0.02 {model} (D = {:.4}, {:.4}, {:.4})", ds[0], ds[1], ds[2]),
            increases as f64,
            0.0,
        )
        .with("urn.kernel_limit", reps, s),
    );

    let theta = 2.0;
    let model = crp1(theta);
    let reps = budget.pick(10_000, 2_000);
    let s = derive_seed(seed, "stick residual");
    let rows = draws_vec(s, reps, |rng| {
        let fr = stick_frequencies(&model, 20, rng)?;
        let mut out = Vec::new();
        for m in [1usize, 5, 20] {
            out.push(1.0 - fr.weights[..m].iter().sum::<f64>());
        }
        Ok(out)
    })?;
    for (j, m) in [1i32, 5, 20].into_iter().enumerate() {
        out.push(z_report(
            format!("residual mean m={m} {model}"),
            &column(&rows, j),
            (theta / (theta + 1.0)).powi(m),
            "urn.stick_residual",
            s,
        ));
    }
    Ok(out)
}

pub(super) fn kernel(seed: u64, budget: Budget) -> Result<Vec<TestReport>> {
    let mut out = Vec::new();
    let reps = budget.pick(10_000, 2_000);
    let opts = KernelOptions::with_tol(1e-8);
    for theta in [1.0, 2.0] {
        for q in [0.25, 0.5] {
            let model = crp1(theta);
            let name = format!("stick-series kernel vs Beta(theta q, theta(1-q)) q={q} {model}");
            let s = derive_seed(seed, &name);
            let xs = draws(s, reps, |rng| sample_kernel_series(&model, q, &opts, rng))?;
            let law = BetaDist::new(theta * q, theta * (1.0 - q)).expect("valid");
            let (_, p) = ks_one_sample(&xs, |x| law.cdf(x.clamp(0.0, 1.0)));
            out.push(TestReport::p_value(Ks, name, p, ALPHA).with("urn.kernel_law", reps, s));
        }
    }

    let model = crp2(1.0, 0.25);
    let name = format!("fragmented kernel vs stick series q=0.3 {model}");
    let s = derive_seed(seed, &name);
    let a = draws(derive_seed(s, "fragmented"), reps, |rng| sample_kernel(&model, 0.3, &opts, rng))?;
    let b = draws(derive_seed(s, "series"), reps, |rng| sample_kernel_series(&model, 0.3, &opts, rng))?;
    let (_, p) = ks_two_sample(&a, &b);
    out.push(TestReport::p_value(Ks, name, p, ALPHA).with("urn.kernel_law", 2 * reps, s));

    let model = crp1(2.0);
    let s = derive_seed(seed, "kernel moments");
    let xs = draws(s, reps, |rng| sample_kernel(&model, 0.5, &opts, rng))?;
    out.push(z_report(format!("kernel mean q=0.5 {model}"), &xs, 0.5, "urn.kernel_moments", s));
    // Beta(1, 1): variance 1/12, central fourth moment 1/80
    out.push(variance_report(format!("kernel variance q=0.5 {model}"), &xs, 1.0 / 12.0, 1.0 / 80.0, "urn.kernel_moments", s));

    let model = crp2(1.0, 0.5);
    let s = derive_seed(seed, "kernel edges");
    let ends = draws_vec(s, 200, |rng| {
        Ok(vec![
            sample_kernel(&model, 0.0, &opts, rng)?,
            (sample_kernel(&model, 1.0, &opts, rng)? - 1.0).abs(),
        ])
    })?;
    let zero = column(&ends, 0).into_iter().fold(0f64, f64::max);
    let one = column(&ends, 1).into_iter().fold(0f64, f64::max);
    out.push(TestReport::at_most(Exact, format!("q=0 gives 0 {model}"), zero, 0.0).with("urn.kernel_moments", 200, s));
    out.push(TestReport::at_most(Exact, format!("q=1 gives 1 within tol {model}"), one, opts.tol).with("urn.kernel_moments", 200, s));
    Ok(out)
}

pub(super) fn posterior(seed: u64, budget: Budget) -> Result<Vec<TestReport>> {
    let mut out = Vec::new();
    let reps = budget.pick(10_000, 2_000);
    let opts = KernelOptions::default();
    let (theta, alpha) = (1.0, 0.5);
    let closed = crp2(theta, alpha);
    let generic = PartitionModel::generic(StructuralDistribution::beta(0.0, 1.0 - alpha, theta + alpha)?);
    for (k, n) in [(1u64, 2u64), (2, 3)] {
        let law = BetaDist::new(k as f64 - alpha, (n - k) as f64 + theta + alpha).expect("valid");
        let name = format!("ordinary atom k={k} n={n} vs Beta(k-alpha, n-k+theta+alpha) {closed}");
        let s = derive_seed(seed, &name);
        let a = draws(s, reps, |rng| sample_posterior_atom(&closed, AtomPrior::Ordinary, k, n, &opts, rng))?;
        let (_, p) = ks_one_sample(&a, |x| law.cdf(x.clamp(0.0, 1.0)));
        out.push(TestReport::p_value(Ks, name, p, ALPHA).with("urn.posterior_laws", reps, s));

        let name = format!("rejection path k={k} n={n} vs closed form ({generic})");
        let s2 = derive_seed(seed, &name);
        let b = draws(s2, reps, |rng| sample_posterior_atom(&generic, AtomPrior::Ordinary, k, n, &opts, rng))?;
        let (_, p) = ks_two_sample(&a, &b);
        out.push(TestReport::p_value(Ks, name, p, ALPHA).with("urn.posterior_laws", 2 * reps, s2));
        let (_, p) = ks_one_sample(&b, |x| law.cdf(x.clamp(0.0, 1.0)));
        out.push(
            TestReport::p_value(Ks, format!("rejection path k={k} n={n} vs Beta(k-alpha, n-k+theta+alpha)"), p, ALPHA)
                .with("urn.posterior_laws", reps, s2),
        );
    }

    let model = crp1(1.0);
    let s = derive_seed(seed, "posterior k=n=1");
    let xs = draws(s, reps, |rng| sample_posterior_atom(&model, AtomPrior::Ordinary, 1, 1, &opts, rng))?;
    out.push(z_report(format!("ordinary atom k=n=1 mean {model}"), &xs, 0.5, "urn.posterior_laws", s));

    // fixed atom seen in every row: the tilt can only move mass upwards
    let s = derive_seed(seed, "fixed tilt");
    let pairs = draws_vec(s, reps, |rng| {
        Ok(vec![
            sample_posterior_atom(&closed, AtomPrior::Fixed(0.5), 3, 3, &opts, rng)?,
            sample_kernel(&closed, 0.5, &opts, rng)?,
        ])
    })?;
    let (mt, st) = mean_and_se(&column(&pairs, 0));
    let (mu, su) = mean_and_se(&column(&pairs, 1));
    out.push(
        TestReport::at_most(
            ReportKind::Moment,
            format!("untilted minus tilted mean, fixed q=0.5 k=n=3, in standard errors {closed}"),
            (mu - mt) / (st * st + su * su).sqrt(),
            3.0,
        )
        .with("urn.posterior_laws", reps, s),
    );
    Ok(out)
}

pub(super) fn measures(seed: u64, budget: Budget) -> Result<Vec<TestReport>> {
    let mut out = Vec::new();
    let reps = budget.pick(100_000, 10_000);
    let spec = HazardMeasureSpec::nonatomic(5.0)?;
    let s = derive_seed(seed, "disjoint halves");
    let halves = histogram(s, reps, |rng| {
        let x = sample_bernoulli(&spec, rng);
        let a = x.count_in(Interval::new(0.0, 0.5)).min(9);
        let b = x.count_in(Interval::new(0.5, 1.0)).min(9);
        Ok((a, b))
    })?;
    let mut table = vec![vec![0u64; 10]; 10];
    for ((a, b), c) in halves {
        table[a][b] += c;
    }
    let (_, _, p) = chi_square_independence(&table);
    out.push(TestReport::p_value(Chi2, "counts on [0,0.5) and [0.5,1), gamma=5", p, ALPHA).with("measures.independence", reps, s));

    let atoms = HazardMeasureSpec::new(
        2.0,
        BaseMeasure::Uniform,
        vec![
            FixedAtom { location: 0.25, mass: 0.6 },
            FixedAtom { location: 0.75, mass: 0.4 },
        ],
    )?;
    let s = derive_seed(seed, "fixed atoms");
    let pres = histogram(s, reps, |rng| {
        let x = sample_bernoulli(&atoms, rng);
        Ok((x.contains(AtomId(0)) as usize, x.contains(AtomId(1)) as usize))
    })?;
    let mut table = vec![vec![0u64; 2]; 2];
    for ((a, b), c) in pres {
        table[a][b] += c;
    }
    let (_, _, p) = chi_square_independence(&table);
    out.push(TestReport::p_value(Chi2, "fixed atoms appear independently", p, ALPHA).with("measures.independence", reps, s));

    let big = HazardMeasureSpec::nonatomic(20.0)?;
    let n = budget.pick(10_000, 1_000);
    let s = derive_seed(seed, "simplicity");
    let bad = draws(s, n, |rng| {
        let x = sample_bernoulli(&big, rng);
        let ids: HashSet<AtomId> = x.atoms.iter().map(|a| a.id()).collect();
        let locs: HashSet<u64> = x.atoms.iter().map(|a| a.location().to_bits()).collect();
        Ok(((ids.len() != x.len()) || (locs.len() != x.len())) as u8 as f64)
    })?;
    out.push(
        TestReport::at_most(Exact, "repeated ids or locations, gamma=20", bad.iter().sum(), 0.0).with("measures.simplicity", n, s),
    );

    let s = derive_seed(seed, "mean measure");
    let rows = draws_vec(s, n, |rng| {
        let x = sample_bernoulli(&atoms, rng);
        Ok(vec![x.count_in(Interval::new(0.0, 0.3)) as f64, x.contains(AtomId(1)) as u8 as f64])
    })?;
    out.push(z_report("E X([0,0.3))".into(), &column(&rows, 0), atoms.mass(Interval::new(0.0, 0.3)), "measures.mean_measure", s));
    out.push(z_report("E X{0.75}".into(), &column(&rows, 1), 0.4, "measures.mean_measure", s));
    Ok(out)
}

pub(super) fn sampler_equivalence(seed: u64, budget: Budget) -> Result<Vec<TestReport>> {
    let model = crp1(1.0);
    let spec = HazardMeasureSpec::nonatomic(1.5)?;
    let n = 3;
    let default = 10_000_000;
    let samples = budget.pick(default, 200_000);
    let s = derive_seed(seed, "sampler equivalence");
    let direct = allocation_histogram(derive_seed(s, "direct"), samples, n, |rng| cou_direct(&spec, &model, n, rng))?;
    let seq = allocation_histogram(derive_seed(s, "sequential"), samples, n, |rng| cou_sequential(&spec, &model, n, rng))?;
    let tv = tv_two_sample(&direct, &seq)?;
    Ok(vec![TestReport::at_most(
        Tv,
        format!("direct vs sequential allocations n=3 gamma=1.5 {model}"),
        tv,
        Budget::tv_threshold(0.01, default, samples),
    )
    .with("cou.sampler_equivalence", 2 * samples, s)])
}

/// The cases checked against the exact pmf: model, gamma, rows and the
/// default sample count.
pub(crate) fn pmf_match_cases() -> Vec<(PartitionModel, f64, usize, u64)> {
    vec![
        (crp1(1.0), 1.0, 2, 100_000),
        (crp1(1.0), 1.0, 3, 2_000_000),
        (crp2(1.0, 0.5), 1.0, 2, 100_000),
    ]
}

pub(super) fn pmf_match(seed: u64, budget: Budget) -> Result<Vec<TestReport>> {
    let mut out = Vec::new();
    for (model, gamma, n, default) in pmf_match_cases() {
        let samples = budget.pick(default, default / 20);
        let name = format!("sequential allocations vs exact pmf (<= 4 atoms) n={n} gamma={gamma} {model}");
        let s = derive_seed(seed, &name);
        let spec = HazardMeasureSpec::nonatomic(gamma)?;
        let hist = allocation_histogram(s, samples, n, |rng| cou_sequential(&spec, &model, n, rng))?;
        let tv = tv_distance(&hist, &exact_pmf(&model, gamma, n, 4)?)?;
        out.push(
            TestReport::at_most(Tv, name, tv, Budget::tv_threshold(0.01, default, samples)).with("comb.pmf_match", samples, s),
        );
    }
    Ok(out)
}

pub(super) fn exchangeability(seed: u64, budget: Budget) -> Result<Vec<TestReport>> {
    let model = crp2(1.0, 0.5);
    let spec = HazardMeasureSpec::nonatomic(1.0)?;
    let default = 2_000_000;
    let samples = budget.pick(default, 100_000);
    let name = format!("row-permuted (3 1 2) sequential allocations vs exact pmf n=3 gamma=1 {model}");
    let s = derive_seed(seed, &name);
    let hist = allocation_histogram(s, samples, 3, |rng| {
        let mut rows = cou_sequential(&spec, &model, 3, rng)?;
        rows.rotate_right(1);
        Ok(rows)
    })?;
    let tv = tv_distance(&hist, &exact_pmf(&model, 1.0, 3, 4)?)?;
    Ok(vec![TestReport::at_most(Tv, name, tv, Budget::tv_threshold(0.01, default, samples))
        .with("cou.exchangeability", samples, s)])
}

pub(super) fn ibp_rates(seed: u64, budget: Budget) -> Result<Vec<TestReport>> {
    let mut out = Vec::new();
    let reps = budget.pick(10_000, 2_000);
    let gamma = 1.0;
    let spec = HazardMeasureSpec::nonatomic(gamma)?;
    for model in [crp1(1.0), crp2(1.0, 0.5)] {
        let s = derive_seed(seed, &format!("ibp rates {model}"));
        let rows = draws_vec(s, reps, |rng| Ok(new_atoms_per_row(&cou_sequential(&spec, &model, 6, rng)?)))?;
        for n in 1..=6u64 {
            let target = match model.crp_params() {
                Some((_, a)) if a == 0.0 => gamma / n as f64,
                Some((t, a)) => gamma * ibp3_new_rate(t, a, n - 1),
                None => unreachable!(),
            };
            out.push(z_report(format!("new atoms in row {n} {model}"), &column(&rows, n as usize - 1), target, "cou.ibp_rates", s));
        }
    }
    Ok(out)
}

pub(super) fn truncation(seed: u64, budget: Budget) -> Result<Vec<TestReport>> {
    let mut out = Vec::new();
    let (theta, gamma) = (1.0, 2.0);
    let model = crp1(theta);
    let spec = HazardMeasureSpec::nonatomic(gamma)?;
    let ks = [2u64, 5, 10];
    let big = 200u64;
    let tail = truncation_bound(&model, gamma, big + 1)?;
    let reps = budget.pick(10_000, 2_000);
    let s = derive_seed(seed, "truncation");
    let rows = draws_vec(s, reps, |rng| {
        let h = gbp_stick_by_round(&spec, &model, big, rng)?;
        // rounds after `big` contribute Poisson(tail) atoms to X_1
        let tail_hit = crate::measures::poisson_count(tail, rng) > 0;
        let mut last_round = 0;
        for a in h.atoms() {
            if rng.random::<f64>() < a.weight {
                if let AtomOrigin::Round(m) = a.origin {
                    last_round = last_round.max(m);
                }
            }
        }
        Ok(ks.iter().map(|&k| (tail_hit || last_round >= k) as u8 as f64).collect())
    })?;
    for (j, &k) in ks.iter().enumerate() {
        let bound = truncation_bound(&model, gamma, k)?;
        let xs = column(&rows, j);
        let (p, se) = mean_and_se(&xs);
        out.push(
            TestReport::at_most(ReportKind::Moment, format!("Pr{{X_1 != X_1 truncated at k={k}}} minus bound {bound:.4} {model}"), p - bound, 3.0 * se)
                .with("cou.truncation", reps, s),
        );
        out.push(z_report(format!("Pr{{X_1 != X_1 truncated at k={k}}} vs 1 - exp(-bound)"), &xs, 1.0 - (-bound).exp(), "cou.truncation", s));
    }
    let mut err = 0f64;
    for th in [0.5, 1.0, 2.0, 3.5] {
        for k in [1u64, 2, 5, 10, 50] {
            err = err.max((truncation_bound(&crp1(th), gamma, k)? - crp1_truncation_by_quadrature(th, gamma, k)).abs());
        }
    }
    out.push(TestReport::at_most(Exact, "CRP1 truncation closed form vs quadrature", err, 1e-10).with("cou.truncation", 0, 0));
    Ok(out)
}

pub(super) fn stick_breaking(seed: u64, budget: Budget) -> Result<Vec<TestReport>> {
    let mut out = Vec::new();
    let reps = budget.pick(10_000, 2_000);
    let gamma = 1.5;
    let model = crp1(1.0);
    let spec = HazardMeasureSpec::nonatomic(gamma)?;
    let s = derive_seed(seed, "block counts");
    let rows = draws_vec(s, reps, |rng| {
        let h = gbp_stick_by_block(&spec, &model, 3, rng)?;
        let mut c = vec![0.0; 3];
        for a in h.atoms() {
            if let AtomOrigin::Block(t) = a.origin {
                c[t as usize - 1] += 1.0;
            }
        }
        let w1 = h.atoms().iter().find(|a| a.origin == AtomOrigin::Block(1)).map_or(-1.0, |a| a.weight);
        c.push(w1);
        Ok(c)
    })?;
    for t in 0..3 {
        let xs = column(&rows, t);
        out.push(z_report(format!("block {} count mean {model}", t + 1), &xs, gamma, "cou.block_counts", s));
        out.push(variance_report(
            format!("block {} count variance {model}", t + 1),
            &xs,
            gamma,
            gamma + 3.0 * gamma * gamma,
            "cou.block_counts",
            s,
        ));
    }
    let (r, se) = correlation(&column(&rows, 0), &column(&rows, 1));
    out.push(TestReport::at_most(ReportKind::Moment, "block 1 vs block 2 count correlation / se", r.abs() / se, 3.0).with("cou.block_counts", reps, s));
    let w1: Vec<f64> = column(&rows, 3).into_iter().filter(|&w| w >= 0.0).collect();
    let (_, p) = ks_one_sample(&w1, |x| x.clamp(0.0, 1.0));
    out.push(TestReport::p_value(Ks, format!("block 1 weights uniform {model}"), p, ALPHA).with("cou.block_counts", w1.len() as u64, s));

    // both truncation residuals at most 1e-3 gamma
    let rounds = (1..).find(|&r| truncation_bound(&model, 1.0, r + 1).unwrap() <= 1e-3).unwrap();
    let blocks = (1..).find(|&t| 0.5f64.powi(t) <= 1e-3).unwrap() as u64;
    let name = format!("E H(Omega) by round (R={rounds}) vs by block (T={blocks}), in standard errors {model}");
    let s = derive_seed(seed, &name);
    let by_round = draws(derive_seed(s, "round"), reps, |rng| Ok(gbp_stick_by_round(&spec, &model, rounds, rng)?.total_mass()))?;
    let by_block = draws(derive_seed(s, "block"), reps, |rng| Ok(gbp_stick_by_block(&spec, &model, blocks, rng)?.total_mass()))?;
    let (mr, sr) = mean_and_se(&by_round);
    let (mb, sb) = mean_and_se(&by_block);
    out.push(
        TestReport::at_most(ReportKind::Moment, name, (mr - mb).abs() / (sr * sr + sb * sb).sqrt(), 3.0)
            .with("cou.decomposition", 2 * reps, s),
    );
    Ok(out)
}

pub(super) fn de_finetti(seed: u64, budget: Budget) -> Result<Vec<TestReport>> {
    let mut out = Vec::new();
    let reps = budget.pick(4_000, 500);
    let n = budget.pick(200, 50) as usize;
    let gamma = 1.5;
    let model = crp1(1.0);
    let spec = HazardMeasureSpec::nonatomic(gamma)?;
    let s = derive_seed(seed, "de finetti");
    // per replica: mean row size and the unbiased estimate of E H(Omega)^2
    let rows = draws_vec(derive_seed(s, "rows"), reps, |rng| {
        let xs = cou_sequential(&spec, &model, n, rng)?;
        let sizes: Vec<f64> = xs.iter().map(|x| x.len() as f64).collect();
        let total: f64 = sizes.iter().sum();
        let squares: f64 = sizes.iter().map(|x| x * x).sum();
        let nf = n as f64;
        Ok(vec![total / nf, (total * total - squares) / (nf * (nf - 1.0))])
    })?;
    let rounds = 2_000;
    let hs = draws_vec(derive_seed(s, "measure"), reps, |rng| {
        let m = gbp_stick_by_round(&spec, &model, rounds, rng)?.total_mass();
        Ok(vec![m, m * m])
    })?;
    for (j, what) in ["E H(Omega)", "E H(Omega)^2"].into_iter().enumerate() {
        let (ma, sa) = mean_and_se(&column(&rows, j));
        let (mb, sb) = mean_and_se(&column(&hs, j));
        out.push(
            TestReport::at_most(
                ReportKind::Moment,
                format!("{what}: averages of {n} rows vs round-wise H (R={rounds}), in standard errors {model}"),
                (ma - mb).abs() / (sa * sa + sb * sb).sqrt(),
                3.0,
            )
            .with("cou.de_finetti", 2 * reps, s),
        );
    }
    Ok(out)
}

pub(super) fn lln(seed: u64, budget: Budget) -> Result<Vec<TestReport>> {
    let model = crp2(1.0, 0.5);
    let masses = [0.1, 0.3, 0.5, 0.7, 0.9];
    let spec = HazardMeasureSpec::new(
        0.0,
        BaseMeasure::Uniform,
        masses
            .iter()
            .enumerate()
            .map(|(i, &m)| FixedAtom { location: 0.1 + 0.2 * i as f64, mass: m })
            .collect(),
    )?;
    let reps = 50;
    let n = budget.pick(2_000, 500) as usize;
    let opts = KernelOptions::default();
    let s = derive_seed(seed, "lln");
    let sups = draws(s, reps, |rng| {
        let h = sample_directing_measure(&spec, &model, 1, &opts, rng)?;
        let mut ids = IdSource::starting_at(h.next_free_id(masses.len() as u64));
        let mut counts = vec![0u64; masses.len()];
        for _ in 0..n {
            for a in h.sample_given(&BaseMeasure::Uniform, &mut ids, rng).atoms {
                counts[a.id().0 as usize] += 1;
            }
        }
        let mut sup = 0f64;
        for (i, c) in counts.iter().enumerate() {
            let w = h.atoms().iter().find(|a| a.id == AtomId(i as u64)).map_or(0.0, |a| a.weight);
            sup = sup.max((*c as f64 / n as f64 - w).abs());
        }
        Ok(sup)
    })?;
    let mean = sups.iter().sum::<f64>() / sups.len() as f64;
    let threshold = 0.05 * (2_000.0 / n as f64).sqrt();
    Ok(vec![TestReport::at_most(
        ReportKind::Moment,
        format!("mean over {reps} replicas of sup_s |avg X_i{{s}} - H{{s}}|, n={n}, 5 fixed atoms {model}"),
        mean,
        threshold,
    )
    .with("cou.lln", reps * n as u64, s)])
}

pub(super) fn continuum_limit(seed: u64, budget: Budget) -> Result<Vec<TestReport>> {
    let model = crp1(1.0);
    let default = 100_000;
    let samples = budget.pick(default, 20_000);
    let s = derive_seed(seed, "continuum limit");
    let tvs = super::continuum_limit_experiment(&model, 1.0, 2, &[4, 16, 64], samples, s)?;
    let trend = tvs.iter().map(|(m, tv)| format!("m={m}: {tv:.4}")).collect::<Vec<_>>().join(", ");
    Ok(vec![TestReport::at_most(
        Tv,
        format!("TV discretized (m=64) vs continuum n=2 gamma=1 {model} [{trend}]"),
        tvs[2].1,
        Budget::tv_threshold(0.02, default, samples),
    )
    .with("cou.continuum_limit", 2 * samples, s)])
}

pub(super) fn exactness() -> Result<Vec<TestReport>> {
    let mut out = Vec::new();
    let gamma = 1.3;
    for model in [crp1(1.0), crp2(1.0, 0.5), crp1(0.5)] {
        let mut perm_err = 0f64;
        for (n, max_atoms) in [(1, 3), (2, 3), (3, 3), (4, 2)] {
            let perms = permutations(n);
            for a in enumerate_allocations(n, max_atoms)? {
                let base = allocation_log_pmf(&model, gamma, &a)?;
                for p in &perms {
                    perm_err = perm_err.max((allocation_log_pmf(&model, gamma, &a.permute_rows(p)?)? - base).abs());
                }
            }
        }
        out.push(TestReport::at_most(Exact, format!("log pmf row-permutation difference n<=4 {model}"), perm_err, 0.0).with("comb.row_permutation", 0, 0));

        let (mut efpf_err, mut chain_err) = (0f64, 0f64);
        for n in 1..=3 {
            for a in enumerate_allocations(n, 3)? {
                let pmf = allocation_log_pmf(&model, gamma, &a)?;
                let sums = left_ordered(&a).column_sums();
                let via_efpf = efpf_log(&model, gamma, n, &sums)? + log_ordering_count(&a);
                efpf_err = efpf_err.max((pmf.exp() - via_efpf.exp()).abs());
                if n == 3 {
                    let a2 = a.restrict()?;
                    let a1 = a2.restrict()?;
                    let chain = allocation_log_pmf(&model, gamma, &a1)?
                        + step_log_pmf(&model, gamma, &a1, &a2)?
                        + step_log_pmf(&model, gamma, &a2, &a)?;
                    chain_err = chain_err.max((chain - pmf).abs());
                }
            }
        }
        out.push(TestReport::at_most(Exact, format!("pmf vs EFPF x orderings {model}"), efpf_err, 1e-12).with("comb.efpf_relation", 0, 0));
        out.push(TestReport::at_most(Exact, format!("step chain vs log pmf n=3 {model}"), chain_err, 1e-10).with("comb.step_chain", 0, 0));

        let n = 2;
        let k = 3;
        let total: f64 = enumerate_allocations(n, k)?
            .iter()
            .map(|a| allocation_log_pmf(&model, gamma, a).map(f64::exp))
            .sum::<Result<f64>>()?;
        let tail = poisson_tail(expected_atoms(&model, gamma, n)?, k);
        out.push(
            TestReport::at_most(Exact, format!("pmf mass (<= 3 atoms) plus Poisson tail, n=2 {model}"), (total + tail - 1.0).abs(), 1e-3)
                .with("comb.normalization", 0, 0),
        );
    }
    for (theta, alpha) in [(1.0, 0.5), (2.0, 0.25)] {
        let model = crp2(theta, alpha);
        let mut err = 0f64;
        for n in 1..=3 {
            for a in enumerate_allocations(n, 3)? {
                err = err.max((allocation_log_pmf(&model, gamma, &a)? - ibp3_log_pmf(theta, alpha, gamma, &a)).abs());
            }
        }
        out.push(TestReport::at_most(Exact, format!("log pmf vs three-parameter IBP products {model}"), err, 1e-10).with("comb.three_param_ibp", 0, 0));
    }
    Ok(out)
}

pub(super) fn combinatorics(seed: u64, budget: Budget) -> Result<Vec<TestReport>> {
    let mut out = Vec::new();
    let reps = budget.pick(2_000, 300);
    let model = crp2(1.0, 0.3);
    let fixed = HazardMeasureSpec::new(1.5, BaseMeasure::Uniform, vec![FixedAtom { location: 0.5, mass: 0.5 }])?;
    let s = derive_seed(seed, "allocation identities");
    let rows = draws_vec(s, reps, |rng| {
        let xs = cou_direct(&fixed, &model, 5, rng)?;
        let a = extract_allocation(&xs)?;
        let head = extract_allocation(&xs[..4])?;
        let restrict_ok = a.restrict()?.counts() == head.counts();
        let incid = a.incidences() == xs.iter().map(|x| x.len() as u64).sum::<u64>();
        let w = left_ordered(&a);
        let canon = w.is_left_ordered() && left_ordered(&w.allocation()?) == w && w.allocation()?.counts() == a.counts();
        Ok(vec![!restrict_ok as u8 as f64, !incid as u8 as f64, !canon as u8 as f64])
    })?;
    for (j, (what, inv)) in [
        ("restriction mismatches", "comb.restriction"),
        ("double-counting mismatches", "comb.double_counting"),
        ("left-ordered form violations", "comb.left_order"),
    ]
    .into_iter()
    .enumerate()
    {
        out.push(TestReport::at_most(Exact, format!("{what}, n=5 direct samples {model}"), column(&rows, j).iter().sum(), 0.0).with(inv, reps, s));
    }

    let example = FeatureAllocation::new(2, [(History(0b01), 3), (History(0b10), 1)])?;
    let w = left_ordered(&example);
    let ok = w.column_strings() == ["10", "10", "10", "01"];
    out.push(TestReport::at_most(Exact, "worked example columns 10,10,10,01", !ok as u8 as f64, 0.0).with("comb.left_order", 0, 0));
    out.push(
        TestReport::at_most(Exact, "orderings of the worked example minus 4", (log_ordering_count(&example).exp() - 4.0).abs(), 1e-12)
            .with("comb.uniform_labeling", 0, 0),
    );
    let n = budget.pick(20_000, 4_000);
    let s = derive_seed(seed, "uniform labeling");
    let last = draws(s, n, |rng| Ok((uniform_labeling(&example, rng).columns()[3] == History(0b10)) as u8 as f64))?;
    out.push(z_report("Pr{last column is 01} for the worked example".into(), &last, 0.25, "comb.uniform_labeling", s));
    Ok(out)
}
