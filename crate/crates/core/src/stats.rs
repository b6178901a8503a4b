//! Goodness-of-fit helpers: KS, chi-square, total variation and moments.

use std::collections::HashMap;
use std::hash::Hash;

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{invalid, Result};

/// Asymptotic Kolmogorov tail `Pr{K > lambda}`.
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=200 {
        let jf = j as f64;
        let term = 2.0 * (-1f64).powi(j - 1) * (-2.0 * jf * jf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, effective_n: f64) -> f64 {
    let sqrt_n = effective_n.sqrt();
    kolmogorov_tail((sqrt_n + 0.12 + 0.11 / sqrt_n) * d)
}

/// One-sample KS statistic and p-value against a continuous cdf.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> (f64, f64) {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    (d, ks_p_value(d, n))
}

/// Two-sample KS statistic and p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.total_cmp(q));
    ys.sort_by(|p, q| p.total_cmp(q));
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let x = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= x {
            i += 1;
        }
        while j < ys.len() && ys[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    (d, ks_p_value(d, na * nb / (na + nb)))
}

/// Pearson chi-square test of independence on an `r x c` table.
///
/// Rows or columns with zero total are dropped. Returns `(statistic, dof,
/// p-value)`.
pub fn chi_square_independence(table: &[Vec<u64>]) -> (f64, usize, f64) {
    let rows: Vec<&Vec<u64>> = table.iter().filter(|r| r.iter().sum::<u64>() > 0).collect();
    let ncols = rows.first().map_or(0, |r| r.len());
    let col_tot: Vec<u64> = (0..ncols).map(|c| rows.iter().map(|r| r[c]).sum()).collect();
    let cols: Vec<usize> = (0..ncols).filter(|&c| col_tot[c] > 0).collect();
    let total: u64 = col_tot.iter().sum();
    if rows.len() < 2 || cols.len() < 2 {
        return (0.0, 0, 1.0);
    }
    let mut stat = 0.0;
    for r in &rows {
        let rt: u64 = r.iter().sum();
        for &c in &cols {
            let expected = rt as f64 * col_tot[c] as f64 / total as f64;
            stat += (r[c] as f64 - expected).powi(2) / expected;
        }
    }
    let dof = (rows.len() - 1) * (cols.len() - 1);
    let p = 1.0 - ChiSquared::new(dof as f64).unwrap().cdf(stat);
    (stat, dof, p)
}

/// Total variation between an empirical histogram and (possibly partial)
/// exact probabilities.
///
/// Outcomes not listed in `exact` are pooled into one tail cell whose exact
/// mass is `1 - sum(exact)`; an unlisted empirical outcome therefore counts
/// fully when the listed mass is 1. When `exact` covers the empirical support
/// this is the TV distance to the full distribution, otherwise it is the TV
/// distance after merging the unlisted outcomes.
pub fn tv_distance<K: Eq + Hash>(empirical: &HashMap<K, u64>, exact: &HashMap<K, f64>) -> Result<f64> {
    let total: u64 = empirical.values().sum();
    if total == 0 {
        return invalid("empirical histogram is empty");
    }
    let n = total as f64;
    let mut terms = Vec::with_capacity(empirical.len() + exact.len() + 1);
    let mut unlisted = 0u64;
    for (k, &c) in empirical {
        match exact.get(k) {
            Some(&p) => terms.push((c as f64 / n - p).abs()),
            None => unlisted += c,
        }
    }
    for (k, &p) in exact {
        if !empirical.contains_key(k) {
            terms.push(p);
        }
    }
    let tail = (1.0 - sorted_sum(exact.values().copied().collect())).max(0.0);
    terms.push((unlisted as f64 / n - tail).abs());
    Ok((0.5 * sorted_sum(terms)).min(1.0))
}

/// TV distance between two empirical histograms.
pub fn tv_two_sample<K: Eq + Hash>(a: &HashMap<K, u64>, b: &HashMap<K, u64>) -> Result<f64> {
    let (na, nb) = (a.values().sum::<u64>(), b.values().sum::<u64>());
    if na == 0 || nb == 0 {
        return invalid("empirical histogram is empty");
    }
    let (na, nb) = (na as f64, nb as f64);
    let mut terms = Vec::with_capacity(a.len() + b.len());
    for (k, &c) in a {
        terms.push((c as f64 / na - b.get(k).copied().unwrap_or(0) as f64 / nb).abs());
    }
    for (k, &c) in b {
        if !a.contains_key(k) {
            terms.push(c as f64 / nb);
        }
    }
    Ok(0.5 * sorted_sum(terms))
}

/// Sum independent of the (hash) order the terms arrived in.
fn sorted_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Pearson correlation and its standard error under independence (`1/sqrt(n)`).
pub fn correlation(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    (sxy / (sxx * syy).sqrt(), 1.0 / n.sqrt())
}
