//! Brute-force and closed-form references that avoid the code paths they
//! check.

use statrs::distribution::{DiscreteCDF, Poisson};

use crate::combinatorics::FeatureAllocation;
use crate::eppf::{enumerate_partition_probabilities, PartitionModel};
use crate::error::{invalid, Result};
use crate::special::ln_factorial;

/// `Pr{elements 1..k share a block and k+1..n avoid it}` by summing the EPPF
/// over all set partitions of `[n]`.
pub fn f_by_enumeration(model: &PartitionModel, n: usize, k: usize) -> Result<f64> {
    if k < 1 || k > n {
        return invalid(format!("need 1 <= k <= n, got n={n}, k={k}"));
    }
    let mut total = 0.0;
    for (part, p) in enumerate_partition_probabilities(model, n)? {
        let l = part.labels();
        if l[..k].iter().all(|&b| b == l[0]) && l[k..].iter().all(|&b| b != l[0]) {
            total += p;
        }
    }
    Ok(total)
}

/// `Pr{element n opens a new block}` by enumeration.
pub fn new_block_by_enumeration(model: &PartitionModel, n: usize) -> Result<f64> {
    if n == 0 {
        return invalid("need n >= 1");
    }
    let mut total = 0.0;
    for (part, p) in enumerate_partition_probabilities(model, n)? {
        let l = part.labels();
        if l[..n - 1].iter().all(|&b| b < l[n - 1]) {
            total += p;
        }
    }
    Ok(total)
}

fn rising(x: f64, m: u64) -> f64 {
    (0..m).map(|i| x + i as f64).product()
}

/// Rate of new features in the three-parameter IBP, indexed by the number of
/// rows already seen: `[theta+alpha]_m / [theta+1]_m`.
pub fn ibp3_new_rate(theta: f64, alpha: f64, seen: u64) -> f64 {
    rising(theta + alpha, seen) / rising(theta + 1.0, seen)
}

/// `f(n, k)` for the two-parameter model as a plain product: the chance a
/// feature born after `n - k` rows is then kept `k - 1` times in a row.
pub fn ibp3_f(theta: f64, alpha: f64, n: u64, k: u64) -> f64 {
    let staying: f64 = (1..k)
        .map(|i| (i as f64 - alpha) / (theta + (n - k) as f64 + i as f64))
        .product();
    ibp3_new_rate(theta, alpha, n - k) * staying
}

/// Log-pmf of a feature allocation under the three-parameter IBP with mass
/// `gamma`, assembled from the product formulas above.
pub fn ibp3_log_pmf(theta: f64, alpha: f64, gamma: f64, alloc: &FeatureAllocation) -> f64 {
    let n = alloc.n() as u64;
    let expected: f64 = (0..n).map(|m| gamma * ibp3_new_rate(theta, alpha, m)).sum();
    let mut lp = -expected;
    for (h, &m) in alloc.counts() {
        let f = ibp3_f(theta, alpha, n, h.rows() as u64);
        lp += m as f64 * (gamma * f).ln() - ln_factorial(m);
    }
    lp
}

/// `gamma int_0^1 (1-p)^{k-1} theta (1-p)^{theta-1} dp` by double-exponential
/// quadrature. With `x = 1 - p = t^m` the integrand becomes
/// `theta m t^{m(k + theta - 1) - 1}`, bounded once `m(k + theta - 1) >= 1`.
pub fn crp1_truncation_by_quadrature(theta: f64, gamma: f64, k: u64) -> f64 {
    let e = k as f64 + theta - 1.0;
    let m = (1.0 / e).ceil().max(1.0);
    let out = quadrature::double_exponential::integrate(
        |t| theta * m * t.powf(m * e - 1.0),
        0.0,
        1.0,
        1e-14,
    );
    gamma * out.integral
}

/// `Pr{N > k}` for `N ~ Poisson(mean)`.
pub fn poisson_tail(mean: f64, k: u64) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    Poisson::new(mean).expect("positive mean").sf(k)
}
