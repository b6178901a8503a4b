//! Feature allocations and their exact probabilities.
//!
//! A history `h` records in which of the first `n` rows an atom is present.
//! The feature allocation of `X_1, ..., X_n` is the multiplicity `M_h` of
//! every nonzero history; it forgets locations and ids. For a nonatomic
//! finite hazard measure with mass `gamma` its pmf is
//!
//! ```text
//! gamma^{sum M_h} exp(-gamma sum_{j<=n} f(j, 1)) prod_h f(n, s(h))^{M_h} / M_h!
//! ```
//!
//! where `s(h)` is the number of rows in which the history is present.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::eppf::PartitionModel;
use crate::error::{invalid, Result};
use crate::measures::{AtomId, BernoulliRealization};
use crate::special::{ln_binomial_coeff, ln_factorial, ln_poisson_pmf, xlny};

/// Largest row count a packed history can hold.
pub const MAX_ROWS: usize = 63;

/// A presence pattern packed into a `u64`: bit `i` is row `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct History(pub u64);

impl History {
    pub fn rows(self) -> u32 {
        self.0.count_ones()
    }

    pub fn has(self, row: usize) -> bool {
        self.0 >> row & 1 == 1
    }

    /// Row-major bit string, e.g. `"110"` for rows 0 and 1 of 3.
    pub fn to_bits(self, n: usize) -> String {
        (0..n).map(|i| if self.has(i) { '1' } else { '0' }).collect()
    }

    pub fn parse(bits: &str) -> Result<Self> {
        if bits.is_empty() || bits.len() > MAX_ROWS {
            return invalid(format!("history {bits:?} must have 1..={MAX_ROWS} rows"));
        }
        let mut h = 0u64;
        for (i, c) in bits.chars().enumerate() {
            match c {
                '1' => h |= 1 << i,
                '0' => {}
                _ => return invalid(format!("history {bits:?} is not a bit string")),
            }
        }
        Ok(History(h))
    }

    /// Index of the first row containing the atom.
    pub fn first_row(self) -> Option<usize> {
        (self.0 != 0).then(|| self.0.trailing_zeros() as usize)
    }

    /// Order used by the left-ordered form: compare rows top-down, and at the
    /// first difference the history present in that row comes first.
    pub fn left_order_cmp(self, other: Self, n: usize) -> Ordering {
        for i in 0..n {
            match (self.has(i), other.has(i)) {
                (true, false) => return Ordering::Less,
                (false, true) => return Ordering::Greater,
                _ => {}
            }
        }
        Ordering::Equal
    }
}

/// Id and location of one observed atom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomRecord(pub AtomId, pub f64);

/// Counts `M_h` of atoms per nonzero history over `n` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureAllocation {
    n: usize,
    counts: BTreeMap<History, u64>,
    atoms: Option<BTreeMap<History, Vec<AtomRecord>>>,
}

impl FeatureAllocation {
    pub fn new(n: usize, counts: impl IntoIterator<Item = (History, u64)>) -> Result<Self> {
        check_rows(n)?;
        let mut map = BTreeMap::new();
        for (h, m) in counts {
            if h.0 == 0 {
                return invalid("the all-zero history is not a feature");
            }
            if n < 64 && h.0 >> n != 0 {
                return invalid(format!("history {:#b} has more than {n} rows", h.0));
            }
            if m > 0 {
                *map.entry(h).or_insert(0) += m;
            }
        }
        Ok(Self {
            n,
            counts: map,
            atoms: None,
        })
    }

    pub fn empty(n: usize) -> Result<Self> {
        Self::new(n, [])
    }

    /// Attaches atom records; their number per history must match the counts.
    pub fn with_atoms(mut self, atoms: BTreeMap<History, Vec<AtomRecord>>) -> Result<Self> {
        let mut lens: BTreeMap<History, u64> = BTreeMap::new();
        for (h, recs) in &atoms {
            if !recs.is_empty() {
                lens.insert(*h, recs.len() as u64);
            }
        }
        if lens != self.counts {
            return invalid("atom records disagree with history counts");
        }
        self.atoms = Some(atoms.into_iter().filter(|(_, r)| !r.is_empty()).collect());
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn counts(&self) -> &BTreeMap<History, u64> {
        &self.counts
    }

    pub fn count(&self, h: History) -> u64 {
        self.counts.get(&h).copied().unwrap_or(0)
    }

    pub fn atoms(&self) -> Option<&BTreeMap<History, Vec<AtomRecord>>> {
        self.atoms.as_ref()
    }

    /// Number of distinct atoms, `zeta = sum_h M_h`.
    pub fn total_atoms(&self) -> u64 {
        self.counts.values().sum()
    }

    /// `sum_h s(h) M_h`, the number of atom-row incidences.
    pub fn incidences(&self) -> u64 {
        self.counts.iter().map(|(h, m)| h.rows() as u64 * m).sum()
    }

    /// Drops the last row, merging `M_{h0}` and `M_{h1}` into `M_h`.
    pub fn restrict(&self) -> Result<Self> {
        if self.n < 2 {
            return invalid("cannot restrict a single-row allocation");
        }
        let mask = (1u64 << (self.n - 1)) - 1;
        let mut counts = BTreeMap::new();
        for (h, m) in &self.counts {
            let r = h.0 & mask;
            if r != 0 {
                *counts.entry(History(r)).or_insert(0) += m;
            }
        }
        Ok(Self {
            n: self.n - 1,
            counts,
            atoms: None,
        })
    }

    /// Relabels rows: row `i` moves to row `perm[i]`.
    pub fn permute_rows(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return invalid("permutation length differs from row count");
        }
        let mut seen = vec![false; self.n];
        for &p in perm {
            if p >= self.n || seen[p] {
                return invalid("not a permutation");
            }
            seen[p] = true;
        }
        let map = |h: History| {
            let mut out = 0u64;
            for (i, &p) in perm.iter().enumerate() {
                if h.has(i) {
                    out |= 1 << p;
                }
            }
            History(out)
        };
        Self::new(self.n, self.counts.iter().map(|(h, m)| (map(*h), *m)))
    }

    /// Canonical hashable key of the counts.
    pub fn key(&self) -> AllocationKey {
        AllocationKey {
            n: self.n as u8,
            counts: self.counts.iter().map(|(h, m)| (h.0, *m)).collect(),
        }
    }

    pub fn from_key(key: &AllocationKey) -> Result<Self> {
        Self::new(key.n as usize, key.counts.iter().map(|(h, m)| (History(*h), *m)))
    }
}

/// Compact, hashable form of a [`FeatureAllocation`] used for histograms.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AllocationKey {
    n: u8,
    counts: Vec<(u64, u64)>,
}

fn check_rows(n: usize) -> Result<()> {
    if n == 0 || n > MAX_ROWS {
        return invalid(format!("row count must be in 1..={MAX_ROWS}, got {n}"));
    }
    Ok(())
}

impl fmt::Display for FeatureAllocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .counts
            .iter()
            .map(|(h, m)| format!("{}:{m}", h.to_bits(self.n)))
            .collect();
        write!(f, "n={} {{{}}}", self.n, parts.join(", "))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAllocation {
    n: usize,
    counts: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    atoms: Option<BTreeMap<String, Vec<AtomRecord>>>,
}

impl Serialize for FeatureAllocation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawAllocation {
            n: self.n,
            counts: self
                .counts
                .iter()
                .map(|(h, m)| (h.to_bits(self.n), *m))
                .collect(),
            atoms: self.atoms.as_ref().map(|a| {
                a.iter()
                    .map(|(h, recs)| (h.to_bits(self.n), recs.clone()))
                    .collect()
            }),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FeatureAllocation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = RawAllocation::deserialize(d)?;
        let parse = |bits: &str| -> std::result::Result<History, D::Error> {
            if bits.len() != raw.n {
                return Err(D::Error::custom(format!(
                    "history {bits:?} does not have {} rows",
                    raw.n
                )));
            }
            History::parse(bits).map_err(D::Error::custom)
        };
        let mut counts = Vec::new();
        for (bits, m) in &raw.counts {
            counts.push((parse(bits)?, *m));
        }
        let alloc = FeatureAllocation::new(raw.n, counts).map_err(D::Error::custom)?;
        match &raw.atoms {
            None => Ok(alloc),
            Some(atoms) => {
                let mut map = BTreeMap::new();
                for (bits, recs) in atoms {
                    map.insert(parse(bits)?, recs.clone());
                }
                alloc.with_atoms(map).map_err(D::Error::custom)
            }
        }
    }
}

/// Reads the feature allocation off a sequence of realizations.
pub fn extract_allocation(rows: &[BernoulliRealization]) -> Result<FeatureAllocation> {
    check_rows(rows.len())?;
    let mut seen: HashMap<AtomId, (u64, f64)> = HashMap::new();
    for (i, row) in rows.iter().enumerate() {
        for atom in &row.atoms {
            seen.entry(atom.id()).or_insert((0, atom.location())).0 |= 1 << i;
        }
    }
    let mut atoms: BTreeMap<History, Vec<AtomRecord>> = BTreeMap::new();
    for (id, (h, loc)) in seen {
        atoms.entry(History(h)).or_default().push(AtomRecord(id, loc));
    }
    for recs in atoms.values_mut() {
        recs.sort_by_key(|r| r.0);
    }
    let counts: Vec<(History, u64)> = atoms.iter().map(|(h, r)| (*h, r.len() as u64)).collect();
    FeatureAllocation::new(rows.len(), counts)?.with_atoms(atoms)
}

/// Counts-only extraction, skipping atom records.
pub fn allocation_key(rows: &[BernoulliRealization]) -> AllocationKey {
    let mut seen: HashMap<AtomId, u64> = HashMap::with_capacity(16);
    for (i, row) in rows.iter().enumerate() {
        for atom in &row.atoms {
            *seen.entry(atom.id()).or_insert(0) |= 1 << i;
        }
    }
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    for h in seen.into_values() {
        *counts.entry(h).or_insert(0) += 1;
    }
    AllocationKey {
        n: rows.len() as u8,
        counts: counts.into_iter().collect(),
    }
}

/// Row limit for [`pack_rows`]: 15 histories of 8 bits fit in a `u128`.
pub const PACKED_MAX_ROWS: usize = 4;

fn pack_counts(counts: &[u16; 15]) -> Option<u128> {
    let mut key = 0u128;
    for (i, &c) in counts.iter().enumerate() {
        if c > u8::MAX as u16 {
            return None;
        }
        key |= (c as u128) << (8 * i);
    }
    Some(key)
}

/// Allocation of at most [`PACKED_MAX_ROWS`] rows as a `u128` with the count
/// of history `h` in byte `h - 1`. `None` when a count exceeds 255 or there
/// are too many rows. `scratch` is reused between calls.
pub fn pack_rows(rows: &[BernoulliRealization], scratch: &mut Vec<(AtomId, u8)>) -> Option<u128> {
    if rows.len() > PACKED_MAX_ROWS {
        return None;
    }
    scratch.clear();
    for (i, row) in rows.iter().enumerate() {
        scratch.extend(row.atoms.iter().map(|a| (a.id(), 1u8 << i)));
    }
    scratch.sort_unstable_by_key(|e| e.0);
    let mut counts = [0u16; 15];
    for run in scratch.chunk_by(|a, b| a.0 == b.0) {
        let h = run.iter().fold(0u8, |acc, e| acc | e.1);
        counts[h as usize - 1] += 1;
    }
    pack_counts(&counts)
}

impl FeatureAllocation {
    /// Same encoding as [`pack_rows`].
    pub fn packed(&self) -> Option<u128> {
        if self.n > PACKED_MAX_ROWS {
            return None;
        }
        let mut counts = [0u16; 15];
        for (h, &m) in &self.counts {
            counts[h.0 as usize - 1] = m.min(u16::MAX as u64) as u16;
        }
        pack_counts(&counts)
    }

    pub fn unpack(n: usize, key: u128) -> Result<Self> {
        if n > PACKED_MAX_ROWS {
            return invalid("packed allocations hold at most 4 rows");
        }
        Self::new(n, (1..(1u64 << n)).map(|h| (History(h), (key >> (8 * (h - 1)) & 0xff) as u64)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnOrder {
    LeftOrdered,
    UniformRandom,
}

/// Binary feature matrix stored by columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    n: usize,
    columns: Vec<History>,
    order: ColumnOrder,
}

impl LabeledMatrix {
    pub fn from_columns(n: usize, columns: &[&str], order: ColumnOrder) -> Result<Self> {
        check_rows(n)?;
        let mut cols = Vec::with_capacity(columns.len());
        for c in columns {
            if c.len() != n {
                return invalid(format!("column {c:?} does not have {n} rows"));
            }
            let h = History::parse(c)?;
            if h.0 == 0 {
                return invalid("all-zero columns are not allowed");
            }
            cols.push(h);
        }
        Ok(Self {
            n,
            columns: cols,
            order,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn columns(&self) -> &[History] {
        &self.columns
    }

    pub fn order(&self) -> ColumnOrder {
        self.order
    }

    pub fn column_sums(&self) -> Vec<u64> {
        self.columns.iter().map(|h| h.rows() as u64).collect()
    }

    pub fn column_strings(&self) -> Vec<String> {
        self.columns.iter().map(|h| h.to_bits(self.n)).collect()
    }

    /// Whether adjacent columns are equal or in left order.
    pub fn is_left_ordered(&self) -> bool {
        self.columns
            .windows(2)
            .all(|w| w[0].left_order_cmp(w[1], self.n) != Ordering::Greater)
    }

    /// The allocation the matrix represents.
    pub fn allocation(&self) -> Result<FeatureAllocation> {
        FeatureAllocation::new(self.n, self.columns.iter().map(|h| (*h, 1)))
    }
}

impl Serialize for LabeledMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.column_strings().serialize(s)
    }
}

/// Reads a list of column bitstrings; the row count comes from the first
/// column, so an empty matrix cannot be read back. The order tag is
/// `left_ordered` exactly when the columns are in left order.
impl<'de> Deserialize<'de> for LabeledMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let cols = Vec::<String>::deserialize(d)?;
        let n = cols
            .first()
            .map(|c| c.len())
            .ok_or_else(|| D::Error::custom("a labeled matrix needs at least one column"))?;
        let refs: Vec<&str> = cols.iter().map(String::as_str).collect();
        let mut m = LabeledMatrix::from_columns(n, &refs, ColumnOrder::UniformRandom).map_err(D::Error::custom)?;
        if m.is_left_ordered() {
            m.order = ColumnOrder::LeftOrdered;
        }
        Ok(m)
    }
}

pub fn left_ordered(allocation: &FeatureAllocation) -> LabeledMatrix {
    let n = allocation.n;
    let mut hs: Vec<(History, u64)> = allocation.counts.iter().map(|(h, m)| (*h, *m)).collect();
    hs.sort_by(|a, b| a.0.left_order_cmp(b.0, n));
    let columns = hs
        .into_iter()
        .flat_map(|(h, m)| std::iter::repeat_n(h, m as usize))
        .collect();
    LabeledMatrix {
        n,
        columns,
        order: ColumnOrder::LeftOrdered,
    }
}

pub fn uniform_labeling<R: Rng + ?Sized>(allocation: &FeatureAllocation, rng: &mut R) -> LabeledMatrix {
    let mut m = left_ordered(allocation);
    m.columns.shuffle(rng);
    m.order = ColumnOrder::UniformRandom;
    m
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return invalid(format!("mass parameter must be positive, got {gamma}"));
    }
    Ok(())
}

/// `gamma * sum_{j<=n} f(j, 1)`, the expected number of atoms in `n` rows.
pub fn expected_atoms(model: &PartitionModel, gamma: f64, n: usize) -> Result<f64> {
    let mut s = 0.0;
    for j in 1..=n as u64 {
        s += model.f(j, 1)?;
    }
    Ok(gamma * s)
}

/// Itemized log-pmf of a feature allocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PmfTerms {
    /// `sum_h M_h ln gamma`
    pub gamma_term: f64,
    /// `-gamma sum_{j<=n} f(j, 1)`
    pub exp_term: f64,
    /// `sum_h M_h ln f(n, s(h))`
    pub f_term: f64,
    /// `-sum_h ln M_h!`
    pub factorial_term: f64,
}

impl PmfTerms {
    pub fn total(&self) -> f64 {
        self.gamma_term + self.exp_term + self.f_term + self.factorial_term
    }
}

pub fn allocation_log_pmf_terms(
    model: &PartitionModel,
    gamma: f64,
    allocation: &FeatureAllocation,
) -> Result<PmfTerms> {
    check_gamma(gamma)?;
    let n = allocation.n as u64;
    let mut terms = PmfTerms {
        gamma_term: allocation.total_atoms() as f64 * gamma.ln(),
        exp_term: -expected_atoms(model, gamma, allocation.n)?,
        f_term: 0.0,
        factorial_term: 0.0,
    };
    // Summing in (s(h), M_h) order makes the result bit-identical under row
    // permutations.
    let mut cells: Vec<(u64, u64)> = allocation.counts.iter().map(|(h, &m)| (h.rows() as u64, m)).collect();
    cells.sort_unstable();
    for (s, m) in cells {
        terms.f_term += m as f64 * model.ln_f(n, s)?;
        terms.factorial_term -= ln_factorial(m);
    }
    Ok(terms)
}

pub fn allocation_log_pmf(model: &PartitionModel, gamma: f64, allocation: &FeatureAllocation) -> Result<f64> {
    allocation_log_pmf_terms(model, gamma, allocation).map(|t| t.total())
}

/// Log-probability of going from `before` (n rows) to `after` (n + 1 rows).
pub fn step_log_pmf(
    model: &PartitionModel,
    gamma: f64,
    before: &FeatureAllocation,
    after: &FeatureAllocation,
) -> Result<f64> {
    check_gamma(gamma)?;
    if after.n != before.n + 1 {
        return invalid("the second allocation must have exactly one more row");
    }
    if after.restrict()?.counts != before.counts {
        return invalid("the first allocation is not the row-restriction of the second");
    }
    let n = before.n as u64;
    let last = 1u64 << before.n;
    let fresh = after.count(History(last));
    let mut lp = ln_poisson_pmf(fresh, gamma * model.new_token_rate(n + 1)?);
    for (h, &m) in &before.counts {
        let stay = after.count(History(h.0 | last));
        let p = model.persistence_prob(n, h.rows() as u64)?;
        lp += ln_binomial_coeff(m, stay) + xlny(stay as f64, p) + xlny((m - stay) as f64, 1.0 - p);
    }
    Ok(lp)
}

/// `ln(zeta! / prod_h M_h!)`, the number of distinct column orderings.
pub fn log_ordering_count(allocation: &FeatureAllocation) -> f64 {
    ln_factorial(allocation.total_atoms()) - allocation.counts.values().map(|&m| ln_factorial(m)).sum::<f64>()
}

/// Log-EFPF: probability of a uniformly labeled matrix with the given column
/// sums.
pub fn efpf_log(model: &PartitionModel, gamma: f64, n: usize, column_sums: &[u64]) -> Result<f64> {
    check_gamma(gamma)?;
    check_rows(n)?;
    let k = column_sums.len() as u64;
    let mut lp = k as f64 * gamma.ln() - ln_factorial(k) - expected_atoms(model, gamma, n)?;
    for &s in column_sums {
        if s < 1 || s > n as u64 {
            return invalid(format!("column sum {s} outside 1..={n}"));
        }
        lp += model.ln_f(n as u64, s)?;
    }
    Ok(lp)
}

/// Every allocation over `n` rows with at most `max_atoms` atoms.
pub fn enumerate_allocations(n: usize, max_atoms: u64) -> Result<Vec<FeatureAllocation>> {
    check_rows(n)?;
    if n > 16 {
        return invalid("allocation enumeration is limited to 16 rows");
    }
    let histories: Vec<History> = (1..(1u64 << n)).map(History).collect();
    let mut out = Vec::new();
    let mut counts = vec![0u64; histories.len()];
    fn rec(
        idx: usize,
        left: u64,
        counts: &mut Vec<u64>,
        histories: &[History],
        n: usize,
        out: &mut Vec<FeatureAllocation>,
    ) {
        if idx == histories.len() {
            out.push(
                FeatureAllocation::new(n, histories.iter().cloned().zip(counts.iter().cloned()))
                    .expect("valid histories"),
            );
            return;
        }
        for m in 0..=left {
            counts[idx] = m;
            rec(idx + 1, left - m, counts, histories, n, out);
        }
        counts[idx] = 0;
    }
    rec(0, max_atoms, &mut counts, &histories, n, &mut out);
    Ok(out)
}
