//! Multi-indices, log-domain binomial ratios, the ψ family and its roots.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Default bisection tolerance on the final bracket width.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

/// Relative size below which the remaining geometric tail of a ψ sum is dropped.
const TAIL_CUTOFF: f64 = 1e-17;

/// A non-empty vector of non-negative integers.
///
/// Ordering helpers (`all_le`, `all_lt`) are componentwise; the derived `Ord`
/// is lexicographic and only exists so indices can key ordered maps.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(entries: Vec<usize>) -> Result<Self> {
        if entries.is_empty() {
            return domain("multi-index must have at least one entry");
        }
        Ok(Self(entries))
    }

    /// `value·1` of length `m`.
    pub fn filled(m: usize, value: usize) -> Result<Self> {
        Self::new(vec![value; m])
    }

    /// Entries in {⌊total/m⌋, ⌈total/m⌉}, larger entries first.
    pub fn balanced(m: usize, total: usize) -> Result<Self> {
        if m == 0 {
            return domain("multi-index must have at least one entry");
        }
        let (q, r) = (total / m, total % m);
        Self::new((0..m).map(|i| q + usize::from(i < r)).collect())
    }

    /// `total` in the first entry, zeros elsewhere.
    pub fn concentrated(m: usize, total: usize) -> Result<Self> {
        if m == 0 {
            return domain("multi-index must have at least one entry");
        }
        let mut e = vec![0; m];
        e[0] = total;
        Self::new(e)
    }

    pub fn m(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &[usize] {
        &self.0
    }

    /// |k|, the sum of the entries.
    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn min_entry(&self) -> usize {
        *self.0.iter().min().expect("non-empty")
    }

    pub fn max_entry(&self) -> usize {
        *self.0.iter().max().expect("non-empty")
    }

    pub fn is_homogeneous(&self) -> bool {
        self.0.iter().all(|&x| x == self.0[0])
    }

    pub fn same_len(&self, other: &Self) -> bool {
        self.m() == other.m()
    }

    /// `self ≤ other` in every component. False on length mismatch.
    pub fn all_le(&self, other: &Self) -> bool {
        self.same_len(other) && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// `self < other` in every component. False on length mismatch.
    pub fn all_lt(&self, other: &Self) -> bool {
        self.same_len(other) && self.0.iter().zip(&other.0).all(|(a, b)| a < b)
    }

    /// Componentwise `self − other`, if `other ≤ self`.
    pub fn checked_sub(&self, other: &Self) -> Option<Self> {
        if !other.all_le(self) {
            return None;
        }
        Some(Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()))
    }

    pub fn scale(&self, factor: usize) -> Self {
        Self(self.0.iter().map(|x| x * factor).collect())
    }
}

impl TryFrom<Vec<usize>> for MultiIndex {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<MultiIndex> for Vec<usize> {
    fn from(k: MultiIndex) -> Self {
        k.0
    }
}

impl std::ops::Index<usize> for MultiIndex {
    type Output = usize;
    fn index(&self, i: usize) -> &usize {
        &self.0[i]
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{x}")?;
        }
        Ok(())
    }
}

impl FromStr for MultiIndex {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let entries = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Domain(format!("not a non-negative integer: {p:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }
}

fn check_k_le_n(n: &MultiIndex, k: &MultiIndex) -> Result<()> {
    if !n.same_len(k) {
        return domain(format!("length mismatch: N has {} entries, k has {}", n.m(), k.m()));
    }
    if !k.all_le(n) {
        return domain("k exceeds N");
    }
    Ok(())
}

/// ln Π_i C(N_i−j, k_i)/C(N_i, k_i).
pub fn log_binom_ratio_minus(n: &MultiIndex, k: &MultiIndex, j: usize) -> Result<f64> {
    check_k_le_n(n, k)?;
    let jmax = n.checked_sub(k).expect("checked").min_entry();
    if j == 0 || j > jmax {
        return domain(format!("j = {j} outside 1..={jmax}"));
    }
    let mut acc = 0.0;
    for (&ni, &ki) in n.entries().iter().zip(k.entries()) {
        for l in 0..j {
            acc += minus_step(ni, ki, l);
        }
    }
    Ok(acc)
}

/// ln Π_i C(N_i+j, k_i)/C(N_i, k_i).
pub fn log_binom_ratio_plus(n: &MultiIndex, k: &MultiIndex, j: usize) -> Result<f64> {
    check_k_le_n(n, k)?;
    if j == 0 {
        return domain("j must be positive");
    }
    let mut acc = 0.0;
    for (&ni, &ki) in n.entries().iter().zip(k.entries()) {
        for l in 1..=j {
            acc += plus_step(ni, ki, l);
        }
    }
    Ok(acc)
}

// ln((N−k−ℓ)/(N−ℓ))
#[inline]
fn minus_step(n: usize, k: usize, l: usize) -> f64 {
    if k == 0 {
        0.0
    } else {
        (-(k as f64) / (n - l) as f64).ln_1p()
    }
}

// ln((N+ℓ)/(N−k+ℓ))
#[inline]
fn plus_step(n: usize, k: usize, l: usize) -> f64 {
    if k == 0 {
        0.0
    } else {
        (k as f64 / (n - k + l) as f64).ln_1p()
    }
}

/// Parameters (k, N, H, β) of one member of the ψ family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiSpec {
    pub k: MultiIndex,
    pub n: MultiIndex,
    pub h: MultiIndex,
    pub beta: f64,
}

impl PsiSpec {
    pub fn new(k: MultiIndex, n: MultiIndex, h: MultiIndex, beta: f64) -> Result<Self> {
        let s = Self { k, n, h, beta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        check_k_le_n(&self.n, &self.k)?;
        if !self.h.same_len(&self.n) {
            return domain("length mismatch between H and N");
        }
        if !self.n.all_le(&self.h) {
            return domain("N exceeds H");
        }
        check_beta(self.beta)
    }

    pub fn m(&self) -> usize {
        self.n.m()
    }

    /// |J_0| − 1 = min(N) + min(H−N).
    pub fn j0_minus_one(&self) -> usize {
        self.n.min_entry() + self.h.checked_sub(&self.n).expect("validated").min_entry()
    }

    pub fn t_hat(&self) -> f64 {
        t_hat(&self.n, &self.k)
    }
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return domain(format!("beta = {beta} outside (0,1)"));
    }
    Ok(())
}

/// t̂ = Π(1 − k_i/N_i); zero unless k < N.
pub fn t_hat(n: &MultiIndex, k: &MultiIndex) -> f64 {
    if !k.all_lt(n) {
        return 0.0;
    }
    let s: f64 = n
        .entries()
        .iter()
        .zip(k.entries())
        .map(|(&ni, &ki)| (-(ki as f64) / ni as f64).ln_1p())
        .sum();
    s.exp()
}

/// Zeros of ψ bounding the band `t_bar ≤ t ≤ t_underbar`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootPair {
    pub t_bar: f64,
    pub t_underbar: f64,
}

/// A ψ-shaped function `1 − c₋ Σ r⁻_j t^{−j} − c₊ Σ r⁺_j t^{j}` with its
/// log ratios precomputed, so repeated evaluation costs one `exp` per term.
#[derive(Clone, Debug)]
pub struct Psi {
    /// `lminus[j-1] = log_binom_ratio_minus(N, k, j)`
    lminus: Vec<f64>,
    /// `lplus[j-1] = log_binom_ratio_plus(N, k, j)`
    lplus: Vec<f64>,
    c_minus: f64,
    c_plus: f64,
    t_hat: f64,
}

impl Psi {
    pub fn new(spec: &PsiSpec) -> Result<Self> {
        spec.validate()?;
        let d = spec.j0_minus_one();
        let c = if d == 0 { 0.0 } else { spec.beta / d as f64 };
        Ok(Self::with_weights(&spec.k, &spec.n, &spec.h, c, c))
    }

    /// Same shape with independent weights on the two sums. Inputs must
    /// already satisfy `k ≤ N ≤ H`.
    pub(crate) fn with_weights(
        k: &MultiIndex,
        n: &MultiIndex,
        h: &MultiIndex,
        c_minus: f64,
        c_plus: f64,
    ) -> Self {
        // Identical criteria contribute identical increments; group them.
        let mut groups: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (&ni, &ki) in n.entries().iter().zip(k.entries()) {
            *groups.entry((ni, ki)).or_insert(0.0) += 1.0;
        }
        let jm = n.checked_sub(k).expect("k ≤ N").min_entry();
        let jp = h.checked_sub(n).expect("N ≤ H").min_entry();

        let mut lminus = vec![0.0; jm];
        let mut lplus = vec![0.0; jp];
        for (&(ni, ki), &count) in &groups {
            if ki == 0 {
                continue;
            }
            for (l, slot) in lminus.iter_mut().enumerate() {
                *slot += count * minus_step(ni, ki, l);
            }
            for (l, slot) in lplus.iter_mut().enumerate() {
                *slot += count * plus_step(ni, ki, l + 1);
            }
        }
        cumsum(&mut lminus);
        cumsum(&mut lplus);
        Self {
            lminus,
            lplus,
            c_minus: if jm == 0 { 0.0 } else { c_minus },
            c_plus: if jp == 0 { 0.0 } else { c_plus },
            t_hat: t_hat(n, k),
        }
    }

    pub fn t_hat(&self) -> f64 {
        self.t_hat
    }

    /// True when the negative-power sum is present, i.e. k < N.
    pub fn has_pole(&self) -> bool {
        !self.lminus.is_empty()
    }

    fn check_t(&self, t: f64) -> Result<()> {
        if t.is_nan() || t < 0.0 {
            return domain(format!("psi evaluated at t = {t}"));
        }
        if t == 0.0 && self.has_pole() {
            return domain("psi has a pole at t = 0 when k < N");
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        self.check_t(t)?;
        Ok(self.eval_unchecked(t))
    }

    pub(crate) fn eval_unchecked(&self, t: f64) -> f64 {
        let lt = t.ln();
        let mut v = 1.0;
        if self.c_minus > 0.0 {
            v -= self.c_minus * sum_terms(&self.lminus, -lt, f64::INFINITY);
        }
        if self.c_plus > 0.0 {
            v -= self.c_plus * sum_terms(&self.lplus, lt, f64::INFINITY);
        }
        v
    }

    /// Sign of ψ(t) without always summing every term: both sums are
    /// non-negative, so once either alone exceeds 1 the sign is settled.
    pub fn is_nonneg(&self, t: f64) -> Result<bool> {
        self.check_t(t)?;
        Ok(self.is_nonneg_unchecked(t))
    }

    pub(crate) fn is_nonneg_unchecked(&self, t: f64) -> bool {
        let lt = t.ln();
        let mut used = 0.0;
        if self.c_minus > 0.0 {
            used += self.c_minus * sum_terms(&self.lminus, -lt, 1.0 / self.c_minus);
            if used > 1.0 {
                return false;
            }
        }
        if self.c_plus > 0.0 {
            used += self.c_plus * sum_terms(&self.lplus, lt, (1.0 - used) / self.c_plus);
        }
        1.0 - used >= 0.0
    }

    /// Conservative zeros per the bisection procedure: `t_bar` is the left
    /// end of its final bracket, `t_underbar` the right end.
    pub fn root_pair(&self, tolerance: f64) -> Result<RootPair> {
        if tolerance.is_nan() || tolerance <= 0.0 {
            return domain("tolerance must be positive");
        }
        let t_bar = if self.has_pole() {
            bisect(|t| self.is_nonneg_unchecked(t), 0.0, self.t_hat, tolerance, true).0
        } else {
            0.0
        };
        let t_underbar = if self.c_plus > 0.0 {
            bisect(|t| self.is_nonneg_unchecked(t), self.t_hat, 1.0, tolerance, false).1
        } else {
            1.0
        };
        Ok(RootPair { t_bar, t_underbar: t_underbar.min(1.0) })
    }
}

fn cumsum(v: &mut [f64]) {
    let mut acc = 0.0;
    for x in v {
        acc += *x;
        *x = acc;
    }
}

/// Σ_j exp(ls[j−1] + j·a), stopping early once the partial sum exceeds `cap`
/// or the remaining terms are provably negligible.
///
/// The exponents are concave in j (the increments of `ls` never grow), so
/// the sum starts at the largest term and walks outward. On either side the
/// term ratios only shrink, so once at a term with ratio r < 1 the rest of
/// that side is bounded by term·r/(1−r).
#[inline]
fn sum_terms(ls: &[f64], a: f64, cap: f64) -> f64 {
    // a = −∞ is t = 0 in the positive-power sum: every term vanishes
    if ls.is_empty() || a == f64::NEG_INFINITY {
        return 0.0;
    }
    let e = |i: usize| ls[i] + (i + 1) as f64 * a;
    let (mut lo, mut hi) = (0, ls.len() - 1);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if e(mid + 1) > e(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    let peak = lo;
    let top = e(peak).exp();
    let mut sum = top;
    if sum > cap {
        return sum;
    }
    // Each side: step by the ratio r to the next term, stop once the
    // remainder is bounded below the cutoff.
    for step in [1isize, -1] {
        let (mut i, mut term) = (peak, top);
        loop {
            let next = i as isize + step;
            if next < 0 || next as usize >= ls.len() {
                break;
            }
            let r = (e(next as usize) - e(i)).exp();
            if r < 1.0 && term * r / (1.0 - r) <= TAIL_CUTOFF * sum {
                break;
            }
            i = next as usize;
            term *= r;
            sum += term;
            if sum > cap {
                return sum;
            }
        }
    }
    sum
}

/// Bisection on `[lo, hi]` for a predicate that changes value once. With
/// `nonneg_on_right` the predicate holds to the right of the crossing.
/// Returns the final bracket, of width at most `tol`.
pub fn bisect(
    nonneg: impl Fn(f64) -> bool,
    lo: f64,
    hi: f64,
    tol: f64,
    nonneg_on_right: bool,
) -> (f64, f64) {
    let (mut left, mut right) = (lo, hi);
    while right - left > tol {
        let mid = 0.5 * (left + right);
        if mid <= left || mid >= right {
            break;
        }
        if nonneg(mid) == nonneg_on_right {
            right = mid;
        } else {
            left = mid;
        }
    }
    (left, right)
}

pub fn psi_eval(spec: &PsiSpec, t: f64) -> Result<f64> {
    Psi::new(spec)?.eval(t)
}

pub fn find_root_pair(spec: &PsiSpec, tolerance: f64) -> Result<RootPair> {
    Psi::new(spec)?.root_pair(tolerance)
}
