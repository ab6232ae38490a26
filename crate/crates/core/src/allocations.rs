//! λ-allocations over multi-indices, the region function they induce, and
//! the single-criterion interval bounds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::numerics::{check_beta, MultiIndex, Psi, PsiSpec, DEFAULT_TOLERANCE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Uniform,
    Axial,
    Diagonal,
    Custom,
}

impl std::str::FromStr for Scheme {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "axial" => Ok(Self::Axial),
            "diagonal" => Ok(Self::Diagonal),
            "custom" => Ok(Self::Custom),
            _ => domain(format!("unknown scheme {s:?}")),
        }
    }
}

/// An assignment h ↦ λ_h on `0 ≤ h ≤ H`. Named schemes are evaluated from
/// their formula; only `Custom` stores entries.
#[derive(Clone, Debug, PartialEq)]
pub struct AllocationSpec {
    pub scheme: Scheme,
    pub n: MultiIndex,
    pub h: MultiIndex,
    pub beta: f64,
    pub custom_entries: Option<BTreeMap<MultiIndex, f64>>,
}

impl AllocationSpec {
    /// One of the three named schemes.
    pub fn named(scheme: Scheme, n: MultiIndex, h: MultiIndex, beta: f64) -> Result<Self> {
        if scheme == Scheme::Custom {
            return domain("custom allocations need explicit entries");
        }
        let a = Self { scheme, n, h, beta, custom_entries: None };
        a.validate_shape()?;
        if a.off_n_count() == 0.0 {
            return domain("allocation has no index other than N to carry -beta");
        }
        Ok(a)
    }

    pub fn uniform(n: MultiIndex, h: MultiIndex, beta: f64) -> Result<Self> {
        Self::named(Scheme::Uniform, n, h, beta)
    }

    pub fn axial(n: MultiIndex, h: MultiIndex, beta: f64) -> Result<Self> {
        Self::named(Scheme::Axial, n, h, beta)
    }

    pub fn diagonal(n: MultiIndex, h: MultiIndex, beta: f64) -> Result<Self> {
        Self::named(Scheme::Diagonal, n, h, beta)
    }

    /// Sparse allocation. Entries must lie in `[0, H]`; sign and sum
    /// constraints are reported by [`check_feasibility`](Self::check_feasibility).
    pub fn custom(
        n: MultiIndex,
        h: MultiIndex,
        beta: f64,
        entries: BTreeMap<MultiIndex, f64>,
    ) -> Result<Self> {
        let a = Self { scheme: Scheme::Custom, n, h, beta, custom_entries: Some(entries) };
        a.validate_shape()?;
        for (idx, v) in a.custom_entries.as_ref().expect("set") {
            a.check_index(idx)?;
            if !v.is_finite() {
                return domain(format!("non-finite lambda at h = ({idx})"));
            }
        }
        Ok(a)
    }

    fn validate_shape(&self) -> Result<()> {
        if !self.n.same_len(&self.h) {
            return domain("length mismatch between N and H");
        }
        if !self.n.all_le(&self.h) {
            return domain("N exceeds H");
        }
        check_beta(self.beta)
    }

    fn check_index(&self, h: &MultiIndex) -> Result<()> {
        if !h.same_len(&self.n) {
            return domain("index has the wrong length");
        }
        if !h.all_le(&self.h) {
            return domain(format!("index ({h}) exceeds H"));
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.n.m()
    }

    /// Number of indices sharing the −β mass (as a float; the uniform
    /// count Π(H_i+1) − 1 overflows integers for moderate m).
    fn off_n_count(&self) -> f64 {
        match self.scheme {
            Scheme::Uniform => {
                self.h.entries().iter().map(|&x| (x + 1) as f64).product::<f64>() - 1.0
            }
            Scheme::Axial => self.h.total() as f64,
            Scheme::Diagonal => self.diag_span() as f64,
            Scheme::Custom => {
                self.custom_entries.as_ref().map_or(0, |e| e.keys().filter(|k| **k != self.n).count())
                    as f64
            }
        }
    }

    /// |J_0| − 1 = min(N) + min(H − N).
    fn diag_span(&self) -> usize {
        self.n.min_entry() + self.h.checked_sub(&self.n).expect("validated").min_entry()
    }

    fn off_n_value(&self) -> f64 {
        -self.beta / self.off_n_count()
    }

    pub fn lambda_at(&self, h: &MultiIndex) -> Result<f64> {
        self.check_index(h)?;
        if *h == self.n && self.scheme != Scheme::Custom {
            return Ok(1.0);
        }
        Ok(match self.scheme {
            Scheme::Uniform => self.off_n_value(),
            Scheme::Axial => {
                let differing =
                    h.entries().iter().zip(self.n.entries()).filter(|(a, b)| a != b).count();
                if differing == 1 {
                    self.off_n_value()
                } else {
                    0.0
                }
            }
            Scheme::Diagonal => {
                let first = h[0] as i64 - self.n[0] as i64;
                let on_diag = h
                    .entries()
                    .iter()
                    .zip(self.n.entries())
                    .all(|(&a, &b)| a as i64 - b as i64 == first);
                if on_diag {
                    self.off_n_value()
                } else {
                    0.0
                }
            }
            Scheme::Custom => {
                self.custom_entries.as_ref().and_then(|e| e.get(h)).copied().unwrap_or(0.0)
            }
        })
    }

    pub fn check_feasibility(&self) -> FeasibilityReport {
        let target = 1.0 - self.beta;
        let mut violations = Vec::new();
        let total = match self.scheme {
            Scheme::Custom => {
                let entries = self.custom_entries.as_ref();
                let mut total = 0.0;
                for (h, &v) in entries.into_iter().flatten() {
                    total += v;
                    if *h == self.n {
                        if v > 1.0 {
                            violations.push(format!("lambda_N = {v} exceeds 1"));
                        }
                    } else if v > 0.0 {
                        violations.push(format!("lambda at h = ({h}) is {v} > 0"));
                    }
                }
                total
            }
            _ => 1.0 + self.off_n_count() * self.off_n_value(),
        };
        let gap = total - target;
        if gap.abs() > 1e-12 * target.abs().max(1.0) {
            violations.push(format!("sum of lambda is {total}, expected {target} (off by {gap:e})"));
        }
        FeasibilityReport { feasible: violations.is_empty(), total, target, violations }
    }

    /// Precomputes what the region function at complexity `k` needs.
    pub fn region_fn(&self, k: &MultiIndex) -> Result<RegionFn<'_>> {
        if !k.same_len(&self.n) {
            return domain("length mismatch between k and N");
        }
        if !k.all_le(&self.n) {
            return domain("k exceeds N");
        }
        let inner = match self.scheme {
            Scheme::Diagonal => {
                let spec = PsiSpec::new(k.clone(), self.n.clone(), self.h.clone(), self.beta)?;
                RegionInner::Diagonal(Psi::new(&spec)?)
            }
            _ => RegionInner::Weights(
                (0..self.m()).map(|i| log_weights_1d(self.n[i], k[i], self.h[i])).collect(),
            ),
        };
        Ok(RegionFn { alloc: self, k: k.clone(), inner })
    }

    pub fn region_function(&self, k: &MultiIndex, v: &[f64]) -> Result<f64> {
        self.region_fn(k)?.eval(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub total: f64,
    pub target: f64,
    pub violations: Vec<String>,
}

/// ln C(h,k)/C(N,k) for h = k..=H, indexed by h − k.
fn log_weights_1d(n: usize, k: usize, h_max: usize) -> Vec<f64> {
    let mut w = vec![0.0; h_max - k + 1];
    let mut acc = 0.0;
    for h in (k..n).rev() {
        // C(h,k)/C(h+1,k) = (h+1−k)/(h+1)
        acc += (-(k as f64) / (h + 1) as f64).ln_1p();
        w[h - k] = acc;
    }
    acc = 0.0;
    for h in n + 1..=h_max {
        // C(h,k)/C(h−1,k) = h/(h−k)
        acc += (k as f64 / (h - k) as f64).ln_1p();
        w[h - k] = acc;
    }
    w
}

enum RegionInner {
    Diagonal(Psi),
    Weights(Vec<Vec<f64>>),
}

/// g_k(v) for one allocation and complexity, ready for repeated evaluation.
pub struct RegionFn<'a> {
    alloc: &'a AllocationSpec,
    k: MultiIndex,
    inner: RegionInner,
}

impl RegionFn<'_> {
    fn check_v(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.k.m() {
            return domain(format!("v has {} entries, expected {}", v.len(), self.k.m()));
        }
        if let Some(x) = v.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return domain(format!("v entry {x} outside [0,1]"));
        }
        Ok(())
    }

    fn pole_check(&self, v: &[f64]) -> Result<()> {
        for (i, &vi) in v.iter().enumerate() {
            if vi == 1.0 && self.k[i] < self.alloc.n[i] {
                return domain(format!("pole: v_{} = 1 with k_{} < N_{}", i + 1, i + 1, i + 1));
            }
        }
        Ok(())
    }

    pub fn eval(&self, v: &[f64]) -> Result<f64> {
        self.check_v(v)?;
        match &self.inner {
            RegionInner::Diagonal(psi) => {
                let t: f64 = v.iter().map(|x| 1.0 - x).product();
                psi.eval(t)
            }
            RegionInner::Weights(w) => {
                if self.alloc.scheme != Scheme::Custom {
                    self.pole_check(v)?;
                }
                Ok(self.eval_weights(w, v)?)
            }
        }
    }

    /// Membership `g_k(v) ≥ 0`.
    pub fn contains(&self, v: &[f64]) -> Result<bool> {
        match &self.inner {
            RegionInner::Diagonal(psi) => {
                self.check_v(v)?;
                let t: f64 = v.iter().map(|x| 1.0 - x).product();
                psi.is_nonneg(t)
            }
            _ => Ok(self.eval(v)? >= 0.0),
        }
    }

    // ln Σ_{h ∈ [k_i, H_i], h ≠ N_i if skip_n} w(h) x^{h−N}. The exponent
    // is concave in h, so the sum is taken outward from its peak and stops
    // once terms fall e^-40 below it (at most H_i dropped terms, so the
    // relative loss stays below 1e-14).
    fn log_axis_sum(&self, w: &[f64], i: usize, lx: f64, skip_n: bool) -> f64 {
        let (n, k) = (self.alloc.n[i], self.k[i]);
        let e = |idx: usize| w[idx] + ((k + idx) as f64 - n as f64) * lx;
        let (mut lo, mut hi) = (0, w.len() - 1);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if e(mid + 1) > e(mid) {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        let peak = e(lo);
        if !peak.is_finite() {
            return peak;
        }
        let keep = |idx: usize| !(skip_n && k + idx == n);
        let mut s = 0.0;
        let mut idx = lo;
        loop {
            let x = e(idx);
            if x < peak - 40.0 {
                break;
            }
            if keep(idx) {
                s += (x - peak).exp();
            }
            if idx == 0 {
                break;
            }
            idx -= 1;
        }
        for idx in lo + 1..w.len() {
            let x = e(idx);
            if x < peak - 40.0 {
                break;
            }
            if keep(idx) {
                s += (x - peak).exp();
            }
        }
        peak + s.ln()
    }

    fn eval_weights(&self, w: &[Vec<f64>], v: &[f64]) -> Result<f64> {
        let lx: Vec<f64> = v.iter().map(|x| (1.0 - x).ln()).collect();
        let a = self.alloc;
        match a.scheme {
            Scheme::Uniform => {
                let log_prod: f64 =
                    (0..v.len()).map(|i| self.log_axis_sum(&w[i], i, lx[i], false)).sum();
                let c = -a.off_n_value();
                Ok(1.0 + c - (c.ln() + log_prod).exp())
            }
            Scheme::Axial => {
                let s: f64 =
                    (0..v.len()).map(|i| self.log_axis_sum(&w[i], i, lx[i], true).exp()).sum();
                Ok(1.0 + a.off_n_value() * s)
            }
            Scheme::Custom => {
                let mut g = 0.0;
                for (h, &lam) in a.custom_entries.iter().flatten() {
                    if lam == 0.0 || !self.k.all_le(h) {
                        continue;
                    }
                    let mut lt = 0.0;
                    for i in 0..v.len() {
                        let d = h[i] as f64 - a.n[i] as f64;
                        if d == 0.0 {
                            lt += w[i][h[i] - self.k[i]];
                            continue;
                        }
                        if v[i] == 1.0 && d < 0.0 {
                            return domain(format!(
                                "pole: v_{} = 1 with nonzero lambda at h = ({h})",
                                i + 1
                            ));
                        }
                        lt += w[i][h[i] - self.k[i]] + d * lx[i];
                    }
                    g += lam * lt.exp();
                }
                Ok(g)
            }
            Scheme::Diagonal => unreachable!("diagonal uses psi"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalChoice {
    /// H = 4N, λ = −β/2N below N and −β/6N above.
    ThreeBandH4N,
    /// H = N, λ = −β/N below N.
    UpperOnlyHN,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalBound {
    pub eps_lo: f64,
    pub eps_hi: f64,
    pub k: usize,
    pub n: usize,
    pub beta: f64,
}

/// Scalar interval [ε̲(k), ε̃(k)] for one criterion.
pub fn scalar_interval(
    n: usize,
    k: usize,
    beta: f64,
    choice: IntervalChoice,
) -> Result<IntervalBound> {
    scalar_interval_tol(n, k, beta, choice, DEFAULT_TOLERANCE)
}

pub fn scalar_interval_tol(
    n: usize,
    k: usize,
    beta: f64,
    choice: IntervalChoice,
    tolerance: f64,
) -> Result<IntervalBound> {
    if n == 0 {
        return domain("N must be positive");
    }
    if k > n {
        return domain("k exceeds N");
    }
    check_beta(beta)?;
    let (kk, nn) = (MultiIndex::new(vec![k])?, MultiIndex::new(vec![n])?);
    // In t = 1 − v the scalar left-hand side is ψ-shaped; its zeros in t
    // map to the interval ends in v.
    let psi = match choice {
        IntervalChoice::UpperOnlyHN => Psi::new(&PsiSpec::new(kk, nn.clone(), nn, beta)?)?,
        IntervalChoice::ThreeBandH4N => {
            let nf = n as f64;
            Psi::with_weights(&kk, &nn, &nn.scale(4), beta / (2.0 * nf), beta / (6.0 * nf))
        }
    };
    let rp = psi.root_pair(tolerance)?;
    let eps_hi = if k < n { 1.0 - rp.t_bar } else { 1.0 };
    let eps_lo = (1.0 - rp.t_underbar).max(0.0);
    Ok(IntervalBound { eps_lo, eps_hi, k, n, beta })
}
