//! A-posteriori regions and joint-risk bounds, a-priori bounds over a
//! complexity cap, and dataset sizing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::allocations::{scalar_interval, AllocationSpec, IntervalBound, RegionFn, IntervalChoice};
use crate::error::{domain, Error, Result};
use crate::numerics::{check_beta, MultiIndex, Psi, PsiSpec, RootPair, DEFAULT_TOLERANCE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    IndependentBox,
    DiagonalBand,
    GeneralAllocation,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RegionPayload {
    IndependentBox { bounds: Vec<IntervalBound>, choice: IntervalChoice },
    DiagonalBand(RootPair),
    GeneralAllocation(AllocationSpec),
}

/// A set of individual-risk vectors certified with probability `confidence`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionCertificate {
    pub confidence: f64,
    pub k: MultiIndex,
    pub n: MultiIndex,
    pub h: MultiIndex,
    pub payload: RegionPayload,
}

impl RegionCertificate {
    pub fn kind(&self) -> RegionKind {
        match self.payload {
            RegionPayload::IndependentBox { .. } => RegionKind::IndependentBox,
            RegionPayload::DiagonalBand(_) => RegionKind::DiagonalBand,
            RegionPayload::GeneralAllocation(_) => RegionKind::GeneralAllocation,
        }
    }

    pub fn m(&self) -> usize {
        self.n.m()
    }

    /// Membership tester with any per-region precomputation done once.
    pub fn membership(&self) -> Result<Membership<'_>> {
        Ok(match &self.payload {
            RegionPayload::GeneralAllocation(a) => Membership::Allocation(a.region_fn(&self.k)?),
            _ => Membership::Simple(self),
        })
    }

    pub fn contains(&self, v: &[f64]) -> Result<bool> {
        self.membership()?.contains(v)
    }
}

pub enum Membership<'a> {
    Simple(&'a RegionCertificate),
    Allocation(RegionFn<'a>),
}

impl Membership<'_> {
    pub fn contains(&self, v: &[f64]) -> Result<bool> {
        match self {
            Membership::Allocation(g) => g.contains(v),
            Membership::Simple(cert) => {
                if v.len() != cert.m() {
                    return domain(format!("v has {} entries, expected {}", v.len(), cert.m()));
                }
                if let Some(x) = v.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                    return domain(format!("v entry {x} outside [0,1]"));
                }
                Ok(match &cert.payload {
                    RegionPayload::IndependentBox { bounds, .. } => {
                        bounds.iter().zip(v).all(|(b, &x)| b.eps_lo <= x && x <= b.eps_hi)
                    }
                    RegionPayload::DiagonalBand(rp) => {
                        let t: f64 = v.iter().map(|x| 1.0 - x).product();
                        rp.t_bar <= t && t <= rp.t_underbar
                    }
                    RegionPayload::GeneralAllocation(_) => unreachable!(),
                })
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    IndependentSum,
    DiagonalClosedForm,
    GeneralRegionMax,
    AprioriIndependent,
    AprioriDiagonal,
    AprioriBestCase,
    UniformInM,
}

/// What a joint bound was computed from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointInputs {
    pub k: Option<MultiIndex>,
    pub k_star: Option<usize>,
    pub n: MultiIndex,
    pub beta: f64,
}

/// Upper bound on the joint risk. `bound` is capped at 1; `raw_bound` keeps
/// the uncapped value for reporting.
#[derive(Clone, Debug, PartialEq)]
pub struct JointRiskCertificate {
    pub bound: f64,
    pub raw_bound: f64,
    pub confidence: f64,
    pub method: Method,
    pub inputs: JointInputs,
}

impl JointRiskCertificate {
    fn new(raw: f64, beta: f64, method: Method, inputs: JointInputs) -> Self {
        Self { bound: raw.clamp(0.0, 1.0), raw_bound: raw, confidence: 1.0 - beta, method, inputs }
    }
}

/// One criterion's (N_i, k_i, β_i).
pub type CriterionInput = (usize, usize, f64);

/// Per-criterion inputs with the default split β_i = β/m.
pub fn split_beta(n: &MultiIndex, k: &MultiIndex, beta: f64) -> Result<Vec<CriterionInput>> {
    if !n.same_len(k) {
        return domain("length mismatch between N and k");
    }
    let bi = beta / n.m() as f64;
    Ok(n.entries().iter().zip(k.entries()).map(|(&ni, &ki)| (ni, ki, bi)).collect())
}

fn check_split(per: &[CriterionInput]) -> Result<f64> {
    if per.is_empty() {
        return domain("at least one criterion is required");
    }
    for &(_, _, b) in per {
        check_beta(b)?;
    }
    let total: f64 = per.iter().map(|p| p.2).sum();
    if total >= 1.0 {
        return domain(format!("sum of beta_i = {total} must be below 1"));
    }
    Ok(total)
}

fn indices_of(per: &[CriterionInput]) -> Result<(MultiIndex, MultiIndex)> {
    Ok((
        MultiIndex::new(per.iter().map(|p| p.0).collect())?,
        MultiIndex::new(per.iter().map(|p| p.1).collect())?,
    ))
}

/// Product of per-criterion intervals, confidence 1 − Σβ_i.
pub fn box_region(per: &[CriterionInput], choice: IntervalChoice) -> Result<RegionCertificate> {
    let beta = check_split(per)?;
    let bounds = per
        .iter()
        .map(|&(n, k, b)| scalar_interval(n, k, b, choice))
        .collect::<Result<Vec<_>>>()?;
    let (n, k) = indices_of(per)?;
    let h = match choice {
        IntervalChoice::UpperOnlyHN => n.clone(),
        IntervalChoice::ThreeBandH4N => n.scale(4),
    };
    Ok(RegionCertificate {
        confidence: 1.0 - beta,
        k,
        n,
        h,
        payload: RegionPayload::IndependentBox { bounds, choice },
    })
}

pub fn diagonal_region(
    n: &MultiIndex,
    h: &MultiIndex,
    k: &MultiIndex,
    beta: f64,
) -> Result<RegionCertificate> {
    let spec = PsiSpec::new(k.clone(), n.clone(), h.clone(), beta)?;
    let rp = Psi::new(&spec)?.root_pair(DEFAULT_TOLERANCE)?;
    Ok(RegionCertificate {
        confidence: 1.0 - beta,
        k: k.clone(),
        n: n.clone(),
        h: h.clone(),
        payload: RegionPayload::DiagonalBand(rp),
    })
}

/// Region induced by an arbitrary feasible allocation.
pub fn allocation_region(alloc: &AllocationSpec, k: &MultiIndex) -> Result<RegionCertificate> {
    let report = alloc.check_feasibility();
    if !report.feasible {
        return domain(format!("infeasible allocation: {}", report.violations.join("; ")));
    }
    alloc.region_fn(k)?;
    Ok(RegionCertificate {
        confidence: 1.0 - alloc.beta,
        k: k.clone(),
        n: alloc.n.clone(),
        h: alloc.h.clone(),
        payload: RegionPayload::GeneralAllocation(alloc.clone()),
    })
}

/// Σ ε̃_i(k_i), capped at 1.
pub fn joint_bound_independent(
    per: &[CriterionInput],
    choice: IntervalChoice,
) -> Result<JointRiskCertificate> {
    let beta = check_split(per)?;
    let mut raw = 0.0;
    for &(n, k, b) in per {
        raw += scalar_interval(n, k, b, choice)?.eps_hi;
    }
    let (n, k) = indices_of(per)?;
    Ok(JointRiskCertificate::new(
        raw,
        beta,
        Method::IndependentSum,
        JointInputs { k: Some(k), k_star: None, n, beta },
    ))
}

/// m(1 − t^{1/m}), the largest |v| on the hyperbola Π(1−v_i) = t.
pub fn amgm_closed_form(m: usize, t: f64) -> f64 {
    let m = m as f64;
    -m * (t.ln() / m).exp_m1()
}

/// Largest |v| over the diagonal region with H = N.
pub fn joint_bound_diagonal(n: &MultiIndex, k: &MultiIndex, beta: f64) -> Result<JointRiskCertificate> {
    let spec = PsiSpec::new(k.clone(), n.clone(), n.clone(), beta)?;
    let t_bar = Psi::new(&spec)?.root_pair(DEFAULT_TOLERANCE)?.t_bar;
    Ok(JointRiskCertificate::new(
        amgm_closed_form(n.m(), t_bar),
        beta,
        Method::DiagonalClosedForm,
        JointInputs { k: Some(k.clone()), k_star: None, n: n.clone(), beta },
    ))
}

/// Largest |v| over a diagonal band for any H; with H = N this is
/// [`joint_bound_diagonal`].
pub fn joint_bound_from_band(cert: &RegionCertificate) -> Result<JointRiskCertificate> {
    let RegionPayload::DiagonalBand(rp) = &cert.payload else {
        return domain("closed-form joint bound needs a diagonal band");
    };
    let beta = 1.0 - cert.confidence;
    Ok(JointRiskCertificate::new(
        amgm_closed_form(cert.m(), rp.t_bar),
        beta,
        Method::DiagonalClosedForm,
        JointInputs { k: Some(cert.k.clone()), k_star: None, n: cert.n.clone(), beta },
    ))
}

/// Largest dimension accepted by [`joint_bound_region_max`] by default.
pub const REGION_MAX_DIMS: usize = 3;

/// Numerical max of Σv over a region for small m. A dense grid over
/// `[0,1)^m` locates candidates; each is then refined by a compass search
/// over the hyperplane Σw = 0, scoring w by the furthest member point
/// w + s·1 along the diagonal ray (found by bisection). For convex regions
/// that score is concave in w, so the search converges to the maximum.
/// The result is inflated by the search and bisection resolutions.
pub fn joint_bound_region_max(
    cert: &RegionCertificate,
    dims_limit: usize,
    resolution: usize,
) -> Result<JointRiskCertificate> {
    let m = cert.m();
    if m > dims_limit {
        return Err(Error::Dimension { m, limit: dims_limit });
    }
    if resolution < 2 {
        return domain("grid resolution must be at least 2");
    }
    let test = cert.membership()?;
    let member = |v: &[f64]| test.contains(v).unwrap_or(false);
    let step = 1.0 / resolution as f64;

    let mut starts: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut idx = vec![0usize; m];
    let mut v = vec![0.0; m];
    'grid: loop {
        for (x, &i) in v.iter_mut().zip(&idx) {
            *x = i as f64 * step;
        }
        let s: f64 = v.iter().sum();
        if (starts.len() < KEEP || s > starts[KEEP - 1].0) && member(&v) {
            let pos = starts.partition_point(|(x, _)| *x >= s);
            starts.insert(pos, (s, v.clone()));
            starts.truncate(KEEP);
        }
        for i in idx.iter_mut() {
            *i += 1;
            if *i < resolution {
                continue 'grid;
            }
            *i = 0;
        }
        break;
    }
    if starts.is_empty() {
        return domain("no grid point lies in the region");
    }

    let mut best = starts[0].0;
    for (_, p) in &starts {
        best = best.max(ray_compass_search(&member, p, step));
    }
    let beta = 1.0 - cert.confidence;
    Ok(JointRiskCertificate::new(
        best + m as f64 * (COMPASS_MIN_STEP + BISECT_TOL),
        beta,
        Method::GeneralRegionMax,
        JointInputs { k: Some(cert.k.clone()), k_star: None, n: cert.n.clone(), beta },
    ))
}

const KEEP: usize = 8;
const COMPASS_MIN_STEP: f64 = 1e-9;
const BISECT_TOL: f64 = 1e-12;

/// Largest s with `w + s·1` a member, starting from the member offset `s0`;
/// None when the ray leaves [0,1)^m before reaching `s0`.
fn ray_height(member: &impl Fn(&[f64]) -> bool, w: &[f64], s0: f64) -> Option<f64> {
    let lo_bound = w.iter().map(|x| -x).fold(f64::NEG_INFINITY, f64::max);
    let hi_bound = w.iter().map(|x| 1.0 - x).fold(f64::INFINITY, f64::min);
    let at = |s: f64| w.iter().map(|x| x + s).collect::<Vec<f64>>();
    let s0 = s0.max(lo_bound);
    if s0 >= hi_bound || !member(&at(s0)) {
        return None;
    }
    let (mut lo, mut hi) = (s0, hi_bound);
    // the cube is half-open; stop just short of the face
    let top = hi - BISECT_TOL;
    if top > lo && member(&at(top)) {
        return Some(top);
    }
    while hi - lo > BISECT_TOL {
        let mid = 0.5 * (lo + hi);
        if member(&at(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

/// Compass search over w (Σw = 0) in the directions e_i − e_j, maximizing
/// m·height(w). Returns the best Σv found.
fn ray_compass_search(member: &impl Fn(&[f64]) -> bool, p: &[f64], step: f64) -> f64 {
    let m = p.len();
    let mf = m as f64;
    let mean = p.iter().sum::<f64>() / mf;
    let mut w: Vec<f64> = p.iter().map(|x| x - mean).collect();
    let Some(mut h) = ray_height(member, &w, mean) else { return p.iter().sum() };
    let mut delta = step;
    while delta >= COMPASS_MIN_STEP {
        let mut improved = false;
        for i in 0..m {
            for j in 0..m {
                if i == j {
                    continue;
                }
                let mut cand = w.clone();
                cand[i] += delta;
                cand[j] -= delta;
                // re-enter the region slightly below the current height
                let s0 = h - 2.0 * delta;
                if let Some(hc) = ray_height(member, &cand, s0) {
                    if hc > h {
                        w = cand;
                        h = hc;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            delta *= 0.5;
        }
    }
    mf * h
}

/// ε̃(0..=k_max) under one interval choice.
pub fn interval_upper_table(
    n: usize,
    beta: f64,
    k_max: usize,
    choice: IntervalChoice,
) -> Result<Vec<f64>> {
    (0..=k_max.min(n)).map(|k| Ok(scalar_interval(n, k, beta, choice)?.eps_hi)).collect()
}

// (a ⊗ b)[s] = max_{x+y=s} a[x] + b[y], truncated to the budget.
fn max_plus(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; a.len()];
    for (x, &ax) in a.iter().enumerate() {
        if ax == f64::NEG_INFINITY {
            continue;
        }
        for (y, &by) in b.iter().enumerate().take(a.len() - x) {
            let s = ax + by;
            if s > out[x + y] {
                out[x + y] = s;
            }
        }
    }
    out
}

fn max_plus_pow(base: &[f64], mut e: usize) -> Vec<f64> {
    let mut acc = vec![f64::NEG_INFINITY; base.len()];
    acc[0] = 0.0;
    let mut b = base.to_vec();
    while e > 0 {
        if e & 1 == 1 {
            acc = max_plus(&acc, &b);
        }
        e >>= 1;
        if e > 0 {
            b = max_plus(&b, &b);
        }
    }
    acc
}

/// max over |k| ≤ K* of Σ ε̃_i(k_i), by dynamic programming over the budget.
/// Criteria sharing (N_i, β_i) are combined by max-plus powers.
pub fn apriori_bound_independent(
    per: &[(usize, f64)],
    k_star: usize,
    choice: IntervalChoice,
) -> Result<JointRiskCertificate> {
    let beta = check_split(&per.iter().map(|&(n, b)| (n, 0, b)).collect::<Vec<_>>())?;
    let mut groups: BTreeMap<(usize, u64), usize> = BTreeMap::new();
    for &(n, b) in per {
        *groups.entry((n, b.to_bits())).or_insert(0) += 1;
    }
    let mut acc = vec![f64::NEG_INFINITY; k_star + 1];
    acc[0] = 0.0;
    for (&(n, bits), &count) in &groups {
        let table = interval_upper_table(n, f64::from_bits(bits), k_star, choice)?;
        let mut padded = vec![f64::NEG_INFINITY; k_star + 1];
        padded[..table.len()].copy_from_slice(&table);
        acc = max_plus(&acc, &max_plus_pow(&padded, count));
    }
    let raw = acc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n = MultiIndex::new(per.iter().map(|p| p.0).collect())?;
    Ok(JointRiskCertificate::new(
        raw,
        beta,
        Method::AprioriIndependent,
        JointInputs { k: None, k_star: Some(k_star), n, beta },
    ))
}

/// Zero of the scalar ψ_{K*,N̲,N̲} below t̂, or 0 when K* ≥ N̲.
pub fn apriori_t_bar(n_lower: usize, k_star: usize, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    if n_lower == 0 {
        return domain("N must be positive");
    }
    if k_star >= n_lower {
        return Ok(0.0);
    }
    let nn = MultiIndex::new(vec![n_lower])?;
    let spec = PsiSpec::new(MultiIndex::new(vec![k_star])?, nn.clone(), nn, beta)?;
    Ok(Psi::new(&spec)?.root_pair(DEFAULT_TOLERANCE)?.t_bar)
}

pub fn apriori_bound_diagonal(
    n: &MultiIndex,
    beta: f64,
    k_star: usize,
) -> Result<JointRiskCertificate> {
    let t = apriori_t_bar(n.min_entry(), k_star, beta)?;
    Ok(JointRiskCertificate::new(
        amgm_closed_form(n.m(), t),
        beta,
        Method::AprioriDiagonal,
        JointInputs { k: None, k_star: Some(k_star), n: n.clone(), beta },
    ))
}

/// min over |k| = K* of the diagonal joint bound.
pub fn apriori_bound_bestcase(
    n: &MultiIndex,
    beta: f64,
    k_star: usize,
) -> Result<JointRiskCertificate> {
    let m = n.m();
    if k_star > n.total() {
        return domain("K* exceeds |N|; no complexity vector has that size");
    }
    let (raw, k) = if n.is_homogeneous() {
        let k = MultiIndex::balanced(m, k_star)?;
        (joint_bound_diagonal(n, &k, beta)?.raw_bound, k)
    } else {
        if m > REGION_MAX_DIMS {
            return Err(Error::Dimension { m, limit: REGION_MAX_DIMS });
        }
        let mut best: Option<(f64, MultiIndex)> = None;
        for k in compositions(n, k_star) {
            let r = joint_bound_diagonal(n, &k, beta)?.raw_bound;
            if best.as_ref().is_none_or(|(b, _)| r < *b) {
                best = Some((r, k));
            }
        }
        best.expect("K* ≤ |N| admits a composition")
    };
    Ok(JointRiskCertificate::new(
        raw,
        beta,
        Method::AprioriBestCase,
        JointInputs { k: Some(k), k_star: Some(k_star), n: n.clone(), beta },
    ))
}

/// All k ≤ N with |k| = total.
pub fn compositions(n: &MultiIndex, total: usize) -> Vec<MultiIndex> {
    fn rec(n: &[usize], left: usize, cur: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
        if cur.len() == n.len() - 1 {
            if left <= n[cur.len()] {
                cur.push(left);
                out.push(MultiIndex::new(cur.clone()).expect("non-empty"));
                cur.pop();
            }
            return;
        }
        for x in 0..=left.min(n[cur.len()]) {
            cur.push(x);
            rec(n, left - x, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n.entries(), total, &mut Vec::new(), &mut out);
    out
}

/// min(ln(1/t̄̂), 1), valid for every m.
pub fn uniform_in_m_bound(n_lower: usize, beta: f64, k_star: usize) -> Result<JointRiskCertificate> {
    let t = apriori_t_bar(n_lower, k_star, beta)?;
    Ok(JointRiskCertificate::new(
        -t.ln(),
        beta,
        Method::UniformInM,
        JointInputs { k: None, k_star: Some(k_star), n: MultiIndex::new(vec![n_lower])?, beta },
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizingMode {
    FiniteM,
    UniformInM,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizingRequest {
    pub m: usize,
    pub k_star: usize,
    pub beta: f64,
    pub eps_target: f64,
    pub mode: SizingMode,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SizingResult {
    pub n_lower: usize,
    pub t_bar_hat: f64,
    /// The a-priori bound achieved at `n_lower` (uncapped).
    pub bound: f64,
}

impl SizingRequest {
    fn validate(&self) -> Result<()> {
        if !(self.eps_target > 0.0 && self.eps_target < 1.0) {
            return domain(format!("eps = {} outside (0,1)", self.eps_target));
        }
        if self.mode == SizingMode::FiniteM && self.m == 0 {
            return domain("m must be positive");
        }
        check_beta(self.beta)
    }

    /// The a-priori bound this request targets, evaluated at `n_lower`.
    pub fn bound_at(&self, n_lower: usize) -> Result<(f64, f64)> {
        let t = apriori_t_bar(n_lower, self.k_star, self.beta)?;
        let b = match self.mode {
            SizingMode::FiniteM => amgm_closed_form(self.m, t),
            SizingMode::UniformInM => -t.ln(),
        };
        Ok((b, t))
    }

    pub fn satisfied_at(&self, n_lower: usize) -> Result<bool> {
        Ok(self.bound_at(n_lower)?.0 <= self.eps_target)
    }
}

/// Smallest N̲ > K* meeting the request, by doubling then bisection on N̲.
pub fn size_datasets(req: &SizingRequest) -> Result<SizingResult> {
    req.validate()?;
    let mut lo = req.k_star; // always fails: t̄̂ = 0
    let mut gap = 1usize;
    let mut hi = loop {
        let cand = req.k_star + gap;
        if req.satisfied_at(cand)? {
            break cand;
        }
        lo = cand;
        gap = gap
            .checked_mul(2)
            .filter(|g| *g < 1 << 40)
            .ok_or_else(|| Error::Domain("target unreachable within 2^40 scenarios".into()))?;
    };
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if req.satisfied_at(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let (bound, t_bar_hat) = req.bound_at(hi)?;
    Ok(SizingResult { n_lower: hi, t_bar_hat, bound })
}
