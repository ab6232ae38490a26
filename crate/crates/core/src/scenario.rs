//! Decision problems driven by labeled scenarios, support extraction, and
//! Monte Carlo coverage experiments against the certificates.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator bound of [`ScenarioProblem::sample`].
pub use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::allocations::IntervalChoice;
use crate::certificates::{
    box_region, diagonal_region, joint_bound_diagonal, joint_bound_independent, split_beta,
    RegionCertificate,
};
use crate::error::{domain, Error, Result};
use crate::numerics::{check_beta, MultiIndex};

/// One observed uncertainty realization, tagged with its criterion (1-based).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledScenario {
    pub criterion_id: usize,
    pub payload: Vec<f64>,
}

/// Per-criterion scenario lists D_1, …, D_m. Duplicates are allowed.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ScenarioDatasets {
    lists: Vec<Vec<LabeledScenario>>,
}

impl ScenarioDatasets {
    pub fn new(lists: Vec<Vec<LabeledScenario>>) -> Result<Self> {
        if lists.is_empty() {
            return domain("at least one criterion is required");
        }
        for (i, list) in lists.iter().enumerate() {
            if let Some(s) = list.iter().find(|s| s.criterion_id != i + 1) {
                return domain(format!("scenario labeled {} in list {}", s.criterion_id, i + 1));
            }
        }
        Ok(Self { lists })
    }

    pub fn empty(m: usize) -> Self {
        Self { lists: vec![Vec::new(); m] }
    }

    /// N_i fresh scenarios per criterion.
    pub fn draw<P: ScenarioProblem + ?Sized, R: Rng + ?Sized>(
        problem: &P,
        n: &MultiIndex,
        rng: &mut R,
    ) -> Result<Self> {
        if n.m() != problem.m() {
            return domain(format!("N has {} entries, problem has {} criteria", n.m(), problem.m()));
        }
        let lists = (0..n.m())
            .map(|i| (0..n[i]).map(|_| problem.sample(i + 1, rng)).collect())
            .collect();
        Ok(Self { lists })
    }

    pub fn m(&self) -> usize {
        self.lists.len()
    }

    /// List lengths. Errors only when there are no criteria.
    pub fn n(&self) -> Result<MultiIndex> {
        MultiIndex::new(self.lists.iter().map(Vec::len).collect())
    }

    pub fn lists(&self) -> &[Vec<LabeledScenario>] {
        &self.lists
    }

    pub fn iter(&self) -> impl Iterator<Item = &LabeledScenario> {
        self.lists.iter().flatten()
    }

    pub fn push(&mut self, s: LabeledScenario) -> Result<()> {
        if s.criterion_id == 0 || s.criterion_id > self.m() {
            return domain(format!("criterion id {} outside 1..={}", s.criterion_id, self.m()));
        }
        self.lists[s.criterion_id - 1].push(s);
        Ok(())
    }

    /// Copy with scenario `j` of criterion `i` (both 0-based) removed.
    pub fn without(&self, i: usize, j: usize) -> Self {
        let mut out = self.clone();
        out.lists[i].remove(j);
        out
    }

    /// Copy keeping only the listed positions of each criterion.
    pub fn subset(&self, keep: &[Vec<usize>]) -> Self {
        let lists = self
            .lists
            .iter()
            .zip(keep)
            .map(|(l, idx)| idx.iter().map(|&j| l[j].clone()).collect())
            .collect();
        Self { lists }
    }

    pub fn shuffled<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let mut out = self.clone();
        for l in &mut out.lists {
            l.shuffle(rng);
        }
        out
    }

    /// Rows `criterion_id,payload...`; payload width may vary by criterion.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let width = self.iter().map(|s| s.payload.len()).max().unwrap_or(0);
        let mut wr = csv::WriterBuilder::new().flexible(true).from_writer(w);
        let mut header = vec!["criterion_id".to_string()];
        header.extend((1..=width).map(|p| format!("payload_{p}")));
        let io = |e: csv::Error| Error::Unsupported(format!("csv write failed: {e}"));
        wr.write_record(&header).map_err(io)?;
        for s in self.iter() {
            let mut rec = vec![s.criterion_id.to_string()];
            rec.extend(s.payload.iter().map(|x| format!("{x:?}")));
            wr.write_record(&rec).map_err(io)?;
        }
        wr.flush().map_err(|e| Error::Unsupported(format!("csv write failed: {e}")))
    }
}

/// Estimated or exact individual and joint risks of a decision.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RiskEstimate {
    pub individual: Vec<f64>,
    pub joint: f64,
    /// Standard errors when the oracle is itself a sampling estimate.
    pub std_error: Option<Vec<f64>>,
    pub joint_std_error: Option<f64>,
}

impl RiskEstimate {
    /// Joint risk of independent per-criterion components: 1 − Π(1 − V_i).
    pub fn from_independent(individual: Vec<f64>, std_error: Option<Vec<f64>>) -> Self {
        let keep: f64 = individual.iter().map(|v| 1.0 - v).product();
        let joint_std_error = std_error.as_ref().map(|se| {
            let var: f64 = (0..individual.len())
                .map(|i| {
                    let others: f64 = individual
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != i)
                        .map(|(_, v)| 1.0 - v)
                        .product();
                    (others * se[i]).powi(2)
                })
                .sum();
            var.sqrt()
        });
        Self { individual, joint: 1.0 - keep, std_error, joint_std_error }
    }
}

/// A decision map fed by labeled scenarios, with an oracle for true risks.
pub trait ScenarioProblem {
    type Decision: Clone + Debug;

    fn name(&self) -> &'static str;
    fn m(&self) -> usize;
    fn sample<R: Rng + ?Sized>(&self, criterion_id: usize, rng: &mut R) -> LabeledScenario;
    fn solve(&self, data: &ScenarioDatasets) -> Result<Self::Decision>;
    fn same_decision(&self, a: &Self::Decision, b: &Self::Decision) -> bool;
    /// Whether `z` satisfies the criterion of `s` under its realization.
    fn is_appropriate(&self, z: &Self::Decision, s: &LabeledScenario) -> bool;
    fn true_risks(&self, z: &Self::Decision) -> Result<RiskEstimate>;

    /// Positions (criterion, index) that may be support scenarios. Every
    /// other scenario must be removable without changing the decision.
    fn support_candidates(&self, data: &ScenarioDatasets, _z: &Self::Decision) -> Vec<(usize, usize)> {
        data.lists()
            .iter()
            .enumerate()
            .flat_map(|(i, l)| (0..l.len()).map(move |j| (i, j)))
            .collect()
    }
}

pub fn solve<P: ScenarioProblem>(problem: &P, data: &ScenarioDatasets) -> Result<P::Decision> {
    problem.solve(data)
}

#[derive(Clone, Debug)]
pub struct DecisionOutcome<D> {
    pub decision: D,
    /// Positions of support scenarios within each criterion's list.
    pub support: Vec<Vec<usize>>,
    pub complexity: MultiIndex,
    /// Re-solving on the support lists alone did not reproduce the decision.
    pub degenerate: bool,
    pub warnings: Vec<String>,
}

/// Leave-one-out support detection followed by a re-solve on the support.
pub fn extract_support<P: ScenarioProblem>(
    problem: &P,
    data: &ScenarioDatasets,
) -> Result<DecisionOutcome<P::Decision>> {
    let z = problem.solve(data)?;
    let mut support = vec![Vec::new(); data.m()];
    for (i, j) in problem.support_candidates(data, &z) {
        let changed = match problem.solve(&data.without(i, j)) {
            Ok(z2) => !problem.same_decision(&z, &z2),
            Err(_) => true,
        };
        if changed {
            support[i].push(j);
        }
    }
    for s in &mut support {
        s.sort_unstable();
    }
    let complexity = MultiIndex::new(support.iter().map(Vec::len).collect())?;
    let mut warnings = Vec::new();
    let degenerate = match problem.solve(&data.subset(&support)) {
        Ok(zs) => !problem.same_decision(&z, &zs),
        Err(e) => {
            warnings.push(format!("re-solve on support failed: {e}"));
            true
        }
    };
    if degenerate {
        warnings.push(format!(
            "degenerate instance: support lists of complexity ({complexity}) do not reproduce the decision"
        ));
    }
    Ok(DecisionOutcome { decision: z, support, complexity, degenerate, warnings })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DecisionMapReport {
    pub permutation_checks: usize,
    pub confirmation_checks: usize,
    pub contradiction_checks: usize,
    pub counterexamples: Vec<String>,
}

impl DecisionMapReport {
    pub fn passed(&self) -> bool {
        self.counterexamples.is_empty()
    }
}

/// Randomized checks of permutation invariance, stability under confirming
/// scenarios and responsiveness to contradicting ones. `extra` supplies
/// the candidate scenarios to append; each is classified against the
/// current decision.
pub fn check_decision_map<P: ScenarioProblem, R: Rng + ?Sized>(
    problem: &P,
    data: &ScenarioDatasets,
    extra: &ScenarioDatasets,
    rng: &mut R,
    permutations: usize,
) -> Result<DecisionMapReport> {
    let z = problem.solve(data)?;
    let mut rep = DecisionMapReport::default();
    for p in 0..permutations {
        rep.permutation_checks += 1;
        let z2 = problem.solve(&data.shuffled(rng))?;
        if !problem.same_decision(&z, &z2) {
            rep.counterexamples.push(format!("permutation {p}: {z:?} became {z2:?}"));
        }
    }
    let mut confirming = data.clone();
    for s in extra.iter() {
        let mut d = data.clone();
        d.push(s.clone())?;
        let z2 = problem.solve(&d);
        if problem.is_appropriate(&z, s) {
            rep.confirmation_checks += 1;
            confirming.push(s.clone())?;
            if !z2.as_ref().is_ok_and(|z2| problem.same_decision(&z, z2)) {
                rep.counterexamples.push(format!("confirming scenario {s:?} changed {z:?} to {z2:?}"));
            }
        } else {
            rep.contradiction_checks += 1;
            if z2.as_ref().is_ok_and(|z2| problem.same_decision(&z, z2)) {
                rep.counterexamples.push(format!("contradicting scenario {s:?} left {z:?} unchanged"));
            }
        }
    }
    if rep.confirmation_checks > 1 {
        let z2 = problem.solve(&confirming);
        if !z2.as_ref().is_ok_and(|z2| problem.same_decision(&z, z2)) {
            rep.counterexamples.push(format!("all confirming scenarios together changed {z:?} to {z2:?}"));
        }
    }
    Ok(rep)
}

/// z = max over every scenario of f_i(δ), with f_i uniform on [0, c_i] and
/// independent components per criterion.
#[derive(Clone, Debug, PartialEq)]
pub struct MaxOfSamples {
    pub scales: Vec<f64>,
}

impl MaxOfSamples {
    pub fn new(scales: Vec<f64>) -> Result<Self> {
        if scales.is_empty() || scales.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return domain("scales must be positive and finite, at least one");
        }
        Ok(Self { scales })
    }
}

impl ScenarioProblem for MaxOfSamples {
    type Decision = f64;

    fn name(&self) -> &'static str {
        "max-of-samples"
    }

    fn m(&self) -> usize {
        self.scales.len()
    }

    fn sample<R: Rng + ?Sized>(&self, criterion_id: usize, rng: &mut R) -> LabeledScenario {
        let c = self.scales[criterion_id - 1];
        LabeledScenario { criterion_id, payload: vec![c * rng.random::<f64>()] }
    }

    /// The empty dataset decides −∞.
    fn solve(&self, data: &ScenarioDatasets) -> Result<f64> {
        Ok(data.iter().map(|s| s.payload[0]).fold(f64::NEG_INFINITY, f64::max))
    }

    fn same_decision(&self, a: &f64, b: &f64) -> bool {
        a == b
    }

    fn is_appropriate(&self, z: &f64, s: &LabeledScenario) -> bool {
        s.payload[0] <= *z
    }

    fn true_risks(&self, z: &f64) -> Result<RiskEstimate> {
        let v = self.scales.iter().map(|c| (1.0 - z / c).clamp(0.0, 1.0)).collect();
        Ok(RiskEstimate::from_independent(v, None))
    }
}

/// Decision-equality tolerance for [`RobustLp2d`], in max-norm.
pub const LP_DECISION_TOL: f64 = 1e-9;
const LP_FEAS_TOL: f64 = 1e-9;
const LP_ACTIVE_TOL: f64 = 1e-7;

/// maximize z_1 + z_2 subject to a(δ)·z ≤ 1 for every scenario and
/// 0 ≤ z ≤ `bound`. Criterion i draws a uniformly from the rectangle
/// `coeff_boxes[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RobustLp2d {
    pub coeff_boxes: Vec<[(f64, f64); 2]>,
    pub bound: f64,
    pub qmc_points: usize,
    pub qmc_shifts: usize,
    pub qmc_seed: u64,
}

impl RobustLp2d {
    pub fn new(coeff_boxes: Vec<[(f64, f64); 2]>) -> Result<Self> {
        if coeff_boxes.is_empty() {
            return domain("at least one criterion is required");
        }
        for b in &coeff_boxes {
            for &(lo, hi) in b {
                if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo < hi) {
                    return domain("coefficient ranges must satisfy 0 <= lo < hi");
                }
            }
        }
        Ok(Self { coeff_boxes, bound: 10.0, qmc_points: 1_000_000, qmc_shifts: 16, qmc_seed: 0x5eed })
    }

    /// Two criteria, each mostly constraining one coordinate.
    pub fn standard() -> Self {
        Self::new(vec![[(1.0, 2.0), (0.1, 0.6)], [(0.1, 0.6), (1.0, 2.0)]]).expect("valid")
    }

    fn constraints(&self, data: &ScenarioDatasets) -> Vec<[f64; 3]> {
        let b = self.bound;
        let mut c: Vec<[f64; 3]> =
            data.iter().map(|s| [s.payload[0], s.payload[1], 1.0]).collect();
        c.extend([[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [1.0, 0.0, b], [0.0, 1.0, b]]);
        c
    }

    /// QMC estimate of V_i using an independent stream of random shifts.
    pub fn true_risks_stream(&self, z: &[f64; 2], stream: u64) -> Result<RiskEstimate> {
        if self.qmc_shifts < 2 || self.qmc_points < self.qmc_shifts {
            return domain("QMC needs at least two shifts and one point per shift");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.qmc_seed);
        rng.set_stream(stream);
        let per_shift = self.qmc_points / self.qmc_shifts;
        let shifts: Vec<[f64; 2]> =
            (0..self.qmc_shifts).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        let mut v = Vec::with_capacity(self.m());
        let mut se = Vec::with_capacity(self.m());
        for bx in &self.coeff_boxes {
            let est: Vec<f64> =
                shifts.iter().map(|s| r2_violation_fraction(bx, z, *s, per_shift)).collect();
            let k = est.len() as f64;
            let mean = est.iter().sum::<f64>() / k;
            let var = est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (k - 1.0);
            v.push(mean);
            se.push((var / k).sqrt());
        }
        Ok(RiskEstimate::from_independent(v, Some(se)))
    }
}

// Additive recurrence on the plastic number (the R2 sequence).
const R2_ALPHA: [f64; 2] = [0.754_877_666_246_692_8, 0.569_840_290_998_053_3];

fn r2_violation_fraction(bx: &[(f64, f64); 2], z: &[f64; 2], shift: [f64; 2], points: usize) -> f64 {
    let (w0, w1) = (bx[0].1 - bx[0].0, bx[1].1 - bx[1].0);
    let (mut u0, mut u1) = (shift[0], shift[1]);
    let mut hits = 0usize;
    for _ in 0..points {
        u0 += R2_ALPHA[0];
        if u0 >= 1.0 {
            u0 -= 1.0;
        }
        u1 += R2_ALPHA[1];
        if u1 >= 1.0 {
            u1 -= 1.0;
        }
        let a0 = bx[0].0 + w0 * u0;
        let a1 = bx[1].0 + w1 * u1;
        hits += usize::from(a0 * z[0] + a1 * z[1] > 1.0);
    }
    hits as f64 / points as f64
}

/// All pairwise intersections of constraint lines, best objective first,
/// ties broken lexicographically so the choice does not depend on order.
pub fn lp_vertex_solve(cons: &[[f64; 3]]) -> Result<[f64; 2]> {
    let mut verts: Vec<(f64, [f64; 2])> = Vec::with_capacity(cons.len() * cons.len() / 2);
    for (p, cp) in cons.iter().enumerate() {
        for cq in &cons[p + 1..] {
            let det = cp[0] * cq[1] - cp[1] * cq[0];
            let scale = (cp[0].abs() + cp[1].abs()) * (cq[0].abs() + cq[1].abs());
            if det.abs() <= 1e-14 * scale {
                continue;
            }
            let z = [(cp[2] * cq[1] - cp[1] * cq[2]) / det, (cp[0] * cq[2] - cp[2] * cq[0]) / det];
            verts.push((-(z[0] + z[1]), z));
        }
    }
    verts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1[0].total_cmp(&b.1[0])).then(a.1[1].total_cmp(&b.1[1])));
    verts
        .into_iter()
        .find(|(_, z)| {
            cons.iter().all(|c| c[0] * z[0] + c[1] * z[1] <= c[2] + LP_FEAS_TOL * (1.0 + c[2].abs()))
        })
        .map(|(_, z)| z)
        .ok_or_else(|| Error::Infeasible("no feasible vertex".into()))
}

impl ScenarioProblem for RobustLp2d {
    type Decision = [f64; 2];

    fn name(&self) -> &'static str {
        "robust-lp2d"
    }

    fn m(&self) -> usize {
        self.coeff_boxes.len()
    }

    fn sample<R: Rng + ?Sized>(&self, criterion_id: usize, rng: &mut R) -> LabeledScenario {
        let bx = &self.coeff_boxes[criterion_id - 1];
        let payload = bx.iter().map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>()).collect();
        LabeledScenario { criterion_id, payload }
    }

    fn solve(&self, data: &ScenarioDatasets) -> Result<[f64; 2]> {
        if data.iter().any(|s| s.payload.len() != 2) {
            return domain("robust-lp2d scenarios carry two coefficients");
        }
        lp_vertex_solve(&self.constraints(data))
    }

    fn same_decision(&self, a: &[f64; 2], b: &[f64; 2]) -> bool {
        (a[0] - b[0]).abs().max((a[1] - b[1]).abs()) <= LP_DECISION_TOL
    }

    fn is_appropriate(&self, z: &[f64; 2], s: &LabeledScenario) -> bool {
        s.payload[0] * z[0] + s.payload[1] * z[1] <= 1.0
    }

    fn true_risks(&self, z: &[f64; 2]) -> Result<RiskEstimate> {
        self.true_risks_stream(z, 0)
    }

    /// Only constraints active at the optimum can be support constraints of
    /// a linear program.
    fn support_candidates(&self, data: &ScenarioDatasets, z: &[f64; 2]) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, l) in data.lists().iter().enumerate() {
            for (j, s) in l.iter().enumerate() {
                if (s.payload[0] * z[0] + s.payload[1] * z[1] - 1.0).abs() <= LP_ACTIVE_TOL {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    /// V(z*) ∈ diagonal band at s*, with H = N.
    DiagonalBand,
    /// V(z*) ∈ product of per-criterion intervals, β_i = β/m.
    IndependentBox,
    /// Joint risk below the diagonal closed form.
    JointDiagonal,
    /// Joint risk below the sum of per-criterion bounds.
    JointIndependent,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoverageReport {
    pub problem: String,
    pub certificate: CertificateKind,
    pub seed: u64,
    pub n: MultiIndex,
    pub beta: f64,
    pub requested_trials: usize,
    /// Trials that entered the coverage count.
    pub trials: usize,
    pub hits: usize,
    pub failed_trials: usize,
    pub excluded_degenerate: usize,
    pub empirical_coverage: f64,
    pub target: f64,
    /// target − 3·sqrt(target(1−target)/trials)
    pub acceptance_threshold: f64,
    pub wilson_95: (f64, f64),
    pub passed: bool,
    pub complexity_histogram: BTreeMap<MultiIndex, usize>,
    pub mean_true_risks: Vec<f64>,
    pub mean_joint_risk: f64,
    /// Mean of (joint bound at s*) − (true joint risk).
    pub mean_bound_gap: f64,
}

/// Wilson score interval for `hits` out of `n` at normal quantile `z`.
pub fn wilson_interval(hits: usize, n: usize, z: f64) -> (f64, f64) {
    let nf = n as f64;
    let p = hits as f64 / nf;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * nf)) / (1.0 + z2 / nf);
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / (1.0 + z2 / nf);
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

struct TrialCert {
    region: Option<RegionCertificate>,
    joint: f64,
}

fn build_cert(kind: CertificateKind, n: &MultiIndex, k: &MultiIndex, beta: f64) -> Result<TrialCert> {
    let per = split_beta(n, k, beta)?;
    Ok(match kind {
        CertificateKind::DiagonalBand => TrialCert {
            region: Some(diagonal_region(n, n, k, beta)?),
            joint: joint_bound_diagonal(n, k, beta)?.bound,
        },
        CertificateKind::JointDiagonal => {
            TrialCert { region: None, joint: joint_bound_diagonal(n, k, beta)?.bound }
        }
        CertificateKind::IndependentBox => TrialCert {
            region: Some(box_region(&per, IntervalChoice::UpperOnlyHN)?),
            joint: joint_bound_independent(&per, IntervalChoice::UpperOnlyHN)?.bound,
        },
        CertificateKind::JointIndependent => TrialCert {
            region: None,
            joint: joint_bound_independent(&per, IntervalChoice::UpperOnlyHN)?.bound,
        },
    })
}

/// The datasets drawn in trial `trial` of a coverage experiment.
pub fn trial_datasets<P: ScenarioProblem>(
    problem: &P,
    n: &MultiIndex,
    seed: u64,
    trial: usize,
) -> Result<ScenarioDatasets> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    ScenarioDatasets::draw(problem, n, &mut rng)
}

/// Repeated draw–solve–certify–check runs. Trial `t` uses stream `t` of a
/// ChaCha8 generator seeded with `seed`, so results do not depend on the
/// order trials are executed in.
pub fn coverage_experiment<P: ScenarioProblem>(
    problem: &P,
    n: &MultiIndex,
    beta: f64,
    trials: usize,
    kind: CertificateKind,
    seed: u64,
) -> Result<CoverageReport> {
    check_beta(beta)?;
    if trials == 0 {
        return domain("trials must be at least 1");
    }
    if n.m() != problem.m() {
        return domain(format!("N has {} entries, problem has {} criteria", n.m(), problem.m()));
    }
    let mut certs: BTreeMap<MultiIndex, TrialCert> = BTreeMap::new();
    let mut hist = BTreeMap::new();
    let (mut hits, mut counted, mut failed, mut degenerate) = (0, 0, 0, 0);
    let mut risk_sum = vec![0.0; n.m()];
    let (mut joint_sum, mut gap_sum) = (0.0, 0.0);

    for t in 0..trials {
        let data = trial_datasets(problem, n, seed, t)?;
        let out = match extract_support(problem, &data) {
            Ok(o) => o,
            Err(_) => {
                failed += 1;
                continue;
            }
        };
        if out.degenerate {
            degenerate += 1;
            continue;
        }
        let risks = match problem.true_risks(&out.decision) {
            Ok(r) => r,
            Err(_) => {
                failed += 1;
                continue;
            }
        };
        let k = out.complexity;
        if !certs.contains_key(&k) {
            certs.insert(k.clone(), build_cert(kind, n, &k, beta)?);
        }
        let cert = &certs[&k];
        let hit = match &cert.region {
            Some(r) => r.contains(&risks.individual)?,
            None => risks.joint <= cert.joint,
        };
        counted += 1;
        hits += usize::from(hit);
        *hist.entry(k).or_insert(0) += 1;
        for (s, v) in risk_sum.iter_mut().zip(&risks.individual) {
            *s += v;
        }
        joint_sum += risks.joint;
        gap_sum += cert.joint - risks.joint;
    }
    if counted == 0 {
        return domain("no trial produced a usable outcome");
    }
    let c = counted as f64;
    let target = 1.0 - beta;
    let threshold = target - 3.0 * (target * (1.0 - target) / c).sqrt();
    let coverage = hits as f64 / c;
    Ok(CoverageReport {
        problem: problem.name().to_string(),
        certificate: kind,
        seed,
        n: n.clone(),
        beta,
        requested_trials: trials,
        trials: counted,
        hits,
        failed_trials: failed,
        excluded_degenerate: degenerate,
        empirical_coverage: coverage,
        target,
        acceptance_threshold: threshold,
        wilson_95: wilson_interval(hits, counted, 1.959_963_984_540_054),
        passed: coverage >= threshold,
        complexity_histogram: hist,
        mean_true_risks: risk_sum.iter().map(|s| s / c).collect(),
        mean_joint_risk: joint_sum / c,
        mean_bound_gap: gap_sum / c,
    })
}
