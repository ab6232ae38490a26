//! Subcommand implementations. Each returns the process exit code or an
//! error that `run` reports with exit code 2.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use scencert::certificates::{
    allocation_region, apriori_bound_bestcase, apriori_bound_diagonal, apriori_bound_independent,
    box_region, diagonal_region, joint_bound_from_band, joint_bound_independent,
    joint_bound_region_max, size_datasets, split_beta, uniform_in_m_bound, SizingMode,
    SizingRequest, REGION_MAX_DIMS,
};
use scencert::export::{coverage_json, fmt_real, joint_json, region_json, sizing_json, write_region_grid};
use scencert::scenario::{
    coverage_experiment, trial_datasets, CertificateKind, MaxOfSamples, RobustLp2d, ScenarioProblem,
};
use scencert::{AllocationSpec, JointRiskCertificate, MultiIndex, Scheme, IntervalChoice};

use crate::{
    AprioriArgs, CertArg, CertifyArgs, Command, Dims, Format, OutArgs, ProblemArg, RegionGridArgs,
    SchemeArg, SimulateArgs, SizeArgs, Table1Args, OUT_DIR_ENV,
};

#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Core(scencert::Error),
    Io(std::io::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Invalid(m) => f.write_str(m),
            Self::Core(e) => write!(f, "{e}"),
            Self::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<scencert::Error> for CliError {
    fn from(e: scencert::Error) -> Self {
        Self::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e)
    }
}

type Res<T> = std::result::Result<T, CliError>;

fn invalid<T>(msg: impl Into<String>) -> Res<T> {
    Err(CliError::Invalid(msg.into()))
}

pub fn dispatch(cmd: Command, stdout: &mut dyn Write) -> Res<i32> {
    match cmd {
        Command::Certify(a) => certify(a, stdout),
        Command::RegionGrid(a) => region_grid(a, stdout),
        Command::Apriori(a) => apriori(a, stdout),
        Command::Table1(a) => table1(a, stdout),
        Command::Size(a) => size(a, stdout),
        Command::Simulate(a) => simulate(a, stdout),
    }
}

/// Parses a comma list, broadcasting a single value to `m` entries.
fn parse_index(flag: &str, s: &str, m: Option<usize>) -> Res<MultiIndex> {
    let idx: MultiIndex = s.parse().map_err(|e| CliError::Invalid(format!("--{flag}: {e}")))?;
    match m {
        Some(0) => invalid("--m must be positive"),
        Some(m) if idx.m() == 1 => Ok(MultiIndex::filled(m, idx[0])?),
        Some(m) if idx.m() != m => invalid(format!("--{flag} has {} entries but --m is {m}", idx.m())),
        _ => Ok(idx),
    }
}

fn check_beta(beta: f64) -> Res<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        invalid(format!("--beta = {beta} must lie in (0,1)"))
    }
}

/// (N, k, H) with H defaulting to N.
fn indices(dims: &Dims, k: &str, h: Option<&str>) -> Res<(MultiIndex, MultiIndex, MultiIndex)> {
    let n = parse_index("n", &dims.n, dims.m)?;
    let m = Some(dims.m.unwrap_or(n.m()));
    let k = parse_index("k", k, m)?;
    let h = match h {
        Some(h) => parse_index("h", h, m)?,
        None => n.clone(),
    };
    if k.m() != n.m() || h.m() != n.m() {
        return invalid(format!("--n, --k and --h must have the same length (got {}, {}, {})", n.m(), k.m(), h.m()));
    }
    Ok((n, k, h))
}

pub(crate) fn resolve_out(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

/// Sends `write` to `--out` if given, else to stdout.
fn emit(out: &OutArgs, stdout: &mut dyn Write, write: impl FnOnce(&mut dyn Write) -> Res<()>) -> Res<()> {
    match &out.out {
        Some(p) => {
            let mut f = BufWriter::new(File::create(resolve_out(p))?);
            write(&mut f)?;
            f.flush()?;
        }
        None => write(stdout)?,
    }
    Ok(())
}

fn emit_json(out: &OutArgs, stdout: &mut dyn Write, v: &Value) -> Res<()> {
    emit(out, stdout, |w| {
        serde_json::to_writer_pretty(&mut *w, v).map_err(|e| CliError::Io(e.into()))?;
        writeln!(w)?;
        Ok(())
    })
}

fn named_scheme(s: SchemeArg) -> Option<Scheme> {
    match s {
        SchemeArg::Uniform => Some(Scheme::Uniform),
        SchemeArg::Axial => Some(Scheme::Axial),
        SchemeArg::Diagonal => Some(Scheme::Diagonal),
        SchemeArg::Independent => None,
    }
}

fn certify(a: CertifyArgs, stdout: &mut dyn Write) -> Res<i32> {
    check_beta(a.beta)?;
    let (n, k, h) = indices(&a.dims, &a.k, a.h.as_deref())?;
    let (region, joint) = match named_scheme(a.scheme) {
        None => {
            if a.h.is_some() {
                return invalid("--h does not apply to the independent scheme; use --choice");
            }
            let per = split_beta(&n, &k, a.beta)?;
            let choice: IntervalChoice = a.choice.into();
            (box_region(&per, choice)?, Some(joint_bound_independent(&per, choice)?))
        }
        Some(Scheme::Diagonal) => {
            let r = diagonal_region(&n, &h, &k, a.beta)?;
            let j = joint_bound_from_band(&r)?;
            (r, Some(j))
        }
        Some(s) => {
            let alloc = AllocationSpec::named(s, n.clone(), h, a.beta)?;
            let r = allocation_region(&alloc, &k)?;
            let j = if n.m() <= REGION_MAX_DIMS {
                Some(joint_bound_region_max(&r, REGION_MAX_DIMS, a.resolution)?)
            } else {
                None
            };
            (r, j)
        }
    };
    let v = json!({ "region": region_json(&region), "joint": joint.as_ref().map(joint_json) });
    emit_json(&a.out, stdout, &v)?;
    Ok(0)
}

fn region_grid(a: RegionGridArgs, stdout: &mut dyn Write) -> Res<i32> {
    check_beta(a.beta)?;
    let (n, k, h) = indices(&a.dims, &a.k, a.h.as_deref())?;
    if n.m() != 2 {
        return invalid(format!("region grids need m = 2, got m = {}", n.m()));
    }
    let Some(scheme) = named_scheme(a.scheme) else {
        return invalid("region-grid needs an allocation scheme; the box appears as the member_box column");
    };
    let alloc = AllocationSpec::named(scheme, n.clone(), h, a.beta)?;
    let overlay = if a.no_box {
        None
    } else {
        Some(box_region(&split_beta(&n, &k, a.beta)?, IntervalChoice::UpperOnlyHN)?)
    };
    emit(&a.out, stdout, |w| Ok(write_region_grid(w, &alloc, &k, overlay.as_ref(), a.resolution)?))?;
    Ok(0)
}

/// `a..b` (inclusive), `a..b:step`, or `a,b,c`.
fn parse_m_range(s: &str) -> Res<Vec<usize>> {
    let num = |t: &str| {
        t.trim().parse::<usize>().map_err(|_| CliError::Invalid(format!("--m-range: not an integer: {t:?}")))
    };
    let ms: Vec<usize> = if let Some((a, rest)) = s.split_once("..") {
        let (b, step) = match rest.split_once(':') {
            Some((b, st)) => (num(b)?, num(st)?),
            None => (num(rest)?, 1),
        };
        let a = num(a)?;
        if step == 0 || a > b {
            return invalid("--m-range: need a <= b and a positive step");
        }
        (a..=b).step_by(step).collect()
    } else {
        s.split(',').map(num).collect::<Res<_>>()?
    };
    if ms.is_empty() || ms.contains(&0) {
        return invalid("--m-range: values of m must be positive");
    }
    Ok(ms)
}

struct AprioriRow {
    m: usize,
    independent: JointRiskCertificate,
    diagonal: JointRiskCertificate,
    bestcase: Option<JointRiskCertificate>,
}

fn apriori(a: AprioriArgs, stdout: &mut dyn Write) -> Res<i32> {
    check_beta(a.beta)?;
    if a.n_lower == 0 {
        return invalid("--n-lower must be positive");
    }
    let ms = parse_m_range(&a.m_range)?;
    let uniform = uniform_in_m_bound(a.n_lower, a.beta, a.kstar)?;
    let mut rows = Vec::with_capacity(ms.len());
    for m in ms {
        let n = MultiIndex::filled(m, a.n_lower)?;
        let per = vec![(a.n_lower, a.beta / m as f64); m];
        rows.push(AprioriRow {
            m,
            independent: apriori_bound_independent(&per, a.kstar, IntervalChoice::UpperOnlyHN)?,
            diagonal: apriori_bound_diagonal(&n, a.beta, a.kstar)?,
            bestcase: apriori_bound_bestcase(&n, a.beta, a.kstar).ok(),
        });
    }
    match a.format {
        Format::Json => {
            let pair = |c: &JointRiskCertificate| json!({ "raw": fmt_real(c.raw_bound), "capped": fmt_real(c.bound) });
            let v = json!({
                "type": "apriori_table",
                "n_lower": a.n_lower,
                "beta": fmt_real(a.beta),
                "k_star": a.kstar,
                "uniform": pair(&uniform),
                "rows": rows.iter().map(|r| json!({
                    "m": r.m,
                    "independent": pair(&r.independent),
                    "diagonal": pair(&r.diagonal),
                    "bestcase": r.bestcase.as_ref().map(pair),
                    "uniform": pair(&uniform),
                })).collect::<Vec<_>>(),
            });
            emit_json(&a.out, stdout, &v)?;
        }
        Format::Csv => emit(&a.out, stdout, |w| {
            writeln!(
                w,
                "m,independent_raw,independent,diagonal_raw,diagonal,bestcase_raw,bestcase,uniform_raw,uniform"
            )?;
            for r in &rows {
                let (br, bc) = match &r.bestcase {
                    Some(c) => (fmt_real(c.raw_bound), fmt_real(c.bound)),
                    None => (String::new(), String::new()),
                };
                writeln!(
                    w,
                    "{},{},{},{},{},{br},{bc},{},{}",
                    r.m,
                    fmt_real(r.independent.raw_bound),
                    fmt_real(r.independent.bound),
                    fmt_real(r.diagonal.raw_bound),
                    fmt_real(r.diagonal.bound),
                    fmt_real(uniform.raw_bound),
                    fmt_real(uniform.bound),
                )?;
            }
            Ok(())
        })?,
    }
    Ok(0)
}

/// (m, N, k) of the reference comparison rows; N and k are broadcast.
pub const TABLE1_ROWS: [(usize, usize, usize); 6] =
    [(10, 1500, 4), (40, 1500, 1), (25, 1500, 2), (25, 2000, 2), (60, 1500, 1), (100, 3000, 1)];

pub struct Table1Row {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub diagonal: JointRiskCertificate,
    pub independent: JointRiskCertificate,
}

pub fn table1_rows(beta: f64) -> Res<Vec<Table1Row>> {
    check_beta(beta)?;
    TABLE1_ROWS
        .iter()
        .map(|&(m, n, k)| {
            let nn = MultiIndex::filled(m, n)?;
            let kk = MultiIndex::filled(m, k)?;
            let band = diagonal_region(&nn, &nn, &kk, beta)?;
            let per = split_beta(&nn, &kk, beta)?;
            Ok(Table1Row {
                m,
                n,
                k,
                diagonal: joint_bound_from_band(&band)?,
                independent: joint_bound_independent(&per, IntervalChoice::UpperOnlyHN)?,
            })
        })
        .collect()
}

fn table1(a: Table1Args, stdout: &mut dyn Write) -> Res<i32> {
    let rows = table1_rows(a.beta)?;
    match a.format {
        Format::Json => {
            let v = json!({
                "type": "table1",
                "beta": fmt_real(a.beta),
                "rows": rows.iter().map(|r| json!({
                    "m": r.m,
                    "n": r.n,
                    "k": r.k,
                    "diagonal": { "raw": fmt_real(r.diagonal.raw_bound), "capped": fmt_real(r.diagonal.bound) },
                    "independent": { "raw": fmt_real(r.independent.raw_bound), "capped": fmt_real(r.independent.bound) },
                })).collect::<Vec<_>>(),
            });
            emit_json(&a.out, stdout, &v)?;
        }
        Format::Csv => emit(&a.out, stdout, |w| {
            writeln!(w, "m,n,k,diagonal_raw,diagonal,independent_raw,independent")?;
            for r in &rows {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    r.m,
                    r.n,
                    r.k,
                    fmt_real(r.diagonal.raw_bound),
                    fmt_real(r.diagonal.bound),
                    fmt_real(r.independent.raw_bound),
                    fmt_real(r.independent.bound),
                )?;
            }
            Ok(())
        })?,
    }
    Ok(0)
}

fn size(a: SizeArgs, stdout: &mut dyn Write) -> Res<i32> {
    check_beta(a.beta)?;
    if !(a.eps > 0.0 && a.eps < 1.0) {
        return invalid(format!("--eps = {} must lie in (0,1)", a.eps));
    }
    let (mode, m) = match a.m {
        _ if a.uniform => (SizingMode::UniformInM, None),
        Some(0) => return invalid("--m must be positive"),
        Some(m) => (SizingMode::FiniteM, Some(m)),
        None => return invalid("either --m or --uniform is required"),
    };
    let req = SizingRequest { m: m.unwrap_or(1), k_star: a.kstar, beta: a.beta, eps_target: a.eps, mode };
    let res = size_datasets(&req)?;
    let mut v = sizing_json(&res);
    let obj = v.as_object_mut().expect("sizing result is an object");
    obj.insert("mode".into(), json!(mode));
    obj.insert("m".into(), json!(m));
    obj.insert("k_star".into(), json!(a.kstar));
    obj.insert("beta".into(), json!(fmt_real(a.beta)));
    obj.insert("eps_target".into(), json!(fmt_real(a.eps)));
    emit_json(&a.out, stdout, &v)?;
    Ok(0)
}

fn kind_of(c: CertArg) -> CertificateKind {
    match c {
        CertArg::Box => CertificateKind::IndependentBox,
        CertArg::Diagonal => CertificateKind::DiagonalBand,
        CertArg::JointDiagonal => CertificateKind::JointDiagonal,
        CertArg::JointIndependent => CertificateKind::JointIndependent,
    }
}

fn run_simulation<P: ScenarioProblem>(a: &SimulateArgs, problem: &P, n: &MultiIndex, stdout: &mut dyn Write) -> Res<i32> {
    if let Some(p) = &a.dump_datasets {
        let data = trial_datasets(problem, n, a.seed, 0)?;
        let mut f = BufWriter::new(File::create(resolve_out(p))?);
        data.write_csv(&mut f)?;
        f.flush()?;
    }
    let report = coverage_experiment(problem, n, a.beta, a.trials, kind_of(a.certificate), a.seed)?;
    emit_json(&a.out, stdout, &coverage_json(&report))?;
    Ok(if report.passed { 0 } else { 1 })
}

fn simulate(a: SimulateArgs, stdout: &mut dyn Write) -> Res<i32> {
    check_beta(a.beta)?;
    if a.trials == 0 {
        return invalid("--trials must be at least 1");
    }
    let n = parse_index("n", &a.dims.n, a.dims.m)?;
    match a.problem {
        ProblemArg::MaxOfSamples => {
            if a.qmc_points.is_some() {
                return invalid("--qmc-points applies to robust-lp2d only");
            }
            let p = MaxOfSamples::new(vec![1.0; n.m()])?;
            run_simulation(&a, &p, &n, stdout)
        }
        ProblemArg::RobustLp2d => {
            if n.m() != 2 {
                return invalid(format!("robust-lp2d has 2 criteria, --n has {}", n.m()));
            }
            let mut p = RobustLp2d::standard();
            if let Some(q) = a.qmc_points {
                if q < p.qmc_shifts {
                    return invalid(format!("--qmc-points must be at least {}", p.qmc_shifts));
                }
                p.qmc_points = q;
            }
            run_simulation(&a, &p, &n, stdout)
        }
    }
}
