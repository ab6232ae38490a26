//! JSON and CSV output. Reals are written as decimal strings with 15
//! significant digits; multi-indices as integer arrays. The schemas live in
//! `docs/`.

use std::io::Write;

use serde_json::{json, Value};

use crate::allocations::{AllocationSpec, IntervalBound};
use crate::certificates::{JointRiskCertificate, RegionCertificate, RegionPayload, SizingResult};
use crate::error::{domain, Error, Result};
use crate::numerics::MultiIndex;
use crate::scenario::CoverageReport;

/// 15 significant digits; plain notation for exponents in [-4, 15),
/// scientific otherwise. Non-finite values become "inf", "-inf", "nan".
pub fn fmt_real(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.14e}");
    let exp: i32 = sci.rsplit_once('e').and_then(|(_, e)| e.parse().ok()).expect("exponent");
    if (-4..15).contains(&exp) {
        format!("{:.*}", (14 - exp) as usize, x)
    } else {
        sci
    }
}

fn real(x: f64) -> Value {
    Value::String(fmt_real(x))
}

fn reals(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| real(x)).collect())
}

fn index(k: &MultiIndex) -> Value {
    json!(k.entries())
}

fn interval_json(b: &IntervalBound) -> Value {
    json!({
        "eps_lo": real(b.eps_lo),
        "eps_hi": real(b.eps_hi),
        "k": b.k,
        "n": b.n,
        "beta": real(b.beta),
    })
}

pub fn allocation_json(a: &AllocationSpec) -> Value {
    let mut v = json!({
        "scheme": a.scheme,
        "n": index(&a.n),
        "h": index(&a.h),
        "beta": real(a.beta),
    });
    if let Some(e) = &a.custom_entries {
        v["custom_entries"] = Value::Array(
            e.iter().map(|(h, l)| json!({ "h": index(h), "lambda": real(*l) })).collect(),
        );
    }
    v
}

pub fn region_json(c: &RegionCertificate) -> Value {
    let payload = match &c.payload {
        RegionPayload::IndependentBox { bounds, choice } => json!({
            "choice": choice,
            "intervals": bounds.iter().map(interval_json).collect::<Vec<_>>(),
        }),
        RegionPayload::DiagonalBand(rp) => json!({
            "t_bar": real(rp.t_bar),
            "t_underbar": real(rp.t_underbar),
        }),
        RegionPayload::GeneralAllocation(a) => json!({ "allocation": allocation_json(a) }),
    };
    json!({
        "type": "region_certificate",
        "kind": c.kind(),
        "confidence": real(c.confidence),
        "k": index(&c.k),
        "n": index(&c.n),
        "h": index(&c.h),
        "payload": payload,
    })
}

pub fn joint_json(c: &JointRiskCertificate) -> Value {
    json!({
        "type": "joint_risk_certificate",
        "bound": real(c.bound),
        "raw_bound": real(c.raw_bound),
        "confidence": real(c.confidence),
        "method": c.method,
        "inputs": {
            "k": c.inputs.k.as_ref().map(index),
            "k_star": c.inputs.k_star,
            "n": index(&c.inputs.n),
            "beta": real(c.inputs.beta),
        },
    })
}

pub fn sizing_json(r: &SizingResult) -> Value {
    json!({
        "type": "sizing_result",
        "n_lower": r.n_lower,
        "t_bar_hat": real(r.t_bar_hat),
        "bound": real(r.bound),
    })
}

pub fn coverage_json(r: &CoverageReport) -> Value {
    json!({
        "type": "coverage_report",
        "problem": r.problem,
        "certificate": r.certificate,
        "seed": r.seed,
        "n": index(&r.n),
        "beta": real(r.beta),
        "requested_trials": r.requested_trials,
        "trials": r.trials,
        "hits": r.hits,
        "failed_trials": r.failed_trials,
        "excluded_degenerate": r.excluded_degenerate,
        "empirical_coverage": real(r.empirical_coverage),
        "target": real(r.target),
        "acceptance_threshold": real(r.acceptance_threshold),
        "wilson_95": reals(&[r.wilson_95.0, r.wilson_95.1]),
        "passed": r.passed,
        "complexity_histogram": r.complexity_histogram.iter()
            .map(|(k, c)| json!({ "k": index(k), "count": c }))
            .collect::<Vec<_>>(),
        "mean_true_risks": reals(&r.mean_true_risks),
        "mean_joint_risk": real(r.mean_joint_risk),
        "mean_bound_gap": real(r.mean_bound_gap),
    })
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::Unsupported(format!("csv write failed: {e}"))
}

/// Rows `v1,v2,member,g_value[,member_box]` over the grid
/// v_i ∈ {0, 1/res, …, (res−1)/res}.
pub fn write_region_grid<W: Write>(
    w: W,
    alloc: &AllocationSpec,
    k: &MultiIndex,
    overlay: Option<&RegionCertificate>,
    resolution: usize,
) -> Result<()> {
    if alloc.m() != 2 {
        return domain(format!("region grids need m = 2, got m = {}", alloc.m()));
    }
    if resolution == 0 {
        return domain("resolution must be positive");
    }
    let g = alloc.region_fn(k)?;
    let ov = overlay.map(|c| c.membership()).transpose()?;
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["v1", "v2", "member", "g_value"];
    if ov.is_some() {
        header.push("member_box");
    }
    wr.write_record(&header).map_err(csv_err)?;
    let step = 1.0 / resolution as f64;
    for i in 0..resolution {
        for j in 0..resolution {
            let v = [i as f64 * step, j as f64 * step];
            let gv = g.eval(&v)?;
            let mut rec = vec![fmt_real(v[0]), fmt_real(v[1]), u8::from(gv >= 0.0).to_string(), fmt_real(gv)];
            if let Some(o) = &ov {
                rec.push(u8::from(o.contains(&v)?).to_string());
            }
            wr.write_record(&rec).map_err(csv_err)?;
        }
    }
    wr.flush().map_err(csv_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifteen_significant_digits() {
        assert_eq!(fmt_real(0.158), "0.158000000000000");
        assert_eq!(fmt_real(1.0), "1.00000000000000");
        assert_eq!(fmt_real(1e-7), "1.00000000000000e-7");
        assert_eq!(fmt_real(1e-5), "1.00000000000000e-5");
        assert_eq!(fmt_real(2.5e-4), "0.000250000000000000");
        assert_eq!(fmt_real(123.456), "123.456000000000");
        assert_eq!(fmt_real(0.0), "0");
        assert_eq!(fmt_real(f64::INFINITY), "inf");
        let s = fmt_real(0.15610409424312345);
        assert_eq!(s.trim_start_matches("0.").len(), 15);
    }
}
