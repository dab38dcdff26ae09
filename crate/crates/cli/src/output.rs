use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use riskshare::infconv::matrix_rows;
use riskshare::measures::marginal;
use riskshare::{CounterexampleReport, JointLaw};
use serde::Serialize;
use serde_json::{json, Value};

pub const REPORT_VERSION: u32 = 1;

/// Result of one command: the JSON report, its verdict and a one-line
/// summary for stderr.
pub struct Outcome {
    pub report: Value,
    pub affirmative: bool,
    pub summary: String,
}

impl Outcome {
    pub fn new<T: Serialize>(report: &T, affirmative: bool, summary: String) -> Result<Self> {
        Ok(Outcome { report: versioned(report)?, affirmative, summary })
    }

    pub fn exit_code(&self) -> u8 {
        if self.affirmative {
            0
        } else {
            1
        }
    }
}

/// Serializes `report` as an object tagged with the report format version.
pub fn versioned<T: Serialize>(report: &T) -> Result<Value> {
    let mut value = serde_json::to_value(report).context("report serialization")?;
    match value.as_object_mut() {
        Some(map) => {
            map.insert("version".into(), json!(REPORT_VERSION));
            Ok(value)
        }
        None => Ok(json!({ "version": REPORT_VERSION, "value": value })),
    }
}

pub fn error_report(message: &str) -> Value {
    json!({ "version": REPORT_VERSION, "error": message })
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

/// Step quantile functions of every agent's marginal, one coordinate at a
/// time: on `(level_lo, level_hi]` the quantile equals `value`.
pub fn quantile_table(laws: &[(&str, &JointLaw)]) -> String {
    let mut out = String::from("agent,law,coord,level_lo,level_hi,value\n");
    for &(name, law) in laws {
        for agent in 0..law.agents() {
            let m = marginal(law, agent).expect("agent index is in range");
            for coord in 0..law.dim() {
                let mut pts: Vec<(f64, f64)> = m.atoms().iter().map(|a| (a.x.0[coord], a.w)).collect();
                pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut level = 0.0;
                let mut k = 0;
                while k < pts.len() {
                    let value = pts[k].0;
                    let mut w = 0.0;
                    while k < pts.len() && pts[k].0 == value {
                        w += pts[k].1;
                        k += 1;
                    }
                    let hi = if k == pts.len() { 1.0 } else { (level + w).min(1.0) };
                    let _ = writeln!(out, "{agent},{name},{coord},{level},{hi},{value}");
                    level = hi;
                }
            }
        }
    }
    out
}

pub fn counterexample_csv(r: &CounterexampleReport) -> String {
    let mut out = String::from("quantity,row,col,value\n");
    let _ = writeln!(out, "n,,,{}", r.n);
    let _ = writeln!(out, "eps,,,{}", r.eps);
    let matrices = [
        ("S1", &r.s1),
        ("S2", &r.s2),
        ("T1", &r.t1),
        ("M1", &r.m1),
        ("M2", &r.m2),
        ("M1_prime", &r.m1_prime),
        ("M2_prime", &r.m2_prime),
    ];
    for (name, m) in matrices {
        for (i, row) in matrix_rows(m).iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let _ = writeln!(out, "{name},{},{},{v}", i + 1, j + 1);
            }
        }
    }
    let _ = writeln!(out, "T1_norm,,,{}", r.t1_norm);
    let _ = writeln!(out, "det_M1,,,{}", r.det_m1);
    let _ = writeln!(out, "det_M1_prime,,,{}", r.det_m1_prime);
    let _ = writeln!(out, "det_sum,,,{}", r.det_sum);
    out
}
