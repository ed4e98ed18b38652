//! Report structures and their fixed-precision JSON/CSV rendering.

use serde::Serialize;
use serde_json::Value;

use crate::compress::{ConverseReport, SweepRow};
use crate::ensemble::{levitin_holevo, shannon_entropy, total_state, von_neumann_entropy, Ensemble};
use crate::kidecomp::{ki_decompose, strip, RECONSTRUCTION_TOL};
use crate::Result;

/// Significant digits of every printed real.
pub const SIG_DIGITS: usize = 12;

/// Rounds to [`SIG_DIGITS`] significant digits; `-0` becomes `0`.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return if x == 0.0 { 0.0 } else { x };
    }
    let y: f64 = format!("{:.*e}", SIG_DIGITS - 1, x).parse().unwrap_or(x);
    if y == 0.0 {
        0.0
    } else {
        y
    }
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64().and_then(|x| serde_json::Number::from_f64(round_sig(x))) {
                *n = x;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with rounded reals and a trailing newline.
pub fn to_json<T: Serialize>(report: &T) -> String {
    let mut v = serde_json::to_value(report).expect("reports serialize");
    round_value(&mut v);
    let mut s = serde_json::to_string_pretty(&v).expect("values serialize");
    s.push('\n');
    s
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        let mut row = row.clone();
        row.rate = round_sig(row.rate);
        row.avg_fidelity = round_sig(row.avg_fidelity);
        w.serialize(row).expect("in-memory CSV write");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("CSV is UTF-8")
}

#[derive(Debug, Serialize)]
pub struct BlockReport {
    #[serde(rename = "dJ")]
    pub dj: usize,
    #[serde(rename = "dK")]
    pub dk: usize,
    #[serde(rename = "rhoK_spectrum")]
    pub rho_k_spectrum: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct Tolerances {
    pub structural: f64,
    pub reconstruction: f64,
}

#[derive(Debug, Serialize)]
pub struct AnalysisReport {
    pub dim: usize,
    pub signals: usize,
    pub support_dim: usize,
    #[serde(rename = "S_rho")]
    pub s_rho: f64,
    #[serde(rename = "I_LH")]
    pub i_lh: f64,
    #[serde(rename = "I_R")]
    pub i_r: f64,
    pub shannon: f64,
    pub defect_lower_bound: f64,
    pub blocks: Vec<BlockReport>,
    pub tolerances: Tolerances,
}

impl AnalysisReport {
    pub fn new(e: &Ensemble, tol: f64) -> Result<Self> {
        let d = ki_decompose(e, tol)?;
        let reduced = strip(&d, e)?;
        let i_r = von_neumann_entropy(&total_state(&reduced))?;
        let shannon = shannon_entropy(&e.probs())?;
        Ok(Self {
            dim: e.dim(),
            signals: e.len(),
            support_dim: d.support_dim,
            s_rho: von_neumann_entropy(&total_state(e))?,
            i_lh: levitin_holevo(e)?,
            i_r,
            shannon,
            defect_lower_bound: (i_r - shannon).max(0.0),
            blocks: d
                .blocks
                .iter()
                .map(|b| BlockReport { dj: b.dj, dk: b.dk, rho_k_spectrum: b.rho_k_spectrum() })
                .collect(),
            tolerances: Tolerances { structural: tol, reconstruction: RECONSTRUCTION_TOL },
        })
    }
}

#[derive(Debug, Serialize)]
pub struct DiagnoseReport {
    pub scheme: String,
    pub requested_rate: Option<f64>,
    pub reduced_dim: usize,
    #[serde(flatten)]
    pub converse: ConverseReport,
}
