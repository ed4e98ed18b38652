//! Ensemble and oracle files.
//!
//! An ensemble file is a JSON document
//!
//! ```json
//! {"dim": 2, "states": [{"p": 0.5, "rho": [[[1, 0], [0, 0]], [[0, 0], [0, 0]]]}]}
//! ```
//!
//! where `rho` is the `dim x dim` density matrix in row-major order and each
//! entry is a `[re, im]` pair.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ensemble::Ensemble;
use crate::error::validation;
use crate::kidecomp::KIDecomposition;
use crate::matcore::{c, CMatrix};

use super::Failure;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleFile {
    pub dim: usize,
    pub states: Vec<StateEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateEntry {
    pub p: f64,
    pub rho: Vec<Vec<[f64; 2]>>,
}

impl EnsembleFile {
    pub fn from_ensemble(e: &Ensemble) -> Self {
        let states = e
            .signals()
            .iter()
            .map(|s| StateEntry {
                p: s.prob,
                rho: (0..e.dim())
                    .map(|i| (0..e.dim()).map(|j| [s.state[(i, j)].re, s.state[(i, j)].im]).collect())
                    .collect(),
            })
            .collect();
        Self { dim: e.dim(), states }
    }

    pub fn to_ensemble(&self) -> crate::Result<Ensemble> {
        let d = self.dim;
        let mut signals = Vec::with_capacity(self.states.len());
        for (k, s) in self.states.iter().enumerate() {
            if s.rho.len() != d || s.rho.iter().any(|row| row.len() != d) {
                return Err(validation(format!("state {k}: rho must be a {d}x{d} matrix")));
            }
            let m = CMatrix::from_fn(d, d, |i, j| c(s.rho[i][j][0], s.rho[i][j][1]));
            signals.push((s.p, m));
        }
        Ensemble::new(d, signals)
    }
}

pub fn read_ensemble(path: &Path) -> Result<Ensemble, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|err| Failure::Io(format!("cannot read {}: {err}", path.display())))?;
    let file: EnsembleFile = serde_json::from_str(&text)
        .map_err(|err| Failure::Parse(format!("{}: {err}", path.display())))?;
    Ok(file.to_ensemble()?)
}

#[derive(Debug, Serialize)]
pub struct OracleBlock {
    #[serde(rename = "dJ")]
    pub dj: usize,
    #[serde(rename = "dK")]
    pub dk: usize,
    #[serde(rename = "rhoK_spectrum")]
    pub rho_k_spectrum: Vec<f64>,
    pub q: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct OracleFile {
    pub seed: u64,
    pub signals: usize,
    pub dim: usize,
    pub support_dim: usize,
    #[serde(rename = "I_R")]
    pub i_r: f64,
    pub blocks: Vec<OracleBlock>,
}

impl OracleFile {
    pub fn new(seed: u64, e: &Ensemble, d: &KIDecomposition) -> crate::Result<Self> {
        Ok(Self {
            seed,
            signals: e.len(),
            dim: d.ambient_dim,
            support_dim: d.support_dim,
            i_r: d.reduced_entropy(&e.probs())?,
            blocks: d
                .blocks
                .iter()
                .map(|b| OracleBlock {
                    dj: b.dj,
                    dk: b.dk,
                    rho_k_spectrum: b.rho_k_spectrum(),
                    q: b.weights.clone(),
                })
                .collect(),
        })
    }
}

/// `dir/name.json -> dir/name.oracle.json`.
pub fn oracle_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.oracle.json"))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|err| Failure::Io(format!("cannot write {}: {err}", path.display())))
}

/// Parses `"(2,2),(1,3)"` into `(dJ, dK)` pairs.
pub fn parse_block_spec(spec: &str) -> Result<Vec<(usize, usize)>, String> {
    let compact: String = spec.chars().filter(|ch| !ch.is_whitespace()).collect();
    if compact.is_empty() {
        return Err("empty block spec".into());
    }
    let mut out = Vec::new();
    let mut rest = compact.as_str();
    loop {
        let body = rest
            .strip_prefix('(')
            .ok_or_else(|| format!("expected '(' in block spec at {rest:?}"))?;
        let close = body.find(')').ok_or("unclosed '(' in block spec")?;
        let (pair, tail) = body.split_at(close);
        let (a, b) = pair.split_once(',').ok_or_else(|| format!("block {pair:?} is not a pair"))?;
        let parse = |x: &str| x.parse::<usize>().map_err(|_| format!("bad dimension {x:?} in block spec"));
        out.push((parse(a)?, parse(b)?));
        rest = &tail[1..];
        if rest.is_empty() {
            return Ok(out);
        }
        rest = rest
            .strip_prefix(',')
            .ok_or_else(|| format!("expected ',' between blocks at {rest:?}"))?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_spec_parsing() {
        assert_eq!(parse_block_spec("(2,2),(1,3)").unwrap(), vec![(2, 2), (1, 3)]);
        assert_eq!(parse_block_spec(" (1, 1) ").unwrap(), vec![(1, 1)]);
        for bad in ["", "(1,1", "1,1", "(1,1)(2,2)", "(a,1)", "(1,1),", "(1)"] {
            assert!(parse_block_spec(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn oracle_path_examples() {
        assert_eq!(oracle_path(Path::new("out/x.json")), PathBuf::from("out/x.oracle.json"));
        assert_eq!(oracle_path(Path::new("x")), PathBuf::from("x.oracle.json"));
    }
}
