//! Ensembles of density matrices and the scalar information functionals
//! evaluated on them. All logarithms are base 2.

use crate::error::{ensure_dim, validation, Error, Result};
use crate::matcore::{
    column_projector, cr, frobenius, herm_eig, hermitian_part, hermiticity_defect, trace,
    CMatrix,
};

/// Signals below this probability are dropped when an ensemble is built.
pub const MIN_PROB: f64 = 1e-12;

const PROB_SUM_TOL: f64 = 1e-9;
const TRACE_TOL: f64 = 1e-9;
const PSD_TOL: f64 = 1e-8;
const HERMITIAN_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Signal {
    pub prob: f64,
    pub state: CMatrix,
}

/// Probability-weighted density matrices on a common `dim`-dimensional space.
#[derive(Debug, Clone)]
pub struct Ensemble {
    dim: usize,
    signals: Vec<Signal>,
}

impl Ensemble {
    /// Validates and normalizes an ensemble.
    ///
    /// Signals with probability below [`MIN_PROB`] are dropped. States whose
    /// defects are within tolerance are projected back onto the density
    /// matrices (Hermitian part, negative eigenvalues clamped, trace
    /// renormalized); larger defects are errors.
    pub fn new(dim: usize, signals: Vec<(f64, CMatrix)>) -> Result<Self> {
        if dim == 0 {
            return Err(validation("ensemble dimension must be positive"));
        }
        let total: f64 = signals.iter().map(|(p, _)| *p).sum();
        if signals.iter().any(|(p, _)| !p.is_finite() || *p < 0.0) {
            return Err(validation("signal probabilities must be finite and non-negative"));
        }
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(validation(format!(
                "signal probabilities must sum to 1 (got {total:.12})"
            )));
        }
        let mut kept = Vec::new();
        for (k, (p, rho)) in signals.into_iter().enumerate() {
            if p < MIN_PROB {
                continue;
            }
            if rho.shape() != (dim, dim) {
                return Err(validation(format!(
                    "state {k} has shape {:?}, expected {dim}x{dim}",
                    rho.shape()
                )));
            }
            let state = project_density(&rho).map_err(|e| match e {
                Error::Validation(msg) => validation(format!("state {k}: {msg}")),
                other => other,
            })?;
            kept.push(Signal { prob: p, state });
        }
        if kept.is_empty() {
            return Err(validation("ensemble has no signal with positive probability"));
        }
        let kept_total: f64 = kept.iter().map(|s| s.prob).sum();
        for s in &mut kept {
            s.prob /= kept_total;
        }
        Ok(Self { dim, signals: kept })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }

    pub fn signals(&self) -> &[Signal] {
        &self.signals
    }

    pub fn probs(&self) -> Vec<f64> {
        self.signals.iter().map(|s| s.prob).collect()
    }

    pub fn state(&self, i: usize) -> &CMatrix {
        &self.signals[i].state
    }

    pub fn states(&self) -> impl Iterator<Item = &CMatrix> {
        self.signals.iter().map(|s| &s.state)
    }

    /// The ensemble `{p_i, U rho_i U^dag}`.
    pub fn conjugated(&self, u: &CMatrix) -> Result<Self> {
        ensure_dim(self.dim, u.ncols())?;
        let signals = self
            .signals
            .iter()
            .map(|s| (s.prob, u * &s.state * u.adjoint()))
            .collect();
        Self::new(u.nrows(), signals)
    }
}

/// Checks that `rho` is Hermitian, positive semidefinite and unit trace
/// within `tol`.
pub fn validate_density(rho: &CMatrix, tol: f64) -> Result<()> {
    if !rho.is_square() {
        return Err(validation("density matrix must be square"));
    }
    let h = hermiticity_defect(rho);
    if h > tol {
        return Err(validation(format!("density matrix is not Hermitian (defect {h:.3e})")));
    }
    let tr = trace(rho);
    if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
        return Err(validation(format!("density matrix trace is {:.12}, not 1", tr.re)));
    }
    let min = herm_eig(&hermitian_part(rho))?.values.last().copied().unwrap_or(0.0);
    if min < -tol {
        return Err(validation(format!(
            "density matrix is not positive semidefinite (min eigenvalue {min:.3e})"
        )));
    }
    Ok(())
}

/// Projects a near-density matrix onto the density matrices, rejecting
/// inputs whose Hermiticity, positivity or trace defects exceed tolerance.
pub fn project_density(rho: &CMatrix) -> Result<CMatrix> {
    if !rho.is_square() {
        return Err(validation("density matrix must be square"));
    }
    let h = hermiticity_defect(rho);
    if h > HERMITIAN_TOL {
        return Err(validation(format!("state is not Hermitian (defect {h:.3e})")));
    }
    let tr = trace(rho);
    if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
        return Err(validation(format!("state trace is {:.12}, not 1", tr.re)));
    }
    let herm = hermitian_part(rho);
    let eig = herm_eig(&herm)?;
    let min = eig.values.last().copied().unwrap_or(0.0);
    if min < -PSD_TOL {
        return Err(validation(format!(
            "state is not positive semidefinite (min eigenvalue {min:.3e})"
        )));
    }
    let out = if min < 0.0 { eig.map_spectrum(|x| x.max(0.0)) } else { herm };
    let t = trace(&out).re;
    Ok(hermitian_part(&(out / cr(t))))
}

/// `rho = sum_i p_i rho_i`.
pub fn total_state(e: &Ensemble) -> CMatrix {
    let mut rho = CMatrix::zeros(e.dim(), e.dim());
    for s in e.signals() {
        rho += &s.state * cr(s.prob);
    }
    hermitian_part(&rho)
}

/// `-sum x log2 x` over a spectrum, with `0 log 0 = 0` and tiny negative
/// rounding ignored.
pub fn spectrum_entropy(values: &[f64]) -> f64 {
    values
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -x * x.log2())
        .sum::<f64>()
        .max(0.0)
}

/// Von Neumann entropy `S(rho) = -Tr rho log2 rho` in bits.
pub fn von_neumann_entropy(rho: &CMatrix) -> Result<f64> {
    validate_density(rho, PSD_TOL)?;
    let eig = herm_eig(&hermitian_part(rho))?;
    Ok(spectrum_entropy(&eig.values))
}

/// Shannon entropy of a probability vector in bits.
pub fn shannon_entropy(p: &[f64]) -> Result<f64> {
    if p.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(validation("probabilities must be finite and non-negative"));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > PROB_SUM_TOL {
        return Err(validation(format!("probabilities must sum to 1 (got {total:.12})")));
    }
    Ok(spectrum_entropy(p))
}

/// `H(p) = -p log2 p - (1-p) log2 (1-p)`.
pub fn binary_entropy(p: f64) -> f64 {
    spectrum_entropy(&[p, 1.0 - p])
}

/// `I_LH = S(rho) - sum_i p_i S(rho_i)`.
pub fn levitin_holevo(e: &Ensemble) -> Result<f64> {
    let s_total = von_neumann_entropy(&total_state(e))?;
    let mut avg = 0.0;
    for s in e.signals() {
        avg += s.prob * von_neumann_entropy(&s.state)?;
    }
    Ok((s_total - avg).max(0.0))
}

/// Square root of a PSD matrix with numerically-zero eigenvalues (below
/// `1e-14` of the largest) set to zero.
fn sqrt_with_floor(rho: &CMatrix) -> Result<CMatrix> {
    let eig = herm_eig(&hermitian_part(rho))?;
    let top = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let floor = 1e-14 * top;
    Ok(eig.map_spectrum(|x| if x > floor { x.sqrt() } else { 0.0 }))
}

/// Fidelity `F(rho, sigma) = [Tr sqrt(rho^1/2 sigma rho^1/2)]^2`, evaluated as
/// the squared trace norm of `sqrt(rho) sqrt(sigma)`.
pub fn fidelity(rho: &CMatrix, sigma: &CMatrix) -> Result<f64> {
    if rho.shape() != sigma.shape() {
        return Err(Error::DimensionMismatch { expected: rho.nrows(), got: sigma.nrows() });
    }
    validate_density(rho, PSD_TOL)?;
    validate_density(sigma, PSD_TOL)?;
    let prod = sqrt_with_floor(rho)? * sqrt_with_floor(sigma)?;
    let tr_norm: f64 = prod.singular_values().iter().sum();
    Ok((tr_norm * tr_norm).clamp(0.0, 1.0))
}

/// `g = H(p_e) + p_e log2(d - 1)`, the Fano bound on the conditional entropy
/// of a `d`-ary variable decoded with error probability `p_e`.
pub fn fano_g(p_e: f64, d: usize) -> Result<f64> {
    if d < 2 {
        return Err(validation(format!("alphabet size must be at least 2, got {d}")));
    }
    if !(-1e-12..=1.0 + 1e-12).contains(&p_e) {
        return Err(validation(format!("error probability {p_e} outside [0, 1]")));
    }
    let p = p_e.clamp(0.0, 1.0);
    Ok(binary_entropy(p) + p * ((d - 1) as f64).log2())
}

/// Orthogonal pure-state ensemble `{p_(l,s), |l,s><l,s|}` taken from a
/// diagonalization of a total state, labelled by block `l` and index `s`.
#[derive(Debug, Clone)]
pub struct EigenEnsemble {
    pub labels: Vec<(usize, usize)>,
    pub probs: Vec<f64>,
    /// Columns are the orthonormal vectors `|l,s>`.
    pub vectors: CMatrix,
}

impl EigenEnsemble {
    pub fn new(labels: Vec<(usize, usize)>, probs: Vec<f64>, vectors: CMatrix) -> Result<Self> {
        if labels.len() != probs.len() || probs.len() != vectors.ncols() {
            return Err(validation("eigen-ensemble labels, probabilities and vectors disagree"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL || probs.iter().any(|&p| p < -PROB_SUM_TOL) {
            return Err(validation(format!(
                "eigen-ensemble probabilities must sum to 1 (got {total:.12})"
            )));
        }
        let defect = crate::matcore::isometry_defect(&vectors);
        if defect > 1e-9 {
            return Err(validation(format!(
                "eigen-ensemble vectors are not orthonormal (defect {defect:.3e})"
            )));
        }
        Ok(Self { labels, probs, vectors })
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn projector(&self, k: usize) -> CMatrix {
        column_projector(&self.vectors, k)
    }

    /// `sum p_(l,s) |l,s><l,s|`.
    pub fn total_state(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim(), self.dim());
        for k in 0..self.len() {
            out += self.projector(k) * cr(self.probs[k]);
        }
        out
    }

    pub fn to_ensemble(&self) -> Result<Ensemble> {
        let signals = (0..self.len())
            .map(|k| (self.probs[k], self.projector(k)))
            .collect();
        Ensemble::new(self.dim(), signals)
    }
}

/// `max_i ||a_i - b_i||_F` over two equal-length state lists.
pub fn max_state_distance<'a>(
    a: impl IntoIterator<Item = &'a CMatrix>,
    b: impl IntoIterator<Item = &'a CMatrix>,
) -> f64 {
    a.into_iter()
        .zip(b)
        .map(|(x, y)| frobenius(&(x - y)))
        .fold(0.0, f64::max)
}
