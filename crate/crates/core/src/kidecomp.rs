//! Redundancy decomposition of an ensemble and the reduced-entropy rate.
//!
//! On the support of `rho = sum_i p_i rho_i` we find orthogonal blocks
//! `H_J^(l) (x) H_K^(l)` such that every signal has the form
//!
//! ```text
//! rho_i = (+)_l q_il * rho_J^(i,l) (x) rho_K^(l)
//! ```
//!
//! with `rho_K^(l)` independent of `i` and each weighted family
//! `{q_il rho_J^(i,l)}_i` irreducible (trivial commutant). The `K` factors
//! carry no information about `i`; dropping them gives the reduced signals
//! `sigma_i = (+)_l q_il rho_J^(i,l)` and the rate `I_R = S(sum_i p_i sigma_i)`.
//!
//! The decomposition is computed in three steps:
//!
//! 1. restrict every state to the support of `rho`;
//! 2. split: while the commutant of the restricted states is larger than the
//!    scalars, diagonalize a generic Hermitian commutant element and recurse
//!    into its eigenspaces (the spectral projections commute with every
//!    state, so nothing is lost across the cut);
//! 3. merge: irreducible pieces whose families are unitarily equivalent up to
//!    a signal-independent scale `c` are tensored together into one `J (x) K`
//!    block, the scales becoming the diagonal of `rho_K`.
//!
//! Every result is checked by reconstructing each `rho_i`.

use std::cmp::Ordering;

use rand::Rng;

use crate::ensemble::{spectrum_entropy, total_state, EigenEnsemble, Ensemble};
use crate::error::{validation, Error, Result};
use crate::matcore::{
    cluster_descending, commutant_basis, commutant_basis_with_tol, cr, diag, frobenius,
    generic_coefficients, herm_eig, hermitian_part, intertwiner, kron, trace, CMatrix, C64,
    DEFAULT_TOL,
};
use crate::sampling::{random_density, random_isometry, random_simplex, rng};

/// Block weights at or below this value count as zero.
const ZERO_WEIGHT: f64 = 1e-11;

/// Largest reconstruction error accepted from [`ki_decompose`].
pub const RECONSTRUCTION_TOL: f64 = 1e-8;

const SPLIT_CLUSTER_TOL: f64 = 1e-6;
const MAX_SPLIT_DEPTH: usize = 64;
const MAX_PLANTED_DIM: usize = 64;

/// One `J (x) K` block of the decomposition.
#[derive(Debug, Clone)]
pub struct KIBlock {
    pub dj: usize,
    pub dk: usize,
    /// Isometry `C^(dj*dk) -> C^d`, columns indexed `a * dk + k`.
    pub iso: CMatrix,
    /// Shared `K` state, diagonal with descending entries.
    pub rho_k: CMatrix,
    /// `q_il` for every signal `i`.
    pub weights: Vec<f64>,
    /// Normalized `rho_J^(i,l)`; zero where the weight vanishes.
    pub jstates: Vec<CMatrix>,
}

impl KIBlock {
    pub fn rho_k_spectrum(&self) -> Vec<f64> {
        (0..self.dk).map(|k| self.rho_k[(k, k)].re).collect()
    }

    /// `q_il * rho_J^(i,l) (x) rho_K^(l)` in block coordinates.
    pub fn local_state(&self, i: usize) -> CMatrix {
        kron(&self.jstates[i], &self.rho_k) * cr(self.weights[i])
    }

    /// Projector onto the block image in the ambient space.
    pub fn projector(&self) -> CMatrix {
        &self.iso * self.iso.adjoint()
    }
}

#[derive(Debug, Clone)]
pub struct KIDecomposition {
    pub ambient_dim: usize,
    pub support_dim: usize,
    pub blocks: Vec<KIBlock>,
}

impl KIDecomposition {
    pub fn signal_count(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.weights.len())
    }

    /// Dimension `sum_l dJ_l` of the reduced space.
    pub fn reduced_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.dj).sum()
    }

    /// Offsets of each block in the reduced layout.
    pub fn reduced_offsets(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .scan(0, |acc, b| {
                let off = *acc;
                *acc += b.dj;
                Some(off)
            })
            .collect()
    }

    /// Sorted multiset of `(dJ, dK)` pairs.
    pub fn block_dims(&self) -> Vec<(usize, usize)> {
        let mut dims: Vec<_> = self.blocks.iter().map(|b| (b.dj, b.dk)).collect();
        dims.sort_unstable_by(|a, b| b.cmp(a));
        dims
    }

    /// `q[i][l]`.
    pub fn q_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.signal_count())
            .map(|i| self.blocks.iter().map(|b| b.weights[i]).collect())
            .collect()
    }

    pub fn reconstruct(&self, i: usize) -> Result<CMatrix> {
        reconstruct(self, i)
    }

    /// Reduced signal `sigma_i = (+)_l q_il rho_J^(i,l)`.
    pub fn reduced_state(&self, i: usize) -> Result<CMatrix> {
        if i >= self.signal_count() {
            return Err(validation(format!("signal index {i} out of range")));
        }
        let n = self.reduced_dim();
        let mut sigma = CMatrix::zeros(n, n);
        for (b, off) in self.blocks.iter().zip(self.reduced_offsets()) {
            let piece = &b.jstates[i] * cr(b.weights[i]);
            sigma.view_mut((off, off), (b.dj, b.dj)).copy_from(&piece);
        }
        Ok(sigma)
    }

    /// Entropy of `sum_i p_i sigma_i`, evaluated block by block.
    pub fn reduced_entropy(&self, probs: &[f64]) -> Result<f64> {
        let mut spectrum = Vec::new();
        for b in &self.blocks {
            let mut m = CMatrix::zeros(b.dj, b.dj);
            for (i, &p) in probs.iter().enumerate() {
                m += &b.jstates[i] * cr(p * b.weights[i]);
            }
            spectrum.extend(herm_eig(&hermitian_part(&m))?.values);
        }
        Ok(spectrum_entropy(&spectrum))
    }

    /// Orthonormal basis (columns) of the complement of the support.
    pub fn complement_basis(&self) -> Result<CMatrix> {
        let d = self.ambient_dim;
        let mut q = CMatrix::identity(d, d);
        for b in &self.blocks {
            q -= b.projector();
        }
        let eig = herm_eig(&hermitian_part(&q))?;
        let keep: Vec<usize> = (0..d).filter(|&k| eig.values[k] > 0.5).collect();
        Ok(CMatrix::from_fn(d, keep.len(), |i, j| eig.vectors[(i, keep[j])]))
    }

    /// Orthogonal pure-state ensemble from diagonalizing the total state
    /// inside each block, so that `{|l,s>}_s` is a basis of `H_J^(l)`.
    /// Only defined when every `K` factor is trivial.
    pub fn eigen_ensemble(&self, e: &Ensemble) -> Result<EigenEnsemble> {
        if self.blocks.iter().any(|b| b.dk != 1) {
            return Err(validation(
                "eigen-ensemble needs a redundancy-free decomposition (all dK = 1)",
            ));
        }
        let rho = total_state(e);
        let mut labels = Vec::new();
        let mut probs = Vec::new();
        let mut cols: Vec<nalgebra::DVector<C64>> = Vec::new();
        for (l, b) in self.blocks.iter().enumerate() {
            let m = hermitian_part(&(b.iso.adjoint() * &rho * &b.iso));
            let eig = herm_eig(&m)?;
            for s in 0..b.dj {
                labels.push((l, s));
                probs.push(eig.values[s].max(0.0));
                cols.push(&b.iso * eig.vectors.column(s));
            }
        }
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        let vectors = if cols.is_empty() {
            CMatrix::zeros(self.ambient_dim, 0)
        } else {
            CMatrix::from_columns(&cols)
        };
        EigenEnsemble::new(labels, probs, vectors)
    }

    /// Largest reconstruction error over all signals.
    pub fn max_reconstruction_error(&self, e: &Ensemble) -> Result<f64> {
        let mut worst = 0.0f64;
        for i in 0..e.len() {
            worst = worst.max(frobenius(&(self.reconstruct(i)? - e.state(i))));
        }
        Ok(worst)
    }
}

/// Isometry onto the support of the total state: eigenvectors whose
/// eigenvalue exceeds `tol` times the largest one.
pub fn support_isometry(e: &Ensemble, tol: f64) -> Result<CMatrix> {
    let eig = herm_eig(&total_state(e))?;
    let top = eig.values.first().copied().unwrap_or(0.0);
    let keep: Vec<usize> = (0..e.dim()).filter(|&k| eig.values[k] > tol * top).collect();
    Ok(CMatrix::from_fn(e.dim(), keep.len(), |i, j| eig.vectors[(i, keep[j])]))
}

/// Redundancy decomposition with relative structural tolerance `tol`.
pub fn ki_decompose(e: &Ensemble, tol: f64) -> Result<KIDecomposition> {
    let support = support_isometry(e, tol)?;
    let support_dim = support.ncols();
    let states: Vec<CMatrix> = e.states().cloned().collect();

    let mut pieces = Vec::new();
    split(&states, support, 0, tol, &mut pieces)?;
    let irreps: Vec<Irrep> = pieces.into_iter().map(|iso| Irrep::new(iso, &states)).collect();
    let classes = merge(&irreps, tol)?;

    let mut blocks: Vec<KIBlock> = classes.into_iter().map(|c| c.into_block(&irreps)).collect();
    blocks.sort_by(block_order);
    let dec = KIDecomposition { ambient_dim: e.dim(), support_dim, blocks };

    let err = dec.max_reconstruction_error(e)?;
    if err > RECONSTRUCTION_TOL {
        return Err(Error::Internal(format!(
            "decomposition does not reconstruct the ensemble (max error {err:.3e})"
        )));
    }
    Ok(dec)
}

/// `sum_l q_il * iso_l (rho_J^(i,l) (x) rho_K^(l)) iso_l^dag`.
pub fn reconstruct(d: &KIDecomposition, i: usize) -> Result<CMatrix> {
    if i >= d.signal_count() {
        return Err(validation(format!(
            "signal index {i} out of range for {} signals",
            d.signal_count()
        )));
    }
    let mut out = CMatrix::zeros(d.ambient_dim, d.ambient_dim);
    for b in &d.blocks {
        if b.weights[i] == 0.0 {
            continue;
        }
        out += &b.iso * b.local_state(i) * b.iso.adjoint();
    }
    Ok(out)
}

/// Reduced ensemble `{p_i, sigma_i}` on `sum_l dJ_l` dimensions.
pub fn strip(d: &KIDecomposition, e: &Ensemble) -> Result<Ensemble> {
    if d.signal_count() != e.len() {
        return Err(validation(format!(
            "decomposition has {} signals, ensemble has {}",
            d.signal_count(),
            e.len()
        )));
    }
    let signals = e
        .signals()
        .iter()
        .enumerate()
        .map(|(i, s)| Ok((s.prob, d.reduced_state(i)?)))
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(d.reduced_dim(), signals)
}

/// `I_R`: von Neumann entropy of the stripped ensemble.
pub fn i_r(e: &Ensemble) -> Result<f64> {
    i_r_with_tol(e, DEFAULT_TOL)
}

pub fn i_r_with_tol(e: &Ensemble, tol: f64) -> Result<f64> {
    let d = ki_decompose(e, tol)?;
    let reduced = strip(&d, e)?;
    crate::ensemble::von_neumann_entropy(&total_state(&reduced))
}

/// Unitary `W` with `B_i = c W A_i W^dag` for all `i`, if the intertwiner
/// space is one-dimensional and the polar unitary meets the residual bound.
pub fn find_intertwiner(a: &[CMatrix], b: &[CMatrix], c: f64) -> Result<Option<CMatrix>> {
    intertwiner(a, b, c, DEFAULT_TOL)
}

fn split(
    states: &[CMatrix],
    iso: CMatrix,
    depth: usize,
    tol: f64,
    out: &mut Vec<CMatrix>,
) -> Result<()> {
    let n = iso.ncols();
    if n <= 1 {
        if n == 1 {
            out.push(iso);
        }
        return Ok(());
    }
    let gens: Vec<CMatrix> = states
        .iter()
        .map(|r| hermitian_part(&(iso.adjoint() * r * &iso)))
        .filter(|a| trace(a).re > ZERO_WEIGHT)
        .map(|a| {
            let norm = frobenius(&a);
            a / cr(norm)
        })
        .collect();
    let comm = commutant_basis_with_tol(&gens, n, tol)?;
    if comm.len() <= 1 {
        out.push(iso);
        return Ok(());
    }
    if depth >= MAX_SPLIT_DEPTH {
        return Err(Error::Internal("block splitting did not terminate".into()));
    }
    let coef = generic_coefficients(((n as u64) << 32) ^ depth as u64 ^ 0x9e37_79b9, comm.len());
    let mut h = CMatrix::zeros(n, n);
    for (x, r) in comm.elements.iter().zip(&coef) {
        h += x * cr(*r);
    }
    let eig = herm_eig(&hermitian_part(&h))?;
    let clusters = cluster_descending(&eig.values, SPLIT_CLUSTER_TOL);
    if clusters.len() < 2 {
        return Err(Error::Internal(
            "generic commutant element has a single eigenspace".into(),
        ));
    }
    for range in clusters {
        let cols = eig.vectors.columns(range.start, range.len()).clone_owned();
        split(states, &iso * cols, depth + 1, tol, out)?;
    }
    Ok(())
}

/// An irreducible piece produced by the split step.
struct Irrep {
    iso: CMatrix,
    states: Vec<CMatrix>,
    traces: Vec<f64>,
}

impl Irrep {
    fn new(iso: CMatrix, states: &[CMatrix]) -> Self {
        let restricted: Vec<CMatrix> = states
            .iter()
            .map(|r| hermitian_part(&(iso.adjoint() * r * &iso)))
            .collect();
        let traces = restricted.iter().map(|a| trace(a).re).collect();
        Self { iso, states: restricted, traces }
    }

    fn dim(&self) -> usize {
        self.iso.ncols()
    }

    fn supported(&self) -> Vec<bool> {
        self.traces.iter().map(|&t| t > ZERO_WEIGHT).collect()
    }
}

/// Equivalence class of irreducible pieces: `(piece, scale, W)` with
/// `piece.states_i = scale * W ref.states_i W^dag`.
struct Class {
    members: Vec<(usize, f64, CMatrix)>,
}

impl Class {
    fn into_block(self, irreps: &[Irrep]) -> KIBlock {
        let mut members = self.members;
        // re-reference on the heaviest member so rho_K is descending from it
        let best = members
            .iter()
            .enumerate()
            .fold(0, |best, (k, m)| if m.1 > members[best].1 { k } else { best });
        let (_, c_best, w_best) = members[best].clone();
        for m in &mut members {
            m.1 /= c_best;
            m.2 = &m.2 * w_best.adjoint();
        }
        members.sort_by(|a, b| b.1.total_cmp(&a.1));

        let reference = &irreps[members[0].0];
        let dj = reference.dim();
        let dk = members.len();
        let d = reference.iso.nrows();
        let mut iso = CMatrix::zeros(d, dj * dk);
        for (k, (idx, _, w)) in members.iter().enumerate() {
            let cols = &irreps[*idx].iso * w;
            for a in 0..dj {
                iso.set_column(a * dk + k, &cols.column(a));
            }
        }
        let scale_total: f64 = members.iter().map(|m| m.1).sum();
        let rho_k = diag(&members.iter().map(|m| m.1 / scale_total).collect::<Vec<_>>());

        let signals = reference.states.len();
        let mut weights = Vec::with_capacity(signals);
        let mut jstates = Vec::with_capacity(signals);
        for i in 0..signals {
            let q: f64 = members.iter().map(|(idx, _, _)| irreps[*idx].traces[i]).sum();
            let t_ref = reference.traces[i];
            if t_ref > ZERO_WEIGHT {
                weights.push(q);
                jstates.push(hermitian_part(&(&reference.states[i] / cr(t_ref))));
            } else {
                weights.push(0.0);
                jstates.push(CMatrix::zeros(dj, dj));
            }
        }
        KIBlock { dj, dk, iso, rho_k, weights, jstates }
    }
}

fn merge(irreps: &[Irrep], tol: f64) -> Result<Vec<Class>> {
    let mut classes: Vec<Class> = Vec::new();
    'pieces: for (idx, piece) in irreps.iter().enumerate() {
        for class in &mut classes {
            let reference = &irreps[class.members[0].0];
            if let Some((ratio, w)) = equivalence(reference, piece, tol)? {
                class.members.push((idx, ratio, w));
                continue 'pieces;
            }
        }
        let n = piece.dim();
        classes.push(Class { members: vec![(idx, 1.0, CMatrix::identity(n, n))] });
    }
    Ok(classes)
}

/// Screens two pieces (dimension, support pattern, constant trace ratio,
/// scaled spectra) and confirms equivalence with an intertwiner.
fn equivalence(reference: &Irrep, piece: &Irrep, tol: f64) -> Result<Option<(f64, CMatrix)>> {
    if reference.dim() != piece.dim() || reference.supported() != piece.supported() {
        return Ok(None);
    }
    let support: Vec<usize> = (0..reference.traces.len())
        .filter(|&i| reference.traces[i] > ZERO_WEIGHT)
        .collect();
    if support.is_empty() {
        return Ok(None);
    }
    let num: f64 = support.iter().map(|&i| piece.traces[i]).sum();
    let den: f64 = support.iter().map(|&i| reference.traces[i]).sum();
    let ratio = num / den;
    for &i in &support {
        let expected = ratio * reference.traces[i];
        if (piece.traces[i] - expected).abs() > 1e-8 * expected + 1e-13 {
            return Ok(None);
        }
    }
    let a: Vec<CMatrix> = support
        .iter()
        .map(|&i| &reference.states[i] / cr(reference.traces[i]))
        .collect();
    let b: Vec<CMatrix> = support
        .iter()
        .map(|&i| &piece.states[i] / cr(reference.traces[i]))
        .collect();
    for (x, y) in a.iter().zip(&b) {
        let sx = herm_eig(x)?.values;
        let sy = herm_eig(y)?.values;
        if sx.iter().zip(&sy).any(|(u, v)| (v - ratio * u).abs() > 1e-8 * (1.0 + ratio)) {
            return Ok(None);
        }
    }
    Ok(intertwiner(&a, &b, ratio, tol)?.map(|w| (ratio, w)))
}

fn lexicographic_desc(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match y.total_cmp(x) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    b.len().cmp(&a.len())
}

/// Block order: `dJ*dK` descending, then `dJ`, weight column and `rho_K`
/// spectrum, all descending.
fn block_order(a: &KIBlock, b: &KIBlock) -> Ordering {
    (b.dj * b.dk)
        .cmp(&(a.dj * a.dk))
        .then(b.dj.cmp(&a.dj))
        .then_with(|| lexicographic_desc(&a.weights, &b.weights))
        .then_with(|| lexicographic_desc(&a.rho_k_spectrum(), &b.rho_k_spectrum()))
}

/// Block structure and signal count for a planted instance.
#[derive(Debug, Clone)]
pub struct PlantedSpec {
    pub blocks: Vec<(usize, usize)>,
    pub signals: usize,
    /// Ambient dimension; defaults to the support dimension `sum dJ*dK`.
    pub ambient_dim: Option<usize>,
}

impl PlantedSpec {
    pub fn new(blocks: Vec<(usize, usize)>, signals: usize) -> Self {
        Self { blocks, signals, ambient_dim: None }
    }

    pub fn support_dim(&self) -> usize {
        self.blocks.iter().map(|(j, k)| j * k).sum()
    }

    fn validate(&self) -> Result<usize> {
        let support = self.support_dim();
        if self.blocks.is_empty() || self.blocks.iter().any(|&(j, k)| j == 0 || k == 0) {
            return Err(validation("planted spec needs at least one block with positive dims"));
        }
        if support > MAX_PLANTED_DIM {
            return Err(validation(format!(
                "planted support dimension {support} exceeds {MAX_PLANTED_DIM}"
            )));
        }
        let ambient = self.ambient_dim.unwrap_or(support);
        if ambient < support || ambient > MAX_PLANTED_DIM {
            return Err(validation(format!(
                "ambient dimension {ambient} must lie in [{support}, {MAX_PLANTED_DIM}]"
            )));
        }
        if self.signals == 0 {
            return Err(validation("planted spec needs at least one signal"));
        }
        if self.signals == 1 && (self.blocks.len() > 1 || self.blocks[0].0 > 1) {
            return Err(validation(
                "a single signal only admits one block with dJ = 1",
            ));
        }
        Ok(ambient)
    }
}

/// Random ensemble with a known decomposition: irreducible `J` families
/// (rejection sampled), random full-rank diagonal `rho_K`, random weights on
/// the simplex and a Haar-random ambient isometry. Deterministic in `seed`.
pub fn gen_planted(spec: &PlantedSpec, seed: u64) -> Result<(Ensemble, KIDecomposition)> {
    let ambient = spec.validate()?;
    let mut r = rng(seed);
    let m = spec.signals;
    let probs = random_simplex(m, &mut r);

    let mut blocks = Vec::with_capacity(spec.blocks.len());
    for &(dj, dk) in &spec.blocks {
        let jstates = loop {
            let family: Vec<CMatrix> = (0..m).map(|_| random_density(dj, dj, &mut r)).collect();
            if dj == 1 || commutant_basis(&family, dj)?.len() == 1 {
                break family;
            }
        };
        let mut spectrum = random_simplex(dk, &mut r);
        spectrum.sort_by(|a, b| b.total_cmp(a));
        blocks.push(KIBlock {
            dj,
            dk,
            iso: CMatrix::zeros(0, 0),
            rho_k: diag(&spectrum),
            weights: Vec::with_capacity(m),
            jstates,
        });
    }
    for _ in 0..m {
        let q = random_simplex(blocks.len(), &mut r);
        for (b, w) in blocks.iter_mut().zip(q) {
            b.weights.push(w);
        }
    }
    let support = spec.support_dim();
    let frame = random_isometry(ambient, support, &mut r);
    let mut off = 0;
    for b in &mut blocks {
        let width = b.dj * b.dk;
        b.iso = frame.columns(off, width).clone_owned();
        off += width;
    }
    let dec = KIDecomposition { ambient_dim: ambient, support_dim: support, blocks };
    let signals = (0..m)
        .map(|i| Ok((probs[i], dec.reconstruct(i)?)))
        .collect::<Result<Vec<_>>>()?;
    let ens = Ensemble::new(ambient, signals)?;
    // keep the rng draw count independent of validation outcomes
    let _: u8 = r.random();
    Ok((ens, dec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{levitin_holevo, von_neumann_entropy};
    use crate::matcore::{identity, isometry_defect, projector};
    use crate::sampling::{random_ensemble, random_psd, random_pure_ensemble, random_unitary};

    fn ket(d: usize, k: usize) -> CMatrix {
        let mut m = CMatrix::zeros(d, d);
        m[(k, k)] = C64::ONE;
        m
    }

    fn plus() -> CMatrix {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        projector(&[cr(s), cr(s)])
    }

    fn omega() -> CMatrix {
        diag(&[0.7, 0.3])
    }

    fn qubit_pair() -> Ensemble {
        Ensemble::new(2, vec![(0.5, ket(2, 0)), (0.5, plus())]).unwrap()
    }

    fn redundant_pair() -> Ensemble {
        Ensemble::new(4, vec![(0.5, kron(&ket(2, 0), &omega())), (0.5, kron(&plus(), &omega()))])
            .unwrap()
    }

    fn pair_entropy() -> f64 {
        // eigenvalues (1 +- 1/sqrt2)/2 of the qubit-pair average
        let l = (1.0 + std::f64::consts::FRAC_1_SQRT_2) / 2.0;
        -l * l.log2() - (1.0 - l) * (1.0 - l).log2()
    }

    fn check_invariants(d: &KIDecomposition, e: &Ensemble) {
        let total: usize = d.blocks.iter().map(|b| b.dj * b.dk).sum();
        assert_eq!(total, d.support_dim);
        for (x, b) in d.blocks.iter().enumerate() {
            assert!(isometry_defect(&b.iso) < 1e-9);
            for c in d.blocks.iter().skip(x + 1) {
                assert!((b.iso.adjoint() * &c.iso).norm() < 1e-9);
            }
            let spec = b.rho_k_spectrum();
            assert!((spec.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(spec.windows(2).all(|w| w[0] >= w[1]));
            let gens: Vec<CMatrix> = (0..e.len())
                .filter(|&i| b.weights[i] > 0.0)
                .map(|i| &b.jstates[i] * cr(b.weights[i]))
                .collect();
            if b.dj > 1 {
                assert_eq!(commutant_basis(&gens, b.dj).unwrap().len(), 1);
            }
        }
        for row in d.q_matrix() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        }
        assert!(d.max_reconstruction_error(e).unwrap() <= 1e-8);
    }

    #[test]
    fn support_examples() {
        let mut r = rng(1);
        let full = Ensemble::new(3, vec![(1.0, identity(3) / cr(3.0))]).unwrap();
        let v = support_isometry(&full, DEFAULT_TOL).unwrap();
        assert_eq!(v.shape(), (3, 3));
        let single = Ensemble::new(3, vec![(1.0, ket(3, 0))]).unwrap();
        let v = support_isometry(&single, DEFAULT_TOL).unwrap();
        assert_eq!(v.ncols(), 1);
        assert!((v[(0, 0)].norm() - 1.0).abs() < 1e-12);

        // eigen-threshold oracle: rank-3 average in d = 5
        let a = crate::sampling::random_density(5, 2, &mut r);
        let b = crate::sampling::random_density(5, 1, &mut r);
        let e = Ensemble::new(5, vec![(0.5, a), (0.5, b)]).unwrap();
        let v = support_isometry(&e, DEFAULT_TOL).unwrap();
        assert_eq!(v.shape(), (5, 3));
        let p = &v * v.adjoint();
        let rho = total_state(&e);
        assert!(frobenius(&(&p * &rho - &rho)) < 1e-8);
        assert!(isometry_defect(&v) < 1e-9);
    }

    #[test]
    fn single_state_is_pure_redundancy() {
        let e = Ensemble::new(2, vec![(1.0, identity(2) / cr(2.0))]).unwrap();
        let d = ki_decompose(&e, DEFAULT_TOL).unwrap();
        assert_eq!(d.block_dims(), vec![(1, 2)]);
        assert!(frobenius(&(&d.blocks[0].rho_k - identity(2) / cr(2.0))) < 1e-9);
        check_invariants(&d, &e);
        let s = strip(&d, &e).unwrap();
        assert_eq!(s.dim(), 1);
        assert!((s.state(0)[(0, 0)].re - 1.0).abs() < 1e-12);
        assert!(i_r(&e).unwrap().abs() < 1e-9);
    }

    #[test]
    fn classical_pair_has_two_trivial_blocks() {
        let e = Ensemble::new(2, vec![(0.5, ket(2, 0)), (0.5, ket(2, 1))]).unwrap();
        let d = ki_decompose(&e, DEFAULT_TOL).unwrap();
        assert_eq!(d.block_dims(), vec![(1, 1), (1, 1)]);
        check_invariants(&d, &e);
        let s = strip(&d, &e).unwrap();
        let diag0: Vec<f64> = (0..2).map(|k| s.state(0)[(k, k)].re).collect();
        let diag1: Vec<f64> = (0..2).map(|k| s.state(1)[(k, k)].re).collect();
        assert!((diag0[0] + diag1[0] - 1.0).abs() < 1e-12);
        assert!((diag0[0] * diag1[0]).abs() < 1e-12);
        assert!((i_r(&e).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn qubit_pair_is_irreducible() {
        let e = qubit_pair();
        let d = ki_decompose(&e, DEFAULT_TOL).unwrap();
        assert_eq!(d.block_dims(), vec![(2, 1)]);
        check_invariants(&d, &e);
        assert!((i_r(&e).unwrap() - pair_entropy()).abs() < 1e-9);
        assert!((pair_entropy() - 0.600876).abs() < 1e-5);
    }

    #[test]
    fn tensor_redundancy_is_stripped() {
        let e = redundant_pair();
        let d = ki_decompose(&e, DEFAULT_TOL).unwrap();
        assert_eq!(d.block_dims(), vec![(2, 2)]);
        check_invariants(&d, &e);
        let spec = d.blocks[0].rho_k_spectrum();
        assert!((spec[0] - 0.7).abs() < 1e-9 && (spec[1] - 0.3).abs() < 1e-9);
        let ir = i_r(&e).unwrap();
        assert!((ir - 0.600876).abs() < 1e-5);
        // additivity oracle: S(rho) = S(sum p tau) + S(omega)
        let s_rho = von_neumann_entropy(&total_state(&e)).unwrap();
        let oracle = pair_entropy() + spectrum_entropy(&[0.7, 0.3]);
        assert!((s_rho - oracle).abs() < 1e-9);
        assert!((s_rho - 1.482167).abs() < 1e-5);
        // sigma_i = tau_i up to a unitary relabelling of J
        let s = strip(&d, &e).unwrap();
        let f = crate::ensemble::fidelity(s.state(0), s.state(1)).unwrap();
        assert!((f - 0.5).abs() < 1e-9);
    }

    #[test]
    fn planted_examples() {
        let (e, _) = gen_planted(&PlantedSpec::new(vec![(1, 1), (1, 1)], 2), 3).unwrap();
        assert_eq!(e.dim(), 2);
        assert_eq!(ki_decompose(&e, DEFAULT_TOL).unwrap().block_dims(), vec![(1, 1), (1, 1)]);

        let (e, _) = gen_planted(&PlantedSpec::new(vec![(2, 1)], 2), 4).unwrap();
        assert_eq!(ki_decompose(&e, DEFAULT_TOL).unwrap().block_dims(), vec![(2, 1)]);

        let spec = PlantedSpec::new(vec![(2, 2), (1, 3)], 3);
        let (e, oracle) = gen_planted(&spec, 42).unwrap();
        assert!(oracle.max_reconstruction_error(&e).unwrap() < 1e-10);
        let d = ki_decompose(&e, DEFAULT_TOL).unwrap();
        assert_eq!(d.block_dims(), vec![(2, 2), (1, 3)]);
        check_invariants(&d, &e);
        let want = oracle.reduced_entropy(&e.probs()).unwrap();
        assert!((i_r(&e).unwrap() - want).abs() < 1e-8);

        let spec = PlantedSpec::new(vec![(2, 2), (1, 3)], 3);
        let (e, _) = gen_planted(&spec, 7).unwrap();
        let d = ki_decompose(&e, DEFAULT_TOL).unwrap();
        assert_eq!(d.block_dims(), vec![(2, 2), (1, 3)]);
    }

    #[test]
    fn planted_is_deterministic_and_validated() {
        let spec = PlantedSpec { blocks: vec![(2, 1), (1, 2)], signals: 3, ambient_dim: Some(6) };
        let (a, _) = gen_planted(&spec, 9).unwrap();
        let (b, _) = gen_planted(&spec, 9).unwrap();
        assert_eq!(a.dim(), 6);
        for (x, y) in a.states().zip(b.states()) {
            assert_eq!(x, y);
        }
        assert!(gen_planted(&PlantedSpec::new(vec![(8, 9)], 2), 1).is_err());
        assert!(gen_planted(&PlantedSpec::new(vec![(2, 1)], 1), 1).is_err());
        assert!(gen_planted(&PlantedSpec::new(vec![(1, 1), (1, 1)], 1), 1).is_err());
        let single = gen_planted(&PlantedSpec::new(vec![(1, 3)], 1), 1).unwrap().0;
        assert_eq!(ki_decompose(&single, DEFAULT_TOL).unwrap().block_dims(), vec![(1, 3)]);
    }

    #[test]
    fn reconstruct_examples() {
        let e = qubit_pair();
        let d = ki_decompose(&e, DEFAULT_TOL).unwrap();
        let b = &d.blocks[0];
        let direct = &b.iso * (&b.jstates[1] * cr(b.weights[1])) * b.iso.adjoint();
        assert!(frobenius(&(reconstruct(&d, 1).unwrap() - direct)) < 1e-14);
        assert!(reconstruct(&d, 2).is_err());

        let e = Ensemble::new(3, vec![(0.5, ket(3, 0)), (0.5, ket(3, 1))]).unwrap();
        let d = ki_decompose(&e, DEFAULT_TOL).unwrap();
        assert_eq!(d.support_dim, 2);
        let zero_blocks = d.blocks.iter().filter(|b| b.weights[0] == 0.0).count();
        assert_eq!(zero_blocks, 1);
        check_invariants(&d, &e);
    }

    #[test]
    fn intertwiner_examples() {
        let mut r = rng(12);
        let a: Vec<CMatrix> = (0..2).map(|_| random_psd(3, 3, &mut r)).collect();
        let w = find_intertwiner(&a, &a, 1.0).unwrap().unwrap();
        assert!(frobenius(&(w - identity(3))) < 1e-8);
        let v = random_unitary(3, &mut r);
        let b: Vec<CMatrix> = a.iter().map(|x| &v * x * v.adjoint() * cr(0.5)).collect();
        let w = find_intertwiner(&a, &b, 0.5).unwrap().unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(frobenius(&(y - &w * x * w.adjoint() * cr(0.5))) <= 1e-8);
        }
        let other: Vec<CMatrix> = (0..2).map(|_| random_psd(3, 3, &mut r)).collect();
        assert!(find_intertwiner(&a, &other, 1.0).unwrap().is_none());
    }

    #[test]
    fn unitary_covariance() {
        let mut r = rng(30);
        for seed in 0..5 {
            let spec = PlantedSpec::new(vec![(2, 2), (1, 2), (1, 1)], 3);
            let (e, _) = gen_planted(&spec, 100 + seed).unwrap();
            let u = random_unitary(e.dim(), &mut r);
            let f = e.conjugated(&u).unwrap();
            let d1 = ki_decompose(&e, DEFAULT_TOL).unwrap();
            let d2 = ki_decompose(&f, DEFAULT_TOL).unwrap();
            assert_eq!(d1.block_dims(), d2.block_dims());
            assert!((i_r(&e).unwrap() - i_r(&f).unwrap()).abs() < 1e-8);
            let mut q1: Vec<Vec<f64>> = d1.blocks.iter().map(|b| b.weights.clone()).collect();
            let mut q2: Vec<Vec<f64>> = d2.blocks.iter().map(|b| b.weights.clone()).collect();
            q1.sort_by(|a, b| lexicographic_desc(a, b));
            q2.sort_by(|a, b| lexicographic_desc(a, b));
            for (x, y) in q1.iter().flatten().zip(q2.iter().flatten()) {
                assert!((x - y).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn pure_states_have_trivial_k() {
        let mut r = rng(31);
        for k in 0..10 {
            let e = random_pure_ensemble(2 + k % 4, 2 + k % 3, &mut r).unwrap();
            let d = ki_decompose(&e, DEFAULT_TOL).unwrap();
            assert!(d.blocks.iter().all(|b| b.dk == 1));
            let s = von_neumann_entropy(&total_state(&e)).unwrap();
            assert!((i_r(&e).unwrap() - s).abs() < 1e-8);
        }
    }

    #[test]
    fn rate_sits_between_holevo_and_entropy() {
        let mut r = rng(32);
        for k in 0..20 {
            let e = random_ensemble(2 + k % 6, 1 + k % 5, &mut r).unwrap();
            let ir = i_r(&e).unwrap();
            let s = von_neumann_entropy(&total_state(&e)).unwrap();
            let lh = levitin_holevo(&e).unwrap();
            assert!(lh - 1e-8 <= ir && ir <= s + 1e-8, "{lh} {ir} {s}");
        }
    }

    #[test]
    fn eigen_ensemble_matches_total_state() {
        let e = qubit_pair();
        let d = ki_decompose(&e, DEFAULT_TOL).unwrap();
        let ee = d.eigen_ensemble(&e).unwrap();
        assert!(frobenius(&(ee.total_state() - total_state(&e))) < 1e-9);
        let s = von_neumann_entropy(&total_state(&e)).unwrap();
        assert!((crate::ensemble::shannon_entropy(&ee.probs).unwrap() - s).abs() < 1e-9);
        let red = ki_decompose(&redundant_pair(), DEFAULT_TOL).unwrap();
        assert!(red.eigen_ensemble(&redundant_pair()).is_err());
    }
}
