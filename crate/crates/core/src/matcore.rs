//! Dense complex matrix numerics.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>`. All metrics are the
//! Hilbert-Schmidt inner product `<A, B> = Tr(A^dag B)` and the Frobenius norm.
//! Structural rank decisions (commutants, intertwiners) go through a single
//! relative singular-value cutoff, [`DEFAULT_TOL`] unless overridden.

use std::ops::Range;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ensure_dim, validation, Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// Relative singular-value threshold used for rank and nullspace decisions.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Eigenvalue gap (relative to the spectral scale) below which eigenvalues of
/// a generic element are treated as one cluster when pre-reducing linear
/// systems. Over-merging only enlarges the unknown space, so this is loose.
const CLUSTER_TOL: f64 = 1e-5;

const HERMITIAN_TOL: f64 = 1e-10;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Real diagonal matrix.
pub fn diag(values: &[f64]) -> CMatrix {
    let n = values.len();
    CMatrix::from_fn(n, n, |i, j| if i == j { cr(values[i]) } else { C64::ZERO })
}

/// `|v><v|` for a column vector given as a slice.
pub fn projector(v: &[C64]) -> CMatrix {
    let n = v.len();
    CMatrix::from_fn(n, n, |i, j| v[i] * v[j].conj())
}

/// Rank-one projector on the `k`-th column of `m`.
pub fn column_projector(m: &CMatrix, k: usize) -> CMatrix {
    let col = m.column(k);
    col * col.adjoint()
}

/// Builds a matrix from a row-major slice.
pub fn from_row_major(rows: usize, cols: usize, entries: &[C64]) -> Result<CMatrix> {
    if entries.len() != rows * cols {
        return Err(validation(format!(
            "entry count {} does not match shape {rows}x{cols}",
            entries.len()
        )));
    }
    Ok(CMatrix::from_row_slice(rows, cols, entries))
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.norm()
}

/// `Tr(A^dag B)`.
pub fn hs_inner(a: &CMatrix, b: &CMatrix) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Largest entrywise deviation `max |M - M^dag|`.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * cr(0.5)
}

/// Maximum deviation of `U^dag U` from the identity.
pub fn isometry_defect(u: &CMatrix) -> f64 {
    let g = u.adjoint() * u;
    let n = g.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { C64::ONE } else { C64::ZERO };
            worst = worst.max((g[(i, j)] - target).norm());
        }
    }
    worst
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues in descending
/// order. Columns of `vectors` are the matching eigenvectors.
#[derive(Debug, Clone)]
pub struct HermEig {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermEig {
    pub fn reconstruct(&self) -> CMatrix {
        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.values.len(),
            self.values.iter().map(|&x| cr(x)),
        ));
        &self.vectors * d * self.vectors.adjoint()
    }

    /// Applies `f` to the spectrum: `V f(Lambda) V^dag`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let mut scaled = self.vectors.clone();
        for (k, &lam) in self.values.iter().enumerate() {
            scaled.column_mut(k).scale_mut(f(lam));
        }
        scaled * self.vectors.adjoint()
    }
}

/// Hermitian eigendecomposition. Rejects inputs that are not Hermitian within
/// `1e-10 * max(1, ||H||_F)`. Ties in the descending sort keep the solver's
/// output order.
pub fn herm_eig(h: &CMatrix) -> Result<HermEig> {
    if !h.is_square() {
        return Err(validation(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    let scale = frobenius(h).max(1.0);
    let defect = hermiticity_defect(h);
    if defect > HERMITIAN_TOL * scale {
        return Err(validation(format!(
            "matrix is not Hermitian (max |H - H^dag| = {defect:.3e})"
        )));
    }
    herm_eig_unchecked(&hermitian_part(h))
}

fn herm_eig_unchecked(h: &CMatrix) -> Result<HermEig> {
    let n = h.nrows();
    if n == 0 {
        return Ok(HermEig { values: vec![], vectors: CMatrix::zeros(0, 0) });
    }
    let eig = SymmetricEigen::try_new(h.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Numerical("Hermitian eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort: ties keep solver order
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(HermEig { values, vectors })
}

/// Principal square root of a positive semidefinite matrix. Eigenvalues down
/// to `-1e-6 * max(1, ||P||_F)` are clamped to zero; anything more negative is
/// rejected.
pub fn psd_sqrt(p: &CMatrix) -> Result<CMatrix> {
    let eig = herm_eig(p)?;
    let scale = frobenius(p).max(1.0);
    if let Some(&min) = eig.values.last() {
        if min < -1e-6 * scale {
            return Err(validation(format!(
                "matrix is not positive semidefinite (min eigenvalue {min:.3e})"
            )));
        }
    }
    Ok(eig.map_spectrum(|x| x.max(0.0).sqrt()))
}

/// Kronecker product with `(A (x) B)[i*rB + k, j*cB + l] = A[i,j] * B[k,l]`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = CMatrix::zeros(ra * rb, ca * cb);
    for j in 0..ca {
        for i in 0..ra {
            let s = a[(i, j)];
            if s == C64::ZERO {
                continue;
            }
            for l in 0..cb {
                for k in 0..rb {
                    out[(i * rb + k, j * cb + l)] = s * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Left-to-right Kronecker product of a list; the empty product is `[[1]]`.
pub fn kron_all<'a>(factors: impl IntoIterator<Item = &'a CMatrix>) -> CMatrix {
    factors
        .into_iter()
        .fold(CMatrix::identity(1, 1), |acc, f| kron(&acc, f))
}

/// Partial trace over every factor not listed in `keep`. The kept factors
/// retain their original relative order.
pub fn partial_trace(m: &CMatrix, dims: &[usize], keep: &[usize]) -> Result<CMatrix> {
    if !m.is_square() {
        return Err(validation("partial trace needs a square matrix"));
    }
    let total: usize = dims.iter().product();
    ensure_dim(total, m.nrows())?;
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if kept.iter().any(|&k| k >= dims.len()) {
        return Err(validation(format!(
            "kept factor index out of range for {} factors",
            dims.len()
        )));
    }
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !kept.contains(k)).collect();
    let kept_dims: Vec<usize> = kept.iter().map(|&k| dims[k]).collect();
    let traced_dims: Vec<usize> = traced.iter().map(|&k| dims[k]).collect();
    let out_dim: usize = kept_dims.iter().product();
    let env_dim: usize = traced_dims.iter().product();

    // strides of each factor in the full index
    let mut strides = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let compose = |kept_idx: usize, env_idx: usize| -> usize {
        let mut full = 0;
        let mut rem = kept_idx;
        for (pos, &k) in kept.iter().enumerate().rev() {
            full += (rem % kept_dims[pos]) * strides[k];
            rem /= kept_dims[pos];
        }
        let mut rem = env_idx;
        for (pos, &k) in traced.iter().enumerate().rev() {
            full += (rem % traced_dims[pos]) * strides[k];
            rem /= traced_dims[pos];
        }
        full
    };

    let index: Vec<Vec<usize>> = (0..out_dim)
        .map(|a| (0..env_dim).map(|e| compose(a, e)).collect())
        .collect();
    let mut out = CMatrix::zeros(out_dim, out_dim);
    for a in 0..out_dim {
        for b in 0..out_dim {
            let mut acc = C64::ZERO;
            for e in 0..env_dim {
                acc += m[(index[a][e], index[b][e])];
            }
            out[(a, b)] = acc;
        }
    }
    Ok(out)
}

/// Orthonormal (Hilbert-Schmidt) basis of an operator subspace of `M_dim`.
#[derive(Debug, Clone)]
pub struct OperatorBasis {
    pub dim: usize,
    pub elements: Vec<CMatrix>,
}

impl OperatorBasis {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Orthogonal projection of `x` onto the span.
    pub fn project(&self, x: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim, self.dim);
        for e in &self.elements {
            out += e * hs_inner(e, x);
        }
        out
    }

    /// `||x - P(x)||_F`.
    pub fn residual(&self, x: &CMatrix) -> f64 {
        frobenius(&(x - self.project(x)))
    }

    /// Largest deviation of the Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, a) in self.elements.iter().enumerate() {
            for (j, b) in self.elements.iter().enumerate() {
                let target = if i == j { C64::ONE } else { C64::ZERO };
                worst = worst.max((hs_inner(a, b) - target).norm());
            }
        }
        worst
    }

    /// Largest residual of projecting each element of `other` onto this span.
    pub fn max_residual_of(&self, other: &OperatorBasis) -> f64 {
        other
            .elements
            .iter()
            .map(|x| self.residual(x))
            .fold(0.0, f64::max)
    }
}

/// Incremental real Gram-Schmidt over Hermitian matrices (their HS inner
/// products are real).
struct HermitianSpan {
    dim: usize,
    elements: Vec<CMatrix>,
}

impl HermitianSpan {
    fn new(dim: usize) -> Self {
        Self { dim, elements: Vec::new() }
    }

    /// Adds the component of `h` orthogonal to the span if its norm exceeds
    /// `rel_tol * ||h||`. Returns whether the span grew.
    fn push(&mut self, h: &CMatrix, rel_tol: f64) -> bool {
        self.push_relative(h, rel_tol, frobenius(h))
    }

    /// As `push`, measuring the residual against `reference` instead.
    fn push_relative(&mut self, h: &CMatrix, rel_tol: f64, reference: f64) -> bool {
        let norm0 = reference;
        if norm0 == 0.0 || self.elements.len() >= self.dim * self.dim {
            return false;
        }
        let mut r = h.clone();
        // two passes of classical Gram-Schmidt
        for _ in 0..2 {
            for e in &self.elements {
                let coef = hs_inner(e, &r).re;
                r -= e * cr(coef);
            }
        }
        let norm = frobenius(&r);
        if norm <= rel_tol * norm0 {
            return false;
        }
        r /= cr(norm);
        self.elements.push(hermitian_part(&r));
        true
    }

    fn push_parts(&mut self, x: &CMatrix, rel_tol: f64) -> usize {
        let re = hermitian_part(x);
        let im = (x - x.adjoint()) * c(0.0, -0.5);
        let reference = frobenius(x);
        self.push_relative(&re, rel_tol, reference) as usize
            + self.push_relative(&im, rel_tol, reference) as usize
    }

    fn into_basis(self) -> OperatorBasis {
        OperatorBasis { dim: self.dim, elements: self.elements }
    }
}

/// Orthonormal Hermitian basis of the smallest adjoint-closed unital algebra
/// containing `generators`.
pub fn algebra_closure(generators: &[CMatrix], dim: usize) -> Result<OperatorBasis> {
    for g in generators {
        if g.shape() != (dim, dim) {
            return Err(validation(format!(
                "generator shape {:?} does not match dimension {dim}",
                g.shape()
            )));
        }
    }
    const REL: f64 = 1e-8;
    let mut span = HermitianSpan::new(dim);
    span.push(&identity(dim), REL);
    let mut gens: Vec<CMatrix> = Vec::new();
    for g in generators {
        let before = span.elements.len();
        span.push_parts(g, REL);
        gens.extend(span.elements[before..].iter().cloned());
    }
    let mut frontier = 0;
    while frontier < span.elements.len() {
        let end = span.elements.len();
        for k in frontier..end {
            for g in &gens {
                let prod = &span.elements[k] * g;
                span.push_parts(&prod, REL);
            }
        }
        frontier = end;
    }
    Ok(span.into_basis())
}

/// Orthonormal Hermitian basis of the commutant `{X : XG = GX for all G}`
/// with the default tolerance.
pub fn commutant_basis(generators: &[CMatrix], dim: usize) -> Result<OperatorBasis> {
    commutant_basis_with_tol(generators, dim, DEFAULT_TOL)
}

/// Commutant with an explicit relative singular-value cutoff.
///
/// Hermitian generator sets are reduced first: every commutant element also
/// commutes with a generic real combination `G` of the generators, so it is
/// block diagonal over the (clustered) eigenspaces of `G`. The nullspace of
/// the stacked maps `X -> XG_k - G_kX` is then solved over those blocks only.
/// Non-Hermitian sets are solved over all of `M_dim`.
pub fn commutant_basis_with_tol(
    generators: &[CMatrix],
    dim: usize,
    tol: f64,
) -> Result<OperatorBasis> {
    for g in generators {
        if g.shape() != (dim, dim) {
            return Err(validation(format!(
                "generator shape {:?} does not match dimension {dim}",
                g.shape()
            )));
        }
    }
    let scale = generators.iter().map(frobenius).fold(0.0, f64::max);
    let null: Vec<CMatrix> = if generators.is_empty() || scale == 0.0 {
        full_matrix_units(dim)
    } else if generators
        .iter()
        .all(|g| hermiticity_defect(g) <= HERMITIAN_TOL * frobenius(g).max(1.0))
    {
        reduced_commutant(generators, dim, tol)?
    } else {
        stacked_commutant(generators, dim, tol)
    };
    let mut span = HermitianSpan::new(dim);
    span.push(&identity(dim), 1e-6);
    for x in &null {
        if span.elements.len() == null.len() {
            break;
        }
        span.push_parts(x, 1e-6);
    }
    Ok(span.into_basis())
}

fn full_matrix_units(dim: usize) -> Vec<CMatrix> {
    let mut out = Vec::with_capacity(dim * dim);
    for a in 0..dim {
        for b in 0..dim {
            let mut e = CMatrix::zeros(dim, dim);
            e[(a, b)] = C64::ONE;
            out.push(e);
        }
    }
    out
}

fn stacked_commutant(generators: &[CMatrix], dim: usize, tol: f64) -> Vec<CMatrix> {
    let n2 = dim * dim;
    let mut a = CMatrix::zeros(generators.len() * n2, n2);
    for (k, g) in generators.iter().enumerate() {
        let off = k * n2;
        // unknown X = E_{ab}: residual E_ab G - G E_ab
        for x in 0..dim {
            for y in 0..dim {
                let col = x * dim + y;
                for j in 0..dim {
                    a[(off + x * dim + j, col)] += g[(y, j)];
                }
                for i in 0..dim {
                    a[(off + i * dim + y, col)] -= g[(i, x)];
                }
            }
        }
    }
    let scale = generators.iter().map(frobenius).fold(0.0, f64::max);
    nullspace_scaled(&a, tol, scale)
        .column_iter()
        .map(|v| CMatrix::from_fn(dim, dim, |x, y| v[x * dim + y]))
        .collect()
}

fn reduced_commutant(generators: &[CMatrix], dim: usize, tol: f64) -> Result<Vec<CMatrix>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_c0de ^ ((dim as u64) << 16) ^ generators.len() as u64);
    let mut g = CMatrix::zeros(dim, dim);
    for gen in generators {
        let r: f64 = StandardNormal.sample(&mut rng);
        g += hermitian_part(gen) * cr(r);
    }
    let eig = herm_eig_unchecked(&g)?;
    let clusters = cluster_descending(&eig.values, CLUSTER_TOL);
    let v = &eig.vectors;
    let rotated: Vec<CMatrix> = generators.iter().map(|x| v.adjoint() * x * v).collect();

    let unknowns: Vec<(usize, usize)> = clusters
        .iter()
        .flat_map(|r| r.clone().flat_map(move |a| r.clone().map(move |b| (a, b))))
        .collect();
    let n2 = dim * dim;
    let mut a = CMatrix::zeros(generators.len() * n2, unknowns.len());
    for (k, gp) in rotated.iter().enumerate() {
        let off = k * n2;
        for (col, &(x, y)) in unknowns.iter().enumerate() {
            for j in 0..dim {
                a[(off + x * dim + j, col)] += gp[(y, j)];
            }
            for i in 0..dim {
                a[(off + i * dim + y, col)] -= gp[(i, x)];
            }
        }
    }
    let scale = generators.iter().map(frobenius).fold(0.0, f64::max);
    let null = nullspace_scaled(&a, tol, scale);
    Ok(null
        .column_iter()
        .map(|vec| {
            let mut xp = CMatrix::zeros(dim, dim);
            for (idx, &(x, y)) in unknowns.iter().enumerate() {
                xp[(x, y)] = vec[idx];
            }
            v * xp * v.adjoint()
        })
        .collect())
}

/// Groups a descending list into runs whose consecutive gaps are at most
/// `rel_tol` times the spectral scale.
pub fn cluster_descending(values: &[f64], rel_tol: f64) -> Vec<Range<usize>> {
    let scale = values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let gap = rel_tol * if scale > 0.0 { scale } else { 1.0 };
    let mut out = Vec::new();
    let mut start = 0;
    for k in 1..=values.len() {
        if k == values.len() || values[k - 1] - values[k] > gap {
            if k > start {
                out.push(start..k);
            }
            start = k;
        }
    }
    out
}

/// Orthonormal basis (as columns) of the nullspace of `a`: right singular
/// vectors whose singular value is at most `rel_tol * sigma_max`.
pub fn nullspace(a: &CMatrix, rel_tol: f64) -> CMatrix {
    nullspace_scaled(a, rel_tol, 0.0)
}

/// As [`nullspace`], with the cutoff taken relative to
/// `max(sigma_max, scale)` so a system that is zero up to rounding keeps its
/// full nullspace.
pub fn nullspace_scaled(a: &CMatrix, rel_tol: f64, scale: f64) -> CMatrix {
    let (rows, cols) = a.shape();
    if cols == 0 {
        return CMatrix::zeros(0, 0);
    }
    // nalgebra returns min(rows, cols) right vectors; pad so all are present.
    let padded;
    let a = if rows < cols {
        padded = {
            let mut p = CMatrix::zeros(cols, cols);
            p.view_mut((0, 0), (rows, cols)).copy_from(a);
            p
        };
        &padded
    } else {
        a
    };
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let smax = svd.singular_values.iter().fold(scale, |m, &s| m.max(s));
    let cut = rel_tol * smax;
    let null: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| smax == 0.0 || svd.singular_values[k] <= cut)
        .collect();
    CMatrix::from_fn(cols, null.len(), |i, j| v_t[(null[j], i)].conj())
}

/// Unitary factor of the polar decomposition `M = U |M|`.
pub fn polar_unitary(m: &CMatrix) -> CMatrix {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("left vectors requested");
    let v_t = svd.v_t.expect("right vectors requested");
    u * v_t
}

/// Rotates the global phase so the first entry (row-major) with modulus above
/// `1e-8` is real and positive.
pub fn fix_phase(m: &mut CMatrix) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            if z.norm() > 1e-8 {
                let phase = z.conj() / z.norm();
                *m *= phase;
                return;
            }
        }
    }
}

/// Deterministic real Gaussian coefficients for generic combinations.
pub(crate) fn generic_coefficients(seed: u64, count: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Intertwiner search used by both the merge step and its tests: a unitary
/// `W` with `B_i = c W A_i W^dag` for all `i`, found from the nullspace of
/// `B_i W - c W A_i` (pre-reduced over eigenspaces of a generic element).
/// Returns `None` unless that nullspace is one-dimensional and its polar
/// unitary meets the residual bound.
pub fn intertwiner(a: &[CMatrix], b: &[CMatrix], ratio: f64, tol: f64) -> Result<Option<CMatrix>> {
    if a.len() != b.len() || a.is_empty() {
        return Err(validation("intertwiner needs two non-empty families of equal length"));
    }
    let n = a[0].nrows();
    for m in a.iter().chain(b.iter()) {
        if m.shape() != (n, n) {
            return Err(validation("intertwiner families must share one square dimension"));
        }
    }
    let coef = generic_coefficients(0x1a7e_5eed ^ n as u64, a.len());
    let mut ga = CMatrix::zeros(n, n);
    let mut gb = CMatrix::zeros(n, n);
    for (k, r) in coef.iter().enumerate() {
        ga += hermitian_part(&a[k]) * cr(*r);
        gb += hermitian_part(&b[k]) * cr(*r);
    }
    let ea = herm_eig_unchecked(&ga)?;
    let eb = herm_eig_unchecked(&gb)?;
    let scale = ea
        .values
        .iter()
        .map(|x| (ratio * x).abs())
        .chain(eb.values.iter().map(|x| x.abs()))
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut unknowns = Vec::new();
    for (ib, nb) in eb.values.iter().enumerate() {
        for (ia, na) in ea.values.iter().enumerate() {
            if (nb - ratio * na).abs() <= CLUSTER_TOL * scale {
                unknowns.push((ib, ia));
            }
        }
    }
    if unknowns.is_empty() {
        return Ok(None);
    }
    let (va, vb) = (&ea.vectors, &eb.vectors);
    let n2 = n * n;
    let mut sys = CMatrix::zeros(a.len() * n2, unknowns.len());
    for k in 0..a.len() {
        let ap = va.adjoint() * &a[k] * va;
        let bp = vb.adjoint() * &b[k] * vb;
        let off = k * n2;
        for (col, &(x, y)) in unknowns.iter().enumerate() {
            // W' = E_xy : B' E_xy - c E_xy A'
            for i in 0..n {
                sys[(off + i * n + y, col)] += bp[(i, x)];
            }
            for j in 0..n {
                sys[(off + x * n + j, col)] -= cr(ratio) * ap[(y, j)];
            }
        }
    }
    let norms = a.iter().chain(b.iter()).map(frobenius).fold(0.0, f64::max);
    let null = nullspace_scaled(&sys, tol, norms * ratio.max(1.0));
    if null.ncols() != 1 {
        return Ok(None);
    }
    let mut wp = CMatrix::zeros(n, n);
    for (idx, &(x, y)) in unknowns.iter().enumerate() {
        wp[(x, y)] = null[(idx, 0)];
    }
    let mut w = vb * polar_unitary(&wp) * va.adjoint();
    fix_phase(&mut w);
    for k in 0..a.len() {
        let resid = frobenius(&(&b[k] - &w * &a[k] * w.adjoint() * cr(ratio)));
        if resid > 1e-8 * frobenius(&b[k]).max(1.0) {
            return Ok(None);
        }
    }
    Ok(Some(w))
}
