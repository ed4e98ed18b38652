//! CPTP maps in operator-sum form.
//!
//! A [`QuantumChannel`] is either a plain Kraus set or a structured
//! composite: an `N`-fold tensor power of a site channel, or a chain of
//! channels applied in sequence. Composites are applied stage by stage and
//! only expanded into explicit Kraus operators on request, which keeps
//! `N`-site codecs cheap to build and apply.

use std::collections::BTreeMap;

use crate::ensemble::{fidelity, EigenEnsemble, Ensemble};
use crate::error::{ensure_dim, validation, Error, Result};
use crate::kidecomp::KIDecomposition;
use crate::matcore::{cr, frobenius, herm_eig, hermitian_part, kron, kron_all, partial_trace, CMatrix, C64};
use crate::sampling::{random_isometry, rng};

/// Trace-preservation tolerance for validated Kraus sets.
pub const TP_TOL: f64 = 1e-9;

/// Largest composite dimension (`d^N`) handled by tensor powers and
/// induced site maps.
pub const MAX_COMPOSITE_DIM: usize = 4096;

/// Eigenvalues of a Choi matrix below `-CHOI_CLAMP` are rejected.
pub const CHOI_CLAMP: f64 = 1e-8;

const MAX_KRAUS_ENTRIES: usize = 1 << 24;

/// One Kraus operator, dense or as `(row, col, value)` triplets.
#[derive(Debug, Clone)]
pub enum KrausOp {
    Dense(CMatrix),
    Sparse { rows: usize, cols: usize, entries: Vec<(usize, usize, C64)> },
}

impl KrausOp {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            KrausOp::Dense(m) => m.shape(),
            KrausOp::Sparse { rows, cols, .. } => (*rows, *cols),
        }
    }

    pub fn to_dense(&self) -> CMatrix {
        match self {
            KrausOp::Dense(m) => m.clone(),
            KrausOp::Sparse { rows, cols, entries } => {
                let mut m = CMatrix::zeros(*rows, *cols);
                for &(r, k, v) in entries {
                    m[(r, k)] += v;
                }
                m
            }
        }
    }

    fn accumulate(&self, rho: &CMatrix, out: &mut CMatrix) {
        match self {
            KrausOp::Dense(k) => *out += k * rho * k.adjoint(),
            KrausOp::Sparse { entries, .. } => {
                for &(r1, c1, v1) in entries {
                    for &(r2, c2, v2) in entries {
                        out[(r1, r2)] += v1 * rho[(c1, c2)] * v2.conj();
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Repr {
    Kraus(Vec<KrausOp>),
    Power { site: Box<QuantumChannel>, n: usize },
    Chain(Vec<QuantumChannel>),
}

#[derive(Debug, Clone)]
pub struct QuantumChannel {
    in_dim: usize,
    out_dim: usize,
    repr: Repr,
}

impl QuantumChannel {
    /// Validated Kraus set: shapes must be `out_dim x in_dim` and
    /// `sum K^dag K` must equal the identity within [`TP_TOL`].
    pub fn from_kraus(in_dim: usize, out_dim: usize, kraus: Vec<CMatrix>) -> Result<Self> {
        let ch = Self::from_kraus_unchecked(in_dim, out_dim, kraus);
        ch.check_shapes()?;
        ch.check_tp(TP_TOL)?;
        Ok(ch)
    }

    pub fn from_kraus_unchecked(in_dim: usize, out_dim: usize, kraus: Vec<CMatrix>) -> Self {
        Self {
            in_dim,
            out_dim,
            repr: Repr::Kraus(kraus.into_iter().map(KrausOp::Dense).collect()),
        }
    }

    /// Validated Kraus set given as sparse triplets.
    pub fn from_sparse(
        in_dim: usize,
        out_dim: usize,
        ops: Vec<Vec<(usize, usize, C64)>>,
    ) -> Result<Self> {
        let ch = Self {
            in_dim,
            out_dim,
            repr: Repr::Kraus(
                ops.into_iter()
                    .map(|entries| KrausOp::Sparse { rows: out_dim, cols: in_dim, entries })
                    .collect(),
            ),
        };
        ch.check_shapes()?;
        ch.check_tp(TP_TOL)?;
        Ok(ch)
    }

    pub fn identity(d: usize) -> Self {
        Self::from_kraus_unchecked(d, d, vec![CMatrix::identity(d, d)])
    }

    pub fn unitary(u: &CMatrix) -> Result<Self> {
        if !u.is_square() {
            return Err(validation("unitary channel needs a square matrix"));
        }
        Self::from_kraus(u.ncols(), u.nrows(), vec![u.clone()])
    }

    /// `X -> Tr(X) * state`.
    pub fn constant(in_dim: usize, state: &CMatrix) -> Result<Self> {
        let out_dim = state.nrows();
        let eig = herm_eig(&hermitian_part(state))?;
        let mut ops = Vec::new();
        for m in 0..out_dim {
            let lambda = eig.values[m];
            if lambda <= 0.0 {
                continue;
            }
            let col = eig.vectors.column(m) * cr(lambda.sqrt());
            for j in 0..in_dim {
                let mut k = CMatrix::zeros(out_dim, in_dim);
                k.set_column(j, &col);
                ops.push(k);
            }
        }
        Self::from_kraus(in_dim, out_dim, ops)
    }

    /// Completely depolarizing channel, Kraus `{|j><k| / sqrt(d)}`.
    pub fn depolarizing(d: usize) -> Self {
        let s = cr(1.0 / (d as f64).sqrt());
        let ops = (0..d * d)
            .map(|x| {
                let mut k = CMatrix::zeros(d, d);
                k[(x / d, x % d)] = s;
                k
            })
            .collect();
        Self::from_kraus_unchecked(d, d, ops)
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Number of Kraus operators after full expansion.
    pub fn kraus_len(&self) -> usize {
        match &self.repr {
            Repr::Kraus(ops) => ops.len(),
            Repr::Power { site, n } => site.kraus_len().saturating_pow(*n as u32),
            Repr::Chain(stages) => stages.iter().fold(1usize, |acc, s| acc.saturating_mul(s.kraus_len())),
        }
    }

    /// Explicit Kraus operators; composites are expanded.
    pub fn kraus(&self) -> Result<Vec<CMatrix>> {
        let entries = self.kraus_len().saturating_mul(self.in_dim * self.out_dim);
        if entries > MAX_KRAUS_ENTRIES {
            return Err(Error::CapExceeded(format!(
                "expanding {} Kraus operators of size {}x{} exceeds the materialization cap",
                self.kraus_len(),
                self.out_dim,
                self.in_dim
            )));
        }
        Ok(match &self.repr {
            Repr::Kraus(ops) => ops.iter().map(KrausOp::to_dense).collect(),
            Repr::Power { site, n } => {
                let base = site.kraus()?;
                let mut acc = vec![CMatrix::identity(1, 1)];
                for _ in 0..*n {
                    acc = acc.iter().flat_map(|a| base.iter().map(move |b| kron(a, b))).collect();
                }
                acc
            }
            Repr::Chain(stages) => {
                let mut acc = vec![CMatrix::identity(self.in_dim, self.in_dim)];
                for stage in stages {
                    let ops = stage.kraus()?;
                    acc = acc.iter().flat_map(|a| ops.iter().map(move |k| k * a)).collect();
                }
                acc
            }
        })
    }

    /// `Phi(rho)`. Accepts any operator of the right size, so the map can be
    /// evaluated on matrix units.
    pub fn apply(&self, rho: &CMatrix) -> Result<CMatrix> {
        ensure_dim(self.in_dim, rho.nrows())?;
        ensure_dim(self.in_dim, rho.ncols())?;
        Ok(self.apply_unchecked(rho))
    }

    /// `Phi(f_1 (x) ... (x) f_N)`; tensor powers act factor by factor.
    pub fn apply_product(&self, factors: &[&CMatrix]) -> Result<CMatrix> {
        match &self.repr {
            Repr::Power { site, n } if factors.len() == *n => {
                let outs = factors.iter().map(|f| site.apply(f)).collect::<Result<Vec<_>>>()?;
                Ok(kron_all(&outs))
            }
            Repr::Chain(stages) => {
                let mut cur = stages[0].apply_product(factors)?;
                for stage in &stages[1..] {
                    cur = stage.apply(&cur)?;
                }
                Ok(cur)
            }
            _ => self.apply(&kron_all(factors.iter().copied())),
        }
    }

    fn apply_unchecked(&self, rho: &CMatrix) -> CMatrix {
        match &self.repr {
            Repr::Kraus(ops) => {
                let mut out = CMatrix::zeros(self.out_dim, self.out_dim);
                for op in ops {
                    op.accumulate(rho, &mut out);
                }
                out
            }
            Repr::Power { site, n } => {
                let ops: Vec<CMatrix> = site
                    .kraus()
                    .expect("site channel of a tensor power is small");
                let (din, dout) = (site.in_dim, site.out_dim);
                let mut cur = rho.clone();
                for s in 0..*n {
                    let pre = dout.pow(s as u32);
                    let post = din.pow((*n - 1 - s) as u32);
                    let size = pre * dout * post;
                    let mut next = CMatrix::zeros(size, size);
                    for k in &ops {
                        let half = left_slot(&cur, pre, post, k).adjoint();
                        next += left_slot(&half, pre, post, k).adjoint();
                    }
                    cur = next;
                }
                cur
            }
            Repr::Chain(stages) => {
                let mut cur = rho.clone();
                for stage in stages {
                    cur = stage.apply_unchecked(&cur);
                }
                cur
            }
        }
    }

    /// `C^(x)N`, kept in factored form.
    pub fn tensor_power(&self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(validation("tensor power needs N >= 1"));
        }
        let dim_in = checked_pow(self.in_dim, n)?;
        let dim_out = checked_pow(self.out_dim, n)?;
        if n == 1 {
            return Ok(self.clone());
        }
        Ok(Self { in_dim: dim_in, out_dim: dim_out, repr: Repr::Power { site: Box::new(self.clone()), n } })
    }

    /// `next o self`.
    pub fn then(&self, next: &QuantumChannel) -> Result<Self> {
        ensure_dim(self.out_dim, next.in_dim)?;
        let mut stages = Vec::new();
        for ch in [self, next] {
            match &ch.repr {
                Repr::Chain(inner) => stages.extend(inner.iter().cloned()),
                _ => stages.push(ch.clone()),
            }
        }
        Ok(Self { in_dim: self.in_dim, out_dim: next.out_dim, repr: Repr::Chain(stages) })
    }

    /// Largest `|| sum K^dag K - I ||_F` over the stages of the channel.
    pub fn tp_defect(&self) -> f64 {
        match &self.repr {
            Repr::Kraus(ops) => kraus_tp_defect(ops, self.in_dim),
            Repr::Power { site, .. } => site.tp_defect(),
            Repr::Chain(stages) => stages.iter().map(QuantumChannel::tp_defect).fold(0.0, f64::max),
        }
    }

    /// Choi matrix `sum_ab |a><b| (x) Phi(|a><b|)`, indexed `a * out + o`.
    pub fn choi(&self) -> Result<CMatrix> {
        if self.in_dim * self.out_dim > MAX_COMPOSITE_DIM {
            return Err(Error::CapExceeded(format!(
                "Choi matrix of a {}->{} channel is too large",
                self.in_dim, self.out_dim
            )));
        }
        choi_from_map(self.in_dim, self.out_dim, |x| Ok(self.apply_unchecked(x)))
    }

    fn check_shapes(&self) -> Result<()> {
        if let Repr::Kraus(ops) = &self.repr {
            for op in ops {
                if op.shape() != (self.out_dim, self.in_dim) {
                    return Err(validation(format!(
                        "Kraus operator has shape {:?}, expected {}x{}",
                        op.shape(),
                        self.out_dim,
                        self.in_dim
                    )));
                }
                if let KrausOp::Sparse { entries, .. } = op {
                    if entries.iter().any(|&(r, k, _)| r >= self.out_dim || k >= self.in_dim) {
                        return Err(validation("sparse Kraus entry out of range"));
                    }
                }
            }
        }
        Ok(())
    }

    fn check_tp(&self, tol: f64) -> Result<()> {
        let defect = self.tp_defect();
        if defect > tol {
            return Err(validation(format!(
                "Kraus set is not trace preserving (defect {defect:.3e})"
            )));
        }
        Ok(())
    }
}

fn checked_pow(base: usize, n: usize) -> Result<usize> {
    let mut acc = 1usize;
    for _ in 0..n {
        acc = acc.saturating_mul(base);
        if acc > MAX_COMPOSITE_DIM {
            return Err(Error::CapExceeded(format!(
                "{base}^{n} exceeds the composite dimension cap {MAX_COMPOSITE_DIM}"
            )));
        }
    }
    Ok(acc)
}

/// `(I_pre (x) K (x) I_post) m`, rows of `m` laid out as `(pre, in, post)`.
fn left_slot(m: &CMatrix, pre: usize, post: usize, k: &CMatrix) -> CMatrix {
    let (dout, din) = k.shape();
    let mut out = CMatrix::zeros(pre * dout * post, m.ncols());
    for col in 0..m.ncols() {
        let src = m.column(col);
        let mut dst = out.column_mut(col);
        for p in 0..pre {
            for a in 0..din {
                let from = (p * din + a) * post;
                for o in 0..dout {
                    let kv = k[(o, a)];
                    if kv == C64::ZERO {
                        continue;
                    }
                    let to = (p * dout + o) * post;
                    for q in 0..post {
                        dst[to + q] += kv * src[from + q];
                    }
                }
            }
        }
    }
    out
}

fn kraus_tp_defect(ops: &[KrausOp], in_dim: usize) -> f64 {
    if ops.iter().all(|op| matches!(op, KrausOp::Dense(_))) {
        let mut sum = CMatrix::zeros(in_dim, in_dim);
        for op in ops {
            if let KrausOp::Dense(k) = op {
                sum += k.adjoint() * k;
            }
        }
        return frobenius(&(sum - CMatrix::identity(in_dim, in_dim)));
    }
    let mut acc: BTreeMap<(usize, usize), C64> = BTreeMap::new();
    for op in ops {
        match op {
            KrausOp::Dense(k) => {
                let g = k.adjoint() * k;
                for i in 0..in_dim {
                    for j in 0..in_dim {
                        if g[(i, j)] != C64::ZERO {
                            *acc.entry((i, j)).or_default() += g[(i, j)];
                        }
                    }
                }
            }
            KrausOp::Sparse { entries, .. } => {
                let mut by_row: BTreeMap<usize, Vec<(usize, C64)>> = BTreeMap::new();
                for &(r, k, v) in entries {
                    by_row.entry(r).or_default().push((k, v));
                }
                for row in by_row.values() {
                    for &(c1, v1) in row {
                        for &(c2, v2) in row {
                            *acc.entry((c1, c2)).or_default() += v1.conj() * v2;
                        }
                    }
                }
            }
        }
    }
    let mut sq = 0.0;
    let mut seen_diag = 0;
    for (&(i, j), v) in &acc {
        let target = if i == j {
            seen_diag += 1;
            C64::ONE
        } else {
            C64::ZERO
        };
        sq += (v - target).norm_sqr();
    }
    sq += (in_dim - seen_diag) as f64;
    sq.sqrt()
}

fn choi_from_map(
    in_dim: usize,
    out_dim: usize,
    map: impl Fn(&CMatrix) -> Result<CMatrix>,
) -> Result<CMatrix> {
    let mut choi = CMatrix::zeros(in_dim * out_dim, in_dim * out_dim);
    for a in 0..in_dim {
        for b in 0..in_dim {
            let mut unit = CMatrix::zeros(in_dim, in_dim);
            unit[(a, b)] = C64::ONE;
            let img = map(&unit)?;
            choi.view_mut((a * out_dim, b * out_dim), (out_dim, out_dim)).copy_from(&img);
        }
    }
    Ok(choi)
}

/// Kraus recovery from a Choi matrix: eigenvalues below `-CHOI_CLAMP` are an
/// error, the rest are clamped at zero.
pub fn from_choi(in_dim: usize, out_dim: usize, choi: &CMatrix) -> Result<QuantumChannel> {
    ensure_dim(in_dim * out_dim, choi.nrows())?;
    let eig = herm_eig(&hermitian_part(choi))?;
    let min = eig.values.last().copied().unwrap_or(0.0);
    if min < -CHOI_CLAMP {
        return Err(Error::Numerical(format!(
            "map is not completely positive (Choi eigenvalue {min:.3e})"
        )));
    }
    let mut ops = Vec::new();
    for (m, &mu) in eig.values.iter().enumerate() {
        if mu <= 0.0 {
            continue;
        }
        let s = mu.sqrt();
        let v = eig.vectors.column(m);
        ops.push(CMatrix::from_fn(out_dim, in_dim, |o, a| v[a * out_dim + o] * s));
    }
    let ch = QuantumChannel::from_kraus_unchecked(in_dim, out_dim, ops);
    let defect = ch.tp_defect();
    if defect > CHOI_CLAMP {
        return Err(Error::Numerical(format!(
            "recovered map is not trace preserving (defect {defect:.3e})"
        )));
    }
    Ok(ch)
}

/// Columns `off..off+dj` of the reduced space, as an embedding `C^dj -> C^r`.
fn reduced_embedding(r: usize, off: usize, dj: usize) -> CMatrix {
    CMatrix::from_fn(r, dj, |i, a| if i == off + a { C64::ONE } else { C64::ZERO })
}

/// `Lambda_sigma_rho`: conjugate by each block isometry, discard the `K`
/// factor and place the `J` part in the reduced layout. The complement of
/// the support is sent to the first reduced basis state.
pub fn strip_channel(d: &KIDecomposition) -> Result<QuantumChannel> {
    let r = d.reduced_dim();
    let mut ops = Vec::new();
    for (b, off) in d.blocks.iter().zip(d.reduced_offsets()) {
        let embed = reduced_embedding(r, off, b.dj);
        for k in 0..b.dk {
            let cols: Vec<usize> = (0..b.dj).map(|a| a * b.dk + k).collect();
            let slice = b.iso.select_columns(&cols);
            ops.push(&embed * slice.adjoint());
        }
    }
    let comp = d.complement_basis()?;
    for m in 0..comp.ncols() {
        let mut k = CMatrix::zeros(r, d.ambient_dim);
        k.set_row(0, &comp.column(m).adjoint());
        ops.push(k);
    }
    QuantumChannel::from_kraus(d.ambient_dim, r, ops)
}

/// `Lambda_rho_sigma`: attach `rho_K` in each block and embed through the
/// block isometry.
pub fn dress_channel(d: &KIDecomposition) -> Result<QuantumChannel> {
    let r = d.reduced_dim();
    let mut ops = Vec::new();
    for (b, off) in d.blocks.iter().zip(d.reduced_offsets()) {
        let embed = reduced_embedding(r, off, b.dj);
        for (m, lambda) in b.rho_k_spectrum().into_iter().enumerate() {
            let cols: Vec<usize> = (0..b.dj).map(|a| a * b.dk + m).collect();
            let slice = b.iso.select_columns(&cols) * cr(lambda.max(0.0).sqrt());
            ops.push(slice * embed.adjoint());
        }
    }
    QuantumChannel::from_kraus(r, d.ambient_dim, ops)
}

/// Default environment dimension `d^2` for preserving channels.
pub fn default_env_dim(d: usize) -> usize {
    d * d
}

/// Channel whose dilation is the identity on every `J` block tensored with
/// an independent random environment unitary per block:
/// `K_e = sum_l <e|v_l> P_l + <e|v_c> Q`, where `v = U_E|0>`.
pub fn preserving_channel(d: &KIDecomposition, env_dim: usize, seed: u64) -> Result<QuantumChannel> {
    if d.blocks.iter().any(|b| b.dk != 1) {
        return Err(validation(
            "preserving channel needs dK = 1 in every block; strip the ensemble first",
        ));
    }
    if env_dim == 0 {
        return Err(validation("environment dimension must be positive"));
    }
    let mut r = rng(seed);
    let mut env_vectors: Vec<CMatrix> = d
        .blocks
        .iter()
        .map(|_| random_isometry(env_dim, 1, &mut r))
        .collect();
    let projectors: Vec<CMatrix> = d.blocks.iter().map(|b| b.projector()).collect();
    let dim = d.ambient_dim;
    let mut q = CMatrix::identity(dim, dim);
    for p in &projectors {
        q -= p;
    }
    env_vectors.push(random_isometry(env_dim, 1, &mut r));
    let mut parts = projectors;
    parts.push(q);
    let ops = (0..env_dim)
        .map(|e| {
            let mut k = CMatrix::zeros(dim, dim);
            for (p, v) in parts.iter().zip(&env_vectors) {
                k += p * v[(e, 0)];
            }
            k
        })
        .collect();
    QuantumChannel::from_kraus(dim, dim, ops)
}

/// `f = 1 - sum_i p_i F(rho_i, C(rho_i))`.
pub fn f_measure(ch: &QuantumChannel, e: &Ensemble) -> Result<f64> {
    ensure_dim(ch.in_dim(), e.dim())?;
    ensure_dim(ch.out_dim(), e.dim())?;
    let mut kept = 0.0;
    for s in e.signals() {
        kept += s.prob * fidelity(&s.state, &ch.apply(&s.state)?)?;
    }
    Ok((1.0 - kept).clamp(0.0, 1.0))
}

/// `p_e = 1 - sum p_ls <ls| C(|ls><ls|) |ls>`.
pub fn error_prob(ch: &QuantumChannel, p: &EigenEnsemble) -> Result<f64> {
    ensure_dim(ch.in_dim(), p.dim())?;
    ensure_dim(ch.out_dim(), p.dim())?;
    let mut kept = 0.0;
    for k in 0..p.len() {
        let v = p.vectors.column(k);
        let out = ch.apply(&p.projector(k))?;
        kept += p.probs[k] * (v.adjoint() * out * v)[(0, 0)].re;
    }
    Ok((1.0 - kept).clamp(0.0, 1.0))
}

/// Number of sites `N` with `d^N = total`, if any.
pub fn site_count(d: usize, total: usize) -> Option<usize> {
    if d < 2 {
        return (total == 1).then_some(1);
    }
    let (mut acc, mut n) = (1usize, 0usize);
    while acc < total {
        acc *= d;
        n += 1;
    }
    (acc == total && n > 0).then_some(n)
}

/// Single-site map `X -> Tr_{!=k} Lambda(rho (x) .. X .. (x) rho)` with the
/// total state of `e` in every other slot, recovered in Kraus form from its
/// Choi matrix.
pub fn induced_site_channel(lambda: &QuantumChannel, e: &Ensemble, k: usize) -> Result<QuantumChannel> {
    let d = e.dim();
    let total = lambda.in_dim();
    if total > MAX_COMPOSITE_DIM {
        return Err(Error::CapExceeded(format!(
            "composite dimension {total} exceeds {MAX_COMPOSITE_DIM}"
        )));
    }
    ensure_dim(total, lambda.out_dim())?;
    let n = site_count(d, total).ok_or_else(|| {
        validation(format!("channel dimension {total} is not a power of {d}"))
    })?;
    if k >= n {
        return Err(validation(format!("site {k} out of range for N = {n}")));
    }
    let rho = crate::ensemble::total_state(e);
    let dims = vec![d; n];
    let choi = choi_from_map(d, d, |x| {
        let factors: Vec<&CMatrix> = (0..n).map(|s| if s == k { x } else { &rho }).collect();
        let input = kron_all(factors);
        partial_trace(&lambda.apply_unchecked(&input), &dims, &[k])
    })?;
    from_choi(d, d, &choi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{total_state, Ensemble};
    use crate::kidecomp::{gen_planted, ki_decompose, strip, PlantedSpec};
    use crate::matcore::{diag, identity, projector, DEFAULT_TOL};
    use crate::sampling::{random_channel, random_density, random_unitary};

    fn ket(d: usize, k: usize) -> CMatrix {
        let mut m = CMatrix::zeros(d, d);
        m[(k, k)] = C64::ONE;
        m
    }

    fn plus() -> CMatrix {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        projector(&[cr(s), cr(s)])
    }

    fn min_eig(m: &CMatrix) -> f64 {
        *herm_eig(&hermitian_part(m)).unwrap().values.last().unwrap()
    }

    #[test]
    fn apply_examples() {
        let mut r = rng(1);
        let rho = random_density(3, 3, &mut r);
        assert_eq!(QuantumChannel::identity(3).apply(&rho).unwrap(), rho);
        let dep = QuantumChannel::depolarizing(3).apply(&rho).unwrap();
        assert!(frobenius(&(dep - identity(3) / cr(3.0))) < 1e-12);
        let ch = random_channel(3, 4, 5, &mut r);
        assert!(ch.tp_defect() < 1e-9);
        let out = ch.apply(&rho).unwrap();
        assert!((crate::matcore::trace(&out).re - 1.0).abs() < 1e-9);
        assert!(min_eig(&out) > -1e-8);
        assert!(ch.apply(&identity(2)).is_err());
    }

    #[test]
    fn from_kraus_rejects_non_tp() {
        let k = identity(2) * cr(0.9);
        assert!(QuantumChannel::from_kraus(2, 2, vec![k]).is_err());
        assert!(QuantumChannel::from_kraus(2, 3, vec![identity(2)]).is_err());
    }

    #[test]
    fn tensor_power_examples() {
        let mut r = rng(2);
        let ch = random_channel(2, 2, 3, &mut r);
        let one = ch.tensor_power(1).unwrap();
        assert_eq!(one.kraus().unwrap().len(), 3);
        let id2 = QuantumChannel::identity(2).tensor_power(2).unwrap();
        let rho = random_density(4, 4, &mut r);
        assert!(frobenius(&(id2.apply(&rho).unwrap() - &rho)) < 1e-12);

        let a = random_density(2, 2, &mut r);
        let b = random_density(2, 1, &mut r);
        let pow = ch.tensor_power(2).unwrap();
        let got = pow.apply(&kron(&a, &b)).unwrap();
        let want = kron(&ch.apply(&a).unwrap(), &ch.apply(&b).unwrap());
        assert!(frobenius(&(got - want)) < 1e-12);

        // factored application agrees with the expanded Kraus set
        let mixed = random_density(4, 4, &mut r);
        let expanded = QuantumChannel::from_kraus(4, 4, pow.kraus().unwrap()).unwrap();
        assert_eq!(pow.kraus().unwrap().len(), 9);
        assert!(frobenius(&(pow.apply(&mixed).unwrap() - expanded.apply(&mixed).unwrap())) < 1e-12);

        // unequal input/output dims
        let up = random_channel(2, 3, 2, &mut r).tensor_power(3).unwrap();
        assert_eq!((up.in_dim(), up.out_dim()), (8, 27));
        let x = random_density(8, 3, &mut r);
        let direct = QuantumChannel::from_kraus(8, 27, up.kraus().unwrap()).unwrap();
        assert!(frobenius(&(up.apply(&x).unwrap() - direct.apply(&x).unwrap())) < 1e-12);

        assert!(matches!(ch.tensor_power(13), Err(Error::CapExceeded(_))));
    }

    #[test]
    fn chain_matches_kraus_products() {
        let mut r = rng(3);
        let a = random_channel(2, 3, 2, &mut r);
        let b = random_channel(3, 2, 2, &mut r);
        let ab = a.then(&b).unwrap();
        let rho = random_density(2, 2, &mut r);
        let want = b.apply(&a.apply(&rho).unwrap()).unwrap();
        assert!(frobenius(&(ab.apply(&rho).unwrap() - &want)) < 1e-12);
        let flat = QuantumChannel::from_kraus(2, 2, ab.kraus().unwrap()).unwrap();
        assert!(frobenius(&(flat.apply(&rho).unwrap() - want)) < 1e-12);
        assert!(a.then(&a).is_err());
    }

    #[test]
    fn sparse_matches_dense() {
        let entries = vec![
            vec![(0, 0, C64::ONE), (1, 2, C64::ONE)],
            vec![(0, 1, C64::ONE)],
        ];
        let sparse = QuantumChannel::from_sparse(3, 2, entries.clone()).unwrap();
        let dense = QuantumChannel::from_kraus(3, 2, sparse.kraus().unwrap()).unwrap();
        let mut r = rng(4);
        let rho = random_density(3, 3, &mut r);
        assert!(frobenius(&(sparse.apply(&rho).unwrap() - dense.apply(&rho).unwrap())) < 1e-14);
        assert!(QuantumChannel::from_sparse(3, 2, vec![vec![(0, 0, C64::ONE)]]).is_err());
    }

    #[test]
    fn choi_round_trip() {
        let mut r = rng(5);
        let ch = random_channel(3, 2, 4, &mut r);
        let choi = ch.choi().unwrap();
        assert!(min_eig(&choi) > -1e-10);
        let back = from_choi(3, 2, &choi).unwrap();
        let rho = random_density(3, 2, &mut r);
        assert!(frobenius(&(back.apply(&rho).unwrap() - ch.apply(&rho).unwrap())) < 1e-10);
        // transpose is positive but not completely positive
        let mut t = CMatrix::zeros(4, 4);
        for a in 0..2 {
            for b in 0..2 {
                t[(a * 2 + b, b * 2 + a)] = C64::ONE;
            }
        }
        assert!(from_choi(2, 2, &t).is_err());
    }

    fn redundant_pair() -> Ensemble {
        let omega = diag(&[0.7, 0.3]);
        Ensemble::new(4, vec![(0.5, kron(&ket(2, 0), &omega)), (0.5, kron(&plus(), &omega))]).unwrap()
    }

    fn check_interchange(e: &Ensemble) {
        let d = ki_decompose(e, DEFAULT_TOL).unwrap();
        let s = strip(&d, e).unwrap();
        let st = strip_channel(&d).unwrap();
        let dr = dress_channel(&d).unwrap();
        for i in 0..e.len() {
            let sigma = st.apply(e.state(i)).unwrap();
            assert!(frobenius(&(&sigma - s.state(i))) <= 1e-8);
            let back = dr.apply(s.state(i)).unwrap();
            assert!(frobenius(&(&back - e.state(i))) <= 1e-8);
            let round = st.apply(&back).unwrap();
            assert!(frobenius(&(round - s.state(i))) <= 1e-8);
        }
    }

    #[test]
    fn interchange_examples() {
        check_interchange(&redundant_pair());
        let d = ki_decompose(&redundant_pair(), DEFAULT_TOL).unwrap();
        let out = strip_channel(&d).unwrap().apply(&kron(&plus(), &diag(&[0.7, 0.3]))).unwrap();
        // tau up to the relabelling of J chosen by the decomposition
        assert!((min_eig(&out)).abs() < 1e-9 && (crate::matcore::trace(&out).re - 1.0).abs() < 1e-12);

        let single = Ensemble::new(2, vec![(1.0, diag(&[0.6, 0.4]))]).unwrap();
        let d = ki_decompose(&single, DEFAULT_TOL).unwrap();
        let rho1 = dress_channel(&d).unwrap().apply(&identity(1)).unwrap();
        assert!(frobenius(&(rho1 - diag(&[0.6, 0.4]))) < 1e-9);

        let mut r = rng(6);
        for seed in 0..5 {
            let spec = PlantedSpec { blocks: vec![(2, 2), (1, 3), (1, 1)], signals: 3, ambient_dim: Some(10) };
            check_interchange(&gen_planted(&spec, seed).unwrap().0);
            let e = crate::sampling::random_ensemble(4, 3, &mut r).unwrap();
            check_interchange(&e);
        }
    }

    #[test]
    fn strip_is_relabeling_without_redundancy() {
        let e = Ensemble::new(2, vec![(0.5, ket(2, 0)), (0.5, plus())]).unwrap();
        let d = ki_decompose(&e, DEFAULT_TOL).unwrap();
        let st = strip_channel(&d).unwrap().kraus().unwrap();
        assert_eq!(st.len(), 1);
        assert!(crate::matcore::isometry_defect(&st[0]) < 1e-12);
    }

    #[test]
    fn preserving_examples() {
        let e = Ensemble::new(2, vec![(0.5, ket(2, 0)), (0.5, plus())]).unwrap();
        let d = ki_decompose(&e, DEFAULT_TOL).unwrap();
        let ch = preserving_channel(&d, default_env_dim(2), 1).unwrap();
        let mut r = rng(7);
        let x = random_density(2, 2, &mut r);
        assert!(frobenius(&(ch.apply(&x).unwrap() - x)) < 1e-12);

        let cl = Ensemble::new(2, vec![(0.5, ket(2, 0)), (0.5, ket(2, 1))]).unwrap();
        let d = ki_decompose(&cl, DEFAULT_TOL).unwrap();
        let ch = preserving_channel(&d, 4, 3).unwrap();
        let diag_state = diag(&[0.3, 0.7]);
        assert!(frobenius(&(ch.apply(&diag_state).unwrap() - &diag_state)) < 1e-12);
        assert!(f_measure(&ch, &cl).unwrap() <= 1e-9);
        let p = d.eigen_ensemble(&cl).unwrap();
        assert!(error_prob(&ch, &p).unwrap() <= 1e-9);

        let red = ki_decompose(&redundant_pair(), DEFAULT_TOL).unwrap();
        assert!(preserving_channel(&red, 4, 1).is_err());
    }

    #[test]
    fn measure_examples() {
        let cl = Ensemble::new(2, vec![(0.5, ket(2, 0)), (0.5, ket(2, 1))]).unwrap();
        assert!(f_measure(&QuantumChannel::identity(2), &cl).unwrap() < 1e-12);
        let f = f_measure(&QuantumChannel::depolarizing(2), &cl).unwrap();
        assert!((f - 0.5).abs() < 1e-9);
        let d = ki_decompose(&cl, DEFAULT_TOL).unwrap();
        let p = d.eigen_ensemble(&cl).unwrap();
        assert!(error_prob(&QuantumChannel::identity(2), &p).unwrap() < 1e-12);
        assert!((error_prob(&QuantumChannel::depolarizing(2), &p).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn induced_site_examples() {
        let mut r = rng(8);
        let e = crate::sampling::random_ensemble(2, 2, &mut r).unwrap();
        let rho = total_state(&e);
        let id = QuantumChannel::identity(8);
        let site = induced_site_channel(&id, &e, 1).unwrap();
        let x = random_density(2, 2, &mut r);
        assert!(frobenius(&(site.apply(&x).unwrap() - &x)) < 1e-10);

        let rho3 = kron_all([&rho, &rho, &rho]);
        let replace = QuantumChannel::constant(8, &rho3).unwrap();
        let site = induced_site_channel(&replace, &e, 2).unwrap();
        assert!(frobenius(&(site.apply(&x).unwrap() - &rho)) < 1e-10);

        let u = random_unitary(8, &mut r);
        let lam = QuantumChannel::unitary(&u).unwrap();
        let site = induced_site_channel(&lam, &e, 0).unwrap();
        assert!(site.tp_defect() < 1e-8);
        assert!(min_eig(&site.choi().unwrap()) > -1e-8);

        assert!(induced_site_channel(&lam, &e, 3).is_err());
        let bad = QuantumChannel::identity(6);
        assert!(induced_site_channel(&bad, &e, 0).is_err());
    }

    #[test]
    fn fidelity_is_monotone_under_constructed_channels() {
        let mut r = rng(9);
        let spec = PlantedSpec::new(vec![(2, 2), (1, 2)], 3);
        let (e, _) = gen_planted(&spec, 5).unwrap();
        let d = ki_decompose(&e, DEFAULT_TOL).unwrap();
        let st = strip_channel(&d).unwrap();
        let dr = dress_channel(&d).unwrap();
        for _ in 0..10 {
            let a = random_density(6, 3, &mut r);
            let b = random_density(6, 2, &mut r);
            let f0 = fidelity(&a, &b).unwrap();
            let f1 = fidelity(&st.apply(&a).unwrap(), &st.apply(&b).unwrap()).unwrap();
            assert!(f1 >= f0 - 1e-8);
            let (x, y) = (random_density(3, 3, &mut r), random_density(3, 1, &mut r));
            let g0 = fidelity(&x, &y).unwrap();
            let g1 = fidelity(&dr.apply(&x).unwrap(), &dr.apply(&y).unwrap()).unwrap();
            assert!(g1 >= g0 - 1e-8);
        }
    }
}
