//! Block codes for `N` uses of an ensemble: typical-subspace codecs built on
//! the stripped ensemble, reference schemes, average fidelity, rate sweeps
//! and the per-site converse diagnostic.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::channels::{
    dress_channel, induced_site_channel, strip_channel, QuantumChannel, MAX_COMPOSITE_DIM,
};
use crate::ensemble::{fano_g, shannon_entropy, spectrum_entropy, total_state, Ensemble};
use crate::error::{validation, Error, Result};
use crate::kidecomp::{ki_decompose, strip};
use crate::matcore::{cr, herm_eig, hermitian_part, kron_all, CMatrix, C64, DEFAULT_TOL};
use crate::sampling::rng;

/// Largest number of sequences summed in exact mode.
pub const MAX_EXACT_SEQUENCES: usize = 65536;

/// Largest composite dimension accepted by [`converse_diagnostic`].
pub const MAX_DIAGNOSTIC_DIM: usize = 256;

const FIDELITY_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct CompressionScheme {
    pub n: usize,
    /// Dimension `d` of one signal.
    pub site_dim: usize,
    pub code_dim: usize,
    /// `d^N -> code_dim`.
    pub encoder: QuantumChannel,
    /// `code_dim -> d^N`.
    pub decoder: QuantumChannel,
    /// `log2(code_dim) / N`.
    pub rate: f64,
}

impl CompressionScheme {
    fn new(n: usize, site_dim: usize, encoder: QuantumChannel, decoder: QuantumChannel) -> Self {
        let code_dim = encoder.out_dim();
        Self { n, site_dim, code_dim, encoder, decoder, rate: (code_dim as f64).log2() / n as f64 }
    }

    /// `decoder o encoder` on `d^N`.
    pub fn round_trip(&self) -> Result<QuantumChannel> {
        self.encoder.then(&self.decoder)
    }

    /// Decoded output for the product input `f_1 (x) ... (x) f_N`.
    pub fn transmit(&self, factors: &[&CMatrix]) -> Result<CMatrix> {
        let code = self.encoder.apply_product(factors)?;
        self.decoder.apply(&code)
    }
}

/// Site channels and ordered spectrum from which typical codecs of any
/// `(N, rate)` are assembled.
#[derive(Debug, Clone)]
pub struct TypicalParts {
    /// `d -> r`, output in the eigenbasis of the site state.
    pub site_encoder: QuantumChannel,
    /// `r -> d`.
    pub site_decoder: QuantumChannel,
    /// Descending eigenvalues of the site state in that basis.
    pub spectrum: Vec<f64>,
}

impl TypicalParts {
    /// Strip, rotate into the eigenbasis of `sigma`; the decoder undoes both.
    pub fn stripped(e: &Ensemble) -> Result<Self> {
        Self::stripped_with_tol(e, DEFAULT_TOL)
    }

    pub fn stripped_with_tol(e: &Ensemble, tol: f64) -> Result<Self> {
        let d = ki_decompose(e, tol)?;
        let reduced = strip(&d, e)?;
        let eig = herm_eig(&total_state(&reduced))?;
        let rot = QuantumChannel::unitary(&eig.vectors.adjoint())?;
        let unrot = QuantumChannel::unitary(&eig.vectors)?;
        Ok(Self {
            site_encoder: strip_channel(&d)?.then(&rot)?,
            site_decoder: unrot.then(&dress_channel(&d)?)?,
            spectrum: eig.values,
        })
    }

    /// Same construction on the eigenbasis of `rho` itself, no stripping.
    pub fn unstripped(e: &Ensemble) -> Result<Self> {
        let eig = herm_eig(&total_state(e))?;
        Ok(Self {
            site_encoder: QuantumChannel::unitary(&eig.vectors.adjoint())?,
            site_decoder: QuantumChannel::unitary(&eig.vectors)?,
            spectrum: eig.values,
        })
    }

    /// Codec keeping the top `floor(2^(N rate))` product eigenvectors.
    pub fn codec(&self, n: usize, rate: f64) -> Result<CompressionScheme> {
        if !rate.is_finite() || rate < 0.0 {
            return Err(validation(format!("rate must be a non-negative number, got {rate}")));
        }
        if n == 0 {
            return Err(validation("block length N must be at least 1"));
        }
        let enc_power = self.site_encoder.tensor_power(n)?;
        let dec_power = self.site_decoder.tensor_power(n)?;
        let full = enc_power.out_dim();
        let code_dim = code_dimension(n, rate, full);
        let order = typical_order(&self.spectrum, n);

        let mut keep = vec![Vec::with_capacity(code_dim)];
        let mut in_code = vec![false; full];
        for (c, &idx) in order.iter().take(code_dim).enumerate() {
            keep[0].push((c, idx, C64::ONE));
            in_code[idx] = true;
        }
        // everything outside the code space goes to code word 0, the top
        // eigenvector
        let mut ops = keep;
        ops.extend((0..full).filter(|&m| !in_code[m]).map(|m| vec![(0, m, C64::ONE)]));
        let select = QuantumChannel::from_sparse(full, code_dim, ops)?;
        let embed_ops: Vec<_> = order.iter().take(code_dim).enumerate().map(|(c, &idx)| (idx, c, C64::ONE)).collect();
        let embed = QuantumChannel::from_sparse(code_dim, full, vec![embed_ops])?;

        let site_dim = self.site_encoder.in_dim();
        Ok(CompressionScheme::new(
            n,
            site_dim,
            enc_power.then(&select)?,
            embed.then(&dec_power)?,
        ))
    }
}

/// `min(floor(2^(N rate)), full)`, at least 1.
pub fn code_dimension(n: usize, rate: f64, full: usize) -> usize {
    let raw = (2f64.powf(n as f64 * rate) * (1.0 + 1e-12)).floor();
    if raw >= full as f64 {
        full
    } else {
        (raw as usize).max(1)
    }
}

/// Flat indices of `r^N` ordered by descending eigenvalue product, ties by
/// index. Products are formed from symbol counts so equal multisets give
/// bit-identical values.
fn typical_order(spectrum: &[f64], n: usize) -> Vec<usize> {
    let r = spectrum.len();
    let full = r.pow(n as u32);
    let mut keyed: Vec<(f64, usize)> = (0..full)
        .map(|idx| {
            let mut counts = vec![0i32; r];
            let mut x = idx;
            for _ in 0..n {
                counts[x % r] += 1;
                x /= r;
            }
            let weight = counts
                .iter()
                .zip(spectrum)
                .fold(1.0, |acc, (&k, &l)| acc * l.max(0.0).powi(k));
            (weight, idx)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, idx)| idx).collect()
}

/// Strip, project onto the typical subspace of `sigma^(x)N`, dress.
pub fn typical_codec(e: &Ensemble, n: usize, rate: f64) -> Result<CompressionScheme> {
    TypicalParts::stripped(e)?.codec(n, rate)
}

/// The same scheme built on the eigenbasis of `rho`, without stripping.
pub fn typical_codec_unstripped(e: &Ensemble, n: usize, rate: f64) -> Result<CompressionScheme> {
    TypicalParts::unstripped(e)?.codec(n, rate)
}

/// Lossless reference scheme: `code_dim = d^N`, both maps the identity.
pub fn identity_scheme(e: &Ensemble, n: usize) -> Result<CompressionScheme> {
    let id = QuantumChannel::identity(e.dim()).tensor_power(n)?;
    Ok(CompressionScheme::new(n, e.dim(), id.clone(), id))
}

/// One-dimensional code whose decoder always emits `output`.
pub fn constant_scheme_with_output(d: usize, n: usize, output: &CMatrix) -> Result<CompressionScheme> {
    let total = checked_site_power(d, n)?;
    crate::error::ensure_dim(total, output.nrows())?;
    let encoder = QuantumChannel::from_sparse(total, 1, (0..total).map(|j| vec![(0, j, C64::ONE)]).collect())?;
    let decoder = QuantumChannel::constant(1, output)?;
    Ok(CompressionScheme::new(n, d, encoder, decoder))
}

/// Constant scheme emitting the product of top eigenvectors of `rho`.
pub fn constant_scheme(e: &Ensemble, n: usize) -> Result<CompressionScheme> {
    let eig = herm_eig(&total_state(e))?;
    let top = crate::matcore::column_projector(&eig.vectors, 0);
    let output = kron_all(std::iter::repeat_n(&top, n));
    constant_scheme_with_output(e.dim(), n, &output)
}

fn checked_site_power(d: usize, n: usize) -> Result<usize> {
    let total = (d as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if total > MAX_COMPOSITE_DIM as u128 {
        return Err(Error::CapExceeded(format!(
            "{d}^{n} exceeds the composite dimension cap {MAX_COMPOSITE_DIM}"
        )));
    }
    Ok(total as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FidelityMode {
    /// Sum over every sequence; capped at [`MAX_EXACT_SEQUENCES`].
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FidelityEstimate {
    pub mean: f64,
    /// Zero in exact mode.
    pub std_err: f64,
    /// Sequences enumerated or sampled.
    pub samples: usize,
}

/// Spectral data of each signal for evaluating `F(rho_lambda, .)`.
struct SignalRoots {
    /// `U diag(sqrt(mu))` restricted to the support.
    factors: Vec<CMatrix>,
}

impl SignalRoots {
    fn new(e: &Ensemble) -> Result<Self> {
        let factors = e
            .states()
            .map(|rho| {
                let eig = herm_eig(&hermitian_part(rho))?;
                let top = eig.values[0];
                let keep: Vec<usize> = (0..rho.nrows())
                    .filter(|&k| eig.values[k] > FIDELITY_FLOOR * top)
                    .collect();
                Ok(CMatrix::from_fn(rho.nrows(), keep.len(), |i, j| {
                    eig.vectors[(i, keep[j])] * cr(eig.values[keep[j]].sqrt())
                }))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { factors })
    }

    /// `F(rho_seq, out)` from the eigenvalues of `A^dag out A` with
    /// `A = (x)_k U_k diag(sqrt(mu_k))`.
    fn fidelity(&self, seq: &[usize], out: &CMatrix) -> Result<f64> {
        let a = kron_all(seq.iter().map(|&i| &self.factors[i]));
        let k = hermitian_part(&(a.adjoint() * out * &a));
        let vals = herm_eig(&k)?.values;
        let top = vals.first().copied().unwrap_or(0.0).max(0.0);
        let root: f64 = vals
            .iter()
            .filter(|&&x| x > FIDELITY_FLOOR * top)
            .map(|x| x.sqrt())
            .sum();
        Ok((root * root).clamp(0.0, 1.0))
    }
}

fn sequence_of(mut idx: usize, m: usize, n: usize) -> Vec<usize> {
    let mut seq = vec![0; n];
    for slot in seq.iter_mut().rev() {
        *slot = idx % m;
        idx /= m;
    }
    seq
}

/// Average fidelity `sum_lambda p_lambda F(rho_lambda, Lambda_B Lambda_A rho_lambda)`.
/// Sequences are evaluated in parallel and summed in index order.
pub fn avg_fidelity(s: &CompressionScheme, e: &Ensemble, mode: FidelityMode) -> Result<FidelityEstimate> {
    crate::error::ensure_dim(s.site_dim, e.dim())?;
    let roots = SignalRoots::new(e)?;
    let m = e.len();
    let probs = e.probs();
    let eval = |seq: &[usize]| -> Result<f64> {
        let factors: Vec<&CMatrix> = seq.iter().map(|&i| e.state(i)).collect();
        let out = s.transmit(&factors)?;
        roots.fidelity(seq, &out)
    };
    match mode {
        FidelityMode::Exact => {
            let count = (m as u128).checked_pow(s.n as u32).unwrap_or(u128::MAX);
            if count > MAX_EXACT_SEQUENCES as u128 {
                return Err(Error::CapExceeded(format!(
                    "{m}^{} = {count} sequences exceeds the exact-mode cap {MAX_EXACT_SEQUENCES}; use Monte Carlo",
                    s.n
                )));
            }
            let count = count as usize;
            let terms = (0..count)
                .into_par_iter()
                .map(|idx| {
                    let seq = sequence_of(idx, m, s.n);
                    let weight: f64 = seq.iter().map(|&i| probs[i]).product();
                    Ok(weight * eval(&seq)?)
                })
                .collect::<Result<Vec<f64>>>()?;
            let mean = terms.iter().sum::<f64>().clamp(0.0, 1.0);
            Ok(FidelityEstimate { mean, std_err: 0.0, samples: count })
        }
        FidelityMode::MonteCarlo { samples, seed } => {
            if samples < 2 {
                return Err(validation("Monte Carlo needs at least 2 samples"));
            }
            let mut r = rng(seed);
            let cumulative: Vec<f64> = probs
                .iter()
                .scan(0.0, |acc, p| {
                    *acc += p;
                    Some(*acc)
                })
                .collect();
            let draws: Vec<Vec<usize>> = (0..samples)
                .map(|_| {
                    (0..s.n)
                        .map(|_| {
                            let u: f64 = r.random::<f64>() * cumulative[m - 1];
                            cumulative.iter().position(|&c| u < c).unwrap_or(m - 1)
                        })
                        .collect()
                })
                .collect();
            let values = draws.par_iter().map(|seq| eval(seq)).collect::<Result<Vec<f64>>>()?;
            let mean = values.iter().sum::<f64>() / samples as f64;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (samples - 1) as f64;
            Ok(FidelityEstimate {
                mean: mean.clamp(0.0, 1.0),
                std_err: (var / samples as f64).sqrt(),
                samples,
            })
        }
    }
}

/// How a sweep evaluates each row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
    /// Exact when within the cap, otherwise Monte Carlo with the given
    /// parameters; without them an oversized row is a cap error.
    Auto { mc: Option<(usize, u64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub rate: f64,
    pub code_dim: usize,
    pub avg_fidelity: f64,
    pub mode: &'static str,
    pub samples: usize,
    pub seed: Option<u64>,
}

/// One row per `(N, rate)` in the given orders.
pub fn rate_sweep(e: &Ensemble, ns: &[usize], rates: &[f64], mode: SweepMode) -> Result<Vec<SweepRow>> {
    rate_sweep_with(&TypicalParts::stripped(e)?, e, ns, rates, mode)
}

/// [`rate_sweep`] over prebuilt codec parts.
pub fn rate_sweep_with(
    parts: &TypicalParts,
    e: &Ensemble,
    ns: &[usize],
    rates: &[f64],
    mode: SweepMode,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(ns.len() * rates.len());
    for &n in ns {
        for &rate in rates {
            let scheme = parts.codec(n, rate)?;
            let exact_ok = (e.len() as u128)
                .checked_pow(n as u32)
                .is_some_and(|c| c <= MAX_EXACT_SEQUENCES as u128);
            let fm = match mode {
                SweepMode::Exact => FidelityMode::Exact,
                SweepMode::MonteCarlo { samples, seed } => FidelityMode::MonteCarlo { samples, seed },
                SweepMode::Auto { .. } if exact_ok => FidelityMode::Exact,
                SweepMode::Auto { mc: Some((samples, seed)) } => FidelityMode::MonteCarlo { samples, seed },
                SweepMode::Auto { mc: None } => FidelityMode::Exact,
            };
            let est = avg_fidelity(&scheme, e, fm)?;
            let (label, seed) = match fm {
                FidelityMode::Exact => ("exact", None),
                FidelityMode::MonteCarlo { seed, .. } => ("monte-carlo", Some(seed)),
            };
            rows.push(SweepRow {
                n,
                rate,
                code_dim: scheme.code_dim,
                avg_fidelity: est.mean,
                mode: label,
                samples: est.samples,
                seed,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct SiteDiagnostic {
    pub site: usize,
    pub p_e: f64,
    pub g: f64,
    pub h_x_given_y: f64,
    pub fano_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConverseReport {
    #[serde(rename = "N")]
    pub n: usize,
    pub code_dim: usize,
    pub rate: f64,
    pub s_sigma: f64,
    pub h_x: f64,
    pub sites: Vec<SiteDiagnostic>,
    pub sum_g_over_n: f64,
    pub bound: f64,
    pub inequality_holds: bool,
    pub pass: bool,
}

/// Per-site error analysis of `decoder o encoder` on a redundancy-free
/// ensemble with full support: `E_perp` from the diagonalization of `sigma`,
/// induced site channels, transition matrices, Fano checks and the bound
/// `sum_k g_k / N >= S(sigma) - log2(code_dim) / N`.
pub fn converse_diagnostic(s: &CompressionScheme, e: &Ensemble) -> Result<ConverseReport> {
    crate::error::ensure_dim(s.site_dim, e.dim())?;
    let total = checked_site_power(e.dim(), s.n)?;
    if total > MAX_DIAGNOSTIC_DIM {
        return Err(Error::CapExceeded(format!(
            "d^N = {total} exceeds the diagnostic cap {MAX_DIAGNOSTIC_DIM}"
        )));
    }
    let d = ki_decompose(e, DEFAULT_TOL)?;
    if d.support_dim != e.dim() || d.blocks.iter().any(|b| b.dk != 1) {
        return Err(validation(
            "converse diagnostic needs a redundancy-free ensemble with full support; strip it first",
        ));
    }
    let perp = d.eigen_ensemble(e)?;
    let labels = perp.len();
    let s_sigma = spectrum_entropy(&herm_eig(&total_state(e))?.values);
    let h_x = shannon_entropy(&perp.probs)?;
    let lambda = s.round_trip()?;

    let mut sites = Vec::with_capacity(s.n);
    for k in 0..s.n {
        let site = induced_site_channel(&lambda, e, k)?;
        let mut joint = vec![0.0; labels * labels];
        for x in 0..labels {
            let out = site.apply(&perp.projector(x))?;
            for y in 0..labels {
                let v = perp.vectors.column(y);
                let t = (v.adjoint() * &out * v)[(0, 0)].re.max(0.0);
                joint[x * labels + y] = perp.probs[x] * t;
            }
        }
        let kept: f64 = (0..labels).map(|x| joint[x * labels + x]).sum();
        let p_e = (1.0 - kept).clamp(0.0, 1.0);
        let g = if labels >= 2 { fano_g(p_e, labels)? } else { 0.0 };
        let py: Vec<f64> = (0..labels).map(|y| (0..labels).map(|x| joint[x * labels + y]).sum()).collect();
        let h_x_given_y = (spectrum_entropy(&joint) - spectrum_entropy(&py)).max(0.0);
        sites.push(SiteDiagnostic { site: k, p_e, g, h_x_given_y, fano_ok: g >= h_x_given_y - 1e-8 });
    }
    let sum_g_over_n = sites.iter().map(|x| x.g).sum::<f64>() / s.n as f64;
    let bound = s_sigma - (s.code_dim as f64).log2() / s.n as f64;
    let inequality_holds = sum_g_over_n >= bound - 1e-6;
    let pass = inequality_holds && sites.iter().all(|x| x.fano_ok) && (h_x - s_sigma).abs() <= 1e-8;
    Ok(ConverseReport {
        n: s.n,
        code_dim: s.code_dim,
        rate: s.rate,
        s_sigma,
        h_x,
        sites,
        sum_g_over_n,
        bound,
        inequality_holds,
        pass,
    })
}
