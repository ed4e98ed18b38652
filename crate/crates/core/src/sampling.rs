//! Seeded random matrices, states, ensembles and channels.
//!
//! Everything draws from `ChaCha8Rng`, so outputs are reproducible from a
//! `u64` seed across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channels::QuantumChannel;
use crate::ensemble::Ensemble;
use crate::error::Result;
use crate::matcore::{c, cr, hermitian_part, trace, CMatrix, C64};

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian(rng: &mut impl Rng) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    c(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Complex Ginibre matrix with unit-variance entries.
pub fn ginibre(rows: usize, cols: usize, rng: &mut impl Rng) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

/// Haar-random isometry (`rows >= cols`) via Gram-Schmidt on a Ginibre matrix.
pub fn random_isometry(rows: usize, cols: usize, rng: &mut impl Rng) -> CMatrix {
    assert!(rows >= cols, "isometry needs rows >= cols");
    let mut m = ginibre(rows, cols, rng);
    for j in 0..cols {
        for _ in 0..2 {
            for k in 0..j {
                let proj: C64 = m.column(k).dotc(&m.column(j));
                let ck = m.column(k).clone_owned();
                m.column_mut(j).axpy(-proj, &ck, C64::ONE);
            }
        }
        let norm = m.column(j).norm();
        m.column_mut(j).unscale_mut(norm);
    }
    m
}

pub fn random_unitary(n: usize, rng: &mut impl Rng) -> CMatrix {
    random_isometry(n, n, rng)
}

/// GUE-like random Hermitian matrix.
pub fn random_hermitian(n: usize, rng: &mut impl Rng) -> CMatrix {
    hermitian_part(&ginibre(n, n, rng))
}

/// Random positive semidefinite matrix `G G^dag` of the given rank.
pub fn random_psd(n: usize, rank: usize, rng: &mut impl Rng) -> CMatrix {
    let g = ginibre(n, rank, rng);
    hermitian_part(&(&g * g.adjoint()))
}

/// Random density matrix of the given rank (Hilbert-Schmidt measure).
pub fn random_density(n: usize, rank: usize, rng: &mut impl Rng) -> CMatrix {
    let p = random_psd(n, rank, rng);
    let t = trace(&p).re;
    p / cr(t)
}

pub fn random_pure(n: usize, rng: &mut impl Rng) -> CMatrix {
    random_density(n, 1, rng)
}

/// Uniform point on the probability simplex (flat Dirichlet).
pub fn random_simplex(k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let draws: Vec<f64> = (0..k)
        .map(|_| -(1.0 - rng.random::<f64>()).ln() + 1e-3)
        .collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|x| x / total).collect()
}

/// Random ensemble on dimension `dim` with `signals` states of random rank.
pub fn random_ensemble(dim: usize, signals: usize, rng: &mut impl Rng) -> Result<Ensemble> {
    let probs = random_simplex(signals, rng);
    let states = (0..signals)
        .map(|_| {
            let rank = rng.random_range(1..=dim);
            random_density(dim, rank, rng)
        })
        .collect::<Vec<_>>();
    Ensemble::new(dim, probs.into_iter().zip(states).collect())
}

/// Ensemble of random pure states.
pub fn random_pure_ensemble(dim: usize, signals: usize, rng: &mut impl Rng) -> Result<Ensemble> {
    let probs = random_simplex(signals, rng);
    let states = (0..signals).map(|_| random_pure(dim, rng)).collect::<Vec<_>>();
    Ensemble::new(dim, probs.into_iter().zip(states).collect())
}

/// Random CPTP map obtained by slicing a Haar isometry
/// `C^in -> C^out (x) C^kraus`. `kraus` is raised to `ceil(in / out)` when
/// smaller, since the isometry needs `out * kraus >= in`.
pub fn random_channel(
    in_dim: usize,
    out_dim: usize,
    kraus: usize,
    rng: &mut impl Rng,
) -> QuantumChannel {
    let kraus = kraus.max(in_dim.div_ceil(out_dim));
    let v = random_isometry(out_dim * kraus, in_dim, rng);
    let ops = (0..kraus)
        .map(|k| v.view((k * out_dim, 0), (out_dim, in_dim)).clone_owned())
        .collect();
    QuantumChannel::from_kraus_unchecked(in_dim, out_dim, ops)
}
