#![allow(dead_code)]

use mixcomp::ensemble::Ensemble;
use mixcomp::kidecomp::{KIDecomposition, PlantedSpec};
use mixcomp::matcore::{cr, diag, kron, projector};
use mixcomp::{CMatrix, C64};
use nalgebra::DVector;
use rand::Rng;

pub fn ket(d: usize, k: usize) -> CMatrix {
    let mut m = CMatrix::zeros(d, d);
    m[(k, k)] = C64::ONE;
    m
}

pub fn plus() -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    projector(&[cr(s), cr(s)])
}

pub fn omega() -> CMatrix {
    diag(&[0.7, 0.3])
}

pub fn qubit_pair() -> Ensemble {
    Ensemble::new(2, vec![(0.5, ket(2, 0)), (0.5, plus())]).unwrap()
}

pub fn classical_pair() -> Ensemble {
    Ensemble::new(2, vec![(0.5, ket(2, 0)), (0.5, ket(2, 1))]).unwrap()
}

pub fn redundant_pair() -> Ensemble {
    Ensemble::new(4, vec![(0.5, kron(&ket(2, 0), &omega())), (0.5, kron(&plus(), &omega()))]).unwrap()
}

pub fn identical_states() -> Ensemble {
    let rho = diag(&[0.5, 0.3, 0.2]);
    Ensemble::new(3, vec![(0.4, rho.clone()), (0.6, rho)]).unwrap()
}

/// Binary entropy of `(1 + 1/sqrt 2) / 2`, the qubit-pair rate.
pub fn qubit_pair_entropy() -> f64 {
    let l = (1.0 + std::f64::consts::FRAC_1_SQRT_2) / 2.0;
    -l * l.log2() - (1.0 - l) * (1.0 - l).log2()
}

/// Entropy from a plain nalgebra eigen-solve, independent of the crate's
/// sorted solver.
pub fn entropy_oracle(rho: &CMatrix) -> f64 {
    let eig = nalgebra::SymmetricEigen::new(rho.clone());
    eig.eigenvalues
        .iter()
        .filter(|&&x| x > 1e-15)
        .map(|&x| -x * x.log2())
        .sum()
}

/// `S(sum_i p_i (+)_l q_il rho_J^(i,l))` assembled directly from planted data.
pub fn planted_rate_oracle(planted: &KIDecomposition, probs: &[f64]) -> f64 {
    let n: usize = planted.blocks.iter().map(|b| b.dj).sum();
    let mut sigma = CMatrix::zeros(n, n);
    let mut off = 0;
    for b in &planted.blocks {
        for (i, &p) in probs.iter().enumerate() {
            let piece = &b.jstates[i] * cr(p * b.weights[i]);
            let mut view = sigma.view_mut((off, off), (b.dj, b.dj));
            view += piece;
        }
        off += b.dj;
    }
    entropy_oracle(&sigma)
}

/// Random block structure for planted recovery: 2-4 signals, ambient
/// dimension at most `max_dim`.
pub fn random_planted_spec(rng: &mut impl Rng, max_dim: usize) -> PlantedSpec {
    loop {
        let signals = rng.random_range(2..=4);
        let count = rng.random_range(1..=3);
        let blocks: Vec<(usize, usize)> =
            (0..count).map(|_| (rng.random_range(1..=3), rng.random_range(1..=3))).collect();
        let support: usize = blocks.iter().map(|(j, k)| j * k).sum();
        if support > max_dim {
            continue;
        }
        let ambient = support + rng.random_range(0..=(max_dim - support).min(3));
        return PlantedSpec { blocks, signals, ambient_dim: Some(ambient) };
    }
}

pub fn sorted_dims(blocks: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut v = blocks.to_vec();
    v.sort_unstable_by(|a, b| b.cmp(a));
    v
}

/// Exact average fidelity of the typical-subspace code on a pure-state qubit
/// ensemble, computed with state vectors: the code keeps the top `code_dim`
/// product eigenvectors of `rho^(x)N` and sends the rest to the top one.
pub fn pure_typical_fidelity_oracle(states: &[DVector<C64>], probs: &[f64], n: usize, code_dim: usize) -> f64 {
    let d = states[0].len();
    let mut rho = CMatrix::zeros(d, d);
    for (v, &p) in states.iter().zip(probs) {
        rho += v * v.adjoint() * cr(p);
    }
    let eig = nalgebra::SymmetricEigen::new(rho);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lam: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let basis: Vec<DVector<C64>> = order.iter().map(|&k| eig.eigenvectors.column(k).into_owned()).collect();

    let full = d.pow(n as u32);
    let digits = |idx: usize| -> Vec<usize> {
        let mut out = vec![0; n];
        let mut x = idx;
        for slot in out.iter_mut().rev() {
            *slot = x % d;
            x /= d;
        }
        out
    };
    let mut ranked: Vec<(f64, usize)> = (0..full)
        .map(|idx| {
            let mut counts = vec![0i32; d];
            for s in digits(idx) {
                counts[s] += 1;
            }
            (counts.iter().zip(&lam).fold(1.0, |a, (&c, &l)| a * l.powi(c)), idx)
        })
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let product = |idx: usize| -> DVector<C64> {
        digits(idx).iter().fold(DVector::from_element(1, C64::ONE), |acc, &s| acc.kronecker(&basis[s]))
    };
    let code: Vec<DVector<C64>> = ranked.iter().take(code_dim).map(|&(_, idx)| product(idx)).collect();
    let top = &code[0];

    let m = states.len();
    let mut total = 0.0;
    for seq in 0..m.pow(n as u32) {
        let mut x = DVector::from_element(1, C64::ONE);
        let mut weight = 1.0;
        let mut s = seq;
        let mut picks = vec![0; n];
        for slot in picks.iter_mut().rev() {
            *slot = s % m;
            s /= m;
        }
        for &i in &picks {
            x = x.kronecker(&states[i]);
            weight *= probs[i];
        }
        let amps: Vec<C64> = code.iter().map(|c| c.dotc(&x)).collect();
        let kept: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        let overlap_top = top.dotc(&x).norm_sqr();
        total += weight * (kept * kept + (1.0 - kept) * overlap_top);
    }
    total
}
