//! Blind compression of mixed-state quantum ensembles.
//!
//! The crate recovers the redundancy decomposition of an ensemble
//! `{p_i, rho_i}`: the support splits into blocks `J (x) K` on which every
//! signal factorizes as `q_il * rho_J^(i,l) (x) rho_K^(l)` with a shared,
//! signal-independent `K` part. Stripping the `K` factors yields the reduced
//! ensemble `{p_i, sigma_i}`, whose von Neumann entropy `I_R` is the optimal
//! number of qubits per signal for blind compression.
//!
//! Around that computation the crate provides:
//!
//! - [`matcore`]: dense complex linear algebra (Hermitian eigensystems,
//!   tensor products, partial traces, generated algebras and commutants).
//! - [`ensemble`]: ensembles, entropies, fidelity and Fano-type functionals.
//! - [`kidecomp`]: the redundancy decomposition, stripping and `I_R`.
//! - [`channels`]: CPTP maps in operator-sum form, including the strip/dress
//!   interchange channels and preserving channels.
//! - [`compress`]: typical-subspace codecs, exact and Monte Carlo average
//!   fidelity, rate sweeps and converse diagnostics.
//! - [`cli`]: the `mixcomp` command-line front end.

pub mod channels;
pub mod cli;
pub mod compress;
pub mod ensemble;
pub mod error;
pub mod kidecomp;
pub mod matcore;
pub mod sampling;

pub use error::{Error, Result};
pub use matcore::{CMatrix, C64};
