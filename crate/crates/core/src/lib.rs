//! Security analysis of two-receiver quantum secret sharing.
//!
//! The library models the two protocols (product-encoded `BB84⊗2` and the
//! entangled four-state `E4`), the optimal local eavesdropping attacks on
//! them, the one-way secret-key rate `K = I(A:B) − I(B:E)`, the PPT-relaxed
//! semidefinite program that yields the QBER thresholds, and the classical
//! layer (XOR secret sharing, random-coding reconciliation, privacy
//! amplification).
//!
//! Modules:
//! - [`linalg`]: dense complex matrices, tensor products, partial trace /
//!   transpose, Hermitian spectra.
//! - [`channels`]: Kraus and Choi channel representations, the optimal
//!   attack pairs, depolarizing noise.
//! - [`protocols`]: machine-readable protocol tables, Bob POVMs, sifting,
//!   Monte Carlo round simulation.
//! - [`analysis`]: exact joint distributions, QBER, mutual information,
//!   key rates, key-rate curves.
//! - [`sdp`]: the threshold semidefinite programs and a small dense
//!   interior-point solver.
//! - [`coding`]: XOR sharing, random-coding reconciliation, Toeplitz
//!   privacy amplification.
//! - [`seeding`]: deterministic derivation of per-subsystem RNG streams.

pub mod analysis;
pub mod channels;
pub mod coding;
pub mod linalg;
pub mod protocols;
pub mod sdp;
pub mod seeding;
