//! Machine-readable protocol definitions, Bob measurement projectors,
//! sifting, and Monte Carlo round simulation.
//!
//! Bit convention: a Bob measuring a Pauli observable records bit 0 when
//! he projects onto the eigenvalue −1 eigenvector and bit 1 for +1. Where
//! a basis row lists a negated observable pair (the `−σ_y ⊗ σ_y` entry),
//! the sign is absorbed into the second Bob's recorded bit, so a kept
//! noiseless round always satisfies `a = b₁ ⊕ b₂`.

use crate::channels::{apply, AttackPair, ChannelError};
use crate::linalg::{pauli_x, pauli_y, tensor, ComplexMatrix, HermitianOperator};
use crate::seeding::derive_rng;
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("basis label {0} not present in protocol")]
    UnknownBasis(usize),
    #[error("observable index {index} out of range for basis {basis}")]
    UnknownObservable { basis: usize, index: usize },
    #[error("round count must be at least 1")]
    EmptySimulation,
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// The two protocols under analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Independent BB84 keys to each receiver, product encoding.
    #[serde(rename = "bb84sq")]
    Bb84Sq,
    /// Four-state entangled encoding.
    E4,
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Bb84Sq => "bb84sq",
            Protocol::E4 => "e4",
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bb84sq" | "bb84^2" | "bb84" => Ok(Protocol::Bb84Sq),
            "e4" => Ok(Protocol::E4),
            other => Err(format!("unknown protocol '{other}', expected bb84sq or e4")),
        }
    }
}

/// Local measurement axes used by the Bobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PauliAxis {
    X,
    Y,
}

impl PauliAxis {
    pub fn matrix(&self) -> ComplexMatrix {
        match self {
            PauliAxis::X => pauli_x(),
            PauliAxis::Y => pauli_y(),
        }
    }

    /// Projector onto the eigenvector with bit value `b`
    /// (b = 0 ↔ eigenvalue −1, b = 1 ↔ eigenvalue +1).
    pub fn projector(&self, b: u8) -> ComplexMatrix {
        let sign = if b == 1 { 1.0 } else { -1.0 };
        let half = Complex64::new(0.5, 0.0);
        let scaled = self.matrix().scale(Complex64::new(sign * 0.5, 0.0));
        &ComplexMatrix::identity(2).scale(half) + &scaled
    }
}

/// A compatible pair of local observables, with the row's sign
/// (`-1` encodes entries like `−σ_y ⊗ σ_y`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ObservablePair {
    pub first: PauliAxis,
    pub second: PauliAxis,
    pub sign: i8,
}

impl ObservablePair {
    fn new(first: PauliAxis, second: PauliAxis, sign: i8) -> Self {
        assert!(sign == 1 || sign == -1);
        Self {
            first,
            second,
            sign,
        }
    }

    pub fn axes(&self) -> (PauliAxis, PauliAxis) {
        (self.first, self.second)
    }
}

/// A normalized two-qubit encoding state.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amps: Vec<Complex64>,
}

impl PureState {
    pub fn new(amps: Vec<Complex64>) -> Self {
        let norm: f64 = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!(
            (norm - 1.0).abs() < 1e-12,
            "encoding states must be unit vectors, got norm {norm}"
        );
        Self { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn density(&self) -> HermitianOperator {
        HermitianOperator::new(ComplexMatrix::outer(&self.amps, &self.amps))
            .expect("outer product of a vector with itself is Hermitian")
    }

    pub fn inner(&self, other: &PureState) -> Complex64 {
        self.amps
            .iter()
            .zip(other.amps.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}

/// One encoding basis: the state variants per logical bit and the
/// compatible observable pairs.
#[derive(Debug, Clone)]
pub struct BasisRow {
    pub label: usize,
    /// `states[a]` lists the variants sent for logical bit `a`, each with
    /// probability 1/2 within the row.
    pub states: [Vec<PureState>; 2],
    pub observables: Vec<ObservablePair>,
}

/// A full protocol table.
#[derive(Debug, Clone)]
pub struct ProtocolSpec {
    pub protocol: Protocol,
    pub bases: Vec<BasisRow>,
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn local_ket(axis: PauliAxis, plus: bool) -> Vec<Complex64> {
    let r = 1.0 / 2.0f64.sqrt();
    match (axis, plus) {
        (PauliAxis::X, true) => vec![c(r, 0.0), c(r, 0.0)],
        (PauliAxis::X, false) => vec![c(r, 0.0), c(-r, 0.0)],
        (PauliAxis::Y, true) => vec![c(r, 0.0), c(0.0, r)],
        (PauliAxis::Y, false) => vec![c(r, 0.0), c(0.0, -r)],
    }
}

fn product_state(a1: PauliAxis, p1: bool, a2: PauliAxis, p2: bool) -> PureState {
    let k1 = local_ket(a1, p1);
    let k2 = local_ket(a2, p2);
    let mut amps = Vec::with_capacity(4);
    for x in &k1 {
        for y in &k2 {
            amps.push(x * y);
        }
    }
    PureState::new(amps)
}

/// Protocol table for product-encoded double BB84: four bases, two state
/// variants per logical bit, one compatible observable pair per basis.
pub fn bb84_squared_spec() -> ProtocolSpec {
    let axes = [PauliAxis::X, PauliAxis::Y];
    let mut bases = Vec::new();
    let mut label = 1;
    for a1 in axes {
        for a2 in axes {
            let states0 = vec![
                product_state(a1, true, a2, true),
                product_state(a1, false, a2, false),
            ];
            let states1 = vec![
                product_state(a1, true, a2, false),
                product_state(a1, false, a2, true),
            ];
            bases.push(BasisRow {
                label,
                states: [states0, states1],
                observables: vec![ObservablePair::new(a1, a2, 1)],
            });
            label += 1;
        }
    }
    ProtocolSpec {
        protocol: Protocol::Bb84Sq,
        bases,
    }
}

/// Protocol table for the entangled four-state protocol: two bases, one
/// state per logical bit, two compatible observable pairs per basis with
/// the `−σ_y ⊗ σ_y` sign on the first row.
pub fn e4_spec() -> ProtocolSpec {
    let r = 1.0 / 2.0f64.sqrt();
    let psi_plus = PureState::new(vec![c(r, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(r, 0.0)]);
    let psi_minus = PureState::new(vec![c(r, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-r, 0.0)]);
    let psi_plus_i = PureState::new(vec![c(r, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, r)]);
    let psi_minus_i = PureState::new(vec![c(r, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, -r)]);
    ProtocolSpec {
        protocol: Protocol::E4,
        bases: vec![
            BasisRow {
                label: 1,
                states: [vec![psi_plus], vec![psi_minus]],
                observables: vec![
                    ObservablePair::new(PauliAxis::X, PauliAxis::X, 1),
                    ObservablePair::new(PauliAxis::Y, PauliAxis::Y, -1),
                ],
            },
            BasisRow {
                label: 2,
                states: [vec![psi_plus_i], vec![psi_minus_i]],
                observables: vec![
                    ObservablePair::new(PauliAxis::X, PauliAxis::Y, 1),
                    ObservablePair::new(PauliAxis::Y, PauliAxis::X, 1),
                ],
            },
        ],
    }
}

/// The table for a protocol selector.
pub fn spec_for(protocol: Protocol) -> ProtocolSpec {
    match protocol {
        Protocol::Bb84Sq => bb84_squared_spec(),
        Protocol::E4 => e4_spec(),
    }
}

impl ProtocolSpec {
    fn row(&self, j: usize) -> Result<&BasisRow, ProtocolError> {
        self.bases
            .iter()
            .find(|r| r.label == j)
            .ok_or(ProtocolError::UnknownBasis(j))
    }

    /// `p(j, a)`: probability that a given basis and logical bit are used,
    /// uniform over bases and bits.
    pub fn state_probability(&self, _j: usize, _a: u8) -> f64 {
        1.0 / (self.bases.len() as f64 * 2.0)
    }

    /// Bob-side projector `Π(j, k, b)` for logical bit `b`: the sum of
    /// local projector products whose sign-adjusted bit XOR equals `b`.
    /// `Π(j,k,0) + Π(j,k,1) = I` exactly.
    pub fn bob_povm(&self, j: usize, k: usize, b: u8) -> Result<HermitianOperator, ProtocolError> {
        let row = self.row(j)?;
        let pair = row
            .observables
            .get(k)
            .ok_or(ProtocolError::UnknownObservable { basis: j, index: k })?;
        let flip: u8 = if pair.sign < 0 { 1 } else { 0 };
        let mut out = ComplexMatrix::zeros(4, 4);
        for b1 in 0..2u8 {
            for b2 in 0..2u8 {
                if b1 ^ b2 != b {
                    continue;
                }
                let p1 = pair.first.projector(b1);
                let p2 = pair.second.projector(b2 ^ flip);
                out = &out + &tensor(&p1, &p2);
            }
        }
        Ok(HermitianOperator::new(out).expect("projector sums are Hermitian"))
    }

    /// Sifting: keep the round iff the Bobs' observable pair appears in
    /// basis row `j`.
    pub fn sift(&self, j: usize, observables: (PauliAxis, PauliAxis)) -> Result<bool, ProtocolError> {
        let row = self.row(j)?;
        Ok(row
            .observables
            .iter()
            .any(|o| o.axes() == observables))
    }

    /// Index of the observable pair within basis `j`, if compatible.
    pub fn observable_index(
        &self,
        j: usize,
        observables: (PauliAxis, PauliAxis),
    ) -> Result<Option<usize>, ProtocolError> {
        let row = self.row(j)?;
        Ok(row.observables.iter().position(|o| o.axes() == observables))
    }

    /// JSON export of the table: basis rows, state amplitudes as
    /// `[re, im]` pairs, observable lists with signs.
    pub fn to_json(&self) -> serde_json::Value {
        let bases: Vec<serde_json::Value> = self
            .bases
            .iter()
            .map(|row| {
                let states = |variants: &Vec<PureState>| -> Vec<Vec<[f64; 2]>> {
                    variants
                        .iter()
                        .map(|s| s.amplitudes().iter().map(|z| [z.re, z.im]).collect())
                        .collect()
                };
                serde_json::json!({
                    "basis": row.label,
                    "states0": states(&row.states[0]),
                    "states1": states(&row.states[1]),
                    "observables": row.observables,
                })
            })
            .collect();
        serde_json::json!({
            "protocol": self.protocol,
            "bases": bases,
        })
    }
}

/// One kept round after sifting. `b1`, `b2` already absorb the row sign,
/// so a noiseless round has `a = b1 ⊕ b2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SiftedRound {
    pub a: u8,
    pub b1: u8,
    pub b2: u8,
    pub basis: usize,
    pub observable: usize,
}

impl SiftedRound {
    pub fn bob_bit(&self) -> u8 {
        self.b1 ^ self.b2
    }
}

/// Result of simulating `n` transmitted rounds.
#[derive(Debug, Clone)]
pub struct SimulatedRounds {
    /// Kept rounds with the eavesdropper bit of each.
    pub rounds: Vec<(SiftedRound, u8)>,
    /// Number of rounds transmitted (before sifting).
    pub total: usize,
}

impl SimulatedRounds {
    pub fn sift_rate(&self) -> f64 {
        self.rounds.len() as f64 / self.total as f64
    }

    pub fn empirical_qber(&self) -> f64 {
        if self.rounds.is_empty() {
            return 0.0;
        }
        let errors = self
            .rounds
            .iter()
            .filter(|(r, _)| r.a != r.bob_bit())
            .count();
        errors as f64 / self.rounds.len() as f64
    }
}

struct OutcomeTable {
    /// Cumulative probabilities over (e, b1, b2) flattened as 4e + 2b1 + b2.
    cumulative: [f64; 8],
}

/// Monte Carlo simulation of `n` transmitted rounds under an attack.
///
/// Per-round randomness comes from `derive_rng(seed, "round", index)`, so
/// transcripts are reproducible and independent of execution order.
pub fn simulate_rounds(
    spec: &ProtocolSpec,
    attack: &AttackPair,
    n: usize,
    seed: u64,
) -> Result<SimulatedRounds, ProtocolError> {
    if n == 0 {
        return Err(ProtocolError::EmptySimulation);
    }
    // Exact outcome distributions per (basis, bit, variant, observable).
    let mut tables = Vec::new();
    for row in &spec.bases {
        let mut per_row = Vec::new();
        for a in 0..2usize {
            for state in &row.states[a] {
                let rho = state.density();
                let mut per_state = Vec::new();
                for (k, pair) in row.observables.iter().enumerate() {
                    let flip: u8 = if pair.sign < 0 { 1 } else { 0 };
                    let mut probs = [0.0f64; 8];
                    for e in 0..2u8 {
                        let disturbed = apply(attack.channel(e), &rho)?;
                        for b1 in 0..2u8 {
                            for b2 in 0..2u8 {
                                let proj = tensor(
                                    &pair.first.projector(b1),
                                    &pair.second.projector(b2 ^ flip),
                                );
                                let proj = HermitianOperator::new(proj)
                                    .expect("projector products are Hermitian");
                                let p = disturbed.hs_inner(&proj).max(0.0);
                                probs[(4 * e + 2 * b1 + b2) as usize] = p;
                            }
                        }
                        let _ = k;
                    }
                    let mut cumulative = [0.0f64; 8];
                    let mut acc = 0.0;
                    for (slot, p) in probs.iter().enumerate() {
                        acc += p;
                        cumulative[slot] = acc;
                    }
                    per_state.push(OutcomeTable { cumulative });
                }
                per_row.push(per_state);
            }
        }
        tables.push(per_row);
    }

    let axes = [PauliAxis::X, PauliAxis::Y];
    let mut rounds = Vec::new();
    for index in 0..n {
        let mut rng = derive_rng(seed, "round", index as u64);
        let row_idx = rng.gen_range(0..spec.bases.len());
        let row = &spec.bases[row_idx];
        let a = rng.gen_range(0..2u8);
        let variant = rng.gen_range(0..row.states[a as usize].len());
        let ax1 = axes[rng.gen_range(0..2usize)];
        let ax2 = axes[rng.gen_range(0..2usize)];
        let Some(k) = row
            .observables
            .iter()
            .position(|o| o.axes() == (ax1, ax2))
        else {
            continue; // rejected at sifting
        };
        // Index into the per-row tables: variants for a=0 come first.
        let state_slot = if a == 0 {
            variant
        } else {
            row.states[0].len() + variant
        };
        let table = &tables[row_idx][state_slot][k];
        let u: f64 = rng.gen_range(0.0..1.0) * table.cumulative[7];
        let slot = table
            .cumulative
            .iter()
            .position(|&cp| u < cp)
            .unwrap_or(7);
        let e = (slot / 4) as u8;
        let b1 = ((slot / 2) % 2) as u8;
        let b2 = (slot % 2) as u8;
        rounds.push((
            SiftedRound {
                a,
                b1,
                b2,
                basis: row.label,
                observable: k,
            },
            e,
        ));
    }
    Ok(SimulatedRounds { rounds, total: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::optimal_attack;
    use crate::linalg::{partial_trace, SubsystemShape};

    #[test]
    fn bb84_table_shape_and_first_state() {
        let spec = bb84_squared_spec();
        assert_eq!(spec.bases.len(), 4);
        let first = &spec.bases[0];
        assert_eq!(first.observables.len(), 1);
        // basis 1, a=0, variant 0 is |x+⟩|x+⟩.
        let expect = product_state(PauliAxis::X, true, PauliAxis::X, true);
        assert_eq!(first.states[0][0], expect);
        assert!((spec.state_probability(1, 0) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn bb84_states_are_product_states() {
        // Schmidt rank 1 ⇔ reduced state is pure ⇔ Tr(ρ_A²) = 1.
        let spec = bb84_squared_spec();
        let shape = SubsystemShape::new(vec![2, 2]);
        for row in &spec.bases {
            for a in 0..2 {
                for state in &row.states[a] {
                    let reduced = partial_trace(&state.density(), &shape, &[0]).unwrap();
                    let sq = reduced.hs_inner(&reduced);
                    assert!((sq - 1.0).abs() < 1e-12, "purity {sq}");
                }
            }
        }
    }

    #[test]
    fn bb84_variants_are_orthogonal() {
        let spec = bb84_squared_spec();
        for row in &spec.bases {
            for a in 0..2 {
                let v = &row.states[a];
                assert_eq!(v.len(), 2);
                assert!(v[0].inner(&v[1]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn e4_table_states() {
        let spec = e4_spec();
        assert_eq!(spec.bases.len(), 2);
        assert!((spec.state_probability(1, 0) - 0.25).abs() < 1e-15);
        // basis 1, a=1 is |ψ−⟩.
        let psi_minus = &spec.bases[0].states[1][0];
        let r = 1.0 / 2.0f64.sqrt();
        assert!((psi_minus.amplitudes()[0] - c(r, 0.0)).norm() < 1e-15);
        assert!((psi_minus.amplitudes()[3] - c(-r, 0.0)).norm() < 1e-15);
        // ⟨ψ+|ψ−⟩ = 0.
        assert!(spec.bases[0].states[0][0].inner(psi_minus).norm() < 1e-15);
    }

    #[test]
    fn e4_states_are_maximally_entangled() {
        let spec = e4_spec();
        let shape = SubsystemShape::new(vec![2, 2]);
        let half = ComplexMatrix::identity(2).scale(c(0.5, 0.0));
        for row in &spec.bases {
            for a in 0..2 {
                let reduced = partial_trace(&row.states[a][0].density(), &shape, &[0]).unwrap();
                assert!(reduced.matrix().approx_eq(&half, 1e-14));
            }
        }
    }

    #[test]
    fn sifting_matches_tables() {
        let e4 = e4_spec();
        assert!(e4.sift(1, (PauliAxis::X, PauliAxis::X)).unwrap());
        assert!(!e4.sift(1, (PauliAxis::X, PauliAxis::Y)).unwrap());
        assert!(e4.sift(2, (PauliAxis::X, PauliAxis::Y)).unwrap());
        let bb = bb84_squared_spec();
        assert!(bb.sift(2, (PauliAxis::X, PauliAxis::Y)).unwrap());
        assert!(!bb.sift(2, (PauliAxis::Y, PauliAxis::X)).unwrap());
        assert!(bb.sift(9, (PauliAxis::X, PauliAxis::X)).is_err());
    }

    #[test]
    fn sift_acceptance_fractions() {
        // Count kept observable combinations out of the four possible.
        let axes = [PauliAxis::X, PauliAxis::Y];
        for (spec, expect) in [(bb84_squared_spec(), 1), (e4_spec(), 2)] {
            for row in &spec.bases {
                let kept = axes
                    .iter()
                    .flat_map(|&a1| axes.iter().map(move |&a2| (a1, a2)))
                    .filter(|&pair| spec.sift(row.label, pair).unwrap())
                    .count();
                assert_eq!(kept, expect);
            }
        }
    }

    #[test]
    fn povm_completeness_and_orthogonality() {
        for spec in [bb84_squared_spec(), e4_spec()] {
            for row in &spec.bases {
                for k in 0..row.observables.len() {
                    let p0 = spec.bob_povm(row.label, k, 0).unwrap();
                    let p1 = spec.bob_povm(row.label, k, 1).unwrap();
                    let sum = p0.add(&p1);
                    assert!(sum.matrix().approx_eq(&ComplexMatrix::identity(4), 0.0));
                    let prod = p0.matrix() * p1.matrix();
                    assert!(prod.frobenius_norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn bb84_povm_is_rank_two_projector_consistent_with_bit_convention() {
        let spec = bb84_squared_spec();
        let p0 = spec.bob_povm(1, 0, 0).unwrap();
        // Rank 2: trace 2 and idempotent.
        assert!((p0.trace() - 2.0).abs() < 1e-13);
        let sq = p0.matrix() * p0.matrix();
        assert!(sq.approx_eq(p0.matrix(), 1e-13));
        // Contains |x+x+⟩ and |x-x-⟩ (eigenvalue bits XOR to 0).
        for state in [
            product_state(PauliAxis::X, true, PauliAxis::X, true),
            product_state(PauliAxis::X, false, PauliAxis::X, false),
        ] {
            let val = state.density().hs_inner(&p0);
            assert!((val - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn noiseless_correctness_for_every_state_and_observable() {
        // ⟨ψ^{j,a}| Π(j,k,a) |ψ^{j,a}⟩ = 1 pins the sign convention.
        for spec in [bb84_squared_spec(), e4_spec()] {
            for row in &spec.bases {
                for a in 0..2u8 {
                    for state in &row.states[a as usize] {
                        for k in 0..row.observables.len() {
                            let proj = spec.bob_povm(row.label, k, a).unwrap();
                            let val = state.density().hs_inner(&proj);
                            assert!(
                                (val - 1.0).abs() < 1e-12,
                                "{:?} basis {} k {} a {}: {val}",
                                spec.protocol,
                                row.label,
                                k,
                                a
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let spec = e4_spec();
        let attack = optimal_attack(Protocol::E4);
        let one = simulate_rounds(&spec, &attack, 2000, 99).unwrap();
        let two = simulate_rounds(&spec, &attack, 2000, 99).unwrap();
        assert_eq!(one.rounds, two.rounds);
        let three = simulate_rounds(&spec, &attack, 2000, 100).unwrap();
        assert_ne!(one.rounds, three.rounds);
    }

    #[test]
    fn identity_attack_has_zero_empirical_qber() {
        for spec in [bb84_squared_spec(), e4_spec()] {
            let sim = simulate_rounds(&spec, &AttackPair::identity(), 4000, 7).unwrap();
            assert_eq!(sim.empirical_qber(), 0.0);
            assert!(!sim.rounds.is_empty());
        }
    }

    #[test]
    fn sift_rates_match_counting() {
        let bb = simulate_rounds(&bb84_squared_spec(), &AttackPair::identity(), 40000, 5).unwrap();
        assert!((bb.sift_rate() - 0.25).abs() < 0.01, "{}", bb.sift_rate());
        let e4 = simulate_rounds(&e4_spec(), &AttackPair::identity(), 40000, 5).unwrap();
        assert!((e4.sift_rate() - 0.5).abs() < 0.01, "{}", e4.sift_rate());
    }

    #[test]
    fn optimal_attack_empirical_qber_near_threshold() {
        let spec = bb84_squared_spec();
        let attack = optimal_attack(Protocol::Bb84Sq);
        let sim = simulate_rounds(&spec, &attack, 200_000, 12).unwrap();
        let q = sim.empirical_qber();
        let expect = 5.0 / 18.0;
        let sigma = (expect * (1.0 - expect) / sim.rounds.len() as f64).sqrt();
        assert!((q - expect).abs() < 4.0 * sigma, "q={q} expect={expect}");
    }

    #[test]
    fn protocol_json_export_has_expected_fields() {
        let json = e4_spec().to_json();
        assert_eq!(json["protocol"], "e4");
        assert_eq!(json["bases"].as_array().unwrap().len(), 2);
        assert_eq!(json["bases"][0]["observables"][1]["sign"], -1);
    }
}
