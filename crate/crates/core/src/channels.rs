//! Quantum channel representations and the optimal local attack pairs.
//!
//! Channels are held both as Kraus families and as Choi operators. The
//! Choi operator of a map ε uses the unnormalized maximally entangled
//! vector: `P_ε = (ε ⊗ I)(|Ψ⁺⟩⟨Ψ⁺|)` with `|Ψ⁺⟩ = Σᵢ |i⟩⊗|i⟩`, living on
//! `H_out ⊗ H_in`. For the two-qubit channels analyzed here each factor
//! is ordered `B₁ ⊗ B₂`, so the 16-dimensional flat index is
//! `4·(2·o₁+o₂) + (2·i₁+i₂)`. The partial transpose relevant to the
//! local-operation constraint acts on the `B₂` out and in subsystems,
//! indices [`CHOI_B2_SUBSYSTEMS`] of the `[2,2,2,2]` shape.

use crate::linalg::{
    eigen_hermitian, partial_trace, partial_transpose, tensor, ComplexMatrix, HermitianOperator,
    LinalgError, SubsystemShape,
};
use crate::protocols::Protocol;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_4, PI, SQRT_2};
use thiserror::Error;

/// Subsystems of the `[2,2,2,2]` Choi shape transposed by the PPT check:
/// `B₂`'s output and input factors.
pub const CHOI_B2_SUBSYSTEMS: [usize; 2] = [1, 3];

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("kraus operators disagree in dimensions")]
    InconsistentKraus,
    #[error("channel is trace-increasing: max eigenvalue of ΣK†K - I is {excess:.3e}")]
    TraceIncreasing { excess: f64 },
    #[error("operator is not positive semidefinite: min eigenvalue {min_eigenvalue:.3e}")]
    NotPsd { min_eigenvalue: f64 },
    #[error("attack pair is not trace-preserving: |Tr_out(P0+P1) - I| = {deviation:.3e}")]
    NotTracePreserving { deviation: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("mixture weight {0} outside [0, 1]")]
    InvalidWeight(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// A completely positive map given by Kraus operators, trace-nonincreasing
/// within 1e-10.
#[derive(Debug, Clone)]
pub struct KrausChannel {
    input_dim: usize,
    output_dim: usize,
    ops: Vec<ComplexMatrix>,
}

impl KrausChannel {
    pub fn new(ops: Vec<ComplexMatrix>) -> Result<Self, ChannelError> {
        let first = ops.first().ok_or(ChannelError::InconsistentKraus)?;
        let (output_dim, input_dim) = (first.rows(), first.cols());
        if ops
            .iter()
            .any(|k| k.rows() != output_dim || k.cols() != input_dim)
        {
            return Err(ChannelError::InconsistentKraus);
        }
        let ch = Self {
            input_dim,
            output_dim,
            ops,
        };
        let excess = ch.trace_excess();
        if excess > 1e-10 {
            return Err(ChannelError::TraceIncreasing { excess });
        }
        Ok(ch)
    }

    /// Max eigenvalue of `ΣK†K - I` (positive means trace-increasing).
    fn trace_excess(&self) -> f64 {
        let sum = self.kraus_sum();
        let shifted = &sum - &ComplexMatrix::identity(self.input_dim);
        let herm = HermitianOperator::with_tolerance(shifted, 1e-8)
            .expect("K†K sums are Hermitian by construction");
        *crate::linalg::eigenvalues_hermitian(&herm)
            .last()
            .expect("nonempty spectrum")
    }

    /// `Σ K†K`.
    pub fn kraus_sum(&self) -> ComplexMatrix {
        let mut sum = ComplexMatrix::zeros(self.input_dim, self.input_dim);
        for k in &self.ops {
            sum = &sum + &(&k.adjoint() * k);
        }
        sum
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn ops(&self) -> &[ComplexMatrix] {
        &self.ops
    }

    /// Identity channel on dimension `dim`.
    pub fn identity(dim: usize) -> Self {
        Self {
            input_dim: dim,
            output_dim: dim,
            ops: vec![ComplexMatrix::identity(dim)],
        }
    }

    /// The same channel with every Kraus operator scaled by `√weight`.
    pub fn scaled(&self, weight: f64) -> Self {
        let s = Complex64::new(weight.sqrt(), 0.0);
        Self {
            input_dim: self.input_dim,
            output_dim: self.output_dim,
            ops: self.ops.iter().map(|k| k.scale(s)).collect(),
        }
    }
}

/// `ε(ρ) = Σ K ρ K†`.
pub fn apply(ch: &KrausChannel, rho: &HermitianOperator) -> Result<HermitianOperator, ChannelError> {
    if rho.dim() != ch.input_dim {
        return Err(ChannelError::DimensionMismatch(format!(
            "state dim {} vs channel input dim {}",
            rho.dim(),
            ch.input_dim
        )));
    }
    let mut out = ComplexMatrix::zeros(ch.output_dim, ch.output_dim);
    for k in &ch.ops {
        out = &out + &(&(k * rho.matrix()) * &k.adjoint());
    }
    Ok(HermitianOperator::with_tolerance(out, 1e-9)?)
}

/// Choi operator of a completely positive map: positive semidefinite on
/// `H_out ⊗ H_in`.
#[derive(Debug, Clone)]
pub struct ChoiOperator {
    op: HermitianOperator,
    shape: SubsystemShape,
}

impl ChoiOperator {
    /// Wrap an operator after checking positivity (eigenvalue floor -1e-10).
    pub fn new(op: HermitianOperator, shape: SubsystemShape) -> Result<Self, ChannelError> {
        if shape.total_dim() != op.dim() {
            return Err(ChannelError::DimensionMismatch(format!(
                "shape product {} vs operator dim {}",
                shape.total_dim(),
                op.dim()
            )));
        }
        let min_eigenvalue = op.min_eigenvalue();
        if min_eigenvalue < -1e-10 {
            return Err(ChannelError::NotPsd { min_eigenvalue });
        }
        Ok(Self { op, shape })
    }

    pub fn operator(&self) -> &HermitianOperator {
        &self.op
    }

    pub fn shape(&self) -> &SubsystemShape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn to_json(&self) -> ChoiJson {
        ChoiJson {
            dim: self.dim(),
            shape: self.shape.dims().to_vec(),
            entries: self
                .op
                .matrix()
                .data()
                .iter()
                .map(|z| [z.re, z.im])
                .collect(),
        }
    }

    pub fn from_json(json: &ChoiJson) -> Result<Self, ChannelError> {
        let data: Vec<Complex64> = json
            .entries
            .iter()
            .map(|[re, im]| Complex64::new(*re, *im))
            .collect();
        let m = ComplexMatrix::new(json.dim, json.dim, data)
            .map_err(|e| ChannelError::DimensionMismatch(e.to_string()))?;
        let op = HermitianOperator::new(m)?;
        Self::new(op, SubsystemShape::new(json.shape.clone()))
    }
}

/// Row-major JSON form of a Choi operator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChoiJson {
    pub dim: usize,
    pub shape: Vec<usize>,
    pub entries: Vec<[f64; 2]>,
}

fn choi_shape(output_dim: usize, input_dim: usize) -> SubsystemShape {
    if output_dim == 4 && input_dim == 4 {
        SubsystemShape::new(vec![2, 2, 2, 2])
    } else {
        SubsystemShape::new(vec![output_dim, input_dim])
    }
}

/// `P_ε = Σ_K vec(K) vec(K)†` with `vec(K)[(m,i)] = K[m,i]`, i.e. the
/// unnormalized-|Ψ⁺⟩ Choi operator.
pub fn choi_from_kraus(ch: &KrausChannel) -> ChoiOperator {
    let (dout, din) = (ch.output_dim, ch.input_dim);
    let dim = dout * din;
    let mut m = ComplexMatrix::zeros(dim, dim);
    for k in &ch.ops {
        let mut veck = Vec::with_capacity(dim);
        for out_i in 0..dout {
            for in_i in 0..din {
                veck.push(k.get(out_i, in_i));
            }
        }
        m = &m + &ComplexMatrix::outer(&veck, &veck);
    }
    let op = HermitianOperator::with_tolerance(m, 1e-9).expect("choi is Hermitian");
    ChoiOperator::new(op, choi_shape(dout, din)).expect("choi of a CP map is PSD")
}

/// Kraus family from the eigendecomposition of a Choi operator.
///
/// Eigenvalues below `-1e-9` are an error; small negatives above the floor
/// are discarded.
pub fn kraus_from_choi(
    choi: &ChoiOperator,
    output_dim: usize,
    input_dim: usize,
) -> Result<KrausChannel, ChannelError> {
    if output_dim * input_dim != choi.dim() {
        return Err(ChannelError::DimensionMismatch(format!(
            "{}x{} vs choi dim {}",
            output_dim,
            input_dim,
            choi.dim()
        )));
    }
    let (vals, vecs) = eigen_hermitian(choi.operator());
    if vals[0] < -1e-9 {
        return Err(ChannelError::NotPsd {
            min_eigenvalue: vals[0],
        });
    }
    let mut ops = Vec::new();
    for (idx, &lambda) in vals.iter().enumerate() {
        if lambda <= 1e-12 {
            continue;
        }
        let scale = Complex64::new(lambda.sqrt(), 0.0);
        let k = ComplexMatrix::from_fn(output_dim, input_dim, |m, i| {
            vecs.get(m * input_dim + i, idx) * scale
        });
        ops.push(k);
    }
    if ops.is_empty() {
        ops.push(ComplexMatrix::zeros(output_dim, input_dim));
    }
    KrausChannel::new(ops)
}

/// Partially transpose the listed subsystems and report whether the result
/// stays positive (floor `-1e-9`, loose enough to absorb transcription
/// rounding of irrational entries) together with the minimum eigenvalue.
pub fn is_ppt(choi: &ChoiOperator, transposed: &[usize]) -> (bool, f64) {
    let pt = partial_transpose(choi.operator(), choi.shape(), transposed)
        .expect("choi shape is consistent by construction");
    let min = pt.min_eigenvalue();
    (min >= -1e-9, min)
}

/// A pair of trace-decreasing maps `(ε₀, ε₁)` conditioned on the
/// eavesdropper's bit; their sum is trace-preserving within 1e-10.
#[derive(Debug, Clone)]
pub struct AttackPair {
    e0: KrausChannel,
    e1: KrausChannel,
}

impl AttackPair {
    pub fn new(e0: KrausChannel, e1: KrausChannel) -> Result<Self, ChannelError> {
        for ch in [&e0, &e1] {
            if ch.input_dim() != 4 || ch.output_dim() != 4 {
                return Err(ChannelError::DimensionMismatch(
                    "attack channels must be 4 -> 4".into(),
                ));
            }
        }
        let pair = Self { e0, e1 };
        let deviation = pair.trace_preservation_deviation();
        if deviation > 1e-10 {
            return Err(ChannelError::NotTracePreserving { deviation });
        }
        Ok(pair)
    }

    pub fn channel(&self, e: u8) -> &KrausChannel {
        if e == 0 {
            &self.e0
        } else {
            &self.e1
        }
    }

    /// `|Tr_out(P_ε₀ + P_ε₁) - I|` (max entry deviation).
    pub fn trace_preservation_deviation(&self) -> f64 {
        let p0 = choi_from_kraus(&self.e0);
        let p1 = choi_from_kraus(&self.e1);
        let sum = p0.operator().add(p1.operator());
        let shape = SubsystemShape::new(vec![2, 2, 2, 2]);
        let tr_out = partial_trace(&sum, &shape, &[2, 3]).expect("consistent shape");
        tr_out.matrix().max_abs_diff(&ComplexMatrix::identity(4))
    }

    /// The no-eavesdropper baseline: `ε_e = identity / 2` with `e` uniform.
    pub fn identity() -> Self {
        let half = KrausChannel::identity(4).scaled(0.5);
        Self {
            e0: half.clone(),
            e1: half,
        }
    }
}

// ---------------------------------------------------------------------------
// Reference Choi operators
// ---------------------------------------------------------------------------

/// The analytic optimal-attack Choi operator for `(protocol, e)`,
/// transcribed entry by entry in the frozen index ordering.
pub fn reference_choi(protocol: Protocol, e: u8) -> ChoiOperator {
    let m = match protocol {
        Protocol::Bb84Sq => reference_matrix_bb84(e),
        Protocol::E4 => reference_matrix_e4(e),
    };
    let op = HermitianOperator::new(m).expect("reference matrices are Hermitian");
    ChoiOperator::new(op, SubsystemShape::new(vec![2, 2, 2, 2]))
        .expect("reference matrices are PSD")
}

fn set_pair(m: &mut ComplexMatrix, i1: usize, j1: usize, v: Complex64) {
    // 1-based indices as printed.
    m.set(i1 - 1, j1 - 1, v);
    m.set(j1 - 1, i1 - 1, v.conj());
}

fn reference_matrix_bb84(e: u8) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(16, 16);
    let diag = [4, 2, 2, 1, 2, 4, 1, 2, 2, 1, 4, 2, 1, 2, 2, 4];
    for (i, d) in diag.iter().enumerate() {
        m.set(i, i, Complex64::new(*d as f64 / 18.0, 0.0));
    }
    let i9 = Complex64::new(0.0, 1.0 / 9.0);
    let r9 = Complex64::new(1.0 / 9.0, 0.0);
    let mut entries: Vec<(usize, usize, Complex64)> = Vec::new();
    for (i, j) in [(1, 4), (5, 8), (5, 12), (9, 12), (13, 16)] {
        entries.push((i, j, i9));
    }
    // Printed as conjugates: α*_{i,j} = i/9.
    for (i, j) in [(1, 13), (2, 14), (2, 15), (3, 14), (3, 15), (4, 16), (8, 9)] {
        entries.push((i, j, -i9));
    }
    entries.push((1, 16, r9 * 2.0));
    entries.push((6, 11, r9 * 2.0));
    for (i, j) in [(2, 3), (5, 9), (6, 7), (6, 10), (7, 11), (8, 12), (10, 11), (14, 15)] {
        entries.push((i, j, r9));
    }
    entries.push((7, 10, Complex64::new(1.0 / 18.0, 0.0)));
    entries.push((4, 13, Complex64::new(-1.0 / 18.0, 0.0)));
    for (i, j, v) in entries {
        // ε₁ keeps the diagonal and anti-diagonal entries and negates the
        // remaining ones.
        let keep = i + j == 17;
        let value = if e == 1 && !keep { -v } else { v };
        set_pair(&mut m, i, j, value);
    }
    m
}

fn reference_matrix_e4(e: u8) -> ComplexMatrix {
    let a = 3.0 - 2.0 * SQRT_2;
    let b = a / SQRT_2;
    let c = Complex64::from_polar(b, FRAC_PI_4);
    let d = a / 2.0;
    let f = Complex64::new(0.0, d);
    let c = if e == 1 { -c } else { c };

    let mut m = ComplexMatrix::zeros(16, 16);
    let diag = [a, b, b, d, b, a, d, b, b, d, a, b, d, b, b, a];
    for (i, v) in diag.iter().enumerate() {
        m.set(i, i, Complex64::new(*v, 0.0));
    }
    set_pair(&mut m, 1, 4, c);
    set_pair(&mut m, 1, 13, c.conj());
    set_pair(&mut m, 4, 16, c.conj());
    set_pair(&mut m, 13, 16, c);
    set_pair(&mut m, 1, 16, Complex64::new(a, 0.0));
    set_pair(&mut m, 4, 13, f.conj());
    m
}

// ---------------------------------------------------------------------------
// Optimal attacks in local Kraus form
// ---------------------------------------------------------------------------

/// One classical-communication branch of a local attack: `B₂` applies its
/// operator, announces the branch, and `B₁` applies the operator matching
/// the eavesdropper bit `e`.
#[derive(Debug, Clone)]
pub struct AttackBranch {
    /// `B₁` operators indexed by the eavesdropper bit.
    pub b1: [ComplexMatrix; 2],
    /// `B₂` operator, independent of the bit.
    pub b2: ComplexMatrix,
}

/// Local (per-site) Kraus decomposition of an optimal attack.
#[derive(Debug, Clone)]
pub struct LocalAttack {
    pub branches: Vec<AttackBranch>,
}

impl LocalAttack {
    /// Combine the local operators into a 4-dimensional attack pair.
    pub fn to_attack_pair(&self) -> Result<AttackPair, ChannelError> {
        let build = |e: usize| {
            let ops = self
                .branches
                .iter()
                .map(|br| tensor(&br.b1[e], &br.b2))
                .collect();
            KrausChannel::new(ops)
        };
        AttackPair::new(build(0)?, build(1)?)
    }
}

fn phase(angle: f64) -> Complex64 {
    Complex64::from_polar(1.0, angle)
}

fn mat2(a: Complex64, b: Complex64, c: Complex64, d: Complex64, scale: f64) -> ComplexMatrix {
    ComplexMatrix::new(2, 2, vec![a, b, c, d])
        .unwrap()
        .scale(Complex64::new(scale, 0.0))
}

/// Local Kraus operators of the optimal attack on a protocol.
pub fn optimal_attack_local(protocol: Protocol) -> LocalAttack {
    match protocol {
        Protocol::Bb84Sq => {
            let pref1 = 1.0 / 6.0f64.sqrt();
            let pref2 = 1.0 / (2.0 * 3.0f64.sqrt());
            let mut branches = Vec::new();
            for phi1 in [0.0, PI] {
                for phi2 in [0.0, PI] {
                    let b1 = [0, 1].map(|e| {
                        let sign = if e == 0 { 1.0 } else { -1.0 };
                        mat2(
                            Complex64::new(sign * SQRT_2, 0.0),
                            phase(phi1 - FRAC_PI_4),
                            phase(phi2 + FRAC_PI_4),
                            phase(phi1 + phi2) * (sign * SQRT_2),
                            pref1,
                        )
                    });
                    let b2 = mat2(
                        Complex64::new(SQRT_2, 0.0),
                        phase(-(phi1 + FRAC_PI_4)),
                        phase(-(phi2 - FRAC_PI_4)),
                        phase(phi1 + phi2) * SQRT_2,
                        pref2,
                    );
                    branches.push(AttackBranch { b1, b2 });
                }
            }
            LocalAttack { branches }
        }
        Protocol::E4 => {
            // The split of the overall scalar between the two sites is
            // pinned by the completeness relations: per branch
            // Σ_e K†_{e,B1} K_{e,B1} = I forces the B1 prefactor, and
            // Σ_branches K†_{B2} K_{B2} = I forces the B2 prefactor.
            let pref1 = 1.0 / (2.0 * (1.0 + SQRT_2)).sqrt();
            let pref2 = 1.0 / (27.0 * (1.0 + SQRT_2)).sqrt();
            let quartic = SQRT_2.sqrt();
            let phis = [0.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0];
            let mut branches = Vec::new();
            for phi1 in phis {
                for phi2 in phis {
                    for phi3 in phis {
                        let b1 = [0, 1].map(|e| {
                            let sign = if e == 0 { 1.0 } else { -1.0 };
                            mat2(
                                Complex64::new(sign * quartic, 0.0),
                                phase(phi1),
                                phase(phi2),
                                phase(phi3) * (sign * quartic),
                                pref1,
                            )
                        });
                        let b2 = mat2(
                            Complex64::new(quartic, 0.0),
                            phase(-(phi1 + FRAC_PI_4)),
                            phase(-(phi2 - FRAC_PI_4)),
                            phase(-phi3) * quartic,
                            pref2,
                        );
                        branches.push(AttackBranch { b1, b2 });
                    }
                }
            }
            LocalAttack { branches }
        }
    }
}

/// The optimal local attack pair for a protocol.
pub fn optimal_attack(protocol: Protocol) -> AttackPair {
    optimal_attack_local(protocol)
        .to_attack_pair()
        .expect("analytic attacks satisfy the pair invariant")
}

// ---------------------------------------------------------------------------
// Noise and attack families
// ---------------------------------------------------------------------------

/// Single-qubit isotropic depolarizing channel `D(ρ) = (1-p)ρ + p·I/2`.
pub fn depolarize(p: f64) -> Result<KrausChannel, ChannelError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(ChannelError::InvalidProbability(p));
    }
    let id = ComplexMatrix::identity(2).scale(Complex64::new((1.0 - 3.0 * p / 4.0).sqrt(), 0.0));
    let w = Complex64::new((p / 4.0).sqrt(), 0.0);
    KrausChannel::new(vec![
        id,
        crate::linalg::pauli_x().scale(w),
        crate::linalg::pauli_y().scale(w),
        crate::linalg::pauli_z().scale(w),
    ])
}

/// Independent depolarizing noise on both qubits with a trivial
/// eavesdropper (`e` uniform): `ε_e = D(p)⊗D(p) / 2`.
pub fn depolarizing_attack(p: f64) -> Result<AttackPair, ChannelError> {
    let d = depolarize(p)?;
    let mut ops = Vec::new();
    for k1 in d.ops() {
        for k2 in d.ops() {
            ops.push(tensor(k1, k2));
        }
    }
    let half = KrausChannel::new(ops)?.scaled(0.5);
    AttackPair::new(half.clone(), half)
}

/// With weight `λ` apply the given pair; with weight `1-λ` leave the state
/// untouched and emit `e` uniformly.
pub fn attack_mixture(pair: &AttackPair, lambda: f64) -> Result<AttackPair, ChannelError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(ChannelError::InvalidWeight(lambda));
    }
    let build = |e: u8| {
        let mut ops: Vec<ComplexMatrix> = pair.channel(e).scaled(lambda).ops().to_vec();
        ops.push(
            ComplexMatrix::identity(4).scale(Complex64::new(((1.0 - lambda) / 2.0).sqrt(), 0.0)),
        );
        KrausChannel::new(ops)
    };
    AttackPair::new(build(0)?, build(1)?)
}
