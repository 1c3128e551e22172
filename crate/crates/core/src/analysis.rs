//! Exact joint distributions, QBER, entropies, key rates, and key-rate
//! curves.
//!
//! Distributions are conditioned on kept (sifted) rounds and average over
//! state variants and compatible observable pairs. With a trace-preserving
//! attack pair the 8-entry table sums to one without renormalization.

use crate::channels::{apply, attack_mixture, optimal_attack, AttackPair, ChannelError, KrausChannel};
use crate::linalg::{tensor, HermitianOperator};
use crate::protocols::{Protocol, ProtocolSpec, SiftedRound};
use serde::Serialize;
use std::f64::consts::SQRT_2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("distribution entries must be nonnegative and sum to 1 (sum = {sum})")]
    NotADistribution { sum: f64 },
    #[error("grid point qber={qber} is infeasible for {protocol}: {reason}")]
    InfeasibleGridPoint {
        qber: f64,
        protocol: Protocol,
        reason: String,
    },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Protocol(#[from] crate::protocols::ProtocolError),
    #[error(transparent)]
    Sdp(#[from] crate::sdp::SdpError),
}

/// Binary entropy `h(p) = -p log₂ p - (1-p) log₂(1-p)` with `0·log 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |x: f64| if x < 1e-15 { 0.0 } else { -x * x.log2() };
    term(p) + term(1.0 - p)
}

fn entropy(probs: impl IntoIterator<Item = f64>) -> f64 {
    probs
        .into_iter()
        .map(|p| if p < 1e-15 { 0.0 } else { -p * p.log2() })
        .sum()
}

/// Which pair of parties to compute mutual information for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MutualInfoPair {
    AB,
    BE,
    AE,
}

/// The sifted single-round distribution `p(a, b, e)` with `b = b₁ ⊕ b₂`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointDistributionABE {
    p: [[[f64; 2]; 2]; 2],
}

impl JointDistributionABE {
    pub fn new(p: [[[f64; 2]; 2]; 2]) -> Result<Self, AnalysisError> {
        let mut sum = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                for e in 0..2 {
                    if p[a][b][e] < -1e-12 {
                        return Err(AnalysisError::NotADistribution { sum: p[a][b][e] });
                    }
                    sum += p[a][b][e];
                }
            }
        }
        if (sum - 1.0).abs() > 1e-10 {
            return Err(AnalysisError::NotADistribution { sum });
        }
        Ok(Self { p })
    }

    /// The noiseless baseline `p(a, b, e) = δ_{ab}/4`, exact in floating
    /// point (gives `K = 1.0` bit-exactly).
    pub fn noiseless() -> Self {
        let mut p = [[[0.0; 2]; 2]; 2];
        for a in 0..2 {
            for e in 0..2 {
                p[a][a][e] = 0.25;
            }
        }
        Self { p }
    }

    pub fn prob(&self, a: u8, b: u8, e: u8) -> f64 {
        self.p[a as usize][b as usize][e as usize]
    }

    /// `Pr(a ≠ b)`.
    pub fn qber(&self) -> f64 {
        let mut q = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                if a != b {
                    q += self.p[a][b][0] + self.p[a][b][1];
                }
            }
        }
        q
    }

    /// `Pr(e ≠ b)`.
    pub fn eve_error(&self) -> f64 {
        let mut q = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                for e in 0..2 {
                    if e != b {
                        q += self.p[a][b][e];
                    }
                }
            }
        }
        q
    }

    fn pair_marginal(&self, pair: MutualInfoPair) -> [[f64; 2]; 2] {
        let mut m = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                for e in 0..2 {
                    let (x, y) = match pair {
                        MutualInfoPair::AB => (a, b),
                        MutualInfoPair::BE => (b, e),
                        MutualInfoPair::AE => (a, e),
                    };
                    m[x][y] += self.p[a][b][e];
                }
            }
        }
        m
    }

    /// `I(X:Y) = H(X) + H(Y) − H(XY)` in bits.
    pub fn mutual_information(&self, pair: MutualInfoPair) -> f64 {
        let m = self.pair_marginal(pair);
        let hx = entropy([m[0][0] + m[0][1], m[1][0] + m[1][1]]);
        let hy = entropy([m[0][0] + m[1][0], m[0][1] + m[1][1]]);
        let hxy = entropy([m[0][0], m[0][1], m[1][0], m[1][1]]);
        hx + hy - hxy
    }

    /// One-way secret-key rate `K = I(A:B) − I(B:E)`; may be negative.
    pub fn key_rate(&self) -> f64 {
        self.mutual_information(MutualInfoPair::AB) - self.mutual_information(MutualInfoPair::BE)
    }

    /// Plug-in mutual information together with its delta-method standard
    /// error for an empirical table estimated from `n` samples.
    pub fn mutual_information_with_stderr(&self, pair: MutualInfoPair, n: usize) -> (f64, f64) {
        let m = self.pair_marginal(pair);
        let info = self.mutual_information(pair);
        let px = [m[0][0] + m[0][1], m[1][0] + m[1][1]];
        let py = [m[0][0] + m[1][0], m[0][1] + m[1][1]];
        let mut second = 0.0;
        for x in 0..2 {
            for y in 0..2 {
                let p = m[x][y];
                if p > 1e-15 && px[x] > 1e-15 && py[y] > 1e-15 {
                    let l = (p / (px[x] * py[y])).log2();
                    second += p * l * l;
                }
            }
        }
        let var = ((second - info * info) / n as f64).max(0.0);
        (info, var.sqrt())
    }
}

/// The sifted distribution `p(a, b₁, b₂)` with full per-Bob resolution
/// (no eavesdropper variable).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointDistributionAB {
    p: [[[f64; 2]; 2]; 2],
}

impl JointDistributionAB {
    pub fn prob(&self, a: u8, b1: u8, b2: u8) -> f64 {
        self.p[a as usize][b1 as usize][b2 as usize]
    }

    /// `QBER = Σ p(a,b₁,b₂) [1 − δ_{a, b₁⊕b₂}]`.
    pub fn qber(&self) -> f64 {
        let mut q = 0.0;
        for a in 0..2u8 {
            for b1 in 0..2u8 {
                for b2 in 0..2u8 {
                    if a != b1 ^ b2 {
                        q += self.prob(a, b1, b2);
                    }
                }
            }
        }
        q
    }
}

/// Exact sifted joint distribution of `(a, b, e)` under an attack pair:
/// `p(a,b,e) = Σ_j p(j,a) ⟨Π(j,b)⟩_{ε_e(ψ)}` averaged over state variants
/// and compatible observables.
pub fn joint_distribution(
    spec: &ProtocolSpec,
    attack: &AttackPair,
) -> Result<JointDistributionABE, AnalysisError> {
    let mut p = [[[0.0; 2]; 2]; 2];
    for row in &spec.bases {
        for a in 0..2usize {
            let variants = &row.states[a];
            let w_state = spec.state_probability(row.label, a as u8) / variants.len() as f64;
            for state in variants {
                let rho = state.density();
                for e in 0..2u8 {
                    let disturbed = apply(attack.channel(e), &rho)?;
                    for (k, _) in row.observables.iter().enumerate() {
                        let wk = w_state / row.observables.len() as f64;
                        for b in 0..2u8 {
                            let proj = spec.bob_povm(row.label, k, b)?;
                            p[a][b as usize][e as usize] += wk * disturbed.hs_inner(&proj);
                        }
                    }
                }
            }
        }
    }
    JointDistributionABE::new(p)
}

/// Exact sifted `p(a, b₁, b₂)` when both qubits pass through a (single)
/// trace-preserving channel and there is no eavesdropper.
pub fn joint_distribution_ab(
    spec: &ProtocolSpec,
    channel: &KrausChannel,
) -> Result<JointDistributionAB, AnalysisError> {
    let mut p = [[[0.0; 2]; 2]; 2];
    for row in &spec.bases {
        for a in 0..2usize {
            let variants = &row.states[a];
            let w_state = spec.state_probability(row.label, a as u8) / variants.len() as f64;
            for state in variants {
                let disturbed = apply(channel, &state.density())?;
                for pair in &row.observables {
                    let wk = w_state / row.observables.len() as f64;
                    let flip: u8 = if pair.sign < 0 { 1 } else { 0 };
                    for b1 in 0..2u8 {
                        for b2 in 0..2u8 {
                            let proj = HermitianOperator::new(tensor(
                                &pair.first.projector(b1),
                                &pair.second.projector(b2 ^ flip),
                            ))
                            .expect("projector products are Hermitian");
                            p[a][b1 as usize][b2 as usize] += wk * disturbed.hs_inner(&proj);
                        }
                    }
                }
            }
        }
    }
    Ok(JointDistributionAB { p })
}

/// Empirical `(a, b, e)` table from simulated rounds.
pub fn empirical_distribution(
    rounds: &[(SiftedRound, u8)],
) -> Result<JointDistributionABE, AnalysisError> {
    let mut counts = [[[0usize; 2]; 2]; 2];
    for (round, e) in rounds {
        counts[round.a as usize][round.bob_bit() as usize][*e as usize] += 1;
    }
    let total = rounds.len().max(1) as f64;
    let mut p = [[[0.0; 2]; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            for e in 0..2 {
                p[a][b][e] = counts[a][b][e] as f64 / total;
            }
        }
    }
    JointDistributionABE::new(p)
}

/// `p(a,b,e)` induced by a pair of Choi operators through the linear
/// formula `p(a,b,e) = Tr[P_e M(a,b)]`.
pub fn distribution_from_chois(
    spec: &ProtocolSpec,
    p0: &HermitianOperator,
    p1: &HermitianOperator,
) -> Result<JointDistributionABE, AnalysisError> {
    let m = pabe_functionals(spec);
    let mut p = [[[0.0; 2]; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            p[a][b][0] = p0.hs_inner(&m[a][b]);
            p[a][b][1] = p1.hs_inner(&m[a][b]);
        }
    }
    JointDistributionABE::new(p)
}

/// Hermitian coefficient operators `M(a,b)` on `H_out ⊗ H_in` such that
/// `p(a,b,e) = Tr[P_{ε_e} M(a,b)]` for any attack's Choi pair.
pub fn pabe_functionals(spec: &ProtocolSpec) -> [[HermitianOperator; 2]; 2] {
    let build = |a: usize, b: u8| {
        let mut acc = crate::linalg::ComplexMatrix::zeros(16, 16);
        for row in &spec.bases {
            let variants = &row.states[a];
            let w_state = spec.state_probability(row.label, a as u8) / variants.len() as f64;
            for state in variants {
                let rho_t = state.density().matrix().transpose();
                for (k, _) in row.observables.iter().enumerate() {
                    let wk = w_state / row.observables.len() as f64;
                    let proj = spec
                        .bob_povm(row.label, k, b)
                        .expect("table indices are valid");
                    let term = tensor(proj.matrix(), &rho_t)
                        .scale(num_complex::Complex64::new(wk, 0.0));
                    acc = &acc + &term;
                }
            }
        }
        HermitianOperator::new(acc).expect("sums of Hermitian tensors are Hermitian")
    };
    [[build(0, 0), build(0, 1)], [build(1, 0), build(1, 1)]]
}

/// QBER of a protocol under independent depolarizing noise `D(p) ⊗ D(p)`
/// with a trivial eavesdropper.
pub fn depolarizing_qber(spec: &ProtocolSpec, p: f64) -> Result<f64, AnalysisError> {
    let d = crate::channels::depolarize(p)?;
    let mut ops = Vec::new();
    for k1 in d.ops() {
        for k2 in d.ops() {
            ops.push(tensor(k1, k2));
        }
    }
    let both = KrausChannel::new(ops)?;
    Ok(joint_distribution_ab(spec, &both)?.qber())
}

/// Closed-form QBER threshold of a protocol under optimal local attacks.
pub fn analytic_threshold(protocol: Protocol) -> f64 {
    match protocol {
        Protocol::Bb84Sq => 5.0 / 18.0,
        Protocol::E4 => 2.0 * (SQRT_2 - 1.25),
    }
}

/// How a key-rate curve is generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveMethod {
    /// Interpolate the optimal attack with the identity channel; QBER is
    /// linear in the mixing weight.
    Mixture,
    /// Maximize the eavesdropper's agreement at each pinned QBER with the
    /// semidefinite program.
    Sdp,
}

impl CurveMethod {
    pub fn name(&self) -> &'static str {
        match self {
            CurveMethod::Mixture => "mixture",
            CurveMethod::Sdp => "sdp",
        }
    }
}

impl std::str::FromStr for CurveMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mixture" => Ok(CurveMethod::Mixture),
            "sdp" => Ok(CurveMethod::Sdp),
            other => Err(format!("unknown curve method '{other}'")),
        }
    }
}

/// One point of a key-rate curve.
#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub qber: f64,
    /// `None` marks an infeasible grid point.
    pub key_rate: Option<f64>,
    pub protocol: Protocol,
    pub method: CurveMethod,
}

/// Key rate as a function of measured QBER over a grid.
///
/// Grid point 0 uses the exact noiseless distribution. Infeasible points
/// (beyond the protocol threshold for the mixture family) are emitted with
/// `key_rate = None` rather than failing the whole curve.
pub fn keyrate_curve(
    spec: &ProtocolSpec,
    method: CurveMethod,
    grid: &[f64],
) -> Result<Vec<CurvePoint>, AnalysisError> {
    let threshold = analytic_threshold(spec.protocol);
    let mut points = Vec::with_capacity(grid.len());
    for &q in grid {
        let key_rate = if q == 0.0 {
            Some(JointDistributionABE::noiseless().key_rate())
        } else {
            match method {
                CurveMethod::Mixture => {
                    let lambda = q / threshold;
                    if !(0.0..=1.0 + 1e-12).contains(&lambda) {
                        None
                    } else {
                        let mixed =
                            attack_mixture(&optimal_attack(spec.protocol), lambda.min(1.0))?;
                        Some(joint_distribution(spec, &mixed)?.key_rate())
                    }
                }
                CurveMethod::Sdp => {
                    if q > 0.5 {
                        None
                    } else {
                        let problem = crate::sdp::build_eve_sdp(spec, q)?;
                        let opts = crate::sdp::SolveOptions {
                            gap_tol: 2e-7,
                            ..Default::default()
                        };
                        let solution = crate::sdp::solve(&problem, &opts)?;
                        let dist =
                            distribution_from_chois(spec, &solution.vars[0], &solution.vars[1])?;
                        Some(dist.key_rate())
                    }
                }
            }
        };
        points.push(CurvePoint {
            qber: q,
            key_rate,
            protocol: spec.protocol,
            method,
        });
    }
    Ok(points)
}

/// Render curve points as CSV with the fixed header
/// `qber,key_rate,protocol,method`; deterministic row order and formatting.
pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("qber,key_rate,protocol,method\n");
    for p in points {
        let k = match p.key_rate {
            Some(v) => format!("{v:.12}"),
            None => "nan".to_string(),
        };
        out.push_str(&format!(
            "{:.12},{},{},{}\n",
            p.qber,
            k,
            p.protocol.name(),
            p.method.name()
        ));
    }
    out
}
