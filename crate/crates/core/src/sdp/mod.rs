//! Threshold semidefinite programs over Choi-operator variables and a
//! small dense interior-point solver.
//!
//! Problems have a list of Hermitian matrix variables, PSD cone
//! constraints (optionally after a partial transpose), linear equality
//! constraints with Hermitian coefficient patterns, and a linear
//! objective. The two builders produce the security programs:
//!
//! - [`build_threshold_sdp`]: minimize the QBER subject to trace
//!   preservation, positivity, positivity after the `B₂` partial
//!   transpose, global bit-flip symmetry of `p(a,b,e)`, and the security
//!   equality `Pr(e≠b) = Pr(a≠b)`. Under the imposed symmetry both
//!   `(A,B)` and `(B,E)` pairs are binary symmetric with uniform
//!   marginals, so the equality is exactly `I(A:B) = I(B:E)`, and its
//!   smallest achievable QBER is the protocol threshold.
//! - [`build_eve_sdp`]: pin the QBER and maximize `Pr(e = b)`, used for
//!   key-rate curves.

mod solver;

pub use solver::solve;

use crate::analysis::pabe_functionals;
use crate::channels::{choi_from_kraus, AttackPair, KrausChannel, CHOI_B2_SUBSYSTEMS};
use crate::linalg::{
    eigenvalues_hermitian, partial_transpose, ComplexMatrix, HermitianOperator, SubsystemShape,
};
use crate::protocols::ProtocolSpec;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("qber {0} is outside the feasible range of the program")]
    InfeasibleQber(f64),
    #[error("ill-posed problem: {0}")]
    BadProblem(String),
    #[error("iteration cap exceeded; best iterate has objective {objective} and max equality violation {violation:.3e}")]
    IterationCap { objective: f64, violation: f64 },
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
}

/// Optimization direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// A real-valued linear functional `vars ↦ Σ_v Tr[vars[v] · coeffs[v]]`.
#[derive(Debug, Clone)]
pub struct LinearFunctional {
    pub coeffs: Vec<HermitianOperator>,
}

impl LinearFunctional {
    pub fn value(&self, vars: &[HermitianOperator]) -> f64 {
        self.coeffs
            .iter()
            .zip(vars.iter())
            .map(|(c, v)| c.hs_inner(v))
            .sum()
    }
}

/// One linear equality `functional(vars) = target`.
#[derive(Debug, Clone)]
pub struct LinearConstraint {
    pub functional: LinearFunctional,
    pub target: f64,
    pub label: String,
}

/// A positivity requirement on a variable, optionally after a partial
/// transpose.
#[derive(Debug, Clone)]
pub struct ConeSpec {
    pub var: usize,
    pub transform: Option<(SubsystemShape, Vec<usize>)>,
    pub label: String,
}

impl ConeSpec {
    /// The matrix whose positivity this cone requires.
    pub fn realize(&self, vars: &[HermitianOperator]) -> HermitianOperator {
        match &self.transform {
            None => vars[self.var].clone(),
            Some((shape, transposed)) => partial_transpose(&vars[self.var], shape, transposed)
                .expect("cone shapes are validated at build time"),
        }
    }
}

/// A semidefinite program over Hermitian matrix variables.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub var_dims: Vec<usize>,
    pub cones: Vec<ConeSpec>,
    pub equalities: Vec<LinearConstraint>,
    pub objective: LinearFunctional,
    pub sense: Sense,
    /// A point satisfying every equality with all cone matrices positive
    /// definite; the barrier method starts here.
    pub interior_point: Vec<HermitianOperator>,
}

impl SdpProblem {
    pub fn objective_value(&self, vars: &[HermitianOperator]) -> f64 {
        self.objective.value(vars)
    }
}

/// Feasibility numbers recomputed from a candidate point alone.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Residuals {
    pub max_equality_violation: f64,
    pub min_cone_eigenvalue: f64,
}

/// Solver output.
#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub vars: Vec<HermitianOperator>,
    pub objective: f64,
    pub residuals: Residuals,
    pub newton_iterations: usize,
    /// Central-path estimate of the distance to the true optimum:
    /// `ν / t` at the last tightly centered barrier stage. The reported
    /// objective sits within this amount on the suboptimal side.
    pub duality_gap_estimate: f64,
}

/// Independent feasibility check: every equality violation and the
/// minimum eigenvalue over all cone matrices, from `vars` alone.
pub fn check_residuals(problem: &SdpProblem, vars: &[HermitianOperator]) -> Residuals {
    let max_equality_violation = problem
        .equalities
        .iter()
        .map(|c| (c.functional.value(vars) - c.target).abs())
        .fold(0.0, f64::max);
    let min_cone_eigenvalue = problem
        .cones
        .iter()
        .map(|cone| {
            let s = cone.realize(vars);
            eigenvalues_hermitian(&s)[0]
        })
        .fold(f64::INFINITY, f64::min);
    Residuals {
        max_equality_violation,
        min_cone_eigenvalue,
    }
}

/// Solver tolerances and caps.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Required bound on equality violations of the returned point.
    pub feas_tol: f64,
    /// Target objective gap (barrier parameter is pushed to ν/gap_tol).
    pub gap_tol: f64,
    /// Cap on total Newton iterations.
    pub max_newton_iters: usize,
    /// Barrier parameter multiplier per outer stage.
    pub mu: f64,
    /// Initial barrier parameter.
    pub t_init: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-8,
            gap_tol: 1e-6,
            max_newton_iters: 4000,
            mu: 8.0,
            t_init: 1.0,
        }
    }
}

fn choi_shape_16() -> (SubsystemShape, Vec<usize>) {
    (
        SubsystemShape::new(vec![2, 2, 2, 2]),
        CHOI_B2_SUBSYSTEMS.to_vec(),
    )
}

fn zero16() -> ComplexMatrix {
    ComplexMatrix::zeros(16, 16)
}

/// Trace-preservation equalities `Tr_out(P₀ + P₁) = I₄` as 16 real
/// constraints with Hermitian coefficient patterns.
fn trace_preservation_constraints() -> Vec<LinearConstraint> {
    let mut out = Vec::new();
    let one = Complex64::new(1.0, 0.0);
    let half = Complex64::new(0.5, 0.0);
    let half_i = Complex64::new(0.0, 0.5);
    // Diagonal entries.
    for i in 0..4 {
        let mut g = zero16();
        for o in 0..4 {
            g.set(4 * o + i, 4 * o + i, one);
        }
        let op = HermitianOperator::new(g).unwrap();
        out.push(LinearConstraint {
            functional: LinearFunctional {
                coeffs: vec![op.clone(), op],
            },
            target: 1.0,
            label: format!("tp[{i},{i}]"),
        });
    }
    // Off-diagonal entries, real and imaginary parts.
    for i in 0..4 {
        for j in (i + 1)..4 {
            let mut gr = zero16();
            let mut gi = zero16();
            for o in 0..4 {
                gr.set(4 * o + i, 4 * o + j, half);
                gr.set(4 * o + j, 4 * o + i, half);
                gi.set(4 * o + i, 4 * o + j, half_i);
                gi.set(4 * o + j, 4 * o + i, -half_i);
            }
            for (g, part) in [(gr, "re"), (gi, "im")] {
                let op = HermitianOperator::new(g).unwrap();
                out.push(LinearConstraint {
                    functional: LinearFunctional {
                        coeffs: vec![op.clone(), op],
                    },
                    target: 0.0,
                    label: format!("tp[{i},{j}]{part}"),
                });
            }
        }
    }
    out
}

/// Global bit-flip symmetry equalities
/// `p(a,b,0) = p(1-a, 1-b, 1)` for all `(a,b)`.
fn symmetry_constraints(m: &[[HermitianOperator; 2]; 2]) -> Vec<LinearConstraint> {
    let mut out = Vec::new();
    for a in 0..2usize {
        for b in 0..2usize {
            out.push(LinearConstraint {
                functional: LinearFunctional {
                    coeffs: vec![m[a][b].clone(), m[1 - a][1 - b].scale(-1.0)],
                },
                target: 0.0,
                label: format!("symmetry[a={a},b={b}]"),
            });
        }
    }
    out
}

fn qber_functional(m: &[[HermitianOperator; 2]; 2]) -> LinearFunctional {
    let err = m[0][1].add(&m[1][0]);
    LinearFunctional {
        coeffs: vec![err.clone(), err],
    }
}

fn eve_agreement_functional(m: &[[HermitianOperator; 2]; 2]) -> LinearFunctional {
    // Pr(e = b): e = 0 matches b = 0 on P₀, e = 1 matches b = 1 on P₁.
    let b0 = m[0][0].add(&m[1][0]);
    let b1 = m[0][1].add(&m[1][1]);
    LinearFunctional {
        coeffs: vec![b0, b1],
    }
}

fn base_cones() -> Vec<ConeSpec> {
    let mut cones = Vec::new();
    for var in 0..2usize {
        cones.push(ConeSpec {
            var,
            transform: None,
            label: format!("psd[P{var}]"),
        });
        cones.push(ConeSpec {
            var,
            transform: Some(choi_shape_16()),
            label: format!("ppt[P{var}]"),
        });
    }
    cones
}

/// The uniform attack point `P_e = I/8` (QBER 1/2, `e` uniform).
fn uniform_point() -> Vec<HermitianOperator> {
    let p = HermitianOperator::new(ComplexMatrix::identity(16).scale(Complex64::new(0.125, 0.0)))
        .unwrap();
    vec![p.clone(), p]
}

/// The identity-channel point `P_e = P_id / 2` (QBER 0, `e` uniform).
fn identity_point() -> Vec<HermitianOperator> {
    let choi = choi_from_kraus(&KrausChannel::identity(4));
    let p = choi.operator().scale(0.5);
    vec![p.clone(), p]
}

/// Threshold program: minimize the QBER over symmetric PPT attack pairs
/// satisfying the security equality. The optimum is the protocol's
/// tolerable-QBER threshold.
pub fn build_threshold_sdp(spec: &ProtocolSpec) -> SdpProblem {
    let m = pabe_functionals(spec);
    let mut equalities = trace_preservation_constraints();
    equalities.extend(symmetry_constraints(&m));

    // Security equality Pr(e≠b) - Pr(a≠b) = 0.
    let qber = qber_functional(&m);
    let eve_err_p0 = m[0][1].add(&m[1][1]); // e = 0, b = 1
    let eve_err_p1 = m[0][0].add(&m[1][0]); // e = 1, b = 0
    equalities.push(LinearConstraint {
        functional: LinearFunctional {
            coeffs: vec![
                eve_err_p0.sub(&qber.coeffs[0]),
                eve_err_p1.sub(&qber.coeffs[1]),
            ],
        },
        target: 0.0,
        label: "security".to_string(),
    });

    SdpProblem {
        var_dims: vec![16, 16],
        cones: base_cones(),
        equalities,
        objective: qber,
        sense: Sense::Minimize,
        interior_point: uniform_point(),
    }
}

/// Eavesdropper program at pinned QBER `q`: maximize `Pr(e = b)` over
/// symmetric PPT attack pairs with `Pr(a≠b) = q`.
///
/// Strictly interior starting points exist for `q ∈ (0, 1/2]`; the `q = 0`
/// slice lies on the cone boundary (the QBER functional is PSD), where the
/// optimum is the no-information value 1/2 attained by the identity point.
pub fn build_eve_sdp(spec: &ProtocolSpec, q: f64) -> Result<SdpProblem, SdpError> {
    if !(0.0..=0.5).contains(&q) {
        return Err(SdpError::InfeasibleQber(q));
    }
    let m = pabe_functionals(spec);
    let mut equalities = trace_preservation_constraints();
    equalities.extend(symmetry_constraints(&m));
    equalities.push(LinearConstraint {
        functional: qber_functional(&m),
        target: q,
        label: "qber-pin".to_string(),
    });

    // Mixture of the identity point (QBER 0) and the uniform point
    // (QBER 1/2): strictly interior for q > 0 and exactly at QBER q.
    let w = 2.0 * q;
    let id = identity_point();
    let uni = uniform_point();
    let interior_point = (0..2)
        .map(|v| id[v].scale(1.0 - w).add(&uni[v].scale(w)))
        .collect();

    Ok(SdpProblem {
        var_dims: vec![16, 16],
        cones: base_cones(),
        equalities,
        objective: eve_agreement_functional(&m),
        sense: Sense::Maximize,
        interior_point,
    })
}

/// Certification of a solution against an analytic attack pair.
#[derive(Debug, Clone, Serialize)]
pub struct CertifyReport {
    pub objective: f64,
    pub analytic_objective: f64,
    pub objective_gap: f64,
    pub max_equality_violation: f64,
    pub min_cone_eigenvalue: f64,
    /// Total-variation distance between the solver attack's `p(a,b,e)`
    /// and the analytic attack's (the Choi matrices themselves need not
    /// be unique).
    pub distribution_distance: f64,
}

impl CertifyReport {
    pub fn human_readable(&self) -> String {
        format!(
            "objective {:.9} vs analytic {:.9} (gap {:.3e})\n\
             max equality violation {:.3e}\n\
             min cone eigenvalue {:.3e}\n\
             p(a,b,e) total-variation distance {:.3e}",
            self.objective,
            self.analytic_objective,
            self.objective_gap,
            self.max_equality_violation,
            self.min_cone_eigenvalue,
            self.distribution_distance
        )
    }
}

/// Compare a threshold-program solution with the analytic optimum: the
/// objective gap, independently recomputed residuals, and the distance of
/// the induced distributions.
pub fn certify(
    solution: &SdpSolution,
    spec: &ProtocolSpec,
    problem: &SdpProblem,
    reference: &AttackPair,
) -> CertifyReport {
    let residuals = check_residuals(problem, &solution.vars);
    let analytic = crate::analysis::joint_distribution(spec, reference)
        .expect("analytic attacks induce valid distributions");
    let analytic_objective = match problem.sense {
        Sense::Minimize => analytic.qber(),
        Sense::Maximize => 1.0 - analytic.eve_error(),
    };
    let solved =
        crate::analysis::distribution_from_chois(spec, &solution.vars[0], &solution.vars[1])
            .expect("solver points stay near the distribution simplex");
    let mut tv = 0.0;
    for a in 0..2u8 {
        for b in 0..2u8 {
            for e in 0..2u8 {
                tv += (solved.prob(a, b, e) - analytic.prob(a, b, e)).abs();
            }
        }
    }
    CertifyReport {
        objective: solution.objective,
        analytic_objective,
        objective_gap: (solution.objective - analytic_objective).abs(),
        max_equality_violation: residuals.max_equality_violation,
        min_cone_eigenvalue: residuals.min_cone_eigenvalue,
        distribution_distance: tv / 2.0,
    }
}
