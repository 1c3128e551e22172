//! Acceptance suite: one test per criterion, each printing a pass line
//! with the measured values. Criterion 11 (byte-identical CLI output)
//! lives in the CLI crate's own integration tests, next to the binary.

use qss_core::analysis::{
    analytic_threshold, depolarizing_qber, empirical_distribution, joint_distribution,
    keyrate_curve, CurveMethod, MutualInfoPair,
};
use qss_core::channels::{
    choi_from_kraus, depolarizing_attack, is_ppt, optimal_attack, optimal_attack_local,
    reference_choi, AttackPair, CHOI_B2_SUBSYSTEMS,
};
use qss_core::coding::{
    classical_share, codeword_length_bound, ec_success_probability, privacy_amplify, reconcile,
    BitString, RandomCode,
};
use qss_core::linalg::{partial_trace, ComplexMatrix, SubsystemShape};
use qss_core::protocols::{simulate_rounds, spec_for, Protocol};
use qss_core::sdp::{build_threshold_sdp, solve, SolveOptions};
use qss_core::seeding::derive_rng;
use rand::Rng;
use std::f64::consts::SQRT_2;
use std::time::Instant;

const E4_THRESHOLD: f64 = 2.0 * (SQRT_2 - 1.25);
const BB84_THRESHOLD: f64 = 5.0 / 18.0;

fn elapsed_under(start: Instant, limit_s: f64, what: &str) -> f64 {
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < limit_s, "{what} took {secs:.1} s (limit {limit_s} s)");
    secs
}

#[test]
fn criterion_01_threshold_reproduction_analytic_path() {
    let start = Instant::now();
    let q_bb = joint_distribution(&spec_for(Protocol::Bb84Sq), &optimal_attack(Protocol::Bb84Sq))
        .unwrap()
        .qber();
    let q_e4 = joint_distribution(&spec_for(Protocol::E4), &optimal_attack(Protocol::E4))
        .unwrap()
        .qber();
    assert!((q_bb - BB84_THRESHOLD).abs() <= 1e-9, "bb84sq qber {q_bb}");
    assert!((q_e4 - E4_THRESHOLD).abs() <= 1e-9, "e4 qber {q_e4}");
    let secs = elapsed_under(start, 1.0, "criterion 1");
    println!(
        "[PASS] criterion 1: QBER(bb84sq) = {q_bb:.12} (5/18), QBER(e4) = {q_e4:.12} (2(sqrt2-5/4))  [{secs:.2} s]"
    );
}

#[test]
fn criterion_02_gap_reproduction() {
    let start = Instant::now();
    let q_bb = joint_distribution(&spec_for(Protocol::Bb84Sq), &optimal_attack(Protocol::Bb84Sq))
        .unwrap()
        .qber();
    let q_e4 = joint_distribution(&spec_for(Protocol::E4), &optimal_attack(Protocol::E4))
        .unwrap()
        .qber();
    let gap_percent = (q_e4 / q_bb - 1.0) * 100.0;
    assert!(
        (gap_percent - 18.2).abs() <= 0.5,
        "relative gap {gap_percent:.3} %"
    );
    let secs = elapsed_under(start, 1.0, "criterion 2");
    println!("[PASS] criterion 2: relative threshold gap = {gap_percent:.3} %  [{secs:.2} s]");
}

#[test]
fn criterion_03_choi_consistency() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for protocol in [Protocol::Bb84Sq, Protocol::E4] {
        let attack = optimal_attack(protocol);
        for e in [0u8, 1] {
            let diff = choi_from_kraus(attack.channel(e))
                .operator()
                .sub(reference_choi(protocol, e).operator())
                .matrix()
                .frobenius_norm();
            assert!(diff <= 1e-9, "{protocol:?} e={e}: frobenius {diff:.3e}");
            worst = worst.max(diff);
        }
    }
    let secs = elapsed_under(start, 1.0, "criterion 3");
    println!(
        "[PASS] criterion 3: all four Choi operators match the printed matrices (worst frobenius {worst:.2e})  [{secs:.2} s]"
    );
}

#[test]
fn criterion_04_constraint_feasibility_of_analytic_optima() {
    let start = Instant::now();
    let shape = SubsystemShape::new(vec![2, 2, 2, 2]);
    for protocol in [Protocol::Bb84Sq, Protocol::E4] {
        let attack = optimal_attack(protocol);
        for e in [0u8, 1] {
            let choi = choi_from_kraus(attack.channel(e));
            let min_eig = choi.operator().min_eigenvalue();
            assert!(min_eig >= -1e-9, "{protocol:?} e={e}: psd {min_eig:.3e}");
            let (ppt, pt_eig) = is_ppt(&choi, &CHOI_B2_SUBSYSTEMS);
            assert!(ppt, "{protocol:?} e={e}: ppt min eig {pt_eig:.3e}");
        }
        // Trace preservation of the pair.
        let sum = choi_from_kraus(attack.channel(0))
            .operator()
            .add(choi_from_kraus(attack.channel(1)).operator());
        let tr_out = partial_trace(&sum, &shape, &[2, 3]).unwrap();
        let tp_dev = tr_out.matrix().max_abs_diff(&ComplexMatrix::identity(4));
        assert!(tp_dev <= 1e-10, "{protocol:?}: tp deviation {tp_dev:.3e}");
        // Kraus completeness relations.
        let i2 = ComplexMatrix::identity(2);
        let local = optimal_attack_local(protocol);
        let mut b2_sum = ComplexMatrix::zeros(2, 2);
        for branch in &local.branches {
            let mut b1_sum = ComplexMatrix::zeros(2, 2);
            for e in 0..2 {
                b1_sum = &b1_sum + &(&branch.b1[e].adjoint() * &branch.b1[e]);
            }
            assert!(b1_sum.max_abs_diff(&i2) <= 1e-12, "{protocol:?} b1");
            b2_sum = &b2_sum + &(&branch.b2.adjoint() * &branch.b2);
        }
        assert!(b2_sum.max_abs_diff(&i2) <= 1e-12, "{protocol:?} b2");
    }
    let secs = elapsed_under(start, 1.0, "criterion 4");
    println!(
        "[PASS] criterion 4: PSD, B2-PPT, trace preservation, and completeness all hold  [{secs:.2} s]"
    );
}

#[test]
fn criterion_05_security_equality_at_threshold() {
    let start = Instant::now();
    for protocol in [Protocol::Bb84Sq, Protocol::E4] {
        let dist = joint_distribution(&spec_for(protocol), &optimal_attack(protocol)).unwrap();
        let i_ab = dist.mutual_information(MutualInfoPair::AB);
        let i_be = dist.mutual_information(MutualInfoPair::BE);
        assert!(
            (i_ab - i_be).abs() <= 1e-9,
            "{protocol:?}: I(A:B)-I(B:E) = {:.3e}",
            i_ab - i_be
        );
        assert!(
            dist.key_rate().abs() <= 1e-9,
            "{protocol:?}: K = {:.3e}",
            dist.key_rate()
        );
    }
    let secs = elapsed_under(start, 1.0, "criterion 5");
    println!("[PASS] criterion 5: |I(A:B) - I(B:E)| <= 1e-9 and |K| <= 1e-9 at both optima  [{secs:.2} s]");
}

#[test]
fn criterion_06_sdp_rederivation() {
    for (protocol, target) in [
        (Protocol::Bb84Sq, BB84_THRESHOLD),
        (Protocol::E4, E4_THRESHOLD),
    ] {
        let start = Instant::now();
        let problem = build_threshold_sdp(&spec_for(protocol));
        let solution = solve(&problem, &SolveOptions::default()).unwrap();
        let gap = (solution.objective - target).abs();
        assert!(gap <= 1e-4, "{protocol:?}: objective gap {gap:.3e}");
        assert!(
            solution.residuals.max_equality_violation <= 1e-8,
            "{protocol:?}: equality violation {:.3e}",
            solution.residuals.max_equality_violation
        );
        assert!(
            solution.residuals.min_cone_eigenvalue >= -1e-8,
            "{protocol:?}: cone eigenvalue {:.3e}",
            solution.residuals.min_cone_eigenvalue
        );
        let secs = elapsed_under(start, 300.0, "criterion 6");
        println!(
            "[PASS] criterion 6 ({}): cold SDP objective {:.9} vs {target:.9} (gap {gap:.1e}, eq {:.1e}, {} newton)  [{secs:.1} s]",
            protocol.name(),
            solution.objective,
            solution.residuals.max_equality_violation,
            solution.newton_iterations
        );
    }
}

#[test]
fn criterion_07_depolarizing_law() {
    let start = Instant::now();
    for protocol in [Protocol::Bb84Sq, Protocol::E4] {
        let spec = spec_for(protocol);
        for step in 0..=20 {
            let p = step as f64 * 0.05;
            let q = depolarizing_qber(&spec, p).unwrap();
            let expect = p * (1.0 - p / 2.0);
            assert!(
                (q - expect).abs() <= 1e-12,
                "{protocol:?} p={p}: {q} vs {expect}"
            );
        }
    }
    let secs = elapsed_under(start, 10.0, "criterion 7");
    println!(
        "[PASS] criterion 7: QBER = p(1 - p/2) on the 0..1 grid for both protocols  [{secs:.2} s]"
    );
}

#[test]
fn criterion_08_curve_endpoints_and_shape() {
    let start = Instant::now();
    let mut curves = Vec::new();
    for protocol in [Protocol::Bb84Sq, Protocol::E4] {
        let threshold = analytic_threshold(protocol);
        let mut grid: Vec<f64> = vec![0.0, 0.05, 0.10, 0.15, 0.20, 0.25];
        if protocol == Protocol::E4 {
            grid.push(0.30);
        }
        grid.push(threshold);
        let points = keyrate_curve(&spec_for(protocol), CurveMethod::Sdp, &grid).unwrap();
        let ks: Vec<f64> = points.iter().map(|p| p.key_rate.unwrap()).collect();
        assert_eq!(ks[0], 1.0, "{protocol:?}: K(0) must be exactly 1");
        let k_end = *ks.last().unwrap();
        assert!(
            k_end <= 1e-6,
            "{protocol:?}: K(threshold) = {k_end:.3e} exceeds 1e-6"
        );
        for w in ks.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-6,
                "{protocol:?}: curve not monotone: {} -> {}",
                w[0],
                w[1]
            );
        }
        curves.push((protocol, grid, ks));
    }
    // Soft check: E4 dominates BB84^2 row-wise on the shared grid points.
    let (_, grid_bb, ks_bb) = &curves[0];
    let (_, grid_e4, ks_e4) = &curves[1];
    let mut soft_ok = true;
    for (i, q) in grid_bb.iter().enumerate() {
        if let Some(j) = grid_e4.iter().position(|x| (x - q).abs() < 1e-12) {
            if ks_e4[j] < ks_bb[i] - 1e-6 {
                soft_ok = false;
                println!(
                    "[WARN] criterion 8 soft check: K_e4({q}) = {} < K_bb84sq({q}) = {}",
                    ks_e4[j], ks_bb[i]
                );
            }
        }
    }
    let secs = elapsed_under(start, 600.0, "criterion 8");
    println!(
        "[PASS] criterion 8: K(0) = 1 exactly, K(threshold) <= 1e-6, curves monotone; E4 >= BB84^2 soft check {}  [{secs:.1} s]",
        if soft_ok { "holds" } else { "VIOLATED (reported, not fatal)" }
    );
}

#[test]
fn criterion_09_monte_carlo_consistency() {
    let start = Instant::now();
    let n = 1_000_000;
    let cases: Vec<(Protocol, AttackPair, u64, &str)> = vec![
        (Protocol::E4, AttackPair::identity(), 1001, "identity"),
        (
            Protocol::Bb84Sq,
            optimal_attack(Protocol::Bb84Sq),
            1002,
            "optimal bb84sq",
        ),
        (Protocol::E4, optimal_attack(Protocol::E4), 1003, "optimal e4"),
        (
            Protocol::Bb84Sq,
            depolarizing_attack(0.2).unwrap(),
            1004,
            "depolarize 0.2",
        ),
    ];
    for (protocol, attack, seed, label) in cases {
        let spec = spec_for(protocol);
        let exact = joint_distribution(&spec, &attack).unwrap().qber();
        let sim = simulate_rounds(&spec, &attack, n, seed).unwrap();
        let kept = sim.rounds.len() as f64;
        let sigma = (exact * (1.0 - exact) / kept).sqrt();
        let q = sim.empirical_qber();
        assert!(
            (q - exact).abs() <= 4.0 * sigma.max(1e-12),
            "{label}: empirical {q} vs exact {exact} (sigma {sigma:.2e})"
        );
        // The full empirical table also stays within binomial bounds.
        let table = empirical_distribution(&sim.rounds).unwrap();
        let exact_table = joint_distribution(&spec, &attack).unwrap();
        for a in 0..2u8 {
            for b in 0..2u8 {
                for e in 0..2u8 {
                    let p = exact_table.prob(a, b, e);
                    let s = (p * (1.0 - p) / kept).sqrt();
                    assert!(
                        (table.prob(a, b, e) - p).abs() <= 4.0 * s.max(1e-12),
                        "{label} cell ({a},{b},{e})"
                    );
                }
            }
        }
    }
    let secs = elapsed_under(start, 120.0, "criterion 9");
    println!(
        "[PASS] criterion 9: empirical QBER within 4 sigma at n = 10^6 for identity, optimal, depolarizing  [{secs:.1} s]"
    );
}

#[test]
fn criterion_10_reconciliation_trend_and_pipeline() {
    let start = Instant::now();
    let n = 16;
    let q = 0.1;
    let trials = 500;
    let bound = codeword_length_bound(n, q).unwrap();

    // Success rate nondecreasing in m up to two standard errors.
    let mut rates = Vec::new();
    for m in (bound - 6)..=n {
        let report = ec_success_probability(n, m, q, trials, 77).unwrap();
        rates.push((m, report.success_rate, report.stderr));
    }
    for w in rates.windows(2) {
        let (m0, r0, s0) = w[0];
        let (m1, r1, s1) = w[1];
        let slack = 2.0 * (s0 * s0 + s1 * s1).sqrt();
        assert!(
            r1 >= r0 - slack,
            "success rate drops from m={m0} ({r0:.3}) to m={m1} ({r1:.3}) beyond 2 stderr"
        );
    }

    // Perfect recovery at zero noise.
    let zero = ec_success_probability(n, codeword_length_bound(n, 0.0).unwrap(), 0.0, trials, 78)
        .unwrap();
    assert_eq!(zero.success_rate, 1.0, "q=0 success must be exactly 1");

    // End-to-end pipeline: identical final strings on every successful
    // trial.
    let m = (bound + 2).min(n);
    let mut successes = 0;
    for trial in 0..200u64 {
        let mut rng = derive_rng(4242, "acceptance-pipeline", trial);
        let message = BitString::random(n, &mut rng);
        let (b1, b2) = classical_share(&message, rng.gen());
        let noisy = BitString::new(
            message
                .bits()
                .iter()
                .map(|&b| if rng.gen_bool(q) { b ^ 1 } else { b })
                .collect(),
        );
        let code = RandomCode::new(n, m, rng.gen()).unwrap();
        let c1 = code.evaluate(&b1).unwrap();
        let c2 = code.evaluate(&b2).unwrap();
        let (x1, x2) = reconcile(&noisy, &c1, &c2, &code).unwrap();
        if x1.xor(&x2) == message {
            successes += 1;
            let hash_seed = rng.gen();
            let alice = privacy_amplify(&x1.xor(&x2), 8, hash_seed).unwrap();
            let bobs = privacy_amplify(&b1.xor(&b2), 8, hash_seed).unwrap();
            assert_eq!(alice, bobs, "amplified keys diverged on a successful trial");
        }
    }
    assert!(successes > 100, "only {successes}/200 pipeline successes");
    let secs = elapsed_under(start, 600.0, "criterion 10");
    println!(
        "[PASS] criterion 10: success nondecreasing in m (m in {}..={n}), 1.0 at q=0, pipeline consistent ({successes}/200 successes)  [{secs:.1} s]",
        bound - 6
    );
}
