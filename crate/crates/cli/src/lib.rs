//! Report-generating command logic behind the `qss-lab` binary.
//!
//! Every command resolves its full configuration (including defaults),
//! embeds it in the emitted report, and produces byte-identical output for
//! identical configurations. Reports go to stdout and optionally to
//! `--out`; timing goes to stderr only, so the report channel stays
//! deterministic.

use clap::{Args, Parser, Subcommand};
use qss_core::analysis::{
    analytic_threshold, curve_csv, empirical_distribution, joint_distribution, keyrate_curve,
    CurveMethod, CurvePoint, JointDistributionABE, MutualInfoPair,
};
use qss_core::channels::{
    attack_mixture, choi_from_kraus, depolarizing_attack, is_ppt, optimal_attack,
    optimal_attack_local, reference_choi, AttackPair, CHOI_B2_SUBSYSTEMS,
};
use qss_core::coding::{codeword_length_bound, ec_success_probability};
use qss_core::linalg::ComplexMatrix;
use qss_core::protocols::{simulate_rounds, spec_for, Protocol};
use qss_core::sdp::{build_threshold_sdp, certify, solve, SolveOptions};
use serde::Serialize;
use serde_json::json;
use std::path::PathBuf;
use std::str::FromStr;

/// Report schema identifier.
pub const SCHEMA: &str = "qss-lab/1";

/// Exit status carried alongside the rendered report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// All checks passed / command completed.
    Success,
    /// A check or solve failed.
    CheckFailure,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::CheckFailure => 1,
        }
    }
}

/// Command error: configuration problems exit with code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Parser)]
#[command(
    name = "qss-lab",
    version,
    about = "Security analysis of two-receiver quantum secret sharing"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every analytic check for a protocol's optimal attack.
    Verify(VerifyArgs),
    /// QBER threshold by the analytic formula or a cold SDP solve.
    Threshold(ThresholdArgs),
    /// Key rate versus QBER over a grid, as CSV.
    Curve(CurveArgs),
    /// Monte Carlo simulation of protocol rounds under an attack.
    Simulate(SimulateArgs),
    /// Random-coding reconciliation success estimate.
    Ec(EcArgs),
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Protocol: bb84sq or e4.
    #[arg(long)]
    pub protocol: String,
    /// Override every check tolerance with one value.
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Also write the report to this path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format: json or csv.
    #[arg(long, default_value = "json")]
    pub format: String,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    /// Protocol: bb84sq, e4, or omitted for both plus their ratio.
    #[arg(long)]
    pub protocol: Option<String>,
    /// Method: analytic or sdp.
    #[arg(long, default_value = "analytic")]
    pub method: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    pub format: String,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    /// Comma-separated protocols (default: both).
    #[arg(long, default_value = "bb84sq,e4")]
    pub protocols: String,
    /// Grid as start:stop:step over measured QBER.
    #[arg(long, default_value = "0:0.33:0.03")]
    pub grid: String,
    /// Method: sdp (default) or mixture.
    #[arg(long, default_value = "sdp")]
    pub method: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format: csv (default) or json.
    #[arg(long, default_value = "csv")]
    pub format: String,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Protocol: bb84sq or e4.
    #[arg(long)]
    pub protocol: String,
    /// Attack: none, optimal, mixture:<λ>, or depolarize:<p>.
    #[arg(long, default_value = "none")]
    pub attack: String,
    /// Rounds transmitted before sifting.
    #[arg(long, default_value_t = 100_000)]
    pub rounds: usize,
    /// Master seed; all randomness derives from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    pub format: String,
}

#[derive(Debug, Args)]
pub struct EcArgs {
    /// Block length (exhaustive search caps at 20).
    #[arg(long)]
    pub n: usize,
    /// Channel error rate of the XOR string.
    #[arg(long)]
    pub qber: f64,
    /// Codeword length, or "auto" for the ⌈n(1+h(q))/2⌉ bound.
    #[arg(long, default_value = "auto")]
    pub m: String,
    /// Monte Carlo trials.
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    pub format: String,
}

/// A rendered report plus its exit status and optional output file.
#[derive(Debug)]
pub struct RunOutput {
    pub report: String,
    pub outcome: Outcome,
    pub out_path: Option<PathBuf>,
}

impl RunOutput {
    fn emit(self) -> Result<RunOutput, ConfigError> {
        if let Some(path) = &self.out_path {
            std::fs::write(path, self.report.as_bytes())
                .map_err(|e| ConfigError(format!("cannot write {}: {e}", path.display())))?;
        }
        Ok(self)
    }
}

fn parse_protocol(s: &str) -> Result<Protocol, ConfigError> {
    Protocol::from_str(s).map_err(ConfigError)
}

fn parse_format(s: &str) -> Result<ReportFormat, ConfigError> {
    match s.to_ascii_lowercase().as_str() {
        "json" => Ok(ReportFormat::Json),
        "csv" => Ok(ReportFormat::Csv),
        other => Err(ConfigError(format!(
            "unknown format '{other}', expected json or csv"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

fn finish_json(value: serde_json::Value) -> String {
    let mut text = serde_json::to_string_pretty(&value).expect("reports serialize");
    text.push('\n');
    text
}

/// Dispatch a parsed command line.
pub fn run(cli: Cli) -> Result<RunOutput, ConfigError> {
    match cli.command {
        Command::Verify(args) => cmd_verify(args),
        Command::Threshold(args) => cmd_threshold(args),
        Command::Curve(args) => cmd_curve(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Ec(args) => cmd_ec(args),
    }
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct Check {
    name: String,
    value: f64,
    tolerance: f64,
    pass: bool,
}

fn check(name: &str, value: f64, default_tol: f64, overridden: Option<f64>) -> Check {
    let tolerance = overridden.unwrap_or(default_tol);
    Check {
        name: name.to_string(),
        value,
        tolerance,
        pass: value.abs() <= tolerance,
    }
}

pub fn cmd_verify(args: VerifyArgs) -> Result<RunOutput, ConfigError> {
    let protocol = parse_protocol(&args.protocol)?;
    let format = parse_format(&args.format)?;
    let spec = spec_for(protocol);
    let attack = optimal_attack(protocol);
    let local = optimal_attack_local(protocol);
    let tol = args.tolerance;

    let mut checks: Vec<Check> = Vec::new();

    // Choi match against the transcribed analytic matrices.
    for e in [0u8, 1] {
        let from_kraus = choi_from_kraus(attack.channel(e));
        let reference = reference_choi(protocol, e);
        let diff = from_kraus
            .operator()
            .sub(reference.operator())
            .matrix()
            .frobenius_norm();
        checks.push(check(&format!("choi_match[e={e}]"), diff, 1e-9, tol));

        let min_eig = from_kraus.operator().min_eigenvalue().min(0.0);
        checks.push(check(&format!("psd[e={e}]"), min_eig, 1e-9, tol));

        let (_, pt_eig) = is_ppt(&from_kraus, &CHOI_B2_SUBSYSTEMS);
        checks.push(check(&format!("ppt[e={e}]"), pt_eig.min(0.0), 1e-9, tol));
    }

    checks.push(check(
        "trace_preservation",
        attack.trace_preservation_deviation(),
        1e-10,
        tol,
    ));

    // Kraus completeness.
    let i2 = ComplexMatrix::identity(2);
    let mut b1_worst = 0.0f64;
    let mut b2_sum = ComplexMatrix::zeros(2, 2);
    for branch in &local.branches {
        let mut b1_sum = ComplexMatrix::zeros(2, 2);
        for e in 0..2 {
            b1_sum = &b1_sum + &(&branch.b1[e].adjoint() * &branch.b1[e]);
        }
        b1_worst = b1_worst.max(b1_sum.max_abs_diff(&i2));
        b2_sum = &b2_sum + &(&branch.b2.adjoint() * &branch.b2);
    }
    checks.push(check("completeness_b1_per_branch", b1_worst, 1e-12, tol));
    checks.push(check(
        "completeness_b2_total",
        b2_sum.max_abs_diff(&i2),
        1e-12,
        tol,
    ));

    // Distribution-level checks.
    let dist = joint_distribution(&spec, &attack)
        .map_err(|e| ConfigError(format!("distribution evaluation failed: {e}")))?;
    checks.push(check(
        "qber_vs_analytic",
        dist.qber() - analytic_threshold(protocol),
        1e-9,
        tol,
    ));
    let i_ab = dist.mutual_information(MutualInfoPair::AB);
    let i_be = dist.mutual_information(MutualInfoPair::BE);
    checks.push(check("security_equality", i_ab - i_be, 1e-9, tol));
    checks.push(check("key_rate_at_threshold", dist.key_rate(), 1e-9, tol));

    let all_pass = checks.iter().all(|c| c.pass);
    let config = json!({
        "command": "verify",
        "protocol": protocol,
        "tolerance_override": args.tolerance,
        "format": format,
    });
    let report = match format {
        ReportFormat::Json => finish_json(json!({
            "schema": SCHEMA,
            "version": env!("CARGO_PKG_VERSION"),
            "config": config,
            "checks": checks,
            "status": if all_pass { "pass" } else { "fail" },
            "protocol_spec": spec.to_json(),
            "choi_operators": {
                "e0": reference_choi(protocol, 0).to_json(),
                "e1": reference_choi(protocol, 1).to_json(),
            },
        })),
        ReportFormat::Csv => {
            let mut out = String::from("check,value,tolerance,pass\n");
            for c in &checks {
                out.push_str(&format!(
                    "{},{:.12e},{:.3e},{}\n",
                    c.name, c.value, c.tolerance, c.pass
                ));
            }
            out
        }
    };
    RunOutput {
        report,
        outcome: if all_pass {
            Outcome::Success
        } else {
            Outcome::CheckFailure
        },
        out_path: args.out,
    }
    .emit()
}

// ---------------------------------------------------------------------------
// threshold
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct ThresholdEntry {
    protocol: Protocol,
    method: String,
    threshold: f64,
    analytic: f64,
    gap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_equality_violation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    min_cone_eigenvalue: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    newton_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    distribution_distance: Option<f64>,
}

fn threshold_entry(protocol: Protocol, method: &str) -> Result<ThresholdEntry, ConfigError> {
    let spec = spec_for(protocol);
    let analytic = analytic_threshold(protocol);
    match method {
        "analytic" => {
            let dist = joint_distribution(&spec, &optimal_attack(protocol))
                .map_err(|e| ConfigError(e.to_string()))?;
            Ok(ThresholdEntry {
                protocol,
                method: method.into(),
                threshold: dist.qber(),
                analytic,
                gap: (dist.qber() - analytic).abs(),
                max_equality_violation: None,
                min_cone_eigenvalue: None,
                newton_iterations: None,
                distribution_distance: None,
            })
        }
        "sdp" => {
            let problem = build_threshold_sdp(&spec);
            let solution = solve(&problem, &SolveOptions::default())
                .map_err(|e| ConfigError(format!("sdp solve failed: {e}")))?;
            let report = certify(&solution, &spec, &problem, &optimal_attack(protocol));
            Ok(ThresholdEntry {
                protocol,
                method: method.into(),
                threshold: solution.objective,
                analytic,
                gap: report.objective_gap,
                max_equality_violation: Some(report.max_equality_violation),
                min_cone_eigenvalue: Some(report.min_cone_eigenvalue),
                newton_iterations: Some(solution.newton_iterations),
                distribution_distance: Some(report.distribution_distance),
            })
        }
        other => Err(ConfigError(format!(
            "unknown method '{other}', expected analytic or sdp"
        ))),
    }
}

pub fn cmd_threshold(args: ThresholdArgs) -> Result<RunOutput, ConfigError> {
    let format = parse_format(&args.format)?;
    let protocols: Vec<Protocol> = match &args.protocol {
        Some(p) => vec![parse_protocol(p)?],
        None => vec![Protocol::Bb84Sq, Protocol::E4],
    };
    let entries: Vec<ThresholdEntry> = protocols
        .iter()
        .map(|&p| threshold_entry(p, &args.method))
        .collect::<Result<_, _>>()?;

    let ratio_percent = if entries.len() == 2 {
        Some((entries[1].threshold / entries[0].threshold - 1.0) * 100.0)
    } else {
        None
    };
    // The SDP path must stay within its advertised accuracy of the
    // analytic value; treat larger gaps as a failed check.
    let ok = entries.iter().all(|e| e.gap <= 1e-4);
    let config = json!({
        "command": "threshold",
        "protocol": args.protocol,
        "method": args.method,
        "format": format,
        "gap_check_tolerance": 1e-4,
    });
    let report = match format {
        ReportFormat::Json => finish_json(json!({
            "schema": SCHEMA,
            "version": env!("CARGO_PKG_VERSION"),
            "config": config,
            "thresholds": entries,
            "ratio_percent": ratio_percent,
            "status": if ok { "pass" } else { "fail" },
        })),
        ReportFormat::Csv => {
            let mut out = String::from("protocol,method,threshold,analytic,gap\n");
            for e in &entries {
                out.push_str(&format!(
                    "{},{},{:.12},{:.12},{:.3e}\n",
                    e.protocol.name(),
                    e.method,
                    e.threshold,
                    e.analytic,
                    e.gap
                ));
            }
            if let Some(r) = ratio_percent {
                out.push_str(&format!("ratio_percent,,{r:.6},,\n"));
            }
            out
        }
    };
    RunOutput {
        report,
        outcome: if ok {
            Outcome::Success
        } else {
            Outcome::CheckFailure
        },
        out_path: args.out,
    }
    .emit()
}

// ---------------------------------------------------------------------------
// curve
// ---------------------------------------------------------------------------

fn parse_grid(text: &str) -> Result<Vec<f64>, ConfigError> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(ConfigError(format!(
            "grid '{text}' must be start:stop:step"
        )));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| {
            p.parse::<f64>()
                .map_err(|_| ConfigError(format!("bad grid number '{p}'")))
        })
        .collect::<Result<_, _>>()?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if step <= 0.0 || stop < start {
        return Err(ConfigError(format!("grid '{text}' is not increasing")));
    }
    let mut grid = Vec::new();
    let mut k = 0usize;
    loop {
        let q = start + step * k as f64;
        if q > stop + step * 1e-9 {
            break;
        }
        grid.push(q);
        k += 1;
    }
    Ok(grid)
}

pub fn cmd_curve(args: CurveArgs) -> Result<RunOutput, ConfigError> {
    let format = parse_format(&args.format)?;
    let method = CurveMethod::from_str(&args.method).map_err(ConfigError)?;
    let protocols: Vec<Protocol> = args
        .protocols
        .split(',')
        .map(|p| parse_protocol(p.trim()))
        .collect::<Result<_, _>>()?;
    let grid = parse_grid(&args.grid)?;

    let mut all_points: Vec<CurvePoint> = Vec::new();
    for &protocol in &protocols {
        let spec = spec_for(protocol);
        // Cap each protocol's grid at its threshold; points beyond are
        // flagged as infeasible rather than failing the run.
        let points =
            keyrate_curve(&spec, method, &grid).map_err(|e| ConfigError(e.to_string()))?;
        for p in &points {
            if p.key_rate.is_none() {
                eprintln!(
                    "warning: qber {:.6} is infeasible for {} with the {} method",
                    p.qber,
                    protocol.name(),
                    method.name()
                );
            }
        }
        all_points.extend(points);
    }
    let csv = curve_csv(&all_points);
    let config = json!({
        "command": "curve",
        "protocols": protocols,
        "grid": args.grid,
        "method": method,
        "format": format,
    });
    let report = match format {
        ReportFormat::Csv => csv,
        ReportFormat::Json => finish_json(json!({
            "schema": SCHEMA,
            "version": env!("CARGO_PKG_VERSION"),
            "config": config,
            "points": all_points,
            "csv": csv,
        })),
    };
    RunOutput {
        report,
        outcome: Outcome::Success,
        out_path: args.out,
    }
    .emit()
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn parse_attack(text: &str, protocol: Protocol) -> Result<(String, AttackPair), ConfigError> {
    let lower = text.to_ascii_lowercase();
    if lower == "none" {
        return Ok((lower, AttackPair::identity()));
    }
    if lower == "optimal" {
        return Ok((lower, optimal_attack(protocol)));
    }
    if let Some(rest) = lower.strip_prefix("mixture:") {
        let lambda: f64 = rest
            .parse()
            .map_err(|_| ConfigError(format!("bad mixture weight '{rest}'")))?;
        let pair = attack_mixture(&optimal_attack(protocol), lambda)
            .map_err(|e| ConfigError(e.to_string()))?;
        return Ok((lower, pair));
    }
    if let Some(rest) = lower.strip_prefix("depolarize:") {
        let p: f64 = rest
            .parse()
            .map_err(|_| ConfigError(format!("bad depolarization '{rest}'")))?;
        let pair = depolarizing_attack(p).map_err(|e| ConfigError(e.to_string()))?;
        return Ok((lower, pair));
    }
    Err(ConfigError(format!(
        "unknown attack '{text}', expected none | optimal | mixture:<w> | depolarize:<p>"
    )))
}

pub fn cmd_simulate(args: SimulateArgs) -> Result<RunOutput, ConfigError> {
    let protocol = parse_protocol(&args.protocol)?;
    let format = parse_format(&args.format)?;
    if args.rounds == 0 {
        return Err(ConfigError("rounds must be at least 1".into()));
    }
    let spec = spec_for(protocol);
    let (attack_name, attack) = parse_attack(&args.attack, protocol)?;
    let sim = simulate_rounds(&spec, &attack, args.rounds, args.seed)
        .map_err(|e| ConfigError(e.to_string()))?;
    let exact = joint_distribution(&spec, &attack).map_err(|e| ConfigError(e.to_string()))?;
    let kept = sim.rounds.len();
    let empirical: Option<JointDistributionABE> = if kept > 0 {
        Some(empirical_distribution(&sim.rounds).map_err(|e| ConfigError(e.to_string()))?)
    } else {
        None
    };

    let mut results = json!({
        "rounds": args.rounds,
        "kept": kept,
        "sift_rate": sim.sift_rate(),
        "empirical_qber": sim.empirical_qber(),
        "exact_qber": exact.qber(),
    });
    if attack_name != "none" {
        if let Some(emp) = &empirical {
            let (i_ab, se_ab) = emp.mutual_information_with_stderr(MutualInfoPair::AB, kept);
            let (i_be, se_be) = emp.mutual_information_with_stderr(MutualInfoPair::BE, kept);
            results["mutual_information"] = json!({
                "i_ab": i_ab,
                "i_ab_stderr": se_ab,
                "i_be": i_be,
                "i_be_stderr": se_be,
                "key_rate": i_ab - i_be,
                "exact_i_ab": exact.mutual_information(MutualInfoPair::AB),
                "exact_i_be": exact.mutual_information(MutualInfoPair::BE),
            });
        }
    }

    let config = json!({
        "command": "simulate",
        "protocol": protocol,
        "attack": attack_name,
        "rounds": args.rounds,
        "seed": args.seed,
        "format": format,
    });
    let report = match format {
        ReportFormat::Json => finish_json(json!({
            "schema": SCHEMA,
            "version": env!("CARGO_PKG_VERSION"),
            "config": config,
            "results": results,
        })),
        ReportFormat::Csv => {
            let mut out = String::from("metric,value\n");
            out.push_str(&format!("rounds,{}\n", args.rounds));
            out.push_str(&format!("kept,{kept}\n"));
            out.push_str(&format!("sift_rate,{:.12}\n", sim.sift_rate()));
            out.push_str(&format!("empirical_qber,{:.12}\n", sim.empirical_qber()));
            out.push_str(&format!("exact_qber,{:.12}\n", exact.qber()));
            out
        }
    };
    RunOutput {
        report,
        outcome: Outcome::Success,
        out_path: args.out,
    }
    .emit()
}

// ---------------------------------------------------------------------------
// ec
// ---------------------------------------------------------------------------

pub fn cmd_ec(args: EcArgs) -> Result<RunOutput, ConfigError> {
    let format = parse_format(&args.format)?;
    if args.n > qss_core::coding::MAX_SEARCH_BITS {
        return Err(ConfigError(format!(
            "n = {} exceeds the exhaustive-search cap {}",
            args.n,
            qss_core::coding::MAX_SEARCH_BITS
        )));
    }
    let bound = codeword_length_bound(args.n, args.qber).map_err(|e| ConfigError(e.to_string()))?;
    let m = match args.m.as_str() {
        "auto" => bound.min(args.n),
        other => other
            .parse::<usize>()
            .map_err(|_| ConfigError(format!("bad m '{other}', expected integer or auto")))?,
    };
    let report_data = ec_success_probability(args.n, m, args.qber, args.trials, args.seed)
        .map_err(|e| ConfigError(e.to_string()))?;

    let config = json!({
        "command": "ec",
        "n": args.n,
        "qber": args.qber,
        "m": m,
        "m_requested": args.m,
        "codeword_length_bound": bound,
        "trials": args.trials,
        "seed": args.seed,
        "format": format,
    });
    let report = match format {
        ReportFormat::Json => finish_json(json!({
            "schema": SCHEMA,
            "version": env!("CARGO_PKG_VERSION"),
            "config": config,
            "results": report_data,
        })),
        ReportFormat::Csv => {
            let mut out = String::from("metric,value\n");
            out.push_str(&format!("n,{}\n", report_data.n));
            out.push_str(&format!("m,{}\n", report_data.m));
            out.push_str(&format!("qber,{:.12}\n", report_data.qber));
            out.push_str(&format!("trials,{}\n", report_data.trials));
            out.push_str(&format!("success_rate,{:.12}\n", report_data.success_rate));
            out.push_str(&format!("stderr,{:.12}\n", report_data.stderr));
            out.push_str(&format!("retries,{}\n", report_data.retries));
            out
        }
    };
    RunOutput {
        report,
        outcome: Outcome::Success,
        out_path: args.out,
    }
    .emit()
}
