//! Experiment harness: many protocol runs under one deterministic seed,
//! aggregated into a report with closed-form predictions and pass/fail
//! flags.
//!
//! Every trial derives its own stream from the experiment seed and its
//! trial index, so reports are byte-for-byte reproducible regardless of
//! how the trials are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{
    overall_acceptance_bound, predicted_comp_acceptance, predicted_test_rejection, ProverSpec,
};
use crate::circuit::{
    classify_instance, compile_to_gadgets, parse_circuit, serialize_circuit, InstanceLabel,
};
use crate::epr::run_epr;
use crate::protocol::{execute, ProverPolicy, RunType};
use crate::stats::{binomial_sigma, derive_seed};
use crate::{Error, Result};

/// Which form of the protocol carries the run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProtocolChoice {
    /// The verifier prepares and sends each qubit itself.
    Direct,
    /// The verifier shares entangled pairs and defers its measurements.
    Epr,
}

impl ProtocolChoice {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolChoice::Direct => "direct",
            ProtocolChoice::Epr => "epr",
        }
    }
}

/// How the verifier picks the run type each trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunPolicy {
    /// Fresh uniform draw over the three run types every trial.
    Random,
    Comp,
    XTest,
    ZTest,
}

impl RunPolicy {
    pub fn name(self) -> &'static str {
        match self {
            RunPolicy::Random => "random",
            RunPolicy::Comp => "comp",
            RunPolicy::XTest => "xtest",
            RunPolicy::ZTest => "ztest",
        }
    }

    fn fixed_run(self) -> Option<RunType> {
        match self {
            RunPolicy::Random => None,
            RunPolicy::Comp => Some(RunType::Comp),
            RunPolicy::XTest => Some(RunType::XTest),
            RunPolicy::ZTest => Some(RunType::ZTest),
        }
    }
}

/// Everything one experiment needs: the circuit source text, the protocol
/// form, the prover, the run-type policy, and the trial budget.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub circuit: String,
    pub protocol: ProtocolChoice,
    pub prover: ProverSpec,
    pub run_policy: RunPolicy,
    pub trials: u64,
    pub seed: u64,
}

/// Aggregate counts for one run type.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunTally {
    pub trials: u64,
    pub accepts: u64,
    pub check_failures: u64,
    /// Histogram of the per-trial output bit: the decrypted output where
    /// one is defined, otherwise the raw reported bit.
    pub out_hist: [u64; 2],
}

impl RunTally {
    fn accept_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.accepts as f64 / self.trials as f64
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceReport {
    pub kind: String,
    pub p: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DimsReport {
    pub n: usize,
    pub t: usize,
    pub m: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRow {
    pub run_type: String,
    pub trials: u64,
    pub accepts: u64,
    pub accept_rate: f64,
    pub check_failures: u64,
    pub output_zero: u64,
    pub output_one: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OverallReport {
    pub trials: u64,
    pub accepts: u64,
    pub accept_rate: f64,
}

/// Closed-form predictions for an attacked run, all derived from the
/// attack's flip mass and the instance's ideal output probability.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PredictionsReport {
    /// Probability mass of the attack on reported-bit flips.
    pub nu: f64,
    /// Complementary mass that leaves every reported bit alone.
    pub benign_mass: f64,
    /// Upper bound on computation-run acceptance: `p * benign_mass + nu`.
    pub comp_acceptance_bound: f64,
    /// Upper bound on overall acceptance for no instances:
    /// `2/3 + p * benign_mass / 3`; absent when `p > 1/3`.
    pub overall_bound: Option<f64>,
}

/// One statistical check of the observed rates against a prediction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlagReport {
    pub name: String,
    pub passed: bool,
    pub observed: f64,
    pub expected: f64,
    pub tolerance: f64,
}

/// Full experiment report.  Field order is fixed, so serializing the same
/// experiment twice yields identical bytes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub circuit: String,
    pub instance: InstanceReport,
    pub dims: DimsReport,
    pub protocol: String,
    pub prover: String,
    pub run_policy: String,
    pub trials: u64,
    pub seed: u64,
    pub per_run: Vec<RunRow>,
    pub overall: OverallReport,
    pub predictions: Option<PredictionsReport>,
    pub flags: Vec<FlagReport>,
}

/// Output encodings for [`emit_report`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Text,
}

struct TrialRecord {
    run_type: RunType,
    accept: bool,
    checks_passed: bool,
    hist_bit: u8,
}

fn tally_index(run: RunType) -> usize {
    match run {
        RunType::Comp => 0,
        RunType::XTest => 1,
        RunType::ZTest => 2,
    }
}

const FLOAT_SLACK: f64 = 1e-12;

fn two_sided(name: &str, observed: f64, expected: f64, sigma: f64) -> FlagReport {
    let tolerance = 3.0 * sigma;
    FlagReport {
        name: name.to_string(),
        passed: (observed - expected).abs() <= tolerance + FLOAT_SLACK,
        observed,
        expected,
        tolerance,
    }
}

fn one_sided_upper(name: &str, observed: f64, expected: f64, sigma: f64) -> FlagReport {
    let tolerance = 3.0 * sigma;
    FlagReport {
        name: name.to_string(),
        passed: observed <= expected + tolerance + FLOAT_SLACK,
        observed,
        expected,
        tolerance,
    }
}

/// Runs the configured experiment and aggregates it into a [`Report`].
///
/// The attack, if any, is validated once up front; trials then run in
/// parallel, each seeded from `(seed, trial index)`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Report> {
    let circuit = parse_circuit(&config.circuit)?;
    let label = classify_instance(&circuit)?;
    let program = compile_to_gadgets(&circuit)?;
    let dims = program.dims();
    if let ProverSpec::Attacked(attack) = &config.prover {
        if config.protocol == ProtocolChoice::Direct {
            return Err(Error::Invalid(
                "attacked provers need the entangled-pair protocol".into(),
            ));
        }
        if attack.dims() != dims {
            return Err(Error::Attack(format!(
                "attack written for register (n={}, t={}) but the program has (n={}, t={})",
                attack.dims().n,
                attack.dims().t,
                dims.n,
                dims.t
            )));
        }
        attack.validate_executable()?;
    }
    let records: Vec<TrialRecord> = (0..config.trials)
        .into_par_iter()
        .map(|i| -> Result<TrialRecord> {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, i));
            // The run-type draw comes first so forced-run experiments stay
            // trial-for-trial comparable with random ones.
            let drawn = RunType::sample(&mut rng);
            let run_type = config.run_policy.fixed_run().unwrap_or(drawn);
            let outcome = match (config.protocol, &config.prover) {
                (ProtocolChoice::Direct, ProverSpec::Policy(policy)) => {
                    execute(&program, run_type, *policy, &mut rng)?
                }
                (ProtocolChoice::Direct, ProverSpec::Attacked(_)) => {
                    return Err(Error::Invalid(
                        "attacked provers need the entangled-pair protocol".into(),
                    ))
                }
                (ProtocolChoice::Epr, prover) => run_epr(&program, run_type, prover, &mut rng)?,
            };
            let hist_bit = outcome
                .decrypted_output
                .unwrap_or(outcome.transcript.output_bit);
            Ok(TrialRecord {
                run_type,
                accept: outcome.accept,
                checks_passed: outcome.checks_passed,
                hist_bit,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut tallies = [RunTally::default(); 3];
    for rec in &records {
        let tally = &mut tallies[tally_index(rec.run_type)];
        tally.trials += 1;
        tally.accepts += u64::from(rec.accept);
        tally.check_failures += u64::from(!rec.checks_passed);
        tally.out_hist[usize::from(rec.hist_bit & 1)] += 1;
    }
    let per_run: Vec<RunRow> = RunType::ALL
        .iter()
        .map(|run| {
            let tally = tallies[tally_index(*run)];
            RunRow {
                run_type: run.name().to_string(),
                trials: tally.trials,
                accepts: tally.accepts,
                accept_rate: tally.accept_rate(),
                check_failures: tally.check_failures,
                output_zero: tally.out_hist[0],
                output_one: tally.out_hist[1],
            }
        })
        .collect();
    let total_accepts: u64 = tallies.iter().map(|t| t.accepts).sum();
    let overall = OverallReport {
        trials: config.trials,
        accepts: total_accepts,
        accept_rate: if config.trials == 0 {
            0.0
        } else {
            total_accepts as f64 / config.trials as f64
        },
    };
    let (predictions, flags) = evaluate_flags(config, &label, circuit.h_count(), &tallies, &overall)?;
    Ok(Report {
        circuit: serialize_circuit(&circuit),
        instance: InstanceReport { kind: label.kind.name().to_string(), p: label.p },
        dims: DimsReport { n: dims.n, t: dims.t, m: dims.m() },
        protocol: config.protocol.name().to_string(),
        prover: config.prover.name().to_string(),
        run_policy: config.run_policy.name().to_string(),
        trials: config.trials,
        seed: config.seed,
        per_run,
        overall,
        predictions,
        flags,
    })
}

fn evaluate_flags(
    config: &ExperimentConfig,
    label: &InstanceLabel,
    h_count: usize,
    tallies: &[RunTally; 3],
    overall: &OverallReport,
) -> Result<(Option<PredictionsReport>, Vec<FlagReport>)> {
    let mut flags = Vec::new();
    let predictions = match &config.prover {
        ProverSpec::Policy(ProverPolicy::Honest) => {
            match config.run_policy {
                RunPolicy::Random => {
                    if overall.trials > 0 {
                        let expected = (2.0 + label.p) / 3.0;
                        flags.push(two_sided(
                            "overall_acceptance",
                            overall.accept_rate,
                            expected,
                            binomial_sigma(expected, overall.trials),
                        ));
                    }
                }
                RunPolicy::Comp => {
                    let tally = tallies[0];
                    if tally.trials > 0 {
                        flags.push(two_sided(
                            "comp_acceptance",
                            tally.accept_rate(),
                            label.p,
                            binomial_sigma(label.p, tally.trials),
                        ));
                    }
                }
                RunPolicy::XTest | RunPolicy::ZTest => {
                    let tally = tallies[tally_index(
                        config.run_policy.fixed_run().expect("forced policy"),
                    )];
                    if tally.trials > 0 {
                        // Honest test runs accept with certainty.
                        flags.push(two_sided("test_acceptance", tally.accept_rate(), 1.0, 0.0));
                    }
                }
            }
            None
        }
        ProverSpec::Policy(ProverPolicy::EchoZero) => None,
        ProverSpec::Attacked(attack) => {
            let nu = predicted_test_rejection(attack)?;
            let comp_bound = predicted_comp_acceptance(attack, label.p)?;
            let overall_bound = if label.p <= 1.0 / 3.0 + FLOAT_SLACK {
                Some(overall_acceptance_bound(attack, label.p)?)
            } else {
                None
            };
            let (comp, xtest, ztest) = (tallies[0], tallies[1], tallies[2]);
            // The flip-mass identity needs both test types sampled, and it
            // is exact only for programs whose gadgets all run the same
            // test variant per run type (no conjugate-pair expansions).
            if xtest.trials > 0 && ztest.trials > 0 && h_count == 0 {
                let observed =
                    (1.0 - xtest.accept_rate()) + (1.0 - ztest.accept_rate());
                let per_term = if nu <= 0.5 { nu * (1.0 - nu) } else { 0.25 };
                let sigma = (per_term / xtest.trials as f64 + per_term / ztest.trials as f64)
                    .sqrt();
                flags.push(two_sided("test_rejection_rate", observed, nu, sigma));
            }
            if comp.trials > 0 {
                flags.push(one_sided_upper(
                    "comp_acceptance_bound",
                    comp.accept_rate(),
                    comp_bound,
                    binomial_sigma(comp_bound, comp.trials),
                ));
            }
            if config.run_policy == RunPolicy::Random && overall.trials > 0 {
                if let Some(bound) = overall_bound {
                    flags.push(one_sided_upper(
                        "overall_acceptance_bound",
                        overall.accept_rate,
                        bound,
                        binomial_sigma(bound, overall.trials),
                    ));
                }
            }
            Some(PredictionsReport {
                nu,
                benign_mass: 1.0 - nu,
                comp_acceptance_bound: comp_bound,
                overall_bound,
            })
        }
    };
    Ok((predictions, flags))
}

/// Serializes a report in the requested format.
pub fn emit_report(report: &Report, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => {
            let mut text = serde_json::to_string_pretty(report)
                .map_err(|e| Error::Invalid(format!("report serialization failed: {e}")))?;
            text.push('\n');
            Ok(text)
        }
        ReportFormat::Csv => Ok(emit_csv(report)),
        ReportFormat::Text => Ok(emit_text(report)),
    }
}

fn emit_csv(report: &Report) -> String {
    let mut out = String::new();
    let circuit_line = report.circuit.trim().replace('\n', "; ");
    out.push_str(&format!("# circuit: {circuit_line}\n"));
    out.push_str(&format!(
        "# instance: {} (p={})\n",
        report.instance.kind, report.instance.p
    ));
    out.push_str(&format!(
        "# dims: n={} t={} m={}\n",
        report.dims.n, report.dims.t, report.dims.m
    ));
    out.push_str(&format!(
        "# protocol={} prover={} run_policy={} trials={} seed={}\n",
        report.protocol, report.prover, report.run_policy, report.trials, report.seed
    ));
    out.push_str(&format!(
        "# overall: accepts={} accept_rate={}\n",
        report.overall.accepts, report.overall.accept_rate
    ));
    if let Some(pred) = &report.predictions {
        let bound = pred
            .overall_bound
            .map_or_else(|| "none".to_string(), |b| b.to_string());
        out.push_str(&format!(
            "# predictions: nu={} benign_mass={} comp_acceptance_bound={} overall_bound={}\n",
            pred.nu, pred.benign_mass, pred.comp_acceptance_bound, bound
        ));
    }
    for flag in &report.flags {
        out.push_str(&format!(
            "# flag {}: {} observed={} expected={} tolerance={}\n",
            flag.name,
            if flag.passed { "pass" } else { "FAIL" },
            flag.observed,
            flag.expected,
            flag.tolerance
        ));
    }
    out.push_str("run_type,trials,accepts,accept_rate,check_failures,output_zero,output_one\n");
    for row in &report.per_run {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.run_type,
            row.trials,
            row.accepts,
            row.accept_rate,
            row.check_failures,
            row.output_zero,
            row.output_one
        ));
    }
    out
}

fn emit_text(report: &Report) -> String {
    let mut out = String::new();
    out.push_str("circuit:\n");
    for line in report.circuit.trim().lines() {
        out.push_str(&format!("  {line}\n"));
    }
    out.push_str(&format!(
        "instance: {} (ideal output-0 probability {:.6})\n",
        report.instance.kind, report.instance.p
    ));
    out.push_str(&format!(
        "register: n={} data wires, t={} gadgets, m={} slots\n",
        report.dims.n, report.dims.t, report.dims.m
    ));
    out.push_str(&format!(
        "protocol={} prover={} run_policy={} trials={} seed={}\n",
        report.protocol, report.prover, report.run_policy, report.trials, report.seed
    ));
    out.push('\n');
    for row in &report.per_run {
        out.push_str(&format!(
            "{:>5}: {:>8} trials, {:>8} accepts (rate {:.6}), {} check failures, outputs [{}, {}]\n",
            row.run_type,
            row.trials,
            row.accepts,
            row.accept_rate,
            row.check_failures,
            row.output_zero,
            row.output_one
        ));
    }
    out.push_str(&format!(
        "overall: {} / {} accepted (rate {:.6})\n",
        report.overall.accepts, report.overall.trials, report.overall.accept_rate
    ));
    if let Some(pred) = &report.predictions {
        out.push_str(&format!(
            "predicted: flip mass nu={:.6}, benign mass={:.6}, comp acceptance <= {:.6}",
            pred.nu, pred.benign_mass, pred.comp_acceptance_bound
        ));
        if let Some(bound) = pred.overall_bound {
            out.push_str(&format!(", overall acceptance <= {bound:.6}"));
        }
        out.push('\n');
    }
    for flag in &report.flags {
        out.push_str(&format!(
            "flag {:<24} {}  observed={:.6} expected={:.6} tolerance={:.6}\n",
            flag.name,
            if flag.passed { "pass" } else { "FAIL" },
            flag.observed,
            flag.expected,
            flag.tolerance
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::parse_attack;
    use crate::pauli::ProtocolDims;

    fn honest_config(circuit: &str, protocol: ProtocolChoice, trials: u64) -> ExperimentConfig {
        ExperimentConfig {
            circuit: circuit.to_string(),
            protocol,
            prover: ProverSpec::Policy(ProverPolicy::Honest),
            run_policy: RunPolicy::Random,
            trials,
            seed: 7,
        }
    }

    #[test]
    fn reports_are_reproducible() {
        let config = honest_config("qubits 1\nT 0\n", ProtocolChoice::Epr, 200);
        let a = emit_report(&run_experiment(&config).unwrap(), ReportFormat::Json).unwrap();
        let b = emit_report(&run_experiment(&config).unwrap(), ReportFormat::Json).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn direct_and_epr_honest_runs_share_trials() {
        // Policy provers take the same sampling path in both protocol
        // forms, so everything except the protocol label coincides.
        let direct = run_experiment(&honest_config("qubits 1\nT 0\n", ProtocolChoice::Direct, 150))
            .unwrap();
        let epr =
            run_experiment(&honest_config("qubits 1\nT 0\n", ProtocolChoice::Epr, 150)).unwrap();
        assert_eq!(direct.overall.accepts, epr.overall.accepts);
        assert_eq!(direct.protocol, "direct");
        assert_eq!(epr.protocol, "epr");
    }

    #[test]
    fn honest_flags_pass_on_a_trivial_yes_instance() {
        let report =
            run_experiment(&honest_config("qubits 1\n", ProtocolChoice::Epr, 300)).unwrap();
        assert_eq!(report.instance.kind, "yes");
        assert_eq!(report.overall.accepts, 300, "trivial program must always accept");
        assert!(report.flags.iter().all(|f| f.passed), "flags: {:?}", report.flags);
        assert!(report.predictions.is_none());
    }

    #[test]
    fn attacks_are_rejected_on_the_direct_protocol() {
        let dims = ProtocolDims::new(1, 1);
        let attack = parse_attack("1,0 X.I.I\n", dims).unwrap();
        let config = ExperimentConfig {
            circuit: "qubits 1\nT 0\n".to_string(),
            protocol: ProtocolChoice::Direct,
            prover: ProverSpec::Attacked(attack),
            run_policy: RunPolicy::Random,
            trials: 10,
            seed: 1,
        };
        assert!(matches!(run_experiment(&config), Err(Error::Invalid(_))));
    }

    #[test]
    fn benign_attack_report_carries_exact_predictions() {
        let dims = ProtocolDims::new(1, 1);
        let attack = parse_attack("0,1 Z.Y.I\n", dims).unwrap();
        let config = ExperimentConfig {
            circuit: "qubits 1\nT 0\n".to_string(),
            protocol: ProtocolChoice::Epr,
            prover: ProverSpec::Attacked(attack),
            run_policy: RunPolicy::Random,
            trials: 300,
            seed: 11,
        };
        let report = run_experiment(&config).unwrap();
        let pred = report.predictions.as_ref().unwrap();
        assert!(pred.nu.abs() < 1e-12);
        assert!((pred.benign_mass - 1.0).abs() < 1e-12);
        assert!(report.flags.iter().all(|f| f.passed), "flags: {:?}", report.flags);
        assert!(
            report.flags.iter().any(|f| f.name == "test_rejection_rate"),
            "expected a flip-mass flag: {:?}",
            report.flags
        );
    }

    #[test]
    fn csv_and_text_formats_are_well_formed() {
        let report =
            run_experiment(&honest_config("qubits 1\nT 0\n", ProtocolChoice::Epr, 60)).unwrap();
        let csv = emit_report(&report, ReportFormat::Csv).unwrap();
        assert!(csv
            .contains("run_type,trials,accepts,accept_rate,check_failures,output_zero,output_one"));
        assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 4);
        let text = emit_report(&report, ReportFormat::Text).unwrap();
        assert!(text.contains("overall:"));
        assert!(text.contains("seed"));
    }
}
