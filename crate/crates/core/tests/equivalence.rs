//! Cross-engine equivalence: the prepare-and-send protocol, the deferred
//! entangled-pair reference engine, and the fast attacked paths must all
//! produce the same run statistics, and the compiled gadget programs must
//! reproduce the plain circuit they came from.

use qcverify::adversary::{parse_attack, ProverSpec};
use qcverify::circuit::{compile_to_gadgets, ideal_probability, parse_circuit, GadgetProgram};
use qcverify::epr::{execute_epr, finalize_run, run_epr};
use qcverify::protocol::{execute, ProverPolicy, RunType};
use qcverify::stats::derive_seed;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 0xE0_1234;

fn program(text: &str) -> GadgetProgram {
    compile_to_gadgets(&parse_circuit(text).unwrap()).unwrap()
}

/// Two-proportion z-comparison at three pooled standard deviations.
fn rates_close(k1: u64, n1: u64, k2: u64, n2: u64) -> bool {
    let p1 = k1 as f64 / n1 as f64;
    let p2 = k2 as f64 / n2 as f64;
    let pool = (k1 + k2) as f64 / (n1 + n2) as f64;
    let sigma =
        (pool * (1.0 - pool) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    (p1 - p2).abs() <= 3.0 * sigma + 1e-9
}

/// Acceptance counts per run type through the prepare-and-send engine.
fn direct_accepts(prog: &GadgetProgram, policy: ProverPolicy, trials: u64, stream: u64) -> [u64; 3] {
    let mut counts = [0u64; 3];
    for (j, run) in RunType::ALL.iter().enumerate() {
        for i in 0..trials {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(SEED, stream + 1000 * j as u64 + 7 * i));
            let outcome = execute(prog, *run, policy, &mut rng).unwrap();
            counts[j] += u64::from(outcome.accept);
        }
    }
    counts
}

/// Acceptance counts per run type through the deferred reference engine.
fn deferred_accepts(
    prog: &GadgetProgram,
    prover: &ProverSpec,
    trials: u64,
    stream: u64,
) -> [u64; 3] {
    let mut counts = [0u64; 3];
    for (j, run) in RunType::ALL.iter().enumerate() {
        for i in 0..trials {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(SEED, stream + 1000 * j as u64 + 7 * i + 3));
            let transcript = execute_epr(prog, prover, &mut rng).unwrap();
            let outcome = finalize_run(transcript, *run, &mut rng).unwrap();
            counts[j] += u64::from(outcome.accept);
        }
    }
    counts
}

/// Acceptance counts per run type through the fast attacked paths.
fn fast_accepts(prog: &GadgetProgram, prover: &ProverSpec, trials: u64, stream: u64) -> [u64; 3] {
    let mut counts = [0u64; 3];
    for (j, run) in RunType::ALL.iter().enumerate() {
        for i in 0..trials {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(SEED, stream + 1000 * j as u64 + 7 * i + 5));
            let outcome = run_epr(prog, *run, prover, &mut rng).unwrap();
            counts[j] += u64::from(outcome.accept);
        }
    }
    counts
}

#[test]
fn direct_and_deferred_agree_for_policy_provers() {
    // Bare-gadget programs small enough for the full two-registers engine.
    for (text, trials) in [
        ("qubits 1\nT 0\n", 2000u64),
        ("qubits 2\nX 0\nT 0\nCNOT 0 1\nT 1\n", 1200u64),
    ] {
        let prog = program(text);
        for (policy, stream) in [(ProverPolicy::Honest, 100u64), (ProverPolicy::EchoZero, 200u64)] {
            let direct = direct_accepts(&prog, policy, trials, stream);
            let deferred = deferred_accepts(&prog, &ProverSpec::Policy(policy), trials, stream + 50);
            for j in 0..3 {
                assert!(
                    rates_close(direct[j], trials, deferred[j], trials),
                    "`{}` {policy:?} {:?}: direct {} vs deferred {} of {trials}",
                    text.trim().replace('\n', "; "),
                    RunType::ALL[j],
                    direct[j],
                    deferred[j],
                );
            }
        }
    }
}

#[test]
fn one_interaction_supports_every_late_verdict() {
    // The run type can be chosen after the prover is done: the same
    // interaction transcript finalizes cleanly under all three run types,
    // and the prover-visible half of the conversation stays fixed.
    let prog = program("qubits 1\nT 0\n");
    let prover = ProverSpec::Policy(ProverPolicy::EchoZero);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(SEED, 300));
    for _ in 0..200 {
        let transcript = execute_epr(&prog, &prover, &mut rng).unwrap();
        let x_sent = transcript.x().to_vec();
        let c_sent = transcript.c().to_vec();
        for run in RunType::ALL {
            let outcome = finalize_run(transcript.clone(), run, &mut rng).unwrap();
            assert_eq!(outcome.run_type, run);
            assert_eq!(outcome.transcript.gadgets.len(), 1);
            assert_eq!(outcome.transcript.gadgets[0].x, x_sent[0]);
            assert_eq!(outcome.transcript.gadgets[0].c, c_sent[0]);
        }
    }
}

#[test]
fn fast_and_deferred_agree_for_attacked_provers() {
    let prog = program("qubits 1\nT 0\n");
    let dims = prog.dims();
    // A deterministic report flip and a half-weight output flip.
    let attacks = [
        "1,0 X.I.I\n".to_string(),
        format!("{w},0 I.I.I\n\n{w},0 I.I.X\n", w = std::f64::consts::FRAC_1_SQRT_2),
    ];
    for (a_idx, text) in attacks.iter().enumerate() {
        let prover = ProverSpec::Attacked(parse_attack(text, dims).unwrap());
        let trials = 4000u64;
        let stream = 400 + 20 * a_idx as u64;
        let fast = fast_accepts(&prog, &prover, trials, stream);
        let deferred = deferred_accepts(&prog, &prover, trials, stream + 10);
        for j in 0..3 {
            assert!(
                rates_close(fast[j], trials, deferred[j], trials),
                "attack {a_idx} {:?}: fast {} vs deferred {} of {trials}",
                RunType::ALL[j],
                fast[j],
                deferred[j],
            );
        }
    }
}

#[test]
fn benign_attacks_are_invisible() {
    // Letters confined to unmeasured slots (or Z on measured ones) leave
    // every run accepting, exactly like the honest prover on this program.
    let prog = program("qubits 1\nT 0\n");
    let dims = prog.dims();
    for text in ["0,1 Z.X.I\n", "1,0 I.Y.Z\n"] {
        let prover = ProverSpec::Attacked(parse_attack(text, dims).unwrap());
        let fast = fast_accepts(&prog, &prover, 1500, 500);
        assert_eq!(fast, [1500, 1500, 1500], "fast path rejected benign attack {text:?}");
        let deferred = deferred_accepts(&prog, &prover, 400, 510);
        assert_eq!(deferred, [400, 400, 400], "deferred engine rejected benign attack {text:?}");
    }
}

#[test]
fn coherent_and_mixed_attacks_twirl_alike() {
    // A balanced coherent superposition of X and Z and the 50/50
    // probabilistic mixture of the same strings are indistinguishable to
    // the verifier: the key twirl removes the cross terms.
    let prog = program("qubits 1\nX 0\n");
    let dims = prog.dims();
    let w = std::f64::consts::FRAC_1_SQRT_2;
    let coherent = parse_attack(&format!("{w},0 X\n{w},0 Z\n"), dims).unwrap();
    let mixture = parse_attack(&format!("{w},0 X\n\n{w},0 Z\n"), dims).unwrap();
    assert_eq!(coherent.kraus().len(), 1);
    assert_eq!(mixture.kraus().len(), 2);
    let trials = 10_000u64;
    let a = fast_accepts(&prog, &ProverSpec::Attacked(coherent), trials, 600);
    let b = fast_accepts(&prog, &ProverSpec::Attacked(mixture), trials, 650);
    for j in 0..3 {
        assert!(
            rates_close(a[j], trials, b[j], trials),
            "{:?}: coherent {} vs mixture {} of {trials}",
            RunType::ALL[j],
            a[j],
            b[j],
        );
    }
}

#[test]
fn compiled_programs_reproduce_the_plain_circuit() {
    // Honest computation runs must sample the ideal output distribution of
    // the source circuit, gadget compilation and all.
    for (text, trials) in [
        ("qubits 1\nT 0\n", 3000u64),
        ("qubits 1\nX 0\n", 3000u64),
        ("qubits 1\nH 0\n", 10_000u64),
        ("qubits 2\nH 0\nCNOT 0 1\n", 10_000u64),
    ] {
        let circuit = parse_circuit(text).unwrap();
        let p_ideal = ideal_probability(&circuit).unwrap();
        let prog = compile_to_gadgets(&circuit).unwrap();
        let mut zeros = 0u64;
        for i in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(SEED, 700 + 11 * i));
            let outcome = execute(&prog, RunType::Comp, ProverPolicy::Honest, &mut rng).unwrap();
            zeros += u64::from(outcome.decrypted_output == Some(0));
        }
        let expected = (p_ideal * trials as f64).round() as u64;
        assert!(
            rates_close(zeros, trials, expected, trials),
            "`{}`: decrypted zeros {zeros}/{trials}, ideal probability {p_ideal}",
            text.trim().replace('\n', "; "),
        );
    }
}

#[test]
fn output_flips_on_no_instances_never_slip_past_both_tests() {
    // Flipping the reported output turns a no instance into an accepted
    // computation, but one of the two test types catches the flip every
    // single time.
    let prog = program("qubits 2\nX 1\nT 1\n");
    let dims = prog.dims();
    let prover = ProverSpec::Attacked(parse_attack("1,0 I.I.I.X\n", dims).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(SEED, 800));
    let trials = 1000u64;
    let mut caught = 0u64;
    let mut comp_accepts = 0u64;
    for _ in 0..trials {
        let x_run = run_epr(&prog, RunType::XTest, &prover, &mut rng).unwrap();
        let z_run = run_epr(&prog, RunType::ZTest, &prover, &mut rng).unwrap();
        caught += u64::from(!x_run.accept || !z_run.accept);
        let comp = run_epr(&prog, RunType::Comp, &prover, &mut rng).unwrap();
        comp_accepts += u64::from(comp.accept);
    }
    assert_eq!(caught, trials, "output flip escaped the test pair {caught}/{trials}");
    assert_eq!(comp_accepts, trials, "the flip should fool every computation run");
}
