//! The acceptance gate: one test per criterion, so `cargo test --test
//! acceptance` prints one pass/fail line per criterion.

use qcverify::suite::run_criterion;

fn gate(id: usize) {
    let result = run_criterion(id);
    println!(
        "criterion {} ({}): {} in {:.2}s — {}",
        result.id,
        result.name,
        if result.passed { "PASS" } else { "FAIL" },
        result.elapsed_s,
        result.details
    );
    assert!(result.passed, "criterion {} ({}) failed: {}", result.id, result.name, result.details);
}

#[test]
fn criterion_1_key_propagation_identities() {
    gate(1);
}

#[test]
fn criterion_2_gadget_update_consistency() {
    gate(2);
}

#[test]
fn criterion_3_honest_completeness() {
    gate(3);
}

#[test]
fn criterion_4_reported_bit_flip_lemma() {
    gate(4);
}

#[test]
fn criterion_5_single_flip_detection() {
    gate(5);
}

#[test]
fn criterion_6_attack_family_soundness() {
    gate(6);
}

#[test]
fn criterion_7_soundness_tightness() {
    gate(7);
}

#[test]
fn criterion_8_run_type_indistinguishability() {
    gate(8);
}

#[test]
fn criterion_9_pauli_twirl_identity() {
    gate(9);
}
