//! The entangled-pair form of the protocol.
//!
//! Instead of preparing and sending each qubit, the verifier shares one
//! entangled pair per register slot, keeps one half of each, and defers all
//! of its own measurements until after the prover has finished.  The reply
//! wire of each gadget is measured on the verifier side as soon as it is
//! sent, which fixes the classical reply `x_k` up front; every other
//! verifier half waits until [`finalize_run`].
//!
//! The register the prover holds is ordered `[A_1, X_1, .., A_t, X_t,
//! D_1, .., D_n]`: gadget qubit, reply qubit per gadget, then the data
//! wires.  [`execute_epr`] is the reference implementation over all `2m`
//! qubits; [`run_epr`] is the fast path the harness uses, which collapses
//! verifier halves early whenever the measurement basis cannot depend on
//! the prover's messages.  [`prover_view_distance`] compares the prover's
//! exact view of this protocol against the direct one.

use std::collections::{BTreeSet, HashMap};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::Rng;

use crate::adversary::{AttackSpec, ProverSpec};
use crate::circuit::{GadgetProgram, GadgetVariant, Step};
use crate::linalg;
use crate::pauli::{clifford_key_update, PadKey, ProtocolDims};
use crate::protocol::{
    self, finish_outcome, t_gadget_aux_state, verifier_t_gadget_update, GadgetRecord, Outcome,
    ProverPolicy, RunType, TGadgetRandomness,
};
use crate::statevec::{
    prepare_state, reduced_density, AuxStateSpec, DensityMatrix, Gate, GateKind, State, MAX_QUBITS,
};
use crate::{Error, Result};

/// Capacity limit for the exact view comparison (total qubits simulated).
const VIEW_QUBIT_LIMIT: usize = 20;
/// Gadget limit for the exact view comparison (the enumeration grows as
/// `16^t` branches per key assignment).
const VIEW_GADGET_LIMIT: usize = 3;

/// Everything the verifier holds once the prover has finished a run of the
/// entangled-pair protocol and before any deferred measurement: the shared
/// state, the replies sent, and the prover's reported bits.
///
/// Finalizing consumes the transcript, so one interaction can only be
/// judged once; clone it first to finalize the same interaction under
/// several run types.
#[derive(Debug, Clone)]
pub struct DeferredTranscript {
    program: GadgetProgram,
    state: State,
    x: Vec<u8>,
    c: Vec<u8>,
    output_bit: u8,
}

impl DeferredTranscript {
    /// Replies sent to the prover, one per gadget.
    pub fn x(&self) -> &[u8] {
        &self.x
    }

    /// The prover's reported per-gadget bits.
    pub fn c(&self) -> &[u8] {
        &self.c
    }

    /// The prover's reported output bit (still padded).
    pub fn output_bit(&self) -> u8 {
        self.output_bit
    }

    /// The program the interaction ran.
    pub fn program(&self) -> &GadgetProgram {
        &self.program
    }
}

fn check_attack_dims(attack: &AttackSpec, dims: ProtocolDims) -> Result<()> {
    if attack.dims() != dims {
        return Err(Error::Attack(format!(
            "attack written for register (n={}, t={}) but the program has (n={}, t={})",
            attack.dims().n,
            attack.dims().t,
            dims.n,
            dims.t
        )));
    }
    Ok(())
}

/// Applies the prover's honest unitary moves in program order: instructed
/// `H`/`CNOT` gates on the data wires, and per gadget the entangling `CNOT`,
/// the instructed phase correction `P^x`, and the swap that parks the
/// outgoing wire on the data position.  `X`/`Z` steps are verifier-internal
/// and reach the prover as nothing at all.
fn prover_honest_unitaries(
    state: &mut State,
    program: &GadgetProgram,
    x: &[u8],
    a_pos: impl Fn(usize) -> usize,
    d_pos: impl Fn(usize) -> usize,
) -> Result<()> {
    for step in &program.steps {
        match step {
            Step::DirectClifford { gate, targets } => match gate.kind {
                GateKind::X | GateKind::Z => {}
                GateKind::H | GateKind::Cnot => {
                    let mapped: Vec<usize> = targets.iter().map(|&w| d_pos(w)).collect();
                    state.apply_gate_mut(*gate, &mapped)?;
                }
                other => {
                    return Err(Error::Protocol(format!(
                        "compiled programs cannot contain direct {} gates",
                        other.name()
                    )))
                }
            },
            Step::TGadget { wire, index, .. } => {
                let (ap, dp) = (a_pos(*index), d_pos(*wire));
                state.apply_gate_mut(Gate::new(GateKind::Cnot), &[ap, dp])?;
                if x[*index] & 1 == 1 {
                    state.apply_gate_mut(Gate::new(GateKind::P), &[ap])?;
                }
                state.swap_qubits_mut(ap, dp)?;
            }
        }
    }
    Ok(())
}

/// Runs the prover's side of the entangled-pair protocol over the full
/// `2m`-qubit register, deferring every verifier measurement except the
/// reply wires.
///
/// Prover halves sit at positions `0..m` in register-slot order, verifier
/// halves at `m..2m` in the same order.  The honest prover and the attacked
/// prover measure their reporting qubits; the echo prover reports zeros
/// without measuring.
pub fn execute_epr<R: Rng>(
    program: &GadgetProgram,
    prover: &ProverSpec,
    rng: &mut R,
) -> Result<DeferredTranscript> {
    let dims = program.dims();
    let m = dims.m();
    let total = 2 * m;
    if total > MAX_QUBITS {
        return Err(Error::Capacity { requested: total, limit: MAX_QUBITS });
    }
    if let ProverSpec::Attacked(attack) = prover {
        check_attack_dims(attack, dims)?;
    }
    let mut state = State::computational_zero(total)?;
    for slot in 0..m {
        state.apply_gate_mut(Gate::new(GateKind::H), &[m + slot])?;
        state.apply_gate_mut(Gate::new(GateKind::Cnot), &[m + slot, slot])?;
    }
    // Reply wires are read on the verifier side at send time; the prover's
    // halves collapse to |x_k> and stay in the register.
    let mut x = Vec::with_capacity(program.t);
    for k in 0..program.t {
        x.push(state.measure_mut(m + dims.x_slot(k), rng)?);
    }
    prover_honest_unitaries(&mut state, program, &x, |k| dims.a_slot(k), |w| {
        dims.data_slot(w)
    })?;
    let (c, output_bit) = match prover {
        ProverSpec::Policy(ProverPolicy::EchoZero) => (vec![0u8; program.t], 0),
        ProverSpec::Policy(ProverPolicy::Honest) => {
            let mut c = Vec::with_capacity(program.t);
            for k in 0..program.t {
                c.push(state.measure_mut(dims.a_slot(k), rng)?);
            }
            let bit = state.measure_mut(dims.output_slot(), rng)?;
            (c, bit)
        }
        ProverSpec::Attacked(attack) => {
            let targets: Vec<usize> = (0..m).collect();
            let (_, next) = attack.apply_sampled(&state, &targets, rng)?;
            state = next;
            let mut c = Vec::with_capacity(program.t);
            for k in 0..program.t {
                c.push(state.measure_mut(dims.a_slot(k), rng)?);
            }
            let bit = state.measure_mut(dims.output_slot(), rng)?;
            (c, bit)
        }
    };
    Ok(DeferredTranscript { program: program.clone(), state, x, c, output_bit })
}

/// The verifier's deferred turn: picks a run type, measures its kept halves
/// in the bases that choice and the reported bits select, and applies the
/// usual acceptance rule.
///
/// Data halves collapse first (computational basis for computation and
/// X-type test runs, conjugate basis for Z-type test runs), then the gadget
/// halves in program order.  For computation gadgets the reconstructed
/// reply must equal the reply actually sent; any mismatch is an internal
/// inconsistency and comes back as an error.
pub fn finalize_run<R: Rng>(
    transcript: DeferredTranscript,
    run_type: RunType,
    rng: &mut R,
) -> Result<Outcome> {
    let DeferredTranscript { program, mut state, x, c, output_bit } = transcript;
    let dims = program.dims();
    let m = dims.m();
    let mut pads = Vec::with_capacity(program.n);
    for w in 0..program.n {
        let vpos = m + dims.data_slot(w);
        let pad = match run_type {
            RunType::Comp | RunType::XTest => {
                let a = state.measure_mut(vpos, rng)?;
                PadKey::new(a, 0)
            }
            RunType::ZTest => {
                state.apply_gate_mut(Gate::new(GateKind::H), &[vpos])?;
                let b = state.measure_mut(vpos, rng)?;
                PadKey::new(0, b)
            }
        };
        pads.push(pad);
    }
    let mut records = Vec::with_capacity(program.t);
    for step in &program.steps {
        match step {
            Step::DirectClifford { gate, targets } => match gate.kind {
                GateKind::X | GateKind::Z => {
                    if run_type == RunType::Comp {
                        pads = clifford_key_update(*gate, &pads, targets)?;
                    }
                }
                GateKind::H | GateKind::Cnot => {
                    pads = clifford_key_update(*gate, &pads, targets)?;
                }
                other => {
                    return Err(Error::Protocol(format!(
                        "compiled programs cannot contain direct {} gates",
                        other.name()
                    )))
                }
            },
            Step::TGadget { wire, index, selector } => {
                let k = *index;
                let variant = selector.for_run(run_type);
                let vpos = m + dims.a_slot(k);
                let (ck, xk) = (c[k], x[k]);
                let randomness = match variant {
                    GadgetVariant::Comp => {
                        let y = pads[*wire].a ^ ck ^ xk;
                        let d = u8::from(rng.gen::<bool>());
                        state.apply_gate_mut(Gate::new(GateKind::T), &[vpos])?;
                        if y == 1 {
                            state.apply_gate_mut(Gate::new(GateKind::P), &[vpos])?;
                        }
                        if d == 1 {
                            state.apply_gate_mut(Gate::new(GateKind::Z), &[vpos])?;
                        }
                        state.apply_gate_mut(Gate::new(GateKind::H), &[vpos])?;
                        let e = state.measure_mut(vpos, rng)?;
                        TGadgetRandomness::Comp { d, e, y: y ^ d }
                    }
                    GadgetVariant::XVar => {
                        let d = state.measure_mut(vpos, rng)?;
                        TGadgetRandomness::XVar { d, x: xk }
                    }
                    GadgetVariant::ZVar => {
                        if xk == 1 {
                            state.apply_gate_mut(Gate::new(GateKind::P), &[vpos])?;
                        }
                        state.apply_gate_mut(Gate::new(GateKind::H), &[vpos])?;
                        let d = state.measure_mut(vpos, rng)?;
                        TGadgetRandomness::ZVar { d, y: xk }
                    }
                };
                let upd = verifier_t_gadget_update(variant, pads[*wire], ck, &randomness)?;
                if upd.x != xk {
                    return Err(Error::Protocol(format!(
                        "finalized reply {} for gadget {k} disagrees with the sent reply {xk}",
                        upd.x
                    )));
                }
                pads[*wire] = upd.new_pad;
                records.push(GadgetRecord { c: ck, x: xk, check: upd.check });
            }
        }
    }
    Ok(finish_outcome(run_type, records, output_bit, pads[program.output_wire()]))
}

/// One full run of the entangled-pair protocol, taking every shortcut that
/// does not change the joint distribution.
///
/// Policy provers produce conversations distributed exactly as in the
/// direct protocol, so those delegate to [`protocol::execute`].  Attacked
/// test runs collapse all verifier halves up front (their bases never
/// depend on the prover's messages) and simulate `m` qubits.  Attacked
/// computation runs keep the gadget pairs live — their measurement bases
/// depend on the reported bits — and simulate `n + 2t` qubits, plus the
/// `t` collapsed reply qubits joined before the attack.
pub fn run_epr<R: Rng>(
    program: &GadgetProgram,
    run_type: RunType,
    prover: &ProverSpec,
    rng: &mut R,
) -> Result<Outcome> {
    match prover {
        ProverSpec::Policy(policy) => protocol::execute(program, run_type, *policy, rng),
        ProverSpec::Attacked(attack) => {
            check_attack_dims(attack, program.dims())?;
            match run_type {
                RunType::Comp => fast_attacked_comp(program, attack, rng),
                RunType::XTest | RunType::ZTest => {
                    fast_attacked_test(program, run_type, attack, rng)
                }
            }
        }
    }
}

fn fast_attacked_test<R: Rng>(
    program: &GadgetProgram,
    run_type: RunType,
    attack: &AttackSpec,
    rng: &mut R,
) -> Result<Outcome> {
    if run_type == RunType::Comp {
        return Err(Error::Protocol("the fast test path cannot run computation runs".into()));
    }
    let dims = program.dims();
    let m = dims.m();
    if m > MAX_QUBITS {
        return Err(Error::Capacity { requested: m, limit: MAX_QUBITS });
    }
    let bit = |rng: &mut R| u8::from(rng.gen::<bool>());
    // All verifier measurement outcomes can be drawn before the prover acts:
    // in test runs no basis depends on a prover message.
    let mut specs = vec![AuxStateSpec::Zero; m];
    let mut pads = Vec::with_capacity(program.n);
    for w in 0..program.n {
        let pad = if run_type == RunType::XTest {
            let a = bit(rng);
            specs[dims.data_slot(w)] =
                if a == 1 { AuxStateSpec::One } else { AuxStateSpec::Zero };
            PadKey::new(a, 0)
        } else {
            let b = bit(rng);
            specs[dims.data_slot(w)] =
                if b == 1 { AuxStateSpec::Minus } else { AuxStateSpec::Plus };
            PadKey::new(0, b)
        };
        pads.push(pad);
    }
    let mut x = vec![0u8; program.t];
    let mut randomness = vec![None; program.t];
    for step in &program.steps {
        if let Step::TGadget { index, selector, .. } = step {
            let k = *index;
            let xk = bit(rng);
            x[k] = xk;
            specs[dims.x_slot(k)] = if xk == 1 { AuxStateSpec::One } else { AuxStateSpec::Zero };
            let rnd = match selector.for_run(run_type) {
                GadgetVariant::XVar => {
                    let d = bit(rng);
                    specs[dims.a_slot(k)] =
                        if d == 1 { AuxStateSpec::One } else { AuxStateSpec::Zero };
                    TGadgetRandomness::XVar { d, x: xk }
                }
                GadgetVariant::ZVar => {
                    let d = bit(rng);
                    specs[dims.a_slot(k)] = match (d, xk) {
                        (0, 0) => AuxStateSpec::Plus,
                        (1, 0) => AuxStateSpec::Minus,
                        (0, 1) => AuxStateSpec::PPlus,
                        _ => AuxStateSpec::PMinus,
                    };
                    TGadgetRandomness::ZVar { d, y: xk }
                }
                GadgetVariant::Comp => {
                    return Err(Error::Protocol(
                        "test runs never select the computation gadget variant".into(),
                    ))
                }
            };
            randomness[k] = Some(rnd);
        }
    }
    let mut state = prepare_state(&specs)?;
    prover_honest_unitaries(&mut state, program, &x, |k| dims.a_slot(k), |w| {
        dims.data_slot(w)
    })?;
    let targets: Vec<usize> = (0..m).collect();
    let (_, next) = attack.apply_sampled(&state, &targets, rng)?;
    state = next;
    let mut c = vec![0u8; program.t];
    for (k, ck) in c.iter_mut().enumerate() {
        *ck = state.measure_mut(dims.a_slot(k), rng)?;
    }
    let output_bit = state.measure_mut(dims.output_slot(), rng)?;
    let mut records = Vec::with_capacity(program.t);
    for step in &program.steps {
        match step {
            Step::DirectClifford { gate, targets } => match gate.kind {
                GateKind::X | GateKind::Z => {}
                GateKind::H | GateKind::Cnot => {
                    pads = clifford_key_update(*gate, &pads, targets)?;
                }
                other => {
                    return Err(Error::Protocol(format!(
                        "compiled programs cannot contain direct {} gates",
                        other.name()
                    )))
                }
            },
            Step::TGadget { wire, index, selector } => {
                let k = *index;
                let rnd = randomness[k]
                    .ok_or_else(|| Error::Protocol(format!("gadget {k} drew no bits")))?;
                let upd =
                    verifier_t_gadget_update(selector.for_run(run_type), pads[*wire], c[k], &rnd)?;
                pads[*wire] = upd.new_pad;
                records.push(GadgetRecord { c: c[k], x: upd.x, check: upd.check });
            }
        }
    }
    Ok(finish_outcome(run_type, records, output_bit, pads[program.output_wire()]))
}

fn fast_attacked_comp<R: Rng>(
    program: &GadgetProgram,
    attack: &AttackSpec,
    rng: &mut R,
) -> Result<Outcome> {
    let dims = program.dims();
    let (n, t) = (program.n, program.t);
    let m = dims.m();
    let peak = n + 3 * t;
    if peak > MAX_QUBITS {
        return Err(Error::Capacity { requested: peak, limit: MAX_QUBITS });
    }
    // Local layout: gadget prover halves, gadget verifier halves, data
    // wires, then the collapsed reply qubits appended before the attack.
    let apos = |k: usize| k;
    let vpos = |k: usize| t + k;
    let dpos = |w: usize| 2 * t + w;
    let xpos = |k: usize| 2 * t + n + k;
    let bit = |rng: &mut R| u8::from(rng.gen::<bool>());
    let mut state = State::computational_zero(2 * t + n)?;
    for k in 0..t {
        state.apply_gate_mut(Gate::new(GateKind::H), &[vpos(k)])?;
        state.apply_gate_mut(Gate::new(GateKind::Cnot), &[vpos(k), apos(k)])?;
    }
    // Data halves are read in the computational basis whatever the prover
    // reports, so their collapse can be drawn up front.
    let mut pads = Vec::with_capacity(n);
    for w in 0..n {
        let a = bit(rng);
        if a == 1 {
            state.apply_gate_mut(Gate::new(GateKind::X), &[dpos(w)])?;
        }
        pads.push(PadKey::new(a, 0));
    }
    // Reply wires collapse to uniform bits at send time.
    let x: Vec<u8> = (0..t).map(|_| bit(rng)).collect();
    prover_honest_unitaries(&mut state, program, &x, apos, dpos)?;
    // The reply qubits join the live register only now: the prover used
    // their values classically, but the attack may still touch them.
    for &xk in &x {
        let spec = if xk == 1 { AuxStateSpec::One } else { AuxStateSpec::Zero };
        state = state.tensor(&prepare_state(&[spec])?)?;
    }
    let targets: Vec<usize> = (0..m)
        .map(|slot| {
            if slot < 2 * t {
                if slot % 2 == 0 {
                    apos(slot / 2)
                } else {
                    xpos(slot / 2)
                }
            } else {
                dpos(slot - 2 * t)
            }
        })
        .collect();
    let (_, next) = attack.apply_sampled(&state, &targets, rng)?;
    state = next;
    // Interleaved finalize: read each reported bit, then measure that
    // gadget's verifier half in the basis the bit selects.
    let mut records = Vec::with_capacity(t);
    for step in &program.steps {
        match step {
            Step::DirectClifford { gate, targets } => match gate.kind {
                GateKind::X | GateKind::Z | GateKind::H | GateKind::Cnot => {
                    pads = clifford_key_update(*gate, &pads, targets)?;
                }
                other => {
                    return Err(Error::Protocol(format!(
                        "compiled programs cannot contain direct {} gates",
                        other.name()
                    )))
                }
            },
            Step::TGadget { wire, index, .. } => {
                let k = *index;
                let ck = state.measure_mut(apos(k), rng)?;
                let y = pads[*wire].a ^ ck ^ x[k];
                let d = bit(rng);
                state.apply_gate_mut(Gate::new(GateKind::T), &[vpos(k)])?;
                if y == 1 {
                    state.apply_gate_mut(Gate::new(GateKind::P), &[vpos(k)])?;
                }
                if d == 1 {
                    state.apply_gate_mut(Gate::new(GateKind::Z), &[vpos(k)])?;
                }
                state.apply_gate_mut(Gate::new(GateKind::H), &[vpos(k)])?;
                let e = state.measure_mut(vpos(k), rng)?;
                let randomness = TGadgetRandomness::Comp { d, e, y: y ^ d };
                let upd = verifier_t_gadget_update(GadgetVariant::Comp, pads[*wire], ck, &randomness)?;
                if upd.x != x[k] {
                    return Err(Error::Protocol(format!(
                        "finalized reply {} for gadget {k} disagrees with the sent reply {}",
                        upd.x, x[k]
                    )));
                }
                pads[*wire] = upd.new_pad;
                records.push(GadgetRecord { c: ck, x: x[k], check: upd.check });
            }
        }
    }
    let output_bit = state.measure_mut(dpos(program.output_wire()), rng)?;
    Ok(finish_outcome(RunType::Comp, records, output_bit, pads[program.output_wire()]))
}

/// The prover's view of one run as a labelled mixture: classical label
/// `(reported bits, replies, reported output)` mapped to the unnormalized
/// density operator of the prover's leftover register `[A_1..A_t,
/// D_1..D_n]`.
type ViewKey = (Vec<u8>, Vec<u8>, u8);
type ViewMap = HashMap<ViewKey, DMatrix<C64>>;

fn add_weighted(map: &mut ViewMap, key: ViewKey, weight: f64, rho: &DMatrix<C64>, dim: usize) {
    let entry = map.entry(key).or_insert_with(|| linalg::zeros(dim));
    *entry += rho * C64::new(weight, 0.0);
}

#[derive(Clone)]
struct P1Branch {
    weight: f64,
    state: State,
    pads: Vec<PadKey>,
    c: Vec<u8>,
    x: Vec<u8>,
}

fn decode_randomness(variant: GadgetVariant, code: usize) -> TGadgetRandomness {
    let b = |i: usize| ((code >> i) & 1) as u8;
    match variant {
        GadgetVariant::Comp => TGadgetRandomness::Comp { d: b(0), e: b(1), y: b(2) },
        GadgetVariant::XVar => TGadgetRandomness::XVar { d: b(0), x: b(1) },
        GadgetVariant::ZVar => TGadgetRandomness::ZVar { d: b(0), y: b(1) },
    }
}

/// Accumulates the prover's exact view of the direct protocol for one run
/// type, enumerating keys, gadget bits, and measurement branches.
fn p1_view(
    program: &GadgetProgram,
    run_type: RunType,
    policy: ProverPolicy,
    scale: f64,
    acc: &mut ViewMap,
) -> Result<()> {
    let (n, t) = (program.n, program.t);
    let dim = 1usize << (n + t);
    let key_count = 1usize << (2 * n);
    for key_code in 0..key_count {
        let mut pads0 = Vec::with_capacity(n);
        for w in 0..n {
            let a = ((key_code >> (2 * w)) & 1) as u8;
            let b = ((key_code >> (2 * w + 1)) & 1) as u8;
            pads0.push(PadKey::new(a, b));
        }
        let specs: Vec<AuxStateSpec> = pads0
            .iter()
            .map(|p| match run_type {
                RunType::Comp | RunType::XTest => {
                    if p.a == 1 {
                        AuxStateSpec::One
                    } else {
                        AuxStateSpec::Zero
                    }
                }
                RunType::ZTest => {
                    if p.b == 1 {
                        AuxStateSpec::Minus
                    } else {
                        AuxStateSpec::Plus
                    }
                }
            })
            .collect();
        let mut branches = vec![P1Branch {
            weight: 1.0 / key_count as f64,
            state: prepare_state(&specs)?,
            pads: pads0,
            c: Vec::new(),
            x: Vec::new(),
        }];
        for step in &program.steps {
            match step {
                Step::DirectClifford { gate, targets } => match gate.kind {
                    GateKind::X | GateKind::Z => {
                        if run_type == RunType::Comp {
                            for br in &mut branches {
                                br.pads = clifford_key_update(*gate, &br.pads, targets)?;
                            }
                        }
                    }
                    GateKind::H | GateKind::Cnot => {
                        for br in &mut branches {
                            br.state.apply_gate_mut(*gate, targets)?;
                            br.pads = clifford_key_update(*gate, &br.pads, targets)?;
                        }
                    }
                    other => {
                        return Err(Error::Protocol(format!(
                            "compiled programs cannot contain direct {} gates",
                            other.name()
                        )))
                    }
                },
                Step::TGadget { wire, selector, .. } => {
                    let variant = selector.for_run(run_type);
                    let rand_count = if variant == GadgetVariant::Comp { 8 } else { 4 };
                    let mut next = Vec::with_capacity(branches.len() * rand_count);
                    for br in &branches {
                        for code in 0..rand_count {
                            let rnd = decode_randomness(variant, code);
                            let rweight = 1.0 / rand_count as f64;
                            let joint = br.state.tensor(&t_gadget_aux_state(variant, &rnd)?)?;
                            let aux_pos = joint.num_qubits() - 1;
                            let reports: &[u8] =
                                if policy == ProverPolicy::Honest { &[0, 1] } else { &[0] };
                            for &c_bit in reports {
                                let mut s = joint.clone();
                                s.apply_gate_mut(Gate::new(GateKind::Cnot), &[aux_pos, *wire])?;
                                let prob = if policy == ProverPolicy::Honest {
                                    match s.project_mut(*wire, c_bit) {
                                        Ok(p) => p,
                                        Err(Error::DegenerateBranch { .. }) => continue,
                                        Err(e) => return Err(e),
                                    }
                                } else {
                                    1.0
                                };
                                let upd =
                                    verifier_t_gadget_update(variant, br.pads[*wire], c_bit, &rnd)?;
                                if upd.x == 1 {
                                    s.apply_gate_mut(Gate::new(GateKind::P), &[aux_pos])?;
                                }
                                s.swap_qubits_mut(*wire, aux_pos)?;
                                let mut pads = br.pads.clone();
                                pads[*wire] = upd.new_pad;
                                let mut c = br.c.clone();
                                c.push(c_bit);
                                let mut x = br.x.clone();
                                x.push(upd.x);
                                next.push(P1Branch {
                                    weight: br.weight * rweight * prob,
                                    state: s,
                                    pads,
                                    c,
                                    x,
                                });
                            }
                        }
                    }
                    branches = next;
                }
            }
        }
        // Register order for the view: gadget leftovers, then data wires.
        let order: Vec<usize> = (n..n + t).chain(0..n).collect();
        for br in &branches {
            if policy == ProverPolicy::Honest {
                for out in 0..2u8 {
                    let mut s = br.state.clone();
                    let prob = match s.project_mut(program.output_wire(), out) {
                        Ok(p) => p,
                        Err(Error::DegenerateBranch { .. }) => continue,
                        Err(e) => return Err(e),
                    };
                    let rho = DensityMatrix::from_pure(&s.reorder(&order)?);
                    add_weighted(
                        acc,
                        (br.c.clone(), br.x.clone(), out),
                        scale * br.weight * prob,
                        &rho.entries,
                        dim,
                    );
                }
            } else {
                let rho = DensityMatrix::from_pure(&br.state.reorder(&order)?);
                add_weighted(
                    acc,
                    (br.c.clone(), br.x.clone(), 0),
                    scale * br.weight,
                    &rho.entries,
                    dim,
                );
            }
        }
    }
    Ok(())
}

/// The prover's exact view of the entangled-pair protocol.  Replies are
/// enumerated (each reply wire collapses to a uniform bit), the prover's
/// unitaries run on the full register, its reported measurements are
/// enumerated as projections, and the verifier's unmeasured halves are
/// traced out.
fn p2_view(program: &GadgetProgram, policy: ProverPolicy) -> Result<ViewMap> {
    let dims = program.dims();
    let (n, t) = (program.n, program.t);
    let m = dims.m();
    let dim = 1usize << (n + t);
    let keep: Vec<usize> = (0..t)
        .map(|k| dims.a_slot(k))
        .chain((0..n).map(|w| dims.data_slot(w)))
        .collect();
    let mut acc = ViewMap::new();
    for code in 0..(1usize << t) {
        let x: Vec<u8> = (0..t).map(|k| ((code >> k) & 1) as u8).collect();
        let mut state = State::computational_zero(2 * m)?;
        for slot in 0..m {
            state.apply_gate_mut(Gate::new(GateKind::H), &[m + slot])?;
            state.apply_gate_mut(Gate::new(GateKind::Cnot), &[m + slot, slot])?;
        }
        let mut weight = 1.0;
        for (k, &xk) in x.iter().enumerate() {
            weight *= state.project_mut(m + dims.x_slot(k), xk)?;
        }
        prover_honest_unitaries(&mut state, program, &x, |k| dims.a_slot(k), |w| {
            dims.data_slot(w)
        })?;
        if policy == ProverPolicy::EchoZero {
            let rho = reduced_density(&state, &keep)?;
            add_weighted(&mut acc, (vec![0u8; t], x, 0), weight, &rho.entries, dim);
            continue;
        }
        for combo in 0..(1usize << (t + 1)) {
            let mut s = state.clone();
            let mut w_branch = weight;
            let mut c = Vec::with_capacity(t);
            let mut dead = false;
            for k in 0..t {
                let bit = ((combo >> k) & 1) as u8;
                match s.project_mut(dims.a_slot(k), bit) {
                    Ok(p) => {
                        w_branch *= p;
                        c.push(bit);
                    }
                    Err(Error::DegenerateBranch { .. }) => {
                        dead = true;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            if dead {
                continue;
            }
            let out = ((combo >> t) & 1) as u8;
            match s.project_mut(dims.output_slot(), out) {
                Ok(p) => w_branch *= p,
                Err(Error::DegenerateBranch { .. }) => continue,
                Err(e) => return Err(e),
            }
            let rho = reduced_density(&s, &keep)?;
            add_weighted(&mut acc, (c, x.clone(), out), w_branch, &rho.entries, dim);
        }
    }
    Ok(acc)
}

/// Exact trace distance between the prover's view of the direct protocol
/// (averaged over the three run types) and of the entangled-pair protocol.
///
/// The view is the classical-quantum state over `(reported bits, replies,
/// reported output)` and the prover's leftover register.  Both protocols
/// are enumerated exactly; the result should be 0 to numerical precision —
/// the conversation tells the prover nothing about the run type.  Guarded
/// to small programs (the enumeration grows with `16^t`).
pub fn prover_view_distance(program: &GadgetProgram, policy: ProverPolicy) -> Result<f64> {
    let dims = program.dims();
    let two_m = 2 * dims.m();
    if two_m > VIEW_QUBIT_LIMIT {
        return Err(Error::Capacity { requested: two_m, limit: VIEW_QUBIT_LIMIT });
    }
    if dims.t > VIEW_GADGET_LIMIT {
        return Err(Error::Capacity { requested: dims.t, limit: VIEW_GADGET_LIMIT });
    }
    let dim = 1usize << (dims.n + dims.t);
    let mut v1 = ViewMap::new();
    for run in RunType::ALL {
        p1_view(program, run, policy, 1.0 / 3.0, &mut v1)?;
    }
    let v2 = p2_view(program, policy)?;
    let zero = linalg::zeros(dim);
    let mut keys: BTreeSet<ViewKey> = v1.keys().cloned().collect();
    keys.extend(v2.keys().cloned());
    let mut dist = 0.0;
    for key in keys {
        let a = v1.get(&key).unwrap_or(&zero);
        let b = v2.get(&key).unwrap_or(&zero);
        dist += linalg::trace_norm_hermitian(&(a - b));
    }
    Ok(dist / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{parse_attack, KrausTerm};
    use crate::circuit::{compile_to_gadgets, parse_circuit};
    use crate::pauli::PauliString;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn program(text: &str) -> GadgetProgram {
        compile_to_gadgets(&parse_circuit(text).unwrap()).unwrap()
    }

    fn single_t() -> GadgetProgram {
        program("qubits 1\nT 0\n")
    }

    #[test]
    fn deferred_honest_accepts_under_every_late_choice() {
        // T|0> differs from |0> only in phase, so the ideal output is always
        // 0 and all three run types should accept every honest interaction.
        let prog = single_t();
        let prover = ProverSpec::Policy(ProverPolicy::Honest);
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut x_seen = [0u32; 2];
        for _ in 0..200 {
            let transcript = execute_epr(&prog, &prover, &mut rng).unwrap();
            x_seen[transcript.x()[0] as usize] += 1;
            for run in RunType::ALL {
                let outcome = finalize_run(transcript.clone(), run, &mut rng).unwrap();
                assert!(outcome.accept, "honest deferred run rejected under {run:?}");
                assert_eq!(outcome.transcript.gadgets[0].x, transcript.x()[0]);
            }
        }
        // The reply bit is a fresh coin each interaction.
        assert!(x_seen[0] > 50 && x_seen[1] > 50, "replies not balanced: {x_seen:?}");
    }

    #[test]
    fn deferred_echo_passes_z_test_only_sometimes_x() {
        // The echo prover never measures, so Z-type test runs (no checks on
        // a bare-T program) always accept, while X-type checks depend on the
        // collapsed bits.
        let prog = single_t();
        let prover = ProverSpec::Policy(ProverPolicy::EchoZero);
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let mut x_accepts = 0u32;
        for _ in 0..300 {
            let transcript = execute_epr(&prog, &prover, &mut rng).unwrap();
            let z = finalize_run(transcript.clone(), RunType::ZTest, &mut rng).unwrap();
            assert!(z.accept);
            let x = finalize_run(transcript, RunType::XTest, &mut rng).unwrap();
            x_accepts += u32::from(x.accept);
        }
        assert!(
            x_accepts > 30 && x_accepts < 270,
            "echo prover X-test acceptance looks deterministic: {x_accepts}/300"
        );
    }

    #[test]
    fn deferred_rejects_oversized_programs() {
        let prog = program("qubits 1\nH 0\n"); // t = 6, so 2m = 26 qubits
        let prover = ProverSpec::Policy(ProverPolicy::Honest);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            execute_epr(&prog, &prover, &mut rng),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn attack_dimension_mismatch_is_rejected() {
        let prog = single_t();
        let wrong_dims = ProtocolDims::new(2, 1);
        let term = KrausTerm::new(vec![(
            PauliString::identity(wrong_dims.m()),
            C64::new(1.0, 0.0),
        )])
        .unwrap();
        let attack = AttackSpec::new(wrong_dims, vec![term]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(matches!(
            run_epr(&prog, RunType::Comp, &ProverSpec::Attacked(attack), &mut rng),
            Err(Error::Attack(_))
        ));
    }

    #[test]
    fn benign_attack_leaves_all_runs_accepting() {
        // Z on the measured gadget slot, Y on the reply slot, nothing on the
        // data wire: no reported bit flips, so every run still accepts.
        let prog = single_t();
        let attack = parse_attack("0,1 Z.Y.I\n", prog.dims()).unwrap();
        attack.validate_executable().unwrap();
        let prover = ProverSpec::Attacked(attack);
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for _ in 0..150 {
            for run in RunType::ALL {
                let outcome = run_epr(&prog, run, &prover, &mut rng).unwrap();
                assert!(outcome.accept, "benign attack rejected under {run:?}");
            }
        }
    }

    #[test]
    fn gadget_flip_is_caught_by_the_x_test_and_corrupts_comp() {
        // X on the measured gadget slot flips the reported bit: the X-type
        // test catches it every time, the Z-type test has no check to fail,
        // and the computation output picks up a deterministic flip
        // (X Z P ahead of T|0> reads 1).
        let prog = single_t();
        let attack = parse_attack("1,0 X.I.I\n", prog.dims()).unwrap();
        let prover = ProverSpec::Attacked(attack);
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..150 {
            let x = run_epr(&prog, RunType::XTest, &prover, &mut rng).unwrap();
            assert!(!x.accept && !x.checks_passed);
            let z = run_epr(&prog, RunType::ZTest, &prover, &mut rng).unwrap();
            assert!(z.accept);
            let c = run_epr(&prog, RunType::Comp, &prover, &mut rng).unwrap();
            assert_eq!(c.decrypted_output, Some(1));
            assert!(!c.accept);
        }
    }

    #[test]
    fn deferred_and_fast_agree_on_a_flip_attack() {
        // Same attack through the reference engine: identical verdict
        // pattern (deterministic in all three run types for this attack).
        let prog = single_t();
        let attack = parse_attack("1,0 X.I.I\n", prog.dims()).unwrap();
        let prover = ProverSpec::Attacked(attack);
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        for _ in 0..100 {
            let transcript = execute_epr(&prog, &prover, &mut rng).unwrap();
            let x = finalize_run(transcript.clone(), RunType::XTest, &mut rng).unwrap();
            assert!(!x.accept);
            let z = finalize_run(transcript.clone(), RunType::ZTest, &mut rng).unwrap();
            assert!(z.accept);
            let c = finalize_run(transcript, RunType::Comp, &mut rng).unwrap();
            assert_eq!(c.decrypted_output, Some(1));
        }
    }

    #[test]
    fn view_distance_vanishes_for_tiny_programs() {
        let empty = program("qubits 1\n");
        let t_prog = single_t();
        for policy in [ProverPolicy::Honest, ProverPolicy::EchoZero] {
            let d = prover_view_distance(&empty, policy).unwrap();
            assert!(d <= 1e-9, "empty-program view distance {d} under {policy:?}");
            let d = prover_view_distance(&t_prog, policy).unwrap();
            assert!(d <= 1e-9, "T-program view distance {d} under {policy:?}");
        }
    }

    #[test]
    fn view_distance_guards_capacity() {
        let prog = program("qubits 1\nH 0\n");
        assert!(matches!(
            prover_view_distance(&prog, ProverPolicy::Honest),
            Err(Error::Capacity { .. })
        ));
    }
}
