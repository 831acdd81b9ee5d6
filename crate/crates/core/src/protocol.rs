//! The interactive delegation protocol with verifier-prepared resource
//! states, executed against an honest or a fully scripted prover.
//!
//! A run has one of three types: a computation run that actually evaluates
//! the circuit, and two test runs in which every wire carries a dummy state
//! and the verifier knows every bit the prover should report. The prover
//! cannot tell the three apart, which is what the soundness analysis
//! leverages.
//!
//! Gates act on one-time-padded data: `X`/`Z` are pure key flips (and only
//! meaningful in a computation run), `H`/`CNOT` are applied physically with
//! the keys rewritten, and each `T` is delegated through a small interactive
//! gadget that consumes one verifier-prepared aux qubit, one measurement
//! report `c`, and one verifier reply `x`.

use crate::circuit::{GadgetProgram, GadgetVariant, Step, VariantSelector};
use crate::pauli::{clifford_key_update, relabel_aux, PadKey};
use crate::statevec::{self, AuxStateSpec, Gate, GateKind, State};
use crate::{Error, Result};
use rand::Rng;

/// The three run types the verifier chooses among uniformly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RunType {
    Comp,
    XTest,
    ZTest,
}

impl RunType {
    pub const ALL: [RunType; 3] = [RunType::Comp, RunType::XTest, RunType::ZTest];

    /// Uniform draw over the three run types.
    pub fn sample<R: Rng>(rng: &mut R) -> Self {
        Self::ALL[rng.gen_range(0..3)]
    }

    pub fn name(self) -> &'static str {
        match self {
            RunType::Comp => "comp",
            RunType::XTest => "xtest",
            RunType::ZTest => "ztest",
        }
    }
}

impl VariantSelector {
    /// The gadget variant this compiled gadget uses in a given run type.
    pub fn for_run(&self, run: RunType) -> GadgetVariant {
        match run {
            RunType::Comp => self.comp,
            RunType::XTest => self.xtest,
            RunType::ZTest => self.ztest,
        }
    }
}

/// Scripted prover behaviors for the direct protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProverPolicy {
    /// Follows the protocol exactly.
    Honest,
    /// Applies every instructed unitary but never measures anything and
    /// reports 0 for every measurement request.
    EchoZero,
}

/// The verifier's secret per-gadget random bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TGadgetRandomness {
    /// Computation gadget: the aux qubit is a relabelled magic state.
    Comp { d: u8, e: u8, y: u8 },
    /// X-type test gadget: the aux qubit is `|d>`; `x` is drawn up front.
    XVar { d: u8, x: u8 },
    /// Z-type test gadget: the aux qubit is `Z^d P^y |+>`.
    ZVar { d: u8, y: u8 },
}

impl TGadgetRandomness {
    /// Draws the bits a gadget of the given variant needs (in a fixed order,
    /// so seeded runs are reproducible).
    pub fn draw<R: Rng>(variant: GadgetVariant, rng: &mut R) -> Self {
        let bit = |rng: &mut R| u8::from(rng.gen::<bool>());
        match variant {
            GadgetVariant::Comp => {
                let d = bit(rng);
                let e = bit(rng);
                let y = bit(rng);
                TGadgetRandomness::Comp { d, e, y }
            }
            GadgetVariant::XVar => {
                let d = bit(rng);
                let x = bit(rng);
                TGadgetRandomness::XVar { d, x }
            }
            GadgetVariant::ZVar => {
                let d = bit(rng);
                let y = bit(rng);
                TGadgetRandomness::ZVar { d, y }
            }
        }
    }

    pub fn variant(&self) -> GadgetVariant {
        match self {
            TGadgetRandomness::Comp { .. } => GadgetVariant::Comp,
            TGadgetRandomness::XVar { .. } => GadgetVariant::XVar,
            TGadgetRandomness::ZVar { .. } => GadgetVariant::ZVar,
        }
    }
}

/// What the verifier remembers about one completed gadget.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GadgetRecord {
    /// The prover's reported measurement bit.
    pub c: u8,
    /// The verifier's reply.
    pub x: u8,
    /// Outcome of the consistency check, for gadget variants that have one.
    pub check: Option<bool>,
}

/// The classical conversation of one run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transcript {
    pub gadgets: Vec<GadgetRecord>,
    /// The prover's reported final output bit (raw, still padded).
    pub output_bit: u8,
}

/// Verdict and evidence of one run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub run_type: RunType,
    pub transcript: Transcript,
    /// True iff every per-gadget check passed (vacuously true without checks).
    pub checks_passed: bool,
    /// Output bit after removing the pad; not defined for Z-type test runs.
    pub decrypted_output: Option<u8>,
    pub accept: bool,
}

/// The verifier's reply and bookkeeping for one gadget, given the reported
/// bit `c`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GadgetUpdate {
    pub x: u8,
    pub new_pad: PadKey,
    pub check: Option<bool>,
}

/// Prepares the padded input register for a run: computation and X-type test
/// runs place `X^a Z^b |0...0>` (the physical state `|a>`), Z-type test runs
/// place `X^a Z^b |+...+>`. Keys are drawn per wire, `a` before `b`, wire 0
/// first.
pub fn initial_input<R: Rng>(run_type: RunType, n: usize, rng: &mut R) -> Result<(State, Vec<PadKey>)> {
    if n == 0 {
        return Err(Error::Invalid("a run needs at least one data wire".into()));
    }
    let mut keys = Vec::with_capacity(n);
    let mut specs = Vec::with_capacity(n);
    for _ in 0..n {
        let a = u8::from(rng.gen::<bool>());
        let b = u8::from(rng.gen::<bool>());
        keys.push(PadKey::new(a, b));
        specs.push(match run_type {
            RunType::Comp | RunType::XTest => {
                if a == 1 {
                    AuxStateSpec::One
                } else {
                    AuxStateSpec::Zero
                }
            }
            RunType::ZTest => {
                if b == 1 {
                    AuxStateSpec::Minus
                } else {
                    AuxStateSpec::Plus
                }
            }
        });
    }
    Ok((statevec::prepare_state(&specs)?, keys))
}

/// The aux qubit the verifier prepares for one gadget.
pub fn t_gadget_aux_state(variant: GadgetVariant, randomness: &TGadgetRandomness) -> Result<State> {
    if randomness.variant() != variant {
        return Err(Error::Protocol(format!(
            "randomness {:?} does not match gadget variant {:?}",
            randomness, variant
        )));
    }
    let spec = match *randomness {
        TGadgetRandomness::Comp { d, e, y } => {
            // X^d Z^e P^y T|+>  ==  Z^eps P^ups T|+>  up to phase.
            let (eps, ups) = relabel_aux(d, e, y);
            match (eps, ups) {
                (0, 0) => AuxStateSpec::TPlus,
                (1, 0) => AuxStateSpec::TMinus,
                (0, 1) => AuxStateSpec::PTPlus,
                _ => AuxStateSpec::PTMinus,
            }
        }
        TGadgetRandomness::XVar { d, .. } => {
            if d == 1 {
                AuxStateSpec::One
            } else {
                AuxStateSpec::Zero
            }
        }
        TGadgetRandomness::ZVar { d, y } => match (d, y) {
            (0, 0) => AuxStateSpec::Plus,
            (1, 0) => AuxStateSpec::Minus,
            (0, 1) => AuxStateSpec::PPlus,
            _ => AuxStateSpec::PMinus,
        },
    };
    statevec::prepare_state(&[spec])
}

/// The honest prover's actions for one gadget on a joint state: entangle the
/// aux qubit into the data wire, measure the data wire, fetch the verifier's
/// reply for the observed bit, apply the instructed phase correction, and
/// swap the gadget output back onto the data wire. Returns the reported bit
/// and the new state (with the collapsed qubit left at `aux_qubit`).
pub fn honest_t_gadget<R: Rng>(
    state: &State,
    data_wire: usize,
    aux_qubit: usize,
    x_for: impl FnOnce(u8) -> u8,
    rng: &mut R,
) -> Result<(u8, State)> {
    let mut out = state.clone();
    out.apply_gate_mut(Gate::new(GateKind::Cnot), &[aux_qubit, data_wire])?;
    let c = out.measure_mut(data_wire, rng)?;
    let x = x_for(c);
    if x & 1 == 1 {
        out.apply_gate_mut(Gate::new(GateKind::P), &[aux_qubit])?;
    }
    out.swap_qubits_mut(data_wire, aux_qubit)?;
    Ok((c, out))
}

/// The verifier's classical side of one gadget, given the reported bit.
///
/// Computation gadget: reply `x = a + c + d + y`, new pad
/// `(a+c, (a+c)(d+y) + a + b + c + e + y)` (all mod 2). X-type test: reply
/// the pre-drawn `x`, new pad `(d, 0)`, and check `c == a + d`. Z-type test:
/// reply `x = y`, new pad `(c, b + d + y)`, no check.
pub fn verifier_t_gadget_update(
    variant: GadgetVariant,
    pad: PadKey,
    c: u8,
    randomness: &TGadgetRandomness,
) -> Result<GadgetUpdate> {
    if randomness.variant() != variant {
        return Err(Error::Protocol(format!(
            "randomness {:?} does not match gadget variant {:?}",
            randomness, variant
        )));
    }
    let c = c & 1;
    let (a, b) = (pad.a, pad.b);
    Ok(match *randomness {
        TGadgetRandomness::Comp { d, e, y } => {
            let x = a ^ c ^ d ^ y;
            let ac = a ^ c;
            let new_b = (ac & (d ^ y)) ^ a ^ b ^ c ^ e ^ y;
            GadgetUpdate { x, new_pad: PadKey::new(ac, new_b), check: None }
        }
        TGadgetRandomness::XVar { d, x } => GadgetUpdate {
            x,
            new_pad: PadKey::new(d, 0),
            check: Some(c == (a ^ d)),
        },
        TGadgetRandomness::ZVar { d, y } => GadgetUpdate {
            x: y,
            new_pad: PadKey::new(c, b ^ d ^ y),
            check: None,
        },
    })
}

/// Executes one full run of the direct protocol against a scripted prover.
///
/// Data wires stay at state positions `0..n` throughout; each gadget tensors
/// its aux qubit onto the end, and the honest path discards the collapsed
/// qubit afterwards while the never-measuring prover keeps it.
pub fn execute<R: Rng>(
    program: &GadgetProgram,
    run_type: RunType,
    policy: ProverPolicy,
    rng: &mut R,
) -> Result<Outcome> {
    let (mut state, mut pads) = initial_input(run_type, program.n, rng)?;
    let mut records: Vec<GadgetRecord> = Vec::with_capacity(program.t);
    for step in &program.steps {
        match step {
            Step::DirectClifford { gate, targets } => match gate.kind {
                GateKind::X | GateKind::Z => {
                    // Pure key flip; only a computation run tracks it.
                    if run_type == RunType::Comp {
                        pads = clifford_key_update(*gate, &pads, targets)?;
                    }
                }
                GateKind::H | GateKind::Cnot => {
                    state.apply_gate_mut(*gate, targets)?;
                    pads = clifford_key_update(*gate, &pads, targets)?;
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
                let randomness = TGadgetRandomness::draw(variant, rng);
                let aux = t_gadget_aux_state(variant, &randomness)?;
                state = state.tensor(&aux)?;
                let aux_pos = state.num_qubits() - 1;
                // The verifier's reply is a pure function of the reported
                // bit, so both branches can be precomputed.
                let upd0 = verifier_t_gadget_update(variant, pads[*wire], 0, &randomness)?;
                let upd1 = verifier_t_gadget_update(variant, pads[*wire], 1, &randomness)?;
                let c = match policy {
                    ProverPolicy::Honest => {
                        let (x0, x1) = (upd0.x, upd1.x);
                        let (c, next) = honest_t_gadget(
                            &state,
                            *wire,
                            aux_pos,
                            move |bit| if bit == 0 { x0 } else { x1 },
                            rng,
                        )?;
                        state = next.discard_qubit(aux_pos)?;
                        c
                    }
                    ProverPolicy::EchoZero => {
                        state.apply_gate_mut(Gate::new(GateKind::Cnot), &[aux_pos, *wire])?;
                        if upd0.x & 1 == 1 {
                            state.apply_gate_mut(Gate::new(GateKind::P), &[aux_pos])?;
                        }
                        state.swap_qubits_mut(*wire, aux_pos)?;
                        0
                    }
                };
                let upd = if c == 0 { upd0 } else { upd1 };
                pads[*wire] = upd.new_pad;
                records.push(GadgetRecord { c, x: upd.x, check: upd.check });
            }
        }
    }
    let output_bit = match policy {
        ProverPolicy::Honest => state.measure_mut(program.output_wire(), rng)?,
        ProverPolicy::EchoZero => 0,
    };
    Ok(finish_outcome(run_type, records, output_bit, pads[program.output_wire()]))
}

/// Applies the per-run acceptance rule to a finished conversation.
pub(crate) fn finish_outcome(
    run_type: RunType,
    records: Vec<GadgetRecord>,
    output_bit: u8,
    output_pad: PadKey,
) -> Outcome {
    let checks_passed = records.iter().all(|r| r.check.unwrap_or(true));
    let decrypted_output = match run_type {
        RunType::Comp | RunType::XTest => Some(output_bit ^ output_pad.a),
        RunType::ZTest => None,
    };
    let accept = match run_type {
        RunType::Comp => decrypted_output == Some(0),
        RunType::XTest => checks_passed && decrypted_output == Some(0),
        RunType::ZTest => checks_passed,
    };
    Outcome {
        run_type,
        transcript: Transcript { gadgets: records, output_bit },
        checks_passed,
        decrypted_output,
        accept,
    }
}
