//! Source circuits, their text format, and compilation into gadget programs.
//!
//! The source gate set is `X, Z, H, T, CNOT`. Circuits are written as
//!
//! ```text
//! # comment
//! qubits 2
//! H 0
//! CNOT 0 1
//! T 1
//! ```
//!
//! with wire indices in `0..n` and the **last wire as the output wire**.
//! `P` is deliberately not part of the grammar (`P = T T`).
//!
//! Compilation rewrites every non-Clifford `T` into a delegated T-gadget and
//! expands every `H` into the fixed sequence `H T T H T T H T T H`, whose
//! product is `H` up to global phase; the run-dependent choice of gadget
//! variant for each resulting gadget is recorded in a [`VariantSelector`].

use crate::pauli::ProtocolDims;
use crate::statevec::{self, Gate, GateKind, State};
use crate::{Error, Result};

/// One gate of a source circuit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourceGate {
    X(usize),
    Z(usize),
    H(usize),
    T(usize),
    Cnot(usize, usize),
}

impl SourceGate {
    /// All wires the gate touches.
    pub fn wires(self) -> Vec<usize> {
        match self {
            SourceGate::X(w) | SourceGate::Z(w) | SourceGate::H(w) | SourceGate::T(w) => vec![w],
            SourceGate::Cnot(i, j) => vec![i, j],
        }
    }
}

/// A source circuit on `n` wires; the last wire is the output wire.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Circuit {
    pub n: usize,
    pub gates: Vec<SourceGate>,
}

impl Circuit {
    pub fn new(n: usize, gates: Vec<SourceGate>) -> Result<Self> {
        let circuit = Circuit { n, gates };
        circuit.validate()?;
        Ok(circuit)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Invalid("a circuit needs at least one wire".into()));
        }
        if self.n > statevec::MAX_QUBITS {
            return Err(Error::Capacity { requested: self.n, limit: statevec::MAX_QUBITS });
        }
        for (idx, gate) in self.gates.iter().enumerate() {
            for w in gate.wires() {
                if w >= self.n {
                    return Err(Error::Invalid(format!(
                        "gate {idx} touches wire {w}, but the circuit has {} wires",
                        self.n
                    )));
                }
            }
            if let SourceGate::Cnot(i, j) = gate {
                if i == j {
                    return Err(Error::Invalid(format!(
                        "gate {idx}: CNOT control and target must differ"
                    )));
                }
            }
        }
        Ok(())
    }

    /// The output wire (always the last one).
    pub fn output_wire(&self) -> usize {
        self.n - 1
    }

    /// Number of source `T` gates.
    pub fn bare_t_count(&self) -> usize {
        self.gates.iter().filter(|g| matches!(g, SourceGate::T(_))).count()
    }

    /// Number of source `H` gates.
    pub fn h_count(&self) -> usize {
        self.gates.iter().filter(|g| matches!(g, SourceGate::H(_))).count()
    }
}

/// Parses the circuit text format. Comments start at `#` (full-line or
/// trailing); blank lines are ignored; the first significant line must be
/// `qubits <n>`.
pub fn parse_circuit(text: &str) -> Result<Circuit> {
    let mut n: Option<usize> = None;
    let mut gates = Vec::new();
    for (line_idx, raw) in text.lines().enumerate() {
        let line = line_idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut tokens = body.split_whitespace();
        let head = tokens.next().expect("non-empty body has a first token");
        let parse_wire = |tok: Option<&str>, what: &str| -> Result<usize> {
            let tok = tok.ok_or_else(|| Error::Parse {
                line,
                message: format!("missing {what}"),
            })?;
            tok.parse::<usize>().map_err(|_| Error::Parse {
                line,
                message: format!("{what} {tok:?} is not a nonnegative integer"),
            })
        };
        if n.is_none() {
            if head != "qubits" {
                return Err(Error::Parse {
                    line,
                    message: format!("expected `qubits <n>` before any gate, found {head:?}"),
                });
            }
            let count = parse_wire(tokens.next(), "qubit count")?;
            if tokens.next().is_some() {
                return Err(Error::Parse { line, message: "trailing tokens after qubit count".into() });
            }
            if count == 0 {
                return Err(Error::Parse { line, message: "qubit count must be at least 1".into() });
            }
            n = Some(count);
            continue;
        }
        let num_wires = n.expect("qubit count was just set");
        let gate = match head {
            "X" => SourceGate::X(parse_wire(tokens.next(), "wire index")?),
            "Z" => SourceGate::Z(parse_wire(tokens.next(), "wire index")?),
            "H" => SourceGate::H(parse_wire(tokens.next(), "wire index")?),
            "T" => SourceGate::T(parse_wire(tokens.next(), "wire index")?),
            "CNOT" => {
                let ctrl = parse_wire(tokens.next(), "control wire")?;
                let tgt = parse_wire(tokens.next(), "target wire")?;
                SourceGate::Cnot(ctrl, tgt)
            }
            "P" => {
                return Err(Error::Parse {
                    line,
                    message: "P is not in the gate set; write `T <wire>` twice instead".into(),
                })
            }
            "qubits" => {
                return Err(Error::Parse { line, message: "duplicate `qubits` line".into() })
            }
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown gate {other:?} (expected X, Z, H, T, or CNOT)"),
                })
            }
        };
        if tokens.next().is_some() {
            return Err(Error::Parse { line, message: "trailing tokens after gate".into() });
        }
        for w in gate.wires() {
            if w >= num_wires {
                return Err(Error::Parse {
                    line,
                    message: format!("wire {w} out of range (circuit has {num_wires} wires)"),
                });
            }
        }
        if let SourceGate::Cnot(i, j) = gate {
            if i == j {
                return Err(Error::Parse {
                    line,
                    message: "CNOT control and target must differ".into(),
                });
            }
        }
        gates.push(gate);
    }
    let n = n.ok_or(Error::Parse { line: 0, message: "empty circuit file (no `qubits` line)".into() })?;
    Circuit::new(n, gates)
}

/// Writes a circuit back into the text format accepted by [`parse_circuit`].
pub fn serialize_circuit(circuit: &Circuit) -> String {
    let mut out = format!("qubits {}\n", circuit.n);
    for gate in &circuit.gates {
        match gate {
            SourceGate::X(w) => out.push_str(&format!("X {w}\n")),
            SourceGate::Z(w) => out.push_str(&format!("Z {w}\n")),
            SourceGate::H(w) => out.push_str(&format!("H {w}\n")),
            SourceGate::T(w) => out.push_str(&format!("T {w}\n")),
            SourceGate::Cnot(i, j) => out.push_str(&format!("CNOT {i} {j}\n")),
        }
    }
    out
}

/// T-gadget flavors: the computation flavor consumes a magic-type resource;
/// the two test flavors consume dummy resources that make the gadget fully
/// checkable or fully transparent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GadgetVariant {
    Comp,
    XVar,
    ZVar,
}

/// Which gadget variant each run type uses for one compiled T-gadget.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VariantSelector {
    pub comp: GadgetVariant,
    pub xtest: GadgetVariant,
    pub ztest: GadgetVariant,
}

impl VariantSelector {
    /// Selector for a source-level `T` gate.
    pub fn bare_t() -> Self {
        VariantSelector {
            comp: GadgetVariant::Comp,
            xtest: GadgetVariant::XVar,
            ztest: GadgetVariant::ZVar,
        }
    }

    /// Selector for position `pos` (in `0..6`) of an `H` expansion. The data
    /// wire sits in the conjugate basis between the inserted Hadamards, so
    /// the test-run variants swap in the middle pair.
    pub fn h_expansion(pos: usize) -> Self {
        assert!(pos < 6, "H expansion has six gadgets");
        let xtest = [
            GadgetVariant::ZVar,
            GadgetVariant::ZVar,
            GadgetVariant::XVar,
            GadgetVariant::XVar,
            GadgetVariant::ZVar,
            GadgetVariant::ZVar,
        ][pos];
        let ztest = [
            GadgetVariant::XVar,
            GadgetVariant::XVar,
            GadgetVariant::ZVar,
            GadgetVariant::ZVar,
            GadgetVariant::XVar,
            GadgetVariant::XVar,
        ][pos];
        VariantSelector { comp: GadgetVariant::Comp, xtest, ztest }
    }
}

/// One step of a compiled program.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Step {
    /// A Clifford the protocol handles directly (only `X`, `Z`, `H`, `CNOT`
    /// appear; `X`/`Z` are key flips, `H`/`CNOT` are applied physically).
    DirectClifford { gate: Gate, targets: Vec<usize> },
    /// The `index`-th T-gadget, acting on data wire `wire`.
    TGadget { wire: usize, index: usize, selector: VariantSelector },
}

/// A compiled program: direct Cliffords interleaved with `t` T-gadgets on
/// `n` data wires.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GadgetProgram {
    pub n: usize,
    pub steps: Vec<Step>,
    pub t: usize,
}

impl GadgetProgram {
    /// Register dimensions `(n, t)` of the compiled run.
    pub fn dims(&self) -> ProtocolDims {
        ProtocolDims::new(self.n, self.t)
    }

    /// Output wire (always the last data wire).
    pub fn output_wire(&self) -> usize {
        self.n - 1
    }

    /// Data wire of each gadget, by gadget index.
    pub fn gadget_wires(&self) -> Vec<usize> {
        let mut out = vec![0usize; self.t];
        for step in &self.steps {
            if let Step::TGadget { wire, index, .. } = step {
                out[*index] = *wire;
            }
        }
        out
    }
}

/// Compiles a source circuit into a gadget program: `T` becomes one gadget,
/// `H` becomes `H T T H T T H T T H` (four direct Hadamards and six
/// gadgets), and the Clifford gates pass through unchanged.
pub fn compile_to_gadgets(circuit: &Circuit) -> Result<GadgetProgram> {
    circuit.validate()?;
    let mut steps = Vec::new();
    let mut t = 0usize;
    let mut push_gadget = |steps: &mut Vec<Step>, wire: usize, selector: VariantSelector| {
        steps.push(Step::TGadget { wire, index: t, selector });
        t += 1;
    };
    for gate in &circuit.gates {
        match *gate {
            SourceGate::X(w) => steps.push(Step::DirectClifford {
                gate: Gate::new(GateKind::X),
                targets: vec![w],
            }),
            SourceGate::Z(w) => steps.push(Step::DirectClifford {
                gate: Gate::new(GateKind::Z),
                targets: vec![w],
            }),
            SourceGate::Cnot(i, j) => steps.push(Step::DirectClifford {
                gate: Gate::new(GateKind::Cnot),
                targets: vec![i, j],
            }),
            SourceGate::T(w) => push_gadget(&mut steps, w, VariantSelector::bare_t()),
            SourceGate::H(w) => {
                let h = Step::DirectClifford { gate: Gate::new(GateKind::H), targets: vec![w] };
                for block in 0..3 {
                    steps.push(h.clone());
                    push_gadget(&mut steps, w, VariantSelector::h_expansion(2 * block));
                    push_gadget(&mut steps, w, VariantSelector::h_expansion(2 * block + 1));
                }
                steps.push(h);
            }
        }
    }
    Ok(GadgetProgram { n: circuit.n, steps, t })
}

/// Probability that the output wire of `circuit` applied to `|0...0>` reads 0.
pub fn ideal_probability(circuit: &Circuit) -> Result<f64> {
    circuit.validate()?;
    let mut state = State::computational_zero(circuit.n)?;
    for gate in &circuit.gates {
        match *gate {
            SourceGate::X(w) => state.apply_gate_mut(Gate::new(GateKind::X), &[w])?,
            SourceGate::Z(w) => state.apply_gate_mut(Gate::new(GateKind::Z), &[w])?,
            SourceGate::H(w) => state.apply_gate_mut(Gate::new(GateKind::H), &[w])?,
            SourceGate::T(w) => state.apply_gate_mut(Gate::new(GateKind::T), &[w])?,
            SourceGate::Cnot(i, j) => state.apply_gate_mut(Gate::new(GateKind::Cnot), &[i, j])?,
        }
    }
    let out = circuit.output_wire();
    let p0: f64 = state
        .amplitudes()
        .iter()
        .enumerate()
        .filter(|(i, _)| state.bit_of(*i, out) == 0)
        .map(|(_, z)| z.norm_sqr())
        .sum();
    Ok(p0)
}

/// Decision-problem classification of a circuit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InstanceKind {
    Yes,
    No,
    Neither,
}

impl InstanceKind {
    pub fn name(self) -> &'static str {
        match self {
            InstanceKind::Yes => "yes",
            InstanceKind::No => "no",
            InstanceKind::Neither => "neither",
        }
    }
}

/// Classification plus the exact output probability it is based on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InstanceLabel {
    pub kind: InstanceKind,
    pub p: f64,
}

/// Classifies a circuit: `yes` if the output-0 probability is at least 2/3,
/// `no` if it is at most 1/3, `neither` in between.
pub fn classify_instance(circuit: &Circuit) -> Result<InstanceLabel> {
    let p = ideal_probability(circuit)?;
    let kind = if p >= 2.0 / 3.0 {
        InstanceKind::Yes
    } else if p <= 1.0 / 3.0 {
        InstanceKind::No
    } else {
        InstanceKind::Neither
    };
    Ok(InstanceLabel { kind, p })
}
