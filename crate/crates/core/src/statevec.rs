//! Dense statevector simulation of small quantum registers.
//!
//! A [`State`] stores the full amplitude vector of an `n`-qubit register.
//! **Qubit 0 is the most significant bit of the amplitude index**: for a
//! 2-qubit state the amplitudes are ordered `|00>, |01>, |10>, |11>` with
//! qubit 0 the left bit. Registers are capped at [`MAX_QUBITS`] qubits since
//! everything here is dense.
//!
//! All operations preserve the L2 norm to machine precision (measurement and
//! projection renormalize explicitly). Randomized operations take an explicit
//! RNG; nothing here carries hidden state.

use crate::linalg;
use crate::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::Rng;

/// Hard cap on dense register size.
pub const MAX_QUBITS: usize = 24;

/// Numerical tolerance used for norm and fidelity checks throughout.
pub const EPS: f64 = 1e-9;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Gate kinds understood by the simulator.
///
/// `P = diag(1, i)` and `T = diag(1, e^{i pi/4})`; `Cnot` takes its control
/// first. `X`, `Z`, `H`, and `Cnot` are self-inverse.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GateKind {
    X,
    Z,
    H,
    P,
    T,
    Cnot,
}

impl GateKind {
    /// Number of target qubits the gate takes.
    pub fn arity(self) -> usize {
        match self {
            GateKind::Cnot => 2,
            _ => 1,
        }
    }

    /// Canonical text name.
    pub fn name(self) -> &'static str {
        match self {
            GateKind::X => "X",
            GateKind::Z => "Z",
            GateKind::H => "H",
            GateKind::P => "P",
            GateKind::T => "T",
            GateKind::Cnot => "CNOT",
        }
    }
}

/// A gate application: a kind plus an adjoint flag.
///
/// The flag only matters for `P` and `T`; the other kinds are self-adjoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Gate {
    pub kind: GateKind,
    pub dagger: bool,
}

impl Gate {
    pub fn new(kind: GateKind) -> Self {
        Gate { kind, dagger: false }
    }

    pub fn dagger_of(kind: GateKind) -> Self {
        Gate { kind, dagger: true }
    }

    /// The adjoint of this gate.
    pub fn adjoint(self) -> Self {
        Gate { kind: self.kind, dagger: !self.dagger }
    }

    pub fn arity(self) -> usize {
        self.kind.arity()
    }

    /// Dense single-qubit matrix (row-major `[m00, m01, m10, m11]`).
    /// Panics for `Cnot`, which has no single-qubit matrix.
    pub fn single_qubit_matrix(self) -> [C64; 4] {
        let s = FRAC_1_SQRT_2;
        match self.kind {
            GateKind::X => [c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
            GateKind::Z => [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)],
            GateKind::H => [c(s, 0.0), c(s, 0.0), c(s, 0.0), c(-s, 0.0)],
            GateKind::P => {
                let ph = if self.dagger { c(0.0, -1.0) } else { c(0.0, 1.0) };
                [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), ph]
            }
            GateKind::T => {
                let ph = if self.dagger { c(s, -s) } else { c(s, s) };
                [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), ph]
            }
            GateKind::Cnot => panic!("CNOT has no single-qubit matrix"),
        }
    }
}

/// The verifier's preparable single-qubit states.
///
/// The set `S = {|0>, |1>, |+>, |->, P|+>, P|->, T|+>, T|->, PT|+>, PT|->}`
/// covers everything the limited verifier ever needs to create.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AuxStateSpec {
    Zero,
    One,
    Plus,
    Minus,
    PPlus,
    PMinus,
    TPlus,
    TMinus,
    PTPlus,
    PTMinus,
}

impl AuxStateSpec {
    /// All ten members of the preparable set.
    pub const ALL: [AuxStateSpec; 10] = [
        AuxStateSpec::Zero,
        AuxStateSpec::One,
        AuxStateSpec::Plus,
        AuxStateSpec::Minus,
        AuxStateSpec::PPlus,
        AuxStateSpec::PMinus,
        AuxStateSpec::TPlus,
        AuxStateSpec::TMinus,
        AuxStateSpec::PTPlus,
        AuxStateSpec::PTMinus,
    ];

    /// Amplitudes `(<0|psi>, <1|psi>)`.
    pub fn amplitudes(self) -> [C64; 2] {
        let s = FRAC_1_SQRT_2;
        // e^{i pi/4} = (1 + i)/sqrt(2); P contributes a further factor i on |1>.
        let t = c(0.5, 0.5); // e^{i pi/4}/sqrt(2)
        let pt = c(-0.5, 0.5); // i e^{i pi/4}/sqrt(2)
        match self {
            AuxStateSpec::Zero => [c(1.0, 0.0), c(0.0, 0.0)],
            AuxStateSpec::One => [c(0.0, 0.0), c(1.0, 0.0)],
            AuxStateSpec::Plus => [c(s, 0.0), c(s, 0.0)],
            AuxStateSpec::Minus => [c(s, 0.0), c(-s, 0.0)],
            AuxStateSpec::PPlus => [c(s, 0.0), c(0.0, s)],
            AuxStateSpec::PMinus => [c(s, 0.0), c(0.0, -s)],
            AuxStateSpec::TPlus => [c(s, 0.0), t],
            AuxStateSpec::TMinus => [c(s, 0.0), -t],
            AuxStateSpec::PTPlus => [c(s, 0.0), pt],
            AuxStateSpec::PTMinus => [c(s, 0.0), -pt],
        }
    }

    /// Human-readable label.
    pub fn label(self) -> &'static str {
        match self {
            AuxStateSpec::Zero => "|0>",
            AuxStateSpec::One => "|1>",
            AuxStateSpec::Plus => "|+>",
            AuxStateSpec::Minus => "|->",
            AuxStateSpec::PPlus => "P|+>",
            AuxStateSpec::PMinus => "P|->",
            AuxStateSpec::TPlus => "T|+>",
            AuxStateSpec::TMinus => "T|->",
            AuxStateSpec::PTPlus => "PT|+>",
            AuxStateSpec::PTMinus => "PT|->",
        }
    }
}

/// A pure state of `num_qubits` qubits as a dense, unit-norm amplitude vector.
#[derive(Clone, Debug)]
pub struct State {
    num_qubits: usize,
    amplitudes: Vec<C64>,
}

impl State {
    /// `|0...0>` on `num_qubits` qubits.
    pub fn computational_zero(num_qubits: usize) -> Result<Self> {
        check_capacity(num_qubits)?;
        let mut amplitudes = vec![c(0.0, 0.0); 1 << num_qubits];
        amplitudes[0] = c(1.0, 0.0);
        Ok(State { num_qubits, amplitudes })
    }

    /// Builds a state from raw amplitudes; the length must be a power of two
    /// and the norm must be 1 within [`EPS`].
    pub fn from_amplitudes(amplitudes: Vec<C64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || len.count_ones() != 1 {
            return Err(Error::Dimension(format!(
                "amplitude vector length {len} is not a power of two >= 2"
            )));
        }
        let num_qubits = len.trailing_zeros() as usize;
        check_capacity(num_qubits)?;
        let st = State { num_qubits, amplitudes };
        let n = st.norm();
        if (n - 1.0).abs() > EPS {
            return Err(Error::Norm { norm: n });
        }
        Ok(st)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    /// Crate-internal mutable amplitude access; callers must preserve the
    /// unit-norm invariant.
    pub(crate) fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amplitudes
    }

    /// L2 norm of the amplitude vector.
    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    fn mask(&self, qubit: usize) -> usize {
        1 << (self.num_qubits - 1 - qubit)
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.num_qubits {
            return Err(Error::QubitOutOfRange { index: qubit, num_qubits: self.num_qubits });
        }
        Ok(())
    }

    /// Bit of `qubit` within basis index `index`.
    pub fn bit_of(&self, index: usize, qubit: usize) -> u8 {
        ((index >> (self.num_qubits - 1 - qubit)) & 1) as u8
    }

    /// Applies a gate in place.
    pub fn apply_gate_mut(&mut self, gate: Gate, targets: &[usize]) -> Result<()> {
        if targets.len() != gate.arity() {
            return Err(Error::Dimension(format!(
                "{} takes {} target(s), got {}",
                gate.kind.name(),
                gate.arity(),
                targets.len()
            )));
        }
        for &t in targets {
            self.check_qubit(t)?;
        }
        match gate.kind {
            GateKind::Cnot => {
                let (ctrl, tgt) = (targets[0], targets[1]);
                if ctrl == tgt {
                    return Err(Error::Dimension("CNOT targets must be distinct".into()));
                }
                let (mc, mt) = (self.mask(ctrl), self.mask(tgt));
                for i in 0..self.amplitudes.len() {
                    if i & mc != 0 && i & mt == 0 {
                        self.amplitudes.swap(i, i | mt);
                    }
                }
            }
            GateKind::X => {
                let m = self.mask(targets[0]);
                for i in 0..self.amplitudes.len() {
                    if i & m == 0 {
                        self.amplitudes.swap(i, i | m);
                    }
                }
            }
            GateKind::Z => {
                let m = self.mask(targets[0]);
                for i in 0..self.amplitudes.len() {
                    if i & m != 0 {
                        self.amplitudes[i] = -self.amplitudes[i];
                    }
                }
            }
            GateKind::P | GateKind::T => {
                let ph = gate.single_qubit_matrix()[3];
                let m = self.mask(targets[0]);
                for i in 0..self.amplitudes.len() {
                    if i & m != 0 {
                        self.amplitudes[i] *= ph;
                    }
                }
            }
            GateKind::H => {
                let m = self.mask(targets[0]);
                let s = FRAC_1_SQRT_2;
                for i in 0..self.amplitudes.len() {
                    if i & m == 0 {
                        let j = i | m;
                        let (a, b) = (self.amplitudes[i], self.amplitudes[j]);
                        self.amplitudes[i] = (a + b) * s;
                        self.amplitudes[j] = (a - b) * s;
                    }
                }
            }
        }
        Ok(())
    }

    /// Samples a computational-basis measurement of `qubit` in place,
    /// collapsing and renormalizing. The register keeps its size.
    pub fn measure_mut<R: Rng>(&mut self, qubit: usize, rng: &mut R) -> Result<u8> {
        self.check_qubit(qubit)?;
        let m = self.mask(qubit);
        let p0: f64 = self
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| i & m == 0)
            .map(|(_, z)| z.norm_sqr())
            .sum();
        let bit = if rng.gen::<f64>() < p0 { 0 } else { 1 };
        let prob = if bit == 0 { p0 } else { 1.0 - p0 };
        if prob < 1e-12 {
            return Err(Error::DegenerateBranch { prob });
        }
        self.collapse(qubit, bit, prob);
        Ok(bit)
    }

    /// Projects `qubit` onto `bit` in place, returning the branch probability.
    /// Errors if the branch has (near-)zero probability.
    pub fn project_mut(&mut self, qubit: usize, bit: u8) -> Result<f64> {
        self.check_qubit(qubit)?;
        let m = self.mask(qubit);
        let prob: f64 = self
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| (((i & m) != 0) as u8) == bit)
            .map(|(_, z)| z.norm_sqr())
            .sum();
        if prob < 1e-12 {
            return Err(Error::DegenerateBranch { prob });
        }
        self.collapse(qubit, bit, prob);
        Ok(prob)
    }

    fn collapse(&mut self, qubit: usize, bit: u8, prob: f64) {
        let m = self.mask(qubit);
        let scale = 1.0 / prob.sqrt();
        for i in 0..self.amplitudes.len() {
            if (((i & m) != 0) as u8) == bit {
                self.amplitudes[i] *= scale;
            } else {
                self.amplitudes[i] = c(0.0, 0.0);
            }
        }
    }

    /// Swaps two qubits in place.
    pub fn swap_qubits_mut(&mut self, q1: usize, q2: usize) -> Result<()> {
        self.check_qubit(q1)?;
        self.check_qubit(q2)?;
        if q1 == q2 {
            return Ok(());
        }
        let (m1, m2) = (self.mask(q1), self.mask(q2));
        for i in 0..self.amplitudes.len() {
            if i & m1 != 0 && i & m2 == 0 {
                self.amplitudes.swap(i, i ^ m1 ^ m2);
            }
        }
        Ok(())
    }

    /// Tensor product `self (x) other`; `other`'s qubits are appended after
    /// this register's (i.e. on the less significant side of the index).
    pub fn tensor(&self, other: &State) -> Result<State> {
        let num_qubits = self.num_qubits + other.num_qubits;
        check_capacity(num_qubits)?;
        let mut amplitudes = Vec::with_capacity(1 << num_qubits);
        for a in &self.amplitudes {
            for b in &other.amplitudes {
                amplitudes.push(a * b);
            }
        }
        Ok(State { num_qubits, amplitudes })
    }

    /// Removes a qubit that is in a collapsed computational state (as after a
    /// measurement), shrinking the register by one. Errors if the qubit still
    /// has support on both basis values.
    pub fn discard_qubit(&self, qubit: usize) -> Result<State> {
        self.check_qubit(qubit)?;
        if self.num_qubits == 1 {
            return Err(Error::Dimension("cannot discard the last qubit".into()));
        }
        let m = self.mask(qubit);
        let p1: f64 = self
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| i & m != 0)
            .map(|(_, z)| z.norm_sqr())
            .sum();
        let bit = if p1 > 1.0 - EPS {
            1usize
        } else if p1 < EPS {
            0usize
        } else {
            return Err(Error::NotCollapsed { qubit });
        };
        let n_new = self.num_qubits - 1;
        let low_bits = self.num_qubits - 1 - qubit;
        let low_mask = (1usize << low_bits) - 1;
        let mut amplitudes = Vec::with_capacity(1 << n_new);
        for i_new in 0..(1usize << n_new) {
            let high = i_new >> low_bits;
            let low = i_new & low_mask;
            let old = (high << (low_bits + 1)) | (bit << low_bits) | low;
            amplitudes.push(self.amplitudes[old]);
        }
        Ok(State { num_qubits: n_new, amplitudes })
    }

    /// Returns the state with qubits reordered so that output position `i`
    /// holds what was qubit `order[i]`. `order` must be a permutation of
    /// `0..num_qubits`.
    pub fn reorder(&self, order: &[usize]) -> Result<State> {
        if order.len() != self.num_qubits {
            return Err(Error::Dimension(format!(
                "reorder permutation has length {}, expected {}",
                order.len(),
                self.num_qubits
            )));
        }
        let mut seen = vec![false; self.num_qubits];
        for &q in order {
            self.check_qubit(q)?;
            if seen[q] {
                return Err(Error::Dimension("reorder list repeats a qubit".into()));
            }
            seen[q] = true;
        }
        let n = self.num_qubits;
        let mut amplitudes = vec![c(0.0, 0.0); 1 << n];
        for old in 0..self.amplitudes.len() {
            let mut new = 0usize;
            for (pos, &q) in order.iter().enumerate() {
                if self.bit_of(old, q) == 1 {
                    new |= 1 << (n - 1 - pos);
                }
            }
            amplitudes[new] = self.amplitudes[old];
        }
        Ok(State { num_qubits: n, amplitudes })
    }
}

fn check_capacity(num_qubits: usize) -> Result<()> {
    if num_qubits == 0 {
        return Err(Error::Dimension("a register needs at least one qubit".into()));
    }
    if num_qubits > MAX_QUBITS {
        return Err(Error::Capacity { requested: num_qubits, limit: MAX_QUBITS });
    }
    Ok(())
}

/// Tensor product, in order, of the listed single-qubit states.
pub fn prepare_state(specs: &[AuxStateSpec]) -> Result<State> {
    if specs.is_empty() {
        return Err(Error::Dimension("prepare_state needs at least one qubit".into()));
    }
    check_capacity(specs.len())?;
    let mut amplitudes = vec![c(1.0, 0.0)];
    for spec in specs {
        let [a0, a1] = spec.amplitudes();
        let mut next = Vec::with_capacity(amplitudes.len() * 2);
        for z in &amplitudes {
            next.push(z * a0);
            next.push(z * a1);
        }
        amplitudes = next;
    }
    Ok(State { num_qubits: specs.len(), amplitudes })
}

/// Pure-function gate application.
pub fn apply_gate(state: &State, gate: Gate, targets: &[usize]) -> Result<State> {
    let mut out = state.clone();
    out.apply_gate_mut(gate, targets)?;
    Ok(out)
}

/// Samples a computational-basis measurement, returning the observed bit and
/// the collapsed, renormalized post-measurement state (register retained).
pub fn measure_computational<R: Rng>(state: &State, qubit: usize, rng: &mut R) -> Result<(u8, State)> {
    let mut out = state.clone();
    let bit = out.measure_mut(qubit, rng)?;
    Ok((bit, out))
}

/// `|<a|b>|`: 1 within [`EPS`] iff the states are equal up to a global phase.
pub fn fidelity_up_to_phase(a: &State, b: &State) -> Result<f64> {
    if a.num_qubits != b.num_qubits {
        return Err(Error::Dimension(format!(
            "fidelity between {}- and {}-qubit states",
            a.num_qubits, b.num_qubits
        )));
    }
    let ip: C64 = a
        .amplitudes
        .iter()
        .zip(&b.amplitudes)
        .map(|(x, y)| x.conj() * y)
        .sum();
    Ok(ip.norm())
}

/// A density matrix (used for reduced states and channel checks).
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    pub dim: usize,
    pub entries: DMatrix<C64>,
}

impl DensityMatrix {
    /// `|psi><psi|` of a pure state.
    pub fn from_pure(state: &State) -> Self {
        let dim = state.amplitudes.len();
        let v = nalgebra::DVector::from_iterator(dim, state.amplitudes.iter().copied());
        DensityMatrix { dim, entries: &v * v.adjoint() }
    }

    /// Checks Hermiticity, unit trace, and positive semidefiniteness.
    pub fn validate(&self) -> Result<()> {
        if self.entries.nrows() != self.dim || self.entries.ncols() != self.dim {
            return Err(Error::Dimension("density matrix shape mismatch".into()));
        }
        let herm = linalg::hermiticity_defect(&self.entries);
        if herm > EPS {
            return Err(Error::Dimension(format!("density matrix not Hermitian (defect {herm:.3e})")));
        }
        let tr: C64 = self.entries.diagonal().iter().sum();
        if (tr.re - 1.0).abs() > EPS || tr.im.abs() > EPS {
            return Err(Error::Dimension(format!("density matrix trace {tr} is not 1")));
        }
        let min = linalg::min_eigenvalue_hermitian(&self.entries);
        if min < -EPS {
            return Err(Error::Dimension(format!("density matrix has eigenvalue {min:.3e} < 0")));
        }
        Ok(())
    }
}

/// Partial trace over the complement of `keep`. Output qubit `i` (MSB first)
/// is input qubit `keep[i]`.
pub fn reduced_density(state: &State, keep: &[usize]) -> Result<DensityMatrix> {
    if keep.is_empty() {
        return Err(Error::Dimension("reduced_density needs a nonempty keep set".into()));
    }
    let n = state.num_qubits;
    let mut seen = vec![false; n];
    for &q in keep {
        state.check_qubit(q)?;
        if seen[q] {
            return Err(Error::Dimension("reduced_density keep set repeats a qubit".into()));
        }
        seen[q] = true;
    }
    let others: Vec<usize> = (0..n).filter(|q| !seen[*q]).collect();
    let k = keep.len();
    let dim = 1usize << k;
    let mut entries = linalg::zeros(dim);
    // Build each full basis index from (kept bits, traced bits).
    let build = |kept_bits: usize, rest_bits: usize| -> usize {
        let mut idx = 0usize;
        for (pos, &q) in keep.iter().enumerate() {
            if (kept_bits >> (k - 1 - pos)) & 1 == 1 {
                idx |= 1 << (n - 1 - q);
            }
        }
        for (pos, &q) in others.iter().enumerate() {
            if (rest_bits >> pos) & 1 == 1 {
                idx |= 1 << (n - 1 - q);
            }
        }
        idx
    };
    for r in 0..dim {
        for col in 0..dim {
            let mut sum = c(0.0, 0.0);
            for rest in 0..(1usize << others.len()) {
                let ir = build(r, rest);
                let ic = build(col, rest);
                sum += state.amplitudes[ir] * state.amplitudes[ic].conj();
            }
            entries[(r, col)] = sum;
        }
    }
    Ok(DensityMatrix { dim, entries })
}
