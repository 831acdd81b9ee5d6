//! Pauli strings, one-time-pad keys, and the classical key-update rules.
//!
//! A [`PauliString`] is a phase `i^e` times a tensor product of letters
//! `I, X, Y, Z`, stored in symplectic form (`Y = i X Z`). Composition,
//! adjoints, commutation checks, and dense application to a [`State`] all
//! work from that representation.
//!
//! [`PadKey`] holds the `(a, b)` bits of a one-qubit pad `X^a Z^b`, and
//! [`clifford_key_update`] implements the rules by which the pad bits are
//! rewritten when a Clifford gate is pushed through the pad.

use crate::linalg;
use crate::statevec::{DensityMatrix, Gate, GateKind, State};
use crate::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// One tensor factor of a Pauli string.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PauliLetter {
    I,
    X,
    Y,
    Z,
}

impl PauliLetter {
    pub const ALL: [PauliLetter; 4] = [PauliLetter::I, PauliLetter::X, PauliLetter::Y, PauliLetter::Z];

    /// Symplectic bits `(x, z)` with `letter = i^delta X^x Z^z`.
    pub fn symplectic(self) -> (u8, u8) {
        match self {
            PauliLetter::I => (0, 0),
            PauliLetter::X => (1, 0),
            PauliLetter::Y => (1, 1),
            PauliLetter::Z => (0, 1),
        }
    }

    /// Phase exponent `delta` in `letter = i^delta X^x Z^z` (1 for `Y`, else 0).
    pub fn delta(self) -> u8 {
        u8::from(self == PauliLetter::Y)
    }

    pub fn from_symplectic(x: u8, z: u8) -> Self {
        match (x & 1, z & 1) {
            (0, 0) => PauliLetter::I,
            (1, 0) => PauliLetter::X,
            (1, 1) => PauliLetter::Y,
            (0, 1) => PauliLetter::Z,
            _ => unreachable!(),
        }
    }

    pub fn as_char(self) -> char {
        match self {
            PauliLetter::I => 'I',
            PauliLetter::X => 'X',
            PauliLetter::Y => 'Y',
            PauliLetter::Z => 'Z',
        }
    }

    pub fn from_char(ch: char) -> Option<Self> {
        match ch {
            'I' => Some(PauliLetter::I),
            'X' => Some(PauliLetter::X),
            'Y' => Some(PauliLetter::Y),
            'Z' => Some(PauliLetter::Z),
            _ => None,
        }
    }

    /// Dense 2x2 matrix (row-major).
    pub fn matrix(self) -> [C64; 4] {
        match self {
            PauliLetter::I => [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)],
            PauliLetter::X => [c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
            PauliLetter::Y => [c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)],
            PauliLetter::Z => [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)],
        }
    }
}

/// A phased Pauli operator `i^phase * letter_0 (x) ... (x) letter_{k-1}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PauliString {
    letters: Vec<PauliLetter>,
    phase: u8,
}

impl PauliString {
    /// The identity string on `len` qubits.
    pub fn identity(len: usize) -> Self {
        PauliString { letters: vec![PauliLetter::I; len], phase: 0 }
    }

    pub fn from_letters(letters: Vec<PauliLetter>) -> Result<Self> {
        if letters.is_empty() {
            return Err(Error::Invalid("a Pauli string needs at least one letter".into()));
        }
        Ok(PauliString { letters, phase: 0 })
    }

    /// A single non-identity letter at `pos` on a length-`len` string.
    pub fn single(len: usize, pos: usize, letter: PauliLetter) -> Result<Self> {
        if pos >= len {
            return Err(Error::Invalid(format!("position {pos} out of range for length {len}")));
        }
        let mut letters = vec![PauliLetter::I; len];
        letters[pos] = letter;
        Ok(PauliString { letters, phase: 0 })
    }

    /// Parses a dot-separated letter string such as `X.I.Z`.
    pub fn parse_letters(text: &str) -> Result<Self> {
        let mut letters = Vec::new();
        for part in text.split('.') {
            let part = part.trim();
            let mut chars = part.chars();
            match (chars.next(), chars.next()) {
                (Some(ch), None) => match PauliLetter::from_char(ch) {
                    Some(l) => letters.push(l),
                    None => {
                        return Err(Error::Invalid(format!(
                            "unknown Pauli letter {part:?} (expected I, X, Y, or Z)"
                        )))
                    }
                },
                _ => {
                    return Err(Error::Invalid(format!(
                        "malformed Pauli letter {part:?} in {text:?}"
                    )))
                }
            }
        }
        Self::from_letters(letters)
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn letters(&self) -> &[PauliLetter] {
        &self.letters
    }

    pub fn letter(&self, pos: usize) -> PauliLetter {
        self.letters[pos]
    }

    /// Phase exponent `e` in the `i^e` prefactor, reduced mod 4.
    pub fn phase(&self) -> u8 {
        self.phase
    }

    /// Returns the same string with `i^k` multiplied on.
    pub fn mul_phase(mut self, k: u8) -> Self {
        self.phase = (self.phase + k) % 4;
        self
    }

    /// The complex number `i^phase`.
    pub fn phase_factor(&self) -> C64 {
        match self.phase % 4 {
            0 => c(1.0, 0.0),
            1 => c(0.0, 1.0),
            2 => c(-1.0, 0.0),
            _ => c(0.0, -1.0),
        }
    }

    /// Number of non-identity letters.
    pub fn weight(&self) -> usize {
        self.letters.iter().filter(|l| **l != PauliLetter::I).count()
    }

    /// True if every letter is `I` (the phase may still be nontrivial).
    pub fn is_identity_letters(&self) -> bool {
        self.letters.iter().all(|l| *l == PauliLetter::I)
    }

    /// Formats the letters as `X.I.Z` (phase not included).
    pub fn letters_string(&self) -> String {
        let mut out = String::with_capacity(self.letters.len() * 2);
        for (i, l) in self.letters.iter().enumerate() {
            if i > 0 {
                out.push('.');
            }
            out.push(l.as_char());
        }
        out
    }

    /// Matrix product `self * other` (self applied after `other`).
    pub fn compose(&self, other: &PauliString) -> Result<PauliString> {
        if self.len() != other.len() {
            return Err(Error::Dimension(format!(
                "composing Pauli strings of lengths {} and {}",
                self.len(),
                other.len()
            )));
        }
        let mut phase = u32::from(self.phase) + u32::from(other.phase);
        let mut letters = Vec::with_capacity(self.len());
        for (l1, l2) in self.letters.iter().zip(&other.letters) {
            let (x1, z1) = l1.symplectic();
            let (x2, z2) = l2.symplectic();
            let l3 = PauliLetter::from_symplectic(x1 ^ x2, z1 ^ z2);
            // i^{d1} X^{x1} Z^{z1} i^{d2} X^{x2} Z^{z2}
            //   = i^{d1+d2} (-1)^{z1 x2} X^{x1^x2} Z^{z1^z2}
            //   = i^{d1+d2+2 z1 x2 - d3} * letter3
            phase += u32::from(l1.delta()) + u32::from(l2.delta()) + 2 * u32::from(z1 & x2);
            phase += 4 - u32::from(l3.delta());
            letters.push(l3);
        }
        Ok(PauliString { letters, phase: (phase % 4) as u8 })
    }

    /// The adjoint (letters are Hermitian, so only the phase conjugates).
    pub fn dagger(&self) -> PauliString {
        PauliString { letters: self.letters.clone(), phase: (4 - self.phase) % 4 }
    }

    /// Whether the two strings commute as operators.
    pub fn commutes_with(&self, other: &PauliString) -> Result<bool> {
        if self.len() != other.len() {
            return Err(Error::Dimension(format!(
                "commutation of Pauli strings of lengths {} and {}",
                self.len(),
                other.len()
            )));
        }
        let mut sym = 0u8;
        for (l1, l2) in self.letters.iter().zip(&other.letters) {
            let (x1, z1) = l1.symplectic();
            let (x2, z2) = l2.symplectic();
            sym ^= (x1 & z2) ^ (z1 & x2);
        }
        Ok(sym == 0)
    }

    /// Dense matrix of the full string (dimension `2^len`).
    pub fn to_matrix(&self) -> DMatrix<C64> {
        let mut out = DMatrix::from_element(1, 1, self.phase_factor());
        for l in &self.letters {
            let m = l.matrix();
            let lm = DMatrix::from_row_slice(2, 2, &m);
            out = out.kronecker(&lm);
        }
        out
    }

    /// Applies the string in place; letter `j` acts on qubit `targets[j]`.
    pub fn apply_to_state(&self, state: &mut State, targets: &[usize]) -> Result<()> {
        if targets.len() != self.len() {
            return Err(Error::Dimension(format!(
                "Pauli string of length {} applied to {} target(s)",
                self.len(),
                targets.len()
            )));
        }
        let n = state.num_qubits();
        let mut seen = vec![false; n];
        let mut flip = 0usize;
        let mut zmask = 0usize;
        let mut total_delta = u32::from(self.phase);
        for (l, &q) in self.letters.iter().zip(targets) {
            if q >= n {
                return Err(Error::QubitOutOfRange { index: q, num_qubits: n });
            }
            if seen[q] {
                return Err(Error::Dimension("Pauli application repeats a target qubit".into()));
            }
            seen[q] = true;
            let (x, z) = l.symplectic();
            let m = 1usize << (n - 1 - q);
            if x == 1 {
                flip |= m;
            }
            if z == 1 {
                zmask |= m;
            }
            total_delta += u32::from(l.delta());
        }
        let global = match total_delta % 4 {
            0 => c(1.0, 0.0),
            1 => c(0.0, 1.0),
            2 => c(-1.0, 0.0),
            _ => c(0.0, -1.0),
        };
        // P|i> = global * (-1)^{|i & zmask|} |i ^ flip>
        let factor = |i: usize| -> C64 {
            if (i & zmask).count_ones() % 2 == 1 {
                -global
            } else {
                global
            }
        };
        let dim = 1usize << n;
        // Mutate through a scratch-free pairwise pass: i <-> i^flip.
        let amps = state.amplitudes_mut();
        if flip == 0 {
            for (i, a) in amps.iter_mut().enumerate() {
                *a *= factor(i);
            }
        } else {
            for i in 0..dim {
                let j = i ^ flip;
                if i < j {
                    let (ai, aj) = (amps[i], amps[j]);
                    amps[j] = factor(i) * ai;
                    amps[i] = factor(j) * aj;
                }
            }
        }
        Ok(())
    }

    /// Returns a fresh state with the string applied across the whole
    /// register in order (letter `j` on qubit `j`).
    pub fn applied_to(&self, state: &State) -> Result<State> {
        let targets: Vec<usize> = (0..state.num_qubits()).collect();
        let mut out = state.clone();
        self.apply_to_state(&mut out, &targets)?;
        Ok(out)
    }
}

/// Enumerates all `4^len` phase-free Pauli strings, identity first,
/// in base-4 digit order (`I, X, Y, Z` per position, last position fastest).
pub fn plain_strings(len: usize) -> Vec<PauliString> {
    let count = 4usize.pow(len as u32);
    let mut out = Vec::with_capacity(count);
    for code in 0..count {
        let mut letters = vec![PauliLetter::I; len];
        let mut rest = code;
        for pos in (0..len).rev() {
            letters[pos] = PauliLetter::ALL[rest % 4];
            rest /= 4;
        }
        out.push(PauliString { letters, phase: 0 });
    }
    out
}

/// The `(a, b)` bits of a one-qubit pad `X^a Z^b`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct PadKey {
    pub a: u8,
    pub b: u8,
}

impl PadKey {
    pub fn new(a: u8, b: u8) -> Self {
        PadKey { a: a & 1, b: b & 1 }
    }

    /// The pad as a single-qubit Pauli string (phase-free `X^a Z^b`).
    pub fn as_pauli(&self) -> PauliString {
        let letter = PauliLetter::from_symplectic(self.a, self.b);
        // X^a Z^b = i^{-delta} letter, so fold the compensating phase in.
        PauliString { letters: vec![letter], phase: (4 - letter.delta()) % 4 }
    }
}

/// Register dimensions of a compiled run: `n` data qubits, `t` T-gadgets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProtocolDims {
    pub n: usize,
    pub t: usize,
}

impl ProtocolDims {
    pub fn new(n: usize, t: usize) -> Self {
        ProtocolDims { n, t }
    }

    /// Total qubit count of the ordered register
    /// `[A_1, X_1, ..., A_t, X_t, D_1, ..., D_n]`.
    pub fn m(&self) -> usize {
        2 * self.t + self.n
    }

    /// Slot of gadget `k`'s aux qubit in the ordered register.
    pub fn a_slot(&self, k: usize) -> usize {
        2 * k
    }

    /// Slot of gadget `k`'s reply qubit in the ordered register.
    pub fn x_slot(&self, k: usize) -> usize {
        2 * k + 1
    }

    /// Slot of data wire `w` in the ordered register.
    pub fn data_slot(&self, w: usize) -> usize {
        2 * self.t + w
    }

    /// Slot of the output wire (the last data slot).
    pub fn output_slot(&self) -> usize {
        2 * self.t + self.n - 1
    }

    /// Positions in the ordered register that end up measured: every
    /// gadget qubit `A_k` plus the final data qubit.
    pub fn measured_positions(&self) -> Vec<usize> {
        let mut out: Vec<usize> = (0..self.t).map(|k| self.a_slot(k)).collect();
        out.push(self.output_slot());
        out
    }
}

/// Rewrites pad keys for a Clifford gate pushed through the pad.
///
/// `X` and `Z` flip a key bit with no physical action; `H` swaps the bits of
/// its target; `P` maps `(a, b)` to `(a, a^b)`; `CNOT` mixes control and
/// target keys. `T` is rejected: it is not Clifford and needs the gadget.
/// The adjoint flag never changes a rule (the induced bit maps coincide).
pub fn clifford_key_update(gate: Gate, keys: &[PadKey], targets: &[usize]) -> Result<Vec<PadKey>> {
    if gate.kind == GateKind::T {
        return Err(Error::Invalid("T is not Clifford; key updates go through the gadget".into()));
    }
    if targets.len() != gate.arity() {
        return Err(Error::Dimension(format!(
            "{} takes {} target(s), got {}",
            gate.kind.name(),
            gate.arity(),
            targets.len()
        )));
    }
    for &q in targets {
        if q >= keys.len() {
            return Err(Error::QubitOutOfRange { index: q, num_qubits: keys.len() });
        }
    }
    let mut out = keys.to_vec();
    match gate.kind {
        GateKind::X => out[targets[0]].a ^= 1,
        GateKind::Z => out[targets[0]].b ^= 1,
        GateKind::H => {
            let k = out[targets[0]];
            out[targets[0]] = PadKey::new(k.b, k.a);
        }
        GateKind::P => {
            let k = out[targets[0]];
            out[targets[0]] = PadKey::new(k.a, k.a ^ k.b);
        }
        GateKind::Cnot => {
            let (i, j) = (targets[0], targets[1]);
            if i == j {
                return Err(Error::Dimension("CNOT targets must be distinct".into()));
            }
            let (ki, kj) = (out[i], out[j]);
            out[i] = PadKey::new(ki.a, ki.b ^ kj.b);
            out[j] = PadKey::new(ki.a ^ kj.a, kj.b);
        }
        GateKind::T => unreachable!(),
    }
    Ok(out)
}

/// Residual of the Pauli twirl identity for one Kraus operator
/// `E = sum_k alpha_k Q_k` on a probe density matrix `rho`:
/// the max-abs entry of
/// `avg_P (P E P) rho (P E P)^dag  -  sum_k |alpha_k|^2 Q_k rho Q_k^dag`,
/// with `P` ranging over all phase-free Pauli strings.
pub fn twirl_residual(terms: &[(PauliString, C64)], probe: &DensityMatrix) -> Result<f64> {
    let q = match terms.first() {
        Some((s, _)) => s.len(),
        None => return Err(Error::Invalid("twirl_residual needs at least one term".into())),
    };
    if q > 6 {
        return Err(Error::Capacity { requested: q, limit: 6 });
    }
    let dim = 1usize << q;
    if probe.dim != dim {
        return Err(Error::Dimension(format!(
            "probe dimension {} does not match {q}-qubit terms",
            probe.dim
        )));
    }
    let mut e = linalg::zeros(dim);
    for (s, alpha) in terms {
        if s.len() != q {
            return Err(Error::Dimension("twirl terms have mixed lengths".into()));
        }
        e += s.to_matrix() * *alpha;
    }
    let rho = &probe.entries;
    let mut twirled = linalg::zeros(dim);
    let paulis = plain_strings(q);
    let total = paulis.len() as f64;
    for p in &paulis {
        let pm = p.to_matrix();
        let conj = &pm * &e * &pm;
        twirled += &conj * rho * conj.adjoint();
    }
    twirled /= C64::new(total, 0.0);
    let mut mixture = linalg::zeros(dim);
    for (s, alpha) in terms {
        let qm = s.to_matrix();
        mixture += (&qm * rho * qm.adjoint()) * C64::new(alpha.norm_sqr(), 0.0);
    }
    Ok(linalg::max_abs_entry(&(twirled - mixture)))
}

/// Relabelling of a gadget resource state: `X^d Z^e P^y T|+>` equals
/// `Z^eps P^ups T|+>` up to global phase, with `(eps, ups)` as returned.
pub fn relabel_aux(d: u8, e: u8, y: u8) -> (u8, u8) {
    ((e ^ d) & 1, (y ^ d) & 1)
}

/// Whether an attack string is benign: every letter on a measured register
/// position is `I` or `Z`, so no reported bit can be altered. The phase and
/// all letters on unmeasured positions are irrelevant.
pub fn classify_benign(string: &PauliString, dims: ProtocolDims) -> Result<bool> {
    let m = dims.m();
    if string.len() != m {
        return Err(Error::Dimension(format!(
            "attack string length {} does not match register size {m}",
            string.len()
        )));
    }
    Ok(dims.measured_positions().iter().all(|&p| {
        matches!(string.letter(p), PauliLetter::I | PauliLetter::Z)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statevec::{self, AuxStateSpec, EPS};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_string(len: usize, rng: &mut ChaCha8Rng) -> PauliString {
        let letters = (0..len).map(|_| PauliLetter::ALL[rng.gen_range(0..4)]).collect();
        PauliString { letters, phase: rng.gen_range(0..4) }
    }

    fn random_state(num_qubits: usize, rng: &mut ChaCha8Rng) -> State {
        let dim = 1usize << num_qubits;
        let mut amps: Vec<C64> = (0..dim)
            .map(|_| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for a in &mut amps {
            *a /= norm;
        }
        State::from_amplitudes(amps).unwrap()
    }

    fn mat_close(a: &DMatrix<C64>, b: &DMatrix<C64>) -> bool {
        linalg::max_abs_entry(&(a.clone() - b.clone())) < 1e-12
    }

    #[test]
    fn single_letter_products() {
        let x = PauliString::parse_letters("X").unwrap();
        let z = PauliString::parse_letters("Z").unwrap();
        let y = PauliString::parse_letters("Y").unwrap();
        // XZ = -iY
        let xz = x.compose(&z).unwrap();
        assert_eq!(xz.letters(), y.letters());
        assert_eq!(xz.phase(), 3);
        // ZX = iY
        let zx = z.compose(&x).unwrap();
        assert_eq!(zx.phase(), 1);
        // YY = I
        let yy = y.compose(&y).unwrap();
        assert!(yy.is_identity_letters());
        assert_eq!(yy.phase(), 0);
        assert!(!x.commutes_with(&z).unwrap());
        assert!(x.commutes_with(&x).unwrap());
    }

    #[test]
    fn compose_matches_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let len = rng.gen_range(1..=3);
            let a = random_string(len, &mut rng);
            let b = random_string(len, &mut rng);
            let ab = a.compose(&b).unwrap();
            let dense = a.to_matrix() * b.to_matrix();
            assert!(mat_close(&ab.to_matrix(), &dense), "a={a:?} b={b:?}");
        }
    }

    #[test]
    fn dagger_matches_dense_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..100 {
            let a = random_string(2, &mut rng);
            assert!(mat_close(&a.dagger().to_matrix(), &a.to_matrix().adjoint()));
        }
    }

    #[test]
    fn apply_matches_dense_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..100 {
            let n = rng.gen_range(1..=3);
            let s = random_string(n, &mut rng);
            let psi = random_state(n, &mut rng);
            let mut applied = psi.clone();
            let targets: Vec<usize> = (0..n).collect();
            s.apply_to_state(&mut applied, &targets).unwrap();
            let m = s.to_matrix();
            let v = nalgebra::DVector::from_iterator(1 << n, psi.amplitudes().iter().copied());
            let mv = &m * v;
            for (i, amp) in applied.amplitudes().iter().enumerate() {
                assert!((amp - mv[i]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn apply_respects_target_map() {
        // X on qubit 1 of a 3-qubit register through a length-1 string.
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let psi = random_state(3, &mut rng);
        let mut via_string = psi.clone();
        PauliString::parse_letters("X")
            .unwrap()
            .apply_to_state(&mut via_string, &[1])
            .unwrap();
        let via_gate = statevec::apply_gate(&psi, Gate::new(GateKind::X), &[1]).unwrap();
        assert!(
            (statevec::fidelity_up_to_phase(&via_string, &via_gate).unwrap() - 1.0).abs() < EPS
        );
    }

    #[test]
    fn commutes_matches_dense_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        for _ in 0..100 {
            let a = random_string(2, &mut rng);
            let b = random_string(2, &mut rng);
            let ab = a.to_matrix() * b.to_matrix();
            let ba = b.to_matrix() * a.to_matrix();
            let dense_commute = linalg::max_abs_entry(&(ab - ba)) < 1e-12;
            assert_eq!(a.commutes_with(&b).unwrap(), dense_commute);
        }
    }

    fn pad_state(psi: &State, keys: &[PadKey]) -> State {
        let mut out = psi.clone();
        for (q, k) in keys.iter().enumerate() {
            if k.a == 1 {
                out.apply_gate_mut(Gate::new(GateKind::X), &[q]).unwrap();
            }
            if k.b == 1 {
                out.apply_gate_mut(Gate::new(GateKind::Z), &[q]).unwrap();
            }
        }
        out
    }

    #[test]
    fn key_update_rules_match_physics() {
        // For physical gates G in {H, P, P^dag, CNOT}:
        //   G . Pad(old) |psi>  ==  Pad(new) . G |psi>   (up to global phase).
        // For virtual gates {X, Z} nothing is applied:
        //   Pad(old) |psi>  ==  Pad(new) . G |psi>.
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let single: Vec<Gate> = vec![
            Gate::new(GateKind::X),
            Gate::new(GateKind::Z),
            Gate::new(GateKind::H),
            Gate::new(GateKind::P),
            Gate::dagger_of(GateKind::P),
        ];
        for gate in single {
            for a in 0..2u8 {
                for b in 0..2u8 {
                    let keys = [PadKey::new(a, b)];
                    let new_keys = clifford_key_update(gate, &keys, &[0]).unwrap();
                    let psi = random_state(1, &mut rng);
                    let lhs = {
                        let padded = pad_state(&psi, &keys);
                        match gate.kind {
                            GateKind::X | GateKind::Z => padded,
                            _ => statevec::apply_gate(&padded, gate, &[0]).unwrap(),
                        }
                    };
                    let rhs = {
                        let logical = statevec::apply_gate(&psi, gate, &[0]).unwrap();
                        pad_state(&logical, &new_keys)
                    };
                    let fid = statevec::fidelity_up_to_phase(&lhs, &rhs).unwrap();
                    assert!((fid - 1.0).abs() < EPS, "gate {gate:?} keys {keys:?}");
                }
            }
        }
        let cnot = Gate::new(GateKind::Cnot);
        for bits in 0..16u8 {
            let keys = [
                PadKey::new(bits & 1, (bits >> 1) & 1),
                PadKey::new((bits >> 2) & 1, (bits >> 3) & 1),
            ];
            let new_keys = clifford_key_update(cnot, &keys, &[0, 1]).unwrap();
            let psi = random_state(2, &mut rng);
            let lhs = statevec::apply_gate(&pad_state(&psi, &keys), cnot, &[0, 1]).unwrap();
            let rhs = pad_state(&statevec::apply_gate(&psi, cnot, &[0, 1]).unwrap(), &new_keys);
            let fid = statevec::fidelity_up_to_phase(&lhs, &rhs).unwrap();
            assert!((fid - 1.0).abs() < EPS, "CNOT keys {keys:?}");
        }
    }

    #[test]
    fn key_update_rejects_t() {
        let keys = [PadKey::new(0, 0)];
        assert!(clifford_key_update(Gate::new(GateKind::T), &keys, &[0]).is_err());
        assert!(clifford_key_update(Gate::dagger_of(GateKind::T), &keys, &[0]).is_err());
    }

    #[test]
    fn encryption_yields_maximally_mixed() {
        // Averaging a padded state over all key values gives I / 2^n.
        let mut rng = ChaCha8Rng::seed_from_u64(48);
        for n in 1..=2usize {
            let psi = random_state(n, &mut rng);
            let dim = 1usize << n;
            let mut avg = linalg::zeros(dim);
            let mut count = 0u32;
            for code in 0..(1u32 << (2 * n)) {
                let keys: Vec<PadKey> = (0..n)
                    .map(|q| PadKey::new(((code >> (2 * q)) & 1) as u8, ((code >> (2 * q + 1)) & 1) as u8))
                    .collect();
                let padded = pad_state(&psi, &keys);
                avg += DensityMatrix::from_pure(&padded).entries;
                count += 1;
            }
            avg /= C64::new(f64::from(count), 0.0);
            let mixed = linalg::identity(dim) / C64::new(dim as f64, 0.0);
            assert!(mat_close(&avg, &mixed));
        }
    }

    #[test]
    fn relabel_aux_matches_dense_states() {
        // X^d Z^e P^y T|+> equals Z^eps P^ups T|+> up to global phase.
        for d in 0..2u8 {
            for e in 0..2u8 {
                for y in 0..2u8 {
                    let mut lhs = statevec::prepare_state(&[AuxStateSpec::TPlus]).unwrap();
                    for _ in 0..y {
                        lhs.apply_gate_mut(Gate::new(GateKind::P), &[0]).unwrap();
                    }
                    if e == 1 {
                        lhs.apply_gate_mut(Gate::new(GateKind::Z), &[0]).unwrap();
                    }
                    if d == 1 {
                        lhs.apply_gate_mut(Gate::new(GateKind::X), &[0]).unwrap();
                    }
                    let (eps, ups) = relabel_aux(d, e, y);
                    let mut rhs = statevec::prepare_state(&[AuxStateSpec::TPlus]).unwrap();
                    for _ in 0..ups {
                        rhs.apply_gate_mut(Gate::new(GateKind::P), &[0]).unwrap();
                    }
                    if eps == 1 {
                        rhs.apply_gate_mut(Gate::new(GateKind::Z), &[0]).unwrap();
                    }
                    let fid = statevec::fidelity_up_to_phase(&lhs, &rhs).unwrap();
                    assert!((fid - 1.0).abs() < EPS, "d={d} e={e} y={y}");
                }
            }
        }
    }

    #[test]
    fn benign_count_matches_formula() {
        // Count strings whose measured positions carry only I or Z:
        // 2^t (gadget qubits) * 4^t (unmeasured partners)
        // * 4^{n-1} (inner data) * 2 (output data qubit).
        for (n, t) in [(1usize, 0usize), (1, 1), (2, 1), (1, 2)] {
            let dims = ProtocolDims::new(n, t);
            let m = dims.m();
            if m > 5 {
                continue;
            }
            let count = plain_strings(m)
                .iter()
                .filter(|s| classify_benign(s, dims).unwrap())
                .count();
            let expect = 2usize.pow(t as u32)
                * 4usize.pow(t as u32)
                * 4usize.pow((n - 1) as u32)
                * 2;
            assert_eq!(count, expect, "n={n} t={t}");
        }
    }

    #[test]
    fn benign_examples() {
        let dims = ProtocolDims::new(1, 1); // register [A_1, X_1, D_1], measured {0, 2}
        assert!(classify_benign(&PauliString::parse_letters("I.X.I").unwrap(), dims).unwrap());
        assert!(classify_benign(&PauliString::parse_letters("Z.Y.Z").unwrap(), dims).unwrap());
        assert!(!classify_benign(&PauliString::parse_letters("X.I.I").unwrap(), dims).unwrap());
        assert!(!classify_benign(&PauliString::parse_letters("I.I.Y").unwrap(), dims).unwrap());
        assert!(classify_benign(&PauliString::parse_letters("I.I").unwrap(), dims).is_err());
    }

    #[test]
    fn twirl_residual_small_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(49);
        let probe = DensityMatrix::from_pure(&random_state(1, &mut rng));
        // A single Pauli term twirls to itself exactly.
        let single = vec![(PauliString::parse_letters("X").unwrap(), c(1.0, 0.0))];
        assert!(twirl_residual(&single, &probe).unwrap() < 1e-12);
        // A nontrivial superposition of distinct Paulis also has zero residual.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mix = vec![
            (PauliString::parse_letters("X").unwrap(), c(s, 0.0)),
            (PauliString::parse_letters("Z").unwrap(), c(0.0, s)),
        ];
        assert!(twirl_residual(&mix, &probe).unwrap() < 1e-12);
    }

    #[test]
    fn pad_key_as_pauli() {
        // X^1 Z^1 = -i Y.
        let p = PadKey::new(1, 1).as_pauli();
        assert_eq!(p.letters()[0], PauliLetter::Y);
        assert_eq!(p.phase(), 3);
        let dense = PauliString::parse_letters("X")
            .unwrap()
            .compose(&PauliString::parse_letters("Z").unwrap())
            .unwrap();
        assert_eq!(p, dense);
    }

    proptest! {
        #[test]
        fn compose_is_associative(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_string(2, &mut rng);
            let b = random_string(2, &mut rng);
            let cx = random_string(2, &mut rng);
            let left = a.compose(&b).unwrap().compose(&cx).unwrap();
            let right = a.compose(&b.compose(&cx).unwrap()).unwrap();
            prop_assert_eq!(left, right);
        }

        #[test]
        fn string_times_dagger_is_identity(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_string(3, &mut rng);
            let prod = a.compose(&a.dagger()).unwrap();
            prop_assert!(prod.is_identity_letters());
            prop_assert_eq!(prod.phase(), 0);
        }
    }
}
