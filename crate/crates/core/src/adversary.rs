//! Scripted deviations for the delegated-computation protocol.
//!
//! An attack is a completely positive trace-preserving map acting on the
//! prover's full register after the honest unitaries have been applied.  It
//! is described as a list of Kraus operators, each a complex combination of
//! Pauli strings over the ordered register `[A_1, X_1, .., A_t, X_t,
//! D_1, .., D_n]`.  The module also provides the closed-form predictions the
//! harness checks empirical rates against, and generators for random attack
//! families used by the verification suite.

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::Rng;

use crate::linalg;
use crate::pauli::{classify_benign, PadKey, PauliLetter, PauliString, ProtocolDims};
use crate::protocol::{
    t_gadget_aux_state, verifier_t_gadget_update, ProverPolicy, TGadgetRandomness,
};
use crate::statevec::{apply_gate, fidelity_up_to_phase, Gate, GateKind, State, EPS};
use crate::{circuit::GadgetVariant, Error, Result};

/// Tolerance for the trace-preservation check on attack descriptions.
const CHANNEL_EPS: f64 = 1e-9;

/// One Kraus operator, stored as a combination of plain Pauli strings with
/// complex coefficients.  String phases are folded into the coefficients on
/// construction, and repeated strings are merged.
#[derive(Debug, Clone)]
pub struct KrausTerm {
    terms: Vec<(PauliString, C64)>,
}

impl KrausTerm {
    /// Builds a Kraus operator from `(string, coefficient)` pairs.  All
    /// strings must share one length; duplicates are merged by summing their
    /// coefficients.
    pub fn new(terms: Vec<(PauliString, C64)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Attack("a Kraus operator needs at least one term".into()));
        }
        let len = terms[0].0.len();
        let mut merged: Vec<(PauliString, C64)> = Vec::new();
        for (string, coeff) in terms {
            if string.len() != len {
                return Err(Error::Attack(format!(
                    "Kraus terms mix register sizes {} and {}",
                    len,
                    string.len()
                )));
            }
            let folded = coeff * string.phase_factor();
            let plain = PauliString::from_letters(string.letters().to_vec())?;
            match merged.iter_mut().find(|(s, _)| s.letters() == plain.letters()) {
                Some((_, existing)) => *existing += folded,
                None => merged.push((plain, folded)),
            }
        }
        Ok(Self { terms: merged })
    }

    /// The merged `(plain string, coefficient)` pairs.
    pub fn terms(&self) -> &[(PauliString, C64)] {
        &self.terms
    }

    /// Register size the operator acts on.
    pub fn num_qubits(&self) -> usize {
        self.terms[0].0.len()
    }

    /// Applies the operator to `state` on `targets`, returning the raw
    /// (generally unnormalized) amplitude vector.
    fn apply_raw(&self, state: &State, targets: &[usize]) -> Result<Vec<C64>> {
        let mut acc = vec![C64::new(0.0, 0.0); state.amplitudes().len()];
        for (string, coeff) in &self.terms {
            let mut branch = state.clone();
            string.apply_to_state(&mut branch, targets)?;
            for (slot, amp) in acc.iter_mut().zip(branch.amplitudes()) {
                *slot += coeff * amp;
            }
        }
        Ok(acc)
    }

    /// Dense matrix of the operator (small registers only).
    fn to_matrix(&self) -> DMatrix<C64> {
        let dim = 1usize << self.num_qubits();
        let mut out = linalg::zeros(dim);
        for (string, coeff) in &self.terms {
            out += string.to_matrix() * *coeff;
        }
        out
    }
}

/// A complete attack: the register dimensions it is written for plus its
/// Kraus operators.
#[derive(Debug, Clone)]
pub struct AttackSpec {
    dims: ProtocolDims,
    kraus: Vec<KrausTerm>,
}

impl AttackSpec {
    /// Builds an attack, checking every Kraus operator matches the register
    /// size `dims.m()`.
    pub fn new(dims: ProtocolDims, kraus: Vec<KrausTerm>) -> Result<Self> {
        if kraus.is_empty() {
            return Err(Error::Attack("an attack needs at least one Kraus operator".into()));
        }
        for (idx, term) in kraus.iter().enumerate() {
            if term.num_qubits() != dims.m() {
                return Err(Error::Attack(format!(
                    "Kraus operator {} acts on {} qubits but the register has {}",
                    idx,
                    term.num_qubits(),
                    dims.m()
                )));
            }
        }
        Ok(Self { dims, kraus })
    }

    /// Register dimensions the attack was written for.
    pub fn dims(&self) -> ProtocolDims {
        self.dims
    }

    /// The Kraus operators.
    pub fn kraus(&self) -> &[KrausTerm] {
        &self.kraus
    }

    /// Total squared-coefficient mass over all operators.  Equals 1 for any
    /// trace-preserving attack.
    pub fn total_mass(&self) -> f64 {
        self.kraus
            .iter()
            .flat_map(|k| k.terms.iter())
            .map(|(_, c)| c.norm_sqr())
            .sum()
    }

    /// Mass carried by strings that flip at least one measured register.
    fn flip_mass(&self) -> Result<f64> {
        let mut nu = 0.0;
        for term in &self.kraus {
            for (string, coeff) in &term.terms {
                if !classify_benign(string, self.dims)? {
                    nu += coeff.norm_sqr();
                }
            }
        }
        Ok(nu)
    }

    /// Checks the operators form a trace-preserving map, i.e. sum(E†E) = I.
    ///
    /// The check is symbolic — compositions of Pauli strings are collected by
    /// letter pattern, so it works at any register size — with a dense
    /// cross-check on small registers.
    pub fn validate_executable(&self) -> Result<()> {
        let mut collected: HashMap<Vec<PauliLetter>, C64> = HashMap::new();
        for term in &self.kraus {
            for (left, alpha) in &term.terms {
                for (right, beta) in &term.terms {
                    let product = left.dagger().compose(right)?;
                    let coeff = alpha.conj() * beta * product.phase_factor();
                    *collected
                        .entry(product.letters().to_vec())
                        .or_insert(C64::new(0.0, 0.0)) += coeff;
                }
            }
        }
        for (letters, coeff) in &collected {
            let is_identity = letters.iter().all(|l| *l == PauliLetter::I);
            let target = if is_identity { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            if (coeff - target).norm() > CHANNEL_EPS {
                return Err(Error::Attack(format!(
                    "attack is not trace preserving: coefficient of {} in sum(E†E) is {:.3e}{:+.3e}i",
                    PauliString::from_letters(letters.clone())?.letters_string(),
                    coeff.re,
                    coeff.im
                )));
            }
        }
        if self.dims.m() <= 6 {
            let dim = 1usize << self.dims.m();
            let mut sum = linalg::zeros(dim);
            for term in &self.kraus {
                let e = term.to_matrix();
                sum += e.adjoint() * e;
            }
            let defect = linalg::max_abs_entry(&(sum - linalg::identity(dim)));
            if defect > 1e-7 {
                return Err(Error::Attack(format!(
                    "dense trace-preservation cross-check failed: defect {defect:.3e}"
                )));
            }
        }
        Ok(())
    }

    /// Applies one Kraus branch to `state`, sampling branches by their Born
    /// weights.  Returns the branch index and the normalized result.
    pub fn apply_sampled<R: Rng>(
        &self,
        state: &State,
        targets: &[usize],
        rng: &mut R,
    ) -> Result<(usize, State)> {
        let mut candidates = Vec::with_capacity(self.kraus.len());
        let mut weights = Vec::with_capacity(self.kraus.len());
        for term in &self.kraus {
            let raw = term.apply_raw(state, targets)?;
            let weight: f64 = raw.iter().map(|z| z.norm_sqr()).sum();
            candidates.push(raw);
            weights.push(weight);
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::Attack(format!(
                "Kraus branch weights sum to {total:.9}, expected 1"
            )));
        }
        let mut draw = rng.gen::<f64>() * total;
        let mut chosen = weights.len() - 1;
        for (idx, weight) in weights.iter().enumerate() {
            if draw < *weight {
                chosen = idx;
                break;
            }
            draw -= weight;
        }
        if weights[chosen] < 1e-12 {
            // A zero-weight branch can only be hit through floating-point
            // slack at the end of the scan; fall back to the heaviest branch.
            chosen = weights
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(idx, _)| idx)
                .unwrap_or(0);
        }
        let scale = weights[chosen].sqrt().recip();
        let amps: Vec<C64> = candidates[chosen].iter().map(|z| z * scale).collect();
        Ok((chosen, State::from_amplitudes(amps)?))
    }
}

/// What the prover does during a run: follow a built-in policy, or follow the
/// honest moves and then apply a scripted attack.
#[derive(Debug, Clone)]
pub enum ProverSpec {
    Policy(ProverPolicy),
    Attacked(AttackSpec),
}

impl ProverSpec {
    /// Short name used in reports.
    pub fn name(&self) -> &'static str {
        match self {
            ProverSpec::Policy(ProverPolicy::Honest) => "honest",
            ProverSpec::Policy(ProverPolicy::EchoZero) => "echo-zero",
            ProverSpec::Attacked(_) => "attacked",
        }
    }
}

/// Wraps an attack as a prover description.
pub fn attacked_prover(spec: AttackSpec) -> ProverSpec {
    ProverSpec::Attacked(spec)
}

/// Parses an attack file.
///
/// Each non-blank line is `re,im LETTERS` where `LETTERS` is a dot-separated
/// Pauli string such as `X.I.Z`; `#` starts a comment.  Blank lines separate
/// Kraus operators.
pub fn parse_attack(text: &str, dims: ProtocolDims) -> Result<AttackSpec> {
    let mut kraus = Vec::new();
    let mut current: Vec<(PauliString, C64)> = Vec::new();
    for (offset, raw_line) in text.lines().enumerate() {
        let line_no = offset + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            // A fully blank line closes the current operator; comment-only
            // lines may sit inside an operator block.
            if raw_line.trim().is_empty() && !current.is_empty() {
                kraus.push(KrausTerm::new(std::mem::take(&mut current))?);
            }
            continue;
        }
        let mut tokens = line.split_whitespace();
        let coeff_token = tokens.next().ok_or_else(|| Error::Parse {
            line: line_no,
            message: "expected `re,im LETTERS`".into(),
        })?;
        let letters_token = tokens.next().ok_or_else(|| Error::Parse {
            line: line_no,
            message: "missing Pauli string after the coefficient".into(),
        })?;
        if let Some(extra) = tokens.next() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("unexpected trailing token `{extra}`"),
            });
        }
        let mut parts = coeff_token.split(',');
        let re: f64 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("cannot parse real part in `{coeff_token}`"),
            })?;
        let im: f64 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("cannot parse imaginary part in `{coeff_token}`"),
            })?;
        if parts.next().is_some() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("coefficient `{coeff_token}` has too many components"),
            });
        }
        let string = PauliString::parse_letters(letters_token).map_err(|err| Error::Parse {
            line: line_no,
            message: format!("bad Pauli string `{letters_token}`: {err}"),
        })?;
        if string.len() != dims.m() {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "Pauli string has {} letters but the register has {}",
                    string.len(),
                    dims.m()
                ),
            });
        }
        current.push((string, C64::new(re, im)));
    }
    if !current.is_empty() {
        kraus.push(KrausTerm::new(current)?);
    }
    if kraus.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: "attack file holds no Kraus operators".into(),
        });
    }
    AttackSpec::new(dims, kraus)
}

/// Predicted combined rejection rate of the two test runs: the squared mass
/// of attack terms that flip at least one measured register.  Exact for
/// programs whose gadgets all come from bare `T` gates.
pub fn predicted_test_rejection(attack: &AttackSpec) -> Result<f64> {
    let mass = attack.total_mass();
    if (mass - 1.0).abs() > CHANNEL_EPS {
        return Err(Error::Attack(format!(
            "predictions need total mass 1, found {mass:.12}"
        )));
    }
    attack.flip_mass()
}

/// Predicted upper bound on computation-run acceptance: benign mass accepts
/// with the ideal probability `p`, flip mass accepts with at most 1.
pub fn predicted_comp_acceptance(attack: &AttackSpec, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Invalid(format!("ideal probability {p} outside [0,1]")));
    }
    let nu = predicted_test_rejection(attack)?;
    Ok(p * (1.0 - nu) + nu)
}

/// Predicted upper bound on overall acceptance for a no-instance with ideal
/// probability `p <= 1/3`.
pub fn overall_acceptance_bound(attack: &AttackSpec, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Invalid(format!("ideal probability {p} outside [0,1]")));
    }
    if p > 1.0 / 3.0 + 1e-12 {
        return Err(Error::Invalid(format!(
            "the overall acceptance bound applies to no-instances (p <= 1/3), found p = {p}"
        )));
    }
    let nu = predicted_test_rejection(attack)?;
    Ok(2.0 / 3.0 + p * (1.0 - nu) / 3.0)
}

/// Dense check of how a bit flip on the measured wire propagates through one
/// computation gadget.
///
/// The gadget runs on data `X^a Z^b |psi>` with aux `Z^(d^e) P^(a^c^x) T |+>`;
/// the flip hits the measured wire before measurement and `c` is the reported
/// bit.  The check asserts the reported branch has probability 1/2 and that
/// the surviving qubit matches both closed forms of the residue:
///
/// * the pad computed for report `c`, followed by `X Z P` ahead of `T |psi>`;
/// * the pad computed for report `c^1`, followed by `Z^(a^c^x) P` ahead of
///   `T |psi>`.
pub fn lemma_bitflip_propagation_check(
    a: u8,
    b: u8,
    c: u8,
    d: u8,
    e: u8,
    x: u8,
    psi: &State,
) -> Result<()> {
    if psi.num_qubits() != 1 {
        return Err(Error::Invalid("the propagation check takes a single-qubit state".into()));
    }
    let (a, b, c, d, e, x) = (a & 1, b & 1, c & 1, d & 1, e & 1, x & 1);
    let y = a ^ c ^ x;
    let randomness = TGadgetRandomness::Comp { d, e, y: y ^ d };
    let aux = t_gadget_aux_state(GadgetVariant::Comp, &randomness)?;

    let pad_in = PadKey::new(a, b);
    let mut joint = pad_in.as_pauli().applied_to(psi)?.tensor(&aux)?;
    joint.apply_gate_mut(Gate::new(GateKind::Cnot), &[1, 0])?;
    // The deviation: flip the wire headed for measurement.
    joint.apply_gate_mut(Gate::new(GateKind::X), &[0])?;
    let prob = joint.project_mut(0, c)?;
    if (prob - 0.5).abs() > EPS {
        return Err(Error::Protocol(format!(
            "flipped-gadget branch probability {prob:.12} differs from 1/2"
        )));
    }
    let upd_reported = verifier_t_gadget_update(GadgetVariant::Comp, pad_in, c, &randomness)?;
    if upd_reported.x != x {
        return Err(Error::Protocol("reply reconstruction drifted from the scripted reply".into()));
    }
    if upd_reported.x == 1 {
        joint.apply_gate_mut(Gate::new(GateKind::P), &[1])?;
    }
    joint.swap_qubits_mut(0, 1)?;
    let out = joint.discard_qubit(1)?;

    // Form 1: pad for the reported bit, then X Z P ahead of T|psi>.
    let mut expect = apply_gate(psi, Gate::new(GateKind::T), &[0])?;
    expect = apply_gate(&expect, Gate::new(GateKind::P), &[0])?;
    expect = apply_gate(&expect, Gate::new(GateKind::Z), &[0])?;
    expect = apply_gate(&expect, Gate::new(GateKind::X), &[0])?;
    expect = upd_reported.new_pad.as_pauli().applied_to(&expect)?;
    let fid = fidelity_up_to_phase(&out, &expect)?;
    if (fid - 1.0).abs() > EPS {
        return Err(Error::Protocol(format!(
            "reported-branch residue form failed: fidelity {fid:.12}"
        )));
    }

    // Form 2: pad for the flipped report, then Z^y P ahead of T|psi>.
    let upd_flipped = verifier_t_gadget_update(GadgetVariant::Comp, pad_in, c ^ 1, &randomness)?;
    let mut expect = apply_gate(psi, Gate::new(GateKind::T), &[0])?;
    expect = apply_gate(&expect, Gate::new(GateKind::P), &[0])?;
    if y == 1 {
        expect = apply_gate(&expect, Gate::new(GateKind::Z), &[0])?;
    }
    expect = upd_flipped.new_pad.as_pauli().applied_to(&expect)?;
    let fid = fidelity_up_to_phase(&out, &expect)?;
    if (fid - 1.0).abs() > EPS {
        return Err(Error::Protocol(format!(
            "flipped-branch residue form failed: fidelity {fid:.12}"
        )));
    }
    Ok(())
}

fn random_letters<R: Rng>(len: usize, rng: &mut R) -> Vec<PauliLetter> {
    (0..len).map(|_| PauliLetter::ALL[rng.gen_range(0..4)]).collect()
}

fn random_string<R: Rng>(len: usize, rng: &mut R) -> PauliString {
    PauliString::from_letters(random_letters(len, rng)).expect("nonempty letters")
}

fn random_nonidentity_string<R: Rng>(len: usize, rng: &mut R) -> PauliString {
    loop {
        let s = random_string(len, rng);
        if !s.is_identity_letters() {
            return s;
        }
    }
}

/// Random single-string unitary attack `e^(i phi) Q`.
pub fn random_phased_pauli<R: Rng>(dims: ProtocolDims, rng: &mut R) -> Result<AttackSpec> {
    let phi = rng.gen::<f64>() * std::f64::consts::TAU;
    let term = KrausTerm::new(vec![(random_string(dims.m(), rng), C64::from_polar(1.0, phi))])?;
    AttackSpec::new(dims, vec![term])
}

/// Random two-string unitary attack.
///
/// With `anticommute` set: `cos(th) Q1 + sin(th) Q2` over an anticommuting
/// pair.  Otherwise: `cos(th) Q1 + i sin(th) Q2` over a commuting pair.
pub fn random_two_term_unitary<R: Rng>(
    dims: ProtocolDims,
    anticommute: bool,
    rng: &mut R,
) -> Result<AttackSpec> {
    let m = dims.m();
    let (q1, q2) = loop {
        let q1 = random_string(m, rng);
        let q2 = random_string(m, rng);
        if q1.letters() == q2.letters() {
            continue;
        }
        if q1.commutes_with(&q2)? != anticommute {
            break (q1, q2);
        }
    };
    let theta = rng.gen::<f64>() * std::f64::consts::TAU;
    let second = if anticommute {
        C64::new(theta.sin(), 0.0)
    } else {
        C64::new(0.0, theta.sin())
    };
    let term = KrausTerm::new(vec![(q1, C64::new(theta.cos(), 0.0)), (q2, second)])?;
    AttackSpec::new(dims, vec![term])
}

/// Random three-string unitary attack
/// `cos(th) I + i sin(th) (u Q1 + v Q2)` with `u^2 + v^2 = 1` over a
/// non-identity anticommuting pair.
pub fn random_mixing_unitary<R: Rng>(dims: ProtocolDims, rng: &mut R) -> Result<AttackSpec> {
    let m = dims.m();
    let (q1, q2) = loop {
        let q1 = random_nonidentity_string(m, rng);
        let q2 = random_nonidentity_string(m, rng);
        if q1.letters() == q2.letters() {
            continue;
        }
        if !q1.commutes_with(&q2)? {
            break (q1, q2);
        }
    };
    let theta = rng.gen::<f64>() * std::f64::consts::TAU;
    let omega = rng.gen::<f64>() * std::f64::consts::TAU;
    let (u, v) = (omega.cos(), omega.sin());
    let term = KrausTerm::new(vec![
        (PauliString::identity(m), C64::new(theta.cos(), 0.0)),
        (q1, C64::new(0.0, theta.sin() * u)),
        (q2, C64::new(0.0, theta.sin() * v)),
    ])?;
    AttackSpec::new(dims, vec![term])
}

/// Random Kraus operator on a small register with no structure imposed,
/// used to probe the twirling identity.
pub fn random_kraus_for_twirl<R: Rng>(
    num_qubits: usize,
    max_terms: usize,
    rng: &mut R,
) -> Result<Vec<(PauliString, C64)>> {
    let count = rng.gen_range(1..=max_terms.max(1));
    let mut seen: Vec<Vec<PauliLetter>> = Vec::new();
    let mut terms = Vec::new();
    while terms.len() < count {
        let s = random_string(num_qubits, rng);
        if seen.iter().any(|l| l == s.letters()) {
            continue;
        }
        seen.push(s.letters().to_vec());
        let coeff = C64::new(rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0);
        terms.push((s, coeff));
    }
    Ok(terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statevec::{prepare_state, AuxStateSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_attack(dims: ProtocolDims, letters: &str, coeff: C64) -> AttackSpec {
        let term = KrausTerm::new(vec![(PauliString::parse_letters(letters).unwrap(), coeff)])
            .unwrap();
        AttackSpec::new(dims, vec![term]).unwrap()
    }

    #[test]
    fn kraus_constructor_folds_phases_and_merges() {
        // i * (X with phase i) and (X plain, coefficient 1): coefficients
        // combine to 1 + i*i = 0... use controlled inputs instead.
        let phased = PauliString::parse_letters("X").unwrap().mul_phase(1); // i X
        let term = KrausTerm::new(vec![
            (phased, C64::new(0.0, -1.0)), // -i * iX = X
            (PauliString::parse_letters("X").unwrap(), C64::new(1.0, 0.0)),
        ])
        .unwrap();
        assert_eq!(term.terms().len(), 1);
        let (s, c) = &term.terms()[0];
        assert_eq!(s.phase(), 0);
        assert!((c - C64::new(2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn executable_accepts_unitaries_and_channels() {
        let dims = ProtocolDims::new(1, 1);
        // Unitary: single Pauli with a phase.
        single_attack(dims, "X.I.Z", C64::from_polar(1.0, 0.7))
            .validate_executable()
            .unwrap();
        // Dephasing channel: {sqrt(1/2) I, sqrt(1/2) Z} on one slot.
        let half = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let k1 = KrausTerm::new(vec![(PauliString::identity(3), half)]).unwrap();
        let k2 = KrausTerm::new(vec![(
            PauliString::single(3, 0, PauliLetter::Z).unwrap(),
            half,
        )])
        .unwrap();
        AttackSpec::new(dims, vec![k1, k2])
            .unwrap()
            .validate_executable()
            .unwrap();
    }

    #[test]
    fn executable_rejects_non_channels() {
        let dims = ProtocolDims::new(1, 1);
        // 0.5 X is not trace preserving.
        let bad = single_attack(dims, "X.I.I", C64::new(0.5, 0.0));
        assert!(bad.validate_executable().is_err());
        // cos X + sin Z on the same qubit anticommute -> unitary; on
        // different qubits they do not combine to a unitary.
        let t = 0.3f64;
        let term = KrausTerm::new(vec![
            (PauliString::parse_letters("X.I.I").unwrap(), C64::new(t.cos(), 0.0)),
            (PauliString::parse_letters("I.I.Z").unwrap(), C64::new(t.sin(), 0.0)),
        ])
        .unwrap();
        let spec = AttackSpec::new(dims, vec![term]).unwrap();
        assert!(spec.validate_executable().is_err());
    }

    #[test]
    fn sampling_matches_kraus_weights() {
        // Channel {sqrt(0.8) I, sqrt(0.2) X} on |0>: branch weights 0.8 / 0.2.
        let dims = ProtocolDims::new(1, 0);
        let k1 = KrausTerm::new(vec![(
            PauliString::identity(1),
            C64::new(0.8f64.sqrt(), 0.0),
        )])
        .unwrap();
        let k2 = KrausTerm::new(vec![(
            PauliString::parse_letters("X").unwrap(),
            C64::new(0.2f64.sqrt(), 0.0),
        )])
        .unwrap();
        let spec = AttackSpec::new(dims, vec![k1, k2]).unwrap();
        spec.validate_executable().unwrap();
        let state = prepare_state(&[AuxStateSpec::Zero]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut hits = 0u32;
        let trials = 20_000;
        for _ in 0..trials {
            let (idx, out) = spec.apply_sampled(&state, &[0], &mut rng).unwrap();
            if idx == 1 {
                hits += 1;
                let flipped = prepare_state(&[AuxStateSpec::One]).unwrap();
                assert!((fidelity_up_to_phase(&out, &flipped).unwrap() - 1.0).abs() < 1e-9);
            }
        }
        let rate = f64::from(hits) / f64::from(trials);
        assert!((rate - 0.2).abs() < 0.01, "flip branch rate {rate}");
    }

    #[test]
    fn predictions_follow_flip_mass() {
        let dims = ProtocolDims::new(1, 1); // register A.X.D, measured slots 0 and 2
        let benign = single_attack(dims, "Z.Y.I", C64::new(1.0, 0.0));
        assert!(predicted_test_rejection(&benign).unwrap().abs() < 1e-12);
        let flip = single_attack(dims, "X.I.I", C64::new(1.0, 0.0));
        assert!((predicted_test_rejection(&flip).unwrap() - 1.0).abs() < 1e-12);
        // Balanced superposition of benign and flipping strings: nu = 1/2.
        let theta = std::f64::consts::FRAC_PI_4;
        let term = KrausTerm::new(vec![
            (PauliString::parse_letters("Z.I.I").unwrap(), C64::new(theta.cos(), 0.0)),
            (PauliString::parse_letters("X.I.I").unwrap(), C64::new(theta.sin(), 0.0)),
        ])
        .unwrap();
        let spec = AttackSpec::new(dims, vec![term]).unwrap();
        spec.validate_executable().unwrap();
        let nu = predicted_test_rejection(&spec).unwrap();
        assert!((nu - 0.5).abs() < 1e-12);
        let comp = predicted_comp_acceptance(&spec, 0.25).unwrap();
        assert!((comp - (0.25 * 0.5 + 0.5)).abs() < 1e-12);
        let overall = overall_acceptance_bound(&spec, 0.25).unwrap();
        assert!((overall - (2.0 / 3.0 + 0.25 * 0.5 / 3.0)).abs() < 1e-12);
        assert!(overall_acceptance_bound(&spec, 0.9).is_err());
    }

    #[test]
    fn parse_attack_round_trip_and_errors() {
        let dims = ProtocolDims::new(1, 1);
        let text = "# flip the gadget qubit\n0.6,0 Z.I.I\n0.8,0 X.I.I\n\n# second operator\n0,0 I.I.I\n";
        // 0.6 Z + 0.8 X is unitary on slot 0 (anticommuting pair, 0.36+0.64=1);
        // the all-zero second operator adds nothing to sum(E†E).
        let spec = parse_attack(text, dims).unwrap();
        assert_eq!(spec.kraus().len(), 2);
        spec.validate_executable().unwrap();
        assert!(matches!(
            parse_attack("1,0 X.I", dims),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_attack("1;0 X.I.I", dims),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_attack("1,0 X.I.I extra", dims),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(parse_attack("# nothing\n", dims).is_err());
    }

    #[test]
    fn bitflip_propagation_all_cases() {
        let states = [
            prepare_state(&[AuxStateSpec::Zero]).unwrap(),
            prepare_state(&[AuxStateSpec::One]).unwrap(),
            prepare_state(&[AuxStateSpec::Plus]).unwrap(),
        ];
        for code in 0..64u8 {
            let (a, b, c, d, e, x) = (
                code & 1,
                (code >> 1) & 1,
                (code >> 2) & 1,
                (code >> 3) & 1,
                (code >> 4) & 1,
                (code >> 5) & 1,
            );
            for psi in &states {
                lemma_bitflip_propagation_check(a, b, c, d, e, x, psi).unwrap();
            }
        }
    }

    #[test]
    fn random_families_are_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dims = ProtocolDims::new(2, 1);
        for _ in 0..20 {
            random_phased_pauli(dims, &mut rng).unwrap().validate_executable().unwrap();
            random_two_term_unitary(dims, true, &mut rng)
                .unwrap()
                .validate_executable()
                .unwrap();
            random_two_term_unitary(dims, false, &mut rng)
                .unwrap()
                .validate_executable()
                .unwrap();
            random_mixing_unitary(dims, &mut rng).unwrap().validate_executable().unwrap();
        }
    }
}
