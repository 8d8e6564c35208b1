//! Gate set, circuit execution, Clifford groups and the catalogue of named preparations.

use std::collections::{HashMap, VecDeque};
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, FRAC_PI_8, PI};
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{tensor, C64, ComplexMatrix, DensityMatrix, I, ONE, ZERO};
use crate::noise::{depolarize, NoiseConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateKind {
    Rx,
    Ry,
    Rz,
    /// Rotation by θ about the equatorial axis cos φ X + sin φ Y.
    Rxy,
    H,
    S,
    T,
    X,
    Y,
    Z,
    CZ,
    CNOT,
}

impl GateKind {
    pub fn arity(self) -> usize {
        match self {
            GateKind::CZ | GateKind::CNOT => 2,
            _ => 1,
        }
    }

    pub fn num_angles(self) -> usize {
        match self {
            GateKind::Rx | GateKind::Ry | GateKind::Rz => 1,
            GateKind::Rxy => 2,
            _ => 0,
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name.to_ascii_uppercase().as_str() {
            "RX" => GateKind::Rx,
            "RY" => GateKind::Ry,
            "RZ" => GateKind::Rz,
            "RXY" => GateKind::Rxy,
            "H" => GateKind::H,
            "S" => GateKind::S,
            "T" => GateKind::T,
            "X" => GateKind::X,
            "Y" => GateKind::Y,
            "Z" => GateKind::Z,
            "CZ" => GateKind::CZ,
            "CNOT" | "CX" => GateKind::CNOT,
            _ => return Err(Error::UnsupportedGate(name.to_string())),
        })
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A gate instance. For CNOT the first qubit is the control.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateSpec {
    kind: GateKind,
    qubits: Vec<usize>,
    angles: Vec<f64>,
}

impl GateSpec {
    pub fn new(kind: GateKind, qubits: Vec<usize>, angles: Vec<f64>) -> Result<Self> {
        let bad = |reason: String| Error::InvalidGate {
            kind: kind.to_string(),
            reason,
        };
        if qubits.len() != kind.arity() {
            return Err(bad(format!(
                "expects {} qubit(s), got {}",
                kind.arity(),
                qubits.len()
            )));
        }
        if kind.arity() == 2 && qubits[0] == qubits[1] {
            return Err(bad("qubit indices must be distinct".into()));
        }
        if angles.len() != kind.num_angles() {
            return Err(bad(format!(
                "expects {} angle(s), got {}",
                kind.num_angles(),
                angles.len()
            )));
        }
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(bad("non-finite angle".into()));
        }
        Ok(Self {
            kind,
            qubits,
            angles,
        })
    }

    fn fixed(kind: GateKind, q: usize) -> Self {
        Self {
            kind,
            qubits: vec![q],
            angles: vec![],
        }
    }

    pub fn rx(q: usize, theta: f64) -> Self {
        Self {
            kind: GateKind::Rx,
            qubits: vec![q],
            angles: vec![theta],
        }
    }

    pub fn ry(q: usize, theta: f64) -> Self {
        Self {
            kind: GateKind::Ry,
            qubits: vec![q],
            angles: vec![theta],
        }
    }

    pub fn rz(q: usize, theta: f64) -> Self {
        Self {
            kind: GateKind::Rz,
            qubits: vec![q],
            angles: vec![theta],
        }
    }

    pub fn rxy(q: usize, theta: f64, phi: f64) -> Self {
        Self {
            kind: GateKind::Rxy,
            qubits: vec![q],
            angles: vec![theta, phi],
        }
    }

    pub fn h(q: usize) -> Self {
        Self::fixed(GateKind::H, q)
    }

    pub fn s(q: usize) -> Self {
        Self::fixed(GateKind::S, q)
    }

    pub fn t(q: usize) -> Self {
        Self::fixed(GateKind::T, q)
    }

    pub fn x(q: usize) -> Self {
        Self::fixed(GateKind::X, q)
    }

    pub fn y(q: usize) -> Self {
        Self::fixed(GateKind::Y, q)
    }

    pub fn z(q: usize) -> Self {
        Self::fixed(GateKind::Z, q)
    }

    /// Panics if `a == b`.
    pub fn cz(a: usize, b: usize) -> Self {
        assert_ne!(a, b);
        Self {
            kind: GateKind::CZ,
            qubits: vec![a, b],
            angles: vec![],
        }
    }

    /// Panics if `control == target`.
    pub fn cnot(control: usize, target: usize) -> Self {
        assert_ne!(control, target);
        Self {
            kind: GateKind::CNOT,
            qubits: vec![control, target],
            angles: vec![],
        }
    }

    pub fn kind(&self) -> GateKind {
        self.kind
    }

    pub fn qubits(&self) -> &[usize] {
        &self.qubits
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }
}

fn rot(theta: f64, axis: [C64; 2]) -> ComplexMatrix {
    // exp(-i θ/2 n·σ) for an equatorial (x, y) axis encoded as off-diagonal entries.
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    ComplexMatrix::from_rows(&[
        vec![C64::new(c, 0.0), -I * s * axis[0]],
        vec![-I * s * axis[1], C64::new(c, 0.0)],
    ])
}

fn rz(theta: f64) -> ComplexMatrix {
    ComplexMatrix::from_diag(&[
        C64::from_polar(1.0, -theta / 2.0),
        C64::from_polar(1.0, theta / 2.0),
    ])
}

fn ry(theta: f64) -> ComplexMatrix {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    ComplexMatrix::from_rows(&[
        vec![C64::new(c, 0.0), C64::new(-s, 0.0)],
        vec![C64::new(s, 0.0), C64::new(c, 0.0)],
    ])
}

pub(crate) fn hadamard() -> ComplexMatrix {
    let h = C64::new(FRAC_1_SQRT_2, 0.0);
    ComplexMatrix::from_rows(&[vec![h, h], vec![h, -h]])
}

pub(crate) fn phase_s() -> ComplexMatrix {
    ComplexMatrix::from_diag(&[ONE, I])
}

fn cz() -> ComplexMatrix {
    ComplexMatrix::from_diag(&[ONE, ONE, ONE, -ONE])
}

/// Unitary of `g` on its own qubits (2×2 or 4×4; the first listed qubit is the
/// most significant). CNOT is the product (I⊗H)·CZ·(I⊗H).
pub fn gate_matrix(g: &GateSpec) -> ComplexMatrix {
    let a = g.angles();
    match g.kind() {
        GateKind::Rx => rot(a[0], [ONE, ONE]),
        GateKind::Ry => ry(a[0]),
        GateKind::Rz => rz(a[0]),
        GateKind::Rxy => rot(
            a[0],
            [C64::from_polar(1.0, -a[1]), C64::from_polar(1.0, a[1])],
        ),
        GateKind::H => hadamard(),
        GateKind::S => phase_s(),
        GateKind::T => rz(FRAC_PI_4),
        GateKind::X => ComplexMatrix::from_rows(&[vec![ZERO, ONE], vec![ONE, ZERO]]),
        GateKind::Y => ComplexMatrix::from_rows(&[vec![ZERO, -I], vec![I, ZERO]]),
        GateKind::Z => ComplexMatrix::from_diag(&[ONE, -ONE]),
        GateKind::CZ => cz(),
        GateKind::CNOT => {
            let ih = tensor(&ComplexMatrix::identity(2), &hadamard());
            ih.matmul(&cz()).matmul(&ih)
        }
    }
}

/// Lifts a `k`-qubit operator acting on `qubits` (in that order) to an
/// `n`-qubit register.
pub fn embed(local: &ComplexMatrix, qubits: &[usize], n: usize) -> ComplexMatrix {
    let k = qubits.len();
    assert_eq!(local.rows(), 1 << k);
    let d = 1usize << n;
    let mask: usize = qubits.iter().map(|&q| 1usize << (n - 1 - q)).sum();
    let sub = |idx: usize| -> usize {
        qubits
            .iter()
            .fold(0, |acc, &q| (acc << 1) | ((idx >> (n - 1 - q)) & 1))
    };
    let mut out = ComplexMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            if (i & !mask) == (j & !mask) {
                out[(i, j)] = local[(sub(i), sub(j))];
            }
        }
    }
    out
}

/// Ordered gate list over a fixed register.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    num_qubits: usize,
    gates: Vec<GateSpec>,
}

impl Circuit {
    pub fn new(num_qubits: usize) -> Self {
        Self {
            num_qubits,
            gates: Vec::new(),
        }
    }

    pub fn from_gates(num_qubits: usize, gates: Vec<GateSpec>) -> Result<Self> {
        let mut c = Self::new(num_qubits);
        for g in gates {
            c.push(g)?;
        }
        Ok(c)
    }

    pub fn push(&mut self, g: GateSpec) -> Result<()> {
        if let Some(&q) = g.qubits().iter().find(|&&q| q >= self.num_qubits) {
            return Err(Error::InvalidGate {
                kind: g.kind().to_string(),
                reason: format!("qubit {q} out of range for {} qubits", self.num_qubits),
            });
        }
        self.gates.push(g);
        Ok(())
    }

    pub fn with(mut self, g: GateSpec) -> Self {
        self.push(g).expect("gate out of range");
        self
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn gates(&self) -> &[GateSpec] {
        &self.gates
    }

    pub fn cz_count(&self) -> usize {
        self.gates
            .iter()
            .filter(|g| matches!(g.kind(), GateKind::CZ | GateKind::CNOT))
            .count()
    }

    /// Product of all gate unitaries (noise-free).
    pub fn unitary(&self) -> ComplexMatrix {
        self.gates.iter().fold(
            ComplexMatrix::identity(1 << self.num_qubits),
            |acc, g| embed(&gate_matrix(g), g.qubits(), self.num_qubits).matmul(&acc),
        )
    }
}

/// Runs `c` on |0…0⟩. A global depolarizing step with survival `noise.p_dep_cz`
/// follows every CZ, including the one inside each CNOT.
pub fn run_circuit(c: &Circuit, noise: &NoiseConfig) -> Result<DensityMatrix> {
    let n = c.num_qubits();
    let p = noise.p_dep_cz;
    let mut rho = DensityMatrix::basis_state(n, 0);
    for g in c.gates() {
        match g.kind() {
            GateKind::CZ => {
                rho = rho.evolve(&embed(&cz(), g.qubits(), n));
                rho = depolarize(&rho, p)?;
            }
            GateKind::CNOT => {
                let h = embed(&hadamard(), &g.qubits()[1..], n);
                rho = rho.evolve(&h).evolve(&embed(&cz(), g.qubits(), n));
                rho = depolarize(&rho, p)?.evolve(&h);
            }
            _ => rho = rho.evolve(&embed(&gate_matrix(g), g.qubits(), n)),
        }
    }
    Ok(rho)
}

/// Canonical hash key of a unitary modulo global phase.
fn phase_key(m: &ComplexMatrix) -> Vec<i64> {
    m.phase_canonical()
        .as_slice()
        .iter()
        .flat_map(|z| [(z.re * 1e6).round() as i64, (z.im * 1e6).round() as i64])
        .collect()
}

/// Breadth-first closure of `generators` under left multiplication, modulo phase.
fn closure(generators: &[ComplexMatrix]) -> Vec<ComplexMatrix> {
    let dim = generators[0].rows();
    let start = ComplexMatrix::identity(dim);
    let mut seen = HashMap::new();
    seen.insert(phase_key(&start), 0usize);
    let mut elems = vec![start];
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        for g in generators {
            let next = g.matmul(&elems[i]).phase_canonical();
            let key = phase_key(&next);
            if let std::collections::hash_map::Entry::Vacant(e) = seen.entry(key) {
                e.insert(elems.len());
                queue.push_back(elems.len());
                elems.push(next);
            }
        }
    }
    elems
}

/// A single-qubit Clifford unitary, phase-canonical.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CliffordElement {
    pub matrix: ComplexMatrix,
    pub canonical_id: usize,
}

static CLIFFORD_1: OnceLock<Vec<CliffordElement>> = OnceLock::new();
static CLIFFORD_2: OnceLock<Vec<ComplexMatrix>> = OnceLock::new();

/// The 24 single-qubit Cliffords modulo phase; id 0 is the identity.
pub fn single_qubit_clifford_group() -> &'static [CliffordElement] {
    CLIFFORD_1.get_or_init(|| {
        closure(&[hadamard(), phase_s()])
            .into_iter()
            .enumerate()
            .map(|(canonical_id, matrix)| CliffordElement {
                matrix,
                canonical_id,
            })
            .collect()
    })
}

/// The 11520 two-qubit Cliffords modulo phase, generated by H, S on each qubit and CZ.
pub fn two_qubit_clifford_group() -> &'static [ComplexMatrix] {
    CLIFFORD_2.get_or_init(|| {
        let id = ComplexMatrix::identity(2);
        closure(&[
            tensor(&hadamard(), &id),
            tensor(&id, &hadamard()),
            tensor(&phase_s(), &id),
            tensor(&id, &phase_s()),
            cz(),
        ])
    })
}

/// Index of `m` in the single-qubit group, if it is a Clifford.
pub fn clifford_id(m: &ComplexMatrix) -> Option<usize> {
    single_qubit_clifford_group()
        .iter()
        .position(|c| c.matrix.eq_up_to_phase(m, 1e-9))
}

/// |C_n / U(1)| = 2^{n²+2n} ∏_{k=1..n} (4^k − 1).
pub fn clifford_cardinality(n: i64) -> Result<u128> {
    let domain = || Error::Domain {
        name: "n",
        value: n as f64,
        domain: "[1, 7]",
    };
    if n < 1 {
        return Err(domain());
    }
    let n = n as u32;
    let mut acc = 1u128.checked_shl(n * n + 2 * n).ok_or_else(domain)?;
    for k in 1..=n {
        let f = 4u128.checked_pow(k).ok_or_else(domain)? - 1;
        acc = acc.checked_mul(f).ok_or_else(domain)?;
    }
    Ok(acc)
}

/// Named preparations. Angles are radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", content = "params")]
pub enum StateId {
    Psi0,
    Psi1 { t: bool },
    Psi2 { t: bool },
    Psi3 { t: bool },
    Psi4,
    LM,
    LMErased,
    M,
    MErased,
    NLM { theta: f64 },
    Fig4 { gamma: f64, phi: f64 },
}

/// Rz angle on qubit 1 that erases most local magic of the M state.
pub const M_ERASURE_PHI: f64 = 67.61 * PI / 180.0;

impl StateId {
    pub fn num_qubits(&self) -> usize {
        match self {
            StateId::Psi0 | StateId::Psi1 { .. } | StateId::Psi2 { .. } => 1,
            _ => 2,
        }
    }

    pub fn label(&self) -> String {
        match self {
            StateId::Psi0 => "psi0".into(),
            StateId::Psi1 { t } => format!("psi1{}", if *t { "_T" } else { "" }),
            StateId::Psi2 { t } => format!("psi2{}", if *t { "_T" } else { "" }),
            StateId::Psi3 { t } => format!("psi3{}", if *t { "_T" } else { "" }),
            StateId::Psi4 => "psi4".into(),
            StateId::LM => "LM".into(),
            StateId::LMErased => "LM_erased".into(),
            StateId::M => "M".into(),
            StateId::MErased => "M_erased".into(),
            StateId::NLM { theta } => format!("NLM({:.4}deg)", theta.to_degrees()),
            StateId::Fig4 { gamma, phi } => format!(
                "Fig4({:.4}deg,{:.4}deg)",
                gamma.to_degrees(),
                phi.to_degrees()
            ),
        }
    }
}

/// Gate list preparing a named state from |0…0⟩.
pub fn paper_state(id: &StateId) -> Circuit {
    let c1 = Circuit::new(1);
    let c2 = Circuit::new(2);
    let with_t = |c: Circuit, t: bool, qs: &[usize]| {
        qs.iter()
            .fold(c, |c, &q| if t { c.with(GateSpec::t(q)) } else { c })
    };
    match *id {
        StateId::Psi0 => c1,
        StateId::Psi1 { t } => with_t(c1.with(GateSpec::h(0)), t, &[0]),
        StateId::Psi2 { t } => with_t(c1.with(GateSpec::x(0)).with(GateSpec::h(0)), t, &[0]),
        StateId::Psi3 { t } => with_t(
            c2.with(GateSpec::h(0)).with(GateSpec::h(1)),
            t,
            &[0, 1],
        ),
        StateId::Psi4 => c2.with(GateSpec::h(0)).with(GateSpec::cnot(0, 1)),
        StateId::LM => c2
            .with(GateSpec::h(0))
            .with(GateSpec::cnot(0, 1))
            .with(GateSpec::t(1)),
        StateId::LMErased => paper_state(&StateId::LM).with(GateSpec::t(1)),
        // Qubit 0 ends in Rx(π/8)|0⟩, qubit 1 in (|0⟩ + e^{iπ/8}|1⟩)/√2.
        StateId::M => c2
            .with(GateSpec::rx(0, FRAC_PI_8))
            .with(GateSpec::h(1))
            .with(GateSpec::cnot(0, 1))
            .with(GateSpec::rz(1, FRAC_PI_8)),
        StateId::MErased => paper_state(&StateId::M).with(GateSpec::rz(1, M_ERASURE_PHI)),
        StateId::NLM { theta } => c2.with(GateSpec::rx(0, theta)).with(GateSpec::cnot(0, 1)),
        StateId::Fig4 { gamma, phi } => c2
            .with(GateSpec::ry(0, FRAC_PI_8))
            .with(GateSpec::cnot(0, 1))
            .with(GateSpec::rz(0, FRAC_PI_8))
            .with(GateSpec::rz(0, gamma))
            .with(GateSpec::rz(1, phi)),
    }
}

/// Closed-form amplitudes of the M state, in the register's big-endian order.
pub fn m_state_amplitudes() -> [C64; 4] {
    let r = (2.0 + 2f64.sqrt()).sqrt();
    let cp = (2.0 + r).sqrt();
    let cm = (2.0 - r).sqrt();
    let e = C64::from_polar(1.0, FRAC_PI_8);
    let k = 2f64.powf(-1.5);
    // The qubit carrying c± is the register's qubit 0.
    [
        C64::new(cp * k, 0.0),
        e * cp * k,
        -I * cm * k,
        -I * e * cm * k,
    ]
}
