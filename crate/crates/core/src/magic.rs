//! Exact magic oracles and closed forms for two-qubit non-local magic.

use serde::{Deserialize, Serialize};

use crate::circuits::{single_qubit_clifford_group, two_qubit_clifford_group};
use crate::error::{check_unit_interval, Error, Result};
use crate::linalg::{partial_trace, pauli_expectations, purity, tensor, DensityMatrix};

/// Tolerance used to decide that a state is pure.
pub const PURE_TOL: f64 = 1e-9;

/// W(ρ) = d⁻² Σ_P Tr(Pρ)⁴.
pub fn stabilizer_purity_exact(rho: &DensityMatrix) -> f64 {
    let d = rho.dim() as f64;
    pauli_expectations(rho).iter().map(|e| e.powi(4)).sum::<f64>() / (d * d)
}

/// M₂ = −log₂ W + log₂ Tr ρ² − log₂ d.
pub fn sre_exact(rho: &DensityMatrix) -> f64 {
    sre_from_components(stabilizer_purity_exact(rho), purity(rho), rho.dim())
}

pub fn sre_from_components(w: f64, p: f64, d: usize) -> f64 {
    -w.log2() + p.log2() - (d as f64).log2()
}

/// Schmidt weight of a pure two-qubit state, ordered so that λ ≥ 1/2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchmidtSpectrum {
    pub lambda: f64,
    /// λ = cos²(θ/2), θ ∈ [0, π/2].
    pub theta: f64,
}

impl SchmidtSpectrum {
    pub fn from_lambda(lambda: f64) -> Result<Self> {
        check_unit_interval("lambda", lambda)?;
        let lambda = lambda.max(1.0 - lambda);
        Ok(Self {
            lambda,
            theta: 2.0 * lambda.sqrt().min(1.0).acos(),
        })
    }

    pub fn from_theta(theta: f64) -> Self {
        let lambda = (theta / 2.0).cos().powi(2);
        let lambda = lambda.max(1.0 - lambda);
        Self {
            lambda,
            theta: 2.0 * lambda.sqrt().min(1.0).acos(),
        }
    }
}

/// Schmidt spectrum of a pure two-qubit state from its reduced state on qubit 0.
pub fn schmidt_spectrum(rho: &DensityMatrix) -> Result<SchmidtSpectrum> {
    if rho.num_qubits() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            actual: rho.dim(),
        });
    }
    if (purity(rho) - 1.0).abs() > PURE_TOL {
        return Err(Error::InvalidState("Schmidt spectrum needs a pure state".into()));
    }
    let pa = purity(&partial_trace(rho, &[0])?);
    SchmidtSpectrum::from_lambda(lambda_from_purity(pa))
}

fn lambda_from_purity(pa: f64) -> f64 {
    // λ² + (1 − λ)² = P_A.
    ((1.0 + (2.0 * pa - 1.0).max(0.0).sqrt()) / 2.0).min(1.0)
}

/// −log₂(4(λ−1)λ(1−2λ)² + 1).
pub fn nonlocal_magic_schmidt(lambda: f64) -> Result<f64> {
    check_unit_interval("lambda", lambda)?;
    let v = -(4.0 * (lambda - 1.0) * lambda * (1.0 - 2.0 * lambda).powi(2) + 1.0).log2();
    Ok(v.max(0.0))
}

/// log₂(8 / (7 + cos 4θ)).
pub fn nonlocal_magic_theta(theta: f64) -> f64 {
    (8.0 / (7.0 + (4.0 * theta).cos())).log2().max(0.0)
}

/// −log₂(4P_A² − 6P_A + 3).
pub fn nonlocal_magic_from_rdm_purity(p_a: f64) -> Result<f64> {
    if !(0.5..=1.0).contains(&p_a) {
        return Err(Error::Domain {
            name: "p_a",
            value: p_a,
            domain: "[0.5, 1]",
        });
    }
    Ok((-(4.0 * p_a * p_a - 6.0 * p_a + 3.0).log2()).max(0.0))
}

/// Single-qubit RDM purity after global depolarizing with survival `p_dep`.
pub fn noisy_rdm_purity(lambda: f64, p_dep: f64) -> f64 {
    let p = p_dep;
    p * p * (lambda * lambda + (1.0 - lambda).powi(2)) + p * (1.0 - p) + (1.0 - p).powi(2) / 2.0
}

/// Inverts [`noisy_rdm_purity`] for λ ∈ [1/2, 1].
pub fn lambda_from_noisy_rdm_purity(p_a_measured: f64, p_dep: f64) -> Result<f64> {
    if !(p_dep > 0.0 && p_dep <= 1.0) {
        return Err(Error::Domain {
            name: "p_dep",
            value: p_dep,
            domain: "(0, 1]",
        });
    }
    let min = noisy_rdm_purity(0.5, p_dep);
    let max = noisy_rdm_purity(1.0, p_dep);
    const SLACK: f64 = 1e-12;
    if !(p_a_measured >= min - SLACK && p_a_measured <= max + SLACK) {
        return Err(Error::OutOfModel {
            purity: p_a_measured,
            p_dep,
            min,
            max,
        });
    }
    let p = p_dep;
    let u = (p_a_measured - p * (1.0 - p) - (1.0 - p).powi(2) / 2.0) / (p * p);
    Ok(lambda_from_purity(u.clamp(0.5, 1.0)))
}

/// Non-local magic of the underlying pure state from a noisy RDM purity.
pub fn nonlocal_magic_noisy(p_a_measured: f64, p_dep: f64) -> Result<f64> {
    nonlocal_magic_schmidt(lambda_from_noisy_rdm_purity(p_a_measured, p_dep)?)
}

/// Closed-form M₂ of the NLM(θ) state after one global depolarizing CZ with
/// error probability `p_err`.
pub fn sre_nlm_depolarized(p_err: f64, theta: f64) -> Result<f64> {
    check_unit_interval("p_err", p_err)?;
    let p = p_err;
    let inner = (p - 1.0).powi(4) * (4.0 * theta).cos() + 5.0 * (p - 2.0) * p * ((p - 2.0) * p + 2.0) + 7.0;
    Ok(-(4.0 * inner).log2() + (3.0 * (p - 2.0) * p + 4.0).log2() + 3.0)
}

/// M^L = M₂(ρ) − M^NL.
pub fn local_magic(rho: &DensityMatrix, nl: f64) -> Result<f64> {
    let total = sre_exact(rho);
    if nl > total + 1e-9 {
        return Err(Error::Inconsistent {
            nonlocal: nl,
            total,
        });
    }
    Ok(total - nl)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MagicReport {
    pub purity: f64,
    pub stabilizer_purity: f64,
    pub m2: f64,
    pub m2_nonlocal: Option<f64>,
    pub m2_local: Option<f64>,
}

/// Exact oracle summary; the non-local part is filled in for pure two-qubit states.
pub fn magic_report(rho: &DensityMatrix) -> Result<MagicReport> {
    let p = purity(rho);
    let w = stabilizer_purity_exact(rho);
    let m2 = sre_from_components(w, p, rho.dim());
    let nl = if rho.num_qubits() == 2 && (p - 1.0).abs() <= PURE_TOL {
        Some(nonlocal_magic_schmidt(schmidt_spectrum(rho)?.lambda)?)
    } else {
        None
    };
    Ok(MagicReport {
        purity: p,
        stabilizer_purity: w,
        m2,
        m2_nonlocal: nl,
        m2_local: nl.map(|nl| m2 - nl),
    })
}

/// C_A ⊗ C_BC on qubits (A, B, C) = (0, 1, 2): a single-qubit Clifford on A
/// (index into the 24-element group) and a two-qubit Clifford on (B, C) (index
/// into the 11520-element group).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorizedClifford {
    pub a: usize,
    pub bc: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LemmaCheck {
    /// Output factorizes and the ancilla carries at most the local magic.
    Holds { ancilla_m2: f64, local_magic: f64 },
    Violated { ancilla_m2: f64, local_magic: f64 },
    /// Output does not factorize as ψ' ⊗ φ.
    NotApplicable,
}

impl LemmaCheck {
    pub fn holds(&self) -> Option<bool> {
        match self {
            LemmaCheck::Holds { .. } => Some(true),
            LemmaCheck::Violated { .. } => Some(false),
            LemmaCheck::NotApplicable => None,
        }
    }
}

/// Applies `c` to ψ ⊗ |0⟩ and compares the ancilla's magic with M^L(ψ).
pub fn check_distillation_lemma(psi: &DensityMatrix, c: FactorizedClifford) -> Result<LemmaCheck> {
    if psi.num_qubits() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            actual: psi.dim(),
        });
    }
    let g1 = single_qubit_clifford_group();
    let g2 = two_qubit_clifford_group();
    if c.a >= g1.len() || c.bc >= g2.len() {
        return Err(Error::Domain {
            name: "clifford index",
            value: c.a.max(c.bc) as f64,
            domain: "group size",
        });
    }
    let report = magic_report(psi)?;
    let nl = report
        .m2_nonlocal
        .ok_or_else(|| Error::InvalidState("distillation check needs a pure state".into()))?;
    let local = report.m2 - nl;

    let u = tensor(&g1[c.a].matrix, &g2[c.bc]);
    let out = psi.tensor(&DensityMatrix::basis_state(1, 0)).evolve(&u);
    let ab = partial_trace(&out, &[0, 1])?;
    let anc = partial_trace(&out, &[2])?;
    if !out.matrix().approx_eq(ab.tensor(&anc).matrix(), 1e-9) {
        return Ok(LemmaCheck::NotApplicable);
    }
    let ancilla_m2 = sre_exact(&anc);
    Ok(if ancilla_m2 <= local + 1e-9 {
        LemmaCheck::Holds {
            ancilla_m2,
            local_magic: local,
        }
    } else {
        LemmaCheck::Violated {
            ancilla_m2,
            local_magic: local,
        }
    })
}
