//! Depolarizing channel, classical readout corruption and finite-shot sampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{check_unit_interval, Error, Result};
use crate::linalg::DensityMatrix;

/// Tolerance on probability sums and stochastic columns.
pub const PROB_TOL: f64 = 1e-9;
/// Negative entries down to this magnitude are treated as roundoff.
pub const CLAMP_TOL: f64 = 1e-12;

/// Error probability `1 − p_dep` from the survival probability used throughout.
pub fn error_probability(p_dep: f64) -> f64 {
    1.0 - p_dep
}

/// Survival probability from an error probability.
pub fn survival_probability(p_err: f64) -> f64 {
    1.0 - p_err
}

/// `p·ρ + (1 − p)·I/d` on the whole register.
pub fn depolarize(rho: &DensityMatrix, p_dep: f64) -> Result<DensityMatrix> {
    check_unit_interval("p_dep", p_dep)?;
    let mixed = DensityMatrix::maximally_mixed(rho.num_qubits());
    Ok(DensityMatrix::from_matrix_unchecked(rho.matrix().axpby(
        p_dep,
        mixed.matrix(),
        1.0 - p_dep,
    )))
}

/// Outcome distribution over the 2^N computational basis strings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbabilityVector {
    probs: Vec<f64>,
}

impl ProbabilityVector {
    /// Clamps roundoff negatives to zero and renormalizes. Rejects larger
    /// negatives, non-finite entries, or a sum away from 1.
    pub fn new(mut probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || !probs.len().is_power_of_two() {
            return Err(Error::InvalidProbabilities(format!(
                "length {} is not a power of two",
                probs.len()
            )));
        }
        if let Some(&x) = probs.iter().find(|x| !x.is_finite() || **x < -CLAMP_TOL) {
            return Err(Error::InvalidProbabilities(format!("entry {x}")));
        }
        probs.iter_mut().for_each(|x| *x = x.max(0.0));
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidProbabilities(format!("sum {sum}")));
        }
        probs.iter_mut().for_each(|x| *x /= sum);
        Ok(Self { probs })
    }

    pub(crate) fn from_vec_unchecked(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn num_qubits(&self) -> usize {
        self.probs.len().trailing_zeros() as usize
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<f64>> for ProbabilityVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ProbabilityVector> for Vec<f64> {
    fn from(p: ProbabilityVector) -> Self {
        p.probs
    }
}

/// Born-rule distribution of `rho` in the computational basis.
pub fn born_probabilities(rho: &DensityMatrix) -> ProbabilityVector {
    let mut p = rho.diagonal_probabilities();
    let sum: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= sum);
    ProbabilityVector::from_vec_unchecked(p)
}

/// Column-stochastic readout matrix; `lambda[i][j]` = P(read i | prepared j).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct CalibrationMatrix {
    lambda: Vec<Vec<f64>>,
}

impl CalibrationMatrix {
    pub fn new(lambda: Vec<Vec<f64>>) -> Result<Self> {
        let d = lambda.len();
        if d == 0 || !d.is_power_of_two() || lambda.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidCalibration("must be a square 2^N matrix".into()));
        }
        if lambda.iter().flatten().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::InvalidCalibration("entries must lie in [0, 1]".into()));
        }
        for j in 0..d {
            let s: f64 = lambda.iter().map(|row| row[j]).sum();
            if (s - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidCalibration(format!("column {j} sums to {s}")));
            }
        }
        Ok(Self { lambda })
    }

    pub fn identity(num_qubits: usize) -> Self {
        let d = 1 << num_qubits;
        Self {
            lambda: (0..d)
                .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    pub fn num_qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lambda[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.lambda
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.lambda.iter().map(|r| r[j]).collect()
    }

    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        self.lambda
            .iter()
            .map(|r| r.iter().zip(p).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn apply_transpose(&self, r: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|j| (0..self.dim()).map(|i| self.lambda[i][j] * r[i]).sum())
            .collect()
    }

    /// Kronecker product, `self` on the leading qubits.
    pub fn kron(&self, other: &Self) -> Self {
        let (a, b) = (self.dim(), other.dim());
        let mut out = vec![vec![0.0; a * b]; a * b];
        for i in 0..a {
            for j in 0..a {
                for k in 0..b {
                    for l in 0..b {
                        out[i * b + k][j * b + l] = self.lambda[i][j] * other.lambda[k][l];
                    }
                }
            }
        }
        Self { lambda: out }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.lambda
            .iter()
            .flatten()
            .zip(other.lambda.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<Vec<f64>>> for CalibrationMatrix {
    type Error = Error;
    fn try_from(v: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<CalibrationMatrix> for Vec<Vec<f64>> {
    fn from(c: CalibrationMatrix) -> Self {
        c.lambda
    }
}

/// `Λ · p`.
pub fn apply_readout_noise(
    p: &ProbabilityVector,
    lambda: &CalibrationMatrix,
) -> Result<ProbabilityVector> {
    if p.len() != lambda.dim() {
        return Err(Error::DimensionMismatch {
            expected: lambda.dim(),
            actual: p.len(),
        });
    }
    ProbabilityVector::new(lambda.apply(p.as_slice()))
}

/// Empirical frequencies of `n_shot` multinomial draws.
pub fn sample_shots(p: &ProbabilityVector, n_shot: u64, seed: u64) -> ProbabilityVector {
    let counts = sample_counts(p.as_slice(), n_shot, seed);
    ProbabilityVector::from_vec_unchecked(
        counts
            .into_iter()
            .map(|c| c as f64 / n_shot as f64)
            .collect(),
    )
}

/// Multinomial counts by sequential conditional binomials.
pub fn sample_counts(p: &[f64], n_shot: u64, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut remaining = n_shot;
    let mut mass = 1.0f64;
    let mut counts = vec![0u64; p.len()];
    for (i, &pi) in p.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == p.len() {
            counts[i] = remaining;
            break;
        }
        let q = if mass > 0.0 { (pi / mass).clamp(0.0, 1.0) } else { 0.0 };
        let k = Binomial::new(remaining, q)
            .expect("q is clamped to [0, 1]")
            .sample(&mut rng);
        counts[i] = k;
        remaining -= k;
        mass -= pi;
    }
    counts
}

/// Tensor product of single-qubit flip matrices, where each pair is
/// (ε01, ε10) = (P(read 1 | 0), P(read 0 | 1)). A nonzero `correlation` moves
/// that much extra weight from each column onto the all-bits-flipped outcome
/// before column renormalization.
pub fn synth_calibration_matrix(
    per_qubit_eps: &[(f64, f64)],
    correlation: f64,
) -> Result<CalibrationMatrix> {
    if per_qubit_eps.is_empty() {
        return Err(Error::InvalidCalibration("no qubits".into()));
    }
    for &(e01, e10) in per_qubit_eps {
        for e in [e01, e10] {
            if !(0.0..=0.5).contains(&e) {
                return Err(Error::Domain {
                    name: "epsilon",
                    value: e,
                    domain: "[0, 0.5]",
                });
            }
        }
    }
    if !(0.0..=0.1).contains(&correlation) {
        return Err(Error::Domain {
            name: "correlation",
            value: correlation,
            domain: "[0, 0.1]",
        });
    }
    let single = |(e01, e10): (f64, f64)| CalibrationMatrix {
        lambda: vec![vec![1.0 - e01, e10], vec![e01, 1.0 - e10]],
    };
    let mut lam = per_qubit_eps[1..]
        .iter()
        .fold(single(per_qubit_eps[0]), |acc, &e| acc.kron(&single(e)));
    if correlation > 0.0 {
        let d = lam.dim();
        let all = d - 1;
        for j in 0..d {
            lam.lambda[j ^ all][j] += correlation;
        }
        for j in 0..d {
            let s: f64 = (0..d).map(|i| lam.lambda[i][j]).sum();
            for i in 0..d {
                lam.lambda[i][j] /= s;
            }
        }
    }
    Ok(lam)
}

/// Circuit-level noise and measurement settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Survival probability of the depolarizing channel after each CZ.
    pub p_dep_cz: f64,
    #[serde(default)]
    pub readout_lambda: Option<CalibrationMatrix>,
    #[serde(default)]
    pub n_shot: Option<u64>,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        Self {
            p_dep_cz: 1.0,
            readout_lambda: None,
            n_shot: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_unit_interval("p_dep_cz", self.p_dep_cz)?;
        if self.n_shot == Some(0) {
            return Err(Error::Domain {
                name: "n_shot",
                value: 0.0,
                domain: ">= 1",
            });
        }
        Ok(())
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::noiseless()
    }
}
