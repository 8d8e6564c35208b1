//! Randomized Clifford measurements: sampling, datasets and estimators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuits::single_qubit_clifford_group;
use crate::error::{Error, Result};
use crate::linalg::{normalize_subset, DensityMatrix, C64};
use crate::magic::sre_from_components;
use crate::noise::{apply_readout_noise, sample_shots, NoiseConfig, ProbabilityVector};

/// Number of single-qubit Cliffords modulo phase.
pub const N_CLIFFORD_1: usize = 24;

/// Offsets the Clifford-choice stream from the shot stream when both use one seed.
const CLIFFORD_STREAM: u64 = 0xC1F0_5EED_0000_0001;

/// SplitMix64 finalizer over (seed, index); used for every per-sample stream.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mean, sample std (1/(n−1)), standard error and count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithError {
    pub mean: f64,
    pub sample_std: f64,
    pub sampling_error: f64,
    pub n_samples: usize,
}

impl EstimateWithError {
    pub fn from_samples(xs: &[f64]) -> Result<Self> {
        let n = xs.len();
        if n < 2 {
            return Err(Error::Undersampled(format!("{n} sample(s); need at least 2")));
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Ok(Self::from_std(mean, var.sqrt(), n))
    }

    pub fn from_std(mean: f64, sample_std: f64, n_samples: usize) -> Self {
        Self {
            mean,
            sample_std,
            sampling_error: sample_std / (n_samples as f64).sqrt(),
            n_samples,
        }
    }

    /// Bundle built from a propagated standard error.
    pub fn from_error(mean: f64, sampling_error: f64, n_samples: usize) -> Self {
        Self::from_std(mean, sampling_error * (n_samples as f64).sqrt(), n_samples)
    }
}

/// Clifford index tuples, one id per qubit. When `n_rand == 24^N` every tuple is
/// returned exactly once in lexicographic order.
pub fn sample_local_cliffords(n_qubits: usize, n_rand: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if n_rand < 2 {
        return Err(Error::Undersampled(format!("n_rand = {n_rand}; need at least 2")));
    }
    let total = N_CLIFFORD_1.checked_pow(n_qubits as u32);
    if total == Some(n_rand) {
        return Ok(exhaustive_local_cliffords(n_qubits));
    }
    Ok((0..n_rand)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed ^ CLIFFORD_STREAM, i as u64));
            (0..n_qubits).map(|_| rng.random_range(0..N_CLIFFORD_1)).collect()
        })
        .collect())
}

pub fn exhaustive_local_cliffords(n_qubits: usize) -> Vec<Vec<usize>> {
    let total = N_CLIFFORD_1.pow(n_qubits as u32);
    (0..total)
        .map(|mut k| {
            let mut t = vec![0; n_qubits];
            for slot in t.iter_mut().rev() {
                *slot = k % N_CLIFFORD_1;
                k /= N_CLIFFORD_1;
            }
            t
        })
        .collect()
}

/// Outcome distributions for a list of local Clifford products.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RcmDataset {
    pub num_qubits: usize,
    pub clifford_ids: Vec<Vec<usize>>,
    pub prob_vectors: Vec<ProbabilityVector>,
    pub n_shot: Option<u64>,
    pub seed: u64,
}

impl RcmDataset {
    pub fn len(&self) -> usize {
        self.prob_vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob_vectors.is_empty()
    }

    /// Applies `f` to every probability vector, keeping order.
    pub fn try_map_probabilities<F>(&self, f: F) -> Result<Self>
    where
        F: Fn(&ProbabilityVector) -> Result<ProbabilityVector> + Sync,
    {
        let prob_vectors = self
            .prob_vectors
            .par_iter()
            .map(&f)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            prob_vectors,
            ..self.clone()
        })
    }
}

/// Diagonal of (⊗C_i) ρ (⊗C_i)† without forming the full product.
fn rotated_probabilities(rho: &DensityMatrix, ids: &[usize]) -> Vec<f64> {
    let group = single_qubit_clifford_group();
    let n = rho.num_qubits();
    let d = rho.dim();
    // Row k of ⊗C_i: entry (k, j) = ∏_q C_q[k_q, j_q].
    let m = rho.matrix();
    let row = |k: usize| -> Vec<C64> {
        (0..d)
            .map(|j| {
                ids.iter().enumerate().fold(C64::new(1.0, 0.0), |acc, (q, &id)| {
                    let kb = (k >> (n - 1 - q)) & 1;
                    let jb = (j >> (n - 1 - q)) & 1;
                    acc * group[id].matrix[(kb, jb)]
                })
            })
            .collect()
    };
    (0..d)
        .map(|k| {
            let u = row(k);
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..d {
                if u[i] == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..d {
                    acc += u[i] * m[(i, j)] * u[j].conj();
                }
            }
            acc.re.max(0.0)
        })
        .collect()
}

/// Rotates, measures, applies readout noise and shot noise per tuple. Shot
/// streams are seeded from `derive_seed(noise.seed, index)`.
pub fn collect_dataset(rho: &DensityMatrix, tuples: &[Vec<usize>], noise: &NoiseConfig) -> Result<RcmDataset> {
    noise.validate()?;
    let n = rho.num_qubits();
    if let Some(t) = tuples.iter().find(|t| t.len() != n || t.iter().any(|&c| c >= N_CLIFFORD_1)) {
        return Err(Error::Scenario(format!("invalid Clifford tuple {t:?} for {n} qubits")));
    }
    if let Some(lam) = &noise.readout_lambda {
        if lam.dim() != rho.dim() {
            return Err(Error::DimensionMismatch {
                expected: rho.dim(),
                actual: lam.dim(),
            });
        }
    }
    let prob_vectors = tuples
        .par_iter()
        .enumerate()
        .map(|(i, ids)| {
            let raw = rotated_probabilities(rho, ids);
            let s: f64 = raw.iter().sum();
            let mut p = ProbabilityVector::new(raw.into_iter().map(|x| x / s).collect())?;
            if let Some(lam) = &noise.readout_lambda {
                p = apply_readout_noise(&p, lam)?;
            }
            if let Some(shots) = noise.n_shot {
                p = sample_shots(&p, shots, derive_seed(noise.seed, i as u64));
            }
            Ok(p)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RcmDataset {
        num_qubits: n,
        clifford_ids: tuples.to_vec(),
        prob_vectors,
        n_shot: noise.n_shot,
        seed: noise.seed,
    })
}

/// Hamming weight of the XOR of all strings.
pub fn hamming_xor_weight(strings: &[&[u8]]) -> Result<u32> {
    let len = strings.first().map_or(0, |s| s.len());
    if strings.iter().any(|s| s.len() != len) {
        return Err(Error::DimensionMismatch {
            expected: len,
            actual: strings.iter().map(|s| s.len()).find(|&l| l != len).unwrap_or(len),
        });
    }
    Ok((0..len)
        .filter(|&i| strings.iter().fold(0u8, |acc, s| acc ^ (s[i] & 1)) == 1)
        .count() as u32)
}

/// (−2)^{−w} for each Hamming weight up to `n`.
fn weights(n: usize) -> Vec<f64> {
    (0..=n).map(|w| (-0.5f64).powi(w as i32)).collect()
}

/// A(x) = Σ_s p(s) p(s ⊕ x).
fn autocorrelation(p: &[f64]) -> Vec<f64> {
    (0..p.len())
        .map(|x| p.iter().enumerate().map(|(s, &ps)| ps * p[s ^ x]).sum())
        .collect()
}

/// d Σ_{s₁,s₂} (−2)^{−|s₁⊕s₂|} p(s₁) p(s₂).
pub fn purity_statistic(p: &[f64]) -> f64 {
    let d = p.len();
    let w = weights(d.trailing_zeros() as usize);
    let a = autocorrelation(p);
    d as f64
        * a.iter()
            .enumerate()
            .map(|(x, &ax)| w[x.count_ones() as usize] * ax)
            .sum::<f64>()
}

/// Σ_{s₁..s₄} (−2)^{−|s₁⊕s₂⊕s₃⊕s₄|} ∏ p(sᵢ), evaluated as Σ_{x,y} w(x⊕y) A(x) A(y).
pub fn stabilizer_purity_statistic(p: &[f64]) -> f64 {
    let d = p.len();
    let w = weights(d.trailing_zeros() as usize);
    let a = autocorrelation(p);
    let mut acc = 0.0;
    for (x, &ax) in a.iter().enumerate() {
        for (y, &ay) in a.iter().enumerate() {
            acc += w[(x ^ y).count_ones() as usize] * ax * ay;
        }
    }
    acc
}

fn per_sample(ds: &RcmDataset, f: impl Fn(&[f64]) -> f64 + Sync) -> Vec<f64> {
    ds.prob_vectors.par_iter().map(|p| f(p.as_slice())).collect()
}

pub fn estimate_purity(ds: &RcmDataset) -> Result<EstimateWithError> {
    EstimateWithError::from_samples(&per_sample(ds, purity_statistic))
}

pub fn estimate_stabilizer_purity(ds: &RcmDataset) -> Result<EstimateWithError> {
    EstimateWithError::from_samples(&per_sample(ds, stabilizer_purity_statistic))
}

/// The three estimates that make up one M₂ measurement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SreEstimate {
    pub sre: EstimateWithError,
    pub purity: EstimateWithError,
    pub stabilizer_purity: EstimateWithError,
}

/// M₂ from the mean purity and stabilizer purity, with the uncorrelated
/// delta-method error (1/ln2)·√(s_W²/(N W̄²) + s_P²/(N P̄²)).
pub fn estimate_sre_components(ds: &RcmDataset) -> Result<SreEstimate> {
    let p = estimate_purity(ds)?;
    let w = estimate_stabilizer_purity(ds)?;
    if !(p.mean > 0.0) || !(w.mean > 0.0) {
        return Err(Error::Undersampled(format!(
            "non-positive mean (purity {}, stabilizer purity {})",
            p.mean, w.mean
        )));
    }
    let n = ds.len() as f64;
    let m2 = sre_from_components(w.mean, p.mean, 1 << ds.num_qubits);
    let rel = w.sample_std.powi(2) / (n * w.mean * w.mean) + p.sample_std.powi(2) / (n * p.mean * p.mean);
    let err = rel.sqrt() / std::f64::consts::LN_2;
    Ok(SreEstimate {
        sre: EstimateWithError::from_error(m2, err, ds.len()),
        purity: p,
        stabilizer_purity: w,
    })
}

pub fn estimate_sre(ds: &RcmDataset) -> Result<EstimateWithError> {
    Ok(estimate_sre_components(ds)?.sre)
}

/// P(s_A) = Σ_{s_B} P(s_A, s_B), kept qubits in increasing order.
pub fn marginalize(p: &ProbabilityVector, keep: &[usize]) -> Result<ProbabilityVector> {
    let n = p.num_qubits();
    let keep = normalize_subset(keep, n)?;
    let mut out = vec![0.0; 1 << keep.len()];
    for (s, &ps) in p.as_slice().iter().enumerate() {
        let k = keep
            .iter()
            .fold(0usize, |acc, &q| (acc << 1) | ((s >> (n - 1 - q)) & 1));
        out[k] += ps;
    }
    Ok(ProbabilityVector::from_vec_unchecked(out))
}

/// Purity statistic on the marginal distribution of the qubits in `keep`.
pub fn estimate_rdm_purity(ds: &RcmDataset, keep: &[usize]) -> Result<EstimateWithError> {
    normalize_subset(keep, ds.num_qubits)?;
    let xs = ds
        .prob_vectors
        .par_iter()
        .map(|p| marginalize(p, keep).map(|m| purity_statistic(m.as_slice())))
        .collect::<Result<Vec<_>>>()?;
    EstimateWithError::from_samples(&xs)
}
