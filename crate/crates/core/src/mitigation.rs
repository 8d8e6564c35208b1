//! Readout calibration and simplex-constrained least-squares mitigation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{sample_counts, CalibrationMatrix, ProbabilityVector};
use crate::rcm::derive_seed;

pub const MAX_ITERATIONS: usize = 100_000;
/// Default stopping tolerance on the largest coordinate change of one step.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Counts from preparing each basis state `i` (row) and measuring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitializationCounts {
    pub counts: Vec<Vec<u64>>,
    pub n_shot: u64,
}

impl InitializationCounts {
    pub fn new(counts: Vec<Vec<u64>>, n_shot: u64) -> Result<Self> {
        let d = counts.len();
        if d == 0 || !d.is_power_of_two() || counts.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidCalibration("counts must be a square 2^N table".into()));
        }
        if n_shot == 0 {
            return Err(Error::InvalidCalibration("zero shots".into()));
        }
        if let Some((i, r)) = counts.iter().enumerate().find(|(_, r)| r.iter().sum::<u64>() != n_shot) {
            return Err(Error::InvalidCalibration(format!(
                "row {i} sums to {} instead of {n_shot}",
                r.iter().sum::<u64>()
            )));
        }
        Ok(Self { counts, n_shot })
    }
}

/// Λ_{ij} = counts[j][i] / n_shot.
pub fn calibration_from_counts(ic: &InitializationCounts) -> Result<CalibrationMatrix> {
    let d = ic.counts.len();
    let n = ic.n_shot as f64;
    CalibrationMatrix::new(
        (0..d)
            .map(|i| (0..d).map(|j| ic.counts[j][i] as f64 / n).collect())
            .collect(),
    )
}

/// Simulated calibration run: `n_shot` preparations of every basis state read
/// through `lambda`.
pub fn simulate_initialization_counts(lambda: &CalibrationMatrix, n_shot: u64, seed: u64) -> InitializationCounts {
    let counts = (0..lambda.dim())
        .map(|j| sample_counts(&lambda.column(j), n_shot, derive_seed(seed, j as u64)))
        .collect();
    InitializationCounts { counts, n_shot }
}

/// Mean of the diagonal of Λ.
pub fn readout_fidelity(lambda: &CalibrationMatrix) -> f64 {
    (0..lambda.dim()).map(|i| lambda.get(i, i)).sum::<f64>() / lambda.dim() as f64
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cum += uk;
        let t = (cum - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

/// Result of the projected-gradient solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MitigationOutcome {
    pub probs: ProbabilityVector,
    pub iterations: usize,
    /// ½‖Λp − q‖² after each iterate, starting from the initial point.
    pub objective_history: Vec<f64>,
}

fn objective(lambda: &CalibrationMatrix, p: &[f64], q: &[f64]) -> f64 {
    0.5 * lambda
        .apply(p)
        .iter()
        .zip(q)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
}

/// Largest eigenvalue of ΛᵀΛ by power iteration.
fn lipschitz(lambda: &CalibrationMatrix) -> f64 {
    let d = lambda.dim();
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut est = 0.0;
    for _ in 0..1000 {
        let w = lambda.apply_transpose(&lambda.apply(&v));
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 1.0;
        }
        v = w.iter().map(|x| x / norm).collect();
        if (norm - est).abs() <= 1e-15 * norm {
            est = norm;
            break;
        }
        est = norm;
    }
    est
}

/// argmin_{p ∈ simplex} ½‖Λp − q‖², by projected gradient with step 1/L.
/// Stops when an iterate moves no coordinate by more than `tol`.
pub fn mitigate_least_squares_traced(
    p_exp: &ProbabilityVector,
    lambda: &CalibrationMatrix,
    tol: f64,
) -> Result<MitigationOutcome> {
    if p_exp.len() != lambda.dim() {
        return Err(Error::DimensionMismatch {
            expected: lambda.dim(),
            actual: p_exp.len(),
        });
    }
    let q = p_exp.as_slice();
    let step = 1.0 / lipschitz(lambda);
    let mut p = project_simplex(q);
    let mut history = vec![objective(lambda, &p, q)];
    let mut last_step = f64::INFINITY;
    for it in 1..=MAX_ITERATIONS {
        let r: Vec<f64> = lambda.apply(&p).iter().zip(q).map(|(a, b)| a - b).collect();
        let g = lambda.apply_transpose(&r);
        let next = project_simplex(&p.iter().zip(&g).map(|(x, gx)| x - step * gx).collect::<Vec<_>>());
        last_step = next
            .iter()
            .zip(&p)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        p = next;
        history.push(objective(lambda, &p, q));
        if last_step <= tol {
            return Ok(MitigationOutcome {
                probs: ProbabilityVector::new(p)?,
                iterations: it,
                objective_history: history,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: MAX_ITERATIONS,
        objective: *history.last().unwrap_or(&f64::NAN),
        last_step,
    })
}

pub fn mitigate_least_squares(
    p_exp: &ProbabilityVector,
    lambda: &CalibrationMatrix,
    tol: f64,
) -> Result<ProbabilityVector> {
    Ok(mitigate_least_squares_traced(p_exp, lambda, tol)?.probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::synth_calibration_matrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pv(v: &[f64]) -> ProbabilityVector {
        ProbabilityVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn calibration_examples() {
        let ic = InitializationCounts::new(vec![vec![100, 0], vec![0, 100]], 100).unwrap();
        assert_eq!(calibration_from_counts(&ic).unwrap(), CalibrationMatrix::identity(1));
        let ic = InitializationCounts::new(vec![vec![4750, 250], vec![250, 4750]], 5000).unwrap();
        let lam = calibration_from_counts(&ic).unwrap();
        assert!(lam.max_abs_diff(&synth_calibration_matrix(&[(0.05, 0.05)], 0.0).unwrap()) < 1e-15);
        assert!(InitializationCounts::new(vec![vec![0, 0], vec![0, 100]], 100).is_err());
        // Asymmetric counts land in the transposed slot.
        let ic = InitializationCounts::new(vec![vec![90, 10], vec![30, 70]], 100).unwrap();
        let lam = calibration_from_counts(&ic).unwrap();
        assert_eq!(lam.get(1, 0), 0.1);
        assert_eq!(lam.get(0, 1), 0.3);
    }

    #[test]
    fn simulated_counts_are_consistent() {
        let lam = synth_calibration_matrix(&[(0.04, 0.04), (0.04, 0.04)], 0.0).unwrap();
        let ic = simulate_initialization_counts(&lam, 5000, 1);
        let est = calibration_from_counts(&InitializationCounts::new(ic.counts.clone(), 5000).unwrap()).unwrap();
        assert!(est.max_abs_diff(&lam) < 0.02);
    }

    #[test]
    fn fidelity_examples() {
        assert_eq!(readout_fidelity(&CalibrationMatrix::identity(2)), 1.0);
        let l1 = synth_calibration_matrix(&[(0.05, 0.05)], 0.0).unwrap();
        assert!((readout_fidelity(&l1) - 0.95).abs() < 1e-15);
        let l2 = synth_calibration_matrix(&[(0.04, 0.04), (0.04, 0.04)], 0.0).unwrap();
        assert!((readout_fidelity(&l2) - 0.9216).abs() < 1e-12);
    }

    #[test]
    fn simplex_projection() {
        assert_eq!(project_simplex(&[0.2, 0.8]), vec![0.2, 0.8]);
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        let p = project_simplex(&[0.5, 0.5, 0.5, -1.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(p.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn identity_is_a_noop() {
        let p = pv(&[0.1, 0.2, 0.3, 0.4]);
        let out = mitigate_least_squares(&p, &CalibrationMatrix::identity(2), DEFAULT_TOL).unwrap();
        assert!(out.max_abs_diff(&p) < 1e-12);
    }

    #[test]
    fn exact_recovery() {
        let lam = synth_calibration_matrix(&[(0.05, 0.05), (0.05, 0.05)], 0.0).unwrap();
        let truth = pv(&[0.5, 0.0, 0.0, 0.5]);
        let q = pv(&lam.apply(truth.as_slice()));
        let out = mitigate_least_squares(&q, &lam, DEFAULT_TOL).unwrap();
        assert!(out.max_abs_diff(&truth) < 1e-9, "{out:?}");
    }

    #[test]
    fn infeasible_input_stays_on_simplex() {
        let lam = synth_calibration_matrix(&[(0.1, 0.1)], 0.0).unwrap();
        // The naive inverse of (0.97, 0.03) has a negative second entry.
        let q = pv(&[0.97, 0.03]);
        let out = mitigate_least_squares(&q, &lam, DEFAULT_TOL).unwrap();
        assert!(out.as_slice().iter().all(|&x| x >= 0.0));
        assert!((out.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((out.as_slice()[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn objective_is_monotone_and_below_vertices() {
        let lam = synth_calibration_matrix(&[(0.08, 0.03), (0.02, 0.06)], 0.05).unwrap();
        let q = pv(&[0.05, 0.6, 0.05, 0.3]);
        let out = mitigate_least_squares_traced(&q, &lam, DEFAULT_TOL).unwrap();
        for w in out.objective_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "{w:?}");
        }
        let f = *out.objective_history.last().unwrap();
        for v in 0..4 {
            let mut e = vec![0.0; 4];
            e[v] = 1.0;
            assert!(f <= objective(&lam, &e, q.as_slice()) + 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            mitigate_least_squares(&pv(&[1.0, 0.0]), &CalibrationMatrix::identity(2), DEFAULT_TOL),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn random_simplex(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..d).map(|_| rng.random::<f64>().powi(2)).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn roundtrip_recovery(seed in any::<u64>(), n in 1usize..=3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let eps: Vec<(f64, f64)> = (0..n).map(|_| (rng.random::<f64>() * 0.15, rng.random::<f64>() * 0.15)).collect();
            let lam = synth_calibration_matrix(&eps, 0.0).unwrap();
            let truth = random_simplex(&mut rng, 1 << n);
            let q = pv(&lam.apply(&truth));
            let out = mitigate_least_squares(&q, &lam, DEFAULT_TOL).unwrap();
            prop_assert!(out.max_abs_diff(&pv(&truth)) < 1e-8);
        }

        #[test]
        fn idempotent_and_feasible(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let lam = synth_calibration_matrix(&[(0.05, 0.07), (0.03, 0.04)], 0.02).unwrap();
            // Adversarial: a sharply peaked vector that no noisy distribution produces.
            let mut q = vec![0.0; 4];
            q[rng.random_range(0..4)] = 1.0;
            let once = mitigate_least_squares(&pv(&q), &lam, DEFAULT_TOL).unwrap();
            prop_assert!(once.as_slice().iter().all(|&x| x >= 0.0));
            prop_assert!((once.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let first = once.clone();
            let again = mitigate_least_squares(&first, &CalibrationMatrix::identity(2), DEFAULT_TOL).unwrap();
            prop_assert!(again.max_abs_diff(&first) < 1e-9);
            let r1 = mitigate_least_squares(&pv(&q), &lam, DEFAULT_TOL).unwrap();
            prop_assert!(r1.max_abs_diff(&once) < 1e-12);
        }
    }
}
