//! Shared fixtures for the criterion benchmarks.

use nlmagic::circuits::{paper_state, run_circuit, StateId};
use nlmagic::linalg::DensityMatrix;
use nlmagic::noise::{synth_calibration_matrix, CalibrationMatrix, NoiseConfig};
use nlmagic::rcm::{collect_dataset, sample_local_cliffords, RcmDataset};

/// Named state after global depolarizing with survival `p_dep` per CZ.
pub fn noisy_state(id: &StateId, p_dep: f64) -> DensityMatrix {
    run_circuit(
        &paper_state(id),
        &NoiseConfig {
            p_dep_cz: p_dep,
            ..NoiseConfig::noiseless()
        },
    )
    .expect("catalogue states are valid")
}

pub fn readout(num_qubits: usize, eps: f64) -> CalibrationMatrix {
    synth_calibration_matrix(&vec![(eps, eps); num_qubits], 0.0).expect("eps is in range")
}

/// Sampled dataset with readout noise and shot noise.
pub fn dataset(rho: &DensityMatrix, n_rand: usize, n_shot: u64, seed: u64) -> RcmDataset {
    let tuples = sample_local_cliffords(rho.num_qubits(), n_rand, seed).expect("n_rand > 0");
    let noise = NoiseConfig {
        p_dep_cz: 1.0,
        readout_lambda: Some(readout(rho.num_qubits(), 0.04)),
        n_shot: Some(n_shot),
        seed,
    };
    collect_dataset(rho, &tuples, &noise).expect("fixture inputs are consistent")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_consistent() {
        let rho = noisy_state(&StateId::M, 0.96);
        let ds = dataset(&rho, 8, 100, 1);
        assert_eq!(ds.len(), 8);
        assert_eq!(readout(2, 0.04).dim(), 4);
    }
}
