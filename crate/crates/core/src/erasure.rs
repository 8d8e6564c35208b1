//! Local-magic erasure: residual magic over local Euler rotations.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuits::{gate_matrix, GateSpec};
use crate::error::{Error, Result};
use crate::linalg::{tensor, ComplexMatrix, DensityMatrix};
use crate::magic::sre_exact;

/// U_A = Rz(α)Ry(β)Rz(γ), U_B = Rz(δ)Ry(η)Rz(φ).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErasureAngles {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub eta: f64,
    pub phi: f64,
}

fn wrap(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

impl ErasureAngles {
    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            alpha: wrap(a[0]),
            beta: wrap(a[1]),
            gamma: wrap(a[2]),
            delta: wrap(a[3]),
            eta: wrap(a[4]),
            phi: wrap(a[5]),
        }
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.alpha, self.beta, self.gamma, self.delta, self.eta, self.phi]
    }

    /// Only the Rz angles of the Fig. 4 style sweep.
    pub fn rz_pair(gamma: f64, phi: f64) -> Self {
        Self::from_array([0.0, 0.0, gamma, 0.0, 0.0, phi])
    }

    pub fn unitary(&self) -> ComplexMatrix {
        let euler = |a: f64, b: f64, c: f64| {
            gate_matrix(&GateSpec::rz(0, a))
                .matmul(&gate_matrix(&GateSpec::ry(0, b)))
                .matmul(&gate_matrix(&GateSpec::rz(0, c)))
        };
        tensor(
            &euler(self.alpha, self.beta, self.gamma),
            &euler(self.delta, self.eta, self.phi),
        )
    }
}

/// M₂ of (U_A ⊗ U_B) ρ (U_A ⊗ U_B)†.
pub fn erasure_objective(rho: &DensityMatrix, a: &ErasureAngles) -> f64 {
    sre_exact(&rho.evolve(&a.unitary()))
}

fn check_two_qubit(rho: &DensityMatrix) -> Result<()> {
    if rho.num_qubits() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            actual: rho.dim(),
        });
    }
    Ok(())
}

/// Coarse search space used before simplex refinement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridChoice {
    /// Real grid for real-amplitude inputs, full grid otherwise.
    Auto,
    /// β and η in 15° steps, other angles zero.
    Real15,
    /// All six angles in 45° steps.
    Full45,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptConfig {
    pub tol: f64,
    /// Evaluation budget for the refinement stage.
    pub max_evals: usize,
    /// Number of best grid points used as refinement starts.
    pub starts: usize,
    pub grid: GridChoice,
    pub seed: u64,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_evals: 5000,
            starts: 4,
            grid: GridChoice::Auto,
            seed: 0,
        }
    }
}

/// Residual-magic map over a (γ, φ) grid; `values[i][j]` is at (gamma[i], phi[j]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Landscape {
    pub gamma: Vec<f64>,
    pub phi: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl Landscape {
    /// `gamma_deg,phi_deg,m2` rows.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["gamma_deg", "phi_deg", "m2"])?;
        for (i, g) in self.gamma.iter().enumerate() {
            for (j, p) in self.phi.iter().enumerate() {
                w.write_record([
                    format!("{:.6}", g.to_degrees()),
                    format!("{:.6}", p.to_degrees()),
                    format!("{:.12}", self.values[i][j]),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErasureResult {
    pub angles: ErasureAngles,
    pub residual_m2: f64,
    pub evaluations: usize,
    pub converged: bool,
    pub landscape: Option<Landscape>,
}

/// Evaluates the Rz(γ) ⊗ Rz(φ) residual on every grid point.
pub fn sweep_landscape(rho: &DensityMatrix, gamma_grid: &[f64], phi_grid: &[f64]) -> Result<ErasureResult> {
    check_two_qubit(rho)?;
    if gamma_grid.is_empty() || phi_grid.is_empty() {
        return Err(Error::Scenario("empty sweep grid".into()));
    }
    let values: Vec<Vec<f64>> = gamma_grid
        .par_iter()
        .map(|&g| {
            phi_grid
                .iter()
                .map(|&p| erasure_objective(rho, &ErasureAngles::rz_pair(g, p)))
                .collect()
        })
        .collect();
    let mut best = (0, 0);
    for (i, row) in values.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v < values[best.0][best.1] {
                best = (i, j);
            }
        }
    }
    Ok(ErasureResult {
        angles: ErasureAngles::rz_pair(gamma_grid[best.0], phi_grid[best.1]),
        residual_m2: values[best.0][best.1],
        evaluations: gamma_grid.len() * phi_grid.len(),
        converged: true,
        landscape: Some(Landscape {
            gamma: gamma_grid.to_vec(),
            phi: phi_grid.to_vec(),
            values,
        }),
    })
}

/// `n` equally spaced angles from 0 to 2π inclusive.
pub fn degree_grid(step_deg: f64) -> Vec<f64> {
    let n = (360.0 / step_deg).round() as usize;
    (0..=n).map(|k| (k as f64 * step_deg).to_radians()).collect()
}

fn coarse_points(grid: GridChoice) -> (Vec<[f64; 6]>, f64) {
    match grid {
        GridChoice::Real15 | GridChoice::Auto => {
            let step = 15f64.to_radians();
            let pts = (0..24)
                .flat_map(|i| (0..24).map(move |j| [0.0, i as f64 * step, 0.0, 0.0, j as f64 * step, 0.0]))
                .collect();
            (pts, step)
        }
        GridChoice::Full45 => {
            let step = 45f64.to_radians();
            let pts = (0..8usize.pow(6))
                .map(|mut k| {
                    let mut a = [0.0; 6];
                    for slot in a.iter_mut().rev() {
                        *slot = (k % 8) as f64 * step;
                        k /= 8;
                    }
                    a
                })
                .collect();
            (pts, step)
        }
    }
}

struct NmOutcome {
    x: [f64; 6],
    f: f64,
    evals: usize,
    converged: bool,
}

/// Nelder–Mead on R⁶ with standard coefficients. Stops when the spread of
/// simplex values falls below `tol` or the budget runs out.
fn nelder_mead(f: &impl Fn(&[f64; 6]) -> f64, x0: [f64; 6], scale: f64, dirs: &[f64; 6], tol: f64, budget: usize) -> NmOutcome {
    let mut simplex: Vec<([f64; 6], f64)> = Vec::with_capacity(7);
    simplex.push((x0, f(&x0)));
    for k in 0..6 {
        let mut x = x0;
        x[k] += scale * dirs[k];
        simplex.push((x, f(&x)));
    }
    let mut evals = 7;
    let mut converged = false;
    while evals < budget {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[6].1 - simplex[0].1;
        let diam = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread <= tol && diam <= tol.sqrt() {
            converged = true;
            break;
        }
        let mut centroid = [0.0; 6];
        for (x, _) in &simplex[..6] {
            for k in 0..6 {
                centroid[k] += x[k] / 6.0;
            }
        }
        let along = |t: f64| {
            let mut y = [0.0; 6];
            for k in 0..6 {
                y[k] = centroid[k] + t * (simplex[6].0[k] - centroid[k]);
            }
            y
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = f(&xe);
            evals += 1;
            simplex[6] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[5].1 {
            simplex[6] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[6].1 {
                let x = along(-0.5);
                (x, f(&x))
            } else {
                let x = along(0.5);
                (x, f(&x))
            };
            evals += 1;
            if fc < simplex[6].1.min(fr) {
                simplex[6] = (xc, fc);
            } else {
                let best = simplex[0].0;
                for (x, fx) in simplex.iter_mut().skip(1) {
                    for k in 0..6 {
                        x[k] = best[k] + 0.5 * (x[k] - best[k]);
                    }
                    *fx = f(x);
                }
                evals += 6;
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    NmOutcome {
        x: simplex[0].0,
        f: simplex[0].1,
        evals,
        converged,
    }
}

/// Coarse grid followed by restarted Nelder–Mead from the best grid points.
pub fn optimize_erasure(rho: &DensityMatrix, cfg: &OptConfig) -> Result<ErasureResult> {
    check_two_qubit(rho)?;
    let grid = match cfg.grid {
        GridChoice::Auto if rho.is_real(1e-12) => GridChoice::Real15,
        GridChoice::Auto => GridChoice::Full45,
        g => g,
    };
    let f = |a: &[f64; 6]| erasure_objective(rho, &ErasureAngles::from_array(*a));
    let (points, step) = coarse_points(grid);
    let values: Vec<f64> = points.par_iter().map(f).collect();
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));

    let mut evaluations = points.len();
    let mut best_x = points[order[0]];
    let mut best_f = values[order[0]];
    let mut converged = false;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut used = 0usize;
    let per_start = cfg.max_evals / cfg.starts.max(1);
    for &start in order.iter().take(cfg.starts.max(1)) {
        let mut x = points[start];
        let mut fx = values[start];
        let mut scale = step / 2.0;
        let limit = (used + per_start).min(cfg.max_evals);
        loop {
            let dirs: [f64; 6] = std::array::from_fn(|_| if rng.random::<bool>() { 1.0 } else { -1.0 });
            let out = nelder_mead(&f, x, scale, &dirs, cfg.tol, limit - used);
            used += out.evals;
            let improved = out.f < fx - cfg.tol;
            if out.f < fx {
                x = out.x;
                fx = out.f;
            }
            // A converged run that no longer improves is accepted; otherwise restart smaller.
            if (out.converged && !improved) || used + 7 >= limit {
                converged |= out.converged;
                break;
            }
            scale = (scale / 2.0).max(1e-3);
        }
        if fx < best_f {
            best_f = fx;
            best_x = x;
        }
    }
    evaluations += used;
    Ok(ErasureResult {
        angles: ErasureAngles::from_array(best_x),
        residual_m2: best_f,
        evaluations,
        converged,
        landscape: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{paper_state, run_circuit, StateId, M_ERASURE_PHI};
    use crate::magic::{nonlocal_magic_schmidt, schmidt_spectrum};
    use crate::noise::NoiseConfig;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_8};

    const LOG43: f64 = 0.415_037_499_278_843_8;

    fn ideal(id: StateId) -> DensityMatrix {
        run_circuit(&paper_state(&id), &NoiseConfig::noiseless()).unwrap()
    }

    #[test]
    fn identity_angles() {
        let rho = ideal(StateId::LM);
        assert_abs_diff_eq!(erasure_objective(&rho, &ErasureAngles::default()), sre_exact(&rho), epsilon = 1e-12);
    }

    #[test]
    fn t_dagger_erases_lm() {
        let a = ErasureAngles::from_array([0.0, 0.0, 0.0, 0.0, 0.0, 7.0 * FRAC_PI_4]);
        assert!(erasure_objective(&ideal(StateId::LM), &a) < 1e-10);
        // The same rotation on qubit 0 works too, since the state is symmetric.
        let a = ErasureAngles::from_array([0.0, 0.0, 7.0 * FRAC_PI_4, 0.0, 0.0, 0.0]);
        assert!(erasure_objective(&ideal(StateId::LM), &a) < 1e-10);
    }

    #[test]
    fn m_state_partial_erasure() {
        let a = ErasureAngles::rz_pair(0.0, M_ERASURE_PHI);
        let v = erasure_objective(&ideal(StateId::M), &a);
        assert_abs_diff_eq!(v, sre_exact(&ideal(StateId::MErased)), epsilon = 1e-12);
        assert!((v - 0.192_645).abs() < 1e-3, "{v}");
    }

    #[test]
    fn angles_wrap() {
        let a = ErasureAngles::from_array([-0.1, TAU, 7.0, 0.0, 1.0, -TAU]);
        for v in a.to_array() {
            assert!((0.0..TAU).contains(&v));
        }
    }

    #[test]
    fn optimizer_examples() {
        let cfg = OptConfig::default();
        let lm = optimize_erasure(&ideal(StateId::LM), &cfg).unwrap();
        assert!(lm.residual_m2 < 1e-6, "{lm:?}");
        let nlm = optimize_erasure(&ideal(StateId::NLM { theta: FRAC_PI_4 }), &cfg).unwrap();
        assert_abs_diff_eq!(nlm.residual_m2, LOG43, epsilon = 1e-6);
        let m = ideal(StateId::M);
        let target = nonlocal_magic_schmidt(schmidt_spectrum(&m).unwrap().lambda).unwrap();
        let r = optimize_erasure(&m, &cfg).unwrap();
        assert_abs_diff_eq!(r.residual_m2, target, epsilon = 1e-6);
    }

    #[test]
    fn optimizer_is_deterministic() {
        let rho = ideal(StateId::Fig4 { gamma: 0.3, phi: 1.1 });
        let cfg = OptConfig { seed: 9, ..OptConfig::default() };
        assert_eq!(optimize_erasure(&rho, &cfg).unwrap(), optimize_erasure(&rho, &cfg).unwrap());
    }

    #[test]
    fn optimizer_beats_sweep() {
        let rho = ideal(StateId::Fig4 { gamma: 0.0, phi: 0.0 });
        let grid = degree_grid(15.0);
        let sweep = sweep_landscape(&rho, &grid, &grid).unwrap();
        let opt = optimize_erasure(&rho, &OptConfig::default()).unwrap();
        assert!(opt.residual_m2 <= sweep.residual_m2 + 1e-12);
    }

    #[test]
    fn sweep_stabilizer_and_periodic() {
        let grid = degree_grid(30.0);
        let bell = sweep_landscape(&ideal(StateId::Psi4), &[0.0], &[0.0]).unwrap();
        assert!(bell.residual_m2 < 1e-10);
        let zero = sweep_landscape(&DensityMatrix::basis_state(2, 0), &grid, &grid).unwrap();
        let land = zero.landscape.unwrap();
        assert!(land.values.iter().flatten().all(|&v| v < 1e-10));
        let m = sweep_landscape(&ideal(StateId::M), &grid, &grid).unwrap().landscape.unwrap();
        let last = grid.len() - 1;
        for i in 0..grid.len() {
            assert_abs_diff_eq!(m.values[i][0], m.values[i][last], epsilon = 1e-10);
            assert_abs_diff_eq!(m.values[0][i], m.values[last][i], epsilon = 1e-10);
        }
        assert!(sweep_landscape(&ideal(StateId::M), &[], &grid).is_err());
    }

    #[test]
    fn fig4_noise_free_minimum() {
        let rho = ideal(StateId::Fig4 { gamma: 0.0, phi: 0.0 });
        let grid = degree_grid(7.5);
        let r = sweep_landscape(&rho, &grid, &grid).unwrap();
        assert_abs_diff_eq!(r.residual_m2, crate::magic::nonlocal_magic_theta(FRAC_PI_8), epsilon = 1e-9);
        let csv = r.landscape.unwrap().to_csv().unwrap();
        assert!(csv.starts_with("gamma_deg,phi_deg,m2\n"));
        assert_eq!(csv.lines().count(), 1 + grid.len() * grid.len());
    }
}
