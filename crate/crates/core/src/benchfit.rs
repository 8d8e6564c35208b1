//! Randomized-benchmarking decay fits and derived fidelity figures.

use std::io::Read;

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical gates per average Clifford.
pub const GATES_PER_CLIFFORD: f64 = 1.875;
pub const MAX_FIT_ITERATIONS: usize = 200;

/// Survival of |0⟩ against sequence length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    pub n_cliffords: Vec<u64>,
    pub survival: Vec<f64>,
}

impl DecayCurve {
    pub fn new(n_cliffords: Vec<u64>, survival: Vec<f64>) -> Result<Self> {
        if n_cliffords.len() != survival.len() {
            return Err(Error::DimensionMismatch {
                expected: n_cliffords.len(),
                actual: survival.len(),
            });
        }
        if n_cliffords.len() < 4 {
            return Err(Error::FitFailure(format!("{} points; need at least 4", n_cliffords.len())));
        }
        if n_cliffords.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::FitFailure("sequence lengths must be strictly increasing".into()));
        }
        if let Some(s) = survival.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::FitFailure(format!("survival {s} outside [0, 1]")));
        }
        Ok(Self {
            n_cliffords,
            survival,
        })
    }

    /// Two numeric columns (length, survival); a non-numeric first row is
    /// treated as a header.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let (mut n, mut s) = (Vec::new(), Vec::new());
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parsed = (rec.get(0).map(str::parse::<u64>), rec.get(1).map(str::parse::<f64>));
            match parsed {
                (Some(Ok(a)), Some(Ok(b))) => {
                    n.push(a);
                    s.push(b);
                }
                _ if row == 0 => continue,
                _ => return Err(Error::FitFailure(format!("malformed CSV row {}", row + 1))),
            }
        }
        Self::new(n, s)
    }
}

/// A·p^N + B.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub a: f64,
    pub p: f64,
    pub b: f64,
    pub residual_rms: f64,
}

impl DecayFit {
    pub fn model(&self, n: f64) -> f64 {
        self.a * self.p.powf(n) + self.b
    }
}

fn residuals(x: &Vector3<f64>, n: &[f64], y: &[f64]) -> Vec<f64> {
    n.iter()
        .zip(y)
        .map(|(&ni, &yi)| x[0] * x[1].powf(ni) + x[2] - yi)
        .collect()
}

fn cost(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Log-linear start followed by damped Gauss–Newton with the analytic Jacobian.
pub fn fit_exp_decay(curve: &DecayCurve) -> Result<DecayFit> {
    let n: Vec<f64> = curve.n_cliffords.iter().map(|&v| v as f64).collect();
    let y = &curve.survival;
    let (lo, hi) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if hi - lo <= 1e-12 {
        return Err(Error::Unidentifiable);
    }
    // Orientation: decaying data sits above its asymptote.
    let decaying = y[0] >= y[y.len() - 1];
    let margin = 1e-3 * (hi - lo);
    let b0 = if decaying { lo - margin } else { hi + margin };
    let ly: Vec<f64> = y.iter().map(|&v| ((v - b0).abs()).ln()).collect();
    let mean_n = n.iter().sum::<f64>() / n.len() as f64;
    let mean_l = ly.iter().sum::<f64>() / n.len() as f64;
    let sxx: f64 = n.iter().map(|v| (v - mean_n).powi(2)).sum();
    let sxy: f64 = n.iter().zip(&ly).map(|(a, b)| (a - mean_n) * (b - mean_l)).sum();
    let slope = sxy / sxx;
    let p0 = slope.exp().clamp(1e-6, 1.0);
    let a0 = (mean_l - slope * mean_n).exp() * if decaying { 1.0 } else { -1.0 };
    let mut x = Vector3::new(a0, p0, b0);
    let mut r = residuals(&x, &n, y);
    let mut c = cost(&r);
    let mut mu = 1e-3;
    for _ in 0..MAX_FIT_ITERATIONS {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (i, &ni) in n.iter().enumerate() {
            let pn = x[1].powf(ni);
            let dp = if ni == 0.0 { 0.0 } else { x[0] * ni * x[1].powf(ni - 1.0) };
            let j = Vector3::new(pn, dp, 1.0);
            jtj += j * j.transpose();
            jtr += j * r[i];
        }
        let mut accepted = false;
        for _ in 0..30 {
            let mut damped = jtj;
            for k in 0..3 {
                damped[(k, k)] *= 1.0 + mu;
            }
            let Some(step) = damped.lu().solve(&(-jtr)) else {
                mu *= 10.0;
                continue;
            };
            let trial = x + step;
            if !(trial[1] > 0.0) {
                mu *= 10.0;
                continue;
            }
            let rt = residuals(&trial, &n, y);
            let ct = cost(&rt);
            if ct <= c {
                let small = step.amax() <= 1e-14 * (1.0 + x.amax());
                x = trial;
                r = rt;
                let dc = c - ct;
                c = ct;
                mu = (mu / 10.0).max(1e-12);
                accepted = true;
                if small || dc <= 1e-30 {
                    return finish(x, c, n.len());
                }
                break;
            }
            mu *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    finish(x, c, n.len())
}

fn finish(x: Vector3<f64>, c: f64, m: usize) -> Result<DecayFit> {
    if !(x[1] > 0.0 && x[1] <= 1.0 + 1e-12) || !x.iter().all(|v| v.is_finite()) {
        return Err(Error::FitFailure(format!("decay parameter p = {} outside (0, 1]", x[1])));
    }
    Ok(DecayFit {
        a: x[0],
        p: x[1].min(1.0),
        b: x[2],
        residual_rms: (c / m as f64).sqrt(),
    })
}

/// Deterministic noisy samples of A·p^N + B, clamped to [0, 1].
pub fn synth_rb_curve(a: f64, p: f64, b: f64, points: &[u64], noise_sigma: f64, seed: u64) -> Result<DecayCurve> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Domain {
            name: "p",
            value: p,
            domain: "(0, 1]",
        });
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::Domain {
            name: "noise_sigma",
            value: noise_sigma,
            domain: "[0, inf)",
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise_sigma).expect("sigma checked");
    let survival = points
        .iter()
        .map(|&n| {
            let noise = if noise_sigma > 0.0 { normal.sample(&mut rng) } else { 0.0 };
            (a * p.powf(n as f64) + b + noise).clamp(0.0, 1.0)
        })
        .collect();
    DecayCurve::new(points.to_vec(), survival)
}

fn check_p(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value: v,
            domain: "(0, 1]",
        })
    }
}

fn check_d(d: u32) -> Result<()> {
    if d >= 2 {
        Ok(())
    } else {
        Err(Error::Domain {
            name: "d",
            value: d as f64,
            domain: ">= 2",
        })
    }
}

/// (F_cl, F_avg) with F_cl = 1 − ((d−1)/d)(1−p) and F_avg = F_cl^{1/1.875}.
pub fn avg_gate_fidelity(p: f64, d: u32) -> Result<(f64, f64)> {
    check_p("p", p)?;
    check_d(d)?;
    let d = d as f64;
    let f_cl = 1.0 - (d - 1.0) / d * (1.0 - p);
    Ok((f_cl, f_cl.powf(1.0 / GATES_PER_CLIFFORD)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrbFidelity {
    pub fidelity: f64,
    /// Set when p1 > p0, which can only come from statistical fluctuation.
    pub exceeds_one: bool,
}

/// F = 1 − ((d−1)/d)(1 − p1/p0).
pub fn irb_fidelity(p0: f64, p1: f64, d: u32) -> Result<IrbFidelity> {
    check_p("p0", p0)?;
    if !(0.0..=1.0).contains(&p1) {
        return Err(Error::Domain {
            name: "p1",
            value: p1,
            domain: "[0, 1]",
        });
    }
    check_d(d)?;
    let d = d as f64;
    let fidelity = 1.0 - (d - 1.0) / d * (1.0 - p1 / p0);
    Ok(IrbFidelity {
        fidelity,
        exceeds_one: fidelity > 1.0,
    })
}

/// (A_jj / A_ij)·(t_jj / t_ij), as a fraction.
pub fn mw_crosstalk(a_jj: f64, t_jj: f64, a_ij: f64, t_ij: f64) -> Result<f64> {
    for (name, v) in [("a_ij", a_ij), ("t_ij", t_ij)] {
        if !(v > 0.0) {
            return Err(Error::Domain {
                name,
                value: v,
                domain: "(0, inf)",
            });
        }
    }
    Ok((a_jj / a_ij) * (t_jj / t_ij))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid() -> Vec<u64> {
        (1..=200).step_by(10).collect()
    }

    #[test]
    fn noiseless_roundtrip() {
        let c = synth_rb_curve(0.5, 0.99, 0.5, &grid(), 0.0, 0).unwrap();
        let f = fit_exp_decay(&c).unwrap();
        assert_abs_diff_eq!(f.a, 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(f.p, 0.99, epsilon = 1e-9);
        assert_abs_diff_eq!(f.b, 0.5, epsilon = 1e-9);
        assert!(f.residual_rms < 1e-9);
    }

    #[test]
    fn rising_curve() {
        let c = synth_rb_curve(-0.4, 0.97, 0.9, &grid(), 0.0, 0).unwrap();
        let f = fit_exp_decay(&c).unwrap();
        assert_abs_diff_eq!(f.p, 0.97, epsilon = 1e-9);
        assert_abs_diff_eq!(f.a, -0.4, epsilon = 1e-9);
    }

    #[test]
    fn constant_is_unidentifiable() {
        let c = DecayCurve::new(vec![1, 2, 3, 4], vec![0.7; 4]).unwrap();
        assert!(matches!(fit_exp_decay(&c), Err(Error::Unidentifiable)));
    }

    #[test]
    fn curve_validation() {
        assert!(DecayCurve::new(vec![1, 2, 3], vec![0.9, 0.8, 0.7]).is_err());
        assert!(DecayCurve::new(vec![1, 2, 2, 4], vec![0.9, 0.8, 0.7, 0.6]).is_err());
        assert!(DecayCurve::new(vec![1, 2, 3, 4], vec![0.9, 0.8, 1.7, 0.6]).is_err());
    }

    #[test]
    fn csv_parsing() {
        let text = "N,survival\n1,0.99\n11,0.95\n21,0.91\n31,0.88\n";
        let c = DecayCurve::from_csv(text.as_bytes()).unwrap();
        assert_eq!(c.n_cliffords, vec![1, 11, 21, 31]);
        let bad = "1,0.99\nx,0.95\n21,0.91\n31,0.88\n";
        assert!(DecayCurve::from_csv(bad.as_bytes()).is_err());
    }

    #[test]
    fn synth_is_deterministic_and_clamped() {
        let a = synth_rb_curve(0.5, 0.99, 0.5, &grid(), 0.01, 7).unwrap();
        assert_eq!(a, synth_rb_curve(0.5, 0.99, 0.5, &grid(), 0.01, 7).unwrap());
        let c = synth_rb_curve(0.6, 0.999, 0.45, &grid(), 0.5, 1).unwrap();
        assert!(c.survival.iter().all(|s| (0.0..=1.0).contains(s)));
    }

    #[test]
    fn gate_fidelity_examples() {
        assert_eq!(avg_gate_fidelity(1.0, 2).unwrap(), (1.0, 1.0));
        let (fcl, favg) = avg_gate_fidelity(0.9962, 2).unwrap();
        assert_abs_diff_eq!(fcl, 0.9981, epsilon = 1e-12);
        assert_abs_diff_eq!(favg, 0.99899, epsilon = 1e-5);
        let mut prev = 0.0;
        for k in 1..=100 {
            let (_, f) = avg_gate_fidelity(k as f64 / 100.0, 2).unwrap();
            assert!(f > prev);
            prev = f;
        }
        assert!(avg_gate_fidelity(0.0, 2).is_err());
        assert!(avg_gate_fidelity(0.5, 1).is_err());
    }

    #[test]
    fn irb_examples() {
        assert_eq!(irb_fidelity(0.97, 0.97, 4).unwrap().fidelity, 1.0);
        assert_abs_diff_eq!(irb_fidelity(0.986, 0.96, 4).unwrap().fidelity, 0.98022, epsilon = 1e-5);
        assert_abs_diff_eq!(irb_fidelity(0.9, 0.0, 4).unwrap().fidelity, 0.25, epsilon = 1e-15);
        assert!(irb_fidelity(0.9, 0.95, 4).unwrap().exceeds_one);
        assert!(irb_fidelity(0.0, 0.5, 4).is_err());
    }

    #[test]
    fn crosstalk_examples() {
        assert_eq!(mw_crosstalk(2.0, 30.0, 2.0, 30.0).unwrap(), 1.0);
        assert_abs_diff_eq!(mw_crosstalk(0.1, 60.0, 50.0, 120.0).unwrap(), 0.001, epsilon = 1e-15);
        let c1 = mw_crosstalk(0.3, 40.0, 10.0, 80.0).unwrap();
        let c2 = mw_crosstalk(0.3, 40.0, 20.0, 80.0).unwrap();
        assert_abs_diff_eq!(c2, c1 / 2.0, epsilon = 1e-15);
        assert!(mw_crosstalk(0.1, 60.0, 0.0, 120.0).is_err());
    }

    proptest! {
        #[test]
        fn irb_is_scale_invariant(p0 in 0.5f64..1.0, ratio in 0.5f64..1.0, c in 0.01f64..1.0) {
            let p1 = p0 * ratio;
            let a = irb_fidelity(p0, p1, 4).unwrap().fidelity;
            let b = irb_fidelity(p0 * c, p1 * c, 4).unwrap().fidelity;
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn noiseless_fit_recovers(a in 0.2f64..0.5, p in 0.95f64..0.999, b in 0.3f64..0.5) {
            let c = synth_rb_curve(a, p, b, &grid(), 0.0, 0).unwrap();
            let f = fit_exp_decay(&c).unwrap();
            prop_assert!((f.p - p).abs() < 1e-8);
            prop_assert!((f.a + f.b - (a + b)).abs() < 1e-8);
        }
    }
}
