//! Scenario files, the end-to-end estimation pipeline and reproduction reports.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_8;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::circuits::{paper_state, run_circuit, Circuit, GateKind, GateSpec, StateId};
use crate::erasure::{degree_grid, sweep_landscape, Landscape};
use crate::error::{Error, Result};
use crate::linalg::{partial_trace, purity, DensityMatrix};
use crate::magic::{
    nonlocal_magic_noisy, nonlocal_magic_schmidt, nonlocal_magic_theta, noisy_rdm_purity, schmidt_spectrum,
    sre_exact, sre_nlm_depolarized, stabilizer_purity_exact,
};
use crate::mitigation::{calibration_from_counts, mitigate_least_squares, simulate_initialization_counts, DEFAULT_TOL};
use crate::noise::{synth_calibration_matrix, CalibrationMatrix, NoiseConfig};
use crate::rcm::{
    collect_dataset, derive_seed, estimate_purity, estimate_rdm_purity, estimate_sre_components,
    estimate_stabilizer_purity, exhaustive_local_cliffords, sample_local_cliffords, RcmDataset,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_N_RAND: usize = 400;
pub const DEFAULT_N_SHOT: u64 = 5000;

/// Two-qubit purity the Table 1 noise level is tuned to.
pub const TABLE1_TARGET_PURITY: f64 = 0.94;
pub const TABLE1_PURITY_TOL: f64 = 0.02;
pub const TABLE1_M2_TOL: f64 = 0.05;
/// Two-decimal anchors versus the exact noisy oracle.
pub const TABLE1_ORACLE_TOL: f64 = 0.01;

/// Fig. 3 default: survival matching a 98% CZ fidelity, p = 1 − (4/3)(1 − F).
pub const FIG3_DEFAULT_P_DEP: f64 = 1.0 - 4.0 / 3.0 * 0.02;

pub const FIG4_ANCHOR: f64 = 0.29;
pub const FIG4_ANCHOR_TOL: f64 = 0.01;
pub const FIG4_STEP_DEG: f64 = 7.5;
/// Survival probability fitted once so the 7.5° landscape minimum is 0.29.
/// `fit_fig4_p_dep` re-derives it.
pub const FIG4_P_DEP: f64 = 0.949_001_771_671_326_7;

/// Tolerance applied to exact-probability (exhaustive) runs.
pub const EXACT_ABS_TOL: f64 = 1e-9;
/// Looser exact tolerance for quantities obtained by inverting an RDM purity.
pub const EXACT_INVERSION_TOL: f64 = 1e-6;
/// Multiples of the reported sampling error allowed for sampled runs.
pub const K_SIGMA: f64 = 3.0;

const CALIBRATION_STREAM: u64 = u64::MAX;

/// Table 1 rows with their two-decimal magic anchors.
pub const TABLE1_ROWS: [(StateId, f64); 4] = [
    (StateId::LM, 0.48),
    (StateId::LMErased, 0.08),
    (StateId::M, 0.46),
    (StateId::MErased, 0.27),
];

// ---------------------------------------------------------------------------
// Scenario file

/// Named preparation; angle parameters carry a `_deg` suffix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub id: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
}

impl StateSpec {
    pub fn from_state_id(id: &StateId) -> Self {
        let mut params = BTreeMap::new();
        let name = match *id {
            StateId::Psi0 => "psi0",
            StateId::Psi1 { t } | StateId::Psi2 { t } | StateId::Psi3 { t } => {
                params.insert("t".to_string(), if t { 1.0 } else { 0.0 });
                match id {
                    StateId::Psi1 { .. } => "psi1",
                    StateId::Psi2 { .. } => "psi2",
                    _ => "psi3",
                }
            }
            StateId::Psi4 => "psi4",
            StateId::LM => "LM",
            StateId::LMErased => "LM_erased",
            StateId::M => "M",
            StateId::MErased => "M_erased",
            StateId::NLM { theta } => {
                params.insert("theta_deg".to_string(), theta.to_degrees());
                "NLM"
            }
            StateId::Fig4 { gamma, phi } => {
                params.insert("gamma_deg".to_string(), gamma.to_degrees());
                params.insert("phi_deg".to_string(), phi.to_degrees());
                "Fig4"
            }
        };
        Self {
            id: name.to_string(),
            params,
        }
    }

    pub fn to_state_id(&self) -> Result<StateId> {
        let allowed: &[&str] = match self.id.as_str() {
            "psi1" | "psi2" | "psi3" => &["t"],
            "NLM" => &["theta_deg"],
            "Fig4" => &["gamma_deg", "phi_deg"],
            _ => &[],
        };
        if let Some(k) = self.params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::Scenario(format!("state {} has no parameter {k}", self.id)));
        }
        let flag = |k: &str| -> Result<bool> {
            match self.params.get(k).copied().unwrap_or(0.0) {
                0.0 => Ok(false),
                1.0 => Ok(true),
                v => Err(Error::Scenario(format!("parameter {k} must be 0 or 1, got {v}"))),
            }
        };
        let angle = |k: &str| -> Result<f64> {
            let v = self.params.get(k).copied().unwrap_or(0.0);
            if v.is_finite() {
                Ok(v.to_radians())
            } else {
                Err(Error::Scenario(format!("parameter {k} is not finite")))
            }
        };
        Ok(match self.id.as_str() {
            "psi0" => StateId::Psi0,
            "psi1" => StateId::Psi1 { t: flag("t")? },
            "psi2" => StateId::Psi2 { t: flag("t")? },
            "psi3" => StateId::Psi3 { t: flag("t")? },
            "psi4" => StateId::Psi4,
            "LM" => StateId::LM,
            "LM_erased" => StateId::LMErased,
            "M" => StateId::M,
            "M_erased" => StateId::MErased,
            "NLM" => StateId::NLM {
                theta: angle("theta_deg")?,
            },
            "Fig4" => StateId::Fig4 {
                gamma: angle("gamma_deg")?,
                phi: angle("phi_deg")?,
            },
            other => return Err(Error::UnknownState(other.to_string())),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateEntry {
    pub gate: String,
    pub qubits: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub angles_deg: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitSpec {
    pub num_qubits: usize,
    pub gates: Vec<GateEntry>,
}

impl CircuitSpec {
    pub fn to_circuit(&self) -> Result<Circuit> {
        let gates = self
            .gates
            .iter()
            .map(|g| {
                GateSpec::new(
                    GateKind::parse(&g.gate)?,
                    g.qubits.clone(),
                    g.angles_deg.iter().map(|a| a.to_radians()).collect(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Circuit::from_gates(self.num_qubits, gates)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReadoutSpec {
    Matrix {
        lambda: CalibrationMatrix,
    },
    PerQubit {
        per_qubit_eps: Vec<(f64, f64)>,
        #[serde(default)]
        correlation: f64,
    },
}

impl ReadoutSpec {
    pub fn calibration(&self) -> Result<CalibrationMatrix> {
        match self {
            ReadoutSpec::Matrix { lambda } => Ok(lambda.clone()),
            ReadoutSpec::PerQubit {
                per_qubit_eps,
                correlation,
            } => synth_calibration_matrix(per_qubit_eps, *correlation),
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default = "one")]
    pub p_dep_cz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub readout: Option<ReadoutSpec>,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            p_dep_cz: 1.0,
            readout: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Purity,
    StabPurity,
    Sre,
    RdmPurity { keep: Vec<usize> },
}

impl Estimator {
    fn label(&self) -> String {
        match self {
            Estimator::Purity => "purity".into(),
            Estimator::StabPurity => "stab_purity".into(),
            Estimator::Sre => "sre".into(),
            Estimator::RdmPurity { keep } => format!("rdm_purity{keep:?}"),
        }
    }
}

fn default_n_rand() -> usize {
    DEFAULT_N_RAND
}

fn default_n_shot() -> Option<u64> {
    Some(DEFAULT_N_SHOT)
}

/// One pipeline run as stored on disk. Exactly one of `state` and `circuit`
/// is set. `n_shot: null` means exact outcome probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<StateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circuit: Option<CircuitSpec>,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub estimators: Vec<Estimator>,
    #[serde(default)]
    pub mitigation: bool,
    /// Shots per basis state for a simulated calibration run; the true Λ is
    /// used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration_shots: Option<u64>,
    #[serde(default = "default_n_rand")]
    pub n_rand: usize,
    #[serde(default = "default_n_shot")]
    pub n_shot: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    /// Use all 24^N Clifford tuples with exact probabilities.
    #[serde(default)]
    pub exhaustive: bool,
}

impl Scenario {
    pub fn for_state(name: impl Into<String>, id: &StateId, estimators: Vec<Estimator>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: name.into(),
            state: Some(StateSpec::from_state_id(id)),
            circuit: None,
            noise: NoiseSpec::default(),
            estimators,
            mitigation: false,
            calibration_shots: None,
            n_rand: DEFAULT_N_RAND,
            n_shot: Some(DEFAULT_N_SHOT),
            seed: 0,
            exhaustive: false,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let sc: Self = serde_json::from_str(s)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn circuit(&self) -> Result<Circuit> {
        match (&self.state, &self.circuit) {
            (Some(s), None) => Ok(paper_state(&s.to_state_id()?)),
            (None, Some(c)) => c.to_circuit(),
            _ => Err(Error::Scenario("exactly one of `state` and `circuit` must be given".into())),
        }
    }

    pub fn state_id(&self) -> Result<Option<StateId>> {
        self.state.as_ref().map(StateSpec::to_state_id).transpose()
    }

    pub fn readout(&self) -> Result<Option<CalibrationMatrix>> {
        self.noise.readout.as_ref().map(ReadoutSpec::calibration).transpose()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Scenario(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.estimators.is_empty() {
            return Err(Error::Scenario("estimator list is empty".into()));
        }
        let n = self.circuit()?.num_qubits();
        for e in &self.estimators {
            if let Estimator::RdmPurity { keep } = e {
                let mut k = keep.clone();
                k.sort_unstable();
                k.dedup();
                if keep.is_empty() || k.len() != keep.len() || keep.iter().any(|&q| q >= n) {
                    return Err(Error::InvalidSubsystem {
                        keep: keep.clone(),
                        num_qubits: n,
                    });
                }
            }
        }
        if let Some(lam) = self.readout()? {
            if lam.num_qubits() != n {
                return Err(Error::DimensionMismatch {
                    expected: 1 << n,
                    actual: lam.dim(),
                });
            }
        }
        if !self.exhaustive && self.n_rand < 2 {
            return Err(Error::Scenario("n_rand must be at least 2".into()));
        }
        if self.calibration_shots == Some(0) {
            return Err(Error::Scenario("calibration_shots must be positive".into()));
        }
        self.noise_config(None)?.validate()
    }

    fn noise_config(&self, readout: Option<CalibrationMatrix>) -> Result<NoiseConfig> {
        Ok(NoiseConfig {
            p_dep_cz: self.noise.p_dep_cz,
            readout_lambda: readout,
            n_shot: if self.exhaustive { None } else { self.n_shot },
            seed: self.seed,
        })
    }

    fn exact(&self) -> bool {
        self.exhaustive || self.n_shot.is_none()
    }
}

// ---------------------------------------------------------------------------
// Report

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Configuration or grid coordinate.
    Input,
    /// Computed from simulated measurement data.
    Estimate,
    /// Exact computation on the simulated density matrix.
    Oracle,
    /// Closed-form model prediction.
    Theory,
    /// Published reference number.
    Anchor,
}

impl Provenance {
    fn as_str(self) -> &'static str {
        match self {
            Provenance::Input => "input",
            Provenance::Estimate => "estimate",
            Provenance::Oracle => "oracle",
            Provenance::Theory => "theory",
            Provenance::Anchor => "anchor",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Value {
    pub name: String,
    pub value: f64,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

impl Value {
    pub fn new(name: impl Into<String>, value: f64, provenance: Provenance) -> Self {
        Self {
            name: name.into(),
            value,
            provenance,
            sigma: None,
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = Some(sigma);
        self
    }
}

/// Passes iff |observed − reference| ≤ abs_tol + k_sigma · sigma.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub observed: f64,
    pub observed_provenance: Provenance,
    pub reference: f64,
    pub reference_provenance: Provenance,
    pub abs_tol: f64,
    pub k_sigma: f64,
    pub sigma: f64,
    pub deviation: f64,
    pub allowed: f64,
    pub passed: bool,
}

impl Check {
    pub fn new(
        name: impl Into<String>,
        observed: (f64, Provenance),
        reference: (f64, Provenance),
        abs_tol: f64,
        k_sigma: f64,
        sigma: f64,
    ) -> Self {
        let deviation = (observed.0 - reference.0).abs();
        let allowed = abs_tol + k_sigma * sigma;
        Self {
            name: name.into(),
            observed: observed.0,
            observed_provenance: observed.1,
            reference: reference.0,
            reference_provenance: reference.1,
            abs_tol,
            k_sigma,
            sigma,
            deviation,
            allowed,
            passed: deviation <= allowed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub label: String,
    pub values: Vec<Value>,
    pub checks: Vec<Check>,
}

impl Section {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            values: Vec::new(),
            checks: Vec::new(),
        }
    }

    pub fn value(&self, name: &str) -> Option<&Value> {
        self.values.iter().find(|v| v.name == name)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub provenance: Provenance,
}

/// Tabular series for plotting; every column is tagged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub name: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<f64>>,
}

impl Curve {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        for r in &self.rows {
            w.write_record(r.iter().map(|x| x.to_string()))?;
        }
        csv_string(w)
    }
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub kind: String,
    pub name: String,
    pub seed: u64,
    pub parameters: Vec<Value>,
    pub sections: Vec<Section>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub curves: Vec<Curve>,
    pub passed: bool,
}

impl Report {
    pub fn new(kind: &str, name: impl Into<String>, seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind: kind.to_string(),
            name: name.into(),
            seed,
            parameters: Vec::new(),
            sections: Vec::new(),
            curves: Vec::new(),
            passed: true,
        }
    }

    /// Sets `passed` from the checks.
    pub fn finish(mut self) -> Self {
        let passed = self.checks().all(|c| c.passed);
        self.passed = passed;
        self
    }

    pub fn checks(&self) -> impl Iterator<Item = &Check> {
        self.sections.iter().flat_map(|s| s.checks.iter())
    }

    pub fn section(&self, label: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.label == label)
    }

    pub fn curve(&self, name: &str) -> Option<&Curve> {
        self.curves.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per value and per check.
    pub fn summary_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "section",
            "name",
            "value",
            "sigma",
            "provenance",
            "reference",
            "reference_provenance",
            "allowed",
            "passed",
        ])?;
        for v in &self.parameters {
            w.write_record(value_record("parameters", v))?;
        }
        for s in &self.sections {
            for v in &s.values {
                w.write_record(value_record(&s.label, v))?;
            }
            for c in &s.checks {
                w.write_record([
                    s.label.clone(),
                    c.name.clone(),
                    c.observed.to_string(),
                    c.sigma.to_string(),
                    c.observed_provenance.as_str().to_string(),
                    c.reference.to_string(),
                    c.reference_provenance.as_str().to_string(),
                    c.allowed.to_string(),
                    c.passed.to_string(),
                ])?;
            }
        }
        csv_string(w)
    }

    /// Aligned human-readable table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} report: {} (seed {})", self.kind, self.name, self.seed);
        for v in &self.parameters {
            let _ = writeln!(out, "  {:<28} {:>14}  [{}]", v.name, fmt_num(v.value), v.provenance.as_str());
        }
        for s in &self.sections {
            let _ = writeln!(out, "\n[{}]", s.label);
            for v in &s.values {
                let sig = v.sigma.map(|x| format!("± {}", fmt_num(x))).unwrap_or_default();
                let _ = writeln!(
                    out,
                    "  {:<28} {:>14} {:<14} [{}]",
                    v.name,
                    fmt_num(v.value),
                    sig,
                    v.provenance.as_str()
                );
            }
            for c in &s.checks {
                let _ = writeln!(
                    out,
                    "  {} {:<33} |{} - {}| = {} <= {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    fmt_num(c.observed),
                    fmt_num(c.reference),
                    fmt_num(c.deviation),
                    fmt_num(c.allowed)
                );
            }
        }
        let _ = writeln!(out, "\noverall: {}", if self.passed { "PASS" } else { "FAIL" });
        out
    }
}

fn value_record(section: &str, v: &Value) -> [String; 9] {
    [
        section.to_string(),
        v.name.clone(),
        v.value.to_string(),
        v.sigma.map(|s| s.to_string()).unwrap_or_default(),
        v.provenance.as_str().to_string(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
    ]
}

fn fmt_num(x: f64) -> String {
    if x != 0.0 && (x.abs() < 1e-4 || x.abs() >= 1e6) {
        format!("{x:.3e}")
    } else {
        format!("{x:.6}")
    }
}

// ---------------------------------------------------------------------------
// Pipeline

/// Everything downstream estimators need from one scenario run.
struct Execution {
    num_qubits: usize,
    /// Overall survival p^k after k CZ gates.
    p_total: f64,
    rho: DensityMatrix,
    ideal: DensityMatrix,
    dataset: RcmDataset,
    exact: bool,
}

fn execute(s: &Scenario) -> Result<Execution> {
    s.validate()?;
    let circuit = s.circuit()?;
    let n = circuit.num_qubits();
    let rho = run_circuit(
        &circuit,
        &NoiseConfig {
            p_dep_cz: s.noise.p_dep_cz,
            ..NoiseConfig::noiseless()
        },
    )?;
    let ideal = run_circuit(&circuit, &NoiseConfig::noiseless())?;
    let readout = s.readout()?;
    let tuples = if s.exhaustive {
        exhaustive_local_cliffords(n)
    } else {
        sample_local_cliffords(n, s.n_rand, s.seed)?
    };
    let mut dataset = collect_dataset(&rho, &tuples, &s.noise_config(readout.clone())?)?;
    if s.mitigation {
        let lam = match (&readout, s.calibration_shots) {
            (Some(l), Some(shots)) => calibration_from_counts(&simulate_initialization_counts(
                l,
                shots,
                derive_seed(s.seed, CALIBRATION_STREAM),
            ))?,
            (Some(l), None) => l.clone(),
            (None, _) => CalibrationMatrix::identity(n),
        };
        dataset = dataset.try_map_probabilities(|p| mitigate_least_squares(p, &lam, DEFAULT_TOL))?;
    }
    Ok(Execution {
        num_qubits: n,
        p_total: s.noise.p_dep_cz.powi(circuit.cz_count() as i32),
        rho,
        ideal,
        dataset,
        exact: s.exact(),
    })
}

impl Execution {
    fn tol(&self) -> (f64, f64) {
        if self.exact {
            (EXACT_ABS_TOL, 0.0)
        } else {
            (0.0, K_SIGMA)
        }
    }

    fn inversion_tol(&self) -> (f64, f64) {
        if self.exact {
            (EXACT_INVERSION_TOL, 0.0)
        } else {
            (0.0, K_SIGMA)
        }
    }

    fn ideal_nonlocal(&self) -> Result<Option<f64>> {
        if self.num_qubits != 2 {
            return Ok(None);
        }
        Ok(Some(nonlocal_magic_schmidt(schmidt_spectrum(&self.ideal)?.lambda)?))
    }

    fn state_section(&self, state: Option<&StateId>) -> Result<Section> {
        let mut sec = Section::new("state");
        sec.values.push(Value::new("p_total", self.p_total, Provenance::Input));
        sec.values.push(Value::new("purity", purity(&self.rho), Provenance::Oracle));
        sec.values.push(Value::new(
            "stabilizer_purity",
            stabilizer_purity_exact(&self.rho),
            Provenance::Oracle,
        ));
        let m2 = sre_exact(&self.rho);
        sec.values.push(Value::new("m2", m2, Provenance::Oracle));
        if let Some(nl) = self.ideal_nonlocal()? {
            sec.values.push(Value::new("nonlocal_magic_ideal", nl, Provenance::Theory));
        }
        if let Some(StateId::NLM { theta }) = state {
            let th = sre_nlm_depolarized(1.0 - self.p_total, *theta)?;
            sec.values.push(Value::new("m2_closed_form", th, Provenance::Theory));
            sec.checks.push(Check::new(
                "m2_oracle_vs_closed_form",
                (m2, Provenance::Oracle),
                (th, Provenance::Theory),
                EXACT_ABS_TOL,
                0.0,
                0.0,
            ));
        }
        Ok(sec)
    }

    fn estimator_section(&self, e: &Estimator) -> Result<Section> {
        let (abs, k) = self.tol();
        let mut sec = Section::new(e.label());
        let ds = &self.dataset;
        match e {
            Estimator::Purity => {
                let est = estimate_purity(ds)?;
                push_compared(&mut sec, "purity", est.mean, est.sampling_error, purity(&self.rho), abs, k);
            }
            Estimator::StabPurity => {
                let est = estimate_stabilizer_purity(ds)?;
                let oracle = stabilizer_purity_exact(&self.rho);
                push_compared(&mut sec, "stabilizer_purity", est.mean, est.sampling_error, oracle, abs, k);
            }
            Estimator::Sre => {
                let est = estimate_sre_components(ds)?;
                sec.values.push(Value::new("purity", est.purity.mean, Provenance::Estimate).with_sigma(est.purity.sampling_error));
                sec.values.push(
                    Value::new("stabilizer_purity", est.stabilizer_purity.mean, Provenance::Estimate)
                        .with_sigma(est.stabilizer_purity.sampling_error),
                );
                push_compared(&mut sec, "m2", est.sre.mean, est.sre.sampling_error, sre_exact(&self.rho), abs, k);
            }
            Estimator::RdmPurity { keep } => {
                let est = estimate_rdm_purity(ds, keep)?;
                let oracle = purity(&partial_trace(&self.rho, keep)?);
                push_compared(&mut sec, "rdm_purity", est.mean, est.sampling_error, oracle, abs, k);
                if self.num_qubits == 2 && keep.len() == 1 && self.p_total > 0.0 {
                    let theory = self.ideal_nonlocal()?.expect("two qubits");
                    self.push_nonlocal(&mut sec, est.mean, est.sampling_error, theory)?;
                }
            }
        }
        Ok(sec)
    }

    /// Non-local magic from a measured single-qubit RDM purity.
    fn push_nonlocal(&self, sec: &mut Section, p_a: f64, sigma: f64, theory: f64) -> Result<()> {
        let (abs, k) = self.inversion_tol();
        let p = self.p_total;
        let (lo, hi) = (noisy_rdm_purity(0.5, p), noisy_rdm_purity(1.0, p));
        let inside = p_a.clamp(lo, hi);
        sec.checks.push(Check::new(
            "rdm_purity_attainable",
            (p_a, Provenance::Estimate),
            (inside, Provenance::Theory),
            abs,
            k,
            sigma,
        ));
        let g = |x: f64| nonlocal_magic_noisy(x.clamp(lo, hi), p);
        let nl = g(inside)?;
        let h = 1e-6;
        let (a, b) = ((inside - h).max(lo), (inside + h).min(hi));
        let nl_sigma = if b > a { ((g(b)? - g(a)?) / (b - a)).abs() * sigma } else { 0.0 };
        sec.values.push(Value::new("nonlocal_magic", nl, Provenance::Estimate).with_sigma(nl_sigma));
        sec.values.push(Value::new("nonlocal_magic_ideal", theory, Provenance::Theory));
        sec.checks.push(Check::new(
            "nonlocal_magic_vs_ideal",
            (nl, Provenance::Estimate),
            (theory, Provenance::Theory),
            abs,
            k,
            nl_sigma,
        ));
        Ok(())
    }
}

fn push_compared(sec: &mut Section, name: &str, est: f64, sigma: f64, oracle: f64, abs: f64, k: f64) {
    sec.values.push(Value::new(name, est, Provenance::Estimate).with_sigma(sigma));
    sec.values.push(Value::new(format!("{name}_oracle"), oracle, Provenance::Oracle));
    sec.checks.push(Check::new(
        format!("{name}_vs_oracle"),
        (est, Provenance::Estimate),
        (oracle, Provenance::Oracle),
        abs,
        k,
        sigma,
    ));
}

fn scenario_parameters(s: &Scenario) -> Vec<Value> {
    let mut v = vec![
        Value::new("p_dep_cz", s.noise.p_dep_cz, Provenance::Input),
        Value::new("n_rand", s.n_rand as f64, Provenance::Input),
    ];
    if let Some(n) = s.n_shot {
        v.push(Value::new("n_shot", n as f64, Provenance::Input));
    }
    v.push(Value::new("exhaustive", f64::from(u8::from(s.exhaustive)), Provenance::Input));
    v.push(Value::new("mitigation", f64::from(u8::from(s.mitigation)), Provenance::Input));
    v
}

fn in_scenario<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        e @ Error::InScenario { .. } => e,
        e => Error::InScenario {
            scenario: name.to_string(),
            source: Box::new(e),
        },
    })
}

/// prepare → depolarize → dataset (readout + shots) → optional mitigation →
/// estimators, compared against the exact oracle.
pub fn run_scenario(s: &Scenario) -> Result<Report> {
    in_scenario(&s.name, run_scenario_inner(s))
}

fn run_scenario_inner(s: &Scenario) -> Result<Report> {
    let ex = execute(s)?;
    let mut r = Report::new("scenario", &s.name, s.seed);
    r.parameters = scenario_parameters(s);
    r.sections.push(ex.state_section(s.state_id()?.as_ref())?);
    for e in &s.estimators {
        r.sections.push(ex.estimator_section(e)?);
    }
    Ok(r.finish())
}

/// Sampling settings shared by the reproduction reports.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub n_rand: usize,
    pub n_shot: Option<u64>,
    pub exhaustive: bool,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            n_rand: DEFAULT_N_RAND,
            n_shot: Some(DEFAULT_N_SHOT),
            exhaustive: false,
        }
    }
}

impl Sampling {
    pub fn exact() -> Self {
        Self {
            n_rand: 0,
            n_shot: None,
            exhaustive: true,
        }
    }

    fn apply(&self, s: &mut Scenario) {
        s.n_rand = self.n_rand;
        s.n_shot = self.n_shot;
        s.exhaustive = self.exhaustive;
    }

    fn parameters(&self) -> Vec<Value> {
        let mut v = vec![Value::new("n_rand", self.n_rand as f64, Provenance::Input)];
        if let Some(n) = self.n_shot {
            v.push(Value::new("n_shot", n as f64, Provenance::Input));
        }
        v.push(Value::new("exhaustive", f64::from(u8::from(self.exhaustive)), Provenance::Input));
        v
    }
}

/// Survival probability giving two-qubit purity `target` after `n_cz` global
/// depolarizing CZs on a pure state.
pub fn calibrate_p_dep(target: f64, n_qubits: usize, n_cz: u32) -> Result<f64> {
    let d = (1u64 << n_qubits) as f64;
    if !(target > 1.0 / d && target <= 1.0) || n_cz == 0 {
        return Err(Error::Domain {
            name: "target purity",
            value: target,
            domain: "(1/d, 1] with at least one CZ",
        });
    }
    // purity = q² + (1 − q²)/d with q = p^k
    let q2 = (target - 1.0 / d) / (1.0 - 1.0 / d);
    Ok(q2.sqrt().powf(1.0 / n_cz as f64))
}

/// Survival probability for which the Table 1 states have purity 0.94.
pub fn table1_p_dep() -> f64 {
    calibrate_p_dep(TABLE1_TARGET_PURITY, 2, 1).expect("constant target is valid")
}

/// LM, LM_erased, M, M_erased through the full pipeline, with the anchors.
pub fn report_table1(p_dep: f64, seed: u64, sampling: &Sampling) -> Result<Report> {
    if !(p_dep > 0.0 && p_dep <= 1.0) {
        return Err(Error::Domain {
            name: "p_dep",
            value: p_dep,
            domain: "(0, 1]",
        });
    }
    let mut r = Report::new("table1", "table1", seed);
    r.parameters.push(Value::new("p_dep_cz", p_dep, Provenance::Input));
    r.parameters.extend(sampling.parameters());
    r.parameters.push(Value::new("target_purity", TABLE1_TARGET_PURITY, Provenance::Anchor));
    for (row, (id, anchor)) in TABLE1_ROWS.iter().enumerate() {
        let mut s = Scenario::for_state(
            id.label(),
            id,
            vec![Estimator::Sre, Estimator::RdmPurity { keep: vec![0] }],
        );
        s.noise.p_dep_cz = p_dep;
        s.seed = derive_seed(seed, row as u64);
        sampling.apply(&mut s);
        let sec = in_scenario(&s.name, table1_row(&s, *anchor))?;
        r.sections.push(sec);
    }
    Ok(r.finish())
}

fn table1_row(s: &Scenario, anchor: f64) -> Result<Section> {
    let ex = execute(s)?;
    let (abs, k) = ex.tol();
    let mut sec = Section::new(s.name.clone());
    let model_purity = purity(&ex.rho);
    let oracle_m2 = sre_exact(&ex.rho);
    sec.values.push(Value::new("m2_anchor", anchor, Provenance::Anchor));
    sec.values.push(Value::new("purity_model", model_purity, Provenance::Oracle));

    let est = estimate_sre_components(&ex.dataset)?;
    push_compared(&mut sec, "m2", est.sre.mean, est.sre.sampling_error, oracle_m2, abs, k);
    push_compared(
        &mut sec,
        "purity",
        est.purity.mean,
        est.purity.sampling_error,
        model_purity,
        abs,
        k,
    );
    sec.checks.push(Check::new(
        "m2_vs_anchor",
        (est.sre.mean, Provenance::Estimate),
        (anchor, Provenance::Anchor),
        TABLE1_M2_TOL,
        0.0,
        0.0,
    ));
    sec.checks.push(Check::new(
        "m2_vs_anchor_sigma",
        (est.sre.mean, Provenance::Estimate),
        (anchor, Provenance::Anchor),
        0.0,
        K_SIGMA,
        est.sre.sampling_error,
    ));
    sec.checks.push(Check::new(
        "m2_oracle_vs_anchor",
        (oracle_m2, Provenance::Oracle),
        (anchor, Provenance::Anchor),
        TABLE1_ORACLE_TOL,
        0.0,
        0.0,
    ));
    sec.checks.push(Check::new(
        "purity_model_vs_anchor",
        (model_purity, Provenance::Oracle),
        (TABLE1_TARGET_PURITY, Provenance::Anchor),
        TABLE1_PURITY_TOL,
        0.0,
        0.0,
    ));

    let rdm = estimate_rdm_purity(&ex.dataset, &[0])?;
    sec.values.push(Value::new("rdm_purity", rdm.mean, Provenance::Estimate).with_sigma(rdm.sampling_error));
    let theory = ex.ideal_nonlocal()?.expect("two-qubit row");
    ex.push_nonlocal(&mut sec, rdm.mean, rdm.sampling_error, theory)?;
    Ok(sec)
}

/// M₂ and RDM-derived non-local magic of NLM(θ) over `theta_grid` (radians).
pub fn report_fig3(theta_grid: &[f64], p_dep: f64, seed: u64, sampling: &Sampling) -> Result<Report> {
    if theta_grid.is_empty() {
        return Err(Error::Scenario("empty theta grid".into()));
    }
    if let Some(&t) = theta_grid
        .iter()
        .find(|t| !(**t >= 0.0 && **t <= std::f64::consts::FRAC_PI_4 + 1e-12))
    {
        return Err(Error::Domain {
            name: "theta",
            value: t,
            domain: "[0, π/4]",
        });
    }
    let mut r = Report::new("fig3", "fig3", seed);
    r.parameters.push(Value::new("p_dep_cz", p_dep, Provenance::Input));
    r.parameters.extend(sampling.parameters());
    let mut curve = Curve {
        name: "fig3".into(),
        columns: [
            ("theta_deg", Provenance::Input),
            ("m2_estimate", Provenance::Estimate),
            ("m2_sigma", Provenance::Estimate),
            ("m2_theory", Provenance::Theory),
            ("rdm_purity_estimate", Provenance::Estimate),
            ("rdm_purity_sigma", Provenance::Estimate),
            ("nonlocal_estimate", Provenance::Estimate),
            ("nonlocal_sigma", Provenance::Estimate),
            ("nonlocal_theory", Provenance::Theory),
        ]
        .into_iter()
        .map(|(n, p)| Column {
            name: n.into(),
            provenance: p,
        })
        .collect(),
        rows: Vec::new(),
    };
    for (i, &theta) in theta_grid.iter().enumerate() {
        let id = StateId::NLM { theta };
        let mut s = Scenario::for_state(
            format!("theta={:.4}deg", theta.to_degrees()),
            &id,
            vec![Estimator::Sre, Estimator::RdmPurity { keep: vec![0] }],
        );
        s.noise.p_dep_cz = p_dep;
        s.seed = derive_seed(seed, i as u64);
        sampling.apply(&mut s);
        let sec = in_scenario(&s.name, fig3_point(&s, theta))?;
        let get = |n: &str| sec.value(n).map(|v| v.value).unwrap_or(f64::NAN);
        let sig = |n: &str| sec.value(n).and_then(|v| v.sigma).unwrap_or(f64::NAN);
        curve.rows.push(vec![
            theta.to_degrees(),
            get("m2"),
            sig("m2"),
            get("m2_theory"),
            get("rdm_purity"),
            sig("rdm_purity"),
            get("nonlocal_magic"),
            sig("nonlocal_magic"),
            get("nonlocal_magic_ideal"),
        ]);
        r.sections.push(sec);
    }
    r.curves.push(curve);
    Ok(r.finish())
}

fn fig3_point(s: &Scenario, theta: f64) -> Result<Section> {
    let ex = execute(s)?;
    let (abs, k) = ex.tol();
    let mut sec = Section::new(s.name.clone());
    sec.values.push(Value::new("theta_deg", theta.to_degrees(), Provenance::Input));
    let theory = sre_nlm_depolarized(1.0 - ex.p_total, theta)?;
    let est = estimate_sre_components(&ex.dataset)?;
    sec.values.push(Value::new("m2", est.sre.mean, Provenance::Estimate).with_sigma(est.sre.sampling_error));
    sec.values.push(Value::new("m2_theory", theory, Provenance::Theory));
    sec.checks.push(Check::new(
        "m2_vs_theory",
        (est.sre.mean, Provenance::Estimate),
        (theory, Provenance::Theory),
        abs,
        k,
        est.sre.sampling_error,
    ));
    let rdm = estimate_rdm_purity(&ex.dataset, &[0])?;
    sec.values.push(Value::new("rdm_purity", rdm.mean, Provenance::Estimate).with_sigma(rdm.sampling_error));
    ex.push_nonlocal(&mut sec, rdm.mean, rdm.sampling_error, nonlocal_magic_theta(theta))?;
    Ok(sec)
}

fn fig4_state(p_dep: f64) -> Result<DensityMatrix> {
    run_circuit(
        &paper_state(&StateId::Fig4 { gamma: 0.0, phi: 0.0 }),
        &NoiseConfig {
            p_dep_cz: p_dep,
            ..NoiseConfig::noiseless()
        },
    )
}

/// Minimum of the Rz(γ) ⊗ Rz(φ) landscape of the Fig. 4 state.
pub fn fig4_grid_minimum(p_dep: f64, step_deg: f64) -> Result<f64> {
    let g = degree_grid(step_deg);
    Ok(sweep_landscape(&fig4_state(p_dep)?, &g, &g)?.residual_m2)
}

/// Bisects for the survival probability whose landscape minimum is `anchor`.
pub fn fit_fig4_p_dep(anchor: f64, step_deg: f64) -> Result<f64> {
    let (mut lo, mut hi) = (0.5, 1.0);
    let (f_lo, f_hi) = (fig4_grid_minimum(lo, step_deg)?, fig4_grid_minimum(hi, step_deg)?);
    if !(f_hi <= anchor && anchor <= f_lo) {
        return Err(Error::FitFailure(format!(
            "anchor {anchor} outside attainable minima [{f_hi}, {f_lo}]"
        )));
    }
    // The minimum grows as survival drops.
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if fig4_grid_minimum(mid, step_deg)? > anchor {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn landscape_curve(name: &str, l: &Landscape) -> Curve {
    let mut rows = Vec::with_capacity(l.gamma.len() * l.phi.len());
    for (i, g) in l.gamma.iter().enumerate() {
        for (j, p) in l.phi.iter().enumerate() {
            rows.push(vec![g.to_degrees(), p.to_degrees(), l.values[i][j]]);
        }
    }
    Curve {
        name: name.into(),
        columns: vec![
            Column {
                name: "gamma_deg".into(),
                provenance: Provenance::Input,
            },
            Column {
                name: "phi_deg".into(),
                provenance: Provenance::Input,
            },
            Column {
                name: "m2".into(),
                provenance: Provenance::Oracle,
            },
        ],
        rows,
    }
}

/// Noisy and noise-free Rz(γ) ⊗ Rz(φ) landscapes of the Fig. 4 state.
pub fn report_fig4(p_dep: f64, step_deg: f64) -> Result<Report> {
    if !(step_deg > 0.0 && step_deg <= 180.0) {
        return Err(Error::Domain {
            name: "step_deg",
            value: step_deg,
            domain: "(0, 180]",
        });
    }
    let grid = degree_grid(step_deg);
    let mut r = Report::new("fig4", "fig4", 0);
    r.parameters.push(Value::new("p_dep_cz", p_dep, Provenance::Input));
    r.parameters.push(Value::new("step_deg", step_deg, Provenance::Input));

    let noisy = sweep_landscape(&fig4_state(p_dep)?, &grid, &grid)?;
    let mut sec = Section::new("noisy");
    sec.values.push(Value::new("min_m2", noisy.residual_m2, Provenance::Oracle));
    sec.values.push(Value::new("argmin_gamma_deg", noisy.angles.gamma.to_degrees(), Provenance::Oracle));
    sec.values.push(Value::new("argmin_phi_deg", noisy.angles.phi.to_degrees(), Provenance::Oracle));
    sec.values.push(Value::new("min_anchor", FIG4_ANCHOR, Provenance::Anchor));
    let theory = sre_nlm_depolarized(1.0 - p_dep, FRAC_PI_8)?;
    sec.values.push(Value::new("min_theory", theory, Provenance::Theory));
    sec.checks.push(Check::new(
        "min_vs_anchor",
        (noisy.residual_m2, Provenance::Oracle),
        (FIG4_ANCHOR, Provenance::Anchor),
        FIG4_ANCHOR_TOL,
        0.0,
        0.0,
    ));
    sec.checks.push(Check::new(
        "min_vs_closed_form",
        (noisy.residual_m2, Provenance::Oracle),
        (theory, Provenance::Theory),
        EXACT_ABS_TOL,
        0.0,
        0.0,
    ));
    r.sections.push(sec);

    let ideal_rho = fig4_state(1.0)?;
    let ideal = sweep_landscape(&ideal_rho, &grid, &grid)?;
    let nl = nonlocal_magic_schmidt(schmidt_spectrum(&ideal_rho)?.lambda)?;
    let mut sec = Section::new("noise_free");
    sec.values.push(Value::new("min_m2", ideal.residual_m2, Provenance::Oracle));
    sec.values.push(Value::new("argmin_gamma_deg", ideal.angles.gamma.to_degrees(), Provenance::Oracle));
    sec.values.push(Value::new("argmin_phi_deg", ideal.angles.phi.to_degrees(), Provenance::Oracle));
    sec.values.push(Value::new("nonlocal_magic", nl, Provenance::Oracle));
    sec.checks.push(Check::new(
        "min_vs_nonlocal_magic",
        (ideal.residual_m2, Provenance::Oracle),
        (nl, Provenance::Oracle),
        EXACT_INVERSION_TOL,
        0.0,
        0.0,
    ));
    r.sections.push(sec);

    r.curves.push(landscape_curve("fig4_noisy", noisy.landscape.as_ref().expect("sweep fills it")));
    r.curves.push(landscape_curve("fig4_noise_free", ideal.landscape.as_ref().expect("sweep fills it")));
    Ok(r.finish())
}
