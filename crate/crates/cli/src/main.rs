use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use nlmagic::benchfit::{avg_gate_fidelity, fit_exp_decay, irb_fidelity, DecayCurve, DecayFit};
use nlmagic::circuits::{paper_state, run_circuit, Circuit};
use nlmagic::erasure::{degree_grid, optimize_erasure, sweep_landscape, GridChoice, OptConfig};
use nlmagic::linalg::DensityMatrix;
use nlmagic::magic::magic_report;
use nlmagic::mitigation::{mitigate_least_squares_traced, DEFAULT_TOL};
use nlmagic::noise::{synth_calibration_matrix, CalibrationMatrix, NoiseConfig, ProbabilityVector};
use nlmagic::pipeline::{
    landscape_curve, report_fig3, report_fig4, report_table1, run_scenario, table1_p_dep, Check, Column, Curve,
    Estimator, Provenance, Report, Sampling, Scenario, Section, StateSpec, Value, DEFAULT_N_RAND, DEFAULT_N_SHOT,
    FIG3_DEFAULT_P_DEP, FIG4_P_DEP, FIG4_STEP_DEG,
};

#[derive(Parser)]
#[command(name = "nlmagic", version, about = "Local and non-local magic of few-qubit noisy states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario JSON file.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving JSON, text and CSV outputs.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// All 24^N Clifford tuples with exact probabilities.
    #[arg(long, global = true)]
    exhaustive: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Exact magic of a state.
    Magic {
        #[command(subcommand)]
        cmd: MagicCmd,
    },
    /// Randomized Clifford measurement estimates.
    Rcm {
        #[command(subcommand)]
        cmd: RcmCmd,
    },
    /// Least-squares readout mitigation of a probability vector.
    Mitigate(MitigateArgs),
    /// Local-unitary magic erasure.
    Erase {
        #[command(subcommand)]
        cmd: EraseCmd,
    },
    /// Benchmarking decay fits.
    Fit {
        #[command(subcommand)]
        cmd: FitCmd,
    },
    /// Reproduction reports.
    Report {
        #[command(subcommand)]
        cmd: ReportCmd,
    },
}

#[derive(Subcommand)]
enum MagicCmd {
    Exact(StateArgs),
}

#[derive(Subcommand)]
enum RcmCmd {
    Estimate(EstimateArgs),
}

#[derive(Subcommand)]
enum EraseCmd {
    Sweep {
        #[command(flatten)]
        state: StateArgs,
        #[arg(long, default_value_t = FIG4_STEP_DEG)]
        step_deg: f64,
    },
    Optimize {
        #[command(flatten)]
        state: StateArgs,
        #[arg(long, value_enum, default_value_t = Grid::Auto)]
        grid: Grid,
        #[arg(long, default_value_t = 5000)]
        max_evals: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Grid {
    Auto,
    Real15,
    Full45,
}

#[derive(Subcommand)]
enum FitCmd {
    /// Fit A·p^N + B to a CSV of (N, survival); with --irb also fit the
    /// interleaved curve and report the gate fidelity.
    Rb {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        irb: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        d: u32,
    },
}

#[derive(Subcommand)]
enum ReportCmd {
    Table1 {
        /// Defaults to the value giving purity 0.94.
        #[arg(long)]
        p_dep: Option<f64>,
        #[command(flatten)]
        sampling: SamplingArgs,
    },
    Fig3 {
        #[arg(long, default_value_t = FIG3_DEFAULT_P_DEP)]
        p_dep: f64,
        #[arg(long, default_value_t = 5.0)]
        step_deg: f64,
        #[command(flatten)]
        sampling: SamplingArgs,
    },
    Fig4 {
        #[arg(long, default_value_t = FIG4_P_DEP)]
        p_dep: f64,
        #[arg(long, default_value_t = FIG4_STEP_DEG)]
        step_deg: f64,
    },
}

#[derive(Args)]
struct SamplingArgs {
    #[arg(long, default_value_t = DEFAULT_N_RAND)]
    n_rand: usize,
    #[arg(long, default_value_t = DEFAULT_N_SHOT)]
    n_shot: u64,
}

/// A named state, or the state of `--scenario`.
#[derive(Args)]
struct StateArgs {
    /// psi0..psi4, LM, LM_erased, M, M_erased, NLM, Fig4.
    #[arg(long)]
    state: Option<String>,
    /// Parameter such as theta_deg=30; repeatable.
    #[arg(long = "param", value_parser = parse_param)]
    params: Vec<(String, f64)>,
    /// Survival probability after each CZ.
    #[arg(long)]
    p_dep: Option<f64>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    state: StateArgs,
    #[arg(long)]
    n_rand: Option<usize>,
    #[arg(long)]
    n_shot: Option<u64>,
}

#[derive(Args)]
struct MitigateArgs {
    /// JSON array of measured probabilities.
    #[arg(long)]
    probs: PathBuf,
    /// JSON array-of-arrays calibration matrix.
    #[arg(long, conflicts_with = "eps")]
    lambda: Option<PathBuf>,
    /// Per-qubit flip probabilities e01,e10; repeat once per qubit.
    #[arg(long, value_parser = parse_eps)]
    eps: Vec<(f64, f64)>,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got {s}"))?;
    let v = v.parse::<f64>().map_err(|e| format!("{k}: {e}"))?;
    Ok((k.to_string(), v))
}

fn parse_eps(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected e01,e10, got {s}"))?;
    let p = |x: &str| x.trim().parse::<f64>().map_err(|e| e.to_string());
    Ok((p(a)?, p(b)?))
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Scenario::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

impl StateArgs {
    /// Circuit, label and survival probability.
    fn resolve(&self, scenario: Option<&Scenario>) -> Result<(Circuit, String, f64)> {
        match (&self.state, scenario) {
            (Some(id), _) => {
                let spec = StateSpec {
                    id: id.clone(),
                    params: self.params.iter().cloned().collect(),
                };
                let sid = spec.to_state_id()?;
                Ok((paper_state(&sid), sid.label(), self.p_dep.unwrap_or(1.0)))
            }
            (None, Some(s)) => Ok((s.circuit()?, s.name.clone(), self.p_dep.unwrap_or(s.noise.p_dep_cz))),
            (None, None) => bail!("give --state or --scenario"),
        }
    }

    fn density_matrix(&self, scenario: Option<&Scenario>) -> Result<(DensityMatrix, String, f64)> {
        let (c, label, p) = self.resolve(scenario)?;
        let rho = run_circuit(
            &c,
            &NoiseConfig {
                p_dep_cz: p,
                ..NoiseConfig::noiseless()
            },
        )?;
        Ok((rho, label, p))
    }
}

fn magic_exact(cli: &Cli, args: &StateArgs) -> Result<Report> {
    let sc = cli.scenario.as_deref().map(load_scenario).transpose()?;
    let (rho, label, p) = args.density_matrix(sc.as_ref())?;
    let m = magic_report(&rho)?;
    let mut r = Report::new("magic", label, 0);
    r.parameters.push(Value::new("p_dep_cz", p, Provenance::Input));
    let mut sec = Section::new("oracle");
    sec.values.push(Value::new("purity", m.purity, Provenance::Oracle));
    sec.values.push(Value::new("stabilizer_purity", m.stabilizer_purity, Provenance::Oracle));
    sec.values.push(Value::new("m2", m.m2, Provenance::Oracle));
    if let (Some(nl), Some(l)) = (m.m2_nonlocal, m.m2_local) {
        sec.values.push(Value::new("m2_nonlocal", nl, Provenance::Oracle));
        sec.values.push(Value::new("m2_local", l, Provenance::Oracle));
    }
    r.sections.push(sec);
    Ok(r.finish())
}

fn rcm_estimate(cli: &Cli, args: &EstimateArgs) -> Result<Report> {
    let mut s = match (&cli.scenario, &args.state.state) {
        (Some(path), None) => load_scenario(path)?,
        (_, Some(id)) => {
            let sid = StateSpec {
                id: id.clone(),
                params: args.state.params.iter().cloned().collect(),
            }
            .to_state_id()?;
            let mut estimators = vec![Estimator::Purity, Estimator::StabPurity, Estimator::Sre];
            if sid.num_qubits() == 2 {
                estimators.push(Estimator::RdmPurity { keep: vec![0] });
            }
            Scenario::for_state(sid.label(), &sid, estimators)
        }
        (None, None) => bail!("give --scenario or --state"),
    };
    if let Some(p) = args.state.p_dep {
        s.noise.p_dep_cz = p;
    }
    if let Some(seed) = cli.seed {
        s.seed = seed;
    }
    if let Some(n) = args.n_rand {
        s.n_rand = n;
    }
    if let Some(n) = args.n_shot {
        s.n_shot = Some(n);
    }
    s.exhaustive |= cli.exhaustive;
    s.validate()?;
    Ok(run_scenario(&s)?)
}

fn mitigate(args: &MitigateArgs) -> Result<Report> {
    let probs: Vec<f64> = read_json(&args.probs)?;
    let q = ProbabilityVector::new(probs)?;
    let lam: CalibrationMatrix = match (&args.lambda, args.eps.is_empty()) {
        (Some(path), _) => read_json(path)?,
        (None, false) => synth_calibration_matrix(&args.eps, 0.0)?,
        (None, true) => bail!("give --lambda or --eps"),
    };
    let out = mitigate_least_squares_traced(&q, &lam, args.tol)?;
    let mut r = Report::new("mitigate", args.probs.display().to_string(), 0);
    r.parameters.push(Value::new("tol", args.tol, Provenance::Input));
    let mut sec = Section::new("solver");
    sec.values.push(Value::new("iterations", out.iterations as f64, Provenance::Estimate));
    sec.values.push(Value::new(
        "objective",
        *out.objective_history.last().expect("history starts non-empty"),
        Provenance::Estimate,
    ));
    r.sections.push(sec);
    r.curves.push(Curve {
        name: "mitigated".into(),
        columns: vec![
            Column {
                name: "outcome".into(),
                provenance: Provenance::Input,
            },
            Column {
                name: "measured".into(),
                provenance: Provenance::Input,
            },
            Column {
                name: "mitigated".into(),
                provenance: Provenance::Estimate,
            },
        ],
        rows: q
            .as_slice()
            .iter()
            .zip(out.probs.as_slice())
            .enumerate()
            .map(|(i, (a, b))| vec![i as f64, *a, *b])
            .collect(),
    });
    Ok(r.finish())
}

fn erase_sweep(cli: &Cli, state: &StateArgs, step_deg: f64) -> Result<Report> {
    let sc = cli.scenario.as_deref().map(load_scenario).transpose()?;
    let (rho, label, p) = state.density_matrix(sc.as_ref())?;
    let grid = degree_grid(step_deg);
    let res = sweep_landscape(&rho, &grid, &grid)?;
    let mut r = Report::new("erase_sweep", label, 0);
    r.parameters.push(Value::new("p_dep_cz", p, Provenance::Input));
    r.parameters.push(Value::new("step_deg", step_deg, Provenance::Input));
    let mut sec = Section::new("minimum");
    sec.values.push(Value::new("min_m2", res.residual_m2, Provenance::Oracle));
    sec.values.push(Value::new("argmin_gamma_deg", res.angles.gamma.to_degrees(), Provenance::Oracle));
    sec.values.push(Value::new("argmin_phi_deg", res.angles.phi.to_degrees(), Provenance::Oracle));
    r.sections.push(sec);
    r.curves.push(landscape_curve("landscape", res.landscape.as_ref().expect("sweep fills it")));
    Ok(r.finish())
}

fn erase_optimize(cli: &Cli, state: &StateArgs, grid: Grid, max_evals: usize) -> Result<Report> {
    let sc = cli.scenario.as_deref().map(load_scenario).transpose()?;
    let (rho, label, p) = state.density_matrix(sc.as_ref())?;
    let cfg = OptConfig {
        max_evals,
        grid: match grid {
            Grid::Auto => GridChoice::Auto,
            Grid::Real15 => GridChoice::Real15,
            Grid::Full45 => GridChoice::Full45,
        },
        seed: cli.seed.unwrap_or(0),
        ..OptConfig::default()
    };
    let res = optimize_erasure(&rho, &cfg)?;
    let mut r = Report::new("erase_optimize", label, cfg.seed);
    r.parameters.push(Value::new("p_dep_cz", p, Provenance::Input));
    r.parameters.push(Value::new("max_evals", max_evals as f64, Provenance::Input));
    let mut sec = Section::new("optimum");
    sec.values.push(Value::new("residual_m2", res.residual_m2, Provenance::Oracle));
    let names = ["alpha_deg", "beta_deg", "gamma_deg", "delta_deg", "eta_deg", "phi_deg"];
    for (n, a) in names.iter().zip(res.angles.to_array()) {
        sec.values.push(Value::new(*n, a.to_degrees(), Provenance::Oracle));
    }
    sec.values.push(Value::new("evaluations", res.evaluations as f64, Provenance::Input));
    sec.values.push(Value::new("converged", f64::from(u8::from(res.converged)), Provenance::Input));
    if let Some(nl) = magic_report(&rho)?.m2_nonlocal {
        sec.values.push(Value::new("m2_nonlocal", nl, Provenance::Oracle));
        sec.checks.push(Check::new(
            "residual_vs_nonlocal",
            (res.residual_m2, Provenance::Oracle),
            (nl, Provenance::Oracle),
            1e-6,
            0.0,
            0.0,
        ));
    }
    r.sections.push(sec);
    Ok(r.finish())
}

fn load_curve(path: &Path) -> Result<DecayCurve> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    DecayCurve::from_csv(f).with_context(|| format!("parsing {}", path.display()))
}

fn fit_section(label: &str, fit: &DecayFit) -> Section {
    let mut sec = Section::new(label);
    sec.values.push(Value::new("a", fit.a, Provenance::Estimate));
    sec.values.push(Value::new("p", fit.p, Provenance::Estimate));
    sec.values.push(Value::new("b", fit.b, Provenance::Estimate));
    sec.values.push(Value::new("residual_rms", fit.residual_rms, Provenance::Estimate));
    sec
}

fn fit_rb(csv: &Path, irb: Option<&Path>, d: u32) -> Result<Report> {
    let rb = fit_exp_decay(&load_curve(csv)?)?;
    let mut r = Report::new("fit_rb", csv.display().to_string(), 0);
    r.parameters.push(Value::new("d", d as f64, Provenance::Input));
    let mut sec = fit_section("rb", &rb);
    let (f_cl, f_avg) = avg_gate_fidelity(rb.p, d)?;
    sec.values.push(Value::new("f_clifford", f_cl, Provenance::Estimate));
    sec.values.push(Value::new("f_gate", f_avg, Provenance::Estimate));
    r.sections.push(sec);
    if let Some(path) = irb {
        let ir = fit_exp_decay(&load_curve(path)?)?;
        let f = irb_fidelity(rb.p, ir.p, d)?;
        let mut sec = fit_section("irb", &ir);
        sec.values.push(Value::new("fidelity", f.fidelity, Provenance::Estimate));
        sec.values.push(Value::new(
            "exceeds_one",
            f64::from(u8::from(f.exceeds_one)),
            Provenance::Estimate,
        ));
        r.sections.push(sec);
    }
    Ok(r.finish())
}

fn sampling(cli: &Cli, s: &SamplingArgs) -> Sampling {
    if cli.exhaustive {
        Sampling::exact()
    } else {
        Sampling {
            n_rand: s.n_rand,
            n_shot: Some(s.n_shot),
            exhaustive: false,
        }
    }
}

fn report(cli: &Cli, cmd: &ReportCmd) -> Result<Report> {
    let seed = cli.seed.unwrap_or(0);
    Ok(match cmd {
        ReportCmd::Table1 { p_dep, sampling: s } => {
            report_table1(p_dep.unwrap_or_else(table1_p_dep), seed, &sampling(cli, s))?
        }
        ReportCmd::Fig3 {
            p_dep,
            step_deg,
            sampling: s,
        } => {
            if step_deg.is_nan() || *step_deg <= 0.0 {
                bail!("step_deg must be positive");
            }
            let n = (45.0 / step_deg).floor() as usize;
            let grid: Vec<f64> = (0..=n).map(|k| (k as f64 * step_deg).to_radians()).collect();
            report_fig3(&grid, *p_dep, seed, &sampling(cli, s))?
        }
        ReportCmd::Fig4 { p_dep, step_deg } => report_fig4(*p_dep, *step_deg)?,
    })
}

fn emit(cli: &Cli, r: &Report) -> Result<()> {
    let rendered = match cli.format {
        Format::Json => r.to_json()? + "\n",
        Format::Text => r.to_text(),
        Format::Csv => match r.curves.first() {
            Some(c) => c.to_csv()?,
            None => r.summary_csv()?,
        },
    };
    match std::io::stdout().lock().write_all(rendered.as_bytes()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
        r => r.context("writing stdout")?,
    }
    if let Some(dir) = &cli.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let write = |name: String, body: String| {
            let p = dir.join(name);
            fs::write(&p, body).with_context(|| format!("writing {}", p.display()))
        };
        write(format!("{}.json", r.kind), r.to_json()? + "\n")?;
        write(format!("{}.txt", r.kind), r.to_text())?;
        write(format!("{}_summary.csv", r.kind), r.summary_csv()?)?;
        for c in &r.curves {
            write(format!("{}.csv", c.name), c.to_csv()?)?;
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<Report> {
    match &cli.command {
        Command::Magic {
            cmd: MagicCmd::Exact(a),
        } => magic_exact(cli, a),
        Command::Rcm {
            cmd: RcmCmd::Estimate(a),
        } => rcm_estimate(cli, a),
        Command::Mitigate(a) => mitigate(a),
        Command::Erase {
            cmd: EraseCmd::Sweep { state, step_deg },
        } => erase_sweep(cli, state, *step_deg),
        Command::Erase {
            cmd: EraseCmd::Optimize { state, grid, max_evals },
        } => erase_optimize(cli, state, *grid, *max_evals),
        Command::Fit {
            cmd: FitCmd::Rb { csv, irb, d },
        } => fit_rb(csv, irb.as_deref(), *d),
        Command::Report { cmd } => report(cli, cmd),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli).and_then(|r| emit(&cli, &r).map(|_| r.passed)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn value_parsers() {
        assert_eq!(parse_param("theta_deg=30").unwrap(), ("theta_deg".to_string(), 30.0));
        assert!(parse_param("theta_deg").is_err());
        assert_eq!(parse_eps("0.04, 0.02").unwrap(), (0.04, 0.02));
        assert!(parse_eps("0.04").is_err());
    }
}
