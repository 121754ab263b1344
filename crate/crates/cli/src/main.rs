//! `tbt`: equilibria, simulations, sweeps and bifurcation reports for the
//! prevalence-dependent recruitment model.

mod report;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use tbt_core::bifurcation::{detect_transcritical, find_hopf, linspace, locate_tbt_point, sweep_branch, unfolding};
use tbt_core::dynamics::{
    default_section, find_limit_cycle_with, homoclinic_proximity, integrate_partial, section_crossings, CycleOptions,
    Direction, IntegratorOptions, SectionSpec, SolverStatus, Trajectory,
};
use tbt_core::equilibria::{disease_free_equilibrium, endemic_closed_form, newton_equilibrium, r0};
use tbt_core::export::{write_branch_csv, write_trajectory_csv};
use tbt_core::model::{FullSystem, ReducedSystem};
use tbt_core::normal_form::{bt_quadratic_coeffs_opts, FitOptions, NormalFormOptions, DEFAULT_B_STEP};
use tbt_core::{CoreState, Execution, FullState, ModelParams, ParamName};

use report::{to_json, write_file, CliError, Output, SCHEMA_VERSION};

#[derive(Parser, Debug)]
#[command(
    name = "tbt",
    version,
    about = "Bifurcation analysis of a recruitment epidemic model"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Parameter file (JSON). Without it the baseline parameters are used.
    #[arg(long, global = true)]
    params: Option<PathBuf>,
    /// Override one parameter, e.g. `--set beta=0.8`. Repeatable.
    #[arg(long = "set", global = true, value_name = "NAME=VALUE")]
    overrides: Vec<String>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Command-specific tolerance (integrator, bisection or return-map).
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// R0, unfolding parameters and both equilibria with their spectra.
    Equilibria,
    /// Integrate the model and write a trajectory CSV.
    Simulate(SimulateArgs),
    /// Equilibrium branches along a parameter ramp, as CSV.
    Sweep(SweepArgs),
    /// Hopf point of the endemic equilibrium inside a parameter bracket.
    Hopf(HopfArgs),
    /// Limit cycle around the endemic equilibrium, or a homoclinic-proximity ramp.
    Cycle(CycleArgs),
    /// Double-zero point at gamma = mu = 0, beta = tau.
    Tbt,
    /// Jordan chains and quadratic normal-form coefficients at the double-zero point.
    NormalForm(NormalFormArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Initial state S,I,U. Defaults to a point next to the endemic equilibrium.
    #[arg(long, value_name = "S,I,U")]
    x0: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    t_start: f64,
    #[arg(long, default_value_t = 500.0)]
    t_end: f64,
    /// Integrate the four-dimensional system and add a P column.
    #[arg(long)]
    full: bool,
    /// Add crossings of the plane I = I1 (upward) as rows flagged in an `event` column.
    #[arg(long, conflicts_with = "full")]
    events: bool,
    /// Step budget of the integrator.
    #[arg(long)]
    max_steps: Option<usize>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    param: ParamName,
    #[arg(long)]
    from: f64,
    #[arg(long)]
    to: f64,
    #[arg(long, default_value_t = 101)]
    steps: usize,
    /// Write the transcritical detection report (JSON) to this file.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    sequential: bool,
}

#[derive(Args, Debug)]
struct HopfArgs {
    #[arg(long)]
    param: ParamName,
    #[arg(long)]
    from: f64,
    #[arg(long)]
    to: f64,
}

#[derive(Args, Debug)]
struct CycleArgs {
    /// Section seed S,I,U. Defaults to a point next to the endemic equilibrium.
    #[arg(long, value_name = "S,I,U")]
    seed: Option<String>,
    /// Follow the cycle along a ramp of this parameter instead.
    #[arg(long, requires_all = ["from", "to"])]
    ramp: Option<ParamName>,
    #[arg(long)]
    from: Option<f64>,
    #[arg(long)]
    to: Option<f64>,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    #[arg(long, default_value_t = 2000)]
    max_returns: usize,
}

#[derive(Args, Debug)]
struct NormalFormArgs {
    /// Finite-difference step of the bilinear form, relative to the state size.
    #[arg(long, default_value_t = DEFAULT_B_STEP)]
    step: f64,
    /// Fit radius; defaults to 1e-3 T.
    #[arg(long)]
    fit_radius: Option<f64>,
    #[arg(long, default_value_t = 11)]
    fit_points: usize,
    /// Skip the least-squares cross-check.
    #[arg(long)]
    no_fit: bool,
    /// Use the parameters as given instead of moving to gamma = mu = 0, beta = tau.
    #[arg(long)]
    as_given: bool,
    #[arg(long)]
    sequential: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let params = load_params(&cli.common)?;
    let warnings = params.validate()?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let out = Output::new(cli.common.out.clone());
    let tol = cli.common.tol;
    if let Some(t) = tol {
        if !(t.is_finite() && t > 0.0) {
            return Err(CliError::Validation(format!("--tol must be positive, got {t}")));
        }
    }
    match cli.command {
        Command::Equilibria => cmd_equilibria(&params, warnings, tol, &out),
        Command::Simulate(a) => cmd_simulate(&params, &a, tol, &out),
        Command::Sweep(a) => cmd_sweep(&params, &a, &out),
        Command::Hopf(a) => cmd_hopf(&params, &a, tol, &out),
        Command::Cycle(a) => cmd_cycle(&params, &a, tol, &out),
        Command::Tbt => cmd_tbt(&params, &out),
        Command::NormalForm(a) => cmd_normal_form(&params, &a, &out),
    }
}

fn load_params(c: &Common) -> Result<ModelParams, CliError> {
    let mut p = match &c.params {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<ModelParams>(&text)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        }
        None => ModelParams::baseline(),
    };
    for o in &c.overrides {
        let (name, value) = o
            .split_once('=')
            .ok_or_else(|| CliError::Validation(format!("--set expects NAME=VALUE, got '{o}'")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| CliError::Validation(format!("--set {name}: '{value}' is not a number")))?;
        match name.trim() {
            "b" => p.b = value,
            "b_hat" => p.b_hat = value,
            "T_total" => p.t_total = value,
            n => p = p.with(n.parse::<ParamName>()?, value),
        }
    }
    Ok(p)
}

fn parse_state(s: &str) -> Result<CoreState, CliError> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Validation(format!("state '{s}' is not a list of numbers")))?;
    match v[..] {
        [s, i, u] if v.iter().all(|x| x.is_finite()) && s + i + u > 0.0 => Ok(CoreState::new(s, i, u)),
        _ => Err(CliError::Validation(format!(
            "state '{s}' must be three finite numbers with S + I + U > 0"
        ))),
    }
}

fn section_json(sec: &SectionSpec<3>) -> serde_json::Value {
    json!({ "normal": sec.normal(), "anchor": sec.anchor, "direction": sec.direction })
}

fn cmd_equilibria(params: &ModelParams, warnings: Vec<String>, tol: Option<f64>, out: &Output) -> Result<(), CliError> {
    let u = unfolding(params)?;
    let e0 = disease_free_equilibrium(params);
    let e1 = endemic_closed_form(params)?;
    // independent check of the closed form by Newton's method
    let newton_shift = match &e1 {
        Some(sol) => {
            let tol = tol.unwrap_or(1e-12 * params.t_total);
            let refined = newton_equilibrium(&sol.closed_form, params, tol, 50)?;
            Some(refined.coords.max_abs_diff(&sol.closed_form))
        }
        None => None,
    };
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "params": params,
        "warnings": warnings,
        "reduced_system_valid": params.conserves_population(),
        "R0": r0(params)?,
        "delta1": u.delta1,
        "delta2": u.delta2,
        "E0": e0,
        "E1": e1,
        "E1_newton_shift": newton_shift,
    });
    out.write(to_json(&report)?.as_bytes())
}

fn cmd_simulate(params: &ModelParams, a: &SimulateArgs, tol: Option<f64>, out: &Output) -> Result<(), CliError> {
    if !(a.t_start.is_finite() && a.t_end.is_finite()) {
        return Err(CliError::Validation("time span must be finite".into()));
    }
    let x0 = match &a.x0 {
        Some(s) => parse_state(s)?,
        None => match default_section(params)? {
            Some((_, seed)) => seed,
            None => {
                return Err(CliError::NotFound(
                    "no endemic equilibrium to start next to; pass --x0".into(),
                ));
            }
        },
    };
    let mut opts = IntegratorOptions::for_model(params);
    if let Some(t) = tol {
        opts = opts.with_tolerances(t, 1e-2 * t * params.t_total);
    }
    if let Some(n) = a.max_steps {
        opts.max_steps = n;
    }
    let span = (a.t_start, a.t_end);
    let mut buf = Vec::new();
    let status = if a.full {
        let p0 = params.t_total - x0.n();
        if p0 < 0.0 {
            return Err(CliError::Validation(format!("S + I + U = {} exceeds T_total", x0.n())));
        }
        let x = FullState::from_core(x0, params.t_total).to_array();
        let tr = integrate_partial(&FullSystem { params: *params }, x, span, opts)?;
        // keep the S, I, U columns first
        let reordered = Trajectory {
            states: tr.states.iter().map(|s| [s[1], s[2], s[3], s[0]]).collect(),
            segments: Vec::new(),
            ..tr
        };
        write_trajectory_csv(&mut buf, ["S", "I", "U", "P"], &reordered, None)?;
        reordered.status
    } else {
        let field = ReducedSystem { params: *params };
        let tr = integrate_partial(&field, x0.to_array(), span, opts)?;
        let events = if a.events {
            let Some((sec, _)) = default_section(params)? else {
                return Err(CliError::NotFound(
                    "--events needs the endemic equilibrium, which does not exist".into(),
                ));
            };
            // crossings are searched on the integrated span only
            let t_len = tr.times.last().copied().unwrap_or(a.t_start) - a.t_start;
            if t_len > 0.0 {
                match section_crossings(&field, x0.to_array(), &sec, t_len, usize::MAX, opts) {
                    Ok(c) => c
                        .into_iter()
                        .map(|mut c| {
                            c.t += a.t_start;
                            c
                        })
                        .collect(),
                    Err(tbt_core::Error::NoCrossing { .. }) => Vec::new(),
                    Err(e) => return Err(e.into()),
                }
            } else {
                Vec::new()
            }
        } else {
            Vec::new()
        };
        write_trajectory_csv(&mut buf, ["S", "I", "U"], &tr, a.events.then_some(&events[..]))?;
        tr.status
    };
    out.write(&buf)?;
    match status {
        SolverStatus::Success => Ok(()),
        SolverStatus::Failed(msg) => Err(CliError::Numerical(format!("integration stopped early: {msg}"))),
    }
}

fn check_ramp(from: f64, to: f64, steps: usize) -> Result<Vec<f64>, CliError> {
    if !(from.is_finite() && to.is_finite()) || steps < 2 {
        return Err(CliError::Validation(
            "ramp needs finite ends and at least 2 steps".into(),
        ));
    }
    Ok(linspace(from, to, steps))
}

fn cmd_sweep(params: &ModelParams, a: &SweepArgs, out: &Output) -> Result<(), CliError> {
    let values = check_ramp(a.from, a.to, a.steps)?;
    let exec = if a.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let rows = sweep_branch(params, a.param, &values, exec);
    let mut buf = Vec::new();
    write_branch_csv(&mut buf, &rows)?;
    out.write(&buf)?;
    if let Some(path) = &a.report {
        let (found, transcritical, detail) = match detect_transcritical(params, a.param, &rows) {
            Ok(r) => (true, Some(r), None),
            Err(tbt_core::Error::NoCrossing { .. }) => {
                (false, None, Some("R0 does not cross 1 on the ramp".to_string()))
            }
            Err(e) => return Err(e.into()),
        };
        let report = json!({
            "schema_version": SCHEMA_VERSION,
            "param": a.param,
            "found": found,
            "transcritical": transcritical,
            "detail": detail,
        });
        write_file(path, to_json(&report)?.as_bytes())?;
    }
    Ok(())
}

fn cmd_hopf(params: &ModelParams, a: &HopfArgs, tol: Option<f64>, out: &Output) -> Result<(), CliError> {
    let tol = tol.unwrap_or(1e-10);
    let outcome = find_hopf(params, a.param, (a.from, a.to), tol)?;
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "params": params,
        "param": a.param,
        "bracket": [a.from, a.to],
        "found": outcome.point().is_some(),
        "result": outcome,
    });
    out.write(to_json(&report)?.as_bytes())
}

fn cmd_cycle(params: &ModelParams, a: &CycleArgs, tol: Option<f64>, out: &Output) -> Result<(), CliError> {
    let tol = tol.unwrap_or(1e-8 * params.t_total);
    if let Some(param) = a.ramp {
        let values = check_ramp(a.from.unwrap_or(f64::NAN), a.to.unwrap_or(f64::NAN), a.steps)?;
        let table = homoclinic_proximity(params, param, &values, tol)?;
        let report = json!({
            "schema_version": SCHEMA_VERSION,
            "params": params,
            "found": !table.rows.is_empty(),
            "ramp": table,
        });
        return out.write(to_json(&report)?.as_bytes());
    }
    let mut opts = CycleOptions::for_model(params, tol);
    opts.max_returns = a.max_returns;
    let setup = default_section(params)?;
    let (section, outcome) = match setup {
        Some((sec, default_seed)) => {
            let seed = match &a.seed {
                Some(s) => parse_state(s)?,
                None => default_seed,
            };
            (Some(sec), find_limit_cycle_with(params, &sec, &seed, &opts)?)
        }
        None => {
            // reports the missing endemic equilibrium as a NoCycle outcome
            let sec = SectionSpec::new([0.0, 1.0, 0.0], [0.0; 3], Direction::Positive)?;
            (None, find_limit_cycle_with(params, &sec, &CoreState::default(), &opts)?)
        }
    };
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "params": params,
        "found": outcome.cycle().is_some(),
        "section": section.as_ref().map(section_json),
        "result": outcome,
    });
    out.write(to_json(&report)?.as_bytes())
}

#[derive(Serialize)]
struct Versioned<T: Serialize> {
    schema_version: u32,
    #[serde(flatten)]
    body: T,
}

fn cmd_tbt(params: &ModelParams, out: &Output) -> Result<(), CliError> {
    let point = locate_tbt_point(params)?;
    out.write(
        to_json(&Versioned {
            schema_version: SCHEMA_VERSION,
            body: point,
        })?
        .as_bytes(),
    )
}

fn cmd_normal_form(params: &ModelParams, a: &NormalFormArgs, out: &Output) -> Result<(), CliError> {
    let at = if a.as_given {
        *params
    } else {
        locate_tbt_point(params)?.params
    };
    let mut opts = NormalFormOptions::with_scale(at.t_total);
    if !(a.step.is_finite() && a.step > 0.0) {
        return Err(CliError::Validation(format!("--step must be positive, got {}", a.step)));
    }
    opts.step = a.step;
    opts.fit = if a.no_fit {
        None
    } else {
        Some(FitOptions {
            radius: a.fit_radius.unwrap_or(1e-3 * at.t_total),
            points: a.fit_points,
            exec: if a.sequential {
                Execution::Sequential
            } else {
                Execution::Parallel
            },
        })
    };
    let report = bt_quadratic_coeffs_opts(&at, &opts)?;
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "params": at,
        "report": report,
    });
    out.write(to_json(&doc)?.as_bytes())
}
