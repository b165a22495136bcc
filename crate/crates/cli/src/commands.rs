use std::f64::consts::TAU;
use std::fmt::Write as _;

use blangevin_core::bloch::{build_generator, evolve, phases_from_rates};
use blangevin_core::oracle::{
    closed_cycle_phase, compare_with_langevin, discretize_bath, eigen_superposition, propagate_ensemble,
    thermal_initial_state, ComparisonContext, Frame, PropagationSettings,
};
use blangevin_core::spectral::compute_rate_set;
use blangevin_core::{Grid, PhaseResult, RateSet};
use rayon::prelude::*;

use crate::config::{Format, RunConfig, Setup};
use crate::error::{CliError, Result};
use crate::record::{OracleSummary, ResultRecord, SweepPoint, Trajectory, TRAJECTORY_COLUMNS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::Subcommand)]
pub enum Command {
    /// Decay rates and level shifts.
    Rates,
    /// Dynamical and geometric phase over one cycle.
    Phase,
    /// Integrate the averaged Bloch equations.
    Evolve,
    /// Exact propagation with a discretized bath.
    Oracle,
    /// Rates and phases over a list of parameter values.
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Rates => "rates",
            Command::Phase => "phase",
            Command::Evolve => "evolve",
            Command::Oracle => "oracle",
            Command::Sweep => "sweep",
        }
    }
}

/// Environment variable capping sweep parallelism.
pub const WORKERS_ENV: &str = "BLANGEVIN_WORKERS";

fn rates_and_phases(setup: &Setup) -> Result<(RateSet, PhaseResult)> {
    let rates = compute_rate_set(&setup.model, &setup.protocol)?;
    let phases = phases_from_rates(&rates, &setup.protocol);
    Ok((rates, phases))
}

pub fn execute(command: Command, config: &RunConfig) -> Result<ResultRecord> {
    let setup = config.setup()?;
    let (rates, phases) = rates_and_phases(&setup)?;
    let mut record = ResultRecord::new(command.name(), config, rates, phases)?;
    if !phases.window.passed() {
        log::warn!(
            "adiabatic window violated: gamma_perp={} Omega={} omega0={}",
            phases.window.gamma_perp,
            phases.window.omega,
            phases.window.omega0
        );
    }
    match command {
        Command::Rates | Command::Phase => {}
        Command::Evolve => record.trajectory = Some(run_evolve(config, &setup, &rates)?),
        Command::Oracle => {
            let (trajectory, summary) = run_oracle(config, &setup, &rates, &phases)?;
            record.trajectory = Some(trajectory);
            record.oracle = Some(summary);
        }
        Command::Sweep => record.sweep = Some(run_sweep(config)?),
    }
    Ok(record)
}

fn run_evolve(config: &RunConfig, setup: &Setup, rates: &RateSet) -> Result<Trajectory> {
    let p = &setup.protocol;
    let gen = build_generator(rates, p.omega0(), p.theta())?;
    let t_final = config.integrator.cycles * p.period();
    let dt = config.integrator.dt.unwrap_or_else(|| default_step(gen.fastest_rate(), gen.max_step(), t_final));
    let traj = evolve(&gen, config.integrator.s0, t_final, dt)?;
    let traj = traj.decimate(config.integrator.record_every);
    let phase = traj.phase();
    let rows = traj
        .times
        .iter()
        .zip(&traj.states)
        .zip(traj.s_plus())
        .zip(phase)
        .map(|(((t, s), sp), arg)| [*t, s[0], s[1], s[2], sp.norm(), arg])
        .collect();
    Ok(Trajectory::new(rows))
}

/// RK4 shrinks a free precession at rate `w` by `(w·dt)⁶/144` per step; the
/// default keeps the accumulated loss over `t_final` below `LENGTH_BUDGET`.
fn default_step(w: f64, limit: f64, t_final: f64) -> f64 {
    const LENGTH_BUDGET: f64 = 1e-13;
    let dt = (144.0 * LENGTH_BUDGET / (w.powi(6) * t_final)).powf(0.2);
    dt.min(limit)
}

fn run_oracle(
    config: &RunConfig,
    setup: &Setup,
    rates: &RateSet,
    phases: &PhaseResult,
) -> Result<(Trajectory, OracleSummary)> {
    let (model, protocol) = (&setup.model, &setup.protocol);
    let o = &config.oracle;
    let grid = if config.refined_grid()? {
        Grid::resonance(model, protocol.b0())?
    } else {
        Grid::Linear
    };
    let bath = discretize_bath(model, o.modes, grid, o.n_max)?;
    let frame = config.frame()?;
    let duration = o.cycles * protocol.period();
    let settings = PropagationSettings::new(config.steps_per_cycle())
        .frame(frame)
        .duration(duration)
        .record_every(o.record_every);
    let ensemble = thermal_initial_state(&bath, o.samples, o.seed);
    let result = propagate_ensemble(
        protocol,
        &bath,
        &eigen_superposition(protocol, frame),
        &ensemble,
        &settings,
    )?;
    if !result.diagnostics.norm_ok {
        return Err(CliError::Numerical(blangevin_core::Error::Integrator(format!(
            "state norm drifted by {:e}",
            result.diagnostics.max_norm_drift
        ))));
    }
    if !result.diagnostics.truncation_ok {
        log::warn!(
            "highest Fock level holds {:e} of the weight; raise oracle.n_max",
            result.diagnostics.max_top_level_occupancy
        );
    }
    let closed_phase = match frame {
        Frame::Lab => closed_cycle_phase(protocol),
        Frame::Adiabatic => protocol.omega0() * protocol.period(),
    };
    let context = ComparisonContext {
        protocol,
        bath: &bath,
        fit_window: (o.fit_start.unwrap_or(0.0), o.fit_end.unwrap_or(duration)),
        closed_phase: Some(closed_phase),
    };
    let comparison = compare_with_langevin(&result, rates, phases, &context)?;
    let rows = result
        .times
        .iter()
        .zip(&result.states)
        .zip(&result.phase)
        .map(|((t, s), arg)| [*t, s[0], s[1], s[2], 0.5 * s[0].hypot(s[1]), *arg])
        .collect();
    let summary = OracleSummary {
        frequencies: bath.frequencies().to_vec(),
        couplings: bath.couplings().to_vec(),
        seed: ensemble.seed(),
        closed_phase,
        diagnostics: result.diagnostics,
        comparison,
    };
    Ok((Trajectory::new(rows), summary))
}

/// Worker cap from the environment; `None` leaves rayon's default.
pub fn workers() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(None),
        Ok(raw) => match raw.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Invalid(format!("{WORKERS_ENV} must be a positive integer, got '{raw}'"))),
        },
    }
}

fn run_sweep(config: &RunConfig) -> Result<Vec<SweepPoint>> {
    let path = config
        .sweep
        .parameter
        .as_deref()
        .ok_or_else(|| CliError::Invalid("sweep needs sweep.parameter and sweep.values".into()))?;
    let points: Vec<RunConfig> = config
        .sweep
        .values
        .iter()
        .map(|&v| config.with_value(path, v))
        .collect::<Result<_>>()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers()? {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Invalid(format!("cannot start workers: {e}")))?;
    // collect keeps input order whatever the scheduling
    pool.install(|| {
        points
            .par_iter()
            .zip(&config.sweep.values)
            .map(|(point, &value)| {
                let (rates, phases) = rates_and_phases(&point.setup()?)?;
                Ok(SweepPoint { value, rates, phases })
            })
            .collect()
    })
}

fn phase_fields(p: &PhaseResult) -> [(&'static str, f64); 6] {
    [
        ("phi_d", p.phi_d),
        ("phi_g", p.phi_g),
        ("phi_total", p.phi_total),
        ("phi_berry_ideal", p.phi_berry_ideal),
        ("correction_fraction", p.correction_fraction),
        ("geometric_deficit", p.geometric_deficit()),
    ]
}

fn window_word(p: &PhaseResult) -> &'static str {
    if p.window.passed() {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Shortest decimal that reads back to the same `f64`.
pub fn float(x: f64) -> String {
    format!("{x:?}")
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(Vec::new())
}

fn csv_error(e: impl std::fmt::Display) -> CliError {
    CliError::Encode(e.to_string())
}

/// Serializes the record as CSV (with `#` metadata lines) or JSON.
pub fn render(record: &ResultRecord, command: Command, format: Format) -> Result<Vec<u8>> {
    if format == Format::Json {
        let mut out = serde_json::to_vec_pretty(record).map_err(csv_error)?;
        out.push(b'\n');
        return Ok(out);
    }
    let mut head = String::new();
    let _ = writeln!(head, "# tool: {} {}", record.tool, record.version);
    let _ = writeln!(head, "# command: {}", record.command);
    let _ = writeln!(head, "# fingerprint: sha256:{}", record.fingerprint);
    match record.timestamp {
        Some(t) => {
            let _ = writeln!(head, "# timestamp: {t}");
        }
        None => head.push_str("# timestamp: none\n"),
    }
    let mut w = csv_writer();
    match command {
        Command::Rates => {
            w.write_record(["quantity", "value"]).map_err(csv_error)?;
            for (name, value) in record.rates.fields() {
                w.write_record([name, &float(value)]).map_err(csv_error)?;
            }
            w.write_record(["adiabatic_window", window_word(&record.phases)])
                .map_err(csv_error)?;
        }
        Command::Phase => {
            w.write_record(["quantity", "value"]).map_err(csv_error)?;
            for (name, value) in phase_fields(&record.phases) {
                w.write_record([name, &float(value)]).map_err(csv_error)?;
            }
            w.write_record(["adiabatic_window", window_word(&record.phases)])
                .map_err(csv_error)?;
        }
        Command::Evolve | Command::Oracle => {
            if let Some(o) = &record.oracle {
                let d = &o.diagnostics;
                let c = &o.comparison;
                let opt = |x: Option<f64>| x.map(float).unwrap_or_else(|| "none".into());
                let _ = writeln!(head, "# dimension: {}", d.dimension);
                let _ = writeln!(head, "# samples: {}", d.samples);
                let _ = writeln!(head, "# max_norm_drift: {}", float(d.max_norm_drift));
                let _ = writeln!(head, "# max_top_level_occupancy: {}", float(d.max_top_level_occupancy));
                let _ = writeln!(head, "# decay_fitted: {}", opt(c.decay_fitted));
                let _ = writeln!(head, "# decay_predicted: {}", float(c.decay_predicted));
                let _ = writeln!(head, "# decay_discrete: {}", float(c.decay_discrete));
                let _ = writeln!(head, "# phase_measured: {}", opt(c.phase_measured));
                let _ = writeln!(head, "# phase_predicted: {}", float(c.phase_predicted));
                let _ = writeln!(head, "# deficit_measured: {}", opt(c.deficit_measured));
                let _ = writeln!(head, "# deficit_predicted: {}", float(c.deficit_predicted));
            }
            w.write_record(TRAJECTORY_COLUMNS).map_err(csv_error)?;
            for row in record.trajectory.iter().flat_map(|t| &t.rows) {
                w.write_record(row.map(float)).map_err(csv_error)?;
            }
        }
        Command::Sweep => {
            let path = record.config.sweep.parameter.clone().unwrap_or_default();
            w.write_record(["parameter", "value", "metric", "result"]).map_err(csv_error)?;
            for point in record.sweep.iter().flatten() {
                let value = float(point.value);
                let metrics = point.rates.fields().into_iter().chain(phase_fields(&point.phases));
                for (name, result) in metrics {
                    w.write_record([path.as_str(), &value, name, &float(result)]).map_err(csv_error)?;
                }
                let pass = if point.phases.window.passed() { "1" } else { "0" };
                w.write_record([path.as_str(), &value, "window_pass", pass]).map_err(csv_error)?;
            }
        }
    }
    let body = w.into_inner().map_err(csv_error)?;
    let mut out = head.into_bytes();
    out.extend(body);
    Ok(out)
}

/// Human-readable digest of a record.
pub fn summary(record: &ResultRecord) -> String {
    let mut s = String::new();
    let p = &record.phases;
    match record.command.as_str() {
        "rates" => {
            for (name, value) in record.rates.fields() {
                let _ = writeln!(s, "{name:<16}{value:>24.12e}");
            }
        }
        "phase" => {
            let _ = writeln!(s, "{:<16}{:>24.12}", "Phi_D", p.phi_d);
            let _ = writeln!(s, "{:<16}{:>24.12}", "Phi_G", p.phi_g);
            let _ = writeln!(s, "{:<16}{:>24.12}", "Phi_total", p.phi_total);
            let _ = writeln!(s, "{:<16}{:>24.12}", "Berry ideal", p.phi_berry_ideal);
            let _ = writeln!(s, "{:<16}{:>24.12e}", "correction", p.correction_fraction);
            let _ = writeln!(s, "{:<16}{:>24.12}", "Phi_G/2pi", p.phi_g / TAU);
        }
        "evolve" | "oracle" => {
            if let Some(last) = record.trajectory.as_ref().and_then(|t| t.rows.last()) {
                let _ = writeln!(
                    s,
                    "t={:.6} s=({:.9}, {:.9}, {:.9}) |s+|={:.9e} arg s+={:.9}",
                    last[0], last[1], last[2], last[3], last[4], last[5]
                );
            }
            if let Some(o) = &record.oracle {
                let c = &o.comparison;
                let _ = writeln!(
                    s,
                    "dimension {} samples {} norm drift {:.3e} top level {:.3e}",
                    o.diagnostics.dimension,
                    o.diagnostics.samples,
                    o.diagnostics.max_norm_drift,
                    o.diagnostics.max_top_level_occupancy
                );
                let _ = writeln!(
                    s,
                    "decay fitted {:?} discrete {:.6e} continuum {:.6e}",
                    c.decay_fitted, c.decay_discrete, c.decay_predicted
                );
            }
        }
        "sweep" => {
            let n = record.sweep.as_ref().map_or(0, Vec::len);
            let _ = writeln!(s, "{n} sweep points");
        }
        _ => {}
    }
    let w = &p.window;
    let _ = writeln!(
        s,
        "ADIABATIC WINDOW: {} (gamma_perp={:.3e}, Omega={:.3e}, omega0={:.6}, margin {})",
        window_word(p),
        w.gamma_perp,
        w.omega,
        w.omega0,
        w.margin
    );
    s
}
