//! `kipa`: command-line driver for the harmonic-balance analyses.
//!
//! Exit status is 0 on success, 1 on input errors (bad flags, unreadable or
//! invalid files) and 2 when a solver fails.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use kipa_core::studio::sweep::{run_sweep, Analysis, Num, SweepResult, SweepSpec, Table};
use kipa_core::studio::{calibrate_lumped_model, CalibrationTargets, TargetsFile};
use kipa_core::Circuit;
use serde_json::{json, Map, Value};

#[derive(Parser, Debug)]
#[command(name = "kipa", version, about = "Multitone harmonic-balance simulation of kinetic-inductance parametric amplifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Large-signal reflection spectrum under a single drive tone.
    S11,
    /// Gain spectrum of the two-pump amplifier.
    Gain,
    /// Peak gain over pump center frequency and pump power.
    GainMap,
    /// Degenerate gain versus signal or pump phase.
    Phase,
    /// Drive power at which the reflection response turns bistable.
    Bifurcation,
    /// Fits the lumped model to resonance and coupling targets and writes its circuit file.
    Calibrate {
        /// Targets JSON (f_r_hz, kappa_e_hz, kappa_i_hz, lk0_h, istar_a, ...); defaults to the reference device.
        #[arg(long)]
        targets: Option<PathBuf>,
    },
    /// Checks a circuit file (and optionally a sweep file) and lists violations.
    Validate,
}

#[derive(Args, Debug)]
struct Common {
    /// Circuit JSON file.
    #[arg(long, global = true)]
    circuit: Option<PathBuf>,
    /// Sweep specification JSON file.
    #[arg(long, global = true)]
    sweep: Option<PathBuf>,
    /// Output file (standard output when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Reserved; all analyses are deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

/// Marks errors raised by the numerical solvers.
#[derive(Debug)]
struct SolverFailure(kipa_core::Error);

impl std::fmt::Display for SolverFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

impl std::error::Error for SolverFailure {}

fn classify(e: kipa_core::Error) -> anyhow::Error {
    if e.is_solver_failure() {
        anyhow!(SolverFailure(e))
    } else {
        anyhow!(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<SolverFailure>()) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().context("cannot start worker threads")?;
    match &cli.command {
        Command::S11 => pool.install(|| sweep(common, Analysis::S11)),
        Command::Gain => pool.install(|| sweep(common, Analysis::Gain)),
        Command::GainMap => pool.install(|| sweep(common, Analysis::GainMap)),
        Command::Phase => pool.install(|| sweep(common, Analysis::Phase)),
        Command::Bifurcation => pool.install(|| sweep(common, Analysis::Bifurcation)),
        Command::Calibrate { targets } => calibrate(common, targets.as_deref()),
        Command::Validate => validate(common),
    }
}

fn load_circuit(common: &Common) -> Result<Circuit> {
    let path = common.circuit.as_ref().ok_or_else(|| anyhow!("--circuit is required"))?;
    if !path.exists() {
        bail!("circuit file {} does not exist", path.display());
    }
    Circuit::load(path).map_err(classify).with_context(|| format!("loading circuit {}", path.display()))
}

fn sweep(common: &Common, analysis: Analysis) -> Result<()> {
    let circuit = load_circuit(common)?;
    let path = common.sweep.as_ref().ok_or_else(|| anyhow!("--sweep is required"))?;
    let spec = SweepSpec::load(path).map_err(classify)?;
    let start = Instant::now();
    let result = run_sweep(&circuit, analysis, &spec).map_err(classify)?;
    let elapsed = start.elapsed().as_secs_f64();
    if common.verbose {
        eprintln!("{}: {} points in {elapsed:.3} s on {} threads", analysis.name(), result.total_points, rayon::current_num_threads());
    }
    if result.failed_points > 0 {
        eprintln!("warning: {} of {} points did not converge", result.failed_points, result.total_points);
    }
    for (k, v) in &result.summary {
        eprintln!("{k} = {}", Num(*v));
    }
    match common.format {
        Format::Csv => write_csv(&result, common.out.as_deref()),
        Format::Json => write_json(&result, &spec, common, elapsed),
    }
}

/// The primary table goes to `out`; further tables go beside it as `<stem>.<name>.csv`.
fn write_csv(result: &SweepResult, out: Option<&Path>) -> Result<()> {
    let Some(out) = out else {
        let stdout = std::io::stdout();
        let mut w = stdout.lock();
        for (i, t) in result.tables.iter().enumerate() {
            if i > 0 {
                writeln!(w)?;
            }
            t.write_csv(&mut w)?;
        }
        return Ok(());
    };
    write_table(result.primary(), out)?;
    for t in &result.tables[1..] {
        let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
        write_table(t, &out.with_file_name(format!("{stem}.{}.csv", t.name)))?;
    }
    Ok(())
}

fn write_table(t: &Table, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?);
    t.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn records(t: &Table) -> Value {
    let rows = t
        .rows
        .iter()
        .map(|r| {
            let m: Map<String, Value> =
                t.columns.iter().zip(r).map(|(c, v)| (c.clone(), serde_json::to_value(v).unwrap_or(Value::Null))).collect();
            Value::Object(m)
        })
        .collect();
    Value::Array(rows)
}

fn write_json(result: &SweepResult, spec: &SweepSpec, common: &Common, elapsed: f64) -> Result<()> {
    let tables: Map<String, Value> = result.tables.iter().map(|t| (t.name.clone(), records(t))).collect();
    let doc = json!({
        "tool": "kipa",
        "version": env!("CARGO_PKG_VERSION"),
        "analysis": result.analysis.name(),
        "circuit": common.circuit.as_ref().map(|p| p.display().to_string()),
        "spec": spec,
        "threads": rayon::current_num_threads(),
        "elapsed_s": elapsed,
        "total_points": result.total_points,
        "failed_points": result.failed_points,
        "summary": result.summary,
        "tables": tables,
    });
    let text = serde_json::to_string_pretty(&doc)? + "\n";
    match &common.out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn calibrate(common: &Common, targets: Option<&Path>) -> Result<()> {
    let t: CalibrationTargets = match targets {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read targets file {}", p.display()))?;
            let f: TargetsFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
            f.into()
        }
        None => CalibrationTargets::default(),
    };
    let m = calibrate_lumped_model(&t).map_err(classify)?;
    let two_pi = 2.0 * std::f64::consts::PI;
    eprintln!("f_r_hz = {}", Num(m.linear.omega_r / two_pi));
    eprintln!("kappa_e_hz = {}", Num(m.linear.kappa_e / two_pi));
    eprintln!("kappa_i_hz = {}", Num(m.linear.kappa_i / two_pi));
    eprintln!("cc_f = {}", Num(m.cc));
    eprintln!("c_f = {}", Num(m.c));
    if let Some(r) = m.r {
        eprintln!("r_ohm = {}", Num(r));
    }
    eprintln!("l_pad_h = {}", Num(m.l_pad));
    eprintln!("kerr_rad_per_s_per_j = {}", Num(m.kerr()));
    eprintln!("critical_power_dbm = {}", Num(m.critical_power_dbm()));
    let text = m.circuit.to_json_string().map_err(classify)? + "\n";
    match &common.out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn validate(common: &Common) -> Result<()> {
    let path = common.circuit.as_ref().ok_or_else(|| anyhow!("--circuit is required"))?;
    let circuit = load_circuit(common)?;
    let violations = circuit.validate();
    if let Some(s) = &common.sweep {
        SweepSpec::load(s).map_err(classify)?;
    }
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("{v}");
        }
        bail!("{} has {} violation(s)", path.display(), violations.len());
    }
    println!(
        "{}: ok ({} nodes, {} elements, {} ports, {} kinetic inductors)",
        path.display(),
        circuit.nodes.len(),
        circuit.elements.len(),
        circuit.ports.len(),
        circuit.kinetic_inductors().count()
    );
    Ok(())
}
