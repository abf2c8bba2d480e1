//! JSON sweep specifications and their tabular results.
//!
//! A spec names up to two axes over the swept quantities, fixed values for
//! the rest and solver options:
//!
//! ```json
//! {
//!   "axes": [{ "param": "f_s_hz", "start": 7.36e9, "stop": 7.38e9, "points": 201 }],
//!   "fixed": { "f_c_hz": 7.3716e9, "delta_f_hz": 133.5e6, "pump_power_dbm": -88.3 },
//!   "hb": { "newton_tol": 1e-10 }
//! }
//! ```
//!
//! Phases are radians (`phi_s_rad`); degree keys (`phi_s_deg`) are accepted
//! for fixed values and axes alike.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::calibrate::KipaModel;
use super::gain::{
    degenerate_phase_sweep, gain_at, gain_spectrum, peak_and_bandwidth, peak_gain_map, GainOptions, MapOptions,
    PhaseAxis, PumpSpec,
};
use super::spectra::{bifurcation_threshold, s11_spectrum, BifurcationOptions, S11Options};
use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::hb::HbOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Analysis {
    S11,
    Gain,
    GainMap,
    Phase,
    Bifurcation,
}

impl Analysis {
    pub fn name(self) -> &'static str {
        match self {
            Analysis::S11 => "s11",
            Analysis::Gain => "gain",
            Analysis::GainMap => "gain-map",
            Analysis::Phase => "phase",
            Analysis::Bifurcation => "bifurcation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    FSHz,
    SignalPowerDbm,
    PumpPowerDbm,
    FCHz,
    DeltaFHz,
    PhiSRad,
    PhiSDeg,
    PhiP1Rad,
    PhiP1Deg,
}

impl Param {
    /// Column name; degree axes are reported in radians.
    pub fn column(self) -> &'static str {
        match self {
            Param::FSHz => "f_s_hz",
            Param::SignalPowerDbm => "signal_power_dbm",
            Param::PumpPowerDbm => "pump_power_dbm",
            Param::FCHz => "f_c_hz",
            Param::DeltaFHz => "delta_f_hz",
            Param::PhiSRad | Param::PhiSDeg => "phi_s_rad",
            Param::PhiP1Rad | Param::PhiP1Deg => "phi_p1_rad",
        }
    }

    fn to_si(self, v: f64) -> f64 {
        match self {
            Param::PhiSDeg | Param::PhiP1Deg => v * PI / 180.0,
            _ => v,
        }
    }

    fn is(self, other: Param) -> bool {
        self.column() == other.column()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub param: Param,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(default)]
    pub scale: Scale,
    /// Explicit values, instead of `start`/`stop`/`points`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
}

impl Axis {
    pub fn linear(param: Param, start: f64, stop: f64, points: usize) -> Self {
        Self { param, start: Some(start), stop: Some(stop), points: Some(points), scale: Scale::Linear, values: vec![] }
    }

    pub fn list(param: Param, values: Vec<f64>) -> Self {
        Self { param, start: None, stop: None, points: None, scale: Scale::Linear, values }
    }

    /// Axis values in SI units (radians for phases).
    pub fn values(&self) -> Result<Vec<f64>> {
        let name = self.param.column();
        let raw = if !self.values.is_empty() {
            if self.start.is_some() || self.stop.is_some() || self.points.is_some() {
                return Err(Error::Config(format!("axis {name}: give either values or start/stop/points")));
            }
            self.values.clone()
        } else {
            let (Some(a), Some(b), Some(n)) = (self.start, self.stop, self.points) else {
                return Err(Error::Config(format!("axis {name}: needs start, stop and points")));
            };
            if n < 2 {
                return Err(Error::Config(format!("axis {name}: needs at least 2 points")));
            }
            let t = |i: usize| i as f64 / (n - 1) as f64;
            match self.scale {
                Scale::Linear => (0..n).map(|i| a + (b - a) * t(i)).collect(),
                Scale::Log => {
                    if !(a > 0.0 && b > 0.0) {
                        return Err(Error::Config(format!("axis {name}: log scale needs positive bounds")));
                    }
                    (0..n).map(|i| a * (b / a).powf(t(i))).collect()
                }
            }
        };
        if raw.len() < 2 {
            return Err(Error::Config(format!("axis {name}: needs at least 2 points")));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("axis {name}: non-finite value")));
        }
        Ok(raw.into_iter().map(|v| self.param.to_si(v)).collect())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixed {
    pub f_s_hz: Option<f64>,
    pub signal_power_dbm: Option<f64>,
    /// Signal level relative to each pump tone, used when no absolute
    /// signal power is given.
    pub signal_dbc: Option<f64>,
    pub pump_power_dbm: Option<f64>,
    pub f_c_hz: Option<f64>,
    pub delta_f_hz: Option<f64>,
    pub phi_s_rad: Option<f64>,
    pub phi_s_deg: Option<f64>,
    pub phi_p1_rad: Option<f64>,
    pub phi_p1_deg: Option<f64>,
    pub phi_p2_rad: Option<f64>,
    pub phi_p2_deg: Option<f64>,
}

fn phase(rad: Option<f64>, deg: Option<f64>, name: &str) -> Result<f64> {
    match (rad, deg) {
        (Some(_), Some(_)) => Err(Error::Config(format!("both {name}_rad and {name}_deg given"))),
        (Some(r), None) => Ok(r),
        (None, Some(d)) => Ok(d * PI / 180.0),
        (None, None) => Ok(0.0),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Optional; when present it must match the requested analysis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<Analysis>,
    pub axes: Vec<Axis>,
    #[serde(default)]
    pub fixed: Fixed,
    #[serde(default)]
    pub hb: HbOptions,
    /// Port name; defaults to the first port.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub port: Option<String>,
    /// Harmonics kept in single-tone analyses.
    #[serde(default = "default_harmonics")]
    pub harmonics: u32,
    /// Mixing orders over `(f_c, Δf, δ)` in pumped analyses.
    #[serde(default = "default_truncation")]
    pub truncation: [u32; 3],
    #[serde(default = "default_min_offset")]
    pub min_offset_hz: f64,
    /// Frequency order of continued single-tone sweeps.
    #[serde(default)]
    pub direction: Direction,
    #[serde(default = "default_hysteresis")]
    pub hysteresis_tol: f64,
    #[serde(default = "default_resolution")]
    pub resolution_db: f64,
    #[serde(default = "default_refine")]
    pub refine_iterations: usize,
}

fn default_harmonics() -> u32 {
    S11Options::default().harmonics
}
fn default_truncation() -> [u32; 3] {
    GainOptions::default().truncation
}
fn default_min_offset() -> f64 {
    GainOptions::default().min_offset_hz
}
fn default_hysteresis() -> f64 {
    BifurcationOptions::default().hysteresis_tol
}
fn default_resolution() -> f64 {
    BifurcationOptions::default().resolution_db
}
fn default_refine() -> usize {
    MapOptions::default().refine_iterations
}

impl SweepSpec {
    pub fn new(axes: Vec<Axis>, fixed: Fixed) -> Self {
        Self {
            analysis: None,
            axes,
            fixed,
            hb: HbOptions::default(),
            port: None,
            harmonics: default_harmonics(),
            truncation: default_truncation(),
            min_offset_hz: default_min_offset(),
            direction: Direction::Up,
            hysteresis_tol: default_hysteresis(),
            resolution_db: default_resolution(),
            refine_iterations: default_refine(),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read sweep file {}: {e}", path.display())))?;
        Self::from_json_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    fn port_index(&self, c: &Circuit) -> Result<usize> {
        let idx = match &self.port {
            Some(name) => c.port_index(name).ok_or_else(|| Error::Config(format!("no port named {name}")))?,
            None => 0,
        };
        if idx >= c.ports.len() {
            return Err(Error::Config("circuit has no ports".into()));
        }
        Ok(idx)
    }

    /// Checks the axis set against `allowed` (`required` first) and returns
    /// the values of each allowed parameter that is swept.
    fn axes_for(&self, analysis: Analysis, required: &[Param], optional: &[Param]) -> Result<Vec<(Param, Vec<f64>)>> {
        if let Some(a) = self.analysis {
            if a != analysis {
                return Err(Error::Config(format!("sweep is for {}, not {}", a.name(), analysis.name())));
            }
        }
        if self.axes.is_empty() || self.axes.len() > 2 {
            return Err(Error::Config(format!("a sweep has 1 or 2 axes, got {}", self.axes.len())));
        }
        if self.axes.len() == 2 && self.axes[0].param.is(self.axes[1].param) {
            return Err(Error::Config(format!("axis {} given twice", self.axes[0].param.column())));
        }
        for ax in &self.axes {
            if !required.iter().chain(optional).any(|p| p.is(ax.param)) {
                return Err(Error::Config(format!(
                    "{} sweeps cannot vary {}",
                    analysis.name(),
                    ax.param.column()
                )));
            }
        }
        for r in required {
            if !self.axes.iter().any(|a| a.param.is(*r)) {
                return Err(Error::Config(format!("{} sweeps need a {} axis", analysis.name(), r.column())));
            }
        }
        self.axes.iter().map(|a| Ok((a.param, a.values()?))).collect()
    }

    fn fixed_value(&self, p: Param) -> Option<f64> {
        let f = &self.fixed;
        match p {
            Param::FSHz => f.f_s_hz,
            Param::SignalPowerDbm => f.signal_power_dbm,
            Param::PumpPowerDbm => f.pump_power_dbm,
            Param::FCHz => f.f_c_hz,
            Param::DeltaFHz => f.delta_f_hz,
            Param::PhiSRad | Param::PhiSDeg => phase(f.phi_s_rad, f.phi_s_deg, "phi_s").ok(),
            Param::PhiP1Rad | Param::PhiP1Deg => phase(f.phi_p1_rad, f.phi_p1_deg, "phi_p1").ok(),
        }
    }

    fn require(&self, p: Param) -> Result<f64> {
        self.fixed_value(p).ok_or_else(|| Error::Config(format!("fixed.{} is required", p.column())))
    }

    fn gain_options(&self, port: usize, pump_dbm: f64) -> Result<GainOptions> {
        let signal_dbc = match (self.fixed.signal_power_dbm, self.fixed.signal_dbc) {
            (Some(_), Some(_)) => return Err(Error::Config("give signal_power_dbm or signal_dbc, not both".into())),
            (Some(p), None) => p - pump_dbm,
            (None, Some(d)) => d,
            (None, None) => GainOptions::default().signal_dbc,
        };
        Ok(GainOptions { hb: self.hb, signal_dbc, truncation: self.truncation, min_offset_hz: self.min_offset_hz, port })
    }

    fn pump(&self, over: &[(Param, f64)]) -> Result<PumpSpec> {
        let get = |p: Param| over.iter().find(|(q, _)| q.is(p)).map(|&(_, v)| v).map_or_else(|| self.require(p), Ok);
        let mut pump = PumpSpec::new(get(Param::FCHz)?, get(Param::DeltaFHz)?, get(Param::PumpPowerDbm)?);
        pump.phase_p1 = phase(self.fixed.phi_p1_rad, self.fixed.phi_p1_deg, "phi_p1")?;
        pump.phase_p2 = phase(self.fixed.phi_p2_rad, self.fixed.phi_p2_deg, "phi_p2")?;
        Ok(pump)
    }
}

/// Shortest round-trip float text, switching to exponent form outside
/// `[1e-4, 1e16)` in magnitude.
#[derive(Debug, Clone, Copy)]
pub struct Num(pub f64);

impl std::fmt::Display for Num {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let a = self.0.abs();
        if a == 0.0 || !a.is_finite() || (1e-4..1e16).contains(&a) {
            write!(f, "{}", self.0)
        } else {
            write!(f, "{:e}", self.0)
        }
    }
}

/// One output value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Value {
    Num(f64),
    Int(usize),
    Bool(bool),
}

impl std::fmt::Display for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Value::Num(x) => write!(f, "{}", Num(*x)),
            Value::Int(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

impl Value {
    pub fn as_f64(&self) -> f64 {
        match *self {
            Value::Num(x) => x,
            Value::Int(n) => n as f64,
            Value::Bool(b) => f64::from(u8::from(b)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i].as_f64()).collect())
    }

    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "{}", self.columns.join(","))?;
        for r in &self.rows {
            let line: Vec<String> = r.iter().map(Value::to_string).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub analysis: Analysis,
    /// The primary table holds one record per grid point.
    pub tables: Vec<Table>,
    pub summary: BTreeMap<String, f64>,
    /// Records flagged `converged = false`.
    pub failed_points: usize,
    pub total_points: usize,
}

impl SweepResult {
    pub fn primary(&self) -> &Table {
        &self.tables[0]
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    fn new(analysis: Analysis, primary: Table) -> Self {
        let conv = primary.columns.iter().position(|c| c == "converged");
        let total_points = primary.rows.len();
        let failed_points = conv.map_or(0, |i| primary.rows.iter().filter(|r| r[i] == Value::Bool(false)).count());
        Self { analysis, tables: vec![primary], summary: BTreeMap::new(), failed_points, total_points }
    }
}

/// Runs `analysis` over the spec's grid. Independent rows run on the current
/// rayon pool; results are assembled in grid order.
pub fn run_sweep(c: &Circuit, analysis: Analysis, spec: &SweepSpec) -> Result<SweepResult> {
    spec.hb.validate()?;
    let report = c.validate();
    if let Some(v) = report.first() {
        return Err(Error::InvalidCircuit(v.to_string()));
    }
    let port = spec.port_index(c)?;
    match analysis {
        Analysis::S11 => run_s11(c, spec, port),
        Analysis::Gain => run_gain(c, spec, port),
        Analysis::GainMap => run_gain_map(c, spec, port),
        Analysis::Phase => run_phase(c, spec, port),
        Analysis::Bifurcation => run_bifurcation(c, spec, port),
    }
}

/// Splits axes into the required inner axis and an optional outer one.
fn inner_outer(axes: Vec<(Param, Vec<f64>)>, inner: Param) -> (Vec<f64>, Option<(Param, Vec<f64>)>) {
    let mut xs = Vec::new();
    let mut outer = None;
    for (p, v) in axes {
        if p.is(inner) {
            xs = v;
        } else {
            outer = Some((p, v));
        }
    }
    (xs, outer)
}

fn run_s11(c: &Circuit, spec: &SweepSpec, port: usize) -> Result<SweepResult> {
    let axes = spec.axes_for(Analysis::S11, &[Param::FSHz], &[Param::SignalPowerDbm])?;
    let (freqs, outer) = inner_outer(axes, Param::FSHz);
    let powers = match outer {
        Some((_, v)) => v,
        None => vec![spec.require(Param::SignalPowerDbm)?],
    };
    let opts = S11Options { hb: spec.hb, harmonics: spec.harmonics, port };
    let mut order = freqs.clone();
    if spec.direction == Direction::Down {
        order.reverse();
    }
    let rows: Vec<Vec<_>> = powers
        .par_iter()
        .map(|&p| {
            let mut pts = s11_spectrum(c, p, &order, &opts)?;
            if spec.direction == Direction::Down {
                pts.reverse();
            }
            Ok(pts)
        })
        .collect::<Result<_>>()?;
    let mut t = Table::new(
        "s11",
        &["signal_power_dbm", "f_hz", "s11_re", "s11_im", "s11_db", "s11_phase_rad", "converged", "iters"],
    );
    for (&p, pts) in powers.iter().zip(&rows) {
        for pt in pts {
            t.rows.push(vec![
                Value::Num(p),
                Value::Num(pt.f),
                Value::Num(pt.s11.re),
                Value::Num(pt.s11.im),
                Value::Num(pt.db()),
                Value::Num(pt.s11.arg()),
                Value::Bool(pt.converged),
                Value::Int(pt.iterations),
            ]);
        }
    }
    Ok(SweepResult::new(Analysis::S11, t))
}

fn run_gain(c: &Circuit, spec: &SweepSpec, port: usize) -> Result<SweepResult> {
    let outer_params = [Param::PumpPowerDbm, Param::FCHz, Param::DeltaFHz, Param::SignalPowerDbm];
    let axes = spec.axes_for(Analysis::Gain, &[Param::FSHz], &outer_params)?;
    let (freqs, outer) = inner_outer(axes, Param::FSHz);
    let rows: Vec<Option<(Param, f64)>> = match &outer {
        None => vec![None],
        Some((p, vals)) => vals.iter().map(|&v| Some((*p, v))).collect(),
    };
    let spectra: Vec<Vec<_>> = rows
        .par_iter()
        .map(|o| {
            let over: Vec<(Param, f64)> = o.iter().copied().filter(|(p, _)| !p.is(Param::SignalPowerDbm)).collect();
            let pump = spec.pump(&over)?;
            let mut s = spec.clone();
            if let Some((Param::SignalPowerDbm, v)) = o {
                s.fixed.signal_power_dbm = Some(*v);
                s.fixed.signal_dbc = None;
            }
            let opts = s.gain_options(port, pump.power_dbm)?;
            match gain_spectrum(c, &pump, &freqs, &opts) {
                Err(e) if e.is_solver_failure() => {
                    Ok(freqs.iter().map(|&f| super::gain::GainPoint::failed(f, 0)).collect())
                }
                r => r,
            }
        })
        .collect::<Result<_>>()?;
    let mut cols: Vec<&str> = Vec::new();
    if let Some((p, _)) = &outer {
        cols.push(p.column());
    }
    let mut t = Table::new("gain", &[cols.clone(), vec!["f_s_hz", "gain_db", "idler_gain_db", "converged", "iters"]].concat());
    let mut peaks = Table::new("peaks", &[cols, vec!["peak_gain_db", "peak_f_hz", "bandwidth_3db_hz"]].concat());
    for (o, pts) in rows.iter().zip(&spectra) {
        let lead: Vec<Value> = o.iter().map(|&(_, v)| Value::Num(v)).collect();
        for pt in pts {
            let mut r = lead.clone();
            r.extend([
                Value::Num(pt.f_s),
                Value::Num(pt.gain_db),
                Value::Num(pt.idler_gain_db),
                Value::Bool(pt.converged),
                Value::Int(pt.iterations),
            ]);
            t.rows.push(r);
        }
        let (g, f, bw) = peak_and_bandwidth(pts);
        let mut r = lead;
        r.extend([Value::Num(g), Value::Num(f), Value::Num(bw)]);
        peaks.rows.push(r);
    }
    let mut res = SweepResult::new(Analysis::Gain, t);
    if outer.is_none() {
        let r = &peaks.rows[0];
        res.summary.insert("peak_gain_db".into(), r[0].as_f64());
        res.summary.insert("peak_f_hz".into(), r[1].as_f64());
        res.summary.insert("bandwidth_3db_hz".into(), r[2].as_f64());
    }
    res.tables.push(peaks);
    Ok(res)
}

fn run_gain_map(c: &Circuit, spec: &SweepSpec, port: usize) -> Result<SweepResult> {
    let axes = spec.axes_for(Analysis::GainMap, &[Param::FCHz, Param::PumpPowerDbm], &[])?;
    let (fcs, outer) = inner_outer(axes, Param::FCHz);
    let powers = outer.map(|(_, v)| v).unwrap_or_default();
    let delta_f = spec.require(Param::DeltaFHz)?;
    let gain = spec.gain_options(port, 0.0)?;
    if spec.fixed.signal_power_dbm.is_some() {
        return Err(Error::Config("gain maps take a relative signal level (signal_dbc)".into()));
    }
    let opts = MapOptions { gain, refine_iterations: spec.refine_iterations };
    let map = peak_gain_map(c, &fcs, delta_f, &powers, &opts)?;
    let mut t = Table::new("gain_map", &["f_c_hz", "pump_power_dbm", "gain_db", "idler_gain_db", "converged", "iters"]);
    for cell in &map.cells {
        t.rows.push(vec![
            Value::Num(cell.f_c),
            Value::Num(cell.power_dbm),
            Value::Num(cell.gain_db),
            Value::Num(cell.idler_gain_db),
            Value::Bool(cell.converged),
            Value::Int(cell.iterations),
        ]);
    }
    let mut peaks = Table::new("peaks", &["f_c_hz", "peak_gain_db", "optimal_pump_power_dbm"]);
    for p in &map.peaks {
        peaks.rows.push(vec![Value::Num(p.f_c), Value::Num(p.gain_db), Value::Num(p.power_dbm)]);
    }
    let mut res = SweepResult::new(Analysis::GainMap, t);
    let frac = 1.0 - res.failed_points as f64 / res.total_points as f64;
    res.summary.insert("converged_fraction".into(), frac);
    res.tables.push(peaks);
    Ok(res)
}

fn run_phase(c: &Circuit, spec: &SweepSpec, port: usize) -> Result<SweepResult> {
    let axes = spec.axes_for(Analysis::Phase, &[], &[Param::PhiSRad, Param::PhiP1Rad])?;
    if axes.len() != 1 {
        return Err(Error::Config("phase sweeps take exactly one axis (phi_s or phi_p1)".into()));
    }
    let (param, phases) = axes.into_iter().next().expect("one axis");
    let pump = spec.pump(&[])?;
    if let Some(fs) = spec.fixed.f_s_hz {
        if fs != pump.f_c {
            return Err(Error::Config(format!("phase sweeps are degenerate: f_s = {fs} Hz differs from f_c")));
        }
    }
    let opts = spec.gain_options(port, pump.power_dbm)?;
    let axis = if param.is(Param::PhiSRad) { PhaseAxis::Signal } else { PhaseAxis::Pump1 };
    let phase_s = phase(spec.fixed.phi_s_rad, spec.fixed.phi_s_deg, "phi_s")?;
    let sweep = degenerate_phase_sweep(c, &pump, axis, &phases, phase_s, &opts)?;
    let mut t = Table::new("phase", &[param.column(), "gain_db", "converged", "iters"]);
    for i in 0..phases.len() {
        t.rows.push(vec![
            Value::Num(phases[i]),
            Value::Num(sweep.gain_db[i]),
            Value::Bool(sweep.converged[i]),
            Value::Int(sweep.iterations[i]),
        ]);
    }
    let mut res = SweepResult::new(Analysis::Phase, t);
    res.summary.insert("max_gain_db".into(), sweep.max_gain_db);
    res.summary.insert("min_gain_db".into(), sweep.min_gain_db);
    res.summary.insert("max_phase_rad".into(), sweep.max_phase);
    res.summary.insert("min_phase_rad".into(), sweep.min_phase);
    let pi = gain_at(c, &pump, pump.f_c + opts.min_offset_hz, &opts, None).map(|(p, _)| p.gain_db);
    res.summary.insert("phase_insensitive_gain_db".into(), pi.unwrap_or(f64::NAN));
    Ok(res)
}

fn run_bifurcation(c: &Circuit, spec: &SweepSpec, port: usize) -> Result<SweepResult> {
    let axes = spec.axes_for(Analysis::Bifurcation, &[Param::FSHz, Param::SignalPowerDbm], &[])?;
    let (freqs, outer) = inner_outer(axes, Param::FSHz);
    let powers = outer.map(|(_, v)| v).unwrap_or_default();
    let lo = powers.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = powers.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let opts = BifurcationOptions {
        s11: S11Options { hb: spec.hb, harmonics: spec.harmonics, port },
        hysteresis_tol: spec.hysteresis_tol,
        resolution_db: spec.resolution_db,
    };
    let r = bifurcation_threshold(c, &freqs, lo, hi, &opts)?;
    let mut t = Table::new("probes", &["signal_power_dbm", "hysteresis", "max_step", "max_step_db", "bistable"]);
    for p in &r.probes {
        t.rows.push(vec![
            Value::Num(p.power_dbm),
            Value::Num(p.hysteresis),
            Value::Num(p.max_step),
            Value::Num(p.max_step_db),
            Value::Bool(p.bistable),
        ]);
    }
    let mut res = SweepResult::new(Analysis::Bifurcation, t);
    res.summary.insert("threshold_dbm".into(), r.threshold_dbm);
    res.summary.insert("bracket_lo_dbm".into(), r.bracket.0);
    res.summary.insert("bracket_hi_dbm".into(), r.bracket.1);
    if let Ok(m) = KipaModel::from_circuit(c) {
        res.summary.insert("duffing_critical_dbm".into(), m.critical_power_dbm());
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_text_round_trips() {
        for x in [0.0, -0.0, 1.5, 7.3716e9, 2.2168960981863153e-14, -1e-17, 1e20, 1e-4, f64::NAN] {
            let t = Num(x).to_string();
            let back: f64 = t.parse().unwrap();
            assert!(back.to_bits() == x.to_bits() || (x.is_nan() && back.is_nan()), "{x} -> {t}");
        }
        assert_eq!(Num(2.5e-14).to_string(), "2.5e-14");
        assert_eq!(Num(7.3716e9).to_string(), "7371600000");
    }

    #[test]
    fn axis_values_linear_log_and_list() {
        let a = Axis::linear(Param::FSHz, 1.0, 2.0, 3);
        assert_eq!(a.values().unwrap(), vec![1.0, 1.5, 2.0]);
        let mut l = Axis::linear(Param::FSHz, 1.0, 100.0, 3);
        l.scale = Scale::Log;
        let v = l.values().unwrap();
        assert!((v[1] - 10.0).abs() < 1e-12);
        let d = Axis::list(Param::PhiSDeg, vec![0.0, 180.0]);
        assert_eq!(d.values().unwrap(), vec![0.0, PI]);
        assert!(Axis::linear(Param::FSHz, 1.0, 2.0, 1).values().is_err());
        assert!(Axis::list(Param::FSHz, vec![1.0]).values().is_err());
        let mut both = Axis::list(Param::FSHz, vec![1.0, 2.0]);
        both.points = Some(2);
        assert!(both.values().is_err());
    }

    #[test]
    fn spec_parses_with_defaults_and_rejects_unknown_keys() {
        let s = SweepSpec::from_json_str(
            r#"{"axes":[{"param":"f_s_hz","start":1e9,"stop":2e9,"points":5}],"fixed":{"signal_power_dbm":-100}}"#,
        )
        .unwrap();
        assert_eq!(s.harmonics, 5);
        assert_eq!(s.truncation, [7, 3, 1]);
        assert!(SweepSpec::from_json_str(r#"{"axes":[],"bogus":1}"#).is_err());
    }

    #[test]
    fn axis_rules_are_enforced() {
        let mut c = Circuit::new();
        c.port("P1", "a", 50.0).resistor("R", "a", "0", 50.0);
        let too_many = SweepSpec::new(
            vec![
                Axis::linear(Param::FSHz, 1e9, 2e9, 2),
                Axis::linear(Param::SignalPowerDbm, -10.0, 0.0, 2),
                Axis::linear(Param::PumpPowerDbm, -10.0, 0.0, 2),
            ],
            Fixed::default(),
        );
        assert!(matches!(run_sweep(&c, Analysis::S11, &too_many), Err(Error::Config(_))));
        let wrong = SweepSpec::new(vec![Axis::linear(Param::PhiSRad, 0.0, 1.0, 2)], Fixed::default());
        assert!(matches!(run_sweep(&c, Analysis::S11, &wrong), Err(Error::Config(_))));
        let mut tagged = SweepSpec::new(vec![Axis::linear(Param::FSHz, 1e9, 2e9, 2)], Fixed::default());
        tagged.analysis = Some(Analysis::Gain);
        assert!(matches!(run_sweep(&c, Analysis::S11, &tagged), Err(Error::Config(_))));
        let dup = SweepSpec::new(
            vec![Axis::linear(Param::PhiSRad, 0.0, 1.0, 2), Axis::linear(Param::PhiSDeg, 0.0, 1.0, 2)],
            Fixed::default(),
        );
        assert!(matches!(run_sweep(&c, Analysis::Phase, &dup), Err(Error::Config(_))));
    }

    #[test]
    fn matched_load_s11_table() {
        let mut c = Circuit::new();
        c.port("P1", "a", 50.0).resistor("R", "a", "0", 50.0);
        let spec = SweepSpec::new(
            vec![Axis::linear(Param::FSHz, 1e9, 2e9, 3)],
            Fixed { signal_power_dbm: Some(-50.0), ..Default::default() },
        );
        let r = run_sweep(&c, Analysis::S11, &spec).unwrap();
        assert_eq!(r.total_points, 3);
        assert_eq!(r.failed_points, 0);
        let t = r.primary();
        assert_eq!(t.columns[..2], ["signal_power_dbm".to_string(), "f_hz".to_string()]);
        for re in t.column("s11_re").unwrap() {
            assert!(re.abs() < 1e-12);
        }
        let mut csv = Vec::new();
        t.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("signal_power_dbm,f_hz,s11_re,s11_im,s11_db,s11_phase_rad,converged,iters\n"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn degenerate_phase_sweep_rejects_offset_signal() {
        let mut c = Circuit::new();
        c.port("P1", "a", 50.0).resistor("R", "a", "0", 50.0);
        let spec = SweepSpec::new(
            vec![Axis::linear(Param::PhiSRad, 0.0, 1.0, 2)],
            Fixed {
                f_s_hz: Some(7.001e9),
                f_c_hz: Some(7e9),
                delta_f_hz: Some(1e8),
                pump_power_dbm: Some(-90.0),
                ..Default::default()
            },
        );
        assert!(matches!(run_sweep(&c, Analysis::Phase, &spec), Err(Error::Config(_))));
    }
}
