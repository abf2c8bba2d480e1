//! Two-pump four-wave-mixing gain from three-tone harmonic balance.
//!
//! Base tones are `{f_c, Δf, δ}`: pumps sit at `(1, ±1, 0)` (`f_p1 = f_c + Δf`
//! is `(1, 1, 0)`), the signal at `(1, 0, 1)` and the idler at `(1, 0, −1)`,
//! so `f_p1 + f_p2 − f_s` is exact by construction. A signal below `f_c`
//! swaps the roles of the last two vectors. Degenerate operation drops `δ`
//! and drives `(1, 0)` directly.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, Source};
use crate::error::{Error, Result};
use crate::hb::{extract_wave, FrequencyGrid, HbOptions, HbProblem, HbSolution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpSpec {
    pub f_c: f64,
    pub delta_f: f64,
    /// Available power of each pump tone.
    pub power_dbm: f64,
    pub phase_p1: f64,
    pub phase_p2: f64,
}

impl PumpSpec {
    pub fn new(f_c: f64, delta_f: f64, power_dbm: f64) -> Self {
        Self { f_c, delta_f, power_dbm, phase_p1: 0.0, phase_p2: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainOptions {
    pub hb: HbOptions,
    /// Signal power relative to one pump tone (dB).
    pub signal_dbc: f64,
    /// Box orders along `f_c`, `Δf` and `δ`.
    pub truncation: [u32; 3],
    /// Smallest signal offset from `f_c` treated as non-degenerate (Hz).
    pub min_offset_hz: f64,
    pub port: usize,
}

impl Default for GainOptions {
    fn default() -> Self {
        Self { hb: HbOptions::default(), signal_dbc: -60.0, truncation: [7, 3, 1], min_offset_hz: 1e4, port: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainPoint {
    pub f_s: f64,
    pub gain_db: f64,
    pub idler_gain_db: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl GainPoint {
    pub fn failed(f_s: f64, iterations: usize) -> Self {
        Self { f_s, gain_db: f64::NAN, idler_gain_db: f64::NAN, converged: false, iterations }
    }
}

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

fn with_pumps(c: &Circuit, port: usize, pump: &PumpSpec, dims: usize) -> Result<Circuit> {
    let mut c = c.clone();
    c.clear_sources();
    let tone = |a: i32, b: i32| {
        let mut t = vec![0; dims];
        t[0] = a;
        t[1] = b;
        t
    };
    c.add_source(port, Source { tone: tone(1, 1), power_dbm: pump.power_dbm, phase: pump.phase_p1 })?;
    c.add_source(port, Source { tone: tone(1, -1), power_dbm: pump.power_dbm, phase: pump.phase_p2 })?;
    Ok(c)
}

/// Pump-only steady state on the `{f_c, Δf}` grid.
pub fn pump_state(c: &Circuit, pump: &PumpSpec, opts: &GainOptions, guess: Option<&HbSolution>) -> Result<HbSolution> {
    let pc = with_pumps(c, opts.port, pump, 2)?;
    let grid = FrequencyGrid::new(&[pump.f_c, pump.delta_f], &opts.truncation[..2], opts.hb.merge_collisions)?;
    HbProblem::new(&pc, grid, opts.hb)?.solve_seeded(guess)
}

/// Gain at signal frequency `f_s` for a pumped circuit; `pump_sol` seeds Newton.
pub fn gain_at(
    c: &Circuit,
    pump: &PumpSpec,
    f_s: f64,
    opts: &GainOptions,
    pump_sol: Option<&HbSolution>,
) -> Result<(GainPoint, HbSolution)> {
    let mut delta = f_s - pump.f_c;
    if delta.abs() < opts.min_offset_hz {
        delta = opts.min_offset_hz;
    }
    let (sig, idl) = if delta > 0.0 { ([1, 0, 1], [1, 0, -1]) } else { ([1, 0, -1], [1, 0, 1]) };
    let mut sc = with_pumps(c, opts.port, pump, 3)?;
    sc.add_source(opts.port, Source { tone: sig.to_vec(), power_dbm: pump.power_dbm + opts.signal_dbc, phase: 0.0 })?;
    let grid = FrequencyGrid::new(&[pump.f_c, pump.delta_f, delta.abs()], &opts.truncation, opts.hb.merge_collisions)?;
    if grid.index_of(&sig)? == grid.index_of(&idl)? || grid.index_of(&sig)? == grid.index_of(&[1, 1, 0])? {
        return Err(Error::Config(format!("signal at {f_s} Hz collides with an idler or pump frequency")));
    }
    let sol = HbProblem::new(&sc, grid, opts.hb)?.solve(pump_sol)?;
    let (a, b) = extract_wave(&sol, opts.port, &sig)?;
    let (_, bi) = extract_wave(&sol, opts.port, &idl)?;
    let point = GainPoint {
        f_s,
        gain_db: db(b.norm_sqr() / a.norm_sqr()),
        idler_gain_db: db(bi.norm_sqr() / a.norm_sqr()),
        converged: true,
        iterations: sol.iterations,
    };
    Ok((point, sol))
}

/// Gain spectrum over `freqs`; failed points are flagged, not dropped.
/// Points are independent given the pump state and run on the rayon pool.
pub fn gain_spectrum(c: &Circuit, pump: &PumpSpec, freqs: &[f64], opts: &GainOptions) -> Result<Vec<GainPoint>> {
    use rayon::prelude::*;
    let ps = pump_state(c, pump, opts, None)?;
    freqs
        .par_iter()
        .map(|&f| match gain_at(c, pump, f, opts, Some(&ps)) {
            Ok((p, _)) => Ok(p),
            Err(e) if e.is_solver_failure() => Ok(GainPoint::failed(f, 0)),
            Err(e) => Err(e),
        })
        .collect()
}

/// Degenerate (signal at `f_c`) gain: `|b/a|²` at `(1, 0)`, which sums the
/// coincident signal and idler responses.
pub fn degenerate_gain(
    c: &Circuit,
    pump: &PumpSpec,
    phase_s: f64,
    opts: &GainOptions,
    guess: Option<&HbSolution>,
) -> Result<(f64, HbSolution)> {
    let mut sc = with_pumps(c, opts.port, pump, 2)?;
    sc.add_source(opts.port, Source { tone: vec![1, 0], power_dbm: pump.power_dbm + opts.signal_dbc, phase: phase_s })?;
    let grid = FrequencyGrid::new(&[pump.f_c, pump.delta_f], &opts.truncation[..2], opts.hb.merge_collisions)?;
    let sol = HbProblem::new(&sc, grid, opts.hb)?.solve_seeded(guess)?;
    let (a, b) = extract_wave(&sol, opts.port, &[1, 0])?;
    Ok((db(b.norm_sqr() / a.norm_sqr()), sol))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseAxis {
    Signal,
    Pump1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSweep {
    pub phases: Vec<f64>,
    pub gain_db: Vec<f64>,
    pub converged: Vec<bool>,
    pub iterations: Vec<usize>,
    /// Extremes refined by golden section between the neighbours of the
    /// sampled extremes (the deamplification dip is far narrower than
    /// typical phase steps).
    pub max_gain_db: f64,
    pub min_gain_db: f64,
    pub max_phase: f64,
    pub min_phase: f64,
}

/// Degenerate gain versus `φ_s` or `φ_p1`.
pub fn degenerate_phase_sweep(
    c: &Circuit,
    pump: &PumpSpec,
    axis: PhaseAxis,
    phases: &[f64],
    phase_s: f64,
    opts: &GainOptions,
) -> Result<PhaseSweep> {
    let base = pump_state(c, pump, opts, None)?;
    let mut out = PhaseSweep {
        phases: phases.to_vec(),
        gain_db: Vec::new(),
        converged: Vec::new(),
        iterations: Vec::new(),
        max_gain_db: f64::NAN,
        min_gain_db: f64::NAN,
        max_phase: f64::NAN,
        min_phase: f64::NAN,
    };
    let mut sols = Vec::with_capacity(phases.len());
    // Each point is seeded by its predecessor, so pump-phase sweeps follow
    // the rotating pump state continuously.
    let mut prev = base;
    for &ph in phases {
        let (p, s) = match axis {
            PhaseAxis::Signal => (*pump, ph),
            PhaseAxis::Pump1 => (PumpSpec { phase_p1: ph, ..*pump }, phase_s),
        };
        match degenerate_gain(c, &p, s, opts, Some(&prev)) {
            Ok((g, sol)) => {
                out.gain_db.push(g);
                out.converged.push(true);
                out.iterations.push(sol.iterations);
                prev = sol.clone();
                sols.push(Some(sol));
            }
            Err(e) if e.is_solver_failure() => {
                out.gain_db.push(f64::NAN);
                out.converged.push(false);
                out.iterations.push(0);
                sols.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    for sign in [1.0, -1.0] {
        let valid = (0..phases.len()).filter(|&i| out.converged[i]);
        let Some(i) = valid.max_by(|&a, &b| (sign * out.gain_db[a]).total_cmp(&(sign * out.gain_db[b]))) else {
            continue;
        };
        let (mut x, mut g) = (phases[i], out.gain_db[i]);
        if i > 0 && i + 1 < phases.len() {
            let seed = sols[i].clone();
            let value = |ph: f64| -> Result<f64> {
                let (p, s) = match axis {
                    PhaseAxis::Signal => (*pump, ph),
                    PhaseAxis::Pump1 => (PumpSpec { phase_p1: ph, ..*pump }, phase_s),
                };
                match degenerate_gain(c, &p, s, opts, seed.as_ref()) {
                    Ok((g, _)) => Ok(sign * g),
                    Err(e) if e.is_solver_failure() => Ok(f64::NAN),
                    Err(e) => Err(e),
                }
            };
            let (xr, fr) = golden_max(value, phases[i - 1], phases[i + 1], 40)?;
            if fr > sign * g {
                (x, g) = (xr, sign * fr);
            }
        }
        if sign > 0.0 {
            (out.max_phase, out.max_gain_db) = (x, g);
        } else {
            (out.min_phase, out.min_gain_db) = (x, g);
        }
    }
    Ok(out)
}

/// Golden-section maximum of `f` on `[a, b]`; NaN values rank below all others.
fn golden_max(mut f: impl FnMut(f64) -> Result<f64>, mut a: f64, mut b: f64, iters: usize) -> Result<(f64, f64)> {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x1, mut x2) = (b - r * (b - a), a + r * (b - a));
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    for _ in 0..iters {
        if f1.is_nan() || f2 > f1 {
            a = x1;
            (x1, f1) = (x2, f2);
            x2 = a + r * (b - a);
            f2 = f(x2)?;
        } else {
            b = x2;
            (x2, f2) = (x1, f1);
            x1 = b - r * (b - a);
            f1 = f(x1)?;
        }
    }
    Ok(if f1.is_nan() || f2 > f1 { (x2, f2) } else { (x1, f1) })
}

/// Peak of a sampled gain spectrum and its 3-dB bandwidth from linearly
/// interpolated half-power crossings (NaN when a crossing is missing).
pub fn peak_and_bandwidth(points: &[GainPoint]) -> (f64, f64, f64) {
    let valid: Vec<&GainPoint> = points.iter().filter(|p| p.converged && p.gain_db.is_finite()).collect();
    let Some((imax, top)) = valid.iter().enumerate().max_by(|a, b| a.1.gain_db.total_cmp(&b.1.gain_db)) else {
        return (f64::NAN, f64::NAN, f64::NAN);
    };
    let level = top.gain_db - 3.0;
    let cross = |i: usize, j: usize| {
        let (a, b) = (valid[i], valid[j]);
        a.f_s + (level - a.gain_db) * (b.f_s - a.f_s) / (b.gain_db - a.gain_db)
    };
    let lo = (1..=imax).rev().find(|&i| valid[i - 1].gain_db < level).map(|i| cross(i - 1, i));
    let hi = (imax..valid.len() - 1).find(|&i| valid[i + 1].gain_db < level).map(|i| cross(i, i + 1));
    let bw = match (lo, hi) {
        (Some(l), Some(h)) => h - l,
        _ => f64::NAN,
    };
    (top.gain_db, top.f_s, bw)
}

/// Complex reflection `b/a` of the signal, for callers needing phase.
pub fn signal_reflection(sol: &HbSolution, port: usize, sig: &[i32]) -> Result<Complex64> {
    let (a, b) = extract_wave(sol, port, sig)?;
    Ok(b / a)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapOptions {
    pub gain: GainOptions,
    /// Golden-section iterations refining each column's peak between the
    /// grid neighbours of its coarse maximum (0 disables refinement).
    pub refine_iterations: usize,
}

impl Default for MapOptions {
    fn default() -> Self {
        Self { gain: GainOptions::default(), refine_iterations: 30 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapCell {
    pub f_c: f64,
    pub power_dbm: f64,
    pub gain_db: f64,
    pub idler_gain_db: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapPeak {
    pub f_c: f64,
    pub gain_db: f64,
    pub power_dbm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainMap {
    /// Row-major by `f_c`, then ascending power.
    pub cells: Vec<MapCell>,
    pub peaks: Vec<MapPeak>,
}

/// Pump states along ascending `powers`, each seeded by its predecessor;
/// failed runs are retried in reverse from the next converged state, which
/// recovers states past a pump fold.
fn pump_ladder(c: &Circuit, f_c: f64, delta_f: f64, powers: &[f64], opts: &GainOptions) -> Result<Vec<Option<HbSolution>>> {
    let attempt = |p: f64, guess: Option<&HbSolution>| match pump_state(c, &PumpSpec::new(f_c, delta_f, p), opts, guess) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.is_solver_failure() => Ok(None),
        Err(e) => Err(e),
    };
    let mut states: Vec<Option<HbSolution>> = Vec::with_capacity(powers.len());
    for (i, &p) in powers.iter().enumerate() {
        let guess = if i > 0 { states[i - 1].as_ref() } else { None };
        let s = attempt(p, guess)?;
        states.push(s);
    }
    for i in (0..powers.len().saturating_sub(1)).rev() {
        if states[i].is_none() && states[i + 1].is_some() {
            states[i] = attempt(powers[i], states[i + 1].as_ref())?;
        }
    }
    Ok(states)
}

/// Index ending the stable part of a power ladder: the first local maximum
/// with net gain. Past it the pumped state has crossed a parametric
/// instability (the gain pole) and further maxima are not physical.
fn stable_peak(gains: &[f64]) -> Option<usize> {
    let valid: Vec<usize> = (0..gains.len()).filter(|&i| gains[i].is_finite()).collect();
    for w in valid.windows(2) {
        if gains[w[0]] > 0.0 && gains[w[1]] < gains[w[0]] {
            return Some(w[0]);
        }
    }
    valid.into_iter().max_by(|&a, &b| gains[a].total_cmp(&gains[b]))
}

/// One `f_c` column of the peak-gain map, powers ascending.
pub fn gain_map_column(
    c: &Circuit,
    f_c: f64,
    delta_f: f64,
    powers: &[f64],
    opts: &MapOptions,
) -> Result<(Vec<MapCell>, MapPeak)> {
    if powers.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Argument("map powers must be strictly ascending".into()));
    }
    let g = &opts.gain;
    let states = pump_ladder(c, f_c, delta_f, powers, g)?;
    let eval = |p: f64, st: &HbSolution| match gain_at(c, &PumpSpec::new(f_c, delta_f, p), f_c, g, Some(st)) {
        Ok(r) => Ok(Some(r)),
        Err(e) if e.is_solver_failure() => Ok(None),
        Err(e) => Err(e),
    };
    let mut cells = Vec::with_capacity(powers.len());
    let mut sols = Vec::with_capacity(powers.len());
    for (&p, st) in powers.iter().zip(&states) {
        let r = match st {
            Some(s) => eval(p, s)?,
            None => None,
        };
        let (pt, sol) = r.unzip();
        sols.push(sol);
        cells.push(match pt {
            Some(pt) => MapCell {
                f_c,
                power_dbm: p,
                gain_db: pt.gain_db,
                idler_gain_db: pt.idler_gain_db,
                converged: true,
                iterations: pt.iterations,
            },
            None => MapCell { f_c, power_dbm: p, gain_db: f64::NAN, idler_gain_db: f64::NAN, converged: false, iterations: 0 },
        });
    }
    let gains: Vec<f64> = cells.iter().map(|c| c.gain_db).collect();
    let Some(ip) = stable_peak(&gains) else {
        return Ok((cells, MapPeak { f_c, gain_db: f64::NAN, power_dbm: f64::NAN }));
    };
    let mut peak = MapPeak { f_c, gain_db: gains[ip], power_dbm: powers[ip] };
    if opts.refine_iterations > 0 && ip > 0 && ip + 1 < powers.len() {
        // Each probe is seeded by the nearest solved point, signal included:
        // close to the gain pole a pump-only seed costs hundreds of iterations.
        let mut solved: Vec<(f64, HbSolution)> =
            (ip - 1..=ip + 1).filter_map(|i| sols[i].clone().map(|s| (powers[i], s))).collect();
        let value = |p: f64| -> Result<f64> {
            let seed = solved.iter().min_by(|a, b| (a.0 - p).abs().total_cmp(&(b.0 - p).abs())).map(|s| &s.1);
            Ok(match eval(p, seed.expect("peak cell is solved"))? {
                Some((pt, sol)) => {
                    solved.push((p, sol));
                    pt.gain_db
                }
                None => f64::NAN,
            })
        };
        let (x, f) = golden_max(value, powers[ip - 1], powers[ip + 1], opts.refine_iterations)?;
        if f > peak.gain_db {
            peak = MapPeak { f_c, gain_db: f, power_dbm: x };
        }
    }
    Ok((cells, peak))
}

/// Peak-gain map over `f_cs × powers` (signal at `f_c`, offset by
/// `min_offset_hz`); columns run in parallel on the current rayon pool.
pub fn peak_gain_map(c: &Circuit, f_cs: &[f64], delta_f: f64, powers: &[f64], opts: &MapOptions) -> Result<GainMap> {
    use rayon::prelude::*;
    let cols: Vec<(Vec<MapCell>, MapPeak)> =
        f_cs.par_iter().map(|&f| gain_map_column(c, f, delta_f, powers, opts)).collect::<Result<_>>()?;
    let mut map = GainMap { cells: Vec::new(), peaks: Vec::new() };
    for (cells, peak) in cols {
        map.cells.extend(cells);
        map.peaks.push(peak);
    }
    Ok(map)
}
