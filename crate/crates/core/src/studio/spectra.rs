//! Single-tone reflection spectra and the Duffing bifurcation threshold.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, Source};
use crate::error::{Error, Result};
use crate::hb::{extract_wave, FrequencyGrid, HbOptions, HbProblem, HbSolution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct S11Options {
    pub hb: HbOptions,
    /// Highest harmonic kept.
    pub harmonics: u32,
    pub port: usize,
}

impl Default for S11Options {
    fn default() -> Self {
        Self { hb: HbOptions::default(), harmonics: 5, port: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct S11Point {
    pub f: f64,
    pub s11: Complex64,
    pub converged: bool,
    pub iterations: usize,
}

impl S11Point {
    pub fn db(&self) -> f64 {
        20.0 * self.s11.norm().log10()
    }
}

/// Drives `port` with one tone and returns the HB solution at `f`.
pub fn single_tone(
    c: &Circuit,
    f: f64,
    power_dbm: f64,
    opts: &S11Options,
    guess: Option<&HbSolution>,
) -> Result<HbSolution> {
    let mut dc = c.clone();
    dc.clear_sources();
    dc.add_source(opts.port, Source { tone: vec![1], power_dbm, phase: 0.0 })?;
    let grid = FrequencyGrid::new(&[f], &[opts.harmonics], opts.hb.merge_collisions)?;
    HbProblem::new(&dc, grid, opts.hb)?.solve_seeded(guess)
}

/// Large-signal `b/a` at the fundamental, swept through `freqs` in the given
/// order with each point seeded by its predecessor (the sweep direction
/// selects the branch inside a hysteresis window).
///
/// Past a fold the swept branch ends and the response jumps to the branch
/// that continues from beyond the gap, so failed runs are retried in reverse
/// order seeded from the next converged point.
pub fn s11_spectrum(c: &Circuit, power_dbm: f64, freqs: &[f64], opts: &S11Options) -> Result<Vec<S11Point>> {
    let mut sols: Vec<Option<HbSolution>> = Vec::with_capacity(freqs.len());
    let mut out = Vec::with_capacity(freqs.len());
    let attempt = |f: f64, guess: Option<&HbSolution>| -> Result<(S11Point, Option<HbSolution>)> {
        match single_tone(c, f, power_dbm, opts, guess) {
            Ok(sol) => {
                let (a, b) = extract_wave(&sol, opts.port, &[1])?;
                Ok((S11Point { f, s11: b / a, converged: true, iterations: sol.iterations }, Some(sol)))
            }
            Err(e) if e.is_solver_failure() => {
                Ok((S11Point { f, s11: Complex64::new(f64::NAN, f64::NAN), converged: false, iterations: 0 }, None))
            }
            Err(e) => Err(e),
        }
    };
    for (i, &f) in freqs.iter().enumerate() {
        let guess = if i > 0 { sols[i - 1].as_ref() } else { None };
        let (p, s) = attempt(f, guess)?;
        out.push(p);
        sols.push(s);
    }
    for i in (0..freqs.len().saturating_sub(1)).rev() {
        if sols[i].is_none() && sols[i + 1].is_some() {
            let (p, s) = attempt(freqs[i], sols[i + 1].as_ref())?;
            out[i] = p;
            sols[i] = s;
        }
    }
    Ok(out)
}

/// Largest complex change of S11 between adjacent converged points.
pub fn max_step(points: &[S11Point]) -> f64 {
    points
        .windows(2)
        .filter(|w| w[0].converged && w[1].converged)
        .map(|w| (w[1].s11 - w[0].s11).norm())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BifurcationOptions {
    pub s11: S11Options,
    /// A drive is bistable when upward and downward sweeps differ by more
    /// than this (complex S11 distance) at some frequency.
    pub hysteresis_tol: f64,
    /// Bisection stops once the bracket is narrower than this (dB).
    pub resolution_db: f64,
}

impl Default for BifurcationOptions {
    fn default() -> Self {
        Self { s11: S11Options::default(), hysteresis_tol: 0.1, resolution_db: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BifurcationProbe {
    pub power_dbm: f64,
    /// Largest up/down sweep difference.
    pub hysteresis: f64,
    /// Largest adjacent complex step of the upward sweep.
    pub max_step: f64,
    /// Largest adjacent `|S11|` step of the upward sweep (dB).
    pub max_step_db: f64,
    pub bistable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BifurcationResult {
    /// Midpoint of the final bracket.
    pub threshold_dbm: f64,
    pub bracket: (f64, f64),
    pub probes: Vec<BifurcationProbe>,
}

/// Probes one drive level with upward and downward sweeps over sorted `freqs`.
pub fn probe_bistability(c: &Circuit, freqs: &[f64], power_dbm: f64, opts: &BifurcationOptions) -> Result<BifurcationProbe> {
    let up = s11_spectrum(c, power_dbm, freqs, &opts.s11)?;
    let rev: Vec<f64> = freqs.iter().rev().copied().collect();
    let down = s11_spectrum(c, power_dbm, &rev, &opts.s11)?;
    let hysteresis = up
        .iter()
        .zip(down.iter().rev())
        .filter(|(a, b)| a.converged && b.converged)
        .map(|(a, b)| (a.s11 - b.s11).norm())
        .fold(0.0, f64::max);
    let max_step_db = up
        .windows(2)
        .filter(|w| w[0].converged && w[1].converged)
        .map(|w| (w[1].db() - w[0].db()).abs())
        .fold(0.0, f64::max);
    Ok(BifurcationProbe { power_dbm, hysteresis, max_step: max_step(&up), max_step_db, bistable: hysteresis > opts.hysteresis_tol })
}

/// Bisects drive power in `[lo_dbm, hi_dbm]` for the onset of bistability
/// (an abrupt S11 step whose position depends on sweep direction).
pub fn bifurcation_threshold(
    c: &Circuit,
    freqs: &[f64],
    lo_dbm: f64,
    hi_dbm: f64,
    opts: &BifurcationOptions,
) -> Result<BifurcationResult> {
    if c.kinetic_inductors().next().is_none() {
        return Err(Error::Search("circuit has no nonlinear element; no bifurcation exists".into()));
    }
    if !(lo_dbm < hi_dbm) || freqs.len() < 3 {
        return Err(Error::Argument("need lo < hi and at least three frequencies".into()));
    }
    let mut sorted = freqs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut probes = Vec::new();
    let mut probe = |p: f64| -> Result<bool> {
        let pr = probe_bistability(c, &sorted, p, opts)?;
        let b = pr.bistable;
        probes.push(pr);
        Ok(b)
    };
    if probe(lo_dbm)? {
        return Err(Error::Search(format!("response already bistable at {lo_dbm} dBm")));
    }
    if !probe(hi_dbm)? {
        return Err(Error::Search(format!("no bistability up to {hi_dbm} dBm")));
    }
    let (mut lo, mut hi) = (lo_dbm, hi_dbm);
    while hi - lo > opts.resolution_db {
        let mid = 0.5 * (lo + hi);
        if probe(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(BifurcationResult { threshold_dbm: 0.5 * (lo + hi), bracket: (lo, hi), probes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::studio::calibrate::{calibrate_lumped_model, CalibrationTargets};
    use crate::studio::linear_reflection;

    #[test]
    fn weak_drive_matches_linear_reflection() {
        let m = calibrate_lumped_model(&CalibrationTargets::default()).unwrap();
        let freqs: Vec<f64> = (0..11).map(|i| 7.40e9 + 1e7 * i as f64).collect();
        let pts = s11_spectrum(&m.circuit, -200.0, &freqs, &S11Options::default()).unwrap();
        let lin = linear_reflection(&m.circuit, 0, &freqs).unwrap();
        for (p, s) in pts.iter().zip(lin) {
            assert!(p.converged);
            assert!((p.s11 - s).norm() < 1e-7, "{} {}", p.s11, s);
        }
    }

    #[test]
    fn strong_drive_pulls_the_dip_down() {
        let m = calibrate_lumped_model(&CalibrationTargets::default()).unwrap();
        let freqs: Vec<f64> = (0..121).map(|i| 7.39e9 + 1e6 * i as f64).collect();
        let dip = |p: f64| {
            let pts = s11_spectrum(&m.circuit, p, &freqs, &S11Options::default()).unwrap();
            pts.iter().min_by(|a, b| a.db().total_cmp(&b.db())).unwrap().f
        };
        assert!(dip(-100.0) < dip(-120.0));
    }

    #[test]
    fn linear_circuit_has_no_bifurcation() {
        let mut c = Circuit::new();
        c.port("P1", "a", 50.0).capacitor("Cc", "a", "b", 20e-15).capacitor("C", "b", "0", 400e-15).inductor(
            "L",
            "b",
            "0",
            1.2e-9,
        );
        let freqs = [7.0e9, 7.1e9, 7.2e9];
        let r = bifurcation_threshold(&c, &freqs, -120.0, -80.0, &BifurcationOptions::default());
        assert!(matches!(r, Err(Error::Search(_))));
    }

    #[test]
    fn max_step_skips_failed_points() {
        let p = |f: f64, s: f64, ok: bool| S11Point { f, s11: Complex64::new(s, 0.0), converged: ok, iterations: 1 };
        let pts = [p(1.0, 0.1, true), p(2.0, 0.3, true), p(3.0, 9.0, false), p(4.0, 0.2, true)];
        assert!((max_step(&pts) - 0.2).abs() < 1e-15);
    }
}
