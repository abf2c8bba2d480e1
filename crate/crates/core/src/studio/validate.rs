//! Cross-check of single-tone harmonic balance against the transient oracle.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, Source};
use crate::error::{Error, Result};
use crate::hb::{FrequencyGrid, HbOptions, HbProblem};
use crate::oracle::{integrate, richardson, source_drive, steady_state_amplitude, TransientOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossCheckOptions {
    pub hb: HbOptions,
    pub harmonics: u32,
    /// Coarse step count per drive period; the fine run halves the step.
    pub samples_per_period: usize,
    /// Periods integrated before the measurement window closes.
    pub periods: usize,
    /// Periods in the Fourier window at the end of the run.
    pub window_periods: usize,
    /// Periods of raised-cosine drive ramp.
    pub ramp_periods: usize,
    pub port: usize,
}

impl Default for CrossCheckOptions {
    fn default() -> Self {
        Self {
            hb: HbOptions::default(),
            harmonics: 7,
            samples_per_period: 256,
            periods: 2000,
            window_periods: 100,
            ramp_periods: 200,
            port: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossCheck {
    pub hb: Complex64,
    pub coarse: Complex64,
    pub fine: Complex64,
    /// Richardson extrapolation of the two transient runs.
    pub transient: Complex64,
    /// `| |hb| / |transient| − 1 |`.
    pub magnitude_error: f64,
    pub phase_error_deg: f64,
}

/// Fundamental phasor of unknown `unknown` (e.g. `"V(res)"`) under a single
/// drive tone, from harmonic balance and from two trapezoidal runs.
pub fn hb_vs_transient(c: &Circuit, f: f64, power_dbm: f64, unknown: &str, opts: &CrossCheckOptions) -> Result<CrossCheck> {
    if opts.samples_per_period < 8 || opts.window_periods == 0 || opts.window_periods >= opts.periods {
        return Err(Error::Argument("need ≥ 8 samples per period and 0 < window < periods".into()));
    }
    let mut dc = c.clone();
    dc.clear_sources();
    dc.add_source(opts.port, Source { tone: vec![1], power_dbm, phase: 0.0 })?;
    let grid = FrequencyGrid::new(&[f], &[opts.harmonics], opts.hb.merge_collisions)?;
    let sol = HbProblem::new(&dc, grid, opts.hb)?.solve(None)?;
    let u = sol.unknown_index(unknown).ok_or_else(|| Error::Argument(format!("no unknown named {unknown}")))?;
    let hb = sol.coefficient(u, &[1])?;

    let period = 1.0 / f;
    let drive = source_drive(&dc, &[f], opts.ramp_periods as f64 * period)?;
    let run = |spp: usize| -> Result<Complex64> {
        let dt = period / spp as f64;
        let t_end = opts.periods as f64 * period;
        let record_start = (opts.periods - opts.window_periods - 1) as f64 * period;
        let r = integrate(&dc, &drive, TransientOptions { record_start, ..TransientOptions::new(dt, t_end) })?;
        let ut = r.unknown_index(unknown).ok_or_else(|| Error::Argument(format!("no unknown named {unknown}")))?;
        steady_state_amplitude(&r, ut, f, opts.window_periods)
    };
    let (coarse, fine) = rayon::join(|| run(opts.samples_per_period), || run(2 * opts.samples_per_period));
    let (coarse, fine) = (coarse?, fine?);
    let transient = richardson(coarse, fine);
    Ok(CrossCheck {
        hb,
        coarse,
        fine,
        transient,
        magnitude_error: (hb.norm() / transient.norm() - 1.0).abs(),
        phase_error_deg: (hb / transient).arg().abs().to_degrees(),
    })
}
