//! Analyses built on the harmonic-balance engine.

pub mod calibrate;
pub mod cmt;
pub mod fit;
pub mod gain;
pub mod spectra;
pub mod sweep;
pub mod validate;

use num_complex::Complex64;

pub use calibrate::{calibrate_lumped_model, CalibrationTargets, KipaModel, LinearResponse, TargetsFile};
pub use fit::{fit_lorentzian, LorentzianFit};

use crate::circuit::{phasor_solve, port_waves, Circuit};
use crate::error::{Error, Result};

/// Small-signal reflection `b/a` at `port` with every other port terminated.
pub fn linear_reflection(c: &Circuit, port: usize, freqs: &[f64]) -> Result<Vec<Complex64>> {
    let mna = c.compile()?;
    let p = *mna.ports.get(port).ok_or_else(|| Error::Argument(format!("no port with index {port}")))?;
    let mut vs = vec![Complex64::new(0.0, 0.0); mna.ports.len()];
    vs[port] = Complex64::new(1.0, 0.0);
    freqs
        .iter()
        .map(|&f| {
            let v = phasor_solve(&mna, f, &vs)?[p.node];
            let (a, b) = port_waves(v, (vs[port] - v) / p.z0, p.z0);
            Ok(b / a)
        })
        .collect()
}
