//! Lumped KIPA model: coupling capacitor to a shunt resonator whose
//! inductive arm is a linear pad inductance in series with the kinetic wire.
//!
//! ```text
//! port ─┤Cc├─ res ─┬─ C ─┐
//!                  ├─ R ─┤
//!                  └─ Lpad ─ wire ─ Lk ─┤ ground
//! ```
//!
//! Linear analysis (kinetic inductor at `Lk0`, `L = Lpad + Lk0`): the port
//! loads the resonator with `Y_ext = jωCc/(1 + jωCcZ0)`. Writing
//! `x = ωCcZ0`, the effective capacitance is `C_eff = C + Cc/(1+x²)` and
//! resonance is `ω² L C_eff = 1`. Rates follow from the susceptance slope
//! `C_s = ½ dB/dω`: `κ_e = Re Y_ext / C_s`, `κ_i = 1/(R C_s)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fit::{fit_lorentzian, LorentzianFit};
use super::linear_reflection;
use crate::circuit::{watts_to_dbm, Circuit};
use crate::error::{Error, Result};
use crate::scmat::KineticInductorParams;

pub const PORT_NODE: &str = "port";
pub const RESONATOR_NODE: &str = "res";
pub const WIRE_NODE: &str = "wire";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationTargets {
    pub f_r: f64,
    /// External coupling rate (rad/s).
    pub kappa_e: f64,
    /// Intrinsic loss rate (rad/s); zero gives a lossless model.
    pub kappa_i: f64,
    pub lk0: f64,
    pub istar: f64,
    pub z0: f64,
    /// Duffing critical drive (available dBm) used to fix the pad inductance.
    pub threshold_dbm: f64,
    /// Fixes the pad inductance directly instead of `threshold_dbm`.
    pub l_pad: Option<f64>,
}

impl Default for CalibrationTargets {
    fn default() -> Self {
        Self {
            f_r: 7.45e9,
            kappa_e: 2.0 * PI * 57e6,
            kappa_i: 2.0 * PI * 1.8e6,
            lk0: 1.705e-9,
            istar: 3.985e-6,
            z0: 50.0,
            threshold_dbm: -97.0,
            l_pad: None,
        }
    }
}

/// File form of [`CalibrationTargets`]; rates are given as `κ/2π` in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetsFile {
    pub f_r_hz: f64,
    pub kappa_e_hz: f64,
    pub kappa_i_hz: f64,
    pub lk0_h: f64,
    pub istar_a: f64,
    #[serde(default = "default_z0")]
    pub z0_ohm: f64,
    #[serde(default = "default_threshold")]
    pub threshold_dbm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_pad_h: Option<f64>,
}

fn default_z0() -> f64 {
    50.0
}

fn default_threshold() -> f64 {
    CalibrationTargets::default().threshold_dbm
}

impl From<TargetsFile> for CalibrationTargets {
    fn from(f: TargetsFile) -> Self {
        Self {
            f_r: f.f_r_hz,
            kappa_e: 2.0 * PI * f.kappa_e_hz,
            kappa_i: 2.0 * PI * f.kappa_i_hz,
            lk0: f.lk0_h,
            istar: f.istar_a,
            z0: f.z0_ohm,
            threshold_dbm: f.threshold_dbm,
            l_pad: f.l_pad_h,
        }
    }
}

impl From<CalibrationTargets> for TargetsFile {
    fn from(t: CalibrationTargets) -> Self {
        Self {
            f_r_hz: t.f_r,
            kappa_e_hz: t.kappa_e / (2.0 * PI),
            kappa_i_hz: t.kappa_i / (2.0 * PI),
            lk0_h: t.lk0,
            istar_a: t.istar,
            z0_ohm: t.z0,
            threshold_dbm: t.threshold_dbm,
            l_pad_h: t.l_pad,
        }
    }
}

/// Closed-form linear response of the lumped model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearResponse {
    pub omega_r: f64,
    pub kappa_e: f64,
    pub kappa_i: f64,
    /// Susceptance slope capacitance at resonance.
    pub c_slope: f64,
}

impl LinearResponse {
    pub fn kappa(&self) -> f64 {
        self.kappa_e + self.kappa_i
    }
}

#[derive(Debug, Clone)]
pub struct KipaModel {
    pub circuit: Circuit,
    pub cc: f64,
    pub c: f64,
    /// `None` for a lossless resonator.
    pub r: Option<f64>,
    pub l_pad: f64,
    pub kinetic: KineticInductorParams,
    pub z0: f64,
    pub linear: LinearResponse,
}

fn effective_capacitance(cc: f64, c: f64, w: f64, z0: f64) -> f64 {
    let x = w * cc * z0;
    c + cc / (1.0 + x * x)
}

fn slope_capacitance(cc: f64, c: f64, w: f64, z0: f64) -> f64 {
    let x2 = (w * cc * z0).powi(2);
    0.5 * (2.0 * c + cc / (1.0 + x2) + cc * (1.0 - x2) / (1.0 + x2).powi(2))
}

fn external_conductance(cc: f64, w: f64, z0: f64) -> f64 {
    let x = w * cc * z0;
    w * x * cc / (1.0 + x * x)
}

/// Resonance and rates of the linear model.
pub fn linear_response(cc: f64, c: f64, r: Option<f64>, l: f64, z0: f64) -> LinearResponse {
    let mut w = 1.0 / (l * (c + cc)).sqrt();
    for _ in 0..100 {
        let next = 1.0 / (l * effective_capacitance(cc, c, w, z0)).sqrt();
        let done = (next - w).abs() <= 1e-15 * w;
        w = next;
        if done {
            break;
        }
    }
    let cs = slope_capacitance(cc, c, w, z0);
    LinearResponse {
        omega_r: w,
        kappa_e: external_conductance(cc, w, z0) / cs,
        kappa_i: r.map_or(0.0, |r| 1.0 / (r * cs)),
        c_slope: cs,
    }
}

impl KipaModel {
    pub fn from_components(
        cc: f64,
        c: f64,
        r: Option<f64>,
        l_pad: f64,
        kinetic: KineticInductorParams,
        z0: f64,
    ) -> Result<Self> {
        let mut circuit = Circuit::new();
        circuit.port("P1", PORT_NODE, z0).capacitor("Cc", PORT_NODE, RESONATOR_NODE, cc).capacitor(
            "C",
            RESONATOR_NODE,
            "0",
            c,
        );
        if let Some(r) = r {
            circuit.resistor("R", RESONATOR_NODE, "0", r);
        }
        circuit
            .inductor("Lpad", RESONATOR_NODE, WIRE_NODE, l_pad)
            .kinetic_inductor("Lk", WIRE_NODE, "0", kinetic);
        let report = circuit.validate();
        if !report.is_empty() {
            return Err(Error::Calibration(format!("invalid components: {}", report[0])));
        }
        let linear = linear_response(cc, c, r, l_pad + kinetic.lk0, z0);
        Ok(Self { circuit, cc, c, r, l_pad, kinetic, z0, linear })
    }

    /// Recovers component values from a circuit with the lumped topology.
    pub fn from_circuit(circuit: &Circuit) -> Result<Self> {
        use crate::circuit::Element;
        let (mut cc, mut c, mut r, mut lpad, mut lk) = (None, None, None, None, None);
        for e in &circuit.elements {
            match (e.name(), e) {
                ("Cc", Element::Capacitor { capacitance, .. }) => cc = Some(*capacitance),
                ("C", Element::Capacitor { capacitance, .. }) => c = Some(*capacitance),
                ("R", Element::Resistor { resistance, .. }) => r = Some(*resistance),
                ("Lpad", Element::Inductor { inductance, .. }) => lpad = Some(*inductance),
                ("Lk", Element::KineticInductor { params, .. }) => lk = Some(*params),
                _ => {}
            }
        }
        let missing = || Error::Config("circuit is not a lumped KIPA model (needs Cc, C, Lpad, Lk)".into());
        let z0 = circuit.ports.first().ok_or_else(missing)?.z0;
        let mut m = Self::from_components(
            cc.ok_or_else(missing)?,
            c.ok_or_else(missing)?,
            r,
            lpad.ok_or_else(missing)?,
            lk.ok_or_else(missing)?,
            z0,
        )?;
        m.circuit.ports[0].sources = circuit.ports[0].sources.clone();
        Ok(m)
    }

    pub fn l_total(&self) -> f64 {
        self.l_pad + self.kinetic.lk0
    }

    /// Kerr shift of the resonance per stored energy (rad/s per J, negative).
    pub fn kerr(&self) -> f64 {
        kerr_coefficient(self.linear, self.l_total(), self.kinetic)
    }

    /// Available drive power (dBm) at which the driven response first turns bistable.
    pub fn critical_power_dbm(&self) -> f64 {
        watts_to_dbm(duffing_critical_power(self.linear, self.kerr()))
    }

    pub fn participation(&self) -> f64 {
        self.kinetic.lk0 / self.l_total()
    }
}

/// `dω/dE`: an inductor current of peak `A` adds `Lk0 A²/(4 I*²)` to the
/// fundamental inductance, and `E = ½ C_s (ωL A)²`.
pub fn kerr_coefficient(lin: LinearResponse, l_total: f64, k: KineticInductorParams) -> f64 {
    let w = lin.omega_r;
    let dw_dl = -1.0 / (2.0 * lin.c_slope * w * l_total * l_total);
    let dl_da2 = k.lk0 / (4.0 * k.istar * k.istar);
    let de_da2 = 0.5 * lin.c_slope * (w * l_total).powi(2);
    dw_dl * dl_da2 / de_da2
}

/// Critical available power (W) of a driven Kerr resonator: `κ³/(3√3 |K| κ_e)`.
pub fn duffing_critical_power(lin: LinearResponse, kerr: f64) -> f64 {
    lin.kappa().powi(3) / (3.0 * 3f64.sqrt() * kerr.abs() * lin.kappa_e)
}

/// Components `(Cc, C, R)` for resonance `w`, rates `ke`, `ki` at total inductance `l`.
fn solve_at_inductance(w: f64, ke: f64, ki: f64, l: f64, z0: f64) -> Result<(f64, f64, Option<f64>)> {
    let c_eff = 1.0 / (w * w * l);
    let c_of = |cc: f64| c_eff - cc / (1.0 + (w * cc * z0).powi(2));
    let ke_of = |cc: f64| external_conductance(cc, w, z0) / slope_capacitance(cc, c_of(cc), w, z0);
    // C > 0 bounds Cc from above; κ_e grows monotonically with Cc below it.
    let (mut lo, mut hi) = (c_eff * 1e-9, c_eff);
    while c_of(hi) <= 0.0 {
        hi *= 0.999;
    }
    if ke_of(hi) < ke || ke_of(lo) > ke {
        return Err(Error::Calibration(format!(
            "external rate {ke:.4e} rad/s unreachable at L = {l:.4e} H (range {:.4e}..{:.4e})",
            ke_of(lo),
            ke_of(hi)
        )));
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if ke_of(mid) < ke {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-15 {
            break;
        }
    }
    let cc = 0.5 * (lo + hi);
    let c = c_of(cc);
    let r = (ki > 0.0).then(|| 1.0 / (ki * slope_capacitance(cc, c, w, z0)));
    Ok((cc, c, r))
}

fn model_for(t: &CalibrationTargets, w: f64, ke: f64, ki: f64) -> Result<KipaModel> {
    let k = KineticInductorParams::new(t.lk0, t.istar)?;
    let build = |l: f64| -> Result<KipaModel> {
        let (cc, c, r) = solve_at_inductance(w, ke, ki, l, t.z0)?;
        KipaModel::from_components(cc, c, r, l - t.lk0, k, t.z0)
    };
    if let Some(lp) = t.l_pad {
        return build(lp + t.lk0);
    }
    // Critical power grows with L (∝ L² at fixed rates); expand upward to a bracket.
    let pc = |l: f64| build(l).map(|m| m.critical_power_dbm());
    let mut lo = t.lk0 * (1.0 + 1e-6);
    let plo = pc(lo)?;
    if plo > t.threshold_dbm {
        return Err(Error::Calibration(format!(
            "critical power {} dBm is below the smallest reachable value {plo:.2} dBm",
            t.threshold_dbm
        )));
    }
    let mut hi = lo;
    loop {
        hi *= 1.5;
        match pc(hi) {
            Ok(p) if p >= t.threshold_dbm => break,
            Ok(_) => lo = hi,
            Err(e) => {
                return Err(Error::Calibration(format!(
                    "critical power {} dBm unreachable before the coupling limit: {e}",
                    t.threshold_dbm
                )))
            }
        }
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if pc(mid)? < t.threshold_dbm {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-14 {
            break;
        }
    }
    build((lo * hi).sqrt())
}

/// Lorentzian fit of the linear reflection over ±`span`·κ around resonance.
pub fn fit_linear_response(m: &KipaModel, span: f64, points: usize) -> Result<LorentzianFit> {
    let f0 = m.linear.omega_r / (2.0 * PI);
    let half = span * m.linear.kappa() / (2.0 * PI);
    let freqs: Vec<f64> = (0..points).map(|i| f0 - half + 2.0 * half * i as f64 / (points - 1) as f64).collect();
    let s: Vec<Complex64> = linear_reflection(&m.circuit, 0, &freqs)?;
    fit_lorentzian(&freqs, &s)
}

/// Solves for `Cc`, `C`, `R` and `Lpad` so that the linear model's fitted
/// reflection reproduces the targets within 0.5%.
pub fn calibrate_lumped_model(t: &CalibrationTargets) -> Result<KipaModel> {
    let positive = |x: f64| x > 0.0 && x.is_finite();
    if !(positive(t.f_r) && positive(t.kappa_e) && positive(t.lk0) && positive(t.istar) && positive(t.z0))
        || t.kappa_i < 0.0
    {
        return Err(Error::Argument("calibration targets must be positive".into()));
    }
    if t.kappa_e <= t.kappa_i {
        return Err(Error::Calibration(format!(
            "model must be over-coupled, got κe = {} ≤ κi = {}",
            t.kappa_e, t.kappa_i
        )));
    }
    if t.l_pad.is_some_and(|l| !positive(l)) {
        return Err(Error::Argument("pad inductance must be positive".into()));
    }
    let w_t = 2.0 * PI * t.f_r;
    let (mut w, mut ke, mut ki) = (w_t, t.kappa_e, t.kappa_i);
    for _ in 0..30 {
        let m = model_for(t, w, ke, ki)?;
        let fit = fit_linear_response(&m, 8.0, 801)?;
        let ew = fit.omega_r / w_t - 1.0;
        let ee = fit.kappa_e / t.kappa_e - 1.0;
        let ei = if t.kappa_i > 0.0 { fit.kappa_i / t.kappa_i - 1.0 } else { fit.kappa_i / t.kappa_e };
        if ew.abs() < 1e-7 && ee.abs() < 1e-5 && ei.abs() < 1e-4 {
            return Ok(m);
        }
        w /= 1.0 + ew;
        ke /= 1.0 + ee;
        if t.kappa_i > 0.0 {
            ki /= 1.0 + ei;
        }
    }
    Err(Error::Calibration("fixed-point refinement against the Lorentzian fit did not settle".into()))
}
