//! Single-mode coupled-mode (Kerr) reference for two-pump gain.
//!
//! The mode amplitude `a` is normalised so `|a|²` is stored energy. A tone at
//! `Ω` obeys `D(Ω) a = u(Ω) a_in + ν(Ω) jK N(a)` where `N` collects the cubic
//! products of `|a|²a`. Without dispersion `D = κ/2 + j(Ω − ω_r)`, `u = √κ_e`,
//! `ν = 1`, the reflected wave is `b = −a_in + √κ_e a` and `|a_in|²` is the
//! available power. The dispersive variant takes `D`, `u` and the reflection
//! from the exact linear lumped network (`D = Y(Ω)/2C_s` at the resonator
//! node) and `ν = ω_r/Ω`, keeping the single-mode Kerr law.
//!
//! Signal and idler are linearised about the pump state, optionally with the
//! conversion sidebands `ω_s ± 2mΔ`, `ω_i ± 2mΔ` (`2Δ = ω_p1 − ω_p2`) that
//! the pump beat couples to them.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::circuit::dbm_to_watts;
use crate::error::{Error, Result};

use super::calibrate::KipaModel;
use super::gain::PumpSpec;

type CMatrix = DMatrix<Complex64>;
type CVector = DVector<Complex64>;

const J: Complex64 = Complex64::new(0.0, 1.0);

/// Exact linear network of the lumped model, seen from the resonator node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LumpedNetwork {
    pub cc: f64,
    pub c: f64,
    pub g: f64,
    pub l: f64,
    pub z0: f64,
    pub c_slope: f64,
}

impl LumpedNetwork {
    fn x(&self, w: f64) -> Complex64 {
        J * w * self.cc * self.z0
    }

    fn admittance(&self, w: f64) -> Complex64 {
        let x = self.x(w);
        J * w * self.c + self.g + 1.0 / (J * w * self.l) + J * w * self.cc / (1.0 + x)
    }

    /// Mode amplitude per unit resonator voltage.
    fn mode_per_volt(&self, w: f64, omega_r: f64) -> f64 {
        (0.5 * self.c_slope).sqrt() * omega_r / w
    }

    /// Drive per unit `√P` (Thevenin `V_s = √(8 Z0 P)`).
    fn drive(&self, w: f64, omega_r: f64) -> Complex64 {
        let vs = (8.0 * self.z0).sqrt();
        let x = self.x(w);
        let i_in = vs * x / (self.z0 * (1.0 + x));
        self.mode_per_volt(w, omega_r) * i_in / (2.0 * self.c_slope)
    }

    /// `b / a_in` at the port for mode amplitude `a` and drive `a_in`, both per `√P`.
    fn reflected(&self, w: f64, omega_r: f64, a: Complex64, driven: bool) -> Complex64 {
        let vs = if driven { (8.0 * self.z0).sqrt() } else { 0.0 };
        let v = a / self.mode_per_volt(w, omega_r);
        let x = self.x(w);
        let vp = (vs + x * v) / (1.0 + x);
        (2.0 * vp - vs) / (8.0 * self.z0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmtModel {
    pub omega_r: f64,
    pub kappa_e: f64,
    pub kappa_i: f64,
    /// Frequency shift per stored energy (rad/s/J).
    pub kerr: f64,
    /// Exact linear dispersion; `None` gives the plain Lorentzian mode.
    pub network: Option<LumpedNetwork>,
}

impl CmtModel {
    pub fn lorentzian(omega_r: f64, kappa_e: f64, kappa_i: f64, kerr: f64) -> Self {
        Self { omega_r, kappa_e, kappa_i, kerr, network: None }
    }

    /// Oracle parameters derived from a calibrated lumped model.
    pub fn from_model(m: &KipaModel, dispersive: bool) -> Self {
        let network = dispersive.then(|| LumpedNetwork {
            cc: m.cc,
            c: m.c,
            g: m.r.map_or(0.0, |r| 1.0 / r),
            l: m.l_total(),
            z0: m.z0,
            c_slope: m.linear.c_slope,
        });
        Self { omega_r: m.linear.omega_r, kappa_e: m.linear.kappa_e, kappa_i: m.linear.kappa_i, kerr: m.kerr(), network }
    }

    fn denom(&self, w: f64) -> Complex64 {
        match &self.network {
            None => Complex64::new(0.5 * (self.kappa_e + self.kappa_i), w - self.omega_r),
            Some(n) => n.admittance(w) / (2.0 * n.c_slope),
        }
    }

    fn nl_scale(&self, w: f64) -> f64 {
        match self.network {
            None => 1.0,
            Some(_) => self.omega_r / w,
        }
    }

    fn drive(&self, w: f64) -> Complex64 {
        match &self.network {
            None => Complex64::new(self.kappa_e.sqrt(), 0.0),
            Some(n) => n.drive(w, self.omega_r),
        }
    }

    fn reflected(&self, w: f64, a: Complex64, driven: bool) -> Complex64 {
        match &self.network {
            None => self.kappa_e.sqrt() * a - if driven { 1.0 } else { 0.0 },
            Some(n) => n.reflected(w, self.omega_r, a, driven),
        }
    }

    /// Single-tone mode energy for available power `power_w`, on the branch
    /// continued from zero drive.
    pub fn duffing_energy(&self, f: f64, power_w: f64) -> Result<f64> {
        let w = 2.0 * PI * f;
        let e = self.drive(w).norm_sqr() * power_w;
        let (d, s) = (self.denom(w), self.nl_scale(w) * self.kerr);
        let res = |n: f64, target: f64| n * (d - J * s * n).norm_sqr() - target;
        let mut n: f64 = 0.0;
        let steps = 200;
        for k in 1..=steps {
            let target = e * k as f64 / steps as f64;
            for _ in 0..100 {
                let r = res(n, target);
                if r.abs() <= 1e-14 * e {
                    break;
                }
                let h = 1e-7 * n.abs().max(1e-30);
                let dr = (res(n + h, target) - r) / h;
                if dr <= 0.0 {
                    return Err(Error::Oracle(format!("single-tone branch folds at {f} Hz")));
                }
                n = (n - r / dr).max(0.0);
            }
        }
        Ok(n)
    }

    /// Pump comb at `ω_c + (2m+1)Δ` for `m ∈ [−orders−1, orders]`, ramping the
    /// drive from zero; entries `orders` and `orders+1` are pumps 1 and 2.
    /// `orders = 0` keeps only the pumps with self and cross Kerr.
    pub fn pump_comb(&self, pump: &PumpSpec, orders: usize) -> Result<Vec<Complex64>> {
        let mo = orders as i64;
        let len = 2 * orders + 2;
        let omega = |i: usize| 2.0 * PI * (pump.f_c + (2 * (i as i64 - mo - 1) + 1) as f64 * pump.delta_f);
        let d: Vec<Complex64> = (0..len).map(|i| self.denom(omega(i))).collect();
        let nu: Vec<Complex64> = (0..len).map(|i| J * self.kerr * self.nl_scale(omega(i))).collect();
        let amp = dbm_to_watts(pump.power_dbm).sqrt();
        let mut src = vec![Complex64::new(0.0, 0.0); len];
        src[orders + 1] = self.drive(omega(orders + 1)) * Complex64::from_polar(amp, pump.phase_p1);
        src[orders] = self.drive(omega(orders)) * Complex64::from_polar(amp, pump.phase_p2);

        let resid = |p: &[Complex64], scale: f64| -> Vec<Complex64> {
            (0..len)
                .map(|m| {
                    let mut nl = Complex64::new(0.0, 0.0);
                    for k in 0..len {
                        for l in 0..len {
                            // Tone offsets cancel in k + l − q = m.
                            let q = k as i64 + l as i64 - m as i64;
                            if (0..len as i64).contains(&q) {
                                nl += p[k] * p[l] * p[q as usize].conj();
                            }
                        }
                    }
                    d[m] * p[m] - nu[m] * nl - scale * src[m]
                })
                .collect()
        };
        let norm = |r: &[Complex64]| r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let src_norm = norm(&src);
        let mut p = vec![Complex64::new(0.0, 0.0); len];
        let steps = 200;
        for step in 1..=steps {
            let scale = step as f64 / steps as f64;
            let mut converged = false;
            for _ in 0..50 {
                let r = resid(&p, scale);
                let rn = norm(&r);
                if rn <= 1e-13 * src_norm {
                    converged = true;
                    break;
                }
                let mut jac = DMatrix::<f64>::zeros(2 * len, 2 * len);
                let h = 1e-7 * norm(&p).max(1e-3 * scale * src_norm / d[orders].norm());
                for c in 0..2 * len {
                    let mut pp = p.clone();
                    pp[c / 2] += if c % 2 == 0 { Complex64::new(h, 0.0) } else { Complex64::new(0.0, h) };
                    let rp = resid(&pp, scale);
                    for m in 0..len {
                        jac[(2 * m, c)] = (rp[m].re - r[m].re) / h;
                        jac[(2 * m + 1, c)] = (rp[m].im - r[m].im) / h;
                    }
                }
                let rhs = DVector::from_iterator(2 * len, r.iter().flat_map(|z| [-z.re, -z.im]));
                let dx = jac.lu().solve(&rhs).ok_or_else(|| Error::Oracle("singular pump balance".into()))?;
                for m in 0..len {
                    p[m] += Complex64::new(dx[2 * m], dx[2 * m + 1]);
                }
            }
            if !converged {
                return Err(Error::Oracle(format!("pump balance failed at {:.3} of the drive", scale)));
            }
        }
        Ok(p)
    }

    /// Mode energies of pumps 1 and 2 with `orders` intermodulation tones per side.
    pub fn pump_energies(&self, pump: &PumpSpec, orders: usize) -> Result<[f64; 2]> {
        let p = self.pump_comb(pump, orders)?;
        Ok([p[orders + 1].norm_sqr(), p[orders].norm_sqr()])
    }

    /// Signal and idler power gains (dB) at `f_s`, linearised about the pump
    /// comb of `orders` (see [`Self::pump_comb`]) with `sidebands` extra
    /// conversion products on each side.
    pub fn gain(&self, pump: &PumpSpec, f_s: f64, orders: usize, sidebands: usize) -> Result<(f64, f64)> {
        let p = self.pump_comb(pump, orders)?;
        let mo = orders as i64;
        let plen = p.len() as i64;
        // |a_p|² at 2nΔ and a_p² at 2ω_c + 2nΔ.
        let beat = |n: i64| -> Complex64 { (0..plen).filter(|k| (0..plen).contains(&(k + n))).map(|k| p[(k + n) as usize] * p[k as usize].conj()).sum() };
        let square = |n: i64| -> Complex64 {
            // Tone indices k, l satisfy (k − mo − 1) + (l − mo − 1) + 1 = n.
            (0..plen)
                .filter_map(|k| {
                    let l = n + 2 * mo + 1 - k;
                    (0..plen).contains(&l).then(|| p[k as usize] * p[l as usize])
                })
                .sum()
        };
        let nb = sidebands as i64;
        let size = (2 * nb + 1) as usize;
        let idx = |m: i64| (m + nb) as usize;
        let in_range = |m: i64| m.abs() <= nb;
        let wd = 2.0 * PI * 2.0 * pump.delta_f;
        let ws = 2.0 * PI * f_s;
        let wi = 2.0 * PI * (2.0 * pump.f_c - f_s);
        let reach = 2 * mo + 1;

        // Unknowns: s_m (rows 0..size), then conj(c_k) (rows size..2 size).
        let mut mat = CMatrix::zeros(2 * size, 2 * size);
        for m in -nb..=nb {
            let (r, rc) = (idx(m), size + idx(m));
            let om_s = ws + m as f64 * wd;
            let om_i = wi + m as f64 * wd;
            let ks = J * self.kerr * self.nl_scale(om_s);
            let ki = J * self.kerr * self.nl_scale(om_i);
            mat[(r, r)] += self.denom(om_s);
            mat[(rc, rc)] += self.denom(om_i).conj();
            for n in -reach..=reach {
                if in_range(m - n) {
                    let b = beat(n);
                    mat[(r, idx(m - n))] -= 2.0 * ks * b;
                    mat[(rc, size + idx(m - n))] += 2.0 * ki * b.conj();
                }
                let k = n - m;
                if in_range(k) {
                    let q = square(n);
                    mat[(r, size + idx(k))] -= ks * q;
                    mat[(rc, idx(k))] += ki * q.conj();
                }
            }
        }
        let mut rhs = CVector::zeros(2 * size);
        rhs[idx(0)] = self.drive(ws);
        let x = mat.lu().solve(&rhs).ok_or_else(|| Error::Oracle("singular sideband system".into()))?;
        let bs = self.reflected(ws, x[idx(0)], true);
        let bi = self.reflected(wi, x[size + idx(0)].conj(), false);
        Ok((10.0 * bs.norm_sqr().log10(), 10.0 * bi.norm_sqr().log10()))
    }
}

/// Duffing critical available power (dBm) of a single-mode Kerr resonator.
pub fn duffing_critical_dbm(kappa: f64, kappa_e: f64, kerr: f64) -> f64 {
    let p = kappa.powi(3) / (3.0 * 3f64.sqrt() * kerr.abs() * kappa_e);
    10.0 * (p / 1e-3).log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::studio::calibrate::{calibrate_lumped_model, CalibrationTargets};

    fn model() -> CmtModel {
        CmtModel::lorentzian(2.0 * PI * 7.45e9, 2.0 * PI * 57e6, 2.0 * PI * 1.8e6, -1.36e29)
    }

    #[test]
    fn unpumped_gain_is_lossy_reflection() {
        let m = model();
        let pump = PumpSpec::new(7.4e9, 133.5e6, -200.0);
        let f = 7.46e9;
        let (g, gi) = m.gain(&pump, f, 1, 2).unwrap();
        let d = 2.0 * PI * f - m.omega_r;
        let s = 1.0 - m.kappa_e / Complex64::new(0.5 * (m.kappa_e + m.kappa_i), d);
        assert!((g - 10.0 * s.norm_sqr().log10()).abs() < 1e-9);
        assert!(gi < -200.0);
    }

    #[test]
    fn single_pair_matches_closed_form() {
        let m = model();
        let pump = PumpSpec::new(7.3716e9, 133.5e6, -90.0);
        let f_s = 7.3716e9 + 3e6;
        let n = m.pump_energies(&pump, 0).unwrap();
        let kappa = m.kappa_e + m.kappa_i;
        let shift = 2.0 * m.kerr * (n[0] + n[1]);
        let ds = 2.0 * PI * f_s - m.omega_r - shift;
        let di = 2.0 * PI * (2.0 * pump.f_c - f_s) - m.omega_r - shift;
        let g2 = 4.0 * m.kerr * m.kerr * n[0] * n[1];
        let ci = Complex64::new(0.5 * kappa, -di);
        let s = m.kappa_e.sqrt() / (Complex64::new(0.5 * kappa, ds) - g2 / ci);
        let expect = 10.0 * (-1.0 + m.kappa_e.sqrt() * s).norm_sqr().log10();
        let (g, _) = m.gain(&pump, f_s, 0, 0).unwrap();
        assert!((g - expect).abs() < 1e-9, "{g} {expect}");
        assert!(g > 1.0);
    }

    #[test]
    fn dispersive_network_matches_circuit_reflection() {
        let km = calibrate_lumped_model(&CalibrationTargets::default()).unwrap();
        let m = CmtModel::from_model(&km, true);
        let pump = PumpSpec::new(7.3716e9, 133.5e6, -250.0);
        let freqs = [7.2e9, 7.44e9, 7.45e9, 7.7e9];
        let lin = crate::studio::linear_reflection(&km.circuit, 0, &freqs).unwrap();
        for (f, s) in freqs.iter().zip(lin) {
            let (g, _) = m.gain(&pump, *f, 1, 1).unwrap();
            assert!((g - 10.0 * s.norm_sqr().log10()).abs() < 1e-9, "{f}");
        }
    }

    #[test]
    fn critical_power_formula() {
        // The critical drive is where n((d − Kn)² + κ²/4) = κ_e P has a triple root.
        let m = model();
        let k = m.kappa_e + m.kappa_i;
        let pc = dbm_to_watts(duffing_critical_dbm(k, m.kappa_e, m.kerr));
        let n_c = k / (3f64.sqrt() * m.kerr.abs());
        let d_c = 1.5 * m.kerr * n_c;
        let lhs = n_c * ((d_c - m.kerr * n_c).powi(2) + 0.25 * k * k);
        assert!((lhs / (m.kappa_e * pc) - 1.0).abs() < 1e-12);
    }
}
