//! Least-squares Lorentzian fit of single-port reflection spectra.
//!
//! Model: `S(ω) = A e^{−jτ(ω−ω_r)} (1 − κ_e / (κ/2 + j(ω−ω_r)))` with
//! `κ = κ_e + κ_i`, all rates in rad/s.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzianFit {
    pub omega_r: f64,
    pub kappa_e: f64,
    pub kappa_i: f64,
    pub amplitude: Complex64,
    pub delay: f64,
    /// Root-mean-square complex residual.
    pub rms: f64,
}

impl LorentzianFit {
    pub fn f_r(&self) -> f64 {
        self.omega_r / (2.0 * std::f64::consts::PI)
    }

    pub fn model(&self, omega: f64) -> Complex64 {
        lorentzian(omega, self.omega_r, self.kappa_e, self.kappa_i, self.amplitude, self.delay)
    }
}

fn lorentzian(w: f64, wr: f64, ke: f64, ki: f64, a: Complex64, tau: f64) -> Complex64 {
    let d = w - wr;
    a * Complex64::from_polar(1.0, -tau * d) * (1.0 - ke / Complex64::new(0.5 * (ke + ki), d))
}

/// Fits the model to `(f_hz, S)` samples covering the resonance.
pub fn fit_lorentzian(freqs: &[f64], s: &[Complex64]) -> Result<LorentzianFit> {
    if freqs.len() != s.len() || freqs.len() < 8 {
        return Err(Error::Argument("need at least 8 matching frequency and S samples".into()));
    }
    let w: Vec<f64> = freqs.iter().map(|f| 2.0 * std::f64::consts::PI * f).collect();
    let init = initial_guess(&w, s)?;
    let scale = (init[1] + init[2]).max(1e-12 * init[0]);
    let pack = |p: &[f64; 6]| DVector::from_vec(vec![p[0] / scale, p[1] / scale, p[2] / scale, p[3], p[4], p[5] * scale]);
    let unpack = |v: &DVector<f64>| [v[0] * scale, v[1] * scale, v[2] * scale, v[3], v[4], v[5] / scale];
    let resid = |v: &DVector<f64>| -> DVector<f64> {
        let p = unpack(v);
        let a = Complex64::new(p[3], p[4]);
        let mut r = DVector::zeros(2 * w.len());
        for (i, (&wi, si)) in w.iter().zip(s).enumerate() {
            let e = lorentzian(wi, p[0], p[1], p[2], a, p[5]) - si;
            r[2 * i] = e.re;
            r[2 * i + 1] = e.im;
        }
        r
    };

    let mut x = pack(&init);
    let mut r = resid(&x);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    for _ in 0..200 {
        let mut jac = DMatrix::zeros(r.len(), 6);
        for c in 0..6 {
            let h = 1e-7 * x[c].abs().max(1e-3);
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[c] += h;
            xm[c] -= h;
            jac.set_column(c, &((resid(&xp) - resid(&xm)) / (2.0 * h)));
        }
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let g = &jt * &r;
        let mut improved = false;
        while lambda < 1e12 {
            let mut a = jtj.clone();
            for i in 0..6 {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-30);
            }
            let Some(step) = a.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let xn = &x + &step;
            let rn = resid(&xn);
            let cn = rn.norm_squared();
            if cn < cost {
                let rel = (cost - cn) / cost.max(f64::MIN_POSITIVE);
                x = xn;
                r = rn;
                cost = cn;
                lambda = (lambda * 0.3).max(1e-12);
                improved = rel > 1e-15;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let p = unpack(&x);
    if !(p[1] > 0.0) || p[2] < -1e-6 * p[1] {
        return Err(Error::Argument(format!("Lorentzian fit produced non-physical rates κe={} κi={}", p[1], p[2])));
    }
    Ok(LorentzianFit {
        omega_r: p[0],
        kappa_e: p[1],
        kappa_i: p[2],
        amplitude: Complex64::new(p[3], p[4]),
        delay: p[5],
        rms: (cost / w.len() as f64).sqrt(),
    })
}

/// Algebraic circle fit, then a linear fit of `1/(1 − S/A)` against ω.
fn initial_guess(w: &[f64], s: &[Complex64]) -> Result<[f64; 6]> {
    // Kasa circle fit: x² + y² + D x + E y + F = 0.
    let n = s.len();
    let mut m = DMatrix::zeros(n, 3);
    let mut rhs = DVector::zeros(n);
    for (i, z) in s.iter().enumerate() {
        m[(i, 0)] = z.re;
        m[(i, 1)] = z.im;
        m[(i, 2)] = 1.0;
        rhs[i] = -z.norm_sqr();
    }
    let sol = (m.transpose() * &m)
        .lu()
        .solve(&(m.transpose() * rhs))
        .ok_or_else(|| Error::Argument("degenerate spectrum for circle fit".into()))?;
    let center = Complex64::new(-sol[0] / 2.0, -sol[1] / 2.0);
    let radius = (center.norm_sqr() - sol[2]).max(0.0).sqrt();

    // Resonance: fastest traversal of the circle.
    let mut best = (0, 0.0);
    for i in 1..n - 1 {
        let rate = ((s[i + 1] - s[i - 1]) / (w[i + 1] - w[i - 1])).norm();
        if rate > best.1 {
            best = (i, rate);
        }
    }
    let s_res = s[best.0];
    let u = (center - s_res) / (center - s_res).norm();
    let a = center + u * radius;

    // 1/z = (κ/2 + j(ω−ω_r))/κ_e with z = 1 − S/A, using only points near
    // resonance where an unknown delay barely perturbs z.
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy, mut sre) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let w0 = w[best.0];
    let zmax = s.iter().map(|si| (1.0 - si / a).norm()).fold(0.0, f64::max);
    for (wi, si) in w.iter().zip(s) {
        let z = 1.0 - si / a;
        if z.norm() < 0.3 * zmax {
            continue;
        }
        let inv = 1.0 / z;
        let x = wi - w0;
        sw += 1.0;
        sx += x;
        sy += inv.im;
        sxx += x * x;
        sxy += x * inv.im;
        sre += inv.re;
    }
    let slope = (sw * sxy - sx * sy) / (sw * sxx - sx * sx);
    let intercept = (sy - slope * sx) / sw;
    let ke = 1.0 / slope;
    let wr = w0 - intercept / slope;
    let kappa = 2.0 * ke * sre / sw;
    if !(ke > 0.0 && kappa.is_finite()) {
        return Err(Error::Argument("spectrum does not look like a resonance".into()));
    }
    Ok([wr, ke, (kappa - ke).max(1e-3 * ke), a.re, a.im, 0.0])
}
