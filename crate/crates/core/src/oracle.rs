//! Trapezoidal transient integration of lumped circuits, used as an
//! independent steady-state reference for harmonic balance.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::circuit::{source_amplitude, Circuit, TimeDomainSystem};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct TransientOptions {
    pub dt: f64,
    pub t_end: f64,
    /// Samples before this time are not stored.
    pub record_start: f64,
    /// Bound on the Newton update relative to the state's max norm.
    pub newton_tol: f64,
    pub max_newton: usize,
}

impl TransientOptions {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self { dt, t_end, record_start: 0.0, newton_tol: 1e-12, max_newton: 50 }
    }
}

#[derive(Debug, Clone)]
pub struct TransientResult {
    pub dt: f64,
    pub t_end: f64,
    /// Time of the first stored sample; sample `n` lies at `t0 + n·dt`.
    pub t0: f64,
    pub unknown_names: Vec<String>,
    /// `waveforms[u][n]`.
    pub waveforms: Vec<Vec<f64>>,
}

impl TransientResult {
    pub fn unknown_index(&self, name: &str) -> Option<usize> {
        self.unknown_names.iter().position(|n| n == name)
    }

    pub fn len(&self) -> usize {
        self.waveforms.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn time(&self, n: usize) -> f64 {
        self.t0 + n as f64 * self.dt
    }

    /// Writes `t` followed by every unknown, one row per stored sample.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(w, "t_s")?;
        for n in &self.unknown_names {
            write!(w, ",{n}")?;
        }
        writeln!(w)?;
        for i in 0..self.len() {
            write!(w, "{}", self.time(i))?;
            for wf in &self.waveforms {
                write!(w, ",{}", wf[i])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Thevenin port voltages as a function of time.
pub type Drive<'a> = dyn Fn(f64, &mut [f64]) + Sync + 'a;

/// Drive built from the circuit's port sources, each tone `k` mapped to
/// `Σ k_i f_i`, with a raised-cosine amplitude ramp over `ramp_time`.
pub fn source_drive(c: &Circuit, base_tones: &[f64], ramp_time: f64) -> Result<impl Fn(f64, &mut [f64]) + Sync> {
    let mut tones: Vec<Vec<(f64, f64, f64)>> = Vec::new();
    for p in &c.ports {
        let mut list = Vec::new();
        for s in &p.sources {
            if s.tone.len() != base_tones.len() {
                return Err(Error::Config(format!("source tone {:?} does not match {} base tones", s.tone, base_tones.len())));
            }
            let f: f64 = s.tone.iter().zip(base_tones).map(|(&k, &f)| k as f64 * f).sum();
            let w = 2.0 * std::f64::consts::PI * f;
            list.push((source_amplitude(s.power_dbm, p.z0), w, s.phase));
        }
        tones.push(list);
    }
    Ok(move |t: f64, out: &mut [f64]| {
        let ramp = if ramp_time <= 0.0 || t >= ramp_time {
            1.0
        } else {
            0.5 * (1.0 - (std::f64::consts::PI * t / ramp_time).cos())
        };
        for (o, list) in out.iter_mut().zip(&tones) {
            *o = ramp * list.iter().map(|&(a, w, ph)| a * (w * t + ph).cos()).sum::<f64>();
        }
    })
}

fn charge(sys: &TimeDomainSystem, x: &DVector<f64>) -> DVector<f64> {
    let mut q = &sys.c * x;
    for &(row, law) in &sys.branches {
        q[row] = -law.flux(x[row]);
    }
    q
}

fn inject(sys: &TimeDomainSystem, vs: &[f64], u: &mut DVector<f64>) {
    u.fill(0.0);
    for (p, v) in sys.ports.iter().zip(vs) {
        u[p.node] += v / p.z0;
    }
}

/// Integrates `G x + dq(x)/dt = u(t)` from rest with the trapezoidal rule.
pub fn integrate(c: &Circuit, drive: &Drive<'_>, opts: TransientOptions) -> Result<TransientResult> {
    if !(opts.dt > 0.0 && opts.t_end > 0.0) {
        return Err(Error::Argument(format!("dt and t_end must be positive, got {} and {}", opts.dt, opts.t_end)));
    }
    let sys = c.compile()?.time_domain()?;
    let n = sys.g.nrows();
    let steps = (opts.t_end / opts.dt).round() as usize;
    let first_kept = ((opts.record_start / opts.dt).ceil().max(0.0) as usize).min(steps);
    let mut waveforms = vec![Vec::with_capacity(steps + 1 - first_kept); n];

    let half_h = 0.5 * opts.dt;
    let half_g = &sys.g * half_h;
    let mut vs = vec![0.0; sys.ports.len()];
    let mut x = DVector::zeros(n);
    let mut u_prev = DVector::zeros(n);
    let mut u_next = DVector::zeros(n);
    drive(0.0, &mut vs);
    inject(&sys, &vs, &mut u_prev);
    let mut q = charge(&sys, &x);
    let linear = sys.branches.iter().all(|(_, l)| matches!(l, crate::circuit::BranchLaw::Linear(_)));
    let jac_of = |x: &DVector<f64>| -> DMatrix<f64> {
        let mut j = &sys.c + &half_g;
        for &(row, law) in &sys.branches {
            j[(row, row)] -= law.inductance(x[row]);
        }
        j
    };
    let fixed_lu = if linear { Some(jac_of(&x).lu()) } else { None };

    if first_kept == 0 {
        for (w, v) in waveforms.iter_mut().zip(x.iter()) {
            w.push(*v);
        }
    }
    for step in 1..=steps {
        let t = step as f64 * opts.dt;
        drive(t, &mut vs);
        inject(&sys, &vs, &mut u_next);
        // Known part: q_n + (h/2)(u_n + u_{n+1} − G x_n).
        let known = &q + (&u_prev + &u_next) * half_h - &half_g * &x;
        let mut xn = x.clone();
        let mut converged = false;
        let mut last = f64::INFINITY;
        for _ in 0..opts.max_newton {
            let r = charge(&sys, &xn) + &half_g * &xn - &known;
            let dx = match &fixed_lu {
                Some(lu) => lu.solve(&(-&r)),
                None => jac_of(&xn).lu().solve(&(-&r)),
            }
            .ok_or(Error::Integration { time: t })?;
            xn += &dx;
            let d = dx.amax();
            // Updates that stop shrinking have reached the rounding floor.
            if d <= opts.newton_tol * xn.amax() || (d >= 0.5 * last && d <= 1e-9 * xn.amax()) {
                converged = true;
                break;
            }
            last = d;
        }
        if !converged || !xn.iter().all(|v| v.is_finite()) {
            return Err(Error::Integration { time: t });
        }
        x = xn;
        q = charge(&sys, &x);
        std::mem::swap(&mut u_prev, &mut u_next);
        if step >= first_kept {
            for (w, v) in waveforms.iter_mut().zip(x.iter()) {
                w.push(*v);
            }
        }
    }
    Ok(TransientResult {
        dt: opts.dt,
        t_end: steps as f64 * opts.dt,
        t0: first_kept as f64 * opts.dt,
        unknown_names: sys.unknown_names,
        waveforms,
    })
}

/// Single-bin Fourier projection of unknown `u` at `f` over the final
/// `n_cycles` periods, returned as a peak phasor.
pub fn steady_state_amplitude(r: &TransientResult, u: usize, f: f64, n_cycles: usize) -> Result<Complex64> {
    if !(f > 0.0) || n_cycles == 0 {
        return Err(Error::Argument("frequency and cycle count must be positive".into()));
    }
    let samples = n_cycles as f64 / (f * r.dt);
    let n = samples.round() as usize;
    if (samples - n as f64).abs() > 1e-6 {
        return Err(Error::Argument(format!(
            "{n_cycles} periods of {f} Hz span {samples} steps, not an integer"
        )));
    }
    let wf = r.waveforms.get(u).ok_or_else(|| Error::Argument(format!("no unknown with index {u}")))?;
    // The last stored sample closes the window; drop it so it spans exactly n steps.
    if wf.len() < n + 1 {
        return Err(Error::Argument(format!("record holds {} samples, need {}", wf.len(), n + 1)));
    }
    let start = wf.len() - 1 - n;
    let w = 2.0 * std::f64::consts::PI * f;
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, v) in wf[start..start + n].iter().enumerate() {
        acc += v * Complex64::from_polar(1.0, -w * r.time(start + i));
    }
    Ok(acc * (2.0 / n as f64))
}

/// Richardson extrapolation of a second-order quantity computed at steps `h` and `h/2`.
pub fn richardson(coarse: Complex64, fine: Complex64) -> Complex64 {
    (fine * 4.0 - coarse) / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{phasor_solve, Source};

    fn result_from(dt: f64, waves: Vec<Vec<f64>>) -> TransientResult {
        let len = waves[0].len();
        TransientResult { dt, t_end: dt * (len - 1) as f64, t0: 0.0, unknown_names: vec!["x".into(); waves.len()], waveforms: waves }
    }

    #[test]
    fn projection_of_pure_and_two_tone_signals() {
        let (f1, f2, dt) = (1e9, 3e9, 1e-12);
        let (a1, p1, a2, p2) = (0.7, 0.4, 0.2, -1.1);
        let n = 20001;
        let w = |f: f64| 2.0 * std::f64::consts::PI * f;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 * dt;
                a1 * (w(f1) * t + p1).cos() + a2 * (w(f2) * t + p2).cos() + 0.3
            })
            .collect();
        let r = result_from(dt, vec![x]);
        let z1 = steady_state_amplitude(&r, 0, f1, 10).unwrap();
        assert!((z1.norm() - a1).abs() < 1e-6 && (z1.arg() - p1).abs() < 1e-6);
        let z2 = steady_state_amplitude(&r, 0, f2, 30).unwrap();
        assert!((z2.norm() - a2).abs() < 1e-4);
        let dc = result_from(dt, vec![vec![1.0; n]]);
        assert!(steady_state_amplitude(&dc, 0, f1, 10).unwrap().norm() < 1e-12);
        assert!(steady_state_amplitude(&r, 0, 1.3e9, 10).is_err());
        assert!(steady_state_amplitude(&r, 0, f1, 100).is_err());
    }

    #[test]
    fn rc_step_response() {
        let (r, cap) = (1e3, 1e-12);
        let mut c = Circuit::new();
        c.port("P", "a", 1e-3).resistor("R", "a", "b", r).capacitor("C", "b", "0", cap);
        // Near-ideal 1 V step through a 1 mΩ source.
        let drive = |_t: f64, out: &mut [f64]| out[0] = 1.0;
        let tau = r * cap;
        let res = integrate(&c, &drive, TransientOptions::new(tau / 2000.0, tau)).unwrap();
        let b = res.unknown_index("V(b)").unwrap();
        let v = *res.waveforms[b].last().unwrap();
        let expected = 1.0 - (-1.0f64).exp();
        assert!((v - expected).abs() < 1e-3 * expected, "{v} vs {expected}");
    }

    #[test]
    fn driven_lc_matches_phasor_solve() {
        let mut c = Circuit::new();
        c.port("P", "a", 50.0)
            .inductor("L", "a", "b", 2e-9)
            .capacitor("C", "b", "0", 300e-15)
            .resistor("R", "b", "0", 300.0);
        c.add_source(0, Source { tone: vec![1], power_dbm: -40.0, phase: 0.5 }).unwrap();
        let f = 5e9;
        let drive = source_drive(&c, &[f], 2e-9).unwrap();
        let dt = 1.0 / (f * 400.0);
        let res = integrate(&c, &drive, TransientOptions { record_start: 40e-9, ..TransientOptions::new(dt, 50e-9) }).unwrap();
        let u = res.unknown_index("V(b)").unwrap();
        let z = steady_state_amplitude(&res, u, f, 20).unwrap();
        let mna = c.compile().unwrap();
        let vs = Complex64::from_polar(source_amplitude(-40.0, 50.0), 0.5);
        let want = phasor_solve(&mna, f, &[vs]).unwrap()[u];
        assert!((z - want).norm() < 1e-3 * want.norm(), "{z} vs {want}");
    }

    #[test]
    fn richardson_cancels_second_order_error() {
        let exact = Complex64::new(1.0, 2.0);
        let e = Complex64::new(0.3, -0.1);
        assert!((richardson(exact + e, exact + e / 4.0) - exact).norm() < 1e-15);
    }
}
