//! Newton harmonic balance condensed onto the kinetic-inductor branch currents.
//!
//! With the kinetic inductors stamped at `Lk0`, the only nonlinear term is the
//! excess flux `Φ_NL(i) = Lk0·i³/(3 I*²)`, which enters each inductor's branch
//! row as `jω_m Φ_NL,m`. Writing `B` for the selector of kinetic branch rows,
//! the unknowns reduce to the branch-current spectra `I_m` with residual
//!
//! ```text
//! R_m = I_m − Bᵀ Y_m⁻¹ U_m − (Bᵀ Y_m⁻¹ B) · jω_m Φ_NL,m(I)
//! ```
//!
//! and every other unknown follows from `X_m = Y_m⁻¹ (U_m + B jω_m Φ_NL,m)`.
//! The DC entry carries no unknowns: sources are restricted to `f > 0` and
//! `jω` vanishes there, so its solution is identically zero.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fourier::Torus;
use super::grid::FrequencyGrid;
use crate::circuit::{port_waves, source_amplitude, Circuit, Mna};
use crate::error::{Error, Result};
use crate::touchstone::CMatrix;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HbOptions {
    /// Residual bound relative to the norm of the linear branch-current response.
    pub newton_tol: f64,
    pub max_iter: usize,
    /// Time samples per harmonic order along each torus axis.
    pub oversampling: usize,
    pub continuation_steps: usize,
    /// Initial Newton step length (1 = full step).
    pub damping: f64,
    pub merge_collisions: bool,
}

impl Default for HbOptions {
    fn default() -> Self {
        Self { newton_tol: 1e-10, max_iter: 50, oversampling: 4, continuation_steps: 8, damping: 1.0, merge_collisions: true }
    }
}

impl HbOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.newton_tol > 0.0) {
            return Err(Error::Config(format!("newton_tol must be positive, got {}", self.newton_tol)));
        }
        if self.oversampling < 4 {
            return Err(Error::Config(format!("oversampling must be at least 4, got {}", self.oversampling)));
        }
        if self.max_iter == 0 || self.continuation_steps == 0 {
            return Err(Error::Config("max_iter and continuation_steps must be positive".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct HbSolution {
    pub grid: FrequencyGrid,
    /// `x[m][u]`: coefficient of unknown `u` at grid entry `m` (peak phasor).
    pub x: Vec<Vec<Complex64>>,
    /// Thevenin amplitude of every port at every entry.
    pub port_vs: Vec<Vec<Complex64>>,
    pub port_nodes: Vec<usize>,
    pub port_z0: Vec<f64>,
    pub unknown_names: Vec<String>,
    kinetic_rows: Vec<usize>,
    pub residual_norm: f64,
    pub iterations: usize,
    /// Relative residual before every Newton update of the final solve.
    pub trace: Vec<f64>,
}

impl HbSolution {
    pub fn unknown_index(&self, name: &str) -> Option<usize> {
        self.unknown_names.iter().position(|n| n == name)
    }

    /// Coefficient of unknown `u` at mixing vector `k` (conjugated for `−k`).
    pub fn coefficient(&self, u: usize, k: &[i32]) -> Result<Complex64> {
        let (m, conj) = self.grid.lookup(k)?;
        let v = self.x[m][u];
        Ok(if conj { v.conj() } else { v })
    }

    /// Real waveform of unknown `u` at the given times.
    pub fn waveform(&self, u: usize, times: &[f64]) -> Vec<f64> {
        let w: Vec<f64> = self.grid.entries.iter().map(|e| 2.0 * std::f64::consts::PI * e.freq).collect();
        times
            .iter()
            .map(|&t| {
                self.x
                    .iter()
                    .zip(&w)
                    .map(|(xm, &wm)| (xm[u] * Complex64::from_polar(1.0, wm * t)).re)
                    .sum()
            })
            .collect()
    }

    /// Copy with every coefficient multiplied by `s` (a Newton seed).
    pub fn scaled(&self, s: f64) -> HbSolution {
        let mut out = self.clone();
        out.x.iter_mut().flatten().for_each(|v| *v *= s);
        out
    }

    fn kinetic_spectrum(&self) -> Vec<Vec<Complex64>> {
        self.x.iter().map(|xm| self.kinetic_rows.iter().map(|&r| xm[r]).collect()).collect()
    }
}

/// Incident and reflected waves `(a, b)` at `port` for mixing vector `k`.
pub fn extract_wave(sol: &HbSolution, port: usize, k: &[i32]) -> Result<(Complex64, Complex64)> {
    if port >= sol.port_nodes.len() {
        return Err(Error::Argument(format!("no port with index {port}")));
    }
    let (m, conj) = sol.grid.lookup(k)?;
    let z0 = sol.port_z0[port];
    let v = sol.x[m][sol.port_nodes[port]];
    let vs = sol.port_vs[m][port];
    let (a, b) = port_waves(v, (vs - v) / z0, z0);
    Ok(if conj { (a.conj(), b.conj()) } else { (a, b) })
}

/// Time-average power `(delivered by sources, dissipated)` summed over the grid.
pub fn power_balance(mna: &Mna, sol: &HbSolution) -> Result<(f64, f64)> {
    let (mut delivered, mut dissipated) = (0.0, 0.0);
    for (m, e) in sol.grid.entries.iter().enumerate() {
        // Peak phasors carry a factor 1/2 except at DC.
        let half = if e.freq == 0.0 { 1.0 } else { 0.5 };
        for p in 0..sol.port_nodes.len() {
            let (vs, v, z0) = (sol.port_vs[m][p], sol.x[m][sol.port_nodes[p]], sol.port_z0[p]);
            let i = (vs - v) / z0;
            delivered += half * (vs * i.conj()).re;
            dissipated += half * (vs - v).norm_sqr() / z0;
        }
        dissipated += mna.dissipated_power(e.freq, &sol.x[m])? * 2.0 * half;
    }
    Ok((delivered, dissipated))
}

/// A circuit compiled against one frequency grid, ready for Newton solves.
#[derive(Debug, Clone)]
pub struct HbProblem {
    pub mna: Mna,
    pub grid: FrequencyGrid,
    pub opts: HbOptions,
    torus: Torus,
    omega: Vec<f64>,
    /// `Y_m⁻¹ B`, one column per kinetic branch.
    w: Vec<CMatrix>,
    /// `Bᵀ Y_m⁻¹ B`.
    z: Vec<CMatrix>,
    /// `Y_m⁻¹ U_m` at full source power.
    x_src: Vec<Vec<Complex64>>,
    port_vs: Vec<Vec<Complex64>>,
    /// Mixing vectors of every entry, primary first.
    groups: Vec<Vec<Vec<i32>>>,
    primary: Vec<Vec<i32>>,
}

impl HbProblem {
    pub fn new(c: &Circuit, grid: FrequencyGrid, opts: HbOptions) -> Result<Self> {
        opts.validate()?;
        if !opts.merge_collisions && grid.entries.iter().any(|e| !e.aliases.is_empty()) {
            return Err(Error::Config("grid contains merged frequency collisions".into()));
        }
        let mna = c.compile()?;
        let n_entries = grid.len();
        let n_ports = mna.ports.len();

        let mut port_vs = vec![vec![ZERO; n_ports]; n_entries];
        for (p, port) in c.ports.iter().enumerate() {
            for s in &port.sources {
                if s.tone.len() != grid.dims() {
                    return Err(Error::Config(format!(
                        "source tone {:?} on port {} has {} components, grid has {}",
                        s.tone,
                        port.name,
                        s.tone.len(),
                        grid.dims()
                    )));
                }
                let (m, conj) = grid.lookup(&s.tone).map_err(|_| {
                    Error::Config(format!("source tone {:?} on port {} is outside the grid", s.tone, port.name))
                })?;
                if grid.entries[m].freq == 0.0 {
                    return Err(Error::Config(format!("source tone {:?} on port {} lies at DC", s.tone, port.name)));
                }
                let vs = Complex64::from_polar(source_amplitude(s.power_dbm, port.z0), s.phase);
                port_vs[m][p] += if conj { vs.conj() } else { vs };
            }
        }

        let nk = mna.kinetic.len();
        let n = mna.n_unknowns();
        let mut w = Vec::with_capacity(n_entries);
        let mut z = Vec::with_capacity(n_entries);
        let mut x_src = Vec::with_capacity(n_entries);
        let omega: Vec<f64> = grid.entries.iter().map(|e| 2.0 * std::f64::consts::PI * e.freq).collect();
        for (m, e) in grid.entries.iter().enumerate() {
            if m == 0 {
                w.push(CMatrix::zeros(n, nk));
                z.push(CMatrix::zeros(nk, nk));
                x_src.push(vec![ZERO; n]);
                continue;
            }
            let y = mna.terminated_admittance(e.freq)?;
            let mut rhs = CMatrix::zeros(n, nk + 1);
            for (l, kb) in mna.kinetic.iter().enumerate() {
                rhs[(kb.unknown, l)] = Complex64::new(1.0, 0.0);
            }
            for (p, port) in mna.ports.iter().enumerate() {
                rhs[(port.node, nk)] += port_vs[m][p] / port.z0;
            }
            let sol = y
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Singular(format!("MNA matrix at {} Hz", e.freq)))?;
            let wm = sol.columns(0, nk).into_owned();
            let mut zm = CMatrix::zeros(nk, nk);
            for (k, kb) in mna.kinetic.iter().enumerate() {
                for l in 0..nk {
                    zm[(k, l)] = wm[(kb.unknown, l)];
                }
            }
            x_src.push(sol.column(nk).iter().copied().collect());
            w.push(wm);
            z.push(zm);
        }

        let torus = Torus::new(&grid.truncation, opts.oversampling);
        let groups = grid.entries.iter().map(|e| e.vectors().cloned().collect()).collect();
        let primary = grid.entries.iter().map(|e| e.k.clone()).collect();
        Ok(Self { mna, grid, opts, torus, omega, w, z, x_src, port_vs, groups, primary })
    }

    fn nk(&self) -> usize {
        self.mna.kinetic.len()
    }

    /// Length of the real unknown vector.
    pub fn dim(&self) -> usize {
        2 * (self.grid.len() - 1) * self.nk()
    }

    fn slot(&self, m: usize, k: usize) -> usize {
        2 * ((m - 1) * self.nk() + k)
    }

    fn unpack(&self, x: &[f64]) -> Vec<Vec<Complex64>> {
        let nk = self.nk();
        (0..nk)
            .map(|k| {
                (0..self.grid.len())
                    .map(|m| if m == 0 { ZERO } else { Complex64::new(x[self.slot(m, k)], x[self.slot(m, k) + 1]) })
                    .collect()
            })
            .collect()
    }

    /// Branch-current spectra of the linear response at source scale `s`.
    pub fn linear_guess(&self, s: f64) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        for m in 1..self.grid.len() {
            for (k, kb) in self.mna.kinetic.iter().enumerate() {
                let v = self.x_src[m][kb.unknown] * s;
                let i = self.slot(m, k);
                x[i] = v.re;
                x[i + 1] = v.im;
            }
        }
        x
    }

    /// Per-branch excess-flux spectra and the two-sided coefficients of the
    /// incremental inductance `g = Lk0 i²/I*²`.
    fn nonlinear_terms(&self, x: &[f64], want_g: bool) -> (Vec<Vec<Complex64>>, Vec<Vec<Complex64>>) {
        let spectra = self.unpack(x);
        let mut phi = Vec::with_capacity(self.nk());
        let mut gs = Vec::new();
        for (kb, spec) in self.mna.kinetic.iter().zip(&spectra) {
            let p = kb.params;
            let samples = self.torus.samples(&self.grid, spec);
            let c3 = p.lk0 / (3.0 * p.istar * p.istar);
            let mut f: Vec<Complex64> = samples.iter().map(|i| Complex64::new(c3 * i.re.powi(3), 0.0)).collect();
            self.torus.forward(&mut f);
            phi.push(self.torus.extract(&self.grid, &f));
            if want_g {
                let c2 = p.lk0 / (p.istar * p.istar);
                let mut g: Vec<Complex64> = samples.iter().map(|i| Complex64::new(c2 * i.re * i.re, 0.0)).collect();
                self.torus.forward(&mut g);
                gs.push(g);
            }
        }
        (phi, gs)
    }

    /// Real residual vector at source scale `s`.
    pub fn residual(&self, x: &[f64], s: f64) -> Vec<f64> {
        let (phi, _) = self.nonlinear_terms(x, false);
        let nk = self.nk();
        let mut r = vec![0.0; self.dim()];
        for m in 1..self.grid.len() {
            let jw = Complex64::new(0.0, self.omega[m]);
            for k in 0..nk {
                let i = self.slot(m, k);
                let mut v = Complex64::new(x[i], x[i + 1]) - self.x_src[m][self.mna.kinetic[k].unknown] * s;
                for (l, phil) in phi.iter().enumerate() {
                    v -= self.z[m][(k, l)] * jw * phil[m];
                }
                r[i] = v.re;
                r[i + 1] = v.im;
            }
        }
        r
    }

    /// Analytic Jacobian of [`residual`](Self::residual); independent of `s`.
    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let (_, gs) = self.nonlinear_terms(x, true);
        let nk = self.nk();
        let dim = self.dim();
        let mut jac = DMatrix::zeros(dim, dim);
        let ne = self.grid.len();
        let d = self.grid.dims();
        let mut shifted = vec![0i32; d];
        for m in 1..ne {
            let jw = Complex64::new(0.0, self.omega[m]);
            for n in 1..ne {
                for (l, g) in gs.iter().enumerate() {
                    let (mut sa, mut sb) = (ZERO, ZERO);
                    for v in &self.groups[m] {
                        for t in 0..d {
                            shifted[t] = v[t] - self.primary[n][t];
                        }
                        sa += g[self.torus.flat(&shifted)];
                        for t in 0..d {
                            shifted[t] = v[t] + self.primary[n][t];
                        }
                        sb += g[self.torus.flat(&shifted)];
                    }
                    for k in 0..nk {
                        let zj = self.z[m][(k, l)] * jw;
                        let mut a = -zj * sa;
                        let b = -zj * sb;
                        if m == n && k == l {
                            a += 1.0;
                        }
                        let (r, c) = (self.slot(m, k), self.slot(n, l));
                        jac[(r, c)] = (a + b).re;
                        jac[(r, c + 1)] = -(a - b).im;
                        jac[(r + 1, c)] = (a + b).im;
                        jac[(r + 1, c + 1)] = (a - b).re;
                    }
                }
            }
        }
        jac
    }

    fn reference_norm(&self, s: f64) -> f64 {
        norm(&self.linear_guess(s))
    }

    /// Damped Newton at fixed source scale. Returns the iterate, its relative
    /// residual, the iteration count and the residual trace.
    fn newton(&self, mut x: Vec<f64>, s: f64) -> (Vec<f64>, f64, usize, Vec<f64>, bool) {
        let reference = self.reference_norm(s).max(f64::MIN_POSITIVE);
        let mut r = self.residual(&x, s);
        let mut rn = norm(&r);
        let mut trace = vec![rn / reference];
        for it in 0..self.opts.max_iter {
            if rn <= self.opts.newton_tol * reference {
                return (x, rn / reference, it, trace, true);
            }
            let jac = self.jacobian(&x);
            let Some(dx) = jac.lu().solve(&DVector::from_iterator(r.len(), r.iter().map(|v| -v))) else {
                return (x, rn / reference, it, trace, false);
            };
            let mut alpha = self.opts.damping;
            loop {
                let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, b)| a + alpha * b).collect();
                let rt = self.residual(&trial, s);
                let rtn = norm(&rt);
                if rtn.is_finite() && rtn < (1.0 - 1e-4 * alpha) * rn {
                    x = trial;
                    r = rt;
                    rn = rtn;
                    break;
                }
                alpha *= 0.5;
                if alpha < 1e-6 {
                    return (x, rn / reference, it + 1, trace, false);
                }
            }
            trace.push(rn / reference);
        }
        let ok = rn <= self.opts.newton_tol * reference;
        (x, rn / reference, self.opts.max_iter, trace, ok)
    }

    /// Newton from `guess` alone, without fallbacks.
    pub fn solve_from(&self, guess: &HbSolution) -> Result<HbSolution> {
        let x0 = self.transfer(guess).ok_or_else(|| Error::Argument("guess does not match this circuit".into()))?;
        let (x, res, it, trace, ok) = self.newton(x0, 1.0);
        if ok {
            Ok(self.assemble(&x, res, it, trace))
        } else {
            Err(Error::NoConvergence { residual: res, iterations: it })
        }
    }

    /// Like [`Self::solve`], but first retries `guess` rescaled by a few
    /// factors; past a fold this lets a seed from the vanished branch land on
    /// the surviving one.
    pub fn solve_seeded(&self, guess: Option<&HbSolution>) -> Result<HbSolution> {
        if let Some(g) = guess {
            for s in [1.0, 0.5, 2.0, 0.25, 4.0] {
                if let Ok(sol) = self.solve_from(&g.scaled(s)) {
                    return Ok(sol);
                }
            }
        }
        self.solve(None)
    }

    /// Solves at full source power, first from `guess` (if any), then from
    /// the linear response, then by a geometric source ramp.
    pub fn solve(&self, guess: Option<&HbSolution>) -> Result<HbSolution> {
        let mut total_iters = 0;
        if let Some(g) = guess.and_then(|g| self.transfer(g)) {
            let (x, res, it, trace, ok) = self.newton(g, 1.0);
            total_iters += it;
            if ok {
                return Ok(self.assemble(&x, res, total_iters, trace));
            }
        }
        let (x, res, it, trace, ok) = self.newton(self.linear_guess(1.0), 1.0);
        total_iters += it;
        if ok {
            return Ok(self.assemble(&x, res, total_iters, trace));
        }

        // Geometric ramp from 60 dB below the requested power.
        let steps = self.opts.continuation_steps;
        let s0: f64 = 1e-3;
        let mut s = s0;
        let (mut x, res, it, _, ok) = self.newton(self.linear_guess(s0), s0);
        total_iters += it;
        if !ok {
            return Err(Error::NoConvergence { residual: res, iterations: total_iters });
        }
        let mut step = (1.0 / s0).ln() / steps as f64;
        let min_step = step / 64.0;
        let mut last_res;
        loop {
            let target = (s.ln() + step).min(0.0).exp();
            let scaled: Vec<f64> = x.iter().map(|v| v * target / s).collect();
            let (xn, res, it, trace, ok) = self.newton(scaled, target);
            total_iters += it;
            last_res = res;
            if ok {
                x = xn;
                s = target;
                if s >= 1.0 {
                    return Ok(self.assemble(&x, res, total_iters, trace));
                }
                step = (step * 1.5).min((1.0 / s0).ln() / steps as f64);
            } else {
                step *= 0.5;
                if step < min_step {
                    break;
                }
            }
        }
        Err(Error::NoConvergence { residual: last_res, iterations: total_iters })
    }

    /// Maps a previous solution onto this grid by mixing vector; a guess on
    /// fewer base tones is embedded with zero trailing components.
    fn transfer(&self, g: &HbSolution) -> Option<Vec<f64>> {
        let spec = g.kinetic_spectrum();
        let gd = g.grid.dims();
        if spec.first().is_some_and(|s| s.len() != self.nk()) || gd > self.grid.dims() {
            return None;
        }
        let mut x = vec![0.0; self.dim()];
        for m in 1..self.grid.len() {
            // Vectors outside a lower-dimensional guess grid start at zero.
            if self.primary[m][gd..].iter().any(|&v| v != 0) {
                continue;
            }
            let Ok((gm, conj)) = g.grid.lookup(&self.primary[m][..gd]) else {
                continue;
            };
            for k in 0..self.nk() {
                let v = if conj { spec[gm][k].conj() } else { spec[gm][k] };
                let i = self.slot(m, k);
                x[i] = v.re;
                x[i + 1] = v.im;
            }
        }
        Some(x)
    }

    fn assemble(&self, x: &[f64], residual: f64, iterations: usize, trace: Vec<f64>) -> HbSolution {
        let (phi, _) = self.nonlinear_terms(x, false);
        let n = self.mna.n_unknowns();
        let mut out = vec![vec![ZERO; n]; self.grid.len()];
        for m in 1..self.grid.len() {
            let jw = Complex64::new(0.0, self.omega[m]);
            for u in 0..n {
                let mut v = self.x_src[m][u];
                for (l, phil) in phi.iter().enumerate() {
                    v += self.w[m][(u, l)] * jw * phil[m];
                }
                out[m][u] = v;
            }
        }
        HbSolution {
            grid: self.grid.clone(),
            x: out,
            port_vs: self.port_vs.clone(),
            port_nodes: self.mna.ports.iter().map(|p| p.node).collect(),
            port_z0: self.mna.ports.iter().map(|p| p.z0).collect(),
            unknown_names: self.mna.unknown_names.clone(),
            kinetic_rows: self.mna.kinetic.iter().map(|k| k.unknown).collect(),
            residual_norm: residual,
            iterations,
            trace,
        }
    }

    /// Two-sided torus samples of unknown `u` in a solution on this grid.
    pub fn torus_samples(&self, sol: &HbSolution, u: usize) -> Vec<Complex64> {
        let spec: Vec<Complex64> = sol.x.iter().map(|xm| xm[u]).collect();
        self.torus.samples(&self.grid, &spec)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Compiles `c` against `grid` and solves at full source power.
pub fn solve_hb(c: &Circuit, grid: FrequencyGrid, opts: HbOptions) -> Result<HbSolution> {
    HbProblem::new(c, grid, opts)?.solve(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{phasor_solve, Source};
    use crate::hb::grid::build_frequency_grid;
    use crate::scmat::KineticInductorParams;

    fn rlc(power_dbm: f64) -> Circuit {
        let mut c = Circuit::new();
        c.port("P", "a", 50.0)
            .resistor("R", "a", "0", 800.0)
            .inductor("L", "a", "b", 2e-9)
            .resistor("Rs", "b", "0", 3.0)
            .capacitor("C", "a", "0", 220e-15);
        c.add_source(0, Source { tone: vec![1], power_dbm, phase: 0.3 }).unwrap();
        c
    }

    fn kinetic_resonator(power_dbm: f64) -> Circuit {
        let mut c = Circuit::new();
        c.port("P", "p", 50.0)
            .capacitor("Cc", "p", "r", 22e-15)
            .capacitor("C", "r", "0", 150e-15)
            .resistor("R", "r", "0", 2e5)
            .inductor("Lpad", "r", "w", 1.35e-9)
            .kinetic_inductor("Lk", "w", "0", KineticInductorParams { lk0: 1.705e-9, istar: 3.985e-6 });
        c.add_source(0, Source { tone: vec![1], power_dbm, phase: 0.0 }).unwrap();
        c
    }

    #[test]
    fn linear_circuit_matches_phasor_solve() {
        let c = rlc(-30.0);
        let f = 7.1e9;
        let sol = solve_hb(&c, build_frequency_grid(&[f], &[5]).unwrap(), HbOptions::default()).unwrap();
        let mna = c.compile().unwrap();
        let vs = Complex64::from_polar(source_amplitude(-30.0, 50.0), 0.3);
        let direct = phasor_solve(&mna, f, &[vs]).unwrap();
        for (u, d) in direct.iter().enumerate() {
            assert!((sol.x[1][u] - d).norm() <= 1e-12 * d.norm(), "{u}");
        }
        for m in 2..sol.grid.len() {
            assert!(sol.x[m].iter().all(|v| v.norm() == 0.0));
        }
    }

    #[test]
    fn odd_harmonics_only_under_strong_drive() {
        let c = kinetic_resonator(-95.0);
        let f = 7.3e9;
        let sol = solve_hb(&c, build_frequency_grid(&[f], &[7]).unwrap(), HbOptions::default()).unwrap();
        let u = sol.unknown_index("I(Lk)").unwrap();
        let i1 = sol.x[1][u].norm();
        assert!(sol.x[3][u].norm() > 1e-8 * i1);
        for m in [0, 2, 4, 6] {
            assert!(sol.x[m][u].norm() < 1e-14 * i1, "harmonic {m}");
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut c = kinetic_resonator(-100.0);
        c.clear_sources();
        c.add_source(0, Source { tone: vec![1, 1], power_dbm: -98.0, phase: 0.2 }).unwrap();
        c.add_source(0, Source { tone: vec![1, -1], power_dbm: -98.0, phase: -0.4 }).unwrap();
        let grid = build_frequency_grid(&[7.37e9, 1.3e8], &[3, 2]).unwrap();
        let p = HbProblem::new(&c, grid, HbOptions::default()).unwrap();
        let x0 = p.linear_guess(3.0);
        let jac = p.jacobian(&x0);
        let scale = x0.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let h = 1e-6 * scale;
        let jn = jac.abs().max();
        for col in 0..p.dim() {
            let (mut xp, mut xm) = (x0.clone(), x0.clone());
            xp[col] += h;
            xm[col] -= h;
            let (rp, rm) = (p.residual(&xp, 1.0), p.residual(&xm, 1.0));
            for row in 0..p.dim() {
                let fd = (rp[row] - rm[row]) / (2.0 * h);
                assert!((fd - jac[(row, col)]).abs() <= 1e-6 * jn, "({row},{col}) {fd} vs {}", jac[(row, col)]);
            }
        }
    }

    #[test]
    fn power_is_conserved() {
        let c = kinetic_resonator(-96.0);
        let grid = build_frequency_grid(&[7.28e9], &[5]).unwrap();
        let sol = solve_hb(&c, grid, HbOptions::default()).unwrap();
        let (p_in, p_out) = power_balance(&c.compile().unwrap(), &sol).unwrap();
        assert!((p_in - p_out).abs() <= 1e-8 * p_in, "{p_in} {p_out}");
    }

    #[test]
    fn real_waveforms_and_oversampling_invariance() {
        let c = kinetic_resonator(-96.0);
        let grid = build_frequency_grid(&[7.28e9], &[5]).unwrap();
        let p4 = HbProblem::new(&c, grid.clone(), HbOptions::default()).unwrap();
        let s4 = p4.solve(None).unwrap();
        let u = s4.unknown_index("I(Lk)").unwrap();
        let peak = s4.x[1][u].norm();
        assert!(p4.torus_samples(&s4, u).iter().all(|v| v.im.abs() <= 1e-12 * peak));
        let s8 = solve_hb(&c, grid, HbOptions { oversampling: 8, ..Default::default() }).unwrap();
        for m in 0..s4.grid.len() {
            assert!((s4.x[m][u] - s8.x[m][u]).norm() <= 1e-9 * peak);
        }
    }

    #[test]
    fn source_outside_grid_is_a_config_error() {
        let mut c = rlc(-30.0);
        c.clear_sources();
        c.add_source(0, Source { tone: vec![4], power_dbm: -30.0, phase: 0.0 }).unwrap();
        let err = HbProblem::new(&c, build_frequency_grid(&[1e9], &[3]).unwrap(), HbOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
