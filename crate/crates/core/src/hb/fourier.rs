//! Multidimensional DFT on the sampling torus of a box-truncated grid.
//!
//! A real multitone signal `x = Re Σ_m X_m e^{j k_m·θ}` is stored as the
//! two-sided array `A[k_m] = X_m/2`, `A[−k_m] = conj(X_m)/2`, `A[0] = Re X_0`.
//! With `N_d = oversampling·H_d + 1` samples per axis, products of up to
//! `oversampling` spectra fold back into the box without aliasing.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::grid::FrequencyGrid;

#[derive(Clone)]
pub struct Torus {
    pub shape: Vec<usize>,
    strides: Vec<usize>,
    fwd: Vec<Arc<dyn Fft<f64>>>,
    inv: Vec<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for Torus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Torus").field("shape", &self.shape).finish()
    }
}

impl Torus {
    pub fn new(truncation: &[u32], oversampling: usize) -> Self {
        let shape: Vec<usize> = truncation.iter().map(|&h| oversampling * h as usize + 1).collect();
        let mut strides = vec![1; shape.len()];
        for d in (0..shape.len().saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * shape[d + 1];
        }
        let mut planner = FftPlanner::new();
        let fwd = shape.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inv = shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        Self { shape, strides, fwd, inv }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of mixing vector `k`, wrapped modulo the torus shape.
    pub fn flat(&self, k: &[i32]) -> usize {
        k.iter()
            .zip(&self.shape)
            .zip(&self.strides)
            .map(|((&ki, &n), &s)| (ki as i64).rem_euclid(n as i64) as usize * s)
            .sum()
    }

    fn transform(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>]) {
        let total = self.len();
        for (d, plan) in plans.iter().enumerate() {
            let (n, s) = (self.shape[d], self.strides[d]);
            let mut line = vec![Complex64::new(0.0, 0.0); n];
            let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
            for base in 0..total {
                if (base / s) % n != 0 {
                    continue;
                }
                for (i, v) in line.iter_mut().enumerate() {
                    *v = data[base + i * s];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for (i, v) in line.iter().enumerate() {
                    data[base + i * s] = *v;
                }
            }
        }
    }

    /// Coefficients to samples: `x(θ_n) = Σ_k A[k] e^{+j k·θ_n}`.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inv);
    }

    /// Samples to coefficients: `A[k] = (1/N) Σ_n x(θ_n) e^{−j k·θ_n}`.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.fwd);
        let scale = 1.0 / self.len() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    /// Two-sided torus array of a one-sided grid spectrum.
    pub fn embed(&self, grid: &FrequencyGrid, spectrum: &[Complex64]) -> Vec<Complex64> {
        let mut a = vec![Complex64::new(0.0, 0.0); self.len()];
        for (e, x) in grid.entries.iter().zip(spectrum) {
            if e.k.iter().all(|&v| v == 0) {
                a[0] += Complex64::new(x.re, 0.0);
            } else {
                let neg: Vec<i32> = e.k.iter().map(|v| -v).collect();
                a[self.flat(&e.k)] += x * 0.5;
                a[self.flat(&neg)] += x.conj() * 0.5;
            }
        }
        a
    }

    /// One-sided grid spectrum from two-sided coefficients, summing every
    /// vector that lands on an entry's frequency.
    pub fn extract(&self, grid: &FrequencyGrid, coeffs: &[Complex64]) -> Vec<Complex64> {
        grid.entries
            .iter()
            .map(|e| {
                if e.freq == 0.0 {
                    let mut s = coeffs[0];
                    for v in &e.aliases {
                        let neg: Vec<i32> = v.iter().map(|x| -x).collect();
                        s += coeffs[self.flat(v)] + coeffs[self.flat(&neg)];
                    }
                    Complex64::new(s.re, 0.0)
                } else {
                    e.vectors().map(|v| coeffs[self.flat(v)]).sum::<Complex64>() * 2.0
                }
            })
            .collect()
    }

    /// Real samples of a one-sided spectrum (imaginary parts are round-off).
    pub fn samples(&self, grid: &FrequencyGrid, spectrum: &[Complex64]) -> Vec<Complex64> {
        let mut a = self.embed(grid, spectrum);
        self.inverse(&mut a);
        a
    }
}
