//! Superconducting thin-film physics: London penetration depth, sheet kinetic
//! inductance, characteristic current, and the current-dependent inductance
//! of a nanowire.
//!
//! The nanowire constitutive law is treated as a differential inductance,
//! `L(I) = dΦ/dI = Lk0 (1 + (I/I*)²)`, so the flux is
//! `Φ(I) = Lk0 (I + I³ / (3 I*²))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vacuum permeability, 4π × 10⁻⁷ H/m.
pub const MU0: f64 = 4.0e-7 * std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuperconductingFilm {
    /// London penetration depth at 0 K (m).
    pub lambda0: f64,
    /// Critical temperature (K).
    pub tc: f64,
    /// Film thickness (m).
    pub thickness: f64,
    /// Density of states at the Fermi level (J⁻¹ m⁻³).
    pub n0: f64,
    /// Superconducting gap (J).
    pub gap: f64,
}

impl SuperconductingFilm {
    pub fn validate(&self) -> Result<()> {
        positive("lambda0", self.lambda0)?;
        positive("tc", self.tc)?;
        positive("thickness", self.thickness)?;
        positive("n0", self.n0)?;
        positive("gap", self.gap)
    }

    /// Penetration depth at temperature `t`.
    pub fn lambda_at(&self, t: f64) -> Result<f64> {
        penetration_depth_at(self.lambda0, t, self.tc)
    }

    /// Sheet kinetic inductance at temperature `t`.
    pub fn sheet_inductance_at(&self, t: f64) -> Result<f64> {
        sheet_inductance(self.lambda_at(t)?, self.thickness)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NanowireGeometry {
    pub width: f64,
    pub thickness: f64,
    pub length: f64,
    /// Dimensionless scaling constant of order one.
    pub kappa_star: f64,
}

impl NanowireGeometry {
    pub fn validate(&self) -> Result<()> {
        positive("width", self.width)?;
        positive("thickness", self.thickness)?;
        positive("length", self.length)?;
        positive("kappa_star", self.kappa_star)
    }

    pub fn squares(&self) -> f64 {
        self.length / self.width
    }
}

/// Parameters of the nonlinear kinetic inductor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KineticInductorParams {
    /// Zero-current kinetic inductance (H).
    pub lk0: f64,
    /// Characteristic current (A).
    pub istar: f64,
}

impl KineticInductorParams {
    pub fn new(lk0: f64, istar: f64) -> Result<Self> {
        let p = Self { lk0, istar };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        positive("lk0", self.lk0)?;
        positive("istar", self.istar)
    }

    /// Differential inductance at current `i`.
    #[inline]
    pub fn inductance(&self, i: f64) -> f64 {
        nonlinear_inductance(self, i)
    }

    /// Total flux at current `i`.
    #[inline]
    pub fn flux(&self, i: f64) -> f64 {
        flux_from_current(self, i)
    }

    /// Flux in excess of the linear part `lk0 * i`.
    #[inline]
    pub fn excess_flux(&self, i: f64) -> f64 {
        self.lk0 * i * i * i / (3.0 * self.istar * self.istar)
    }

    /// Derivative of [`Self::excess_flux`].
    #[inline]
    pub fn excess_inductance(&self, i: f64) -> f64 {
        self.lk0 * i * i / (self.istar * self.istar)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Two-fluid temperature dependence of the penetration depth.
pub fn penetration_depth_at(lambda0: f64, t: f64, tc: f64) -> Result<f64> {
    positive("lambda0", lambda0)?;
    positive("tc", tc)?;
    if !(t >= 0.0) {
        return Err(Error::Argument(format!("temperature must be non-negative, got {t}")));
    }
    if t >= tc {
        return Err(Error::NormalState { t, tc });
    }
    let r = t / tc;
    Ok(lambda0 / (1.0 - r.powi(4)).sqrt())
}

/// coth(x) for x > 0, written through expm1 so thin films do not cancel.
fn coth(x: f64) -> f64 {
    if x > 20.0 {
        1.0
    } else {
        1.0 + 2.0 / (2.0 * x).exp_m1()
    }
}

/// Sheet kinetic inductance μ0 λ coth(t/λ) in H per square.
pub fn sheet_inductance(lambda: f64, thickness: f64) -> Result<f64> {
    positive("lambda", lambda)?;
    positive("thickness", thickness)?;
    Ok(MU0 * lambda * coth(thickness / lambda))
}

/// Characteristic current w t κ* sqrt(N0 Δ² / (μ0 λ²)).
///
/// `kappa_star = 0` is accepted and yields zero; every other input must be
/// strictly positive.
pub fn characteristic_current(
    geom: &NanowireGeometry,
    film: &SuperconductingFilm,
    lambda: f64,
) -> Result<f64> {
    positive("width", geom.width)?;
    positive("thickness", geom.thickness)?;
    if !(geom.kappa_star >= 0.0) {
        return Err(Error::Argument(format!("kappa_star must be non-negative, got {}", geom.kappa_star)));
    }
    positive("n0", film.n0)?;
    positive("gap", film.gap)?;
    positive("lambda", lambda)?;
    Ok(geom.width
        * geom.thickness
        * geom.kappa_star
        * (film.n0 * film.gap * film.gap / (MU0 * lambda * lambda)).sqrt())
}

pub fn nonlinear_inductance(p: &KineticInductorParams, i: f64) -> f64 {
    let r = i / p.istar;
    p.lk0 * (1.0 + r * r)
}

pub fn flux_from_current(p: &KineticInductorParams, i: f64) -> f64 {
    p.lk0 * (i + i * i * i / (3.0 * p.istar * p.istar))
}

/// Number of squares times the sheet inductance.
pub fn nanowire_linear_inductance(geom: &NanowireGeometry, sheet: f64) -> Result<f64> {
    positive("width", geom.width)?;
    positive("length", geom.length)?;
    positive("sheet inductance", sheet)?;
    Ok(geom.squares() * sheet)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const NM: f64 = 1e-9;

    fn wire(width: f64, length: f64) -> NanowireGeometry {
        NanowireGeometry { width, thickness: 4.0 * NM, length, kappa_star: 1.0 }
    }

    fn film() -> SuperconductingFilm {
        SuperconductingFilm { lambda0: 731.0 * NM, tc: 9.0, thickness: 4.0 * NM, n0: 1e47, gap: 2.4e-22 }
    }

    #[test]
    fn penetration_depth_examples() {
        assert_eq!(penetration_depth_at(731.0 * NM, 0.0, 9.0).unwrap(), 731.0 * NM);
        assert_relative_eq!(
            penetration_depth_at(731.0 * NM, 3.0, 9.0).unwrap(),
            735.554_561_198_555_8 * NM,
            max_relative = 1e-12
        );
        assert!(matches!(penetration_depth_at(731.0 * NM, 9.0, 9.0), Err(Error::NormalState { .. })));
        assert!(matches!(penetration_depth_at(731.0 * NM, -1.0, 9.0), Err(Error::Argument(_))));
    }

    #[test]
    fn sheet_inductance_examples() {
        let ls = sheet_inductance(731.0 * NM, 4.0 * NM).unwrap();
        assert_relative_eq!(ls, 167.876_134_709_226_88e-12, max_relative = 1e-10);

        let lam = 100.0 * NM;
        assert_relative_eq!(sheet_inductance(lam, 1e3 * lam).unwrap(), MU0 * lam, max_relative = 1e-14);

        let t = lam / 100.0;
        let series = MU0 * lam * lam / t * (1.0 + (t / lam).powi(2) / 3.0);
        assert_relative_eq!(sheet_inductance(lam, t).unwrap(), series, max_relative = 1e-4);

        assert!(sheet_inductance(0.0, 1.0).is_err());
        assert!(sheet_inductance(1.0, -1.0).is_err());
    }

    #[test]
    fn coth_is_accurate_for_tiny_arguments() {
        // coth x = 1/x + x/3 - x³/45 for small x
        for &x in &[1e-9f64, 1e-6, 1e-4, 5e-4] {
            let series = 1.0 / x + x / 3.0 - x.powi(3) / 45.0;
            assert_relative_eq!(coth(x), series, max_relative = 1e-13);
        }
        assert_relative_eq!(coth(1.0), 1.0 / 1f64.tanh(), max_relative = 1e-14);
    }

    #[test]
    fn characteristic_current_examples() {
        let f = film();
        let g = wire(15.0 * NM, 150.0 * NM);
        let i = characteristic_current(&g, &f, 731.0 * NM).unwrap();
        assert_relative_eq!(i, 5.556_997_266_133_851e-6, max_relative = 1e-10);

        let g2 = NanowireGeometry { width: 30.0 * NM, ..g };
        assert_relative_eq!(characteristic_current(&g2, &f, 731.0 * NM).unwrap(), 2.0 * i, max_relative = 1e-14);

        let g0 = NanowireGeometry { kappa_star: 0.0, ..g };
        assert_eq!(characteristic_current(&g0, &f, 731.0 * NM).unwrap(), 0.0);
    }

    #[test]
    fn nonlinear_inductance_examples() {
        let p = KineticInductorParams::new(1.705e-9, 3.985e-6).unwrap();
        assert_eq!(nonlinear_inductance(&p, 0.0), p.lk0);
        assert_relative_eq!(nonlinear_inductance(&p, p.istar), 2.0 * p.lk0, max_relative = 1e-15);
        assert_relative_eq!(nonlinear_inductance(&p, 1e-6), 1.812_366_236_939_338e-9, max_relative = 1e-12);
    }

    #[test]
    fn flux_examples() {
        let p = KineticInductorParams::new(1.705e-9, 3.985e-6).unwrap();
        assert_eq!(flux_from_current(&p, 0.0), 0.0);
        assert_relative_eq!(flux_from_current(&p, p.istar), 4.0 / 3.0 * p.lk0 * p.istar, max_relative = 1e-15);
        let h = p.istar * 1e-5;
        let i = p.istar / 2.0;
        let d = (flux_from_current(&p, i + h) - flux_from_current(&p, i - h)) / (2.0 * h);
        assert_relative_eq!(d, 1.25 * p.lk0, max_relative = 1e-8);
    }

    #[test]
    fn nanowire_inductance_examples() {
        let g = wire(15.0 * NM, 150.0 * NM);
        assert_relative_eq!(nanowire_linear_inductance(&g, 180e-12).unwrap(), 1.8e-9, max_relative = 1e-14);
        let sq = wire(20.0 * NM, 20.0 * NM);
        assert_eq!(nanowire_linear_inductance(&sq, 123e-12).unwrap(), 123e-12);
        let long = wire(15.0 * NM, 300.0 * NM);
        assert_relative_eq!(nanowire_linear_inductance(&long, 180e-12).unwrap(), 3.6e-9, max_relative = 1e-14);
        assert!(nanowire_linear_inductance(&g, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn penetration_depth_monotone(t1 in 0.0f64..8.99, dt in 1e-4f64..0.5) {
            let t2 = (t1 + dt).min(8.999);
            prop_assume!(t2 > t1);
            let a = penetration_depth_at(731e-9, t1, 9.0).unwrap();
            let b = penetration_depth_at(731e-9, t2, 9.0).unwrap();
            prop_assert!(b > a);
        }

        #[test]
        fn sheet_inductance_bounded_below(lam in 10e-9f64..2e-6, t in 1e-10f64..1e-5) {
            let ls = sheet_inductance(lam, t).unwrap();
            prop_assert!(ls >= MU0 * lam * (1.0 - 1e-15));
        }

        #[test]
        fn inductance_even_flux_odd(i in -1e-5f64..1e-5) {
            let p = KineticInductorParams { lk0: 1.705e-9, istar: 3.985e-6 };
            prop_assert_eq!(nonlinear_inductance(&p, i), nonlinear_inductance(&p, -i));
            prop_assert!(nonlinear_inductance(&p, i) >= p.lk0);
            prop_assert_eq!(flux_from_current(&p, i), -flux_from_current(&p, -i));
        }

        #[test]
        fn flux_derivative_matches_inductance(i in -2e-5f64..2e-5) {
            let p = KineticInductorParams { lk0: 1.705e-9, istar: 3.985e-6 };
            let h = p.istar * 1e-5;
            let d = (flux_from_current(&p, i + h) - flux_from_current(&p, i - h)) / (2.0 * h);
            let rel = (d - nonlinear_inductance(&p, i)).abs() / nonlinear_inductance(&p, i);
            prop_assert!(rel < 1e-8, "rel = {rel}");
            prop_assert!(flux_from_current(&p, i + h) > flux_from_current(&p, i));
        }

        #[test]
        fn characteristic_current_scaling(s in 0.1f64..10.0) {
            let f = film();
            let g = wire(15e-9, 150e-9);
            let base = characteristic_current(&g, &f, 731e-9).unwrap();
            let gw = NanowireGeometry { width: g.width * s, ..g };
            let gt = NanowireGeometry { thickness: g.thickness * s, ..g };
            let gk = NanowireGeometry { kappa_star: s, ..g };
            let tol = 1e-12 * base * s.max(1.0 / s);
            prop_assert!((characteristic_current(&gw, &f, 731e-9).unwrap() - s * base).abs() < tol);
            prop_assert!((characteristic_current(&gt, &f, 731e-9).unwrap() - s * base).abs() < tol);
            prop_assert!((characteristic_current(&gk, &f, 731e-9).unwrap() - s * base).abs() < tol);
            prop_assert!((characteristic_current(&g, &f, 731e-9 * s).unwrap() - base / s).abs() < tol);
        }
    }
}
