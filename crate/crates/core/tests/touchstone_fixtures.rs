//! Touchstone fixtures: round trips, closed-form values and embedding in a circuit.

use std::path::PathBuf;
use std::sync::Arc;

use kipa_core::studio::linear_reflection;
use kipa_core::touchstone::{parse_touchstone, read_touchstone, serialize_touchstone, DataFormat, FreqUnit};
use kipa_core::{Circuit, SParamData};
use num_complex::Complex64;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn max_rel_diff(a: &SParamData, b: &SParamData) -> f64 {
    assert_eq!(a.n_ports, b.n_ports);
    assert_eq!(a.freqs.len(), b.freqs.len());
    let mut worst = 0.0f64;
    for (fa, fb) in a.freqs.iter().zip(&b.freqs) {
        worst = worst.max((fa - fb).abs() / fa.abs());
    }
    for (ma, mb) in a.data.iter().zip(&b.data) {
        for (x, y) in ma.iter().zip(mb.iter()) {
            worst = worst.max((x - y).norm() / x.norm().max(1e-3));
        }
    }
    worst
}

#[test]
fn every_fixture_survives_a_round_trip_in_every_format() {
    let names = ["rlc_shunt.s1p", "series_rc.s1p", "lossy_line.s2p", "divider.s3p"];
    let formats = [DataFormat::Ri, DataFormat::Ma, DataFormat::Db];
    let units = [FreqUnit::Hz, FreqUnit::KHz, FreqUnit::MHz, FreqUnit::GHz];
    for name in names {
        let d = read_touchstone(fixture(name)).unwrap();
        for fmt in formats {
            for unit in units {
                let text = serialize_touchstone(&d, fmt, unit);
                let back = parse_touchstone(&text, d.n_ports).unwrap();
                let err = max_rel_diff(&d, &back);
                assert!(err < 1e-12, "{name} {fmt:?} {unit:?}: {err}");
                assert_eq!(back.z0, d.z0);
            }
        }
    }
}

fn shunt_rlc_gamma(f: f64) -> Complex64 {
    let w = 2.0 * std::f64::consts::PI * f;
    let y = Complex64::new(1.0 / 2000.0, w * 0.4e-12 - 1.0 / (w * 1.2e-9));
    let z = 1.0 / y;
    (z - 50.0) / (z + 50.0)
}

#[test]
fn rlc_fixture_matches_closed_form() {
    let d = read_touchstone(fixture("rlc_shunt.s1p")).unwrap();
    assert_eq!(d.freqs.len(), 3001);
    for (f, s) in d.freqs.iter().zip(&d.data) {
        assert!((s[(0, 0)] - shunt_rlc_gamma(*f)).norm() < 1e-12);
    }
}

#[test]
fn series_rc_fixture_matches_closed_form() {
    let d = read_touchstone(fixture("series_rc.s1p")).unwrap();
    for (f, s) in d.freqs.iter().zip(&d.data) {
        let w = 2.0 * std::f64::consts::PI * f;
        let z = Complex64::new(20.0, -1.0 / (w * 1e-12));
        assert!((s[(0, 0)] - (z - 50.0) / (z + 50.0)).norm() < 1e-12);
    }
}

#[test]
fn reciprocal_fixtures_are_symmetric() {
    for name in ["lossy_line.s2p", "divider.s3p"] {
        let d = read_touchstone(fixture(name)).unwrap();
        for s in &d.data {
            assert!((s - s.transpose()).norm() < 1e-12, "{name}");
        }
    }
}

/// A coupling capacitor into the measured RLC must look the same whether the
/// RLC is a Touchstone block or native elements.
#[test]
fn embedded_block_matches_native_elements() {
    let d = Arc::new(read_touchstone(fixture("rlc_shunt.s1p")).unwrap());
    let mut block = Circuit::new();
    block.port("P1", "a", 50.0).capacitor("Cc", "a", "r", 30e-15).sparam_block("RLC", &["r"], d);
    let mut native = Circuit::new();
    native
        .port("P1", "a", 50.0)
        .capacitor("Cc", "a", "r", 30e-15)
        .resistor("R", "r", "0", 2000.0)
        .inductor("L", "r", "0", 1.2e-9)
        .capacitor("C", "r", "0", 0.4e-12);
    // Off-grid points exercise interpolation between the 0.5 MHz samples.
    let freqs: Vec<f64> = (0..1499).map(|i| 6.5e9 + 1e6 * i as f64 + 0.25e6).collect();
    let a = linear_reflection(&block, 0, &freqs).unwrap();
    let b = linear_reflection(&native, 0, &freqs).unwrap();
    let db = |s: Complex64| 20.0 * s.norm().log10();
    let worst = a.iter().zip(&b).map(|(x, y)| (db(*x) - db(*y)).abs()).fold(0.0, f64::max);
    assert!(worst < 0.01, "{worst} dB");
    // The dip is deep enough that a shifted resonance would show.
    let dip = b.iter().map(|s| db(*s)).fold(f64::INFINITY, f64::min);
    assert!(dip < -3.0, "{dip}");
}
