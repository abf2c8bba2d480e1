//! Touchstone v1.0 (`.sNp`) reading and writing, frequency interpolation,
//! and S ↔ Y conversion.
//!
//! Record layout follows the v1.0 convention: one-port files carry `S11`,
//! two-port files carry `S11 S21 S12 S22` on one line, and files with three
//! or more ports list the matrix row by row, each row starting a new line
//! with at most four pairs per line.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

#[derive(Debug, Clone, PartialEq)]
pub struct SParamData {
    pub n_ports: usize,
    /// Strictly ascending, Hz.
    pub freqs: Vec<f64>,
    pub data: Vec<CMatrix>,
    /// Reference impedance (Ω).
    pub z0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    /// Real / imaginary.
    Ri,
    /// Magnitude / angle in degrees.
    Ma,
    /// dB magnitude / angle in degrees.
    Db,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreqUnit {
    Hz,
    KHz,
    MHz,
    GHz,
}

impl FreqUnit {
    pub fn scale(self) -> f64 {
        match self {
            FreqUnit::Hz => 1.0,
            FreqUnit::KHz => 1e3,
            FreqUnit::MHz => 1e6,
            FreqUnit::GHz => 1e9,
        }
    }

    fn label(self) -> &'static str {
        match self {
            FreqUnit::Hz => "Hz",
            FreqUnit::KHz => "kHz",
            FreqUnit::MHz => "MHz",
            FreqUnit::GHz => "GHz",
        }
    }
}

impl DataFormat {
    fn label(self) -> &'static str {
        match self {
            DataFormat::Ri => "RI",
            DataFormat::Ma => "MA",
            DataFormat::Db => "DB",
        }
    }

    fn decode(self, x: f64, y: f64) -> Complex64 {
        match self {
            DataFormat::Ri => Complex64::new(x, y),
            DataFormat::Ma => Complex64::from_polar(x, y.to_radians()),
            DataFormat::Db => Complex64::from_polar(10f64.powf(x / 20.0), y.to_radians()),
        }
    }

    fn encode(self, z: Complex64) -> (f64, f64) {
        match self {
            DataFormat::Ri => (z.re, z.im),
            DataFormat::Ma => (z.norm(), z.arg().to_degrees()),
            DataFormat::Db => (20.0 * z.norm().log10(), z.arg().to_degrees()),
        }
    }
}

impl SParamData {
    pub fn new(freqs: Vec<f64>, data: Vec<CMatrix>, z0: f64) -> Result<Self> {
        let n_ports = data.first().map(|m| m.nrows()).unwrap_or(0);
        let d = Self { n_ports, freqs, data, z0 };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_ports == 0 {
            return Err(Error::Argument("S-parameter data needs at least one port".into()));
        }
        if self.freqs.is_empty() || self.freqs.len() != self.data.len() {
            return Err(Error::Argument(format!(
                "{} frequencies but {} matrices",
                self.freqs.len(),
                self.data.len()
            )));
        }
        if self.freqs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Argument("frequencies must be strictly ascending".into()));
        }
        if self.data.iter().any(|m| m.nrows() != self.n_ports || m.ncols() != self.n_ports) {
            return Err(Error::Argument("every matrix must be n_ports × n_ports".into()));
        }
        if !(self.z0 > 0.0) {
            return Err(Error::Argument(format!("z0 must be positive, got {}", self.z0)));
        }
        Ok(())
    }

    pub fn f_min(&self) -> f64 {
        self.freqs[0]
    }

    pub fn f_max(&self) -> f64 {
        *self.freqs.last().unwrap()
    }

    /// Element-wise linear interpolation in real and imaginary parts.
    pub fn interpolate_at(&self, f: f64) -> Result<CMatrix> {
        interpolate_at(self, f)
    }
}

fn number(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| Error::Touchstone { line, msg: format!("expected a number, found {tok:?}") })
}

/// Reads a `.sNp` file; the port count comes from the extension.
pub fn read_touchstone(path: impl AsRef<Path>) -> Result<SParamData> {
    let path = path.as_ref();
    let n = ports_from_extension(path).ok_or_else(|| {
        Error::Argument(format!("cannot infer port count from file name {}", path.display()))
    })?;
    let text = std::fs::read_to_string(path)?;
    parse_touchstone(&text, n)
}

pub fn ports_from_extension(path: &Path) -> Option<usize> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    let digits = ext.strip_prefix('s')?.strip_suffix('p')?;
    digits.parse().ok().filter(|&n| n > 0)
}

pub fn parse_touchstone(text: &str, n_ports: usize) -> Result<SParamData> {
    if n_ports == 0 {
        return Err(Error::Argument("port count must be at least 1".into()));
    }
    let per_record = 1 + 2 * n_ports * n_ports;

    let mut unit = FreqUnit::GHz;
    let mut format = DataFormat::Ma;
    let mut z0 = 50.0;
    let mut seen_option = false;

    let mut freqs: Vec<f64> = Vec::new();
    let mut data: Vec<CMatrix> = Vec::new();
    let mut pending: Vec<f64> = Vec::with_capacity(per_record);
    let mut record_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('!').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            return Err(Error::Touchstone {
                line: line_no,
                msg: format!("Touchstone v2.0 keyword {line:?} is not supported (v1.0 only)"),
            });
        }
        if let Some(rest) = line.strip_prefix('#') {
            if !pending.is_empty() {
                return Err(Error::Touchstone { line: line_no, msg: "option line inside a data record".into() });
            }
            if seen_option {
                // v1.0: only the first option line is significant.
                continue;
            }
            seen_option = true;
            let toks: Vec<String> = rest.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
            let mut i = 0;
            while i < toks.len() {
                match toks[i].as_str() {
                    "hz" => unit = FreqUnit::Hz,
                    "khz" => unit = FreqUnit::KHz,
                    "mhz" => unit = FreqUnit::MHz,
                    "ghz" => unit = FreqUnit::GHz,
                    "s" => {}
                    "y" | "z" | "g" | "h" => {
                        return Err(Error::Touchstone {
                            line: line_no,
                            msg: format!("only S parameters are supported, found {}", toks[i].to_uppercase()),
                        })
                    }
                    "ri" => format = DataFormat::Ri,
                    "ma" => format = DataFormat::Ma,
                    "db" => format = DataFormat::Db,
                    "r" => {
                        let v = toks.get(i + 1).ok_or_else(|| Error::Touchstone {
                            line: line_no,
                            msg: "reference impedance missing after R".into(),
                        })?;
                        z0 = number(v, line_no)?;
                        if !(z0 > 0.0) {
                            return Err(Error::Touchstone {
                                line: line_no,
                                msg: format!("reference impedance must be positive, got {z0}"),
                            });
                        }
                        i += 1;
                    }
                    other => {
                        return Err(Error::Touchstone {
                            line: line_no,
                            msg: format!("malformed option line: unexpected token {other:?}"),
                        })
                    }
                }
                i += 1;
            }
            continue;
        }

        let toks: Vec<&str> = line.split_whitespace().collect();
        if pending.is_empty() {
            record_line = line_no;
            if n_ports <= 2 && toks.len() != per_record {
                return Err(Error::Touchstone {
                    line: line_no,
                    msg: format!("expected {per_record} values per record, found {}", toks.len()),
                });
            }
        }
        if pending.len() + toks.len() > per_record {
            return Err(Error::Touchstone {
                line: line_no,
                msg: format!(
                    "record started at line {record_line} overflows: expected {per_record} values"
                ),
            });
        }
        for t in toks {
            pending.push(number(t, line_no)?);
        }
        if pending.len() == per_record {
            let f = pending[0] * unit.scale();
            if let Some(&last) = freqs.last() {
                if !(f > last) {
                    return Err(Error::Touchstone {
                        line: record_line,
                        msg: format!("frequency {f} Hz is not above previous {last} Hz"),
                    });
                }
            }
            let mut m = CMatrix::zeros(n_ports, n_ports);
            for (p, pair) in pending[1..].chunks_exact(2).enumerate() {
                let (r, c) = if n_ports == 2 {
                    // S11 S21 S12 S22
                    (p % 2, p / 2)
                } else {
                    (p / n_ports, p % n_ports)
                };
                m[(r, c)] = format.decode(pair[0], pair[1]);
            }
            freqs.push(f);
            data.push(m);
            pending.clear();
        }
    }
    if !pending.is_empty() {
        return Err(Error::Touchstone { line: record_line, msg: "incomplete final record".into() });
    }
    if freqs.is_empty() {
        return Err(Error::Touchstone { line: 0, msg: "no data records".into() });
    }
    Ok(SParamData { n_ports, freqs, data, z0 })
}

pub fn serialize_touchstone(d: &SParamData, format: DataFormat, unit: FreqUnit) -> String {
    let n = d.n_ports;
    let mut out = String::new();
    let _ = writeln!(out, "! {}-port S-parameters", n);
    let _ = writeln!(out, "# {} S {} R {}", unit.label(), format.label(), d.z0);
    for (f, m) in d.freqs.iter().zip(&d.data) {
        let _ = write!(out, "{}", f / unit.scale());
        if n <= 2 {
            let order: Vec<(usize, usize)> =
                if n == 1 { vec![(0, 0)] } else { vec![(0, 0), (1, 0), (0, 1), (1, 1)] };
            for (r, c) in order {
                let (x, y) = format.encode(m[(r, c)]);
                let _ = write!(out, " {x} {y}");
            }
            out.push('\n');
        } else {
            for r in 0..n {
                for c in 0..n {
                    if c > 0 && c % 4 == 0 {
                        out.push('\n');
                    }
                    let (x, y) = format.encode(m[(r, c)]);
                    let _ = write!(out, " {x} {y}");
                }
                out.push('\n');
            }
        }
    }
    out
}

pub fn write_touchstone(d: &SParamData, path: impl AsRef<Path>, format: DataFormat, unit: FreqUnit) -> Result<()> {
    std::fs::write(path, serialize_touchstone(d, format, unit))?;
    Ok(())
}

pub fn interpolate_at(d: &SParamData, f: f64) -> Result<CMatrix> {
    let (lo, hi) = (d.f_min(), d.f_max());
    if !(f >= lo && f <= hi) {
        return Err(Error::Extrapolation { freq_hz: f, min_hz: lo, max_hz: hi });
    }
    let k = d.freqs.partition_point(|&x| x < f);
    if d.freqs[k] == f {
        return Ok(d.data[k].clone());
    }
    let (f0, f1) = (d.freqs[k - 1], d.freqs[k]);
    let t = (f - f0) / (f1 - f0);
    Ok(&d.data[k - 1] * Complex64::from(1.0 - t) + &d.data[k] * Complex64::from(t))
}

/// Smallest / largest singular value of a square complex matrix.
fn inverse_condition(m: &CMatrix) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max();
    if max == 0.0 {
        0.0
    } else {
        sv.min() / max
    }
}

const SINGULAR_RCOND: f64 = 1e-13;

/// Y = (1/z0)(I − S)(I + S)⁻¹.
pub fn s_to_y(s: &CMatrix, z0: f64) -> Result<CMatrix> {
    check_square(s, z0)?;
    let id = CMatrix::identity(s.nrows(), s.ncols());
    let plus = &id + s;
    if inverse_condition(&plus) < SINGULAR_RCOND {
        return Err(Error::Singular("S to Y conversion: I + S".into()));
    }
    let inv = plus.try_inverse().ok_or_else(|| Error::Singular("S to Y conversion: I + S".into()))?;
    Ok((&id - s) * inv * Complex64::from(1.0 / z0))
}

/// S = (I − z0 Y)(I + z0 Y)⁻¹.
pub fn y_to_s(y: &CMatrix, z0: f64) -> Result<CMatrix> {
    check_square(y, z0)?;
    let id = CMatrix::identity(y.nrows(), y.ncols());
    let zy = y * Complex64::from(z0);
    let plus = &id + &zy;
    if inverse_condition(&plus) < SINGULAR_RCOND {
        return Err(Error::Singular("Y to S conversion: I + z0 Y".into()));
    }
    let inv = plus.try_inverse().ok_or_else(|| Error::Singular("Y to S conversion: I + z0 Y".into()))?;
    Ok((&id - &zy) * inv)
}

fn check_square(m: &CMatrix, z0: f64) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::Argument(format!("expected a square matrix, got {}×{}", m.nrows(), m.ncols())));
    }
    if !(z0 > 0.0) {
        return Err(Error::Argument(format!("z0 must be positive, got {z0}")));
    }
    Ok(())
}
