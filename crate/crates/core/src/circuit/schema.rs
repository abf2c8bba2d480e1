//! JSON circuit description. Field names carry their SI unit as a suffix.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Circuit, Element, Port, Source, DEFAULT_GROUND};
use crate::error::{Error, Result};
use crate::scmat::{self, KineticInductorParams, NanowireGeometry, SuperconductingFilm};
use crate::touchstone;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitFile {
    #[serde(default = "default_ground")]
    pub ground: String,
    pub nodes: Vec<String>,
    pub elements: Vec<ElementFile>,
    pub ports: Vec<PortFile>,
}

fn default_ground() -> String {
    DEFAULT_GROUND.to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ElementFile {
    Resistor { name: String, nodes: [String; 2], resistance_ohm: f64 },
    Capacitor { name: String, nodes: [String; 2], capacitance_f: f64 },
    Inductor { name: String, nodes: [String; 2], inductance_h: f64 },
    KineticInductor {
        name: String,
        nodes: [String; 2],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lk0_h: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        istar_a: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        material: Option<MaterialFile>,
    },
    Sparam {
        name: String,
        nodes: Vec<String>,
        /// Path to a Touchstone v1.0 file, relative to the circuit file.
        touchstone: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        z0_ohm: Option<f64>,
    },
}

/// Film and wire description used when `lk0_h` or `istar_a` is omitted.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialFile {
    pub lambda0_m: f64,
    pub tc_k: f64,
    pub film_thickness_m: f64,
    pub n0_per_j_m3: f64,
    pub gap_j: f64,
    pub width_m: f64,
    pub length_m: f64,
    #[serde(default = "one")]
    pub kappa_star: f64,
    #[serde(default)]
    pub temperature_k: f64,
    /// Overrides the sheet inductance computed from the film.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sheet_inductance_h_per_sq: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortFile {
    pub name: String,
    pub node: String,
    pub z0_ohm: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sources: Vec<SourceFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceFile {
    pub tone: Vec<i32>,
    pub power_dbm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_rad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_deg: Option<f64>,
}

impl MaterialFile {
    fn resolve(&self, lk0: Option<f64>, istar: Option<f64>) -> Result<KineticInductorParams> {
        let film = SuperconductingFilm {
            lambda0: self.lambda0_m,
            tc: self.tc_k,
            thickness: self.film_thickness_m,
            n0: self.n0_per_j_m3,
            gap: self.gap_j,
        };
        film.validate()?;
        let geom = NanowireGeometry {
            width: self.width_m,
            thickness: self.film_thickness_m,
            length: self.length_m,
            kappa_star: self.kappa_star,
        };
        geom.validate()?;
        let lambda = film.lambda_at(self.temperature_k)?;
        let lk0 = match lk0 {
            Some(v) => v,
            None => {
                let sheet = match self.sheet_inductance_h_per_sq {
                    Some(s) => s,
                    None => scmat::sheet_inductance(lambda, film.thickness)?,
                };
                scmat::nanowire_linear_inductance(&geom, sheet)?
            }
        };
        let istar = match istar {
            Some(v) => v,
            None => scmat::characteristic_current(&geom, &film, lambda)?,
        };
        KineticInductorParams::new(lk0, istar)
    }
}

impl SourceFile {
    fn to_source(&self) -> Result<Source> {
        let phase = match (self.phase_rad, self.phase_deg) {
            (Some(_), Some(_)) => return Err(Error::Config("source has both phase_rad and phase_deg".into())),
            (Some(r), None) => r,
            (None, Some(d)) => d.to_radians(),
            (None, None) => 0.0,
        };
        Ok(Source { tone: self.tone.clone(), power_dbm: self.power_dbm, phase })
    }
}

impl CircuitFile {
    /// Builds the circuit; relative Touchstone paths resolve against `base_dir`.
    pub fn into_circuit(self, base_dir: &Path) -> Result<Circuit> {
        let mut elements = Vec::with_capacity(self.elements.len());
        for e in self.elements {
            elements.push(match e {
                ElementFile::Resistor { name, nodes, resistance_ohm } => {
                    Element::Resistor { name, nodes, resistance: resistance_ohm }
                }
                ElementFile::Capacitor { name, nodes, capacitance_f } => {
                    Element::Capacitor { name, nodes, capacitance: capacitance_f }
                }
                ElementFile::Inductor { name, nodes, inductance_h } => {
                    Element::Inductor { name, nodes, inductance: inductance_h }
                }
                ElementFile::KineticInductor { name, nodes, lk0_h, istar_a, material } => {
                    let params = match (&material, lk0_h, istar_a) {
                        (_, Some(l), Some(i)) => KineticInductorParams { lk0: l, istar: i },
                        (Some(m), l, i) => m.resolve(l, i).map_err(|err| Error::Config(format!("{name}: {err}")))?,
                        _ => {
                            return Err(Error::Config(format!(
                                "{name}: kinetic inductor needs lk0_h and istar_a or a material block"
                            )))
                        }
                    };
                    Element::KineticInductor { name, nodes, params }
                }
                ElementFile::Sparam { name, nodes, touchstone: file, z0_ohm } => {
                    let path: PathBuf = base_dir.join(&file);
                    let data = touchstone::read_touchstone(&path).map_err(|err| match err {
                        Error::Io(io) => Error::Config(format!("{name}: cannot read {}: {io}", path.display())),
                        other => other,
                    })?;
                    let z0 = z0_ohm.unwrap_or(data.z0);
                    Element::SParamBlock { name, nodes, data: Arc::new(data), z0, path: Some(file) }
                }
            });
        }
        let mut ports = Vec::with_capacity(self.ports.len());
        for p in self.ports {
            let sources = p.sources.iter().map(SourceFile::to_source).collect::<Result<Vec<_>>>()?;
            ports.push(Port { name: p.name, node: p.node, z0: p.z0_ohm, sources });
        }
        Ok(Circuit { ground: self.ground, nodes: self.nodes, elements, ports })
    }

    pub fn from_circuit(c: &Circuit) -> Result<Self> {
        let mut elements = Vec::with_capacity(c.elements.len());
        for e in &c.elements {
            elements.push(match e.clone() {
                Element::Resistor { name, nodes, resistance } => ElementFile::Resistor { name, nodes, resistance_ohm: resistance },
                Element::Capacitor { name, nodes, capacitance } => ElementFile::Capacitor { name, nodes, capacitance_f: capacitance },
                Element::Inductor { name, nodes, inductance } => ElementFile::Inductor { name, nodes, inductance_h: inductance },
                Element::KineticInductor { name, nodes, params } => ElementFile::KineticInductor {
                    name,
                    nodes,
                    lk0_h: Some(params.lk0),
                    istar_a: Some(params.istar),
                    material: None,
                },
                Element::SParamBlock { name, nodes, z0, path, .. } => {
                    let touchstone = path.ok_or_else(|| {
                        Error::Config(format!("{name}: S-parameter block has no file path to serialize"))
                    })?;
                    ElementFile::Sparam { name, nodes, touchstone, z0_ohm: Some(z0) }
                }
            });
        }
        let ports = c
            .ports
            .iter()
            .map(|p| PortFile {
                name: p.name.clone(),
                node: p.node.clone(),
                z0_ohm: p.z0,
                sources: p
                    .sources
                    .iter()
                    .map(|s| SourceFile { tone: s.tone.clone(), power_dbm: s.power_dbm, phase_rad: Some(s.phase), phase_deg: None })
                    .collect(),
            })
            .collect();
        Ok(Self { ground: c.ground.clone(), nodes: c.nodes.clone(), elements, ports })
    }
}

impl Circuit {
    pub fn from_json_str(text: &str, base_dir: &Path) -> Result<Self> {
        let file: CircuitFile = serde_json::from_str(text)?;
        file.into_circuit(base_dir)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read circuit file {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json_str(&text, base)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&CircuitFile::from_circuit(self)?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()? + "\n")?;
        Ok(())
    }
}
