//! Netlists and frequency-domain modified nodal analysis.
//!
//! Unknown ordering: non-ground node voltages first (in declaration order),
//! then one branch current per inductor (linear or kinetic) in element order.
//! Branch rows read `V_a − V_b − jωL·I = 0`, which keeps the matrix symmetric
//! for reciprocal networks.
//!
//! Phasors are peak amplitudes with `x(t) = Re{X e^{jωt}}`. A port is a
//! Thevenin source of amplitude `Vs` behind `Z0`; its available power is
//! `|Vs|² / (8 Z0)`.

mod schema;

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

pub use schema::{CircuitFile, ElementFile, MaterialFile, PortFile, SourceFile};

use crate::error::{Error, Result};
use crate::scmat::KineticInductorParams;
use crate::touchstone::{self, CMatrix, SParamData};

pub const DEFAULT_GROUND: &str = "0";

#[derive(Debug, Clone)]
pub enum Element {
    Resistor { name: String, nodes: [String; 2], resistance: f64 },
    Capacitor { name: String, nodes: [String; 2], capacitance: f64 },
    Inductor { name: String, nodes: [String; 2], inductance: f64 },
    KineticInductor { name: String, nodes: [String; 2], params: KineticInductorParams },
    /// N-port block, each port referenced to ground.
    SParamBlock { name: String, nodes: Vec<String>, data: Arc<SParamData>, z0: f64, path: Option<String> },
}

impl Element {
    pub fn name(&self) -> &str {
        match self {
            Element::Resistor { name, .. }
            | Element::Capacitor { name, .. }
            | Element::Inductor { name, .. }
            | Element::KineticInductor { name, .. }
            | Element::SParamBlock { name, .. } => name,
        }
    }

    pub fn nodes(&self) -> &[String] {
        match self {
            Element::Resistor { nodes, .. }
            | Element::Capacitor { nodes, .. }
            | Element::Inductor { nodes, .. }
            | Element::KineticInductor { nodes, .. } => nodes,
            Element::SParamBlock { nodes, .. } => nodes,
        }
    }

    fn has_branch(&self) -> bool {
        matches!(self, Element::Inductor { .. } | Element::KineticInductor { .. })
    }
}

/// A drive tone on a port: mixing vector, available power and phase.
#[derive(Debug, Clone, PartialEq)]
pub struct Source {
    pub tone: Vec<i32>,
    pub power_dbm: f64,
    pub phase: f64,
}

#[derive(Debug, Clone)]
pub struct Port {
    pub name: String,
    pub node: String,
    pub z0: f64,
    pub sources: Vec<Source>,
}

#[derive(Debug, Clone)]
pub struct Circuit {
    pub ground: String,
    pub nodes: Vec<String>,
    pub elements: Vec<Element>,
    pub ports: Vec<Port>,
}

impl Default for Circuit {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub subject: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

impl Circuit {
    pub fn new() -> Self {
        Self { ground: DEFAULT_GROUND.to_string(), nodes: Vec::new(), elements: Vec::new(), ports: Vec::new() }
    }

    fn touch(&mut self, node: &str) {
        if node != self.ground && !self.nodes.iter().any(|n| n == node) {
            self.nodes.push(node.to_string());
        }
    }

    fn two(&mut self, a: &str, b: &str) -> [String; 2] {
        self.touch(a);
        self.touch(b);
        [a.to_string(), b.to_string()]
    }

    pub fn resistor(&mut self, name: &str, a: &str, b: &str, resistance: f64) -> &mut Self {
        let nodes = self.two(a, b);
        self.elements.push(Element::Resistor { name: name.into(), nodes, resistance });
        self
    }

    pub fn capacitor(&mut self, name: &str, a: &str, b: &str, capacitance: f64) -> &mut Self {
        let nodes = self.two(a, b);
        self.elements.push(Element::Capacitor { name: name.into(), nodes, capacitance });
        self
    }

    pub fn inductor(&mut self, name: &str, a: &str, b: &str, inductance: f64) -> &mut Self {
        let nodes = self.two(a, b);
        self.elements.push(Element::Inductor { name: name.into(), nodes, inductance });
        self
    }

    pub fn kinetic_inductor(&mut self, name: &str, a: &str, b: &str, params: KineticInductorParams) -> &mut Self {
        let nodes = self.two(a, b);
        self.elements.push(Element::KineticInductor { name: name.into(), nodes, params });
        self
    }

    pub fn sparam_block(&mut self, name: &str, nodes: &[&str], data: Arc<SParamData>) -> &mut Self {
        for n in nodes {
            self.touch(n);
        }
        let z0 = data.z0;
        self.elements.push(Element::SParamBlock {
            name: name.into(),
            nodes: nodes.iter().map(|s| s.to_string()).collect(),
            data,
            z0,
            path: None,
        });
        self
    }

    pub fn port(&mut self, name: &str, node: &str, z0: f64) -> &mut Self {
        self.touch(node);
        self.ports.push(Port { name: name.into(), node: node.into(), z0, sources: Vec::new() });
        self
    }

    pub fn port_index(&self, name: &str) -> Option<usize> {
        self.ports.iter().position(|p| p.name == name)
    }

    /// Removes every port source.
    pub fn clear_sources(&mut self) {
        for p in &mut self.ports {
            p.sources.clear();
        }
    }

    pub fn add_source(&mut self, port: usize, source: Source) -> Result<()> {
        let p = self
            .ports
            .get_mut(port)
            .ok_or_else(|| Error::Argument(format!("no port with index {port}")))?;
        if p.sources.iter().any(|s| s.tone == source.tone) {
            return Err(Error::Argument(format!("port {} already drives tone {:?}", p.name, source.tone)));
        }
        p.sources.push(source);
        Ok(())
    }

    pub fn kinetic_inductors(&self) -> impl Iterator<Item = (&str, &KineticInductorParams)> {
        self.elements.iter().filter_map(|e| match e {
            Element::KineticInductor { name, params, .. } => Some((name.as_str(), params)),
            _ => None,
        })
    }

    pub fn has_sparam_blocks(&self) -> bool {
        self.elements.iter().any(|e| matches!(e, Element::SParamBlock { .. }))
    }

    /// Lists every structural or value problem; empty iff the circuit is solvable.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut v = |subject: &str, message: String| out.push(Violation { subject: subject.to_string(), message });

        let mut index: HashMap<&str, usize> = HashMap::new();
        index.insert(self.ground.as_str(), 0);
        for n in &self.nodes {
            if index.insert(n.as_str(), index.len()).is_some() {
                v(n, "duplicate node name".into());
            }
        }

        let mut uf = UnionFind::new(index.len());
        let mut used = vec![false; index.len()];
        used[0] = true;

        let positive = |x: f64| x > 0.0 && x.is_finite();
        for e in &self.elements {
            let name = e.name();
            let mut ids = Vec::new();
            for n in e.nodes() {
                match index.get(n.as_str()) {
                    Some(&i) => {
                        used[i] = true;
                        ids.push(i);
                    }
                    None => v(name, format!("references unknown node {n:?}")),
                }
            }
            match e {
                Element::Resistor { resistance, .. } if !positive(*resistance) => {
                    v(name, format!("resistance must be positive, got {resistance}"))
                }
                Element::Capacitor { capacitance, .. } if !positive(*capacitance) => {
                    v(name, format!("capacitance must be positive, got {capacitance}"))
                }
                Element::Inductor { inductance, .. } if !positive(*inductance) => {
                    v(name, format!("inductance must be positive, got {inductance}"))
                }
                Element::KineticInductor { params, .. } => {
                    if let Err(err) = params.validate() {
                        v(name, err.to_string());
                    }
                }
                Element::SParamBlock { data, z0, nodes, .. } => {
                    if !positive(*z0) {
                        v(name, format!("reference impedance must be positive, got {z0}"));
                    }
                    if nodes.len() != data.n_ports {
                        v(name, format!("{} nodes for a {}-port block", nodes.len(), data.n_ports));
                    }
                    if let Err(err) = data.validate() {
                        v(name, err.to_string());
                    }
                }
                _ => {}
            }
            if e.nodes().len() == 2 && ids.len() == 2 && ids[0] == ids[1] {
                v(name, "both terminals on the same node".into());
            }
            match e {
                Element::SParamBlock { .. } => {
                    for &i in &ids {
                        uf.union(i, 0);
                    }
                }
                _ => {
                    if ids.len() == 2 {
                        uf.union(ids[0], ids[1]);
                    }
                }
            }
        }

        if self.ports.is_empty() {
            v("circuit", "no port defined".into());
        }
        for p in &self.ports {
            if !positive(p.z0) {
                v(&p.name, format!("reference impedance must be positive, got {}", p.z0));
            }
            match index.get(p.node.as_str()) {
                None => v(&p.name, format!("references unknown node {:?}", p.node)),
                Some(0) => v(&p.name, "port node is ground".into()),
                Some(&i) => {
                    used[i] = true;
                    if uf.find(i) != uf.find(0) {
                        v(&p.name, format!("node {:?} has no path to ground", p.node));
                    }
                }
            }
            for (k, s) in p.sources.iter().enumerate() {
                if p.sources[..k].iter().any(|o| o.tone == s.tone) {
                    v(&p.name, format!("duplicate source on tone {:?}", s.tone));
                }
                if !s.power_dbm.is_finite() || !s.phase.is_finite() {
                    v(&p.name, format!("non-finite source on tone {:?}", s.tone));
                }
            }
        }

        for (n, &i) in &index {
            if i == 0 {
                continue;
            }
            if !used[i] {
                v(n, "dangling node (no element or port attached)".into());
            } else if uf.find(i) != uf.find(0) {
                v(n, "node is not connected to ground".into());
            }
        }
        // HashMap iteration order is not stable.
        out.sort_by(|a, b| (a.subject.as_str(), a.message.as_str()).cmp(&(b.subject.as_str(), b.message.as_str())));
        out
    }

    pub fn compile(&self) -> Result<Mna> {
        let report = self.validate();
        if !report.is_empty() {
            let msgs: Vec<String> = report.iter().map(|v| v.to_string()).collect();
            return Err(Error::InvalidCircuit(msgs.join("; ")));
        }
        Ok(Mna::build(self))
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra] = rb;
        }
    }
}

#[derive(Debug, Clone)]
enum Stamp {
    Conductance { a: Option<usize>, b: Option<usize>, g: f64 },
    Capacitance { a: Option<usize>, b: Option<usize>, c: f64 },
    Branch { a: Option<usize>, b: Option<usize>, row: usize, l: f64 },
    Block { nodes: Vec<Option<usize>>, data: Arc<SParamData>, z0: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct KineticBranch {
    /// Unknown index of the branch current.
    pub unknown: usize,
    pub a: Option<usize>,
    pub b: Option<usize>,
    pub params: KineticInductorParams,
}

#[derive(Debug, Clone, Copy)]
pub struct PortIndex {
    pub node: usize,
    pub z0: f64,
}

/// Index-resolved form of a validated circuit.
#[derive(Debug, Clone)]
pub struct Mna {
    n_nodes: usize,
    n_unknowns: usize,
    stamps: Vec<Stamp>,
    pub kinetic: Vec<KineticBranch>,
    pub ports: Vec<PortIndex>,
    pub unknown_names: Vec<String>,
    resistors: Vec<(Option<usize>, Option<usize>, f64)>,
}

impl Mna {
    fn build(c: &Circuit) -> Self {
        let mut index: HashMap<&str, Option<usize>> = HashMap::new();
        index.insert(c.ground.as_str(), None);
        for (i, n) in c.nodes.iter().enumerate() {
            index.insert(n.as_str(), Some(i));
        }
        let n_nodes = c.nodes.len();
        let mut unknown_names: Vec<String> = c.nodes.iter().map(|n| format!("V({n})")).collect();
        let mut stamps = Vec::new();
        let mut kinetic = Vec::new();
        let mut resistors = Vec::new();
        let mut row = n_nodes;
        for e in &c.elements {
            let ab = |nodes: &[String; 2]| (index[nodes[0].as_str()], index[nodes[1].as_str()]);
            match e {
                Element::Resistor { nodes, resistance, .. } => {
                    let (a, b) = ab(nodes);
                    stamps.push(Stamp::Conductance { a, b, g: 1.0 / resistance });
                    resistors.push((a, b, *resistance));
                }
                Element::Capacitor { nodes, capacitance, .. } => {
                    let (a, b) = ab(nodes);
                    stamps.push(Stamp::Capacitance { a, b, c: *capacitance });
                }
                Element::Inductor { nodes, inductance, .. } => {
                    let (a, b) = ab(nodes);
                    stamps.push(Stamp::Branch { a, b, row, l: *inductance });
                }
                Element::KineticInductor { nodes, params, .. } => {
                    let (a, b) = ab(nodes);
                    stamps.push(Stamp::Branch { a, b, row, l: params.lk0 });
                    kinetic.push(KineticBranch { unknown: row, a, b, params: *params });
                }
                Element::SParamBlock { nodes, data, z0, .. } => {
                    let nodes = nodes.iter().map(|n| index[n.as_str()]).collect();
                    stamps.push(Stamp::Block { nodes, data: data.clone(), z0: *z0 });
                }
            }
            if e.has_branch() {
                unknown_names.push(format!("I({})", e.name()));
                row += 1;
            }
        }
        let ports = c
            .ports
            .iter()
            .map(|p| PortIndex { node: index[p.node.as_str()].expect("validated: port not on ground"), z0: p.z0 })
            .collect();
        Self { n_nodes, n_unknowns: row, stamps, kinetic, ports, unknown_names, resistors }
    }

    pub fn n_unknowns(&self) -> usize {
        self.n_unknowns
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// MNA matrix of the elements alone (port terminations excluded).
    pub fn admittance(&self, f: f64) -> Result<CMatrix> {
        let n = self.n_unknowns;
        let mut y = CMatrix::zeros(n, n);
        let w = 2.0 * std::f64::consts::PI * f;
        for s in &self.stamps {
            match s {
                Stamp::Conductance { a, b, g } => stamp2(&mut y, *a, *b, Complex64::new(*g, 0.0)),
                Stamp::Capacitance { a, b, c } => stamp2(&mut y, *a, *b, Complex64::new(0.0, w * c)),
                Stamp::Branch { a, b, row, l } => {
                    if let Some(a) = *a {
                        y[(a, *row)] += 1.0;
                        y[(*row, a)] += 1.0;
                    }
                    if let Some(b) = *b {
                        y[(b, *row)] -= 1.0;
                        y[(*row, b)] -= 1.0;
                    }
                    y[(*row, *row)] -= Complex64::new(0.0, w * l);
                }
                Stamp::Block { nodes, data, z0 } => {
                    let s = touchstone::interpolate_at(data, f.abs())?;
                    let mut yb = block_admittance(&s, *z0)?;
                    if f < 0.0 {
                        yb = yb.map(|z| z.conj());
                    }
                    for (i, ni) in nodes.iter().enumerate() {
                        for (j, nj) in nodes.iter().enumerate() {
                            if let (Some(r), Some(c)) = (ni, nj) {
                                y[(*r, *c)] += yb[(i, j)];
                            }
                        }
                    }
                }
            }
        }
        Ok(y)
    }

    /// Element admittance plus `1/Z0` at every port node.
    pub fn terminated_admittance(&self, f: f64) -> Result<CMatrix> {
        let mut y = self.admittance(f)?;
        for p in &self.ports {
            y[(p.node, p.node)] += 1.0 / p.z0;
        }
        Ok(y)
    }

    /// Time-average power dissipated in resistors and S-parameter blocks
    /// for one phasor solution vector (peak amplitudes).
    pub fn dissipated_power(&self, f: f64, x: &[Complex64]) -> Result<f64> {
        let volt = |n: Option<usize>| n.map_or(Complex64::new(0.0, 0.0), |i| x[i]);
        let mut p = 0.0;
        for &(a, b, r) in &self.resistors {
            p += 0.5 * (volt(a) - volt(b)).norm_sqr() / r;
        }
        for s in &self.stamps {
            if let Stamp::Block { nodes, data, z0 } = s {
                let sm = touchstone::interpolate_at(data, f.abs())?;
                let yb = block_admittance(&sm, *z0)?;
                let v: Vec<Complex64> = nodes.iter().map(|&n| volt(n)).collect();
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..v.len() {
                    for j in 0..v.len() {
                        acc += v[i].conj() * yb[(i, j)] * v[j];
                    }
                }
                p += 0.5 * acc.re;
            }
        }
        Ok(p)
    }
}

/// Constitutive law of an inductor branch in the time domain.
#[derive(Debug, Clone, Copy)]
pub enum BranchLaw {
    Linear(f64),
    Kinetic(KineticInductorParams),
}

impl BranchLaw {
    pub fn flux(&self, i: f64) -> f64 {
        match self {
            BranchLaw::Linear(l) => l * i,
            BranchLaw::Kinetic(p) => p.flux(i),
        }
    }

    pub fn inductance(&self, i: f64) -> f64 {
        match self {
            BranchLaw::Linear(l) => *l,
            BranchLaw::Kinetic(p) => p.inductance(i),
        }
    }
}

/// Real descriptor form `G x + d q(x)/dt = u(t)` of a lumped circuit with
/// ports terminated. `q` is `C x` on node rows and `−Φ(i)` on branch rows.
#[derive(Debug, Clone)]
pub struct TimeDomainSystem {
    pub g: DMatrix<f64>,
    pub c: DMatrix<f64>,
    /// `(unknown index, law)` for every inductor branch.
    pub branches: Vec<(usize, BranchLaw)>,
    pub ports: Vec<PortIndex>,
    pub unknown_names: Vec<String>,
}

impl Mna {
    pub fn time_domain(&self) -> Result<TimeDomainSystem> {
        let n = self.n_unknowns;
        let mut g = DMatrix::zeros(n, n);
        let mut c = DMatrix::zeros(n, n);
        let mut branches = Vec::new();
        let stamp_real = |m: &mut DMatrix<f64>, a: Option<usize>, b: Option<usize>, v: f64| {
            if let Some(a) = a {
                m[(a, a)] += v;
            }
            if let Some(b) = b {
                m[(b, b)] += v;
            }
            if let (Some(a), Some(b)) = (a, b) {
                m[(a, b)] -= v;
                m[(b, a)] -= v;
            }
        };
        for s in &self.stamps {
            match s {
                Stamp::Conductance { a, b, g: gv } => stamp_real(&mut g, *a, *b, *gv),
                Stamp::Capacitance { a, b, c: cv } => stamp_real(&mut c, *a, *b, *cv),
                Stamp::Branch { a, b, row, l } => {
                    if let Some(a) = *a {
                        g[(a, *row)] += 1.0;
                        g[(*row, a)] += 1.0;
                    }
                    if let Some(b) = *b {
                        g[(b, *row)] -= 1.0;
                        g[(*row, b)] -= 1.0;
                    }
                    let law = match self.kinetic.iter().find(|k| k.unknown == *row) {
                        Some(k) => BranchLaw::Kinetic(k.params),
                        None => BranchLaw::Linear(*l),
                    };
                    branches.push((*row, law));
                }
                Stamp::Block { .. } => {
                    return Err(Error::Config("time-domain analysis does not support S-parameter blocks".into()))
                }
            }
        }
        for p in &self.ports {
            g[(p.node, p.node)] += 1.0 / p.z0;
        }
        Ok(TimeDomainSystem { g, c, branches, ports: self.ports.clone(), unknown_names: self.unknown_names.clone() })
    }
}

fn stamp2(y: &mut CMatrix, a: Option<usize>, b: Option<usize>, val: Complex64) {
    if let Some(a) = a {
        y[(a, a)] += val;
    }
    if let Some(b) = b {
        y[(b, b)] += val;
    }
    if let (Some(a), Some(b)) = (a, b) {
        y[(a, b)] -= val;
        y[(b, a)] -= val;
    }
}

/// S → Y for stamping; falls back to the pseudo-inverse of `I + S` when it
/// is singular (ideal short ports).
pub fn block_admittance(s: &CMatrix, z0: f64) -> Result<CMatrix> {
    match touchstone::s_to_y(s, z0) {
        Ok(y) => Ok(y),
        Err(Error::Singular(_)) => {
            let id = CMatrix::identity(s.nrows(), s.ncols());
            let pinv = (&id + s)
                .pseudo_inverse(1e-12)
                .map_err(|e| Error::Singular(format!("pseudo-inverse of I + S: {e}")))?;
            Ok((&id - s) * pinv * Complex64::from(1.0 / z0))
        }
        Err(e) => Err(e),
    }
}

/// MNA matrix of `c` at frequency `f` (Hz), without port terminations.
pub fn linear_admittance_at(c: &Circuit, f: f64) -> Result<CMatrix> {
    c.compile()?.admittance(f)
}

/// Incident and reflected power waves at a port, `a = (V + Z0 I) / (2√Z0)`,
/// `b = (V − Z0 I) / (2√Z0)`, with `I` flowing into the circuit.
pub fn port_waves(v: Complex64, i: Complex64, z0: f64) -> (Complex64, Complex64) {
    let k = 1.0 / (2.0 * z0.sqrt());
    ((v + i * z0) * k, (v - i * z0) * k)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * (w / 1e-3).log10()
}

/// Peak Thevenin amplitude delivering `power_dbm` of available power into `z0`.
pub fn source_amplitude(power_dbm: f64, z0: f64) -> f64 {
    (8.0 * z0 * dbm_to_watts(power_dbm)).sqrt()
}

/// Solves a linear frequency-domain phasor problem with all port sources
/// applied at frequency `f` (the caller decides which sources belong there).
pub fn phasor_solve(mna: &Mna, f: f64, port_vs: &[Complex64]) -> Result<Vec<Complex64>> {
    let y = mna.terminated_admittance(f)?;
    let mut rhs = nalgebra::DVector::from_element(mna.n_unknowns(), Complex64::new(0.0, 0.0));
    for (p, vs) in mna.ports.iter().zip(port_vs) {
        rhs[p.node] += vs / p.z0;
    }
    let x = y
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular(format!("MNA matrix at {f} Hz")))?;
    Ok(x.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn j(x: f64) -> Complex64 {
        Complex64::new(0.0, x)
    }

    fn driving_point(mna: &Mna, f: f64, node: usize) -> Complex64 {
        let y = mna.admittance(f).unwrap();
        let mut rhs = nalgebra::DVector::from_element(mna.n_unknowns(), Complex64::new(0.0, 0.0));
        rhs[node] = Complex64::new(1.0, 0.0);
        y.lu().solve(&rhs).unwrap()[node]
    }

    pub(crate) fn lumped_kipa() -> Circuit {
        let mut c = Circuit::new();
        c.port("P1", "port", 50.0)
            .capacitor("Cc", "port", "res", 22e-15)
            .capacitor("C", "res", "0", 150e-15)
            .resistor("R", "res", "0", 1e5)
            .inductor("Lpad", "res", "wire", 1.3e-9)
            .kinetic_inductor("Lk", "wire", "0", KineticInductorParams { lk0: 1.705e-9, istar: 3.985e-6 });
        c
    }

    #[test]
    fn lumped_kipa_validates() {
        assert!(lumped_kipa().validate().is_empty());
    }

    #[test]
    fn unknown_node_is_reported() {
        let mut c = lumped_kipa();
        c.elements.push(Element::Capacitor { name: "Cx".into(), nodes: ["res".into(), "nowhere".into()], capacitance: 1e-15 });
        let r = c.validate();
        assert_eq!(r.len(), 1, "{r:?}");
        assert!(r[0].message.contains("nowhere"));
    }

    #[test]
    fn missing_port_is_reported() {
        let mut c = lumped_kipa();
        c.ports.clear();
        let r = c.validate();
        assert_eq!(r.len(), 1, "{r:?}");
        assert!(r[0].message.contains("no port"));
    }

    #[test]
    fn floating_island_and_bad_values() {
        let mut c = lumped_kipa();
        c.capacitor("Cf", "x", "y", 1e-15);
        c.resistor("Rneg", "res", "0", -5.0);
        let r = c.validate();
        assert!(r.iter().any(|v| v.subject == "x" && v.message.contains("not connected")));
        assert!(r.iter().any(|v| v.subject == "Rneg"));
        assert!(c.compile().is_err());
    }

    #[test]
    fn parallel_rlc_at_resonance_is_resistive() {
        let (r, l, cap) = (1234.0, 2e-9, 200e-15);
        let mut c = Circuit::new();
        c.port("P", "a", 50.0).resistor("R", "a", "0", r).inductor("L", "a", "0", l).capacitor("C", "a", "0", cap);
        let mna = c.compile().unwrap();
        let f0 = 1.0 / (2.0 * PI * (l * cap).sqrt());
        let z = driving_point(&mna, f0, 0);
        assert_relative_eq!(z.re, r, max_relative = 1e-9);
        assert!(z.im.abs() < 1e-9 * r);
    }

    #[test]
    fn series_lc_shorts_at_resonance() {
        let (l, cap) = (3e-9, 100e-15);
        let mut c = Circuit::new();
        c.port("P", "a", 50.0).inductor("L", "a", "m", l).capacitor("C", "m", "0", cap).resistor("R", "a", "0", 1e3);
        let mna = c.compile().unwrap();
        let f0 = 1.0 / (2.0 * PI * (l * cap).sqrt());
        // Current through the inductor for 1 V forced at node a.
        let y = mna.admittance(f0).unwrap();
        let z_branch = Complex64::new(0.0, 2.0 * PI * f0 * l) + 1.0 / j(2.0 * PI * f0 * cap);
        assert!(z_branch.norm() < 1e-9);
        // Driving-point impedance is tiny compared to the 1 kΩ shunt.
        let mut rhs = nalgebra::DVector::from_element(mna.n_unknowns(), Complex64::new(0.0, 0.0));
        rhs[0] = Complex64::new(1.0, 0.0);
        let x = y.lu().solve(&rhs).unwrap();
        assert!(x[0].norm() < 1e-6, "{}", x[0]);
    }

    #[test]
    fn single_resistor_matrix() {
        let mut c = Circuit::new();
        c.port("P", "a", 50.0).resistor("R", "a", "0", 50.0);
        for f in [0.0, 1e6, 7e9] {
            let y = linear_admittance_at(&c, f).unwrap();
            assert_eq!(y.nrows(), 1);
            assert_relative_eq!(y[(0, 0)].re, 0.02, max_relative = 1e-15);
            assert_eq!(y[(0, 0)].im, 0.0);
        }
    }

    #[test]
    fn reciprocal_and_hermitian() {
        let mna = lumped_kipa().compile().unwrap();
        for f in [1e9, 7.45e9] {
            let y = mna.admittance(f).unwrap();
            assert_eq!(y, y.transpose());
            let yn = mna.admittance(-f).unwrap();
            assert_eq!(yn, y.map(|z| z.conj()));
        }
    }

    #[test]
    fn port_wave_limits() {
        let z0 = 50.0;
        let i = Complex64::new(0.01, 0.003);
        let (_, b) = port_waves(i * z0, i, z0);
        assert!(b.norm() < 1e-18);
        let v = Complex64::new(0.3, -0.1);
        let (a, b) = port_waves(v, Complex64::new(0.0, 0.0), z0);
        assert_eq!(a, b);
        let (a, b) = port_waves(Complex64::new(0.0, 0.0), i, z0);
        assert_eq!(a, -b);
    }

    #[test]
    fn dbm_amplitude_round_trip() {
        // 0 dBm into 50 Ω: |Vs|² / (8·50) = 1 mW.
        let vs = source_amplitude(0.0, 50.0);
        assert_relative_eq!(vs * vs / (8.0 * 50.0), 1e-3, max_relative = 1e-14);
        assert_relative_eq!(watts_to_dbm(dbm_to_watts(-97.0)), -97.0, max_relative = 1e-14);
        // Matched load receives the full available power.
        let mut c = Circuit::new();
        c.port("P", "a", 50.0).resistor("R", "a", "0", 50.0);
        let mna = c.compile().unwrap();
        let x = phasor_solve(&mna, 1e9, &[Complex64::new(vs, 0.0)]).unwrap();
        assert_relative_eq!(mna.dissipated_power(1e9, &x).unwrap(), 1e-3, max_relative = 1e-12);
    }

    #[test]
    fn passive_power_is_nonnegative() {
        let mna = lumped_kipa().compile().unwrap();
        for (k, f) in [1e9, 7.3e9, 7.45e9, 9e9].into_iter().enumerate() {
            let x = phasor_solve(&mna, f, &[Complex64::from_polar(1e-3, k as f64)]).unwrap();
            assert!(mna.dissipated_power(f, &x).unwrap() >= 0.0);
        }
    }

    #[test]
    fn short_block_uses_pseudo_inverse() {
        let s = CMatrix::from_element(1, 1, Complex64::new(-1.0, 0.0));
        let y = block_admittance(&s, 50.0).unwrap();
        assert!(y[(0, 0)].norm().is_finite());
    }
}
