//! Linear-circuit engine: modified nodal analysis on R/L/C/VCCS netlists.
//!
//! The circuit is stamped into a linear pencil `(G + sC) x = b` whose
//! unknowns are the non-ground node voltages followed by one branch current
//! per inductor (and per series voltage probe). Because inductors live in
//! the `C` part, the natural frequencies are exactly the finite generalized
//! eigenvalues of the pencil, which is what [`analytic_poles`] returns.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqresp::{
    Excitation, FrequencyGrid, FrequencyResponseSet, PortLabel, PortResponse, ResponseKind,
};
use crate::linalg;
use crate::poles::sort_poles;

/// Name of the ground node in netlists.
pub const GROUND: &str = "0";

/// Default reference frequency used to realize a complex termination
/// impedance as a series R-L or R-C network.
pub const DEFAULT_PORT_FREF_HZ: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ElementKind {
    /// Ohms. Negative values model active-device reflection gain.
    Resistor { ohms: f64 },
    Inductor { henry: f64 },
    Capacitor { farad: f64 },
    /// Current `g·(v(ctrl_p) - v(ctrl_n))` flowing out of `n1`, through the
    /// source, into `n2` (SPICE `G` convention).
    Vccs { siemens: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub name: String,
    pub n1: String,
    pub n2: String,
    /// Controlling nodes, VCCS only.
    pub ctrl: Option<(String, String)>,
    pub kind: ElementKind,
}

impl Element {
    pub fn value(&self) -> f64 {
        match self.kind {
            ElementKind::Resistor { ohms } => ohms,
            ElementKind::Inductor { henry } => henry,
            ElementKind::Capacitor { farad } => farad,
            ElementKind::Vccs { siemens } => siemens,
        }
    }

    fn with_value(&self, v: f64) -> Element {
        let mut e = self.clone();
        e.kind = match self.kind {
            ElementKind::Resistor { .. } => ElementKind::Resistor { ohms: v },
            ElementKind::Inductor { .. } => ElementKind::Inductor { henry: v },
            ElementKind::Capacitor { .. } => ElementKind::Capacitor { farad: v },
            ElementKind::Vccs { .. } => ElementKind::Vccs { siemens: v },
        };
        e
    }

    pub fn is_negative_resistor(&self) -> bool {
        matches!(self.kind, ElementKind::Resistor { ohms } if ohms < 0.0)
    }

    pub fn class(&self) -> ElementClass {
        match self.kind {
            ElementKind::Resistor { .. } => ElementClass::Resistor,
            ElementKind::Inductor { .. } => ElementClass::Inductor,
            ElementKind::Capacitor { .. } => ElementClass::Capacitor,
            ElementKind::Vccs { .. } => ElementClass::Vccs,
        }
    }

    fn validate(&self) -> Result<()> {
        let v = self.value();
        if !v.is_finite() {
            return Err(Error::invalid(format!("element {} has non-finite value", self.name)));
        }
        if v == 0.0 && !matches!(self.kind, ElementKind::Vccs { .. }) {
            return Err(Error::invalid(format!("element {} has zero value", self.name)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementClass {
    Resistor,
    Inductor,
    Capacitor,
    Vccs,
}

/// A reference-impedance port that can be loaded with a reflection coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminationPort {
    pub name: String,
    pub node: String,
    pub z0: f64,
    /// Frequency at which a complex termination impedance is realized.
    pub f_ref_hz: f64,
    /// Reflection coefficient currently attached, if any.
    pub gamma: Option<Complex64>,
}

/// How a small-signal probe excites and observes the circuit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProbeSpec {
    /// Unit current injected at a node; response is the node impedance.
    NodeCurrent { node: String },
    /// Unit voltage source in series with a two-terminal element; response is
    /// the branch admittance.
    BranchVoltage { element: String },
    /// Unit currents with the given phases injected at each node; response
    /// is the voltage at the first node.
    Modal { nodes: Vec<String>, phases_deg: Vec<f64> },
}

impl ProbeSpec {
    pub fn node(n: &str) -> Self {
        ProbeSpec::NodeCurrent { node: n.to_string() }
    }

    pub fn branch(e: &str) -> Self {
        ProbeSpec::BranchVoltage { element: e.to_string() }
    }

    pub fn modal(nodes: &[&str], phases_deg: &[f64]) -> Result<Self> {
        let p = ProbeSpec::Modal {
            nodes: nodes.iter().map(|s| s.to_string()).collect(),
            phases_deg: phases_deg.to_vec(),
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if let ProbeSpec::Modal { nodes, phases_deg } = self {
            if nodes.is_empty() || nodes.len() != phases_deg.len() {
                return Err(Error::invalid("modal probe needs one phase per node"));
            }
            if phases_deg.iter().any(|p| !(0.0..360.0).contains(p)) {
                return Err(Error::invalid("modal phases must lie in [0, 360) degrees"));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> ResponseKind {
        match self {
            ProbeSpec::NodeCurrent { .. } => ResponseKind::Impedance,
            ProbeSpec::BranchVoltage { .. } => ResponseKind::Admittance,
            ProbeSpec::Modal { .. } => ResponseKind::Transfer,
        }
    }

    fn excitation(&self) -> Excitation {
        match self {
            ProbeSpec::NodeCurrent { node } => Excitation::NodeCurrent { node: node.clone() },
            ProbeSpec::BranchVoltage { element } => Excitation::BranchVoltage { element: element.clone() },
            ProbeSpec::Modal { nodes, phases_deg } => {
                Excitation::Modal { nodes: nodes.clone(), phases_deg: phases_deg.clone() }
            }
        }
    }
}

impl fmt::Display for ProbeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProbeSpec::NodeCurrent { node } => write!(f, "inode:{node}"),
            ProbeSpec::BranchVoltage { element } => write!(f, "vbranch:{element}"),
            ProbeSpec::Modal { nodes, phases_deg } => {
                write!(f, "modal:")?;
                for (i, (n, p)) in nodes.iter().zip(phases_deg).enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{n}@{p}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::str::FromStr for ProbeSpec {
    type Err = Error;

    /// `inode:<n>`, `vbranch:<element>` or `modal:<n1>@<deg1>,<n2>@<deg2>,...`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("bad probe `{s}`")))?;
        let probe = match kind {
            "inode" if !rest.is_empty() => ProbeSpec::node(rest),
            "vbranch" if !rest.is_empty() => ProbeSpec::branch(rest),
            "modal" => {
                let mut nodes = Vec::new();
                let mut phases = Vec::new();
                for item in rest.split(',') {
                    let (n, d) = item
                        .split_once('@')
                        .ok_or_else(|| Error::invalid(format!("modal entry `{item}` needs <node>@<deg>")))?;
                    nodes.push(n.to_string());
                    phases.push(
                        d.parse::<f64>()
                            .map_err(|_| Error::invalid(format!("bad phase `{d}`")))?,
                    );
                }
                ProbeSpec::Modal { nodes, phases_deg: phases }
            }
            _ => return Err(Error::invalid(format!("bad probe `{s}`"))),
        };
        probe.validate()?;
        Ok(probe)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Netlist {
    /// Non-ground nodes in first-appearance order.
    nodes: Vec<String>,
    elements: Vec<Element>,
    ports: Vec<TerminationPort>,
}

impl Netlist {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn ports(&self) -> &[TerminationPort] {
        &self.ports
    }

    pub fn element(&self, name: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.name == name)
    }

    pub fn port(&self, name: &str) -> Option<&TerminationPort> {
        self.ports.iter().find(|p| p.name == name)
    }

    fn declare(&mut self, node: &str) {
        if node != GROUND && !self.nodes.iter().any(|n| n == node) {
            self.nodes.push(node.to_string());
        }
    }

    pub fn add(&mut self, element: Element) -> Result<()> {
        element.validate()?;
        if self.element(&element.name).is_some() {
            return Err(Error::invalid(format!("duplicate element name {}", element.name)));
        }
        self.declare(&element.n1);
        self.declare(&element.n2);
        if let Some((a, b)) = &element.ctrl {
            self.declare(a);
            self.declare(b);
        }
        self.elements.push(element);
        Ok(())
    }

    fn two_terminal(&mut self, name: &str, n1: &str, n2: &str, kind: ElementKind) -> Result<&mut Self> {
        self.add(Element { name: name.into(), n1: n1.into(), n2: n2.into(), ctrl: None, kind })?;
        Ok(self)
    }

    pub fn resistor(&mut self, name: &str, n1: &str, n2: &str, ohms: f64) -> Result<&mut Self> {
        self.two_terminal(name, n1, n2, ElementKind::Resistor { ohms })
    }

    pub fn inductor(&mut self, name: &str, n1: &str, n2: &str, henry: f64) -> Result<&mut Self> {
        self.two_terminal(name, n1, n2, ElementKind::Inductor { henry })
    }

    pub fn capacitor(&mut self, name: &str, n1: &str, n2: &str, farad: f64) -> Result<&mut Self> {
        self.two_terminal(name, n1, n2, ElementKind::Capacitor { farad })
    }

    pub fn vccs(
        &mut self,
        name: &str,
        out_p: &str,
        out_n: &str,
        in_p: &str,
        in_n: &str,
        siemens: f64,
    ) -> Result<&mut Self> {
        self.add(Element {
            name: name.into(),
            n1: out_p.into(),
            n2: out_n.into(),
            ctrl: Some((in_p.into(), in_n.into())),
            kind: ElementKind::Vccs { siemens },
        })?;
        Ok(self)
    }

    pub fn add_port(&mut self, name: &str, node: &str, z0: f64, f_ref_hz: f64) -> Result<&mut Self> {
        if !(z0 > 0.0 && z0.is_finite()) {
            return Err(Error::invalid(format!("port {name}: z0 must be real and > 0")));
        }
        if !(f_ref_hz > 0.0 && f_ref_hz.is_finite()) {
            return Err(Error::invalid(format!("port {name}: reference frequency must be > 0")));
        }
        if self.port(name).is_some() {
            return Err(Error::invalid(format!("duplicate port {name}")));
        }
        if node == GROUND {
            return Err(Error::invalid(format!("port {name} cannot sit on ground")));
        }
        self.ports.push(TerminationPort {
            name: name.into(),
            node: node.into(),
            z0,
            f_ref_hz,
            gamma: None,
        });
        Ok(self)
    }

    /// Copy with element `name` set to `value`.
    pub fn with_value(&self, name: &str, value: f64) -> Result<Netlist> {
        let mut out = self.clone();
        let idx = out
            .elements
            .iter()
            .position(|e| e.name == name)
            .ok_or_else(|| Error::Unknown { kind: "element", name: name.into() })?;
        let e = out.elements[idx].with_value(value);
        e.validate()?;
        out.elements[idx] = e;
        Ok(out)
    }

    /// Copy with every element value passed through `f`.
    pub fn map_values(&self, mut f: impl FnMut(&Element) -> f64) -> Result<Netlist> {
        let mut out = self.clone();
        for e in out.elements.iter_mut() {
            let v = f(e);
            *e = e.with_value(v);
            e.validate()?;
        }
        Ok(out)
    }

    /// Copy with `node` shorted to ground. Elements left with both terminals
    /// on ground are kept; only inductors still contribute (a zero-frequency
    /// circulating-current mode).
    pub fn with_node_grounded(&self, node: &str) -> Result<Netlist> {
        if !self.nodes.iter().any(|n| n == node) {
            return Err(Error::Unknown { kind: "node", name: node.into() });
        }
        let map = |n: &String| if n == node { GROUND.to_string() } else { n.clone() };
        let mut out = Netlist::new();
        for e in &self.elements {
            let e2 = Element {
                name: e.name.clone(),
                n1: map(&e.n1),
                n2: map(&e.n2),
                ctrl: e.ctrl.as_ref().map(|(a, b)| (map(a), map(b))),
                kind: e.kind,
            };
            out.add(e2)?;
        }
        // keep the original node order for everything that survives
        out.nodes = self.nodes.iter().filter(|n| *n != node).cloned().collect();
        out.ports = self.ports.iter().filter(|p| p.node != node).cloned().collect();
        Ok(out)
    }

    /// Structural checks: ports on declared nodes and every node tied to
    /// ground through current-carrying branches.
    pub fn validate(&self) -> Result<()> {
        for p in &self.ports {
            if p.node != GROUND && !self.nodes.contains(&p.node) {
                return Err(Error::Unknown { kind: "node", name: p.node.clone() });
            }
        }
        let n = self.nodes.len();
        let idx = self.node_map();
        let mut parent: Vec<usize> = (0..=n).collect(); // n = ground
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        let id = |s: &str| idx.get(s).copied().unwrap_or(n);
        for e in &self.elements {
            let (a, b) = (find(&mut parent, id(&e.n1)), find(&mut parent, id(&e.n2)));
            parent[a] = b;
        }
        let g = find(&mut parent, n);
        for (i, name) in self.nodes.iter().enumerate() {
            if find(&mut parent, i) != g {
                return Err(Error::invalid(format!("node {name} is floating (no branch path to ground)")));
            }
        }
        Ok(())
    }

    fn node_map(&self) -> HashMap<&str, usize> {
        self.nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect()
    }

    /// Largest corner frequency (rad/s) formed by any R–C, R–L or L–C pair of
    /// element values. VCCS gains count as resistances of 1/|g|.
    pub fn max_corner_omega(&self) -> f64 {
        let mut rs = Vec::new();
        let mut ls = Vec::new();
        let mut cs = Vec::new();
        for e in &self.elements {
            match e.kind {
                ElementKind::Resistor { ohms } => rs.push(ohms.abs()),
                ElementKind::Vccs { siemens } if siemens != 0.0 => rs.push(1.0 / siemens.abs()),
                ElementKind::Vccs { .. } => {}
                ElementKind::Inductor { henry } => ls.push(henry.abs()),
                ElementKind::Capacitor { farad } => cs.push(farad.abs()),
            }
        }
        let mut w: f64 = 0.0;
        for &r in &rs {
            for &c in &cs {
                w = w.max(1.0 / (r * c));
            }
            for &l in &ls {
                w = w.max(r / l);
            }
        }
        for &l in &ls {
            for &c in &cs {
                w = w.max(1.0 / (l * c).sqrt());
            }
        }
        w
    }

    /// Serialize back to the line-based netlist format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.elements {
            let line = match e.kind {
                ElementKind::Resistor { ohms } => format!("R {} {} {} {:?}", e.name, e.n1, e.n2, ohms),
                ElementKind::Inductor { henry } => format!("L {} {} {} {:?}", e.name, e.n1, e.n2, henry),
                ElementKind::Capacitor { farad } => format!("C {} {} {} {:?}", e.name, e.n1, e.n2, farad),
                ElementKind::Vccs { siemens } => {
                    let (a, b) = e.ctrl.as_ref().expect("vccs has control nodes");
                    format!("G {} {} {} {} {} {:?}", e.name, e.n1, e.n2, a, b, siemens)
                }
            };
            out.push_str(&line);
            out.push('\n');
        }
        for p in &self.ports {
            out.push_str(&format!("PORT {} {} {:?} {:?}\n", p.name, p.node, p.z0, p.f_ref_hz));
        }
        out
    }
}

/// Parse a number with an optional engineering suffix (p, n, u, m, k, M, G).
pub fn parse_value(tok: &str) -> Option<f64> {
    let tok = tok.trim();
    let (num, mult) = match tok.chars().last()? {
        'p' => (&tok[..tok.len() - 1], 1e-12),
        'n' => (&tok[..tok.len() - 1], 1e-9),
        'u' => (&tok[..tok.len() - 1], 1e-6),
        'm' => (&tok[..tok.len() - 1], 1e-3),
        'k' => (&tok[..tok.len() - 1], 1e3),
        'M' => (&tok[..tok.len() - 1], 1e6),
        'G' => (&tok[..tok.len() - 1], 1e9),
        _ => (tok, 1.0),
    };
    let v: f64 = num.parse().ok()?;
    Some(v * mult)
}

/// Parse the line-based netlist format:
///
/// ```text
/// # parallel RLC
/// R r1 a 0 50
/// L l1 a 0 1n
/// C c1 a 0 1p
/// G gm1 out 0 in 0 20m
/// PORT p1 a 50
/// ```
///
/// `PORT` takes an optional fourth value, the reference frequency in Hz used
/// to realize complex terminations (default 1 GHz).
pub fn parse_netlist(text: &str) -> Result<Netlist> {
    let mut net = Netlist::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let val = |t: &str| parse_value(t).ok_or_else(|| Error::parse(line_no, format!("bad value `{t}`")));
        let want = |n: usize| {
            if toks.len() == n {
                Ok(())
            } else {
                Err(Error::parse(line_no, format!("`{}` expects {} fields, got {}", toks[0], n - 1, toks.len() - 1)))
            }
        };
        let res = match toks[0] {
            "R" => want(5).and_then(|_| net.resistor(toks[1], toks[2], toks[3], val(toks[4])?).map(|_| ())),
            "L" => want(5).and_then(|_| net.inductor(toks[1], toks[2], toks[3], val(toks[4])?).map(|_| ())),
            "C" => want(5).and_then(|_| net.capacitor(toks[1], toks[2], toks[3], val(toks[4])?).map(|_| ())),
            "G" => want(7).and_then(|_| {
                net.vccs(toks[1], toks[2], toks[3], toks[4], toks[5], val(toks[6])?).map(|_| ())
            }),
            "PORT" => {
                if toks.len() != 4 && toks.len() != 5 {
                    Err(Error::parse(line_no, "`PORT` expects <name> <node> <z0> [fref]"))
                } else {
                    let fref = if toks.len() == 5 { val(toks[4])? } else { DEFAULT_PORT_FREF_HZ };
                    net.add_port(toks[1], toks[2], val(toks[3])?, fref).map(|_| ())
                }
            }
            other => Err(Error::parse(line_no, format!("unknown element type `{other}`"))),
        };
        res.map_err(|e| match e {
            Error::Parse { .. } => e,
            other => Error::parse(line_no, other.to_string()),
        })?;
    }
    net.validate()?;
    Ok(net)
}

/// Assembled pencil `(G + sC)`.
struct Mna {
    g: DMatrix<f64>,
    c: DMatrix<f64>,
    nodes: HashMap<String, usize>,
    /// Row/column of the series-probe branch current, when present.
    probe_branch: Option<usize>,
}

fn assemble(net: &Netlist, series_probe: Option<&str>) -> Result<Mna> {
    net.validate()?;
    let mut nodes: HashMap<String, usize> =
        net.nodes.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
    let n_nodes = net.nodes.len();
    let n_ind = net.elements.iter().filter(|e| matches!(e.kind, ElementKind::Inductor { .. })).count();
    let probe_extra = usize::from(series_probe.is_some());
    // the probe adds one internal node and one branch current
    let dim = n_nodes + n_ind + 2 * probe_extra;
    let mut g = DMatrix::<f64>::zeros(dim, dim);
    let mut c = DMatrix::<f64>::zeros(dim, dim);

    let probe_node = n_nodes; // internal node between source and element
    if let Some(name) = series_probe {
        let e = net.element(name).ok_or_else(|| Error::Unknown { kind: "element", name: name.into() })?;
        if e.ctrl.is_some() {
            return Err(Error::invalid(format!("voltage probe needs a two-terminal element, {name} is a VCCS")));
        }
        nodes.insert(format!("\u{0}probe:{name}"), probe_node);
    }
    let idx = |s: &str| -> Option<usize> { if s == GROUND { None } else { nodes.get(s).copied() } };

    let mut branch = n_nodes + 2 * probe_extra;
    let mut probe_branch = None;
    if series_probe.is_some() {
        probe_branch = Some(n_nodes + 1);
    }
    for e in &net.elements {
        let mut a = idx(&e.n1);
        let b = idx(&e.n2);
        if series_probe == Some(e.name.as_str()) {
            // source sits between the element's first terminal and the probe node
            let k = n_nodes + 1;
            if let Some(a0) = a {
                g[(a0, k)] += 1.0;
                g[(k, a0)] -= 1.0;
            }
            g[(probe_node, k)] -= 1.0;
            g[(k, probe_node)] += 1.0;
            a = Some(probe_node);
        }
        match e.kind {
            ElementKind::Resistor { ohms } => stamp2(&mut g, a, b, 1.0 / ohms),
            ElementKind::Capacitor { farad } => stamp2(&mut c, a, b, farad),
            ElementKind::Inductor { henry } => {
                let k = branch;
                branch += 1;
                if let Some(i) = a {
                    g[(i, k)] += 1.0;
                    g[(k, i)] += 1.0;
                }
                if let Some(j) = b {
                    g[(j, k)] -= 1.0;
                    g[(k, j)] -= 1.0;
                }
                c[(k, k)] -= henry;
            }
            ElementKind::Vccs { siemens } => {
                let (cp, cn) = e.ctrl.as_ref().expect("vccs has control nodes");
                let (cp, cn) = (idx(cp), idx(cn));
                for (out, so) in [(a, 1.0), (b, -1.0)] {
                    let Some(o) = out else { continue };
                    if let Some(p) = cp {
                        g[(o, p)] += so * siemens;
                    }
                    if let Some(q) = cn {
                        g[(o, q)] -= so * siemens;
                    }
                }
            }
        }
    }
    Ok(Mna { g, c, nodes, probe_branch })
}

fn stamp2(m: &mut DMatrix<f64>, a: Option<usize>, b: Option<usize>, v: f64) {
    if let Some(i) = a {
        m[(i, i)] += v;
    }
    if let Some(j) = b {
        m[(j, j)] += v;
    }
    if let (Some(i), Some(j)) = (a, b) {
        m[(i, j)] -= v;
        m[(j, i)] -= v;
    }
}

fn solve_at(mna: &Mna, omega: f64, rhs: &DMatrix<Complex64>) -> Option<DMatrix<Complex64>> {
    let dim = mna.g.nrows();
    let a = DMatrix::<Complex64>::from_fn(dim, dim, |i, j| {
        Complex64::new(mna.g[(i, j)], omega * mna.c[(i, j)])
    });
    let x = a.lu().solve(rhs)?;
    if x.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        Some(x)
    } else {
        None
    }
}

fn node_of(mna: &Mna, n: &str) -> Result<usize> {
    if n == GROUND {
        return Err(Error::invalid("cannot probe the ground node"));
    }
    mna.nodes.get(n).copied().ok_or_else(|| Error::Unknown { kind: "node", name: n.into() })
}

/// Sampled closed-loop response seen by one probe.
pub fn frequency_response(net: &Netlist, probe: &ProbeSpec, grid: &FrequencyGrid) -> Result<FrequencyResponseSet> {
    frequency_responses(net, std::slice::from_ref(probe), grid)
}

/// Responses for several probes on one grid, one port per probe in order.
/// Current and modal probes share one factorization per frequency.
pub fn frequency_responses(
    net: &Netlist,
    probes: &[ProbeSpec],
    grid: &FrequencyGrid,
) -> Result<FrequencyResponseSet> {
    for p in probes {
        p.validate()?;
    }
    let omegas = grid.omegas();
    let mut columns: Vec<Option<Vec<Complex64>>> = vec![None; probes.len()];

    // shunt-type probes: one pencil, many right-hand sides
    let shunt: Vec<usize> = (0..probes.len())
        .filter(|&i| !matches!(probes[i], ProbeSpec::BranchVoltage { .. }))
        .collect();
    if !shunt.is_empty() {
        let mna = assemble(net, None)?;
        let dim = mna.g.nrows();
        let mut rhs = DMatrix::<Complex64>::zeros(dim, shunt.len());
        let mut observe = Vec::with_capacity(shunt.len());
        for (col, &pi) in shunt.iter().enumerate() {
            match &probes[pi] {
                ProbeSpec::NodeCurrent { node } => {
                    let i = node_of(&mna, node)?;
                    rhs[(i, col)] = Complex64::new(1.0, 0.0);
                    observe.push(i);
                }
                ProbeSpec::Modal { nodes, phases_deg } => {
                    for (n, ph) in nodes.iter().zip(phases_deg) {
                        let i = node_of(&mna, n)?;
                        rhs[(i, col)] += unit_phasor(*ph);
                    }
                    observe.push(node_of(&mna, &nodes[0])?);
                }
                ProbeSpec::BranchVoltage { .. } => unreachable!(),
            }
        }
        let sols: Vec<DMatrix<Complex64>> = omegas
            .par_iter()
            .zip(grid.freqs_hz().par_iter())
            .map(|(&w, &f)| solve_at(&mna, w, &rhs).ok_or(Error::SingularAt { freq_hz: f }))
            .collect::<Result<_>>()?;
        for (col, &pi) in shunt.iter().enumerate() {
            columns[pi] = Some(sols.iter().map(|x| x[(observe[col], col)]).collect());
        }
    }
    for (pi, p) in probes.iter().enumerate() {
        let ProbeSpec::BranchVoltage { element } = p else { continue };
        let mna = assemble(net, Some(element))?;
        let k = mna.probe_branch.expect("series probe assembled");
        let dim = mna.g.nrows();
        let mut rhs = DMatrix::<Complex64>::zeros(dim, 1);
        rhs[(k, 0)] = Complex64::new(1.0, 0.0);
        let vals: Vec<Complex64> = omegas
            .par_iter()
            .zip(grid.freqs_hz().par_iter())
            .map(|(&w, &f)| {
                solve_at(&mna, w, &rhs).map(|x| x[(k, 0)]).ok_or(Error::SingularAt { freq_hz: f })
            })
            .collect::<Result<_>>()?;
        columns[pi] = Some(vals);
    }
    let ports = probes
        .iter()
        .zip(columns)
        .map(|(p, vals)| {
            Ok(PortResponse {
                label: PortLabel::new(p.to_string(), p.excitation())?,
                kind: p.kind(),
                values: vals.expect("every probe solved"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    FrequencyResponseSet::new(grid.clone(), ports)
}

fn unit_phasor(deg: f64) -> Complex64 {
    match deg {
        d if d == 0.0 => Complex64::new(1.0, 0.0),
        d if d == 90.0 => Complex64::new(0.0, 1.0),
        d if d == 180.0 => Complex64::new(-1.0, 0.0),
        d if d == 270.0 => Complex64::new(0.0, -1.0),
        d => {
            let (s, c) = d.to_radians().sin_cos();
            Complex64::new(c, s)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoleOptions {
    /// Generalized eigenvalues beyond this multiple of the largest element
    /// corner frequency are treated as infinite.
    pub infinite_cutoff: f64,
}

impl Default for PoleOptions {
    fn default() -> Self {
        PoleOptions { infinite_cutoff: 1e3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticPoles {
    /// Finite natural frequencies, rad/s, conjugate-closed.
    pub poles: Vec<Complex64>,
    /// Eigenvalues discarded as infinite (descriptor-system artifacts).
    pub discarded: usize,
}

/// Natural frequencies of the netlist: finite roots of `det(G + sC) = 0`.
pub fn analytic_poles(net: &Netlist) -> Result<AnalyticPoles> {
    analytic_poles_with(net, PoleOptions::default())
}

pub fn analytic_poles_with(net: &Netlist, opts: PoleOptions) -> Result<AnalyticPoles> {
    let mna = assemble(net, None)?;
    let dim = mna.g.nrows();
    if dim == 0 || mna.c.iter().all(|v| *v == 0.0) {
        // purely resistive: no dynamics; still reject an all-singular pencil
        if dim > 0 && mna.g.clone().lu().solve(&DVector::<f64>::zeros(dim)).is_none() {
            return Err(Error::SingularPencil);
        }
        return Ok(AnalyticPoles { poles: Vec::new(), discarded: dim });
    }
    let w_scale = net.max_corner_omega().max(f64::MIN_POSITIVE);
    let cutoff = opts.infinite_cutoff * w_scale;
    // (G + λC) x = 0  <=>  det(G - λ(-C)) = 0
    let neg_c = -&mna.c;
    match linalg::generalized_eigenvalues(&mna.g, &neg_c, w_scale, cutoff)? {
        Some((mut poles, discarded)) => {
            sort_poles(&mut poles);
            Ok(AnalyticPoles { poles, discarded })
        }
        None => Err(Error::SingularPencil),
    }
}

fn short_port(out: &Netlist, node: &str, port: &str) -> Result<Netlist> {
    let mut shorted = out.with_node_grounded(node)?;
    // the shorted port keeps its record but now sits on ground
    shorted.ports = out.ports.clone();
    for q in shorted.ports.iter_mut() {
        if q.name == port || q.node == node {
            q.node = GROUND.to_string();
        }
    }
    Ok(shorted)
}

/// Attach the termination for reflection coefficient `gamma` at `port`.
///
/// `gamma == 1` leaves the port open, `gamma == -1` grounds the port node;
/// anything else attaches `z0(1+γ)/(1-γ)` realized at the port's reference
/// frequency as R, L, C, series R-L or series R-C.
pub fn with_termination(net: &Netlist, port: &str, gamma: Complex64) -> Result<Netlist> {
    let p = net
        .port(port)
        .ok_or_else(|| Error::Unknown { kind: "port", name: port.into() })?
        .clone();
    if !(gamma.norm() <= 1.0 + 1e-12) {
        return Err(Error::invalid(format!("|gamma| = {} exceeds 1", gamma.norm())));
    }
    let prefix = format!("term:{port}:");
    let mut out = Netlist::new();
    for e in net.elements.iter().filter(|e| !e.name.starts_with(&prefix)) {
        out.add(e.clone())?;
    }
    out.nodes = net.nodes.iter().filter(|n| !n.starts_with(&prefix)).cloned().collect();
    out.ports = net.ports.clone();
    for q in out.ports.iter_mut() {
        if q.name == port {
            q.gamma = Some(gamma);
        }
    }
    let one = Complex64::new(1.0, 0.0);
    if gamma == one {
        return Ok(out);
    }
    if gamma == -one {
        return short_port(&out, &p.node, port);
    }
    let z = (one + gamma) / (one - gamma) * p.z0;
    let w = 2.0 * PI * p.f_ref_hz;
    let x_tol = 1e-12 * z.norm();
    let reactive = |out: &mut Netlist, a: &str, b: &str| -> Result<()> {
        if z.im > 0.0 {
            out.inductor(&format!("{prefix}l"), a, b, z.im / w)?;
        } else {
            out.capacitor(&format!("{prefix}c"), a, b, -1.0 / (w * z.im))?;
        }
        Ok(())
    };
    let has_r = z.re > x_tol;
    let has_x = z.im.abs() > x_tol;
    match (has_r, has_x) {
        (true, false) => {
            out.resistor(&format!("{prefix}r"), &p.node, GROUND, z.re)?;
        }
        (false, true) => reactive(&mut out, &p.node, GROUND)?,
        (true, true) => {
            let mid = format!("{prefix}mid");
            out.resistor(&format!("{prefix}r"), &p.node, &mid, z.re)?;
            reactive(&mut out, &mid, GROUND)?;
        }
        (false, false) => {
            return short_port(&out, &p.node, port);
        }
    }
    Ok(out)
}
