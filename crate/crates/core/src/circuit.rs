//! Circuit and fragment graphs: typed wiring, acyclicity, midcome
//! normalization and whole-circuit time reversal.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::optensor::{Leg, LegKind, OperatorTensor, Role};
use crate::types::{GaugeConfig, PointerType};

/// A node is either a concrete tensor or a readout whose value is left open
/// for [`crate::engine::joint_distribution`] to enumerate.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeContent {
    Tensor(Arc<OperatorTensor>),
    /// Legs: income then outcome of the same pointer type.
    Placeholder(PointerType),
}

impl NodeContent {
    pub fn legs(&self) -> Vec<Leg> {
        match self {
            NodeContent::Tensor(t) => t.legs().to_vec(),
            NodeContent::Placeholder(x) => vec![Leg::ptr_in(x), Leg::ptr_out(x)],
        }
    }

    pub fn tensor(&self) -> Option<&OperatorTensor> {
        match self {
            NodeContent::Tensor(t) => Some(t),
            NodeContent::Placeholder(_) => None,
        }
    }

    pub fn role(&self) -> Option<Role> {
        self.tensor().map(|t| t.role())
    }
}

impl From<OperatorTensor> for NodeContent {
    fn from(t: OperatorTensor) -> Self {
        NodeContent::Tensor(Arc::new(t))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Port {
    pub node: String,
    pub leg: usize,
}

impl Port {
    pub fn new(node: &str, leg: usize) -> Self {
        Port { node: node.to_string(), leg }
    }
}

impl fmt::Display for Port {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.node, self.leg)
    }
}

/// Source is an output/outcome leg, target an input/income leg.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Wire {
    pub from: Port,
    pub to: Port,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphKind {
    Fragment,
    Circuit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitGraph {
    nodes: BTreeMap<String, NodeContent>,
    wires: BTreeSet<Wire>,
    gauge: GaugeConfig,
}

impl CircuitGraph {
    pub fn new(gauge: &GaugeConfig) -> Self {
        CircuitGraph { nodes: BTreeMap::new(), wires: BTreeSet::new(), gauge: gauge.clone() }
    }

    pub fn gauge(&self) -> &GaugeConfig {
        &self.gauge
    }

    pub fn nodes(&self) -> &BTreeMap<String, NodeContent> {
        &self.nodes
    }

    pub fn wires(&self) -> &BTreeSet<Wire> {
        &self.wires
    }

    pub fn node(&self, id: &str) -> Result<&NodeContent> {
        self.nodes.get(id).ok_or_else(|| Error::Unknown(format!("node `{id}`")))
    }

    pub fn add_node(&mut self, id: &str, content: impl Into<NodeContent>) -> Result<()> {
        if self.nodes.contains_key(id) {
            return Err(Error::Registry(format!("duplicate node id `{id}`")));
        }
        self.nodes.insert(id.to_string(), content.into());
        Ok(())
    }

    pub fn add_tensor(&mut self, id: &str, t: OperatorTensor) -> Result<()> {
        self.add_node(id, NodeContent::Tensor(Arc::new(t)))
    }

    pub fn add_placeholder(&mut self, id: &str, x: &PointerType) -> Result<()> {
        self.add_node(id, NodeContent::Placeholder(x.clone()))
    }

    /// Replaces a node's content; the new content must expose the same legs.
    pub fn substitute(&mut self, id: &str, content: impl Into<NodeContent>) -> Result<()> {
        let content = content.into();
        let old = self.node(id)?;
        if old.legs() != content.legs() {
            return Err(Error::TypeMismatch(format!("substitute for `{id}` has different legs")));
        }
        self.nodes.insert(id.to_string(), content);
        Ok(())
    }

    /// Resolves `(node, kind, k)` to the `k`-th leg of that kind.
    pub fn port(&self, node: &str, kind: LegKind, k: usize) -> Result<Port> {
        let legs = self.node(node)?.legs();
        let idx = (0..legs.len())
            .filter(|&i| legs[i].kind() == kind)
            .nth(k)
            .ok_or_else(|| Error::Unknown(format!("node `{node}` has no {kind}[{k}] leg")))?;
        Ok(Port::new(node, idx))
    }

    fn leg_at(&self, p: &Port) -> Result<Leg> {
        self.node(&p.node)?
            .legs()
            .get(p.leg)
            .cloned()
            .ok_or_else(|| Error::Unknown(format!("leg {p}")))
    }

    pub fn is_wired(&self, p: &Port) -> bool {
        self.wires.iter().any(|w| &w.from == p || &w.to == p)
    }

    pub fn connect(&mut self, from: Port, to: Port) -> Result<()> {
        let lf = self.leg_at(&from)?;
        let lt = self.leg_at(&to)?;
        let ok = matches!(
            (lf.kind(), lt.kind()),
            (LegKind::SysOut, LegKind::SysIn) | (LegKind::PtrOut, LegKind::PtrIn)
        );
        if !ok {
            return Err(Error::KindMismatch(format!("{from} ({lf}) -> {to} ({lt})")));
        }
        if lf.ty() != lt.ty() {
            return Err(Error::TypeMismatch(format!("{from} ({lf}) -> {to} ({lt})")));
        }
        for p in [&from, &to] {
            if self.is_wired(p) {
                return Err(Error::AlreadyWired(p.to_string()));
            }
        }
        if from.node == to.node || self.reaches(&to.node, &from.node) {
            return Err(Error::WouldCreateCycle(format!("{from} -> {to}")));
        }
        self.wires.insert(Wire { from, to });
        Ok(())
    }

    /// Convenience: wire the `i`-th output-side leg of `a` into the `j`-th
    /// input-side leg of `b` of the matching category.
    pub fn connect_kind(&mut self, a: &str, out_kind: LegKind, i: usize, b: &str, j: usize) -> Result<()> {
        let in_kind = out_kind.reversed();
        let from = self.port(a, out_kind, i)?;
        let to = self.port(b, in_kind, j)?;
        self.connect(from, to)
    }

    fn successors<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.wires.iter().filter(move |w| w.from.node == id).map(|w| w.to.node.as_str())
    }

    fn reaches(&self, from: &str, target: &str) -> bool {
        let mut seen = BTreeSet::new();
        let mut stack = vec![from];
        while let Some(n) = stack.pop() {
            if n == target {
                return true;
            }
            if seen.insert(n) {
                stack.extend(self.successors(n));
            }
        }
        false
    }

    pub fn open_ports(&self) -> Vec<Port> {
        let mut out = Vec::new();
        for (id, c) in &self.nodes {
            for i in 0..c.legs().len() {
                let p = Port::new(id, i);
                if !self.is_wired(&p) {
                    out.push(p);
                }
            }
        }
        out
    }

    /// Open legs as `(port, leg)` in node-id then leg order.
    pub fn signature(&self) -> Vec<(Port, Leg)> {
        self.open_ports()
            .into_iter()
            .map(|p| {
                let l = self.leg_at(&p).expect("open port exists");
                (p, l)
            })
            .collect()
    }

    pub fn kind(&self) -> GraphKind {
        if self.open_ports().is_empty() {
            GraphKind::Circuit
        } else {
            GraphKind::Fragment
        }
    }

    pub fn placeholders(&self) -> Vec<(String, PointerType)> {
        self.nodes
            .iter()
            .filter_map(|(id, c)| match c {
                NodeContent::Placeholder(x) => Some((id.clone(), x.clone())),
                _ => None,
            })
            .collect()
    }

    /// Kahn layers, sources first; ids sorted inside a layer.
    pub fn layers(&self) -> Vec<Vec<String>> {
        let mut indeg: BTreeMap<&str, usize> = self.nodes.keys().map(|k| (k.as_str(), 0)).collect();
        let mut edges: BTreeSet<(&str, &str)> = BTreeSet::new();
        for w in &self.wires {
            if edges.insert((w.from.node.as_str(), w.to.node.as_str())) {
                *indeg.get_mut(w.to.node.as_str()).expect("wired node exists") += 1;
            }
        }
        let mut layers = Vec::new();
        let mut current: Vec<&str> = indeg.iter().filter(|(_, &d)| d == 0).map(|(k, _)| *k).collect();
        while !current.is_empty() {
            let mut next = BTreeSet::new();
            for &n in &current {
                for &(a, b) in edges.iter().filter(|(a, _)| *a == n) {
                    let _ = a;
                    let d = indeg.get_mut(b).expect("exists");
                    *d -= 1;
                    if *d == 0 {
                        next.insert(b);
                    }
                }
            }
            layers.push(current.iter().map(|s| s.to_string()).collect());
            current = next.into_iter().collect();
        }
        layers
    }

    pub fn incoming(&self, id: &str) -> Vec<&Wire> {
        self.wires.iter().filter(|w| w.to.node == id).collect()
    }

    pub fn outgoing(&self, id: &str) -> Vec<&Wire> {
        self.wires.iter().filter(|w| w.from.node == id).collect()
    }

    /// Splits every midcome readout into an outcome readout closed by a flat
    /// result and an income readout fed by a flat preparation. Returns the
    /// new graph and the factor `Π N_x` with `value(self) = factor · value(new)`.
    pub fn normalize_midcomes(&self) -> (CircuitGraph, f64) {
        let mut g = self.clone();
        let mut factor = 1.0;
        for (id, content) in &self.nodes {
            let value = match content.role() {
                Some(Role::Readout(v)) => v,
                _ => continue,
            };
            let inc = self.incoming(id);
            let out = self.outgoing(id);
            let (Some(w_in), Some(w_out)) = (inc.first(), out.first()) else { continue };
            let src_flat = self.nodes[&w_in.from.node].role() == Some(Role::FlatPrep);
            let dst_flat = self.nodes[&w_out.to.node].role() == Some(Role::FlatResult);
            if src_flat || dst_flat {
                continue;
            }
            let x = content.legs()[0].pointer().expect("readout is a pointer box").clone();
            let (w_in, w_out) = ((*w_in).clone(), (*w_out).clone());
            let gauge = &self.gauge;
            let readout = || OperatorTensor::readout(&x, value, gauge).expect("value in range");
            g.nodes.remove(id);
            g.wires.remove(&w_in);
            g.wires.remove(&w_out);
            let (o, r, p, i) =
                (format!("{id}#o"), format!("{id}#r"), format!("{id}#p"), format!("{id}#i"));
            g.nodes.insert(o.clone(), readout().into());
            g.nodes.insert(r.clone(), OperatorTensor::flat_result(&x, gauge).into());
            g.nodes.insert(p.clone(), OperatorTensor::flat_prep(&x, gauge).into());
            g.nodes.insert(i.clone(), readout().into());
            g.wires.insert(Wire { from: w_in.from, to: Port::new(&o, 0) });
            g.wires.insert(Wire { from: Port::new(&o, 1), to: Port::new(&r, 0) });
            g.wires.insert(Wire { from: Port::new(&p, 0), to: Port::new(&i, 0) });
            g.wires.insert(Wire { from: Port::new(&i, 1), to: w_out.to });
            factor *= x.card() as f64;
        }
        (g, factor)
    }

    /// Every node time-reversed and every wire flipped.
    pub fn time_reverse(&self) -> CircuitGraph {
        let mut nodes = BTreeMap::new();
        let mut leg_maps: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (id, c) in &self.nodes {
            match c {
                NodeContent::Tensor(t) => {
                    nodes.insert(id.clone(), NodeContent::Tensor(Arc::new(t.time_reverse())));
                    leg_maps.insert(id, (0..t.legs().len()).collect());
                }
                NodeContent::Placeholder(x) => {
                    nodes.insert(id.clone(), NodeContent::Placeholder(x.clone()));
                    leg_maps.insert(id, vec![1, 0]);
                }
            }
        }
        let wires = self
            .wires
            .iter()
            .map(|w| Wire {
                from: Port::new(&w.to.node, leg_maps[w.to.node.as_str()][w.to.leg]),
                to: Port::new(&w.from.node, leg_maps[w.from.node.as_str()][w.from.leg]),
            })
            .collect();
        CircuitGraph { nodes, wires, gauge: self.gauge.clone() }
    }

    /// Replaces node `id` by `fragment`, whose open port `ports[i]` takes the
    /// place of leg `i`. Fragment nodes are renamed `{id}_{node}`.
    pub fn splice(&self, id: &str, fragment: &CircuitGraph, ports: &[Port]) -> Result<CircuitGraph> {
        let legs = self.node(id)?.legs();
        if ports.len() != legs.len() {
            return Err(Error::Shape(format!("`{id}` has {} legs, got {} ports", legs.len(), ports.len())));
        }
        for (p, l) in ports.iter().zip(&legs) {
            if &fragment.leg_at(p)? != l || fragment.is_wired(p) {
                return Err(Error::TypeMismatch(format!("port {p} cannot stand for {l} of `{id}`")));
            }
        }
        let rename = |p: &Port| Port::new(&format!("{id}_{}", p.node), p.leg);
        let mut g = self.clone();
        g.nodes.remove(id);
        g.wires.retain(|w| w.from.node != id && w.to.node != id);
        for (sub, c) in &fragment.nodes {
            g.add_node(&format!("{id}_{sub}"), c.clone())?;
        }
        for w in &fragment.wires {
            g.wires.insert(Wire { from: rename(&w.from), to: rename(&w.to) });
        }
        for w in &self.wires {
            let from = if w.from.node == id { rename(&ports[w.from.leg]) } else { w.from.clone() };
            let to = if w.to.node == id { rename(&ports[w.to.leg]) } else { w.to.clone() };
            if w.from.node == id || w.to.node == id {
                g.connect(from, to)?;
            }
        }
        Ok(g)
    }

    pub fn to_gauge(&self, g: &GaugeConfig) -> CircuitGraph {
        let nodes = self
            .nodes
            .iter()
            .map(|(id, c)| {
                let c = match c {
                    NodeContent::Tensor(t) => NodeContent::Tensor(Arc::new(t.to_gauge(g))),
                    p => p.clone(),
                };
                (id.clone(), c)
            })
            .collect();
        CircuitGraph { nodes, wires: self.wires.clone(), gauge: g.clone() }
    }
}
