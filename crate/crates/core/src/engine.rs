//! Circuit evaluation: whole-network contraction, foliated contraction in
//! either time direction, probabilities, joint tables and conditional frames.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{CircuitGraph, NodeContent, Port};
use crate::error::{Error, Result};
use crate::linalg::{self, for_each_index, ComplexTensor, C64, ONE};
use crate::optensor::{shape_for, OperatorTensor, Role};
use crate::types::PointerType;

pub const PROB_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone)]
struct Factor {
    t: ComplexTensor,
    labels: Vec<usize>,
}

struct Network {
    factors: Vec<(String, Factor)>,
    extents: Vec<usize>,
    open: Vec<usize>,
}

fn build_network(g: &CircuitGraph) -> Result<Network> {
    let mut port_labels: BTreeMap<Port, Vec<usize>> = BTreeMap::new();
    let mut extents = Vec::new();
    let fresh = |extents: &mut Vec<usize>, n: usize, e: usize| -> Vec<usize> {
        let start = extents.len();
        extents.extend(std::iter::repeat_n(e, n));
        (start..start + n).collect()
    };
    for w in g.wires() {
        let leg = g.node(&w.from.node)?.legs()[w.from.leg].clone();
        let labels = fresh(&mut extents, leg.n_axes(), leg.extent());
        port_labels.insert(w.from.clone(), labels.clone());
        port_labels.insert(w.to.clone(), labels);
    }
    let mut open = Vec::new();
    for (p, leg) in g.signature() {
        let labels = fresh(&mut extents, leg.n_axes(), leg.extent());
        open.extend(&labels);
        port_labels.insert(p, labels);
    }
    let mut factors = Vec::new();
    for (id, c) in g.nodes() {
        let t = match c {
            NodeContent::Tensor(t) => t.data().clone(),
            NodeContent::Placeholder(_) => return Err(Error::UnresolvedPlaceholder(id.clone())),
        };
        let mut labels = Vec::new();
        for i in 0..c.legs().len() {
            labels.extend(&port_labels[&Port::new(id, i)]);
        }
        factors.push((id.clone(), Factor { t, labels }));
    }
    Ok(Network { factors, extents, open })
}

fn merge(a: &Factor, b: &Factor) -> Result<Factor> {
    let mut axes_a = Vec::new();
    let mut axes_b = Vec::new();
    for (i, l) in a.labels.iter().enumerate() {
        if let Some(j) = b.labels.iter().position(|m| m == l) {
            axes_a.push(i);
            axes_b.push(j);
        }
    }
    let t = linalg::contract(&a.t, &axes_a, &b.t, &axes_b)?;
    let labels = a
        .labels
        .iter()
        .filter(|l| !b.labels.contains(l))
        .chain(b.labels.iter().filter(|l| !a.labels.contains(l)))
        .copied()
        .collect();
    Ok(Factor { t, labels })
}

fn finish(f: Factor, open: &[usize]) -> Result<ComplexTensor> {
    let perm: Vec<usize> = open
        .iter()
        .map(|l| f.labels.iter().position(|m| m == l).expect("open label survives"))
        .collect();
    f.t.permute(&perm)
}

fn contract_greedy(net: Network) -> Result<ComplexTensor> {
    let mut live: Vec<Option<Factor>> = net.factors.into_iter().map(|(_, f)| Some(f)).collect();
    loop {
        // label -> factors holding it
        let mut holders: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, f) in live.iter().enumerate() {
            if let Some(f) = f {
                for &l in &f.labels {
                    holders.entry(l).or_default().push(i);
                }
            }
        }
        let pairs: BTreeSet<(usize, usize)> =
            holders.values().filter(|h| h.len() == 2).map(|h| (h[0], h[1])).collect();
        let result_size = |&(i, j): &(usize, usize)| -> usize {
            let (a, b) = (live[i].as_ref().expect("live"), live[j].as_ref().expect("live"));
            let only = |x: &Factor, y: &Factor| -> usize {
                x.labels.iter().filter(|l| !y.labels.contains(l)).map(|&l| net.extents[l]).product()
            };
            only(a, b).saturating_mul(only(b, a))
        };
        let Some((i, j)) = pairs.iter().min_by_key(|p| (result_size(p), **p)).copied() else { break };
        let merged = merge(live[i].as_ref().expect("live"), live[j].as_ref().expect("live"))?;
        live[i] = Some(merged);
        live[j] = None;
    }
    let mut acc = Factor { t: ComplexTensor::scalar(ONE), labels: vec![] };
    for f in live.into_iter().flatten() {
        acc = merge(&acc, &f)?;
    }
    finish(acc, &net.open)
}

/// Greedy contraction of plain tensors whose axes carry labels; a label
/// shared by two tensors is summed, the rest stay open in `open` order.
pub(crate) fn contract_labelled(
    tensors: Vec<(ComplexTensor, Vec<usize>)>,
    extents: Vec<usize>,
    open: Vec<usize>,
) -> Result<ComplexTensor> {
    let factors = tensors.into_iter().map(|(t, labels)| (String::new(), Factor { t, labels })).collect();
    contract_greedy(Network { factors, extents, open })
}

fn closed_scalar(t: ComplexTensor) -> Result<C64> {
    t.to_scalar().ok_or_else(|| Error::NotClosed("result has open axes".into()))
}

fn require_closed(g: &CircuitGraph) -> Result<()> {
    let open = g.open_ports();
    if open.is_empty() {
        Ok(())
    } else {
        let names: Vec<String> = open.iter().map(|p| p.to_string()).collect();
        Err(Error::NotClosed(names.join(", ")))
    }
}

/// Full contraction of a closed circuit.
pub fn evaluate(g: &CircuitGraph) -> Result<C64> {
    require_closed(g)?;
    let net = build_network(g)?;
    closed_scalar(contract_greedy(net)?)
}

/// Layer-by-layer contraction with an explicit frontier tensor, sweeping
/// forwards (sources first) or backwards (sinks first).
pub fn evaluate_foliated(g: &CircuitGraph, direction: Direction) -> Result<C64> {
    require_closed(g)?;
    let net = build_network(g)?;
    let mut by_id: BTreeMap<String, Factor> = net.factors.into_iter().collect();
    let mut layers = g.layers();
    if direction == Direction::Backward {
        layers.reverse();
    }
    let mut frontier = Factor { t: ComplexTensor::scalar(ONE), labels: vec![] };
    for layer in layers {
        for id in layer {
            let f = by_id.remove(&id).expect("node in network");
            frontier = merge(&frontier, &f)?;
        }
    }
    closed_scalar(finish(frontier, &net.open)?)
}

/// Contracts a fragment to a single tensor whose legs are the open legs in
/// node-id, then leg, order.
pub fn contract_fragment(g: &CircuitGraph) -> Result<OperatorTensor> {
    let legs: Vec<_> = g.signature().into_iter().map(|(_, l)| l).collect();
    let net = build_network(g)?;
    let data = contract_greedy(net)?;
    let data = if legs.is_empty() { data } else { data.reshape(&shape_for(&legs))? };
    OperatorTensor::from_parts(legs, data, g.gauge().clone(), Role::Generic)
}

fn to_probability(v: C64) -> Result<f64> {
    if v.im.abs() > PROB_TOL {
        return Err(Error::ImaginaryResidue(v.im));
    }
    if v.re < -PROB_TOL {
        return Err(Error::NegativeProbability(v.re));
    }
    Ok(v.re.clamp(0.0, 1.0 + PROB_TOL))
}

pub fn probability(g: &CircuitGraph) -> Result<f64> {
    to_probability(evaluate(g)?)
}

pub fn probability_foliated(g: &CircuitGraph, direction: Direction) -> Result<f64> {
    to_probability(evaluate_foliated(g, direction)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisRole {
    Income,
    Outcome,
}

impl fmt::Display for AxisRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AxisRole::Income => "income",
            AxisRole::Outcome => "outcome",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableAxis {
    /// Placeholder node id.
    pub node: String,
    pub pointer: PointerType,
    pub role: AxisRole,
}

/// Joint probabilities indexed by outcome combination (rows) and income
/// combination (columns). Each side is ordered by placeholder id, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    pub incomes: Vec<TableAxis>,
    pub outcomes: Vec<TableAxis>,
    pub values: Vec<f64>,
}

fn card_product(axes: &[TableAxis]) -> usize {
    axes.iter().map(|a| a.pointer.card()).product()
}

fn combos(axes: &[TableAxis]) -> Vec<Vec<usize>> {
    let cards: Vec<usize> = axes.iter().map(|a| a.pointer.card()).collect();
    let mut out = Vec::new();
    for_each_index(&cards, |i| out.push(i.to_vec()));
    out
}

impl JointTable {
    pub fn n_rows(&self) -> usize {
        card_product(&self.outcomes)
    }

    pub fn n_cols(&self) -> usize {
        card_product(&self.incomes)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols() + col]
    }

    pub fn row_combos(&self) -> Vec<Vec<usize>> {
        combos(&self.outcomes)
    }

    pub fn col_combos(&self) -> Vec<Vec<usize>> {
        combos(&self.incomes)
    }

    /// Sum over incomes for each outcome combination.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows()).map(|r| (0..self.n_cols()).map(|c| self.get(r, c)).sum()).collect()
    }

    /// Sum over outcomes for each income combination.
    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.n_cols()).map(|c| (0..self.n_rows()).map(|r| self.get(r, c)).sum()).collect()
    }

    pub fn matrix(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows()).map(|r| (0..self.n_cols()).map(|c| self.get(r, c)).collect()).collect()
    }

    pub fn axes(&self) -> impl Iterator<Item = &TableAxis> {
        self.outcomes.iter().chain(&self.incomes)
    }
}

/// Substitutes concrete readouts for placeholders.
pub fn resolve(g: &CircuitGraph, values: &BTreeMap<String, usize>) -> Result<CircuitGraph> {
    let mut out = g.clone();
    for (id, x) in g.placeholders() {
        if let Some(&v) = values.get(&id) {
            out.substitute(&id, OperatorTensor::readout(&x, v, g.gauge())?)?;
        }
    }
    Ok(out)
}

fn classify(g: &CircuitGraph, id: &str, x: &PointerType) -> Result<TableAxis> {
    let fed_by_flat = g
        .incoming(id)
        .first()
        .map(|w| g.nodes()[&w.from.node].role() == Some(Role::FlatPrep))
        .unwrap_or(false);
    let feeds_flat = g
        .outgoing(id)
        .first()
        .map(|w| g.nodes()[&w.to.node].role() == Some(Role::FlatResult))
        .unwrap_or(false);
    let role = if fed_by_flat {
        AxisRole::Income
    } else if feeds_flat {
        AxisRole::Outcome
    } else {
        return Err(Error::UnresolvedPlaceholder(format!(
            "placeholder `{id}` is not flanked by a flat preparation or flat result"
        )));
    };
    Ok(TableAxis { node: id.to_string(), pointer: x.clone(), role })
}

/// Enumerates every placeholder assignment, one probability per cell.
pub fn joint_distribution(g: &CircuitGraph) -> Result<JointTable> {
    require_closed(g)?;
    let mut incomes = Vec::new();
    let mut outcomes = Vec::new();
    for (id, x) in g.placeholders() {
        let ax = classify(g, &id, &x)?;
        match ax.role {
            AxisRole::Income => incomes.push(ax),
            AxisRole::Outcome => outcomes.push(ax),
        }
    }
    let rows = combos(&outcomes);
    let cols = combos(&incomes);
    let cells: Vec<(usize, usize)> =
        (0..rows.len()).flat_map(|r| (0..cols.len()).map(move |c| (r, c))).collect();
    let values: Vec<f64> = cells
        .par_iter()
        .map(|&(r, c)| {
            let mut assign = BTreeMap::new();
            for (ax, &v) in outcomes.iter().zip(&rows[r]) {
                assign.insert(ax.node.clone(), v);
            }
            for (ax, &v) in incomes.iter().zip(&cols[c]) {
                assign.insert(ax.node.clone(), v);
            }
            probability(&resolve(g, &assign)?)
        })
        .collect::<Result<_>>()?;
    Ok(JointTable { incomes, outcomes, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Forward,
    Backward,
    Symmetric,
}

impl Frame {
    /// The placeholder ids a frame conditions on.
    pub fn natural_condition(self, table: &JointTable) -> BTreeSet<String> {
        let pick = |axes: &[TableAxis]| axes.iter().map(|a| a.node.clone()).collect();
        match self {
            Frame::Forward => pick(&table.incomes),
            Frame::Backward => pick(&table.outcomes),
            Frame::Symmetric => BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameTable {
    pub frame: Frame,
    pub table: JointTable,
}

/// Forward: `p(outcomes | incomes) = N_incomes · joint`. Backward:
/// `p(incomes | outcomes) = N_outcomes · joint`. Symmetric: the joint.
pub fn conditional(table: &JointTable, condition: &BTreeSet<String>, frame: Frame) -> Result<FrameTable> {
    let expected = frame.natural_condition(table);
    if &expected != condition {
        return Err(Error::Frame(format!(
            "{frame:?} frame conditions on {expected:?}, got {condition:?}"
        )));
    }
    let scale = match frame {
        Frame::Forward => table.n_cols() as f64,
        Frame::Backward => table.n_rows() as f64,
        Frame::Symmetric => 1.0,
    };
    let mut t = table.clone();
    for v in &mut t.values {
        *v *= scale;
    }
    Ok(FrameTable { frame, table: t })
}
