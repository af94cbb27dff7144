//! Seeded random physical circuits.
//!
//! Every operation is drawn with [`physicality::random_physical`]; incomes are
//! fed by `flat_prep` through a `readout(x, ?)` placeholder and outcomes go
//! through a placeholder into `flat_result`, so
//! [`engine::joint_distribution`](crate::engine::joint_distribution) has one
//! axis per pointer leg. Left-over system wires are closed by ignore results.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::circuit::{CircuitGraph, Port};
use crate::error::Result;
use crate::optensor::{KrausLegs, LegKind, OperatorTensor};
use crate::physicality;
use crate::types::{GaugeConfig, PointerType, SystemType};

/// Largest `N_in · N_out` (pointers included) of one drawn operation.
pub const MAX_OP_SIZE: usize = 24;
/// Most pointer legs, and so placeholders, in one circuit.
pub const MAX_POINTERS: usize = 3;

pub fn sample_types() -> (Vec<SystemType>, Vec<PointerType>) {
    let systems = vec![SystemType::new("q", 2).expect("dim"), SystemType::new("t", 3).expect("dim")];
    let pointers = vec![PointerType::new("x", 2).expect("card"), PointerType::new("y", 3).expect("card")];
    (systems, pointers)
}

#[derive(Debug, Clone)]
pub struct RandomCircuit {
    pub graph: CircuitGraph,
    /// Drawn operations, not counting flats, readouts and ignore results.
    pub operations: usize,
}

fn size(spec: &KrausLegs) -> usize {
    let s: usize = spec.inputs.iter().chain(&spec.outputs).map(|a| a.dim()).product();
    let p: usize = spec.incomes.iter().chain(&spec.outcomes).map(|x| x.card()).product();
    s * p
}

/// A closed circuit of `ops` random physical operations (clamped to 1..=8).
pub fn random_circuit(seed: u64, ops: usize, g: &GaugeConfig) -> Result<RandomCircuit> {
    let ops = ops.clamp(1, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (systems, pointers) = sample_types();
    let mut c = CircuitGraph::new(g);
    let mut frontier: Vec<(Port, SystemType)> = Vec::new();
    let mut n_ptr = 0;
    for i in 0..ops {
        let spec = loop {
            let k_in = if frontier.is_empty() { 0 } else { rng.random_range(0..=frontier.len().min(2)) };
            let last = i + 1 == ops;
            let k_out = if last { rng.random_range(0..=1) } else { rng.random_range(0..=2) };
            let mut spec = KrausLegs::default();
            let mut picked = Vec::new();
            while picked.len() < k_in {
                let j = rng.random_range(0..frontier.len());
                if !picked.contains(&j) {
                    picked.push(j);
                }
            }
            spec.inputs = picked.iter().map(|&j| frontier[j].1.clone()).collect();
            spec.outputs = (0..k_out).map(|_| systems[rng.random_range(0..systems.len())].clone()).collect();
            if n_ptr < MAX_POINTERS && rng.random_bool(0.4) {
                spec.incomes.push(pointers[rng.random_range(0..pointers.len())].clone());
            }
            if n_ptr + spec.incomes.len() < MAX_POINTERS && rng.random_bool(0.4) {
                spec.outcomes.push(pointers[rng.random_range(0..pointers.len())].clone());
            }
            let empty = spec.inputs.is_empty() && spec.outputs.is_empty();
            if !empty && size(&spec) <= MAX_OP_SIZE {
                let mut sorted = picked.clone();
                sorted.sort_unstable_by(|a, b| b.cmp(a));
                let ports: Vec<Port> = picked.iter().map(|&j| frontier[j].0.clone()).collect();
                for j in sorted {
                    frontier.remove(j);
                }
                break (spec, ports);
            }
        };
        let (spec, in_ports) = spec;
        let t = physicality::random_physical(&spec, rng.random(), g)?;
        let id = format!("op{i}");
        c.add_tensor(&id, t)?;
        for (k, p) in in_ports.into_iter().enumerate() {
            c.connect(p, c.port(&id, LegKind::SysIn, k)?)?;
        }
        for (k, b) in spec.outputs.iter().enumerate() {
            frontier.push((c.port(&id, LegKind::SysOut, k)?, b.clone()));
        }
        for (k, x) in spec.incomes.iter().enumerate() {
            let (f, r) = (format!("{id}_flat{k}"), format!("{id}_in{k}"));
            c.add_tensor(&f, OperatorTensor::flat_prep(x, g))?;
            c.add_placeholder(&r, x)?;
            c.connect_kind(&f, LegKind::PtrOut, 0, &r, 0)?;
            c.connect_kind(&r, LegKind::PtrOut, 0, &id, k)?;
            n_ptr += 1;
        }
        for (k, y) in spec.outcomes.iter().enumerate() {
            let (r, f) = (format!("{id}_out{k}"), format!("{id}_flat_out{k}"));
            c.add_placeholder(&r, y)?;
            c.add_tensor(&f, OperatorTensor::flat_result(y, g))?;
            c.connect_kind(&id, LegKind::PtrOut, k, &r, 0)?;
            c.connect_kind(&r, LegKind::PtrOut, 0, &f, 0)?;
            n_ptr += 1;
        }
    }
    for (k, (p, a)) in frontier.into_iter().enumerate() {
        let id = format!("close{k}");
        c.add_tensor(&id, OperatorTensor::ignore_result(&a, g))?;
        c.connect(p, c.port(&id, LegKind::SysIn, 0)?)?;
    }
    Ok(RandomCircuit { graph: c, operations: ops })
}

/// `random_circuit` with the operation count drawn from 3..=8.
pub fn random_desk_circuit(seed: u64, g: &GaugeConfig) -> Result<RandomCircuit> {
    let ops = ChaCha8Rng::seed_from_u64(seed ^ 0x0c1c_0000).random_range(3..=8);
    random_circuit(seed, ops, g)
}
