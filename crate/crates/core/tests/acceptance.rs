//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use timesym::circuit::{CircuitGraph, NodeContent, Port};
use timesym::classical::{self, ClassicalChannel};
use timesym::dsl::{self, CircuitFile};
use timesym::duotensor::{self, Color};
use timesym::engine::{self, Direction, Frame};
use timesym::linalg::{self, ComplexTensor, RealMatrix};
use timesym::optensor::{KrausLegs, KrausOp, LegKind, OperatorTensor};
use timesym::physicality::{self, CAUSAL_TOL};
use timesym::samples;
use timesym::types::{GaugeConfig, GaugePreset, PointerType, SystemType};

type Outcome = Result<String, String>;

fn gauges() -> [(&'static str, GaugeConfig); 3] {
    [
        ("forward", GaugeConfig::forward()),
        ("backward", GaugeConfig::backward()),
        ("symmetric", GaugeConfig::symmetric()),
    ]
}

fn fixture(name: &str) -> CircuitFile {
    let path = format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    dsl::parse(&std::fs::read_to_string(&path).expect("fixture")).expect("fixture parses")
}

fn graph(f: &CircuitFile, name: &str) -> CircuitGraph {
    f.circuit(name).expect("circuit").graph.clone()
}

/// Seeded readout values for every placeholder.
fn resolve_seeded(g: &CircuitGraph, seed: u64) -> CircuitGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa11_0000);
    let values: BTreeMap<String, usize> =
        g.placeholders().into_iter().map(|(id, x)| (id, rng.random_range(0..x.card()))).collect();
    engine::resolve(g, &values).expect("resolve")
}

fn fixture_circuits() -> Vec<(String, CircuitGraph)> {
    [("spin.tsl", "main"), ("teleportation.tsl", "main"), ("midcome.tsl", "main"), ("amplitude_damping.tsl", "main")]
        .iter()
        .map(|(f, c)| (format!("{f}:{c}"), graph(&fixture(f), c)))
        .collect()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 1 ---------------------------------------------------------------------------

fn spin_example() -> Outcome {
    let f = fixture("spin.tsl");
    let table = engine::joint_distribution(&graph(&f, "table")).map_err(|e| e.to_string())?;
    let cond = engine::conditional(&table, &Frame::Forward.natural_condition(&table), Frame::Forward)
        .map_err(|e| e.to_string())?;
    let expected = [[7.0 / 8.0, 1.0 / 8.0], [1.0 / 8.0, 7.0 / 8.0]];
    let mut err: f64 = 0.0;
    for v in 0..2 {
        for u in 0..2 {
            err = err.max((cond.table.get(v, u) - expected[v][u]).abs());
        }
    }
    let joint = RealMatrix::from_rows(&table.matrix()).map_err(|e| e.to_string())?;
    let ch = ClassicalChannel::from_joint(&joint).map_err(|e| e.to_string())?;
    let fwd = classical::forward_evolve(&[1.0, 0.0], &ch).map_err(|e| e.to_string())?;
    let bwd = classical::backward_evolve(&fwd, &ch).map_err(|e| e.to_string())?;
    let err_f = (fwd[0] - 7.0 / 8.0).abs().max((fwd[1] - 1.0 / 8.0).abs());
    let err_b = (bwd[0] - 50.0 / 64.0).abs().max((bwd[1] - 14.0 / 64.0).abs());
    check(
        err <= 1e-12 && err_f <= 1e-12 && err_b <= 1e-12,
        format!("conditional err {err:.1e}, forward err {err_f:.1e}, backward err {err_b:.1e}"),
    )
}

// 2, 3 ------------------------------------------------------------------------

const N_RANDOM: u64 = 100;

fn random_circuits(g: &GaugeConfig) -> Vec<CircuitGraph> {
    (0..N_RANDOM).map(|s| samples::random_desk_circuit(s, g).expect("sample").graph).collect()
}

fn direction_independence(circuits: &[CircuitGraph]) -> Outcome {
    let mut worst: f64 = 0.0;
    for (s, c) in circuits.iter().enumerate() {
        let r = resolve_seeded(c, s as u64);
        let f = engine::evaluate_foliated(&r, Direction::Forward).map_err(|e| e.to_string())?;
        let b = engine::evaluate_foliated(&r, Direction::Backward).map_err(|e| e.to_string())?;
        worst = worst.max((f - b).norm());
    }
    check(worst < 1e-10, format!("{} circuits, max |forward - backward| {worst:.1e}", circuits.len()))
}

fn double_summation(circuits: &[CircuitGraph]) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cells = 0;
    for c in circuits {
        let t = engine::joint_distribution(c).map_err(|e| e.to_string())?;
        let (n_out, n_in) = (t.n_rows() as f64, t.n_cols() as f64);
        for r in 0..t.n_rows() {
            let s: f64 = (0..t.n_cols()).map(|k| t.get(r, k)).sum();
            worst = worst.max((s - 1.0 / n_out).abs());
        }
        for k in 0..t.n_cols() {
            let s: f64 = (0..t.n_rows()).map(|r| t.get(r, k)).sum();
            worst = worst.max((s - 1.0 / n_in).abs());
        }
        cells += t.values.len();
    }
    check(worst < 1e-9, format!("{} tables, {cells} cells, max sum error {worst:.1e}", circuits.len()))
}

// 4 ---------------------------------------------------------------------------

const N_NATIVE: u64 = 30;

fn gauge_invariance(circuits: &[CircuitGraph]) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut n = 0;
    let spread = |ps: &[f64]| ps.iter().map(|p| (p - ps[0]).abs()).fold(0.0, f64::max);
    for (s, c) in circuits.iter().enumerate() {
        let r = resolve_seeded(c, s as u64);
        let ps: Vec<f64> = gauges()
            .iter()
            .map(|(_, g)| engine::probability(&r.to_gauge(g)))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        worst = worst.max(spread(&ps));
        n += 1;
    }
    // drawn natively in each gauge from the same seed
    for s in 0..N_NATIVE {
        let ps: Vec<f64> = gauges()
            .iter()
            .map(|(_, g)| {
                let c = samples::random_desk_circuit(s, g)?.graph;
                engine::probability(&resolve_seeded(&c, s))
            })
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        worst = worst.max(spread(&ps));
        n += 1;
    }
    for (_, c) in fixture_circuits() {
        let ps: Vec<f64> = gauges()
            .iter()
            .map(|(_, g)| engine::probability(&c.to_gauge(g)))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        worst = worst.max(spread(&ps));
        n += 1;
    }
    check(worst < 1e-10, format!("{n} circuits in 3 gauges, max spread {worst:.1e}"))
}

// 5 ---------------------------------------------------------------------------

/// Largest `|a - b| / max(|a|, |b|)` over entries; 0 when bit-identical.
fn relative_change(a: &OperatorTensor, b: &OperatorTensor) -> f64 {
    a.data()
        .data()
        .iter()
        .zip(b.data().data())
        .filter(|(x, y)| x != y)
        .map(|(x, y)| (x - y).norm() / x.norm().max(y.norm()))
        .fold(0.0, f64::max)
}

fn time_reversal(circuits: &[CircuitGraph]) -> Outcome {
    let mut worst: f64 = 0.0;
    let (mut sym_change, mut other_change): (f64, f64) = (0.0, 0.0);
    let mut all: Vec<CircuitGraph> = Vec::new();
    for f in ["spin.tsl", "teleportation.tsl", "midcome.tsl", "amplitude_damping.tsl"] {
        for c in fixture(f).circuits {
            if c.graph.open_ports().is_empty() {
                all.push(resolve_seeded(&c.graph, 0));
            }
        }
    }
    for (s, c) in circuits.iter().enumerate() {
        let r = resolve_seeded(c, s as u64);
        for (_, g) in gauges() {
            all.push(r.to_gauge(&g));
        }
    }
    for c in &all {
        let rev = c.time_reverse();
        let p = engine::probability(c).map_err(|e| e.to_string())?;
        let q = engine::probability(&rev).map_err(|e| e.to_string())?;
        worst = worst.max((p - q).abs());
        let back = rev.time_reverse();
        if back.wires() != c.wires() || back.nodes().keys().ne(c.nodes().keys()) {
            return Err("double reversal changed the graph".into());
        }
        let symmetric = c.gauge().kind() == GaugePreset::Symmetric;
        for (id, n) in c.nodes() {
            if let (NodeContent::Tensor(a), NodeContent::Tensor(b)) = (n, &back.nodes()[id]) {
                if a.legs() != b.legs() {
                    return Err(format!("double reversal changed the legs of {id}"));
                }
                let d = relative_change(a, b);
                if symmetric {
                    sym_change = sym_change.max(d);
                } else {
                    other_change = other_change.max(d);
                }
            }
        }
    }
    check(
        worst < 1e-10 && sym_change == 0.0 && other_change <= 4.0 * f64::EPSILON,
        format!(
            "{} circuits, max |p - p_rev| {worst:.1e}; double reversal: symmetric gauge bit-identical {}, other gauges max relative change {other_change:.1e}",
            all.len(),
            sym_change == 0.0
        ),
    )
}

// 6 ---------------------------------------------------------------------------

fn unitarity_oracle(u: &ComplexTensor) -> f64 {
    let n = u.shape()[0];
    let m = DMatrix::from_fn(n, n, |i, j| {
        let z = u.get(&[i, j]);
        nalgebra::Complex::new(z.re, z.im)
    });
    let d = m.adjoint() * &m - DMatrix::identity(n, n);
    d.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn extension_theorem() -> Outcome {
    let mut done = 0;
    let (mut w_res, mut rec_res, mut dp): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut shapes = std::collections::BTreeSet::new();
    let mut seed = 1000;
    let gs = gauges();
    while done < 50 {
        let g = &gs[seed as usize % 3].1;
        let c = resolve_seeded(&samples::random_desk_circuit(seed, g).map_err(|e| e.to_string())?.graph, seed);
        let p0 = engine::probability(&c).map_err(|e| e.to_string())?;
        let ops: Vec<String> = c
            .nodes()
            .keys()
            .filter(|id| id.strip_prefix("op").is_some_and(|k| k.chars().all(|ch| ch.is_ascii_digit())))
            .cloned()
            .collect();
        for id in ops {
            if done == 50 {
                break;
            }
            let t = c.nodes()[&id].tensor().expect("tensor").clone();
            let d = physicality::dilate(&t).map_err(|e| format!("{id} seed {seed}: {e}"))?;
            w_res = w_res.max(unitarity_oracle(&d.unitary));
            rec_res = rec_res.max(d.reconstruct(g).map_err(|e| e.to_string())?.max_abs_diff(&t));
            let (frag, ports) = d.fragment_with_ports(g).map_err(|e| e.to_string())?;
            let spliced = c.splice(&id, &frag, &ports).map_err(|e| e.to_string())?;
            let p1 = engine::probability(&spliced).map_err(|e| e.to_string())?;
            dp = dp.max((p1 - p0).abs());
            let kinds = |k: LegKind| t.legs_of_kind(k).len();
            shapes.insert((kinds(LegKind::PtrIn), kinds(LegKind::SysIn), kinds(LegKind::SysOut), kinds(LegKind::PtrOut)));
            done += 1;
        }
        seed += 1;
    }
    check(
        w_res < 1e-8 && rec_res < 1e-8 && dp <= 1e-9,
        format!(
            "50 tensors, {} leg patterns, max |W'W - 1| {w_res:.1e}, reconstruction {rec_res:.1e}, probability change {dp:.1e}",
            shapes.len()
        ),
    )
}

// 7 ---------------------------------------------------------------------------

fn physicality_calibration() -> Outcome {
    let q = SystemType::new("q", 2).unwrap();
    let t3 = SystemType::new("t", 3).unwrap();
    let x = PointerType::new("x", 2).unwrap();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let hadamard = ComplexTensor::from_real(&[2, 2], &[h, h, h, -h]).unwrap();
    let u3 = linalg::random_unitary(3, &mut ChaCha8Rng::seed_from_u64(7));
    let mut passed = 0;
    for (name, g) in gauges() {
        let ts = vec![
            ("ignore_prep", OperatorTensor::ignore_prep(&q, &g)),
            ("ignore_result", OperatorTensor::ignore_result(&q, &g)),
            ("flat_prep", OperatorTensor::flat_prep(&x, &g)),
            ("flat_result", OperatorTensor::flat_result(&x, &g)),
            ("readout", OperatorTensor::readout(&x, 1, &g).unwrap()),
            ("maximal_prep", OperatorTensor::maximal_prep(&x, &q, &g).unwrap()),
            ("maximal_result", OperatorTensor::maximal_result(&x, &q, &g).unwrap()),
            ("from_unitary H", OperatorTensor::from_unitary(&hadamard, &q, &q, &g).unwrap()),
            ("from_unitary U3", OperatorTensor::from_unitary(&u3, &t3, &t3, &g).unwrap()),
        ];
        for (n, t) in ts {
            let r = physicality::is_physical(&t, CAUSAL_TOL).map_err(|e| e.to_string())?;
            if !r.physical {
                return Err(format!("{n} in {name} gauge reported not physical: {r:?}"));
            }
            passed += 1;
        }
    }
    let f = fixture("amplitude_damping.tsl");
    let damp = f.tensor("damp").unwrap().content.tensor().unwrap().clone();
    let r = physicality::is_physical(&damp, CAUSAL_TOL).map_err(|e| e.to_string())?;
    let damp_ok = r.t_positive && r.backward_causal && !r.forward_causal && r.fwd_residual > 0.1;

    let s = std::f64::consts::FRAC_1_SQRT_2;
    let k0 = ComplexTensor::from_real(&[2, 2], &[1.0, 0.0, 0.0, s]).unwrap();
    let k1 = ComplexTensor::from_real(&[2, 2], &[0.0, s, 0.0, 0.0]).unwrap();
    let spec = KrausLegs::channel(&q, &q);
    let g = GaugeConfig::symmetric();
    let both = OperatorTensor::from_kraus(&[KrausOp::new(k0.clone()), KrausOp::new(k1)], &spec, &g).unwrap();
    let top = OperatorTensor::from_kraus(&[KrausOp::new(k0)], &spec, &g).unwrap();
    let negated_data = both.data().sub(&top.data().scale_real(2.0)).unwrap();
    let negated = OperatorTensor::new(both.legs().to_vec(), negated_data, g).map_err(|e| e.to_string())?;
    let tp = physicality::t_positivity_check(&negated).map_err(|e| e.to_string())?;
    let neg_ok = !tp.passed && tp.min_eig < -0.01;
    check(
        damp_ok && neg_ok,
        format!(
            "{passed} special/unitary tensors physical; damping fwd {:.3} bwd {:.1e} T+ {}; negated min eig {:.3}",
            r.fwd_residual, r.bwd_residual, r.t_positive, tp.min_eig
        ),
    )
}

// 8 ---------------------------------------------------------------------------

fn random_hermitian(seed: u64, g: &GaugeConfig) -> OperatorTensor {
    let (sys, ptr) = samples::sample_types();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = loop {
        let mut spec = KrausLegs::default();
        for _ in 0..rng.random_range(0..=1) {
            spec.incomes.push(ptr[rng.random_range(0..2)].clone());
        }
        for _ in 0..rng.random_range(0..=2) {
            spec.inputs.push(sys[rng.random_range(0..2)].clone());
        }
        for _ in 0..rng.random_range(1..=2) {
            spec.outputs.push(sys[rng.random_range(0..2)].clone());
        }
        for _ in 0..rng.random_range(0..=1) {
            spec.outcomes.push(ptr[rng.random_range(0..2)].clone());
        }
        let systems: usize = spec.inputs.iter().chain(&spec.outputs).map(|a| a.dim()).product();
        let pointers: usize = spec.incomes.iter().chain(&spec.outcomes).map(|x| x.card()).product();
        if systems * pointers <= samples::MAX_OP_SIZE {
            break spec;
        }
    };
    let mut data = ComplexTensor::zeros(&random_shape(&spec));
    let mut legs = Vec::new();
    for k in 0..3 {
        let t = physicality::random_physical(&spec, rng.random(), g).unwrap();
        let c: f64 = rng.random_range(-1.0..1.0) * (k + 1) as f64;
        data = data.add(&t.data().scale_real(c)).unwrap();
        legs = t.legs().to_vec();
    }
    OperatorTensor::new(legs, data, g.clone()).unwrap()
}

fn random_shape(spec: &KrausLegs) -> Vec<usize> {
    let mut s = Vec::new();
    s.extend(spec.incomes.iter().map(|x| x.card()));
    for a in spec.inputs.iter().chain(&spec.outputs) {
        s.extend([a.dim(), a.dim()]);
    }
    s.extend(spec.outcomes.iter().map(|x| x.card()));
    s
}

fn duotensor_round_trip(circuits: &[CircuitGraph]) -> Outcome {
    let gs = gauges();
    let mut rt: f64 = 0.0;
    for seed in 0..50u64 {
        let g = &gs[seed as usize % 3].1;
        let t = random_hermitian(seed, g);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 77);
        let colors: Vec<Color> =
            (0..t.legs().len()).map(|_| if rng.random_bool(0.5) { Color::Black } else { Color::White }).collect();
        let d = duotensor::to_duotensor(&t, &colors).map_err(|e| e.to_string())?;
        let back = duotensor::from_duotensor(&d).map_err(|e| e.to_string())?;
        rt = rt.max(back.max_abs_diff(&t) / t.data().max_abs().max(1.0));
    }
    let mut dv: f64 = 0.0;
    let mut n = 0;
    let mut graphs: Vec<CircuitGraph> = fixture_circuits().into_iter().map(|(_, c)| c).collect();
    graphs.extend(circuits.iter().take(40).enumerate().map(|(s, c)| resolve_seeded(c, s as u64)));
    for (k, c) in graphs.iter().enumerate() {
        let exact = engine::evaluate(c).map_err(|e| e.to_string())?.re;
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        let mixed: BTreeMap<_, Color> = c
            .wires()
            .iter()
            .map(|w| (w.clone(), if rng.random_bool(0.5) { Color::Black } else { Color::White }))
            .collect();
        for v in [
            duotensor::evaluate_duotensors(c, |_| Color::Black),
            duotensor::evaluate_duotensors(c, |_| Color::White),
            duotensor::evaluate_duotensors(c, |w| mixed[w]),
        ] {
            dv = dv.max((v.map_err(|e| e.to_string())? - exact).abs());
        }
        n += 1;
    }
    check(
        rt < 1e-9 && dv <= 1e-10,
        format!("50 tensors, max round-trip residual {rt:.1e}; {n} circuits x 3 colorings, max change {dv:.1e}"),
    )
}

// 9 ---------------------------------------------------------------------------

fn midcome_equivalence() -> Outcome {
    let g = graph(&fixture("midcome.tsl"), "main");
    let (norm, factor) = g.normalize_midcomes();
    let a = engine::evaluate(&g).map_err(|e| e.to_string())?;
    let b = engine::evaluate(&norm).map_err(|e| e.to_string())?;
    let err = (a - b * 2.0).norm();
    check(
        factor == 2.0 && err < 1e-10 && norm.nodes().len() == g.nodes().len() + 3,
        format!("value {:.6}, normalized {:.6}, factor {factor}, |v - 2 v_n| {err:.1e}", a.re, b.re),
    )
}

// 10 --------------------------------------------------------------------------

/// Fragment `in a -> out a` with the readout set to `v`, divided by its
/// closure with ignore operations.
fn conditioned_channel(frag: &CircuitGraph, v: usize) -> Result<OperatorTensor, String> {
    let vals: BTreeMap<String, usize> = frag.placeholders().into_iter().map(|(id, _)| (id, v)).collect();
    let r = engine::resolve(frag, &vals).map_err(|e| e.to_string())?;
    let sig = r.signature();
    let (pin, a) = sig.iter().find(|(_, l)| l.kind() == LegKind::SysIn).cloned().ok_or("no input")?;
    let (pout, _) = sig.iter().find(|(_, l)| l.kind() == LegKind::SysOut).cloned().ok_or("no output")?;
    let a = a.system().unwrap().clone();
    let g = r.gauge().clone();
    let mut closed = r.clone();
    closed.add_tensor("close_in", OperatorTensor::ignore_prep(&a, &g)).map_err(|e| e.to_string())?;
    closed.add_tensor("close_out", OperatorTensor::ignore_result(&a, &g)).map_err(|e| e.to_string())?;
    closed.connect(Port::new("close_in", 0), pin.clone()).map_err(|e| e.to_string())?;
    closed.connect(pout.clone(), Port::new("close_out", 0)).map_err(|e| e.to_string())?;
    let p = engine::probability(&closed).map_err(|e| e.to_string())?;
    let t = engine::contract_fragment(&r).map_err(|e| e.to_string())?;
    let in_first: Vec<usize> = [pin, pout].iter().map(|p| sig.iter().position(|(q, _)| q == p).unwrap()).collect();
    Ok(t.permute_legs(&in_first).map_err(|e| e.to_string())?.scale(1.0 / p))
}

fn teleportation() -> Outcome {
    let f = fixture("teleportation.tsl");
    let frag = graph(&f, "teleport");
    let a = f.registry.system("a").unwrap().clone();
    let mut worst: f64 = 0.0;
    for (_, g) in gauges() {
        let fg = frag.to_gauge(&g);
        let id = OperatorTensor::from_unitary(&linalg::identity(2), &a, &a, &g).unwrap();
        let fwd = conditioned_channel(&fg, 0)?;
        let rev = conditioned_channel(&fg.time_reverse(), 0)?;
        worst = worst.max(fwd.max_abs_diff(&id)).max(rev.max_abs_diff(&id));
    }
    let other = conditioned_channel(&frag, 1)?;
    let id = OperatorTensor::from_unitary(&linalg::identity(2), &a, &a, frag.gauge()).unwrap();
    let mismatched = other.max_abs_diff(&id);
    check(
        worst < 1e-8 && mismatched > 0.1,
        format!("forward and reversed channel distance {worst:.1e} in 3 gauges; non-matching Bell value distance {mismatched:.2}"),
    )
}

// 11 --------------------------------------------------------------------------

/// Positive matrix scaled to column sums 1 and row sums `cols/rows`.
fn sinkhorn(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> RealMatrix {
    let mut m: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(0.05..1.0)).collect();
    let r_target = cols as f64 / rows as f64;
    for _ in 0..10_000 {
        for i in 0..rows {
            let s: f64 = (0..cols).map(|j| m[i * cols + j]).sum();
            (0..cols).for_each(|j| m[i * cols + j] *= r_target / s);
        }
        for j in 0..cols {
            let s: f64 = (0..rows).map(|i| m[i * cols + j]).sum();
            (0..rows).for_each(|i| m[i * cols + j] /= s);
        }
        let worst = (0..rows)
            .map(|i| ((0..cols).map(|j| m[i * cols + j]).sum::<f64>() - r_target).abs())
            .fold(0.0, f64::max);
        if worst < 1e-15 {
            break;
        }
    }
    RealMatrix::new(rows, cols, m).unwrap()
}

fn sums_spread(m: &RealMatrix) -> f64 {
    let spread = |v: Vec<f64>| {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    };
    spread(m.row_sums()).max(spread(m.col_sums()))
}

fn classical_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut seq, mut par, mut bayes): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut flagged = 0;
    for _ in 0..200 {
        let (k, m, n) = (rng.random_range(1..=4), rng.random_range(1..=4), rng.random_range(1..=4));
        let a = sinkhorn(m, n, &mut rng);
        let b = sinkhorn(k, m, &mut rng);
        let ba = b.matmul(&a).unwrap();
        let ab = a.kron(&b);
        seq = seq.max(sums_spread(&ba));
        par = par.max(sums_spread(&ab));
        for x in [&ba, &ab] {
            if !classical::is_doubly_summing(x, 1e-10).is_doubly_summing {
                flagged += 1;
            }
        }
        let inv = classical::bayes_invert(&a, n, m).map_err(|e| e.to_string())?;
        bayes = bayes.max(inv.col_sums().iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max));
        if inv.data().iter().any(|&v| v < 0.0) {
            return Err("bayes_invert produced a negative entry".into());
        }
    }
    check(
        seq < 1e-10 && par < 1e-10 && bayes < 1e-10 && flagged == 0,
        format!("200 pairs, sequential spread {seq:.1e}, parallel spread {par:.1e}, inverted column error {bayes:.1e}"),
    )
}

fn main() {
    let sym = GaugeConfig::symmetric();
    let t0 = Instant::now();
    let circuits = random_circuits(&sym);
    println!("acceptance: {N_RANDOM} random circuits drawn in {:.2}s", t0.elapsed().as_secs_f64());
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("spin worked example", Box::new(spin_example)),
        ("direction independence", Box::new(|| direction_independence(&circuits))),
        ("double summation", Box::new(|| double_summation(&circuits))),
        ("gauge invariance", Box::new(|| gauge_invariance(&circuits))),
        ("time reversal", Box::new(|| time_reversal(&circuits))),
        ("extension theorem", Box::new(extension_theorem)),
        ("physicality calibration", Box::new(physicality_calibration)),
        ("duotensor round trip", Box::new(|| duotensor_round_trip(&circuits))),
        ("midcome equivalence", Box::new(midcome_equivalence)),
        ("teleportation", Box::new(teleportation)),
        ("classical oracle", Box::new(classical_oracle)),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let r = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let secs = t.elapsed().as_secs_f64();
        match r {
            Ok(d) => println!("PASS {:>2} {name}: {d} [{secs:.2}s]", k + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {d} [{secs:.2}s]", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
