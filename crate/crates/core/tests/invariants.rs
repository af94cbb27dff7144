//! Property suites over operator tensors, circuits and their classical
//! reductions.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use timesym::circuit::{CircuitGraph, NodeContent, Port};
use timesym::classical::{self, ClassicalChannel};
use timesym::dsl::{self, CircuitDef, CircuitFile, TensorExpr};
use timesym::engine::{self, Direction, Frame};
use timesym::linalg::{self, ComplexTensor, RealMatrix, C64};
use timesym::optensor::{KrausLegs, KrausOp, LegKind, OperatorTensor};
use timesym::physicality::{self, CAUSAL_TOL};
use timesym::samples;
use timesym::types::{GaugeConfig, PointerType, SystemType, TypeRegistry};

fn gauges() -> [GaugeConfig; 3] {
    [GaugeConfig::forward(), GaugeConfig::backward(), GaugeConfig::symmetric()]
}

fn sys(n: usize) -> SystemType {
    SystemType::new(if n == 2 { "q" } else { "t" }, n).unwrap()
}

fn ptr(n: usize) -> PointerType {
    PointerType::new(if n == 2 { "x" } else { "y" }, n).unwrap()
}

fn resolve_all(g: &CircuitGraph, seed: u64) -> CircuitGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = g.placeholders().into_iter().map(|(id, x)| (id, rng.random_range(0..x.card()))).collect();
    engine::resolve(g, &values).unwrap()
}

fn random_kraus(n_in: usize, n_out: usize, k: usize, seed: u64) -> Vec<ComplexTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k).map(|_| linalg::random_complex(&[n_out, n_in], &mut rng)).collect()
}

fn channel(kraus: &[ComplexTensor], a: &SystemType, b: &SystemType, g: &GaugeConfig) -> OperatorTensor {
    let ops: Vec<KrausOp> = kraus.iter().cloned().map(KrausOp::new).collect();
    OperatorTensor::from_kraus(&ops, &KrausLegs::channel(a, b), g).unwrap()
}

fn min_t_eig(t: &OperatorTensor) -> f64 {
    physicality::t_positivity_check(t).unwrap().min_eig
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kraus_tensors_are_t_positive(seed in any::<u64>(), a in 2usize..4, b in 2usize..4, k in 1usize..5, gi in 0usize..3) {
        let t = channel(&random_kraus(a, b, k, seed), &sys(a), &sys(b), &gauges()[gi]);
        let scale = t.data().max_abs().max(1.0);
        prop_assert!(min_t_eig(&t) >= -1e-10 * scale);
        prop_assert!(t.hermiticity_deviation() < 1e-12 * scale);
    }

    #[test]
    fn kraus_mixing_leaves_tensor_unchanged(seed in any::<u64>(), k in 1usize..5) {
        let ks = random_kraus(2, 3, k, seed);
        let v = linalg::random_unitary(k, &mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let mixed: Vec<ComplexTensor> = (0..k)
            .map(|l| {
                let mut acc = ComplexTensor::zeros(&[3, 2]);
                for (m, km) in ks.iter().enumerate() {
                    acc = acc.add(&km.scale(v.get(&[m, l]))).unwrap();
                }
                acc
            })
            .collect();
        let g = GaugeConfig::symmetric();
        let (a, b) = (channel(&ks, &sys(2), &sys(3), &g), channel(&mixed, &sys(2), &sys(3), &g));
        prop_assert!(a.max_abs_diff(&b) < 1e-10);
    }

    #[test]
    fn wiring_t_positive_tensors_stays_t_positive(seed in any::<u64>(), k1 in 1usize..4, k2 in 1usize..4) {
        let g = GaugeConfig::symmetric();
        let first = channel(&random_kraus(2, 3, k1, seed), &sys(2), &sys(3), &g);
        let second = channel(&random_kraus(3, 2, k2, seed ^ 7), &sys(3), &sys(2), &g);
        let out = first.leg_index(LegKind::SysOut, 0).unwrap();
        let inp = second.leg_index(LegKind::SysIn, 0).unwrap();
        let joined = first.wire_into(out, &second, inp).unwrap();
        prop_assert!(min_t_eig(&joined) >= -1e-10 * joined.data().max_abs().max(1.0));
    }

    #[test]
    fn closed_pair_is_gauge_independent(seed in any::<u64>(), n in 2usize..4) {
        let a = sys(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prep = vec![KrausOp::new(linalg::random_complex(&[n, 1], &mut rng))];
        let effect = vec![KrausOp::new(linalg::random_complex(&[1, n], &mut rng))];
        let prep_spec = KrausLegs { outputs: vec![a.clone()], ..Default::default() };
        let effect_spec = KrausLegs { inputs: vec![a.clone()], ..Default::default() };
        let values: Vec<C64> = gauges()
            .iter()
            .map(|g| {
                let p = OperatorTensor::from_kraus(&prep, &prep_spec, g).unwrap();
                let e = OperatorTensor::from_kraus(&effect, &effect_spec, g).unwrap();
                p.wire_into(0, &e, 0).unwrap().scalar_value().unwrap()
            })
            .collect();
        for v in &values {
            prop_assert!((v - values[0]).norm() < 1e-10 * values[0].norm().max(1.0));
        }
    }

    #[test]
    fn time_reverse_preserves_physicality(seed in any::<u64>(), gi in 0usize..3, shape in 0usize..4) {
        let g = &gauges()[gi];
        let spec = match shape {
            0 => KrausLegs::channel(&sys(2), &sys(3)),
            1 => KrausLegs { outputs: vec![sys(2)], outcomes: vec![ptr(3)], ..Default::default() },
            2 => KrausLegs { inputs: vec![sys(3)], incomes: vec![ptr(2)], ..Default::default() },
            _ => KrausLegs { inputs: vec![sys(2)], outputs: vec![sys(2)], incomes: vec![ptr(2)], outcomes: vec![ptr(2)] },
        };
        let t = physicality::random_physical(&spec, seed, g).unwrap();
        prop_assert!(physicality::is_physical(&t, CAUSAL_TOL).unwrap().physical);
        let r = physicality::is_physical(&t.time_reverse(), CAUSAL_TOL).unwrap();
        prop_assert!(r.physical, "{r:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn contraction_order_is_irrelevant(seed in 0u64..10_000) {
        let c = resolve_all(&samples::random_desk_circuit(seed, &GaugeConfig::symmetric()).unwrap().graph, seed);
        let v = engine::evaluate(&c).unwrap();
        for d in [Direction::Forward, Direction::Backward] {
            prop_assert!((engine::evaluate_foliated(&c, d).unwrap() - v).norm() < 1e-10);
        }
    }

    #[test]
    fn joint_table_is_doubly_summing_and_matches_classical_evolution(seed in 0u64..10_000) {
        let c = samples::random_desk_circuit(seed, &GaugeConfig::symmetric()).unwrap().graph;
        let table = engine::joint_distribution(&c).unwrap();
        let joint = RealMatrix::from_rows(&table.matrix()).unwrap();
        let report = classical::is_doubly_summing(&joint, 1e-9);
        prop_assert!(report.is_doubly_summing, "{report:?}");
        let forward = engine::conditional(&table, &Frame::Forward.natural_condition(&table), Frame::Forward).unwrap();
        let ch = ClassicalChannel::from_joint(&joint).unwrap();
        let n_u = table.n_cols();
        for u in 0..n_u {
            let mut e = vec![0.0; n_u];
            e[u] = 1.0;
            let p = classical::forward_evolve(&e, &ch).unwrap();
            for (v, pv) in p.iter().enumerate() {
                prop_assert!((pv - forward.table.get(v, u)).abs() < 1e-10);
                prop_assert!((pv - n_u as f64 * table.get(v, u)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn circuit_files_round_trip(seed in 0u64..10_000, gi in 0usize..3) {
        let g = gauges()[gi].clone();
        let c = samples::random_desk_circuit(seed, &g).unwrap().graph;
        let mut registry = TypeRegistry::new();
        let (systems, pointers) = samples::sample_types();
        for a in &systems {
            registry.register_system(a.name(), a.dim()).unwrap();
        }
        for x in &pointers {
            registry.register_pointer(x.name(), x.card()).unwrap();
        }
        let nodes = c.nodes().iter().map(|(id, n)| (id.clone(), TensorExpr::from_content(n))).collect();
        let file = CircuitFile {
            registry,
            gauge: g,
            tensors: vec![],
            circuits: vec![CircuitDef { name: "main".into(), graph: c.clone(), nodes }],
        };
        let text = dsl::serialize(&file);
        let back = dsl::parse(&text).unwrap();
        prop_assert_eq!(dsl::serialize(&back), text);
        let graph = &back.circuit("main").unwrap().graph;
        for (id, n) in c.nodes() {
            match (n, &graph.nodes()[id]) {
                (NodeContent::Tensor(a), NodeContent::Tensor(b)) => prop_assert!(a.max_abs_diff(b) == 0.0),
                (a, b) => prop_assert_eq!(a, b),
            }
        }
        prop_assert_eq!(graph.wires(), c.wires());
    }
}

#[test]
fn z_shaped_pair_is_flat() {
    // outcome on the earlier node, income on the later one
    for seed in 0..10 {
        for g in gauges() {
            let (a, x, y) = (sys(2), ptr(2), ptr(3));
            let early = KrausLegs { outputs: vec![a.clone()], outcomes: vec![y.clone()], ..Default::default() };
            let late = KrausLegs { inputs: vec![a.clone()], incomes: vec![x.clone()], ..Default::default() };
            let mut c = CircuitGraph::new(&g);
            c.add_tensor("early", physicality::random_physical(&early, seed, &g).unwrap()).unwrap();
            c.add_tensor("late", physicality::random_physical(&late, seed + 100, &g).unwrap()).unwrap();
            c.connect_kind("early", LegKind::SysOut, 0, "late", 0).unwrap();
            c.add_placeholder("ry", &y).unwrap();
            c.add_tensor("fy", OperatorTensor::flat_result(&y, &g)).unwrap();
            c.connect_kind("early", LegKind::PtrOut, 0, "ry", 0).unwrap();
            c.connect_kind("ry", LegKind::PtrOut, 0, "fy", 0).unwrap();
            c.add_tensor("fx", OperatorTensor::flat_prep(&x, &g)).unwrap();
            c.add_placeholder("rx", &x).unwrap();
            c.connect_kind("fx", LegKind::PtrOut, 0, "rx", 0).unwrap();
            let late_income = c.port("late", LegKind::PtrIn, 0).unwrap();
            c.connect(Port::new("rx", 1), late_income).unwrap();
            let t = engine::joint_distribution(&c).unwrap();
            assert_eq!((t.n_rows(), t.n_cols()), (3, 2));
            for v in &t.values {
                assert!((v - 1.0 / 6.0).abs() < 1e-12, "{:?}", t.values);
            }
        }
    }
}

#[test]
fn two_midcomes_give_factor_six() {
    let g = GaugeConfig::symmetric();
    let (a, x, y) = (sys(2), ptr(2), ptr(3));
    let first = KrausLegs { outputs: vec![a.clone()], outcomes: vec![x.clone()], ..Default::default() };
    let middle = KrausLegs {
        inputs: vec![a.clone()],
        outputs: vec![a.clone()],
        incomes: vec![x.clone()],
        outcomes: vec![y.clone()],
    };
    let last = KrausLegs { inputs: vec![a.clone()], incomes: vec![y.clone()], ..Default::default() };
    let mut c = CircuitGraph::new(&g);
    c.add_tensor("a", physicality::random_physical(&first, 1, &g).unwrap()).unwrap();
    c.add_tensor("b", physicality::random_physical(&middle, 2, &g).unwrap()).unwrap();
    c.add_tensor("c", physicality::random_physical(&last, 3, &g).unwrap()).unwrap();
    c.add_tensor("rx", OperatorTensor::readout(&x, 1, &g).unwrap()).unwrap();
    c.add_tensor("ry", OperatorTensor::readout(&y, 2, &g).unwrap()).unwrap();
    c.connect_kind("a", LegKind::SysOut, 0, "b", 0).unwrap();
    let b_out = c.port("b", LegKind::SysOut, 0).unwrap();
    let c_in = c.port("c", LegKind::SysIn, 0).unwrap();
    c.connect(b_out, c_in).unwrap();
    c.connect_kind("a", LegKind::PtrOut, 0, "rx", 0).unwrap();
    let b_income = c.port("b", LegKind::PtrIn, 0).unwrap();
    c.connect(Port::new("rx", 1), b_income).unwrap();
    c.connect_kind("b", LegKind::PtrOut, 0, "ry", 0).unwrap();
    let c_income = c.port("c", LegKind::PtrIn, 0).unwrap();
    c.connect(Port::new("ry", 1), c_income).unwrap();

    let (norm, factor) = c.normalize_midcomes();
    assert_eq!(factor, 6.0);
    let v = engine::evaluate(&c).unwrap();
    let n = engine::evaluate(&norm).unwrap();
    assert!(v.norm() > 1e-3);
    assert!((v - n * 6.0).norm() < 1e-10);

    // one rewrite at a time
    let (once, f1) = c.normalize_midcomes();
    let (twice, f2) = once.normalize_midcomes();
    assert_eq!((f1 * f2, twice.nodes().len()), (6.0, once.nodes().len()));
}

#[test]
fn dilation_reconstruction_is_idempotent() {
    let g = GaugeConfig::forward();
    let spec = KrausLegs { inputs: vec![sys(2)], outputs: vec![sys(2)], incomes: vec![ptr(2)], ..Default::default() };
    let t = physicality::random_physical(&spec, 5, &g).unwrap();
    let first = physicality::dilate(&t).unwrap().reconstruct(&g).unwrap();
    let second = physicality::dilate(&first).unwrap().reconstruct(&g).unwrap();
    assert!(first.max_abs_diff(&t) < 1e-9);
    assert!(second.max_abs_diff(&first) < 1e-9);
}

#[test]
fn completely_depolarizing_channel_dilates_to_dimension_four() {
    let g = GaugeConfig::symmetric();
    let paulis: [[f64; 8]; 4] = [
        [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0, 0.0],
        [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0],
    ];
    let ks: Vec<ComplexTensor> = paulis
        .iter()
        .map(|p| ComplexTensor::new(vec![2, 2], (0..4).map(|i| C64::new(p[2 * i], p[2 * i + 1]) * 0.5).collect()).unwrap())
        .collect();
    let t = channel(&ks, &sys(2), &sys(2), &g);
    let d = physicality::dilate(&t).unwrap();
    assert_eq!(d.unitary.shape(), [4, 4]);
    assert!(d.reconstruction_residual < 1e-9);
}
