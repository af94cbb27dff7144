//! Physicality: T-positivity, forward/backward causality, unitary dilation
//! and a generator of random physical tensors.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::circuit::{CircuitGraph, Port};
use crate::engine;
use crate::error::{Error, Result};
use crate::linalg::{self, ComplexTensor, HermitianMatrixView, Subsystem, C64, ZERO};
use crate::optensor::{KrausLegs, Leg, LegKind, OperatorTensor, Role, TOL_HERM};
use crate::types::{GaugeConfig, PointerType, SystemType};

pub const CAUSAL_TOL: f64 = 1e-9;
pub const EIG_FLOOR: f64 = 1e-9;
pub const DIL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct TPositivity {
    /// Minimum eigenvalue for each pointer assignment (pointer legs in order).
    pub per_assignment: Vec<(Vec<usize>, f64)>,
    pub min_eig: f64,
    pub passed: bool,
    /// The grouped matrix equals the input partial transpose of the
    /// ordinary operator view.
    pub views_agree: bool,
}

/// `M[(out kets, in kets), (out bras, in bras)]` for one pointer assignment,
/// with the output and input dimensions.
pub fn t_matrix(t: &OperatorTensor, pointer: &[usize]) -> Result<(ComplexTensor, usize, usize)> {
    let slice = t.pointer_slice(pointer)?;
    let sys: Vec<&Leg> = t.legs().iter().filter(|l| l.kind().is_system()).collect();
    let (mut out_k, mut out_b, mut in_k, mut in_b) = (vec![], vec![], vec![], vec![]);
    let (mut n_out, mut n_in) = (1, 1);
    for (i, l) in sys.iter().enumerate() {
        if l.kind() == LegKind::SysOut {
            out_k.push(2 * i);
            out_b.push(2 * i + 1);
            n_out *= l.extent();
        } else {
            in_k.push(2 * i);
            in_b.push(2 * i + 1);
            n_in *= l.extent();
        }
    }
    let rows: Vec<usize> = out_k.iter().chain(&in_k).copied().collect();
    let cols: Vec<usize> = out_b.iter().chain(&in_b).copied().collect();
    let m = if slice.rank() == 0 {
        slice.reshape(&[1, 1])?
    } else {
        linalg::group_axes(&slice, &[rows, cols])?
    };
    Ok((m, n_out, n_in))
}

fn standard_view(t: &OperatorTensor, pointer: &[usize]) -> Result<ComplexTensor> {
    let slice = t.pointer_slice(pointer)?;
    if slice.rank() == 0 {
        return slice.reshape(&[1, 1]);
    }
    let sys: Vec<&Leg> = t.legs().iter().filter(|l| l.kind().is_system()).collect();
    let (mut rows_o, mut rows_i, mut cols_o, mut cols_i) = (vec![], vec![], vec![], vec![]);
    for (i, l) in sys.iter().enumerate() {
        if l.kind() == LegKind::SysOut {
            rows_o.push(2 * i);
            cols_o.push(2 * i + 1);
        } else {
            rows_i.push(2 * i + 1);
            cols_i.push(2 * i);
        }
    }
    let rows: Vec<usize> = rows_o.into_iter().chain(rows_i).collect();
    let cols: Vec<usize> = cols_o.into_iter().chain(cols_i).collect();
    linalg::group_axes(&slice, &[rows, cols])
}

pub fn t_positivity_check(t: &OperatorTensor) -> Result<TPositivity> {
    let mut per_assignment = Vec::new();
    let mut min_eig = f64::INFINITY;
    let mut passed = true;
    let mut views_agree = true;
    for assign in t.pointer_assignments() {
        let (m, n_out, n_in) = t_matrix(t, &assign)?;
        let view = HermitianMatrixView::new(&m, TOL_HERM)?;
        let eig = linalg::hermitian_eig(view);
        let lo = eig.values.first().copied().unwrap_or(0.0);
        if lo < -EIG_FLOOR * m.max_abs() {
            passed = false;
        }
        let std = standard_view(t, &assign)?;
        let pt = linalg::partial_transpose(&std, (n_out, n_in), Subsystem::Second)?;
        if pt.max_abs_diff(&m) > 0.0 {
            views_agree = false;
        }
        min_eig = min_eig.min(lo);
        per_assignment.push((assign, lo));
    }
    Ok(TPositivity { per_assignment, min_eig, passed, views_agree })
}

fn close_legs(t: &OperatorTensor, mut closer: impl FnMut(&Leg) -> Option<OperatorTensor>) -> Result<OperatorTensor> {
    let mut cur = t.clone();
    loop {
        let Some((i, c)) = cur.legs().iter().enumerate().find_map(|(i, l)| closer(l).map(|c| (i, c))) else {
            return Ok(cur);
        };
        cur = c.join(&[(0, i)], &cur)?;
    }
}

/// Closes incomes with flat preparations and inputs with ignore
/// preparations; the remainder must be ignore/flat preparations on every
/// output/outcome. Returns the max-norm residual.
pub fn forward_causality_residual(t: &OperatorTensor) -> Result<f64> {
    let g = t.gauge().clone();
    let closed = close_legs(t, |l| match l.kind() {
        LegKind::PtrIn => Some(OperatorTensor::flat_prep(l.pointer()?, &g)),
        LegKind::SysIn => Some(OperatorTensor::ignore_prep(l.system()?, &g)),
        _ => None,
    })?;
    let expected = closed.legs().iter().fold(OperatorTensor::unit(&g), |acc, l| {
        let part = match l.kind() {
            LegKind::SysOut => OperatorTensor::ignore_prep(l.system().expect("system"), &g),
            _ => OperatorTensor::flat_prep(l.pointer().expect("pointer"), &g),
        };
        acc.tensor_product(&part)
    });
    Ok(closed.data().max_abs_diff(expected.data()))
}

pub fn backward_causality_residual(t: &OperatorTensor) -> Result<f64> {
    let g = t.gauge().clone();
    let closed = close_legs(t, |l| match l.kind() {
        LegKind::PtrOut => Some(OperatorTensor::flat_result(l.pointer()?, &g)),
        LegKind::SysOut => Some(OperatorTensor::ignore_result(l.system()?, &g)),
        _ => None,
    })?;
    let expected = closed.legs().iter().fold(OperatorTensor::unit(&g), |acc, l| {
        let part = match l.kind() {
            LegKind::SysIn => OperatorTensor::ignore_result(l.system().expect("system"), &g),
            _ => OperatorTensor::flat_result(l.pointer().expect("pointer"), &g),
        };
        acc.tensor_product(&part)
    });
    Ok(closed.data().max_abs_diff(expected.data()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhysicalityReport {
    pub t_positive: bool,
    pub min_eig: f64,
    pub fwd_residual: f64,
    pub bwd_residual: f64,
    pub physical: bool,
    #[serde(skip)]
    pub forward_causal: bool,
    #[serde(skip)]
    pub backward_causal: bool,
    #[serde(skip)]
    pub per_assignment: Vec<(Vec<usize>, f64)>,
}

/// A readout box is a filter rather than a deterministic operation, so its
/// causality is checked on the marginal over its value (the plain pointer
/// wire). Every other tensor is checked as is.
pub fn is_physical(t: &OperatorTensor, tol: f64) -> Result<PhysicalityReport> {
    let tp = t_positivity_check(t)?;
    let causal_view = match (t.role(), t.legs()) {
        (Role::Readout(_), [l, _]) => {
            let x = l.pointer().expect("readout leg is a pointer");
            let id = linalg::identity(x.card());
            OperatorTensor::from_parts(t.legs().to_vec(), id, t.gauge().clone(), Role::Generic)?
        }
        _ => t.clone(),
    };
    let fwd = forward_causality_residual(&causal_view)?;
    let bwd = backward_causality_residual(&causal_view)?;
    let forward_causal = fwd <= tol;
    let backward_causal = bwd <= tol;
    Ok(PhysicalityReport {
        t_positive: tp.passed,
        min_eig: tp.min_eig,
        fwd_residual: fwd,
        bwd_residual: bwd,
        physical: tp.passed && forward_causal && backward_causal,
        forward_causal,
        backward_causal,
        per_assignment: tp.per_assignment,
    })
}

// ---- dilation ---------------------------------------------------------------

/// System type standing in for a pointer inside a dilation.
pub fn pointer_system(x: &PointerType) -> SystemType {
    SystemType::new(&format!("{}~", x.name()), x.card()).expect("card >= 1")
}

/// A unitary on `inputs → outputs` which, with an ignore preparation on
/// `ancilla_in`, an ignore result on `ancilla_out` and maximal operations on
/// the pointer systems, reproduces the original tensor.
#[derive(Debug, Clone)]
pub struct Dilation {
    pub unitary: ComplexTensor,
    /// Income systems, input systems, then `ancilla_in`.
    pub inputs: Vec<SystemType>,
    /// Output systems, outcome systems, then `ancilla_out`.
    pub outputs: Vec<SystemType>,
    pub ancilla_in: SystemType,
    pub ancilla_out: SystemType,
    pub coefficient: f64,
    pub unitarity_residual: f64,
    pub reconstruction_residual: f64,
    /// Distance between the searched Kraus embedding and the unitary kept.
    pub completion_norm: f64,
    pub iterations: usize,
    target_legs: Vec<Leg>,
}

struct LegGroups {
    incomes: Vec<usize>,
    inputs: Vec<usize>,
    outputs: Vec<usize>,
    outcomes: Vec<usize>,
}

fn leg_groups(t: &OperatorTensor) -> LegGroups {
    LegGroups {
        incomes: t.legs_of_kind(LegKind::PtrIn),
        inputs: t.legs_of_kind(LegKind::SysIn),
        outputs: t.legs_of_kind(LegKind::SysOut),
        outcomes: t.legs_of_kind(LegKind::PtrOut),
    }
}

/// Builds the closing fragment around a unitary tensor `core` whose legs are
/// `[inputs..., outputs...]` as in [`Dilation`]. Returns the graph plus the
/// open port standing for each leg of `target_legs`.
fn dilation_fragment(
    core: OperatorTensor,
    target_legs: &[Leg],
    g: &GaugeConfig,
) -> Result<(CircuitGraph, Vec<Port>)> {
    let n_in_core = core.legs_of_kind(LegKind::SysIn).len();
    let grp = LegGroups {
        incomes: (0..target_legs.len()).filter(|&i| target_legs[i].kind() == LegKind::PtrIn).collect(),
        inputs: (0..target_legs.len()).filter(|&i| target_legs[i].kind() == LegKind::SysIn).collect(),
        outputs: (0..target_legs.len()).filter(|&i| target_legs[i].kind() == LegKind::SysOut).collect(),
        outcomes: (0..target_legs.len()).filter(|&i| target_legs[i].kind() == LegKind::PtrOut).collect(),
    };
    let mut c = CircuitGraph::new(g);
    c.add_tensor("core", core.clone())?;
    let mut ports = vec![Port::new("", 0); target_legs.len()];
    // core SysIn legs are [x~..., a..., z]; SysOut legs are [b..., y~..., w]
    for (k, &li) in grp.incomes.iter().enumerate() {
        let x = target_legs[li].pointer().expect("pointer");
        let id = format!("in{k:02}");
        c.add_tensor(&id, OperatorTensor::maximal_prep(x, &pointer_system(x), g)?)?;
        c.connect(Port::new(&id, 1), c.port("core", LegKind::SysIn, k)?)?;
        ports[li] = Port::new(&id, 0);
    }
    for (k, &li) in grp.inputs.iter().enumerate() {
        ports[li] = c.port("core", LegKind::SysIn, grp.incomes.len() + k)?;
    }
    for (k, &li) in grp.outputs.iter().enumerate() {
        ports[li] = c.port("core", LegKind::SysOut, k)?;
    }
    for (k, &li) in grp.outcomes.iter().enumerate() {
        let y = target_legs[li].pointer().expect("pointer");
        let id = format!("out{k:02}");
        c.add_tensor(&id, OperatorTensor::maximal_result(y, &pointer_system(y), g)?)?;
        c.connect(c.port("core", LegKind::SysOut, grp.outputs.len() + k)?, Port::new(&id, 0))?;
        ports[li] = Port::new(&id, 1);
    }
    let z = core.legs()[core.leg_index(LegKind::SysIn, n_in_core - 1).expect("ancilla")].system().unwrap().clone();
    let n_out_core = core.legs_of_kind(LegKind::SysOut).len();
    let w = core.legs()[core.leg_index(LegKind::SysOut, n_out_core - 1).expect("ancilla")].system().unwrap().clone();
    c.add_tensor("anc_prep", OperatorTensor::ignore_prep(&z, g))?;
    c.add_tensor("anc_result", OperatorTensor::ignore_result(&w, g))?;
    c.connect(Port::new("anc_prep", 0), c.port("core", LegKind::SysIn, n_in_core - 1)?)?;
    c.connect(c.port("core", LegKind::SysOut, n_out_core - 1)?, Port::new("anc_result", 0))?;
    Ok((c, ports))
}

/// Contracts the fragment and orders its legs like `target_legs`.
fn contract_to_target(c: &CircuitGraph, ports: &[Port]) -> Result<OperatorTensor> {
    let t = engine::contract_fragment(c)?;
    let sig: Vec<Port> = c.signature().into_iter().map(|(p, _)| p).collect();
    let order: Vec<usize> =
        ports.iter().map(|p| sig.iter().position(|q| q == p).expect("port is open")).collect();
    t.permute_legs(&order)
}

impl Dilation {
    pub fn core_tensor(&self, g: &GaugeConfig) -> Result<OperatorTensor> {
        OperatorTensor::from_unitary_legs(&self.unitary, &self.inputs, &self.outputs, g)
    }

    /// The closing fragment; open legs are the original tensor's legs.
    pub fn fragment(&self, g: &GaugeConfig) -> Result<CircuitGraph> {
        Ok(dilation_fragment(self.core_tensor(g)?, &self.target_legs, g)?.0)
    }

    /// The closing fragment plus, for each leg of the original tensor, the
    /// open port standing for it; ready for [`CircuitGraph::splice`].
    pub fn fragment_with_ports(&self, g: &GaugeConfig) -> Result<(CircuitGraph, Vec<Port>)> {
        dilation_fragment(self.core_tensor(g)?, &self.target_legs, g)
    }

    pub fn reconstruct(&self, g: &GaugeConfig) -> Result<OperatorTensor> {
        let (c, ports) = dilation_fragment(self.core_tensor(g)?, &self.target_legs, g)?;
        contract_to_target(&c, &ports)
    }
}

/// Absorbs maximal operations so every pointer leg becomes a system leg;
/// legs come out as `[x~..., a..., b..., y~...]`.
fn absorb_pointers(t: &OperatorTensor) -> Result<OperatorTensor> {
    let g = t.gauge().clone();
    let grp = leg_groups(t);
    let mut cur = t.clone();
    // track original leg index of each current leg
    let mut origin: Vec<usize> = (0..t.legs().len()).collect();
    let n_orig = t.legs().len();
    for &li in &grp.incomes {
        let pos = origin.iter().position(|&o| o == li).expect("leg");
        let x = t.legs()[li].pointer().expect("pointer").clone();
        let mr = OperatorTensor::maximal_result(&x, &pointer_system(&x), &g)?;
        cur = mr.join(&[(1, pos)], &cur)?;
        origin.remove(pos);
        origin.insert(0, n_orig + li);
    }
    for &li in &grp.outcomes {
        let pos = origin.iter().position(|&o| o == li).expect("leg");
        let y = t.legs()[li].pointer().expect("pointer").clone();
        let mp = OperatorTensor::maximal_prep(&y, &pointer_system(&y), &g)?;
        cur = cur.join(&[(pos, 0)], &mp)?;
        origin.remove(pos);
        origin.push(n_orig + li);
    }
    let want: Vec<usize> = grp
        .incomes
        .iter()
        .map(|&i| n_orig + i)
        .chain(grp.inputs.iter().copied())
        .chain(grp.outputs.iter().copied())
        .chain(grp.outcomes.iter().map(|&i| n_orig + i))
        .collect();
    let order: Vec<usize> = want.iter().map(|w| origin.iter().position(|o| o == w).expect("leg")).collect();
    cur.permute_legs(&order)
}

/// Eigen-Kraus family of one pointer block: income value `x`, outcome
/// value `y`, vectors indexed `[b · n_a + a]`.
struct KrausBlock {
    x: usize,
    y: usize,
    kraus: Vec<Vec<C64>>,
}

/// Index sizes of a dilation: `xa = (x, a)`, `by = (b, y)`, ancillas
/// `z` (dim `n_by`) in and `w` (dim `n_xa`) out.
#[derive(Clone, Copy)]
struct Dims {
    n_x: usize,
    n_a: usize,
    n_b: usize,
    n_y: usize,
}

impl Dims {
    fn n_xa(&self) -> usize {
        self.n_x * self.n_a
    }
    fn n_by(&self) -> usize {
        self.n_b * self.n_y
    }
    fn d(&self) -> usize {
        self.n_xa() * self.n_by()
    }
}

/// Splits the T-matrix `M[(by, xa), (by', xa')]` into its pointer-diagonal
/// blocks and eigendecomposes each one.
fn kraus_blocks(m: &ComplexTensor, dims: Dims) -> Result<Vec<KrausBlock>> {
    let Dims { n_x, n_a, n_b, n_y } = dims;
    let (n_xa, n_ba) = (dims.n_xa(), n_b * n_a);
    let scale = m.max_abs().max(f64::MIN_POSITIVE);
    let mut out = Vec::new();
    for x in 0..n_x {
        for y in 0..n_y {
            let idx = |k: usize| ((k / n_a) * n_y + y) * n_xa + x * n_a + k % n_a;
            let sub = ComplexTensor::from_fn(&[n_ba, n_ba], |i| m.get(&[idx(i[0]), idx(i[1])]));
            let eig = linalg::hermitian_eig(HermitianMatrixView::new(&sub, TOL_HERM)?);
            let mut kraus = Vec::new();
            for k in (0..n_ba).rev() {
                let lam = eig.values[k];
                if lam > 1e-14 * scale {
                    kraus.push(eig.vector(k).into_iter().map(|z| z * lam.sqrt()).collect());
                }
            }
            if !kraus.is_empty() {
                out.push(KrausBlock { x, y, kraus });
            }
        }
    }
    Ok(out)
}

/// `A†B` for row-major `d × d` matrices.
fn adjoint_mul(a: &[C64], b: &[C64], d: usize) -> Vec<C64> {
    let mut out = vec![ZERO; d * d];
    for k in 0..d {
        for i in 0..d {
            let aki = a[k * d + i].conj();
            if aki == ZERO {
                continue;
            }
            for j in 0..d {
                out[i * d + j] += aki * b[k * d + j];
            }
        }
    }
    out
}

/// Real coordinates of a Hermitian matrix: diagonal, then upper pairs.
fn hermitian_coords(h: &[C64], d: usize, out: &mut Vec<f64>) {
    out.clear();
    for i in 0..d {
        out.push(h[i * d + i].re);
    }
    for i in 0..d {
        for j in i + 1..d {
            out.push(h[i * d + j].re);
            out.push(h[i * d + j].im);
        }
    }
}

/// Generator `(i, j, imaginary)` of the unitary group acting on the right;
/// only those touching one of the first `r` columns move an isometry.
fn generators(d: usize, r: usize) -> Vec<(usize, usize, bool)> {
    let mut out: Vec<(usize, usize, bool)> = (0..r).map(|i| (i, i, true)).collect();
    for i in 0..r.min(d) {
        for j in i + 1..d {
            out.push((i, j, false));
            out.push((i, j, true));
        }
    }
    out
}

/// `U · A` for the anti-Hermitian generator, restricted to the first `r`
/// columns. Returns the nonzero columns.
fn generator_columns(u: &[C64], d: usize, r: usize, (i, j, imag): (usize, usize, bool)) -> Vec<(usize, Vec<C64>)> {
    let col = |k: usize, s: C64| -> Vec<C64> { (0..d).map(|l| u[l * d + k] * s).collect() };
    let i_unit = C64::new(0.0, 1.0);
    if i == j {
        return vec![(i, col(i, i_unit))];
    }
    // A[i, j] = z, A[j, i] = -conj(z)
    let z = if imag { i_unit } else { linalg::ONE };
    let mut out = vec![];
    if j < r {
        out.push((j, col(i, z)));
    }
    out.push((i, col(j, -z.conj())));
    out
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

const SEARCH_RESTARTS: u64 = 24;
const SEARCH_ITERS: usize = 200;
const SEARCH_TARGET: f64 = 1e-13;

/// Levenberg-Marquardt search for a unitary `W` whose pointer blocks are
/// isometric mixings of the block Kraus families:
/// `W[(b, y, w), (x, a, z)] = √c · Σ_m Q_xy[(w, z), m] K_xy,m[b, a]`,
/// each `Q_xy` being the leading columns of a unitary `U_xy`.
struct Search<'a> {
    blocks: &'a [KrausBlock],
    dims: Dims,
    sqrt_c: f64,
}

impl Search<'_> {
    /// Adds block `k` with mixing columns `cols` (column index, column) to `w`.
    fn add_block(&self, w: &mut [C64], k: usize, cols: &[(usize, Vec<C64>)]) {
        let Dims { n_a, n_b, n_y, .. } = self.dims;
        let (n_xa, n_by, d) = (self.dims.n_xa(), self.dims.n_by(), self.dims.d());
        let blk = &self.blocks[k];
        for (m, q) in cols {
            let km = &blk.kraus[*m];
            for (l, &qlm) in q.iter().enumerate() {
                if qlm == ZERO {
                    continue;
                }
                let (wi, zi) = (l / n_by, l % n_by);
                let s = qlm * self.sqrt_c;
                for b in 0..n_b {
                    let row = (b * n_y + blk.y) * n_xa + wi;
                    for a in 0..n_a {
                        w[row * d + (blk.x * n_a + a) * n_by + zi] += s * km[b * n_a + a];
                    }
                }
            }
        }
    }

    fn assemble(&self, us: &[Vec<C64>]) -> Vec<C64> {
        let d = self.dims.d();
        let mut w = vec![ZERO; d * d];
        for (k, blk) in self.blocks.iter().enumerate() {
            let cols: Vec<(usize, Vec<C64>)> =
                (0..blk.kraus.len()).map(|m| (m, (0..d).map(|l| us[k][l * d + m]).collect())).collect();
            self.add_block(&mut w, k, &cols);
        }
        w
    }

    /// Residual `W†W − 1` in Hermitian coordinates, plus `W`.
    fn residual(&self, us: &[Vec<C64>]) -> (Vec<f64>, Vec<C64>) {
        let d = self.dims.d();
        let w = self.assemble(us);
        let mut f = adjoint_mul(&w, &w, d);
        for i in 0..d {
            f[i * d + i] -= linalg::ONE;
        }
        let mut out = Vec::with_capacity(d * d);
        hermitian_coords(&f, d, &mut out);
        (out, w)
    }

    fn parameters(&self) -> Vec<(usize, (usize, usize, bool))> {
        let d = self.dims.d();
        self.blocks
            .iter()
            .enumerate()
            .flat_map(|(k, b)| generators(d, b.kraus.len()).into_iter().map(move |gen| (k, gen)))
            .collect()
    }

    /// Jacobian as an `n × P` matrix, one column per parameter.
    fn jacobian(&self, us: &[Vec<C64>], w: &[C64], params: &[(usize, (usize, usize, bool))]) -> DMatrix<f64> {
        let d = self.dims.d();
        let mut buf = Vec::with_capacity(d * d);
        let mut jac = DMatrix::zeros(d * d, params.len());
        for (p, &(k, gen)) in params.iter().enumerate() {
            let cols = generator_columns(&us[k], d, self.blocks[k].kraus.len(), gen);
            let mut dw = vec![ZERO; d * d];
            self.add_block(&mut dw, k, &cols);
            let h = adjoint_mul(&dw, w, d);
            let mut df = vec![ZERO; d * d];
            for i in 0..d {
                for j in 0..d {
                    df[i * d + j] = h[i * d + j] + h[j * d + i].conj();
                }
            }
            buf.clear();
            hermitian_coords(&df, d, &mut buf);
            jac.column_mut(p).copy_from_slice(&buf);
        }
        jac
    }

    /// `U_k ← polar(U_k (1 + A_k))` for the step `delta`.
    fn step(&self, us: &[Vec<C64>], params: &[(usize, (usize, usize, bool))], delta: &[f64]) -> Result<Vec<Vec<C64>>> {
        let d = self.dims.d();
        let mut gens: Vec<Vec<C64>> = vec![vec![ZERO; d * d]; us.len()];
        for (&(k, (i, j, imag)), &t) in params.iter().zip(delta) {
            let a = &mut gens[k];
            if i == j {
                a[i * d + i] += C64::new(0.0, t);
            } else {
                let z = if imag { C64::new(0.0, t) } else { C64::new(t, 0.0) };
                a[i * d + j] += z;
                a[j * d + i] -= z.conj();
            }
        }
        us.iter()
            .zip(&gens)
            .map(|(u, a)| {
                let m = ComplexTensor::from_fn(&[d, d], |ix| {
                    let (r, c) = (ix[0], ix[1]);
                    let mut s = u[r * d + c];
                    for p in 0..d {
                        s += u[r * d + p] * a[p * d + c];
                    }
                    s
                });
                Ok(linalg::polar_isometry(&m)?.into_data())
            })
            .collect()
    }

    /// One descent from the starting unitaries. The damped normal equations
    /// are solved in residual space, `δ = −Jᵀ (J Jᵀ + μ)⁻¹ f`.
    fn run(&self, mut us: Vec<Vec<C64>>, iters: &mut usize) -> Result<(f64, Vec<C64>)> {
        let params = self.parameters();
        let (mut f, mut w) = self.residual(&us);
        let n = f.len();
        let mut cost = sum_sq(&f);
        let mut mu = 1e-3;
        let mut window = cost;
        for it in 0..SEARCH_ITERS {
            if max_abs(&f) < SEARCH_TARGET {
                break;
            }
            if it % 20 == 19 {
                // stalled in a local minimum
                if cost > 0.8 * window {
                    break;
                }
                window = cost;
            }
            *iters += 1;
            let jac = self.jacobian(&us, &w, &params);
            let jjt = &jac * jac.transpose();
            let fv = DVector::from_column_slice(&f);
            let trace = jjt.trace() / n as f64;
            let mut improved = false;
            for _ in 0..40 {
                let mut damped = jjt.clone();
                for a in 0..n {
                    damped[(a, a)] += mu * trace.max(1e-300);
                }
                let Some(chol) = damped.cholesky() else {
                    mu *= 10.0;
                    continue;
                };
                let delta: Vec<f64> = (-(jac.transpose() * chol.solve(&fv))).as_slice().to_vec();
                let trial = self.step(&us, &params, &delta)?;
                let (tf, tw) = self.residual(&trial);
                let tcost = sum_sq(&tf);
                if tcost < cost {
                    us = trial;
                    f = tf;
                    w = tw;
                    cost = tcost;
                    mu = (mu / 3.0).max(1e-15);
                    improved = true;
                    break;
                }
                mu *= 4.0;
            }
            if !improved {
                break;
            }
        }
        Ok((max_abs(&f), w))
    }
}

/// Tries the plain eigen-Kraus assignment when it is already unitary, then
/// seeded Haar-random mixings, keeping the best `W` found.
fn search_unitary(blocks: &[KrausBlock], dims: Dims, sqrt_c: f64) -> Result<(ComplexTensor, usize)> {
    let s = Search { blocks, dims, sqrt_c };
    let d = dims.d();
    let mut best: Option<(f64, Vec<C64>)> = None;
    let mut iters = 0;
    for restart in 0..SEARCH_RESTARTS {
        let us: Vec<Vec<C64>> = if restart == 0 {
            vec![linalg::identity(d).into_data(); blocks.len()]
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + restart);
            (0..blocks.len()).map(|_| linalg::random_unitary(d, &mut rng).into_data()).collect()
        };
        if restart == 0 && max_abs(&s.residual(&us).0) >= SEARCH_TARGET {
            // the identity mixing is a saddle unless already exact
            continue;
        }
        let (dev, w) = s.run(us, &mut iters)?;
        if best.as_ref().map(|b| dev < b.0).unwrap_or(true) {
            best = Some((dev, w));
        }
        if dev < SEARCH_TARGET {
            break;
        }
    }
    let (_, w) = best.expect("at least one restart");
    Ok((ComplexTensor::new(vec![d, d], w)?, iters))
}

/// Unitary dilation of a physical tensor.
pub fn dilate(t: &OperatorTensor) -> Result<Dilation> {
    let report = is_physical(t, CAUSAL_TOL)?;
    if !report.physical {
        return Err(Error::NotPhysical(format!(
            "min_eig {:.3e}, forward residual {:.3e}, backward residual {:.3e}",
            report.min_eig, report.fwd_residual, report.bwd_residual
        )));
    }
    let g = t.gauge().clone();
    let grp = leg_groups(t);
    let v = absorb_pointers(t)?;
    let sys_types = |idx: &[usize]| -> Vec<SystemType> {
        idx.iter().map(|&i| t.legs()[i].system().expect("system").clone()).collect()
    };
    let ptr_sys = |idx: &[usize]| -> Vec<SystemType> {
        idx.iter().map(|&i| pointer_system(t.legs()[i].pointer().expect("pointer"))).collect()
    };
    let xa: Vec<SystemType> = ptr_sys(&grp.incomes).into_iter().chain(sys_types(&grp.inputs)).collect();
    let by: Vec<SystemType> = sys_types(&grp.outputs).into_iter().chain(ptr_sys(&grp.outcomes)).collect();
    let n_xa: usize = xa.iter().map(|s| s.dim()).product();
    let n_by: usize = by.iter().map(|s| s.dim()).product();
    let c = g.alpha_composite(&xa) * ((n_xa * n_by) as f64).sqrt() / g.alpha_composite(&by);

    let dims = Dims {
        n_x: xa[..grp.incomes.len()].iter().map(|s| s.dim()).product(),
        n_a: xa[grp.incomes.len()..].iter().map(|s| s.dim()).product(),
        n_b: by[..grp.outputs.len()].iter().map(|s| s.dim()).product(),
        n_y: by[grp.outputs.len()..].iter().map(|s| s.dim()).product(),
    };
    let (m, _, _) = t_matrix(&v, &[])?;
    let blocks = kraus_blocks(&m, dims)?;
    if blocks.is_empty() {
        return Err(Error::NotPhysical("zero tensor has no dilation".into()));
    }
    let (w_raw, iterations) = search_unitary(&blocks, dims, c.sqrt())?;
    let unitary = linalg::polar_isometry(&w_raw)?;
    let completion_norm = unitary.max_abs_diff(&w_raw);
    let unitarity_residual = linalg::unitarity_deviation(&unitary)?;
    let ancilla_in = SystemType::new("anc_z", n_by)?;
    let ancilla_out = SystemType::new("anc_w", n_xa)?;
    let mut dil = Dilation {
        unitary,
        inputs: xa.iter().cloned().chain(std::iter::once(ancilla_in.clone())).collect(),
        outputs: by.iter().cloned().chain(std::iter::once(ancilla_out.clone())).collect(),
        ancilla_in,
        ancilla_out,
        coefficient: c,
        unitarity_residual,
        reconstruction_residual: f64::INFINITY,
        completion_norm,
        iterations,
        target_legs: t.legs().to_vec(),
    };
    let rec = dil.reconstruct(&g)?;
    dil.reconstruction_residual = rec.max_abs_diff(t);
    if dil.reconstruction_residual > DIL_TOL {
        return Err(Error::UnitarityResidue(dil.reconstruction_residual.max(completion_norm)));
    }
    Ok(dil)
}

/// Random physical tensor with canonical leg order (incomes, inputs,
/// outputs, outcomes), built from a Haar-random dilation.
pub fn random_physical(spec: &KrausLegs, seed: u64, g: &GaugeConfig) -> Result<OperatorTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xa: Vec<SystemType> =
        spec.incomes.iter().map(pointer_system).chain(spec.inputs.iter().cloned()).collect();
    let by: Vec<SystemType> =
        spec.outputs.iter().cloned().chain(spec.outcomes.iter().map(pointer_system)).collect();
    let n_xa: usize = xa.iter().map(|s| s.dim()).product();
    let n_by: usize = by.iter().map(|s| s.dim()).product();
    let u = linalg::random_unitary(n_xa * n_by, &mut rng);
    let z = SystemType::new("anc_z", n_by)?;
    let w = SystemType::new("anc_w", n_xa)?;
    let inputs: Vec<SystemType> = xa.into_iter().chain(std::iter::once(z)).collect();
    let outputs: Vec<SystemType> = by.into_iter().chain(std::iter::once(w)).collect();
    let core = OperatorTensor::from_unitary_legs(&u, &inputs, &outputs, g)?;
    let target = spec.legs();
    let (c, ports) = dilation_fragment(core, &target, g)?;
    contract_to_target(&c, &ports)
}
