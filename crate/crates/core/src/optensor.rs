//! Operator tensors: typed legs over a complex array, the special operators,
//! adjoint, time reversal and gauge conversion.
//!
//! A system leg contributes two axes (ket, bra) of extent `dim`; a pointer leg
//! contributes one real axis of extent `card`. Axes follow leg order.
//! Wiring pairs ket with ket and bra with bra; pointer wires are dot products.

use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{self, for_each_index, ComplexTensor, C64, ONE, ZERO};
use crate::types::{GaugeConfig, PointerType, SystemType};

pub const TOL_HERM: f64 = 1e-9;
pub const UNITARY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LegKind {
    SysIn,
    SysOut,
    PtrIn,
    PtrOut,
}

impl LegKind {
    pub fn is_system(self) -> bool {
        matches!(self, LegKind::SysIn | LegKind::SysOut)
    }

    pub fn is_input_side(self) -> bool {
        matches!(self, LegKind::SysIn | LegKind::PtrIn)
    }

    pub fn reversed(self) -> Self {
        match self {
            LegKind::SysIn => LegKind::SysOut,
            LegKind::SysOut => LegKind::SysIn,
            LegKind::PtrIn => LegKind::PtrOut,
            LegKind::PtrOut => LegKind::PtrIn,
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            LegKind::SysIn => "in",
            LegKind::SysOut => "out",
            LegKind::PtrIn => "income",
            LegKind::PtrOut => "outcome",
        }
    }
}

impl fmt::Display for LegKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LegType {
    System(SystemType),
    Pointer(PointerType),
}

impl LegType {
    pub fn extent(&self) -> usize {
        match self {
            LegType::System(a) => a.dim(),
            LegType::Pointer(x) => x.card(),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            LegType::System(a) => a.name(),
            LegType::Pointer(x) => x.name(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Leg {
    kind: LegKind,
    ty: LegType,
}

impl Leg {
    pub fn new(kind: LegKind, ty: LegType) -> Result<Self> {
        if kind.is_system() != matches!(ty, LegType::System(_)) {
            return Err(Error::KindMismatch(format!("{kind} leg cannot carry type {}", ty.name())));
        }
        Ok(Leg { kind, ty })
    }

    pub fn sys_in(a: &SystemType) -> Self {
        Leg { kind: LegKind::SysIn, ty: LegType::System(a.clone()) }
    }

    pub fn sys_out(a: &SystemType) -> Self {
        Leg { kind: LegKind::SysOut, ty: LegType::System(a.clone()) }
    }

    pub fn ptr_in(x: &PointerType) -> Self {
        Leg { kind: LegKind::PtrIn, ty: LegType::Pointer(x.clone()) }
    }

    pub fn ptr_out(x: &PointerType) -> Self {
        Leg { kind: LegKind::PtrOut, ty: LegType::Pointer(x.clone()) }
    }

    pub fn kind(&self) -> LegKind {
        self.kind
    }

    pub fn ty(&self) -> &LegType {
        &self.ty
    }

    pub fn extent(&self) -> usize {
        self.ty.extent()
    }

    pub fn n_axes(&self) -> usize {
        if self.kind.is_system() {
            2
        } else {
            1
        }
    }

    pub fn reversed(&self) -> Self {
        Leg { kind: self.kind.reversed(), ty: self.ty.clone() }
    }

    /// α for system legs, β for pointer legs.
    pub fn gauge_value(&self, g: &GaugeConfig) -> f64 {
        match &self.ty {
            LegType::System(a) => g.alpha(a),
            LegType::Pointer(x) => g.beta(x),
        }
    }

    pub fn system(&self) -> Option<&SystemType> {
        match &self.ty {
            LegType::System(a) => Some(a),
            LegType::Pointer(_) => None,
        }
    }

    pub fn pointer(&self) -> Option<&PointerType> {
        match &self.ty {
            LegType::Pointer(x) => Some(x),
            LegType::System(_) => None,
        }
    }
}

impl fmt::Display for Leg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.kind, self.ty.name())
    }
}

/// What a tensor is known to be, kept so circuits can recognise readouts and
/// flat operations and so serialization can use constructor form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Generic,
    IgnorePrep,
    IgnoreResult,
    FlatPrep,
    FlatResult,
    Readout(usize),
    NullBox,
    MaximalPrep,
    MaximalResult,
}

impl Role {
    fn time_reversed(self) -> Self {
        match self {
            Role::IgnorePrep => Role::IgnoreResult,
            Role::IgnoreResult => Role::IgnorePrep,
            Role::FlatPrep => Role::FlatResult,
            Role::FlatResult => Role::FlatPrep,
            Role::MaximalPrep => Role::MaximalResult,
            Role::MaximalResult => Role::MaximalPrep,
            r => r,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorTensor {
    legs: Vec<Leg>,
    data: ComplexTensor,
    gauge: GaugeConfig,
    role: Role,
}

pub(crate) fn shape_for(legs: &[Leg]) -> Vec<usize> {
    let mut shape = Vec::new();
    for l in legs {
        for _ in 0..l.n_axes() {
            shape.push(l.extent());
        }
    }
    shape
}

/// Multi-leg Kraus layout. Pointer values on each operator list the
/// incomes first, then the outcomes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KrausLegs {
    pub inputs: Vec<SystemType>,
    pub outputs: Vec<SystemType>,
    pub incomes: Vec<PointerType>,
    pub outcomes: Vec<PointerType>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrausOp {
    pub pointer: Vec<usize>,
    /// `N_out × N_in`, composite dimensions in declaration order.
    pub matrix: ComplexTensor,
}

impl KrausOp {
    pub fn new(matrix: ComplexTensor) -> Self {
        KrausOp { pointer: Vec::new(), matrix }
    }

    pub fn with_pointer(pointer: Vec<usize>, matrix: ComplexTensor) -> Self {
        KrausOp { pointer, matrix }
    }
}

impl KrausLegs {
    pub fn channel(a: &SystemType, b: &SystemType) -> Self {
        KrausLegs { inputs: vec![a.clone()], outputs: vec![b.clone()], ..Default::default() }
    }

    /// Canonical leg order: incomes, inputs, outputs, outcomes.
    pub fn legs(&self) -> Vec<Leg> {
        self.incomes
            .iter()
            .map(Leg::ptr_in)
            .chain(self.inputs.iter().map(Leg::sys_in))
            .chain(self.outputs.iter().map(Leg::sys_out))
            .chain(self.outcomes.iter().map(Leg::ptr_out))
            .collect()
    }

    fn n_in(&self) -> usize {
        self.inputs.iter().map(|a| a.dim()).product()
    }

    fn n_out(&self) -> usize {
        self.outputs.iter().map(|a| a.dim()).product()
    }
}

fn unflatten(mut flat: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for i in (0..dims.len()).rev() {
        out[i] = flat % dims[i];
        flat /= dims[i];
    }
    out
}

impl OperatorTensor {
    /// Validates shape and Hermiticity.
    pub fn new(legs: Vec<Leg>, data: ComplexTensor, gauge: GaugeConfig) -> Result<Self> {
        let t = Self::from_parts(legs, data, gauge, Role::Generic)?;
        let dev = t.hermiticity_deviation();
        if dev > TOL_HERM * t.data.max_abs().max(1.0) {
            return Err(Error::NotHermitian(dev));
        }
        Ok(t)
    }

    /// Shape-checked but skips the Hermiticity test.
    pub fn from_parts(legs: Vec<Leg>, data: ComplexTensor, gauge: GaugeConfig, role: Role) -> Result<Self> {
        let shape = shape_for(&legs);
        if data.shape() != shape.as_slice() {
            return Err(Error::Shape(format!(
                "legs need shape {shape:?}, data has {:?}",
                data.shape()
            )));
        }
        Ok(OperatorTensor { legs, data, gauge, role })
    }

    pub fn legs(&self) -> &[Leg] {
        &self.legs
    }

    pub fn data(&self) -> &ComplexTensor {
        &self.data
    }

    pub fn gauge(&self) -> &GaugeConfig {
        &self.gauge
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    /// First data axis of each leg.
    pub fn axis_offsets(&self) -> Vec<usize> {
        let mut offs = Vec::with_capacity(self.legs.len());
        let mut acc = 0;
        for l in &self.legs {
            offs.push(acc);
            acc += l.n_axes();
        }
        offs
    }

    pub fn legs_of_kind(&self, kind: LegKind) -> Vec<usize> {
        (0..self.legs.len()).filter(|&i| self.legs[i].kind == kind).collect()
    }

    /// Index of the `k`-th leg of the given kind.
    pub fn leg_index(&self, kind: LegKind, k: usize) -> Option<usize> {
        self.legs_of_kind(kind).get(k).copied()
    }

    pub fn scalar_value(&self) -> Option<C64> {
        if self.legs.is_empty() {
            self.data.to_scalar()
        } else {
            None
        }
    }

    /// Max deviation between the data and its ket/bra-swapped conjugate.
    pub fn hermiticity_deviation(&self) -> f64 {
        let perm = self.ket_bra_swap_perm();
        match self.data.permute(&perm) {
            Ok(p) => p.conj().max_abs_diff(&self.data),
            Err(_) => f64::INFINITY,
        }
    }

    fn ket_bra_swap_perm(&self) -> Vec<usize> {
        let mut perm = Vec::with_capacity(self.data.rank());
        let mut acc = 0;
        for l in &self.legs {
            if l.kind.is_system() {
                perm.push(acc + 1);
                perm.push(acc);
                acc += 2;
            } else {
                perm.push(acc);
                acc += 1;
            }
        }
        perm
    }

    pub fn scale(&self, s: f64) -> Self {
        OperatorTensor {
            legs: self.legs.clone(),
            data: self.data.scale_real(s),
            gauge: self.gauge.clone(),
            role: if s == 1.0 { self.role } else { Role::Generic },
        }
    }

    // ---- special operators ---------------------------------------------------

    pub fn ignore_prep(a: &SystemType, g: &GaugeConfig) -> Self {
        let c = g.alpha(a) / (a.dim() as f64).sqrt();
        let data = linalg::identity(a.dim()).scale_real(c);
        OperatorTensor { legs: vec![Leg::sys_out(a)], data, gauge: g.clone(), role: Role::IgnorePrep }
    }

    pub fn ignore_result(a: &SystemType, g: &GaugeConfig) -> Self {
        let c = 1.0 / (g.alpha(a) * (a.dim() as f64).sqrt());
        let data = linalg::identity(a.dim()).scale_real(c);
        OperatorTensor { legs: vec![Leg::sys_in(a)], data, gauge: g.clone(), role: Role::IgnoreResult }
    }

    pub fn flat_prep(x: &PointerType, g: &GaugeConfig) -> Self {
        let c = g.beta(x) / (x.card() as f64).sqrt();
        let data = ComplexTensor::from_fn(&[x.card()], |_| C64::new(c, 0.0));
        OperatorTensor { legs: vec![Leg::ptr_out(x)], data, gauge: g.clone(), role: Role::FlatPrep }
    }

    pub fn flat_result(x: &PointerType, g: &GaugeConfig) -> Self {
        let c = 1.0 / (g.beta(x) * (x.card() as f64).sqrt());
        let data = ComplexTensor::from_fn(&[x.card()], |_| C64::new(c, 0.0));
        OperatorTensor { legs: vec![Leg::ptr_in(x)], data, gauge: g.clone(), role: Role::FlatResult }
    }

    /// Composite ignore preparation on several systems.
    pub fn ignore_prep_composite(types: &[SystemType], g: &GaugeConfig) -> Self {
        Self::product_of(types.iter().map(|a| Self::ignore_prep(a, g)), g)
    }

    pub fn ignore_result_composite(types: &[SystemType], g: &GaugeConfig) -> Self {
        Self::product_of(types.iter().map(|a| Self::ignore_result(a, g)), g)
    }

    pub fn flat_prep_composite(types: &[PointerType], g: &GaugeConfig) -> Self {
        Self::product_of(types.iter().map(|x| Self::flat_prep(x, g)), g)
    }

    pub fn flat_result_composite(types: &[PointerType], g: &GaugeConfig) -> Self {
        Self::product_of(types.iter().map(|x| Self::flat_result(x, g)), g)
    }

    fn product_of(parts: impl Iterator<Item = OperatorTensor>, g: &GaugeConfig) -> Self {
        parts.fold(Self::unit(g), |acc, t| acc.tensor_product(&t))
    }

    /// The empty tensor with value 1.
    pub fn unit(g: &GaugeConfig) -> Self {
        OperatorTensor { legs: vec![], data: ComplexTensor::scalar(ONE), gauge: g.clone(), role: Role::Generic }
    }

    pub fn readout(x: &PointerType, value: usize, g: &GaugeConfig) -> Result<Self> {
        if value >= x.card() {
            return Err(Error::Range(format!("readout value {value} for card {}", x.card())));
        }
        let data = ComplexTensor::from_fn(&[x.card(), x.card()], |i| {
            if i[0] == value && i[1] == value { ONE } else { ZERO }
        });
        Ok(OperatorTensor {
            legs: vec![Leg::ptr_in(x), Leg::ptr_out(x)],
            data,
            gauge: g.clone(),
            role: Role::Readout(value),
        })
    }

    pub fn null_box(x: &PointerType, g: &GaugeConfig) -> Self {
        OperatorTensor {
            legs: vec![Leg::ptr_in(x), Leg::ptr_out(x)],
            data: ComplexTensor::zeros(&[x.card(), x.card()]),
            gauge: g.clone(),
            role: Role::NullBox,
        }
    }

    fn maximal_data(n: usize, c: f64) -> ComplexTensor {
        ComplexTensor::from_fn(&[n, n, n], |i| {
            if i[0] == i[1] && i[1] == i[2] { C64::new(c, 0.0) } else { ZERO }
        })
    }

    /// Legs: income `x`, output `a`.
    pub fn maximal_prep(x: &PointerType, a: &SystemType, g: &GaugeConfig) -> Result<Self> {
        if x.card() != a.dim() {
            return Err(Error::TypeMismatch(format!("maximal operator needs card {} == dim {}", x.card(), a.dim())));
        }
        let c = g.alpha(a) / g.beta(x);
        Ok(OperatorTensor {
            legs: vec![Leg::ptr_in(x), Leg::sys_out(a)],
            data: Self::maximal_data(a.dim(), c),
            gauge: g.clone(),
            role: Role::MaximalPrep,
        })
    }

    /// Legs: input `a`, outcome `x`.
    pub fn maximal_result(x: &PointerType, a: &SystemType, g: &GaugeConfig) -> Result<Self> {
        if x.card() != a.dim() {
            return Err(Error::TypeMismatch(format!("maximal operator needs card {} == dim {}", x.card(), a.dim())));
        }
        let c = g.beta(x) / g.alpha(a);
        Ok(OperatorTensor {
            legs: vec![Leg::sys_in(a), Leg::ptr_out(x)],
            data: Self::maximal_data(a.dim(), c),
            gauge: g.clone(),
            role: Role::MaximalResult,
        })
    }

    /// Doubles a unitary `a → b`. Entries are taken in the symmetric gauge and
    /// converted to `g`, which contributes the factor `α_b/α_a`.
    pub fn from_unitary(u: &ComplexTensor, a: &SystemType, b: &SystemType, g: &GaugeConfig) -> Result<Self> {
        Self::from_unitary_legs(u, std::slice::from_ref(a), std::slice::from_ref(b), g)
    }

    pub fn from_unitary_legs(
        u: &ComplexTensor,
        inputs: &[SystemType],
        outputs: &[SystemType],
        g: &GaugeConfig,
    ) -> Result<Self> {
        let spec = KrausLegs { inputs: inputs.to_vec(), outputs: outputs.to_vec(), ..Default::default() };
        if u.shape() != [spec.n_out(), spec.n_in()] {
            return Err(Error::Shape(format!(
                "unitary must be {}x{}, got {:?}",
                spec.n_out(),
                spec.n_in(),
                u.shape()
            )));
        }
        let dev = linalg::unitarity_deviation(u)?;
        if dev > UNITARY_TOL {
            return Err(Error::NotUnitary(dev));
        }
        Self::from_kraus(&[KrausOp::new(u.clone())], &spec, g)
    }

    /// `Σ_l K_l ⊗ conj(K_l)` per pointer assignment, in symmetric-gauge
    /// entries converted to `g`.
    pub fn from_kraus(ops: &[KrausOp], spec: &KrausLegs, g: &GaugeConfig) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::Shape("empty Kraus list".into()));
        }
        let n_in = spec.n_in();
        let n_out = spec.n_out();
        let ptr_dims: Vec<usize> =
            spec.incomes.iter().chain(&spec.outcomes).map(|x| x.card()).collect();
        let in_dims: Vec<usize> = spec.inputs.iter().map(|a| a.dim()).collect();
        let out_dims: Vec<usize> = spec.outputs.iter().map(|a| a.dim()).collect();
        for op in ops {
            if op.matrix.shape() != [n_out, n_in] {
                return Err(Error::Shape(format!(
                    "Kraus operator must be {n_out}x{n_in}, got {:?}",
                    op.matrix.shape()
                )));
            }
            if op.pointer.len() != ptr_dims.len()
                || op.pointer.iter().zip(&ptr_dims).any(|(&v, &n)| v >= n)
            {
                return Err(Error::Range(format!(
                    "pointer values {:?} do not fit cards {ptr_dims:?}",
                    op.pointer
                )));
            }
        }
        let legs = spec.legs();
        let shape = shape_for(&legs);
        let mut data = ComplexTensor::zeros(&shape);
        let n_inc = spec.incomes.len();
        let mut idx = vec![0usize; shape.len()];
        for op in ops {
            for o1 in 0..n_out {
                for i1 in 0..n_in {
                    let k1 = op.matrix.get(&[o1, i1]);
                    if k1 == ZERO {
                        continue;
                    }
                    for o2 in 0..n_out {
                        for i2 in 0..n_in {
                            let k2 = op.matrix.get(&[o2, i2]).conj();
                            if k2 == ZERO {
                                continue;
                            }
                            let ik = unflatten(i1, &in_dims);
                            let ib = unflatten(i2, &in_dims);
                            let ok = unflatten(o1, &out_dims);
                            let ob = unflatten(o2, &out_dims);
                            let mut p = 0;
                            for v in op.pointer.iter().take(n_inc) {
                                idx[p] = *v;
                                p += 1;
                            }
                            for j in 0..in_dims.len() {
                                idx[p] = ik[j];
                                idx[p + 1] = ib[j];
                                p += 2;
                            }
                            for j in 0..out_dims.len() {
                                idx[p] = ok[j];
                                idx[p + 1] = ob[j];
                                p += 2;
                            }
                            for v in op.pointer.iter().skip(n_inc) {
                                idx[p] = *v;
                                p += 1;
                            }
                            let cur = data.get(&idx);
                            data.set(&idx, cur + k1 * k2);
                        }
                    }
                }
            }
        }
        let sym = OperatorTensor { legs, data, gauge: GaugeConfig::symmetric(), role: Role::Generic };
        Ok(sym.to_gauge(g))
    }

    // ---- structural operations ----------------------------------------------

    pub fn tensor_product(&self, other: &OperatorTensor) -> OperatorTensor {
        let mut legs = self.legs.clone();
        legs.extend(other.legs.iter().cloned());
        OperatorTensor {
            legs,
            data: linalg::tensor_product(&self.data, &other.data),
            gauge: self.gauge.clone(),
            role: Role::Generic,
        }
    }

    /// Connects leg `out_leg` of `self` (SysOut/PtrOut) with leg `in_leg` of
    /// `other` (SysIn/PtrIn). The result keeps the remaining legs of `self`
    /// followed by those of `other`.
    pub fn wire_into(&self, out_leg: usize, other: &OperatorTensor, in_leg: usize) -> Result<OperatorTensor> {
        let (lo, li) = (&self.legs[out_leg], &other.legs[in_leg]);
        let ok = matches!(
            (lo.kind, li.kind),
            (LegKind::SysOut, LegKind::SysIn) | (LegKind::PtrOut, LegKind::PtrIn)
        );
        if !ok {
            return Err(Error::KindMismatch(format!("cannot wire {lo} into {li}")));
        }
        if lo.ty != li.ty {
            return Err(Error::TypeMismatch(format!("{lo} vs {li}")));
        }
        self.join(&[(out_leg, in_leg)], other)
    }

    /// Contracts each pair `(leg of self, leg of other)` without kind checks.
    pub(crate) fn join(&self, pairs: &[(usize, usize)], other: &OperatorTensor) -> Result<OperatorTensor> {
        let offs_a = self.axis_offsets();
        let offs_b = other.axis_offsets();
        let mut axes_a = Vec::new();
        let mut axes_b = Vec::new();
        for &(i, j) in pairs {
            let n = self.legs[i].n_axes();
            if n != other.legs[j].n_axes() {
                return Err(Error::KindMismatch("system leg against pointer leg".into()));
            }
            for k in 0..n {
                axes_a.push(offs_a[i] + k);
                axes_b.push(offs_b[j] + k);
            }
        }
        let data = linalg::contract(&self.data, &axes_a, &other.data, &axes_b)?;
        let legs: Vec<Leg> = self
            .legs
            .iter()
            .enumerate()
            .filter(|(i, _)| !pairs.iter().any(|p| p.0 == *i))
            .map(|(_, l)| l.clone())
            .chain(
                other.legs.iter().enumerate().filter(|(j, _)| !pairs.iter().any(|p| p.1 == *j)).map(|(_, l)| l.clone()),
            )
            .collect();
        Ok(OperatorTensor { legs, data, gauge: self.gauge.clone(), role: Role::Generic })
    }

    /// Reorders legs: new leg `i` is old leg `order[i]`.
    pub fn permute_legs(&self, order: &[usize]) -> Result<OperatorTensor> {
        if order.len() != self.legs.len() {
            return Err(Error::Shape("leg permutation has wrong length".into()));
        }
        let offs = self.axis_offsets();
        let mut perm = Vec::new();
        for &o in order {
            for k in 0..self.legs[o].n_axes() {
                perm.push(offs[o] + k);
            }
        }
        let data = self.data.permute(&perm)?;
        let legs = order.iter().map(|&o| self.legs[o].clone()).collect();
        Ok(OperatorTensor { legs, data, gauge: self.gauge.clone(), role: self.role })
    }

    /// In/out kinds swapped, entries conjugated.
    pub fn adjoint(&self) -> OperatorTensor {
        let role = match self.role {
            r @ (Role::Readout(_) | Role::NullBox) => r,
            _ => Role::Generic,
        };
        OperatorTensor {
            legs: self.legs.iter().map(Leg::reversed).collect(),
            data: self.data.conj(),
            gauge: self.gauge.clone(),
            role,
        }
    }

    /// Adjoint scaled by `Π_in α²β² / Π_out α²β²` over the original legs.
    pub fn time_reverse(&self) -> OperatorTensor {
        let mut factor = 1.0;
        for l in &self.legs {
            let v = l.gauge_value(&self.gauge);
            if l.kind.is_input_side() {
                factor *= v * v;
            } else {
                factor /= v * v;
            }
        }
        let adj = self.adjoint();
        OperatorTensor {
            legs: adj.legs,
            data: adj.data.scale_real(factor),
            gauge: self.gauge.clone(),
            role: self.role.time_reversed(),
        }
    }

    pub fn to_gauge(&self, to: &GaugeConfig) -> OperatorTensor {
        let mut factor = 1.0;
        for l in &self.legs {
            let from_v = l.gauge_value(&self.gauge);
            let to_v = l.gauge_value(to);
            if l.kind.is_input_side() {
                factor *= from_v / to_v;
            } else {
                factor *= to_v / from_v;
            }
        }
        OperatorTensor {
            legs: self.legs.clone(),
            data: self.data.scale_real(factor),
            gauge: to.clone(),
            role: self.role,
        }
    }

    /// Fixes every pointer axis to the given values (leg order) and returns
    /// the remaining system-only array.
    pub fn pointer_slice(&self, values: &[usize]) -> Result<ComplexTensor> {
        let ptr_legs: Vec<usize> = (0..self.legs.len()).filter(|&i| !self.legs[i].kind.is_system()).collect();
        if values.len() != ptr_legs.len() {
            return Err(Error::Shape("pointer assignment has wrong length".into()));
        }
        let sys_shape: Vec<usize> =
            self.legs.iter().filter(|l| l.kind.is_system()).flat_map(|l| [l.extent(), l.extent()]).collect();
        let offs = self.axis_offsets();
        let mut out = ComplexTensor::zeros(&sys_shape);
        let mut full = vec![0usize; self.data.rank()];
        for (p, &li) in ptr_legs.iter().enumerate() {
            full[offs[li]] = values[p];
        }
        let sys_axes: Vec<usize> = self
            .legs
            .iter()
            .enumerate()
            .filter(|(_, l)| l.kind.is_system())
            .flat_map(|(i, _)| [offs[i], offs[i] + 1])
            .collect();
        let mut pos = 0;
        for_each_index(&sys_shape, |idx| {
            for (k, &ax) in sys_axes.iter().enumerate() {
                full[ax] = idx[k];
            }
            out.data_mut()[pos] = self.data.get(&full);
            pos += 1;
        });
        Ok(out)
    }

    pub fn pointer_assignments(&self) -> Vec<Vec<usize>> {
        let cards: Vec<usize> =
            self.legs.iter().filter(|l| !l.kind.is_system()).map(|l| l.extent()).collect();
        let mut out = Vec::new();
        for_each_index(&cards, |idx| out.push(idx.to_vec()));
        out
    }

    pub fn max_abs_diff(&self, other: &OperatorTensor) -> f64 {
        if self.legs != other.legs {
            return f64::INFINITY;
        }
        self.data.max_abs_diff(&other.data)
    }
}
