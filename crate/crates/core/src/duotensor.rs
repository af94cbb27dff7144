//! Duotensors: fiducial sets, square (pointer) and round (system) hopping
//! matrices, black/white dot recoloring and the operator ↔ duotensor map.
//!
//! A black dot on a leg means the leg is closed by the opposite-kind fiducial;
//! white components are the expansion weights in the same-kind fiducials.
//! Recoloring white → black multiplies by the hopping matrix.

use std::fmt;
use std::str::FromStr;

use crate::circuit::{CircuitGraph, NodeContent, Port, Wire};
use crate::engine;
use crate::error::{Error, Result};
use crate::linalg::{self, ComplexTensor, HermitianMatrixView, RealMatrix, C64, ONE, ZERO};
use crate::optensor::{shape_for, Leg, LegKind, LegType, OperatorTensor, Role};
use crate::types::{GaugeConfig, PointerType, SystemType};

/// Largest imaginary residue tolerated in a component.
pub const IMAG_TOL: f64 = 1e-9;
const DEGENERATE_COND: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Color {
    Black,
    White,
}

impl Color {
    pub fn flipped(self) -> Self {
        match self {
            Color::Black => Color::White,
            Color::White => Color::Black,
        }
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Color::Black => "black",
            Color::White => "white",
        })
    }
}

impl FromStr for Color {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "b" | "black" => Ok(Color::Black),
            "w" | "white" => Ok(Color::White),
            _ => Err(Error::Unknown(format!("color `{s}` (expected b/w)"))),
        }
    }
}

/// Parses a color list such as `bw`, `b,w` or `black white`.
pub fn parse_colors(spec: &str) -> Result<Vec<Color>> {
    let words: Vec<&str> = spec.split([',', ' ']).filter(|w| !w.is_empty()).collect();
    if words.len() == 1 && words[0].chars().all(|c| c == 'b' || c == 'w') {
        return words[0].chars().map(|c| c.to_string().parse()).collect();
    }
    words.iter().map(|w| w.parse()).collect()
}

// ---- pointers ---------------------------------------------------------------

/// Income vectors `P_x = e_x / (β√N)` and outcome vectors `P^x = (β/√N) e_x`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointerFiducialSet {
    ty: PointerType,
    beta: f64,
}

impl PointerFiducialSet {
    pub fn new(x: &PointerType, g: &GaugeConfig) -> Self {
        PointerFiducialSet { ty: x.clone(), beta: g.beta(x) }
    }

    pub fn ty(&self) -> &PointerType {
        &self.ty
    }

    fn unit(&self, k: usize, s: f64) -> Vec<f64> {
        (0..self.ty.card()).map(|i| if i == k { s } else { 0.0 }).collect()
    }

    pub fn income(&self, k: usize) -> Vec<f64> {
        self.unit(k, 1.0 / (self.beta * (self.ty.card() as f64).sqrt()))
    }

    pub fn outcome(&self, k: usize) -> Vec<f64> {
        self.unit(k, self.beta / (self.ty.card() as f64).sqrt())
    }

    /// `G[x, x'] = P^x · P_x'`.
    pub fn pairing(&self) -> RealMatrix {
        let n = self.ty.card();
        RealMatrix::from_fn(n, n, |i, j| {
            self.outcome(i).iter().zip(self.income(j)).map(|(a, b)| a * b).sum()
        })
    }
}

pub fn pointer_hopping(x: &PointerType) -> RealMatrix {
    RealMatrix::identity(x.card()).scale(1.0 / x.card() as f64)
}

pub fn pointer_hopping_inverse(x: &PointerType) -> RealMatrix {
    RealMatrix::identity(x.card()).scale(x.card() as f64)
}

// ---- systems ----------------------------------------------------------------

/// The `N²` rank-one projectors `|x⟩⟨x|`, `|xx'⟩⟨xx'|` and `|xx'i⟩⟨xx'i|`
/// with `|xx'⟩ = (|x⟩+|x'⟩)/√2` and `|xx'i⟩ = (|x⟩+i|x'⟩)/√2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemFiducialSet {
    ty: SystemType,
    projectors: Vec<ComplexTensor>,
    labels: Vec<String>,
}

fn projector(v: &[C64]) -> ComplexTensor {
    let n = v.len();
    ComplexTensor::from_fn(&[n, n], |i| v[i[0]] * v[i[1]].conj())
}

pub fn system_fiducials(a: &SystemType) -> SystemFiducialSet {
    let n = a.dim();
    let s = 0.5f64.sqrt();
    let basis = |k: usize| -> Vec<C64> { (0..n).map(|i| if i == k { ONE } else { ZERO }).collect() };
    let mut projectors = Vec::with_capacity(n * n);
    let mut labels = Vec::with_capacity(n * n);
    for x in 0..n {
        projectors.push(projector(&basis(x)));
        labels.push(format!("{x}"));
    }
    for phase in [ONE, C64::new(0.0, 1.0)] {
        for x in 0..n {
            for y in x + 1..n {
                let v: Vec<C64> = (0..n)
                    .map(|i| {
                        if i == x {
                            C64::new(s, 0.0)
                        } else if i == y {
                            phase * s
                        } else {
                            ZERO
                        }
                    })
                    .collect();
                projectors.push(projector(&v));
                labels.push(if phase == ONE { format!("{x}+{y}") } else { format!("{x}+i{y}") });
            }
        }
    }
    SystemFiducialSet { ty: a.clone(), projectors, labels }
}

impl SystemFiducialSet {
    pub fn ty(&self) -> &SystemType {
        &self.ty
    }

    pub fn len(&self) -> usize {
        self.projectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projectors.is_empty()
    }

    pub fn projector(&self, k: usize) -> &ComplexTensor {
        &self.projectors[k]
    }

    pub fn label(&self, k: usize) -> &str {
        &self.labels[k]
    }

    /// Preparation fiducial `α√N · P_k` with one output leg.
    pub fn prep(&self, k: usize, g: &GaugeConfig) -> OperatorTensor {
        let c = g.alpha(&self.ty) * (self.ty.dim() as f64).sqrt();
        OperatorTensor::from_parts(vec![Leg::sys_out(&self.ty)], self.projectors[k].scale_real(c), g.clone(), Role::Generic)
            .expect("projector shape")
    }

    /// Result fiducial `P_kᵀ / (α√N)` with one input leg.
    pub fn result(&self, k: usize, g: &GaugeConfig) -> OperatorTensor {
        let c = 1.0 / (g.alpha(&self.ty) * (self.ty.dim() as f64).sqrt());
        let data = self.projectors[k].permute(&[1, 0]).expect("matrix").scale_real(c);
        OperatorTensor::from_parts(vec![Leg::sys_in(&self.ty)], data, g.clone(), Role::Generic)
            .expect("projector shape")
    }
}

/// `h[𝓍, 𝓎]` = prep fiducial 𝓍 wired into result fiducial 𝓎, with its
/// inverse and condition number.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundHopping {
    pub matrix: RealMatrix,
    pub inverse: RealMatrix,
    pub condition: f64,
}

pub fn round_hopping(f: &SystemFiducialSet) -> Result<RoundHopping> {
    let g = GaugeConfig::symmetric();
    let k = f.len();
    let mut h = RealMatrix::zeros(k, k);
    for i in 0..k {
        let p = f.prep(i, &g);
        for j in 0..k {
            let v = p.wire_into(0, &f.result(j, &g), 0)?.scalar_value().expect("closed");
            h.set(i, j, v.re);
        }
    }
    let hc = h.to_complex();
    let eig = linalg::hermitian_eig(HermitianMatrixView::new(&hc, 1e-12)?);
    let (lo, hi) = eig.values.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v.abs()), hi.max(v.abs())));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition < DEGENERATE_COND) {
        return Err(Error::DegenerateFiducials(condition));
    }
    let inverse = RealMatrix::from_fn(k, k, |i, j| {
        (0..k).map(|m| (eig.vectors.get(&[i, m]) * eig.vectors.get(&[j, m]).conj()).re / eig.values[m]).sum()
    });
    Ok(RoundHopping { matrix: h, inverse, condition })
}

// ---- per-leg bases ----------------------------------------------------------

/// Everything needed to move one leg between operator and duotensor form.
struct LegBasis {
    /// `closing[k]`: data of the opposite-kind fiducial that reads component `k`.
    closing: Vec<Vec<C64>>,
    /// `expansion[k]`: data of the same-kind fiducial weighted by white `k`.
    expansion: Vec<Vec<C64>>,
    /// white → black.
    to_black: RealMatrix,
    /// black → white.
    to_white: RealMatrix,
}

fn leg_basis(leg: &Leg, g: &GaugeConfig) -> Result<LegBasis> {
    match leg.ty() {
        LegType::System(a) => {
            let f = system_fiducials(a);
            let hop = round_hopping(&f)?;
            let preps: Vec<Vec<C64>> = (0..f.len()).map(|k| f.prep(k, g).data().data().to_vec()).collect();
            let results: Vec<Vec<C64>> = (0..f.len()).map(|k| f.result(k, g).data().data().to_vec()).collect();
            Ok(match leg.kind() {
                // b_𝓍 = Σ_𝓎 h[𝓍, 𝓎] w_𝓎
                LegKind::SysIn => LegBasis {
                    closing: preps,
                    expansion: results,
                    to_black: hop.matrix.clone(),
                    to_white: hop.inverse.clone(),
                },
                // b_𝓍 = Σ_𝓎 h[𝓎, 𝓍] w_𝓎
                _ => LegBasis {
                    closing: results,
                    expansion: preps,
                    to_black: hop.matrix.transpose(),
                    to_white: hop.inverse.transpose(),
                },
            })
        }
        LegType::Pointer(x) => {
            let f = PointerFiducialSet::new(x, g);
            let n = x.card();
            let as_c = |v: Vec<f64>| v.into_iter().map(|r| C64::new(r, 0.0)).collect::<Vec<_>>();
            let incomes: Vec<Vec<C64>> = (0..n).map(|k| as_c(f.income(k))).collect();
            let outcomes: Vec<Vec<C64>> = (0..n).map(|k| as_c(f.outcome(k))).collect();
            let (closing, expansion) = match leg.kind() {
                LegKind::PtrIn => (outcomes, incomes),
                _ => (incomes, outcomes),
            };
            Ok(LegBasis { closing, expansion, to_black: pointer_hopping(x), to_white: pointer_hopping_inverse(x) })
        }
    }
}

/// Multiplies axis `axis` of `t` by `m` (`new × old`).
fn transform_axis(t: &ComplexTensor, axis: usize, m: &ComplexTensor) -> Result<ComplexTensor> {
    let moved = linalg::contract(m, &[1], t, &[axis])?;
    // moved axes: [new, t axes without `axis`]
    let rank = t.rank();
    let perm: Vec<usize> = (0..rank)
        .map(|i| match i.cmp(&axis) {
            std::cmp::Ordering::Less => i + 1,
            std::cmp::Ordering::Equal => 0,
            std::cmp::Ordering::Greater => i,
        })
        .collect();
    moved.permute(&perm)
}

/// Operator data with each system leg's (ket, bra) pair flattened to one axis.
fn leg_shape(legs: &[Leg]) -> Vec<usize> {
    legs.iter().map(|l| l.extent().pow(l.n_axes() as u32)).collect()
}

fn component_shape(legs: &[Leg]) -> Vec<usize> {
    legs.iter()
        .map(|l| match l.ty() {
            LegType::System(a) => a.dim() * a.dim(),
            LegType::Pointer(x) => x.card(),
        })
        .collect()
}

// ---- duotensors -------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Duotensor {
    components: Vec<f64>,
    shape: Vec<usize>,
    colors: Vec<Color>,
    legs: Vec<Leg>,
    gauge: GaugeConfig,
}

impl Duotensor {
    pub fn components(&self) -> &[f64] {
        &self.components
    }

    /// One index per leg: `N²` for a system leg, the card for a pointer leg.
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn colors(&self) -> &[Color] {
        &self.colors
    }

    pub fn legs(&self) -> &[Leg] {
        &self.legs
    }

    pub fn gauge(&self) -> &GaugeConfig {
        &self.gauge
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        let mut off = 0;
        for (i, &n) in idx.iter().zip(&self.shape) {
            off = off * n + i;
        }
        self.components[off]
    }

    fn as_complex(&self) -> ComplexTensor {
        let data = self.components.iter().map(|&r| C64::new(r, 0.0)).collect();
        ComplexTensor::new(self.shape.clone(), data).expect("shape")
    }

    pub fn max_abs_diff(&self, other: &Duotensor) -> f64 {
        if self.shape != other.shape || self.colors != other.colors {
            return f64::INFINITY;
        }
        self.components.iter().zip(&other.components).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

fn real_components(t: &ComplexTensor) -> Result<Vec<f64>> {
    let scale = t.max_abs().max(1.0);
    let mut out = Vec::with_capacity(t.len());
    for z in t.data() {
        if z.im.abs() > IMAG_TOL * scale {
            return Err(Error::ImaginaryComponent(z.im));
        }
        out.push(z.re);
    }
    Ok(out)
}

pub fn to_duotensor(t: &OperatorTensor, colors: &[Color]) -> Result<Duotensor> {
    let legs = t.legs().to_vec();
    if colors.len() != legs.len() {
        return Err(Error::Shape(format!("{} colors for {} legs", colors.len(), legs.len())));
    }
    let g = t.gauge();
    let mut cur = t.data().reshape(&leg_shape(&legs))?;
    if legs.is_empty() {
        cur = t.data().clone();
    }
    for (i, leg) in legs.iter().enumerate() {
        let b = leg_basis(leg, g)?;
        let m = ComplexTensor::from_fn(&[b.closing.len(), leg_shape(std::slice::from_ref(leg))[0]], |ix| {
            b.closing[ix[0]][ix[1]]
        });
        cur = transform_axis(&cur, i, &m)?;
        if colors[i] == Color::White {
            cur = transform_axis(&cur, i, &b.to_white.to_complex())?;
        }
    }
    Ok(Duotensor {
        components: real_components(&cur)?,
        shape: component_shape(&legs),
        colors: colors.to_vec(),
        legs,
        gauge: g.clone(),
    })
}

/// Moves one leg to the requested color; a no-op when it already has it.
pub fn recolor(d: &Duotensor, leg: usize, color: Color) -> Result<Duotensor> {
    if leg >= d.legs.len() {
        return Err(Error::Range(format!("leg {leg} of {}", d.legs.len())));
    }
    if d.colors[leg] == color {
        return Ok(d.clone());
    }
    let b = leg_basis(&d.legs[leg], &d.gauge)?;
    let m = match color {
        Color::Black => &b.to_black,
        Color::White => &b.to_white,
    };
    let t = transform_axis(&d.as_complex(), leg, &m.to_complex())?;
    let mut colors = d.colors.clone();
    colors[leg] = color;
    Ok(Duotensor { components: real_components(&t)?, colors, ..d.clone() })
}

pub fn from_duotensor(d: &Duotensor) -> Result<OperatorTensor> {
    let mut white = d.clone();
    for i in 0..d.legs.len() {
        white = recolor(&white, i, Color::White)?;
    }
    let mut cur = white.as_complex();
    for (i, leg) in d.legs.iter().enumerate() {
        let b = leg_basis(leg, &d.gauge)?;
        let m = ComplexTensor::from_fn(&[b.expansion[0].len(), b.expansion.len()], |ix| b.expansion[ix[1]][ix[0]]);
        cur = transform_axis(&cur, i, &m)?;
    }
    let data = if d.legs.is_empty() { cur } else { cur.reshape(&shape_for(&d.legs))? };
    OperatorTensor::from_parts(d.legs.clone(), data, d.gauge.clone(), Role::Generic)
}

/// Value of a closed circuit computed from duotensors alone: every wire
/// carries one black and one white end, `color_at_source` choosing which.
pub fn evaluate_duotensors(g: &CircuitGraph, mut color_at_source: impl FnMut(&Wire) -> Color) -> Result<f64> {
    let open = g.open_ports();
    if !open.is_empty() {
        let names: Vec<String> = open.iter().map(|p| p.to_string()).collect();
        return Err(Error::NotClosed(names.join(", ")));
    }
    let mut port_color: std::collections::BTreeMap<Port, (Color, usize)> = Default::default();
    let mut extents = Vec::new();
    for w in g.wires() {
        let c = color_at_source(w);
        let leg = &g.node(&w.from.node)?.legs()[w.from.leg];
        extents.push(component_shape(std::slice::from_ref(leg))[0]);
        let label = extents.len() - 1;
        port_color.insert(w.from.clone(), (c, label));
        port_color.insert(w.to.clone(), (c.flipped(), label));
    }
    let mut tensors = Vec::new();
    for (id, node) in g.nodes() {
        let t = match node {
            NodeContent::Tensor(t) => t,
            NodeContent::Placeholder(_) => return Err(Error::UnresolvedPlaceholder(id.clone())),
        };
        let (colors, labels): (Vec<Color>, Vec<usize>) =
            (0..t.legs().len()).map(|i| port_color[&Port::new(id, i)]).unzip();
        tensors.push((to_duotensor(t, &colors)?.as_complex(), labels));
    }
    let v = engine::contract_labelled(tensors, extents, vec![])?;
    Ok(v.to_scalar().expect("closed").re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::GaugePreset;

    fn q(n: usize) -> SystemType {
        SystemType::new("q", n).unwrap()
    }

    #[test]
    fn pointer_pairing_is_hopping() {
        let x = PointerType::new("x", 3).unwrap();
        for kind in [GaugePreset::Forward, GaugePreset::Backward, GaugePreset::Symmetric] {
            let f = PointerFiducialSet::new(&x, &GaugeConfig::from_preset(kind));
            assert!(f.pairing().max_abs_diff(&pointer_hopping(&x)) < 1e-12);
        }
        assert_eq!(pointer_hopping(&x).matmul(&pointer_hopping_inverse(&x)).unwrap(), RealMatrix::identity(3));
    }

    #[test]
    fn qubit_family() {
        let f = system_fiducials(&q(2));
        assert_eq!(f.len(), 4);
        let labels: Vec<&str> = (0..4).map(|k| f.label(k)).collect();
        assert_eq!(labels, ["0", "1", "0+1", "0+i1"]);
        let plus_i = f.projector(3);
        assert!((plus_i.get(&[0, 1]) - C64::new(0.0, -0.5)).norm() < 1e-15);
        for k in 0..4 {
            let p = f.projector(k);
            assert!(linalg::hermiticity_deviation(p).unwrap() < 1e-15);
            assert!(linalg::matmul(p, p).unwrap().max_abs_diff(p) < 1e-15);
        }
    }

    #[test]
    fn qutrit_family_counts() {
        assert_eq!(system_fiducials(&q(3)).len(), 9);
    }

    #[test]
    fn hopping_is_gram_of_projectors() {
        let f = system_fiducials(&q(2));
        let h = round_hopping(&f).unwrap();
        assert!((h.matrix.get(0, 0) - 1.0).abs() < 1e-14);
        assert!((h.matrix.get(0, 1)).abs() < 1e-14);
        assert!((h.matrix.get(0, 2) - 0.5).abs() < 1e-14);
        let prod = h.matrix.matmul(&h.inverse).unwrap();
        assert!(prod.max_abs_diff(&RealMatrix::identity(4)) < 1e-12);
        assert!(h.inverse.data().iter().any(|&v| v < 0.0));
        assert!(h.condition < 100.0);
    }

    #[test]
    fn flat_prep_white_is_all_ones() {
        let x = PointerType::new("x", 3).unwrap();
        for g in [GaugeConfig::forward(), GaugeConfig::backward()] {
            let d = to_duotensor(&OperatorTensor::flat_prep(&x, &g), &[Color::White]).unwrap();
            assert!(d.components().iter().all(|&v| (v - 1.0).abs() < 1e-14));
        }
    }

    #[test]
    fn white_to_black_halves_card_two() {
        let x = PointerType::new("x", 2).unwrap();
        let g = GaugeConfig::forward();
        let d = to_duotensor(&OperatorTensor::readout(&x, 1, &g).unwrap(), &[Color::White, Color::White]).unwrap();
        let b = recolor(&d, 0, Color::Black).unwrap();
        for (u, v) in d.components().iter().zip(b.components()) {
            assert!((v - u / 2.0).abs() < 1e-15);
        }
        let back = recolor(&b, 0, Color::White).unwrap();
        assert!(back.max_abs_diff(&d) < 1e-15);
    }

    #[test]
    fn unitary_round_trip() {
        let s = 0.5f64.sqrt();
        let h = ComplexTensor::from_real(&[2, 2], &[s, s, s, -s]).unwrap();
        let g = GaugeConfig::forward();
        let t = OperatorTensor::from_unitary(&h, &q(2), &q(2), &g).unwrap();
        for colors in [[Color::Black, Color::White], [Color::White, Color::Black]] {
            let d = to_duotensor(&t, &colors).unwrap();
            assert!(from_duotensor(&d).unwrap().max_abs_diff(&t) < 1e-12);
        }
    }

    #[test]
    fn colors_parse() {
        assert_eq!(parse_colors("bw").unwrap(), vec![Color::Black, Color::White]);
        assert_eq!(parse_colors("white, black").unwrap(), vec![Color::White, Color::Black]);
        assert!(parse_colors("bx").is_err());
    }
}
