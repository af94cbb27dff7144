//! Dense complex tensors and the small amount of linear algebra the rest of
//! the crate needs: contraction, axis grouping, Hermitian eigensolving,
//! partial transposes and polar decompositions.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Row-major dense tensor of complex entries. A rank-0 tensor is a scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor {
    shape: Vec<usize>,
    data: Vec<C64>,
}

fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

/// Iterates over every multi-index of `shape` in row-major order.
pub fn for_each_index(shape: &[usize], mut f: impl FnMut(&[usize])) {
    let total: usize = shape.iter().product();
    let mut idx = vec![0usize; shape.len()];
    for _ in 0..total {
        f(&idx);
        for ax in (0..shape.len()).rev() {
            idx[ax] += 1;
            if idx[ax] < shape[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
}

impl ComplexTensor {
    pub fn new(shape: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Shape(format!("zero extent in shape {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} entries, got {}",
                data.len()
            )));
        }
        if data.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(ComplexTensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        ComplexTensor { shape: shape.to_vec(), data: vec![ZERO; n] }
    }

    pub fn scalar(c: C64) -> Self {
        ComplexTensor { shape: vec![], data: vec![c] }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> C64) -> Self {
        let mut data = Vec::with_capacity(shape.iter().product());
        for_each_index(shape, |idx| data.push(f(idx)));
        ComplexTensor { shape: shape.to_vec(), data }
    }

    pub fn from_real(shape: &[usize], values: &[f64]) -> Result<Self> {
        Self::new(shape.to_vec(), values.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut off = 0;
        for (i, &x) in idx.iter().enumerate() {
            off = off * self.shape[i] + x;
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> C64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: C64) {
        let off = self.offset(idx);
        self.data[off] = v;
    }

    pub fn to_scalar(&self) -> Option<C64> {
        if self.data.len() == 1 && self.shape.iter().all(|&e| e == 1) {
            Some(self.data[0])
        } else {
            None
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        ComplexTensor { shape: self.shape.clone(), data: self.data.iter().map(|&x| x * s).collect() }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn conj(&self) -> Self {
        ComplexTensor { shape: self.shape.clone(), data: self.data.iter().map(|x| x.conj()).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }

    fn zip(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(ComplexTensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise deviation; infinite when the shapes differ.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.shape != other.shape {
            return f64::INFINITY;
        }
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() || shape.contains(&0) {
            return Err(Error::Shape(format!("cannot reshape {:?} into {shape:?}", self.shape)));
        }
        Ok(ComplexTensor { shape: shape.to_vec(), data: self.data.clone() })
    }

    /// Output axis `i` is input axis `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let r = self.rank();
        let mut seen = vec![false; r];
        if perm.len() != r {
            return Err(Error::Shape(format!("permutation {perm:?} for rank {r}")));
        }
        for &p in perm {
            if p >= r || seen[p] {
                return Err(Error::Shape(format!("invalid permutation {perm:?}")));
            }
            seen[p] = true;
        }
        if perm.iter().enumerate().all(|(i, &p)| i == p) {
            return Ok(self.clone());
        }
        let new_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let old_strides = self.strides();
        let src_strides: Vec<usize> = perm.iter().map(|&p| old_strides[p]).collect();
        let mut data = Vec::with_capacity(self.data.len());
        let mut off = 0usize;
        let mut idx = vec![0usize; r];
        for _ in 0..self.data.len() {
            data.push(self.data[off]);
            for ax in (0..r).rev() {
                idx[ax] += 1;
                off += src_strides[ax];
                if idx[ax] < new_shape[ax] {
                    break;
                }
                off -= src_strides[ax] * new_shape[ax];
                idx[ax] = 0;
            }
        }
        Ok(ComplexTensor { shape: new_shape, data })
    }
}

pub fn tensor_product(a: &ComplexTensor, b: &ComplexTensor) -> ComplexTensor {
    let mut shape = a.shape.clone();
    shape.extend_from_slice(&b.shape);
    let mut data = Vec::with_capacity(a.data.len() * b.data.len());
    for &x in &a.data {
        for &y in &b.data {
            data.push(x * y);
        }
    }
    ComplexTensor { shape, data }
}

/// Sums over paired axes `axes_a[i]` / `axes_b[i]`. The result carries the
/// free axes of `a` (in order) followed by the free axes of `b`.
pub fn contract(
    a: &ComplexTensor,
    axes_a: &[usize],
    b: &ComplexTensor,
    axes_b: &[usize],
) -> Result<ComplexTensor> {
    if axes_a.len() != axes_b.len() {
        return Err(Error::ContractionShape(format!(
            "{} axes against {}",
            axes_a.len(),
            axes_b.len()
        )));
    }
    let check = |t: &ComplexTensor, axes: &[usize]| -> Result<()> {
        let mut seen = vec![false; t.rank()];
        for &ax in axes {
            if ax >= t.rank() || seen[ax] {
                return Err(Error::ContractionShape(format!("bad axis list {axes:?}")));
            }
            seen[ax] = true;
        }
        Ok(())
    };
    check(a, axes_a)?;
    check(b, axes_b)?;
    for (&i, &j) in axes_a.iter().zip(axes_b) {
        if a.shape[i] != b.shape[j] {
            return Err(Error::ContractionShape(format!(
                "axis {i} has extent {} but axis {j} has extent {}",
                a.shape[i], b.shape[j]
            )));
        }
    }
    let free_a: Vec<usize> = (0..a.rank()).filter(|x| !axes_a.contains(x)).collect();
    let free_b: Vec<usize> = (0..b.rank()).filter(|x| !axes_b.contains(x)).collect();
    let perm_a: Vec<usize> = free_a.iter().chain(axes_a).copied().collect();
    let perm_b: Vec<usize> = axes_b.iter().chain(&free_b).copied().collect();
    let ap = a.permute(&perm_a)?;
    let bp = b.permute(&perm_b)?;
    let m: usize = free_a.iter().map(|&x| a.shape[x]).product();
    let k: usize = axes_a.iter().map(|&x| a.shape[x]).product();
    let n: usize = free_b.iter().map(|&x| b.shape[x]).product();
    let mut out = vec![ZERO; m * n];
    for i in 0..m {
        let row = &ap.data[i * k..(i + 1) * k];
        let dst = &mut out[i * n..(i + 1) * n];
        for (l, &x) in row.iter().enumerate() {
            if x == ZERO {
                continue;
            }
            let brow = &bp.data[l * n..(l + 1) * n];
            for (d, &y) in dst.iter_mut().zip(brow) {
                *d += x * y;
            }
        }
    }
    let shape: Vec<usize> = free_a
        .iter()
        .map(|&x| a.shape[x])
        .chain(free_b.iter().map(|&x| b.shape[x]))
        .collect();
    Ok(ComplexTensor { shape, data: out })
}

/// Permutes axes so that each group is contiguous, then fuses each group into
/// a single axis. Groups must partition the axes.
pub fn group_axes(t: &ComplexTensor, groups: &[Vec<usize>]) -> Result<ComplexTensor> {
    let perm: Vec<usize> = groups.iter().flatten().copied().collect();
    let p = t.permute(&perm)?;
    let shape: Vec<usize> =
        groups.iter().map(|g| g.iter().map(|&a| t.shape[a]).product()).collect();
    p.reshape(&shape)
}

/// Inverse of [`group_axes`] given the original shape and the same groups.
pub fn ungroup_axes(
    t: &ComplexTensor,
    groups: &[Vec<usize>],
    original_shape: &[usize],
) -> Result<ComplexTensor> {
    let perm: Vec<usize> = groups.iter().flatten().copied().collect();
    if perm.len() != original_shape.len() {
        return Err(Error::Shape("groups do not cover the original axes".into()));
    }
    let permuted_shape: Vec<usize> = perm.iter().map(|&a| original_shape[a]).collect();
    let expanded = t.reshape(&permuted_shape)?;
    let mut inverse = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inverse[p] = i;
    }
    expanded.permute(&inverse)
}

// ---- matrices -------------------------------------------------------------

fn square_dim(m: &ComplexTensor) -> Result<usize> {
    match m.shape() {
        [r, c] if r == c => Ok(*r),
        s => Err(Error::Shape(format!("expected a square matrix, got {s:?}"))),
    }
}

pub fn identity(n: usize) -> ComplexTensor {
    ComplexTensor::from_fn(&[n, n], |i| if i[0] == i[1] { ONE } else { ZERO })
}

pub fn matmul(a: &ComplexTensor, b: &ComplexTensor) -> Result<ComplexTensor> {
    if a.rank() != 2 || b.rank() != 2 {
        return Err(Error::Shape("matmul needs rank-2 operands".into()));
    }
    contract(a, &[1], b, &[0])
}

pub fn dagger(m: &ComplexTensor) -> Result<ComplexTensor> {
    if m.rank() != 2 {
        return Err(Error::Shape("dagger needs a matrix".into()));
    }
    Ok(m.permute(&[1, 0])?.conj())
}

pub fn trace(m: &ComplexTensor) -> Result<C64> {
    let n = square_dim(m)?;
    Ok((0..n).map(|i| m.get(&[i, i])).sum())
}

pub fn kron(a: &ComplexTensor, b: &ComplexTensor) -> Result<ComplexTensor> {
    if a.rank() != 2 || b.rank() != 2 {
        return Err(Error::Shape("kron needs matrices".into()));
    }
    let t = tensor_product(a, b);
    group_axes(&t, &[vec![0, 2], vec![1, 3]])
}

pub fn hermiticity_deviation(m: &ComplexTensor) -> Result<f64> {
    let n = square_dim(m)?;
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m.get(&[i, j]) - m.get(&[j, i]).conj()).norm());
        }
    }
    Ok(dev)
}

/// Largest entry of `U†U - 1`.
pub fn unitarity_deviation(u: &ComplexTensor) -> Result<f64> {
    let n = square_dim(u)?;
    let g = matmul(&dagger(u)?, u)?;
    Ok(g.max_abs_diff(&identity(n)))
}

/// A square matrix that passed the Hermiticity check.
#[derive(Debug, Clone, Copy)]
pub struct HermitianMatrixView<'a> {
    m: &'a ComplexTensor,
    n: usize,
}

impl<'a> HermitianMatrixView<'a> {
    pub const DEFAULT_TOL: f64 = 1e-10;

    /// Tolerance is relative to the largest entry.
    pub fn new(m: &'a ComplexTensor, tol: f64) -> Result<Self> {
        let n = square_dim(m)?;
        let dev = hermiticity_deviation(m)?;
        if dev > tol * m.max_abs().max(1.0) {
            return Err(Error::NotHermitian(dev));
        }
        Ok(HermitianMatrixView { m, n })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &ComplexTensor {
        self.m
    }
}

#[derive(Debug, Clone)]
pub struct HermitianEig {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `k` is the eigenvector for `values[k]`.
    pub vectors: ComplexTensor,
}

impl HermitianEig {
    pub fn vector(&self, k: usize) -> Vec<C64> {
        let n = self.values.len();
        (0..n).map(|i| self.vectors.get(&[i, k])).collect()
    }
}

/// Cyclic complex Jacobi eigensolver.
pub fn hermitian_eig(view: HermitianMatrixView<'_>) -> HermitianEig {
    let n = view.n;
    let mut a: Vec<C64> = view.m.data().to_vec();
    // symmetrise so the rotations see an exactly Hermitian matrix
    for i in 0..n {
        a[i * n + i] = C64::new(a[i * n + i].re, 0.0);
        for j in i + 1..n {
            let avg = (a[i * n + j] + a[j * n + i].conj()) * 0.5;
            a[i * n + j] = avg;
            a[j * n + i] = avg.conj();
        }
    }
    let mut v: Vec<C64> = identity(n).into_data();
    let scale = a.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                let mag = apq.norm();
                if mag <= 1e-300 {
                    continue;
                }
                // rotate column/row q by a phase so that a_pq becomes real
                let phase = apq / mag;
                for k in 0..n {
                    a[k * n + q] *= phase.conj();
                }
                for k in 0..n {
                    a[q * n + k] *= phase;
                }
                for k in 0..n {
                    v[k * n + q] *= phase.conj();
                }
                let app = a[p * n + p].re;
                let aqq = a[q * n + q].re;
                let theta = (aqq - app) / (2.0 * mag);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = akp * c - akq * s;
                    a[k * n + q] = akp * s + akq * c;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = apk * c - aqk * s;
                    a[q * n + k] = apk * s + aqk * c;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = vkp * c - vkq * s;
                    v[k * n + q] = vkp * s + vkq * c;
                }
                a[p * n + q] = ZERO;
                a[q * n + p] = ZERO;
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].re.total_cmp(&a[j * n + j].re));
    let values: Vec<f64> = order.iter().map(|&i| a[i * n + i].re).collect();
    let vectors = ComplexTensor::from_fn(&[n, n], |ix| v[ix[0] * n + order[ix[1]]]);
    HermitianEig { values, vectors }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    First,
    Second,
}

/// Transposes one tensor factor of a matrix on `d1 ⊗ d2`.
pub fn partial_transpose(
    m: &ComplexTensor,
    dims: (usize, usize),
    which: Subsystem,
) -> Result<ComplexTensor> {
    let (d1, d2) = dims;
    if m.shape() != [d1 * d2, d1 * d2] {
        return Err(Error::Shape(format!(
            "partial transpose of {:?} with factors {d1}x{d2}",
            m.shape()
        )));
    }
    let t = m.reshape(&[d1, d2, d1, d2])?;
    let perm = match which {
        Subsystem::First => [2, 1, 0, 3],
        Subsystem::Second => [0, 3, 2, 1],
    };
    t.permute(&perm)?.reshape(&[d1 * d2, d1 * d2])
}

// ---- orthonormal bases and polar factors ------------------------------------

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Extends orthonormal `cols` (each of length `n`) to a full orthonormal
/// basis by Gram-Schmidt against the standard basis.
pub fn complete_basis(mut cols: Vec<Vec<C64>>, n: usize) -> Vec<Vec<C64>> {
    let mut e = 0;
    while cols.len() < n && e < n {
        let mut cand = vec![ZERO; n];
        cand[e] = ONE;
        e += 1;
        for _ in 0..2 {
            for c in &cols {
                let p = dot(c, &cand);
                for (x, y) in cand.iter_mut().zip(c) {
                    *x -= p * y;
                }
            }
        }
        let nrm = norm(&cand);
        if nrm > 1e-8 {
            cols.push(cand.into_iter().map(|x| x / nrm).collect());
        }
    }
    cols
}

fn columns_to_matrix(cols: &[Vec<C64>], rows: usize) -> ComplexTensor {
    ComplexTensor::from_fn(&[rows, cols.len()], |i| cols[i[1]][i[0]])
}

/// Isometric polar factor `Q` of an `m×n` matrix (`m ≥ n`): the isometry
/// maximising `Re tr(Q†A)`. Rank deficiency is filled by basis completion.
pub fn polar_isometry(a: &ComplexTensor) -> Result<ComplexTensor> {
    let (m, n) = match a.shape() {
        [m, n] if m >= n => (*m, *n),
        s => return Err(Error::Shape(format!("polar factor needs rows >= cols, got {s:?}"))),
    };
    let gram = matmul(&dagger(a)?, a)?;
    let eig = hermitian_eig(HermitianMatrixView::new(&gram, 1e-8)?);
    let smax = eig.values.last().copied().unwrap_or(0.0).max(0.0).sqrt();
    let mut us: Vec<Vec<C64>> = Vec::new();
    let mut vs: Vec<Vec<C64>> = Vec::new();
    let mut null_vs: Vec<Vec<C64>> = Vec::new();
    for k in (0..n).rev() {
        let s = eig.values[k].max(0.0).sqrt();
        let vk = eig.vector(k);
        if s > 1e-12 * smax.max(1e-300) && s > 0.0 {
            let mut u: Vec<C64> =
                (0..m).map(|i| (0..n).map(|j| a.get(&[i, j]) * vk[j]).sum::<C64>() / s).collect();
            for c in &us {
                let p = dot(c, &u);
                for (x, y) in u.iter_mut().zip(c) {
                    *x -= p * y;
                }
            }
            let nu = norm(&u);
            if nu > 1e-8 {
                us.push(u.into_iter().map(|x| x / nu).collect());
                vs.push(vk);
                continue;
            }
        }
        null_vs.push(vk);
    }
    let full = complete_basis(us, m);
    vs.extend(null_vs);
    let mut q = ComplexTensor::zeros(&[m, n]);
    for (k, v) in vs.iter().enumerate() {
        let u = &full[k];
        for i in 0..m {
            for j in 0..n {
                let cur = q.get(&[i, j]);
                q.set(&[i, j], cur + u[i] * v[j].conj());
            }
        }
    }
    Ok(q)
}

/// Haar-random unitary via Gram-Schmidt on a complex Gaussian matrix with
/// phase correction.
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexTensor {
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut c: Vec<C64> = (0..n)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        for _ in 0..2 {
            for b in &cols {
                let p = dot(b, &c);
                for (x, y) in c.iter_mut().zip(b) {
                    *x -= p * y;
                }
            }
        }
        let nrm = norm(&c);
        if nrm > 1e-8 {
            cols.push(c.into_iter().map(|x| x / nrm).collect());
        }
    }
    columns_to_matrix(&cols, n)
}

pub fn random_complex<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> ComplexTensor {
    ComplexTensor::from_fn(shape, |_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
}

// ---- real matrices -----------------------------------------------------

/// Dense row-major real matrix for hopping matrices and classical channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::Shape(format!("{rows}x{cols} matrix from {} values", data.len())));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(RealMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        RealMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        RealMatrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(|r| r.to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn scale(&self, s: f64) -> Self {
        RealMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| x * s).collect() }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Self::from_fn(self.rows, other.cols, |i, j| {
            (0..self.cols).map(|k| self.get(i, k) * other.get(k, j)).sum()
        }))
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::Shape(format!("{}x{} times vector of {}", self.rows, self.cols, v.len())));
        }
        Ok((0..self.rows).map(|i| (0..self.cols).map(|k| self.get(i, k) * v[k]).sum()).collect())
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self::from_fn(self.rows * other.rows, self.cols * other.cols, |i, j| {
            self.get(i / other.rows, j / other.cols) * other.get(i % other.rows, j % other.cols)
        })
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.data.chunks(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.cols).map(|j| (0..self.rows).map(|i| self.get(i, j)).sum()).collect()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.rows != other.rows || self.cols != other.cols {
            return f64::INFINITY;
        }
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn to_complex(&self) -> ComplexTensor {
        ComplexTensor::from_fn(&[self.rows, self.cols], |i| C64::new(self.get(i[0], i[1]), 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn half_identity_traced_against_identity() {
        let a = identity(2).scale_real(0.5);
        let b = identity(2);
        let s = contract(&a, &[0, 1], &b, &[1, 0]).unwrap();
        assert!((s.to_scalar().unwrap() - ONE).norm() < 1e-15);
    }

    #[test]
    fn contraction_extent_mismatch() {
        let a = ComplexTensor::zeros(&[2, 3]);
        let b = ComplexTensor::zeros(&[2, 2]);
        assert!(matches!(contract(&a, &[1], &b, &[0]), Err(Error::ContractionShape(_))));
    }

    #[test]
    fn new_rejects_bad_data() {
        assert!(ComplexTensor::new(vec![2], vec![ONE]).is_err());
        assert!(ComplexTensor::new(vec![0], vec![]).is_err());
        assert_eq!(ComplexTensor::new(vec![1], vec![c(f64::NAN, 0.0)]), Err(Error::NonFinite));
    }

    #[test]
    fn permute_moves_entries() {
        let t = ComplexTensor::from_fn(&[2, 3, 4], |i| c((i[0] * 100 + i[1] * 10 + i[2]) as f64, 0.0));
        let p = t.permute(&[2, 0, 1]).unwrap();
        assert_eq!(p.shape(), &[4, 2, 3]);
        assert_eq!(p.get(&[3, 1, 2]), c(123.0, 0.0));
    }

    #[test]
    fn partial_transpose_of_swap_is_projector_onto_phi_plus() {
        // SWAP on 2x2 has partial transpose 2|Φ+⟩⟨Φ+|
        let swap = ComplexTensor::from_fn(&[4, 4], |i| {
            let (a, b) = (i[0] / 2, i[0] % 2);
            let (cc, d) = (i[1] / 2, i[1] % 2);
            if a == d && b == cc { ONE } else { ZERO }
        });
        let pt = partial_transpose(&swap, (2, 2), Subsystem::Second).unwrap();
        let eig = hermitian_eig(HermitianMatrixView::new(&pt, 1e-12).unwrap());
        let expected = [0.0, 0.0, 0.0, 2.0];
        for (v, e) in eig.values.iter().zip(expected) {
            assert!((v - e).abs() < 1e-12);
        }
    }

    #[test]
    fn eig_of_pauli_y() {
        let y = ComplexTensor::new(vec![2, 2], vec![ZERO, c(0.0, -1.0), c(0.0, 1.0), ZERO]).unwrap();
        let eig = hermitian_eig(HermitianMatrixView::new(&y, 1e-12).unwrap());
        assert!((eig.values[0] + 1.0).abs() < 1e-14);
        assert!((eig.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn non_hermitian_rejected() {
        let m = ComplexTensor::new(vec![2, 2], vec![ONE, ONE, ZERO, ONE]).unwrap();
        assert!(matches!(HermitianMatrixView::new(&m, 1e-10), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn polar_of_rank_one_is_unitary() {
        let mut m = ComplexTensor::zeros(&[3, 3]);
        m.set(&[0, 1], c(2.0, 1.0));
        let q = polar_isometry(&m).unwrap();
        assert!(unitarity_deviation(&q).unwrap() < 1e-12);
        // Re tr(Q†M) should equal the nuclear norm |2+i|
        let overlap: C64 = (0..3).flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| q.get(&[i, j]).conj() * m.get(&[i, j]))
            .sum();
        assert!((overlap.re - 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn random_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..6 {
            let u = random_unitary(n, &mut rng);
            assert!(unitarity_deviation(&u).unwrap() < 1e-12);
        }
    }
}
