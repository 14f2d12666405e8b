use num_traits::Float;

use crate::error::{Error, Result};

use super::{DropoutMask, Rng};

/// Scalar width of a tensor payload. Checkpoints record this so a file is
/// unambiguous about what its bytes mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        }
    }
}

/// Element type for all numeric code. 64-bit is the default everywhere;
/// 32-bit exists as an opt-in training mode (the finite-difference gradient
/// checker refuses it, since differencing in f32 is meaningless).
pub trait Scalar:
    Float
    + num_traits::NumAssign
    + Send
    + Sync
    + std::fmt::Debug
    + std::fmt::Display
    + Default
    + 'static
{
    const DTYPE: Dtype;
    fn from_f64(v: f64) -> Self;
    /// Named to dodge `num_traits::ToPrimitive::to_f64`, which every `Float`
    /// also carries and which would shadow this at call sites.
    fn as_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    /// Reads one scalar from the front of `bytes` (must hold at least
    /// `DTYPE.width()` bytes).
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f64 {
    const DTYPE: Dtype = Dtype::F64;

    fn from_f64(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
    }
}

impl Scalar for f32 {
    const DTYPE: Dtype = Dtype::F32;

    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().expect("4 bytes"))
    }
}

/// Rank 1 or rank 2, nothing else.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    pub fn numel(self) -> usize {
        match self {
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }

    pub fn rank(self) -> usize {
        match self {
            Shape::Vector(_) => 1,
            Shape::Matrix(..) => 2,
        }
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Shape::Vector(n) => write!(f, "{n}"),
            Shape::Matrix(r, c) => write!(f, "{r}x{c}"),
        }
    }
}

/// Row-major dense tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S: Scalar = f64> {
    shape: Shape,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Shape, data: Vec<S>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::invalid(format!(
                "tensor data length {} does not match shape {shape}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![S::zero(); shape.numel()],
        }
    }

    pub fn from_vec(data: Vec<S>) -> Self {
        Tensor {
            shape: Shape::Vector(data.len()),
            data,
        }
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map(|row| row.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::invalid("matrix rows have unequal lengths"));
            }
            data.extend_from_slice(row);
        }
        Ok(Tensor {
            shape: Shape::Matrix(r, c),
            data,
        })
    }

    /// Uniform draws from [lo, hi), elements filled in row-major order.
    pub fn uniform(shape: Shape, lo: f64, hi: f64, rng: &mut Rng) -> Self {
        let data = (0..shape.numel())
            .map(|_| S::from_f64(rng.uniform(lo, hi)))
            .collect();
        Tensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn rows(&self) -> usize {
        match self.shape {
            Shape::Vector(_) => 1,
            Shape::Matrix(r, _) => r,
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape {
            Shape::Vector(n) => n,
            Shape::Matrix(_, c) => c,
        }
    }

    pub fn at(&self, r: usize, c: usize) -> S {
        debug_assert!(matches!(self.shape, Shape::Matrix(..)));
        self.data[r * self.cols() + c]
    }

    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut S {
        debug_assert!(matches!(self.shape, Shape::Matrix(..)));
        let c_total = self.cols();
        &mut self.data[r * c_total + c]
    }

    /// Copies row `r` of a matrix out as a vector.
    pub fn row(&self, r: usize) -> Tensor<S> {
        let c = self.cols();
        Tensor::from_vec(self.data[r * c..(r + 1) * c].to_vec())
    }

    pub fn row_slice(&self, r: usize) -> &[S] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_slice_mut(&mut self, r: usize) -> &mut [S] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Tensor<S> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Bitwise equality, which is what "deterministic" means around here.
    /// (`PartialEq` on floats would call two NaNs unequal and +0/-0 equal.)
    pub fn bit_eq(&self, other: &Tensor<S>) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.as_f64().to_bits() == b.as_f64().to_bits())
    }
}

fn shape_err<S: Scalar>(op: &'static str, a: &Tensor<S>, b: &Tensor<S>) -> Error {
    Error::Shape {
        op,
        lhs: a.shape().to_string(),
        rhs: b.shape().to_string(),
    }
}

/// Matrix x matrix or matrix x vector. Anything else is a shape error that
/// names both operands.
pub fn matmul<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    match (a.shape(), b.shape()) {
        (Shape::Matrix(m, k), Shape::Matrix(k2, n)) if k == k2 => {
            let mut out = Tensor::zeros(Shape::Matrix(m, n));
            for i in 0..m {
                for j in 0..n {
                    let mut acc = S::zero();
                    for p in 0..k {
                        acc += a.at(i, p) * b.at(p, j);
                    }
                    *out.at_mut(i, j) = acc;
                }
            }
            Ok(out)
        }
        (Shape::Matrix(m, k), Shape::Vector(l)) if k == l => {
            let mut out = vec![S::zero(); m];
            let bv = b.data();
            for i in 0..m {
                let row = a.row_slice(i);
                let mut acc = S::zero();
                for p in 0..k {
                    acc += row[p] * bv[p];
                }
                out[i] = acc;
            }
            Ok(Tensor::from_vec(out))
        }
        _ => Err(shape_err("matmul", a, b)),
    }
}

/// `w` transposed times `v`: the backward counterpart of `matmul(w, v)`.
pub fn matvec_t<S: Scalar>(w: &Tensor<S>, v: &Tensor<S>) -> Result<Tensor<S>> {
    match (w.shape(), v.shape()) {
        (Shape::Matrix(m, n), Shape::Vector(l)) if m == l => {
            let mut out = vec![S::zero(); n];
            let vv = v.data();
            for i in 0..m {
                let row = w.row_slice(i);
                let vi = vv[i];
                for j in 0..n {
                    out[j] += row[j] * vi;
                }
            }
            Ok(Tensor::from_vec(out))
        }
        _ => Err(shape_err("matvec_t", w, v)),
    }
}

/// Outer product of two vectors: `out[i][j] = a[i] * b[j]`.
pub fn outer<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    match (a.shape(), b.shape()) {
        (Shape::Vector(m), Shape::Vector(n)) => {
            let mut out = Tensor::zeros(Shape::Matrix(m, n));
            for i in 0..m {
                let ai = a.data()[i];
                let row = out.row_slice_mut(i);
                for j in 0..n {
                    row[j] = ai * b.data()[j];
                }
            }
            Ok(out)
        }
        _ => Err(shape_err("outer", a, b)),
    }
}

pub fn sigmoid<S: Scalar>(t: &Tensor<S>) -> Tensor<S> {
    t.map(|x| S::one() / (S::one() + (-x).exp()))
}

pub fn tanh<S: Scalar>(t: &Tensor<S>) -> Tensor<S> {
    t.map(|x| x.tanh())
}

fn zip<S: Scalar>(
    op: &'static str,
    a: &Tensor<S>,
    b: &Tensor<S>,
    f: impl Fn(S, S) -> S,
) -> Result<Tensor<S>> {
    if a.shape() != b.shape() {
        return Err(shape_err(op, a, b));
    }
    Ok(Tensor {
        shape: a.shape(),
        data: a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    })
}

pub fn hadamard<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    zip("hadamard", a, b, |x, y| x * y)
}

pub fn add<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    zip("add", a, b, |x, y| x + y)
}

pub fn sub<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    zip("sub", a, b, |x, y| x - y)
}

pub fn add_assign<S: Scalar>(a: &mut Tensor<S>, b: &Tensor<S>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err("add_assign", a, b));
    }
    for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
        *x += *y;
    }
    Ok(())
}

pub fn scale<S: Scalar>(t: &Tensor<S>, k: S) -> Tensor<S> {
    t.map(|x| x * k)
}

/// Numerically stable softmax over a non-empty vector: subtracts the max
/// before exponentiating, so `[1000, 0]` comes out as `[1, 0]` instead of NaN.
pub fn softmax<S: Scalar>(t: &Tensor<S>) -> Result<Tensor<S>> {
    let data = match t.shape() {
        Shape::Vector(n) if n > 0 => t.data(),
        _ => {
            return Err(Error::invalid(format!(
                "softmax expects a non-empty vector, got shape {}",
                t.shape()
            )))
        }
    };
    let mut max = data[0];
    for &x in &data[1..] {
        if x > max {
            max = x;
        }
    }
    let exps: Vec<S> = data.iter().map(|&x| (x - max).exp()).collect();
    let mut sum = S::zero();
    for &e in &exps {
        sum += e;
    }
    Ok(Tensor::from_vec(exps.iter().map(|&e| e / sum).collect()))
}

pub fn dot<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<S> {
    match (a.shape(), b.shape()) {
        (Shape::Vector(m), Shape::Vector(n)) if m == n => {
            let mut acc = S::zero();
            for (x, y) in a.data().iter().zip(b.data()) {
                acc += *x * *y;
            }
            Ok(acc)
        }
        _ => Err(shape_err("dot", a, b)),
    }
}

pub fn norm<S: Scalar>(v: &Tensor<S>) -> S {
    let mut acc = S::zero();
    for &x in v.data() {
        acc += x * x;
    }
    acc.sqrt()
}

/// Scales a vector to unit Euclidean norm. The zero vector has no direction,
/// so it is rejected rather than silently returned.
pub fn l2_normalize<S: Scalar>(v: &Tensor<S>) -> Result<Tensor<S>> {
    match v.shape() {
        Shape::Vector(_) => {}
        _ => {
            return Err(Error::invalid(format!(
                "l2_normalize expects a vector, got shape {}",
                v.shape()
            )))
        }
    }
    let n = norm(v);
    if n == S::zero() {
        return Err(Error::Degenerate("l2_normalize of the zero vector".into()));
    }
    Ok(v.map(|x| x / n))
}

/// Inverted dropout: in train mode each element is zeroed with probability
/// `p` and survivors are scaled by 1/(1-p), so the expectation is unchanged.
/// In eval mode this is the identity and consumes no randomness.
pub fn dropout<S: Scalar>(t: &Tensor<S>, p: f64, rng: &mut Rng, train: bool) -> Result<Tensor<S>> {
    if !train || p == 0.0 {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::invalid(format!("dropout rate {p} outside [0, 1)")));
        }
        return Ok(t.clone());
    }
    let mask = DropoutMask::draw(t.shape(), p, rng)?;
    mask.apply(t)
}
