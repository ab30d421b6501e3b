use crate::error::{Error, Result};

/// Dense row-major array of `f64` values.
///
/// Every dimension is strictly positive, so a tensor always holds at least one
/// value. Scalars are represented with shape `[1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

/// Up to four dimensions, stored inline.
#[derive(Clone, Copy, PartialEq, Eq)]
struct Shape {
    dims: [usize; 4],
    ndim: usize,
}

impl Shape {
    fn from_slice(dims: &[usize]) -> Self {
        let mut s = Shape { dims: [0; 4], ndim: dims.len() };
        s.dims[..dims.len()].copy_from_slice(dims);
        s
    }
}

impl std::ops::Deref for Shape {
    type Target = [usize];

    fn deref(&self) -> &[usize] {
        &self.dims[..self.ndim]
    }
}

impl std::fmt::Debug for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        (**self).fmt(f)
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        Self::from_parts(&shape, data)
    }

    fn from_parts(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.len() > 4 {
            return Err(Error::InvalidTensor(format!("shape {shape:?} has more than 4 dimensions")));
        }
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidTensor(format!(
                "shape {shape:?} must be non-empty with positive dimensions"
            )));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::InvalidTensor(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: Shape::from_slice(shape),
            data,
        })
    }

    /// # Panics
    /// If any dimension is zero.
    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    /// # Panics
    /// If any dimension is zero.
    pub fn full(shape: &[usize], value: f64) -> Self {
        assert!(
            !shape.is_empty() && shape.len() <= 4 && shape.iter().all(|&d| d > 0),
            "invalid shape {shape:?}"
        );
        let len = shape.iter().product();
        Tensor {
            shape: Shape::from_slice(shape),
            data: vec![value; len],
        }
    }

    /// 1-D tensor. Panics on an empty vector.
    pub fn vector(data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "empty vector");
        Tensor {
            shape: Shape::from_slice(&[data.len()]),
            data,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Shape::from_slice(&[1]),
            data: vec![value],
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_parts(&[rows, cols], data)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::Empty("from_rows"));
        };
        let cols = first.len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::shape("from_rows", &[cols], &[r.len()]));
            }
            data.extend_from_slice(r);
        }
        Self::new(vec![rows.len(), cols], data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Tensor with the shape of `self` holding `data`.
    pub(crate) fn same_shape(&self, data: Vec<f64>) -> Tensor {
        assert_eq!(data.len(), self.data.len(), "data does not fit shape {:?}", self.shape);
        Tensor { shape: self.shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Trailing extent of a 2-D tensor.
    pub fn cols(&self) -> usize {
        self.shape[self.shape.len() - 1]
    }

    pub fn get2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    pub fn set2(&mut self, i: usize, j: usize, v: f64) {
        let c = self.cols();
        self.data[i * c + j] = v;
    }

    /// Row `i` of a 2-D tensor.
    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::shape(op, self.shape(), other.shape()));
        }
        Ok(Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn transpose(&self) -> Result<Tensor> {
        if self.ndim() != 2 {
            return Err(Error::InvalidTensor(format!(
                "transpose needs a matrix, got {:?}",
                self.shape
            )));
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::new(vec![c, r], out)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        best
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn require_matrix(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    if t.ndim() != 2 {
        return Err(Error::InvalidTensor(format!(
            "{op} needs a matrix, got shape {:?}",
            t.shape()
        )));
    }
    Ok((t.shape[0], t.shape[1]))
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (r, k) = require_matrix("matmul", a)?;
    let (k2, c) = require_matrix("matmul", b)?;
    if k != k2 {
        return Err(Error::shape("matmul", a.shape(), b.shape()));
    }
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let orow = &mut out[i * c..(i + 1) * c];
        for l in 0..k {
            let av = a.data[i * k + l];
            let brow = &b.data[l * c..(l + 1) * c];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(vec![r, c], out)
}

/// `m · v` for `m: [r×c]`, `v: [c]`.
pub fn matvec(m: &Tensor, v: &Tensor) -> Result<Tensor> {
    let (r, c) = require_matrix("matvec", m)?;
    if v.ndim() != 1 || v.len() != c {
        return Err(Error::shape("matvec", m.shape(), v.shape()));
    }
    let out = (0..r).map(|i| dot(m.row(i), &v.data)).collect();
    Tensor::from_parts(&[r], out)
}

/// `mᵀ · v` for `m: [r×c]`, `v: [r]`.
pub fn matvec_t(m: &Tensor, v: &Tensor) -> Result<Tensor> {
    let (r, c) = require_matrix("matvec_t", m)?;
    if v.ndim() != 1 || v.len() != r {
        return Err(Error::shape("matvec_t", m.shape(), v.shape()));
    }
    let mut out = vec![0.0; c];
    for i in 0..r {
        let s = v.data[i];
        for (o, &x) in out.iter_mut().zip(m.row(i)) {
            *o += s * x;
        }
    }
    Tensor::from_parts(&[c], out)
}

/// Inner product over the common prefix, summed in four interleaved lanes.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut lanes = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            lanes[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElemOp {
    Sigmoid,
    Tanh,
    Add,
    Mul,
    Sub,
}

pub fn elementwise(op: ElemOp, a: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    match op {
        ElemOp::Sigmoid => Ok(a.map(sigmoid)),
        ElemOp::Tanh => Ok(a.map(f64::tanh)),
        ElemOp::Add | ElemOp::Mul | ElemOp::Sub => {
            let b = b.ok_or_else(|| {
                Error::InvalidTensor(format!("{op:?} needs a second operand"))
            })?;
            match op {
                ElemOp::Add => a.zip_map(b, "add", |x, y| x + y),
                ElemOp::Mul => a.zip_map(b, "mul", |x, y| x * y),
                _ => a.zip_map(b, "sub", |x, y| x - y),
            }
        }
    }
}

pub fn softmax(v: &Tensor) -> Result<Tensor> {
    let max = max_of(v)?;
    let exps: Vec<f64> = v.data.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Tensor::from_parts(&v.shape, exps.into_iter().map(|e| e / total).collect())
}

pub fn log_softmax(v: &Tensor) -> Result<Tensor> {
    let max = max_of(v)?;
    let lse = max + v.data.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
    Ok(v.map(|x| x - lse))
}

fn max_of(v: &Tensor) -> Result<f64> {
    if v.ndim() != 1 {
        return Err(Error::InvalidTensor(format!(
            "softmax needs a vector, got {:?}",
            v.shape()
        )));
    }
    // Tensors cannot be empty, but keep the documented error for the
    // zero-length case should that invariant ever be relaxed.
    v.data
        .iter()
        .copied()
        .reduce(f64::max)
        .ok_or(Error::Empty("softmax"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Seed;
    use rand::Rng;

    #[test]
    fn matmul_identity_and_hand_cases() {
        let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(matmul(&Tensor::identity(2), &a).unwrap(), a);
        let row = Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let col = Tensor::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        assert_eq!(matmul(&row, &col).unwrap().data(), &[11.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = Seed(7).rng();
        let a: Vec<f64> = (0..35).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..21).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ta = Tensor::matrix(5, 7, a.clone()).unwrap();
        let tb = Tensor::matrix(7, 3, b.clone()).unwrap();
        let got = matmul(&ta, &tb).unwrap();
        for i in 0..5 {
            for j in 0..3 {
                let mut s = 0.0;
                for l in 0..7 {
                    s += a[i * 7 + l] * b[l * 3 + j];
                }
                assert!((got.get2(i, j) - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        let msg = matmul(&a, &b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        for x in [-1000.0, 1000.0, -745.0, 710.0] {
            let s = sigmoid(x);
            assert!(s.is_finite() && (0.0..=1.0).contains(&s));
        }
        assert!(sigmoid(-1000.0) >= 0.0 && sigmoid(1000.0) <= 1.0);
        let t = elementwise(ElemOp::Tanh, &Tensor::scalar(0.0), None).unwrap();
        assert_eq!(t.item(), 0.0);
    }

    #[test]
    fn binary_elementwise_requires_equal_shapes() {
        let a = Tensor::zeros(&[3]);
        let b = Tensor::zeros(&[4]);
        assert!(elementwise(ElemOp::Add, &a, Some(&b)).is_err());
        assert!(elementwise(ElemOp::Mul, &a, None).is_err());
    }

    #[test]
    fn softmax_cases() {
        let s = softmax(&Tensor::vector(vec![0.0, 0.0])).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);
        let s = softmax(&Tensor::vector(vec![1f64.ln(), 2f64.ln(), 3f64.ln()])).unwrap();
        for (got, want) in s.data().iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((got - want).abs() < 1e-15);
        }
        // exp(-1000) underflows to zero; 1/(1+e^-1000) is 1 in f64.
        let s = softmax(&Tensor::vector(vec![1000.0, 0.0])).unwrap();
        assert_eq!(s.data(), &[1.0, 0.0]);
    }

    #[test]
    fn invalid_shapes_rejected() {
        assert!(Tensor::new(vec![], vec![]).is_err());
        assert!(Tensor::new(vec![0], vec![]).is_err());
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
    }
}
