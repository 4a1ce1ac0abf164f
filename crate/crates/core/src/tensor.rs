//! Dense row-major tensors of rank 1 to 3.
//!
//! Shapes are checked exactly; there is no broadcasting. The binary encoding
//! is `u32 rank`, `rank × u32 dims`, then the payload as little-endian `f64`
//! regardless of the in-memory scalar type.

use crate::codec::{self, ByteReader};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Norms below this are treated as zero by [`cosine_similarity`].
pub const DEGENERATE_NORM: f64 = 1e-12;

pub const MAX_RANK: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > MAX_RANK {
        return Err(Error::dim(format!(
            "rank {} outside 1..={MAX_RANK} (shape {shape:?})",
            shape.len()
        )));
    }
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::dim(format!("zero-sized dimension in shape {shape:?}")));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::dim(format!("shape {shape:?} overflows")))
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let len = check_shape(&shape)?;
        if len != data.len() {
            return Err(Error::dim(format!(
                "shape {shape:?} needs {len} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); len],
        })
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self {
            shape: other.shape.clone(),
            data: vec![T::zero(); other.data.len()],
        }
    }

    /// Rank-1 tensor. Panics on an empty vector.
    pub fn vector(data: Vec<T>) -> Self {
        assert!(!data.is_empty(), "empty vector tensor");
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn from_f64(shape: Vec<usize>, data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| T::lit(v)).collect())
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
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

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn at2(&self, i: usize, j: usize) -> T {
        debug_assert_eq!(self.rank(), 2);
        self.data[i * self.shape[1] + j]
    }

    pub fn at3(&self, c: usize, i: usize, j: usize) -> T {
        debug_assert_eq!(self.rank(), 3);
        self.data[(c * self.shape[1] + i) * self.shape[2] + j]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|v| v * k)
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// `self += k * other`, shapes must match exactly.
    pub fn add_scaled(&mut self, other: &Self, k: T) -> Result<()> {
        self.require_same_shape(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += k * b;
        }
        Ok(())
    }

    pub fn require_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::dim(format!(
                "shapes {:?} and {:?} differ",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v.as_f64()).collect()
    }

    /// Number of bytes [`Tensor::encode`] will produce.
    pub fn encoded_len(&self) -> usize {
        4 + 4 * self.rank() + 8 * self.len()
    }

    pub fn encode(&self, out: &mut Vec<u8>) {
        codec::put_u32(out, self.rank() as u32);
        for &d in &self.shape {
            codec::put_u32(out, d as u32);
        }
        for &v in &self.data {
            codec::put_f64(out, v.as_f64());
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.encode(&mut out);
        out
    }

    pub(crate) fn decode(reader: &mut ByteReader<'_>) -> Result<Self> {
        let rank = reader.u32()? as usize;
        if rank == 0 || rank > MAX_RANK {
            return Err(reader.error(format!("tensor rank {rank} outside 1..={MAX_RANK}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(reader.u32()? as usize);
        }
        let len = check_shape(&shape).map_err(|e| reader.error(e.to_string()))?;
        let raw = reader.bytes(len.checked_mul(8).ok_or_else(|| reader.error("tensor too large"))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
            .collect();
        Ok(Self { shape, data })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut reader = ByteReader::new("tensor", bytes);
        let t = Self::decode(&mut reader)?;
        reader.expect_end()?;
        Ok(t)
    }
}

fn require_rank<T: Scalar>(t: &Tensor<T>, rank: usize, what: &str) -> Result<()> {
    if t.rank() != rank {
        return Err(Error::dim(format!(
            "{what} must have rank {rank}, got shape {:?}",
            t.shape()
        )));
    }
    Ok(())
}

/// Matrix-vector product of a `[rows, cols]` matrix and a `[cols]` vector.
pub fn matvec<T: Scalar>(m: &Tensor<T>, v: &Tensor<T>) -> Result<Tensor<T>> {
    require_rank(m, 2, "matvec matrix")?;
    require_rank(v, 1, "matvec vector")?;
    let (rows, cols) = (m.shape[0], m.shape[1]);
    if cols != v.len() {
        return Err(Error::dim(format!(
            "matvec of {:?} by {:?}",
            m.shape(),
            v.shape()
        )));
    }
    let out = m
        .data
        .chunks_exact(cols)
        .map(|row| dot_slices(row, &v.data))
        .collect::<Vec<_>>();
    debug_assert_eq!(out.len(), rows);
    Ok(Tensor::vector(out))
}

#[inline]
pub(crate) fn dot_slices<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn dot<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<T> {
    require_rank(a, 1, "dot operand")?;
    require_rank(b, 1, "dot operand")?;
    if a.len() != b.len() {
        return Err(Error::dim(format!(
            "dot of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(dot_slices(&a.data, &b.data))
}

/// Euclidean norm over all entries.
pub fn l2_norm<T: Scalar>(a: &Tensor<T>) -> T {
    dot_slices(&a.data, &a.data).sqrt()
}

/// Cosine of the angle between two vectors, clamped to `[-1, 1]`.
///
/// Fails with [`Error::DegenerateVector`] when either norm is below
/// [`DEGENERATE_NORM`]; callers choose the fallback.
pub fn cosine_similarity<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<T> {
    let ab = dot(a, b)?;
    let na = l2_norm(a);
    let nb = l2_norm(b);
    let threshold = T::lit(DEGENERATE_NORM);
    for n in [na, nb] {
        if !(n >= threshold) {
            return Err(Error::DegenerateVector {
                norm: n.as_f64(),
                threshold: DEGENERATE_NORM,
            });
        }
    }
    let c = ab / (na * nb);
    Ok(c.max(-T::one()).min(T::one()))
}
