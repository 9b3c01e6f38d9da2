//! Dense row-major tensors and the handful of pure kernels the rest of the
//! crate is built on.
//!
//! Everything is `f64`. Shapes are validated eagerly; NaN/Inf scanning is the
//! tape's job (see [`crate::numerics::tape::GradTape`]) so that hot training
//! loops can turn it off.

use std::fmt;

/// Errors from tensor construction and the pure kernels.
#[derive(Clone, Debug, PartialEq)]
pub enum NumericsError {
    /// Data length does not match the product of the extents.
    DataLength { expected: usize, got: usize },
    /// Two operands cannot be combined under the named operation.
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    /// An operation required a rank-2 tensor.
    NotRank2 { shape: Vec<usize> },
    /// A row-wise reduction met a zero-width row.
    EmptyRow { shape: Vec<usize> },
    /// A checked computation produced or received a non-finite value.
    NonFinite { label: String },
    /// `backward` was handed a node id the tape never produced.
    NotOnTape { id: usize, len: usize },
    /// `backward` needs a scalar loss node.
    NotScalar { shape: Vec<usize> },
    /// Finite-difference step outside the supported range.
    BadStep { eps: f64 },
}

impl fmt::Display for NumericsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DataLength { expected, got } => {
                write!(f, "data length {got} does not match shape product {expected}")
            }
            Self::ShapeMismatch { op, left, right } => {
                write!(f, "{op}: incompatible shapes {left:?} and {right:?}")
            }
            Self::NotRank2 { shape } => write!(f, "expected a rank-2 tensor, got shape {shape:?}"),
            Self::EmptyRow { shape } => write!(f, "rows of shape {shape:?} are empty"),
            Self::NonFinite { label } => write!(f, "non-finite value in {label}"),
            Self::NotOnTape { id, len } => {
                write!(f, "node {id} is not on this tape (tape has {len} nodes)")
            }
            Self::NotScalar { shape } => write!(f, "loss must be scalar, got shape {shape:?}"),
            Self::BadStep { eps } => write!(f, "finite-difference step {eps} outside (0, 1e-2]"),
        }
    }
}

impl std::error::Error for NumericsError {}

/// Dense row-major tensor of `f64` values.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Build a tensor from a shape and row-major data.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self, NumericsError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(NumericsError::DataLength { expected, got: data.len() });
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n: usize = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn scalar(value: f64) -> Self {
        Self { shape: vec![1], data: vec![value] }
    }

    /// Identity matrix of extent `n`.
    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
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

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Rows/cols of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize), NumericsError> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(NumericsError::NotRank2 { shape: self.shape.clone() }),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let (_, c) = (self.shape[0], self.shape[1]);
        &self.data[i * c..(i + 1) * c]
    }

    pub fn at2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.shape[1] + j]
    }

    /// Scalar payload of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.numel(), 1);
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Error out when any stored value is NaN or infinite.
    pub fn ensure_finite(&self, label: &str) -> Result<(), NumericsError> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(NumericsError::NonFinite { label: label.to_string() })
        }
    }

    /// Round every element through `f32`, the storage precision of saved
    /// models and the tape's reduced-precision mode.
    pub fn round_to_f32(&self) -> Self {
        self.map(|x| x as f32 as f64)
    }
}

// ── Pure kernels ────────────────────────────────────────────────────────

/// Matrix product of two rank-2 tensors.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericsError> {
    let (m, ka) = a.dims2()?;
    let (kb, n) = b.dims2()?;
    if ka != kb {
        return Err(NumericsError::ShapeMismatch {
            op: "matmul",
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    let mut out = Tensor::zeros(&[m, n]);
    for i in 0..m {
        let arow = &a.data[i * ka..(i + 1) * ka];
        let orow = &mut out.data[i * n..(i + 1) * n];
        for (l, &av) in arow.iter().enumerate() {
            let brow = &b.data[l * n..(l + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(out)
}

/// `a · bᵀ` without materializing the transpose.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericsError> {
    let (m, ka) = a.dims2()?;
    let (n, kb) = b.dims2()?;
    if ka != kb {
        return Err(NumericsError::ShapeMismatch {
            op: "matmul_nt",
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    let mut out = Tensor::zeros(&[m, n]);
    for i in 0..m {
        let arow = &a.data[i * ka..(i + 1) * ka];
        for j in 0..n {
            let brow = &b.data[j * kb..(j + 1) * kb];
            out.data[i * n + j] = dot(arow, brow);
        }
    }
    Ok(out)
}

/// `aᵀ · b`; used by backward passes.
pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericsError> {
    let (ma, k) = a.dims2()?;
    let (mb, n) = b.dims2()?;
    if ma != mb {
        return Err(NumericsError::ShapeMismatch {
            op: "matmul_tn",
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    let mut out = Tensor::zeros(&[k, n]);
    for l in 0..ma {
        let arow = &a.data[l * k..(l + 1) * k];
        let brow = &b.data[l * n..(l + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            let orow = &mut out.data[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(out)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows(t: &Tensor) -> Result<Tensor, NumericsError> {
    let (rows, cols) = t.dims2()?;
    if cols == 0 {
        return Err(NumericsError::EmptyRow { shape: t.shape.clone() });
    }
    let mut out = Tensor::zeros(&[rows, cols]);
    for r in 0..rows {
        let row = &t.data[r * cols..(r + 1) * cols];
        let orow = &mut out.data[r * cols..(r + 1) * cols];
        softmax_row_into(row, orow);
    }
    Ok(out)
}

pub(crate) fn softmax_row_into(row: &[f64], out: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &x) in out.iter_mut().zip(row) {
        let e = (x - max).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Elementwise binary combine with shape check.
pub fn zip_with(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor, NumericsError> {
    if a.shape != b.shape {
        return Err(NumericsError::ShapeMismatch {
            op,
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    let data = a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
    Ok(Tensor { shape: a.shape.clone(), data })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_bad_length() {
        let err = Tensor::from_vec(&[2, 3], vec![1.0; 5]).unwrap_err();
        assert_eq!(err, NumericsError::DataLength { expected: 6, got: 5 });
    }

    #[test]
    fn matmul_identity() {
        let i2 = Tensor::eye(2);
        let a = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(matmul(&i2, &a).unwrap(), a);
    }

    #[test]
    fn matmul_annihilates_zeros() {
        let i2 = Tensor::eye(2);
        let z = Tensor::zeros(&[2, 2]);
        assert_eq!(matmul(&i2, &z).unwrap(), z);
    }

    #[test]
    fn matmul_hand_oracle() {
        // [[1,2],[3,4]] x [[5],[6]] worked by hand: rows dot the column.
        let a = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::from_vec(&[2, 1], vec![5.0, 6.0]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[17.0, 39.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 2]);
        let msg = matmul(&a, &b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
    }

    #[test]
    fn softmax_symmetry() {
        let t = Tensor::from_vec(&[1, 2], vec![0.0, 0.0]).unwrap();
        let s = softmax_rows(&t).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_survives_large_logits() {
        let t = Tensor::from_vec(&[1, 2], vec![1000.0, 0.0]).unwrap();
        let s = softmax_rows(&t).unwrap();
        assert!(s.all_finite());
        assert!((s.data()[0] - 1.0).abs() < 1e-300);
        assert!(s.data()[1] >= 0.0 && s.data()[1] < 1e-300);
    }

    #[test]
    fn softmax_direct_evaluation() {
        // Direct high-precision evaluation of softmax([1,2,3]).
        let (e1, e2, e3) = (1f64.exp(), 2f64.exp(), 3f64.exp());
        let z = e1 + e2 + e3;
        let t = Tensor::from_vec(&[1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let s = softmax_rows(&t).unwrap();
        let sum: f64 = s.data().iter().sum();
        assert!((sum - 1.0).abs() <= 1e-12);
        for (got, want) in s.data().iter().zip([e1 / z, e2 / z, e3 / z]) {
            assert!((got - want).abs() <= 1e-12);
        }
        assert!(s.data()[0] < s.data()[1] && s.data()[1] < s.data()[2]);
    }

    #[test]
    fn softmax_rejects_empty_rows() {
        let t = Tensor::zeros(&[3, 0]);
        assert!(matches!(softmax_rows(&t), Err(NumericsError::EmptyRow { .. })));
    }

    #[test]
    fn matmul_nt_matches_explicit_transpose() {
        let a = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor::from_vec(&[2, 3], vec![7.0, 8.0, 9.0, 1.0, 2.0, 3.0]).unwrap();
        let c = matmul_nt(&a, &b).unwrap();
        assert_eq!(c.at2(0, 0), 1.0 * 7.0 + 2.0 * 8.0 + 3.0 * 9.0);
        assert_eq!(c.at2(1, 1), 4.0 * 1.0 + 5.0 * 2.0 + 6.0 * 3.0);
    }
}
