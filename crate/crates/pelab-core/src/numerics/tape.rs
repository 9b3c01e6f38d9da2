//! Reverse-mode gradient engine: a Wengert list over [`Tensor`] values.
//!
//! Operations are recorded through [`GradTape`] handles ([`Var`]) and replayed
//! in exact reverse order by [`GradTape::backward`]. The op set is the minimum
//! the toy transformer needs; each adjoint rule is verified against central
//! differences in `gradcheck`.
//!
//! A tape is single-threaded. Batch-level parallelism happens over
//! independent tapes.

use std::collections::HashMap;
use std::rc::Rc;

use super::tensor::{
    self, matmul, matmul_nt, matmul_tn, softmax_rows, zip_with, NumericsError, Tensor,
};

/// Handle to a node on one specific tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// Arithmetic precision of tape evaluation.
///
/// `F32` rounds every recorded value through 32-bit storage and runs the
/// matrix kernels with 32-bit accumulation; it exists as a throughput/storage
/// mode for training. All property tolerances in this crate assume `F64`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

/// Per-row linear map: a chain of 2x2 blocks down the diagonal plus one
/// scalar factor per row. This is the shape shared by every rotary-family
/// position transform, kept here so the tape does not depend on the encoders.
#[derive(Clone, Debug)]
pub struct RowBlockMap {
    cols: usize,
    /// `n_rows * cols/2` blocks, row-major `[b00, b01, b10, b11]`.
    blocks: Vec<[f64; 4]>,
    /// One factor per row; `1.0` for unscaled maps.
    scales: Vec<f64>,
}

impl RowBlockMap {
    pub fn new(cols: usize, blocks: Vec<[f64; 4]>, scales: Vec<f64>) -> Self {
        assert!(cols % 2 == 0, "RowBlockMap needs an even column count");
        assert_eq!(blocks.len(), scales.len() * cols / 2, "block count mismatch");
        Self { cols, blocks, scales }
    }

    pub fn rows(&self) -> usize {
        self.scales.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn apply(&self, t: &Tensor) -> Result<Tensor, NumericsError> {
        self.apply_impl(t, false)
    }

    /// Apply the transpose of each row map (same scales); the adjoint rule.
    pub fn apply_transposed(&self, t: &Tensor) -> Result<Tensor, NumericsError> {
        self.apply_impl(t, true)
    }

    fn apply_impl(&self, t: &Tensor, transpose: bool) -> Result<Tensor, NumericsError> {
        let (rows, cols) = t.dims2()?;
        if rows != self.rows() || cols != self.cols {
            return Err(NumericsError::ShapeMismatch {
                op: "row_block_map",
                left: vec![self.rows(), self.cols],
                right: t.shape().to_vec(),
            });
        }
        let half = cols / 2;
        let mut out = Tensor::zeros(&[rows, cols]);
        for r in 0..rows {
            let x = &t.data()[r * cols..(r + 1) * cols];
            let s = self.scales[r];
            let o = &mut out.data_mut()[r * cols..(r + 1) * cols];
            for i in 0..half {
                let [b00, b01, b10, b11] = self.blocks[r * half + i];
                let (m01, m10) = if transpose { (b10, b01) } else { (b01, b10) };
                let (x0, x1) = (x[2 * i], x[2 * i + 1]);
                o[2 * i] = s * (b00 * x0 + m01 * x1);
                o[2 * i + 1] = s * (m10 * x0 + b11 * x1);
            }
        }
        Ok(out)
    }
}

/// Coefficient table for pairwise relative-offset scores: the bilinear form
/// `s_ij = Σ_p sym_p(q_i,k_j)·ce[i−j][p] + cross_p(q_i,k_j)·se[i−j][p]`
/// over 2D pairs `p`, where sym = q0k0+q1k1 and cross = q0k1+q1k0.
///
/// This is the overflow-safe evaluation of the damped hyperbolic score: the
/// caller bakes the combined exponentials into `ce`/`se`, so no intermediate
/// ever exceeds the magnitude of the score itself.
#[derive(Clone, Debug)]
pub struct PairScoreTable {
    cols: usize,
    rows: usize,
    /// `(2·rows − 1) · cols/2` entries; offset δ = i − j maps to row δ + rows − 1.
    ce: Vec<f64>,
    se: Vec<f64>,
}

impl PairScoreTable {
    pub fn new(rows: usize, cols: usize, ce: Vec<f64>, se: Vec<f64>) -> Self {
        assert!(cols % 2 == 0, "PairScoreTable needs an even column count");
        let want = (2 * rows - 1) * (cols / 2);
        assert_eq!(ce.len(), want, "ce table size");
        assert_eq!(se.len(), want, "se table size");
        Self { cols, rows, ce, se }
    }

    #[inline]
    fn coeffs(&self, i: usize, j: usize) -> (&[f64], &[f64]) {
        let half = self.cols / 2;
        let ix = (i + self.rows - 1 - j) * half;
        (&self.ce[ix..ix + half], &self.se[ix..ix + half])
    }

    /// Forward scores `[rows, rows]` from `q`, `k` of shape `[rows, cols]`.
    pub fn scores(&self, q: &Tensor, k: &Tensor) -> Result<Tensor, NumericsError> {
        self.check(q)?;
        self.check(k)?;
        let (l, d) = (self.rows, self.cols);
        let mut out = Tensor::zeros(&[l, l]);
        for i in 0..l {
            let qr = q.row(i);
            for j in 0..l {
                let kr = k.row(j);
                let (ce, se) = self.coeffs(i, j);
                let mut s = 0.0;
                for p in 0..d / 2 {
                    let (q0, q1) = (qr[2 * p], qr[2 * p + 1]);
                    let (k0, k1) = (kr[2 * p], kr[2 * p + 1]);
                    s += (q0 * k0 + q1 * k1) * ce[p] + (q0 * k1 + q1 * k0) * se[p];
                }
                out.data_mut()[i * l + j] = s;
            }
        }
        Ok(out)
    }

    /// Adjoint wrt `q` given upstream gradient `g` over the scores.
    pub fn vjp_q(&self, g: &Tensor, k: &Tensor) -> Result<Tensor, NumericsError> {
        self.check(k)?;
        let (l, d) = (self.rows, self.cols);
        let mut out = Tensor::zeros(&[l, d]);
        for i in 0..l {
            for j in 0..l {
                let gv = g.at2(i, j);
                if gv == 0.0 {
                    continue;
                }
                let kr = k.row(j);
                let (ce, se) = self.coeffs(i, j);
                let orow = &mut out.data_mut()[i * d..(i + 1) * d];
                for p in 0..d / 2 {
                    let (k0, k1) = (kr[2 * p], kr[2 * p + 1]);
                    orow[2 * p] += gv * (k0 * ce[p] + k1 * se[p]);
                    orow[2 * p + 1] += gv * (k1 * ce[p] + k0 * se[p]);
                }
            }
        }
        Ok(out)
    }

    /// Adjoint wrt `k` given upstream gradient `g` over the scores.
    pub fn vjp_k(&self, g: &Tensor, q: &Tensor) -> Result<Tensor, NumericsError> {
        self.check(q)?;
        let (l, d) = (self.rows, self.cols);
        let mut out = Tensor::zeros(&[l, d]);
        for i in 0..l {
            let qr = q.row(i);
            for j in 0..l {
                let gv = g.at2(i, j);
                if gv == 0.0 {
                    continue;
                }
                let (ce, se) = self.coeffs(i, j);
                let orow = &mut out.data_mut()[j * d..(j + 1) * d];
                for p in 0..d / 2 {
                    let (q0, q1) = (qr[2 * p], qr[2 * p + 1]);
                    orow[2 * p] += gv * (q0 * ce[p] + q1 * se[p]);
                    orow[2 * p + 1] += gv * (q1 * ce[p] + q0 * se[p]);
                }
            }
        }
        Ok(out)
    }

    fn check(&self, t: &Tensor) -> Result<(), NumericsError> {
        let (r, c) = t.dims2()?;
        if r != self.rows || c != self.cols {
            return Err(NumericsError::ShapeMismatch {
                op: "pair_scores",
                left: vec![self.rows, self.cols],
                right: t.shape().to_vec(),
            });
        }
        Ok(())
    }
}

enum Op {
    Leaf { trainable: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    /// `[n,d] + [d]`, broadcast over rows.
    AddRow(Var, Var),
    /// `[n,d] * [d]`, broadcast over rows.
    MulRow(Var, Var),
    Matmul(Var, Var),
    /// `a · bᵀ`.
    MatmulNT(Var, Var),
    Sum(Var),
    Silu(Var),
    SoftmaxRows(Var),
    RmsNormRows(Var, f64),
    GatherRows(Var, Rc<Vec<usize>>),
    SliceCols(Var, usize, usize),
    ConcatCols(Vec<Var>),
    RowBlockMap(Var, Rc<RowBlockMap>),
    PairScores(Var, Var, Rc<PairScoreTable>),
    AddConst(Var),
    /// Weighted mean NLL of `targets` under row-wise softmax of the logits.
    CrossEntropyRows { logits: Var, targets: Rc<Vec<usize>>, weights: Rc<Vec<f64>> },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients per leaf after a backward pass. Leaves the loss never touched
/// map to zero tensors.
#[derive(Debug)]
pub struct GradientMap {
    grads: HashMap<usize, Tensor>,
}

impl GradientMap {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(&v.0)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

/// Ordered record of primitive operations; replaying adjoints walks it in
/// exact reverse order.
pub struct GradTape {
    nodes: Vec<Node>,
    checked: bool,
    precision: Precision,
}

impl Default for GradTape {
    fn default() -> Self {
        Self::new()
    }
}

impl GradTape {
    /// Checked (NaN-asserting) 64-bit tape; the default everywhere outside
    /// training loops.
    pub fn new() -> Self {
        Self { nodes: Vec::new(), checked: true, precision: Precision::F64 }
    }

    pub fn with_options(checked: bool, precision: Precision) -> Self {
        Self { nodes: Vec::new(), checked, precision }
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Whether a node is a leaf marked trainable.
    pub fn is_trainable(&self, v: Var) -> bool {
        matches!(self.nodes[v.0].op, Op::Leaf { trainable: true })
    }

    /// Trainable leaf: receives a gradient entry from `backward`.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf { trainable: true })
    }

    /// Non-trainable input; still differentiated through, still reported in
    /// the gradient map (useful for input-sensitivity checks).
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf { trainable: false })
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let value = self.finish(value);
        if self.checked {
            assert!(
                value.all_finite(),
                "checked mode: non-finite value produced at node {}",
                self.nodes.len()
            );
        }
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn finish(&self, t: Tensor) -> Tensor {
        match self.precision {
            Precision::F64 => t,
            Precision::F32 => t.round_to_f32(),
        }
    }

    fn mm(&self, a: &Tensor, b: &Tensor) -> Result<Tensor, NumericsError> {
        match self.precision {
            Precision::F64 => matmul(a, b),
            Precision::F32 => matmul_f32(a, b),
        }
    }

    fn mm_nt(&self, a: &Tensor, b: &Tensor) -> Result<Tensor, NumericsError> {
        match self.precision {
            Precision::F64 => matmul_nt(a, b),
            Precision::F32 => Ok(matmul_f32(a, &transpose(b))?),
        }
    }

    // ── Recorded operations ─────────────────────────────────────────────

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let v = zip_with("add", self.value(a), self.value(b), |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let v = zip_with("sub", self.value(a), self.value(b), |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let v = zip_with("mul", self.value(a), self.value(b), |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| c * x);
        self.push(v, Op::Scale(a, c))
    }

    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var, NumericsError> {
        let v = row_broadcast("add_row", self.value(a), self.value(bias), |x, y| x + y)?;
        Ok(self.push(v, Op::AddRow(a, bias)))
    }

    pub fn mul_row(&mut self, a: Var, gain: Var) -> Result<Var, NumericsError> {
        let v = row_broadcast("mul_row", self.value(a), self.value(gain), |x, y| x * y)?;
        Ok(self.push(v, Op::MulRow(a, gain)))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let v = self.mm(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::Matmul(a, b)))
    }

    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let v = self.mm_nt(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::MatmulNT(a, b)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).data().iter().sum());
        self.push(v, Op::Sum(a))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * sigmoid(x));
        self.push(v, Op::Silu(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var, NumericsError> {
        let v = softmax_rows(self.value(a))?;
        Ok(self.push(v, Op::SoftmaxRows(a)))
    }

    /// Row-wise RMS normalization `x / sqrt(mean(x²) + eps)`.
    pub fn rms_norm_rows(&mut self, a: Var, eps: f64) -> Result<Var, NumericsError> {
        let t = self.value(a);
        let (rows, cols) = t.dims2()?;
        if cols == 0 {
            return Err(NumericsError::EmptyRow { shape: t.shape().to_vec() });
        }
        let mut out = Tensor::zeros(&[rows, cols]);
        for r in 0..rows {
            let x = &t.data()[r * cols..(r + 1) * cols];
            let inv = rms_inv(x, eps);
            for (o, &xi) in out.data_mut()[r * cols..(r + 1) * cols].iter_mut().zip(x) {
                *o = xi * inv;
            }
        }
        Ok(self.push(out, Op::RmsNormRows(a, eps)))
    }

    pub fn gather_rows(&mut self, table: Var, indices: Vec<usize>) -> Result<Var, NumericsError> {
        let t = self.value(table);
        let (rows, cols) = t.dims2()?;
        let mut out = Tensor::zeros(&[indices.len(), cols]);
        for (r, &ix) in indices.iter().enumerate() {
            if ix >= rows {
                return Err(NumericsError::ShapeMismatch {
                    op: "gather_rows",
                    left: t.shape().to_vec(),
                    right: vec![ix],
                });
            }
            out.data_mut()[r * cols..(r + 1) * cols].copy_from_slice(t.row(ix));
        }
        Ok(self.push(out, Op::GatherRows(table, Rc::new(indices))))
    }

    pub fn slice_cols(&mut self, a: Var, lo: usize, hi: usize) -> Result<Var, NumericsError> {
        let t = self.value(a);
        let (rows, cols) = t.dims2()?;
        if lo >= hi || hi > cols {
            return Err(NumericsError::ShapeMismatch {
                op: "slice_cols",
                left: t.shape().to_vec(),
                right: vec![lo, hi],
            });
        }
        let w = hi - lo;
        let mut out = Tensor::zeros(&[rows, w]);
        for r in 0..rows {
            out.data_mut()[r * w..(r + 1) * w].copy_from_slice(&t.row(r)[lo..hi]);
        }
        Ok(self.push(out, Op::SliceCols(a, lo, hi)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        assert!(!parts.is_empty(), "concat_cols needs at least one part");
        let rows = self.value(parts[0]).dims2()?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims2()?;
            if r != rows {
                return Err(NumericsError::ShapeMismatch {
                    op: "concat_cols",
                    left: self.value(parts[0]).shape().to_vec(),
                    right: self.value(p).shape().to_vec(),
                });
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Tensor::zeros(&[rows, total]);
        for r in 0..rows {
            let mut off = 0;
            for (&p, &w) in parts.iter().zip(&widths) {
                out.data_mut()[r * total + off..r * total + off + w]
                    .copy_from_slice(self.value(p).row(r));
                off += w;
            }
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    /// Position-dependent per-row linear map (the rotary-family transforms).
    pub fn row_block_map(&mut self, a: Var, map: Rc<RowBlockMap>) -> Result<Var, NumericsError> {
        let v = map.apply(self.value(a))?;
        Ok(self.push(v, Op::RowBlockMap(a, map)))
    }

    /// Pairwise relative-offset scores of two `[L, d]` inputs.
    pub fn pair_scores(
        &mut self,
        q: Var,
        k: Var,
        table: Rc<PairScoreTable>,
    ) -> Result<Var, NumericsError> {
        let v = table.scores(self.value(q), self.value(k))?;
        Ok(self.push(v, Op::PairScores(q, k, table)))
    }

    /// Add a constant tensor (mask, additive bias); gradient passes through.
    pub fn add_const(&mut self, a: Var, c: &Tensor) -> Result<Var, NumericsError> {
        let v = zip_with("add_const", self.value(a), c, |x, y| x + y)?;
        Ok(self.push(v, Op::AddConst(a)))
    }

    /// Weighted mean negative log-likelihood over rows of `logits`.
    /// Implemented as log-softmax with per-row max subtraction.
    pub fn cross_entropy_rows(
        &mut self,
        logits: Var,
        targets: Vec<usize>,
        weights: Vec<f64>,
    ) -> Result<Var, NumericsError> {
        let t = self.value(logits);
        let (rows, cols) = t.dims2()?;
        if targets.len() != rows || weights.len() != rows {
            return Err(NumericsError::ShapeMismatch {
                op: "cross_entropy_rows",
                left: t.shape().to_vec(),
                right: vec![targets.len(), weights.len()],
            });
        }
        let wsum: f64 = weights.iter().sum();
        assert!(wsum > 0.0, "cross_entropy_rows: weights sum to zero");
        let mut loss = 0.0;
        for r in 0..rows {
            let row = &t.data()[r * cols..(r + 1) * cols];
            let target = targets[r];
            if target >= cols {
                return Err(NumericsError::ShapeMismatch {
                    op: "cross_entropy_rows",
                    left: t.shape().to_vec(),
                    right: vec![target],
                });
            }
            if weights[r] == 0.0 {
                continue;
            }
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse: f64 = row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln() + max;
            loss += weights[r] * (lse - row[target]);
        }
        let v = Tensor::scalar(loss / wsum);
        Ok(self.push(v, Op::CrossEntropyRows {
            logits,
            targets: Rc::new(targets),
            weights: Rc::new(weights),
        }))
    }

    // ── Backward ────────────────────────────────────────────────────────

    /// Reverse sweep from a scalar `loss`; returns a gradient for every leaf
    /// (zeros where the loss does not depend on the leaf).
    pub fn backward(&self, loss: Var) -> Result<GradientMap, NumericsError> {
        if loss.0 >= self.nodes.len() {
            return Err(NumericsError::NotOnTape { id: loss.0, len: self.nodes.len() });
        }
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.numel() != 1 {
            return Err(NumericsError::NotScalar { shape: loss_value.shape().to_vec() });
        }

        let mut adjoints: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        adjoints[loss.0] = Some(Tensor::scalar(1.0));

        for id in (0..=loss.0).rev() {
            let Some(g) = adjoints[id].take() else { continue };
            if self.checked {
                assert!(g.all_finite(), "checked mode: non-finite adjoint at node {id}");
            }
            let g = self.finish(g);
            match &self.nodes[id].op {
                Op::Leaf { .. } => {
                    adjoints[id] = Some(g); // keep for the gradient map
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut adjoints, *a, g.clone())?;
                    self.accumulate(&mut adjoints, *b, g)?;
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut adjoints, *a, g.clone())?;
                    self.accumulate(&mut adjoints, *b, g.map(|x| -x))?;
                }
                Op::Mul(a, b) => {
                    let ga = zip_with("mul_vjp", &g, self.value(*b), |x, y| x * y)?;
                    let gb = zip_with("mul_vjp", &g, self.value(*a), |x, y| x * y)?;
                    self.accumulate(&mut adjoints, *a, ga)?;
                    self.accumulate(&mut adjoints, *b, gb)?;
                }
                Op::Scale(a, c) => {
                    self.accumulate(&mut adjoints, *a, g.map(|x| c * x))?;
                }
                Op::AddRow(a, bias) => {
                    let (rows, cols) = g.dims2()?;
                    let mut gb = Tensor::zeros(&[cols]);
                    for r in 0..rows {
                        for (o, &gv) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *o += gv;
                        }
                    }
                    self.accumulate(&mut adjoints, *a, g)?;
                    self.accumulate(&mut adjoints, *bias, gb)?;
                }
                Op::MulRow(a, gain) => {
                    let (rows, cols) = g.dims2()?;
                    let ga = row_broadcast("mul_row_vjp", &g, self.value(*gain), |x, y| x * y)?;
                    let mut gg = Tensor::zeros(&[cols]);
                    let av = self.value(*a);
                    for r in 0..rows {
                        for ((o, &gv), &xv) in
                            gg.data_mut().iter_mut().zip(g.row(r)).zip(av.row(r))
                        {
                            *o += gv * xv;
                        }
                    }
                    self.accumulate(&mut adjoints, *a, ga)?;
                    self.accumulate(&mut adjoints, *gain, gg)?;
                }
                Op::Matmul(a, b) => {
                    let ga = self.mm_nt(&g, self.value(*b))?;
                    let gb = match self.precision {
                        Precision::F64 => matmul_tn(self.value(*a), &g)?,
                        Precision::F32 => matmul_f32(&transpose(self.value(*a)), &g)?,
                    };
                    self.accumulate(&mut adjoints, *a, ga)?;
                    self.accumulate(&mut adjoints, *b, gb)?;
                }
                Op::MatmulNT(a, b) => {
                    let ga = self.mm(&g, self.value(*b))?;
                    let gb = match self.precision {
                        Precision::F64 => matmul_tn(&g, self.value(*a))?,
                        Precision::F32 => matmul_f32(&transpose(&g), self.value(*a))?,
                    };
                    self.accumulate(&mut adjoints, *a, ga)?;
                    self.accumulate(&mut adjoints, *b, gb)?;
                }
                Op::Sum(a) => {
                    let gv = g.item();
                    let shape = self.value(*a).shape().to_vec();
                    self.accumulate(&mut adjoints, *a, Tensor::filled(&shape, gv))?;
                }
                Op::Silu(a) => {
                    let ga = zip_with("silu_vjp", &g, self.value(*a), |gv, x| {
                        let s = sigmoid(x);
                        gv * s * (1.0 + x * (1.0 - s))
                    })?;
                    self.accumulate(&mut adjoints, *a, ga)?;
                }
                Op::SoftmaxRows(a) => {
                    let y = &self.nodes[id].value;
                    let (rows, cols) = y.dims2()?;
                    let mut ga = Tensor::zeros(&[rows, cols]);
                    for r in 0..rows {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let inner = tensor::dot(gr, yr);
                        for ((o, &yv), &gv) in
                            ga.data_mut()[r * cols..(r + 1) * cols].iter_mut().zip(yr).zip(gr)
                        {
                            *o = yv * (gv - inner);
                        }
                    }
                    self.accumulate(&mut adjoints, *a, ga)?;
                }
                Op::RmsNormRows(a, eps) => {
                    let x = self.value(*a);
                    let (rows, cols) = x.dims2()?;
                    let mut ga = Tensor::zeros(&[rows, cols]);
                    for r in 0..rows {
                        let xr = x.row(r);
                        let gr = g.row(r);
                        let inv = rms_inv(xr, *eps);
                        let proj = tensor::dot(gr, xr) * inv * inv * inv / cols as f64;
                        for ((o, &xv), &gv) in
                            ga.data_mut()[r * cols..(r + 1) * cols].iter_mut().zip(xr).zip(gr)
                        {
                            *o = gv * inv - xv * proj;
                        }
                    }
                    self.accumulate(&mut adjoints, *a, ga)?;
                }
                Op::GatherRows(table, indices) => {
                    let shape = self.value(*table).shape().to_vec();
                    let cols = shape[1];
                    let mut gt = Tensor::zeros(&shape);
                    for (r, &ix) in indices.iter().enumerate() {
                        for (o, &gv) in
                            gt.data_mut()[ix * cols..(ix + 1) * cols].iter_mut().zip(g.row(r))
                        {
                            *o += gv;
                        }
                    }
                    self.accumulate(&mut adjoints, *table, gt)?;
                }
                Op::SliceCols(a, lo, _hi) => {
                    let shape = self.value(*a).shape().to_vec();
                    let (rows, w) = g.dims2()?;
                    let cols = shape[1];
                    let mut ga = Tensor::zeros(&shape);
                    for r in 0..rows {
                        ga.data_mut()[r * cols + lo..r * cols + lo + w].copy_from_slice(g.row(r));
                    }
                    self.accumulate(&mut adjoints, *a, ga)?;
                }
                Op::ConcatCols(parts) => {
                    let rows = g.dims2()?.0;
                    let total = g.dims2()?.1;
                    let mut off = 0;
                    for &p in parts {
                        let w = self.value(p).dims2()?.1;
                        let mut gp = Tensor::zeros(&[rows, w]);
                        for r in 0..rows {
                            gp.data_mut()[r * w..(r + 1) * w]
                                .copy_from_slice(&g.data()[r * total + off..r * total + off + w]);
                        }
                        self.accumulate(&mut adjoints, p, gp)?;
                        off += w;
                    }
                }
                Op::RowBlockMap(a, map) => {
                    let ga = map.apply_transposed(&g)?;
                    self.accumulate(&mut adjoints, *a, ga)?;
                }
                Op::PairScores(q, k, table) => {
                    let gq = table.vjp_q(&g, self.value(*k))?;
                    let gk = table.vjp_k(&g, self.value(*q))?;
                    self.accumulate(&mut adjoints, *q, gq)?;
                    self.accumulate(&mut adjoints, *k, gk)?;
                }
                Op::AddConst(a) => {
                    self.accumulate(&mut adjoints, *a, g)?;
                }
                Op::CrossEntropyRows { logits, targets, weights } => {
                    let t = self.value(*logits);
                    let (rows, cols) = t.dims2()?;
                    let wsum: f64 = weights.iter().sum();
                    let gv = g.item();
                    let mut gl = Tensor::zeros(&[rows, cols]);
                    let mut probs = vec![0.0; cols];
                    for r in 0..rows {
                        if weights[r] == 0.0 {
                            continue;
                        }
                        let row = &t.data()[r * cols..(r + 1) * cols];
                        tensor::softmax_row_into(row, &mut probs);
                        let scale = gv * weights[r] / wsum;
                        let orow = &mut gl.data_mut()[r * cols..(r + 1) * cols];
                        for (o, &p) in orow.iter_mut().zip(&probs) {
                            *o = scale * p;
                        }
                        orow[targets[r]] -= scale;
                    }
                    self.accumulate(&mut adjoints, *logits, gl)?;
                }
            }
        }

        let mut grads = HashMap::new();
        for (id, node) in self.nodes.iter().enumerate() {
            if let Op::Leaf { .. } = node.op {
                let g = adjoints[id]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(node.value.shape()));
                grads.insert(id, g);
            }
        }
        Ok(GradientMap { grads })
    }

    fn accumulate(
        &self,
        adjoints: &mut [Option<Tensor>],
        v: Var,
        g: Tensor,
    ) -> Result<(), NumericsError> {
        let g = self.finish(g);
        match &mut adjoints[v.0] {
            Some(acc) => {
                *acc = self.finish(zip_with("adjoint_accumulate", acc, &g, |x, y| x + y)?);
            }
            slot @ None => *slot = Some(g),
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn rms_inv(x: &[f64], eps: f64) -> f64 {
    let mean_sq = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    1.0 / (mean_sq + eps).sqrt()
}

fn row_broadcast(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor, NumericsError> {
    let (rows, cols) = a.dims2()?;
    if b.shape() != [cols] {
        return Err(NumericsError::ShapeMismatch {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let mut out = Tensor::zeros(&[rows, cols]);
    for r in 0..rows {
        for ((o, &x), &y) in
            out.data_mut()[r * cols..(r + 1) * cols].iter_mut().zip(a.row(r)).zip(b.data())
        {
            *o = f(x, y);
        }
    }
    Ok(out)
}

fn transpose(t: &Tensor) -> Tensor {
    let (rows, cols) = t.dims2().expect("transpose needs rank 2");
    let mut out = Tensor::zeros(&[cols, rows]);
    for r in 0..rows {
        for c in 0..cols {
            out.data_mut()[c * rows + r] = t.at2(r, c);
        }
    }
    out
}

/// 32-bit matmul kernel: casts operands and accumulates in `f32`.
fn matmul_f32(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericsError> {
    let (m, ka) = a.dims2()?;
    let (kb, n) = b.dims2()?;
    if ka != kb {
        return Err(NumericsError::ShapeMismatch {
            op: "matmul",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let af: Vec<f32> = a.data().iter().map(|&x| x as f32).collect();
    let bf: Vec<f32> = b.data().iter().map(|&x| x as f32).collect();
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        let arow = &af[i * ka..(i + 1) * ka];
        let orow = &mut out[i * n..(i + 1) * n];
        for (l, &av) in arow.iter().enumerate() {
            let brow = &bf[l * n..(l + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::from_vec(&[m, n], out.into_iter().map(f64::from).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_of_sum_is_all_ones() {
        let mut tape = GradTape::new();
        let x = tape.leaf(Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap());
        let loss = tape.sum(x);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_of_sum_of_squares() {
        let mut tape = GradTape::new();
        let x = tape.leaf(Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap());
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum(sq);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn untouched_leaves_get_zero() {
        let mut tape = GradTape::new();
        let x = tape.leaf(Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap());
        let y = tape.leaf(Tensor::from_vec(&[2], vec![3.0, 4.0]).unwrap());
        let loss = tape.sum(x);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(y).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn empty_tape_loss_is_rejected() {
        let tape = GradTape::new();
        let err = tape.backward(Var(0)).unwrap_err();
        assert!(matches!(err, NumericsError::NotOnTape { .. }));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = GradTape::new();
        let x = tape.leaf(Tensor::zeros(&[2, 2]));
        assert!(matches!(tape.backward(x), Err(NumericsError::NotScalar { .. })));
    }

    #[test]
    fn leaf_only_tape_gives_zero_to_other_leaves() {
        let mut tape = GradTape::new();
        let loss = tape.leaf(Tensor::scalar(3.0));
        let other = tape.leaf(Tensor::from_vec(&[2], vec![1.0, 1.0]).unwrap());
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(other).unwrap().data(), &[0.0, 0.0]);
        assert_eq!(grads.get(loss).unwrap().data(), &[1.0]);
    }

    #[test]
    fn matmul_gradient_hand_checked() {
        // loss = sum(A·B) with A=[[1,2]], B=[[3],[4]] → dA = [[3,4]], dB = [[1],[2]].
        let mut tape = GradTape::new();
        let a = tape.leaf(Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap());
        let b = tape.leaf(Tensor::from_vec(&[2, 1], vec![3.0, 4.0]).unwrap());
        let c = tape.matmul(a, b).unwrap();
        let loss = tape.sum(c);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(a).unwrap().data(), &[3.0, 4.0]);
        assert_eq!(grads.get(b).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn f32_mode_rounds_values() {
        let mut tape = GradTape::with_options(true, Precision::F32);
        let x = tape.leaf(Tensor::scalar(0.1));
        assert_eq!(tape.value(x).item(), 0.1f32 as f64);
    }
}
