//! Wengert tape: forward ops are recorded in execution order and replayed in
//! reverse to propagate gradients.

use super::linalg::{col2im, gemm, im2col, ConvGeometry};
use super::{Tensor, TensorError};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryKind {
    Relu,
    Sigmoid,
    Exp,
    Log,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    Conv2d { input: Var, kernel: Var, geom: ConvGeometry },
    Binary { kind: BinaryKind, a: Var, b: Var },
    Unary { kind: UnaryKind, a: Var },
    Scale { a: Var, factor: f32 },
    Clamp { a: Var, lo: f32, hi: f32 },
    LogSoftmax { a: Var },
    Sum { a: Var },
    Mean { a: Var },
    GlobalAvgPool { a: Var, channels: usize, plane: usize },
    MaxPool2d { a: Var, argmax: Vec<usize> },
    Upsample { a: Var, channels: usize, h: usize, w: usize, factor: usize },
    PNorm { u: Var, v: Var, p: f64, dist: f64 },
    Reshape { a: Var },
    Stack { parts: Vec<Var> },
    Index { a: Var, i: usize },
    Row { a: Var, i: usize, cols: usize },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records tensor operations for reverse-mode differentiation.
///
/// Every op returns a new [`Var`]; inputs are always recorded before their
/// consumers, so the node list is already in topological order.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf that receives a gradient (parameters, differentiable inputs).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&[f32]> {
        self.nodes[v.0].value.grad()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<f32>> {
        self.nodes[v.0].value.take_grad()
    }

    /// Clears every gradient slot on the tape.
    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.value.clear_grad();
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[f32] {
        self.nodes[v.0].value.data()
    }

    // ---------------------------------------------------------------- ops

    /// `[m x k] . [k x n] -> [m x n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::Shape(format!("matmul of {sa:?} and {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.data(a), false, self.data(b), false, &mut out, 0.0);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul { a, b, m, k, n }, rg))
    }

    /// Cross-correlation of a `c_in x h x w` input with
    /// `c_out x c_in x kh x kw` kernels (no kernel flip).
    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var, TensorError> {
        let (si, sk) = (self.shape(input), self.shape(kernel));
        if si.len() != 3 || sk.len() != 4 || si[0] != sk[1] {
            return Err(TensorError::Shape(format!("conv2d input {si:?} with kernels {sk:?}")));
        }
        if stride == 0 {
            return Err(TensorError::Parameter("conv2d stride must be >= 1".into()));
        }
        let (c_in, h, w) = (si[0], si[1], si[2]);
        let (c_out, kh, kw) = (sk[0], sk[2], sk[3]);
        if kh > h + 2 * padding || kw > w + 2 * padding {
            return Err(TensorError::Shape(format!(
                "conv2d kernel {kh}x{kw} exceeds padded input {}x{}",
                h + 2 * padding,
                w + 2 * padding
            )));
        }
        let oh = (h + 2 * padding - kh) / stride + 1;
        let ow = (w + 2 * padding - kw) / stride + 1;
        let geom = ConvGeometry { c_in, h, w, c_out, kh, kw, stride, padding, oh, ow };
        let mut out = vec![0.0; c_out * geom.out_len()];
        if kh == 1 && kw == 1 && stride == 1 && padding == 0 {
            gemm(c_out, c_in, geom.out_len(), self.data(kernel), false, self.data(input), false, &mut out, 0.0);
        } else {
            let mut cols = vec![0.0; geom.patch_len() * geom.out_len()];
            im2col(self.data(input), &geom, &mut cols);
            gemm(c_out, geom.patch_len(), geom.out_len(), self.data(kernel), false, &cols, false, &mut out, 0.0);
        }
        let rg = self.rg(input) || self.rg(kernel);
        Ok(self.push(Tensor::new(vec![c_out, oh, ow], out)?, Op::Conv2d { input, kernel, geom }, rg))
    }

    /// Elementwise binary op. Shapes must match, or one side must be a
    /// single-element tensor broadcast against the other.
    pub fn binary(&mut self, kind: BinaryKind, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let out_shape = if ta.shape() == tb.shape() {
            ta.shape().to_vec()
        } else if tb.numel() == 1 {
            ta.shape().to_vec()
        } else if ta.numel() == 1 {
            tb.shape().to_vec()
        } else {
            return Err(TensorError::Shape(format!(
                "{kind:?} of {:?} and {:?}",
                ta.shape(),
                tb.shape()
            )));
        };
        let n: usize = out_shape.iter().product();
        let (da, db) = (ta.data(), tb.data());
        let at = |i: usize| if da.len() == 1 { da[0] } else { da[i] };
        let bt = |i: usize| if db.len() == 1 { db[0] } else { db[i] };
        let out: Vec<f32> = (0..n)
            .map(|i| match kind {
                BinaryKind::Add => at(i) + bt(i),
                BinaryKind::Sub => at(i) - bt(i),
                BinaryKind::Mul => at(i) * bt(i),
            })
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(out_shape, out)?, Op::Binary { kind, a, b }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn unary(&mut self, kind: UnaryKind, a: Var) -> Result<Var, TensorError> {
        let t = self.value(a);
        let out: Vec<f32> = match kind {
            UnaryKind::Relu => t.data().iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect(),
            UnaryKind::Sigmoid => t.data().iter().map(|&x| sigmoid(x)).collect(),
            UnaryKind::Exp => {
                let out: Vec<f32> = t.data().iter().map(|&x| x.exp()).collect();
                if out.iter().any(|v| !v.is_finite()) {
                    return Err(TensorError::Domain("exp overflowed f32".into()));
                }
                out
            }
            UnaryKind::Log => {
                if let Some(x) = t.data().iter().find(|&&x| !(x > 0.0)) {
                    return Err(TensorError::Domain(format!("log of non-positive value {x}")));
                }
                t.data().iter().map(|&x| x.ln()).collect()
            }
        };
        let shape = t.shape().to_vec();
        let rg = self.rg(a);
        Ok(self.push(Tensor::new(shape, out)?, Op::Unary { kind, a }, rg))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, TensorError> {
        self.unary(UnaryKind::Relu, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, TensorError> {
        self.unary(UnaryKind::Sigmoid, a)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, TensorError> {
        self.unary(UnaryKind::Exp, a)
    }

    pub fn log(&mut self, a: Var) -> Result<Var, TensorError> {
        self.unary(UnaryKind::Log, a)
    }

    pub fn scale(&mut self, a: Var, factor: f32) -> Result<Var, TensorError> {
        let t = self.value(a);
        let out = t.data().iter().map(|&x| x * factor).collect();
        let shape = t.shape().to_vec();
        let rg = self.rg(a);
        Ok(self.push(Tensor::new(shape, out)?, Op::Scale { a, factor }, rg))
    }

    /// Clamps into `[lo, hi]`; the gradient is passed through only strictly
    /// inside the interval.
    pub fn clamp(&mut self, a: Var, lo: f32, hi: f32) -> Result<Var, TensorError> {
        if !(lo <= hi) {
            return Err(TensorError::Parameter(format!("clamp bounds {lo} > {hi}")));
        }
        let t = self.value(a);
        let out = t.data().iter().map(|&x| x.clamp(lo, hi)).collect();
        let shape = t.shape().to_vec();
        let rg = self.rg(a);
        Ok(self.push(Tensor::new(shape, out)?, Op::Clamp { a, lo, hi }, rg))
    }

    /// Numerically stable log-softmax over a 1-D tensor.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var, TensorError> {
        let t = self.value(a);
        if t.shape().len() != 1 {
            return Err(TensorError::Shape(format!("log_softmax expects 1-D input, got {:?}", t.shape())));
        }
        let out = log_softmax_values(t.data());
        let rg = self.rg(a);
        Ok(self.push(Tensor::vector(out), Op::LogSoftmax { a }, rg))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let s: f64 = self.data(a).iter().map(|&x| x as f64).sum();
        let rg = self.rg(a);
        Ok(self.push(Tensor::scalar(s as f32), Op::Sum { a }, rg))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, TensorError> {
        let d = self.data(a);
        let s: f64 = d.iter().map(|&x| x as f64).sum::<f64>() / d.len() as f64;
        let rg = self.rg(a);
        Ok(self.push(Tensor::scalar(s as f32), Op::Mean { a }, rg))
    }

    /// `c x h x w -> c`, averaging each channel plane.
    pub fn global_avg_pool(&mut self, a: Var) -> Result<Var, TensorError> {
        let s = self.shape(a);
        if s.len() != 3 {
            return Err(TensorError::Shape(format!("global_avg_pool expects c x h x w, got {s:?}")));
        }
        let (channels, plane) = (s[0], s[1] * s[2]);
        let out: Vec<f32> = self
            .data(a)
            .chunks(plane)
            .map(|p| (p.iter().map(|&x| x as f64).sum::<f64>() / plane as f64) as f32)
            .collect();
        let rg = self.rg(a);
        Ok(self.push(Tensor::vector(out), Op::GlobalAvgPool { a, channels, plane }, rg))
    }

    /// Non-overlapping `window x window` max pooling; the window must divide
    /// both spatial extents. Ties route to the first index in row-major order.
    pub fn max_pool2d(&mut self, a: Var, window: usize) -> Result<Var, TensorError> {
        let s = self.shape(a);
        if s.len() != 3 {
            return Err(TensorError::Shape(format!("max_pool2d expects c x h x w, got {s:?}")));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        if window == 0 || h % window != 0 || w % window != 0 {
            return Err(TensorError::Shape(format!("pool window {window} does not divide {h}x{w}")));
        }
        let (oh, ow) = (h / window, w / window);
        let d = self.data(a);
        let mut out = Vec::with_capacity(c * oh * ow);
        let mut argmax = Vec::with_capacity(c * oh * ow);
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = ch * h * w + oy * window * w + ox * window;
                    for dy in 0..window {
                        for dx in 0..window {
                            let idx = ch * h * w + (oy * window + dy) * w + ox * window + dx;
                            if d[idx] > d[best] {
                                best = idx;
                            }
                        }
                    }
                    out.push(d[best]);
                    argmax.push(best);
                }
            }
        }
        let rg = self.rg(a);
        Ok(self.push(Tensor::new(vec![c, oh, ow], out)?, Op::MaxPool2d { a, argmax }, rg))
    }

    /// Nearest-neighbour upsampling by an integer factor.
    pub fn upsample_nearest(&mut self, a: Var, factor: usize) -> Result<Var, TensorError> {
        let s = self.shape(a);
        if s.len() != 3 || factor == 0 {
            return Err(TensorError::Shape(format!("upsample of {s:?} by {factor}")));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let (oh, ow) = (h * factor, w * factor);
        let d = self.data(a);
        let mut out = Vec::with_capacity(c * oh * ow);
        for ch in 0..c {
            for y in 0..oh {
                let row = &d[ch * h * w + (y / factor) * w..][..w];
                for x in 0..ow {
                    out.push(row[x / factor]);
                }
            }
        }
        let rg = self.rg(a);
        Ok(self.push(Tensor::new(vec![c, oh, ow], out)?, Op::Upsample { a, channels: c, h, w, factor }, rg))
    }

    /// `(sum |u_i - v_i|^p)^(1/p)` as a single-element tensor.
    pub fn p_norm_distance(&mut self, u: Var, v: Var, p: f64) -> Result<Var, TensorError> {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(TensorError::Parameter(format!("norm degree p={p} must be >= 1")));
        }
        let (du, dv) = (self.data(u), self.data(v));
        if du.len() != dv.len() {
            return Err(TensorError::Shape(format!(
                "distance between lengths {} and {}",
                du.len(),
                dv.len()
            )));
        }
        let dist = p_norm(du.iter().zip(dv).map(|(&a, &b)| a as f64 - b as f64), p);
        let rg = self.rg(u) || self.rg(v);
        Ok(self.push(Tensor::scalar(dist as f32), Op::PNorm { u, v, p, dist }, rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let t = Tensor::new(shape.to_vec(), self.data(a).to_vec())?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::Reshape { a }, rg))
    }

    /// Packs single-element tensors into a 1-D tensor.
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::Shape("stack of zero tensors".into()));
        }
        let mut out = Vec::with_capacity(parts.len());
        for &p in parts {
            let t = self.value(p);
            if t.numel() != 1 {
                return Err(TensorError::Shape(format!("stack expects scalars, got {:?}", t.shape())));
            }
            out.push(t.item());
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Tensor::vector(out), Op::Stack { parts: parts.to_vec() }, rg))
    }

    /// Element `i` of a 1-D tensor.
    pub fn index(&mut self, a: Var, i: usize) -> Result<Var, TensorError> {
        let t = self.value(a);
        if t.shape().len() != 1 || i >= t.numel() {
            return Err(TensorError::Shape(format!("index {i} into {:?}", t.shape())));
        }
        let val = t.data()[i];
        let rg = self.rg(a);
        Ok(self.push(Tensor::scalar(val), Op::Index { a, i }, rg))
    }

    /// Row `i` of a 2-D tensor as a 1-D tensor.
    pub fn row(&mut self, a: Var, i: usize) -> Result<Var, TensorError> {
        let s = self.shape(a);
        if s.len() != 2 || i >= s[0] {
            return Err(TensorError::Shape(format!("row {i} of {s:?}")));
        }
        let cols = s[1];
        let out = self.data(a)[i * cols..(i + 1) * cols].to_vec();
        let rg = self.rg(a);
        Ok(self.push(Tensor::vector(out), Op::Row { a, i, cols }, rg))
    }

    // ----------------------------------------------------------- backward

    /// Accumulates `d root / d node` into every differentiable node's grad.
    /// The root must be a single-element tensor.
    pub fn backward(&mut self, root: Var) -> Result<(), TensorError> {
        if !self.value(root).is_scalar() {
            return Err(TensorError::Contract(format!(
                "backward root must be scalar, got shape {:?}",
                self.value(root).shape()
            )));
        }
        self.backward_with_seed(root, &[1.0])
    }

    /// Vector-Jacobian product: propagates an explicit output gradient
    /// `seed` (same length as `root`) back through the tape.
    pub fn backward_with_seed(&mut self, root: Var, seed: &[f32]) -> Result<(), TensorError> {
        if root.0 >= self.nodes.len() {
            return Err(TensorError::Contract("backward root is not on this tape".into()));
        }
        if seed.len() != self.value(root).numel() {
            return Err(TensorError::Shape(format!(
                "seed of length {} for root of shape {:?}",
                seed.len(),
                self.value(root).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f32>>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(seed.to_vec());
        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            self.propagate(idx, &g, &mut grads);
            self.nodes[idx].value.accumulate_grad(&g)?;
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f32], grads: &mut [Option<Vec<f32>>]) {
        let node = &self.nodes[idx];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, m, k, n } => {
                let (m, k, n) = (*m, *k, *n);
                if self.rg(*a) {
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g, false, self.data(*b), true, &mut da, 0.0);
                    add_into(grads, *a, &da);
                }
                if self.rg(*b) {
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, self.data(*a), true, g, false, &mut db, 0.0);
                    add_into(grads, *b, &db);
                }
            }
            Op::Conv2d { input, kernel, geom } => {
                let pointwise = geom.kh == 1 && geom.kw == 1 && geom.stride == 1 && geom.padding == 0;
                let cols = if pointwise {
                    None
                } else {
                    let mut cols = vec![0.0; geom.patch_len() * geom.out_len()];
                    im2col(self.data(*input), geom, &mut cols);
                    Some(cols)
                };
                if self.rg(*kernel) {
                    let mut dk = vec![0.0; geom.c_out * geom.patch_len()];
                    let rhs = cols.as_deref().unwrap_or_else(|| self.data(*input));
                    gemm(geom.c_out, geom.out_len(), geom.patch_len(), g, false, rhs, true, &mut dk, 0.0);
                    add_into(grads, *kernel, &dk);
                }
                if self.rg(*input) {
                    let mut dcols = vec![0.0; geom.patch_len() * geom.out_len()];
                    gemm(geom.patch_len(), geom.c_out, geom.out_len(), self.data(*kernel), true, g, false, &mut dcols, 0.0);
                    if pointwise {
                        add_into(grads, *input, &dcols);
                    } else {
                        let mut dx = vec![0.0; geom.c_in * geom.h * geom.w];
                        col2im(&dcols, geom, &mut dx);
                        add_into(grads, *input, &dx);
                    }
                }
            }
            Op::Binary { kind, a, b } => {
                let (da, db) = (self.data(*a), self.data(*b));
                let at = |i: usize| if da.len() == 1 { da[0] } else { da[i] };
                let bt = |i: usize| if db.len() == 1 { db[0] } else { db[i] };
                if self.rg(*a) {
                    let local: Vec<f32> = match kind {
                        BinaryKind::Add | BinaryKind::Sub => g.to_vec(),
                        BinaryKind::Mul => g.iter().enumerate().map(|(i, gi)| gi * bt(i)).collect(),
                    };
                    add_into(grads, *a, &reduce_broadcast(local, da.len()));
                }
                if self.rg(*b) {
                    let local: Vec<f32> = match kind {
                        BinaryKind::Add => g.to_vec(),
                        BinaryKind::Sub => g.iter().map(|v| -v).collect(),
                        BinaryKind::Mul => g.iter().enumerate().map(|(i, gi)| gi * at(i)).collect(),
                    };
                    add_into(grads, *b, &reduce_broadcast(local, db.len()));
                }
            }
            Op::Unary { kind, a } => {
                let x = self.data(*a);
                let local: Vec<f32> = match kind {
                    UnaryKind::Relu => {
                        g.iter().zip(x).map(|(gi, &xi)| if xi > 0.0 { *gi } else { 0.0 }).collect()
                    }
                    UnaryKind::Sigmoid => g.iter().zip(out).map(|(gi, &s)| gi * s * (1.0 - s)).collect(),
                    UnaryKind::Exp => g.iter().zip(out).map(|(gi, &e)| gi * e).collect(),
                    UnaryKind::Log => g.iter().zip(x).map(|(gi, &xi)| gi / xi).collect(),
                };
                add_into(grads, *a, &local);
            }
            Op::Scale { a, factor } => {
                let local: Vec<f32> = g.iter().map(|v| v * factor).collect();
                add_into(grads, *a, &local);
            }
            Op::Clamp { a, lo, hi } => {
                let x = self.data(*a);
                let local: Vec<f32> = g
                    .iter()
                    .zip(x)
                    .map(|(gi, &xi)| if xi > *lo && xi < *hi { *gi } else { 0.0 })
                    .collect();
                add_into(grads, *a, &local);
            }
            Op::LogSoftmax { a } => {
                let gsum: f64 = g.iter().map(|&v| v as f64).sum();
                let local: Vec<f32> = g
                    .iter()
                    .zip(out)
                    .map(|(&gi, &o)| (gi as f64 - (o as f64).exp() * gsum) as f32)
                    .collect();
                add_into(grads, *a, &local);
            }
            Op::Sum { a } => {
                let n = self.value(*a).numel();
                add_into(grads, *a, &vec![g[0]; n]);
            }
            Op::Mean { a } => {
                let n = self.value(*a).numel();
                add_into(grads, *a, &vec![(g[0] as f64 / n as f64) as f32; n]);
            }
            Op::GlobalAvgPool { a, channels, plane } => {
                let mut local = Vec::with_capacity(channels * plane);
                for gc in g.iter().take(*channels) {
                    let v = (*gc as f64 / *plane as f64) as f32;
                    local.extend(std::iter::repeat_n(v, *plane));
                }
                add_into(grads, *a, &local);
            }
            Op::MaxPool2d { a, argmax } => {
                let mut local = vec![0.0; self.value(*a).numel()];
                for (gi, &src) in g.iter().zip(argmax) {
                    local[src] += gi;
                }
                add_into(grads, *a, &local);
            }
            Op::Upsample { a, channels, h, w, factor } => {
                let (oh, ow) = (h * factor, w * factor);
                let mut local = vec![0.0; channels * h * w];
                for ch in 0..*channels {
                    for y in 0..oh {
                        for x in 0..ow {
                            local[ch * h * w + (y / factor) * w + x / factor] += g[ch * oh * ow + y * ow + x];
                        }
                    }
                }
                add_into(grads, *a, &local);
            }
            Op::PNorm { u, v, p, dist } => {
                let (du, dv) = (self.data(*u), self.data(*v));
                let dir = p_norm_gradient(du, dv, *p, *dist);
                if self.rg(*u) {
                    let local: Vec<f32> = dir.iter().map(|d| (d * g[0] as f64) as f32).collect();
                    add_into(grads, *u, &local);
                }
                if self.rg(*v) {
                    let local: Vec<f32> = dir.iter().map(|d| (-d * g[0] as f64) as f32).collect();
                    add_into(grads, *v, &local);
                }
            }
            Op::Reshape { a } => add_into(grads, *a, g),
            Op::Stack { parts } => {
                for (p, gi) in parts.iter().zip(g) {
                    if self.rg(*p) {
                        add_into(grads, *p, &[*gi]);
                    }
                }
            }
            Op::Index { a, i } => {
                let mut local = vec![0.0; self.value(*a).numel()];
                local[*i] = g[0];
                add_into(grads, *a, &local);
            }
            Op::Row { a, i, cols } => {
                let mut local = vec![0.0; self.value(*a).numel()];
                local[i * cols..(i + 1) * cols].copy_from_slice(g);
                add_into(grads, *a, &local);
            }
        }
    }
}

fn add_into(grads: &mut [Option<Vec<f32>>], v: Var, g: &[f32]) {
    match &mut grads[v.0] {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(g.to_vec()),
    }
}

fn reduce_broadcast(local: Vec<f32>, target_len: usize) -> Vec<f32> {
    if target_len == 1 && local.len() != 1 {
        vec![local.iter().map(|&v| v as f64).sum::<f64>() as f32]
    } else {
        local
    }
}

pub(crate) fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log-softmax with max subtraction and `f64` log-sum-exp.
pub fn log_softmax_values(x: &[f32]) -> Vec<f32> {
    let max = x.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    let lse = max + x.iter().map(|&v| (v as f64 - max).exp()).sum::<f64>().ln();
    x.iter().map(|&v| (v as f64 - lse) as f32).collect()
}

pub(crate) fn p_norm(diffs: impl Iterator<Item = f64>, p: f64) -> f64 {
    if p == 1.0 {
        diffs.map(f64::abs).sum()
    } else if p == 2.0 {
        diffs.map(|d| d * d).sum::<f64>().sqrt()
    } else {
        diffs.map(|d| d.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// `d dist / d u`; the gradient with respect to `v` is its negation.
/// Zero at `u == v`.
pub(crate) fn p_norm_gradient(u: &[f32], v: &[f32], p: f64, dist: f64) -> Vec<f64> {
    if dist == 0.0 {
        return vec![0.0; u.len()];
    }
    u.iter()
        .zip(v)
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            if d == 0.0 {
                0.0
            } else if p == 1.0 {
                d.signum()
            } else {
                d.signum() * (d.abs() / dist).powf(p - 1.0)
            }
        })
        .collect()
}
