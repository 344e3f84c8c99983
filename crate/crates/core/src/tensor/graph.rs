//! Operation-recording graph and reverse-mode backward pass.
//!
//! Nodes live in a flat arena; a [`TensorRef`] is an index into it. Ops only
//! reference earlier nodes, so arena order is a topological order and
//! `backward` is a single reverse sweep. Parameters are persistent leaves
//! created before any transient node; [`Graph::reset`] drops everything else
//! so one arena serves a whole training run.

use rand::Rng;

use super::Tensor;

/// Handle to a node in a [`Graph`]. Only valid for the graph that created it
/// and, for transient nodes, only until the next `reset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorRef(pub(crate) usize);

/// Recorded operation. Saved indices/data are what backward needs.
#[derive(Debug, Clone)]
pub enum Op {
    Leaf,
    MatMul(TensorRef, TensorRef),
    Add(TensorRef, TensorRef),
    Mul(TensorRef, TensorRef),
    Div(TensorRef, TensorRef),
    Neg(TensorRef),
    Tanh(TensorRef),
    Sigmoid(TensorRef),
    Log(TensorRef),
    Sqrt(TensorRef),
    Softmax { x: TensorRef, axis: usize },
    Concat { xs: Vec<TensorRef>, axis: usize },
    GatherRows { x: TensorRef, ids: Vec<usize> },
    Pick { x: TensorRef, row: usize, col: usize },
    ScatterAddCols { x: TensorRef, ids: Vec<usize> },
    SliceCols { x: TensorRef, start: usize },
    Transpose(TensorRef),
    Dropout { x: TensorRef, mask: Vec<f64> },
    Sum(TensorRef),
}

struct Node {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    /// Allocated eagerly for persistent parameters, lazily during backward
    /// for transient nodes. Accumulates until `zero_grads`.
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Op,
}

impl Node {
    fn numel(&self) -> usize {
        self.rows * self.cols
    }
}

/// Arena of executed operations. All graph tensors are 2-D matrices; row
/// vectors are `1 x n` and scalars `1 x 1`.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    n_persistent: usize,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    /// Persistent trainable leaf. Must be created before any transient node
    /// (i.e. on a fresh or just-reset graph).
    pub fn param(&mut self, t: Tensor) -> TensorRef {
        self.persistent_leaf(t, true)
    }

    /// Persistent non-trainable leaf (frozen embedding tables).
    pub fn frozen_param(&mut self, t: Tensor) -> TensorRef {
        self.persistent_leaf(t, false)
    }

    fn persistent_leaf(&mut self, t: Tensor, requires_grad: bool) -> TensorRef {
        assert_eq!(
            self.nodes.len(),
            self.n_persistent,
            "parameters must be created before transient nodes"
        );
        let (rows, cols) = as_matrix(&t.shape);
        let numel = rows * cols;
        self.nodes.push(Node {
            rows,
            cols,
            values: t.values,
            grad: if requires_grad { Some(vec![0.0; numel]) } else { None },
            requires_grad,
            op: Op::Leaf,
        });
        self.n_persistent += 1;
        TensorRef(self.nodes.len() - 1)
    }

    /// Transient constant leaf (inputs, feature columns, masks).
    pub fn constant(&mut self, t: Tensor) -> TensorRef {
        self.leaf(t, false)
    }

    /// Transient leaf; `requires_grad` is used by the gradient checker.
    pub fn leaf(&mut self, t: Tensor, requires_grad: bool) -> TensorRef {
        let (rows, cols) = as_matrix(&t.shape);
        self.push(rows, cols, t.values, requires_grad, Op::Leaf)
    }

    /// Drops all transient nodes. Persistent parameters (values and grads)
    /// survive. Any `TensorRef` to a transient node is invalidated.
    pub fn reset(&mut self) {
        self.nodes.truncate(self.n_persistent);
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    // ── accessors ──────────────────────────────────────────────────────

    pub fn shape(&self, t: TensorRef) -> (usize, usize) {
        let n = &self.nodes[t.0];
        (n.rows, n.cols)
    }

    pub fn values(&self, t: TensorRef) -> &[f64] {
        &self.nodes[t.0].values
    }

    pub fn grad(&self, t: TensorRef) -> Option<&[f64]> {
        self.nodes[t.0].grad.as_deref()
    }

    /// Overwrites an allocated gradient buffer (used by gradient clipping).
    pub fn set_grad(&mut self, t: TensorRef, grad: &[f64]) {
        let n = &mut self.nodes[t.0];
        let g = n.grad.as_mut().expect("set_grad on node without gradient");
        assert_eq!(g.len(), grad.len(), "gradient length mismatch");
        g.copy_from_slice(grad);
    }

    /// Overwrites a leaf's values in place (parameter loading, finite
    /// differences). Shape must match.
    pub fn set_values(&mut self, t: TensorRef, values: &[f64]) {
        let n = &mut self.nodes[t.0];
        assert!(matches!(n.op, Op::Leaf), "set_values only applies to leaves");
        assert_eq!(n.numel(), values.len(), "value count mismatch");
        n.values.copy_from_slice(values);
    }

    pub fn to_tensor(&self, t: TensorRef) -> Tensor {
        let n = &self.nodes[t.0];
        Tensor::new(vec![n.rows, n.cols], n.values.clone())
    }

    pub fn scalar_value(&self, t: TensorRef) -> f64 {
        let n = &self.nodes[t.0];
        assert_eq!((n.rows, n.cols), (1, 1), "expected scalar, got {}x{}", n.rows, n.cols);
        n.values[0]
    }

    /// Panics if the node holds a NaN or Inf.
    pub fn assert_finite(&self, t: TensorRef, context: &str) {
        let n = &self.nodes[t.0];
        if let Some(i) = n.values.iter().position(|v| !v.is_finite()) {
            panic!("non-finite value at flat index {i} in {context}");
        }
    }

    fn push(&mut self, rows: usize, cols: usize, values: Vec<f64>, requires_grad: bool, op: Op) -> TensorRef {
        debug_assert_eq!(values.len(), rows * cols);
        self.nodes.push(Node { rows, cols, values, grad: None, requires_grad, op });
        TensorRef(self.nodes.len() - 1)
    }

    fn rg(&self, t: TensorRef) -> bool {
        self.nodes[t.0].requires_grad
    }

    // ── forward ops ────────────────────────────────────────────────────

    /// Standard matrix product `a[m,k] * b[k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: TensorRef, b: TensorRef) -> TensorRef {
        let (m, ka) = self.shape(a);
        let (kb, n) = self.shape(b);
        assert_eq!(
            ka, kb,
            "matmul dimension mismatch: {}x{} vs {}x{}",
            m, ka, kb, n
        );
        let out = matmul_raw(self.values(a), self.values(b), m, ka, n);
        let rg = self.rg(a) || self.rg(b);
        self.push(m, n, out, rg, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: TensorRef, b: TensorRef) -> TensorRef {
        self.binary_elementwise(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: TensorRef, b: TensorRef) -> TensorRef {
        self.binary_elementwise(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: TensorRef, b: TensorRef) -> TensorRef {
        self.binary_elementwise(a, b, |x, y| x / y, Op::Div(a, b))
    }

    /// `a - b`, sugar over add/neg.
    pub fn sub(&mut self, a: TensorRef, b: TensorRef) -> TensorRef {
        let nb = self.neg(b);
        self.add(a, nb)
    }

    /// Elementwise with the only two supported broadcasts: same shape, or
    /// scalar (1x1) against anything on either side.
    fn binary_elementwise(
        &mut self,
        a: TensorRef,
        b: TensorRef,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> TensorRef {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        let a_scalar = ar * ac == 1;
        let b_scalar = br * bc == 1;
        assert!(
            (ar, ac) == (br, bc) || a_scalar || b_scalar,
            "elementwise shape mismatch: {}x{} vs {}x{} (only same-shape or scalar broadcast)",
            ar, ac, br, bc
        );
        let (rows, cols) = if a_scalar { (br, bc) } else { (ar, ac) };
        let numel = rows * cols;
        let av = &self.nodes[a.0].values;
        let bv = &self.nodes[b.0].values;
        let mut out = Vec::with_capacity(numel);
        for i in 0..numel {
            let x = if a_scalar { av[0] } else { av[i] };
            let y = if b_scalar { bv[0] } else { bv[i] };
            out.push(f(x, y));
        }
        let rg = self.rg(a) || self.rg(b);
        self.push(rows, cols, out, rg, op)
    }

    pub fn neg(&mut self, x: TensorRef) -> TensorRef {
        self.unary(x, |v| -v, Op::Neg(x))
    }

    pub fn tanh(&mut self, x: TensorRef) -> TensorRef {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: TensorRef) -> TensorRef {
        self.unary(x, |v| 1.0 / (1.0 + (-v).exp()), Op::Sigmoid(x))
    }

    /// Natural log. Panics on non-positive finite input (domain error);
    /// NaN propagates.
    pub fn log(&mut self, x: TensorRef) -> TensorRef {
        for (i, &v) in self.nodes[x.0].values.iter().enumerate() {
            if v <= 0.0 {
                panic!("log domain error: non-positive value {v} at flat index {i}");
            }
        }
        self.unary(x, f64::ln, Op::Log(x))
    }

    pub fn sqrt(&mut self, x: TensorRef) -> TensorRef {
        self.unary(x, f64::sqrt, Op::Sqrt(x))
    }

    fn unary(&mut self, x: TensorRef, f: impl Fn(f64) -> f64, op: Op) -> TensorRef {
        let (rows, cols) = self.shape(x);
        let out: Vec<f64> = self.nodes[x.0].values.iter().map(|&v| f(v)).collect();
        let rg = self.rg(x);
        self.push(rows, cols, out, rg, op)
    }

    /// Numerically stable softmax along `axis` (0 = down columns, 1 = along
    /// rows). Implemented with max-subtraction.
    pub fn softmax(&mut self, x: TensorRef, axis: usize) -> TensorRef {
        assert!(axis < 2, "softmax axis must be 0 or 1");
        let (rows, cols) = self.shape(x);
        let xv = &self.nodes[x.0].values;
        let mut out = vec![0.0; rows * cols];
        let (n_slices, slice_len) = if axis == 1 { (rows, cols) } else { (cols, rows) };
        for s in 0..n_slices {
            let idx = |j: usize| if axis == 1 { s * cols + j } else { j * cols + s };
            let mut max = f64::NEG_INFINITY;
            for j in 0..slice_len {
                max = max.max(xv[idx(j)]);
            }
            let mut sum = 0.0;
            for j in 0..slice_len {
                let e = (xv[idx(j)] - max).exp();
                out[idx(j)] = e;
                sum += e;
            }
            for j in 0..slice_len {
                out[idx(j)] /= sum;
            }
        }
        let rg = self.rg(x);
        self.push(rows, cols, out, rg, Op::Softmax { x, axis })
    }

    /// Concatenation along `axis`. All non-axis dimensions must agree.
    pub fn concat(&mut self, xs: &[TensorRef], axis: usize) -> TensorRef {
        assert!(!xs.is_empty(), "concat of zero tensors");
        assert!(axis < 2, "concat axis must be 0 or 1");
        let (r0, c0) = self.shape(xs[0]);
        let (mut rows, mut cols) = (r0, c0);
        for &x in &xs[1..] {
            let (r, c) = self.shape(x);
            if axis == 0 {
                assert_eq!(
                    c, c0,
                    "concat axis 0 column mismatch: {}x{} vs {}x{}",
                    r0, c0, r, c
                );
                rows += r;
            } else {
                assert_eq!(
                    r, r0,
                    "concat axis 1 row mismatch: {}x{} vs {}x{}",
                    r0, c0, r, c
                );
                cols += c;
            }
        }
        let mut out = vec![0.0; rows * cols];
        if axis == 0 {
            let mut row_off = 0;
            for &x in xs {
                let (r, _) = self.shape(x);
                let src = &self.nodes[x.0].values;
                out[row_off * cols..(row_off + r) * cols].copy_from_slice(src);
                row_off += r;
            }
        } else {
            let mut col_off = 0;
            for &x in xs {
                let (r, c) = self.shape(x);
                let src = &self.nodes[x.0].values;
                for i in 0..r {
                    out[i * cols + col_off..i * cols + col_off + c]
                        .copy_from_slice(&src[i * c..(i + 1) * c]);
                }
                col_off += c;
            }
        }
        let rg = xs.iter().any(|&x| self.rg(x));
        self.push(rows, cols, out, rg, Op::Concat { xs: xs.to_vec(), axis })
    }

    /// Row gather: `table[V,d]` and ids -> `[len(ids), d]`. Backward
    /// scatter-adds into the table grad, so a repeated id accumulates twice.
    pub fn gather_rows(&mut self, x: TensorRef, ids: &[usize]) -> TensorRef {
        assert!(!ids.is_empty(), "gather of zero rows");
        let (v, d) = self.shape(x);
        for &id in ids {
            assert!(id < v, "gather index error: id {id} out of range for {v} rows");
        }
        let xv = &self.nodes[x.0].values;
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            out.extend_from_slice(&xv[id * d..(id + 1) * d]);
        }
        let rg = self.rg(x);
        self.push(ids.len(), d, out, rg, Op::GatherRows { x, ids: ids.to_vec() })
    }

    /// Single element as a 1x1 scalar.
    pub fn pick(&mut self, x: TensorRef, row: usize, col: usize) -> TensorRef {
        let (r, c) = self.shape(x);
        assert!(row < r && col < c, "pick index error: ({row},{col}) out of {r}x{c}");
        let v = self.nodes[x.0].values[row * c + col];
        let rg = self.rg(x);
        self.push(1, 1, vec![v], rg, Op::Pick { x, row, col })
    }

    /// Copy-attention scatter: `x` is `1 x T`, `ids[i]` names the output
    /// column receiving `x[i]`; duplicate ids accumulate. Output is
    /// `1 x width`.
    pub fn scatter_add_cols(&mut self, x: TensorRef, ids: &[usize], width: usize) -> TensorRef {
        let (r, t) = self.shape(x);
        assert_eq!(r, 1, "scatter_add_cols expects a 1xT input, got {r}x{t}");
        assert_eq!(ids.len(), t, "scatter id count {} != input width {}", ids.len(), t);
        for &id in ids {
            assert!(id < width, "scatter index error: id {id} out of range for width {width}");
        }
        let mut out = vec![0.0; width];
        for (i, &id) in ids.iter().enumerate() {
            out[id] += self.nodes[x.0].values[i];
        }
        let rg = self.rg(x);
        self.push(1, width, out, rg, Op::ScatterAddCols { x, ids: ids.to_vec() })
    }

    /// Columns `[start, end)` of a matrix.
    pub fn slice_cols(&mut self, x: TensorRef, start: usize, end: usize) -> TensorRef {
        let (r, c) = self.shape(x);
        assert!(start < end && end <= c, "slice [{start},{end}) out of {r}x{c}");
        let w = end - start;
        let xv = &self.nodes[x.0].values;
        let mut out = Vec::with_capacity(r * w);
        for i in 0..r {
            out.extend_from_slice(&xv[i * c + start..i * c + end]);
        }
        let rg = self.rg(x);
        self.push(r, w, out, rg, Op::SliceCols { x, start })
    }

    pub fn transpose(&mut self, x: TensorRef) -> TensorRef {
        let (r, c) = self.shape(x);
        let xv = &self.nodes[x.0].values;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = xv[i * c + j];
            }
        }
        let rg = self.rg(x);
        self.push(c, r, out, rg, Op::Transpose(x))
    }

    /// Inverted dropout: in training mode each element is zeroed with
    /// probability `rate` and survivors scale by `1/(1-rate)`; in eval mode
    /// (or rate 0) this is the identity and records nothing.
    pub fn dropout<R: Rng>(&mut self, x: TensorRef, rate: f64, training: bool, rng: &mut R) -> TensorRef {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0,1), got {rate}");
        if !training || rate == 0.0 {
            return x;
        }
        let (rows, cols) = self.shape(x);
        let keep = 1.0 - rate;
        let scale = 1.0 / keep;
        let mask: Vec<f64> = (0..rows * cols)
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { scale })
            .collect();
        let out: Vec<f64> = self.nodes[x.0]
            .values
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| v * m)
            .collect();
        let rg = self.rg(x);
        self.push(rows, cols, out, rg, Op::Dropout { x, mask })
    }

    /// Sum of all elements as a 1x1 scalar.
    pub fn sum(&mut self, x: TensorRef) -> TensorRef {
        let s: f64 = self.nodes[x.0].values.iter().sum();
        let rg = self.rg(x);
        self.push(1, 1, vec![s], rg, Op::Sum(x))
    }

    /// Transient scalar constant.
    pub fn scalar(&mut self, v: f64) -> TensorRef {
        self.constant(Tensor::scalar(v))
    }

    // ── backward ───────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Visits nodes in reverse arena
    /// (topological) order exactly once; populates `grad` on every
    /// requires-grad node reachable from the loss, accumulating into
    /// existing gradients. The sweep itself runs on local buffers, so a
    /// second `backward` on the same loss adds exactly one more copy.
    pub fn backward(&mut self, loss: TensorRef) {
        {
            let n = &self.nodes[loss.0];
            assert_eq!(
                (n.rows, n.cols),
                (1, 1),
                "backward contract error: loss must be scalar, got {}x{}",
                n.rows,
                n.cols
            );
            assert!(
                n.requires_grad,
                "backward contract error: loss does not depend on any trainable tensor"
            );
        }
        let mut local: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        local[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad || local[i].is_none() {
                continue;
            }
            let g = local[i].take().expect("grad present");
            let op = self.nodes[i].op.clone();
            self.backprop_node(i, &g, &op, &mut local);
            // fold this node's sweep result into its stored gradient
            let n = &mut self.nodes[i];
            let numel = n.numel();
            let stored = n.grad.get_or_insert_with(|| vec![0.0; numel]);
            for (s, v) in stored.iter_mut().zip(&g) {
                *s += v;
            }
        }
    }

    /// Zeroes every allocated gradient buffer (persistent and transient).
    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            if let Some(g) = n.grad.as_mut() {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    fn accumulate(&self, local: &mut [Option<Vec<f64>>], t: TensorRef, delta: &[f64]) {
        let n = &self.nodes[t.0];
        if !n.requires_grad {
            return;
        }
        let numel = n.numel();
        let g = local[t.0].get_or_insert_with(|| vec![0.0; numel]);
        for (gi, di) in g.iter_mut().zip(delta) {
            *gi += di;
        }
    }

    fn backprop_node(&self, i: usize, g: &[f64], op: &Op, local: &mut [Option<Vec<f64>>]) {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.shape(*a);
                let (_, n) = self.shape(*b);
                // grad_a = g . b^T ; grad_b = a^T . g
                let bv = self.nodes[b.0].values.clone();
                let av = self.nodes[a.0].values.clone();
                if self.rg(*a) {
                    let mut ga = vec![0.0; m * k];
                    for r in 0..m {
                        for p in 0..n {
                            let gv = g[r * n + p];
                            if gv == 0.0 {
                                continue;
                            }
                            for c in 0..k {
                                ga[r * k + c] += gv * bv[c * n + p];
                            }
                        }
                    }
                    self.accumulate(local, *a, &ga);
                }
                if self.rg(*b) {
                    let mut gb = vec![0.0; k * n];
                    for r in 0..m {
                        for c in 0..k {
                            let avv = av[r * k + c];
                            if avv == 0.0 {
                                continue;
                            }
                            for p in 0..n {
                                gb[c * n + p] += avv * g[r * n + p];
                            }
                        }
                    }
                    self.accumulate(local, *b, &gb);
                }
            }
            Op::Add(a, b) => {
                self.accumulate_broadcast(local, *a, g);
                self.accumulate_broadcast(local, *b, g);
            }
            Op::Mul(a, b) => {
                let ga = self.broadcast_scaled(*b, g, self.nodes[i].numel());
                let gb = self.broadcast_scaled(*a, g, self.nodes[i].numel());
                self.accumulate_broadcast_vec(local, *a, ga);
                self.accumulate_broadcast_vec(local, *b, gb);
            }
            Op::Div(a, b) => {
                // d(a/b)/da = 1/b ; d(a/b)/db = -a/b^2
                let numel = self.nodes[i].numel();
                let bv = &self.nodes[b.0].values;
                let av = &self.nodes[a.0].values;
                let b_scalar = bv.len() == 1;
                let a_scalar = av.len() == 1;
                let mut ga = vec![0.0; numel];
                let mut gb = vec![0.0; numel];
                for j in 0..numel {
                    let bj = if b_scalar { bv[0] } else { bv[j] };
                    let aj = if a_scalar { av[0] } else { av[j] };
                    ga[j] = g[j] / bj;
                    gb[j] = -g[j] * aj / (bj * bj);
                }
                self.accumulate_broadcast_vec(local, *a, ga);
                self.accumulate_broadcast_vec(local, *b, gb);
            }
            Op::Neg(x) => {
                let gx: Vec<f64> = g.iter().map(|&v| -v).collect();
                self.accumulate(local, *x, &gx);
            }
            Op::Tanh(x) => {
                let y = &self.nodes[i].values;
                let gx: Vec<f64> = g.iter().zip(y).map(|(&gv, &yv)| gv * (1.0 - yv * yv)).collect();
                self.accumulate(local, *x, &gx);
            }
            Op::Sigmoid(x) => {
                let y = &self.nodes[i].values;
                let gx: Vec<f64> = g.iter().zip(y).map(|(&gv, &yv)| gv * yv * (1.0 - yv)).collect();
                self.accumulate(local, *x, &gx);
            }
            Op::Log(x) => {
                let xv = &self.nodes[x.0].values;
                let gx: Vec<f64> = g.iter().zip(xv).map(|(&gv, &xvv)| gv / xvv).collect();
                self.accumulate(local, *x, &gx);
            }
            Op::Sqrt(x) => {
                let y = &self.nodes[i].values;
                let gx: Vec<f64> = g.iter().zip(y).map(|(&gv, &yv)| gv / (2.0 * yv)).collect();
                self.accumulate(local, *x, &gx);
            }
            Op::Softmax { x, axis } => {
                let (rows, cols) = self.shape(*x);
                let y = self.nodes[i].values.clone();
                let mut gx = vec![0.0; rows * cols];
                let (n_slices, slice_len) = if *axis == 1 { (rows, cols) } else { (cols, rows) };
                for s in 0..n_slices {
                    let idx = |j: usize| if *axis == 1 { s * cols + j } else { j * cols + s };
                    let mut dot = 0.0;
                    for j in 0..slice_len {
                        dot += g[idx(j)] * y[idx(j)];
                    }
                    for j in 0..slice_len {
                        gx[idx(j)] = y[idx(j)] * (g[idx(j)] - dot);
                    }
                }
                self.accumulate(local, *x, &gx);
            }
            Op::Concat { xs, axis } => {
                let cols = self.nodes[i].cols;
                if *axis == 0 {
                    let mut row_off = 0;
                    for &x in xs {
                        let (r, _) = self.shape(x);
                        let gx = g[row_off * cols..(row_off + r) * cols].to_vec();
                        self.accumulate(local, x, &gx);
                        row_off += r;
                    }
                } else {
                    let rows = self.nodes[i].rows;
                    let mut col_off = 0;
                    for &x in xs {
                        let (_, c) = self.shape(x);
                        let mut gx = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            gx.extend_from_slice(&g[r * cols + col_off..r * cols + col_off + c]);
                        }
                        self.accumulate(local, x, &gx);
                        col_off += c;
                    }
                }
            }
            Op::GatherRows { x, ids } => {
                let (v, d) = self.shape(*x);
                let mut gx = vec![0.0; v * d];
                for (row, &id) in ids.iter().enumerate() {
                    for j in 0..d {
                        gx[id * d + j] += g[row * d + j];
                    }
                }
                self.accumulate(local, *x, &gx);
            }
            Op::Pick { x, row, col } => {
                let (_, c) = self.shape(*x);
                let numel = self.nodes[x.0].numel();
                let mut gx = vec![0.0; numel];
                gx[row * c + col] = g[0];
                self.accumulate(local, *x, &gx);
            }
            Op::ScatterAddCols { x, ids } => {
                let gx: Vec<f64> = ids.iter().map(|&id| g[id]).collect();
                self.accumulate(local, *x, &gx);
            }
            Op::SliceCols { x, start } => {
                let (r, c) = self.shape(*x);
                let w = self.nodes[i].cols;
                let mut gx = vec![0.0; r * c];
                for row in 0..r {
                    for j in 0..w {
                        gx[row * c + start + j] = g[row * w + j];
                    }
                }
                self.accumulate(local, *x, &gx);
            }
            Op::Transpose(x) => {
                let (r, c) = self.shape(*x);
                let mut gx = vec![0.0; r * c];
                for i2 in 0..c {
                    for j in 0..r {
                        gx[j * c + i2] = g[i2 * r + j];
                    }
                }
                self.accumulate(local, *x, &gx);
            }
            Op::Dropout { x, mask } => {
                let gx: Vec<f64> = g.iter().zip(mask).map(|(&gv, &m)| gv * m).collect();
                self.accumulate(local, *x, &gx);
            }
            Op::Sum(x) => {
                let numel = self.nodes[x.0].numel();
                let gx = vec![g[0]; numel];
                self.accumulate(local, *x, &gx);
            }
        }
    }

    /// Accumulates `g` into `t`, summing when `t` is a broadcast scalar.
    fn accumulate_broadcast(&self, local: &mut [Option<Vec<f64>>], t: TensorRef, g: &[f64]) {
        if self.nodes[t.0].numel() == 1 && g.len() > 1 {
            let s: f64 = g.iter().sum();
            self.accumulate(local, t, &[s]);
        } else {
            self.accumulate(local, t, g);
        }
    }

    fn accumulate_broadcast_vec(&self, local: &mut [Option<Vec<f64>>], t: TensorRef, g: Vec<f64>) {
        self.accumulate_broadcast(local, t, &g);
    }

    /// g scaled elementwise by `other`'s (possibly scalar-broadcast) values.
    fn broadcast_scaled(&self, other: TensorRef, g: &[f64], numel: usize) -> Vec<f64> {
        let ov = &self.nodes[other.0].values;
        let scalar = ov.len() == 1;
        (0..numel)
            .map(|j| g[j] * if scalar { ov[0] } else { ov[j] })
            .collect()
    }
}

fn as_matrix(shape: &[usize]) -> (usize, usize) {
    match shape.len() {
        1 => (1, shape[0]),
        2 => (shape[0], shape[1]),
        _ => panic!("graph tensors must be 1-D or 2-D, got shape {shape:?}"),
    }
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}
