//! Reverse-mode tape over dense matrix values.
//!
//! Every node holds a full matrix. Elementwise binary operations broadcast a
//! `1x1` operand against anything and a `1xC` row against an `RxC` matrix.
//! The tape is append-only; nodes are recorded in topological order, so the
//! reverse sweep is a single backwards pass over the node list.

use std::cell::{Cell, Ref, RefCell};
use std::ops;
use std::rc::Rc;

use super::mat::{gemm, Mat, View};
use super::AdError;

/// Scalar functions applied elementwise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Unary {
    Exp,
    Ln,
    Tanh,
    /// `1 - tanh(x)^2`
    TanhPrime,
    Sigmoid,
    /// `x * sigmoid(x)`
    Swish,
    /// Derivative of swish.
    SwishPrime,
    Powf(f64),
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Unary {
    /// Value and first derivative at `x`.
    pub fn eval(self, x: f64) -> (f64, f64) {
        match self {
            Unary::Exp => {
                let e = x.exp();
                (e, e)
            }
            Unary::Ln => (x.ln(), 1.0 / x),
            Unary::Tanh => {
                let t = x.tanh();
                (t, 1.0 - t * t)
            }
            Unary::TanhPrime => {
                let t = x.tanh();
                let s = 1.0 - t * t;
                (s, -2.0 * t * s)
            }
            Unary::Sigmoid => {
                let s = sigmoid(x);
                (s, s * (1.0 - s))
            }
            Unary::Swish => {
                let s = sigmoid(x);
                (x * s, s + x * s * (1.0 - s))
            }
            Unary::SwishPrime => {
                let s = sigmoid(x);
                let ds = s * (1.0 - s);
                (s + x * ds, ds * (2.0 + x * (1.0 - 2.0 * s)))
            }
            Unary::Powf(p) => (x.powf(p), p * x.powf(p - 1.0)),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Unary::Exp => "exp",
            Unary::Ln => "ln",
            Unary::Tanh => "tanh",
            Unary::TanhPrime => "tanh'",
            Unary::Sigmoid => "sigmoid",
            Unary::Swish => "swish",
            Unary::SwishPrime => "swish'",
            Unary::Powf(_) => "powf",
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Scale(usize, f64),
    Unary(usize, Unary),
    MatMul { a: usize, b: usize, ta: bool, tb: bool },
    KhatriRao(usize, usize),
    RowSlice { arg: usize, start: usize, len: usize },
    ColSlice { arg: usize, start: usize, len: usize },
    Reshape { arg: usize, rows: usize, cols: usize },
    RowScale { arg: usize, weights: Rc<[f64]> },
    Sum(usize),
    Prod(usize),
    TripleDot(usize, usize, usize),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Scale(..) => "scale",
            Op::Unary(_, u) => u.name(),
            Op::MatMul { .. } => "matmul",
            Op::KhatriRao(..) => "khatri_rao",
            Op::RowSlice { .. } => "row_slice",
            Op::ColSlice { .. } => "col_slice",
            Op::Reshape { .. } => "reshape",
            Op::RowScale { .. } => "row_scale",
            Op::Sum(_) => "sum",
            Op::Prod(_) => "prod",
            Op::TripleDot(..) => "triple_dot",
        }
    }
}

struct Node {
    value: Mat,
    op: Op,
    /// Local elementwise derivative, kept for unary nodes only.
    local: Vec<f64>,
}

/// Append-only record of matrix operations.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    first_nonfinite: Cell<Option<(usize, &'static str)>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: usize,
}

fn broadcast_shape(a: (usize, usize), b: (usize, usize)) -> (usize, usize) {
    if a == b || b == (1, 1) {
        a
    } else if a == (1, 1) {
        b
    } else if a.0 == 1 && a.1 == b.1 {
        b
    } else if b.0 == 1 && b.1 == a.1 {
        a
    } else {
        panic!("cannot broadcast {a:?} against {b:?}")
    }
}

/// Flat index into an operand of shape `s` for output position `(r, c)`.
#[inline]
fn bindex(s: (usize, usize), r: usize, c: usize) -> usize {
    match s {
        (1, 1) => 0,
        (1, _) => c,
        (_, cols) => r * cols + c,
    }
}

fn binary_values(a: &Mat, b: &Mat, f: impl Fn(f64, f64) -> f64) -> Mat {
    let (rows, cols) = broadcast_shape(a.shape(), b.shape());
    if a.shape() == b.shape() {
        let data = a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
        return Mat::new(rows, cols, data);
    }
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            data.push(f(
                a.data[bindex(a.shape(), r, c)],
                b.data[bindex(b.shape(), r, c)],
            ));
        }
    }
    Mat::new(rows, cols, data)
}

fn compute(op: &Op, nodes: &[Node]) -> (Mat, Vec<f64>) {
    let v = |i: usize| &nodes[i].value;
    let none = Vec::new();
    match *op {
        Op::Leaf => unreachable!("leaves carry their own values"),
        Op::Add(a, b) => (binary_values(v(a), v(b), |x, y| x + y), none),
        Op::Sub(a, b) => (binary_values(v(a), v(b), |x, y| x - y), none),
        Op::Mul(a, b) => (binary_values(v(a), v(b), |x, y| x * y), none),
        Op::Div(a, b) => (binary_values(v(a), v(b), |x, y| x / y), none),
        Op::Scale(a, c) => {
            let m = v(a);
            (
                Mat::new(m.rows, m.cols, m.data.iter().map(|x| x * c).collect()),
                none,
            )
        }
        Op::Unary(a, kind) => {
            let m = v(a);
            let mut vals = Vec::with_capacity(m.len());
            let mut local = Vec::with_capacity(m.len());
            for &x in &m.data {
                let (y, d) = kind.eval(x);
                vals.push(y);
                local.push(d);
            }
            (Mat::new(m.rows, m.cols, vals), local)
        }
        Op::MatMul { a, b, ta, tb } => {
            let av = View::of(v(a)).maybe_t(ta);
            let bv = View::of(v(b)).maybe_t(tb);
            assert_eq!(
                av.cols, bv.rows,
                "matmul shape mismatch: {}x{} * {}x{}",
                av.rows, av.cols, bv.rows, bv.cols
            );
            let mut out = vec![0.0; av.rows * bv.cols];
            gemm(&mut out, av, bv, 0.0);
            (Mat::new(av.rows, bv.cols, out), none)
        }
        Op::KhatriRao(a, b) => {
            let (ma, mb) = (v(a), v(b));
            assert_eq!(ma.cols, mb.cols, "khatri-rao column mismatch");
            let r = ma.cols;
            let mut out = Vec::with_capacity(ma.rows * mb.rows * r);
            for i in 0..ma.rows {
                let ra = ma.row_slice(i);
                for j in 0..mb.rows {
                    let rb = mb.row_slice(j);
                    out.extend(ra.iter().zip(rb).map(|(x, y)| x * y));
                }
            }
            (Mat::new(ma.rows * mb.rows, r, out), none)
        }
        Op::RowSlice { arg, start, len } => {
            let m = v(arg);
            assert!(start + len <= m.rows, "row slice out of range");
            let data = m.data[start * m.cols..(start + len) * m.cols].to_vec();
            (Mat::new(len, m.cols, data), none)
        }
        Op::ColSlice { arg, start, len } => {
            let m = v(arg);
            assert!(start + len <= m.cols, "column slice out of range");
            let mut data = Vec::with_capacity(m.rows * len);
            for r in 0..m.rows {
                data.extend_from_slice(&m.row_slice(r)[start..start + len]);
            }
            (Mat::new(m.rows, len, data), none)
        }
        Op::Reshape { arg, rows, cols } => {
            let m = v(arg);
            assert_eq!(m.len(), rows * cols, "reshape size mismatch");
            (Mat::new(rows, cols, m.data.clone()), none)
        }
        Op::RowScale { arg, ref weights } => {
            let m = v(arg);
            assert_eq!(m.rows, weights.len(), "row weights length mismatch");
            let mut data = Vec::with_capacity(m.len());
            for (r, w) in weights.iter().enumerate() {
                data.extend(m.row_slice(r).iter().map(|x| x * w));
            }
            (Mat::new(m.rows, m.cols, data), none)
        }
        Op::Sum(a) => (Mat::scalar(v(a).data.iter().sum()), none),
        Op::Prod(a) => (Mat::scalar(v(a).data.iter().product()), none),
        Op::TripleDot(a, b, c) => {
            let (ma, mb, mc) = (v(a), v(b), v(c));
            assert!(
                ma.shape() == mb.shape() && mb.shape() == mc.shape(),
                "triple dot shape mismatch"
            );
            let s = ma
                .data
                .iter()
                .zip(&mb.data)
                .zip(&mc.data)
                .map(|((x, y), z)| x * y * z)
                .sum();
            (Mat::scalar(s), none)
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Mat, op: Op, local: Vec<f64>) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len();
        if self.first_nonfinite.get().is_none() && !value.all_finite() {
            self.first_nonfinite.set(Some((idx, op.name())));
        }
        nodes.push(Node { value, op, local });
        Var { tape: self, idx }
    }

    fn record(&self, op: Op) -> Var<'_> {
        let (value, local) = compute(&op, &self.nodes.borrow());
        self.push(value, op, local)
    }

    /// Input node (parameters or constants alike).
    pub fn leaf(&self, value: Mat) -> Var<'_> {
        self.push(value, Op::Leaf, Vec::new())
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.leaf(Mat::scalar(value))
    }

    /// Index and operation name of the first node holding a NaN or infinity.
    pub fn first_nonfinite(&self) -> Option<(usize, &'static str)> {
        self.first_nonfinite.get()
    }

    pub fn check_finite(&self) -> Result<(), AdError> {
        match self.first_nonfinite() {
            Some((node, op)) => Err(AdError::NonFinite { node, op }),
            None => Ok(()),
        }
    }

    /// Recompute every non-leaf node from the leaves.
    pub fn replay(&self) -> Vec<Mat> {
        let nodes = self.nodes.borrow();
        let mut fresh: Vec<Node> = Vec::with_capacity(nodes.len());
        for node in nodes.iter() {
            let value = match node.op {
                Op::Leaf => node.value.clone(),
                ref op => compute(op, &fresh).0,
            };
            fresh.push(Node {
                value,
                op: node.op.clone(),
                local: Vec::new(),
            });
        }
        fresh.into_iter().map(|n| n.value).collect()
    }

    /// True when [`Tape::replay`] reproduces every recorded value bit for bit.
    pub fn replay_matches(&self) -> bool {
        let replayed = self.replay();
        let nodes = self.nodes.borrow();
        nodes.iter().zip(&replayed).all(|(n, r)| {
            n.value.shape() == r.shape()
                && n
                    .value
                    .data
                    .iter()
                    .zip(&r.data)
                    .all(|(a, b)| a.to_bits() == b.to_bits())
        })
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var<'_>) -> Result<Gradients, AdError> {
        self.check_finite()?;
        let nodes = self.nodes.borrow();
        assert_eq!(
            nodes[output.idx].value.shape(),
            (1, 1),
            "backward needs a scalar output"
        );
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; output.idx + 1];
        adj[output.idx] = Some(vec![1.0]);
        for i in (0..=output.idx).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &nodes[i];
            propagate(&nodes, node, &g, &mut adj);
            adj[i] = Some(g);
        }
        Ok(Gradients { adjoints: adj })
    }
}

fn slot<'a>(adj: &'a mut [Option<Vec<f64>>], nodes: &[Node], i: usize) -> &'a mut Vec<f64> {
    adj[i].get_or_insert_with(|| vec![0.0; nodes[i].value.len()])
}

fn propagate(nodes: &[Node], node: &Node, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
    let (rows, cols) = node.value.shape();
    let binary = |adj: &mut [Option<Vec<f64>>],
                  a: usize,
                  b: usize,
                  da: &dyn Fn(f64, f64) -> f64,
                  db: &dyn Fn(f64, f64) -> f64| {
        let (ma, mb) = (&nodes[a].value, &nodes[b].value);
        let (sa, sb) = (ma.shape(), mb.shape());
        if sa == sb {
            if a == b {
                let ga = slot(adj, nodes, a);
                for k in 0..g.len() {
                    let (x, y) = (ma.data[k], mb.data[k]);
                    ga[k] += g[k] * (da(x, y) + db(x, y));
                }
                return;
            }
            {
                let ga = slot(adj, nodes, a);
                for k in 0..g.len() {
                    ga[k] += g[k] * da(ma.data[k], mb.data[k]);
                }
            }
            let gb = slot(adj, nodes, b);
            for k in 0..g.len() {
                gb[k] += g[k] * db(ma.data[k], mb.data[k]);
            }
            return;
        }
        let mut ga = vec![0.0; ma.len()];
        let mut gb = vec![0.0; mb.len()];
        for r in 0..rows {
            for c in 0..cols {
                let (ia, ib) = (bindex(sa, r, c), bindex(sb, r, c));
                let (x, y) = (ma.data[ia], mb.data[ib]);
                let go = g[r * cols + c];
                ga[ia] += go * da(x, y);
                gb[ib] += go * db(x, y);
            }
        }
        for (dst, src) in slot(adj, nodes, a).iter_mut().zip(&ga) {
            *dst += src;
        }
        for (dst, src) in slot(adj, nodes, b).iter_mut().zip(&gb) {
            *dst += src;
        }
    };

    match node.op {
        Op::Leaf => {}
        Op::Add(a, b) => binary(adj, a, b, &|_, _| 1.0, &|_, _| 1.0),
        Op::Sub(a, b) => binary(adj, a, b, &|_, _| 1.0, &|_, _| -1.0),
        Op::Mul(a, b) => binary(adj, a, b, &|_, y| y, &|x, _| x),
        Op::Div(a, b) => binary(adj, a, b, &|_, y| 1.0 / y, &|x, y| -x / (y * y)),
        Op::Scale(a, c) => {
            for (dst, gi) in slot(adj, nodes, a).iter_mut().zip(g) {
                *dst += gi * c;
            }
        }
        Op::Unary(a, _) => {
            for ((dst, gi), d) in slot(adj, nodes, a).iter_mut().zip(g).zip(&node.local) {
                *dst += gi * d;
            }
        }
        Op::MatMul { a, b, ta, tb } => {
            let (ma, mb) = (&nodes[a].value, &nodes[b].value);
            let gv = View::raw(g, rows, cols);
            let opb = View::of(mb).maybe_t(tb);
            let opa = View::of(ma).maybe_t(ta);
            if a == b {
                let mut tmp = vec![0.0; ma.len()];
                accumulate_matmul_grads(&mut tmp, None, gv, opa, opb, ta, tb);
                let mut tmp_b = vec![0.0; mb.len()];
                accumulate_matmul_grads(&mut [], Some(&mut tmp_b), gv, opa, opb, ta, tb);
                for ((dst, x), y) in slot(adj, nodes, a).iter_mut().zip(&tmp).zip(&tmp_b) {
                    *dst += x + y;
                }
            } else {
                let mut ga = adj[a]
                    .take()
                    .unwrap_or_else(|| vec![0.0; ma.len()]);
                let mut gb = adj[b]
                    .take()
                    .unwrap_or_else(|| vec![0.0; mb.len()]);
                accumulate_matmul_grads(&mut ga, Some(&mut gb), gv, opa, opb, ta, tb);
                adj[a] = Some(ga);
                adj[b] = Some(gb);
            }
        }
        Op::KhatriRao(a, b) => {
            let (ma, mb) = (&nodes[a].value, &nodes[b].value);
            let r = ma.cols;
            let mut ga = vec![0.0; ma.len()];
            let mut gb = vec![0.0; mb.len()];
            for i in 0..ma.rows {
                let ra = ma.row_slice(i);
                for j in 0..mb.rows {
                    let rb = mb.row_slice(j);
                    let go = &g[(i * mb.rows + j) * r..(i * mb.rows + j + 1) * r];
                    for k in 0..r {
                        ga[i * r + k] += go[k] * rb[k];
                        gb[j * r + k] += go[k] * ra[k];
                    }
                }
            }
            for (dst, src) in slot(adj, nodes, a).iter_mut().zip(&ga) {
                *dst += src;
            }
            for (dst, src) in slot(adj, nodes, b).iter_mut().zip(&gb) {
                *dst += src;
            }
        }
        Op::RowSlice { arg, start, .. } => {
            let c = nodes[arg].value.cols;
            let dst = slot(adj, nodes, arg);
            for (d, gi) in dst[start * c..].iter_mut().zip(g) {
                *d += gi;
            }
        }
        Op::ColSlice { arg, start, len } => {
            let c = nodes[arg].value.cols;
            let dst = slot(adj, nodes, arg);
            for r in 0..rows {
                for k in 0..len {
                    dst[r * c + start + k] += g[r * len + k];
                }
            }
        }
        Op::Reshape { arg, .. } => {
            for (dst, gi) in slot(adj, nodes, arg).iter_mut().zip(g) {
                *dst += gi;
            }
        }
        Op::RowScale { arg, ref weights } => {
            let c = nodes[arg].value.cols;
            let dst = slot(adj, nodes, arg);
            for (r, w) in weights.iter().enumerate() {
                for k in 0..c {
                    dst[r * c + k] += g[r * c + k] * w;
                }
            }
        }
        Op::Sum(a) => {
            let g0 = g[0];
            for dst in slot(adj, nodes, a).iter_mut() {
                *dst += g0;
            }
        }
        Op::Prod(a) => {
            let data = &nodes[a].value.data;
            let n = data.len();
            let mut prefix = vec![1.0; n + 1];
            for k in 0..n {
                prefix[k + 1] = prefix[k] * data[k];
            }
            let mut suffix = 1.0;
            let dst = slot(adj, nodes, a);
            for k in (0..n).rev() {
                dst[k] += g[0] * prefix[k] * suffix;
                suffix *= data[k];
            }
        }
        Op::TripleDot(a, b, c) => {
            let (ma, mb, mc) = (&nodes[a].value, &nodes[b].value, &nodes[c].value);
            let g0 = g[0];
            let n = ma.len();
            let mut ga = vec![0.0; n];
            let mut gb = vec![0.0; n];
            let mut gc = vec![0.0; n];
            for k in 0..n {
                let (x, y, z) = (ma.data[k], mb.data[k], mc.data[k]);
                ga[k] = g0 * y * z;
                gb[k] = g0 * x * z;
                gc[k] = g0 * x * y;
            }
            for (idx, src) in [(a, ga), (b, gb), (c, gc)] {
                for (dst, s) in slot(adj, nodes, idx).iter_mut().zip(&src) {
                    *dst += s;
                }
            }
        }
    }
}

/// Adds the contributions of `dC` to the operands of `C = op(A) op(B)`.
/// An empty `ga` skips the `A` side.
fn accumulate_matmul_grads(
    ga: &mut [f64],
    gb: Option<&mut Vec<f64>>,
    gc: View<'_>,
    opa: View<'_>,
    opb: View<'_>,
    ta: bool,
    tb: bool,
) {
    if !ga.is_empty() {
        if ta {
            // A stored k x m: dA = op(B) dC^T
            gemm(ga, opb, gc.t(), 1.0);
        } else {
            gemm(ga, gc, opb.t(), 1.0);
        }
    }
    if let Some(gb) = gb {
        if tb {
            // B stored n x k: dB = dC^T op(A)
            gemm(gb, gc.t(), opa, 1.0);
        } else {
            gemm(gb, opa.t(), gc, 1.0);
        }
    }
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients {
    adjoints: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient with respect to `var`, flattened row-major. Nodes the output
    /// does not depend on get zeros.
    pub fn wrt(&self, var: Var<'_>) -> Vec<f64> {
        match self.adjoints.get(var.idx).and_then(|a| a.as_ref()) {
            Some(g) => g.clone(),
            None => vec![0.0; var.with_value(|m| m.len())],
        }
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn index(&self) -> usize {
        self.idx
    }

    pub fn with_value<R>(&self, f: impl FnOnce(&Mat) -> R) -> R {
        let nodes: Ref<'_, Vec<Node>> = self.tape.nodes.borrow();
        f(&nodes[self.idx].value)
    }

    pub fn value(&self) -> Mat {
        self.with_value(Mat::clone)
    }

    /// Value of a `1x1` node.
    pub fn scalar(&self) -> f64 {
        self.with_value(|m| {
            assert_eq!(m.shape(), (1, 1), "not a scalar node");
            m.data[0]
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.with_value(Mat::shape)
    }

    fn op(self, op: Op) -> Var<'t> {
        self.tape.record(op)
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.op(Op::Scale(self.idx, c))
    }

    pub fn unary(self, kind: Unary) -> Var<'t> {
        self.op(Op::Unary(self.idx, kind))
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(Unary::Exp)
    }

    pub fn ln(self) -> Var<'t> {
        self.unary(Unary::Ln)
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(Unary::Tanh)
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary(Unary::Sigmoid)
    }

    pub fn swish(self) -> Var<'t> {
        self.unary(Unary::Swish)
    }

    pub fn powf(self, p: f64) -> Var<'t> {
        self.unary(Unary::Powf(p))
    }

    pub fn square(self) -> Var<'t> {
        self * self
    }

    /// `op(self) * op(other)` with optional transposes.
    pub fn matmul_t(self, other: Var<'t>, ta: bool, tb: bool) -> Var<'t> {
        self.op(Op::MatMul {
            a: self.idx,
            b: other.idx,
            ta,
            tb,
        })
    }

    pub fn matmul(self, other: Var<'t>) -> Var<'t> {
        self.matmul_t(other, false, false)
    }

    /// Row-wise Kronecker product: row `i * other.rows + j` is the
    /// elementwise product of row `i` of `self` and row `j` of `other`.
    pub fn khatri_rao(self, other: Var<'t>) -> Var<'t> {
        self.op(Op::KhatriRao(self.idx, other.idx))
    }

    pub fn rows(self, start: usize, len: usize) -> Var<'t> {
        self.op(Op::RowSlice {
            arg: self.idx,
            start,
            len,
        })
    }

    pub fn cols(self, start: usize, len: usize) -> Var<'t> {
        self.op(Op::ColSlice {
            arg: self.idx,
            start,
            len,
        })
    }

    pub fn reshape(self, rows: usize, cols: usize) -> Var<'t> {
        self.op(Op::Reshape {
            arg: self.idx,
            rows,
            cols,
        })
    }

    /// Element `i` of a column or row vector as a `1x1` node.
    pub fn at(self, i: usize) -> Var<'t> {
        let (r, c) = self.shape();
        if c == 1 {
            self.rows(i, 1)
        } else {
            assert_eq!(r, 1, "at() needs a vector");
            self.cols(i, 1)
        }
    }

    /// Reinterprets `rows * cols` consecutive entries of a column vector,
    /// starting at `offset`, as a row-major matrix.
    pub fn view(self, offset: usize, rows: usize, cols: usize) -> Var<'t> {
        self.rows(offset, rows * cols).reshape(rows, cols)
    }

    /// Multiplies row `i` by the constant `weights[i]`.
    pub fn row_scale(self, weights: Rc<[f64]>) -> Var<'t> {
        self.op(Op::RowScale {
            arg: self.idx,
            weights,
        })
    }

    pub fn sum(self) -> Var<'t> {
        self.op(Op::Sum(self.idx))
    }

    pub fn mean(self) -> Var<'t> {
        let n = self.with_value(Mat::len);
        self.sum().scale(1.0 / n as f64)
    }

    pub fn prod(self) -> Var<'t> {
        self.op(Op::Prod(self.idx))
    }

    /// `sum(self * b * c)` for equally shaped operands.
    pub fn triple_dot(self, b: Var<'t>, c: Var<'t>) -> Var<'t> {
        self.op(Op::TripleDot(self.idx, b.idx, c.idx))
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        self + self.tape.scalar(c)
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $variant:ident) => {
        impl<'t> ops::$trait for Var<'t> {
            type Output = Var<'t>;
            fn $method(self, rhs: Var<'t>) -> Var<'t> {
                self.op(Op::$variant(self.idx, rhs.idx))
            }
        }
        impl<'t> ops::$trait<f64> for Var<'t> {
            type Output = Var<'t>;
            fn $method(self, rhs: f64) -> Var<'t> {
                let c = self.tape.scalar(rhs);
                self.op(Op::$variant(self.idx, c.idx))
            }
        }
        impl<'t> ops::$trait<Var<'t>> for f64 {
            type Output = Var<'t>;
            fn $method(self, rhs: Var<'t>) -> Var<'t> {
                let c = rhs.tape.scalar(self);
                rhs.op(Op::$variant(c.idx, rhs.idx))
            }
        }
    };
}

binop!(Add, add, Add);
binop!(Sub, sub, Sub);
binop!(Mul, mul, Mul);
binop!(Div, div, Div);

impl<'t> ops::Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd<F: Fn(f64) -> f64>(f: F, x: f64) -> f64 {
        let h = 1e-6 * x.abs().max(1.0);
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn unary_derivatives_match_finite_differences() {
        let kinds = [
            Unary::Exp,
            Unary::Ln,
            Unary::Tanh,
            Unary::TanhPrime,
            Unary::Sigmoid,
            Unary::Swish,
            Unary::SwishPrime,
            Unary::Powf(2.5),
        ];
        for kind in kinds {
            for &x in &[0.3, 1.7, 2.9] {
                let (_, d) = kind.eval(x);
                let num = fd(|t| kind.eval(t).0, x);
                assert!(
                    (d - num).abs() <= 1e-7 * d.abs().max(1.0),
                    "{kind:?} at {x}: {d} vs {num}"
                );
            }
        }
    }

    #[test]
    fn broadcasting_row_and_scalar() {
        let t = Tape::new();
        let m = t.leaf(Mat::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
        let r = t.leaf(Mat::row(vec![10.0, 20.0]));
        let y = (m + r) * 2.0;
        assert_eq!(y.value().data, vec![22.0, 44.0, 26.0, 48.0]);
        let g = t.backward(y.sum()).unwrap();
        assert_eq!(g.wrt(r), vec![4.0, 4.0]);
        assert_eq!(g.wrt(m), vec![2.0; 4]);
    }

    #[test]
    fn self_product_gradient() {
        let t = Tape::new();
        let x = t.leaf(Mat::column(vec![3.0]));
        let y = (x * x).sum();
        assert_eq!(t.backward(y).unwrap().wrt(x), vec![6.0]);
    }

    #[test]
    fn prod_gradient_with_zero_entry() {
        let t = Tape::new();
        let x = t.leaf(Mat::column(vec![2.0, 0.0, 5.0]));
        let g = t.backward(x.prod()).unwrap().wrt(x);
        assert_eq!(g, vec![0.0, 10.0, 0.0]);
    }

    #[test]
    fn nonfinite_node_is_reported() {
        let t = Tape::new();
        let x = t.leaf(Mat::column(vec![-1.0]));
        let y = x.ln().sum();
        let err = t.backward(y).err().unwrap();
        assert_eq!(err, AdError::NonFinite { node: 1, op: "ln" });
    }
}
