//! Eager reverse-mode autodiff over an append-only node arena.
//!
//! Values are computed at construction time. `grad` walks the arena
//! backwards and *emits new nodes* for every adjoint, so the returned
//! gradients are ordinary graph values that can be differentiated again.
//! That property is what makes a loss built on top of a gradient (the
//! faithfulness term) trainable with exact second-order terms.
//!
//! Nonsmooth points use the conventional a.e. derivatives: relu and
//! clamp masks are emitted as constants (their second derivative is zero
//! almost everywhere), while tanh/sigmoid/softmax adjoints are built from
//! live nodes and stay differentiable to any order.

use std::collections::BTreeMap;

use super::params::ParameterStore;
use super::tensor::{self, Shape, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Const,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Neg(NodeId),
    AddConst(NodeId),
    MulConst(NodeId, f64),
    /// Elementwise product with a scalar node.
    Scale(NodeId, NodeId),
    MatVec(NodeId, NodeId),
    MatTVec(NodeId, NodeId),
    Outer(NodeId, NodeId),
    Dot(NodeId, NodeId),
    Sum(NodeId),
    /// Broadcast a scalar node to a shape.
    Spread(NodeId),
    Concat(Vec<NodeId>),
    Slice(NodeId, usize),
    Pad(NodeId, usize),
    Row(NodeId, usize),
    RowScatter(NodeId, usize),
    Reshape(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Sqrt(NodeId),
    Recip(NodeId),
    Relu(NodeId),
    LeakyRelu(NodeId, f64),
    Softplus(NodeId),
    ClampMin(NodeId, f64),
    Softmax(NodeId),
    Detach,
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Computation graph. One instance per example/loss evaluation.
pub struct Graph {
    nodes: Vec<Node>,
    params: BTreeMap<String, NodeId>,
    warnings: Vec<String>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn stable_softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Graph {
    pub fn new() -> Graph {
        Graph {
            nodes: Vec::new(),
            params: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> Shape {
        self.nodes[id.0].value.shape()
    }

    /// Non-fatal issues recorded during differentiation.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, value });
        id
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Const, value)
    }

    pub fn scalar_const(&mut self, v: f64) -> NodeId {
        self.constant(Tensor::scalar(v))
    }

    pub fn vector_const(&mut self, v: Vec<f64>) -> NodeId {
        self.constant(Tensor::vector(v))
    }

    /// Leaf initialized from a named parameter. Repeated requests for the
    /// same name return the same node so gradients accumulate across uses.
    pub fn param(&mut self, store: &ParameterStore, name: &str) -> Result<NodeId> {
        if let Some(&id) = self.params.get(name) {
            return Ok(id);
        }
        let p = store
            .get(name)
            .ok_or_else(|| Error::Invalid(format!("unknown parameter {name}")))?;
        let id = self.leaf(p.value.clone());
        self.params.insert(name.to_string(), id);
        Ok(id)
    }

    /// Nodes registered through [`Graph::param`], keyed by parameter name.
    pub fn param_nodes(&self) -> &BTreeMap<String, NodeId> {
        &self.params
    }

    fn same_shape(&self, a: NodeId, b: NodeId, ctx: &str) {
        let (sa, sb) = (self.shape(a), self.shape(b));
        assert_eq!(sa, sb, "{ctx}: {sa} vs {sb}");
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.same_shape(a, b, "add");
        let v = self.nodes[a.0].value.zip_map(&self.nodes[b.0].value, |x, y| x + y);
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.same_shape(a, b, "sub");
        let v = self.nodes[a.0].value.zip_map(&self.nodes[b.0].value, |x, y| x - y);
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.same_shape(a, b, "mul");
        let v = self.nodes[a.0].value.zip_map(&self.nodes[b.0].value, |x, y| x * y);
        self.push(Op::Mul(a, b), v)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(|x| -x);
        self.push(Op::Neg(a), v)
    }

    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.nodes[a.0].value.map(|x| x + c);
        self.push(Op::AddConst(a), v)
    }

    pub fn mul_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.nodes[a.0].value.map(|x| x * c);
        self.push(Op::MulConst(a, c), v)
    }

    /// `a * s` with `s` a scalar node, broadcast over `a`.
    pub fn scale(&mut self, a: NodeId, s: NodeId) -> NodeId {
        assert_eq!(self.shape(s), Shape::Scalar, "scale factor must be scalar");
        let sv = self.nodes[s.0].value.item();
        let v = self.nodes[a.0].value.map(|x| x * sv);
        self.push(Op::Scale(a, s), v)
    }

    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> NodeId {
        let v = tensor::matvec(&self.nodes[w.0].value, &self.nodes[x.0].value);
        self.push(Op::MatVec(w, x), v)
    }

    pub fn mat_t_vec(&mut self, w: NodeId, x: NodeId) -> NodeId {
        let v = tensor::mat_t_vec(&self.nodes[w.0].value, &self.nodes[x.0].value);
        self.push(Op::MatTVec(w, x), v)
    }

    pub fn outer(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = tensor::outer(&self.nodes[a.0].value, &self.nodes[b.0].value);
        self.push(Op::Outer(a, b), v)
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.same_shape(a, b, "dot");
        let v = Tensor::scalar(tensor::dot(&self.nodes[a.0].value, &self.nodes[b.0].value));
        self.push(Op::Dot(a, b), v)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.nodes[a.0].value.sum());
        self.push(Op::Sum(a), v)
    }

    pub fn spread(&mut self, s: NodeId, shape: Shape) -> NodeId {
        assert_eq!(self.shape(s), Shape::Scalar, "spread source must be scalar");
        let v = Tensor::filled(shape, self.nodes[s.0].value.item());
        self.push(Op::Spread(s), v)
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat of zero parts");
        let mut data = Vec::new();
        for &p in parts {
            assert!(
                !matches!(self.shape(p), Shape::Matrix(_, _)),
                "concat of matrix node"
            );
            data.extend_from_slice(self.nodes[p.0].value.data());
        }
        self.push(Op::Concat(parts.to_vec()), Tensor::vector(data))
    }

    pub fn slice(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let n = self.nodes[a.0].value.len();
        assert!(
            start + len <= n,
            "slice {start}..{} out of range for len {n}",
            start + len
        );
        let v = Tensor::vector(self.nodes[a.0].value.data()[start..start + len].to_vec());
        self.push(Op::Slice(a, start), v)
    }

    /// Zero-extend a vector to `total`, placing it at `start`.
    pub fn pad(&mut self, a: NodeId, start: usize, total: usize) -> NodeId {
        let n = self.nodes[a.0].value.len();
        assert!(start + n <= total, "pad out of range");
        let mut data = vec![0.0; total];
        data[start..start + n].copy_from_slice(self.nodes[a.0].value.data());
        self.push(Op::Pad(a, start), Tensor::vector(data))
    }

    /// Scalar element of a vector node.
    pub fn at(&mut self, a: NodeId, i: usize) -> NodeId {
        let s = self.slice(a, i, 1);
        self.reshape(s, Shape::Scalar)
    }

    pub fn row(&mut self, m: NodeId, i: usize) -> NodeId {
        let v = Tensor::vector(self.nodes[m.0].value.row(i).to_vec());
        self.push(Op::Row(m, i), v)
    }

    pub fn row_scatter(&mut self, v: NodeId, i: usize, rows: usize, cols: usize) -> NodeId {
        assert_eq!(self.shape(v), Shape::Vector(cols), "row_scatter width");
        assert!(i < rows, "row_scatter row {i} of {rows}");
        let mut data = vec![0.0; rows * cols];
        data[i * cols..(i + 1) * cols].copy_from_slice(self.nodes[v.0].value.data());
        self.push(Op::RowScatter(v, i), Tensor::matrix(rows, cols, data))
    }

    pub fn reshape(&mut self, a: NodeId, shape: Shape) -> NodeId {
        let value = &self.nodes[a.0].value;
        assert_eq!(value.len(), shape.len(), "reshape length");
        let v = Tensor::new(shape, value.data().to_vec());
        self.push(Op::Reshape(a), v)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(f64::tanh);
        self.push(Op::Tanh(a), v)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(stable_sigmoid);
        self.push(Op::Sigmoid(a), v)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(f64::exp);
        self.push(Op::Exp(a), v)
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(f64::ln);
        self.push(Op::Ln(a), v)
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(f64::sqrt);
        self.push(Op::Sqrt(a), v)
    }

    pub fn recip(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(|x| 1.0 / x);
        self.push(Op::Recip(a), v)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(|x| x.max(0.0));
        self.push(Op::Relu(a), v)
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: f64) -> NodeId {
        let v = self.nodes[a.0].value.map(|x| if x > 0.0 { x } else { slope * x });
        self.push(Op::LeakyRelu(a, slope), v)
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(stable_softplus);
        self.push(Op::Softplus(a), v)
    }

    pub fn clamp_min(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.nodes[a.0].value.map(|x| x.max(c));
        self.push(Op::ClampMin(a, c), v)
    }

    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let x = self.nodes[a.0].value.data();
        assert!(!x.is_empty(), "softmax of empty vector");
        let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = x.iter().map(|&v| (v - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        let v = Tensor::new(self.shape(a), exps.iter().map(|&e| e / z).collect());
        self.push(Op::Softmax(a), v)
    }

    /// Value copy that blocks gradient flow.
    pub fn detach(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.clone();
        self.push(Op::Detach, v)
    }

    fn ones_like(&mut self, a: NodeId) -> NodeId {
        self.constant(Tensor::filled(self.shape(a), 1.0))
    }

    fn mask_const(&mut self, a: NodeId, f: impl Fn(f64) -> f64) -> NodeId {
        let v = self.nodes[a.0].value.map(f);
        self.constant(v)
    }

    /// Reverse-mode gradients of scalar `output` with respect to `wrt`.
    ///
    /// Adjoints are appended to the graph as new nodes, so the result can
    /// feed further ops (including another `grad` call). A `wrt` entry the
    /// output does not depend on yields a zero tensor and a warning.
    pub fn grad(&mut self, output: NodeId, wrt: &[NodeId]) -> Vec<NodeId> {
        assert_eq!(
            self.shape(output),
            Shape::Scalar,
            "grad target must be scalar, got {}",
            self.shape(output)
        );
        let upper = output.0;
        let mut adj: Vec<Option<NodeId>> = vec![None; upper + 1];
        adj[upper] = Some(self.scalar_const(1.0));
        for id in (0..=upper).rev() {
            let Some(g) = adj[id] else { continue };
            let op = self.nodes[id].op.clone();
            self.backprop(NodeId(id), op, g, &mut adj);
        }
        wrt.iter()
            .map(|w| {
                if w.0 <= upper {
                    if let Some(g) = adj[w.0] {
                        return g;
                    }
                }
                self.warnings
                    .push(format!("grad: node {} does not influence the output", w.0));
                let shape = self.shape(*w);
                self.constant(Tensor::zeros(shape))
            })
            .collect()
    }

    fn accumulate(&mut self, adj: &mut [Option<NodeId>], target: NodeId, contrib: NodeId) {
        debug_assert_eq!(self.shape(target), self.shape(contrib), "adjoint shape");
        adj[target.0] = Some(match adj[target.0] {
            Some(existing) => self.add(existing, contrib),
            None => contrib,
        });
    }

    fn backprop(&mut self, id: NodeId, op: Op, g: NodeId, adj: &mut [Option<NodeId>]) {
        match op {
            Op::Leaf | Op::Const | Op::Detach => {}
            Op::Add(a, b) => {
                self.accumulate(adj, a, g);
                self.accumulate(adj, b, g);
            }
            Op::Sub(a, b) => {
                self.accumulate(adj, a, g);
                let ng = self.neg(g);
                self.accumulate(adj, b, ng);
            }
            Op::Mul(a, b) => {
                let da = self.mul(g, b);
                self.accumulate(adj, a, da);
                let db = self.mul(g, a);
                self.accumulate(adj, b, db);
            }
            Op::Neg(a) => {
                let da = self.neg(g);
                self.accumulate(adj, a, da);
            }
            Op::AddConst(a) => self.accumulate(adj, a, g),
            Op::MulConst(a, c) => {
                let da = self.mul_const(g, c);
                self.accumulate(adj, a, da);
            }
            Op::Scale(a, s) => {
                let da = self.scale(g, s);
                self.accumulate(adj, a, da);
                let ds = self.dot(g, a);
                self.accumulate(adj, s, ds);
            }
            Op::MatVec(w, x) => {
                let dw = self.outer(g, x);
                self.accumulate(adj, w, dw);
                let dx = self.mat_t_vec(w, g);
                self.accumulate(adj, x, dx);
            }
            Op::MatTVec(w, x) => {
                let dw = self.outer(x, g);
                self.accumulate(adj, w, dw);
                let dx = self.matvec(w, g);
                self.accumulate(adj, x, dx);
            }
            Op::Outer(a, b) => {
                let da = self.matvec(g, b);
                self.accumulate(adj, a, da);
                let db = self.mat_t_vec(g, a);
                self.accumulate(adj, b, db);
            }
            Op::Dot(a, b) => {
                let da = self.scale(b, g);
                self.accumulate(adj, a, da);
                let db = self.scale(a, g);
                self.accumulate(adj, b, db);
            }
            Op::Sum(a) => {
                let shape = self.shape(a);
                let da = self.spread(g, shape);
                self.accumulate(adj, a, da);
            }
            Op::Spread(s) => {
                let ds = self.sum(g);
                self.accumulate(adj, s, ds);
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let shape = self.shape(p);
                    let len = shape.len();
                    let sl = self.slice(g, off, len);
                    let dp = if shape == Shape::Vector(len) {
                        sl
                    } else {
                        self.reshape(sl, shape)
                    };
                    self.accumulate(adj, p, dp);
                    off += len;
                }
            }
            Op::Slice(a, start) => {
                let total = self.nodes[a.0].value.len();
                let da = self.pad(g, start, total);
                self.accumulate(adj, a, da);
            }
            Op::Pad(a, start) => {
                let len = self.nodes[a.0].value.len();
                let da = self.slice(g, start, len);
                self.accumulate(adj, a, da);
            }
            Op::Row(m, i) => {
                let Shape::Matrix(r, c) = self.shape(m) else {
                    unreachable!()
                };
                let dm = self.row_scatter(g, i, r, c);
                self.accumulate(adj, m, dm);
            }
            Op::RowScatter(v, i) => {
                let dv = self.row(g, i);
                self.accumulate(adj, v, dv);
            }
            Op::Reshape(a) => {
                let shape = self.shape(a);
                let da = self.reshape(g, shape);
                self.accumulate(adj, a, da);
            }
            Op::Tanh(a) => {
                let ones = self.ones_like(id);
                let yy = self.mul(id, id);
                let d = self.sub(ones, yy);
                let da = self.mul(g, d);
                self.accumulate(adj, a, da);
            }
            Op::Sigmoid(a) => {
                let ones = self.ones_like(id);
                let om = self.sub(ones, id);
                let d = self.mul(id, om);
                let da = self.mul(g, d);
                self.accumulate(adj, a, da);
            }
            Op::Exp(a) => {
                let da = self.mul(g, id);
                self.accumulate(adj, a, da);
            }
            Op::Ln(a) => {
                let r = self.recip(a);
                let da = self.mul(g, r);
                self.accumulate(adj, a, da);
            }
            Op::Sqrt(a) => {
                let r = self.recip(id);
                let half = self.mul_const(r, 0.5);
                let da = self.mul(g, half);
                self.accumulate(adj, a, da);
            }
            Op::Recip(a) => {
                let yy = self.mul(id, id);
                let m = self.mul(g, yy);
                let da = self.neg(m);
                self.accumulate(adj, a, da);
            }
            Op::Relu(a) => {
                let mask = self.mask_const(a, |x| if x > 0.0 { 1.0 } else { 0.0 });
                let da = self.mul(g, mask);
                self.accumulate(adj, a, da);
            }
            Op::LeakyRelu(a, slope) => {
                let mask = self.mask_const(a, |x| if x > 0.0 { 1.0 } else { slope });
                let da = self.mul(g, mask);
                self.accumulate(adj, a, da);
            }
            Op::Softplus(a) => {
                let s = self.sigmoid(a);
                let da = self.mul(g, s);
                self.accumulate(adj, a, da);
            }
            Op::ClampMin(a, c) => {
                let mask = self.mask_const(a, |x| if x > c { 1.0 } else { 0.0 });
                let da = self.mul(g, mask);
                self.accumulate(adj, a, da);
            }
            Op::Softmax(a) => {
                let gy = self.dot(g, id);
                let shape = self.shape(id);
                let sp = self.spread(gy, shape);
                let centered = self.sub(g, sp);
                let da = self.mul(id, centered);
                self.accumulate(adj, a, da);
            }
        }
    }

    /// Gradients of `loss` for every parameter registered via [`Graph::param`].
    pub fn param_grads(&mut self, loss: NodeId) -> BTreeMap<String, Tensor> {
        let names: Vec<String> = self.params.keys().cloned().collect();
        let ids: Vec<NodeId> = names.iter().map(|n| self.params[n]).collect();
        let grads = self.grad(loss, &ids);
        names
            .into_iter()
            .zip(grads)
            .map(|(n, g)| (n, self.value(g).clone()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn product_rule_hand_example() {
        // d/dx (x^2 * y) = 2xy, d/dy = x^2 at x=3, y=5
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(3.0));
        let y = g.leaf(Tensor::scalar(5.0));
        let xx = g.mul(x, x);
        let f = g.mul(xx, y);
        let grads = g.grad(f, &[x, y]);
        assert_close(g.value(grads[0]).item(), 30.0, 1e-12);
        assert_close(g.value(grads[1]).item(), 9.0, 1e-12);
    }

    #[test]
    fn second_order_via_grad_of_grad() {
        // f = x^3: f' = 3x^2, f'' = 6x at x = 2
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(2.0));
        let x2 = g.mul(x, x);
        let f = g.mul(x2, x);
        let first = g.grad(f, &[x])[0];
        assert_close(g.value(first).item(), 12.0, 1e-12);
        let second = g.grad(first, &[x])[0];
        assert_close(g.value(second).item(), 12.0, 1e-12);
        let third = g.grad(second, &[x])[0];
        assert_close(g.value(third).item(), 6.0, 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one_and_backprop() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0, -2.0, 0.5, 3.0]));
        let y = g.softmax(x);
        assert_close(g.value(y).sum(), 1.0, 1e-12);
        let w = g.vector_const(vec![1.0, 2.0, 3.0, 4.0]);
        let s = g.dot(y, w);
        let dx = g.grad(s, &[x])[0];
        // gradient of a softmax expectation sums to zero
        assert_close(g.value(dx).sum(), 0.0, 1e-12);
    }

    #[test]
    fn disconnected_wrt_yields_zero_and_warning() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(1.0));
        let z = g.leaf(Tensor::vector(vec![1.0, 2.0]));
        let f = g.mul(x, x);
        let gz = g.grad(f, &[z])[0];
        assert_eq!(g.value(gz).data(), &[0.0, 0.0]);
        assert_eq!(g.warnings().len(), 1);
    }

    #[test]
    fn detach_blocks_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(2.0));
        let d = g.detach(x);
        let f = g.mul(x, d);
        let dx = g.grad(f, &[x])[0];
        // only the live factor contributes
        assert_close(g.value(dx).item(), 2.0, 1e-12);
    }

    #[test]
    fn matvec_chain_matches_hand_gradient() {
        // f = 1^T tanh(Wx); checked against the closed form J = diag(1-t^2) W
        let mut g = Graph::new();
        let w = g.leaf(Tensor::matrix(2, 2, vec![0.5, -1.0, 2.0, 0.25]));
        let x = g.leaf(Tensor::vector(vec![0.3, -0.7]));
        let wx = g.matvec(w, x);
        let t = g.tanh(wx);
        let f = g.sum(t);
        let grads = g.grad(f, &[x, w]);
        let pre: [f64; 2] = [0.5 * 0.3 - 1.0 * -0.7, 2.0 * 0.3 + 0.25 * -0.7];
        let d: Vec<f64> = pre.iter().map(|v| 1.0 - v.tanh().powi(2)).collect();
        let expect_x = [0.5 * d[0] + 2.0 * d[1], -1.0 * d[0] + 0.25 * d[1]];
        let gx = g.value(grads[0]).data().to_vec();
        assert_close(gx[0], expect_x[0], 1e-12);
        assert_close(gx[1], expect_x[1], 1e-12);
        let gw = g.value(grads[1]).data().to_vec();
        assert_close(gw[0], d[0] * 0.3, 1e-12);
        assert_close(gw[3], d[1] * -0.7, 1e-12);
    }
}
