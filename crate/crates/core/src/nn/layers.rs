//! Layer builders: dense, GRU and LSTM cells.
//!
//! A layer handle owns parameter *names*; values live in a
//! [`ParameterStore`]. `init` creates the parameters, `apply` builds graph
//! nodes, so the same handle works for freshly initialized and loaded
//! stores alike.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, NodeId};
use super::params::ParameterStore;
use super::tensor::{Shape, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
    LeakyRelu,
    Softmax,
}

/// Uniform Glorot init.
fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::matrix(rows, cols, data)
}

#[derive(Clone, Debug)]
pub struct Dense {
    pub name: String,
    pub in_dim: usize,
    pub out_dim: usize,
    pub act: Activation,
    pub leaky_slope: f64,
}

impl Dense {
    pub fn init(
        store: &mut ParameterStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        act: Activation,
    ) -> Dense {
        store.insert(format!("{name}.w"), glorot(rng, out_dim, in_dim));
        store.insert(format!("{name}.b"), Tensor::zeros(Shape::Vector(out_dim)));
        Dense {
            name: name.to_string(),
            in_dim,
            out_dim,
            act,
            leaky_slope: 0.01,
        }
    }

    /// Handle for parameters that already exist in a loaded store.
    pub fn attach(name: &str, in_dim: usize, out_dim: usize, act: Activation) -> Dense {
        Dense {
            name: name.to_string(),
            in_dim,
            out_dim,
            act,
            leaky_slope: 0.01,
        }
    }

    pub fn apply(&self, g: &mut Graph, store: &ParameterStore, x: NodeId) -> Result<NodeId> {
        if g.shape(x) != Shape::Vector(self.in_dim) {
            return Err(Error::shape(
                &self.name,
                Shape::Vector(self.in_dim).to_string(),
                g.shape(x).to_string(),
            ));
        }
        let w = g.param(store, &format!("{}.w", self.name))?;
        let b = g.param(store, &format!("{}.b", self.name))?;
        let wx = g.matvec(w, x);
        let z = g.add(wx, b);
        Ok(match self.act {
            Activation::Identity => z,
            Activation::Tanh => g.tanh(z),
            Activation::Sigmoid => g.sigmoid(z),
            Activation::LeakyRelu => g.leaky_relu(z, self.leaky_slope),
            Activation::Softmax => g.softmax(z),
        })
    }
}

/// GRU cell; gate layout along the stacked dimension is `[r, z, n]`.
#[derive(Clone, Debug)]
pub struct GruCell {
    pub name: String,
    pub in_dim: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn init(store: &mut ParameterStore, rng: &mut ChaCha8Rng, name: &str, in_dim: usize, hidden: usize) -> GruCell {
        store.insert(format!("{name}.wx"), glorot(rng, 3 * hidden, in_dim));
        store.insert(format!("{name}.wh"), glorot(rng, 3 * hidden, hidden));
        store.insert(format!("{name}.bx"), Tensor::zeros(Shape::Vector(3 * hidden)));
        store.insert(format!("{name}.bh"), Tensor::zeros(Shape::Vector(3 * hidden)));
        GruCell { name: name.to_string(), in_dim, hidden }
    }

    pub fn attach(name: &str, in_dim: usize, hidden: usize) -> GruCell {
        GruCell { name: name.to_string(), in_dim, hidden }
    }

    pub fn zero_state(&self, g: &mut Graph) -> NodeId {
        g.constant(Tensor::zeros(Shape::Vector(self.hidden)))
    }

    pub fn apply(&self, g: &mut Graph, store: &ParameterStore, x: NodeId, h: NodeId) -> Result<NodeId> {
        if g.shape(x) != Shape::Vector(self.in_dim) || g.shape(h) != Shape::Vector(self.hidden) {
            return Err(Error::shape(
                &self.name,
                format!("x vec[{}], h vec[{}]", self.in_dim, self.hidden),
                format!("x {}, h {}", g.shape(x), g.shape(h)),
            ));
        }
        let n = self.hidden;
        let wx = g.param(store, &format!("{}.wx", self.name))?;
        let wh = g.param(store, &format!("{}.wh", self.name))?;
        let bx = g.param(store, &format!("{}.bx", self.name))?;
        let bh = g.param(store, &format!("{}.bh", self.name))?;
        let gx0 = g.matvec(wx, x);
        let gx = g.add(gx0, bx);
        let gh0 = g.matvec(wh, h);
        let gh = g.add(gh0, bh);

        let gx_r = g.slice(gx, 0, n);
        let gh_r = g.slice(gh, 0, n);
        let pre_r = g.add(gx_r, gh_r);
        let r = g.sigmoid(pre_r);

        let gx_z = g.slice(gx, n, n);
        let gh_z = g.slice(gh, n, n);
        let pre_z = g.add(gx_z, gh_z);
        let z = g.sigmoid(pre_z);

        let gx_n = g.slice(gx, 2 * n, n);
        let gh_n = g.slice(gh, 2 * n, n);
        let gated = g.mul(r, gh_n);
        let pre_n = g.add(gx_n, gated);
        let cand = g.tanh(pre_n);

        let ones = g.constant(Tensor::filled(Shape::Vector(n), 1.0));
        let keep = g.sub(ones, z);
        let a = g.mul(keep, cand);
        let b = g.mul(z, h);
        Ok(g.add(a, b))
    }
}

/// LSTM cell; gate layout `[i, f, g, o]`.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub name: String,
    pub in_dim: usize,
    pub hidden: usize,
}

/// Hidden and cell state node pair.
#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: NodeId,
    pub c: NodeId,
}

impl LstmCell {
    pub fn init(store: &mut ParameterStore, rng: &mut ChaCha8Rng, name: &str, in_dim: usize, hidden: usize) -> LstmCell {
        store.insert(format!("{name}.wx"), glorot(rng, 4 * hidden, in_dim));
        store.insert(format!("{name}.wh"), glorot(rng, 4 * hidden, hidden));
        store.insert(format!("{name}.b"), Tensor::zeros(Shape::Vector(4 * hidden)));
        LstmCell { name: name.to_string(), in_dim, hidden }
    }

    pub fn attach(name: &str, in_dim: usize, hidden: usize) -> LstmCell {
        LstmCell { name: name.to_string(), in_dim, hidden }
    }

    pub fn zero_state(&self, g: &mut Graph) -> LstmState {
        LstmState {
            h: g.constant(Tensor::zeros(Shape::Vector(self.hidden))),
            c: g.constant(Tensor::zeros(Shape::Vector(self.hidden))),
        }
    }

    pub fn apply(&self, g: &mut Graph, store: &ParameterStore, x: NodeId, state: LstmState) -> Result<LstmState> {
        if g.shape(x) != Shape::Vector(self.in_dim) || g.shape(state.h) != Shape::Vector(self.hidden) {
            return Err(Error::shape(
                &self.name,
                format!("x vec[{}], h vec[{}]", self.in_dim, self.hidden),
                format!("x {}, h {}", g.shape(x), g.shape(state.h)),
            ));
        }
        let n = self.hidden;
        let wx = g.param(store, &format!("{}.wx", self.name))?;
        let wh = g.param(store, &format!("{}.wh", self.name))?;
        let b = g.param(store, &format!("{}.b", self.name))?;
        let zx = g.matvec(wx, x);
        let zh = g.matvec(wh, state.h);
        let zs = g.add(zx, zh);
        let z = g.add(zs, b);

        let pre_i = g.slice(z, 0, n);
        let i = g.sigmoid(pre_i);
        let pre_f = g.slice(z, n, n);
        let f = g.sigmoid(pre_f);
        let pre_g = g.slice(z, 2 * n, n);
        let cand = g.tanh(pre_g);
        let pre_o = g.slice(z, 3 * n, n);
        let o = g.sigmoid(pre_o);

        let keep = g.mul(f, state.c);
        let write = g.mul(i, cand);
        let c = g.add(keep, write);
        let ct = g.tanh(c);
        let h = g.mul(o, ct);
        Ok(LstmState { h, c })
    }
}

/// Embedding matrix (`rows` x `dim`), one row per symbol.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub name: String,
    pub rows: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn init(store: &mut ParameterStore, rng: &mut ChaCha8Rng, name: &str, rows: usize, dim: usize) -> Embedding {
        store.insert(name.to_string(), glorot(rng, rows, dim));
        Embedding { name: name.to_string(), rows, dim }
    }

    pub fn attach(name: &str, rows: usize, dim: usize) -> Embedding {
        Embedding { name: name.to_string(), rows, dim }
    }

    pub fn lookup(&self, g: &mut Graph, store: &ParameterStore, index: usize) -> Result<NodeId> {
        if index >= self.rows {
            return Err(Error::Invalid(format!(
                "{}: index {index} out of range ({} rows)",
                self.name, self.rows
            )));
        }
        let m = g.param(store, &self.name)?;
        Ok(g.row(m, index))
    }
}
