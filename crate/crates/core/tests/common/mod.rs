//! Finite-difference gradient oracles shared by the gradient suite and the
//! acceptance gate. Every check returns the worst relative error it saw and
//! panics past tolerance.

use std::collections::BTreeMap;

use mmexplain::explainer::{self, ExplainerConfig, ExplainerModel};
use mmexplain::faithfulness::{self, AttributionSource, AttributionVector, LossMode};
use mmexplain::nn::{
    Activation, Dense, Embedding, Graph, GruCell, LstmCell, NodeId, ParameterStore, Tensor,
};
use mmexplain::rng;
use mmexplain::vqa::{VqaConfig, VqaModel};

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-5;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Compare analytic parameter gradients against central differences of `f`
/// over every scalar in the store.
pub fn check_grads(
    store: &ParameterStore,
    analytic: &BTreeMap<String, Tensor>,
    f: impl Fn(&ParameterStore) -> f64,
    what: &str,
) -> f64 {
    let mut worst = 0.0f64;
    let mut nonzero = 0usize;
    let names: Vec<String> = store.names().cloned().collect();
    for name in &names {
        let len = store.get(name).unwrap().value.len();
        for i in 0..len {
            let mut plus = store.clone();
            plus.get_mut(name).unwrap().value.data_mut()[i] += H;
            let mut minus = store.clone();
            minus.get_mut(name).unwrap().value.data_mut()[i] -= H;
            let numeric = (f(&plus) - f(&minus)) / (2.0 * H);
            let ana = analytic.get(name).map(|t| t.data()[i]).unwrap_or(0.0);
            let err = rel_err(ana, numeric);
            assert!(
                err < TOL,
                "{what}: {name}[{i}] analytic {ana} vs numeric {numeric} (rel {err:.2e})"
            );
            worst = worst.max(err);
            if ana.abs() > 1e-9 {
                nonzero += 1;
            }
        }
    }
    assert!(nonzero > 0, "{what}: all gradients vanished, fixture degenerate");
    worst
}

pub fn fixed_vec(seed: u64, label: &str, len: usize) -> Vec<f64> {
    use rand::Rng;
    let mut r = rng::stream(seed, label, 0);
    (0..len).map(|_| r.gen_range(-1.0..1.0)).collect()
}

pub fn check_dense(act: Activation) -> f64 {
    let mut store = ParameterStore::new();
    let mut r = rng::stream(11, "dense", 0);
    let layer = Dense::init(&mut store, &mut r, "fc", 4, 3, act);
    let x = fixed_vec(1, "x", 4);
    let w = fixed_vec(2, "w", 3);
    let eval = |store: &ParameterStore, g: &mut Graph| -> (NodeId, f64) {
        let xn = g.constant(Tensor::vector(x.clone()));
        let y = layer.apply(g, store, xn).unwrap();
        let wn = g.constant(Tensor::vector(w.clone()));
        let loss = g.dot(y, wn);
        let v = g.value(loss).item();
        (loss, v)
    };
    let mut g = Graph::new();
    let (loss, _) = eval(&store, &mut g);
    let analytic = g.param_grads(loss);
    check_grads(
        &store,
        &analytic,
        |s| eval(s, &mut Graph::new()).1,
        &format!("dense {act:?}"),
    )
}

pub fn check_gru() -> f64 {
    let mut store = ParameterStore::new();
    let mut r = rng::stream(12, "gru", 0);
    let cell = GruCell::init(&mut store, &mut r, "gru", 3, 4);
    let x0 = fixed_vec(3, "x0", 3);
    let x1 = fixed_vec(4, "x1", 3);
    let w = fixed_vec(5, "w", 4);
    let eval = |store: &ParameterStore, g: &mut Graph| -> (NodeId, f64) {
        let h0 = cell.zero_state(g);
        let a = g.constant(Tensor::vector(x0.clone()));
        let b = g.constant(Tensor::vector(x1.clone()));
        let h1 = cell.apply(g, store, a, h0).unwrap();
        let h2 = cell.apply(g, store, b, h1).unwrap();
        let wn = g.constant(Tensor::vector(w.clone()));
        let loss = g.dot(h2, wn);
        let v = g.value(loss).item();
        (loss, v)
    };
    let mut g = Graph::new();
    let (loss, _) = eval(&store, &mut g);
    let analytic = g.param_grads(loss);
    check_grads(&store, &analytic, |s| eval(s, &mut Graph::new()).1, "gru")
}

pub fn check_lstm() -> f64 {
    let mut store = ParameterStore::new();
    let mut r = rng::stream(13, "lstm", 0);
    let cell = LstmCell::init(&mut store, &mut r, "lstm", 3, 4);
    let x0 = fixed_vec(6, "x0", 3);
    let x1 = fixed_vec(7, "x1", 3);
    let w = fixed_vec(8, "w", 4);
    let eval = |store: &ParameterStore, g: &mut Graph| -> (NodeId, f64) {
        let s0 = cell.zero_state(g);
        let a = g.constant(Tensor::vector(x0.clone()));
        let b = g.constant(Tensor::vector(x1.clone()));
        let s1 = cell.apply(g, store, a, s0).unwrap();
        let s2 = cell.apply(g, store, b, s1).unwrap();
        let wn = g.constant(Tensor::vector(w.clone()));
        let loss = g.dot(s2.h, wn);
        let v = g.value(loss).item();
        (loss, v)
    };
    let mut g = Graph::new();
    let (loss, _) = eval(&store, &mut g);
    let analytic = g.param_grads(loss);
    check_grads(&store, &analytic, |s| eval(s, &mut Graph::new()).1, "lstm")
}

pub fn check_embedding() -> f64 {
    let mut store = ParameterStore::new();
    let mut r = rng::stream(14, "embed", 0);
    let table = Embedding::init(&mut store, &mut r, "emb", 5, 3);
    let w = fixed_vec(9, "w", 3);
    let eval = |store: &ParameterStore, g: &mut Graph| -> (NodeId, f64) {
        let e2 = table.lookup(g, store, 2).unwrap();
        let e4 = table.lookup(g, store, 4).unwrap();
        let e2b = table.lookup(g, store, 2).unwrap();
        let s1 = g.add(e2, e4);
        let s2 = g.add(s1, e2b);
        let wn = g.constant(Tensor::vector(w.clone()));
        let loss = g.dot(s2, wn);
        let v = g.value(loss).item();
        (loss, v)
    };
    let mut g = Graph::new();
    let (loss, _) = eval(&store, &mut g);
    let analytic = g.param_grads(loss);
    check_grads(&store, &analytic, |s| eval(s, &mut Graph::new()).1, "embedding")
}

pub fn tiny_vqa() -> (VqaModel, ParameterStore, Vec<Vec<f64>>, Vec<u32>) {
    let cfg = VqaConfig {
        question_vocab: 7,
        num_answers: 3,
        feat_dim: 3,
        embed_dim: 3,
        gru_hidden: 4,
        attn_hidden: 3,
        joint_dim: 4,
        seed: 2,
    };
    let mut store = ParameterStore::new();
    let model = VqaModel::init(cfg, &mut store);
    let features = vec![fixed_vec(21, "f0", 3), fixed_vec(22, "f1", 3)];
    let question = vec![1u32, 3, 2];
    (model, store, features, question)
}

pub fn check_vqa_forward() -> f64 {
    let (model, store, features, question) = tiny_vqa();
    let w = fixed_vec(23, "w", 3);
    let eval = |store: &ParameterStore, g: &mut Graph| -> (NodeId, f64) {
        let nodes = model.forward(g, store, &features, &question).unwrap();
        let wn = g.constant(Tensor::vector(w.clone()));
        let loss = g.dot(nodes.p, wn);
        let v = g.value(loss).item();
        (loss, v)
    };
    let mut g = Graph::new();
    let (loss, _) = eval(&store, &mut g);
    let analytic = g.param_grads(loss);
    check_grads(&store, &analytic, |s| eval(s, &mut Graph::new()).1, "vqa")
}

pub fn tiny_explainer() -> (ExplainerModel, ParameterStore) {
    let cfg = ExplainerConfig {
        vocab_size: 9,
        num_answers: 3,
        feat_dim: 3,
        q_dim: 4,
        word_dim: 3,
        hidden: 4,
        attn_hidden: 3,
        max_len: 4,
        bos: 0,
        eos: 1,
        seed: 5,
    };
    let mut store = ParameterStore::new();
    let model = ExplainerModel::init(cfg, &mut store);
    (model, store)
}

pub fn check_explainer_losses() -> f64 {
    let (model, store) = tiny_explainer();
    let vq0 = fixed_vec(31, "vq0", 3);
    let vq1 = fixed_vec(32, "vq1", 3);
    let ans = vec![1.0, 0.0, 0.0];
    let q = fixed_vec(33, "q", 4);
    let gold = vec![2u32, 5];
    let labels = vec![(0.0, 1.0), (1.0, 0.0)];
    let eval = |store: &ParameterStore, g: &mut Graph| -> (NodeId, f64) {
        let v0 = g.leaf(Tensor::vector(vq0.clone()));
        let v1 = g.leaf(Tensor::vector(vq1.clone()));
        let a = g.constant(Tensor::vector(ans.clone()));
        let qn = g.constant(Tensor::vector(q.clone()));
        let fused = model.fuse_qa(g, store, &[v0, v1], a, qn).unwrap();
        let (steps, targets) = model.teacher_force(g, store, &fused, &gold).unwrap();
        let xe = explainer::xe_loss(g, &steps, &targets).unwrap();
        let ls = explainer::source_loss(g, &steps, &labels).unwrap();
        let loss = g.add(xe, ls);
        let v = g.value(loss).item();
        (loss, v)
    };
    let mut g = Graph::new();
    let (loss, _) = eval(&store, &mut g);
    let analytic = g.param_grads(loss);
    check_grads(&store, &analytic, |s| eval(s, &mut Graph::new()).1, "explainer")
}

/// Answer-path attribution against a numeric input jacobian on
/// score = tanh(w.vq0) + 0.5 (u.vq1) + exp(0.25 (w.vq0)(u.vq1)).
pub fn check_gradcam_answer() -> f64 {
    let w = fixed_vec(41, "w", 3);
    let u = fixed_vec(42, "u", 3);
    let vq = vec![fixed_vec(43, "vq0", 3), fixed_vec(44, "vq1", 3)];
    let score_of = |vq: &[Vec<f64>]| -> f64 {
        let d0: f64 = vq[0].iter().zip(&w).map(|(a, b)| a * b).sum();
        let d1: f64 = vq[1].iter().zip(&u).map(|(a, b)| a * b).sum();
        d0.tanh() + 0.5 * d1 + (0.25 * d0 * d1).exp()
    };
    let mut g = Graph::new();
    let v0 = g.leaf(Tensor::vector(vq[0].clone()));
    let v1 = g.leaf(Tensor::vector(vq[1].clone()));
    let wn = g.constant(Tensor::vector(w.clone()));
    let un = g.constant(Tensor::vector(u.clone()));
    let d0 = g.dot(v0, wn);
    let d1 = g.dot(v1, un);
    let t = g.tanh(d0);
    let half = g.mul_const(d1, 0.5);
    let prod = g.mul(d0, d1);
    let quarter = g.mul_const(prod, 0.25);
    let smooth = g.exp(quarter);
    let s1 = g.add(t, half);
    let score = g.add(s1, smooth);
    let attr =
        faithfulness::gradcam(&mut g, score, &[v0, v1], AttributionSource::Answer).unwrap();
    gradcam_vs_jacobian(&vq, &attr.values, score_of, "answer path")
}

/// Explanation-path attribution: the sequence log-probability of a
/// teacher-forced explanation, differentiated w.r.t. the attended features.
pub fn check_gradcam_explanation() -> f64 {
    let (model, store) = tiny_explainer();
    let vq = vec![fixed_vec(51, "vq0", 3), fixed_vec(52, "vq1", 3)];
    let ans = vec![0.0, 1.0, 0.0];
    let q = fixed_vec(53, "q", 4);
    let gold = vec![3u32, 7, 2];

    let logprob_of = |vq: &[Vec<f64>]| -> f64 {
        let mut g = Graph::new();
        let nodes: Vec<NodeId> =
            vq.iter().map(|v| g.leaf(Tensor::vector(v.clone()))).collect();
        let a = g.constant(Tensor::vector(ans.clone()));
        let qn = g.constant(Tensor::vector(q.clone()));
        let fused = model.fuse_qa(&mut g, &store, &nodes, a, qn).unwrap();
        let (steps, targets) = model.teacher_force(&mut g, &store, &fused, &gold).unwrap();
        let lp = explainer::sequence_log_prob(&mut g, &steps, &targets).unwrap();
        g.value(lp).item()
    };

    let mut g = Graph::new();
    let nodes: Vec<NodeId> = vq.iter().map(|v| g.leaf(Tensor::vector(v.clone()))).collect();
    let a = g.constant(Tensor::vector(ans.clone()));
    let qn = g.constant(Tensor::vector(q.clone()));
    let fused = model.fuse_qa(&mut g, &store, &nodes, a, qn).unwrap();
    let (steps, targets) = model.teacher_force(&mut g, &store, &fused, &gold).unwrap();
    let lp = explainer::sequence_log_prob(&mut g, &steps, &targets).unwrap();
    let attr =
        faithfulness::gradcam(&mut g, lp, &nodes, AttributionSource::Explanation).unwrap();
    gradcam_vs_jacobian(&vq, &attr.values, logprob_of, "explanation path")
}

fn gradcam_vs_jacobian(
    vq: &[Vec<f64>],
    got: &[f64],
    f: impl Fn(&[Vec<f64>]) -> f64,
    what: &str,
) -> f64 {
    let mut worst = 0.0f64;
    for (i, vq_i) in vq.iter().enumerate() {
        let mut jac = vec![0.0; vq_i.len()];
        for (j, slot) in jac.iter_mut().enumerate() {
            let mut plus = vq.to_vec();
            plus[i][j] += H;
            let mut minus = vq.to_vec();
            minus[i][j] -= H;
            *slot = (f(&plus) - f(&minus)) / (2.0 * H);
        }
        let inner: f64 = jac.iter().zip(vq_i).map(|(a, b)| a * b).sum();
        let expect = inner.max(0.0);
        let err = rel_err(got[i], expect);
        assert!(
            err < TOL,
            "{what}: object {i} attribution {} vs numeric {expect} (rel {err:.2e})",
            got[i]
        );
        worst = worst.max(err);
    }
    worst
}

/// Alignment-loss parameter gradients flow through the attribution's inner
/// gradient; checked on a five-parameter model where the full second-order
/// computation fits a finite-difference oracle.
pub fn check_second_order_alignment() -> f64 {
    // Both inner products with w stay positive so neither attribution is
    // relu-clipped; a clipped component would zero the whole gradient.
    let vq = vec![vec![0.6, 0.2, 0.4], vec![0.9, -0.3, 0.2]];
    let answer = AttributionVector {
        values: vec![1.0, 0.3],
        source: AttributionSource::Answer,
    };
    let mut store = ParameterStore::new();
    store.insert("w", Tensor::vector(vec![0.4, -0.7, 0.5]));
    store.insert("b", Tensor::vector(vec![0.1]));
    assert!(store.num_values() <= 10);

    let eval = |store: &ParameterStore, g: &mut Graph| -> (NodeId, f64) {
        let nodes: Vec<NodeId> =
            vq.iter().map(|v| g.leaf(Tensor::vector(v.clone()))).collect();
        let w = g.param(store, "w").unwrap();
        let b = g.param(store, "b").unwrap();
        let b0 = g.at(b, 0);
        let mut terms = Vec::new();
        for &n in &nodes {
            let d = g.dot(n, w);
            let shifted = g.add(d, b0);
            terms.push(g.tanh(shifted));
        }
        let score = g.add(terms[0], terms[1]);
        let loss =
            faithfulness::faithfulness_loss(g, &answer, score, &nodes, LossMode::Exact).unwrap();
        let v = g.value(loss).item();
        (loss, v)
    };
    let mut g = Graph::new();
    let (loss, start) = eval(&store, &mut g);
    assert!(start > 1e-4, "fixture starts at a stationary point");
    let analytic = g.param_grads(loss);
    check_grads(&store, &analytic, |s| eval(s, &mut Graph::new()).1, "alignment loss")
}
