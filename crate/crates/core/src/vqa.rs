//! The answering model: question encoder, object attention, fused joint
//! representation and sigmoid answer scores. Trained once, then frozen;
//! every later stage treats it as a fixed function.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, Dense, Embedding, Graph, GruCell, NodeId, ParameterStore, Shape, Tensor};
use crate::toyworld::{Dataset, QaItem, Scene};
use crate::{par, rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VqaConfig {
    pub question_vocab: usize,
    pub num_answers: usize,
    pub feat_dim: usize,
    pub embed_dim: usize,
    pub gru_hidden: usize,
    pub attn_hidden: usize,
    pub joint_dim: usize,
    pub seed: u64,
}

impl VqaConfig {
    pub fn for_dataset(ds: &Dataset) -> VqaConfig {
        VqaConfig {
            question_vocab: ds.vocab.len(),
            num_answers: ds.vocab.answers.len(),
            feat_dim: ds.config.feature_dim,
            embed_dim: 32,
            gru_hidden: 64,
            attn_hidden: 32,
            joint_dim: 64,
            seed: 1,
        }
    }
}

/// Graph nodes of one forward pass, kept so gradients can be taken.
pub struct VqaNodes {
    pub v: Vec<NodeId>,
    pub q: NodeId,
    pub alpha: NodeId,
    pub vq: Vec<NodeId>,
    pub h: NodeId,
    /// Answer logits.
    pub s: NodeId,
    pub p: NodeId,
}

/// Value-level snapshot of a forward pass.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VqaForward {
    pub q: Vec<f64>,
    pub alpha: Vec<f64>,
    pub vq: Vec<Vec<f64>>,
    pub h: Vec<f64>,
    pub s: Vec<f64>,
    pub p: Vec<f64>,
    pub answer: u32,
}

pub struct VqaModel {
    pub cfg: VqaConfig,
    embed: Embedding,
    gru: GruCell,
    attn_v: Dense,
    attn_q: Dense,
    attn_s: Dense,
    fuse_q: Dense,
    fuse_v: Dense,
    clf: Dense,
}

impl VqaModel {
    /// Fresh parameters in `store`.
    pub fn init(cfg: VqaConfig, store: &mut ParameterStore) -> VqaModel {
        let mut r = rng::stream(cfg.seed, "vqa-init", 0);
        let embed = Embedding::init(store, &mut r, "vqa.q_embed", cfg.question_vocab, cfg.embed_dim);
        let gru = GruCell::init(store, &mut r, "vqa.gru", cfg.embed_dim, cfg.gru_hidden);
        let attn_v = Dense::init(store, &mut r, "vqa.attn_v", cfg.feat_dim, cfg.attn_hidden, Activation::Identity);
        let attn_q = Dense::init(store, &mut r, "vqa.attn_q", cfg.gru_hidden, cfg.attn_hidden, Activation::Identity);
        let attn_s = Dense::init(store, &mut r, "vqa.attn_s", cfg.attn_hidden, 1, Activation::Identity);
        let fuse_q = Dense::init(store, &mut r, "vqa.fuse_q", cfg.gru_hidden, cfg.joint_dim, Activation::Tanh);
        let fuse_v = Dense::init(store, &mut r, "vqa.fuse_v", cfg.feat_dim, cfg.joint_dim, Activation::Tanh);
        let clf = Dense::init(store, &mut r, "vqa.clf", cfg.joint_dim, cfg.num_answers, Activation::Identity);
        VqaModel { cfg, embed, gru, attn_v, attn_q, attn_s, fuse_q, fuse_v, clf }
    }

    /// Handle over parameters that already exist (a loaded checkpoint).
    pub fn attach(cfg: VqaConfig) -> VqaModel {
        let embed = Embedding::attach("vqa.q_embed", cfg.question_vocab, cfg.embed_dim);
        let gru = GruCell::attach("vqa.gru", cfg.embed_dim, cfg.gru_hidden);
        let attn_v = Dense::attach("vqa.attn_v", cfg.feat_dim, cfg.attn_hidden, Activation::Identity);
        let attn_q = Dense::attach("vqa.attn_q", cfg.gru_hidden, cfg.attn_hidden, Activation::Identity);
        let attn_s = Dense::attach("vqa.attn_s", cfg.attn_hidden, 1, Activation::Identity);
        let fuse_q = Dense::attach("vqa.fuse_q", cfg.gru_hidden, cfg.joint_dim, Activation::Tanh);
        let fuse_v = Dense::attach("vqa.fuse_v", cfg.feat_dim, cfg.joint_dim, Activation::Tanh);
        let clf = Dense::attach("vqa.clf", cfg.joint_dim, cfg.num_answers, Activation::Identity);
        VqaModel { cfg, embed, gru, attn_v, attn_q, attn_s, fuse_q, fuse_v, clf }
    }

    /// Final GRU hidden state over the embedded question; zero state for an
    /// empty question.
    pub fn encode_question(&self, g: &mut Graph, store: &ParameterStore, tokens: &[u32]) -> Result<NodeId> {
        let mut h = self.gru.zero_state(g);
        for &t in tokens {
            if t as usize >= self.cfg.question_vocab {
                return Err(Error::Invalid(format!(
                    "question token {t} outside vocabulary of {}",
                    self.cfg.question_vocab
                )));
            }
            let x = self.embed.lookup(g, store, t as usize)?;
            h = self.gru.apply(g, store, x, h)?;
        }
        Ok(h)
    }

    /// Attention over objects and the attended per-object features.
    fn attend(
        &self,
        g: &mut Graph,
        store: &ParameterStore,
        v: &[NodeId],
        q: NodeId,
    ) -> Result<(NodeId, Vec<NodeId>)> {
        let pq = self.attn_q.apply(g, store, q)?;
        let mut scores = Vec::with_capacity(v.len());
        for &vi in v {
            let pv = self.attn_v.apply(g, store, vi)?;
            let sum = g.add(pv, pq);
            let act = g.tanh(sum);
            let e = self.attn_s.apply(g, store, act)?;
            scores.push(g.reshape(e, Shape::Scalar));
        }
        let stacked = g.concat(&scores);
        let alpha = g.softmax(stacked);
        let vq = v
            .iter()
            .enumerate()
            .map(|(i, &vi)| {
                let a = g.at(alpha, i);
                g.scale(vi, a)
            })
            .collect();
        Ok((alpha, vq))
    }

    /// Joint representation and answer scores from attended features.
    pub(crate) fn fuse_and_score(
        &self,
        g: &mut Graph,
        store: &ParameterStore,
        vq: &[NodeId],
        q: NodeId,
    ) -> Result<(NodeId, NodeId, NodeId)> {
        let mut pooled = vq[0];
        for &x in &vq[1..] {
            pooled = g.add(pooled, x);
        }
        let fq = self.fuse_q.apply(g, store, q)?;
        let fv = self.fuse_v.apply(g, store, pooled)?;
        let h = g.mul(fq, fv);
        let s = self.clf.apply(g, store, h)?;
        let p = g.sigmoid(s);
        Ok((h, s, p))
    }

    /// Full forward pass over a scene's feature vectors.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParameterStore,
        features: &[Vec<f64>],
        question_tokens: &[u32],
    ) -> Result<VqaNodes> {
        if features.is_empty() {
            return Err(Error::Degenerate("forward pass over zero objects".into()));
        }
        for (i, f) in features.iter().enumerate() {
            if f.len() != self.cfg.feat_dim {
                return Err(Error::shape(
                    format!("object {i} features"),
                    format!("vec[{}]", self.cfg.feat_dim),
                    format!("vec[{}]", f.len()),
                ));
            }
        }
        let v: Vec<NodeId> = features
            .iter()
            .map(|f| g.constant(Tensor::vector(f.clone())))
            .collect();
        let q = self.encode_question(g, store, question_tokens)?;
        let (alpha, vq) = self.attend(g, store, &v, q)?;
        let (h, s, p) = self.fuse_and_score(g, store, &vq, q)?;
        Ok(VqaNodes { v, q, alpha, vq, h, s, p })
    }

    /// Forward pass on a scene, values only.
    pub fn forward_scene(&self, store: &ParameterStore, scene: &Scene, question_tokens: &[u32]) -> Result<VqaForward> {
        let features: Vec<Vec<f64>> = scene.objects.iter().map(|o| o.features.clone()).collect();
        let mut g = Graph::new();
        let nodes = self.forward(&mut g, store, &features, question_tokens)?;
        Ok(snapshot(&g, &nodes))
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn snapshot(g: &Graph, nodes: &VqaNodes) -> VqaForward {
    let p = g.value(nodes.p).data().to_vec();
    VqaForward {
        q: g.value(nodes.q).data().to_vec(),
        alpha: g.value(nodes.alpha).data().to_vec(),
        vq: nodes.vq.iter().map(|&n| g.value(n).data().to_vec()).collect(),
        h: g.value(nodes.h).data().to_vec(),
        s: g.value(nodes.s).data().to_vec(),
        answer: argmax(&p) as u32,
        p,
    }
}

/// Gradient of the chosen answer logit with respect to each attended
/// feature vector, the raw material of gradient attribution.
pub fn answer_logit_gradients(
    g: &mut Graph,
    nodes: &VqaNodes,
    answer_id: u32,
) -> Result<Vec<Vec<f64>>> {
    let n = g.value(nodes.s).len();
    if answer_id as usize >= n {
        return Err(Error::Invalid(format!(
            "answer id {answer_id} out of range ({n} answers)"
        )));
    }
    let logit = g.at(nodes.s, answer_id as usize);
    let grads = g.grad(logit, &nodes.vq);
    Ok(grads.into_iter().map(|id| g.value(id).data().to_vec()).collect())
}

/// Binary cross-entropy over sigmoid scores against a one-hot target,
/// written in softplus form for stability.
fn bce_loss(g: &mut Graph, s: NodeId, answer_id: usize) -> NodeId {
    let sp = g.softplus(s);
    let total = g.sum(sp);
    let sy = g.at(s, answer_id);
    g.sub(total, sy)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VqaEpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VqaTrainReport {
    pub epochs: Vec<VqaEpochStats>,
    pub final_train_accuracy: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VqaTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for VqaTrainConfig {
    fn default() -> Self {
        VqaTrainConfig { epochs: 8, batch_size: 128, lr: 0.001, seed: 11 }
    }
}

fn item_loss_grads(
    model: &VqaModel,
    store: &ParameterStore,
    item: &QaItem,
) -> Result<(f64, std::collections::BTreeMap<String, Tensor>, bool)> {
    let features: Vec<Vec<f64>> = item.scene.objects.iter().map(|o| o.features.clone()).collect();
    let mut g = Graph::new();
    let nodes = model.forward(&mut g, store, &features, &item.question_tokens)?;
    let loss = bce_loss(&mut g, nodes.s, item.answer_id as usize);
    let loss_v = g.value(loss).item();
    let correct = argmax(g.value(nodes.p).data()) == item.answer_id as usize;
    let grads = g.param_grads(loss);
    Ok((loss_v, grads, correct))
}

/// Train a fresh answering model and freeze it.
pub fn pretrain_vqa(
    train: &[QaItem],
    cfg: VqaConfig,
    tc: &VqaTrainConfig,
) -> Result<(VqaModel, ParameterStore, VqaTrainReport)> {
    use rand::seq::SliceRandom;

    if train.is_empty() {
        return Err(Error::Config("empty training split".into()));
    }
    let mut store = ParameterStore::new();
    let model = VqaModel::init(cfg, &mut store);
    let mut adam = crate::nn::Adam::new();
    let mut epochs = Vec::with_capacity(tc.epochs);
    for epoch in 0..tc.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng::stream(tc.seed, "vqa-epoch", epoch as u64));
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(tc.batch_size) {
            let results = par::map(batch, |&i| item_loss_grads(&model, &store, &train[i]));
            let mut batch_loss = 0.0;
            let mut acc: std::collections::BTreeMap<String, Tensor> = std::collections::BTreeMap::new();
            for r in results {
                let (l, grads, ok) = r?;
                batch_loss += l;
                correct += ok as usize;
                for (name, grad) in grads {
                    match acc.get_mut(&name) {
                        Some(t) => {
                            for (a, b) in t.data_mut().iter_mut().zip(grad.data()) {
                                *a += b;
                            }
                        }
                        None => {
                            acc.insert(name, grad);
                        }
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for t in acc.values_mut() {
                for x in t.data_mut() {
                    *x *= scale;
                }
            }
            batch_loss *= scale;
            if !batch_loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite VQA loss at epoch {epoch} (lr {})",
                    tc.lr
                )));
            }
            loss_sum += batch_loss * batch.len() as f64;
            adam.step(&mut store, &acc, tc.lr);
        }
        epochs.push(VqaEpochStats {
            epoch,
            mean_loss: loss_sum / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
        });
    }
    store.freeze_all();
    let final_train_accuracy = epochs.last().map(|e| e.train_accuracy).unwrap_or(0.0);
    Ok((model, store, VqaTrainReport { epochs, final_train_accuracy }))
}

/// Fraction of items whose argmax answer matches the gold answer.
pub fn accuracy(model: &VqaModel, store: &ParameterStore, items: &[QaItem]) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::Degenerate("accuracy over zero items".into()));
    }
    let results = par::map(items, |item| {
        model
            .forward_scene(store, &item.scene, &item.question_tokens)
            .map(|f| f.answer == item.answer_id)
    });
    let mut hits = 0usize;
    for r in results {
        hits += r? as usize;
    }
    Ok(hits as f64 / items.len() as f64)
}

/// Accuracy of always answering the most common training answer.
pub fn majority_baseline(train: &[QaItem], eval: &[QaItem]) -> f64 {
    let mut counts = std::collections::BTreeMap::new();
    for item in train {
        *counts.entry(item.answer_id).or_insert(0usize) += 1;
    }
    let Some((&majority, _)) = counts.iter().max_by_key(|(_, &c)| c) else {
        return 0.0;
    };
    eval.iter().filter(|i| i.answer_id == majority).count() as f64 / eval.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toyworld::{generator, GenConfig, Vocabulary};

    fn small_setup() -> (GenConfig, Vocabulary, VqaModel, ParameterStore) {
        let cfg = GenConfig { feature_dim: 8, ..GenConfig::default() };
        let vocab = Vocabulary::build(&cfg);
        let vc = VqaConfig {
            question_vocab: vocab.len(),
            num_answers: vocab.answers.len(),
            feat_dim: 8,
            embed_dim: 6,
            gru_hidden: 10,
            attn_hidden: 5,
            joint_dim: 7,
            seed: 2,
        };
        let mut store = ParameterStore::new();
        let model = VqaModel::init(vc, &mut store);
        (cfg, vocab, model, store)
    }

    #[test]
    fn empty_question_encodes_to_zero_state() {
        let (_, _, model, store) = small_setup();
        let mut g = Graph::new();
        let q = model.encode_question(&mut g, &store, &[]).unwrap();
        assert!(g.value(q).data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn question_encoding_is_order_sensitive_and_deterministic() {
        let (_, vocab, model, store) = small_setup();
        let a = vocab.id("is").unwrap();
        let b = vocab.id("there").unwrap();
        let mut g = Graph::new();
        let q1 = model.encode_question(&mut g, &store, &[a, b]).unwrap();
        let q2 = model.encode_question(&mut g, &store, &[b, a]).unwrap();
        let q3 = model.encode_question(&mut g, &store, &[a, b]).unwrap();
        assert_ne!(g.value(q1).data(), g.value(q2).data());
        assert_eq!(g.value(q1).data(), g.value(q3).data());
    }

    #[test]
    fn unknown_token_is_a_vocabulary_error() {
        let (_, _, model, store) = small_setup();
        let mut g = Graph::new();
        let huge = model.cfg.question_vocab as u32;
        assert!(model.encode_question(&mut g, &store, &[huge]).is_err());
    }

    #[test]
    fn single_object_gets_all_attention() {
        let (_, vocab, model, store) = small_setup();
        let mut g = Graph::new();
        let features = vec![vec![0.5; 8]];
        let toks = [vocab.id("is").unwrap()];
        let nodes = model.forward(&mut g, &store, &features, &toks).unwrap();
        assert_eq!(g.value(nodes.alpha).data(), &[1.0]);
    }

    #[test]
    fn duplicate_objects_share_attention_equally() {
        let (_, vocab, model, store) = small_setup();
        let mut g = Graph::new();
        let f = vec![0.3, 1.2, 0.0, 0.7, 0.1, 0.9, 0.2, 0.4];
        let features = vec![f.clone(), f.clone(), f];
        let toks = [vocab.id("what").unwrap(), vocab.id("color").unwrap()];
        let nodes = model.forward(&mut g, &store, &features, &toks).unwrap();
        let alpha = g.value(nodes.alpha).data();
        assert!((alpha[0] - alpha[1]).abs() < 1e-12);
        assert!((alpha[1] - alpha[2]).abs() < 1e-12);
        assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn attention_normalizes_and_probabilities_match_sigmoid() {
        let (cfg, vocab, model, store) = small_setup();
        let scene = generator::generate_scene(&mut rng::root(4), &cfg).unwrap();
        let toks = [vocab.id("how").unwrap(), vocab.id("many").unwrap(), vocab.category_tokens[0]];
        let fwd = model.forward_scene(&store, &scene, &toks).unwrap();
        assert!((fwd.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for (p, s) in fwd.p.iter().zip(&fwd.s) {
            assert!((p - 1.0 / (1.0 + (-s).exp())).abs() < 1e-12);
        }
        // vq_i = alpha_i * v_i
        for (i, o) in scene.objects.iter().enumerate() {
            for (a, b) in fwd.vq[i].iter().zip(&o.features) {
                assert!((a - fwd.alpha[i] * b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn permuting_objects_permutes_attention_and_keeps_logits() {
        let (cfg, vocab, model, store) = small_setup();
        let scene = generator::generate_scene(&mut rng::root(9), &cfg).unwrap();
        let toks = [vocab.id("is").unwrap(), vocab.id("there").unwrap(), vocab.id("a").unwrap(), vocab.category_tokens[2]];
        let fwd = model.forward_scene(&store, &scene, &toks).unwrap();
        let mut reversed = scene.clone();
        reversed.objects.reverse();
        let fwd_r = model.forward_scene(&store, &reversed, &toks).unwrap();
        let n = scene.objects.len();
        for i in 0..n {
            assert!((fwd.alpha[i] - fwd_r.alpha[n - 1 - i]).abs() < 1e-9);
        }
        for (a, b) in fwd.s.iter().zip(&fwd_r.s) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_objects_is_an_error() {
        let (_, _, model, store) = small_setup();
        let mut g = Graph::new();
        assert!(model.forward(&mut g, &store, &[], &[]).is_err());
    }

    #[test]
    fn out_of_range_answer_id_is_rejected() {
        let (_, vocab, model, store) = small_setup();
        let mut g = Graph::new();
        let features = vec![vec![0.1; 8]];
        let toks = [vocab.id("is").unwrap()];
        let nodes = model.forward(&mut g, &store, &features, &toks).unwrap();
        let bad = model.cfg.num_answers as u32;
        assert!(answer_logit_gradients(&mut g, &nodes, bad).is_err());
        assert!(answer_logit_gradients(&mut g, &nodes, 0).is_ok());
    }

    #[test]
    fn short_pretraining_reduces_loss_and_freezes() {
        let cfg = GenConfig { feature_dim: 8, num_objects: (2, 4), ..GenConfig::default() };
        let ds = generator::generate_dataset(&cfg, 31, 80).unwrap();
        let mut vc = VqaConfig::for_dataset(&ds);
        vc.embed_dim = 8;
        vc.gru_hidden = 12;
        vc.attn_hidden = 6;
        vc.joint_dim = 10;
        let tc = VqaTrainConfig { epochs: 3, batch_size: 16, lr: 0.001, seed: 3 };
        let (_, store, report) = pretrain_vqa(&ds.items, vc, &tc).unwrap();
        assert!(report.epochs.last().unwrap().mean_loss < report.epochs[0].mean_loss);
        assert!(report.epochs.iter().all(|e| e.mean_loss.is_finite()));
        let frozen = store.iter().all(|(_, p)| !p.trainable);
        assert!(frozen);
    }
}
