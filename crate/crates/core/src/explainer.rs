//! Textual explanation decoder.
//!
//! Per sequence: the answer embedding and question state gate the attended
//! object features into fused features u_i. Per step: an attention LSTM
//! watches the previous language state, the mean fused feature and the
//! previous word; its hidden state drives both an attention over objects
//! and a two-way source identifier (visual vs. text); the language LSTM
//! consumes the source-gated pair and emits a word distribution.
//!
//! One deliberate wiring choice: the language LSTM's visual slot receives
//! the *attention-weighted* fused feature of the current step rather than
//! the mean. With the mean, the per-step attention would influence nothing
//! downstream and word-object links would be decoration; weighting by
//! attention makes the links part of the generative path.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, Dense, Embedding, Graph, LstmCell, LstmState, NodeId, ParameterStore, Shape, Tensor};
use crate::toyworld::{Scene, Vocabulary};
use crate::{rng, vqa};

pub const LOG_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnswerMode {
    Sample,
    Argmax,
}

/// One-hot answer embedding drawn from (rescaled) sigmoid probabilities.
pub fn sample_answer_embedding(p: &[f64], rng: &mut ChaCha8Rng, mode: AnswerMode) -> Result<Vec<f64>> {
    if p.is_empty() {
        return Err(Error::Degenerate("empty answer distribution".into()));
    }
    if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Degenerate("answer distribution must be finite and nonnegative".into()));
    }
    let total: f64 = p.iter().sum();
    if total <= 0.0 {
        return Err(Error::Degenerate("all-zero answer distribution".into()));
    }
    let idx = match mode {
        AnswerMode::Argmax => {
            let mut best = 0;
            for (i, &x) in p.iter().enumerate() {
                if x > p[best] {
                    best = i;
                }
            }
            best
        }
        AnswerMode::Sample => {
            let draw: f64 = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = p.len() - 1;
            for (i, &x) in p.iter().enumerate() {
                acc += x;
                if draw < acc {
                    chosen = i;
                    break;
                }
            }
            chosen
        }
    };
    let mut one_hot = vec![0.0; p.len()];
    one_hot[idx] = 1.0;
    Ok(one_hot)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplainerConfig {
    pub vocab_size: usize,
    pub num_answers: usize,
    pub feat_dim: usize,
    /// Question state dimension (the answering model's GRU hidden size).
    pub q_dim: usize,
    pub word_dim: usize,
    pub hidden: usize,
    pub attn_hidden: usize,
    pub max_len: usize,
    pub bos: u32,
    pub eos: u32,
    pub seed: u64,
}

impl ExplainerConfig {
    pub fn for_dataset(ds: &crate::toyworld::Dataset, vqa_cfg: &vqa::VqaConfig) -> ExplainerConfig {
        ExplainerConfig {
            vocab_size: ds.vocab.len(),
            num_answers: ds.vocab.answers.len(),
            feat_dim: ds.config.feature_dim,
            q_dim: vqa_cfg.gru_hidden,
            word_dim: 16,
            hidden: 64,
            attn_hidden: 32,
            max_len: 20,
            bos: ds.vocab.bos,
            eos: ds.vocab.eos,
            seed: 5,
        }
    }
}

pub struct ExplainerModel {
    pub cfg: ExplainerConfig,
    word_embed: Embedding,
    ans_fc: Dense,
    q_fc: Dense,
    attn_u: Dense,
    attn_h: Dense,
    attn_s: Dense,
    src: Dense,
    lstm1: LstmCell,
    lstm2: LstmCell,
    out: Dense,
}

impl ExplainerModel {
    pub fn init(cfg: ExplainerConfig, store: &mut ParameterStore) -> ExplainerModel {
        let mut r = rng::stream(cfg.seed, "expl-init", 0);
        let word_embed = Embedding::init(store, &mut r, "expl.word_embed", cfg.vocab_size, cfg.word_dim);
        let ans_fc = Dense::init(store, &mut r, "expl.ans_fc", cfg.num_answers, cfg.feat_dim, Activation::Identity);
        let q_fc = Dense::init(store, &mut r, "expl.q_fc", cfg.q_dim, cfg.feat_dim, Activation::Identity);
        let attn_u = Dense::init(store, &mut r, "expl.attn_u", cfg.feat_dim, cfg.attn_hidden, Activation::Identity);
        let attn_h = Dense::init(store, &mut r, "expl.attn_h", cfg.hidden, cfg.attn_hidden, Activation::Identity);
        let attn_s = Dense::init(store, &mut r, "expl.attn_s", cfg.attn_hidden, 1, Activation::Identity);
        let src = Dense::init(store, &mut r, "expl.src", cfg.hidden + cfg.feat_dim, 2, Activation::Sigmoid);
        let lstm1 = LstmCell::init(store, &mut r, "expl.lstm1", cfg.hidden + cfg.feat_dim + cfg.word_dim, cfg.hidden);
        let lstm2 = LstmCell::init(store, &mut r, "expl.lstm2", cfg.hidden + cfg.feat_dim, cfg.hidden);
        let out = Dense::init(store, &mut r, "expl.out", cfg.hidden, cfg.vocab_size, Activation::Identity);
        ExplainerModel { cfg, word_embed, ans_fc, q_fc, attn_u, attn_h, attn_s, src, lstm1, lstm2, out }
    }

    pub fn attach(cfg: ExplainerConfig) -> ExplainerModel {
        let word_embed = Embedding::attach("expl.word_embed", cfg.vocab_size, cfg.word_dim);
        let ans_fc = Dense::attach("expl.ans_fc", cfg.num_answers, cfg.feat_dim, Activation::Identity);
        let q_fc = Dense::attach("expl.q_fc", cfg.q_dim, cfg.feat_dim, Activation::Identity);
        let attn_u = Dense::attach("expl.attn_u", cfg.feat_dim, cfg.attn_hidden, Activation::Identity);
        let attn_h = Dense::attach("expl.attn_h", cfg.hidden, cfg.attn_hidden, Activation::Identity);
        let attn_s = Dense::attach("expl.attn_s", cfg.attn_hidden, 1, Activation::Identity);
        let src = Dense::attach("expl.src", cfg.hidden + cfg.feat_dim, 2, Activation::Sigmoid);
        let lstm1 = LstmCell::attach("expl.lstm1", cfg.hidden + cfg.feat_dim + cfg.word_dim, cfg.hidden);
        let lstm2 = LstmCell::attach("expl.lstm2", cfg.hidden + cfg.feat_dim, cfg.hidden);
        let out = Dense::attach("expl.out", cfg.hidden, cfg.vocab_size, Activation::Identity);
        ExplainerModel { cfg, word_embed, ans_fc, q_fc, attn_u, attn_h, attn_s, src, lstm1, lstm2, out }
    }
}

/// Fused features of one sequence: u_i, their mean, and the attention
/// projections reused at every step.
pub struct FusedFeatures {
    /// Attended feature leaves; gradients with respect to these drive the
    /// explanation-side attribution.
    pub vq: Vec<NodeId>,
    pub u: Vec<NodeId>,
    pub u_bar: NodeId,
    u_proj: Vec<NodeId>,
}

/// Graph nodes of one decode step.
pub struct StepNodes {
    pub h1: NodeId,
    pub h2: NodeId,
    pub alpha: NodeId,
    /// Two-vector (s0, s1).
    pub s: NodeId,
    pub word_dist: NodeId,
}

/// Value-level record of one step.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecodeStep {
    pub t: usize,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub alpha: Vec<f64>,
    pub s0: f64,
    pub s1: f64,
    pub word_dist: Vec<f64>,
    pub token: u32,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExplanationOutput {
    pub tokens: Vec<u32>,
    pub steps: Vec<DecodeStep>,
    /// `(word index, object_id)` pairs where the linking rule fired.
    pub links: Vec<(usize, u32)>,
}

impl ExplainerModel {
    /// u_i = vq_i ⊙ fc(a_s) ⊙ fc(q).
    pub fn fuse_qa(
        &self,
        g: &mut Graph,
        store: &ParameterStore,
        vq: &[NodeId],
        a_s: NodeId,
        q: NodeId,
    ) -> Result<FusedFeatures> {
        if vq.is_empty() {
            return Err(Error::Degenerate("fusion over zero objects".into()));
        }
        for &n in vq {
            if g.shape(n) != Shape::Vector(self.cfg.feat_dim) {
                return Err(Error::shape(
                    "fuse_qa vq",
                    format!("vec[{}]", self.cfg.feat_dim),
                    g.shape(n).to_string(),
                ));
            }
        }
        let fa = self.ans_fc.apply(g, store, a_s)?;
        let fq = self.q_fc.apply(g, store, q)?;
        let gate = g.mul(fa, fq);
        let u: Vec<NodeId> = vq.iter().map(|&v| g.mul(v, gate)).collect();
        let mut sum = u[0];
        for &x in &u[1..] {
            sum = g.add(sum, x);
        }
        let u_bar = g.mul_const(sum, 1.0 / u.len() as f64);
        let u_proj = u
            .iter()
            .map(|&ui| self.attn_u.apply(g, store, ui))
            .collect::<Result<Vec<_>>>()?;
        Ok(FusedFeatures { vq: vq.to_vec(), u, u_bar, u_proj })
    }

    /// alpha_t = softmax over fc(tanh(fc(u_i) + fc(h1))).
    pub fn attend_step(&self, g: &mut Graph, store: &ParameterStore, fused: &FusedFeatures, h1: NodeId) -> Result<NodeId> {
        let ph = self.attn_h.apply(g, store, h1)?;
        let mut scores = Vec::with_capacity(fused.u_proj.len());
        for &pu in &fused.u_proj {
            let sum = g.add(pu, ph);
            let act = g.tanh(sum);
            let e = self.attn_s.apply(g, store, act)?;
            scores.push(g.reshape(e, Shape::Scalar));
        }
        let stacked = g.concat(&scores);
        Ok(g.softmax(stacked))
    }

    /// s = σ(fc([h1, ū])): two independent sigmoids.
    pub fn identify_source(&self, g: &mut Graph, store: &ParameterStore, h1: NodeId, u_bar: NodeId) -> Result<NodeId> {
        let joint = g.concat(&[h1, u_bar]);
        self.src.apply(g, store, joint)
    }

    /// Language LSTM step over the source-gated pair `[h1·s0, visual·s1]`.
    pub fn language_step(
        &self,
        g: &mut Graph,
        store: &ParameterStore,
        h1: NodeId,
        visual: NodeId,
        s: NodeId,
        state: LstmState,
    ) -> Result<(LstmState, NodeId)> {
        let s0 = g.at(s, 0);
        let s1 = g.at(s, 1);
        let gated_h = g.scale(h1, s0);
        let gated_v = g.scale(visual, s1);
        let x2 = g.concat(&[gated_h, gated_v]);
        let next = self.lstm2.apply(g, store, x2, state)?;
        let logits = self.out.apply(g, store, next.h)?;
        let dist = g.softmax(logits);
        Ok((next, dist))
    }

    /// One decode step given the previous token and both LSTM states.
    fn step(
        &self,
        g: &mut Graph,
        store: &ParameterStore,
        fused: &FusedFeatures,
        prev_token: u32,
        state1: LstmState,
        state2: LstmState,
    ) -> Result<(StepNodes, LstmState, LstmState)> {
        let emb = self.word_embed.lookup(g, store, prev_token as usize)?;
        let x1 = g.concat(&[state2.h, fused.u_bar, emb]);
        let next1 = self.lstm1.apply(g, store, x1, state1)?;
        let h1 = next1.h;
        let alpha = self.attend_step(g, store, fused, h1)?;
        // attention-weighted visual context for the language LSTM
        let mut visual = {
            let a0 = g.at(alpha, 0);
            g.scale(fused.u[0], a0)
        };
        for (i, &ui) in fused.u.iter().enumerate().skip(1) {
            let ai = g.at(alpha, i);
            let term = g.scale(ui, ai);
            visual = g.add(visual, term);
        }
        let s = self.identify_source(g, store, h1, fused.u_bar)?;
        let (next2, dist) = self.language_step(g, store, h1, visual, s, state2)?;
        let nodes = StepNodes { h1, h2: next2.h, alpha, s, word_dist: dist };
        Ok((nodes, next1, next2))
    }

    /// Free-running decode. Greedy mode takes the argmax word; sample mode
    /// draws from the word distribution. Stops after emitting the end token
    /// (not recorded) or at `max_len` words.
    pub fn decode(
        &self,
        g: &mut Graph,
        store: &ParameterStore,
        fused: &FusedFeatures,
        mode: DecodeMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<StepNodes>, Vec<u32>)> {
        let mut steps = Vec::new();
        let mut tokens = Vec::new();
        let mut state1 = self.lstm1.zero_state(g);
        let mut state2 = self.lstm2.zero_state(g);
        let mut prev = self.cfg.bos;
        for _ in 0..self.cfg.max_len {
            let (nodes, next1, next2) = self.step(g, store, fused, prev, state1, state2)?;
            let dist = g.value(nodes.word_dist).data();
            let token = match mode {
                DecodeMode::Greedy => {
                    let mut best = 0;
                    for (i, &x) in dist.iter().enumerate() {
                        if x > dist[best] {
                            best = i;
                        }
                    }
                    best as u32
                }
                DecodeMode::Sample => {
                    let draw: f64 = rng.gen();
                    let mut acc = 0.0;
                    let mut chosen = dist.len() - 1;
                    for (i, &x) in dist.iter().enumerate() {
                        acc += x;
                        if draw < acc {
                            chosen = i;
                            break;
                        }
                    }
                    chosen as u32
                }
            };
            if token == self.cfg.eos {
                break;
            }
            steps.push(nodes);
            tokens.push(token);
            state1 = next1;
            state2 = next2;
            prev = token;
        }
        Ok((steps, tokens))
    }

    /// Teacher-forced pass: the gold prefix conditions every step; targets
    /// are the gold tokens followed by the end token.
    pub fn teacher_force(
        &self,
        g: &mut Graph,
        store: &ParameterStore,
        fused: &FusedFeatures,
        gold: &[u32],
    ) -> Result<(Vec<StepNodes>, Vec<u32>)> {
        let mut inputs = vec![self.cfg.bos];
        inputs.extend_from_slice(gold);
        let mut targets = gold.to_vec();
        targets.push(self.cfg.eos);
        let mut steps = Vec::with_capacity(inputs.len());
        let mut state1 = self.lstm1.zero_state(g);
        let mut state2 = self.lstm2.zero_state(g);
        for &prev in &inputs {
            let (nodes, next1, next2) = self.step(g, store, fused, prev, state1, state2)?;
            steps.push(nodes);
            state1 = next1;
            state2 = next2;
        }
        Ok((steps, targets))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Sample,
}

/// Extract a value-level record from decoded step nodes.
pub fn snapshot_output(g: &Graph, steps: &[StepNodes], tokens: &[u32]) -> ExplanationOutput {
    let steps = steps
        .iter()
        .zip(tokens)
        .enumerate()
        .map(|(t, (n, &token))| {
            let s = g.value(n.s).data();
            DecodeStep {
                t,
                h1: g.value(n.h1).data().to_vec(),
                h2: g.value(n.h2).data().to_vec(),
                alpha: g.value(n.alpha).data().to_vec(),
                s0: s[0],
                s1: s[1],
                word_dist: g.value(n.word_dist).data().to_vec(),
                token,
            }
        })
        .collect();
    ExplanationOutput {
        tokens: tokens.to_vec(),
        steps,
        links: Vec::new(),
    }
}

/// L_XE = −Σ_t log p(target_t), with ε-clamped logs.
pub fn xe_loss(g: &mut Graph, steps: &[StepNodes], targets: &[u32]) -> Result<NodeId> {
    if steps.len() != targets.len() {
        return Err(Error::Invalid(format!(
            "{} word distributions for {} targets",
            steps.len(),
            targets.len()
        )));
    }
    let mut terms = Vec::with_capacity(steps.len());
    for (node, &target) in steps.iter().zip(targets) {
        let p = g.at(node.word_dist, target as usize);
        let clamped = g.clamp_min(p, LOG_EPS);
        let lp = g.ln(clamped);
        terms.push(lp);
    }
    let stacked = g.concat(&terms);
    let total = g.sum(stacked);
    Ok(g.neg(total))
}

/// Sum of per-target log-probabilities (the explanation-side attribution
/// target; equals −L_XE but kept separate for clarity at call sites).
pub fn sequence_log_prob(g: &mut Graph, steps: &[StepNodes], targets: &[u32]) -> Result<NodeId> {
    let loss = xe_loss(g, steps, targets)?;
    Ok(g.neg(loss))
}

/// L_s = −Σ_t Σ_j [ŝ_j ln s_j + (1−ŝ_j) ln(1−s_j)] over word steps.
pub fn source_loss(g: &mut Graph, steps: &[StepNodes], labels: &[(f64, f64)]) -> Result<NodeId> {
    if labels.len() > steps.len() {
        return Err(Error::Invalid(format!(
            "{} source labels for {} steps",
            labels.len(),
            steps.len()
        )));
    }
    let mut terms = Vec::with_capacity(labels.len());
    for (node, &(l0, l1)) in steps.iter().zip(labels) {
        let s = node.s;
        let ones = g.constant(Tensor::vector(vec![1.0, 1.0]));
        let compl = g.sub(ones, s);
        let label = g.constant(Tensor::vector(vec![l0, l1]));
        let label_c = g.constant(Tensor::vector(vec![1.0 - l0, 1.0 - l1]));
        let sc = g.clamp_min(s, LOG_EPS);
        let cc = g.clamp_min(compl, LOG_EPS);
        let ls = g.ln(sc);
        let lc = g.ln(cc);
        let a = g.mul(label, ls);
        let b = g.mul(label_c, lc);
        let both = g.add(a, b);
        terms.push(g.sum(both));
    }
    let stacked = g.concat(&terms);
    let total = g.sum(stacked);
    Ok(g.neg(total))
}

/// Fixed word-embedding table used only for source labels and linking.
#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    pub dim: usize,
    vectors: Vec<Vec<f64>>,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

impl EmbeddingTable {
    /// Deterministic unit vectors per token. Category-name vectors are kept
    /// mutually separated and every other token is kept away from all of
    /// them, so the similarity threshold cleanly separates category words
    /// from the rest regardless of the seed.
    pub fn deterministic(vocab: &Vocabulary, dim: usize, seed: u64) -> EmbeddingTable {
        use rand_distr::{Distribution, Normal};
        let normal = Normal::new(0.0, 1.0).unwrap();
        let sample_unit = |label: &str, salt: u64| -> Vec<f64> {
            let mut r = rng::stream(seed, label, salt);
            let mut v: Vec<f64> = (0..dim).map(|_| normal.sample(&mut r)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in &mut v {
                *x /= n;
            }
            v
        };
        let cat_ids: Vec<usize> = vocab.category_tokens.iter().map(|&t| t as usize).collect();
        let mut vectors: Vec<Vec<f64>> = vec![Vec::new(); vocab.len()];
        let mut anchors: Vec<Vec<f64>> = Vec::new();
        for (k, &tok) in cat_ids.iter().enumerate() {
            let mut best: Option<Vec<f64>> = None;
            for salt in 0..64 {
                let v = sample_unit(&format!("cat-{k}"), salt);
                if anchors.iter().all(|a| cosine(a, &v).abs() < 0.3) {
                    best = Some(v);
                    break;
                }
            }
            let v = best.unwrap_or_else(|| sample_unit(&format!("cat-{k}"), 0));
            anchors.push(v.clone());
            vectors[tok] = v;
        }
        for tok in 0..vocab.len() {
            if !vectors[tok].is_empty() {
                continue;
            }
            let mut chosen = None;
            for salt in 0..64 {
                let v = sample_unit(&format!("tok-{tok}"), salt);
                if anchors.iter().all(|a| cosine(a, &v).abs() < 0.4) {
                    chosen = Some(v);
                    break;
                }
            }
            vectors[tok] = chosen.unwrap_or_else(|| sample_unit(&format!("tok-{tok}"), 0));
        }
        EmbeddingTable { dim, vectors }
    }

    pub fn from_vectors(vectors: Vec<Vec<f64>>) -> Result<EmbeddingTable> {
        let dim = vectors.first().map(|v| v.len()).unwrap_or(0);
        if dim == 0 || vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::Invalid("embedding vectors must share a positive dimension".into()));
        }
        Ok(EmbeddingTable { dim, vectors })
    }

    /// Parse lines of `token v1 v2 ... vE`; every vocabulary token must be
    /// covered.
    pub fn from_file(path: &std::path::Path, vocab: &Vocabulary) -> Result<EmbeddingTable> {
        let text = std::fs::read_to_string(path)?;
        let mut by_token: std::collections::BTreeMap<&str, Vec<f64>> = std::collections::BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let tok = parts.next().ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg: "empty line".into(),
            })?;
            let vals: std::result::Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
            let vals = vals.map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg: format!("bad float: {e}"),
            })?;
            by_token.insert(tok, vals);
        }
        let mut vectors = Vec::with_capacity(vocab.len());
        for tok in &vocab.tokens {
            let v = by_token
                .get(tok.as_str())
                .ok_or_else(|| Error::Invalid(format!("embedding file misses token '{tok}'")))?;
            vectors.push(v.clone());
        }
        EmbeddingTable::from_vectors(vectors)
    }

    pub fn get(&self, token: u32) -> &[f64] {
        &self.vectors[token as usize]
    }

    pub fn cosine_tokens(&self, a: u32, b: u32) -> f64 {
        cosine(self.get(a), self.get(b))
    }
}

/// Default similarity threshold for source labels; the boundary counts as
/// visual (inclusive).
pub const SOURCE_TAU: f64 = 0.6;

/// Per-word source labels: ŝ1 = 1 iff some scene object's category-name
/// embedding has cosine ≥ τ with the word embedding; ŝ0 = 1 − ŝ1.
pub fn source_labels(
    tokens: &[u32],
    scene: &Scene,
    table: &EmbeddingTable,
    vocab: &Vocabulary,
    tau: f64,
) -> Result<Vec<(f64, f64)>> {
    let mut present_cats: Vec<u32> = scene.objects.iter().map(|o| o.category_id).collect();
    present_cats.sort_unstable();
    present_cats.dedup();
    let cat_tokens: Vec<u32> = present_cats
        .iter()
        .map(|&c| {
            vocab
                .category_tokens
                .get(c as usize)
                .copied()
                .ok_or_else(|| Error::Invalid(format!("category {c} has no name token")))
        })
        .collect::<Result<Vec<_>>>()?;
    tokens
        .iter()
        .map(|&w| {
            if w as usize >= vocab.len() {
                return Err(Error::Invalid(format!("token {w} outside vocabulary")));
            }
            let visual = cat_tokens.iter().any(|&c| table.cosine_tokens(w, c) >= tau);
            Ok(if visual { (0.0, 1.0) } else { (1.0, 0.0) })
        })
        .collect()
}
