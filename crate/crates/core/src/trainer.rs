//! Joint training of the explanation decoder against a frozen answering
//! model: per batch, candidates from wrongly answered items are discarded,
//! the rest are filtered by faithfulness score against a ramping threshold,
//! and survivors contribute L = L_XE + L_s + L_f (mode-dependent terms).

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::explainer::{self, AnswerMode, EmbeddingTable, ExplainerConfig, ExplainerModel, StepNodes};
use crate::faithfulness::{
    self, filter, filter_threshold, AttributionSource, AttributionVector, FilterDecision,
    FilterReason, LossMode,
};
use crate::nn::{checkpoint, Adam, Graph, NodeId, ParameterStore, Tensor};
use crate::toyworld::{Dataset, QaItem};
use crate::vqa::VqaModel;
use crate::{par, rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// No score filtering, no alignment loss (wrong answers still discarded).
    Random,
    /// Score filtering on, alignment loss off.
    Filtered,
    /// Score filtering and alignment loss.
    FilteredLf,
}

impl TrainMode {
    pub fn parse(s: &str) -> Result<TrainMode> {
        match s {
            "random" => Ok(TrainMode::Random),
            "filtered" => Ok(TrainMode::Filtered),
            "filtered_lf" => Ok(TrainMode::FilteredLf),
            other => Err(Error::Config(format!(
                "unknown mode '{other}' (expected random, filtered or filtered_lf)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TrainMode::Random => "random",
            TrainMode::Filtered => "filtered",
            TrainMode::FilteredLf => "filtered_lf",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub xi: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub decay_every: usize,
    pub seed: u64,
    pub w_xe: f64,
    pub w_s: f64,
    pub w_f: f64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            mode: TrainMode::Filtered,
            xi: 0.3,
            epochs: 25,
            batch_size: 128,
            lr: 5e-4,
            lr_decay: 0.8,
            decay_every: 3,
            seed: 13,
            w_xe: 1.0,
            w_s: 1.0,
            w_f: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.xi) {
            return Err(Error::Config(format!("xi must lie in [0,1], got {}", self.xi)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return Err(Error::Config(format!("bad learning rate {}", self.lr)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(format!("lr_decay must lie in (0,1], got {}", self.lr_decay)));
        }
        if self.decay_every == 0 {
            return Err(Error::Config("decay_every must be positive".into()));
        }
        for (name, w) in [("w_xe", self.w_xe), ("w_s", self.w_s), ("w_f", self.w_f)] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and nonnegative, got {w}")));
            }
        }
        Ok(())
    }

    /// Score threshold coefficient actually applied (random mode never filters).
    fn effective_xi(&self) -> f64 {
        match self.mode {
            TrainMode::Random => 0.0,
            _ => self.xi,
        }
    }

    /// Alignment-loss weight actually applied (only the full mode uses it).
    fn effective_wf(&self) -> f64 {
        match self.mode {
            TrainMode::FilteredLf => self.w_f,
            _ => 0.0,
        }
    }

    pub fn lr_for_epoch(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi((epoch / self.decay_every) as i32)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    pub mean_xe: f64,
    pub mean_source_loss: f64,
    pub mean_alignment_loss: f64,
    pub mean_score: f64,
    pub accepted_fraction: f64,
    pub candidates: usize,
    pub accepted: usize,
    pub wrong_answer: usize,
    pub low_score: usize,
    pub batches: usize,
    pub skipped_batches: usize,
}

/// Acceptance counts against the generator's faithfulness flags. Rejection
/// is the positive prediction and distractor the positive class. Reporting
/// only; the trainer never reads these flags while optimizing.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterConfusion {
    pub faithful_accepted: usize,
    pub faithful_rejected: usize,
    pub distractor_accepted: usize,
    pub distractor_rejected: usize,
    pub rejection_precision: Option<f64>,
    pub rejection_recall: Option<f64>,
}

impl FilterConfusion {
    fn record(&mut self, is_faithful: bool, accepted: bool) {
        match (is_faithful, accepted) {
            (true, true) => self.faithful_accepted += 1,
            (true, false) => self.faithful_rejected += 1,
            (false, true) => self.distractor_accepted += 1,
            (false, false) => self.distractor_rejected += 1,
        }
    }

    fn finalize(&mut self) {
        let rejected = self.faithful_rejected + self.distractor_rejected;
        self.rejection_precision = if rejected > 0 {
            Some(self.distractor_rejected as f64 / rejected as f64)
        } else {
            None
        };
        let distractors = self.distractor_accepted + self.distractor_rejected;
        self.rejection_recall = if distractors > 0 {
            Some(self.distractor_rejected as f64 / distractors as f64)
        } else {
            None
        };
    }

    pub fn faithful_acceptance_rate(&self) -> Option<f64> {
        let n = self.faithful_accepted + self.faithful_rejected;
        (n > 0).then(|| self.faithful_accepted as f64 / n as f64)
    }

    pub fn distractor_acceptance_rate(&self) -> Option<f64> {
        let n = self.distractor_accepted + self.distractor_rejected;
        (n > 0).then(|| self.distractor_accepted as f64 / n as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub epochs: Vec<EpochStats>,
    pub final_confusion: FilterConfusion,
    pub optimizer_steps: u64,
    pub warnings: Vec<String>,
    pub checkpoint: Option<String>,
}

/// Everything needed to continue training at an epoch boundary.
pub struct ResumeState {
    pub store: ParameterStore,
    pub adam: Adam,
    pub it: u64,
    pub completed_epochs: usize,
}

pub struct TrainOutcome {
    pub store: ParameterStore,
    pub report: TrainReport,
    pub resume: ResumeState,
}

struct CandidateOutcome {
    decision: FilterDecision,
    is_faithful: bool,
    losses: Option<Losses>,
    grads: Option<BTreeMap<String, Tensor>>,
}

#[derive(Clone, Copy)]
struct Losses {
    total: f64,
    xe: f64,
    source: f64,
    alignment: f64,
}

/// Read-only context shared by the per-item passes.
struct RunContext<'a> {
    vqa: &'a VqaModel,
    expl: ExplainerModel,
    table: &'a EmbeddingTable,
    dataset: &'a Dataset,
    cfg: &'a TrainConfig,
}

impl RunContext<'_> {
    /// Answer-side attribution for the predicted answer plus correctness.
    fn answer_side(
        &self,
        params: &ParameterStore,
        item: &QaItem,
    ) -> Result<(AttributionVector, Vec<Vec<f64>>, Vec<f64>, Vec<f64>, bool)> {
        let features: Vec<Vec<f64>> = item.scene.objects.iter().map(|o| o.features.clone()).collect();
        let mut g = Graph::new();
        let nodes = self.vqa.forward(&mut g, params, &features, &item.question_tokens)?;
        let p = g.value(nodes.p).data().to_vec();
        let pred = argmax(&p);
        let correct = pred as u32 == item.answer_id;
        let score = g.at(nodes.s, pred);
        let attr = faithfulness::gradcam(&mut g, score, &nodes.vq, AttributionSource::Answer)?;
        let vq: Vec<Vec<f64>> = nodes.vq.iter().map(|&n| g.value(n).data().to_vec()).collect();
        let q = g.value(nodes.q).data().to_vec();
        Ok((attr, vq, q, p, correct))
    }

    /// Build the explanation graph for one gold candidate, score it, and
    /// collect gradients when training and accepted.
    #[allow(clippy::too_many_arguments)]
    fn candidate_pass(
        &self,
        params: &ParameterStore,
        item: &QaItem,
        cand_idx: usize,
        epoch: usize,
        threshold: f64,
        answer: &AttributionVector,
        vq: &[Vec<f64>],
        q: &[f64],
        p: &[f64],
        train: bool,
    ) -> Result<CandidateOutcome> {
        let gold = &item.gold_explanations[cand_idx];
        let mut g = Graph::new();
        let vq_nodes: Vec<NodeId> = vq.iter().map(|f| g.leaf(Tensor::vector(f.clone()))).collect();
        let q_node = g.constant(Tensor::vector(q.to_vec()));
        let a_s = if train {
            let epoch_seed = rng::derive_seed(self.cfg.seed, "answer-sample", epoch as u64);
            let item_seed = rng::derive_seed(epoch_seed, "item", item.item_id);
            let mut r = rng::stream(item_seed, "cand", cand_idx as u64);
            explainer::sample_answer_embedding(p, &mut r, AnswerMode::Sample)?
        } else {
            explainer::sample_answer_embedding(p, &mut rng::root(0), AnswerMode::Argmax)?
        };
        let a_node = g.constant(Tensor::vector(a_s));
        let fused = self.expl.fuse_qa(&mut g, params, &vq_nodes, a_node, q_node)?;
        let (steps, targets) = self.expl.teacher_force(&mut g, params, &fused, &gold.tokens)?;
        let logprob = explainer::sequence_log_prob(&mut g, &steps, &targets)?;

        let wf = self.cfg.effective_wf();
        let (sf, lf_node) = if wf > 0.0 {
            let lf = faithfulness::faithfulness_loss(&mut g, answer, logprob, &vq_nodes, LossMode::Exact)?;
            (1.0 - g.value(lf).item(), Some(lf))
        } else {
            let expl_attr =
                faithfulness::gradcam(&mut g, logprob, &vq_nodes, AttributionSource::Explanation)?;
            (faithfulness::faithfulness_score(answer, &expl_attr)?, None)
        };
        let decision = filter(sf, threshold, true);
        if !decision.accepted || !train {
            return Ok(CandidateOutcome {
                decision,
                is_faithful: gold.is_faithful,
                losses: None,
                grads: None,
            });
        }

        let xe = explainer::xe_loss(&mut g, &steps, &targets)?;
        let labels = explainer::source_labels(
            &gold.tokens,
            &item.scene,
            self.table,
            &self.dataset.vocab,
            explainer::SOURCE_TAU,
        )?;
        let word_steps: Vec<StepNodes> = steps.into_iter().take(labels.len()).collect();
        let ls = explainer::source_loss(&mut g, &word_steps, &labels)?;
        let mut total = {
            let a = g.mul_const(xe, self.cfg.w_xe);
            let b = g.mul_const(ls, self.cfg.w_s);
            g.add(a, b)
        };
        let mut alignment = 0.0;
        if let Some(lf) = lf_node {
            alignment = g.value(lf).item();
            let weighted = g.mul_const(lf, wf);
            total = g.add(total, weighted);
        }
        let total_v = g.value(total).item();
        if !total_v.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite loss on item {} candidate {cand_idx}",
                item.item_id
            )));
        }
        let grads = g.param_grads(total);
        debug_assert!(
            grads.keys().all(|k| k.starts_with("expl.")),
            "gradient leaked outside the decoder"
        );
        Ok(CandidateOutcome {
            decision,
            is_faithful: gold.is_faithful,
            losses: Some(Losses {
                total: total_v,
                xe: g.value(xe).item(),
                source: g.value(ls).item(),
                alignment,
            }),
            grads: Some(grads),
        })
    }

    /// All candidate outcomes for one item.
    fn item_pass(
        &self,
        params: &ParameterStore,
        item: &QaItem,
        epoch: usize,
        threshold: f64,
        train: bool,
    ) -> Result<Vec<CandidateOutcome>> {
        let (answer_attr, vq, q, p, correct) = self.answer_side(params, item)?;
        if !correct {
            return Ok(item
                .gold_explanations
                .iter()
                .map(|gold| CandidateOutcome {
                    decision: FilterDecision {
                        score: 0.0,
                        threshold,
                        accepted: false,
                        reason: FilterReason::WrongAnswer,
                    },
                    is_faithful: gold.is_faithful,
                    losses: None,
                    grads: None,
                })
                .collect());
        }
        (0..item.gold_explanations.len())
            .map(|c| self.candidate_pass(params, item, c, epoch, threshold, &answer_attr, &vq, &q, &p, train))
            .collect()
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

fn accumulate(into: &mut BTreeMap<String, Tensor>, from: &BTreeMap<String, Tensor>) {
    for (name, grad) in from {
        into.entry(name.clone())
            .and_modify(|t| {
                for (a, b) in t.data_mut().iter_mut().zip(grad.data()) {
                    *a += b;
                }
            })
            .or_insert_with(|| grad.clone());
    }
}

/// Train the explanation decoder against a frozen answering model.
///
/// `frozen` holds the answering parameters (all non-trainable). `resume`
/// continues a run saved at an epoch boundary; the resumed trajectory equals
/// the uninterrupted one because epoch shuffles and sampling streams derive
/// from (seed, epoch) alone.
pub fn train_explainer(
    dataset: &Dataset,
    vqa: &VqaModel,
    frozen: &ParameterStore,
    expl_cfg: &ExplainerConfig,
    table: &EmbeddingTable,
    cfg: &TrainConfig,
    resume: Option<ResumeState>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.items.is_empty() {
        return Err(Error::Degenerate("empty training dataset".into()));
    }
    let frozen_digest = frozen.digest();
    let (expl_store, mut adam, mut it, start_epoch) = match resume {
        Some(r) => {
            if r.completed_epochs >= cfg.epochs {
                return Err(Error::Config(format!(
                    "resume state already covers {} of {} epochs",
                    r.completed_epochs, cfg.epochs
                )));
            }
            (r.store, r.adam, r.it, r.completed_epochs)
        }
        None => {
            let mut s = ParameterStore::new();
            ExplainerModel::init(expl_cfg.clone(), &mut s);
            (s, Adam::new(), 0u64, 0usize)
        }
    };
    let mut params = frozen.clone();
    params.merge(&expl_store)?;
    let ctx = RunContext {
        vqa,
        expl: ExplainerModel::attach(expl_cfg.clone()),
        table,
        dataset,
        cfg,
    };
    let mut warnings = Vec::new();
    let mut epochs_log = Vec::new();
    let xi = cfg.effective_xi();

    for epoch in start_epoch..cfg.epochs {
        let lr = cfg.lr_for_epoch(epoch);
        let mut order: Vec<usize> = (0..dataset.items.len()).collect();
        let mut shuffle_rng = rng::stream(cfg.seed, "expl-epoch", epoch as u64);
        for i in (1..order.len()).rev() {
            let j = rand::Rng::gen_range(&mut shuffle_rng, 0..=i as u64) as usize;
            order.swap(i, j);
        }
        let mut stats = EpochStats {
            epoch,
            lr,
            mean_loss: 0.0,
            mean_xe: 0.0,
            mean_source_loss: 0.0,
            mean_alignment_loss: 0.0,
            mean_score: 0.0,
            accepted_fraction: 0.0,
            candidates: 0,
            accepted: 0,
            wrong_answer: 0,
            low_score: 0,
            batches: 0,
            skipped_batches: 0,
        };
        let mut score_sum = 0.0;
        let mut scored = 0usize;
        let mut loss_sums = (0.0, 0.0, 0.0, 0.0);

        for batch in order.chunks(cfg.batch_size) {
            let threshold = filter_threshold(it, xi);
            let outcomes: Vec<Result<Vec<CandidateOutcome>>> = {
                let params_ref = &params;
                let ctx_ref = &ctx;
                par::map(batch, move |&idx| {
                    ctx_ref.item_pass(params_ref, &dataset.items[idx], epoch, threshold, true)
                })
            };
            let mut batch_grads: BTreeMap<String, Tensor> = BTreeMap::new();
            let mut survivors = 0usize;
            for item_out in outcomes {
                for out in item_out? {
                    stats.candidates += 1;
                    match out.decision.reason {
                        FilterReason::Accepted => stats.accepted += 1,
                        FilterReason::LowScore => stats.low_score += 1,
                        FilterReason::WrongAnswer => stats.wrong_answer += 1,
                    }
                    if out.decision.reason != FilterReason::WrongAnswer {
                        score_sum += out.decision.score;
                        scored += 1;
                    }
                    if let (Some(l), Some(gr)) = (out.losses, out.grads.as_ref()) {
                        survivors += 1;
                        loss_sums.0 += l.total;
                        loss_sums.1 += l.xe;
                        loss_sums.2 += l.source;
                        loss_sums.3 += l.alignment;
                        accumulate(&mut batch_grads, gr);
                    }
                }
            }
            stats.batches += 1;
            if survivors == 0 {
                stats.skipped_batches += 1;
                continue;
            }
            let scale = 1.0 / survivors as f64;
            for t in batch_grads.values_mut() {
                for x in t.data_mut() {
                    *x *= scale;
                }
            }
            adam.step(&mut params, &batch_grads, lr);
            it += 1;
        }

        let denom = stats.accepted.max(1) as f64;
        stats.mean_loss = loss_sums.0 / denom;
        stats.mean_xe = loss_sums.1 / denom;
        stats.mean_source_loss = loss_sums.2 / denom;
        stats.mean_alignment_loss = loss_sums.3 / denom;
        stats.mean_score = if scored > 0 { score_sum / scored as f64 } else { 0.0 };
        stats.accepted_fraction = if stats.candidates > 0 {
            stats.accepted as f64 / stats.candidates as f64
        } else {
            0.0
        };
        if stats.skipped_batches * 2 > stats.batches {
            warnings.push(format!(
                "epoch {epoch}: {} of {} batches had no surviving candidate",
                stats.skipped_batches, stats.batches
            ));
        }
        epochs_log.push(stats);
    }

    let (trained, rest) = params.split_prefix("expl.");
    if rest.digest() != frozen_digest {
        return Err(Error::Invalid("frozen answering parameters moved during training".into()));
    }

    // reporting pass: decisions at the final threshold against generator flags
    let threshold = filter_threshold(it, xi);
    let eval: Vec<Result<Vec<CandidateOutcome>>> = {
        let params_ref = &params;
        let ctx_ref = &ctx;
        par::map(&dataset.items, move |item| {
            ctx_ref.item_pass(params_ref, item, cfg.epochs, threshold, false)
        })
    };
    let mut confusion = FilterConfusion::default();
    for item_out in eval {
        for out in item_out? {
            confusion.record(out.is_faithful, out.decision.accepted);
        }
    }
    confusion.finalize();

    let report = TrainReport {
        config: cfg.clone(),
        epochs: epochs_log,
        final_confusion: confusion,
        optimizer_steps: it,
        warnings,
        checkpoint: None,
    };
    let resume = ResumeState {
        store: trained.clone(),
        adam,
        it,
        completed_epochs: cfg.epochs,
    };
    Ok(TrainOutcome { store: trained, report, resume })
}

/// Acceptance decisions over the whole dataset at the saturated threshold
/// ξ, for threshold sweeps on a frozen model. Returns the confusion against
/// generator flags and the scores of answer-correct candidates.
pub fn acceptance_sweep(
    dataset: &Dataset,
    vqa: &VqaModel,
    frozen: &ParameterStore,
    expl_cfg: &ExplainerConfig,
    expl_store: &ParameterStore,
    table: &EmbeddingTable,
    xi: f64,
    seed: u64,
) -> Result<(FilterConfusion, Vec<f64>)> {
    let mut params = frozen.clone();
    params.merge(expl_store)?;
    let cfg = TrainConfig { xi, seed, ..TrainConfig::default() };
    let ctx = RunContext {
        vqa,
        expl: ExplainerModel::attach(expl_cfg.clone()),
        table,
        dataset,
        cfg: &cfg,
    };
    let outcomes: Vec<Result<Vec<CandidateOutcome>>> = {
        let params_ref = &params;
        let ctx_ref = &ctx;
        par::map(&dataset.items, move |item| {
            ctx_ref.item_pass(params_ref, item, 0, xi, false)
        })
    };
    let mut confusion = FilterConfusion::default();
    let mut scores = Vec::new();
    for item_out in outcomes {
        for out in item_out? {
            if out.decision.reason != FilterReason::WrongAnswer {
                scores.push(out.decision.score);
            }
            confusion.record(out.is_faithful, out.decision.accepted);
        }
    }
    confusion.finalize();
    Ok((confusion, scores))
}

const STATE_KIND: &str = "train-state";
const MODEL_KIND: &str = "model";

/// Persist a resume state: parameters, optimizer moments (under `opt.m.` /
/// `opt.v.`), counters and the configuration hash.
pub fn save_train_state(path: &Path, state: &ResumeState, config_hash: &str) -> Result<()> {
    let mut combined = state.store.clone();
    let (m, v) = state.adam.state();
    let mut opt = ParameterStore::new();
    for (name, t) in m {
        opt.insert(format!("opt.m.{name}"), t.clone());
    }
    for (name, t) in v {
        opt.insert(format!("opt.v.{name}"), t.clone());
    }
    combined.merge(&opt)?;
    let meta = serde_json::json!({
        "kind": STATE_KIND,
        "config_hash": config_hash,
        "adam_t": state.adam.t,
        "it": state.it,
        "completed_epochs": state.completed_epochs,
    });
    checkpoint::save(path, &combined, &meta)
}

/// Load a resume state, refusing on a configuration-hash mismatch unless
/// overridden.
pub fn load_train_state(path: &Path, config_hash: &str, allow_mismatch: bool) -> Result<ResumeState> {
    let (combined, meta) = checkpoint::load(path)?;
    if meta["kind"].as_str() != Some(STATE_KIND) {
        return Err(Error::Checkpoint(format!("{} is not a training state", path.display())));
    }
    let found = meta["config_hash"].as_str().unwrap_or("").to_string();
    if found != config_hash && !allow_mismatch {
        return Err(Error::HashMismatch(format!(
            "training state was saved under configuration {found}, expected {config_hash}"
        )));
    }
    let (opt, store) = combined.split_prefix("opt.");
    let mut m = BTreeMap::new();
    let mut v = BTreeMap::new();
    for (name, param) in opt.iter() {
        if let Some(rest) = name.strip_prefix("opt.m.") {
            m.insert(rest.to_string(), param.value.clone());
        } else if let Some(rest) = name.strip_prefix("opt.v.") {
            v.insert(rest.to_string(), param.value.clone());
        }
    }
    let adam_t = meta["adam_t"].as_u64().unwrap_or(0);
    let it = meta["it"].as_u64().unwrap_or(0);
    let completed = meta["completed_epochs"].as_u64().unwrap_or(0) as usize;
    Ok(ResumeState {
        store,
        adam: Adam::restore(adam_t, m, v),
        it,
        completed_epochs: completed,
    })
}

/// Persist the frozen answering parameters and the trained decoder together
/// for inference.
pub fn save_model_checkpoint(
    path: &Path,
    frozen: &ParameterStore,
    expl: &ParameterStore,
    extra_meta: serde_json::Value,
) -> Result<()> {
    let mut combined = frozen.clone();
    combined.merge(expl)?;
    let meta = serde_json::json!({
        "kind": MODEL_KIND,
        "extra": extra_meta,
    });
    checkpoint::save(path, &combined, &meta)
}

pub fn load_model_checkpoint(path: &Path) -> Result<(ParameterStore, serde_json::Value)> {
    let (store, meta) = checkpoint::load(path)?;
    if meta["kind"].as_str() != Some(MODEL_KIND) {
        return Err(Error::Checkpoint(format!("{} is not a model checkpoint", path.display())));
    }
    Ok((store, meta))
}
