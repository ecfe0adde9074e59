//! Held-out evaluation, the LIME agreement audit, and report artifacts.
//!
//! Faithfulness, transport, and agreement numbers are computed over the
//! correctly answered items only (the explanation is conditioned on the
//! predicted answer); text metrics and link counts cover every item.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::explainer::{self, AnswerMode, DecodeMode, ExplainerModel, ExplanationOutput};
use crate::faithfulness::{self, score_histogram, AttributionSource, Histogram};
use crate::lime::{self, LimeConfig};
use crate::linker;
use crate::metrics;
use crate::nn::{Graph, NodeId, ParameterStore, Tensor};
use crate::toyworld::{Dataset, QaItem};
use crate::vqa::VqaModel;
use crate::{par, rng};

pub const REPORT_VERSION: u32 = 1;
/// Scores at or below this bound count as "low faithfulness".
pub const SF_LOW_BOUND: f64 = 0.1;
const SF_BINS: usize = 20;

fn hex_digest(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    format!("{:x}", h.finalize())
}

/// Content hash of a dataset, used to refuse cross-dataset report merges.
pub fn dataset_digest(ds: &Dataset) -> Result<String> {
    Ok(hex_digest(&serde_json::to_vec(ds)?))
}

/// Content hash of an arbitrary config value (JSON maps serialize with
/// sorted keys, so the hash is canonical).
pub fn value_digest(value: &serde_json::Value) -> Result<String> {
    Ok(hex_digest(&serde_json::to_vec(value)?))
}

/// Deterministic head/tail split; the tail of `test_fraction` (at least one
/// item) is held out.
pub fn holdout_split(items: &[QaItem], test_fraction: f64) -> Result<(&[QaItem], &[QaItem])> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::Config(format!(
            "test fraction {test_fraction} outside [0, 1)"
        )));
    }
    if items.len() < 2 {
        return Err(Error::Config("need at least two items to split".into()));
    }
    let test = ((items.len() as f64 * test_fraction).round() as usize)
        .max(1)
        .min(items.len() - 1);
    let cut = items.len() - test;
    Ok((&items[..cut], &items[cut..]))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemEval {
    pub item_id: u64,
    pub correct: bool,
    pub tokens: Vec<u32>,
    pub sf: Option<f64>,
    pub emd: Option<f64>,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub links: usize,
    pub raster_degenerate: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub metrics: BTreeMap<String, f64>,
    pub sf_scores: Vec<f64>,
    pub sf_histogram: Histogram,
    pub items: Vec<ItemEval>,
    pub warnings: Vec<String>,
}

struct DecodedItem {
    output: ExplanationOutput,
    pred: u32,
    correct: bool,
    sf: Option<f64>,
}

/// Answer attribution, greedy decode conditioned on the argmax answer, and
/// the faithfulness score between the two attribution paths.
fn decode_item(
    vqa: &VqaModel,
    expl: &ExplainerModel,
    params: &ParameterStore,
    item: &QaItem,
) -> Result<DecodedItem> {
    let features: Vec<Vec<f64>> = item.scene.objects.iter().map(|o| o.features.clone()).collect();
    let mut g = Graph::new();
    let nodes = vqa.forward(&mut g, params, &features, &item.question_tokens)?;
    let p = g.value(nodes.p).data().to_vec();
    let pred = p
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i as u32)
        .unwrap_or(0);
    let correct = pred == item.answer_id;
    let score = g.at(nodes.s, pred as usize);
    let answer_attr = faithfulness::gradcam(&mut g, score, &nodes.vq, AttributionSource::Answer)?;
    let vq: Vec<Vec<f64>> = nodes.vq.iter().map(|&n| g.value(n).data().to_vec()).collect();
    let q = g.value(nodes.q).data().to_vec();

    let mut g = Graph::new();
    let vq_nodes: Vec<NodeId> = vq.into_iter().map(|f| g.leaf(Tensor::vector(f))).collect();
    let q_node = g.constant(Tensor::vector(q));
    let a_s = explainer::sample_answer_embedding(&p, &mut rng::root(0), AnswerMode::Argmax)?;
    let a_node = g.constant(Tensor::vector(a_s));
    let fused = expl.fuse_qa(&mut g, params, &vq_nodes, a_node, q_node)?;
    let (steps, tokens) = expl.decode(&mut g, params, &fused, DecodeMode::Greedy, &mut rng::root(0))?;
    let output = explainer::snapshot_output(&g, &steps, &tokens);
    let sf = if tokens.is_empty() {
        None
    } else {
        let logprob = explainer::sequence_log_prob(&mut g, &steps, &tokens)?;
        let expl_attr =
            faithfulness::gradcam(&mut g, logprob, &vq_nodes, AttributionSource::Explanation)?;
        Some(faithfulness::faithfulness_score(&answer_attr, &expl_attr)?)
    };
    Ok(DecodedItem {
        output,
        pred,
        correct,
        sf,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplainedItem {
    pub item_id: u64,
    pub pred: u32,
    pub correct: bool,
    pub sf: Option<f64>,
    pub output: ExplanationOutput,
    pub multimodal: linker::MultimodalExplanation,
}

/// Decode and link one item for presentation.
pub fn explain_item(
    vqa: &VqaModel,
    expl: &ExplainerModel,
    params: &ParameterStore,
    dataset: &Dataset,
    item: &QaItem,
) -> Result<ExplainedItem> {
    let decoded = decode_item(vqa, expl, params, item)?;
    let mut output = decoded.output;
    output.links = linker::token_links(&output, &item.scene, &dataset.vocab)
        .iter()
        .enumerate()
        .filter_map(|(t, link)| link.map(|(_, id)| (t, id)))
        .collect();
    let multimodal = linker::link_words(&output, &item.scene, &dataset.vocab);
    Ok(ExplainedItem {
        item_id: item.item_id,
        pred: decoded.pred,
        correct: decoded.correct,
        sf: decoded.sf,
        output,
        multimodal,
    })
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Evaluate the frozen answering model plus explainer over `items`.
pub fn evaluate(
    vqa: &VqaModel,
    expl: &ExplainerModel,
    params: &ParameterStore,
    dataset: &Dataset,
    items: &[QaItem],
) -> Result<EvalSummary> {
    if items.is_empty() {
        return Err(Error::Config("evaluation needs at least one item".into()));
    }
    let results = par::map(items, |item| -> Result<ItemEval> {
        let decoded = decode_item(vqa, expl, params, item)?;
        let refs: Vec<Vec<u32>> = item.gold_explanations.iter().map(|e| e.tokens.clone()).collect();
        let (emd_value, degenerate) = if decoded.correct {
            let (map, warned) = metrics::rasterize_attention(&decoded.output, &item.scene)?;
            let oracle = metrics::oracle_map(&item.scene, &item.causal_object_ids)?;
            (Some(metrics::emd(&map, &oracle)?), warned)
        } else {
            (None, false)
        };
        let links = linker::token_links(&decoded.output, &item.scene, &dataset.vocab)
            .iter()
            .flatten()
            .count();
        Ok(ItemEval {
            item_id: item.item_id,
            correct: decoded.correct,
            sf: decoded.sf.filter(|_| decoded.correct),
            emd: emd_value,
            bleu4: metrics::bleu4(&decoded.output.tokens, &refs),
            rouge_l: metrics::rouge_l(&decoded.output.tokens, &refs),
            links,
            raster_degenerate: degenerate,
            tokens: decoded.output.tokens,
        })
    });
    let mut evals = Vec::with_capacity(results.len());
    for r in results {
        evals.push(r?);
    }

    let corpus: Vec<(Vec<u32>, Vec<Vec<u32>>)> = evals
        .iter()
        .zip(items)
        .map(|(e, item)| {
            (
                e.tokens.clone(),
                item.gold_explanations.iter().map(|g| g.tokens.clone()).collect(),
            )
        })
        .collect();
    let cider = cider_mean(&corpus);

    let mut warnings = Vec::new();
    let empty = evals.iter().filter(|e| e.tokens.is_empty()).count();
    if empty > 0 {
        warnings.push(format!("{empty} empty explanations scored 0 on text metrics"));
    }
    let degenerate = evals.iter().filter(|e| e.raster_degenerate).count();
    if degenerate > 0 {
        warnings.push(format!(
            "{degenerate} rasterized maps had zero accumulation, used uniform fallback"
        ));
    }

    let sf_scores: Vec<f64> = evals.iter().filter_map(|e| e.sf).collect();
    let emds: Vec<f64> = evals.iter().filter_map(|e| e.emd).collect();
    let bleus: Vec<f64> = evals.iter().map(|e| e.bleu4).collect();
    let rouges: Vec<f64> = evals.iter().map(|e| e.rouge_l).collect();
    let link_counts: Vec<f64> = evals.iter().map(|e| e.links as f64).collect();
    let lens: Vec<f64> = evals.iter().map(|e| e.tokens.len() as f64).collect();
    let correct = evals.iter().filter(|e| e.correct).count();

    let mut m = BTreeMap::new();
    m.insert("items".into(), evals.len() as f64);
    m.insert("accuracy".into(), correct as f64 / evals.len() as f64);
    m.insert("bleu4".into(), mean(&bleus).unwrap_or(0.0));
    m.insert("rouge_l".into(), mean(&rouges).unwrap_or(0.0));
    m.insert("cider".into(), cider);
    m.insert("avg_links".into(), mean(&link_counts).unwrap_or(0.0));
    m.insert("avg_len".into(), mean(&lens).unwrap_or(0.0));
    if let Some(v) = mean(&sf_scores) {
        m.insert("mean_sf".into(), v);
        let low = sf_scores.iter().filter(|&&s| s <= SF_LOW_BOUND).count();
        m.insert("sf_low_frac".into(), low as f64 / sf_scores.len() as f64);
    } else {
        warnings.push("no correctly answered items, faithfulness metrics omitted".into());
    }
    if let Some(v) = mean(&emds) {
        m.insert("mean_emd".into(), v);
    }

    Ok(EvalSummary {
        metrics: m,
        sf_histogram: score_histogram(&sf_scores, SF_BINS),
        sf_scores,
        items: evals,
        warnings,
    })
}

fn cider_mean(corpus: &[(Vec<u32>, Vec<Vec<u32>>)]) -> f64 {
    let scores = metrics::cider_scores(corpus);
    if scores.is_empty() {
        0.0
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditConfig {
    pub ks: Vec<usize>,
    pub n_samples: usize,
    pub p_blind: f64,
    pub seed: u64,
    /// Cap on audited (correct) items, None for all.
    pub max_items: Option<usize>,
}

impl Default for AuditConfig {
    fn default() -> AuditConfig {
        AuditConfig {
            ks: vec![1, 2, 3],
            n_samples: 256,
            p_blind: 0.4,
            seed: 2024,
            max_items: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditSummary {
    /// Mean agreement per K, keyed `eq10_k{K}`.
    pub metrics: BTreeMap<String, f64>,
    pub audited_items: usize,
    pub warnings: Vec<String>,
}

/// Agreement between LIME segment importance and the words the explainer
/// linked, averaged over correctly answered items.
pub fn audit_lime(
    vqa: &VqaModel,
    expl: &ExplainerModel,
    params: &ParameterStore,
    dataset: &Dataset,
    items: &[QaItem],
    cfg: &AuditConfig,
) -> Result<AuditSummary> {
    if cfg.ks.is_empty() {
        return Err(Error::Config("audit needs at least one K".into()));
    }
    // Cheap decode pass first; the sample-heavy surrogate fits only run on
    // the (possibly capped) correctly answered items.
    let decoded = par::map(items, |item| decode_item(vqa, expl, params, item));
    let mut kept: Vec<(DecodedItem, &QaItem)> = Vec::new();
    for (r, item) in decoded.into_iter().zip(items) {
        let d = r?;
        if d.correct {
            kept.push((d, item));
        }
    }
    if let Some(cap) = cfg.max_items {
        kept.truncate(cap);
    }
    let per_item = par::map(&kept, |(decoded, item)| -> Result<Vec<Option<f64>>> {
        let linked = linker::linked_object_indices(&decoded.output, &item.scene, &dataset.vocab);
        let features: Vec<Vec<f64>> =
            item.scene.objects.iter().map(|o| o.features.clone()).collect();
        let predict = lime::vqa_predictor(vqa, params, &item.question_tokens, decoded.pred);
        let mut scores = Vec::with_capacity(cfg.ks.len());
        for &k in &cfg.ks {
            let lime_cfg = LimeConfig {
                n_samples: cfg.n_samples,
                p_blind: cfg.p_blind,
                k,
                seed: rng::derive_seed(cfg.seed, "lime-item", item.item_id),
            };
            let result = lime::lime_explain(&predict, &item.scene, &lime_cfg)?;
            scores.push(lime::eq10_score(&result, &linked, &features)?);
        }
        Ok(scores)
    });

    let audited = kept.len();
    let mut skipped_zero_weight = 0usize;
    let mut sums: Vec<(f64, usize)> = vec![(0.0, 0); cfg.ks.len()];
    for r in per_item {
        for (slot, s) in sums.iter_mut().zip(&r?) {
            match *s {
                Some(v) => {
                    slot.0 += v;
                    slot.1 += 1;
                }
                None => skipped_zero_weight += 1,
            }
        }
    }
    let mut warnings = Vec::new();
    if skipped_zero_weight > 0 {
        warnings.push(format!(
            "{skipped_zero_weight} audits had all-zero surrogate weights and were skipped"
        ));
    }
    let mut metrics_map = BTreeMap::new();
    for (&k, &(sum, n)) in cfg.ks.iter().zip(&sums) {
        if n > 0 {
            metrics_map.insert(format!("eq10_k{k}"), sum / n as f64);
        } else {
            warnings.push(format!("no usable audits at K={k}"));
        }
    }
    Ok(AuditSummary {
        metrics: metrics_map,
        audited_items: audited,
        warnings,
    })
}

/// Self-describing result artifact; every report names the config and the
/// dataset that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub kind: String,
    pub label: String,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub dataset_hash: String,
    pub metrics: BTreeMap<String, f64>,
    pub sf_histogram: Option<Histogram>,
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn new(
        kind: &str,
        label: &str,
        config: serde_json::Value,
        dataset_hash: &str,
        metrics: BTreeMap<String, f64>,
        sf_histogram: Option<Histogram>,
        warnings: Vec<String>,
    ) -> Result<EvalReport> {
        let config_hash = value_digest(&config)?;
        Ok(EvalReport {
            format_version: REPORT_VERSION,
            kind: kind.to_string(),
            label: label.to_string(),
            config,
            config_hash,
            dataset_hash: dataset_hash.to_string(),
            metrics,
            sf_histogram,
            warnings,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<EvalReport> {
        let text = fs::read_to_string(path)?;
        let report: EvalReport = serde_json::from_str(&text)?;
        if report.format_version != REPORT_VERSION {
            return Err(Error::Version {
                found: report.format_version,
                expected: REPORT_VERSION,
            });
        }
        Ok(report)
    }
}

/// Metric-by-run comparison table merged from several reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub columns: Vec<String>,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub metric: String,
    pub values: Vec<Option<f64>>,
}

impl ReportTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.metric);
            for v in &row.values {
                out.push(',');
                if let Some(v) = v {
                    out.push_str(&format!("{v}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Merge reports into one table; refuses mixed datasets.
pub fn merge_reports(reports: &[EvalReport]) -> Result<ReportTable> {
    let Some(first) = reports.first() else {
        return Err(Error::Config("report merge needs at least one input".into()));
    };
    for r in reports {
        if r.dataset_hash != first.dataset_hash {
            return Err(Error::HashMismatch(format!(
                "report '{}' was produced on dataset {}, others on {}",
                r.label,
                &r.dataset_hash[..12.min(r.dataset_hash.len())],
                &first.dataset_hash[..12.min(first.dataset_hash.len())]
            )));
        }
    }
    let mut columns = Vec::new();
    for (i, r) in reports.iter().enumerate() {
        let base = if r.label.is_empty() { r.kind.clone() } else { r.label.clone() };
        if columns.contains(&base) {
            columns.push(format!("{base}#{i}"));
        } else {
            columns.push(base);
        }
    }
    let mut keys: Vec<String> = Vec::new();
    for r in reports {
        for k in r.metrics.keys() {
            if !keys.contains(k) {
                keys.push(k.clone());
            }
        }
    }
    keys.sort();
    let rows = keys
        .into_iter()
        .map(|metric| ReportRow {
            values: reports.iter().map(|r| r.metrics.get(&metric).copied()).collect(),
            metric,
        })
        .collect();
    Ok(ReportTable {
        columns,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explainer::{EmbeddingTable, ExplainerConfig};
    use crate::toyworld::{generator, GenConfig};
    use crate::trainer::{train_explainer, TrainConfig, TrainMode};
    use crate::vqa::{pretrain_vqa, VqaConfig, VqaTrainConfig};

    fn tiny_world() -> Dataset {
        let cfg = GenConfig {
            num_objects: (2, 3),
            v_max: 4,
            feature_dim: 6,
            ..GenConfig::default()
        };
        generator::generate_dataset(&cfg, 21, 24).unwrap()
    }

    fn tiny_models(ds: &Dataset) -> (VqaModel, ExplainerModel, ParameterStore, EmbeddingTable) {
        let vqa_cfg = VqaConfig {
            embed_dim: 8,
            gru_hidden: 10,
            attn_hidden: 8,
            joint_dim: 10,
            ..VqaConfig::for_dataset(ds)
        };
        let tc = VqaTrainConfig {
            epochs: 4,
            batch_size: 8,
            lr: 0.01,
            seed: 3,
        };
        let (vqa, frozen, _) = pretrain_vqa(&ds.items, vqa_cfg, &tc).unwrap();
        let expl_cfg = ExplainerConfig {
            word_dim: 6,
            hidden: 10,
            attn_hidden: 6,
            ..ExplainerConfig::for_dataset(ds, &vqa.cfg)
        };
        let table = EmbeddingTable::deterministic(&ds.vocab, 8, 11);
        let train_cfg = TrainConfig {
            mode: TrainMode::Random,
            epochs: 1,
            batch_size: 8,
            lr: 2e-3,
            seed: 17,
            ..TrainConfig::default()
        };
        let out = train_explainer(ds, &vqa, &frozen, &expl_cfg, &table, &train_cfg, None).unwrap();
        let expl = ExplainerModel::attach(expl_cfg);
        let mut params = frozen.clone();
        params.merge(&out.store).unwrap();
        (vqa, expl, params, table)
    }

    #[test]
    fn split_holds_out_tail() {
        let ds = tiny_world();
        let (train, test) = holdout_split(&ds.items, 0.25).unwrap();
        assert_eq!(train.len(), 18);
        assert_eq!(test.len(), 6);
        assert_eq!(train[0].item_id, ds.items[0].item_id);
        assert_eq!(test[0].item_id, ds.items[18].item_id);
        assert!(holdout_split(&ds.items, 1.0).is_err());
        let (train, test) = holdout_split(&ds.items, 0.0).unwrap();
        assert_eq!(test.len(), 1);
        assert_eq!(train.len(), 23);
    }

    #[test]
    fn evaluate_reports_expected_metrics() {
        let ds = tiny_world();
        let (vqa, expl, params, _table) = tiny_models(&ds);
        let summary = evaluate(&vqa, &expl, &params, &ds, &ds.items[..8]).unwrap();
        assert_eq!(summary.metrics["items"], 8.0);
        for key in ["accuracy", "bleu4", "rouge_l", "cider", "avg_links", "avg_len"] {
            assert!(summary.metrics.contains_key(key), "missing {key}");
        }
        let acc = summary.metrics["accuracy"];
        assert!((0.0..=1.0).contains(&acc));
        if acc > 0.0 {
            assert!(summary.metrics.contains_key("mean_sf"));
            assert!(summary.metrics.contains_key("mean_emd"));
            assert!(!summary.sf_scores.is_empty());
        }
        assert_eq!(summary.items.len(), 8);
    }

    #[test]
    fn evaluate_is_deterministic() {
        let ds = tiny_world();
        let (vqa, expl, params, _table) = tiny_models(&ds);
        let a = evaluate(&vqa, &expl, &params, &ds, &ds.items[..6]).unwrap();
        let b = evaluate(&vqa, &expl, &params, &ds, &ds.items[..6]).unwrap();
        assert_eq!(serde_json::to_string(&a.metrics).unwrap(), serde_json::to_string(&b.metrics).unwrap());
        assert_eq!(a.sf_scores, b.sf_scores);
    }

    #[test]
    fn audit_produces_scores_per_k() {
        let ds = tiny_world();
        let (vqa, expl, params, _table) = tiny_models(&ds);
        let cfg = AuditConfig {
            ks: vec![1, 2],
            n_samples: 32,
            seed: 5,
            ..AuditConfig::default()
        };
        let summary = audit_lime(&vqa, &expl, &params, &ds, &ds.items[..8], &cfg).unwrap();
        if summary.audited_items > 0 {
            for k in [1usize, 2] {
                let key = format!("eq10_k{k}");
                if let Some(v) = summary.metrics.get(&key) {
                    assert!((0.0..=1.0 + 1e-9).contains(v), "{key} = {v}");
                }
            }
        }
    }

    #[test]
    fn report_round_trip_and_merge() {
        let mut m1 = BTreeMap::new();
        m1.insert("mean_sf".to_string(), 0.4);
        m1.insert("bleu4".to_string(), 0.2);
        let mut m2 = BTreeMap::new();
        m2.insert("mean_sf".to_string(), 0.6);
        m2.insert("eq10_k1".to_string(), 0.5);
        let r1 = EvalReport::new(
            "evaluate",
            "random",
            serde_json::json!({"mode": "random"}),
            "d1",
            m1,
            None,
            vec![],
        )
        .unwrap();
        let r2 = EvalReport::new(
            "evaluate",
            "filtered",
            serde_json::json!({"mode": "filtered"}),
            "d1",
            m2,
            None,
            vec![],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r1.json");
        r1.save(&path).unwrap();
        let loaded = EvalReport::load(&path).unwrap();
        assert_eq!(serde_json::to_string(&loaded).unwrap(), serde_json::to_string(&r1).unwrap());

        let table = merge_reports(&[r1.clone(), r2.clone()]).unwrap();
        assert_eq!(table.columns, vec!["random", "filtered"]);
        let sf_row = table.rows.iter().find(|r| r.metric == "mean_sf").unwrap();
        assert_eq!(sf_row.values, vec![Some(0.4), Some(0.6)]);
        let eq_row = table.rows.iter().find(|r| r.metric == "eq10_k1").unwrap();
        assert_eq!(eq_row.values, vec![None, Some(0.5)]);
        let csv = table.to_csv();
        assert!(csv.starts_with("metric,random,filtered\n"));

        let mut r3 = r2.clone();
        r3.dataset_hash = "d2".into();
        assert!(matches!(
            merge_reports(&[r1, r3]),
            Err(Error::HashMismatch(_))
        ));
    }

    #[test]
    fn config_hash_is_canonical() {
        let a = serde_json::json!({"b": 1, "a": 2});
        let b = serde_json::json!({"a": 2, "b": 1});
        assert_eq!(value_digest(&a).unwrap(), value_digest(&b).unwrap());
        let c = serde_json::json!({"a": 2, "b": 3});
        assert_ne!(value_digest(&a).unwrap(), value_digest(&c).unwrap());
    }
}
