//! Gradient attribution over attended object features, the answer/explanation
//! agreement score, the acceptance schedule and score histograms.
//!
//! Attribution per object: relu(⟨∂score/∂vq_i, vq_i⟩), a gradient×input
//! reduction that keeps vectors nonnegative so the agreement score lands in
//! [0, 1]. The alignment loss keeps the answer-side vector constant (the
//! answering model is frozen) and differentiates through the explanation-side
//! gradient, which the graph supports natively.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Graph, NodeId, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttributionSource {
    Answer,
    Explanation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionVector {
    pub values: Vec<f64>,
    pub source: AttributionSource,
}

/// Per-object attribution nodes relu(⟨∂score/∂vq_i, vq_i⟩); differentiable
/// through the inner gradient.
pub fn gradcam_nodes(g: &mut Graph, score: NodeId, vq: &[NodeId]) -> Result<Vec<NodeId>> {
    if vq.is_empty() {
        return Err(Error::Degenerate("attribution over zero objects".into()));
    }
    let grads = g.grad(score, vq);
    let mut out = Vec::with_capacity(vq.len());
    for (&gi, &vi) in grads.iter().zip(vq) {
        let pre = g.dot(gi, vi);
        if !g.value(pre).all_finite() {
            return Err(Error::Divergence(format!(
                "non-finite attribution for object {}",
                out.len()
            )));
        }
        out.push(g.relu(pre));
    }
    Ok(out)
}

pub fn gradcam(g: &mut Graph, score: NodeId, vq: &[NodeId], source: AttributionSource) -> Result<AttributionVector> {
    let nodes = gradcam_nodes(g, score, vq)?;
    let values = nodes.iter().map(|&n| g.value(n).item()).collect();
    Ok(AttributionVector { values, source })
}

/// Cosine similarity with the zero-vector convention: either all-zero input
/// yields 0.
pub fn cosine_or_zero(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

/// S_f = cos(answer attribution, explanation attribution).
pub fn faithfulness_score(answer: &AttributionVector, expl: &AttributionVector) -> Result<f64> {
    if answer.values.len() != expl.values.len() {
        return Err(Error::shape(
            "faithfulness score",
            format!("{} objects", answer.values.len()),
            format!("{} objects", expl.values.len()),
        ));
    }
    Ok(cosine_or_zero(&answer.values, &expl.values))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossMode {
    /// Differentiate through the explanation-side gradient (second order).
    Exact,
    /// Detach the attribution: the loss is reported but moves no parameter.
    Detached,
}

/// L_f = 1 − S_f as a graph node. `answer` is the frozen answer-side
/// attribution; `expl_score` is the summed explanation log-probability whose
/// gradient w.r.t. `vq` forms the explanation-side attribution.
pub fn faithfulness_loss(
    g: &mut Graph,
    answer: &AttributionVector,
    expl_score: NodeId,
    vq: &[NodeId],
    mode: LossMode,
) -> Result<NodeId> {
    if answer.values.len() != vq.len() {
        return Err(Error::shape(
            "faithfulness loss",
            format!("{} objects", answer.values.len()),
            format!("{} objects", vq.len()),
        ));
    }
    let mut nodes = gradcam_nodes(g, expl_score, vq)?;
    if mode == LossMode::Detached {
        nodes = nodes.iter().map(|&n| g.detach(n)).collect();
    }
    let e = g.concat(&nodes);
    if !g.value(e).all_finite() {
        return Err(Error::Divergence("non-finite explanation attribution".into()));
    }
    let na: f64 = answer.values.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 {
        // zero answer attribution: S_f = 0 by convention, constant loss
        return Ok(g.scalar_const(1.0));
    }
    let a = g.constant(Tensor::vector(answer.values.clone()));
    let num = g.dot(e, a);
    let e_sq = g.dot(e, e);
    // clamp keeps the value finite at an all-zero attribution; the clamp
    // mask zeroes the gradient there, matching the S_f = 0 convention
    let clamped = g.clamp_min(e_sq, 1e-30);
    let norm = g.sqrt(clamped);
    let inv = g.recip(norm);
    let cos_na = g.mul(num, inv);
    let sf = g.mul_const(cos_na, 1.0 / na);
    let neg = g.neg(sf);
    Ok(g.add_const(neg, 1.0))
}

/// Acceptance threshold ξ·min(0.02·it, 1): ramps from zero so the randomly
/// initialized decoder sees data early, saturating at ξ.
pub fn filter_threshold(it: u64, xi: f64) -> f64 {
    xi * (0.02 * it as f64).min(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterReason {
    Accepted,
    LowScore,
    WrongAnswer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterDecision {
    pub score: f64,
    pub threshold: f64,
    pub accepted: bool,
    pub reason: FilterReason,
}

/// Wrong predicted answers are rejected regardless of score; otherwise the
/// candidate passes iff its score meets the threshold.
pub fn filter(score: f64, threshold: f64, answer_correct: bool) -> FilterDecision {
    let reason = if !answer_correct {
        FilterReason::WrongAnswer
    } else if score >= threshold {
        FilterReason::Accepted
    } else {
        FilterReason::LowScore
    };
    FilterDecision {
        score,
        threshold,
        accepted: reason == FilterReason::Accepted,
        reason,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub counts: Vec<usize>,
    /// Scores outside [0, 1] that were clamped into the edge bins.
    pub clamped: usize,
}

/// Fixed-width bins over [0, 1]; a score of exactly 1 lands in the last bin.
pub fn score_histogram(scores: &[f64], bins: usize) -> Histogram {
    assert!(bins > 0);
    let mut counts = vec![0usize; bins];
    let mut clamped = 0usize;
    for &s in scores {
        let c = s.clamp(0.0, 1.0);
        if c != s {
            clamped += 1;
        }
        let idx = ((c * bins as f64) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    Histogram { counts, clamped }
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let bins = self.counts.len();
        let mut out = String::from("bin_lo,bin_hi,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let lo = i as f64 / bins as f64;
            let hi = (i + 1) as f64 / bins as f64;
            out.push_str(&format!("{lo:.2},{hi:.2},{c}\n"));
        }
        out
    }

    pub fn to_svg(&self, title: &str) -> String {
        let bins = self.counts.len();
        let max = self.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
        let (w, h, pad) = (440.0, 260.0, 40.0);
        let bar_w = (w - 2.0 * pad) / bins as f64;
        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
        );
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
            w / 2.0,
            title
        ));
        for (i, &c) in self.counts.iter().enumerate() {
            let bh = (h - 2.0 * pad) * c as f64 / max;
            let x = pad + i as f64 * bar_w;
            let y = h - pad - bh;
            svg.push_str(&format!(
                "  <rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"#4878a8\"/>\n",
                x,
                y,
                bar_w - 2.0,
                bh
            ));
            svg.push_str(&format!(
                "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"9\">{:.1}</text>\n",
                x + bar_w / 2.0,
                h - pad + 12.0,
                i as f64 / bins as f64
            ));
        }
        svg.push_str(&format!(
            "  <line x1=\"{pad}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#222\"/>\n",
            h - pad,
            w - pad,
            h - pad
        ));
        svg.push_str("</svg>\n");
        svg
    }
}
