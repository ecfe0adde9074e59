//! Word-to-object linking and rendering of the combined explanation: noun
//! tokens whose source gate leaned visual get colored with the object their
//! attention picked, and the same colors highlight those footprints on the
//! scene grid.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::explainer::ExplanationOutput;
use crate::toyworld::{Scene, Vocabulary, GRID};

pub const S1_THRESHOLD: f64 = 0.5;
pub const ALPHA_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLink {
    pub object_id: u32,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkedToken {
    pub token: u32,
    pub text: String,
    pub link: Option<TokenLink>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegendEntry {
    pub object_id: u32,
    pub color: String,
    pub footprint: Vec<(u8, u8)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultimodalExplanation {
    pub tokens: Vec<LinkedToken>,
    pub legend: Vec<LegendEntry>,
}

/// Linking rule per decode step: the token must be a common noun, the
/// visual gate must exceed 0.5, and the peak attention weight must exceed
/// 0.2 (both strictly); the link target is the argmax object.
pub fn link_target(is_noun: bool, s1: f64, alpha: &[f64]) -> Option<usize> {
    if !is_noun || s1 <= S1_THRESHOLD {
        return None;
    }
    let (best, &weight) = alpha
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    (weight > ALPHA_THRESHOLD).then_some(best)
}

/// Per-step link decisions as (object index, object_id) pairs.
pub fn token_links(
    output: &ExplanationOutput,
    scene: &Scene,
    vocab: &Vocabulary,
) -> Vec<Option<(usize, u32)>> {
    output
        .steps
        .iter()
        .zip(&output.tokens)
        .map(|(step, &token)| {
            let noun = vocab.is_noun.get(token as usize).copied().unwrap_or(false);
            link_target(noun, step.s1, &step.alpha)
                .and_then(|i| scene.objects.get(i).map(|o| (i, o.object_id)))
        })
        .collect()
}

fn hsl_to_hex(h: f64, s: f64, l: f64) -> String {
    let c = (1.0 - (2.0 * l - 1.0).abs()) * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = l - c / 2.0;
    let to = |v: f64| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    format!("#{:02x}{:02x}{:02x}", to(r), to(g), to(b))
}

/// Distinct colors assigned to linked objects in ascending object_id order
/// via golden-angle hue steps, probing past the rare rounding collision.
fn assign_colors(object_ids: &[u32]) -> BTreeMap<u32, String> {
    let mut colors = BTreeMap::new();
    let mut used: Vec<String> = Vec::new();
    for (i, &id) in object_ids.iter().enumerate() {
        let mut hue = (i as f64 * 137.508) % 360.0;
        let mut color = hsl_to_hex(hue, 0.62, 0.42);
        while used.contains(&color) {
            hue = (hue + 7.0) % 360.0;
            color = hsl_to_hex(hue, 0.62, 0.42);
        }
        used.push(color.clone());
        colors.insert(id, color);
    }
    colors
}

/// Build the combined explanation for one decoded output.
pub fn link_words(
    output: &ExplanationOutput,
    scene: &Scene,
    vocab: &Vocabulary,
) -> MultimodalExplanation {
    let links = token_links(output, scene, vocab);
    let mut linked_ids: Vec<u32> = links.iter().flatten().map(|&(_, id)| id).collect();
    linked_ids.sort_unstable();
    linked_ids.dedup();
    let colors = assign_colors(&linked_ids);
    let tokens = output
        .tokens
        .iter()
        .zip(&links)
        .map(|(&token, link)| LinkedToken {
            token,
            text: vocab
                .tokens
                .get(token as usize)
                .cloned()
                .unwrap_or_else(|| format!("<{token}>")),
            link: link.map(|(_, id)| TokenLink {
                object_id: id,
                color: colors[&id].clone(),
            }),
        })
        .collect();
    let legend = linked_ids
        .iter()
        .map(|&id| LegendEntry {
            object_id: id,
            color: colors[&id].clone(),
            footprint: scene
                .objects
                .iter()
                .find(|o| o.object_id == id)
                .map(|o| o.footprint.clone())
                .unwrap_or_default(),
        })
        .collect();
    MultimodalExplanation { tokens, legend }
}

/// Linked object indices (into `scene.objects`), deduplicated and sorted.
pub fn linked_object_indices(
    output: &ExplanationOutput,
    scene: &Scene,
    vocab: &Vocabulary,
) -> Vec<usize> {
    let mut ids: Vec<usize> = token_links(output, scene, vocab)
        .into_iter()
        .flatten()
        .map(|(i, _)| i)
        .collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

pub fn average_links(explanations: &[MultimodalExplanation]) -> f64 {
    if explanations.is_empty() {
        return 0.0;
    }
    let total: usize = explanations
        .iter()
        .map(|e| e.tokens.iter().filter(|t| t.link.is_some()).count())
        .sum();
    total as f64 / explanations.len() as f64
}

/// SVG with the grid on top (linked footprints filled in their colors) and
/// the caption underneath, linked words colored to match.
pub fn to_svg(mm: &MultimodalExplanation) -> String {
    let cell = 20usize;
    let grid_px = GRID * cell;
    let caption_h = 40usize;
    let width = grid_px.max(16 + mm.tokens.len() * 52);
    let height = grid_px + caption_h;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"monospace\" font-size=\"14\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{grid_px}\" height=\"{grid_px}\" fill=\"#f7f7f7\"/>\n"
    ));
    for entry in &mm.legend {
        for &(r, c) in &entry.footprint {
            svg.push_str(&format!(
                "<rect x=\"{}\" y=\"{}\" width=\"{cell}\" height=\"{cell}\" fill=\"{}\" fill-opacity=\"0.85\"/>\n",
                c as usize * cell,
                r as usize * cell,
                entry.color
            ));
        }
    }
    for i in 0..=GRID {
        let p = i * cell;
        svg.push_str(&format!(
            "<line x1=\"0\" y1=\"{p}\" x2=\"{grid_px}\" y2=\"{p}\" stroke=\"#ddd\" stroke-width=\"1\"/>\n"
        ));
        svg.push_str(&format!(
            "<line x1=\"{p}\" y1=\"0\" x2=\"{p}\" y2=\"{grid_px}\" stroke=\"#ddd\" stroke-width=\"1\"/>\n"
        ));
    }
    let mut x = 8usize;
    let y = grid_px + 26;
    for token in &mm.tokens {
        let (color, weight) = match &token.link {
            Some(link) => (link.color.as_str(), " font-weight=\"bold\""),
            None => ("#222222", ""),
        };
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{y}\" fill=\"{color}\"{weight}>{}</text>\n",
            escape_xml(&token.text)
        ));
        x += 8 * token.text.chars().count().max(2) + 12;
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
