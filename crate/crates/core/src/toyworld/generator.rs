//! Scene, question and explanation generation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{GenConfig, GoldExplanation, QaItem, Scene, SceneObject, Vocabulary, GRID};
use crate::error::{Error, Result};
use crate::{par, rng};

/// Weight of the category direction in the synthetic feature embedding,
/// relative to the attribute directions. Categories dominate so features of
/// one category cluster tightly and stay separable from other categories.
const CAT_SCALE: f64 = 1.5;
const ATTR_SCALE: f64 = 0.7;

fn direction(embed_seed: u64, label: &str, index: u64, dim: usize, scale: f64) -> Vec<f64> {
    let mut r = rng::stream(embed_seed, label, index);
    let normal = Normal::new(0.0, 1.0).unwrap();
    (0..dim).map(|_| normal.sample(&mut r) * scale).collect()
}

/// Noise-free embedding of `(category, color, size)`, before the squash.
pub fn deterministic_embed(cfg: &GenConfig, category: u32, color: u32, size: u32) -> Vec<f64> {
    let c = direction(cfg.embed_seed, "cat", category as u64, cfg.feature_dim, CAT_SCALE);
    let col = direction(cfg.embed_seed, "color", color as u64, cfg.feature_dim, ATTR_SCALE);
    let sz = direction(cfg.embed_seed, "size", size as u64, cfg.feature_dim, ATTR_SCALE);
    c.iter()
        .zip(&col)
        .zip(&sz)
        .map(|((a, b), c)| a + b + c)
        .collect()
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn features(cfg: &GenConfig, rng: &mut ChaCha8Rng, category: u32, color: u32, size: u32) -> Vec<f64> {
    let base = deterministic_embed(cfg, category, color, size);
    let normal = Normal::new(0.0, 1.0).unwrap();
    base.iter()
        .map(|&b| softplus(b + normal.sample(rng) * cfg.noise_sigma))
        .collect()
}

/// Place `n` non-overlapping rectangular footprints on the grid.
fn place_footprints(rng: &mut ChaCha8Rng, n: usize) -> Result<Vec<Vec<(u8, u8)>>> {
    let mut occupied = [[false; GRID]; GRID];
    let mut prints = Vec::with_capacity(n);
    for _ in 0..n {
        let mut placed = None;
        for attempt in 0..200 {
            // fall back to 1x1 once large rectangles stop fitting
            let (w, h) = if attempt < 100 {
                (rng.gen_range(1..=3usize), rng.gen_range(1..=3usize))
            } else {
                (1, 1)
            };
            let r0 = rng.gen_range(0..=GRID - h);
            let c0 = rng.gen_range(0..=GRID - w);
            let free = (r0..r0 + h).all(|r| (c0..c0 + w).all(|c| !occupied[r][c]));
            if free {
                let mut cells = Vec::with_capacity(w * h);
                for r in r0..r0 + h {
                    for c in c0..c0 + w {
                        occupied[r][c] = true;
                        cells.push((r as u8, c as u8));
                    }
                }
                cells.sort_unstable();
                placed = Some(cells);
                break;
            }
        }
        match placed {
            Some(cells) => prints.push(cells),
            None => {
                return Err(Error::Generation(format!(
                    "could not place object {} of {n} on the {GRID}x{GRID} grid",
                    prints.len()
                )))
            }
        }
    }
    Ok(prints)
}

/// Scene with an object count drawn from `cfg.num_objects`.
pub fn generate_scene(rng: &mut ChaCha8Rng, cfg: &GenConfig) -> Result<Scene> {
    cfg.validate()?;
    let (lo, hi) = cfg.num_objects;
    let n = rng.gen_range(lo..=hi);
    generate_scene_n(rng, cfg, n)
}

/// Scene with exactly `n` objects.
pub fn generate_scene_n(rng: &mut ChaCha8Rng, cfg: &GenConfig, n: usize) -> Result<Scene> {
    if n < 1 || n > cfg.v_max {
        return Err(Error::Config(format!(
            "scene object count {n} outside [1, {}]",
            cfg.v_max
        )));
    }
    let prints = place_footprints(rng, n)?;
    let objects = prints
        .into_iter()
        .enumerate()
        .map(|(i, footprint)| {
            let category_id = rng.gen_range(0..cfg.categories.len()) as u32;
            let color = rng.gen_range(0..cfg.colors.len()) as u32;
            let size = rng.gen_range(0..cfg.sizes.len()) as u32;
            SceneObject {
                object_id: i as u32,
                category_id,
                attribute_ids: vec![color, size],
                footprint,
                features: features(cfg, rng, category_id, color, size),
            }
        })
        .collect();
    Ok(Scene { objects })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TemplateKind {
    Existence,
    Color,
    Size,
    Count,
}

const TEMPLATE_KINDS: [TemplateKind; 4] = [
    TemplateKind::Existence,
    TemplateKind::Color,
    TemplateKind::Size,
    TemplateKind::Count,
];

struct QaParts {
    question: Vec<u32>,
    answer: u32,
    causal: Vec<u32>,
    faithful: GoldExplanation,
}

/// Build question/answer/causal-set/faithful-explanation for one template.
/// Returns `None` when the template does not apply to the scene (attribute
/// questions need a category with exactly one instance).
fn apply_template(
    scene: &Scene,
    kind: TemplateKind,
    rng: &mut ChaCha8Rng,
    cfg: &GenConfig,
    vocab: &Vocabulary,
) -> Option<QaParts> {
    let tok = |s: &str| vocab.id(s).expect("vocabulary is closed over template words");
    match kind {
        TemplateKind::Existence => {
            let cat = rng.gen_range(0..cfg.categories.len()) as u32;
            let cat_tok = vocab.category_tokens[cat as usize];
            let question = vec![tok("is"), tok("there"), tok("a"), cat_tok];
            let present = scene.of_category(cat);
            if present.is_empty() {
                // absence is evidenced by everything present
                let causal: Vec<u32> = scene.objects.iter().map(|o| o.object_id).collect();
                let faithful = GoldExplanation {
                    tokens: vec![tok("there"), tok("is"), tok("no"), cat_tok],
                    is_faithful: true,
                    referenced_object_ids: vec![],
                };
                Some(QaParts { question, answer: vocab.no(), causal, faithful })
            } else {
                let causal: Vec<u32> = present.iter().map(|o| o.object_id).collect();
                let witness = present[0];
                let color_tok = vocab.color_tokens[witness.color_id() as usize];
                let faithful = GoldExplanation {
                    tokens: vec![tok("there"), tok("is"), tok("a"), color_tok, cat_tok],
                    is_faithful: true,
                    referenced_object_ids: vec![witness.object_id],
                };
                Some(QaParts { question, answer: vocab.yes(), causal, faithful })
            }
        }
        TemplateKind::Color | TemplateKind::Size => {
            let unique: Vec<u32> = (0..cfg.categories.len() as u32)
                .filter(|&c| scene.of_category(c).len() == 1)
                .collect();
            if unique.is_empty() {
                return None;
            }
            let cat = unique[rng.gen_range(0..unique.len())];
            let cat_tok = vocab.category_tokens[cat as usize];
            let obj = scene.of_category(cat)[0];
            let (attr_word, attr_tok, answer) = if kind == TemplateKind::Color {
                (
                    "color",
                    vocab.color_tokens[obj.color_id() as usize],
                    vocab.answer_for_color(cfg, obj.color_id()),
                )
            } else {
                (
                    "size",
                    vocab.size_tokens[obj.size_id() as usize],
                    vocab.answer_for_size(cfg, obj.size_id()),
                )
            };
            let question = vec![tok("what"), tok(attr_word), tok("is"), tok("the"), cat_tok];
            let faithful = GoldExplanation {
                tokens: vec![tok("the"), cat_tok, tok("is"), attr_tok],
                is_faithful: true,
                referenced_object_ids: vec![obj.object_id],
            };
            Some(QaParts {
                question,
                answer,
                causal: vec![obj.object_id],
                faithful,
            })
        }
        TemplateKind::Count => {
            let cat = rng.gen_range(0..cfg.categories.len()) as u32;
            let cat_tok = vocab.category_tokens[cat as usize];
            let question = vec![tok("how"), tok("many"), cat_tok, tok("are"), tok("there")];
            let present = scene.of_category(cat);
            let n = present.len();
            let answer = vocab.answer_for_count(n);
            let (causal, faithful) = if n == 0 {
                (
                    scene.objects.iter().map(|o| o.object_id).collect(),
                    GoldExplanation {
                        tokens: vec![tok("there"), tok("is"), tok("no"), cat_tok],
                        is_faithful: true,
                        referenced_object_ids: vec![],
                    },
                )
            } else {
                let causal: Vec<u32> = present.iter().map(|o| o.object_id).collect();
                (
                    causal.clone(),
                    GoldExplanation {
                        tokens: vec![tok("there"), tok("are"), vocab.number_tokens[n], cat_tok],
                        is_faithful: true,
                        referenced_object_ids: causal,
                    },
                )
            };
            Some(QaParts { question, answer, causal, faithful })
        }
    }
}

/// Distractor explanation about a non-causal object, if one exists.
fn distractor(scene: &Scene, causal: &[u32], rng: &mut ChaCha8Rng, vocab: &Vocabulary) -> Option<GoldExplanation> {
    let candidates: Vec<&SceneObject> = scene
        .objects
        .iter()
        .filter(|o| !causal.contains(&o.object_id))
        .collect();
    if candidates.is_empty() {
        return None;
    }
    let obj = candidates[rng.gen_range(0..candidates.len())];
    let tok = |s: &str| vocab.id(s).unwrap();
    Some(GoldExplanation {
        tokens: vec![
            tok("the"),
            vocab.category_tokens[obj.category_id as usize],
            tok("is"),
            vocab.color_tokens[obj.color_id() as usize],
        ],
        is_faithful: false,
        referenced_object_ids: vec![obj.object_id],
    })
}

/// Question + answer + explanations for a scene. Retries templates that do
/// not apply; existence and count always apply, so this terminates.
pub fn generate_qa(
    scene: &Scene,
    rng: &mut ChaCha8Rng,
    cfg: &GenConfig,
    vocab: &Vocabulary,
    item_id: u64,
) -> Result<QaItem> {
    for _ in 0..64 {
        let kind = TEMPLATE_KINDS[rng.gen_range(0..TEMPLATE_KINDS.len())];
        let Some(parts) = apply_template(scene, kind, rng, cfg, vocab) else {
            continue;
        };
        let mut gold = vec![parts.faithful];
        if rng.gen_bool(cfg.p_distractor) {
            if let Some(d) = distractor(scene, &parts.causal, rng, vocab) {
                gold.push(d);
            }
        }
        let mut causal = parts.causal;
        causal.sort_unstable();
        return Ok(QaItem {
            item_id,
            scene: scene.clone(),
            question_tokens: parts.question,
            answer_id: parts.answer,
            causal_object_ids: causal,
            gold_explanations: gold,
        });
    }
    Err(Error::Generation("no applicable question template".into()))
}

fn generate_item(cfg: &GenConfig, seed: u64, index: u64, vocab: &Vocabulary) -> Result<QaItem> {
    let mut item_rng = rng::stream(seed, "item", index);
    let scene = generate_scene(&mut item_rng, cfg)?;
    generate_qa(&scene, &mut item_rng, cfg, vocab, index)
}

/// Full dataset; items are generated from per-item seed streams, so the
/// result is identical whether shards run in parallel or sequentially.
pub fn generate_dataset(cfg: &GenConfig, seed: u64, items: usize) -> Result<super::Dataset> {
    cfg.validate()?;
    if items == 0 {
        return Err(Error::Config("dataset must contain at least one item".into()));
    }
    let vocab = Vocabulary::build(cfg);
    let results = par::map_indices(items, |i| generate_item(cfg, seed, i as u64, &vocab));
    let mut out = Vec::with_capacity(items);
    for r in results {
        out.push(r?);
    }
    if cfg!(debug_assertions) {
        let n = vocab.len() as u32;
        for item in &out {
            let seqs = item
                .question_tokens
                .iter()
                .chain(item.gold_explanations.iter().flat_map(|e| &e.tokens));
            for &t in seqs {
                debug_assert!(t < n, "token {t} outside vocabulary");
            }
        }
    }
    Ok(super::Dataset {
        seed,
        config: cfg.clone(),
        vocab,
        items: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn tiny_cfg() -> GenConfig {
        GenConfig {
            num_objects: (3, 6),
            feature_dim: 8,
            ..GenConfig::default()
        }
    }

    #[test]
    fn scenes_are_deterministic_for_a_seed() {
        let cfg = tiny_cfg();
        let a = generate_scene(&mut rng::root(7), &cfg).unwrap();
        let b = generate_scene(&mut rng::root(7), &cfg).unwrap();
        assert_eq!(a, b);
        let c = generate_scene(&mut rng::root(8), &cfg).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn footprints_are_disjoint_within_grid_and_nonempty() {
        let cfg = tiny_cfg();
        for seed in 0..25 {
            let scene = generate_scene(&mut rng::root(seed), &cfg).unwrap();
            let mut seen = BTreeSet::new();
            for o in &scene.objects {
                assert!(!o.footprint.is_empty());
                for &(r, c) in &o.footprint {
                    assert!((r as usize) < GRID && (c as usize) < GRID);
                    assert!(seen.insert((r, c)), "cell ({r},{c}) reused");
                }
            }
        }
    }

    #[test]
    fn features_are_nonnegative() {
        let cfg = tiny_cfg();
        let scene = generate_scene(&mut rng::root(3), &cfg).unwrap();
        for o in &scene.objects {
            assert_eq!(o.features.len(), cfg.feature_dim);
            assert!(o.features.iter().all(|&f| f >= 0.0));
        }
    }

    #[test]
    fn zero_objects_is_rejected() {
        let cfg = tiny_cfg();
        assert!(generate_scene_n(&mut rng::root(1), &cfg, 0).is_err());
        assert!(generate_scene_n(&mut rng::root(1), &cfg, cfg.v_max + 1).is_err());
    }

    #[test]
    fn eighty_objects_fit_but_config_caps_at_eighty() {
        let mut cfg = GenConfig::default();
        cfg.v_max = 80;
        cfg.num_objects = (80, 80);
        cfg.feature_dim = 4;
        let scene = generate_scene(&mut rng::root(5), &cfg).unwrap();
        assert_eq!(scene.objects.len(), 80);
    }

    fn hand_scene(cfg: &GenConfig, spec: &[(u32, u32, u32)]) -> Scene {
        // (category, color, size) triples on a diagonal of 1x1 footprints
        let objects = spec
            .iter()
            .enumerate()
            .map(|(i, &(cat, col, sz))| SceneObject {
                object_id: i as u32,
                category_id: cat,
                attribute_ids: vec![col, sz],
                footprint: vec![(i as u8, i as u8)],
                features: deterministic_embed(cfg, cat, col, sz),
            })
            .collect();
        Scene { objects }
    }

    #[test]
    fn color_template_on_unique_object() {
        let cfg = tiny_cfg();
        let vocab = Vocabulary::build(&cfg);
        // one red ball (cat 0, color 0), one green cube
        let scene = hand_scene(&cfg, &[(0, 0, 0), (1, 1, 1)]);
        let parts = apply_template(&scene, TemplateKind::Color, &mut rng::root(1), &cfg, &vocab);
        let parts = parts.unwrap();
        let q = vocab.text(&parts.question);
        assert!(q.starts_with("what color is the"), "{q}");
        let cat = q.rsplit(' ').next().unwrap();
        if cat == "ball" {
            assert_eq!(vocab.answer(parts.answer), "red");
            assert_eq!(parts.causal, vec![0]);
        } else {
            assert_eq!(cat, "cube");
            assert_eq!(vocab.answer(parts.answer), "green");
            assert_eq!(parts.causal, vec![1]);
        }
        assert_eq!(parts.faithful.referenced_object_ids, parts.causal);
    }

    #[test]
    fn counting_two_dogs_yields_two_causal_objects() {
        let cfg = tiny_cfg();
        let vocab = Vocabulary::build(&cfg);
        // dog is category 3 in the default lexicon
        let scene = hand_scene(&cfg, &[(3, 0, 0), (3, 1, 0), (0, 2, 1)]);
        // draw until the count template picks the dog category
        for seed in 0..200 {
            let mut r = rng::root(seed);
            let parts = apply_template(&scene, TemplateKind::Count, &mut r, &cfg, &vocab).unwrap();
            if vocab.text(&parts.question).contains("dog") {
                assert_eq!(vocab.answer(parts.answer), "2");
                assert_eq!(parts.causal, vec![0, 1]);
                assert_eq!(parts.faithful.referenced_object_ids, vec![0, 1]);
                return;
            }
        }
        panic!("count template never chose the dog category");
    }

    #[test]
    fn absent_category_existence_answers_no_with_full_causal_set() {
        let cfg = tiny_cfg();
        let vocab = Vocabulary::build(&cfg);
        let scene = hand_scene(&cfg, &[(0, 0, 0), (1, 1, 1)]);
        for seed in 0..200 {
            let mut r = rng::root(seed);
            let parts = apply_template(&scene, TemplateKind::Existence, &mut r, &cfg, &vocab).unwrap();
            let q = vocab.text(&parts.question);
            if q.ends_with("tree") {
                assert_eq!(vocab.answer(parts.answer), "no");
                assert_eq!(parts.causal, vec![0, 1]);
                assert!(parts.faithful.referenced_object_ids.is_empty());
                return;
            }
        }
        panic!("existence template never asked about an absent category");
    }

    #[test]
    fn attribute_template_skips_scene_without_unique_category() {
        let cfg = tiny_cfg();
        let vocab = Vocabulary::build(&cfg);
        // two of each category present: no unique referent anywhere
        let scene = hand_scene(&cfg, &[(0, 0, 0), (0, 1, 0), (2, 2, 1), (2, 3, 1)]);
        let parts = apply_template(&scene, TemplateKind::Color, &mut rng::root(1), &cfg, &vocab);
        assert!(parts.is_none());
        // but generate_qa still succeeds by retrying other templates
        let item = generate_qa(&scene, &mut rng::root(1), &cfg, &vocab, 0).unwrap();
        assert!(!item.gold_explanations.is_empty());
    }

    #[test]
    fn distractors_reference_non_causal_objects() {
        let cfg = GenConfig {
            p_distractor: 1.0,
            ..tiny_cfg()
        };
        let ds = generate_dataset(&cfg, 42, 60).unwrap();
        let mut distractors = 0;
        for item in &ds.items {
            for e in &item.gold_explanations {
                if e.is_faithful {
                    for r in &e.referenced_object_ids {
                        assert!(item.causal_object_ids.contains(r));
                    }
                } else {
                    distractors += 1;
                    assert!(
                        e.referenced_object_ids
                            .iter()
                            .any(|r| !item.causal_object_ids.contains(r)),
                        "distractor must touch a non-causal object"
                    );
                }
            }
        }
        assert!(distractors > 0);
    }

    #[test]
    fn dataset_generation_is_reproducible() {
        let cfg = tiny_cfg();
        let a = generate_dataset(&cfg, 99, 20).unwrap();
        let b = generate_dataset(&cfg, 99, 20).unwrap();
        assert_eq!(a, b);
    }
}
