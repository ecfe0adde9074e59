//! Synthetic scene world: scenes, questions, answers and gold explanations
//! with known causal structure.

pub mod generator;
pub mod io;
pub mod oracle;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Attention raster side length. All spatial metrics run on this grid.
pub const GRID: usize = 14;

/// Hard upper bound on objects per scene.
pub const V_MAX_HARD: usize = 80;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub object_id: u32,
    pub category_id: u32,
    /// `[color_id, size_id]`.
    pub attribute_ids: Vec<u32>,
    /// Occupied cells as sorted `(row, col)` pairs, all within the grid.
    pub footprint: Vec<(u8, u8)>,
    pub features: Vec<f64>,
}

impl SceneObject {
    pub fn color_id(&self) -> u32 {
        self.attribute_ids[0]
    }

    pub fn size_id(&self) -> u32 {
        self.attribute_ids[1]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
}

impl Scene {
    pub fn object(&self, id: u32) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.object_id == id)
    }

    /// Objects of a category, in scene order.
    pub fn of_category(&self, cat: u32) -> Vec<&SceneObject> {
        self.objects.iter().filter(|o| o.category_id == cat).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoldExplanation {
    pub tokens: Vec<u32>,
    pub is_faithful: bool,
    pub referenced_object_ids: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QaItem {
    pub item_id: u64,
    pub scene: Scene,
    pub question_tokens: Vec<u32>,
    pub answer_id: u32,
    /// Oracle-only: the objects the question semantics read.
    /// Training code must never consult this or `is_faithful`.
    pub causal_object_ids: Vec<u32>,
    pub gold_explanations: Vec<GoldExplanation>,
}

/// Generator configuration. Two datasets built with equal configs share the
/// same vocabulary and feature embedding, so models transfer between them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    /// Inclusive range of objects per scene.
    pub num_objects: (usize, usize),
    pub v_max: usize,
    pub feature_dim: usize,
    pub noise_sigma: f64,
    /// Probability that an item also carries a distractor explanation.
    pub p_distractor: f64,
    pub categories: Vec<String>,
    pub colors: Vec<String>,
    pub sizes: Vec<String>,
    /// Seed of the deterministic category/attribute embedding, part of the
    /// config on purpose: train and test sets must agree on it.
    pub embed_seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            num_objects: (3, 8),
            v_max: 12,
            feature_dim: 64,
            noise_sigma: 0.1,
            p_distractor: 0.5,
            categories: ["ball", "cube", "tree", "dog", "star", "ring"]
                .map(String::from)
                .to_vec(),
            colors: ["red", "green", "blue", "yellow"].map(String::from).to_vec(),
            sizes: ["small", "large"].map(String::from).to_vec(),
            embed_seed: 9001,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.v_max > V_MAX_HARD {
            return Err(Error::Config(format!(
                "v_max {} exceeds hard cap {V_MAX_HARD}",
                self.v_max
            )));
        }
        let (lo, hi) = self.num_objects;
        if lo < 1 || lo > hi || hi > self.v_max {
            return Err(Error::Config(format!(
                "num_objects range ({lo}, {hi}) must satisfy 1 <= lo <= hi <= v_max ({})",
                self.v_max
            )));
        }
        if self.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.p_distractor) {
            return Err(Error::Config("p_distractor must lie in [0,1]".into()));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::Config("noise_sigma must be nonnegative".into()));
        }
        for (name, list) in [
            ("categories", &self.categories),
            ("colors", &self.colors),
            ("sizes", &self.sizes),
        ] {
            if list.is_empty() {
                return Err(Error::Config(format!("{name} must be non-empty")));
            }
        }
        let mut all: Vec<&String> = self
            .categories
            .iter()
            .chain(&self.colors)
            .chain(&self.sizes)
            .collect();
        all.sort();
        all.dedup();
        if all.len() != self.categories.len() + self.colors.len() + self.sizes.len() {
            return Err(Error::Config("category/color/size names must be distinct".into()));
        }
        Ok(())
    }
}

/// Token and answer vocabularies, closed over everything the generator and
/// the decoder can emit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub tokens: Vec<String>,
    /// Linking applies to common nouns; true exactly for category tokens.
    pub is_noun: Vec<bool>,
    pub answers: Vec<String>,
    pub category_tokens: Vec<u32>,
    pub color_tokens: Vec<u32>,
    pub size_tokens: Vec<u32>,
    /// `number_tokens[n]` is the token for count `n`, n in 0..=v_max.
    pub number_tokens: Vec<u32>,
    pub bos: u32,
    pub eos: u32,
}

impl Vocabulary {
    pub fn build(cfg: &GenConfig) -> Vocabulary {
        let mut tokens: Vec<String> = vec!["<bos>".into(), "<eos>".into()];
        let mut is_noun = vec![false, false];
        let push = |tokens: &mut Vec<String>, is_noun: &mut Vec<bool>, s: &str, noun: bool| -> u32 {
            tokens.push(s.to_string());
            is_noun.push(noun);
            (tokens.len() - 1) as u32
        };
        for w in [
            "is", "there", "a", "no", "the", "what", "color", "size", "how", "many", "are",
        ] {
            push(&mut tokens, &mut is_noun, w, false);
        }
        let number_tokens: Vec<u32> = (0..=cfg.v_max)
            .map(|n| push(&mut tokens, &mut is_noun, &n.to_string(), false))
            .collect();
        let category_tokens: Vec<u32> = cfg
            .categories
            .iter()
            .map(|c| push(&mut tokens, &mut is_noun, c, true))
            .collect();
        let color_tokens: Vec<u32> = cfg
            .colors
            .iter()
            .map(|c| push(&mut tokens, &mut is_noun, c, false))
            .collect();
        let size_tokens: Vec<u32> = cfg
            .sizes
            .iter()
            .map(|s| push(&mut tokens, &mut is_noun, s, false))
            .collect();
        let mut answers: Vec<String> = vec!["yes".into(), "no".into()];
        answers.extend(cfg.colors.iter().cloned());
        answers.extend(cfg.sizes.iter().cloned());
        answers.extend((0..=cfg.v_max).map(|n| n.to_string()));
        Vocabulary {
            tokens,
            is_noun,
            answers,
            category_tokens,
            color_tokens,
            size_tokens,
            number_tokens,
            bos: 0,
            eos: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, s: &str) -> Option<u32> {
        self.tokens.iter().position(|t| t == s).map(|i| i as u32)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn answer_id(&self, s: &str) -> Option<u32> {
        self.answers.iter().position(|t| t == s).map(|i| i as u32)
    }

    pub fn answer(&self, id: u32) -> &str {
        &self.answers[id as usize]
    }

    /// Answer id for "yes" / "no".
    pub fn yes(&self) -> u32 {
        0
    }

    pub fn no(&self) -> u32 {
        1
    }

    pub fn answer_for_color(&self, cfg: &GenConfig, color_id: u32) -> u32 {
        self.answer_id(&cfg.colors[color_id as usize]).unwrap()
    }

    pub fn answer_for_size(&self, cfg: &GenConfig, size_id: u32) -> u32 {
        self.answer_id(&cfg.sizes[size_id as usize]).unwrap()
    }

    pub fn answer_for_count(&self, n: usize) -> u32 {
        self.answer_id(&n.to_string()).unwrap()
    }

    /// Render token ids as space-separated text.
    pub fn text(&self, ids: &[u32]) -> String {
        ids.iter()
            .map(|&i| self.token(i))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Category id whose name token is `tok`, if any.
    pub fn category_of_token(&self, tok: u32) -> Option<u32> {
        self.category_tokens
            .iter()
            .position(|&t| t == tok)
            .map(|i| i as u32)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub seed: u64,
    pub config: GenConfig,
    pub vocab: Vocabulary,
    pub items: Vec<QaItem>,
}
