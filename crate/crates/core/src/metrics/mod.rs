//! Automatic evaluation: n-gram text metrics over explanations and exact
//! earth mover's distance between attention maps on the scene grid.

pub mod emd;
pub mod text;

pub use emd::{emd, oracle_map, rasterize_attention, AttentionMap};
pub use text::{bleu4, cider_scores, rouge_l};
