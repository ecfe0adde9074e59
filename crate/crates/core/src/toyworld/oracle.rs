//! Independent question interpreter.
//!
//! Parses question token sequences back into structured queries and
//! evaluates them against the scene. This code path shares nothing with the
//! generator's template construction, so agreement between the two is a real
//! consistency check and the derived causal sets can serve as ground truth.

use super::{QaItem, Scene, Vocabulary};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Question {
    Exists { category: u32 },
    ColorOf { category: u32 },
    SizeOf { category: u32 },
    CountOf { category: u32 },
}

/// Parse a question token sequence.
pub fn parse_question(tokens: &[u32], vocab: &Vocabulary) -> Result<Question> {
    let words: Vec<&str> = tokens.iter().map(|&t| vocab.token(t)).collect();
    let cat = |tok: u32| -> Result<u32> {
        vocab
            .category_of_token(tok)
            .ok_or_else(|| Error::Invalid(format!("'{}' is not a category", vocab.token(tok))))
    };
    match words.as_slice() {
        ["is", "there", "a", _] => Ok(Question::Exists { category: cat(tokens[3])? }),
        ["what", "color", "is", "the", _] => Ok(Question::ColorOf { category: cat(tokens[4])? }),
        ["what", "size", "is", "the", _] => Ok(Question::SizeOf { category: cat(tokens[4])? }),
        ["how", "many", _, "are", "there"] => Ok(Question::CountOf { category: cat(tokens[2])? }),
        _ => Err(Error::Invalid(format!(
            "unrecognized question: {}",
            words.join(" ")
        ))),
    }
}

/// Evaluate a question on a scene: `(answer_id, causal object ids)`.
///
/// Convention: questions answered by absence (existence "no", count 0) have
/// every scene object as causal evidence.
pub fn answer(q: Question, scene: &Scene, vocab: &Vocabulary) -> Result<(u32, Vec<u32>)> {
    let all = || scene.objects.iter().map(|o| o.object_id).collect::<Vec<u32>>();
    let sorted = |mut v: Vec<u32>| {
        v.sort_unstable();
        v
    };
    match q {
        Question::Exists { category } => {
            let hits = scene.of_category(category);
            if hits.is_empty() {
                Ok((vocab.no(), sorted(all())))
            } else {
                Ok((vocab.yes(), sorted(hits.iter().map(|o| o.object_id).collect())))
            }
        }
        Question::ColorOf { category } | Question::SizeOf { category } => {
            let hits = scene.of_category(category);
            if hits.len() != 1 {
                return Err(Error::Degenerate(format!(
                    "attribute question needs a unique instance, found {}",
                    hits.len()
                )));
            }
            let obj = hits[0];
            let ans = match q {
                Question::ColorOf { .. } => {
                    let color_tok = vocab.color_tokens[obj.color_id() as usize];
                    vocab.answer_id(vocab.token(color_tok))
                }
                _ => {
                    let size_tok = vocab.size_tokens[obj.size_id() as usize];
                    vocab.answer_id(vocab.token(size_tok))
                }
            };
            let ans = ans.ok_or_else(|| Error::Invalid("attribute missing from answers".into()))?;
            Ok((ans, vec![obj.object_id]))
        }
        Question::CountOf { category } => {
            let hits = scene.of_category(category);
            let ans = vocab.answer_for_count(hits.len());
            if hits.is_empty() {
                Ok((ans, sorted(all())))
            } else {
                Ok((ans, sorted(hits.iter().map(|o| o.object_id).collect())))
            }
        }
    }
}

/// Re-derive an item's answer and causal set and compare with the stored ones.
pub fn check_item(item: &QaItem, vocab: &Vocabulary) -> Result<()> {
    let q = parse_question(&item.question_tokens, vocab)?;
    let (ans, causal) = answer(q, &item.scene, vocab)?;
    if ans != item.answer_id {
        return Err(Error::Invalid(format!(
            "item {}: stored answer '{}' but interpreter says '{}'",
            item.item_id,
            vocab.answer(item.answer_id),
            vocab.answer(ans)
        )));
    }
    if causal != item.causal_object_ids {
        return Err(Error::Invalid(format!(
            "item {}: causal sets differ ({:?} vs {:?})",
            item.item_id, item.causal_object_ids, causal
        )));
    }
    Ok(())
}
