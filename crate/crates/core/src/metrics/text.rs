//! Sentence-level n-gram metrics over token-id sequences. Candidates and
//! references use the same vocabulary ids; no further normalization happens
//! here. Empty candidates score zero everywhere so callers can warn once.

use std::collections::BTreeMap;

const MAX_N: usize = 4;

fn ngram_counts(seq: &[u32], n: usize) -> BTreeMap<&[u32], usize> {
    let mut counts: BTreeMap<&[u32], usize> = BTreeMap::new();
    if seq.len() >= n {
        for gram in seq.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// BLEU-4 with brevity penalty and uniform 1..=4-gram weights. Reference
/// length is the closest to the candidate length, ties going to the shorter.
/// Any zero n-gram precision zeroes the score (no smoothing).
pub fn bleu4(candidate: &[u32], references: &[Vec<u32>]) -> f64 {
    if candidate.is_empty() || references.is_empty() {
        return 0.0;
    }
    let c = candidate.len();
    let r = references
        .iter()
        .map(|r| r.len())
        .min_by_key(|&l| (l.abs_diff(c), l))
        .unwrap();
    let mut log_sum = 0.0;
    for n in 1..=MAX_N {
        let cand = ngram_counts(candidate, n);
        let total: usize = cand.values().sum();
        if total == 0 {
            return 0.0;
        }
        let mut max_ref: BTreeMap<&[u32], usize> = BTreeMap::new();
        for reference in references {
            for (gram, count) in ngram_counts(reference, n) {
                let slot = max_ref.entry(gram).or_insert(0);
                *slot = (*slot).max(count);
            }
        }
        let clipped: usize = cand
            .iter()
            .map(|(gram, &count)| count.min(max_ref.get(gram).copied().unwrap_or(0)))
            .sum();
        if clipped == 0 {
            return 0.0;
        }
        log_sum += (clipped as f64 / total as f64).ln() / MAX_N as f64;
    }
    let bp = if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    bp * log_sum.exp()
}

fn lcs_len(a: &[u32], b: &[u32]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for &x in a {
        for (j, &y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F-measure with beta = 1.2, maximized over references.
pub fn rouge_l(candidate: &[u32], references: &[Vec<u32>]) -> f64 {
    if candidate.is_empty() {
        return 0.0;
    }
    let beta2 = 1.2f64 * 1.2;
    references
        .iter()
        .filter(|r| !r.is_empty())
        .map(|reference| {
            let lcs = lcs_len(candidate, reference) as f64;
            if lcs == 0.0 {
                return 0.0;
            }
            let recall = lcs / reference.len() as f64;
            let precision = lcs / candidate.len() as f64;
            (1.0 + beta2) * recall * precision / (recall + beta2 * precision)
        })
        .fold(0.0, f64::max)
}

fn tfidf_vector(seq: &[u32], n: usize, df: &BTreeMap<Vec<u32>, usize>, corpus: f64) -> BTreeMap<Vec<u32>, f64> {
    ngram_counts(seq, n)
        .into_iter()
        .map(|(gram, count)| {
            let freq = df.get(gram).copied().unwrap_or(0).max(1) as f64;
            (gram.to_vec(), count as f64 * (corpus / freq).ln())
        })
        .collect()
}

fn cosine(a: &BTreeMap<Vec<u32>, f64>, b: &BTreeMap<Vec<u32>, f64>) -> f64 {
    let dot: f64 = a
        .iter()
        .filter_map(|(gram, &va)| b.get(gram).map(|&vb| va * vb))
        .sum();
    let na: f64 = a.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Corpus CIDEr: per item, the TF-IDF n-gram cosine against each reference,
/// averaged over references and over n = 1..=4. Document frequencies count
/// the items whose reference set contains the n-gram.
pub fn cider_scores(corpus: &[(Vec<u32>, Vec<Vec<u32>>)]) -> Vec<f64> {
    let size = corpus.len() as f64;
    let mut scores = Vec::with_capacity(corpus.len());
    let mut dfs: Vec<BTreeMap<Vec<u32>, usize>> = Vec::with_capacity(MAX_N);
    for n in 1..=MAX_N {
        let mut df: BTreeMap<Vec<u32>, usize> = BTreeMap::new();
        for (_, references) in corpus {
            let mut seen: BTreeMap<&[u32], ()> = BTreeMap::new();
            for reference in references {
                for gram in ngram_counts(reference, n).into_keys() {
                    seen.entry(gram).or_insert(());
                }
            }
            for gram in seen.into_keys() {
                *df.entry(gram.to_vec()).or_insert(0) += 1;
            }
        }
        dfs.push(df);
    }
    for (candidate, references) in corpus {
        if candidate.is_empty() || references.is_empty() {
            scores.push(0.0);
            continue;
        }
        let mut total = 0.0;
        for n in 1..=MAX_N {
            let df = &dfs[n - 1];
            let cand_vec = tfidf_vector(candidate, n, df, size);
            let mean: f64 = references
                .iter()
                .map(|r| cosine(&cand_vec, &tfidf_vector(r, n, df, size)))
                .sum::<f64>()
                / references.len() as f64;
            total += mean / MAX_N as f64;
        }
        scores.push(total);
    }
    scores
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(v: &[u32]) -> Vec<u32> {
        v.to_vec()
    }

    #[test]
    fn bleu_identical_is_one() {
        let s = toks(&[1, 2, 3, 4, 5, 6]);
        assert!((bleu4(&s, &[s.clone()]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bleu_hand_example() {
        // "a b c d e" vs "a b c d f" as ids: precisions 4/5, 3/4, 2/3, 1/2
        // and BP = 1, so BLEU = (4/5 * 3/4 * 2/3 * 1/2)^(1/4) = 0.2^(1/4)
        // = 0.66874030497642... (computed by hand from the n-gram counts).
        let cand = toks(&[1, 2, 3, 4, 9]);
        let reference = toks(&[1, 2, 3, 4, 5]);
        let got = bleu4(&cand, &[reference]);
        assert!((got - 0.2f64.powf(0.25)).abs() < 1e-12, "got {got}");
        assert!((got - 0.6687403049764260).abs() < 1e-9);
    }

    #[test]
    fn bleu_clips_repeated_ngrams() {
        // Candidate [7,7,1,2,3,4] vs reference [7,1,2,3,4,5]: the doubled 7
        // clips to one match, giving precisions 5/6, 4/5, 3/4, 2/3 and
        // BLEU = (1/3)^(1/4).
        let cand = toks(&[7, 7, 1, 2, 3, 4]);
        let reference = toks(&[7, 1, 2, 3, 4, 5]);
        let expect = (1.0f64 / 3.0).powf(0.25);
        assert!((bleu4(&cand, &[reference]) - expect).abs() < 1e-12);
    }

    #[test]
    fn bleu_brevity_penalty() {
        // Perfect 4-token prefix of an 8-token reference: all precisions 1,
        // BP = exp(1 - 8/4) = e^-1.
        let cand = toks(&[1, 2, 3, 4]);
        let reference = toks(&[1, 2, 3, 4, 5, 6, 7, 8]);
        let got = bleu4(&cand, &[reference]);
        assert!((got - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn bleu_empty_candidate_zero() {
        assert_eq!(bleu4(&[], &[toks(&[1, 2, 3])]), 0.0);
    }

    #[test]
    fn bleu_disjoint_zero() {
        let cand = toks(&[1, 2, 3, 4, 5]);
        let reference = toks(&[6, 7, 8, 9, 10]);
        assert_eq!(bleu4(&cand, &[reference]), 0.0);
    }

    #[test]
    fn bleu_reference_permutation_invariant() {
        let cand = toks(&[1, 2, 3, 4, 5]);
        let refs_a = vec![toks(&[1, 2, 3, 9, 9]), toks(&[1, 2, 3, 4, 5, 6])];
        let refs_b = vec![refs_a[1].clone(), refs_a[0].clone()];
        assert_eq!(bleu4(&cand, &refs_a), bleu4(&cand, &refs_b));
    }

    #[test]
    fn rouge_identical_is_one() {
        let s = toks(&[3, 1, 4, 1, 5]);
        assert!((rouge_l(&s, &[s.clone()]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rouge_hand_example() {
        // candidate [1,2,3,4], reference [1,9,2,4,8]: LCS = 3 (1,2,4).
        // R = 3/5, P = 3/4, beta^2 = 1.44,
        // F = 2.44 * 0.6 * 0.75 / (0.6 + 1.44 * 0.75) = 1.098 / 1.68.
        let cand = toks(&[1, 2, 3, 4]);
        let reference = toks(&[1, 9, 2, 4, 8]);
        let expect = 1.098 / 1.68;
        assert!((rouge_l(&cand, &[reference]) - expect).abs() < 1e-12);
    }

    #[test]
    fn rouge_takes_max_over_references() {
        let cand = toks(&[1, 2, 3]);
        let far = toks(&[9, 9, 9]);
        let near = toks(&[1, 2, 3]);
        let got = rouge_l(&cand, &[far.clone(), near.clone()]);
        assert_eq!(got, rouge_l(&cand, &[near]));
        assert!(got > rouge_l(&cand, &[far]));
    }

    #[test]
    fn rouge_empty_candidate_zero() {
        assert_eq!(rouge_l(&[], &[toks(&[1])]), 0.0);
    }

    #[test]
    fn cider_single_document_idf_collapses() {
        // With a one-item corpus every idf is ln(1/1) = 0, so every vector is
        // zero and the zero-norm convention pins all scores, including the
        // identical pair, at the corpus maximum of 0.
        let item = (toks(&[1, 2, 3, 4, 5]), vec![toks(&[1, 2, 3, 4, 5])]);
        let scores = cider_scores(&[item]);
        assert_eq!(scores, vec![0.0]);
    }

    #[test]
    fn cider_identical_pair_tops_two_item_corpus() {
        let a = toks(&[1, 2, 3, 4, 5, 6]);
        let b = toks(&[7, 8, 9, 10, 11, 12]);
        let corpus = vec![
            (a.clone(), vec![a.clone()]),
            (toks(&[7, 8, 1, 2, 9, 12]), vec![b.clone()]),
        ];
        let scores = cider_scores(&corpus);
        assert!((scores[0] - 1.0).abs() < 1e-12, "identical pair: {}", scores[0]);
        assert!(scores[1] < scores[0]);
        assert!(scores[1] >= 0.0);
    }

    #[test]
    fn cider_empty_candidate_zero() {
        let corpus = vec![
            (Vec::new(), vec![toks(&[1, 2, 3])]),
            (toks(&[1, 2, 3]), vec![toks(&[1, 2, 3])]),
        ];
        let scores = cider_scores(&corpus);
        assert_eq!(scores[0], 0.0);
    }

    #[test]
    fn cider_reference_permutation_invariant() {
        let cand = toks(&[1, 2, 3, 4]);
        let r1 = toks(&[1, 2, 5, 6]);
        let r2 = toks(&[3, 4, 1, 2]);
        let other = (toks(&[8, 9]), vec![toks(&[8, 9, 10])]);
        let a = cider_scores(&[(cand.clone(), vec![r1.clone(), r2.clone()]), other.clone()]);
        let b = cider_scores(&[(cand, vec![r2, r1]), other]);
        assert_eq!(a, b);
    }
}
