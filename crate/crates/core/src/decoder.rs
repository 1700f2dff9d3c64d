//! Sentence-level label assignment from per-token scores.
//!
//! Three strategies:
//!
//! * [`decode_greedy`] — independent per-token argmax;
//! * [`decode_switch_penalty`] — Viterbi over the full label set with a
//!   fixed `ln p` transition penalty charged at every language switch;
//! * [`decode_constrained`] — global search restricted to monolingual
//!   outputs or one of a fixed set of language pairs: the best assignment
//!   is found independently per allowed set (per-token maximization is
//!   globally optimal because scores are token-separable) and the highest
//!   scoring set wins. Runs in `O(tokens x sets)`.

use std::collections::BTreeSet;
use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lang::{LangId, LanguageRegistry};
use crate::model::TokenScores;

/// A permitted output vocabulary for one sentence: one language, or an
/// unordered pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LangSet {
    first: LangId,
    second: Option<LangId>,
}

impl LangSet {
    pub fn singleton(lang: LangId) -> Self {
        LangSet { first: lang, second: None }
    }

    pub fn pair(a: LangId, b: LangId) -> Self {
        if a == b {
            Self::singleton(a)
        } else {
            LangSet { first: a.min(b), second: Some(a.max(b)) }
        }
    }

    pub fn len(&self) -> usize {
        1 + self.second.is_some() as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, lang: LangId) -> bool {
        self.first == lang || self.second == Some(lang)
    }

    pub fn members(&self) -> impl Iterator<Item = LangId> {
        std::iter::once(self.first).chain(self.second)
    }
}

/// Ordered list of allowed language sets: every singleton, then the
/// configured pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    sets: Vec<LangSet>,
}

impl ConstraintSet {
    /// All singletons over the registry plus the given pairs (deduplicated,
    /// order preserved).
    pub fn from_pairs(registry: &LanguageRegistry, pairs: &[(LangId, LangId)]) -> Self {
        let mut sets: Vec<LangSet> = registry.ids().map(LangSet::singleton).collect();
        let mut seen: BTreeSet<LangSet> = sets.iter().copied().collect();
        for &(a, b) in pairs {
            let set = LangSet::pair(a, b);
            if seen.insert(set) {
                sets.push(set);
            }
        }
        ConstraintSet { sets }
    }

    /// The default constraint set: `en` paired with every other registry
    /// language, plus all singletons.
    pub fn default_for(registry: &LanguageRegistry) -> Result<Self> {
        let en = registry
            .id("en")
            .ok_or_else(|| Error::arg("default constraints require `en` in the registry"))?;
        let pairs: Vec<(LangId, LangId)> =
            registry.ids().filter(|&l| l != en).map(|l| (en, l)).collect();
        Ok(Self::from_pairs(registry, &pairs))
    }

    /// Parses a constraints file: one `code code` pair per line, `#`
    /// comments allowed. Unknown codes are an error naming the line.
    pub fn from_reader(reader: impl BufRead, registry: &LanguageRegistry) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let line_no = i + 1;
            let fields: Vec<&str> = content.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(Error::format(
                    "constraints file",
                    format!("line {line_no}: expected two language codes"),
                ));
            }
            let a = registry.require(fields[0], Some(line_no))?;
            let b = registry.require(fields[1], Some(line_no))?;
            pairs.push((a, b));
        }
        Ok(Self::from_pairs(registry, &pairs))
    }

    pub fn from_file(path: impl AsRef<Path>, registry: &LanguageRegistry) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(file), registry)
    }

    pub fn sets(&self) -> &[LangSet] {
        &self.sets
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

/// A decoded sentence: one label per token, the path score, and (for
/// constrained decoding) the winning language set.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedSequence {
    pub labels: Vec<LangId>,
    pub total_log_prob: f64,
    pub chosen_set: Option<LangSet>,
}

fn check_scores(scores: &[TokenScores]) -> Result<usize> {
    let Some(first) = scores.first() else {
        return Err(Error::Empty("token scores"));
    };
    let langs = first.log_probs.len();
    if langs == 0 {
        return Err(Error::Empty("language set in token scores"));
    }
    if scores.iter().any(|s| s.log_probs.len() != langs) {
        return Err(Error::arg("token score vectors have inconsistent lengths"));
    }
    Ok(langs)
}

/// Independent per-token argmax. Ties break toward the lower language id.
pub fn decode_greedy(scores: &[TokenScores]) -> Result<DecodedSequence> {
    check_scores(scores)?;
    let mut labels = Vec::with_capacity(scores.len());
    let mut total = 0.0f64;
    for token in scores {
        let (best, lp) = argmax(&token.log_probs);
        labels.push(best);
        total += lp;
    }
    Ok(DecodedSequence { labels, total_log_prob: total, chosen_set: None })
}

fn argmax(log_probs: &[f32]) -> (LangId, f64) {
    let mut best = 0usize;
    for (l, &lp) in log_probs.iter().enumerate().skip(1) {
        if lp > log_probs[best] {
            best = l;
        }
    }
    (LangId::new(best as u16), log_probs[best] as f64)
}

/// Viterbi decoding with a `ln p` penalty for every adjacent-token language
/// change. `p = 1` reproduces greedy decoding; smaller values increasingly
/// discourage switching. Ties break toward the lower language id.
pub fn decode_switch_penalty(scores: &[TokenScores], p: f64) -> Result<DecodedSequence> {
    let langs = check_scores(scores)?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::arg(format!("switch penalty p must be in (0, 1], got {p}")));
    }
    let penalty = p.ln();
    let mut dp: Vec<f64> = scores[0].log_probs.iter().map(|&x| x as f64).collect();
    let mut backpointers: Vec<Vec<u16>> = Vec::with_capacity(scores.len().saturating_sub(1));
    for token in &scores[1..] {
        let mut next = vec![f64::NEG_INFINITY; langs];
        let mut bp = vec![0u16; langs];
        for l in 0..langs {
            let mut best_k = 0usize;
            let mut best = dp[0] + if l == 0 { 0.0 } else { penalty };
            for (k, &prev) in dp.iter().enumerate().skip(1) {
                let cand = prev + if k == l { 0.0 } else { penalty };
                if cand > best {
                    best = cand;
                    best_k = k;
                }
            }
            next[l] = best + token.log_probs[l] as f64;
            bp[l] = best_k as u16;
        }
        dp = next;
        backpointers.push(bp);
    }
    let mut best = 0usize;
    for l in 1..langs {
        if dp[l] > dp[best] {
            best = l;
        }
    }
    let mut labels = vec![LangId::new(best as u16); scores.len()];
    let mut cursor = best;
    for (t, bp) in backpointers.iter().enumerate().rev() {
        cursor = bp[cursor] as usize;
        labels[t] = LangId::new(cursor as u16);
    }
    Ok(DecodedSequence { labels, total_log_prob: dp[best], chosen_set: None })
}

/// Globally constrained decoding: the best per-token assignment under each
/// allowed set, then the best set overall. Ties prefer monolingual sets
/// over pairs, then the earlier set in the constraint order.
pub fn decode_constrained(
    scores: &[TokenScores],
    constraints: &ConstraintSet,
) -> Result<DecodedSequence> {
    let langs = check_scores(scores)?;
    if constraints.is_empty() {
        return Err(Error::Empty("constraint set"));
    }
    let mut winner: Option<(f64, &LangSet)> = None;
    for set in constraints.sets() {
        if set.members().any(|l| l.index() >= langs) {
            return Err(Error::arg(format!(
                "constraint set member outside the {langs}-language score vectors"
            )));
        }
        let mut total = 0.0f64;
        for token in scores {
            total += set_max(&token.log_probs, set).1;
        }
        let better = match winner {
            None => true,
            Some((best, best_set)) => {
                total > best || (total == best && set.len() < best_set.len())
            }
        };
        if better {
            winner = Some((total, set));
        }
    }
    let (total, set) = winner.expect("non-empty constraint list");
    let labels = scores.iter().map(|token| set_max(&token.log_probs, set).0).collect();
    Ok(DecodedSequence { labels, total_log_prob: total, chosen_set: Some(*set) })
}

fn set_max(log_probs: &[f32], set: &LangSet) -> (LangId, f64) {
    let mut best = set.first;
    let mut best_lp = log_probs[set.first.index()];
    if let Some(second) = set.second {
        let lp = log_probs[second.index()];
        if lp > best_lp {
            best = second;
            best_lp = lp;
        }
    }
    (best, best_lp as f64)
}

/// Single language for the whole sentence: constrained decoding restricted
/// to singleton sets, i.e. the language with the highest summed log
/// probability. Ties break toward the lower id.
pub fn sentence_language(scores: &[TokenScores]) -> Result<LangId> {
    let langs = check_scores(scores)?;
    let mut totals = vec![0.0f64; langs];
    for token in scores {
        for (acc, &lp) in totals.iter_mut().zip(&token.log_probs) {
            *acc += lp as f64;
        }
    }
    let mut best = 0usize;
    for l in 1..langs {
        if totals[l] > totals[best] {
            best = l;
        }
    }
    Ok(LangId::new(best as u16))
}
