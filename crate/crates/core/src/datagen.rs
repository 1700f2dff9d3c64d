//! Synthetic codemixed training data from monolingual corpora.
//!
//! Real codemixed text mostly follows two shapes: a sentence that starts in
//! one language and switches once (intra-mix), or a dominant language
//! framing a short embedded span of a second language (inter-mix). The
//! generator samples a language pair uniformly, picks one of the two
//! patterns uniformly, and assembles an example of at most eight tokens
//! from phrases drawn uniformly out of the monolingual store.

use std::io::BufRead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lang::{LangId, LanguageRegistry};
use crate::text::{tokenize, Token};

/// Maximum tokens per generated example.
pub const MAX_EXAMPLE_TOKENS: usize = 8;

/// Phrases harvested from monolingual text, bucketed by language.
#[derive(Debug, Clone, Default)]
pub struct MonolingualStore {
    phrases: Vec<Vec<Vec<Token>>>,
    multi_token: Vec<Vec<usize>>,
}

/// What `ingest` saw while scanning the corpus.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestStats {
    pub lines: usize,
    pub skipped: Vec<(usize, String)>,
    pub phrases: usize,
}

impl MonolingualStore {
    /// Reads `lang<TAB>text` lines, tokenizes them, and stores token
    /// sequences chunked to at most [`MAX_EXAMPLE_TOKENS`] tokens. Lines
    /// with unknown language codes are skipped and reported.
    pub fn ingest(reader: impl BufRead, registry: &LanguageRegistry) -> Result<(Self, IngestStats)> {
        let mut store = MonolingualStore {
            phrases: vec![Vec::new(); registry.len()],
            multi_token: vec![Vec::new(); registry.len()],
        };
        let mut stats = IngestStats::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            stats.lines += 1;
            let line_no = i + 1;
            let Some((code, text)) = line.split_once('\t') else {
                return Err(Error::format(
                    "monolingual corpus",
                    format!("line {line_no}: expected `lang<TAB>text`"),
                ));
            };
            let Some(lang) = registry.id(code) else {
                stats.skipped.push((line_no, code.to_string()));
                continue;
            };
            let sentence = tokenize(text);
            for chunk in sentence.tokens().chunks(MAX_EXAMPLE_TOKENS) {
                store.push_phrase(lang, chunk.to_vec());
                stats.phrases += 1;
            }
        }
        Ok((store, stats))
    }

    pub fn push_phrase(&mut self, lang: LangId, phrase: Vec<Token>) {
        debug_assert!(!phrase.is_empty());
        let bucket = &mut self.phrases[lang.index()];
        if phrase.len() >= 2 {
            self.multi_token[lang.index()].push(bucket.len());
        }
        bucket.push(phrase);
    }

    pub fn phrase_count(&self, lang: LangId) -> usize {
        self.phrases[lang.index()].len()
    }

    fn draw<'a>(&'a self, lang: LangId, rng: &mut ChaCha8Rng) -> &'a [Token] {
        let bucket = &self.phrases[lang.index()];
        &bucket[rng.random_range(0..bucket.len())]
    }

    fn draw_multi<'a>(&'a self, lang: LangId, rng: &mut ChaCha8Rng) -> Option<&'a [Token]> {
        let indices = &self.multi_token[lang.index()];
        if indices.is_empty() {
            return None;
        }
        Some(&self.phrases[lang.index()][indices[rng.random_range(0..indices.len())]])
    }
}

/// The two generated codemixing shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixPattern {
    /// One switch: a phrase in one language followed by a phrase in another.
    Intra,
    /// A 1-2 token minority span embedded strictly inside a dominant phrase.
    Inter,
}

/// One generated example with per-token gold labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticExample {
    pub tokens: Vec<Token>,
    pub labels: Vec<LangId>,
    pub pattern: MixPattern,
    /// `(dominant, other)`: the leading language for intra-mix, the framing
    /// language for inter-mix.
    pub pair: (LangId, LangId),
}

/// Deterministic example generator: example `i` depends only on
/// `(seed, i)`, so generation can be sharded or replayed freely.
pub struct Generator<'a> {
    store: &'a MonolingualStore,
    pairs: Vec<(LangId, LangId)>,
    seed: u64,
}

impl<'a> Generator<'a> {
    /// Validates that every pair has phrases on both sides before any
    /// example is produced.
    pub fn new(
        store: &'a MonolingualStore,
        pairs: &[(LangId, LangId)],
        registry: &LanguageRegistry,
        seed: u64,
    ) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Empty("language pair list"));
        }
        for &(a, b) in pairs {
            if a == b {
                return Err(Error::arg(format!(
                    "pair ({}, {}) must name two distinct languages",
                    registry.code(a),
                    registry.code(b)
                )));
            }
            for lang in [a, b] {
                if store.phrase_count(lang) == 0 {
                    return Err(Error::arg(format!(
                        "no monolingual phrases for `{}` in pair ({}, {})",
                        registry.code(lang),
                        registry.code(a),
                        registry.code(b)
                    )));
                }
            }
        }
        Ok(Generator { store, pairs: pairs.to_vec(), seed })
    }

    /// Generates example `index`.
    pub fn example(&self, index: u64) -> SyntheticExample {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        let (a, b) = self.pairs[rng.random_range(0..self.pairs.len())];
        let intra = rng.random_range(0..2u8) == 0;
        if intra {
            self.intra(a, b, &mut rng)
        } else {
            self.inter(a, b, &mut rng)
        }
    }

    pub fn iter(&self, count: u64) -> impl Iterator<Item = SyntheticExample> + '_ {
        (0..count).map(|i| self.example(i))
    }

    fn intra(&self, a: LangId, b: LangId, rng: &mut ChaCha8Rng) -> SyntheticExample {
        let first = self.store.draw(a, rng);
        let second = self.store.draw(b, rng);
        // Cap the total at eight tokens, trimming the later-drawn phrase
        // first so the opening phrase stays intact.
        let second_len = second.len().min((MAX_EXAMPLE_TOKENS - first.len().min(7)).max(1));
        let first_len = first.len().min(MAX_EXAMPLE_TOKENS - second_len);
        let a_leads = rng.random_range(0..2u8) == 0;
        let (lead, lead_len, lead_lang, tail, tail_len, tail_lang) = if a_leads {
            (first, first_len, a, second, second_len, b)
        } else {
            (second, second_len, b, first, first_len, a)
        };
        let mut tokens = Vec::with_capacity(lead_len + tail_len);
        tokens.extend_from_slice(&lead[..lead_len]);
        tokens.extend_from_slice(&tail[..tail_len]);
        let mut labels = vec![lead_lang; lead_len];
        labels.extend(std::iter::repeat_n(tail_lang, tail_len));
        SyntheticExample { tokens, labels, pattern: MixPattern::Intra, pair: (lead_lang, tail_lang) }
    }

    fn inter(&self, a: LangId, b: LangId, rng: &mut ChaCha8Rng) -> SyntheticExample {
        let a_dominant = rng.random_range(0..2u8) == 0;
        let (mut dominant, mut other) = if a_dominant { (a, b) } else { (b, a) };
        // The frame needs at least two tokens. If the preferred side has no
        // multi-token phrase, swap; if neither side has one, degrade to an
        // intra-mix example (single-token corpora cannot host an embedding).
        let frame = match self.store.draw_multi(dominant, rng) {
            Some(f) => f,
            None => {
                std::mem::swap(&mut dominant, &mut other);
                match self.store.draw_multi(dominant, rng) {
                    Some(f) => f,
                    None => return self.intra(a, b, rng),
                }
            }
        };
        let minority_target = rng.random_range(1..=2usize);
        let minority_phrase = self.store.draw(other, rng);
        let minority_len = minority_phrase.len().min(minority_target);
        let frame_len = frame.len().min(MAX_EXAMPLE_TOKENS - minority_len);
        // Strictly interior insertion point: the frame supplies both the
        // first and the last token.
        let insert_at = rng.random_range(1..frame_len);
        let mut tokens = Vec::with_capacity(frame_len + minority_len);
        tokens.extend_from_slice(&frame[..insert_at]);
        tokens.extend_from_slice(&minority_phrase[..minority_len]);
        tokens.extend_from_slice(&frame[insert_at..frame_len]);
        let mut labels = vec![dominant; insert_at];
        labels.extend(std::iter::repeat_n(other, minority_len));
        labels.extend(std::iter::repeat_n(dominant, frame_len - insert_at));
        SyntheticExample { tokens, labels, pattern: MixPattern::Inter, pair: (dominant, other) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn registry() -> LanguageRegistry {
        LanguageRegistry::from_codes(["en", "es", "de"]).unwrap()
    }

    fn store(reg: &LanguageRegistry) -> MonolingualStore {
        let corpus = "en\tgive me that book please right now\n\
                      en\ttranslate to english\n\
                      es\tdame ese libro por favor\n\
                      es\tel gato\n\
                      de\tapfel\n";
        MonolingualStore::ingest(corpus.as_bytes(), reg).unwrap().0
    }

    #[test]
    fn ingest_chunks_and_skips() {
        let reg = registry();
        let long_line = format!("en\t{}\n xx\tbad\n", vec!["tok"; 20].join(" "));
        let corpus = format!("{long_line}es\thola\n\n");
        let (store, stats) = MonolingualStore::ingest(corpus.as_bytes(), &reg).unwrap();
        // 20 tokens chunk into 8 + 8 + 4.
        assert_eq!(store.phrase_count(reg.id("en").unwrap()), 3);
        assert_eq!(store.phrase_count(reg.id("es").unwrap()), 1);
        assert_eq!(stats.skipped.len(), 1);
        assert_eq!(stats.phrases, 4);
    }

    fn validate(example: &SyntheticExample) {
        assert!(!example.tokens.is_empty());
        assert!(example.tokens.len() <= MAX_EXAMPLE_TOKENS);
        assert_eq!(example.tokens.len(), example.labels.len());
        let (dom, other) = example.pair;
        assert!(example.labels.iter().all(|&l| l == dom || l == other));
        let distinct: std::collections::BTreeSet<_> = example.labels.iter().collect();
        assert_eq!(distinct.len(), 2, "examples are bilingual");
        let switches = example.labels.windows(2).filter(|w| w[0] != w[1]).count();
        match example.pattern {
            MixPattern::Intra => assert_eq!(switches, 1),
            MixPattern::Inter => {
                let minority: Vec<usize> = example
                    .labels
                    .iter()
                    .enumerate()
                    .filter(|&(_, &l)| l == other)
                    .map(|(i, _)| i)
                    .collect();
                assert!(minority.len() <= 2 && !minority.is_empty());
                assert!(minority.windows(2).all(|w| w[1] == w[0] + 1), "contiguous");
                assert!(*minority.first().unwrap() > 0, "not at the start");
                assert!(*minority.last().unwrap() < example.labels.len() - 1, "not at the end");
            }
        }
    }

    #[test]
    fn examples_satisfy_shape_invariants() {
        let reg = registry();
        let store = store(&reg);
        let pairs = [
            (reg.id("en").unwrap(), reg.id("es").unwrap()),
            (reg.id("en").unwrap(), reg.id("de").unwrap()),
        ];
        let generator = Generator::new(&store, &pairs, &reg, 7).unwrap();
        for example in generator.iter(500) {
            validate(&example);
        }
    }

    #[test]
    fn generation_is_reproducible_and_indexable() {
        let reg = registry();
        let store = store(&reg);
        let pairs = [(reg.id("en").unwrap(), reg.id("es").unwrap())];
        let g1 = Generator::new(&store, &pairs, &reg, 99).unwrap();
        let g2 = Generator::new(&store, &pairs, &reg, 99).unwrap();
        let a: Vec<_> = g1.iter(50).collect();
        let b: Vec<_> = g2.iter(50).collect();
        assert_eq!(a, b);
        // Example i is addressable out of order.
        assert_eq!(g1.example(17), a[17].clone());
        let g3 = Generator::new(&store, &pairs, &reg, 100).unwrap();
        assert_ne!(g3.iter(50).collect::<Vec<_>>(), a);
    }

    #[test]
    fn missing_language_is_an_error_naming_the_pair() {
        let reg = registry();
        let (empty_store, _) = MonolingualStore::ingest("en\thello there\n".as_bytes(), &reg).unwrap();
        let pairs = [(reg.id("en").unwrap(), reg.id("es").unwrap())];
        let err = Generator::new(&empty_store, &pairs, &reg, 1).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("es") && msg.contains("en"), "{msg}");
    }

    #[test]
    fn single_token_corpora_degrade_to_intra() {
        let reg = registry();
        let corpus = "en\tone\nes\tuno\n";
        let (store, _) = MonolingualStore::ingest(corpus.as_bytes(), &reg).unwrap();
        let pairs = [(reg.id("en").unwrap(), reg.id("es").unwrap())];
        let generator = Generator::new(&store, &pairs, &reg, 3).unwrap();
        for example in generator.iter(50) {
            assert_eq!(example.pattern, MixPattern::Intra);
            validate(&example);
        }
    }
}
