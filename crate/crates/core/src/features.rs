//! Grouped sparse feature extraction for the token classifier.
//!
//! A token (in sentence context) is described by one sparse vector per
//! feature group: hashed character n-grams (n = 1..4) with fractional
//! weights, normalized script counts, and three lexicon-derived groups.
//! N-gram and lexicon groups are extracted for the previous and next tokens
//! as well as the current one; the script group only looks at the current
//! token.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::script::{script_of_char, NUM_SCRIPTS};
use crate::text::{Sentence, Token};

/// Which family of features a group carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupKind {
    /// Character n-grams of the given order, hashed into the group vocabulary.
    Ngram(u8),
    /// Normalized per-script character counts.
    Script,
    /// The lexicon's stored language distribution.
    LexDistribution,
    /// Weight 1 at every language with non-zero lexicon probability.
    LexActive,
    /// One-hot language indicator when the lexicon knows exactly one language.
    LexSingleton,
}

impl GroupKind {
    pub fn is_lexicon(self) -> bool {
        matches!(
            self,
            GroupKind::LexDistribution | GroupKind::LexActive | GroupKind::LexSingleton
        )
    }
}

/// Window slot a group reads from, relative to the scored token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WindowPosition {
    Prev,
    Current,
    Next,
}

impl WindowPosition {
    pub const ALL: [WindowPosition; 3] =
        [WindowPosition::Prev, WindowPosition::Current, WindowPosition::Next];

    fn offset(self) -> isize {
        match self {
            WindowPosition::Prev => -1,
            WindowPosition::Current => 0,
            WindowPosition::Next => 1,
        }
    }
}

/// One feature group: kind, window position, vocabulary size and embedding
/// dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureGroup {
    pub kind: GroupKind,
    pub position: WindowPosition,
    pub vocab: u32,
    pub dim: u32,
}

/// Dimension knobs for building a [`GroupLayout`].
///
/// The defaults mirror the model's standard feature spaces: n-gram
/// vocabularies 1000/1000/5000/5000 at dimension 16, a 27-way script group
/// at dimension 8, and lexicon groups sized by the language count at
/// dimension 16.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayoutSpec {
    pub ngram_vocab: [u32; 4],
    pub ngram_dim: u32,
    pub script_dim: u32,
    pub lex_dim: u32,
    pub include_lexicon: bool,
}

impl LayoutSpec {
    /// The full feature set, lexicon groups included.
    pub fn full() -> Self {
        LayoutSpec {
            ngram_vocab: [1000, 1000, 5000, 5000],
            ngram_dim: 16,
            script_dim: 8,
            lex_dim: 16,
            include_lexicon: true,
        }
    }

    /// The lexicon-free variant for resource-constrained deployments.
    pub fn small() -> Self {
        LayoutSpec { include_lexicon: false, ..Self::full() }
    }
}

/// The ordered list of feature groups for a model, plus derived bookkeeping:
/// which embedding matrix each slot reads (matrices are shared across window
/// positions) and where each slot's block starts in the concatenated
/// embedding layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupLayout {
    slots: Vec<FeatureGroup>,
    matrices: Vec<EmbeddingSpec>,
    slot_matrix: Vec<usize>,
    slot_offset: Vec<usize>,
    h0_size: usize,
    include_lexicon: bool,
}

/// Shape of one shared embedding matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingSpec {
    pub kind: GroupKind,
    pub vocab: u32,
    pub dim: u32,
}

impl GroupLayout {
    /// Builds the canonical slot order: n-gram groups (n ascending, window
    /// prev/current/next), the script group, then the lexicon groups.
    pub fn new(spec: &LayoutSpec, num_languages: u32) -> Self {
        let mut slots = Vec::new();
        for n in 1..=4u8 {
            for position in WindowPosition::ALL {
                slots.push(FeatureGroup {
                    kind: GroupKind::Ngram(n),
                    position,
                    vocab: spec.ngram_vocab[(n - 1) as usize],
                    dim: spec.ngram_dim,
                });
            }
        }
        slots.push(FeatureGroup {
            kind: GroupKind::Script,
            position: WindowPosition::Current,
            vocab: NUM_SCRIPTS as u32,
            dim: spec.script_dim,
        });
        if spec.include_lexicon {
            for kind in [GroupKind::LexDistribution, GroupKind::LexActive, GroupKind::LexSingleton] {
                for position in WindowPosition::ALL {
                    slots.push(FeatureGroup {
                        kind,
                        position,
                        vocab: num_languages,
                        dim: spec.lex_dim,
                    });
                }
            }
        }
        Self::from_groups(slots).expect("canonical layout is consistent")
    }

    /// Builds a layout from an explicit slot list. Slots sharing a kind must
    /// agree on vocabulary and dimension since they share one matrix.
    pub fn from_groups(slots: Vec<FeatureGroup>) -> Result<Self> {
        let mut matrices: Vec<EmbeddingSpec> = Vec::new();
        let mut slot_matrix = Vec::with_capacity(slots.len());
        let mut slot_offset = Vec::with_capacity(slots.len());
        let mut h0_size = 0usize;
        let mut include_lexicon = false;
        for group in &slots {
            include_lexicon |= group.kind.is_lexicon();
            let idx = match matrices.iter().position(|m| m.kind == group.kind) {
                Some(idx) => {
                    if matrices[idx].vocab != group.vocab || matrices[idx].dim != group.dim {
                        return Err(Error::arg(
                            "groups of one kind must share vocabulary and dimension",
                        ));
                    }
                    idx
                }
                None => {
                    matrices.push(EmbeddingSpec {
                        kind: group.kind,
                        vocab: group.vocab,
                        dim: group.dim,
                    });
                    matrices.len() - 1
                }
            };
            slot_matrix.push(idx);
            slot_offset.push(h0_size);
            h0_size += group.dim as usize;
        }
        Ok(GroupLayout { slots, matrices, slot_matrix, slot_offset, h0_size, include_lexicon })
    }

    pub fn slots(&self) -> &[FeatureGroup] {
        &self.slots
    }

    pub fn matrices(&self) -> &[EmbeddingSpec] {
        &self.matrices
    }

    pub fn matrix_of_slot(&self, slot: usize) -> usize {
        self.slot_matrix[slot]
    }

    /// Start of the slot's block within the concatenated embedding layer.
    pub fn offset_of_slot(&self, slot: usize) -> usize {
        self.slot_offset[slot]
    }

    /// Width of the concatenated embedding layer: the sum of slot dims.
    pub fn h0_size(&self) -> usize {
        self.h0_size
    }

    pub fn include_lexicon(&self) -> bool {
        self.include_lexicon
    }
}

/// Sparse feature vector: `(index, weight)` entries with strictly
/// ascending indices. Weights at a repeated hashed index are merged by
/// summation during construction.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    entries: Vec<(u32, f64)>,
}

impl SparseVector {
    pub fn empty() -> Self {
        SparseVector { entries: Vec::new() }
    }

    fn from_map(map: BTreeMap<u32, f64>) -> Self {
        SparseVector { entries: map.into_iter().collect() }
    }

    /// Builds from entries that are already strictly ascending.
    pub fn from_sorted(entries: Vec<(u32, f64)>) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        SparseVector { entries }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w).sum()
    }
}

/// One sparse vector per layout slot, in slot order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    vectors: Vec<SparseVector>,
}

impl FeatureSet {
    pub fn new(vectors: Vec<SparseVector>) -> Self {
        FeatureSet { vectors }
    }

    pub fn vectors(&self) -> &[SparseVector] {
        &self.vectors
    }

    pub fn vector(&self, slot: usize) -> &SparseVector {
        &self.vectors[slot]
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Salt prefix keeping n-gram groups of different orders independent.
fn ngram_salt(n: u8) -> [u8; 8] {
    [b'n', b'g', b'r', b'a', b'm', b'0' + n, 0, 0]
}

fn fnv1a64(salt: &[u8; 8], chars: impl Iterator<Item = char>) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in salt {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    let mut buf = [0u8; 4];
    for c in chars {
        for &b in c.encode_utf8(&mut buf).as_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

/// Stable hashed index of an n-gram string within a vocabulary of size
/// `vocab`. FNV-1a over the salted UTF-8 bytes; identical on every platform.
pub fn hash_ngram(ngram: &str, n: u8, vocab: u32) -> u32 {
    (fnv1a64(&ngram_salt(n), ngram.chars()) % vocab as u64) as u32
}

/// Hashes an n-gram string into `group`'s index space.
pub fn hash_feature(ngram: &str, group: &FeatureGroup) -> Result<u32> {
    match group.kind {
        GroupKind::Ngram(n) => Ok(hash_ngram(ngram, n, group.vocab)),
        _ => Err(Error::arg("hash_feature only applies to n-gram groups")),
    }
}

/// All character n-grams of the token padded with one boundary symbol on
/// each side (`^token$`), in first-occurrence order, with the fraction each
/// distinct n-gram contributes. Fractions over a non-empty result sum to 1.
/// Tokens too short to yield a single padded n-gram return an empty list.
pub fn extract_ngrams(token: &Token, n: usize) -> Vec<(String, f64)> {
    assert!(n >= 1, "n-gram order must be positive");
    let padded = padded_chars(token);
    if padded.len() < n {
        return Vec::new();
    }
    let total = (padded.len() - n + 1) as f64;
    let mut order: Vec<String> = Vec::new();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for window in padded.windows(n) {
        let s: String = window.iter().collect();
        match counts.get_mut(&s) {
            Some(c) => *c += 1,
            None => {
                counts.insert(s.clone(), 1);
                order.push(s);
            }
        }
    }
    order
        .into_iter()
        .map(|s| {
            let c = counts[&s];
            (s, c as f64 / total)
        })
        .collect()
}

fn padded_chars(token: &Token) -> Vec<char> {
    let mut padded = Vec::with_capacity(token.char_count() + 2);
    padded.push('^');
    padded.extend(token.text().chars());
    padded.push('$');
    padded
}

/// Hashed sparse vector of one n-gram group: every window of the padded
/// token contributes `1/total` at its hashed index.
fn ngram_vector(token: &Token, n: u8, vocab: u32) -> SparseVector {
    let padded = padded_chars(token);
    let n = n as usize;
    if padded.len() < n {
        return SparseVector::empty();
    }
    let share = 1.0 / (padded.len() - n + 1) as f64;
    let salt = ngram_salt(n as u8);
    let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
    for window in padded.windows(n) {
        let idx = (fnv1a64(&salt, window.iter().copied()) % vocab as u64) as u32;
        *acc.entry(idx).or_default() += share;
    }
    SparseVector::from_map(acc)
}

/// Normalized script counts of a token's characters.
pub fn extract_script_features(token: &Token) -> SparseVector {
    let mut counts = [0usize; NUM_SCRIPTS];
    for c in token.text().chars() {
        counts[script_of_char(c).id()] += 1;
    }
    let total = token.char_count() as f64;
    let entries = counts
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c > 0)
        .map(|(s, &c)| (s as u32, c as f64 / total))
        .collect();
    SparseVector::from_sorted(entries)
}

/// The three lexicon feature vectors (distribution, active, singleton) for
/// a token, all empty when neither the lexicon nor the prefix table fires.
pub fn extract_lexicon_features(token: &Token, lexicon: &Lexicon) -> [SparseVector; 3] {
    match lexicon.lookup(token.text()) {
        Some(probs) => lexicon_vectors(probs),
        None => [SparseVector::empty(), SparseVector::empty(), SparseVector::empty()],
    }
}

fn lexicon_vectors(probs: &[f32]) -> [SparseVector; 3] {
    let mut distribution = Vec::new();
    let mut active = Vec::new();
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            distribution.push((i as u32, p as f64));
            active.push((i as u32, 1.0));
        }
    }
    let singleton = if active.len() == 1 {
        SparseVector::from_sorted(vec![(active[0].0, 1.0)])
    } else {
        SparseVector::empty()
    };
    [SparseVector::from_sorted(distribution), SparseVector::from_sorted(active), singleton]
}

/// Extracts every group of `layout` for the token at `position`. Window
/// slots that fall off the sentence edge produce empty vectors; so do
/// lexicon groups when `lexicon` is `None` or the lookup misses.
pub fn extract_all(
    layout: &GroupLayout,
    sentence: &Sentence,
    position: usize,
    lexicon: Option<&Lexicon>,
) -> Result<FeatureSet> {
    if position >= sentence.len() {
        return Err(Error::arg(format!(
            "token position {position} out of range for sentence of length {}",
            sentence.len()
        )));
    }
    // One lexicon lookup per window slot, shared by the three lexicon kinds.
    let mut lex_cache: [Option<[SparseVector; 3]>; 3] = [None, None, None];
    let mut vectors = Vec::with_capacity(layout.slots().len());
    for group in layout.slots() {
        let token = token_at(sentence, position, group.position);
        let vector = match (group.kind, token) {
            (_, None) => SparseVector::empty(),
            (GroupKind::Ngram(n), Some(tok)) => ngram_vector(tok, n, group.vocab),
            (GroupKind::Script, Some(tok)) => extract_script_features(tok),
            (kind, Some(tok)) => {
                let cache_idx = group.position as usize;
                let cached = lex_cache[cache_idx].get_or_insert_with(|| match lexicon {
                    Some(lex) => extract_lexicon_features(tok, lex),
                    None => {
                        [SparseVector::empty(), SparseVector::empty(), SparseVector::empty()]
                    }
                });
                match kind {
                    GroupKind::LexDistribution => cached[0].clone(),
                    GroupKind::LexActive => cached[1].clone(),
                    GroupKind::LexSingleton => cached[2].clone(),
                    _ => unreachable!(),
                }
            }
        };
        vectors.push(vector);
    }
    Ok(FeatureSet { vectors })
}

fn token_at(sentence: &Sentence, position: usize, window: WindowPosition) -> Option<&Token> {
    let idx = position as isize + window.offset();
    if idx < 0 {
        None
    } else {
        sentence.tokens().get(idx as usize)
    }
}
