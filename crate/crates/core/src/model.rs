//! The feed-forward token classifier.
//!
//! Architecture: each feature group's sparse vector is multiplied into its
//! (position-shared) embedding matrix, the per-slot results are concatenated
//! into the embedding layer `h0`, followed by one ReLU hidden layer and a
//! softmax over the language set. Scoring is `h0 = vec[X_g E_g | g]`,
//! `h1 = relu(h0 W1 + b1)`, `log p = log_softmax(h1 W2 + b2)`.
//!
//! The math is generic over [`Real`] so tests can run in `f64` while release
//! models store and compute `f32`.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{
    extract_all, FeatureGroup, FeatureSet, GroupKind, GroupLayout, LayoutSpec, WindowPosition,
};
use crate::lang::LanguageRegistry;
use crate::lexicon::Lexicon;
use crate::text::Sentence;
use crate::util::atomic_write;

/// Float type the network runs on.
pub trait Real:
    Float + num_traits::NumAssignOps + Default + std::fmt::Debug + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<R> {
    rows: usize,
    cols: usize,
    data: Vec<R>,
}

impl<R: Real> Matrix<R> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![R::zero(); rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[R] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [R] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[R] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [R] {
        &mut self.data
    }
}

/// Everything needed to build, run, and serialize one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub registry: LanguageRegistry,
    pub layout: GroupLayout,
    pub hidden: usize,
    /// Probability of zeroing all lexicon groups for a training instance.
    pub lexicon_dropout: f32,
}

pub const DEFAULT_HIDDEN: usize = 256;
pub const DEFAULT_LEXICON_DROPOUT: f32 = 0.5;

impl ModelConfig {
    /// Full variant: n-gram + script + lexicon features.
    pub fn full(registry: LanguageRegistry) -> Self {
        Self::with_spec(registry, &LayoutSpec::full(), DEFAULT_HIDDEN, DEFAULT_LEXICON_DROPOUT)
    }

    /// Small variant: no lexicon features, no lexicon table required.
    pub fn small(registry: LanguageRegistry) -> Self {
        Self::with_spec(registry, &LayoutSpec::small(), DEFAULT_HIDDEN, 0.0)
    }

    pub fn with_spec(
        registry: LanguageRegistry,
        spec: &LayoutSpec,
        hidden: usize,
        lexicon_dropout: f32,
    ) -> Self {
        assert!(hidden > 0, "hidden size must be positive");
        let layout = GroupLayout::new(spec, registry.len() as u32);
        ModelConfig { registry, layout, hidden, lexicon_dropout }
    }

    pub fn num_languages(&self) -> usize {
        self.registry.len()
    }

    /// Total trainable parameters: embedding matrices (each counted once,
    /// shared across window positions) plus the hidden and softmax layers.
    pub fn param_count(&self) -> usize {
        let embeddings: usize =
            self.layout.matrices().iter().map(|m| m.vocab as usize * m.dim as usize).sum();
        let h0 = self.layout.h0_size();
        let langs = self.num_languages();
        embeddings + h0 * self.hidden + self.hidden + self.hidden * langs + langs
    }
}

/// Model weights: one embedding matrix per feature-group kind, the hidden
/// layer, and the softmax layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters<R> {
    pub embeddings: Vec<Matrix<R>>,
    pub w1: Matrix<R>,
    pub b1: Vec<R>,
    pub w2: Matrix<R>,
    pub b2: Vec<R>,
}

impl<R: Real> Parameters<R> {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let embeddings = cfg
            .layout
            .matrices()
            .iter()
            .map(|m| Matrix::zeros(m.vocab as usize, m.dim as usize))
            .collect();
        Parameters {
            embeddings,
            w1: Matrix::zeros(cfg.layout.h0_size(), cfg.hidden),
            b1: vec![R::zero(); cfg.hidden],
            w2: Matrix::zeros(cfg.hidden, cfg.num_languages()),
            b2: vec![R::zero(); cfg.num_languages()],
        }
    }

    /// Seeded initialization: weights uniform in [-0.1, 0.1], biases zero.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Self::zeros(cfg);
        for m in &mut params.embeddings {
            fill_uniform(m.as_mut_slice(), &mut rng);
        }
        fill_uniform(params.w1.as_mut_slice(), &mut rng);
        fill_uniform(params.w2.as_mut_slice(), &mut rng);
        params
    }

    /// All tensors in serialization order. Useful for optimizers and
    /// gradient checks that treat parameters as one flat collection.
    pub fn tensors(&self) -> Vec<&[R]> {
        let mut v: Vec<&[R]> = self.embeddings.iter().map(Matrix::as_slice).collect();
        v.push(self.w1.as_slice());
        v.push(&self.b1);
        v.push(self.w2.as_slice());
        v.push(&self.b2);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [R]> {
        let Parameters { embeddings, w1, b1, w2, b2 } = self;
        let mut v: Vec<&mut [R]> = embeddings.iter_mut().map(Matrix::as_mut_slice).collect();
        v.push(w1.as_mut_slice());
        v.push(b1.as_mut_slice());
        v.push(w2.as_mut_slice());
        v.push(b2.as_mut_slice());
        v
    }
}

fn fill_uniform<R: Real>(slice: &mut [R], rng: &mut ChaCha8Rng) {
    for x in slice {
        *x = R::from_f64(rng.random_range(-0.1..0.1));
    }
}

/// Per-token output: log-probabilities over the registry's languages.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenScores {
    pub log_probs: Vec<f32>,
}

/// Intermediate activations kept for backpropagation.
pub(crate) struct ForwardCache<R> {
    pub h0: Vec<R>,
    pub z1: Vec<R>,
    pub h1: Vec<R>,
    pub log_probs: Vec<R>,
}

pub(crate) fn forward_cached<R: Real>(
    cfg: &ModelConfig,
    params: &Parameters<R>,
    features: &FeatureSet,
    drop_lexicon: bool,
) -> Result<ForwardCache<R>> {
    let layout = &cfg.layout;
    if features.len() != layout.slots().len() {
        return Err(Error::arg(format!(
            "feature set has {} groups, model expects {}",
            features.len(),
            layout.slots().len()
        )));
    }
    let mut h0 = vec![R::zero(); layout.h0_size()];
    for (slot, group) in layout.slots().iter().enumerate() {
        if drop_lexicon && group.kind.is_lexicon() {
            continue;
        }
        let matrix = &params.embeddings[layout.matrix_of_slot(slot)];
        let offset = layout.offset_of_slot(slot);
        let block = &mut h0[offset..offset + group.dim as usize];
        for &(idx, weight) in features.vector(slot).entries() {
            if idx >= group.vocab {
                return Err(Error::arg(format!(
                    "feature index {idx} out of range for group vocabulary {}",
                    group.vocab
                )));
            }
            let w = R::from_f64(weight);
            for (out, &e) in block.iter_mut().zip(matrix.row(idx as usize)) {
                *out += w * e;
            }
        }
    }

    let mut z1 = params.b1.clone();
    for (i, &x) in h0.iter().enumerate() {
        if x == R::zero() {
            continue;
        }
        for (z, &w) in z1.iter_mut().zip(params.w1.row(i)) {
            *z += x * w;
        }
    }
    let h1: Vec<R> = z1.iter().map(|&z| if z > R::zero() { z } else { R::zero() }).collect();

    let mut logits = params.b2.clone();
    for (j, &h) in h1.iter().enumerate() {
        if h == R::zero() {
            continue;
        }
        for (l, &w) in logits.iter_mut().zip(params.w2.row(j)) {
            *l += h * w;
        }
    }
    let log_probs = log_softmax(&logits);
    Ok(ForwardCache { h0, z1, h1, log_probs })
}

fn log_softmax<R: Real>(logits: &[R]) -> Vec<R> {
    let max = logits.iter().copied().fold(R::neg_infinity(), R::max);
    let mut sum = R::zero();
    for &l in logits {
        sum += (l - max).exp();
    }
    let log_z = max + sum.ln();
    logits.iter().map(|&l| l - log_z).collect()
}

/// Scores one token's feature set: returns log-probabilities over all
/// languages (they exponentiate to a distribution).
pub fn forward<R: Real>(
    cfg: &ModelConfig,
    params: &Parameters<R>,
    features: &FeatureSet,
) -> Result<Vec<R>> {
    Ok(forward_cached(cfg, params, features, false)?.log_probs)
}

/// `forward` for the release-precision model, packaged for the decoder.
pub fn score_token(
    cfg: &ModelConfig,
    params: &Parameters<f32>,
    features: &FeatureSet,
) -> Result<TokenScores> {
    Ok(TokenScores { log_probs: forward(cfg, params, features)? })
}

/// Extracts features and scores every token of a sentence.
pub fn score_sentence(
    cfg: &ModelConfig,
    params: &Parameters<f32>,
    lexicon: Option<&Lexicon>,
    sentence: &Sentence,
) -> Result<Vec<TokenScores>> {
    (0..sentence.len())
        .map(|pos| {
            let feats = extract_all(&cfg.layout, sentence, pos, lexicon)?;
            score_token(cfg, params, &feats)
        })
        .collect()
}

const MAGIC: &[u8; 4] = b"CMXM";
const VERSION: u8 = 1;

/// Writes config + parameters. Little-endian f32 tensors in declared order.
pub fn save(cfg: &ModelConfig, params: &Parameters<f32>, path: impl AsRef<Path>) -> Result<()> {
    atomic_write(path.as_ref(), |w| write_model(cfg, params, w))
}

pub fn write_model(cfg: &ModelConfig, params: &Parameters<f32>, w: &mut impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u8(VERSION)?;
    w.write_u32::<LittleEndian>(cfg.registry.len() as u32)?;
    for code in cfg.registry.codes() {
        let bytes = code.as_bytes();
        w.write_u16::<LittleEndian>(bytes.len() as u16)?;
        w.write_all(bytes)?;
    }
    w.write_u32::<LittleEndian>(cfg.hidden as u32)?;
    w.write_f32::<LittleEndian>(cfg.lexicon_dropout)?;
    w.write_u16::<LittleEndian>(cfg.layout.slots().len() as u16)?;
    for group in cfg.layout.slots() {
        let (kind, n) = match group.kind {
            GroupKind::Ngram(n) => (0u8, n),
            GroupKind::Script => (1, 0),
            GroupKind::LexDistribution => (2, 0),
            GroupKind::LexActive => (3, 0),
            GroupKind::LexSingleton => (4, 0),
        };
        w.write_u8(kind)?;
        w.write_u8(n)?;
        w.write_u8(group.position as u8)?;
        w.write_u32::<LittleEndian>(group.vocab)?;
        w.write_u32::<LittleEndian>(group.dim)?;
    }
    for tensor in params.tensors() {
        for &x in tensor {
            w.write_f32::<LittleEndian>(x)?;
        }
    }
    Ok(())
}

/// Loads a model file. Fails with a format error on bad magic, version,
/// truncation, or trailing bytes; never returns a partially read model.
pub fn load(path: impl AsRef<Path>) -> Result<(ModelConfig, Parameters<f32>)> {
    let file = std::fs::File::open(path)?;
    read_model(&mut std::io::BufReader::new(file))
}

pub fn read_model(r: &mut impl Read) -> Result<(ModelConfig, Parameters<f32>)> {
    let bad = |detail: &str| Error::format("model file", detail.to_string());
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    if r.read_u8()? != VERSION {
        return Err(bad("unsupported version"));
    }
    let num_langs = r.read_u32::<LittleEndian>()? as usize;
    let mut codes = Vec::with_capacity(num_langs);
    for _ in 0..num_langs {
        let len = r.read_u16::<LittleEndian>()? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf).map_err(|_| bad("truncated registry"))?;
        codes.push(String::from_utf8(buf).map_err(|_| bad("non-UTF-8 language code"))?);
    }
    let registry = LanguageRegistry::from_codes(codes)?;
    let hidden = r.read_u32::<LittleEndian>()? as usize;
    if hidden == 0 {
        return Err(bad("zero hidden size"));
    }
    let lexicon_dropout = r.read_f32::<LittleEndian>()?;
    let slot_count = r.read_u16::<LittleEndian>()? as usize;
    let mut slots = Vec::with_capacity(slot_count);
    for _ in 0..slot_count {
        let kind = r.read_u8()?;
        let n = r.read_u8()?;
        let position = r.read_u8()?;
        let vocab = r.read_u32::<LittleEndian>()?;
        let dim = r.read_u32::<LittleEndian>()?;
        if vocab == 0 || dim == 0 {
            return Err(bad("zero group dimensions"));
        }
        let kind = match kind {
            0 if (1..=4).contains(&n) => GroupKind::Ngram(n),
            1 => GroupKind::Script,
            2 => GroupKind::LexDistribution,
            3 => GroupKind::LexActive,
            4 => GroupKind::LexSingleton,
            _ => return Err(bad("unknown feature group kind")),
        };
        let position = match position {
            0 => WindowPosition::Prev,
            1 => WindowPosition::Current,
            2 => WindowPosition::Next,
            _ => return Err(bad("unknown window position")),
        };
        slots.push(FeatureGroup { kind, position, vocab, dim });
    }
    let layout = GroupLayout::from_groups(slots)
        .map_err(|_| bad("inconsistent feature group table"))?;
    let cfg = ModelConfig { registry, layout, hidden, lexicon_dropout };
    let mut params = Parameters::<f32>::zeros(&cfg);
    for tensor in params.tensors_mut() {
        for x in tensor.iter_mut() {
            *x = r.read_f32::<LittleEndian>().map_err(|_| bad("truncated tensor data"))?;
        }
    }
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(bad("trailing bytes after tensors"));
    }
    Ok((cfg, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::SparseVector;

    fn toy_config() -> ModelConfig {
        // One n-gram group at the current position: V=10, D=2, hidden 4.
        let registry = LanguageRegistry::from_codes(["en", "es"]).unwrap();
        let layout = GroupLayout::from_groups(vec![FeatureGroup {
            kind: GroupKind::Ngram(1),
            position: WindowPosition::Current,
            vocab: 10,
            dim: 2,
        }])
        .unwrap();
        ModelConfig { registry, layout, hidden: 4, lexicon_dropout: 0.0 }
    }

    #[test]
    fn zero_parameters_give_uniform_distribution() {
        let cfg = toy_config();
        let params = Parameters::<f64>::zeros(&cfg);
        let feats = FeatureSet::new(vec![SparseVector::from_sorted(vec![(3, 1.0)])]);
        let lp = forward(&cfg, &params, &feats).unwrap();
        for &l in &lp {
            assert!((l - (-(2f64).ln())).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_computed_forward() {
        // Embedding row 3 = [1, 2]; W1 maps [a, b] -> [a, b, a+b, 0];
        // W2 collapses the hidden units onto language 0.
        let cfg = toy_config();
        let mut params = Parameters::<f64>::zeros(&cfg);
        params.embeddings[0].row_mut(3).copy_from_slice(&[1.0, 2.0]);
        params.w1.row_mut(0).copy_from_slice(&[1.0, 0.0, 1.0, 0.0]);
        params.w1.row_mut(1).copy_from_slice(&[0.0, 1.0, 1.0, 0.0]);
        for j in 0..4 {
            params.w2.row_mut(j)[0] = 1.0;
        }
        params.b2[1] = 0.5;
        let feats = FeatureSet::new(vec![SparseVector::from_sorted(vec![(3, 0.5)])]);
        // h0 = 0.5 * [1, 2] = [0.5, 1.0]; h1 = [0.5, 1.0, 1.5, 0];
        // logits = [3.0, 0.5]; softmax by hand.
        let lp = forward(&cfg, &params, &feats).unwrap();
        let z = (3.0f64).exp() + (0.5f64).exp();
        assert!((lp[0] - (3.0 - z.ln())).abs() < 1e-12);
        assert!((lp[1] - (0.5 - z.ln())).abs() < 1e-12);
    }

    #[test]
    fn h0_is_linear_in_entry_weights() {
        let cfg = toy_config();
        let params = Parameters::<f64>::init(&cfg, 7);
        let single = FeatureSet::new(vec![SparseVector::from_sorted(vec![(3, 0.4), (7, 0.6)])]);
        let doubled = FeatureSet::new(vec![SparseVector::from_sorted(vec![(3, 0.8), (7, 1.2)])]);
        let a = forward_cached(&cfg, &params, &single, false).unwrap();
        let b = forward_cached(&cfg, &params, &doubled, false).unwrap();
        for (x, y) in a.h0.iter().zip(&b.h0) {
            assert!((y - 2.0 * x).abs() < 1e-12);
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let cfg = toy_config();
        let params = Parameters::<f32>::init(&cfg, 3);
        let feats = FeatureSet::new(vec![SparseVector::from_sorted(vec![(0, 0.3), (9, 0.7)])]);
        let scores = score_token(&cfg, &params, &feats).unwrap();
        let sum: f64 = scores.log_probs.iter().map(|&l| (l as f64).exp()).sum();
        assert!((sum - 1.0).abs() < 1e-5);
    }

    #[test]
    fn out_of_range_feature_index_is_rejected() {
        let cfg = toy_config();
        let params = Parameters::<f32>::zeros(&cfg);
        let feats = FeatureSet::new(vec![SparseVector::from_sorted(vec![(10, 1.0)])]);
        assert!(score_token(&cfg, &params, &feats).is_err());
        let wrong_arity = FeatureSet::new(vec![]);
        assert!(score_token(&cfg, &params, &wrong_arity).is_err());
    }

    #[test]
    fn param_count_formula() {
        let cfg = toy_config();
        assert_eq!(cfg.param_count(), 10 * 2 + (2 * 4 + 4) + (4 * 2 + 2));
        let full = ModelConfig::full(LanguageRegistry::default_100());
        // 12 n-gram slots (4 shared matrices) + script + 9 lexicon slots
        // (3 shared matrices): 192000 + 216 + 4800 embeddings, h0 = 344.
        assert_eq!(
            full.param_count(),
            (2 * 1000 + 2 * 5000) * 16
                + 27 * 8
                + 3 * 100 * 16
                + 344 * 256
                + 256
                + 256 * 100
                + 100
        );
        let small = ModelConfig::small(LanguageRegistry::default_100());
        assert!(small.param_count() < full.param_count());
    }

    #[test]
    fn save_load_roundtrip_bitexact() {
        let cfg = toy_config();
        let params = Parameters::<f32>::init(&cfg, 99);
        let mut buf = Vec::new();
        write_model(&cfg, &params, &mut buf).unwrap();
        let (cfg2, params2) = read_model(&mut buf.as_slice()).unwrap();
        assert_eq!(cfg, cfg2);
        assert_eq!(params, params2);
        // Header corruption and truncation are loud errors.
        let mut bad = buf.clone();
        bad[0] = b'Z';
        assert!(read_model(&mut bad.as_slice()).is_err());
        assert!(read_model(&mut &buf[..buf.len() - 2]).is_err());
        let mut extended = buf.clone();
        extended.push(0);
        assert!(read_model(&mut extended.as_slice()).is_err());
    }

    #[test]
    fn empty_lexicon_features_equal_dropped_lexicon() {
        let registry = LanguageRegistry::from_codes(["en", "es"]).unwrap();
        let cfg = ModelConfig::with_spec(registry, &LayoutSpec::full(), 8, 0.5);
        let params = Parameters::<f32>::init(&cfg, 5);
        let sent = crate::text::tokenize("hola mundo");
        let feats = extract_all(&cfg.layout, &sent, 0, None).unwrap();
        let plain = forward_cached(&cfg, &params, &feats, false).unwrap();
        let dropped = forward_cached(&cfg, &params, &feats, true).unwrap();
        assert_eq!(plain.log_probs, dropped.log_probs);
    }
}
