//! Training: analytic gradients, mini-batched momentum SGD with an
//! exponentially decaying learning rate, a running parameter average, and
//! selective dropout of the lexicon feature groups.
//!
//! Every token of the corpus spawns one training instance. Per instance,
//! with probability `lexicon_dropout` all lexicon groups are zeroed before
//! the forward pass, forcing the model to rely on character n-grams alone
//! for that example. The trainer returns the running average of parameter
//! iterates (started after the first epoch) rather than the final iterate.

use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::LabeledSentence;
use crate::decoder::decode_greedy;
use crate::error::{Error, Result};
use crate::features::{extract_all, FeatureSet};
use crate::lang::LangId;
use crate::lexicon::Lexicon;
use crate::model::{forward_cached, score_sentence, ModelConfig, Parameters, Real};

/// Optimization knobs. Defaults: batch 256, momentum 0.9, learning rate
/// 0.05 decaying by 0.9 every 10k updates, 5 epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub batch_size: usize,
    pub momentum: f64,
    pub initial_lr: f64,
    pub lr_decay: f64,
    pub lr_decay_steps: u64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            batch_size: 256,
            momentum: 0.9,
            initial_lr: 0.05,
            lr_decay: 0.9,
            lr_decay_steps: 10_000,
            epochs: 5,
            seed: 42,
        }
    }
}

/// Per-epoch progress numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub dev_accuracy: Option<f64>,
    pub learning_rate: f64,
}

/// Counters for a whole training run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub epoch_stats: Vec<EpochStats>,
    pub instances: u64,
    pub lexicon_dropped: u64,
    pub updates: u64,
}

impl TrainReport {
    /// Fraction of training instances whose lexicon groups were zeroed.
    pub fn lexicon_drop_rate(&self) -> f64 {
        if self.instances == 0 {
            0.0
        } else {
            self.lexicon_dropped as f64 / self.instances as f64
        }
    }
}

/// Exact cross-entropy gradients for one instance, exposed so they can be
/// verified against finite differences.
pub fn gradients<R: Real>(
    cfg: &ModelConfig,
    params: &Parameters<R>,
    features: &FeatureSet,
    gold: LangId,
) -> Result<(R, Parameters<R>)> {
    let mut grads = Parameters::zeros(cfg);
    let loss = accumulate_gradients(cfg, params, features, gold, false, &mut grads)?;
    Ok((loss, grads))
}

/// Backpropagates one instance into `grads`, returning its loss.
fn accumulate_gradients<R: Real>(
    cfg: &ModelConfig,
    params: &Parameters<R>,
    features: &FeatureSet,
    gold: LangId,
    drop_lexicon: bool,
    grads: &mut Parameters<R>,
) -> Result<R> {
    let langs = cfg.num_languages();
    if gold.index() >= langs {
        return Err(Error::arg(format!("gold label id {gold} outside the registry")));
    }
    let cache = forward_cached(cfg, params, features, drop_lexicon)?;
    let loss = -cache.log_probs[gold.index()];

    // Softmax layer: dz2 = p - onehot(gold).
    let mut dz2: Vec<R> = cache.log_probs.iter().map(|&lp| lp.exp()).collect();
    dz2[gold.index()] -= R::one();
    for (g, &d) in grads.b2.iter_mut().zip(&dz2) {
        *g += d;
    }
    let hidden = cfg.hidden;
    let mut dh1 = vec![R::zero(); hidden];
    for j in 0..hidden {
        let h = cache.h1[j];
        let w2_row = params.w2.row(j);
        let g2_row = grads.w2.row_mut(j);
        let mut acc = R::zero();
        for l in 0..langs {
            let d = dz2[l];
            if h != R::zero() {
                g2_row[l] += h * d;
            }
            acc += w2_row[l] * d;
        }
        dh1[j] = acc;
    }

    // Hidden layer: ReLU gate.
    let dz1: Vec<R> =
        dh1.iter().zip(&cache.z1).map(|(&d, &z)| if z > R::zero() { d } else { R::zero() }).collect();
    for (g, &d) in grads.b1.iter_mut().zip(&dz1) {
        *g += d;
    }
    let h0_size = cfg.layout.h0_size();
    let mut dh0 = vec![R::zero(); h0_size];
    for i in 0..h0_size {
        let x = cache.h0[i];
        let w1_row = params.w1.row(i);
        let g1_row = grads.w1.row_mut(i);
        let mut acc = R::zero();
        for j in 0..hidden {
            let d = dz1[j];
            if x != R::zero() {
                g1_row[j] += x * d;
            }
            acc += w1_row[j] * d;
        }
        dh0[i] = acc;
    }

    // Embedding rows touched by the sparse features.
    for (slot, group) in cfg.layout.slots().iter().enumerate() {
        if drop_lexicon && group.kind.is_lexicon() {
            continue;
        }
        let matrix = cfg.layout.matrix_of_slot(slot);
        let offset = cfg.layout.offset_of_slot(slot);
        let dim = group.dim as usize;
        for &(idx, weight) in features.vector(slot).entries() {
            let w = R::from_f64(weight);
            let row = grads.embeddings[matrix].row_mut(idx as usize);
            for (g, &d) in row.iter_mut().zip(&dh0[offset..offset + dim]) {
                *g += w * d;
            }
        }
    }
    Ok(loss)
}

/// One training instance: a sentence and the token position to classify.
pub type Instance<'a> = (&'a LabeledSentence, usize);

/// Step-by-step trainer. [`train`] drives it over epochs; tests drive it
/// directly to observe individual updates.
pub struct Trainer<'a> {
    cfg: &'a ModelConfig,
    lexicon: Option<&'a Lexicon>,
    hyper: Hyperparams,
    params: Parameters<f32>,
    velocity: Parameters<f32>,
    grads: Parameters<f32>,
    avg_sum: Vec<f64>,
    avg_count: u64,
    averaging: bool,
    dropout_rng: ChaCha8Rng,
    report: TrainReport,
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: &'a ModelConfig, lexicon: Option<&'a Lexicon>, hyper: Hyperparams) -> Self {
        let params = Parameters::init(cfg, hyper.seed);
        let flat_len: usize = params.tensors().iter().map(|t| t.len()).sum();
        let mut dropout_rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        dropout_rng.set_stream(2);
        Trainer {
            cfg,
            lexicon,
            hyper,
            velocity: Parameters::zeros(cfg),
            grads: Parameters::zeros(cfg),
            params,
            avg_sum: vec![0.0; flat_len],
            avg_count: 0,
            averaging: false,
            dropout_rng,
            report: TrainReport::default(),
        }
    }

    pub fn params(&self) -> &Parameters<f32> {
        &self.params
    }

    pub fn report(&self) -> &TrainReport {
        &self.report
    }

    /// Turns the running parameter average on or off. [`train`] enables it
    /// after the first epoch.
    pub fn set_averaging(&mut self, on: bool) {
        self.averaging = on;
    }

    /// Learning rate that the next update will use.
    pub fn learning_rate(&self) -> f64 {
        self.hyper.initial_lr
            * self.hyper.lr_decay.powf(self.report.updates as f64 / self.hyper.lr_decay_steps as f64)
    }

    /// Runs one mini-batch: averaged gradients, momentum update, and (when
    /// enabled) a parameter snapshot into the running average. Returns the
    /// batch's mean loss.
    pub fn train_batch(&mut self, batch: &[Instance<'_>]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Empty("training batch"));
        }
        for tensor in self.grads.tensors_mut() {
            tensor.fill(0.0);
        }
        let mut loss_sum = 0.0f64;
        let dropout = self.cfg.lexicon_dropout as f64;
        let has_lexicon_groups = self.cfg.layout.include_lexicon();
        for &(sentence, position) in batch {
            let features = extract_all(&self.cfg.layout, &sentence.sentence, position, self.lexicon)?;
            let drop = has_lexicon_groups && self.dropout_rng.random::<f64>() < dropout;
            self.report.instances += 1;
            self.report.lexicon_dropped += drop as u64;
            let gold = sentence.labels[position];
            let loss = accumulate_gradients(
                self.cfg,
                &self.params,
                &features,
                gold,
                drop,
                &mut self.grads,
            )?;
            loss_sum += loss as f64;
        }
        let mean_loss = loss_sum / batch.len() as f64;
        if !mean_loss.is_finite() {
            return Err(Error::NonFiniteLoss { step: self.report.updates });
        }

        let lr = self.learning_rate() as f32;
        let momentum = self.hyper.momentum as f32;
        let scale = 1.0 / batch.len() as f32;
        for ((p, v), g) in self
            .params
            .tensors_mut()
            .into_iter()
            .zip(self.velocity.tensors_mut())
            .zip(self.grads.tensors())
        {
            for ((p, v), &g) in p.iter_mut().zip(v.iter_mut()).zip(g.iter()) {
                *v = momentum * *v - lr * (g * scale);
                *p += *v;
            }
        }
        self.report.updates += 1;
        if self.averaging {
            let mut offset = 0;
            for tensor in self.params.tensors() {
                for (acc, &p) in self.avg_sum[offset..offset + tensor.len()].iter_mut().zip(tensor)
                {
                    *acc += p as f64;
                }
                offset += tensor.len();
            }
            self.avg_count += 1;
        }
        Ok(mean_loss)
    }

    /// The arithmetic mean of post-update parameter snapshots seen while
    /// averaging was enabled, or the current parameters if none were.
    pub fn averaged_params(&self) -> Parameters<f32> {
        if self.avg_count == 0 {
            return self.params.clone();
        }
        let mut avg = self.params.clone();
        let n = self.avg_count as f64;
        let mut offset = 0;
        for tensor in avg.tensors_mut() {
            for (p, &acc) in tensor.iter_mut().zip(&self.avg_sum[offset..]) {
                *p = (acc / n) as f32;
            }
            offset += tensor.len();
        }
        avg
    }

    fn into_report(self) -> TrainReport {
        self.report
    }
}

/// Trains a model over the corpus: every token is one instance, instances
/// are shuffled per epoch, and the returned parameters are the running
/// average accumulated from the second epoch on. Fully deterministic for a
/// fixed seed. `on_epoch` fires after each epoch with loss/dev numbers.
pub fn train(
    cfg: &ModelConfig,
    train_data: &[LabeledSentence],
    dev_data: Option<&[LabeledSentence]>,
    lexicon: Option<&Lexicon>,
    hyper: &Hyperparams,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(Parameters<f32>, TrainReport)> {
    let mut instances: Vec<(usize, usize)> = train_data
        .iter()
        .enumerate()
        .flat_map(|(s, sent)| (0..sent.len()).map(move |t| (s, t)))
        .collect();
    if instances.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    shuffle_rng.set_stream(1);
    let mut trainer = Trainer::new(cfg, lexicon, hyper.clone());
    for epoch in 0..hyper.epochs {
        trainer.set_averaging(epoch >= 1);
        instances.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        let mut batch_buf: Vec<Instance<'_>> = Vec::with_capacity(hyper.batch_size);
        for chunk in instances.chunks(hyper.batch_size) {
            batch_buf.clear();
            batch_buf.extend(chunk.iter().map(|&(s, t)| (&train_data[s], t)));
            loss_sum += trainer.train_batch(&batch_buf)?;
            batches += 1;
        }
        let dev_accuracy = match dev_data {
            Some(dev) => Some(greedy_token_accuracy(cfg, trainer.params(), lexicon, dev)?),
            None => None,
        };
        let stats = EpochStats {
            epoch,
            mean_loss: loss_sum / batches as f64,
            dev_accuracy,
            learning_rate: trainer.learning_rate(),
        };
        on_epoch(&stats);
        trainer.report.epoch_stats.push(stats);
    }
    let params = trainer.averaged_params();
    Ok((params, trainer.into_report()))
}

/// Token accuracy of per-token argmax predictions; the dev-set metric
/// reported after each epoch.
pub fn greedy_token_accuracy(
    cfg: &ModelConfig,
    params: &Parameters<f32>,
    lexicon: Option<&Lexicon>,
    data: &[LabeledSentence],
) -> Result<f64> {
    let mut correct = 0u64;
    let mut total = 0u64;
    for sentence in data {
        if sentence.is_empty() {
            continue;
        }
        let scores = score_sentence(cfg, params, lexicon, &sentence.sentence)?;
        let decoded = decode_greedy(&scores)?;
        for (pred, &gold) in decoded.labels.iter().zip(&sentence.labels) {
            correct += (*pred == gold) as u64;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Empty("evaluation corpus"));
    }
    Ok(correct as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureGroup, GroupKind, GroupLayout, SparseVector, WindowPosition};
    use crate::lang::LanguageRegistry;
    use crate::model::forward;

    fn toy_config(langs: usize, hidden: usize) -> ModelConfig {
        let codes: Vec<String> = (0..langs).map(|i| format!("l{i}")).collect();
        let registry = LanguageRegistry::from_codes(codes).unwrap();
        let layout = GroupLayout::from_groups(vec![
            FeatureGroup {
                kind: GroupKind::Ngram(2),
                position: WindowPosition::Current,
                vocab: 12,
                dim: 3,
            },
            FeatureGroup {
                kind: GroupKind::Ngram(2),
                position: WindowPosition::Next,
                vocab: 12,
                dim: 3,
            },
        ])
        .unwrap();
        ModelConfig { registry, layout, hidden, lexicon_dropout: 0.0 }
    }

    fn toy_features() -> FeatureSet {
        FeatureSet::new(vec![
            SparseVector::from_sorted(vec![(1, 0.25), (4, 0.5), (7, 0.25)]),
            SparseVector::from_sorted(vec![(0, 1.0)]),
        ])
    }

    #[test]
    fn softmax_bias_gradient_is_prob_minus_onehot() {
        let cfg = toy_config(3, 4);
        let params = Parameters::<f64>::init(&cfg, 11);
        let feats = toy_features();
        let gold = LangId::new(1);
        let (_, grads) = gradients(&cfg, &params, &feats, gold).unwrap();
        let lp = forward(&cfg, &params, &feats).unwrap();
        for l in 0..3 {
            let expect = lp[l].exp() - if l == 1 { 1.0 } else { 0.0 };
            assert!((grads.b2[l] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cfg = toy_config(3, 5);
        let mut params = Parameters::<f64>::init(&cfg, 17);
        let feats = toy_features();
        let gold = LangId::new(2);
        let (_, grads) = gradients(&cfg, &params, &feats, gold).unwrap();
        let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
        let eps = 1e-6;
        for (t, tensor) in analytic.iter().enumerate() {
            for i in 0..tensor.len() {
                let orig = params.tensors()[t][i];
                params.tensors_mut()[t][i] = orig + eps;
                let up = -forward(&cfg, &params, &feats).unwrap()[gold.index()];
                params.tensors_mut()[t][i] = orig - eps;
                let down = -forward(&cfg, &params, &feats).unwrap()[gold.index()];
                params.tensors_mut()[t][i] = orig;
                let numeric = (up - down) / (2.0 * eps);
                let denom = tensor[i].abs().max(numeric.abs()).max(1e-8);
                assert!(
                    (tensor[i] - numeric).abs() / denom < 1e-4,
                    "tensor {t} element {i}: analytic {} vs numeric {numeric}",
                    tensor[i]
                );
            }
        }
    }

    #[test]
    fn untouched_embedding_rows_get_zero_gradient() {
        let cfg = toy_config(2, 3);
        let params = Parameters::<f64>::init(&cfg, 5);
        let feats = toy_features();
        let (_, grads) = gradients(&cfg, &params, &feats, LangId::new(0)).unwrap();
        // Rows 1, 4, 7, 0 are touched; row 9 is not.
        assert!(grads.embeddings[0].row(9).iter().all(|&g| g == 0.0));
        assert!(grads.embeddings[0].row(4).iter().any(|&g| g != 0.0));
    }

    fn labeled(cfg: &ModelConfig, text: &str, code: &str) -> LabeledSentence {
        let sentence = crate::text::tokenize(text);
        let labels = vec![cfg.registry.id(code).unwrap(); sentence.len()];
        LabeledSentence::new(sentence, labels)
    }

    #[test]
    fn one_step_decreases_single_instance_loss() {
        let cfg = toy_config(2, 4);
        let data = [labeled(&cfg, "abba", "l0")];
        let hyper = Hyperparams { initial_lr: 0.05, batch_size: 1, ..Default::default() };
        let mut trainer = Trainer::new(&cfg, None, hyper);
        let feats = extract_all(&cfg.layout, &data[0].sentence, 0, None).unwrap();
        let before = -forward(&cfg, trainer.params(), &feats).unwrap()[0] as f64;
        trainer.train_batch(&[(&data[0], 0)]).unwrap();
        let after = -forward(&cfg, trainer.params(), &feats).unwrap()[0] as f64;
        assert!(after < before, "loss {before} -> {after}");
    }

    #[test]
    fn averaged_params_are_the_snapshot_mean() {
        let cfg = toy_config(2, 4);
        let data = [labeled(&cfg, "ab cd ef", "l0"), labeled(&cfg, "gh ij kl", "l1")];
        let hyper = Hyperparams { batch_size: 2, ..Default::default() };
        let mut trainer = Trainer::new(&cfg, None, hyper);
        trainer.set_averaging(true);
        let mut snapshots = Vec::new();
        for step in 0..3 {
            let s = &data[step % 2];
            trainer.train_batch(&[(s, 0), (s, 1)]).unwrap();
            snapshots.push(trainer.params().clone());
        }
        let avg = trainer.averaged_params();
        let tensors: Vec<Vec<&[f32]>> = snapshots.iter().map(|p| p.tensors()).collect();
        for (t, avg_tensor) in avg.tensors().iter().enumerate() {
            for i in 0..avg_tensor.len() {
                let mean =
                    (tensors.iter().map(|snap| snap[t][i] as f64).sum::<f64>() / 3.0) as f32;
                assert_eq!(avg_tensor[i], mean, "tensor {t} element {i}");
            }
        }
    }

    #[test]
    fn training_is_deterministic_for_a_seed() {
        let cfg = toy_config(2, 4);
        let data = vec![
            labeled(&cfg, "aa bb cc", "l0"),
            labeled(&cfg, "dd ee", "l1"),
            labeled(&cfg, "ff gg hh ii", "l0"),
        ];
        let hyper = Hyperparams { epochs: 3, batch_size: 4, ..Default::default() };
        let run = || train(&cfg, &data, None, None, &hyper, |_| {}).unwrap();
        let (p1, r1) = run();
        let (p2, r2) = run();
        assert_eq!(p1, p2);
        assert_eq!(r1, r2);
    }

    #[test]
    fn dropout_endpoints() {
        let registry = LanguageRegistry::from_codes(["en", "es"]).unwrap();
        let spec = crate::features::LayoutSpec {
            ngram_vocab: [16, 16, 16, 16],
            ngram_dim: 2,
            script_dim: 2,
            lex_dim: 2,
            include_lexicon: true,
        };
        let corpus = "en\tcat\nes\tgato\n";
        let (lexicon, _) =
            crate::lexicon::build_lexicon(corpus.as_bytes(), &registry, 1).unwrap();
        for (p, expect_all, expect_none) in [(0.0f32, false, true), (1.0, true, false)] {
            let cfg = ModelConfig::with_spec(registry.clone(), &spec, 4, p);
            let data =
                vec![labeled(&cfg, "cat gato cat gato", "en"), labeled(&cfg, "gato cat", "es")];
            let hyper = Hyperparams { epochs: 2, batch_size: 3, ..Default::default() };
            let (_, report) = train(&cfg, &data, None, Some(&lexicon), &hyper, |_| {}).unwrap();
            let rate = report.lexicon_drop_rate();
            if expect_all {
                assert_eq!(rate, 1.0);
            }
            if expect_none {
                assert_eq!(rate, 0.0);
            }
        }
    }
}
