//! Sentence classification: a linear-softmax head over the recurrent
//! encoder's final hidden state, the cross-entropy-plus-L2 objective, and
//! the minibatch training loop with periodic dev validation and best-model
//! selection.

use std::io::Read as _;
use std::path::Path;

use serde::Deserialize;

use crate::augment::tokenize;
use crate::error::{Error, Result};
use crate::eval::accuracy;
use crate::numerics::{matmul, matvec_t, outer, softmax, Rng, Scalar, Shape, Tensor};
use crate::optim::{adam_step, adamw_step, l2_penalty, AdamConfig, AdamState};
use crate::params::ParamSet;
use crate::recurrent::{sequence_backward, sequence_forward, Lexicon, LstmParams};
use crate::vocab::Vocab;

/// Linear layer + softmax over k classes.
#[derive(Debug, Clone)]
pub struct ClassifierHead<S: Scalar = f64> {
    pub w: Tensor<S>,
    pub b: Tensor<S>,
}

pub const HEAD_W: &str = "head.w";
pub const HEAD_B: &str = "head.b";

impl<S: Scalar> ClassifierHead<S> {
    pub fn init(d_h: usize, k: usize, rng: &mut Rng) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid(format!("classifier needs k >= 2, got {k}")));
        }
        let bound = 1.0 / (d_h as f64).sqrt();
        Ok(ClassifierHead {
            w: Tensor::uniform(Shape::Matrix(k, d_h), -bound, bound, rng),
            b: Tensor::uniform(Shape::Vector(k), -bound, bound, rng),
        })
    }

    pub fn k(&self) -> usize {
        self.w.rows()
    }

    pub fn d_h(&self) -> usize {
        self.w.cols()
    }
}

/// Class probabilities `softmax(W h + b)`.
pub fn predict_proba<S: Scalar>(head: &ClassifierHead<S>, h: &Tensor<S>) -> Result<Tensor<S>> {
    let mut logits = matmul(&head.w, h)?;
    for (l, b) in logits.data_mut().iter_mut().zip(head.b.data()) {
        *l += *b;
    }
    softmax(&logits)
}

/// Argmax with ties broken toward the lowest index.
pub fn predicted_label<S: Scalar>(probs: &Tensor<S>) -> usize {
    let mut best = 0;
    for (i, &p) in probs.data().iter().enumerate() {
        if p > probs.data()[best] {
            best = i;
        }
    }
    best
}

/// Gradients of the cross-entropy data term through the head.
#[derive(Debug)]
pub struct HeadGrads<S: Scalar = f64> {
    pub dw: Tensor<S>,
    pub db: Tensor<S>,
    /// Gradient handed on to the recurrent backward pass.
    pub dh: Tensor<S>,
}

/// Cross-entropy data term `-log p_y` and its gradients. The softmax/CE
/// composition gives `d loss / d logits = p - onehot(y)`.
pub fn ce_grads<S: Scalar>(
    head: &ClassifierHead<S>,
    h: &Tensor<S>,
    y: usize,
) -> Result<(S, HeadGrads<S>)> {
    if y >= head.k() {
        return Err(Error::invalid(format!(
            "label {y} out of range for {} classes",
            head.k()
        )));
    }
    let probs = predict_proba(head, h)?;
    let loss = -probs.data()[y].ln();
    let mut d_logits = probs;
    d_logits.data_mut()[y] -= S::one();
    let dw = outer(&d_logits, h)?;
    let dh = matvec_t(&head.w, &d_logits)?;
    Ok((
        loss,
        HeadGrads {
            dw,
            db: d_logits,
            dh,
        },
    ))
}

/// The full classification model: trainable embedding table, recurrent
/// encoder, and head.
#[derive(Debug, Clone)]
pub struct SentimentModel<S: Scalar = f64> {
    pub embedding: Tensor<S>,
    pub lstm: LstmParams<S>,
    pub head: ClassifierHead<S>,
}

pub const EMBEDDING: &str = "embedding";

impl<S: Scalar> SentimentModel<S> {
    /// Every tensor uniform in ±1/sqrt(fan), seeded.
    pub fn init(
        vocab_size: usize,
        d_e: usize,
        d_h: usize,
        k: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if vocab_size == 0 || d_e == 0 || d_h == 0 {
            return Err(Error::invalid("model dimensions must be positive"));
        }
        let bound = 1.0 / (d_e as f64).sqrt();
        Ok(SentimentModel {
            embedding: Tensor::uniform(Shape::Matrix(vocab_size, d_e), -bound, bound, rng),
            lstm: LstmParams::init(d_e, d_h, rng),
            head: ClassifierHead::init(d_h, k, rng)?,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    pub fn d_e(&self) -> usize {
        self.embedding.cols()
    }

    pub fn d_h(&self) -> usize {
        self.lstm.d_h()
    }

    pub fn export(&self) -> Result<ParamSet<S>> {
        let mut ps = ParamSet::new();
        ps.push(EMBEDDING, self.embedding.clone())?;
        self.lstm.export_into(&mut ps)?;
        ps.push(HEAD_W, self.head.w.clone())?;
        ps.push(HEAD_B, self.head.b.clone())?;
        Ok(ps)
    }

    pub fn import_from(&mut self, ps: &ParamSet<S>) -> Result<()> {
        let emb = ps.require(EMBEDDING)?;
        if emb.shape() != self.embedding.shape() {
            return Err(Error::Shape {
                op: "model import",
                lhs: self.embedding.shape().to_string(),
                rhs: emb.shape().to_string(),
            });
        }
        self.embedding = emb.clone();
        self.lstm.import_from(ps)?;
        let w = ps.require(HEAD_W)?;
        let b = ps.require(HEAD_B)?;
        if w.shape() != self.head.w.shape() || b.shape() != self.head.b.shape() {
            return Err(Error::Shape {
                op: "model import",
                lhs: self.head.w.shape().to_string(),
                rhs: w.shape().to_string(),
            });
        }
        self.head.w = w.clone();
        self.head.b = b.clone();
        Ok(())
    }

    fn embed(&self, ids: &[usize]) -> Result<Vec<Tensor<S>>> {
        ids.iter()
            .map(|&id| {
                if id >= self.vocab_size() {
                    return Err(Error::invalid(format!(
                        "token id {id} outside embedding table of {}",
                        self.vocab_size()
                    )));
                }
                Ok(Tensor::from_vec(self.embedding.row_slice(id).to_vec()))
            })
            .collect()
    }

    /// Eval-mode prediction: no dropout, deterministic.
    pub fn predict(
        &self,
        vocab: &Vocab,
        tokens: &[String],
        lexicon: Option<&Lexicon>,
    ) -> Result<(usize, Tensor<S>)> {
        let inputs = self.embed(&vocab.ids(tokens))?;
        let run = sequence_forward(&self.lstm, &inputs, tokens, lexicon, 0.0, None, false)?;
        let probs = predict_proba(&self.head, &run.repr)?;
        Ok((predicted_label(&probs), probs))
    }

    /// Train-mode loss and gradients for one example. The loss includes the
    /// L2 penalty over every parameter, so averaging these across a batch
    /// gives `mean data loss + lambda * ||theta||^2` exactly.
    pub fn example_grads(
        &self,
        vocab: &Vocab,
        tokens: &[String],
        label: usize,
        lexicon: Option<&Lexicon>,
        l2_lambda: f64,
        dropout: f64,
        rng: &mut Rng,
    ) -> Result<(S, ParamSet<S>)> {
        let ids = vocab.ids(tokens);
        let inputs = self.embed(&ids)?;
        let run = sequence_forward(
            &self.lstm,
            &inputs,
            tokens,
            lexicon,
            dropout,
            Some(rng),
            true,
        )?;
        let (mut loss, hg) = ce_grads(&self.head, &run.repr, label)?;
        let cache = run.cache.as_ref().expect("train mode caches");
        let seq = sequence_backward(&self.lstm, cache, &hg.dh)?;

        let mut d_emb = Tensor::zeros(self.embedding.shape());
        for (t, &id) in ids.iter().enumerate() {
            let row = d_emb.row_slice_mut(id);
            for (r, g) in row.iter_mut().zip(seq.inputs[t].data()) {
                *r += *g;
            }
        }

        let mut grads = ParamSet::new();
        grads.push(EMBEDDING, d_emb)?;
        seq.params.export_into(&mut grads)?;
        grads.push(HEAD_W, hg.dw)?;
        grads.push(HEAD_B, hg.db)?;

        if l2_lambda > 0.0 {
            let params = self.export()?;
            let (penalty, penalty_grads) = l2_penalty(&params, l2_lambda)?;
            loss += penalty;
            grads.add_scaled(&penalty_grads, S::one())?;
        }
        Ok((loss, grads))
    }
}

/// One labeled example, already tokenized.
#[derive(Debug, Clone)]
pub struct LabeledExample {
    pub tokens: Vec<String>,
    pub label: usize,
}

#[derive(Deserialize)]
struct LabeledRecord {
    text: String,
    label: i64,
}

/// Loads JSON-lines records with fields `text` and `label`, validating each
/// label against `num_classes` and rejecting empty texts, with line numbers
/// in every complaint.
pub fn load_labeled(path: &Path, num_classes: usize) -> Result<Vec<LabeledExample>> {
    let mut text = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: LabeledRecord = serde_json::from_str(line)
            .map_err(|e| Error::parse(path, lineno + 1, e.to_string()))?;
        if rec.label < 0 || rec.label as usize >= num_classes {
            return Err(Error::parse(
                path,
                lineno + 1,
                format!("label {} outside 0..{num_classes}", rec.label),
            ));
        }
        let tokens = tokenize(&rec.text);
        if tokens.is_empty() {
            return Err(Error::parse(path, lineno + 1, "empty text"));
        }
        out.push(LabeledExample {
            tokens,
            label: rec.label as usize,
        });
    }
    Ok(out)
}

/// Hyperparameters for one classifier training run.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub l2_lambda: f64,
    pub dropout: f64,
    pub validation_interval: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Use decoupled weight decay (AdamW) instead of plain Adam.
    pub decoupled_decay: bool,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            batch_size: 32,
            l2_lambda: 1e-7,
            dropout: 0.2,
            validation_interval: 50,
            max_epochs: 3,
            seed: 0,
            decoupled_decay: false,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.l2_lambda < 0.0 {
            return Err(Error::invalid("l2 strength must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("dropout must be in [0, 1)"));
        }
        if self.validation_interval == 0 {
            return Err(Error::invalid("validation interval must be at least 1"));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            weight_decay: self.weight_decay,
        }
    }
}

/// One metrics-history row. `train_loss` is absent only for the step-0 row;
/// `dev_accuracy` is present at step 0 and at validation steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub step: usize,
    pub train_loss: Option<f64>,
    pub dev_accuracy: Option<f64>,
}

/// Renders history rows as `step,train_loss,dev_accuracy` CSV, empty cells
/// for absent values.
pub fn history_csv(records: &[TrainRecord]) -> String {
    let mut out = String::from("step,train_loss,dev_accuracy\n");
    for r in records {
        let loss = r.train_loss.map(|v| v.to_string()).unwrap_or_default();
        let acc = r.dev_accuracy.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", r.step, loss, acc));
    }
    out
}

/// Everything a training run produces.
#[derive(Debug)]
pub struct TrainOutcome<S: Scalar = f64> {
    /// Parameters at the best dev accuracy (ties: earliest).
    pub best: ParamSet<S>,
    pub best_step: usize,
    pub best_accuracy: f64,
    /// Parameters after the final step.
    pub final_params: ParamSet<S>,
    pub history: Vec<TrainRecord>,
}

/// Dev-set accuracy of the model in eval mode.
pub fn dev_accuracy<S: Scalar>(
    model: &SentimentModel<S>,
    vocab: &Vocab,
    data: &[LabeledExample],
    lexicon: Option<&Lexicon>,
) -> Result<f64> {
    let mut gold = Vec::with_capacity(data.len());
    let mut pred = Vec::with_capacity(data.len());
    for ex in data {
        gold.push(ex.label);
        pred.push(model.predict(vocab, &ex.tokens, lexicon)?.0);
    }
    accuracy(&gold, &pred)
}

/// Minibatch training with Adam (or AdamW), periodic dev validation, and
/// best-checkpoint retention. The model is left at its final parameters;
/// the outcome carries both final and best parameter sets. Deterministic
/// for a fixed seed: one generator drives shuffling and dropout in a fixed
/// order. Step 0 records the initialization's dev accuracy, so a
/// zero-epoch run returns the initialization as its best checkpoint.
pub fn train_classifier<S: Scalar>(
    model: &mut SentimentModel<S>,
    vocab: &Vocab,
    train: &[LabeledExample],
    dev: &[LabeledExample],
    lexicon: Option<&Lexicon>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<S>> {
    cfg.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(Error::invalid("train and dev splits must be nonempty"));
    }
    let k = model.head.k();
    for (what, split) in [("train", train), ("dev", dev)] {
        for (i, ex) in split.iter().enumerate() {
            if ex.label >= k {
                return Err(Error::invalid(format!(
                    "{what} example {i}: label {} outside 0..{k}",
                    ex.label
                )));
            }
            if ex.tokens.is_empty() {
                return Err(Error::invalid(format!("{what} example {i}: empty token list")));
            }
        }
    }

    let mut rng = Rng::new(cfg.seed);
    let mut params = model.export()?;
    let mut state = AdamState::new(&params, cfg.adam())?;

    let acc0 = dev_accuracy(model, vocab, dev, lexicon)?;
    let mut history = vec![TrainRecord {
        step: 0,
        train_loss: None,
        dev_accuracy: Some(acc0),
    }];
    let mut best = params.clone();
    let mut best_step = 0;
    let mut best_accuracy = acc0;

    let mut step = 0usize;
    for _epoch in 0..cfg.max_epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        rng.shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            step += 1;
            let mut grads = params.zeros_like();
            let mut loss_sum = 0.0;
            for &i in batch {
                let ex = &train[i];
                let (loss, g) = model.example_grads(
                    vocab,
                    &ex.tokens,
                    ex.label,
                    lexicon,
                    cfg.l2_lambda,
                    cfg.dropout,
                    &mut rng,
                )?;
                loss_sum += loss.as_f64();
                grads.add_scaled(&g, S::one())?;
            }
            let scale = 1.0 / batch.len() as f64;
            grads.scale(S::from_f64(scale));
            let loss = loss_sum * scale;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite training loss {loss} at step {step}"
                )));
            }

            if cfg.decoupled_decay {
                adamw_step(&mut params, &grads, &mut state)?;
            } else {
                adam_step(&mut params, &grads, &mut state)?;
            }
            model.import_from(&params)?;

            let mut record = TrainRecord {
                step,
                train_loss: Some(loss),
                dev_accuracy: None,
            };
            if step % cfg.validation_interval == 0 {
                let acc = dev_accuracy(model, vocab, dev, lexicon)?;
                record.dev_accuracy = Some(acc);
                if acc > best_accuracy {
                    best_accuracy = acc;
                    best_step = step;
                    best = params.clone();
                }
            }
            history.push(record);
        }
    }

    Ok(TrainOutcome {
        best,
        best_step,
        best_accuracy,
        final_params: params,
        history,
    })
}
