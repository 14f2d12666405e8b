//! End-to-end training pipelines shared by the command-line surface and the
//! verification suites: deterministic initialization, training, and
//! checkpoint reconstruction all route through here so every caller gets
//! the identical run for a given configuration and seed.

use sifter_core::augment::{tokenize, AugmentedTriple};
use sifter_core::classify::{
    train_classifier, LabeledExample, SentimentModel, TrainOutcome,
};
use sifter_core::contrastive::{mean_alignment, train_contrastive, ContrastiveOutcome, Encoder};
use sifter_core::eval::STSPair;
use sifter_core::recurrent::Lexicon;
use sifter_core::{Error, ParamSet, Result, Rng, Scalar, Shape, Vocab};

use crate::config::Config;

/// Stream id mixed into the run seed when initializing an encoder, keeping
/// initialization draws distinct from every other seeded choice in a run.
pub const ENCODER_INIT_STREAM: u64 = 0xabc;
/// Stream id mixed into the run seed when initializing a classifier.
pub const CLASSIFIER_INIT_STREAM: u64 = 77;

/// Vocabulary over every view of every triple, ids in corpus order.
pub fn vocab_from_triples(triples: &[AugmentedTriple]) -> Vocab {
    let docs: Vec<Vec<String>> = triples
        .iter()
        .flat_map(|t| [tokenize(&t.x), tokenize(&t.y_plus), tokenize(&t.z_plus)])
        .collect();
    Vocab::build(docs.iter())
}

/// Vocabulary over the training split only; unseen dev/test tokens map to
/// the unknown id.
pub fn vocab_from_labeled(train: &[LabeledExample]) -> Vocab {
    Vocab::build(train.iter().map(|ex| &ex.tokens))
}

/// Everything one contrastive run produces that a caller reports or saves.
pub struct ContrastiveRun<S: Scalar> {
    /// Left holding the best parameters.
    pub encoder: Encoder<S>,
    pub outcome: ContrastiveOutcome<S>,
    /// Mean cosine between each x and its y+ under the initial parameters.
    pub init_alignment: f64,
    /// The same measurement under the best parameters.
    pub best_alignment: f64,
}

/// Builds the encoder declared by `config`, trains it on the triples with
/// periodic dev validation, and measures view alignment at initialization
/// and at the best checkpoint. Fully determined by `config` and the inputs.
pub fn run_contrastive<S: Scalar>(
    config: &Config,
    vocab: &Vocab,
    triples: &[AugmentedTriple],
    dev: &[STSPair],
) -> Result<ContrastiveRun<S>> {
    let mut rng = Rng::derive(config.seed, ENCODER_INIT_STREAM);
    let mut encoder: Encoder<S> = match config.pooling.as_str() {
        "lstm" => Encoder::lstm_pool(
            vocab.len(),
            config.embed_dim,
            config.hidden_dim,
            config.dropout_contrastive,
            &mut rng,
        )?,
        _ => Encoder::mean_pool(
            vocab.len(),
            config.embed_dim,
            config.dropout_contrastive,
            &mut rng,
        )?,
    };
    let outcome = train_contrastive(&mut encoder, vocab, triples, dev, &config.contrastive())?;
    encoder.import_from(&outcome.init_params)?;
    let init_alignment = mean_alignment(&encoder, vocab, triples)?;
    encoder.import_from(&outcome.best)?;
    let best_alignment = mean_alignment(&encoder, vocab, triples)?;
    Ok(ContrastiveRun {
        encoder,
        outcome,
        init_alignment,
        best_alignment,
    })
}

/// One classifier training run; the model is left at the best parameters.
pub struct ClassifyRun<S: Scalar> {
    pub model: SentimentModel<S>,
    pub outcome: TrainOutcome<S>,
}

pub fn run_classify<S: Scalar>(
    config: &Config,
    vocab: &Vocab,
    train: &[LabeledExample],
    dev: &[LabeledExample],
    lexicon: Option<&Lexicon>,
) -> Result<ClassifyRun<S>> {
    let mut rng = Rng::derive(config.seed, CLASSIFIER_INIT_STREAM);
    let mut model = SentimentModel::<S>::init(
        vocab.len(),
        config.embed_dim,
        config.hidden_dim,
        config.num_classes,
        &mut rng,
    )?;
    let outcome = train_classifier(&mut model, vocab, train, dev, lexicon, &config.classifier())?;
    model.import_from(&outcome.best)?;
    Ok(ClassifyRun { model, outcome })
}

/// What a checkpoint's tensor names say it is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Encoder,
    Classifier,
}

pub fn model_kind<S: Scalar>(params: &ParamSet<S>) -> Result<ModelKind> {
    match (
        params.get("head.w").is_some(),
        params.get("proj.w").is_some(),
    ) {
        (true, false) => Ok(ModelKind::Classifier),
        (false, true) => Ok(ModelKind::Encoder),
        _ => Err(Error::invalid(
            "checkpoint tensors match neither an encoder nor a classifier",
        )),
    }
}

fn matrix_dims<S: Scalar>(params: &ParamSet<S>, name: &str) -> Result<(usize, usize)> {
    match params.require(name)?.shape() {
        Shape::Matrix(rows, cols) => Ok((rows, cols)),
        other => Err(Error::invalid(format!(
            "checkpoint tensor {name} has shape {other}, expected a matrix"
        ))),
    }
}

/// Rebuilds an encoder from saved tensors, inferring pooling and widths
/// from their names and shapes.
pub fn encoder_from_params<S: Scalar>(params: &ParamSet<S>) -> Result<Encoder<S>> {
    if model_kind(params)? != ModelKind::Encoder {
        return Err(Error::invalid(
            "not an encoder checkpoint (train-contrastive writes those)",
        ));
    }
    let (vocab_size, d_e) = matrix_dims(params, "embedding")?;
    let mut rng = Rng::new(0);
    let mut encoder = if params.get("lstm.w_f").is_some() {
        let (d_h, _) = matrix_dims(params, "lstm.w_f")?;
        Encoder::<S>::lstm_pool(vocab_size, d_e, d_h, 0.0, &mut rng)?
    } else {
        Encoder::<S>::mean_pool(vocab_size, d_e, 0.0, &mut rng)?
    };
    encoder.import_from(params)?;
    Ok(encoder)
}

/// Rebuilds a classifier from saved tensors.
pub fn classifier_from_params<S: Scalar>(params: &ParamSet<S>) -> Result<SentimentModel<S>> {
    if model_kind(params)? != ModelKind::Classifier {
        return Err(Error::invalid(
            "not a classifier checkpoint (train-classify writes those)",
        ));
    }
    let (vocab_size, d_e) = matrix_dims(params, "embedding")?;
    let (k, d_h) = matrix_dims(params, "head.w")?;
    let mut rng = Rng::new(0);
    let mut model = SentimentModel::<S>::init(vocab_size, d_e, d_h, k, &mut rng)?;
    model.import_from(params)?;
    Ok(model)
}
