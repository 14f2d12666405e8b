//! Deterministic synthetic datasets for end-to-end checks.
//!
//! Two generators live here:
//!
//! * a sentiment task whose labels are fully determined by planted polarity
//!   tokens hidden among filler words, so a correct polarity lexicon is
//!   genuinely task-beneficial for the gated recurrent variant;
//! * a clustered corpus with procedurally built triples whose dev pairs
//!   share topics but never tokens, so an untrained encoder scores near
//!   zero and any real Spearman gain must come from contrastive training.

use crate::augment::{AugmentedTriple, Provenance};
use crate::classify::LabeledExample;
use crate::error::{Error, Result};
use crate::eval::STSPair;
use crate::numerics::Rng;
use crate::recurrent::Lexicon;
use crate::vocab::Vocab;

/// Positive polarity markers for the sentiment task.
pub const POSITIVE_TOKENS: [&str; 4] = ["glorious", "superb", "delightful", "stellar"];
/// Negative polarity markers for the sentiment task.
pub const NEGATIVE_TOKENS: [&str; 4] = ["dreadful", "abysmal", "wretched", "dismal"];

const FILLER_COUNT: usize = 40;

fn filler(i: usize) -> String {
    format!("filler{i:02}")
}

/// The planted-polarity sentiment dataset.
#[derive(Debug)]
pub struct SentimentTask {
    pub train: Vec<LabeledExample>,
    pub dev: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
    /// The tokens that decide the label; exactly the task-beneficial lexicon.
    pub lexicon: Lexicon,
    pub vocab: Vocab,
}

/// Builds a two-class sentiment task. Each sentence is filler tokens with a
/// polarity token planted at a random position; the label is the polarity.
/// Same seed, same dataset, byte for byte.
pub fn sentiment_task(
    train_n: usize,
    dev_n: usize,
    test_n: usize,
    seed: u64,
) -> Result<SentimentTask> {
    if train_n == 0 || dev_n == 0 || test_n == 0 {
        return Err(Error::invalid("all sentiment splits must be nonempty"));
    }
    let mut rng = Rng::derive(seed, 0x5e17);
    let mut make_split = |n: usize| -> Vec<LabeledExample> {
        (0..n)
            .map(|_| {
                let label = (rng.next_index(2)) as usize;
                let polarity = if label == 1 {
                    POSITIVE_TOKENS[rng.next_index(POSITIVE_TOKENS.len())]
                } else {
                    NEGATIVE_TOKENS[rng.next_index(NEGATIVE_TOKENS.len())]
                };
                let len = 8 + rng.next_index(5); // 8..=12 tokens
                let mut tokens: Vec<String> = (0..len)
                    .map(|_| filler(rng.next_index(FILLER_COUNT)))
                    .collect();
                let slot = rng.next_index(len);
                tokens[slot] = polarity.to_string();
                LabeledExample { tokens, label }
            })
            .collect()
    };
    let train = make_split(train_n);
    let dev = make_split(dev_n);
    let test = make_split(test_n);

    let lexicon = Lexicon::new(
        "polarity",
        POSITIVE_TOKENS.iter().chain(NEGATIVE_TOKENS.iter()).copied(),
        true,
    );

    let all_tokens: Vec<Vec<String>> = train
        .iter()
        .chain(dev.iter())
        .chain(test.iter())
        .map(|e| e.tokens.clone())
        .collect();
    let vocab = Vocab::build(all_tokens.iter());
    Ok(SentimentTask {
        train,
        dev,
        test,
        lexicon,
        vocab,
    })
}

/// The clustered contrastive dataset.
#[derive(Debug)]
pub struct ClusteredCorpus {
    pub triples: Vec<AugmentedTriple>,
    pub dev: Vec<STSPair>,
    pub vocab: Vocab,
}

const TOPICS: usize = 6;
/// Tokens per topic half; each topic owns `2 * HALF` distinct tokens.
const HALF: usize = 6;

fn topic_token(topic: usize, half: usize, i: usize) -> String {
    format!("t{topic}{}{i}", ["a", "b"][half])
}

fn sample_sentence(topic: usize, halves: &[usize], len: usize, rng: &mut Rng) -> Vec<String> {
    (0..len)
        .map(|_| {
            let half = halves[rng.next_index(halves.len())];
            topic_token(topic, half, rng.next_index(HALF))
        })
        .collect()
}

/// Builds `n_triples` training triples and `n_dev` scored dev pairs.
///
/// Training sentences draw freely from a topic's full token pool, and the
/// two views stay inside the topic: the backbone view appends more
/// same-topic tokens, the deletion view keeps a strict token subsequence.
/// Dev pairs are graded: the second side replaces 0..=5 of its tokens with
/// a different topic, and the gold score falls linearly with the number of
/// replacements. The two sides always draw from disjoint halves of the
/// topic pools, so no dev pair shares a single token and lexical overlap
/// cannot leak the answer to an untrained encoder.
pub fn clustered_triples(n_triples: usize, n_dev: usize, seed: u64) -> Result<ClusteredCorpus> {
    if n_triples == 0 || n_dev < 2 {
        return Err(Error::invalid(
            "need at least one triple and two dev pairs",
        ));
    }
    let mut rng = Rng::derive(seed, 0xc1u64);
    let mut triples = Vec::with_capacity(n_triples);
    for _ in 0..n_triples {
        let topic = rng.next_index(TOPICS);
        let x_tokens = sample_sentence(topic, &[0], 6, &mut rng);
        let x = x_tokens.join(" ");
        // Backbone view: the sentence plus an appended same-topic clause
        // drawn from the topic's other half, the bridge that lets training
        // tie the two halves of a topic together.
        let tail = sample_sentence(topic, &[1], 3, &mut rng);
        let y_plus = format!("{x} {}.", tail.join(" "));
        // Deletion view: drop two tokens, keeping order.
        let mut keep: Vec<usize> = (0..x_tokens.len()).collect();
        for _ in 0..2 {
            keep.remove(rng.next_index(keep.len()));
        }
        let z_plus = keep
            .iter()
            .map(|&i| x_tokens[i].clone())
            .collect::<Vec<_>>()
            .join(" ");
        triples.push(AugmentedTriple {
            x,
            y_plus,
            z_plus,
            provenance: Provenance::default(),
        });
    }

    // Graded similarity: s1 is pure topic t1; s2 swaps `m` of its 5 tokens
    // for a second topic, and the gold score falls linearly with `m`. The
    // two sides still draw from disjoint topic halves, so they never share
    // a token at any grade.
    let mut dev = Vec::with_capacity(n_dev);
    for j in 0..n_dev {
        let m = j % 6; // 0..=5 replaced tokens
        let t1 = rng.next_index(TOPICS);
        let t2 = (t1 + 1 + rng.next_index(TOPICS - 1)) % TOPICS;
        let s1 = sample_sentence(t1, &[0], 5, &mut rng);
        let mut s2 = sample_sentence(t1, &[1], 5, &mut rng);
        let mut slots: Vec<usize> = (0..5).collect();
        rng.shuffle(&mut slots);
        for &slot in slots.iter().take(m.min(5)) {
            s2[slot] = topic_token(t2, 1, rng.next_index(HALF));
        }
        dev.push(STSPair {
            s1: s1.join(" "),
            s2: s2.join(" "),
            score: 5.0 - 0.8 * m as f64,
        });
    }

    let mut docs: Vec<Vec<String>> = Vec::new();
    for topic in 0..TOPICS {
        for half in 0..2 {
            docs.push((0..HALF).map(|i| topic_token(topic, half, i)).collect());
        }
    }
    let vocab = Vocab::build(docs.iter());
    Ok(ClusteredCorpus { triples, dev, vocab })
}

/// Split sizes and generator seed for the reference sentiment pipeline.
pub const REFERENCE_SENTIMENT_TRAIN: usize = 2000;
pub const REFERENCE_SENTIMENT_DEV: usize = 500;
pub const REFERENCE_SENTIMENT_TEST: usize = 500;
pub const REFERENCE_SENTIMENT_SEED: u64 = 42;
/// Model sizes for the reference sentiment classifier.
pub const REFERENCE_SENTIMENT_EMBED_DIM: usize = 32;
pub const REFERENCE_SENTIMENT_HIDDEN_DIM: usize = 16;

/// Training hyperparameters for the reference sentiment pipeline: a
/// deliberately tight one-epoch budget, where forcing the candidate memory
/// of lexicon tokens into the cell shows up as faster convergence.
pub fn reference_classifier_config(seed: u64) -> crate::classify::TrainConfig {
    crate::classify::TrainConfig {
        learning_rate: 2e-3,
        batch_size: 32,
        l2_lambda: 1e-7,
        dropout: 0.2,
        validation_interval: 10,
        max_epochs: 1,
        seed,
        ..Default::default()
    }
}

/// Corpus sizes and seed for the reference clustered-corpus pipeline.
pub const REFERENCE_TRIPLES: usize = 256;
pub const REFERENCE_DEV_PAIRS: usize = 64;
pub const REFERENCE_CORPUS_SEED: u64 = 42;
/// Embedding width for the reference mean-pooled encoder.
pub const REFERENCE_EMBED_DIM: usize = 32;

/// Training hyperparameters for the reference contrastive pipeline. The
/// temperature is deliberately softer than the full-scale default of 0.05:
/// randomly initialized desk-scale embeddings need a gentler contrast to
/// build cluster structure before in-batch repulsion erodes it.
pub fn reference_contrastive_config(seed: u64) -> crate::contrastive::ContrastiveConfig {
    crate::contrastive::ContrastiveConfig {
        learning_rate: 5e-3,
        batch_size: 32,
        weights: crate::contrastive::LossWeights {
            temperature: 0.5,
            ..Default::default()
        },
        dropout: 0.15,
        validation_interval: 4,
        max_epochs: 12,
        seed,
        ..Default::default()
    }
}
