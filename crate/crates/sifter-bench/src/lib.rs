//! Deterministic fixture builders shared by the criterion benches.
//!
//! Everything here is seeded so benchmark inputs are identical from run to
//! run; wall-clock differences then reflect the code, not the data.

use sifter_core::augment::{tokenize, Corpus};
use sifter_core::contrastive::TripleBatch;
use sifter_core::numerics::Tensor;
use sifter_core::recurrent::LstmParams;
use sifter_core::{Rng, Shape};

/// A recurrent cell plus an input sequence sized like a small real workload.
pub fn lstm_fixture(d_in: usize, d_h: usize, steps: usize) -> (LstmParams<f64>, Vec<Tensor<f64>>) {
    let mut rng = Rng::new(11);
    let params = LstmParams::init(d_in, d_h, &mut rng);
    let inputs = (0..steps)
        .map(|_| Tensor::uniform(Shape::Vector(d_in), -1.0, 1.0, &mut rng))
        .collect();
    (params, inputs)
}

/// A three-view batch of tokenized sentences drawn from the synthetic
/// clustered corpus, plus the vocabulary that indexes it.
pub fn contrastive_fixture(batch: usize) -> (sifter_core::Vocab, TripleBatch) {
    let corpus = sifter_core::synth::clustered_triples(batch.max(8), 8, 3).expect("synth corpus");
    let take = |f: fn(&sifter_core::augment::AugmentedTriple) -> &str| -> Vec<Vec<String>> {
        corpus.triples[..batch].iter().map(|t| tokenize(f(t))).collect()
    };
    let views = TripleBatch::new(
        take(|t| &t.x),
        take(|t| &t.y_plus),
        take(|t| &t.z_plus),
    )
    .expect("aligned views");
    (corpus.vocab, views)
}

/// A plain-text corpus with enough lexical variety to exercise every
/// augmentation rule: deletions, pronoun/verb backbones, and the filter.
pub fn corpus_fixture(sentences: usize) -> Corpus {
    let templates = [
        "I like this {} because it looks so fresh and I think it should be delicious.",
        "She wants the {} although it seems heavy and we agree it could be useful.",
        "They describe a {} since the color appears warm and everyone says it feels right.",
        "We carry the {} because the handle stays firm and the base never slips.",
    ];
    let nouns = ["apple", "basket", "lantern", "ledger", "kettle", "ribbon"];
    let mut text = String::new();
    for i in 0..sentences {
        let template = templates[i % templates.len()];
        let noun = nouns[i % nouns.len()];
        text.push_str(&template.replace("{}", noun));
        text.push('\n');
    }
    Corpus::from_lines(&text)
}

/// Two equal-length score vectors with heavy ties, for rank correlation.
pub fn tied_scores(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rng = Rng::new(29);
    let a = (0..n).map(|_| rng.next_index(100) as f64).collect();
    let b = (0..n).map(|_| rng.next_index(100) as f64).collect();
    (a, b)
}
