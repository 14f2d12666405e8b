//! Rule-based positive-sample construction for contrastive training.
//!
//! Two transforms produce two views of each sentence:
//!
//! * **backbone appending** — a subject/relation/object triple is rendered
//!   and appended after the original text, lengthening it without changing
//!   its meaning;
//! * **useless-word deletion** — articles, conjunctions, and similar
//!   low-content tokens are struck, shortening the text without changing its
//!   meaning.
//!
//! Triples come from an optional annotation sidecar (one JSON record per
//! sentence) or, failing that, from a small pattern-matching extractor that
//! needs only word lists. The module also houses the corpus hygiene filter
//! applied before augmentation and the (de)serialization of augmented
//! triples.

use std::collections::HashMap;
use std::fmt;
use std::io::Read as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::recurrent::Lexicon;

/// Splits on whitespace, then splits off each ASCII punctuation character as
/// its own token. Apostrophes and hyphens stay inside words ("don't",
/// "long-term"); "U.S." becomes `["U", ".", "S", "."]`.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        for c in chunk.chars() {
            if c.is_ascii_punctuation() && c != '\'' && c != '-' {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(c.to_string());
            } else {
                word.push(c);
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

/// A token that carries content, as opposed to bare punctuation.
pub fn is_word_token(token: &str) -> bool {
    token.chars().any(char::is_alphanumeric)
}

/// Inverse of [`tokenize`] up to whitespace normalization: single space
/// before each word token, nothing before punctuation.
pub fn detokenize<T: AsRef<str>>(tokens: &[T]) -> String {
    let mut out = String::new();
    for t in tokens {
        let t = t.as_ref();
        if !out.is_empty() && is_word_token(t) {
            out.push(' ');
        }
        out.push_str(t);
    }
    out
}

fn starts_uppercase(token: &str) -> bool {
    token.chars().next().map(char::is_uppercase).unwrap_or(false)
}

/// `needle` appears in `hay` in order (not necessarily contiguously).
fn is_subsequence(needle: &[String], hay: &[String], fold_case: bool) -> bool {
    let eq = |a: &str, b: &str| {
        if fold_case {
            a.to_lowercase() == b.to_lowercase()
        } else {
            a == b
        }
    };
    let mut it = hay.iter();
    needle.iter().all(|n| it.any(|h| eq(n, h)))
}

fn read_file(path: &Path) -> Result<String> {
    let mut text = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    Ok(text)
}

/// One input sentence: the raw text and its token list.
#[derive(Debug, Clone)]
pub struct Sentence {
    raw: String,
    tokens: Vec<String>,
}

impl Sentence {
    pub fn new(raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let tokens = tokenize(&raw);
        Sentence { raw, tokens }
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn word_count(&self) -> usize {
        self.tokens.iter().filter(|t| is_word_token(t)).count()
    }

    /// Last word token, skipping trailing punctuation.
    pub fn last_word(&self) -> Option<&str> {
        self.tokens
            .iter()
            .rev()
            .find(|t| is_word_token(t))
            .map(String::as_str)
    }
}

/// An ordered list of sentences.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    sentences: Vec<Sentence>,
}

#[derive(Deserialize)]
struct TextRecord {
    text: String,
}

impl Corpus {
    pub fn new(sentences: Vec<Sentence>) -> Self {
        Corpus { sentences }
    }

    /// One sentence per line; blank lines skipped.
    pub fn from_lines(text: &str) -> Self {
        let sentences = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(Sentence::new)
            .collect();
        Corpus { sentences }
    }

    /// Reads a corpus file. `.jsonl`/`.json` extensions are parsed as one
    /// `{"text": ...}` record per line; anything else as plain text lines.
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_file(path)?;
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if ext.eq_ignore_ascii_case("jsonl") || ext.eq_ignore_ascii_case("json") {
            let mut sentences = Vec::new();
            for (lineno, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let rec: TextRecord = serde_json::from_str(line)
                    .map_err(|e| Error::parse(path, lineno + 1, e.to_string()))?;
                sentences.push(Sentence::new(rec.text));
            }
            Ok(Corpus { sentences })
        } else {
            Ok(Corpus::from_lines(&text))
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sentence> {
        self.sentences.iter()
    }
}

/// A subject/relation/object backbone, each part a token list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triple {
    pub subject: Vec<String>,
    pub relation: Vec<String>,
    pub object: Vec<String>,
}

impl Triple {
    pub fn from_strings(subject: &str, relation: &str, object: &str) -> Self {
        Triple {
            subject: tokenize(subject),
            relation: tokenize(relation),
            object: tokenize(object),
        }
    }

    /// "subject relation object" with single spaces between words.
    pub fn render(&self) -> String {
        [&self.subject, &self.relation, &self.object]
            .iter()
            .map(|part| detokenize(part))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn all_tokens(&self) -> Vec<String> {
        self.subject
            .iter()
            .chain(&self.relation)
            .chain(&self.object)
            .cloned()
            .collect()
    }
}

/// Candidate backbones for one sentence, by corpus index.
#[derive(Debug, Clone)]
pub struct TripleAnnotation {
    pub index: usize,
    pub triples: Vec<Triple>,
}

#[derive(Deserialize)]
struct AnnotationRecord {
    index: usize,
    triples: Vec<[String; 3]>,
}

/// Loads an annotation sidecar (JSON-lines with `index` and `triples`),
/// enforcing that every triple's tokens appear in the indexed sentence as an
/// order-preserving subsequence (case-insensitively).
pub fn load_annotations(
    path: &Path,
    corpus: &Corpus,
) -> Result<HashMap<usize, TripleAnnotation>> {
    let text = read_file(path)?;
    let mut out: HashMap<usize, TripleAnnotation> = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnnotationRecord = serde_json::from_str(line)
            .map_err(|e| Error::parse(path, lineno + 1, e.to_string()))?;
        let sentence = corpus.sentences().get(rec.index).ok_or_else(|| {
            Error::parse(
                path,
                lineno + 1,
                format!("index {} out of range for corpus of {}", rec.index, corpus.len()),
            )
        })?;
        let mut triples = Vec::with_capacity(rec.triples.len());
        for [s, r, o] in &rec.triples {
            let triple = Triple::from_strings(s, r, o);
            if !is_subsequence(&triple.all_tokens(), sentence.tokens(), true) {
                return Err(Error::parse(
                    path,
                    lineno + 1,
                    format!(
                        "triple \"{}\" is not a subsequence of sentence {}",
                        triple.render(),
                        rec.index
                    ),
                ));
            }
            triples.push(triple);
        }
        out.insert(
            rec.index,
            TripleAnnotation {
                index: rec.index,
                triples,
            },
        );
    }
    Ok(out)
}

/// The word lists augmentation runs on. All ship with editable built-in
/// defaults; any of them can be replaced from a file.
#[derive(Debug, Clone)]
pub struct AugmentLexicons {
    /// Tokens struck by useless-word deletion.
    pub deletion: Lexicon,
    /// Subject candidates for the backbone extractor.
    pub pronouns: Lexicon,
    /// Relation candidates for the backbone extractor.
    pub verbs: Lexicon,
    /// Skipped while hunting for a backbone object.
    pub determiners: Lexicon,
}

impl AugmentLexicons {
    pub fn builtin() -> Self {
        AugmentLexicons {
            deletion: Lexicon::from_lines("deletion", include_str!("../data/deletion.txt"), true),
            pronouns: Lexicon::from_lines("pronouns", include_str!("../data/pronouns.txt"), true),
            verbs: Lexicon::from_lines("verbs", include_str!("../data/verbs.txt"), true),
            determiners: Lexicon::from_lines(
                "determiners",
                include_str!("../data/determiners.txt"),
                true,
            ),
        }
    }
}

impl Default for AugmentLexicons {
    fn default() -> Self {
        AugmentLexicons::builtin()
    }
}

/// Pattern-matching backbone extractor: the first pronoun-or-capitalized
/// word (that is not itself a verb) is the subject, the first verb after it
/// the relation, and the first later content word — skipping determiners,
/// deletion-lexicon entries, and verbs — the object.
///
/// Returns at most one triple (the leftmost match) so that downstream output
/// does not depend on the seed used for triple selection.
pub fn heuristic_svo(s: &Sentence, lex: &AugmentLexicons) -> Vec<Triple> {
    let toks = s.tokens();
    let subject = toks.iter().position(|t| {
        is_word_token(t)
            && !lex.verbs.contains(t)
            && (lex.pronouns.contains(t) || starts_uppercase(t))
    });
    let Some(si) = subject else { return Vec::new() };
    let relation = (si + 1..toks.len()).find(|&i| lex.verbs.contains(&toks[i]));
    let Some(ri) = relation else { return Vec::new() };
    let object = (ri + 1..toks.len()).find(|&i| {
        let t = &toks[i];
        is_word_token(t)
            && !lex.deletion.contains(t)
            && !lex.verbs.contains(t)
            && !lex.determiners.contains(t)
    });
    let Some(oi) = object else { return Vec::new() };
    vec![Triple {
        subject: vec![toks[si].clone()],
        relation: vec![toks[ri].clone()],
        object: vec![toks[oi].clone()],
    }]
}

/// Appends a rendered backbone triple (plus a terminal period) to the
/// sentence. Candidates come from the annotation when present, otherwise
/// from [`heuristic_svo`]; the choice among multiple candidates is uniform
/// under `rng`. Errors when no triple is obtainable, so callers can flag and
/// skip rather than silently pass the sentence through.
pub fn add_backbone(
    s: &Sentence,
    ann: Option<&TripleAnnotation>,
    lex: &AugmentLexicons,
    rng: &mut Rng,
) -> Result<(String, Triple)> {
    let candidates = match ann {
        Some(a) if !a.triples.is_empty() => a.triples.clone(),
        _ => heuristic_svo(s, lex),
    };
    if candidates.is_empty() {
        return Err(Error::invalid(format!(
            "no backbone triple obtainable for \"{}\"",
            s.raw()
        )));
    }
    let pick = if candidates.len() == 1 {
        0
    } else {
        rng.next_index(candidates.len())
    };
    let triple = candidates[pick].clone();
    Ok((format!("{} {}.", s.raw(), triple.render()), triple))
}

/// Outcome of useless-word deletion: the surviving text plus which tokens
/// were struck. `text` may legitimately come out empty; callers flag that.
#[derive(Debug, Clone)]
pub struct Deletion {
    pub text: String,
    pub removed: Vec<String>,
}

/// Removes every token whose case-folded form is in the deletion lexicon,
/// preserving all other tokens and punctuation in order.
pub fn delete_useless(s: &Sentence, deletion: &Lexicon) -> Deletion {
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for t in s.tokens() {
        if is_word_token(t) && deletion.contains(t) {
            removed.push(t.clone());
        } else {
            kept.push(t.as_str());
        }
    }
    Deletion {
        text: detokenize(&kept),
        removed,
    }
}

/// Corpus hygiene applied before augmentation:
///
/// * a sentence whose last word starts with an uppercase letter is dropped
///   together with its immediate successor (the signature of a sentence
///   splitter tripping over an abbreviation);
/// * otherwise, sentences with fewer than three word tokens are dropped.
///
/// Idempotent: every survivor has been checked against both rules.
pub fn filter_corpus(c: &Corpus) -> Corpus {
    let all = c.sentences();
    let mut kept = Vec::new();
    let mut i = 0;
    while i < all.len() {
        let s = &all[i];
        if s.last_word().map(starts_uppercase).unwrap_or(false) {
            i += 2;
            continue;
        }
        if s.word_count() < 3 {
            i += 1;
            continue;
        }
        kept.push(s.clone());
        i += 1;
    }
    Corpus::new(kept)
}

/// Where an augmented triple came from: the backbone used and the tokens
/// deletion struck. Kept in memory for reporting; not serialized.
#[derive(Debug, Clone, Default)]
pub struct Provenance {
    pub backbone: Option<Triple>,
    pub removed: Vec<String>,
}

/// One training example: the original sentence and its two views.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentedTriple {
    pub x: String,
    pub y_plus: String,
    pub z_plus: String,
    #[serde(skip)]
    pub provenance: Provenance,
}

/// Counts from one augmentation run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildReport {
    pub total: usize,
    pub produced: usize,
    pub skipped_no_backbone: usize,
    pub empty_deletions: usize,
}

impl fmt::Display for BuildReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} sentences in, {} triples out, {} skipped (no backbone), {} empty deletions",
            self.total, self.produced, self.skipped_no_backbone, self.empty_deletions
        )
    }
}

/// Builds one augmented triple per sentence. Each sentence gets its own
/// generator derived from `(seed, index)`, so output is independent of
/// processing order and reruns with the same seed are byte-identical.
/// Sentences yielding no backbone are skipped and counted. Errors when
/// nothing survives.
pub fn build_triples(
    corpus: &Corpus,
    annotations: Option<&HashMap<usize, TripleAnnotation>>,
    lex: &AugmentLexicons,
    seed: u64,
) -> Result<(Vec<AugmentedTriple>, BuildReport)> {
    let mut report = BuildReport {
        total: corpus.len(),
        ..BuildReport::default()
    };
    let mut out = Vec::with_capacity(corpus.len());
    for (i, s) in corpus.iter().enumerate() {
        let mut rng = Rng::derive(seed, i as u64);
        let ann = annotations.and_then(|m| m.get(&i));
        match add_backbone(s, ann, lex, &mut rng) {
            Ok((y_plus, triple)) => {
                let deletion = delete_useless(s, &lex.deletion);
                if deletion.text.is_empty() {
                    report.empty_deletions += 1;
                }
                out.push(AugmentedTriple {
                    x: s.raw().to_string(),
                    y_plus,
                    z_plus: deletion.text,
                    provenance: Provenance {
                        backbone: Some(triple),
                        removed: deletion.removed,
                    },
                });
            }
            Err(_) => report.skipped_no_backbone += 1,
        }
    }
    report.produced = out.len();
    if out.is_empty() {
        return Err(Error::Degenerate(
            "no sentence yielded a backbone triple".into(),
        ));
    }
    Ok((out, report))
}

/// Writes triples as JSON-lines with fields `x`, `y_plus`, `z_plus`.
pub fn write_triples(path: &Path, triples: &[AugmentedTriple]) -> Result<()> {
    let mut out = String::new();
    for t in triples {
        out.push_str(&serde_json::to_string(t).expect("plain string fields"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads triples back, enforcing the two structural invariants: `y_plus`
/// extends `x` verbatim (with strictly more tokens) and `z_plus` is an
/// order-preserving subsequence of `x`'s tokens.
pub fn load_triples(path: &Path) -> Result<Vec<AugmentedTriple>> {
    let text = read_file(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let t: AugmentedTriple = serde_json::from_str(line)
            .map_err(|e| Error::parse(path, lineno + 1, e.to_string()))?;
        if !t.y_plus.starts_with(&t.x) || tokenize(&t.y_plus).len() <= tokenize(&t.x).len() {
            return Err(Error::parse(
                path,
                lineno + 1,
                "y_plus does not extend x".to_string(),
            ));
        }
        if !is_subsequence(&tokenize(&t.z_plus), &tokenize(&t.x), false) {
            return Err(Error::parse(
                path,
                lineno + 1,
                "z_plus is not a subsequence of x".to_string(),
            ));
        }
        out.push(t);
    }
    Ok(out)
}
