//! Evaluation metrics and protocols: Spearman rank correlation for
//! similarity tasks, classification accuracy, sentence-pair evaluation, and
//! the multi-seed stability study.

use std::fmt::Write as _;
use std::io::Read as _;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// Fractional average ranks, 1-based: ties share the mean of the positions
/// they occupy.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) hold equal values; average 1-based rank.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::Degenerate(
            "correlation undefined for constant input".into(),
        ));
    }
    Ok(cov / (va * vb).sqrt())
}

/// Spearman rank correlation: Pearson correlation of fractional average
/// ranks, so ties are handled correctly. Errors on length mismatch, fewer
/// than two points, non-finite values, and constant inputs (a constant
/// prediction vector usually means the encoder collapsed — that is worth an
/// error, not a silent zero).
pub fn spearman(gold: &[f64], pred: &[f64]) -> Result<f64> {
    if gold.len() != pred.len() {
        return Err(Error::invalid(format!(
            "spearman: {} gold vs {} predicted",
            gold.len(),
            pred.len()
        )));
    }
    if gold.len() < 2 {
        return Err(Error::invalid("spearman needs at least two points"));
    }
    if gold.iter().chain(pred).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("spearman input contains non-finite values".into()));
    }
    pearson(&average_ranks(gold), &average_ranks(pred))
}

/// Fraction of exact label matches.
pub fn accuracy(gold: &[usize], pred: &[usize]) -> Result<f64> {
    if gold.len() != pred.len() {
        return Err(Error::invalid(format!(
            "accuracy: {} gold vs {} predicted",
            gold.len(),
            pred.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::invalid("accuracy needs at least one label"));
    }
    let hits = gold.iter().zip(pred).filter(|(g, p)| g == p).count();
    Ok(hits as f64 / gold.len() as f64)
}

/// One similarity-scored sentence pair.
#[derive(Debug, Clone, Deserialize)]
pub struct STSPair {
    pub s1: String,
    pub s2: String,
    pub score: f64,
}

/// Loads pairs from JSON-lines with fields `s1`, `s2`, `score`; gold scores
/// must be finite.
pub fn load_sts_pairs(path: &Path) -> Result<Vec<STSPair>> {
    let mut text = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let pair: STSPair = serde_json::from_str(line)
            .map_err(|e| Error::parse(path, lineno + 1, e.to_string()))?;
        if !pair.score.is_finite() {
            return Err(Error::parse(path, lineno + 1, "non-finite gold score"));
        }
        out.push(pair);
    }
    Ok(out)
}

/// A single metric measured against a named artifact.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub metric: String,
    pub value: f64,
    pub samples: usize,
    pub checkpoint: String,
}

impl EvalReport {
    pub fn text(&self) -> String {
        format!(
            "{} = {:.6} over {} samples ({})",
            self.metric, self.value, self.samples, self.checkpoint
        )
    }

    pub fn csv(&self) -> String {
        format!(
            "metric,value,samples,checkpoint\n{},{},{},{}\n",
            self.metric, self.value, self.samples, self.checkpoint
        )
    }
}

fn cosine64(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid("cosine: length mismatch"));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate("cosine of zero vector".into()));
    }
    Ok(dot / (na * nb))
}

/// Scores sentence pairs by the cosine of their encodings and reports
/// Spearman against gold. `encode` must be the deterministic eval-mode
/// encoder (no dropout, no projection head).
pub fn sts_eval<F>(mut encode: F, checkpoint: &str, pairs: &[STSPair]) -> Result<EvalReport>
where
    F: FnMut(&str) -> Result<Vec<f64>>,
{
    if pairs.is_empty() {
        return Err(Error::invalid("sts_eval: no pairs"));
    }
    let mut gold = Vec::with_capacity(pairs.len());
    let mut pred = Vec::with_capacity(pairs.len());
    for p in pairs {
        let e1 = encode(&p.s1)?;
        let e2 = encode(&p.s2)?;
        gold.push(p.score);
        pred.push(cosine64(&e1, &e2)?);
    }
    let rho = spearman(&gold, &pred)?;
    Ok(EvalReport {
        metric: "spearman".into(),
        value: rho,
        samples: pairs.len(),
        checkpoint: checkpoint.into(),
    })
}

/// Aggregate of one metric across seeds.
#[derive(Debug, Clone)]
pub struct SeedStudy {
    pub per_seed: Vec<(u64, f64)>,
    pub max: f64,
    pub min: f64,
    pub mean: f64,
}

impl SeedStudy {
    pub fn spread(&self) -> f64 {
        self.max - self.min
    }

    pub fn text(&self) -> String {
        let mut out = String::new();
        for (seed, v) in &self.per_seed {
            let _ = writeln!(out, "seed {seed}: {v:.6}");
        }
        let _ = writeln!(
            out,
            "max {:.6}  min {:.6}  mean {:.6}  spread {:.6}",
            self.max,
            self.min,
            self.mean,
            self.spread()
        );
        out
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("seed,metric\n");
        for (seed, v) in &self.per_seed {
            let _ = writeln!(out, "{seed},{v}");
        }
        out
    }
}

/// Runs the full pipeline once per seed and aggregates the final metric.
/// Any failing run aborts the study, naming the seed.
pub fn seed_stability<F>(mut run: F, seeds: &[u64]) -> Result<SeedStudy>
where
    F: FnMut(u64) -> Result<f64>,
{
    if seeds.len() < 2 {
        return Err(Error::invalid("seed study needs at least two seeds"));
    }
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let v = run(seed)
            .map_err(|e| Error::invalid(format!("seed {seed} run failed: {e}")))?;
        per_seed.push((seed, v));
    }
    let max = per_seed.iter().map(|&(_, v)| v).fold(f64::NEG_INFINITY, f64::max);
    let min = per_seed.iter().map(|&(_, v)| v).fold(f64::INFINITY, f64::min);
    let mean = per_seed.iter().map(|&(_, v)| v).sum::<f64>() / per_seed.len() as f64;
    Ok(SeedStudy {
        per_seed,
        max,
        min,
        mean,
    })
}
