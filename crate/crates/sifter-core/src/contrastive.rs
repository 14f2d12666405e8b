//! Contrastive sentence-embedding training.
//!
//! The objective pulls each sentence toward its augmented views and pushes
//! it from the other sentences in the batch (in-batch negatives), using
//! temperature-scaled cosine similarities. Three pairings are weighted and
//! summed: original–backbone, original–deletion, and backbone–deletion.
//! Denominators are anchor-consistent: anchor `i` is contrasted against all
//! `N` positive-view vectors of its batch, exactly the in-batch-negative
//! pattern of the single-pair loss.
//!
//! The encoder is a small trainable stand-in for a pretrained transformer:
//! an embedding table pooled by either a mean or the final hidden state of
//! an LSTM, with a train-only tanh projection head that evaluation discards.

use crate::augment::{tokenize, AugmentedTriple};
use crate::error::{Error, Result};
use crate::numerics::{
    dot, l2_normalize, matmul, matvec_t, outer, DropoutMask, Rng, Scalar, Shape, Tensor,
};
use crate::params::ParamSet;
use crate::recurrent::{sequence_backward, sequence_forward, LstmParams, SeqCache};
use crate::vocab::Vocab;

/// Cosine similarity: dot product of the L2-normalized vectors.
pub fn cosine<S: Scalar>(u: &Tensor<S>, v: &Tensor<S>) -> Result<S> {
    dot(&l2_normalize(u)?, &l2_normalize(v)?)
}

/// Pair weights and temperature for the three-view loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub xy: f64,
    pub xz: f64,
    pub yz: f64,
    pub temperature: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            xy: 1.0,
            xz: 1.0,
            yz: 1.0,
            temperature: 0.05,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("xy", self.xy), ("xz", self.xz), ("yz", self.yz)] {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::invalid(format!(
                    "loss weight {name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if self.xy == 0.0 && self.xz == 0.0 && self.yz == 0.0 {
            return Err(Error::invalid("at least one loss weight must be positive"));
        }
        if self.temperature <= 0.0 || !self.temperature.is_finite() {
            return Err(Error::invalid(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Unit rows and their original norms; a zero row is an error.
fn normalized_rows<S: Scalar>(m: &Tensor<S>, what: &str) -> Result<(Vec<Vec<S>>, Vec<S>)> {
    let mut rows = Vec::with_capacity(m.rows());
    let mut norms = Vec::with_capacity(m.rows());
    for i in 0..m.rows() {
        let r = m.row_slice(i);
        let n = r.iter().fold(S::zero(), |acc, &x| acc + x * x).sqrt();
        if n == S::zero() {
            return Err(Error::Degenerate(format!("{what} row {i} is a zero vector")));
        }
        rows.push(r.iter().map(|&x| x / n).collect());
        norms.push(n);
    }
    Ok((rows, norms))
}

fn nce_shapes<S: Scalar>(anchors: &Tensor<S>, positives: &Tensor<S>, tau: f64) -> Result<usize> {
    if anchors.shape() != positives.shape() || !matches!(anchors.shape(), Shape::Matrix(..)) {
        return Err(Error::Shape {
            op: "info_nce",
            lhs: anchors.shape().to_string(),
            rhs: positives.shape().to_string(),
        });
    }
    if anchors.rows() == 0 {
        return Err(Error::invalid("info_nce needs at least one pair"));
    }
    if tau <= 0.0 || !tau.is_finite() {
        return Err(Error::invalid(format!("temperature must be positive, got {tau}")));
    }
    Ok(anchors.rows())
}

/// In-batch contrastive loss with gradients.
///
/// For row-normalized vectors `u_i` (anchors) and `v_j` (positives),
/// per-anchor loss is `-s_ii/tau + logsumexp_j(s_ij/tau)` with
/// `s_ij = u_i . v_j`, averaged over the batch. Gradients route through the
/// softmax (`q_ij - delta_ij`, scaled by `1/(N tau)`) and then through the
/// normalization, `d s/d u = (v_j - s_ij u_i)/|u_i|`.
pub fn info_nce_grads<S: Scalar>(
    anchors: &Tensor<S>,
    positives: &Tensor<S>,
    tau: f64,
) -> Result<(S, Tensor<S>, Tensor<S>)> {
    let n = nce_shapes(anchors, positives, tau)?;
    let d = anchors.cols();
    let (u, nu) = normalized_rows(anchors, "anchors")?;
    let (v, nv) = normalized_rows(positives, "positives")?;
    let inv_tau = S::from_f64(1.0 / tau);

    let mut sims = vec![vec![S::zero(); n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut s = S::zero();
            for k in 0..d {
                s += u[i][k] * v[j][k];
            }
            sims[i][j] = s;
        }
    }

    let mut loss = S::zero();
    // Softmax rows of the scaled similarities.
    let mut q = vec![vec![S::zero(); n]; n];
    for i in 0..n {
        let logits: Vec<S> = sims[i].iter().map(|&s| s * inv_tau).collect();
        let m = logits.iter().fold(S::neg_infinity(), |a, &b| if b > a { b } else { a });
        let mut sum = S::zero();
        for j in 0..n {
            q[i][j] = (logits[j] - m).exp();
            sum += q[i][j];
        }
        for j in 0..n {
            q[i][j] /= sum;
        }
        // logsumexp - diagonal logit; exactly 0 when n == 1.
        loss += m + sum.ln() - logits[i];
    }
    let n_s = S::from_f64(n as f64);
    loss /= n_s;
    if !loss.as_f64().is_finite() {
        return Err(Error::Numeric("info_nce produced a non-finite loss".into()));
    }

    let mut d_anchors = Tensor::zeros(anchors.shape());
    let mut d_positives = Tensor::zeros(positives.shape());
    let scale = inv_tau / n_s;
    for i in 0..n {
        for j in 0..n {
            let mut g = q[i][j] * scale;
            if i == j {
                g -= scale;
            }
            // d s_ij / d anchor_i and / d positive_j, through normalization.
            let du = d_anchors.row_slice_mut(i);
            for k in 0..d {
                du[k] += g * (v[j][k] - sims[i][j] * u[i][k]) / nu[i];
            }
            let dv = d_positives.row_slice_mut(j);
            for k in 0..d {
                dv[k] += g * (u[i][k] - sims[i][j] * v[j][k]) / nv[j];
            }
        }
    }
    Ok((loss, d_anchors, d_positives))
}

/// Loss-only variant of [`info_nce_grads`].
pub fn info_nce<S: Scalar>(anchors: &Tensor<S>, positives: &Tensor<S>, tau: f64) -> Result<S> {
    info_nce_grads(anchors, positives, tau).map(|(l, _, _)| l)
}

/// Weighted sum of the three pairings. Terms with zero weight are skipped
/// entirely, so a `(1,0,0)` configuration is bit-identical to the single
/// X–Y loss.
pub fn sifter_loss<S: Scalar>(
    hx: &Tensor<S>,
    hy: &Tensor<S>,
    hz: &Tensor<S>,
    w: &LossWeights,
) -> Result<S> {
    sifter_loss_grads(hx, hy, hz, w).map(|(l, _, _, _)| l)
}

/// [`sifter_loss`] with gradients w.r.t. all three representation matrices.
pub fn sifter_loss_grads<S: Scalar>(
    hx: &Tensor<S>,
    hy: &Tensor<S>,
    hz: &Tensor<S>,
    w: &LossWeights,
) -> Result<(S, Tensor<S>, Tensor<S>, Tensor<S>)> {
    w.validate()?;
    if hx.shape() != hy.shape() || hx.shape() != hz.shape() {
        return Err(Error::Shape {
            op: "sifter_loss",
            lhs: hx.shape().to_string(),
            rhs: format!("{} / {}", hy.shape(), hz.shape()),
        });
    }
    let mut loss = S::zero();
    let mut dx = Tensor::zeros(hx.shape());
    let mut dy = Tensor::zeros(hy.shape());
    let mut dz = Tensor::zeros(hz.shape());
    let add = |target: &mut Tensor<S>, src: &Tensor<S>, k: S| {
        for (t, s) in target.data_mut().iter_mut().zip(src.data()) {
            *t += k * *s;
        }
    };
    if w.xy > 0.0 {
        let (l, da, dp) = info_nce_grads(hx, hy, w.temperature)?;
        let k = S::from_f64(w.xy);
        loss += k * l;
        add(&mut dx, &da, k);
        add(&mut dy, &dp, k);
    }
    if w.xz > 0.0 {
        let (l, da, dp) = info_nce_grads(hx, hz, w.temperature)?;
        let k = S::from_f64(w.xz);
        loss += k * l;
        add(&mut dx, &da, k);
        add(&mut dz, &dp, k);
    }
    if w.yz > 0.0 {
        let (l, da, dp) = info_nce_grads(hy, hz, w.temperature)?;
        let k = S::from_f64(w.yz);
        loss += k * l;
        add(&mut dy, &da, k);
        add(&mut dz, &dp, k);
    }
    Ok((loss, dx, dy, dz))
}

/// How the encoder pools token embeddings into one vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    Mean,
    Lstm,
}

pub const PROJ_W: &str = "proj.w";
pub const PROJ_B: &str = "proj.b";
const EMBEDDING: &str = "embedding";

/// Small trainable sentence encoder. Evaluation is deterministic: no
/// dropout, no projection head. Training applies dropout to the embeddings
/// (and, for LSTM pooling, to the pooled output) and pushes the pooled
/// vector through a tanh projection head that is discarded at eval time.
#[derive(Debug, Clone)]
pub struct Encoder<S: Scalar = f64> {
    pub embedding: Tensor<S>,
    pub lstm: Option<LstmParams<S>>,
    /// Projection head on the pooled representation (square: repr -> repr).
    pub proj_w: Tensor<S>,
    pub proj_b: Tensor<S>,
    pub dropout: f64,
}

fn check_encoder_dims(vocab_size: usize, d_e: usize, dropout: f64) -> Result<()> {
    if vocab_size == 0 || d_e == 0 {
        return Err(Error::invalid("encoder dimensions must be positive"));
    }
    if !(0.0..1.0).contains(&dropout) {
        return Err(Error::invalid(format!("dropout {dropout} outside [0, 1)")));
    }
    Ok(())
}

impl<S: Scalar> Encoder<S> {
    /// Mean-pooled encoder; representation dimension is the embedding size.
    pub fn mean_pool(vocab_size: usize, d_e: usize, dropout: f64, rng: &mut Rng) -> Result<Self> {
        check_encoder_dims(vocab_size, d_e, dropout)?;
        let be = 1.0 / (d_e as f64).sqrt();
        Ok(Encoder {
            embedding: Tensor::uniform(Shape::Matrix(vocab_size, d_e), -be, be, rng),
            lstm: None,
            proj_w: Tensor::uniform(Shape::Matrix(d_e, d_e), -be, be, rng),
            proj_b: Tensor::uniform(Shape::Vector(d_e), -be, be, rng),
            dropout,
        })
    }

    /// LSTM-pooled encoder; the representation is the final hidden state.
    pub fn lstm_pool(
        vocab_size: usize,
        d_e: usize,
        d_h: usize,
        dropout: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        check_encoder_dims(vocab_size, d_e, dropout)?;
        if d_h == 0 {
            return Err(Error::invalid("hidden dimension must be positive"));
        }
        let be = 1.0 / (d_e as f64).sqrt();
        let bh = 1.0 / (d_h as f64).sqrt();
        Ok(Encoder {
            embedding: Tensor::uniform(Shape::Matrix(vocab_size, d_e), -be, be, rng),
            lstm: Some(LstmParams::init(d_e, d_h, rng)),
            proj_w: Tensor::uniform(Shape::Matrix(d_h, d_h), -bh, bh, rng),
            proj_b: Tensor::uniform(Shape::Vector(d_h), -bh, bh, rng),
            dropout,
        })
    }

    pub fn pooling(&self) -> Pooling {
        if self.lstm.is_some() {
            Pooling::Lstm
        } else {
            Pooling::Mean
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    pub fn d_e(&self) -> usize {
        self.embedding.cols()
    }

    /// Dimension of the pooled representation.
    pub fn repr_dim(&self) -> usize {
        self.proj_b.numel()
    }

    pub fn export(&self) -> Result<ParamSet<S>> {
        let mut ps = ParamSet::new();
        ps.push(EMBEDDING, self.embedding.clone())?;
        if let Some(lstm) = &self.lstm {
            lstm.export_into(&mut ps)?;
        }
        ps.push(PROJ_W, self.proj_w.clone())?;
        ps.push(PROJ_B, self.proj_b.clone())?;
        Ok(ps)
    }

    pub fn import_from(&mut self, ps: &ParamSet<S>) -> Result<()> {
        let emb = ps.require(EMBEDDING)?;
        if emb.shape() != self.embedding.shape() {
            return Err(Error::Shape {
                op: "encoder import",
                lhs: self.embedding.shape().to_string(),
                rhs: emb.shape().to_string(),
            });
        }
        self.embedding = emb.clone();
        if let Some(lstm) = &mut self.lstm {
            lstm.import_from(ps)?;
        }
        let w = ps.require(PROJ_W)?;
        let b = ps.require(PROJ_B)?;
        if w.shape() != self.proj_w.shape() || b.shape() != self.proj_b.shape() {
            return Err(Error::Shape {
                op: "encoder import",
                lhs: self.proj_w.shape().to_string(),
                rhs: w.shape().to_string(),
            });
        }
        self.proj_w = w.clone();
        self.proj_b = b.clone();
        Ok(())
    }

    fn embed(&self, ids: &[usize]) -> Result<Vec<Tensor<S>>> {
        if ids.is_empty() {
            return Err(Error::invalid("cannot encode an empty sentence"));
        }
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

    /// Deterministic eval-mode encoding: pooled vector, no dropout, no head.
    pub fn encode_eval(&self, vocab: &Vocab, tokens: &[String]) -> Result<Tensor<S>> {
        let inputs = self.embed(&vocab.ids(tokens))?;
        match &self.lstm {
            Some(lstm) => {
                let run = sequence_forward(lstm, &inputs, tokens, None, 0.0, None, false)?;
                Ok(run.repr)
            }
            None => Ok(mean_vectors(&inputs)),
        }
    }

    /// One encoding. Train mode applies dropout and the projection head and
    /// requires a generator; eval mode delegates to [`Self::encode_eval`].
    pub fn encode(
        &self,
        vocab: &Vocab,
        tokens: &[String],
        train: bool,
        rng: Option<&mut Rng>,
    ) -> Result<Tensor<S>> {
        if !train {
            return self.encode_eval(vocab, tokens);
        }
        let rng = rng.ok_or_else(|| Error::invalid("train-mode encoding needs an rng"))?;
        self.forward_train(vocab, tokens, rng).map(|(z, _)| z)
    }

    /// Train-mode forward pass retaining everything backward needs.
    fn forward_train(
        &self,
        vocab: &Vocab,
        tokens: &[String],
        rng: &mut Rng,
    ) -> Result<(Tensor<S>, EncCache<S>)> {
        let ids = vocab.ids(tokens);
        let inputs = self.embed(&ids)?;
        let (pooled, kind) = match &self.lstm {
            Some(lstm) => {
                let run = sequence_forward(
                    lstm,
                    &inputs,
                    tokens,
                    None,
                    self.dropout,
                    Some(rng),
                    true,
                )?;
                let cache = run.cache.expect("train mode caches");
                (run.repr, CacheKind::Lstm { seq: cache })
            }
            None => {
                let masks = if self.dropout > 0.0 {
                    let mut ms = Vec::with_capacity(inputs.len());
                    for _ in 0..inputs.len() {
                        ms.push(DropoutMask::draw(
                            Shape::Vector(self.d_e()),
                            self.dropout,
                            rng,
                        )?);
                    }
                    Some(ms)
                } else {
                    None
                };
                let dropped: Vec<Tensor<S>> = match &masks {
                    Some(ms) => inputs
                        .iter()
                        .zip(ms)
                        .map(|(x, m)| m.apply(x))
                        .collect::<Result<_>>()?,
                    None => inputs.clone(),
                };
                (mean_vectors(&dropped), CacheKind::Mean { masks })
            }
        };
        let mut a = matmul(&self.proj_w, &pooled)?;
        for (ai, bi) in a.data_mut().iter_mut().zip(self.proj_b.data()) {
            *ai += *bi;
        }
        let z = a.map(|v| v.tanh());
        let cache = EncCache {
            ids,
            pooled,
            z: z.clone(),
            kind,
        };
        Ok((z, cache))
    }

    /// Backward through head, pooling, dropout, and embedding lookup.
    /// Accumulates into `grads`, which must be aligned with [`Self::export`].
    fn backward(&self, cache: &EncCache<S>, dz: &Tensor<S>, grads: &mut ParamSet<S>) -> Result<()> {
        // z = tanh(W p + b)
        let mut da = Tensor::zeros(dz.shape());
        for i in 0..dz.numel() {
            let zi = cache.z.data()[i];
            da.data_mut()[i] = dz.data()[i] * (S::one() - zi * zi);
        }
        add_into(grads.get_mut(PROJ_W).expect("aligned"), &outer(&da, &cache.pooled)?);
        add_into(grads.get_mut(PROJ_B).expect("aligned"), &da);
        let dp = matvec_t(&self.proj_w, &da)?;

        match &cache.kind {
            CacheKind::Lstm { seq } => {
                let lstm = self.lstm.as_ref().expect("lstm cache implies lstm params");
                let sg = sequence_backward(lstm, seq, &dp)?;
                let mut lstm_grads = ParamSet::new();
                sg.params.export_into(&mut lstm_grads)?;
                for (name, g) in lstm_grads.iter() {
                    add_into(grads.get_mut(name).expect("aligned"), g);
                }
                let d_emb = grads.get_mut(EMBEDDING).expect("aligned");
                for (t, &id) in cache.ids.iter().enumerate() {
                    let row = d_emb.row_slice_mut(id);
                    for (r, g) in row.iter_mut().zip(sg.inputs[t].data()) {
                        *r += *g;
                    }
                }
            }
            CacheKind::Mean { masks } => {
                let t_len = cache.ids.len();
                let inv_t = S::from_f64(1.0 / t_len as f64);
                let d_emb = grads.get_mut(EMBEDDING).expect("aligned");
                for (t, &id) in cache.ids.iter().enumerate() {
                    let mut g = Tensor::zeros(dp.shape());
                    for (gi, di) in g.data_mut().iter_mut().zip(dp.data()) {
                        *gi = *di * inv_t;
                    }
                    let g = match masks {
                        Some(ms) => ms[t].apply(&g)?,
                        None => g,
                    };
                    let row = d_emb.row_slice_mut(id);
                    for (r, v) in row.iter_mut().zip(g.data()) {
                        *r += *v;
                    }
                }
            }
        }
        Ok(())
    }
}

fn mean_vectors<S: Scalar>(xs: &[Tensor<S>]) -> Tensor<S> {
    let mut out = Tensor::zeros(xs[0].shape());
    for x in xs {
        for (o, v) in out.data_mut().iter_mut().zip(x.data()) {
            *o += *v;
        }
    }
    let inv = S::from_f64(1.0 / xs.len() as f64);
    for o in out.data_mut() {
        *o *= inv;
    }
    out
}

fn add_into<S: Scalar>(target: &mut Tensor<S>, src: &Tensor<S>) {
    for (t, s) in target.data_mut().iter_mut().zip(src.data()) {
        *t += *s;
    }
}

#[derive(Debug)]
enum CacheKind<S: Scalar> {
    Mean { masks: Option<Vec<DropoutMask<S>>> },
    Lstm { seq: SeqCache<S> },
}

/// Per-sentence forward cache for the train-mode encoder.
#[derive(Debug)]
struct EncCache<S: Scalar> {
    ids: Vec<usize>,
    pooled: Tensor<S>,
    z: Tensor<S>,
    kind: CacheKind<S>,
}

/// Index-aligned token lists for the three views of a batch.
#[derive(Debug, Clone)]
pub struct TripleBatch {
    x: Vec<Vec<String>>,
    y: Vec<Vec<String>>,
    z: Vec<Vec<String>>,
}

impl TripleBatch {
    pub fn new(x: Vec<Vec<String>>, y: Vec<Vec<String>>, z: Vec<Vec<String>>) -> Result<Self> {
        if x.len() != y.len() || x.len() != z.len() {
            return Err(Error::invalid(format!(
                "misaligned views: {} / {} / {}",
                x.len(),
                y.len(),
                z.len()
            )));
        }
        if x.is_empty() {
            return Err(Error::invalid("empty triple batch"));
        }
        for (i, views) in [(0usize, &x), (1, &y), (2, &z)] {
            if let Some(j) = views.iter().position(Vec::is_empty) {
                let name = ["x", "y_plus", "z_plus"][i];
                return Err(Error::invalid(format!("{name} view {j} has no tokens")));
            }
        }
        Ok(TripleBatch { x, y, z })
    }

    pub fn from_triples(triples: &[AugmentedTriple]) -> Result<Self> {
        let x = triples.iter().map(|t| tokenize(&t.x)).collect();
        let y = triples.iter().map(|t| tokenize(&t.y_plus)).collect();
        let z = triples.iter().map(|t| tokenize(&t.z_plus)).collect();
        TripleBatch::new(x, y, z)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn select(&self, idxs: &[usize]) -> TripleBatch {
        TripleBatch {
            x: idxs.iter().map(|&i| self.x[i].clone()).collect(),
            y: idxs.iter().map(|&i| self.y[i].clone()).collect(),
            z: idxs.iter().map(|&i| self.z[i].clone()).collect(),
        }
    }

    pub fn x(&self) -> &[Vec<String>] {
        &self.x
    }

    pub fn y(&self) -> &[Vec<String>] {
        &self.y
    }

    pub fn z(&self) -> &[Vec<String>] {
        &self.z
    }
}

/// One train-mode pass over a triple batch: encodes the three views (in
/// x-then-y-then-z order, so mask draws are reproducible from the rng seed),
/// evaluates the weighted loss, and backpropagates into encoder gradients
/// aligned with `Encoder::export`.
pub fn batch_step<S: Scalar>(
    encoder: &Encoder<S>,
    vocab: &Vocab,
    batch: &TripleBatch,
    weights: &LossWeights,
    rng: &mut Rng,
) -> Result<(S, ParamSet<S>)> {
    let n = batch.len();
    let d = encoder.repr_dim();
    let encode_view = |tokens_list: &[Vec<String>],
                       rng: &mut Rng|
     -> Result<(Tensor<S>, Vec<EncCache<S>>)> {
        let mut h = Tensor::zeros(Shape::Matrix(n, d));
        let mut caches = Vec::with_capacity(n);
        for (i, tokens) in tokens_list.iter().enumerate() {
            let (zi, cache) = encoder.forward_train(vocab, tokens, rng)?;
            h.row_slice_mut(i).copy_from_slice(zi.data());
            caches.push(cache);
        }
        Ok((h, caches))
    };
    let (hx, cx) = encode_view(batch.x(), rng)?;
    let (hy, cy) = encode_view(batch.y(), rng)?;
    let (hz, cz) = encode_view(batch.z(), rng)?;

    let (loss, dx, dy, dz) = sifter_loss_grads(&hx, &hy, &hz, weights)?;

    let mut grads = encoder.export()?.zeros_like();
    for (caches, dmat) in [(&cx, &dx), (&cy, &dy), (&cz, &dz)] {
        for (i, cache) in caches.iter().enumerate() {
            let drow = Tensor::from_vec(dmat.row_slice(i).to_vec());
            encoder.backward(cache, &drow, &mut grads)?;
        }
    }
    Ok((loss, grads))
}

/// Mean eval-mode cosine between each original sentence and its backbone
/// view; the alignment diagnostic.
pub fn mean_alignment<S: Scalar>(
    encoder: &Encoder<S>,
    vocab: &Vocab,
    triples: &[AugmentedTriple],
) -> Result<f64> {
    if triples.is_empty() {
        return Err(Error::invalid("alignment of an empty triple list"));
    }
    let mut sum = 0.0;
    for t in triples {
        let hx = encoder.encode_eval(vocab, &tokenize(&t.x))?;
        let hy = encoder.encode_eval(vocab, &tokenize(&t.y_plus))?;
        sum += cosine(&hx, &hy)?.as_f64();
    }
    Ok(sum / triples.len() as f64)
}

/// Hyperparameters for one contrastive run.
#[derive(Debug, Clone)]
pub struct ContrastiveConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weights: LossWeights,
    pub dropout: f64,
    pub validation_interval: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// AdamW (decoupled decay) by default; plain Adam when false.
    pub decoupled_decay: bool,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig {
            learning_rate: 1e-5,
            batch_size: 64,
            weights: LossWeights::default(),
            dropout: 0.15,
            validation_interval: 125,
            max_epochs: 1,
            seed: 0,
            decoupled_decay: true,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("dropout must be in [0, 1)"));
        }
        if self.validation_interval == 0 {
            return Err(Error::invalid("validation interval must be at least 1"));
        }
        self.weights.validate()
    }

    fn adam(&self) -> crate::optim::AdamConfig {
        crate::optim::AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            weight_decay: self.weight_decay,
        }
    }
}

/// One metrics row: loss at every step, dev Spearman at step 0 and at
/// validation steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveRecord {
    pub step: usize,
    pub loss: Option<f64>,
    pub dev_spearman: Option<f64>,
}

/// `step,loss,dev_spearman` CSV with empty cells for absent values.
pub fn contrastive_history_csv(records: &[ContrastiveRecord]) -> String {
    let mut out = String::from("step,loss,dev_spearman\n");
    for r in records {
        let loss = r.loss.map(|v| v.to_string()).unwrap_or_default();
        let rho = r.dev_spearman.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", r.step, loss, rho));
    }
    out
}

/// Everything one contrastive training run produces.
#[derive(Debug)]
pub struct ContrastiveOutcome<S: Scalar = f64> {
    pub init_params: ParamSet<S>,
    pub init_spearman: f64,
    pub best: ParamSet<S>,
    pub best_step: usize,
    pub best_spearman: f64,
    pub final_params: ParamSet<S>,
    pub history: Vec<ContrastiveRecord>,
}

fn dev_spearman<S: Scalar>(
    encoder: &Encoder<S>,
    vocab: &Vocab,
    dev: &[crate::eval::STSPair],
) -> Result<f64> {
    let encode = |s: &str| -> Result<Vec<f64>> {
        let toks = tokenize(s);
        let h = encoder.encode_eval(vocab, &toks)?;
        Ok(h.data().iter().map(|v| v.as_f64()).collect())
    };
    crate::eval::sts_eval(encode, "in-training", dev).map(|r| r.value)
}

/// Minibatch training on the weighted three-view loss with periodic dev
/// validation (Spearman on similarity pairs, eval-mode encodings) and
/// best-checkpoint retention. Deterministic for a fixed seed. Step 0 records
/// the initialization's dev Spearman; a zero-epoch run returns the
/// initialization as its best checkpoint.
pub fn train_contrastive<S: Scalar>(
    encoder: &mut Encoder<S>,
    vocab: &Vocab,
    triples: &[AugmentedTriple],
    dev: &[crate::eval::STSPair],
    cfg: &ContrastiveConfig,
) -> Result<ContrastiveOutcome<S>> {
    cfg.validate()?;
    if triples.is_empty() || dev.is_empty() {
        return Err(Error::invalid("triple corpus and dev pairs must be nonempty"));
    }
    let data = TripleBatch::from_triples(triples)?;

    let mut rng = Rng::new(cfg.seed);
    let mut params = encoder.export()?;
    let mut state = crate::optim::AdamState::new(&params, cfg.adam())?;

    let init_params = params.clone();
    let init_spearman = dev_spearman(encoder, vocab, dev)?;
    let mut history = vec![ContrastiveRecord {
        step: 0,
        loss: None,
        dev_spearman: Some(init_spearman),
    }];
    let mut best = params.clone();
    let mut best_step = 0;
    let mut best_spearman = init_spearman;

    let mut step = 0usize;
    for _epoch in 0..cfg.max_epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size) {
            step += 1;
            let batch = data.select(chunk);
            let (loss, grads) = batch_step(encoder, vocab, &batch, &cfg.weights, &mut rng)?;
            let loss = loss.as_f64();
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite contrastive loss {loss} at step {step}"
                )));
            }
            if cfg.decoupled_decay {
                crate::optim::adamw_step(&mut params, &grads, &mut state)?;
            } else {
                crate::optim::adam_step(&mut params, &grads, &mut state)?;
            }
            encoder.import_from(&params)?;

            let mut record = ContrastiveRecord {
                step,
                loss: Some(loss),
                dev_spearman: None,
            };
            if step % cfg.validation_interval == 0 {
                let rho = dev_spearman(encoder, vocab, dev)?;
                record.dev_spearman = Some(rho);
                if rho > best_spearman {
                    best_spearman = rho;
                    best_step = step;
                    best = params.clone();
                }
            }
            history.push(record);
        }
    }

    Ok(ContrastiveOutcome {
        init_params,
        init_spearman,
        best,
        best_step,
        best_spearman,
        final_params: params,
        history,
    })
}
