//! The LSTM cell, its lexicon-gated variant, and backpropagation through time.
//!
//! The gated variant differs from a standard LSTM in exactly one place: when
//! the current token belongs to a task lexicon, the candidate memory is
//! written in full instead of being scaled by the input gate,
//!
//! ```text
//! standard:   c_t = f_t * c_{t-1} + i_t * c~_t
//! lexicon hit: c_t = f_t * c_{t-1} +       c~_t
//! ```
//!
//! The input gate is still computed and cached on lexicon steps, but nothing
//! downstream depends on it there, so its parameters receive no gradient from
//! those timesteps. All backward code here is hand-derived and checked
//! against central differences (see the `verify` module and the test suites).

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{
    add, add_assign, hadamard, matmul, matvec_t, outer, sigmoid, tanh, DropoutMask, Rng, Scalar,
    Shape, Tensor,
};
use crate::params::ParamSet;

/// A named token set. Lookup folds case when `fold_case` is set (the
/// default), so "Apple" matches a lexicon entry "apple".
#[derive(Debug, Clone)]
pub struct Lexicon {
    name: String,
    fold_case: bool,
    entries: HashSet<String>,
}

impl Lexicon {
    pub fn new<I, T>(name: impl Into<String>, tokens: I, fold_case: bool) -> Self
    where
        I: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        let mut entries = HashSet::new();
        for t in tokens {
            let t = t.as_ref();
            entries.insert(if fold_case { t.to_lowercase() } else { t.to_string() });
        }
        Lexicon {
            name: name.into(),
            fold_case,
            entries,
        }
    }

    pub fn empty(name: impl Into<String>) -> Self {
        Lexicon::new(name, std::iter::empty::<&str>(), true)
    }

    /// One token per line; `#` starts a comment line, blank lines are skipped.
    pub fn from_lines(name: impl Into<String>, text: &str, fold_case: bool) -> Self {
        let tokens = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        Lexicon::new(name, tokens, fold_case)
    }

    pub fn from_file(path: &Path, fold_case: bool) -> Result<Self> {
        let mut text = String::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_string(&mut text))
            .map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "lexicon".to_string());
        Ok(Lexicon::from_lines(name, &text, fold_case))
    }

    pub fn contains(&self, token: &str) -> bool {
        if self.fold_case {
            self.entries.contains(&token.to_lowercase())
        } else {
            self.entries.contains(token)
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in sorted order, one per line. Deterministic, suitable for
    /// writing next to a checkpoint.
    pub fn to_sorted_lines(&self) -> String {
        let mut v: Vec<&str> = self.entries.iter().map(String::as_str).collect();
        v.sort_unstable();
        let mut out = String::new();
        for e in v {
            out.push_str(e);
            out.push('\n');
        }
        out
    }
}

/// The four gates' weights: `w_*` act on the input, `u_*` on the previous
/// hidden state, `b_*` are per-gate biases.
#[derive(Debug, Clone)]
pub struct LstmParams<S: Scalar = f64> {
    pub w_f: Tensor<S>,
    pub w_i: Tensor<S>,
    pub w_o: Tensor<S>,
    pub w_c: Tensor<S>,
    pub u_f: Tensor<S>,
    pub u_i: Tensor<S>,
    pub u_o: Tensor<S>,
    pub u_c: Tensor<S>,
    pub b_f: Tensor<S>,
    pub b_i: Tensor<S>,
    pub b_o: Tensor<S>,
    pub b_c: Tensor<S>,
}

pub const LSTM_TENSOR_NAMES: [&str; 12] = [
    "lstm.w_f", "lstm.w_i", "lstm.w_o", "lstm.w_c", "lstm.u_f", "lstm.u_i", "lstm.u_o",
    "lstm.u_c", "lstm.b_f", "lstm.b_i", "lstm.b_o", "lstm.b_c",
];

impl<S: Scalar> LstmParams<S> {
    /// All tensors drawn uniformly from [-1/sqrt(d_h), 1/sqrt(d_h)].
    pub fn init(d_in: usize, d_h: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (d_h as f64).sqrt();
        let mut w = || Tensor::uniform(Shape::Matrix(d_h, d_in), -bound, bound, rng);
        let (w_f, w_i, w_o, w_c) = (w(), w(), w(), w());
        let mut u = || Tensor::uniform(Shape::Matrix(d_h, d_h), -bound, bound, rng);
        let (u_f, u_i, u_o, u_c) = (u(), u(), u(), u());
        let mut b = || Tensor::uniform(Shape::Vector(d_h), -bound, bound, rng);
        let (b_f, b_i, b_o, b_c) = (b(), b(), b(), b());
        LstmParams {
            w_f, w_i, w_o, w_c,
            u_f, u_i, u_o, u_c,
            b_f, b_i, b_o, b_c,
        }
    }

    pub fn zeros(d_in: usize, d_h: usize) -> Self {
        LstmParams {
            w_f: Tensor::zeros(Shape::Matrix(d_h, d_in)),
            w_i: Tensor::zeros(Shape::Matrix(d_h, d_in)),
            w_o: Tensor::zeros(Shape::Matrix(d_h, d_in)),
            w_c: Tensor::zeros(Shape::Matrix(d_h, d_in)),
            u_f: Tensor::zeros(Shape::Matrix(d_h, d_h)),
            u_i: Tensor::zeros(Shape::Matrix(d_h, d_h)),
            u_o: Tensor::zeros(Shape::Matrix(d_h, d_h)),
            u_c: Tensor::zeros(Shape::Matrix(d_h, d_h)),
            b_f: Tensor::zeros(Shape::Vector(d_h)),
            b_i: Tensor::zeros(Shape::Vector(d_h)),
            b_o: Tensor::zeros(Shape::Vector(d_h)),
            b_c: Tensor::zeros(Shape::Vector(d_h)),
        }
    }

    pub fn d_in(&self) -> usize {
        self.w_f.cols()
    }

    pub fn d_h(&self) -> usize {
        self.w_f.rows()
    }

    fn tensors(&self) -> [&Tensor<S>; 12] {
        [
            &self.w_f, &self.w_i, &self.w_o, &self.w_c, &self.u_f, &self.u_i, &self.u_o,
            &self.u_c, &self.b_f, &self.b_i, &self.b_o, &self.b_c,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor<S>; 12] {
        [
            &mut self.w_f, &mut self.w_i, &mut self.w_o, &mut self.w_c, &mut self.u_f,
            &mut self.u_i, &mut self.u_o, &mut self.u_c, &mut self.b_f, &mut self.b_i,
            &mut self.b_o, &mut self.b_c,
        ]
    }

    pub fn export_into(&self, ps: &mut ParamSet<S>) -> Result<()> {
        for (name, t) in LSTM_TENSOR_NAMES.iter().zip(self.tensors()) {
            ps.push(*name, t.clone())?;
        }
        Ok(())
    }

    pub fn import_from(&mut self, ps: &ParamSet<S>) -> Result<()> {
        for (name, t) in LSTM_TENSOR_NAMES.iter().zip(self.tensors_mut()) {
            let src = ps.require(name)?;
            if src.shape() != t.shape() {
                return Err(Error::Shape {
                    op: "lstm import",
                    lhs: t.shape().to_string(),
                    rhs: src.shape().to_string(),
                });
            }
            *t = src.clone();
        }
        Ok(())
    }
}

/// Hidden and cell state carried between timesteps. Fresh sequences start
/// from zeros.
#[derive(Debug, Clone)]
pub struct CellState<S: Scalar = f64> {
    pub h: Tensor<S>,
    pub c: Tensor<S>,
}

impl<S: Scalar> CellState<S> {
    pub fn zeros(d_h: usize) -> Self {
        CellState {
            h: Tensor::zeros(Shape::Vector(d_h)),
            c: Tensor::zeros(Shape::Vector(d_h)),
        }
    }
}

/// Everything the backward pass needs about one timestep.
#[derive(Debug, Clone)]
pub struct StepCache<S: Scalar = f64> {
    /// Cell input (after any embedding dropout).
    pub x: Tensor<S>,
    pub h_prev: Tensor<S>,
    pub c_prev: Tensor<S>,
    pub f: Tensor<S>,
    pub i: Tensor<S>,
    pub o: Tensor<S>,
    pub c_plus: Tensor<S>,
    pub c: Tensor<S>,
    pub tanh_c: Tensor<S>,
    /// True when the token was in the lexicon and the input gate was
    /// short-circuited.
    pub short_circuit: bool,
}

fn gate<S: Scalar>(
    w: &Tensor<S>,
    u: &Tensor<S>,
    b: &Tensor<S>,
    x: &Tensor<S>,
    h: &Tensor<S>,
) -> Result<Tensor<S>> {
    add(&add(&matmul(w, x)?, &matmul(u, h)?)?, b)
}

fn step_inner<S: Scalar>(
    params: &LstmParams<S>,
    x: &Tensor<S>,
    prev: &CellState<S>,
    short_circuit: bool,
) -> Result<(CellState<S>, StepCache<S>)> {
    if x.shape() != Shape::Vector(params.d_in()) {
        return Err(Error::Shape {
            op: "lstm step input",
            lhs: Shape::Vector(params.d_in()).to_string(),
            rhs: x.shape().to_string(),
        });
    }
    if prev.h.shape() != Shape::Vector(params.d_h()) || prev.c.shape() != Shape::Vector(params.d_h())
    {
        return Err(Error::Shape {
            op: "lstm step state",
            lhs: Shape::Vector(params.d_h()).to_string(),
            rhs: prev.h.shape().to_string(),
        });
    }
    let f = sigmoid(&gate(&params.w_f, &params.u_f, &params.b_f, x, &prev.h)?);
    let i = sigmoid(&gate(&params.w_i, &params.u_i, &params.b_i, x, &prev.h)?);
    let o = sigmoid(&gate(&params.w_o, &params.u_o, &params.b_o, x, &prev.h)?);
    let c_plus = tanh(&gate(&params.w_c, &params.u_c, &params.b_c, x, &prev.h)?);

    // Branch rather than blend with an indicator multiply: with an empty
    // lexicon this must be the standard cell bit-for-bit, and IEEE signed
    // zeros make `+ 0.0 * v` not always a no-op.
    let c = if short_circuit {
        add(&hadamard(&f, &prev.c)?, &c_plus)?
    } else {
        add(&hadamard(&f, &prev.c)?, &hadamard(&i, &c_plus)?)?
    };
    let tanh_c = tanh(&c);
    let h = hadamard(&o, &tanh_c)?;

    let cache = StepCache {
        x: x.clone(),
        h_prev: prev.h.clone(),
        c_prev: prev.c.clone(),
        f,
        i,
        o,
        c_plus,
        c: c.clone(),
        tanh_c,
        short_circuit,
    };
    Ok((CellState { h, c }, cache))
}

/// One standard LSTM step.
pub fn lstm_step<S: Scalar>(
    params: &LstmParams<S>,
    x: &Tensor<S>,
    prev: &CellState<S>,
) -> Result<(CellState<S>, StepCache<S>)> {
    step_inner(params, x, prev, false)
}

/// One gated step: identical to [`lstm_step`] unless `token` is in the
/// lexicon, in which case the candidate memory bypasses the input gate.
pub fn sifter_step<S: Scalar>(
    params: &LstmParams<S>,
    x: &Tensor<S>,
    token: &str,
    prev: &CellState<S>,
    lexicon: &Lexicon,
) -> Result<(CellState<S>, StepCache<S>)> {
    step_inner(params, x, prev, lexicon.contains(token))
}

/// Per-sequence cache: one [`StepCache`] per timestep plus the dropout masks
/// the forward pass drew.
#[derive(Debug, Clone)]
pub struct SeqCache<S: Scalar = f64> {
    pub steps: Vec<StepCache<S>>,
    embed_masks: Option<Vec<DropoutMask<S>>>,
    out_mask: Option<DropoutMask<S>>,
}

/// Output of a sequence pass: all hidden states, the final representation
/// (after output dropout in train mode), and the cache when training.
#[derive(Debug)]
pub struct SequenceRun<S: Scalar = f64> {
    pub hidden: Vec<Tensor<S>>,
    pub repr: Tensor<S>,
    pub cache: Option<SeqCache<S>>,
}

/// Runs a whole sequence from the zero state. Dropout is applied to each
/// input embedding and to the final hidden output, train mode only; eval mode
/// touches no randomness and returns no cache. When `lexicon` is `Some`,
/// `tokens` must align one-to-one with `inputs`.
pub fn sequence_forward<S: Scalar>(
    params: &LstmParams<S>,
    inputs: &[Tensor<S>],
    tokens: &[String],
    lexicon: Option<&Lexicon>,
    dropout_p: f64,
    mut rng: Option<&mut Rng>,
    train: bool,
) -> Result<SequenceRun<S>> {
    if inputs.is_empty() {
        return Err(Error::invalid("sequence_forward: empty input sequence"));
    }
    if lexicon.is_some() && tokens.len() != inputs.len() {
        return Err(Error::invalid(format!(
            "sequence_forward: {} tokens for {} inputs",
            tokens.len(),
            inputs.len()
        )));
    }
    let use_dropout = train && dropout_p > 0.0;
    if use_dropout && rng.is_none() {
        return Err(Error::invalid(
            "sequence_forward: train-mode dropout needs an rng",
        ));
    }

    let mut state = CellState::zeros(params.d_h());
    let mut steps = Vec::with_capacity(inputs.len());
    let mut hidden = Vec::with_capacity(inputs.len());
    let mut embed_masks = if use_dropout { Some(Vec::with_capacity(inputs.len())) } else { None };

    for (t, x_raw) in inputs.iter().enumerate() {
        let x = if use_dropout {
            let mask = DropoutMask::draw(x_raw.shape(), dropout_p, rng.as_deref_mut().unwrap())?;
            let dropped = mask.apply(x_raw)?;
            embed_masks.as_mut().unwrap().push(mask);
            dropped
        } else {
            x_raw.clone()
        };
        let short = lexicon.map(|lex| lex.contains(&tokens[t])).unwrap_or(false);
        let (next, cache) = step_inner(params, &x, &state, short)?;
        hidden.push(next.h.clone());
        steps.push(cache);
        state = next;
    }

    let (repr, out_mask) = if use_dropout {
        let mask = DropoutMask::draw(state.h.shape(), dropout_p, rng.as_deref_mut().unwrap())?;
        (mask.apply(&state.h)?, Some(mask))
    } else {
        (state.h.clone(), None)
    };

    let cache = train.then_some(SeqCache {
        steps,
        embed_masks,
        out_mask,
    });
    Ok(SequenceRun { hidden, repr, cache })
}

/// Gradients produced by one backward pass: the twelve parameter tensors (as
/// an `LstmParams` of the same shapes) and the gradient w.r.t. each raw input
/// embedding.
#[derive(Debug)]
pub struct SequenceGrads<S: Scalar = f64> {
    pub params: LstmParams<S>,
    pub inputs: Vec<Tensor<S>>,
}

/// Backpropagation through time, starting from the gradient on the final
/// representation returned by the train-mode forward pass.
pub fn sequence_backward<S: Scalar>(
    params: &LstmParams<S>,
    cache: &SeqCache<S>,
    grad_repr: &Tensor<S>,
) -> Result<SequenceGrads<S>> {
    let steps = &cache.steps;
    if steps.is_empty() {
        return Err(Error::invalid("sequence_backward: empty cache"));
    }
    let d_h = params.d_h();
    if grad_repr.shape() != Shape::Vector(d_h) {
        return Err(Error::Shape {
            op: "sequence_backward",
            lhs: Shape::Vector(d_h).to_string(),
            rhs: grad_repr.shape().to_string(),
        });
    }

    let mut g = LstmParams::zeros(params.d_in(), d_h);
    let mut d_inputs: Vec<Tensor<S>> = vec![Tensor::zeros(steps[0].x.shape()); steps.len()];

    // Undo the output dropout first: repr = out_mask * h_T.
    let mut dh = match &cache.out_mask {
        Some(mask) => mask.apply(grad_repr)?,
        None => grad_repr.clone(),
    };
    let mut dc = Tensor::zeros(Shape::Vector(d_h));

    let one = S::one();
    for (t, s) in steps.iter().enumerate().rev() {
        // h_t = o_t * tanh(c_t)
        let d_o = hadamard(&dh, &s.tanh_c)?;
        // dc_t += dh_t * o_t * (1 - tanh(c_t)^2)
        for j in 0..d_h {
            let th = s.tanh_c.data()[j];
            dc.data_mut()[j] += dh.data()[j] * s.o.data()[j] * (one - th * th);
        }

        // Split dc_t across the cell update. On short-circuited steps the
        // candidate enters unscaled and the input gate sees no gradient.
        let d_f = hadamard(&dc, &s.c_prev)?;
        let (d_i, d_cplus) = if s.short_circuit {
            (Tensor::zeros(Shape::Vector(d_h)), dc.clone())
        } else {
            (hadamard(&dc, &s.c_plus)?, hadamard(&dc, &s.i)?)
        };

        // Through the activations to pre-activation space.
        let mut a_f = Tensor::zeros(Shape::Vector(d_h));
        let mut a_i = Tensor::zeros(Shape::Vector(d_h));
        let mut a_o = Tensor::zeros(Shape::Vector(d_h));
        let mut a_c = Tensor::zeros(Shape::Vector(d_h));
        for j in 0..d_h {
            let (f, i, o, cp) = (s.f.data()[j], s.i.data()[j], s.o.data()[j], s.c_plus.data()[j]);
            a_f.data_mut()[j] = d_f.data()[j] * f * (one - f);
            a_i.data_mut()[j] = d_i.data()[j] * i * (one - i);
            a_o.data_mut()[j] = d_o.data()[j] * o * (one - o);
            a_c.data_mut()[j] = d_cplus.data()[j] * (one - cp * cp);
        }

        // Parameter gradients for this step.
        add_assign(&mut g.w_f, &outer(&a_f, &s.x)?)?;
        add_assign(&mut g.w_i, &outer(&a_i, &s.x)?)?;
        add_assign(&mut g.w_o, &outer(&a_o, &s.x)?)?;
        add_assign(&mut g.w_c, &outer(&a_c, &s.x)?)?;
        add_assign(&mut g.u_f, &outer(&a_f, &s.h_prev)?)?;
        add_assign(&mut g.u_i, &outer(&a_i, &s.h_prev)?)?;
        add_assign(&mut g.u_o, &outer(&a_o, &s.h_prev)?)?;
        add_assign(&mut g.u_c, &outer(&a_c, &s.h_prev)?)?;
        add_assign(&mut g.b_f, &a_f)?;
        add_assign(&mut g.b_i, &a_i)?;
        add_assign(&mut g.b_o, &a_o)?;
        add_assign(&mut g.b_c, &a_c)?;

        // Gradient w.r.t. the (post-dropout) input, then through the mask.
        let mut dx = matvec_t(&params.w_f, &a_f)?;
        add_assign(&mut dx, &matvec_t(&params.w_i, &a_i)?)?;
        add_assign(&mut dx, &matvec_t(&params.w_o, &a_o)?)?;
        add_assign(&mut dx, &matvec_t(&params.w_c, &a_c)?)?;
        d_inputs[t] = match &cache.embed_masks {
            Some(masks) => masks[t].apply(&dx)?,
            None => dx,
        };

        // Carry to step t-1.
        let mut dh_prev = matvec_t(&params.u_f, &a_f)?;
        add_assign(&mut dh_prev, &matvec_t(&params.u_i, &a_i)?)?;
        add_assign(&mut dh_prev, &matvec_t(&params.u_o, &a_o)?)?;
        add_assign(&mut dh_prev, &matvec_t(&params.u_c, &a_c)?)?;
        dh = dh_prev;
        dc = hadamard(&dc, &s.f)?;
    }

    Ok(SequenceGrads {
        params: g,
        inputs: d_inputs,
    })
}
