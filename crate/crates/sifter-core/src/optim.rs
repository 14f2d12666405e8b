//! Adam / AdamW and the finite-difference gradient checker.
//!
//! The optimizer works on a [`ParamSet`] plus an aligned gradient set, so the
//! same few functions update every model in the workspace. The gradient
//! checker is the court of appeal for all hand-derived backward passes: any
//! new backward code must survive it before it is trusted.

use crate::error::{Error, Result};
use crate::numerics::{Rng, Scalar};
use crate::params::ParamSet;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled weight decay; only `adamw_step` applies it.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl AdamConfig {
    fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if self.epsilon <= 0.0 {
            return Err(Error::invalid(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::invalid(format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// First/second moment estimates plus the step counter, aligned with one
/// particular parameter set.
#[derive(Debug, Clone)]
pub struct AdamState<S: Scalar = f64> {
    pub cfg: AdamConfig,
    m: ParamSet<S>,
    v: ParamSet<S>,
    t: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(params: &ParamSet<S>, cfg: AdamConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(AdamState {
            cfg,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

fn check_grads<S: Scalar>(params: &ParamSet<S>, grads: &ParamSet<S>) -> Result<()> {
    params.check_aligned(grads, "adam step")?;
    for (name, g) in grads.iter() {
        if !g.all_finite() {
            return Err(Error::Numeric(format!(
                "non-finite gradient for parameter {name:?}"
            )));
        }
    }
    Ok(())
}

fn adam_update<S: Scalar>(
    params: &mut ParamSet<S>,
    grads: &ParamSet<S>,
    state: &mut AdamState<S>,
    decoupled_decay: bool,
) -> Result<()> {
    check_grads(params, grads)?;
    state.t += 1;
    let cfg = state.cfg;
    let b1 = S::from_f64(cfg.beta1);
    let b2 = S::from_f64(cfg.beta2);
    let one = S::one();
    // Bias correction for step t.
    let corr1 = S::from_f64(1.0 - cfg.beta1.powi(state.t as i32));
    let corr2 = S::from_f64(1.0 - cfg.beta2.powi(state.t as i32));
    let lr = S::from_f64(cfg.learning_rate);
    let eps = S::from_f64(cfg.epsilon);
    let decay = S::from_f64(cfg.learning_rate * cfg.weight_decay);

    for (((_, p), (_, g)), ((_, m), (_, v))) in params
        .iter_mut()
        .zip(grads.iter())
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for i in 0..p.numel() {
            let gi = g.data()[i];
            let mi = &mut m.data_mut()[i];
            let vi = &mut v.data_mut()[i];
            *mi = b1 * *mi + (one - b1) * gi;
            *vi = b2 * *vi + (one - b2) * gi * gi;
            let m_hat = *mi / corr1;
            let v_hat = *vi / corr2;
            let theta = &mut p.data_mut()[i];
            let prev = *theta;
            *theta = prev - lr * m_hat / (v_hat.sqrt() + eps);
            if decoupled_decay && cfg.weight_decay != 0.0 {
                // Decay is computed against the pre-step value, decoupled
                // from the adaptive part of the update.
                *theta = *theta - decay * prev;
            }
        }
    }
    Ok(())
}

/// One Adam step. Weight decay in the config is ignored here.
pub fn adam_step<S: Scalar>(
    params: &mut ParamSet<S>,
    grads: &ParamSet<S>,
    state: &mut AdamState<S>,
) -> Result<()> {
    adam_update(params, grads, state, false)
}

/// One AdamW step: Adam plus decoupled weight decay applied after the moment
/// update. With `weight_decay == 0` this is bit-identical to [`adam_step`].
pub fn adamw_step<S: Scalar>(
    params: &mut ParamSet<S>,
    grads: &ParamSet<S>,
    state: &mut AdamState<S>,
) -> Result<()> {
    adam_update(params, grads, state, true)
}

/// L2 penalty `lambda * sum(theta^2)` over every tensor in the set, together
/// with its gradient contribution `2 * lambda * theta`.
pub fn l2_penalty<S: Scalar>(params: &ParamSet<S>, lambda: f64) -> Result<(S, ParamSet<S>)> {
    if lambda < 0.0 {
        return Err(Error::invalid(format!(
            "l2 penalty strength must be non-negative, got {lambda}"
        )));
    }
    let lam = S::from_f64(lambda);
    let two_lam = S::from_f64(2.0 * lambda);
    let mut total = S::zero();
    let mut grads = params.zeros_like();
    for ((_, p), (_, g)) in params.iter().zip(grads.iter_mut()) {
        for i in 0..p.numel() {
            let x = p.data()[i];
            total += x * x;
            g.data_mut()[i] = two_lam * x;
        }
    }
    Ok((lam * total, grads))
}

/// Knobs for the finite-difference check. The defaults are the ones every
/// verification suite in this workspace runs with; change them in a test and
/// you are no longer testing the same contract.
#[derive(Debug, Clone, Copy)]
pub struct GradcheckSettings {
    /// Central-difference half-step.
    pub step: f64,
    /// Largest acceptable relative error.
    pub threshold: f64,
    /// Per-tensor coordinate budget; tensors at or under it are checked
    /// exhaustively, larger ones on a seeded subsample of this size.
    pub max_coords: usize,
    pub seed: u64,
}

impl Default for GradcheckSettings {
    fn default() -> Self {
        GradcheckSettings {
            step: 1e-5,
            threshold: 1e-4,
            max_coords: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub coords_checked: usize,
}

/// Outcome of a gradient check: per-parameter worst relative error plus the
/// global worst, with the threshold it was judged against.
#[derive(Debug, Clone)]
pub struct GradReport {
    pub per_param: Vec<ParamCheck>,
    pub max_rel_err: f64,
    pub threshold: f64,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err.is_finite() && self.max_rel_err < self.threshold
    }

    /// Aligned, human-readable table.
    pub fn text_table(&self) -> String {
        let name_w = self
            .per_param
            .iter()
            .map(|p| p.name.len())
            .chain(["parameter".len()])
            .max()
            .unwrap_or(9);
        let mut out = format!("{:name_w$}  {:>12}  {:>7}\n", "parameter", "max_rel_err", "checked");
        for p in &self.per_param {
            out.push_str(&format!(
                "{:name_w$}  {:>12.3e}  {:>7}\n",
                p.name, p.max_rel_err, p.coords_checked
            ));
        }
        out.push_str(&format!(
            "worst {:.3e} against threshold {:.1e}: {}\n",
            self.max_rel_err,
            self.threshold,
            if self.passed() { "PASS" } else { "FAIL" }
        ));
        out
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("parameter,max_rel_err,coords_checked\n");
        for p in &self.per_param {
            out.push_str(&format!("{},{:e},{}\n", p.name, p.max_rel_err, p.coords_checked));
        }
        out
    }
}

/// Central-difference comparison of an analytic gradient against the loss
/// function itself. 64-bit only by design.
///
/// `loss_fn` must be a pure function of the parameters: anything stochastic
/// inside it (dropout masks, data order) has to be replayed identically on
/// every call, otherwise the differences measure noise instead of slope.
pub fn gradcheck<F>(
    params: &ParamSet<f64>,
    analytic: &ParamSet<f64>,
    mut loss_fn: F,
    settings: &GradcheckSettings,
) -> Result<GradReport>
where
    F: FnMut(&ParamSet<f64>) -> Result<f64>,
{
    params.check_aligned(analytic, "gradcheck")?;
    if !analytic.all_finite() {
        return Err(Error::Numeric("analytic gradient contains non-finite values".into()));
    }
    let mut work = params.clone();
    let mut per_param = Vec::new();
    let mut global_max: f64 = 0.0;

    let names: Vec<String> = params.names().iter().map(|s| s.to_string()).collect();
    for (tensor_idx, name) in names.iter().enumerate() {
        let numel = params.get(name).unwrap().numel();
        let coords: Vec<usize> = if numel <= settings.max_coords {
            (0..numel).collect()
        } else {
            // Seeded partial Fisher-Yates: the first `max_coords` slots of a
            // shuffled index range, distinct by construction.
            let mut idx: Vec<usize> = (0..numel).collect();
            let mut rng = Rng::derive(settings.seed, tensor_idx as u64);
            for i in 0..settings.max_coords {
                let j = i + rng.next_index(numel - i);
                idx.swap(i, j);
            }
            idx.truncate(settings.max_coords);
            idx
        };

        let mut max_rel = 0.0f64;
        for &ci in &coords {
            let orig = work.get(name).unwrap().data()[ci];
            work.get_mut(name).unwrap().data_mut()[ci] = orig + settings.step;
            let up = loss_fn(&work)?;
            work.get_mut(name).unwrap().data_mut()[ci] = orig - settings.step;
            let down = loss_fn(&work)?;
            work.get_mut(name).unwrap().data_mut()[ci] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss became non-finite while probing {name:?} coordinate {ci}"
                )));
            }
            let numeric = (up - down) / (2.0 * settings.step);
            let exact = analytic.get(name).unwrap().data()[ci];
            let rel = (exact - numeric).abs() / exact.abs().max(numeric.abs()).max(1e-12);
            if rel > max_rel {
                max_rel = rel;
            }
        }
        if max_rel > global_max {
            global_max = max_rel;
        }
        per_param.push(ParamCheck {
            name: name.clone(),
            max_rel_err: max_rel,
            coords_checked: coords.len(),
        });
    }

    Ok(GradReport {
        per_param,
        max_rel_err: global_max,
        threshold: settings.threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn single(name: &str, vals: Vec<f64>) -> ParamSet<f64> {
        let mut ps = ParamSet::new();
        ps.push(name, Tensor::from_vec(vals)).unwrap();
        ps
    }

    fn cfg(lr: f64, wd: f64) -> AdamConfig {
        AdamConfig {
            learning_rate: lr,
            weight_decay: wd,
            ..AdamConfig::default()
        }
    }

    #[test]
    fn adam_first_step_hand_example() {
        // theta=1, g=1, lr=0.1: m_hat = v_hat = 1, so the update is
        // theta - 0.1 / (1 + 1e-8).
        let mut p = single("w", vec![1.0]);
        let g = single("w", vec![1.0]);
        let mut st = AdamState::new(&p, cfg(0.1, 0.0)).unwrap();
        adam_step(&mut p, &g, &mut st).unwrap();
        let expect = 1.0 - 0.1 / (1.0 + 1e-8);
        assert!((p.get("w").unwrap().data()[0] - expect).abs() < 1e-15);
        assert!((p.get("w").unwrap().data()[0] - 0.9).abs() < 1e-7);
    }

    #[test]
    fn adam_zero_gradient_leaves_fresh_params_unchanged() {
        let mut p = single("w", vec![0.7, -1.2]);
        let g = single("w", vec![0.0, 0.0]);
        let mut st = AdamState::new(&p, cfg(0.1, 0.0)).unwrap();
        adam_step(&mut p, &g, &mut st).unwrap();
        assert_eq!(p.get("w").unwrap().data(), &[0.7, -1.2]);
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut p = single("w", vec![0.3, 0.9, -0.4]);
            let mut st = AdamState::new(&p, cfg(0.05, 0.0)).unwrap();
            for k in 0..10 {
                let g = single("w", vec![0.1 * k as f64, -0.2, 0.05]);
                adam_step(&mut p, &g, &mut st).unwrap();
            }
            p
        };
        assert!(run().bit_eq(&run()));
    }

    #[test]
    fn adamw_zero_grad_is_pure_decay() {
        // g=0, w=0.01, lr=0.1: each step multiplies theta by (1 - 0.001).
        let mut p = single("w", vec![2.0]);
        let g = single("w", vec![0.0]);
        let mut st = AdamState::new(&p, cfg(0.1, 0.01)).unwrap();
        for _ in 0..3 {
            adamw_step(&mut p, &g, &mut st).unwrap();
        }
        let expect = 2.0 * (1.0 - 0.001f64).powi(3);
        assert!((p.get("w").unwrap().data()[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn adamw_first_step_composes_update_and_decay() {
        // Same as the Adam hand example minus lr * w * theta_before = 0.001.
        let mut p = single("w", vec![1.0]);
        let g = single("w", vec![1.0]);
        let mut st = AdamState::new(&p, cfg(0.1, 0.01)).unwrap();
        adamw_step(&mut p, &g, &mut st).unwrap();
        let expect = 1.0 - 0.1 / (1.0 + 1e-8) - 0.001;
        assert!((p.get("w").unwrap().data()[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn adamw_without_decay_matches_adam_bitwise() {
        let grads: Vec<Vec<f64>> = vec![
            vec![0.5, -0.1, 0.0],
            vec![-0.3, 0.2, 1.5],
            vec![0.0, 0.0, -0.7],
        ];
        let mut pa = single("w", vec![0.4, -0.9, 2.2]);
        let mut pw = pa.clone();
        let mut sa = AdamState::new(&pa, cfg(0.01, 0.0)).unwrap();
        let mut sw = AdamState::new(&pw, cfg(0.01, 0.0)).unwrap();
        for g in &grads {
            adam_step(&mut pa, &single("w", g.clone()), &mut sa).unwrap();
            adamw_step(&mut pw, &single("w", g.clone()), &mut sw).unwrap();
        }
        assert!(pa.bit_eq(&pw));
    }

    #[test]
    fn update_magnitude_stays_bounded() {
        // |delta| <= ~lr/(1-beta1) regardless of gradient scale; assert the
        // blunt version |delta| <= 10 * lr on a spread of gradients.
        let lr = 0.07;
        let mut p = single("w", vec![0.0; 5]);
        let mut st = AdamState::new(&p, cfg(lr, 0.0)).unwrap();
        let mut rng = Rng::new(5);
        for _ in 0..50 {
            let before: Vec<f64> = p.get("w").unwrap().data().to_vec();
            let g = single(
                "w",
                (0..5).map(|_| rng.uniform(-1e4, 1e4)).collect::<Vec<_>>(),
            );
            adam_step(&mut p, &g, &mut st).unwrap();
            for (a, b) in p.get("w").unwrap().data().iter().zip(&before) {
                assert!((a - b).abs() <= 10.0 * lr, "step {} too large", (a - b).abs());
            }
        }
    }

    #[test]
    fn invalid_hyperparameters_rejected() {
        let p = single("w", vec![1.0]);
        assert!(AdamState::new(&p, cfg(0.0, 0.0)).is_err());
        assert!(AdamState::new(&p, cfg(-0.1, 0.0)).is_err());
        let mut bad = cfg(0.1, 0.0);
        bad.beta1 = 1.0;
        assert!(AdamState::new(&p, bad).is_err());
        assert!(AdamState::new(&p, cfg(0.1, -0.5)).is_err());
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = single("w", vec![1.0]);
        let g = single("w", vec![f64::NAN]);
        let mut st = AdamState::new(&p, cfg(0.1, 0.0)).unwrap();
        let err = adam_step(&mut p, &g, &mut st).unwrap_err().to_string();
        assert!(err.contains("\"w\""), "got: {err}");
    }

    #[test]
    fn mismatched_gradient_shapes_rejected() {
        let mut p = single("w", vec![1.0, 2.0]);
        let g = single("w", vec![1.0]);
        let mut st = AdamState::new(&p, cfg(0.1, 0.0)).unwrap();
        assert!(adam_step(&mut p, &g, &mut st).is_err());
    }

    #[test]
    fn l2_penalty_hand_example() {
        let p = single("w", vec![1.0, 2.0]);
        let (pen, grads) = l2_penalty(&p, 0.5).unwrap();
        assert_eq!(pen, 2.5);
        assert_eq!(grads.get("w").unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn l2_penalty_zero_lambda_and_negative_lambda() {
        let p = single("w", vec![3.0]);
        let (pen, grads) = l2_penalty(&p, 0.0).unwrap();
        assert_eq!(pen, 0.0);
        assert_eq!(grads.get("w").unwrap().data(), &[0.0]);
        assert!(l2_penalty(&p, -1.0).is_err());
    }

    #[test]
    fn gradcheck_accepts_quadratic() {
        let p = single("w", vec![0.3, -1.1, 2.0]);
        let analytic = single("w", vec![0.6, -2.2, 4.0]);
        let report = gradcheck(
            &p,
            &analytic,
            |ps| Ok(ps.get("w").unwrap().data().iter().map(|x| x * x).sum()),
            &GradcheckSettings::default(),
        )
        .unwrap();
        assert!(report.passed(), "{}", report.text_table());
        assert!(report.max_rel_err < 1e-8);
    }

    #[test]
    fn gradcheck_rejects_wrong_gradient() {
        let p = single("w", vec![0.5]);
        let analytic = single("w", vec![3.0]); // should be 1.0 for f = sum(w)
        let report = gradcheck(
            &p,
            &analytic,
            |ps| Ok(ps.get("w").unwrap().data().iter().sum()),
            &GradcheckSettings::default(),
        )
        .unwrap();
        assert!(!report.passed());
    }

    #[test]
    fn gradcheck_l2_penalty_gradients() {
        let p = single("w", vec![0.7, -0.2, 1.3]);
        let (_, analytic) = l2_penalty(&p, 0.25).unwrap();
        let report = gradcheck(
            &p,
            &analytic,
            |ps| l2_penalty(ps, 0.25).map(|(v, _)| v),
            &GradcheckSettings::default(),
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-8, "{}", report.text_table());
    }

    #[test]
    fn gradcheck_subsamples_large_tensors_deterministically() {
        let n = 1000;
        let vals: Vec<f64> = (0..n).map(|i| (i as f64) * 0.01 - 3.0).collect();
        let p = single("w", vals.clone());
        let analytic = single("w", vals.iter().map(|x| 2.0 * x).collect::<Vec<_>>());
        let f = |ps: &ParamSet<f64>| {
            Ok(ps.get("w").unwrap().data().iter().map(|x| x * x).sum::<f64>())
        };
        let r1 = gradcheck(&p, &analytic, f, &GradcheckSettings::default()).unwrap();
        let r2 = gradcheck(&p, &analytic, f, &GradcheckSettings::default()).unwrap();
        assert_eq!(r1.per_param[0].coords_checked, 200);
        assert_eq!(r1.max_rel_err, r2.max_rel_err);
        assert!(r1.passed());
    }

    #[test]
    fn gradcheck_non_finite_loss_is_an_error() {
        let p = single("w", vec![1.0]);
        let analytic = single("w", vec![1.0]);
        let err = gradcheck(
            &p,
            &analytic,
            |_| Ok(f64::NAN),
            &GradcheckSettings::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
    }

    #[test]
    fn report_formats_render() {
        let report = GradReport {
            per_param: vec![ParamCheck {
                name: "lstm.w_f".into(),
                max_rel_err: 3.0e-7,
                coords_checked: 48,
            }],
            max_rel_err: 3.0e-7,
            threshold: 1e-4,
        };
        let table = report.text_table();
        assert!(table.contains("lstm.w_f") && table.contains("PASS"));
        let csv = report.csv();
        assert!(csv.starts_with("parameter,max_rel_err,coords_checked\n"));
        assert!(csv.contains("lstm.w_f,3e-7,48"));
    }
}
