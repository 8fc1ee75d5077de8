//! Probabilistic one-step transition model `p(Δs_j | s, a) = N(μ(s, a), σ²(s, a))`.
//!
//! A shared trunk feeds two linear heads. The variance head goes through
//! `softplus(·) + 1e−8` and is capped at 200. Targets are the change of the
//! selected state dimensions, multiplied by a fixed scale. Fitting minimizes
//! the Gaussian negative log-likelihood with Adam; hidden layers and the
//! variance head can be kept at unit spectral norm, the mean head never is.

use std::path::Path;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{read_json, write_json, TransitionRecord};
use crate::error::{check_dim, Error, Result};
use crate::gaussian::DiagGaussian;
use crate::nn::{Activation, AdamConfig, AdamState, Gradients, Init, Mlp, MlpRecord, Normalizer};

pub const VAR_MIN: f64 = 1e-8;
pub const VAR_MAX: f64 = 200.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub state_dim: usize,
    pub action_dim: usize,
    /// State indices predicted by the model.
    pub target_dims: Vec<usize>,
    pub target_scale: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub init: Init,
    pub spectral_hidden: bool,
    pub spectral_var_head: bool,
    pub normalize_input: bool,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub eval_every: usize,
    pub patience: usize,
    pub max_epochs: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            state_dim: crate::env::STATE_DIM,
            action_dim: crate::env::ACTION_DIM,
            target_dims: crate::env::OBJECT_DIMS.to_vec(),
            target_scale: 1.0,
            hidden: vec![128; 4],
            activation: Activation::Relu,
            init: Init::Orthogonal,
            spectral_hidden: true,
            spectral_var_head: true,
            normalize_input: true,
            adam: AdamConfig::with_lr(3e-4),
            batch_size: 1000,
            eval_every: 20,
            patience: 10,
            max_epochs: 3000,
        }
    }
}

impl ModelConfig {
    pub fn input_dim(&self) -> usize {
        self.state_dim + self.action_dim
    }

    pub fn target_dim(&self) -> usize {
        self.target_dims.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_dims.is_empty() || self.target_dims.iter().any(|&j| j >= self.state_dim) {
            return Err(Error::InvalidArgument(format!(
                "target dims {:?} invalid for state dim {}",
                self.target_dims, self.state_dim
            )));
        }
        if !(self.target_scale > 0.0 && self.target_scale.is_finite()) {
            return Err(Error::InvalidArgument("target scale must be positive".into()));
        }
        if self.batch_size == 0 || self.eval_every == 0 || self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::InvalidArgument(
                "batch size, eval cadence and hidden widths must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Inputs `s ∥ a` and scaled-delta targets, one row per transition.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionBatch {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
}

impl TransitionBatch {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a TransitionRecord>, cfg: &ModelConfig) -> Result<Self> {
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        let mut n = 0;
        for r in records {
            Self::push_row(&mut inputs, &mut targets, &r.s, &r.a, &r.s_next, cfg)?;
            n += 1;
        }
        Self::from_flat(inputs, targets, n, cfg)
    }

    /// Build from `(s, a, s')` triples.
    pub fn from_triples<'a>(triples: impl IntoIterator<Item = (&'a [f64], &'a [f64], &'a [f64])>, cfg: &ModelConfig) -> Result<Self> {
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        let mut n = 0;
        for (s, a, sn) in triples {
            Self::push_row(&mut inputs, &mut targets, s, a, sn, cfg)?;
            n += 1;
        }
        Self::from_flat(inputs, targets, n, cfg)
    }

    fn push_row(inputs: &mut Vec<f64>, targets: &mut Vec<f64>, s: &[f64], a: &[f64], sn: &[f64], cfg: &ModelConfig) -> Result<()> {
        check_dim(cfg.state_dim, s.len())?;
        check_dim(cfg.action_dim, a.len())?;
        check_dim(cfg.state_dim, sn.len())?;
        inputs.extend_from_slice(s);
        inputs.extend_from_slice(a);
        targets.extend(cfg.target_dims.iter().map(|&j| (sn[j] - s[j]) * cfg.target_scale));
        Ok(())
    }

    fn from_flat(inputs: Vec<f64>, targets: Vec<f64>, n: usize, cfg: &ModelConfig) -> Result<Self> {
        if inputs.iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("transition batch"));
        }
        Ok(Self {
            inputs: Array2::from_shape_vec((n, cfg.input_dim()), inputs).expect("row lengths checked"),
            targets: Array2::from_shape_vec((n, cfg.target_dim()), targets).expect("row lengths checked"),
        })
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            inputs: self.inputs.select(Axis(0), rows),
            targets: self.targets.select(Axis(0), rows),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradients {
    pub trunk: Gradients,
    pub mean_head: Gradients,
    pub var_head: Gradients,
}

impl ModelGradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.trunk.flatten();
        v.extend(self.mean_head.flatten());
        v.extend(self.var_head.flatten());
        v
    }
}

/// Validation trace and outcome of [`TransitionModel::fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// `(epoch, validation MSE)` at every evaluation.
    pub trace: Vec<(usize, f64)>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub epochs_run: usize,
    pub early_stopped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionModel {
    config: ModelConfig,
    trunk: Mlp,
    mean_head: Mlp,
    var_head: Mlp,
    normalizer: Option<Normalizer>,
    trunk_opt: AdamState,
    mean_opt: AdamState,
    var_opt: AdamState,
    seed: u64,
    epochs_trained: usize,
    best_val_mse: Option<f64>,
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `clip(softplus(z) + 1e−8, ·, 200)`, and whether the cap is active.
fn variance_from_raw(z: f64) -> (f64, bool) {
    let v = softplus(z) + VAR_MIN;
    if v >= VAR_MAX {
        (VAR_MAX, true)
    } else {
        (v, false)
    }
}

impl TransitionModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trunk_widths = vec![config.input_dim()];
        trunk_widths.extend(&config.hidden);
        let feat = *trunk_widths.last().expect("non-empty");
        let mut trunk = Mlp::new(&trunk_widths, config.activation, config.activation, config.init, &mut rng)?;
        if config.spectral_hidden {
            for l in trunk.layers_mut() {
                l.enable_spectral_norm(&mut rng);
            }
        }
        let mean_head = Mlp::new(&[feat, config.target_dim()], Activation::Identity, Activation::Identity, config.init, &mut rng)?;
        let mut var_head = Mlp::new(&[feat, config.target_dim()], Activation::Identity, Activation::Identity, config.init, &mut rng)?;
        if config.spectral_var_head {
            var_head.layers_mut()[0].enable_spectral_norm(&mut rng);
        }
        let normalizer = config
            .normalize_input
            .then(|| Normalizer::new(config.input_dim(), -5.0, 5.0));
        let mut model = Self {
            trunk_opt: AdamState::for_mlp(config.adam, &trunk),
            mean_opt: AdamState::for_mlp(config.adam, &mean_head),
            var_opt: AdamState::for_mlp(config.adam, &var_head),
            config,
            trunk,
            mean_head,
            var_head,
            normalizer,
            seed,
            epochs_trained: 0,
            best_val_mse: None,
        };
        model.trunk.spectral_normalize();
        model.var_head.spectral_normalize();
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn epochs_trained(&self) -> usize {
        self.epochs_trained
    }

    pub fn best_val_mse(&self) -> Option<f64> {
        self.best_val_mse
    }

    pub fn trunk(&self) -> &Mlp {
        &self.trunk
    }

    pub fn mean_head(&self) -> &Mlp {
        &self.mean_head
    }

    pub fn mean_head_mut(&mut self) -> &mut Mlp {
        &mut self.mean_head
    }

    pub fn var_head(&self) -> &Mlp {
        &self.var_head
    }

    pub fn var_head_mut(&mut self) -> &mut Mlp {
        &mut self.var_head
    }

    pub fn trunk_mut(&mut self) -> &mut Mlp {
        &mut self.trunk
    }

    pub fn normalizer(&self) -> Option<&Normalizer> {
        self.normalizer.as_ref()
    }

    /// Zero every first-layer weight fed by an action input, making the
    /// prediction independent of the action.
    pub fn ablate_action(&mut self) {
        let sd = self.config.state_dim;
        let layer = &mut self.trunk.layers_mut()[0];
        let mut w = layer.trainable_weight().clone();
        w.slice_mut(s![.., sd..]).fill(0.0);
        layer.set_weight(w).expect("same shape");
    }

    /// All parameters, trunk then mean head then variance head.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut v = self.trunk.params_flat();
        v.extend(self.mean_head.params_flat());
        v.extend(self.var_head.params_flat());
        v
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        let (a, b) = (self.trunk.num_params(), self.mean_head.num_params());
        check_dim(a + b + self.var_head.num_params(), params.len())?;
        self.trunk.set_params_flat(&params[..a])?;
        self.mean_head.set_params_flat(&params[a..a + b])?;
        self.var_head.set_params_flat(&params[a + b..])
    }

    fn prepare(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim(self.config.input_dim(), inputs.ncols())?;
        match &self.normalizer {
            Some(n) => n.apply_batch(inputs),
            None => Ok(inputs.to_owned()),
        }
    }

    /// Means and variances for a batch of `s ∥ a` rows.
    pub fn predict_batch(&self, inputs: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        let x = self.prepare(inputs)?;
        let h = self.trunk.forward_batch(x.view())?;
        let mean = self.mean_head.forward_batch(h.view())?;
        let mut var = self.var_head.forward_batch(h.view())?;
        var.mapv_inplace(|z| variance_from_raw(z).0);
        Ok((mean, var))
    }

    /// Predictive distribution over the scaled change of the target dims.
    pub fn predict(&self, s: &[f64], a: &[f64]) -> Result<DiagGaussian> {
        check_dim(self.config.state_dim, s.len())?;
        check_dim(self.config.action_dim, a.len())?;
        let mut row = s.to_vec();
        row.extend_from_slice(a);
        let x = Array2::from_shape_vec((1, row.len()), row).expect("row");
        let (m, v) = self.predict_batch(x.view())?;
        DiagGaussian::new(m.row(0).to_vec(), v.row(0).to_vec())
    }

    /// Mean negative log-likelihood (constant `½ log 2π` dropped) and its
    /// exact gradient with respect to every parameter.
    pub fn nll_loss(&self, batch: &TransitionBatch) -> Result<(f64, ModelGradients)> {
        if batch.is_empty() {
            return Err(Error::Empty("transition batch"));
        }
        check_dim(self.config.target_dim(), batch.targets.ncols())?;
        let n = batch.len() as f64;
        let x = self.prepare(batch.inputs.view())?;
        let trunk_tape = self.trunk.forward_with_tape(x)?;
        let h = trunk_tape.output().clone();
        let mean_tape = self.mean_head.forward_with_tape(h.clone())?;
        let var_tape = self.var_head.forward_with_tape(h)?;
        let mu = mean_tape.output();
        let raw = var_tape.output();

        let mut loss = 0.0;
        let mut g_mu = Array2::zeros(mu.raw_dim());
        let mut g_raw = Array2::zeros(raw.raw_dim());
        for ((i, k), &y) in batch.targets.indexed_iter() {
            let z = raw[[i, k]];
            let (var, capped) = variance_from_raw(z);
            let err = y - mu[[i, k]];
            loss += err * err / (2.0 * var) + 0.5 * var.ln();
            g_mu[[i, k]] = -err / var / n;
            if !capped {
                let dl_dvar = 0.5 / var - 0.5 * err * err / (var * var);
                g_raw[[i, k]] = dl_dvar * sigmoid(z) / n;
            }
        }
        let (mean_grads, gh_mean) = self.mean_head.backward_tape(&mean_tape, g_mu.view())?;
        let (var_grads, gh_var) = self.var_head.backward_tape(&var_tape, g_raw.view())?;
        let gh = gh_mean + gh_var;
        let (trunk_grads, _) = self.trunk.backward_tape(&trunk_tape, gh.view())?;
        Ok((
            loss / n,
            ModelGradients {
                trunk: trunk_grads,
                mean_head: mean_grads,
                var_head: var_grads,
            },
        ))
    }

    /// One Adam step on `batch` followed by one spectral-normalization step.
    pub fn train_step(&mut self, batch: &TransitionBatch) -> Result<f64> {
        let (loss, g) = self.nll_loss(batch)?;
        if !g.trunk.is_finite() || !g.mean_head.is_finite() || !g.var_head.is_finite() {
            return Err(Error::NonFinite("model gradient"));
        }
        self.trunk_opt.step_mlp(&mut self.trunk, &g.trunk)?;
        self.mean_opt.step_mlp(&mut self.mean_head, &g.mean_head)?;
        self.var_opt.step_mlp(&mut self.var_head, &g.var_head)?;
        self.trunk.spectral_normalize();
        self.var_head.spectral_normalize();
        Ok(loss)
    }

    /// Mean squared error of the mean head, averaged over rows and target dims.
    pub fn mse(&self, batch: &TransitionBatch) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Empty("transition batch"));
        }
        let (mu, _) = self.predict_batch(batch.inputs.view())?;
        Ok((&mu - &batch.targets).mapv(|e| e * e).mean().expect("non-empty"))
    }

    pub fn mean_nll(&self, batch: &TransitionBatch) -> Result<f64> {
        let (mu, var) = self.predict_batch(batch.inputs.view())?;
        let mut total = 0.0;
        for ((i, k), &y) in batch.targets.indexed_iter() {
            let v = var[[i, k]];
            total += (y - mu[[i, k]]).powi(2) / (2.0 * v) + 0.5 * v.ln();
        }
        Ok(total / batch.len() as f64)
    }

    /// Fold the inputs of `batch` into the input normalizer, if one is enabled.
    pub fn update_normalizer(&mut self, batch: &TransitionBatch) -> Result<()> {
        if let Some(n) = &mut self.normalizer {
            n.update(batch.inputs.view())?;
        }
        Ok(())
    }

    /// Minibatch training with early stopping on validation MSE. Evaluates
    /// every `eval_every` epochs, stops after `patience` evaluations without
    /// improvement or at `max_epochs`, and restores the best parameters seen.
    /// Epoch numbering continues across calls.
    pub fn fit(&mut self, train: &TransitionBatch, val: &TransitionBatch, rng: &mut impl Rng) -> Result<FitReport> {
        self.fit_with(train, val, rng, |_, _| {})
    }

    /// [`fit`](Self::fit) with a callback receiving `(epoch, val_mse)` at each evaluation.
    pub fn fit_with(
        &mut self,
        train: &TransitionBatch,
        val: &TransitionBatch,
        rng: &mut impl Rng,
        mut on_eval: impl FnMut(usize, f64),
    ) -> Result<FitReport> {
        if train.is_empty() {
            return Err(Error::Empty("training set"));
        }
        if val.is_empty() {
            return Err(Error::Empty("validation set"));
        }
        if self.epochs_trained == 0 {
            self.update_normalizer(train)?;
        }
        let batch_size = self.config.batch_size.min(train.len());
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut best = (self.best_val_mse.unwrap_or(f64::INFINITY), self.epochs_trained, self.snapshot());
        let mut stale = 0;
        let mut trace = Vec::new();
        let mut early_stopped = false;
        let start = self.epochs_trained;
        while self.epochs_trained < self.config.max_epochs {
            order.shuffle(rng);
            for chunk in order.chunks(batch_size) {
                self.train_step(&train.select(chunk))?;
            }
            self.epochs_trained += 1;
            if self.epochs_trained.is_multiple_of(self.config.eval_every) {
                let mse = self.mse(val)?;
                trace.push((self.epochs_trained, mse));
                on_eval(self.epochs_trained, mse);
                if mse < best.0 {
                    best = (mse, self.epochs_trained, self.snapshot());
                    stale = 0;
                } else {
                    stale += 1;
                    if stale >= self.config.patience {
                        early_stopped = true;
                        break;
                    }
                }
            }
        }
        let epochs_run = self.epochs_trained - start;
        if best.0.is_finite() {
            let epochs = self.epochs_trained;
            self.restore(&best.2);
            self.epochs_trained = epochs;
            self.best_val_mse = Some(best.0);
        }
        Ok(FitReport {
            trace,
            best_epoch: best.1,
            best_val_mse: best.0,
            epochs_run,
            early_stopped,
        })
    }

    /// Train for exactly `n_batches` minibatches drawn uniformly with replacement.
    pub fn train_batches(&mut self, data: &TransitionBatch, n_batches: usize, rng: &mut impl Rng) -> Result<()> {
        if n_batches == 0 {
            return Ok(());
        }
        if data.is_empty() {
            return Err(Error::Empty("training data"));
        }
        let bs = self.config.batch_size.min(data.len());
        let mut rows = vec![0usize; bs];
        for _ in 0..n_batches {
            for r in rows.iter_mut() {
                *r = rng.random_range(0..data.len());
            }
            self.train_step(&data.select(&rows))?;
        }
        Ok(())
    }

    fn snapshot(&self) -> (Mlp, Mlp, Mlp) {
        (self.trunk.clone(), self.mean_head.clone(), self.var_head.clone())
    }

    fn restore(&mut self, snap: &(Mlp, Mlp, Mlp)) {
        self.trunk = snap.0.clone();
        self.mean_head = snap.1.clone();
        self.var_head = snap.2.clone();
    }

    pub fn to_checkpoint(&self) -> ModelCheckpoint {
        ModelCheckpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            config: self.config.clone(),
            trunk: MlpRecord::from(&self.trunk),
            mean_head: MlpRecord::from(&self.mean_head),
            var_head: MlpRecord::from(&self.var_head),
            normalizer: self.normalizer.clone(),
            optimizers: [self.trunk_opt.clone(), self.mean_opt.clone(), self.var_opt.clone()],
            seed: self.seed,
            epochs_trained: self.epochs_trained,
            best_val_mse: self.best_val_mse,
        }
    }

    pub fn from_checkpoint(ck: &ModelCheckpoint) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::InvalidArgument(format!("unknown checkpoint format {:?}", ck.format)));
        }
        ck.config.validate()?;
        let [trunk_opt, mean_opt, var_opt] = ck.optimizers.clone();
        Ok(Self {
            config: ck.config.clone(),
            trunk: Mlp::try_from(&ck.trunk)?,
            mean_head: Mlp::try_from(&ck.mean_head)?,
            var_head: Mlp::try_from(&ck.var_head)?,
            normalizer: ck.normalizer.clone(),
            trunk_opt,
            mean_opt,
            var_opt,
            seed: ck.seed,
            epochs_trained: ck.epochs_trained,
            best_val_mse: ck.best_val_mse,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, &self.to_checkpoint())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&read_json(path)?)
    }
}

pub const CHECKPOINT_FORMAT: &str = "cai-lab/transition-model/v1";

/// On-disk model record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelCheckpoint {
    pub format: String,
    pub config: ModelConfig,
    pub trunk: MlpRecord,
    pub mean_head: MlpRecord,
    pub var_head: MlpRecord,
    pub normalizer: Option<Normalizer>,
    pub optimizers: [AdamState; 3],
    pub seed: u64,
    pub epochs_trained: usize,
    pub best_val_mse: Option<f64>,
}

/// Number of model-training batches to run after a given number of collected
/// episodes: a large warmup once the buffer is seeded, then a fixed budget
/// every `every` episodes that shrinks after `taper_after`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OnlineSchedule {
    pub warmup_episodes: usize,
    pub warmup_batches: usize,
    pub every: usize,
    pub batches: usize,
    pub taper_after: usize,
    pub batches_after_taper: usize,
}

impl Default for OnlineSchedule {
    fn default() -> Self {
        Self {
            warmup_episodes: 200,
            warmup_batches: 4000,
            every: 100,
            batches: 1000,
            taper_after: 5200,
            batches_after_taper: 500,
        }
    }
}

impl OnlineSchedule {
    /// Batches due once `episodes` episodes have been collected; zero when no
    /// training is scheduled at this count.
    pub fn batches_at(&self, episodes: usize) -> usize {
        if episodes < self.warmup_episodes || self.every == 0 {
            return 0;
        }
        if episodes == self.warmup_episodes {
            return self.warmup_batches;
        }
        if !(episodes - self.warmup_episodes).is_multiple_of(self.every) {
            return 0;
        }
        if episodes <= self.taper_after {
            self.batches
        } else {
            self.batches_after_taper
        }
    }
}

/// Online model update: trains the scheduled number of batches for the
/// current episode count on transitions drawn uniformly from `data`.
/// Returns the number of batches run.
pub fn fit_online(
    model: &mut TransitionModel,
    data: &TransitionBatch,
    episodes: usize,
    schedule: &OnlineSchedule,
    rng: &mut impl Rng,
) -> Result<usize> {
    let n = schedule.batches_at(episodes);
    if n > 0 {
        if data.is_empty() {
            return Err(Error::Empty("model training buffer"));
        }
        if episodes == schedule.warmup_episodes {
            model.update_normalizer(data)?;
        }
        model.train_batches(data, n, rng)?;
    }
    Ok(n)
}
