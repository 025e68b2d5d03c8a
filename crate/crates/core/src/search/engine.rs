use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{step_decay, Adam};
use super::policy::{ResolutionPolicy, RewardWindow};
use crate::cost::{expected_latency, LatencyLut};
use crate::error::{Error, Result};
use crate::objective::{composite_loss, decode, Frame, GazeState, LossWeights, SurrogateDecoder};
use crate::supernet::{
    derive_arch, gumbel_softmax_node, init_params, one_hot_weights, sample_gumbel, softmax,
    supernet_forward, supernet_layout, Binder, BlockWeights, MixedBlockParams, Params,
    SampledArch, SupernetSpec,
};
use crate::tensor::{Graph, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub steps: usize,
    pub batch_size: usize,
    /// Adam learning rate of supernet weights.
    pub lr: f64,
    /// Adam learning rate of operator and channel logits.
    pub arch_lr: f64,
    pub lr_decay: f64,
    /// Fraction of `steps` between learning-rate decays.
    pub lr_decay_fraction: f64,
    /// Step size of the resolution policy gradient.
    pub resolution_lr: f64,
    /// Iterations each sampled resolution is held for (K).
    pub window: usize,
    pub baseline_momentum: f64,
    pub gumbel_tau: f64,
    pub gumbel_decay: f64,
    pub gumbel_decay_every: usize,
    pub lambda_latency: f64,
    pub latency_budget_ms: Option<f64>,
    /// Consecutive over-budget steps before the latency weight doubles.
    pub budget_patience: usize,
    /// Initial steps that train only supernet weights.
    pub warmup_steps: usize,
    pub log_every: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 16,
            lr: 1e-3,
            arch_lr: 1e-3,
            lr_decay: 0.1,
            lr_decay_fraction: 0.4,
            resolution_lr: 0.5,
            window: 16,
            baseline_momentum: 0.9,
            gumbel_tau: 5.0,
            gumbel_decay: 0.98,
            gumbel_decay_every: 100,
            lambda_latency: 0.1,
            latency_budget_ms: None,
            budget_patience: 100,
            warmup_steps: 0,
            log_every: 10,
        }
    }
}

impl SearchConfig {
    /// Settings of the full-scale search.
    pub fn full_scale() -> Self {
        Self {
            steps: 50_000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.steps == 0 || self.batch_size == 0 {
            return bad("steps and batch size must be positive");
        }
        if self.window == 0 {
            return bad("the resolution window K must be at least 1");
        }
        let rates = [self.lr, self.arch_lr, self.resolution_lr, self.lambda_latency];
        if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return bad("learning rates and the latency weight must be finite and non-negative");
        }
        if !(self.gumbel_tau > 0.0 && self.gumbel_tau.is_finite()) {
            return bad("the Gumbel temperature must be positive");
        }
        if !(self.gumbel_decay > 0.0 && self.gumbel_decay <= 1.0) {
            return bad("the Gumbel decay must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.baseline_momentum) {
            return bad("the baseline momentum must lie in [0, 1]");
        }
        if !(self.lr_decay_fraction > 0.0 && self.lr_decay_fraction <= 1.0) {
            return bad("the decay fraction must lie in (0, 1]");
        }
        if let Some(b) = self.latency_budget_ms {
            if !(b > 0.0 && b.is_finite()) {
                return bad("the latency budget must be positive");
            }
        }
        Ok(())
    }

    pub fn temperature(&self, step: usize) -> f64 {
        step_decay(self.gumbel_tau, self.gumbel_decay, self.gumbel_decay_every, step)
    }

    fn decay_every(&self) -> usize {
        ((self.steps as f64 * self.lr_decay_fraction).round() as usize).max(1)
    }
}

/// Sample re-weighting settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReweightConfig {
    pub momentum: f64,
    pub temperature: f64,
}

impl Default for ReweightConfig {
    fn default() -> Self {
        Self {
            momentum: 0.9,
            temperature: 10.0,
        }
    }
}

/// Learnable architecture distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchParams {
    pub blocks: Vec<MixedBlockParams>,
    pub resolution: Vec<ResolutionPolicy>,
}

impl ArchParams {
    pub fn uniform(spec: &SupernetSpec) -> Self {
        let s = &spec.space;
        Self {
            blocks: vec![
                MixedBlockParams {
                    op_logits: vec![0.0; s.operators.len()],
                    channel_logits: vec![0.0; s.channel_scales.len()],
                };
                spec.blocks().len()
            ],
            resolution: vec![ResolutionPolicy::uniform(s.resolutions.len()); spec.views.len()],
        }
    }

    pub fn derive(&self, spec: &SupernetSpec) -> Result<SampledArch> {
        let res: Vec<Vec<f64>> = self.resolution.iter().map(|p| p.logits.clone()).collect();
        derive_arch(spec, &self.blocks, &res)
    }

    pub fn all_finite(&self) -> bool {
        self.blocks
            .iter()
            .flat_map(|b| b.op_logits.iter().chain(&b.channel_logits))
            .chain(self.resolution.iter().flat_map(|p| &p.logits))
            .all(|v| v.is_finite())
    }

    /// Mean entropy of the operator distributions, in nats.
    pub fn op_entropy(&self) -> f64 {
        let h: f64 = self
            .blocks
            .iter()
            .map(|b| {
                softmax(&b.op_logits)
                    .iter()
                    .filter(|&&p| p > 0.0)
                    .map(|p| -p * p.ln())
                    .sum::<f64>()
            })
            .sum();
        h / self.blocks.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    /// Re-weighted loss plus weighted expected latency.
    pub objective: f64,
    pub loss: f64,
    pub expected_latency_ms: f64,
    /// Table latency of the current argmax architecture.
    pub derived_latency_ms: f64,
    pub lambda_latency: f64,
    pub temperature: f64,
    pub sampled_resolutions: Vec<usize>,
    pub resolution_probs: Vec<Vec<f64>>,
    pub op_entropy: f64,
    pub rejected: bool,
}

/// Full state of a running search.
pub struct Searcher<'a> {
    pub spec: &'a SupernetSpec,
    pub cfg: SearchConfig,
    pub loss_weights: LossWeights,
    lut: &'a LatencyLut,
    decoder: &'a SurrogateDecoder,
    pub weights: Params,
    pub arch: ArchParams,
    gaze: GazeState,
    adam_w: Adam,
    adam_theta: Adam,
    window: Option<RewardWindow>,
    pub lambda_latency: f64,
    over_budget: usize,
    pub step: usize,
    rng: ChaCha8Rng,
}

impl<'a> Searcher<'a> {
    pub fn new(
        spec: &'a SupernetSpec,
        cfg: SearchConfig,
        loss_weights: LossWeights,
        reweight: &ReweightConfig,
        lut: &'a LatencyLut,
        decoder: &'a SurrogateDecoder,
        seed: u64,
    ) -> Result<Self> {
        spec.validate()?;
        cfg.validate()?;
        loss_weights.validate()?;
        lut.check_coverage(spec)?;
        if let Some(b) = cfg.latency_budget_ms {
            lut.check_budget(spec, b)?;
        }
        let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = init_params(&supernet_layout(spec), &mut init_rng);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Ok(Self {
            spec,
            lambda_latency: cfg.lambda_latency,
            cfg,
            loss_weights,
            lut,
            decoder,
            weights,
            arch: ArchParams::uniform(spec),
            gaze: GazeState::new(reweight.momentum, reweight.temperature)?,
            adam_w: Adam::default(),
            adam_theta: Adam::default(),
            window: None,
            over_budget: 0,
            step: 0,
            rng,
        })
    }

    pub fn derive(&self) -> Result<SampledArch> {
        self.arch.derive(self.spec)
    }

    fn roll_window(&mut self) {
        let learn = self.step > self.cfg.warmup_steps;
        if let Some(w) = self.window.take().filter(|_| learn) {
            if let Some(f) = w.mean() {
                for (p, &c) in self.arch.resolution.iter_mut().zip(&w.choices) {
                    p.update(c, f, self.cfg.resolution_lr, self.cfg.baseline_momentum);
                }
            }
        }
        let choices = self
            .arch
            .resolution
            .iter()
            .map(|p| p.sample(&mut self.rng))
            .collect();
        self.window = Some(RewardWindow::new(self.cfg.window, choices));
    }

    /// One joint update on `batch`.
    pub fn step(&mut self, batch: &[&Frame]) -> Result<StepMetrics> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("search step needs a non-empty batch".into()));
        }
        if self.window.as_ref().is_none_or(RewardWindow::is_complete) {
            self.roll_window();
        }
        let choices = self.window.as_ref().expect("window open").choices.clone();
        let space = &self.spec.space;
        let resolutions: Vec<usize> = choices.iter().map(|&c| space.resolutions[c]).collect();
        let tau = self.cfg.temperature(self.step);

        let mut g = Graph::new();
        let mut theta = Vec::with_capacity(self.arch.blocks.len());
        let mut bw = Vec::with_capacity(self.arch.blocks.len());
        for b in &self.arch.blocks {
            let op = g.leaf(Tensor::vector(b.op_logits.clone()).with_grad());
            let ch = g.leaf(Tensor::vector(b.channel_logits.clone()).with_grad());
            let op_noise = sample_gumbel(&mut self.rng, b.op_logits.len());
            let ch_noise = sample_gumbel(&mut self.rng, b.channel_logits.len());
            bw.push(BlockWeights {
                op: gumbel_softmax_node(&mut g, op, &op_noise, tau)?,
                channel: gumbel_softmax_node(&mut g, ch, &ch_noise, tau)?,
            });
            theta.push((op, ch));
        }
        let mut binder = Binder::new(&self.weights, true);
        let mut losses = Vec::with_capacity(batch.len());
        for frame in batch {
            let enc = supernet_forward(
                &mut g,
                self.spec,
                &mut binder,
                &frame.images,
                &bw,
                &resolutions,
                true,
            )?;
            let pred = decode(&mut g, &enc, self.decoder)?;
            let (l, _) = composite_loss(&mut g, &pred, frame, &self.loss_weights, self.decoder)?;
            losses.push(l);
        }
        let gaze_before = self.gaze.clone();
        let gazes: Vec<&[f64]> = batch.iter().map(|f| f.gaze.as_slice()).collect();
        let (loss, _) = self.gaze.batch_loss(&mut g, &losses, &gazes)?;
        let lat = expected_latency(&mut g, self.lut, self.spec, &bw, &resolutions)?;
        let weighted_lat = g.scale(lat, self.lambda_latency)?;
        let f = g.add(loss, weighted_lat)?;
        let f_val = g.value(f).item().expect("scalar");
        let loss_val = g.value(loss).item().expect("scalar");
        let lat_val = g.value(lat).item().expect("scalar");

        let mut metrics = StepMetrics {
            step: self.step,
            objective: f_val,
            loss: loss_val,
            expected_latency_ms: lat_val,
            derived_latency_ms: 0.0,
            lambda_latency: self.lambda_latency,
            temperature: tau,
            sampled_resolutions: resolutions,
            resolution_probs: self.arch.resolution.iter().map(|p| p.probabilities()).collect(),
            op_entropy: self.arch.op_entropy(),
            rejected: false,
        };
        if !f_val.is_finite() {
            self.gaze = gaze_before;
            metrics.rejected = true;
            self.step += 1;
            return Ok(metrics);
        }
        let grads = g.backward(f)?;
        let wgrads = binder.gradients(&grads);
        let lr = step_decay(self.cfg.lr, self.cfg.lr_decay, self.cfg.decay_every(), self.step);
        let arch_lr = step_decay(self.cfg.arch_lr, self.cfg.lr_decay, self.cfg.decay_every(), self.step);
        self.adam_w.step_params(&mut self.weights, &wgrads, lr);
        let frozen = self.step < self.cfg.warmup_steps;
        for (i, (b, (op, ch))) in self.arch.blocks.iter_mut().zip(&theta).enumerate().filter(|_| !frozen) {
            let gop = grads.get(*op).expect("logit gradient");
            let gch = grads.get(*ch).expect("logit gradient");
            self.adam_theta
                .step(&format!("op/{i}"), &mut b.op_logits, gop.data(), arch_lr);
            self.adam_theta
                .step(&format!("ch/{i}"), &mut b.channel_logits, gch.data(), arch_lr);
        }
        self.window.as_mut().expect("window open").push(f_val);

        let derived = self.derive()?;
        let derived_lat = self.lut.score_arch(self.spec, &derived)?;
        metrics.derived_latency_ms = derived_lat;
        if let Some(budget) = self.cfg.latency_budget_ms {
            if derived_lat > budget {
                self.over_budget += 1;
                if self.over_budget >= self.cfg.budget_patience {
                    self.lambda_latency = if self.lambda_latency > 0.0 {
                        self.lambda_latency * 2.0
                    } else {
                        self.cfg.lambda_latency.max(1e-3)
                    };
                    self.over_budget = 0;
                }
            } else {
                self.over_budget = 0;
            }
        }
        self.step += 1;
        Ok(metrics)
    }

    /// Draws a batch of frame indices.
    pub fn sample_batch(&mut self, n_frames: usize) -> Vec<usize> {
        (0..self.cfg.batch_size)
            .map(|_| self.rng.gen_range(0..n_frames))
            .collect()
    }
}

/// Result of a complete search.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub arch: SampledArch,
    pub arch_params: ArchParams,
    pub weights: Params,
    pub log: Vec<StepMetrics>,
    pub final_lambda_latency: f64,
}

/// Runs `cfg.steps` search steps over `frames`, calling `on_log` every `log_every` steps.
#[allow(clippy::too_many_arguments)]
pub fn run_search(
    spec: &SupernetSpec,
    cfg: &SearchConfig,
    loss_weights: &LossWeights,
    reweight: &ReweightConfig,
    frames: &[Frame],
    decoder: &SurrogateDecoder,
    lut: &LatencyLut,
    seed: u64,
    mut on_log: impl FnMut(&StepMetrics),
) -> Result<SearchOutcome> {
    if frames.is_empty() {
        return Err(Error::InvalidArgument("search needs training frames".into()));
    }
    let mut s = Searcher::new(spec, cfg.clone(), loss_weights.clone(), reweight, lut, decoder, seed)?;
    let mut log = Vec::new();
    for step in 0..cfg.steps {
        let idx = s.sample_batch(frames.len());
        let batch: Vec<&Frame> = idx.iter().map(|&i| &frames[i]).collect();
        let m = s.step(&batch)?;
        let last = step + 1 == cfg.steps;
        if m.rejected || step % cfg.log_every.max(1) == 0 || last {
            on_log(&m);
            log.push(m);
        }
    }
    if !s.arch.all_finite() || !s.weights.all_finite() {
        return Err(Error::NonFinite("search parameters".into()));
    }
    Ok(SearchOutcome {
        arch: s.derive()?,
        arch_params: s.arch.clone(),
        weights: s.weights.clone(),
        log,
        final_lambda_latency: s.lambda_latency,
    })
}

/// Loss plus weighted table latency of a discrete architecture under shared weights.
#[allow(clippy::too_many_arguments)]
pub fn true_objective(
    spec: &SupernetSpec,
    arch: &SampledArch,
    weights: &Params,
    frames: &[&Frame],
    loss_weights: &LossWeights,
    decoder: &SurrogateDecoder,
    lut: &LatencyLut,
    lambda_latency: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for frame in frames {
        let mut g = Graph::new();
        let w = one_hot_weights(&mut g, spec, arch)?;
        let mut binder = Binder::new(weights, false);
        let enc = supernet_forward(
            &mut g,
            spec,
            &mut binder,
            &frame.images,
            &w,
            &arch.resolutions(),
            true,
        )?;
        let pred = decode(&mut g, &enc, decoder)?;
        let (_, b) = composite_loss(&mut g, &pred, frame, loss_weights, decoder)?;
        total += b.total;
    }
    Ok(total / frames.len() as f64 + lambda_latency * lut.score_arch(spec, arch)?)
}
