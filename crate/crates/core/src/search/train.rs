use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::engine::ReweightConfig;
use super::optim::{step_decay, Adam};
use crate::error::{Error, Result};
use crate::objective::{composite_loss, decode, Frame, GazeState, LossBreakdown, LossWeights, SurrogateDecoder};
use crate::supernet::{arch_forward, arch_layout, check_layout, init_params, Binder, Params, SampledArch, SupernetSpec};
use crate::tensor::Graph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub lr_decay_fraction: f64,
    /// Apply gaze re-weighting to the training loss.
    pub reweight: bool,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch_size: 16,
            lr: 3e-3,
            lr_decay: 0.1,
            lr_decay_fraction: 0.4,
            reweight: true,
            log_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::InvalidArgument("learning rate must be finite and non-negative".into()));
        }
        if !(self.lr_decay_fraction > 0.0 && self.lr_decay_fraction <= 1.0) {
            return Err(Error::InvalidArgument("the decay fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    pub rejected: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: Params,
    pub log: Vec<TrainMetrics>,
}

/// Loss of one frame through the discrete encoder.
pub fn frame_loss(
    g: &mut Graph,
    spec: &SupernetSpec,
    arch: &SampledArch,
    binder: &mut Binder,
    frame: &Frame,
    weights: &LossWeights,
    decoder: &SurrogateDecoder,
) -> Result<(crate::tensor::NodeId, LossBreakdown)> {
    let enc = arch_forward(g, spec, arch, binder, &frame.images, true)?;
    let pred = decode(g, &enc, decoder)?;
    composite_loss(g, &pred, frame, weights, decoder)
}

/// Trains `arch` standalone; `initial` (e.g. supernet weights sliced to the arch) replaces random init.
#[allow(clippy::too_many_arguments)]
pub fn train_arch(
    spec: &SupernetSpec,
    arch: &SampledArch,
    cfg: &TrainConfig,
    loss_weights: &LossWeights,
    reweight: &ReweightConfig,
    frames: &[Frame],
    decoder: &SurrogateDecoder,
    initial: Option<Params>,
    seed: u64,
    mut on_log: impl FnMut(&TrainMetrics),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    loss_weights.validate()?;
    arch.validate(spec)?;
    if frames.is_empty() {
        return Err(Error::InvalidArgument("training needs frames".into()));
    }
    let layout = arch_layout(spec, arch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = match initial {
        Some(p) => {
            check_layout(&p, &layout)?;
            p
        }
        None => init_params(&layout, &mut rng),
    };
    let mut data_rng = ChaCha8Rng::seed_from_u64(seed);
    data_rng.set_stream(2);
    let mut gaze = GazeState::new(reweight.momentum, reweight.temperature)?;
    let mut adam = Adam::default();
    let every = ((cfg.steps as f64 * cfg.lr_decay_fraction).round() as usize).max(1);
    let mut log = Vec::new();
    for step in 0..cfg.steps {
        let batch: Vec<&Frame> = (0..cfg.batch_size)
            .map(|_| &frames[data_rng.gen_range(0..frames.len())])
            .collect();
        let mut g = Graph::new();
        let mut binder = Binder::new(&params, true);
        let mut losses = Vec::with_capacity(batch.len());
        for f in &batch {
            losses.push(frame_loss(&mut g, spec, arch, &mut binder, f, loss_weights, decoder)?.0);
        }
        let before = gaze.clone();
        let loss = if cfg.reweight {
            let gz: Vec<&[f64]> = batch.iter().map(|f| f.gaze.as_slice()).collect();
            gaze.batch_loss(&mut g, &losses, &gz)?.0
        } else {
            let parts = losses
                .iter()
                .map(|&l| g.reshape(l, &[1]))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let all = g.concat(&parts, 0)?;
            let s = g.sum(all)?;
            g.scale(s, 1.0 / batch.len() as f64)?
        };
        let value = g.value(loss).item().expect("scalar");
        let lr = step_decay(cfg.lr, cfg.lr_decay, every, step);
        let rejected = !value.is_finite();
        if rejected {
            gaze = before;
        } else {
            let grads = g.backward(loss)?;
            let pg = binder.gradients(&grads);
            adam.step_params(&mut params, &pg, lr);
        }
        let m = TrainMetrics {
            step,
            loss: value,
            lr,
            rejected,
        };
        if rejected || step % cfg.log_every.max(1) == 0 || step + 1 == cfg.steps {
            on_log(&m);
            log.push(m);
        }
    }
    if !params.all_finite() {
        return Err(Error::NonFinite("trained parameters".into()));
    }
    Ok(TrainOutcome { params, log })
}

/// Mean per-frame loss terms of a discrete encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub frames: usize,
    /// Weighted composite loss.
    pub loss: f64,
    pub latent_mse: f64,
    pub gaze_mse: f64,
    pub keypoint_mse: f64,
    pub render_mse: f64,
    pub early_latent_mse: f64,
}

pub fn evaluate_arch(
    spec: &SupernetSpec,
    arch: &SampledArch,
    params: &Params,
    frames: &[Frame],
    loss_weights: &LossWeights,
    decoder: &SurrogateDecoder,
) -> Result<EvalReport> {
    if frames.is_empty() {
        return Err(Error::InvalidArgument("evaluation needs frames".into()));
    }
    let mut sum = LossBreakdown::default();
    for f in frames {
        let mut g = Graph::new();
        let mut binder = Binder::new(params, false);
        let (_, b) = frame_loss(&mut g, spec, arch, &mut binder, f, loss_weights, decoder)?;
        sum.accumulate(&b);
    }
    let m = sum.scaled(1.0 / frames.len() as f64);
    Ok(EvalReport {
        frames: frames.len(),
        loss: m.total,
        latent_mse: m.latent,
        gaze_mse: m.gaze,
        keypoint_mse: m.keypoint,
        render_mse: m.render,
        early_latent_mse: m.early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{SequenceConfig, SyntheticWorld};
    use crate::supernet::Operator;

    #[test]
    fn training_reduces_loss() {
        let spec = SupernetSpec::toy();
        let world = SyntheticWorld::new(&spec, 1);
        let frames = world
            .generate_sequence(2, &SequenceConfig { n_frames: 40, ..Default::default() })
            .unwrap();
        let arch = SampledArch::uniform(&spec, Operator::Conv3x3, 0.5, 12);
        let cfg = TrainConfig {
            steps: 60,
            batch_size: 4,
            ..Default::default()
        };
        let lw = LossWeights::default();
        let init = init_params(&arch_layout(&spec, &arch).unwrap(), &mut ChaCha8Rng::seed_from_u64(3));
        let before = evaluate_arch(&spec, &arch, &init, &frames, &lw, &world.decoder).unwrap();
        let out = train_arch(&spec, &arch, &cfg, &lw, &ReweightConfig::default(), &frames, &world.decoder, Some(init), 3, |_| {})
            .unwrap();
        let after = evaluate_arch(&spec, &arch, &out.params, &frames, &lw, &world.decoder).unwrap();
        assert!(after.loss < 0.5 * before.loss, "{} vs {}", after.loss, before.loss);
    }

    #[test]
    fn zero_steps_keep_the_seeded_initialization() {
        let spec = SupernetSpec::micro();
        let world = SyntheticWorld::new(&spec, 1);
        let frames = world
            .generate_sequence(2, &SequenceConfig { n_frames: 4, ..Default::default() })
            .unwrap();
        let arch = SampledArch::largest(&spec);
        let cfg = TrainConfig { steps: 0, ..Default::default() };
        let out = train_arch(&spec, &arch, &cfg, &LossWeights::default(), &ReweightConfig::default(), &frames, &world.decoder, None, 9, |_| {})
            .unwrap();
        let init = init_params(&arch_layout(&spec, &arch).unwrap(), &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(out.params, init);
        assert!(out.log.is_empty());
    }
}
