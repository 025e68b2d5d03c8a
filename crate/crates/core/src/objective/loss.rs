use serde::{Deserialize, Serialize};

use super::world::{Frame, SurrogateDecoder};
use crate::error::{Error, Result};
use crate::supernet::EncoderNodes;
use crate::tensor::{Graph, NodeId, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub latent: f64,
    pub gaze: f64,
    pub geometry: f64,
    pub texture: f64,
    pub keypoint: f64,
    pub render: f64,
    /// Weight of the early head's latent error.
    pub early: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            latent: 1e-1,
            gaze: 1.0,
            geometry: 1.0,
            texture: 1.0,
            keypoint: 1e3,
            render: 1e-4,
            early: 1e-1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.latent,
            self.gaze,
            self.geometry,
            self.texture,
            self.keypoint,
            self.render,
            self.early,
        ];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument(
                "loss weights must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Everything the loss compares against ground truth.
#[derive(Debug, Clone, Copy)]
pub struct Predicted {
    pub z: NodeId,
    pub gaze: Option<NodeId>,
    pub keypoints: Option<NodeId>,
    pub geometry: NodeId,
    pub texture: NodeId,
    pub early_z: Option<NodeId>,
}

fn affine_const(g: &mut Graph, x: NodeId, w: &Tensor, b: &Tensor) -> Result<NodeId> {
    let w = g.constant(w.clone());
    let b = g.constant(b.clone());
    Ok(g.affine(x, w, b)?)
}

fn texture_input(g: &mut Graph, z: NodeId, gaze: Option<NodeId>, dec: &SurrogateDecoder) -> Result<NodeId> {
    match (gaze, dec.gaze_dim()) {
        (None, 0) => Ok(z),
        (Some(gz), n) if n > 0 => Ok(g.concat(&[z, gz], 0)?),
        _ => Err(Error::InvalidArgument(
            "predicted gaze does not match the decoder's texture input".into(),
        )),
    }
}

/// Runs the frozen decoder on encoder outputs.
pub fn decode(g: &mut Graph, enc: &EncoderNodes, dec: &SurrogateDecoder) -> Result<Predicted> {
    let geometry = affine_const(g, enc.z, &dec.geometry_w, &dec.geometry_b)?;
    let tin = texture_input(g, enc.z, enc.gaze, dec)?;
    let texture = affine_const(g, tin, &dec.texture_w, &dec.texture_b)?;
    Ok(Predicted {
        z: enc.z,
        gaze: enc.gaze,
        keypoints: enc.keypoints,
        geometry,
        texture,
        early_z: enc.early_z,
    })
}

/// Per-term mean squared errors, unweighted, and the weighted total.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub latent: f64,
    pub gaze: f64,
    pub geometry: f64,
    pub texture: f64,
    pub keypoint: f64,
    pub render: f64,
    pub early: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn accumulate(&mut self, other: &LossBreakdown) {
        self.latent += other.latent;
        self.gaze += other.gaze;
        self.geometry += other.geometry;
        self.texture += other.texture;
        self.keypoint += other.keypoint;
        self.render += other.render;
        self.early += other.early;
        self.total += other.total;
    }

    pub fn scaled(&self, c: f64) -> LossBreakdown {
        LossBreakdown {
            latent: self.latent * c,
            gaze: self.gaze * c,
            geometry: self.geometry * c,
            texture: self.texture * c,
            keypoint: self.keypoint * c,
            render: self.render * c,
            early: self.early * c,
            total: self.total * c,
        }
    }
}

fn target(g: &mut Graph, v: &[f64]) -> Result<NodeId> {
    if v.is_empty() {
        return Err(Error::InvalidArgument("empty ground-truth target".into()));
    }
    Ok(g.constant(Tensor::vector(v.to_vec())))
}

/// Weighted sum of mean-squared errors of every head against `gt`.
pub fn composite_loss(
    g: &mut Graph,
    pred: &Predicted,
    gt: &Frame,
    w: &LossWeights,
    dec: &SurrogateDecoder,
) -> Result<(NodeId, LossBreakdown)> {
    let mut terms: Vec<(f64, NodeId)> = Vec::new();
    let mut out = LossBreakdown::default();
    let mut term = |g: &mut Graph, pred: NodeId, truth: &[f64], weight: f64, slot: &mut f64| -> Result<()> {
        let t = target(g, truth)?;
        let l = g.mse(pred, t)?;
        *slot = g.value(l).item().expect("scalar");
        terms.push((weight, l));
        Ok(())
    };
    term(g, pred.z, &gt.z, w.latent, &mut out.latent)?;
    if let Some(gz) = pred.gaze {
        term(g, gz, &gt.gaze, w.gaze, &mut out.gaze)?;
    }
    term(g, pred.geometry, &gt.geometry, w.geometry, &mut out.geometry)?;
    term(g, pred.texture, &gt.texture, w.texture, &mut out.texture)?;
    if let Some(k) = pred.keypoints {
        term(g, k, &gt.keypoints, w.keypoint, &mut out.keypoint)?;
    }
    let gt_render = dec.render(&gt.geometry, &gt.texture);
    let both = g.concat(&[pred.geometry, pred.texture], 0)?;
    let rendered = affine_const(g, both, &dec.render_w, &dec.render_b)?;
    term(g, rendered, &gt_render, w.render, &mut out.render)?;
    if let Some(e) = pred.early_z {
        if w.early > 0.0 {
            term(g, e, &gt.z, w.early, &mut out.early)?;
        }
    }
    let mut total = None;
    for (weight, l) in terms {
        let s = g.scale(l, weight)?;
        total = Some(match total {
            None => s,
            Some(t) => g.add(t, s)?,
        });
    }
    let total = total.expect("latent term always present");
    out.total = g.value(total).item().expect("scalar");
    Ok((total, out))
}

/// Exponential moving average of gaze driving sample re-weighting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeState {
    g_bar: Option<Vec<f64>>,
    momentum: f64,
    temperature: f64,
}

impl GazeState {
    pub fn new(momentum: f64, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "re-weighting temperature must be positive, got {temperature}"
            )));
        }
        if !(0.0..=1.0).contains(&momentum) {
            return Err(Error::InvalidArgument(format!(
                "gaze momentum must lie in [0, 1], got {momentum}"
            )));
        }
        Ok(Self {
            g_bar: None,
            momentum,
            temperature,
        })
    }

    pub fn with_mean(mut self, g_bar: Vec<f64>) -> Self {
        self.g_bar = Some(g_bar);
        self
    }

    pub fn g_bar(&self) -> Option<&[f64]> {
        self.g_bar.as_deref()
    }

    pub fn is_initialized(&self) -> bool {
        self.g_bar.is_some()
    }

    /// Seeds the average with the mean of a batch.
    pub fn initialize(&mut self, batch: &[&[f64]]) {
        let Some(first) = batch.first() else { return };
        let mut mean = vec![0.0; first.len()];
        for g in batch {
            mean.iter_mut().zip(g.iter()).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= batch.len() as f64);
        self.g_bar = Some(mean);
    }

    /// `exp(‖g − ḡ‖₂ / τ)`.
    pub fn weight(&self, g: &[f64]) -> f64 {
        let Some(bar) = &self.g_bar else { return 1.0 };
        let d2: f64 = g.iter().zip(bar).map(|(a, b)| (a - b) * (a - b)).sum();
        (d2.sqrt() / self.temperature).exp()
    }

    /// `ḡ ← m·ḡ + (1 − m)·g`.
    pub fn update(&mut self, g: &[f64]) {
        match &mut self.g_bar {
            Some(bar) => bar
                .iter_mut()
                .zip(g)
                .for_each(|(b, v)| *b = self.momentum * *b + (1.0 - self.momentum) * v),
            None => self.g_bar = Some(g.to_vec()),
        }
    }

    /// Scales `loss` by the detached weight of `g`, then folds `g` into the average.
    pub fn reweight(&mut self, graph: &mut Graph, loss: NodeId, g: &[f64]) -> Result<(NodeId, f64)> {
        let w = self.weight(g);
        self.update(g);
        Ok((graph.scale(loss, w)?, w))
    }

    /// Mean of sample-wise re-weighted losses; the average advances sample by sample.
    pub fn batch_loss(
        &mut self,
        graph: &mut Graph,
        losses: &[NodeId],
        gazes: &[&[f64]],
    ) -> Result<(NodeId, Vec<f64>)> {
        if losses.is_empty() || losses.len() != gazes.len() {
            return Err(Error::InvalidArgument("one gaze per sample loss is required".into()));
        }
        if !self.is_initialized() {
            self.initialize(gazes);
        }
        let mut weights = Vec::with_capacity(losses.len());
        let mut parts = Vec::with_capacity(losses.len());
        for (&l, g) in losses.iter().zip(gazes) {
            let (s, w) = self.reweight(graph, l, g)?;
            parts.push(graph.reshape(s, &[1])?);
            weights.push(w);
        }
        let all = graph.concat(&parts, 0)?;
        let sum = graph.sum(all)?;
        Ok((graph.scale(sum, 1.0 / losses.len() as f64)?, weights))
    }
}
