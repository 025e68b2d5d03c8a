use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::window::extrapolate_series;
use crate::cost::count_flops;
use crate::error::{Error, Result};
use crate::objective::Frame;
use crate::supernet::{arch_forward, early_forward, Binder, Params, SampledArch, SupernetSpec};
use crate::tensor::Graph;

/// Longest allowed run of extrapolated frames.
pub const MAX_CONSECUTIVE_SKIPS: usize = 3;

/// Latent code, gaze and keypoints emitted for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentOutput {
    pub z: Vec<f64>,
    pub gaze: Vec<f64>,
    pub keypoints: Vec<f64>,
}

/// A per-frame encoder with a cheap early latent estimate.
///
/// `t` is the frame's position in the stream.
pub trait Encoder {
    fn early(&mut self, t: usize, frame: &Frame) -> Result<Vec<f64>>;
    fn infer(&mut self, t: usize, frame: &Frame) -> Result<LatentOutput>;
    /// MFLOPs of a full inference.
    fn full_cost(&self) -> f64;
    /// MFLOPs of the early estimate.
    fn early_cost(&self) -> f64;
}

/// Returns ground truth; the early estimate is the true latent plus `early_offset`.
#[derive(Debug, Clone, Default)]
pub struct OracleEncoder {
    pub early_offset: f64,
}

impl Encoder for OracleEncoder {
    fn early(&mut self, _t: usize, frame: &Frame) -> Result<Vec<f64>> {
        Ok(frame.z.iter().map(|z| z + self.early_offset).collect())
    }

    fn infer(&mut self, _t: usize, frame: &Frame) -> Result<LatentOutput> {
        Ok(LatentOutput {
            z: frame.z.clone(),
            gaze: frame.gaze.clone(),
            keypoints: frame.keypoints.clone(),
        })
    }

    fn full_cost(&self) -> f64 {
        1.0
    }

    fn early_cost(&self) -> f64 {
        0.0
    }
}

/// A trained discrete-architecture encoder.
pub struct ArchEncoder<'a> {
    spec: &'a SupernetSpec,
    arch: &'a SampledArch,
    params: &'a Params,
    full_mflops: f64,
    early_mflops: f64,
}

impl<'a> ArchEncoder<'a> {
    pub fn new(spec: &'a SupernetSpec, arch: &'a SampledArch, params: &'a Params) -> Result<Self> {
        let report = count_flops(spec, arch)?;
        Ok(Self {
            spec,
            arch,
            params,
            full_mflops: report.total_mflops(),
            early_mflops: report.early_path_mflops(),
        })
    }
}

impl Encoder for ArchEncoder<'_> {
    fn early(&mut self, _t: usize, frame: &Frame) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let mut b = Binder::new(self.params, false);
        let e = early_forward(&mut g, self.spec, &mut b, &frame.images, &self.arch.resolutions())?;
        Ok(g.value(e).data().to_vec())
    }

    fn infer(&mut self, _t: usize, frame: &Frame) -> Result<LatentOutput> {
        let mut g = Graph::new();
        let mut b = Binder::new(self.params, false);
        let out = arch_forward(&mut g, self.spec, self.arch, &mut b, &frame.images, false)?;
        let read = |g: &Graph, n: Option<_>| n.map(|n| g.value(n).data().to_vec()).unwrap_or_default();
        Ok(LatentOutput {
            z: g.value(out.z).data().to_vec(),
            gaze: read(&g, out.gaze),
            keypoints: read(&g, out.keypoints),
        })
    }

    fn full_cost(&self) -> f64 {
        self.full_mflops
    }

    fn early_cost(&self) -> f64 {
        self.early_mflops
    }
}

/// Replays outputs recorded from another encoder, indexed by stream position.
#[derive(Debug, Clone)]
pub struct RecordedEncoder {
    early: Vec<Vec<f64>>,
    outputs: Vec<LatentOutput>,
    full_cost: f64,
    early_cost: f64,
}

impl RecordedEncoder {
    pub fn record(encoder: &mut dyn Encoder, frames: &[Frame]) -> Result<Self> {
        let mut early = Vec::with_capacity(frames.len());
        let mut outputs = Vec::with_capacity(frames.len());
        for (t, f) in frames.iter().enumerate() {
            early.push(encoder.early(t, f)?);
            outputs.push(encoder.infer(t, f)?);
        }
        Ok(Self {
            early,
            outputs,
            full_cost: encoder.full_cost(),
            early_cost: encoder.early_cost(),
        })
    }

    fn lookup<T: Clone>(v: &[T], t: usize) -> Result<T> {
        v.get(t)
            .cloned()
            .ok_or_else(|| Error::InvalidArgument(format!("no recorded output for frame {t}")))
    }
}

impl Encoder for RecordedEncoder {
    fn early(&mut self, t: usize, _frame: &Frame) -> Result<Vec<f64>> {
        Self::lookup(&self.early, t)
    }

    fn infer(&mut self, t: usize, _frame: &Frame) -> Result<LatentOutput> {
        Self::lookup(&self.outputs, t)
    }

    fn full_cost(&self) -> f64 {
        self.full_cost
    }

    fn early_cost(&self) -> f64 {
        self.early_cost
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Inference,
    Extrapolated,
}

/// Why a frame was produced the way it was.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    /// Fewer than `T` frames of history.
    Warmup,
    /// The skip cap was reached.
    Forced,
    /// The early estimate moved at least `threshold` since the previous frame.
    Changed,
    Skipped,
}

impl Decision {
    pub fn source(self) -> Source {
        match self {
            Decision::Skipped => Source::Extrapolated,
            _ => Source::Inference,
        }
    }
}

/// Per-stream extrapolation state.
#[derive(Debug, Clone)]
pub struct LatexState {
    pub window: usize,
    pub threshold: f64,
    history: VecDeque<(LatentOutput, Source)>,
    prev_early: Option<Vec<f64>>,
    pub consecutive_skips: usize,
}

impl LatexState {
    /// Windows of 2 or 3 frames amplify round-off once extrapolated frames fill the history.
    pub fn new(window: usize, threshold: f64) -> Result<Self> {
        if window < 2 {
            return Err(Error::InvalidArgument(format!("window T must be at least 2, got {window}")));
        }
        if threshold.is_nan() || threshold < 0.0 {
            return Err(Error::InvalidArgument(format!("threshold must be non-negative, got {threshold}")));
        }
        Ok(Self {
            window,
            threshold,
            history: VecDeque::with_capacity(window),
            prev_early: None,
            consecutive_skips: 0,
        })
    }

    pub fn history(&self) -> impl Iterator<Item = &(LatentOutput, Source)> {
        self.history.iter()
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    /// Linear extrapolation of z, gaze and keypoints from the stored history.
    pub fn extrapolate(&self) -> Result<LatentOutput> {
        let t = self.window;
        let part = |f: fn(&LatentOutput) -> &[f64]| -> Result<Vec<f64>> {
            let h: Vec<&[f64]> = self.history.iter().map(|(o, _)| f(o)).collect();
            extrapolate_series(&h, t)
        };
        Ok(LatentOutput {
            z: part(|o| &o.z)?,
            gaze: part(|o| &o.gaze)?,
            keypoints: part(|o| &o.keypoints)?,
        })
    }

    fn push(&mut self, out: LatentOutput, source: Source) {
        if self.history.len() == self.window {
            self.history.pop_front();
        }
        self.history.push_back((out, source));
    }
}

/// Outcome of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub output: LatentOutput,
    pub decision: Decision,
    /// `‖ẑ_early,t − ẑ_early,t−1‖₂` when the threshold test ran.
    pub difference: Option<f64>,
    /// MFLOPs actually spent on this frame.
    pub cost: f64,
}

/// Runs the early head, then either full inference or linear extrapolation.
///
/// The early head runs on every frame so the previous frame's estimate is always at hand.
pub fn decide_and_step(
    t: usize,
    frame: &Frame,
    encoder: &mut dyn Encoder,
    state: &mut LatexState,
) -> Result<Step> {
    let early = encoder.early(t, frame)?;
    if let Some(prev) = &state.prev_early {
        if early.len() != prev.len() {
            return Err(Error::InvalidArgument(format!(
                "early latent has {} values, previous estimate {}",
                early.len(),
                prev.len()
            )));
        }
    }
    let (decision, difference) = if state.history.len() < state.window {
        (Decision::Warmup, None)
    } else if state.consecutive_skips >= MAX_CONSECUTIVE_SKIPS {
        (Decision::Forced, None)
    } else {
        let prev = state.prev_early.as_ref().expect("estimate of every history frame");
        let d = early
            .iter()
            .zip(prev)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let skip = d < state.threshold;
        (if skip { Decision::Skipped } else { Decision::Changed }, Some(d))
    };
    state.prev_early = Some(early);
    let (output, cost) = match decision {
        Decision::Skipped => {
            state.consecutive_skips += 1;
            (state.extrapolate()?, encoder.early_cost())
        }
        _ => {
            state.consecutive_skips = 0;
            (encoder.infer(t, frame)?, encoder.early_cost() + encoder.full_cost())
        }
    };
    state.push(output.clone(), decision.source());
    Ok(Step {
        output,
        decision,
        difference,
        cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{SequenceConfig, SyntheticWorld};

    fn frames(n: usize) -> Vec<Frame> {
        let spec = SupernetSpec::toy();
        let w = SyntheticWorld::new(&spec, 2);
        w.generate_sequence(
            4,
            &SequenceConfig {
                n_frames: n,
                ..Default::default()
            },
        )
        .unwrap()
    }

    fn run(threshold: f64, frames: &[Frame]) -> Vec<Decision> {
        let mut s = LatexState::new(4, threshold).unwrap();
        let mut enc = OracleEncoder::default();
        frames
            .iter()
            .enumerate()
            .map(|(t, f)| decide_and_step(t, f, &mut enc, &mut s).unwrap().decision)
            .collect()
    }

    #[test]
    fn zero_threshold_always_infers() {
        let f = frames(50);
        assert!(run(0.0, &f).iter().all(|d| *d != Decision::Skipped));
    }

    #[test]
    fn infinite_threshold_cycles_three_skips() {
        let f = frames(20);
        let d = run(f64::INFINITY, &f);
        assert!(d[..4].iter().all(|d| *d == Decision::Warmup));
        for (i, d) in d[4..].iter().enumerate() {
            let want = if i % 4 == 3 { Decision::Forced } else { Decision::Skipped };
            assert_eq!(*d, want, "frame {}", i + 4);
        }
    }

    #[test]
    fn state_rejects_bad_settings() {
        assert!(LatexState::new(1, 0.1).is_err());
        assert!(LatexState::new(4, -1.0).is_err());
        assert!(LatexState::new(4, f64::NAN).is_err());
    }

    #[test]
    fn history_is_bounded() {
        let f = frames(12);
        let mut s = LatexState::new(4, f64::INFINITY).unwrap();
        let mut enc = OracleEncoder::default();
        for (t, fr) in f.iter().enumerate() {
            decide_and_step(t, fr, &mut enc, &mut s).unwrap();
            assert!(s.history_len() <= 4);
            assert!(s.consecutive_skips <= MAX_CONSECUTIVE_SKIPS);
        }
    }
}
