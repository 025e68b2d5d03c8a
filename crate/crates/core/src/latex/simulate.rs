use serde::{Deserialize, Serialize};

use super::runtime::{decide_and_step, Decision, Encoder, LatexState, Source};
use crate::error::{Error, Result};
use crate::objective::{Frame, SurrogateDecoder};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub t: usize,
    pub decision: Decision,
    pub difference: Option<f64>,
    /// Rendered MSE against ground truth.
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub threshold: f64,
    pub skip_ratio: f64,
    /// Skip ratio over frames after the `T` warm-up frames.
    pub steady_skip_ratio: f64,
    pub mean_mse: f64,
    pub longest_skip_run: usize,
    /// `(1 − sr)·full + sr·early` MFLOPs per frame.
    pub effective_mflops: f64,
    /// Mean MFLOPs actually spent per frame; the early head runs on every frame.
    pub measured_mflops: f64,
    pub frames: Vec<FrameRecord>,
}

/// Rendered MSE of an emitted (z, gaze) through the surrogate decoder.
pub fn render_mse(decoder: &SurrogateDecoder, z: &[f64], gaze: &[f64], truth: &Frame) -> f64 {
    let pred = decoder.render_latent(z, gaze);
    let gt = decoder.render(&truth.geometry, &truth.texture);
    pred.iter().zip(&gt).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / gt.len() as f64
}

/// Replays `frames` once per threshold from a fresh state.
pub fn simulate_stream(
    frames: &[Frame],
    encoder: &mut dyn Encoder,
    thresholds: &[f64],
    window: usize,
    decoder: &SurrogateDecoder,
) -> Result<Vec<SimulationResult>> {
    if frames.is_empty() {
        return Err(Error::InvalidArgument("simulation needs frames".into()));
    }
    thresholds
        .iter()
        .map(|&threshold| {
            let mut state = LatexState::new(window, threshold)?;
            let mut records = Vec::with_capacity(frames.len());
            let (mut skips, mut steady_skips, mut run, mut longest) = (0usize, 0usize, 0usize, 0usize);
            let (mut mse_sum, mut cost_sum) = (0.0, 0.0);
            for (t, frame) in frames.iter().enumerate() {
                let step = decide_and_step(t, frame, encoder, &mut state)?;
                let mse = render_mse(decoder, &step.output.z, &step.output.gaze, frame);
                if step.decision.source() == Source::Extrapolated {
                    skips += 1;
                    if t >= window {
                        steady_skips += 1;
                    }
                    run += 1;
                    longest = longest.max(run);
                } else {
                    run = 0;
                }
                mse_sum += mse;
                cost_sum += step.cost;
                records.push(FrameRecord {
                    t,
                    decision: step.decision,
                    difference: step.difference,
                    mse,
                });
            }
            let n = frames.len() as f64;
            let sr = skips as f64 / n;
            let steady = frames.len().saturating_sub(window);
            Ok(SimulationResult {
                threshold,
                skip_ratio: sr,
                steady_skip_ratio: if steady == 0 { 0.0 } else { steady_skips as f64 / steady as f64 },
                mean_mse: mse_sum / n,
                longest_skip_run: longest,
                effective_mflops: (1.0 - sr) * encoder.full_cost() + sr * encoder.early_cost(),
                measured_mflops: cost_sum / n,
                frames: records,
            })
        })
        .collect()
}

/// Thresholds at evenly spaced quantiles of the early-estimate differences of an all-inference pass.
pub fn threshold_grid(
    frames: &[Frame],
    encoder: &mut dyn Encoder,
    window: usize,
    decoder: &SurrogateDecoder,
    n: usize,
) -> Result<Vec<f64>> {
    let base = simulate_stream(frames, encoder, &[0.0], window, decoder)?;
    let mut d: Vec<f64> = base[0].frames.iter().filter_map(|f| f.difference).collect();
    if d.is_empty() || n == 0 {
        return Ok(vec![0.0]);
    }
    d.sort_by(|a, b| a.partial_cmp(b).expect("finite differences"));
    let mut out: Vec<f64> = (0..=n)
        .map(|i| d[((d.len() - 1) * i) / n])
        .collect();
    out.insert(0, 0.0);
    out.dedup();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latex::OracleEncoder;
    use crate::objective::{SequenceConfig, SyntheticWorld};
    use crate::supernet::SupernetSpec;

    #[test]
    fn zero_threshold_matches_pure_inference() {
        let spec = SupernetSpec::toy();
        let w = SyntheticWorld::new(&spec, 1);
        let f = w
            .generate_sequence(3, &SequenceConfig { n_frames: 60, ..Default::default() })
            .unwrap();
        let mut enc = OracleEncoder::default();
        let r = simulate_stream(&f, &mut enc, &[0.0], 4, &w.decoder).unwrap();
        assert_eq!(r[0].skip_ratio, 0.0);
        assert!(r[0].mean_mse < 1e-18);
        assert_eq!(r[0].effective_mflops, 1.0);
    }
}
