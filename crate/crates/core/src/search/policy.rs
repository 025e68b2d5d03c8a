use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::supernet::{hard_sample, sample_gumbel, softmax};

/// Score-function estimate `f · ∂ log p(α̂ | θ) / ∂θ` for a categorical `p = softmax(θ)`.
pub fn policy_gradient(logits: &[f64], choice: usize, f: f64) -> Vec<f64> {
    let p = softmax(logits);
    p.iter()
        .enumerate()
        .map(|(i, &pi)| f * (if i == choice { 1.0 } else { 0.0 } - pi))
        .collect()
}

/// Resolution logits of one view, learned from window-averaged objectives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionPolicy {
    pub logits: Vec<f64>,
    /// Running mean of window objectives; `None` until the first window closes.
    pub baseline: Option<f64>,
}

impl ResolutionPolicy {
    pub fn uniform(n: usize) -> Self {
        Self {
            logits: vec![0.0; n],
            baseline: None,
        }
    }

    pub fn probabilities(&self) -> Vec<f64> {
        softmax(&self.logits)
    }

    /// Gumbel-max draw from `softmax(θ)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        hard_sample(&self.logits, &sample_gumbel(rng, self.logits.len()))
    }

    /// Descends the window objective `f_mean` (lower is better) from choice `choice`.
    ///
    /// The baseline starts at the first window's objective and then tracks an
    /// exponential moving average with `momentum`.
    pub fn update(&mut self, choice: usize, f_mean: f64, lr: f64, momentum: f64) {
        let b = *self.baseline.get_or_insert(f_mean);
        let g = policy_gradient(&self.logits, choice, f_mean - b);
        for (l, gi) in self.logits.iter_mut().zip(g) {
            *l -= lr * gi;
        }
        self.baseline = Some(momentum * b + (1.0 - momentum) * f_mean);
    }
}

/// Objectives collected while one sampled resolution is held fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardWindow {
    pub length: usize,
    pub choices: Vec<usize>,
    sum: f64,
    count: usize,
}

impl RewardWindow {
    pub fn new(length: usize, choices: Vec<usize>) -> Self {
        Self {
            length,
            choices,
            sum: 0.0,
            count: 0,
        }
    }

    pub fn push(&mut self, f: f64) {
        self.sum += f;
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_complete(&self) -> bool {
        self.count >= self.length
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn flat_reward_leaves_logits_unchanged() {
        let mut p = ResolutionPolicy::uniform(3);
        p.update(1, 2.0, 1.0, 0.9);
        p.update(0, 2.0, 1.0, 0.9);
        assert_eq!(p.logits, vec![0.0; 3]);
    }

    #[test]
    fn gradient_sums_to_zero() {
        let g = policy_gradient(&[0.3, -1.0, 2.0], 2, 1.7);
        assert!(g.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn window_mean() {
        let mut w = RewardWindow::new(2, vec![0]);
        w.push(1.0);
        assert!(!w.is_complete());
        w.push(3.0);
        assert!(w.is_complete());
        assert_eq!(w.mean(), Some(2.0));
    }

    #[test]
    fn single_candidate_is_stable() {
        let mut p = ResolutionPolicy::uniform(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for i in 0..50 {
            let c = p.sample(&mut rng);
            assert_eq!(c, 0);
            p.update(c, i as f64, 1.0, 0.9);
        }
        assert_eq!(p.logits, vec![0.0]);
    }
}
