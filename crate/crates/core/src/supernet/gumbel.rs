use rand::Rng;
use rand_distr::Gumbel;

use crate::error::{Error, Result};
use crate::tensor::{Graph, NodeId, Tensor};

/// Standard Gumbel(0, 1) draws.
pub fn sample_gumbel<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let dist = Gumbel::new(0.0, 1.0).expect("unit Gumbel is valid");
    (0..n).map(|_| rng.sample(dist)).collect()
}

fn check_temperature(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "Gumbel-softmax temperature must be positive and finite, got {tau}"
        )))
    }
}

/// `softmax((logits + noise) / tau)`.
pub fn gumbel_softmax(logits: &[f64], noise: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_temperature(tau)?;
    let mut g = Graph::new();
    let l = g.constant(Tensor::vector(logits.to_vec()));
    let w = gumbel_softmax_node(&mut g, l, noise, tau)?;
    Ok(g.value(w).data().to_vec())
}

/// Differentiable relaxed sample recorded on `g`.
pub fn gumbel_softmax_node(g: &mut Graph, logits: NodeId, noise: &[f64], tau: f64) -> Result<NodeId> {
    check_temperature(tau)?;
    let n = g.constant(Tensor::vector(noise.to_vec()));
    let y = g.add(logits, n)?;
    let y = g.scale(y, 1.0 / tau)?;
    Ok(g.softmax(y)?)
}

/// Gumbel-max draw: `argmax(logits + noise)`.
pub fn hard_sample(logits: &[f64], noise: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..logits.len() {
        if logits[i] + noise[i] > logits[best] + noise[best] {
            best = i;
        }
    }
    best
}

pub fn one_hot(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

/// Plain softmax of a slice.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sums_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = sample_gumbel(&mut rng, 4);
        let w = gumbel_softmax(&[0.1, -2.0, 3.0, 0.0], &noise, 0.7).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn zero_temperature_rejected() {
        let err = gumbel_softmax(&[0.0, 1.0], &[0.0, 0.0], 0.0).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn gumbel_max_frequencies_follow_softmax() {
        let logits = [0.5, -0.3, 1.2];
        let p = softmax(&logits);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 40_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[hard_sample(&logits, &sample_gumbel(&mut rng, 3))] += 1;
        }
        for i in 0..3 {
            let f = counts[i] as f64 / n as f64;
            assert!((f - p[i]).abs() < 0.01, "{i}: {f} vs {}", p[i]);
        }
    }
}
