use crate::error::{Error, Result};

/// Linear interpolation `z_t = (T − t)/T · z_0 + t/T · z_T` for `t = 0..=T`.
pub fn interpolate_window(z0: &[f64], zt: &[f64], t_window: usize) -> Result<Vec<Vec<f64>>> {
    if t_window < 2 {
        return Err(Error::InvalidArgument(format!("window must be at least 2, got {t_window}")));
    }
    if z0.len() != zt.len() {
        return Err(Error::InvalidArgument("endpoints differ in length".into()));
    }
    let n = t_window as f64;
    Ok((0..=t_window)
        .map(|t| {
            if t == 0 {
                return z0.to_vec();
            }
            if t == t_window {
                return zt.to_vec();
            }
            let (a, b) = ((t_window - t) as f64 / n, t as f64 / n);
            z0.iter().zip(zt).map(|(x, y)| a * x + b * y).collect()
        })
        .collect())
}

/// Largest deviation of the interior window frames from their interpolation.
pub fn linearity_error(window: &[Vec<f64>]) -> Result<f64> {
    let t = window.len().saturating_sub(1);
    let first = window.first().ok_or_else(|| Error::InvalidArgument("empty window".into()))?;
    let lin = interpolate_window(first, &window[t], t)?;
    Ok(window
        .iter()
        .zip(&lin)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max))
}

/// `x_t = x_{t−1} + (x_{t−1} − x_{t−T}) / (T − 1)` from the last `T` values, oldest first.
pub fn extrapolate_series(history: &[&[f64]], t_window: usize) -> Result<Vec<f64>> {
    if t_window < 2 {
        return Err(Error::InvalidArgument(format!("window must be at least 2, got {t_window}")));
    }
    if history.len() < t_window {
        return Err(Error::InsufficientHistory {
            need: t_window,
            have: history.len(),
        });
    }
    let last = history[history.len() - 1];
    let first = history[history.len() - t_window];
    let k = (t_window - 1) as f64;
    Ok(last.iter().zip(first).map(|(l, f)| l + (l - f) / k).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_examples() {
        let w = interpolate_window(&[0.0], &[8.0], 8).unwrap();
        assert_eq!(w[0], vec![0.0]);
        assert_eq!(w[8], vec![8.0]);
        assert_eq!(w[3], vec![3.0]);
        let v = interpolate_window(&[1.0, -2.0], &[3.0, 6.0], 4).unwrap();
        assert_eq!(v[2], vec![2.0, 2.0]);
        assert!(interpolate_window(&[0.0], &[1.0], 1).is_err());
    }

    #[test]
    fn extrapolation_examples() {
        let h: Vec<Vec<f64>> = [1.0, 2.0, 3.0, 4.0].iter().map(|&x| vec![x]).collect();
        let r: Vec<&[f64]> = h.iter().map(|v| v.as_slice()).collect();
        assert_eq!(extrapolate_series(&r, 4).unwrap(), vec![5.0]);
        let c = vec![vec![0.3, -1.0]; 4];
        let r: Vec<&[f64]> = c.iter().map(|v| v.as_slice()).collect();
        assert_eq!(extrapolate_series(&r, 4).unwrap(), vec![0.3, -1.0]);
        assert!(matches!(
            extrapolate_series(&r[..3], 4),
            Err(Error::InsufficientHistory { need: 4, have: 3 })
        ));
    }

    #[test]
    fn lines_have_zero_linearity_error() {
        let w: Vec<Vec<f64>> = (0..5).map(|t| vec![0.5 * t as f64 - 1.0, 2.0]).collect();
        assert!(linearity_error(&w).unwrap() < 1e-12);
        let mut bent = w.clone();
        bent[2][0] += 0.25;
        assert!((linearity_error(&bent).unwrap() - 0.25).abs() < 1e-12);
    }
}
