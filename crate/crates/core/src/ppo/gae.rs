//! Generalized advantage estimation.

use crate::error::{Error, Result};

/// Advantages and returns for one segment.
///
/// `dones[t]` marks that transition `t` ended its episode, which cuts both the
/// value bootstrap and the recursion. `bootstrap` stands in for `v_{n}`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::LengthMismatch(format!(
            "rewards {n}, values {}, dones {}",
            values.len(),
            dones.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Rescales to zero mean and unit standard deviation.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    for a in adv {
        *a = (*a - mean) / std;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn td0_reduction() {
        let (a, r) = compute_gae(&[0.7], &[0.2], &[false], 1.5, 0.9, 0.0).unwrap();
        assert!((a[0] - (0.7 + 0.9 * 1.5 - 0.2)).abs() < 1e-15);
        assert!((r[0] - (a[0] + 0.2)).abs() < 1e-15);
    }

    #[test]
    fn zeros_in_zeros_out() {
        let (a, _) = compute_gae(&[0.0; 8], &[0.0; 8], &[false; 8], 0.0, 0.995, 0.95).unwrap();
        assert!(a.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            compute_gae(&[0.0; 3], &[0.0; 2], &[false; 3], 0.0, 0.9, 0.9),
            Err(Error::LengthMismatch(_))
        ));
    }

    #[test]
    fn done_blocks_bootstrap() {
        // huge values after the done must not leak backwards
        let (a, _) = compute_gae(&[1.0, 0.0], &[0.0, 1e6], &[true, false], 1e6, 0.99, 0.95).unwrap();
        assert_eq!(a[0], 1.0);
    }

    #[test]
    fn normalized_moments() {
        let mut r = Rng::new(3);
        let mut a: Vec<f64> = (0..500).map(|_| 3.0 + 2.0 * r.normal()).collect();
        normalize_advantages(&mut a);
        let m = a.iter().sum::<f64>() / 500.0;
        let v = a.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 500.0;
        assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-6);
    }
}
