//! KL-penalized label-smoothing loss on logits.
//!
//! At one position with ground truth `k0`, prior `v` and weight `beta`:
//!
//! ```text
//! loss = -(1 - beta) log p[k0] + beta KL(v || p),   p = softmax(logits)
//!      = CE(p', p) - beta H(v),                     p' = (1 - beta) onehot(k0) + beta v
//! grad = softmax(logits) - p'
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prior::SmoothingDistribution;

/// Weight of the KL term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub beta: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { beta: 0.4 }
    }
}

impl LossConfig {
    pub fn new(beta: f64) -> Result<Self> {
        let c = LossConfig { beta };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config(format!("beta {} must lie in [0, 1]", self.beta)));
        }
        Ok(())
    }
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::InvalidArgument("empty logits".into()));
    }
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|x| (x - max).exp()).sum();
    let lse = max + sum.ln();
    Ok(logits.iter().map(|x| x - lse).collect())
}

pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    Ok(log_softmax(logits)?.into_iter().map(f64::exp).collect())
}

fn check_dims(v: &SmoothingDistribution, len: usize) -> Result<()> {
    if v.size() != len {
        return Err(Error::DimensionMismatch {
            expected: v.size(),
            got: len,
        });
    }
    Ok(())
}

/// `KL(v || p)` with `p = exp(logp)`. Zero-probability prior terms vanish.
pub fn kl_divergence(v: &SmoothingDistribution, logp: &[f64]) -> Result<f64> {
    check_dims(v, logp.len())?;
    let term = |q: f64, lp: f64| if q > 0.0 { q * (q.ln() - lp) } else { 0.0 };
    let mut kl = 0.0;
    let mut entry_logp = 0.0;
    for &(k, q) in v.entries() {
        kl += term(q, logp[k]);
        entry_logp += logp[k];
    }
    let tail = v.tail();
    if tail > 0.0 && v.tail_count() > 0 {
        let rest_logp = logp.iter().sum::<f64>() - entry_logp;
        kl += tail * (v.tail_count() as f64 * tail.ln() - rest_logp);
    }
    Ok(kl)
}

/// `(1 - beta) onehot(k0) + beta v`.
pub fn mixed_target(k0: usize, v: &SmoothingDistribution, beta: f64) -> Result<SmoothingDistribution> {
    LossConfig::new(beta)?;
    if k0 >= v.size() {
        return Err(Error::IndexOutOfRange {
            index: k0,
            size: v.size(),
        });
    }
    let mut entries: Vec<(usize, f64)> = v.entries().iter().map(|&(k, p)| (k, beta * p)).collect();
    match entries.binary_search_by_key(&k0, |e| e.0) {
        Ok(i) => entries[i].1 += 1.0 - beta,
        Err(i) => entries.insert(i, (k0, (1.0 - beta) + beta * v.tail())),
    }
    Ok(SmoothingDistribution::from_parts(v.size(), entries, beta * v.tail()))
}

/// Cross entropy `-sum q log p` of a sparse target against log-probs.
pub fn cross_entropy(target: &SmoothingDistribution, logp: &[f64]) -> Result<f64> {
    check_dims(target, logp.len())?;
    let mut ce = 0.0;
    let mut entry_logp = 0.0;
    for &(k, q) in target.entries() {
        ce -= q * logp[k];
        entry_logp += logp[k];
    }
    if target.tail() > 0.0 {
        ce -= target.tail() * (logp.iter().sum::<f64>() - entry_logp);
    }
    Ok(ce)
}

/// Loss at one position.
pub fn ls_loss(logits: &[f64], k0: usize, v: &SmoothingDistribution, beta: f64) -> Result<f64> {
    LossConfig::new(beta)?;
    check_dims(v, logits.len())?;
    if k0 >= logits.len() {
        return Err(Error::IndexOutOfRange {
            index: k0,
            size: logits.len(),
        });
    }
    let logp = log_softmax(logits)?;
    Ok(-(1.0 - beta) * logp[k0] + beta * kl_divergence(v, &logp)?)
}

/// Gradient of [`ls_loss`] with respect to the logits.
pub fn ls_loss_grad(logits: &[f64], k0: usize, v: &SmoothingDistribution, beta: f64) -> Result<Vec<f64>> {
    check_dims(v, logits.len())?;
    let target = mixed_target(k0, v, beta)?;
    let mut grad = softmax(logits)?;
    for (g, t) in grad.iter_mut().zip(target.to_dense()) {
        *g -= t;
    }
    Ok(grad)
}

/// Loss and gradient together, sharing the softmax.
pub fn ls_loss_and_grad(logits: &[f64], k0: usize, v: &SmoothingDistribution, beta: f64) -> Result<(f64, Vec<f64>)> {
    let loss = ls_loss(logits, k0, v, beta)?;
    let grad = ls_loss_grad(logits, k0, v, beta)?;
    Ok((loss, grad))
}

/// Sum of per-position losses. An empty sequence has zero loss.
pub fn sequence_ls_loss<L: AsRef<[f64]>>(
    logits: &[L],
    targets: &[usize],
    priors: &[SmoothingDistribution],
    beta: f64,
) -> Result<f64> {
    if logits.len() != targets.len() || targets.len() != priors.len() {
        return Err(Error::DimensionMismatch {
            expected: targets.len(),
            got: if logits.len() != targets.len() { logits.len() } else { priors.len() },
        });
    }
    logits
        .iter()
        .zip(targets)
        .zip(priors)
        .map(|((l, &k), v)| ls_loss(l.as_ref(), k, v, beta))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::uniform_prior;

    #[test]
    fn log_softmax_basics() {
        let l = log_softmax(&[0.0; 4]).unwrap();
        assert!(l.iter().all(|x| (x - 0.25f64.ln()).abs() < 1e-15));
        let l = log_softmax(&[1000.0, 0.0]).unwrap();
        assert!(l[0].abs() < 1e-12 && (l[1] + 1000.0).abs() < 1e-9);
        assert!(log_softmax(&[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn kl_examples() {
        let v = uniform_prior(2).unwrap();
        let logp = [0.8f64.ln(), 0.2f64.ln()];
        let kl = kl_divergence(&v, &logp).unwrap();
        let expected = 0.5 * (0.5f64 / 0.8).ln() + 0.5 * (0.5f64 / 0.2).ln();
        assert!((kl - expected).abs() < 1e-15);
        assert!((kl - 0.2231435513142097).abs() < 1e-12);
        let v = uniform_prior(3).unwrap();
        assert!(kl_divergence(&v, &[(1.0f64 / 3.0).ln(); 3]).unwrap().abs() < 1e-15);
        assert!(kl_divergence(&v, &[0.0; 2]).is_err());
    }

    #[test]
    fn mixed_target_examples() {
        let v = uniform_prior(5).unwrap();
        let t = mixed_target(0, &v, 0.4).unwrap().to_dense();
        let expected = [0.68, 0.08, 0.08, 0.08, 0.08];
        for (a, b) in t.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let t = mixed_target(2, &v, 0.0).unwrap().to_dense();
        assert_eq!(t, vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        let t = mixed_target(2, &v, 1.0).unwrap();
        assert_eq!(t.to_dense(), v.to_dense());
    }

    #[test]
    fn loss_reductions() {
        let logits = [0.3, -1.0, 2.0, 0.1];
        let v = uniform_prior(4).unwrap();
        let nll = -log_softmax(&logits).unwrap()[2];
        assert!((ls_loss(&logits, 2, &v, 0.0).unwrap() - nll).abs() < 1e-15);
        let l = ls_loss(&[0.0; 4], 0, &v, 0.4).unwrap();
        assert!((l - 0.6 * 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn grad_closed_form() {
        let v = uniform_prior(4).unwrap();
        let g = ls_loss_grad(&[0.0; 4], 0, &v, 0.4).unwrap();
        for (a, b) in g.iter().zip([-0.45, 0.15, 0.15, 0.15]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn grad_vanishes_at_target() {
        let v = uniform_prior(6).unwrap();
        let t = mixed_target(1, &v, 0.4).unwrap().to_dense();
        let logits: Vec<f64> = t.iter().map(|p| p.ln() + 3.0).collect();
        let g = ls_loss_grad(&logits, 1, &v, 0.4).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn point_mass_prior_is_plain_nll() {
        let logits = [0.5, 1.5, -0.2];
        let v = SmoothingDistribution::point_mass(3, 1).unwrap();
        let nll = -log_softmax(&logits).unwrap()[1];
        assert!((ls_loss(&logits, 1, &v, 0.4).unwrap() - nll).abs() < 1e-15);
    }

    #[test]
    fn sequence_loss() {
        let v = uniform_prior(3).unwrap();
        let logits = vec![vec![0.1, 0.2, 0.3]];
        let single = ls_loss(&logits[0], 2, &v, 0.4).unwrap();
        assert_eq!(sequence_ls_loss(&logits, &[2], &[v.clone()], 0.4).unwrap(), single);
        let empty: Vec<Vec<f64>> = vec![];
        assert_eq!(sequence_ls_loss(&empty, &[], &[], 0.4).unwrap(), 0.0);
        assert!(sequence_ls_loss(&logits, &[2, 1], &[v.clone()], 0.4).is_err());
    }

    #[test]
    fn beta_validation() {
        assert!(LossConfig::new(0.4).is_ok());
        assert!(LossConfig::new(-0.1).is_err());
        assert!(LossConfig::new(1.1).is_err());
    }
}
