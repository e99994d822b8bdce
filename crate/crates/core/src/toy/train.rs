//! Mini-batch SGD with momentum and global-norm clipping.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::autodiff::{ParamGrads, Tape, Tensor};
use super::data::Utterance;
use super::model::{forward_on, ParamNodes, ToyModelParams};
use crate::error::{Error, Result};
use crate::loss::log_softmax;
use crate::metrics::{edit_distance, EditStats};
use crate::prior::SmoothingDistribution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Global gradient-norm threshold; zero disables clipping.
    pub clip_norm: f64,
    /// Weight of the KL term.
    pub beta: f64,
    /// Seeds the example shuffle.
    pub seed: u64,
    /// Evaluate per-example gradients on the rayon pool.
    pub parallel: bool,
    /// Train this many leading epochs with one-hot targets before
    /// switching to the configured priors.
    pub onehot_epochs: usize,
    /// Skip held-out decoding and report CER as NaN.
    pub skip_heldout_cer: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 16,
            learning_rate: 0.02,
            momentum: 0.9,
            clip_norm: 5.0,
            beta: 0.4,
            seed: 1,
            parallel: false,
            onehot_epochs: 0,
            skip_heldout_cer: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be non-negative");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.clip_norm >= 0.0) {
            return bad("clip_norm must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad("beta must lie in [0, 1]");
        }
        Ok(())
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-utterance training objective.
    pub train_loss: f64,
    /// Mean per-utterance held-out negative log-likelihood.
    pub heldout_loss: f64,
    /// Pooled held-out CER in percent.
    pub heldout_cer: f64,
}

pub const LOG_HEADER: &str = "epoch,train_loss,heldout_loss,heldout_cer";

pub fn format_log(rows: &[EpochLog]) -> String {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{:.8},{:.8},{:.8}\n",
            r.epoch, r.train_loss, r.heldout_loss, r.heldout_cer
        ));
    }
    s
}

pub fn write_log(rows: &[EpochLog], path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(format_log(rows).as_bytes()).map_err(|e| Error::io(path, e))
}

/// Sequence objective and parameter gradients for one utterance. `priors`
/// holds one distribution per label plus the EOS position.
pub fn example_loss_and_grad(
    params: &ToyModelParams,
    utt: &Utterance,
    priors: &[SmoothingDistribution],
    beta: f64,
    sos: usize,
    eos: usize,
) -> Result<(f64, ParamGrads)> {
    if priors.len() != utt.labels.len() + 1 {
        return Err(Error::DimensionMismatch {
            expected: utt.labels.len() + 1,
            got: priors.len(),
        });
    }
    let mut tape = Tape::new();
    let p = ParamNodes::load(&mut tape, params);
    let steps = forward_on(&mut tape, &p, &params.dims, &utt.frames, &utt.labels, sos)?;
    let mut heads = Vec::with_capacity(steps.len());
    for (u, step) in steps.iter().enumerate() {
        let k0 = utt.labels.get(u).copied().unwrap_or(eos);
        heads.push(tape.ls_head(step.logits, k0, &priors[u], beta)?);
    }
    let root = tape.sum(&heads);
    let loss = tape.value(root).data[0];
    let grads = tape.backward(root)?;
    let grads = grads
        .into_iter()
        .zip(&params.tensors)
        .map(|(g, t)| if g.is_empty() { Tensor::zeros(t.rows, t.cols) } else { g })
        .collect();
    Ok((loss, grads))
}

/// Teacher-forced negative log-likelihood of labels plus EOS.
pub fn sequence_nll(params: &ToyModelParams, utt: &Utterance, sos: usize, eos: usize) -> Result<f64> {
    let logits = params.forward_teacher_forced(&utt.frames, &utt.labels, sos)?;
    let mut nll = 0.0;
    for (u, z) in logits.iter().enumerate() {
        let k0 = utt.labels.get(u).copied().unwrap_or(eos);
        nll -= log_softmax(z)?[k0];
    }
    Ok(nll)
}

/// Greedy-decoding length budget for an utterance of `frames` frames.
pub fn decode_budget(frames: usize) -> usize {
    frames + 5
}

/// Mean held-out NLL and pooled greedy-decoding CER (percent).
pub fn evaluate(params: &ToyModelParams, heldout: &[Utterance], sos: usize, eos: usize, decode: bool) -> Result<(f64, f64)> {
    if heldout.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let mut nll = 0.0;
    let mut stats = EditStats::default();
    for u in heldout {
        nll += sequence_nll(params, u, sos, eos)?;
        if decode {
            let hyp = params.greedy_decode(&u.frames, decode_budget(u.frames.len()), sos, eos)?;
            stats = stats + edit_distance(&u.labels, &hyp);
        }
    }
    let cer = if decode {
        stats.cer().map_or(f64::NAN, |c| 100.0 * c)
    } else {
        f64::NAN
    };
    Ok((nll / heldout.len() as f64, cer))
}

fn diverged(e: Error, epoch: usize) -> Error {
    match e {
        Error::NonFinite(_) => Error::Diverged { epoch },
        e => e,
    }
}

fn global_norm(grads: &[Tensor]) -> f64 {
    grads.iter().flat_map(|g| &g.data).map(|x| x * x).sum::<f64>().sqrt()
}

/// Trains in place and returns one log row per epoch.
///
/// `priors[i]` are the smoothing distributions for `train[i]`.
#[allow(clippy::too_many_arguments)]
pub fn train(
    params: &mut ToyModelParams,
    train: &[Utterance],
    priors: &[Vec<SmoothingDistribution>],
    heldout: &[Utterance],
    config: &TrainConfig,
    sos: usize,
    eos: usize,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>> {
    config.validate()?;
    params.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if priors.len() != train.len() {
        return Err(Error::DimensionMismatch {
            expected: train.len(),
            got: priors.len(),
        });
    }
    let size = params.dims.vocab;
    let onehot: Vec<Vec<SmoothingDistribution>> = if config.onehot_epochs > 0 {
        train
            .iter()
            .map(|u| {
                u.labels
                    .iter()
                    .chain(std::iter::once(&eos))
                    .map(|&k| SmoothingDistribution::point_mass(size, k))
                    .collect()
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut velocity: Vec<Tensor> = params.tensors.iter().map(|t| Tensor::zeros(t.rows, t.cols)).collect();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let targets = if epoch <= config.onehot_epochs { &onehot } else { priors };
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let one = |&i: &usize| example_loss_and_grad(params, &train[i], &targets[i], config.beta, sos, eos);
            let results: Vec<Result<(f64, ParamGrads)>> = if config.parallel {
                batch.par_iter().map(one).collect()
            } else {
                batch.iter().map(one).collect()
            };
            let mut sum: Vec<Tensor> = params.tensors.iter().map(|t| Tensor::zeros(t.rows, t.cols)).collect();
            for r in results {
                let (loss, grads) = r.map_err(|e| diverged(e, epoch))?;
                if !loss.is_finite() {
                    return Err(Error::Diverged { epoch });
                }
                epoch_loss += loss;
                for (s, g) in sum.iter_mut().zip(&grads) {
                    for (a, b) in s.data.iter_mut().zip(&g.data) {
                        *a += b;
                    }
                }
            }
            let mut scale = 1.0 / batch.len() as f64;
            let norm = global_norm(&sum) * scale;
            if !norm.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            if config.clip_norm > 0.0 && norm > config.clip_norm {
                scale *= config.clip_norm / norm;
            }
            for ((p, v), g) in params.tensors.iter_mut().zip(&mut velocity).zip(&sum) {
                for ((x, m), d) in p.data.iter_mut().zip(&mut v.data).zip(&g.data) {
                    *m = config.momentum * *m - config.learning_rate * scale * d;
                    *x += *m;
                }
            }
        }
        if !params.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        let (heldout_loss, heldout_cer) =
            evaluate(params, heldout, sos, eos, !config.skip_heldout_cer).map_err(|e| diverged(e, epoch))?;
        let row = EpochLog {
            epoch,
            train_loss: epoch_loss / train.len() as f64,
            heldout_loss,
            heldout_cer,
        };
        on_epoch(&row);
        log.push(row);
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::model::ModelDims;

    fn tiny() -> (ToyModelParams, Utterance) {
        let dims = ModelDims {
            vocab: 6,
            input: 3,
            hidden: 5,
            embed: 3,
            attention: 4,
        };
        let u = Utterance {
            frames: vec![vec![0.5, -0.2, 0.1], vec![0.3, 0.9, -0.4], vec![-0.7, 0.2, 0.8]],
            labels: vec![4, 5],
        };
        (ToyModelParams::init(dims, 11), u)
    }

    fn point_priors(u: &Utterance, size: usize) -> Vec<SmoothingDistribution> {
        u.labels
            .iter()
            .chain([3].iter())
            .map(|&k| SmoothingDistribution::point_mass(size, k).unwrap())
            .collect()
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let (mut p, u) = tiny();
        let before = p.clone();
        let pri = vec![point_priors(&u, 6)];
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            ..Default::default()
        };
        train(&mut p, &[u], &pri, &[], &cfg, 2, 3, |_| {}).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn overfits_single_example() {
        let (mut p, u) = tiny();
        let pri = vec![point_priors(&u, 6)];
        let initial = sequence_nll(&p, &u, 2, 3).unwrap();
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 1,
            beta: 0.0,
            learning_rate: 0.05,
            skip_heldout_cer: true,
            ..Default::default()
        };
        let log = train(&mut p, &[u.clone()], &pri, &[], &cfg, 2, 3, |_| {}).unwrap();
        assert!(log.last().unwrap().train_loss < initial);
        assert_eq!(p.greedy_decode(&u.frames, 10, 2, 3).unwrap(), u.labels);
    }

    #[test]
    fn parallel_matches_sequential() {
        let (p0, u) = tiny();
        let mut v = u.clone();
        v.labels = vec![5, 5, 4];
        let data = vec![u.clone(), v.clone(), u, v];
        let pri: Vec<_> = data.iter().map(|x| point_priors(x, 6)).collect();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 3,
            ..Default::default()
        };
        let (mut a, mut b) = (p0.clone(), p0);
        let la = train(&mut a, &data, &pri, &data, &cfg, 2, 3, |_| {}).unwrap();
        let lb = train(&mut b, &data, &pri, &data, &TrainConfig { parallel: true, ..cfg }, 2, 3, |_| {}).unwrap();
        assert_eq!(a, b);
        assert_eq!(format_log(&la), format_log(&lb));
    }

    #[test]
    fn divergence_names_epoch() {
        let (mut p, u) = tiny();
        let pri = vec![point_priors(&u, 6)];
        let cfg = TrainConfig {
            learning_rate: 1e308,
            momentum: 0.0,
            clip_norm: 0.0,
            epochs: 5,
            ..Default::default()
        };
        match train(&mut p, &[u], &pri, &[], &cfg, 2, 3, |_| {}) {
            Err(Error::Diverged { epoch }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn log_format() {
        let s = format_log(&[EpochLog {
            epoch: 1,
            train_loss: 1.5,
            heldout_loss: 2.0,
            heldout_cer: 12.5,
        }]);
        assert_eq!(s, "epoch,train_loss,heldout_loss,heldout_cer\n1,1.50000000,2.00000000,12.50000000\n");
    }
}
