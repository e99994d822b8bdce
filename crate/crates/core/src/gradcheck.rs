//! Analytic gradients against central finite differences.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::loss::ls_loss;
use crate::prior::{homophone_prior, SmoothingDistribution};
use crate::toy::autodiff::{NodeId, Tape, Tensor};
use crate::toy::data::Utterance;
use crate::toy::model::{ModelDims, ToyModelParams, PARAM_NAMES};
use crate::toy::train::example_loss_and_grad;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheck {
    pub name: String,
    /// `|analytic - numeric| / max(|analytic|, |numeric|)` in the 2-norm,
    /// maximized over the checked tensors.
    pub rel_error: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, b)| a - b));
    let scale = norm(&mut analytic.iter().copied()).max(norm(&mut numeric.iter().copied()));
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// Central differences of `f` with respect to every entry of `inputs[i]`.
pub fn numeric_gradient(inputs: &[Tensor], i: usize, f: &dyn Fn(&[Tensor]) -> Result<f64>) -> Result<Vec<f64>> {
    let mut work = inputs.to_vec();
    let mut g = Vec::with_capacity(inputs[i].len());
    for j in 0..inputs[i].len() {
        let x = work[i].data[j];
        work[i].data[j] = x + STEP;
        let up = f(&work)?;
        work[i].data[j] = x - STEP;
        let down = f(&work)?;
        work[i].data[j] = x;
        g.push((up - down) / (2.0 * STEP));
    }
    Ok(g)
}

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
}

type Graph<'a> = dyn Fn(&mut Tape, &[NodeId]) -> Result<NodeId> + 'a;

/// Reduces any node to a scalar with fixed random weights.
fn project(tape: &mut Tape, x: NodeId, weights: &(Tensor, Tensor)) -> NodeId {
    let (rows, cols) = tape.value(x).shape();
    let v = if cols == 1 {
        x
    } else {
        let a = tape.leaf(Tensor::vector(weights.0.data[..rows].to_vec()));
        tape.vecmat(a, x)
    };
    let n = tape.value(v).rows;
    let r = tape.leaf(Tensor::from_vec(1, n, weights.1.data[..n].to_vec()));
    tape.matvec(r, v)
}

fn check_graph(name: &str, inputs: Vec<Tensor>, graph: &Graph) -> Result<GradCheck> {
    let eval = |xs: &[Tensor]| -> Result<(Tape, NodeId)> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = xs.iter().enumerate().map(|(i, t)| tape.param(i, t.clone())).collect();
        let root = graph(&mut tape, &ids)?;
        Ok((tape, root))
    };
    let (tape, root) = eval(&inputs)?;
    let analytic = tape.backward(root)?;
    let f = |xs: &[Tensor]| -> Result<f64> {
        let (t, r) = eval(xs)?;
        Ok(t.value(r).data[0])
    };
    let mut worst: f64 = 0.0;
    for (i, a) in analytic.iter().enumerate() {
        let numeric = numeric_gradient(&inputs, i, &f)?;
        let a = if a.is_empty() { vec![0.0; numeric.len()] } else { a.data.clone() };
        worst = worst.max(relative_error(&a, &numeric));
    }
    Ok(GradCheck {
        name: name.into(),
        rel_error: worst,
        passed: worst <= TOLERANCE,
    })
}

/// One check per tape operation.
pub fn check_ops(seed: u64) -> Result<Vec<GradCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = (random_tensor(&mut rng, 8, 1), random_tensor(&mut rng, 8, 1));
    let mut t = |r, c| random_tensor(&mut rng, r, c);
    let prior = homophone_prior(2, &BTreeSet::from([5]), 8)?;
    let (a34, v4, a24, b45, v3, m35, v5a, v5b, m43, m23, v8) =
        (t(3, 4), t(4, 1), t(2, 4), t(4, 5), t(3, 1), t(3, 5), t(5, 1), t(5, 1), t(4, 3), t(2, 3), t(8, 1));
    let w = &w;
    let prior = &prior;
    let cases: Vec<(&str, Vec<Tensor>, Box<Graph<'_>>)> = vec![
        ("matvec", vec![a34, v4.clone()], Box::new(move |tp, x| {
            let y = tp.matvec(x[0], x[1]);
            Ok(project(tp, y, w))
        })),
        ("matmul", vec![a24, b45], Box::new(move |tp, x| {
            let y = tp.matmul(x[0], x[1]);
            Ok(project(tp, y, w))
        })),
        ("vecmat", vec![v3.clone(), m35.clone()], Box::new(move |tp, x| {
            let y = tp.vecmat(x[0], x[1]);
            Ok(project(tp, y, w))
        })),
        ("add", vec![v5a.clone(), v5b.clone()], Box::new(move |tp, x| {
            let y = tp.add(x[0], x[1]);
            Ok(project(tp, y, w))
        })),
        ("add_rows", vec![m35, v5a.clone()], Box::new(move |tp, x| {
            let y = tp.add_rows(x[0], x[1]);
            Ok(project(tp, y, w))
        })),
        ("tanh", vec![v5a.clone()], Box::new(move |tp, x| {
            let y = tp.tanh(x[0]);
            Ok(project(tp, y, w))
        })),
        ("softmax", vec![v5b.clone()], Box::new(move |tp, x| {
            let y = tp.softmax(x[0]);
            Ok(project(tp, y, w))
        })),
        ("concat", vec![v3.clone(), v4.clone()], Box::new(move |tp, x| {
            let y = tp.concat(&[x[0], x[1]]);
            Ok(project(tp, y, w))
        })),
        ("row", vec![m43], Box::new(move |tp, x| {
            let y = tp.row(x[0], 2);
            Ok(project(tp, y, w))
        })),
        ("stack", vec![m23, v3.clone()], Box::new(move |tp, x| {
            let a = tp.row(x[0], 0);
            let y = tp.stack(&[x[1], a, x[1]]);
            Ok(project(tp, y, w))
        })),
        ("ls_head", vec![v8], Box::new(move |tp, x| tp.ls_head(x[0], 2, prior, 0.4))),
        ("sum", vec![v5a, v5b], Box::new(move |tp, x| {
            let a = tp.tanh(x[0]);
            let a = project(tp, a, w);
            let b = project(tp, x[1], w);
            Ok(tp.sum(&[a, b, a]))
        })),
    ];
    cases.into_iter().map(|(name, inputs, g)| check_graph(name, inputs, g.as_ref())).collect()
}

/// Dimensions of the end-to-end check.
pub fn tiny_dims() -> ModelDims {
    ModelDims {
        vocab: 8,
        input: 3,
        hidden: 4,
        embed: 3,
        attention: 4,
    }
}

/// Sequence loss recomputed from plain forward values.
pub fn reference_sequence_loss(
    params: &ToyModelParams,
    utt: &Utterance,
    priors: &[SmoothingDistribution],
    beta: f64,
    sos: usize,
    eos: usize,
) -> Result<f64> {
    let logits = params.forward_teacher_forced(&utt.frames, &utt.labels, sos)?;
    let mut total = 0.0;
    for (u, z) in logits.iter().enumerate() {
        let k0 = utt.labels.get(u).copied().unwrap_or(eos);
        total += ls_loss(z, k0, &priors[u], beta)?;
    }
    Ok(total)
}

/// Full-model gradient of the sequence loss, one result per parameter tensor.
pub fn check_model(seed: u64) -> Result<Vec<GradCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = tiny_dims();
    let mut params = ToyModelParams::init(dims, seed);
    for t in params.tensors.iter_mut() {
        for x in t.data.iter_mut() {
            *x += rng.random_range(-0.3..0.3);
        }
    }
    let (sos, eos) = (2, 3);
    let utt = Utterance {
        frames: (0..3).map(|_| (0..dims.input).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
        labels: vec![4, 6],
    };
    let priors = vec![
        homophone_prior(4, &BTreeSet::from([5]), dims.vocab)?,
        homophone_prior(6, &BTreeSet::from([4, 7]), dims.vocab)?,
        SmoothingDistribution::point_mass(dims.vocab, eos)?,
    ];
    let beta = 0.4;
    let (_, analytic) = example_loss_and_grad(&params, &utt, &priors, beta, sos, eos)?;
    let f = |xs: &[Tensor]| {
        let p = ToyModelParams { dims, tensors: xs.to_vec() };
        reference_sequence_loss(&p, &utt, &priors, beta, sos, eos)
    };
    let mut out = Vec::with_capacity(analytic.len());
    for (i, a) in analytic.iter().enumerate() {
        let numeric = numeric_gradient(&params.tensors, i, &f)?;
        let e = relative_error(&a.data, &numeric);
        out.push(GradCheck {
            name: format!("model.{}", PARAM_NAMES[i]),
            rel_error: e,
            passed: e <= TOLERANCE,
        });
    }
    Ok(out)
}

/// Per-op and end-to-end checks.
pub fn run_gradchecks(seed: u64) -> Result<Vec<GradCheck>> {
    let mut all = check_ops(seed)?;
    all.extend(check_model(seed)?);
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_pass() {
        for c in run_gradchecks(3).unwrap() {
            assert!(c.passed, "{} {}", c.name, c.rel_error);
        }
    }

    #[test]
    fn relative_error_basics() {
        assert_eq!(relative_error(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
        assert!((relative_error(&[2.0], &[1.0]) - 0.5).abs() < 1e-15);
        assert_eq!(relative_error(&[0.0], &[0.0]), 0.0);
    }
}
