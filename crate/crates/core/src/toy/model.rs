//! A one-layer attention encoder-decoder.
//!
//! ```text
//! encoder  h_t = tanh(Wx x_t + Wh h_{t-1} + b)                  h_0 = 0
//! attend   e_t = v . tanh(Ua h_t + Wa s_{u-1} + ba)             alpha = softmax(e)
//!          a_u = sum_t alpha_t h_t
//! decoder  s_u = tanh(Dx [emb(c_{u-1}); a_u] + Dh s_{u-1} + db) s_0 = 0
//! output   logits_u = O [s_u; a_u] + ob
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::autodiff::{NodeId, Tape, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub vocab: usize,
    pub input: usize,
    pub hidden: usize,
    pub embed: usize,
    pub attention: usize,
}

/// Parameter ids, in checkpoint order.
pub mod pid {
    pub const EMBED: usize = 0;
    pub const ENC_WX: usize = 1;
    pub const ENC_WH: usize = 2;
    pub const ENC_B: usize = 3;
    pub const ATT_U: usize = 4;
    pub const ATT_W: usize = 5;
    pub const ATT_B: usize = 6;
    pub const ATT_V: usize = 7;
    pub const DEC_WX: usize = 8;
    pub const DEC_WH: usize = 9;
    pub const DEC_B: usize = 10;
    pub const OUT_W: usize = 11;
    pub const OUT_B: usize = 12;
    pub const COUNT: usize = 13;
}

pub const PARAM_NAMES: [&str; pid::COUNT] = [
    "embed", "enc_wx", "enc_wh", "enc_b", "att_u", "att_w", "att_b", "att_v", "dec_wx", "dec_wh",
    "dec_b", "out_w", "out_b",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModelParams {
    pub dims: ModelDims,
    pub tensors: Vec<Tensor>,
}

impl ToyModelParams {
    pub fn shapes(d: &ModelDims) -> [(usize, usize); pid::COUNT] {
        [
            (d.vocab, d.embed),
            (d.hidden, d.input),
            (d.hidden, d.hidden),
            (d.hidden, 1),
            (d.hidden, d.attention),
            (d.attention, d.hidden),
            (d.attention, 1),
            (d.attention, 1),
            (d.hidden, d.embed + d.hidden),
            (d.hidden, d.hidden),
            (d.hidden, 1),
            (d.vocab, 2 * d.hidden),
            (d.vocab, 1),
        ]
    }

    pub fn zeros(dims: ModelDims) -> Self {
        let tensors = Self::shapes(&dims).iter().map(|&(r, c)| Tensor::zeros(r, c)).collect();
        ToyModelParams { dims, tensors }
    }

    /// Uniform in `±1/sqrt(fan_in)`; biases start at zero.
    pub fn init(dims: ModelDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(dims);
        for (i, t) in p.tensors.iter_mut().enumerate() {
            if matches!(i, pid::ENC_B | pid::ATT_B | pid::DEC_B | pid::OUT_B) {
                continue;
            }
            let scale = match i {
                pid::EMBED => 0.5,
                pid::ATT_V => 1.0 / (t.rows as f64).sqrt(),
                _ => 1.0 / (t.cols as f64).sqrt(),
            };
            for x in t.data.iter_mut() {
                *x = rng.random_range(-scale..scale);
            }
        }
        p
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    pub fn validate(&self) -> Result<()> {
        let shapes = Self::shapes(&self.dims);
        if self.tensors.len() != shapes.len() {
            return Err(Error::InvalidArgument("wrong number of parameter tensors".into()));
        }
        for ((t, s), name) in self.tensors.iter().zip(shapes).zip(PARAM_NAMES) {
            if t.shape() != s {
                return Err(Error::InvalidArgument(format!("{name} has shape {:?}, expected {s:?}", t.shape())));
            }
        }
        if !self.is_finite() {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(())
    }
}

/// Parameter nodes of one tape.
#[derive(Debug, Clone)]
pub struct ParamNodes(pub Vec<NodeId>);

impl ParamNodes {
    pub fn load(tape: &mut Tape, params: &ToyModelParams) -> Self {
        ParamNodes(
            params
                .tensors
                .iter()
                .enumerate()
                .map(|(i, t)| tape.param(i, t.clone()))
                .collect(),
        )
    }

    fn get(&self, id: usize) -> NodeId {
        self.0[id]
    }
}

/// Encoder output with the attention key projection precomputed.
#[derive(Debug, Clone)]
pub struct EncoderStates {
    /// `T x H`.
    pub states: NodeId,
    /// `T x A`, `states * att_u`.
    pub keys: NodeId,
    pub steps: Vec<NodeId>,
}

#[derive(Debug, Clone)]
pub struct DecoderStep {
    pub state: NodeId,
    pub context: NodeId,
    pub attention: NodeId,
    pub logits: NodeId,
}

pub fn encode_on(tape: &mut Tape, p: &ParamNodes, dims: &ModelDims, frames: &[Vec<f64>]) -> Result<EncoderStates> {
    if frames.is_empty() {
        return Err(Error::InvalidArgument("empty input frames".into()));
    }
    let mut h = tape.leaf(Tensor::zeros(dims.hidden, 1));
    let mut steps = Vec::with_capacity(frames.len());
    for f in frames {
        if f.len() != dims.input {
            return Err(Error::DimensionMismatch {
                expected: dims.input,
                got: f.len(),
            });
        }
        let x = tape.leaf(Tensor::vector(f.clone()));
        let a = tape.matvec(p.get(pid::ENC_WX), x);
        let b = tape.matvec(p.get(pid::ENC_WH), h);
        let s = tape.add(a, b);
        let s = tape.add(s, p.get(pid::ENC_B));
        h = tape.tanh(s);
        steps.push(h);
    }
    let states = tape.stack(&steps);
    let keys = tape.matmul(states, p.get(pid::ATT_U));
    Ok(EncoderStates { states, keys, steps })
}

pub fn decode_step_on(tape: &mut Tape, p: &ParamNodes, s_prev: NodeId, prev_char: usize, enc: &EncoderStates) -> DecoderStep {
    let q = tape.matvec(p.get(pid::ATT_W), s_prev);
    let q = tape.add(q, p.get(pid::ATT_B));
    let pre = tape.add_rows(enc.keys, q);
    let act = tape.tanh(pre);
    let scores = tape.matvec(act, p.get(pid::ATT_V));
    let attention = tape.softmax(scores);
    let context = tape.vecmat(attention, enc.states);

    let emb = tape.row(p.get(pid::EMBED), prev_char);
    let x = tape.concat(&[emb, context]);
    let a = tape.matvec(p.get(pid::DEC_WX), x);
    let b = tape.matvec(p.get(pid::DEC_WH), s_prev);
    let s = tape.add(a, b);
    let s = tape.add(s, p.get(pid::DEC_B));
    let state = tape.tanh(s);

    let o = tape.concat(&[state, context]);
    let logits = tape.matvec(p.get(pid::OUT_W), o);
    let logits = tape.add(logits, p.get(pid::OUT_B));
    DecoderStep {
        state,
        context,
        attention,
        logits,
    }
}

/// Teacher-forced decoder steps for `labels` followed by EOS: `labels.len() + 1` steps.
pub fn forward_on(
    tape: &mut Tape,
    p: &ParamNodes,
    dims: &ModelDims,
    frames: &[Vec<f64>],
    labels: &[usize],
    sos: usize,
) -> Result<Vec<DecoderStep>> {
    if let Some(&bad) = labels.iter().find(|&&k| k >= dims.vocab) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            size: dims.vocab,
        });
    }
    let enc = encode_on(tape, p, dims, frames)?;
    let mut s = tape.leaf(Tensor::zeros(dims.hidden, 1));
    let mut prev = sos;
    let mut out = Vec::with_capacity(labels.len() + 1);
    for u in 0..=labels.len() {
        let step = decode_step_on(tape, p, s, prev, &enc);
        s = step.state;
        if u < labels.len() {
            prev = labels[u];
        }
        out.push(step);
    }
    Ok(out)
}

/// Plain-value view of one decoder step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepValues {
    pub state: Vec<f64>,
    pub context: Vec<f64>,
    pub attention: Vec<f64>,
    pub logits: Vec<f64>,
}

impl StepValues {
    fn read(tape: &Tape, s: &DecoderStep) -> Self {
        StepValues {
            state: tape.value(s.state).data.clone(),
            context: tape.value(s.context).data.clone(),
            attention: tape.value(s.attention).data.clone(),
            logits: tape.value(s.logits).data.clone(),
        }
    }
}

impl ToyModelParams {
    /// Encoder hidden states, one per frame.
    pub fn encode(&self, frames: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let p = ParamNodes::load(&mut tape, self);
        let enc = encode_on(&mut tape, &p, &self.dims, frames)?;
        Ok(enc.steps.iter().map(|&h| tape.value(h).data.clone()).collect())
    }

    /// One decoder step from explicit encoder states.
    pub fn decode_step(&self, s_prev: &[f64], prev_char: usize, encoder_states: &[Vec<f64>]) -> Result<StepValues> {
        if encoder_states.is_empty() {
            return Err(Error::InvalidArgument("no encoder states".into()));
        }
        if s_prev.len() != self.dims.hidden || encoder_states.iter().any(|h| h.len() != self.dims.hidden) {
            return Err(Error::DimensionMismatch {
                expected: self.dims.hidden,
                got: s_prev.len(),
            });
        }
        if prev_char >= self.dims.vocab {
            return Err(Error::IndexOutOfRange {
                index: prev_char,
                size: self.dims.vocab,
            });
        }
        let mut tape = Tape::new();
        let p = ParamNodes::load(&mut tape, self);
        let steps: Vec<NodeId> = encoder_states.iter().map(|h| tape.leaf(Tensor::vector(h.clone()))).collect();
        let states = tape.stack(&steps);
        let keys = tape.matmul(states, p.get(pid::ATT_U));
        let enc = EncoderStates { states, keys, steps };
        let s = tape.leaf(Tensor::vector(s_prev.to_vec()));
        let step = decode_step_on(&mut tape, &p, s, prev_char, &enc);
        Ok(StepValues::read(&tape, &step))
    }

    /// Per-position logits under teacher forcing, EOS position last.
    pub fn forward_teacher_forced(&self, frames: &[Vec<f64>], labels: &[usize], sos: usize) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .forward_steps(frames, labels, sos)?
            .into_iter()
            .map(|s| s.logits)
            .collect())
    }

    pub fn forward_steps(&self, frames: &[Vec<f64>], labels: &[usize], sos: usize) -> Result<Vec<StepValues>> {
        let mut tape = Tape::new();
        let p = ParamNodes::load(&mut tape, self);
        let steps = forward_on(&mut tape, &p, &self.dims, frames, labels, sos)?;
        Ok(steps.iter().map(|s| StepValues::read(&tape, s)).collect())
    }

    /// Argmax decoding fed by its own predictions. Stops at `eos` (not
    /// emitted) or after `max_len` characters. Ties go to the lower index.
    pub fn greedy_decode(&self, frames: &[Vec<f64>], max_len: usize, sos: usize, eos: usize) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        if max_len == 0 {
            return Ok(out);
        }
        let mut tape = Tape::new();
        let p = ParamNodes::load(&mut tape, self);
        let enc = encode_on(&mut tape, &p, &self.dims, frames)?;
        let mut s = tape.leaf(Tensor::zeros(self.dims.hidden, 1));
        let mut prev = sos;
        while out.len() < max_len {
            let step = decode_step_on(&mut tape, &p, s, prev, &enc);
            let logits = &tape.value(step.logits).data;
            let best = argmax(logits);
            if best == eos {
                break;
            }
            out.push(best);
            prev = best;
            s = step.state;
        }
        Ok(out)
    }
}

/// First index of the maximum.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
