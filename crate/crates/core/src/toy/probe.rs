//! How much probability a model leaves on the homophones of the truth.

use std::collections::BTreeSet;

use serde::Serialize;

use super::data::Utterance;
use super::model::ToyModelParams;
use crate::error::{Error, Result};
use crate::homophone::HomophoneIndex;
use crate::loss::log_softmax;

/// Measurements at one position whose truth has homophones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PositionGap {
    pub truth_prob: f64,
    /// Total probability of the homophone set, excluding the truth.
    pub homophone_mass: f64,
    /// `log p(truth) - max over homophones of log p`.
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapStats {
    pub positions: usize,
    pub truth_prob: Summary,
    pub homophone_mass: Summary,
    pub gap: Summary,
}

pub fn position_gap(logp: &[f64], k0: usize, homophones: &BTreeSet<usize>) -> Result<PositionGap> {
    if homophones.is_empty() {
        return Err(Error::NoHomophones);
    }
    let max_homo = homophones
        .iter()
        .map(|&k| logp[k])
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(PositionGap {
        truth_prob: logp[k0].exp(),
        homophone_mass: homophones.iter().map(|&k| logp[k].exp()).sum(),
        gap: logp[k0] - max_homo,
    })
}

/// Mean and median; the median of an even count averages the middle pair.
pub fn summarize(values: &[f64]) -> Summary {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    };
    Summary {
        mean: values.iter().sum::<f64>() / n as f64,
        median,
    }
}

pub fn summarize_gaps(gaps: &[PositionGap]) -> Result<GapStats> {
    if gaps.is_empty() {
        return Err(Error::InvalidArgument("no positions with homophones".into()));
    }
    let col = |f: fn(&PositionGap) -> f64| summarize(&gaps.iter().map(f).collect::<Vec<_>>());
    Ok(GapStats {
        positions: gaps.len(),
        truth_prob: col(|g| g.truth_prob),
        homophone_mass: col(|g| g.homophone_mass),
        gap: col(|g| g.gap),
    })
}

/// Homophones of `k0` under any of its readings.
fn homophones_of(index: &HomophoneIndex, k0: usize) -> BTreeSet<usize> {
    index
        .readings(k0)
        .iter()
        .flat_map(|s| index.homophones(k0, s))
        .collect()
}

/// Per-position measurements under teacher forcing, in dataset order.
pub fn probe_positions(params: &ToyModelParams, utts: &[Utterance], index: &HomophoneIndex, sos: usize) -> Result<Vec<PositionGap>> {
    let mut out = Vec::new();
    for u in utts {
        let logits = params.forward_teacher_forced(&u.frames, &u.labels, sos)?;
        for (z, &k0) in logits.iter().zip(&u.labels) {
            let homo = homophones_of(index, k0);
            if homo.is_empty() {
                continue;
            }
            out.push(position_gap(&log_softmax(z)?, k0, &homo)?);
        }
    }
    Ok(out)
}

/// Gap statistics over every labelled position whose truth has homophones.
pub fn probe_homophone_gap(params: &ToyModelParams, utts: &[Utterance], index: &HomophoneIndex, sos: usize) -> Result<GapStats> {
    summarize_gaps(&probe_positions(params, utts, index, sos)?)
}
