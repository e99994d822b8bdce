//! One training run on a synthetic language, end to end.

use serde::{Deserialize, Serialize};

use super::data::{ToyDataset, Utterance};
use super::model::{ModelDims, ToyModelParams};
use super::probe::{probe_homophone_gap, GapStats};
use super::train::{train, EpochLog, TrainConfig};
use crate::error::Result;
use crate::homophone::{FuzzyRules, HomophoneIndex};
use crate::lexicon::{Lexicon, ToneMode, Vocabulary};
use crate::ngram::{count_unigrams, train_bigram, Smoothing};
use crate::prior::{unigram_prior, PriorBuilder, PriorResources, SmoothingDistribution, StrategyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden: usize,
    pub embed: usize,
    pub attention: usize,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 64,
            embed: 8,
            attention: 16,
            init_seed: 1,
        }
    }
}

impl ModelConfig {
    pub fn dims(&self, vocab: usize, input: usize) -> ModelDims {
        ModelDims {
            vocab,
            input,
            hidden: self.hidden,
            embed: self.embed,
            attention: self.attention,
        }
    }
}

/// Priors for every utterance: one per label plus the EOS position. Each
/// character is pronounced with its first reading in `index`.
pub fn utterance_priors(builder: &PriorBuilder<'_>, utts: &[Utterance], index: &HomophoneIndex, sos: usize) -> Result<Vec<Vec<SmoothingDistribution>>> {
    utts.iter()
        .map(|u| {
            let syllables: Vec<_> = u.labels.iter().map(|&k| index.readings(k).first().cloned()).collect();
            builder.build_for_pronounced(&u.labels, &syllables, sos)
        })
        .collect()
}

/// Vocabulary, lexicon and splits of one toy corpus.
#[derive(Debug, Clone, Copy)]
pub struct ToyCorpus<'a> {
    pub vocabulary: &'a Vocabulary,
    pub lexicon: &'a Lexicon,
    pub dataset: &'a ToyDataset,
}

impl<'a> ToyCorpus<'a> {
    pub fn train_text(&self) -> Vec<String> {
        self.dataset
            .train
            .iter()
            .map(|u| self.vocabulary.decode(&u.labels))
            .collect()
    }
}

/// Language-model resources estimated from the training split.
pub struct ToyResources {
    pub index: HomophoneIndex,
    pub unigram: SmoothingDistribution,
    pub bigram: crate::ngram::BigramLM,
    pub fuzzy_rules: FuzzyRules,
}

impl ToyResources {
    pub fn estimate(corpus: ToyCorpus<'_>, tone_mode: ToneMode, fuzzy_rules: FuzzyRules, smoothing: Smoothing) -> Result<Self> {
        let text = corpus.train_text();
        Ok(ToyResources {
            index: HomophoneIndex::build(corpus.lexicon, corpus.vocabulary, tone_mode),
            unigram: unigram_prior(&count_unigrams(&text, corpus.vocabulary)?),
            bigram: train_bigram(&text, corpus.vocabulary, smoothing)?,
            fuzzy_rules,
        })
    }

    pub fn builder(&self, vocabulary: &Vocabulary, strategy: StrategyConfig) -> Result<PriorBuilder<'_>> {
        let specials = vocabulary.specials();
        PriorBuilder::new(
            strategy,
            PriorResources {
                vocab_size: vocabulary.len(),
                eos: specials.eos,
                unigram: Some(&self.unigram),
                bigram: Some(&self.bigram),
                index: Some(&self.index),
                fuzzy_rules: Some(&self.fuzzy_rules),
            },
        )
    }
}

#[derive(Debug, Clone)]
pub struct ToyRun {
    pub params: ToyModelParams,
    pub log: Vec<EpochLog>,
    pub probe: GapStats,
}

/// Trains one strategy from a fresh initialization and probes the held-out split.
pub fn run_strategy(
    corpus: ToyCorpus<'_>,
    resources: &ToyResources,
    strategy: StrategyConfig,
    model: &ModelConfig,
    config: &TrainConfig,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<ToyRun> {
    let specials = corpus.vocabulary.specials();
    let builder = resources.builder(corpus.vocabulary, strategy)?;
    let data = corpus.dataset;
    let priors = utterance_priors(&builder, &data.train, &resources.index, specials.sos)?;
    let input = data.train.first().map_or(0, |u| u.frames[0].len());
    let mut params = ToyModelParams::init(model.dims(corpus.vocabulary.len(), input), model.init_seed);
    let log = train(&mut params, &data.train, &priors, &data.heldout, config, specials.sos, specials.eos, on_epoch)?;
    let probe = probe_homophone_gap(&params, &data.heldout, &resources.index, specials.sos)?;
    Ok(ToyRun { params, log, probe })
}
