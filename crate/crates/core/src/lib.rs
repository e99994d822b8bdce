//! Homophone-aware label smoothing for character-level sequence models.
//!
//! The crate builds smoothing distributions that put extra mass on the
//! homophones of each ground-truth character, trains a small attention
//! encoder-decoder with them, and evaluates by character error rate.

pub mod cli;
pub mod config;
pub mod error;
pub mod gradcheck;
pub mod homophone;
pub mod lexicon;
pub mod loss;
pub mod metrics;
pub mod ngram;
pub mod prior;
pub mod toy;

pub use error::{Error, Result};
pub use homophone::{build_homophone_index, fuzzy_neighbors, FuzzyRules, HomophoneIndex};
pub use lexicon::{build_vocabulary, parse_lexicon, pronounce_sentence, Lexicon, Syllable, ToneMode, Vocabulary};
pub use loss::{kl_divergence, ls_loss, ls_loss_grad, mixed_target, LossConfig};
pub use metrics::{corpus_cer, edit_distance, EditStats};
pub use ngram::{import_arpa, train_bigram, BigramLM, ContextModel, Smoothing, UnigramDistribution};
pub use prior::{
    fuzzy_homophone_prior, homophone_prior, uniform_prior, unigram_prior, PriorBuilder, PriorResources,
    SmoothingDistribution, StrategyConfig, StrategyKind,
};
