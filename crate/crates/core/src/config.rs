//! Flat JSON experiment configuration.
//!
//! Every field has a default. A config file may set any subset of fields,
//! and `--key value` flags override both. Values are parsed as JSON and fall
//! back to plain strings, so `--beta 0.2`, `--parallel true` and
//! `--strategy homo_fuzzy` all work. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::lexicon::ToneMode;
use crate::ngram::Smoothing;
use crate::prior::{FuzzyMasses, HomoMasses, StrategyConfig, StrategyKind};
use crate::toy::{ModelConfig, SyntheticLanguageConfig, TrainConfig};

pub const SEED_ENV: &str = "HOMOSMOOTH_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub fuzzy_rules: Option<PathBuf>,
    pub arpa: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Reference and hypothesis files for `eval-cer`.
    pub reference: Option<PathBuf>,
    pub hypothesis: Option<PathBuf>,

    pub min_count: usize,
    /// `add_k` or `interpolated`.
    pub lm_smoothing: String,
    pub lm_k: f64,
    pub lm_lambda: f64,

    pub strategy: String,
    /// Strategies trained by `sweep`.
    pub strategies: Vec<String>,
    pub tone_mode: ToneMode,
    pub homo_truth: f64,
    pub homo_homo: f64,
    pub homo_other: f64,
    pub fuzzy_truth: f64,
    pub fuzzy_homo: f64,
    pub fuzzy_simi: f64,
    pub fuzzy_other: f64,
    pub beta: f64,

    pub hidden: usize,
    pub embed: usize,
    pub attention: usize,

    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub clip_norm: f64,
    pub parallel: bool,
    pub onehot_epochs: usize,

    pub num_classes: usize,
    pub class_size_weights: [f64; 4],
    pub frame_dim: usize,
    pub frames_min: usize,
    pub frames_max: usize,
    pub noise_sigma: f64,
    pub transition_temperature: f64,
    pub choice_skew: f64,
    pub context_preference: bool,
    pub sentence_min: usize,
    pub sentence_max: usize,
    pub num_train: usize,
    pub num_heldout: usize,

    pub seed: Option<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let homo = HomoMasses::default();
        let fuzzy = FuzzyMasses::default();
        let model = ModelConfig::default();
        let train = TrainConfig::default();
        let lang = SyntheticLanguageConfig::default();
        ExperimentConfig {
            corpus: None,
            vocab: None,
            lexicon: None,
            fuzzy_rules: None,
            arpa: None,
            out_dir: PathBuf::from("experiment"),
            reference: None,
            hypothesis: None,
            min_count: 1,
            lm_smoothing: "add_k".into(),
            lm_k: 0.01,
            lm_lambda: 0.9,
            strategy: StrategyKind::HomoUnigram.name().into(),
            strategies: StrategyKind::ALL.iter().map(|k| k.name().to_string()).collect(),
            tone_mode: ToneMode::Sensitive,
            homo_truth: homo.truth,
            homo_homo: homo.homo,
            homo_other: homo.other,
            fuzzy_truth: fuzzy.truth,
            fuzzy_homo: fuzzy.homo,
            fuzzy_simi: fuzzy.simi,
            fuzzy_other: fuzzy.other,
            beta: train.beta,
            hidden: model.hidden,
            embed: model.embed,
            attention: model.attention,
            epochs: train.epochs,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            momentum: train.momentum,
            clip_norm: train.clip_norm,
            parallel: train.parallel,
            onehot_epochs: train.onehot_epochs,
            num_classes: lang.num_classes,
            class_size_weights: lang.class_size_weights,
            frame_dim: lang.frame_dim,
            frames_min: lang.frames_per_char.0,
            frames_max: lang.frames_per_char.1,
            noise_sigma: lang.noise_sigma,
            transition_temperature: lang.transition_temperature,
            choice_skew: lang.choice_skew,
            context_preference: lang.context_preference,
            sentence_min: lang.sentence_len.0,
            sentence_max: lang.sentence_len.1,
            num_train: lang.num_train,
            num_heldout: lang.num_heldout,
            seed: None,
        }
    }
}

/// Splits `--key value`, `--key=value` and bare `--flag` arguments.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, Value)>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < args.len() {
        let Some(key) = args[i].strip_prefix("--") else {
            return Err(Error::Config(format!("unexpected argument {:?}", args[i])));
        };
        let (key, raw) = match key.split_once('=') {
            Some((k, v)) => (k, Some(v.to_string())),
            None if i + 1 < args.len() && !args[i + 1].starts_with("--") => {
                i += 1;
                (key, Some(args[i].clone()))
            }
            None => (key, None),
        };
        let value = match raw {
            None => Value::Bool(true),
            Some(r) => serde_json::from_str(&r).unwrap_or(Value::String(r)),
        };
        out.push((key.replace('-', "_"), value));
        i += 1;
    }
    Ok(out)
}

impl ExperimentConfig {
    /// Defaults, then the optional file, then the overrides.
    pub fn load(file: Option<&Path>, overrides: &[(String, Value)]) -> Result<Self> {
        let mut merged = match serde_json::to_value(Self::default()).expect("defaults serialize") {
            Value::Object(m) => m,
            _ => unreachable!(),
        };
        let mut apply = |m: Map<String, Value>| -> Result<()> {
            for (k, v) in m {
                if !merged.contains_key(&k) {
                    return Err(Error::Config(format!("unknown key {k:?}")));
                }
                merged.insert(k, v);
            }
            Ok(())
        };
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            match serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))? {
                Value::Object(m) => apply(m)?,
                _ => return Err(Error::parse(path, 1, "config must be a JSON object")),
            }
        }
        apply(overrides.iter().cloned().collect())?;
        serde_json::from_value(Value::Object(merged)).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config(format!("beta {} must lie in [0, 1]", self.beta)));
        }
        self.homo_masses().validate()?;
        self.fuzzy_masses().validate()?;
        StrategyKind::parse(&self.strategy)?;
        for s in &self.strategies {
            StrategyKind::parse(s)?;
        }
        self.smoothing()?.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.language(0).validate()?;
        self.train_config(0).validate()?;
        if self.hidden == 0 || self.embed == 0 || self.attention == 0 {
            return Err(Error::Config("model sizes must be positive".into()));
        }
        for p in [&self.corpus, &self.vocab, &self.lexicon, &self.fuzzy_rules, &self.arpa, &self.reference, &self.hypothesis]
            .into_iter()
            .flatten()
        {
            if !p.exists() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// The configured seed, else `HOMOSMOOTH_SEED`.
    pub fn resolve_seed(&self) -> Result<u64> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
            Err(_) => Err(Error::Config(format!("a seed is required: set `seed` or {SEED_ENV}"))),
        }
    }

    pub fn homo_masses(&self) -> HomoMasses {
        HomoMasses {
            truth: self.homo_truth,
            homo: self.homo_homo,
            other: self.homo_other,
        }
    }

    pub fn fuzzy_masses(&self) -> FuzzyMasses {
        FuzzyMasses {
            truth: self.fuzzy_truth,
            homo: self.fuzzy_homo,
            simi: self.fuzzy_simi,
            other: self.fuzzy_other,
        }
    }

    pub fn strategy_config(&self, kind: StrategyKind) -> StrategyConfig {
        StrategyConfig {
            kind,
            homo_masses: self.homo_masses(),
            fuzzy_masses: self.fuzzy_masses(),
            tone_mode: self.tone_mode,
        }
    }

    pub fn strategy_kind(&self) -> Result<StrategyKind> {
        StrategyKind::parse(&self.strategy)
    }

    pub fn smoothing(&self) -> Result<Smoothing> {
        match self.lm_smoothing.as_str() {
            "add_k" => Ok(Smoothing::AddK(self.lm_k)),
            "interpolated" => Ok(Smoothing::Interpolated(self.lm_lambda)),
            other => Err(Error::Config(format!("unknown lm_smoothing {other:?}"))),
        }
    }

    pub fn language(&self, seed: u64) -> SyntheticLanguageConfig {
        SyntheticLanguageConfig {
            num_classes: self.num_classes,
            class_size_weights: self.class_size_weights,
            frame_dim: self.frame_dim,
            frames_per_char: (self.frames_min, self.frames_max),
            noise_sigma: self.noise_sigma,
            transition_temperature: self.transition_temperature,
            choice_skew: self.choice_skew,
            context_preference: self.context_preference,
            sentence_len: (self.sentence_min, self.sentence_max),
            num_train: self.num_train,
            num_heldout: self.num_heldout,
            seed,
        }
    }

    pub fn model(&self, seed: u64) -> ModelConfig {
        ModelConfig {
            hidden: self.hidden,
            embed: self.embed,
            attention: self.attention,
            init_seed: seed,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            clip_norm: self.clip_norm,
            beta: self.beta,
            seed,
            parallel: self.parallel,
            onehot_epochs: self.onehot_epochs,
            skip_heldout_cer: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn overrides_parse_json_then_string() {
        let o = parse_overrides(&args("--beta 0.2 --strategy non_ls --parallel --out-dir=x")).unwrap();
        assert_eq!(o[0], ("beta".into(), Value::from(0.2)));
        assert_eq!(o[1], ("strategy".into(), Value::from("non_ls")));
        assert_eq!(o[2], ("parallel".into(), Value::Bool(true)));
        assert_eq!(o[3], ("out_dir".into(), Value::from("x")));
        assert!(parse_overrides(&args("beta 0.2")).is_err());
    }

    #[test]
    fn load_merges_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("c.json");
        std::fs::write(&f, r#"{"beta": 0.3, "epochs": 7}"#).unwrap();
        let c = ExperimentConfig::load(Some(&f), &parse_overrides(&args("--beta 0.1")).unwrap()).unwrap();
        assert_eq!((c.beta, c.epochs), (0.1, 7));
        let bad = ExperimentConfig::load(None, &parse_overrides(&args("--nope 1")).unwrap());
        assert!(matches!(bad, Err(Error::Config(_))));
    }

    #[test]
    fn validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        let c = ExperimentConfig {
            beta: 1.5,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = ExperimentConfig {
            homo_truth: 0.7,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = ExperimentConfig {
            fuzzy_simi: 0.2,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = ExperimentConfig {
            corpus: Some("/nonexistent/corpus.txt".into()),
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn explicit_seed_wins() {
        let c = ExperimentConfig {
            seed: Some(5),
            ..Default::default()
        };
        assert_eq!(c.resolve_seed().unwrap(), 5);
    }
}
