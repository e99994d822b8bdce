//! Subcommands of the `homosmooth` binary.
//!
//! Every command reads an [`ExperimentConfig`] and writes its artifacts under
//! `out_dir`:
//!
//! ```text
//! out_dir/vocab.txt              build-homophones, train-lm, build-priors
//! out_dir/homophones.json        build-homophones
//! out_dir/lm.arpa                train-lm
//! out_dir/priors.<strategy>.jsonl build-priors
//! out_dir/toy/                   gen-toy (train.jsonl, heldout.jsonl, vocab.txt,
//!                                lexicon.tsv, corpus.txt, heldout.txt, language.json)
//! out_dir/runs/<strategy>/       train-toy (log.csv, model.json, probe.json),
//!                                decode-toy (hyp.txt, ref.txt)
//! out_dir/cer_table.tsv          eval-cer, sweep
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{parse_overrides, ExperimentConfig};
use crate::error::{Error, Result};
use crate::gradcheck::run_gradchecks;
use crate::homophone::{parse_fuzzy_rules, FuzzyRules, HomophoneIndex};
use crate::lexicon::{build_vocabulary, parse_lexicon, Lexicon, Vocabulary};
use crate::metrics::{corpus_stats, edit_distance, read_aligned, EditStats};
use crate::ngram::{count_unigrams, import_arpa, train_bigram};
use crate::prior::{export_priors_file, unigram_prior, PriorBuilder, PriorResources, StrategyKind};
use crate::toy::data::{read_utterances_file, write_utterances_file};
use crate::toy::probe::GapStats;
use crate::toy::train::{decode_budget, write_log};
use crate::toy::{generate_dataset, load_checkpoint, run_strategy, save_checkpoint, ToyCorpus, ToyDataset, ToyResources};

#[derive(Debug, Parser)]
#[command(name = "homosmooth", version, about = "Homophone-aware label smoothing experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the homophone index and write a statistics report.
    BuildHomophones(CommonArgs),
    /// Estimate a bigram LM from the corpus and write it as ARPA.
    TrainLm(CommonArgs),
    /// Write per-position priors for every corpus sentence.
    BuildPriors(CommonArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(CommonArgs),
    /// Generate the synthetic homophone language.
    GenToy(CommonArgs),
    /// Train the toy model with one strategy.
    TrainToy(CommonArgs),
    /// Greedy-decode the held-out split with a trained toy model.
    DecodeToy(CommonArgs),
    /// CER of a reference/hypothesis pair, or the table of all trained strategies.
    EvalCer(CommonArgs),
    /// Train, decode and tabulate every strategy in `strategies`.
    Sweep(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON config file.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// `--key value` overrides of config fields.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    pub overrides: Vec<String>,
}

impl Command {
    fn args(&self) -> &CommonArgs {
        match self {
            Command::BuildHomophones(a)
            | Command::TrainLm(a)
            | Command::BuildPriors(a)
            | Command::Gradcheck(a)
            | Command::GenToy(a)
            | Command::TrainToy(a)
            | Command::DecodeToy(a)
            | Command::EvalCer(a)
            | Command::Sweep(a) => a,
        }
    }
}

/// Exit status for an error: 2 for configuration problems, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        _ => 1,
    }
}

fn load_config(args: &CommonArgs) -> Result<ExperimentConfig> {
    let mut overrides = parse_overrides(&args.overrides)?;
    let mut file = args.config.clone();
    if let Some(pos) = overrides.iter().position(|(k, _)| k == "config") {
        let (_, v) = overrides.remove(pos);
        file = Some(PathBuf::from(v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string())));
    }
    let config = ExperimentConfig::load(file.as_deref(), &overrides)?;
    config.validate()?;
    Ok(config)
}

/// Runs a parsed command and returns the process exit status.
pub fn execute(cli: &Cli) -> Result<i32> {
    let cfg = load_config(cli.command.args())?;
    match &cli.command {
        Command::BuildHomophones(_) => {
            let report = cmd_build_homophones(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Command::TrainLm(_) => {
            let path = cmd_train_lm(&cfg)?;
            println!("wrote {}", path.display());
        }
        Command::BuildPriors(_) => {
            let (path, n) = cmd_build_priors(&cfg)?;
            println!("wrote {n} positions to {}", path.display());
        }
        Command::Gradcheck(_) => return cmd_gradcheck(&cfg),
        Command::GenToy(_) => {
            let dir = cmd_gen_toy(&cfg)?;
            println!("wrote {}", dir.display());
        }
        Command::TrainToy(_) => {
            let kind = cfg.strategy_kind()?;
            let summary = cmd_train_toy(&cfg, kind, &mut |line| println!("{line}"))?;
            println!("{}", summary.describe());
        }
        Command::DecodeToy(_) => {
            let kind = cfg.strategy_kind()?;
            let cer = cmd_decode_toy(&cfg, kind)?;
            println!("{kind}: CER {cer:.2}%");
        }
        Command::EvalCer(_) => print!("{}", cmd_eval_cer(&cfg)?),
        Command::Sweep(_) => print!("{}", cmd_sweep(&cfg)?),
    }
    Ok(0)
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn require<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("`{key}` is required for this command")))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// The `vocab` file if configured, else a vocabulary built from `corpus`.
fn load_vocabulary(cfg: &ExperimentConfig) -> Result<Vocabulary> {
    if let Some(v) = &cfg.vocab {
        return Vocabulary::read(v);
    }
    let corpus = require(&cfg.corpus, "corpus` or `vocab")?;
    build_vocabulary(&read_lines(corpus)?, cfg.min_count)
}

fn load_rules(cfg: &ExperimentConfig) -> Result<FuzzyRules> {
    match &cfg.fuzzy_rules {
        Some(p) => parse_fuzzy_rules(p),
        None => Ok(FuzzyRules::defaults()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HomophoneReport {
    #[serde(rename = "K")]
    pub k: usize,
    pub chars_with_homophones: usize,
    /// Number of (character, reading) pairs with `N` homophones.
    pub homophone_histogram: BTreeMap<usize, usize>,
    /// Number of (character, reading) pairs with `M` fuzzy neighbours.
    pub fuzzy_histogram: BTreeMap<usize, usize>,
}

pub fn homophone_report(index: &HomophoneIndex, vocabulary: &Vocabulary, rules: &FuzzyRules) -> HomophoneReport {
    let mut report = HomophoneReport {
        k: vocabulary.len(),
        chars_with_homophones: 0,
        homophone_histogram: BTreeMap::new(),
        fuzzy_histogram: BTreeMap::new(),
    };
    for (k, _) in vocabulary.chars() {
        if index.has_homophones(k) {
            report.chars_with_homophones += 1;
        }
        for s in index.readings(k) {
            *report.homophone_histogram.entry(index.homophones(k, s).len()).or_default() += 1;
            *report.fuzzy_histogram.entry(index.fuzzy_neighbors(k, s, rules).len()).or_default() += 1;
        }
    }
    report
}

pub fn cmd_build_homophones(cfg: &ExperimentConfig) -> Result<HomophoneReport> {
    let vocabulary = load_vocabulary(cfg)?;
    let lexicon = parse_lexicon(require(&cfg.lexicon, "lexicon")?, &vocabulary)?;
    let rules = load_rules(cfg)?;
    let index = HomophoneIndex::build(&lexicon, &vocabulary, cfg.tone_mode);
    let report = homophone_report(&index, &vocabulary, &rules);
    ensure_dir(&cfg.out_dir)?;
    vocabulary.write(&cfg.out_dir.join("vocab.txt"))?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&cfg.out_dir.join("homophones.json"), json + "\n")?;
    Ok(report)
}

pub fn cmd_train_lm(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let corpus = read_lines(require(&cfg.corpus, "corpus")?)?;
    let vocabulary = load_vocabulary(cfg)?;
    let lm = train_bigram(&corpus, &vocabulary, cfg.smoothing()?)?;
    ensure_dir(&cfg.out_dir)?;
    vocabulary.write(&cfg.out_dir.join("vocab.txt"))?;
    let path = cfg.out_dir.join("lm.arpa");
    write_file(&path, lm.to_arpa(&vocabulary))?;
    Ok(path)
}

pub fn cmd_build_priors(cfg: &ExperimentConfig) -> Result<(PathBuf, usize)> {
    let kind = cfg.strategy_kind()?;
    let corpus = read_lines(require(&cfg.corpus, "corpus")?)?;
    let vocabulary = load_vocabulary(cfg)?;
    let lexicon = match &cfg.lexicon {
        Some(p) => parse_lexicon(p, &vocabulary)?,
        None if !kind.needs_index() => Lexicon::new(),
        None => return Err(Error::Config(format!("strategy {kind} needs `lexicon`"))),
    };
    let index = HomophoneIndex::build(&lexicon, &vocabulary, cfg.tone_mode);
    let unigram = unigram_prior(&count_unigrams(&corpus, &vocabulary)?);
    let bigram = match &cfg.arpa {
        Some(p) => import_arpa(p, &vocabulary)?,
        None => train_bigram(&corpus, &vocabulary, cfg.smoothing()?)?,
    };
    let rules = load_rules(cfg)?;
    let specials = vocabulary.specials();
    let builder = PriorBuilder::new(
        cfg.strategy_config(kind),
        PriorResources {
            vocab_size: vocabulary.len(),
            eos: specials.eos,
            unigram: Some(&unigram),
            bigram: Some(&bigram),
            index: Some(&index),
            fuzzy_rules: Some(&rules),
        },
    )?;
    let mut records = Vec::new();
    for line in corpus.iter().filter(|l| !l.trim().is_empty()) {
        let priors = builder.build_sequence(line, &vocabulary, &lexicon)?;
        let targets = line.chars().map(|c| vocabulary.encode_char(c)).chain([specials.eos]);
        records.extend(targets.zip(priors));
    }
    ensure_dir(&cfg.out_dir)?;
    vocabulary.write(&cfg.out_dir.join("vocab.txt"))?;
    let path = cfg.out_dir.join(format!("priors.{kind}.jsonl"));
    export_priors_file(&records, &path)?;
    Ok((path, records.len()))
}

pub fn cmd_gradcheck(cfg: &ExperimentConfig) -> Result<i32> {
    let seed = cfg.resolve_seed().unwrap_or(0);
    let checks = run_gradchecks(seed)?;
    let mut failed = 0;
    for c in &checks {
        println!("{} {:<16} rel_error={:.3e}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.rel_error);
        failed += usize::from(!c.passed);
    }
    println!("{} checks, {failed} failed", checks.len());
    Ok(if failed == 0 { 0 } else { 1 })
}

fn toy_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.join("toy")
}

fn run_dir(cfg: &ExperimentConfig, kind: StrategyKind) -> PathBuf {
    cfg.out_dir.join("runs").join(kind.name())
}

pub fn cmd_gen_toy(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let seed = cfg.resolve_seed()?;
    let lang_cfg = cfg.language(seed);
    let lang = generate_dataset(&lang_cfg)?;
    let dir = toy_dir(cfg);
    ensure_dir(&dir)?;
    let d = &lang.dataset;
    write_utterances_file(&d.train, &dir.join("train.jsonl"))?;
    write_utterances_file(&d.heldout, &dir.join("heldout.jsonl"))?;
    lang.vocabulary.write(&dir.join("vocab.txt"))?;
    write_file(&dir.join("lexicon.tsv"), lang.lexicon.to_tsv())?;
    let text = |us: &[crate::toy::Utterance]| -> String {
        us.iter().map(|u| lang.vocabulary.decode(&u.labels) + "\n").collect()
    };
    write_file(&dir.join("corpus.txt"), text(&d.train))?;
    write_file(&dir.join("heldout.txt"), text(&d.heldout))?;
    let json = serde_json::to_string_pretty(&lang_cfg).expect("config serializes");
    write_file(&dir.join("language.json"), json + "\n")?;
    Ok(dir)
}

struct ToyFiles {
    vocabulary: Vocabulary,
    lexicon: Lexicon,
    dataset: ToyDataset,
}

impl ToyFiles {
    fn corpus(&self) -> ToyCorpus<'_> {
        ToyCorpus {
            vocabulary: &self.vocabulary,
            lexicon: &self.lexicon,
            dataset: &self.dataset,
        }
    }
}

/// Loads the toy language, generating it first when it is missing or was
/// produced from a different configuration.
fn load_toy(cfg: &ExperimentConfig) -> Result<ToyFiles> {
    let dir = toy_dir(cfg);
    let wanted = cfg.language(cfg.resolve_seed()?);
    let current = std::fs::read_to_string(dir.join("language.json"))
        .ok()
        .and_then(|s| serde_json::from_str::<crate::toy::SyntheticLanguageConfig>(&s).ok());
    if current.as_ref() != Some(&wanted) {
        cmd_gen_toy(cfg)?;
    }
    let vocabulary = Vocabulary::read(&dir.join("vocab.txt"))?;
    let lexicon = parse_lexicon(&dir.join("lexicon.tsv"), &vocabulary)?;
    let dataset = ToyDataset {
        train: read_utterances_file(&dir.join("train.jsonl"))?,
        heldout: read_utterances_file(&dir.join("heldout.jsonl"))?,
    };
    Ok(ToyFiles {
        vocabulary,
        lexicon,
        dataset,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub strategy: String,
    pub final_heldout_cer: f64,
    pub final_heldout_loss: f64,
    pub probe: GapStatsRecord,
}

/// Serializable mirror of [`GapStats`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapStatsRecord {
    pub positions: usize,
    pub truth_prob_mean: f64,
    pub truth_prob_median: f64,
    pub homophone_mass_mean: f64,
    pub homophone_mass_median: f64,
    pub gap_mean: f64,
    pub gap_median: f64,
}

impl From<&GapStats> for GapStatsRecord {
    fn from(g: &GapStats) -> Self {
        GapStatsRecord {
            positions: g.positions,
            truth_prob_mean: g.truth_prob.mean,
            truth_prob_median: g.truth_prob.median,
            homophone_mass_mean: g.homophone_mass.mean,
            homophone_mass_median: g.homophone_mass.median,
            gap_mean: g.gap.mean,
            gap_median: g.gap.median,
        }
    }
}

impl RunSummary {
    pub fn describe(&self) -> String {
        format!(
            "{}: heldout CER {:.2}%, homophone mass {:.4}, median gap {:.4}",
            self.strategy, self.final_heldout_cer, self.probe.homophone_mass_mean, self.probe.gap_median
        )
    }
}

pub fn cmd_train_toy(cfg: &ExperimentConfig, kind: StrategyKind, progress: &mut dyn FnMut(String)) -> Result<RunSummary> {
    let seed = cfg.resolve_seed()?;
    let toy = load_toy(cfg)?;
    let resources = ToyResources::estimate(toy.corpus(), cfg.tone_mode, load_rules(cfg)?, cfg.smoothing()?)?;
    let run = run_strategy(
        toy.corpus(),
        &resources,
        cfg.strategy_config(kind),
        &cfg.model(seed),
        &cfg.train_config(seed),
        |r| {
            progress(format!(
                "{kind} epoch {} train_loss {:.4} heldout_loss {:.4} heldout_cer {:.2}",
                r.epoch, r.train_loss, r.heldout_loss, r.heldout_cer
            ))
        },
    )?;
    let dir = run_dir(cfg, kind);
    ensure_dir(&dir)?;
    write_log(&run.log, &dir.join("log.csv"))?;
    save_checkpoint(&run.params, &dir.join("model.json"))?;
    let last = run.log.last();
    let summary = RunSummary {
        strategy: kind.name().into(),
        final_heldout_cer: last.map_or(f64::NAN, |r| r.heldout_cer),
        final_heldout_loss: last.map_or(f64::NAN, |r| r.heldout_loss),
        probe: GapStatsRecord::from(&run.probe),
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(&dir.join("probe.json"), json + "\n")?;
    Ok(summary)
}

/// Decodes the held-out split; returns the pooled CER in percent.
pub fn cmd_decode_toy(cfg: &ExperimentConfig, kind: StrategyKind) -> Result<f64> {
    let toy = load_toy(cfg)?;
    let dir = run_dir(cfg, kind);
    let params = load_checkpoint(&dir.join("model.json"))?;
    let s = toy.vocabulary.specials();
    let (mut refs, mut hyps) = (String::new(), String::new());
    let mut stats = EditStats::default();
    for u in &toy.dataset.heldout {
        let hyp = params.greedy_decode(&u.frames, decode_budget(u.frames.len()), s.sos, s.eos)?;
        stats = stats + edit_distance(&u.labels, &hyp);
        refs.push_str(&toy.vocabulary.decode(&u.labels));
        refs.push('\n');
        hyps.push_str(&toy.vocabulary.decode(&hyp));
        hyps.push('\n');
    }
    write_file(&dir.join("ref.txt"), refs)?;
    write_file(&dir.join("hyp.txt"), hyps)?;
    stats
        .cer()
        .map(|c| 100.0 * c)
        .ok_or_else(|| Error::InvalidArgument("held-out split has no characters".into()))
}

/// Rows of `(strategy, CER %, probe summary)` for every strategy with a trained run.
fn collect_table(cfg: &ExperimentConfig) -> Result<Vec<(StrategyKind, f64, Option<GapStatsRecord>)>> {
    let mut rows = Vec::new();
    for kind in StrategyKind::ALL {
        let dir = run_dir(cfg, kind);
        if !dir.join("model.json").exists() {
            continue;
        }
        if !dir.join("hyp.txt").exists() {
            cmd_decode_toy(cfg, kind)?;
        }
        let (refs, hyps) = read_aligned(&dir.join("ref.txt"), &dir.join("hyp.txt"))?;
        let (_, cer) = corpus_stats(&refs, &hyps)?;
        let probe = std::fs::read_to_string(dir.join("probe.json"))
            .ok()
            .and_then(|s| serde_json::from_str::<RunSummary>(&s).ok())
            .map(|s| s.probe);
        rows.push((kind, cer, probe));
    }
    Ok(rows)
}

fn format_table(rows: &[(StrategyKind, f64, Option<GapStatsRecord>)]) -> String {
    let mut s = String::from("strategy\tcer\thomophone_mass\tmedian_gap\n");
    for (kind, cer, probe) in rows {
        let (m, g) = probe
            .as_ref()
            .map_or((f64::NAN, f64::NAN), |p| (p.homophone_mass_mean, p.gap_median));
        writeln!(s, "{kind}\t{cer:.2}\t{m:.4}\t{g:.4}").expect("write to string");
    }
    s
}

/// Either the CER of `reference` against `hypothesis`, or the table over all
/// trained strategies, written to `out_dir/cer_table.tsv`.
pub fn cmd_eval_cer(cfg: &ExperimentConfig) -> Result<String> {
    if cfg.reference.is_some() || cfg.hypothesis.is_some() {
        let (refs, hyps) = read_aligned(require(&cfg.reference, "reference")?, require(&cfg.hypothesis, "hypothesis")?)?;
        let (st, cer) = corpus_stats(&refs, &hyps)?;
        return Ok(format!(
            "CER {cer:.2}% (S={} D={} I={} N={})\n",
            st.substitutions, st.deletions, st.insertions, st.ref_len
        ));
    }
    let rows = collect_table(cfg)?;
    if rows.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no trained runs under {}",
            cfg.out_dir.join("runs").display()
        )));
    }
    let table = format_table(&rows);
    write_file(&cfg.out_dir.join("cer_table.tsv"), &table)?;
    Ok(table)
}

pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<String> {
    let kinds: Vec<StrategyKind> = cfg.strategies.iter().map(|s| StrategyKind::parse(s)).collect::<Result<_>>()?;
    load_toy(cfg)?;
    let one = |&kind: &StrategyKind| -> Result<()> {
        cmd_train_toy(cfg, kind, &mut |line| eprintln!("{line}"))?;
        cmd_decode_toy(cfg, kind)?;
        Ok(())
    };
    if cfg.parallel {
        kinds.par_iter().map(one).collect::<Result<Vec<()>>>()?;
    } else {
        kinds.iter().map(one).collect::<Result<Vec<()>>>()?;
    }
    cmd_eval_cer(&ExperimentConfig {
        reference: None,
        hypothesis: None,
        ..cfg.clone()
    })
}
