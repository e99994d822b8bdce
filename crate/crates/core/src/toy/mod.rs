//! Toy attention encoder-decoder trained on a synthetic homophone language.

pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod experiment;
pub mod model;
pub mod probe;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use data::{generate_dataset, SyntheticLanguageConfig, ToyDataset, ToyLanguage, Utterance};
pub use model::{argmax, ModelDims, StepValues, ToyModelParams};
pub use probe::{probe_homophone_gap, GapStats};
pub use train::{train, EpochLog, TrainConfig};
pub use experiment::{run_strategy, ModelConfig, ToyCorpus, ToyResources, ToyRun};
