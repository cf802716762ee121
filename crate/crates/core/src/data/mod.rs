//! Corpus files, synthetic corpora, and model checkpoints.

pub mod checkpoint;
pub mod corpus;
pub mod synthetic;

pub use checkpoint::{load_model, load_model_expecting, save_model, LoadedModel, ModelKind, SavedModel};
pub use corpus::{read_corpus, write_corpus, Corpus, MalformedRow, UserRecord};
pub use synthetic::{generate_synthetic, SyntheticCorpus, SyntheticSpec, SyntheticUser};
