//! Supervised word sense disambiguation toolkit.
//!
//! Classic sparse lexical features (surrounding words, collocations, POS
//! window) are combined with dense features composed from pretrained word
//! embeddings whose dimensions have been rescaled to a target standard
//! deviation. One linear one-vs-rest classifier is trained per target lemma.
//!
//! The [`crosslingual`] module builds training data from word-aligned
//! parallel text and provides the annotation filtering and agreement
//! measures used for translation-as-sense evaluation.

pub mod classifier;
pub mod cli;
pub mod corpus;
pub mod crosslingual;
pub mod embeddings;
pub mod evaluation;
pub mod features;
pub mod json;

pub use classifier::{LemmaModel, ModelStore, TrainConfig};
pub use corpus::{Instance, SenseInventory, Stoplist, Token};
pub use embeddings::{EmbeddingTable, TextFormat};
pub use features::{Composition, FeatureConfig, FeatureExtractor, FeatureVector};

/// Toolkit version recorded in model files and run reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
