//! Built-in bag-of-words softmax classifier.
//!
//! A text is the mean of its tokens' input rows; a linear layer maps that
//! hidden vector to three class logits. Training is single-example SGD on
//! softmax cross-entropy with a linearly decaying learning rate, following
//! the supervised fastText recipe without subwords, hierarchical softmax or
//! negative sampling.

mod model;
mod serialize;
mod text;
mod train;

pub use model::{ClassifierConfig, Model, ProbVector, N_CLASSES};
pub use serialize::{load, read_model, save, write_model, MAGIC, VERSION};
pub use text::{preprocess, PREPROCESSING_TAG};
pub use train::{loss_and_gradient, train, train_texts, Gradient, TrainReport};

#[derive(Debug, thiserror::Error)]
pub enum BowError {
    #[error("invalid classifier config: {0}")]
    InvalidConfig(String),
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("training set contains fewer than two classes")]
    SingleClass,
    #[error("example has no known token")]
    NoKnownToken,
    #[error("model file: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
