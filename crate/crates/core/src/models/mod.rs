//! Classifiers, autoencoders, training and checkpoints.

mod autoencoder;
mod checkpoint;
mod network;
mod train;

pub use autoencoder::{
    column_rank, exact_chart_autoencoder, Autoencoder, AutoencoderMode, ChartDecoder,
};
pub use checkpoint::{
    classifier_checkpoint, load_attribution, load_autoencoder, load_classifier, save_attribution,
    save_autoencoder, save_classifier, Checkpoint, NamedTensor, FORMAT_VERSION, MAGIC,
};
pub use network::{Activation, Head, Layer, MlpSpec, Sequential};

pub use train::{
    accuracy, autoencoder_specs, predict, reconstruction_mse, train_autoencoder,
    train_classifier, AutoencoderReport, ClassifierReport, Optimizer, TrainConfig,
    TrainedClassifier,
};

