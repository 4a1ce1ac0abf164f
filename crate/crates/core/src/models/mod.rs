//! The homogeneous autoencoder, the four heterogeneous CNN classifiers,
//! class templates and local training loops.

mod autoencoder;
mod checkpoint;
mod classifier;
mod template;
mod train;

pub use autoencoder::{Autoencoder, AutoencoderSpec, DEFAULT_AE_HIDDEN, DEFAULT_LATENT};
pub use checkpoint::{MODEL_MAGIC, MODEL_VERSION};
pub use classifier::{
    predicted_label, Classifier, ClassifierSpec, ClassifierVariant, DEFAULT_CLASSIFIER_HIDDEN,
    DEFAULT_DROPOUT, NUM_CLASSES,
};
pub use template::{compute_templates, templates_from_codes, ClassTemplate, TemplateCounts, TemplatePair};
pub use train::{
    autoencoder_loss, classifier_accuracy, train_local_autoencoder, train_local_classifier,
    AutoencoderReport, ClassifierReport, EpochRecord, TrainConfig, DEFAULT_LR,
};
