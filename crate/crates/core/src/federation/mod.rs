//! Stage I training and aggregation, Stage II attention inference, the
//! ablation grid and the FedAvg baseline.

pub mod ablation;
pub mod aggregate;
pub mod attention;
pub mod baseline;
pub mod bundle;
pub mod evaluate;
pub mod payload;
pub mod protocol;


pub use ablation::{
    prepare_splits, random_clients, run_ablation, subtype_clients, AblationCell, AblationConfig, AblationGrid,
    PreparedSplits,
};
pub use aggregate::{aggregate_autoencoders, site_weights, weighted_average};
pub use attention::{
    attention_from_codes, combine, fuse_predictions, hard_select_index, hard_select_predict, normalize_attention,
    site_score, FusedPrediction, ATTENTION_FLOOR,
};
pub use baseline::{fedavg_baseline, pooled_single, FedAvgOutput};
pub use bundle::{
    BundleManifest, BundleSiteEntry, EncoderMode, FusionSpace, GlobalBundle, InferenceOptions, SiteExpert,
    BUNDLE_AUTOENCODER, BUNDLE_FORMAT_VERSION, BUNDLE_MANIFEST, BUNDLE_TEMPLATES,
};
pub use evaluate::{average_accuracy, evaluate_site, evaluate_sites, Confusion, Predictor, SiteEvaluation};
pub use payload::SitePayload;
pub use protocol::{stage1, Client, FederationConfig, Stage1Output, TrainLogRow};
