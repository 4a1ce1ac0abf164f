//! Synthetic multi-site FC data, vectorization and the on-disk format.

mod generate;
mod io;
mod spec;
mod split;
mod vectorize;

pub use generate::{generate_dataset, generate_site};
pub use io::{
    decode_site, encode_site, read_dataset, read_manifest, site_file_name, write_dataset, Manifest,
    ManifestEntry, MANIFEST_FILE, SITE_MAGIC, SITE_VERSION,
};
pub use spec::{
    prepare_all, Dataset, DatasetSpec, FcSample, PreparedSample, SiteSamples, SiteSpec, SubtypeSupport,
    DEFAULT_BASE_STRENGTH, DEFAULT_LABEL_EFFECT, DEFAULT_MASK_FRACTION, DEFAULT_NOISE_SD,
    DEFAULT_SITE_COUNTS, DEFAULT_SITE_EFFECT, DEFAULT_SUBTYPE_EFFECT, DESK_ROIS, LABEL_MDD,
    LABEL_NC, PAPER_ROIS, UNTAGGED_SUBTYPE,
};
pub use split::{split_train_test, test_count, Split, DEFAULT_TEST_FRACTION};
pub use vectorize::{upper_tri_flatten, upper_tri_len, upper_tri_unflatten, SYMMETRY_TOLERANCE};
