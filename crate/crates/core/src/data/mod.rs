//! Dataset manifests, image IO, synthetic data, augmentation and batching.

mod augment;
mod batch;
mod codes;
mod image_io;
mod manifest;
mod realiad;
mod synthetic;

pub use augment::{apply as apply_augment, augment, AugmentParams, REFERENCE_SIZE};
pub use batch::{
    balanced_order, epoch_rng, load_split, plain_order, to_tensor, Batch, BatchIterator, LoadedSplit,
    AUGMENT_PROB, NORMALIZE_MEAN, NORMALIZE_STD,
};
pub use codes::DefectCode;
pub use image_io::{load_image, load_mask, save_gray, save_mask, save_rgb, to_u8, Image};
pub use manifest::{load_manifest, DatasetManifest, SampleRecord, Split, SCHEMA_VERSION};
pub use realiad::convert_realiad;
pub use synthetic::{
    generate_synthetic, image_rng, render, Rendered, SplitPlan, SyntheticConfig, SyntheticSummary,
    COMPOSITES_FILE, MANIFEST_FILE,
};
