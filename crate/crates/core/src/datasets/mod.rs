//! Database manifests and seeded split plans.

mod manifest;
mod rng;
mod split;

pub use manifest::{
    detect_kind, load_manifest, load_manifest_detect, parse_manifest, DatasetManifest, DistortionKind, ImageRecord,
    MOS_RANGE,
};
pub use rng::SplitRng;
pub use split::{
    cross_pair, make_split, make_split_series, split_counts, CrossPlan, Role, SplitPlan,
    CROSS_VALIDATION_FRACTION, DEFAULT_FRACTIONS,
};
