//! Pooled multi-layer descriptors, standardisation and the on-disk cache.

mod cache;
mod descriptor;
mod standardize;
mod table;

pub use cache::{cache_file_size, load_cache, read_cache, save_cache, write_cache, MAGIC, VERSION};
pub use descriptor::{
    concatenate, gap, layout_dim, layout_for_spec, layout_from_dims, slice_layer, FeatureVector,
    Segment,
};
pub use standardize::Standardizer;
pub use table::FeatureTable;
