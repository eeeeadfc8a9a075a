//! Loading exported inference graphs and tapping their Inception blocks.

mod min_input;
mod preprocess;
mod runtime;
mod spec;
pub mod synthetic;

pub use min_input::min_input_size;
pub use preprocess::{decode_image, open_image, preprocess, InputTensor};
pub use runtime::{load_model, load_model_from_bytes, load_model_from_sidecar, FeatureMap, ModelHandle};
pub use spec::{
    ChannelOrder, InputLayout, ModelSpec, Preprocessing, SizePolicy, Tap, GOOGLENET_TAPS,
    INCEPTION_V3_TAPS,
};
