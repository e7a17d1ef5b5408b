//! Tensor, label, and manifest I/O.

mod label;
mod manifest;
mod npy;
mod tensor;

pub use label::{
    colorize_panoptic, colorize_rgb, read_panoptic_png, read_rgb_png, write_panoptic_png,
    write_rgb_png, PanopticLabel, IGNORE,
};
pub use manifest::{DatasetManifest, FrameRecord, WindowPred};
pub use npy::{decode_npy, encode_npy, read_npy, read_npy_with_validity, write_npy};
pub use tensor::{DType, Tensor, TensorData};
