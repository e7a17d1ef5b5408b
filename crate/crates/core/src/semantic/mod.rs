//! Soft semantic pseudo labels: feature clustering, window assembly,
//! depth-guided blending, and CRF refinement.

mod crf;
mod fuse;
mod kmeans;
mod soft;
mod window;

pub use crf::{crf_refine, crf_refine_traced, CrfParams};
pub use fuse::{depth_guided_fuse, depth_weight, ALPHA_DEFAULT};
pub use kmeans::{cosine_kmeans_assign, cosine_kmeans_fit, Centroids, FeatureMap, KMeansFit};
pub use soft::SoftSemantics;
pub use window::{assemble_sliding_window, window_origins, WindowOrigin};
