//! Unsupervised panoptic evaluation: class matching and metrics.

mod ap;
mod contingency;
mod hungarian;
mod matching;
mod pq;

pub use ap::{average_precision, mask_ap, ApImage, ApReport, AreaRange, IOU_THRESHOLDS};
pub use contingency::{contingency, semantic_metrics, ContingencyMatrix, SemanticMetrics};
pub use hungarian::{hungarian, Matrix};
pub use matching::{apply_matching, match_classes, remap_contingency, remap_semantic, ClassMatching, MatchVia};
pub use pq::{panoptic_quality, ClassPq, PqAccumulator, PqReport};
