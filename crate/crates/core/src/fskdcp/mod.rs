//! Data-free replay: representative features, drift-compensation projection
//! between consecutive feature spaces, and jittered replay batches.

mod augment;
mod memory;
mod projection;
mod snapshot;

pub use augment::{augment_features, replay_batch, AugmentConfig};
pub use memory::{herding, label_quotas, select_features, FeatureMemory};
pub use projection::{project_memory, KdcpProjection};
pub use snapshot::{read_snapshot, write_snapshot, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};
