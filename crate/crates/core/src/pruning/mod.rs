//! Masks and the operations that shrink them.

mod mask;
mod prune;

pub use mask::{LayerMask, Mask};
pub use prune::{
    prune, prune_at_init, prune_count, prune_global, prune_layerwise, random_mask, sparsity,
    LayerSparsity, PruneConfig, PruneMode, PruneWarning, Pruned, SparsityReport,
};
