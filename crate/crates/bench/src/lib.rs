//! Fixtures shared by the criterion benches.

use nlcps_core::synth::generate_dataset;
use nlcps_core::ClusterContext;

/// A deterministic synthetic cluster with `size` nodes.
pub fn sample_context(size: usize) -> ClusterContext {
    generate_dataset(&[size], 1, 0)
        .expect("valid dataset arguments")
        .configurations
        .remove(0)
}
