//! Workloads shared by the throughput benchmarks.

use merlion_core::synth::{generate_stream, SynthSpec, SynthStream};

/// A synthetic stream of `n_frames` frames at `dim` dimensions whose gate
/// passes a healthy fraction of frames at the clear-water threshold.
pub fn workload(n_frames: usize, dim: usize, seed: u64) -> SynthStream {
    generate_stream(&SynthSpec {
        seed,
        dim,
        n_frames,
        ..SynthSpec::default()
    })
    .expect("workload spec is valid")
}
