use merlion_bench::workload;
use merlion_core::{run_merlion, run_staged, SamplerConfig};

#[test]
fn workload_exercises_gate_and_sampler() {
    let s = workload(2_000, 512, 1);
    assert_eq!(s.murky.len(), 2_000);
    assert_eq!(s.queries.dim(), 512);
    let config = SamplerConfig::default();
    let out = run_merlion(s.murky.iter().cloned().map(Ok), &s.queries, &config).unwrap();
    assert!(out.stats.gate_passed > 0 && out.stats.gate_passed < 2_000);
    assert!(out.stats.accepted > 0);
    let staged = run_staged(
        s.murky.iter().cloned().map(Ok),
        &s.queries,
        &config,
        None,
        64,
    )
    .unwrap();
    assert_eq!(staged.log, out.log);
}
