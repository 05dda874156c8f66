//! Shared fixtures for the benchmark targets.

use cedar_core::market::reference_params;
use cedar_core::{GridSpec, ModelParams};

/// Reference parameter set used by every benchmark.
pub fn bench_params() -> ModelParams {
    reference_params()
}

/// Medium grid: large enough to exercise the march, small enough to iterate.
pub fn bench_spec() -> GridSpec {
    GridSpec::with_stride(2.0, 201, 2_001, 5.0, 50).expect("valid bench grid")
}
