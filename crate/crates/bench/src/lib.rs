//! Benchmark fixtures; the benchmarks themselves live in `benches/`.

use slabcode_core::synthgen::{generate_slab, SynthParams};
use slabcode_core::{RasterImage, Rgb8};

/// Full-size clean slab with a five-band code.
pub fn sample_slab() -> RasterImage<Rgb8> {
    generate_slab("23457", &SynthParams::default())
        .expect("default layout fits five bands")
        .0
}
