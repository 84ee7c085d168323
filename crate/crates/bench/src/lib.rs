//! Shared inputs for the benchmarks.

use garch_tail::spectral::{init_ensemble, InitConfig};
use garch_tail::{GarchSpec, Innovation, ParticleEnsemble, SeedStream};

/// GARCH(2,2) with t₃ innovations.
pub fn garch22() -> GarchSpec {
    GarchSpec::new(
        1.0,
        vec![0.3, 0.15],
        vec![0.2, 0.1],
        Innovation::scaled_t(3.0).unwrap(),
    )
    .unwrap()
}

/// GARCH(1,1) with Gaussian innovations.
pub fn garch11() -> GarchSpec {
    GarchSpec::new(1.0, vec![0.1], vec![0.9], Innovation::gaussian()).unwrap()
}

/// A small starting ensemble, about `n / 100` particles.
pub fn ensemble(spec: &GarchSpec, n: usize) -> ParticleEnsemble {
    let cfg = InitConfig {
        n,
        u_quantile: 0.99,
        ..InitConfig::default()
    };
    init_ensemble(spec, &cfg, &SeedStream::new(1)).unwrap()
}
