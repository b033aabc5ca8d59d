//! Fixtures shared by the benchmarks. Weights are untrained: timings do not
//! depend on what the networks learned.

use pathguide_core::data::{shapes_dataset, Dataset};
use pathguide_core::models::{autoencoder_specs, Activation, Head, MlpSpec};
use pathguide_core::{Autoencoder, Sequential, Tensor};

pub struct Fixture {
    pub data: Dataset,
    pub classifier: Sequential,
    pub autoencoder: Autoencoder,
    pub baseline: Tensor,
}

/// The shapes benchmark architecture: 64-32-2 classifier, 64→64→8 autoencoder.
pub fn shapes_fixture() -> Fixture {
    let data = shapes_dataset(64, 0.05, 0).expect("dataset");
    let classifier = MlpSpec::new(vec![64, 32, 2], Activation::Tanh, Head::Softmax)
        .and_then(|s| s.build(0))
        .expect("classifier");
    let (enc, dec) = autoencoder_specs(64, &[64], 8, Activation::Tanh).expect("specs");
    let autoencoder =
        Autoencoder::trained(enc.build(1).expect("encoder"), dec.build(2).expect("decoder"))
            .expect("autoencoder");
    Fixture {
        baseline: Tensor::zeros(vec![64]),
        data,
        classifier,
        autoencoder,
    }
}
