//! Shared fixtures for the criterion benchmarks.

use genrec_core::numerics::{gaussian_matrix, gaussian_vector};
use genrec_core::sensing::{make_outliers, OutlierSpec};
use genrec_core::{Activation, DMatrix, DVector, GeneratorNet};

/// The reference recovery instance used across benchmarks: identity net
/// [5, 20, 40], a 30x40 Gaussian sensing matrix, and 3 large outliers.
pub fn reference_instance() -> (GeneratorNet, DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let net = GeneratorNet::init_gaussian(&[5, 20, 40], Activation::Identity, 1).unwrap();
    let m = gaussian_matrix(30, 40, 2);
    let z0 = gaussian_vector(5, 3);
    let (e, _) = make_outliers(30, &OutlierSpec::with_count(3), 4).unwrap();
    let y = &m * net.forward(&z0).unwrap() + e;
    (net, m, z0, y)
}

pub fn leaky_net() -> GeneratorNet {
    GeneratorNet::init_gaussian(&[5, 20, 40], Activation::leaky(0.2).unwrap(), 1).unwrap()
}
