mod common;

use common::grad;
use common::FD_TOLERANCE;

fn assert_small(name: &str, worst: f64) {
    assert!(worst < FD_TOLERANCE, "{name}: worst relative error {worst:.3e}");
}

#[test]
fn conv2d_gradients() {
    assert_small("conv2d", grad::conv2d());
}

#[test]
fn maxpool_gradients() {
    assert_small("maxpool2d", grad::maxpool2d());
}

#[test]
fn batchnorm_gradients() {
    assert_small("batchnorm2d", grad::batchnorm2d());
}

#[test]
fn dense_gradients() {
    assert_small("dense", grad::dense());
}

#[test]
fn activation_gradients() {
    assert_small("activations", grad::activations());
}

#[test]
fn elementwise_gradients() {
    assert_small("add/bias/mean/reshape", grad::elementwise());
}

#[test]
fn loss_gradients() {
    assert_small("bce/nll", grad::losses());
}

#[test]
fn composed_network_gradients() {
    assert_small("conv-pool-dense-bce", grad::composed());
}

#[test]
fn desk_ensemble_gradients_at_small_step() {
    assert_small("desk ensemble", grad::desk_ensemble(1e-7));
}
