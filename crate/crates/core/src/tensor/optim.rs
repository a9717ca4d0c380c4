use super::{ParamStore, Real};

/// Plain stochastic gradient descent: `w ← w − lr·∇w`, then zero the grads.
pub fn sgd_step<T: Real>(params: &mut ParamStore<T>, lr: T) {
    for p in params.iter_mut() {
        let grad = p.tensor.grad.take().expect("param grad buffer");
        p.tensor
            .data_mut()
            .iter_mut()
            .zip(&grad)
            .for_each(|(w, &g)| *w = *w - lr * g);
        p.tensor.grad = Some(grad);
        p.tensor.zero_grad();
    }
}
