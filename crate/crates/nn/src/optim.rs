//! SGD with classical momentum.

use crate::param::ParamStore;

/// One optimizer step over every trainable entry:
/// `buf <- momentum * buf + grad`, `value <- value - lr * buf`, then the
/// gradient is zeroed. Running statistics are left untouched.
pub fn sgd_step(store: &mut ParamStore, lr: f64, momentum: f64) {
    for e in store.entries_mut() {
        if !e.kind.is_trainable() {
            continue;
        }
        let p = &mut e.param;
        let bufs = p.momentum_buf.data_mut();
        let grads = p.grad.data_mut();
        let vals = p.value.data_mut();
        for ((b, g), v) in bufs.iter_mut().zip(grads.iter_mut()).zip(vals.iter_mut()) {
            *b = momentum * *b + *g;
            *v -= lr * *b;
            *g = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::{ParamId, ParamKind};
    use crate::tensor::Tensor;

    fn single(v: f64) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("w", ParamKind::Weight, Tensor::scalar(v));
        (s, id)
    }

    #[test]
    fn zero_grad_leaves_value() {
        let (mut s, id) = single(1.5);
        sgd_step(&mut s, 0.1, 0.9);
        assert_eq!(s.value(id).data(), &[1.5]);
    }

    #[test]
    fn momentum_hand_iteration() {
        let (mut s, id) = single(0.0);
        s.param_mut(id).grad.fill(1.0);
        sgd_step(&mut s, 0.001, 0.9);
        assert!((s.value(id).data()[0] + 0.001).abs() < 1e-15);
        assert_eq!(s.param(id).grad.data(), &[0.0]);
        s.param_mut(id).grad.fill(1.0);
        sgd_step(&mut s, 0.001, 0.9);
        // second step moves by lr * (0.9 + 1) = 0.0019
        assert!((s.value(id).data()[0] + 0.001 + 0.0019).abs() < 1e-15);
    }

    #[test]
    fn zero_momentum_is_plain_descent() {
        let (mut s, id) = single(2.0);
        for _ in 0..3 {
            s.param_mut(id).grad.fill(0.5);
            sgd_step(&mut s, 0.1, 0.0);
        }
        assert!((s.value(id).data()[0] - 1.85).abs() < 1e-12);
    }

    #[test]
    fn running_stats_are_not_updated() {
        let mut s = ParamStore::new();
        let id = s.add("rm", ParamKind::RunningMean, Tensor::scalar(0.3));
        s.param_mut(id).grad.fill(1.0);
        sgd_step(&mut s, 1.0, 0.0);
        assert_eq!(s.value(id).data(), &[0.3]);
    }

    #[test]
    fn one_step_decreases_quadratic() {
        // f(w) = (w - 3)^2
        let (mut s, id) = single(0.0);
        let f = |w: f64| (w - 3.0) * (w - 3.0);
        let before = f(s.value(id).data()[0]);
        let g = 2.0 * (s.value(id).data()[0] - 3.0);
        s.param_mut(id).grad.fill(g);
        sgd_step(&mut s, 0.01, 0.0);
        assert!(f(s.value(id).data()[0]) < before);
    }
}
