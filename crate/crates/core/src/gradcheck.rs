//! Central-difference gradient oracle.

use crate::tensor::{NoGradGuard, Tensor};

/// Compares the reverse-mode gradient of `f` at `x` against central
/// differences. Returns the maximum over coordinates of
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
///
/// `f` must produce a scalar tensor and must be a pure function of its
/// argument (it may capture parameters, which are held fixed).
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> f64
where
    F: Fn(&Tensor) -> Tensor,
{
    let leaf = x.detach().requires_grad();
    let y = f(&leaf);
    assert_eq!(y.len(), 1, "grad_check requires a scalar-valued function");
    y.backward();
    let analytic = leaf.grad().unwrap_or_else(|| vec![0.0; leaf.len()]);

    let _guard = NoGradGuard::new();
    let base = x.data().to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += eps;
        let mut minus = base.clone();
        minus[i] -= eps;
        let fp = f(&Tensor::from_vec(x.shape().to_vec(), plus)).item();
        let fm = f(&Tensor::from_vec(x.shape().to_vec(), minus)).item();
        let numeric = (fp - fm) / (2.0 * eps);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sum_is_exact() {
        let x = Tensor::from_vec(vec![4], vec![0.3, -1.2, 2.0, 0.0]);
        let err = grad_check(|t| t.sum_all(), &x, 1e-5);
        // Not exactly zero: the compiler may contract the central difference
        // with FMA, leaving rounding noise at the last few bits.
        assert!(err < 1e-10, "err = {err}");
    }

    #[test]
    fn sum_of_squares_is_tight() {
        let x = Tensor::from_vec(vec![5], vec![0.5, -0.25, 1.5, 2.0, -1.0]);
        let err = grad_check(|t| t.mul(t).sum_all(), &x, 1e-5);
        assert!(err < 1e-7, "err = {err}");
    }

    #[test]
    fn random_matmul_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = Tensor::randn(vec![5, 7], 1.0, &mut rng);
        let b = Tensor::randn(vec![7, 3], 1.0, &mut rng);
        let weights = Tensor::randn(vec![5, 3], 1.0, &mut rng);
        // gradient w.r.t. the left operand
        let err = grad_check(|t| t.matmul(&b).mul(&weights).sum_all(), &a, 1e-5);
        assert!(err < 1e-6, "left err = {err}");
        // and the right operand
        let err = grad_check(|t| a.matmul(t).mul(&weights).sum_all(), &b, 1e-5);
        assert!(err < 1e-6, "right err = {err}");
    }

    #[test]
    fn elementwise_and_norm_ops_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let x = Tensor::randn(vec![3, 6], 1.0, &mut rng);
            let w = Tensor::randn(vec![3, 6], 1.0, &mut rng);
            let err = grad_check(|t| t.softmax_last().mul(&w).sum_all(), &x, 1e-5);
            assert!(err < 1e-4, "softmax err = {err}");
            let err = grad_check(|t| t.layer_norm_last(1e-6).mul(&w).sum_all(), &x, 1e-5);
            assert!(err < 1e-4, "layer_norm err = {err}");
            let err = grad_check(|t| t.gelu().mul(&w).sum_all(), &x, 1e-5);
            assert!(err < 1e-4, "gelu err = {err}");
        }
    }
}
