//! Central finite-difference gradient checking.

use super::ParamSet;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Flat index of the worst entry.
    pub worst_index: usize,
    pub checked: usize,
    pub passed: bool,
}

/// Entries whose analytic and numeric magnitudes both fall below this are
/// compared absolutely rather than relatively.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// Compare `analytic` against central differences of `loss` around `params`.
///
/// `loss` must be deterministic (freeze any sampling noise before calling).
/// `stride` > 1 checks every `stride`-th parameter, for large networks.
pub fn gradient_check<P, F>(
    params: &P,
    loss: F,
    analytic: &P,
    step: f64,
    tolerance: f64,
    stride: usize,
) -> GradCheckReport
where
    P: ParamSet + Clone,
    F: Fn(&P) -> f64,
{
    let base = params.to_flat();
    let grad = analytic.to_flat();
    assert_eq!(base.len(), grad.len(), "analytic gradient layout mismatch");
    let mut probe = params.clone();
    let mut flat = base.clone();
    let mut worst = (0.0f64, 0usize);
    let mut checked = 0;
    for i in (0..base.len()).step_by(stride.max(1)) {
        flat[i] = base[i] + step;
        probe.set_from_flat(&flat);
        let up = loss(&probe);
        flat[i] = base[i] - step;
        probe.set_from_flat(&flat);
        let down = loss(&probe);
        flat[i] = base[i];
        let numeric = (up - down) / (2.0 * step);
        let err = (numeric - grad[i]).abs() / numeric.abs().max(grad[i].abs()).max(RELATIVE_FLOOR);
        if err > worst.0 || !err.is_finite() {
            worst = (if err.is_finite() { err } else { f64::INFINITY }, i);
        }
        checked += 1;
    }
    GradCheckReport {
        max_relative_error: worst.0,
        worst_index: worst.1,
        checked,
        passed: worst.0 <= tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ops::log_softmax;
    use crate::numerics::{Activation, MlpParams, Rng, Tensor};

    fn sum_loss(net: &MlpParams, x: &Tensor) -> f64 {
        net.forward(x).unwrap().data().iter().sum()
    }

    #[test]
    fn linear_loss_matches_exactly() {
        let mut rng = Rng::new(5);
        let net = MlpParams::init(&[4, 3], Activation::Identity, Activation::Identity, false, &mut rng);
        let x = Tensor::matrix(2, 4, vec![0.1, 0.2, -0.3, 0.4, 1.0, -1.0, 0.5, 0.0]).unwrap();
        let (g, _) = net.backprop(&x, &Tensor::matrix(2, 3, vec![1.0; 6]).unwrap()).unwrap();
        let r = gradient_check(&net, |p| sum_loss(p, &x), &g, 1e-5, 1e-9, 1);
        assert!(r.passed, "{r:?}");
    }

    fn xent(net: &MlpParams, x: &Tensor, labels: &[usize]) -> (f64, Tensor) {
        let logits = net.forward(x).unwrap();
        let n = labels.len() as f64;
        let mut loss = 0.0;
        let mut grad = Vec::new();
        for (row, &y) in logits.iter_rows().zip(labels) {
            let lp = log_softmax(row);
            loss -= lp[y] / n;
            for (k, l) in lp.iter().enumerate() {
                grad.push((l.exp() - if k == y { 1.0 } else { 0.0 }) / n);
            }
        }
        (loss, Tensor::matrix(labels.len(), logits.cols(), grad).unwrap())
    }

    #[test]
    fn softmax_cross_entropy_head_passes() {
        let mut rng = Rng::new(6);
        let net = MlpParams::init(&[5, 8, 4], Activation::Tanh, Activation::Identity, true, &mut rng);
        let x = Tensor::matrix(3, 5, (0..15).map(|_| rng.normal()).collect()).unwrap();
        let labels = [0, 3, 1];
        let (_, dl) = xent(&net, &x, &labels);
        let (g, _) = net.backprop(&x, &dl).unwrap();
        let r = gradient_check(&net, |p| xent(p, &x, &labels).0, &g, 1e-5, 1e-4, 1);
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn planted_fault_fails() {
        let mut rng = Rng::new(7);
        let net = MlpParams::init(&[5, 8, 4], Activation::Tanh, Activation::Identity, false, &mut rng);
        let x = Tensor::matrix(3, 5, (0..15).map(|_| rng.normal()).collect()).unwrap();
        let labels = [2, 2, 1];
        let (_, dl) = xent(&net, &x, &labels);
        let (mut g, _) = net.backprop(&x, &dl).unwrap();
        for s in g.slices_mut() {
            s.iter_mut().for_each(|v| *v *= 2.0);
        }
        let r = gradient_check(&net, |p| xent(p, &x, &labels).0, &g, 1e-5, 1e-4, 1);
        assert!(!r.passed);
    }
}
