//! Binary cross-entropy with optional L2 weight penalty.

use super::tensor::{Scalar, Tensor};
use super::NnError;

/// Predictions are clamped into `[BCE_EPS, 1 - BCE_EPS]` before the log.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Clone, Debug)]
pub struct BceOutput<T: Scalar> {
    pub loss: T,
    /// d loss / d pred (zero where the prediction was clamped).
    pub grad_pred: Tensor<T>,
    /// d loss / d w for every L2-penalised parameter, in the order given.
    pub grad_l2: Vec<Tensor<T>>,
}

/// Mean binary cross-entropy plus `l2_strength * sum ||w||^2`.
pub fn bce_loss<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    l2_strength: T,
    l2_params: &[&Tensor<T>],
) -> Result<BceOutput<T>, NnError> {
    pred.expect_same_shape(target, "bce_loss")?;
    let eps = T::from_f64(BCE_EPS);
    let hi = T::one() - eps;
    let n = T::from_f64(pred.len() as f64);
    let mut total = T::zero();
    let mut grad = Tensor::zeros(pred.shape());
    for ((g, &p), &t) in grad
        .data_mut()
        .iter_mut()
        .zip(pred.data())
        .zip(target.data())
    {
        let pc = p.max(eps).min(hi);
        total = total - (t * pc.ln() + (T::one() - t) * (T::one() - pc).ln());
        *g = if p < eps || p > hi {
            T::zero()
        } else {
            (pc - t) / (pc * (T::one() - pc)) / n
        };
    }
    let mut loss = total / n;
    let two = T::from_f64(2.0);
    let grad_l2 = l2_params
        .iter()
        .map(|w| {
            loss = loss + l2_strength * w.sum_squares();
            w.scale(two * l2_strength)
        })
        .collect();
    Ok(BceOutput {
        loss,
        grad_pred: grad,
        grad_l2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_has_near_zero_loss() {
        let t = Tensor::new(&[4], vec![0.0f64, 1.0, 1.0, 0.0]).unwrap();
        let out = bce_loss(&t, &t, 0.0, &[]).unwrap();
        assert!(out.loss >= 0.0 && out.loss <= 1e-6, "{}", out.loss);
    }

    #[test]
    fn half_everywhere_is_ln2() {
        let p = Tensor::full(&[2, 3], 0.5f64);
        let t = Tensor::new(&[2, 3], vec![0.0, 1.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        let out = bce_loss(&p, &t, 0.0, &[]).unwrap();
        assert!((out.loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn l2_term_is_added() {
        let p = Tensor::full(&[1], 0.5f64);
        let t = Tensor::full(&[1], 1.0f64);
        let w = Tensor::new(&[2], vec![1.0, 2.0]).unwrap();
        let out = bce_loss(&p, &t, 0.1, &[&w]).unwrap();
        assert!((out.loss - (std::f64::consts::LN_2 + 0.5)).abs() < 1e-12);
        assert_eq!(out.grad_l2[0].data(), &[0.2, 0.4]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let p = Tensor::full(&[2], 0.5f32);
        let t = Tensor::full(&[3], 1.0f32);
        assert!(bce_loss(&p, &t, 0.0, &[]).is_err());
    }
}
