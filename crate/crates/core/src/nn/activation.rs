use serde::{Deserialize, Serialize};

use super::tensor::{Scalar, Tensor};
use super::NnError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
}

pub fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub fn activation<T: Scalar>(input: &Tensor<T>, kind: Activation) -> Tensor<T> {
    match kind {
        Activation::Relu => input.map(|v| v.max(T::zero())),
        Activation::Sigmoid => input.map(sigmoid),
    }
}

/// Gradient through the activation. `output` is the forward result, from
/// which both derivatives can be recovered.
pub fn activation_backward<T: Scalar>(
    output: &Tensor<T>,
    grad_out: &Tensor<T>,
    kind: Activation,
) -> Result<Tensor<T>, NnError> {
    match kind {
        Activation::Relu => {
            output.zip_map(grad_out, |y, g| if y > T::zero() { g } else { T::zero() })
        }
        Activation::Sigmoid => output.zip_map(grad_out, |y, g| g * y * (T::one() - y)),
    }
}
