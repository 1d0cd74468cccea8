//! Rectified linear unit.

use crate::tensor::{Scalar, Tensor};

pub fn relu_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = x.clone();
    for v in out.data_mut() {
        if *v < T::ZERO {
            *v = T::ZERO;
        }
    }
    out
}

/// Subgradient 0 at exactly 0: gradient passes only where `x > 0`.
pub fn relu_backward<T: Scalar>(x: &Tensor<T>, dy: &[T], dx: &mut [T]) {
    for (i, (&xv, &g)) in x.data().iter().zip(dy).enumerate() {
        if xv > T::ZERO {
            dx[i] += g;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamps_negatives() {
        let x = Tensor::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu_forward(&x).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn identity_on_nonnegative_input() {
        let x = Tensor::from_vec(&[4], vec![0.0, 0.5, 1.0, 7.0]).unwrap();
        assert_eq!(relu_forward(&x).data(), x.data());
    }

    #[test]
    fn gradient_mask() {
        // d/dx sum(relu(x)) at [-1, 0, 2] = [0, 0, 1]
        let x = Tensor::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        let mut dx = vec![0.0; 3];
        relu_backward(&x, &[1.0, 1.0, 1.0], &mut dx);
        assert_eq!(dx, vec![0.0, 0.0, 1.0]);
    }
}
