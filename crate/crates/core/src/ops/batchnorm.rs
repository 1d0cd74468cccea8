//! Batch normalization over the `(batch, length)` axes of `(N,L,C)` tensors.
//!
//! Training mode normalizes with batch statistics (population variance) and
//! maintains running statistics by exponential moving average:
//! `running = momentum * running + (1 - momentum) * batch`. Inference mode
//! normalizes with the running statistics. Running stats initialize to
//! (mean 0, var 1), so inference is well-defined before any update.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BnSpec {
    pub epsilon: f64,
    pub momentum: f64,
}

impl Default for BnSpec {
    fn default() -> Self {
        BnSpec { epsilon: BN_EPSILON, momentum: BN_MOMENTUM }
    }
}

/// Per-channel batch statistics saved by the training forward pass for
/// backward.
#[derive(Debug, Clone)]
pub struct BnSaved<T> {
    pub mean: Vec<T>,
    pub inv_std: Vec<T>,
}

fn check<T: Scalar>(x: &Tensor<T>, c_expected: usize) -> Result<(usize, usize, usize)> {
    let sh = x.shape();
    if sh.len() != 3 {
        return Err(Error::shape(format!("batchnorm input must be (N,L,C), got {:?}", sh)));
    }
    if sh[2] != c_expected {
        return Err(Error::shape(format!(
            "batchnorm input has {} channels, parameters have {}",
            sh[2], c_expected
        )));
    }
    Ok((sh[0], sh[1], sh[2]))
}

/// Training-mode forward. Updates `running_mean`/`running_var` in place and
/// returns the normalized output plus saved batch statistics.
#[allow(clippy::too_many_arguments)]
pub fn batchnorm_train_forward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    running_mean: &mut [T],
    running_var: &mut [T],
    spec: &BnSpec,
) -> Result<(Tensor<T>, BnSaved<T>)> {
    let (n, l, c) = check(x, gamma.len())?;
    let m = n * l;
    if m < 2 {
        return Err(Error::invalid(format!(
            "batchnorm training needs batch*length >= 2, got {}",
            m
        )));
    }
    let inv_m = T::from_f64(1.0 / m as f64);
    let eps = T::from_f64(spec.epsilon);
    let mom = T::from_f64(spec.momentum);
    let one_minus_mom = T::from_f64(1.0 - spec.momentum);
    let xd = x.data();

    let mut mean = vec![T::ZERO; c];
    for i in 0..m {
        let row = &xd[i * c..(i + 1) * c];
        for ch in 0..c {
            mean[ch] += row[ch];
        }
    }
    for v in mean.iter_mut() {
        *v *= inv_m;
    }

    let mut var = vec![T::ZERO; c];
    for i in 0..m {
        let row = &xd[i * c..(i + 1) * c];
        for ch in 0..c {
            let d = row[ch] - mean[ch];
            var[ch] += d * d;
        }
    }
    for v in var.iter_mut() {
        *v *= inv_m;
    }

    let inv_std: Vec<T> = var.iter().map(|&v| T::ONE / (v + eps).sqrt()).collect();

    let mut out = Tensor::zeros(x.shape());
    let od = out.data_mut();
    for i in 0..m {
        let row = &xd[i * c..(i + 1) * c];
        let orow = &mut od[i * c..(i + 1) * c];
        for ch in 0..c {
            orow[ch] = gamma[ch] * (row[ch] - mean[ch]) * inv_std[ch] + beta[ch];
        }
    }

    for ch in 0..c {
        running_mean[ch] = mom * running_mean[ch] + one_minus_mom * mean[ch];
        running_var[ch] = mom * running_var[ch] + one_minus_mom * var[ch];
    }

    let _ = (n, l);
    Ok((out, BnSaved { mean, inv_std }))
}

/// Inference-mode forward using running statistics; no state is mutated.
pub fn batchnorm_infer_forward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    running_mean: &[T],
    running_var: &[T],
    spec: &BnSpec,
) -> Result<Tensor<T>> {
    let (n, l, c) = check(x, gamma.len())?;
    let eps = T::from_f64(spec.epsilon);
    // fold into scale/shift once per channel
    let scale: Vec<T> = (0..c)
        .map(|ch| gamma[ch] / (running_var[ch] + eps).sqrt())
        .collect();
    let shift: Vec<T> = (0..c)
        .map(|ch| beta[ch] - scale[ch] * running_mean[ch])
        .collect();
    let mut out = Tensor::zeros(x.shape());
    let xd = x.data();
    let od = out.data_mut();
    for i in 0..n * l {
        let row = &xd[i * c..(i + 1) * c];
        let orow = &mut od[i * c..(i + 1) * c];
        for ch in 0..c {
            orow[ch] = scale[ch] * row[ch] + shift[ch];
        }
    }
    Ok(out)
}

/// Backward for training mode (batch statistics participate in the
/// gradient). Accumulates into `dx`, `dgamma`, `dbeta`.
pub fn batchnorm_train_backward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &[T],
    saved: &BnSaved<T>,
    dy: &[T],
    dx: &mut [T],
    dgamma: &mut [T],
    dbeta: &mut [T],
) -> Result<()> {
    let (n, l, c) = check(x, gamma.len())?;
    let m = n * l;
    let inv_m = T::from_f64(1.0 / m as f64);
    let xd = x.data();
    let dyd = dy;

    // Reductions: sum(dy) and sum(dy * xhat) per channel.
    let mut sum_dy = vec![T::ZERO; c];
    let mut sum_dy_xhat = vec![T::ZERO; c];
    for i in 0..m {
        let xrow = &xd[i * c..(i + 1) * c];
        let dyrow = &dyd[i * c..(i + 1) * c];
        for ch in 0..c {
            let xhat = (xrow[ch] - saved.mean[ch]) * saved.inv_std[ch];
            sum_dy[ch] += dyrow[ch];
            sum_dy_xhat[ch] += dyrow[ch] * xhat;
        }
    }
    for ch in 0..c {
        dgamma[ch] += sum_dy_xhat[ch];
        dbeta[ch] += sum_dy[ch];
    }

    // dx = gamma * inv_std * (dy - mean(dy) - xhat * mean(dy*xhat))
    for i in 0..m {
        let xrow = &xd[i * c..(i + 1) * c];
        let dyrow = &dyd[i * c..(i + 1) * c];
        let dxrow = &mut dx[i * c..(i + 1) * c];
        for ch in 0..c {
            let xhat = (xrow[ch] - saved.mean[ch]) * saved.inv_std[ch];
            dxrow[ch] += gamma[ch]
                * saved.inv_std[ch]
                * (dyrow[ch] - inv_m * sum_dy[ch] - xhat * inv_m * sum_dy_xhat[ch]);
        }
    }
    Ok(())
}

/// Backward for inference mode: the running statistics are constants, so the
/// map is a per-channel affine transform.
#[allow(clippy::too_many_arguments)]
pub fn batchnorm_infer_backward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &[T],
    running_mean: &[T],
    running_var: &[T],
    spec: &BnSpec,
    dy: &[T],
    dx: &mut [T],
    dgamma: &mut [T],
    dbeta: &mut [T],
) -> Result<()> {
    let (n, l, c) = check(x, gamma.len())?;
    let eps = T::from_f64(spec.epsilon);
    let inv_std: Vec<T> = (0..c).map(|ch| T::ONE / (running_var[ch] + eps).sqrt()).collect();
    let xd = x.data();
    let dyd = dy;
    for i in 0..n * l {
        let xrow = &xd[i * c..(i + 1) * c];
        let dyrow = &dyd[i * c..(i + 1) * c];
        let dxrow = &mut dx[i * c..(i + 1) * c];
        for ch in 0..c {
            let xhat = (xrow[ch] - running_mean[ch]) * inv_std[ch];
            dxrow[ch] += dyrow[ch] * gamma[ch] * inv_std[ch];
            dgamma[ch] += dyrow[ch] * xhat;
            dbeta[ch] += dyrow[ch];
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(n: usize) -> Vec<f64> {
        vec![1.0; n]
    }
    fn zeros(n: usize) -> Vec<f64> {
        vec![0.0; n]
    }

    #[test]
    fn already_normalized_batch_passes_through() {
        // per-channel zero-mean unit-variance input, gamma=1 beta=0
        let x = Tensor::from_vec(&[1, 2, 1], vec![-1.0, 1.0]).unwrap();
        let (mut rm, mut rv) = (zeros(1), ones(1));
        let (y, _) =
            batchnorm_train_forward(&x, &ones(1), &zeros(1), &mut rm, &mut rv, &BnSpec::default())
                .unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    // Oracle: closed-form population statistics.
    #[test]
    fn batch_1_2_3_closed_form() {
        let x = Tensor::from_vec(&[1, 3, 1], vec![1.0, 2.0, 3.0]).unwrap();
        let (mut rm, mut rv) = (zeros(1), ones(1));
        let spec = BnSpec { epsilon: 1e-5, momentum: 0.9 };
        let (y, saved) =
            batchnorm_train_forward(&x, &ones(1), &zeros(1), &mut rm, &mut rv, &spec).unwrap();
        let sigma = (2.0f64 / 3.0 + 1e-5).sqrt();
        let expect = [(1.0 - 2.0) / sigma, 0.0, (3.0 - 2.0) / sigma];
        for (a, b) in y.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
        }
        assert!((expect[0] + 1.2247).abs() < 1e-4);
        assert!((saved.mean[0] - 2.0).abs() < 1e-12);
        // running stats moved toward the batch: 0.9*0 + 0.1*2 = 0.2
        assert!((rm[0] - 0.2).abs() < 1e-12);
        assert!((rv[0] - (0.9 + 0.1 * 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn affine_of_normalized_batch() {
        // gamma=2 beta=1 on [1,2,3] -> 2*xhat + 1
        let x = Tensor::from_vec(&[1, 3, 1], vec![1.0, 2.0, 3.0]).unwrap();
        let (mut rm, mut rv) = (zeros(1), ones(1));
        let (y, _) = batchnorm_train_forward(
            &x,
            &[2.0],
            &[1.0],
            &mut rm,
            &mut rv,
            &BnSpec::default(),
        )
        .unwrap();
        let expect = [-1.4494, 1.0, 3.4494];
        for (a, b) in y.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-4, "{} vs {}", a, b);
        }
    }

    #[test]
    fn training_needs_two_elements() {
        let x = Tensor::from_vec(&[1, 1, 1], vec![1.0]).unwrap();
        let (mut rm, mut rv) = (zeros(1), ones(1));
        assert!(batchnorm_train_forward(
            &x,
            &ones(1),
            &zeros(1),
            &mut rm,
            &mut rv,
            &BnSpec::default()
        )
        .is_err());
    }

    #[test]
    fn inference_with_initialized_stats_is_near_identity() {
        let x = Tensor::from_vec(&[1, 2, 2], vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        let y = batchnorm_infer_forward(
            &x,
            &ones(2),
            &zeros(2),
            &zeros(2),
            &ones(2),
            &BnSpec::default(),
        )
        .unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-4);
        }
    }
}
