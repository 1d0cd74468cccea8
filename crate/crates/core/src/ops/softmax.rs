//! Numerically stable softmax and fused softmax cross-entropy.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Row-wise softmax with max-subtraction; rows sum to 1.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let sh = logits.shape();
    if sh.len() != 2 {
        return Err(Error::shape(format!("softmax wants (N,K), got {:?}", sh)));
    }
    let (n, k) = (sh[0], sh[1]);
    let mut out = Tensor::zeros(sh);
    let xd = logits.data();
    let od = out.data_mut();
    for ni in 0..n {
        let row = &xd[ni * k..(ni + 1) * k];
        let orow = &mut od[ni * k..(ni + 1) * k];
        let mut m = row[0];
        for &v in &row[1..] {
            m = m.maximum(v);
        }
        let mut sum = T::ZERO;
        for (o, &v) in orow.iter_mut().zip(row) {
            *o = (v - m).exp();
            sum += *o;
        }
        let inv = T::ONE / sum;
        for o in orow.iter_mut() {
            *o *= inv;
        }
    }
    Ok(out)
}

/// Mean negative log-likelihood over the batch plus the probability rows.
/// The gradient with respect to the logits is `(probs - onehot) / N`.
pub fn softmax_cross_entropy_forward<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(T, Tensor<T>)> {
    softmax_cross_entropy_smoothed_forward(logits, labels, T::ZERO)
}

/// Cross entropy against smoothed targets
/// `q = (1 - smoothing) * onehot + smoothing / K`; `smoothing = 0` is plain
/// cross entropy.
pub fn softmax_cross_entropy_smoothed_forward<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
    smoothing: T,
) -> Result<(T, Tensor<T>)> {
    let sh = logits.shape();
    if sh.len() != 2 {
        return Err(Error::shape(format!("cross entropy wants (N,K), got {:?}", sh)));
    }
    let (n, k) = (sh[0], sh[1]);
    if labels.len() != n {
        return Err(Error::shape(format!("{} labels for batch of {}", labels.len(), n)));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::invalid(format!("label {} out of range [0,{})", bad, k)));
    }
    let probs = softmax(logits)?;
    let pd = probs.data();
    let uniform = smoothing * T::from_f64(1.0 / k as f64);
    let mut loss = T::ZERO;
    for (ni, &y) in labels.iter().enumerate() {
        if smoothing == T::ZERO {
            loss += -(pd[ni * k + y].ln());
        } else {
            let prow = &pd[ni * k..(ni + 1) * k];
            for (j, &p) in prow.iter().enumerate() {
                let q = if j == y { T::ONE - smoothing + uniform } else { uniform };
                loss += -(q * p.ln());
            }
        }
    }
    loss *= T::from_f64(1.0 / n as f64);
    Ok((loss, probs))
}

/// Accumulate `upstream * (probs - onehot) / N` into `dlogits`.
pub fn softmax_cross_entropy_backward<T: Scalar>(
    probs: &Tensor<T>,
    labels: &[usize],
    upstream: T,
    dlogits: &mut [T],
) {
    softmax_cross_entropy_smoothed_backward(probs, labels, T::ZERO, upstream, dlogits)
}

pub fn softmax_cross_entropy_smoothed_backward<T: Scalar>(
    probs: &Tensor<T>,
    labels: &[usize],
    smoothing: T,
    upstream: T,
    dlogits: &mut [T],
) {
    let sh = probs.shape();
    let (n, k) = (sh[0], sh[1]);
    let scale = upstream * T::from_f64(1.0 / n as f64);
    let uniform = smoothing * T::from_f64(1.0 / k as f64);
    let pd = probs.data();
    for (ni, &y) in labels.iter().enumerate() {
        let prow = &pd[ni * k..(ni + 1) * k];
        let drow = &mut dlogits[ni * k..(ni + 1) * k];
        for j in 0..k {
            let q = if j == y { T::ONE - smoothing + uniform } else { uniform };
            drow[j] += scale * (prow[j] - q);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_k() {
        let logits = Tensor::<f64>::filled(&[1, 20], 0.7);
        let (loss, probs) = softmax_cross_entropy_forward(&logits, &[5]).unwrap();
        assert!((loss - (20.0f64).ln()).abs() < 1e-12);
        assert!(probs.data().iter().all(|&p| (p - 0.05).abs() < 1e-12));
    }

    #[test]
    fn extreme_logits_do_not_overflow() {
        let logits = Tensor::from_vec(&[1, 2], vec![100.0, -100.0]).unwrap();
        let (loss, probs) = softmax_cross_entropy_forward(&logits, &[0]).unwrap();
        assert!(loss >= 0.0 && loss < 1e-8, "loss {}", loss);
        assert!(probs.check_finite("softmax").is_ok());
    }

    // Oracle: closed form -ln(softmax([1,0])[1]) = ln(1 + e).
    #[test]
    fn two_class_closed_form() {
        let logits = Tensor::from_vec(&[1, 2], vec![1.0, 0.0]).unwrap();
        let (loss, _) = softmax_cross_entropy_forward(&logits, &[1]).unwrap();
        let expect = (1.0 + std::f64::consts::E).ln();
        assert!((loss - expect).abs() < 1e-12);
        assert!((expect - 1.3133).abs() < 1e-4);
    }

    #[test]
    fn rows_sum_to_one() {
        let mut r = crate::rng::Rng::new(2);
        let logits = Tensor::from_vec(
            &[4, 7],
            (0..28).map(|_| r.uniform_range(-5.0, 5.0)).collect(),
        )
        .unwrap();
        let p = softmax(&logits).unwrap();
        for ni in 0..4 {
            let s: f64 = p.data()[ni * 7..(ni + 1) * 7].iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn label_out_of_range_is_an_error() {
        let logits = Tensor::<f64>::filled(&[1, 3], 0.0);
        assert!(softmax_cross_entropy_forward(&logits, &[3]).is_err());
    }

    #[test]
    fn gradient_matches_probs_minus_onehot() {
        let logits = Tensor::from_vec(&[1, 3], vec![0.5, -0.5, 1.0]).unwrap();
        let (_, probs) = softmax_cross_entropy_forward(&logits, &[2]).unwrap();
        let mut d = vec![0.0; 3];
        softmax_cross_entropy_backward(&probs, &[2], 1.0, &mut d);
        assert!((d[0] - probs.data()[0]).abs() < 1e-12);
        assert!((d[2] - (probs.data()[2] - 1.0)).abs() < 1e-12);
    }
}
