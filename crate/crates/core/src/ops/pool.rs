//! Temporal max pooling and global average pooling.

use crate::error::{Error, Result};
use crate::ops::conv::out_len;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pool1dSpec {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Pool1dSpec {
    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::invalid("pool kernel and stride must be >= 1"));
        }
        // padding >= kernel would allow windows made of padding only
        if self.padding >= self.kernel {
            return Err(Error::invalid("pool padding must be < kernel"));
        }
        Ok(())
    }

    pub fn out_len(&self, l: usize) -> Result<usize> {
        out_len(l, self.kernel, self.stride, self.padding)
    }
}

/// Max pool over `(N,L,C)`. Padding is a -inf sentinel and is never selected.
/// Returns the pooled tensor and, per output element, the flat index of the
/// winning input element (ties broken toward the lowest index) for backward
/// routing.
pub fn maxpool1d_forward<T: Scalar>(
    x: &Tensor<T>,
    spec: &Pool1dSpec,
) -> Result<(Tensor<T>, Vec<u32>)> {
    spec.validate()?;
    let sh = x.shape();
    if sh.len() != 3 {
        return Err(Error::shape(format!("maxpool input must be (N,L,C), got {:?}", sh)));
    }
    let (n, l, c) = (sh[0], sh[1], sh[2]);
    let lo = spec.out_len(l)?;
    let mut out = Tensor::zeros(&[n, lo, c]);
    let mut argmax = vec![0u32; n * lo * c];
    let xd = x.data();
    let od = out.data_mut();
    for ni in 0..n {
        for lt in 0..lo {
            for ch in 0..c {
                let mut best = T::neg_infinity();
                let mut best_i = usize::MAX;
                for kk in 0..spec.kernel {
                    let li = (lt * spec.stride + kk) as isize - spec.padding as isize;
                    if li < 0 || li as usize >= l {
                        continue;
                    }
                    let v = xd[(ni * l + li as usize) * c + ch];
                    if v > best {
                        best = v;
                        best_i = (ni * l + li as usize) * c + ch;
                    }
                }
                if best_i == usize::MAX {
                    return Err(Error::shape("max pool window contains no input elements"));
                }
                let oi = (ni * lo + lt) * c + ch;
                od[oi] = best;
                argmax[oi] = best_i as u32;
            }
        }
    }
    Ok((out, argmax))
}

/// Route gradients to the recorded argmax positions.
pub fn maxpool1d_backward<T: Scalar>(dy: &[T], argmax: &[u32], dx: &mut [T]) {
    debug_assert_eq!(dy.len(), argmax.len());
    for (i, &g) in dy.iter().enumerate() {
        dx[argmax[i] as usize] += g;
    }
}

/// Per-channel temporal mean: `(N,L,C) -> (N,C)`.
pub fn global_avg_pool_forward<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let sh = x.shape();
    if sh.len() != 3 || sh[1] == 0 {
        return Err(Error::shape(format!("gap input must be (N,L>=1,C), got {:?}", sh)));
    }
    let (n, l, c) = (sh[0], sh[1], sh[2]);
    let inv_l = T::from_f64(1.0 / l as f64);
    let mut out = Tensor::zeros(&[n, c]);
    let xd = x.data();
    let od = out.data_mut();
    for ni in 0..n {
        let acc = &mut od[ni * c..(ni + 1) * c];
        for lt in 0..l {
            let row = &xd[(ni * l + lt) * c..(ni * l + lt + 1) * c];
            for ch in 0..c {
                acc[ch] += row[ch];
            }
        }
        for v in acc.iter_mut() {
            *v *= inv_l;
        }
    }
    Ok(out)
}

/// Distribute `dy/L` uniformly over the temporal axis; `dy` is flat `(N,C)`.
pub fn global_avg_pool_backward<T: Scalar>(dy: &[T], n: usize, l: usize, c: usize, dx: &mut [T]) {
    debug_assert_eq!(dy.len(), n * c);
    debug_assert_eq!(dx.len(), n * l * c);
    let inv_l = T::from_f64(1.0 / l as f64);
    let dyd = dy;
    for ni in 0..n {
        for lt in 0..l {
            let row = &mut dx[(ni * l + lt) * c..(ni * l + lt + 1) * c];
            for ch in 0..c {
                row[ch] += dyd[ni * c + ch] * inv_l;
            }
        }
    }
}
