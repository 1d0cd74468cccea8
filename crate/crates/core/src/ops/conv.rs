//! Grouped 1-d convolution, forward and backward.
//!
//! Activations are `(batch, length, channels)` row-major; weights are
//! `(out_channels, in_channels/groups, kernel_size)`. Padding is zero-valued.
//! Groups partition channels into contiguous blocks: group `g` convolves
//! input block `g` into output block `g`.

use crate::error::{Error, Result};
use crate::parallel::for_each_chunk_mut;
use crate::tensor::{Scalar, Tensor};

/// Static description of a convolution (everything but the weights).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conv1dSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl Conv1dSpec {
    pub fn validate(&self) -> Result<()> {
        if self.kernel_size == 0 || self.stride == 0 {
            return Err(Error::invalid("kernel_size and stride must be >= 1"));
        }
        if self.groups == 0 {
            return Err(Error::invalid("groups must be >= 1"));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::invalid("channel counts must be >= 1"));
        }
        if self.in_channels % self.groups != 0 || self.out_channels % self.groups != 0 {
            return Err(Error::invalid(format!(
                "groups {} must divide in_channels {} and out_channels {}",
                self.groups, self.in_channels, self.out_channels
            )));
        }
        Ok(())
    }

    /// Output length for input length `l`; error when non-positive.
    pub fn out_len(&self, l: usize) -> Result<usize> {
        out_len(l, self.kernel_size, self.stride, self.padding)
    }

    /// Expected weight shape `(out_channels, in_channels/groups, kernel_size)`.
    pub fn weight_shape(&self) -> [usize; 3] {
        [self.out_channels, self.in_channels / self.groups, self.kernel_size]
    }

    pub fn weight_count(&self) -> usize {
        self.weight_shape().iter().product()
    }

    /// Fan-in of one output unit, for initialization.
    pub fn fan_in(&self) -> usize {
        (self.in_channels / self.groups) * self.kernel_size
    }
}

/// Closed-form output length shared by convolution and pooling:
/// `floor((l + 2*padding - kernel) / stride) + 1`.
pub fn out_len(l: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = l + 2 * padding;
    if padded < kernel {
        return Err(Error::shape(format!(
            "window {} exceeds padded length {}",
            kernel, padded
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

fn check_input<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, spec: &Conv1dSpec) -> Result<(usize, usize, usize)> {
    spec.validate()?;
    let sh = x.shape();
    if sh.len() != 3 {
        return Err(Error::shape(format!("conv1d input must be (N,L,C), got {:?}", sh)));
    }
    let (n, l, c) = (sh[0], sh[1], sh[2]);
    if c != spec.in_channels {
        return Err(Error::shape(format!(
            "conv1d input has {} channels, spec wants {}",
            c, spec.in_channels
        )));
    }
    if w.shape() != spec.weight_shape() {
        return Err(Error::shape(format!(
            "conv1d weights {:?}, spec wants {:?}",
            w.shape(),
            spec.weight_shape()
        )));
    }
    let lo = spec.out_len(l)?;
    Ok((n, l, lo))
}

/// Forward pass: `(N,L,Cin) -> (N,L',Cout)`.
pub fn conv1d_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&[T]>,
    spec: &Conv1dSpec,
) -> Result<Tensor<T>> {
    let (n, l, lo) = check_input(x, w, spec)?;
    if let Some(b) = bias {
        if b.len() != spec.out_channels {
            return Err(Error::shape(format!(
                "bias length {} != out_channels {}",
                b.len(),
                spec.out_channels
            )));
        }
    }
    let (cin, cout, k) = (spec.in_channels, spec.out_channels, spec.kernel_size);
    let icg = cin / spec.groups;
    let ocg = cout / spec.groups;

    // Weights re-laid-out as (k, oc, icg) so the innermost input-channel loop
    // is contiguous in both operands.
    let mut wk = vec![T::ZERO; w.numel()];
    {
        let wd = w.data();
        for oc in 0..cout {
            for ic in 0..icg {
                for kk in 0..k {
                    wk[(kk * cout + oc) * icg + ic] = wd[(oc * icg + ic) * k + kk];
                }
            }
        }
    }

    let mut out = Tensor::zeros(&[n, lo, cout]);
    let xd = x.data();
    for_each_chunk_mut(out.data_mut(), lo * cout, |ni, sample_out| {
        let xs = &xd[ni * l * cin..(ni + 1) * l * cin];
        for lt in 0..lo {
            let row = &mut sample_out[lt * cout..(lt + 1) * cout];
            if let Some(b) = bias {
                row.copy_from_slice(b);
            }
            for kk in 0..k {
                let li = (lt * spec.stride + kk) as isize - spec.padding as isize;
                if li < 0 || li as usize >= l {
                    continue;
                }
                let xrow = &xs[li as usize * cin..(li as usize + 1) * cin];
                let wrow = &wk[kk * cout * icg..(kk + 1) * cout * icg];
                for g in 0..spec.groups {
                    let xg = &xrow[g * icg..(g + 1) * icg];
                    for oc_local in 0..ocg {
                        let oc = g * ocg + oc_local;
                        let wg = &wrow[oc * icg..(oc + 1) * icg];
                        let mut acc = T::ZERO;
                        for ic in 0..icg {
                            acc += xg[ic] * wg[ic];
                        }
                        row[oc] += acc;
                    }
                }
            }
        }
    });
    Ok(out)
}

/// Backward pass. `dy` is the flat upstream gradient of the `(N,L',Cout)`
/// output. Accumulates (`+=`) into the provided gradient buffers: `dx`
/// (N,L,Cin) flat, `dw` shaped like the weights, `db` per out-channel.
pub fn conv1d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    spec: &Conv1dSpec,
    dy: &[T],
    mut dx: Option<&mut [T]>,
    dw: &mut [T],
    mut db: Option<&mut [T]>,
) -> Result<()> {
    let (n, l, lo) = check_input(x, w, spec)?;
    if dy.len() != n * lo * spec.out_channels {
        return Err(Error::shape(format!(
            "conv1d dy has {} elements, want {}",
            dy.len(),
            n * lo * spec.out_channels
        )));
    }
    let (cin, cout, k, s, p) = (
        spec.in_channels,
        spec.out_channels,
        spec.kernel_size,
        spec.stride,
        spec.padding,
    );
    let icg = cin / spec.groups;
    let ocg = cout / spec.groups;
    let xd = x.data();
    let wd = w.data();
    let dyd = dy;

    // dW[oc, ic, k] = sum over (sample, position) of dy * x; one task per
    // output channel keeps each reduction in fixed order.
    for_each_chunk_mut(dw, icg * k, |oc, dwoc| {
        let g = oc / ocg;
        for ni in 0..n {
            let xs = &xd[ni * l * cin..(ni + 1) * l * cin];
            let dys = &dyd[ni * lo * cout..(ni + 1) * lo * cout];
            for lt in 0..lo {
                let g_dy = dys[lt * cout + oc];
                if g_dy == T::ZERO {
                    continue;
                }
                for kk in 0..k {
                    let li = (lt * s + kk) as isize - p as isize;
                    if li < 0 || li as usize >= l {
                        continue;
                    }
                    let xrow = &xs[li as usize * cin + g * icg..li as usize * cin + (g + 1) * icg];
                    let drow = &mut dwoc[kk..];
                    for ic in 0..icg {
                        drow[ic * k] += g_dy * xrow[ic];
                    }
                }
            }
        }
    });

    if let Some(db) = db.as_deref_mut() {
        debug_assert_eq!(db.len(), cout);
        for ni in 0..n {
            let dys = &dyd[ni * lo * cout..(ni + 1) * lo * cout];
            for lt in 0..lo {
                for oc in 0..cout {
                    db[oc] += dys[lt * cout + oc];
                }
            }
        }
    }

    if let Some(dx) = dx.as_deref_mut() {
        debug_assert_eq!(dx.len(), n * l * cin);
        for_each_chunk_mut(dx, l * cin, |ni, dxs| {
            let dys = &dyd[ni * lo * cout..(ni + 1) * lo * cout];
            for lt in 0..lo {
                let dyrow = &dys[lt * cout..(lt + 1) * cout];
                for kk in 0..k {
                    let li = (lt * s + kk) as isize - p as isize;
                    if li < 0 || li as usize >= l {
                        continue;
                    }
                    let dxrow = &mut dxs[li as usize * cin..(li as usize + 1) * cin];
                    for g in 0..spec.groups {
                        for oc_local in 0..ocg {
                            let oc = g * ocg + oc_local;
                            let g_dy = dyrow[oc];
                            if g_dy == T::ZERO {
                                continue;
                            }
                            let wrow = &wd[(oc * icg) * k + kk..];
                            for ic in 0..icg {
                                dxrow[g * icg + ic] += g_dy * wrow[ic * k];
                            }
                        }
                    }
                }
            }
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape, data.to_vec()).unwrap()
    }

    fn spec(cin: usize, cout: usize, k: usize, s: usize, p: usize, g: usize) -> Conv1dSpec {
        Conv1dSpec {
            in_channels: cin,
            out_channels: cout,
            kernel_size: k,
            stride: s,
            padding: p,
            groups: g,
        }
    }

    #[test]
    fn stem_shape_224_2_to_224_6() {
        let sp = spec(2, 6, 3, 1, 1, 1);
        let x = Tensor::<f64>::filled(&[1, 224, 2], 0.5);
        let w = Tensor::<f64>::filled(&sp.weight_shape(), 0.1);
        let y = conv1d_forward(&x, &w, None, &sp).unwrap();
        assert_eq!(y.shape(), [1, 224, 6]);
    }

    #[test]
    fn identity_kernel() {
        let sp = spec(1, 1, 1, 1, 0, 1);
        let x = t(&[1, 3, 1], &[1.0, 2.0, 3.0]);
        let w = t(&[1, 1, 1], &[1.0]);
        let y = conv1d_forward(&x, &w, None, &sp).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0, 3.0]);
    }

    // Oracle: direct summation over all taps of the padded sequence.
    fn direct_conv(x: &[f64], w: &[f64], s: usize, p: usize) -> Vec<f64> {
        let lo = (x.len() + 2 * p - w.len()) / s + 1;
        (0..lo)
            .map(|lt| {
                (0..w.len())
                    .map(|k| {
                        let li = (lt * s + k) as isize - p as isize;
                        if li < 0 || li as usize >= x.len() {
                            0.0
                        } else {
                            x[li as usize] * w[k]
                        }
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn edge_kernel_padded() {
        // [1,2,3,4], k=3, s=1, pad=1, w=[1,0,-1]
        let x = [1.0, 2.0, 3.0, 4.0];
        let w = [1.0, 0.0, -1.0];
        let expect = direct_conv(&x, &w, 1, 1);
        assert_eq!(expect, vec![-2.0, -2.0, -2.0, 3.0]);
        let sp = spec(1, 1, 3, 1, 1, 1);
        let y = conv1d_forward(&t(&[1, 4, 1], &x), &t(&[1, 1, 3], &w), None, &sp).unwrap();
        assert_eq!(y.data(), expect.as_slice());
    }

    #[test]
    fn bias_is_added_per_output_channel() {
        let sp = spec(1, 2, 1, 1, 0, 1);
        let x = t(&[1, 3, 1], &[1.0, 2.0, 3.0]);
        let w = t(&[2, 1, 1], &[1.0, 2.0]);
        let y = conv1d_forward(&x, &w, Some(&[10.0, 20.0]), &sp).unwrap();
        assert_eq!(y.data(), &[11.0, 22.0, 12.0, 24.0, 13.0, 26.0]);
    }

    #[test]
    fn group_divisibility_is_enforced() {
        let sp = spec(3, 2, 1, 1, 0, 2);
        assert!(sp.validate().is_err());
    }

    #[test]
    fn zero_output_length_is_an_error() {
        let sp = spec(1, 1, 5, 1, 0, 1);
        let x = t(&[1, 2, 1], &[1.0, 2.0]);
        let w = Tensor::<f64>::filled(&sp.weight_shape(), 1.0);
        assert!(conv1d_forward(&x, &w, None, &sp).is_err());
    }

    #[test]
    fn grouped_equals_per_group_convolutions() {
        // groups=2 over 4 channels must equal two independent 2-channel convs
        let sp = spec(4, 4, 3, 1, 1, 2);
        let mut r = crate::rng::Rng::new(17);
        let x = Tensor::from_vec(
            &[2, 5, 4],
            (0..40).map(|_| r.uniform_range(-1.0, 1.0)).collect(),
        )
        .unwrap();
        let w = Tensor::from_vec(
            &sp.weight_shape(),
            (0..sp.weight_count()).map(|_| r.uniform_range(-1.0, 1.0)).collect(),
        )
        .unwrap();
        let y = conv1d_forward(&x, &w, None, &sp).unwrap();

        // split-transform-merge oracle
        for g in 0..2 {
            let sub = spec(2, 2, 3, 1, 1, 1);
            let xg: Vec<f64> = (0..2 * 5)
                .flat_map(|i| {
                    let (n, l) = (i / 5, i % 5);
                    (0..2).map(move |c| (n, l, c))
                })
                .map(|(n, l, c)| x.data()[(n * 5 + l) * 4 + g * 2 + c])
                .collect();
            let wg: Vec<f64> = (0..2)
                .flat_map(|oc| w.data()[((g * 2 + oc) * 2) * 3..((g * 2 + oc) * 2 + 2) * 3].to_vec())
                .collect();
            let yg = conv1d_forward(
                &Tensor::from_vec(&[2, 5, 2], xg).unwrap(),
                &Tensor::from_vec(&[2, 2, 3], wg).unwrap(),
                None,
                &sub,
            )
            .unwrap();
            for n in 0..2 {
                for l in 0..5 {
                    for c in 0..2 {
                        let full = y.data()[(n * 5 + l) * 4 + g * 2 + c];
                        let part = yg.data()[(n * 5 + l) * 2 + c];
                        assert!((full - part).abs() < 1e-12);
                    }
                }
            }
        }
    }
}
