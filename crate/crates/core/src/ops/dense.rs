//! Fully-connected layer: `y = x W + b` with `x (N,Din)`, `W (Din,Dout)`.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

fn check<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &[T]) -> Result<(usize, usize, usize)> {
    let xs = x.shape();
    let ws = w.shape();
    if xs.len() != 2 || ws.len() != 2 {
        return Err(Error::shape(format!(
            "fully_connected wants x (N,Din), W (Din,Dout); got {:?}, {:?}",
            xs, ws
        )));
    }
    if xs[1] != ws[0] || b.len() != ws[1] {
        return Err(Error::shape(format!(
            "fully_connected dims disagree: x {:?}, W {:?}, b {}",
            xs,
            ws,
            b.len()
        )));
    }
    Ok((xs[0], ws[0], ws[1]))
}

pub fn fully_connected_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &[T],
) -> Result<Tensor<T>> {
    let (n, din, dout) = check(x, w, b)?;
    let mut out = Tensor::zeros(&[n, dout]);
    let xd = x.data();
    let wd = w.data();
    let od = out.data_mut();
    for ni in 0..n {
        let xrow = &xd[ni * din..(ni + 1) * din];
        let orow = &mut od[ni * dout..(ni + 1) * dout];
        orow.copy_from_slice(b);
        for (i, &xv) in xrow.iter().enumerate() {
            let wrow = &wd[i * dout..(i + 1) * dout];
            for o in 0..dout {
                orow[o] += xv * wrow[o];
            }
        }
    }
    Ok(out)
}

/// Accumulates `dx (N,Din)`, `dw (Din,Dout)`, `db (Dout)`.
pub fn fully_connected_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &[T],
    dx: Option<&mut [T]>,
    dw: &mut [T],
    db: &mut [T],
) -> Result<()> {
    let xs = x.shape();
    let ws = w.shape();
    let (n, din, dout) = (xs[0], ws[0], ws[1]);
    if dy.len() != n * dout {
        return Err(Error::shape(format!("fully_connected dy has {} elements, want {}", dy.len(), n * dout)));
    }
    let xd = x.data();
    let wd = w.data();
    let dyd = dy;
    for ni in 0..n {
        let xrow = &xd[ni * din..(ni + 1) * din];
        let dyrow = &dyd[ni * dout..(ni + 1) * dout];
        for i in 0..din {
            let dwrow = &mut dw[i * dout..(i + 1) * dout];
            for o in 0..dout {
                dwrow[o] += xrow[i] * dyrow[o];
            }
        }
        for o in 0..dout {
            db[o] += dyrow[o];
        }
    }
    if let Some(dx) = dx {
        for ni in 0..n {
            let dyrow = &dyd[ni * dout..(ni + 1) * dout];
            let dxrow = &mut dx[ni * din..(ni + 1) * din];
            for i in 0..din {
                let wrow = &wd[i * dout..(i + 1) * dout];
                let mut acc = T::ZERO;
                for o in 0..dout {
                    acc += dyrow[o] * wrow[o];
                }
                dxrow[i] += acc;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_shape_160_to_20() {
        let x = Tensor::<f64>::filled(&[1, 160], 0.5);
        let w = Tensor::<f64>::filled(&[160, 20], 0.01);
        let y = fully_connected_forward(&x, &w, &vec![0.0; 20]).unwrap();
        assert_eq!(y.shape(), [1, 20]);
    }

    #[test]
    fn identity_weight_zero_bias_passes_through() {
        let x = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let y = fully_connected_forward(&x, &w, &[0.0, 0.0]).unwrap();
        assert_eq!(y.data(), x.data());
    }

    // Oracle: direct matvec by hand.
    #[test]
    fn known_matvec() {
        // x=[1,2], W=[[1,0],[0,-1]], b=[1,1] -> [2,-1]
        let x = Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap();
        let w = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, -1.0]).unwrap();
        let y = fully_connected_forward(&x, &w, &[1.0, 1.0]).unwrap();
        assert_eq!(y.data(), &[2.0, -1.0]);
    }

    #[test]
    fn shape_disagreement_is_an_error() {
        let x = Tensor::<f64>::filled(&[1, 3], 1.0);
        let w = Tensor::<f64>::filled(&[2, 2], 1.0);
        assert!(fully_connected_forward(&x, &w, &[0.0, 0.0]).is_err());
    }
}
