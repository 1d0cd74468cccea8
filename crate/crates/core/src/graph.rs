//! Reverse-mode autodiff over a recorded tape.
//!
//! A forward pass pushes one node per operation; [`Tape::backward`] seeds the
//! scalar output with gradient 1 and replays the tape in reverse, summing
//! into parent node gradients and into the parameter store, so a tensor
//! consumed twice receives the sum of both contributions. Parameters not
//! reachable from the output keep their zeroed gradients.

use crate::error::{Error, Result};
use crate::ops::{
    batchnorm_infer_backward, batchnorm_infer_forward, batchnorm_train_backward,
    batchnorm_train_forward, conv1d_backward, conv1d_forward, fully_connected_backward,
    fully_connected_forward, global_avg_pool_backward, global_avg_pool_forward,
    maxpool1d_backward, maxpool1d_forward, relu_backward, relu_forward,
    softmax_cross_entropy_smoothed_backward, softmax_cross_entropy_smoothed_forward, BnSaved,
    BnSpec, Conv1dSpec, Pool1dSpec,
};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{Scalar, Tensor};

/// Handle to a value recorded on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// The four store handles of one batch-norm layer.
#[derive(Debug, Clone, Copy)]
pub struct BnHandles {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

enum Op<T> {
    Input,
    Conv1d {
        x: NodeId,
        w: ParamId,
        b: Option<ParamId>,
        spec: Conv1dSpec,
    },
    BatchNormTrain {
        x: NodeId,
        bn: BnHandles,
        saved: BnSaved<T>,
    },
    BatchNormInfer {
        x: NodeId,
        bn: BnHandles,
        spec: BnSpec,
    },
    Relu {
        x: NodeId,
    },
    MaxPool {
        x: NodeId,
        argmax: Vec<u32>,
    },
    GlobalAvgPool {
        x: NodeId,
        in_len: usize,
    },
    FullyConnected {
        x: NodeId,
        w: ParamId,
        b: ParamId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    SoftmaxCrossEntropy {
        logits: NodeId,
        labels: Vec<usize>,
        probs: Tensor<T>,
        smoothing: T,
    },
    Sum {
        x: NodeId,
    },
    WeightedSum {
        x: NodeId,
        coeffs: Vec<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Recorded forward pass.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    /// Check every node value for NaN/Inf as it is produced.
    pub strict_finite: bool,
}

/// Node gradients left behind by [`Tape::backward`], for inspecting
/// gradients of inputs and intermediates.
pub struct TapeGrads<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> TapeGrads<T> {
    pub fn grad(&self, id: NodeId) -> Option<&[T]> {
        self.grads[id.0].as_deref()
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), strict_finite: true }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, opname: &str) -> Result<NodeId> {
        if self.strict_finite {
            value.check_finite(opname)?;
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { value, op });
        Ok(id)
    }

    pub fn input(&mut self, value: Tensor<T>) -> Result<NodeId> {
        self.push(value, Op::Input, "input")
    }

    pub fn conv1d(
        &mut self,
        store: &ParamStore<T>,
        x: NodeId,
        w: ParamId,
        b: Option<ParamId>,
        spec: &Conv1dSpec,
    ) -> Result<NodeId> {
        let bias = b.map(|id| store.value(id).data());
        let y = conv1d_forward(self.value(x), store.value(w), bias, spec)?;
        self.push(y, Op::Conv1d { x, w, b, spec: spec.clone() }, "conv1d")
    }

    /// Batch normalization; training mode updates running statistics.
    pub fn batchnorm(
        &mut self,
        store: &mut ParamStore<T>,
        x: NodeId,
        bn: BnHandles,
        spec: &BnSpec,
        training: bool,
    ) -> Result<NodeId> {
        if training {
            let [g, b, m, v] = [bn.gamma.0, bn.beta.0, bn.running_mean.0, bn.running_var.0];
            // split borrows: gamma/beta read, running stats written
            let [gamma, beta, rm, rv] = store
                .values
                .get_disjoint_mut([g, b, m, v])
                .map_err(|_| Error::invalid("batch norm handles must be distinct"))?;
            let (y, saved) = batchnorm_train_forward(
                &self.nodes[x.0].value,
                gamma.data(),
                beta.data(),
                rm.data_mut(),
                rv.data_mut(),
                spec,
            )?;
            self.push(y, Op::BatchNormTrain { x, bn, saved }, "batchnorm")
        } else {
            let y = batchnorm_infer_forward(
                self.value(x),
                store.value(bn.gamma).data(),
                store.value(bn.beta).data(),
                store.value(bn.running_mean).data(),
                store.value(bn.running_var).data(),
                spec,
            )?;
            self.push(y, Op::BatchNormInfer { x, bn, spec: *spec }, "batchnorm")
        }
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let y = relu_forward(self.value(x));
        self.push(y, Op::Relu { x }, "relu")
    }

    pub fn maxpool(&mut self, x: NodeId, spec: &Pool1dSpec) -> Result<NodeId> {
        let (y, argmax) = maxpool1d_forward(self.value(x), spec)?;
        self.push(y, Op::MaxPool { x, argmax }, "maxpool")
    }

    pub fn global_avg_pool(&mut self, x: NodeId) -> Result<NodeId> {
        let in_len = self.value(x).dim(1);
        let y = global_avg_pool_forward(self.value(x))?;
        self.push(y, Op::GlobalAvgPool { x, in_len }, "global_avg_pool")
    }

    pub fn fully_connected(
        &mut self,
        store: &ParamStore<T>,
        x: NodeId,
        w: ParamId,
        b: ParamId,
    ) -> Result<NodeId> {
        let y = fully_connected_forward(self.value(x), store.value(w), store.value(b).data())?;
        self.push(y, Op::FullyConnected { x, w, b }, "fully_connected")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::shape(format!(
                "add of {:?} and {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let mut y = self.value(a).clone();
        for (o, &v) in y.data_mut().iter_mut().zip(self.value(b).data()) {
            *o += v;
        }
        self.push(y, Op::Add { a, b }, "add")
    }

    /// Scalar loss node; also returns the loss value and probability rows.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: NodeId,
        labels: &[usize],
    ) -> Result<(NodeId, T, Tensor<T>)> {
        self.softmax_cross_entropy_with(logits, labels, T::ZERO)
    }

    /// Same loss against label-smoothed targets.
    pub fn softmax_cross_entropy_with(
        &mut self,
        logits: NodeId,
        labels: &[usize],
        smoothing: T,
    ) -> Result<(NodeId, T, Tensor<T>)> {
        let (loss, probs) =
            softmax_cross_entropy_smoothed_forward(self.value(logits), labels, smoothing)?;
        let id = self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs: probs.clone(),
                smoothing,
            },
            "softmax_cross_entropy",
        )?;
        Ok((id, loss, probs))
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let mut acc = T::ZERO;
        for &v in self.value(x).data() {
            acc += v;
        }
        self.push(Tensor::scalar(acc), Op::Sum { x }, "sum")
    }

    /// `sum(coeffs * x)`; the gradcheck probe.
    pub fn weighted_sum(&mut self, x: NodeId, coeffs: &[T]) -> Result<NodeId> {
        if coeffs.len() != self.value(x).numel() {
            return Err(Error::shape("weighted_sum coefficient count"));
        }
        let mut acc = T::ZERO;
        for (&v, &c) in self.value(x).data().iter().zip(coeffs) {
            acc += v * c;
        }
        self.push(
            Tensor::scalar(acc),
            Op::WeightedSum { x, coeffs: coeffs.to_vec() },
            "weighted_sum",
        )
    }

    /// Reverse-mode accumulation from a scalar output node. Parameter
    /// gradients are zeroed, then accumulated into the store; node gradients
    /// are returned.
    pub fn backward(&self, output: NodeId, store: &mut ParamStore<T>) -> Result<TapeGrads<T>> {
        if self.nodes.is_empty() {
            return Err(Error::invalid("backward before any forward pass"));
        }
        let out_node = &self.nodes[output.0];
        if out_node.value.numel() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar output, got shape {:?}",
                out_node.value.shape()
            )));
        }
        store.zero_grads();
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(vec![T::ONE]);

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Conv1d { x, w, b, spec } => {
                    let xv = &self.nodes[x.0].value;
                    let dx = ensure(&mut grads, *x, xv.numel());
                    let (dw, db) = match b {
                        Some(b) => {
                            let [dw, db] = store
                                .grads
                                .get_disjoint_mut([w.0, b.0])
                                .expect("conv weight and bias are distinct");
                            (dw, Some(db))
                        }
                        None => (&mut store.grads[w.0], None),
                    };
                    conv1d_backward(
                        xv,
                        &store.values[w.0],
                        spec,
                        &g,
                        Some(dx),
                        dw,
                        db.map(|d| d.as_mut_slice()),
                    )?;
                }
                Op::BatchNormTrain { x, bn, saved } => {
                    let xv = &self.nodes[x.0].value;
                    let dx = ensure(&mut grads, *x, xv.numel());
                    let [dgamma, dbeta] = store
                        .grads
                        .get_disjoint_mut([bn.gamma.0, bn.beta.0])
                        .expect("bn gamma and beta are distinct");
                    batchnorm_train_backward(
                        xv,
                        store.values[bn.gamma.0].data(),
                        saved,
                        &g,
                        dx,
                        dgamma,
                        dbeta,
                    )?;
                }
                Op::BatchNormInfer { x, bn, spec } => {
                    let xv = &self.nodes[x.0].value;
                    let dx = ensure(&mut grads, *x, xv.numel());
                    let [dgamma, dbeta] = store
                        .grads
                        .get_disjoint_mut([bn.gamma.0, bn.beta.0])
                        .expect("bn gamma and beta are distinct");
                    batchnorm_infer_backward(
                        xv,
                        store.values[bn.gamma.0].data(),
                        store.values[bn.running_mean.0].data(),
                        store.values[bn.running_var.0].data(),
                        spec,
                        &g,
                        dx,
                        dgamma,
                        dbeta,
                    )?;
                }
                Op::Relu { x } => {
                    let xv = &self.nodes[x.0].value;
                    let dx = ensure(&mut grads, *x, xv.numel());
                    relu_backward(xv, &g, dx);
                }
                Op::MaxPool { x, argmax } => {
                    let xv = &self.nodes[x.0].value;
                    let dx = ensure(&mut grads, *x, xv.numel());
                    maxpool1d_backward(&g, argmax, dx);
                }
                Op::GlobalAvgPool { x, in_len } => {
                    let xv = &self.nodes[x.0].value;
                    let sh = xv.shape();
                    let (n, c) = (sh[0], sh[2]);
                    let dx = ensure(&mut grads, *x, xv.numel());
                    global_avg_pool_backward(&g, n, *in_len, c, dx);
                }
                Op::FullyConnected { x, w, b } => {
                    let xv = &self.nodes[x.0].value;
                    let dx = ensure(&mut grads, *x, xv.numel());
                    let [dw, db] = store
                        .grads
                        .get_disjoint_mut([w.0, b.0])
                        .expect("fc weight and bias are distinct");
                    fully_connected_backward(xv, &store.values[w.0], &g, Some(dx), dw, db)?;
                }
                Op::Add { a, b } => {
                    let n = g.len();
                    {
                        let da = ensure(&mut grads, *a, n);
                        for (o, &v) in da.iter_mut().zip(&g) {
                            *o += v;
                        }
                    }
                    let db = ensure(&mut grads, *b, n);
                    for (o, &v) in db.iter_mut().zip(&g) {
                        *o += v;
                    }
                }
                Op::SoftmaxCrossEntropy { logits, labels, probs, smoothing } => {
                    let dlogits = ensure(&mut grads, *logits, probs.numel());
                    softmax_cross_entropy_smoothed_backward(probs, labels, *smoothing, g[0], dlogits);
                }
                Op::Sum { x } => {
                    let n = self.nodes[x.0].value.numel();
                    let dx = ensure(&mut grads, *x, n);
                    for o in dx.iter_mut() {
                        *o += g[0];
                    }
                }
                Op::WeightedSum { x, coeffs } => {
                    let dx = ensure(&mut grads, *x, coeffs.len());
                    for (o, &c) in dx.iter_mut().zip(coeffs) {
                        *o += g[0] * c;
                    }
                }
            }
            grads[i] = Some(g);
        }

        if self.strict_finite {
            store.check_grads_finite()?;
        }
        Ok(TapeGrads { grads })
    }
}

fn ensure<T: Scalar>(grads: &mut [Option<Vec<T>>], id: NodeId, numel: usize) -> &mut Vec<T> {
    let slot = &mut grads[id.0];
    if slot.is_none() {
        *slot = Some(vec![T::ZERO; numel]);
    }
    slot.as_mut().unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_backward_is_all_ones() {
        let mut tape = Tape::<f64>::new();
        let mut store = ParamStore::new();
        let x = tape.input(Tensor::from_vec(&[3], vec![2.0, -1.0, 5.0]).unwrap()).unwrap();
        let s = tape.sum(x).unwrap();
        let grads = tape.backward(s, &mut store).unwrap();
        assert_eq!(grads.grad(x).unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn fanout_gradients_add() {
        // y = sum(x + x) => dy/dx = 2
        let mut tape = Tape::<f64>::new();
        let mut store = ParamStore::new();
        let x = tape.input(Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap()).unwrap();
        let y = tape.add(x, x).unwrap();
        let s = tape.sum(y).unwrap();
        let grads = tape.backward(s, &mut store).unwrap();
        assert_eq!(grads.grad(x).unwrap(), &[2.0, 2.0]);
    }

    #[test]
    fn backward_requires_scalar_output() {
        let mut tape = Tape::<f64>::new();
        let mut store = ParamStore::new();
        let x = tape.input(Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap()).unwrap();
        assert!(tape.backward(x, &mut store).is_err());
    }

    #[test]
    fn backward_on_empty_tape_is_an_error() {
        let tape = Tape::<f64>::new();
        let mut store = ParamStore::new();
        assert!(tape.backward(NodeId(0), &mut store).is_err());
    }

    #[test]
    fn unreachable_parameters_get_zero_gradient() {
        let mut tape = Tape::<f64>::new();
        let mut store = ParamStore::new();
        let unused = store.add("unused", Tensor::filled(&[2], 3.0), true).unwrap();
        let x = tape.input(Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap()).unwrap();
        let s = tape.sum(x).unwrap();
        tape.backward(s, &mut store).unwrap();
        assert_eq!(store.grad(unused), &[0.0, 0.0]);
    }

    #[test]
    fn strict_finite_rejects_nan_input() {
        let mut tape = Tape::<f64>::new();
        assert!(tape.input(Tensor::from_vec(&[1], vec![f64::NAN]).unwrap()).is_err());
    }
}
