//! Network instantiation and forward passes.

use serde::{Deserialize, Serialize};

use super::{NetworkSpec, ResidualUnitSpec, Variant};
use crate::error::{Error, Result};
use crate::graph::{BnHandles, NodeId, Tape};
use crate::ops::{BnSpec, Conv1dSpec, Pool1dSpec};
use crate::params::{ParamId, ParamStore};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone)]
pub(crate) struct ConvLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub spec: Conv1dSpec,
}

#[derive(Debug, Clone)]
pub(crate) struct BnLayer {
    pub h: BnHandles,
    pub spec: BnSpec,
}

#[derive(Debug, Clone)]
pub(crate) struct UnitLayout {
    pub variant: Variant,
    pub conv1: ConvLayer,
    pub bn1: BnLayer,
    pub conv2: ConvLayer,
    pub bn2: BnLayer,
    pub conv3: ConvLayer,
    pub bn3: BnLayer,
    /// Projection when input/output shapes differ; v1 shortcuts carry BN.
    pub shortcut: Option<(ConvLayer, Option<BnLayer>)>,
}

#[derive(Debug, Clone)]
pub(crate) struct NetLayout {
    pub stem: ConvLayer,
    pub stem_bn: Option<BnLayer>,
    pub pool: Pool1dSpec,
    pub stages: Vec<Vec<UnitLayout>>,
    pub final_bn: Option<BnLayer>,
    pub fc_w: ParamId,
    pub fc_b: ParamId,
}

/// Node handles of interest from one forward pass.
pub struct ForwardTrace {
    pub logits: NodeId,
    /// Input of the global average pool: `(N, L_feat, C_feat)`.
    pub features: NodeId,
    pub stem_out: NodeId,
    pub pool_out: NodeId,
    pub stage_outputs: Vec<NodeId>,
}

/// He-style fan-in initialization: zero-mean normal, variance `2/fan_in`.
fn init_normal<T: Scalar>(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Tensor<T> {
    let sd = (2.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64(rng.normal_scaled(0.0, sd))).collect();
    Tensor::from_vec(shape, data).expect("init shape")
}

fn add_conv<T: Scalar>(
    store: &mut ParamStore<T>,
    prefix: &str,
    spec: Conv1dSpec,
    rng: &mut Rng,
) -> Result<ConvLayer> {
    spec.validate()?;
    let w = store.add(
        format!("{prefix}.weight"),
        init_normal(&spec.weight_shape(), spec.fan_in(), rng),
        true,
    )?;
    let b = store.add(format!("{prefix}.bias"), Tensor::zeros(&[spec.out_channels]), true)?;
    Ok(ConvLayer { w, b, spec })
}

fn add_bn<T: Scalar>(store: &mut ParamStore<T>, prefix: &str, channels: usize) -> Result<BnLayer> {
    let gamma = store.add(format!("{prefix}.gamma"), Tensor::filled(&[channels], T::ONE), true)?;
    let beta = store.add(format!("{prefix}.beta"), Tensor::zeros(&[channels]), true)?;
    let running_mean =
        store.add(format!("{prefix}.running_mean"), Tensor::zeros(&[channels]), false)?;
    let running_var =
        store.add(format!("{prefix}.running_var"), Tensor::filled(&[channels], T::ONE), false)?;
    Ok(BnLayer {
        h: BnHandles { gamma, beta, running_mean, running_var },
        spec: BnSpec::default(),
    })
}

fn conv_spec(cin: usize, cout: usize, k: usize, stride: usize, groups: usize) -> Conv1dSpec {
    Conv1dSpec {
        in_channels: cin,
        out_channels: cout,
        kernel_size: k,
        stride,
        padding: k / 2,
        groups,
    }
}

impl UnitLayout {
    fn build<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        spec: &ResidualUnitSpec,
        in_channels: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        spec.validate()?;
        let b = spec.bottleneck_channels;
        let out = spec.out_channels;
        let groups = if matches!(spec.variant, Variant::ResNeXt) { spec.cardinality } else { 1 };

        let conv1 = add_conv(store, &format!("{prefix}.conv1"), conv_spec(in_channels, b, 1, 1, 1), rng)?;
        let conv2 =
            add_conv(store, &format!("{prefix}.conv2"), conv_spec(b, b, 3, spec.stride, groups), rng)?;
        let conv3 = add_conv(store, &format!("{prefix}.conv3"), conv_spec(b, out, 1, 1, 1), rng)?;
        // v1 normalizes conv outputs (b, b, out); v2 pre-activates inputs (in, b, b)
        let (c1, c2, c3) = match spec.variant {
            Variant::V1 => (b, b, out),
            Variant::V2 | Variant::ResNeXt => (in_channels, b, b),
        };
        let bn1 = add_bn(store, &format!("{prefix}.bn1"), c1)?;
        let bn2 = add_bn(store, &format!("{prefix}.bn2"), c2)?;
        let bn3 = add_bn(store, &format!("{prefix}.bn3"), c3)?;

        let shortcut = if in_channels != out || spec.stride != 1 {
            let sc = add_conv(
                store,
                &format!("{prefix}.shortcut.conv"),
                conv_spec(in_channels, out, 1, spec.stride, 1),
                rng,
            )?;
            let sc_bn = match spec.variant {
                Variant::V1 => Some(add_bn(store, &format!("{prefix}.shortcut.bn"), out)?),
                _ => None,
            };
            Some((sc, sc_bn))
        } else {
            None
        };

        Ok(UnitLayout {
            variant: spec.variant,
            conv1,
            bn1,
            conv2,
            bn2,
            conv3,
            bn3,
            shortcut,
        })
    }

    fn forward<T: Scalar>(
        &self,
        store: &mut ParamStore<T>,
        tape: &mut Tape<T>,
        x: NodeId,
        mode: Mode,
    ) -> Result<NodeId> {
        let training = matches!(mode, Mode::Train);
        let bn = |tape: &mut Tape<T>, store: &mut ParamStore<T>, h, layer: &BnLayer| {
            tape.batchnorm(store, h, layer.h, &layer.spec, training)
        };
        match self.variant {
            Variant::V1 => {
                let mut r = tape.conv1d(store, x, self.conv1.w, Some(self.conv1.b), &self.conv1.spec)?;
                r = bn(tape, store, r, &self.bn1)?;
                r = tape.relu(r)?;
                r = tape.conv1d(store, r, self.conv2.w, Some(self.conv2.b), &self.conv2.spec)?;
                r = bn(tape, store, r, &self.bn2)?;
                r = tape.relu(r)?;
                r = tape.conv1d(store, r, self.conv3.w, Some(self.conv3.b), &self.conv3.spec)?;
                r = bn(tape, store, r, &self.bn3)?;
                let s = match &self.shortcut {
                    Some((sc, sc_bn)) => {
                        let mut t = tape.conv1d(store, x, sc.w, Some(sc.b), &sc.spec)?;
                        if let Some(layer) = sc_bn {
                            t = bn(tape, store, t, layer)?;
                        }
                        t
                    }
                    None => x,
                };
                let y = tape.add(s, r)?;
                tape.relu(y)
            }
            Variant::V2 | Variant::ResNeXt => {
                let mut a = bn(tape, store, x, &self.bn1)?;
                a = tape.relu(a)?;
                let mut r = tape.conv1d(store, a, self.conv1.w, Some(self.conv1.b), &self.conv1.spec)?;
                r = bn(tape, store, r, &self.bn2)?;
                r = tape.relu(r)?;
                r = tape.conv1d(store, r, self.conv2.w, Some(self.conv2.b), &self.conv2.spec)?;
                r = bn(tape, store, r, &self.bn3)?;
                r = tape.relu(r)?;
                r = tape.conv1d(store, r, self.conv3.w, Some(self.conv3.b), &self.conv3.spec)?;
                // projection consumes the pre-activated signal
                let s = match &self.shortcut {
                    Some((sc, _)) => tape.conv1d(store, a, sc.w, Some(sc.b), &sc.spec)?,
                    None => x,
                };
                tape.add(s, r)
            }
        }
    }
}

/// A single residual unit with its own parameter store; the unit-level
/// entry point for tests and gradient checks.
pub struct ResidualUnit<T> {
    pub store: ParamStore<T>,
    pub spec: ResidualUnitSpec,
    pub in_channels: usize,
    layout: UnitLayout,
}

impl<T: Scalar> ResidualUnit<T> {
    pub fn build(spec: ResidualUnitSpec, in_channels: usize, rng: &mut Rng) -> Result<Self> {
        let mut store = ParamStore::new();
        let layout = UnitLayout::build(&mut store, "unit", &spec, in_channels, rng)?;
        Ok(ResidualUnit { store, spec, in_channels, layout })
    }

    pub fn forward(&mut self, tape: &mut Tape<T>, x: NodeId, mode: Mode) -> Result<NodeId> {
        self.layout.forward(&mut self.store, tape, x, mode)
    }

    /// Zero every convolution weight and bias in the residual branch,
    /// leaving BN parameters and any projection shortcut untouched.
    pub fn zero_residual_branch(&mut self) {
        for conv in [&self.layout.conv1, &self.layout.conv2, &self.layout.conv3] {
            for id in [conv.w, conv.b] {
                for v in self.store.value_mut(id).data_mut() {
                    *v = T::ZERO;
                }
            }
        }
    }
}

/// An instantiated network: spec, named parameters, and the layer graph.
pub struct Network<T> {
    pub spec: NetworkSpec,
    pub store: ParamStore<T>,
    pub(crate) layout: NetLayout,
}

impl<T: Scalar> Network<T> {
    /// Build with freshly initialized parameters drawn from `rng`.
    pub fn build(spec: NetworkSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let mut store = ParamStore::new();
        let is_v1 = matches!(spec.stages[0].unit.variant, Variant::V1);

        let stem = add_conv(
            &mut store,
            "stem.conv",
            conv_spec(spec.input_channels, spec.stem_filters, 3, 1, 1),
            rng,
        )?;
        let stem_bn = if is_v1 { Some(add_bn(&mut store, "stem.bn", spec.stem_filters)?) } else { None };
        let pool = Pool1dSpec { kernel: 3, stride: 2, padding: 1 };

        let mut stages = Vec::with_capacity(4);
        let mut cin = spec.stem_filters;
        for (si, st) in spec.stages.iter().enumerate() {
            let mut units = Vec::with_capacity(st.unit_count);
            for ui in 0..st.unit_count {
                let mut unit_spec = st.unit;
                if ui > 0 {
                    unit_spec.stride = 1;
                }
                let prefix = format!("stage{}.unit{}", si + 1, ui + 1);
                let unit = UnitLayout::build(&mut store, &prefix, &unit_spec, cin, rng)?;
                cin = unit_spec.out_channels;
                units.push(unit);
            }
            stages.push(units);
        }

        let final_bn = if is_v1 { None } else { Some(add_bn(&mut store, "final_bn", cin)?) };

        let fc_w = store.add("fc.weight", init_normal(&[cin, spec.num_classes], cin, rng), true)?;
        let fc_b = store.add("fc.bias", Tensor::zeros(&[spec.num_classes]), true)?;

        Ok(Network {
            spec,
            store,
            layout: NetLayout { stem, stem_bn, pool, stages, final_bn, fc_w, fc_b },
        })
    }

    pub fn by_name(name: &str, rng: &mut Rng) -> Result<Self> {
        Network::build(NetworkSpec::by_name(name)?, rng)
    }

    /// Record a forward pass of `(N, input_length, input_channels)` on the
    /// tape. Training mode updates BN running statistics.
    pub fn forward(&mut self, tape: &mut Tape<T>, x: NodeId, mode: Mode) -> Result<ForwardTrace> {
        let sh = tape.value(x).shape().to_vec();
        if sh.len() != 3 || sh[2] != self.spec.input_channels {
            return Err(Error::shape(format!(
                "network input must be (N, L, {}), got {:?}",
                self.spec.input_channels, sh
            )));
        }
        let training = matches!(mode, Mode::Train);
        let layout = &self.layout;
        let store = &mut self.store;

        let mut h = tape.conv1d(store, x, layout.stem.w, Some(layout.stem.b), &layout.stem.spec)?;
        if let Some(bnl) = &layout.stem_bn {
            h = tape.batchnorm(store, h, bnl.h, &bnl.spec, training)?;
            h = tape.relu(h)?;
        }
        let stem_out = h;
        h = tape.maxpool(h, &layout.pool)?;
        let pool_out = h;

        let mut stage_outputs = Vec::with_capacity(4);
        for units in &layout.stages {
            for unit in units {
                h = unit.forward(store, tape, h, mode)?;
            }
            stage_outputs.push(h);
        }

        if let Some(bnl) = &layout.final_bn {
            h = tape.batchnorm(store, h, bnl.h, &bnl.spec, training)?;
            h = tape.relu(h)?;
        }
        let features = h;
        let pooled = tape.global_avg_pool(h)?;
        let logits = tape.fully_connected(store, pooled, layout.fc_w, layout.fc_b)?;

        Ok(ForwardTrace { logits, features, stem_out, pool_out, stage_outputs })
    }

    pub fn depth(&self) -> usize {
        self.spec.depth()
    }

    /// Weight matrix and bias of the classification head.
    pub fn head_params(&self) -> (&Tensor<T>, &Tensor<T>) {
        (self.store.value(self.layout.fc_w), self.store.value(self.layout.fc_b))
    }

    /// Cast parameters and running statistics to another element type.
    pub fn cast<U: Scalar>(&self) -> Result<Network<U>> {
        let mut rng = Rng::new(0);
        let mut out = Network::<U>::build(self.spec.clone(), &mut rng)?;
        for id in self.store.ids() {
            let src = self.store.value(id).cast::<U>();
            *out.store.value_mut(id) = src;
        }
        Ok(out)
    }
}

impl<T: Scalar> Clone for Network<T> {
    fn clone(&self) -> Self {
        // rebuild the layout (cheap) and copy parameter values over
        let mut rng = Rng::new(0);
        let mut out = Network::build(self.spec.clone(), &mut rng).expect("clone of valid network");
        for id in self.store.ids() {
            *out.store.value_mut(id) = self.store.value(id).clone();
        }
        out
    }
}
