//! The ResNet1D / ResNeXt1D architecture family.
//!
//! Every network is a stem convolution, a max pool, four stages of residual
//! units, and a global-average-pool + fully-connected head. The first unit
//! of stages 2-4 doubles the channel width and halves the temporal length.
//! Three unit flavors exist:
//!
//! * `v1` — post-activated bottleneck; the unit output is
//!   `relu(x + branch(x))`, projection shortcuts carry their own batch norm.
//! * `v2` — pre-activated bottleneck; the output is `x + branch(x)` with no
//!   activation after the addition, and one final BN+ReLU sits before the
//!   global pool.
//! * `resnext` — `v2` ordering with the middle convolution grouped by the
//!   cardinality, realizing the aggregated-transform sum as an equivalent
//!   grouped convolution.

mod build;
mod counts;

pub use build::{ForwardTrace, Mode, Network, ResidualUnit};
pub use counts::{
    count_flops, count_parameters, flop_report, parameter_report, round_sig3, table_reference,
    trunc_sig3, FlopConvention, FlopReport, FlopRow, ParamReport, ParamRow, TableRow,
    DEFAULT_FLOPS_PER_MAC,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    V1,
    V2,
    ResNeXt,
}

/// One residual unit. `stride` is the temporal stride of the unit, applied
/// in the middle convolution and in the projection shortcut.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidualUnitSpec {
    pub variant: Variant,
    pub bottleneck_channels: usize,
    pub out_channels: usize,
    pub cardinality: usize,
    pub stride: usize,
}

impl ResidualUnitSpec {
    pub fn validate(&self) -> Result<()> {
        let expansion = match self.variant {
            Variant::V1 | Variant::V2 => 4,
            Variant::ResNeXt => 2,
        };
        if self.out_channels != expansion * self.bottleneck_channels {
            return Err(Error::invalid(format!(
                "{:?} unit wants out_channels == {}*bottleneck, got {} for bottleneck {}",
                self.variant, expansion, self.out_channels, self.bottleneck_channels
            )));
        }
        match self.variant {
            Variant::V1 | Variant::V2 if self.cardinality != 1 => {
                return Err(Error::invalid("cardinality must be 1 for v1/v2 units"));
            }
            _ => {}
        }
        if self.cardinality == 0 || self.bottleneck_channels % self.cardinality != 0 {
            return Err(Error::invalid(format!(
                "cardinality {} must divide bottleneck width {}",
                self.cardinality, self.bottleneck_channels
            )));
        }
        if self.stride == 0 {
            return Err(Error::invalid("unit stride must be >= 1"));
        }
        Ok(())
    }
}

/// A stage: `unit_count` copies of `unit`. The spec's stride applies to the
/// first unit only; the rest run at stride 1 with matching channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    pub unit_count: usize,
    pub unit: ResidualUnitSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    /// Filters of the stem convolution (kernel 3, stride 1, padding 1).
    pub stem_filters: usize,
    pub stages: Vec<StageSpec>,
    pub num_classes: usize,
    pub input_length: usize,
    pub input_channels: usize,
}

pub const CANONICAL_NAMES: [&str; 11] = [
    "ResNet1Dv1-14",
    "ResNet1Dv2-14",
    "ResNeXt1D-14",
    "ResNet1Dv1-26",
    "ResNet1Dv2-26",
    "ResNeXt1D-26",
    "ResNet1Dv1-14-Wider",
    "ResNet1Dv2-14-Wider",
    "ResNeXt1D-14-Wider1",
    "ResNeXt1D-14-Wider2",
    "ResNeXt1D-38",
];

impl NetworkSpec {
    /// Construct the spec of one of the eleven named networks.
    pub fn by_name(name: &str) -> Result<NetworkSpec> {
        // (stem filters, per-stage bottleneck widths, units per stage,
        //  cardinality, variant)
        let (stem, bots, units, card, variant) = match name {
            "ResNet1Dv1-14" => (6, [6, 12, 24, 48], 1, 1, Variant::V1),
            "ResNet1Dv2-14" => (6, [6, 12, 24, 48], 1, 1, Variant::V2),
            "ResNeXt1D-14" => (6, [10, 20, 40, 80], 1, 5, Variant::ResNeXt),
            "ResNet1Dv1-26" => (6, [6, 12, 24, 48], 2, 1, Variant::V1),
            "ResNet1Dv2-26" => (6, [6, 12, 24, 48], 2, 1, Variant::V2),
            "ResNeXt1D-26" => (6, [10, 20, 40, 80], 2, 5, Variant::ResNeXt),
            "ResNet1Dv1-14-Wider" => (8, [8, 16, 32, 64], 1, 1, Variant::V1),
            "ResNet1Dv2-14-Wider" => (8, [8, 16, 32, 64], 1, 1, Variant::V2),
            "ResNeXt1D-14-Wider1" => (8, [14, 28, 56, 112], 1, 7, Variant::ResNeXt),
            "ResNeXt1D-14-Wider2" => (8, [15, 30, 60, 120], 1, 5, Variant::ResNeXt),
            "ResNeXt1D-38" => (6, [10, 20, 40, 80], 3, 5, Variant::ResNeXt),
            _ => {
                return Err(Error::invalid(format!(
                    "unknown architecture {:?}; known: {}",
                    name,
                    CANONICAL_NAMES.join(", ")
                )))
            }
        };
        let expansion = if matches!(variant, Variant::ResNeXt) { 2 } else { 4 };
        let stages = bots
            .iter()
            .enumerate()
            .map(|(i, &b)| StageSpec {
                unit_count: units,
                unit: ResidualUnitSpec {
                    variant,
                    bottleneck_channels: b,
                    out_channels: expansion * b,
                    cardinality: card,
                    stride: if i == 0 { 1 } else { 2 },
                },
            })
            .collect();
        Ok(NetworkSpec {
            name: name.to_string(),
            stem_filters: stem,
            stages,
            num_classes: 20,
            input_length: 224,
            input_channels: 2,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.len() != 4 {
            return Err(Error::invalid(format!(
                "networks have exactly 4 stages, spec {:?} has {}",
                self.name,
                self.stages.len()
            )));
        }
        for (i, st) in self.stages.iter().enumerate() {
            st.unit.validate()?;
            if st.unit_count == 0 {
                return Err(Error::invalid("stages need at least one unit"));
            }
            let want_stride = if i == 0 { 1 } else { 2 };
            if st.unit.stride != want_stride {
                return Err(Error::invalid(format!(
                    "stage {} first-unit stride must be {}",
                    i + 1,
                    want_stride
                )));
            }
        }
        if self.num_classes == 0 || self.input_channels == 0 || self.input_length == 0 {
            return Err(Error::invalid("head/input extents must be positive"));
        }
        if self.stem_filters == 0 {
            return Err(Error::invalid("stem needs at least one filter"));
        }
        Ok(())
    }

    /// Essential-layer depth: stem + three convolutions per unit + head.
    pub fn depth(&self) -> usize {
        1 + self.stages.iter().map(|s| s.unit_count * 3).sum::<usize>() + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eleven_canonical_specs_validate() {
        for name in CANONICAL_NAMES {
            let spec = NetworkSpec::by_name(name).unwrap();
            spec.validate().unwrap();
        }
    }

    #[test]
    fn depth_matches_name_suffix() {
        for name in CANONICAL_NAMES {
            let spec = NetworkSpec::by_name(name).unwrap();
            let suffix: usize = name
                .split('-')
                .nth(1)
                .and_then(|s| s.parse().ok())
                .unwrap();
            assert_eq!(spec.depth(), suffix, "{}", name);
        }
    }

    #[test]
    fn unknown_name_is_an_error() {
        assert!(NetworkSpec::by_name("ResNet2D-50").is_err());
    }

    #[test]
    fn three_stage_spec_is_rejected() {
        let mut spec = NetworkSpec::by_name("ResNet1Dv1-14").unwrap();
        spec.stages.pop();
        assert!(spec.validate().is_err());
    }

    #[test]
    fn resnext_expansion_is_two() {
        let unit = ResidualUnitSpec {
            variant: Variant::ResNeXt,
            bottleneck_channels: 10,
            out_channels: 40, // wrong: must be 20
            cardinality: 5,
            stride: 1,
        };
        assert!(unit.validate().is_err());
    }

    #[test]
    fn cardinality_must_divide_width() {
        let unit = ResidualUnitSpec {
            variant: Variant::ResNeXt,
            bottleneck_channels: 10,
            out_channels: 20,
            cardinality: 3,
            stride: 1,
        };
        assert!(unit.validate().is_err());
    }
}
