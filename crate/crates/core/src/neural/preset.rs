//! Named model configurations: four desk-scale hybrids plus their
//! full-scale variants kept for documentation.

use super::gcn::GcnEncoder;
use super::lstm::LstmCell;
use super::ltc::{LtcCell, LtcOptions};
use super::mlp::Mlp;
use super::pointnet::{PointNetEncoder, SetAbstractionLevel};
use super::{Activation, Encoder, RecurrentCell, SteeringModel};
use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Spatial encoder layout.
#[derive(Debug, Clone)]
pub enum EncoderSpec {
    Gcn { widths: Vec<usize> },
    PointNet { levels: Vec<SaSpec> },
}

/// One set abstraction level: sampling, grouping and MLP widths.
#[derive(Debug, Clone)]
pub struct SaSpec {
    pub m: usize,
    pub radius: f64,
    pub max_group: usize,
    pub widths: Vec<usize>,
}

/// Liquid time-constant cell layout.
#[derive(Debug, Clone)]
pub struct LtcSpec {
    pub neurons: usize,
    pub options: LtcOptions,
    /// Density of the recurrent sparsity mask; 1.0 is fully wired.
    pub mask_density: f64,
}

/// Recurrent head layout.
#[derive(Debug, Clone)]
pub enum RecurrentSpec {
    Lstm { hidden: usize },
    Ltc(LtcSpec),
}

/// A named, fully pinned model configuration.
#[derive(Debug, Clone)]
pub struct PresetConfig {
    pub name: String,
    pub encoder: EncoderSpec,
    pub recurrent: RecurrentSpec,
    pub readout_hidden: usize,
    /// Cloud size each frame is downsampled to before graph building.
    pub points_per_frame: usize,
    /// Number of past frames consumed per sequence sample.
    pub horizon: usize,
    pub note: String,
}

fn desk_gcn() -> EncoderSpec {
    EncoderSpec::Gcn {
        widths: vec![16, 32],
    }
}

fn desk_pointnet() -> EncoderSpec {
    EncoderSpec::PointNet {
        levels: vec![
            SaSpec {
                m: 64,
                radius: 2.5,
                max_group: 32,
                widths: vec![16, 32],
            },
            SaSpec {
                m: 16,
                radius: 5.0,
                max_group: 32,
                widths: vec![32, 32],
            },
        ],
    }
}

fn desk_ltc() -> RecurrentSpec {
    RecurrentSpec::Ltc(LtcSpec {
        neurons: 19,
        options: LtcOptions::default(),
        mask_density: 1.0,
    })
}

fn desk_lstm() -> RecurrentSpec {
    RecurrentSpec::Lstm { hidden: 32 }
}

/// All valid preset names.
pub fn preset_names() -> Vec<&'static str> {
    vec![
        "gnn-lstm",
        "gnn-ncp",
        "pnpp-lstm",
        "pnpp-ncp",
        "gnn-lstm-paper",
        "gnn-ncp-paper",
        "pnpp-lstm-paper",
        "pnpp-ncp-paper",
    ]
}

/// Looks up a preset by name. Desk presets run on small synthetic scenes;
/// the `-paper` variants document the full-scale input sizes (43k–50k points,
/// horizons 6–8) and are impractical without a large machine.
pub fn preset(name: &str) -> Result<PresetConfig> {
    let desk_points = 256;
    let desk_horizon = 4;
    let cfg = match name {
        "gnn-lstm" => PresetConfig {
            name: name.into(),
            encoder: desk_gcn(),
            recurrent: desk_lstm(),
            readout_hidden: 32,
            points_per_frame: desk_points,
            horizon: desk_horizon,
            note: "GCN encoder + LSTM, desk scale".into(),
        },
        "gnn-ncp" => PresetConfig {
            name: name.into(),
            encoder: desk_gcn(),
            recurrent: desk_ltc(),
            readout_hidden: 32,
            points_per_frame: desk_points,
            horizon: desk_horizon,
            note: "GCN encoder + liquid time-constant cell, desk scale".into(),
        },
        "pnpp-lstm" => PresetConfig {
            name: name.into(),
            encoder: desk_pointnet(),
            recurrent: desk_lstm(),
            readout_hidden: 32,
            points_per_frame: desk_points,
            horizon: desk_horizon,
            note: "PointNet++ encoder + LSTM, desk scale".into(),
        },
        "pnpp-ncp" => PresetConfig {
            name: name.into(),
            encoder: desk_pointnet(),
            recurrent: desk_ltc(),
            readout_hidden: 32,
            points_per_frame: desk_points,
            horizon: desk_horizon,
            note: "PointNet++ encoder + liquid time-constant cell, desk scale".into(),
        },
        "gnn-lstm-paper" => PresetConfig {
            name: name.into(),
            encoder: desk_gcn(),
            recurrent: desk_lstm(),
            readout_hidden: 32,
            points_per_frame: 50_000,
            horizon: 8,
            note: "full-scale input sizes (50k points, horizon 8); documentation preset".into(),
        },
        "gnn-ncp-paper" => PresetConfig {
            name: name.into(),
            encoder: desk_gcn(),
            recurrent: desk_ltc(),
            readout_hidden: 32,
            points_per_frame: 43_000,
            horizon: 8,
            note: "full-scale input sizes (43k points, horizon 8); documentation preset".into(),
        },
        "pnpp-lstm-paper" => PresetConfig {
            name: name.into(),
            encoder: desk_pointnet(),
            recurrent: desk_lstm(),
            readout_hidden: 32,
            points_per_frame: 45_000,
            horizon: 6,
            note: "full-scale input sizes (45k points, horizon 6); documentation preset".into(),
        },
        "pnpp-ncp-paper" => PresetConfig {
            name: name.into(),
            encoder: desk_pointnet(),
            recurrent: desk_ltc(),
            readout_hidden: 32,
            points_per_frame: 45_000,
            horizon: 6,
            note: "full-scale input sizes (45k points, horizon 6); documentation preset".into(),
        },
        _ => {
            return Err(Error::UnknownPreset {
                name: name.into(),
                valid: preset_names().join(", "),
            })
        }
    };
    Ok(cfg)
}

pub(super) fn build_model(
    cfg: &PresetConfig,
    input_width: usize,
    seed: u64,
) -> Result<SteeringModel> {
    if input_width < 3 {
        return Err(Error::InvalidConfig(
            "input feature width must be at least 3 (xyz)".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let encoder = match &cfg.encoder {
        EncoderSpec::Gcn { widths } => {
            Encoder::Gcn(GcnEncoder::new(input_width, widths, &mut rng))
        }
        EncoderSpec::PointNet { levels } => {
            let mut built = Vec::with_capacity(levels.len());
            let mut in_features = input_width;
            for (i, spec) in levels.iter().enumerate() {
                let level = SetAbstractionLevel::new(
                    &format!("sa.{i}"),
                    spec.m,
                    spec.radius,
                    spec.max_group,
                    in_features,
                    &spec.widths,
                    &mut rng,
                )?;
                in_features = level.out_dim();
                built.push(level);
            }
            Encoder::PointNet(PointNetEncoder::new(input_width, built, 0)?)
        }
    };
    let embed = encoder.output_width();
    let cell = match &cfg.recurrent {
        RecurrentSpec::Lstm { hidden } => RecurrentCell::Lstm(LstmCell::new(embed, *hidden, &mut rng)),
        RecurrentSpec::Ltc(spec) => RecurrentCell::Ltc(LtcCell::new(
            embed,
            spec.neurons,
            spec.options,
            spec.mask_density,
            &mut rng,
        )?),
    };
    let readout = Mlp::new(
        "readout",
        &[cell.output_width(), cfg.readout_hidden, 1],
        Activation::Relu,
        false,
        &mut rng,
    );
    Ok(SteeringModel {
        preset_name: cfg.name.clone(),
        encoder,
        cell,
        readout,
    })
}
