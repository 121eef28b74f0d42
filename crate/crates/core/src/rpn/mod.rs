//! Region proposals on the downscaled image: area downscaling, a small
//! objectness network, NMS, and remapping to UHR crops.

mod coverage;
mod crop;
mod dihedral;
mod net;
mod nms;
mod scale;
mod train;

use std::path::Path;

pub use coverage::{
    covered_area, proposal_coverage, proposal_coverage_with, DEFAULT_COVERAGE_FRACTION,
};
pub use crop::{remap_and_crop, tile_starts, uhr_region, Crop, CropParams, CropSet};
pub use dihedral::{dihedral_box, dihedral_image};
pub use net::{decode_head, PNetCache, PNetConfig, ProposalNet, HEAD_CHANNELS};
pub use nms::{nms, score_order};
pub use scale::{downscale, downscale_to, ScaleMap, LR_SIZE};
pub use train::{
    cell_targets, dihedral_sample, train_proposal_net, CellTargets, PNetHyper, PNetRecord,
    ProposalSample,
};

use crate::checkpoint::{self, CheckpointError, Container, PNET_MAGIC};
use crate::nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum RpnError {
    #[error("invalid proposal-net config: {0}")]
    Config(String),
    #[error("input must be 1x{expected}x{expected}, got {got:?} (channels, height, width)")]
    InputSize {
        expected: usize,
        got: (usize, usize, usize),
    },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

pub fn to_container(net: &ProposalNet<f32>) -> Container {
    Container {
        magic: PNET_MAGIC,
        config_json: serde_json::to_string(net.config()).expect("config serialises"),
        params: net.params().clone(),
    }
}

pub fn from_container(c: Container) -> Result<ProposalNet<f32>, RpnError> {
    let config: PNetConfig = serde_json::from_str(&c.config_json)
        .map_err(|e| CheckpointError::Malformed(format!("config JSON: {e}")))?;
    let mut net = ProposalNet::build(&config)?;
    net.set_params(c.params)
        .map_err(|e| CheckpointError::ShapeAudit(e.to_string()))?;
    Ok(net)
}

pub fn save_checkpoint(net: &ProposalNet<f32>, path: &Path) -> Result<(), RpnError> {
    checkpoint::write_file(&to_container(net), path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ProposalNet<f32>, RpnError> {
    from_container(checkpoint::read_file(path, PNET_MAGIC)?)
}
