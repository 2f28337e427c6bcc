//! JSON run configuration. Every command-line tunable has a field here;
//! flags given on the command line take precedence.

use std::path::Path;

use de_core::decoder::DecoderConfig;
use de_core::encoder::EncoderConfig;
use de_core::losses::LossConfig;
use de_core::noise::NoiseTarget;
use de_core::scenegen::SceneParams;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Peak jitter standard deviation in pixels; 0 disables it.
    pub jitter: f64,
    pub jitter_target: NoiseTarget,
    pub attenuate: bool,
    /// Relative displacement noise; 0 disables it.
    pub disp_noise: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            jitter: 0.0,
            jitter_target: NoiseTarget::Level2,
            attenuate: true,
            disp_noise: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `coco`, `mpii` or a path to a skeleton JSON file.
    pub skeleton: Option<String>,
    pub jobs: Option<usize>,
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
    pub loss: LossConfig,
    pub scene: SceneParams,
    pub noise: NoiseConfig,
    pub pckh_alpha: Option<f64>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }
}
