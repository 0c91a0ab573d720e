//! Registered super-resolution architectures.
//!
//! * `srcnn_t`: bicubic pre-upsampling followed by three convolutions
//!   (patch extraction, non-linear mapping, reconstruction).
//! * `resnet_t`: post-upsampling residual network. A head convolution,
//!   `resnet_blocks` conv-act-conv residual blocks, one ×2 sub-pixel stage
//!   per factor of two in `alpha`, a single-channel tail convolution, and a
//!   global bicubic skip from the input.

use super::model::{Blueprint, ModelConfig, Op};
use crate::error::{Error, Result};
use crate::registry::Registry;

/// Scale applied to the initial weights of each network's last layer.
pub const FINAL_LAYER_GAIN: f64 = 0.1;

pub trait Architecture: Send + Sync {
    fn name(&self) -> &'static str;

    /// Compiles `config` into a layer program and parameter list.
    fn build(&self, config: &ModelConfig) -> Result<Blueprint>;
}

pub struct Srcnn;

impl Architecture for Srcnn {
    fn name(&self) -> &'static str {
        "srcnn_t"
    }

    fn build(&self, cfg: &ModelConfig) -> Result<Blueprint> {
        let [k1, k2, k3] = cfg.srcnn_kernels;
        let [f1, f2] = cfg.srcnn_widths;
        let mut bp = Blueprint::default();
        bp.push(Op::UpsampleInput { factor: cfg.alpha });
        bp.conv("extract", 1, f1, k1, 1.0);
        bp.activation("extract_act", cfg.activation, f1);
        bp.conv("map", f1, f2, k2, 1.0);
        bp.activation("map_act", cfg.activation, f2);
        bp.conv("reconstruct", f2, 1, k3, FINAL_LAYER_GAIN);
        Ok(bp)
    }
}

pub struct ResNet;

impl Architecture for ResNet {
    fn name(&self) -> &'static str {
        "resnet_t"
    }

    fn build(&self, cfg: &ModelConfig) -> Result<Blueprint> {
        let nf = cfg.resnet_width;
        let stages = match cfg.alpha {
            2 => 1,
            4 => 2,
            a => return Err(Error::config("alpha", format!("resnet_t supports 2 or 4, got {a}"))),
        };
        let mut bp = Blueprint::default();
        bp.conv("head", 1, nf, 3, 1.0);
        bp.activation("head_act", cfg.activation, nf);
        for i in 0..cfg.resnet_blocks {
            let slot = bp.new_slot();
            bp.push(Op::Save { slot });
            bp.conv(&format!("block{i}.conv1"), nf, nf, 3, 1.0);
            bp.activation(&format!("block{i}.act"), cfg.activation, nf);
            bp.conv(&format!("block{i}.conv2"), nf, nf, 3, FINAL_LAYER_GAIN);
            bp.push(Op::AddSaved { slot });
        }
        for s in 0..stages {
            bp.conv(&format!("up{s}"), nf, 4 * nf, 3, 1.0);
            bp.push(Op::PixelShuffle { r: 2 });
            bp.activation(&format!("up{s}_act"), cfg.activation, nf);
        }
        bp.conv("tail", nf, 1, 3, FINAL_LAYER_GAIN);
        bp.push(Op::AddUpsampledInput { factor: cfg.alpha });
        Ok(bp)
    }
}

pub type ArchitectureCtor = fn() -> Box<dyn Architecture>;

/// Registry of the built-in architectures.
pub fn architectures() -> Registry<ArchitectureCtor> {
    let mut r: Registry<ArchitectureCtor> = Registry::new("architecture");
    r.register("srcnn_t", || Box::new(Srcnn));
    r.register("resnet_t", || Box::new(ResNet));
    r
}
