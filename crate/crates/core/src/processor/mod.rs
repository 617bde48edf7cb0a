//! The band-split recurrent speech processor with audiogram conditioning
//! and mask+residual decoding for one or two output heads.

mod bands;
mod config;
mod model;

pub use bands::BandSplitSpec;
pub use config::{init_params, HeadKind, HeadSet, ProcessorConfig};
pub use model::{layer_norm_last, HeadOutput, HeadsOut, Processor};
