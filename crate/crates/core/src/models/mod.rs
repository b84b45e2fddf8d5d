//! Demosaicing networks: DMCNN, DMCNN-VD, and DMCNN-VD-Pa with its
//! learnable pattern layer.

mod build;
mod graph;
mod io;
mod pattern_layer;

pub use build::{
    build_dmcnn, build_dmcnn_vd, build_dmcnn_vd_pa, build_dmcnn_with, build_svec_model, SvecArch,
    VdConfig, DMCNN_INIT_STDDEV, VD_MSRA_FACTOR,
};
pub use graph::{
    forward_demosaic, Architecture, ForwardPass, InputMode, Layer, LayerKind, Model,
    ResidualBaseline, Source,
};
pub use io::{
    check_compatible, decode_weights, encode_weights, load_weights, load_weights_into,
    save_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION,
};
pub use pattern_layer::{pattern_backward, pattern_forward, project_pattern_weights, PatternLayer};
