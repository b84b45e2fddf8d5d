//! Color filter array simulation, CNN demosaicing (DMCNN, DMCNN-VD, and
//! DMCNN-VD-Pa with a learned pattern), and single-shot HDR reconstruction
//! from spatially varying exposure mosaics.

mod binio;
pub mod cfa;
pub mod data;
pub mod error;
pub mod evaluate;
pub mod layers;
pub mod metrics;
pub mod models;
pub mod optim;
pub mod pfm;
pub mod svec;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Dims, Tensor4D};
