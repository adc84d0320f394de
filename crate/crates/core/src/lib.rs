pub mod attention;
pub mod bench;
pub mod cli;
pub mod error;
pub mod face;
pub mod highres;
pub mod io;
pub mod layers;
mod lu;
pub mod model;
pub mod pgt;
pub mod spatial;
pub mod synth;
pub mod tps;
pub mod train;

pub use error::{FatError, Result};
pub use face::{FaceSample, LandmarkSet, ParsingMask};
