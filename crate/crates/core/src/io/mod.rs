//! File formats: configuration text, mask and image rasters.

pub mod kv;
pub mod raster;

pub use raster::{load_image, load_mask, save_mask, save_probability, save_rgb, LabelMap};
