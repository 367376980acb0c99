//! File formats: the binary weight container, portable pixmaps/graymaps,
//! the key=value run configuration, and the class color palette.

mod palette;
mod pnm;
mod runconfig;
mod weights;

pub use palette::{class_palette, render_labels, CITYSCAPES_COLORS};
pub use pnm::{
    image_to_ppm_bytes, labels_to_pgm_bytes, pgm_bytes_to_labels, ppm_bytes_to_image, read_pgm,
    read_ppm, write_pgm, write_ppm,
};
pub use runconfig::RunConfig;
pub use weights::{load_weights, load_weights_from_bytes, save_weights, weight_bytes};
