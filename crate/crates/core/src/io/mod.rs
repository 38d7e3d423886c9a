//! Weight files, reports, heatmaps and the static reference table.

mod heatmap;
mod reference;
mod report;
mod weights;

pub use heatmap::{render_heatmaps, write_heatmaps, Heatmap};
pub use reference::{
    architecture_reference, find_reference, reference_values, ReferenceValue, ARCHITECTURE_TARGETS, TOY_MAC_TARGETS,
};
pub use report::{sig6, Host, Report, SCHEMA_VERSION};
pub use weights::{NamedTensor, WeightFile, MAGIC, WEIGHT_FORMAT_VERSION};
