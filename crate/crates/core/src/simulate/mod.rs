//! Synthetic data: latent fields and events, aggregation units and reporting.

mod dataset;
mod lgcp;
mod regions;
mod report;

pub use dataset::{
    gaussian_surface, generate, synthetic_wards, RegionLayout, SyntheticConfig, SyntheticDataset,
};
pub use lgcp::{draw_whitened, scatter_in_cell, simulate_lgcp, LgcpDraw, TrueParams};
pub use regions::{
    buffer_regions, cells_to_multipolygon, crop_to_window, huff_catchments, huff_probabilities,
    voronoi_regions, DEFAULT_BUFFER_SEGMENTS,
};
pub use report::{report_counts, report_slices, Report};
