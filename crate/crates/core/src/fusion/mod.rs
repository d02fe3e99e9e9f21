//! Pyramid-based radar fusion with radar-centered windowed attention.

mod attention;
mod pyramid;
mod select;

pub use attention::{
    dense_masked_attention, streaming_attention_row, two_pass_attention_row, windowed_attention,
    windowed_attention_values, RowEval,
};
pub use pyramid::{
    attention_scores, fuse_pyramid, init_fusion_params, radar_centered_attention, radar_centered_attention_values,
    FeaturePyramid, FusedPyramid, FusionConfig, WindowSpec,
};
pub use select::{column_keys, select_pixels, select_points};
