//! Cross-resolution and intrinsic geometric attention over the minor level.
//!
//! [`sgira_forward`] lets every minor point attend over the primary points
//! (scaled dot scores plus a squared-distance compensation term) and adds a
//! projected skip residual. [`saiga_forward`] then runs self-attention over the
//! minor points with a learnable distance penalty and a skip-derived bias, and
//! adds the result back onto its input.
//!
//! Skip features come from the pyramid: minor-level features and ordinary-level
//! features pooled onto minor points, combined by [`gated_fusion`]. The skip
//! attention bias is the cosine similarity between skip feature rows.

mod attention;
mod fusion;
mod params;
mod skip;

pub use attention::{
    geometric_compensation, saiga_forward, scaled_dot_scores, sgira_forward, softmax_rows,
    SaigaOutput, SgiraOutput,
};
pub use fusion::{gated_fusion, GatedFusionParams, Linear};
pub use params::{AttentionConfig, AttentionParams, HeadProjections};
pub use skip::{cosine_similarity_matrix, SkipBundle, SkipParams};
