//! Token-level attention explanations and planar maps of instance
//! embeddings.

mod bundle;
mod project;

pub use bundle::{
    embed_instance, embed_training_set, explain_instance, Embeddings, ExplainedDocument, ExplanationBundle, Span,
    EXPLANATION_SCHEMA_VERSION,
};
pub use project::{
    fit_projection, kl_divergence, pca, project_query, MapPoint, ProjectionMap, ProjectionMethod, Projector,
    QueryPoint, TsneConfig, MAP_SCHEMA_VERSION,
};
