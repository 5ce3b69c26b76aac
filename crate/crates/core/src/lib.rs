//! Disaster-tweet event analytics: cleaning and sentiment partitioning, TF-IDF,
//! LDA with coherence-driven topic selection, graph-autoencoder refinement of
//! tweet embeddings, clustering with silhouette selection and baselines, and
//! cluster naming.

pub mod cluster;
pub mod corpus;
pub mod emotion;
pub mod error;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod naming;
pub mod pipeline;
pub mod topic;
pub mod vectorize;

pub use error::{Error, Result};
