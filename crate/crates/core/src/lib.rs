//! Virtual-patient simulation engine: knowledge base and scenario sampling,
//! patient prompt construction, the turn pipeline, tone classification and
//! post-session analytics.

pub mod adapters;
pub mod analytics;
pub mod clock;
pub mod knowledge_base;
pub mod pipeline;
pub mod scenario;
pub mod sentiment;
