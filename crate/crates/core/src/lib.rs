//! Attention-based adversarial domain adaptation for daily streamflow forecasting.

pub mod numerics;
pub mod layers;
pub mod metrics;
pub mod data;
pub mod model;
pub mod training;
