//! Benchmark objectives for the tuning toolkit: text classification,
//! coupled feature learning with boosting, RMSProp training, and ALS
//! matrix factorization.

pub mod als;
pub mod features;
pub mod sgd;
pub mod text;

pub use als::AlsError;
pub use features::FeatureError;
pub use sgd::SgdError;
pub use text::TextError;
