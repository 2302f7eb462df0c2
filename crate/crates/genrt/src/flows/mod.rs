//! Class-conditional invertible density models with exact log-density,
//! sampling, and maximum-likelihood training, plus the Gaussian backend.

pub mod actnorm;
pub mod checkpoint;
pub mod coupling;
pub mod gaussian;
pub mod model;
pub mod plu;
pub mod spline;

pub use checkpoint::{load_flow, save_flow, FLOW_MAGIC};
pub use gaussian::GaussianClassModel;
pub use model::{flow_nll_loss, FlowModel, FlowSpec};
