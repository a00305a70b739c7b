//! Two-branch deep embedding trained on the total-correlation objective.

mod network;
mod objective;
mod optim;
mod train;

pub use network::{BranchNetwork, ForwardCache, Layer, LayerGrads, Mode};
pub use objective::{corr_gradient, total_correlation};
pub use optim::RmsProp;
pub use train::{embed, train_dcca, train_on_pairs, train_sdcca, DeepModel, InputScaler, TrainConfig};
pub use train::MODEL_KIND as DEEP_MODEL_KIND;
