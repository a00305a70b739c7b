//! Linear, kernel and cluster-expanded CCA.

mod cluster;
mod kernel;
mod linear;

pub use cluster::fit_cluster_cca;
pub use kernel::{fit_kcca, fit_kcca_with, KccaConfig, Kernel, KernelModel, DEFAULT_BETA, DEFAULT_MAX_SAMPLES};
pub(crate) use linear::whiten;
pub use linear::{fit_cca, fit_cca_pairs, project, LinearProjection, PairMoments, Ridge, Side};
pub use kernel::MODEL_KIND as KERNEL_MODEL_KIND;
pub use linear::MODEL_KIND as LINEAR_MODEL_KIND;
