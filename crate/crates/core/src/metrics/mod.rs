//! Proxy Fréchet distance, sampling utilities and modulation analysis.

pub mod analysis;
pub mod features;
pub mod frechet;
pub mod sampling;

pub use analysis::{adafm_stats, gamma_vector, sorted_gamma_matrix, AdaFmReport, GroupStats, Quartiles, SortedGamma};
pub use features::{proxy_fid, FeatureExtractor, FEATURE_DIM, FEATURE_SEED};
pub use frechet::{frechet_distance, sqrt_psd, trace_sqrt_product, GaussianFit};
pub use sampling::{grid_bytes, interpolate, latents, stack, style_mix, write_grid};
