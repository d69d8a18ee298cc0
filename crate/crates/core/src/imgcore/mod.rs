//! Image container, deterministic RNG, filtering, PNG I/O and quality metrics.

pub mod filter;
pub mod image;
pub mod io;
pub mod metrics;
pub mod rng;

pub use filter::{convolve2d, Kernel};
pub use image::{Image, Plane, CHANNELS, LUMA};
pub use metrics::{psnr, psnr_from_mse, ssim, PSNR_CAP_DB};
pub use rng::Rng;
