//! Convolutional approximate message passing: spectral transforms, tap
//! design, the Bernoulli-Gaussian Bayes-optimal denoiser and state evolution.

pub mod denoiser;
pub mod quadrature;
pub mod roots;
pub mod scalar;
pub mod se;
pub mod series;
pub mod spectra;
pub mod taps;

pub use denoiser::{BernoulliGaussian, DenoiserError, QuadratureRule, ScalarPrior};
pub use scalar::{Rational, Scalar};
pub use series::Series;
pub use spectra::{Ensemble, SpectralModel};
pub use taps::TapSchedule;
