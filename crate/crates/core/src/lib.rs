//! Virtual adversarial training for multilayer perceptrons.
//!
//! The crate is organized bottom-up: [`numerics`] (tensors, stable softmax,
//! seeded RNG), [`nn`] (MLP forward/backward), [`divergence`] (the local
//! KL sensitivity Δ_KL and its input gradient), [`vat`] (power-iteration
//! search for the virtual adversarial direction and the smoothing penalty),
//! [`baseline`] (competing regularizers), [`oracles`] (closed-form models and
//! brute-force Hessians for verification), [`optim`], [`data`] and [`train`].

pub mod baseline;
pub mod data;
pub mod divergence;
pub mod error;
pub mod idx;
pub mod nn;
pub mod numerics;
pub mod optim;
pub mod oracles;
pub mod protocol;
pub mod train;
pub mod vat;

pub use baseline::{AdvMode, AdvNorm, RegularizerKind};
pub use data::{Dataset, Split, Subset, SyntheticProblem, SyntheticTask};
pub use divergence::{BaseDistribution, SensitivityModel};
pub use error::{Error, Result};
pub use nn::{Activation, Layer, Mlp, ParamGrads};
pub use numerics::{Rng, Tensor};
pub use optim::{Adam, DecaySchedule, MomentumSgd, Optimizer, OptimizerConfig};
pub use train::{TrainConfig, TrainRecord};
pub use vat::{VapResult, VatConfig};
