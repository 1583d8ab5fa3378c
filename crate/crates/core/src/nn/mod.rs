//! Layers, parameter storage and optimizers on top of [`crate::autograd`].

mod layers;
mod optim;
mod params;

pub use layers::{
    apply_bn_updates, BatchNorm2d, BnUpdate, Conv2d, ConvTranspose2d, Ctx, Linear, Lstm, Recurrent,
    BN_EPS, BN_MOMENTUM,
};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use params::{orthogonal_blocks, uniform_fan_in, Bound, ParamSet};
