//! Joint beamforming and power allocation for a two-user mmWave NOMA
//! downlink, learned with deep deterministic policy gradient.
//!
//! The numeric core (`channel`, `noma`, `env`, `neural`, `ddpg`) is generic
//! over [`scalar::Scalar`], implemented for `f32` and `f64`. The aliases
//! below fix the scalar; the experiment `harness` works in `f64`.

pub mod channel;
pub mod ddpg;
pub mod env;
pub mod harness;
pub mod neural;
pub mod noma;
pub mod scalar;

pub use scalar::Scalar;

pub type Channels = channel::ChannelRealization<f64>;
pub type Budget = noma::LinkBudget<f64>;
pub type Action = noma::NomaAction<f64>;
pub type Env = env::NomaEnv<f64>;
pub type Mlp = neural::MlpParams<f64>;
pub type Agent = ddpg::DdpgAgent<f64>;

pub type Channels32 = channel::ChannelRealization<f32>;
pub type Budget32 = noma::LinkBudget<f32>;
pub type Action32 = noma::NomaAction<f32>;
pub type Env32 = env::NomaEnv<f32>;
pub type Mlp32 = neural::MlpParams<f32>;
pub type Agent32 = ddpg::DdpgAgent<f32>;
