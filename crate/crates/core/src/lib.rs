//! Channel dimensionality reduction for multivariate time series
//! classification with a frozen encoder.
//!
//! A dataset of shape `(N, T, D)` is reduced to `(N, T, D')` by one of the
//! adapters in [`adapters`] or [`lcomb`], embedded by the frozen
//! [`encoder::SurrogateEncoder`], and classified by a linear head trained in
//! [`training`]. [`bench`] runs whole grids of such runs and [`stats`]
//! compares the methods.

pub mod adapters;
pub mod bench;
pub mod datasets;
pub mod encoder;
pub mod error;
pub mod lcomb;
pub mod linalg;
pub mod report;
pub mod rng;
pub mod stats;
pub mod tensor;
pub mod training;

pub use adapters::{
    fit_pca, fit_random_projection, fit_truncated_svd, fit_variance_selection, Adapter, ChannelReducer, ReducerKind,
};
pub use encoder::{EncoderConfig, SurrogateEncoder};
pub use error::{Error, Result};
pub use lcomb::LcombAdapter;
pub use linalg::Matrix;
pub use tensor::{channel_moments, flatten_time, patchify, unpatchify, PatchView, SeriesTensor};
pub use training::{RunRecord, RunStatus, TrainConfig};
